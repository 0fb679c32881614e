//! Ordinary least squares on log-log data.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("need at least {need} samples, got {got}")]
    InsufficientData { need: usize, got: usize },
    #[error("degenerate fit: all abscissae equal")]
    DegenerateFit,
}

/// Slope/intercept of a least-squares line plus per-point residuals.
#[derive(Clone, Debug)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub residuals: Vec<f64>,
}

pub fn linear_fit(xs: &[f64], ys: &[f64], min_points: usize) -> Result<FitResult, FitError> {
    assert_eq!(xs.len(), ys.len());
    if xs.len() < min_points {
        return Err(FitError::InsufficientData {
            need: min_points,
            got: xs.len(),
        });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(FitError::DegenerateFit);
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| y - (intercept + slope * x))
        .collect();
    Ok(FitResult {
        slope,
        intercept,
        residuals,
    })
}

/// Fit `log y = slope · log x + intercept`.
pub fn log_log_fit(xs: &[f64], ys: &[f64], min_points: usize) -> Result<FitResult, FitError> {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    linear_fit(&lx, &ly, min_points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let xs: Vec<f64> = (1..=8).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 1.0).collect();
        let fit = linear_fit(&xs, &ys, 2).unwrap();
        assert!((fit.slope - 3.0).abs() < 1e-12);
        assert!((fit.intercept + 1.0).abs() < 1e-12);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn degenerate_detected() {
        let xs = [2.0, 2.0, 2.0, 2.0];
        let ys = [1.0, 2.0, 3.0, 4.0];
        assert!(matches!(
            linear_fit(&xs, &ys, 2),
            Err(FitError::DegenerateFit)
        ));
    }
}
