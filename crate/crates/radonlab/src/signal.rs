//! Finitely supported real signals on `ℤ` and `ℤ^d`.
//!
//! Signals are dense windows: every operator in this crate acts on
//! contiguous index ranges, and dense layout keeps the loops exactly
//! reproducible and cache-friendly. Norms accumulate in double precision
//! with fixed-shape pairwise summation; the accepted tolerance for norm
//! comparisons elsewhere in the crate is 1e-9 relative.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exponent::Exponent;
use crate::parallel::pairwise_sum;

/// Hard cap on dense window cells (512 MiB of f64).
pub const MAX_WINDOW_CELLS: usize = 1 << 26;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("window of {0} cells exceeds the {MAX_WINDOW_CELLS}-cell budget")]
    WindowBudget(u128),
    #[error("non-finite sample value {value} at index {index}")]
    NonFinite { index: i64, value: f64 },
    #[error("invalid exponent: p must satisfy p >= 1")]
    InvalidExponent,
    #[error("index arithmetic overflow")]
    IndexOverflow,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty dimension list")]
    EmptyDims,
    #[error("malformed signal serialization: {0}")]
    Malformed(String),
}

fn check_budget(cells: u128) -> Result<usize, SignalError> {
    if cells > MAX_WINDOW_CELLS as u128 {
        return Err(SignalError::WindowBudget(cells));
    }
    Ok(cells as usize)
}

/// ℓ^p norm of a raw value slice. Values are normalized by the max before
/// powering so that extreme exponents (p ~ 1e4) neither overflow nor
/// underflow; the zero signal returns exactly 0.
pub fn lp_norm_of(values: &[f64], p: Exponent) -> f64 {
    lp_norm_values(values, p)
}

pub(crate) fn lp_norm_values(values: &[f64], p: Exponent) -> f64 {
    let m = values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if m == 0.0 {
        return 0.0;
    }
    match p {
        Exponent::Infinity => m,
        Exponent::Finite(r) => {
            let pf = crate::exponent::rat_to_f64(r);
            if pf == 1.0 {
                let parts: Vec<f64> = values.iter().map(|v| v.abs()).collect();
                return pairwise_sum(&parts);
            }
            let parts: Vec<f64> = values.iter().map(|v| (v.abs() / m).powf(pf)).collect();
            m * pairwise_sum(&parts).powf(1.0 / pf)
        }
    }
}

fn ensure_finite_1d(offset: i64, values: &[f64]) -> Result<(), SignalError> {
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(SignalError::NonFinite {
                index: offset + i as i64,
                value: v,
            });
        }
    }
    Ok(())
}

/// Finitely supported function on `ℤ`, stored as a dense window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Signal1D {
    offset: i64,
    values: Vec<f64>,
}

impl Signal1D {
    pub fn new(offset: i64, values: Vec<f64>) -> Result<Self, SignalError> {
        check_budget(values.len() as u128)?;
        ensure_finite_1d(offset, &values)?;
        Ok(Self { offset, values })
    }

    pub fn zero() -> Self {
        Self {
            offset: 0,
            values: Vec::new(),
        }
    }

    /// Unit mass at `x`.
    pub fn delta(x: i64) -> Self {
        Self {
            offset: x,
            values: vec![1.0],
        }
    }

    /// Indicator of a finite point set, materialized densely over its hull.
    pub fn indicator(points: &[i64]) -> Result<Self, SignalError> {
        let Some(&lo) = points.iter().min() else {
            return Ok(Self::zero());
        };
        let hi = *points.iter().max().unwrap();
        let len = check_budget((hi - lo) as u128 + 1)?;
        let mut values = vec![0.0; len];
        for &p in points {
            values[(p - lo) as usize] = 1.0;
        }
        Ok(Self { offset: lo, values })
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Inclusive window `[lo, hi]`; `None` for the empty signal.
    pub fn window(&self) -> Option<(i64, i64)> {
        if self.values.is_empty() {
            None
        } else {
            Some((self.offset, self.offset + self.values.len() as i64 - 1))
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: i64) -> f64 {
        let i = x - self.offset;
        if i < 0 || i >= self.values.len() as i64 {
            0.0
        } else {
            self.values[i as usize]
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| (self.offset + i as i64, v))
    }

    /// `translate(f, s)(x) = f(x + s)`: support moves left by `s`.
    pub fn translate(&self, shift: i64) -> Result<Self, SignalError> {
        let offset = self
            .offset
            .checked_sub(shift)
            .ok_or(SignalError::IndexOverflow)?;
        Ok(Self {
            offset,
            values: self.values.clone(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self, SignalError> {
        if self.is_empty() {
            return Ok(other.clone());
        }
        if other.is_empty() {
            return Ok(self.clone());
        }
        let (alo, ahi) = self.window().unwrap();
        let (blo, bhi) = other.window().unwrap();
        let lo = alo.min(blo);
        let hi = ahi.max(bhi);
        let len = check_budget((hi - lo) as u128 + 1)?;
        let mut values = vec![0.0; len];
        for (x, v) in self.iter() {
            values[(x - lo) as usize] += v;
        }
        for (x, v) in other.iter() {
            values[(x - lo) as usize] += v;
        }
        Ok(Self { offset: lo, values })
    }

    pub fn scale(&self, c: f64) -> Result<Self, SignalError> {
        let values: Vec<f64> = self.values.iter().map(|v| v * c).collect();
        ensure_finite_1d(self.offset, &values)?;
        Ok(Self {
            offset: self.offset,
            values,
        })
    }

    pub fn pointwise_abs(&self) -> Self {
        Self {
            offset: self.offset,
            values: self.values.iter().map(|v| v.abs()).collect(),
        }
    }

    /// Shrink the window to the support (exact zeros dropped at the ends).
    pub fn trim(&self) -> Self {
        let first = self.values.iter().position(|&v| v != 0.0);
        let Some(first) = first else {
            return Self::zero();
        };
        let last = self.values.iter().rposition(|&v| v != 0.0).unwrap();
        Self {
            offset: self.offset + first as i64,
            values: self.values[first..=last].to_vec(),
        }
    }

    pub fn lp_norm(&self, p: Exponent) -> f64 {
        lp_norm_values(&self.values, p)
    }

    /// Total mass `Σ_x f(x)` (pairwise).
    pub fn mass(&self) -> f64 {
        pairwise_sum(&self.values)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    /// CSV rows `index,value`, support only.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["index", "value"])?;
        for (x, v) in self.iter() {
            if v != 0.0 {
                wtr.write_record([x.to_string(), v.to_string()])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, SignalError> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut points: Vec<(i64, f64)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| SignalError::Malformed(e.to_string()))?;
            if rec.len() != 2 {
                return Err(SignalError::Malformed(format!(
                    "expected 2 fields, got {}",
                    rec.len()
                )));
            }
            let x: i64 = rec[0]
                .trim()
                .parse()
                .map_err(|_| SignalError::Malformed(format!("bad index {:?}", &rec[0])))?;
            let v: f64 = rec[1]
                .trim()
                .parse()
                .map_err(|_| SignalError::Malformed(format!("bad value {:?}", &rec[1])))?;
            points.push((x, v));
        }
        if points.is_empty() {
            return Ok(Self::zero());
        }
        let lo = points.iter().map(|&(x, _)| x).min().unwrap();
        let hi = points.iter().map(|&(x, _)| x).max().unwrap();
        let len = check_budget((hi - lo) as u128 + 1)?;
        let mut values = vec![0.0; len];
        for (x, v) in points {
            values[(x - lo) as usize] = v;
        }
        Self::new(lo, values)
    }
}

/// Finitely supported function on `ℤ^d`: dense row-major block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalD {
    offsets: Vec<i64>,
    dims: Vec<usize>,
    values: Vec<f64>,
}

impl SignalD {
    pub fn new(offsets: Vec<i64>, dims: Vec<usize>, values: Vec<f64>) -> Result<Self, SignalError> {
        if dims.is_empty() {
            return Err(SignalError::EmptyDims);
        }
        if offsets.len() != dims.len() {
            return Err(SignalError::DimensionMismatch {
                expected: dims.len(),
                got: offsets.len(),
            });
        }
        let total: u128 = dims.iter().map(|&d| d as u128).product();
        let total = check_budget(total)?;
        if values.len() != total {
            return Err(SignalError::Malformed(format!(
                "value block has {} cells, dims require {total}",
                values.len()
            )));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(SignalError::NonFinite {
                    index: i as i64,
                    value: v,
                });
            }
        }
        Ok(Self {
            offsets,
            dims,
            values,
        })
    }

    pub fn zeros(offsets: Vec<i64>, dims: Vec<usize>) -> Result<Self, SignalError> {
        if dims.is_empty() {
            return Err(SignalError::EmptyDims);
        }
        let total: u128 = dims.iter().map(|&d| d as u128).product();
        let total = check_budget(total)?;
        if offsets.len() != dims.len() {
            return Err(SignalError::DimensionMismatch {
                expected: dims.len(),
                got: offsets.len(),
            });
        }
        Ok(Self {
            offsets,
            dims,
            values: vec![0.0; total],
        })
    }

    /// Unit mass at a point of `ℤ^d`.
    pub fn delta(point: &[i64]) -> Result<Self, SignalError> {
        let mut s = Self::zeros(point.to_vec(), vec![1; point.len()])?;
        s.values[0] = 1.0;
        Ok(s)
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn offsets(&self) -> &[i64] {
        &self.offsets
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Row-major strides.
    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1usize; self.dims.len()];
        for i in (0..self.dims.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.dims[i + 1];
        }
        s
    }

    pub fn flat_index(&self, point: &[i64]) -> Option<usize> {
        if point.len() != self.dims.len() {
            return None;
        }
        let strides = self.strides();
        let mut idx = 0usize;
        for j in 0..point.len() {
            let rel = point[j] - self.offsets[j];
            if rel < 0 || rel >= self.dims[j] as i64 {
                return None;
            }
            idx += rel as usize * strides[j];
        }
        Some(idx)
    }

    pub fn get(&self, point: &[i64]) -> f64 {
        match self.flat_index(point) {
            Some(i) => self.values[i],
            None => 0.0,
        }
    }

    pub fn set(&mut self, point: &[i64], v: f64) -> Result<(), SignalError> {
        let i = self.flat_index(point).ok_or(SignalError::IndexOverflow)?;
        self.values[i] = v;
        Ok(())
    }

    /// Coordinates of the flat cell `i`.
    pub fn coords_of(&self, mut i: usize) -> Vec<i64> {
        let strides = self.strides();
        let mut coords = vec![0i64; self.dims.len()];
        for j in 0..self.dims.len() {
            coords[j] = self.offsets[j] + (i / strides[j]) as i64;
            i %= strides[j];
        }
        coords
    }

    pub fn lp_norm(&self, p: Exponent) -> f64 {
        lp_norm_values(&self.values, p)
    }

    pub fn mass(&self) -> f64 {
        pairwise_sum(&self.values)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    pub fn scale(&self, c: f64) -> Result<Self, SignalError> {
        let values: Vec<f64> = self.values.iter().map(|v| v * c).collect();
        Self::new(self.offsets.clone(), self.dims.clone(), values)
    }

    /// CSV rows `i1,…,id,value`, support only.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.rank()).map(|j| format!("i{j}")).collect();
        header.push("value".into());
        wtr.write_record(&header)?;
        for (i, &v) in self.values.iter().enumerate() {
            if v != 0.0 {
                let mut rec: Vec<String> = self
                    .coords_of(i)
                    .into_iter()
                    .map(|c| c.to_string())
                    .collect();
                rec.push(v.to_string());
                wtr.write_record(&rec)?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, SignalError> {
        let mut rdr = csv::Reader::from_reader(r);
        let rank = rdr
            .headers()
            .map_err(|e| SignalError::Malformed(e.to_string()))?
            .len()
            .checked_sub(1)
            .ok_or_else(|| SignalError::Malformed("header too short".into()))?;
        if rank == 0 {
            return Err(SignalError::EmptyDims);
        }
        let mut points: Vec<(Vec<i64>, f64)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| SignalError::Malformed(e.to_string()))?;
            if rec.len() != rank + 1 {
                return Err(SignalError::Malformed(format!(
                    "expected {} fields, got {}",
                    rank + 1,
                    rec.len()
                )));
            }
            let coords: Vec<i64> = (0..rank)
                .map(|j| {
                    rec[j]
                        .trim()
                        .parse()
                        .map_err(|_| SignalError::Malformed(format!("bad index {:?}", &rec[j])))
                })
                .collect::<Result<_, _>>()?;
            let v: f64 = rec[rank]
                .trim()
                .parse()
                .map_err(|_| SignalError::Malformed(format!("bad value {:?}", &rec[rank])))?;
            points.push((coords, v));
        }
        if points.is_empty() {
            return Err(SignalError::Malformed("no samples".into()));
        }
        let offsets: Vec<i64> = (0..rank)
            .map(|j| points.iter().map(|(c, _)| c[j]).min().unwrap())
            .collect();
        let dims: Vec<usize> = (0..rank)
            .map(|j| {
                let hi = points.iter().map(|(c, _)| c[j]).max().unwrap();
                (hi - offsets[j]) as usize + 1
            })
            .collect();
        let mut out = Self::zeros(offsets, dims)?;
        for (coords, v) in points {
            out.set(&coords, v)?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Exponent {
        s.parse().unwrap()
    }

    #[test]
    fn delta_norm_is_one_for_every_p() {
        let d = Signal1D::delta(0);
        for s in ["1", "3/2", "2", "7", "10000"] {
            assert_eq!(d.lp_norm(p(s)), 1.0);
        }
        assert_eq!(d.lp_norm(Exponent::Infinity), 1.0);
    }

    #[test]
    fn indicator_norm_counts_points() {
        let f = Signal1D::indicator(&(0..27).collect::<Vec<_>>()).unwrap();
        let q = p("3");
        assert!((f.lp_norm(q) - 27f64.powf(1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn three_four_five() {
        let f = Signal1D::new(-7, vec![3.0, 4.0]).unwrap();
        assert_eq!(f.lp_norm(p("2")), 5.0);
    }

    #[test]
    fn zero_signal_norm_exactly_zero() {
        let f = Signal1D::new(5, vec![0.0, 0.0]).unwrap();
        assert_eq!(f.lp_norm(p("3/2")), 0.0);
        assert_eq!(Signal1D::zero().lp_norm(p("2")), 0.0);
    }

    #[test]
    fn translate_convention() {
        // translate(f, s)(x) = f(x + s): translate(δ_0, 3) lives at x = -3.
        let t = Signal1D::delta(0).translate(3).unwrap();
        assert_eq!(t.get(-3), 1.0);
        assert_eq!(t.trim().window(), Some((-3, -3)));
    }

    #[test]
    fn add_deltas() {
        let two = Signal1D::delta(0).add(&Signal1D::delta(0)).unwrap();
        assert_eq!(two.get(0), 2.0);
        assert_eq!(two.len(), 1);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Signal1D::new(0, vec![1.0, f64::NAN]).is_err());
        assert!(Signal1D::new(0, vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn csv_round_trip_1d() {
        let f = Signal1D::new(-2, vec![0.5, 0.0, -1.25, 3.0]).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let g = Signal1D::read_csv(buf.as_slice()).unwrap();
        for x in -4..6 {
            assert_eq!(f.get(x), g.get(x), "at {x}");
        }
    }

    #[test]
    fn json_round_trips() {
        let f = Signal1D::new(-2, vec![0.5, 0.0, -1.25]).unwrap();
        let text = serde_json::to_string(&f).unwrap();
        assert!(text.contains("\"offset\""), "{text}");
        let g: Signal1D = serde_json::from_str(&text).unwrap();
        assert_eq!(f, g);

        let mut h = SignalD::zeros(vec![0, -3], vec![2, 4]).unwrap();
        h.set(&[1, 0], 2.0).unwrap();
        let text = serde_json::to_string(&h).unwrap();
        assert!(text.contains("\"offsets\"") && text.contains("\"dims\""));
        let k: SignalD = serde_json::from_str(&text).unwrap();
        assert_eq!(h, k);
    }

    #[test]
    fn csv_round_trip_multidim() {
        let mut f = SignalD::zeros(vec![-1, 3], vec![4, 5]).unwrap();
        f.set(&[-1, 3], 1.5).unwrap();
        f.set(&[2, 7], -0.25).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let g = SignalD::read_csv(buf.as_slice()).unwrap();
        assert_eq!(g.get(&[-1, 3]), 1.5);
        assert_eq!(g.get(&[2, 7]), -0.25);
        assert_eq!(g.get(&[0, 4]), 0.0);
    }

    #[test]
    fn multidim_indexing() {
        let mut f = SignalD::zeros(vec![-1, 2], vec![3, 4]).unwrap();
        f.set(&[0, 3], 2.5).unwrap();
        assert_eq!(f.get(&[0, 3]), 2.5);
        assert_eq!(f.get(&[1, 1]), 0.0);
        assert_eq!(f.get(&[9, 9]), 0.0);
        let idx = f.flat_index(&[0, 3]).unwrap();
        assert_eq!(f.coords_of(idx), vec![0, 3]);
    }

    #[test]
    fn budget_enforced() {
        let too_big = (MAX_WINDOW_CELLS + 1) as i64;
        assert!(Signal1D::indicator(&[0, too_big]).is_err());
        assert!(SignalD::zeros(vec![0, 0], vec![1 << 13, 1 << 14]).is_err());
    }
}
