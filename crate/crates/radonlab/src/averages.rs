//! The averaging operators along polynomial sequences.
//!
//! For a polynomial `P` mapping `ℤ` to `ℤ`:
//!
//! * `average`: `A_N f(x) = (1/N) Σ_{k=1}^{N} f(x + P(k))`
//! * `fractional`: `I_λ f(x) = Σ_{k≥1} f(x + P(k)) / k^λ`, `0 < λ < 1`
//! * `multidim_average`: `Ã_N f(x) = (1/N) Σ_k f(x_1 + k, …, x_d + k^d)`
//! * `multidim_fractional`: the same sum with weights `k^{-λ}`
//! * `maximal`: `A_* f = max_{N ≤ N_max} A_N f` for nonnegative `f`
//!
//! Direct summation is the default: the kernels have at most `N ≤ 2^12`
//! taps, so direct evaluation is exact and fast. An FFT route
//! ([`average_fft`]) exists for dense large-window cross-checks and must
//! agree with the direct route to 1e-9.
//!
//! Every output cell is computed by its own fixed-order `k` loop, so
//! results are bitwise independent of the worker count.

use num::complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::parallel::for_each_chunk_mut;
use crate::poly::{IntPolynomial, PolyError};
use crate::signal::{Signal1D, SignalD, SignalError, MAX_WINDOW_CELLS};

#[derive(Debug, Error)]
pub enum AveragesError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("N must be at least 1")]
    EmptyAverage,
    #[error("fractional order must satisfy 0 < lambda < 1, got {0}")]
    InvalidLambda(f64),
    #[error("truncation K = {given} is not exact for this window; K >= {required} required")]
    TruncationNotExact { given: u64, required: u64 },
    #[error("maximal function requires a nonnegative input")]
    NegativeInput,
    #[error("polynomial value does not fit the index range")]
    IndexOverflow,
    #[error("operator input must be nonempty")]
    EmptyInput,
}

/// Fractional-integral order: exponent `λ ∈ (0,1)` and truncation `K ≥ 1`.
#[derive(Clone, Copy, Debug)]
pub struct FractionalOrder {
    pub lambda: f64,
    pub truncation: u64,
}

impl FractionalOrder {
    pub fn new(lambda: f64, truncation: u64) -> Result<Self, AveragesError> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(AveragesError::InvalidLambda(lambda));
        }
        if truncation == 0 {
            return Err(AveragesError::EmptyAverage);
        }
        Ok(Self { lambda, truncation })
    }
}

fn poly_shifts(p: &IntPolynomial, n: u64) -> Result<Vec<i64>, AveragesError> {
    p.values(n)?
        .into_iter()
        .map(|v| i64::try_from(v).map_err(|_| AveragesError::IndexOverflow))
        .collect()
}

/// Shared kernel: `out(x) = Σ_k w_k · f(x + s_k)` on the window dictated
/// by the shifts, cell-parallel with a fixed inner order.
fn weighted_shift_sum(
    f: &Signal1D,
    shifts: &[i64],
    weights: &[f64],
) -> Result<Signal1D, AveragesError> {
    debug_assert_eq!(shifts.len(), weights.len());
    let (flo, fhi) = f.window().ok_or(AveragesError::EmptyInput)?;
    let smin = *shifts.iter().min().unwrap();
    let smax = *shifts.iter().max().unwrap();
    let out_lo = flo.checked_sub(smax).ok_or(AveragesError::IndexOverflow)?;
    let out_hi = fhi.checked_sub(smin).ok_or(AveragesError::IndexOverflow)?;
    let out_len = (out_hi - out_lo) as u128 + 1;
    if out_len > MAX_WINDOW_CELLS as u128 {
        return Err(SignalError::WindowBudget(out_len).into());
    }
    let mut out = vec![0.0f64; out_len as usize];
    let fv = f.values();
    let flen = fv.len() as i64;
    for_each_chunk_mut(&mut out, 4096, |start, chunk| {
        for (i, cell) in chunk.iter_mut().enumerate() {
            let x = out_lo + (start + i) as i64;
            let mut acc = 0.0;
            for (s, w) in shifts.iter().zip(weights) {
                let idx = x + s - flo;
                if (0..flen).contains(&idx) {
                    acc += w * fv[idx as usize];
                }
            }
            *cell = acc;
        }
    });
    Ok(Signal1D::new(out_lo, out)?)
}

/// `A_N f(x) = (1/N) Σ_{k=1}^{N} f(x + P(k))`.
pub fn average(p: &IntPolynomial, n: u64, f: &Signal1D) -> Result<Signal1D, AveragesError> {
    if n == 0 {
        return Err(AveragesError::EmptyAverage);
    }
    let shifts = poly_shifts(p, n)?;
    let w = 1.0 / n as f64;
    let weights = vec![w; shifts.len()];
    weighted_shift_sum(f, &shifts, &weights)
}

/// `A_N f` evaluated at selected points only (no dense output window).
pub fn average_at(
    p: &IntPolynomial,
    n: u64,
    f: &Signal1D,
    xs: &[i64],
) -> Result<Vec<f64>, AveragesError> {
    if n == 0 {
        return Err(AveragesError::EmptyAverage);
    }
    let shifts = poly_shifts(p, n)?;
    let inv = 1.0 / n as f64;
    Ok(xs
        .iter()
        .map(|&x| {
            let mut acc = 0.0;
            for &s in &shifts {
                acc += f.get(x + s);
            }
            acc * inv
        })
        .collect())
}

/// Adjoint average `A_N^† g(y) = (1/N) Σ_k g(y − P(k))`.
pub fn adjoint_average(p: &IntPolynomial, n: u64, g: &Signal1D) -> Result<Signal1D, AveragesError> {
    if n == 0 {
        return Err(AveragesError::EmptyAverage);
    }
    let shifts: Vec<i64> = poly_shifts(p, n)?.into_iter().map(|s| -s).collect();
    let w = 1.0 / n as f64;
    let weights = vec![w; shifts.len()];
    weighted_shift_sum(g, &shifts, &weights)
}

/// FFT cross-check route for [`average`]. Same output window and
/// normalization; rounding differs, so compare at 1e-9.
pub fn average_fft(p: &IntPolynomial, n: u64, f: &Signal1D) -> Result<Signal1D, AveragesError> {
    if n == 0 {
        return Err(AveragesError::EmptyAverage);
    }
    let (flo, _) = f.window().ok_or(AveragesError::EmptyInput)?;
    let shifts = poly_shifts(p, n)?;
    let smin = *shifts.iter().min().unwrap();
    let smax = *shifts.iter().max().unwrap();
    // Kernel h on [smin, smax]; A_N f = f correlated with h, which is the
    // convolution of f with the reversed kernel.
    let klen = (smax - smin) as usize + 1;
    let mut kernel = vec![0.0f64; klen];
    for &s in &shifts {
        kernel[(s - smin) as usize] += 1.0 / n as f64;
    }
    let flen = f.len();
    let conv_len = flen + klen - 1;
    let fft_len = conv_len.next_power_of_two();
    if fft_len > MAX_WINDOW_CELLS {
        return Err(SignalError::WindowBudget(fft_len as u128).into());
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(fft_len);
    let ifft = planner.plan_fft_inverse(fft_len);

    let mut fa: Vec<Complex64> = f
        .values()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(fft_len)
        .collect();
    let mut ka: Vec<Complex64> = kernel
        .iter()
        .rev()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(fft_len)
        .collect();
    fft.process(&mut fa);
    fft.process(&mut ka);
    for (a, b) in fa.iter_mut().zip(&ka) {
        *a *= b;
    }
    ifft.process(&mut fa);
    let scale = 1.0 / fft_len as f64;
    let out: Vec<f64> = fa[..conv_len].iter().map(|c| c.re * scale).collect();
    // Reversed-kernel convolution index 0 corresponds to x = flo - smax.
    Ok(Signal1D::new(flo - smax, out)?)
}

/// `A_* f = max_{1 ≤ N ≤ N_max} A_N f`, for nonnegative `f`.
pub fn maximal(p: &IntPolynomial, n_max: u64, f: &Signal1D) -> Result<Signal1D, AveragesError> {
    if n_max == 0 {
        return Err(AveragesError::EmptyAverage);
    }
    if !f.is_nonnegative() {
        return Err(AveragesError::NegativeInput);
    }
    let shifts = poly_shifts(p, n_max)?;
    let (flo, fhi) = f.window().ok_or(AveragesError::EmptyInput)?;
    let smin = *shifts.iter().min().unwrap();
    let smax = *shifts.iter().max().unwrap();
    let out_lo = flo.checked_sub(smax).ok_or(AveragesError::IndexOverflow)?;
    let out_hi = fhi.checked_sub(smin).ok_or(AveragesError::IndexOverflow)?;
    let out_len = (out_hi - out_lo) as u128 + 1;
    if out_len > MAX_WINDOW_CELLS as u128 {
        return Err(SignalError::WindowBudget(out_len).into());
    }
    let mut out = vec![0.0f64; out_len as usize];
    let fv = f.values();
    let flen = fv.len() as i64;
    for_each_chunk_mut(&mut out, 4096, |start, chunk| {
        for (i, cell) in chunk.iter_mut().enumerate() {
            let x = out_lo + (start + i) as i64;
            let mut running = 0.0;
            let mut best = 0.0f64;
            for (k, &s) in shifts.iter().enumerate() {
                let idx = x + s - flo;
                if (0..flen).contains(&idx) {
                    running += fv[idx as usize];
                }
                best = best.max(running / (k + 1) as f64);
            }
            *cell = best;
        }
    });
    Ok(Signal1D::new(out_lo, out)?)
}

/// Result of a fractional integral: the values on the chosen window plus
/// the truncation beyond which no term can touch that window.
#[derive(Clone, Debug)]
pub struct FractionalOutput {
    pub signal: Signal1D,
    /// Largest `k` with `P(k)` inside the reach of the output window; all
    /// terms beyond it vanish identically there.
    pub exact_truncation: u64,
}

/// Largest `k ≥ 1` whose shift `P(k)` can connect the input window to the
/// output window; 0 when no `k` can. Terms beyond this index contribute
/// nothing on `out_window`.
pub fn fractional_exact_truncation(
    p: &IntPolynomial,
    f_window: (i64, i64),
    out_window: (i64, i64),
) -> Result<u64, AveragesError> {
    let (flo, fhi) = f_window;
    let (wlo, whi) = out_window;
    let lo_excess = i128::from(flo) - i128::from(whi);
    let hi_excess = i128::from(fhi) - i128::from(wlo);
    // Beyond every root of P and P', |P| is strictly increasing; the Cauchy
    // bound 1 + max_j |a_j| / |a_d| dominates both root sets.
    let d = p.degree();
    let lead = p.coefficient(d);
    let mut bound = 1.0f64;
    for j in 0..d {
        let c = p.coefficient(j);
        let ratio = (crate::exponent::rat_to_f64(c) / crate::exponent::rat_to_f64(lead)).abs();
        bound = bound.max(1.0 + ratio);
    }
    let k_grow = bound.ceil() as u64 + 1;
    let mut last_hit = 0u64;
    let mut k = 1u64;
    loop {
        let ki = i64::try_from(k).map_err(|_| AveragesError::IndexOverflow)?;
        let v = p.eval(ki)?;
        if v >= lo_excess && v <= hi_excess {
            last_hit = k;
        }
        if k > k_grow && (v > hi_excess || v < lo_excess) && v.unsigned_abs() > hi_excess.unsigned_abs().max(lo_excess.unsigned_abs())
        {
            break;
        }
        k += 1;
        if k > (1 << 40) {
            return Err(AveragesError::IndexOverflow);
        }
    }
    Ok(last_hit)
}

/// Truncated fractional integral `Σ_{k=1}^{K} f(x + P(k)) / k^λ` evaluated
/// on an explicit inclusive window. No exactness claim is made here; use
/// [`fractional_exact_truncation`] to size `K` when exact values on the
/// window are required.
pub fn fractional_truncated(
    p: &IntPolynomial,
    lambda: f64,
    truncation: u64,
    f: &Signal1D,
    out_window: (i64, i64),
) -> Result<Signal1D, AveragesError> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(AveragesError::InvalidLambda(lambda));
    }
    if truncation == 0 {
        return Err(AveragesError::EmptyAverage);
    }
    f.window().ok_or(AveragesError::EmptyInput)?;
    let (wlo, whi) = out_window;
    let out_len = i128::from(whi) - i128::from(wlo) + 1;
    if out_len <= 0 {
        return Err(AveragesError::EmptyInput);
    }
    if out_len > MAX_WINDOW_CELLS as i128 {
        return Err(SignalError::WindowBudget(out_len as u128).into());
    }
    let shifts = poly_shifts(p, truncation)?;
    let weights: Vec<f64> = (1..=truncation)
        .map(|k| (k as f64).powf(-lambda))
        .collect();
    let mut out = vec![0.0f64; out_len as usize];
    let fv = f.values();
    let (flo, _) = f.window().unwrap();
    let flen = fv.len() as i64;
    for_each_chunk_mut(&mut out, 4096, |start, chunk| {
        for (i, cell) in chunk.iter_mut().enumerate() {
            let x = wlo + (start + i) as i64;
            let mut acc = 0.0;
            for (s, w) in shifts.iter().zip(&weights) {
                let idx = x + s - flo;
                if (0..flen).contains(&idx) {
                    acc += w * fv[idx as usize];
                }
            }
            *cell = acc;
        }
    });
    Ok(Signal1D::new(wlo, out)?)
}

/// `I_λ f` on its natural window `[flo − max P, fhi − min P]` (extrema of
/// `P` over `k ≤ K`). Errors with [`AveragesError::TruncationNotExact`]
/// when the supplied truncation leaves reachable terms unaccounted for on
/// that window, and reports the exact threshold alongside the values.
pub fn fractional(
    p: &IntPolynomial,
    ord: FractionalOrder,
    f: &Signal1D,
) -> Result<FractionalOutput, AveragesError> {
    let (flo, fhi) = f.window().ok_or(AveragesError::EmptyInput)?;
    let shifts = poly_shifts(p, ord.truncation)?;
    let smin = *shifts.iter().min().unwrap();
    let smax = *shifts.iter().max().unwrap();
    let window = (
        flo.checked_sub(smax).ok_or(AveragesError::IndexOverflow)?,
        fhi.checked_sub(smin).ok_or(AveragesError::IndexOverflow)?,
    );
    let required = fractional_exact_truncation(p, (flo, fhi), window)?;
    if required > ord.truncation {
        return Err(AveragesError::TruncationNotExact {
            given: ord.truncation,
            required,
        });
    }
    let signal = fractional_truncated(p, ord.lambda, ord.truncation, f, window)?;
    Ok(FractionalOutput {
        signal,
        exact_truncation: required,
    })
}

// ---------------------------------------------------------------------------
// Higher-dimensional operators along the moment curve (k, k^2, …, k^d).
// ---------------------------------------------------------------------------

/// `k^j` for `k = 1..=n`, `j = 1..=d`, exact.
fn curve_powers(d: usize, n: u64) -> Result<Vec<Vec<i64>>, AveragesError> {
    (1..=n)
        .map(|k| {
            let mut row = Vec::with_capacity(d);
            let mut acc: i128 = 1;
            for _ in 0..d {
                acc = acc
                    .checked_mul(i128::from(k))
                    .ok_or(AveragesError::IndexOverflow)?;
                row.push(i64::try_from(acc).map_err(|_| AveragesError::IndexOverflow)?);
            }
            Ok(row)
        })
        .collect()
}

/// Largest integer `r ≥ 0` with `r^j <= x`; 0 when `x < 1`.
pub(crate) fn floor_root(x: i64, j: u32) -> u64 {
    if x < 1 {
        return 0;
    }
    let x = x as u64;
    if j == 1 {
        return x;
    }
    let mut r = (x as f64).powf(1.0 / j as f64).round() as u64;
    loop {
        let up = r.checked_add(1).and_then(|v| v.checked_pow(j));
        if let Some(p) = up {
            if p <= x {
                r += 1;
                continue;
            }
        }
        if r > 0 && r.checked_pow(j).map(|p| p > x).unwrap_or(true) {
            r -= 1;
            continue;
        }
        return r;
    }
}

/// Smallest integer `r ≥ 1` with `r^j >= x`.
pub(crate) fn ceil_root(x: i64, j: u32) -> u64 {
    if x <= 1 {
        return 1;
    }
    let f = floor_root(x, j);
    if f >= 1 && (f as i64).checked_pow(j) == Some(x) {
        f
    } else {
        f + 1
    }
}

struct CurveGeometry {
    out_offsets: Vec<i64>,
    out_dims: Vec<usize>,
    /// Flat-index displacement into the input block for each k.
    flat_deltas: Vec<isize>,
}

fn curve_geometry(f: &SignalD, powers: &[Vec<i64>]) -> Result<CurveGeometry, AveragesError> {
    let d = f.rank();
    let n = powers.len() as u64;
    let mut out_offsets = Vec::with_capacity(d);
    let mut out_dims = Vec::with_capacity(d);
    let mut total: u128 = 1;
    for j in 0..d {
        let max_shift = powers[(n - 1) as usize][j]; // k^j is increasing in k
        let off = f.offsets()[j]
            .checked_sub(max_shift)
            .ok_or(AveragesError::IndexOverflow)?;
        let dim = f.dims()[j] + (max_shift - 1) as usize;
        total *= dim as u128;
        out_offsets.push(off);
        out_dims.push(dim);
    }
    if total > MAX_WINDOW_CELLS as u128 {
        return Err(SignalError::WindowBudget(total).into());
    }
    let strides = f.strides();
    let flat_deltas = powers
        .iter()
        .map(|row| {
            row.iter()
                .zip(&strides)
                .map(|(&s, &st)| s as isize * st as isize)
                .sum()
        })
        .collect();
    Ok(CurveGeometry {
        out_offsets,
        out_dims,
        flat_deltas,
    })
}

/// Valid `k` range `[klo, khi]` so that `x_j + k^j` stays inside dimension
/// `j` of the input for all `j`; empty when `klo > khi`.
fn valid_k_range(f: &SignalD, coords: &[i64], n: u64) -> (u64, u64) {
    let mut klo = 1u64;
    let mut khi = n;
    for j in 0..coords.len() {
        let lo_j = f.offsets()[j] - coords[j];
        let hi_j = f.offsets()[j] + f.dims()[j] as i64 - 1 - coords[j];
        if hi_j < 1 {
            return (1, 0);
        }
        let jj = (j + 1) as u32;
        khi = khi.min(floor_root(hi_j, jj));
        if lo_j > 1 {
            klo = klo.max(ceil_root(lo_j, jj));
        }
    }
    (klo, khi)
}

fn multidim_weighted(
    d: usize,
    f: &SignalD,
    weights: &[f64],
) -> Result<SignalD, AveragesError> {
    if f.rank() != d {
        return Err(SignalError::DimensionMismatch {
            expected: d,
            got: f.rank(),
        }
        .into());
    }
    if f.is_empty() {
        return Err(AveragesError::EmptyInput);
    }
    let n = weights.len() as u64;
    let powers = curve_powers(d, n)?;
    let geom = curve_geometry(f, &powers)?;
    let mut out = SignalD::zeros(geom.out_offsets.clone(), geom.out_dims.clone())?;
    let out_strides = out.strides();
    let out_offsets = out.offsets().to_vec();
    let out_dims = out.dims().to_vec();
    let fv = f.values();
    let f_offsets = f.offsets().to_vec();
    let f_strides = f.strides();
    let deltas = &geom.flat_deltas;
    // Row = all but the last axis; cells of a row are contiguous.
    let row_len = *out_dims.last().unwrap();
    for_each_chunk_mut(out.values_mut(), row_len, |start, chunk| {
        let mut coords = vec![0i64; d];
        let mut rem = start;
        for j in 0..d {
            coords[j] = out_offsets[j] + (rem / out_strides[j]) as i64;
            rem %= out_strides[j];
        }
        for (i, cell) in chunk.iter_mut().enumerate() {
            let mut c = coords.clone();
            c[d - 1] += i as i64;
            let (klo, khi) = valid_k_range(f, &c, n);
            if klo > khi {
                *cell = 0.0;
                continue;
            }
            // Base flat index of x relative to the input layout; only valid
            // combined with a delta that lands inside (guaranteed by the k
            // range above).
            let base: isize = (0..d)
                .map(|j| (c[j] - f_offsets[j]) as isize * f_strides[j] as isize)
                .sum();
            let mut acc = 0.0;
            for k in klo..=khi {
                let idx = base + deltas[(k - 1) as usize];
                acc += weights[(k - 1) as usize] * fv[idx as usize];
            }
            *cell = acc;
        }
    });
    Ok(out)
}

/// `Ã_N f(x) = (1/N) Σ_{k=1}^{N} f(x_1 + k, x_2 + k², …, x_d + k^d)`.
pub fn multidim_average(d: usize, n: u64, f: &SignalD) -> Result<SignalD, AveragesError> {
    if n == 0 {
        return Err(AveragesError::EmptyAverage);
    }
    let w = 1.0 / n as f64;
    multidim_weighted(d, f, &vec![w; n as usize])
}

/// `Ã_N f` at selected points only.
pub fn multidim_average_at(
    d: usize,
    n: u64,
    f: &SignalD,
    points: &[Vec<i64>],
) -> Result<Vec<f64>, AveragesError> {
    if n == 0 {
        return Err(AveragesError::EmptyAverage);
    }
    if f.rank() != d {
        return Err(SignalError::DimensionMismatch {
            expected: d,
            got: f.rank(),
        }
        .into());
    }
    let powers = curve_powers(d, n)?;
    let inv = 1.0 / n as f64;
    points
        .iter()
        .map(|x| {
            if x.len() != d {
                return Err(AveragesError::Signal(SignalError::DimensionMismatch {
                    expected: d,
                    got: x.len(),
                }));
            }
            let mut acc = 0.0;
            let mut probe = vec![0i64; d];
            for row in &powers {
                for j in 0..d {
                    probe[j] = x[j] + row[j];
                }
                acc += f.get(&probe);
            }
            Ok(acc * inv)
        })
        .collect()
}

/// Reflection `f(x) ↦ f(−x)` of a dense block: reversing the row-major
/// buffer reverses every axis at once.
pub fn reflect(f: &SignalD) -> SignalD {
    let offsets = f
        .offsets()
        .iter()
        .zip(f.dims())
        .map(|(&o, &d)| -(o + d as i64 - 1))
        .collect();
    let mut values = f.values().to_vec();
    values.reverse();
    SignalD::new(offsets, f.dims().to_vec(), values).expect("same shape")
}

/// Adjoint moment-curve average `Ã_N^† g(y) = (1/N) Σ_k g(y − (k, …, k^d))`,
/// computed as `R ∘ Ã_N ∘ R` with `R` the reflection through the origin.
pub fn multidim_adjoint_average(d: usize, n: u64, g: &SignalD) -> Result<SignalD, AveragesError> {
    Ok(reflect(&multidim_average(d, n, &reflect(g))?))
}

/// Output of [`multidim_fractional`].
#[derive(Clone, Debug)]
pub struct FractionalOutputD {
    pub signal: SignalD,
    pub exact_truncation: u64,
}

/// `Ĩ_{d,λ} f(x) = Σ_k k^{-λ} f(x_1 + k, …, x_d + k^d)` on the natural
/// window of the `K`-truncated sum. Truncation is exact as soon as `K^d`
/// exceeds the reach of the window along the last axis, i.e. `K` of order
/// (window radius)^{1/d}; the exact threshold is computed and enforced.
pub fn multidim_fractional(
    d: usize,
    ord: FractionalOrder,
    f: &SignalD,
) -> Result<FractionalOutputD, AveragesError> {
    if f.rank() != d {
        return Err(SignalError::DimensionMismatch {
            expected: d,
            got: f.rank(),
        }
        .into());
    }
    if f.is_empty() {
        return Err(AveragesError::EmptyInput);
    }
    // On the natural window of the K-truncated sum, a term with k > K still
    // reaches iff k^j <= K^j + (extent_j - 1) for every axis j. The left side
    // grows in k, so the reachable set is an initial segment; scan past K
    // until it ends.
    let reaches = |k: u64| -> bool {
        (1..=d).all(|j| {
            let kj = (k as i128).checked_pow(j as u32);
            let reach = (ord.truncation as i128)
                .checked_pow(j as u32)
                .map(|t| t + f.dims()[j - 1] as i128 - 1);
            matches!((kj, reach), (Some(a), Some(b)) if a <= b)
        })
    };
    let mut required = ord.truncation;
    while reaches(required + 1) {
        required += 1;
    }
    if required > ord.truncation {
        return Err(AveragesError::TruncationNotExact {
            given: ord.truncation,
            required,
        });
    }
    let weights: Vec<f64> = (1..=ord.truncation)
        .map(|k| (k as f64).powf(-ord.lambda))
        .collect();
    let signal = multidim_weighted(d, f, &weights)?;
    Ok(FractionalOutputD {
        signal,
        exact_truncation: required,
    })
}

/// `Ĩ_{d,λ}` truncated at `K` on an explicit window (offsets/dims).
pub fn multidim_fractional_truncated(
    d: usize,
    lambda: f64,
    truncation: u64,
    f: &SignalD,
    out_offsets: Vec<i64>,
    out_dims: Vec<usize>,
) -> Result<SignalD, AveragesError> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(AveragesError::InvalidLambda(lambda));
    }
    let powers = curve_powers(d, truncation)?;
    let weights: Vec<f64> = (1..=truncation)
        .map(|k| (k as f64).powf(-lambda))
        .collect();
    let mut out = SignalD::zeros(out_offsets, out_dims)?;
    let out_strides = out.strides();
    let out_offs = out.offsets().to_vec();
    let row_len = *out.dims().last().unwrap();
    for_each_chunk_mut(out.values_mut(), row_len, |start, chunk| {
        let mut coords = vec![0i64; d];
        let mut rem = start;
        for j in 0..d {
            coords[j] = out_offs[j] + (rem / out_strides[j]) as i64;
            rem %= out_strides[j];
        }
        let mut probe = vec![0i64; d];
        for (i, cell) in chunk.iter_mut().enumerate() {
            let mut c = coords.clone();
            c[d - 1] += i as i64;
            let mut acc = 0.0;
            for (row, w) in powers.iter().zip(&weights) {
                for j in 0..d {
                    probe[j] = c[j] + row[j];
                }
                acc += w * f.get(&probe);
            }
            *cell = acc;
        }
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponent::Exponent;

    fn poly(s: &str) -> IntPolynomial {
        IntPolynomial::parse(s).unwrap()
    }

    #[test]
    fn identity_average_is_translation() {
        // P(x) = x, N = 1: A_1 f(x) = f(x + 1), so δ_0 moves to x = -1.
        let out = average(&poly("0,1"), 1, &Signal1D::delta(0)).unwrap();
        assert_eq!(out.trim().window(), Some((-1, -1)));
        assert_eq!(out.get(-1), 1.0);
    }

    #[test]
    fn square_average_of_delta() {
        let out = average(&poly("0,0,1"), 2, &Signal1D::delta(0)).unwrap();
        assert_eq!(out.get(-1), 0.5);
        assert_eq!(out.get(-4), 0.5);
        assert_eq!(out.trim().window(), Some((-4, -1)));
        let mass: f64 = out.values().iter().sum();
        assert!((mass - 1.0).abs() < 1e-15);
    }

    #[test]
    fn average_at_matches_dense() {
        let f = Signal1D::new(-3, (0..40).map(|i| (i % 7) as f64).collect()).unwrap();
        let p = poly("0,1,1");
        let dense = average(&p, 9, &f).unwrap();
        let (lo, hi) = dense.window().unwrap();
        let xs: Vec<i64> = (lo..=hi).collect();
        let at = average_at(&p, 9, &f, &xs).unwrap();
        for (x, v) in xs.iter().zip(&at) {
            assert!((dense.get(*x) - v).abs() < 1e-15);
        }
    }

    #[test]
    fn fft_route_agrees() {
        let f = Signal1D::new(-11, (0..257).map(|i| ((i * 31 + 7) % 13) as f64).collect()).unwrap();
        let p = poly("0,0,1");
        let direct = average(&p, 17, &f).unwrap();
        let fft = average_fft(&p, 17, &f).unwrap();
        assert_eq!(direct.offset(), fft.offset());
        assert_eq!(direct.len(), fft.len());
        let scale = direct.lp_norm(Exponent::Infinity).max(1.0);
        for (a, b) in direct.values().iter().zip(fft.values()) {
            assert!((a - b).abs() <= 1e-9 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn fft_route_agrees_for_sign_changing_polynomial() {
        // P(x) = x² − 5x dips negative before growing.
        let f = Signal1D::new(3, (0..101).map(|i| ((i * 7 + 2) % 11) as f64).collect()).unwrap();
        let p = poly("0,-5,1");
        let direct = average(&p, 9, &f).unwrap();
        let fft = average_fft(&p, 9, &f).unwrap();
        assert_eq!(direct.offset(), fft.offset());
        let scale = direct.lp_norm(Exponent::Infinity).max(1.0);
        for (a, b) in direct.values().iter().zip(fft.values()) {
            assert!((a - b).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn decreasing_polynomial_fractional_truncation() {
        // P(x) = −x walks left; with f = δ_0 the weight at x = k is k^{−λ}.
        let p = poly("0,-1");
        let f = Signal1D::delta(0);
        let out = fractional(&p, FractionalOrder::new(0.5, 3).unwrap(), &f).unwrap();
        assert_eq!(out.exact_truncation, 3);
        for k in 1..=3i64 {
            let expect = (k as f64).powf(-0.5);
            assert!((out.signal.get(k) - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn fractional_single_term() {
        // f supported on {1}; with P(x) = x only k = 1 reaches x = 0.
        let f = Signal1D::delta(1);
        let out = fractional(&poly("0,1"), FractionalOrder::new(0.5, 1).unwrap(), &f).unwrap();
        assert_eq!(out.signal.get(0), 1.0);
        assert_eq!(out.exact_truncation, 1);
    }

    #[test]
    fn fractional_two_terms() {
        // f = 1_{{1,4}}, P(x) = x^2: I_λ f(0) = 1 + 2^{-1/2}.
        let f = Signal1D::indicator(&[1, 4]).unwrap();
        let out = fractional(&poly("0,0,1"), FractionalOrder::new(0.5, 2).unwrap(), &f).unwrap();
        let expect = 1.0 + 0.5f64.sqrt();
        assert!((out.signal.get(0) - expect).abs() < 1e-15);
    }

    #[test]
    fn fractional_truncation_guard() {
        // Wide input with P(x) = x: small K cannot be exact on the natural
        // window.
        let f = Signal1D::new(0, vec![1.0; 64]).unwrap();
        let err = fractional(&poly("0,1"), FractionalOrder::new(0.5, 4).unwrap(), &f);
        assert!(matches!(
            err,
            Err(AveragesError::TruncationNotExact { .. })
        ));
    }

    #[test]
    fn maximal_of_delta() {
        let out = maximal(&poly("0,1"), 2, &Signal1D::delta(0)).unwrap();
        assert_eq!(out.get(-1), 1.0);
        assert_eq!(out.get(-2), 0.5);
    }

    #[test]
    fn maximal_dominates_each_average() {
        let f = Signal1D::new(0, (0..50).map(|i| ((i * 13 + 5) % 11) as f64).collect()).unwrap();
        let p = poly("0,0,1");
        let m = maximal(&p, 16, &f).unwrap();
        for n in 1..=16 {
            let a = average(&p, n, &f).unwrap();
            let (lo, hi) = a.window().unwrap();
            for x in lo..=hi {
                assert!(m.get(x) >= a.get(x) - 1e-12, "N={n} x={x}");
            }
        }
    }

    #[test]
    fn maximal_rejects_negative() {
        let f = Signal1D::new(0, vec![1.0, -0.5]).unwrap();
        assert!(matches!(
            maximal(&poly("0,1"), 2, &f),
            Err(AveragesError::NegativeInput)
        ));
    }

    #[test]
    fn multidim_average_delta_small() {
        let f = SignalD::delta(&[0, 0]).unwrap();
        let a1 = multidim_average(2, 1, &f).unwrap();
        assert_eq!(a1.get(&[-1, -1]), 1.0);
        let a2 = multidim_average(2, 2, &f).unwrap();
        assert_eq!(a2.get(&[-1, -1]), 0.5);
        assert_eq!(a2.get(&[-2, -4]), 0.5);
    }

    #[test]
    fn multidim_average_matches_pointwise() {
        let mut f = SignalD::zeros(vec![-2, -3], vec![8, 30]).unwrap();
        for i in 0..f.len() {
            f.values_mut()[i] = ((i * 29 + 3) % 17) as f64;
        }
        let dense = multidim_average(2, 4, &f).unwrap();
        let points: Vec<Vec<i64>> = (0..dense.len()).map(|i| dense.coords_of(i)).collect();
        let vals = multidim_average_at(2, 4, &f, &points).unwrap();
        for (i, v) in vals.iter().enumerate() {
            assert!((dense.values()[i] - v).abs() < 1e-12);
        }
    }

    #[test]
    fn multidim_reduces_to_one_dim() {
        // d = 1 moment curve is P(x) = x.
        let f1 = Signal1D::new(-5, (0..21).map(|i| ((i * 7 + 1) % 5) as f64).collect()).unwrap();
        let fd = SignalD::new(vec![-5], vec![21], f1.values().to_vec()).unwrap();
        let a1 = average(&poly("0,1"), 6, &f1).unwrap();
        let ad = multidim_average(1, 6, &fd).unwrap();
        assert_eq!(ad.offsets()[0], a1.offset());
        for (a, b) in a1.values().iter().zip(ad.values()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn multidim_fractional_two_terms() {
        // δ at (1,1) + δ at (2,4); k = 1 and k = 2 reach the origin.
        let mut f = SignalD::zeros(vec![1, 1], vec![2, 4]).unwrap();
        f.set(&[1, 1], 1.0).unwrap();
        f.set(&[2, 4], 1.0).unwrap();
        let out =
            multidim_fractional(2, FractionalOrder::new(0.5, 2).unwrap(), &f).unwrap();
        let expect = 1.0 + 0.5f64.sqrt();
        assert!((out.signal.get(&[0, 0]) - expect).abs() < 1e-15);
    }

    #[test]
    fn multidim_fractional_dominates_scaled_average() {
        // Ã_N f ≤ N^{λ−1} Ĩ_{d,λ} f pointwise for nonnegative f: the k ≤ N
        // terms carry weights k^{−λ} ≥ N^{−λ}.
        let d = 2usize;
        let n = 4u64;
        let lambda = 0.7;
        let mut f = SignalD::zeros(vec![-1, -2], vec![6, 20]).unwrap();
        for i in 0..f.len() {
            f.values_mut()[i] = ((i * 11 + 5) % 7) as f64;
        }
        let a = multidim_average(d, n, &f).unwrap();
        // Along axis 1 a contributing k satisfies k ≤ extent₁ − 1 + N, so
        // this truncation is exact on the output window.
        let k_cover = f.dims()[0] as u64 + n;
        let frac = multidim_fractional_truncated(
            d,
            lambda,
            k_cover,
            &f,
            a.offsets().to_vec(),
            a.dims().to_vec(),
        )
        .unwrap();
        let weight = (n as f64).powf(lambda - 1.0);
        for i in 0..a.len() {
            let coords = a.coords_of(i);
            assert!(
                weight * frac.get(&coords) >= a.values()[i] - 1e-12,
                "at {coords:?}"
            );
        }
    }

    #[test]
    fn adjoint_pairs_with_average() {
        // <Ã f, g> = <f, Ã† g> on aligned windows.
        let mut f = SignalD::zeros(vec![-2, 1], vec![5, 9]).unwrap();
        let mut g = SignalD::zeros(vec![-6, -9], vec![7, 14]).unwrap();
        for i in 0..f.len() {
            f.values_mut()[i] = ((i * 13 + 1) % 7) as f64;
        }
        for i in 0..g.len() {
            g.values_mut()[i] = ((i * 5 + 3) % 9) as f64;
        }
        let af = multidim_average(2, 3, &f).unwrap();
        let atg = multidim_adjoint_average(2, 3, &g).unwrap();
        let mut lhs = 0.0;
        for (i, &v) in af.values().iter().enumerate() {
            lhs += v * g.get(&af.coords_of(i));
        }
        let mut rhs = 0.0;
        for (i, &v) in f.values().iter().enumerate() {
            rhs += v * atg.get(&f.coords_of(i));
        }
        assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    }

    #[test]
    fn roots_are_exact() {
        assert_eq!(floor_root(8, 3), 2);
        assert_eq!(floor_root(7, 3), 1);
        assert_eq!(floor_root(9, 2), 3);
        assert_eq!(ceil_root(9, 2), 3);
        assert_eq!(ceil_root(10, 2), 4);
        assert_eq!(floor_root(0, 2), 0);
        assert_eq!(ceil_root(-5, 2), 1);
    }
}
