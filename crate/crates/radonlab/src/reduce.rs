//! Transfer constructions, run as exactly checkable identities and
//! pointwise inequalities.
//!
//! Three bridges live here:
//!
//! * the quadratic completing-the-square reduction, which dominates
//!   `A_N^{ax²+bx+c}` pointwise by a pure-square average of a dilated
//!   signal;
//! * the projection lift, which realizes a 1D polynomial average as the
//!   restriction of the moment-curve average applied to a lifted signal;
//! * the dyadic bridges between averages and fractional integrals.
//!
//! Every check restricts to nonnegative inputs, where the pointwise chains
//! are literally true; signed inputs are only meaningful at the norm level
//! and are rejected here.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::averages::{self, AveragesError};
use crate::exponent::{rat_to_f64, Exponent};
use crate::poly::{Decomposition, IntPolynomial, PolyError};
use crate::signal::{Signal1D, SignalD, SignalError, MAX_WINDOW_CELLS};

#[derive(Debug, Error)]
pub enum ReduceError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Averages(#[from] AveragesError),
    #[error("quadratic triple needs a >= 1 and b, c >= 0")]
    InvalidTriple,
    #[error("input must be nonnegative for the pointwise chain")]
    NegativeInput,
    #[error("input signal is empty")]
    EmptyInput,
    #[error("window of {0} cells exceeds the budget")]
    BudgetExceeded(u128),
    #[error(
        "pointwise domination violated at x = {x}: lhs {lhs} > rhs {rhs}; \
         this falsifies the construction and indicates a bug"
    )]
    NegativeSlack { x: i64, lhs: f64, rhs: f64 },
    #[error("polynomial is not integer-valued")]
    NotIntegerValued,
}

// ---------------------------------------------------------------------------
// Quadratic reduction.
// ---------------------------------------------------------------------------

/// Coefficients of `P(x) = ax² + bx + c` with `a ≥ 1`, `b, c ≥ 0`.
/// Negative `b` or `c` are rejected rather than guessed around.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct QuadraticTriple {
    pub a: u64,
    pub b: u64,
    pub c: u64,
}

impl QuadraticTriple {
    pub fn new(a: u64, b: u64, c: u64) -> Result<Self, ReduceError> {
        if a == 0 {
            return Err(ReduceError::InvalidTriple);
        }
        Ok(Self { a, b, c })
    }

    pub fn to_poly(self) -> IntPolynomial {
        IntPolynomial::from_integers(&[self.c as i128, self.b as i128, self.a as i128])
            .expect("a >= 1 gives a valid quadratic")
    }
}

/// The 4a-dilate: `g(4a·m) = f(m)`, `g(n) = 0` when `4a ∤ n`. Value
/// multisets agree, so every `ℓ^p` norm is preserved exactly.
pub fn quadratic_dilate(f: &Signal1D, a: u64) -> Result<Signal1D, ReduceError> {
    if a == 0 {
        return Err(ReduceError::InvalidTriple);
    }
    let (lo, hi) = f.window().ok_or(ReduceError::EmptyInput)?;
    let stride = 4 * a as i64;
    let out_lo = lo.checked_mul(stride).ok_or(ReduceError::BudgetExceeded(0))?;
    let out_len = (hi - lo) as u128 * stride as u128 + 1;
    if out_len > MAX_WINDOW_CELLS as u128 {
        return Err(ReduceError::BudgetExceeded(out_len));
    }
    let mut values = vec![0.0; out_len as usize];
    for (x, v) in f.iter() {
        values[((x - lo) as usize) * stride as usize] = v;
    }
    Ok(Signal1D::new(out_lo, values)?)
}

/// Report of one quadratic transfer check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransferReport {
    pub triple: QuadraticTriple,
    pub n: u64,
    /// Minimum over the output window of `rhs(x) − lhs(x)`.
    pub min_slack: f64,
    pub argmin: i64,
    /// `‖A_N^P f‖_{p'}`.
    pub lhs_norm_dual: f64,
    /// `‖f‖_p`.
    pub input_norm: f64,
    /// `‖A_N^P f‖_{p'} / [(2a + b/N) (2aN+b)^{−2(1/p−1/p')} ‖f‖_p]`.
    pub normalized_ratio: f64,
    /// Measured square-case constant
    /// `‖A_M^{x²} g‖_{p'} / (M^{−2(1/p−1/p')} ‖g‖_p)` on the dilate,
    /// when requested.
    pub chain_constant: Option<f64>,
}

/// Check the pointwise domination
/// `A_N^P f(x) ≤ (2a + b/N) · A_{2aN+b}^{x²} g(4a(x+c) − b²)`
/// for nonnegative `f`, where `g` is the 4a-dilate of `f`. Each term of
/// the left sum reappears on the right at `k = 2an + b`, so for `f ≥ 0`
/// the inequality is term-by-term; a negative slack beyond rounding can
/// only be a bug witness.
pub fn quadratic_transfer_check(
    triple: QuadraticTriple,
    n: u64,
    f: &Signal1D,
    p: Exponent,
    with_chain_constant: bool,
) -> Result<TransferReport, ReduceError> {
    if !f.is_nonnegative() {
        return Err(ReduceError::NegativeInput);
    }
    f.window().ok_or(ReduceError::EmptyInput)?;
    let (a, b, c) = (triple.a, triple.b, triple.c);
    let poly = triple.to_poly();
    let square = IntPolynomial::from_integers(&[0, 0, 1]).expect("x^2");
    let m = 2 * a * n + b;
    let g = quadratic_dilate(f, a)?;
    let lhs = averages::average(&poly, n, f)?;
    let (wlo, whi) = lhs.window().expect("nonempty input");
    let factor = 2.0 * a as f64 + b as f64 / n as f64;
    // Evaluate the square average of g only at the needed arguments.
    let ys: Vec<i64> = (wlo..=whi)
        .map(|x| 4 * a as i64 * (x + c as i64) - (b as i64).pow(2))
        .collect();
    let rhs_at = averages::average_at(&square, m, &g, &ys)?;
    let mut min_slack = f64::INFINITY;
    let mut argmin = wlo;
    for (i, x) in (wlo..=whi).enumerate() {
        let lhs_v = lhs.get(x);
        let rhs_v = factor * rhs_at[i];
        let slack = rhs_v - lhs_v;
        if slack < min_slack {
            min_slack = slack;
            argmin = x;
        }
        let tol = 1e-12 * rhs_v.abs().max(1.0);
        if slack < -tol {
            return Err(ReduceError::NegativeSlack {
                x,
                lhs: lhs_v,
                rhs: rhs_v,
            });
        }
    }
    let p_dual = p.conjugate().map_err(|_| ReduceError::InvalidTriple)?;
    let lhs_norm_dual = lhs.lp_norm(p_dual);
    let input_norm = f.lp_norm(p);
    let gap = rat_to_f64(p.reciprocal()) - rat_to_f64(p_dual.reciprocal());
    let envelope = factor * (m as f64).powf(-2.0 * gap);
    let normalized_ratio = lhs_norm_dual / (envelope * input_norm);
    let chain_constant = if with_chain_constant {
        let ag = averages::average(&square, m, &g)?;
        Some(ag.lp_norm(p_dual) / ((m as f64).powf(-2.0 * gap) * g.lp_norm(p)))
    } else {
        None
    };
    Ok(TransferReport {
        triple,
        n,
        min_slack,
        argmin,
        lhs_norm_dual,
        input_norm,
        normalized_ratio,
        chain_constant,
    })
}

// ---------------------------------------------------------------------------
// Projection lift.
// ---------------------------------------------------------------------------

/// Exact count data for the sublattice lower bound.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SublatticeBound {
    /// `Σ_{x in the v-divisible sublattice box} |A_N g(a·x + r)|^q`.
    pub lhs_sum: f64,
    /// `Σ_{n ≡ r (mod u)} |A_N g(n)|^q`.
    pub rhs_sum: f64,
    /// `lhs_sum / (N^{(d−1)d/2} · rhs_sum)`.
    pub c_measured: f64,
    /// Smallest lattice-point count over the support arguments; the bound
    /// is literal when this is ≥ 1, otherwise it is reported only (the
    /// construction needs N large enough for the box to reach every
    /// residue).
    pub min_count: u64,
    pub asserted: bool,
}

/// Report of one projection lift.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LiftReport {
    pub d: usize,
    pub n: u64,
    pub residue: i64,
    pub decomposition_u: i128,
    pub decomposition_v: i128,
    /// Number of lattice points checked in the identity domain.
    pub identity_points: u64,
    /// `max |Ã_N f(x) − A_N g(a·x + r − P(0))|` over the domain.
    pub max_identity_gap: f64,
    /// Largest multiplicity of a single argument value among lift cells.
    pub mult_max: u64,
    pub norm_f: f64,
    pub norm_g: f64,
    /// `‖f‖_p / (N^{(d−1)d/(2p)} ‖g‖_p)`.
    pub c1_ratio: f64,
    pub sublattice: SublatticeBound,
}

/// Build the lifted signal and verify the identity and both norm-count
/// relations. `P` must be integer-valued of degree `d ≥ 2`; the constant
/// term only translates the 1D average and is shifted out internally.
pub fn projection_lift(
    g: &Signal1D,
    poly: &IntPolynomial,
    n: u64,
    residue: i64,
    p: Exponent,
    q: Exponent,
) -> Result<LiftReport, ReduceError> {
    if !poly.check_integer_valued() {
        return Err(ReduceError::NotIntegerValued);
    }
    let d = poly.degree();
    if d < 2 {
        return Err(ReduceError::InvalidTriple);
    }
    let (glo, ghi) = g.window().ok_or(ReduceError::EmptyInput)?;
    let dec @ Decomposition { u, v, .. } = poly.decompose()?;
    let b = &dec.b;
    if residue < 0 || residue >= u as i64 {
        return Err(ReduceError::InvalidTriple);
    }
    let a0 = poly.eval(0)?;

    // Box extents 2N^j for j < d; the last axis is sized so that
    // a·x + r sweeps the support of g.
    let mut dims: Vec<usize> = Vec::with_capacity(d);
    let mut offsets: Vec<i64> = vec![1; d];
    let mut t_min: i128 = 0;
    let mut t_max: i128 = 0;
    let mut cells: u128 = 1;
    for j in 1..d {
        let extent = 2 * (n as i128).pow(j as u32);
        let extent_us = usize::try_from(extent).map_err(|_| ReduceError::BudgetExceeded(0))?;
        dims.push(extent_us);
        cells = cells
            .checked_mul(extent as u128)
            .ok_or(ReduceError::BudgetExceeded(u128::MAX))?;
        let bj = b[j - 1];
        if bj >= 0 {
            t_min += bj;
            t_max += bj * extent;
        } else {
            t_min += bj * extent;
            t_max += bj;
        }
    }
    // u·S/v + r ∈ [glo, ghi] with S = b·x a multiple of v.
    let s_lo = div_ceil(v * (glo as i128 - residue as i128), u);
    let s_hi = div_floor(v * (ghi as i128 - residue as i128), u);
    let bd = b[d - 1];
    debug_assert_ne!(bd, 0);
    let (mut xd_lo, mut xd_hi) = if bd > 0 {
        (div_ceil(s_lo - t_max, bd), div_floor(s_hi - t_min, bd))
    } else {
        (div_ceil(s_hi - t_min, bd), div_floor(s_lo - t_max, bd))
    };
    if xd_lo > xd_hi {
        // Degenerate sweep; keep a single row so the signal stays valid.
        xd_lo = 0;
        xd_hi = 0;
    }
    let xd_extent = usize::try_from(xd_hi - xd_lo + 1).map_err(|_| ReduceError::BudgetExceeded(0))?;
    cells = cells
        .checked_mul(xd_extent as u128)
        .ok_or(ReduceError::BudgetExceeded(u128::MAX))?;
    if cells > MAX_WINDOW_CELLS as u128 {
        return Err(ReduceError::BudgetExceeded(cells));
    }
    dims.push(xd_extent);
    offsets[d - 1] = i64::try_from(xd_lo).map_err(|_| ReduceError::BudgetExceeded(0))?;

    // Materialize f and the multiplicity histogram over g's window.
    let mut f = SignalD::zeros(offsets.clone(), dims.clone())?;
    let mut mult = vec![0u64; g.len()];
    let strides = f.strides();
    {
        let values = f.values_mut();
        let mut coords = vec![0i64; d];
        for (i, cell) in values.iter_mut().enumerate() {
            let mut rem = i;
            for j in 0..d {
                coords[j] = offsets[j] + (rem / strides[j]) as i64;
                rem %= strides[j];
            }
            let s: i128 = coords
                .iter()
                .zip(b)
                .map(|(&x, &bj)| bj * x as i128)
                .sum();
            if s % v != 0 {
                continue;
            }
            let arg = u * (s / v) + residue as i128;
            if arg < glo as i128 || arg > ghi as i128 {
                continue;
            }
            let arg = arg as i64;
            mult[(arg - glo) as usize] += 1;
            *cell = g.get(arg);
        }
    }
    let mult_max = mult.iter().copied().max().unwrap_or(0);

    // Identity on the declared domain: x_j ∈ [1, N^j] for j < d, any x_d
    // with a·x ∈ ℤ. The x_d sweep pads the lift window far enough to cover
    // the supports of both sides, so agreement through zero is also probed.
    let lifted_avg = averages::multidim_average(d, n, &f)?;
    let g_avg = averages::average(poly, n, g)?;
    let shifts = poly.values(n)?;
    let reach = shifts.iter().map(|s| (s - a0).unsigned_abs()).max().unwrap_or(0) as i128;
    let pad = reach * v / (u * bd.abs()) + (n as i128).pow(d as u32) + 2;
    let mut max_gap = 0.0f64;
    let mut identity_points = 0u64;
    let mut coords = vec![1i64; d];
    loop {
        let t: i128 = coords[..d - 1]
            .iter()
            .zip(&b[..d - 1])
            .map(|(&x, &bj)| bj * x as i128)
            .sum();
        for xd in (xd_lo - pad)..=(xd_hi + pad) {
            let s = t + bd * xd;
            if s % v != 0 {
                continue;
            }
            coords[d - 1] = i64::try_from(xd).map_err(|_| ReduceError::BudgetExceeded(0))?;
            let lhs = lifted_avg.get(&coords);
            let y = u * (s / v) + residue as i128 - a0;
            let rhs = g_avg.get(i64::try_from(y).map_err(|_| ReduceError::BudgetExceeded(0))?);
            let gap = (lhs - rhs).abs();
            if gap > max_gap {
                max_gap = gap;
            }
            identity_points += 1;
        }
        // Advance x_1..x_{d-1} through [1, N^j]; full wrap ends the sweep.
        let mut j = d - 1;
        loop {
            if j == 0 {
                break;
            }
            j -= 1;
            let cap = (n as i64).pow((j + 1) as u32);
            if coords[j] < cap {
                coords[j] += 1;
                break;
            }
            coords[j] = 1;
        }
        if coords[..d - 1].iter().all(|&x| x == 1) {
            break;
        }
    }

    // Norm-count relation for the lift.
    let norm_f = f.lp_norm(p);
    let norm_g = g.lp_norm(p);
    let pf = p.as_f64();
    let c1_ratio = norm_f / ((n as f64).powf((d - 1) as f64 * d as f64 / (2.0 * pf)) * norm_g);

    // Sublattice lower bound: x_j ∈ vℤ ∩ [1, N^j] for j < d, x_d ∈ vℤ.
    // Writing x_j = v·y_j, the argument is u·(b·y) + r, and for a target
    // t = b·y the free coordinate y_d solves b_d·y_d = t − Σ_{j<d} b_j y_j.
    let qf = q.as_f64();
    let (alo, ahi) = g_avg.window().expect("nonempty");
    let mut partials: Vec<i128> = vec![0];
    for j in 1..d {
        let cap = (n as i128).pow(j as u32) / v;
        let mut next = Vec::with_capacity(partials.len() * cap.max(1) as usize);
        for yj in 1..=cap {
            for &t in &partials {
                next.push(t + b[j - 1] * yj);
            }
        }
        partials = next;
        if partials.is_empty() {
            break;
        }
    }
    let mut lhs_sum = 0.0f64;
    let mut rhs_sum = 0.0f64;
    let mut min_count = u64::MAX;
    let mut support_seen = false;
    for arg in alo..=ahi {
        let shifted = arg as i128 - residue as i128 + a0;
        if shifted.rem_euclid(u) != 0 {
            continue;
        }
        let t = shifted / u;
        let count = partials
            .iter()
            .filter(|&&tp| (t - tp).rem_euclid(bd.abs()) == 0)
            .count() as u64;
        let value = g_avg.get(arg).abs();
        if value == 0.0 {
            continue;
        }
        support_seen = true;
        let powered = value.powf(qf);
        rhs_sum += powered;
        lhs_sum += count as f64 * powered;
        min_count = min_count.min(count);
    }
    if !support_seen {
        min_count = 0;
    }
    let scale = (n as f64).powf((d - 1) as f64 * d as f64 / 2.0);
    let c_measured = if rhs_sum > 0.0 {
        lhs_sum / (scale * rhs_sum)
    } else {
        0.0
    };
    let sublattice = SublatticeBound {
        lhs_sum,
        rhs_sum,
        c_measured,
        min_count: if min_count == u64::MAX { 0 } else { min_count },
        asserted: support_seen && min_count >= 1,
    };

    Ok(LiftReport {
        d,
        n,
        residue,
        decomposition_u: u,
        decomposition_v: v,
        identity_points,
        max_identity_gap: max_gap,
        mult_max,
        norm_f,
        norm_g,
        c1_ratio,
        sublattice,
    })
}

fn div_floor(a: i128, b: i128) -> i128 {
    let q = a / b;
    if (a % b != 0) && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

fn div_ceil(a: i128, b: i128) -> i128 {
    -div_floor(-a, b)
}

// ---------------------------------------------------------------------------
// Dyadic bridges between averages and fractional integrals.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BridgeConfig {
    pub lambda: f64,
    /// Truncation of the fractional integral in the forward bound.
    pub truncation: u64,
    /// Averaging parameters checked in the reverse bound.
    pub n_values: Vec<u64>,
    pub q: Exponent,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointwiseSlack {
    pub n: u64,
    pub min_slack: f64,
    pub argmin: i64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BridgeReport {
    /// Reverse bound `A_N f ≤ N^{λ−1} I_λ f`, per N.
    pub reverse: Vec<PointwiseSlack>,
    /// Forward bound `I_λ^{(K)} f(x) ≤ 4 Σ_{j≤J} 2^{(1−λ)j} A_{2^j} f(x)`.
    pub forward_min_slack: f64,
    pub forward_levels: u32,
    /// `‖I_λ^{(K)} f‖_q`.
    pub lhs_norm: f64,
    /// `4 Σ_j 2^{(1−λ)j} ‖A_{2^j} f‖_q`.
    pub rhs_norm: f64,
}

/// Both dyadic bridges on one nonnegative input.
///
/// Reverse: for k ≤ N the weights satisfy `k^{−λ} ≥ N^{−λ}`, so
/// `I_λ f ≥ N^{−λ} Σ_{k≤N} f(x+P(k)) = N^{1−λ} A_N f`, an exact pointwise
/// statement with the same finitely many nonnegative terms on both sides.
///
/// Forward: the block `k ∈ (2^{j−1}, 2^j]` has at most `2^{j−1}` terms
/// with weights `≤ 2^{−λ(j−1)}`, and for `f ≥ 0` the block sum is at most
/// `2^j · A_{2^j} f(x)`; hence the block contributes at most
/// `2^λ·2^{(1−λ)j} ≤ 2·2^{(1−λ)j}` copies of `A_{2^j} f(x)`. The stray
/// `k = 1` term is at most `2 A_2 f(x) ≤ 2·2^{(1−λ)} A_2 f(x)`, doubling
/// the `j = 1` coefficient. Total constant: 4.
pub fn dyadic_bridge(
    poly: &IntPolynomial,
    cfg: &BridgeConfig,
    f: &Signal1D,
) -> Result<BridgeReport, ReduceError> {
    if !f.is_nonnegative() {
        return Err(ReduceError::NegativeInput);
    }
    if !(cfg.lambda > 0.0 && cfg.lambda < 1.0) {
        return Err(ReduceError::Averages(AveragesError::InvalidLambda(
            cfg.lambda,
        )));
    }
    let f_window = f.window().ok_or(ReduceError::EmptyInput)?;

    let mut reverse = Vec::with_capacity(cfg.n_values.len());
    for &n in &cfg.n_values {
        let a = averages::average(poly, n, f)?;
        let w = a.window().expect("nonempty");
        let k_exact = averages::fractional_exact_truncation(poly, f_window, w)?;
        let frac = averages::fractional_truncated(poly, cfg.lambda, k_exact.max(n), f, w)?;
        let weight = (n as f64).powf(cfg.lambda - 1.0);
        let mut min_slack = f64::INFINITY;
        let mut argmin = w.0;
        for x in w.0..=w.1 {
            let slack = weight * frac.get(x) - a.get(x);
            if slack < min_slack {
                min_slack = slack;
                argmin = x;
            }
        }
        reverse.push(PointwiseSlack {
            n,
            min_slack,
            argmin,
        });
    }

    let k = cfg.truncation.max(1);
    let levels = (64 - (k - 1).leading_zeros()).max(1); // ceil(log2 k), at least 1
    let top = averages::average(poly, 1u64 << levels, f)?;
    let w = top.window().expect("nonempty");
    let frac = averages::fractional_truncated(poly, cfg.lambda, k, f, w)?;
    let mut dyadic: Vec<(f64, Signal1D)> = Vec::with_capacity(levels as usize);
    for j in 1..=levels {
        let coeff = 4.0 * 2f64.powf((1.0 - cfg.lambda) * j as f64);
        dyadic.push((coeff, averages::average(poly, 1u64 << j, f)?));
    }
    let mut forward_min_slack = f64::INFINITY;
    for x in w.0..=w.1 {
        let rhs: f64 = dyadic.iter().map(|(c, a)| c * a.get(x)).sum();
        let slack = rhs - frac.get(x);
        if slack < forward_min_slack {
            forward_min_slack = slack;
        }
    }
    let lhs_norm = frac.lp_norm(cfg.q);
    let rhs_norm: f64 = dyadic.iter().map(|(c, a)| c * a.lp_norm(cfg.q)).sum();

    Ok(BridgeReport {
        reverse,
        forward_min_slack,
        forward_levels: levels,
        lhs_norm,
        rhs_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn poly(s: &str) -> IntPolynomial {
        IntPolynomial::parse(s).unwrap()
    }

    fn exp(s: &str) -> Exponent {
        s.parse().unwrap()
    }

    fn random_nonneg(seed: u64, lo: i64, len: usize) -> Signal1D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Signal1D::new(lo, (0..len).map(|_| rng.gen::<f64>()).collect()).unwrap()
    }

    #[test]
    fn dilate_examples() {
        let g = quadratic_dilate(&Signal1D::delta(0), 1).unwrap();
        assert_eq!(g.trim().window(), Some((0, 0)));
        let g = quadratic_dilate(&Signal1D::delta(1), 1).unwrap();
        assert_eq!(g.trim().window(), Some((4, 4)));
        assert_eq!(g.get(4), 1.0);
    }

    #[test]
    fn dilate_preserves_norms() {
        let f = random_nonneg(3, -9, 40);
        let g = quadratic_dilate(&f, 3).unwrap();
        for p in ["1", "17/10", "2", "5"] {
            let p = exp(p);
            assert!(
                (f.lp_norm(p) - g.lp_norm(p)).abs() < 1e-12,
                "norm mismatch at {p}"
            );
        }
        assert_eq!(g.lp_norm(Exponent::Infinity), f.lp_norm(Exponent::Infinity));
    }

    #[test]
    fn transfer_pure_square_case() {
        // a=1, b=0, c=0: A_N^{x²} f(x) ≤ 2 A_{2N}^{x²} g(4x).
        let f = random_nonneg(5, -20, 41);
        let t = QuadraticTriple::new(1, 0, 0).unwrap();
        let rep = quadratic_transfer_check(t, 6, &f, exp("8/5"), false).unwrap();
        assert!(rep.min_slack >= -1e-12, "slack {}", rep.min_slack);
    }

    #[test]
    fn transfer_general_triple() {
        let f = random_nonneg(7, -50, 101);
        let t = QuadraticTriple::new(2, 3, 1).unwrap();
        let rep = quadratic_transfer_check(t, 10, &f, exp("8/5"), true).unwrap();
        assert!(rep.min_slack >= -1e-12, "slack {}", rep.min_slack);
        // The norm chain with the measured square constant is literal.
        let factor = 2.0 * 2.0 + 3.0 / 10.0;
        let m = 2 * 2 * 10 + 3;
        let gap = 5.0 / 8.0 - 3.0 / 8.0;
        let c = rep.chain_constant.unwrap();
        let bound = factor * (m as f64).powf(-2.0 * gap) * c * rep.input_norm;
        assert!(rep.lhs_norm_dual <= bound * (1.0 + 1e-9));
    }

    #[test]
    fn transfer_delta_matching_term() {
        // f = δ_0: the lhs value 1/N at x = −P(k) is matched exactly on the
        // right, so the minimum slack is ~0 there but never negative.
        let t = QuadraticTriple::new(1, 2, 0).unwrap();
        let rep =
            quadratic_transfer_check(t, 8, &Signal1D::delta(0), exp("8/5"), false).unwrap();
        assert!(rep.min_slack >= -1e-12);
    }

    #[test]
    fn transfer_rejects_signed_input() {
        let f = Signal1D::new(0, vec![1.0, -1.0]).unwrap();
        let t = QuadraticTriple::new(1, 0, 0).unwrap();
        assert!(matches!(
            quadratic_transfer_check(t, 4, &f, exp("8/5"), false),
            Err(ReduceError::NegativeInput)
        ));
    }

    #[test]
    fn lift_pure_cube() {
        // P(x) = x³: u = v = 1, b = (0, 0, 1); the lift of δ_0 is the box
        // indicator {1..2N} × {1..2N²} × {0}, multiplicity exactly 4N³.
        let n = 4u64;
        let rep = projection_lift(
            &Signal1D::delta(0),
            &poly("0,0,0,1"),
            n,
            0,
            exp("2"),
            exp("2"),
        )
        .unwrap();
        assert_eq!(rep.mult_max, 4 * n.pow(3));
        assert!(rep.max_identity_gap < 1e-12, "gap {}", rep.max_identity_gap);
        // ‖f‖_2 = (4N³)^{1/2}, ‖g‖_2 = 1, scale N^{(d-1)d/(2p)} = N^{3/2}.
        let expect = (4.0 * (n as f64).powi(3)).sqrt() / (n as f64).powf(1.5);
        assert!((rep.c1_ratio - expect).abs() < 1e-12);
    }

    #[test]
    fn lift_identity_random_g() {
        for seed in 0..5u64 {
            let g = random_nonneg(seed + 100, -8, 17);
            let rep =
                projection_lift(&g, &poly("0,0,0,1"), 3, 0, exp("2"), exp("5/2")).unwrap();
            assert!(
                rep.max_identity_gap < 1e-12,
                "seed {seed}: gap {}",
                rep.max_identity_gap
            );
            assert!(rep.identity_points > 0);
        }
    }

    #[test]
    fn lift_nontrivial_residue_classes() {
        // P(x) = 2x + 4x²: u = 2, v = 1, b = (1, 2); both residues must
        // satisfy the identity, and their argument sets are disjoint.
        let pl = poly("0,2,4");
        let dec = pl.decompose().unwrap();
        assert_eq!((dec.u, dec.v), (2, 1));
        let g = random_nonneg(41, -10, 21);
        for r in 0..2i64 {
            let rep = projection_lift(&g, &pl, 4, r, exp("2"), exp("2")).unwrap();
            assert!(
                rep.max_identity_gap < 1e-12,
                "r = {r}: gap {}",
                rep.max_identity_gap
            );
            assert!(rep.identity_points > 0);
        }
        let bad = projection_lift(&g, &pl, 4, 2, exp("2"), exp("2"));
        assert!(bad.is_err(), "residues are reduced mod u");
    }

    #[test]
    fn lift_binomial_cubic() {
        // P(x) = x(x+1)(x+2)/6 = C(x+2,3): u = 1, v = 6, b = (2, 3, 1).
        let g = random_nonneg(11, -6, 13);
        let rep = projection_lift(&g, &poly("0,1/3,1/2,1/6"), 4, 0, exp("2"), exp("2")).unwrap();
        assert_eq!(rep.decomposition_u, 1);
        assert_eq!(rep.decomposition_v, 6);
        assert!(rep.max_identity_gap < 1e-12, "gap {}", rep.max_identity_gap);
    }

    #[test]
    fn bridge_reverse_is_pointwise() {
        let f = random_nonneg(23, -15, 31);
        let cfg = BridgeConfig {
            lambda: 0.6,
            truncation: 16,
            n_values: vec![1, 4, 16],
            q: exp("2"),
        };
        let rep = dyadic_bridge(&poly("0,0,1"), &cfg, &f).unwrap();
        for pw in &rep.reverse {
            assert!(
                pw.min_slack >= -1e-12,
                "N = {}: slack {}",
                pw.n,
                pw.min_slack
            );
        }
        assert!(rep.forward_min_slack >= -1e-12);
        assert!(rep.lhs_norm <= rep.rhs_norm * (1.0 + 1e-9));
    }

    #[test]
    fn bridge_delta_exact() {
        let cfg = BridgeConfig {
            lambda: 0.6,
            truncation: 8,
            n_values: vec![2, 8],
            q: exp("3/2"),
        };
        let rep = dyadic_bridge(&poly("0,0,1"), &cfg, &Signal1D::delta(0)).unwrap();
        for pw in &rep.reverse {
            assert!(pw.min_slack >= -1e-15);
        }
    }

    #[test]
    fn bridge_lambda_near_one() {
        let f = random_nonneg(31, -10, 21);
        let cfg = BridgeConfig {
            lambda: 0.99,
            truncation: 64,
            n_values: vec![4, 16, 64],
            q: exp("2"),
        };
        let rep = dyadic_bridge(&poly("0,1,1"), &cfg, &f).unwrap();
        assert!(rep.forward_min_slack >= -1e-12);
        for pw in &rep.reverse {
            assert!(pw.min_slack >= -1e-12);
        }
    }
}
