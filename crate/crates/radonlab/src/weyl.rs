//! Normalized exponential sums along the moment curve and their even
//! moments, computed exactly by Diophantine solution counting.
//!
//! `S_N(t) = (1/N) Σ_{k=1}^{N} e(k t_1 + k² t_2 + … + k^d t_d)` and, for
//! even `s = 2m`, orthogonality turns the moment into a count:
//!
//! `N^{2m} ∫_{T^d} |S_N|^{2m} = #{ k ∈ [1,N]^{2m} : Σ_{i≤m} k_i^j =
//! Σ_{i>m} k_i^j for j = 1..d }`.
//!
//! The count is computed meet-in-the-middle: enumerate the `N^m` ordered
//! m-tuples, key each by its power-sum vector, and sum squared
//! multiplicities. Keys pack the power sums into one integer by mixed-radix
//! encoding (radix `m·N^j + 1` per coordinate) so the hot loop compares a
//! single word; the radix product is checked against the 128-bit budget.
//! Counting uses a pre-sized open-addressing table, with a
//! sort-and-run-length fallback for when the table would not fit in memory.
//! Both paths are exact; the whole pipeline is integer arithmetic, so the
//! parallel partition by leading index changes nothing in the result.

use std::f64::consts::TAU;

use num::complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fit::{log_log_fit, FitError, FitResult};
use crate::parallel::pairwise_sum;

#[derive(Debug, Error)]
pub enum WeylError {
    #[error("enumeration of {required} m-tuples exceeds the budget of {budget}")]
    BudgetExceeded { required: u128, budget: u128 },
    #[error("power-sum key exceeds 128-bit capacity")]
    IntegerOverflow,
    #[error("d and m must be at least 1")]
    EmptyProblem,
    #[error("records mix different (d, m) pairs")]
    MismatchedRecords,
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("quadrature needs at least 2 shifts/samples for an error estimate")]
    NoErrorEstimate,
}

/// A point of the d-torus, components in `[0, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusPoint(Vec<f64>);

impl TorusPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        Self(coords.into_iter().map(|t| t.rem_euclid(1.0)).collect())
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn negated(&self) -> Self {
        Self::new(self.0.iter().map(|t| -t).collect())
    }
}

/// `S_N(t)`; always has modulus at most 1.
pub fn weyl_sum(n: u64, t: &TorusPoint) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 1..=n {
        let mut phase = 0.0f64;
        let mut kp = 1.0f64;
        for &tj in t.coords() {
            kp *= k as f64;
            phase += kp * tj;
        }
        // Reduce mod 1 before scaling by 2π to keep precision at large k^d.
        acc += Complex64::from_polar(1.0, TAU * phase.fract());
    }
    acc / n as f64
}

/// Exact mean-value datum: ordered solution count and the induced norm.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct MeanValueRecord {
    pub d: usize,
    pub m: usize,
    pub n: u64,
    /// Ordered solutions of the degree-d system with 2m variables in `[1,N]`.
    pub j: u128,
}

impl MeanValueRecord {
    /// `‖S_N‖_{L^{2m}} = (J / N^{2m})^{1/(2m)}`.
    pub fn norm(&self) -> f64 {
        let s = 2 * self.m as u32;
        let logj = (self.j as f64).ln();
        let log_norm = (logj - s as f64 * (self.n as f64).ln()) / s as f64;
        log_norm.exp()
    }

    /// `J / N^{2m} = ∫ |S_N|^{2m}`.
    pub fn moment(&self) -> f64 {
        (self.j as f64) / (self.n as f64).powi(2 * self.m as i32)
    }
}

/// How m-tuple multiplicities are counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum CountStrategy {
    /// Open-addressing table sized ahead to ~1.3× the distinct-key estimate.
    Hash,
    /// Materialize all keys, sort, and run-length encode.
    Sort,
    /// Hash unless the table would outgrow the sort buffer.
    #[default]
    Auto,
}

/// Default cap on the number of enumerated m-tuples.
pub const DEFAULT_TUPLE_BUDGET: u128 = 1 << 28;

// --- key encoding ----------------------------------------------------------

struct KeyCodec {
    d: usize,
    /// Multiplier applied to coordinate j (cumulative radix product).
    place: Vec<u128>,
    max_key: u128,
}

impl KeyCodec {
    fn new(d: usize, m: usize, n: u64) -> Result<Self, WeylError> {
        let mut place = Vec::with_capacity(d);
        let mut acc: u128 = 1;
        let mut max_key: u128 = 0;
        for j in 1..=d {
            place.push(acc);
            let pow = (n as u128)
                .checked_pow(j as u32)
                .ok_or(WeylError::IntegerOverflow)?;
            let radix = (m as u128)
                .checked_mul(pow)
                .and_then(|v| v.checked_add(1))
                .ok_or(WeylError::IntegerOverflow)?;
            // Power sums are accumulated in u64 during enumeration.
            if radix > u64::MAX as u128 {
                return Err(WeylError::IntegerOverflow);
            }
            let digit_max = radix - 1; // power sums are at most m·N^j
            max_key = max_key
                .checked_add(
                    digit_max
                        .checked_mul(acc)
                        .ok_or(WeylError::IntegerOverflow)?,
                )
                .ok_or(WeylError::IntegerOverflow)?;
            acc = acc.checked_mul(radix).ok_or(WeylError::IntegerOverflow)?;
        }
        Ok(Self { d, place, max_key })
    }

    #[inline]
    fn encode(&self, power_sums: &[u64]) -> u128 {
        let mut key: u128 = 0;
        for j in 0..self.d {
            key += power_sums[j] as u128 * self.place[j];
        }
        key
    }
}

// --- open-addressing count table -------------------------------------------

/// Linear-probing `u64 key -> u64 count` table. Keys are nonzero (power
/// sums are at least m ≥ 1), so 0 marks an empty slot.
struct CountTable {
    keys: Vec<u64>,
    counts: Vec<u64>,
    mask: usize,
    filled: usize,
}

impl CountTable {
    fn with_capacity(expected: usize) -> Self {
        let cap = (expected.max(16) * 4 / 3).next_power_of_two();
        Self {
            keys: vec![0; cap],
            counts: vec![0; cap],
            mask: cap - 1,
            filled: 0,
        }
    }

    #[inline]
    fn hash(key: u64) -> u64 {
        // splitmix64 finalizer
        let mut z = key.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    #[inline]
    fn add(&mut self, key: u64, count: u64) {
        debug_assert_ne!(key, 0);
        if (self.filled + 1) * 4 > self.keys.len() * 3 {
            self.grow();
        }
        let mut i = (Self::hash(key) as usize) & self.mask;
        loop {
            let k = self.keys[i];
            if k == key {
                self.counts[i] += count;
                return;
            }
            if k == 0 {
                self.keys[i] = key;
                self.counts[i] = count;
                self.filled += 1;
                return;
            }
            i = (i + 1) & self.mask;
        }
    }

    fn grow(&mut self) {
        let old_keys = std::mem::replace(&mut self.keys, vec![0; (self.mask + 1) * 2]);
        let old_counts = std::mem::take(&mut self.counts);
        self.counts = vec![0; self.keys.len()];
        self.mask = self.keys.len() - 1;
        self.filled = 0;
        for (k, c) in old_keys.into_iter().zip(old_counts) {
            if k != 0 {
                self.add(k, c);
            }
        }
    }

    fn merge(mut self, other: CountTable) -> CountTable {
        for (k, c) in other.keys.into_iter().zip(other.counts) {
            if k != 0 {
                self.add(k, c);
            }
        }
        self
    }

    fn sum_squared_counts(&self) -> u128 {
        self.counts
            .iter()
            .map(|&c| (c as u128) * (c as u128))
            .sum()
    }
}

// --- enumeration ------------------------------------------------------------

/// Power table `pows[k-1][j-1] = k^j` for the suffix enumeration.
fn power_table(d: usize, n: u64) -> Result<Vec<Vec<u64>>, WeylError> {
    (1..=n)
        .map(|k| {
            let mut row = Vec::with_capacity(d);
            let mut acc: u64 = 1;
            for _ in 0..d {
                acc = acc.checked_mul(k).ok_or(WeylError::IntegerOverflow)?;
                row.push(acc);
            }
            Ok(row)
        })
        .collect()
}

/// Feed every ordered m-tuple with leading entry `k1` to `sink`, keyed by
/// its power-sum vector.
fn enumerate_suffix(
    pows: &[Vec<u64>],
    codec: &KeyCodec,
    m: usize,
    k1: u64,
    sink: &mut impl FnMut(u128),
) {
    let d = codec.d;
    let n = pows.len() as u64;
    let mut sums: Vec<u64> = pows[(k1 - 1) as usize].clone();
    if m == 1 {
        sink(codec.encode(&sums));
        return;
    }
    // Iterative odometer over the remaining m-1 positions.
    let mut digits = vec![1u64; m - 1];
    for j in 0..d {
        sums[j] += (m - 1) as u64 * pows[0][j];
    }
    loop {
        sink(codec.encode(&sums));
        // Advance the odometer.
        let mut pos = m - 1;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            let cur = digits[pos];
            if cur < n {
                digits[pos] = cur + 1;
                for j in 0..d {
                    sums[j] += pows[cur as usize][j] - pows[(cur - 1) as usize][j];
                }
                break;
            }
            // Reset this digit to 1 and carry.
            digits[pos] = 1;
            for j in 0..d {
                sums[j] -= pows[(n - 1) as usize][j] - pows[0][j];
            }
        }
    }
}

fn count_table_range(
    pows: &[Vec<u64>],
    codec: &KeyCodec,
    m: usize,
    k1_range: std::ops::RangeInclusive<u64>,
    capacity: usize,
) -> CountTable {
    let mut table = CountTable::with_capacity(capacity);
    for k1 in k1_range {
        enumerate_suffix(pows, codec, m, k1, &mut |key| {
            table.add(key as u64, 1);
        });
    }
    table
}

fn count_via_table(
    pows: &[Vec<u64>],
    codec: &KeyCodec,
    m: usize,
    n: u64,
    expected_distinct: usize,
    sequential: bool,
) -> u128 {
    let per_k1 = (n as u128).pow((m - 1) as u32);
    let capacity_for = |span: u64| -> usize {
        let chunk_tuples = (per_k1 * span as u128).min(usize::MAX as u128) as usize;
        expected_distinct.min(chunk_tuples).min(1 << 22)
    };
    #[cfg(feature = "parallel")]
    if !sequential {
        use rayon::prelude::*;
        let workers = rayon::current_num_threads().max(1) as u64;
        let chunks: Vec<(u64, u64)> = split_range(n, workers * 4);
        let table = chunks
            .into_par_iter()
            .map(|(lo, hi)| count_table_range(pows, codec, m, lo..=hi, capacity_for(hi - lo + 1)))
            .reduce_with(|a, b| a.merge(b))
            .expect("at least one chunk");
        return table.sum_squared_counts();
    }
    let _ = sequential;
    count_table_range(pows, codec, m, 1..=n, capacity_for(n)).sum_squared_counts()
}

fn count_via_sort(
    pows: &[Vec<u64>],
    codec: &KeyCodec,
    m: usize,
    n: u64,
    sequential: bool,
) -> u128 {
    let per_k1 = (n as usize).pow((m - 1) as u32);
    let total = per_k1 * n as usize;
    let mut keys: Vec<u128> = vec![0; total];
    let fill = |k1: u64, slice: &mut [u128]| {
        let mut i = 0;
        enumerate_suffix(pows, codec, m, k1, &mut |key| {
            slice[i] = key;
            i += 1;
        });
        debug_assert_eq!(i, slice.len());
    };
    #[cfg(feature = "parallel")]
    if !sequential {
        use rayon::prelude::*;
        keys.par_chunks_mut(per_k1)
            .enumerate()
            .for_each(|(i, slice)| fill(i as u64 + 1, slice));
        keys.par_sort_unstable();
        return run_length_energy(&keys);
    }
    let _ = sequential;
    keys.chunks_mut(per_k1)
        .enumerate()
        .for_each(|(i, slice)| fill(i as u64 + 1, slice));
    keys.sort_unstable();
    run_length_energy(&keys)
}

fn run_length_energy(sorted_keys: &[u128]) -> u128 {
    let mut j: u128 = 0;
    let mut run_len: u128 = 0;
    let mut prev: u128 = u128::MAX;
    for &k in sorted_keys {
        if k == prev {
            run_len += 1;
        } else {
            j += run_len * run_len;
            prev = k;
            run_len = 1;
        }
    }
    j + run_len * run_len
}

#[cfg(feature = "parallel")]
fn split_range(n: u64, parts: u64) -> Vec<(u64, u64)> {
    let parts = parts.min(n).max(1);
    (0..parts)
        .map(|i| {
            let lo = i * n / parts + 1;
            let hi = (i + 1) * n / parts;
            (lo, hi)
        })
        .filter(|(lo, hi)| lo <= hi)
        .collect()
}

/// Exact `J` by meet-in-the-middle with an explicit tuple budget.
pub fn mean_value_exact_with(
    n: u64,
    d: usize,
    m: usize,
    strategy: CountStrategy,
    budget: u128,
) -> Result<MeanValueRecord, WeylError> {
    mean_value_engine(n, d, m, strategy, budget, false)
}

/// Exact `J` with the default strategy and budget.
pub fn mean_value_exact(n: u64, d: usize, m: usize) -> Result<MeanValueRecord, WeylError> {
    mean_value_exact_with(n, d, m, CountStrategy::Auto, DEFAULT_TUPLE_BUDGET)
}

/// Sequential reference engine: identical logic, never touches the worker
/// pool. Used by the benches to price the parallel partition.
pub fn mean_value_exact_sequential(
    n: u64,
    d: usize,
    m: usize,
    strategy: CountStrategy,
    budget: u128,
) -> Result<MeanValueRecord, WeylError> {
    mean_value_engine(n, d, m, strategy, budget, true)
}

fn mean_value_engine(
    n: u64,
    d: usize,
    m: usize,
    strategy: CountStrategy,
    budget: u128,
    sequential: bool,
) -> Result<MeanValueRecord, WeylError> {
    if d == 0 || m == 0 || n == 0 {
        return Err(WeylError::EmptyProblem);
    }
    let tuples = (n as u128).checked_pow(m as u32).ok_or(
        WeylError::BudgetExceeded {
            required: u128::MAX,
            budget,
        },
    )?;
    if tuples > budget {
        return Err(WeylError::BudgetExceeded {
            required: tuples,
            budget,
        });
    }
    let codec = KeyCodec::new(d, m, n)?;
    let pows = power_table(d, n)?;
    // Distinct keys are bounded by both the tuple count and the key space.
    let distinct_bound = tuples.min(codec.max_key + 1).min(usize::MAX as u128) as usize;
    let use_hash = match strategy {
        CountStrategy::Hash => true,
        CountStrategy::Sort => false,
        CountStrategy::Auto => {
            // 16 bytes per slot, padded to a power of two at load 3/4;
            // fall back to the sort path when that would not stay in memory.
            let table_bytes = (distinct_bound as u128 * 4 / 3).next_power_of_two() * 16;
            table_bytes <= 1 << 31
        }
    };
    let j = if use_hash && codec.max_key <= u64::MAX as u128 {
        count_via_table(&pows, &codec, m, n, distinct_bound, sequential)
    } else {
        count_via_sort(&pows, &codec, m, n, sequential)
    };
    Ok(MeanValueRecord { d, m, n, j })
}

/// Independent oracle: full 2m-fold enumeration checking the power-sum
/// system directly. Exponential; guarded by `budget` on `N^{2m}`.
pub fn mean_value_brute(n: u64, d: usize, m: usize, budget: u128) -> Result<u128, WeylError> {
    if d == 0 || m == 0 || n == 0 {
        return Err(WeylError::EmptyProblem);
    }
    let leaves = (n as u128)
        .checked_pow(2 * m as u32)
        .ok_or(WeylError::BudgetExceeded {
            required: u128::MAX,
            budget,
        })?;
    if leaves > budget {
        return Err(WeylError::BudgetExceeded {
            required: leaves,
            budget,
        });
    }
    let pows = power_table(d, n)?;
    let vars = 2 * m;
    let mut digits = vec![1u64; vars];
    // Signed accumulator per degree: +k^j for the first m, −k^j for the rest.
    let mut sums = vec![0i64; d];
    for (pos, &dig) in digits.iter().enumerate() {
        let sign = if pos < m { 1 } else { -1 };
        for j in 0..d {
            sums[j] += sign * pows[(dig - 1) as usize][j] as i64;
        }
    }
    let mut count: u128 = 0;
    loop {
        if sums.iter().all(|&s| s == 0) {
            count += 1;
        }
        let mut pos = vars;
        loop {
            if pos == 0 {
                return Ok(count);
            }
            pos -= 1;
            let sign = if pos < m { 1i64 } else { -1i64 };
            let cur = digits[pos];
            if cur < n {
                digits[pos] = cur + 1;
                for j in 0..d {
                    sums[j] += sign * (pows[cur as usize][j] as i64 - pows[(cur - 1) as usize][j] as i64);
                }
                break;
            }
            digits[pos] = 1;
            for j in 0..d {
                sums[j] -= sign * (pows[(n - 1) as usize][j] as i64 - pows[0][j] as i64);
            }
        }
    }
}

// --- quadrature --------------------------------------------------------------

/// Quadrature scheme for `∫_{T^d} |S_N|^s`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub enum Scheme {
    /// Randomly shifted rank-1 lattice: `shifts` independent copies of an
    /// `n_points` lattice; the spread of the per-shift averages yields an
    /// unbiased standard error.
    Lattice { points: u64, shifts: u32 },
    /// Plain seeded Monte Carlo.
    MonteCarlo { samples: u64 },
}

impl Scheme {
    /// Default lattice size from the dimension: `2^16·d` points, 8 shifts.
    pub fn default_lattice(d: usize) -> Self {
        Scheme::Lattice {
            points: (1u64 << 16) * d as u64,
            shifts: 8,
        }
    }
}

/// Estimate of an `L^s` norm with its standard error (on the moment).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LsEstimate {
    pub moment: f64,
    pub moment_std_error: f64,
    pub norm: f64,
    pub s: f64,
    pub scheme: Scheme,
    pub seed: u64,
}

/// `(∫ |S_N|^s)^{1/s}` by the configured scheme, with a reported standard
/// error. Exact for nothing, honest about everything.
pub fn ls_norm_estimate(
    n: u64,
    d: usize,
    s: f64,
    scheme: Scheme,
    seed: u64,
) -> Result<LsEstimate, WeylError> {
    if d == 0 || n == 0 || s <= 0.0 {
        return Err(WeylError::EmptyProblem);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (moment, se) = match scheme {
        Scheme::Lattice { points, shifts } => {
            if shifts < 2 {
                return Err(WeylError::NoErrorEstimate);
            }
            // Generating vector coprime to the point count, so each copy of
            // the lattice visits `points` distinct nodes; the random shifts
            // make the estimator unbiased so the spread is a real error bar.
            let z: Vec<u64> = (0..d)
                .map(|_| loop {
                    let cand = rng.gen_range(1..points);
                    if num::integer::gcd(cand, points) == 1 {
                        break cand;
                    }
                })
                .collect();
            let shift_means: Vec<f64> = (0..shifts)
                .map(|_| {
                    let delta: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
                    let pts = (0..points).map(|i| {
                        TorusPoint::new(
                            z.iter()
                                .zip(&delta)
                                .map(|(&zj, &dj)| {
                                    ((i as u128 * zj as u128 % points as u128) as f64
                                        / points as f64
                                        + dj)
                                        .fract()
                                })
                                .collect(),
                        )
                    });
                    lattice_moment(n, s, pts, points as usize)
                })
                .collect();
            let r = shift_means.len() as f64;
            let mean = pairwise_sum(&shift_means) / r;
            let var = shift_means.iter().map(|q| (q - mean) * (q - mean)).sum::<f64>()
                / (r - 1.0);
            (mean, (var / r).sqrt())
        }
        Scheme::MonteCarlo { samples } => {
            if samples < 2 {
                return Err(WeylError::NoErrorEstimate);
            }
            let vals: Vec<f64> = (0..samples)
                .map(|_| {
                    let t = TorusPoint::new((0..d).map(|_| rng.gen::<f64>()).collect());
                    weyl_sum(n, &t).norm().powf(s)
                })
                .collect();
            let mean = pairwise_sum(&vals) / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (vals.len() as f64 - 1.0);
            (mean, (var / vals.len() as f64).sqrt())
        }
    };
    Ok(LsEstimate {
        moment,
        moment_std_error: se,
        norm: moment.powf(1.0 / s),
        s,
        scheme,
        seed,
    })
}

/// Default estimation pipeline for non-even exponents: the `2^16·d`-point
/// shifted lattice rule plus a seeded Monte Carlo cross-check. Returns
/// both estimates; they should agree within combined error bars.
pub fn ls_norm_default(
    n: u64,
    d: usize,
    s: f64,
    seed: u64,
) -> Result<(LsEstimate, LsEstimate), WeylError> {
    let lattice = ls_norm_estimate(n, d, s, Scheme::default_lattice(d), seed)?;
    let mc = ls_norm_estimate(
        n,
        d,
        s,
        Scheme::MonteCarlo {
            samples: 1 << 14,
        },
        seed ^ 0x6d63,
    )?;
    Ok((lattice, mc))
}

fn lattice_moment(
    n: u64,
    s: f64,
    pts: impl Iterator<Item = TorusPoint>,
    count: usize,
) -> f64 {
    let points: Vec<TorusPoint> = pts.collect();
    let vals: Vec<f64> = crate::parallel::indexed_map(count, |i| {
        weyl_sum(n, &points[i]).norm().powf(s)
    });
    pairwise_sum(&vals) / count as f64
}

/// Least-squares slope of `log J` against `log N`. Records must share
/// `(d, m)`; at least four records, not all at the same `N`.
pub fn exponent_fit(records: &[MeanValueRecord]) -> Result<FitResult, WeylError> {
    if records.is_empty() {
        return Err(FitError::InsufficientData { need: 4, got: 0 }.into());
    }
    let (d, m) = (records[0].d, records[0].m);
    if records.iter().any(|r| r.d != d || r.m != m) {
        return Err(WeylError::MismatchedRecords);
    }
    let xs: Vec<f64> = records.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = records.iter().map(|r| r.j as f64).collect();
    Ok(log_log_fit(&xs, &ys, 4)?)
}
