//! Integer-valued polynomials with rational coefficients.
//!
//! A polynomial `P(x) = a_0 + a_1 x + … + a_d x^d` qualifies when it maps
//! `ℤ` into `ℤ`. Coefficients are stored over one common denominator, which
//! makes the `a_j = b_j·u/v` decomposition canonical. All evaluation is
//! exact 128-bit arithmetic with mandatory overflow detection: the CLI caps
//! (`d ≤ 8`, `N ≤ 2^12`) keep every power sum in range, and a detected
//! overflow beats a silently wrapped one in a verification tool.

use num::integer::{gcd, lcm};
use num::Zero;
use thiserror::Error;

use crate::exponent::{parse_rat, Rat};

/// Degree cap honored by the CLI.
pub const MAX_DEGREE: usize = 8;
/// Averaging-parameter cap honored by the CLI.
pub const MAX_N: u64 = 1 << 12;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PolyError {
    #[error("integer overflow while evaluating polynomial")]
    IntegerOverflow,
    #[error("P({k}) is not an integer")]
    NonIntegerValue { k: i64 },
    #[error("degenerate input: all non-constant coefficients vanish")]
    DegenerateInput,
    #[error("invalid polynomial: {0}")]
    InvalidPolynomial(String),
}

/// `a_j = b_j·u/v` for `j = 1..d`, with `gcd(b_1,…,b_d) = 1` and `v` the
/// least common denominator of `a_1..a_d`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decomposition {
    pub u: i128,
    pub v: i128,
    pub b: Vec<i128>,
}

/// Polynomial with rational coefficients over a common denominator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntPolynomial {
    /// Numerators of `a_0..a_d` over `denominator`.
    numerators: Vec<i128>,
    /// Common positive denominator.
    denominator: i128,
}

impl IntPolynomial {
    /// Build from exact rational coefficients `a_0..a_d` (low to high).
    /// Trailing zero coefficients are trimmed; the result must have
    /// degree ≥ 1 and a nonzero leading coefficient.
    pub fn new(coeffs: &[Rat]) -> Result<Self, PolyError> {
        let mut coeffs = coeffs.to_vec();
        while coeffs.len() > 1 && coeffs.last().is_some_and(Rat::is_zero) {
            coeffs.pop();
        }
        if coeffs.len() < 2 {
            return Err(PolyError::InvalidPolynomial(
                "degree must be at least 1".into(),
            ));
        }
        let mut den: i128 = 1;
        for c in &coeffs {
            den = lcm(den, *c.denom());
        }
        let numerators = coeffs
            .iter()
            .map(|c| {
                c.numer()
                    .checked_mul(den / c.denom())
                    .ok_or(PolyError::IntegerOverflow)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            numerators,
            denominator: den,
        })
    }

    /// Parse `"c0,c1,…,cd"` where every token is an integer or `num/den`.
    pub fn parse(s: &str) -> Result<Self, PolyError> {
        let coeffs = s
            .split(',')
            .map(|tok| {
                parse_rat(tok)
                    .map_err(|_| PolyError::InvalidPolynomial(format!("bad coefficient {tok:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(&coeffs)
    }

    /// Convenience for integer coefficients.
    pub fn from_integers(coeffs: &[i128]) -> Result<Self, PolyError> {
        let rats: Vec<Rat> = coeffs.iter().map(|&c| Rat::from_integer(c)).collect();
        Self::new(&rats)
    }

    pub fn degree(&self) -> usize {
        self.numerators.len() - 1
    }

    pub fn coefficient(&self, j: usize) -> Rat {
        Rat::new(self.numerators[j], self.denominator)
    }

    pub fn coefficients(&self) -> Vec<Rat> {
        (0..=self.degree()).map(|j| self.coefficient(j)).collect()
    }

    /// Exact `P(k)`. Errors on 128-bit overflow and when the value is not
    /// an integer (the polynomial then fails to map `ℤ` into `ℤ` at `k`).
    pub fn eval(&self, k: i64) -> Result<i128, PolyError> {
        let num = self.eval_numerator(k)?;
        if num % self.denominator != 0 {
            return Err(PolyError::NonIntegerValue { k });
        }
        Ok(num / self.denominator)
    }

    /// Horner evaluation of the numerator polynomial `den·P`.
    fn eval_numerator(&self, k: i64) -> Result<i128, PolyError> {
        let k = i128::from(k);
        let mut acc: i128 = 0;
        for &num in self.numerators.iter().rev() {
            acc = acc
                .checked_mul(k)
                .and_then(|t| t.checked_add(num))
                .ok_or(PolyError::IntegerOverflow)?;
        }
        Ok(acc)
    }

    /// `P(1), P(2), …, P(n)`.
    pub fn values(&self, n: u64) -> Result<Vec<i128>, PolyError> {
        (1..=n)
            .map(|k| {
                let k = i64::try_from(k).map_err(|_| PolyError::IntegerOverflow)?;
                self.eval(k)
            })
            .collect()
    }

    /// True iff `P(j) ∈ ℤ` for `j = 0..d`.
    ///
    /// This finite criterion is equivalent to integrality on all of `ℤ`:
    /// writing `P` in the binomial basis, `P(x) = Σ_j Δ^j P(0) · C(x, j)`,
    /// the Newton coefficients `Δ^j P(0)` are integer combinations of
    /// `P(0..d)`, and `C(x, j)` is an integer for every integer `x`.
    pub fn check_integer_valued(&self) -> bool {
        (0..=self.degree() as i64).all(|j| match self.eval_numerator(j) {
            Ok(num) => num % self.denominator == 0,
            Err(_) => false,
        })
    }

    /// Least-common-denominator decomposition of the non-constant part:
    /// `a_j = b_j·u/v` with `v` minimal and `gcd(b_1,…,b_d) = 1`.
    pub fn decompose(&self) -> Result<Decomposition, PolyError> {
        let tail: Vec<Rat> = (1..=self.degree()).map(|j| self.coefficient(j)).collect();
        if tail.iter().all(Rat::is_zero) {
            return Err(PolyError::DegenerateInput);
        }
        let mut v: i128 = 1;
        for c in &tail {
            v = lcm(v, *c.denom());
        }
        let scaled: Vec<i128> = tail
            .iter()
            .map(|c| {
                c.numer()
                    .checked_mul(v / c.denom())
                    .ok_or(PolyError::IntegerOverflow)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut u: i128 = 0;
        for &m in &scaled {
            u = gcd(u, m.abs());
        }
        debug_assert!(u > 0);
        let b: Vec<i128> = scaled.iter().map(|&m| m / u).collect();
        Ok(Decomposition { u, v, b })
    }

    /// Whether `k ↦ P(k)` is injective on `{1, …, n}`.
    pub fn injective_on(&self, n: u64) -> Result<bool, PolyError> {
        let mut vals = self.values(n)?;
        vals.sort_unstable();
        Ok(vals.windows(2).all(|w| w[0] != w[1]))
    }

    /// The common denominator of a degree-`d` integer-valued polynomial
    /// divides `∏_{0≤i<j≤d}(j−i)` (solve the Vandermonde system in the
    /// coefficients from the integer values `P(0..d)`).
    pub fn denominator_divides_vandermonde(&self) -> bool {
        let d = self.degree() as i128;
        let mut product: i128 = 1;
        for i in 0..d {
            for j in (i + 1)..=d {
                product = match product.checked_mul(j - i) {
                    Some(p) => p,
                    None => return false,
                };
            }
        }
        product % self.denominator == 0
    }
}

impl std::fmt::Display for IntPolynomial {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = (0..=self.degree())
            .map(|j| self.coefficient(j).to_string())
            .collect();
        write!(f, "{}", parts.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(s: &str) -> IntPolynomial {
        IntPolynomial::parse(s).unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(poly("0,0,1").eval(5).unwrap(), 25);
        // x(x-1)/2
        assert_eq!(poly("0,-1/2,1/2").eval(4).unwrap(), 6);
        assert_eq!(poly("0,1,0,2").eval(3).unwrap(), 57);
    }

    #[test]
    fn eval_overflow_detected() {
        let p = poly("0,0,0,0,0,0,0,0,1"); // x^8
        assert!(p.eval(1 << 12).is_ok());
        assert_eq!(p.eval(i64::MAX / 2), Err(PolyError::IntegerOverflow));
    }

    #[test]
    fn integer_valued_examples() {
        assert!(poly("0,1/2,1/2").check_integer_valued()); // x(x+1)/2
        assert!(!poly("0,1/2,0,0").check_integer_valued()); // x/2 after trim
        assert!(poly("0,0,0,1").check_integer_valued()); // x^3
        assert!(poly("0,1/3,1/2,1/6").check_integer_valued()); // C(x+2,3)
    }

    #[test]
    fn non_integer_value_reported() {
        let p = poly("0,1/2");
        assert_eq!(p.eval(3), Err(PolyError::NonIntegerValue { k: 3 }));
        assert_eq!(p.eval(4), Ok(2));
    }

    #[test]
    fn decompose_examples() {
        let d = poly("0,0,1").decompose().unwrap();
        assert_eq!((d.u, d.v, d.b.as_slice()), (1, 1, &[0, 1][..]));
        let d = poly("0,1/2,1/2").decompose().unwrap();
        assert_eq!((d.u, d.v, d.b.as_slice()), (1, 2, &[1, 1][..]));
        let d = poly("0,3,6").decompose().unwrap();
        assert_eq!((d.u, d.v, d.b.as_slice()), (3, 1, &[1, 2][..]));
    }

    #[test]
    fn decompose_reconstructs_coefficients() {
        for s in ["0,1/2,1/2", "0,3,6", "1,-2/3,0,1/3", "0,1/3,1/2,1/6"] {
            let p = poly(s);
            let dec = p.decompose().unwrap();
            for j in 1..=p.degree() {
                let rebuilt = Rat::new(dec.b[j - 1] * dec.u, dec.v);
                assert_eq!(rebuilt, p.coefficient(j), "coefficient {j} of {s}");
            }
            let g = dec.b.iter().fold(0i128, |acc, &b| gcd(acc, b.abs()));
            assert_eq!(g, 1, "gcd of b for {s}");
        }
    }

    #[test]
    fn trailing_zeros_trimmed() {
        let p = poly("0,1/2,0,0");
        assert_eq!(p.degree(), 1);
        assert!(IntPolynomial::parse("3").is_err());
        assert!(IntPolynomial::parse("0,0,0").is_err());
    }

    #[test]
    fn vandermonde_divisibility() {
        for s in ["0,1/2,1/2", "0,1/3,1/2,1/6", "0,0,1", "0,-1/2,1/2"] {
            assert!(poly(s).denominator_divides_vandermonde(), "{s}");
        }
    }

    #[test]
    fn injectivity() {
        assert!(poly("0,0,1").injective_on(100).unwrap());
        // x^2 - 5x collides: P(2) = P(3) = -6
        assert!(!poly("0,-5,1").injective_on(5).unwrap());
    }
}
