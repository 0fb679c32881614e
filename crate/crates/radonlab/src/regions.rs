//! Exact rational geometry of the exponent regions.
//!
//! Every region is a finite list of rational linear constraints in
//! `(1/p, 1/q)` — and `λ` where relevant — each carrying its own strict
//! or non-strict flag. Strictness is never blurred: the gap between a `>`
//! range and a `≥` necessary region is an open boundary question, not a
//! rounding choice. No floating point enters this module.

use num::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exponent::{Exponent, ExponentError, Rat};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RegionsError {
    #[error(transparent)]
    Exponent(#[from] ExponentError),
    #[error("region {0} requires a lambda argument")]
    MissingLambda(String),
    #[error("degree must be at least {min}, got {got}")]
    DegreeTooSmall { min: usize, got: usize },
    #[error("containment check failed: {0}")]
    ContainmentFailed(String),
}

/// A point `(1/p, 1/q)` of the exponent square, reciprocals stored exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExponentPair {
    inv_p: Rat,
    inv_q: Rat,
}

impl ExponentPair {
    pub fn new(p: Exponent, q: Exponent) -> Self {
        Self {
            inv_p: p.reciprocal(),
            inv_q: q.reciprocal(),
        }
    }

    pub fn from_reciprocals(inv_p: Rat, inv_q: Rat) -> Result<Self, RegionsError> {
        // Validate via the exponent constructor: reciprocals lie in [0, 1].
        Exponent::from_reciprocal(inv_p)?;
        Exponent::from_reciprocal(inv_q)?;
        Ok(Self { inv_p, inv_q })
    }

    pub fn inv_p(&self) -> Rat {
        self.inv_p
    }

    pub fn inv_q(&self) -> Rat {
        self.inv_q
    }

    pub fn p(&self) -> Exponent {
        Exponent::from_reciprocal(self.inv_p).expect("validated on construction")
    }

    pub fn q(&self) -> Exponent {
        Exponent::from_reciprocal(self.inv_q).expect("validated on construction")
    }
}

/// Conjugate exponent `p'` with `1/p + 1/p' = 1`, exactly.
pub fn dual(p: Exponent) -> Result<Exponent, RegionsError> {
    Ok(p.conjugate()?)
}

/// One rational linear constraint
/// `a·(1/p) + b·(1/q) + c·λ + constant {>, ≥} 0`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Constraint {
    pub label: String,
    pub coef_inv_p: Rat,
    pub coef_inv_q: Rat,
    pub coef_lambda: Rat,
    pub constant: Rat,
    pub strict: bool,
}

impl Constraint {
    fn plain(label: &str, a: Rat, b: Rat, constant: Rat, strict: bool) -> Self {
        Self {
            label: label.to_string(),
            coef_inv_p: a,
            coef_inv_q: b,
            coef_lambda: Rat::zero(),
            constant,
            strict,
        }
    }

    pub fn evaluate(&self, pair: &ExponentPair, lambda: Rat) -> Rat {
        self.coef_inv_p * pair.inv_p
            + self.coef_inv_q * pair.inv_q
            + self.coef_lambda * lambda
            + self.constant
    }

    pub fn satisfied(&self, pair: &ExponentPair, lambda: Rat) -> bool {
        let v = self.evaluate(pair, lambda);
        if self.strict {
            v.is_positive()
        } else {
            !v.is_negative()
        }
    }
}

/// The named exponent regions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    /// Sufficient range for quadratic polynomials:
    /// `1/q ≤ 1/p`, `2/q > 1/p`, `1/q > 2/p − 1`.
    T2,
    /// Sufficient triangular range for degree `d`:
    /// `1/q ≤ 1/p`, `(d²+d+1)/q > (d²+d−1)/p`,
    /// `(d²+d−1)/q > (d²+d+1)/p − 2`.
    PolyRange { d: usize },
    /// Necessary region for the one-dimensional averages:
    /// `1/q ≤ 1/p`, `d/q ≥ (d−1)/p`, `(d−1)/q ≥ d/p − 1`.
    Necessary { d: usize },
    /// Necessary region for the moment-curve averages on `ℤ^d`:
    /// `1/q ≤ 1/p`, `(d²+d)/q ≥ (d²+d−2)/p`, `(d²+d−2)/q ≥ (d²+d)/p − 2`.
    HighNecessary { d: usize },
    /// Conjectured exact region for the fractional integral:
    /// `1−λ ≤ d(1/p−1/q)`, `1/q < λ`, `1−λ < 1/p`.
    ConjI { d: usize },
}

impl Region {
    pub fn name(&self) -> String {
        match self {
            Region::T2 => "t2".into(),
            Region::PolyRange { d } => format!("polyrange(d={d})"),
            Region::Necessary { d } => format!("necessary(d={d})"),
            Region::HighNecessary { d } => format!("high-necessary(d={d})"),
            Region::ConjI { d } => format!("conj-i(d={d})"),
        }
    }

    pub fn needs_lambda(&self) -> bool {
        matches!(self, Region::ConjI { .. })
    }

    pub fn constraints(&self) -> Vec<Constraint> {
        let one = Rat::one();
        let int = |v: i128| Rat::from_integer(v);
        match *self {
            Region::T2 => vec![
                Constraint::plain("1/q <= 1/p", one, -one, Rat::zero(), false),
                Constraint::plain("2/q > 1/p", -one, int(2), Rat::zero(), true),
                Constraint::plain("1/q > 2/p - 1", int(-2), one, one, true),
            ],
            Region::PolyRange { d } => {
                let dd = int((d * d + d) as i128);
                vec![
                    Constraint::plain("1/q <= 1/p", one, -one, Rat::zero(), false),
                    Constraint::plain(
                        "(d^2+d+1)/q > (d^2+d-1)/p",
                        -(dd - one),
                        dd + one,
                        Rat::zero(),
                        true,
                    ),
                    Constraint::plain(
                        "(d^2+d-1)/q > (d^2+d+1)/p - 2",
                        -(dd + one),
                        dd - one,
                        int(2),
                        true,
                    ),
                ]
            }
            Region::Necessary { d } => {
                let dr = int(d as i128);
                vec![
                    Constraint::plain("1/q <= 1/p", one, -one, Rat::zero(), false),
                    Constraint::plain("d/q >= (d-1)/p", -(dr - one), dr, Rat::zero(), false),
                    Constraint::plain("(d-1)/q >= d/p - 1", -dr, dr - one, one, false),
                ]
            }
            Region::HighNecessary { d } => {
                let dd = int((d * d + d) as i128);
                vec![
                    Constraint::plain("1/q <= 1/p", one, -one, Rat::zero(), false),
                    Constraint::plain(
                        "(d^2+d)/q >= (d^2+d-2)/p",
                        -(dd - int(2)),
                        dd,
                        Rat::zero(),
                        false,
                    ),
                    Constraint::plain(
                        "(d^2+d-2)/q >= (d^2+d)/p - 2",
                        -dd,
                        dd - int(2),
                        int(2),
                        false,
                    ),
                ]
            }
            Region::ConjI { d } => {
                let dr = int(d as i128);
                vec![
                    Constraint {
                        label: "1 - lambda <= d(1/p - 1/q)".into(),
                        coef_inv_p: dr,
                        coef_inv_q: -dr,
                        coef_lambda: one,
                        constant: -one,
                        strict: false,
                    },
                    Constraint {
                        label: "1/q < lambda".into(),
                        coef_inv_p: Rat::zero(),
                        coef_inv_q: -one,
                        coef_lambda: one,
                        constant: Rat::zero(),
                        strict: true,
                    },
                    Constraint {
                        label: "1 - lambda < 1/p".into(),
                        coef_inv_p: one,
                        coef_inv_q: Rat::zero(),
                        coef_lambda: one,
                        constant: -one,
                        strict: true,
                    },
                ]
            }
        }
    }
}

/// Evaluated constraint, for report output.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConstraintEval {
    pub label: String,
    pub value: String,
    pub strict: bool,
    pub satisfied: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Verdict {
    pub region: String,
    pub member: bool,
    pub constraints: Vec<ConstraintEval>,
}

/// Exact membership with strictness honored per constraint.
pub fn member(
    region: Region,
    pair: &ExponentPair,
    lambda: Option<Rat>,
) -> Result<Verdict, RegionsError> {
    let lambda = match (region.needs_lambda(), lambda) {
        (true, None) => return Err(RegionsError::MissingLambda(region.name())),
        (true, Some(l)) => l,
        (false, _) => Rat::zero(),
    };
    let evals: Vec<ConstraintEval> = region
        .constraints()
        .iter()
        .map(|c| ConstraintEval {
            label: c.label.clone(),
            value: c.evaluate(pair, lambda).to_string(),
            strict: c.strict,
            satisfied: c.satisfied(pair, lambda),
        })
        .collect();
    Ok(Verdict {
        member: evals.iter().all(|e| e.satisfied),
        region: region.name(),
        constraints: evals,
    })
}

/// Exact rational interval with per-endpoint open/closed flags.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatInterval {
    pub lo: Rat,
    pub lo_closed: bool,
    pub hi: Rat,
    pub hi_closed: bool,
}

impl RatInterval {
    pub fn contains(&self, x: Rat) -> bool {
        let above = if self.lo_closed { x >= self.lo } else { x > self.lo };
        let below = if self.hi_closed { x <= self.hi } else { x < self.hi };
        above && below
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && !(self.lo_closed && self.hi_closed))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpecialRange {
    /// Duality line `q = p'` inside the degree-`d` sufficient range:
    /// `2 − 2/(d²+d+1) < p ≤ 2`.
    PolyRangeSpecial,
    /// Duality line inside the 1D necessary region: `2 − 1/d ≤ p ≤ 2`.
    PolyRangeConj,
    /// Duality line inside the dD necessary region: `2 − 2/(d²+d) ≤ p ≤ 2`.
    HighSpecial,
}

/// The `q = p'` specializations as exact intervals in `p`.
pub fn special_range(d: usize, variant: SpecialRange) -> Result<RatInterval, RegionsError> {
    if d < 1 {
        return Err(RegionsError::DegreeTooSmall { min: 1, got: d });
    }
    let two = Rat::from_integer(2);
    let dd = (d * d + d) as i128;
    Ok(match variant {
        SpecialRange::PolyRangeSpecial => RatInterval {
            lo: two - Rat::new(2, dd + 1),
            lo_closed: false,
            hi: two,
            hi_closed: true,
        },
        SpecialRange::PolyRangeConj => RatInterval {
            lo: two - Rat::new(1, d as i128),
            lo_closed: true,
            hi: two,
            hi_closed: true,
        },
        SpecialRange::HighSpecial => RatInterval {
            lo: two - Rat::new(2, dd),
            lo_closed: true,
            hi: two,
            hi_closed: true,
        },
    })
}

/// The two bridges between the improving and fractional families.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IaDirection {
    /// From an improving pair, the fractional inequality holds for every
    /// `λ` with `0 < 1−λ < min{1, d(1/p−1/q)}`.
    ImprovingToFractional,
    /// The improving pair follows from the fractional inequality at the
    /// single order `λ = 1 − d(1/p−1/q)`.
    FractionalToImproving,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IaBridge {
    LambdaInterval(RatInterval),
    LambdaPoint(Rat),
}

pub fn ia_bridge(pair: &ExponentPair, d: usize, direction: IaDirection) -> IaBridge {
    let gap = Rat::from_integer(d as i128) * (pair.inv_p() - pair.inv_q());
    match direction {
        IaDirection::ImprovingToFractional => {
            let cap = gap.min(Rat::one());
            IaBridge::LambdaInterval(RatInterval {
                lo: Rat::one() - cap,
                lo_closed: false,
                hi: Rat::one(),
                hi_closed: false,
            })
        }
        IaDirection::FractionalToImproving => IaBridge::LambdaPoint(Rat::one() - gap),
    }
}

/// λ-gates for passing improving bounds to fractional ones. Part 1 is
/// the one-dimensional gate `0 < 1−λ < d(1/p−1/q)`; part 2 the
/// moment-curve gate `0 < 1−λ < (d(d+1)/2)(1/p−1/q)`.
pub fn fractional_gate(part: u8, d: usize, pair: &ExponentPair, lambda: Rat) -> bool {
    let slope = match part {
        1 => Rat::from_integer(d as i128),
        2 => Rat::new((d * (d + 1)) as i128, 2),
        _ => return false,
    };
    let one_minus = Rat::one() - lambda;
    one_minus.is_positive() && one_minus < slope * (pair.inv_p() - pair.inv_q())
}

// ---------------------------------------------------------------------------
// Vertex enumeration and the strict-containment proof.
// ---------------------------------------------------------------------------

fn line_of(c: &Constraint) -> (Rat, Rat, Rat) {
    (c.coef_inv_p, c.coef_inv_q, c.constant)
}

fn intersect(l1: (Rat, Rat, Rat), l2: (Rat, Rat, Rat)) -> Option<(Rat, Rat)> {
    let det = l1.0 * l2.1 - l2.0 * l1.1;
    if det.is_zero() {
        return None;
    }
    // a·x + b·y + c = 0 for both lines.
    let x = (l1.1 * l2.2 - l2.1 * l1.2) / det;
    let y = (l2.0 * l1.2 - l1.0 * l2.2) / det;
    Some((x, y))
}

/// Vertices of the closure of a 2D region (constraints made non-strict),
/// clipped to the exponent square `[0,1]²`.
pub fn closure_vertices(constraints: &[Constraint]) -> Vec<(Rat, Rat)> {
    let zero = Rat::zero();
    let one = Rat::one();
    let mut lines: Vec<(Rat, Rat, Rat)> = constraints.iter().map(line_of).collect();
    // Square edges x = 0, x = 1, y = 0, y = 1.
    lines.push((one, zero, zero));
    lines.push((one, zero, -one));
    lines.push((zero, one, zero));
    lines.push((zero, one, -one));
    let mut vertices: Vec<(Rat, Rat)> = Vec::new();
    for i in 0..lines.len() {
        for j in (i + 1)..lines.len() {
            let Some((x, y)) = intersect(lines[i], lines[j]) else {
                continue;
            };
            if x < zero || x > one || y < zero || y > one {
                continue;
            }
            let inside = constraints
                .iter()
                .all(|c| !(c.coef_inv_p * x + c.coef_inv_q * y + c.constant).is_negative());
            if inside && !vertices.contains(&(x, y)) {
                vertices.push((x, y));
            }
        }
    }
    vertices
}

/// Certificate that the open sufficient range of degree `d` lies strictly
/// inside the necessary region (relative to the shared closed half-plane
/// `1/q ≤ 1/p`):
///
/// 1. every vertex of the closure satisfies the two necessary-region
///    constraints non-strictly;
/// 2. each of those constraint lines touches at most one closure vertex,
///    so no edge of the closure lies inside a line;
/// 3. a vertex lying on such a line is itself outside the open range.
///
/// Any point of the open range is a convex combination of closure vertices
/// with positive weight on a vertex off the line, hence satisfies both
/// necessary constraints strictly.
pub fn verify_polyrange_inside_necessary(d: usize) -> Result<Vec<(Rat, Rat)>, RegionsError> {
    if d < 2 {
        return Err(RegionsError::DegreeTooSmall { min: 2, got: d });
    }
    let poly = Region::PolyRange { d }.constraints();
    let necessary = Region::Necessary { d }.constraints();
    let vertices = closure_vertices(&poly);
    if vertices.len() < 3 {
        return Err(RegionsError::ContainmentFailed(format!(
            "expected a 2D closure, found {} vertices",
            vertices.len()
        )));
    }
    // The shared constraint 1/q <= 1/p is index 0 in both lists.
    for c in &necessary[1..] {
        let mut on_line: Vec<(Rat, Rat)> = Vec::new();
        for &(x, y) in &vertices {
            let v = c.coef_inv_p * x + c.coef_inv_q * y + c.constant;
            if v.is_negative() {
                return Err(RegionsError::ContainmentFailed(format!(
                    "closure vertex ({x}, {y}) violates {}",
                    c.label
                )));
            }
            if v.is_zero() {
                on_line.push((x, y));
            }
        }
        if on_line.len() > 1 {
            return Err(RegionsError::ContainmentFailed(format!(
                "{} supports an entire closure edge",
                c.label
            )));
        }
        for (x, y) in on_line {
            let pair = ExponentPair::from_reciprocals(x, y)?;
            let strictly_inside = poly
                .iter()
                .all(|pc| pc.satisfied(&pair, Rat::zero()));
            if strictly_inside {
                return Err(RegionsError::ContainmentFailed(format!(
                    "open-range point ({x}, {y}) sits on {}",
                    c.label
                )));
            }
        }
    }
    Ok(vertices)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(p: &str, q: &str) -> ExponentPair {
        ExponentPair::new(p.parse().unwrap(), q.parse().unwrap())
    }

    #[test]
    fn t2_membership_example() {
        // p = 7/4, q = 7/3: 3/7 <= 4/7, 6/7 > 4/7, 3/7 > 1/7.
        let v = member(Region::T2, &pair("7/4", "7/3"), None).unwrap();
        assert!(v.member);
        assert_eq!(v.constraints.len(), 3);
        // q just below p' fails the third constraint at the boundary p = 3/2.
        let v = member(Region::T2, &pair("3/2", "3"), None).unwrap();
        assert!(!v.member, "boundary of the strict constraint excluded");
    }

    #[test]
    fn polyrange_at_p_equals_q_equals_two() {
        let v = member(Region::PolyRange { d: 3 }, &pair("2", "2"), None).unwrap();
        assert!(v.member);
    }

    #[test]
    fn necessary_non_strict_boundary() {
        // d = 2, p = 3/2, q = 3: d/q = 2/3 equals (d-1)/p = 2/3.
        let v = member(Region::Necessary { d: 2 }, &pair("3/2", "3"), None).unwrap();
        assert!(v.member);
        // Any larger q tips it out: q = 31/10 > 3.
        let v = member(Region::Necessary { d: 2 }, &pair("3/2", "31/10"), None).unwrap();
        assert!(!v.member);
    }

    #[test]
    fn duality_examples() {
        assert_eq!(dual("2".parse().unwrap()).unwrap(), "2".parse().unwrap());
        assert_eq!(
            dual("7/4".parse().unwrap()).unwrap(),
            "7/3".parse().unwrap()
        );
        assert!(dual("1".parse().unwrap()).unwrap().is_infinite());
    }

    #[test]
    fn special_ranges_examples() {
        let r = special_range(3, SpecialRange::PolyRangeSpecial).unwrap();
        assert_eq!(r.lo, Rat::new(24, 13));
        assert!(!r.lo_closed && r.hi_closed);
        assert_eq!(r.hi, Rat::from_integer(2));

        let r = special_range(3, SpecialRange::PolyRangeConj).unwrap();
        assert_eq!(r.lo, Rat::new(5, 3));
        assert!(r.lo_closed);

        let r = special_range(2, SpecialRange::HighSpecial).unwrap();
        assert_eq!(r.lo, Rat::new(5, 3));
        assert!(r.lo_closed);
    }

    #[test]
    fn special_range_consistent_with_region() {
        // On the duality line 1/q = 1 - 1/p, interval membership in p must
        // agree with the 2D region membership.
        for d in 2..=8 {
            let interval = special_range(d, SpecialRange::PolyRangeSpecial).unwrap();
            for num in 1600..=2000 {
                let p = Rat::new(num, 1000);
                let inv_p = p.recip();
                let inv_q = Rat::one() - inv_p;
                let pr = ExponentPair::from_reciprocals(inv_p, inv_q).unwrap();
                let member_2d = member(Region::PolyRange { d }, &pr, None).unwrap().member;
                assert_eq!(member_2d, interval.contains(p), "d={d} p={p}");
            }
        }
    }

    #[test]
    fn ia_bridge_examples() {
        // d = 2, p = 8/5, q = 8/3: d(1/p - 1/q) = 1/2.
        let pr = pair("8/5", "8/3");
        match ia_bridge(&pr, 2, IaDirection::ImprovingToFractional) {
            IaBridge::LambdaInterval(i) => {
                assert_eq!(i.lo, Rat::new(1, 2));
                assert!(!i.lo_closed && !i.hi_closed);
                assert_eq!(i.hi, Rat::one());
                assert!(i.contains(Rat::new(3, 4)));
                assert!(!i.contains(Rat::new(1, 2)));
            }
            _ => panic!("expected interval"),
        }
        match ia_bridge(&pr, 2, IaDirection::FractionalToImproving) {
            IaBridge::LambdaPoint(l) => assert_eq!(l, Rat::new(1, 2)),
            _ => panic!("expected point"),
        }
    }

    #[test]
    fn fractional_gate_boundary() {
        // d = 3, p = 16/9, q = 16/7: (d(d+1)/2)(1/p-1/q) = 6 · 1/8 = 3/4,
        // so the gate reads 1 - λ < 3/4, i.e. λ > 1/4.
        let pr = pair("16/9", "16/7");
        assert!(fractional_gate(2, 3, &pr, Rat::new(3, 10)));
        assert!(!fractional_gate(2, 3, &pr, Rat::new(1, 4)));
        assert!(!fractional_gate(2, 3, &pr, Rat::one())); // 1-λ = 0 not allowed
    }

    #[test]
    fn conj_i_needs_lambda() {
        let e = member(Region::ConjI { d: 2 }, &pair("8/5", "8/3"), None);
        assert!(matches!(e, Err(RegionsError::MissingLambda(_))));
        let v = member(
            Region::ConjI { d: 2 },
            &pair("8/5", "8/3"),
            Some(Rat::new(3, 4)),
        )
        .unwrap();
        assert!(v.member);
    }

    #[test]
    fn polyrange_closure_vertices_d3() {
        let vs = closure_vertices(&Region::PolyRange { d: 3 }.constraints());
        let expect = [
            (Rat::zero(), Rat::zero()),
            (Rat::one(), Rat::one()),
            (Rat::new(13, 24), Rat::new(11, 24)),
        ];
        assert_eq!(vs.len(), 3);
        for e in expect {
            assert!(vs.contains(&e), "missing {e:?}");
        }
    }

    #[test]
    fn containment_certificates() {
        for d in 3..=8 {
            let vs = verify_polyrange_inside_necessary(d).unwrap();
            assert_eq!(vs.len(), 3, "triangle expected for d={d}");
        }
    }
}
