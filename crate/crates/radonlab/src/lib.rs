//! Desk-scale laboratory for discrete polynomial averaging operators.
//!
//! The crate measures `ℓ^p → ℓ^q` behavior of averages along polynomial
//! sequences and of their fractional-integral companions, computes even
//! moments of normalized exponential sums exactly by Diophantine solution
//! counting, evaluates the sharpness example families, runs the quadratic
//! and projection transfer constructions as checkable identities, decides
//! exponent-region membership in exact rational arithmetic, and collects
//! sparse-form evidence. A single `radonlab` binary exposes the lot as
//! reproducible, seeded experiments with CSV/JSON reports.
//!
//! Data-parallel kernels run on rayon by default; building with
//! `--no-default-features` selects the sequential fallback, which produces
//! bitwise-identical output.

pub mod averages;
pub mod cli;
pub mod exponent;
pub mod fit;
pub mod normlab;
pub mod parallel;
pub mod poly;
pub mod reduce;
pub mod regions;
pub mod signal;
pub mod sparse;
pub mod weyl;

pub use exponent::{Exponent, Rat};
pub use poly::IntPolynomial;
pub use signal::{Signal1D, SignalD};
