//! Numerical companion for Adams and Moser–Trudinger inequalities with
//! Riesz-subcritical kernels and domains.
//!
//! The crate is organized bottom-up:
//!
//! - [`special`], [`quadrature`], [`fit`]: numerical primitives.
//! - [`measure`]: distribution functions, rearrangements, `f**`, critical integrals.
//! - [`kernel`]: Riesz, Bessel, drift, hyperbolic and domain-adapted kernels.
//! - [`domain`]: growth functions `|Ω ∩ B(x,r)|` and subcriticality verdicts.
//! - [`symbol`]: polynomial symbols, ellipticity and integrability tests.
//! - [`adams`]: potentials, regularized exponentials and extremal experiments.
//! - [`oneil`]: exact checks of rearrangement inequalities on finite measure spaces.
//! - [`manifest`] and [`catalog`]: the experiment runner used by the binary.

pub mod adams;
pub mod catalog;
pub mod domain;
pub mod error;
pub mod fit;
pub mod kernel;
pub mod manifest;
pub mod measure;
pub mod oneil;
pub mod quadrature;
pub mod special;
pub mod symbol;

pub use error::{Error, Result};
