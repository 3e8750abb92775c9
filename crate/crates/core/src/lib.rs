//! Numerics for Caputo stochastic multi-term differential equations with
//! non-permutable coefficient matrices.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`]: small dense matrices with the max row-sum norm.
//! - [`specfun`]: gamma, scalar Mittag-Leffler and Riemann–Liouville quadrature.
//! - [`mlmatrix`]: bivariate Mittag-Leffler matrix series and the `Q_{k,m}` table.
//! - [`smtde`]: problem definition, Brownian drivers and the path solvers.
//! - [`analysis`]: mean-square estimators, contraction constants and experiments.

pub mod analysis;
pub mod error;
pub mod linalg;
pub mod mlmatrix;
pub mod smtde;
pub mod specfun;

pub use error::{Error, Result};
pub use linalg::Matrix;
