//! Beta regression with varying dispersion.
//!
//! Fits regression models for continuous responses on the open unit
//! interval, where both the mean and the precision of a beta-distributed
//! response are tied to covariates through link functions and possibly
//! nonlinear predictors:
//!
//! ```text
//! y_t ~ Beta(mu_t * phi_t, (1 - mu_t) * phi_t)
//! g(mu_t)  = f1(x_t; beta)
//! h(phi_t) = f2(z_t; gamma)
//! ```
//!
//! Estimation is by maximum likelihood via Fisher scoring with analytic
//! score and expected-information blocks. On top of a fitted model the
//! crate computes leave-one-out prediction diagnostics (PRESS and the
//! P2 family), likelihood- and correlation-based pseudo R2 statistics,
//! case-deletion residuals, and leverage. A deterministic Monte Carlo
//! harness replays the simulation designs used to study those statistics,
//! and a small expression language lets predictors be written as text
//! (`"b1 + b2*log(x1 - b3)"`) with exact symbolic derivatives.
//!
//! The `betapress` binary exposes fitting, diagnostics, simulation, and
//! PRESS-plot data extraction as subcommands over CSV data files.

pub mod config;
pub mod data;
pub mod diagnostics;
mod error;
pub mod estimation;
pub mod formula;
pub mod links;
pub mod simulation;
pub mod special;
#[cfg(test)]
pub(crate) mod test_support;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
