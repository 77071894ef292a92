//! Fokker-Planck coefficients for a harmonically bound particle in an Ohmic
//! heat bath.
//!
//! The reduced Wigner function `W(q, t)` obeys
//! `∂W/∂t = −Ω(t) ∂(qW)/∂q + (D(t)/2) ∂²W/∂q²`. This crate evaluates the drift
//! frequency `Ω`, the quantum diffusion coefficient `D_Q` and the width
//! `σ_Q`, their white-noise counterparts, and an ensemble simulation of the
//! equivalent stochastic process.
//!
//! ```
//! use qbm::diffusion::Diffusion;
//! use qbm::params::ModelParams;
//!
//! let params = ModelParams::new(4.0, 0.053, 1e7)?;
//! let d = Diffusion::quantum(&params)?;
//! assert!(d.sigma_q(2.0)?.total() > 0.0);
//! # Ok::<(), qbm::error::QbmError>(())
//! ```
//!
//! The guide in `book/` walks through each module.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classical;
pub mod cli;
pub mod correlations;
pub mod diffusion;
pub mod error;
pub mod noise_corr;
pub mod numerics;
pub mod oup_sim;
pub mod params;
pub mod susceptibility;

pub use error::{QbmError, Result};
pub use params::ModelParams;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/regimes.md")]
    mod regimes {}
    #[doc = include_str!("../../../book/src/susceptibilities.md")]
    mod susceptibilities {}
    #[doc = include_str!("../../../book/src/correlations.md")]
    mod correlations {}
    #[doc = include_str!("../../../book/src/noise.md")]
    mod noise {}
    #[doc = include_str!("../../../book/src/diffusion.md")]
    mod diffusion {}
    #[doc = include_str!("../../../book/src/classical.md")]
    mod classical {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/numerics.md")]
    mod numerics {}
    #[doc = include_str!("../../../book/src/limitations.md")]
    mod limitations {}
}
