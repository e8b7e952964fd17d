//! Quantifies the influence of each latent factor of a VAE via mutual
//! information estimated from an encoder snapshot, audits the KL
//! decomposition identities behind the estimate, and validates everything
//! against an analytic linear-Gaussian world.
//!
//! All information quantities are in nats.
//!
//! The crate is organized around the pipeline:
//!
//! 1. [`snapshot`] — read/write the encoder-snapshot interchange formats;
//! 2. [`estimator`] — fit q*(z) and estimate per-factor MI (with an optional
//!    quadrature audit of the decomposition identity);
//! 3. [`bounds`] — rank and select factors, compute the MSE and Fano lower
//!    bounds, run truncation/classification sweeps;
//! 4. [`oracle`] — the linear-Gaussian ground-truth world and β-ELBO trainer
//!    used to check estimator consistency and MI sparsity;
//! 5. [`gaussian`] — the exact closed forms and the quadrature oracle that
//!    audits them.

// Validation uses `!(x > 0.0)` deliberately: unlike `x <= 0.0`, it also
// rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod estimator;
pub mod gaussian;
pub mod oracle;
pub mod snapshot;
pub mod sum;

pub use error::{Error, Result};
