//! The L²-Stein test of uniformity on the hypersphere `S^{p-1}`.
//!
//! The statistic `T_n(λ)` measures how far the empirical mean of the
//! Laplace–Beltrami operator applied to `e^{λ tᵀx}` is from zero. Expanded in
//! Gegenbauer polynomials it becomes a Sobolev statistic
//! `Σ_k c_{k,p}(λ) A_k`, which is how it is computed here.

pub mod alternatives;
pub mod asymptotics;
pub mod error;
pub mod fields;
pub mod harness;
pub mod null_dist;
pub mod quadrature;
pub mod rng;
pub mod specfun;
pub mod stein_statistic;
pub mod tuning;

pub use error::{Error, Result};
pub use stein_statistic::{CoefficientSequence, GegenbauerGram, SampleSet};
