//! European call options on mortgage pass-throughs under a logistic duration
//! curve and a normal mortgage-rate process.
//!
//! Three pricing engines share one underlying model:
//!
//! * [`pricer::price_sln`]: three-moment shifted-lognormal fit of a simulated
//!   terminal price sample, priced with a shifted Black-Scholes kernel.
//! * [`pricer::price_ln`]: parametric lognormal law for the terminal price
//!   (two-lognormal-sum matching), with closed-form delta and gamma.
//! * [`mc::price_mc`]: seeded Monte Carlo reference.
//!
//! The numerical core is generic over [`Scalar`] (`f32`/`f64`); the aliases
//! below fix it to `f64`, which is what the harness and CLI use.

// `!(x > 0)` is used on purpose so NaN is rejected with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod distfit;
pub mod error;
pub mod harness;
pub mod mc;
pub mod model;
pub mod pricer;
pub mod rng;
pub mod scalar;
pub mod special;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type DurationParams = model::DurationParams<f64>;
pub type MarketState = model::MarketState<f64>;
pub type RateDynamics = model::RateDynamics<f64>;
pub type OptionContract = model::OptionContract<f64>;
pub type ModelSpec = model::ModelSpec<f64>;
pub type NormalLaw = model::NormalLaw<f64>;

pub type SampleMoments = distfit::SampleMoments<f64>;
pub type LognormalParams = distfit::LognormalParams<f64>;
pub type ShiftedLognormalFit = distfit::ShiftedLognormalFit<f64>;
pub type TwoLognormalSpec = distfit::TwoLognormalSpec<f64>;

pub type BsKernelInputs = pricer::BsKernelInputs<f64>;
pub type TerminalLognormalLaw = pricer::TerminalLognormalLaw<f64>;
pub type PriceResult = pricer::PriceResult<f64>;

pub type McResult = mc::McResult<f64>;
pub use mc::McConfig;
