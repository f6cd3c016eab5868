//! Volatility estimation for high-frequency prices contaminated by
//! microstructure noise that is partly explained by limit order book variables.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod avar;
pub mod data;
pub mod error;
pub mod hausman;
pub mod io;
pub mod likelihood;
pub mod montecarlo;
pub mod noise_model;
pub mod optimize;
pub mod qmle;
pub mod simulator;
pub mod stats;

pub use data::{returns, Covariates, ReturnSeries, TickSeries, Violation};
pub use error::{Error, Result};
pub use likelihood::{loglik_err, loglik_exp, MA1Kernel};
pub use noise_model::{ModelKind, NoiseModel, Regressor};
