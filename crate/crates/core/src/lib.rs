//! Off-policy evaluation on tabular MDPs with the Average-DICE stationary
//! density-ratio estimator.
//!
//! The crate is organised bottom-up:
//!
//! - [`mdp`] and [`envs`]: finite episodic MDPs, policies, seeded sampling.
//! - [`oracle`]: exact stationary distributions, values and the closed-form
//!   fixed point of the linear ratio update.
//! - [`dataset`]: annotated off-policy trajectory datasets (JSON Lines).
//! - [`estimators`]: tabular and linear Average-DICE plus the baselines.
//! - [`harness`]: sweeps, hyperparameter selection and plot data.

pub mod dataset;
pub mod envs;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod mdp;
pub mod oracle;
pub mod rng;

pub use error::{DiceError, Result};
