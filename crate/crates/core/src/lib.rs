//! Fair regression under statistical parity and bounded group loss.
//!
//! Constrained regression is solved as a two-player game between a learner
//! and a multiplier player: the multiplier player runs exponentiated
//! gradient over the constraint duals, and the learner answers each dual
//! vector with an ordinary weighted learning problem (cost-sensitive
//! classification, least squares, or risk minimization under the loss).
//! The output is a randomized predictor: a uniform mixture of the learner's
//! responses.

pub mod baselines;
pub mod bgl_solver;
pub mod dataset;
pub mod discretize;
pub mod error;
pub mod harness;
pub mod loss;
pub mod moments;
pub mod numeric;
pub mod oracles;
pub mod predictor;
pub mod simplex;
pub mod sp_solver;

pub use dataset::{Dataset, Example};
pub use discretize::{Grid, LabelCover};
pub use error::{FairError, Result};
pub use loss::LossSpec;
pub use moments::{BglVector, MomentVector};
pub use oracles::OracleKind;
pub use predictor::{q_expectation, LinearModel, RandomizedPredictor};
pub use sp_solver::{run_sp, train_sp, SpConfig, SpProblem, SpResult};
pub use bgl_solver::{run_bgl, BglConfig, BglResult};
