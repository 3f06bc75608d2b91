//! SimCIM Max-Cut solver whose regularization schedule is driven by a
//! PPO-trained actor-critic agent rewarded with rescaled ranked rewards.
//!
//! Module map:
//! - [`problem`]: coupling matrices, Gset I/O, objective, brute-force oracle
//! - [`spectral`]: symmetric eigendecomposition and derived quantities
//! - [`simcim`]: batched SimCIM iterations and the learning-rate range test
//! - [`schedules`]: linear, tanh and agent-driven regularization schedules
//! - [`rewards`]: leaderboard, ranked and rescaled ranked rewards
//! - [`environment`]: RL environment wrapping a SimCIM batch
//! - [`agent`]: actor/critic networks with FiLM, PPO, pre-training and fine-tuning
//! - [`baselines`]: CMA-ES tuning of the tanh schedule
//! - [`stats`]: batch statistics shared by the harness and the trainers

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod baselines;
pub mod environment;
pub mod error;
pub mod problem;
pub mod rewards;
pub mod schedules;
pub mod seeds;
pub mod simcim;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
