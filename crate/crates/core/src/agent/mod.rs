//! Actor-critic agent that chooses the regularization increments.
//!
//! The actor maps an observation to three action probabilities, with its last
//! hidden layer modulated by an affine function of the problem features `φ`.
//! The critic is a separate network on the raw observation. Both are trained
//! with clipped PPO.

pub mod checkpoint;
pub mod network;
pub mod ppo;
pub mod training;

pub use network::{actor_forward, critic_forward, ActorOutput, Architecture, Block, NetworkParameters, NUM_ACTIONS};
pub use ppo::{ppo_loss, ppo_loss_and_gradient, ppo_update, Adam, LossBreakdown, PpoBatch, PpoConfig, PpoDiagnostics};
pub use training::{
    finetune, pretrain, rollout, rollout_with_board, training_curve_csv, FinetuneConfig, FinetuneOutcome, Observer,
    PretrainConfig, ProblemContext, UpdateRecord,
};
