//! Self-play policy-gradient learning with Beta policies over small networks.

pub mod batch;
pub mod beta;
pub mod features;
pub mod nn;
pub mod ppo;
pub mod reinforce;
pub mod train;

pub use batch::{collect, AgentBatch, Batch};
pub use beta::{to_price, BetaHead};
pub use features::{encode_observation, feature_dim};
pub use nn::{Adam, Mlp};
pub use ppo::{ppo_loss_grad, ppo_update, PpoConfig, PpoLoss, PpoState};
pub use reinforce::{reinforce_loss_grad, reinforce_update};
pub use train::{
    train_selfplay, train_selfplay_with, write_log_csv, Algorithm, LearnedProfile, LogRow,
    NetworkRecord, NeuralPolicy, ProfileFile, TrainConfig,
};
