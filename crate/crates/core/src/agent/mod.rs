//! PPO agent that picks the split point and the server and bandwidth shares
//! of every round from the previous round's outcome and UAV trajectories.
//!
//! Networks are small dense stacks with hand-written backpropagation. The
//! allocation is sampled as Gaussian logits; softmax and bound scaling happen
//! on the environment side, so log-probabilities are taken on the logits.

pub mod action;
pub mod attention;
pub mod gradcheck;
pub mod nn;
pub mod policy;
pub mod ppo;
pub mod train;

pub use action::{interpret_allocation, scale_to_bounds, Action};
pub use attention::Attention;
pub use policy::{Encoder, Observation, PolicyNet, ValueNet};
pub use ppo::{ppo_update, ActionMask, PpoConfig, Transition, UpdateDiagnostics};
pub use train::{moving_average, observe, run_training_loop, Agent, RoundRecord, TrainingLog, Variant, MOVING_AVERAGE_SPAN};
