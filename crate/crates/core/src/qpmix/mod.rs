//! Centralized training: monotonic mixer, replay, losses and the slot loop.

mod losses;
mod mixer;
mod replay;
mod session;
mod trainer;

pub use losses::{actor_loss, greedy_targets, independent_q_loss, qtot_loss, qtot_targets, v_loss, Batch};
pub use mixer::{mix, value_head, MixCache, Mixer, MixerGrads};
pub use replay::{ReplayBuffer, Transition};
pub use session::{run_evaluation, run_training, Roster, RunConfig, RunOutcome, WindowRow};
pub use trainer::{Learner, LearningMode, TrainConfig, Trainer, UpdateLog};
