//! The policy/value network, its training loop and checkpoint format.

pub mod checkpoint;
pub mod network;
pub mod optim;
pub mod sampling;
pub mod tokenizer;
pub mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use network::{Architecture, LossParts, ModelParams, Sample};
pub use optim::{AdamConfig, LrSchedule};
pub use sampling::{greedy_factor, sample_actions};
pub use tokenizer::{Token, TokenizerConfig};
pub use train::{train, train_with_held_out, Toggles, TrainAbort, TrainConfig, TrainLog, Variant};
