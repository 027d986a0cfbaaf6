//! Initialization, Adam, the full-batch training loop and checkpoints.

mod adam;
mod checkpoint;
mod config;
mod init;
mod trainer;

pub use adam::AdamState;
pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use config::{parse_negatives, TrainConfig, CONFIG_KEYS};
pub use init::{xavier_bound, xavier_init};
pub use trainer::{
    make_split, stream_rng, write_history, BestSnapshot, EpochRecord, StopReason, Stream, Trainer,
};
