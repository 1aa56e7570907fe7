//! Fixtures shared by the criterion benches.

use icae::models::MessageBatch;
use icae::training::{train, TrainingConfig};
use icae::{ModelKind, RngStream, TrainedPair};

/// Batch size used by the per-step benches; matches the training default.
pub const BATCH: usize = 256;

/// A briefly trained pair, enough for evaluation to be meaningful.
pub fn trained_pair(kind: ModelKind) -> TrainedPair {
    let config = TrainingConfig {
        model_kind: kind,
        epochs: 2,
        batches_per_epoch: 50,
        seed: 1,
        ..TrainingConfig::default()
    };
    train(&config).expect("fixture training").0
}

pub fn messages(seed: u64) -> MessageBatch {
    MessageBatch::random(BATCH, 16, &mut RngStream::new(seed).rng())
}

pub fn training_config(kind: ModelKind) -> TrainingConfig {
    TrainingConfig {
        model_kind: kind,
        batch_size: BATCH,
        ..TrainingConfig::default()
    }
}
