//! Loss, optimizer, the reference architecture and the training loop.

mod adam;
mod arch;
mod loss;
mod metrics;
mod trainer;

pub use adam::{adam_step, Adam, AdamConfig, Moments};
pub use arch::{ModelSpec, ModelSummary, SummaryRow, DEFAULT_DROPOUT, DEFAULT_INPUT_SHAPE};
pub use loss::{bce_loss, CLAMP};
pub use metrics::{
    evaluate, evaluate_scores, save_history, write_history_csv, write_history_json, Confusion, EpochMetrics,
    Evaluation,
};
pub use trainer::{
    train, train_spec, TrainConfig, TrainOutcome, DEFAULT_BATCH_SIZE, DEFAULT_EPOCHS, DEFAULT_SEED,
};
