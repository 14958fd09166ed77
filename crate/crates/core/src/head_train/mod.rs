//! Answer head, composite objective, Adam, the trainer, evaluation,
//! checkpoints, and the ablation matrix.

mod ablate;
mod checkpoint;
mod config;
mod eval;
mod gradsuite;
mod model;
mod optim;
mod train;

pub use ablate::{
    median, run_ablation, runs_csv, summarize, summary_csv, variants, AblateConfig, AblationRun, Axis,
    VariantSummary,
};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointIndex, ParamEntry, INDEX_FILE};
pub use config::{Ablation, LossWeights, ModelConfig, Stream, TrainConfig};
pub use eval::{dump_attention, evaluate, EvalReport, TypeAccuracy};
pub use gradsuite::{random_dataset, run_gradcheck_suite, GradCheckCase};
pub use model::{answer_logits, argmax, ForwardVars, TassModel, HEAD, JTG, LSTM_A, LSTM_V};
pub use optim::Adam;
pub use train::{
    batch_gradients, batch_loss_on_tape, draw_pairs, init_model, load_data, train, train_model,
    BatchGradients, EpochRecord, LossComponents, TrainOutcome,
};

#[cfg(test)]
mod tests;
