//! Three-branch, nine-permutation training with alternating discriminator
//! and generator updates.

mod checkpoint;
mod config;
mod metrics;
mod trainer;

use std::path::{Path, PathBuf};

pub use checkpoint::Checkpoint;
pub use config::{lr_at_epoch, TrainConfig};
pub use metrics::{read_metrics, MetricsLog, StepRecord};
pub use trainer::{mean_report, reconstruction_l1, truth_grid, EpochSummary, Trainer};

use crate::dataset::DatasetIndex;
use crate::error::Result;
use crate::model::ModelConfig;

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const METRICS_FILE: &str = "metrics.jsonl";

/// Where [`fit`] writes its artifacts.
#[derive(Clone, Debug, Default)]
pub struct FitOutput {
    pub dir: Option<PathBuf>,
}

impl FitOutput {
    pub fn in_dir(dir: impl Into<PathBuf>) -> Self {
        Self { dir: Some(dir.into()) }
    }

    pub fn checkpoint_path(&self) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(CHECKPOINT_FILE))
    }

    pub fn metrics_path(&self) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(METRICS_FILE))
    }
}

/// Trains `checkpoint` on `dataset` until its epoch counter reaches
/// `until_epoch`, logging every step and checkpointing periodically and
/// at the end.
pub fn resume(
    mut checkpoint: Checkpoint,
    dataset: &DatasetIndex,
    until_epoch: usize,
    output: &FitOutput,
    mut on_epoch: impl FnMut(&EpochSummary),
) -> Result<Checkpoint> {
    if let Some(dir) = &output.dir {
        std::fs::create_dir_all(dir)?;
    }
    checkpoint.dataset_digest = dataset.digest();
    let mut log = output.metrics_path().map(|p| MetricsLog::open(&p)).transpose()?;
    let every = checkpoint.trainer.config.checkpoint_every;
    while checkpoint.trainer.epoch < until_epoch {
        let trainer = &mut checkpoint.trainer;
        let epoch = trainer.epoch;
        let first_step = trainer.step;
        let summary = trainer.run_epoch(dataset, |_| {})?;
        if let Some(log) = log.as_mut() {
            for (i, loss) in summary.steps.iter().enumerate() {
                log.record(&StepRecord {
                    epoch,
                    step: first_step + i as u64,
                    ae_lr: summary.ae_lr,
                    d_lr: summary.d_lr,
                    loss: *loss,
                })?;
            }
            log.flush()?;
        }
        on_epoch(&summary);
        if every > 0 && trainer.epoch % every == 0 {
            save_to(&checkpoint, output)?;
        }
    }
    save_to(&checkpoint, output)?;
    Ok(checkpoint)
}

fn save_to(checkpoint: &Checkpoint, output: &FitOutput) -> Result<()> {
    if let Some(path) = output.checkpoint_path() {
        checkpoint.save(&path)?;
    }
    Ok(())
}

/// Fresh run of `config.max_epochs` epochs.
pub fn fit(
    dataset: &DatasetIndex,
    model_config: ModelConfig,
    config: TrainConfig,
    output: &FitOutput,
    on_epoch: impl FnMut(&EpochSummary),
) -> Result<Checkpoint> {
    let epochs = config.max_epochs;
    let trainer = Trainer::new(model_config, config)?;
    let checkpoint = Checkpoint::new(trainer, dataset.digest());
    resume(checkpoint, dataset, epochs, output, on_epoch)
}

/// Loads the checkpoint stored by a previous [`fit`] in `dir`.
pub fn load_run(dir: &Path) -> Result<Checkpoint> {
    Checkpoint::load(&dir.join(CHECKPOINT_FILE))
}
