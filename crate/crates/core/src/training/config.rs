use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{AdversarialForm, LossWeights};
use crate::nn::AdamConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Triplets per step.
    pub batch_size: usize,
    pub max_epochs: usize,
    pub adam: AdamConfig,
    pub autoencoder_lr: f64,
    pub discriminator_lr: f64,
    pub lr_gamma: f64,
    pub lr_step_epochs: usize,
    pub seed: u64,
    pub weights: LossWeights,
    pub gan_form: AdversarialForm,
    /// Steps during which the discriminator is not updated.
    pub d_frozen_steps: u64,
    /// Write a checkpoint every this many epochs (0 = only at the end).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            max_epochs: 2000,
            adam: AdamConfig::default(),
            autoencoder_lr: 1e-4,
            discriminator_lr: 2e-4,
            lr_gamma: 0.5,
            lr_step_epochs: 400,
            seed: 0,
            weights: LossWeights::default(),
            gan_form: AdversarialForm::LeastSquares,
            d_frozen_steps: 0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    /// Small-batch, short schedule for CPU runs on the synthetic grid.
    pub fn desk() -> Self {
        Self {
            batch_size: 16,
            max_epochs: 300,
            autoencoder_lr: 1e-3,
            discriminator_lr: 2e-4,
            lr_step_epochs: 150,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.autoencoder_lr > 0.0 && self.discriminator_lr > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !(self.lr_gamma > 0.0 && self.lr_gamma <= 1.0) || self.lr_step_epochs == 0 {
            return Err(Error::Config("lr_gamma must lie in (0, 1] with a positive step".into()));
        }
        self.weights.validate()
    }
}

/// `(autoencoder_lr, discriminator_lr) · gamma^⌊epoch / step⌋`.
pub fn lr_at_epoch(config: &TrainConfig, epoch: usize) -> (f64, f64) {
    let decay = config.lr_gamma.powi((epoch / config.lr_step_epochs) as i32);
    (config.autoencoder_lr * decay, config.discriminator_lr * decay)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn schedule_examples() {
        let c = TrainConfig::default();
        assert_eq!(lr_at_epoch(&c, 0), (1e-4, 2e-4));
        assert_eq!(lr_at_epoch(&c, 399), (1e-4, 2e-4));
        assert_eq!(lr_at_epoch(&c, 400), (5e-5, 1e-4));
        let (a, d) = lr_at_epoch(&c, 1999);
        assert!((a - 6.25e-6).abs() < 1e-20 && (d - 1.25e-5).abs() < 1e-20);
    }

    proptest! {
        #[test]
        fn schedule_is_non_increasing(e in 0usize..10_000, gamma in 0.01f64..=1.0, step in 1usize..1000) {
            let c = TrainConfig { lr_gamma: gamma, lr_step_epochs: step, ..TrainConfig::default() };
            let (a0, d0) = lr_at_epoch(&c, e);
            let (a1, d1) = lr_at_epoch(&c, e + 1);
            prop_assert!(a1 <= a0 && d1 <= d0);
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let c: TrainConfig = serde_json::from_str(r#"{"batch_size": 4}"#).unwrap();
        assert_eq!(c.batch_size, 4);
        assert_eq!(c.max_epochs, 2000);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"batch": 4}"#).is_err());
    }
}
