//! Temporal-convolution discriminator scoring one clip at a time.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::disentangle::DEFAULT_SLOPE;
use crate::error::{Error, Result};
use crate::nn::{leaky_relu_gain, ParamGroup, ParamId, ParamStore, Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub in_channels: usize,
    pub channels: Vec<usize>,
    pub strides: Vec<usize>,
    pub kernels: Vec<usize>,
    pub slope: f64,
}

impl DiscriminatorConfig {
    /// Four kernel-3, stride-2 layers with the given widths.
    pub fn new(in_channels: usize, channels: Vec<usize>) -> Self {
        let n = channels.len();
        Self {
            in_channels,
            channels,
            strides: vec![2; n],
            kernels: vec![3; n],
            slope: DEFAULT_SLOPE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.channels.len();
        if n == 0 || self.strides.len() != n || self.kernels.len() != n {
            return Err(Error::Config("discriminator schedules must be non-empty and equally long".into()));
        }
        if self.in_channels == 0 || self.channels.contains(&0) || self.strides.contains(&0) {
            return Err(Error::Config("discriminator channels and strides must be positive".into()));
        }
        if self.kernels.iter().any(|k| k % 2 == 0) {
            return Err(Error::Config("discriminator kernels must be odd".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Discriminator {
    config: DiscriminatorConfig,
    layers: Vec<(ParamId, ParamId)>,
    head: (ParamId, ParamId),
}

impl Discriminator {
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, config: DiscriminatorConfig) -> Result<Self> {
        config.validate()?;
        let gain = leaky_relu_gain(config.slope);
        let group = ParamGroup::Discriminator;
        let mut layers = Vec::new();
        let mut c_in = config.in_channels;
        for (l, (&c, &k)) in config.channels.iter().zip(&config.kernels).enumerate() {
            let fan_in = c_in * k;
            let w = store.add_normal(rng, format!("discriminator.conv{l}.weight"), group, (c, fan_in), fan_in, gain);
            let b = store.add_zeros(format!("discriminator.conv{l}.bias"), group, (c, 1));
            layers.push((w, b));
            c_in = c;
        }
        let hw = store.add_normal(rng, "discriminator.head.weight", group, (1, c_in), c_in, 1.0);
        let hb = store.add_zeros("discriminator.head.bias", group, (1, 1));
        Ok(Self {
            config,
            layers,
            head: (hw, hb),
        })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    /// Unbounded realism score (1×1) of one `2J × T` clip.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Var {
        let c = &self.config;
        let mut h = x;
        for (l, &(w, b)) in self.layers.iter().enumerate() {
            let w = tape.param(store, w);
            let b = tape.param(store, b);
            let k = c.kernels[l];
            h = tape.conv1d(h, w, k, c.strides[l], k / 2);
            h = tape.add_col(h, b);
            h = tape.leaky_relu(h, c.slope);
        }
        let pooled = tape.mean_cols(h);
        let w = tape.param(store, self.head.0);
        let b = tape.param(store, self.head.1);
        let s = tape.matmul(w, pooled);
        tape.add(s, b)
    }

    pub fn score(&self, store: &ParamStore, clip: &Tensor) -> Result<f64> {
        if clip.rows() != self.config.in_channels || clip.cols() == 0 {
            return Err(Error::Config(format!(
                "discriminator expects {} rows, got {:?}",
                self.config.in_channels,
                clip.shape()
            )));
        }
        let mut tape = Tape::new();
        let x = tape.constant(clip.clone());
        let s = self.forward(&mut tape, store, x);
        Ok(tape.scalar(s))
    }

    pub fn score_batch(&self, store: &ParamStore, clips: &[Tensor]) -> Result<Vec<f64>> {
        clips.iter().map(|c| self.score(store, c)).collect()
    }
}
