//! The full generator (encoders, projection, statistics MLP, decoder) and
//! the discriminator, sharing one parameter store.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{Discriminator, DiscriminatorConfig};
use crate::dataset::MotionClip;
use crate::disentangle::{Disentangler, EncoderConfig, LatentBundle};
use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::skeleton::BODY25_JOINTS;
use crate::synthesize::{DecoderConfig, Synthesizer};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub mc_encoder: EncoderConfig,
    pub id_encoder: EncoderConfig,
    pub projection_dim: usize,
    pub decoder: DecoderConfig,
    pub discriminator: DiscriminatorConfig,
}

impl ModelConfig {
    /// Full-size widths: C_mc = 128, C_id = C_p = 144, discriminator
    /// ending at 256.
    pub fn paper() -> Self {
        Self::scaled(1)
    }

    /// Every width divided by four.
    pub fn desk() -> Self {
        Self::scaled(4)
    }

    pub fn scaled(divisor: usize) -> Self {
        let d = |c: usize| (c / divisor).max(1);
        let rows = 2 * BODY25_JOINTS;
        let c_mc = d(128);
        let c_id = d(144);
        Self {
            mc_encoder: EncoderConfig::geometric(rows, d(64), c_mc),
            id_encoder: EncoderConfig::geometric(rows, d(64), c_id),
            projection_dim: c_id,
            decoder: DecoderConfig::new(c_mc, rows, vec![d(128), d(96), d(64)]),
            discriminator: DiscriminatorConfig::new(rows, vec![d(64), d(128), d(192), d(256)]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mc_encoder.validate()?;
        self.id_encoder.validate()?;
        self.decoder.validate()?;
        self.discriminator.validate()?;
        if self.projection_dim == 0 {
            return Err(Error::Config("projection dimension must be positive".into()));
        }
        if self.decoder.in_channels != self.mc_encoder.out_channels() {
            return Err(Error::Config(format!(
                "decoder input {} does not match content width {}",
                self.decoder.in_channels,
                self.mc_encoder.out_channels()
            )));
        }
        let rows = self.mc_encoder.in_channels;
        if self.decoder.out_channels != rows || self.discriminator.in_channels != rows {
            return Err(Error::Config("encoder, decoder and discriminator must agree on 2J".into()));
        }
        if self.decoder.upsampling() != self.mc_encoder.downsampling() {
            return Err(Error::Config(format!(
                "decoder upsampling ×{} does not undo encoder downsampling ×{}",
                self.decoder.upsampling(),
                self.mc_encoder.downsampling()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub disentangler: Disentangler,
    pub synthesizer: Synthesizer,
    pub discriminator: Discriminator,
}

impl Model {
    /// Builds every block with parameters drawn from `seed`. Parameter
    /// names depend only on `config`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let disentangler = Disentangler::new(
            &mut store,
            &mut rng,
            config.mc_encoder.clone(),
            config.id_encoder.clone(),
            config.projection_dim,
        )?;
        let synthesizer = Synthesizer::new(&mut store, &mut rng, config.id_encoder.out_channels(), config.decoder.clone())?;
        let discriminator = Discriminator::new(&mut store, &mut rng, config.discriminator.clone())?;
        Ok(Self {
            config,
            store,
            disentangler,
            synthesizer,
            discriminator,
        })
    }

    /// Rebuilds the architecture and installs `params` (name → value).
    pub fn with_params(config: ModelConfig, params: Vec<(String, Tensor)>) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        if params.len() != model.store.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter blocks, found {}",
                model.store.len(),
                params.len()
            )));
        }
        for (name, value) in params {
            let id = model
                .store
                .find(&name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown parameter block {name}")))?;
            if model.store.value(id).shape() != value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name} has shape {:?}, architecture expects {:?}",
                    value.shape(),
                    model.store.value(id).shape()
                )));
            }
            model.store.set(id, value);
        }
        Ok(model)
    }

    pub fn clip_shape(&self, frames: usize) -> (usize, usize) {
        (self.config.mc_encoder.in_channels, frames)
    }

    pub fn encode(&self, data: &Tensor) -> Result<LatentBundle> {
        self.disentangler.encode(&self.store, data)
    }

    pub fn synthesize(&self, f_mc: &Tensor, f_bar_id: &Tensor) -> Result<Tensor> {
        self.synthesizer.synthesize(&self.store, f_mc, f_bar_id)
    }

    /// Content of `source` performed with the identity of `target`.
    pub fn retarget(&self, source: &MotionClip, target: &MotionClip) -> Result<MotionClip> {
        let s = self.encode(source.data())?;
        let t = if std::ptr::eq(source, target) {
            s.clone()
        } else {
            self.encode(target.data())?
        };
        let out = self.synthesize(&s.f_mc, &t.f_bar_id)?;
        let mut clip = MotionClip::new(out, target.id_label.clone(), source.mc_label.clone())?;
        clip.fps = source.fps;
        Ok(clip)
    }

    pub fn reconstruct(&self, clip: &MotionClip) -> Result<MotionClip> {
        self.retarget(clip, clip)
    }

    pub fn discriminate(&self, data: &Tensor) -> Result<f64> {
        self.discriminator.score(&self.store, data)
    }
}
