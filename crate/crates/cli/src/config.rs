//! TOML run configuration. A `preset` picks every default; any table in
//! the file overrides individual fields on top of it.

use std::path::Path;

use anyhow::{bail, Context, Result};
use idmotion::idscore::{EmbedderConfig, MapperFitConfig};
use idmotion::model::ModelConfig;
use idmotion::training::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Widths divided by four, batch 16, 300 epochs.
    #[default]
    Desk,
    /// Full widths and the published training schedule.
    Paper,
    /// Widths divided by sixteen and two epochs, for smoke runs.
    Tiny,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub ids: usize,
    pub contents: usize,
    pub clips_per_cell: usize,
    pub frames: usize,
    pub noise_px: f64,
    /// Identities (the last ones) moved to the test split.
    pub test_ids: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            ids: 8,
            contents: 8,
            clips_per_cell: 2,
            frames: 64,
            noise_px: 1.0,
            test_ids: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub synth: SynthSection,
    pub embedder: EmbedderConfig,
    pub mapper: MapperFitConfig,
    /// Copy shared joints and place the face linearly instead of training
    /// the 15 → 17 perceptron.
    pub linear_face: bool,
    /// Clip length used by `preprocess`.
    pub clip_frames: usize,
    pub render_size: u32,
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let (model, train) = match preset {
            Preset::Desk => (ModelConfig::desk(), TrainConfig::desk()),
            Preset::Paper => (ModelConfig::paper(), TrainConfig::default()),
            Preset::Tiny => (
                ModelConfig::scaled(16),
                TrainConfig {
                    batch_size: 2,
                    max_epochs: 2,
                    ..TrainConfig::desk()
                },
            ),
        };
        Self {
            preset,
            seed: train.seed,
            model,
            train,
            synth: SynthSection::default(),
            embedder: EmbedderConfig::default(),
            mapper: MapperFitConfig::default(),
            linear_face: false,
            clip_frames: idmotion::dataset::DEFAULT_CLIP_FRAMES,
            render_size: idmotion::render::DEFAULT_SIZE,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let user: toml::Table = toml::from_str(text).context("parsing configuration")?;
        let preset = match user.get("preset") {
            None => Preset::default(),
            Some(v) => v.clone().try_into().context("reading `preset`")?,
        };
        let mut base = toml::Table::try_from(Self::preset(preset)).context("serializing preset")?;
        merge(&mut base, user);
        let mut config: Self = toml::Value::Table(base).try_into().context("reading configuration")?;
        // An explicit top-level seed also seeds training unless the
        // training table sets its own.
        if !text_sets(text, "train", "seed") {
            config.train.seed = config.seed;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::preset(Preset::default())),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Self::from_toml(&text).with_context(|| format!("in {}", p.display()))
            }
        }
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
            self.train.seed = s;
            self.embedder.seed = s;
            self.mapper.seed = s;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.clip_frames == 0 || self.render_size == 0 {
            bail!("clip_frames and render_size must be positive");
        }
        Ok(())
    }
}

fn text_sets(text: &str, table: &str, key: &str) -> bool {
    toml::from_str::<toml::Table>(text)
        .ok()
        .and_then(|t| t.get(table).and_then(|v| v.as_table()).map(|t| t.contains_key(key)))
        .unwrap_or(false)
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
