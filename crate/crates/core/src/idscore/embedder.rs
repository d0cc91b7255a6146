//! Gait embedders operating on COCO-17 clips.

use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Stdio};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::MotionClip;
use crate::error::{Error, Result};
use crate::nn::{leaky_relu_gain, Adam, AdamConfig, ParamGroup, ParamId, ParamStore, Tape, Var};
use crate::skeleton::COCO17_JOINTS;

pub trait GaitEmbedder {
    fn name(&self) -> String;
    fn embed(&self, clip: &MotionClip) -> Result<Vec<f64>>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedderConfig {
    pub channels: Vec<usize>,
    pub embedding_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub margin: f64,
    pub seed: u64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            channels: vec![32, 48, 64],
            embedding_dim: 64,
            epochs: 60,
            batch_size: 24,
            lr: 1e-3,
            margin: 0.2,
            seed: 0,
        }
    }
}

const SLOPE: f64 = 0.2;
const STRIDES: [usize; 3] = [1, 2, 2];

/// Small temporal CNN trained with cross-entropy over identities plus a
/// batch-all triplet term on the embedding.
#[derive(Clone, Debug)]
pub struct BaselineEmbedder {
    store: ParamStore,
    convs: Vec<(ParamId, ParamId, usize)>,
    embed: (ParamId, ParamId),
    logits: ParamId,
    classes: Vec<String>,
}

impl BaselineEmbedder {
    pub fn fit(clips: &[MotionClip], config: &EmbedderConfig) -> Result<Self> {
        if config.channels.is_empty() || config.channels.contains(&0) || config.embedding_dim == 0 {
            return Err(Error::Config("embedder widths must be positive".into()));
        }
        let mut classes: Vec<String> = clips.iter().map(|c| c.id_label.clone()).collect();
        classes.sort();
        classes.dedup();
        if classes.len() < 2 {
            return Err(Error::Fit(format!(
                "embedder needs at least two identities, found {}",
                classes.len()
            )));
        }
        for c in clips {
            if c.joints() != COCO17_JOINTS {
                return Err(Error::Arity {
                    expected: COCO17_JOINTS,
                    found: c.joints(),
                });
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let g = ParamGroup::Generator;
        let gain = leaky_relu_gain(SLOPE);
        let mut convs = Vec::new();
        let mut c_in = 2 * COCO17_JOINTS;
        for (l, &c) in config.channels.iter().enumerate() {
            let fan_in = 3 * c_in;
            let w = store.add_normal(&mut rng, format!("conv{l}.weight"), g, (c, fan_in), fan_in, gain);
            let b = store.add_zeros(format!("conv{l}.bias"), g, (c, 1));
            convs.push((w, b, STRIDES[l.min(STRIDES.len() - 1)]));
            c_in = c;
        }
        let e = config.embedding_dim;
        let ew = store.add_normal(&mut rng, "embed.weight", g, (e, c_in), c_in, gain);
        let eb = store.add_zeros("embed.bias", g, (e, 1));
        let lw = store.add_normal(&mut rng, "logits.weight", g, (classes.len(), e), e, 1.0);
        let mut model = Self {
            store,
            convs,
            embed: (ew, eb),
            logits: lw,
            classes,
        };
        let targets: Vec<usize> = clips
            .iter()
            .map(|c| model.classes.binary_search(&c.id_label).expect("collected above"))
            .collect();
        let mut adam = Adam::new(
            AdamConfig {
                beta1: 0.9,
                weight_decay: 1e-4,
                ..AdamConfig::default()
            },
            g,
        );
        let mut order: Vec<usize> = (0..clips.len()).collect();
        let batch = config.batch_size.clamp(2, clips.len().max(2));
        for _ in 0..config.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(batch) {
                let mut tape = Tape::new();
                let mut embeddings = Vec::with_capacity(chunk.len());
                let mut xent = Vec::with_capacity(chunk.len());
                for &i in chunk {
                    let x = tape.constant(clips[i].data().clone());
                    let emb = model.forward(&mut tape, x);
                    let w = tape.param(&model.store, model.logits);
                    let z = tape.matmul(w, emb);
                    xent.push(tape.softmax_xent(z, targets[i]));
                    embeddings.push(emb);
                }
                let ce = tape.mean_scalars(&xent);
                let labels: Vec<usize> = chunk.iter().map(|&i| targets[i]).collect();
                let loss = match tape.batch_all_triplet(&embeddings, &labels, config.margin, 1.0) {
                    Some(tri) => tape.add(ce, tri),
                    None => ce,
                };
                let grads = tape.backward(loss).param_grads(&tape);
                adam.step(&mut model.store, &grads, config.lr);
            }
        }
        Ok(model)
    }

    fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let mut h = x;
        for &(w, b, stride) in &self.convs {
            let w = tape.param(&self.store, w);
            let b = tape.param(&self.store, b);
            h = tape.conv1d(h, w, 3, stride, 1);
            h = tape.add_col(h, b);
            h = tape.leaky_relu(h, SLOPE);
        }
        let pooled = tape.mean_cols(h);
        let w = tape.param(&self.store, self.embed.0);
        let b = tape.param(&self.store, self.embed.1);
        let e = tape.matmul(w, pooled);
        let e = tape.add(e, b);
        tape.leaky_relu(e, SLOPE)
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn digest(&self) -> String {
        self.store.digest(None)
    }
}

impl GaitEmbedder for BaselineEmbedder {
    fn name(&self) -> String {
        "baseline".into()
    }

    fn embed(&self, clip: &MotionClip) -> Result<Vec<f64>> {
        if clip.joints() != COCO17_JOINTS {
            return Err(Error::Arity {
                expected: COCO17_JOINTS,
                found: clip.joints(),
            });
        }
        let mut tape = Tape::new();
        let x = tape.constant(clip.data().clone());
        let e = self.forward(&mut tape, x);
        Ok(tape.value(e).data().to_vec())
    }
}

/// Delegates to an executable. The clip is written to its stdin as a
/// `joints frames` line followed by one line per frame holding
/// `x0 y0 x1 y1 …`; the program prints whitespace-separated floats.
#[derive(Clone, Debug)]
pub struct ExternalEmbedder {
    pub program: PathBuf,
}

impl ExternalEmbedder {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        Self {
            program: program.into(),
        }
    }
}

pub fn clip_to_text(clip: &MotionClip) -> String {
    let mut out = format!("{} {}\n", clip.joints(), clip.frames());
    for t in 0..clip.frames() {
        let line: Vec<String> = (0..clip.joints())
            .flat_map(|j| {
                let (x, y) = clip.point(j, t);
                [x.to_string(), y.to_string()]
            })
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

impl GaitEmbedder for ExternalEmbedder {
    fn name(&self) -> String {
        format!("external:{}", self.program.display())
    }

    fn embed(&self, clip: &MotionClip) -> Result<Vec<f64>> {
        let fail = |m: String| Error::Embedder(format!("{}: {m}", self.program.display()));
        let mut child = Command::new(&self.program)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| fail(format!("cannot start: {e}")))?;
        let input = clip_to_text(clip);
        {
            let mut stdin = child.stdin.take().expect("piped stdin");
            // A program that exits without reading is reported by its status.
            let _ = stdin.write_all(input.as_bytes());
        }
        let out = child.wait_with_output().map_err(|e| fail(e.to_string()))?;
        if !out.status.success() {
            return Err(fail(format!(
                "exited with {}: {}",
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        let text = String::from_utf8(out.stdout).map_err(|e| fail(e.to_string()))?;
        let values: Vec<f64> = text
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| fail(format!("bad output token {t:?}: {e}"))))
            .collect::<Result<_>>()?;
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(fail("empty or non-finite embedding".into()));
        }
        Ok(values)
    }
}
