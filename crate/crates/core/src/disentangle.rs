//! Motion-content and identity encoders plus the identity projection head.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{leaky_relu_gain, ParamGroup, ParamId, ParamStore, Tape, Var};
use crate::tensor::Tensor;

pub const IN_EPS: f64 = 1e-5;
pub const DEFAULT_SLOPE: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub in_channels: usize,
    pub channels: Vec<usize>,
    pub strides: Vec<usize>,
    pub kernels: Vec<usize>,
    pub slope: f64,
    pub eps: f64,
}

impl EncoderConfig {
    /// Eight kernel-3 layers, stride 2 at layers 2, 4 and 6, channels rising
    /// geometrically from `first` to `last`.
    pub fn geometric(in_channels: usize, first: usize, last: usize) -> Self {
        let layers = 8;
        let ratio = last as f64 / first as f64;
        let channels = (0..layers)
            .map(|l| (first as f64 * ratio.powf(l as f64 / (layers - 1) as f64)).round() as usize)
            .collect();
        let strides = (0..layers).map(|l| if l % 2 == 1 && l < 6 { 2 } else { 1 }).collect();
        Self {
            in_channels,
            channels,
            strides,
            kernels: vec![3; layers],
            slope: DEFAULT_SLOPE,
            eps: IN_EPS,
        }
    }

    pub fn layers(&self) -> usize {
        self.channels.len()
    }

    pub fn out_channels(&self) -> usize {
        *self.channels.last().expect("validated encoder has layers")
    }

    pub fn downsampling(&self) -> usize {
        self.strides.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.channels.len();
        if l == 0 || self.strides.len() != l || self.kernels.len() != l {
            return Err(Error::Config(
                "encoder channel, stride and kernel schedules must be non-empty and equally long".into(),
            ));
        }
        if self.in_channels == 0 || self.channels.contains(&0) || self.strides.contains(&0) {
            return Err(Error::Config("encoder channels and strides must be positive".into()));
        }
        if self.kernels.iter().any(|k| k % 2 == 0) {
            return Err(Error::Config("encoder kernels must be odd".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config("normalization epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Stack of temporal convolutions. With `normalized` every layer is
/// conv → LeakyReLU → instance norm and carries no conv bias; otherwise
/// every layer is conv + bias → LeakyReLU.
#[derive(Clone, Debug)]
pub struct Encoder {
    config: EncoderConfig,
    normalized: bool,
    weights: Vec<ParamId>,
    biases: Vec<Option<ParamId>>,
}

impl Encoder {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        prefix: &str,
        config: EncoderConfig,
        normalized: bool,
    ) -> Result<Self> {
        config.validate()?;
        let gain = leaky_relu_gain(config.slope);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let mut c_in = config.in_channels;
        for (l, (&c_out, &k)) in config.channels.iter().zip(&config.kernels).enumerate() {
            let fan_in = c_in * k;
            weights.push(store.add_normal(
                rng,
                format!("{prefix}.conv{l}.weight"),
                ParamGroup::Generator,
                (c_out, fan_in),
                fan_in,
                gain,
            ));
            biases.push((!normalized).then(|| {
                store.add_zeros(format!("{prefix}.conv{l}.bias"), ParamGroup::Generator, (c_out, 1))
            }));
            c_in = c_out;
        }
        Ok(Self {
            config,
            normalized,
            weights,
            biases,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn check_input(&self, shape: (usize, usize)) -> Result<()> {
        let (rows, cols) = shape;
        let down = self.config.downsampling();
        if rows != self.config.in_channels {
            return Err(Error::Config(format!(
                "encoder expects {} input rows, got {rows}",
                self.config.in_channels
            )));
        }
        if cols == 0 || cols % down != 0 {
            return Err(Error::Config(format!(
                "clip width {cols} is not a positive multiple of {down}"
            )));
        }
        Ok(())
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Var {
        self.forward_with(tape, store, x, |_, _, v| v)
    }

    /// Forward pass where `hook(layer, tape, pre_norm)` may rewrite each
    /// layer's activation just before its normalization (or, for the
    /// unnormalized stack, the layer output).
    pub fn forward_with(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        mut hook: impl FnMut(usize, &mut Tape, Var) -> Var,
    ) -> Var {
        let c = &self.config;
        let mut h = x;
        for l in 0..c.layers() {
            let w = tape.param(store, self.weights[l]);
            let k = c.kernels[l];
            h = tape.conv1d(h, w, k, c.strides[l], k / 2);
            if let Some(b) = self.biases[l] {
                let b = tape.param(store, b);
                h = tape.add_col(h, b);
            }
            h = tape.leaky_relu(h, c.slope);
            h = hook(l, tape, h);
            if self.normalized {
                h = tape.instance_norm(h, c.eps);
            }
        }
        h
    }

    pub fn encode(&self, store: &ParamStore, data: &Tensor) -> Result<Tensor> {
        self.check_input(data.shape())?;
        let mut tape = Tape::new();
        let x = tape.constant(data.clone());
        let out = self.forward(&mut tape, store, x);
        Ok(tape.value(out).clone())
    }
}

/// `h = W2 · LeakyReLU(W1 · f̄_id)`, no biases.
#[derive(Clone, Debug)]
pub struct ProjectionHead {
    pub w1: ParamId,
    pub w2: ParamId,
    pub slope: f64,
}

impl ProjectionHead {
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, prefix: &str, c_in: usize, c_out: usize) -> Self {
        let gain = leaky_relu_gain(DEFAULT_SLOPE);
        let w1 = store.add_normal(rng, format!("{prefix}.w1"), ParamGroup::Generator, (c_out, c_in), c_in, gain);
        let w2 = store.add_normal(rng, format!("{prefix}.w2"), ParamGroup::Generator, (c_out, c_out), c_out, 1.0);
        Self {
            w1,
            w2,
            slope: DEFAULT_SLOPE,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, pooled: Var) -> Var {
        let w1 = tape.param(store, self.w1);
        let w2 = tape.param(store, self.w2);
        let h = tape.matmul(w1, pooled);
        let h = tape.leaky_relu(h, self.slope);
        tape.matmul(w2, h)
    }

    pub fn project(&self, store: &ParamStore, pooled: &Tensor) -> Result<Tensor> {
        let c_in = store.value(self.w1).cols();
        if pooled.shape() != (c_in, 1) {
            return Err(Error::Config(format!(
                "projection expects a {c_in}×1 pooled identity feature, got {:?}",
                pooled.shape()
            )));
        }
        let mut tape = Tape::new();
        let x = tape.constant(pooled.clone());
        let out = self.forward(&mut tape, store, x);
        Ok(tape.value(out).clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentBundle {
    pub f_mc: Tensor,
    pub f_id: Tensor,
    pub f_bar_id: Tensor,
    pub h_id: Tensor,
}

/// Tape handles for the parts of a [`LatentBundle`].
#[derive(Clone, Copy, Debug)]
pub struct LatentVars {
    pub f_mc: Var,
    pub f_id: Var,
    pub f_bar_id: Var,
    pub h_id: Var,
}

#[derive(Clone, Debug)]
pub struct Disentangler {
    pub mc: Encoder,
    pub id: Encoder,
    pub head: ProjectionHead,
}

impl Disentangler {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        mc: EncoderConfig,
        id: EncoderConfig,
        projection_dim: usize,
    ) -> Result<Self> {
        if mc.in_channels != id.in_channels || mc.downsampling() != id.downsampling() {
            return Err(Error::Config(
                "content and identity encoders must share input rows and downsampling".into(),
            ));
        }
        let c_id = id.out_channels();
        let mc = Encoder::new(store, rng, "mc_encoder", mc, true)?;
        let id = Encoder::new(store, rng, "id_encoder", id, false)?;
        let head = ProjectionHead::new(store, rng, "projection", c_id, projection_dim);
        Ok(Self { mc, id, head })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> LatentVars {
        let f_mc = self.mc.forward(tape, store, x);
        let f_id = self.id.forward(tape, store, x);
        let f_bar_id = tape.mean_cols(f_id);
        let h_id = self.head.forward(tape, store, f_bar_id);
        LatentVars {
            f_mc,
            f_id,
            f_bar_id,
            h_id,
        }
    }

    pub fn encode(&self, store: &ParamStore, data: &Tensor) -> Result<LatentBundle> {
        self.mc.check_input(data.shape())?;
        let mut tape = Tape::new();
        let x = tape.constant(data.clone());
        let v = self.forward(&mut tape, store, x);
        Ok(LatentBundle {
            f_mc: tape.value(v.f_mc).clone(),
            f_id: tape.value(v.f_id).clone(),
            f_bar_id: tape.value(v.f_bar_id).clone(),
            h_id: tape.value(v.h_id).clone(),
        })
    }

    pub fn encode_mc(&self, store: &ParamStore, data: &Tensor) -> Result<Tensor> {
        self.mc.encode(store, data)
    }

    /// Identity features and their temporal mean.
    pub fn encode_id(&self, store: &ParamStore, data: &Tensor) -> Result<(Tensor, Tensor)> {
        let f_id = self.id.encode(store, data)?;
        let pooled = f_id.row_means();
        Ok((f_id, pooled))
    }
}

/// Per-row `(x − mean) / sqrt(var + eps)` with the population variance.
pub fn instance_norm(x: &Tensor, eps: f64) -> Tensor {
    let mut tape = Tape::new();
    let v = tape.constant(x.clone());
    let out = tape.instance_norm(v, eps);
    tape.value(out).clone()
}
