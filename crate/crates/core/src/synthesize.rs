//! AdaIN fusion of content and identity features and the progressive
//! decoder back to keypoint space.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::disentangle::{DEFAULT_SLOPE, IN_EPS};
use crate::error::{Error, Result};
use crate::nn::{leaky_relu_gain, ParamGroup, ParamId, ParamStore, Tape, Var};
use crate::tensor::Tensor;

pub const SIGMA_FLOOR: f64 = 1e-4;
pub const DEFAULT_ALPHA: f64 = 0.9;

#[derive(Clone, Debug, PartialEq)]
pub struct StyleStats {
    pub mu: Tensor,
    pub sigma: Tensor,
}

impl StyleStats {
    /// Per-channel temporal mean and `sqrt(var + eps)` of `x`, the same
    /// statistics the normalization step divides out.
    pub fn of(x: &Tensor, eps: f64) -> Self {
        let (mu, sigma): (Vec<f64>, Vec<f64>) = (0..x.rows())
            .map(|r| {
                let row = x.row(r);
                let n = row.len() as f64;
                let m = row.iter().sum::<f64>() / n;
                let v = row.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
                (m, (v + eps).sqrt())
            })
            .unzip();
        Self {
            mu: Tensor::column(&mu),
            sigma: Tensor::column(&sigma),
        }
    }
}

/// Two-layer perceptron mapping `f̄_id` to `(mu, sigma)`; sigma is
/// `softplus(z) + SIGMA_FLOOR`.
#[derive(Clone, Debug)]
pub struct StatsMlp {
    pub w1: ParamId,
    pub w2: ParamId,
    pub channels: usize,
    pub slope: f64,
}

impl StatsMlp {
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, c_id: usize, c_mc: usize) -> Self {
        let gain = leaky_relu_gain(DEFAULT_SLOPE);
        let w1 = store.add_normal(rng, "stats_mlp.w1", ParamGroup::Generator, (c_id, c_id), c_id, gain);
        let w2 = store.add_normal(rng, "stats_mlp.w2", ParamGroup::Generator, (2 * c_mc, c_id), c_id, 1.0);
        Self {
            w1,
            w2,
            channels: c_mc,
            slope: DEFAULT_SLOPE,
        }
    }

    /// Returns `(mu, sigma)` nodes, each `C_mc × 1`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, pooled: Var) -> (Var, Var) {
        let w1 = tape.param(store, self.w1);
        let w2 = tape.param(store, self.w2);
        let h = tape.matmul(w1, pooled);
        let h = tape.leaky_relu(h, self.slope);
        let z = tape.matmul(w2, h);
        let mu = tape.slice_rows(z, 0, self.channels);
        let raw = tape.slice_rows(z, self.channels, self.channels);
        let sigma = tape.softplus(raw);
        let sigma = tape.add_scalar(sigma, SIGMA_FLOOR);
        (mu, sigma)
    }

    pub fn stats(&self, store: &ParamStore, pooled: &Tensor) -> Result<StyleStats> {
        let c_id = store.value(self.w1).cols();
        if pooled.shape() != (c_id, 1) {
            return Err(Error::Config(format!(
                "style statistics expect a {c_id}×1 identity feature, got {:?}",
                pooled.shape()
            )));
        }
        let mut tape = Tape::new();
        let x = tape.constant(pooled.clone());
        let (mu, sigma) = self.forward(&mut tape, store, x);
        Ok(StyleStats {
            mu: tape.value(mu).clone(),
            sigma: tape.value(sigma).clone(),
        })
    }
}

/// `sigma · instance_norm(x) + mu`, per channel.
pub fn adain_var(tape: &mut Tape, x: Var, mu: Var, sigma: Var, eps: f64) -> Var {
    let n = tape.instance_norm(x, eps);
    let s = tape.mul_col(n, sigma);
    tape.add_col(s, mu)
}

pub fn adain(x: &Tensor, stats: &StyleStats, eps: f64) -> Result<Tensor> {
    if stats.mu.shape() != (x.rows(), 1) || stats.sigma.shape() != (x.rows(), 1) {
        return Err(Error::Config(format!(
            "style statistics must be {}×1 to restyle a {:?} feature",
            x.rows(),
            x.shape()
        )));
    }
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let mu = tape.constant(stats.mu.clone());
    let sigma = tape.constant(stats.sigma.clone());
    let out = adain_var(&mut tape, xv, mu, sigma, eps);
    Ok(tape.value(out).clone())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub block_channels: Vec<usize>,
    pub alpha: f64,
    pub upsample: usize,
    pub kernel: usize,
    pub slope: f64,
}

impl DecoderConfig {
    pub fn new(in_channels: usize, out_channels: usize, block_channels: Vec<usize>) -> Self {
        Self {
            in_channels,
            out_channels,
            block_channels,
            alpha: DEFAULT_ALPHA,
            upsample: 2,
            kernel: 3,
            slope: DEFAULT_SLOPE,
        }
    }

    pub fn blocks(&self) -> usize {
        self.block_channels.len()
    }

    pub fn upsampling(&self) -> usize {
        self.upsample.pow(self.blocks() as u32)
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_channels.is_empty() || self.block_channels.contains(&0) {
            return Err(Error::Config("decoder needs at least one block of positive width".into()));
        }
        if self.in_channels == 0 || self.out_channels == 0 || self.upsample == 0 || self.kernel % 2 == 0 {
            return Err(Error::Config("decoder channels, upsampling and odd kernel required".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct Conv {
    weight: ParamId,
    bias: Option<ParamId>,
    kernel: usize,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    fn new<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        bias: bool,
        gain: f64,
    ) -> Self {
        let fan_in = c_in * kernel;
        let weight = store.add_normal(
            rng,
            format!("{name}.weight"),
            ParamGroup::Generator,
            (c_out, fan_in),
            fan_in,
            gain,
        );
        let bias = bias.then(|| store.add_zeros(format!("{name}.bias"), ParamGroup::Generator, (c_out, 1)));
        Self { weight, bias, kernel }
    }

    fn apply(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Var {
        let w = tape.param(store, self.weight);
        let mut h = tape.conv1d(x, w, self.kernel, 1, self.kernel / 2);
        if let Some(b) = self.bias {
            let b = tape.param(store, b);
            h = tape.add_col(h, b);
        }
        h
    }
}

/// Progressive decoder with a feature stream and a keypoint-space stream.
///
/// Each block runs conv → LeakyReLU → ×2 upsampling on the features and
/// blends the keypoint stream as `α · to_image(h) + (1 − α) · upsample(y)`.
/// Before the last block the upsampled AdaIN output and the current
/// keypoint stream are projected back into the features.
#[derive(Clone, Debug)]
pub struct PgDecoder {
    config: DecoderConfig,
    blocks: Vec<Conv>,
    to_image: Vec<Conv>,
    skip: Conv,
    from_image: Conv,
}

impl PgDecoder {
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, config: DecoderConfig) -> Result<Self> {
        config.validate()?;
        let gain = leaky_relu_gain(config.slope);
        let mut to_image = vec![Conv::new(
            store,
            rng,
            "decoder.to_image0",
            config.in_channels,
            config.out_channels,
            1,
            true,
            1.0,
        )];
        let mut blocks = Vec::new();
        let mut c_in = config.in_channels;
        for (b, &c) in config.block_channels.iter().enumerate() {
            blocks.push(Conv::new(store, rng, &format!("decoder.block{b}"), c_in, c, config.kernel, true, gain));
            to_image.push(Conv::new(
                store,
                rng,
                &format!("decoder.to_image{}", b + 1),
                c,
                config.out_channels,
                1,
                true,
                1.0,
            ));
            c_in = c;
        }
        let last_in = if config.blocks() > 1 {
            config.block_channels[config.blocks() - 2]
        } else {
            config.in_channels
        };
        let skip = Conv::new(store, rng, "decoder.skip", config.in_channels, last_in, 1, false, 1.0);
        let from_image = Conv::new(store, rng, "decoder.from_image", config.out_channels, last_in, 1, false, 1.0);
        Ok(Self {
            config,
            blocks,
            to_image,
            skip,
            from_image,
        })
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.config
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, fused: Var) -> Var {
        self.forward_with_y0(tape, store, fused, None)
    }

    /// As [`PgDecoder::forward`], optionally replacing the initial keypoint
    /// stream.
    pub fn forward_with_y0(&self, tape: &mut Tape, store: &ParamStore, fused: Var, y0: Option<Var>) -> Var {
        let c = &self.config;
        let mut h = fused;
        let mut y = match y0 {
            Some(y) => y,
            None => self.to_image[0].apply(tape, store, fused),
        };
        let last = c.blocks() - 1;
        for (b, block) in self.blocks.iter().enumerate() {
            if b == last {
                let mut s = fused;
                if last > 0 {
                    s = tape.upsample_linear(s, c.upsample.pow(last as u32));
                }
                let s = self.skip.apply(tape, store, s);
                let r = self.from_image.apply(tape, store, y);
                h = tape.add(h, s);
                h = tape.add(h, r);
            }
            h = block.apply(tape, store, h);
            h = tape.leaky_relu(h, c.slope);
            h = tape.upsample_linear(h, c.upsample);
            let fresh = self.to_image[b + 1].apply(tape, store, h);
            let fresh = tape.scale(fresh, c.alpha);
            let carried = tape.upsample_linear(y, c.upsample);
            let carried = tape.scale(carried, 1.0 - c.alpha);
            y = tape.add(fresh, carried);
        }
        y
    }

    pub fn decode(&self, store: &ParamStore, fused: &Tensor) -> Result<Tensor> {
        if fused.rows() != self.config.in_channels || fused.cols() == 0 {
            return Err(Error::Config(format!(
                "decoder expects {} input rows, got {:?}",
                self.config.in_channels,
                fused.shape()
            )));
        }
        let mut tape = Tape::new();
        let x = tape.constant(fused.clone());
        let out = self.forward(&mut tape, store, x);
        Ok(tape.value(out).clone())
    }
}

/// Statistics MLP, AdaIN and decoder.
#[derive(Clone, Debug)]
pub struct Synthesizer {
    pub stats: StatsMlp,
    pub decoder: PgDecoder,
    pub eps: f64,
}

impl Synthesizer {
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, c_id: usize, config: DecoderConfig) -> Result<Self> {
        let stats = StatsMlp::new(store, rng, c_id, config.in_channels);
        let decoder = PgDecoder::new(store, rng, config)?;
        Ok(Self {
            stats,
            decoder,
            eps: IN_EPS,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, f_mc: Var, f_bar_id: Var) -> Var {
        let (mu, sigma) = self.stats.forward(tape, store, f_bar_id);
        let fused = adain_var(tape, f_mc, mu, sigma, self.eps);
        self.decoder.forward(tape, store, fused)
    }

    pub fn synthesize(&self, store: &ParamStore, f_mc: &Tensor, f_bar_id: &Tensor) -> Result<Tensor> {
        let stats = self.stats.stats(store, f_bar_id)?;
        let fused = adain(f_mc, &stats, self.eps)?;
        self.decoder.decode(store, &fused)
    }
}
