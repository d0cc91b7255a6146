use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{lr_at_epoch, TrainConfig};
use crate::dataset::{sample_triplet, DatasetIndex, MotionClip, TripletSample};
use crate::disentangle::LatentVars;
use crate::error::{Error, Result};
use crate::losses::{
    branch_l1_var, d_loss_var, g_loss_var, id_reconstruction_var, total_loss, total_loss_var, LossReport, LossTerms,
    LossVars,
};
use crate::model::{Model, ModelConfig};
use crate::nn::{Adam, ParamGroup, Tape, Var};

/// Ground-truth clip for every cell of the 3×3 synthesis grid:
/// `truth[j][k]` performs the content of branch `j` with the identity of
/// branch `k`.
pub fn truth_grid<R: Rng>(index: &DatasetIndex, t: &TripletSample, rng: &mut R) -> Result<[[MotionClip; 3]; 3]> {
    let b = t.branches();
    let mut cells: Vec<MotionClip> = Vec::with_capacity(9);
    for j in 0..3 {
        for k in 0..3 {
            let (mc, id) = (&b[j].mc_label, &b[k].id_label);
            let clip = if &b[j].id_label == id {
                b[j].clone()
            } else if &b[k].mc_label == mc {
                b[k].clone()
            } else {
                index
                    .cell(id, mc)
                    .choose(rng)
                    .cloned()
                    .ok_or_else(|| Error::MissingGroundTruth {
                        id_label: id.clone(),
                        mc_label: mc.clone(),
                    })?
            };
            cells.push(clip);
        }
    }
    let mut it = cells.into_iter();
    Ok(std::array::from_fn(|_| std::array::from_fn(|_| it.next().expect("nine cells"))))
}

/// Model, optimizers and progress counters of one training run.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: Model,
    pub config: TrainConfig,
    pub adam_g: Adam,
    pub adam_d: Adam,
    pub epoch: usize,
    pub step: u64,
    /// Cumulative decoder invocations.
    pub decoder_calls: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    pub ae_lr: f64,
    pub d_lr: f64,
    pub mean: LossReport,
    pub steps: Vec<LossReport>,
}

impl Trainer {
    pub fn new(model_config: ModelConfig, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = Model::new(model_config, config.seed)?;
        Ok(Self::from_parts(model, config))
    }

    pub fn from_parts(model: Model, config: TrainConfig) -> Self {
        Self {
            adam_g: Adam::new(config.adam, ParamGroup::Generator),
            adam_d: Adam::new(config.adam, ParamGroup::Discriminator),
            model,
            config,
            epoch: 0,
            step: 0,
            decoder_calls: 0,
        }
    }

    /// Steps per epoch: one triplet per clip in the index.
    pub fn batches_per_epoch(&self, index: &DatasetIndex) -> usize {
        index.len().div_ceil(self.config.batch_size).max(1)
    }

    pub fn epoch_rng(&self, epoch: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(epoch as u64 + 1);
        rng
    }

    /// One discriminator update followed by one generator update.
    pub fn train_step<R: Rng>(
        &mut self,
        index: &DatasetIndex,
        batch: &[TripletSample],
        lrs: (f64, f64),
        rng: &mut R,
    ) -> Result<LossReport> {
        if batch.is_empty() {
            return Err(Error::UndefinedBatch);
        }
        if let Some(bad) = batch.iter().find(|t| !t.is_valid()) {
            return Err(Error::Config(format!(
                "triplet violates label constraints: ({}, {}), ({}, {}), ({}, {})",
                bad.m1.id_label, bad.m1.mc_label, bad.m2.id_label, bad.m2.mc_label, bad.m3.id_label, bad.m3.mc_label
            )));
        }
        let truths: Vec<[[MotionClip; 3]; 3]> = batch.iter().map(|t| truth_grid(index, t, rng)).collect::<Result<_>>()?;
        let model = &self.model;
        let store = &model.store;
        let w = self.config.weights;

        let mut g = Tape::new();
        let mut branch_latents: Vec<LatentVars> = Vec::new();
        let mut id_labels: Vec<&str> = Vec::new();
        let mut mc_labels: Vec<&str> = Vec::new();
        let mut rec_terms = Vec::new();
        let mut id_rec_terms = Vec::new();
        let mut mc_rec_terms = Vec::new();
        let mut fakes: Vec<Var> = Vec::new();
        for (t, truth) in batch.iter().zip(&truths) {
            let branches = t.branches();
            let real: [LatentVars; 3] = branches.map(|c| {
                let x = g.constant(c.data().clone());
                model.disentangler.forward(&mut g, store, x)
            });
            for (c, l) in branches.iter().zip(&real) {
                branch_latents.push(*l);
                id_labels.push(&c.id_label);
                mc_labels.push(&c.mc_label);
            }
            let mut resynth: Vec<LatentVars> = Vec::with_capacity(9);
            for j in 0..3 {
                for k in 0..3 {
                    let y = model.synthesizer.forward(&mut g, store, real[j].f_mc, real[k].f_bar_id);
                    self.decoder_calls += 1;
                    let target = g.constant(truth[j][k].data().clone());
                    rec_terms.push(g.mean_abs_diff(y, target));
                    fakes.push(y);
                    resynth.push(model.disentangler.forward(&mut g, store, y));
                }
            }
            // Identity features of M^{j|k} should match branch k; content
            // features should match branch j. The real features act as
            // fixed targets.
            let target: [LatentVars; 3] = real.map(|l| detach(&mut g, l));
            for j in 0..3 {
                let row: [LatentVars; 3] = std::array::from_fn(|k| resynth[3 * j + k]);
                id_rec_terms.push(id_reconstruction_var(&mut g, &target, &row));
            }
            for k in 0..3 {
                let real_mc: Vec<Var> = target.iter().map(|l| l.f_mc).collect();
                let col: Vec<Var> = (0..3).map(|j| resynth[3 * j + k].f_mc).collect();
                mc_rec_terms.push(branch_l1_var(&mut g, &real_mc, &col));
            }
        }
        let rec = g.mean_scalars(&rec_terms);
        let id_rec = g.mean_scalars(&id_rec_terms);
        let mc_rec = g.mean_scalars(&mc_rec_terms);
        let h: Vec<Var> = branch_latents.iter().map(|l| l.h_id).collect();
        let f: Vec<Var> = branch_latents.iter().map(|l| l.f_mc).collect();
        let c_p = g.value(h[0]).rows() as f64;
        let mc_len = g.value(f[0]).len() as f64;
        let id_tri = g
            .batch_all_triplet(&h, &id_labels, w.delta, 1.0 / c_p)
            .ok_or(Error::UndefinedBatch)?;
        let mc_tri = g
            .batch_all_triplet(&f, &mc_labels, w.delta, 1.0 / mc_len)
            .ok_or(Error::UndefinedBatch)?;

        // Discriminator update on detached syntheses.
        let g_before = store.digest(Some(ParamGroup::Generator));
        let mut d = Tape::new();
        let reals: Vec<Var> = truths
            .iter()
            .flat_map(|grid| grid.iter().flatten())
            .map(|c| {
                let x = d.constant(c.data().clone());
                model.discriminator.forward(&mut d, store, x)
            })
            .collect();
        let fake_scores: Vec<Var> = fakes
            .iter()
            .map(|&y| {
                let x = d.constant(g.value(y).clone());
                model.discriminator.forward(&mut d, store, x)
            })
            .collect();
        let d_loss_node = d_loss_var(&mut d, &reals, &fake_scores, self.config.gan_form);
        let d_loss = d.scalar(d_loss_node);
        if !d_loss.is_finite() {
            return Err(Error::Divergence {
                term: "d_loss".into(),
                step: self.step,
            });
        }
        if self.step >= self.config.d_frozen_steps {
            let grads = d.backward(d_loss_node).param_grads(&d);
            self.adam_d.step(&mut self.model.store, &grads, lrs.1);
        }
        drop(d);
        let model = &self.model;
        let store = &model.store;
        if store.digest(Some(ParamGroup::Generator)) != g_before {
            return Err(Error::Config("discriminator update modified generator parameters".into()));
        }

        // Generator update against the refreshed, frozen discriminator.
        g.freeze(ParamGroup::Discriminator);
        let scores: Vec<Var> = fakes.iter().map(|&y| model.discriminator.forward(&mut g, store, y)).collect();
        let adv = g_loss_var(&mut g, &scores, self.config.gan_form);
        let vars = LossVars {
            rec,
            adv,
            mc_rec,
            mc_tri,
            id_rec,
            id_tri,
        };
        let terms = LossTerms {
            rec: g.scalar(rec),
            adv: g.scalar(adv),
            mc_rec: g.scalar(mc_rec),
            mc_tri: g.scalar(mc_tri),
            id_rec: g.scalar(id_rec),
            id_tri: g.scalar(id_tri),
        };
        let report = total_loss(&terms, d_loss, &w, self.step)?;
        let total = total_loss_var(&mut g, &vars, &w);
        let grads = g.backward(total).param_grads(&g);
        let d_before = store.digest(Some(ParamGroup::Discriminator));
        self.adam_g.step(&mut self.model.store, &grads, lrs.0);
        if self.model.store.digest(Some(ParamGroup::Discriminator)) != d_before {
            return Err(Error::Config("generator update modified discriminator parameters".into()));
        }
        let bad = self.model.store.ids().find(|&id| !self.model.store.value(id).all_finite());
        if let Some(id) = bad {
            return Err(Error::Divergence {
                term: format!("parameter {}", self.model.store.name(id)),
                step: self.step,
            });
        }
        self.step += 1;
        Ok(report)
    }

    /// Runs epoch `self.epoch` and advances the counter. The sampling
    /// stream depends only on the seed and the epoch number.
    pub fn run_epoch(&mut self, index: &DatasetIndex, mut on_step: impl FnMut(&LossReport)) -> Result<EpochSummary> {
        let epoch = self.epoch;
        let (ae_lr, d_lr) = lr_at_epoch(&self.config, epoch);
        let mut rng = self.epoch_rng(epoch);
        let mut steps = Vec::new();
        for _ in 0..self.batches_per_epoch(index) {
            let batch: Vec<TripletSample> = (0..self.config.batch_size)
                .map(|_| sample_triplet(index, &mut rng))
                .collect::<Result<_>>()?;
            let report = self.train_step(index, &batch, (ae_lr, d_lr), &mut rng)?;
            on_step(&report);
            steps.push(report);
        }
        self.epoch += 1;
        Ok(EpochSummary {
            epoch,
            ae_lr,
            d_lr,
            mean: mean_report(&steps),
            steps,
        })
    }
}

fn detach(tape: &mut Tape, l: LatentVars) -> LatentVars {
    let mut copy = |v: Var| {
        let value = tape.value(v).clone();
        tape.constant(value)
    };
    LatentVars {
        f_mc: copy(l.f_mc),
        f_id: copy(l.f_id),
        f_bar_id: copy(l.f_bar_id),
        h_id: copy(l.h_id),
    }
}

pub fn mean_report(steps: &[LossReport]) -> LossReport {
    let n = steps.len().max(1) as f64;
    let mut m = LossReport::default();
    for r in steps {
        m.rec += r.rec / n;
        m.adv += r.adv / n;
        m.mc_rec += r.mc_rec / n;
        m.mc_tri += r.mc_tri / n;
        m.id_rec += r.id_rec / n;
        m.id_tri += r.id_tri / n;
        m.d_loss += r.d_loss / n;
        m.total += r.total / n;
    }
    m
}

/// Mean L1 between each clip and its reconstruction.
pub fn reconstruction_l1(model: &Model, clips: &[&MotionClip]) -> Result<f64> {
    let mut total = 0.0;
    for c in clips {
        let r = model.reconstruct(c)?;
        total += r.data().data().iter().zip(c.data().data()).map(|(a, b)| (a - b).abs()).sum::<f64>()
            / c.data().len() as f64;
    }
    Ok(total / clips.len().max(1) as f64)
}
