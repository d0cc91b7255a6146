//! Training objectives: triplet hinges, feature and motion reconstruction,
//! adversarial terms and their weighted total.

use serde::{Deserialize, Serialize};

use crate::disentangle::{LatentBundle, LatentVars};
use crate::error::{Error, Result};
use crate::nn::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub rec: f64,
    pub adv: f64,
    pub mc: f64,
    pub id: f64,
    pub delta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            rec: 10.0,
            adv: 2.0,
            mc: 2.0,
            id: 6.0,
            delta: 0.2,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.rec, self.adv, self.mc, self.id, self.delta];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("loss weights and margin must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversarialForm {
    /// Least squares: real target 1, fake target 0.
    #[default]
    LeastSquares,
    /// Logistic on raw scores; the generator uses the non-saturating form.
    Log,
}

/// Individual loss values for one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub rec: f64,
    pub adv: f64,
    pub mc_rec: f64,
    pub mc_tri: f64,
    pub id_rec: f64,
    pub id_tri: f64,
}

impl LossTerms {
    fn named(&self) -> [(&'static str, f64); 6] {
        [
            ("rec", self.rec),
            ("adv", self.adv),
            ("mc_rec", self.mc_rec),
            ("mc_tri", self.mc_tri),
            ("id_rec", self.id_rec),
            ("id_tri", self.id_tri),
        ]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub rec: f64,
    pub adv: f64,
    pub mc_rec: f64,
    pub mc_tri: f64,
    pub id_rec: f64,
    pub id_tri: f64,
    pub d_loss: f64,
    pub total: f64,
}

/// Weighted generator objective; fails on the first non-finite term.
pub fn total_loss(terms: &LossTerms, d_loss: f64, weights: &LossWeights, step: u64) -> Result<LossReport> {
    for (name, value) in terms.named().into_iter().chain([("d_loss", d_loss)]) {
        if !value.is_finite() {
            return Err(Error::Divergence {
                term: name.to_string(),
                step,
            });
        }
    }
    let total = weights.rec * terms.rec
        + weights.adv * terms.adv
        + weights.mc * (terms.mc_rec + terms.mc_tri)
        + weights.id * (terms.id_rec + terms.id_tri);
    if !total.is_finite() {
        return Err(Error::Divergence {
            term: "total".into(),
            step,
        });
    }
    Ok(LossReport {
        rec: terms.rec,
        adv: terms.adv,
        mc_rec: terms.mc_rec,
        mc_tri: terms.mc_tri,
        id_rec: terms.id_rec,
        id_tri: terms.id_tri,
        d_loss,
        total,
    })
}

/// Tape handles of the generator terms.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub rec: Var,
    pub adv: Var,
    pub mc_rec: Var,
    pub mc_tri: Var,
    pub id_rec: Var,
    pub id_tri: Var,
}

pub fn total_loss_var(tape: &mut Tape, v: &LossVars, w: &LossWeights) -> Var {
    let mc = tape.add(v.mc_rec, v.mc_tri);
    let id = tape.add(v.id_rec, v.id_tri);
    let parts = [
        tape.scale(v.rec, w.rec),
        tape.scale(v.adv, w.adv),
        tape.scale(mc, w.mc),
        tape.scale(id, w.id),
    ];
    tape.sum_scalars(&parts)
}

/// `max(scale·‖a − p‖ − scale·‖a − n‖ + delta, 0)`.
pub fn triplet_var(tape: &mut Tape, anchor: Var, positive: Var, negative: Var, delta: f64, scale: f64) -> Var {
    let dp = tape.l2_dist(anchor, positive);
    let dn = tape.l2_dist(anchor, negative);
    let d = tape.sub(dp, dn);
    let d = tape.scale(d, scale);
    let d = tape.add_scalar(d, delta);
    tape.relu(d)
}

fn eval3(a: &Tensor, b: &Tensor, c: &Tensor, f: impl FnOnce(&mut Tape, Var, Var, Var) -> Var) -> f64 {
    let mut tape = Tape::new();
    let (a, b, c) = (tape.constant(a.clone()), tape.constant(b.clone()), tape.constant(c.clone()));
    let out = f(&mut tape, a, b, c);
    tape.scalar(out)
}

fn check_shapes(ts: &[&Tensor]) -> Result<()> {
    if ts.windows(2).any(|w| w[0].shape() != w[1].shape()) {
        return Err(Error::Config("triplet members must share one shape".into()));
    }
    Ok(())
}

/// Identity hinge: anchor branch 2, positive branch 3, negative branch 1,
/// distances scaled by `1 / C_p`.
pub fn id_triplet(h1: &Tensor, h2: &Tensor, h3: &Tensor, delta: f64) -> Result<f64> {
    check_shapes(&[h1, h2, h3])?;
    let scale = 1.0 / h1.rows() as f64;
    Ok(eval3(h1, h2, h3, |t, h1, h2, h3| triplet_var(t, h2, h3, h1, delta, scale)))
}

/// Content hinge: anchor branch 2, positive branch 1, negative branch 3,
/// distances scaled by `1 / (C_mc · N_mc)`.
pub fn mc_triplet(f1: &Tensor, f2: &Tensor, f3: &Tensor, delta: f64) -> Result<f64> {
    check_shapes(&[f1, f2, f3])?;
    let scale = 1.0 / f1.len() as f64;
    Ok(eval3(f1, f2, f3, |t, f1, f2, f3| triplet_var(t, f2, f1, f3, delta, scale)))
}

/// Batch-all hinge over every label-compatible triple, averaged over the
/// triples with positive loss.
pub fn batch_all_triplet<L: PartialEq>(
    embeddings: &[Tensor],
    labels: &[L],
    delta: f64,
    distance_scale: f64,
) -> Result<f64> {
    if embeddings.len() != labels.len() {
        return Err(Error::Config("one label per embedding required".into()));
    }
    let refs: Vec<&Tensor> = embeddings.iter().collect();
    check_shapes(&refs)?;
    let mut tape = Tape::new();
    let vars: Vec<Var> = embeddings.iter().map(|e| tape.constant(e.clone())).collect();
    let out = tape
        .batch_all_triplet(&vars, labels, delta, distance_scale)
        .ok_or(Error::UndefinedBatch)?;
    Ok(tape.scalar(out))
}

/// Mean over branches of the per-branch mean absolute difference.
pub fn branch_l1_var(tape: &mut Tape, real: &[Var], resynth: &[Var]) -> Var {
    let parts: Vec<Var> = real.iter().zip(resynth).map(|(&a, &b)| tape.mean_abs_diff(a, b)).collect();
    tape.mean_scalars(&parts)
}

pub fn id_reconstruction_var(tape: &mut Tape, real: &[LatentVars; 3], resynth: &[LatentVars; 3]) -> Var {
    let pick = |f: fn(&LatentVars) -> Var, xs: &[LatentVars; 3]| xs.map(|x| f(&x));
    let pooled = branch_l1_var(tape, &pick(|x| x.f_bar_id, real), &pick(|x| x.f_bar_id, resynth));
    let seq = branch_l1_var(tape, &pick(|x| x.f_id, real), &pick(|x| x.f_id, resynth));
    let proj = branch_l1_var(tape, &pick(|x| x.h_id, real), &pick(|x| x.h_id, resynth));
    tape.mean_scalars(&[pooled, seq, proj])
}

fn constants(tape: &mut Tape, xs: &[&Tensor]) -> Vec<Var> {
    xs.iter().map(|t| tape.constant((*t).clone())).collect()
}

fn bundle_vars(tape: &mut Tape, b: &LatentBundle) -> LatentVars {
    LatentVars {
        f_mc: tape.constant(b.f_mc.clone()),
        f_id: tape.constant(b.f_id.clone()),
        f_bar_id: tape.constant(b.f_bar_id.clone()),
        h_id: tape.constant(b.h_id.clone()),
    }
}

pub fn id_reconstruction(real: &[LatentBundle; 3], resynth: &[LatentBundle; 3]) -> Result<f64> {
    for (a, b) in real.iter().zip(resynth) {
        if a.f_id.shape() != b.f_id.shape() || a.h_id.shape() != b.h_id.shape() {
            return Err(Error::Config("identity bundles disagree in shape".into()));
        }
    }
    let mut tape = Tape::new();
    let r = real.each_ref().map(|b| bundle_vars(&mut tape, b));
    let s = resynth.each_ref().map(|b| bundle_vars(&mut tape, b));
    let out = id_reconstruction_var(&mut tape, &r, &s);
    Ok(tape.scalar(out))
}

pub fn mc_reconstruction(real: &[Tensor; 3], resynth: &[Tensor; 3]) -> Result<f64> {
    let all: Vec<&Tensor> = real.iter().chain(resynth.iter()).collect();
    check_shapes(&all)?;
    let mut tape = Tape::new();
    let r = constants(&mut tape, &all[..3]);
    let s = constants(&mut tape, &all[3..]);
    let out = branch_l1_var(&mut tape, &r, &s);
    Ok(tape.scalar(out))
}

/// Mean elementwise L1 over the nine synthesized/ground-truth pairs.
pub fn motion_reconstruction(sys: &[[Tensor; 3]; 3], truth: &[[Tensor; 3]; 3]) -> Result<f64> {
    let s: Vec<&Tensor> = sys.iter().flatten().collect();
    let t: Vec<&Tensor> = truth.iter().flatten().collect();
    let all: Vec<&Tensor> = s.iter().chain(t.iter()).copied().collect();
    check_shapes(&all)?;
    let mut tape = Tape::new();
    let sv = constants(&mut tape, &s);
    let tv = constants(&mut tape, &t);
    let out = branch_l1_var(&mut tape, &sv, &tv);
    Ok(tape.scalar(out))
}

/// Discriminator objective on score nodes.
pub fn d_loss_var(tape: &mut Tape, real: &[Var], fake: &[Var], form: AdversarialForm) -> Var {
    let r: Vec<Var> = real
        .iter()
        .map(|&s| match form {
            AdversarialForm::LeastSquares => {
                let d = tape.add_scalar(s, -1.0);
                tape.square(d)
            }
            AdversarialForm::Log => {
                let l = tape.log_sigmoid(s);
                tape.scale(l, -1.0)
            }
        })
        .collect();
    let f: Vec<Var> = fake
        .iter()
        .map(|&s| match form {
            AdversarialForm::LeastSquares => tape.square(s),
            AdversarialForm::Log => {
                let neg = tape.scale(s, -1.0);
                let l = tape.log_sigmoid(neg);
                tape.scale(l, -1.0)
            }
        })
        .collect();
    let r = tape.mean_scalars(&r);
    let f = tape.mean_scalars(&f);
    let sum = tape.add(r, f);
    tape.scale(sum, 0.5)
}

/// Generator objective on score nodes of synthesized clips.
pub fn g_loss_var(tape: &mut Tape, fake: &[Var], form: AdversarialForm) -> Var {
    let f: Vec<Var> = fake
        .iter()
        .map(|&s| match form {
            AdversarialForm::LeastSquares => {
                let d = tape.add_scalar(s, -1.0);
                tape.square(d)
            }
            AdversarialForm::Log => {
                let l = tape.log_sigmoid(s);
                tape.scale(l, -1.0)
            }
        })
        .collect();
    let m = tape.mean_scalars(&f);
    tape.scale(m, 0.5)
}

/// `(d_loss, g_loss)` from raw discriminator scores.
pub fn adversarial_losses(real: &[f64], fake: &[f64], form: AdversarialForm) -> Result<(f64, f64)> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::Config("adversarial losses need at least one real and one fake score".into()));
    }
    let mut tape = Tape::new();
    let r: Vec<Var> = real.iter().map(|&s| tape.constant(Tensor::scalar(s))).collect();
    let f: Vec<Var> = fake.iter().map(|&s| tape.constant(Tensor::scalar(s))).collect();
    let d = d_loss_var(&mut tape, &r, &f, form);
    let g = g_loss_var(&mut tape, &f, form);
    Ok((tape.scalar(d), tape.scalar(g)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::check;
    use crate::nn::ParamStore;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    fn dist(a: &Tensor, b: &Tensor) -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    fn brute_force(e: &[Tensor], labels: &[usize], delta: f64, scale: f64) -> Option<f64> {
        let n = e.len();
        let mut valid = 0;
        let mut losses = Vec::new();
        for a in 0..n {
            for p in 0..n {
                for q in 0..n {
                    if a != p && labels[a] == labels[p] && labels[a] != labels[q] {
                        valid += 1;
                        let l = scale * dist(&e[a], &e[p]) - scale * dist(&e[a], &e[q]) + delta;
                        if l > 0.0 {
                            losses.push(l);
                        }
                    }
                }
            }
        }
        (valid > 0).then(|| if losses.is_empty() { 0.0 } else { losses.iter().sum::<f64>() / losses.len() as f64 })
    }

    #[test]
    fn id_triplet_examples() {
        let h = Tensor::column(&[0.3, -0.1]);
        assert!((id_triplet(&h, &h, &h, 0.2).unwrap() - 0.2).abs() < 1e-15);
        let h1 = Tensor::column(&[0.0, 4.0]);
        let h2 = Tensor::column(&[0.0, 0.0]);
        let h3 = Tensor::column(&[2.0, 0.0]);
        assert_eq!(id_triplet(&h1, &h2, &h3, 0.2).unwrap(), 0.0);
        // 0.5·2 − 0.5·1 + 0.2 = 0.7 once the negative moves closer.
        let h1 = Tensor::column(&[0.0, 1.0]);
        assert!((id_triplet(&h1, &h2, &h3, 0.2).unwrap() - 0.7).abs() < 1e-12);
        assert!(id_triplet(&h1, &h2, &Tensor::column(&[1.0]), 0.2).is_err());
    }

    #[test]
    fn mc_triplet_examples() {
        let f = Tensor::full(2, 3, 0.7);
        assert!((mc_triplet(&f, &f, &f, 0.2).unwrap() - 0.2).abs() < 1e-15);
        let far = Tensor::full(2, 3, 10.0);
        assert_eq!(mc_triplet(&f, &f, &far, 0.2).unwrap(), 0.0);
        // positive ‖(1,0,0,0,0,0)‖ = 1, negative ‖(0.. 0.6)‖ = 0.6·√6
        let f1 = Tensor::from_vec(2, 3, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let f2 = Tensor::zeros(2, 3);
        let f3 = Tensor::full(2, 3, 0.1);
        let expected = (1.0 / 6.0) * 1.0 - (1.0 / 6.0) * (6.0f64 * 0.01).sqrt() + 0.2;
        assert!((mc_triplet(&f1, &f2, &f3, 0.2).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn batch_all_single_triple_reduces_to_pairwise() {
        // Same-label pairs always yield two ordered triples; with a
        // duplicated anchor both equal the pairwise hinge.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = random(&mut rng, 4, 1);
        let n = random(&mut rng, 4, 1);
        let ba = batch_all_triplet(&[a.clone(), a.clone(), n.clone()], &[0, 0, 1], 5.0, 0.25).unwrap();
        let pw = id_triplet(&n, &a, &a, 5.0).unwrap();
        assert!((ba - pw).abs() < 1e-12);
    }

    #[test]
    fn batch_all_errors_and_zero() {
        let e = vec![Tensor::column(&[0.0]), Tensor::column(&[1.0])];
        assert!(matches!(batch_all_triplet(&e, &[0, 1], 0.2, 1.0), Err(Error::UndefinedBatch)));
        assert!(matches!(batch_all_triplet(&e, &[0, 0], 0.2, 1.0), Err(Error::UndefinedBatch)));
        let e = vec![Tensor::column(&[0.0]), Tensor::column(&[0.0]), Tensor::column(&[9.0])];
        assert_eq!(batch_all_triplet(&e, &[0, 0, 1], 0.2, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn batch_all_matches_brute_force_on_random_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e: Vec<Tensor> = (0..8).map(|_| random(&mut rng, 5, 1)).collect();
        let labels = [0, 1, 2, 0, 1, 2, 0, 1];
        let got = batch_all_triplet(&e, &labels, 0.2, 0.5).unwrap();
        let expected = brute_force(&e, &labels, 0.2, 0.5).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn batch_all_equals_enumeration(
            n in 2usize..=12,
            seed in any::<u64>(),
            k in 1usize..4,
            delta in 0.0f64..1.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let e: Vec<Tensor> = (0..n).map(|_| random(&mut rng, 3, 1)).collect();
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let got = batch_all_triplet(&e, &labels, delta, 1.0 / 3.0).ok();
            let expected = brute_force(&e, &labels, delta, 1.0 / 3.0);
            prop_assert_eq!(got.is_some(), expected.is_some());
            if let (Some(g), Some(x)) = (got, expected) {
                prop_assert!((g - x).abs() < 1e-12);
                prop_assert!(g >= 0.0);
            }
        }

        #[test]
        fn hinge_is_delta_when_collapsed(v in prop::collection::vec(-5.0f64..5.0, 4), delta in 0.0f64..2.0) {
            let t = Tensor::from_vec(2, 2, v);
            prop_assert!((mc_triplet(&t, &t, &t, delta).unwrap() - delta).abs() < 1e-12);
            let c = t.slice_cols(0, 1);
            prop_assert!((id_triplet(&c, &c, &c, delta).unwrap() - delta).abs() < 1e-12);
        }

        #[test]
        fn total_is_linear_in_each_term(vals in prop::collection::vec(0.0f64..10.0, 6), bump in 0.0f64..5.0) {
            let w = LossWeights::default();
            let terms = LossTerms { rec: vals[0], adv: vals[1], mc_rec: vals[2], mc_tri: vals[3], id_rec: vals[4], id_tri: vals[5] };
            let base = total_loss(&terms, 0.0, &w, 0).unwrap().total;
            let coeffs = [w.rec, w.adv, w.mc, w.mc, w.id, w.id];
            for (i, c) in coeffs.iter().enumerate() {
                let mut v = vals.clone();
                v[i] += bump;
                let t = LossTerms { rec: v[0], adv: v[1], mc_rec: v[2], mc_tri: v[3], id_rec: v[4], id_tri: v[5] };
                let bumped = total_loss(&t, 0.0, &w, 0).unwrap().total;
                prop_assert!((bumped - base - c * bump).abs() < 1e-9);
            }
        }
    }

    fn bundle(rng: &mut ChaCha8Rng) -> LatentBundle {
        let f_id = random(rng, 4, 3);
        LatentBundle {
            f_mc: random(rng, 2, 3),
            f_bar_id: f_id.row_means(),
            f_id,
            h_id: random(rng, 5, 1),
        }
    }

    #[test]
    fn id_reconstruction_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let real: [LatentBundle; 3] = std::array::from_fn(|_| bundle(&mut rng));
        assert_eq!(id_reconstruction(&real, &real).unwrap(), 0.0);
        let zero = |b: &LatentBundle, v: f64| LatentBundle {
            f_mc: b.f_mc.clone(),
            f_id: Tensor::full(4, 3, v),
            f_bar_id: Tensor::full(4, 1, v),
            h_id: Tensor::full(5, 1, v),
        };
        let zeros = real.each_ref().map(|b| zero(b, 0.0));
        let ones = real.each_ref().map(|b| zero(b, 1.0));
        assert!((id_reconstruction(&zeros, &ones).unwrap() - 1.0).abs() < 1e-15);
        let other: [LatentBundle; 3] = std::array::from_fn(|_| bundle(&mut rng));
        let l1 = |a: &Tensor, b: &Tensor| a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>();
        let (c_id, n_id, c_p) = (4.0, 3.0, 5.0);
        let mut pooled = 0.0;
        let mut seq = 0.0;
        let mut proj = 0.0;
        for i in 0..3 {
            pooled += l1(&real[i].f_bar_id, &other[i].f_bar_id);
            seq += l1(&real[i].f_id, &other[i].f_id);
            proj += l1(&real[i].h_id, &other[i].h_id);
        }
        let expected = (pooled / (3.0 * c_id) + seq / (3.0 * c_id * n_id) + proj / (3.0 * c_p)) / 3.0;
        assert!((id_reconstruction(&real, &other).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn mc_and_motion_reconstruction_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f: [Tensor; 3] = std::array::from_fn(|_| random(&mut rng, 2, 4));
        assert_eq!(mc_reconstruction(&f, &f).unwrap(), 0.0);
        let z: [Tensor; 3] = std::array::from_fn(|_| Tensor::zeros(2, 4));
        let o: [Tensor; 3] = std::array::from_fn(|_| Tensor::full(2, 4, 1.0));
        assert!((mc_reconstruction(&z, &o).unwrap() - 1.0).abs() < 1e-15);
        let g: [Tensor; 3] = std::array::from_fn(|_| random(&mut rng, 2, 4));
        let expected = (0..3)
            .map(|i| f[i].data().iter().zip(g[i].data()).map(|(a, b)| (a - b).abs()).sum::<f64>())
            .sum::<f64>()
            / (3.0 * 8.0);
        assert!((mc_reconstruction(&f, &g).unwrap() - expected).abs() < 1e-12);

        let truth: [[Tensor; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| random(&mut rng, 4, 8)));
        assert_eq!(motion_reconstruction(&truth, &truth).unwrap(), 0.0);
        let mut sys = truth.clone();
        sys[1][2] = truth[1][2].map(|v| v + 0.9);
        assert!((motion_reconstruction(&sys, &truth).unwrap() - 0.1).abs() < 1e-12);
        let sys: [[Tensor; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| random(&mut rng, 4, 8)));
        let mut expected = 0.0;
        for j in 0..3 {
            for k in 0..3 {
                expected += sys[j][k].data().iter().zip(truth[j][k].data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / 32.0;
            }
        }
        assert!((motion_reconstruction(&sys, &truth).unwrap() - expected / 9.0).abs() < 1e-12);
    }

    #[test]
    fn adversarial_examples() {
        let ls = AdversarialForm::LeastSquares;
        assert_eq!(adversarial_losses(&[1.0, 1.0], &[0.0], ls).unwrap().0, 0.0);
        assert_eq!(adversarial_losses(&[0.3], &[1.0, 1.0], ls).unwrap().1, 0.0);
        let (d, g) = adversarial_losses(&[0.5], &[0.25], ls).unwrap();
        assert!((d - 0.15625).abs() < 1e-15);
        assert!((g - 0.28125).abs() < 1e-15);
        let (d, g) = adversarial_losses(&[0.0], &[0.0], AdversarialForm::Log).unwrap();
        assert!((d - 2f64.ln()).abs() < 1e-12);
        assert!((g - 0.5 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn total_loss_examples_and_divergence() {
        let w = LossWeights::default();
        assert_eq!(total_loss(&LossTerms::default(), 0.0, &w, 0).unwrap().total, 0.0);
        let ones = LossTerms { rec: 1.0, adv: 1.0, mc_rec: 1.0, mc_tri: 1.0, id_rec: 1.0, id_tri: 1.0 };
        assert_eq!(total_loss(&ones, 0.0, &w, 0).unwrap().total, 28.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..3.0)).collect();
        let t = LossTerms { rec: v[0], adv: v[1], mc_rec: v[2], mc_tri: v[3], id_rec: v[4], id_tri: v[5] };
        let expected = 10.0 * v[0] + 2.0 * v[1] + 2.0 * (v[2] + v[3]) + 6.0 * (v[4] + v[5]);
        assert!((total_loss(&t, 0.0, &w, 0).unwrap().total - expected).abs() < 1e-12);
        let bad = LossTerms { mc_tri: f64::NAN, ..ones };
        match total_loss(&bad, 0.0, &w, 17) {
            Err(Error::Divergence { term, step }) => {
                assert_eq!(term, "mc_tri");
                assert_eq!(step, 17);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
        let mut tape = Tape::new();
        let vars: Vec<Var> = [v[0], v[1], v[2], v[3], v[4], v[5]].iter().map(|&x| tape.constant(Tensor::scalar(x))).collect();
        let lv = LossVars { rec: vars[0], adv: vars[1], mc_rec: vars[2], mc_tri: vars[3], id_rec: vars[4], id_tri: vars[5] };
        let tv = total_loss_var(&mut tape, &lv, &w);
        assert!((tape.scalar(tv) - expected).abs() < 1e-12);
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let store = ParamStore::new();
        let inputs: Vec<Tensor> = (0..3).map(|_| random(&mut rng, 3, 2)).collect();
        let report = check(&store, &[], &inputs, 1e-6, |tape, _, v| {
            let t = triplet_var(tape, v[1], v[0], v[2], 0.9, 1.0 / 6.0);
            let l = branch_l1_var(tape, &v[..2], &[v[2], v[0]]);
            tape.add(t, l)
        });
        assert!(report.max_rel_error < 1e-4, "{report:?}");
        let scores: Vec<Tensor> = (0..4).map(|_| random(&mut rng, 1, 1)).collect();
        for form in [AdversarialForm::LeastSquares, AdversarialForm::Log] {
            let report = check(&store, &[], &scores, 1e-6, |tape, _, v| {
                let d = d_loss_var(tape, &v[..2], &v[2..], form);
                let g = g_loss_var(tape, &v[2..], form);
                tape.add(d, g)
            });
            assert!(report.max_rel_error < 1e-4, "{report:?}");
        }
    }
}
