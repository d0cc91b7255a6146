//! Gallery/probe split, rank-k retrieval and the IDScore report.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::embedder::GaitEmbedder;
use super::keypoints::KeypointMapper;
use crate::dataset::MotionClip;
use crate::error::{Error, Result};
use crate::model::Model;

#[derive(Clone, Debug)]
pub struct GalleryProbe {
    pub gallery: Vec<MotionClip>,
    pub probe: Vec<MotionClip>,
}

/// Splits every identity's clips in half (gallery gets the smaller half),
/// shuffling within the identity with `seed`.
pub fn split_gallery_probe(clips: &[MotionClip], seed: u64) -> Result<GalleryProbe> {
    let mut by_id: BTreeMap<&str, Vec<&MotionClip>> = BTreeMap::new();
    for c in clips {
        by_id.entry(&c.id_label).or_default().push(c);
    }
    if by_id.is_empty() {
        return Err(Error::Split("no clips to split".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = GalleryProbe {
        gallery: Vec::new(),
        probe: Vec::new(),
    };
    for (id, mut group) in by_id {
        if group.len() < 2 {
            return Err(Error::Split(format!(
                "identity {id} has {} clip(s); gallery and probe each need one",
                group.len()
            )));
        }
        group.shuffle(&mut rng);
        let half = group.len() / 2;
        out.gallery.extend(group[..half].iter().map(|c| (*c).clone()));
        out.probe.extend(group[half..].iter().map(|c| (*c).clone()));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub rank1: f64,
    pub rank5: f64,
}

fn l2_normalized(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

/// Fraction of probes whose identity appears among the `k` nearest gallery
/// entries, for k = 1 and 5. Embeddings are L2-normalized; equal distances
/// are ordered by gallery position.
pub fn rank_from_embeddings(
    gallery: &[(Vec<f64>, String)],
    probe: &[(Vec<f64>, String)],
) -> Result<RankReport> {
    if gallery.is_empty() || probe.is_empty() {
        return Err(Error::Evaluation("gallery and probe must be non-empty".into()));
    }
    let dim = gallery[0].0.len();
    if gallery.iter().chain(probe).any(|(e, _)| e.len() != dim) {
        return Err(Error::Evaluation("embedding dimensions differ".into()));
    }
    let g: Vec<Vec<f64>> = gallery.iter().map(|(e, _)| l2_normalized(e.clone())).collect();
    let mut hits = [0usize; 2];
    for (e, label) in probe {
        let p = l2_normalized(e.clone());
        let mut order: Vec<(f64, usize)> = g
            .iter()
            .enumerate()
            .map(|(i, ge)| (ge.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(), i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (slot, k) in [1usize, 5].into_iter().enumerate() {
            if order.iter().take(k).any(|&(_, i)| &gallery[i].1 == label) {
                hits[slot] += 1;
            }
        }
    }
    let n = probe.len() as f64;
    Ok(RankReport {
        rank1: hits[0] as f64 / n,
        rank5: hits[1] as f64 / n,
    })
}

/// Embeds each clip and scores probes (labelled by `probe_labels`) against
/// the gallery.
pub fn rank_metrics(
    embedder: &dyn GaitEmbedder,
    gallery: &[MotionClip],
    probe: &[MotionClip],
    probe_labels: &[String],
) -> Result<RankReport> {
    if probe.len() != probe_labels.len() {
        return Err(Error::Evaluation("one label per probe clip".into()));
    }
    let g: Vec<(Vec<f64>, String)> = gallery
        .iter()
        .map(|c| Ok((embedder.embed(c)?, c.id_label.clone())))
        .collect::<Result<_>>()?;
    let p: Vec<(Vec<f64>, String)> = probe
        .iter()
        .zip(probe_labels)
        .map(|(c, l)| Ok((embedder.embed(c)?, l.clone())))
        .collect::<Result<_>>()?;
    rank_from_embeddings(&g, &p)
}

/// Recognition of reconstructed probes versus probes carrying a new
/// subject's identity. Higher `idscore` means stronger identity transfer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdScoreReport {
    pub rank1_rec: f64,
    pub rank1_cross: f64,
    pub idscore1: f64,
    pub rank5_rec: f64,
    pub rank5_cross: f64,
    pub idscore5: f64,
}

impl IdScoreReport {
    pub fn from_ranks(rec: RankReport, cross: RankReport) -> Self {
        Self {
            rank1_rec: rec.rank1,
            rank1_cross: cross.rank1,
            idscore1: rec.rank1 - cross.rank1,
            rank5_rec: rec.rank5,
            rank5_cross: cross.rank5,
            idscore5: rec.rank5 - cross.rank5,
        }
    }

    pub fn to_csv(&self) -> String {
        format!(
            "rank1_rec,rank1_cross,idscore1,rank5_rec,rank5_cross,idscore5\n{},{},{},{},{},{}\n",
            self.rank1_rec, self.rank1_cross, self.idscore1, self.rank5_rec, self.rank5_cross, self.idscore5
        )
    }

    pub fn write(&self, path: &Path, csv: bool) -> Result<()> {
        let text = if csv {
            self.to_csv()
        } else {
            serde_json::to_string_pretty(self)? + "\n"
        };
        std::fs::write(path, text)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdScoreEvaluation {
    pub report: IdScoreReport,
    /// Retrieval of the untouched probes, for reference.
    pub raw: RankReport,
    pub new_subject: String,
    pub embedder: String,
}

/// Runs both stages: probes are reconstructed with their own identity, then
/// re-synthesized with `new_subject`'s identity. Every clip, gallery
/// included, goes through `mapper` before embedding.
pub fn evaluate_idscore(
    model: &Model,
    split: &GalleryProbe,
    new_subject: &MotionClip,
    embedder: &dyn GaitEmbedder,
    mapper: &KeypointMapper,
) -> Result<IdScoreEvaluation> {
    let subject = &new_subject.id_label;
    if split.gallery.iter().chain(&split.probe).any(|c| &c.id_label == subject) {
        return Err(Error::ProtocolViolation(format!(
            "new subject {subject} appears in the gallery or probe set"
        )));
    }
    let labels: Vec<String> = split.probe.iter().map(|c| c.id_label.clone()).collect();
    let gallery: Vec<MotionClip> = split.gallery.iter().map(|c| mapper.to_coco17(c)).collect::<Result<_>>()?;
    let raw: Vec<MotionClip> = split.probe.iter().map(|c| mapper.to_coco17(c)).collect::<Result<_>>()?;
    let rec: Vec<MotionClip> = split
        .probe
        .iter()
        .map(|c| mapper.to_coco17(&model.reconstruct(c)?))
        .collect::<Result<_>>()?;
    let cross: Vec<MotionClip> = split
        .probe
        .iter()
        .map(|c| mapper.to_coco17(&model.retarget(c, new_subject)?))
        .collect::<Result<_>>()?;
    let raw = rank_metrics(embedder, &gallery, &raw, &labels)?;
    let rec = rank_metrics(embedder, &gallery, &rec, &labels)?;
    let cross = rank_metrics(embedder, &gallery, &cross, &labels)?;
    Ok(IdScoreEvaluation {
        report: IdScoreReport::from_ranks(rec, cross),
        raw,
        new_subject: subject.clone(),
        embedder: embedder.name(),
    })
}

/// Leave-nuisance-out 1-NN accuracy. Each entry is `(embedding, label,
/// nuisance)`; references sharing the query's nuisance are skipped, so a
/// query must be matched through some other instance of its label.
pub fn one_nn_accuracy(queries: &[(Vec<f64>, String, String)], references: &[(Vec<f64>, String, String)]) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::Evaluation("no queries".into()));
    }
    let mut hits = 0usize;
    for (q, label, nuisance) in queries {
        let best = references
            .iter()
            .filter(|(_, _, n)| n != nuisance)
            .map(|(r, l, _)| (r.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>(), l))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .ok_or_else(|| Error::Evaluation(format!("no reference outside nuisance group {nuisance}")))?;
        if best.1 == label {
            hits += 1;
        }
    }
    Ok(hits as f64 / queries.len() as f64)
}
