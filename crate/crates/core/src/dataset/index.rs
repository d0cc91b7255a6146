use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::clip::MotionClip;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Clips indexed by (identity, content) with an identity-level train/test
/// partition.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetIndex {
    cells: BTreeMap<(String, String), Vec<MotionClip>>,
    split: BTreeMap<String, Split>,
}

/// Three clips where `m1`/`m2` share content but not identity and
/// `m2`/`m3` share identity but not content.
#[derive(Clone, Debug, PartialEq)]
pub struct TripletSample {
    pub m1: MotionClip,
    pub m2: MotionClip,
    pub m3: MotionClip,
}

impl TripletSample {
    pub fn is_valid(&self) -> bool {
        self.m1.mc_label == self.m2.mc_label
            && self.m1.id_label != self.m2.id_label
            && self.m2.id_label == self.m3.id_label
            && self.m2.mc_label != self.m3.mc_label
    }

    pub fn branches(&self) -> [&MotionClip; 3] {
        [&self.m1, &self.m2, &self.m3]
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    id_label: String,
    mc_label: String,
    path: String,
    split: Split,
}

impl DatasetIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a clip; a new identity joins the training split.
    pub fn insert(&mut self, clip: MotionClip) {
        self.split.entry(clip.id_label.clone()).or_insert(Split::Train);
        self.cells
            .entry((clip.id_label.clone(), clip.mc_label.clone()))
            .or_default()
            .push(clip);
    }

    pub fn len(&self) -> usize {
        self.cells.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> Vec<String> {
        self.split.keys().cloned().collect()
    }

    pub fn contents(&self) -> Vec<String> {
        self.cells
            .keys()
            .map(|(_, c)| c.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn cell(&self, id_label: &str, mc_label: &str) -> &[MotionClip] {
        self.cells
            .get(&(id_label.to_string(), mc_label.to_string()))
            .map_or(&[], Vec::as_slice)
    }

    /// Every clip in (identity, content, insertion) order.
    pub fn clips(&self) -> impl Iterator<Item = &MotionClip> {
        self.cells.values().flatten()
    }

    pub fn contents_of(&self, id_label: &str) -> Vec<String> {
        self.cells
            .iter()
            .filter(|((i, _), v)| i == id_label && !v.is_empty())
            .map(|((_, c), _)| c.clone())
            .collect()
    }

    pub fn split_of(&self, id_label: &str) -> Option<Split> {
        self.split.get(id_label).copied()
    }

    pub fn set_split(&mut self, id_label: &str, split: Split) {
        if let Some(s) = self.split.get_mut(id_label) {
            *s = split;
        }
    }

    /// Moves exactly the listed identities to the test split.
    pub fn split_by_ids(&mut self, test_ids: &[String]) -> Result<()> {
        for id in test_ids {
            if !self.split.contains_key(id) {
                return Err(Error::Config(format!("unknown identity {id:?}")));
            }
        }
        for (id, s) in self.split.iter_mut() {
            *s = if test_ids.contains(id) { Split::Test } else { Split::Train };
        }
        Ok(())
    }

    /// Moves `n_test` identities, chosen by `rng`, to the test split.
    pub fn split_random<R: Rng>(&mut self, n_test: usize, rng: &mut R) -> Result<()> {
        let mut ids = self.ids();
        if n_test > ids.len() {
            return Err(Error::Config(format!(
                "cannot hold out {n_test} of {} identities",
                ids.len()
            )));
        }
        ids.shuffle(rng);
        ids.truncate(n_test);
        self.split_by_ids(&ids)
    }

    /// Sub-index holding only the identities of one split.
    pub fn subset(&self, split: Split) -> Self {
        self.filter(|clip| self.split_of(&clip.id_label) == Some(split))
    }

    pub fn train(&self) -> Self {
        self.subset(Split::Train)
    }

    pub fn test(&self) -> Self {
        self.subset(Split::Test)
    }

    /// Sub-index of the clips accepted by `keep`; split assignments carry over.
    pub fn filter(&self, keep: impl Fn(&MotionClip) -> bool) -> Self {
        let mut out = Self::new();
        for clip in self.clips().filter(|c| keep(c)) {
            out.insert(clip.clone());
        }
        for (id, s) in out.split.iter_mut() {
            *s = self.split[id];
        }
        out
    }

    /// Content digest over labels, splits and the exact coordinates.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for ((id, mc), clips) in &self.cells {
            hasher.update(id.as_bytes());
            hasher.update([0]);
            hasher.update(mc.as_bytes());
            hasher.update([0]);
            hasher.update([matches!(self.split[id], Split::Test) as u8]);
            for clip in clips {
                for v in clip.data().data() {
                    hasher.update(v.to_bits().to_le_bytes());
                }
            }
        }
        hex::encode(hasher.finalize())
    }

    /// Writes every clip under `dir/clips/` plus `dir/manifest.csv`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir.join("clips"))?;
        let manifest = dir.join("manifest.csv");
        let mut writer = csv::Writer::from_path(&manifest)?;
        for (n, clip) in self.clips().enumerate() {
            let rel = format!("clips/{n:06}.clip");
            clip.save(&dir.join(&rel))?;
            writer.serialize(ManifestRow {
                id_label: clip.id_label.clone(),
                mc_label: clip.mc_label.clone(),
                path: rel,
                split: self.split[&clip.id_label],
            })?;
        }
        writer.flush()?;
        Ok(manifest)
    }

    /// Reads a manifest; clip paths are resolved relative to its directory.
    pub fn load_manifest(manifest: &Path) -> Result<Self> {
        let base = manifest.parent().unwrap_or(Path::new("."));
        let mut reader = csv::Reader::from_path(manifest)?;
        let mut index = Self::new();
        let mut splits: BTreeMap<String, Split> = BTreeMap::new();
        for row in reader.deserialize() {
            let row: ManifestRow = row?;
            let mut clip = MotionClip::load(&base.join(&row.path))?;
            clip.id_label = row.id_label.clone();
            clip.mc_label = row.mc_label;
            index.insert(clip);
            if splits.insert(row.id_label.clone(), row.split).is_some_and(|s| s != row.split) {
                return Err(Error::Config(format!(
                    "identity {:?} appears in both splits of {}",
                    row.id_label,
                    manifest.display()
                )));
            }
        }
        index.split = splits;
        Ok(index)
    }
}

/// Draws a [`TripletSample`] uniformly over identities able to anchor one.
pub fn sample_triplet<R: Rng>(index: &DatasetIndex, rng: &mut R) -> Result<TripletSample> {
    let ids_with_content = |mc: &str| -> Vec<String> {
        index
            .ids()
            .into_iter()
            .filter(|id| !index.cell(id, mc).is_empty())
            .collect()
    };
    // q anchors the triplet: it needs two contents, one of which is shared
    // with some other identity.
    let mut anchors = Vec::new();
    for q in index.ids() {
        let contents = index.contents_of(&q);
        if contents.len() < 2 {
            continue;
        }
        let shared: Vec<String> = contents
            .iter()
            .filter(|a| ids_with_content(a).len() >= 2)
            .cloned()
            .collect();
        if !shared.is_empty() {
            anchors.push((q, contents, shared));
        }
    }
    let (q, contents, shared) = anchors.choose(rng).ok_or_else(|| {
        Error::InsufficientDiversity(format!(
            "{} identities and {} contents cannot form a triplet",
            index.ids().len(),
            index.contents().len()
        ))
    })?;
    let a = shared.choose(rng).expect("non-empty");
    let b = contents
        .iter()
        .filter(|c| *c != a)
        .collect::<Vec<_>>()
        .choose(rng)
        .copied()
        .expect("at least two contents")
        .clone();
    let others: Vec<String> = ids_with_content(a).into_iter().filter(|p| p != q).collect();
    let p = others.choose(rng).expect("shared content has another identity");
    let pick = |id: &str, mc: &str, rng: &mut R| index.cell(id, mc).choose(rng).expect("populated").clone();
    let m1 = pick(p, a, rng);
    let m2 = pick(q, a, rng);
    let m3 = pick(q, &b, rng);
    Ok(TripletSample { m1, m2, m3 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn clip(id: &str, mc: &str, v: f64) -> MotionClip {
        MotionClip::new(Tensor::full(4, 8, v), id, mc).unwrap()
    }

    fn grid(n_ids: usize, n_contents: usize) -> DatasetIndex {
        let mut index = DatasetIndex::new();
        for i in 0..n_ids {
            for c in 0..n_contents {
                for k in 0..2 {
                    index.insert(clip(&format!("id{i}"), &format!("mc{c}"), (i * 100 + c * 10 + k) as f64));
                }
            }
        }
        index
    }

    #[test]
    fn minimal_grid_yields_valid_triplet() {
        let index = grid(2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_triplet(&index, &mut rng).unwrap().is_valid());
    }

    #[test]
    fn single_identity_is_insufficient() {
        let index = grid(1, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_triplet(&index, &mut rng),
            Err(Error::InsufficientDiversity(_))
        ));
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let index = grid(3, 3);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20).map(|_| sample_triplet(&index, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));
    }

    #[test]
    fn sparse_grid_only_uses_populated_cells() {
        let mut index = DatasetIndex::new();
        index.insert(clip("a", "x", 0.0));
        index.insert(clip("b", "x", 1.0));
        index.insert(clip("b", "y", 2.0));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let t = sample_triplet(&index, &mut rng).unwrap();
            assert!(t.is_valid());
            assert_eq!(t.m2.id_label, "b");
        }
    }

    #[test]
    fn splits_are_identity_disjoint() {
        let mut index = grid(6, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        index.split_random(2, &mut rng).unwrap();
        let train: BTreeSet<String> = index.train().ids().into_iter().collect();
        let test: BTreeSet<String> = index.test().ids().into_iter().collect();
        assert_eq!(test.len(), 2);
        assert_eq!(train.len(), 4);
        assert!(train.is_disjoint(&test));
        assert_eq!(index.train().len() + index.test().len(), index.len());
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut index = grid(2, 2);
        index.split_by_ids(&["id1".into()]).unwrap();
        let manifest = index.write_to_dir(dir.path()).unwrap();
        let back = DatasetIndex::load_manifest(&manifest).unwrap();
        assert_eq!(back, index);
        assert_eq!(back.digest(), index.digest());
    }
}
