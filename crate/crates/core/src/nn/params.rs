use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Which optimizer owns a parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Generator,
    Discriminator,
}

#[derive(Clone, Debug)]
struct Entry {
    name: String,
    group: ParamGroup,
    value: Tensor,
}

/// Named, grouped storage for every learned tensor of a model.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    entries: Vec<Entry>,
}

/// LeakyReLU gain used for fan-in scaled initialization.
pub fn leaky_relu_gain(slope: f64) -> f64 {
    (2.0 / (1.0 + slope * slope)).sqrt()
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, group: ParamGroup, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            self.find(&name).is_none(),
            "duplicate parameter name {name}"
        );
        self.entries.push(Entry { name, group, value });
        ParamId(self.entries.len() - 1)
    }

    /// Adds a `rows × cols` tensor drawn from `N(0, (gain / sqrt(fan_in))²)`.
    pub fn add_normal<R: Rng>(
        &mut self,
        rng: &mut R,
        name: impl Into<String>,
        group: ParamGroup,
        (rows, cols): (usize, usize),
        fan_in: usize,
        gain: f64,
    ) -> ParamId {
        let std = gain / (fan_in.max(1) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite standard deviation");
        let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
        self.add(name, group, Tensor::from_vec(rows, cols, data))
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, group: ParamGroup, shape: (usize, usize)) -> ParamId {
        self.add(name, group, Tensor::zeros(shape.0, shape.1))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn ids_in(&self, group: ParamGroup) -> Vec<ParamId> {
        self.ids().filter(|&id| self.group(id) == group).collect()
    }

    /// Handle of the parameter at insertion position `index`.
    pub fn id_at(&self, index: usize) -> ParamId {
        assert!(index < self.entries.len(), "parameter index out of range");
        ParamId(index)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn group(&self, id: ParamId) -> ParamGroup {
        self.entries[id.0].group
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    /// Replaces a value, keeping the registered shape.
    pub fn set(&mut self, id: ParamId, value: Tensor) {
        let entry = &mut self.entries[id.0];
        assert_eq!(
            entry.value.shape(),
            value.shape(),
            "shape change for parameter {}",
            entry.name
        );
        entry.value = value;
    }

    /// Total number of scalars.
    pub fn numel(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    /// SHA-256 over names, shapes and the exact bit patterns of a group.
    pub fn digest(&self, group: Option<ParamGroup>) -> String {
        let mut hasher = Sha256::new();
        for e in &self.entries {
            if group.is_some_and(|g| g != e.group) {
                continue;
            }
            hasher.update(e.name.as_bytes());
            hasher.update((e.value.rows() as u64).to_le_bytes());
            hasher.update((e.value.cols() as u64).to_le_bytes());
            for v in e.value.data() {
                hasher.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn digest_tracks_groups_independently() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let g = store.add_normal(&mut rng, "g", ParamGroup::Generator, (2, 3), 3, 1.0);
        let d = store.add_normal(&mut rng, "d", ParamGroup::Discriminator, (1, 3), 3, 1.0);
        let before_g = store.digest(Some(ParamGroup::Generator));
        let before_d = store.digest(Some(ParamGroup::Discriminator));
        store.value_mut(d).data_mut()[0] += 1.0;
        assert_eq!(store.digest(Some(ParamGroup::Generator)), before_g);
        assert_ne!(store.digest(Some(ParamGroup::Discriminator)), before_d);
        assert_eq!(store.ids_in(ParamGroup::Generator), vec![g]);
        assert_eq!(store.numel(), 9);
    }
}
