//! Single-file checkpoint: magic, version, JSON header, little-endian f64
//! blocks and a trailing SHA-256 of everything before it.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::TrainConfig;
use super::trainer::Trainer;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::nn::{Adam, ParamGroup};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"IDMCKPT\0";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum BlockKind {
    Param,
    AdamM,
    AdamV,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct BlockEntry {
    name: String,
    kind: BlockKind,
    rows: usize,
    cols: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    model_config: ModelConfig,
    train_config: TrainConfig,
    epoch: usize,
    step: u64,
    decoder_calls: u64,
    dataset_digest: String,
    adam_g_steps: u64,
    adam_d_steps: u64,
    blocks: Vec<BlockEntry>,
}

/// Everything needed to resume training or run inference.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub trainer: Trainer,
    pub dataset_digest: String,
}

impl Checkpoint {
    pub fn new(trainer: Trainer, dataset_digest: impl Into<String>) -> Self {
        Self {
            trainer,
            dataset_digest: dataset_digest.into(),
        }
    }

    pub fn model(&self) -> &Model {
        &self.trainer.model
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let t = &self.trainer;
        let store = &t.model.store;
        let mut blocks = Vec::new();
        let mut payload: Vec<&Tensor> = Vec::new();
        for id in store.ids() {
            let v = store.value(id);
            blocks.push(BlockEntry {
                name: store.name(id).to_string(),
                kind: BlockKind::Param,
                rows: v.rows(),
                cols: v.cols(),
            });
            payload.push(v);
        }
        for adam in [&t.adam_g, &t.adam_d] {
            for (i, m, v) in adam.export() {
                let name = store.name(store.id_at(i)).to_string();
                for (kind, tensor) in [(BlockKind::AdamM, m), (BlockKind::AdamV, v)] {
                    blocks.push(BlockEntry {
                        name: name.clone(),
                        kind,
                        rows: tensor.rows(),
                        cols: tensor.cols(),
                    });
                    payload.push(tensor);
                }
            }
        }
        let header = Header {
            model_config: t.model.config.clone(),
            train_config: t.config.clone(),
            epoch: t.epoch,
            step: t.step,
            decoder_calls: t.decoder_calls,
            dataset_digest: self.dataset_digest.clone(),
            adam_g_steps: t.adam_g.steps(),
            adam_d_steps: t.adam_d.steps(),
            blocks,
        };
        let header = serde_json::to_vec(&header)?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for tensor in payload {
            for v in tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < MAGIC.len() + 12 + 32 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(bad("checksum mismatch (truncated or corrupted file)"));
        }
        let version = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let header_len = u64::from_le_bytes(body[12..20].try_into().expect("8 bytes")) as usize;
        let header_end = 20usize
            .checked_add(header_len)
            .filter(|&e| e <= body.len())
            .ok_or_else(|| bad("header length exceeds file"))?;
        let header: Header = serde_json::from_slice(&body[20..header_end])?;
        let mut cursor = header_end;
        let mut params = Vec::new();
        let mut moments: [Vec<(String, Option<Tensor>, Option<Tensor>)>; 2] = [Vec::new(), Vec::new()];
        let config = header.model_config.clone();
        let skeleton = Model::new(config.clone(), 0)?;
        for b in &header.blocks {
            let n = b.rows.checked_mul(b.cols).ok_or_else(|| bad("block size overflow"))?;
            let end = cursor
                .checked_add(n * 8)
                .filter(|&e| e <= body.len())
                .ok_or_else(|| bad("block data exceeds file"))?;
            let data = body[cursor..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            cursor = end;
            let tensor = Tensor::from_vec(b.rows, b.cols, data);
            match b.kind {
                BlockKind::Param => params.push((b.name.clone(), tensor)),
                kind => {
                    let id = skeleton
                        .store
                        .find(&b.name)
                        .ok_or_else(|| Error::Checkpoint(format!("optimizer state for unknown block {}", b.name)))?;
                    let slot = match skeleton.store.group(id) {
                        ParamGroup::Generator => 0,
                        ParamGroup::Discriminator => 1,
                    };
                    let list = &mut moments[slot];
                    if !list.iter().any(|(n, _, _)| n == &b.name) {
                        list.push((b.name.clone(), None, None));
                    }
                    let entry = list.iter_mut().find(|(n, _, _)| n == &b.name).expect("inserted");
                    if kind == BlockKind::AdamM {
                        entry.1 = Some(tensor);
                    } else {
                        entry.2 = Some(tensor);
                    }
                }
            }
        }
        if cursor != body.len() {
            return Err(bad("trailing bytes after the last block"));
        }
        let model = Model::with_params(config, params)?;
        let n_params = model.store.len();
        let restore = |adam: &mut Adam, steps: u64, list: Vec<(String, Option<Tensor>, Option<Tensor>)>| -> Result<()> {
            let mut out = Vec::new();
            for (name, m, v) in list {
                let (m, v) = m
                    .zip(v)
                    .ok_or_else(|| Error::Checkpoint(format!("incomplete optimizer state for {name}")))?;
                let id = model.store.find(&name).expect("validated above");
                out.push((id.index(), m, v));
            }
            adam.restore(steps, out, n_params);
            Ok(())
        };
        let [mg, md] = moments;
        let mut adam_g = Adam::new(header.train_config.adam, ParamGroup::Generator);
        let mut adam_d = Adam::new(header.train_config.adam, ParamGroup::Discriminator);
        restore(&mut adam_g, header.adam_g_steps, mg)?;
        restore(&mut adam_d, header.adam_d_steps, md)?;
        let trainer = Trainer {
            model,
            config: header.train_config,
            adam_g,
            adam_d,
            epoch: header.epoch,
            step: header.step,
            decoder_calls: header.decoder_calls,
        };
        Ok(Self {
            trainer,
            dataset_digest: header.dataset_digest,
        })
    }

    /// Writes to a sibling temporary file and renames it into place, so an
    /// interrupted write never clobbers the previous checkpoint.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
