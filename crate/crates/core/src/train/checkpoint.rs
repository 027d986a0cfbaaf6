use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::AdamState;
use super::config::TrainConfig;
use super::trainer::{stream_rng, BestSnapshot, Stream, Trainer};
use crate::autodiff::Tensor;
use crate::data::DatasetSplit;
use crate::error::{Error, Result};
use crate::interview::AtomVocab;
use crate::model::MiracleModel;
use crate::smiles::MolecularGraph;

pub const MAGIC: &[u8; 8] = b"MIRACKPT";
pub const FORMAT_VERSION: u32 = 1;

/// Serialized training state.
///
/// Layout: magic, `u32` version, `u64` header length, header text of
/// `key = value` lines (config, then `state.*`), `u32` tensor count, then per
/// tensor `u32` name length, name, `u32` rank, `u64` dims, little-endian `f64`s.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub state: BTreeMap<String, String>,
    pub tensors: Vec<(String, Tensor)>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| corrupt("truncated file"))?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| corrupt("length overflows"))
    }
}

impl Checkpoint {
    pub fn from_trainer(tr: &Trainer) -> Self {
        let mut state = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            state.insert(k.to_string(), v);
        };
        put("epoch", tr.epoch.to_string());
        put("stale", tr.stale.to_string());
        put("adam_step", tr.adam.step.to_string());
        let vocab: Vec<String> = tr.model.vocab().numbers().iter().map(u8::to_string).collect();
        put("vocab", vocab.join(","));
        put("rng.dropout", tr.dropout_rng.get_word_pos().to_string());
        put("rng.pairs", tr.pairs_rng.get_word_pos().to_string());
        put("rng.unlabeled", tr.unlabeled_rng.get_word_pos().to_string());
        if let Some(b) = &tr.best {
            put("best_epoch", b.epoch.to_string());
            put("best_auroc", b.auroc.to_string());
        }

        let store = &tr.model.store;
        let mut tensors = Vec::new();
        for (name, v) in store.iter() {
            tensors.push((format!("param.{name}"), v.clone()));
        }
        for ((name, _), m) in store.iter().zip(&tr.adam.m) {
            tensors.push((format!("adam.m.{name}"), m.clone()));
        }
        for ((name, _), v) in store.iter().zip(&tr.adam.v) {
            tensors.push((format!("adam.v.{name}"), v.clone()));
        }
        if let Some(b) = &tr.best {
            for ((name, _), v) in store.iter().zip(&b.params) {
                tensors.push((format!("best.{name}"), v.clone()));
            }
        }
        Checkpoint {
            config: tr.config.clone(),
            state,
            tensors,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = self.config.to_text();
        for (k, v) in &self.state {
            header.push_str(&format!("state.{k} = {v}\n"));
        }
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut c = Cursor { bytes, at: 0 };
        if c.take(8).ok() != Some(MAGIC.as_slice()) {
            return Err(corrupt("not a checkpoint file (bad magic)"));
        }
        let version = c.u32()?;
        if version != FORMAT_VERSION {
            return Err(corrupt(format!(
                "unsupported format version {version}; this build reads version {FORMAT_VERSION}"
            )));
        }
        let n = c.len()?;
        let header = std::str::from_utf8(c.take(n)?).map_err(|_| corrupt("header is not UTF-8"))?;
        let mut config_text = String::new();
        let mut state = BTreeMap::new();
        for line in header.lines() {
            match line.strip_prefix("state.") {
                Some(rest) => {
                    let (k, v) = rest.split_once('=').ok_or_else(|| corrupt(format!("bad state line {line:?}")))?;
                    state.insert(k.trim().to_string(), v.trim().to_string());
                }
                None => {
                    config_text.push_str(line);
                    config_text.push('\n');
                }
            }
        }
        let mut config = TrainConfig::default();
        config.apply_text(&config_text)?;

        let count = c.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let n = c.u32()? as usize;
            let name = std::str::from_utf8(c.take(n)?)
                .map_err(|_| corrupt("tensor name is not UTF-8"))?
                .to_string();
            let rank = c.u32()? as usize;
            let shape = (0..rank).map(|_| c.len()).collect::<Result<Vec<_>>>()?;
            let len = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .and_then(|l| l.checked_mul(8))
                .ok_or_else(|| corrupt(format!("tensor {name} is too large")))?;
            let data = c
                .take(len)?
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            tensors.push((name, Tensor::new(shape, data)?));
        }
        if c.at != bytes.len() {
            return Err(corrupt("trailing bytes after the last tensor"));
        }
        Ok(Checkpoint {
            config,
            state,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .state
            .get(key)
            .ok_or_else(|| corrupt(format!("missing state.{key}")))?;
        raw.parse()
            .map_err(|_| corrupt(format!("bad state.{key} value {raw:?}")))
    }

    fn vocab(&self) -> Result<AtomVocab> {
        let raw: String = self.get("vocab")?;
        let numbers = raw
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| corrupt(format!("bad vocab entry {s:?}"))))
            .collect::<Result<Vec<u8>>>()?;
        Ok(AtomVocab::new(numbers))
    }

    /// Tensors under `prefix`, ordered like the model's parameters.
    fn group(&self, model: &MiracleModel, prefix: &str) -> Result<Vec<Tensor>> {
        let by_name: HashMap<&str, &Tensor> = self
            .tensors
            .iter()
            .filter_map(|(n, t)| n.strip_prefix(prefix).map(|rest| (rest, t)))
            .collect();
        if by_name.len() != model.store.len() {
            return Err(corrupt(format!(
                "{} tensors under {prefix}, model has {}",
                by_name.len(),
                model.store.len()
            )));
        }
        model
            .store
            .iter()
            .map(|(name, v)| {
                let t = by_name
                    .get(name)
                    .ok_or_else(|| corrupt(format!("missing tensor {prefix}{name}")))?;
                if t.shape() != v.shape() {
                    return Err(corrupt(format!(
                        "tensor {prefix}{name} has shape {:?}, expected {:?}",
                        t.shape(),
                        v.shape()
                    )));
                }
                Ok((*t).clone())
            })
            .collect()
    }

    fn has_best(&self) -> bool {
        self.tensors.iter().any(|(n, _)| n.starts_with("best."))
    }

    /// The stored model: best-validation parameters when `best` and present.
    pub fn model(&self, best: bool) -> Result<MiracleModel> {
        let mut model = MiracleModel::init(self.config.dims, self.vocab()?, &mut ChaCha8Rng::seed_from_u64(0))?;
        let prefix = if best && self.has_best() { "best." } else { "param." };
        let values = self.group(&model, prefix)?;
        model.store.values_mut().clone_from_slice(&values);
        Ok(model)
    }

    /// Restores a trainer that continues exactly where the saved one stopped.
    pub fn resume(&self, graphs: &[MolecularGraph], split: DatasetSplit) -> Result<Trainer> {
        let model = self.model(false)?;
        let mut tr = Trainer::assemble(self.config.clone(), model, graphs, split)?;
        let mut adam = AdamState::new(&tr.model.store);
        adam.m = self.group(&tr.model, "adam.m.")?;
        adam.v = self.group(&tr.model, "adam.v.")?;
        adam.step = self.get("adam_step")?;
        tr.adam = adam;
        tr.epoch = self.get("epoch")?;
        tr.stale = self.get("stale")?;
        if self.has_best() {
            tr.best = Some(BestSnapshot {
                epoch: self.get("best_epoch")?,
                auroc: self.get("best_auroc")?,
                params: self.group(&tr.model, "best.")?,
            });
        }
        let seed = self.config.seed;
        for (key, stream, rng) in [
            ("rng.dropout", Stream::Dropout, &mut tr.dropout_rng),
            ("rng.pairs", Stream::Pairs, &mut tr.pairs_rng),
            ("rng.unlabeled", Stream::Unlabeled, &mut tr.unlabeled_rng),
        ] {
            let pos: u128 = self.get(key)?;
            *rng = stream_rng(seed, stream);
            rng.set_word_pos(pos);
        }
        Ok(tr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Dims;
    use crate::synthetic::toy_network;
    use crate::train::make_split;

    fn setup() -> (Vec<MolecularGraph>, DatasetSplit, Trainer) {
        let ds = toy_network(7).unwrap();
        let split = make_split(&ds, 7).unwrap();
        let config = TrainConfig {
            seed: 7,
            dims: Dims {
                d_h: 6,
                d_g: 6,
                d_u: 6,
                d_hid: 6,
                ..Dims::default()
            },
            ..TrainConfig::default()
        };
        let tr = Trainer::new(config, &ds.graphs, split.clone()).unwrap();
        (ds.graphs, split, tr)
    }

    #[test]
    fn bytes_round_trip() {
        let (_, _, mut tr) = setup();
        tr.step().unwrap();
        tr.step().unwrap();
        let ck = Checkpoint::from_trainer(&tr);
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.model(false).unwrap().store.values(), tr.model.store.values());
        assert_eq!(back.model(true).unwrap().store.values(), tr.best_model().store.values());
    }

    #[test]
    fn resume_continues_bit_identically() {
        let (graphs, split, mut tr) = setup();
        for _ in 0..3 {
            tr.step().unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        Checkpoint::from_trainer(&tr).save(&path).unwrap();
        let mut again = Checkpoint::load(&path).unwrap().resume(&graphs, split).unwrap();
        assert_eq!(again.epoch, 3);
        let (a, b) = (tr.step().unwrap(), again.step().unwrap());
        assert_eq!(a, b);
        assert_eq!(tr.model.store.values(), again.model.store.values());
        assert_eq!(tr.adam.v, again.adam.v);
    }

    #[test]
    fn damaged_files_are_rejected() {
        let (_, _, tr) = setup();
        let bytes = Checkpoint::from_trainer(&tr).to_bytes();

        let mut future = bytes.clone();
        future[8..12].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
        let err = Checkpoint::from_bytes(&future).unwrap_err().to_string();
        assert!(err.contains("version"), "{err}");

        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(Checkpoint::from_bytes(&magic).is_err());
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(Checkpoint::from_bytes(&longer).is_err());
    }

    #[test]
    fn missing_tensor_is_reported() {
        let (_, _, tr) = setup();
        let mut ck = Checkpoint::from_trainer(&tr);
        ck.tensors.retain(|(n, _)| n != "param.disc.w");
        let err = ck.model(false).unwrap_err().to_string();
        assert!(err.contains("param."), "{err}");
    }
}
