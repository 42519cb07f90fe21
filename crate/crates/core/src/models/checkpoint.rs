//! Checkpoint file: `AVC1` header line, one `name dims...` line per tensor,
//! `blob <bytes>` followed by the little-endian `f32` data in header order,
//! then a `config` line and `key=value` lines.

use std::fs;
use std::path::Path;

use super::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::optim::ParamStore;
use crate::tensor::Tensor;

const MAGIC: &str = "AVC1";
const OPTIMIZER_PREFIX: &str = "rmsprop:";
const MODEL_KEYS: [&str; 11] = [
    "kind",
    "domain",
    "n",
    "levels",
    "features",
    "orientations",
    "iterations",
    "sweeps",
    "hidden",
    "cell_size_m",
    "seed",
];

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub tensors: Vec<(String, Tensor<f32>)>,
    /// Extra `key=value` entries (training state, schedule).
    pub meta: Vec<(String, String)>,
}

impl Checkpoint {
    pub fn from_model(model: &Model<f32>) -> Self {
        let tensors = model.params.iter().map(|p| (p.name.clone(), p.value.clone())).collect();
        Checkpoint { config: model.config.clone(), tensors, meta: Vec::new() }
    }

    /// Parameters plus their RMSprop accumulators.
    pub fn with_optimizer_state(model: &Model<f32>) -> Self {
        let mut ck = Self::from_model(model);
        for p in model.params.iter() {
            let acc = Tensor::new(p.value.shape().to_vec(), p.rmsprop_accumulator.clone());
            ck.tensors.push((format!("{OPTIMIZER_PREFIX}{}", p.name), acc));
        }
        ck
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        assert!(!MODEL_KEYS.contains(&key), "meta key {key} clashes with the model config");
        let value = value.to_string();
        match self.meta.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.meta.push((key.to_string(), value)),
        }
    }

    pub fn to_model(&self) -> Result<Model<f32>> {
        let mut params = ParamStore::new();
        for (name, t) in self.tensors.iter().filter(|(n, _)| !n.starts_with(OPTIMIZER_PREFIX)) {
            params.add(name, t.clone())?;
        }
        for (name, t) in self.tensors.iter() {
            if let Some(base) = name.strip_prefix(OPTIMIZER_PREFIX) {
                let p = params
                    .by_name_mut(base)
                    .ok_or_else(|| Error::Format(format!("optimizer state for unknown {base}")))?;
                if p.value.shape() != t.shape() {
                    return Err(Error::Format(format!("optimizer state shape mismatch for {base}")));
                }
                p.rmsprop_accumulator = t.data().to_vec();
            }
        }
        Model::from_params(self.config.clone(), params)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut head = format!("{MAGIC}\n");
        let mut blob = Vec::new();
        for (name, t) in &self.tensors {
            head.push_str(name);
            for d in t.shape() {
                head.push_str(&format!(" {d}"));
            }
            head.push('\n');
            for v in t.data() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        head.push_str(&format!("blob {}\n", blob.len()));
        let mut out = head.into_bytes();
        out.extend_from_slice(&blob);
        let mut tail = String::from("\nconfig\n");
        for (k, v) in self.config.to_pairs().iter().chain(&self.meta) {
            tail.push_str(&format!("{k}={v}\n"));
        }
        out.extend_from_slice(tail.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("checkpoint: {m}"));
        let mut pos = 0;
        let next_line = |pos: &mut usize| -> Result<String> {
            let rest = &bytes[*pos..];
            let end = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("truncated header"))?;
            *pos += end + 1;
            String::from_utf8(rest[..end].to_vec()).map_err(|_| bad("header is not text"))
        };
        if next_line(&mut pos)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let mut shapes: Vec<(String, Vec<usize>)> = Vec::new();
        let blob_len = loop {
            let line = next_line(&mut pos)?;
            let mut parts = line.split(' ');
            let name = parts.next().unwrap_or_default().to_string();
            let dims: Vec<usize> = parts
                .map(|d| d.parse().map_err(|_| bad(&format!("bad dimension in {line:?}"))))
                .collect::<Result<_>>()?;
            if name == "blob" {
                break *dims.first().ok_or_else(|| bad("blob line without length"))?;
            }
            if name.is_empty() {
                return Err(bad("empty tensor name"));
            }
            shapes.push((name, dims));
        };
        let expected: usize = shapes.iter().map(|(_, s)| s.iter().product::<usize>() * 4).sum();
        if blob_len != expected || bytes.len() < pos + blob_len {
            return Err(bad("blob length does not match the tensor descriptors"));
        }
        let mut floats = bytes[pos..pos + blob_len]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
        let tensors = shapes
            .into_iter()
            .map(|(name, shape)| {
                let len = shape.iter().product();
                let data: Vec<f32> = floats.by_ref().take(len).collect();
                (name, Tensor::new(shape, data))
            })
            .collect();
        let tail = std::str::from_utf8(&bytes[pos + blob_len..]).map_err(|_| bad("config is not text"))?;
        let mut lines = tail.lines().skip_while(|l| l.is_empty());
        if lines.next() != Some("config") {
            return Err(bad("missing config block"));
        }
        let mut pairs = Vec::new();
        for l in lines.filter(|l| !l.is_empty()) {
            let (k, v) = l.split_once('=').ok_or_else(|| bad(&format!("bad config line {l:?}")))?;
            pairs.push((k.to_string(), v.to_string()));
        }
        let config = ModelConfig::from_pairs(|k| pairs.iter().find(|(a, _)| a == k).map(|(_, v)| v.clone()))?;
        let meta = pairs.into_iter().filter(|(k, _)| !MODEL_KEYS.contains(&k.as_str())).collect();
        Ok(Checkpoint { config, tensors, meta })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
