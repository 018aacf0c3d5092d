//! Binary checkpoint: 8-byte magic, little-endian `u64` header length, a
//! JSON header, then little-endian `f32` tensor data in header index order.
//!
//! LSTM weights are stored per gate (`layer0.w_xi`, `layer0.w_hf`,
//! `layer0.b_o`, ...). Parameters are held as `f64` in memory and narrowed
//! to `f32` on save, so a loaded model saves back to identical bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cell::GATES;
use super::optim::OptimizerState;
use super::tensor::Parameters;
use super::{ModelConfig, Role, SequenceModel};
use crate::error::{Error, Result};
use crate::histogram::HistogramModel;
use crate::iterative::BinaryClassifier;
use crate::tokenize::HasherConfig;

pub const MAGIC: &[u8; 8] = b"NDCKPT01";
pub const VERSION: u32 = 1;

/// The network a checkpoint holds.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredModel {
    Sequence(SequenceModel),
    Classifier(BinaryClassifier),
}

impl StoredModel {
    pub fn config(&self) -> &ModelConfig {
        match self {
            StoredModel::Sequence(m) => &m.config,
            StoredModel::Classifier(c) => &c.config,
        }
    }

    fn role_tag(&self) -> &'static str {
        match self {
            StoredModel::Sequence(m) => match m.role {
                Role::N => "N",
                Role::D => "D",
            },
            StoredModel::Classifier(_) => "classifier",
        }
    }

    fn tensors(&self) -> Vec<super::ParamRef<'_>> {
        match self {
            StoredModel::Sequence(m) => m.tensors(),
            StoredModel::Classifier(c) => c.tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            StoredModel::Sequence(m) => m.tensors_mut(),
            StoredModel::Classifier(c) => c.tensors_mut(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: StoredModel,
    pub hasher: HasherConfig,
    pub histogram: Option<HistogramModel>,
    pub optimizer: Option<OptimizerState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the data section.
    pub offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerHeader {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub version: u32,
    pub role: String,
    pub model_config: ModelConfig,
    pub hasher_config: HasherConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<HistogramModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerHeader>,
    pub tensor_index: Vec<TensorEntry>,
}

/// A stored tensor: on-disk name, shape, values.
type Stored = (String, Vec<usize>, Vec<f64>);

/// Splits `[4H, k]` gate-stacked weights into four `[H, k]` blocks.
fn split_gates(prefix: &str, data: &[f64], hidden: usize, cols: usize, out: &mut Vec<Stored>) {
    for (g, gate) in GATES.iter().enumerate() {
        let block = data[g * hidden * cols..(g + 1) * hidden * cols].to_vec();
        let shape = if cols == 1 { vec![hidden] } else { vec![hidden, cols] };
        out.push((format!("{prefix}{gate}"), shape, block));
    }
}

/// Maps in-memory tensors to on-disk ones. `source` is aligned with the
/// model's `tensors()` order; moments use the same layout.
fn stored_tensors(model: &StoredModel, source: &[&[f64]], prefix: &str) -> Vec<Stored> {
    let mut out = Vec::new();
    for (t, data) in model.tensors().iter().zip(source) {
        let name = t.name.as_str();
        if let Some(rest) = name.strip_prefix("layer") {
            let (layer, kind) = rest.split_once('.').expect("layer tensor names are layerN.kind");
            let h = model.config().hidden_dim;
            let cols = if t.shape.len() == 2 { t.shape[1] } else { 1 };
            let base = match kind {
                "w_x" => "w_x",
                "w_h" => "w_h",
                _ => "b_",
            };
            split_gates(&format!("{prefix}layer{layer}.{base}"), data, h, cols, &mut out);
        } else {
            out.push((format!("{prefix}{name}"), t.shape.clone(), data.to_vec()));
        }
    }
    out
}

fn model_stored(model: &StoredModel) -> Vec<Stored> {
    let tensors = model.tensors();
    let data: Vec<&[f64]> = tensors.iter().map(|t| t.data).collect();
    stored_tensors(model, &data, "")
}

fn optimizer_stored(model: &StoredModel, opt: &OptimizerState) -> Vec<Stored> {
    let first: Vec<&[f64]> = opt.first.iter().map(|v| v.as_slice()).collect();
    let second: Vec<&[f64]> = opt.second.iter().map(|v| v.as_slice()).collect();
    let mut out = stored_tensors(model, &first, "adam.m.");
    out.extend(stored_tensors(model, &second, "adam.v."));
    out
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if let Some(opt) = &self.optimizer {
            if opt.first.len() != self.model.tensors().len() {
                return Err(Error::Shape("optimizer state does not match the model".into()));
            }
        }
        let mut stored = model_stored(&self.model);
        if let Some(opt) = &self.optimizer {
            stored.extend(optimizer_stored(&self.model, opt));
        }
        let mut offset = 0;
        let tensor_index = stored
            .iter()
            .map(|(name, shape, data)| {
                let e = TensorEntry {
                    name: name.clone(),
                    shape: shape.clone(),
                    offset,
                };
                offset += data.len() * 4;
                e
            })
            .collect();
        let header = Header {
            version: VERSION,
            role: self.model.role_tag().to_string(),
            model_config: *self.model.config(),
            hasher_config: self.hasher,
            histogram: self.histogram.clone(),
            optimizer: self.optimizer.as_ref().map(|o| OptimizerHeader {
                step: o.step,
                beta1: o.beta1,
                beta2: o.beta2,
                eps: o.eps,
            }),
            tensor_index,
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, _, data) in &stored {
            for &v in data {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, data) = split_header(bytes)?;
        let expected: usize = header.tensor_index.iter().map(|e| e.shape.iter().product::<usize>() * 4).sum();
        if expected != data.len() {
            return Err(Error::Truncated(format!(
                "header describes {expected} bytes of tensor data, file has {}",
                data.len()
            )));
        }
        let cfg = header.model_config;
        cfg.validate()?;
        let mut model = match header.role.as_str() {
            "N" => StoredModel::Sequence(SequenceModel::zeros(cfg, Role::N)),
            "D" => StoredModel::Sequence(SequenceModel::zeros(cfg, Role::D)),
            "classifier" => StoredModel::Classifier(BinaryClassifier::zeros(cfg)),
            other => return Err(Error::Version(format!("unknown role tag {other:?}"))),
        };
        let lookup = |name: &str, shape: &[usize]| -> Result<Vec<f64>> {
            let entry = header
                .tensor_index
                .iter()
                .find(|e| e.name == name)
                .ok_or_else(|| Error::Shape(format!("tensor {name} missing from checkpoint")))?;
            if entry.shape != shape {
                return Err(Error::Shape(format!(
                    "tensor {name}: stored shape {:?}, model expects {:?}",
                    entry.shape, shape
                )));
            }
            let n: usize = shape.iter().product();
            let end = entry.offset + n * 4;
            let raw = data
                .get(entry.offset..end)
                .ok_or_else(|| Error::Truncated(format!("tensor {name} runs past the data section")))?;
            Ok(raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect())
        };
        let layout = model_stored(&model);
        let mut values = Vec::new();
        for (name, shape, _) in &layout {
            values.push(lookup(name, shape)?);
        }
        fill(&mut model, &values);

        let optimizer = match header.optimizer {
            None => None,
            Some(oh) => {
                let zeros: Vec<Vec<f64>> = model.tensors().iter().map(|t| vec![0.0; t.data.len()]).collect();
                let mut opt = OptimizerState {
                    first: zeros.clone(),
                    second: zeros,
                    step: oh.step,
                    beta1: oh.beta1,
                    beta2: oh.beta2,
                    eps: oh.eps,
                };
                let layout = optimizer_stored(&model, &opt);
                let half = layout.len() / 2;
                let mut first = Vec::new();
                let mut second = Vec::new();
                for (i, (name, shape, _)) in layout.iter().enumerate() {
                    let v = lookup(name, shape)?;
                    if i < half {
                        first.push(v);
                    } else {
                        second.push(v);
                    }
                }
                opt.first = join(&model, &first);
                opt.second = join(&model, &second);
                Some(opt)
            }
        };
        Ok(Checkpoint {
            model,
            hasher: header.hasher_config,
            histogram: header.histogram,
            optimizer,
        })
    }
}

/// Regroups per-gate stored blocks into in-memory tensors, in
/// `tensors()` order.
fn join(model: &StoredModel, stored: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut it = stored.iter();
    for t in model.tensors() {
        if t.name.starts_with("layer") {
            let mut joined = Vec::with_capacity(t.data.len());
            for _ in 0..GATES.len() {
                joined.extend_from_slice(it.next().expect("layout matches"));
            }
            out.push(joined);
        } else {
            out.push(it.next().expect("layout matches").clone());
        }
    }
    out
}

fn fill(model: &mut StoredModel, stored: &[Vec<f64>]) {
    let joined = join(model, stored);
    for (dst, src) in model.tensors_mut().into_iter().zip(joined) {
        dst.copy_from_slice(&src);
    }
}

fn split_header(bytes: &[u8]) -> Result<(Header, &[u8])> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(Error::Version("bad magic; not a checkpoint of this format".into()));
    }
    let len_bytes: [u8; 8] = bytes
        .get(8..16)
        .ok_or_else(|| Error::Truncated("file ends inside the header length".into()))?
        .try_into()
        .expect("slice of length 8");
    let len = u64::from_le_bytes(len_bytes) as usize;
    let json = bytes
        .get(16..16usize.saturating_add(len))
        .ok_or_else(|| Error::Truncated(format!("header claims {len} bytes past end of file")))?;
    let header: Header = serde_json::from_slice(json)?;
    if header.version != VERSION {
        return Err(Error::Version(format!(
            "checkpoint version {}, this build reads {VERSION}",
            header.version
        )));
    }
    Ok((header, &bytes[16 + len..]))
}

/// Reads only the header; cheap even for large checkpoints.
pub fn read_header(path: &Path) -> Result<Header> {
    let bytes = fs::read(path)?;
    Ok(split_header(&bytes)?.0)
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, ckpt.to_bytes()?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?)
}

/// Loads a checkpoint that must hold a sequence model.
pub fn load_sequence_model(path: &Path) -> Result<(SequenceModel, Checkpoint)> {
    let ckpt = load_checkpoint(path)?;
    match &ckpt.model {
        StoredModel::Sequence(m) => Ok((m.clone(), ckpt)),
        StoredModel::Classifier(_) => Err(Error::Shape("checkpoint holds a classifier, not a sequence model".into())),
    }
}
