//! Quantization of dynamic rows into token strings and feature hashing of
//! those strings into a fixed vocabulary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{DynamicRow, FlowKey, Label, RequestSequence, StaticPair};

/// Token string reserved for padding rows; always hashes to id 0.
pub const PAD: &str = "PAD";

pub const PAD_ID: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HasherConfig {
    /// Number of token ids, including the reserved padding id 0.
    pub m_vocab: usize,
    pub hash_seed: u64,
    /// Inter-arrival bin width in milliseconds.
    pub time_bin_ms: f64,
    /// Bin width in bytes for request length, TCP length and window size.
    pub len_bin: f64,
}

impl Default for HasherConfig {
    fn default() -> Self {
        HasherConfig {
            m_vocab: 4096,
            hash_seed: 0x5DD05,
            time_bin_ms: 100.0,
            len_bin: 16.0,
        }
    }
}

impl HasherConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_vocab < 2 {
            return Err(Error::Config("m_vocab must be at least 2".into()));
        }
        if !(self.time_bin_ms > 0.0) || !(self.len_bin > 0.0) {
            return Err(Error::Config("bin widths must be positive".into()));
        }
        Ok(())
    }
}

fn bin(value: f64, width: f64) -> u64 {
    (value / width).floor().max(0.0) as u64
}

/// Canonical token string for one row, without the padding shortcut.
pub fn row_string(row: &DynamicRow, prev_time: f64, cfg: &HasherConfig) -> String {
    let dt_ms = (row.abs_time - prev_time) * 1000.0;
    format!(
        "dt={}|len={}|ipf={:#x}|tlen={}|ack={}|tf={:#x}|win={}|hl={}",
        bin(dt_ms, cfg.time_bin_ms),
        bin(row.request_len, cfg.len_bin),
        row.ip_flags,
        bin(row.tcp_len, cfg.len_bin),
        u8::from(row.tcp_ack != 0.0),
        row.tcp_flags,
        bin(row.tcp_window, cfg.len_bin),
        row.highest_layer,
    )
}

/// Maps a row to its categorical token string. All-zero rows become [`PAD`].
pub fn quantize_row(row: &DynamicRow, prev_time: f64, cfg: &HasherConfig) -> String {
    if row.is_padding() {
        PAD.to_string()
    } else {
        row_string(row, prev_time, cfg)
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over the little-endian seed bytes followed by `bytes`.
pub fn fnv1a_seeded(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for b in seed.to_le_bytes().iter().chain(bytes) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

pub fn hash_token(token: &str, cfg: &HasherConfig) -> u32 {
    if token == PAD {
        return PAD_ID;
    }
    let buckets = (cfg.m_vocab - 1) as u64;
    1 + (fnv1a_seeded(cfg.hash_seed, token.as_bytes()) % buckets) as u32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizedSequence {
    /// `T` ids; positions at or past `true_len` hold [`PAD_ID`].
    pub tokens: Vec<u32>,
    pub true_len: usize,
    pub flow: FlowKey,
    pub static_pair: StaticPair,
    pub interval_index: usize,
    pub label: Option<Label>,
}

impl TokenizedSequence {
    pub fn observed(&self) -> &[u32] {
        &self.tokens[..self.true_len]
    }
}

/// Tokenizes a sequence. The first row's inter-arrival time is measured
/// against itself, so it always falls in bin 0.
pub fn encode_sequence(seq: &RequestSequence, cfg: &HasherConfig) -> TokenizedSequence {
    let mut tokens = vec![PAD_ID; seq.dynamic.len()];
    let mut prev_time = seq.dynamic.first().map_or(0.0, |r| r.abs_time);
    for (slot, row) in tokens.iter_mut().zip(&seq.dynamic).take(seq.true_len) {
        // A genuine all-zero packet inside the sequence must not collide
        // with the padding id.
        *slot = hash_token(&row_string(row, prev_time, cfg), cfg);
        prev_time = row.abs_time;
    }
    TokenizedSequence {
        tokens,
        true_len: seq.true_len,
        flow: seq.flow.clone(),
        static_pair: seq.static_pair.clone(),
        interval_index: seq.interval_index,
        label: seq.label,
    }
}

pub fn encode_all(seqs: &[RequestSequence], cfg: &HasherConfig) -> Vec<TokenizedSequence> {
    seqs.iter().map(|s| encode_sequence(s, cfg)).collect()
}
