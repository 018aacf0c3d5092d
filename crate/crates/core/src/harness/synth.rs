//! Ground-truth traffic generator. Normal and attack flows draw request
//! templates from two known categorical profiles (optionally with a
//! first-order Markov component), so the exact log-likelihood ratio of any
//! generated sequence can be computed directly.

use std::collections::{BTreeMap, BTreeSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{DynamicRow, FlowKey, Label, PacketRecord, RequestSequence, StaticPair};
use crate::tokenize::{hash_token, row_string, HasherConfig, PAD_ID};

/// Number of template clusters used by the Markov component.
const CLUSTERS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_normal: usize,
    pub n_mixture: usize,
    /// Attack share of the mixture; `round(alpha · n_mixture)` flows are attacks.
    pub alpha: f64,
    /// Packets per flow.
    pub seq_len: usize,
    pub n_templates: usize,
    pub n_static_pairs: usize,
    /// Total-variation distance between the normal and attack profiles,
    /// applied to both the template and the static-pair distributions.
    pub divergence: f64,
    /// Weight of the cluster-to-next-cluster transition; `0` gives i.i.d.
    /// templates.
    pub markov: f64,
    /// Minutes the flows of each data set are spread over.
    pub duration_minutes: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_normal: 2000,
            n_mixture: 2000,
            alpha: 0.6,
            seq_len: 50,
            n_templates: 24,
            n_static_pairs: 6,
            divergence: 0.5,
            markov: 0.0,
            duration_minutes: 5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("synth alpha {} outside [0, 1]", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.divergence) {
            return Err(Error::Config(format!("divergence {} outside [0, 1]", self.divergence)));
        }
        if !(0.0..1.0).contains(&self.markov) {
            return Err(Error::Config(format!("markov weight {} outside [0, 1)", self.markov)));
        }
        if self.seq_len == 0 || self.n_templates < CLUSTERS || self.n_static_pairs < 2 {
            return Err(Error::Config(format!(
                "need seq_len >= 1, at least {CLUSTERS} templates and 2 static pairs"
            )));
        }
        if self.duration_minutes == 0 {
            return Err(Error::Config("duration_minutes must be >= 1".into()));
        }
        Ok(())
    }

    pub fn n_attack(&self) -> usize {
        (self.alpha * self.n_mixture as f64).round() as usize
    }
}

/// One class's generating distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile {
    pub templates: Vec<f64>,
    pub pairs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profiles {
    /// Request templates; `abs_time` is unused.
    pub templates: Vec<DynamicRow>,
    pub pairs: Vec<StaticPair>,
    pub normal: ClassProfile,
    pub attack: ClassProfile,
    pub markov: f64,
    /// Quantized token string of each template.
    pub token_strings: Vec<String>,
}

fn cluster(template: usize) -> usize {
    template % CLUSTERS
}

impl Profiles {
    /// Next-template distribution after `prev` (or the initial one).
    fn transition(&self, class: &ClassProfile, prev: Option<usize>) -> Vec<f64> {
        let base = &class.templates;
        match prev {
            Some(p) if self.markov > 0.0 => {
                let target = (cluster(p) + 1) % CLUSTERS;
                let size = (0..base.len()).filter(|&j| cluster(j) == target).count() as f64;
                base.iter()
                    .enumerate()
                    .map(|(j, &w)| {
                        let jump = if cluster(j) == target { 1.0 / size } else { 0.0 };
                        (1.0 - self.markov) * w + self.markov * jump
                    })
                    .collect()
            }
            _ => base.clone(),
        }
    }

    fn log_prob(&self, class: &ClassProfile, templates: &[Option<usize>], pair: Option<usize>) -> f64 {
        let floor = 1e-12f64;
        let mut lp = 0.0;
        let mut prev = None;
        for &t in templates {
            lp += match t {
                Some(j) => self.transition(class, prev)[j].max(floor).ln(),
                None => floor.ln(),
            };
            prev = t;
        }
        lp + pair.map_or(floor, |k| class.pairs[k].max(floor)).ln()
    }

    /// Template index of each observed row, `None` for rows that match no
    /// template.
    pub fn identify(&self, seq: &RequestSequence, hasher: &HasherConfig) -> Vec<Option<usize>> {
        let lookup: BTreeMap<&str, usize> = self
            .token_strings
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let rows = &seq.dynamic[..seq.true_len];
        let mut prev_time = rows.first().map_or(0.0, |r| r.abs_time);
        rows.iter()
            .map(|r| {
                let s = row_string(r, prev_time, hasher);
                prev_time = r.abs_time;
                lookup.get(s.as_str()).copied()
            })
            .collect()
    }
}

/// Exact `log P_normal(x) - log P_attack(x)` under the generating profiles,
/// including the static-pair term. Higher means more likely normal.
pub fn oracle_score(seq: &RequestSequence, profiles: &Profiles, hasher: &HasherConfig) -> f64 {
    let templates = profiles.identify(seq, hasher);
    let pair = profiles.pairs.iter().position(|p| *p == seq.static_pair);
    profiles.log_prob(&profiles.normal, &templates, pair) - profiles.log_prob(&profiles.attack, &templates, pair)
}

/// `log P(templates | class)` of the observed rows, without the static
/// pair term.
pub fn template_log_likelihood(seq: &RequestSequence, profiles: &Profiles, hasher: &HasherConfig, class: Label) -> f64 {
    let templates = profiles.identify(seq, hasher);
    let profile = match class {
        Label::Normal => &profiles.normal,
        Label::Attack => &profiles.attack,
    };
    profiles.log_prob(profile, &templates, Some(0)) - profile.pairs[0].max(1e-12).ln()
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub normal: Vec<PacketRecord>,
    pub mixture: Vec<PacketRecord>,
    pub profiles: Profiles,
}

const LAYERS: [&str; 4] = ["TCP", "HTTP", "TLS", "HTTP2"];
const TCP_FLAGS: [u32; 5] = [0x10, 0x18, 0x02, 0x12, 0x11];
const EXTRA: [&str; 8] = [
    "GET /index.html HTTP/1.1",
    "GET /search?q= HTTP/1.1",
    "POST /login HTTP/1.1",
    "GET /static/app.js HTTP/1.1",
    "Client Hello",
    "Application Data",
    "GET /api/items HTTP/1.1",
    "Encrypted Alert",
];
const PROTOCOLS: [&str; 3] = ["eth:ethertype:ip:tcp:http", "eth:ethertype:ip:tcp:tls", "eth:ethertype:ip:tcp"];

/// Candidate request template `j`. Request-length bins differ between
/// candidates, so every candidate has a distinct token string.
fn candidate(j: usize, rng: &mut ChaCha8Rng, hasher: &HasherConfig) -> DynamicRow {
    DynamicRow {
        abs_time: 0.0,
        request_len: (j as f64 + 1.0) * hasher.len_bin + 1.0,
        ip_flags: if rng.gen_bool(0.8) { 0x4000 } else { 0 },
        tcp_len: (rng.gen_range(0..8) as f64) * hasher.len_bin,
        tcp_ack: if rng.gen_bool(0.9) { 1.0 } else { 0.0 },
        tcp_flags: TCP_FLAGS[rng.gen_range(0..TCP_FLAGS.len())],
        tcp_window: (rng.gen_range(16..64) as f64) * hasher.len_bin,
        highest_layer: LAYERS[rng.gen_range(0..LAYERS.len())].to_string(),
    }
}

/// Templates whose token ids are pairwise distinct and never padding, so a
/// model over hashed ids can in principle match the oracle.
fn make_templates(n: usize, rng: &mut ChaCha8Rng, hasher: &HasherConfig) -> Result<(Vec<DynamicRow>, Vec<String>)> {
    if n >= hasher.m_vocab {
        return Err(Error::Config(format!(
            "{n} templates cannot get distinct ids in a vocabulary of {}",
            hasher.m_vocab
        )));
    }
    let mut used = BTreeSet::new();
    let mut rows = Vec::new();
    let mut strings = Vec::new();
    let mut j = 0;
    while rows.len() < n {
        let row = candidate(j, rng, hasher);
        j += 1;
        let s = row_string(&row, row.abs_time, hasher);
        let id = hash_token(&s, hasher);
        if id != PAD_ID && used.insert(id) {
            rows.push(row);
            strings.push(s);
        }
        if j > 1000 * n {
            return Err(Error::Config("could not find collision-free templates".into()));
        }
    }
    Ok((rows, strings))
}

fn normalized(w: Vec<f64>) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Attack profile at total-variation distance `divergence` from `normal`:
/// a blend of the normal profile with a spike on its `focus` most common
/// entries.
fn attack_profile(normal: &[f64], focus: usize, divergence: f64) -> Result<Vec<f64>> {
    let mut order: Vec<usize> = (0..normal.len()).collect();
    order.sort_by(|&a, &b| normal[b].total_cmp(&normal[a]).then(a.cmp(&b)));
    let mut spike = vec![0.0; normal.len()];
    for &i in order.iter().take(focus) {
        spike[i] = 1.0 / focus as f64;
    }
    let tv = total_variation(normal, &spike);
    if divergence > tv {
        return Err(Error::Config(format!(
            "divergence {divergence} exceeds the reachable maximum {tv:.3}"
        )));
    }
    let w = if tv == 0.0 { 0.0 } else { divergence / tv };
    Ok(normal.iter().zip(&spike).map(|(p, r)| (1.0 - w) * p + w * r).collect())
}

pub fn make_profiles(cfg: &SynthConfig, hasher: &HasherConfig, rng: &mut ChaCha8Rng) -> Result<Profiles> {
    let (templates, token_strings) = make_templates(cfg.n_templates, rng, hasher)?;
    let pairs: Vec<StaticPair> = (0..cfg.n_static_pairs)
        .map(|k| StaticPair::new(EXTRA[k % EXTRA.len()].to_string() + &"/".repeat(k / EXTRA.len()), PROTOCOLS[k % PROTOCOLS.len()]))
        .collect();
    let normal = ClassProfile {
        templates: normalized((0..cfg.n_templates).map(|_| rng.gen_range(0.2..1.0)).collect()),
        pairs: normalized((0..cfg.n_static_pairs).map(|_| rng.gen_range(0.2..1.0)).collect()),
    };
    let attack = ClassProfile {
        templates: attack_profile(&normal.templates, 3.min(cfg.n_templates), cfg.divergence)?,
        pairs: attack_profile(&normal.pairs, 1, cfg.divergence)?,
    };
    Ok(Profiles {
        templates,
        pairs,
        normal,
        attack,
        markov: cfg.markov,
        token_strings,
    })
}

struct Sampler {
    initial: WeightedIndex<f64>,
    /// Next-template distribution given the previous template's cluster.
    by_cluster: Vec<WeightedIndex<f64>>,
    pairs: WeightedIndex<f64>,
}

impl Sampler {
    fn new(profiles: &Profiles, class: &ClassProfile) -> Self {
        let by_cluster = (0..CLUSTERS)
            .map(|c| WeightedIndex::new(profiles.transition(class, Some(c))).expect("valid weights"))
            .collect();
        Sampler {
            initial: WeightedIndex::new(&class.templates).expect("valid weights"),
            by_cluster,
            pairs: WeightedIndex::new(&class.pairs).expect("valid weights"),
        }
    }

    fn templates(&self, len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::with_capacity(len);
        for _ in 0..len {
            let next = match out.last() {
                None => self.initial.sample(rng),
                Some(&p) => self.by_cluster[cluster(p)].sample(rng),
            };
            out.push(next);
        }
        out
    }
}

/// Start times: flows are spread evenly over the minutes, each starting at
/// a random offset early enough to finish inside its minute. The first
/// flow starts at time zero.
fn start_times(n: usize, minutes: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut times: Vec<f64> = (0..n)
        .map(|k| {
            let minute = (k * minutes) / n.max(1);
            minute as f64 * 60.0 + rng.gen_range(0.0..55.0)
        })
        .collect();
    if let Some(first) = times.first_mut() {
        *first = 0.0;
    }
    times
}

fn flow_ip(counter: usize) -> String {
    format!("10.{}.{}.{}", (counter >> 16) & 0xff, (counter >> 8) & 0xff, counter & 0xff)
}

#[allow(clippy::too_many_arguments)]
fn emit_flow(
    out: &mut Vec<PacketRecord>,
    profiles: &Profiles,
    sampler: &Sampler,
    start: f64,
    src: String,
    label: Label,
    len: usize,
    rng: &mut ChaCha8Rng,
) {
    let pair = profiles.pairs[sampler.pairs.sample(rng)].clone();
    let flow = FlowKey::new(src, "192.168.0.1");
    let mut t = start;
    for (k, j) in sampler.templates(len, rng).into_iter().enumerate() {
        if k > 0 {
            // Gaps stay below one inter-arrival bin.
            t += rng.gen_range(0.001..0.09);
        }
        let mut dynamic = profiles.templates[j].clone();
        dynamic.abs_time = (t * 1e6).round() / 1e6;
        out.push(PacketRecord {
            dynamic,
            static_pair: pair.clone(),
            flow: flow.clone(),
            label: Some(label),
        });
    }
}

fn sort_by_time(records: &mut [PacketRecord]) {
    records.sort_by(|a, b| a.abs_time().total_cmp(&b.abs_time()).then_with(|| a.flow.cmp(&b.flow)));
}

/// Generates a labeled normal-period set and a labeled mixture. Each flow
/// has its own source address and exactly `seq_len` packets.
pub fn synth_generate(cfg: &SynthConfig, hasher: &HasherConfig) -> Result<SynthData> {
    cfg.validate()?;
    hasher.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let profiles = make_profiles(cfg, hasher, &mut rng)?;
    let normal_sampler = Sampler::new(&profiles, &profiles.normal);
    let attack_sampler = Sampler::new(&profiles, &profiles.attack);
    let mut ip = 0usize;

    let mut normal = Vec::with_capacity(cfg.n_normal * cfg.seq_len);
    for start in start_times(cfg.n_normal, cfg.duration_minutes, &mut rng) {
        ip += 1;
        emit_flow(&mut normal, &profiles, &normal_sampler, start, flow_ip(ip), Label::Normal, cfg.seq_len, &mut rng);
    }
    sort_by_time(&mut normal);

    let mut is_attack = vec![false; cfg.n_mixture];
    for flag in is_attack.iter_mut().take(cfg.n_attack().min(cfg.n_mixture)) {
        *flag = true;
    }
    is_attack.shuffle(&mut rng);
    let mut mixture = Vec::with_capacity(cfg.n_mixture * cfg.seq_len);
    for (start, attack) in start_times(cfg.n_mixture, cfg.duration_minutes, &mut rng).into_iter().zip(is_attack) {
        ip += 1;
        let (sampler, label) = if attack {
            (&attack_sampler, Label::Attack)
        } else {
            (&normal_sampler, Label::Normal)
        };
        emit_flow(&mut mixture, &profiles, sampler, start, flow_ip(ip), label, cfg.seq_len, &mut rng);
    }
    sort_by_time(&mut mixture);
    Ok(SynthData {
        normal,
        mixture,
        profiles,
    })
}

/// One JSON object per line, newline-terminated.
pub fn to_jsonl(records: &[PacketRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_json_line());
        out.push('\n');
    }
    out
}
