//! Packet record parsing, interval splitting and request-sequence assembly.
//!
//! Input is one JSON object per line carrying the eight dynamic attributes
//! (time, lengths, flags, window, highest layer) and the two static ones
//! (extra info, protocol list) of a sub-request, plus its flow identity.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Attack,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Attack => "attack",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "normal" => Some(Label::Normal),
            "attack" => Some(Label::Attack),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// (source, destination) address pair identifying a flow.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowKey {
    pub src_ip: String,
    pub dst_ip: String,
}

impl FlowKey {
    pub fn new(src_ip: impl Into<String>, dst_ip: impl Into<String>) -> Self {
        FlowKey {
            src_ip: src_ip.into(),
            dst_ip: dst_ip.into(),
        }
    }
}

/// The (extra info, protocol list) pair modelled by the histogram.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StaticPair {
    pub extra_info: String,
    pub protocols: String,
}

impl StaticPair {
    pub fn new(extra_info: impl Into<String>, protocols: impl Into<String>) -> Self {
        StaticPair {
            extra_info: extra_info.into(),
            protocols: protocols.into(),
        }
    }
}

/// The eight per-packet attributes that vary along a sequence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DynamicRow {
    pub abs_time: f64,
    pub request_len: f64,
    pub ip_flags: u32,
    pub tcp_len: f64,
    pub tcp_ack: f64,
    pub tcp_flags: u32,
    pub tcp_window: f64,
    pub highest_layer: String,
}

impl DynamicRow {
    /// True for the all-zero row used to pad sequences.
    pub fn is_padding(&self) -> bool {
        self.abs_time == 0.0
            && self.request_len == 0.0
            && self.ip_flags == 0
            && self.tcp_len == 0.0
            && self.tcp_ack == 0.0
            && self.tcp_flags == 0
            && self.tcp_window == 0.0
            && self.highest_layer.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PacketRecord {
    pub dynamic: DynamicRow,
    pub static_pair: StaticPair,
    pub flow: FlowKey,
    pub label: Option<Label>,
}

impl PacketRecord {
    pub fn abs_time(&self) -> f64 {
        self.dynamic.abs_time
    }

    /// Serializes to one line of the ingest format. Flag fields are written
    /// as zero-padded `0x` hex strings.
    pub fn to_json_line(&self) -> String {
        let d = &self.dynamic;
        let mut obj = Map::new();
        obj.insert("abs_time".into(), Value::from(d.abs_time));
        obj.insert("request_len".into(), Value::from(d.request_len));
        obj.insert("ip_flags".into(), Value::from(format!("0x{:08x}", d.ip_flags)));
        obj.insert("tcp_len".into(), Value::from(d.tcp_len));
        obj.insert("tcp_ack".into(), Value::from(d.tcp_ack));
        obj.insert("tcp_flags".into(), Value::from(format!("0x{:08x}", d.tcp_flags)));
        obj.insert("tcp_window".into(), Value::from(d.tcp_window));
        obj.insert("highest_layer".into(), Value::from(d.highest_layer.clone()));
        obj.insert("extra_info".into(), Value::from(self.static_pair.extra_info.clone()));
        obj.insert("protocols".into(), Value::from(self.static_pair.protocols.clone()));
        obj.insert("src_ip".into(), Value::from(self.flow.src_ip.clone()));
        obj.insert("dst_ip".into(), Value::from(self.flow.dst_ip.clone()));
        if let Some(label) = self.label {
            obj.insert("label".into(), Value::from(label.as_str()));
        }
        Value::Object(obj).to_string()
    }
}

const FIELD_ORDER: [&str; 12] = [
    "abs_time",
    "request_len",
    "ip_flags",
    "tcp_len",
    "tcp_ack",
    "tcp_flags",
    "tcp_window",
    "highest_layer",
    "extra_info",
    "protocols",
    "src_ip",
    "dst_ip",
];

fn field<'a>(obj: &'a Map<String, Value>, name: &str) -> Result<&'a Value> {
    obj.get(name).ok_or_else(|| Error::MissingField(name.to_string()))
}

fn number(obj: &Map<String, Value>, name: &str) -> Result<f64> {
    let v = field(obj, name)?
        .as_f64()
        .ok_or_else(|| Error::Domain(format!("`{name}` must be a number")))?;
    if !v.is_finite() || v < 0.0 {
        return Err(Error::Domain(format!("`{name}` must be finite and non-negative, got {v}")));
    }
    Ok(v)
}

fn flags(obj: &Map<String, Value>, name: &str) -> Result<u32> {
    let raw = field(obj, name)?;
    let value = match raw {
        Value::String(s) => {
            let s = s.trim();
            let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
                Some(hex) => u64::from_str_radix(hex, 16),
                None => s.parse::<u64>(),
            };
            parsed.map_err(|_| Error::Domain(format!("`{name}` is not a hex integer: {s:?}")))?
        }
        Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                u
            } else if n.as_i64().is_some() {
                return Err(Error::Domain(format!("`{name}` must be non-negative")));
            } else {
                let f = n.as_f64().unwrap_or(f64::NAN);
                if f < 0.0 {
                    return Err(Error::Domain(format!("`{name}` must be non-negative")));
                }
                if f.fract() != 0.0 || !f.is_finite() {
                    return Err(Error::Domain(format!("`{name}` must be an integer")));
                }
                f as u64
            }
        }
        _ => return Err(Error::Domain(format!("`{name}` must be a hex string or integer"))),
    };
    u32::try_from(value).map_err(|_| Error::Domain(format!("`{name}` exceeds 32 bits")))
}

fn text(obj: &Map<String, Value>, name: &str) -> Result<String> {
    match field(obj, name)? {
        Value::String(s) => Ok(s.clone()),
        _ => Err(Error::Domain(format!("`{name}` must be a string"))),
    }
}

/// Parses one JSON-lines packet record.
pub fn parse_packet_line(line: &str) -> Result<PacketRecord> {
    let value: Value = serde_json::from_str(line).map_err(|e| Error::Parse {
        offset: byte_offset(line, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let obj = match value {
        Value::Object(obj) => obj,
        _ => {
            return Err(Error::Parse {
                offset: 0,
                message: "expected a JSON object".into(),
            })
        }
    };
    // Report the first missing field in declaration order.
    if let Some(missing) = FIELD_ORDER.iter().find(|f| !obj.contains_key(**f)) {
        return Err(Error::MissingField((*missing).to_string()));
    }

    let dynamic = DynamicRow {
        abs_time: number(&obj, "abs_time")?,
        request_len: number(&obj, "request_len")?,
        ip_flags: flags(&obj, "ip_flags")?,
        tcp_len: number(&obj, "tcp_len")?,
        tcp_ack: number(&obj, "tcp_ack")?,
        tcp_flags: flags(&obj, "tcp_flags")?,
        tcp_window: number(&obj, "tcp_window")?,
        highest_layer: text(&obj, "highest_layer")?,
    };
    let label = match obj.get("label") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(
            Label::parse(s).ok_or_else(|| Error::Domain(format!("unknown label {s:?}")))?,
        ),
        Some(_) => return Err(Error::Domain("`label` must be a string".into())),
    };
    Ok(PacketRecord {
        dynamic,
        static_pair: StaticPair::new(text(&obj, "extra_info")?, text(&obj, "protocols")?),
        flow: FlowKey::new(text(&obj, "src_ip")?, text(&obj, "dst_ip")?),
        label,
    })
}

// serde_json reports 1-based line/column; convert to a 0-based byte offset.
fn byte_offset(input: &str, line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (i, l) in input.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)).min(input.len());
        }
        offset += l.len();
    }
    offset.min(input.len())
}

/// Parses every non-blank line; errors carry the 1-based line number.
pub fn parse_jsonl(input: &str) -> Result<Vec<PacketRecord>> {
    let mut out = Vec::new();
    let mut line_start = 0usize;
    for (i, line) in input.split('\n').enumerate() {
        let trimmed = line.trim_end_matches('\r');
        if !trimmed.trim().is_empty() {
            let record = parse_packet_line(trimmed).map_err(|e| match e {
                Error::Parse { offset, message } => Error::Parse {
                    offset: line_start + offset,
                    message: format!("line {}: {message}", i + 1),
                },
                Error::MissingField(f) => Error::MissingField(format!("{f} (line {})", i + 1)),
                Error::Domain(m) => Error::Domain(format!("line {}: {m}", i + 1)),
                other => other,
            })?;
            out.push(record);
        }
        line_start += line.len() + 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    /// Sequence length `T`.
    pub seq_len: usize,
    /// Minimum packets per source address within one interval.
    pub epsilon: usize,
    /// Interval width in minutes; `f64::INFINITY` puts everything in one interval.
    pub interval_minutes: f64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            seq_len: 200,
            epsilon: 3,
            interval_minutes: 1.0,
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seq_len < 2 {
            return Err(Error::Config("seq_len must be at least 2".into()));
        }
        if self.epsilon < 1 {
            return Err(Error::Config("epsilon must be at least 1".into()));
        }
        if !(self.interval_minutes > 0.0) {
            return Err(Error::Config("interval_minutes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct IntervalStream {
    pub intervals: Vec<Vec<PacketRecord>>,
    pub origin_time: f64,
}

impl IntervalStream {
    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }
}

/// Buckets records into consecutive windows of `interval_minutes`, starting
/// at the earliest timestamp. Gaps produce empty intervals so that the
/// position in the list always equals the window index.
pub fn split_intervals(records: Vec<PacketRecord>, cfg: &IngestConfig) -> IntervalStream {
    if records.is_empty() {
        return IntervalStream::default();
    }
    let origin = records
        .iter()
        .map(PacketRecord::abs_time)
        .fold(f64::INFINITY, f64::min);
    let width = cfg.interval_minutes * 60.0;
    let index_of = |t: f64| -> usize {
        if width.is_infinite() {
            0
        } else {
            ((t - origin) / width).floor() as usize
        }
    };
    let count = records.iter().map(|r| index_of(r.abs_time())).max().unwrap_or(0) + 1;
    let mut intervals = vec![Vec::new(); count];
    for record in records {
        let i = index_of(record.abs_time());
        intervals[i].push(record);
    }
    IntervalStream {
        intervals,
        origin_time: origin,
    }
}

/// A length-`T` window of one flow's packets; rows past `true_len` are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestSequence {
    pub flow: FlowKey,
    pub dynamic: Vec<DynamicRow>,
    pub static_pair: StaticPair,
    pub true_len: usize,
    pub interval_index: usize,
    pub label: Option<Label>,
}

/// Turns one interval's records into request sequences.
///
/// Records are stably sorted by time, sources with fewer than `epsilon`
/// records are dropped, and each remaining flow is cut into consecutive
/// chunks of `seq_len` (the last one zero-padded). Every chunk carries the
/// flow's most frequent static pair, ties going to the lexicographically
/// smallest. Output is ordered by flow key, then chunk position.
pub fn build_sequences(
    batch: &[PacketRecord],
    cfg: &IngestConfig,
    interval_index: usize,
) -> Vec<RequestSequence> {
    if batch.is_empty() {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..batch.len()).collect();
    order.sort_by(|&a, &b| batch[a].abs_time().total_cmp(&batch[b].abs_time()));

    let mut per_source: HashMap<&str, usize> = HashMap::new();
    for r in batch {
        *per_source.entry(r.flow.src_ip.as_str()).or_default() += 1;
    }

    let mut flows: BTreeMap<&FlowKey, Vec<&PacketRecord>> = BTreeMap::new();
    for &i in &order {
        let r = &batch[i];
        if per_source[r.flow.src_ip.as_str()] >= cfg.epsilon {
            flows.entry(&r.flow).or_default().push(r);
        }
    }

    let t = cfg.seq_len;
    let mut out = Vec::new();
    for (flow, records) in flows {
        let static_pair = modal_pair(&records);
        for chunk in records.chunks(t) {
            let mut dynamic: Vec<DynamicRow> = chunk.iter().map(|r| r.dynamic.clone()).collect();
            dynamic.resize(t, DynamicRow::default());
            out.push(RequestSequence {
                flow: flow.clone(),
                dynamic,
                static_pair: static_pair.clone(),
                true_len: chunk.len(),
                interval_index,
                label: majority_label(chunk),
            });
        }
    }
    out
}

fn modal_pair(records: &[&PacketRecord]) -> StaticPair {
    let mut counts: BTreeMap<&StaticPair, usize> = BTreeMap::new();
    for r in records {
        *counts.entry(&r.static_pair).or_default() += 1;
    }
    // BTreeMap iterates in ascending order, so keeping only strictly larger
    // counts leaves the lexicographically smallest among the modes.
    let mut best: Option<(&StaticPair, usize)> = None;
    for (pair, n) in counts {
        if best.map_or(true, |(_, m)| n > m) {
            best = Some((pair, n));
        }
    }
    best.map(|(p, _)| p.clone()).unwrap_or_default()
}

/// Majority ground-truth label of a chunk; ties go to attack. `None` when
/// any record is unlabeled.
fn majority_label(chunk: &[&PacketRecord]) -> Option<Label> {
    let mut attack = 0usize;
    for r in chunk {
        match r.label? {
            Label::Attack => attack += 1,
            Label::Normal => {}
        }
    }
    Some(if 2 * attack >= chunk.len() {
        Label::Attack
    } else {
        Label::Normal
    })
}

/// Runs `split_intervals` then `build_sequences` on every interval.
pub fn sequences_by_interval(
    records: Vec<PacketRecord>,
    cfg: &IngestConfig,
) -> Vec<Vec<RequestSequence>> {
    let stream = split_intervals(records, cfg);
    stream
        .intervals
        .iter()
        .enumerate()
        .map(|(i, batch)| build_sequences(batch, cfg, i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE_ROW: &str = r#"{"abs_time":23352.0,"request_len":66,"ip_flags":"0x00004000","tcp_len":0,"tcp_ack":19,"tcp_flags":"0x00000012","tcp_window":14600,"highest_layer":"TCP","extra_info":"443 → 8918 [SYN, ACK] Seq=0 Ack=1 Win=14600 Len=0 MSS=1460 SACK_PERM=1 WS=512","protocols":"eth:ethertype:ip:tcp","src_ip":"10.0.0.1","dst_ip":"10.0.0.2"}"#;

    pub(crate) fn record(t: f64, src: &str, dst: &str) -> PacketRecord {
        PacketRecord {
            dynamic: DynamicRow {
                abs_time: t,
                request_len: 60.0,
                ip_flags: 0x4000,
                tcp_len: 0.0,
                tcp_ack: 1.0,
                tcp_flags: 0x10,
                tcp_window: 1024.0,
                highest_layer: "TCP".into(),
            },
            static_pair: StaticPair::new("x", "eth:ip:tcp"),
            flow: FlowKey::new(src, dst),
            label: None,
        }
    }

    #[test]
    fn parses_feature_table_row() {
        let r = parse_packet_line(TABLE_ROW).unwrap();
        assert_eq!(r.dynamic.ip_flags, 16384);
        assert_eq!(r.dynamic.tcp_flags, 0x12);
        assert_eq!(r.dynamic.request_len, 66.0);
        assert_eq!(r.dynamic.tcp_window, 14600.0);
        assert_eq!(r.dynamic.highest_layer, "TCP");
        assert_eq!(r.static_pair.protocols, "eth:ethertype:ip:tcp");
        assert_eq!(r.label, None);
    }

    #[test]
    fn zero_record_is_valid() {
        let line = r#"{"abs_time":0,"request_len":0,"ip_flags":0,"tcp_len":0,"tcp_ack":0,"tcp_flags":"0x0","tcp_window":0,"highest_layer":"","extra_info":"","protocols":"","src_ip":"","dst_ip":""}"#;
        let r = parse_packet_line(line).unwrap();
        assert!(r.dynamic.is_padding());
    }

    #[test]
    fn empty_object_reports_abs_time() {
        match parse_packet_line("{}") {
            Err(Error::MissingField(f)) => assert_eq!(f, "abs_time"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_json_names_offset() {
        match parse_packet_line(r#"{"abs_time": 1.0,, }"#) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 17),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_number_is_domain_error() {
        let line = TABLE_ROW.replace("\"tcp_len\":0", "\"tcp_len\":-3");
        assert!(matches!(parse_packet_line(&line), Err(Error::Domain(_))));
    }

    #[test]
    fn label_is_parsed() {
        let line = TABLE_ROW.replace("}", r#","label":"attack"}"#);
        assert_eq!(parse_packet_line(&line).unwrap().label, Some(Label::Attack));
        let bad = TABLE_ROW.replace("}", r#","label":"maybe"}"#);
        assert!(matches!(parse_packet_line(&bad), Err(Error::Domain(_))));
    }

    #[test]
    fn json_line_round_trip() {
        let mut r = parse_packet_line(TABLE_ROW).unwrap();
        r.label = Some(Label::Normal);
        let back = parse_packet_line(&r.to_json_line()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn jsonl_errors_carry_line_number() {
        let input = format!("{TABLE_ROW}\n\n{{}}\n");
        let err = parse_jsonl(&input).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn interval_boundary_at_sixty_seconds() {
        let recs = vec![record(0.0, "a", "b"), record(59.0, "a", "b"), record(61.0, "a", "b")];
        let cfg = IngestConfig {
            interval_minutes: 1.0,
            ..Default::default()
        };
        let stream = split_intervals(recs, &cfg);
        let times: Vec<Vec<f64>> = stream
            .intervals
            .iter()
            .map(|b| b.iter().map(|r| r.abs_time()).collect())
            .collect();
        assert_eq!(times, vec![vec![0.0, 59.0], vec![61.0]]);
    }

    #[test]
    fn single_record_single_interval() {
        let stream = split_intervals(vec![record(5.0, "a", "b")], &IngestConfig::default());
        assert_eq!(stream.len(), 1);
        assert_eq!(stream.intervals[0].len(), 1);
    }

    #[test]
    fn infinite_interval_keeps_everything_together() {
        let recs: Vec<_> = (0..10).map(|i| record(i as f64 * 1000.0, "a", "b")).collect();
        let cfg = IngestConfig {
            interval_minutes: f64::INFINITY,
            ..Default::default()
        };
        assert_eq!(split_intervals(recs, &cfg).len(), 1);
    }

    #[test]
    fn uniform_records_over_five_minutes() {
        // Deterministic pseudo-uniform times over [0, 300).
        let times: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64 * 0.3).collect();
        let recs: Vec<_> = times.iter().map(|&t| record(t, "a", "b")).collect();
        let stream = split_intervals(recs, &IngestConfig::default());
        // Direct binning oracle.
        let mut expected = [0usize; 5];
        for &t in &times {
            expected[(t / 60.0) as usize] += 1;
        }
        let sizes: Vec<usize> = stream.intervals.iter().map(Vec::len).collect();
        assert_eq!(sizes, expected.to_vec());
        assert_eq!(sizes.iter().sum::<usize>(), 1000);
    }

    #[test]
    fn long_flow_is_chunked_with_padding() {
        let recs: Vec<_> = (0..450).map(|i| record(i as f64 * 0.01, "a", "b")).collect();
        let cfg = IngestConfig::default();
        let seqs = build_sequences(&recs, &cfg, 0);
        let lens: Vec<usize> = seqs.iter().map(|s| s.true_len).collect();
        // ceil(450 / 200) = 3 chunks.
        assert_eq!(lens, vec![200, 200, 50]);
        let last = &seqs[2];
        assert!(last.dynamic[50..].iter().all(DynamicRow::is_padding));
        assert!(!last.dynamic[49].is_padding());
        assert_eq!(last.dynamic.len(), 200);
    }

    #[test]
    fn sparse_source_is_dropped() {
        let recs = vec![record(0.0, "a", "b"), record(1.0, "a", "b")];
        assert!(build_sequences(&recs, &IngestConfig::default(), 0).is_empty());
    }

    #[test]
    fn exact_length_has_no_padding() {
        let cfg = IngestConfig {
            seq_len: 10,
            ..Default::default()
        };
        let recs: Vec<_> = (0..10).map(|i| record(i as f64, "a", "b")).collect();
        let seqs = build_sequences(&recs, &cfg, 0);
        assert_eq!(seqs.len(), 1);
        assert_eq!(seqs[0].true_len, 10);
        assert!(seqs[0].dynamic.iter().all(|r| !r.is_padding()));
    }

    #[test]
    fn modal_static_pair_with_lexicographic_tie() {
        let mut recs: Vec<_> = (0..4).map(|i| record(i as f64, "a", "b")).collect();
        recs[0].static_pair = StaticPair::new("zz", "p");
        recs[1].static_pair = StaticPair::new("zz", "p");
        recs[2].static_pair = StaticPair::new("aa", "p");
        recs[3].static_pair = StaticPair::new("aa", "p");
        let seqs = build_sequences(&recs, &IngestConfig::default(), 0);
        assert_eq!(seqs[0].static_pair, StaticPair::new("aa", "p"));
    }

    #[test]
    fn empty_batch_gives_no_sequences() {
        assert!(build_sequences(&[], &IngestConfig::default(), 0).is_empty());
    }

    #[test]
    fn flows_are_kept_apart() {
        let mut recs = Vec::new();
        for i in 0..6 {
            recs.push(record(i as f64, "a", "x"));
            recs.push(record(i as f64 + 0.5, "a", "y"));
        }
        let seqs = build_sequences(&recs, &IngestConfig::default(), 3);
        assert_eq!(seqs.len(), 2);
        assert!(seqs.iter().all(|s| s.interval_index == 3 && s.true_len == 6));
        assert_ne!(seqs[0].flow, seqs[1].flow);
    }

    #[test]
    fn config_validation() {
        assert!(IngestConfig::default().validate().is_ok());
        let bad = IngestConfig {
            seq_len: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = IngestConfig {
            interval_minutes: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
