//! Frequency model over static (extra info, protocol list) pairs.

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::ingest::StaticPair;

/// Counts of observed static pairs with additive smoothing.
///
/// `predict` returns `(m(pair) + λ) / (total + λ·(k + 1))` where `k` is the
/// number of distinct observed pairs; the extra `+1` is a single bucket
/// shared by every unseen pair. With `λ = 0` this is the plain relative
/// frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramModel {
    counts: BTreeMap<StaticPair, u64>,
    total: u64,
    smoothing: f64,
}

impl HistogramModel {
    pub fn new(smoothing: f64) -> Self {
        assert!(smoothing >= 0.0 && smoothing.is_finite(), "smoothing must be >= 0");
        HistogramModel {
            counts: BTreeMap::new(),
            total: 0,
            smoothing,
        }
    }

    pub fn fit<'a, I>(pairs: I, smoothing: f64) -> Self
    where
        I: IntoIterator<Item = &'a StaticPair>,
    {
        let mut model = HistogramModel::new(smoothing);
        for pair in pairs {
            model.update(pair);
        }
        model
    }

    pub fn update(&mut self, pair: &StaticPair) {
        *self.counts.entry(pair.clone()).or_default() += 1;
        self.total += 1;
    }

    pub fn count(&self, pair: &StaticPair) -> u64 {
        self.counts.get(pair).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn k_known(&self) -> usize {
        self.counts.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StaticPair, u64)> {
        self.counts.iter().map(|(p, &n)| (p, n))
    }

    fn denominator(&self) -> f64 {
        self.total as f64 + self.smoothing * (self.k_known() as f64 + 1.0)
    }

    pub fn predict(&self, pair: &StaticPair) -> f64 {
        let denom = self.denominator();
        if denom == 0.0 {
            return 0.0;
        }
        (self.count(pair) as f64 + self.smoothing) / denom
    }

    /// Probability assigned to the shared bucket of all unseen pairs.
    pub fn unseen_mass(&self) -> f64 {
        let denom = self.denominator();
        if denom == 0.0 {
            0.0
        } else {
            self.smoothing / denom
        }
    }
}

#[derive(Serialize, Deserialize)]
struct HistogramRepr {
    smoothing: f64,
    counts: Vec<(String, String, u64)>,
}

impl Serialize for HistogramModel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        HistogramRepr {
            smoothing: self.smoothing,
            counts: self
                .counts
                .iter()
                .map(|(p, &n)| (p.extra_info.clone(), p.protocols.clone(), n))
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for HistogramModel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = HistogramRepr::deserialize(deserializer)?;
        if !(repr.smoothing >= 0.0) {
            return Err(serde::de::Error::custom("smoothing must be >= 0"));
        }
        let mut model = HistogramModel::new(repr.smoothing);
        for (extra, protocols, n) in repr.counts {
            *model.counts.entry(StaticPair::new(extra, protocols)).or_default() += n;
            model.total += n;
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(s: &str) -> StaticPair {
        StaticPair::new(s, "eth:ip:tcp")
    }

    fn aaab(smoothing: f64) -> HistogramModel {
        HistogramModel::fit(&[p("A"), p("A"), p("A"), p("B")], smoothing)
    }

    #[test]
    fn counts_multiset() {
        let h = aaab(0.0);
        assert_eq!(h.count(&p("A")), 3);
        assert_eq!(h.count(&p("B")), 1);
        assert_eq!(h.total(), 4);
        assert_eq!(h.k_known(), 2);
    }

    #[test]
    fn literal_relative_frequency() {
        let h = aaab(0.0);
        assert_eq!(h.predict(&p("A")), 0.75);
        assert_eq!(h.predict(&p("B")), 0.25);
        assert_eq!(h.predict(&p("C")), 0.0);
    }

    #[test]
    fn smoothed_unseen_pair() {
        let h = aaab(1.0);
        // (0 + 1) / (4 + 1 * 3)
        assert!((h.predict(&p("C")) - 1.0 / 7.0).abs() < 1e-15);
        assert_eq!(h.predict(&p("C")), h.unseen_mass());
    }

    #[test]
    fn empty_model_with_smoothing_returns_unseen_mass() {
        let h = HistogramModel::new(0.5);
        assert_eq!(h.predict(&p("anything")), h.unseen_mass());
        assert_eq!(h.unseen_mass(), 1.0);
    }

    #[test]
    fn mass_sums_to_one() {
        for &lambda in &[0.0, 0.3, 1.0, 7.5] {
            let h = HistogramModel::fit(
                &[p("A"), p("B"), p("B"), p("C"), p("D"), p("D"), p("D")],
                lambda,
            );
            let observed: f64 = h.iter().map(|(pair, _)| h.predict(pair)).sum();
            let total = observed + h.unseen_mass();
            assert!((total - 1.0).abs() < 1e-12, "lambda {lambda}: {total}");
        }
    }

    #[test]
    fn incremental_equals_batch_at_every_prefix() {
        let stream: Vec<StaticPair> = (0..50).map(|i| p(&format!("{}", (i * 7) % 5))).collect();
        let mut online = HistogramModel::new(1.0);
        for (i, pair) in stream.iter().enumerate() {
            online.update(pair);
            let batch = HistogramModel::fit(&stream[..=i], 1.0);
            assert_eq!(online, batch);
            for q in ["0", "1", "2", "3", "4", "9"] {
                assert_eq!(online.predict(&p(q)), batch.predict(&p(q)));
            }
        }
    }

    #[test]
    fn updates_commute() {
        let mut a = HistogramModel::new(0.0);
        a.update(&p("x"));
        a.update(&p("y"));
        let mut b = HistogramModel::new(0.0);
        b.update(&p("y"));
        b.update(&p("x"));
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_oracle() {
        let truth = [0.5, 0.25, 0.15, 0.1];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pairs: Vec<StaticPair> = (0..10_000)
            .map(|_| {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut k = truth.len() - 1;
                for (i, &w) in truth.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        k = i;
                        break;
                    }
                }
                p(&k.to_string())
            })
            .collect();
        let h = HistogramModel::fit(&pairs, 0.0);
        for (k, &w) in truth.iter().enumerate() {
            assert!((h.predict(&p(&k.to_string())) - w).abs() < 0.02);
        }
    }

    #[test]
    fn monotone_in_own_count() {
        let mut h = HistogramModel::new(1.0);
        h.update(&p("other"));
        let mut last = h.predict(&p("x"));
        for _ in 0..10 {
            h.update(&p("x"));
            let now = h.predict(&p("x"));
            assert!(now >= last);
            last = now;
        }
    }

    #[test]
    fn serializes_as_sorted_list() {
        let h = HistogramModel::fit(&[p("b"), p("a"), p("b")], 1.0);
        let json = serde_json::to_string(&h).unwrap();
        assert_eq!(
            json,
            r#"{"smoothing":1.0,"counts":[["a","eth:ip:tcp",1],["b","eth:ip:tcp",2]]}"#
        );
        let back: HistogramModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, h);
    }
}
