//! Cross-module properties of the scoring, evaluation and online pipeline.

use ndfilter::harness::metrics::{curve_ratio, evaluate_scored, rejection_curve, EvalReport};
use ndfilter::harness::{online_run, pretrain_n, synth_generate, Settings};
use ndfilter::ingest::{FlowKey, Label};
use ndfilter::scoring::{rank_and_threshold, Decision, ScoredSequence};
use proptest::prelude::*;

fn scored(ratios: &[f64], attack: &[bool]) -> Vec<ScoredSequence> {
    ratios
        .iter()
        .zip(attack)
        .enumerate()
        .map(|(i, (&ratio, &a))| ScoredSequence {
            flow: FlowKey::new(format!("10.0.{}.{}", i / 256, i % 256), "192.168.0.1"),
            interval_index: 0,
            log_pn: ratio,
            log_pd: 0.0,
            ratio,
            posterior: 0.5,
            decision: Decision::Accept,
            label: Some(if a { Label::Attack } else { Label::Normal }),
        })
        .collect()
}

proptest! {
    #[test]
    fn curve_matches_thresholded_decisions(
        rows in prop::collection::vec((-3i32..3, any::<bool>()), 1..60),
    ) {
        prop_assume!(rows.iter().any(|&(_, a)| !a));
        // Small integer ratios force plenty of ties.
        let ratios: Vec<f64> = rows.iter().map(|&(r, _)| r as f64).collect();
        let attack: Vec<bool> = rows.iter().map(|&(_, a)| a).collect();
        let base = scored(&ratios, &attack);
        let curve = rejection_curve(&base).unwrap();
        prop_assert_eq!(curve.len(), 101);
        for (i, &(r, rate)) in curve.iter().enumerate() {
            prop_assert_eq!(r, curve_ratio(i));
            let mut s = base.clone();
            rank_and_threshold(&mut s, r).unwrap();
            let fpr = evaluate_scored(&s).unwrap().fpr.unwrap();
            prop_assert!((fpr - rate).abs() < 1e-15, "r {}: curve {} vs decisions {}", r, rate, fpr);
        }
        prop_assert_eq!(curve[100].1, 1.0);
    }

    #[test]
    fn report_identities_hold(tp in 0u64..50, tn in 0u64..50, fp in 0u64..50, fn_ in 0u64..50) {
        let r = EvalReport::from_counts(tp, tn, fp, fn_);
        let f = |x: u64| x as f64;
        let total = tp + tn + fp + fn_;
        prop_assert_eq!(r.acc, (total > 0).then(|| f(tp + tn) / f(total)));
        prop_assert_eq!(r.fpr, (fp + tn > 0).then(|| f(fp) / f(fp + tn)));
        prop_assert_eq!(r.precision, (tp + fp > 0).then(|| f(tp) / f(tp + fp)));
        prop_assert_eq!(r.recall, (tp + fn_ > 0).then(|| f(tp) / f(tp + fn_)));
        if let (Some(p), Some(q)) = (r.precision, r.recall) {
            if p + q > 0.0 {
                let f1 = r.f1.unwrap();
                prop_assert!((f1 - 2.0 * p * q / (p + q)).abs() < 1e-15);
            }
        }
    }
}

fn small(seed: u64) -> Settings {
    let mut s = Settings::desk_scale();
    s.set_seed(seed);
    s.synth.n_normal = 400;
    s.synth.n_mixture = 600;
    s.synth.seq_len = 20;
    s.synth.duration_minutes = 5;
    s.ingest.seq_len = 20;
    s.run.rejection_ratio = 0.6;
    s
}

#[test]
fn normal_model_beats_the_uniform_baseline() {
    let mut s = small(11);
    s.n_model.epochs = 30;
    let data = synth_generate(&s.synth, &s.hasher).unwrap();
    let out = pretrain_n(&data.normal, &s).unwrap();
    let val = out.history.last().unwrap().val_loss.unwrap();
    // Validation perplexity against a uniform guess over the vocabulary.
    assert!(val.exp() < s.hasher.m_vocab as f64, "perplexity {}", val.exp());
    assert!(val < (s.hasher.m_vocab as f64).ln() - 1.0);
}

#[test]
fn online_run_is_reproducible() {
    let s = small(4);
    let data = synth_generate(&s.synth, &s.hasher).unwrap();
    let n = pretrain_n(&data.normal, &s).unwrap().checkpoint;
    let a = online_run(data.mixture.clone(), &n, &s).unwrap();
    let b = online_run(data.mixture, &n, &s).unwrap();
    let bits = |o: &ndfilter::harness::OnlineOutput| -> Vec<u64> {
        o.all_scored().iter().map(|x| x.ratio.to_bits()).collect()
    };
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(a.d_model, b.d_model);
    let lists = |o: &ndfilter::harness::OnlineOutput| -> Vec<Vec<String>> {
        o.intervals.iter().map(|i| i.blacklist.clone()).collect()
    };
    assert_eq!(lists(&a), lists(&b));
}

/// Rank rejection at a fixed ratio forces `max(0, rejected - attacks)` false
/// positives whatever the model does, so per-interval FPR follows the attack
/// share of each interval. Interval 0 is fit on its own traffic and usually
/// scores zero; later intervals with a lower attack share rise above it.
/// Kept as a record of the measured behaviour.
#[test]
#[ignore = "fails: per-interval FPR tracks attack share, not learning progress"]
fn online_fpr_does_not_rise_over_the_first_intervals() {
    let mut holds = 0;
    let mut seen = Vec::new();
    for seed in 1..=5 {
        let s = small(seed);
        let data = synth_generate(&s.synth, &s.hasher).unwrap();
        let n = pretrain_n(&data.normal, &s).unwrap().checkpoint;
        let out = online_run(data.mixture, &n, &s).unwrap();
        let fpr: Vec<f64> = out.intervals[..3].iter().map(|i| i.report.unwrap().fpr.unwrap()).collect();
        holds += usize::from(fpr.windows(2).all(|w| w[1] <= w[0]));
        seen.push(fpr);
    }
    assert!(holds >= 4, "non-increasing in {holds}/5 seeds: {seen:?}");
}

/// With a fixed rejection count, `min(fp, fn)` counts the normal/attack pairs
/// ranked the wrong way round once composition is factored out.
#[test]
fn online_misorderings_stay_rare_in_every_interval() {
    let mut seen = Vec::new();
    for seed in 1..=3 {
        let s = small(seed);
        let data = synth_generate(&s.synth, &s.hasher).unwrap();
        let n = pretrain_n(&data.normal, &s).unwrap().checkpoint;
        let out = online_run(data.mixture, &n, &s).unwrap();
        for i in &out.intervals {
            let r = i.report.unwrap();
            let total = r.tp + r.tn + r.fp + r.fn_;
            let wrong = r.fp.min(r.fn_);
            seen.push((seed, i.index, wrong, total));
        }
    }
    let bad: Vec<_> = seen.iter().filter(|&&(_, _, w, t)| w as f64 > 0.05 * t as f64).collect();
    assert!(bad.is_empty(), "misordered intervals: {bad:?} of {seen:?}");
}
