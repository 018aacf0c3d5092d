//! Orchestration: run settings, synthetic ground-truth data, the online
//! protocol, and evaluation.

pub mod config;
pub mod metrics;
pub mod pipeline;
pub mod synth;

pub use config::{parse_kv, render, RunConfig, Settings};
pub use metrics::{
    auc, evaluate, evaluate_at_rejection, evaluate_scored, rejection_curve, write_curve_csv, write_metrics_csv,
    EvalReport,
};
pub use pipeline::{
    init_mixture_model, online_run, pretrain_n, pretrain_n_sequences, split_train_val, tokenize_records,
    IntervalResult, OnlineOutput, PretrainOutput,
};
pub use synth::{oracle_score, synth_generate, to_jsonl, Profiles, SynthConfig, SynthData};
