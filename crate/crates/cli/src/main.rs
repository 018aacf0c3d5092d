//! Command-line front end: synthetic data, N pretraining, the online
//! N-over-D filter, the iterative classifier and evaluation tools.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or model error.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ndfilter::harness::metrics::{evaluate, write_curve_csv, write_metrics_csv, EvalReport};
use ndfilter::harness::{evaluate_scored, online_run, pretrain_n, rejection_curve, synth_generate, to_jsonl, Settings};
use ndfilter::ingest::{build_sequences, parse_jsonl, sequences_by_interval, IngestConfig, Label, PacketRecord};
use ndfilter::iterative::{classify, iterate, new_classifier, train_full_classifier, write_history_csv, BinaryClassifier};
use ndfilter::lstm::checkpoint::{load_checkpoint, read_header, save_checkpoint, Checkpoint, StoredModel};
use ndfilter::scoring::{read_scored_csv, write_scored_csv, Decision, ScoredSequence};
use ndfilter::tokenize::{encode_all, encode_sequence, TokenizedSequence};

#[derive(Parser)]
#[command(name = "ndfilter", version, about = "Unsupervised application-layer DDoS filtering")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Seed for every random component (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flat `key = value` settings file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for all outputs.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Base settings before the config file and flags are applied.
    #[arg(long, global = true, value_enum, default_value_t = Preset::Default)]
    preset: Preset,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Full-size models (T = 200, m = 2^16).
    Default,
    /// Small models for a single CPU core.
    Desk,
}

#[derive(Subcommand)]
enum Command {
    /// Generate labeled synthetic normal and mixture traffic as JSONL.
    Synth,
    /// Cut packet records into request sequences and report their token ids.
    Ingest {
        input: PathBuf,
    },
    /// Train the normal model N and its histogram on normal traffic.
    TrainN {
        normal: PathBuf,
        #[arg(long, default_value = "n.ckpt")]
        output: String,
    },
    /// Run the interval-by-interval N-over-D filter over mixture traffic.
    Online {
        mixture: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train the pseudo-label iterative classifier.
    Iterate {
        normal: PathBuf,
        mixture: PathBuf,
        #[arg(long, default_value = "classifier.ckpt")]
        output: String,
    },
    /// Train the supervised classifier on true mixture labels.
    FullClassifier {
        normal: PathBuf,
        mixture: PathBuf,
        #[arg(long, default_value = "full_classifier.ckpt")]
        output: String,
    },
    /// Print the evaluation report of a labeled scored CSV.
    Eval {
        scored: PathBuf,
    },
    /// Write the rejection curve of a labeled scored CSV.
    Curve {
        scored: PathBuf,
        #[arg(long, default_value = "curve.csv")]
        output: String,
    },
    /// Print a checkpoint header as JSON.
    InspectCheckpoint {
        checkpoint: PathBuf,
    },
}

/// Failures in the data or models, as opposed to command-line misuse.
#[derive(Debug)]
struct DataError(anyhow::Error);

impl std::fmt::Display for DataError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let settings = match load_settings(&cli.global) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    match run(&cli, &settings) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load_settings(g: &Global) -> Result<Settings> {
    let mut s = match g.preset {
        Preset::Default => Settings::default(),
        Preset::Desk => Settings::desk_scale(),
    };
    if let Some(path) = &g.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        s.apply_text(&text)?;
    }
    for kv in &g.overrides {
        let (k, v) = kv.split_once('=').with_context(|| format!("expected KEY=VALUE, got {kv:?}"))?;
        s.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = g.seed {
        s.set_seed(seed);
    }
    s.validate()?;
    Ok(s)
}

fn run(cli: &Cli, s: &Settings) -> std::result::Result<(), DataError> {
    let out = &cli.global.out_dir;
    let result = fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .and_then(|()| dispatch(&cli.command, s, out));
    result.map_err(DataError)
}

fn dispatch(command: &Command, s: &Settings, out: &Path) -> Result<()> {
    match command {
        Command::Synth => synth(s, out),
        Command::Ingest { input } => ingest(input, s, out),
        Command::TrainN { normal, output } => train_n(normal, output, s, out),
        Command::Online { mixture, checkpoint } => online(mixture, checkpoint, s, out),
        Command::Iterate { normal, mixture, output } => iterative(normal, mixture, output, s, out),
        Command::FullClassifier { normal, mixture, output } => full(normal, mixture, output, s, out),
        Command::Eval { scored } => eval(scored),
        Command::Curve { scored, output } => curve(scored, output, out),
        Command::InspectCheckpoint { checkpoint } => inspect(checkpoint),
    }
}

fn read_records(path: &Path) -> Result<Vec<PacketRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_jsonl(&text).with_context(|| format!("parsing {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

/// All records of a file as one interval.
fn whole_sequences(path: &Path, s: &Settings) -> Result<Vec<TokenizedSequence>> {
    let cfg = IngestConfig {
        interval_minutes: f64::INFINITY,
        ..s.ingest
    };
    let seqs = encode_all(&build_sequences(&read_records(path)?, &cfg, 0), &s.hasher);
    if seqs.is_empty() {
        bail!("{} yields no sequences", path.display());
    }
    Ok(seqs)
}

fn synth(s: &Settings, out: &Path) -> Result<()> {
    let data = synth_generate(&s.synth, &s.hasher)?;
    fs::write(out.join("normal.jsonl"), to_jsonl(&data.normal))?;
    fs::write(out.join("mixture.jsonl"), to_jsonl(&data.mixture))?;
    println!(
        "wrote {} normal and {} mixture records to {}",
        data.normal.len(),
        data.mixture.len(),
        out.display()
    );
    Ok(())
}

fn ingest(input: &Path, s: &Settings, out: &Path) -> Result<()> {
    let intervals = sequences_by_interval(read_records(input)?, &s.ingest);
    let path = out.join("sequences.jsonl");
    let mut lines = String::new();
    let mut count = 0;
    for seqs in &intervals {
        for seq in seqs {
            let tok = encode_sequence(seq, &s.hasher);
            let row = serde_json::json!({
                "interval": seq.interval_index,
                "src_ip": seq.flow.src_ip,
                "dst_ip": seq.flow.dst_ip,
                "true_len": seq.true_len,
                "static_pair": seq.static_pair,
                "tokens": tok.observed(),
                "label": seq.label,
            });
            lines.push_str(&row.to_string());
            lines.push('\n');
            count += 1;
        }
    }
    fs::write(&path, lines)?;
    println!("{} intervals, {count} sequences -> {}", intervals.len(), path.display());
    Ok(())
}

fn train_n(normal: &Path, output: &str, s: &Settings, out: &Path) -> Result<()> {
    let result = pretrain_n(&read_records(normal)?, s)?;
    for e in &result.history {
        match e.val_loss {
            Some(v) => println!("epoch {}: train {:.4} val {:.4}", e.epoch, e.train_loss, v),
            None => println!("epoch {}: train {:.4}", e.epoch, e.train_loss),
        }
    }
    let path = out.join(output);
    save_checkpoint(&result.checkpoint, &path)?;
    println!("{} train / {} validation sequences -> {}", result.n_train, result.n_val, path.display());
    Ok(())
}

fn online(mixture: &Path, checkpoint: &Path, s: &Settings, out: &Path) -> Result<()> {
    let n_ckpt = load_checkpoint(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let result = online_run(read_records(mixture)?, &n_ckpt, s)?;
    let mut metrics = Vec::new();
    for iv in &result.intervals {
        write_scored_csv(create(&out.join(format!("scored_{}.csv", iv.index)))?, &iv.scored)?;
        let mut list = iv.blacklist.join("\n");
        if !list.is_empty() {
            list.push('\n');
        }
        fs::write(out.join(format!("blacklist_{}.txt", iv.index)), list)?;
        let fpr = iv.report.and_then(|r| r.fpr).map_or("-".into(), |v| format!("{v:.4}"));
        println!(
            "interval {}: {} sequences, threshold {:.4}, {} blacklisted, fpr {fpr}",
            iv.index,
            iv.scored.len(),
            iv.threshold,
            iv.blacklist.len()
        );
        if let Some(r) = iv.report {
            metrics.push((iv.index.to_string(), r));
        }
    }
    if !metrics.is_empty() {
        write_metrics_csv(create(&out.join("metrics.csv"))?, &metrics)?;
    }
    let d_ckpt = Checkpoint {
        model: StoredModel::Sequence(result.d_model),
        hasher: s.hasher,
        histogram: Some(result.d_hist),
        optimizer: None,
    };
    save_checkpoint(&d_ckpt, &out.join("d.ckpt"))?;
    Ok(())
}

/// Report of `p > 0.5` against the mixture's labels, when all are present.
fn classifier_report(model: &BinaryClassifier, mixture: &[TokenizedSequence]) -> Result<Option<EvalReport>> {
    let mut pairs = Vec::with_capacity(mixture.len());
    for seq in mixture {
        let Some(truth) = seq.label else { return Ok(None) };
        let decision = match classify(model, seq, 0.5)? {
            Label::Attack => Decision::Reject,
            Label::Normal => Decision::Accept,
        };
        pairs.push((decision, truth));
    }
    Ok(Some(evaluate(pairs)))
}

fn save_classifier(model: BinaryClassifier, s: &Settings, path: &Path) -> Result<()> {
    let ckpt = Checkpoint {
        model: StoredModel::Classifier(model),
        hasher: s.hasher,
        histogram: None,
        optimizer: None,
    };
    save_checkpoint(&ckpt, path)?;
    Ok(())
}

fn iterative(normal: &Path, mixture: &Path, output: &str, s: &Settings, out: &Path) -> Result<()> {
    let normal = whole_sequences(normal, s)?;
    let mixture = whole_sequences(mixture, s)?;
    let result = iterate(new_classifier(&s.iterative)?, &normal, &mixture, &s.iterative)?;
    if let Some(l) = result.initial_loss {
        println!("iteration 0: loss {l:.6}");
    }
    for h in &result.history {
        println!("iteration {}: loss {:.6}, attack side {}", h.iteration, h.loss, h.retained);
    }
    write_history_csv(create(&out.join("history.csv"))?, &result.history)?;
    if let Some(r) = classifier_report(&result.model, &mixture)? {
        println!("{}", serde_json::to_string_pretty(&r)?);
    }
    save_classifier(result.model, s, &out.join(output))
}

fn full(normal: &Path, mixture: &Path, output: &str, s: &Settings, out: &Path) -> Result<()> {
    let normal = whole_sequences(normal, s)?;
    let mixture = whole_sequences(mixture, s)?;
    let model = train_full_classifier(&normal, &mixture, &s.iterative)?;
    if let Some(r) = classifier_report(&model, &mixture)? {
        println!("{}", serde_json::to_string_pretty(&r)?);
    }
    save_classifier(model, s, &out.join(output))
}

fn read_scored(path: &Path) -> Result<Vec<ScoredSequence>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_scored_csv(file).with_context(|| format!("parsing {}", path.display()))
}

fn eval(scored: &Path) -> Result<()> {
    let report = evaluate_scored(&read_scored(scored)?)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn curve(scored: &Path, output: &str, out: &Path) -> Result<()> {
    let points = rejection_curve(&read_scored(scored)?)?;
    let path = out.join(output);
    write_curve_csv(create(&path)?, &points)?;
    println!("{} points -> {}", points.len(), path.display());
    Ok(())
}

fn inspect(checkpoint: &Path) -> Result<()> {
    let header = read_header(checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
    println!("{}", serde_json::to_string_pretty(&header)?);
    Ok(())
}
