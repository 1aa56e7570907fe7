//! Command-line front end: `train`, `evaluate`, `sweep`, `analyze` and
//! `baseline`. Every command writes its effective configuration to
//! `config.toml` in the output directory next to its results.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use icae::analysis::analysis_report;
use icae::evaluation::{bler_curve, mismatch_sweep, snr_at_bler, tdma_snr_for_bler, SweepResult};
use icae::io::{csv, load_model, save_model, write_atomic, ExperimentConfig};
use icae::training::train_with_observer;
use icae::{Error, Result, TrainedPair, User};

/// BLER level at which curves are compared with the reference.
pub const TARGET_BLER: f64 = 1e-2;

pub const TDMA_CONVENTION: &str = "orthogonal reference: each user sends k uncoded BPSK \
symbols in its own time slot, plotted on the same Eb/N0 axis with BER = Q(sqrt(2 Eb/N0)) \
and BLER = 1 - (1 - BER)^k; no power boost during the occupied slot";

#[derive(Debug, Parser)]
#[command(
    name = "icae",
    version,
    about = "Two-user interference-channel autoencoders"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a transceiver pair; writes model.json and trace.csv.
    Train(Common),
    /// BLER curve of a model at one alpha; writes bler.csv and bler_summary.json.
    Evaluate(WithModel),
    /// BLER over the sweep_alphas x eval_snrs_db grid; writes sweep.csv.
    Sweep(WithModel),
    /// Codebook distances and correlations; writes distances.csv,
    /// correlations.csv, codebooks.csv and summary.json.
    Analyze(WithModel),
    /// Analytic orthogonal BPSK curve; writes baseline.csv.
    Baseline(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set alpha=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Master seed; overrides `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for evaluation (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct WithModel {
    #[command(flatten)]
    pub common: Common,
    /// Model file written by `train`.
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
}

/// Process exit status for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Usage(_) => 2,
        Error::ModelFile(_) => 3,
        Error::Numerical { .. } | Error::Diverged(_) | Error::DegenerateCodeword { .. } => 4,
        Error::Io(_) => 1,
    }
}

/// The single stderr line printed on failure.
pub fn error_line(err: &Error) -> String {
    let msg = err.to_string().replace('\n', " ");
    format!("error[{}]: {msg}", err.category())
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("seed={seed}"));
        }
        if let Some(out) = &self.out {
            let quoted = toml_string(&out.to_string_lossy());
            overrides.push(format!("output_dir={quoted}"));
        }
        ExperimentConfig::load(self.config.as_deref(), &overrides)
    }
}

fn toml_string(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn prepare_output(cfg: &ExperimentConfig) -> Result<&Path> {
    let dir = cfg.output_dir.as_path();
    std::fs::create_dir_all(dir)?;
    write_atomic(&dir.join("config.toml"), cfg.to_toml().as_bytes())?;
    Ok(dir)
}

fn set_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("summary always serializes");
    write_atomic(path, text.as_bytes())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(c) => train(&c),
        Command::Evaluate(m) => evaluate(&m),
        Command::Sweep(m) => sweep(&m),
        Command::Analyze(m) => analyze(&m),
        Command::Baseline(c) => baseline(&c),
    }
}

fn train(c: &Common) -> Result<()> {
    let cfg = c.load()?;
    let dir = prepare_output(&cfg)?;
    let tc = cfg.training();
    let (pair, trace) = train_with_observer(&tc, |e, t| {
        let last = t.epochs() - 1;
        eprintln!(
            "epoch {}/{}  loss {:.4} {:.4}",
            e + 1,
            tc.epochs,
            t.loss_user1[last],
            t.loss_user2[last]
        );
    })?;
    let file = save_model(&pair, &dir.join("model.json"))?;
    write_atomic(&dir.join("trace.csv"), csv::trace_csv(&trace).as_bytes())?;
    println!(
        "trained {} alpha={} in {:.1}s, checksum {}",
        pair.model_kind, pair.train_alpha, trace.duration_secs, file.checksum
    );
    Ok(())
}

fn open_model(m: &WithModel) -> Result<(ExperimentConfig, TrainedPair)> {
    let cfg = m.common.load()?;
    set_threads(m.common.threads)?;
    let pair = load_model(&m.model)?;
    Ok((cfg, pair))
}

#[derive(Debug, Serialize)]
struct CurveSummary {
    model_kind: String,
    train_alpha: f64,
    eval_alpha: f64,
    seed: u64,
    target_bler: f64,
    snr_at_target_user1: Option<f64>,
    snr_at_target_user2: Option<f64>,
    snr_at_target_mean: Option<f64>,
    tdma_snr_at_target: Option<f64>,
    gain_db_mean: Option<f64>,
    tdma_convention: &'static str,
}

fn curve_summary(r: &SweepResult, alpha: f64, k: usize, seed: u64) -> CurveSummary {
    let curve = r.curve(alpha);
    let crossing = |f: &dyn Fn(&icae::evaluation::BlerPoint) -> f64| {
        let pts: Vec<(f64, f64)> = curve.iter().map(|p| (p.eb_n0_db, f(p))).collect();
        snr_at_bler(&pts, TARGET_BLER)
    };
    let mean = crossing(&|p| p.bler_mean());
    let tdma = tdma_snr_for_bler(TARGET_BLER, k);
    CurveSummary {
        model_kind: r.model_kind.to_string(),
        train_alpha: r.train_alpha,
        eval_alpha: alpha,
        seed,
        target_bler: TARGET_BLER,
        snr_at_target_user1: crossing(&|p| p.bler_user1),
        snr_at_target_user2: crossing(&|p| p.bler_user2),
        snr_at_target_mean: mean,
        tdma_snr_at_target: tdma,
        gain_db_mean: mean.zip(tdma).map(|(m, t)| t - m),
        tdma_convention: TDMA_CONVENTION,
    }
}

fn evaluate(m: &WithModel) -> Result<()> {
    let (cfg, pair) = open_model(m)?;
    let dir = prepare_output(&cfg)?;
    let alpha = cfg.eval_alpha.unwrap_or(pair.train_alpha);
    let r = bler_curve(&pair, alpha, &cfg.eval_snrs_db, cfg.stop, cfg.seed)?;
    write_atomic(
        &dir.join("bler.csv"),
        csv::bler_csv(&r, pair.arch.k).as_bytes(),
    )?;
    let summary = curve_summary(&r, alpha, pair.arch.k, cfg.seed);
    write_json(&dir.join("bler_summary.json"), &summary)?;
    for p in &r.points {
        println!(
            "alpha={} {:>5} dB  bler {:.3e} {:.3e}  frames {}",
            p.alpha_eval, p.eb_n0_db, p.bler_user1, p.bler_user2, p.frames
        );
    }
    Ok(())
}

fn sweep(m: &WithModel) -> Result<()> {
    let (cfg, pair) = open_model(m)?;
    let dir = prepare_output(&cfg)?;
    let r = mismatch_sweep(
        &pair,
        &cfg.sweep_alphas,
        &cfg.eval_snrs_db,
        cfg.stop,
        cfg.seed,
    )?;
    write_atomic(
        &dir.join("sweep.csv"),
        csv::bler_csv(&r, pair.arch.k).as_bytes(),
    )?;
    let summaries: Vec<CurveSummary> = cfg
        .sweep_alphas
        .iter()
        .map(|&a| curve_summary(&r, a, pair.arch.k, cfg.seed))
        .collect();
    write_json(&dir.join("sweep_summary.json"), &summaries)?;
    println!(
        "{} grid points written to {}",
        r.points.len(),
        dir.display()
    );
    Ok(())
}

fn analyze(m: &WithModel) -> Result<()> {
    let (cfg, pair) = open_model(m)?;
    let dir = prepare_output(&cfg)?;
    let report = analysis_report(&pair)?;
    write_atomic(
        &dir.join("distances.csv"),
        csv::distances_csv(&report).as_bytes(),
    )?;
    write_atomic(
        &dir.join("correlations.csv"),
        csv::correlations_csv(&report).as_bytes(),
    )?;
    let cb1 = pair.extract_codebook(User::One)?;
    let cb2 = pair.extract_codebook(User::Two)?;
    write_atomic(
        &dir.join("codebooks.csv"),
        csv::codebooks_csv(&cb1, &cb2).as_bytes(),
    )?;
    let summary = report.summary();
    write_json(&dir.join("summary.json"), &summary)?;
    println!(
        "{} alpha={}: min d_cross {:.3}, min d_self {:.3}, max |R_cross| {:.3}",
        summary.table.model_kind,
        summary.table.train_alpha,
        summary.table.min_d_cross,
        summary.table.min_d_self,
        summary.r_cross_max_abs
    );
    Ok(())
}

fn baseline(c: &Common) -> Result<()> {
    let cfg = c.load()?;
    let dir = prepare_output(&cfg)?;
    write_atomic(
        &dir.join("baseline.csv"),
        csv::baseline_csv(&cfg.eval_snrs_db, cfg.k).as_bytes(),
    )?;
    println!("{TDMA_CONVENTION}");
    Ok(())
}
