//! Command-line front end. Every command writes a JSON report (or archive)
//! plus a manifest recording how it was produced.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::data::{load_archive, save_archive, split, SplitSpec};
use crate::error::{Error, Result};
use crate::features::Method;
use crate::pipeline::{cross_validate, run_adaptive, run_static, PipelineConfig};
use crate::select::SearchSpace;
use crate::synth::{generate, SynthConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "mi-bci", version, about = "Motor-imagery EEG classification toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic trial archive.
    Synth(SynthArgs),
    /// Stratified k-fold cross-validation on a labeled archive.
    Crossval(CrossvalArgs),
    /// Train on a leading fraction of an archive and label the rest.
    Run(RunArgs),
    /// Accuracy per (method, training fraction).
    Fig1(Fig1Args),
}

#[derive(Debug, Args)]
pub struct SeedArg {
    /// Overrides every seed in the config. Falls back to $MI_SEED.
    #[arg(long, env = "MI_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Args)]
pub struct CrossvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub train_fraction: f64,
    /// Split on whole sessions instead of trials.
    #[arg(long)]
    pub by_session: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Enable the transductive parameter search (default grid unless the
    /// config supplies one).
    #[arg(long)]
    pub sweep: bool,
    /// Session-by-session self-training.
    #[arg(long)]
    pub adapt: bool,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct Fig1Args {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.8,0.6,0.3,0.2,0.1")]
    pub fractions: Vec<f64>,
    /// Methods, optionally with a channel count: csp, ar-1ch, lrp-5ch, combined.
    #[arg(long, value_delimiter = ',', default_value = "csp,ar,lrp")]
    pub methods: Vec<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long)]
    pub report: PathBuf,
}

/// Provenance record written next to every output.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config_path: Option<PathBuf>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub tool_version: String,
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } | Error::Archive { .. } => EXIT_IO,
        e if e.is_numerical() => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code. Messages go to stdout/stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let recorded: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(cli.command, recorded) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn main() -> i32 {
    main_with_args(std::env::args_os())
}

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::config(path.display().to_string(), e.to_string()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `report.json` → `report.manifest.json`; directories get `manifest.json`.
pub fn manifest_path(output: &Path) -> PathBuf {
    if output.is_dir() {
        output.join("manifest.json")
    } else {
        output.with_extension("manifest.json")
    }
}

fn write_manifest(
    command: &str,
    args: Vec<String>,
    config_path: Option<&Path>,
    config: &impl Serialize,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    output: &Path,
) -> Result<()> {
    let manifest = RunManifest {
        command: command.into(),
        args,
        config_path: config_path.map(Path::to_path_buf),
        config: serde_json::to_value(config)?,
        seed,
        inputs,
        outputs: vec![output.to_path_buf()],
        tool_version: env!("CARGO_PKG_VERSION").into(),
    };
    write_json(&manifest_path(output), &manifest)
}

fn pipeline_config(path: Option<&Path>, seed: Option<u64>) -> Result<PipelineConfig> {
    let cfg: PipelineConfig = read_config(path)?;
    Ok(match seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn execute(command: Command, args: Vec<String>) -> Result<()> {
    match command {
        Command::Synth(a) => cmd_synth(a, args),
        Command::Crossval(a) => cmd_crossval(a, args),
        Command::Run(a) => cmd_run(a, args),
        Command::Fig1(a) => cmd_fig1(a, args),
    }
}

fn cmd_synth(a: SynthArgs, args: Vec<String>) -> Result<()> {
    let mut cfg: SynthConfig = read_config(a.config.as_deref())?;
    if let Some(s) = a.seed.seed {
        cfg.seed = s;
    }
    let set = generate(&cfg)?;
    save_archive(&set, &a.out)?;
    write_manifest("synth", args, a.config.as_deref(), &cfg, Some(cfg.seed), vec![], &a.out)?;
    println!(
        "wrote {} trials ({} sessions, {} channels) to {}",
        set.len(),
        cfg.n_sessions,
        cfg.n_channels,
        a.out.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct CrossvalReport {
    mean: f64,
    std: f64,
    folds: usize,
    fold_accuracies: Vec<f64>,
    n_trials: usize,
    seed: u64,
    config: PipelineConfig,
}

fn cmd_crossval(a: CrossvalArgs, args: Vec<String>) -> Result<()> {
    let cfg = pipeline_config(a.config.as_deref(), a.seed.seed)?;
    let data = load_archive(&a.data)?;
    let labeled = data.labels().iter().filter(|l| l.is_some()).count();
    if a.folds > labeled {
        return Err(Error::config(
            "folds",
            format!("{} folds but only {labeled} labeled trials", a.folds),
        ));
    }
    let cv = cross_validate(&data, &cfg, a.folds, cfg.seed)?;
    let report = CrossvalReport {
        mean: cv.mean,
        std: cv.std,
        folds: cv.folds,
        fold_accuracies: cv.fold_accuracies,
        n_trials: data.len(),
        seed: cfg.seed,
        config: cfg.clone(),
    };
    write_json(&a.report, &report)?;
    write_manifest("crossval", args, a.config.as_deref(), &cfg, Some(cfg.seed), vec![a.data], &a.report)?;
    println!("{}-fold accuracy: {:.1} ± {:.2} %", report.folds, report.mean, report.std);
    Ok(())
}

fn cmd_run(a: RunArgs, args: Vec<String>) -> Result<()> {
    let mut cfg = pipeline_config(a.config.as_deref(), a.seed.seed)?;
    if a.sweep && cfg.search.is_none() {
        cfg.search = Some(SearchSpace::default_grid());
    }
    cfg.adapt |= a.adapt;
    let spec = if a.by_session {
        SplitSpec::by_session(a.train_fraction)
    } else {
        SplitSpec::prefix(a.train_fraction)
    };
    let data = load_archive(&a.data)?;
    let report = if cfg.adapt {
        run_adaptive(&data, &spec, &cfg)?
    } else {
        let (train, test) = split(&data, &spec)?;
        run_static(&train, &test, &cfg)?
    };
    write_json(&a.report, &report)?;
    write_manifest("run", args, a.config.as_deref(), &cfg, Some(cfg.seed), vec![a.data], &a.report)?;

    println!("session  n_train  n_test  accuracy  band_hz      window_s     rho     penalty");
    for s in &report.sessions {
        let chosen = s.chosen.as_ref();
        println!(
            "{:>7}  {:>7}  {:>6}  {:>8}  {:<11}  {:<11}  {:>6}  {:>7}",
            s.session,
            s.n_train,
            s.n_trials,
            opt(s.accuracy, 1),
            pair(chosen.and_then(|c| c.band_hz)),
            pair(chosen.and_then(|c| c.window_s)),
            opt(s.rho, 3),
            opt(s.balance_penalty, 3),
        );
    }
    if let Some(acc) = report.test_accuracy {
        println!("test accuracy: {acc:.1} % over {} trials", report.n_test);
    }
    for note in &report.notes {
        println!("note: {note}");
    }
    Ok(())
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.digits$}"))
}

fn pair(v: Option<(f64, f64)>) -> String {
    v.map_or_else(|| "-".into(), |(a, b)| format!("{a}-{b}"))
}

/// `ar-1ch` → (Ar, Some(1)).
pub fn parse_method_spec(spec: &str) -> Result<(Method, Option<usize>)> {
    let spec = spec.trim();
    let (name, count) = match spec.rsplit_once('-') {
        Some((name, suffix)) => {
            let n = suffix
                .strip_suffix("ch")
                .and_then(|d| d.parse::<usize>().ok())
                .filter(|&n| n > 0)
                .ok_or_else(|| Error::config("methods", format!("bad channel suffix in `{spec}`")))?;
            (name, Some(n))
        }
        None => (spec, None),
    };
    let method: Method = name.parse().map_err(|e: String| Error::config("methods", e))?;
    if count.is_some() && !matches!(method, Method::Ar | Method::Lrp) {
        return Err(Error::config(
            "methods",
            format!("channel suffix only applies to ar and lrp, got `{spec}`"),
        ));
    }
    Ok((method, count))
}

#[derive(Debug, Serialize)]
struct FractionRow {
    method: String,
    fraction: f64,
    n_train: usize,
    n_test: usize,
    accuracy: f64,
}

#[derive(Debug, Serialize)]
struct MethodSpread {
    method: String,
    min: f64,
    max: f64,
    range: f64,
}

#[derive(Debug, Serialize)]
struct FractionReport {
    rows: Vec<FractionRow>,
    spread: Vec<MethodSpread>,
    seed: u64,
    config: PipelineConfig,
}

fn cmd_fig1(a: Fig1Args, args: Vec<String>) -> Result<()> {
    if let Some(&f) = a.fractions.iter().find(|&&f| !(f > 0.0 && f < 1.0)) {
        return Err(Error::config("fractions", format!("{f} is outside (0, 1)")));
    }
    let methods = a
        .methods
        .iter()
        .map(|m| parse_method_spec(m).map(|p| (m.trim().to_string(), p)))
        .collect::<Result<Vec<_>>>()?;
    let base = pipeline_config(a.config.as_deref(), a.seed.seed)?;
    let data = load_archive(&a.data)?;

    let mut rows = Vec::new();
    let mut spread = Vec::new();
    for (name, (method, count)) in &methods {
        let mut cfg = base.clone();
        cfg.method = *method;
        match (method, count) {
            (Method::Ar, Some(n)) => cfg.ar.n_channels = *n,
            (Method::Lrp, Some(n)) => cfg.lrp.n_channels = *n,
            _ => {}
        }
        let mut accs = Vec::new();
        for &fraction in &a.fractions {
            let (train, test) = split(&data, &SplitSpec::prefix(fraction))?;
            let r = run_static(&train, &test, &cfg)?;
            let accuracy = r
                .test_accuracy
                .ok_or_else(|| Error::invalid("archive has no test labels to score"))?;
            println!("{name:<10} fraction {fraction:<4} accuracy {accuracy:.1} %");
            accs.push(accuracy);
            rows.push(FractionRow {
                method: name.clone(),
                fraction,
                n_train: train.len(),
                n_test: test.len(),
                accuracy,
            });
        }
        let min = accs.iter().copied().fold(f64::INFINITY, f64::min);
        let max = accs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        spread.push(MethodSpread {
            method: name.clone(),
            min,
            max,
            range: max - min,
        });
    }
    let report = FractionReport {
        rows,
        spread,
        seed: base.seed,
        config: base.clone(),
    };
    write_json(&a.report, &report)?;
    write_manifest("fig1", args, a.config.as_deref(), &base, Some(base.seed), vec![a.data], &a.report)?;
    Ok(())
}
