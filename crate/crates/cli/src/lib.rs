//! Batch front end: `gen`, `extract`, `rank`, `sweep` and `eval`.
//!
//! Commands write data to files or standard output and warnings to standard
//! error. Exit codes: 0 success, 1 usage error, 2 data error.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use misfire_core::dataset::{read_dataset, write_dataset, Dataset, LabelSet};
use misfire_core::dtree::{build_tree, rank_features, FeatureRanking, TreeParams};
use misfire_core::eval::{evaluate, feature_sweep, ConfusionMatrix, EvalReport, Protocol, SweepResult};
use misfire_core::features::extract_features;
use misfire_core::ingest::{
    load_signal, synth_engine_signal, window_signal, write_signal, Condition, EngineSimConfig,
    DEFAULT_SAMPLE_RATE_HZ, DEFAULT_WINDOW_LEN,
};
use misfire_core::kstar::KStarModel;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] misfire_core::Error),
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) | CliError::File { .. } => 2,
        }
    }

    fn file(path: &Path, message: impl ToString) -> Self {
        CliError::File {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "misfire", version, about = "Engine misfire detection from vibration statistics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic engine signals plus a manifest
    Gen(GenArgs),
    /// Extract the 13 window statistics from a signal directory
    Extract(ExtractArgs),
    /// Rank features with a decision tree
    Rank(RankArgs),
    /// Cross-validated accuracy against the number of ranked features
    Sweep(SweepArgs),
    /// Cross-validated confusion matrix and metrics
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Signals per condition
    #[arg(long, default_value_t = 100)]
    pub windows: usize,
    /// Only generate this condition
    #[arg(long)]
    pub condition: Option<String>,
    /// Samples per signal
    #[arg(long, default_value_t = DEFAULT_WINDOW_LEN)]
    pub samples: usize,
    #[arg(long, default_value_t = 1500.0)]
    pub rpm: f64,
    #[arg(long = "sample-rate", default_value_t = DEFAULT_SAMPLE_RATE_HZ)]
    pub sample_rate: f64,
    /// Noise standard deviation
    #[arg(long)]
    pub noise: Option<f64>,
    /// Amplitude multiplier of the misfiring cylinder
    #[arg(long)]
    pub attenuation: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Signal directory containing manifest.json
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Feature table to write
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_WINDOW_LEN)]
    pub window: usize,
    /// Window hop; defaults to the window length
    #[arg(long)]
    pub hop: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// Feature table
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Ranking file to write
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "min-leaf", default_value_t = 2)]
    pub min_leaf: usize,
    #[arg(long = "max-depth", default_value_t = 20)]
    pub max_depth: usize,
}

#[derive(Debug, Args)]
pub struct ClassifierArgs {
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    /// K* blend, percent
    #[arg(long, default_value_t = KStarModel::DEFAULT_BLEND)]
    pub blend: f64,
    /// Fold shuffling seed
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub ranking: PathBuf,
    /// JSON report to write
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub classifier: ClassifierArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long = "in", required_unless_present = "from_confusion")]
    pub input: Option<PathBuf>,
    /// Comma-separated feature subset
    #[arg(long, value_delimiter = ',', conflicts_with = "ranking")]
    pub features: Option<Vec<String>>,
    /// Ranking file; evaluates its top `--top` features
    #[arg(long, requires = "top")]
    pub ranking: Option<PathBuf>,
    #[arg(long, requires = "ranking")]
    pub top: Option<usize>,
    /// Replay a stored confusion matrix through the metrics
    #[arg(long = "from-confusion", conflicts_with_all = ["input", "features", "ranking"])]
    pub from_confusion: Option<PathBuf>,
    #[arg(long = "normal-class", default_value = "Normal")]
    pub normal_class: String,
    /// Train and test on the whole dataset instead of cross-validating
    #[arg(long)]
    pub resubstitution: bool,
    /// JSON report to write
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub classifier: ClassifierArgs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub condition: Condition,
    pub seed: u64,
    pub config: EngineSimConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: BTreeMap<String, ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub folds: usize,
    pub blend: f64,
    pub seed: u64,
    pub sweep: SweepResult,
}

/// Parses `args` (including the program name) and runs the command,
/// writing human-readable output to `stdout`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
    execute(cli.command, stdout)
}

pub fn execute(command: Command, stdout: &mut dyn Write) -> CliResult<()> {
    match command {
        Command::Gen(a) => cmd_gen(&a, stdout),
        Command::Extract(a) => cmd_extract(&a, stdout),
        Command::Rank(a) => cmd_rank(&a, stdout),
        Command::Sweep(a) => cmd_sweep(&a, stdout),
        Command::Eval(a) => cmd_eval(&a, stdout),
    }
}

fn emit(stdout: &mut dyn Write, text: &str) -> CliResult<()> {
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| CliError::file(Path::new("<stdout>"), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::file(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::file(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::file(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::file(path, e))
}

pub fn cmd_gen(args: &GenArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let conditions: Vec<Condition> = match &args.condition {
        Some(c) => vec![c
            .parse()
            .map_err(|_| CliError::Usage(format!("--condition: unknown condition {c:?}")))?],
        None => Condition::ALL.to_vec(),
    };
    let defaults = EngineSimConfig::default();
    let base = EngineSimConfig {
        rpm: args.rpm,
        sample_rate_hz: args.sample_rate,
        n_samples: args.samples,
        noise_sigma: args.noise.unwrap_or(defaults.noise_sigma),
        misfire_attenuation: args.attenuation.unwrap_or(defaults.misfire_attenuation),
        seed: args.seed,
        ..defaults
    };
    base.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    fs::create_dir_all(&args.out).map_err(|e| CliError::file(&args.out, e))?;
    let mut manifest = Manifest {
        files: BTreeMap::new(),
    };
    let mut file_index = 0u64;
    for &condition in &conditions {
        for i in 0..args.windows {
            let config = EngineSimConfig {
                seed: args.seed.wrapping_add(file_index),
                ..base.clone()
            };
            file_index += 1;
            let signal = synth_engine_signal(&config, condition)?;
            let name = format!("{condition}_{i:04}.sig");
            write_signal(args.out.join(&name), signal.samples())?;
            manifest.files.insert(
                name,
                ManifestEntry {
                    condition,
                    seed: config.seed,
                    config,
                },
            );
        }
    }
    write_json(&args.out.join(MANIFEST_FILE), &manifest)?;
    emit(
        stdout,
        &format!("wrote {} signals to {}\n", manifest.files.len(), args.out.display()),
    )
}

pub fn cmd_extract(args: &ExtractArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let hop = args.hop.unwrap_or(args.window);
    if args.window < 4 {
        return Err(CliError::Usage("--window: need at least 4 samples".into()));
    }
    if hop == 0 {
        return Err(CliError::Usage("--hop: must be at least 1".into()));
    }
    let manifest: Manifest = read_json(&args.input.join(MANIFEST_FILE))?;
    let mut vectors = Vec::new();
    for (name, entry) in &manifest.files {
        let signal = load_signal(
            args.input.join(name),
            Some(entry.condition),
            entry.config.sample_rate_hz,
        )?;
        if signal.len() < args.window {
            eprintln!(
                "warning: {name}: {} samples is shorter than the {}-sample window, skipped",
                signal.len(),
                args.window
            );
            continue;
        }
        for window in window_signal(&signal, args.window, hop)? {
            vectors.push(extract_features(&window)?);
        }
    }
    if vectors.is_empty() {
        return Err(CliError::file(&args.input, "no windows extracted"));
    }
    let dataset = Dataset::from_feature_vectors(&vectors)?;
    write_dataset(&dataset, &args.out)?;
    emit(
        stdout,
        &format!("wrote {} feature rows to {}\n", dataset.len(), args.out.display()),
    )
}

fn render_ranking(ranking: &FeatureRanking) -> String {
    let mut out = String::from("rank  feature             gain (bits)\n");
    for (i, f) in ranking.features.iter().enumerate() {
        out.push_str(&format!("{:<5} {:<19} {:.4}\n", i + 1, f.name, f.score));
    }
    out
}

pub fn cmd_rank(args: &RankArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let dataset = read_dataset(&args.input, LabelSet::Open)?;
    let params = TreeParams {
        min_leaf: args.min_leaf,
        max_depth: args.max_depth,
    };
    let tree = build_tree(&dataset, params)?;
    let ranking = rank_features(&tree, &dataset);
    write_json(&args.out, &ranking)?;
    emit(stdout, &render_ranking(&ranking))
}

pub fn cmd_sweep(args: &SweepArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let dataset = read_dataset(&args.input, LabelSet::Open)?;
    let ranking: FeatureRanking = read_json(&args.ranking)?;
    let c = &args.classifier;
    let sweep = feature_sweep(&dataset, &ranking, c.folds, c.blend, c.seed)?;
    if let Some(out) = &args.out {
        write_json(
            out,
            &SweepReport {
                folds: c.folds,
                blend: c.blend,
                seed: c.seed,
                sweep: sweep.clone(),
            },
        )?;
    }
    emit(stdout, &sweep.render())
}

pub fn cmd_eval(args: &EvalArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let report = if let Some(path) = &args.from_confusion {
        let cm: ConfusionMatrix = read_json(path)?;
        let cm = ConfusionMatrix::new(cm.class_names, cm.counts)?;
        EvalReport::from_confusion(cm, &args.normal_class, Vec::new(), None, None)?
    } else {
        let input = args
            .input
            .as_ref()
            .ok_or_else(|| CliError::Usage("--in is required".into()))?;
        let full = read_dataset(input, LabelSet::Open)?;
        let features: Vec<String> = if let Some(list) = &args.features {
            for name in list {
                if !full.feature_names().contains(name) {
                    return Err(CliError::Usage(format!("--features: unknown feature {name:?}")));
                }
            }
            list.clone()
        } else if let (Some(path), Some(top)) = (&args.ranking, args.top) {
            let ranking: FeatureRanking = read_json(path)?;
            if top == 0 || top > ranking.len() {
                return Err(CliError::Usage(format!(
                    "--top: must lie in 1..={}",
                    ranking.len()
                )));
            }
            ranking.top(top).iter().map(|s| s.to_string()).collect()
        } else {
            full.feature_names().to_vec()
        };
        let dataset = full.project(&features)?;
        let c = &args.classifier;
        let protocol = if args.resubstitution {
            Protocol::Resubstitution
        } else {
            Protocol::CrossValidation {
                folds: c.folds,
                seed: c.seed,
            }
        };
        let cm = evaluate(&dataset, protocol, c.blend)?;
        EvalReport::from_confusion(cm, &args.normal_class, features, Some(protocol), Some(c.blend))?
    };
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    emit(stdout, &report.render())
}
