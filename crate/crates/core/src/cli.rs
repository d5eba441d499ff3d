//! Command-line front end: `synth`, `select`, `compress`, `decompress`,
//! `eval`.
//!
//! Exit codes: 0 success, 2 usage, 3 I/O or format, 4 data, 5 infeasible
//! budget. Every command writes a canonical `report.json` (deterministic)
//! and a separate `timings.json` into its output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::coding_rate::{class_coding_rate, coding_rate, CodingRateParams};
use crate::dataio::{
    self, fnv1a, load_artifact, load_dataset, save_artifact, save_dataset, write_canonical_json, CondensedArtifact,
    Dtype, FileRef, TOOL_VERSION,
};
use crate::error::{Error, Result};
use crate::label_compress::{
    compress_labels, decompress_labels, reconstruction_errors, Budget, CompressOptions, CompressedLabels,
    CompressionMethod, SampleFactors,
};
use crate::selector::{precompute_label_rates, select, FeatureSet, SelectionConfig, SelectionMode};
use crate::synthbench::{
    eval_nearest_mean, eval_soft_nearest_mean, gen_mixture_split, gen_soft_labels, random_subset_per_class,
    LabelGenSpec, MixtureSpec,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DATA: i32 = 4;
pub const EXIT_INFEASIBLE: i32 = 5;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "ratesel",
    version,
    about = "Coding-rate subset selection and soft-label compression"
)]
pub struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "SCORE_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic train/test dataset with soft labels.
    Synth(SynthArgs),
    /// Greedy subset selection; writes a condensed artifact.
    Select(SelectArgs),
    /// Compress the soft labels of a condensed artifact.
    Compress(CompressArgs),
    /// Rebuild soft labels from compressed factors.
    Decompress(DecompressArgs),
    /// Nearest-class-mean evaluation of a condensed artifact.
    Eval(EvalArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 500)]
    pub per_class: usize,
    /// Held-out samples per class (0 skips the test split).
    #[arg(long, default_value_t = 100)]
    pub test_per_class: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 8)]
    pub subspace_rank: usize,
    #[arg(long, default_value_t = 3.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 20)]
    pub augs: usize,
    #[arg(long, default_value_t = 3)]
    pub planted_rank: usize,
    #[arg(long)]
    pub rank_jitter: bool,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 0.0)]
    pub label_noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    PerClass,
    GlobalCapped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineArg {
    Random,
}

#[derive(Debug, Args, Serialize)]
pub struct SelectArgs {
    /// Dataset manifest (file or directory).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub ipc: usize,
    #[arg(long, default_value_t = crate::selector::DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = crate::selector::DEFAULT_BETA)]
    pub beta: f64,
    #[arg(long, default_value_t = crate::coding_rate::DEFAULT_EPSILON_SQ)]
    pub epsilon_sq: f64,
    /// Use a fixed γ for the whole run instead of d/(n·ε²).
    #[arg(long)]
    pub gamma_fixed: Option<f64>,
    #[arg(long, default_value_t = crate::selector::DEFAULT_CANDIDATE_BATCH)]
    pub batch: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::PerClass)]
    pub mode: ModeArg,
    #[arg(long, value_enum)]
    pub baseline: Option<BaselineArg>,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodArg {
    Rpca,
    Svd,
    Rsvd,
    Cur,
}

impl From<MethodArg> for CompressionMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Rpca => Self::Rpca,
            MethodArg::Svd => Self::Svd,
            MethodArg::Rsvd => Self::Rsvd,
            MethodArg::Cur => Self::Cur,
        }
    }
}

#[derive(Debug, Args, Serialize)]
#[command(group(clap::ArgGroup::new("budget").required(true).args(["ratio", "rank"])))]
pub struct CompressArgs {
    #[arg(long)]
    pub artifact: PathBuf,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub rank: Option<usize>,
    /// Bytes per stored scalar, 4 or 8.
    #[arg(long, default_value_t = 8)]
    pub bytes: u8,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output artifact directory (may equal --artifact).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct DecompressArgs {
    #[arg(long)]
    pub artifact: PathBuf,
    /// Clamp at zero and rescale rows onto the simplex.
    #[arg(long)]
    pub renormalize: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub artifact: PathBuf,
    /// Full training dataset the artifact was selected from.
    #[arg(long)]
    pub data: PathBuf,
    /// Held-out dataset.
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    /// Compression ratios at which soft-label accuracy is reported.
    #[arg(long, value_delimiter = ',', default_values_t = [10.0, 20.0, 30.0])]
    pub ratios: Vec<f64>,
    #[arg(long, value_enum, default_value_t = MethodArg::Svd)]
    pub method: MethodArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write `eval.csv`.
    #[arg(long)]
    pub csv: bool,
    #[arg(long)]
    pub out: PathBuf,
}

/// Failure with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidParams(_) | Error::InvalidSpec(_) | Error::RankOutOfRange { .. } => EXIT_USAGE,
            Error::Io(_)
            | Error::Json(_)
            | Error::BadMagic(_)
            | Error::BadVersion(_)
            | Error::BadDtype(_)
            | Error::TruncatedPayload { .. }
            | Error::ChecksumMismatch(_)
            | Error::SchemaMismatch(_) => EXIT_IO,
            Error::RatioInfeasible { .. } => EXIT_INFEASIBLE,
            _ => EXIT_DATA,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Stage seed: `seed ⊕ FNV-1a(stage name)`.
pub fn derive_seed(seed: u64, stage: &str) -> u64 {
    seed ^ fnv1a(stage.as_bytes())
}

#[derive(Default)]
struct Timings(BTreeMap<String, f64>);

impl Timings {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.0.insert(stage.to_string(), start.elapsed().as_secs_f64() * 1e3);
        out
    }
}

#[derive(Serialize)]
struct RunReport<'a, C: Serialize> {
    schema_version: u32,
    tool_version: &'a str,
    command: &'a str,
    seed: u64,
    config: &'a C,
    metrics: Value,
    warnings: Vec<String>,
}

fn write_report<C: Serialize>(
    out: &Path,
    command: &str,
    seed: u64,
    config: &C,
    metrics: Value,
    warnings: Vec<String>,
    timings: &Timings,
) -> Result<()> {
    fs::create_dir_all(out)?;
    let report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        tool_version: TOOL_VERSION,
        command,
        seed,
        config,
        metrics,
        warnings,
    };
    write_canonical_json(&out.join("report.json"), &report)?;
    write_canonical_json(&out.join("timings.json"), &json!({ "stages_ms": timings.0 }))?;
    Ok(())
}

#[derive(Serialize)]
struct Summary {
    mean: f64,
    std: f64,
    min: f64,
    max: f64,
}

fn summarize(values: &[f64]) -> Summary {
    if values.is_empty() {
        return Summary {
            mean: 0.0,
            std: 0.0,
            min: 0.0,
            max: 0.0,
        };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Summary {
        mean,
        std: var.sqrt(),
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

fn cmd_synth(args: &SynthArgs) -> CliResult<()> {
    let label_max = args.augs.min(args.classes);
    if args.planted_rank == 0 || args.planted_rank > label_max {
        return Err(CliError::usage(format!(
            "--planted-rank {} must be in 1..={label_max} (min of --augs and --classes)",
            args.planted_rank
        )));
    }
    let mut timings = Timings::default();
    let mixture = MixtureSpec {
        num_classes: args.classes,
        per_class: args.per_class,
        dim: args.dim,
        subspace_rank: args.subspace_rank,
        separation: args.separation,
        noise: args.noise,
        seed: derive_seed(args.seed, "synth.mixture"),
    };
    let labels = LabelGenSpec {
        num_augs: args.augs,
        temperature: args.temperature,
        planted_rank: args.planted_rank,
        rank_jitter: args.rank_jitter,
        noise: args.label_noise,
        seed: derive_seed(args.seed, "synth.labels"),
        ..Default::default()
    };
    let (train, test) = timings.time("mixture", || gen_mixture_split(&mixture, args.test_per_class))?;
    let stack = timings.time("labels", || gen_soft_labels(&train, &labels))?;
    let provenance = format!("synthetic mixture, seed {}", args.seed);
    let train_manifest = timings.time("write", || {
        save_dataset(&args.out.join("train"), &train, Some(&stack), &provenance)
    })?;
    let mut metrics = json!({
        "train_samples": train.len(),
        "num_classes": train.num_classes(),
        "dim": train.dim(),
        "num_augs": stack.num_augs(),
        "train_features_checksum": train_manifest.features.checksum,
    });
    if args.test_per_class > 0 {
        let m = save_dataset(&args.out.join("test"), &test, None, &provenance)?;
        metrics["test_samples"] = json!(test.len());
        metrics["test_features_checksum"] = json!(m.features.checksum);
    }
    let config = json!({ "args": args, "mixture": mixture, "labels": labels });
    write_report(&args.out, "synth", args.seed, &config, metrics, Vec::new(), &timings)?;
    Ok(())
}

fn dataset_ref(path: &Path) -> Result<FileRef> {
    let manifest = if path.is_dir() {
        path.join("manifest.json")
    } else {
        path.to_path_buf()
    };
    let checksum = dataio::file_checksum(&manifest)?;
    Ok(FileRef::new(&path.to_string_lossy(), checksum))
}

fn selection_rates(features: &FeatureSet, positions: &[usize], params: &CodingRateParams) -> Result<(f64, f64)> {
    let sub = features.subset(positions);
    let r_i = coding_rate(sub.features(), params)?;
    let r_d = class_coding_rate(sub.features(), sub.labels(), sub.num_classes(), params)?;
    Ok((r_i, r_d))
}

fn cmd_select(args: &SelectArgs) -> CliResult<()> {
    let mut timings = Timings::default();
    let dataset = timings.time("load", || load_dataset(&args.data))?;
    let stack = dataset.soft_labels.as_ref().ok_or_else(|| CliError {
        code: EXIT_DATA,
        message: "dataset has no soft labels".into(),
    })?;
    let params = match args.gamma_fixed {
        Some(g) => CodingRateParams::fixed(args.epsilon_sq, g),
        None => CodingRateParams::adaptive(args.epsilon_sq),
    };
    let config = SelectionConfig {
        ipc: args.ipc,
        alpha: args.alpha,
        beta: args.beta,
        params,
        candidate_batch: args.batch,
        mode: match args.mode {
            ModeArg::PerClass => SelectionMode::PerClass,
            ModeArg::GlobalCapped => SelectionMode::GlobalCapped,
        },
        seed: derive_seed(args.seed, "select"),
    };
    let features = &dataset.features;
    let result = timings.time("select", || select(features, stack, &config))?;
    let positions = result.positions(features)?;
    let (r_i, r_d) = selection_rates(features, &positions, &config.params)?;
    let label_rates = precompute_label_rates(&stack.subset(&positions), &config.params)?;
    let mut metrics = json!({
        "total_selected": result.total_selected(),
        "full_coverage": result.total_selected() == features.len(),
        "rate_informativeness": r_i,
        "rate_class_conditional": r_d,
        "rate_labels": summarize(&label_rates),
        "criterion": r_i - config.alpha * r_d - config.beta * label_rates.iter().sum::<f64>(),
    });
    if let Some(BaselineArg::Random) = args.baseline {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(args.seed, "select.baseline"));
        let rates = timings.time("baseline", || {
            (0..args.trials)
                .map(|_| {
                    let pos = random_subset_per_class(features, args.ipc, &mut rng)?;
                    Ok(selection_rates(features, &pos, &config.params)?.0)
                })
                .collect::<Result<Vec<f64>>>()
        })?;
        let s = summarize(&rates);
        metrics["baseline_random"] = json!({
            "trials": args.trials,
            "rate_informativeness": s,
            "greedy_at_least_mean": r_i >= s.mean,
        });
    }
    let artifact = CondensedArtifact {
        dataset: dataset_ref(&args.data)?,
        selection: result,
        labels: stack.subset(&positions),
        compressed: None,
        tool_version: TOOL_VERSION.to_string(),
    };
    timings.time("write", || save_artifact(&artifact, &args.out))?;
    write_report(
        &args.out,
        "select",
        args.seed,
        &json!({ "args": args, "selection": &config }),
        metrics,
        Vec::new(),
        &timings,
    )?;
    Ok(())
}

fn factor_sizes(c: &CompressedLabels) -> Vec<f64> {
    c.samples
        .iter()
        .map(|s| match s {
            SampleFactors::LowRank(f) => f.rank() as f64,
            SampleFactors::Cur { c_block, .. } => c_block.cols() as f64,
            SampleFactors::Rpca { low_rank, .. } => low_rank.rank() as f64,
        })
        .collect()
}

fn compress_opts(method: CompressionMethod, budget: Budget, bytes: u8, seed: u64) -> CompressOptions {
    CompressOptions {
        bytes_per_scalar: bytes,
        seed,
        ..CompressOptions::new(method, budget)
    }
}

fn cmd_compress(args: &CompressArgs) -> CliResult<()> {
    let mut timings = Timings::default();
    let mut artifact = timings.time("load", || load_artifact(&args.artifact))?;
    let budget = match (args.ratio, args.rank) {
        (Some(r), None) => Budget::Ratio(r),
        (None, Some(r)) => Budget::Rank(r),
        _ => return Err(CliError::usage("exactly one of --ratio or --rank is required")),
    };
    let method = CompressionMethod::from(args.method);
    let opts = compress_opts(method, budget, args.bytes, derive_seed(args.seed, "compress"));
    let compressed = timings.time("compress", || compress_labels(&artifact.labels, &opts))?;
    let recon = decompress_labels(&compressed, false)?;
    let errors = reconstruction_errors(&recon, &artifact.labels)?;
    let mut warnings = Vec::new();
    let unconverged = compressed.unconverged();
    if unconverged > 0 {
        warnings.push(format!("rpca did not converge on {unconverged} samples"));
    }
    let metrics = json!({
        "method": method.name(),
        "samples": compressed.num_samples,
        "original_bytes": compressed.original_bytes,
        "stored_bytes": compressed.stored_bytes,
        "achieved_ratio": compressed.achieved_ratio(),
        "factor_size": summarize(&factor_sizes(&compressed)),
        "reconstruction_error": summarize(&errors),
        "rpca_unconverged": unconverged,
    });
    artifact.compressed = Some(compressed);
    timings.time("write", || save_artifact(&artifact, &args.out))?;
    write_report(&args.out, "compress", args.seed, args, metrics, warnings, &timings)?;
    Ok(())
}

fn cmd_decompress(args: &DecompressArgs) -> CliResult<()> {
    let mut timings = Timings::default();
    let artifact = timings.time("load", || load_artifact(&args.artifact))?;
    let compressed = artifact.compressed.as_ref().ok_or_else(|| CliError {
        code: EXIT_DATA,
        message: "artifact has no compressed labels".into(),
    })?;
    let recon = timings.time("decompress", || decompress_labels(compressed, args.renormalize))?;
    let errors = reconstruction_errors(&recon, &artifact.labels)?;
    fs::create_dir_all(&args.out).map_err(Error::from)?;
    let checksum = dataio::save_tensor(
        &args.out.join("labels_reconstructed.bin"),
        &[recon.num_samples(), recon.num_augs(), recon.num_classes()],
        recon.as_slice(),
        Dtype::F64,
    )?;
    let metrics = json!({
        "method": compressed.method.name(),
        "samples": recon.num_samples(),
        "reconstruction_error": summarize(&errors),
        "output": FileRef::new("labels_reconstructed.bin", checksum),
    });
    write_report(&args.out, "decompress", 0, args, metrics, Vec::new(), &timings)?;
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> CliResult<()> {
    let mut timings = Timings::default();
    let artifact = timings.time("load", || load_artifact(&args.artifact))?;
    let train = load_dataset(&args.data)?;
    let test = load_dataset(&args.test)?;
    artifact.check_against(&train.manifest)?;
    let features = &train.features;
    let mut positions = artifact.selection.positions(features)?;
    let order = positions.clone();
    positions.sort_unstable();
    let condensed = features.subset(&positions);
    let ipc = artifact.selection.config.ipc;

    let accuracy = timings.time("hard", || eval_nearest_mean(&condensed, &test.features))?;
    let full = eval_nearest_mean(features, &test.features)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(args.seed, "eval.baseline"));
    let random = timings.time("baseline", || {
        (0..args.trials)
            .map(|_| {
                let pos = random_subset_per_class(features, ipc, &mut rng)?;
                eval_nearest_mean(&features.subset(&pos), &test.features)
            })
            .collect::<Result<Vec<f64>>>()
    })?;

    let picked = features.subset(&order);
    let soft = eval_soft_nearest_mean(&picked, &artifact.labels, &test.features)?;
    let method = CompressionMethod::from(args.method);
    let mut rows = Vec::new();
    for &ratio in &args.ratios {
        let opts = compress_opts(method, Budget::Ratio(ratio), 8, derive_seed(args.seed, "eval.compress"));
        let row = timings.time(&format!("compress_{ratio}"), || -> Result<Value> {
            let c = compress_labels(&artifact.labels, &opts)?;
            let recon = decompress_labels(&c, false)?;
            let errors = reconstruction_errors(&recon, &artifact.labels)?;
            Ok(json!({
                "ratio": ratio,
                "achieved_ratio": c.achieved_ratio(),
                "accuracy": eval_soft_nearest_mean(&picked, &recon, &test.features)?,
                "reconstruction_error": summarize(&errors).mean,
            }))
        })?;
        rows.push(row);
    }
    let random_summary = summarize(&random);
    let metrics = json!({
        "accuracy_condensed": accuracy,
        "accuracy_full": full,
        "accuracy_random": random_summary,
        "accuracy_random_trials": random,
        "accuracy_soft_uncompressed": soft,
        "compressed": rows,
        "condensed_at_least_random_mean": accuracy >= random_summary.mean,
        "method": method.name(),
    });
    fs::create_dir_all(&args.out).map_err(Error::from)?;
    if args.csv {
        let mut csv = String::from("setting,ratio,accuracy\n");
        csv += &format!(
            "condensed,1,{accuracy:.16e}\nfull,1,{full:.16e}\nrandom_mean,1,{:.16e}\n",
            random_summary.mean
        );
        csv += &format!("soft,1,{soft:.16e}\n");
        for r in &rows {
            csv += &format!(
                "soft_{},{:.16e},{:.16e}\n",
                method.name(),
                r["ratio"].as_f64().unwrap_or(f64::NAN),
                r["accuracy"].as_f64().unwrap_or(f64::NAN)
            );
        }
        fs::write(args.out.join("eval.csv"), csv).map_err(Error::from)?;
    }
    write_report(&args.out, "eval", args.seed, args, metrics, Vec::new(), &timings)?;
    Ok(())
}

fn configure_threads(threads: Option<usize>) -> CliResult<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        // a pool that already exists (repeated in-process runs) is kept
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    configure_threads(cli.threads)?;
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Select(a) => cmd_select(a),
        Command::Compress(a) => cmd_compress(a),
        Command::Decompress(a) => cmd_decompress(a),
        Command::Eval(a) => cmd_eval(a),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
