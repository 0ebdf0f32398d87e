//! Command-line pipeline for process-data score refinement.
//!
//! Subcommands cover the full flow: `simulate` synthetic data, `fit-irt`
//! calibration, `dissim` pairwise sequence dissimilarities, `embed` feature
//! extraction, `train-score` the two-step scoring rule, `score` new persons,
//! `evaluate` the cross-validated comparison protocol, and `describe`
//! per-item descriptives. Commands exit 0 on success and print a
//! machine-readable error JSON on stderr otherwise; every run appends a
//! provenance record (config hash, seed, artifact digests) to
//! `run_log.jsonl` in its output directory.

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use procscore::error::{Error, Result};
use procscore::eval::FeatureSource;
use procscore::io;
use procscore::irt::{EmConfig, PriorSpec};
use procscore::mds::{ItemFeatures, MdsConfig, ProjectConfig};
use procscore::rbscore::{
    features_for_partition, score_new_person, train_scoring_rule, ItemPartition, TrainConfig,
    TrainingSequences,
};
use procscore::seqdiss::{dissimilarity_matrix, is_omission, ActionSequence};
use procscore::simgen::{FeatureModel, SimConfig};
use procscore::{ProtocolConfig, RidgeConfig};

#[derive(Parser)]
#[command(name = "procscore", version, about = "Process-data score refinement pipeline")]
struct Cli {
    /// Optional TOML file with pipeline defaults; explicit flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum OmissionPolicy {
    Exclude,
    Keep,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum FeatureModelArg {
    LinearGaussian,
    ScoreOnly,
    NoiseOnly,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic dataset (responses, sequences, features, truth).
    Simulate(SimulateArgs),
    /// Calibrate Graded Response Model item parameters by marginal MLE.
    FitIrt(FitIrtArgs),
    /// Export per-item pairwise dissimilarity matrices.
    Dissim(DissimArgs),
    /// Embed per-item dissimilarities into numeric features.
    Embed(EmbedArgs),
    /// Train the two-step scoring rule on pretest data.
    TrainScore(TrainScoreArgs),
    /// Score new persons with a trained rule.
    Score(ScoreArgs),
    /// Run the cross-validated comparison protocol.
    Evaluate(EvaluateArgs),
    /// Per-item descriptive statistics of sequences and scores.
    Describe(DescribeArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    items: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    /// Comma-separated score-level counts per item (e.g. 2,4,3).
    #[arg(long)]
    levels: Option<String>,
    #[arg(long, value_enum, default_value = "linear-gaussian")]
    feature_model: FeatureModelArg,
    #[arg(long, default_value_t = 1.0)]
    informativeness: f64,
    #[arg(long, default_value_t = 0.8)]
    noise_sd: f64,
    #[arg(long, default_value_t = 10)]
    feature_dims: usize,
    #[arg(long, default_value = "0.8,2.0")]
    slope_range: String,
    #[arg(long, default_value = "-2.0,2.0")]
    intercept_range: String,
}

#[derive(Args)]
struct FitIrtArgs {
    #[arg(long)]
    responses: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated declared score-level counts, aligned with the CSV
    /// header items.
    #[arg(long)]
    levels: Option<String>,
    #[arg(long)]
    quad_points: Option<usize>,
    #[arg(long)]
    quad_range: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct DissimArgs {
    #[arg(long)]
    sequences: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Restrict to these item ids.
    #[arg(long)]
    items: Option<String>,
    #[arg(long, value_enum, default_value = "exclude")]
    omission_policy: OmissionPolicy,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    sequences: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    items: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    augment: Option<bool>,
    #[arg(long, value_enum, default_value = "exclude")]
    omission_policy: OmissionPolicy,
}

#[derive(Args)]
struct TrainScoreArgs {
    #[arg(long)]
    responses: PathBuf,
    #[arg(long)]
    params: PathBuf,
    /// Embedding JSONs from `embed`, one per first-block item.
    #[arg(long)]
    embeddings_dir: Option<PathBuf>,
    /// Raw sequences; used to build embeddings when no directory is given.
    #[arg(long)]
    sequences: Option<PathBuf>,
    #[arg(long)]
    b1: String,
    #[arg(long)]
    b2: String,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    augment: Option<bool>,
    #[arg(long)]
    ridge_folds: Option<usize>,
    #[arg(long)]
    lambda_count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "exclude")]
    omission_policy: OmissionPolicy,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    rule: PathBuf,
    #[arg(long)]
    sequences: PathBuf,
    #[arg(long)]
    train_sequences: PathBuf,
    /// New persons' observed first-block scores (for augmented rules).
    #[arg(long)]
    responses: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "exclude")]
    omission_policy: OmissionPolicy,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    responses: PathBuf,
    #[arg(long)]
    sequences: Option<PathBuf>,
    /// Precomputed per-item numeric features; bypasses the sequence pipeline.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    partitions: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    ridge_folds: Option<usize>,
    #[arg(long)]
    lambda_count: Option<usize>,
    #[arg(long)]
    augment: Option<bool>,
    #[arg(long)]
    deciles: Option<bool>,
    #[arg(long)]
    min_fold_persons: Option<usize>,
    #[arg(long, value_enum, default_value = "exclude")]
    omission_policy: OmissionPolicy,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct DescribeArgs {
    #[arg(long)]
    sequences: PathBuf,
    #[arg(long)]
    responses: PathBuf,
    #[arg(long, value_enum, default_value = "keep")]
    omission_policy: OmissionPolicy,
    #[arg(long)]
    out: PathBuf,
}

/// Pipeline defaults loadable from a TOML file.
#[derive(Default, serde::Deserialize)]
struct FileConfig {
    #[serde(default)]
    pipeline: PipelineDefaults,
}

#[derive(Default, serde::Deserialize)]
struct PipelineDefaults {
    k: Option<usize>,
    augment: Option<bool>,
    ridge_folds: Option<usize>,
    lambda_count: Option<usize>,
    partitions: Option<usize>,
    folds: Option<usize>,
    t_max: Option<usize>,
    quad_points: Option<usize>,
    quad_range: Option<f64>,
    max_iter: Option<usize>,
    tol: Option<f64>,
    threads: Option<usize>,
    deciles: Option<bool>,
    min_fold_persons: Option<usize>,
}

fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::InvalidItemParams { .. } => "invalid_item_params",
        Error::InvalidResponses(_) => "invalid_responses",
        Error::ItemNotCalibratable { .. } => "item_not_calibratable",
        Error::Domain(_) => "domain",
        Error::DimensionMismatch { .. } => "dimension_mismatch",
        Error::MleDivergence(_) => "mle_divergence",
        Error::DegenerateDesign(_) => "degenerate_design",
        Error::UndefinedCorrelation(_) => "undefined_correlation",
        Error::InvalidSequence(_) => "invalid_sequence",
        Error::MissingFeatures { .. } => "missing_features",
        Error::InvalidConfig(_) => "invalid_config",
        Error::ToyValidation(_) => "toy_validation",
        Error::SchemaMismatch { .. } => "schema_mismatch",
        Error::Parse { .. } => "parse",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
        Error::Csv(_) => "csv",
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        let payload = json!({
            "error": err.to_string(),
            "kind": error_kind(&err),
        });
        eprintln!("{payload}");
        std::process::exit(1);
    }
}

fn parse_list(raw: &str) -> Vec<String> {
    raw.split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn parse_usize_list(raw: &str) -> Result<Vec<usize>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad integer {s:?}")))
        })
        .collect()
}

fn parse_pair(raw: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = raw.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::InvalidConfig(format!("expected lo,hi got {raw:?}")));
    }
    let lo = parts[0]
        .trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("bad number {:?}", parts[0])))?;
    let hi = parts[1]
        .trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("bad number {:?}", parts[1])))?;
    Ok((lo, hi))
}

fn load_file_config(path: Option<&PathBuf>) -> Result<PipelineDefaults> {
    match path {
        None => Ok(PipelineDefaults::default()),
        Some(p) => {
            let text = fs::read_to_string(p)?;
            let parsed: FileConfig = toml::from_str(&text)
                .map_err(|e| Error::InvalidConfig(format!("bad config file: {e}")))?;
            Ok(parsed.pipeline)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let defaults = load_file_config(cli.config.as_ref())?;
    if let Some(threads) = cli.threads.or(defaults.threads) {
        // ignore failure if a pool already exists (tests may run several commands)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::FitIrt(args) => cmd_fit_irt(args, &defaults),
        Command::Dissim(args) => cmd_dissim(args),
        Command::Embed(args) => cmd_embed(args, &defaults),
        Command::TrainScore(args) => cmd_train_score(args, &defaults),
        Command::Score(args) => cmd_score(args),
        Command::Evaluate(args) => cmd_evaluate(args, &defaults),
        Command::Describe(args) => cmd_describe(args),
    }
}

// ---------------------------------------------------------------------------
// Provenance log
// ---------------------------------------------------------------------------

struct RunLog {
    command: &'static str,
    config_repr: String,
    seed: Option<u64>,
    artifacts: Vec<serde_json::Value>,
    notes: BTreeMap<String, serde_json::Value>,
}

impl RunLog {
    fn new(command: &'static str, config_repr: String, seed: Option<u64>) -> Self {
        Self {
            command,
            config_repr,
            seed,
            artifacts: Vec::new(),
            notes: BTreeMap::new(),
        }
    }

    fn artifact(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path)?;
        let digest = Sha256::digest(&bytes);
        self.artifacts.push(json!({
            "path": path.display().to_string(),
            "sha256": format!("{digest:x}"),
            "bytes": bytes.len(),
        }));
        Ok(())
    }

    fn note(&mut self, key: &str, value: serde_json::Value) {
        self.notes.insert(key.to_string(), value);
    }

    fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let config_hash = format!("{:x}", Sha256::digest(self.config_repr.as_bytes()));
        let entry = json!({
            "schema": "procscore.runlog.v1",
            "command": self.command,
            "config_hash": config_hash,
            "seed": self.seed,
            "artifacts": self.artifacts,
            "notes": self.notes,
        });
        let mut file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join("run_log.jsonl"))?;
        writeln!(file, "{entry}")?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Sequence ingestion with the omission policy
// ---------------------------------------------------------------------------

fn ingest_sequences(
    path: &Path,
    policy: OmissionPolicy,
) -> Result<(Vec<ActionSequence>, usize)> {
    let seqs = io::read_sequences_jsonl(path)?;
    match policy {
        OmissionPolicy::Keep => Ok((seqs, 0)),
        OmissionPolicy::Exclude => {
            let before = seqs.len();
            let kept: Vec<ActionSequence> =
                seqs.into_iter().filter(|s| !is_omission(s)).collect();
            let dropped = before - kept.len();
            Ok((kept, dropped))
        }
    }
}

/// Restricts a response matrix to persons holding a sequence for every one of
/// the given items. Returns the kept matrix and the dropped person count.
fn complete_case(
    responses: &procscore::ResponseMatrix,
    seqs: &[ActionSequence],
    items: &[String],
) -> (procscore::ResponseMatrix, usize) {
    let mut have: HashMap<(&str, &str), bool> = HashMap::new();
    for s in seqs {
        have.insert((s.person_id.as_str(), s.item_id.as_str()), true);
    }
    let keep: Vec<usize> = (0..responses.n_persons())
        .filter(|&i| {
            items.iter().all(|item| {
                have.contains_key(&(responses.person_ids[i].as_str(), item.as_str()))
            })
        })
        .collect();
    let dropped = responses.n_persons() - keep.len();
    (responses.subset_persons(&keep), dropped)
}

fn item_sequences(seqs: &[ActionSequence], item_id: &str, order: &[String]) -> Result<Vec<ActionSequence>> {
    let mut by_person: HashMap<&str, &ActionSequence> = HashMap::new();
    for s in seqs.iter().filter(|s| s.item_id == item_id) {
        by_person.insert(s.person_id.as_str(), s);
    }
    order
        .iter()
        .map(|pid| {
            by_person
                .get(pid.as_str())
                .map(|&s| s.clone())
                .ok_or_else(|| Error::MissingFeatures {
                    person_id: pid.clone(),
                    item_id: item_id.to_string(),
                })
        })
        .collect()
}

fn declared_levels_arg(levels: &Option<String>, path: &Path) -> Result<Option<BTreeMap<String, usize>>> {
    match levels {
        None => Ok(None),
        Some(raw) => {
            // align the declared counts with the CSV header order
            let header = {
                let text = fs::read_to_string(path)?;
                let first = text.lines().next().unwrap_or_default().to_string();
                parse_list(&first)
            };
            let counts = parse_usize_list(raw)?;
            if header.len() < 2 || counts.len() != header.len() - 1 {
                return Err(Error::InvalidConfig(format!(
                    "{} level counts supplied for {} items",
                    counts.len(),
                    header.len().saturating_sub(1)
                )));
            }
            Ok(Some(
                header[1..]
                    .iter()
                    .cloned()
                    .zip(counts)
                    .collect::<BTreeMap<_, _>>(),
            ))
        }
    }
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let mut config = SimConfig::new(args.n, args.items, args.seed);
    if let Some(levels) = &args.levels {
        config.n_levels = Some(parse_usize_list(levels)?);
    }
    config.slope_range = parse_pair(&args.slope_range)?;
    config.intercept_range = parse_pair(&args.intercept_range)?;
    config.feature_model = match args.feature_model {
        FeatureModelArg::LinearGaussian => FeatureModel::LinearGaussian {
            informativeness: args.informativeness,
            noise_sd: args.noise_sd,
            dims: args.feature_dims,
        },
        FeatureModelArg::ScoreOnly => FeatureModel::ScoreOnly,
        FeatureModelArg::NoiseOnly => FeatureModel::NoiseOnly {
            noise_sd: args.noise_sd,
            dims: args.feature_dims,
        },
    };
    let data = procscore::simulate_dataset(&config)?;

    fs::create_dir_all(&args.out_dir)?;
    let seq_path = args.out_dir.join("sequences.jsonl");
    let resp_path = args.out_dir.join("responses.csv");
    let feat_path = args.out_dir.join("features.csv");
    let truth_path = args.out_dir.join("truth.json");
    io::write_sequences_jsonl(&seq_path, &data.sequences)?;
    io::write_responses_csv(&resp_path, &data.responses)?;
    io::write_features_csv(&feat_path, &data.features)?;
    io::save_truth(
        &truth_path,
        &data.responses.person_ids,
        &data.true_theta,
        &data.true_params,
    )?;

    let mut log = RunLog::new(
        "simulate",
        format!(
            "n={} items={} seed={} levels={:?} features={:?}",
            args.n,
            args.items,
            args.seed,
            config.levels(),
            args.levels
        ),
        Some(args.seed),
    );
    for p in [&seq_path, &resp_path, &feat_path, &truth_path] {
        log.artifact(p)?;
    }
    log.write(&args.out_dir)?;
    println!(
        "simulated {} persons x {} items into {}",
        args.n,
        args.items,
        args.out_dir.display()
    );
    Ok(())
}

fn cmd_fit_irt(args: FitIrtArgs, defaults: &PipelineDefaults) -> Result<()> {
    let declared = declared_levels_arg(&args.levels, &args.responses)?;
    let responses = io::read_responses_csv(&args.responses, declared.as_ref())?;
    let prior = PriorSpec::new(
        args.quad_points.or(defaults.quad_points).unwrap_or(61),
        -args.quad_range.or(defaults.quad_range).unwrap_or(6.0),
        args.quad_range.or(defaults.quad_range).unwrap_or(6.0),
    )?;
    let em = EmConfig {
        max_iter: args.max_iter.or(defaults.max_iter).unwrap_or(500),
        tol: args.tol.or(defaults.tol).unwrap_or(1e-5),
        ..Default::default()
    };
    let fit = procscore::fit_grm(&responses, &prior, &em)?;
    io::save_params(&args.out, &fit.params)?;

    let out_dir = args
        .out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .to_path_buf();
    let mut log = RunLog::new(
        "fit-irt",
        format!(
            "responses={} quad={} range={} max_iter={} tol={}",
            args.responses.display(),
            prior.quad_points,
            prior.theta_max,
            em.max_iter,
            em.tol
        ),
        None,
    );
    log.artifact(&args.out)?;
    log.note("converged", json!(fit.converged));
    log.note("iterations", json!(fit.n_iter));
    log.note(
        "final_log_likelihood",
        json!(fit.log_likelihood.last().copied()),
    );
    log.note("warnings", json!(fit.warnings));
    log.write(&out_dir)?;
    println!(
        "calibrated {} items in {} iterations (converged: {})",
        fit.params.len(),
        fit.n_iter,
        fit.converged
    );
    Ok(())
}

fn selected_items(seqs: &[ActionSequence], filter: &Option<String>) -> Vec<String> {
    let mut items: Vec<String> = match filter {
        Some(raw) => parse_list(raw),
        None => {
            let mut all: Vec<String> = seqs.iter().map(|s| s.item_id.clone()).collect();
            all.sort_unstable();
            all.dedup();
            all
        }
    };
    items.sort_unstable();
    items
}

fn cmd_dissim(args: DissimArgs) -> Result<()> {
    let (seqs, dropped) = ingest_sequences(&args.sequences, args.omission_policy)?;
    let items = selected_items(&seqs, &args.items);
    fs::create_dir_all(&args.out_dir)?;
    let mut log = RunLog::new(
        "dissim",
        format!("sequences={} items={items:?}", args.sequences.display()),
        None,
    );
    log.note("dropped_omissions", json!(dropped));
    for item in &items {
        let per_item: Vec<ActionSequence> = seqs
            .iter()
            .filter(|s| &s.item_id == item)
            .cloned()
            .collect();
        if per_item.is_empty() {
            return Err(Error::InvalidSequence(format!("no sequences for item {item}")));
        }
        let dmat = dissimilarity_matrix(&per_item)?;
        let path = args.out_dir.join(format!("dissim_{item}.csv"));
        io::write_dissimilarity_csv(&path, &dmat)?;
        log.artifact(&path)?;
    }
    log.write(&args.out_dir)?;
    println!("wrote {} dissimilarity matrices", items.len());
    Ok(())
}

fn cmd_embed(args: EmbedArgs, defaults: &PipelineDefaults) -> Result<()> {
    let (seqs, dropped) = ingest_sequences(&args.sequences, args.omission_policy)?;
    let items = selected_items(&seqs, &args.items);
    let k = args.k.or(defaults.k).unwrap_or(30);
    let augment = args.augment.or(defaults.augment).unwrap_or(true);
    fs::create_dir_all(&args.out_dir)?;
    let mut log = RunLog::new(
        "embed",
        format!(
            "sequences={} items={items:?} k={k} augment={augment}",
            args.sequences.display()
        ),
        None,
    );
    log.note("dropped_omissions", json!(dropped));
    for item in &items {
        let per_item: Vec<ActionSequence> = seqs
            .iter()
            .filter(|s| &s.item_id == item)
            .cloned()
            .collect();
        if per_item.is_empty() {
            return Err(Error::InvalidSequence(format!("no sequences for item {item}")));
        }
        let dmat = dissimilarity_matrix(&per_item)?;
        let (model, _trace) =
            procscore::embed_item(item, &dmat, k, augment, &MdsConfig::default())?;
        let path = args.out_dir.join(format!("embedding_{item}.json"));
        io::save_embedding(&path, &model)?;
        log.artifact(&path)?;
    }
    log.write(&args.out_dir)?;
    println!("embedded {} items at {} dimensions", items.len(), k);
    Ok(())
}

fn cmd_train_score(args: TrainScoreArgs, defaults: &PipelineDefaults) -> Result<()> {
    let params = io::load_params(&args.params)?;
    let declared: BTreeMap<String, usize> = params
        .iter()
        .map(|p| (p.item_id.clone(), p.n_categories()))
        .collect();
    let responses_all = io::read_responses_csv(&args.responses, Some(&declared))?;
    let b1 = parse_list(&args.b1);
    let b2 = parse_list(&args.b2);
    let partition = ItemPartition::new(b1.clone(), b2)?;
    let k = args.k.or(defaults.k).unwrap_or(30);
    let augment = args.augment.or(defaults.augment).unwrap_or(true);

    // embeddings: load persisted ones, or build from sequences
    let mut dropped_omissions = 0usize;
    let (embeddings, responses, dropped_persons) = match (&args.embeddings_dir, &args.sequences) {
        (Some(dir), _) => {
            let mut models = Vec::new();
            for item in &partition.b1 {
                let path = dir.join(format!("embedding_{item}.json"));
                models.push(io::load_embedding(&path)?);
            }
            // align persons to the embedding training sets
            let train_ids = &models[0].train_ids;
            for m in &models {
                if &m.train_ids != train_ids {
                    return Err(Error::InvalidConfig(
                        "embeddings were trained on different person sets".into(),
                    ));
                }
            }
            let keep: Vec<usize> = (0..responses_all.n_persons())
                .filter(|&i| train_ids.contains(&responses_all.person_ids[i]))
                .collect();
            if keep.len() != train_ids.len() {
                return Err(Error::InvalidConfig(
                    "responses do not cover the embedding training persons".into(),
                ));
            }
            let dropped = responses_all.n_persons() - keep.len();
            let mut rm = responses_all.subset_persons(&keep);
            // reorder to the embedding person order
            let order: Vec<usize> = train_ids
                .iter()
                .map(|pid| rm.person_ids.iter().position(|p| p == pid).unwrap())
                .collect();
            rm = rm.subset_persons(&order);
            (models, rm, dropped)
        }
        (None, Some(seq_path)) => {
            let (seqs, dropped) = ingest_sequences(seq_path, args.omission_policy)?;
            dropped_omissions = dropped;
            let (rm, dropped_persons) = complete_case(&responses_all, &seqs, &partition.b1);
            let mut models = Vec::new();
            for item in &partition.b1 {
                let ordered = item_sequences(&seqs, item, &rm.person_ids)?;
                let dmat = dissimilarity_matrix(&ordered)?;
                let (model, _) = procscore::embed_item(item, &dmat, k, augment, &MdsConfig::default())?;
                models.push(model);
            }
            (models, rm, dropped_persons)
        }
        (None, None) => {
            return Err(Error::InvalidConfig(
                "train-score needs --embeddings-dir or --sequences".into(),
            ))
        }
    };

    let blocks: Vec<ItemFeatures> = embeddings.iter().map(ItemFeatures::from_embedding).collect();
    let features = features_for_partition(&blocks, &partition, &responses, augment)?;
    let train_config = TrainConfig {
        ridge: RidgeConfig {
            folds: args.ridge_folds.or(defaults.ridge_folds).unwrap_or(10),
            seed: args.seed.unwrap_or(0),
            lambda_grid: None,
            lambda_count: args.lambda_count.or(defaults.lambda_count).unwrap_or(100),
            assignment: None,
        },
        ..Default::default()
    };
    let prior = PriorSpec::default();
    let (rule, diag) = train_scoring_rule(
        &responses,
        &features,
        &partition,
        &params,
        &prior,
        embeddings,
        augment,
        &train_config,
    )?;
    io::save_rule(&args.out, &rule)?;

    let out_dir = args
        .out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .to_path_buf();
    let mut log = RunLog::new(
        "train-score",
        format!(
            "responses={} b1={:?} b2={:?} k={k} augment={augment}",
            args.responses.display(),
            partition.b1,
            partition.b2
        ),
        args.seed,
    );
    log.artifact(&args.out)?;
    log.note("dropped_omissions", json!(dropped_omissions));
    log.note("dropped_persons", json!(dropped_persons));
    log.note("lambda", json!(rule.f1.lambda));
    log.note("f2_degenerate", json!(diag.f2_degenerate));
    log.write(&out_dir)?;
    println!(
        "trained scoring rule over {} persons (lambda = {})",
        responses.n_persons(),
        rule.f1.lambda
    );
    Ok(())
}

fn cmd_score(args: ScoreArgs) -> Result<()> {
    let rule = io::load_rule(&args.rule)?;
    let (new_seqs, dropped_new) = ingest_sequences(&args.sequences, args.omission_policy)?;
    let (train_seqs, _) = ingest_sequences(&args.train_sequences, OmissionPolicy::Keep)?;
    let corpus = TrainingSequences::index(&train_seqs);

    // optional observed scores for augmentation
    let declared: BTreeMap<String, usize> = rule
        .grm_params
        .iter()
        .map(|p| (p.item_id.clone(), p.n_categories()))
        .collect();
    let scores_by_person: Option<HashMap<String, HashMap<String, u32>>> = match &args.responses {
        None => None,
        Some(path) => {
            let rm = io::read_responses_csv(path, Some(&declared))?;
            let mut map = HashMap::new();
            for (i, pid) in rm.person_ids.iter().enumerate() {
                let mut per_item = HashMap::new();
                for (j, item) in rm.item_ids.iter().enumerate() {
                    if let Some(y) = rm.score(i, j) {
                        per_item.insert(item.clone(), y);
                    }
                }
                map.insert(pid.clone(), per_item);
            }
            Some(map)
        }
    };

    let mut person_ids: Vec<String> = new_seqs
        .iter()
        .filter(|s| rule.partition.b1.contains(&s.item_id))
        .map(|s| s.person_id.clone())
        .collect();
    person_ids.sort_unstable();
    person_ids.dedup();
    if person_ids.is_empty() {
        return Err(Error::InvalidSequence(
            "no sequences for the rule's scoring items".into(),
        ));
    }

    let mut out = String::from("pid,theta\n");
    let mut warned = 0usize;
    for pid in &person_ids {
        let seqs: Vec<ActionSequence> = new_seqs
            .iter()
            .filter(|s| &s.person_id == pid && rule.partition.b1.contains(&s.item_id))
            .cloned()
            .collect();
        let per_person_scores = scores_by_person.as_ref().and_then(|m| m.get(pid));
        let scored = score_new_person(
            &rule,
            &seqs,
            per_person_scores,
            &corpus,
            &ProjectConfig::default(),
        )?;
        warned += usize::from(!scored.warnings.is_empty());
        out.push_str(&format!("{pid},{}\n", scored.value));
    }
    fs::write(&args.out, out)?;

    let out_dir = args
        .out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .to_path_buf();
    let mut log = RunLog::new(
        "score",
        format!(
            "rule={} sequences={}",
            args.rule.display(),
            args.sequences.display()
        ),
        None,
    );
    log.artifact(&args.out)?;
    log.note("dropped_omissions", json!(dropped_new));
    log.note("persons_scored", json!(person_ids.len()));
    log.note("persons_with_warnings", json!(warned));
    log.write(&out_dir)?;
    println!("scored {} persons", person_ids.len());
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs, defaults: &PipelineDefaults) -> Result<()> {
    let responses_all = io::read_responses_csv(&args.responses, None)?;
    let mut config = ProtocolConfig::new(args.seed);
    config.n_partitions = args.partitions.or(defaults.partitions).unwrap_or(30);
    config.folds = args.folds.or(defaults.folds).unwrap_or(5);
    config.t_max = args.t_max.or(defaults.t_max);
    config.embed_dims = args.k.or(defaults.k).unwrap_or(30);
    config.ridge_folds = args.ridge_folds.or(defaults.ridge_folds).unwrap_or(10);
    config.lambda_count = args.lambda_count.or(defaults.lambda_count).unwrap_or(100);
    config.augment = args.augment.or(defaults.augment).unwrap_or(true);
    config.decile_analysis = args.deciles.or(defaults.deciles).unwrap_or(true);
    if let Some(m) = args.min_fold_persons.or(defaults.min_fold_persons) {
        config.min_fold_persons = m;
    }

    let mut dropped_omissions = 0usize;
    let mut dropped_persons = 0usize;
    let report = match (&args.features, &args.sequences) {
        (Some(path), _) => {
            let blocks = io::read_features_csv(path)?;
            for block in &blocks {
                if block.person_ids != responses_all.person_ids {
                    return Err(Error::InvalidConfig(
                        "feature rows must align with the response matrix persons".into(),
                    ));
                }
            }
            procscore::run_protocol(&responses_all, FeatureSource::Direct(&blocks), &config)?
        }
        (None, Some(path)) => {
            let (seqs, dropped) = ingest_sequences(path, args.omission_policy)?;
            dropped_omissions = dropped;
            let (rm, dropped_p) =
                complete_case(&responses_all, &seqs, &responses_all.item_ids.clone());
            dropped_persons = dropped_p;
            procscore::run_protocol(&rm, FeatureSource::Sequences(&seqs), &config)?
        }
        (None, None) => {
            return Err(Error::InvalidConfig(
                "evaluate needs --features or --sequences".into(),
            ))
        }
    };

    fs::create_dir_all(&args.out_dir)?;
    let report_path = args.out_dir.join("report.csv");
    let deciles_path = args.out_dir.join("deciles.csv");
    let summary_path = args.out_dir.join("summary.json");
    io::write_report_csv(&report_path, &report)?;
    io::write_deciles_csv(&deciles_path, &report)?;
    io::write_summary_json(&summary_path, &report)?;

    let mut log = RunLog::new(
        "evaluate",
        format!(
            "responses={} partitions={} folds={} t_max={:?} k={} augment={}",
            args.responses.display(),
            config.n_partitions,
            config.folds,
            config.t_max,
            config.embed_dims,
            config.augment
        ),
        Some(args.seed),
    );
    for p in [&report_path, &deciles_path, &summary_path] {
        log.artifact(p)?;
    }
    log.note("dropped_omissions", json!(dropped_omissions));
    log.note("dropped_persons", json!(dropped_persons));
    log.write(&args.out_dir)?;
    println!(
        "evaluated {} partitions x {} folds into {}",
        config.n_partitions,
        config.folds,
        args.out_dir.display()
    );
    Ok(())
}

fn median_of_u32(mut values: Vec<u32>) -> f64 {
    values.sort_unstable();
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        0.5 * (values[n / 2 - 1] as f64 + values[n / 2] as f64)
    }
}

fn cmd_describe(args: DescribeArgs) -> Result<()> {
    let (seqs, dropped) = ingest_sequences(&args.sequences, args.omission_policy)?;
    let responses = io::read_responses_csv(&args.responses, None)?;
    let mut out = String::from(
        "item_id,score_levels,median_score,action_types,min_length,max_length,median_length\n",
    );
    for (j, item) in responses.item_ids.iter().enumerate() {
        let per_item: Vec<&ActionSequence> =
            seqs.iter().filter(|s| &s.item_id == item).collect();
        if per_item.is_empty() {
            return Err(Error::InvalidSequence(format!("no sequences for item {item}")));
        }
        let mut tokens: Vec<&str> = per_item
            .iter()
            .flat_map(|s| s.actions.iter().map(|a| a.as_str()))
            .collect();
        tokens.sort_unstable();
        tokens.dedup();
        let lengths: Vec<u32> = per_item.iter().map(|s| s.actions.len() as u32).collect();
        let scores: Vec<u32> = (0..responses.n_persons())
            .filter_map(|i| responses.score(i, j))
            .collect();
        let (len_min, len_max) = (
            *lengths.iter().min().unwrap(),
            *lengths.iter().max().unwrap(),
        );
        out.push_str(&format!(
            "{item},{},{},{},{},{},{}\n",
            responses.n_levels[j],
            median_of_u32(scores),
            tokens.len(),
            len_min,
            len_max,
            median_of_u32(lengths),
        ));
    }
    fs::write(&args.out, out)?;

    let out_dir = args
        .out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .to_path_buf();
    let mut log = RunLog::new(
        "describe",
        format!(
            "sequences={} responses={}",
            args.sequences.display(),
            args.responses.display()
        ),
        None,
    );
    log.artifact(&args.out)?;
    log.note("dropped_omissions", json!(dropped));
    log.write(&out_dir)?;
    println!("described {} items", responses.n_items());
    Ok(())
}
