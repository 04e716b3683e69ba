//! The `vulnloc` command line: corpus generation, training, evaluation and
//! contrastive ablations.
//!
//! Every flag can also be given in a flat `key=value` file passed with
//! `--config`; flags on the command line override the file. Each command
//! writes its fully resolved configuration to `<home_dir>/<command>.config`
//! in the same format, so a run can be repeated with `--config` alone.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Parser, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};
use vulnloc::corpus::{
    encode_corpus, generate_synthetic, read_jsonl, split_corpus, write_jsonl, FunctionRecord, SplitRatios,
    SyntheticConfig, Vocabulary,
};
use vulnloc::encoder::EncoderVariant;
use vulnloc::evaluator::{self, MetricScope, MetricsReport, MetricsRow};
use vulnloc::trainer::{self, MethodVariant, ModelState, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

pub const MANIFEST_FORMAT: &str = "vulnloc-manifest";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Write a synthetic pattern-planted corpus and its manifest.
    Generate,
    /// Split, build the vocabulary, train, and save the best checkpoint.
    Train,
    /// Score a checkpoint on the test split and write metrics and a report.
    Eval,
    /// Train and evaluate the three contrastive variants side by side.
    Ablate,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.to_possible_value().expect("no skipped variants").get_name())
    }
}

#[derive(Debug, Clone, PartialEq, Parser)]
#[command(name = "vulnloc", version, about = "Statement-level vulnerability localization", args_override_self = true)]
pub struct Cli {
    pub command: Command,
    #[command(flatten)]
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, clap::Args)]
#[command(rename_all = "snake_case")]
pub struct RunConfig {
    /// Flat key=value file with defaults for any flag below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// JSONL corpus (generate writes it, the other commands read it).
    #[arg(long)]
    pub data_path: Option<PathBuf>,
    /// Output directory for every artifact.
    #[arg(long, default_value = "vulnloc_out")]
    pub home_dir: PathBuf,
    /// Dataset name for metrics rows; defaults to the corpus file stem.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Checkpoint to evaluate; defaults to <home_dir>/model.ckpt.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Evaluate on this whole file instead of the test split.
    #[arg(long)]
    pub eval_path: Option<PathBuf>,

    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 100)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 10)]
    pub train_epochs: usize,
    /// Relaxed-gate temperature.
    #[arg(long, default_value_t = 0.5)]
    pub temp: f64,
    /// Contrastive temperature.
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    /// Weight of the contrastive term.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Weight of the semi-supervised term.
    #[arg(long, default_value_t = 1e-2)]
    pub eta: f64,
    /// k-means clusters per mini-batch.
    #[arg(long, default_value_t = 3)]
    pub clusters: usize,
    /// Statements selected per function.
    #[arg(long, default_value_t = 10)]
    pub topk: usize,
    /// Share of vulnerable training functions whose statement labels are used.
    #[arg(long, default_value_t = 0.0)]
    pub semi_fraction: f64,
    #[arg(long, default_value_t = 5.0)]
    pub grad_clip: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Seeds for ablate (comma separated); defaults to --seed.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Statements per function (L).
    #[arg(long, default_value_t = 100)]
    pub max_statements: usize,
    /// Tokens per statement (T).
    #[arg(long, default_value_t = 50)]
    pub max_tokens: usize,
    /// Statement vector size (d).
    #[arg(long, default_value_t = 150)]
    pub embed_dim: usize,
    /// Hidden width of the selector and classifier networks.
    #[arg(long, default_value_t = 100)]
    pub dim_dnn: usize,
    #[arg(long, default_value_t = 3)]
    pub kernel: usize,
    #[arg(long, default_value_t = EncoderVariant::ConvMaxPool)]
    pub encoder: EncoderVariant,
    #[arg(long, default_value_t = MethodVariant::Cscl)]
    pub method_variant: MethodVariant,
    /// Coverage metrics over vulnerable functions only, or all functions.
    #[arg(long, default_value_t = MetricScope::Vulnerable)]
    pub metric_scope: MetricScope,
    /// Cut-offs for evaluation (comma separated); defaults to --topk and 5.
    #[arg(long, value_delimiter = ',')]
    pub eval_ks: Vec<usize>,
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_value_t = true, default_missing_value = "true")]
    pub do_train: bool,
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_value_t = false, default_missing_value = "true")]
    pub do_eval: bool,
    /// Train, valid and test shares (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "0.8,0.1,0.1")]
    pub split: Vec<f64>,
    /// Tokens seen fewer times in the training split map to <UNK>.
    #[arg(long, default_value_t = 1)]
    pub min_count: usize,

    #[arg(long, default_value_t = 500)]
    pub n_functions: usize,
    #[arg(long, default_value_t = 10)]
    pub gen_min_statements: usize,
    #[arg(long, default_value_t = 30)]
    pub gen_max_statements: usize,
    #[arg(long, default_value_t = 3)]
    pub n_patterns: usize,
    #[arg(long, default_value_t = 3)]
    pub pattern_len: usize,
    #[arg(long, default_value_t = 0.5)]
    pub vuln_ratio: f64,
    /// Identifier names available to the generator.
    #[arg(long, default_value_t = 40)]
    pub n_identifiers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Cli::try_parse_from(["vulnloc", "train"]).expect("defaults parse").config
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(vulnloc::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Core(vulnloc::Error::Config(_)) => EXIT_USAGE,
            CliError::Core(vulnloc::Error::Numeric(_)) => EXIT_NUMERIC,
            CliError::Core(_) => EXIT_DATA,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Core(e) => e.fmt(f),
        }
    }
}

impl std::error::Error for CliError {}

impl From<vulnloc::Error> for CliError {
    fn from(e: vulnloc::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Turns `key=value` lines into `--key=value` arguments. Blank lines and lines
/// starting with `#` are skipped.
pub fn config_file_args(text: &str) -> CliResult<Vec<OsString>> {
    text.lines()
        .enumerate()
        .map(|(n, line)| (n, line.trim()))
        .filter(|(_, line)| !line.is_empty() && !line.starts_with('#'))
        .map(|(n, line)| {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value, got {line:?}", n + 1)))?;
            let key = key.trim().trim_start_matches("--");
            if key == "config" {
                return Err(CliError::Usage(format!("config line {}: config files cannot nest", n + 1)));
            }
            Ok(format!("--{key}={}", value.trim()).into())
        })
        .collect()
}

fn find_config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut found = None;
    let mut iter = args.iter().skip(1);
    while let Some(a) = iter.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            found = iter.next().map(PathBuf::from);
        } else if let Some(p) = s.strip_prefix("--config=") {
            found = Some(PathBuf::from(p));
        }
    }
    found
}

/// Parses a full argument vector (program name first), expanding `--config`.
pub fn parse_args(args: Vec<OsString>) -> Result<Cli, clap::Error> {
    let mut full = args;
    if let Some(path) = find_config_path(&full) {
        let text = fs::read_to_string(&path).map_err(|e| {
            clap::Error::raw(clap::error::ErrorKind::Io, format!("cannot read config {}: {e}\n", path.display()))
        })?;
        let extra = config_file_args(&text)
            .map_err(|e| clap::Error::raw(clap::error::ErrorKind::InvalidValue, format!("{e}\n")))?;
        full.splice(1..1, extra);
    }
    Cli::try_parse_from(full)
}

impl RunConfig {
    pub fn seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![self.seed]
        } else {
            self.seeds.clone()
        }
    }

    pub fn eval_ks(&self) -> Vec<usize> {
        let mut ks = if self.eval_ks.is_empty() { vec![self.topk, 5] } else { self.eval_ks.clone() };
        let mut seen = Vec::new();
        ks.retain(|k| !seen.contains(k) && {
            seen.push(*k);
            true
        });
        ks
    }

    pub fn split_ratios(&self) -> CliResult<SplitRatios> {
        match self.split[..] {
            [a, b, c] => Ok(SplitRatios::new(a, b, c)?),
            _ => Err(CliError::Usage(format!("--split needs three shares, got {}", self.split.len()))),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            batch_size: self.batch_size,
            epochs: self.train_epochs,
            gate_temperature: self.temp,
            contrastive_temperature: self.tau,
            alpha: self.alpha,
            clusters: self.clusters,
            top_k: self.topk,
            eta: self.eta,
            semi_fraction: self.semi_fraction,
            grad_clip_norm: self.grad_clip,
            seed: self.seed,
            max_statements: self.max_statements,
            max_tokens: self.max_tokens,
            embed_dim: self.embed_dim,
            hidden_width: self.dim_dnn,
            kernel: self.kernel,
            encoder_variant: self.encoder,
            method_variant: self.method_variant,
        }
    }

    pub fn synthetic_config(&self) -> SyntheticConfig {
        SyntheticConfig {
            n_functions: self.n_functions,
            min_statements: self.gen_min_statements,
            max_statements: self.gen_max_statements,
            n_patterns: self.n_patterns,
            pattern_len: self.pattern_len,
            vuln_ratio: self.vuln_ratio,
            vocab_size: self.n_identifiers,
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.home_dir.join(name)
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.path("model.ckpt"))
    }

    /// `key=value` lines for every setting, readable back through `--config`.
    pub fn to_config_text(&self) -> String {
        fn list<T: ToString>(v: &[T]) -> String {
            v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
        }
        let mut pairs: Vec<(&str, String)> = Vec::new();
        if let Some(p) = &self.data_path {
            pairs.push(("data_path", p.display().to_string()));
        }
        pairs.push(("home_dir", self.home_dir.display().to_string()));
        if let Some(d) = &self.dataset {
            pairs.push(("dataset", d.clone()));
        }
        if let Some(p) = &self.checkpoint {
            pairs.push(("checkpoint", p.display().to_string()));
        }
        if let Some(p) = &self.eval_path {
            pairs.push(("eval_path", p.display().to_string()));
        }
        pairs.extend([
            ("lr", self.lr.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("train_epochs", self.train_epochs.to_string()),
            ("temp", self.temp.to_string()),
            ("tau", self.tau.to_string()),
            ("alpha", self.alpha.to_string()),
            ("eta", self.eta.to_string()),
            ("clusters", self.clusters.to_string()),
            ("topk", self.topk.to_string()),
            ("semi_fraction", self.semi_fraction.to_string()),
            ("grad_clip", self.grad_clip.to_string()),
            ("seed", self.seed.to_string()),
            ("seeds", list(&self.seeds())),
            ("max_statements", self.max_statements.to_string()),
            ("max_tokens", self.max_tokens.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("dim_dnn", self.dim_dnn.to_string()),
            ("kernel", self.kernel.to_string()),
            ("encoder", self.encoder.to_string()),
            ("method_variant", self.method_variant.to_string()),
            ("metric_scope", self.metric_scope.to_string()),
            ("eval_ks", list(&self.eval_ks())),
            ("do_train", self.do_train.to_string()),
            ("do_eval", self.do_eval.to_string()),
            ("split", list(&self.split)),
            ("min_count", self.min_count.to_string()),
            ("n_functions", self.n_functions.to_string()),
            ("gen_min_statements", self.gen_min_statements.to_string()),
            ("gen_max_statements", self.gen_max_statements.to_string()),
            ("n_patterns", self.n_patterns.to_string()),
            ("pattern_len", self.pattern_len.to_string()),
            ("vuln_ratio", self.vuln_ratio.to_string()),
            ("n_identifiers", self.n_identifiers.to_string()),
        ]);
        pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    fn persist(&self, command: Command) -> CliResult<()> {
        fs::create_dir_all(&self.home_dir)?;
        fs::write(self.path(&format!("{command}.config")), self.to_config_text())?;
        Ok(())
    }
}

/// Generator settings stored next to a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub data_path: PathBuf,
    pub seed: u64,
    pub n_records: usize,
    pub n_vulnerable: usize,
    pub generator: SyntheticConfig,
}

impl Manifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        let m: Manifest = serde_json::from_str(&fs::read_to_string(path)?)?;
        if m.format != MANIFEST_FORMAT {
            return Err(vulnloc::Error::Data(format!("{} is not a corpus manifest", path.display())).into());
        }
        Ok(m)
    }
}

pub fn cmd_generate(cfg: &RunConfig) -> CliResult<Manifest> {
    let gen = cfg.synthetic_config();
    let records = generate_synthetic(&gen, cfg.seed)?;
    let data_path = cfg.data_path.clone().unwrap_or_else(|| cfg.path("corpus.jsonl"));
    if let Some(dir) = data_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_jsonl(&data_path, &records)?;
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        data_path: data_path.clone(),
        seed: cfg.seed,
        n_records: records.len(),
        n_vulnerable: records.iter().filter(|r| r.is_vulnerable()).count(),
        generator: gen,
    };
    cfg.persist(Command::Generate)?;
    fs::write(cfg.path("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    info!("wrote {} functions to {}", records.len(), data_path.display());
    Ok(manifest)
}

fn resolve_data(cfg: &RunConfig) -> CliResult<(PathBuf, Vec<FunctionRecord>)> {
    let path = match &cfg.data_path {
        Some(p) => p.clone(),
        None => {
            let manifest_path = cfg.path("manifest.json");
            if !manifest_path.exists() {
                return Err(CliError::Usage(format!(
                    "no --data_path given and no manifest at {}",
                    manifest_path.display()
                )));
            }
            Manifest::load(&manifest_path)?.data_path
        }
    };
    if !path.exists() {
        return Err(vulnloc::Error::Data(format!("data file {} not found", path.display())).into());
    }
    let records = read_jsonl(&path)?;
    Ok((path, records))
}

fn dataset_name(cfg: &RunConfig, data: &Path) -> String {
    cfg.dataset
        .clone()
        .unwrap_or_else(|| data.file_stem().map_or("data".into(), |s| s.to_string_lossy().into_owned()))
}

/// Artifacts of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub state: ModelState,
    pub history: Vec<trainer::EpochRecord>,
    pub best_epoch: Option<usize>,
    pub metrics: Vec<MetricsRow>,
}

pub fn cmd_train(cfg: &RunConfig) -> CliResult<TrainOutput> {
    let (data, records) = resolve_data(cfg)?;
    cfg.persist(Command::Train)?;
    let (train, valid, _) = split_corpus(&records, cfg.split_ratios()?, cfg.seed)?;
    let tc = cfg.train_config();
    tc.validate()?;

    let (state, history, best_epoch) = if cfg.do_train {
        let vocab = Vocabulary::build(&train, cfg.min_count)?;
        vocab.save(cfg.path("vocab.txt"))?;
        let encode = |r: &[FunctionRecord]| encode_corpus(r, &vocab, tc.max_statements, tc.max_tokens);
        let (train_enc, valid_enc) = (encode(&train)?, encode(&valid)?);
        info!(
            "training on {} functions ({} valid) from {}, {} tokens in vocabulary",
            train.len(),
            valid.len(),
            data.display(),
            vocab.len()
        );
        let out = trainer::fit_with(&train_enc, &valid_enc, vocab.clone(), tc, |r| {
            info!(
                "epoch {} loss {:.5} (ce {:.5}, contrastive {:.5}) valid VCP {}",
                r.epoch,
                r.train_loss,
                r.ce_term,
                r.cscl_term,
                r.valid_vcp.map_or("NA".into(), |v| format!("{v:.4}"))
            );
        })?;
        trainer::save_checkpoint(&out.best, cfg.checkpoint_path())?;
        trainer::write_history_csv(cfg.path("history.csv"), &out.history)?;
        (out.best, out.history, out.best_epoch)
    } else {
        (trainer::load_checkpoint(cfg.checkpoint_path())?, Vec::new(), None)
    };

    let metrics = if cfg.do_eval { evaluate(cfg, &state, &data, &records)? } else { Vec::new() };
    Ok(TrainOutput { state, history, best_epoch, metrics })
}

pub fn cmd_eval(cfg: &RunConfig) -> CliResult<Vec<MetricsRow>> {
    let (data, records) = resolve_data(cfg)?;
    cfg.persist(Command::Eval)?;
    let state = trainer::load_checkpoint(cfg.checkpoint_path())?;
    evaluate(cfg, &state, &data, &records)
}

fn evaluate(cfg: &RunConfig, state: &ModelState, data: &Path, records: &[FunctionRecord]) -> CliResult<Vec<MetricsRow>> {
    let (test, split) = match &cfg.eval_path {
        Some(p) => (read_jsonl(p)?, "all"),
        None => (split_corpus(records, cfg.split_ratios()?, cfg.seed)?.2, "test"),
    };
    let sc = &state.config;
    let encoded = encode_corpus(&test, &state.vocab, sc.max_statements, sc.max_tokens)?;
    let preds = evaluator::predict_corpus(state, &encoded)?;
    let dataset = dataset_name(cfg, cfg.eval_path.as_deref().unwrap_or(data));
    let rows: Vec<MetricsRow> = cfg
        .eval_ks()
        .into_iter()
        .map(|k| MetricsRow {
            dataset: dataset.clone(),
            split: split.into(),
            method_variant: sc.method_variant,
            seed: sc.seed,
            report: MetricsReport::compute(&preds, k, cfg.metric_scope),
        })
        .collect();
    evaluator::write_metrics_csv(cfg.path("metrics.csv"), &rows)?;
    evaluator::emit_report(&preds, &test, cfg.topk, cfg.path("report.txt"))?;
    for r in &rows {
        info!("{}", summary(&r.report));
    }
    let misses = MetricsReport::ifa_misses(&preds, cfg.metric_scope);
    if !misses.is_empty() {
        info!("{} functions rank no ground-truth statement: {}", misses.len(), misses.join(" "));
    }
    Ok(rows)
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map_or("NA".into(), |x| format!("{x:.4}"))
}

fn summary(r: &MetricsReport) -> String {
    format!(
        "K={} VCP {} VCA {} Top-K ACC {} IFA {} VCE {} ACC {} ({} functions, {} in scope)",
        r.k,
        fmt_metric(r.vcp),
        fmt_metric(r.vca),
        fmt_metric(r.topk_acc),
        fmt_metric(r.ifa),
        fmt_metric(r.vce),
        fmt_metric(r.function_acc),
        r.n_functions,
        r.n_in_scope
    )
}

/// Trains every variant for every seed into `<home_dir>/ablate/<variant>-seed<seed>`
/// and writes all metrics rows to `<home_dir>/ablation.csv`.
pub fn cmd_ablate(cfg: &RunConfig) -> CliResult<Vec<MetricsRow>> {
    let data = resolve_data(cfg)?.0;
    cfg.persist(Command::Ablate)?;
    let mut rows = Vec::new();
    for seed in cfg.seeds() {
        for variant in MethodVariant::ALL {
            let run = RunConfig {
                seed,
                seeds: vec![seed],
                method_variant: variant,
                home_dir: cfg.home_dir.join("ablate").join(format!("{variant}-seed{seed}")),
                checkpoint: None,
                data_path: Some(data.clone()),
                do_train: true,
                do_eval: true,
                ..cfg.clone()
            };
            info!("ablation run: {variant}, seed {seed}");
            rows.extend(cmd_train(&run)?.metrics);
        }
    }
    evaluator::write_metrics_csv(cfg.path("ablation.csv"), &rows)?;
    print!("{}", ablation_table(&rows));
    Ok(rows)
}

/// VCP per variant, one line per (seed, K).
pub fn ablation_table(rows: &[MetricsRow]) -> String {
    let mut out = String::from("seed\tK\tnone\tcl\tcscl\n");
    let mut keys: Vec<(u64, usize)> = rows.iter().map(|r| (r.seed, r.report.k)).collect();
    keys.sort_unstable();
    keys.dedup();
    for (seed, k) in keys {
        let cell = |v: MethodVariant| {
            rows.iter()
                .find(|r| r.seed == seed && r.report.k == k && r.method_variant == v)
                .map_or("-".into(), |r| fmt_metric(r.report.vcp))
        };
        out.push_str(&format!(
            "{seed}\t{k}\t{}\t{}\t{}\n",
            cell(MethodVariant::None),
            cell(MethodVariant::Cl),
            cell(MethodVariant::Cscl)
        ));
    }
    out
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate => cmd_generate(&cli.config).map(drop),
        Command::Train => cmd_train(&cli.config).map(drop),
        Command::Eval => cmd_eval(&cli.config).map(drop),
        Command::Ablate => cmd_ablate(&cli.config).map(drop),
    }
}

/// Parses `args`, runs the command, and returns the process exit code.
/// Errors are reported as one line on stderr.
pub fn run(args: Vec<OsString>) -> i32 {
    let cli = match parse_args(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            let text = e.to_string();
            eprintln!("{}", text.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments"));
            return EXIT_USAGE;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
