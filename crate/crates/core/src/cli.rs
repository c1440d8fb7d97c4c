//! Command-line front end.
//!
//! Every subcommand reads one JSON [`RunConfig`] (defaults fill missing
//! keys, unknown keys are rejected), applies flag overrides, and writes
//! its artifacts plus `reports.jsonl` into `--out-dir`. While a command
//! runs, the directory holds a `.incomplete` marker that is removed only
//! on success. Failures exit non-zero and print a JSON error object on
//! stderr.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::{self, audit, dominance, generate, mmnf, Dataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::pipeline::{
    artifact, checkpoint, evaluate, run_pipeline, weighted_f1, Classifier, Encoder, PipelineConfig,
    PipelineInputs, Provenance, StageToggles,
};
use crate::report::{JsonlSink, MemorySink, Record, ReportSink, StageReport, BUILD_ID};
use crate::searchspace::Genotype;

pub const INCOMPLETE_MARKER: &str = ".incomplete";
pub const REPORTS: &str = "reports.jsonl";
pub const DATA_FILE: &str = "data.mmnf";
pub const SWEEP_CSV: &str = "sweep.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditConfig {
    /// Regenerated datasets used for the dominance test.
    pub trials: usize,
    /// Samples per regenerated dataset.
    pub num_samples: usize,
    /// Required fraction of trials where planted pairs dominate.
    pub min_fraction: f64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            trials: 100,
            num_samples: 1000,
            min_fraction: 0.99,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub r_grid: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            r_grid: vec![0.01, 0.05, 0.1, 0.2, 0.5, 1.0],
            seeds: vec![0, 1, 2],
        }
    }
}

/// Everything a run can be configured with.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Synthetic data used when no feature file is given.
    pub data: SyntheticSpec,
    /// Feature file to load instead of generating data.
    pub data_path: Option<PathBuf>,
    pub audit: AuditConfig,
    pub sweep: SweepConfig,
    pub pipeline: PipelineConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Parser)]
#[command(name = "mmnas", version = BUILD_ID, about = "Self-supervised architecture search for multimodal fusion networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic feature file.
    GenData(Common),
    /// Measure cross-modal layer correlations and the planted-pair dominance rate.
    AuditData(Common),
    /// Architecture search only; writes the genotype.
    Search(Common),
    /// Contrastive pretraining of a given genotype.
    Pretrain(Common),
    /// Classifier fitting on given genotype and encoder weights, then evaluation.
    Fit(Common),
    /// Weighted F1 of a prediction file, or of a fitted model on the test split.
    Eval(Common),
    /// All stages end to end.
    RunAll(Common),
    /// Full runs over a grid of labeled ratios and seeds.
    SweepR(Common),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed of the run (of the generator for gen-data and audit-data).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Genotype JSON replacing the search stage.
    #[arg(long)]
    pub genotype: Option<PathBuf>,
    /// MMNW checkpoint replacing earlier stages.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Feature file; otherwise data is generated from the config.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated labeled ratios for sweep-r.
    #[arg(long, value_delimiter = ',')]
    pub r_grid: Option<Vec<f64>>,
    /// Comma-separated seeds for sweep-r.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub labeled_ratio: Option<f64>,
    /// Freeze (true) or fine-tune (false) the encoder while fitting.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub freeze_encoder: Option<bool>,
    /// JSON file `{"predictions": [[0,1],…], "truth": [[0,1],…]}` for eval.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Disable the thread pool.
    #[arg(long)]
    pub sequential: bool,
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::GenData(c)
            | Command::AuditData(c)
            | Command::Search(c)
            | Command::Pretrain(c)
            | Command::Fit(c)
            | Command::Eval(c)
            | Command::RunAll(c)
            | Command::SweepR(c) => c,
        }
    }
}

/// Effective configuration after flag overrides.
pub fn effective_config(command: &Command) -> Result<RunConfig> {
    let c = command.common();
    let mut cfg = match &c.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = c.seed {
        match command {
            Command::GenData(_) | Command::AuditData(_) => cfg.data.seed = seed,
            _ => cfg.pipeline.seed = seed,
        }
    }
    if let Some(path) = &c.data {
        cfg.data_path = Some(path.clone());
    }
    if let Some(grid) = &c.r_grid {
        cfg.sweep.r_grid = grid.clone();
    }
    if let Some(seeds) = &c.seeds {
        cfg.sweep.seeds = seeds.clone();
    }
    if let Some(r) = c.labeled_ratio {
        cfg.pipeline.labeled_ratio = r;
    }
    if let Some(freeze) = c.freeze_encoder {
        cfg.pipeline.classifier.freeze_encoder = freeze;
    }
    if c.sequential {
        cfg.pipeline.exec = Exec::Sequential;
    }
    cfg.pipeline.stages = match command {
        Command::Search(_) => StageToggles { search: true, pretrain: false, fit: false },
        Command::Pretrain(_) => StageToggles { search: false, pretrain: true, fit: false },
        Command::Fit(_) => StageToggles { search: false, pretrain: false, fit: true },
        Command::RunAll(_) | Command::SweepR(_) => StageToggles::default(),
        _ => cfg.pipeline.stages,
    };
    Ok(cfg)
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    match &cfg.data_path {
        Some(path) => mmnf::read(path),
        None => generate(&cfg.data),
    }
}

fn load_genotype(path: &Option<PathBuf>) -> Result<Option<Genotype>> {
    path.as_ref()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Genotype::from_json(&text)
        })
        .transpose()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".spec.json");
    PathBuf::from(name)
}

/// Outcome of one sweep cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub r: f64,
    pub seed: u64,
    pub weighted_f1: Option<f64>,
    pub status: String,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("r,seed,weighted_f1,status\n");
    for row in rows {
        let f1 = row.weighted_f1.map(|v| format!("{v}")).unwrap_or_default();
        out.push_str(&format!("{},{},{},{}\n", row.r, row.seed, f1, row.status.replace([',', '\n'], ";")));
    }
    out
}

fn execute(command: &Command, cfg: &RunConfig, out_dir: &Path, sink: &mut JsonlSink) -> Result<()> {
    let c = command.common();
    let provenance = Provenance::of(cfg)?;
    match command {
        Command::GenData(_) => {
            let dataset = generate(&cfg.data)?;
            let path = out_dir.join(DATA_FILE);
            mmnf::write(&path, &dataset)?;
            write_json(&sidecar_path(&path), &cfg.data)?;
            println!("{}", path.display());
        }
        Command::AuditData(_) => {
            let dataset = load_dataset(cfg)?;
            let report = audit(&dataset, cfg.data.latent_dim)?;
            let (planted_min, rest_max) = report.planted_vs_rest(&cfg.data.planted);
            let spec = SyntheticSpec {
                num_samples: cfg.audit.num_samples,
                ..cfg.data.clone()
            };
            let dom = dominance(&spec, cfg.audit.trials, cfg.data.seed, cfg.pipeline.exec)?;
            let passed = dom.fraction >= cfg.audit.min_fraction;
            let summary = serde_json::json!({
                "pairs": report.pairs,
                "planted_min": planted_min,
                "non_planted_max": rest_max,
                "ratio": planted_min / rest_max.max(1e-300),
                "dominance": dom,
                "passed": passed,
            });
            write_json(&out_dir.join("audit.json"), &summary)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            if !passed {
                return Err(Error::Config(format!(
                    "planted pairs dominated in {:.3} of trials, below {}",
                    dom.fraction, cfg.audit.min_fraction
                )));
            }
        }
        Command::Eval(_) => {
            let mut metrics = std::collections::BTreeMap::new();
            if let Some(path) = &c.predictions {
                #[derive(Deserialize)]
                #[serde(deny_unknown_fields)]
                struct PredictionFile {
                    predictions: Vec<Vec<u8>>,
                    truth: Vec<Vec<u8>>,
                }
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let file: PredictionFile = serde_json::from_str(&text)?;
                metrics.insert("weighted_f1".to_string(), weighted_f1(&file.predictions, &file.truth)?);
                metrics.insert("samples".to_string(), file.truth.len() as f64);
            } else {
                let genotype = load_genotype(&c.genotype)?
                    .ok_or_else(|| Error::MissingInput("eval needs --predictions or --genotype and --weights".into()))?;
                let weights_path = c
                    .weights
                    .as_ref()
                    .ok_or_else(|| Error::MissingInput("eval needs --weights with a classifier checkpoint".into()))?;
                let store = checkpoint::read(weights_path)?;
                let p = &cfg.pipeline;
                let encoder = Encoder::from_weights(&genotype, &p.space, &store)?;
                let classifier = Classifier::from_store(&store, p.classifier.loss, p.classifier.threshold)?;
                let splits = data::split(&load_dataset(cfg)?, p.labeled_ratio, p.seed, &p.split)?;
                let (predictions, f1) = evaluate(&encoder, &classifier, &splits.test, p.exec)?;
                let truth = splits.test.labels().expect("labeled").rows();
                write_json(
                    &out_dir.join(artifact::PREDICTIONS),
                    &serde_json::json!({ "predictions": predictions, "truth": truth }),
                )?;
                metrics.insert("weighted_f1".to_string(), f1);
                metrics.insert("samples".to_string(), splits.test.len() as f64);
            }
            let report = StageReport {
                stage: "eval".into(),
                metrics,
                genotype_hash: None,
                seed: cfg.pipeline.seed,
                duration_ms: 0,
                config_hash: provenance.config_hash.clone(),
                build_id: BUILD_ID.into(),
                config: provenance.config.clone(),
            };
            sink.stage(&report)?;
            println!("{}", serde_json::to_string(&report.metrics)?);
        }
        Command::Search(_) | Command::Pretrain(_) | Command::Fit(_) | Command::RunAll(_) => {
            let dataset = load_dataset(cfg)?;
            let inputs = PipelineInputs {
                genotype: load_genotype(&c.genotype)?,
                weights: c.weights.as_ref().map(|p| checkpoint::read(p)).transpose()?,
            };
            let outcome = run_pipeline(&cfg.pipeline, &dataset, inputs, Some(out_dir), &provenance, sink)?;
            for r in &outcome.reports {
                println!("{}", serde_json::to_string(&serde_json::json!({ "stage": r.stage, "metrics": r.metrics, "genotype_hash": r.genotype_hash }))?);
            }
        }
        Command::SweepR(_) => {
            let dataset = load_dataset(cfg)?;
            let cells: Vec<(f64, u64)> = cfg
                .sweep
                .r_grid
                .iter()
                .flat_map(|&r| cfg.sweep.seeds.iter().map(move |&s| (r, s)))
                .collect();
            if cells.is_empty() {
                return Err(Error::Config("sweep grid is empty".into()));
            }
            let results = cfg.pipeline.exec.map(&cells, |&(r, seed)| {
                let mut cell = cfg.pipeline.clone();
                cell.labeled_ratio = r;
                cell.seed = seed;
                cell.exec = Exec::Sequential;
                let mut memory = MemorySink::default();
                let result = run_pipeline(&cell, &dataset, PipelineInputs::default(), None, &provenance, &mut memory);
                (r, seed, result.map(|o| o.weighted_f1), memory)
            });
            let mut rows = Vec::new();
            for (r, seed, result, memory) in results {
                for record in &memory.records {
                    sink.emit(record)?;
                }
                for report in &memory.stages {
                    sink.stage(report)?;
                }
                rows.push(match result {
                    Ok(f1) => SweepRow { r, seed, weighted_f1: f1, status: "ok".into() },
                    Err(e) => SweepRow { r, seed, weighted_f1: None, status: format!("{}: {e}", e.kind()) },
                });
            }
            fs::write(out_dir.join(SWEEP_CSV), sweep_csv(&rows)).map_err(|e| Error::io(out_dir.join(SWEEP_CSV), e))?;
            print!("{}", sweep_csv(&rows));
            let failed = rows.iter().filter(|r| r.status != "ok").count();
            if failed > 0 {
                return Err(Error::TooSmall(format!("{failed} of {} sweep cells failed; see {SWEEP_CSV}", rows.len())));
            }
        }
    }
    Ok(())
}

/// Runs one parsed command. Returns the process exit code.
pub fn run_command(command: &Command) -> i32 {
    let out_dir = command.common().out_dir.clone();
    let result = (|| -> Result<()> {
        fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
        let marker = out_dir.join(INCOMPLETE_MARKER);
        fs::write(&marker, b"").map_err(|e| Error::io(&marker, e))?;
        let cfg = effective_config(command)?;
        cfg.pipeline.validate()?;
        write_json(&out_dir.join("config.json"), &cfg)?;
        let mut sink = JsonlSink::append(&out_dir.join(REPORTS))?;
        execute(command, &cfg, &out_dir, &mut sink)?;
        fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))
    })();
    match result {
        Ok(()) => 0,
        Err(e) => {
            let body = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{body}");
            1
        }
    }
}

/// Parses `args` and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run_command(&cli.command),
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            code
        }
    }
}

/// Reads every record of a report file.
pub fn read_reports(out_dir: &Path) -> Result<Vec<Record>> {
    crate::report::read_records(&out_dir.join(REPORTS))
}
