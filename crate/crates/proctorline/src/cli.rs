//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 data or validation error, 2 usage error. Errors
//! go to standard error as one JSON object per line. Every run first prints
//! its effective configuration and seed there too.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use proctorline_core::audio::{CvParams, TrainParams};
use proctorline_core::objectgate::evaluate_frames;
use proctorline_core::pipeline::{VoiceClassifier, VoiceDetector};
use proctorline_core::simulator::{evaluate_reports, generate_session, ScenarioSpec};
use proctorline_core::{resample_frames, run_session, EngineConfig};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::canonical::{to_canonical_json, to_canonical_line};
use crate::config::{CliConfigFile, ConfigError};
use crate::{corpus, evalset, evidence, modelfile, parallel, sessionlog};

#[derive(Debug, Parser)]
#[command(name = "proctorline", version, about = "Replay proctoring sensor logs into cheating reports")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analyze one session log and write its report.
    Analyze {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Voice model; required when the log contains audio windows.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Write blurred evidence clips here.
        #[arg(long)]
        evidence_dir: Option<PathBuf>,
    },
    /// Render a scenario into a session log with ground truth.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also analyze the session and score it against the ground truth.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Train the voice classifier on a corpus.
    TrainVoice {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_model: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Repeated k-fold cross-validation of the voice classifier.
    CvVoice {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-class detection accuracy at the configured IoU thresholds.
    EvalObjects {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic voiced/unvoiced corpus with its manifest.
    SynthCorpus {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 400)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Input { path: String, message: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {message}")]
    Output { path: String, message: String },
    #[error("{0}")]
    Run(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Input { .. } => "input",
            CliError::Config(_) => "config",
            CliError::Output { .. } => "output",
            CliError::Run(_) => "run",
        }
    }

    fn path(&self) -> Option<&str> {
        match self {
            CliError::Input { path, .. } | CliError::Output { path, .. } => Some(path),
            CliError::Config(ConfigError::Io { path, .. } | ConfigError::Parse { path, .. }) => Some(path),
            _ => None,
        }
    }
}

fn input(path: &Path, e: impl ToString) -> CliError {
    CliError::Input { path: path.display().to_string(), message: e.to_string() }
}

fn output(path: &Path, e: impl ToString) -> CliError {
    CliError::Output { path: path.display().to_string(), message: e.to_string() }
}

fn run_err(e: impl ToString) -> CliError {
    CliError::Run(e.to_string())
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| output(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_file(path, to_canonical_json(value).map_err(run_err)?.as_bytes())
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<(), CliError> {
    match out {
        Some(p) => write_json(p, value),
        None => {
            let s = to_canonical_json(value).map_err(run_err)?;
            std::io::stdout().write_all(s.as_bytes()).map_err(run_err)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<CliConfigFile, CliError> {
    Ok(match path {
        Some(p) => CliConfigFile::load(p)?,
        None => CliConfigFile::default(),
    })
}

fn announce(command: &str, seed: Option<u64>, config: &impl Serialize) {
    let record = json!({ "command": command, "seed": seed, "effective_config": config });
    if let Ok(line) = to_canonical_line(&record) {
        eprintln!("{line}");
    }
}

fn load_model(path: &Path) -> Result<VoiceDetector, CliError> {
    modelfile::read_model(path).map_err(|e| input(path, e))
}

fn base_dir(file: &Path) -> PathBuf {
    file.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            let mut record = json!({ "error": e.kind(), "message": e.to_string() });
            if let Some(p) = e.path() {
                record["path"] = json!(p);
            }
            eprintln!("{}", to_canonical_line(&record).unwrap_or_else(|_| e.to_string()));
            1
        }
    }
}

fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Analyze { log, config, out, model, evidence_dir } => {
            analyze(&log, config.as_deref(), &out, model.as_deref(), evidence_dir.as_deref())
        }
        Command::Simulate { spec, seed, out_dir, config, model } => {
            simulate(&spec, seed, &out_dir, config.as_deref(), model.as_deref())
        }
        Command::TrainVoice { corpus, manifest, out_model, seed, config } => {
            let file = load_config(config.as_deref())?;
            let hp = TrainParams { seed, ..file.train(&TrainParams::default())? };
            let fe = file.front_end()?;
            announce("train-voice", Some(seed), &json!({ "train": hp, "front_end": fe }));
            let items = corpus::read_corpus(&corpus, &manifest).map_err(|e| input(&manifest, e))?;
            let data = corpus::featurize(&items, &fe).map_err(|e| input(&manifest, e))?;
            let (model, summary) = parallel::train_with_holdout(&data, &hp).map_err(run_err)?;
            modelfile::write_model(&out_model, &VoiceDetector { front_end: fe, model })
                .map_err(|e| output(&out_model, e))?;
            emit_json(None, &summary)
        }
        Command::CvVoice { corpus, manifest, k, repeats, seed, config, out } => {
            let file = load_config(config.as_deref())?;
            let mut params = file.cv(&CvParams::default())?;
            params.seed = seed;
            params.k = k.unwrap_or(params.k);
            params.repeats = repeats.unwrap_or(params.repeats);
            let fe = file.front_end()?;
            announce("cv-voice", Some(seed), &json!({ "cv": params, "front_end": fe }));
            let items = corpus::read_corpus(&corpus, &manifest).map_err(|e| input(&manifest, e))?;
            let data = corpus::featurize(&items, &fe).map_err(|e| input(&manifest, e))?;
            let report = parallel::cross_validate_parallel(&data, &params).map_err(run_err)?;
            emit_json(out.as_deref(), &report)
        }
        Command::EvalObjects { dataset, config, out } => {
            let cfg = load_config(config.as_deref())?.engine(&EngineConfig::default())?;
            announce("eval-objects", None, &json!({ "iou_thresholds": cfg.iou_thresholds }));
            let frames = evalset::read_eval_dataset(&dataset).map_err(|e| input(&dataset, e))?;
            let table = evaluate_frames(&frames, &cfg.iou_thresholds).map_err(|e| input(&dataset, e))?;
            emit_json(out.as_deref(), &table)
        }
        Command::SynthCorpus { out_dir, count, seed } => {
            announce("synth-corpus", Some(seed), &json!({ "count": count }));
            let items = corpus::synth_corpus(count, seed);
            corpus::write_corpus(&out_dir, &out_dir.join("manifest.jsonl"), &items).map_err(|e| output(&out_dir, e))
        }
    }
}

fn analyze(
    log_path: &Path,
    config: Option<&Path>,
    out: &Path,
    model: Option<&Path>,
    evidence_dir: Option<&Path>,
) -> Result<(), CliError> {
    let mut log = sessionlog::read_session_log(log_path).map_err(|e| input(log_path, e))?;
    let cfg = load_config(config)?.engine(&log.config)?;
    announce("analyze", None, &cfg);
    let base = base_dir(log_path);
    sessionlog::resolve_audio(&mut log, &base).map_err(|e| input(log_path, e))?;
    let detector = model.map(load_model).transpose()?;
    let voice = detector.as_ref().map(|d| d as &dyn VoiceClassifier);
    let report = run_session(&resample_frames(&log, cfg.max_fps), &cfg, voice).map_err(|e| input(log_path, e))?;
    write_json(out, &report)?;
    if let Some(dir) = evidence_dir {
        evidence::render_evidence(&log, &report, &base, dir, cfg.blur_radius).map_err(|e| output(dir, e))?;
    }
    Ok(())
}

fn simulate(
    spec_path: &Path,
    seed: Option<u64>,
    out_dir: &Path,
    config: Option<&Path>,
    model: Option<&Path>,
) -> Result<(), CliError> {
    let text = std::fs::read_to_string(spec_path).map_err(|e| input(spec_path, e))?;
    let mut spec: ScenarioSpec = serde_json::from_str(&text).map_err(|e| input(spec_path, e))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let cfg = load_config(config)?.engine(&EngineConfig::default())?;
    announce("simulate", Some(spec.seed), &cfg);
    let (log, gt) = generate_session(&spec, &cfg).map_err(|e| input(spec_path, e))?;

    std::fs::create_dir_all(out_dir).map_err(|e| output(out_dir, e))?;
    let on_disk = sessionlog::externalize_audio(&log, out_dir, "audio").map_err(|e| output(out_dir, e))?;
    write_file(&out_dir.join("session.jsonl"), sessionlog::session_log_string(&on_disk).as_bytes())?;
    write_json(&out_dir.join("ground_truth.json"), &gt)?;

    if let Some(m) = model {
        let detector = load_model(m)?;
        let report = run_session(&resample_frames(&log, cfg.max_fps), &cfg, Some(&detector)).map_err(run_err)?;
        let metrics = evaluate_reports(std::slice::from_ref(&report), std::slice::from_ref(&gt)).map_err(run_err)?;
        write_json(&out_dir.join("report.json"), &report)?;
        write_json(&out_dir.join("metrics.json"), &metrics)?;
    }
    Ok(())
}
