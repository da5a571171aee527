//! Rayon drivers. Every run carries its own derived seed, so results do not
//! depend on scheduling.

use proctorline_core::audio::cv::{plan_folds, run_fold, summarize};
use proctorline_core::audio::train::{accuracy, train_voice_model};
use proctorline_core::audio::{AudioError, CvParams, CvReport, LabeledExample, TrainParams, TrainingHistory, VoiceModel};
use proctorline_core::pipeline::{PipelineError, VoiceClassifier};
use proctorline_core::simulator::{evaluate_reports, generate_session, GroundTruth, Metrics, ScenarioSpec, SimError};
use proctorline_core::{resample_frames, run_session, seed, EngineConfig, SessionReport};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub fn cross_validate_parallel(data: &[LabeledExample], params: &CvParams) -> Result<CvReport, AudioError> {
    let runs = plan_folds(data.len(), params)?;
    let results = runs
        .par_iter()
        .map(|r| run_fold(data, r, &params.train))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(summarize(params, results))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub seed: u64,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub test_accuracy: f64,
    pub history: TrainingHistory,
}

/// Shuffles with `seed`, holds out 10% for testing and 10% for early
/// stopping, and trains on the rest.
pub fn train_with_holdout(
    data: &[LabeledExample],
    hp: &TrainParams,
) -> Result<(VoiceModel, TrainSummary), AudioError> {
    if data.len() < 3 {
        return Err(AudioError::TooFewSamples { k: 3, got: data.len() });
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut seed::rng(hp.seed, &[5]));
    let n_test = (data.len() / 10).max(1);
    let n_val = (data.len() / 10).max(1);
    let pick = |idx: &[usize]| idx.iter().map(|&i| data[i].clone()).collect::<Vec<_>>();
    let test = pick(&order[..n_test]);
    let val = pick(&order[n_test..n_test + n_val]);
    let train = pick(&order[n_test + n_val..]);
    let (model, history) = train_voice_model(&train, &val, hp)?;
    let summary = TrainSummary {
        seed: hp.seed,
        train_size: train.len(),
        val_size: val.len(),
        test_size: test.len(),
        test_accuracy: accuracy(&model, &test),
        history,
    };
    Ok((model, summary))
}

#[derive(Debug, Error)]
pub enum ClosedLoopError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("scenario {index}: {source}")]
    Pipeline { index: usize, source: PipelineError },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    pub reports: Vec<SessionReport>,
    pub truths: Vec<GroundTruth>,
    pub metrics: Metrics,
}

/// Generates, analyzes and scores every scenario.
pub fn closed_loop<V: VoiceClassifier + Sync>(
    specs: &[ScenarioSpec],
    cfg: &EngineConfig,
    voice: &V,
) -> Result<ClosedLoop, ClosedLoopError> {
    let pairs = specs
        .par_iter()
        .enumerate()
        .map(|(index, spec)| {
            let (log, gt) = generate_session(spec, cfg)?;
            let report = run_session(&resample_frames(&log, cfg.max_fps), cfg, Some(voice))
                .map_err(|source| ClosedLoopError::Pipeline { index, source })?;
            Ok((report, gt))
        })
        .collect::<Result<Vec<_>, ClosedLoopError>>()?;
    let (reports, truths): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let metrics = evaluate_reports(&reports, &truths)?;
    Ok(ClosedLoop { reports, truths, metrics })
}
