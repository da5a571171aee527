//! Repeated k-fold cross-validation.
//!
//! Every repeat shuffles the dataset with its own derived seed and cuts it
//! into k near-equal folds. Each fold is the test set exactly once; the
//! remaining items are split into validation (for early stopping) and
//! training. Runs are planned up front so they can execute in any order or
//! in parallel with identical results.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::train::{accuracy, train_voice_model, TrainParams};
use super::{AudioError, LabeledExample};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvParams {
    pub k: usize,
    pub repeats: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    pub train: TrainParams,
}

impl Default for CvParams {
    fn default() -> Self {
        Self { k: 5, repeats: 3, seed: 0, validation_fraction: 0.1, train: TrainParams::default() }
    }
}

/// Index sets of one (repeat, fold) run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CvRun {
    pub repeat: usize,
    pub fold: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub train_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvRunResult {
    pub repeat: usize,
    pub fold: usize,
    pub test_size: usize,
    pub accuracy: f64,
    pub epochs_run: usize,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub repeats: usize,
    pub seed: u64,
    pub runs: Vec<CvRunResult>,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

pub fn plan_folds(n: usize, params: &CvParams) -> Result<Vec<CvRun>, AudioError> {
    let k = params.k;
    if k < 2 {
        return Err(AudioError::InvalidParameter("k must be at least 2"));
    }
    if params.repeats == 0 {
        return Err(AudioError::InvalidParameter("repeats must be at least 1"));
    }
    if !(0.0..1.0).contains(&params.validation_fraction) {
        return Err(AudioError::InvalidParameter("validation_fraction must be in [0, 1)"));
    }
    // every run needs at least one training and one validation item
    if n < k || n - n.div_ceil(k) < 2 {
        return Err(AudioError::TooFewSamples { k, got: n });
    }
    let mut runs = Vec::with_capacity(k * params.repeats);
    for repeat in 0..params.repeats {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut seed::rng(params.seed, &[repeat as u64]));
        for fold in 0..k {
            let (lo, hi) = (fold * n / k, (fold + 1) * n / k);
            let test = perm[lo..hi].to_vec();
            let rest: Vec<usize> = perm[..lo].iter().chain(&perm[hi..]).copied().collect();
            let n_val = ((rest.len() as f64 * params.validation_fraction) as usize).clamp(1, rest.len() - 1);
            let (train, val) = rest.split_at(rest.len() - n_val);
            runs.push(CvRun {
                repeat,
                fold,
                train: train.to_vec(),
                val: val.to_vec(),
                test,
                train_seed: seed::derive(params.seed, &[repeat as u64, fold as u64, 1]),
            });
        }
    }
    Ok(runs)
}

pub fn run_fold(data: &[LabeledExample], run: &CvRun, train: &TrainParams) -> Result<CvRunResult, AudioError> {
    let pick = |idx: &[usize]| idx.iter().map(|&i| data[i].clone()).collect::<Vec<_>>();
    let hp = TrainParams { seed: run.train_seed, ..*train };
    let (model, history) = train_voice_model(&pick(&run.train), &pick(&run.val), &hp)?;
    let test = pick(&run.test);
    Ok(CvRunResult {
        repeat: run.repeat,
        fold: run.fold,
        test_size: test.len(),
        accuracy: accuracy(&model, &test),
        epochs_run: history.epochs.len(),
        best_epoch: history.best_epoch,
    })
}

/// Orders runs by (repeat, fold) and computes min / max / mean accuracy.
pub fn summarize(params: &CvParams, mut runs: Vec<CvRunResult>) -> CvReport {
    runs.sort_by_key(|r| (r.repeat, r.fold));
    let accs = runs.iter().map(|r| r.accuracy);
    let min = accs.clone().fold(f64::INFINITY, f64::min);
    let max = accs.clone().fold(f64::NEG_INFINITY, f64::max);
    let mean = if runs.is_empty() { 0.0 } else { accs.sum::<f64>() / runs.len() as f64 };
    // guard min <= mean <= max against summation rounding
    let mean = mean.clamp(min.min(max), max.max(min));
    CvReport { k: params.k, repeats: params.repeats, seed: params.seed, runs, min, max, mean }
}

/// Sequential driver; `proctorline` runs the same plan in parallel.
pub fn cross_validate(data: &[LabeledExample], params: &CvParams) -> Result<CvReport, AudioError> {
    let runs = plan_folds(data.len(), params)?;
    let results = runs
        .iter()
        .map(|r| run_fold(data, r, &params.train))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(summarize(params, results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;

    #[test]
    fn every_item_is_tested_once_per_repeat() {
        let params = CvParams { repeats: 1, ..Default::default() };
        let runs = plan_folds(100, &params).unwrap();
        assert_eq!(runs.len(), 5);
        let mut seen: Vec<usize> = runs.iter().flat_map(|r| r.test.iter().copied()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn folds_never_leak() {
        let params = CvParams { k: 5, repeats: 3, seed: 4, ..Default::default() };
        for r in plan_folds(103, &params).unwrap() {
            let test: BTreeSet<_> = r.test.iter().collect();
            let train: BTreeSet<_> = r.train.iter().collect();
            let val: BTreeSet<_> = r.val.iter().collect();
            assert!(test.is_disjoint(&train) && test.is_disjoint(&val) && train.is_disjoint(&val));
            assert_eq!(test.len() + train.len() + val.len(), 103);
            assert!(!val.is_empty());
        }
    }

    #[test]
    fn repeats_reshuffle() {
        let params = CvParams { repeats: 2, seed: 1, ..Default::default() };
        let runs = plan_folds(50, &params).unwrap();
        assert_ne!(runs[0].test, runs[5].test);
        assert_eq!(plan_folds(50, &params).unwrap(), runs);
    }

    #[test]
    fn too_few_samples() {
        assert_eq!(
            plan_folds(3, &CvParams::default()),
            Err(AudioError::TooFewSamples { k: 5, got: 3 })
        );
        assert!(plan_folds(10, &CvParams { k: 1, ..Default::default() }).is_err());
    }

    #[test]
    fn summary_bounds() {
        let run = |fold, accuracy| CvRunResult { repeat: 0, fold, test_size: 3, accuracy, epochs_run: 1, best_epoch: 1 };
        let r = summarize(&CvParams::default(), alloc::vec![run(1, 0.9), run(0, 1.0), run(2, 0.8)]);
        assert_eq!(r.runs[0].fold, 0);
        assert_eq!((r.min, r.max), (0.8, 1.0));
        assert!(r.min <= r.mean && r.mean <= r.max);
    }
}
