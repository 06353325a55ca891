//! Subject-grouped k-fold cross-validation and the metrics it reports.
//!
//! Seeds: the fold plan uses `derive_str(seed, "folds")`, the models of fold
//! `f` are trained with `derive_str(seed, "fold:" + f)`, and feature
//! extraction uses `seed` itself.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{MotionClass, TargetWindow};
use crate::dataset::Manifest;
use crate::height::FEATURE_NAMES;
use crate::pipeline::{
    extract_all, height_sample, motion_sample, HeightModel, HeightSample, MotionModel, MotionSample,
    PipelineConfig, PipelineError, SampleId, Skipped,
};
use crate::rng;

/// Width of the true-height bins of [`RegressionReport::binned`].
pub const HEIGHT_BIN: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("need at least {needed} groups for {needed}-fold cross-validation, got {got}")]
    TooFewGroups { needed: usize, got: usize },
    #[error("fold count must be at least 2, got {0}")]
    InvalidFolds(usize),
    #[error("no usable samples")]
    NoSamples,
    #[error("sample {0} has no ground truth for this task")]
    Unlabeled(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, group: &str) -> Option<usize> {
        self.assignments.get(group).copied()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignments.values() {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Shuffles the distinct groups with `seed` and deals them round-robin into
/// `k` folds. Input order and duplicates do not matter.
pub fn grouped_kfold(groups: &[String], k: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidFolds(k));
    }
    let mut distinct: Vec<&String> = groups.iter().collect::<BTreeSet<_>>().into_iter().collect();
    if distinct.len() < k {
        return Err(EvalError::TooFewGroups { needed: k, got: distinct.len() });
    }
    distinct.shuffle(&mut rng::rng_from(seed));
    let assignments = distinct.into_iter().enumerate().map(|(i, g)| (g.clone(), i % k)).collect();
    Ok(FoldPlan { k, assignments })
}

/// Cross-validation group of every sample: the subject, or subject and
/// recording for windows of a class recorded from fewer than `k` subjects.
pub fn group_keys(ids: &[&SampleId], manifest: &Manifest, k: usize) -> Vec<String> {
    let infos: Vec<_> = ids.iter().map(|id| manifest.info(&id.track)).collect();
    let mut subjects: BTreeMap<Option<MotionClass>, BTreeSet<&str>> = BTreeMap::new();
    for (id, info) in ids.iter().zip(&infos) {
        let class = id.label.and_then(|l| l.motion);
        subjects.entry(class).or_default().insert(info.subject_id.as_str());
    }
    ids.iter()
        .zip(&infos)
        .map(|(id, info)| match id.label.and_then(|l| l.motion) {
            Some(c) if subjects[&Some(c)].len() < k => format!("{}#{}", info.subject_id, info.recording_id),
            _ => info.subject_id.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub classes: Vec<String>,
    /// Rows are true classes, columns predictions.
    pub confusion: Vec<Vec<u64>>,
    /// Each row divided by its support; all-zero rows for absent classes.
    pub row_normalized: Vec<Vec<f64>>,
    pub support: Vec<u64>,
    pub per_class_precision: Vec<f64>,
    pub per_class_recall: Vec<f64>,
    pub per_class_f1: Vec<f64>,
    /// Unweighted means over classes with support.
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

impl ClassificationReport {
    /// Metrics of a square confusion matrix; `0/0` counts as 0.
    pub fn from_confusion(classes: Vec<String>, confusion: Vec<Vec<u64>>) -> Self {
        let c = classes.len();
        assert!(confusion.len() == c && confusion.iter().all(|r| r.len() == c), "confusion must be {c}x{c}");
        let support: Vec<u64> = confusion.iter().map(|r| r.iter().sum()).collect();
        let predicted: Vec<u64> = (0..c).map(|j| confusion.iter().map(|r| r[j]).sum()).collect();
        let total: u64 = support.iter().sum();

        let row_normalized = confusion
            .iter()
            .zip(&support)
            .map(|(row, &s)| row.iter().map(|&v| ratio(v as f64, s as f64)).collect())
            .collect();
        let mut precision = Vec::with_capacity(c);
        let mut recall = Vec::with_capacity(c);
        let mut f1 = Vec::with_capacity(c);
        for i in 0..c {
            let tp = confusion[i][i] as f64;
            let p = ratio(tp, predicted[i] as f64);
            let r = ratio(tp, support[i] as f64);
            precision.push(p);
            recall.push(r);
            f1.push(ratio(2.0 * p * r, p + r));
        }
        let present: Vec<usize> = (0..c).filter(|&i| support[i] > 0).collect();
        let macro_of = |v: &[f64]| ratio(present.iter().map(|&i| v[i]).sum(), present.len() as f64);
        let correct: u64 = (0..c).map(|i| confusion[i][i]).sum();

        ClassificationReport {
            macro_precision: macro_of(&precision),
            macro_recall: macro_of(&recall),
            macro_f1: macro_of(&f1),
            accuracy: ratio(correct as f64, total as f64),
            classes,
            confusion,
            row_normalized,
            support,
            per_class_precision: precision,
            per_class_recall: recall,
            per_class_f1: f1,
        }
    }

    /// Report over `classes` from parallel lists of class indices.
    pub fn from_predictions(classes: Vec<String>, truth: &[usize], predicted: &[usize]) -> Self {
        let c = classes.len();
        let mut confusion = vec![vec![0u64; c]; c];
        for (&t, &p) in truth.iter().zip(predicted) {
            confusion[t][p] += 1;
        }
        Self::from_confusion(classes, confusion)
    }

    pub fn total(&self) -> u64 {
        self.support.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightBin {
    pub center: f64,
    pub mae: f64,
    pub std: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub count: usize,
    pub mae: f64,
    /// Population standard deviation of the absolute errors.
    pub std_abs_err: f64,
    /// Mean signed error, prediction minus truth.
    pub bias: f64,
    /// Errors grouped by true value in bins of [`HEIGHT_BIN`].
    pub binned: Vec<HeightBin>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let mean = crate::numeric::mean(values);
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
    (mean, var.sqrt())
}

impl RegressionReport {
    pub fn from_pairs(predicted: &[f64], truth: &[f64]) -> Self {
        assert_eq!(predicted.len(), truth.len());
        if predicted.is_empty() {
            return RegressionReport { count: 0, mae: 0.0, std_abs_err: 0.0, bias: 0.0, binned: Vec::new() };
        }
        let abs: Vec<f64> = predicted.iter().zip(truth).map(|(p, t)| (p - t).abs()).collect();
        let signed: Vec<f64> = predicted.iter().zip(truth).map(|(p, t)| p - t).collect();
        let (mae, std_abs_err) = mean_std(&abs);

        let mut bins: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
        for (&t, &e) in truth.iter().zip(&abs) {
            // A small nudge keeps values like 1.80 out of the bin below.
            let i = (t / HEIGHT_BIN + 1e-9).floor() as i64;
            bins.entry(i).or_default().push(e);
        }
        let binned = bins
            .into_iter()
            .map(|(i, errs)| {
                let (mae, std) = mean_std(&errs);
                HeightBin { center: (i as f64 + 0.5) * HEIGHT_BIN, mae, std, count: errs.len() }
            })
            .collect();
        RegressionReport { count: abs.len(), mae, std_abs_err, bias: crate::numeric::mean(&signed), binned }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub train: usize,
    pub test: usize,
    /// Motion classes with no training window in this fold.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing_classes: Vec<MotionClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedValue {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightPrediction {
    pub key: String,
    pub group: String,
    pub fold: usize,
    pub truth: f64,
    pub forest: f64,
    pub baseline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightEvaluation {
    pub plan: FoldPlan,
    pub folds: Vec<FoldSummary>,
    pub forest: RegressionReport,
    /// Direct model inversion on the same test windows.
    pub baseline: RegressionReport,
    /// Forest feature importances averaged over folds.
    pub importances: Vec<NamedValue>,
    pub predictions: Vec<HeightPrediction>,
    pub skipped: Vec<Skipped>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionPrediction {
    pub key: String,
    pub group: String,
    pub fold: usize,
    pub truth: MotionClass,
    pub predicted: MotionClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionEvaluation {
    pub plan: FoldPlan,
    pub folds: Vec<FoldSummary>,
    pub report: ClassificationReport,
    pub predictions: Vec<MotionPrediction>,
    pub skipped: Vec<Skipped>,
}

/// Test indices of every fold, checking that no group straddles a split.
fn split(groups: &[String], plan: &FoldPlan) -> Vec<(Vec<usize>, Vec<usize>)> {
    (0..plan.k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..groups.len()).partition(|&i| plan.fold_of(&groups[i]) == Some(f));
            let test_groups: BTreeSet<&str> = test.iter().map(|&i| groups[i].as_str()).collect();
            assert!(train.iter().all(|&i| !test_groups.contains(groups[i].as_str())), "group leaked into fold {f}");
            (train, test)
        })
        .collect()
}

fn fold_seed(seed: u64, fold: usize) -> u64 {
    rng::derive_str(seed, &format!("fold:{fold}"))
}

/// Extracts height samples from labeled windows and cross-validates them.
pub fn evaluate_regression(
    windows: &[TargetWindow],
    manifest: &Manifest,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<HeightEvaluation, EvalError> {
    let (samples, skipped) = extract_all(windows, |w| height_sample(w, cfg, seed));
    let mut eval = cross_validate_height(&samples, manifest, cfg, seed)?;
    eval.skipped = skipped;
    Ok(eval)
}

pub fn cross_validate_height(
    samples: &[HeightSample],
    manifest: &Manifest,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<HeightEvaluation, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::NoSamples);
    }
    if let Some(s) = samples.iter().find(|s| s.truth().is_none()) {
        return Err(EvalError::Unlabeled(s.id.key.clone()));
    }
    let ids: Vec<&SampleId> = samples.iter().map(|s| &s.id).collect();
    let groups = group_keys(&ids, manifest, cfg.folds);
    let plan = grouped_kfold(&groups, cfg.folds, rng::derive_str(seed, "folds"))?;
    let splits = split(&groups, &plan);

    let fold_results: Vec<(Vec<(usize, f64)>, Vec<f64>)> = splits
        .par_iter()
        .enumerate()
        .map(|(f, (train, test))| {
            let train_set: Vec<&HeightSample> = train.iter().map(|&i| &samples[i]).collect();
            let model = HeightModel::train(&train_set, cfg, fold_seed(seed, f))?;
            let preds = test
                .iter()
                .map(|&i| model.predict(&samples[i]).map(|p| (i, p)))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((preds, model.forest.feature_importances.clone()))
        })
        .collect::<Result<_, PipelineError>>()?;

    let mut predictions = Vec::with_capacity(samples.len());
    let mut folds = Vec::with_capacity(plan.k);
    let mut importance = vec![0.0; FEATURE_NAMES.len()];
    for (f, ((preds, imp), (train, test))) in fold_results.into_iter().zip(&splits).enumerate() {
        folds.push(FoldSummary { fold: f, train: train.len(), test: test.len(), missing_classes: Vec::new() });
        for (acc, v) in importance.iter_mut().zip(&imp) {
            *acc += v / plan.k as f64;
        }
        for (i, p) in preds {
            let s = &samples[i];
            predictions.push(HeightPrediction {
                key: s.id.key.clone(),
                group: groups[i].clone(),
                fold: f,
                truth: s.truth().expect("checked above"),
                forest: p,
                baseline: s.baseline,
            });
        }
    }
    let truth: Vec<f64> = predictions.iter().map(|p| p.truth).collect();
    let forest: Vec<f64> = predictions.iter().map(|p| p.forest).collect();
    let baseline: Vec<f64> = predictions.iter().map(|p| p.baseline).collect();
    let importances = FEATURE_NAMES
        .iter()
        .zip(importance)
        .map(|(n, value)| NamedValue { name: n.to_string(), value })
        .collect();
    Ok(HeightEvaluation {
        forest: RegressionReport::from_pairs(&forest, &truth),
        baseline: RegressionReport::from_pairs(&baseline, &truth),
        plan,
        folds,
        importances,
        predictions,
        skipped: Vec::new(),
    })
}

/// Extracts motion samples from labeled windows and cross-validates them.
/// Dictionaries and forest of each fold see only that fold's training data.
pub fn evaluate_classification(
    windows: &[TargetWindow],
    manifest: &Manifest,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<MotionEvaluation, EvalError> {
    let (samples, skipped) = extract_all(windows, |w| motion_sample(w, cfg, seed));
    let mut eval = cross_validate_motion(&samples, manifest, cfg, seed)?;
    eval.skipped = skipped;
    Ok(eval)
}

pub fn cross_validate_motion(
    samples: &[MotionSample],
    manifest: &Manifest,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<MotionEvaluation, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::NoSamples);
    }
    if let Some(s) = samples.iter().find(|s| s.truth().is_none()) {
        return Err(EvalError::Unlabeled(s.id.key.clone()));
    }
    let ids: Vec<&SampleId> = samples.iter().map(|s| &s.id).collect();
    let groups = group_keys(&ids, manifest, cfg.folds);
    let plan = grouped_kfold(&groups, cfg.folds, rng::derive_str(seed, "folds"))?;
    let splits = split(&groups, &plan);

    let fold_results: Vec<(Vec<MotionClass>, Vec<MotionClass>)> = splits
        .par_iter()
        .enumerate()
        .map(|(f, (train, test))| {
            let train_set: Vec<&MotionSample> = train.iter().map(|&i| &samples[i]).collect();
            let test_set: Vec<&MotionSample> = test.iter().map(|&i| &samples[i]).collect();
            let (model, info) = MotionModel::train(&train_set, cfg, fold_seed(seed, f))?;
            Ok((model.predict_batch(&test_set)?, info.missing_classes))
        })
        .collect::<Result<_, PipelineError>>()?;

    let mut predictions = Vec::with_capacity(samples.len());
    let mut folds = Vec::with_capacity(plan.k);
    for (f, ((preds, missing), (train, test))) in fold_results.into_iter().zip(&splits).enumerate() {
        folds.push(FoldSummary { fold: f, train: train.len(), test: test.len(), missing_classes: missing });
        for (&i, predicted) in test.iter().zip(preds) {
            let s = &samples[i];
            predictions.push(MotionPrediction {
                key: s.id.key.clone(),
                group: groups[i].clone(),
                fold: f,
                truth: s.truth().expect("checked above"),
                predicted,
            });
        }
    }
    let names = MotionClass::ALL.iter().map(|c| c.name().to_string()).collect();
    let truth: Vec<usize> = predictions.iter().map(|p| p.truth.code()).collect();
    let predicted: Vec<usize> = predictions.iter().map(|p| p.predicted.code()).collect();
    Ok(MotionEvaluation {
        report: ClassificationReport::from_predictions(names, &truth, &predicted),
        plan,
        folds,
        predictions,
        skipped: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Label, TrackId};
    use crate::dataset::TrackInfo;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn perfect_predictor_gives_identity() {
        let truth = [0, 1, 2, 2, 1, 0, 0];
        let r = ClassificationReport::from_predictions(names(3), &truth, &truth);
        assert_eq!(r.macro_f1, 1.0);
        for (i, row) in r.row_normalized.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn constant_predictor_on_two_balanced_classes() {
        let truth = [0, 0, 0, 1, 1, 1];
        let r = ClassificationReport::from_predictions(names(2), &truth, &[0; 6]);
        assert!((r.per_class_f1[0] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.per_class_f1[1], 0.0);
        assert_eq!(r.per_class_precision[1], 0.0);
        assert!((r.macro_f1 - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn absent_classes_leave_macro_averages() {
        let truth = [0, 0, 1];
        let r = ClassificationReport::from_predictions(names(3), &truth, &truth);
        assert_eq!(r.macro_f1, 1.0);
        assert_eq!(r.row_normalized[2], vec![0.0; 3]);
    }

    #[test]
    fn regression_oracles() {
        let truth = [1.52, 1.61, 1.77, 1.80, 1.99];
        let r = RegressionReport::from_pairs(&truth, &truth);
        assert_eq!((r.mae, r.std_abs_err), (0.0, 0.0));
        let shifted: Vec<f64> = truth.iter().map(|t| t + 0.05).collect();
        let r = RegressionReport::from_pairs(&shifted, &truth);
        assert!((r.mae - 0.05).abs() < 1e-12);
        assert!(r.std_abs_err < 1e-12);
        assert_eq!(r.binned.iter().map(|b| b.count).sum::<usize>(), truth.len());
        let b180 = r.binned.iter().find(|b| (b.center - 1.825).abs() < 1e-9).unwrap();
        assert_eq!(b180.count, 1);
    }

    #[test]
    fn kfold_balances_and_is_deterministic() {
        let subjects: Vec<String> = (0..10).map(|i| format!("s{i}")).collect();
        let plan = grouped_kfold(&subjects, 5, 3).unwrap();
        assert_eq!(plan.sizes(), vec![2; 5]);
        assert_eq!(plan, grouped_kfold(&subjects, 5, 3).unwrap());
        let mut reversed = subjects.clone();
        reversed.reverse();
        assert_eq!(plan, grouped_kfold(&reversed, 5, 3).unwrap());
        let uneven = grouped_kfold(&subjects[..7], 3, 1).unwrap();
        assert_eq!(uneven.sizes().iter().max().unwrap() - uneven.sizes().iter().min().unwrap(), 1);
        assert!(matches!(grouped_kfold(&subjects[..4], 5, 0), Err(EvalError::TooFewGroups { needed: 5, got: 4 })));
    }

    #[test]
    fn rare_classes_group_by_recording() {
        let mut manifest = Manifest::default();
        let mut ids = Vec::new();
        for s in 0..5 {
            for (r, class) in [(0, MotionClass::Walk), (1, MotionClass::Wheelchair)] {
                if class == MotionClass::Wheelchair && s > 0 {
                    continue;
                }
                let track = format!("s{s}/r{r}");
                let label = Label { height: None, motion: Some(class) };
                manifest.tracks.insert(
                    track.clone(),
                    TrackInfo { subject_id: format!("s{s}"), recording_id: format!("r{r}"), label },
                );
                ids.push(SampleId { key: track.clone(), track: TrackId::new(track), index: 0, start: 0.0, label: Some(label) });
            }
        }
        let refs: Vec<&SampleId> = ids.iter().collect();
        let keys = group_keys(&refs, &manifest, 5);
        assert_eq!(keys[0], "s0");
        assert_eq!(keys[1], "s0#r1");
        assert_eq!(keys[2], "s1");
    }
}
