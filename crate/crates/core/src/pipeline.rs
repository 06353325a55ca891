//! Per-window feature extraction and the two trained models.
//!
//! Seeds: the RANSAC stream of a window is `derive_str(seed, "ransac:" + key)`,
//! the dictionary of a class `derive_str(seed, "dict:" + class)` and the
//! forest `derive_str(seed, "forest")`, so results never depend on the order
//! windows are processed in.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Label, MotionClass, TargetWindow, TrackId, WindowConfig};
use crate::dictionary::{
    dictionary_predict_with_grams, spectral_image, train_dictionary, ClassDictionary, DictionaryConfig,
    DictionaryError, TrainingTrace,
};
use crate::features::{grid_transform, hog, moment_features, GridConfig, GridError, HogError, MomentFeatures, DEFAULT_BINS};
use crate::forest::{ForestConfig, ForestError, RandomForest, Task};
use crate::gait_spectrum::{estimate_stride, SpectrumError, StrideConfig, StrideEstimate};
use crate::height::{boulic_height, height_features, HeightError, HeightFeatures, FEATURE_NAMES};
use crate::rng;
use crate::trajectory::{fit_trajectory, frenet_transform, LinearTrajectory, RansacConfig, TrajectoryError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Height(#[from] HeightError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Hog(#[from] HogError),
    #[error(transparent)]
    Dictionary(#[from] DictionaryError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error("training set has no labeled samples")]
    NoTrainingData,
    #[error("window {0} has no ground-truth label")]
    Unlabeled(String),
}

/// Every tunable of the pipeline. Serialized as JSON this is the config file
/// format; missing fields take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub windows: WindowConfig,
    pub ransac: RansacConfig,
    pub stride: StrideConfig,
    pub grid: GridConfig,
    pub hog_bins: usize,
    pub dictionary: DictionaryConfig,
    pub height_forest: ForestConfig,
    pub motion_forest: ForestConfig,
    pub folds: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            windows: WindowConfig::default(),
            ransac: RansacConfig::default(),
            stride: StrideConfig::default(),
            grid: GridConfig::default(),
            hog_bins: DEFAULT_BINS,
            dictionary: DictionaryConfig::default(),
            height_forest: ForestConfig::regression(),
            motion_forest: ForestConfig::classification(),
            folds: 5,
        }
    }
}

impl PipelineConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn ransac_seed(seed: u64, window: &TargetWindow) -> u64 {
    rng::derive_str(seed, &format!("ransac:{}", window.key()))
}

fn window_trajectory(
    window: &TargetWindow,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<(LinearTrajectory, Vec<crate::trajectory::FrenetTarget>), PipelineError> {
    let traj = fit_trajectory(window, &cfg.ransac, ransac_seed(seed, window))?;
    let frenet = frenet_transform(window, &traj)?;
    Ok((traj, frenet))
}

/// Identity and ground truth shared by every sample type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleId {
    pub key: String,
    pub track: TrackId,
    pub index: usize,
    pub start: f64,
    pub label: Option<Label>,
}

impl SampleId {
    fn of(window: &TargetWindow) -> Self {
        SampleId {
            key: window.key(),
            track: window.track.clone(),
            index: window.index,
            start: window.start,
            label: window.label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightSample {
    pub id: SampleId,
    pub speed: f64,
    pub stride: StrideEstimate,
    pub features: HeightFeatures,
    /// Direct model inversion from the same speed and stride.
    pub baseline: f64,
}

impl HeightSample {
    pub fn truth(&self) -> Option<f64> {
        self.id.label.and_then(|l| l.height)
    }
}

pub fn height_sample(window: &TargetWindow, cfg: &PipelineConfig, seed: u64) -> Result<HeightSample, PipelineError> {
    let (traj, frenet) = window_trajectory(window, cfg, seed)?;
    let stride = estimate_stride(&frenet, &cfg.stride, cfg.windows.min_targets)?;
    let features = height_features(traj.speed, stride.l_s)?;
    let baseline = boulic_height(traj.speed, stride.l_s)?.h;
    Ok(HeightSample { id: SampleId::of(window), speed: traj.speed, stride, features, baseline })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSample {
    pub id: SampleId,
    pub speed: f64,
    pub moments: MomentFeatures,
    pub hog: Vec<f64>,
    /// Spectral image of the Doppler grid.
    pub image: Vec<f64>,
}

impl MotionSample {
    pub fn truth(&self) -> Option<MotionClass> {
        self.id.label.and_then(|l| l.motion)
    }
}

pub fn motion_sample(window: &TargetWindow, cfg: &PipelineConfig, seed: u64) -> Result<MotionSample, PipelineError> {
    let moments = moment_features(window)?;
    let (traj, frenet) = window_trajectory(window, cfg, seed)?;
    let grid = grid_transform(&frenet, traj.speed, &cfg.grid)?;
    let hog = hog(&grid, cfg.hog_bins)?.bins;
    let image = spectral_image(&grid).values;
    Ok(MotionSample { id: SampleId::of(window), speed: traj.speed, moments, hog, image })
}

/// A window that produced no sample, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub key: String,
    pub reason: String,
}

/// Runs `f` over all windows in parallel, keeping input order.
pub fn extract_all<S: Send>(
    windows: &[TargetWindow],
    f: impl Fn(&TargetWindow) -> Result<S, PipelineError> + Sync,
) -> (Vec<S>, Vec<Skipped>) {
    let results: Vec<Result<S, Skipped>> = windows
        .par_iter()
        .map(|w| f(w).map_err(|e| Skipped { key: w.key(), reason: e.to_string() }))
        .collect();
    let mut ok = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(s) => ok.push(s),
            Err(s) => skipped.push(s),
        }
    }
    (ok, skipped)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightModel {
    pub forest: RandomForest,
}

impl HeightModel {
    pub fn feature_names() -> Vec<String> {
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
    }

    pub fn train(samples: &[&HeightSample], cfg: &PipelineConfig, seed: u64) -> Result<Self, PipelineError> {
        let mut x = Vec::with_capacity(samples.len());
        let mut y = Vec::with_capacity(samples.len());
        for s in samples {
            let h = s.truth().ok_or_else(|| PipelineError::Unlabeled(s.id.key.clone()))?;
            x.push(s.features.0.to_vec());
            y.push(h);
        }
        if x.is_empty() {
            return Err(PipelineError::NoTrainingData);
        }
        let forest =
            RandomForest::fit(&x, &y, Task::Regression, &cfg.height_forest, rng::derive_str(seed, "forest"))?;
        Ok(HeightModel { forest })
    }

    pub fn predict(&self, sample: &HeightSample) -> Result<f64, PipelineError> {
        Ok(self.forest.predict_value(&sample.features.0)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionModel {
    /// One per class seen in training, in class-code order.
    pub dictionaries: Vec<ClassDictionary>,
    pub forest: RandomForest,
    pub raw_errors: bool,
    pub lasso: crate::dictionary::LassoConfig,
}

/// Training by-products useful for diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MotionTrainingInfo {
    pub traces: Vec<(MotionClass, TrainingTrace)>,
    pub missing_classes: Vec<MotionClass>,
}

impl MotionModel {
    pub fn feature_names(raw_errors: bool, hog_bins: usize) -> Vec<String> {
        let mut names: Vec<String> = MomentFeatures::NAMES.iter().map(|s| s.to_string()).collect();
        names.extend((0..hog_bins).map(|b| format!("hog_{b}")));
        names.extend(MotionClass::ALL.iter().map(|c| format!("dict_{c}")));
        if raw_errors {
            names.extend(MotionClass::ALL.iter().map(|c| format!("err_{c}")));
        }
        names
    }

    pub fn train(
        samples: &[&MotionSample],
        cfg: &PipelineConfig,
        seed: u64,
    ) -> Result<(Self, MotionTrainingInfo), PipelineError> {
        if samples.is_empty() {
            return Err(PipelineError::NoTrainingData);
        }
        let mut y = Vec::with_capacity(samples.len());
        for s in samples {
            let c = s.truth().ok_or_else(|| PipelineError::Unlabeled(s.id.key.clone()))?;
            y.push(c.code() as f64);
        }
        let (dictionaries, info) = train_dictionaries(samples, &cfg.dictionary, seed)?;
        let mut model = MotionModel {
            dictionaries,
            forest: RandomForest {
                task: Task::Classification { n_classes: MotionClass::COUNT },
                config: cfg.motion_forest,
                n_features: 0,
                trees: Vec::new(),
                feature_importances: Vec::new(),
                seed: 0,
            },
            raw_errors: cfg.dictionary.raw_errors,
            lasso: cfg.dictionary.lasso,
        };
        let x = if cfg.dictionary.cross_fit >= 2 {
            model.cross_fitted_features(samples, &cfg.dictionary, seed)?
        } else {
            model.features_batch(samples)?
        };
        model.forest = RandomForest::fit(
            &x,
            &y,
            Task::Classification { n_classes: MotionClass::COUNT },
            &cfg.motion_forest,
            rng::derive_str(seed, "forest"),
        )?;
        Ok((model, info))
    }

    /// Training features whose dictionary part comes from dictionaries fitted
    /// without the sample's own track, so the forest learns how far the
    /// dictionary vote can be trusted on unseen data.
    fn cross_fitted_features(
        &self,
        samples: &[&MotionSample],
        dcfg: &DictionaryConfig,
        seed: u64,
    ) -> Result<Vec<Vec<f64>>, PipelineError> {
        let mut tracks: Vec<&str> = samples.iter().map(|s| s.id.track.as_str()).collect();
        tracks.sort_unstable();
        tracks.dedup();
        let k = dcfg.cross_fit.min(tracks.len());
        if k < 2 {
            return self.features_batch(samples);
        }
        let fold_of: BTreeMap<&str, usize> = {
            let mut shuffled = tracks.clone();
            shuffled.shuffle(&mut rng::rng_from(rng::derive_str(seed, "crossfit")));
            shuffled.into_iter().enumerate().map(|(i, t)| (t, i % k)).collect()
        };
        let fold = |s: &MotionSample| fold_of[s.id.track.as_str()];
        let mut out = vec![Vec::new(); samples.len()];
        for f in 0..k {
            let inner: Vec<&MotionSample> = samples.iter().copied().filter(|s| fold(s) != f).collect();
            let (dictionaries, _) = train_dictionaries(&inner, dcfg, rng::derive_str(seed, &format!("crossfit:{f}")))?;
            let held = MotionModel { dictionaries, forest: self.forest.clone(), ..*self };
            let grams = held.grams();
            let idx: Vec<usize> = (0..samples.len()).filter(|&i| fold(samples[i]) == f).collect();
            let rows: Vec<Vec<f64>> =
                idx.par_iter().map(|&i| held.features_with_grams(samples[i], &grams)).collect::<Result<_, _>>()?;
            for (i, row) in idx.into_iter().zip(rows) {
                out[i] = row;
            }
        }
        Ok(out)
    }

    fn grams(&self) -> Vec<Vec<f64>> {
        self.dictionaries.iter().map(ClassDictionary::gram).collect()
    }

    fn features_with_grams(&self, s: &MotionSample, grams: &[Vec<f64>]) -> Result<Vec<f64>, PipelineError> {
        let pred = dictionary_predict_with_grams(&s.image, &self.dictionaries, grams, &self.lasso)?;
        let mut f = s.moments.to_array().to_vec();
        f.extend_from_slice(&s.hog);
        f.extend_from_slice(&pred.one_hot);
        if self.raw_errors {
            // Classes without a dictionary get the worst possible error.
            f.extend(pred.errors.iter().map(|e| e.unwrap_or(1.0)));
        }
        Ok(f)
    }

    pub fn features(&self, s: &MotionSample) -> Result<Vec<f64>, PipelineError> {
        self.features_with_grams(s, &self.grams())
    }

    pub fn features_batch(&self, samples: &[&MotionSample]) -> Result<Vec<Vec<f64>>, PipelineError> {
        let grams = self.grams();
        samples.par_iter().map(|s| self.features_with_grams(s, &grams)).collect()
    }

    pub fn predict(&self, s: &MotionSample) -> Result<MotionClass, PipelineError> {
        let f = self.features(s)?;
        let code = self.forest.predict_class(&f)?;
        Ok(MotionClass::from_code(code).expect("forest trained on class codes"))
    }

    pub fn predict_batch(&self, samples: &[&MotionSample]) -> Result<Vec<MotionClass>, PipelineError> {
        let x = self.features_batch(samples)?;
        x.iter()
            .map(|f| {
                let code = self.forest.predict_class(f)?;
                Ok(MotionClass::from_code(code).expect("forest trained on class codes"))
            })
            .collect()
    }
}

/// One dictionary per class present in `samples`, trained in parallel.
fn train_dictionaries(
    samples: &[&MotionSample],
    dcfg: &DictionaryConfig,
    seed: u64,
) -> Result<(Vec<ClassDictionary>, MotionTrainingInfo), PipelineError> {
    let mut by_class: Vec<Vec<&[f64]>> = vec![Vec::new(); MotionClass::COUNT];
    for s in samples {
        let c = s.truth().ok_or_else(|| PipelineError::Unlabeled(s.id.key.clone()))?;
        by_class[c.code()].push(&s.image);
    }
    let trained: Vec<Option<(ClassDictionary, TrainingTrace)>> = MotionClass::ALL
        .par_iter()
        .map(|&class| {
            let images = &by_class[class.code()];
            if images.is_empty() {
                return Ok(None);
            }
            let dcfg = DictionaryConfig { atoms: dcfg.atoms.min(images.len()), ..*dcfg };
            let seed = rng::derive_str(seed, &format!("dict:{class}"));
            train_dictionary(class, images, &dcfg, seed).map(Some)
        })
        .collect::<Result<_, DictionaryError>>()?;

    let mut info = MotionTrainingInfo::default();
    let mut dictionaries = Vec::new();
    for (class, t) in MotionClass::ALL.iter().zip(trained) {
        match t {
            Some((d, trace)) => {
                dictionaries.push(d);
                info.traces.push((*class, trace));
            }
            None => info.missing_classes.push(*class),
        }
    }
    Ok((dictionaries, info))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_json_round_trips_and_fills_defaults() {
        let cfg = PipelineConfig::default();
        let back: PipelineConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        let partial: PipelineConfig = serde_json::from_str(r#"{"folds": 3}"#).unwrap();
        assert_eq!(partial.folds, 3);
        assert_eq!(partial.height_forest, ForestConfig::regression());
    }

    #[test]
    fn motion_feature_names_match_layout() {
        assert_eq!(MotionModel::feature_names(false, 9).len(), 4 + 9 + 6);
        assert_eq!(MotionModel::feature_names(true, 9).len(), 25);
    }
}
