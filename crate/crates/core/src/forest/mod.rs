//! Random forests for regression and classification.

mod tree;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use tree::{DecisionTree, Node};
use tree::TreeBuilder;

use crate::rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForestError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("feature dimension {got} does not match {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("target {0} is not a valid class code")]
    InvalidTarget(f64),
    #[error("non-finite value in training data")]
    NonFinite,
    #[error("invalid forest configuration: {0}")]
    InvalidConfig(String),
    #[error("forest task does not support this prediction")]
    WrongTask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Task {
    Regression,
    Classification { n_classes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Mse,
    Gini,
}

/// Number of candidate features drawn at each node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// `floor(sqrt(n))` for classification, `ceil(n / 3)` for regression.
    Auto,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize, task: Task) -> usize {
        let m = match self {
            MaxFeatures::Auto => match task {
                Task::Classification { .. } => (n_features as f64).sqrt().floor() as usize,
                Task::Regression => n_features.div_ceil(3),
            },
            MaxFeatures::All => n_features,
            MaxFeatures::Count(c) => c,
        };
        m.clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub trees: usize,
    /// `None` grows until leaves are pure.
    pub max_depth: Option<usize>,
    pub criterion: Criterion,
    pub max_features: MaxFeatures,
    pub min_samples_split: usize,
}

impl ForestConfig {
    pub fn regression() -> Self {
        ForestConfig {
            trees: 100,
            max_depth: Some(5),
            criterion: Criterion::Mse,
            max_features: MaxFeatures::Auto,
            min_samples_split: 2,
        }
    }

    pub fn classification() -> Self {
        ForestConfig {
            trees: 50,
            max_depth: None,
            criterion: Criterion::Gini,
            max_features: MaxFeatures::Auto,
            min_samples_split: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub task: Task,
    pub config: ForestConfig,
    pub n_features: usize,
    pub trees: Vec<DecisionTree>,
    pub feature_importances: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prediction {
    Value(f64),
    Class(usize),
}

impl RandomForest {
    /// Trains one tree per bootstrap sample. Classification targets are class
    /// codes `0..n_classes` stored as `f64`.
    pub fn fit(
        x: &[Vec<f64>],
        y: &[f64],
        task: Task,
        cfg: &ForestConfig,
        seed: u64,
    ) -> Result<RandomForest, ForestError> {
        if x.len() < 2 || y.len() != x.len() {
            return Err(ForestError::TooFewSamples(x.len().min(y.len())));
        }
        if cfg.trees == 0 {
            return Err(ForestError::InvalidConfig("tree count must be positive".into()));
        }
        let n_features = x[0].len();
        if n_features == 0 {
            return Err(ForestError::InvalidConfig("feature vectors are empty".into()));
        }
        for row in x {
            if row.len() != n_features {
                return Err(ForestError::DimensionMismatch { expected: n_features, got: row.len() });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(ForestError::NonFinite);
            }
        }
        match task {
            Task::Classification { n_classes } => {
                if n_classes == 0 {
                    return Err(ForestError::InvalidConfig("class count must be positive".into()));
                }
                if let Some(&bad) =
                    y.iter().find(|&&c| !(c >= 0.0 && c.fract() == 0.0 && (c as usize) < n_classes))
                {
                    return Err(ForestError::InvalidTarget(bad));
                }
            }
            Task::Regression => {
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(ForestError::NonFinite);
                }
            }
        }

        let n = x.len();
        let builder = TreeBuilder { x, y, task, cfg, n_features, total: n as f64 };
        let grown: Vec<(DecisionTree, Vec<f64>)> = (0..cfg.trees)
            .into_par_iter()
            .map(|t| {
                let mut r = rng::rng_from(rng::derive(seed, t as u64));
                let bootstrap: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
                builder.build(bootstrap, &mut r)
            })
            .collect();

        let mut importances = vec![0.0; n_features];
        let mut trees = Vec::with_capacity(grown.len());
        for (tree, imp) in grown {
            for (a, b) in importances.iter_mut().zip(&imp) {
                *a += b;
            }
            trees.push(tree);
        }
        let total: f64 = importances.iter().sum();
        if total > 0.0 {
            for v in &mut importances {
                *v /= total;
            }
        }
        Ok(RandomForest { task, config: *cfg, n_features, trees, feature_importances: importances, seed })
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), ForestError> {
        if x.len() != self.n_features {
            return Err(ForestError::DimensionMismatch { expected: self.n_features, got: x.len() });
        }
        Ok(())
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction, ForestError> {
        match self.task {
            Task::Regression => self.predict_value(x).map(Prediction::Value),
            Task::Classification { .. } => self.predict_class(x).map(Prediction::Class),
        }
    }

    /// Mean of the tree outputs.
    pub fn predict_value(&self, x: &[f64]) -> Result<f64, ForestError> {
        if self.task != Task::Regression {
            return Err(ForestError::WrongTask);
        }
        self.check_dim(x)?;
        let outputs: Vec<f64> = self.trees.iter().map(|t| t.leaf_value(x)[0]).collect();
        Ok(crate::numeric::mean(&outputs))
    }

    /// Summed leaf class fractions over all trees.
    pub fn class_scores(&self, x: &[f64]) -> Result<Vec<f64>, ForestError> {
        let Task::Classification { n_classes } = self.task else {
            return Err(ForestError::WrongTask);
        };
        self.check_dim(x)?;
        let mut scores = vec![0.0; n_classes];
        for t in &self.trees {
            for (s, v) in scores.iter_mut().zip(t.leaf_value(x)) {
                *s += v;
            }
        }
        Ok(scores)
    }

    /// Argmax of the summed histograms; ties go to the lowest class code.
    pub fn predict_class(&self, x: &[f64]) -> Result<usize, ForestError> {
        let scores = self.class_scores(x)?;
        let mut best = 0;
        for (c, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = c;
            }
        }
        Ok(best)
    }

    pub fn feature_importances(&self) -> &[f64] {
        &self.feature_importances
    }

    pub fn value_len(&self) -> usize {
        match self.task {
            Task::Regression => 1,
            Task::Classification { n_classes } => n_classes,
        }
    }

    pub fn is_well_formed(&self) -> bool {
        !self.trees.is_empty()
            && self.feature_importances.len() == self.n_features
            && self.trees.iter().all(|t| t.is_well_formed(self.n_features, self.value_len()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(value: Vec<f64>) -> DecisionTree {
        DecisionTree { nodes: vec![Node::Leaf { value }] }
    }

    #[test]
    fn separable_1d_classes_fit_exactly() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| if i < 5 { 0.0 } else { 1.0 }).collect();
        let task = Task::Classification { n_classes: 2 };
        let f = RandomForest::fit(&x, &y, task, &ForestConfig::classification(), 1).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert_eq!(f.predict_class(xi).unwrap(), *yi as usize);
        }
        assert!(f.is_well_formed());
    }

    #[test]
    fn constant_targets_give_single_leaves_and_zero_importance() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, 1.0]).collect();
        let y = vec![1.8; 8];
        let f = RandomForest::fit(&x, &y, Task::Regression, &ForestConfig::regression(), 4).unwrap();
        assert!(f.trees.iter().all(|t| t.nodes.len() == 1));
        assert_eq!(f.feature_importances, vec![0.0, 0.0]);
        assert_eq!(f.predict_value(&[100.0, -3.0]).unwrap(), 1.8);
    }

    #[test]
    fn single_leaf_forest_is_constant() {
        let f = RandomForest {
            task: Task::Regression,
            config: ForestConfig::regression(),
            n_features: 3,
            trees: vec![leaf(vec![1.8])],
            feature_importances: vec![0.0; 3],
            seed: 0,
        };
        assert_eq!(f.predict(&[0.0, 5.0, -1.0]).unwrap(), Prediction::Value(1.8));
        assert_eq!(
            f.predict(&[0.0]),
            Err(ForestError::DimensionMismatch { expected: 3, got: 1 })
        );
    }

    #[test]
    fn equal_votes_break_to_lowest_code() {
        let mut walk = vec![0.0; 6];
        walk[0] = 1.0;
        let mut run = vec![0.0; 6];
        run[1] = 1.0;
        let f = RandomForest {
            task: Task::Classification { n_classes: 6 },
            config: ForestConfig::classification(),
            n_features: 1,
            trees: vec![leaf(run), leaf(walk)],
            feature_importances: vec![0.0],
            seed: 0,
        };
        assert_eq!(f.predict_class(&[0.0]).unwrap(), 0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = vec![vec![0.0], vec![1.0]];
        let task = Task::Classification { n_classes: 2 };
        let cfg = ForestConfig::classification();
        assert_eq!(RandomForest::fit(&x[..1], &[0.0], task, &cfg, 0), Err(ForestError::TooFewSamples(1)));
        assert_eq!(RandomForest::fit(&x, &[0.0, 2.0], task, &cfg, 0), Err(ForestError::InvalidTarget(2.0)));
        let ragged = vec![vec![0.0], vec![1.0, 2.0]];
        assert!(matches!(
            RandomForest::fit(&ragged, &[0.0, 1.0], task, &cfg, 0),
            Err(ForestError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn candidate_counts() {
        let c = Task::Classification { n_classes: 6 };
        assert_eq!(MaxFeatures::Auto.resolve(8, Task::Regression), 3);
        assert_eq!(MaxFeatures::Auto.resolve(9, Task::Regression), 3);
        assert_eq!(MaxFeatures::Auto.resolve(20, c), 4);
        assert_eq!(MaxFeatures::Auto.resolve(1, c), 1);
    }

    #[test]
    fn depth_limit_is_respected() {
        let x: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..64).map(|i| ((i * 7) % 13) as f64).collect();
        let f = RandomForest::fit(&x, &y, Task::Regression, &ForestConfig::regression(), 2).unwrap();
        assert!(f.trees.iter().all(|t| t.depth() <= 5));
        assert!(f.is_well_formed());
    }
}
