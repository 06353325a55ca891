use std::cmp::Ordering;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Criterion, ForestConfig, Task};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Mean target (regression) or class fractions (classification).
    Leaf { value: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    /// Root is node 0. Samples with `x[feature] <= threshold` go left.
    pub fn leaf_value(&self, x: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    /// Structural validity: children point forward, leaves are finite.
    pub fn is_well_formed(&self, n_features: usize, value_len: usize) -> bool {
        let mut referenced = vec![false; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            match node {
                Node::Leaf { value } => {
                    if value.len() != value_len || value.iter().any(|v| !v.is_finite()) {
                        return false;
                    }
                }
                Node::Split { feature, threshold, left, right } => {
                    if *feature >= n_features || !threshold.is_finite() {
                        return false;
                    }
                    for &c in [left, right] {
                        if c <= i || c >= self.nodes.len() || referenced[c] {
                            return false;
                        }
                        referenced[c] = true;
                    }
                }
            }
        }
        !self.nodes.is_empty() && referenced.iter().skip(1).all(|&r| r)
    }
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    decrease: f64,
    /// Samples sorted by the split feature; the first `n_left` go left.
    sorted: Vec<usize>,
    n_left: usize,
}

pub(super) struct TreeBuilder<'a> {
    pub x: &'a [Vec<f64>],
    pub y: &'a [f64],
    pub task: Task,
    pub cfg: &'a ForestConfig,
    pub n_features: usize,
    /// Size of the tree's bootstrap sample, the normalizer for importances.
    pub total: f64,
}

impl TreeBuilder<'_> {
    fn leaf(&self, samples: &[usize]) -> Node {
        let n = samples.len() as f64;
        let value = match self.task {
            Task::Regression => {
                let ys: Vec<f64> = samples.iter().map(|&i| self.y[i]).collect();
                vec![crate::numeric::mean(&ys)]
            }
            Task::Classification { n_classes } => {
                let mut counts = vec![0.0; n_classes];
                for &i in samples {
                    counts[self.y[i] as usize] += 1.0;
                }
                counts.iter().map(|c| c / n).collect()
            }
        };
        Node::Leaf { value }
    }

    fn impurity(&self, samples: &[usize]) -> f64 {
        let n = samples.len() as f64;
        match (self.task, self.cfg.criterion) {
            (Task::Classification { n_classes }, Criterion::Gini) => {
                let mut counts = vec![0.0; n_classes];
                for &i in samples {
                    counts[self.y[i] as usize] += 1.0;
                }
                gini(&counts, n)
            }
            _ => {
                let (s, s2) = samples.iter().fold((0.0, 0.0), |(s, s2), &i| {
                    let v = self.y[i];
                    (s + v, s2 + v * v)
                });
                (s2 / n - (s / n).powi(2)).max(0.0)
            }
        }
    }

    fn is_pure(&self, samples: &[usize]) -> bool {
        let first = self.y[samples[0]];
        samples.iter().all(|&i| self.y[i] == first)
    }

    /// Grows the tree depth-first; returns it with the per-feature weighted
    /// impurity decrease it achieved.
    pub fn build(&self, samples: Vec<usize>, rng: &mut Rng) -> (DecisionTree, Vec<f64>) {
        let mut nodes = Vec::new();
        let mut importances = vec![0.0; self.n_features];
        self.grow(samples, 0, rng, &mut nodes, &mut importances);
        (DecisionTree { nodes }, importances)
    }

    fn grow(
        &self,
        samples: Vec<usize>,
        depth: usize,
        rng: &mut Rng,
        nodes: &mut Vec<Node>,
        importances: &mut [f64],
    ) -> usize {
        let id = nodes.len();
        let stop = samples.len() < self.cfg.min_samples_split.max(2)
            || self.cfg.max_depth.is_some_and(|d| depth >= d)
            || self.is_pure(&samples);
        let split = if stop { None } else { self.best_split(&samples, rng) };
        let Some(split) = split else {
            nodes.push(self.leaf(&samples));
            return id;
        };
        importances[split.feature] += split.decrease;
        nodes.push(Node::Split { feature: split.feature, threshold: split.threshold, left: 0, right: 0 });
        let mut sorted = split.sorted;
        let right_samples = sorted.split_off(split.n_left);
        let left = self.grow(sorted, depth + 1, rng, nodes, importances);
        let right = self.grow(right_samples, depth + 1, rng, nodes, importances);
        if let Node::Split { left: l, right: r, .. } = &mut nodes[id] {
            *l = left;
            *r = right;
        }
        id
    }

    fn best_split(&self, samples: &[usize], rng: &mut Rng) -> Option<SplitChoice> {
        let mut features: Vec<usize> = (0..self.n_features).collect();
        features.shuffle(rng);
        let wanted = self.cfg.max_features.resolve(self.n_features, self.task);
        let parent = self.impurity(samples);
        let weight = samples.len() as f64 / self.total;

        let mut best: Option<SplitChoice> = None;
        let mut tried_valid = 0;
        for &f in &features {
            // Keep drawing past the quota until at least one feature can split.
            if tried_valid >= wanted && best.is_some() {
                break;
            }
            let mut sorted = samples.to_vec();
            sorted.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let lo = self.x[sorted[0]][f];
            let hi = self.x[sorted[sorted.len() - 1]][f];
            if lo == hi {
                continue;
            }
            tried_valid += 1;
            if let Some((threshold, n_left, child)) = self.scan(&sorted, f) {
                let decrease = (weight * (parent - child)).max(0.0);
                if best.as_ref().is_none_or(|b| decrease > b.decrease) {
                    best = Some(SplitChoice { feature: f, threshold, decrease, sorted, n_left });
                }
            }
        }
        best
    }

    /// Best threshold for one feature over samples sorted by it. Returns the
    /// threshold, left count and weighted child impurity.
    fn scan(&self, sorted: &[usize], f: usize) -> Option<(f64, usize, f64)> {
        let n = sorted.len();
        let nf = n as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut consider = |i: usize, child: f64| {
            let a = self.x[sorted[i - 1]][f];
            let b = self.x[sorted[i]][f];
            if a == b {
                return;
            }
            if best.as_ref().is_none_or(|(_, _, c)| child.total_cmp(c) == Ordering::Less) {
                let mut t = 0.5 * (a + b);
                if t >= b {
                    t = a;
                }
                best = Some((t, i, child));
            }
        };
        match (self.task, self.cfg.criterion) {
            (Task::Classification { n_classes }, Criterion::Gini) => {
                let mut right = vec![0.0; n_classes];
                for &i in sorted {
                    right[self.y[i] as usize] += 1.0;
                }
                let mut left = vec![0.0; n_classes];
                for i in 1..n {
                    let c = self.y[sorted[i - 1]] as usize;
                    left[c] += 1.0;
                    right[c] -= 1.0;
                    let nl = i as f64;
                    let nr = nf - nl;
                    let child = (nl * gini(&left, nl) + nr * gini(&right, nr)) / nf;
                    consider(i, child);
                }
            }
            _ => {
                let (mut rs, mut rs2) = sorted.iter().fold((0.0, 0.0), |(s, s2), &i| {
                    let v = self.y[i];
                    (s + v, s2 + v * v)
                });
                let (mut ls, mut ls2) = (0.0, 0.0);
                for i in 1..n {
                    let v = self.y[sorted[i - 1]];
                    ls += v;
                    ls2 += v * v;
                    rs -= v;
                    rs2 -= v * v;
                    let nl = i as f64;
                    let nr = nf - nl;
                    let var_l = (ls2 / nl - (ls / nl).powi(2)).max(0.0);
                    let var_r = (rs2 / nr - (rs / nr).powi(2)).max(0.0);
                    consider(i, (nl * var_l + nr * var_r) / nf);
                }
            }
        }
        best
    }
}

fn gini(counts: &[f64], n: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|c| (c / n).powi(2)).sum::<f64>()
}
