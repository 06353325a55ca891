//! Online dictionary learning with accumulated sufficient statistics.
//!
//! The statistics `A = Σ ααᵀ` and `B = Σ xαᵀ` always hold the latest code of
//! every training image: when an image is revisited its previous code is
//! swapped out. Each visit lowers the surrogate
//! `Σ ½‖xᵢ − Dαᵢ‖² + λ‖αᵢ‖₁` (fresh code, then one exact block-coordinate
//! pass over the atoms), and every epoch ends by re-coding the whole set
//! against the current dictionary, so the empirical objective cannot rise
//! from one epoch to the next beyond solver tolerance.

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use super::{dot, sparse_code_with_gram, ClassDictionary, DictionaryError, LassoConfig};
use crate::data::MotionClass;
use crate::rng;

/// Atoms whose accumulated energy `A_jj` stays below this are re-seeded.
const UNUSED_ATOM: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DictionaryConfig {
    pub atoms: usize,
    pub lambda: f64,
    pub epochs: usize,
    pub lasso: LassoConfig,
    /// Append the per-class reconstruction errors to the forest features.
    pub raw_errors: bool,
    /// When at least 2, the forest's training features come from
    /// dictionaries that did not see the sample's track, using this many
    /// track folds.
    pub cross_fit: usize,
}

impl Default for DictionaryConfig {
    fn default() -> Self {
        DictionaryConfig {
            atoms: 16,
            lambda: 0.1,
            epochs: 10,
            lasso: LassoConfig::default(),
            raw_errors: false,
            cross_fit: 3,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    /// Mean objective over the training set; entry 0 is the initial
    /// dictionary, entry `e` the dictionary after epoch `e`.
    pub objectives: Vec<f64>,
    pub reseeded_atoms: usize,
}

/// Mean of `½‖x − Dα‖² + λ‖α‖₁` with every image optimally coded.
pub fn objective(images: &[&[f64]], dict: &ClassDictionary, cfg: &LassoConfig) -> f64 {
    let gram = dict.gram();
    let total: f64 = images
        .iter()
        .map(|x| sparse_code_with_gram(x, dict, &gram, cfg).map(|c| c.objective).unwrap_or(f64::NAN))
        .sum();
    total / images.len() as f64
}

struct Stats {
    k: usize,
    dim: usize,
    /// `K x K`, row-major.
    a: Vec<f64>,
    /// `B_j` stored contiguously per atom.
    b: Vec<f64>,
}

impl Stats {
    fn new(k: usize, dim: usize) -> Self {
        Stats { k, dim, a: vec![0.0; k * k], b: vec![0.0; k * dim] }
    }

    fn add(&mut self, x: &[f64], alpha: &[f64], sign: f64) {
        for (i, &ai) in alpha.iter().enumerate() {
            if ai == 0.0 {
                continue;
            }
            for (j, &aj) in alpha.iter().enumerate() {
                self.a[i * self.k + j] += sign * ai * aj;
            }
            let bi = &mut self.b[i * self.dim..(i + 1) * self.dim];
            for (b, &xv) in bi.iter_mut().zip(x) {
                *b += sign * ai * xv;
            }
        }
    }
}

/// One pass of exact block-coordinate minimization over the atoms, each
/// projected onto the unit ball.
fn update_atoms(atoms: &mut [f64], stats: &Stats, scratch: &mut [f64]) {
    let (k, dim) = (stats.k, stats.dim);
    for j in 0..k {
        let a_jj = stats.a[j * k + j];
        if a_jj < UNUSED_ATOM {
            continue;
        }
        // scratch = B_j - D A_j
        scratch.copy_from_slice(&stats.b[j * dim..(j + 1) * dim]);
        for l in 0..k {
            let a_lj = stats.a[l * k + j];
            if a_lj != 0.0 {
                let atom = &atoms[l * dim..(l + 1) * dim];
                for (s, d) in scratch.iter_mut().zip(atom) {
                    *s -= a_lj * d;
                }
            }
        }
        let atom = &mut atoms[j * dim..(j + 1) * dim];
        for (d, s) in atom.iter_mut().zip(scratch.iter()) {
            *d += s / a_jj;
        }
        let norm = dot(atom, atom).sqrt();
        if norm > 1.0 {
            for d in atom.iter_mut() {
                *d /= norm;
            }
        }
    }
}

/// Codes every image against `dict`, rebuilding the statistics from scratch.
/// Returns the mean objective and the per-image residual energy.
fn refresh(
    images: &[&[f64]],
    dict: &ClassDictionary,
    cfg: &LassoConfig,
    codes: &mut [Vec<f64>],
    stats: &mut Stats,
) -> (f64, Vec<f64>) {
    let gram = dict.gram();
    *stats = Stats::new(stats.k, stats.dim);
    let mut total = 0.0;
    let mut residuals = Vec::with_capacity(images.len());
    for (i, x) in images.iter().enumerate() {
        let code = sparse_code_with_gram(x, dict, &gram, cfg).expect("dimensions checked");
        total += code.objective;
        residuals.push(code.reconstruction_error);
        stats.add(x, &code.coefficients, 1.0);
        codes[i] = code.coefficients;
    }
    (total / images.len() as f64, residuals)
}

/// Learns a dictionary of `cfg.atoms` atoms, initialized from distinct
/// training images chosen with `seed`.
pub fn train_dictionary(
    class: MotionClass,
    images: &[&[f64]],
    cfg: &DictionaryConfig,
    seed: u64,
) -> Result<(ClassDictionary, TrainingTrace), DictionaryError> {
    let k = cfg.atoms;
    if k == 0 {
        return Err(DictionaryError::InvalidParameter("atom count must be positive".into()));
    }
    if images.len() < k {
        return Err(DictionaryError::TooFewImages { needed: k, got: images.len() });
    }
    let dim = images[0].len();
    if let Some(bad) = images.iter().find(|x| x.len() != dim) {
        return Err(DictionaryError::DimensionMismatch { image: bad.len(), atoms: dim });
    }

    let mut rng = rng::rng_from(seed);
    let mut atoms = Vec::with_capacity(k * dim);
    for i in index::sample(&mut rng, images.len(), k).into_iter() {
        let x = images[i];
        let norm = dot(x, x).sqrt();
        let scale = if norm > 1.0 { 1.0 / norm } else { 1.0 };
        atoms.extend(x.iter().map(|v| v * scale));
    }
    let mut dict = ClassDictionary::new(class, dim, cfg.lambda, atoms)?;

    let mut stats = Stats::new(k, dim);
    let mut codes = vec![Vec::new(); images.len()];
    let mut trace = TrainingTrace::default();
    let (obj, mut residuals) = refresh(images, &dict, &cfg.lasso, &mut codes, &mut stats);
    trace.objectives.push(obj);

    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut scratch = vec![0.0; dim];
    for _ in 0..cfg.epochs {
        trace.reseeded_atoms += reseed_unused(&mut dict, &stats, images, &residuals);

        order.shuffle(&mut rng);
        for &i in &order {
            let x = images[i];
            let gram = dict.gram();
            let code = sparse_code_with_gram(x, &dict, &gram, &cfg.lasso)?;
            let old = std::mem::replace(&mut codes[i], code.coefficients);
            stats.add(x, &old, -1.0);
            stats.add(x, &codes[i], 1.0);
            update_atoms(&mut dict.atoms, &stats, &mut scratch);
        }

        let (obj, res) = refresh(images, &dict, &cfg.lasso, &mut codes, &mut stats);
        residuals = res;
        trace.objectives.push(obj);
    }
    Ok((dict, trace))
}

/// Replaces atoms no image uses with the worst-reconstructed images. Unused
/// atoms carry no weight in any current code, so the surrogate is unchanged.
fn reseed_unused(
    dict: &mut ClassDictionary,
    stats: &Stats,
    images: &[&[f64]],
    residuals: &[f64],
) -> usize {
    let k = stats.k;
    let unused: Vec<usize> = (0..k).filter(|&j| stats.a[j * k + j] < UNUSED_ATOM).collect();
    if unused.is_empty() {
        return 0;
    }
    let mut worst: Vec<usize> = (0..images.len()).collect();
    worst.sort_by(|&a, &b| residuals[b].total_cmp(&residuals[a]).then(a.cmp(&b)));
    let mut reseeded = 0;
    for (j, &i) in unused.iter().zip(worst.iter()) {
        let x = images[i];
        let norm = dot(x, x).sqrt();
        if norm == 0.0 {
            continue;
        }
        let dim = dict.dim;
        for (d, v) in dict.atoms[j * dim..(j + 1) * dim].iter_mut().zip(x) {
            *d = v / norm;
        }
        reseeded += 1;
    }
    reseeded
}
