//! Class-specific sparse dictionaries over shift-invariant grid spectra.
//!
//! Each motion class gets its own dictionary learned from the 2D FFT
//! magnitudes of its training grids. A new grid is sparse coded against every
//! dictionary and assigned to the class that reconstructs it with the lowest
//! mean squared error; the decision enters the forest as a one-hot vector.

mod lasso;
mod learn;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::MotionClass;
use crate::features::DopplerGrid;

pub use lasso::{lasso_gram, soft_threshold, LassoConfig};
pub use learn::{objective, train_dictionary, DictionaryConfig, TrainingTrace};

/// Reconstruction errors closer than this are treated as a tie.
pub const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DictionaryError {
    #[error("dimension mismatch: image has {image} entries, dictionary atoms {atoms}")]
    DimensionMismatch { image: usize, atoms: usize },
    #[error("need at least {needed} training images, got {got}")]
    TooFewImages { needed: usize, got: usize },
    #[error("invalid dictionary parameter: {0}")]
    InvalidParameter(String),
    #[error("no dictionaries to predict with")]
    NoDictionaries,
}

/// Centred, L2-normalized 2D FFT magnitude of a grid, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralImage {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl SpectralImage {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Un-normalized centred magnitude spectrum.
fn fft_magnitude(grid: &DopplerGrid) -> Vec<f64> {
    let (rows, cols) = (grid.rows, grid.cols);
    let mut buf: Vec<Complex<f64>> = grid.cells.iter().map(|&v| Complex::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft_forward(cols);
    for row in buf.chunks_exact_mut(cols) {
        row_fft.process(row);
    }
    let col_fft = planner.plan_fft_forward(rows);
    let mut column = vec![Complex::new(0.0, 0.0); rows];
    for c in 0..cols {
        for r in 0..rows {
            column[r] = buf[r * cols + c];
        }
        col_fft.process(&mut column);
        for r in 0..rows {
            buf[r * cols + c] = column[r];
        }
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        let sr = (r + rows / 2) % rows;
        for c in 0..cols {
            let sc = (c + cols / 2) % cols;
            out[sr * cols + sc] = buf[r * cols + c].norm();
        }
    }
    out
}

/// Magnitudes discard the phase, so circular shifts of the grid give the
/// same image.
pub fn spectral_image(grid: &DopplerGrid) -> SpectralImage {
    let mut values = fft_magnitude(grid);
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in &mut values {
            *v /= norm;
        }
    }
    SpectralImage { rows: grid.rows, cols: grid.cols, values }
}

/// Atoms of one class, stored atom after atom (column-major `P x K`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDictionary {
    pub class: MotionClass,
    pub dim: usize,
    pub n_atoms: usize,
    pub lambda: f64,
    pub atoms: Vec<f64>,
}

impl ClassDictionary {
    pub fn new(
        class: MotionClass,
        dim: usize,
        lambda: f64,
        atoms: Vec<f64>,
    ) -> Result<Self, DictionaryError> {
        if dim == 0 || atoms.is_empty() || !atoms.len().is_multiple_of(dim) {
            return Err(DictionaryError::InvalidParameter(format!(
                "{} atom values for dimension {dim}",
                atoms.len()
            )));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(DictionaryError::InvalidParameter(format!("lambda = {lambda}")));
        }
        Ok(ClassDictionary { class, dim, n_atoms: atoms.len() / dim, lambda, atoms })
    }

    pub fn atom(&self, j: usize) -> &[f64] {
        &self.atoms[j * self.dim..(j + 1) * self.dim]
    }

    pub fn gram(&self) -> Vec<f64> {
        let k = self.n_atoms;
        let mut g = vec![0.0; k * k];
        for i in 0..k {
            for j in i..k {
                let v = dot(self.atom(i), self.atom(j));
                g[i * k + j] = v;
                g[j * k + i] = v;
            }
        }
        g
    }

    pub fn correlations(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_atoms).map(|j| dot(self.atom(j), x)).collect()
    }

    pub fn reconstruct(&self, alpha: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (j, &a) in alpha.iter().enumerate() {
            if a != 0.0 {
                for (o, d) in out.iter_mut().zip(self.atom(j)) {
                    *o += a * d;
                }
            }
        }
        out
    }
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseCode {
    pub coefficients: Vec<f64>,
    /// `(1/P) ‖x − Dα‖²`.
    pub reconstruction_error: f64,
    /// `½‖x − Dα‖² + λ‖α‖₁`.
    pub objective: f64,
    pub converged: bool,
    pub sweeps: usize,
}

/// Sparse code with precomputed `DᵀD`, for coding many images against one
/// dictionary.
pub fn sparse_code_with_gram(
    x: &[f64],
    dict: &ClassDictionary,
    gram: &[f64],
    cfg: &LassoConfig,
) -> Result<SparseCode, DictionaryError> {
    if x.len() != dict.dim {
        return Err(DictionaryError::DimensionMismatch { image: x.len(), atoms: dict.dim });
    }
    let corr = dict.correlations(x);
    let (alpha, converged, sweeps) = lasso_gram(gram, &corr, dict.lambda, cfg);
    let recon = dict.reconstruct(&alpha);
    let rss: f64 = x.iter().zip(&recon).map(|(a, b)| (a - b) * (a - b)).sum();
    let l1: f64 = alpha.iter().map(|a| a.abs()).sum();
    Ok(SparseCode {
        reconstruction_error: rss / dict.dim as f64,
        objective: 0.5 * rss + dict.lambda * l1,
        coefficients: alpha,
        converged,
        sweeps,
    })
}

pub fn sparse_code(
    x: &[f64],
    dict: &ClassDictionary,
    cfg: &LassoConfig,
) -> Result<SparseCode, DictionaryError> {
    sparse_code_with_gram(x, dict, &dict.gram(), cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryPrediction {
    pub class: MotionClass,
    /// Indexed by class code.
    pub one_hot: [f64; MotionClass::COUNT],
    /// Reconstruction error per class code; `None` where no dictionary exists.
    pub errors: [Option<f64>; MotionClass::COUNT],
}

/// Lowest reconstruction error wins; near-ties go to the lowest class code.
pub fn dictionary_predict(
    x: &[f64],
    dicts: &[ClassDictionary],
    cfg: &LassoConfig,
) -> Result<DictionaryPrediction, DictionaryError> {
    let grams: Vec<Vec<f64>> = dicts.iter().map(ClassDictionary::gram).collect();
    dictionary_predict_with_grams(x, dicts, &grams, cfg)
}

pub fn dictionary_predict_with_grams(
    x: &[f64],
    dicts: &[ClassDictionary],
    grams: &[Vec<f64>],
    cfg: &LassoConfig,
) -> Result<DictionaryPrediction, DictionaryError> {
    if dicts.is_empty() {
        return Err(DictionaryError::NoDictionaries);
    }
    let mut errors = [None; MotionClass::COUNT];
    for (dict, gram) in dicts.iter().zip(grams) {
        let code = sparse_code_with_gram(x, dict, gram, cfg)?;
        errors[dict.class.code()] = Some(code.reconstruction_error);
    }
    let mut best: Option<(usize, f64)> = None;
    for (code, err) in errors.iter().enumerate() {
        if let Some(e) = *err {
            if best.is_none_or(|(_, b)| e < b - TIE_EPS) {
                best = Some((code, e));
            }
        }
    }
    let (code, _) = best.expect("at least one dictionary");
    let mut one_hot = [0.0; MotionClass::COUNT];
    one_hot[code] = 1.0;
    Ok(DictionaryPrediction {
        class: MotionClass::from_code(code).expect("valid class code"),
        one_hot,
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: Vec<f64>) -> Vec<f64> {
        let n = dot(&v, &v).sqrt();
        v.into_iter().map(|x| x / n).collect()
    }

    fn dict(class: MotionClass, atoms: &[Vec<f64>], lambda: f64) -> ClassDictionary {
        let dim = atoms[0].len();
        ClassDictionary::new(class, dim, lambda, atoms.concat()).unwrap()
    }

    #[test]
    fn impulse_grid_has_flat_spectrum() {
        let mut cells = vec![0.0; 4 * 8];
        cells[9] = 1.0;
        let img = spectral_image(&DopplerGrid::from_cells(4, 8, cells));
        let expected = 1.0 / (32f64).sqrt();
        assert!(img.values.iter().all(|v| (v - expected).abs() < 1e-12));
    }

    #[test]
    fn zero_grid_gives_zero_image() {
        let img = spectral_image(&DopplerGrid::from_cells(4, 8, vec![0.0; 32]));
        assert!(img.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dc_lands_in_the_centre() {
        let img = spectral_image(&DopplerGrid::from_cells(4, 8, vec![0.5; 32]));
        assert!((img.values[2 * 8 + 4] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn atom_self_reconstruction() {
        let a = unit(vec![1.0, 2.0, 0.0, -1.0]);
        let b = unit(vec![0.0, 1.0, 1.0, 1.0]);
        let d = dict(MotionClass::Walk, &[a.clone(), b], 1e-9);
        let code = sparse_code(&a, &d, &LassoConfig::default()).unwrap();
        assert!(code.converged);
        assert!((code.coefficients[0] - 1.0).abs() < 1e-6);
        assert!(code.coefficients[1].abs() < 1e-6);
        assert!(code.reconstruction_error < 1e-12);
    }

    #[test]
    fn large_lambda_gives_null_code() {
        let a = unit(vec![1.0, 2.0, 0.0, -1.0]);
        let b = unit(vec![0.0, 1.0, 1.0, 1.0]);
        let x = unit(vec![0.3, 0.1, 0.9, 0.2]);
        let d0 = dict(MotionClass::Walk, &[a.clone(), b.clone()], 1.0);
        let lambda_max = d0.correlations(&x).iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let d = dict(MotionClass::Walk, &[a, b], lambda_max);
        let code = sparse_code(&x, &d, &LassoConfig::default()).unwrap();
        assert_eq!(code.coefficients, vec![0.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let d = dict(MotionClass::Walk, &[vec![1.0, 0.0]], 0.1);
        assert!(matches!(
            sparse_code(&[1.0, 0.0, 0.0], &d, &LassoConfig::default()),
            Err(DictionaryError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn predicts_class_owning_the_atom() {
        let walk = dict(MotionClass::Walk, &[unit(vec![1.0, 0.0, 0.0, 1.0])], 1e-6);
        let run = dict(MotionClass::Run, &[unit(vec![0.0, 1.0, 1.0, 0.0])], 1e-6);
        let x = unit(vec![0.0, 1.0, 1.0, 0.0]);
        let p = dictionary_predict(&x, &[walk, run], &LassoConfig::default()).unwrap();
        assert_eq!(p.class, MotionClass::Run);
        assert_eq!(p.one_hot, [0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(p.errors[5].is_none());
    }

    #[test]
    fn ties_go_to_lowest_class_code() {
        let atom = unit(vec![1.0, 1.0]);
        let jump = dict(MotionClass::Jump, std::slice::from_ref(&atom), 0.1);
        let run = dict(MotionClass::Run, &[atom], 0.1);
        let p = dictionary_predict(&[1.0, 0.0], &[jump, run], &LassoConfig::default()).unwrap();
        assert_eq!(p.class, MotionClass::Run);
        assert_eq!(p.one_hot.iter().sum::<f64>(), 1.0);
        assert!(dictionary_predict(&[1.0], &[], &LassoConfig::default()).is_err());
    }
}
