//! Slow, straightforward reimplementations used as references by the
//! acceptance checks.

use std::f64::consts::PI;

/// Orientation histogram built from an explicitly padded copy of the grid,
/// with each vote weighted by its circular distance to every bin centre.
pub fn hog(rows: usize, cols: usize, cells: &[f64], bins: usize) -> Vec<f64> {
    let (pr, pc) = (rows + 2, cols + 2);
    let mut padded = vec![0.0; pr * pc];
    for r in 0..pr {
        for c in 0..pc {
            let sr = r.clamp(1, rows) - 1;
            let sc = c.clamp(1, cols) - 1;
            padded[r * pc + c] = cells[sr * cols + sc];
        }
    }
    let width = PI / bins as f64;
    let mut hist = vec![0.0; bins];
    for r in 1..=rows {
        for c in 1..=cols {
            let gx = padded[r * pc + c + 1] - padded[r * pc + c - 1];
            let gy = padded[(r + 1) * pc + c] - padded[(r - 1) * pc + c];
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let theta = gy.atan2(gx).rem_euclid(PI);
            for (b, h) in hist.iter_mut().enumerate() {
                let centre = (b as f64 + 0.5) * width;
                let diff = (theta - centre).abs();
                let dist = diff.min(PI - diff);
                *h += mag * (1.0 - dist / width).max(0.0);
            }
        }
    }
    let total: f64 = hist.iter().sum();
    if total > 0.0 {
        hist.iter().map(|h| h / total).collect()
    } else {
        vec![1.0 / bins as f64; bins]
    }
}

/// `[mu2, mu3, mu4, abs_mu1]` and, for each, the sum of absolute terms that
/// sets its rounding scale.
pub fn moments(values: &[f64]) -> ([f64; 4], [f64; 4]) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let norm = n - 1.0;
    let central = |k: i32| values.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / norm;
    let scale = |k: i32| values.iter().map(|v| (v - mean).abs().powi(k)).sum::<f64>() / norm;
    (
        [central(2), central(3), central(4), scale(1)],
        [scale(2), scale(3), scale(4), scale(1)],
    )
}

pub struct Metrics {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
}

/// Per-class counts taken directly from the label lists; F1 from counts.
pub fn metrics(classes: usize, truth: &[usize], predicted: &[usize]) -> Metrics {
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let pairs: Vec<(usize, usize)> = truth.iter().copied().zip(predicted.iter().copied()).collect();
    let mut m = Metrics {
        precision: Vec::new(),
        recall: Vec::new(),
        f1: Vec::new(),
        macro_precision: 0.0,
        macro_recall: 0.0,
        macro_f1: 0.0,
        accuracy: frac(pairs.iter().filter(|(t, p)| t == p).count(), pairs.len()),
    };
    let mut present = 0;
    for c in 0..classes {
        let tp = pairs.iter().filter(|&&(t, p)| t == c && p == c).count();
        let fp = pairs.iter().filter(|&&(t, p)| t != c && p == c).count();
        let fn_ = pairs.iter().filter(|&&(t, p)| t == c && p != c).count();
        m.precision.push(frac(tp, tp + fp));
        m.recall.push(frac(tp, tp + fn_));
        m.f1.push(frac(2 * tp, 2 * tp + fp + fn_));
        if tp + fn_ > 0 {
            present += 1;
            m.macro_precision += m.precision[c];
            m.macro_recall += m.recall[c];
            m.macro_f1 += m.f1[c];
        }
    }
    if present > 0 {
        let p = present as f64;
        m.macro_precision /= p;
        m.macro_recall /= p;
        m.macro_f1 /= p;
    }
    m
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))?;
        if a[pivot * n + col].abs() < 1e-14 {
            return None;
        }
        for k in 0..n {
            a.swap(col * n + k, pivot * n + k);
        }
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row * n + col] / a[col * n + col];
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row * n + k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row * n + row];
    }
    Some(x)
}

/// `½‖x − Dα‖² + λ‖α‖₁` with `D` stored atom after atom.
pub fn lasso_objective(x: &[f64], atoms: &[f64], alpha: &[f64], lambda: f64) -> f64 {
    let p = x.len();
    let mut rss = 0.0;
    for i in 0..p {
        let recon: f64 = alpha.iter().enumerate().map(|(j, a)| a * atoms[j * p + i]).sum();
        rss += (x[i] - recon).powi(2);
    }
    0.5 * rss + lambda * alpha.iter().map(|a| a.abs()).sum::<f64>()
}

/// Global Lasso minimum by enumerating every support and sign pattern: for
/// each, the stationarity equations `G_SS α_S = Dᵀ_S x − λ s` are solved and
/// the solution kept if its signs agree with `s`.
pub fn lasso_exhaustive(x: &[f64], atoms: &[f64], lambda: f64) -> (Vec<f64>, f64) {
    let p = x.len();
    let k = atoms.len() / p;
    let atom = |j: usize| &atoms[j * p..(j + 1) * p];
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
    let mut best = (vec![0.0; k], lasso_objective(x, atoms, &vec![0.0; k], lambda));
    let patterns = 3usize.pow(k as u32);
    for code in 1..patterns {
        // Digit 0: off support, 1: positive, 2: negative.
        let mut signs = Vec::new();
        let mut c = code;
        for j in 0..k {
            match c % 3 {
                1 => signs.push((j, 1.0)),
                2 => signs.push((j, -1.0)),
                _ => {}
            }
            c /= 3;
        }
        let m = signs.len();
        let mut g = vec![0.0; m * m];
        let mut rhs = vec![0.0; m];
        for (a, &(i, s)) in signs.iter().enumerate() {
            rhs[a] = dot(atom(i), x) - lambda * s;
            for (b, &(j, _)) in signs.iter().enumerate() {
                g[a * m + b] = dot(atom(i), atom(j));
            }
        }
        let Some(sol) = solve(g, rhs) else { continue };
        if sol.iter().zip(&signs).any(|(v, &(_, s))| v * s <= 0.0) {
            continue;
        }
        let mut alpha = vec![0.0; k];
        for (v, &(j, _)) in sol.iter().zip(&signs) {
            alpha[j] = *v;
        }
        let obj = lasso_objective(x, atoms, &alpha, lambda);
        if obj < best.1 {
            best = (alpha, obj);
        }
    }
    best
}

/// Largest violation of the Lasso optimality conditions.
pub fn kkt_residual(x: &[f64], atoms: &[f64], alpha: &[f64], lambda: f64) -> f64 {
    let p = x.len();
    let residual: Vec<f64> = (0..p)
        .map(|i| x[i] - alpha.iter().enumerate().map(|(j, a)| a * atoms[j * p + i]).sum::<f64>())
        .collect();
    alpha
        .iter()
        .enumerate()
        .map(|(j, &a)| {
            let g: f64 = atoms[j * p..(j + 1) * p].iter().zip(&residual).map(|(d, r)| d * r).sum();
            if a != 0.0 {
                (g - lambda * a.signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}
