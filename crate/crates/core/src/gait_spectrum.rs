//! Stride length from the Doppler-over-distance signal.
//!
//! Three steps: Gaussian-weighted resampling of the non-uniform `(d_i, v_i)`
//! samples onto a uniform grid, Hann windowing with zero padding, and an FFT
//! whose strongest bin inside the step-frequency band gives the step
//! frequency. The stride is two steps.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::FrenetTarget;

/// Smallest resampled signal that still yields a usable spectrum.
pub const MIN_SAMPLES: usize = 16;

/// Kernel support in units of sigma; `exp(-18)` is below 1e-7.
const SUPPORT_SIGMAS: f64 = 6.0;

/// Denominator below which a grid point counts as a coverage hole.
const HOLE_WEIGHT: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectrumError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("distance span {span:.3} m is shorter than {needed:.3} m")]
    ShortSpan { span: f64, needed: f64 },
    #[error("signal has {got} samples, at least {MIN_SAMPLES} required")]
    TooFewSamples { got: usize },
    #[error("no grid point is covered by the input samples")]
    NoCoverage,
    #[error("invalid padding length {pad_to} for {len} samples (must be a power of two >= len)")]
    InvalidPadding { pad_to: usize, len: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("frequency band [{0}, {1}] contains no spectrum bin")]
    EmptyBand(f64, f64),
}

/// Uniformly sampled Doppler velocity over tangential distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampledSignal {
    pub d0: f64,
    pub delta_d: f64,
    pub values: Vec<f64>,
    /// Grid points filled by interpolation because no sample was in reach.
    pub holes: usize,
}

impl ResampledSignal {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn abscissa(&self, j: usize) -> f64 {
        self.d0 + j as f64 * self.delta_d
    }
}

/// One-sided magnitude spectrum over spatial frequency (1/m).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub magnitudes: Vec<f64>,
}

impl Spectrum {
    pub fn bin_width(&self) -> f64 {
        self.freqs.get(1).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Taper {
    Hann,
    /// No taper; only meant for tests and diagnostics.
    Rectangular,
}

/// Offset removed from the resampled signal before tapering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detrend {
    None,
    /// Subtract the mean, so the large zero-frequency term of the walking
    /// speed cannot leak into the stride band.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeakRefinement {
    /// Discrete argmax bin.
    None,
    /// Three-point parabolic interpolation around the argmax bin.
    Parabolic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrideConfig {
    pub delta_d: f64,
    pub sigma: f64,
    pub pad_to: usize,
    pub band: (f64, f64),
    pub taper: Taper,
    pub detrend: Detrend,
    pub refinement: PeakRefinement,
}

impl Default for StrideConfig {
    fn default() -> Self {
        StrideConfig {
            delta_d: 0.1,
            sigma: 0.03,
            pad_to: 4096,
            band: (0.8, 2.5),
            taper: Taper::Hann,
            detrend: Detrend::Mean,
            refinement: PeakRefinement::Parabolic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrideEstimate {
    /// Step frequency, 1/m.
    pub f_step: f64,
    pub l_step: f64,
    /// Stride length, two steps.
    pub l_s: f64,
    pub peak_magnitude: f64,
    pub band: (f64, f64),
    /// Peak is below three times the band median.
    pub low_confidence: bool,
}

#[inline]
fn gaussian(d: f64, mu: f64, two_sigma_sq: f64) -> f64 {
    let x = d - mu;
    (-(x * x) / two_sigma_sq).exp()
}

/// Gaussian-kernel weighted mean of the Doppler samples on the uniform grid
/// `d0 + j * delta_d` covering `[min d, max d]`.
pub fn resample_gaussian(
    points: &[FrenetTarget],
    delta_d: f64,
    sigma: f64,
    min_points: usize,
) -> Result<ResampledSignal, SpectrumError> {
    if !(delta_d > 0.0 && delta_d.is_finite()) || !(sigma > 0.0 && sigma.is_finite()) {
        return Err(SpectrumError::InvalidParameter(format!(
            "delta_d = {delta_d}, sigma = {sigma}"
        )));
    }
    if points.len() < min_points.max(1) {
        return Err(SpectrumError::TooFewPoints { needed: min_points.max(1), got: points.len() });
    }
    let mut sorted: Vec<(f64, f64)> = points.iter().map(|p| (p.d, p.v)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let d_min = sorted[0].0;
    let d_max = sorted[sorted.len() - 1].0;
    let span = d_max - d_min;
    if span < 10.0 * delta_d {
        return Err(SpectrumError::ShortSpan { span, needed: 10.0 * delta_d });
    }
    let m = (span / delta_d + 1e-9).floor() as usize + 1;
    if m < MIN_SAMPLES {
        return Err(SpectrumError::TooFewSamples { got: m });
    }

    let reach = SUPPORT_SIGMAS * sigma;
    let two_sigma_sq = 2.0 * sigma * sigma;
    let mut values: Vec<Option<f64>> = Vec::with_capacity(m);
    for j in 0..m {
        let mu = d_min + j as f64 * delta_d;
        let lo = sorted.partition_point(|p| p.0 < mu - reach);
        let hi = sorted.partition_point(|p| p.0 <= mu + reach);
        let (mut num, mut den) = (0.0, 0.0);
        for &(d, v) in &sorted[lo..hi] {
            let w = gaussian(d, mu, two_sigma_sq);
            num += v * w;
            den += w;
        }
        values.push((den >= HOLE_WEIGHT).then(|| num / den));
    }
    let holes = values.iter().filter(|v| v.is_none()).count();
    let values = fill_holes(&values).ok_or(SpectrumError::NoCoverage)?;
    Ok(ResampledSignal { d0: d_min, delta_d, values, holes })
}

/// Linear interpolation across missing entries, constant extrapolation at
/// the ends.
fn fill_holes(values: &[Option<f64>]) -> Option<Vec<f64>> {
    let known: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_some()).collect();
    let first = *known.first()?;
    let last = *known.last()?;
    let mut out = vec![0.0; values.len()];
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = match values[i] {
            Some(v) => v,
            None if i < first => values[first].unwrap(),
            None if i > last => values[last].unwrap(),
            None => {
                let k = known.partition_point(|&j| j < i);
                let (a, b) = (known[k - 1], known[k]);
                let (va, vb) = (values[a].unwrap(), values[b].unwrap());
                va + (vb - va) * (i - a) as f64 / (b - a) as f64
            }
        };
    }
    Some(out)
}

pub fn hann(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let denom = (len - 1) as f64;
    (0..len)
        .map(|j| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * j as f64 / denom).cos()))
        .collect()
}

/// Hann-windowed, zero-padded magnitude spectrum (non-negative half).
pub fn spectrum(signal: &ResampledSignal, pad_to: usize) -> Result<Spectrum, SpectrumError> {
    spectrum_with_taper(signal, pad_to, Taper::Hann)
}

pub fn spectrum_with_taper(
    signal: &ResampledSignal,
    pad_to: usize,
    taper: Taper,
) -> Result<Spectrum, SpectrumError> {
    let m = signal.len();
    if m < MIN_SAMPLES {
        return Err(SpectrumError::TooFewSamples { got: m });
    }
    if pad_to < m || !pad_to.is_power_of_two() {
        return Err(SpectrumError::InvalidPadding { pad_to, len: m });
    }
    let window = match taper {
        Taper::Hann => hann(m),
        Taper::Rectangular => vec![1.0; m],
    };
    let mut buf: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); pad_to];
    for (j, (v, w)) in signal.values.iter().zip(&window).enumerate() {
        buf[j] = Complex::new(v * w, 0.0);
    }
    FftPlanner::new().plan_fft_forward(pad_to).process(&mut buf);
    let half = pad_to / 2 + 1;
    let df = 1.0 / (pad_to as f64 * signal.delta_d);
    Ok(Spectrum {
        freqs: (0..half).map(|k| k as f64 * df).collect(),
        magnitudes: buf[..half].iter().map(|c| c.norm()).collect(),
    })
}

/// Strongest bin inside the closed band; the lowest frequency wins ties.
pub fn extract_stride(
    sp: &Spectrum,
    band: (f64, f64),
    refinement: PeakRefinement,
) -> Result<StrideEstimate, SpectrumError> {
    let (f_min, f_max) = band;
    if !(f_min > 0.0 && f_min <= f_max) {
        return Err(SpectrumError::InvalidParameter(format!("band [{f_min}, {f_max}]")));
    }
    let lo = sp.freqs.partition_point(|&f| f < f_min);
    let hi = sp.freqs.partition_point(|&f| f <= f_max);
    if lo >= hi {
        return Err(SpectrumError::EmptyBand(f_min, f_max));
    }
    let mut k = lo;
    for i in lo + 1..hi {
        if sp.magnitudes[i] > sp.magnitudes[k] {
            k = i;
        }
    }
    let peak = sp.magnitudes[k];
    let mut f_step = sp.freqs[k];
    if refinement == PeakRefinement::Parabolic && k > 0 && k + 1 < sp.magnitudes.len() {
        let (a, b, c) = (sp.magnitudes[k - 1], peak, sp.magnitudes[k + 1]);
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            let offset = (0.5 * (a - c) / denom).clamp(-1.0, 1.0);
            f_step = (sp.freqs[k] + offset * sp.bin_width()).clamp(f_min, f_max);
        }
    }

    let mut in_band: Vec<f64> = sp.magnitudes[lo..hi].to_vec();
    in_band.sort_by(f64::total_cmp);
    let mid = in_band.len() / 2;
    let median = if in_band.len() % 2 == 1 {
        in_band[mid]
    } else {
        0.5 * (in_band[mid - 1] + in_band[mid])
    };

    let l_step = 1.0 / f_step;
    Ok(StrideEstimate {
        f_step,
        l_step,
        l_s: 2.0 * l_step,
        peak_magnitude: peak,
        band,
        low_confidence: peak < 3.0 * median,
    })
}

/// The full chain for one window's Frenet targets.
pub fn estimate_stride(
    points: &[FrenetTarget],
    cfg: &StrideConfig,
    min_points: usize,
) -> Result<StrideEstimate, SpectrumError> {
    let mut rs = resample_gaussian(points, cfg.delta_d, cfg.sigma, min_points)?;
    if cfg.detrend == Detrend::Mean {
        let m = crate::numeric::mean(&rs.values);
        rs.values.iter_mut().for_each(|v| *v -= m);
    }
    let pad_to = cfg.pad_to.max(rs.len().next_power_of_two());
    let sp = spectrum_with_taper(&rs, pad_to, cfg.taper)?;
    extract_stride(&sp, cfg.band, cfg.refinement)
}
