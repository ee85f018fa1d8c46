//! Spectral/statistical featurization of windows and the z-score
//! normalizer fitted on training features.
//!
//! Per-axis layout (13 values with the default config):
//! `[mean, std, rms, peak1_freq_hz, peak1_mag, peak2_freq_hz, peak2_mag,
//! band_power_1 .. band_power_6]`, axes concatenated in x, y, z (then
//! gyro x, y, z) order. 3 axes × 13 = the 39-dimensional classifier input.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Sample;
use crate::windowing::Window;

/// Std floor used when fitting the normalizer.
pub const STD_EPSILON: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Taper {
    /// No taper; keeps bin-aligned sinusoids exact for tests.
    Rectangular,
    /// Hann taper; reduces leakage so nearby gait peaks resolve.
    Hann,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// FFT length; power of two, at least the window sample count.
    pub n_fft: usize,
    /// Spectral peaks kept per axis.
    pub peaks_k: usize,
    /// Half-open frequency intervals `[lo, hi)` in Hz, ascending and
    /// non-overlapping.
    pub bands: Vec<(f64, f64)>,
    pub taper: Taper,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig::default_for_rate(100)
    }
}

impl FeatureConfig {
    /// Default analysis setup: 256-point Hann FFT, two peaks, and octave-ish
    /// bands up to the Nyquist frequency. Rates below 32 Hz get fewer bands
    /// (band edges above Nyquist are dropped), shrinking the feature vector
    /// accordingly.
    pub fn default_for_rate(rate_hz: u32) -> FeatureConfig {
        let nyquist = f64::from(rate_hz) / 2.0;
        let edges = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0];
        let mut bands = Vec::new();
        for w in edges.windows(2) {
            if w[1] < nyquist {
                bands.push((w[0], w[1]));
            }
        }
        let last_lo = bands.last().map_or(edges[0], |b| b.1);
        if last_lo < nyquist {
            bands.push((last_lo, nyquist));
        }
        FeatureConfig {
            n_fft: 256,
            peaks_k: 2,
            bands,
            taper: Taper::Hann,
        }
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        if !self.n_fft.is_power_of_two() || self.n_fft < 2 {
            return Err(FeatureError::InvalidConfig {
                reason: format!("n_fft {} is not a power of two >= 2", self.n_fft),
            });
        }
        if self.peaks_k == 0 {
            return Err(FeatureError::InvalidConfig {
                reason: "peaks_k must be >= 1".into(),
            });
        }
        let mut prev_hi = 0.0f64;
        for &(lo, hi) in &self.bands {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi && lo >= prev_hi) {
                return Err(FeatureError::InvalidConfig {
                    reason: format!("band [{lo}, {hi}) not ascending/non-overlapping within (0, ..)"),
                });
            }
            prev_hi = hi;
        }
        Ok(())
    }

    /// Feature count per axis for this config.
    pub fn features_per_axis(&self) -> usize {
        3 + 2 * self.peaks_k + self.bands.len()
    }
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("empty series")]
    EmptySeries,
    #[error("series of {len} samples exceeds n_fft {n_fft}")]
    SeriesTooLong { len: usize, n_fft: usize },
    #[error("invalid feature config: {reason}")]
    InvalidConfig { reason: String },
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Root mean square of a series: sqrt(mean of squares).
pub fn rms(series: &[f64]) -> Result<f64, FeatureError> {
    if series.is_empty() {
        return Err(FeatureError::EmptySeries);
    }
    let sum_sq: f64 = series.iter().map(|x| x * x).sum();
    Ok((sum_sq / series.len() as f64).sqrt())
}

fn taper_value(taper: Taper, i: usize, n: usize) -> f64 {
    match taper {
        Taper::Rectangular => 1.0,
        Taper::Hann => {
            if n < 2 {
                1.0
            } else {
                0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / (n - 1) as f64).cos())
            }
        }
    }
}

/// Iterative radix-2 FFT with per-stage twiddle tables.
fn fft_in_place(buf: &mut [Complex64]) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let twiddles: Vec<Complex64> = (0..half)
            .map(|k| {
                let ang = -std::f64::consts::TAU * k as f64 / len as f64;
                Complex64::new(ang.cos(), ang.sin())
            })
            .collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let u = buf[start + k];
                let v = buf[start + k + half] * twiddles[k];
                buf[start + k] = u + v;
                buf[start + k + half] = u - v;
            }
        }
        len <<= 1;
    }
}

/// One-sided magnitude spectrum of a series: mean removal, taper, zero-pad
/// to `n_fft`, FFT; returns |X_k| for k = 0 ..= n_fft/2.
pub fn fft_magnitude(series: &[f64], cfg: &FeatureConfig) -> Result<Vec<f64>, FeatureError> {
    cfg.validate()?;
    if series.is_empty() {
        return Err(FeatureError::EmptySeries);
    }
    if series.len() > cfg.n_fft {
        return Err(FeatureError::SeriesTooLong {
            len: series.len(),
            n_fft: cfg.n_fft,
        });
    }
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.n_fft];
    for (i, &x) in series.iter().enumerate() {
        buf[i] = Complex64::new((x - mean) * taper_value(cfg.taper, i, n), 0.0);
    }
    fft_in_place(&mut buf);
    Ok(buf[..=cfg.n_fft / 2].iter().map(|c| c.norm()).collect())
}

/// The `k` largest strict local maxima over interior bins (DC and Nyquist
/// excluded), as `(freq_hz, magnitude)` in descending magnitude, ties
/// broken toward the lower frequency, padded with `(0, 0)`.
pub fn spectral_peaks(spectrum: &[f64], rate_hz: u32, k: usize) -> Vec<(f64, f64)> {
    let n_fft = (spectrum.len().saturating_sub(1)) * 2;
    let mut maxima: Vec<(usize, f64)> = Vec::new();
    for i in 1..spectrum.len().saturating_sub(1) {
        if spectrum[i] > spectrum[i - 1] && spectrum[i] > spectrum[i + 1] {
            maxima.push((i, spectrum[i]));
        }
    }
    maxima.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    (0..k)
        .map(|j| {
            maxima
                .get(j)
                .map(|&(i, m)| (i as f64 * f64::from(rate_hz) / n_fft as f64, m))
                .unwrap_or((0.0, 0.0))
        })
        .collect()
}

/// Per-band sum of |X_k|² over bins whose center frequency lies in
/// `[lo, hi)`, divided by n_fft. The DC bin never contributes.
pub fn band_power(spectrum: &[f64], rate_hz: u32, bands: &[(f64, f64)]) -> Vec<f64> {
    let n_fft = (spectrum.len().saturating_sub(1)) * 2;
    bands
        .iter()
        .map(|&(lo, hi)| {
            let mut acc = 0.0;
            for (i, &m) in spectrum.iter().enumerate().skip(1) {
                let f = i as f64 * f64::from(rate_hz) / n_fft as f64;
                if f >= lo && f < hi {
                    acc += m * m;
                }
            }
            acc / n_fft as f64
        })
        .collect()
}

fn axis_series(samples: &[Sample], axis: usize) -> Vec<f64> {
    samples
        .iter()
        .map(|s| {
            if axis < 3 {
                s.accel[axis]
            } else {
                s.gyro.expect("gyro presence validated by Recording")[axis - 3]
            }
        })
        .collect()
}

/// Features for a raw sample slice. Mean/std/rms come from the raw series;
/// spectral fields from the detrended, tapered spectrum. Axis count (3 or
/// 6) follows gyro presence.
pub fn extract_features_from_samples(
    samples: &[Sample],
    rate_hz: u32,
    cfg: &FeatureConfig,
) -> Result<Vec<f64>, FeatureError> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(FeatureError::EmptySeries);
    }
    let axes = if samples[0].gyro.is_some() { 6 } else { 3 };
    let mut out = Vec::with_capacity(cfg.features_per_axis() * axes);
    for axis in 0..axes {
        let series = axis_series(samples, axis);
        let n = series.len() as f64;
        let mean = series.iter().sum::<f64>() / n;
        let var = series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        out.push(mean);
        out.push(var.sqrt());
        out.push(rms(&series)?);
        let spectrum = fft_magnitude(&series, cfg)?;
        for (freq, mag) in spectral_peaks(&spectrum, rate_hz, cfg.peaks_k) {
            out.push(freq);
            out.push(mag);
        }
        out.extend(band_power(&spectrum, rate_hz, &cfg.bands));
    }
    debug_assert!(out.iter().all(|v| v.is_finite()));
    Ok(out)
}

/// [`extract_features_from_samples`] for a segmented window.
pub fn extract_features(
    window: &Window<'_>,
    rate_hz: u32,
    cfg: &FeatureConfig,
) -> Result<Vec<f64>, FeatureError> {
    extract_features_from_samples(window.samples, rate_hz, cfg)
}

/// Per-feature z-score transform fitted on training features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    /// Population std, already floored at the fitting epsilon.
    pub std: Vec<f64>,
}

/// Fits per-feature mean and std (population formula, floored at
/// `epsilon`). A bitwise-constant column keeps its exact value as the mean
/// so normalization maps it to exactly 0.
pub fn fit_normalizer(train: &[Vec<f64>], epsilon: f64) -> Result<Normalizer, FeatureError> {
    if train.is_empty() {
        return Err(FeatureError::EmptyTrainingSet);
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(FeatureError::InvalidConfig {
            reason: format!("epsilon {epsilon} must be positive"),
        });
    }
    let dim = train[0].len();
    for v in train {
        if v.len() != dim {
            return Err(FeatureError::DimensionMismatch {
                expected: dim,
                found: v.len(),
            });
        }
    }
    let n = train.len() as f64;
    let mut mean = Vec::with_capacity(dim);
    let mut std = Vec::with_capacity(dim);
    for d in 0..dim {
        let first = train[0][d];
        if train.iter().all(|v| v[d] == first) {
            mean.push(first);
            std.push(epsilon);
            continue;
        }
        let m = train.iter().map(|v| v[d]).sum::<f64>() / n;
        let var = train.iter().map(|v| (v[d] - m) * (v[d] - m)).sum::<f64>() / n;
        mean.push(m);
        std.push(var.sqrt().max(epsilon));
    }
    Ok(Normalizer { mean, std })
}

impl Normalizer {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>, FeatureError> {
        if v.len() != self.dim() {
            return Err(FeatureError::DimensionMismatch {
                expected: self.dim(),
                found: v.len(),
            });
        }
        Ok(v.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect())
    }
}
