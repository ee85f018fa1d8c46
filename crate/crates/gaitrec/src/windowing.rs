//! Sliding-window segmentation of recordings into classification units.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ActivityLabel, Recording, Sample};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub window_ms: u32,
    pub stride_ms: u32,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            window_ms: 2000,
            stride_ms: 80,
        }
    }
}

impl WindowConfig {
    pub fn new(window_ms: u32, stride_ms: u32) -> Result<WindowConfig, WindowingError> {
        let cfg = WindowConfig {
            window_ms,
            stride_ms,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), WindowingError> {
        if self.window_ms == 0 || self.stride_ms == 0 || self.stride_ms > self.window_ms {
            return Err(WindowingError::InvalidConfig {
                window_ms: self.window_ms,
                stride_ms: self.stride_ms,
            });
        }
        Ok(())
    }

    /// Window length in samples at `rate_hz`; errors unless the millisecond
    /// length lands on a whole number of samples.
    pub fn window_samples(&self, rate_hz: u32) -> Result<usize, WindowingError> {
        samples_for(self.window_ms, rate_hz).ok_or(WindowingError::InvalidWindowForRate {
            window_ms: self.window_ms,
            rate_hz,
        })
    }

    /// Stride in samples at `rate_hz`; same divisibility requirement.
    pub fn stride_samples(&self, rate_hz: u32) -> Result<usize, WindowingError> {
        samples_for(self.stride_ms, rate_hz).ok_or(WindowingError::InvalidStrideForRate {
            stride_ms: self.stride_ms,
            rate_hz,
        })
    }
}

fn samples_for(ms: u32, rate_hz: u32) -> Option<usize> {
    let numer = u64::from(ms) * u64::from(rate_hz);
    (rate_hz > 0 && numer % 1000 == 0 && numer > 0).then(|| (numer / 1000) as usize)
}

/// One window: a borrowed contiguous slice of its source recording.
#[derive(Clone, Copy, Debug)]
pub struct Window<'a> {
    pub recording_id: &'a str,
    pub label: ActivityLabel,
    pub start_ms: u64,
    pub samples: &'a [Sample],
}

#[derive(Debug, Error)]
pub enum WindowingError {
    #[error("window {window_ms} ms / stride {stride_ms} ms invalid (window > 0, 0 < stride <= window)")]
    InvalidConfig { window_ms: u32, stride_ms: u32 },
    #[error("stride {stride_ms} ms is not a whole number of samples at {rate_hz} Hz")]
    InvalidStrideForRate { stride_ms: u32, rate_hz: u32 },
    #[error("window {window_ms} ms is not a whole number of samples at {rate_hz} Hz")]
    InvalidWindowForRate { window_ms: u32, rate_hz: u32 },
    #[error("recording `{id}` ({len} samples) shorter than one {window_samples}-sample window")]
    RecordingTooShort {
        id: String,
        len: usize,
        window_samples: usize,
    },
}

/// Number of windows for a recording of `duration_ms`:
/// floor((duration − window) / stride) + 1, for duration ≥ window.
pub fn window_count(duration_ms: u64, window_ms: u64, stride_ms: u64) -> u64 {
    debug_assert!(window_ms > 0 && stride_ms > 0 && duration_ms >= window_ms);
    (duration_ms - window_ms) / stride_ms + 1
}

/// Cuts `rec` into windows. Offsets are computed in sample indices (the
/// millisecond window and stride must divide into whole samples) so the
/// start grid cannot drift; the trailing partial window is dropped.
pub fn segment<'a>(rec: &'a Recording, cfg: &WindowConfig) -> Result<Vec<Window<'a>>, WindowingError> {
    cfg.validate()?;
    let window_samples = cfg.window_samples(rec.rate_hz)?;
    let stride_samples = cfg.stride_samples(rec.rate_hz)?;
    let n = rec.samples.len();
    if n < window_samples {
        return Err(WindowingError::RecordingTooShort {
            id: rec.id.clone(),
            len: n,
            window_samples,
        });
    }
    let count = (n - window_samples) / stride_samples + 1;
    let mut out = Vec::with_capacity(count);
    for w in 0..count {
        let start = w * stride_samples;
        out.push(Window {
            recording_id: &rec.id,
            label: rec.label,
            start_ms: w as u64 * u64::from(cfg.stride_ms),
            samples: &rec.samples[start..start + window_samples],
        });
    }
    Ok(out)
}
