//! Shared helpers for the integration suites. The spectral oracle here is
//! deliberately written from the definition (O(n²) sums), independent of
//! the library's FFT path.

#![allow(dead_code)]

use gaitrec::features::{FeatureConfig, Taper};
use std::path::Path;
use std::process::{Command, Output};

/// Magnitude spectrum by direct DFT summation, applying the same mean
/// removal, taper, and zero padding the library performs.
pub fn naive_magnitude(series: &[f64], cfg: &FeatureConfig) -> Vec<f64> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let mut padded = vec![0.0; cfg.n_fft];
    for (i, &x) in series.iter().enumerate() {
        let w = match cfg.taper {
            Taper::Rectangular => 1.0,
            Taper::Hann => {
                if n < 2 {
                    1.0
                } else {
                    0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / (n - 1) as f64).cos())
                }
            }
        };
        padded[i] = (x - mean) * w;
    }
    let nf = cfg.n_fft;
    (0..=nf / 2)
        .map(|k| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (t, &x) in padded.iter().enumerate() {
                let angle = -std::f64::consts::TAU * k as f64 * t as f64 / nf as f64;
                re += x * angle.cos();
                im += x * angle.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

/// Path of the compiled CLI binary.
pub fn bin_path() -> &'static str {
    env!("CARGO_BIN_EXE_gaitrec")
}

/// Runs the CLI with `args` in `dir`, returning the completed output.
pub fn run_cli_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin_path())
        .args(args)
        .current_dir(dir)
        .output()
        .expect("failed to launch the CLI binary")
}

pub fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}
