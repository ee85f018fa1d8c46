//! Recording types, CSV/manifest ingestion, stratified splitting, and the
//! parametric synthetic signal generator.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Accepted sampling-rate range for the synthetic generator, in Hz.
pub const RATE_HZ_MIN: u32 = 25;
/// See [`RATE_HZ_MIN`].
pub const RATE_HZ_MAX: u32 = 400;

/// The four activity classes. Variant order is the canonical class-index
/// order (alphabetical by display name); classifier outputs, confusion
/// matrices, and report lines all use it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActivityLabel {
    #[serde(rename = "Going Downstairs")]
    GoingDownstairs,
    #[serde(rename = "Going Upstairs")]
    GoingUpstairs,
    Stationary,
    Walking,
}

impl ActivityLabel {
    pub const COUNT: usize = 4;
    pub const ALL: [ActivityLabel; Self::COUNT] = [
        ActivityLabel::GoingDownstairs,
        ActivityLabel::GoingUpstairs,
        ActivityLabel::Stationary,
        ActivityLabel::Walking,
    ];

    /// Canonical human-readable name; also the wire form in manifests and
    /// report output, so it must stay byte-stable.
    pub fn display_name(self) -> &'static str {
        match self {
            ActivityLabel::GoingDownstairs => "Going Downstairs",
            ActivityLabel::GoingUpstairs => "Going Upstairs",
            ActivityLabel::Stationary => "Stationary",
            ActivityLabel::Walking => "Walking",
        }
    }

    pub fn from_display(s: &str) -> Option<ActivityLabel> {
        Self::ALL.into_iter().find(|l| l.display_name() == s)
    }

    pub fn class_index(self) -> usize {
        self as usize
    }

    pub fn from_class_index(i: usize) -> Option<ActivityLabel> {
        Self::ALL.get(i).copied()
    }

    /// Lowercase hyphenated form used in generated file names.
    pub fn slug(self) -> &'static str {
        match self {
            ActivityLabel::GoingDownstairs => "going-downstairs",
            ActivityLabel::GoingUpstairs => "going-upstairs",
            ActivityLabel::Stationary => "stationary",
            ActivityLabel::Walking => "walking",
        }
    }
}

impl fmt::Display for ActivityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

/// One IMU sample. Acceleration in g; optional gyro in deg/s.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub t_ms: u64,
    /// ax, ay, az.
    pub accel: [f64; 3],
    /// gx, gy, gz; present on all samples of a recording or on none.
    pub gyro: Option<[f64; 3]>,
}

/// A labelled, rate-validated run of samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    pub id: String,
    pub label: ActivityLabel,
    pub rate_hz: u32,
    pub samples: Vec<Sample>,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing column `{name}`")]
    MissingColumn { name: String },
    #[error("unexpected CSV header `{found}`")]
    HeaderMismatch { found: String },
    #[error("non-monotonic timestamp at data row {row}")]
    NonMonotonicTimestamps { row: usize },
    #[error(
        "timestamp delta {delta_ms} ms at data row {row} deviates from expected {expected_ms} ms by more than the jitter tolerance"
    )]
    RateMismatch {
        row: usize,
        delta_ms: f64,
        expected_ms: f64,
    },
    #[error("file contains no samples")]
    EmptyFile,
    #[error("recording `{id}` has no samples")]
    EmptyRecording { id: String },
    #[error("non-finite value at data row {row}")]
    NonFiniteValue { row: usize },
    #[error("malformed number in column `{column}` at data row {row}")]
    MalformedNumber { row: usize, column: String },
    #[error("gyro columns present on some rows but not all (row {row})")]
    InconsistentGyro { row: usize },
    #[error("rate must be positive")]
    ZeroRate,
    #[error("rate {rate_hz} Hz outside supported range {RATE_HZ_MIN}..={RATE_HZ_MAX}")]
    RateOutOfRange { rate_hz: u32 },
    #[error("duration {duration_s} s shorter than minimum {min_s} s")]
    DurationTooShort { duration_s: f64, min_s: f64 },
    #[error("class `{label}` would get an empty train or test partition")]
    InsufficientRecordings { label: ActivityLabel },
    #[error("train fraction {value} outside (0, 1)")]
    InvalidTrainFraction { value: f64 },
    #[error("duplicate recording id `{id}`")]
    DuplicateId { id: String },
    #[error("recordings mix sampling rates")]
    MixedRates,
    #[error("recordings mix 3-axis and 6-axis data")]
    MixedAxes,
    #[error("manifest declares {manifest} axes but `{id}` has {found}")]
    AxesMismatch { id: String, manifest: u8, found: u8 },
    #[error("axes must be 3 or 6, got {axes}")]
    BadAxes { axes: u8 },
    #[error("unknown label `{label}`")]
    UnknownLabel { label: String },
    #[error("invalid synth config: {reason}")]
    InvalidSynthConfig { reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Recording {
    /// Validates monotone timestamps, jitter against `rate_hz`, finiteness,
    /// and gyro consistency. The jitter tolerance is max(10% of the period,
    /// 1.0 ms): integer-millisecond stamping makes consecutive deltas
    /// deviate from the ideal period by up to ~1 ms at high rates, so a
    /// bare ±10% rule would reject correctly stamped data above 100 Hz.
    pub fn new(
        id: impl Into<String>,
        label: ActivityLabel,
        rate_hz: u32,
        samples: Vec<Sample>,
    ) -> Result<Recording, DatasetError> {
        let id = id.into();
        if rate_hz == 0 {
            return Err(DatasetError::ZeroRate);
        }
        if samples.is_empty() {
            return Err(DatasetError::EmptyRecording { id });
        }
        let has_gyro = samples[0].gyro.is_some();
        let period_ms = 1000.0 / f64::from(rate_hz);
        let tol = (0.1 * period_ms).max(1.0) + 1e-9;
        for (i, s) in samples.iter().enumerate() {
            let finite =
                s.accel.iter().all(|v| v.is_finite()) && s.gyro.iter().flatten().all(|v| v.is_finite());
            if !finite {
                return Err(DatasetError::NonFiniteValue { row: i + 1 });
            }
            if s.gyro.is_some() != has_gyro {
                return Err(DatasetError::InconsistentGyro { row: i + 1 });
            }
            if i > 0 {
                let prev = samples[i - 1].t_ms;
                if s.t_ms <= prev {
                    return Err(DatasetError::NonMonotonicTimestamps { row: i + 1 });
                }
                let delta = (s.t_ms - prev) as f64;
                if (delta - period_ms).abs() > tol {
                    return Err(DatasetError::RateMismatch {
                        row: i + 1,
                        delta_ms: delta,
                        expected_ms: period_ms,
                    });
                }
            }
        }
        Ok(Recording {
            id,
            label,
            rate_hz,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// 3 or 6 depending on gyro presence.
    pub fn axes(&self) -> u8 {
        if self.samples.first().is_some_and(|s| s.gyro.is_some()) {
            6
        } else {
            3
        }
    }

    pub fn duration_ms(&self) -> f64 {
        self.samples.len() as f64 * 1000.0 / f64::from(self.rate_hz)
    }
}

/// A uniform collection of recordings (shared rate and axes, unique ids).
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub recordings: Vec<Recording>,
    pub manifest_path: Option<PathBuf>,
}

impl Dataset {
    pub fn new(recordings: Vec<Recording>) -> Result<Dataset, DatasetError> {
        let mut seen = std::collections::HashSet::new();
        for r in &recordings {
            if !seen.insert(r.id.as_str()) {
                return Err(DatasetError::DuplicateId { id: r.id.clone() });
            }
        }
        if let Some(first) = recordings.first() {
            if recordings.iter().any(|r| r.rate_hz != first.rate_hz) {
                return Err(DatasetError::MixedRates);
            }
            if recordings.iter().any(|r| r.axes() != first.axes()) {
                return Err(DatasetError::MixedAxes);
            }
        }
        Ok(Dataset {
            recordings,
            manifest_path: None,
        })
    }

    pub fn len(&self) -> usize {
        self.recordings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recordings.is_empty()
    }

    pub fn rate_hz(&self) -> Option<u32> {
        self.recordings.first().map(|r| r.rate_hz)
    }

    pub fn axes(&self) -> Option<u8> {
        self.recordings.first().map(|r| r.axes())
    }

    pub fn class_counts(&self) -> [usize; ActivityLabel::COUNT] {
        let mut counts = [0usize; ActivityLabel::COUNT];
        for r in &self.recordings {
            counts[r.label.class_index()] += 1;
        }
        counts
    }
}

const HEADER_3AXIS: [&str; 4] = ["timestamp_ms", "accX", "accY", "accZ"];
const HEADER_6AXIS: [&str; 7] = [
    "timestamp_ms",
    "accX",
    "accY",
    "accZ",
    "gyrX",
    "gyrY",
    "gyrZ",
];

/// Reads one recording from CSV. The header must be exactly
/// `timestamp_ms,accX,accY,accZ` or the 6-column gyro variant; the
/// recording id defaults to the file stem.
pub fn load_recording(
    path: impl AsRef<Path>,
    rate_hz: u32,
    label: ActivityLabel,
) -> Result<Recording, DatasetError> {
    let path = path.as_ref();
    let file = fs::File::open(path)?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_recording_csv(file, id, rate_hz, label)
}

/// [`load_recording`] over any reader (e.g. stdin replay).
pub fn read_recording_csv<R: std::io::Read>(
    input: R,
    id: impl Into<String>,
    rate_hz: u32,
    label: ActivityLabel,
) -> Result<Recording, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let with_gyro = if headers == HEADER_3AXIS {
        false
    } else if headers == HEADER_6AXIS {
        true
    } else {
        // Prefer naming the first absent required column; anything else is
        // a reorder/extra-column situation reported wholesale.
        let expected: &[&str] = if headers.iter().any(|h| h.starts_with("gyr")) {
            &HEADER_6AXIS
        } else {
            &HEADER_3AXIS
        };
        if let Some(missing) = expected.iter().find(|c| !headers.iter().any(|h| h == *c)) {
            return Err(DatasetError::MissingColumn {
                name: (*missing).to_string(),
            });
        }
        return Err(DatasetError::HeaderMismatch {
            found: headers.join(","),
        });
    };

    let mut samples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let field = |col: usize| -> Result<f64, DatasetError> {
            f64::from_str(record.get(col).unwrap_or("")).map_err(|_| DatasetError::MalformedNumber {
                row,
                column: HEADER_6AXIS[col].to_string(),
            })
        };
        let t_ms = u64::from_str(record.get(0).unwrap_or("")).map_err(|_| {
            DatasetError::MalformedNumber {
                row,
                column: "timestamp_ms".to_string(),
            }
        })?;
        let accel = [field(1)?, field(2)?, field(3)?];
        let gyro = if with_gyro {
            Some([field(4)?, field(5)?, field(6)?])
        } else {
            None
        };
        samples.push(Sample { t_ms, accel, gyro });
    }
    if samples.is_empty() {
        return Err(DatasetError::EmptyFile);
    }
    Recording::new(id.into(), label, rate_hz, samples)
}

/// Writes the CSV form read back by [`load_recording`]. Float formatting is
/// shortest-round-trip, so write → load reproduces samples bit-exactly.
pub fn write_recording_csv(rec: &Recording, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let mut out = String::new();
    let with_gyro = rec.axes() == 6;
    if with_gyro {
        out.push_str(&HEADER_6AXIS.join(","));
    } else {
        out.push_str(&HEADER_3AXIS.join(","));
    }
    out.push('\n');
    for s in &rec.samples {
        out.push_str(&s.t_ms.to_string());
        for v in s.accel {
            out.push(',');
            out.push_str(&v.to_string());
        }
        if let Some(g) = s.gyro {
            for v in g {
                out.push(',');
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Manifest schema: rate, axes, and the recording list with display-string
/// labels. File paths are resolved relative to the manifest's directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub rate_hz: u32,
    pub axes: u8,
    pub recordings: Vec<ManifestEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub label: ActivityLabel,
    pub id: String,
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    let path = path.as_ref();
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(path)?)?;
    if manifest.axes != 3 && manifest.axes != 6 {
        return Err(DatasetError::BadAxes {
            axes: manifest.axes,
        });
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut recordings = Vec::with_capacity(manifest.recordings.len());
    for entry in &manifest.recordings {
        let mut rec = load_recording(base.join(&entry.file), manifest.rate_hz, entry.label)?;
        rec.id = entry.id.clone();
        if rec.axes() != manifest.axes {
            return Err(DatasetError::AxesMismatch {
                id: rec.id,
                manifest: manifest.axes,
                found: if manifest.axes == 3 { 6 } else { 3 },
            });
        }
        recordings.push(rec);
    }
    let mut ds = Dataset::new(recordings)?;
    ds.manifest_path = Some(path.to_path_buf());
    Ok(ds)
}

/// Writes every recording as `<id>.csv` plus a `manifest.json` into `dir`;
/// returns the manifest path. Output is byte-deterministic.
pub fn save_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<PathBuf, DatasetError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(ds.recordings.len());
    for rec in &ds.recordings {
        let file = format!("{}.csv", rec.id);
        write_recording_csv(rec, dir.join(&file))?;
        entries.push(ManifestEntry {
            file,
            label: rec.label,
            id: rec.id.clone(),
        });
    }
    let manifest = Manifest {
        rate_hz: ds.rate_hz().unwrap_or(0),
        axes: ds.axes().unwrap_or(3),
        recordings: entries,
    };
    let manifest_path = dir.join("manifest.json");
    let mut body = serde_json::to_string_pretty(&manifest)?;
    body.push('\n');
    fs::write(&manifest_path, body)?;
    Ok(manifest_path)
}

/// Round-half-up share of `n` at `fraction`.
fn train_count(n: usize, fraction: f64) -> usize {
    (n as f64 * fraction + 0.5).floor() as usize
}

/// Stratified recording-level split: per class, `round(n × fraction)`
/// recordings go to train, the rest to test, in seeded shuffle order.
/// Operating on whole recordings means overlapping windows can never leak
/// across the split.
pub fn split_by_recording(
    ds: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DatasetError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::InvalidTrainFraction {
            value: train_fraction,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in ActivityLabel::ALL {
        let mut idx: Vec<usize> = ds
            .recordings
            .iter()
            .enumerate()
            .filter(|(_, r)| r.label == label)
            .map(|(i, _)| i)
            .collect();
        if idx.is_empty() {
            return Err(DatasetError::InsufficientRecordings { label });
        }
        rand::seq::SliceRandom::shuffle(&mut idx[..], &mut rng);
        let n_train = train_count(idx.len(), train_fraction);
        if n_train == 0 || n_train == idx.len() {
            return Err(DatasetError::InsufficientRecordings { label });
        }
        for (pos, &i) in idx.iter().enumerate() {
            if pos < n_train {
                train.push(ds.recordings[i].clone());
            } else {
                test.push(ds.recordings[i].clone());
            }
        }
    }
    Ok((Dataset::new(train)?, Dataset::new(test)?))
}

/// Per-class oscillation parameters for the generator. A template with all
/// amplitudes zero produces gravity plus noise only.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionTemplate {
    pub step_hz: f64,
    pub vertical_amp_g: f64,
    pub forward_amp_g: f64,
    pub forward_phase_rad: f64,
    pub vertical_bias_g: f64,
}

impl MotionTemplate {
    pub const STILL: MotionTemplate = MotionTemplate {
        step_hz: 0.0,
        vertical_amp_g: 0.0,
        forward_amp_g: 0.0,
        forward_phase_rad: 0.0,
        vertical_bias_g: 0.0,
    };
}

/// Generator configuration. Defaults produce the four activity signatures
/// the rest of the pipeline is tuned against; all fields can be overridden
/// from a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub gravity_g: f64,
    pub noise_sigma_g: f64,
    pub gyro_noise_sigma_dps: f64,
    /// Minimum recording length; one default classification window.
    pub min_duration_s: f64,
    pub walking: MotionTemplate,
    pub stationary: MotionTemplate,
    pub going_upstairs: MotionTemplate,
    pub going_downstairs: MotionTemplate,
}

impl Default for SynthConfig {
    fn default() -> Self {
        use std::f64::consts::FRAC_PI_2;
        SynthConfig {
            gravity_g: 1.0,
            noise_sigma_g: 0.02,
            gyro_noise_sigma_dps: 1.0,
            min_duration_s: 2.0,
            walking: MotionTemplate {
                step_hz: 2.0,
                vertical_amp_g: 0.4,
                forward_amp_g: 0.2,
                forward_phase_rad: FRAC_PI_2,
                vertical_bias_g: 0.0,
            },
            stationary: MotionTemplate::STILL,
            going_upstairs: MotionTemplate {
                step_hz: 1.4,
                vertical_amp_g: 0.6,
                forward_amp_g: 0.2,
                forward_phase_rad: FRAC_PI_2,
                vertical_bias_g: 0.05,
            },
            going_downstairs: MotionTemplate {
                step_hz: 1.8,
                vertical_amp_g: 0.5,
                forward_amp_g: 0.2,
                forward_phase_rad: -FRAC_PI_2,
                vertical_bias_g: -0.05,
            },
        }
    }
}

impl SynthConfig {
    pub fn template(&self, label: ActivityLabel) -> MotionTemplate {
        match label {
            ActivityLabel::Walking => self.walking,
            ActivityLabel::Stationary => self.stationary,
            ActivityLabel::GoingUpstairs => self.going_upstairs,
            ActivityLabel::GoingDownstairs => self.going_downstairs,
        }
    }
}

/// Synthesizes one recording with the default config and a derived id.
/// Same seed, same samples, bit for bit.
pub fn synthesize_recording(
    label: ActivityLabel,
    duration_s: f64,
    rate_hz: u32,
    seed: u64,
) -> Result<Recording, DatasetError> {
    let id = format!("{}-{seed:08x}", label.slug());
    synthesize_with_config(&SynthConfig::default(), label, id, duration_s, rate_hz, seed, false)
}

/// Synthesizes with an explicit config, id, and axis mode, using the
/// template registered for `label`.
pub fn synthesize_with_config(
    cfg: &SynthConfig,
    label: ActivityLabel,
    id: impl Into<String>,
    duration_s: f64,
    rate_hz: u32,
    seed: u64,
    with_gyro: bool,
) -> Result<Recording, DatasetError> {
    synthesize_from_template(cfg, cfg.template(label), label, id, duration_s, rate_hz, seed, with_gyro)
}

/// Synthesizes from an arbitrary template; the label is carried on the
/// recording but does not influence the signal. This is the entry point
/// for out-of-distribution signals such as violent-shaking anomalies.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_from_template(
    cfg: &SynthConfig,
    template: MotionTemplate,
    label: ActivityLabel,
    id: impl Into<String>,
    duration_s: f64,
    rate_hz: u32,
    seed: u64,
    with_gyro: bool,
) -> Result<Recording, DatasetError> {
    if !(RATE_HZ_MIN..=RATE_HZ_MAX).contains(&rate_hz) {
        return Err(DatasetError::RateOutOfRange { rate_hz });
    }
    if !duration_s.is_finite() || duration_s < cfg.min_duration_s {
        return Err(DatasetError::DurationTooShort {
            duration_s,
            min_s: cfg.min_duration_s,
        });
    }
    let accel_noise = Normal::new(0.0, cfg.noise_sigma_g).map_err(|e| {
        DatasetError::InvalidSynthConfig {
            reason: format!("noise_sigma_g: {e}"),
        }
    })?;
    let gyro_noise = Normal::new(0.0, cfg.gyro_noise_sigma_dps).map_err(|e| {
        DatasetError::InvalidSynthConfig {
            reason: format!("gyro_noise_sigma_dps: {e}"),
        }
    })?;

    let n = (duration_s * f64::from(rate_hz)).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        // Signal time comes from the exact sample index, not the rounded
        // millisecond stamp, so the waveform itself is jitter-free.
        let t = i as f64 / f64::from(rate_hz);
        let phase = std::f64::consts::TAU * template.step_hz * t;
        // Noise draw order (ax, ay, az, then gyro) is part of the
        // determinism contract; do not reorder.
        let nx = accel_noise.sample(&mut rng);
        let ny = accel_noise.sample(&mut rng);
        let nz = accel_noise.sample(&mut rng);
        let ax = template.forward_amp_g * (phase + template.forward_phase_rad).sin() + nx;
        let ay = ny;
        let az = cfg.gravity_g
            + template.vertical_bias_g
            + template.vertical_amp_g * phase.sin()
            + nz;
        let gyro = if with_gyro {
            let gx = gyro_noise.sample(&mut rng);
            let gy = gyro_noise.sample(&mut rng);
            let gz = gyro_noise.sample(&mut rng);
            Some([gx, gy, gz])
        } else {
            None
        };
        samples.push(Sample {
            t_ms: (i as f64 * 1000.0 / f64::from(rate_hz)).round() as u64,
            accel: [ax, ay, az],
            gyro,
        });
    }
    Recording::new(id, label, rate_hz, samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_temp_csv(body: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.csv");
        fs::write(&path, body).unwrap();
        (dir, path)
    }

    #[test]
    fn labels_are_ordered_and_displayed_exactly() {
        let names: Vec<&str> = ActivityLabel::ALL.iter().map(|l| l.display_name()).collect();
        assert_eq!(
            names,
            ["Going Downstairs", "Going Upstairs", "Stationary", "Walking"]
        );
        // Display order must be alphabetical so index order and report
        // order coincide.
        let mut sorted = names.clone();
        sorted.sort_unstable();
        assert_eq!(names, sorted);
        for (i, l) in ActivityLabel::ALL.into_iter().enumerate() {
            assert_eq!(l.class_index(), i);
            assert_eq!(ActivityLabel::from_class_index(i), Some(l));
            assert_eq!(ActivityLabel::from_display(l.display_name()), Some(l));
        }
        assert_eq!(ActivityLabel::from_display("walking"), None);
    }

    #[test]
    fn label_serde_uses_display_strings() {
        let json = serde_json::to_string(&ActivityLabel::GoingUpstairs).unwrap();
        assert_eq!(json, "\"Going Upstairs\"");
        let back: ActivityLabel = serde_json::from_str("\"Going Downstairs\"").unwrap();
        assert_eq!(back, ActivityLabel::GoingDownstairs);
    }

    #[test]
    fn stationary_mean_vertical_accel_is_gravity() {
        let rec = synthesize_recording(ActivityLabel::Stationary, 10.0, 100, 7).unwrap();
        assert_eq!(rec.len(), 1000);
        let mean_az: f64 = rec.samples.iter().map(|s| s.accel[2]).sum::<f64>() / rec.len() as f64;
        assert!((mean_az - 1.0).abs() < 0.01, "mean az {mean_az}");
    }

    #[test]
    fn synth_is_bit_deterministic_per_seed() {
        let a = synthesize_recording(ActivityLabel::Walking, 4.0, 100, 99).unwrap();
        let b = synthesize_recording(ActivityLabel::Walking, 4.0, 100, 99).unwrap();
        assert_eq!(a, b);
        let c = synthesize_recording(ActivityLabel::Walking, 4.0, 100, 100).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn synth_rejects_bad_rate_and_duration() {
        assert!(matches!(
            synthesize_recording(ActivityLabel::Walking, 10.0, 24, 1),
            Err(DatasetError::RateOutOfRange { .. })
        ));
        assert!(matches!(
            synthesize_recording(ActivityLabel::Walking, 10.0, 401, 1),
            Err(DatasetError::RateOutOfRange { .. })
        ));
        assert!(matches!(
            synthesize_recording(ActivityLabel::Walking, 1.5, 100, 1),
            Err(DatasetError::DurationTooShort { .. })
        ));
    }

    #[test]
    fn synth_high_rate_passes_jitter_validation() {
        // 345 Hz has a 2.899 ms period whose integer-rounded grid contains
        // deltas off by up to 0.9 ms; construction must accept its own
        // output at every legal rate.
        for rate in [25, 100, 128, 345, 400] {
            synthesize_recording(ActivityLabel::Stationary, 3.0, rate, 3).unwrap();
        }
    }

    /// Naive O(n²) DFT magnitude used as the spectral oracle.
    fn dft_magnitude(series: &[f64]) -> Vec<f64> {
        let n = series.len();
        (0..=n / 2)
            .map(|k| {
                let mut re = 0.0;
                let mut im = 0.0;
                for (i, &x) in series.iter().enumerate() {
                    let ang = -std::f64::consts::TAU * k as f64 * i as f64 / n as f64;
                    re += x * ang.cos();
                    im += x * ang.sin();
                }
                (re * re + im * im).sqrt()
            })
            .collect()
    }

    #[test]
    fn walking_dominant_frequency_matches_dft_oracle() {
        let rec = synthesize_recording(ActivityLabel::Walking, 10.0, 100, 11).unwrap();
        let az: Vec<f64> = rec.samples.iter().map(|s| s.accel[2]).collect();
        let mags = dft_magnitude(&az);
        let (k, _) = mags
            .iter()
            .enumerate()
            .skip(1)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let freq = k as f64 * 100.0 / az.len() as f64;
        assert!((freq - 2.0).abs() <= 0.2, "dominant bin at {freq} Hz");
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let rec = synthesize_recording(ActivityLabel::GoingUpstairs, 3.0, 100, 21).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("up.csv");
        write_recording_csv(&rec, &path).unwrap();
        let back = load_recording(&path, 100, ActivityLabel::GoingUpstairs).unwrap();
        assert_eq!(back.id, "up");
        assert_eq!(back.samples, rec.samples);
    }

    #[test]
    fn six_axis_round_trip_preserves_gyro() {
        let rec = synthesize_with_config(
            &SynthConfig::default(),
            ActivityLabel::Walking,
            "w6",
            3.0,
            100,
            5,
            true,
        )
        .unwrap();
        assert_eq!(rec.axes(), 6);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w6.csv");
        write_recording_csv(&rec, &path).unwrap();
        let back = load_recording(&path, 100, ActivityLabel::Walking).unwrap();
        assert_eq!(back.axes(), 6);
        assert_eq!(back.samples, rec.samples);
    }

    #[test]
    fn load_reports_missing_column() {
        let (_d, path) = write_temp_csv("timestamp_ms,accX,accY\n0,0.1,0.2\n");
        match load_recording(&path, 100, ActivityLabel::Walking) {
            Err(DatasetError::MissingColumn { name }) => assert_eq!(name, "accZ"),
            other => panic!("expected MissingColumn, got {other:?}"),
        }
    }

    #[test]
    fn load_reports_repeated_timestamp() {
        let (_d, path) = write_temp_csv("timestamp_ms,accX,accY,accZ\n0,0,0,1\n10,0,0,1\n10,0,0,1\n");
        assert!(matches!(
            load_recording(&path, 100, ActivityLabel::Walking),
            Err(DatasetError::NonMonotonicTimestamps { row: 3 })
        ));
    }

    #[test]
    fn load_reports_excess_jitter() {
        let (_d, path) = write_temp_csv("timestamp_ms,accX,accY,accZ\n0,0,0,1\n10,0,0,1\n22,0,0,1\n");
        assert!(matches!(
            load_recording(&path, 100, ActivityLabel::Walking),
            Err(DatasetError::RateMismatch { row: 3, .. })
        ));
    }

    #[test]
    fn load_reports_empty_and_malformed_files() {
        let (_d, path) = write_temp_csv("timestamp_ms,accX,accY,accZ\n");
        assert!(matches!(
            load_recording(&path, 100, ActivityLabel::Walking),
            Err(DatasetError::EmptyFile)
        ));
        let (_d2, path2) = write_temp_csv("timestamp_ms,accX,accY,accZ\n0,0,abc,1\n");
        assert!(matches!(
            load_recording(&path2, 100, ActivityLabel::Walking),
            Err(DatasetError::MalformedNumber { row: 1, .. })
        ));
    }

    #[test]
    fn recording_rejects_non_finite_values() {
        let samples = vec![
            Sample {
                t_ms: 0,
                accel: [0.0, 0.0, 1.0],
                gyro: None,
            },
            Sample {
                t_ms: 10,
                accel: [f64::NAN, 0.0, 1.0],
                gyro: None,
            },
        ];
        assert!(matches!(
            Recording::new("x", ActivityLabel::Walking, 100, samples),
            Err(DatasetError::NonFiniteValue { row: 2 })
        ));
    }

    fn synth_dataset(per_class: usize, duration_s: f64, seed0: u64) -> Dataset {
        let mut recs = Vec::new();
        let mut seed = seed0;
        for label in ActivityLabel::ALL {
            for i in 0..per_class {
                seed += 1;
                recs.push(
                    synthesize_with_config(
                        &SynthConfig::default(),
                        label,
                        format!("{}-{i:02}", label.slug()),
                        duration_s,
                        100,
                        seed,
                        false,
                    )
                    .unwrap(),
                );
            }
        }
        Dataset::new(recs).unwrap()
    }

    #[test]
    fn split_reproduces_paper_partition_sizes() {
        let ds = synth_dataset(10, 2.0, 0);
        let (train, test) = split_by_recording(&ds, 0.8, 42).unwrap();
        assert_eq!(train.len(), 32);
        assert_eq!(test.len(), 8);
        assert_eq!(train.class_counts(), [8, 8, 8, 8]);
        assert_eq!(test.class_counts(), [2, 2, 2, 2]);
    }

    #[test]
    fn split_is_deterministic_and_a_partition() {
        let ds = synth_dataset(5, 2.0, 100);
        let (tr1, te1) = split_by_recording(&ds, 0.6, 9).unwrap();
        let (tr2, te2) = split_by_recording(&ds, 0.6, 9).unwrap();
        let ids = |d: &Dataset| d.recordings.iter().map(|r| r.id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&tr1), ids(&tr2));
        assert_eq!(ids(&te1), ids(&te2));
        let mut all: Vec<String> = ids(&tr1).into_iter().chain(ids(&te1)).collect();
        all.sort();
        let mut orig = ids(&ds);
        orig.sort();
        assert_eq!(all, orig);
    }

    #[test]
    fn split_rejects_degenerate_partitions() {
        let ds = synth_dataset(1, 2.0, 200);
        assert!(matches!(
            split_by_recording(&ds, 0.8, 1),
            Err(DatasetError::InsufficientRecordings { .. })
        ));
        let ds2 = synth_dataset(3, 2.0, 300);
        assert!(matches!(
            split_by_recording(&ds2, 1.0, 1),
            Err(DatasetError::InvalidTrainFraction { .. })
        ));
    }

    #[test]
    fn manifest_round_trip() {
        let ds = synth_dataset(2, 2.0, 400);
        let dir = tempfile::tempdir().unwrap();
        let manifest_path = save_dataset(&ds, dir.path()).unwrap();
        let back = load_manifest(&manifest_path).unwrap();
        assert_eq!(back.len(), ds.len());
        assert_eq!(back.rate_hz(), Some(100));
        assert_eq!(back.axes(), Some(3));
        for (a, b) in ds.recordings.iter().zip(&back.recordings) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.label, b.label);
            assert_eq!(a.samples, b.samples);
        }
    }

    #[test]
    fn dataset_validation_catches_duplicates_and_mixes() {
        let a = synthesize_recording(ActivityLabel::Walking, 2.0, 100, 1).unwrap();
        let mut b = synthesize_recording(ActivityLabel::Walking, 2.0, 100, 2).unwrap();
        b.id = a.id.clone();
        assert!(matches!(
            Dataset::new(vec![a.clone(), b]),
            Err(DatasetError::DuplicateId { .. })
        ));
        let c = synthesize_recording(ActivityLabel::Walking, 2.0, 50, 3).unwrap();
        assert!(matches!(
            Dataset::new(vec![a, c]),
            Err(DatasetError::MixedRates)
        ));
    }

    mod proptests {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn split_counts_follow_round_half_up(
                counts in proptest::array::uniform4(2usize..12),
                fraction in 0.15f64..0.85,
                seed in any::<u64>(),
            ) {
                let mut recs = Vec::new();
                let mut s = 0u64;
                for (ci, label) in ActivityLabel::ALL.into_iter().enumerate() {
                    for i in 0..counts[ci] {
                        s += 1;
                        recs.push(
                            synthesize_with_config(
                                &SynthConfig::default(), label,
                                format!("{}-{i}", label.slug()), 2.0, 100, s, false,
                            ).unwrap(),
                        );
                    }
                }
                let ds = Dataset::new(recs).unwrap();
                match split_by_recording(&ds, fraction, seed) {
                    Ok((train, test)) => {
                        for (ci, &n) in counts.iter().enumerate() {
                            let expect = (n as f64 * fraction + 0.5).floor() as usize;
                            prop_assert_eq!(train.class_counts()[ci], expect);
                            prop_assert_eq!(test.class_counts()[ci], n - expect);
                        }
                        prop_assert_eq!(train.len() + test.len(), ds.len());
                    }
                    Err(DatasetError::InsufficientRecordings { .. }) => {
                        // Legal only when rounding empties one side.
                        let degenerate = counts.iter().any(|&n| {
                            let t = (n as f64 * fraction + 0.5).floor() as usize;
                            t == 0 || t == n
                        });
                        prop_assert!(degenerate);
                    }
                    Err(e) => return Err(TestCaseError::fail(format!("unexpected error {e:?}"))),
                }
            }
        }
    }
}
