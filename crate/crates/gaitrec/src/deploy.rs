//! Deployment artifacts: int8 weight quantization, the versioned binary
//! model bundle, C-array header export, and the streaming inference engine
//! that mirrors the on-device serial output.

use crate::anomaly::AnomalyModel;
use crate::dataset::{ActivityLabel, Sample, RATE_HZ_MAX, RATE_HZ_MIN};
use crate::features::{extract_features_from_samples, FeatureConfig, Normalizer, Taper};
use crate::model::{argmax, softmax_in_place, MlpModel};
use crate::windowing::WindowConfig;
use std::collections::VecDeque;
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

pub const BUNDLE_MAGIC: [u8; 4] = *b"GAIT";
pub const BUNDLE_VERSION: u16 = 1;
/// Per-row quantization scales are floored here so all-zero rows stay
/// representable.
pub const SCALE_FLOOR: f64 = 1e-12;
/// Reported probabilities snap to this grid (8-bit output resolution).
pub const PROB_GRID: f64 = 256.0;

#[derive(Debug, Error)]
pub enum DeployError {
    #[error("bad magic bytes (not a model bundle)")]
    BadMagic,
    #[error("unsupported bundle version {found}")]
    UnsupportedVersion { found: u16 },
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("truncated file")]
    TruncatedFile,
    #[error("corrupt bundle: {0}")]
    CorruptBundle(String),
    #[error("bundle classifier is not quantized")]
    NotQuantized,
    #[error("out-of-order sample: t={got_ms} ms after t={last_ms} ms")]
    OutOfOrderSample { last_ms: u64, got_ms: u64 },
    #[error("sample has {found} axes but the bundle expects {expected}")]
    AxesMismatch { expected: u8, found: u8 },
    #[error(transparent)]
    Feature(#[from] crate::features::FeatureError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Anomaly(#[from] crate::anomaly::AnomalyError),
    #[error(transparent)]
    Window(#[from] crate::windowing::WindowingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One dense layer with int8 weights: symmetric per-row scales
/// (zero-point 0) and full-precision biases kept alongside.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantLayer {
    /// Row-major `out × in`, every value in [−127, 127].
    pub weights: Vec<i8>,
    /// One positive scale per output row.
    pub scales: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantModel {
    pub dims: Vec<usize>,
    pub layers: Vec<QuantLayer>,
    pub biases: Vec<Vec<f64>>,
}

/// Symmetric per-row int8 quantization: scale = max|row| / 127 (floored),
/// q = round(w / scale) clamped to [−127, 127].
pub fn quantize(model: &MlpModel) -> QuantModel {
    let mut layers = Vec::with_capacity(model.weights.len());
    for l in 0..model.weights.len() {
        let (n_in, n_out) = (model.dims[l], model.dims[l + 1]);
        let mut weights = Vec::with_capacity(n_in * n_out);
        let mut scales = Vec::with_capacity(n_out);
        for o in 0..n_out {
            let row = &model.weights[l][o * n_in..(o + 1) * n_in];
            let max_abs = row.iter().fold(0.0f64, |m, w| m.max(w.abs()));
            let scale = (max_abs / 127.0).max(SCALE_FLOOR);
            scales.push(scale);
            for &w in row {
                let q = (w / scale).round().clamp(-127.0, 127.0);
                weights.push(q as i8);
            }
        }
        layers.push(QuantLayer { weights, scales });
    }
    QuantModel {
        dims: model.dims.clone(),
        layers,
        biases: model.biases.clone(),
    }
}

impl QuantModel {
    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    /// Forward pass dequantizing each weight inside the multiply-accumulate
    /// (`acc += (q · scale) · x`), matching how the int8 arrays would be
    /// consumed on-device.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, crate::model::ModelError> {
        if x.len() != self.input_dim() {
            return Err(crate::model::ModelError::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        let layers = self.layers.len();
        let mut act = x.to_vec();
        for l in 0..layers {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let mut z = self.biases[l].clone();
            for o in 0..n_out {
                let scale = self.layers[l].scales[o];
                let row = &self.layers[l].weights[o * n_in..(o + 1) * n_in];
                let mut acc = z[o];
                for i in 0..n_in {
                    acc += (row[i] as f64 * scale) * act[i];
                }
                z[o] = acc;
            }
            if l + 1 < layers {
                for v in z.iter_mut() {
                    *v = v.max(0.0);
                }
            } else {
                softmax_in_place(&mut z);
            }
            act = z;
        }
        Ok(act)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Classifier {
    Float(MlpModel),
    Quantized(QuantModel),
}

impl Classifier {
    pub fn input_dim(&self) -> usize {
        match self {
            Classifier::Float(m) => m.input_dim(),
            Classifier::Quantized(m) => m.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Classifier::Float(m) => m.output_dim(),
            Classifier::Quantized(m) => m.output_dim(),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, crate::model::ModelError> {
        match self {
            Classifier::Float(m) => m.forward(x),
            Classifier::Quantized(m) => m.forward(x),
        }
    }
}

/// Everything needed to run inference away from the training pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub rate_hz: u32,
    /// 3 (accelerometer) or 6 (accelerometer + gyroscope).
    pub axes: u8,
    pub window: WindowConfig,
    pub features: FeatureConfig,
    pub normalizer: Normalizer,
    pub classifier: Classifier,
    pub anomaly: AnomalyModel,
    /// Class display names in classifier output order.
    pub labels: Vec<String>,
}

impl ModelBundle {
    /// Cross-checks every dimensionality the file format cannot enforce.
    pub fn validate(&self) -> Result<(), DeployError> {
        let fail = |msg: String| Err(DeployError::CorruptBundle(msg));
        if !(RATE_HZ_MIN..=RATE_HZ_MAX).contains(&self.rate_hz) {
            return fail(format!("rate {} Hz out of range", self.rate_hz));
        }
        if self.axes != 3 && self.axes != 6 {
            return fail(format!("axes must be 3 or 6, found {}", self.axes));
        }
        self.window.validate().map_err(DeployError::Window)?;
        self.window.window_samples(self.rate_hz)?;
        self.window.stride_samples(self.rate_hz)?;
        self.features.validate().map_err(DeployError::Feature)?;
        let feat_dim = self.features.features_per_axis() * self.axes as usize;
        if self.normalizer.dim() != feat_dim {
            return fail(format!(
                "normalizer dim {} but feature config implies {feat_dim}",
                self.normalizer.dim()
            ));
        }
        if self.classifier.input_dim() != feat_dim {
            return fail(format!(
                "classifier input dim {} but feature config implies {feat_dim}",
                self.classifier.input_dim()
            ));
        }
        if self.anomaly.dim != feat_dim {
            return fail(format!(
                "anomaly model dim {} but feature config implies {feat_dim}",
                self.anomaly.dim
            ));
        }
        if self.labels.len() != self.classifier.output_dim() {
            return fail(format!(
                "{} labels for {} classifier outputs",
                self.labels.len(),
                self.classifier.output_dim()
            ));
        }
        Ok(())
    }

    pub fn is_quantized(&self) -> bool {
        matches!(self.classifier, Classifier::Quantized(_))
    }

    /// Normalize a feature vector and run the classifier.
    pub fn classify(&self, features: &[f64]) -> Result<Vec<f64>, DeployError> {
        let normalized = self.normalizer.apply(features)?;
        Ok(self.classifier.forward(&normalized)?)
    }

    /// Anomaly score on the normalized features.
    pub fn anomaly_score(&self, features: &[f64]) -> Result<f64, DeployError> {
        let normalized = self.normalizer.apply(features)?;
        Ok(self.anomaly.score(&normalized)?)
    }
}

// ---------------------------------------------------------------------------
// Binary serialization
// ---------------------------------------------------------------------------

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, vs: &[f64]) {
    for &v in vs {
        put_f64(out, v);
    }
}

fn encode_payload(bundle: &ModelBundle) -> Vec<u8> {
    let mut p = Vec::new();
    // Capture geometry.
    put_u32(&mut p, bundle.rate_hz);
    p.push(bundle.axes);
    put_u32(&mut p, bundle.window.window_ms);
    put_u32(&mut p, bundle.window.stride_ms);
    // Feature extraction settings.
    put_u32(&mut p, bundle.features.n_fft as u32);
    put_u32(&mut p, bundle.features.peaks_k as u32);
    p.push(match bundle.features.taper {
        Taper::Rectangular => 0,
        Taper::Hann => 1,
    });
    put_u32(&mut p, bundle.features.bands.len() as u32);
    for &(lo, hi) in &bundle.features.bands {
        put_f64(&mut p, lo);
        put_f64(&mut p, hi);
    }
    // Normalizer.
    put_u32(&mut p, bundle.normalizer.mean.len() as u32);
    put_f64s(&mut p, &bundle.normalizer.mean);
    put_f64s(&mut p, &bundle.normalizer.std);
    // Classifier.
    let (kind, dims, biases) = match &bundle.classifier {
        Classifier::Float(m) => (0u8, &m.dims, &m.biases),
        Classifier::Quantized(m) => (1u8, &m.dims, &m.biases),
    };
    p.push(kind);
    p.push(dims.len() as u8);
    for &d in dims {
        put_u32(&mut p, d as u32);
    }
    for l in 0..dims.len() - 1 {
        match &bundle.classifier {
            Classifier::Float(m) => put_f64s(&mut p, &m.weights[l]),
            Classifier::Quantized(m) => {
                p.extend(m.layers[l].weights.iter().map(|&q| q as u8));
                put_f64s(&mut p, &m.layers[l].scales);
            }
        }
        put_f64s(&mut p, &biases[l]);
    }
    // Anomaly model.
    put_u32(&mut p, bundle.anomaly.k as u32);
    put_u32(&mut p, bundle.anomaly.dim as u32);
    for c in &bundle.anomaly.centroids {
        put_f64s(&mut p, c);
    }
    put_f64s(&mut p, &bundle.anomaly.radii);
    // Labels.
    p.push(bundle.labels.len() as u8);
    for label in &bundle.labels {
        let bytes = label.as_bytes();
        p.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
        p.extend_from_slice(bytes);
    }
    p
}

struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DeployError> {
        if self.pos + n > self.buf.len() {
            return Err(DeployError::TruncatedFile);
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, DeployError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, DeployError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, DeployError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, DeployError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, DeployError> {
        (0..n).map(|_| self.f64()).collect()
    }
}

fn decode_payload(payload: &[u8]) -> Result<ModelBundle, DeployError> {
    let corrupt = |msg: &str| DeployError::CorruptBundle(msg.to_string());
    let mut r = ByteReader {
        buf: payload,
        pos: 0,
    };
    let rate_hz = r.u32()?;
    let axes = r.u8()?;
    let window = WindowConfig {
        window_ms: r.u32()?,
        stride_ms: r.u32()?,
    };
    let n_fft = r.u32()? as usize;
    let peaks_k = r.u32()? as usize;
    let taper = match r.u8()? {
        0 => Taper::Rectangular,
        1 => Taper::Hann,
        other => return Err(corrupt(&format!("unknown taper tag {other}"))),
    };
    let n_bands = r.u32()? as usize;
    if n_bands > 1024 {
        return Err(corrupt("implausible band count"));
    }
    let mut bands = Vec::with_capacity(n_bands);
    for _ in 0..n_bands {
        let lo = r.f64()?;
        let hi = r.f64()?;
        bands.push((lo, hi));
    }
    let features = FeatureConfig {
        n_fft,
        peaks_k,
        bands,
        taper,
    };
    let norm_dim = r.u32()? as usize;
    if norm_dim > 1 << 20 {
        return Err(corrupt("implausible normalizer dimension"));
    }
    let normalizer = Normalizer {
        mean: r.f64s(norm_dim)?,
        std: r.f64s(norm_dim)?,
    };
    let kind = r.u8()?;
    let n_dims = r.u8()? as usize;
    if n_dims < 2 || n_dims > 16 {
        return Err(corrupt("implausible layer count"));
    }
    let mut dims = Vec::with_capacity(n_dims);
    for _ in 0..n_dims {
        let d = r.u32()? as usize;
        if d == 0 || d > 1 << 20 {
            return Err(corrupt("implausible layer width"));
        }
        dims.push(d);
    }
    let classifier = match kind {
        0 => {
            let mut weights = Vec::new();
            let mut biases = Vec::new();
            for l in 0..n_dims - 1 {
                weights.push(r.f64s(dims[l] * dims[l + 1])?);
                biases.push(r.f64s(dims[l + 1])?);
            }
            Classifier::Float(MlpModel {
                dims,
                weights,
                biases,
            })
        }
        1 => {
            let mut layers = Vec::new();
            let mut biases = Vec::new();
            for l in 0..n_dims - 1 {
                let raw = r.take(dims[l] * dims[l + 1])?;
                let weights: Vec<i8> = raw.iter().map(|&b| b as i8).collect();
                let scales = r.f64s(dims[l + 1])?;
                layers.push(QuantLayer { weights, scales });
                biases.push(r.f64s(dims[l + 1])?);
            }
            Classifier::Quantized(QuantModel {
                dims,
                layers,
                biases,
            })
        }
        other => return Err(corrupt(&format!("unknown classifier tag {other}"))),
    };
    let k = r.u32()? as usize;
    let anomaly_dim = r.u32()? as usize;
    if k > 1 << 16 || anomaly_dim > 1 << 20 {
        return Err(corrupt("implausible anomaly model shape"));
    }
    let mut centroids = Vec::with_capacity(k);
    for _ in 0..k {
        centroids.push(r.f64s(anomaly_dim)?);
    }
    let radii = r.f64s(k)?;
    let anomaly = AnomalyModel {
        k,
        dim: anomaly_dim,
        centroids,
        radii,
    };
    let n_labels = r.u8()? as usize;
    let mut labels = Vec::with_capacity(n_labels);
    for _ in 0..n_labels {
        let len = r.u16()? as usize;
        let bytes = r.take(len)?;
        labels.push(
            String::from_utf8(bytes.to_vec())
                .map_err(|_| corrupt("label is not valid UTF-8"))?,
        );
    }
    if r.pos != payload.len() {
        return Err(corrupt("trailing bytes after last section"));
    }
    let bundle = ModelBundle {
        rate_hz,
        axes,
        window,
        features,
        normalizer,
        classifier,
        anomaly,
        labels,
    };
    bundle.validate()?;
    Ok(bundle)
}

impl ModelBundle {
    /// Full file image: `GAIT` magic, u16 version, u32 CRC32 of the
    /// payload, then the payload — all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let payload = encode_payload(self);
        let crc = crc32fast::hash(&payload);
        let mut out = Vec::with_capacity(10 + payload.len());
        out.extend_from_slice(&BUNDLE_MAGIC);
        out.extend_from_slice(&BUNDLE_VERSION.to_le_bytes());
        out.extend_from_slice(&crc.to_le_bytes());
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ModelBundle, DeployError> {
        if bytes.len() < 4 {
            return Err(DeployError::TruncatedFile);
        }
        if bytes[0..4] != BUNDLE_MAGIC {
            return Err(DeployError::BadMagic);
        }
        if bytes.len() < 10 {
            return Err(DeployError::TruncatedFile);
        }
        let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
        if version != BUNDLE_VERSION {
            return Err(DeployError::UnsupportedVersion { found: version });
        }
        let stored = u32::from_le_bytes(bytes[6..10].try_into().unwrap());
        let payload = &bytes[10..];
        let computed = crc32fast::hash(payload);
        if stored != computed {
            return Err(DeployError::ChecksumMismatch { stored, computed });
        }
        decode_payload(payload)
    }

    /// CRC32 of the encoded payload (the checksum stored in the file).
    pub fn checksum(&self) -> u32 {
        crc32fast::hash(&encode_payload(self))
    }
}

pub fn save_bundle(bundle: &ModelBundle, path: impl AsRef<Path>) -> Result<(), DeployError> {
    bundle.validate()?;
    std::fs::write(path, bundle.to_bytes())?;
    Ok(())
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<ModelBundle, DeployError> {
    ModelBundle::from_bytes(&std::fs::read(path)?)
}

// ---------------------------------------------------------------------------
// C header export
// ---------------------------------------------------------------------------

fn c_float_array(out: &mut String, name: &str, values: &[f64]) {
    out.push_str(&format!(
        "static const float {}[{}] = {{\n",
        name,
        values.len()
    ));
    for chunk in values.chunks(8) {
        let cells: Vec<String> = chunk.iter().map(|&v| format!("{:?}f", v as f32)).collect();
        out.push_str("    ");
        out.push_str(&cells.join(", "));
        out.push_str(",\n");
    }
    out.push_str("};\n\n");
}

fn c_int8_array(out: &mut String, name: &str, values: &[i8]) {
    out.push_str(&format!(
        "static const int8_t {}[{}] = {{\n",
        name,
        values.len()
    ));
    for chunk in values.chunks(16) {
        let cells: Vec<String> = chunk.iter().map(|v| v.to_string()).collect();
        out.push_str("    ");
        out.push_str(&cells.join(", "));
        out.push_str(",\n");
    }
    out.push_str("};\n\n");
}

/// Self-contained C header with the quantized weights, scales, biases,
/// normalizer, anomaly model, and label strings. The checksum comment
/// matches the CRC32 stored in the binary bundle.
pub fn export_c_header(bundle: &ModelBundle) -> Result<String, DeployError> {
    bundle.validate()?;
    let quant = match &bundle.classifier {
        Classifier::Quantized(q) => q,
        Classifier::Float(_) => return Err(DeployError::NotQuantized),
    };
    let mut out = String::new();
    out.push_str("/* Generated activity-recognition model data. Do not edit. */\n");
    out.push_str(&format!("/* bundle checksum: crc32 0x{:08X} */\n\n", bundle.checksum()));
    out.push_str("#ifndef GAITREC_MODEL_H\n#define GAITREC_MODEL_H\n\n");
    out.push_str("#include <stdint.h>\n\n");
    out.push_str(&format!("#define GAITREC_RATE_HZ {}\n", bundle.rate_hz));
    out.push_str(&format!("#define GAITREC_WINDOW_MS {}\n", bundle.window.window_ms));
    out.push_str(&format!("#define GAITREC_STRIDE_MS {}\n", bundle.window.stride_ms));
    out.push_str(&format!("#define GAITREC_NUM_AXES {}\n", bundle.axes));
    let n_layers = quant.dims.len() - 1;
    for (i, &d) in quant.dims.iter().enumerate() {
        let name = if i == 0 {
            "GAITREC_INPUT_DIM".to_string()
        } else if i == quant.dims.len() - 1 {
            "GAITREC_OUTPUT_DIM".to_string()
        } else {
            format!("GAITREC_HIDDEN{i}_DIM")
        };
        out.push_str(&format!("#define {name} {d}\n"));
    }
    out.push_str(&format!("#define GAITREC_NUM_CLASSES {}\n", bundle.labels.len()));
    let param_count: usize = quant.dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    out.push_str(&format!("#define GAITREC_PARAMETER_COUNT {param_count}\n"));
    out.push_str(&format!("#define GAITREC_ANOMALY_K {}\n\n", bundle.anomaly.k));

    out.push_str(&format!(
        "static const char *const gaitrec_labels[{}] = {{\n",
        bundle.labels.len()
    ));
    for label in &bundle.labels {
        out.push_str(&format!("    \"{label}\",\n"));
    }
    out.push_str("};\n\n");

    for l in 0..n_layers {
        c_int8_array(&mut out, &format!("gaitrec_w{}", l + 1), &quant.layers[l].weights);
        c_float_array(
            &mut out,
            &format!("gaitrec_w{}_scales", l + 1),
            &quant.layers[l].scales,
        );
        c_float_array(&mut out, &format!("gaitrec_b{}", l + 1), &quant.biases[l]);
    }
    c_float_array(&mut out, "gaitrec_norm_mean", &bundle.normalizer.mean);
    c_float_array(&mut out, "gaitrec_norm_std", &bundle.normalizer.std);
    let centroids_flat: Vec<f64> = bundle
        .anomaly
        .centroids
        .iter()
        .flatten()
        .copied()
        .collect();
    c_float_array(&mut out, "gaitrec_anomaly_centroids", &centroids_flat);
    c_float_array(&mut out, "gaitrec_anomaly_radii", &bundle.anomaly.radii);
    out.push_str("#endif /* GAITREC_MODEL_H */\n");
    Ok(out)
}

// ---------------------------------------------------------------------------
// Streaming engine
// ---------------------------------------------------------------------------

/// Snap a probability to the nearest 1/256.
pub fn quantize_probability(p: f64) -> f64 {
    (p * PROB_GRID).round() / PROB_GRID
}

/// One emitted classification: probabilities already on the 1/256 grid,
/// plus the raw softmax outputs they were rounded from.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassificationEvent {
    /// Timestamp of the last sample in the window.
    pub window_end_ms: u64,
    /// Quantized to the 1/256 grid, classifier output order.
    pub probabilities: Vec<f64>,
    /// Raw softmax outputs (sum to 1).
    pub raw_probabilities: Vec<f64>,
    /// Argmax over the raw probabilities (ties toward the lowest index).
    pub predicted: usize,
    pub anomaly_score: f64,
    /// Class display names, same order as `probabilities`.
    pub labels: Vec<String>,
    pub dsp_ms: u64,
    pub classify_ms: u64,
    pub anomaly_ms: u64,
}

/// Serial-monitor text for one event: a timing header, one line per class
/// with five-decimal probability, then the three-decimal anomaly score.
pub fn format_event(ev: &ClassificationEvent) -> String {
    let mut out = format!(
        "Predictions (DSP: {} ms., Classification: {} ms., Anomaly: {} ms.):\n",
        ev.dsp_ms, ev.classify_ms, ev.anomaly_ms
    );
    for (label, p) in ev.labels.iter().zip(&ev.probabilities) {
        out.push_str(&format!("    {label}: {p:.5}\n"));
    }
    out.push_str(&format!("    anomaly score: {:.3}\n", ev.anomaly_score));
    out
}

/// Single-consumer sliding-window inference over a live sample stream.
/// Holds at most one window of samples; emits exactly when a full window
/// is present and a stride boundary is crossed, so a replayed recording
/// produces the same events as batch segmentation.
#[derive(Debug)]
pub struct StreamEngine {
    bundle: ModelBundle,
    buffer: VecDeque<Sample>,
    window_samples: usize,
    stride_samples: usize,
    total_pushed: u64,
    last_t_ms: Option<u64>,
}

impl StreamEngine {
    pub fn new(bundle: ModelBundle) -> Result<StreamEngine, DeployError> {
        bundle.validate()?;
        let window_samples = bundle.window.window_samples(bundle.rate_hz)?;
        let stride_samples = bundle.window.stride_samples(bundle.rate_hz)?;
        Ok(StreamEngine {
            buffer: VecDeque::with_capacity(window_samples),
            window_samples,
            stride_samples,
            total_pushed: 0,
            last_t_ms: None,
            bundle,
        })
    }

    pub fn bundle(&self) -> &ModelBundle {
        &self.bundle
    }

    /// Feed one sample; returns an event when a window completes on a
    /// stride boundary.
    pub fn push(&mut self, sample: Sample) -> Result<Option<ClassificationEvent>, DeployError> {
        if let Some(last) = self.last_t_ms {
            if sample.t_ms <= last {
                return Err(DeployError::OutOfOrderSample {
                    last_ms: last,
                    got_ms: sample.t_ms,
                });
            }
        }
        let found_axes = if sample.gyro.is_some() { 6 } else { 3 };
        if found_axes != self.bundle.axes {
            return Err(DeployError::AxesMismatch {
                expected: self.bundle.axes,
                found: found_axes,
            });
        }
        self.last_t_ms = Some(sample.t_ms);
        if self.buffer.len() == self.window_samples {
            self.buffer.pop_front();
        }
        self.buffer.push_back(sample);
        self.total_pushed += 1;

        let filled = self.total_pushed >= self.window_samples as u64;
        if !filled || (self.total_pushed - self.window_samples as u64) % self.stride_samples as u64 != 0
        {
            return Ok(None);
        }

        let window: &[Sample] = self.buffer.make_contiguous();
        let window_end_ms = window.last().expect("window non-empty").t_ms;

        let t0 = Instant::now();
        let features =
            extract_features_from_samples(window, self.bundle.rate_hz, &self.bundle.features)?;
        let normalized = self.bundle.normalizer.apply(&features)?;
        let dsp_ms = t0.elapsed().as_millis() as u64;

        let t1 = Instant::now();
        let raw_probabilities = self.bundle.classifier.forward(&normalized)?;
        let classify_ms = t1.elapsed().as_millis() as u64;

        let t2 = Instant::now();
        let anomaly_score = self.bundle.anomaly.score(&normalized)?;
        let anomaly_ms = t2.elapsed().as_millis() as u64;

        let probabilities: Vec<f64> =
            raw_probabilities.iter().map(|&p| quantize_probability(p)).collect();
        let predicted = argmax(&raw_probabilities);
        Ok(Some(ClassificationEvent {
            window_end_ms,
            probabilities,
            raw_probabilities,
            predicted,
            anomaly_score,
            labels: self.bundle.labels.clone(),
            dsp_ms,
            classify_ms,
            anomaly_ms,
        }))
    }
}

/// The standard label strings in classifier output order.
pub fn default_labels() -> Vec<String> {
    ActivityLabel::ALL
        .iter()
        .map(|l| l.display_name().to_string())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anomaly::fit_kmeans;
    use crate::dataset::{synthesize_recording, ActivityLabel};
    use crate::features::fit_normalizer;
    use crate::model::init_mlp;
    use crate::windowing::segment;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// A structurally valid bundle around a randomly initialized net.
    fn test_bundle(seed: u64, quantized: bool) -> ModelBundle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mlp = init_mlp(&[39, 20, 10, 4], seed).unwrap();
        let feats: Vec<Vec<f64>> = (0..24)
            .map(|_| (0..39).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let normalizer = fit_normalizer(&feats, crate::features::STD_EPSILON).unwrap();
        let normalized: Vec<Vec<f64>> = feats.iter().map(|f| normalizer.apply(f).unwrap()).collect();
        let anomaly = fit_kmeans(&normalized, 4, seed).unwrap();
        let classifier = if quantized {
            Classifier::Quantized(quantize(&mlp))
        } else {
            Classifier::Float(mlp)
        };
        ModelBundle {
            rate_hz: 100,
            axes: 3,
            window: WindowConfig::default(),
            features: FeatureConfig::default_for_rate(100),
            normalizer,
            classifier,
            anomaly,
            labels: default_labels(),
        }
    }

    #[test]
    fn zero_weights_quantize_to_zero_with_floored_scales() {
        let m = MlpModel {
            dims: vec![4, 3, 3, 2],
            weights: vec![vec![0.0; 12], vec![0.0; 9], vec![0.0; 6]],
            biases: vec![vec![0.0; 3], vec![0.0; 3], vec![0.0; 2]],
        };
        let q = quantize(&m);
        for layer in &q.layers {
            assert!(layer.weights.iter().all(|&w| w == 0));
            assert!(layer.scales.iter().all(|&s| s == SCALE_FLOOR));
        }
    }

    #[test]
    fn quantization_error_is_within_half_scale() {
        for seed in 0..5 {
            let m = init_mlp(&[39, 20, 10, 4], seed).unwrap();
            let q = quantize(&m);
            for l in 0..3 {
                let (n_in, n_out) = (m.dims[l], m.dims[l + 1]);
                for o in 0..n_out {
                    let scale = q.layers[l].scales[o];
                    assert!(scale > 0.0);
                    for i in 0..n_in {
                        let w = m.weights[l][o * n_in + i];
                        let deq = q.layers[l].weights[o * n_in + i] as f64 * scale;
                        assert!(
                            (w - deq).abs() <= scale / 2.0 + 1e-15,
                            "layer {l} row {o} col {i}: {w} vs {deq} (scale {scale})"
                        );
                    }
                }
                // The row maximum must map to ±127.
                for o in 0..n_out {
                    let row = &q.layers[l].weights[o * n_in..(o + 1) * n_in];
                    assert_eq!(row.iter().map(|w| w.unsigned_abs()).max(), Some(127));
                }
            }
        }
    }

    #[test]
    fn quantized_forward_tracks_float_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = init_mlp(&[39, 20, 10, 4], 3).unwrap();
        let q = quantize(&m);
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let x: Vec<f64> = (0..39).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let pf = m.forward(&x).unwrap();
            let pq = q.forward(&x).unwrap();
            let sum: f64 = pq.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-9);
            for (a, b) in pf.iter().zip(&pq) {
                worst = worst.max((a - b).abs());
            }
        }
        assert!(worst <= 0.05, "probability deviation {worst}");
    }

    #[test]
    fn bundle_round_trip_is_identity_for_both_classifier_kinds() {
        for quantized in [false, true] {
            let bundle = test_bundle(7, quantized);
            let bytes = bundle.to_bytes();
            let loaded = ModelBundle::from_bytes(&bytes).unwrap();
            assert_eq!(bundle, loaded);

            // Inference parity on 100 random inputs, bitwise.
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            for _ in 0..100 {
                let x: Vec<f64> = (0..39).map(|_| rng.gen_range(-3.0..3.0)).collect();
                assert_eq!(bundle.classify(&x).unwrap(), loaded.classify(&x).unwrap());
                assert_eq!(
                    bundle.anomaly_score(&x).unwrap(),
                    loaded.anomaly_score(&x).unwrap()
                );
            }
        }
    }

    #[test]
    fn bundle_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let bundle = test_bundle(11, true);
        save_bundle(&bundle, &path).unwrap();
        assert_eq!(load_bundle(&path).unwrap(), bundle);
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        let mut bytes = test_bundle(1, false).to_bytes();
        bytes[0] = b'X';
        assert!(matches!(
            ModelBundle::from_bytes(&bytes),
            Err(DeployError::BadMagic)
        ));
    }

    #[test]
    fn unknown_version_is_rejected() {
        let mut bytes = test_bundle(1, false).to_bytes();
        bytes[4] = 0xFF;
        assert!(matches!(
            ModelBundle::from_bytes(&bytes),
            Err(DeployError::UnsupportedVersion { found: 0x00FF })
        ));
    }

    #[test]
    fn flipped_payload_byte_fails_the_checksum() {
        let mut bytes = test_bundle(1, true).to_bytes();
        let idx = bytes.len() - 20;
        bytes[idx] ^= 0x40;
        assert!(matches!(
            ModelBundle::from_bytes(&bytes),
            Err(DeployError::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn truncation_is_detected() {
        let bytes = test_bundle(1, false).to_bytes();
        assert!(matches!(
            ModelBundle::from_bytes(&bytes[..3]),
            Err(DeployError::TruncatedFile)
        ));
        assert!(matches!(
            ModelBundle::from_bytes(&bytes[..8]),
            Err(DeployError::TruncatedFile)
        ));
        // Cutting the payload breaks the checksum before parsing starts.
        assert!(matches!(
            ModelBundle::from_bytes(&bytes[..bytes.len() - 5]),
            Err(DeployError::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn header_requires_a_quantized_classifier() {
        assert!(matches!(
            export_c_header(&test_bundle(2, false)),
            Err(DeployError::NotQuantized)
        ));
    }

    #[test]
    fn header_declares_1054_parameters_and_matching_arrays() {
        let bundle = test_bundle(3, true);
        let text = export_c_header(&bundle).unwrap();
        assert!(text.contains("#define GAITREC_PARAMETER_COUNT 1054\n"));
        // Sum the declared lengths of the weight and bias arrays.
        let mut declared = 0usize;
        for line in text.lines() {
            let is_param_array = line.contains("int8_t gaitrec_w")
                || (line.contains("float gaitrec_b") && !line.contains("_scales"));
            if is_param_array {
                let open = line.find('[').unwrap();
                let close = line.find(']').unwrap();
                declared += line[open + 1..close].parse::<usize>().unwrap();
            }
        }
        assert_eq!(declared, 1054);
        for needle in [
            "#define GAITREC_INPUT_DIM 39",
            "#define GAITREC_HIDDEN1_DIM 20",
            "#define GAITREC_HIDDEN2_DIM 10",
            "#define GAITREC_OUTPUT_DIM 4",
            "gaitrec_labels[4]",
            "\"Going Downstairs\"",
            "gaitrec_norm_mean[39]",
            "gaitrec_norm_std[39]",
            "gaitrec_anomaly_radii[4]",
        ] {
            assert!(text.contains(needle), "missing {needle:?}");
        }
    }

    #[test]
    fn header_is_deterministic_and_checksum_matches_binary() {
        let bundle = test_bundle(4, true);
        let a = export_c_header(&bundle).unwrap();
        let b = export_c_header(&bundle).unwrap();
        assert_eq!(a, b);

        let bytes = bundle.to_bytes();
        let stored_crc = u32::from_le_bytes(bytes[6..10].try_into().unwrap());
        assert!(
            a.contains(&format!("crc32 0x{stored_crc:08X}")),
            "header lacks the binary checksum 0x{stored_crc:08X}"
        );
    }

    #[test]
    fn stream_emits_first_event_exactly_at_window_fill() {
        let bundle = test_bundle(5, false);
        let mut engine = StreamEngine::new(bundle).unwrap();
        let rec = synthesize_recording(ActivityLabel::Walking, 4.0, 100, 21).unwrap();
        for (i, s) in rec.samples.iter().take(200).enumerate() {
            let ev = engine.push(s.clone()).unwrap();
            if i < 199 {
                assert!(ev.is_none(), "event before the window filled (i={i})");
            } else {
                let ev = ev.expect("event at the 200th sample");
                assert_eq!(ev.window_end_ms, rec.samples[199].t_ms);
            }
        }
    }

    #[test]
    fn ten_second_replay_emits_101_events() {
        let bundle = test_bundle(5, true);
        let mut engine = StreamEngine::new(bundle).unwrap();
        let rec = synthesize_recording(ActivityLabel::Stationary, 10.0, 100, 22).unwrap();
        let mut events = 0;
        for s in &rec.samples {
            if engine.push(s.clone()).unwrap().is_some() {
                events += 1;
            }
        }
        assert_eq!(events, 101);
    }

    #[test]
    fn streaming_matches_batch_segmentation_window_for_window() {
        for quantized in [false, true] {
            let bundle = test_bundle(6, quantized);
            let rec = synthesize_recording(ActivityLabel::GoingUpstairs, 6.0, 100, 23).unwrap();

            // Batch path: segment, featurize, classify, quantize.
            let windows = segment(&rec, &bundle.window).unwrap();
            let mut batch: Vec<(Vec<f64>, f64)> = Vec::new();
            for w in &windows {
                let f =
                    extract_features_from_samples(w.samples, bundle.rate_hz, &bundle.features)
                        .unwrap();
                let probs: Vec<f64> = bundle
                    .classify(&f)
                    .unwrap()
                    .iter()
                    .map(|&p| quantize_probability(p))
                    .collect();
                batch.push((probs, bundle.anomaly_score(&f).unwrap()));
            }

            let mut engine = StreamEngine::new(bundle).unwrap();
            let mut streamed: Vec<(Vec<f64>, f64)> = Vec::new();
            for s in &rec.samples {
                if let Some(ev) = engine.push(s.clone()).unwrap() {
                    streamed.push((ev.probabilities, ev.anomaly_score));
                }
            }

            assert_eq!(batch.len(), streamed.len());
            for (i, ((bp, bs), (sp, ss))) in batch.iter().zip(&streamed).enumerate() {
                assert_eq!(bp, sp, "window {i}: quantized probabilities differ");
                assert!((bs - ss).abs() <= 1e-9, "window {i}: scores {bs} vs {ss}");
            }
        }
    }

    #[test]
    fn out_of_order_sample_is_rejected() {
        let bundle = test_bundle(5, false);
        let mut engine = StreamEngine::new(bundle).unwrap();
        let mk = |t_ms| Sample {
            t_ms,
            accel: [0.0, 0.0, 1.0],
            gyro: None,
        };
        engine.push(mk(0)).unwrap();
        engine.push(mk(10)).unwrap();
        assert!(matches!(
            engine.push(mk(10)),
            Err(DeployError::OutOfOrderSample { last_ms: 10, got_ms: 10 })
        ));
    }

    #[test]
    fn gyro_mismatch_is_rejected() {
        let bundle = test_bundle(5, false); // 3-axis bundle
        let mut engine = StreamEngine::new(bundle).unwrap();
        let s = Sample {
            t_ms: 0,
            accel: [0.0, 0.0, 1.0],
            gyro: Some([0.0, 0.0, 0.0]),
        };
        assert!(matches!(
            engine.push(s),
            Err(DeployError::AxesMismatch { expected: 3, found: 6 })
        ));
    }

    #[test]
    fn event_probabilities_live_on_the_256_grid() {
        let bundle = test_bundle(8, true);
        let mut engine = StreamEngine::new(bundle).unwrap();
        let rec = synthesize_recording(ActivityLabel::Walking, 4.0, 100, 24).unwrap();
        let mut seen = 0;
        for s in &rec.samples {
            if let Some(ev) = engine.push(s.clone()).unwrap() {
                seen += 1;
                let raw_sum: f64 = ev.raw_probabilities.iter().sum();
                assert!((raw_sum - 1.0).abs() <= 1e-9);
                for &p in &ev.probabilities {
                    let scaled = p * 256.0;
                    assert_eq!(scaled, scaled.round(), "probability {p} off-grid");
                    assert!((0.0..=256.0).contains(&scaled));
                }
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn format_event_matches_the_golden_layout() {
        let ev = ClassificationEvent {
            window_end_ms: 1990,
            probabilities: vec![0.0, 0.0, 255.0 / 256.0, 0.0],
            raw_probabilities: vec![0.0005, 0.0005, 0.998, 0.001],
            predicted: 2,
            anomaly_score: -0.069,
            labels: default_labels(),
            dsp_ms: 3,
            classify_ms: 0,
            anomaly_ms: 0,
        };
        assert_eq!(
            format_event(&ev),
            "Predictions (DSP: 3 ms., Classification: 0 ms., Anomaly: 0 ms.):\n\
             \x20   Going Downstairs: 0.00000\n\
             \x20   Going Upstairs: 0.00000\n\
             \x20   Stationary: 0.99609\n\
             \x20   Walking: 0.00000\n\
             \x20   anomaly score: -0.069\n"
        );
    }

    #[test]
    fn bundle_validation_catches_inconsistent_dimensions() {
        let mut bundle = test_bundle(1, false);
        bundle.normalizer.mean.pop();
        bundle.normalizer.std.pop();
        assert!(matches!(
            bundle.validate(),
            Err(DeployError::CorruptBundle(_))
        ));

        let mut bundle = test_bundle(1, false);
        bundle.labels.pop();
        assert!(matches!(
            bundle.validate(),
            Err(DeployError::CorruptBundle(_))
        ));
    }

    mod proptests {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn quantized_probabilities_stay_on_grid(p in 0.0f64..=1.0) {
                let q = quantize_probability(p);
                let scaled = q * 256.0;
                prop_assert_eq!(scaled, scaled.round());
                prop_assert!((0.0..=1.0).contains(&q));
                prop_assert!((q - p).abs() <= 0.5 / 256.0 + 1e-12);
            }
        }
    }
}
