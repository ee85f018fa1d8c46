//! End-to-end orchestration: dataset → split → windows → features →
//! normalizer → classifier + anomaly model → deployable bundle → report.

use crate::anomaly::fit_kmeans;
use crate::dataset::{
    split_by_recording, synthesize_with_config, ActivityLabel, Dataset, DatasetError, SynthConfig,
};
use crate::deploy::{default_labels, quantize, Classifier, DeployError, ModelBundle};
use crate::features::{extract_features, fit_normalizer, FeatureConfig, STD_EPSILON};
use crate::metrics::{build_report, EvalReport, MetricsError};
use crate::model::{
    argmax, init_mlp, loss_ce, train, ModelError, TrainConfig, TrainHistory,
};
use crate::windowing::{segment, WindowConfig, WindowingError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Hidden layer widths of the classifier.
pub const HIDDEN_DIMS: [usize; 2] = [20, 10];
/// Default cluster count for the anomaly model.
pub const DEFAULT_K_CLUSTERS: usize = 8;
/// Default train share of recordings.
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Windowing(#[from] WindowingError),
    #[error(transparent)]
    Feature(#[from] crate::features::FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Anomaly(#[from] crate::anomaly::AnomalyError),
    #[error(transparent)]
    Deploy(#[from] DeployError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset rate {dataset} Hz does not match bundle rate {bundle} Hz")]
    RateMismatch { dataset: u32, bundle: u32 },
    #[error("dataset has {dataset} axes but the bundle expects {bundle}")]
    AxesMismatch { dataset: u8, bundle: u8 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    /// Master seed; every random stage derives from it.
    pub seed: u64,
    pub window: WindowConfig,
    /// `None` picks the default analysis setup for the dataset rate.
    pub features: Option<FeatureConfig>,
    pub train_fraction: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub k_clusters: usize,
    pub quantize: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            seed: 42,
            window: WindowConfig::default(),
            features: None,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            k_clusters: DEFAULT_K_CLUSTERS,
            quantize: false,
        }
    }
}

/// Everything a training run produces.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub bundle: ModelBundle,
    pub history: TrainHistory,
    /// Evaluation of the final bundle on the held-out recordings.
    pub report: EvalReport,
    pub train_ids: Vec<String>,
    /// Held-out recordings, for re-running `evaluate_bundle` later.
    pub test: Dataset,
}

/// Windows of a whole dataset flattened to feature vectors plus class
/// indices.
fn featurize_dataset(
    ds: &Dataset,
    window: &WindowConfig,
    features: &FeatureConfig,
    rate_hz: u32,
) -> Result<(Vec<Vec<f64>>, Vec<usize>), PipelineError> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for rec in &ds.recordings {
        for w in segment(rec, window)? {
            xs.push(extract_features(&w, rate_hz, features)?);
            ys.push(w.label.class_index());
        }
    }
    Ok((xs, ys))
}

/// Trains the classifier and anomaly model and packs the bundle.
///
/// Seed fan-out (fixed order, all from one stream over `opts.seed`):
/// recording split, weight initialization, epoch shuffling, clustering.
pub fn run_training(ds: &Dataset, opts: &TrainOptions) -> Result<TrainOutcome, PipelineError> {
    let rate_hz = ds.rate_hz().ok_or(PipelineError::EmptyDataset)?;
    let axes = ds.axes().ok_or(PipelineError::EmptyDataset)?;
    let mut master = ChaCha8Rng::seed_from_u64(opts.seed);
    let split_seed: u64 = master.gen();
    let init_seed: u64 = master.gen();
    let shuffle_seed: u64 = master.gen();
    let cluster_seed: u64 = master.gen();

    let feature_cfg = opts
        .features
        .clone()
        .unwrap_or_else(|| FeatureConfig::default_for_rate(rate_hz));
    let (train_ds, test_ds) = split_by_recording(ds, opts.train_fraction, split_seed)?;

    let (train_raw, train_y) = featurize_dataset(&train_ds, &opts.window, &feature_cfg, rate_hz)?;
    let (test_raw, test_y) = featurize_dataset(&test_ds, &opts.window, &feature_cfg, rate_hz)?;

    let normalizer = fit_normalizer(&train_raw, STD_EPSILON)?;
    let train_x: Vec<Vec<f64>> = train_raw
        .iter()
        .map(|f| normalizer.apply(f))
        .collect::<Result<_, _>>()?;
    let test_x: Vec<Vec<f64>> = test_raw
        .iter()
        .map(|f| normalizer.apply(f))
        .collect::<Result<_, _>>()?;

    let input_dim = normalizer.dim();
    let dims = [input_dim, HIDDEN_DIMS[0], HIDDEN_DIMS[1], ActivityLabel::COUNT];
    let mlp = init_mlp(&dims, init_seed)?;
    let train_cfg = TrainConfig {
        epochs: opts.epochs,
        batch_size: opts.batch_size,
        learning_rate: opts.learning_rate,
        seed: shuffle_seed,
        ..TrainConfig::default()
    };
    let (mlp, history) = train(mlp, &train_x, &train_y, &test_x, &test_y, &train_cfg)?;

    let anomaly = fit_kmeans(&train_x, opts.k_clusters, cluster_seed)?;

    let classifier = if opts.quantize {
        Classifier::Quantized(quantize(&mlp))
    } else {
        Classifier::Float(mlp)
    };
    let bundle = ModelBundle {
        rate_hz,
        axes,
        window: opts.window,
        features: feature_cfg,
        normalizer,
        classifier,
        anomaly,
        labels: default_labels(),
    };
    bundle.validate()?;

    let report = evaluate_bundle(&bundle, &test_ds)?;
    Ok(TrainOutcome {
        bundle,
        history,
        report,
        train_ids: train_ds.recordings.iter().map(|r| r.id.clone()).collect(),
        test: test_ds,
    })
}

/// Segments and classifies every recording with the bundle's own
/// configuration and reports the per-window metrics.
pub fn evaluate_bundle(bundle: &ModelBundle, ds: &Dataset) -> Result<EvalReport, PipelineError> {
    let rate_hz = ds.rate_hz().ok_or(PipelineError::EmptyDataset)?;
    let axes = ds.axes().ok_or(PipelineError::EmptyDataset)?;
    if rate_hz != bundle.rate_hz {
        return Err(PipelineError::RateMismatch {
            dataset: rate_hz,
            bundle: bundle.rate_hz,
        });
    }
    if axes != bundle.axes {
        return Err(PipelineError::AxesMismatch {
            dataset: axes,
            bundle: bundle.axes,
        });
    }
    let mut preds = Vec::new();
    let mut probs = Vec::new();
    let mut labels = Vec::new();
    let mut loss_acc = 0.0f64;
    for rec in &ds.recordings {
        for w in segment(rec, &bundle.window)? {
            let features = extract_features(&w, rate_hz, &bundle.features)?;
            let p = bundle.classify(&features)?;
            let y = w.label.class_index();
            loss_acc += loss_ce(&p, y);
            preds.push(argmax(&p));
            probs.push(p);
            labels.push(y);
        }
    }
    if labels.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    let mean_loss = loss_acc / labels.len() as f64;
    Ok(build_report(&preds, &probs, &labels, mean_loss)?)
}

/// Balanced synthetic dataset: `n_per_class` recordings per activity, ids
/// `<slug>-<i>`, per-recording seeds drawn from one stream over `seed`.
pub fn synth_dataset(
    cfg: &SynthConfig,
    n_per_class: usize,
    duration_s: f64,
    rate_hz: u32,
    seed: u64,
    with_gyro: bool,
) -> Result<Dataset, DatasetError> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut recordings = Vec::with_capacity(n_per_class * ActivityLabel::COUNT);
    for label in ActivityLabel::ALL {
        for i in 0..n_per_class {
            let rec_seed: u64 = master.gen();
            let id = format!("{}-{i:02}", label.slug());
            recordings.push(synthesize_with_config(
                cfg, label, id, duration_s, rate_hz, rec_seed, with_gyro,
            )?);
        }
    }
    Dataset::new(recordings)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_options() -> TrainOptions {
        TrainOptions {
            epochs: 12,
            ..TrainOptions::default()
        }
    }

    fn small_dataset(seed: u64) -> Dataset {
        synth_dataset(&SynthConfig::default(), 5, 4.0, 100, seed, false).unwrap()
    }

    #[test]
    fn synth_dataset_is_balanced_unique_and_deterministic() {
        let ds = small_dataset(1);
        assert_eq!(ds.len(), 20);
        assert_eq!(ds.class_counts(), [5, 5, 5, 5]);
        assert_eq!(ds.rate_hz(), Some(100));
        assert_eq!(ds.axes(), Some(3));
        let again = small_dataset(1);
        assert_eq!(ds.recordings, again.recordings);
        let other = small_dataset(2);
        assert_ne!(ds.recordings, other.recordings);
    }

    #[test]
    fn training_produces_a_consistent_outcome() {
        let ds = small_dataset(3);
        let outcome = run_training(&ds, &small_options()).unwrap();
        assert!(outcome.bundle.validate().is_ok());
        assert!(!outcome.bundle.is_quantized());
        assert_eq!(outcome.history.epochs.len(), 12);
        assert_eq!(outcome.train_ids.len(), 16);
        assert_eq!(outcome.test.len(), 4);
        // Train and test recordings partition the dataset.
        for rec in &outcome.test.recordings {
            assert!(!outcome.train_ids.contains(&rec.id));
        }
        // The synthetic classes are easy; even a short run should separate
        // them far better than chance.
        assert!(
            outcome.report.accuracy >= 0.75,
            "accuracy {}",
            outcome.report.accuracy
        );
    }

    #[test]
    fn identical_options_reproduce_identical_artifacts() {
        let ds = small_dataset(4);
        let a = run_training(&ds, &small_options()).unwrap();
        let b = run_training(&ds, &small_options()).unwrap();
        assert_eq!(a.bundle, b.bundle);
        assert_eq!(a.bundle.to_bytes(), b.bundle.to_bytes());
        assert_eq!(a.history, b.history);
        assert_eq!(a.report, b.report);
        assert_eq!(
            serde_json::to_string(&a.report).unwrap(),
            serde_json::to_string(&b.report).unwrap()
        );

        let mut opts = small_options();
        opts.seed = 43;
        let c = run_training(&ds, &opts).unwrap();
        assert_ne!(a.bundle.to_bytes(), c.bundle.to_bytes());
    }

    #[test]
    fn evaluate_bundle_reproduces_the_training_report() {
        let ds = small_dataset(5);
        let outcome = run_training(&ds, &small_options()).unwrap();
        let again = evaluate_bundle(&outcome.bundle, &outcome.test).unwrap();
        assert_eq!(outcome.report, again);
    }

    #[test]
    fn quantized_training_emits_a_quantized_bundle() {
        let ds = small_dataset(6);
        let mut opts = small_options();
        opts.quantize = true;
        let outcome = run_training(&ds, &opts).unwrap();
        assert!(outcome.bundle.is_quantized());
        assert!(crate::deploy::export_c_header(&outcome.bundle).is_ok());
        assert!(
            outcome.report.accuracy >= 0.75,
            "accuracy {}",
            outcome.report.accuracy
        );
    }

    #[test]
    fn evaluation_rejects_rate_and_axes_mismatches() {
        let ds = small_dataset(7);
        let outcome = run_training(&ds, &small_options()).unwrap();
        let other_rate = synth_dataset(&SynthConfig::default(), 1, 4.0, 50, 1, false).unwrap();
        assert!(matches!(
            evaluate_bundle(&outcome.bundle, &other_rate),
            Err(PipelineError::RateMismatch { dataset: 50, bundle: 100 })
        ));
        let with_gyro = synth_dataset(&SynthConfig::default(), 1, 4.0, 100, 1, true).unwrap();
        assert!(matches!(
            evaluate_bundle(&outcome.bundle, &with_gyro),
            Err(PipelineError::AxesMismatch { dataset: 6, bundle: 3 })
        ));
    }
}
