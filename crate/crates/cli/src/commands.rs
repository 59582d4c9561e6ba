//! The train / eval / measures entry points.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use ranset::credal::{credal_distance, credal_extent, credal_vertices, DistanceMode};
use ranset::data::{self, Dataset, FileDigest};
use ranset::measures::{measure_report, MeasureReport};
use ranset::net::{self, EpistemicNetwork, NetError};
use ranset::MassFunction;

use crate::config::{DatasetSpec, EvalConfig, ExperimentConfig, KNOWN_METRICS};
use crate::report::Report;

/// Errors are split by exit code: bad input (1) vs numeric failure (2).
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Numeric(_) => 2,
        }
    }
}

fn input_err(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<data::DataError> for CliError {
    fn from(e: data::DataError) -> Self {
        CliError::Input(e.to_string())
    }
}

pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub distance_mode: Option<DistanceMode>,
}

/// Loaded train/test pair plus the digests of every file read.
struct LoadedData {
    train: Dataset,
    test: Dataset,
    digests: Vec<FileDigest>,
}

fn load_dataset(spec: &DatasetSpec) -> Result<LoadedData, CliError> {
    match spec {
        DatasetSpec::Csv {
            path,
            label_column,
            labels,
            split,
        } => {
            let frame = ranset::Frame::new(labels.clone()).map_err(input_err)?;
            let full = data::load_csv(path, label_column, &frame)?;
            let digests = full.provenance.clone();
            if split.fractions.len() == 1 {
                let test = full.clone();
                Ok(LoadedData {
                    train: full,
                    test,
                    digests,
                })
            } else if split.fractions.len() == 2 {
                let mut parts = data::split(&full, &split.fractions, split.seed)?;
                let test = parts.pop().expect("two splits");
                let train = parts.pop().expect("two splits");
                Ok(LoadedData {
                    train,
                    test,
                    digests,
                })
            } else {
                Err(CliError::Input(format!(
                    "expected 1 or 2 split fractions, got {}",
                    split.fractions.len()
                )))
            }
        }
        DatasetSpec::Idx {
            images_path,
            labels_path,
            test_images_path,
            test_labels_path,
            keep_classes,
        } => {
            let train = data::load_idx(images_path, labels_path, keep_classes)?;
            let mut digests = train.provenance.clone();
            let test = match (test_images_path, test_labels_path) {
                (Some(ti), Some(tl)) => {
                    let test = data::load_idx(ti, tl, keep_classes)?;
                    digests.extend(test.provenance.clone());
                    test
                }
                (None, None) => train.clone(),
                _ => {
                    return Err(CliError::Input(
                        "testImagesPath and testLabelsPath must be given together".into(),
                    ))
                }
            };
            Ok(LoadedData {
                train,
                test,
                digests,
            })
        }
    }
}

struct EvalStats {
    accuracy: f64,
    mean_min_vertex: f64,
    mean_projection: f64,
    mean_extent: f64,
    mean_measures: BTreeMap<String, f64>,
}

fn metric_value(report: &MeasureReport, name: &str) -> Option<f64> {
    match name {
        "nguyen" => Some(report.nguyen),
        "hohle" => Some(report.hohle),
        "yager" => Some(report.yager),
        "klirRamer" => Some(report.klir_ramer.total),
        "shannonOfPignistic" => Some(report.shannon_of_pignistic),
        _ => None,
    }
}

fn evaluate(
    net: &EpistemicNetwork,
    test: &Dataset,
    metrics: &[String],
) -> Result<EvalStats, CliError> {
    for name in metrics {
        if !KNOWN_METRICS.contains(&name.as_str()) {
            return Err(CliError::Input(format!(
                "unknown metric `{name}`; known: {KNOWN_METRICS:?}"
            )));
        }
    }
    let preds: Vec<MassFunction> = net.predict(test.features.view())?;
    let n = preds.len() as f64;
    let mut correct = 0usize;
    let mut sum_min = 0.0;
    let mut sum_proj = 0.0;
    let mut sum_extent = 0.0;
    let mut sums: BTreeMap<String, f64> =
        metrics.iter().map(|m| (m.clone(), 0.0)).collect();
    let num_classes = test.frame.len();
    for (m, &label) in preds.iter().zip(&test.labels) {
        if m.argmax_singleton() == label {
            correct += 1;
        }
        let pred = credal_vertices(m).map_err(input_err)?;
        let mut truth = vec![0.0; num_classes];
        truth[label] = 1.0;
        sum_min += credal_distance(&pred, &truth, DistanceMode::MinVertex);
        sum_proj += credal_distance(&pred, &truth, DistanceMode::Projection);
        sum_extent += credal_extent(&pred);
        let report = measure_report(m);
        for (name, slot) in sums.iter_mut() {
            *slot += metric_value(&report, name).expect("validated above");
        }
    }
    Ok(EvalStats {
        accuracy: correct as f64 / n,
        mean_min_vertex: sum_min / n,
        mean_projection: sum_proj / n,
        mean_extent: sum_extent / n,
        mean_measures: sums.into_iter().map(|(k, v)| (k, v / n)).collect(),
    })
}

fn write_report(path: &Path, report: &Report) -> Result<(), CliError> {
    if let Some(field) = report.first_non_finite() {
        return Err(CliError::Numeric(format!(
            "report field {field} is non-finite"
        )));
    }
    let json = serde_json::to_string_pretty(report).map_err(input_err)?;
    fs::write(path, json.as_bytes()).map_err(input_err)
}

/// Remove partial outputs after a failure.
struct OutputGuard {
    written: Vec<PathBuf>,
    keep: bool,
}

impl OutputGuard {
    fn new() -> Self {
        OutputGuard {
            written: Vec::new(),
            keep: false,
        }
    }

    fn track(&mut self, path: PathBuf) -> PathBuf {
        self.written.push(path.clone());
        path
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if !self.keep {
            for path in &self.written {
                let _ = fs::remove_file(path);
            }
        }
    }
}

pub fn cmd_train(config_path: &Path, overrides: &Overrides) -> Result<Report, CliError> {
    let start = Instant::now();
    let raw = fs::read_to_string(config_path).map_err(input_err)?;
    let mut config: ExperimentConfig = serde_json::from_str(&raw).map_err(input_err)?;
    if let Some(seed) = overrides.seed {
        config.train.seed = seed;
    }
    if let Some(out) = &overrides.out {
        config.output_dir = out.clone();
    }
    if let Some(mode) = overrides.distance_mode {
        config.evaluation.distance_mode = mode;
    }

    let data = load_dataset(&config.dataset)?;
    let frame = data.train.frame.clone();
    let input_dim = data.train.features.ncols();
    let encoding = config.effective_encoding();
    let targets = data::encode_targets(&data.train, encoding, config.network.include_empty);

    let mut net = EpistemicNetwork::new(
        frame,
        input_dim,
        &config.network.hidden,
        config.network.include_empty,
        config.train.seed,
    );
    let epochs = config.train.epochs;
    let history = net::train_with_progress(
        &mut net,
        data.train.features.view(),
        targets.vectors.view(),
        &data.train.labels,
        &config.loss,
        &config.train,
        |stats| {
            eprintln!(
                "epoch {}/{} loss={:.6} accuracy={:.4}",
                stats.epoch + 1,
                epochs,
                stats.loss,
                stats.accuracy
            );
        },
    )?;

    let stats = evaluate(&net, &data.test, &config.evaluation.metrics)?;

    fs::create_dir_all(&config.output_dir).map_err(input_err)?;
    let mut guard = OutputGuard::new();
    let ckpt_path = guard.track(config.output_dir.join("model.ckpt"));
    net.save(&ckpt_path)?;
    let report = Report {
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        config: serde_json::to_value(&config).map_err(input_err)?,
        dataset_digests: data.digests,
        history,
        test_accuracy: stats.accuracy,
        mean_credal_distance_min_vertex: stats.mean_min_vertex,
        mean_credal_distance_projection: stats.mean_projection,
        mean_credal_extent: stats.mean_extent,
        mean_measures: stats.mean_measures,
        checkpoint: Some("model.ckpt".into()),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    let report_path = guard.track(config.output_dir.join("report.json"));
    write_report(&report_path, &report)?;
    guard.keep = true;
    let headline = match config.evaluation.distance_mode {
        DistanceMode::MinVertex => stats.mean_min_vertex,
        DistanceMode::Projection => stats.mean_projection,
    };
    eprintln!(
        "test accuracy {:.4}, mean credal distance {:.4} ({:?}), mean extent {:.4}",
        stats.accuracy, headline, config.evaluation.distance_mode, stats.mean_extent
    );
    eprintln!(
        "wrote {} and {}",
        ckpt_path.display(),
        report_path.display()
    );
    Ok(report)
}

pub fn cmd_eval(
    checkpoint: &Path,
    dataset_config: &Path,
    overrides: &Overrides,
) -> Result<Report, CliError> {
    let start = Instant::now();
    let raw = fs::read_to_string(dataset_config).map_err(input_err)?;
    let mut config: EvalConfig = serde_json::from_str(&raw).map_err(input_err)?;
    if let Some(mode) = overrides.distance_mode {
        config.evaluation.distance_mode = mode;
    }
    let net = EpistemicNetwork::load(checkpoint)?;
    let data = load_dataset(&config.dataset)?;
    if net.frame() != &data.test.frame {
        return Err(CliError::Input(format!(
            "frame mismatch: checkpoint has classes {:?}, dataset has {:?}",
            net.frame().labels(),
            data.test.frame.labels()
        )));
    }
    let stats = evaluate(&net, &data.test, &config.evaluation.metrics)?;
    let out_dir = overrides.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out_dir).map_err(input_err)?;
    let report = Report {
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        config: serde_json::to_value(&config).map_err(input_err)?,
        dataset_digests: data.digests,
        history: Vec::new(),
        test_accuracy: stats.accuracy,
        mean_credal_distance_min_vertex: stats.mean_min_vertex,
        mean_credal_distance_projection: stats.mean_projection,
        mean_credal_extent: stats.mean_extent,
        mean_measures: stats.mean_measures,
        checkpoint: Some(checkpoint.display().to_string()),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    let report_path = out_dir.join("eval-report.json");
    write_report(&report_path, &report)?;
    eprintln!("wrote {}", report_path.display());
    Ok(report)
}

pub fn cmd_measures(mass_file: &Path) -> Result<(), CliError> {
    let raw = fs::read_to_string(mass_file).map_err(input_err)?;
    let mass = MassFunction::from_json_str(&raw).map_err(input_err)?;
    let report = measure_report(&mass);
    let json = serde_json::to_string_pretty(&report).map_err(input_err)?;
    println!("{json}");
    Ok(())
}
