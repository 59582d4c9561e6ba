//! Experiment configuration: one self-contained JSON file per run.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use ranset::credal::DistanceMode;
use ranset::data::TargetEncoding;
use ranset::net::{LossSpec, TrainConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum DatasetSpec {
    #[serde(rename_all = "camelCase")]
    Csv {
        path: PathBuf,
        label_column: String,
        /// Frame labels in class order; every value in the label column
        /// must be one of these.
        labels: Vec<String>,
        split: SplitSpec,
    },
    #[serde(rename_all = "camelCase")]
    Idx {
        images_path: PathBuf,
        labels_path: PathBuf,
        #[serde(default)]
        test_images_path: Option<PathBuf>,
        #[serde(default)]
        test_labels_path: Option<PathBuf>,
        /// Original label values to keep (e.g. digits).
        keep_classes: Vec<u8>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SplitSpec {
    /// Train/test fractions, positive, summing to 1.
    pub fractions: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NetworkSpec {
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub include_empty: bool,
}

pub const KNOWN_METRICS: [&str; 5] = [
    "nguyen",
    "hohle",
    "yager",
    "klirRamer",
    "shannonOfPignistic",
];

fn default_metrics() -> Vec<String> {
    KNOWN_METRICS.iter().map(|s| s.to_string()).collect()
}

fn default_distance_mode() -> DistanceMode {
    DistanceMode::MinVertex
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EvaluationSpec {
    #[serde(default = "default_distance_mode")]
    pub distance_mode: DistanceMode,
    /// Entropy measures averaged over the test predictions.
    #[serde(default = "default_metrics")]
    pub metrics: Vec<String>,
}

impl Default for EvaluationSpec {
    fn default() -> Self {
        EvaluationSpec {
            distance_mode: default_distance_mode(),
            metrics: default_metrics(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub network: NetworkSpec,
    #[serde(default)]
    pub loss: LossSpec,
    /// Defaults to the encoding the loss kind expects: belief targets for
    /// the belief cross-entropy, mass targets otherwise.
    #[serde(default)]
    pub target_encoding: Option<TargetEncoding>,
    pub train: TrainConfig,
    #[serde(default)]
    pub evaluation: EvaluationSpec,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn effective_encoding(&self) -> TargetEncoding {
        self.target_encoding.unwrap_or(if self.loss.kind.wants_belief_targets() {
            TargetEncoding::Belief
        } else {
            TargetEncoding::Mass
        })
    }
}

/// The dataset-only config accepted by `eval`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EvalConfig {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub evaluation: EvaluationSpec,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ranset::net::LossKind;

    #[test]
    fn parses_a_full_csv_config() {
        let json = r#"{
            "dataset": {
                "kind": "csv",
                "path": "data/pima/diabetes.csv",
                "labelColumn": "Outcome",
                "labels": ["0", "1"],
                "split": { "fractions": [0.8, 0.2], "seed": 7 }
            },
            "network": { "hidden": [32] },
            "loss": { "kind": "klMass" },
            "train": {
                "epochs": 10, "batchSize": 32, "learningRate": 0.001,
                "optimizer": { "kind": "adam" }, "seed": 42, "shuffle": true
            },
            "outputDir": "runs/pima"
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
        assert!(matches!(cfg.dataset, DatasetSpec::Csv { .. }));
        assert_eq!(cfg.loss.kind, LossKind::KlMass);
        assert!(!cfg.network.include_empty);
        assert_eq!(cfg.effective_encoding(), TargetEncoding::Mass);
        assert_eq!(cfg.evaluation.metrics.len(), 5);
        // round trip
        let echoed = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&echoed).unwrap();
        assert_eq!(back.train.seed, 42);
    }

    #[test]
    fn belief_loss_defaults_to_belief_targets() {
        let json = r#"{
            "dataset": {
                "kind": "idx",
                "imagesPath": "a", "labelsPath": "b",
                "keepClasses": [0, 1, 2, 3]
            },
            "network": { "hidden": [128], "includeEmpty": true },
            "loss": { "kind": "crossEntropyBelief" },
            "train": {
                "epochs": 1, "batchSize": 8, "learningRate": 0.01,
                "optimizer": { "kind": "sgd" }, "seed": 1, "shuffle": false
            },
            "outputDir": "out"
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.effective_encoding(), TargetEncoding::Belief);
    }
}
