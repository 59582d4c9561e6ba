//! Machine-readable run reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use ranset::data::FileDigest;
use ranset::net::EpochStats;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Report {
    pub toolkit_version: String,
    /// Exact effective configuration, after command-line overrides.
    pub config: serde_json::Value,
    pub dataset_digests: Vec<FileDigest>,
    pub history: Vec<EpochStats>,
    pub test_accuracy: f64,
    pub mean_credal_distance_min_vertex: f64,
    pub mean_credal_distance_projection: f64,
    pub mean_credal_extent: f64,
    /// Mean over test predictions of each requested entropy measure.
    pub mean_measures: BTreeMap<String, f64>,
    /// Checkpoint path relative to the output directory (train runs) or the
    /// evaluated checkpoint (eval runs).
    pub checkpoint: Option<String>,
    pub wall_clock_seconds: f64,
}

impl Report {
    /// Every numeric field must be finite for the report to be written;
    /// returns the first offender's name.
    pub fn first_non_finite(&self) -> Option<String> {
        let scalars = [
            ("testAccuracy", self.test_accuracy),
            (
                "meanCredalDistanceMinVertex",
                self.mean_credal_distance_min_vertex,
            ),
            (
                "meanCredalDistanceProjection",
                self.mean_credal_distance_projection,
            ),
            ("meanCredalExtent", self.mean_credal_extent),
            ("wallClockSeconds", self.wall_clock_seconds),
        ];
        for (name, value) in scalars {
            if !value.is_finite() {
                return Some(name.to_string());
            }
        }
        for (name, value) in &self.mean_measures {
            if !value.is_finite() {
                return Some(format!("meanMeasures.{name}"));
            }
        }
        for e in &self.history {
            if !e.loss.is_finite() || !e.accuracy.is_finite() {
                return Some(format!("history[{}]", e.epoch));
            }
        }
        None
    }
}
