//! Dataset ingestion and ground-truth encoding.
//!
//! Tabular data comes from headered CSV files with one label column; image
//! data from the big-endian IDX pair format. Features are scaled to [0, 1]
//! at ingestion (min-max per column for tabular, /255 for pixels), and every
//! loaded file's SHA-256 is recorded for reproducibility.

use std::fs;
use std::io::Read;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::frame::{Frame, FrameError};
use crate::mass::NORMALIZATION_TOL;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("parse error at {location}: {message}")]
    ParseError { location: String, message: String },
    #[error("unknown label `{value}` at row {row}")]
    UnknownLabel { value: String, row: usize },
    #[error("split {split} would receive no samples of class `{class}`")]
    EmptySplit { class: String, split: usize },
    #[error("invalid split fractions: {0}")]
    BadFractions(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

fn parse_error(location: impl Into<String>, message: impl Into<String>) -> DataError {
    DataError::ParseError {
        location: location.into(),
        message: message.into(),
    }
}

/// SHA-256 of a source file, hex encoded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

fn digest_of(path: &Path, bytes: &[u8]) -> FileDigest {
    let hash = Sha256::digest(bytes);
    let mut hex = String::with_capacity(64);
    for byte in hash {
        hex.push_str(&format!("{byte:02x}"));
    }
    FileDigest {
        path: path.display().to_string(),
        sha256: hex,
    }
}

/// A loaded, scaled classification dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub frame: Frame,
    pub provenance: Vec<FileDigest>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Per-class sample counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.frame.len()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }
}

/// Min-max scale each column to [0, 1]; constant columns map to 0. The map
/// is idempotent and preserves per-column ordering.
pub fn scale_columns(features: &mut Array2<f64>) {
    for mut col in features.columns_mut() {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in col.iter() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let range = hi - lo;
        if range > 0.0 {
            col.mapv_inplace(|v| (v - lo) / range);
        } else {
            col.fill(0.0);
        }
    }
}

/// Load a headered CSV with one label column; all other columns are real
/// features. Labels must match the frame's label strings.
pub fn load_csv(path: &Path, label_column: &str, frame: &Frame) -> Result<Dataset, DataError> {
    let bytes = fs::read(path)?;
    let digest = digest_of(path, &bytes);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes.as_slice());
    let headers = reader
        .headers()
        .map_err(|e| parse_error("header row", e.to_string()))?
        .clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| parse_error("header row", format!("no column named `{label_column}`")))?;
    let num_features = headers.len() - 1;

    let mut values: Vec<f64> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_error(format!("row {}", row + 1), e.to_string()))?;
        if record.len() != headers.len() {
            return Err(parse_error(
                format!("row {}", row + 1),
                format!("expected {} fields, got {}", headers.len(), record.len()),
            ));
        }
        for (col, field) in record.iter().enumerate() {
            if col == label_idx {
                let class = frame.index_of(field.trim()).ok_or(DataError::UnknownLabel {
                    value: field.to_string(),
                    row: row + 1,
                })?;
                labels.push(class);
            } else {
                let v: f64 = field.trim().parse().map_err(|_| {
                    parse_error(
                        format!("row {}, column {}", row + 1, col + 1),
                        format!("`{field}` is not a number"),
                    )
                })?;
                if !v.is_finite() {
                    return Err(parse_error(
                        format!("row {}, column {}", row + 1, col + 1),
                        "non-finite feature value",
                    ));
                }
                values.push(v);
            }
        }
    }
    let rows = labels.len();
    let mut features = Array2::from_shape_vec((rows, num_features), values)
        .expect("row-major fill matches dimensions");
    scale_columns(&mut features);
    Ok(Dataset {
        features,
        labels,
        frame: frame.clone(),
        provenance: vec![digest],
    })
}

fn read_be_u32(bytes: &[u8], offset: usize, location: &str) -> Result<u32, DataError> {
    bytes
        .get(offset..offset + 4)
        .map(|s| u32::from_be_bytes(s.try_into().expect("slice of length 4")))
        .ok_or_else(|| parse_error(location, "unexpected end of file"))
}

/// Load an IDX image/label file pair, keeping only `keep_classes` (original
/// label values, e.g. digits). Pixels are scaled to [0, 1]; kept labels are
/// remapped to `0..keep_classes.len()` preserving ascending original order,
/// and the frame labels are the original values as strings.
pub fn load_idx(
    images_path: &Path,
    labels_path: &Path,
    keep_classes: &[u8],
) -> Result<Dataset, DataError> {
    if keep_classes.is_empty() {
        return Err(parse_error(
            labels_path.display().to_string(),
            "keep_classes must not be empty",
        ));
    }
    let mut keep: Vec<u8> = keep_classes.to_vec();
    keep.sort_unstable();
    keep.dedup();

    let image_bytes = fs::read(images_path)?;
    let label_bytes = fs::read(labels_path)?;
    let images_loc = images_path.display().to_string();
    let labels_loc = labels_path.display().to_string();

    let magic = read_be_u32(&image_bytes, 0, &images_loc)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(parse_error(
            &images_loc,
            format!("bad magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        ));
    }
    let count = read_be_u32(&image_bytes, 4, &images_loc)? as usize;
    let rows = read_be_u32(&image_bytes, 8, &images_loc)? as usize;
    let cols = read_be_u32(&image_bytes, 12, &images_loc)? as usize;
    let pixels = rows * cols;
    if image_bytes.len() != 16 + count * pixels {
        return Err(parse_error(
            &images_loc,
            format!(
                "file length {} does not match {count} images of {rows}x{cols}",
                image_bytes.len()
            ),
        ));
    }

    let magic = read_be_u32(&label_bytes, 0, &labels_loc)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(parse_error(
            &labels_loc,
            format!("bad magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        ));
    }
    let label_count = read_be_u32(&label_bytes, 4, &labels_loc)? as usize;
    if label_bytes.len() != 8 + label_count {
        return Err(parse_error(&labels_loc, "file length does not match count"));
    }
    if label_count != count {
        return Err(parse_error(
            &labels_loc,
            format!("{label_count} labels for {count} images"),
        ));
    }

    let raw_labels = &label_bytes[8..];
    let class_of = |v: u8| keep.binary_search(&v).ok();
    let kept_rows: Vec<usize> = (0..count)
        .filter(|&i| class_of(raw_labels[i]).is_some())
        .collect();
    let mut features = Array2::zeros((kept_rows.len(), pixels));
    let mut labels = Vec::with_capacity(kept_rows.len());
    for (out_row, &src_row) in kept_rows.iter().enumerate() {
        let start = 16 + src_row * pixels;
        let src = &image_bytes[start..start + pixels];
        for (slot, &byte) in features
            .row_mut(out_row)
            .iter_mut()
            .zip(src.iter())
        {
            *slot = byte as f64 / 255.0;
        }
        labels.push(class_of(raw_labels[src_row]).expect("row was kept"));
    }
    let frame = Frame::new(keep.iter().map(|v| v.to_string()))?;
    Ok(Dataset {
        features,
        labels,
        frame,
        provenance: vec![
            digest_of(images_path, &image_bytes),
            digest_of(labels_path, &label_bytes),
        ],
    })
}

/// The two ground-truth encodings for set-valued training targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TargetEncoding {
    /// One-hot over subsets: 1 on the singleton of the true class.
    Mass,
    /// Belief of the one-hot singleton mass: 1 on every subset containing
    /// the true class.
    Belief,
}

/// Per-sample target vectors matching a network head's slot convention.
#[derive(Debug, Clone)]
pub struct EncodedTargets {
    pub encoding: TargetEncoding,
    pub include_empty: bool,
    /// One row per sample, `2^N` columns with the empty set included,
    /// `2^N - 1` without.
    pub vectors: Array2<f64>,
}

/// Build target vectors for every sample of a dataset.
pub fn encode_targets(
    dataset: &Dataset,
    encoding: TargetEncoding,
    include_empty: bool,
) -> EncodedTargets {
    let n = dataset.frame.len();
    let full = dataset.frame.num_subsets();
    let offset = usize::from(!include_empty);
    let width = full - offset;
    let mut vectors = Array2::zeros((dataset.len(), width));
    for (row, &class) in dataset.labels.iter().enumerate() {
        match encoding {
            TargetEncoding::Mass => {
                let slot = dataset.frame.singleton(class) - offset;
                vectors[(row, slot)] = 1.0;
            }
            TargetEncoding::Belief => {
                let bit = 1usize << class;
                debug_assert!(n <= crate::frame::MAX_FRAME_SIZE);
                for mask in 1..full {
                    if mask & bit != 0 {
                        vectors[(row, mask - offset)] = 1.0;
                    }
                }
            }
        }
    }
    EncodedTargets {
        encoding,
        include_empty,
        vectors,
    }
}

/// Deterministic stratified split. `fractions` must be positive and sum
/// to 1; each class is shuffled with the seed and dealt out by largest
/// remainder so per-class proportions match the fractions.
pub fn split(dataset: &Dataset, fractions: &[f64], seed: u64) -> Result<Vec<Dataset>, DataError> {
    if fractions.is_empty() {
        return Err(DataError::BadFractions("no fractions given".into()));
    }
    if fractions.iter().any(|&f| f <= 0.0) {
        return Err(DataError::BadFractions(
            "every fraction must be positive".into(),
        ));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(DataError::BadFractions(format!("fractions sum to {total}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_splits = fractions.len();
    let mut split_indices: Vec<Vec<usize>> = vec![Vec::new(); num_splits];
    for class in 0..dataset.frame.len() {
        let mut members: Vec<usize> = dataset
            .labels
            .iter()
            .enumerate()
            .filter(|(_, &y)| y == class)
            .map(|(i, _)| i)
            .collect();
        members.shuffle(&mut rng);
        let counts = largest_remainder(members.len(), fractions);
        for (s, &count) in counts.iter().enumerate() {
            if count == 0 {
                return Err(DataError::EmptySplit {
                    class: dataset.frame.label(class).to_string(),
                    split: s,
                });
            }
        }
        let mut cursor = 0;
        for (s, &count) in counts.iter().enumerate() {
            split_indices[s].extend(&members[cursor..cursor + count]);
            cursor += count;
        }
    }

    let mut out = Vec::with_capacity(num_splits);
    for mut indices in split_indices {
        indices.sort_unstable(); // keep original row order within a split
        let features = dataset.features.select(Axis(0), &indices);
        let labels = indices.iter().map(|&i| dataset.labels[i]).collect();
        out.push(Dataset {
            features,
            labels,
            frame: dataset.frame.clone(),
            provenance: dataset.provenance.clone(),
        });
    }
    Ok(out)
}

/// Apportion `n` items over `fractions` with counts summing to exactly `n`.
fn largest_remainder(n: usize, fractions: &[f64]) -> Vec<usize> {
    let ideal: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = ideal.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - ideal[a].floor();
        let rb = ideal[b] - ideal[b].floor();
        rb.partial_cmp(&ra)
            .expect("finite remainders")
            .then(a.cmp(&b))
    });
    for i in 0..n - assigned {
        counts[order[i % order.len()]] += 1;
    }
    counts
}

/// Read a whole file; helper for digests in reports.
pub fn file_digest(path: &Path) -> Result<FileDigest, DataError> {
    let mut file = fs::File::open(path)?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    Ok(digest_of(path, &bytes))
}
