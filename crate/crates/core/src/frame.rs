//! Frames of discernment and the bitmask subset convention.
//!
//! A [`Frame`] is the ordered, finite set of class labels. Every subset of
//! the frame is addressed by a bitmask integer: bit `i` set means label `i`
//! is a member. Index `0` is the empty set, `(1 << n) - 1` the whole frame.
//! All `2^N`-length vectors in this crate share that indexing.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hard cap on frame size so `2^N` vectors stay in memory.
pub const MAX_FRAME_SIZE: usize = 20;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("frame must contain between 1 and {MAX_FRAME_SIZE} labels, got {0}")]
    BadSize(usize),
    #[error("duplicate label `{0}` in frame")]
    DuplicateLabel(String),
    #[error("label `{0}` is not part of the frame")]
    UnknownLabel(String),
}

/// The finite set of mutually exclusive class outcomes.
///
/// Labels are unique and their order is fixed at construction; the order
/// defines the subset bitmask convention used everywhere else.
#[derive(Clone, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Frame {
    labels: Arc<[String]>,
}

impl Frame {
    pub fn new<I, S>(labels: I) -> Result<Self, FrameError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() || labels.len() > MAX_FRAME_SIZE {
            return Err(FrameError::BadSize(labels.len()));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(FrameError::DuplicateLabel(l.clone()));
            }
        }
        Ok(Frame {
            labels: labels.into(),
        })
    }

    /// Number of classes N.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false // a frame has at least one label by construction
    }

    /// `2^N`, the number of subsets including the empty set.
    pub fn num_subsets(&self) -> usize {
        1 << self.labels.len()
    }

    /// Bitmask of the whole frame.
    pub fn full_mask(&self) -> usize {
        self.num_subsets() - 1
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, class: usize) -> &str {
        &self.labels[class]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Bitmask of the singleton `{label i}`.
    pub fn singleton(&self, class: usize) -> usize {
        debug_assert!(class < self.len());
        1 << class
    }

    /// Bitmask for a collection of labels.
    pub fn subset_of_labels<'a, I>(&self, labels: I) -> Result<usize, FrameError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut mask = 0usize;
        for l in labels {
            let i = self
                .index_of(l)
                .ok_or_else(|| FrameError::UnknownLabel(l.to_string()))?;
            mask |= 1 << i;
        }
        Ok(mask)
    }

    /// Member labels of a subset, in frame order.
    pub fn labels_in(&self, mask: usize) -> Vec<&str> {
        (0..self.len())
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| self.labels[i].as_str())
            .collect()
    }

    /// Canonical display key of a subset: member labels sorted
    /// lexicographically and joined by `|`; the empty set is "".
    pub fn subset_key(&self, mask: usize) -> String {
        let mut ls = self.labels_in(mask);
        ls.sort_unstable();
        ls.join("|")
    }

    /// Parse a key produced by [`Frame::subset_key`].
    pub fn subset_from_key(&self, key: &str) -> Result<usize, FrameError> {
        if key.is_empty() {
            return Ok(0);
        }
        self.subset_of_labels(key.split('|'))
    }

    /// All subset bitmasks, `0..2^N`.
    pub fn subsets(&self) -> std::ops::Range<usize> {
        0..self.num_subsets()
    }
}

impl PartialEq for Frame {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.labels, &other.labels) || self.labels == other.labels
    }
}

impl Eq for Frame {}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Frame{:?}", self.labels)
    }
}

impl TryFrom<Vec<String>> for Frame {
    type Error = FrameError;

    fn try_from(labels: Vec<String>) -> Result<Self, FrameError> {
        Frame::new(labels)
    }
}

impl From<Frame> for Vec<String> {
    fn from(frame: Frame) -> Vec<String> {
        frame.labels.to_vec()
    }
}

/// Cardinality of a subset bitmask.
pub fn subset_size(mask: usize) -> u32 {
    mask.count_ones()
}
