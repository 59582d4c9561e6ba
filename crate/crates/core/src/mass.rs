//! Basic probability assignments and the belief-function calculus.
//!
//! A [`MassFunction`] stores a full `2^N` vector of subset masses in the
//! bitmask indexing of [`Frame`]. Belief and plausibility are derived by
//! the fast zeta transform; [`BeliefVector::to_mass`] runs the Moebius
//! inversion back. [`MultivaluedMapping`] pushes a source probability
//! forward into a mass function, and [`MassFunction::combine_dempster`]
//! implements the conjunctive rule with conflict renormalization.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::frame::{Frame, FrameError};
use crate::setops::{mobius_in_place, zeta_in_place};

/// Construction-time tolerance: vectors whose total differs from 1 by at
/// most this are renormalized; anything further out is rejected.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Below this deviation the vector is accepted as-is: renormalizing would
/// only churn low bits, and serialization round-trips must preserve them.
const RENORMALIZE_SKIP: f64 = 1e-12;

/// Threshold below which a Moebius-inverted mass is treated as rounding
/// noise rather than evidence that the input was not a belief function.
pub const MOBIUS_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum MassError {
    #[error("vector length {got} does not match the frame's {expected} subsets")]
    LengthMismatch { expected: usize, got: usize },
    #[error("negative mass {value} on subset {subset:#b}")]
    NegativeMass { subset: usize, value: f64 },
    #[error("mass {0} assigned to the empty set")]
    EmptySetMass(f64),
    #[error("masses sum to {sum}, outside the normalization tolerance")]
    NotNormalized { sum: f64 },
    #[error("operands are defined on different frames")]
    FrameMismatch,
    #[error("total conflict: combined evidence has conflict mass {conflict}")]
    TotalConflict { conflict: f64 },
    #[error("not a belief function: Moebius inversion gives mass {value} on subset {subset:#b}")]
    NotABeliefFunction { subset: usize, value: f64 },
    #[error("invalid belief vector: {0}")]
    InvalidBeliefVector(String),
    #[error("multivalued mapping maps source outcome {outcome} to the empty set")]
    EmptyImage { outcome: usize },
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// A basic probability assignment over the subsets of a frame.
///
/// Invariants, enforced at construction: every entry is non-negative, the
/// empty set carries zero mass, and the entries sum to one (inputs within
/// [`NORMALIZATION_TOL`] are renormalized).
#[derive(Debug, Clone, PartialEq)]
pub struct MassFunction {
    frame: Frame,
    masses: Vec<f64>,
}

impl MassFunction {
    pub fn new(frame: Frame, mut masses: Vec<f64>) -> Result<Self, MassError> {
        if masses.len() != frame.num_subsets() {
            return Err(MassError::LengthMismatch {
                expected: frame.num_subsets(),
                got: masses.len(),
            });
        }
        for (subset, &value) in masses.iter().enumerate() {
            if value < -NORMALIZATION_TOL {
                return Err(MassError::NegativeMass { subset, value });
            }
        }
        if masses[0].abs() > NORMALIZATION_TOL {
            return Err(MassError::EmptySetMass(masses[0]));
        }
        masses[0] = 0.0;
        for value in masses.iter_mut() {
            if *value < 0.0 {
                *value = 0.0;
            }
        }
        let sum: f64 = masses.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(MassError::NotNormalized { sum });
        }
        if (sum - 1.0).abs() > RENORMALIZE_SKIP {
            for value in masses.iter_mut() {
                *value /= sum;
            }
        }
        Ok(MassFunction { frame, masses })
    }

    /// Build from sparse `(subset bitmask, mass)` pairs.
    pub fn from_focal(
        frame: Frame,
        focal: impl IntoIterator<Item = (usize, f64)>,
    ) -> Result<Self, MassError> {
        let mut masses = vec![0.0; frame.num_subsets()];
        for (subset, value) in focal {
            if subset >= frame.num_subsets() {
                return Err(MassError::LengthMismatch {
                    expected: frame.num_subsets(),
                    got: subset + 1,
                });
            }
            masses[subset] += value;
        }
        MassFunction::new(frame, masses)
    }

    /// Total ignorance: all mass on the whole frame.
    pub fn vacuous(frame: Frame) -> Self {
        let mut masses = vec![0.0; frame.num_subsets()];
        let full = frame.full_mask();
        masses[full] = 1.0;
        MassFunction { frame, masses }
    }

    /// Full certainty on a single class.
    pub fn certain(frame: Frame, class: usize) -> Self {
        let mut masses = vec![0.0; frame.num_subsets()];
        let s = frame.singleton(class);
        masses[s] = 1.0;
        MassFunction { frame, masses }
    }

    /// A Bayesian mass function from a probability vector over the classes.
    pub fn bayesian(frame: Frame, probs: &[f64]) -> Result<Self, MassError> {
        if probs.len() != frame.len() {
            return Err(MassError::LengthMismatch {
                expected: frame.len(),
                got: probs.len(),
            });
        }
        let mut masses = vec![0.0; frame.num_subsets()];
        for (class, &p) in probs.iter().enumerate() {
            masses[frame.singleton(class)] = p;
        }
        MassFunction::new(frame, masses)
    }

    /// Draw a random BPA: a random nonempty set of focal elements with
    /// exponentially distributed weights, normalized.
    pub fn sample_random<R: Rng + ?Sized>(frame: &Frame, rng: &mut R) -> Self {
        let nonempty = frame.num_subsets() - 1;
        let k = rng.random_range(1..=nonempty.min(2 * frame.len().max(2)));
        let mut subsets: Vec<usize> = (1..frame.num_subsets()).collect();
        subsets.shuffle(rng);
        let mut masses = vec![0.0; frame.num_subsets()];
        let mut total = 0.0;
        for &subset in subsets.iter().take(k) {
            let w = -rng.random::<f64>().max(1e-12).ln();
            masses[subset] = w;
            total += w;
        }
        for value in masses.iter_mut() {
            *value /= total;
        }
        MassFunction::new(frame.clone(), masses)
            .expect("sampled masses are normalized by construction")
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mass(&self, subset: usize) -> f64 {
        self.masses[subset]
    }

    /// Subsets with strictly positive mass.
    pub fn focal_elements(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.masses
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0.0)
            .map(|(a, &m)| (a, m))
    }

    /// True when every focal element is a singleton.
    pub fn is_bayesian(&self) -> bool {
        self.focal_elements().all(|(a, _)| a.count_ones() == 1)
    }

    /// The N masses on singletons, in class order.
    pub fn singleton_masses(&self) -> Vec<f64> {
        (0..self.frame.len())
            .map(|i| self.masses[self.frame.singleton(i)])
            .collect()
    }

    /// Decision rule used for accuracy: the class whose singleton carries
    /// the largest mass, ties broken by lowest class index.
    pub fn argmax_singleton(&self) -> usize {
        let mut best = 0;
        let mut best_mass = self.masses[self.frame.singleton(0)];
        for class in 1..self.frame.len() {
            let m = self.masses[self.frame.singleton(class)];
            if m > best_mass {
                best = class;
                best_mass = m;
            }
        }
        best
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.frame == other.frame
            && self
                .masses
                .iter()
                .zip(&other.masses)
                .all(|(a, b)| (a - b).abs() <= tol)
    }

    /// Belief vector: `Bel(A) = sum of m(B) over B subseteq A`.
    pub fn belief(&self) -> BeliefVector {
        let mut values = self.masses.clone();
        zeta_in_place(&mut values);
        BeliefVector {
            frame: self.frame.clone(),
            values,
        }
    }

    /// Plausibility vector: `Pl(A) = sum of m(B) over B intersecting A`.
    pub fn plausibility(&self) -> PlausibilityVector {
        let bel = self.belief();
        let full = self.frame.full_mask();
        let total = bel.values[full];
        // The complement identity cancels catastrophically when Pl(A) is
        // tiny, and downstream logs need Pl(A) > 0 on focal sets. Bel(A) is
        // a sum of non-negative terms and a true lower bound, so clamp.
        let values = (0..self.frame.num_subsets())
            .map(|a| (total - bel.values[full ^ a]).max(bel.values[a]))
            .collect();
        PlausibilityVector {
            frame: self.frame.clone(),
            values,
        }
    }

    /// Dempster's conjunctive combination with renormalization.
    ///
    /// Fails with [`MassError::TotalConflict`] when the conflict mass K
    /// reaches 1 within 1e-12.
    pub fn combine_dempster(&self, other: &Self) -> Result<Self, MassError> {
        if self.frame != other.frame {
            return Err(MassError::FrameMismatch);
        }
        let mut combined = vec![0.0; self.frame.num_subsets()];
        for (a, ma) in self.focal_elements() {
            for (b, mb) in other.focal_elements() {
                combined[a & b] += ma * mb;
            }
        }
        let conflict = combined[0];
        if conflict >= 1.0 - 1e-12 {
            return Err(MassError::TotalConflict { conflict });
        }
        combined[0] = 0.0;
        for value in combined.iter_mut() {
            *value /= 1.0 - conflict;
        }
        MassFunction::new(self.frame.clone(), combined)
    }

    /// Serialize to the interchange JSON form: frame labels plus a map from
    /// subset key (lexicographically sorted member labels joined by `|`) to
    /// mass, omitting zero entries.
    pub fn to_json(&self) -> serde_json::Value {
        let mut map = BTreeMap::new();
        for (subset, value) in self.focal_elements() {
            map.insert(self.frame.subset_key(subset), value);
        }
        serde_json::json!({
            "labels": self.frame.labels(),
            "masses": map,
        })
    }

    pub fn to_json_string(&self) -> String {
        self.to_json().to_string()
    }

    /// Parse the interchange JSON form produced by [`MassFunction::to_json`].
    pub fn from_json(value: &serde_json::Value) -> Result<Self, MassJsonError> {
        let raw: RawMassJson = serde_json::from_value(value.clone())?;
        let frame = Frame::new(raw.labels)?;
        let mut masses = vec![0.0; frame.num_subsets()];
        for (key, mass) in raw.masses {
            let subset = frame.subset_from_key(&key)?;
            masses[subset] += mass;
        }
        Ok(MassFunction::new(frame, masses)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self, MassJsonError> {
        let value: serde_json::Value = serde_json::from_str(s)?;
        MassFunction::from_json(&value)
    }
}

#[derive(Deserialize)]
struct RawMassJson {
    labels: Vec<String>,
    masses: BTreeMap<String, f64>,
}

#[derive(Debug, Error)]
pub enum MassJsonError {
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Mass(#[from] MassError),
}

/// The cumulative form of a mass function: `Bel(A)` per subset.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefVector {
    frame: Frame,
    values: Vec<f64>,
}

impl BeliefVector {
    /// Validate a raw vector: `Bel(empty) = 0`, `Bel(frame) = 1`, and
    /// monotonicity under single-element insertion (which implies full
    /// subset monotonicity). Total monotonicity is *not* checked here;
    /// [`BeliefVector::to_mass`] detects its failure.
    pub fn new(frame: Frame, values: Vec<f64>) -> Result<Self, MassError> {
        if values.len() != frame.num_subsets() {
            return Err(MassError::LengthMismatch {
                expected: frame.num_subsets(),
                got: values.len(),
            });
        }
        if values[0].abs() > NORMALIZATION_TOL {
            return Err(MassError::InvalidBeliefVector(format!(
                "Bel(empty set) = {}, expected 0",
                values[0]
            )));
        }
        let full = frame.full_mask();
        if (values[full] - 1.0).abs() > NORMALIZATION_TOL {
            return Err(MassError::InvalidBeliefVector(format!(
                "Bel(frame) = {}, expected 1",
                values[full]
            )));
        }
        for mask in frame.subsets() {
            for i in 0..frame.len() {
                let bit = 1 << i;
                if mask & bit == 0 && values[mask] > values[mask | bit] + NORMALIZATION_TOL {
                    return Err(MassError::InvalidBeliefVector(format!(
                        "not monotone: Bel({mask:#b}) > Bel({:#b})",
                        mask | bit
                    )));
                }
            }
        }
        Ok(BeliefVector { frame, values })
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, subset: usize) -> f64 {
        self.values[subset]
    }

    /// Moebius inversion: recover the mass function this belief vector came
    /// from. Fails with [`MassError::NotABeliefFunction`] when the inversion
    /// produces a mass below `-`[`MOBIUS_TOL`].
    pub fn to_mass(&self) -> Result<MassFunction, MassError> {
        let mut masses = self.values.clone();
        mobius_in_place(&mut masses);
        for (subset, &value) in masses.iter().enumerate() {
            if value < -MOBIUS_TOL {
                return Err(MassError::NotABeliefFunction { subset, value });
            }
        }
        for value in masses.iter_mut() {
            if *value < 0.0 {
                *value = 0.0;
            }
        }
        MassFunction::new(self.frame.clone(), masses)
    }
}

/// The dual upper bound: `Pl(A)` per subset.
#[derive(Debug, Clone, PartialEq)]
pub struct PlausibilityVector {
    frame: Frame,
    values: Vec<f64>,
}

impl PlausibilityVector {
    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, subset: usize) -> f64 {
        self.values[subset]
    }
}

/// A one-to-many map from a finite source probability space into subsets of
/// a frame; Dempster's construction of a belief function.
#[derive(Debug, Clone)]
pub struct MultivaluedMapping {
    frame: Frame,
    outcomes: Vec<String>,
    probs: Vec<f64>,
    images: Vec<usize>,
}

impl MultivaluedMapping {
    /// `images[i]` is the subset bitmask the i-th source outcome maps to;
    /// every image must be nonempty so the pushforward satisfies
    /// `m(empty) = 0`.
    pub fn new(
        frame: Frame,
        outcomes: Vec<String>,
        probs: Vec<f64>,
        images: Vec<usize>,
    ) -> Result<Self, MassError> {
        if outcomes.len() != probs.len() || outcomes.len() != images.len() || outcomes.is_empty() {
            return Err(MassError::LengthMismatch {
                expected: outcomes.len(),
                got: probs.len().max(images.len()),
            });
        }
        for (source, &p) in probs.iter().enumerate() {
            if p < 0.0 {
                return Err(MassError::NegativeMass {
                    subset: source,
                    value: p,
                });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(MassError::NotNormalized { sum });
        }
        for (source, &image) in images.iter().enumerate() {
            if image == 0 {
                return Err(MassError::EmptyImage { outcome: source });
            }
            if image >= frame.num_subsets() {
                return Err(MassError::LengthMismatch {
                    expected: frame.num_subsets(),
                    got: image + 1,
                });
            }
        }
        let probs = probs.iter().map(|p| p / sum).collect();
        Ok(MultivaluedMapping {
            frame,
            outcomes,
            probs,
            images,
        })
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn outcomes(&self) -> &[String] {
        &self.outcomes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    /// Push the source probability through the mapping:
    /// `m(A) = sum of P(w) over w with image exactly A`.
    pub fn pushforward(&self) -> MassFunction {
        let mut masses = vec![0.0; self.frame.num_subsets()];
        for (&image, &p) in self.images.iter().zip(&self.probs) {
            masses[image] += p;
        }
        MassFunction::new(self.frame.clone(), masses)
            .expect("pushforward of a normalized source probability is a valid BPA")
    }
}
