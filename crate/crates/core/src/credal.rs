//! Credal sets induced by belief functions.
//!
//! A predicted mass function identifies the convex set of probability
//! distributions dominating its belief function. This module enumerates the
//! extreme points of that set (one candidate per permutation of the
//! classes), measures distances from the set to a ground-truth distribution,
//! and reports the set's diameter as the imprecision of the prediction.

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mass::MassFunction;
use crate::setops::zeta_in_place;

/// Consistency slack when comparing probabilities against belief lower
/// bounds.
pub const CONSISTENCY_TOL: f64 = 1e-9;

/// Vertex enumeration visits all N! permutations; frames beyond this size
/// are refused.
pub const MAX_VERTEX_FRAME: usize = 8;

/// Componentwise tolerance for collapsing duplicate vertices.
const DEDUP_TOL: f64 = 1e-9;

/// Frank-Wolfe iteration budget and duality-gap stop for hull projection.
const PROJECTION_MAX_ITERS: usize = 10_000;
const PROJECTION_GAP_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum CredalError {
    #[error("vertex enumeration needs a frame of at most {MAX_VERTEX_FRAME} classes, got {0}")]
    FrameTooLarge(usize),
}

/// How to measure the distance from a credal prediction to a point of the
/// simplex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum DistanceMode {
    /// Minimum L2 distance over the vertex set.
    MinVertex,
    /// L2 distance to the convex hull of the vertices.
    Projection,
}

/// The vertex set of the probabilities consistent with a predicted belief
/// function, together with the mass function that induced it.
#[derive(Debug, Clone)]
pub struct CredalPrediction {
    vertices: Vec<Vec<f64>>,
    source_mass: MassFunction,
}

impl CredalPrediction {
    /// Deduplicated extreme points, each a distribution over the classes,
    /// in lexicographic order.
    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn source_mass(&self) -> &MassFunction {
        &self.source_mass
    }

    /// Serialized form: vertex list, extent, and the inducing mass in the
    /// interchange mass format.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "vertices": self.vertices,
            "extent": credal_extent(self),
            "mass": self.source_mass.to_json(),
        })
    }
}

/// Subset sums of a probability vector over the classes: `P(A)` per subset.
fn subset_probabilities(p: &[f64], num_subsets: usize) -> Vec<f64> {
    let mut sums = vec![0.0; num_subsets];
    for (class, &value) in p.iter().enumerate() {
        sums[1 << class] = value;
    }
    zeta_in_place(&mut sums);
    sums
}

/// True iff `P(A) >= Bel(A)` for every subset, within [`CONSISTENCY_TOL`].
pub fn is_consistent(p: &[f64], m: &MassFunction) -> bool {
    debug_assert_eq!(p.len(), m.frame().len());
    let bel = m.belief();
    let sums = subset_probabilities(p, m.frame().num_subsets());
    sums.iter()
        .zip(bel.values())
        .all(|(pa, bela)| *pa >= bela - CONSISTENCY_TOL)
}

/// Enumerate the extreme points of the credal set of `m`.
///
/// For each permutation of the classes, each focal element's mass goes to
/// its earliest member in permutation order; duplicates are collapsed.
pub fn credal_vertices(m: &MassFunction) -> Result<CredalPrediction, CredalError> {
    let n = m.frame().len();
    if n > MAX_VERTEX_FRAME {
        return Err(CredalError::FrameTooLarge(n));
    }
    let focal: Vec<(usize, f64)> = m.focal_elements().collect();
    let mut vertices: Vec<Vec<f64>> = Vec::new();
    for perm in (0..n).permutations(n) {
        let mut vertex = vec![0.0; n];
        for &(subset, mass) in &focal {
            for &class in &perm {
                if subset & (1 << class) != 0 {
                    vertex[class] += mass;
                    break;
                }
            }
        }
        if !vertices
            .iter()
            .any(|v| v.iter().zip(&vertex).all(|(a, b)| (a - b).abs() <= DEDUP_TOL))
        {
            vertices.push(vertex);
        }
    }
    vertices.sort_by(|a, b| a.partial_cmp(b).expect("vertex coordinates are finite"));
    Ok(CredalPrediction {
        vertices,
        source_mass: m.clone(),
    })
}

fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn min_vertex_distance(pred: &CredalPrediction, truth: &[f64]) -> f64 {
    pred.vertices
        .iter()
        .map(|v| l2_distance(v, truth))
        .fold(f64::INFINITY, f64::min)
}

/// L2 distance from `truth` to the convex hull of the vertices, by
/// conditional-gradient iteration with exact line search.
fn projection_distance(pred: &CredalPrediction, truth: &[f64]) -> f64 {
    let vertices = &pred.vertices;
    // Warm start at the nearest vertex.
    let mut x = vertices
        .iter()
        .min_by(|a, b| {
            l2_distance(a, truth)
                .partial_cmp(&l2_distance(b, truth))
                .expect("distances are finite")
        })
        .expect("a credal prediction has at least one vertex")
        .clone();
    if vertices.len() == 1 {
        return l2_distance(&x, truth);
    }
    for _ in 0..PROJECTION_MAX_ITERS {
        // grad f(x) = 2 (x - t) for f(x) = |x - t|^2
        let grad: Vec<f64> = x.iter().zip(truth).map(|(xi, ti)| 2.0 * (xi - ti)).collect();
        let toward = vertices
            .iter()
            .min_by(|a, b| {
                let da: f64 = a.iter().zip(&grad).map(|(v, g)| v * g).sum();
                let db: f64 = b.iter().zip(&grad).map(|(v, g)| v * g).sum();
                da.partial_cmp(&db).expect("finite dot products")
            })
            .expect("nonempty vertex set");
        let gap: f64 = x
            .iter()
            .zip(toward)
            .zip(&grad)
            .map(|((xi, si), gi)| gi * (xi - si))
            .sum();
        if gap <= PROJECTION_GAP_TOL {
            break;
        }
        // Exact minimizer of the quadratic along the segment [x, s].
        let diff: Vec<f64> = x.iter().zip(toward).map(|(xi, si)| xi - si).collect();
        let denom: f64 = diff.iter().map(|d| d * d).sum();
        if denom <= f64::EPSILON {
            break;
        }
        let numer: f64 = diff
            .iter()
            .zip(x.iter().zip(truth))
            .map(|(d, (xi, ti))| d * (xi - ti))
            .sum();
        let step = (numer / denom).clamp(0.0, 1.0);
        for (xi, si) in x.iter_mut().zip(toward) {
            *xi += step * (si - *xi);
        }
        if step <= f64::EPSILON {
            break;
        }
    }
    l2_distance(&x, truth)
}

/// Distance from a credal prediction to a ground-truth distribution.
pub fn credal_distance(pred: &CredalPrediction, truth: &[f64], mode: DistanceMode) -> f64 {
    match mode {
        DistanceMode::MinVertex => min_vertex_distance(pred, truth),
        DistanceMode::Projection => projection_distance(pred, truth),
    }
}

/// Minimum L1 distance over the vertex set; the optional taxicab variant of
/// the min-vertex mode.
pub fn credal_distance_l1(pred: &CredalPrediction, truth: &[f64]) -> f64 {
    pred.vertices
        .iter()
        .map(|v| v.iter().zip(truth).map(|(x, y)| (x - y).abs()).sum())
        .fold(f64::INFINITY, f64::min)
}

/// Diameter of the vertex set: the maximum pairwise L2 distance. Zero iff
/// the prediction is a single point (Bayesian).
pub fn credal_extent(pred: &CredalPrediction) -> f64 {
    let vs = &pred.vertices;
    let mut extent: f64 = 0.0;
    for i in 0..vs.len() {
        for j in (i + 1)..vs.len() {
            extent = extent.max(l2_distance(&vs[i], &vs[j]));
        }
    }
    extent
}
