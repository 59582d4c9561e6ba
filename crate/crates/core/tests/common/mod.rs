//! Shared helpers for the property suites: independent naive oracles and
//! random-BPA construction from raw weight vectors.

use ranset::{Frame, MassFunction};

/// Build a frame with labels "c0".."c{n-1}".
pub fn frame_of_size(n: usize) -> Frame {
    Frame::new((0..n).map(|i| format!("c{i}"))).unwrap()
}

/// Turn an arbitrary non-negative weight vector over the nonempty subsets
/// into a valid BPA (vacuous fallback when all weights vanish).
pub fn mass_from_weights(frame: &Frame, weights: &[f64]) -> MassFunction {
    assert_eq!(weights.len(), frame.num_subsets() - 1);
    let total: f64 = weights.iter().sum();
    if total <= 1e-12 {
        return MassFunction::vacuous(frame.clone());
    }
    let mut masses = vec![0.0];
    masses.extend(weights.iter().map(|w| w / total));
    MassFunction::new(frame.clone(), masses).unwrap()
}

/// O(4^N) reference: `Bel(A) = sum of m(B) over B subseteq A` by direct
/// submask enumeration.
pub fn naive_belief(m: &MassFunction) -> Vec<f64> {
    let n = m.frame().num_subsets();
    (0..n)
        .map(|a| (0..n).filter(|b| b & a == *b).map(|b| m.mass(b)).sum())
        .collect()
}

/// O(4^N) reference: `Pl(A) = sum of m(B) over B intersecting A`.
pub fn naive_plausibility(m: &MassFunction) -> Vec<f64> {
    let n = m.frame().num_subsets();
    (0..n)
        .map(|a| (0..n).filter(|b| b & a != 0).map(|b| m.mass(b)).sum())
        .collect()
}
