//! Fast transforms over subset-indexed vectors.
//!
//! All functions operate in place on a slice of length `2^n` indexed by
//! subset bitmask and run in `O(n * 2^n)`.

/// Subset-sum (zeta) transform: `out[A] = sum over B subseteq A of v[B]`.
///
/// Applied to a mass vector this yields the belief vector.
pub(crate) fn zeta_in_place(v: &mut [f64]) {
    let n = v.len();
    debug_assert!(n.is_power_of_two());
    let mut bit = 1;
    while bit < n {
        for mask in 0..n {
            if mask & bit != 0 {
                v[mask] += v[mask ^ bit];
            }
        }
        bit <<= 1;
    }
}

/// Inverse of [`zeta_in_place`] (Moebius inversion over the subset lattice).
pub(crate) fn mobius_in_place(v: &mut [f64]) {
    let n = v.len();
    debug_assert!(n.is_power_of_two());
    let mut bit = 1;
    while bit < n {
        for mask in 0..n {
            if mask & bit != 0 {
                v[mask] -= v[mask ^ bit];
            }
        }
        bit <<= 1;
    }
}

/// Superset-sum transform: `out[A] = sum over B supseteq A of v[B]`.
///
/// This is the adjoint of [`zeta_in_place`], used to backpropagate through
/// a mass-to-belief layer.
pub(crate) fn superset_sum_in_place(v: &mut [f64]) {
    let n = v.len();
    debug_assert!(n.is_power_of_two());
    let mut bit = 1;
    while bit < n {
        for mask in 0..n {
            if mask & bit == 0 {
                v[mask] += v[mask | bit];
            }
        }
        bit <<= 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Direct submask enumeration, the O(4^n) reference.
    fn naive_subset_sums(v: &[f64]) -> Vec<f64> {
        (0..v.len())
            .map(|a| {
                (0..v.len())
                    .filter(|b| b & a == *b)
                    .map(|b| v[b])
                    .sum()
            })
            .collect()
    }

    #[test]
    fn zeta_matches_naive_enumeration() {
        let v: Vec<f64> = (0..32).map(|i| (i as f64).sin()).collect();
        let mut fast = v.clone();
        zeta_in_place(&mut fast);
        let slow = naive_subset_sums(&v);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mobius_inverts_zeta() {
        let v: Vec<f64> = (0..64).map(|i| ((i * 7 + 3) % 11) as f64 / 11.0).collect();
        let mut w = v.clone();
        zeta_in_place(&mut w);
        mobius_in_place(&mut w);
        for (a, b) in w.iter().zip(&v) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn superset_sum_is_zeta_adjoint() {
        // <zeta(x), y> == <x, superset_sum(y)>
        let x: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).cos()).collect();
        let y: Vec<f64> = (0..16).map(|i| (i as f64 * 0.61).sin()).collect();
        let mut zx = x.clone();
        zeta_in_place(&mut zx);
        let lhs: f64 = zx.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut sy = y.clone();
        superset_sum_in_place(&mut sy);
        let rhs: f64 = x.iter().zip(&sy).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
