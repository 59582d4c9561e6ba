//! Finite-difference verification of the analytic gradients for every loss
//! kind and both empty-set conventions.

mod common;

use common::frame_of_size;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ranset::net::loss;
use ranset::{EpistemicNetwork, LossKind, LossSpec};

const FD_STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;
const ABS_FLOOR: f64 = 1e-9;

/// Central finite differences of `loss(spec, forward(x), target)` w.r.t.
/// every parameter.
fn fd_gradient(net: &EpistemicNetwork, x: &[f64], spec: &LossSpec, target: &[f64]) -> Vec<f64> {
    let mut probe = net.clone();
    let base = net.params_flat();
    let mut grad = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let mut params = base.clone();
        params[i] = base[i] + FD_STEP;
        probe.set_params_flat(&params).unwrap();
        let up = loss(spec, &probe.forward(x).unwrap(), target).unwrap();
        params[i] = base[i] - FD_STEP;
        probe.set_params_flat(&params).unwrap();
        let down = loss(spec, &probe.forward(x).unwrap(), target).unwrap();
        grad.push((up - down) / (2.0 * FD_STEP));
    }
    grad
}

fn max_mismatch(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| {
            let diff = (a - n).abs();
            if diff <= ABS_FLOOR {
                0.0
            } else {
                diff / a.abs().max(n.abs()).max(ABS_FLOOR)
            }
        })
        .fold(0.0, f64::max)
}

/// Random targets appropriate for a loss kind: one-hot singleton masses for
/// the mass losses, the matching belief vector for the belief loss.
fn random_target<R: Rng>(
    kind: LossKind,
    n: usize,
    width: usize,
    include_empty: bool,
    rng: &mut R,
) -> Vec<f64> {
    let class = rng.random_range(0..n);
    let offset = usize::from(!include_empty);
    let mut t = vec![0.0; width];
    if kind.wants_belief_targets() {
        for mask in 1..(1usize << n) {
            if mask & (1 << class) != 0 {
                t[mask - offset] = 1.0;
            }
        }
    } else {
        t[(1 << class) - offset] = 1.0;
    }
    t
}

fn check_kind(kind: LossKind, trials: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..trials {
        let n = rng.random_range(2..=3);
        let frame = frame_of_size(n);
        let input_dim = rng.random_range(2..=4);
        let hidden: Vec<usize> = if trial % 3 == 0 {
            vec![]
        } else {
            vec![rng.random_range(3..=5)]
        };
        let include_empty = trial % 2 == 0;
        let net = EpistemicNetwork::new(
            frame.clone(),
            input_dim,
            &hidden,
            include_empty,
            rng.random(),
        );
        let x: Vec<f64> = (0..input_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let spec = LossSpec::new(kind);
        let target = random_target(kind, n, net.output_width(), include_empty, &mut rng);
        let analytic = net.backward(&x, &spec, &target).unwrap().flat();
        let numeric = fd_gradient(&net, &x, &spec, &target);
        let err = max_mismatch(&analytic, &numeric);
        assert!(
            err < REL_TOL,
            "{kind:?} trial {trial}: max relative error {err}"
        );
    }
}

#[test]
fn cross_entropy_mass_gradients_match_finite_differences() {
    check_kind(LossKind::CrossEntropyMass, 12, 101);
}

#[test]
fn kl_mass_gradients_match_finite_differences() {
    check_kind(LossKind::KlMass, 12, 102);
}

#[test]
fn nguyen_gradients_match_finite_differences() {
    check_kind(LossKind::Nguyen, 12, 103);
}

#[test]
fn cross_entropy_belief_gradients_match_finite_differences() {
    check_kind(LossKind::CrossEntropyBelief, 12, 104);
}

#[test]
fn jousselme_gradients_match_finite_differences() {
    check_kind(LossKind::Jousselme, 12, 105);
}

#[test]
fn soft_targets_also_check_out() {
    // Non-one-hot mass targets through the KL and cross-entropy paths.
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for kind in [LossKind::CrossEntropyMass, LossKind::KlMass] {
        for _ in 0..5 {
            let frame = frame_of_size(2);
            let net = EpistemicNetwork::new(frame, 3, &[4], false, rng.random());
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let target: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let spec = LossSpec::new(kind);
            let analytic = net.backward(&x, &spec, &target).unwrap().flat();
            let numeric = fd_gradient(&net, &x, &spec, &target);
            let err = max_mismatch(&analytic, &numeric);
            assert!(err < REL_TOL, "{kind:?} soft target: {err}");
        }
    }
}
