//! Loss and uncertainty functionals on mass functions.
//!
//! Entropies are reported in bits (base-2 logs); KL divergences use natural
//! logs since they only ever feed optimizers, where the base is a constant
//! factor. `0 * log 0 = 0` throughout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{subset_size, Frame};
use crate::mass::{MassFunction, NORMALIZATION_TOL};

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("probability vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("vector sums to {0}, not a probability distribution")]
    NotNormalized(f64),
    #[error("negative probability {value} at index {index}")]
    Negative { index: usize, value: f64 },
    #[error("absolute continuity violated at atom {atom}: p > 0 where q = 0")]
    AbsoluteContinuityViolation { atom: usize },
    #[error("operands are defined on different frames")]
    FrameMismatch,
}

const P_ZERO: f64 = 1e-12;
const Q_ZERO: f64 = 1e-300;

fn validate_distribution(p: &[f64]) -> Result<(), MeasureError> {
    for (index, &value) in p.iter().enumerate() {
        if value < 0.0 {
            return Err(MeasureError::Negative { index, value });
        }
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(MeasureError::NotNormalized(sum));
    }
    Ok(())
}

fn kl_terms(p: &[f64], q: &[f64]) -> Result<f64, MeasureError> {
    let mut total = 0.0;
    for (atom, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi <= P_ZERO {
            continue;
        }
        if qi <= Q_ZERO {
            return Err(MeasureError::AbsoluteContinuityViolation { atom });
        }
        total += pi * (pi / qi).ln();
    }
    Ok(total)
}

/// Kullback-Leibler divergence of two probability vectors, in nats.
pub fn kl_probability(p: &[f64], q: &[f64]) -> Result<f64, MeasureError> {
    if p.len() != q.len() {
        return Err(MeasureError::LengthMismatch(p.len(), q.len()));
    }
    validate_distribution(p)?;
    validate_distribution(q)?;
    kl_terms(p, q)
}

/// KL divergence of two mass functions, treating subsets as atoms.
///
/// When the masses are pushforwards of source probabilities through an
/// injective multivalued mapping this equals the source-space KL exactly.
pub fn kl_mass(m: &MassFunction, m_hat: &MassFunction) -> Result<f64, MeasureError> {
    if m.frame() != m_hat.frame() {
        return Err(MeasureError::FrameMismatch);
    }
    kl_terms(m.masses(), m_hat.masses())
}

/// Shannon entropy of a probability vector, in bits.
pub fn shannon_bits(p: &[f64]) -> f64 {
    positive_zero(
        -p.iter()
            .filter(|&&x| x > 0.0)
            .map(|&x| x * x.log2())
            .sum::<f64>(),
    )
}

/// `x + 0.0` turns the IEEE negative zero of an empty or all-zero
/// negated sum into plain zero for serialization.
fn positive_zero(x: f64) -> f64 {
    x + 0.0
}

/// Mass-weighted self-information of the focal elements (the direct
/// generalization of Shannon entropy to BPAs).
pub fn entropy_nguyen(m: &MassFunction) -> f64 {
    positive_zero(
        -m.focal_elements()
            .map(|(_, mass)| mass * mass.log2())
            .sum::<f64>(),
    )
}

/// Mass-weighted log-belief; a measure of confusion.
pub fn entropy_hohle(m: &MassFunction) -> f64 {
    let bel = m.belief();
    positive_zero(
        -m.focal_elements()
            .map(|(subset, mass)| mass * bel.value(subset).log2())
            .sum::<f64>(),
    )
}

/// Mass-weighted log-plausibility.
pub fn entropy_yager(m: &MassFunction) -> f64 {
    let pl = m.plausibility();
    positive_zero(
        -m.focal_elements()
            .map(|(subset, mass)| mass * pl.value(subset).log2())
            .sum::<f64>(),
    )
}

/// The discord + nonspecificity decomposition of global uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlirRamer {
    pub total: f64,
    pub discord: f64,
    pub nonspecificity: f64,
}

/// Global uncertainty: conflict (discord) plus imprecision (nonspecificity).
///
/// `discord = -sum m(A) log2 sum_B m(B)|A cap B|/|B|`;
/// `nonspecificity = sum m(A) log2 |A|`; total is their sum.
pub fn entropy_klir_ramer(m: &MassFunction) -> KlirRamer {
    let focal: Vec<(usize, f64)> = m.focal_elements().collect();
    let mut discord = 0.0;
    let mut nonspecificity = 0.0;
    for &(a, mass_a) in &focal {
        let mut expected_overlap = 0.0;
        for &(b, mass_b) in &focal {
            expected_overlap += mass_b * subset_size(a & b) as f64 / subset_size(b) as f64;
        }
        discord -= mass_a * expected_overlap.log2();
        nonspecificity += mass_a * (subset_size(a) as f64).log2();
    }
    let discord = positive_zero(discord);
    KlirRamer {
        total: discord + nonspecificity,
        discord,
        nonspecificity,
    }
}

/// The pignistic transform: each focal element's mass split evenly over its
/// members.
pub fn pignistic(m: &MassFunction) -> Vec<f64> {
    let n = m.frame().len();
    let mut p = vec![0.0; n];
    for (subset, mass) in m.focal_elements() {
        let share = mass / subset_size(subset) as f64;
        for (class, slot) in p.iter_mut().enumerate() {
            if subset & (1 << class) != 0 {
                *slot += share;
            }
        }
    }
    p
}

/// Jousselme's similarity-weighted distance between two BPAs:
/// `sqrt(0.5 (m1-m2)^T D (m1-m2))` with `D(A,B) = |A cap B| / |A cup B|`
/// over nonempty subsets. Lies in [0, 1].
pub fn distance_jousselme(m1: &MassFunction, m2: &MassFunction) -> Result<f64, MeasureError> {
    if m1.frame() != m2.frame() {
        return Err(MeasureError::FrameMismatch);
    }
    Ok(jousselme_quadratic(m1.masses(), m2.masses()).sqrt())
}

/// The squared Jousselme form on raw subset vectors; shared with the
/// training loss. Index 0 (the empty set) never contributes.
pub(crate) fn jousselme_quadratic(v1: &[f64], v2: &[f64]) -> f64 {
    let n = v1.len();
    let diff: Vec<f64> = v1.iter().zip(v2).map(|(a, b)| a - b).collect();
    let mut quad = 0.0;
    for a in 1..n {
        if diff[a] == 0.0 {
            continue;
        }
        for b in 1..n {
            if diff[b] == 0.0 {
                continue;
            }
            let sim = subset_size(a & b) as f64 / subset_size(a | b) as f64;
            quad += diff[a] * sim * diff[b];
        }
    }
    // The form is positive semi-definite; clamp rounding noise.
    (0.5 * quad).max(0.0)
}

/// Snapshot of every uncertainty measure for one mass function.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MeasureReport {
    pub nguyen: f64,
    pub hohle: f64,
    pub yager: f64,
    pub klir_ramer: KlirRamer,
    /// Shannon entropy of the pignistic transform; diagnostic only.
    pub shannon_of_pignistic: f64,
}

pub fn measure_report(m: &MassFunction) -> MeasureReport {
    MeasureReport {
        nguyen: entropy_nguyen(m),
        hohle: entropy_hohle(m),
        yager: entropy_yager(m),
        klir_ramer: entropy_klir_ramer(m),
        shannon_of_pignistic: shannon_bits(&pignistic(m)),
    }
}

/// Which entropy functional a property check runs against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum EntropyMeasure {
    Nguyen,
    Hohle,
    Yager,
    KlirRamer,
}

impl EntropyMeasure {
    pub fn evaluate(&self, m: &MassFunction) -> f64 {
        match self {
            EntropyMeasure::Nguyen => entropy_nguyen(m),
            EntropyMeasure::Hohle => entropy_hohle(m),
            EntropyMeasure::Yager => entropy_yager(m),
            EntropyMeasure::KlirRamer => entropy_klir_ramer(m).total,
        }
    }

    pub const ALL: [EntropyMeasure; 4] = [
        EntropyMeasure::Nguyen,
        EntropyMeasure::Hohle,
        EntropyMeasure::Yager,
        EntropyMeasure::KlirRamer,
    ];
}

/// Outcome of one property, with the first counterexample found.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub passed: bool,
    pub counterexample: Option<String>,
}

impl PropertyCheck {
    fn pass() -> Self {
        PropertyCheck {
            passed: true,
            counterexample: None,
        }
    }

    fn fail(example: String) -> Self {
        PropertyCheck {
            passed: false,
            counterexample: Some(example),
        }
    }
}

/// Executable version of the six desirable entropy properties.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PropertyReport {
    pub measure: EntropyMeasure,
    pub trials: usize,
    pub ds_semantics: PropertyCheck,
    pub non_negativity: PropertyCheck,
    pub maximum_entropy: PropertyCheck,
    pub monotonicity: PropertyCheck,
    pub probability_consistency: PropertyCheck,
    pub additivity: PropertyCheck,
}

impl PropertyReport {
    pub fn results(&self) -> [(&'static str, &PropertyCheck); 6] {
        [
            ("ds_semantics", &self.ds_semantics),
            ("non_negativity", &self.non_negativity),
            ("maximum_entropy", &self.maximum_entropy),
            ("monotonicity", &self.monotonicity),
            ("probability_consistency", &self.probability_consistency),
            ("additivity", &self.additivity),
        ]
    }
}

const PROP_TOL: f64 = 1e-9;

/// Normalized contour function: plausibility restricted to singletons.
fn plausibility_transform(m: &MassFunction) -> Vec<f64> {
    let pl = m.plausibility();
    let frame = m.frame();
    let raw: Vec<f64> = (0..frame.len())
        .map(|c| pl.value(frame.singleton(c)))
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

fn synthetic_frame(size: usize) -> Frame {
    Frame::new((0..size).map(|i| format!("s{i}"))).expect("synthetic frame size is in range")
}

/// Vacuous extension of a BPA to a product frame: each focal element A maps
/// to its cylinder A x Theta_other. `pair_bit(own, other)` gives the
/// product-frame bit of the pair.
fn extend_to_product(
    m: &MassFunction,
    product: &Frame,
    other_size: usize,
    pair_bit: impl Fn(usize, usize) -> usize,
) -> MassFunction {
    let mut masses = vec![0.0; product.num_subsets()];
    for (subset, mass) in m.focal_elements() {
        let mut cylinder = 0usize;
        for own in 0..m.frame().len() {
            if subset & (1 << own) == 0 {
                continue;
            }
            for other in 0..other_size {
                cylinder |= 1 << pair_bit(own, other);
            }
        }
        masses[cylinder] += mass;
    }
    MassFunction::new(product.clone(), masses).expect("vacuous extension preserves normalization")
}

fn is_certain_singleton(m: &MassFunction, tol: f64) -> bool {
    m.focal_elements()
        .all(|(subset, mass)| subset.count_ones() == 1 || mass <= tol)
        && m.focal_elements().any(|(_, mass)| mass > 1.0 - tol)
}

/// Check the six Jirousek-Shenoy style properties of one entropy measure by
/// direct evaluation on deterministic edge cases plus `trials` random BPAs.
pub fn check_entropy_properties(
    measure: EntropyMeasure,
    frame: &Frame,
    trials: usize,
    seed: u64,
) -> PropertyReport {
    assert!(trials >= 1, "at least one random trial is required");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = frame.len();

    // Deterministic cases first: vacuous, every certain singleton, uniform
    // Bayesian; then the random pool.
    let mut pool: Vec<MassFunction> = Vec::with_capacity(trials + n + 2);
    pool.push(MassFunction::vacuous(frame.clone()));
    for class in 0..n {
        pool.push(MassFunction::certain(frame.clone(), class));
    }
    pool.push(
        MassFunction::bayesian(frame.clone(), &vec![1.0 / n as f64; n])
            .expect("uniform distribution is valid"),
    );
    for _ in 0..trials {
        pool.push(MassFunction::sample_random(frame, &mut rng));
    }
    let mut bayesian_pool: Vec<MassFunction> = Vec::new();
    for _ in 0..trials.min(200) {
        bayesian_pool.push(random_bayesian(frame, &mut rng));
    }

    let vacuous = MassFunction::vacuous(frame.clone());
    let h_vacuous = measure.evaluate(&vacuous);

    // Non-negativity: H >= 0 everywhere, zero only at certain singletons.
    let mut non_negativity = PropertyCheck::pass();
    for m in pool.iter().chain(&bayesian_pool) {
        let h = measure.evaluate(m);
        if h < -PROP_TOL {
            non_negativity = PropertyCheck::fail(format!("H = {h} < 0"));
            break;
        }
        if h <= PROP_TOL && !is_certain_singleton(m, PROP_TOL) {
            non_negativity = PropertyCheck::fail(format!(
                "H = 0 on a non-singleton BPA with focal elements {:?}",
                m.focal_elements().map(|(a, _)| a).collect::<Vec<_>>()
            ));
            break;
        }
    }

    // Maximum entropy: H(m) <= H(vacuous), equality only at the vacuous BPA.
    let mut maximum_entropy = PropertyCheck::pass();
    for m in pool.iter().chain(&bayesian_pool) {
        let h = measure.evaluate(m);
        if h > h_vacuous + PROP_TOL {
            maximum_entropy =
                PropertyCheck::fail(format!("H = {h} exceeds H(vacuous) = {h_vacuous}"));
            break;
        }
        if h >= h_vacuous - PROP_TOL && !m.approx_eq(&vacuous, PROP_TOL) {
            maximum_entropy = PropertyCheck::fail(format!(
                "H = H(vacuous) = {h_vacuous} attained away from the vacuous BPA"
            ));
            break;
        }
    }

    // Monotonicity: the vacuous entropy must grow strictly with frame size.
    let mut monotonicity = PropertyCheck::pass();
    let max_size = n.max(2);
    let mut prev = None;
    for size in 1..=max_size {
        let h = measure.evaluate(&MassFunction::vacuous(synthetic_frame(size)));
        if let Some((prev_size, prev_h)) = prev {
            if h <= prev_h + PROP_TOL {
                monotonicity = PropertyCheck::fail(format!(
                    "H(vacuous on {size}) = {h} not above H(vacuous on {prev_size}) = {prev_h}"
                ));
                break;
            }
        }
        prev = Some((size, h));
    }

    // Probability consistency: Bayesian BPAs reduce to Shannon entropy.
    let mut probability_consistency = PropertyCheck::pass();
    for m in bayesian_pool.iter().chain(
        pool.iter()
            .filter(|m| m.is_bayesian()),
    ) {
        let h = measure.evaluate(m);
        let shannon = shannon_bits(&m.singleton_masses());
        if (h - shannon).abs() > PROP_TOL {
            probability_consistency =
                PropertyCheck::fail(format!("H = {h} vs Shannon = {shannon}"));
            break;
        }
    }

    // Additivity: on a product frame built by vacuous extension and
    // Dempster combination, entropy must add across the factors.
    let mut additivity = PropertyCheck::pass();
    let size_x = 2;
    let size_y = 3;
    let frame_x = synthetic_frame(size_x);
    let frame_y = Frame::new((0..size_y).map(|i| format!("t{i}"))).expect("valid frame");
    let product = Frame::new(
        (0..size_x)
            .flat_map(|i| (0..size_y).map(move |j| format!("s{i}*t{j}")))
            .collect::<Vec<_>>(),
    )
    .expect("product frame is in range");
    let mut product_cases: Vec<(MassFunction, MassFunction)> = vec![
        (
            MassFunction::vacuous(frame_x.clone()),
            MassFunction::vacuous(frame_y.clone()),
        ),
        (
            MassFunction::bayesian(frame_x.clone(), &[0.25, 0.75]).expect("valid"),
            MassFunction::bayesian(frame_y.clone(), &[0.2, 0.5, 0.3]).expect("valid"),
        ),
    ];
    for _ in 0..trials.min(50) {
        product_cases.push((
            MassFunction::sample_random(&frame_x, &mut rng),
            MassFunction::sample_random(&frame_y, &mut rng),
        ));
    }
    for (mx, my) in &product_cases {
        // Product element (i, j) sits at bit i*size_y + j.
        let ext_x = extend_to_product(mx, &product, size_y, |i, j| i * size_y + j);
        let ext_y = extend_to_product(my, &product, size_x, |j, i| i * size_y + j);
        let joint = ext_x
            .combine_dempster(&ext_y)
            .expect("cylinder extensions never conflict");
        let lhs = measure.evaluate(&joint);
        let rhs = measure.evaluate(mx) + measure.evaluate(my);
        if (lhs - rhs).abs() > PROP_TOL {
            additivity = PropertyCheck::fail(format!("H(joint) = {lhs} vs sum = {rhs}"));
            break;
        }
    }

    // Consistency with DS-theory semantics: the probability transform
    // underlying the measures (the normalized contour function) must commute
    // with Dempster combination.
    let mut ds_semantics = PropertyCheck::pass();
    'outer: for _ in 0..trials {
        let m1 = MassFunction::sample_random(frame, &mut rng);
        let m2 = MassFunction::sample_random(frame, &mut rng);
        let combined = match m1.combine_dempster(&m2) {
            Ok(c) => c,
            Err(_) => continue, // total conflict: combination undefined
        };
        let lhs = plausibility_transform(&combined);
        let p1 = plausibility_transform(&m1);
        let p2 = plausibility_transform(&m2);
        let mut rhs: Vec<f64> = p1.iter().zip(&p2).map(|(a, b)| a * b).collect();
        let z: f64 = rhs.iter().sum();
        for value in rhs.iter_mut() {
            *value /= z;
        }
        for (class, (&l, &r)) in lhs.iter().zip(&rhs).enumerate() {
            if (l - r).abs() > PROP_TOL {
                ds_semantics = PropertyCheck::fail(format!(
                    "transform of combination differs at class {class}: {l} vs {r}"
                ));
                break 'outer;
            }
        }
    }

    PropertyReport {
        measure,
        trials,
        ds_semantics,
        non_negativity,
        maximum_entropy,
        monotonicity,
        probability_consistency,
        additivity,
    }
}

fn random_bayesian<R: Rng + ?Sized>(frame: &Frame, rng: &mut R) -> MassFunction {
    let n = frame.len();
    let mut probs: Vec<f64> = (0..n)
        .map(|_| -rng.random::<f64>().max(1e-12).ln())
        .collect();
    let total: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= total;
    }
    MassFunction::bayesian(frame.clone(), &probs).expect("normalized by construction")
}
