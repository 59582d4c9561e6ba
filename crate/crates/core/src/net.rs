//! Dense feedforward classifier with a power-set output head.
//!
//! The network is an ordinary ReLU MLP whose softmax output layer has one
//! slot per subset of the frame (the empty set optionally included). The
//! softmax output is mapped to a mass function, and every supported loss is
//! differentiated analytically through that mapping, so training uses exact
//! gradients for all loss kinds.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{Frame, FrameError};
use crate::mass::{MassError, MassFunction};
use crate::measures::jousselme_quadratic;
use crate::setops::{superset_sum_in_place, zeta_in_place};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invalid checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Mass(#[from] MassError),
}

/// Which epistemic loss drives training, and the floor applied to predicted
/// values before logs so softmax underflow cannot abort a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LossSpec {
    pub kind: LossKind,
    #[serde(default = "default_clamp")]
    pub clamp_epsilon: f64,
}

fn default_clamp() -> f64 {
    1e-12
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec {
            kind: LossKind::CrossEntropyMass,
            clamp_epsilon: default_clamp(),
        }
    }
}

impl LossSpec {
    pub fn new(kind: LossKind) -> Self {
        LossSpec {
            kind,
            clamp_epsilon: default_clamp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum LossKind {
    /// `-sum t(A) ln mhat(A)` with a mass-vector target.
    CrossEntropyMass,
    /// KL divergence of target mass from predicted mass.
    KlMass,
    /// Generalized self-information loss; coincides with
    /// [`LossKind::CrossEntropyMass`] on single-focal-element targets.
    Nguyen,
    /// `-sum Bel_t(A) ln Bel_mhat(A) / sum Bel_t(A)`. The target vector is
    /// interpreted as a belief vector (use the belief target encoding);
    /// the predicted belief goes through a differentiable zeta layer.
    CrossEntropyBelief,
    /// Squared similarity-weighted distance between target and predicted
    /// mass vectors.
    Jousselme,
}

/// Whether the target vector of a loss kind is a mass vector or a belief
/// vector, so datasets can pick the matching encoding.
impl LossKind {
    pub fn wants_belief_targets(&self) -> bool {
        matches!(self, LossKind::CrossEntropyBelief)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum OptimizerKind {
    Sgd,
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_adam_eps")]
        epsilon: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_adam_eps(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::adam(),
            seed: 0,
            shuffle: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

pub type TrainHistory = Vec<EpochStats>;

#[derive(Debug, Clone)]
struct DenseLayer {
    // weights are (out x in); biases are (out)
    w: Array2<f64>,
    b: Array1<f64>,
}

/// Per-parameter gradients, shaped like the network's layers.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    /// Flattened view in the same order as
    /// [`EpistemicNetwork::params_flat`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

/// The shared MLP core: dense layers, ReLU on all but the last.
#[derive(Debug, Clone)]
struct Mlp {
    layers: Vec<DenseLayer>,
}

struct ForwardState {
    /// Post-activation output of each hidden layer.
    post: Vec<Array2<f64>>,
    logits: Array2<f64>,
}

impl Mlp {
    /// He-style uniform initialization scaled by fan-in, seeded.
    fn init(dims: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for win in dims.windows(2) {
            let (fan_in, fan_out) = (win[0], win[1]);
            let limit = (6.0 / fan_in as f64).sqrt();
            let w = Array2::from_shape_fn((fan_out, fan_in), |_| {
                rng.random_range(-limit..limit)
            });
            layers.push(DenseLayer {
                w,
                b: Array1::zeros(fan_out),
            });
        }
        Mlp { layers }
    }

    fn zeroed(dims: &[usize]) -> Self {
        let layers = dims
            .windows(2)
            .map(|win| DenseLayer {
                w: Array2::zeros((win[1], win[0])),
                b: Array1::zeros(win[1]),
            })
            .collect();
        Mlp { layers }
    }

    fn forward(&self, x: ArrayView2<f64>) -> ForwardState {
        let depth = self.layers.len();
        let mut post: Vec<Array2<f64>> = Vec::with_capacity(depth - 1);
        for (i, layer) in self.layers.iter().enumerate() {
            let input = if i == 0 { x } else { post[i - 1].view() };
            let mut z = input.dot(&layer.w.t()) + &layer.b;
            if i + 1 < depth {
                z.mapv_inplace(|v| v.max(0.0));
                post.push(z);
            } else {
                return ForwardState { post, logits: z };
            }
        }
        unreachable!("an MLP has at least one layer")
    }

    /// Backpropagate `dlogits` (already scaled for the batch) to parameter
    /// gradients.
    fn backward(
        &self,
        x: ArrayView2<f64>,
        state: &ForwardState,
        dlogits: Array2<f64>,
    ) -> Gradients {
        let depth = self.layers.len();
        let mut weights = vec![Array2::zeros((0, 0)); depth];
        let mut biases = vec![Array1::zeros(0); depth];
        let mut delta = dlogits;
        for i in (0..depth).rev() {
            let input = if i == 0 { x } else { state.post[i - 1].view() };
            weights[i] = delta.t().dot(&input);
            biases[i] = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut next = delta.dot(&self.layers[i].w);
                // ReLU subgradient: zero where the activation was clipped.
                next.zip_mut_with(&state.post[i - 1], |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = next;
            }
        }
        Gradients { weights, biases }
    }
}

fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Feedforward classifier whose output layer scores every subset of the
/// frame. With the empty set included the head has `2^N` slots and the
/// empty slot is zeroed and renormalized away when forming a mass function;
/// with it excluded the `2^N - 1` slots are a valid BPA directly.
#[derive(Debug, Clone)]
pub struct EpistemicNetwork {
    frame: Frame,
    include_empty: bool,
    input_dim: usize,
    hidden: Vec<usize>,
    mlp: Mlp,
}

impl EpistemicNetwork {
    pub fn new(
        frame: Frame,
        input_dim: usize,
        hidden: &[usize],
        include_empty: bool,
        seed: u64,
    ) -> Self {
        let dims = Self::dims(&frame, input_dim, hidden, include_empty);
        EpistemicNetwork {
            frame,
            include_empty,
            input_dim,
            hidden: hidden.to_vec(),
            mlp: Mlp::init(&dims, seed),
        }
    }

    /// All-zero parameters; softmax then outputs the uniform vector.
    pub fn zeroed(frame: Frame, input_dim: usize, hidden: &[usize], include_empty: bool) -> Self {
        let dims = Self::dims(&frame, input_dim, hidden, include_empty);
        EpistemicNetwork {
            frame,
            include_empty,
            input_dim,
            hidden: hidden.to_vec(),
            mlp: Mlp::zeroed(&dims),
        }
    }

    fn dims(frame: &Frame, input_dim: usize, hidden: &[usize], include_empty: bool) -> Vec<usize> {
        let output = frame.num_subsets() - usize::from(!include_empty);
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(input_dim);
        dims.extend_from_slice(hidden);
        dims.push(output);
        dims
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn include_empty(&self) -> bool {
        self.include_empty
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    /// Number of output slots: `2^N` with the empty set, `2^N - 1` without.
    pub fn output_width(&self) -> usize {
        self.frame.num_subsets() - usize::from(!self.include_empty)
    }

    /// Expand a target vector of length `output_width` or `2^N` to the full
    /// subset indexing (empty-set entry first).
    pub fn expand_target(&self, target: &[f64]) -> Result<Vec<f64>, NetError> {
        let full = self.frame.num_subsets();
        if target.len() == full {
            Ok(target.to_vec())
        } else if target.len() == full - 1 {
            let mut out = Vec::with_capacity(full);
            out.push(0.0);
            out.extend_from_slice(target);
            Ok(out)
        } else {
            Err(NetError::ShapeMismatch {
                expected: self.output_width(),
                got: target.len(),
            })
        }
    }

    /// Map one softmax row to a full `2^N` mass vector.
    fn masses_from_softmax(&self, s: ArrayView1<f64>, clamp: f64) -> Vec<f64> {
        let full = self.frame.num_subsets();
        let mut m = vec![0.0; full];
        if self.include_empty {
            let rest = (1.0 - s[0]).max(clamp);
            for slot in 1..full {
                m[slot] = s[slot] / rest;
            }
        } else {
            for slot in 0..full - 1 {
                m[slot + 1] = s[slot];
            }
        }
        m
    }

    /// Chain a gradient w.r.t. the mass vector back to the softmax output.
    fn slot_grad_from_mass_grad(
        &self,
        gm: &[f64],
        s: ArrayView1<f64>,
        m: &[f64],
        clamp: f64,
    ) -> Vec<f64> {
        if self.include_empty {
            let rest = (1.0 - s[0]).max(clamp);
            let mut gs = vec![0.0; s.len()];
            let mut weighted = 0.0;
            for mask in 1..gm.len() {
                gs[mask] = gm[mask] / rest;
                weighted += gm[mask] * m[mask];
            }
            gs[0] = weighted / rest;
            gs
        } else {
            gm[1..].to_vec()
        }
    }

    /// Run one input through the network; the output always satisfies the
    /// mass-function invariants.
    pub fn forward(&self, x: &[f64]) -> Result<MassFunction, NetError> {
        if x.len() != self.input_dim {
            return Err(NetError::ShapeMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        let view = ArrayView2::from_shape((1, x.len()), x).expect("shape checked above");
        let state = self.mlp.forward(view);
        let s = softmax_rows(&state.logits);
        let m = self.masses_from_softmax(s.row(0), default_clamp());
        Ok(MassFunction::new(self.frame.clone(), m)?)
    }

    /// Predicted mass functions for a batch of inputs.
    pub fn predict(&self, features: ArrayView2<f64>) -> Result<Vec<MassFunction>, NetError> {
        if features.ncols() != self.input_dim {
            return Err(NetError::ShapeMismatch {
                expected: self.input_dim,
                got: features.ncols(),
            });
        }
        let state = self.mlp.forward(features);
        let s = softmax_rows(&state.logits);
        let mut out = Vec::with_capacity(features.nrows());
        for row in s.rows() {
            let m = self.masses_from_softmax(row, default_clamp());
            out.push(MassFunction::new(self.frame.clone(), m)?);
        }
        Ok(out)
    }

    /// Fraction of rows whose singleton-argmax prediction matches the label.
    pub fn evaluate_accuracy(
        &self,
        features: ArrayView2<f64>,
        labels: &[usize],
    ) -> Result<f64, NetError> {
        if labels.is_empty() {
            return Err(NetError::EmptyDataset);
        }
        let preds = self.predict(features)?;
        let correct = preds
            .iter()
            .zip(labels)
            .filter(|(m, &y)| m.argmax_singleton() == y)
            .count();
        Ok(correct as f64 / labels.len() as f64)
    }

    /// Exact gradient of `loss(spec, forward(x), target)` for one sample.
    pub fn backward(
        &self,
        x: &[f64],
        spec: &LossSpec,
        target: &[f64],
    ) -> Result<Gradients, NetError> {
        if x.len() != self.input_dim {
            return Err(NetError::ShapeMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        let t_full = self.expand_target(target)?;
        let view = ArrayView2::from_shape((1, x.len()), x).expect("shape checked above");
        let state = self.mlp.forward(view);
        let s = softmax_rows(&state.logits);
        let mut dlogits = Array2::zeros(s.raw_dim());
        let row = s.row(0);
        let m = self.masses_from_softmax(row, spec.clamp_epsilon);
        let gm = loss_grad_mass(spec, &t_full, &m);
        let gs = self.slot_grad_from_mass_grad(&gm, row, &m, spec.clamp_epsilon);
        write_softmax_backward(&mut dlogits.row_mut(0), row, &gs);
        Ok(self.mlp.backward(view, &state, dlogits))
    }

    pub fn num_params(&self) -> usize {
        self.mlp
            .layers
            .iter()
            .map(|l| l.w.len() + l.b.len())
            .sum()
    }

    /// All parameters flattened layer by layer, weights row-major then bias.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in &self.mlp.layers {
            out.extend(layer.w.iter());
            out.extend(layer.b.iter());
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<(), NetError> {
        if params.len() != self.num_params() {
            return Err(NetError::ShapeMismatch {
                expected: self.num_params(),
                got: params.len(),
            });
        }
        let mut offset = 0;
        for layer in &mut self.mlp.layers {
            for w in layer.w.iter_mut() {
                *w = params[offset];
                offset += 1;
            }
            for b in layer.b.iter_mut() {
                *b = params[offset];
                offset += 1;
            }
        }
        Ok(())
    }

    /// Write the model to a single binary checkpoint: magic, format
    /// version, a JSON header, then all parameters as little-endian f64.
    pub fn save(&self, path: &Path) -> Result<(), NetError> {
        let header = serde_json::to_vec(&CheckpointHeader {
            labels: self.frame.labels().to_vec(),
            input_dim: self.input_dim,
            hidden: self.hidden.clone(),
            include_empty: self.include_empty,
        })?;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for value in self.params_flat() {
            out.extend_from_slice(&value.to_le_bytes());
        }
        let mut file = fs::File::create(path)?;
        file.write_all(&out)?;
        Ok(())
    }

    /// Load a checkpoint; forward outputs reproduce the saved model
    /// bit-exactly on the same platform.
    pub fn load(path: &Path) -> Result<Self, NetError> {
        let bytes = fs::read(path)?;
        if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(NetError::BadCheckpoint("bad magic".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("slice of length 4"));
        if version != CHECKPOINT_VERSION {
            return Err(NetError::BadCheckpoint(format!(
                "unsupported format version {version}"
            )));
        }
        let header_len =
            u32::from_le_bytes(bytes[12..16].try_into().expect("slice of length 4")) as usize;
        if bytes.len() < 16 + header_len {
            return Err(NetError::BadCheckpoint("truncated header".into()));
        }
        let header: CheckpointHeader = serde_json::from_slice(&bytes[16..16 + header_len])?;
        let frame = Frame::new(header.labels)?;
        let mut net = EpistemicNetwork::zeroed(
            frame,
            header.input_dim,
            &header.hidden,
            header.include_empty,
        );
        let body = &bytes[16 + header_len..];
        if body.len() != net.num_params() * 8 {
            return Err(NetError::BadCheckpoint(format!(
                "expected {} parameter bytes, found {}",
                net.num_params() * 8,
                body.len()
            )));
        }
        let params: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of length 8")))
            .collect();
        net.set_params_flat(&params)?;
        Ok(net)
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"RSNETCKP";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct CheckpointHeader {
    labels: Vec<String>,
    input_dim: usize,
    hidden: Vec<usize>,
    include_empty: bool,
}

/// Scalar loss between a predicted mass function and a target encoding.
///
/// `target` has `2^N` entries (empty set first) or `2^N - 1` (empty set
/// omitted). Mass-valued targets for the mass losses, belief-valued targets
/// for [`LossKind::CrossEntropyBelief`].
pub fn loss(spec: &LossSpec, predicted: &MassFunction, target: &[f64]) -> Result<f64, NetError> {
    let full = predicted.frame().num_subsets();
    let t_full: Vec<f64> = if target.len() == full {
        target.to_vec()
    } else if target.len() == full - 1 {
        let mut t = Vec::with_capacity(full);
        t.push(0.0);
        t.extend_from_slice(target);
        t
    } else {
        return Err(NetError::ShapeMismatch {
            expected: full,
            got: target.len(),
        });
    };
    Ok(loss_value(spec, &t_full, predicted.masses()))
}

fn loss_value(spec: &LossSpec, t: &[f64], m: &[f64]) -> f64 {
    let eps = spec.clamp_epsilon;
    match spec.kind {
        LossKind::CrossEntropyMass | LossKind::Nguyen => t
            .iter()
            .zip(m)
            .filter(|(&ti, _)| ti > 0.0)
            .map(|(&ti, &mi)| -ti * mi.max(eps).ln())
            .sum(),
        LossKind::KlMass => t
            .iter()
            .zip(m)
            .filter(|(&ti, _)| ti > 0.0)
            .map(|(&ti, &mi)| ti * (ti.max(eps).ln() - mi.max(eps).ln()))
            .sum(),
        LossKind::CrossEntropyBelief => {
            let bel_t = t; // the target encoding is already a belief vector
            let mut bel_m = m.to_vec();
            zeta_in_place(&mut bel_m);
            let z: f64 = bel_t.iter().sum();
            let raw: f64 = bel_t
                .iter()
                .zip(&bel_m)
                .filter(|(&bt, _)| bt > 0.0)
                .map(|(&bt, &bm)| -bt * bm.max(eps).ln())
                .sum();
            raw / z
        }
        LossKind::Jousselme => jousselme_quadratic(t, m),
    }
}

/// Gradient of [`loss_value`] w.r.t. the predicted mass vector.
fn loss_grad_mass(spec: &LossSpec, t: &[f64], m: &[f64]) -> Vec<f64> {
    let eps = spec.clamp_epsilon;
    match spec.kind {
        LossKind::CrossEntropyMass | LossKind::Nguyen | LossKind::KlMass => t
            .iter()
            .zip(m)
            .map(|(&ti, &mi)| {
                if ti > 0.0 && mi >= eps {
                    -ti / mi
                } else {
                    0.0
                }
            })
            .collect(),
        LossKind::CrossEntropyBelief => {
            let mut bel_m = m.to_vec();
            zeta_in_place(&mut bel_m);
            let z: f64 = t.iter().sum();
            let mut grad: Vec<f64> = t
                .iter()
                .zip(&bel_m)
                .map(|(&bt, &bm)| {
                    if bt > 0.0 && bm >= eps {
                        -bt / (z * bm)
                    } else {
                        0.0
                    }
                })
                .collect();
            // Adjoint of the zeta layer.
            superset_sum_in_place(&mut grad);
            grad
        }
        LossKind::Jousselme => {
            let n = t.len();
            let diff: Vec<f64> = t.iter().zip(m).map(|(a, b)| a - b).collect();
            let mut grad = vec![0.0; n];
            for a in 1..n {
                let mut acc = 0.0;
                for (b, &db) in diff.iter().enumerate().skip(1) {
                    if db != 0.0 {
                        acc += (a & b).count_ones() as f64 / (a | b).count_ones() as f64 * db;
                    }
                }
                grad[a] = -acc;
            }
            grad
        }
    }
}

/// `dL/dlogits` row from the softmax output row and `dL/ds`.
fn write_softmax_backward(
    dlogits: &mut ndarray::ArrayViewMut1<f64>,
    s: ArrayView1<f64>,
    gs: &[f64],
) {
    let inner: f64 = gs.iter().zip(s.iter()).map(|(g, v)| g * v).sum();
    for (slot, d) in dlogits.iter_mut().enumerate() {
        *d = s[slot] * (gs[slot] - inner);
    }
}

struct AdamState {
    m: Vec<(Array2<f64>, Array1<f64>)>,
    v: Vec<(Array2<f64>, Array1<f64>)>,
    step: u64,
}

fn apply_update(
    mlp: &mut Mlp,
    grads: &Gradients,
    cfg: &TrainConfig,
    adam: &mut Option<AdamState>,
) {
    match cfg.optimizer {
        OptimizerKind::Sgd => {
            for (layer, (gw, gb)) in mlp
                .layers
                .iter_mut()
                .zip(grads.weights.iter().zip(&grads.biases))
            {
                layer.w.zip_mut_with(gw, |p, &g| *p -= cfg.learning_rate * g);
                layer.b.zip_mut_with(gb, |p, &g| *p -= cfg.learning_rate * g);
            }
        }
        OptimizerKind::Adam {
            beta1,
            beta2,
            epsilon,
        } => {
            let state = adam.get_or_insert_with(|| AdamState {
                m: mlp
                    .layers
                    .iter()
                    .map(|l| (Array2::zeros(l.w.raw_dim()), Array1::zeros(l.b.raw_dim())))
                    .collect(),
                v: mlp
                    .layers
                    .iter()
                    .map(|l| (Array2::zeros(l.w.raw_dim()), Array1::zeros(l.b.raw_dim())))
                    .collect(),
                step: 0,
            });
            state.step += 1;
            let bc1 = 1.0 - beta1.powi(state.step as i32);
            let bc2 = 1.0 - beta2.powi(state.step as i32);
            for (i, layer) in mlp.layers.iter_mut().enumerate() {
                let (mw, mb) = &mut state.m[i];
                let (vw, vb) = &mut state.v[i];
                mw.zip_mut_with(&grads.weights[i], |m, &g| *m = beta1 * *m + (1.0 - beta1) * g);
                vw.zip_mut_with(&grads.weights[i], |v, &g| {
                    *v = beta2 * *v + (1.0 - beta2) * g * g
                });
                mb.zip_mut_with(&grads.biases[i], |m, &g| *m = beta1 * *m + (1.0 - beta1) * g);
                vb.zip_mut_with(&grads.biases[i], |v, &g| {
                    *v = beta2 * *v + (1.0 - beta2) * g * g
                });
                azip_update(&mut layer.w, mw, vw, cfg.learning_rate, bc1, bc2, epsilon);
                azip_update_1d(&mut layer.b, mb, vb, cfg.learning_rate, bc1, bc2, epsilon);
            }
        }
    }
}

fn azip_update(
    p: &mut Array2<f64>,
    m: &Array2<f64>,
    v: &Array2<f64>,
    lr: f64,
    bc1: f64,
    bc2: f64,
    eps: f64,
) {
    ndarray::Zip::from(p).and(m).and(v).for_each(|p, &m, &v| {
        *p -= lr * (m / bc1) / ((v / bc2).sqrt() + eps);
    });
}

fn azip_update_1d(
    p: &mut Array1<f64>,
    m: &Array1<f64>,
    v: &Array1<f64>,
    lr: f64,
    bc1: f64,
    bc2: f64,
    eps: f64,
) {
    ndarray::Zip::from(p).and(m).and(v).for_each(|p, &m, &v| {
        *p -= lr * (m / bc1) / ((v / bc2).sqrt() + eps);
    });
}

/// Minibatch training with exact gradients.
///
/// `targets` rows are loss targets (length `output_width` or `2^N`);
/// `labels` are the true class indices used for the accuracy column.
/// Deterministic for a fixed config: identical runs produce identical
/// parameters bit for bit.
pub fn train(
    net: &mut EpistemicNetwork,
    features: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    labels: &[usize],
    spec: &LossSpec,
    cfg: &TrainConfig,
) -> Result<TrainHistory, NetError> {
    train_with_progress(net, features, targets, labels, spec, cfg, |_| {})
}

/// [`train`] with a per-epoch callback for progress reporting.
pub fn train_with_progress(
    net: &mut EpistemicNetwork,
    features: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    labels: &[usize],
    spec: &LossSpec,
    cfg: &TrainConfig,
    mut progress: impl FnMut(&EpochStats),
) -> Result<TrainHistory, NetError> {
    let n = features.nrows();
    if n == 0 {
        return Err(NetError::EmptyDataset);
    }
    if features.ncols() != net.input_dim {
        return Err(NetError::ShapeMismatch {
            expected: net.input_dim,
            got: features.ncols(),
        });
    }
    if targets.nrows() != n || labels.len() != n {
        return Err(NetError::ShapeMismatch {
            expected: n,
            got: targets.nrows().min(labels.len()),
        });
    }
    let full = net.frame.num_subsets();
    let t_width = targets.ncols();
    if t_width != full && t_width != full - 1 {
        return Err(NetError::ShapeMismatch {
            expected: net.output_width(),
            got: t_width,
        });
    }
    let pad = full - t_width; // 1 when the empty-set slot is omitted

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut adam = None;
    let mut history = Vec::with_capacity(cfg.epochs);
    let batch = cfg.batch_size.max(1);

    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        let mut correct = 0usize;
        for (batch_idx, chunk) in order.chunks(batch).enumerate() {
            let xb = features.select(Axis(0), chunk);
            let tb = targets.select(Axis(0), chunk);
            let state = net.mlp.forward(xb.view());
            let s = softmax_rows(&state.logits);
            // Clamping hides NaN from the log losses, so catch diverged
            // outputs here rather than in the loss value.
            if s.iter().any(|v| !v.is_finite()) {
                return Err(NetError::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            let rows = chunk.len();
            let mut dlogits = Array2::zeros(s.raw_dim());
            let mut batch_loss = 0.0;
            let mut t_full = vec![0.0; full];
            for r in 0..rows {
                let srow = s.row(r);
                let m = net.masses_from_softmax(srow, spec.clamp_epsilon);
                t_full[..pad].fill(0.0);
                for (slot, value) in tb.row(r).iter().enumerate() {
                    t_full[slot + pad] = *value;
                }
                batch_loss += loss_value(spec, &t_full, &m);
                let predicted = argmax_singleton_of(&m, net.frame.len());
                if predicted == labels[chunk[r]] {
                    correct += 1;
                }
                let gm = loss_grad_mass(spec, &t_full, &m);
                let gs = net.slot_grad_from_mass_grad(&gm, srow, &m, spec.clamp_epsilon);
                write_softmax_backward(&mut dlogits.row_mut(r), srow, &gs);
            }
            if !batch_loss.is_finite() {
                return Err(NetError::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            epoch_loss += batch_loss;
            dlogits.mapv_inplace(|d| d / rows as f64);
            let grads = net.mlp.backward(xb.view(), &state, dlogits);
            apply_update(&mut net.mlp, &grads, cfg, &mut adam);
        }
        let stats = EpochStats {
            epoch,
            loss: epoch_loss / n as f64,
            accuracy: correct as f64 / n as f64,
        };
        progress(&stats);
        history.push(stats);
    }
    Ok(history)
}

fn argmax_singleton_of(m: &[f64], num_classes: usize) -> usize {
    let mut best = 0;
    let mut best_mass = m[1];
    for class in 1..num_classes {
        let value = m[1 << class];
        if value > best_mass {
            best = class;
            best_mass = value;
        }
    }
    best
}

/// Plain N-class softmax classifier built on the same MLP core; the
/// reference point for the padded-target comparison.
#[derive(Debug, Clone)]
pub struct SoftmaxClassifier {
    num_classes: usize,
    input_dim: usize,
    mlp: Mlp,
}

impl SoftmaxClassifier {
    pub fn new(num_classes: usize, input_dim: usize, hidden: &[usize], seed: u64) -> Self {
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(input_dim);
        dims.extend_from_slice(hidden);
        dims.push(num_classes);
        SoftmaxClassifier {
            num_classes,
            input_dim,
            mlp: Mlp::init(&dims, seed),
        }
    }

    pub fn probabilities(&self, features: ArrayView2<f64>) -> Result<Array2<f64>, NetError> {
        if features.ncols() != self.input_dim {
            return Err(NetError::ShapeMismatch {
                expected: self.input_dim,
                got: features.ncols(),
            });
        }
        let state = self.mlp.forward(features);
        Ok(softmax_rows(&state.logits))
    }

    pub fn evaluate_accuracy(
        &self,
        features: ArrayView2<f64>,
        labels: &[usize],
    ) -> Result<f64, NetError> {
        let probs = self.probabilities(features)?;
        let correct = probs
            .rows()
            .into_iter()
            .zip(labels)
            .filter(|(row, &y)| {
                let mut best = 0;
                for c in 1..row.len() {
                    if row[c] > row[best] {
                        best = c;
                    }
                }
                best == y
            })
            .count();
        Ok(correct as f64 / labels.len() as f64)
    }

    /// Standard cross-entropy training; shares the optimizer, shuffling,
    /// and batching code paths with the epistemic network.
    pub fn train(
        &mut self,
        features: ArrayView2<f64>,
        labels: &[usize],
        cfg: &TrainConfig,
    ) -> Result<TrainHistory, NetError> {
        let n = features.nrows();
        if n == 0 {
            return Err(NetError::EmptyDataset);
        }
        if features.ncols() != self.input_dim {
            return Err(NetError::ShapeMismatch {
                expected: self.input_dim,
                got: features.ncols(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..n).collect();
        let mut adam = None;
        let mut history = Vec::with_capacity(cfg.epochs);
        let batch = cfg.batch_size.max(1);
        for epoch in 0..cfg.epochs {
            if cfg.shuffle {
                order.shuffle(&mut rng);
            }
            let mut epoch_loss = 0.0;
            let mut correct = 0usize;
            for (batch_idx, chunk) in order.chunks(batch).enumerate() {
                let xb = features.select(Axis(0), chunk);
                let state = self.mlp.forward(xb.view());
                let s = softmax_rows(&state.logits);
                if s.iter().any(|v| !v.is_finite()) {
                    return Err(NetError::NonFiniteLoss {
                        epoch,
                        batch: batch_idx,
                    });
                }
                let mut dlogits = s.clone();
                let mut batch_loss = 0.0;
                for (r, &row_index) in chunk.iter().enumerate() {
                    let y = labels[row_index];
                    batch_loss += -s[(r, y)].max(default_clamp()).ln();
                    dlogits[(r, y)] -= 1.0;
                    let row = s.row(r);
                    let mut best = 0;
                    for c in 1..self.num_classes {
                        if row[c] > row[best] {
                            best = c;
                        }
                    }
                    if best == y {
                        correct += 1;
                    }
                }
                if !batch_loss.is_finite() {
                    return Err(NetError::NonFiniteLoss {
                        epoch,
                        batch: batch_idx,
                    });
                }
                epoch_loss += batch_loss;
                dlogits.mapv_inplace(|d| d / chunk.len() as f64);
                let grads = self.mlp.backward(xb.view(), &state, dlogits);
                apply_update(&mut self.mlp, &grads, cfg, &mut adam);
            }
            history.push(EpochStats {
                epoch,
                loss: epoch_loss / n as f64,
                accuracy: correct as f64 / n as f64,
            });
        }
        Ok(history)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn frame_ab() -> Frame {
        Frame::new(["a", "b"]).unwrap()
    }

    #[test]
    fn zero_network_outputs_uniform_mass() {
        let net = EpistemicNetwork::zeroed(frame_ab(), 3, &[4], false);
        let m = net.forward(&[0.5, -0.2, 1.0]).unwrap();
        for mask in 1..4 {
            assert!((m.mass(mask) - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_output_is_a_valid_mass_function() {
        for include_empty in [false, true] {
            let net = EpistemicNetwork::new(frame_ab(), 5, &[8, 4], include_empty, 11);
            let x: Vec<f64> = (0..5).map(|i| (i as f64 * 0.7).sin()).collect();
            let m = net.forward(&x).unwrap();
            let sum: f64 = m.masses().iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert_eq!(m.mass(0), 0.0);
        }
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        let net = EpistemicNetwork::zeroed(frame_ab(), 3, &[], false);
        assert!(matches!(
            net.forward(&[1.0]),
            Err(NetError::ShapeMismatch { expected: 3, got: 1 })
        ));
    }

    #[test]
    fn cross_entropy_of_uniform_prediction_is_ln_k() {
        let net = EpistemicNetwork::zeroed(frame_ab(), 2, &[], false);
        let m = net.forward(&[0.0, 0.0]).unwrap();
        let spec = LossSpec::default();
        let value = loss(&spec, &m, &[1.0, 0.0, 0.0]).unwrap();
        assert!((value - 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn kl_and_jousselme_vanish_on_exact_match() {
        let f = frame_ab();
        let m = MassFunction::from_focal(f, [(0b01, 0.25), (0b10, 0.25), (0b11, 0.5)]).unwrap();
        let target = [0.25, 0.25, 0.5];
        let kl = loss(&LossSpec::new(LossKind::KlMass), &m, &target).unwrap();
        assert!(kl.abs() < 1e-12);
        let j = loss(&LossSpec::new(LossKind::Jousselme), &m, &target).unwrap();
        assert!(j.abs() < 1e-12);
    }

    #[test]
    fn gradient_vanishes_at_a_kl_minimum() {
        let net = EpistemicNetwork::new(frame_ab(), 3, &[4], false, 3);
        let x = [0.3, -0.8, 0.2];
        let m = net.forward(&x).unwrap();
        let target: Vec<f64> = m.masses()[1..].to_vec();
        let grads = net
            .backward(&x, &LossSpec::new(LossKind::KlMass), &target)
            .unwrap();
        for g in grads.flat() {
            assert!(g.abs() < 1e-8, "gradient {g} at a minimum");
        }
    }

    #[test]
    fn training_with_zero_learning_rate_changes_nothing() {
        let f = frame_ab();
        let mut net = EpistemicNetwork::new(f, 2, &[4], false, 9);
        let before = net.params_flat();
        let features = array![[0.1, 0.9], [0.8, 0.2], [0.4, 0.6], [0.7, 0.3]];
        let targets = array![
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0]
        ];
        let labels = [0, 1, 0, 1];
        let cfg = TrainConfig {
            epochs: 3,
            learning_rate: 0.0,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let history = train(
            &mut net,
            features.view(),
            targets.view(),
            &labels,
            &LossSpec::default(),
            &cfg,
        )
        .unwrap();
        assert_eq!(net.params_flat(), before);
        assert!((history[0].loss - history[2].loss).abs() < 1e-12);
    }

    #[test]
    fn identical_seeds_give_identical_runs() {
        let features = array![[0.1, 0.9], [0.8, 0.2], [0.4, 0.6], [0.7, 0.3]];
        let targets = array![
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0]
        ];
        let labels = [0usize, 1, 0, 1];
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 2,
            seed: 1234,
            ..TrainConfig::default()
        };
        let mut runs = Vec::new();
        for _ in 0..2 {
            let mut net = EpistemicNetwork::new(frame_ab(), 2, &[6], false, 77);
            let history = train(
                &mut net,
                features.view(),
                targets.view(),
                &labels,
                &LossSpec::default(),
                &cfg,
            )
            .unwrap();
            runs.push((net.params_flat(), history));
        }
        assert_eq!(runs[0].0, runs[1].0);
        assert_eq!(runs[0].1, runs[1].1);
    }

    #[test]
    fn xor_style_problem_is_learnable() {
        // 2-class XOR over a grid; separable by a hidden layer of 16.
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                let x = i as f64 / 9.0;
                let y = j as f64 / 9.0;
                rows.push([x, y]);
                labels.push(usize::from((x > 0.5) ^ (y > 0.5)));
            }
        }
        let features =
            Array2::from_shape_vec((rows.len(), 2), rows.iter().flatten().copied().collect())
                .unwrap();
        let mut targets = Array2::zeros((labels.len(), 3));
        for (r, &y) in labels.iter().enumerate() {
            targets[(r, if y == 0 { 0 } else { 1 })] = 1.0;
        }
        let mut net = EpistemicNetwork::new(frame_ab(), 2, &[16], false, 5);
        let cfg = TrainConfig {
            epochs: 500,
            batch_size: 16,
            learning_rate: 5e-3,
            seed: 5,
            ..TrainConfig::default()
        };
        let history = train(
            &mut net,
            features.view(),
            targets.view(),
            &labels,
            &LossSpec::default(),
            &cfg,
        )
        .unwrap();
        let final_acc = history.last().unwrap().accuracy;
        assert!(final_acc >= 0.95, "XOR training accuracy {final_acc}");
    }

    #[test]
    fn non_finite_loss_is_reported_with_batch_index() {
        let mut net = EpistemicNetwork::zeroed(frame_ab(), 2, &[], false);
        // Two equal, enormous logit rows make the stable softmax produce
        // inf - inf = NaN.
        let params = vec![1e308; net.num_params()];
        net.set_params_flat(&params).unwrap();
        let features = array![[1.0, 1.0], [1.0, -1.0]];
        let targets = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let labels = [0usize, 1];
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let err = train(
            &mut net,
            features.view(),
            targets.view(),
            &labels,
            &LossSpec::default(),
            &cfg,
        );
        assert!(matches!(
            err,
            Err(NetError::NonFiniteLoss { epoch: 0, batch: 0 })
        ));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let net = EpistemicNetwork::new(frame_ab(), 4, &[6, 3], true, 21);
        net.save(&path).unwrap();
        let loaded = EpistemicNetwork::load(&path).unwrap();
        assert_eq!(net.params_flat(), loaded.params_flat());
        assert_eq!(loaded.include_empty(), true);
        let x = [0.1, -0.4, 0.9, 0.3];
        let a = net.forward(&x).unwrap();
        let b = loaded.forward(&x).unwrap();
        assert_eq!(a.masses(), b.masses());
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        fs::write(&path, b"junkjunkjunk").unwrap();
        assert!(matches!(
            EpistemicNetwork::load(&path),
            Err(NetError::BadCheckpoint(_))
        ));
    }

    #[test]
    fn padded_singleton_head_reproduces_plain_softmax_gradients() {
        // One-layer network, empty set excluded, non-singleton logits frozen
        // at -inf: the K-slot head restricted to singleton slots must equal
        // a plain N-slot softmax classifier, in outputs and in gradients.
        let f = frame_ab();
        let mut net = EpistemicNetwork::zeroed(f, 3, &[], false);
        let x = [0.4, -0.7, 1.3];
        // Slots are masks 1,2,3 = {a},{b},{a,b}. Freeze the {a,b} slot.
        let w_a = [0.3, -0.2, 0.5];
        let w_b = [-0.1, 0.8, 0.2];
        let mut params = Vec::new();
        params.extend_from_slice(&w_a);
        params.extend_from_slice(&w_b);
        params.extend_from_slice(&[0.0, 0.0, 0.0]); // {a,b} weights
        params.extend_from_slice(&[0.0, 0.0, f64::NEG_INFINITY]); // biases
        net.set_params_flat(&params).unwrap();

        let m = net.forward(&x).unwrap();
        assert_eq!(m.mass(0b11), 0.0);

        // Plain 2-class softmax on the same weights.
        let za: f64 = w_a.iter().zip(&x).map(|(w, v)| w * v).sum();
        let zb: f64 = w_b.iter().zip(&x).map(|(w, v)| w * v).sum();
        let max = za.max(zb);
        let (ea, eb) = ((za - max).exp(), (zb - max).exp());
        let pa = ea / (ea + eb);
        assert!((m.mass(0b01) - pa).abs() < 1e-12);

        // Gradient of cross-entropy w.r.t. the singleton weights matches the
        // classic softmax-minus-one-hot expression; the frozen slot gets
        // zero gradient.
        let grads = net
            .backward(&x, &LossSpec::default(), &[1.0, 0.0, 0.0])
            .unwrap();
        let gw = &grads.weights[0];
        for (col, &xv) in x.iter().enumerate() {
            assert!((gw[(0, col)] - (pa - 1.0) * xv).abs() < 1e-10);
            assert!((gw[(1, col)] - (1.0 - pa) * xv).abs() < 1e-10);
            assert!(gw[(2, col)].abs() < 1e-12);
        }
    }

    #[test]
    fn baseline_classifier_learns_a_linear_problem() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let x = i as f64 / 39.0;
            rows.push([x, 1.0 - x]);
            labels.push(usize::from(x > 0.5));
        }
        let features =
            Array2::from_shape_vec((40, 2), rows.iter().flatten().copied().collect()).unwrap();
        let mut clf = SoftmaxClassifier::new(2, 2, &[8], 3);
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 8,
            seed: 3,
            ..TrainConfig::default()
        };
        clf.train(features.view(), &labels, &cfg).unwrap();
        let acc = clf.evaluate_accuracy(features.view(), &labels).unwrap();
        assert!(acc >= 0.95, "baseline accuracy {acc}");
    }
}
