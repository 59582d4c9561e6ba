//! Random-set classification toolkit.
//!
//! Epistemic classification with belief functions: an exact
//! Dempster-Shafer calculus on finite frames ([`mass`]), generalized
//! entropy and divergence functionals with an executable property suite
//! ([`measures`]), credal-set evaluation of set-valued predictions
//! ([`credal`]), a from-scratch feedforward classifier whose output layer
//! scores every subset of the class set ([`net`]), and dataset ingestion
//! with set-valued ground-truth encodings ([`data`]).
//!
//! Everything is indexed by the bitmask subset convention of
//! [`frame::Frame`]: bit `i` set means class `i` is a member, index 0 is
//! the empty set.

#![forbid(unsafe_code)]

pub mod credal;
pub mod data;
pub mod frame;
pub mod mass;
pub mod measures;
pub mod net;
mod setops;

pub use frame::{Frame, FrameError};
pub use mass::{
    BeliefVector, MassError, MassFunction, MultivaluedMapping, PlausibilityVector,
};
pub use measures::{
    check_entropy_properties, distance_jousselme, entropy_hohle, entropy_klir_ramer,
    entropy_nguyen, entropy_yager, kl_mass, kl_probability, measure_report, EntropyMeasure,
    MeasureError, MeasureReport, PropertyReport,
};
pub use credal::{
    credal_distance, credal_extent, credal_vertices, is_consistent, CredalError,
    CredalPrediction, DistanceMode,
};
pub use data::{encode_targets, load_csv, load_idx, split, DataError, Dataset, TargetEncoding};
pub use net::{
    loss, train, train_with_progress, EpistemicNetwork, LossKind, LossSpec, NetError,
    OptimizerKind, SoftmaxClassifier, TrainConfig,
};
