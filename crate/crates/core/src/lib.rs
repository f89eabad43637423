//! Location privacy for continuous release of a user's position under
//! temporal correlations.
//!
//! A hidden Markov model tracks what an adversary can infer about the
//! user. At each timestamp the posterior is propagated to a prior, the
//! smallest set of cells holding `1 − δ` of the prior mass (the
//! δ-location set) is selected, and a release is drawn from a planar
//! mechanism calibrated to that set:
//!
//! * [`mechanism::PimContext`]: K-norm noise over the sensitivity hull of
//!   the set, sampled in isotropic position.
//! * [`mechanism::LaplaceContext`]: independent per-axis Laplace noise,
//!   the baseline.
//!
//! [`framework::Framework`] runs the loop; [`audit`] checks releases
//! empirically; [`harness`] holds the experiment driver behind the
//! `locpriv` binary.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod error;
pub mod framework;
pub mod geometry;
pub mod grid;
pub mod harness;
pub mod markov;
pub mod mechanism;

pub use error::{Error, Result};
pub use framework::{
    delta_location_set, surrogate, DeltaLocationSet, Framework, StepRecord, UserState,
};
pub use grid::{CellIndex, GridConfig, MapPoint};
pub use markov::{ProbVector, TransitionMatrix};
pub use mechanism::{MechanismKind, ReleaseContext};
