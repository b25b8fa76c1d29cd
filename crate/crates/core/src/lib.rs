//! Survey bandits: contextual UCB policies that choose both an arm and the
//! set of user features (survey questions) to query at every round.
//!
//! The model is linear per arm. Each arm keeps a confidence set in standard
//! form: an ellipsoid around a regression estimate under the design-matrix
//! norm, together with an explicit feature support. Supports only shrink
//! over time and radii only grow, so the union of supports — the survey the
//! policy asks next — shrinks as arms become confident that features are
//! irrelevant.
//!
//! Module map:
//! - [`linalg`]: dense vectors/matrices restricted to index supports.
//! - [`estimators`]: ridge and elastic-net fits plus the radius and
//!   regularization schedules that make the sets hold with budget `delta`.
//! - [`confidence`]: the confidence-set engine (initialization, support
//!   truncation, updates, UCB evaluation).
//! - [`policy`]: the per-round decision loop over `K` arms and the
//!   theoretical regret-bound evaluators.
//! - [`interactive`]: the within-round protocol that queries features
//!   arm-by-arm and eliminates arms whose optimistic bound cannot win.
//! - [`simulator`]: synthetic linear environments, the run loop, and
//!   multi-seed aggregation.

pub mod confidence;
pub mod estimators;
pub mod interactive;
pub mod linalg;
pub mod policy;
pub mod simulator;

pub use confidence::{
    ArmHistory, ConfidenceError, ConfidenceRecord, ConfidenceSet, PartialObservation,
};
pub use estimators::{EstimatorError, NoiseAndBounds, RegressionData};
pub use interactive::{ContextBox, InteractiveOutcome};
pub use linalg::{IndexSet, LinalgError, Matrix, Vector};
pub use policy::{Mode, PolicyConfig, PolicyError, PolicyState, TieBreak};
pub use simulator::{Environment, NoiseKind, SimError, Trajectory};
