//! The confidence-set engine: standard-form sets, initialization, support
//! truncation against the beta-min threshold, the per-pull update, and UCB
//! evaluation.
//!
//! A set in standard form is
//!
//! ```text
//!   C = { beta : |beta - center|_D <= radius, Supp(beta) subset of H }
//!   D = (alpha I)_H + sum over pulls of (x_w)_H (x_w)_H^T
//! ```
//!
//! with supports that only shrink and radii that only grow along an arm's
//! update chain. The UCB of a context `x` over the set has the closed form
//! `x^T center + radius * |x_H|_{D^+}`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{
    elastic_net_fit_stats, elnet_lambda, elnet_radius, ridge_fit_stats, ridge_radius,
    EstimatorError,
};
use crate::linalg::{
    pinv_on_support, restrict_matrix, restrict_vector, IndexSet, LinalgError, Matrix, Vector,
};
use crate::policy::{Mode, PolicyConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfidenceError {
    #[error("observation is missing coordinates {missing:?} (1-based) required by the support")]
    IncompleteObservation { missing: Vec<usize> },
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// A context observed on an explicit set of queried coordinates; values
/// outside the queried set are unknown (stored as zero, never read).
#[derive(Clone, Debug, PartialEq)]
pub struct PartialObservation {
    queried: IndexSet,
    values: Vector,
}

impl PartialObservation {
    pub fn empty(d: usize) -> Self {
        Self {
            queried: IndexSet::empty(),
            values: Vector::zeros(d),
        }
    }

    /// A fully observed context.
    pub fn full(x: &Vector) -> Self {
        Self {
            queried: IndexSet::full(x.dim()),
            values: x.clone(),
        }
    }

    /// Restriction of a fully known context to a query set.
    pub fn of_restriction(x: &Vector, queried: &IndexSet) -> Self {
        Self {
            queried: queried.clone(),
            values: restrict_vector(x, queried),
        }
    }

    pub fn observe(&mut self, q: usize, value: f64) {
        self.queried.insert(q);
        self.values.set(q, value);
    }

    pub fn queried(&self) -> &IndexSet {
        &self.queried
    }

    pub fn dim(&self) -> usize {
        self.values.dim()
    }

    pub fn get(&self, q: usize) -> Option<f64> {
        if self.queried.contains(q) {
            Some(self.values.get(q))
        } else {
            None
        }
    }

    pub fn covers(&self, support: &IndexSet) -> bool {
        support.is_subset_of(&self.queried)
    }

    /// Observed values zeroed outside `support`; the caller must have
    /// checked coverage.
    pub fn values_on(&self, support: &IndexSet) -> Vector {
        restrict_vector(&self.values, support)
    }

    fn missing_from(&self, support: &IndexSet) -> Vec<usize> {
        support
            .difference(&self.queried)
            .iter()
            .map(|q| q + 1)
            .collect()
    }
}

/// Pull history of one arm, kept as exact sufficient statistics.
///
/// Contexts enter restricted to the arm's support at pull time. Because
/// supports only shrink, restricting the accumulated Gram matrix and moment
/// vector to any later support equals accumulating the re-restricted rows,
/// so no raw rows need to be retained.
#[derive(Clone, Debug, PartialEq)]
pub struct ArmHistory {
    gram: Matrix,
    moment: Vector,
    pulls: usize,
}

impl ArmHistory {
    pub fn new(d: usize) -> Self {
        Self {
            gram: Matrix::zeros(d),
            moment: Vector::zeros(d),
            pulls: 0,
        }
    }

    /// Records one pull: `x` must already be restricted to the arm's
    /// support at pull time.
    pub fn push(&mut self, x: &Vector, reward: f64) {
        self.gram.add_outer(x);
        for q in x.support().iter() {
            self.moment.set(q, self.moment.get(q) + reward * x.get(q));
        }
        self.pulls += 1;
    }

    pub fn pulls(&self) -> usize {
        self.pulls
    }

    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    pub fn moment(&self) -> &Vector {
        &self.moment
    }
}

/// Serializable snapshot of a confidence set for run-record files. The
/// design matrix is omitted: it is reconstructible from the recorded pulls.
/// Indices are 1-based, matching the other output files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRecord {
    /// Nonzero center coordinates as (1-based index, value) pairs.
    pub center: Vec<(usize, f64)>,
    pub radius: f64,
    /// 1-based support indices.
    pub support: Vec<usize>,
    pub pulls: usize,
}

/// A standard-form confidence set for one arm.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceSet {
    center: Vector,
    radius: f64,
    support: IndexSet,
    design: Matrix,
    design_pinv: Matrix,
    pulls: usize,
}

impl ConfidenceSet {
    /// The time-zero set: center 0, full support, design `alpha I`, radius
    /// `max(1, sqrt(alpha) b)`. Any parameter with `|beta|_1 <= b` lies in it.
    pub fn initial(d: usize, alpha: f64, b: f64) -> Self {
        assert!(d >= 1 && alpha > 0.0 && b > 0.0);
        let support = IndexSet::full(d);
        let design = Matrix::scaled_identity(d, alpha);
        let design_pinv = Matrix::scaled_identity(d, 1.0 / alpha);
        Self {
            center: Vector::zeros(d),
            radius: (alpha.sqrt() * b).max(1.0),
            support,
            design,
            design_pinv,
            pulls: 0,
        }
    }

    /// Builds a set from explicit parts, asserting the standard-form
    /// invariants. Intended for oracle tests and diagnostics; the decision
    /// loop only ever constructs sets through [`ConfidenceSet::initial`]
    /// and [`alg_confidence`].
    pub fn assemble(
        center: Vector,
        radius: f64,
        support: IndexSet,
        design: Matrix,
        design_pinv: Matrix,
        pulls: usize,
    ) -> Self {
        assert!(center.support().is_subset_of(&support));
        assert!(radius >= 0.0);
        assert!(design.is_restricted_to(&support));
        assert!(design_pinv.is_restricted_to(&support));
        Self {
            center,
            radius,
            support,
            design,
            design_pinv,
            pulls,
        }
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn support(&self) -> &IndexSet {
        &self.support
    }

    pub fn design(&self) -> &Matrix {
        &self.design
    }

    pub fn design_pinv(&self) -> &Matrix {
        &self.design_pinv
    }

    pub fn pulls(&self) -> usize {
        self.pulls
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    /// Exact maximum of `|beta_q|` over the set: `0` off the support, else
    /// `|center_q| + radius * sqrt((D^+)_qq)`.
    pub fn max_abs_coord(&self, q: usize) -> f64 {
        if !self.support.contains(q) {
            return 0.0;
        }
        self.center.get(q).abs() + self.radius * self.design_pinv.get(q, q).max(0.0).sqrt()
    }

    /// Support after removing coordinates the beta-min assumption rules out.
    ///
    /// Ridge mode removes `q` when the whole set stays strictly below
    /// `beta_min` in coordinate `q`; elastic mode additionally requires the
    /// current estimate at `q` to be exactly zero (after clamping).
    pub fn truncate_support(&self, beta_min: f64, mode: Mode) -> IndexSet {
        assert!(beta_min > 0.0);
        IndexSet::from_indices(self.support.iter().filter(|&q| {
            let removable = self.max_abs_coord(q) < beta_min;
            let removable = match mode {
                Mode::Ridge => removable,
                Mode::Elastic => removable && self.center.get(q) == 0.0,
            };
            !removable
        }))
    }

    /// Largest value of `x^T beta` over the set, evaluated on an observation
    /// that must cover the support.
    pub fn ucb_value(&self, obs: &PartialObservation) -> Result<f64, ConfidenceError> {
        if !obs.covers(&self.support) {
            return Err(ConfidenceError::IncompleteObservation {
                missing: obs.missing_from(&self.support),
            });
        }
        Ok(self.ucb_value_full(&obs.values_on(&self.support)))
    }

    /// [`ConfidenceSet::ucb_value`] for a fully known context.
    pub fn ucb_value_full(&self, x: &Vector) -> f64 {
        let xh = restrict_vector(x, &self.support);
        xh.dot(&self.center) + self.radius * self.design_pinv.quad_form(&xh).max(0.0).sqrt()
    }

    pub fn record(&self) -> ConfidenceRecord {
        ConfidenceRecord {
            center: self
                .support
                .iter()
                .filter(|&q| self.center.get(q) != 0.0)
                .map(|q| (q + 1, self.center.get(q)))
                .collect(),
            radius: self.radius,
            support: self.support.one_based(),
            pulls: self.pulls,
        }
    }

    /// Membership test used by coverage diagnostics: support containment
    /// plus the design-norm ball.
    pub fn contains(&self, beta: &Vector) -> bool {
        if !beta.support().is_subset_of(&self.support) {
            return false;
        }
        let diff = beta.sub(&self.center);
        self.design.quad_form(&diff).max(0.0).sqrt() <= self.radius + 1e-12
    }
}

/// One confidence-set update after a pull.
///
/// Truncates the support, refits the center by ridge or elastic net on the
/// history re-restricted to the new support, rebuilds the design and its
/// pseudo-inverse from scratch, and advances the radius schedule with the
/// monotone clamp. Everything stored is passed through the small-value
/// clamp, so re-running the update on identical inputs is bit-for-bit
/// deterministic.
pub fn alg_confidence(
    prev: &ConfidenceSet,
    history: &ArmHistory,
    cfg: &PolicyConfig,
) -> Result<ConfidenceSet, ConfidenceError> {
    if history.pulls() == 0 {
        return Ok(prev.clone());
    }
    let n = history.pulls();
    let support = prev.truncate_support(cfg.beta_min, cfg.mode);
    let gram = restrict_matrix(history.gram(), &support);
    let moment = restrict_vector(history.moment(), &support);

    let mut center = match cfg.mode {
        Mode::Ridge => ridge_fit_stats(&gram, &moment, &support, cfg.alpha),
        Mode::Elastic => {
            let lambda = elnet_lambda(
                n,
                cfg.d,
                cfg.k,
                cfg.delta,
                &cfg.bounds,
                cfg.rescale_lambda_by_d,
            )?;
            elastic_net_fit_stats(
                &gram,
                &moment,
                n,
                &support,
                cfg.alpha,
                lambda,
                Some(prev.center()),
            )?
        }
    };
    center.clamp_small_in_place(cfg.eps_clamp);

    let mut design = gram;
    for q in support.iter() {
        design.set(q, q, design.get(q, q) + cfg.alpha);
    }
    design.clamp_small_in_place(cfg.eps_clamp);
    let mut design_pinv = pinv_on_support(&design, &support)?;
    design_pinv.clamp_small_in_place(cfg.eps_clamp);

    let radius = match cfg.mode {
        Mode::Ridge => ridge_radius(
            support.len(),
            n,
            &cfg.bounds,
            cfg.alpha,
            cfg.delta,
            cfg.k,
            prev.radius(),
        ),
        Mode::Elastic => elnet_radius(
            n,
            cfg.d,
            cfg.k,
            cfg.delta,
            &cfg.bounds,
            cfg.alpha,
            prev.radius(),
            cfg.rescale_lambda_by_d,
            center.norm1(),
        )?,
    };

    Ok(ConfidenceSet {
        center,
        radius,
        support,
        design,
        design_pinv,
        pulls: n,
    })
}
