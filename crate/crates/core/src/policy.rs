//! The per-round decision loop over `K` arms: query the union of the arms'
//! supports, pick the arm with the highest UCB on the observed coordinates,
//! and update only the pulled arm's confidence set. Also hosts the
//! closed-form regret-bound evaluators used as runtime diagnostics.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confidence::{
    alg_confidence, ArmHistory, ConfidenceError, ConfidenceSet, PartialObservation,
};
use crate::estimators::NoiseAndBounds;
use crate::linalg::{restrict_vector, IndexSet, Vector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("arm index {0} out of range (K = {1})")]
    InvalidArm(usize, usize),
    #[error("reward must be finite, got {0}")]
    NonFiniteReward(f64),
    #[error(transparent)]
    Confidence(#[from] ConfidenceError),
}

/// Which estimator and radius schedule drive the confidence sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Ridge,
    Elastic,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Ridge => write!(f, "ridge"),
            Mode::Elastic => write!(f, "elastic"),
        }
    }
}

/// How exact UCB ties between arms are resolved.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    LowestIndex,
    SeededRandom,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyConfig {
    pub mode: Mode,
    /// Design regularization; also the l2 penalty weight of the estimators.
    pub alpha: f64,
    /// Known lower bound on the magnitude of any nonzero true coefficient.
    pub beta_min: f64,
    /// Total failure probability budget across all arms and updates.
    pub delta: f64,
    pub bounds: NoiseAndBounds,
    /// Number of arms.
    pub k: usize,
    /// Context dimension.
    pub d: usize,
    /// Small-value clamp applied to all stored parameters after updates.
    pub eps_clamp: f64,
    /// Divide the elastic-net l1 schedule by `d` and widen the radius
    /// accordingly.
    pub rescale_lambda_by_d: bool,
    pub tie_break: TieBreak,
}

impl PolicyConfig {
    /// Baseline configuration: `alpha = max(1, l_2)` so the regret analysis
    /// needs no bounded-reward clipping.
    pub fn new(mode: Mode, d: usize, k: usize, beta_min: f64, bounds: NoiseAndBounds) -> Self {
        Self {
            mode,
            alpha: bounds.l_2.max(1.0),
            beta_min,
            delta: 0.1,
            bounds,
            k,
            d,
            eps_clamp: 1e-8,
            rescale_lambda_by_d: false,
            tie_break: TieBreak::LowestIndex,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.d < 1 {
            return Err("d must be at least 1".into());
        }
        if self.k < 1 {
            return Err("K must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(format!("alpha must be strictly positive, got {}", self.alpha));
        }
        if !(self.beta_min > 0.0 && self.beta_min.is_finite()) {
            return Err(format!(
                "beta_min must be strictly positive, got {}",
                self.beta_min
            ));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if self.eps_clamp.is_nan() || self.eps_clamp < 0.0 {
            return Err(format!("eps_clamp must be non-negative, got {}", self.eps_clamp));
        }
        self.bounds.validate()
    }
}

struct Arm {
    set: ConfidenceSet,
    history: ArmHistory,
}

/// Mutable state of one policy run. Exactly one arm's confidence set changes
/// per update; distinct runs are independent and may execute in parallel.
pub struct PolicyState {
    cfg: PolicyConfig,
    arms: Vec<Arm>,
    t: usize,
    cum_survey_len: u64,
    tie_rng: StdRng,
}

impl PolicyState {
    pub fn new(cfg: PolicyConfig) -> Self {
        Self::with_tie_seed(cfg, 0)
    }

    /// `tie_seed` only matters under [`TieBreak::SeededRandom`].
    pub fn with_tie_seed(cfg: PolicyConfig, tie_seed: u64) -> Self {
        let arms = (0..cfg.k)
            .map(|_| Arm {
                set: ConfidenceSet::initial(cfg.d, cfg.alpha, cfg.bounds.b),
                history: ArmHistory::new(cfg.d),
            })
            .collect();
        Self {
            tie_rng: StdRng::seed_from_u64(tie_seed),
            arms,
            t: 0,
            cum_survey_len: 0,
            cfg,
        }
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn arm_set(&self, arm: usize) -> &ConfidenceSet {
        &self.arms[arm].set
    }

    pub fn arm_pulls(&self, arm: usize) -> usize {
        self.arms[arm].history.pulls()
    }

    pub fn k(&self) -> usize {
        self.arms.len()
    }

    pub fn cum_survey_len(&self) -> u64 {
        self.cum_survey_len
    }

    /// The next survey: the union of all arms' supports.
    pub fn select_survey(&self) -> IndexSet {
        let mut survey = IndexSet::empty();
        for arm in &self.arms {
            survey = survey.union(arm.set.support());
        }
        survey
    }

    /// Adds a round's query count to the running survey-length total.
    pub fn record_survey(&mut self, queried: usize) {
        self.cum_survey_len += queried as u64;
    }

    /// All arms' UCB values on an observation covering the survey.
    pub fn ucb_values(&self, obs: &PartialObservation) -> Result<Vec<f64>, PolicyError> {
        self.arms
            .iter()
            .map(|arm| arm.set.ucb_value(obs).map_err(PolicyError::from))
            .collect()
    }

    /// The arm with the highest UCB; ties resolved per configuration.
    pub fn select_arm(&mut self, obs: &PartialObservation) -> Result<usize, PolicyError> {
        let ucbs = self.ucb_values(obs)?;
        let best = ucbs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tied: Vec<usize> = (0..ucbs.len()).filter(|&i| ucbs[i] == best).collect();
        Ok(match self.cfg.tie_break {
            TieBreak::LowestIndex => tied[0],
            TieBreak::SeededRandom => tied[self.tie_rng.random_range(0..tied.len())],
        })
    }

    /// Records the pull: appends the context restricted to the pulled arm's
    /// current support to its history and replaces only that arm's set.
    pub fn update(
        &mut self,
        arm: usize,
        obs: &PartialObservation,
        reward: f64,
    ) -> Result<(), PolicyError> {
        if arm >= self.arms.len() {
            return Err(PolicyError::InvalidArm(arm, self.arms.len()));
        }
        if !reward.is_finite() {
            return Err(PolicyError::NonFiniteReward(reward));
        }
        let support = self.arms[arm].set.support().clone();
        if !obs.covers(&support) {
            return Err(PolicyError::Confidence(
                self.arms[arm].set.ucb_value(obs).unwrap_err(),
            ));
        }
        let x = obs.values_on(&support);
        self.arms[arm].history.push(&x, reward);
        self.arms[arm].set = alg_confidence(&self.arms[arm].set, &self.arms[arm].history, &self.cfg)?;
        self.t += 1;
        Ok(())
    }
}

/// Per-step regret bound when the pulled arm's set contains its true
/// parameter: `2 radius min(1, |x_H|_{D^+})`.
pub fn instantaneous_regret_bound(set: &ConfidenceSet, x: &Vector) -> f64 {
    let xh = restrict_vector(x, set.support());
    let norm = set.design_pinv().quad_form(&xh).max(0.0).sqrt();
    2.0 * set.radius() * norm.min(1.0)
}

/// Closed-form cumulative regret bound after `t` rounds under the worst-case
/// equal pull allocation `n_i = T/K`.
///
/// Ridge mode:
///
/// ```text
///   ( sigma sqrt(d ln((1 + T l_2^2/alpha) K (1+T)^2 / delta)) + sqrt(alpha) b )
///     * sqrt(8 d ln((d alpha + T l_2^2)/(d alpha))) * sqrt(T K)
/// ```
///
/// Elastic mode:
///
/// ```text
///   4 T^(3/4) K^(1/4) sqrt(d)
///     * sqrt( 3 sigma l_inf b ( sqrt(2 ln(4 d K T^2/delta)) + 2 alpha b/(3 sigma l_inf) )
///             * ln((d alpha + T l_2^2)/(d alpha)) )
/// ```
///
/// The design-growth logarithm uses the 2-norm context bound in both modes;
/// the elastic tail terms use the sup-norm bound.
pub fn theoretical_regret_bound(
    mode: Mode,
    t: usize,
    k: usize,
    d: usize,
    alpha: f64,
    delta: f64,
    bounds: &NoiseAndBounds,
) -> f64 {
    assert!(t >= 1 && k >= 1 && d >= 1 && alpha > 0.0 && delta > 0.0 && delta < 1.0);
    let t_f = t as f64;
    let k_f = k as f64;
    let d_f = d as f64;
    let growth = ((d_f * alpha + t_f * bounds.l_2 * bounds.l_2) / (d_f * alpha)).ln();
    match mode {
        Mode::Ridge => {
            let tail = (1.0 + t_f * bounds.l_2 * bounds.l_2 / alpha) * k_f * (1.0 + t_f).powi(2)
                / delta;
            let theta = bounds.sigma * (d_f * tail.ln()).sqrt() + alpha.sqrt() * bounds.b;
            theta * (8.0 * d_f * growth).sqrt() * (t_f * k_f).sqrt()
        }
        Mode::Elastic => {
            let tail = (2.0 * (4.0 * d_f * k_f * t_f * t_f / delta).ln()).sqrt();
            let inner = 3.0 * bounds.sigma * bounds.l_inf * bounds.b
                * (tail + 2.0 * alpha * bounds.b / (3.0 * bounds.sigma * bounds.l_inf));
            4.0 * t_f.powf(0.75) * k_f.powf(0.25) * d_f.sqrt() * (inner * growth).sqrt()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn desk_cfg(mode: Mode, d: usize, k: usize) -> PolicyConfig {
        PolicyConfig {
            mode,
            alpha: 1.0,
            beta_min: 0.3,
            delta: 0.1,
            bounds: NoiseAndBounds::for_box(d, 1.0, 0.05, 2.0),
            k,
            d,
            eps_clamp: 1e-8,
            rescale_lambda_by_d: false,
            tie_break: TieBreak::LowestIndex,
        }
    }

    #[test]
    fn select_survey_is_union_of_supports() {
        let state = PolicyState::new(desk_cfg(Mode::Ridge, 50, 3));
        assert_eq!(state.select_survey(), IndexSet::full(50));
    }

    #[test]
    fn fresh_state_picks_lowest_index_on_ties() {
        let mut state = PolicyState::new(desk_cfg(Mode::Ridge, 4, 3));
        let x = Vector::from_entries(vec![1.0, 0.5, 0.2, 0.9]);
        let obs = PartialObservation::full(&x);
        assert_eq!(state.select_arm(&obs).unwrap(), 0);
    }

    #[test]
    fn select_arm_takes_highest_ucb() {
        let mut state = PolicyState::new(desk_cfg(Mode::Ridge, 3, 2));
        let x = Vector::from_entries(vec![1.0, 0.0, 0.0]);
        let obs = PartialObservation::full(&x);
        // Equal pull counts, rewards 0 vs 1: the uncertainties match, so the
        // trained-up arm 1 must carry the higher UCB and win.
        for _ in 0..5 {
            state.update(0, &obs, 0.0).unwrap();
            state.update(1, &obs, 1.0).unwrap();
        }
        let ucbs = state.ucb_values(&obs).unwrap();
        assert!(ucbs[1] > ucbs[0]);
        assert_eq!(state.select_arm(&obs).unwrap(), 1);
    }

    #[test]
    fn update_touches_exactly_one_arm() {
        let mut state = PolicyState::new(desk_cfg(Mode::Ridge, 3, 3));
        let before: Vec<ConfidenceSet> = (0..3).map(|i| state.arm_set(i).clone()).collect();
        let x = Vector::from_entries(vec![0.5, 0.5, 0.5]);
        state.update(1, &PartialObservation::full(&x), 0.7).unwrap();
        assert_eq!(state.arm_set(0), &before[0]);
        assert_ne!(state.arm_set(1), &before[1]);
        assert_eq!(state.arm_set(2), &before[2]);
        assert_eq!(state.arm_pulls(1), 1);
        assert_eq!(state.t(), 1);
    }

    #[test]
    fn update_rejects_bad_inputs() {
        let mut state = PolicyState::new(desk_cfg(Mode::Ridge, 2, 2));
        let x = Vector::from_entries(vec![0.5, 0.5]);
        let obs = PartialObservation::full(&x);
        assert!(matches!(
            state.update(5, &obs, 0.5),
            Err(PolicyError::InvalidArm(5, 2))
        ));
        assert!(matches!(
            state.update(0, &obs, f64::NAN),
            Err(PolicyError::NonFiniteReward(_))
        ));
        let mut partial = PartialObservation::empty(2);
        partial.observe(0, 0.5);
        assert!(matches!(
            state.update(0, &partial, 0.5),
            Err(PolicyError::Confidence(_))
        ));
    }

    #[test]
    fn replayed_states_are_identical() {
        for mode in [Mode::Ridge, Mode::Elastic] {
            let mut a = PolicyState::new(desk_cfg(mode, 4, 2));
            let mut b = PolicyState::new(desk_cfg(mode, 4, 2));
            let mut rng = StdRng::seed_from_u64(3);
            for _ in 0..30 {
                let x = Vector::from_entries((0..4).map(|_| rng.random::<f64>()).collect());
                let obs = PartialObservation::full(&x);
                let arm_a = a.select_arm(&obs).unwrap();
                let arm_b = b.select_arm(&obs).unwrap();
                assert_eq!(arm_a, arm_b);
                let y = rng.random::<f64>();
                a.update(arm_a, &obs, y).unwrap();
                b.update(arm_b, &obs, y).unwrap();
            }
            for i in 0..2 {
                assert_eq!(a.arm_set(i), b.arm_set(i));
            }
        }
    }

    #[test]
    fn instantaneous_bound_fresh_set_example() {
        // Fresh set with alpha = 1, b = 1: radius 1, pinv = I, so the bound
        // at x = (1, 0) is 2 * min(1, 1) = 2.
        let set = ConfidenceSet::initial(2, 1.0, 1.0);
        let x = Vector::from_entries(vec![1.0, 0.0]);
        assert!((instantaneous_regret_bound(&set, &x) - 2.0).abs() < 1e-12);

        // A zero context contributes nothing.
        assert_eq!(instantaneous_regret_bound(&set, &Vector::zeros(2)), 0.0);
    }

    #[test]
    fn instantaneous_bound_shrinks_with_repeated_pulls() {
        let cfg = desk_cfg(Mode::Ridge, 2, 1);
        let mut state = PolicyState::new(cfg);
        let x = Vector::from_entries(vec![1.0, 0.3]);
        let obs = PartialObservation::full(&x);
        // Radii are clamped monotone, so compare the norm factor alone: the
        // bound divided by the radius must shrink as the design grows.
        let set = state.arm_set(0);
        let mut last = instantaneous_regret_bound(set, &x) / set.radius();
        for _ in 0..10 {
            state.update(0, &obs, 0.8).unwrap();
            let set = state.arm_set(0);
            let now = instantaneous_regret_bound(set, &x) / set.radius();
            assert!(now <= last + 1e-12);
            last = now;
        }
    }

    #[test]
    fn theoretical_bounds_increase_in_t_k_d_and_are_sublinear() {
        let bounds = NoiseAndBounds::for_box(20, 1.0, 0.05, 2.0);
        for mode in [Mode::Ridge, Mode::Elastic] {
            let base = theoretical_regret_bound(mode, 1000, 3, 20, 1.0, 0.1, &bounds);
            assert!(theoretical_regret_bound(mode, 2000, 3, 20, 1.0, 0.1, &bounds) > base);
            assert!(theoretical_regret_bound(mode, 1000, 6, 20, 1.0, 0.1, &bounds) > base);
            let bounds40 = NoiseAndBounds::for_box(40, 1.0, 0.05, 2.0);
            assert!(theoretical_regret_bound(mode, 1000, 3, 40, 1.0, 0.1, &bounds40) > base);

            // bound(T)/T decays along a doubling grid.
            let mut first_rate = None;
            let mut prev_rate = f64::INFINITY;
            for exp in 10..24 {
                let t = 1usize << exp;
                let rate = theoretical_regret_bound(mode, t, 3, 20, 1.0, 0.1, &bounds) / t as f64;
                assert!(rate < prev_rate);
                first_rate.get_or_insert(rate);
                prev_rate = rate;
            }
            assert!(
                prev_rate < first_rate.unwrap() / 4.0,
                "rate should keep collapsing toward zero, got {prev_rate}"
            );
        }
    }

    proptest! {
        // Coordinates outside the survey never influence the decision.
        #[test]
        fn selection_ignores_unqueried_coordinates(seed in 0u64..100) {
            let mut rng = StdRng::seed_from_u64(seed);
            let cfg = desk_cfg(Mode::Ridge, 3, 2);
            let mut state = PolicyState::new(cfg);
            // Shrink supports by hand: pull arm 0 a few times so truncation
            // may remove coordinates, then compare decisions on contexts
            // that differ outside the survey.
            for _ in 0..10 {
                let x = Vector::from_entries((0..3).map(|_| rng.random::<f64>()).collect());
                let survey = state.select_survey();
                let obs = PartialObservation::of_restriction(&x, &survey);
                let arm = state.select_arm(&obs).unwrap();
                state.update(arm, &obs, rng.random::<f64>()).unwrap();
            }
            let survey = state.select_survey();
            let x1 = Vector::from_entries((0..3).map(|_| rng.random::<f64>()).collect());
            let mut x2 = x1.clone();
            for q in 0..3 {
                if !survey.contains(q) {
                    x2.set(q, rng.random::<f64>() * 10.0);
                }
            }
            let obs1 = PartialObservation::of_restriction(&x1, &survey);
            let obs2 = PartialObservation::of_restriction(&x2, &survey);
            prop_assert_eq!(state.select_arm(&obs1).unwrap(), state.select_arm(&obs2).unwrap());
        }
    }

    #[test]
    fn validate_rejects_bad_fields() {
        let mut cfg = desk_cfg(Mode::Ridge, 2, 2);
        assert!(cfg.validate().is_ok());
        cfg.alpha = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = desk_cfg(Mode::Ridge, 2, 2);
        cfg.delta = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = desk_cfg(Mode::Ridge, 2, 2);
        cfg.bounds.sigma = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn default_alpha_respects_two_norm_floor() {
        let bounds = NoiseAndBounds::for_box(25, 1.0, 0.05, 2.0);
        let cfg = PolicyConfig::new(Mode::Ridge, 25, 3, 0.3, bounds);
        assert!((cfg.alpha - 5.0).abs() < 1e-12);
    }
}
