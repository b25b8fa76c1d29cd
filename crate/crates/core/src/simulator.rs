//! Synthetic linear-reward environments and the run loop, with per-step
//! records, online coverage diagnostics, and multi-seed aggregation.
//!
//! A run is deterministic given its configuration and master seed. The seed
//! is split into one stream for contexts, one per-arm stream for reward
//! noise (indexed by pull count), and one for tie-breaking, so a zero-shot
//! run and an interactive run on the same seed consume identical randomness
//! as long as they pull the same arms.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use thiserror::Error;

use crate::confidence::{ConfidenceRecord, PartialObservation};
use crate::interactive::{interactive_round, ContextBox};
use crate::linalg::{IndexSet, Vector};
use crate::policy::{instantaneous_regret_bound, PolicyConfig, PolicyError, PolicyState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("time horizon must be at least 1")]
    ZeroHorizon,
    #[error("trajectories must share a common horizon to aggregate")]
    MismatchedLengths,
    #[error("aggregate needs at least one trajectory")]
    NoTrajectories,
    #[error("invariant violated at step {step}: {detail}")]
    InvariantViolation { step: usize, detail: String },
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Reward-noise distribution. The centered uniform keeps the linear model
/// exact (`E[Y] = x^T beta`); the shifted variant adds mean 0.5 and is kept
/// only for comparison runs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseKind {
    /// Uniform on `[-half_width, half_width]`.
    CenteredUniform { half_width: f64 },
    /// Uniform on `[0, 1]`; biases every reward upward by 0.5.
    Uniform01,
}

impl NoiseKind {
    fn sample(&self, rng: &mut StdRng) -> f64 {
        match self {
            NoiseKind::CenteredUniform { half_width } => {
                (rng.random::<f64>() * 2.0 - 1.0) * half_width
            }
            NoiseKind::Uniform01 => rng.random::<f64>(),
        }
    }

    /// The exact sub-Gaussian scale of the noise: a uniform on `[-w, w]`
    /// is `w/sqrt(3)`-sub-Gaussian (its variance proxy is tight).
    pub fn sub_gaussian_sigma(&self) -> f64 {
        match self {
            NoiseKind::CenteredUniform { half_width } => half_width / 3.0f64.sqrt(),
            NoiseKind::Uniform01 => 0.5 / 3.0f64.sqrt(),
        }
    }
}

/// A linear-reward environment over the unit box with an always-1 intercept
/// coordinate at index 0.
#[derive(Clone, Debug)]
pub struct Environment {
    true_betas: Vec<Vector>,
    d: usize,
    noise: NoiseKind,
    intercept_feature: bool,
}

impl Environment {
    /// The benchmark environment in dimension `d >= 3`, coordinate 0 being
    /// the intercept: expected rewards are `x_1` for arm 1, `x_2` for arm 2,
    /// `1 - x_1` for arm 3, and zero for arms 4 and 5 (`K <= 5`). Only the
    /// intercept and the first two drawn features predict any reward.
    pub fn benchmark(k: usize, d: usize) -> Self {
        assert!(d >= 3, "need at least intercept plus two features");
        assert!((1..=5).contains(&k), "between one and five arms");
        let mut betas = Vec::with_capacity(k);
        if k >= 1 {
            betas.push(Vector::unit(d, 1));
        }
        if k >= 2 {
            betas.push(Vector::unit(d, 2));
        }
        if k >= 3 {
            let mut b = Vector::unit(d, 0);
            b.set(1, -1.0);
            betas.push(b);
        }
        for _ in 3..k {
            betas.push(Vector::zeros(d));
        }
        Self {
            true_betas: betas,
            d,
            noise: NoiseKind::CenteredUniform { half_width: 0.5 },
            intercept_feature: true,
        }
    }

    pub fn with_noise(mut self, noise: NoiseKind) -> Self {
        self.noise = noise;
        self
    }

    pub fn noise(&self) -> NoiseKind {
        self.noise
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.true_betas.len()
    }

    pub fn true_beta(&self, arm: usize) -> &Vector {
        &self.true_betas[arm]
    }

    /// Tightest valid 1-norm bound on the arm parameters (at least 1).
    pub fn tight_b(&self) -> f64 {
        self.true_betas
            .iter()
            .map(|b| b.norm1())
            .fold(1.0f64, f64::max)
    }

    /// The coordinates with a nonzero coefficient in any arm.
    pub fn relevant_features(&self) -> IndexSet {
        let mut s = IndexSet::empty();
        for beta in &self.true_betas {
            s = s.union(&beta.support());
        }
        s
    }

    pub fn sample_context(&self, rng: &mut StdRng) -> Vector {
        let mut x = Vector::zeros(self.d);
        for q in 0..self.d {
            x.set(q, rng.random::<f64>());
        }
        if self.intercept_feature {
            x.set(0, 1.0);
        }
        x
    }

    pub fn expected_reward(&self, arm: usize, x: &Vector) -> f64 {
        self.true_betas[arm].dot(x)
    }

    pub fn best_expected_reward(&self, x: &Vector) -> f64 {
        (0..self.k())
            .map(|i| self.expected_reward(i, x))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// One row of a trajectory. `arm` is 0-based here and 1-based in CSV output.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub arm: usize,
    pub survey_len: usize,
    pub cum_survey_len: u64,
    pub reward: f64,
    pub regret: f64,
    pub cum_regret: f64,
    /// Highest exact UCB across arms at this step.
    pub max_ucb: f64,
    /// Closed-form per-step regret bound of the pulled arm before its update.
    pub regret_bound: f64,
}

/// Full record of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<StepRecord>,
    /// True when every arm's true parameter stayed in its confidence set at
    /// every step (checkable in simulation only).
    pub coverage_held: bool,
    /// Final zero-shot survey (union of final supports).
    pub final_survey: IndexSet,
    /// Snapshot of every arm's final confidence set.
    pub final_sets: Vec<ConfidenceRecord>,
}

impl Trajectory {
    pub fn final_cum_regret(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.cum_regret)
    }

    pub fn final_cum_survey_len(&self) -> u64 {
        self.steps.last().map_or(0, |s| s.cum_survey_len)
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Executes one run of the decision loop for `t_max` steps.
///
/// With `interactive` set, each round runs the within-round protocol against
/// an oracle reading the sampled context; otherwise the zero-shot survey is
/// queried in full. Rewards come from the environment plus per-arm noise
/// streams indexed by pull count.
pub fn run(
    cfg: &PolicyConfig,
    env: &Environment,
    t_max: usize,
    seed: u64,
    interactive: bool,
) -> Result<Trajectory, SimError> {
    if t_max == 0 {
        return Err(SimError::ZeroHorizon);
    }
    assert_eq!(cfg.d, env.d(), "policy and environment dimensions must agree");
    assert_eq!(cfg.k, env.k(), "policy and environment arm counts must agree");

    let mut stream = seed;
    let mut ctx_rng = StdRng::seed_from_u64(splitmix64(&mut stream));
    let tie_seed = splitmix64(&mut stream);
    let mut noise_rngs: Vec<StdRng> = (0..env.k())
        .map(|_| StdRng::seed_from_u64(splitmix64(&mut stream)))
        .collect();

    let mut state = PolicyState::with_tie_seed(cfg.clone(), tie_seed);
    let context_box = ContextBox::unit(env.d());

    // Initial sets contain the truth whenever b is a valid bound.
    let mut coverage_held = (0..env.k()).all(|i| state.arm_set(i).contains(env.true_beta(i)));

    let mut steps = Vec::with_capacity(t_max);
    let mut cum_regret = 0.0;
    let mut last_survey_len = usize::MAX;

    for t in 1..=t_max {
        let x = env.sample_context(&mut ctx_rng);
        let survey = state.select_survey();

        let (arm, obs, queried_len) = if interactive {
            let out = interactive_round(&state, |q| x.get(q), &context_box);
            if !out.queried.is_subset_of(&survey) {
                return Err(SimError::InvariantViolation {
                    step: t,
                    detail: "interactive round queried outside the zero-shot survey".into(),
                });
            }
            let len = out.queried.len();
            (out.arm, out.obs, len)
        } else {
            let obs = PartialObservation::of_restriction(&x, &survey);
            let arm = state.select_arm(&obs)?;
            (arm, obs, survey.len())
        };

        let max_ucb = (0..env.k())
            .map(|i| state.arm_set(i).ucb_value_full(&x))
            .fold(f64::NEG_INFINITY, f64::max);
        let regret_bound = instantaneous_regret_bound(state.arm_set(arm), &x);

        let regret = env.best_expected_reward(&x) - env.expected_reward(arm, &x);
        if regret < -1e-9 {
            return Err(SimError::InvariantViolation {
                step: t,
                detail: format!("negative instantaneous regret {regret}"),
            });
        }
        let reward = env.expected_reward(arm, &x) + env.noise().sample(&mut noise_rngs[arm]);

        state.record_survey(queried_len);
        state.update(arm, &obs, reward)?;

        if !interactive && queried_len > last_survey_len {
            return Err(SimError::InvariantViolation {
                step: t,
                detail: "zero-shot survey length grew".into(),
            });
        }
        if !interactive {
            last_survey_len = queried_len;
        }

        // Only the pulled arm's set changed; re-check it.
        coverage_held = coverage_held && state.arm_set(arm).contains(env.true_beta(arm));

        cum_regret += regret.max(0.0);
        steps.push(StepRecord {
            t,
            arm,
            survey_len: queried_len,
            cum_survey_len: state.cum_survey_len(),
            reward,
            regret: regret.max(0.0),
            cum_regret,
            max_ucb,
            regret_bound,
        });
    }

    Ok(Trajectory {
        steps,
        coverage_held,
        final_survey: state.select_survey(),
        final_sets: (0..env.k()).map(|i| state.arm_set(i).record()).collect(),
    })
}

/// Fraction of runs in which coverage held throughout.
pub fn coverage_fraction(trajectories: &[Trajectory]) -> f64 {
    if trajectories.is_empty() {
        return 0.0;
    }
    trajectories.iter().filter(|t| t.coverage_held).count() as f64 / trajectories.len() as f64
}

/// Per-step mean and standard deviation across equal-horizon trajectories.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateCurves {
    pub t: Vec<usize>,
    pub mean_cum_regret: Vec<f64>,
    pub sd_cum_regret: Vec<f64>,
    pub mean_cum_survey_len: Vec<f64>,
    pub sd_cum_survey_len: Vec<f64>,
}

/// Averages cumulative regret and cumulative survey length pointwise.
/// Standard deviations are population deviations (zero for a single run).
pub fn aggregate(trajectories: &[Trajectory]) -> Result<AggregateCurves, SimError> {
    let first = trajectories.first().ok_or(SimError::NoTrajectories)?;
    let horizon = first.steps.len();
    if trajectories.iter().any(|t| t.steps.len() != horizon) {
        return Err(SimError::MismatchedLengths);
    }
    let n = trajectories.len() as f64;
    let mut curves = AggregateCurves {
        t: (1..=horizon).collect(),
        mean_cum_regret: vec![0.0; horizon],
        sd_cum_regret: vec![0.0; horizon],
        mean_cum_survey_len: vec![0.0; horizon],
        sd_cum_survey_len: vec![0.0; horizon],
    };
    for step in 0..horizon {
        let regrets: Vec<f64> = trajectories.iter().map(|t| t.steps[step].cum_regret).collect();
        let surveys: Vec<f64> = trajectories
            .iter()
            .map(|t| t.steps[step].cum_survey_len as f64)
            .collect();
        let mean_r = regrets.iter().sum::<f64>() / n;
        let mean_s = surveys.iter().sum::<f64>() / n;
        curves.mean_cum_regret[step] = mean_r;
        curves.mean_cum_survey_len[step] = mean_s;
        curves.sd_cum_regret[step] =
            (regrets.iter().map(|r| (r - mean_r).powi(2)).sum::<f64>() / n).sqrt();
        curves.sd_cum_survey_len[step] =
            (surveys.iter().map(|s| (s - mean_s).powi(2)).sum::<f64>() / n).sqrt();
    }
    Ok(curves)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::NoiseAndBounds;
    use crate::policy::{Mode, TieBreak};

    pub(crate) fn desk_config(mode: Mode, env: &Environment) -> PolicyConfig {
        PolicyConfig {
            mode,
            alpha: 0.1,
            beta_min: 0.3,
            delta: 0.1,
            bounds: NoiseAndBounds::for_box(
                env.d(),
                1.0,
                env.noise().sub_gaussian_sigma(),
                env.tight_b(),
            ),
            k: env.k(),
            d: env.d(),
            eps_clamp: 1e-8,
            rescale_lambda_by_d: false,
            tie_break: TieBreak::LowestIndex,
        }
    }

    pub(crate) fn desk_env(k: usize, d: usize) -> Environment {
        Environment::benchmark(k, d).with_noise(NoiseKind::CenteredUniform { half_width: 5e-4 })
    }

    #[test]
    fn benchmark_environment_rewards() {
        let env = Environment::benchmark(5, 50);
        let mut x = Vector::zeros(50);
        x.set(0, 1.0);
        x.set(1, 0.9);
        x.set(2, 0.5);
        let rewards: Vec<f64> = (0..5).map(|i| env.expected_reward(i, &x)).collect();
        assert!((rewards[0] - 0.9).abs() < 1e-12);
        assert!((rewards[1] - 0.5).abs() < 1e-12);
        assert!((rewards[2] - 0.1).abs() < 1e-12);
        assert_eq!(rewards[3], 0.0);
        assert_eq!(rewards[4], 0.0);
        assert!((env.best_expected_reward(&x) - 0.9).abs() < 1e-12);
        // Regret of pulling arm 2 on this context is 0.4.
        assert!((env.best_expected_reward(&x) - env.expected_reward(1, &x) - 0.4).abs() < 1e-12);

        let env3 = Environment::benchmark(3, 50);
        assert_eq!(env3.k(), 3);
        assert_eq!(env3.relevant_features(), IndexSet::from_indices([0, 1, 2]));
        assert_eq!(env3.tight_b(), 2.0);
    }

    #[test]
    fn run_rejects_zero_horizon_and_records_one_step() {
        let env = desk_env(2, 3);
        let cfg = desk_config(Mode::Ridge, &env);
        assert!(matches!(
            run(&cfg, &env, 0, 1, false),
            Err(SimError::ZeroHorizon)
        ));
        let tr = run(&cfg, &env, 1, 1, false).unwrap();
        assert_eq!(tr.steps.len(), 1);
        assert_eq!(tr.steps[0].t, 1);
        assert_eq!(tr.steps[0].survey_len, 3);
    }

    #[test]
    fn identical_seeds_replay_identically() {
        let env = desk_env(3, 6);
        for mode in [Mode::Ridge, Mode::Elastic] {
            let cfg = desk_config(mode, &env);
            let a = run(&cfg, &env, 300, 42, false).unwrap();
            let b = run(&cfg, &env, 300, 42, false).unwrap();
            assert_eq!(a, b);
            let c = run(&cfg, &env, 300, 43, false).unwrap();
            assert_ne!(a, c);
        }
    }

    #[test]
    fn trajectory_invariants_hold() {
        let env = desk_env(3, 6);
        let cfg = desk_config(Mode::Ridge, &env);
        let tr = run(&cfg, &env, 500, 7, false).unwrap();
        let mut prev_cum = 0.0;
        let mut prev_len = usize::MAX;
        for s in &tr.steps {
            assert!(s.regret >= 0.0);
            assert!(s.cum_regret >= prev_cum - 1e-12);
            assert!(s.survey_len <= env.d());
            assert!(s.survey_len <= prev_len);
            prev_cum = s.cum_regret;
            prev_len = s.survey_len;
        }
    }

    #[test]
    fn realized_regret_below_instantaneous_bound_under_coverage() {
        let env = desk_env(3, 6);
        for mode in [Mode::Ridge, Mode::Elastic] {
            let cfg = desk_config(mode, &env);
            let tr = run(&cfg, &env, 400, 11, false).unwrap();
            assert!(tr.coverage_held, "coverage should hold on this instance");
            for s in &tr.steps {
                assert!(
                    s.regret <= s.regret_bound + 1e-9,
                    "step {}: regret {} above bound {}",
                    s.t,
                    s.regret,
                    s.regret_bound
                );
            }
        }
    }

    #[test]
    fn paired_interactive_run_matches_max_ucb_and_saves_queries() {
        let env = desk_env(5, 8);
        let cfg = desk_config(Mode::Ridge, &env);
        let zero_shot = run(&cfg, &env, 600, 3, false).unwrap();
        let inter = run(&cfg, &env, 600, 3, true).unwrap();
        for (a, b) in zero_shot.steps.iter().zip(inter.steps.iter()) {
            assert!((a.max_ucb - b.max_ucb).abs() <= 1e-10);
            assert_eq!(a.arm, b.arm);
            assert!(b.cum_survey_len <= a.cum_survey_len);
        }
    }

    #[test]
    fn inflated_radius_gives_full_coverage() {
        // A generously wide bound never loses the truth.
        let env = desk_env(2, 4);
        let mut cfg = desk_config(Mode::Ridge, &env);
        cfg.bounds.b = 1000.0;
        cfg.beta_min = 1e-9;
        let trs: Vec<Trajectory> = (0..5)
            .map(|seed| run(&cfg, &env, 100, seed, false).unwrap())
            .collect();
        assert_eq!(coverage_fraction(&trs), 1.0);
    }

    #[test]
    fn aggregate_single_and_permutation_invariance() {
        let env = desk_env(2, 4);
        let cfg = desk_config(Mode::Ridge, &env);
        let t1 = run(&cfg, &env, 50, 1, false).unwrap();
        let t2 = run(&cfg, &env, 50, 2, false).unwrap();
        let t3 = run(&cfg, &env, 50, 3, false).unwrap();

        let single = aggregate(std::slice::from_ref(&t1)).unwrap();
        assert_eq!(single.mean_cum_regret, t1.steps.iter().map(|s| s.cum_regret).collect::<Vec<_>>());
        assert!(single.sd_cum_regret.iter().all(|v| *v == 0.0));

        let fwd = aggregate(&[t1.clone(), t2.clone(), t3.clone()]).unwrap();
        let rev = aggregate(&[t3, t2, t1]).unwrap();
        for (a, b) in fwd.mean_cum_regret.iter().zip(rev.mean_cum_regret.iter()) {
            assert!((a - b).abs() < 1e-12);
        }

        let env2 = desk_env(2, 4);
        let cfg2 = desk_config(Mode::Ridge, &env2);
        let short = run(&cfg2, &env2, 10, 1, false).unwrap();
        let long = run(&cfg2, &env2, 20, 1, false).unwrap();
        assert!(matches!(
            aggregate(&[short, long]),
            Err(SimError::MismatchedLengths)
        ));
    }
}
