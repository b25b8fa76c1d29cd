//! Built-in verification suites: estimator oracles, ellipsoid oracles,
//! interactive equivalence, Monte-Carlo coverage, and regret containment.
//! The acceptance tests drive these same functions; the `verify` subcommand
//! prints one line per check with its tolerance and observed value.

use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use survey_bandits::estimators::{
    elastic_net_fit, elnet_kkt_residual, elnet_objective, ridge_fit, RegressionData,
};
use survey_bandits::linalg::{pinv_on_support, restrict_matrix};
use survey_bandits::policy::theoretical_regret_bound;
use survey_bandits::simulator::{coverage_fraction, run};
use survey_bandits::{
    ConfidenceSet, Environment, IndexSet, Matrix, Mode, NoiseAndBounds, NoiseKind, PolicyConfig,
    TieBreak, Trajectory, Vector,
};

pub const SUITES: [&str; 5] = [
    "estimators",
    "confidence",
    "interactive",
    "coverage",
    "regret",
];

/// One named check: `pass` is `observed <= threshold` for `UpperLimit` and
/// `observed >= threshold` for `LowerLimit`.
#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub relation: Relation,
    pub threshold: f64,
    pub observed: f64,
    pub pass: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    UpperLimit,
    LowerLimit,
}

impl Check {
    pub fn upper(name: impl Into<String>, threshold: f64, observed: f64) -> Self {
        Self {
            name: name.into(),
            relation: Relation::UpperLimit,
            threshold,
            observed,
            pass: observed <= threshold,
        }
    }

    pub fn lower(name: impl Into<String>, threshold: f64, observed: f64) -> Self {
        Self {
            name: name.into(),
            relation: Relation::LowerLimit,
            threshold,
            observed,
            pass: observed >= threshold,
        }
    }

    pub fn render(&self) -> String {
        let rel = match self.relation {
            Relation::UpperLimit => "<=",
            Relation::LowerLimit => ">=",
        };
        format!(
            "{} {}: observed {:.6e} (required {} {:.6e})",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.observed,
            rel,
            self.threshold
        )
    }
}

#[derive(Debug)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub checks: Vec<Check>,
    pub elapsed: Duration,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn print(&self) {
        println!("suite {} ({:.2?})", self.suite, self.elapsed);
        for check in &self.checks {
            println!("  {}", check.render());
        }
    }
}

pub fn run_suite(name: &str) -> Option<SuiteReport> {
    let start = Instant::now();
    let (suite, checks) = match name {
        "estimators" => ("estimators", estimator_checks(100)),
        "confidence" => ("confidence", ellipsoid_checks(50)),
        "interactive" => ("interactive", interactive_checks(20, 10_000, &[1, 2, 3, 4, 5])),
        "coverage" => ("coverage", coverage_checks(200)),
        "regret" => ("regret", regret_checks(20, 20_000, &[1, 2, 3, 4, 5])),
        _ => return None,
    };
    Some(SuiteReport {
        suite,
        checks,
        elapsed: start.elapsed(),
    })
}

// ---------------------------------------------------------------------------
// Shared desk-scale setup
// ---------------------------------------------------------------------------

/// Narrow centered reward noise for desk-scale studies. The radius
/// schedules are conservative enough that wider noise pushes feature
/// elimination far past tractable horizons; the policy still declares the
/// exact sub-Gaussian scale of this noise, so coverage is honest.
pub const DESK_NOISE_HALF_WIDTH: f64 = 5e-4;
pub const DESK_ALPHA: f64 = 0.1;
pub const DESK_DELTA: f64 = 0.1;

pub fn desk_environment(k: usize, d: usize) -> Environment {
    Environment::benchmark(k, d).with_noise(NoiseKind::CenteredUniform {
        half_width: DESK_NOISE_HALF_WIDTH,
    })
}

pub fn desk_policy(mode: Mode, env: &Environment, beta_min: f64) -> PolicyConfig {
    PolicyConfig {
        mode,
        alpha: DESK_ALPHA,
        beta_min,
        delta: DESK_DELTA,
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

// ---------------------------------------------------------------------------
// Suite: estimators
// ---------------------------------------------------------------------------

/// Random regression instances (d <= 10, n <= 50): the ridge fit must solve
/// its normal equations to 1e-8 and the elastic-net fit must satisfy
/// stationarity to 1e-6 while dominating the objective at zero and at the
/// matching ridge point.
pub fn estimator_checks(instances: usize) -> Vec<Check> {
    let mut rng = StdRng::seed_from_u64(0x5eed_e571);
    let mut worst_residual = 0.0f64;
    let mut worst_kkt = 0.0f64;
    let mut worst_dominance_gap = 0.0f64;

    for _ in 0..instances {
        let d = rng.random_range(1..=10usize);
        let n = rng.random_range(1..=50usize);
        let support = IndexSet::from_indices((0..d).filter(|_| rng.random::<f64>() < 0.85));
        let support = if support.is_empty() {
            IndexSet::from_indices([rng.random_range(0..d)])
        } else {
            support
        };
        let mut data = RegressionData::new(d, support.clone());
        for _ in 0..n {
            let x = Vector::from_entries(
                (0..d)
                    .map(|q| {
                        if support.contains(q) {
                            rng.random_range(-1.0..1.0)
                        } else {
                            0.0
                        }
                    })
                    .collect(),
            );
            data.push(x, rng.random_range(0.0..1.0)).unwrap();
        }

        let alpha_ridge = rng.random_range(0.1..2.0);
        let beta = ridge_fit(&data, alpha_ridge);
        let (gram, moment) = data.stats();
        let mut design = restrict_matrix(&gram, &support);
        for q in support.iter() {
            design.set(q, q, design.get(q, q) + alpha_ridge);
        }
        let lhs = design.mul_vec(&beta);
        for q in support.iter() {
            worst_residual = worst_residual.max((lhs.get(q) - moment.get(q)).abs());
        }

        let alpha_elnet = rng.random_range(0.0..1.0);
        let lambda = rng.random_range(0.0..0.5);
        let fit = elastic_net_fit(&data, alpha_elnet, lambda).unwrap();
        let kkt = elnet_kkt_residual(&gram, &moment, n, &support, alpha_elnet, lambda, &fit);
        worst_kkt = worst_kkt.max(kkt);

        let at_fit = elnet_objective(&data, &fit, alpha_elnet, lambda);
        let at_zero = elnet_objective(&data, &Vector::zeros(d), alpha_elnet, lambda);
        worst_dominance_gap = worst_dominance_gap.max(at_fit - at_zero);
        if alpha_elnet > 0.0 {
            let ridge_point = ridge_fit(&data, 2.0 * alpha_elnet);
            let at_ridge = elnet_objective(&data, &ridge_point, alpha_elnet, lambda);
            worst_dominance_gap = worst_dominance_gap.max(at_fit - at_ridge);
        }
    }

    vec![
        Check::upper("ridge normal-equation residual", 1e-8, worst_residual),
        Check::upper("elastic-net KKT residual", 1e-6, worst_kkt),
        Check::upper(
            "elastic-net objective dominance gap",
            1e-10,
            worst_dominance_gap,
        ),
    ]
}

// ---------------------------------------------------------------------------
// Suite: confidence (ellipsoid oracles)
// ---------------------------------------------------------------------------

/// Dense boundary sample of an ellipsoid via the Cholesky factor of its
/// design block; the closed-form quantities must dominate every sample and
/// come within tolerance of the sampled maximum.
fn boundary_grid(set: &ConfidenceSet) -> Vec<Vector> {
    let idx: Vec<usize> = set.support().iter().collect();
    let k = idx.len();
    let mut chol = vec![0.0f64; k * k];
    for i in 0..k {
        for j in 0..=i {
            let mut acc = set.design().get(idx[i], idx[j]);
            for p in 0..j {
                acc -= chol[i * k + p] * chol[j * k + p];
            }
            if i == j {
                chol[i * k + i] = acc.max(1e-15).sqrt();
            } else {
                chol[i * k + j] = acc / chol[j * k + j];
            }
        }
    }
    let unit_sphere: Vec<Vec<f64>> = match k {
        0 => vec![],
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..4000)
            .map(|i| {
                let theta = 2.0 * std::f64::consts::PI * i as f64 / 4000.0;
                vec![theta.cos(), theta.sin()]
            })
            .collect(),
        3 => {
            let mut pts = Vec::with_capacity(200 * 400);
            for i in 0..=200 {
                let phi = std::f64::consts::PI * i as f64 / 200.0;
                for j in 0..400 {
                    let theta = 2.0 * std::f64::consts::PI * j as f64 / 400.0;
                    pts.push(vec![
                        phi.sin() * theta.cos(),
                        phi.sin() * theta.sin(),
                        phi.cos(),
                    ]);
                }
            }
            pts
        }
        _ => unreachable!("oracle instances keep |support| <= 3"),
    };

    let mut out = Vec::with_capacity(unit_sphere.len());
    for u in unit_sphere {
        // Solve chol^T w = u, then beta = center + radius * w on the support.
        let mut w = vec![0.0f64; k];
        for i in (0..k).rev() {
            let mut acc = u[i];
            for j in (i + 1)..k {
                acc -= chol[j * k + i] * w[j];
            }
            w[i] = acc / chol[i * k + i];
        }
        let mut beta = set.center().clone();
        for (i, &q) in idx.iter().enumerate() {
            beta.set(q, beta.get(q) + set.radius() * w[i]);
        }
        out.push(beta);
    }
    out
}

fn random_confidence_set(rng: &mut StdRng) -> ConfidenceSet {
    let d = rng.random_range(1..=3usize);
    let support = {
        let s = IndexSet::from_indices((0..d).filter(|_| rng.random::<f64>() < 0.7));
        if s.is_empty() {
            IndexSet::from_indices([rng.random_range(0..d)])
        } else {
            s
        }
    };
    let alpha = rng.random_range(0.5..2.0);
    let mut design = Matrix::zeros(d);
    for q in support.iter() {
        design.set(q, q, alpha);
    }
    for _ in 0..rng.random_range(0..4usize) {
        let row = Vector::from_entries(
            (0..d)
                .map(|q| {
                    if support.contains(q) {
                        rng.random_range(0.0..1.0)
                    } else {
                        0.0
                    }
                })
                .collect(),
        );
        design.add_outer(&row);
    }
    let center = Vector::from_entries(
        (0..d)
            .map(|q| {
                if support.contains(q) {
                    rng.random_range(-1.0..1.0)
                } else {
                    0.0
                }
            })
            .collect(),
    );
    ConfidenceSet::assemble(
        center,
        rng.random_range(1.0..3.0),
        support.clone(),
        design.clone(),
        pinv_on_support(&design, &support).unwrap(),
        rng.random_range(0..5usize),
    )
}

/// Random small ellipsoids: `max_abs_coord` and `ucb_value` must agree with
/// brute-force maximization over a dense boundary grid within 1e-2 and
/// never be beaten by any sampled member.
pub fn ellipsoid_checks(instances: usize) -> Vec<Check> {
    let mut rng = StdRng::seed_from_u64(0xe111_9501);
    let mut worst_gap = 0.0f64;
    let mut worst_violation = 0.0f64;

    for _ in 0..instances {
        let set = random_confidence_set(&mut rng);
        let d = set.dim();
        let x = Vector::from_entries((0..d).map(|_| rng.random_range(-1.0..1.0)).collect());
        let ucb = set.ucb_value_full(&x);
        let grid = boundary_grid(&set);

        let mut best_linear = f64::NEG_INFINITY;
        let mut best_abs: Vec<f64> = set.support().iter().map(|_| 0.0f64).collect();
        for beta in &grid {
            let v = x.dot(beta);
            worst_violation = worst_violation.max(v - ucb);
            best_linear = best_linear.max(v);
            for (slot, q) in set.support().iter().enumerate() {
                let a = beta.get(q).abs();
                worst_violation = worst_violation.max(a - set.max_abs_coord(q));
                if a > best_abs[slot] {
                    best_abs[slot] = a;
                }
            }
        }
        worst_gap = worst_gap.max(ucb - best_linear);
        for (slot, q) in set.support().iter().enumerate() {
            worst_gap = worst_gap.max(set.max_abs_coord(q) - best_abs[slot]);
        }
    }

    vec![
        Check::upper("closed form vs grid maximum gap", 1e-2, worst_gap),
        Check::upper("sampled member exceeding closed form", 1e-9, worst_violation),
    ]
}

// ---------------------------------------------------------------------------
// Suite: interactive
// ---------------------------------------------------------------------------

/// Paired zero-shot and interactive runs on identical streams: the
/// interactive arm's exact UCB must equal the global maximum at every step,
/// interactive surveys never query more, and the aggregate saving is at
/// least five percent.
pub fn interactive_checks(d: usize, horizon: usize, seeds: &[u64]) -> Vec<Check> {
    let env = desk_environment(5, d);
    let cfg = desk_policy(Mode::Ridge, &env, 0.3);
    let mut worst_ucb_diff = 0.0f64;
    let mut worst_excess = i64::MIN;
    let mut zero_shot_total = 0u64;
    let mut interactive_total = 0u64;

    for &seed in seeds {
        let zero_shot = run(&cfg, &env, horizon, seed, false).expect("zero-shot run");
        let interactive = run(&cfg, &env, horizon, seed, true).expect("interactive run");
        for (a, b) in zero_shot.steps.iter().zip(interactive.steps.iter()) {
            worst_ucb_diff = worst_ucb_diff.max((a.max_ucb - b.max_ucb).abs());
            worst_excess =
                worst_excess.max(b.cum_survey_len as i64 - a.cum_survey_len as i64);
        }
        zero_shot_total += zero_shot.final_cum_survey_len();
        interactive_total += interactive.final_cum_survey_len();
    }
    let savings = 1.0 - interactive_total as f64 / zero_shot_total as f64;

    vec![
        Check::upper("interactive max-UCB deviation", 1e-10, worst_ucb_diff),
        Check::upper(
            "interactive survey excess over zero-shot",
            0.0,
            worst_excess as f64,
        ),
        Check::lower("aggregate survey savings", 0.05, savings),
    ]
}

// ---------------------------------------------------------------------------
// Suite: coverage
// ---------------------------------------------------------------------------

/// Monte-Carlo coverage on a small instance (d = 5, K = 2, T = 500): the
/// fraction of replications whose sets held the truth at every step must
/// beat `1 - delta`.
pub fn coverage_checks(replications: u64) -> Vec<Check> {
    let env = desk_environment(2, 5);
    let mut checks = Vec::new();
    for mode in [Mode::Ridge, Mode::Elastic] {
        let cfg = desk_policy(mode, &env, 0.3);
        let trajectories: Vec<Trajectory> = (0..replications)
            .map(|seed| run(&cfg, &env, 500, seed, false).expect("coverage run"))
            .collect();
        let fraction = coverage_fraction(&trajectories);
        checks.push(Check::lower(
            format!("coverage fraction ({mode})"),
            1.0 - DESK_DELTA,
            fraction,
        ));
    }
    checks
}

// ---------------------------------------------------------------------------
// Suite: regret
// ---------------------------------------------------------------------------

/// Three-arm benchmark at desk scale: empirical cumulative regret must stay
/// under the closed-form bound at every prefix, and the average regret rate
/// at the horizon must be at most half of its value at t = 1000.
pub fn regret_checks(d: usize, horizon: usize, seeds: &[u64]) -> Vec<Check> {
    let env = desk_environment(3, d);
    let mut checks = Vec::new();
    for mode in [Mode::Ridge, Mode::Elastic] {
        let cfg = desk_policy(mode, &env, 0.3);
        let mut worst_ratio = 0.0f64;
        let mut worst_rate_ratio = 0.0f64;
        for &seed in seeds {
            let trajectory = run(&cfg, &env, horizon, seed, false).expect("regret run");
            for step in &trajectory.steps {
                let bound = theoretical_regret_bound(
                    mode, step.t, env.k(), d, cfg.alpha, cfg.delta, &cfg.bounds,
                );
                worst_ratio = worst_ratio.max(step.cum_regret / bound);
            }
            let early_rate = trajectory.steps[999].cum_regret / 1000.0;
            let final_rate = trajectory.final_cum_regret() / horizon as f64;
            worst_rate_ratio = worst_rate_ratio.max(final_rate / early_rate);
        }
        checks.push(Check::upper(
            format!("cumulative regret / bound, all prefixes ({mode})"),
            1.0,
            worst_ratio,
        ));
        checks.push(Check::upper(
            format!("final rate / rate at t=1000 ({mode})"),
            0.5,
            worst_rate_ratio,
        ));
    }
    checks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_suite_is_none() {
        assert!(run_suite("nope").is_none());
    }

    #[test]
    fn estimator_suite_passes_quickly() {
        let checks = estimator_checks(20);
        assert!(checks.iter().all(|c| c.pass), "{checks:#?}");
    }

    #[test]
    fn ellipsoid_suite_passes_on_a_few_instances() {
        let checks = ellipsoid_checks(5);
        assert!(checks.iter().all(|c| c.pass), "{checks:#?}");
    }

    #[test]
    fn check_rendering_mentions_relation() {
        let c = Check::upper("thing", 1e-2, 5e-3);
        assert!(c.pass);
        assert!(c.render().contains("<="));
        let c = Check::lower("other", 0.9, 0.5);
        assert!(!c.pass);
        assert!(c.render().starts_with("FAIL"));
    }
}
