//! Ridge and elastic-net regression on restricted supports, plus the radius
//! and regularization schedules that make the confidence sets hold within
//! the per-update failure budget `delta / (K (1+n)^2)`.
//!
//! The two objectives are normalized differently on purpose:
//!
//! ```text
//!   ridge:       |y - X b|^2 + alpha |b|^2
//!   elastic net: (1/n) [ |y - X b|^2 + 2 alpha |b|^2 ] + lambda |b|_1
//! ```
//!
//! so elastic net with `lambda = 0` matches ridge when
//! `alpha_ridge = 2 * alpha_elnet`.

use thiserror::Error;

use crate::linalg::{restrict_matrix, restrict_vector, IndexSet, Matrix, Vector};

/// Coordinate-descent sweep limit for the elastic-net solver.
pub const ELNET_MAX_SWEEPS: usize = 100_000;
/// Convergence threshold on the largest coordinate change per sweep.
pub const ELNET_COORD_TOL: f64 = 1e-10;

/// Stationarity tolerance, relative to the l1 penalty scale.
fn kkt_tol(lambda: f64) -> f64 {
    1e-6 * lambda.max(1.0)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("row support is not contained in the regression support")]
    RowOutsideSupport,
    #[error(
        "elastic-net coordinate descent did not converge after {sweeps} sweeps \
         (KKT residual {kkt_residual:.3e})"
    )]
    Convergence { sweeps: usize, kkt_residual: f64 },
    #[error("schedule is undefined before the first pull (n = 0)")]
    UndefinedSchedule,
}

/// Known noise scale and norm bounds for contexts and arm parameters.
///
/// The radius formulas use different context norms: the ridge radius uses
/// the 2-norm bound, the elastic-net schedule the sup-norm bound. All three
/// are carried explicitly.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseAndBounds {
    /// Sub-Gaussian noise scale of the reward noise.
    pub sigma: f64,
    /// Per-coordinate context bound: `|x|_inf <= l_inf`.
    pub l_inf: f64,
    /// Euclidean context bound: `|x|_2 <= l_2`.
    pub l_2: f64,
    /// 1-norm context bound: `|x|_1 <= l_1`.
    pub l_1: f64,
    /// Parameter 1-norm bound: `|beta|_1 <= b`.
    pub b: f64,
}

impl NoiseAndBounds {
    /// Bounds for contexts in a box with per-coordinate magnitude `l_inf`:
    /// `l_2 = sqrt(d) l_inf`, `l_1 = d l_inf`.
    pub fn for_box(d: usize, l_inf: f64, sigma: f64, b: f64) -> Self {
        Self {
            sigma,
            l_inf,
            l_2: (d as f64).sqrt() * l_inf,
            l_1: d as f64 * l_inf,
            b,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("sigma", self.sigma),
            ("l_inf", self.l_inf),
            ("l_2", self.l_2),
            ("l_1", self.l_1),
            ("b", self.b),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be strictly positive, got {v}"));
            }
        }
        Ok(())
    }
}

/// Regression rows restricted to a common support within dimension `d`.
#[derive(Clone, Debug)]
pub struct RegressionData {
    d: usize,
    support: IndexSet,
    rows: Vec<(Vector, f64)>,
}

impl RegressionData {
    pub fn new(d: usize, support: IndexSet) -> Self {
        assert!(support.iter().all(|q| q < d), "support must fit the dimension");
        Self {
            d,
            support,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, x: Vector, y: f64) -> Result<(), EstimatorError> {
        if x.dim() != self.d {
            return Err(EstimatorError::RowOutsideSupport);
        }
        if !x.support().is_subset_of(&self.support) {
            return Err(EstimatorError::RowOutsideSupport);
        }
        self.rows.push((x, y));
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn support(&self) -> &IndexSet {
        &self.support
    }

    pub fn rows(&self) -> &[(Vector, f64)] {
        &self.rows
    }

    /// Gram matrix `sum x x^T` and moment vector `sum y x`, both restricted
    /// to the support. The fits depend on the data only through these.
    pub fn stats(&self) -> (Matrix, Vector) {
        let mut gram = Matrix::zeros(self.d);
        let mut moment = Vector::zeros(self.d);
        for (x, y) in &self.rows {
            gram.add_outer(x);
            for q in self.support.iter() {
                moment.set(q, moment.get(q) + y * x.get(q));
            }
        }
        (gram, moment)
    }
}

/// Solves the symmetric positive definite system `A y = b` on the listed
/// indices by Gaussian elimination with partial pivoting, plus one step of
/// iterative refinement to push the normal-equation residual to roundoff.
fn solve_on_support(a: &Matrix, b: &Vector, support: &IndexSet) -> Vector {
    let idx: Vec<usize> = support.iter().collect();
    let k = idx.len();
    let mut out = Vector::zeros(b.dim());
    if k == 0 {
        return out;
    }
    let block: Vec<f64> = idx
        .iter()
        .flat_map(|&r| idx.iter().map(move |&c| a.get(r, c)))
        .collect();
    let rhs: Vec<f64> = idx.iter().map(|&q| b.get(q)).collect();

    let mut solution = gauss_solve(&block, &rhs, k);
    // One refinement pass: solve A delta = b - A y.
    let mut residual = vec![0.0; k];
    for r in 0..k {
        let mut acc = 0.0;
        for c in 0..k {
            acc += block[r * k + c] * solution[c];
        }
        residual[r] = rhs[r] - acc;
    }
    let delta = gauss_solve(&block, &residual, k);
    for i in 0..k {
        solution[i] += delta[i];
    }

    for (i, &q) in idx.iter().enumerate() {
        out.set(q, solution[i]);
    }
    out
}

fn gauss_solve(block: &[f64], rhs: &[f64], k: usize) -> Vec<f64> {
    let mut m = block.to_vec();
    let mut b = rhs.to_vec();
    for col in 0..k {
        let mut pivot_row = col;
        for r in (col + 1)..k {
            if m[r * k + col].abs() > m[pivot_row * k + col].abs() {
                pivot_row = r;
            }
        }
        if pivot_row != col {
            for c in 0..k {
                m.swap(col * k + c, pivot_row * k + c);
            }
            b.swap(col, pivot_row);
        }
        let pivot = m[col * k + col];
        assert!(
            pivot.abs() > 0.0,
            "regularized normal equations cannot be singular"
        );
        for r in (col + 1)..k {
            let f = m[r * k + col] / pivot;
            if f == 0.0 {
                continue;
            }
            for c in col..k {
                m[r * k + c] -= f * m[col * k + c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; k];
    for row in (0..k).rev() {
        let mut acc = b[row];
        for c in (row + 1)..k {
            acc -= m[row * k + c] * x[c];
        }
        x[row] = acc / m[row * k + row];
    }
    x
}

/// Ridge estimate on the data's support: solves the restricted normal
/// equations `((alpha I)_H + sum x x^T) b = sum y x`.
pub fn ridge_fit(data: &RegressionData, alpha: f64) -> Vector {
    assert!(alpha > 0.0, "ridge regularization must be strictly positive");
    let (gram, moment) = data.stats();
    ridge_fit_stats(&gram, &moment, data.support(), alpha)
}

/// Sufficient-statistic form of [`ridge_fit`]: `gram` and `moment` must
/// already be restricted to `support`.
pub fn ridge_fit_stats(gram: &Matrix, moment: &Vector, support: &IndexSet, alpha: f64) -> Vector {
    assert!(alpha > 0.0, "ridge regularization must be strictly positive");
    let mut design = restrict_matrix(gram, support);
    for q in support.iter() {
        design.set(q, q, design.get(q, q) + alpha);
    }
    solve_on_support(&design, &restrict_vector(moment, support), support)
}

/// Elastic-net estimate on the data's support, by cyclic coordinate descent
/// with soft thresholding. Converges when the largest coordinate change in a
/// sweep falls below [`ELNET_COORD_TOL`]; errors out after
/// [`ELNET_MAX_SWEEPS`] sweeps carrying the final stationarity residual.
pub fn elastic_net_fit(
    data: &RegressionData,
    alpha: f64,
    lambda: f64,
) -> Result<Vector, EstimatorError> {
    assert!(alpha >= 0.0 && lambda >= 0.0);
    assert!(data.n() >= 1, "elastic net needs at least one row");
    let (gram, moment) = data.stats();
    elastic_net_fit_stats(&gram, &moment, data.n(), data.support(), alpha, lambda, None)
}

/// Sufficient-statistic form of [`elastic_net_fit`], with an optional warm
/// start (restricted to `support` by the caller).
pub fn elastic_net_fit_stats(
    gram: &Matrix,
    moment: &Vector,
    n: usize,
    support: &IndexSet,
    alpha: f64,
    lambda: f64,
    warm_start: Option<&Vector>,
) -> Result<Vector, EstimatorError> {
    assert!(n >= 1);
    let d = gram.dim();
    let n_f = n as f64;
    let idx: Vec<usize> = support.iter().collect();

    let mut beta = match warm_start {
        Some(b) => restrict_vector(b, support),
        None => Vector::zeros(d),
    };
    // Running gram * beta, maintained incrementally per coordinate update.
    let mut gram_beta = {
        let mut gb = Vector::zeros(d);
        for &r in &idx {
            let mut acc = 0.0;
            for &c in &idx {
                acc += gram.get(r, c) * beta.get(c);
            }
            gb.set(r, acc);
        }
        gb
    };

    let mut sweeps = 0;
    loop {
        let mut max_change = 0.0f64;
        for &q in &idx {
            let g_qq = gram.get(q, q);
            let denom = (2.0 / n_f) * g_qq + (4.0 * alpha) / n_f;
            let old = beta.get(q);
            let new = if denom == 0.0 {
                0.0
            } else {
                let partial = (2.0 / n_f) * (moment.get(q) - (gram_beta.get(q) - g_qq * old));
                soft_threshold(partial, lambda) / denom
            };
            if new != old {
                let delta = new - old;
                beta.set(q, new);
                for &r in &idx {
                    gram_beta.set(r, gram_beta.get(r) + delta * gram.get(r, q));
                }
                max_change = max_change.max(delta.abs());
            }
        }
        sweeps += 1;
        if max_change <= ELNET_COORD_TOL {
            break;
        }
        if sweeps >= ELNET_MAX_SWEEPS {
            let kkt = elnet_kkt_residual(gram, moment, n, support, alpha, lambda, &beta);
            return Err(EstimatorError::Convergence {
                sweeps,
                kkt_residual: kkt,
            });
        }
    }

    let kkt = elnet_kkt_residual(gram, moment, n, support, alpha, lambda, &beta);
    if kkt > kkt_tol(lambda) {
        return Err(EstimatorError::Convergence {
            sweeps,
            kkt_residual: kkt,
        });
    }
    Ok(beta)
}

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Stationarity residual of the elastic-net objective at `beta`: zero iff
/// the subgradient conditions hold exactly.
pub fn elnet_kkt_residual(
    gram: &Matrix,
    moment: &Vector,
    n: usize,
    support: &IndexSet,
    alpha: f64,
    lambda: f64,
    beta: &Vector,
) -> f64 {
    let n_f = n as f64;
    let mut worst = 0.0f64;
    for q in support.iter() {
        let mut gb = 0.0;
        for p in support.iter() {
            gb += gram.get(q, p) * beta.get(p);
        }
        // Smooth part: (1/n) [ -2 X^T (y - X b) + 4 alpha b ]_q.
        let grad = (2.0 / n_f) * (gb - moment.get(q)) + (4.0 * alpha / n_f) * beta.get(q);
        let b_q = beta.get(q);
        let violation = if b_q != 0.0 {
            (grad + lambda * b_q.signum()).abs()
        } else {
            (grad.abs() - lambda).max(0.0)
        };
        worst = worst.max(violation);
    }
    worst
}

/// Elastic-net objective value, for optimality-dominance checks.
pub fn elnet_objective(data: &RegressionData, beta: &Vector, alpha: f64, lambda: f64) -> f64 {
    let n = data.n() as f64;
    let mut sq = 0.0;
    for (x, y) in data.rows() {
        let r = y - x.dot(beta);
        sq += r * r;
    }
    (sq + 2.0 * alpha * beta.dot(beta)) / n + lambda * beta.norm1()
}

/// Per-update failure budget `delta / (K (1+n)^2)`. Summed over all arms and
/// pull counts this stays below `delta`, since `sum_{j>=1} 1/(1+j)^2 < 1`.
pub fn failure_budget(k: usize, delta: f64, n: usize) -> f64 {
    assert!(k >= 1 && delta > 0.0 && delta < 1.0);
    let m = 1.0 + n as f64;
    delta / (k as f64 * m * m)
}

/// Ridge confidence radius for a support of size `h` after `n` pulls:
///
/// ```text
///   sigma * sqrt( h * ln( (1 + n l_2^2 / alpha) * K (1+n)^2 / delta ) )
///     + sqrt(alpha) * b
/// ```
///
/// clamped to `max(theta_prev, 1)` so radii never decrease along an arm's
/// update chain (support shrinkage can lower the raw formula).
pub fn ridge_radius(
    h: usize,
    n: usize,
    cfg: &NoiseAndBounds,
    alpha: f64,
    delta: f64,
    k: usize,
    theta_prev: f64,
) -> f64 {
    assert!(alpha > 0.0 && delta > 0.0 && delta < 1.0 && k >= 1);
    let n_f = n as f64;
    let growth = 1.0 + n_f * cfg.l_2 * cfg.l_2 / alpha;
    let log_arg = growth / failure_budget(k, delta, n);
    let formula = cfg.sigma * (h as f64 * log_arg.ln()).sqrt() + alpha.sqrt() * cfg.b;
    formula.max(theta_prev).max(1.0)
}

/// The elastic-net l1 schedule after `n` pulls:
///
/// ```text
///   lambda = 4 sigma l_inf sqrt( (2/n) ln(4 d K n^2 / delta) )
/// ```
///
/// optionally divided by `d` (the rescaled variant used when coordinate
/// descent struggles with large l1 penalties in high dimension).
pub fn elnet_lambda(
    n: usize,
    d: usize,
    k: usize,
    delta: f64,
    cfg: &NoiseAndBounds,
    rescale_by_d: bool,
) -> Result<f64, EstimatorError> {
    if n == 0 {
        return Err(EstimatorError::UndefinedSchedule);
    }
    let n_f = n as f64;
    let log_arg = 4.0 * d as f64 * k as f64 * n_f * n_f / delta;
    let lambda = 4.0 * cfg.sigma * cfg.l_inf * ((2.0 / n_f) * log_arg.ln()).sqrt();
    Ok(if rescale_by_d {
        lambda / d as f64
    } else {
        lambda
    })
}

/// Elastic-net confidence radius after `n` pulls:
///
/// ```text
///   sqrt( 6 sigma l_inf b sqrt( 2 n ln(4 d K n^2 / delta) ) + 4 alpha b^2 )
/// ```
///
/// In the rescaled-lambda variant the leading `b` becomes
/// `(b + |beta_hat|_1) * d`. The result is clamped to `max(theta_prev, 1)`.
#[allow(clippy::too_many_arguments)]
pub fn elnet_radius(
    n: usize,
    d: usize,
    k: usize,
    delta: f64,
    cfg: &NoiseAndBounds,
    alpha: f64,
    theta_prev: f64,
    rescaled: bool,
    beta_hat_norm1: f64,
) -> Result<f64, EstimatorError> {
    if n == 0 {
        return Err(EstimatorError::UndefinedSchedule);
    }
    assert!(delta > 0.0 && delta < 1.0);
    let n_f = n as f64;
    let log_arg = 4.0 * d as f64 * k as f64 * n_f * n_f / delta;
    let b_eff = if rescaled {
        (cfg.b + beta_hat_norm1) * d as f64
    } else {
        cfg.b
    };
    let first = 6.0 * cfg.sigma * cfg.l_inf * b_eff * (2.0 * n_f * log_arg.ln()).sqrt();
    let formula = (first + 4.0 * alpha * cfg.b * cfg.b).sqrt();
    Ok(formula.max(theta_prev).max(1.0))
}
