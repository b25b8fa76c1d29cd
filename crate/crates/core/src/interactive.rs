//! The interactive survey protocol: within one round, query features
//! arm-by-arm (most-pulled first) and drop arms whose optimistic bound over
//! all contexts consistent with the answers so far cannot beat the best UCB
//! already computed. The round ends having queried a subset of the zero-shot
//! survey while still returning an arm that attains the global maximum UCB.

use crate::confidence::{ConfidenceSet, PartialObservation};
use crate::linalg::{IndexSet, Matrix, Vector};
use crate::policy::PolicyState;

/// Per-coordinate box constraints on the context space, `[0, 1]^d` by
/// default.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ContextBox {
    /// The unit box `[0, 1]^d`.
    pub fn unit(d: usize) -> Self {
        Self {
            lower: vec![0.0; d],
            upper: vec![1.0; d],
        }
    }

    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len());
        assert!(
            lower.iter().zip(upper.iter()).all(|(l, u)| l <= u),
            "box lower bounds must not exceed upper bounds"
        );
        Self { lower, upper }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self, q: usize) -> f64 {
        self.lower[q]
    }

    pub fn upper(&self, q: usize) -> f64 {
        self.upper[q]
    }
}

/// Exhaustive vertex enumeration is exact but exponential in the number of
/// unqueried support coordinates; beyond this cap the maximization falls
/// back to greedy vertex ascent.
const EXHAUSTIVE_VERTEX_CAP: usize = 10;

/// Upper bound on the UCB of `set` over every context in the box that
/// agrees with the observed coordinates.
///
/// When the observation already covers the set's support this is the exact
/// UCB. Otherwise the linear and uncertainty terms decouple,
///
/// ```text
///   max_x x^T center  +  radius * max_y sqrt(y_H^T D^+ y_H),
/// ```
///
/// each over the consistent completions. The linear term maximizes
/// coordinate-wise over the box. The uncertainty form is convex, so its
/// maximum sits at a vertex of the box section: with at most
/// [`EXHAUSTIVE_VERTEX_CAP`] unqueried support coordinates the vertices are
/// enumerated exactly (the bound then provably dominates every completion's
/// UCB); with more, greedy coordinate flips starting from the coordinate-wise
/// largest consistent context climb to a locally maximal vertex, which
/// always dominates evaluating at that largest context alone.
pub fn optimistic_bound(set: &ConfidenceSet, obs: &PartialObservation, bounds: &ContextBox) -> f64 {
    if obs.covers(set.support()) {
        return set
            .ucb_value(obs)
            .expect("coverage was checked before evaluating the UCB");
    }

    let mut linear = 0.0;
    for q in set.support().iter() {
        let c_q = set.center().get(q);
        match obs.get(q) {
            Some(v) => linear += v * c_q,
            None => linear += (bounds.lower(q) * c_q).max(bounds.upper(q) * c_q),
        }
    }

    let support: Vec<usize> = set.support().iter().collect();
    let free: Vec<usize> = support
        .iter()
        .copied()
        .filter(|&q| obs.get(q).is_none())
        .collect();

    // Start from the coordinate-wise largest consistent context.
    let mut y = Vector::zeros(set.dim());
    for &q in &support {
        y.set(q, obs.get(q).unwrap_or_else(|| bounds.upper(q)));
    }

    let pinv = set.design_pinv();
    let form = if free.len() <= EXHAUSTIVE_VERTEX_CAP {
        max_form_exhaustive(pinv, &mut y, &free, bounds)
    } else {
        max_form_greedy(pinv, &mut y, &free, bounds)
    };

    linear + set.radius() * form.max(0.0).sqrt()
}

/// Exact maximum of `y^T M y` over all lower/upper assignments of the free
/// coordinates, walking assignments in Gray-code order with rank-one form
/// updates.
fn max_form_exhaustive(m: &Matrix, y: &mut Vector, free: &[usize], bounds: &ContextBox) -> f64 {
    let mut form = m.quad_form(y);
    let mut best = form;
    let combos = 1usize << free.len();
    let mut gray_prev = 0usize;
    for i in 1..combos {
        let gray = i ^ (i >> 1);
        let flipped_bit = (gray ^ gray_prev).trailing_zeros() as usize;
        gray_prev = gray;
        let q = free[flipped_bit];
        let target = if gray & (1 << flipped_bit) != 0 {
            bounds.lower(q)
        } else {
            bounds.upper(q)
        };
        form = flip_coordinate(m, y, q, target, form);
        best = best.max(form);
    }
    best
}

/// Greedy vertex ascent: repeatedly flip the free coordinate whose bound
/// swap increases the form most, until no flip improves it.
fn max_form_greedy(m: &Matrix, y: &mut Vector, free: &[usize], bounds: &ContextBox) -> f64 {
    let mut form = m.quad_form(y);
    loop {
        let mut best_gain = 0.0;
        let mut best_q = None;
        for &q in free {
            let current = y.get(q);
            let other = if current == bounds.upper(q) {
                bounds.lower(q)
            } else {
                bounds.upper(q)
            };
            let delta = other - current;
            if delta == 0.0 {
                continue;
            }
            // Flipping y_q by delta changes the form by 2 delta (M y)_q + delta^2 M_qq.
            let mut my_q = 0.0;
            for p in 0..y.dim() {
                let yp = y.get(p);
                if yp != 0.0 {
                    my_q += m.get(q, p) * yp;
                }
            }
            let gain = 2.0 * delta * my_q + delta * delta * m.get(q, q);
            if gain > best_gain + 1e-15 {
                best_gain = gain;
                best_q = Some((q, other));
            }
        }
        match best_q {
            Some((q, target)) => {
                form = flip_coordinate(m, y, q, target, form);
            }
            None => return form,
        }
    }
}

fn flip_coordinate(m: &Matrix, y: &mut Vector, q: usize, target: f64, form: f64) -> f64 {
    let delta = target - y.get(q);
    if delta == 0.0 {
        return form;
    }
    let mut my_q = 0.0;
    for p in 0..y.dim() {
        let yp = y.get(p);
        if yp != 0.0 {
            my_q += m.get(q, p) * yp;
        }
    }
    y.set(q, target);
    form + 2.0 * delta * my_q + delta * delta * m.get(q, q)
}

/// Result of one interactive round.
#[derive(Clone, Debug)]
pub struct InteractiveOutcome {
    /// Arm attaining the maximum exact UCB among all arms.
    pub arm: usize,
    /// Every feature index queried this round.
    pub queried: IndexSet,
    /// The answers gathered; covers the returned arm's support.
    pub obs: PartialObservation,
}

/// Runs one interactive round against an answer oracle that returns the
/// true coordinate value for any queried index.
///
/// Arms are processed most-pulled first (ties by lowest index). The head
/// arm's support is queried, its exact UCB folded into the running maximum
/// `M`, and every remaining arm whose optimistic bound is at most `M` is
/// eliminated. The returned arm is the exact-UCB argmax among queried arms,
/// lowest index on ties.
pub fn interactive_round<F>(
    state: &PolicyState,
    mut answer: F,
    bounds: &ContextBox,
) -> InteractiveOutcome
where
    F: FnMut(usize) -> f64,
{
    let k = state.k();
    let d = state.arm_set(0).dim();
    let mut queue: Vec<usize> = (0..k).collect();
    queue.sort_by_key(|&i| (std::cmp::Reverse(state.arm_pulls(i)), i));

    let mut obs = PartialObservation::empty(d);
    let mut best_ucb = f64::NEG_INFINITY;
    let mut queried_ucbs: Vec<(usize, f64)> = Vec::with_capacity(k);

    while !queue.is_empty() {
        let head = queue.remove(0);
        for q in state.arm_set(head).support().iter() {
            if obs.get(q).is_none() {
                obs.observe(q, answer(q));
            }
        }
        let ucb = state
            .arm_set(head)
            .ucb_value(&obs)
            .expect("the head arm's support was just queried");
        queried_ucbs.push((head, ucb));
        if ucb > best_ucb {
            best_ucb = ucb;
        }
        queue.retain(|&w| optimistic_bound(state.arm_set(w), &obs, bounds) > best_ucb);
    }

    let (arm, _) = queried_ucbs
        .iter()
        .copied()
        .fold(None::<(usize, f64)>, |acc, (i, u)| match acc {
            None => Some((i, u)),
            Some((bi, bu)) => {
                if u > bu || (u == bu && i < bi) {
                    Some((i, u))
                } else {
                    Some((bi, bu))
                }
            }
        })
        .expect("at least one arm is always queried");

    InteractiveOutcome {
        arm,
        queried: obs.queried().clone(),
        obs,
    }
}
