//! Small dense linear algebra on vectors and matrices restricted to index
//! supports.
//!
//! Everything is sized for survey models with at most a few hundred
//! features: matrices are dense row-major `Vec<f64>`, operations are plain
//! loops, and restriction to a support is an explicit copy. All values are
//! immutable after construction, so they can be shared across concurrently
//! running simulations without synchronization.
//!
//! Indices are 0-based internally; diagnostics and output files show them
//! 1-based.

use thiserror::Error;

/// Stored model parameters in `[-COORD_CLAMP_EPS, COORD_CLAMP_EPS]` are
/// snapped to zero after every update. Designs are pseudo-inverted at every
/// round, which is unstable around zero without this.
pub const COORD_CLAMP_EPS: f64 = 1e-8;

/// Absolute tolerance for symmetry and positive-semi-definiteness checks,
/// matched to the clamping scale.
pub const PSD_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("matrix is not symmetric: max asymmetry {0:.3e} exceeds tolerance")]
    NotSymmetric(f64),
    #[error("quadratic form is negative beyond tolerance: {0:.3e}")]
    NegativeQuadraticForm(f64),
    #[error("restricted block is numerically singular (pivot {pivot:.3e} at step {step})")]
    SingularBlock { pivot: f64, step: usize },
}

/// Snaps `x` to zero when `|x| <= eps`, otherwise returns `x` unchanged.
pub fn clamp_small(x: f64, eps: f64) -> f64 {
    debug_assert!(eps >= 0.0);
    if x.abs() <= eps {
        0.0
    } else {
        x
    }
}

// ---------------------------------------------------------------------------
// IndexSet
// ---------------------------------------------------------------------------

/// A sorted, duplicate-free set of feature indices, subset of `{0, .., d-1}`.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct IndexSet {
    indices: Vec<usize>,
}

impl IndexSet {
    pub fn empty() -> Self {
        Self { indices: Vec::new() }
    }

    /// The full support `{0, .., d-1}`.
    pub fn full(d: usize) -> Self {
        Self {
            indices: (0..d).collect(),
        }
    }

    /// Builds a set from arbitrary indices, sorting and deduplicating.
    pub fn from_indices<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut indices: Vec<usize> = iter.into_iter().collect();
        indices.sort_unstable();
        indices.dedup();
        Self { indices }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, q: usize) -> bool {
        self.indices.binary_search(&q).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }

    pub fn insert(&mut self, q: usize) {
        if let Err(pos) = self.indices.binary_search(&q) {
            self.indices.insert(pos, q);
        }
    }

    pub fn remove(&mut self, q: usize) {
        if let Ok(pos) = self.indices.binary_search(&q) {
            self.indices.remove(pos);
        }
    }

    pub fn union(&self, other: &Self) -> Self {
        Self::from_indices(self.iter().chain(other.iter()))
    }

    pub fn intersection(&self, other: &Self) -> Self {
        Self::from_indices(self.iter().filter(|q| other.contains(*q)))
    }

    pub fn difference(&self, other: &Self) -> Self {
        Self::from_indices(self.iter().filter(|q| !other.contains(*q)))
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.iter().all(|q| other.contains(q))
    }

    /// 1-based view for diagnostics and output files.
    pub fn one_based(&self) -> Vec<usize> {
        self.indices.iter().map(|q| q + 1).collect()
    }
}

// ---------------------------------------------------------------------------
// Vector
// ---------------------------------------------------------------------------

/// A fixed-length real vector (a context `x` or a parameter `beta`).
#[derive(Clone, Debug, PartialEq)]
pub struct Vector {
    entries: Vec<f64>,
}

impl Vector {
    pub fn zeros(d: usize) -> Self {
        assert!(d >= 1, "vector dimension must be at least 1");
        Self {
            entries: vec![0.0; d],
        }
    }

    pub fn from_entries(entries: Vec<f64>) -> Self {
        assert!(!entries.is_empty(), "vector dimension must be at least 1");
        Self { entries }
    }

    /// Unit vector `e_q` in dimension `d`.
    pub fn unit(d: usize, q: usize) -> Self {
        let mut v = Self::zeros(d);
        v.set(q, 1.0);
        v
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, q: usize) -> f64 {
        self.entries[q]
    }

    pub fn set(&mut self, q: usize, value: f64) {
        self.entries[q] = value;
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Indices with a nonzero entry.
    pub fn support(&self) -> IndexSet {
        IndexSet::from_indices(
            self.entries
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(q, _)| q),
        )
    }

    pub fn dot(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.entries
            .iter()
            .zip(other.entries.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm1(&self) -> f64 {
        self.entries.iter().map(|v| v.abs()).sum()
    }

    pub fn norm2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            entries: self.entries.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self {
            entries: self
                .entries
                .iter()
                .zip(other.entries.iter())
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self {
            entries: self
                .entries
                .iter()
                .zip(other.entries.iter())
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn clamp_small_in_place(&mut self, eps: f64) {
        for v in &mut self.entries {
            *v = clamp_small(*v, eps);
        }
    }
}

/// Zeroes every coordinate of `z` outside `support`.
pub fn restrict_vector(z: &Vector, support: &IndexSet) -> Vector {
    let mut out = Vector::zeros(z.dim());
    for q in support.iter() {
        if q < z.dim() {
            out.set(q, z.get(q));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Matrix
// ---------------------------------------------------------------------------

/// A square real matrix stored dense row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    dim: usize,
    entries: Vec<f64>,
}

impl Matrix {
    pub fn zeros(d: usize) -> Self {
        assert!(d >= 1, "matrix dimension must be at least 1");
        Self {
            dim: d,
            entries: vec![0.0; d * d],
        }
    }

    pub fn identity(d: usize) -> Self {
        Self::scaled_identity(d, 1.0)
    }

    pub fn scaled_identity(d: usize, scale: f64) -> Self {
        let mut m = Self::zeros(d);
        for q in 0..d {
            m.set(q, q, scale);
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let d = rows.len();
        assert!(d >= 1 && rows.iter().all(|r| r.len() == d), "matrix must be square");
        Self {
            dim: d,
            entries: rows.into_iter().flatten().collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.dim + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.entries[row * self.dim + col] = value;
    }

    /// Adds the outer product `x x^T` in place.
    pub fn add_outer(&mut self, x: &Vector) {
        debug_assert_eq!(self.dim, x.dim());
        for r in 0..self.dim {
            let xr = x.get(r);
            if xr == 0.0 {
                continue;
            }
            for c in 0..self.dim {
                self.entries[r * self.dim + c] += xr * x.get(c);
            }
        }
    }

    pub fn mul_vec(&self, x: &Vector) -> Vector {
        debug_assert_eq!(self.dim, x.dim());
        let mut out = Vector::zeros(self.dim);
        for r in 0..self.dim {
            let mut acc = 0.0;
            for c in 0..self.dim {
                acc += self.get(r, c) * x.get(c);
            }
            out.set(r, acc);
        }
        out
    }

    /// The quadratic form `x^T A x`, with no symmetry checks.
    pub fn quad_form(&self, x: &Vector) -> f64 {
        debug_assert_eq!(self.dim, x.dim());
        let mut acc = 0.0;
        for r in 0..self.dim {
            let xr = x.get(r);
            if xr == 0.0 {
                continue;
            }
            let mut row_acc = 0.0;
            for c in 0..self.dim {
                row_acc += self.get(r, c) * x.get(c);
            }
            acc += xr * row_acc;
        }
        acc
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.dim {
            for c in (r + 1)..self.dim {
                worst = worst.max((self.get(r, c) - self.get(c, r)).abs());
            }
        }
        worst
    }

    /// True when all rows and columns outside `support` are identically zero.
    pub fn is_restricted_to(&self, support: &IndexSet) -> bool {
        for r in 0..self.dim {
            for c in 0..self.dim {
                if self.get(r, c) != 0.0 && !(support.contains(r) && support.contains(c)) {
                    return false;
                }
            }
        }
        true
    }

    pub fn clamp_small_in_place(&mut self, eps: f64) {
        for v in &mut self.entries {
            *v = clamp_small(*v, eps);
        }
    }
}

/// Zeroes every row and column of `a` outside `support`.
pub fn restrict_matrix(a: &Matrix, support: &IndexSet) -> Matrix {
    let mut out = Matrix::zeros(a.dim());
    for r in support.iter() {
        for c in support.iter() {
            if r < a.dim() && c < a.dim() {
                out.set(r, c, a.get(r, c));
            }
        }
    }
    out
}

/// The weighted norm `sqrt(z^T A z)` for a symmetric positive semi-definite
/// `A`. Rejects asymmetric inputs and quadratic forms that are negative
/// beyond [`PSD_TOL`]; tiny negatives from roundoff are truncated to zero.
pub fn weighted_norm(z: &Vector, a: &Matrix) -> Result<f64, LinalgError> {
    if z.dim() != a.dim() {
        return Err(LinalgError::DimensionMismatch(z.dim(), a.dim()));
    }
    let asym = a.max_asymmetry();
    if asym > PSD_TOL {
        return Err(LinalgError::NotSymmetric(asym));
    }
    let form = a.quad_form(z);
    if form < -PSD_TOL {
        return Err(LinalgError::NegativeQuadraticForm(form));
    }
    Ok(form.max(0.0).sqrt())
}

/// Inverts the `support x support` block of a matrix in restricted form and
/// re-embeds it, so that `M * D` and `D * M` both equal the identity
/// restricted to `support`. Rows and columns outside the support stay zero;
/// an empty support yields the zero matrix.
///
/// The block must be symmetric positive definite. Designs built as
/// `(alpha I)_H + sum of outer products` with `alpha > 0` always are, so a
/// singularity error here signals corrupted state.
pub fn pinv_on_support(d: &Matrix, support: &IndexSet) -> Result<Matrix, LinalgError> {
    let dim = d.dim();
    let h: Vec<usize> = support.iter().filter(|q| *q < dim).collect();
    let k = h.len();
    let mut out = Matrix::zeros(dim);
    if k == 0 {
        return Ok(out);
    }

    // Extract the block and run Gauss-Jordan with partial pivoting against
    // an identity block.
    let mut block = vec![0.0f64; k * k];
    let mut inv = vec![0.0f64; k * k];
    let mut scale = 0.0f64;
    for (i, &r) in h.iter().enumerate() {
        for (j, &c) in h.iter().enumerate() {
            let v = d.get(r, c);
            block[i * k + j] = v;
            scale = scale.max(v.abs());
        }
        inv[i * k + i] = 1.0;
    }
    let pivot_tol = 1e-12 * (1.0 + scale);

    for step in 0..k {
        let mut best = step;
        for r in (step + 1)..k {
            if block[r * k + step].abs() > block[best * k + step].abs() {
                best = r;
            }
        }
        if best != step {
            for c in 0..k {
                block.swap(step * k + c, best * k + c);
                inv.swap(step * k + c, best * k + c);
            }
        }
        let pivot = block[step * k + step];
        if pivot.abs() <= pivot_tol {
            return Err(LinalgError::SingularBlock { pivot, step });
        }
        let inv_pivot = 1.0 / pivot;
        for c in 0..k {
            block[step * k + c] *= inv_pivot;
            inv[step * k + c] *= inv_pivot;
        }
        for r in 0..k {
            if r == step {
                continue;
            }
            let factor = block[r * k + step];
            if factor == 0.0 {
                continue;
            }
            for c in 0..k {
                block[r * k + c] -= factor * block[step * k + c];
                inv[r * k + c] -= factor * inv[step * k + c];
            }
        }
    }

    // Re-embed, symmetrizing to wash out elimination roundoff.
    for (i, &r) in h.iter().enumerate() {
        for (j, &c) in h.iter().enumerate() {
            let v = 0.5 * (inv[i * k + j] + inv[j * k + i]);
            out.set(r, c, v);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vec2(a: f64, b: f64) -> Vector {
        Vector::from_entries(vec![a, b])
    }

    /// Independent dense solver for oracle checks: solves `A y = b` by
    /// Gaussian elimination without pivot reuse from the implementation path.
    #[allow(clippy::needless_range_loop)]
    fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a.to_vec();
        let mut rhs = b.to_vec();
        for col in 0..n {
            let pivot_row = (col..n)
                .max_by(|&r1, &r2| m[r1][col].abs().partial_cmp(&m[r2][col].abs()).unwrap())
                .unwrap();
            m.swap(col, pivot_row);
            rhs.swap(col, pivot_row);
            let pivot = m[col][col];
            assert!(pivot.abs() > 1e-14, "oracle solve hit a singular matrix");
            for row in 0..n {
                if row == col {
                    continue;
                }
                let f = m[row][col] / pivot;
                for c in col..n {
                    m[row][c] -= f * m[col][c];
                }
                rhs[row] -= f * rhs[col];
            }
        }
        (0..n).map(|i| rhs[i] / m[i][i]).collect()
    }

    #[test]
    fn restrict_vector_definition() {
        let z = Vector::from_entries(vec![1.0, 2.0, 3.0]);
        let r = restrict_vector(&z, &IndexSet::from_indices([0, 2]));
        assert_eq!(r.entries(), &[1.0, 0.0, 3.0]);

        let empty = restrict_vector(&z, &IndexSet::empty());
        assert_eq!(empty.entries(), &[0.0, 0.0, 0.0]);

        let full = restrict_vector(&z, &IndexSet::full(3));
        assert_eq!(full, z);
    }

    #[test]
    fn restrict_matrix_definition() {
        let eye = Matrix::identity(2);
        let r = restrict_matrix(&eye, &IndexSet::from_indices([0]));
        assert_eq!(r.get(0, 0), 1.0);
        assert_eq!(r.get(1, 1), 0.0);

        let a = Matrix::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(restrict_matrix(&a, &IndexSet::full(2)), a);

        let second = restrict_matrix(&a, &IndexSet::from_indices([1]));
        assert_eq!(second.get(0, 0), 0.0);
        assert_eq!(second.get(0, 1), 0.0);
        assert_eq!(second.get(1, 0), 0.0);
        assert_eq!(second.get(1, 1), 4.0);
    }

    #[test]
    fn weighted_norm_euclidean_and_diagonal() {
        let n = weighted_norm(&vec2(3.0, 4.0), &Matrix::identity(2)).unwrap();
        assert!((n - 5.0).abs() < 1e-12);

        let zero = weighted_norm(&vec2(0.0, 0.0), &Matrix::identity(2)).unwrap();
        assert_eq!(zero, 0.0);

        // Direct quadratic-form evaluation: (1,1) on diag(4,1) -> sqrt(5).
        let diag = Matrix::from_rows(vec![vec![4.0, 0.0], vec![0.0, 1.0]]);
        let n = weighted_norm(&vec2(1.0, 1.0), &diag).unwrap();
        assert!((n - 5.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn weighted_norm_rejects_bad_inputs() {
        let asym = Matrix::from_rows(vec![vec![1.0, 0.5], vec![0.0, 1.0]]);
        assert!(matches!(
            weighted_norm(&vec2(1.0, 1.0), &asym),
            Err(LinalgError::NotSymmetric(_))
        ));

        let neg = Matrix::scaled_identity(2, -1.0);
        assert!(matches!(
            weighted_norm(&vec2(1.0, 0.0), &neg),
            Err(LinalgError::NegativeQuadraticForm(_))
        ));
    }

    #[test]
    fn pinv_diagonal_and_empty_support() {
        let mut d = Matrix::zeros(3);
        d.set(0, 0, 2.0);
        d.set(1, 1, 2.0);
        let support = IndexSet::from_indices([0, 1]);
        let m = pinv_on_support(&d, &support).unwrap();
        assert!((m.get(0, 0) - 0.5).abs() < 1e-14);
        assert!((m.get(1, 1) - 0.5).abs() < 1e-14);
        assert_eq!(m.get(2, 2), 0.0);

        let empty = pinv_on_support(&d, &IndexSet::empty()).unwrap();
        assert_eq!(empty, Matrix::zeros(3));
    }

    #[test]
    fn pinv_block_inverse_is_identity_on_support() {
        // D_H = [[2,1],[1,2]] -> inverse [[2/3,-1/3],[-1/3,2/3]].
        let mut d = Matrix::zeros(3);
        d.set(0, 0, 2.0);
        d.set(0, 1, 1.0);
        d.set(1, 0, 1.0);
        d.set(1, 1, 2.0);
        let support = IndexSet::from_indices([0, 1]);
        let m = pinv_on_support(&d, &support).unwrap();
        assert!((m.get(0, 0) - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.get(0, 1) + 1.0 / 3.0).abs() < 1e-12);
        assert!(m.is_restricted_to(&support));

        // M * D equals the identity restricted to the support.
        for r in 0..3 {
            for c in 0..3 {
                let mut acc = 0.0;
                for k in 0..3 {
                    acc += m.get(r, k) * d.get(k, c);
                }
                let expect = if r == c && support.contains(r) { 1.0 } else { 0.0 };
                assert!((acc - expect).abs() < 1e-12, "MD[{r}][{c}] = {acc}");
            }
        }
    }

    #[test]
    fn clamp_small_thresholds() {
        assert_eq!(clamp_small(5e-9, 1e-8), 0.0);
        assert_eq!(clamp_small(1e-7, 1e-8), 1e-7);
        // Boundary is inclusive.
        assert_eq!(clamp_small(-1e-8, 1e-8), 0.0);
    }

    #[test]
    fn clamp_small_is_idempotent() {
        for &x in &[0.0, 5e-9, -5e-9, 1e-8, 2e-8, -3.5, 1.0] {
            let once = clamp_small(x, 1e-8);
            assert_eq!(clamp_small(once, 1e-8), once);
        }
    }

    prop_compose! {
        fn arb_support(d: usize)(mask in proptest::collection::vec(any::<bool>(), d)) -> IndexSet {
            IndexSet::from_indices(mask.iter().enumerate().filter(|(_, m)| **m).map(|(q, _)| q))
        }
    }

    prop_compose! {
        fn arb_vector(d: usize)(entries in proptest::collection::vec(-10.0f64..10.0, d)) -> Vector {
            Vector::from_entries(entries)
        }
    }

    // Random PSD matrix: alpha*I plus a few outer products.
    prop_compose! {
        fn arb_psd(d: usize)(
            alpha in 0.1f64..3.0,
            rows in proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, d), 1..5),
        ) -> Matrix {
            let mut m = Matrix::scaled_identity(d, alpha);
            for row in rows {
                m.add_outer(&Vector::from_entries(row));
            }
            m
        }
    }

    proptest! {
        #[test]
        fn restriction_composes_as_intersection(
            z in arb_vector(6),
            i in arb_support(6),
            j in arb_support(6),
        ) {
            let twice = restrict_vector(&restrict_vector(&z, &i), &j);
            let once = restrict_vector(&z, &i.intersection(&j));
            prop_assert_eq!(twice, once);
        }

        // Restricting the weight matrix to any superset of the vector's
        // support leaves the weighted norm unchanged.
        #[test]
        fn weighted_norm_ignores_rows_outside_support(
            z in arb_vector(5),
            a in arb_psd(5),
            extra in arb_support(5),
        ) {
            let s = z.support().union(&extra);
            let full = weighted_norm(&z, &a).unwrap();
            let restricted = weighted_norm(&z, &restrict_matrix(&a, &s)).unwrap();
            prop_assert!((full - restricted).abs() <= 1e-9 * (1.0 + full.abs()));
        }

        // Two routes to ||x||^2 under the pseudo-inverse: the cached inverse
        // quadratic form versus solving the restricted linear system.
        #[test]
        fn pinv_quad_form_matches_linear_solve(
            a in arb_psd(4),
            x in arb_vector(4),
            support in arb_support(4),
        ) {
            prop_assume!(!support.is_empty());
            let d = {
                let mut m = restrict_matrix(&a, &support);
                for q in support.iter() {
                    m.set(q, q, m.get(q, q) + 0.5);
                }
                m
            };
            let pinv = pinv_on_support(&d, &support).unwrap();
            let xh = restrict_vector(&x, &support);
            let via_pinv = pinv.quad_form(&xh);

            let idx: Vec<usize> = support.iter().collect();
            let block: Vec<Vec<f64>> = idx
                .iter()
                .map(|&r| idx.iter().map(|&c| d.get(r, c)).collect())
                .collect();
            let rhs: Vec<f64> = idx.iter().map(|&q| xh.get(q)).collect();
            let solved = solve_dense(&block, &rhs);
            let via_solve: f64 = solved.iter().zip(rhs.iter()).map(|(y, b)| y * b).sum();

            prop_assert!(
                (via_pinv - via_solve).abs() <= 1e-8 * (1.0 + via_solve.abs()),
                "pinv route {} vs solve route {}", via_pinv, via_solve
            );
        }
    }
}
