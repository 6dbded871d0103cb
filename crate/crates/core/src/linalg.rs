//! Nullspace bases, PSD factors and the cascade of active constraints.
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative rank threshold of the column-pivoted QR.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct NullspaceBasis {
    /// `n x n_r`, orthonormal columns.
    pub basis: DMatrix<f64>,
    pub source_rank: usize,
}

impl NullspaceBasis {
    pub fn identity(n: usize) -> Self {
        Self { basis: DMatrix::identity(n, n), source_rank: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.basis.ncols()
    }
}

/// Orthonormal basis of `ker(A)` from a column-pivoted QR of `A^T`.
pub fn nullspace_basis(a: &DMatrix<f64>) -> NullspaceBasis {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return NullspaceBasis { basis: DMatrix::identity(n, n), source_rank: 0 };
    }
    // zero-padding A^T to at least n columns makes the returned Q square
    let width = m.max(n);
    let mut at = DMatrix::zeros(n, width);
    at.view_mut((0, 0), (n, m)).copy_from(&a.transpose());
    let qr = at.col_piv_qr();
    let r = qr.r();
    let q = qr.q();
    let lead = r[(0, 0)].abs();
    let rank =
        if lead == 0.0 { 0 } else { (0..n.min(width)).take_while(|&i| r[(i, i)].abs() > RANK_TOL * lead).count() };
    NullspaceBasis { basis: q.columns(rank, n - rank).into_owned(), source_rank: rank }
}

/// Factor `R` with `R^T R = H+`, the eigenvalue-clamped projection of `H`.
pub fn psd_factor(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, c) = h.shape();
    if n != c {
        return Err(Error::Dimension(format!("psd_factor expects a square matrix, got {n}x{c}")));
    }
    let scale = h.amax().max(1.0);
    let asym = (h - h.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(Error::Asymmetric(asym));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = h.clone().symmetric_eigen();
    let top = eig.eigenvalues.amax();
    let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 1e-14 * top.max(f64::MIN_POSITIVE)).collect();
    let mut r = DMatrix::zeros(keep.len(), n);
    for (k, &i) in keep.iter().enumerate() {
        let s = eig.eigenvalues[i].sqrt();
        r.row_mut(k).copy_from(&(eig.eigenvectors.column(i).transpose() * s));
    }
    Ok(r)
}

/// `H+ = R^T R` with negative eigenvalues clamped to zero.
pub fn psd_projection(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let r = psd_factor(h)?;
    Ok(r.transpose() * r)
}

/// Smallest eigenvalue and its eigenvector of a symmetric matrix.
pub fn min_eigenpair(h: &DMatrix<f64>) -> Option<(f64, DVector<f64>)> {
    if h.nrows() == 0 {
        return None;
    }
    let eig = h.clone().symmetric_eigen();
    let (i, &val) = eig.eigenvalues.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1))?;
    let mut v = eig.eigenvectors.column(i).into_owned();
    // deterministic orientation: largest entry positive
    if let Some((k, _)) = v.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())) {
        if v[k] < 0.0 {
            v = -v;
        }
    }
    Some((val, v))
}

/// Rows of one solved level that constrain the remaining ones.
#[derive(Debug, Clone, Default)]
pub struct ActiveSet {
    pub level: usize,
    /// Row indices within the level.
    pub rows: Vec<usize>,
    /// Optimal sub-problem slack of those rows.
    pub v_star: Vec<f64>,
}

/// State passed down the cascade of one hierarchical sub-problem.
#[derive(Debug, Clone)]
pub struct CascadeState {
    pub x_hat_star: DVector<f64>,
    pub basis: NullspaceBasis,
    pub active: Vec<ActiveSet>,
    /// Inequalities of solved levels held as `A x_hat - b >= 0`, full coordinates.
    pub inactive_a: DMatrix<f64>,
    pub inactive_b: DVector<f64>,
    /// Accumulated PSD cost factors of solved levels, full coordinates.
    pub cost_rows: DMatrix<f64>,
}

impl CascadeState {
    pub fn new(n: usize) -> Self {
        Self {
            x_hat_star: DVector::zeros(n),
            basis: NullspaceBasis::identity(n),
            active: Vec::new(),
            inactive_a: DMatrix::zeros(0, n),
            inactive_b: DVector::zeros(0),
            cost_rows: DMatrix::zeros(0, n),
        }
    }

    pub fn n(&self) -> usize {
        self.x_hat_star.len()
    }

    /// Adds hard inequalities `A x_hat - b >= 0`.
    pub fn push_inactive(&mut self, a: &DMatrix<f64>, b: &DVector<f64>) {
        self.inactive_a = vstack(&self.inactive_a, a);
        self.inactive_b = vcat(&self.inactive_b, b);
    }
}

/// Result of one converged level solve, in full coordinates.
#[derive(Debug, Clone)]
pub struct LevelUpdate {
    pub level: usize,
    /// Projected primal step of the level.
    pub z: DVector<f64>,
    pub active: ActiveSet,
    /// Jacobian rows of `active.rows`.
    pub active_a: DMatrix<f64>,
    pub inactive_a: DMatrix<f64>,
    pub inactive_b: DVector<f64>,
    /// PSD factor of the level Hessian, if any.
    pub cost_factor: Option<DMatrix<f64>>,
}

/// `x_hat* += N z`, then restricts `N` to the kernel of the new active rows
/// and cost factor.
pub fn update_cascade(mut cs: CascadeState, update: LevelUpdate) -> CascadeState {
    let n = cs.n();
    cs.x_hat_star += &cs.basis.basis * &update.z;
    let mut fixed = update.active_a.clone();
    if let Some(r) = &update.cost_factor {
        fixed = vstack(&fixed, r);
        cs.cost_rows = vstack(&cs.cost_rows, r);
    }
    if fixed.nrows() > 0 && cs.basis.remaining() > 0 {
        let projected = &fixed * &cs.basis.basis;
        let inner = nullspace_basis(&projected);
        let basis = &cs.basis.basis * inner.basis;
        cs.basis = NullspaceBasis { source_rank: n - basis.ncols(), basis };
    }
    cs.push_inactive(&update.inactive_a, &update.inactive_b);
    cs.active.push(update.active);
    cs
}

pub fn vstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    if a.nrows() == 0 {
        return b.clone();
    }
    if b.nrows() == 0 {
        return a.clone();
    }
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.rows_mut(0, a.nrows()).copy_from(a);
    out.rows_mut(a.nrows(), b.nrows()).copy_from(b);
    out
}

pub fn vcat(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.len() + b.len());
    out.rows_mut(0, a.len()).copy_from(a);
    out.rows_mut(a.len(), b.len()).copy_from(b);
    out
}

/// Rows of `m` selected by `idx`.
pub fn select_rows(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), m.ncols(), |r, c| m[(idx[r], c)])
}

pub fn select_entries(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_matrix_gives_identity() {
        let nb = nullspace_basis(&DMatrix::zeros(0, 4));
        assert_eq!(nb.basis, DMatrix::identity(4, 4));
        assert_eq!(nb.remaining(), 4);
    }

    #[test]
    fn unit_row_removes_first_coordinate() {
        let mut a = DMatrix::zeros(1, 5);
        a[(0, 0)] = 1.0;
        let nb = nullspace_basis(&a);
        assert_eq!(nb.remaining(), 4);
        assert!((&a * &nb.basis).norm() == 0.0);
        assert!(nb.basis.row(0).norm() < 1e-15);
    }

    #[test]
    fn random_rank_three() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DMatrix::from_fn(3, 8, |_, _| rng.random_range(-1.0..1.0));
        let nb = nullspace_basis(&a);
        // singular values as rank oracle
        let sv = a.clone().svd(false, false).singular_values;
        let rank = sv.iter().filter(|s| **s > 1e-10 * sv[0]).count();
        assert_eq!(rank, 3);
        assert_eq!(nb.remaining(), 8 - rank);
        assert!((&a * &nb.basis).norm() <= 1e-12);
        let gram = nb.basis.transpose() * &nb.basis;
        assert!((gram - DMatrix::identity(5, 5)).norm() < 1e-12);
    }

    #[test]
    fn rank_deficient_rows() {
        let a = DMatrix::from_row_slice(3, 4, &[1., 2., 0., 1., 2., 4., 0., 2., 0., 0., 1., 0.]);
        let nb = nullspace_basis(&a);
        assert_eq!(nb.source_rank, 2);
        assert_eq!(nb.remaining(), 2);
        assert!((&a * &nb.basis).norm() <= 1e-10 * a.norm());
    }

    #[test]
    fn wide_and_tall_inputs() {
        let a = DMatrix::from_fn(6, 3, |r, c| ((r + 1) * (c + 2)) as f64 + if r == c { 1.0 } else { 0.0 });
        let nb = nullspace_basis(&a);
        assert_eq!(nb.remaining(), 0);
    }

    #[test]
    fn psd_factor_examples() {
        let i = DMatrix::<f64>::identity(3, 3);
        let r = psd_factor(&i).unwrap();
        assert!((r.transpose() * &r - &i).norm() < 1e-12);

        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 0.0]));
        let r = psd_factor(&h).unwrap();
        assert!((r.transpose() * &r - &h).norm() < 1e-12);

        let ind = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        let r = psd_factor(&ind).unwrap();
        let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        assert!((r.transpose() * &r - expect).norm() < 1e-12);
    }

    #[test]
    fn psd_factor_matches_eigen_clamp() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let b = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
            let h = &b + b.transpose();
            let r = psd_factor(&h).unwrap();
            let eig = h.clone().symmetric_eigen();
            let clamped = eig.eigenvalues.map(|l| l.max(0.0));
            let oracle = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
            assert!((r.transpose() * &r - oracle).norm() <= 1e-8 * h.norm());
        }
    }

    #[test]
    fn asymmetric_input_rejected() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(psd_factor(&h), Err(Error::Asymmetric(_))));
    }

    #[test]
    fn cascade_preserves_solved_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 6;
        let mut cs = CascadeState::new(n);
        let mut solved: Vec<(DMatrix<f64>, DVector<f64>)> = Vec::new();
        let mut last_nr = n;
        for level in 0..3 {
            let a = DMatrix::from_fn(2, n, |_, _| rng.random_range(-1.0..1.0));
            let b = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            // least squares in the current nullspace
            let at = &a * &cs.basis.basis;
            let bt = &b - &a * &cs.x_hat_star;
            let z =
                if at.ncols() > 0 { at.clone().svd(true, true).solve(&bt, 1e-12).unwrap() } else { DVector::zeros(0) };
            let v = &at * &z - &bt;
            let update = LevelUpdate {
                level,
                z,
                active: ActiveSet { level, rows: vec![0, 1], v_star: v.iter().copied().collect() },
                active_a: a.clone(),
                inactive_a: DMatrix::zeros(0, n),
                inactive_b: DVector::zeros(0),
                cost_factor: None,
            };
            cs = update_cascade(cs, update);
            solved.push((a, &b + &v));
            assert!(cs.basis.remaining() <= last_nr);
            last_nr = cs.basis.remaining();
            for (a, target) in &solved {
                assert!((a * &cs.x_hat_star - target).norm() < 1e-6);
            }
        }
        assert_eq!(last_nr, 0);
    }
}
