//! One hierarchical sub-problem at a fixed working point.
//!
//! Levels are solved in priority order in the nullspace of everything fixed
//! above them. Level 0 is an l-infinity trust region `-rho <= x_hat <= rho`
//! that every level sees as hard inequality rows. After the last level an
//! implicit least-squares level on the step itself makes the step unique.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg::{
    psd_factor, psd_projection, select_entries, select_rows, update_cascade, vstack, ActiveSet, CascadeState,
    LevelUpdate,
};
use crate::model::{Norm, Sense};
use crate::nqp::{solve_level, IpmOptions, LevelProblem, LevelStatus};

/// Linear model of one level at the working point, full coordinates.
#[derive(Debug, Clone)]
pub struct SubLevel {
    pub norm: Norm,
    pub sense: Vec<Sense>,
    /// Canonical Jacobian rows.
    pub a: DMatrix<f64>,
    /// `-r(x_k)`: the model residual is `a x_hat - b`.
    pub b: DVector<f64>,
    pub omega: DVector<f64>,
    /// Curvature of the level cost, possibly indefinite. `None` in
    /// Gauss-Newton mode.
    pub hessian: Option<DMatrix<f64>>,
    /// Follow negative curvature when the convex model is stationary.
    pub escape: bool,
}

impl SubLevel {
    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    /// Level cost of a step under the linear model plus curvature.
    pub fn model_cost(&self, step: &DVector<f64>) -> f64 {
        let r = &self.a * step - &self.b;
        let mut cost = row_cost(self.norm, &self.sense, &self.omega, &r);
        if let Some(h) = &self.hessian {
            cost += 0.5 * step.dot(&(h * step));
        }
        cost
    }
}

/// `sum omega |slack|` for l0 levels, `0.5 |slack|^2` for l2 levels.
pub fn row_cost(norm: Norm, sense: &[Sense], omega: &DVector<f64>, residual: &DVector<f64>) -> f64 {
    let slack = slack_of(sense, residual);
    match norm {
        Norm::L0 => slack.iter().zip(omega.iter()).map(|(s, w)| w * s.abs()).sum(),
        Norm::L2 => 0.5 * slack.norm_squared(),
    }
}

/// Residual for equalities, `min(0, r)` for inequalities.
pub fn slack_of(sense: &[Sense], residual: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        residual.len(),
        sense.iter().zip(residual.iter()).map(|(s, &r)| match s {
            Sense::Equality => r,
            Sense::Inequality => r.min(0.0),
        }),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShqpOptions {
    /// Trust-region radius (l-infinity).
    pub rho: f64,
    pub ipm: IpmOptions,
    /// Append the least-squares step level.
    pub min_norm: bool,
    /// Inequalities with slack below `-active_tol` are fixed for lower levels.
    pub active_tol: f64,
}

impl Default for ShqpOptions {
    fn default() -> Self {
        Self { rho: 1.0, ipm: IpmOptions::default(), min_norm: true, active_tol: 1e-7 }
    }
}

#[derive(Debug, Clone)]
pub struct SubLevelResult {
    /// Model slack of every row at the cascade step of this level.
    pub v: DVector<f64>,
    /// Row multipliers, equality and inequality rows in level order.
    pub lam: DVector<f64>,
    /// Rows fixed for lower levels.
    pub active: Vec<usize>,
    pub status: LevelStatus,
    pub ipm_iterations: usize,
    /// A negative curvature step was added.
    pub escaped: bool,
    /// Variables left to this level.
    pub remaining: usize,
}

#[derive(Debug, Clone)]
pub struct ShqpSolution {
    pub step: DVector<f64>,
    pub levels: Vec<SubLevelResult>,
    pub cascade: CascadeState,
}

impl ShqpSolution {
    /// Every level sub-solve converged.
    pub fn converged(&self) -> bool {
        self.levels.iter().all(|l| l.status == LevelStatus::Converged)
    }
}

fn split(sense: &[Sense]) -> (Vec<usize>, Vec<usize>) {
    let eq = (0..sense.len()).filter(|&i| sense[i] == Sense::Equality).collect();
    let ineq = (0..sense.len()).filter(|&i| sense[i] == Sense::Inequality).collect();
    (eq, ineq)
}

/// Box rows `x_hat + rho >= 0` and `-x_hat + rho >= 0`.
fn trust_region_rows(n: usize, rho: f64) -> (DMatrix<f64>, DVector<f64>) {
    let eye = DMatrix::<f64>::identity(n, n);
    (vstack(&eye, &-&eye), DVector::from_element(2 * n, -rho))
}

/// Solves the levels in order and returns the accumulated step.
pub fn solve_shqp(levels: &[SubLevel], n: usize, opts: &ShqpOptions) -> Result<ShqpSolution> {
    let mut cs = CascadeState::new(n);
    let (tr_a, tr_b) = trust_region_rows(n, opts.rho);
    cs.push_inactive(&tr_a, &tr_b);
    let mut results = Vec::with_capacity(levels.len());
    for (j, level) in levels.iter().enumerate() {
        let (result, update) = solve_one(j, level, &cs, opts)?;
        cs = update_cascade(cs, update);
        results.push(result);
    }
    if opts.min_norm && cs.basis.remaining() > 0 {
        let nb = &cs.basis.basis;
        let mut p = LevelProblem::l2_equalities(nb.clone(), -&cs.x_hat_star);
        p.a_p = &cs.inactive_a * nb;
        p.b_p = &cs.inactive_b - &cs.inactive_a * &cs.x_hat_star;
        let sol = solve_level(&p, &opts.ipm)?;
        cs.x_hat_star += nb * &sol.z;
    }
    Ok(ShqpSolution { step: cs.x_hat_star.clone(), levels: results, cascade: cs })
}

fn solve_one(
    j: usize,
    level: &SubLevel,
    cs: &CascadeState,
    opts: &ShqpOptions,
) -> Result<(SubLevelResult, LevelUpdate)> {
    let nb = &cs.basis.basis;
    let n_r = nb.ncols();
    let (eq, ineq) = split(&level.sense);
    let a_t = &level.a * nb;
    let b_t = &level.b - &level.a * &cs.x_hat_star;
    let hp = match &level.hessian {
        Some(h) => Some(psd_projection(h)?),
        None => None,
    };

    let mut z = DVector::zeros(n_r);
    let mut lam = DVector::zeros(level.len());
    let mut status = LevelStatus::Converged;
    let mut ipm_iterations = 0;
    let mut escaped = false;
    let mut escape_row: Option<DMatrix<f64>> = None;
    if n_r > 0 && !level.is_empty() {
        let omega = match level.norm {
            Norm::L0 => level.omega.clone(),
            Norm::L2 => DVector::from_element(level.len(), 1.0),
        };
        let (h, g) = match &hp {
            Some(hp) => (nb.transpose() * hp * nb, nb.transpose() * (hp * &cs.x_hat_star)),
            None => (DMatrix::zeros(n_r, n_r), DVector::zeros(n_r)),
        };
        let p = LevelProblem {
            norm: level.norm,
            a_e: select_rows(&a_t, &eq),
            b_e: select_entries(&b_t, &eq),
            omega_e: select_entries(&omega, &eq),
            a_i: select_rows(&a_t, &ineq),
            b_i: select_entries(&b_t, &ineq),
            omega_i: select_entries(&omega, &ineq),
            a_p: &cs.inactive_a * nb,
            b_p: &cs.inactive_b - &cs.inactive_a * &cs.x_hat_star,
            h,
            grad_const: g,
        };
        let sol = solve_level(&p, &opts.ipm)?;
        z = sol.z;
        status = sol.status;
        ipm_iterations = sol.iterations;
        for (k, &i) in eq.iter().enumerate() {
            lam[i] = sol.lam_e[k];
        }
        for (k, &i) in ineq.iter().enumerate() {
            lam[i] = sol.lam_i[k];
        }
        if level.escape {
            if let Some(h) = &level.hessian {
                if let Some(dz) = curvature_step(level, &p, &(nb.transpose() * h * nb), &a_t, &b_t, &z, &omega, nb) {
                    let full = nb * &dz;
                    escape_row = Some(DMatrix::from_row_slice(1, full.len(), (&full / full.norm()).as_slice()));
                    z += dz;
                    escaped = true;
                }
            }
        }
    }

    let v = slack_of(&level.sense, &(&a_t * &z - &b_t));
    let active: Vec<usize> =
        (0..level.len()).filter(|&i| level.sense[i] == Sense::Equality || v[i] < -opts.active_tol).collect();
    let inactive: Vec<usize> = (0..level.len()).filter(|i| !active.contains(i)).collect();
    // inactive rows keep the relaxation they were solved with
    let inactive_b = DVector::from_iterator(inactive.len(), inactive.iter().map(|&i| level.b[i] + v[i].min(0.0)));
    let mut cost_factor = match &hp {
        Some(hp) if hp.amax() > 0.0 => Some(psd_factor(hp)?),
        _ => None,
    };
    // lower levels must not undo the curvature step
    if let Some(row) = escape_row {
        cost_factor = Some(match cost_factor {
            Some(r) => vstack(&r, &row),
            None => row,
        });
    }
    let update = LevelUpdate {
        level: j,
        z,
        active: ActiveSet { level: j, rows: active.clone(), v_star: active.iter().map(|&i| v[i]).collect() },
        active_a: select_rows(&level.a, &active),
        inactive_a: select_rows(&level.a, &inactive),
        inactive_b,
        cost_factor,
    };
    let result = SubLevelResult { v, lam, active, status, ipm_iterations, escaped, remaining: n_r };
    Ok((result, update))
}

/// Relative spread of eigenvalues treated as one eigenspace.
const DEGENERATE: f64 = 1e-8;

/// Step along the most negative curvature of the level model, taken to the
/// trust-region boundary, when the convex solve made no progress and the
/// full model decreases there.
#[allow(clippy::too_many_arguments)]
fn curvature_step(
    level: &SubLevel,
    p: &LevelProblem,
    h_tilde: &DMatrix<f64>,
    a_t: &DMatrix<f64>,
    b_t: &DVector<f64>,
    z: &DVector<f64>,
    omega: &DVector<f64>,
    nb: &DMatrix<f64>,
) -> Option<DVector<f64>> {
    let scale = h_tilde.amax().max(1.0);
    let eig = h_tilde.clone().symmetric_eigen();
    let lmin = eig.eigenvalues.min();
    if lmin >= -1e-8 * scale {
        return None;
    }
    let cost = |zz: &DVector<f64>| {
        row_cost(level.norm, &level.sense, omega, &(a_t * zz - b_t)) + 0.5 * zz.dot(&(h_tilde * zz))
    };
    let m0 = cost(&DVector::zeros(z.len()));
    let convex = |zz: &DVector<f64>| {
        row_cost(level.norm, &level.sense, omega, &(a_t * zz - b_t)) + 0.5 * zz.dot(&(&p.h * zz)) + p.grad_const.dot(zz)
    };
    let gain = convex(&DVector::zeros(z.len())) - convex(z);
    if gain > 1e-6 * m0.abs().max(1.0) {
        return None;
    }

    // Within a degenerate eigenspace prefer the direction closest to the
    // all-ones vector of the full coordinates so that no variable is favoured.
    let ones = nb.transpose() * DVector::from_element(nb.nrows(), 1.0);
    let mut u = DVector::zeros(z.len());
    for (k, &val) in eig.eigenvalues.iter().enumerate() {
        if val <= lmin + DEGENERATE * lmin.abs() {
            let col = eig.eigenvectors.column(k);
            u += col * col.dot(&ones);
        }
    }
    if u.norm() < 1e-12 {
        let k = eig.eigenvalues.imin();
        u = eig.eigenvectors.column(k).into_owned();
    }
    u /= u.norm();

    let mut best: Option<(f64, DVector<f64>)> = None;
    for d in [u.clone(), -u] {
        let alpha = boundary_step(p, z, &d)?;
        let cand = z + &d * alpha;
        let m = cost(&cand);
        if m < cost(z) - 1e-12 * m0.abs().max(1.0) && best.as_ref().is_none_or(|(bm, _)| m < *bm) {
            best = Some((m, d * alpha));
        }
    }
    best.map(|(_, dz)| dz)
}

/// Largest step along `d` that keeps every hard row satisfied.
fn boundary_step(p: &LevelProblem, z: &DVector<f64>, d: &DVector<f64>) -> Option<f64> {
    let margin = &p.a_p * z - &p.b_p;
    let rate = &p.a_p * d;
    let mut alpha = f64::INFINITY;
    for (m, r) in margin.iter().zip(rate.iter()) {
        if *r < -1e-14 {
            alpha = alpha.min(m.max(0.0) / -r);
        }
    }
    (alpha.is_finite() && alpha > 0.0).then_some(0.999 * alpha)
}
