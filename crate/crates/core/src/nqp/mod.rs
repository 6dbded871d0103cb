//! Primal-dual interior-point solver for one level of the hierarchical
//! sub-problem.
//!
//! A level minimizes `omega^T t + 0.5 x^T H x` (l0 levels) or
//! `0.5 |v|^2 + 0.5 x^T H x` (l2 levels) subject to
//!
//! ```text
//! A_E z - b_E - v_E          = 0
//! A_I z - b_I - v_I - w_I    = 0,  w_I >= 0
//! A_P z - b_P - w_P          = 0,  w_P >= 0   (previous levels, trust region)
//! -t <= v <= t                                  (l0 only, with slacks w_t+-)
//! ```
//!
//! All auxiliary variables are eliminated per row so that every Newton step
//! reduces to one `n_r x n_r` system whose assembly is linear in the row count.

pub mod dense;
pub mod kkt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::psd_factor;
use crate::model::Norm;
pub use kkt::{
    add_corrector, apply_jacobian, assemble_normal, family_mu, fraction_to_boundary, kkt_residual, overall_mu,
    recover_full_step, Centering,
};

/// Primal-dual iterate. The same layout holds residuals and directions.
#[derive(Debug, Clone, PartialEq)]
pub struct IpmIterate {
    pub z: DVector<f64>,
    pub lam_e: DVector<f64>,
    pub lam_i: DVector<f64>,
    pub lam_p: DVector<f64>,
    pub v_e: DVector<f64>,
    pub v_i: DVector<f64>,
    pub t_e: DVector<f64>,
    pub t_i: DVector<f64>,
    pub lt_e_plus: DVector<f64>,
    pub lt_e_minus: DVector<f64>,
    pub lt_i_plus: DVector<f64>,
    pub lt_i_minus: DVector<f64>,
    pub wt_e_plus: DVector<f64>,
    pub wt_e_minus: DVector<f64>,
    pub wt_i_plus: DVector<f64>,
    pub wt_i_minus: DVector<f64>,
    pub w_i: DVector<f64>,
    pub w_p: DVector<f64>,
}

/// Gradient of the level Lagrangian, one entry per variable of [`IpmIterate`].
pub type KktResidual = IpmIterate;

impl IpmIterate {
    /// All-zero iterate; l2 levels carry no auxiliary bound variables.
    pub fn empty(n_r: usize, me: usize, mi: usize, mp: usize, norm: Norm) -> Self {
        let z = |k: usize| DVector::zeros(k);
        let (te, ti) = if norm == Norm::L0 { (me, mi) } else { (0, 0) };
        Self {
            z: z(n_r),
            lam_e: z(me),
            lam_i: z(mi),
            lam_p: z(mp),
            v_e: z(me),
            v_i: z(mi),
            t_e: z(te),
            t_i: z(ti),
            lt_e_plus: z(te),
            lt_e_minus: z(te),
            lt_i_plus: z(ti),
            lt_i_minus: z(ti),
            wt_e_plus: z(te),
            wt_e_minus: z(te),
            wt_i_plus: z(ti),
            wt_i_minus: z(ti),
            w_i: z(mi),
            w_p: z(mp),
        }
    }

    pub fn zeros_like(other: &Self) -> Self {
        let mut out = other.clone();
        for f in out.fields_mut() {
            f.fill(0.0);
        }
        out
    }

    /// Blocks in the packed order.
    pub fn fields(&self) -> [&DVector<f64>; 18] {
        [
            &self.z,
            &self.lam_e,
            &self.lam_i,
            &self.lam_p,
            &self.v_e,
            &self.v_i,
            &self.t_e,
            &self.t_i,
            &self.lt_e_plus,
            &self.lt_e_minus,
            &self.lt_i_plus,
            &self.lt_i_minus,
            &self.wt_e_plus,
            &self.wt_e_minus,
            &self.wt_i_plus,
            &self.wt_i_minus,
            &self.w_i,
            &self.w_p,
        ]
    }

    pub fn fields_mut(&mut self) -> [&mut DVector<f64>; 18] {
        [
            &mut self.z,
            &mut self.lam_e,
            &mut self.lam_i,
            &mut self.lam_p,
            &mut self.v_e,
            &mut self.v_i,
            &mut self.t_e,
            &mut self.t_i,
            &mut self.lt_e_plus,
            &mut self.lt_e_minus,
            &mut self.lt_i_plus,
            &mut self.lt_i_minus,
            &mut self.wt_e_plus,
            &mut self.wt_e_minus,
            &mut self.wt_i_plus,
            &mut self.wt_i_minus,
            &mut self.w_i,
            &mut self.w_p,
        ]
    }

    pub fn len(&self) -> usize {
        self.fields().iter().map(|f| f.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_vec(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.fields().into_iter().flat_map(|f| f.iter().copied()))
    }

    /// Inverse of [`to_vec`](Self::to_vec) using `self` as the layout.
    pub fn with_values(&self, packed: &DVector<f64>) -> Self {
        let mut out = self.clone();
        let mut at = 0;
        for f in out.fields_mut() {
            let n = f.len();
            f.copy_from(&packed.rows(at, n));
            at += n;
        }
        out
    }

    pub fn axpy(&mut self, alpha: f64, dq: &Self) {
        for (x, dx) in self.fields_mut().into_iter().zip(dq.fields()) {
            x.axpy(alpha, dx, 1.0);
        }
    }

    pub fn inf_norm(&self) -> f64 {
        self.fields().iter().map(|f| f.amax()).fold(0.0, f64::max)
    }

    /// `(lambda, w)` complementarity pairs.
    pub fn complementarity_pairs(&self) -> [(&DVector<f64>, &DVector<f64>); 6] {
        [
            (&self.lt_e_plus, &self.wt_e_plus),
            (&self.lt_e_minus, &self.wt_e_minus),
            (&self.lt_i_plus, &self.wt_i_plus),
            (&self.lt_i_minus, &self.wt_i_minus),
            (&self.lam_i, &self.w_i),
            (&self.lam_p, &self.w_p),
        ]
    }

    /// Every block that must stay strictly positive. Equality multipliers
    /// are free and not listed.
    pub fn sign_constrained(&self) -> [&DVector<f64>; 12] {
        [
            &self.lt_e_plus,
            &self.lt_e_minus,
            &self.lt_i_plus,
            &self.lt_i_minus,
            &self.lam_i,
            &self.lam_p,
            &self.wt_e_plus,
            &self.wt_e_minus,
            &self.wt_i_plus,
            &self.wt_i_minus,
            &self.w_i,
            &self.w_p,
        ]
    }
}

/// One level of the sub-problem in projected coordinates.
#[derive(Debug, Clone)]
pub struct LevelProblem {
    pub norm: Norm,
    pub a_e: DMatrix<f64>,
    pub b_e: DVector<f64>,
    pub omega_e: DVector<f64>,
    pub a_i: DMatrix<f64>,
    pub b_i: DVector<f64>,
    pub omega_i: DVector<f64>,
    /// Hard inequalities `A_P z - b_P >= 0`.
    pub a_p: DMatrix<f64>,
    pub b_p: DVector<f64>,
    /// Projected Hessian `N^T H N`.
    pub h: DMatrix<f64>,
    /// Constant gradient `N^T H x_hat*`.
    pub grad_const: DVector<f64>,
}

impl LevelProblem {
    pub fn unconstrained(h: DMatrix<f64>, grad_const: DVector<f64>) -> Self {
        let n = h.nrows();
        Self {
            norm: Norm::L0,
            a_e: DMatrix::zeros(0, n),
            b_e: DVector::zeros(0),
            omega_e: DVector::zeros(0),
            a_i: DMatrix::zeros(0, n),
            b_i: DVector::zeros(0),
            omega_i: DVector::zeros(0),
            a_p: DMatrix::zeros(0, n),
            b_p: DVector::zeros(0),
            h,
            grad_const,
        }
    }

    pub fn l0_equalities(a: DMatrix<f64>, b: DVector<f64>, omega: DVector<f64>) -> Self {
        let n = a.ncols();
        let mut p = Self::unconstrained(DMatrix::zeros(n, n), DVector::zeros(n));
        p.a_e = a;
        p.b_e = b;
        p.omega_e = omega;
        p
    }

    pub fn l2_equalities(a: DMatrix<f64>, b: DVector<f64>) -> Self {
        let m = a.nrows();
        let mut p = Self::l0_equalities(a, b, DVector::from_element(m, 1.0));
        p.norm = Norm::L2;
        p
    }

    pub fn n_r(&self) -> usize {
        self.h.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_r();
        let shape_ok = self.h.ncols() == n
            && self.grad_const.len() == n
            && self.a_e.ncols() == n
            && self.a_i.ncols() == n
            && self.a_p.ncols() == n
            && self.b_e.len() == self.a_e.nrows()
            && self.b_i.len() == self.a_i.nrows()
            && self.b_p.len() == self.a_p.nrows()
            && self.omega_e.len() == self.a_e.nrows()
            && self.omega_i.len() == self.a_i.nrows();
        if !shape_ok {
            return Err(Error::Dimension("inconsistent level problem shapes".into()));
        }
        if self.norm == Norm::L0
            && self
                .omega_e
                .iter()
                .chain(self.omega_i.iter())
                .any(|w| w.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater))
        {
            return Err(Error::Domain("l0 weights must be positive".into()));
        }
        Ok(())
    }

    /// Zero primal step, slack at the zero-step residual, unit multipliers
    /// except on the auxiliary bounds, which split the row weight.
    pub fn initial_iterate(&self) -> IpmIterate {
        let mut q = IpmIterate::empty(self.n_r(), self.a_e.nrows(), self.a_i.nrows(), self.a_p.nrows(), self.norm);
        q.v_e = -&self.b_e;
        q.v_i = -&self.b_i;
        q.w_i = (-&self.b_i - &q.v_i).map(|w| w.max(1.0));
        q.w_p = (-&self.b_p).map(|w| w.max(1.0));
        q.lam_e.fill(1.0);
        q.lam_i.fill(1.0);
        q.lam_p.fill(1.0);
        if self.norm == Norm::L0 {
            q.t_e = q.v_e.map(|v| v.abs() + 1.0);
            q.t_i = q.v_i.map(|v| v.abs() + 1.0);
            q.wt_e_plus = (&q.t_e - &q.v_e).map(|w| w.max(1.0));
            q.wt_e_minus = (&q.t_e + &q.v_e).map(|w| w.max(1.0));
            q.wt_i_plus = (&q.t_i - &q.v_i).map(|w| w.max(1.0));
            q.wt_i_minus = (&q.t_i + &q.v_i).map(|w| w.max(1.0));
            // splits each weight evenly so that the auxiliary gradient starts at zero
            q.lt_e_plus = &self.omega_e * 0.5;
            q.lt_e_minus = &self.omega_e * 0.5;
            q.lt_i_plus = &self.omega_i * 0.5;
            q.lt_i_minus = &self.omega_i * 0.5;
        }
        q
    }

    fn primal_scale(&self) -> f64 {
        [self.b_e.amax(), self.b_i.amax(), self.b_p.amax(), 1.0].into_iter().fold(0.0, f64::max)
    }

    fn dual_scale(&self) -> f64 {
        [self.omega_e.amax(), self.omega_i.amax(), self.grad_const.amax(), 1.0].into_iter().fold(0.0, f64::max)
    }

    /// Largest scaled KKT violation, complementarity excluded.
    pub fn scaled_residual(&self, k: &KktResidual) -> f64 {
        let primal = [&k.lam_e, &k.lam_i, &k.lam_p, &k.lt_e_plus, &k.lt_e_minus, &k.lt_i_plus, &k.lt_i_minus]
            .iter()
            .map(|f| f.amax())
            .fold(0.0, f64::max);
        let dual = [&k.z, &k.v_e, &k.v_i, &k.t_e, &k.t_i].iter().map(|f| f.amax()).fold(0.0, f64::max);
        (primal / self.primal_scale()).max(dual / self.dual_scale())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpmOptions {
    pub kkt_tol: f64,
    pub mu_tol: f64,
    pub max_iter: usize,
    pub tau: f64,
    pub sigma: f64,
    pub min_step: f64,
    pub trace: bool,
}

impl Default for IpmOptions {
    fn default() -> Self {
        Self { kkt_tol: 1e-9, mu_tol: 1e-10, max_iter: 200, tau: 0.995, sigma: 0.1, min_step: 1e-14, trace: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelStatus {
    Converged,
    MaxIterations,
    /// The step length collapsed below `min_step`.
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub mu: f64,
    pub kkt: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone)]
pub struct LevelSolution {
    pub z: DVector<f64>,
    pub v_e: DVector<f64>,
    pub v_i: DVector<f64>,
    /// `|v|` at convergence; the iterate's auxiliaries for l0 levels.
    pub t_e: DVector<f64>,
    pub t_i: DVector<f64>,
    pub lam_e: DVector<f64>,
    pub lam_i: DVector<f64>,
    pub lam_p: DVector<f64>,
    pub kkt_residual_norm: f64,
    pub mu: f64,
    pub iterations: usize,
    pub status: LevelStatus,
    pub iterate: IpmIterate,
    pub trace: Vec<TraceRow>,
}

impl LevelSolution {
    pub fn converged(&self) -> bool {
        self.status == LevelStatus::Converged
    }
}

/// One condensed Newton system as seen by [`solve_level_observed`].
pub struct NewtonSystem<'a> {
    pub iter: usize,
    pub corrector: bool,
    pub q: &'a IpmIterate,
    pub k: &'a KktResidual,
    pub dz: &'a DVector<f64>,
    pub dq: &'a IpmIterate,
}

pub fn solve_level(p: &LevelProblem, opts: &IpmOptions) -> Result<LevelSolution> {
    solve_level_observed(p, opts, &mut |_| {})
}

/// Least-squares slack variant; forces the l2 cost on `p`.
pub fn solve_level_l2(p: &LevelProblem, opts: &IpmOptions) -> Result<LevelSolution> {
    let mut p = p.clone();
    p.norm = Norm::L2;
    p.omega_e = DVector::from_element(p.a_e.nrows(), 1.0);
    p.omega_i = DVector::from_element(p.a_i.nrows(), 1.0);
    solve_level(&p, opts)
}

enum NormalFactor {
    Empty,
    Cholesky(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl NormalFactor {
    fn new(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 {
            return Ok(Self::Empty);
        }
        if let Some(ch) = m.clone().cholesky() {
            return Ok(Self::Cholesky(ch));
        }
        let shift = 1e-12 * m.diagonal().amax().max(1.0);
        let mut reg = m.clone();
        for i in 0..reg.nrows() {
            reg[(i, i)] += shift;
        }
        if let Some(ch) = reg.clone().cholesky() {
            return Ok(Self::Cholesky(ch));
        }
        let lu = reg.lu();
        if !lu.is_invertible() {
            return Err(Error::Interior("singular condensed system".into()));
        }
        Ok(Self::Lu(lu))
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Empty => DVector::zeros(0),
            Self::Cholesky(ch) => ch.solve(rhs),
            Self::Lu(lu) => lu.solve(rhs).unwrap_or_else(|| DVector::zeros(rhs.len())),
        }
    }
}

/// Corrector step length below which a plain centering step is tried.
const SHORT_STEP: f64 = 0.1;
const RECENTER_SIGMA: f64 = 0.5;

/// Pairs must keep `lambda w >= CENTRALITY * mu` of their family.
const CENTRALITY: f64 = 1e-4;

fn centrality_ok(q: &IpmIterate) -> bool {
    let pairs = q.complementarity_pairs();
    // families: equality bounds, inequality bounds, own inequalities, previous rows
    let families: [&[usize]; 4] = [&[0, 1], &[2, 3], &[4], &[5]];
    families.iter().all(|fam| {
        let count: usize = fam.iter().map(|&i| pairs[i].0.len()).sum();
        if count == 0 {
            return true;
        }
        let mu = fam.iter().map(|&i| pairs[i].0.dot(pairs[i].1)).sum::<f64>() / count as f64;
        fam.iter().all(|&i| pairs[i].0.iter().zip(pairs[i].1.iter()).all(|(l, w)| l * w >= CENTRALITY * mu))
    })
}

/// Shortens `alpha` until the trial point stays in the wide neighbourhood.
fn keep_centrality(q: &IpmIterate, dq: &IpmIterate, mut alpha: f64) -> f64 {
    for _ in 0..40 {
        let mut trial = q.clone();
        trial.axpy(alpha, dq);
        if centrality_ok(&trial) {
            break;
        }
        alpha *= 0.5;
    }
    alpha
}

/// Rounds of iterative refinement on the unreduced linear system.
const REFINE_STEPS: usize = 2;

/// Newton direction for the residual `k`.
pub fn newton_direction(p: &LevelProblem, q: &IpmIterate, k: &KktResidual) -> Result<(DVector<f64>, IpmIterate)> {
    let (m, rhs) = assemble_normal(p, q, k)?;
    let factor = NormalFactor::new(&m)?;
    let mut dz = factor.solve(&rhs);
    let mut dq = recover_full_step(p, q, k, &dz)?;
    let mut err = linearized_residual(p, q, k, &dq);
    for _ in 0..REFINE_STEPS {
        if err.inf_norm() <= 1e-15 * k.inf_norm() {
            break;
        }
        let (_, rhs) = assemble_normal(p, q, &err)?;
        let ddz = factor.solve(&rhs);
        let ddq = recover_full_step(p, q, &err, &ddz)?;
        let mut trial = dq.clone();
        trial.axpy(1.0, &ddq);
        let trial_err = linearized_residual(p, q, k, &trial);
        if trial_err.inf_norm() >= err.inf_norm() {
            break;
        }
        dz += ddz;
        dq = trial;
        err = trial_err;
    }
    Ok((dz, dq))
}

/// `K + J dq`.
fn linearized_residual(p: &LevelProblem, q: &IpmIterate, k: &KktResidual, dq: &IpmIterate) -> KktResidual {
    let mut r = apply_jacobian(p, q, dq);
    r.axpy(1.0, k);
    r
}

/// Mehrotra-style predictor-corrector loop; `observe` sees every Newton system.
pub fn solve_level_observed(
    p: &LevelProblem,
    opts: &IpmOptions,
    observe: &mut dyn FnMut(&NewtonSystem<'_>),
) -> Result<LevelSolution> {
    p.validate()?;
    let mut q = p.initial_iterate();
    let mut trace = Vec::new();
    let mut best: Option<(f64, IpmIterate, f64, f64)> = None;
    let mut status = LevelStatus::MaxIterations;
    let mut iterations = 0;
    for iter in 0..=opts.max_iter {
        let k0 = kkt_residual(p, &q, &Centering::default());
        let res = p.scaled_residual(&k0);
        let mu = overall_mu(&q);
        if !res.is_finite() || !mu.is_finite() {
            return Err(Error::Interior(format!("non-finite iterate at iteration {iter}")));
        }
        let merit = res.max(mu);
        if best.as_ref().is_none_or(|b| merit < b.0) {
            best = Some((merit, q.clone(), res, mu));
        }
        if res <= opts.kkt_tol && mu <= opts.mu_tol {
            status = LevelStatus::Converged;
            best = Some((merit, q.clone(), res, mu));
            break;
        }
        if iter == opts.max_iter {
            break;
        }
        iterations = iter + 1;

        let (dz_aff, dq_aff) = newton_direction(p, &q, &k0)?;
        observe(&NewtonSystem { iter, corrector: false, q: &q, k: &k0, dz: &dz_aff, dq: &dq_aff });
        let alpha_aff = fraction_to_boundary(&q, &dq_aff, 1.0);
        let mut affine = dq_aff.clone();
        for f in affine.fields_mut() {
            *f *= alpha_aff;
        }
        let target = Centering::scaled(&family_mu(&q), opts.sigma);
        let mut k1 = kkt_residual(p, &q, &target);
        add_corrector(&mut k1, &affine);
        let (dz, mut dq) = newton_direction(p, &q, &k1)?;
        observe(&NewtonSystem { iter, corrector: true, q: &q, k: &k1, dz: &dz, dq: &dq });
        let mut alpha = fraction_to_boundary(&q, &dq, opts.tau);
        if alpha < SHORT_STEP {
            // the corrector pushed a pair onto its bound: recentre every
            // family on the common average so a collapsed family can recover
            let target = Centering::uniform(RECENTER_SIGMA * overall_mu(&q));
            let k2 = kkt_residual(p, &q, &target);
            let (dz2, dq2) = newton_direction(p, &q, &k2)?;
            let alpha2 = fraction_to_boundary(&q, &dq2, opts.tau);
            if alpha2 > alpha {
                observe(&NewtonSystem { iter, corrector: true, q: &q, k: &k2, dz: &dz2, dq: &dq2 });
                (dq, alpha) = (dq2, alpha2);
            }
        }
        alpha = keep_centrality(&q, &dq, alpha);
        if opts.trace {
            trace.push(TraceRow { iter, mu, kkt: res, alpha });
        }
        if alpha * dq.inf_norm() < opts.min_step {
            status = LevelStatus::Stalled;
            break;
        }
        q.axpy(alpha, &dq);
    }
    let (_, q, res, mu) = best.expect("at least one iterate is evaluated");
    Ok(solution_from(p, q, res, mu, iterations, status, trace))
}

fn solution_from(
    p: &LevelProblem,
    q: IpmIterate,
    res: f64,
    mu: f64,
    iterations: usize,
    status: LevelStatus,
    trace: Vec<TraceRow>,
) -> LevelSolution {
    let (t_e, t_i) = match p.norm {
        Norm::L0 => (q.t_e.clone(), q.t_i.clone()),
        Norm::L2 => (q.v_e.abs(), q.v_i.abs()),
    };
    LevelSolution {
        z: q.z.clone(),
        v_e: q.v_e.clone(),
        v_i: q.v_i.clone(),
        t_e,
        t_i,
        lam_e: q.lam_e.clone(),
        lam_i: q.lam_i.clone(),
        lam_p: q.lam_p.clone(),
        kkt_residual_norm: res,
        mu,
        iterations,
        status,
        iterate: q,
        trace,
    }
}

/// Factor `R` of a level Hessian and the value `R x_hat*` it is frozen at for
/// lower levels.
pub fn cost_to_constraint(h: &DMatrix<f64>, x_hat_star: &DVector<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let r = psd_factor(h)?;
    let value = &r * x_hat_star;
    Ok((r, value))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> IpmOptions {
        IpmOptions::default()
    }

    #[test]
    fn feasible_single_equality() {
        let p = LevelProblem::l0_equalities(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 0.5),
            DVector::from_element(1, 1.0),
        );
        let sol = solve_level(&p, &opts()).unwrap();
        assert!(sol.converged());
        assert!((sol.z[0] - 0.5).abs() < 1e-8);
        assert!(sol.v_e[0].abs() < 1e-8);
        assert!(sol.t_e[0] < 1e-8);
    }

    #[test]
    fn conflicting_pair_keeps_one_row() {
        // z = 1 and z = -1 with reweighting: the support oracle enumerates
        // both single-row supports, each costing log(2 + xi) + log(xi)
        let xi = 1e-6;
        let a = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, -1.0]);
        let mut omega = DVector::from_vec(vec![1.0, 1.5]);
        let mut sol = None;
        for _ in 0..20 {
            let p = LevelProblem::l0_equalities(a.clone(), b.clone(), omega.clone());
            let s = solve_level(&p, &opts()).unwrap();
            assert!(s.converged());
            omega = s.t_e.map(|t| 1.0 / (t + xi));
            sol = Some(s);
        }
        let sol = sol.unwrap();
        let mut v: Vec<f64> = sol.v_e.iter().map(|x| x.abs()).collect();
        v.sort_by(f64::total_cmp);
        assert!(v[0] < 1e-7);
        assert!((v[1] - 2.0).abs() < 1e-7);
        let cost: f64 = sol.v_e.iter().map(|x| (x.abs() + xi).ln()).sum();
        assert!((cost - ((2.0 + xi).ln() + xi.ln())).abs() < 1e-3);
    }

    #[test]
    fn inequality_rows_satisfied_where_possible() {
        // z >= 1 and z <= 3 are compatible, z >= 5 conflicts with z <= 3
        let a_i = DMatrix::from_column_slice(3, 1, &[1.0, -1.0, 1.0]);
        let b_i = DVector::from_vec(vec![1.0, -3.0, 5.0]);
        let mut p = LevelProblem::unconstrained(DMatrix::zeros(1, 1), DVector::zeros(1));
        p.a_i = a_i;
        p.b_i = b_i;
        p.omega_i = DVector::from_vec(vec![1.0, 10.0, 1.0]);
        let sol = solve_level(&p, &opts()).unwrap();
        assert!(sol.converged());
        assert!((sol.z[0] - 3.0).abs() < 1e-6, "z = {}", sol.z[0]);
        assert!(sol.v_i[0].abs() < 1e-7 && sol.v_i[1].abs() < 1e-7);
        assert!((sol.v_i[2] + 2.0).abs() < 1e-6);
    }

    #[test]
    fn l2_full_rank_least_squares() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 3.0]);
        let sol = solve_level_l2(&LevelProblem::l2_equalities(a.clone(), b.clone()), &opts()).unwrap();
        let exact = a.lu().solve(&b).unwrap();
        assert!((sol.z - exact).norm() < 1e-9);
    }

    #[test]
    fn l2_overdetermined_matches_normal_equations() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 1.0, 0.0]);
        let sol = solve_level_l2(&LevelProblem::l2_equalities(a.clone(), b.clone()), &opts()).unwrap();
        let z = (a.transpose() * &a).lu().solve(&(a.transpose() * &b)).unwrap();
        let v = &a * &z - &b;
        assert!((&sol.v_e - v).norm() < 1e-8);
    }

    #[test]
    fn trust_region_rows_clip_step() {
        let mut p = LevelProblem::l0_equalities(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 5.0),
            DVector::from_element(1, 1.0),
        );
        p.a_p = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        p.b_p = DVector::from_vec(vec![-0.5, -0.5]);
        let sol = solve_level(&p, &opts()).unwrap();
        assert!(sol.converged());
        assert!((sol.z[0] - 0.5).abs() < 1e-7);
        assert!((sol.v_e[0] + 4.5).abs() < 1e-7);
    }

    #[test]
    fn packing_round_trips_layout() {
        let p = LevelProblem::l0_equalities(
            DMatrix::from_element(2, 3, 1.0),
            DVector::from_element(2, 0.5),
            DVector::from_element(2, 1.0),
        );
        let q = p.initial_iterate();
        assert_eq!(q.with_values(&q.to_vec()), q);
        assert_eq!(q.len(), 3 + 2 * 7);
    }

    #[test]
    fn cost_rows_reproduce_quadratic() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let x = DVector::from_vec(vec![0.5, -1.0]);
        let (r, value) = cost_to_constraint(&h, &x).unwrap();
        assert!((r.transpose() * &r - &h).norm() < 1e-12);
        assert!((value.norm_squared() - x.dot(&(&h * &x))).abs() < 1e-12);
    }
}
