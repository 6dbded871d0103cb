//! KKT residual, condensed Newton system and back-substitution.
use nalgebra::{DMatrix, DVector};

use super::{IpmIterate, KktResidual, LevelProblem};
use crate::error::{Error, Result};
use crate::model::Norm;

/// Centering targets `sigma_X * mu_X` per complementarity family.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Centering {
    /// Auxiliary bounds of equality rows.
    pub te: f64,
    /// Auxiliary bounds of inequality rows.
    pub ti: f64,
    pub i: f64,
    /// Inequalities of previous levels and the trust region.
    pub p: f64,
}

impl Centering {
    pub fn uniform(target: f64) -> Self {
        Self { te: target, ti: target, i: target, p: target }
    }

    pub fn scaled(mu: &Centering, sigma: f64) -> Self {
        Self { te: sigma * mu.te, ti: sigma * mu.ti, i: sigma * mu.i, p: sigma * mu.p }
    }
}

fn mean_product(l: &DVector<f64>, w: &DVector<f64>) -> f64 {
    if l.is_empty() {
        0.0
    } else {
        l.dot(w) / l.len() as f64
    }
}

/// `mu_X = lambda_X^T w_X / dim(X)` per family.
pub fn family_mu(q: &IpmIterate) -> Centering {
    let te_n = q.lt_e_plus.len() * 2;
    let ti_n = q.lt_i_plus.len() * 2;
    let te =
        if te_n == 0 { 0.0 } else { (q.lt_e_plus.dot(&q.wt_e_plus) + q.lt_e_minus.dot(&q.wt_e_minus)) / te_n as f64 };
    let ti =
        if ti_n == 0 { 0.0 } else { (q.lt_i_plus.dot(&q.wt_i_plus) + q.lt_i_minus.dot(&q.wt_i_minus)) / ti_n as f64 };
    Centering { te, ti, i: mean_product(&q.lam_i, &q.w_i), p: mean_product(&q.lam_p, &q.w_p) }
}

/// Average complementarity over all pairs.
pub fn overall_mu(q: &IpmIterate) -> f64 {
    let pairs = q.complementarity_pairs();
    let count: usize = pairs.iter().map(|(l, _)| l.len()).sum();
    if count == 0 {
        return 0.0;
    }
    pairs.iter().map(|(l, w)| l.dot(w)).sum::<f64>() / count as f64
}

fn hadamard_minus(l: &DVector<f64>, w: &DVector<f64>, target: f64) -> DVector<f64> {
    l.component_mul(w).add_scalar(-target)
}

/// Gradient of the level Lagrangian; the `w` components are in the
/// multiplied form `lambda .* w - sigma mu`.
pub fn kkt_residual(p: &LevelProblem, q: &IpmIterate, c: &Centering) -> KktResidual {
    let mut k = IpmIterate::zeros_like(q);
    k.z = &p.h * &q.z + &p.grad_const - p.a_e.tr_mul(&q.lam_e) - p.a_i.tr_mul(&q.lam_i) - p.a_p.tr_mul(&q.lam_p);
    k.lam_e = -(&p.a_e * &q.z) + &p.b_e + &q.v_e;
    k.lam_i = -(&p.a_i * &q.z) + &p.b_i + &q.v_i + &q.w_i;
    k.lam_p = -(&p.a_p * &q.z) + &p.b_p + &q.w_p;
    k.w_i = hadamard_minus(&q.lam_i, &q.w_i, c.i);
    k.w_p = hadamard_minus(&q.lam_p, &q.w_p, c.p);
    match p.norm {
        Norm::L0 => {
            k.v_e = &q.lt_e_plus - &q.lt_e_minus + &q.lam_e;
            k.v_i = &q.lt_i_plus - &q.lt_i_minus + &q.lam_i;
            k.t_e = &p.omega_e - &q.lt_e_plus - &q.lt_e_minus;
            k.t_i = &p.omega_i - &q.lt_i_plus - &q.lt_i_minus;
            k.lt_e_plus = &q.t_e - &q.v_e - &q.wt_e_plus;
            k.lt_e_minus = &q.t_e + &q.v_e - &q.wt_e_minus;
            k.lt_i_plus = &q.t_i - &q.v_i - &q.wt_i_plus;
            k.lt_i_minus = &q.t_i + &q.v_i - &q.wt_i_minus;
            k.wt_e_plus = hadamard_minus(&q.lt_e_plus, &q.wt_e_plus, c.te);
            k.wt_e_minus = hadamard_minus(&q.lt_e_minus, &q.wt_e_minus, c.te);
            k.wt_i_plus = hadamard_minus(&q.lt_i_plus, &q.wt_i_plus, c.ti);
            k.wt_i_minus = hadamard_minus(&q.lt_i_minus, &q.wt_i_minus, c.ti);
        }
        Norm::L2 => {
            k.v_e = &q.v_e + &q.lam_e;
            k.v_i = &q.v_i + &q.lam_i;
        }
    }
    k
}

/// Adds the second-order predictor term `dlambda .* dw` to the multiplied rows.
pub fn add_corrector(k: &mut KktResidual, affine: &IpmIterate) {
    k.w_i += affine.lam_i.component_mul(&affine.w_i);
    k.w_p += affine.lam_p.component_mul(&affine.w_p);
    k.wt_e_plus += affine.lt_e_plus.component_mul(&affine.wt_e_plus);
    k.wt_e_minus += affine.lt_e_minus.component_mul(&affine.wt_e_minus);
    k.wt_i_plus += affine.lt_i_plus.component_mul(&affine.wt_i_plus);
    k.wt_i_minus += affine.lt_i_minus.component_mul(&affine.wt_i_minus);
}

/// `(w / lambda, lambda / w)` per row. Both are formed directly so that no
/// clipped ratio is ever inverted.
fn psi(w: &DVector<f64>, l: &DVector<f64>, what: &str) -> Result<(DVector<f64>, DVector<f64>)> {
    let mut ratio = DVector::zeros(w.len());
    let mut inverse = DVector::zeros(w.len());
    for i in 0..w.len() {
        if !(w[i] > 0.0 && l[i] > 0.0) {
            return Err(Error::Interior(format!("{what}[{i}]: w = {:e}, lambda = {:e}", w[i], l[i])));
        }
        ratio[i] = (w[i] / l[i]).clamp(f64::MIN_POSITIVE, f64::MAX);
        inverse[i] = (l[i] / w[i]).clamp(f64::MIN_POSITIVE, f64::MAX);
    }
    Ok((ratio, inverse))
}

/// `A^T diag(d) A` without forming the diagonal.
fn weighted_gram(a: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = a.clone();
    for (mut row, &di) in scaled.row_iter_mut().zip(d.iter()) {
        row *= di;
    }
    a.tr_mul(&scaled)
}

/// Per-row diagonals `w / lambda` and their inverses.
struct Diagonals {
    te_plus: (DVector<f64>, DVector<f64>),
    te_minus: (DVector<f64>, DVector<f64>),
    ti_plus: (DVector<f64>, DVector<f64>),
    ti_minus: (DVector<f64>, DVector<f64>),
    i: (DVector<f64>, DVector<f64>),
    p: (DVector<f64>, DVector<f64>),
}

fn diagonals(p: &LevelProblem, q: &IpmIterate) -> Result<Diagonals> {
    let l0 = p.norm == Norm::L0;
    let empty = || (DVector::zeros(0), DVector::zeros(0));
    Ok(Diagonals {
        te_plus: if l0 { psi(&q.wt_e_plus, &q.lt_e_plus, "w_tE+")? } else { empty() },
        te_minus: if l0 { psi(&q.wt_e_minus, &q.lt_e_minus, "w_tE-")? } else { empty() },
        ti_plus: if l0 { psi(&q.wt_i_plus, &q.lt_i_plus, "w_tI+")? } else { empty() },
        ti_minus: if l0 { psi(&q.wt_i_minus, &q.lt_i_minus, "w_tI-")? } else { empty() },
        i: psi(&q.w_i, &q.lam_i, "w_I")?,
        p: psi(&q.w_p, &q.lam_p, "w_P")?,
    })
}

/// Condensed Newton system `M dz = rhs`.
pub fn assemble_normal(p: &LevelProblem, q: &IpmIterate, k: &KktResidual) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let d = diagonals(p, q)?;
    let me = p.a_e.nrows();
    let mi = p.a_i.nrows();
    let mp = p.a_p.nrows();
    let mut coef_e = DVector::zeros(me);
    let mut rhs_e = DVector::zeros(me);
    let mut coef_i = DVector::zeros(mi);
    let mut rhs_i = DVector::zeros(mi);
    match p.norm {
        Norm::L0 => {
            for j in 0..me {
                let (pp, pm) = (d.te_plus.0[j], d.te_minus.0[j]);
                coef_e[j] = 4.0 / (pp + pm);
                let inner = 2.0 * k.lam_e[j] + pp * k.t_e[j] + k.wt_e_plus[j] / q.lt_e_plus[j]
                    - k.wt_e_minus[j] / q.lt_e_minus[j]
                    + k.lt_e_plus[j]
                    - k.lt_e_minus[j];
                rhs_e[j] = 2.0 / (pp + pm) * inner - k.t_e[j] - k.v_e[j];
            }
            for j in 0..mi {
                let (pp, pm, pi) = (d.ti_plus.0[j], d.ti_minus.0[j], d.i.0[j]);
                let denom = 4.0 * pi + pp + pm;
                coef_i[j] = 4.0 / denom;
                let inner = -2.0 * (pi * (-k.t_i[j] - k.v_i[j]) + k.w_i[j] / q.lam_i[j] - k.lam_i[j])
                    + pp * k.t_i[j]
                    + k.wt_i_plus[j] / q.lt_i_plus[j]
                    + k.lt_i_plus[j]
                    - k.wt_i_minus[j] / q.lt_i_minus[j]
                    - k.lt_i_minus[j];
                rhs_i[j] = 2.0 / denom * inner - k.t_i[j] - k.v_i[j];
            }
        }
        Norm::L2 => {
            for j in 0..me {
                coef_e[j] = 1.0;
                rhs_e[j] = k.lam_e[j] - k.v_e[j];
            }
            for j in 0..mi {
                let pi = d.i.0[j];
                coef_i[j] = 1.0 / (1.0 + pi);
                rhs_i[j] = (k.lam_i[j] - k.v_i[j] - k.w_i[j] / q.lam_i[j]) / (1.0 + pi);
            }
        }
    }
    let mut coef_p = DVector::zeros(mp);
    let mut rhs_p = DVector::zeros(mp);
    for j in 0..mp {
        coef_p[j] = d.p.1[j];
        rhs_p[j] = (-k.w_p[j] / q.lam_p[j] + k.lam_p[j]) * d.p.1[j];
    }
    let mut m = p.h.clone();
    if me > 0 {
        m += weighted_gram(&p.a_e, &coef_e);
    }
    if mi > 0 {
        m += weighted_gram(&p.a_i, &coef_i);
    }
    if mp > 0 {
        m += weighted_gram(&p.a_p, &coef_p);
    }
    let rhs = -&k.z + p.a_e.tr_mul(&rhs_e) + p.a_i.tr_mul(&rhs_i) + p.a_p.tr_mul(&rhs_p);
    Ok((m, rhs))
}

/// Auxiliary-bound part of the step for one row given its slack step `dv`.
/// Returns `(dt, dlambda+, dlambda-, dw+, dw-)`.
#[allow(clippy::too_many_arguments)]
fn bound_pair_step(
    dv: f64,
    k_t: f64,
    k_lp: f64,
    k_lm: f64,
    k_wp: f64,
    k_wm: f64,
    lp: f64,
    lm: f64,
    (psi_p, dp): (f64, f64),
    (psi_m, dm): (f64, f64),
) -> (f64, f64, f64, f64, f64) {
    let pp = -k_lp - k_wp / lp;
    let pm = -k_lm - k_wm / lm;
    let dt = (pp * dp + pm * dm - k_t + dv * (dp - dm)) / (dp + dm);
    let dl_p = dp * (pp - dt + dv);
    let dl_m = dm * (pm - dt - dv);
    let dw_p = -k_wp / lp - psi_p * dl_p;
    let dw_m = -k_wm / lm - psi_m * dl_m;
    (dt, dl_p, dl_m, dw_p, dw_m)
}

/// Full step `dq` from the primal step `dz` by back-substitution.
pub fn recover_full_step(p: &LevelProblem, q: &IpmIterate, k: &KktResidual, dz: &DVector<f64>) -> Result<IpmIterate> {
    let d = diagonals(p, q)?;
    let mut dq = IpmIterate::zeros_like(q);
    dq.z = dz.clone();
    let ae = &p.a_e * dz;
    let ai = &p.a_i * dz;
    let ap = &p.a_p * dz;
    match p.norm {
        Norm::L0 => {
            for j in 0..ae.len() {
                let dv = ae[j] - k.lam_e[j];
                let (dt, dlp, dlm, dwp, dwm) = bound_pair_step(
                    dv,
                    k.t_e[j],
                    k.lt_e_plus[j],
                    k.lt_e_minus[j],
                    k.wt_e_plus[j],
                    k.wt_e_minus[j],
                    q.lt_e_plus[j],
                    q.lt_e_minus[j],
                    (d.te_plus.0[j], d.te_plus.1[j]),
                    (d.te_minus.0[j], d.te_minus.1[j]),
                );
                dq.v_e[j] = dv;
                dq.t_e[j] = dt;
                dq.lt_e_plus[j] = dlp;
                dq.lt_e_minus[j] = dlm;
                dq.wt_e_plus[j] = dwp;
                dq.wt_e_minus[j] = dwm;
                dq.lam_e[j] = -k.v_e[j] - (dlp - dlm);
            }
            for j in 0..ai.len() {
                let (pp, pm, pi) = (d.ti_plus.0[j], d.ti_minus.0[j], d.i.0[j]);
                let gamma = 4.0 / (pp + pm);
                let p_plus = -k.lt_i_plus[j] - k.wt_i_plus[j] / q.lt_i_plus[j];
                let p_minus = -k.lt_i_minus[j] - k.wt_i_minus[j] / q.lt_i_minus[j];
                let c0 = (2.0 * p_plus - 2.0 * p_minus + (pm - pp) * k.t_i[j]) / (pp + pm);
                let dl = (-k.v_i[j] - c0 + gamma * k.lam_i[j] - gamma * k.w_i[j] / q.lam_i[j] - gamma * ai[j])
                    / (1.0 + gamma * pi);
                let dw = -k.w_i[j] / q.lam_i[j] - pi * dl;
                let dv = ai[j] - k.lam_i[j] - dw;
                let (dt, dlp, dlm, dwp, dwm) = bound_pair_step(
                    dv,
                    k.t_i[j],
                    k.lt_i_plus[j],
                    k.lt_i_minus[j],
                    k.wt_i_plus[j],
                    k.wt_i_minus[j],
                    q.lt_i_plus[j],
                    q.lt_i_minus[j],
                    (pp, d.ti_plus.1[j]),
                    (pm, d.ti_minus.1[j]),
                );
                dq.lam_i[j] = dl;
                dq.w_i[j] = dw;
                dq.v_i[j] = dv;
                dq.t_i[j] = dt;
                dq.lt_i_plus[j] = dlp;
                dq.lt_i_minus[j] = dlm;
                dq.wt_i_plus[j] = dwp;
                dq.wt_i_minus[j] = dwm;
            }
        }
        Norm::L2 => {
            for j in 0..ae.len() {
                dq.v_e[j] = ae[j] - k.lam_e[j];
                dq.lam_e[j] = -k.v_e[j] - dq.v_e[j];
            }
            for j in 0..ai.len() {
                let pi = d.i.0[j];
                let dv = (ai[j] - k.lam_i[j] + k.w_i[j] / q.lam_i[j] - pi * k.v_i[j]) / (1.0 + pi);
                dq.v_i[j] = dv;
                dq.lam_i[j] = -k.v_i[j] - dv;
                dq.w_i[j] = -k.w_i[j] / q.lam_i[j] - pi * dq.lam_i[j];
            }
        }
    }
    for j in 0..ap.len() {
        dq.w_p[j] = ap[j] - k.lam_p[j];
        dq.lam_p[j] = (-k.w_p[j] / q.lam_p[j] - dq.w_p[j]) * d.p.1[j];
    }
    Ok(dq)
}

/// Product of the KKT Jacobian at `q` with a direction `dq`.
pub fn apply_jacobian(p: &LevelProblem, q: &IpmIterate, dq: &IpmIterate) -> KktResidual {
    let mut out = IpmIterate::zeros_like(q);
    out.z = &p.h * &dq.z - p.a_e.tr_mul(&dq.lam_e) - p.a_i.tr_mul(&dq.lam_i) - p.a_p.tr_mul(&dq.lam_p);
    out.lam_e = -(&p.a_e * &dq.z) + &dq.v_e;
    out.lam_i = -(&p.a_i * &dq.z) + &dq.v_i + &dq.w_i;
    out.lam_p = -(&p.a_p * &dq.z) + &dq.w_p;
    out.w_i = q.lam_i.component_mul(&dq.w_i) + q.w_i.component_mul(&dq.lam_i);
    out.w_p = q.lam_p.component_mul(&dq.w_p) + q.w_p.component_mul(&dq.lam_p);
    match p.norm {
        Norm::L0 => {
            out.v_e = &dq.lt_e_plus - &dq.lt_e_minus + &dq.lam_e;
            out.v_i = &dq.lt_i_plus - &dq.lt_i_minus + &dq.lam_i;
            out.t_e = -&dq.lt_e_plus - &dq.lt_e_minus;
            out.t_i = -&dq.lt_i_plus - &dq.lt_i_minus;
            out.lt_e_plus = &dq.t_e - &dq.v_e - &dq.wt_e_plus;
            out.lt_e_minus = &dq.t_e + &dq.v_e - &dq.wt_e_minus;
            out.lt_i_plus = &dq.t_i - &dq.v_i - &dq.wt_i_plus;
            out.lt_i_minus = &dq.t_i + &dq.v_i - &dq.wt_i_minus;
            out.wt_e_plus = q.lt_e_plus.component_mul(&dq.wt_e_plus) + q.wt_e_plus.component_mul(&dq.lt_e_plus);
            out.wt_e_minus = q.lt_e_minus.component_mul(&dq.wt_e_minus) + q.wt_e_minus.component_mul(&dq.lt_e_minus);
            out.wt_i_plus = q.lt_i_plus.component_mul(&dq.wt_i_plus) + q.wt_i_plus.component_mul(&dq.lt_i_plus);
            out.wt_i_minus = q.lt_i_minus.component_mul(&dq.wt_i_minus) + q.wt_i_minus.component_mul(&dq.lt_i_minus);
        }
        Norm::L2 => {
            out.v_e = &dq.v_e + &dq.lam_e;
            out.v_i = &dq.v_i + &dq.lam_i;
        }
    }
    out
}

/// Largest `alpha` in `(0, 1]` keeping every sign-constrained pair above
/// `(1 - tau)` of its current value.
pub fn fraction_to_boundary(q: &IpmIterate, dq: &IpmIterate, tau: f64) -> f64 {
    let mut alpha: f64 = 1.0;
    for (x, dx) in q.sign_constrained().iter().zip(dq.sign_constrained().iter()) {
        for (&xi, &dxi) in x.iter().zip(dx.iter()) {
            if dxi < 0.0 {
                alpha = alpha.min(-tau * xi / dxi);
            }
        }
    }
    alpha
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nqp::LevelProblem;

    fn scalar_pair() -> (IpmIterate, IpmIterate) {
        let mut q = IpmIterate::empty(0, 0, 0, 1, Norm::L0);
        q.lam_p[0] = 1.0;
        q.w_p[0] = 1.0;
        let mut dq = q.clone();
        dq.lam_p[0] = 0.0;
        dq.w_p[0] = -2.0;
        (q, dq)
    }

    #[test]
    fn ftb_scalar() {
        let (q, dq) = scalar_pair();
        assert!((fraction_to_boundary(&q, &dq, 0.995) - 0.4975).abs() < 1e-15);
    }

    #[test]
    fn ftb_nonnegative_direction() {
        let (q, mut dq) = scalar_pair();
        dq.w_p[0] = 3.0;
        assert_eq!(fraction_to_boundary(&q, &dq, 0.995), 1.0);
    }

    #[test]
    fn no_constraints_gives_hessian_system() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let p = LevelProblem::unconstrained(h.clone(), DVector::from_vec(vec![1.0, -1.0]));
        let mut q = p.initial_iterate();
        q.z = DVector::from_vec(vec![0.3, 0.7]);
        let k = kkt_residual(&p, &q, &Centering::default());
        let (m, rhs) = assemble_normal(&p, &q, &k).unwrap();
        assert_eq!(m, h);
        assert_eq!(rhs, -k.z);
    }

    #[test]
    fn single_previous_row() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, -2.0]);
        let mut p = LevelProblem::unconstrained(DMatrix::zeros(2, 2), DVector::zeros(2));
        p.a_p = a.clone();
        p.b_p = DVector::from_vec(vec![0.5]);
        let mut q = p.initial_iterate();
        q.lam_p[0] = 3.0;
        q.w_p[0] = 0.25;
        let k = kkt_residual(&p, &q, &Centering::default());
        let (m, _) = assemble_normal(&p, &q, &k).unwrap();
        let expect = a.transpose() * &a * (3.0 / 0.25);
        assert!((m - expect).norm() < 1e-12);
    }

    #[test]
    fn bound_perturbation_shifts_both_rows() {
        let p = LevelProblem::l0_equalities(
            DMatrix::from_row_slice(2, 1, &[1.0, 2.0]),
            DVector::from_vec(vec![0.5, 1.0]),
            DVector::from_vec(vec![1.0, 1.0]),
        );
        let q = p.initial_iterate();
        let k0 = kkt_residual(&p, &q, &Centering::default());
        let mut q2 = q.clone();
        q2.t_e[1] += 0.125;
        let k1 = kkt_residual(&p, &q2, &Centering::default());
        assert!((k1.lt_e_plus[1] - k0.lt_e_plus[1] - 0.125).abs() < 1e-15);
        assert!((k1.lt_e_minus[1] - k0.lt_e_minus[1] - 0.125).abs() < 1e-15);
        assert_eq!(k1.t_e, k0.t_e);
    }

    #[test]
    fn non_positive_psi_is_interior_error() {
        let mut p = LevelProblem::unconstrained(DMatrix::identity(1, 1), DVector::zeros(1));
        p.a_p = DMatrix::from_element(1, 1, 1.0);
        p.b_p = DVector::from_element(1, -1.0);
        let mut q = p.initial_iterate();
        q.w_p[0] = 0.0;
        let k = kkt_residual(&p, &q, &Centering::default());
        assert!(matches!(assemble_normal(&p, &q, &k), Err(Error::Interior(_))));
    }
}
