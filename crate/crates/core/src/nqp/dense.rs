//! Unreduced Newton system over every primal-dual variable. Used as the
//! cubic-cost baseline of the scaling benchmark.
use nalgebra::{DMatrix, DVector};

use super::{IpmIterate, KktResidual, LevelProblem};
use crate::error::{Error, Result};
use crate::model::Norm;

/// Start offsets of each block of the packed layout.
fn offsets(q: &IpmIterate) -> [usize; 18] {
    let mut out = [0; 18];
    let mut at = 0;
    for (i, f) in q.fields().iter().enumerate() {
        out[i] = at;
        at += f.len();
    }
    out
}

const Z: usize = 0;
const LAM_E: usize = 1;
const LAM_I: usize = 2;
const LAM_P: usize = 3;
const V_E: usize = 4;
const V_I: usize = 5;
const T_E: usize = 6;
const T_I: usize = 7;
const LT_EP: usize = 8;
const LT_EM: usize = 9;
const LT_IP: usize = 10;
const LT_IM: usize = 11;
const WT_EP: usize = 12;
const WT_EM: usize = 13;
const WT_IP: usize = 14;
const WT_IM: usize = 15;
const W_I: usize = 16;
const W_P: usize = 17;

/// Jacobian of the KKT residual with respect to the packed iterate.
pub fn unreduced_jacobian(p: &LevelProblem, q: &IpmIterate) -> DMatrix<f64> {
    let off = offsets(q);
    let n = q.len();
    let mut j = DMatrix::zeros(n, n);
    let mut block = |row: usize, col: usize, m: &DMatrix<f64>| {
        j.view_mut((off[row], off[col]), m.shape()).copy_from(m);
    };
    block(Z, Z, &p.h);
    block(Z, LAM_E, &-p.a_e.transpose());
    block(Z, LAM_I, &-p.a_i.transpose());
    block(Z, LAM_P, &-p.a_p.transpose());
    block(LAM_E, Z, &-&p.a_e);
    block(LAM_I, Z, &-&p.a_i);
    block(LAM_P, Z, &-&p.a_p);
    let mut diag = |row: usize, col: usize, d: &DVector<f64>| {
        for (k, &v) in d.iter().enumerate() {
            j[(off[row] + k, off[col] + k)] = v;
        }
    };
    let ones = |k: usize| DVector::from_element(k, 1.0);
    let (me, mi, mp) = (q.lam_e.len(), q.lam_i.len(), q.lam_p.len());
    diag(LAM_E, V_E, &ones(me));
    diag(LAM_I, V_I, &ones(mi));
    diag(LAM_I, W_I, &ones(mi));
    diag(LAM_P, W_P, &ones(mp));
    diag(W_I, LAM_I, &q.w_i);
    diag(W_I, W_I, &q.lam_i);
    diag(W_P, LAM_P, &q.w_p);
    diag(W_P, W_P, &q.lam_p);
    match p.norm {
        Norm::L0 => {
            for (v, lam, t, lp, lm, wp, wm, m) in
                [(V_E, LAM_E, T_E, LT_EP, LT_EM, WT_EP, WT_EM, me), (V_I, LAM_I, T_I, LT_IP, LT_IM, WT_IP, WT_IM, mi)]
            {
                diag(v, lp, &ones(m));
                diag(v, lm, &-ones(m));
                diag(v, lam, &ones(m));
                diag(t, lp, &-ones(m));
                diag(t, lm, &-ones(m));
                diag(lp, t, &ones(m));
                diag(lp, v, &-ones(m));
                diag(lp, wp, &-ones(m));
                diag(lm, t, &ones(m));
                diag(lm, v, &ones(m));
                diag(lm, wm, &-ones(m));
            }
            diag(WT_EP, LT_EP, &q.wt_e_plus);
            diag(WT_EP, WT_EP, &q.lt_e_plus);
            diag(WT_EM, LT_EM, &q.wt_e_minus);
            diag(WT_EM, WT_EM, &q.lt_e_minus);
            diag(WT_IP, LT_IP, &q.wt_i_plus);
            diag(WT_IP, WT_IP, &q.lt_i_plus);
            diag(WT_IM, LT_IM, &q.wt_i_minus);
            diag(WT_IM, WT_IM, &q.lt_i_minus);
        }
        Norm::L2 => {
            diag(V_E, V_E, &ones(me));
            diag(V_E, LAM_E, &ones(me));
            diag(V_I, V_I, &ones(mi));
            diag(V_I, LAM_I, &ones(mi));
        }
    }
    j
}

/// Newton direction from a dense LU of the unreduced system.
pub fn unreduced_step(p: &LevelProblem, q: &IpmIterate, k: &KktResidual) -> Result<IpmIterate> {
    let j = unreduced_jacobian(p, q);
    let dq = j.lu().solve(&-k.to_vec()).ok_or_else(|| Error::Interior("singular unreduced KKT system".into()))?;
    Ok(q.with_values(&dq))
}
