#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sshqp::model::Norm;
use sshqp::nqp::{kkt_residual, Centering, IpmIterate, KktResidual, LevelProblem};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn normal_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-scale..scale))
}

fn log_uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(lo..hi).exp())
}

pub fn random_problem(rng: &mut ChaCha8Rng, n_r: usize, me: usize, mi: usize, mp: usize, norm: Norm) -> LevelProblem {
    let b = normal_matrix(rng, n_r, n_r);
    let h = b.transpose() * &b * rng.random_range(0.0..1.0);
    let mut p = LevelProblem::unconstrained(h, normal_vector(rng, n_r, 1.0));
    p.norm = norm;
    p.a_e = normal_matrix(rng, me, n_r);
    p.b_e = normal_vector(rng, me, 2.0);
    p.omega_e = log_uniform(rng, me, -2.0, 2.0);
    p.a_i = normal_matrix(rng, mi, n_r);
    p.b_i = normal_vector(rng, mi, 2.0);
    p.omega_i = log_uniform(rng, mi, -2.0, 2.0);
    p.a_p = normal_matrix(rng, mp, n_r);
    // previous-level rows satisfied with margin at z = 0
    p.b_p = -log_uniform(rng, mp, -1.0, 1.0);
    if norm == Norm::L2 {
        p.omega_e.fill(1.0);
        p.omega_i.fill(1.0);
    }
    p
}

/// Strictly interior iterate with all entries random.
pub fn random_iterate(rng: &mut ChaCha8Rng, p: &LevelProblem) -> IpmIterate {
    let mut q = p.initial_iterate();
    for f in q.fields_mut() {
        f.iter_mut().for_each(|x| *x = rng.random_range(-1.5..1.5));
    }
    for f in [
        &mut q.lt_e_plus,
        &mut q.lt_e_minus,
        &mut q.lt_i_plus,
        &mut q.lt_i_minus,
        &mut q.lam_i,
        &mut q.lam_p,
        &mut q.wt_e_plus,
        &mut q.wt_e_minus,
        &mut q.wt_i_plus,
        &mut q.wt_i_minus,
        &mut q.w_i,
        &mut q.w_p,
    ] {
        f.iter_mut().for_each(|x| *x = rng.random_range(-3.0..1.0f64).exp());
    }
    q
}

/// Jacobian of the KKT residual by unit forward differences. Every entry of
/// the residual is at most bilinear with no squared variable, so unit steps
/// are exact up to rounding.
pub fn difference_jacobian(p: &LevelProblem, q: &IpmIterate, c: &Centering) -> DMatrix<f64> {
    let base = kkt_residual(p, q, c).to_vec();
    let x = q.to_vec();
    let n = x.len();
    let mut j = DMatrix::zeros(n, n);
    for col in 0..n {
        let mut xp = x.clone();
        xp[col] += 1.0;
        let kp = kkt_residual(p, &q.with_values(&xp), c).to_vec();
        j.set_column(col, &(kp - &base));
    }
    j
}

/// Newton direction from the unreduced system assembled by differences.
pub fn oracle_step(p: &LevelProblem, q: &IpmIterate, k: &KktResidual) -> IpmIterate {
    let j = difference_jacobian(p, q, &Centering::default());
    let dq = j.lu().solve(&-k.to_vec()).expect("oracle system is singular");
    q.with_values(&dq)
}

/// Barrier Lagrangian of a level.
pub fn lagrangian(p: &LevelProblem, q: &IpmIterate, c: &Centering) -> f64 {
    let z = &q.z;
    let mut l = 0.5 * z.dot(&(&p.h * z)) + p.grad_const.dot(z);
    let logsum = |w: &DVector<f64>| w.iter().map(|x| x.ln()).sum::<f64>();
    l -= c.i * logsum(&q.w_i) + c.p * logsum(&q.w_p);
    l -= q.lam_e.dot(&(&p.a_e * z - &p.b_e - &q.v_e));
    l -= q.lam_i.dot(&(&p.a_i * z - &p.b_i - &q.v_i - &q.w_i));
    l -= q.lam_p.dot(&(&p.a_p * z - &p.b_p - &q.w_p));
    match p.norm {
        Norm::L0 => {
            l += p.omega_e.dot(&q.t_e) + p.omega_i.dot(&q.t_i);
            l -= c.te * (logsum(&q.wt_e_plus) + logsum(&q.wt_e_minus));
            l -= c.ti * (logsum(&q.wt_i_plus) + logsum(&q.wt_i_minus));
            l -= q.lt_e_plus.dot(&(&q.t_e - &q.v_e - &q.wt_e_plus));
            l -= q.lt_e_minus.dot(&(&q.t_e + &q.v_e - &q.wt_e_minus));
            l -= q.lt_i_plus.dot(&(&q.t_i - &q.v_i - &q.wt_i_plus));
            l -= q.lt_i_minus.dot(&(&q.t_i + &q.v_i - &q.wt_i_minus));
        }
        Norm::L2 => {
            l += 0.5 * (q.v_e.norm_squared() + q.v_i.norm_squared());
        }
    }
    l
}

/// Central-difference gradient of the Lagrangian in the packed layout.
pub fn lagrangian_gradient(p: &LevelProblem, q: &IpmIterate, c: &Centering) -> IpmIterate {
    let x = q.to_vec();
    let h = 1e-6;
    let g = DVector::from_fn(x.len(), |i, _| {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        (lagrangian(p, &q.with_values(&xp), c) - lagrangian(p, &q.with_values(&xm), c)) / (2.0 * h)
    });
    q.with_values(&g)
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}
