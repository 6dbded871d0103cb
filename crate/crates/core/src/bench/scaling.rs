//! Per-iteration cost of the interior-point solver against the number of
//! selection-group members.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::arm::PlanarArm;
use super::scenario::continuous_select_problem;
use crate::driver::update_weights;
use crate::error::{Error, Result};
use crate::model::{level_rows, Norm};
use crate::nqp::dense::unreduced_step;
use crate::nqp::{family_mu, kkt_residual, solve_level, Centering, IpmOptions, LevelProblem};

pub const SCALING_SIZES: [usize; 5] = [25, 50, 100, 200, 400];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingPoint {
    pub m: usize,
    pub ipm_iterations: usize,
    /// Solve time divided by the iteration count, best of all repeats.
    pub per_iteration: Duration,
    /// One Newton step on the unreduced system, when measured.
    pub dense_step: Option<Duration>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub points: Vec<ScalingPoint>,
    pub slope: f64,
    pub dense_slope: Option<f64>,
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// The selection level of a three-link arm chasing `m` random targets,
/// linearized at a random posture and confined to a unit box.
pub fn scaling_problem(m: usize, seed: u64) -> Result<LevelProblem> {
    let arm = PlanarArm::uniform(3, 2.5);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let targets: Vec<Vector2<f64>> =
        (0..m).map(|_| Vector2::new(rng.random_range(-2.5..2.5), rng.random_range(-2.5..2.5))).collect();
    let q = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
    let h = continuous_select_problem(&arm, &targets, Norm::L0)?;
    let rows = level_rows(&h.levels[1], &q)?;
    let omega = update_weights(&rows.slack().abs(), 1e-6);
    let mut p = LevelProblem::l0_equalities(rows.jacobian.clone(), -&rows.residual, omega);
    p.a_p = DMatrix::from_fn(6, 3, |r, c| {
        if r % 3 == c {
            if r < 3 {
                1.0
            } else {
                -1.0
            }
        } else {
            0.0
        }
    });
    p.b_p = DVector::from_element(6, -1.0);
    Ok(p)
}

fn best_of<T>(repeats: usize, mut f: impl FnMut() -> Result<T>) -> Result<(Duration, T)> {
    let mut best = Duration::MAX;
    let mut last = None;
    for _ in 0..repeats.max(1) {
        let clock = Instant::now();
        let out = f()?;
        best = best.min(clock.elapsed());
        last = Some(out);
    }
    Ok((best, last.expect("at least one repeat")))
}

/// Times the solver on every size. With `dense` set, also times one
/// unreduced Newton step at the starting iterate of each size.
pub fn run_scaling(sizes: &[usize], repeats: usize, seed: u64, dense: bool) -> Result<ScalingReport> {
    if sizes.len() < 2 {
        return Err(Error::Domain("need at least two sizes for a slope".into()));
    }
    let opts = IpmOptions::default();
    let mut points = Vec::with_capacity(sizes.len());
    for &m in sizes {
        let p = scaling_problem(m, seed)?;
        let (time, sol) = best_of(repeats, || solve_level(&p, &opts))?;
        let iterations = sol.iterations.max(1);
        let dense_step = if dense {
            let q = p.initial_iterate();
            let k = kkt_residual(&p, &q, &Centering::scaled(&family_mu(&q), opts.sigma));
            let (t, _) = best_of(if m <= 100 { 3 } else { 1 }, || unreduced_step(&p, &q, &k))?;
            Some(t)
        } else {
            None
        };
        points.push(ScalingPoint {
            m,
            ipm_iterations: iterations,
            per_iteration: time / iterations as u32,
            dense_step,
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.m as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.per_iteration.as_secs_f64()).collect();
    let dense_slope = dense.then(|| {
        let yd: Vec<f64> = points.iter().map(|p| p.dense_step.unwrap_or_default().as_secs_f64()).collect();
        loglog_slope(&xs, &yd)
    });
    Ok(ScalingReport { slope: loglog_slope(&xs, &ys), dense_slope, points })
}
