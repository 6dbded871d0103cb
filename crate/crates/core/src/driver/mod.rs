//! Outer sequential loop.
//!
//! Planning certifies one level at a time: each iteration solves the
//! sub-problem of the finished levels plus the current one inside a trust
//! region, and the step filter decides whether to move. A level is finished
//! once the step vanishes or the radius collapses; its slack, pruned rows and
//! weights are then frozen. Control mode takes one unconditional step through
//! all levels with a constant radius.

mod control;
mod filter;

pub use control::{control_step, ControlOutcome, Controller};
pub use filter::{hsf_step, FilterOptions, FilterPoint, FilterState, Trial};

use std::fmt;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{level_rows, rows_hessian, Hierarchy, Level, LevelRows, Norm, Sense};
use crate::nqp::IpmOptions;
use crate::selection::prune_level;
use crate::shqp::{row_cost, solve_shqp, ShqpOptions, ShqpSolution, SubLevel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Offset of the reweighting `1 / (|v| + xi)`.
    pub xi: f64,
    /// Slack norm above which a level switches to Newton mode; also the
    /// feasibility threshold of selection pruning.
    pub eps: f64,
    /// Step norm at which the current level is finished.
    pub chi: f64,
    pub rho0: f64,
    /// Radius at which the current level is finished regardless of the step.
    pub rho_min: f64,
    /// Total outer iterations over all levels.
    pub max_iter: usize,
    pub active_tol: f64,
    /// Follow negative curvature of the current level at saddle points.
    pub escape: bool,
    /// Subtract the curvature of active rows of finished levels, weighted by
    /// their least-squares multipliers, from the Newton Hessian.
    pub constraint_curvature: bool,
    pub trace: bool,
    pub filter: FilterOptions,
    pub ipm: IpmOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            xi: 1e-6,
            eps: 1e-6,
            chi: 1e-7,
            rho0: 1.0,
            rho_min: 1e-12,
            max_iter: 1000,
            active_tol: 1e-7,
            escape: true,
            constraint_curvature: true,
            trace: false,
            filter: FilterOptions::default(),
            ipm: IpmOptions::default(),
        }
    }
}

impl SolverOptions {
    fn shqp(&self, rho: f64) -> ShqpOptions {
        ShqpOptions { rho, ipm: self.ipm, min_norm: true, active_tol: self.active_tol }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    GaussNewton,
    Newton,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::GaussNewton => "GN",
            Mode::Newton => "N",
        })
    }
}

/// Newton iff the slack is not yet within `eps` of zero.
pub fn select_mode(v_hat: &DVector<f64>, eps: f64) -> Mode {
    if v_hat.norm() > eps {
        Mode::Newton
    } else {
        Mode::GaussNewton
    }
}

/// `1 / (t + xi)` entry-wise.
pub fn update_weights(t: &DVector<f64>, xi: f64) -> DVector<f64> {
    t.map(|ti| 1.0 / (ti + xi))
}

/// Per-level weights; frozen levels keep the weights of their final iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub omega: Vec<DVector<f64>>,
    pub frozen: Vec<bool>,
}

impl Weights {
    pub fn new(h: &Hierarchy) -> Self {
        let omega = h.levels.iter().map(|l| DVector::from_element(l.row_count(), 1.0)).collect();
        Self { omega, frozen: vec![false; h.levels.len()] }
    }

    /// Reweights every unfrozen l0 level from its current slack.
    pub fn reweight(&mut self, levels: &[Level], slacks: &[DVector<f64>], xi: f64) {
        for (j, level) in levels.iter().enumerate() {
            if !self.frozen[j] && level.norm == Norm::L0 {
                self.omega[j] = update_weights(&slacks[j].abs(), xi);
            }
        }
    }

    pub fn freeze(&mut self, level: usize) {
        self.frozen[level] = true;
    }
}

/// Final state of one level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelReport {
    /// Non-linear slack of every row when the level was finished.
    pub v_star: DVector<f64>,
    /// Rows left after selection pruning.
    pub kept: Vec<usize>,
    /// Slack of every row at the returned point.
    pub v_final: DVector<f64>,
    pub iterations: usize,
    pub modes: Vec<Mode>,
    pub finished: bool,
    pub elapsed: Duration,
}

impl LevelReport {
    /// `||v*||_2` over the kept rows.
    pub fn kept_norm(&self) -> f64 {
        self.kept.iter().map(|&i| self.v_star[i] * self.v_star[i]).sum::<f64>().sqrt()
    }
}

/// One outer iteration of a planning solve.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub iter: usize,
    pub level: usize,
    pub rho: f64,
    pub step_norm: f64,
    pub accepted: bool,
    pub f: f64,
    pub h: f64,
    pub mode: Mode,
    pub escaped: bool,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub x_star: DVector<f64>,
    pub levels: Vec<LevelReport>,
    pub iterations: usize,
    pub converged: bool,
    /// Outer iterations whose sub-problem failed numerically.
    pub numerical_failures: usize,
    pub trace: Vec<TraceEntry>,
    pub elapsed: Duration,
}

/// Frozen data of a finished level.
#[derive(Debug, Clone)]
struct Finished {
    kept: Vec<usize>,
    v_star: DVector<f64>,
    omega: DVector<f64>,
    mode: Mode,
}

/// Sub-problem rows of one level at `x`.
struct LevelModel {
    sub: SubLevel,
    /// Row weights used in the Newton Hessian, zero outside `kept`.
    curvature_weights: DVector<f64>,
}

fn subset(rows: &LevelRows, kept: &[usize]) -> (Vec<Sense>, DMatrix<f64>, DVector<f64>) {
    let sense = kept.iter().map(|&i| rows.info[i].sense).collect();
    let a = DMatrix::from_fn(kept.len(), rows.jacobian.ncols(), |r, c| rows.jacobian[(kept[r], c)]);
    let b = DVector::from_iterator(kept.len(), kept.iter().map(|&i| -rows.residual[i]));
    (sense, a, b)
}

/// Newton row weights: `omega * sign(v)` on l0 rows violated by more than
/// `cut` and the slack itself on l2 rows.
fn curvature_weights(norm: Norm, slack: &DVector<f64>, omega: &DVector<f64>, kept: &[usize], cut: f64) -> DVector<f64> {
    let mut c = DVector::zeros(slack.len());
    for (k, &i) in kept.iter().enumerate() {
        c[i] = match norm {
            Norm::L0 if slack[i].abs() > cut => omega[k] * slack[i].signum(),
            Norm::L0 => 0.0,
            Norm::L2 => slack[i],
        };
    }
    c
}

#[allow(clippy::too_many_arguments)]
fn level_model(
    level: &Level,
    rows: &LevelRows,
    x: &DVector<f64>,
    kept: &[usize],
    omega: DVector<f64>,
    mode: Mode,
    escape: bool,
    cut: f64,
) -> LevelModel {
    let (sense, a, b) = subset(rows, kept);
    let slack = rows.slack();
    let c = curvature_weights(level.norm, &slack, &omega, kept, cut);
    let hessian = match mode {
        Mode::Newton => Some(rows_hessian(level, x, rows, &c)),
        Mode::GaussNewton => None,
    };
    LevelModel {
        sub: SubLevel { norm: level.norm, sense, a, b, omega, hessian, escape: escape && mode == Mode::Newton },
        curvature_weights: c,
    }
}

/// Subtracts `sum mu_k hess r_k` over the active rows of finished levels,
/// with `mu` the least-squares multipliers of the current level's gradient.
fn subtract_constraint_curvature(
    h: &mut DMatrix<f64>,
    own_gradient: &DVector<f64>,
    finished: &[(&Level, &LevelRows, &Finished)],
    x: &DVector<f64>,
    active_tol: f64,
) {
    let mut active: Vec<(usize, usize)> = Vec::new();
    for (j, (_, rows, fin)) in finished.iter().enumerate() {
        for &i in &fin.kept {
            if rows.info[i].sense == Sense::Equality || fin.v_star[i] < -active_tol {
                active.push((j, i));
            }
        }
    }
    if active.is_empty() {
        return;
    }
    let n = x.len();
    let a = DMatrix::from_fn(active.len(), n, |r, c| finished[active[r].0].1.jacobian[(active[r].1, c)]);
    let svd = a.transpose().svd(true, true);
    let Ok(mu) = svd.solve(own_gradient, 1e-10) else {
        return;
    };
    for (j, (level, rows, _)) in finished.iter().enumerate() {
        let mut w = DVector::zeros(rows.len());
        for (k, &(jj, i)) in active.iter().enumerate() {
            if jj == j {
                w[i] = mu[k];
            }
        }
        if w.iter().any(|v| *v != 0.0) {
            *h -= rows_hessian(level, x, rows, &w);
        }
    }
}

/// Summed deviation of finished levels from their frozen slack on kept rows.
fn deviation(rows: &[LevelRows], finished: &[Finished]) -> f64 {
    rows.iter()
        .zip(finished)
        .map(|(r, fin)| {
            fin.kept
                .iter()
                .map(|&i| {
                    let (res, vt) = (r.residual[i], fin.v_star[i]);
                    match r.info[i].sense {
                        Sense::Equality => (res - vt).abs(),
                        Sense::Inequality if vt < 0.0 => (res - vt).abs(),
                        Sense::Inequality => (-res).max(0.0),
                    }
                })
                .sum::<f64>()
        })
        .sum()
}

/// Violation of a level against zero slack.
fn violation_to_zero(rows: &LevelRows) -> f64 {
    rows.slack().iter().map(|s| s.abs()).sum()
}

fn evaluate(h: &Hierarchy, upto: usize, x: &DVector<f64>) -> Result<Vec<LevelRows>> {
    h.levels[..upto].iter().map(|l| level_rows(l, x)).collect()
}

/// Runs the planning loop from `x0` until every level is finished or the
/// iteration cap is hit.
pub fn solve_planning(h: &Hierarchy, x0: &DVector<f64>, opts: &SolverOptions) -> Result<SolveReport> {
    h.validate()?;
    if x0.len() != h.n {
        return Err(Error::Dimension(format!("x0 has {} entries, expected {}", x0.len(), h.n)));
    }
    let start = Instant::now();
    let p = h.levels.len();
    let mut x = x0.clone();
    let mut finished: Vec<Finished> = Vec::with_capacity(p);
    let mut reports: Vec<LevelReport> = Vec::with_capacity(p);
    let mut trace = Vec::new();
    let mut total = 0;
    let mut failures = 0;

    for l in 0..p {
        let level_start = Instant::now();
        let level = &h.levels[l];
        let mut rows = evaluate(h, l + 1, &x)?;
        let mut fs = FilterState::new(l, opts.rho0, deviation(&rows[..l], &finished));
        let mut v_hat: Option<DVector<f64>> = None;
        let mut iterations = 0;
        let mut modes = Vec::new();
        let mut done = false;

        while total < opts.max_iter {
            total += 1;
            iterations += 1;
            let all: Vec<usize> = (0..rows[l].len()).collect();
            let slack = rows[l].slack();
            // once curvature was needed it stays on until the level is finished
            let mode = match modes.last() {
                Some(Mode::Newton) => Mode::Newton,
                _ => select_mode(v_hat.as_ref().unwrap_or(&slack), opts.eps),
            };
            modes.push(mode);

            let mut subs: Vec<SubLevel> = Vec::with_capacity(l + 1);
            for (j, fin) in finished.iter().enumerate() {
                let m =
                    level_model(&h.levels[j], &rows[j], &x, &fin.kept, fin.omega.clone(), fin.mode, false, opts.eps);
                subs.push(m.sub);
            }
            let omega = match level.norm {
                Norm::L0 => update_weights(&slack.abs(), opts.xi),
                Norm::L2 => DVector::from_element(slack.len(), 1.0),
            };
            // rows of the level being certified keep their curvature down to zero slack
            let mut current = level_model(level, &rows[l], &x, &all, omega, mode, opts.escape, 0.0);
            if opts.constraint_curvature && mode == Mode::Newton {
                if let Some(hess) = current.sub.hessian.as_mut() {
                    let g = rows[l].jacobian.transpose() * &current.curvature_weights;
                    let fin: Vec<_> = (0..l).map(|j| (&h.levels[j], &rows[j], &finished[j])).collect();
                    subtract_constraint_curvature(hess, &g, &fin, &x, opts.active_tol);
                }
            }
            let model = current.sub.clone();
            subs.push(current.sub);

            let f_k = violation_to_zero(&rows[l]);
            let h_k = deviation(&rows[..l], &finished);
            let sol: ShqpSolution = match solve_shqp(&subs, h.n, &opts.shqp(fs.rho)) {
                Ok(s) => s,
                Err(_) => {
                    failures += 1;
                    fs.rho *= opts.filter.gamma_dec;
                    if fs.rho < opts.rho_min {
                        done = true;
                        break;
                    }
                    continue;
                }
            };
            let step = sol.step.clone();
            let step_norm = step.norm();
            let escaped = sol.levels[l].escaped;
            v_hat = Some(sol.levels[l].v.clone());

            if step_norm < opts.chi {
                if opts.trace {
                    trace.push(TraceEntry {
                        iter: total,
                        level: l,
                        rho: fs.rho,
                        step_norm,
                        accepted: false,
                        f: f_k,
                        h: h_k,
                        mode,
                        escaped,
                    });
                }
                done = true;
                break;
            }

            let x_c = &x + &step;
            let trial_rows = evaluate(h, l + 1, &x_c);
            let (accepted, next) = match &trial_rows {
                Ok(rc) => {
                    let predicted = model.model_cost(&DVector::zeros(h.n)) - model.model_cost(&step);
                    let cost = |r: &LevelRows| row_cost(level.norm, &model.sense, &model.omega, &r.residual);
                    let trial = Trial {
                        f_current: f_k,
                        h_current: h_k,
                        f_candidate: violation_to_zero(&rc[l]),
                        h_candidate: deviation(&rc[..l], &finished),
                        predicted,
                        actual: cost(&rows[l]) - cost(&rc[l]),
                    };
                    hsf_step(&fs, &trial, &opts.filter)
                }
                Err(_) => {
                    let mut next = fs.clone();
                    next.rho *= opts.filter.gamma_dec;
                    (false, next)
                }
            };
            if opts.trace {
                trace.push(TraceEntry {
                    iter: total,
                    level: l,
                    rho: fs.rho,
                    step_norm,
                    accepted,
                    f: f_k,
                    h: h_k,
                    mode,
                    escaped,
                });
            }
            fs = next;
            if accepted {
                x = x_c;
                rows = trial_rows?;
            } else {
                // the model missed: judge the mode by what the step really reached
                v_hat = trial_rows.ok().map(|rc| rc[l].slack());
            }
            if fs.rho < opts.rho_min {
                done = true;
                break;
            }
        }

        let slack = rows[l].slack();
        let kept = prune_level(&rows[l], &slack, opts.eps);
        let omega = match level.norm {
            Norm::L0 => {
                update_weights(&DVector::from_iterator(kept.len(), kept.iter().map(|&i| slack[i].abs())), opts.xi)
            }
            Norm::L2 => DVector::from_element(kept.len(), 1.0),
        };
        let kept_slack = DVector::from_iterator(kept.len(), kept.iter().map(|&i| slack[i]));
        finished.push(Finished {
            kept: kept.clone(),
            v_star: slack.clone(),
            omega,
            mode: select_mode(&kept_slack, opts.eps),
        });
        reports.push(LevelReport {
            v_star: slack.clone(),
            kept,
            v_final: slack,
            iterations,
            modes,
            finished: done,
            elapsed: level_start.elapsed(),
        });
        if !done {
            break;
        }
    }

    let converged = reports.len() == p && reports.iter().all(|r| r.finished);
    for (j, level) in h.levels.iter().enumerate() {
        let slack = level_rows(level, &x)?.slack();
        match reports.get_mut(j) {
            Some(r) => r.v_final = slack,
            None => reports.push(LevelReport {
                kept: (0..slack.len()).collect(),
                v_star: slack.clone(),
                v_final: slack,
                iterations: 0,
                modes: Vec::new(),
                finished: false,
                elapsed: Duration::ZERO,
            }),
        }
    }
    Ok(SolveReport {
        x_star: x,
        levels: reports,
        iterations: total,
        converged,
        numerical_failures: failures,
        trace,
        elapsed: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Affine, ConstraintBlock, Disk, Rosenbrock};

    fn one_level(level: Level, n: usize) -> Hierarchy {
        Hierarchy::new(n, vec![level]).unwrap()
    }

    #[test]
    fn weights_at_zero_and_one() {
        let w = update_weights(&DVector::from_vec(vec![0.0, 1.0 - 1e-6]), 1e-6);
        assert!((w[0] - 1e6).abs() < 1e-6);
        assert!((w[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reweighting_reaches_its_fixed_point() {
        // min |v| s.t. v = c: the slack never moves, so one update is the fixed point
        let c = 0.37;
        let mut omega = DVector::from_element(1, 1.0);
        for _ in 0..5 {
            omega = update_weights(&DVector::from_element(1, c), 1e-6);
        }
        assert!((omega[0] - 1.0 / (c + 1e-6)).abs() < 1e-12);
    }

    #[test]
    fn mode_threshold() {
        assert_eq!(select_mode(&DVector::zeros(3), 1e-6), Mode::GaussNewton);
        assert_eq!(select_mode(&DVector::from_vec(vec![1e-5, 0.0]), 1e-6), Mode::Newton);
    }

    #[test]
    fn start_at_solution() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let h = one_level(
            Level::new(Norm::L0, vec![ConstraintBlock::equality(Affine::new(a, DVector::from_vec(vec![3.0])))]),
            2,
        );
        let rep = solve_planning(&h, &DVector::from_vec(vec![1.0, 1.0]), &SolverOptions::default()).unwrap();
        assert!(rep.converged);
        assert!(rep.iterations <= 2);
        assert_eq!(rep.levels[0].v_star[0], 0.0);
    }

    #[test]
    fn rosenbrock_descent() {
        let h = one_level(Level::new(Norm::L0, vec![ConstraintBlock::equality(Rosenbrock::new(0, 1, vec![0.0]))]), 2);
        let rep = solve_planning(&h, &DVector::from_vec(vec![-1.2, 1.0]), &SolverOptions::default()).unwrap();
        assert!(rep.converged);
        assert!(rep.levels[0].v_star[0].abs() <= 1e-8, "{}", rep.levels[0].v_star);
        assert!(rep.iterations <= 60, "{} iterations", rep.iterations);
    }

    #[test]
    fn infeasible_circle_goes_to_nearest_point() {
        // x on the unit circle first, then x1 = 2 as well as possible
        let circle = ConstraintBlock::equality(Disk::new(vec![0, 1], vec![1.0]));
        let a = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let target = ConstraintBlock::equality(Affine::new(a, DVector::from_vec(vec![2.0])));
        let h =
            Hierarchy::new(2, vec![Level::new(Norm::L0, vec![circle]), Level::new(Norm::L0, vec![target])]).unwrap();
        let x0 = DVector::from_vec(vec![0.8, 0.1]);
        let rep = solve_planning(&h, &x0, &SolverOptions::default()).unwrap();
        assert!(rep.converged);
        assert!(rep.x_star[0].abs() < 1e-6 && (rep.x_star[1] - 1.0).abs() < 1e-6, "{}", rep.x_star);
        assert!(rep.levels[0].v_star[0].abs() < 1e-6);
        assert!(rep.iterations < 20);

        // without the curvature of the circle the steps leave it and the radius collapses
        let opts = SolverOptions { constraint_curvature: false, ..Default::default() };
        let flat = solve_planning(&h, &x0, &opts).unwrap();
        assert!(flat.levels[1].v_final[0].abs() > 0.99);
        assert!(flat.iterations > rep.iterations);
    }

    #[test]
    fn iteration_counts_add_up() {
        let circle = ConstraintBlock::equality(Disk::new(vec![0, 1], vec![1.0]));
        let reg = ConstraintBlock::equality(Affine::identity(2));
        let h = Hierarchy::new(2, vec![Level::new(Norm::L0, vec![circle]), Level::new(Norm::L2, vec![reg])]).unwrap();
        let rep = solve_planning(&h, &DVector::from_vec(vec![2.0, 0.5]), &SolverOptions::default()).unwrap();
        assert_eq!(rep.levels.iter().map(|l| l.iterations).sum::<usize>(), rep.iterations);
    }

    #[test]
    fn cap_gives_partial_report() {
        let h = one_level(Level::new(Norm::L0, vec![ConstraintBlock::equality(Rosenbrock::new(0, 1, vec![0.0]))]), 2);
        let opts = SolverOptions { max_iter: 2, ..Default::default() };
        let rep = solve_planning(&h, &DVector::from_vec(vec![-1.2, 1.0]), &opts).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 2);
        assert_eq!(rep.levels.len(), 1);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn weights_are_positive_and_order_reversing(t in prop::collection::vec(0.0..1e3f64, 1..10), xi in 1e-9..1e-2f64) {
                let tv = DVector::from_vec(t.clone());
                let w = update_weights(&tv, xi);
                for i in 0..t.len() {
                    prop_assert!(w[i] > 0.0 && w[i] <= 1.0 / xi);
                    prop_assert!(((t[i] + xi) * w[i] - 1.0).abs() <= 1e-12);
                    for k in 0..t.len() {
                        if t[i] < t[k] {
                            prop_assert!(w[i] >= w[k]);
                        }
                    }
                }
            }
        }
    }
}
