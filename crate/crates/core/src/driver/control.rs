//! Control mode: one unconditional step per tick with a constant radius.

use nalgebra::DVector;

use super::{level_model, select_mode, subtract_constraint_curvature, update_weights, Finished, Mode, SolverOptions};
use crate::error::{Error, Result};
use crate::model::{level_rows, Hierarchy, LevelRows, Norm};
use crate::shqp::solve_shqp;

#[derive(Debug, Clone)]
pub struct ControlOutcome {
    pub x: DVector<f64>,
    pub step: DVector<f64>,
    /// The sub-problem failed and `x` is the previous point.
    pub held: bool,
    pub modes: Vec<Mode>,
}

/// Keeps the model slack of the previous tick for mode selection.
#[derive(Debug, Clone)]
pub struct Controller {
    pub rho: f64,
    pub opts: SolverOptions,
    v_hat: Vec<Option<DVector<f64>>>,
}

impl Controller {
    pub fn new(rho: f64, opts: SolverOptions) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::Domain(format!("control radius must be positive, got {rho}")));
        }
        Ok(Self { rho, opts, v_hat: Vec::new() })
    }

    /// Takes one step from `x`. Levels whose row count changed since the
    /// previous tick fall back to the non-linear slack for mode selection.
    pub fn step(&mut self, h: &Hierarchy, x: &DVector<f64>) -> Result<ControlOutcome> {
        if x.len() != h.n {
            return Err(Error::Dimension(format!("x has {} entries, expected {}", x.len(), h.n)));
        }
        let rows: Vec<LevelRows> = h.levels.iter().map(|l| level_rows(l, x)).collect::<Result<_>>()?;
        self.v_hat.resize(h.levels.len(), None);
        let mut modes = Vec::with_capacity(rows.len());
        let mut subs = Vec::with_capacity(rows.len());
        // every level counts as settled at its current slack for the levels below it
        let mut above: Vec<Finished> = Vec::with_capacity(rows.len());
        for (j, (level, r)) in h.levels.iter().zip(&rows).enumerate() {
            let slack = r.slack();
            let v_hat = self.v_hat[j].as_ref().filter(|v| v.len() == slack.len()).unwrap_or(&slack);
            let mode = select_mode(v_hat, self.opts.eps);
            let omega = match level.norm {
                Norm::L0 => update_weights(&slack.abs(), self.opts.xi),
                Norm::L2 => DVector::from_element(slack.len(), 1.0),
            };
            let all: Vec<usize> = (0..r.len()).collect();
            let mut m = level_model(level, r, x, &all, omega.clone(), mode, false, 0.0);
            if self.opts.constraint_curvature && mode == Mode::Newton {
                if let Some(hess) = m.sub.hessian.as_mut() {
                    let g = r.jacobian.transpose() * &m.curvature_weights;
                    let fin: Vec<_> = (0..j).map(|k| (&h.levels[k], &rows[k], &above[k])).collect();
                    subtract_constraint_curvature(hess, &g, &fin, x, self.opts.active_tol);
                }
            }
            subs.push(m.sub);
            modes.push(mode);
            above.push(Finished { kept: all, v_star: slack, omega, mode });
        }
        match solve_shqp(&subs, h.n, &self.opts.shqp(self.rho)) {
            Ok(sol) => {
                self.v_hat = sol.levels.iter().map(|l| Some(l.v.clone())).collect();
                Ok(ControlOutcome { x: x + &sol.step, step: sol.step, held: false, modes })
            }
            Err(Error::Domain(_)) | Err(Error::Interior(_)) | Err(Error::Asymmetric(_)) => {
                self.v_hat.clear();
                Ok(ControlOutcome { x: x.clone(), step: DVector::zeros(h.n), held: true, modes })
            }
            Err(e) => Err(e),
        }
    }
}

/// One step without memory of earlier ticks.
pub fn control_step(h: &Hierarchy, x: &DVector<f64>, rho: f64, opts: &SolverOptions) -> Result<ControlOutcome> {
    Controller::new(rho, *opts)?.step(h, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Affine, ConstraintBlock, Level};
    use nalgebra::DMatrix;

    #[test]
    fn step_is_capped_by_the_radius() {
        let target =
            ConstraintBlock::equality(Affine::new(DMatrix::identity(2, 2), DVector::from_vec(vec![3.0, 0.05])));
        let h = Hierarchy::new(2, vec![Level::new(Norm::L0, vec![target])]).unwrap();
        let out = control_step(&h, &DVector::zeros(2), 0.1, &SolverOptions::default()).unwrap();
        assert!(!out.held);
        assert!((out.x[0] - 0.1).abs() < 1e-6 && (out.x[1] - 0.05).abs() < 1e-6, "{}", out.x);
    }

    #[test]
    fn non_positive_radius_is_an_error() {
        assert!(Controller::new(0.0, SolverOptions::default()).is_err());
    }
}
