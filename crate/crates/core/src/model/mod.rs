//! Problem structure of a sparse hierarchical non-linear program.
//!
//! A [`Hierarchy`] is an ordered list of [`Level`]s. Each level stacks
//! [`ConstraintBlock`]s whose residuals are relaxed by a slack `v` and whose
//! slack is minimized either in the l0 sense (reweighted l1) or in the least
//! squares sense. Level 0, the trust region, is implicit and owned by the
//! driver.
//!
//! Every constraint row is brought into one canonical form: a residual `r(x)`
//! with either `r(x) = v` (equality) or `r(x) >= v` (inequality). An
//! inequality row is satisfied when `r >= 0`, in which case its slack is zero.

mod functions;

pub use functions::{Affine, Disk, McCormick, Rosenbrock, SquaredDistance, TaskMap, TaskOffset};

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Offset inside the logarithm of the filter coordinates.
pub const FILTER_EPS: f64 = 1e-9;

/// A vector valued function with analytic Jacobian.
///
/// Implementations must be pure functions of `x`.
pub trait ConstraintFn: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    /// Whether `x` of length `n` is a valid input.
    fn accepts(&self, _n: usize) -> bool {
        true
    }

    /// Returns `f(x)` and the `dim x n` Jacobian.
    fn eval(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>);

    /// `sum_i weights[i] * hess f_i(x)`, when second derivatives are known.
    fn weighted_hessian(&self, _x: &DVector<f64>, _weights: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L0,
    L2,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintKind {
    /// `f(x) = v`
    Equality,
    /// `f(x) >= 0`, relaxed to `f(x) >= v`.
    Lower,
    /// `f(x) <= 0`, relaxed to `f(x) <= -v`.
    Upper,
    /// `lower <= f(x) <= upper` entry-wise; infinite bounds produce no row.
    Bounds { lower: Vec<f64>, upper: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Equality,
    Inequality,
}

#[derive(Debug, Clone)]
pub struct ConstraintBlock {
    pub kind: ConstraintKind,
    pub function: Arc<dyn ConstraintFn>,
    /// Rows of blocks sharing a group id form one selection group.
    pub group: Option<usize>,
    pub label: String,
}

impl ConstraintBlock {
    pub fn new(kind: ConstraintKind, function: Arc<dyn ConstraintFn>) -> Self {
        Self { kind, function, group: None, label: String::new() }
    }

    pub fn equality(function: impl ConstraintFn + 'static) -> Self {
        Self::new(ConstraintKind::Equality, Arc::new(function))
    }

    pub fn upper(function: impl ConstraintFn + 'static) -> Self {
        Self::new(ConstraintKind::Upper, Arc::new(function))
    }

    pub fn lower(function: impl ConstraintFn + 'static) -> Self {
        Self::new(ConstraintKind::Lower, Arc::new(function))
    }

    pub fn bounds(function: impl ConstraintFn + 'static, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self::new(ConstraintKind::Bounds { lower, upper }, Arc::new(function))
    }

    pub fn in_group(mut self, group: usize) -> Self {
        self.group = Some(group);
        self
    }

    pub fn labeled(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.function.dim()
    }

    /// Canonical rows as `(entry, sign, offset, sense)`: `r = sign * f[entry] + offset`.
    fn row_specs(&self) -> Vec<(usize, f64, f64, Sense)> {
        let m = self.dim();
        match &self.kind {
            ConstraintKind::Equality => (0..m).map(|i| (i, 1.0, 0.0, Sense::Equality)).collect(),
            ConstraintKind::Lower => (0..m).map(|i| (i, 1.0, 0.0, Sense::Inequality)).collect(),
            ConstraintKind::Upper => (0..m).map(|i| (i, -1.0, 0.0, Sense::Inequality)).collect(),
            ConstraintKind::Bounds { lower, upper } => {
                let mut rows = Vec::new();
                for i in 0..m {
                    if lower[i].is_finite() {
                        rows.push((i, 1.0, -lower[i], Sense::Inequality));
                    }
                    if upper[i].is_finite() {
                        rows.push((i, -1.0, upper[i], Sense::Inequality));
                    }
                }
                rows
            }
        }
    }
}

/// Identifies one canonical row of a level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowInfo {
    pub block: usize,
    pub entry: usize,
    pub sign: f64,
    pub offset: f64,
    pub sense: Sense,
    pub group: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Level {
    pub norm: Norm,
    pub blocks: Vec<ConstraintBlock>,
}

impl Level {
    pub fn new(norm: Norm, blocks: Vec<ConstraintBlock>) -> Self {
        Self { norm, blocks }
    }

    /// Total constraint count `sum_b dim(b)`.
    pub fn constraint_count(&self) -> usize {
        self.blocks.iter().map(ConstraintBlock::dim).sum()
    }

    pub fn rows(&self) -> Vec<RowInfo> {
        let mut rows = Vec::new();
        for (b, block) in self.blocks.iter().enumerate() {
            for (entry, sign, offset, sense) in block.row_specs() {
                rows.push(RowInfo { block: b, entry, sign, offset, sense, group: block.group });
            }
        }
        rows
    }

    pub fn row_count(&self) -> usize {
        self.rows().len()
    }
}

/// Canonical residuals and gradients of all rows of a level at one point.
#[derive(Debug, Clone)]
pub struct LevelRows {
    pub info: Vec<RowInfo>,
    pub residual: DVector<f64>,
    pub jacobian: DMatrix<f64>,
}

impl LevelRows {
    pub fn len(&self) -> usize {
        self.info.len()
    }

    pub fn is_empty(&self) -> bool {
        self.info.is_empty()
    }

    /// Slack of the non-linear program at this point: the residual for
    /// equalities, `min(0, r)` for inequalities.
    pub fn slack(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.len(),
            self.info.iter().zip(self.residual.iter()).map(|(row, &r)| match row.sense {
                Sense::Equality => r,
                Sense::Inequality => r.min(0.0),
            }),
        )
    }
}

#[derive(Debug, Clone)]
pub struct Hierarchy {
    pub n: usize,
    pub levels: Vec<Level>,
}

impl Hierarchy {
    pub fn new(n: usize, levels: Vec<Level>) -> Result<Self> {
        let h = Self { n, levels };
        h.validate()?;
        Ok(h)
    }

    /// Checks the Jacobian shape of every block at the origin.
    pub fn validate(&self) -> Result<()> {
        let x = DVector::zeros(self.n);
        for (l, level) in self.levels.iter().enumerate() {
            for (b, block) in level.blocks.iter().enumerate() {
                if !block.function.accepts(self.n) {
                    return Err(Error::Dimension(format!(
                        "level {} block {} does not accept {} variables",
                        l + 1,
                        b,
                        self.n
                    )));
                }
                let (f, j) = block.function.eval(&x);
                if f.len() != block.dim() || j.nrows() != block.dim() || j.ncols() != self.n {
                    return Err(Error::Dimension(format!(
                        "level {} block {}: f has {} entries, J is {}x{}, expected {} and {}x{}",
                        l + 1,
                        b,
                        f.len(),
                        j.nrows(),
                        j.ncols(),
                        block.dim(),
                        block.dim(),
                        self.n
                    )));
                }
                if let ConstraintKind::Bounds { lower, upper } = &block.kind {
                    if lower.len() != block.dim() || upper.len() != block.dim() {
                        return Err(Error::Dimension(format!(
                            "level {} block {}: bounds must have {} entries",
                            l + 1,
                            b,
                            block.dim()
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Stacked raw evaluations `(f, J)` of all blocks of a level, in block order.
pub fn evaluate_level(level: &Level, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = x.len();
    let m = level.constraint_count();
    let mut f = DVector::zeros(m);
    let mut jac = DMatrix::zeros(m, n);
    let mut offset = 0;
    for (b, block) in level.blocks.iter().enumerate() {
        let (fb, jb) = block.function.eval(x);
        if jb.ncols() != n || jb.nrows() != fb.len() || fb.len() != block.dim() {
            return Err(Error::Dimension(format!("block {b} returned inconsistent shapes")));
        }
        if fb.iter().chain(jb.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("block {b} ({})", block.label)));
        }
        f.rows_mut(offset, fb.len()).copy_from(&fb);
        jac.view_mut((offset, 0), (fb.len(), n)).copy_from(&jb);
        offset += fb.len();
    }
    Ok((f, jac))
}

/// Canonical rows of a level at `x`.
pub fn level_rows(level: &Level, x: &DVector<f64>) -> Result<LevelRows> {
    let n = x.len();
    let info = level.rows();
    let evals = level
        .blocks
        .iter()
        .enumerate()
        .map(|(b, block)| {
            let (f, j) = block.function.eval(x);
            if j.ncols() != n || f.len() != block.dim() {
                return Err(Error::Dimension(format!("block {b} returned inconsistent shapes")));
            }
            if f.iter().chain(j.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("block {b} ({})", block.label)));
            }
            Ok((f, j))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut residual = DVector::zeros(info.len());
    let mut jacobian = DMatrix::zeros(info.len(), n);
    for (i, row) in info.iter().enumerate() {
        let (f, j) = &evals[row.block];
        residual[i] = row.sign * f[row.entry] + row.offset;
        jacobian.row_mut(i).copy_from(&(j.row(row.entry) * row.sign));
    }
    Ok(LevelRows { info, residual, jacobian })
}

/// `sum_i weights[i] * hess r_i(x)` over canonical rows, falling back to the
/// Gauss-Newton surrogate `|w_i| J_i^T J_i` for blocks without second derivatives.
pub fn rows_hessian(level: &Level, x: &DVector<f64>, rows: &LevelRows, weights: &DVector<f64>) -> DMatrix<f64> {
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    for (b, block) in level.blocks.iter().enumerate() {
        let mut block_w = DVector::zeros(block.dim());
        let mut any = false;
        for (i, row) in rows.info.iter().enumerate() {
            if row.block == b && weights[i] != 0.0 {
                block_w[row.entry] += row.sign * weights[i];
                any = true;
            }
        }
        if !any {
            continue;
        }
        match block.function.weighted_hessian(x, &block_w) {
            Some(hb) => h += hb,
            None => {
                for (i, row) in rows.info.iter().enumerate() {
                    if row.block == b && weights[i] != 0.0 {
                        let g = rows.jacobian.row(i);
                        h += g.transpose() * g * weights[i].abs();
                    }
                }
            }
        }
    }
    h
}

/// Violation measure of one level relative to a reference slack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub h: f64,
}

impl Violation {
    /// Filter coordinate `log(h + eps)`.
    pub fn log_coordinate(&self) -> f64 {
        (self.h + FILTER_EPS).ln()
    }
}

/// `h = sum |r - v_target|` for equalities and for inequalities held at a
/// negative reference slack; `max(0, -r)` for the remaining inequalities.
/// Pass zeros for a level that has not been solved.
pub fn violation_of_rows(rows: &LevelRows, v_target: &DVector<f64>) -> Violation {
    let h = rows
        .info
        .iter()
        .zip(rows.residual.iter().zip(v_target.iter()))
        .map(|(row, (&r, &vt))| match row.sense {
            Sense::Equality => (r - vt).abs(),
            Sense::Inequality if vt < 0.0 => (r - vt).abs(),
            Sense::Inequality => (-r).max(0.0),
        })
        .sum();
    Violation { h }
}

pub fn violation(level: &Level, x: &DVector<f64>, v_target: &DVector<f64>) -> Result<Violation> {
    let rows = level_rows(level, x)?;
    if v_target.len() != rows.len() {
        return Err(Error::Dimension(format!(
            "reference slack has {} entries, level has {} rows",
            v_target.len(),
            rows.len()
        )));
    }
    Ok(violation_of_rows(&rows, v_target))
}

/// Step-form linear model of one level, projected into a nullspace basis.
#[derive(Debug, Clone)]
pub struct LevelLinearization {
    pub sense: Vec<Sense>,
    /// `A`, the canonical Jacobian rows.
    pub a: DMatrix<f64>,
    /// `b = -r(x)`, so that the model residual is `A x_hat - b`.
    pub b: DVector<f64>,
    /// `A N`
    pub a_tilde: DMatrix<f64>,
    /// `b - A x_hat*`
    pub b_tilde: DVector<f64>,
    /// `1 / (|slack| + xi)`
    pub omega: DVector<f64>,
}

/// Linear models of every level at `x` relative to an accumulated step and basis.
pub fn linearize(
    h: &Hierarchy,
    x: &DVector<f64>,
    x_hat_star: &DVector<f64>,
    basis: &DMatrix<f64>,
    xi: f64,
) -> Result<Vec<LevelLinearization>> {
    if x.len() != h.n || x_hat_star.len() != h.n || basis.nrows() != h.n {
        return Err(Error::Dimension(format!(
            "linearize expects vectors of length {} and a basis with {} rows",
            h.n, h.n
        )));
    }
    h.levels
        .iter()
        .map(|level| {
            let rows = level_rows(level, x)?;
            let b = -&rows.residual;
            let a_tilde = &rows.jacobian * basis;
            let b_tilde = &b - &rows.jacobian * x_hat_star;
            let omega = rows.slack().map(|s| 1.0 / (s.abs() + xi));
            Ok(LevelLinearization {
                sense: rows.info.iter().map(|r| r.sense).collect(),
                a: rows.jacobian,
                b,
                a_tilde,
                b_tilde,
                omega,
            })
        })
        .collect()
}
