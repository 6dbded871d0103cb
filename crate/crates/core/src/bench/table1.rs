//! Ten-level hierarchy of disk, Rosenbrock and McCormick test functions.

use nalgebra::DVector;

use crate::driver::SolveReport;
use crate::model::{Affine, ConstraintBlock, Disk, Hierarchy, Level, McCormick, Norm, Rosenbrock};

/// Offset added to the McCormick row of level 9.
pub const MCCORMICK_OFFSET: f64 = 20.0;

/// Each level holds one pair of rows forming a selection group. The last
/// level is an l2 regularization of all ten variables.
pub fn table1() -> Hierarchy {
    let group = |b: ConstraintBlock, level: usize| b.in_group(level).labeled(format!("level {}", level + 1));
    let levels = vec![
        Level::new(Norm::L0, vec![group(ConstraintBlock::upper(Disk::new(vec![0, 1], vec![1.9, 2.0])), 0)]),
        Level::new(Norm::L0, vec![group(ConstraintBlock::equality(Rosenbrock::new(0, 1, vec![0.0, 5.0])), 1)]),
        Level::new(Norm::L0, vec![group(ConstraintBlock::equality(Disk::new(vec![0, 1], vec![0.9, 1.0])), 2)]),
        Level::new(Norm::L0, vec![group(ConstraintBlock::equality(Disk::new(vec![1, 2], vec![1.0, 1.1])), 3)]),
        Level::new(Norm::L0, vec![group(ConstraintBlock::upper(Disk::new(vec![3], vec![-1.0, -1.1])), 4)]),
        Level::new(Norm::L0, vec![group(ConstraintBlock::upper(Disk::new(vec![4], vec![-1.0, 1.0])), 5)]),
        Level::new(Norm::L0, vec![group(ConstraintBlock::equality(Disk::new(vec![5, 6, 7], vec![4.0, 5.0])), 6)]),
        Level::new(Norm::L0, vec![group(ConstraintBlock::equality(Rosenbrock::new(5, 6, vec![0.0, 4.0])), 7)]),
        Level::new(
            Norm::L0,
            vec![
                group(ConstraintBlock::equality(McCormick::new(8, 9, vec![MCCORMICK_OFFSET])), 8),
                group(ConstraintBlock::equality(Disk::new(vec![8, 9], vec![2.0])), 8),
            ],
        ),
        Level::new(Norm::L2, vec![ConstraintBlock::equality(Affine::identity(10)).labeled("level 10")]),
    ];
    Hierarchy::new(10, levels).expect("table1 hierarchy is well formed")
}

/// Start point of the benchmark.
pub fn table1_start() -> DVector<f64> {
    DVector::zeros(10)
}

/// Published slack magnitudes per row and iterations per level, for side by
/// side printing. Level 10 holds the norm of its ten slacks.
pub const REFERENCE_SLACKS: [&[f64]; 10] = [
    &[1.0e-8, 0.0],
    &[2.9e-4, 5.0],
    &[1.0, 0.9],
    &[2.4e-12, 0.1],
    &[1.0, 1.1],
    &[1.95, 0.05],
    &[1.0, 2.1e-14],
    &[2.6e-15, 4.0],
    &[18.1, 5.6e-15],
    &[3.2],
];
pub const REFERENCE_ITERATIONS: [usize; 10] = [2, 15, 1, 8, 1, 1, 1, 27, 7, 57];

/// Outer iteration budget of the benchmark.
pub const ITERATION_BUDGET: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &str, pass: bool, detail: String) -> Check {
    Check { name: name.to_string(), pass, detail }
}

/// Smallest first Rosenbrock row over the sphere `|x_6..x_8|^2 = r2`, by a
/// grid over `(x_6, x_7)` with `x_8` taking up the rest of the radius.
pub fn rosenbrock_on_sphere(r2: f64, cells: usize) -> f64 {
    let r = r2.sqrt();
    let mut best = f64::INFINITY;
    for i in 0..=cells {
        let a = -r + 2.0 * r * i as f64 / cells as f64;
        for j in 0..=cells {
            let b = -r + 2.0 * r * j as f64 / cells as f64;
            if a * a + b * b <= r2 {
                best = best.min((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2));
            }
        }
    }
    best
}

/// The sparsity and budget checks on a solve of [`table1`] from the origin.
pub fn check_table1(rep: &SolveReport) -> Vec<Check> {
    let v = |l: usize| rep.levels[l].v_star.as_slice().to_vec();
    let one_zero = |s: &[f64], tol: f64| s.iter().filter(|x| x.abs() <= tol).count() == 1;
    let mut out = Vec::new();
    if rep.levels.len() != 10 || rep.levels.iter().any(|l| l.v_star.is_empty()) {
        out.push(check("all levels finished", false, format!("{} levels reported", rep.levels.len())));
        return out;
    }
    let l1 = v(0);
    out.push(check("level 1 slacks vanish", l1.iter().all(|x| x.abs() <= 1e-6), format!("{l1:?}")));
    let l2 = v(1);
    out.push(check(
        "level 2 gap and first row",
        ((l2[1] - l2[0]) - 5.0).abs() <= 1e-8 && l2[0].abs() <= 1e-3,
        format!("gap {:e}, first {:e}", l2[1] - l2[0], l2[0]),
    ));
    let l3 = v(2);
    out.push(check("level 3 slacks", (l3[0] - 1.0).abs() <= 1e-5 && (l3[1] - 0.9).abs() <= 1e-5, format!("{l3:?}")));
    let l4 = v(3);
    out.push(check(
        "level 4 selects one disk",
        one_zero(&l4, 1e-6) && ((l4[0] - l4[1]).abs() - 0.1).abs() <= 1e-6,
        format!("{l4:?}"),
    ));
    let l5 = v(4);
    out.push(check(
        "level 5 slacks",
        (l5[0].abs() - 1.0).abs() <= 1e-5 && (l5[1].abs() - 1.1).abs() <= 1e-5,
        format!("{l5:?}"),
    ));
    let l7 = v(6);
    out.push(check(
        "level 7 selects one sphere",
        one_zero(&l7, 1e-6) && ((l7[0] - l7[1]).abs() - 1.0).abs() <= 1e-6,
        format!("{l7:?}"),
    ));
    let l8 = v(7);
    if l7[1].abs() <= 1e-6 {
        out.push(check("level 8 after the outer sphere", l8[0].abs() <= 1e-5, format!("first row {:e}", l8[0])));
    } else {
        let best = rosenbrock_on_sphere(4.0, 2000);
        out.push(check(
            "level 8 after the inner sphere",
            (l8[0] - best).abs() <= 1e-3,
            format!("first row {:e}, grid optimum {:e}", l8[0], best),
        ));
    }
    out.push(check(
        "iteration budget",
        rep.converged && rep.iterations <= ITERATION_BUDGET,
        format!("{} iterations, converged {}", rep.iterations, rep.converged),
    ));
    out
}
