//! One l0 level solved by the interior-point method: three conflicting rows
//! on two variables. Reweighting with `1 / (|v| + xi)` pushes the conflict
//! onto a single row, where least squares spreads it over all three.

use nalgebra::{DMatrix, DVector};
use sshqp::driver::update_weights;
use sshqp::nqp::{solve_level, solve_level_l2, IpmOptions, LevelProblem};

fn sci(v: &DVector<f64>) -> String {
    format!("[{}]", v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", "))
}

fn main() -> sshqp::Result<()> {
    let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
    let b = DVector::from_vec(vec![1.0, 1.0, 3.0]);
    let mut omega = DVector::from_element(3, 1.0);
    for round in 0..4 {
        let sol =
            solve_level(&LevelProblem::l0_equalities(a.clone(), b.clone(), omega.clone()), &IpmOptions::default())?;
        println!("round {round}: z = {:.6?}, v = {}, {} iterations", sol.z.as_slice(), sci(&sol.v_e), sol.iterations);
        omega = update_weights(&sol.t_e, 1e-6);
    }
    let ls = solve_level_l2(&LevelProblem::l2_equalities(a, b), &IpmOptions::default())?;
    println!("l2: z = {:.6?}, v = {}", ls.z.as_slice(), sci(&ls.v_e));
    Ok(())
}
