//! Loads a TOML problem and solves it in planning mode.
//!
//! cargo run --example solve_file -- problems/circle_then_height.toml

use std::path::PathBuf;

use sshqp::driver::{solve_planning, SolverOptions};
use sshqp::problem_file::load_problem;

fn main() -> sshqp::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("problems/circle_then_height.toml"));
    let problem = load_problem(&path)?;
    let rep = solve_planning(&problem.hierarchy, &problem.x0, &SolverOptions::default())?;
    println!("x* = {:?}", rep.x_star.as_slice());
    for (l, lv) in rep.levels.iter().enumerate() {
        println!("level {l}: v* = {:?}, kept {:?}", lv.v_star.as_slice(), lv.kept);
    }
    println!("converged {} after {} iterations", rep.converged, rep.iterations);
    Ok(())
}
