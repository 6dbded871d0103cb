//! Three-link arm with two goals on one level, only one of them reachable.
//! The l0 level reaches the feasible goal and drops the other; the l2 level
//! settles between them.

use nalgebra::{DVector, Vector2};
use sshqp::bench::{arm_fk, plan_ags_problem, PlanarArm};
use sshqp::driver::{solve_planning, SolverOptions};
use sshqp::model::Norm;

fn main() -> sshqp::Result<()> {
    let arm = PlanarArm::uniform(3, 2.5);
    let goals = vec![vec![Vector2::new(1.5, 1.0), Vector2::new(3.5, 1.0)]];
    let q0 = DVector::from_element(3, 0.3);
    for norm in [Norm::L0, Norm::L2] {
        let rep = solve_planning(&plan_ags_problem(&arm, &goals, norm)?, &q0, &SolverOptions::default())?;
        let (tip, _) = arm_fk(&arm, &rep.x_star);
        let goal_level = &rep.levels[1];
        println!(
            "{norm:?}: tip ({:.4}, {:.4}), squared distances {:.3e} {:.3e}, kept {:?}, {} iterations",
            tip.x, tip.y, goal_level.v_star[0], goal_level.v_star[1], goal_level.kept, rep.iterations
        );
    }
    Ok(())
}
