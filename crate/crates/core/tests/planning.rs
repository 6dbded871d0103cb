use std::sync::Arc;

use nalgebra::{DVector, Vector2};
use proptest::prelude::*;
use sshqp::bench::{arm_fk, plan_ags_problem, table1, table1_start, EndEffector, PlanarArm};
use sshqp::driver::{solve_planning, Controller, SolverOptions};
use sshqp::model::{Affine, ConstraintBlock, Hierarchy, Level, Norm, TaskOffset};

/// Joint limits above a least-squares position goal, nothing below.
fn reach_for(arm: &PlanarArm, goal: Vector2<f64>) -> Hierarchy {
    let limits = ConstraintBlock::bounds(Affine::identity(arm.dof()), arm.lower(), arm.upper());
    let task = Arc::new(EndEffector(Arc::new(arm.clone())));
    let reach = ConstraintBlock::equality(TaskOffset::new(task, DVector::from_column_slice(goal.as_slice())));
    Hierarchy::new(arm.dof(), vec![Level::new(Norm::L2, vec![limits]), Level::new(Norm::L2, vec![reach])]).unwrap()
}

#[test]
fn prefixes_of_the_benchmark_keep_their_slacks() {
    let h = table1();
    let opts = SolverOptions::default();
    let full = solve_planning(&h, &table1_start(), &opts).unwrap();
    for j in 1..h.levels.len() {
        let prefix = Hierarchy::new(h.n, h.levels[..j].to_vec()).unwrap();
        let part = solve_planning(&prefix, &table1_start(), &opts).unwrap();
        for l in 0..j {
            let (a, b) = (&part.levels[l].v_star, &full.levels[l].v_star);
            assert!((a - b).amax() <= 1e-6, "prefix {j}, level {l}: {a} vs {b}");
        }
    }
}

#[test]
fn finished_levels_stay_at_their_slack() {
    let arm = PlanarArm::uniform(3, 2.5);
    let goals = vec![vec![Vector2::new(1.5, 1.0), Vector2::new(3.5, 1.0)]];
    let h = plan_ags_problem(&arm, &goals, Norm::L0).unwrap();
    let rep = solve_planning(&h, &DVector::from_element(3, 0.3), &SolverOptions::default()).unwrap();
    assert!(rep.converged);
    for lv in &rep.levels[..2] {
        for &i in &lv.kept {
            assert!((lv.v_final[i] - lv.v_star[i]).abs() <= 1e-6);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // Goals from bent postures, away from the singular stretched arm.
    #[test]
    fn control_converges_to_a_still_target(
        q1 in -1.2..1.2f64,
        bends in prop::collection::vec((0.3..1.2f64, prop::bool::ANY), 2),
        offset in prop::collection::vec(-0.15..0.15f64, 3),
    ) {
        let arm = PlanarArm::uniform(3, 2.5);
        let q_goal: Vec<f64> = std::iter::once(q1).chain(bends.iter().map(|&(b, neg)| if neg { -b } else { b })).collect();
        let q_goal = DVector::from_vec(q_goal);
        let (goal, _) = arm_fk(&arm, &q_goal);
        let h = reach_for(&arm, goal);
        let mut ctl = Controller::new(0.2, SolverOptions::default()).unwrap();
        // close enough that the radius does not cap the first steps
        let mut q = &q_goal + DVector::from_vec(offset);
        let error = |q: &DVector<f64>| (arm_fk(&arm, q).0 - goal).norm();
        let mut errors = vec![error(&q)];
        for _ in 0..200 {
            q = ctl.step(&h, &q).unwrap().x;
            errors.push(error(&q));
            if errors.last().unwrap() <= &1e-6 {
                break;
            }
        }
        prop_assert!(*errors.last().unwrap() <= 1e-6, "final error {:e}", errors.last().unwrap());
        for k in 0..errors.len() {
            if errors[k] > 1e-6 {
                let ahead = &errors[k + 1..(k + 6).min(errors.len())];
                prop_assert!(ahead.iter().any(|e| *e <= 0.5 * errors[k]), "no halving after step {}: {:?}", k, errors);
            }
        }
    }
}
