//! Chases twenty falling targets. The l0 selection level commits to one
//! target at a time; the l2 level is pulled between all of them.

use nalgebra::DVector;
use sshqp::bench::{run_continuous_select, ControlSettings, FallingTargets, PlanarArm};
use sshqp::driver::SolverOptions;
use sshqp::model::Norm;

fn main() -> sshqp::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let arm = PlanarArm::uniform(3, 2.5);
    let scene = FallingTargets::seeded(&arm, 20, seed);
    let q0 = DVector::from_element(3, 0.3);
    for norm in [Norm::L0, Norm::L2] {
        let log =
            run_continuous_select(&arm, &scene, norm, &q0, &ControlSettings::falling(), &SolverOptions::default())?;
        let worst = log.iter().map(|s| s.solve_time).max().unwrap_or_default();
        println!(
            "{norm:?}: touched {} of 20 over {} ticks, slowest tick {worst:.2?}",
            log.last().map_or(0, |s| s.touched),
            log.len()
        );
    }
    Ok(())
}
