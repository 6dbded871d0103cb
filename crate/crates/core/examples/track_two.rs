//! Tracks two counter-moving targets that cannot both be reached, with and
//! without the lightly weighted sparse posture rows.

use nalgebra::DVector;
use sshqp::bench::{run_track_two, ControlSettings, PlanarArm, TrackTwo};
use sshqp::driver::SolverOptions;

fn main() -> sshqp::Result<()> {
    let arm = PlanarArm::uniform(3, 2.5);
    let scene = TrackTwo::default();
    let settings = ControlSettings::default();
    let q0 = DVector::from_element(3, 0.3);
    for sparse in [false, true] {
        let log = run_track_two(&arm, &scene, &q0, &settings, sparse, &SolverOptions::default())?;
        let tracked = log.iter().filter(|s| s.errors[0].min(s.errors[1]) <= 1e-4).count();
        let moving = log.iter().map(|s| s.moving_joints).sum::<usize>() as f64 / log.len() as f64;
        println!(
            "sparse posture {sparse}: {tracked}/{} ticks on a target, {moving:.2} joints moving per tick",
            log.len()
        );
        for s in log.iter().step_by(log.len() / 8) {
            println!("  t {:5.2}  errors {:.2e} {:.2e}", s.t, s.errors[0], s.errors[1]);
        }
    }
    Ok(())
}
