//! Time per interior-point iteration against the number of sparse rows,
//! next to one step of the unreduced dense system.

use sshqp::bench::{run_scaling, SCALING_SIZES};

fn main() -> sshqp::Result<()> {
    let rep = run_scaling(&SCALING_SIZES, 10, 7, true)?;
    for p in &rep.points {
        println!(
            "m {:>3}: {:>2} iterations, {:>10.2?} per iteration, dense step {:?}",
            p.m, p.ipm_iterations, p.per_iteration, p.dense_step
        );
    }
    println!("log-log slope {:.2}, dense {:.2}", rep.slope, rep.dense_slope.unwrap_or(f64::NAN));
    Ok(())
}
