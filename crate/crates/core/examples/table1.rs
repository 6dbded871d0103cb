//! Solves the ten-level test-function hierarchy and prints each level's
//! slack next to the published values.

use sshqp::bench::{check_table1, table1, table1_start, REFERENCE_ITERATIONS, REFERENCE_SLACKS};
use sshqp::driver::{solve_planning, SolverOptions};

fn main() -> sshqp::Result<()> {
    let rep = solve_planning(&table1(), &table1_start(), &SolverOptions::default())?;
    for (l, lv) in rep.levels.iter().enumerate() {
        let v: Vec<String> = lv.v_star.iter().map(|x| format!("{:.2e}", x.abs())).collect();
        println!(
            "level {:>2}: |v*| = [{}]  reference {:?}  iterations {} (reference {})",
            l + 1,
            v.join(", "),
            REFERENCE_SLACKS[l],
            lv.iterations,
            REFERENCE_ITERATIONS[l]
        );
    }
    println!("{} outer iterations in {:.2?}", rep.iterations, rep.elapsed);
    for c in check_table1(&rep) {
        println!("{} {}: {}", if c.pass { "ok  " } else { "FAIL" }, c.name, c.detail);
    }
    Ok(())
}
