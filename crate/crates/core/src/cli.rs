//! Command-line front end.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::Serialize;

use crate::bench::{
    check_table1, run_continuous_select, run_scaling, run_track_two, table1, table1_start, ControlSettings,
    FallingTargets, PlanarArm, TrackTwo, REFERENCE_ITERATIONS, REFERENCE_SLACKS, SCALING_SIZES,
};
use crate::driver::{solve_planning, Controller, SolveReport, SolverOptions};
use crate::error::Error;
use crate::model::Norm;
use crate::problem_file::{load_problem, RunMode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "sshqp", version, about = "Sparse hierarchical non-linear programming")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,
    /// Initial trust radius; the constant radius in control mode.
    #[arg(long, global = true)]
    pub rho0: Option<f64>,
    #[arg(long, global = true)]
    pub xi: Option<f64>,
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    #[arg(long, global = true)]
    pub chi: Option<f64>,
    /// Print every outer iteration.
    #[arg(long, global = true)]
    pub trace: bool,
    #[arg(long, global = true, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Plan,
    Control,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormArg {
    L0,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioName {
    TrackTwo,
    ContinuousSelect,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a problem file.
    Solve { path: PathBuf },
    /// Solve the ten-level test-function hierarchy and check its sparsity.
    BenchTable1,
    /// Run a planar-arm control scenario and write its time series.
    Scenario {
        #[arg(value_enum)]
        name: ScenarioName,
        /// Norm of the selection level of the falling-targets scenario.
        #[arg(long, value_enum, default_value = "l0")]
        norm: NormArg,
        /// Track without the lightly weighted sparse posture rows.
        #[arg(long)]
        plain: bool,
    },
    /// Time the solver against the size of a selection group.
    Scaling {
        #[arg(long, default_value_t = 20)]
        repeats: usize,
        /// Skip the unreduced baseline.
        #[arg(long)]
        no_dense: bool,
    },
}

/// Six significant digits.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.5e}");
    let mag: i32 = sci.rsplit('e').next().and_then(|e| e.parse().ok()).unwrap_or(0);
    if (-4..6).contains(&mag) {
        format!("{:.*}", (5 - mag) as usize, x)
    } else {
        sci
    }
}

fn options(common: &Common, base: SolverOptions) -> SolverOptions {
    let mut o = base;
    if let Some(v) = common.max_iter {
        o.max_iter = v;
    }
    if let Some(v) = common.rho0 {
        o.rho0 = v;
    }
    if let Some(v) = common.xi {
        o.xi = v;
    }
    if let Some(v) = common.eps {
        o.eps = v;
    }
    if let Some(v) = common.chi {
        o.chi = v;
    }
    o.trace = true;
    o
}

fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    for r in rows {
        w.serialize(r).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    w.flush().map_err(|e| format!("{}: {e}", path.display()))
}

fn exit_for(e: &Error) -> i32 {
    match e {
        Error::Parse { .. } | Error::Io(_) | Error::Dimension(_) => EXIT_INPUT,
        Error::Domain(_) | Error::Asymmetric(_) | Error::Interior(_) => EXIT_NUMERICAL,
    }
}

#[derive(Serialize)]
struct SummaryRow {
    level: usize,
    norm: String,
    slack_norm: f64,
    iterations: usize,
    finished: bool,
}

#[derive(Serialize)]
struct TraceRow {
    iter: usize,
    level: usize,
    rho: f64,
    step_norm: f64,
    accepted: bool,
    f: f64,
    h: f64,
    mode: String,
    escaped: bool,
}

#[derive(Serialize)]
struct ValueRow {
    index: usize,
    value: f64,
}

fn write_report(dir: &Path, h_norms: &[Norm], rep: &SolveReport) -> Result<(), String> {
    let summary: Vec<SummaryRow> = rep
        .levels
        .iter()
        .enumerate()
        .map(|(l, lv)| SummaryRow {
            level: l + 1,
            norm: format!("{:?}", h_norms[l]),
            slack_norm: lv.kept_norm(),
            iterations: lv.iterations,
            finished: lv.finished,
        })
        .collect();
    write_csv(dir, "summary.csv", &summary)?;
    let trace: Vec<TraceRow> = rep
        .trace
        .iter()
        .map(|t| TraceRow {
            iter: t.iter,
            level: t.level + 1,
            rho: t.rho,
            step_norm: t.step_norm,
            accepted: t.accepted,
            f: t.f,
            h: t.h,
            mode: t.mode.to_string(),
            escaped: t.escaped,
        })
        .collect();
    write_csv(dir, "trace.csv", &trace)?;
    let x: Vec<ValueRow> = rep.x_star.iter().enumerate().map(|(index, &value)| ValueRow { index, value }).collect();
    write_csv(dir, "x.csv", &x)
}

fn print_summary(rep: &SolveReport) {
    println!("{:>5}  {:>12}  {:>6}", "level", "|v*|", "iter");
    for (l, lv) in rep.levels.iter().enumerate() {
        println!("{:>5}  {:>12}  {:>6}", l + 1, sig6(lv.kept_norm()), lv.iterations);
    }
    println!("{:>5}  {:>12}  {:>6}", "total", "", rep.iterations);
}

fn print_trace(rep: &SolveReport) {
    for t in &rep.trace {
        eprintln!(
            "iter {} level {} rho {} step {} {} f {} h {} {}",
            t.iter,
            t.level + 1,
            sig6(t.rho),
            sig6(t.step_norm),
            if t.accepted { "accept" } else { "reject" },
            sig6(t.f),
            sig6(t.h),
            t.mode
        );
    }
}

fn cmd_solve(common: &Common, path: &Path) -> i32 {
    let problem = match load_problem(path) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INPUT;
        }
    };
    let mut base = SolverOptions::default();
    let fo = &problem.options;
    base.max_iter = fo.max_iter.unwrap_or(base.max_iter);
    base.rho0 = fo.rho0.unwrap_or(base.rho0);
    base.xi = fo.xi.unwrap_or(base.xi);
    base.eps = fo.eps.unwrap_or(base.eps);
    base.chi = fo.chi.unwrap_or(base.chi);
    let opts = options(common, base);
    let mode = match (common.mode, fo.mode) {
        (Some(ModeArg::Control), _) | (None, Some(RunMode::Control)) => RunMode::Control,
        _ => RunMode::Plan,
    };
    let h = &problem.hierarchy;
    let norms: Vec<Norm> = h.levels.iter().map(|l| l.norm).collect();
    match mode {
        RunMode::Plan => {
            let rep = match solve_planning(h, &problem.x0, &opts) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return exit_for(&e);
                }
            };
            if common.trace {
                print_trace(&rep);
            }
            print_summary(&rep);
            if let Err(e) = write_report(&common.out_dir, &norms, &rep) {
                eprintln!("error: {e}");
                return EXIT_INPUT;
            }
            if !rep.converged {
                eprintln!("not converged after {} iterations; partial report written", rep.iterations);
                EXIT_NOT_CONVERGED
            } else {
                EXIT_OK
            }
        }
        RunMode::Control => {
            let mut ctl = match Controller::new(opts.rho0, opts) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_INPUT;
                }
            };
            let mut x = problem.x0.clone();
            let mut rows = Vec::new();
            let mut held = 0;
            for k in 0..fo.steps.unwrap_or(1) {
                let out = match ctl.step(h, &x) {
                    Ok(o) => o,
                    Err(e) => {
                        eprintln!("error: {e}");
                        return exit_for(&e);
                    }
                };
                held += out.held as usize;
                x = out.x;
                if common.trace {
                    eprintln!(
                        "tick {} step {} {}",
                        k + 1,
                        sig6(out.step.norm()),
                        if out.held { "held" } else { "moved" }
                    );
                }
                rows.extend(x.iter().enumerate().map(|(index, &value)| ControlRow {
                    tick: k + 1,
                    index,
                    value,
                    held: out.held,
                }));
            }
            let xs: Vec<ValueRow> = x.iter().enumerate().map(|(index, &value)| ValueRow { index, value }).collect();
            if let Err(e) =
                write_csv(&common.out_dir, "trace.csv", &rows).and_then(|_| write_csv(&common.out_dir, "x.csv", &xs))
            {
                eprintln!("error: {e}");
                return EXIT_INPUT;
            }
            println!("x = [{}]", x.iter().map(|v| sig6(*v)).collect::<Vec<_>>().join(", "));
            if held > 0 {
                eprintln!("{held} ticks held position after a numerical failure");
                EXIT_NUMERICAL
            } else {
                EXIT_OK
            }
        }
    }
}

#[derive(Serialize)]
struct ControlRow {
    tick: usize,
    index: usize,
    value: f64,
    held: bool,
}

#[derive(Serialize)]
struct Table1Row {
    level: usize,
    row: usize,
    slack: f64,
    reference: f64,
}

fn cmd_bench_table1(common: &Common) -> i32 {
    let opts = options(common, SolverOptions::default());
    let rep = match solve_planning(&table1(), &table1_start(), &opts) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_for(&e);
        }
    };
    if common.trace {
        print_trace(&rep);
    }
    println!("{:>5}  {:>13}  {:>13}  {:>5}  {:>5}", "level", "|v*|", "reference", "iter", "ref");
    let mut rows = Vec::new();
    for (l, lv) in rep.levels.iter().enumerate() {
        let reference = REFERENCE_SLACKS[l];
        let mine: Vec<f64> = if l == 9 { vec![lv.v_star.norm()] } else { lv.v_star.iter().map(|v| v.abs()).collect() };
        for (r, (&v, &rf)) in mine.iter().zip(reference).enumerate() {
            let (label, iters, refi) = if r == 0 {
                ((l + 1).to_string(), lv.iterations.to_string(), REFERENCE_ITERATIONS[l].to_string())
            } else {
                (String::new(), String::new(), String::new())
            };
            println!("{label:>5}  {:>13}  {:>13}  {iters:>5}  {refi:>5}", sig6(v), sig6(rf));
            rows.push(Table1Row { level: l + 1, row: r + 1, slack: v, reference: rf });
        }
    }
    println!(
        "{:>5}  {:>13}  {:>13}  {:>5}  {:>5}",
        "total",
        "",
        "",
        rep.iterations,
        REFERENCE_ITERATIONS.iter().sum::<usize>()
    );
    let checks = check_table1(&rep);
    for c in &checks {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if let Err(e) = write_csv(&common.out_dir, "table1.csv", &rows) {
        eprintln!("error: {e}");
        return EXIT_INPUT;
    }
    if checks.iter().all(|c| c.pass) {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    }
}

#[derive(Serialize)]
struct TrackRow {
    step: usize,
    t: f64,
    e1: f64,
    e2: f64,
    moving_joints: usize,
    held: bool,
    q: String,
}

#[derive(Serialize)]
struct SelectRow {
    step: usize,
    t: f64,
    touched: usize,
    live: usize,
}

#[derive(Serialize)]
struct TimingRow {
    step: usize,
    solve_seconds: f64,
}

fn cmd_scenario(common: &Common, name: ScenarioName, norm: NormArg, plain: bool) -> i32 {
    let arm = PlanarArm::uniform(3, 2.5);
    let q0 = DVector::from_element(3, 0.3);
    let mut opts = options(common, SolverOptions::default());
    opts.trace = false;
    let written = match name {
        ScenarioName::TrackTwo => {
            let mut settings = ControlSettings::default();
            if let Some(r) = common.rho0 {
                settings.radius = r;
            }
            let log = match run_track_two(&arm, &TrackTwo::default(), &q0, &settings, !plain, &opts) {
                Ok(l) => l,
                Err(e) => {
                    eprintln!("error: {e}");
                    return exit_for(&e);
                }
            };
            let good = log
                .iter()
                .filter(|s| s.errors[0].min(s.errors[1]) <= 1e-4 && s.errors[0].max(s.errors[1]) > 1e-2)
                .count();
            let moving = log.iter().map(|s| s.moving_joints as f64).sum::<f64>() / log.len() as f64;
            println!("steps {}", log.len());
            println!("one target tracked, other left: {} ({})", good, sig6(good as f64 / log.len() as f64));
            println!("mean moving joints: {}", sig6(moving));
            let rows: Vec<TrackRow> = log
                .iter()
                .enumerate()
                .map(|(k, s)| TrackRow {
                    step: k + 1,
                    t: s.t,
                    e1: s.errors[0],
                    e2: s.errors[1],
                    moving_joints: s.moving_joints,
                    held: s.held,
                    q: s.q.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "),
                })
                .collect();
            write_csv(&common.out_dir, "track_two.csv", &rows)
        }
        ScenarioName::ContinuousSelect => {
            let norm = match norm {
                NormArg::L0 => Norm::L0,
                NormArg::L2 => Norm::L2,
            };
            let scene = FallingTargets::seeded(&arm, 20, common.seed);
            let mut settings = ControlSettings::falling();
            if let Some(r) = common.rho0 {
                settings.radius = r;
            }
            let log = match run_continuous_select(&arm, &scene, norm, &q0, &settings, &opts) {
                Ok(l) => l,
                Err(e) => {
                    eprintln!("error: {e}");
                    return exit_for(&e);
                }
            };
            println!("touched {} of {}", log.last().map_or(0, |s| s.touched), scene.start.len());
            let rows: Vec<SelectRow> = log
                .iter()
                .enumerate()
                .map(|(k, s)| SelectRow { step: k + 1, t: s.t, touched: s.touched, live: s.live })
                .collect();
            let times: Vec<TimingRow> = log
                .iter()
                .enumerate()
                .map(|(k, s)| TimingRow { step: k + 1, solve_seconds: s.solve_time.as_secs_f64() })
                .collect();
            write_csv(&common.out_dir, "continuous_select.csv", &rows)
                .and_then(|_| write_csv(&common.out_dir, "continuous_select_timing.csv", &times))
        }
    };
    match written {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

#[derive(Serialize)]
struct ScalingRow {
    m: usize,
    ipm_iterations: usize,
    seconds_per_iteration: f64,
    dense_step_seconds: Option<f64>,
}

fn cmd_scaling(common: &Common, repeats: usize, no_dense: bool) -> i32 {
    let rep = match run_scaling(&SCALING_SIZES, repeats, common.seed, !no_dense) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_for(&e);
        }
    };
    println!("{:>5}  {:>5}  {:>14}  {:>14}", "m", "iter", "s/iter", "dense step s");
    for p in &rep.points {
        let dense = p.dense_step.map_or("-".to_string(), |d| sig6(d.as_secs_f64()));
        println!("{:>5}  {:>5}  {:>14}  {:>14}", p.m, p.ipm_iterations, sig6(p.per_iteration.as_secs_f64()), dense);
    }
    println!("slope {}", sig6(rep.slope));
    if let Some(d) = rep.dense_slope {
        println!("dense slope {}", sig6(d));
    }
    let rows: Vec<ScalingRow> = rep
        .points
        .iter()
        .map(|p| ScalingRow {
            m: p.m,
            ipm_iterations: p.ipm_iterations,
            seconds_per_iteration: p.per_iteration.as_secs_f64(),
            dense_step_seconds: p.dense_step.map(|d| d.as_secs_f64()),
        })
        .collect();
    match write_csv(&common.out_dir, "scaling.csv", &rows) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

pub fn run(cli: Cli) -> i32 {
    let c = &cli.common;
    match cli.command {
        Command::Solve { ref path } => cmd_solve(c, path),
        Command::BenchTable1 => cmd_bench_table1(c),
        Command::Scenario { name, norm, plain } => cmd_scenario(c, name, norm, plain),
        Command::Scaling { repeats, no_dense } => cmd_scaling(c, repeats, no_dense),
    }
}

/// Parses `args` (program name first) and runs. Usage errors exit with 2.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(1.0), "1.00000");
        assert_eq!(sig6(123.456789), "123.457");
        assert_eq!(sig6(2.886958e-4), "0.000288696");
        assert_eq!(sig6(1.5e-9), "1.50000e-9");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(0.9999999999985), "1.00000");
    }

    #[test]
    fn flags_parse() {
        let cli = Cli::try_parse_from(["sshqp", "--max-iter", "5", "solve", "p.toml", "--mode", "control"]).unwrap();
        assert_eq!(cli.common.max_iter, Some(5));
        assert_eq!(cli.common.mode, Some(ModeArg::Control));
    }
}
