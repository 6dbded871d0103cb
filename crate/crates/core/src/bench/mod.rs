//! Built-in problems: the ten-level test-function hierarchy and a planar arm
//! testbed for planning, tracking and continuous selection.

mod arm;
mod scaling;
mod scenario;
mod table1;

pub use arm::{arm_fk, EndEffector, PlanarArm};
pub use scaling::{loglog_slope, run_scaling, scaling_problem, ScalingPoint, ScalingReport, SCALING_SIZES};
pub use scenario::{
    continuous_select_problem, plan_ags_problem, run_continuous_select, run_track_two, track_two_problem,
    ControlSettings, FallingTargets, SelectSample, TrackSample, TrackTwo, POSTURE_WEIGHT, TOUCH_DISTANCE,
};
pub use table1::{
    check_table1, rosenbrock_on_sphere, table1, table1_start, Check, ITERATION_BUDGET, MCCORMICK_OFFSET,
    REFERENCE_ITERATIONS, REFERENCE_SLACKS,
};
