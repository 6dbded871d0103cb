//! Arm hierarchies and the time-stepped scenarios built on them.

use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DVector, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::arm::{arm_fk, EndEffector, PlanarArm};
use crate::driver::{solve_planning, Controller, SolverOptions};
use crate::error::Result;
use crate::model::{Affine, ConstraintBlock, Hierarchy, Level, Norm};
use crate::selection::SelectionGroup;

/// Weight of the sparse posture rows in the tracking scenario.
pub const POSTURE_WEIGHT: f64 = 1e-3;
/// Distance at which a falling target counts as touched.
pub const TOUCH_DISTANCE: f64 = 1e-2;

fn to_dvec(p: &Vector2<f64>) -> DVector<f64> {
    DVector::from_column_slice(p.as_slice())
}

fn joint_bounds(arm: &PlanarArm) -> Level {
    let limits = ConstraintBlock::bounds(Affine::identity(arm.dof()), arm.lower(), arm.upper()).labeled("joint limits");
    Level::new(Norm::L2, vec![limits])
}

fn targets_group(arm: &Arc<PlanarArm>, id: usize, targets: &[Vector2<f64>]) -> Result<ConstraintBlock> {
    let task = Arc::new(EndEffector(arm.clone()));
    Ok(SelectionGroup::new(id, task, targets.iter().map(to_dvec).collect())?.block())
}

/// Joint limits, one selection level of squared goal distances per goal set
/// with the given norm, and a final l2 pull towards the zero posture.
pub fn plan_ags_problem(arm: &PlanarArm, goal_sets: &[Vec<Vector2<f64>>], norm: Norm) -> Result<Hierarchy> {
    let shared = Arc::new(arm.clone());
    let mut levels = vec![joint_bounds(arm)];
    for (k, goals) in goal_sets.iter().enumerate() {
        levels.push(Level::new(norm, vec![targets_group(&shared, k, goals)?]));
    }
    levels.push(Level::new(Norm::L2, vec![ConstraintBlock::equality(Affine::identity(arm.dof())).labeled("posture")]));
    Hierarchy::new(arm.dof(), levels)
}

/// Two targets circling in opposite directions around two centers.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackTwo {
    pub centers: [Vector2<f64>; 2],
    pub radius: f64,
    /// Angular speed in rad per unit time.
    pub speed: f64,
}

impl Default for TrackTwo {
    fn default() -> Self {
        Self { centers: [Vector2::new(1.6, 0.9), Vector2::new(1.6, -0.9)], radius: 0.3, speed: 0.1 }
    }
}

impl TrackTwo {
    pub fn targets(&self, t: f64) -> [Vector2<f64>; 2] {
        let a = self.speed * t;
        [
            self.centers[0] + Vector2::new(a.cos(), a.sin()) * self.radius,
            self.centers[1] + Vector2::new(a.cos(), -a.sin()) * self.radius,
        ]
    }
}

/// Joint limits, then both targets as one l0 selection group, optionally
/// joined by lightly weighted rows keeping joints at zero, then an l2 pull
/// towards the zero posture.
pub fn track_two_problem(arm: &PlanarArm, scene: &TrackTwo, t: f64, sparse_posture: bool) -> Result<Hierarchy> {
    let shared = Arc::new(arm.clone());
    let mut tracking = vec![targets_group(&shared, 0, &scene.targets(t))?];
    if sparse_posture {
        let rows = Affine::scaled_offset(POSTURE_WEIGHT, DVector::zeros(arm.dof()));
        tracking.push(ConstraintBlock::equality(rows).labeled("sparse posture"));
    }
    let levels = vec![
        joint_bounds(arm),
        Level::new(Norm::L0, tracking),
        Level::new(Norm::L2, vec![ConstraintBlock::equality(Affine::identity(arm.dof())).labeled("posture")]),
    ];
    Hierarchy::new(arm.dof(), levels)
}

/// Joint limits, all live targets as one selection group with the given norm,
/// then an l2 pull towards the zero posture.
pub fn continuous_select_problem(arm: &PlanarArm, live_targets: &[Vector2<f64>], norm: Norm) -> Result<Hierarchy> {
    let shared = Arc::new(arm.clone());
    let mut levels = vec![joint_bounds(arm)];
    if !live_targets.is_empty() {
        levels.push(Level::new(norm, vec![targets_group(&shared, 0, live_targets)?]));
    }
    levels.push(Level::new(Norm::L2, vec![ConstraintBlock::equality(Affine::identity(arm.dof())).labeled("posture")]));
    Hierarchy::new(arm.dof(), levels)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlSettings {
    pub dt: f64,
    pub horizon: f64,
    /// Constant trust radius of every control step.
    pub radius: f64,
}

impl Default for ControlSettings {
    /// Fine ticks with small joint steps, as used for tracking.
    fn default() -> Self {
        Self { dt: 2e-3, horizon: 8.0, radius: 0.01 }
    }
}

impl ControlSettings {
    /// Coarser ticks for chasing falling targets. The horizon is set by the
    /// targets themselves.
    pub fn falling() -> Self {
        Self { dt: 0.01, horizon: f64::NAN, radius: 0.2 }
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackSample {
    pub t: f64,
    pub errors: [f64; 2],
    pub q: DVector<f64>,
    /// Joints that moved more than `1e-6` during this tick.
    pub moving_joints: usize,
    pub held: bool,
}

/// Tracks two counter-moving targets, one control step per tick. The arm
/// starts from the planned posture for the targets at time zero, solved from
/// `q0` without the sparse posture rows.
pub fn run_track_two(
    arm: &PlanarArm,
    scene: &TrackTwo,
    q0: &DVector<f64>,
    settings: &ControlSettings,
    sparse_posture: bool,
    opts: &SolverOptions,
) -> Result<Vec<TrackSample>> {
    let mut ctl = Controller::new(settings.radius, *opts)?;
    let mut q = solve_planning(&track_two_problem(arm, scene, 0.0, false)?, q0, opts)?.x_star;
    let mut log = Vec::with_capacity(settings.steps());
    for k in 1..=settings.steps() {
        let t = k as f64 * settings.dt;
        let h = track_two_problem(arm, scene, t, sparse_posture)?;
        let out = ctl.step(&h, &q)?;
        let moving_joints = out.step.iter().filter(|d| d.abs() > 1e-6).count();
        q = out.x;
        let (p, _) = arm_fk(arm, &q);
        let targets = scene.targets(t);
        log.push(TrackSample {
            t,
            errors: [(p - targets[0]).norm(), (p - targets[1]).norm()],
            q: q.clone(),
            moving_joints,
            held: out.held,
        });
    }
    Ok(log)
}

/// Targets falling straight down at a common speed.
#[derive(Debug, Clone, PartialEq)]
pub struct FallingTargets {
    pub start: Vec<Vector2<f64>>,
    pub fall_speed: f64,
    /// Targets below this height have passed the arm.
    pub floor: f64,
}

impl FallingTargets {
    /// `count` targets with horizontal positions inside the reach of `arm`,
    /// staggered in height above it.
    pub fn seeded(arm: &PlanarArm, count: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let reach = arm.reach();
        let start = (0..count)
            .map(|_| Vector2::new(rng.random_range(0.3..0.85) * reach, rng.random_range(1.0..2.5) * reach))
            .collect();
        Self { start, fall_speed: 0.1 * reach, floor: -reach }
    }

    pub fn at(&self, t: f64) -> Vec<Vector2<f64>> {
        self.start.iter().map(|p| p - Vector2::new(0.0, self.fall_speed * t)).collect()
    }

    /// Time after which every target is below the floor.
    pub fn horizon(&self) -> f64 {
        let top = self.start.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        (top - self.floor) / self.fall_speed
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectSample {
    pub t: f64,
    pub touched: usize,
    pub live: usize,
    pub solve_time: Duration,
}

/// Chases the falling targets until all have passed. A target is removed
/// from the group once the end effector comes within [`TOUCH_DISTANCE`].
pub fn run_continuous_select(
    arm: &PlanarArm,
    scene: &FallingTargets,
    norm: Norm,
    q0: &DVector<f64>,
    settings: &ControlSettings,
    opts: &SolverOptions,
) -> Result<Vec<SelectSample>> {
    let mut ctl = Controller::new(settings.radius, *opts)?;
    let mut q = q0.clone();
    let mut touched = vec![false; scene.start.len()];
    let mut log = Vec::new();
    let steps = (scene.horizon() / settings.dt).ceil() as usize;
    for k in 1..=steps {
        let t = k as f64 * settings.dt;
        let positions = scene.at(t);
        let live: Vec<usize> = (0..positions.len()).filter(|&i| !touched[i] && positions[i].y >= scene.floor).collect();
        let targets: Vec<Vector2<f64>> = live.iter().map(|&i| positions[i]).collect();
        let h = continuous_select_problem(arm, &targets, norm)?;
        let clock = Instant::now();
        let out = ctl.step(&h, &q)?;
        let solve_time = clock.elapsed();
        q = out.x;
        let (p, _) = arm_fk(arm, &q);
        for &i in &live {
            if (p - positions[i]).norm() <= TOUCH_DISTANCE {
                touched[i] = true;
            }
        }
        log.push(SelectSample { t, touched: touched.iter().filter(|b| **b).count(), live: live.len(), solve_time });
    }
    Ok(log)
}
