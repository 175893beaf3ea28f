use super::build::build_graph;
use super::{CompositeTrajectory, PlanError, PlannerConfig, SegmentTEB};
use crate::environment::Environment;
use crate::manifold::{
    backward_stencil, central_stencil, difference_rate, forward_stencil, prescribed_end_acceleration,
    prescribed_start_acceleration, Pose,
};
use crate::models::ModeRegistry;
use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// One timed point of the extracted trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub mode: String,
    pub pose: Pose,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub control: Vec<f64>,
}

/// Instant at which the mode switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionInstant {
    pub t: f64,
    pub from: String,
    pub to: String,
}

/// Velocity and acceleration at node `i` of segment `s`.
pub fn node_kinematics(
    traj: &CompositeTrajectory,
    s: usize,
    i: usize,
) -> Result<(Vector6<f64>, Vector6<f64>), PlanError> {
    let seg = &traj.segments[s];
    let n = seg.len();
    let q = &seg.poses;
    let dt = seg.dt_seconds();
    let first = s == 0 && i == 0;
    let last = s == traj.segments.len() - 1 && i == n - 1;
    Ok(if first && traj.start.velocity.is_some() {
        let v = traj.start.twist().unwrap();
        (v, prescribed_start_acceleration(&q[0], &q[1], dt[0], &v)?)
    } else if last && traj.goal.velocity.is_some() {
        let v = traj.goal.twist().unwrap();
        (v, prescribed_end_acceleration(&q[n - 2], &q[n - 1], dt[n - 2], &v)?)
    } else if n == 2 {
        (difference_rate(&q[1], &q[0], dt[0])?, Vector6::zeros())
    } else if i == 0 {
        forward_stencil(&q[0], &q[1], &q[2], dt[0], dt[1])?
    } else if i == n - 1 {
        backward_stencil(&q[n - 3], &q[n - 2], &q[n - 1], dt[n - 3], dt[n - 2])?
    } else {
        central_stencil(&q[i - 1], &q[i], &q[i + 1], dt[i - 1], dt[i])?
    })
}

fn linear(v: &Vector6<f64>) -> Vector3<f64> {
    v.fixed_rows::<3>(0).into_owned()
}

/// Timed samples with finite-difference velocities and accelerations.
/// The head of each segment repeats the timestamp of the previous tail.
pub fn extract_trajectory(
    traj: &CompositeTrajectory,
) -> Result<(Vec<TrajectorySample>, Vec<TransitionInstant>), PlanError> {
    let mut samples = Vec::with_capacity(traj.pose_count());
    let mut transitions = Vec::new();
    let mut t0 = 0.0;
    for (s, seg) in traj.segments.iter().enumerate() {
        if s > 0 {
            transitions.push(TransitionInstant {
                t: t0,
                from: traj.segments[s - 1].mode.clone(),
                to: seg.mode.clone(),
            });
        }
        let mut t = t0;
        for i in 0..seg.len() {
            if i > 0 {
                t += seg.dts[i - 1].seconds();
            }
            let (v, a) = node_kinematics(traj, s, i)?;
            samples.push(TrajectorySample {
                t,
                mode: seg.mode.clone(),
                pose: seg.poses[i],
                velocity: linear(&v),
                acceleration: linear(&a),
                control: seg.controls[i].as_slice().to_vec(),
            });
        }
        t0 = t;
    }
    Ok((samples, transitions))
}

/// Constraint satisfaction of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// Largest dynamics residual component (model units).
    pub max_dynamics_residual: f64,
    /// Largest state, rate or control bound violation.
    pub max_bound_violation: f64,
    /// Largest weighted bound penalty `α·|r|²` of a single edge.
    pub max_bound_penalty: f64,
    /// Largest weighted obstacle penalty of a single edge, nonzero only
    /// inside the safety margin.
    pub max_obstacle_penalty: f64,
    /// Smallest signed obstacle distance over all poses [m].
    pub min_clearance: f64,
    pub max_transition_position_gap: f64,
    pub max_transition_velocity_gap: f64,
    pub feasible: bool,
}

/// Tolerances used to call a trajectory feasible.
pub const DYNAMICS_TOLERANCE: f64 = 0.1;
pub const BOUND_TOLERANCE: f64 = 1e-3;
pub const TRANSITION_POSITION_TOLERANCE: f64 = 0.05;
pub const TRANSITION_VELOCITY_TOLERANCE: f64 = 0.1;

fn boundary_velocity(seg: &SegmentTEB, tail: bool) -> Result<Vector3<f64>, PlanError> {
    let n = seg.len();
    let q = &seg.poses;
    let dt = seg.dt_seconds();
    let v = if n == 2 {
        difference_rate(&q[1], &q[0], dt[0])
    } else if tail {
        backward_stencil(&q[n - 3], &q[n - 2], &q[n - 1], dt[n - 3], dt[n - 2]).map(|r| r.0)
    } else {
        forward_stencil(&q[0], &q[1], &q[2], dt[0], dt[1]).map(|r| r.0)
    };
    Ok(linear(&v?))
}

pub fn feasibility(
    traj: &CompositeTrajectory,
    registry: &ModeRegistry,
    environment: &Arc<Environment>,
    config: &PlannerConfig,
) -> Result<FeasibilityReport, PlanError> {
    let tg = build_graph(traj, registry, environment, config)?;
    let mut dynamics: f64 = 0.0;
    let mut bounds: f64 = 0.0;
    let mut bound_penalty: f64 = 0.0;
    let mut obstacle_penalty: f64 = 0.0;
    for (id, edge) in tg.graph.edges().iter().enumerate() {
        let label = edge.label();
        let r = tg.graph.edge_residual(id)?;
        match label {
            "dynamics" | "servo" => dynamics = dynamics.max(r.amax()),
            "state_bound" | "rate_bound" | "control_bound" => {
                bounds = bounds.max(r.amax());
                bound_penalty = bound_penalty.max(edge.weight * r.norm_squared());
            }
            "obstacle" => obstacle_penalty = obstacle_penalty.max(edge.weight * r.norm_squared()),
            _ => {}
        }
    }
    let mut clearance = f64::INFINITY;
    for seg in &traj.segments {
        let mode = registry.mode(&seg.mode).map_err(|e| PlanError::Config(e.to_string()))?;
        for q in &seg.poses {
            let d = environment
                .signed_distance(&q.position, &mode.obstacle_set)
                .map_err(|e| PlanError::Config(e.to_string()))?;
            clearance = clearance.min(d);
        }
    }
    let mut pos_gap: f64 = 0.0;
    let mut vel_gap: f64 = 0.0;
    for w in traj.segments.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        pos_gap = pos_gap.max((b.poses[0].position - a.poses[a.len() - 1].position).norm());
        vel_gap = vel_gap.max((boundary_velocity(b, false)? - boundary_velocity(a, true)?).norm());
    }
    let feasible = dynamics < DYNAMICS_TOLERANCE
        && bound_penalty < BOUND_TOLERANCE
        && obstacle_penalty < BOUND_TOLERANCE
        && clearance >= 0.0
        && pos_gap < TRANSITION_POSITION_TOLERANCE
        && vel_gap < TRANSITION_VELOCITY_TOLERANCE;
    Ok(FeasibilityReport {
        max_dynamics_residual: dynamics,
        max_bound_violation: bounds,
        max_bound_penalty: bound_penalty,
        max_obstacle_penalty: obstacle_penalty,
        min_clearance: clearance,
        max_transition_position_gap: pos_gap,
        max_transition_velocity_gap: vel_gap,
        feasible,
    })
}
