//! Residual edges of the trajectory graph: time, dynamics, servo lag,
//! state/control bounds, obstacle clearance and mode-transition continuity.
//!
//! Each edge reads its vertex values in a fixed order: poses, then time
//! deltas, then controls.

use crate::environment::Environment;
use crate::graph::{Residual, ResidualError, VertexValue};
use crate::manifold::{
    backward_stencil, central_stencil, control_rate, difference_rate, forward_stencil, prescribed_end_acceleration,
    prescribed_start_acceleration, wrap_angle, ControlVector, Pose,
};
use crate::models::{ChannelBound, ContinuityKind, Interval, Kinematics, ServoModel, TransitionSpec, VehicleModel};
use nalgebra::{DVector, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Relative weights of the objective, constraint and transition terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PenaltyWeights {
    pub alpha_obj: f64,
    pub alpha_con: f64,
    pub alpha_trans: f64,
}

impl Default for PenaltyWeights {
    fn default() -> Self {
        Self {
            alpha_obj: 1.0,
            alpha_con: 100.0,
            alpha_trans: 100.0,
        }
    }
}

impl PenaltyWeights {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("alpha_obj", self.alpha_obj),
            ("alpha_con", self.alpha_con),
            ("alpha_trans", self.alpha_trans),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

/// How the velocity at a node is estimated from its neighbours.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VelocityStencil {
    /// `[q_{i-1}, q_i, q_{i+1}]`
    Central,
    /// `[q_i, q_{i+1}, q_{i+2}]`
    Forward3,
    /// `[q_{i-2}, q_{i-1}, q_i]`
    Backward3,
    /// `[q_i, q_{i+1}]`
    Forward2,
    /// `[q_{i-1}, q_i]`
    Backward2,
    /// `[q_i]` with a known velocity.
    Prescribed(Vector6<f64>),
}

impl VelocityStencil {
    pub fn poses(&self) -> usize {
        match self {
            VelocityStencil::Central | VelocityStencil::Forward3 | VelocityStencil::Backward3 => 3,
            VelocityStencil::Forward2 | VelocityStencil::Backward2 => 2,
            VelocityStencil::Prescribed(_) => 1,
        }
    }

    pub fn dts(&self) -> usize {
        self.poses() - 1
    }

    /// Index of the evaluated node inside the pose window.
    pub fn node(&self) -> usize {
        match self {
            VelocityStencil::Central | VelocityStencil::Backward2 => 1,
            VelocityStencil::Backward3 => 2,
            _ => 0,
        }
    }

    /// Best stencil for node `i` of a segment with `n` poses.
    pub fn for_node(i: usize, n: usize) -> Self {
        debug_assert!(n >= 2 && i < n);
        if n == 2 {
            if i == 0 {
                VelocityStencil::Forward2
            } else {
                VelocityStencil::Backward2
            }
        } else if i == 0 {
            VelocityStencil::Forward3
        } else if i == n - 1 {
            VelocityStencil::Backward3
        } else {
            VelocityStencil::Central
        }
    }

    /// First pose index of the window for node `i`.
    pub fn window_start(&self, i: usize) -> usize {
        i - self.node()
    }

    /// Node pose and its velocity.
    pub fn velocity(&self, poses: &[Pose], dts: &[f64]) -> Result<(Pose, Vector6<f64>), ResidualError> {
        let v = match self {
            VelocityStencil::Central => central_stencil(&poses[0], &poses[1], &poses[2], dts[0], dts[1])?.0,
            VelocityStencil::Forward3 => forward_stencil(&poses[0], &poses[1], &poses[2], dts[0], dts[1])?.0,
            VelocityStencil::Backward3 => backward_stencil(&poses[0], &poses[1], &poses[2], dts[0], dts[1])?.0,
            VelocityStencil::Forward2 | VelocityStencil::Backward2 => difference_rate(&poses[1], &poses[0], dts[0])?,
            VelocityStencil::Prescribed(v) => *v,
        };
        Ok((poses[self.node()], v))
    }
}

/// Window used to obtain the acceleration at a node for the dynamics edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DynamicsStencil {
    /// `[q_{i-1}, q_i, q_{i+1}]`
    Central,
    /// `[q_0, q_1]` with the velocity at `q_0` known.
    PrescribedStart(Vector6<f64>),
    /// `[q_{N-2}, q_{N-1}]` with the velocity at `q_{N-1}` known.
    PrescribedEnd(Vector6<f64>),
    /// `[q_0, q_1, q_2]`, evaluated at `q_0`.
    Forward,
    /// `[q_{N-3}, q_{N-2}, q_{N-1}]`, evaluated at `q_{N-1}`.
    Backward,
}

impl DynamicsStencil {
    pub fn poses(&self) -> usize {
        match self {
            DynamicsStencil::Central | DynamicsStencil::Forward | DynamicsStencil::Backward => 3,
            _ => 2,
        }
    }

    pub fn dts(&self) -> usize {
        self.poses() - 1
    }

    pub fn kinematics(&self, poses: &[Pose], dts: &[f64]) -> Result<Kinematics, ResidualError> {
        Ok(match self {
            DynamicsStencil::Central => {
                let (velocity, acceleration) = central_stencil(&poses[0], &poses[1], &poses[2], dts[0], dts[1])?;
                Kinematics {
                    pose: poses[1],
                    velocity,
                    acceleration,
                }
            }
            DynamicsStencil::Forward => {
                let (velocity, acceleration) = forward_stencil(&poses[0], &poses[1], &poses[2], dts[0], dts[1])?;
                Kinematics {
                    pose: poses[0],
                    velocity,
                    acceleration,
                }
            }
            DynamicsStencil::Backward => {
                let (velocity, acceleration) = backward_stencil(&poses[0], &poses[1], &poses[2], dts[0], dts[1])?;
                Kinematics {
                    pose: poses[2],
                    velocity,
                    acceleration,
                }
            }
            DynamicsStencil::PrescribedStart(v) => Kinematics {
                pose: poses[0],
                velocity: *v,
                acceleration: prescribed_start_acceleration(&poses[0], &poses[1], dts[0], v)?,
            },
            DynamicsStencil::PrescribedEnd(v) => Kinematics {
                pose: poses[1],
                velocity: *v,
                acceleration: prescribed_end_acceleration(&poses[0], &poses[1], dts[0], v)?,
            },
        })
    }
}

fn pose_at<'a>(values: &[&'a VertexValue], i: usize) -> Result<&'a Pose, ResidualError> {
    values[i]
        .as_pose()
        .ok_or_else(|| ResidualError(format!("slot {i} is not a pose")))
}

fn dt_at(values: &[&VertexValue], i: usize) -> Result<f64, ResidualError> {
    values[i]
        .as_time_delta()
        .map(|t| t.seconds())
        .ok_or_else(|| ResidualError(format!("slot {i} is not a time delta")))
}

fn control_at<'a>(values: &[&'a VertexValue], i: usize) -> Result<&'a ControlVector, ResidualError> {
    values[i]
        .as_control()
        .ok_or_else(|| ResidualError(format!("slot {i} is not a control")))
}

fn check_len(values: &[&VertexValue], expected: usize) -> Result<(), ResidualError> {
    if values.len() != expected {
        return Err(ResidualError(format!(
            "expected {expected} vertices, got {}",
            values.len()
        )));
    }
    Ok(())
}

fn poses_and_dts(
    values: &[&VertexValue],
    n_poses: usize,
    n_dts: usize,
) -> Result<(Vec<Pose>, Vec<f64>), ResidualError> {
    let poses = (0..n_poses)
        .map(|i| pose_at(values, i).copied())
        .collect::<Result<_, _>>()?;
    let dts = (0..n_dts)
        .map(|i| dt_at(values, n_poses + i))
        .collect::<Result<_, _>>()?;
    Ok((poses, dts))
}

/// `sqrt(mode_weight) * Δt`, so the squared cost is `mode_weight * Δt²`.
pub fn time_penalty(dt: f64, mode_weight: f64) -> f64 {
    mode_weight.sqrt() * dt
}

/// Vertices: `[Δt]`.
pub struct TimeEdge {
    pub mode_weight: f64,
}

impl Residual for TimeEdge {
    fn dim(&self) -> usize {
        1
    }

    fn evaluate(&self, values: &[&VertexValue]) -> Result<DVector<f64>, ResidualError> {
        check_len(values, 1)?;
        Ok(DVector::from_element(
            1,
            time_penalty(dt_at(values, 0)?, self.mode_weight),
        ))
    }

    fn label(&self) -> &'static str {
        "time"
    }
}

/// `q⁽ⁿ⁾ - g(q, q̇, u)` at a node.
pub fn dynamics_penalty(
    model: &VehicleModel,
    stencil: &DynamicsStencil,
    poses: &[Pose],
    dts: &[f64],
    u: &[f64],
) -> Result<DVector<f64>, ResidualError> {
    let kin = stencil.kinematics(poses, dts)?;
    model.residual(&kin, u).map_err(|e| ResidualError(e.to_string()))
}

/// Vertices: stencil poses, stencil time deltas, `[u_i]`.
pub struct DynamicsEdge {
    pub model: VehicleModel,
    pub stencil: DynamicsStencil,
}

impl Residual for DynamicsEdge {
    fn dim(&self) -> usize {
        self.model.residual_dim()
    }

    fn evaluate(&self, values: &[&VertexValue]) -> Result<DVector<f64>, ResidualError> {
        let (np, nd) = (self.stencil.poses(), self.stencil.dts());
        check_len(values, np + nd + 1)?;
        let (poses, dts) = poses_and_dts(values, np, nd)?;
        let u = control_at(values, np + nd)?;
        dynamics_penalty(&self.model, &self.stencil, &poses, &dts, u.as_slice())
    }

    fn label(&self) -> &'static str {
        "dynamics"
    }
}

/// Forward-difference rate of the servo state channels minus the lag model.
pub fn control_dynamics_penalty(
    servo: &ServoModel,
    u: &ControlVector,
    u_next: &ControlVector,
    dt: f64,
) -> Result<DVector<f64>, ResidualError> {
    let rate = control_rate(u, u_next, dt)?;
    Ok(servo.state_rates(&rate) - servo.h(u.as_slice()))
}

/// Vertices: `[Δt_i, u_i, u_{i+1}]`.
pub struct ServoEdge {
    pub servo: ServoModel,
}

impl Residual for ServoEdge {
    fn dim(&self) -> usize {
        self.servo.pairs.len()
    }

    fn evaluate(&self, values: &[&VertexValue]) -> Result<DVector<f64>, ResidualError> {
        check_len(values, 3)?;
        control_dynamics_penalty(
            &self.servo,
            control_at(values, 1)?,
            control_at(values, 2)?,
            dt_at(values, 0)?,
        )
    }

    fn label(&self) -> &'static str {
        "servo"
    }
}

/// Hinge of each bound evaluated at the pose (and velocity for derivative
/// channels).
pub fn state_limit_penalty(bounds: &[ChannelBound], pose: &Pose, velocity: Option<&Vector6<f64>>) -> DVector<f64> {
    DVector::from_iterator(
        bounds.len(),
        bounds.iter().map(|b| b.interval.hinge(b.channel.value(pose, velocity))),
    )
}

/// Vertices: `[q_i]`. Pose-only channels.
pub struct StateBoundEdge {
    pub bounds: Vec<ChannelBound>,
}

impl Residual for StateBoundEdge {
    fn dim(&self) -> usize {
        self.bounds.len()
    }

    fn evaluate(&self, values: &[&VertexValue]) -> Result<DVector<f64>, ResidualError> {
        check_len(values, 1)?;
        Ok(state_limit_penalty(&self.bounds, pose_at(values, 0)?, None))
    }

    fn label(&self) -> &'static str {
        "state_bound"
    }
}

/// Vertices: stencil poses, stencil time deltas. Derivative channels.
pub struct RateBoundEdge {
    pub bounds: Vec<ChannelBound>,
    pub stencil: VelocityStencil,
}

impl Residual for RateBoundEdge {
    fn dim(&self) -> usize {
        self.bounds.len()
    }

    fn evaluate(&self, values: &[&VertexValue]) -> Result<DVector<f64>, ResidualError> {
        let (np, nd) = (self.stencil.poses(), self.stencil.dts());
        check_len(values, np + nd)?;
        let (poses, dts) = poses_and_dts(values, np, nd)?;
        let (pose, v) = self.stencil.velocity(&poses, &dts)?;
        Ok(state_limit_penalty(&self.bounds, &pose, Some(&v)))
    }

    fn label(&self) -> &'static str {
        "rate_bound"
    }
}

pub fn control_limit_penalty(bounds: &[Interval], u: &[f64]) -> DVector<f64> {
    DVector::from_iterator(bounds.len(), bounds.iter().zip(u).map(|(b, v)| b.hinge(*v)))
}

/// Vertices: `[u_i]`.
pub struct ControlBoundEdge {
    pub bounds: Vec<Interval>,
}

impl Residual for ControlBoundEdge {
    fn dim(&self) -> usize {
        self.bounds.len()
    }

    fn evaluate(&self, values: &[&VertexValue]) -> Result<DVector<f64>, ResidualError> {
        check_len(values, 1)?;
        let u = control_at(values, 0)?;
        if u.dim() != self.bounds.len() {
            return Err(ResidualError(format!(
                "control has {} channels, {} bounds",
                u.dim(),
                self.bounds.len()
            )));
        }
        Ok(control_limit_penalty(&self.bounds, u.as_slice()))
    }

    fn label(&self) -> &'static str {
        "control_bound"
    }
}

/// `max(0, margin - signed_distance(p))`.
pub fn obstacle_penalty(env: &Environment, set_id: &str, p: &Vector3<f64>, margin: f64) -> Result<f64, ResidualError> {
    let d = env
        .signed_distance(p, set_id)
        .map_err(|e| ResidualError(e.to_string()))?;
    Ok((margin - d).max(0.0))
}

/// Vertices: `[q_i]`.
pub struct ObstacleEdge {
    pub environment: Arc<Environment>,
    pub set_id: String,
    pub margin: f64,
}

impl Residual for ObstacleEdge {
    fn dim(&self) -> usize {
        1
    }

    fn evaluate(&self, values: &[&VertexValue]) -> Result<DVector<f64>, ResidualError> {
        check_len(values, 1)?;
        let p = pose_at(values, 0)?.position;
        Ok(DVector::from_element(
            1,
            obstacle_penalty(&self.environment, &self.set_id, &p, self.margin)?,
        ))
    }

    fn label(&self) -> &'static str {
        "obstacle"
    }
}

/// Boundary state of a segment as seen by the transition penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryState {
    pub pose: Pose,
    pub velocity: Vector3<f64>,
}

/// Stacked continuity residual `head - tail` over the spec's channels,
/// each scaled by the square root of its weight.
pub fn transition_penalty(tail: &BoundaryState, head: &BoundaryState, spec: &TransitionSpec) -> DVector<f64> {
    let mut r = Vec::with_capacity(spec.residual_dim());
    let (_, tp, ty) = tail.pose.euler();
    let (_, hp, hy) = head.pose.euler();
    let (tr, hr) = (tail.pose.bank(), head.pose.bank());
    for c in &spec.channels {
        let w = c.weight.sqrt();
        match c.channel {
            ContinuityKind::Position => r.extend((head.pose.position - tail.pose.position).iter().map(|v| w * v)),
            ContinuityKind::Velocity => r.extend((head.velocity - tail.velocity).iter().map(|v| w * v)),
            ContinuityKind::Roll => r.push(w * wrap_angle(hr - tr)),
            ContinuityKind::Pitch => r.push(w * wrap_angle(hp - tp)),
            ContinuityKind::Yaw => r.push(w * wrap_angle(hy - ty)),
        }
    }
    DVector::from_vec(r)
}

/// Vertices: tail window poses, head window poses, tail time deltas, head
/// time deltas.
pub struct TransitionEdge {
    pub spec: Arc<TransitionSpec>,
    pub tail: VelocityStencil,
    pub head: VelocityStencil,
}

impl TransitionEdge {
    pub fn vertex_count(&self) -> usize {
        self.tail.poses() + self.head.poses() + self.tail.dts() + self.head.dts()
    }
}

impl Residual for TransitionEdge {
    fn dim(&self) -> usize {
        self.spec.residual_dim()
    }

    fn evaluate(&self, values: &[&VertexValue]) -> Result<DVector<f64>, ResidualError> {
        check_len(values, self.vertex_count())?;
        let (tp, hp) = (self.tail.poses(), self.head.poses());
        let poses: Vec<Pose> = (0..tp + hp)
            .map(|i| pose_at(values, i).copied())
            .collect::<Result<_, _>>()?;
        let dts: Vec<f64> = (tp + hp..values.len())
            .map(|i| dt_at(values, i))
            .collect::<Result<_, _>>()?;
        let (tail_pose, tv) = self.tail.velocity(&poses[..tp], &dts[..self.tail.dts()])?;
        let (head_pose, hv) = self.head.velocity(&poses[tp..], &dts[self.tail.dts()..])?;
        let tail = BoundaryState {
            pose: tail_pose,
            velocity: tv.fixed_rows::<3>(0).into_owned(),
        };
        let head = BoundaryState {
            pose: head_pose,
            velocity: hv.fixed_rows::<3>(0).into_owned(),
        };
        Ok(transition_penalty(&tail, &head, &self.spec))
    }

    fn label(&self) -> &'static str {
        "transition"
    }
}
