//! Vehicle modes: dynamics functions, bounds, objective weights and the
//! registry binding mode ids to specs.
//!
//! Every mode lives in the same SE(3) pose embedding. Planar quantities
//! (z, roll, pitch for a ground vehicle) are held in place by state bounds.

use crate::manifold::Pose;
use nalgebra::{DVector, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

pub const STANDARD_GRAVITY: f64 = 9.81;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("steering angle {0} rad is at or beyond ±π/2")]
    InvalidSteering(f64),
    #[error("expected {expected} control channels, got {got}")]
    ControlDimension { expected: usize, got: usize },
    #[error("unknown mode '{0}'")]
    UnknownMode(String),
    #[error("transition {0} -> {1} is not allowed")]
    TransitionNotAllowed(String, String),
    #[error("mode '{mode}': {reason}")]
    InvalidSpec { mode: String, reason: String },
}

/// Closed interval; missing ends are unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    #[serde(default = "neg_inf", with = "bound")]
    pub min: f64,
    #[serde(default = "pos_inf", with = "bound")]
    pub max: f64,
}

fn neg_inf() -> f64 {
    f64::NEG_INFINITY
}

fn pos_inf() -> f64 {
    f64::INFINITY
}

/// Infinite bounds are written as `null`.
mod bound {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

impl Interval {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn exactly(v: f64) -> Self {
        Self { min: v, max: v }
    }

    pub fn at_most(max: f64) -> Self {
        Self {
            min: f64::NEG_INFINITY,
            max,
        }
    }

    pub fn at_least(min: f64) -> Self {
        Self {
            min,
            max: f64::INFINITY,
        }
    }

    pub fn unbounded() -> Self {
        Self {
            min: f64::NEG_INFINITY,
            max: f64::INFINITY,
        }
    }

    /// `max(0, v - max) + max(0, min - v)`
    pub fn hinge(&self, v: f64) -> f64 {
        (v - self.max).max(0.0) + (self.min - v).max(0.0)
    }

    /// Midpoint, or zero when either end is unbounded.
    pub fn mean(&self) -> f64 {
        if self.min.is_finite() && self.max.is_finite() {
            0.5 * (self.min + self.max)
        } else {
            0.0
        }
    }

    pub fn is_finite(&self) -> bool {
        self.min.is_finite() && self.max.is_finite()
    }

    /// A `null` in a file deserializes as NaN; restore the intended
    /// infinity for each end.
    fn normalized(mut self) -> Self {
        if self.min.is_nan() {
            self.min = f64::NEG_INFINITY;
        }
        if self.max.is_nan() {
            self.max = f64::INFINITY;
        }
        self
    }
}

/// Scalar quantities a state bound can apply to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateChannel {
    X,
    Y,
    Z,
    /// Bank of the wing axis, see [`Pose::bank`].
    Roll,
    Pitch,
    Yaw,
    /// Magnitude of the world-frame velocity.
    Speed,
    /// Velocity along the body x-axis.
    ForwardSpeed,
    VerticalSpeed,
    YawRate,
}

impl StateChannel {
    pub fn is_derivative(self) -> bool {
        matches!(
            self,
            StateChannel::Speed | StateChannel::ForwardSpeed | StateChannel::VerticalSpeed | StateChannel::YawRate
        )
    }

    /// Value at a pose; derivative channels need the velocity.
    pub fn value(self, pose: &Pose, velocity: Option<&Vector6<f64>>) -> f64 {
        let (_, pitch, yaw) = pose.euler();
        let lin = velocity
            .map(|v| Vector3::new(v[0], v[1], v[2]))
            .unwrap_or_else(Vector3::zeros);
        match self {
            StateChannel::X => pose.position.x,
            StateChannel::Y => pose.position.y,
            StateChannel::Z => pose.position.z,
            StateChannel::Roll => pose.bank(),
            StateChannel::Pitch => pitch,
            StateChannel::Yaw => yaw,
            StateChannel::Speed => lin.norm(),
            StateChannel::ForwardSpeed => lin.dot(&pose.forward()),
            StateChannel::VerticalSpeed => lin.z,
            StateChannel::YawRate => velocity.map(|v| v[5]).unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelBound {
    pub channel: StateChannel,
    #[serde(flatten)]
    pub interval: Interval,
}

/// Pose with its first and second time derivatives. Linear parts are in
/// the world frame, angular parts in the body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub pose: Pose,
    pub velocity: Vector6<f64>,
    pub acceleration: Vector6<f64>,
}

impl Kinematics {
    pub fn linear_velocity(&self) -> Vector3<f64> {
        self.velocity.fixed_rows::<3>(0).into_owned()
    }

    pub fn linear_acceleration(&self) -> Vector3<f64> {
        self.acceleration.fixed_rows::<3>(0).into_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DubinsParams {
    /// Wheelbase L [m].
    pub wheelbase: f64,
}

impl Default for DubinsParams {
    fn default() -> Self {
        Self { wheelbase: 2.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AirplaneParams {
    pub mass: f64,
    pub gravity: f64,
    /// Lift L = lift_gain * c_L * v².
    pub lift_gain: f64,
    /// Drag D = (drag_zero + drag_induced * c_L²) * v².
    pub drag_zero: f64,
    pub drag_induced: f64,
}

impl Default for AirplaneParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            gravity: STANDARD_GRAVITY,
            lift_gain: 0.5,
            drag_zero: 0.02,
            drag_induced: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HoverParams {
    pub gravity: f64,
    /// Altitude-hold damping.
    pub k_z: f64,
    /// Yaw-rate damping.
    pub k_yaw: f64,
}

impl Default for HoverParams {
    fn default() -> Self {
        Self {
            gravity: STANDARD_GRAVITY,
            k_z: 2.0,
            k_yaw: 2.0,
        }
    }
}

/// Car-like model with controls `(a_des, steering α)`.
///
/// Returns `(ẍ, ÿ, ψ̈)` for planar state `(x, y, ψ)` and rates `(ẋ, ẏ, ψ̇)`.
pub fn dubins_g(p: &DubinsParams, q: [f64; 3], qdot: [f64; 3], u: &[f64]) -> Result<[f64; 3], ModelError> {
    check_dim(u, 2)?;
    let (a, steer) = (u[0], u[1]);
    if steer.abs() >= std::f64::consts::FRAC_PI_2 {
        return Err(ModelError::InvalidSteering(steer));
    }
    let (s, c) = q[2].sin_cos();
    let v = qdot[0] * c + qdot[1] * s;
    let curvature = steer.tan() / p.wheelbase;
    let omega = v * curvature;
    Ok([a * c - v * omega * s, a * s + v * omega * c, a * curvature])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AirplaneAccel {
    pub acceleration: Vector3<f64>,
    /// Flight-path (pitch) rate implied by the forces.
    pub pitch_rate: f64,
    pub yaw_rate: f64,
}

/// Point-mass airplane with controls `(thrust T, lift coefficient c_L,
/// roll φ)`. Forces act along the body axes: thrust and drag on x, lift on
/// z turned by φ towards y, so the model has no attitude singularity. With
/// zero bank the body x-axis pitch is the flight-path angle.
pub fn airplane_g(
    p: &AirplaneParams,
    pose: &Pose,
    velocity: &Vector3<f64>,
    u: &[f64],
) -> Result<AirplaneAccel, ModelError> {
    check_dim(u, 3)?;
    let (thrust, cl, roll) = (u[0], u[1], u[2]);
    let v2 = velocity.norm_squared();
    let lift = p.lift_gain * cl * v2;
    let drag = (p.drag_zero + p.drag_induced * cl * cl) * v2;
    let (e_v, e_l, e_n) = (pose.forward(), pose.left(), pose.up());

    let along = (thrust - drag) / p.mass - p.gravity * e_v.z;
    let normal = lift * roll.cos() / p.mass - p.gravity * e_n.z;
    let lateral = lift * roll.sin() / p.mass - p.gravity * e_l.z;
    let v = v2.sqrt();
    let horizontal = e_v.xy().norm();
    let (pitch_rate, yaw_rate) = if v > 1e-9 {
        (normal / v, lateral / (v * horizontal.max(1e-9)))
    } else {
        (0.0, 0.0)
    };
    Ok(AirplaneAccel {
        acceleration: e_v * along + e_n * normal + e_l * lateral,
        pitch_rate,
        yaw_rate,
    })
}

/// Multicopter with attitude commands `(θ_cmd, φ_cmd)`.
///
/// Returns `(ẍ, ÿ, z̈, ψ̈)` for state `(x, y, z, ψ)`.
pub fn hover_g(p: &HoverParams, q: [f64; 4], qdot: [f64; 4], u: &[f64]) -> Result<[f64; 4], ModelError> {
    check_dim(u, 2)?;
    let (pitch_cmd, roll_cmd) = (u[0], u[1]);
    let (s, c) = q[3].sin_cos();
    Ok([
        p.gravity * (pitch_cmd * c + roll_cmd * s),
        p.gravity * (pitch_cmd * s - roll_cmd * c),
        -p.k_z * qdot[2],
        -p.k_yaw * qdot[3],
    ])
}

fn check_dim(u: &[f64], expected: usize) -> Result<(), ModelError> {
    if u.len() != expected {
        return Err(ModelError::ControlDimension { expected, got: u.len() });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum VehicleModel {
    Dubins(DubinsParams),
    Airplane(AirplaneParams),
    Hover(HoverParams),
}

impl VehicleModel {
    /// Differential order of the pose dynamics.
    pub fn order(&self) -> usize {
        2
    }

    pub fn control_dim(&self) -> usize {
        match self {
            VehicleModel::Dubins(_) => 2,
            VehicleModel::Airplane(_) => 3,
            VehicleModel::Hover(_) => 2,
        }
    }

    pub fn residual_dim(&self) -> usize {
        match self {
            VehicleModel::Dubins(_) => 4,
            VehicleModel::Airplane(_) => 5,
            VehicleModel::Hover(_) => 4,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            VehicleModel::Dubins(_) => "dubins",
            VehicleModel::Airplane(_) => "airplane",
            VehicleModel::Hover(_) => "hover",
        }
    }

    /// `q^(n) - g(q, q̇, u)` plus the model's kinematic side conditions.
    ///
    /// * Dubins: `[ẍ, ÿ, ψ̈]` mismatch and lateral slip `-ẋ sin ψ + ẏ cos ψ`.
    /// * Airplane: translational mismatch plus the velocity components along
    ///   the body y and z axes (attitude follows the flight path).
    /// * Hover: `[ẍ, ÿ, z̈, ψ̈]` mismatch.
    pub fn residual(&self, kin: &Kinematics, u: &[f64]) -> Result<DVector<f64>, ModelError> {
        let pose = &kin.pose;
        let vel = &kin.velocity;
        let acc = &kin.acceleration;
        match self {
            VehicleModel::Dubins(p) => {
                let yaw = pose.yaw();
                let g = dubins_g(p, [pose.position.x, pose.position.y, yaw], [vel[0], vel[1], vel[5]], u)?;
                let slip = -vel[0] * yaw.sin() + vel[1] * yaw.cos();
                Ok(DVector::from_vec(vec![
                    acc[0] - g[0],
                    acc[1] - g[1],
                    acc[5] - g[2],
                    slip,
                ]))
            }
            VehicleModel::Airplane(p) => {
                let lin = kin.linear_velocity();
                let g = airplane_g(p, pose, &lin, u)?;
                let a = kin.linear_acceleration() - g.acceleration;
                Ok(DVector::from_vec(vec![
                    a.x,
                    a.y,
                    a.z,
                    lin.dot(&pose.left()),
                    lin.dot(&pose.up()),
                ]))
            }
            VehicleModel::Hover(p) => {
                let yaw = pose.yaw();
                let g = hover_g(
                    p,
                    [pose.position.x, pose.position.y, pose.position.z, yaw],
                    [vel[0], vel[1], vel[2], vel[5]],
                    u,
                )?;
                Ok(DVector::from_vec(vec![
                    acc[0] - g[0],
                    acc[1] - g[1],
                    acc[2] - g[2],
                    acc[5] - g[3],
                ]))
            }
        }
    }
}

/// First-order servo lag `u̇[state] = (u[command] - u[state]) / τ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServoModel {
    pub time_constant: f64,
    /// `(state channel, command channel)` index pairs into the control vector.
    pub pairs: Vec<(usize, usize)>,
}

impl ServoModel {
    pub fn h(&self, u: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.pairs.len(),
            self.pairs.iter().map(|&(s, c)| (u[c] - u[s]) / self.time_constant),
        )
    }

    /// Rate of the servo state channels.
    pub fn state_rates(&self, rate: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.pairs.len(), self.pairs.iter().map(|&(s, _)| rate[s]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub id: String,
    pub model: VehicleModel,
    #[serde(default)]
    pub servo: Option<ServoModel>,
    #[serde(default)]
    pub state_bounds: Vec<ChannelBound>,
    pub control_bounds: Vec<Interval>,
    #[serde(default = "unit_weight")]
    pub objective_weight: f64,
    pub obstacle_set: String,
}

fn unit_weight() -> f64 {
    1.0
}

impl ModeSpec {
    pub fn order(&self) -> usize {
        self.model.order()
    }

    pub fn control_dim(&self) -> usize {
        self.model.control_dim()
    }

    /// Controls initialised to the mean of their bounds.
    pub fn initial_control(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.control_bounds.len(),
            self.control_bounds.iter().map(Interval::mean),
        )
    }

    pub fn pose_bounds(&self) -> impl Iterator<Item = &ChannelBound> {
        self.state_bounds.iter().filter(|b| !b.channel.is_derivative())
    }

    pub fn derivative_bounds(&self) -> impl Iterator<Item = &ChannelBound> {
        self.state_bounds.iter().filter(|b| b.channel.is_derivative())
    }

    pub fn bound(&self, channel: StateChannel) -> Option<Interval> {
        self.state_bounds
            .iter()
            .find(|b| b.channel == channel)
            .map(|b| b.interval)
    }

    /// Replaces `null` bound markers read from files with infinities.
    pub fn normalize(&mut self) {
        for b in &mut self.state_bounds {
            b.interval = b.interval.normalized();
        }
        for b in &mut self.control_bounds {
            *b = b.normalized();
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let invalid = |reason: String| ModelError::InvalidSpec {
            mode: self.id.clone(),
            reason,
        };
        if self.control_bounds.len() != self.model.control_dim() {
            return Err(invalid(format!(
                "{} model takes {} controls, {} bounds given",
                self.model.name(),
                self.model.control_dim(),
                self.control_bounds.len()
            )));
        }
        for (i, b) in self.control_bounds.iter().enumerate() {
            if !(b.min <= b.max) {
                return Err(invalid(format!("control bound {i} not ordered")));
            }
        }
        for b in &self.state_bounds {
            if !(b.interval.min <= b.interval.max) {
                return Err(invalid(format!("state bound {:?} not ordered", b.channel)));
            }
        }
        if !(self.objective_weight > 0.0 && self.objective_weight.is_finite()) {
            return Err(invalid(format!(
                "objective weight must be positive, got {}",
                self.objective_weight
            )));
        }
        if let Some(servo) = &self.servo {
            if !(servo.time_constant > 0.0) {
                return Err(invalid("servo time constant must be positive".into()));
            }
            let k = self.control_dim();
            if servo.pairs.iter().any(|&(s, c)| s >= k || c >= k || s == c) {
                return Err(invalid("servo channel index out of range".into()));
            }
        }
        let params_ok = match &self.model {
            VehicleModel::Dubins(p) => p.wheelbase > 0.0,
            VehicleModel::Airplane(p) => p.mass > 0.0 && p.lift_gain > 0.0,
            VehicleModel::Hover(p) => p.gravity > 0.0,
        };
        if !params_ok {
            return Err(invalid("non-physical model constants".into()));
        }
        Ok(())
    }

    pub fn taxi() -> Self {
        Self {
            id: "taxi".into(),
            model: VehicleModel::Dubins(DubinsParams::default()),
            servo: None,
            state_bounds: vec![
                ChannelBound {
                    channel: StateChannel::Z,
                    interval: Interval::exactly(0.0),
                },
                ChannelBound {
                    channel: StateChannel::Roll,
                    interval: Interval::exactly(0.0),
                },
                ChannelBound {
                    channel: StateChannel::Pitch,
                    interval: Interval::exactly(0.0),
                },
                ChannelBound {
                    channel: StateChannel::ForwardSpeed,
                    interval: Interval::new(0.0, 10.0),
                },
            ],
            control_bounds: vec![Interval::new(-2.0, 2.0), Interval::new(-0.5, 0.5)],
            objective_weight: 1.0,
            obstacle_set: "taxi".into(),
        }
    }

    pub fn flight() -> Self {
        Self {
            id: "flight".into(),
            model: VehicleModel::Airplane(AirplaneParams::default()),
            servo: None,
            state_bounds: vec![
                ChannelBound {
                    channel: StateChannel::Z,
                    interval: Interval::at_least(0.0),
                },
                ChannelBound {
                    channel: StateChannel::Roll,
                    interval: Interval::exactly(0.0),
                },
                ChannelBound {
                    channel: StateChannel::Pitch,
                    interval: Interval::new(-0.5, 0.5),
                },
                ChannelBound {
                    channel: StateChannel::Speed,
                    interval: Interval::new(8.0, 25.0),
                },
            ],
            control_bounds: vec![
                Interval::new(0.0, 15.0),
                Interval::new(0.0, 1.5),
                Interval::new(-0.6, 0.6),
            ],
            objective_weight: 5.0,
            obstacle_set: "flight".into(),
        }
    }

    pub fn hover() -> Self {
        Self {
            id: "hover".into(),
            model: VehicleModel::Hover(HoverParams::default()),
            servo: None,
            state_bounds: vec![
                ChannelBound {
                    channel: StateChannel::Roll,
                    interval: Interval::exactly(0.0),
                },
                ChannelBound {
                    channel: StateChannel::Pitch,
                    interval: Interval::exactly(0.0),
                },
                ChannelBound {
                    channel: StateChannel::Speed,
                    interval: Interval::at_most(10.0),
                },
            ],
            control_bounds: vec![Interval::new(-0.3, 0.3), Interval::new(-0.3, 0.3)],
            objective_weight: 1.0,
            obstacle_set: "hover".into(),
        }
    }
}

/// Boundary quantities kept continuous across a mode switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuityKind {
    Position,
    Velocity,
    /// Compared through [`Pose::bank`].
    Roll,
    Pitch,
    Yaw,
}

impl ContinuityKind {
    pub fn dim(self) -> usize {
        match self {
            ContinuityKind::Position | ContinuityKind::Velocity => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuityChannel {
    pub channel: ContinuityKind,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionSpec {
    pub from: String,
    pub to: String,
    #[serde(default = "default_channels")]
    pub channels: Vec<ContinuityChannel>,
}

fn default_channels() -> Vec<ContinuityChannel> {
    vec![
        ContinuityChannel {
            channel: ContinuityKind::Position,
            weight: 1.0,
        },
        ContinuityChannel {
            channel: ContinuityKind::Velocity,
            weight: 1.0,
        },
    ]
}

impl TransitionSpec {
    /// Full position and velocity continuity.
    pub fn new(from: &str, to: &str) -> Self {
        Self {
            from: from.into(),
            to: to.into(),
            channels: default_channels(),
        }
    }

    pub fn with_channels(mut self, kinds: &[ContinuityKind]) -> Self {
        self.channels = kinds
            .iter()
            .map(|&channel| ContinuityChannel { channel, weight: 1.0 })
            .collect();
        self
    }

    pub fn residual_dim(&self) -> usize {
        self.channels.iter().map(|c| c.channel.dim()).sum()
    }
}

/// Read-only lookup of modes and allowed transitions.
#[derive(Clone, Default)]
pub struct ModeRegistry {
    modes: BTreeMap<String, Arc<ModeSpec>>,
    transitions: BTreeMap<(String, String), Arc<TransitionSpec>>,
}

impl fmt::Debug for ModeRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModeRegistry")
            .field("modes", &self.modes.keys().collect::<Vec<_>>())
            .field("transitions", &self.transitions.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl ModeRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Taxi, flight and hover with their pairwise transitions.
    pub fn builtin() -> Self {
        use ContinuityKind::*;
        let mut r = Self::new();
        for m in [ModeSpec::taxi(), ModeSpec::flight(), ModeSpec::hover()] {
            r.register(m).expect("built-in modes are valid");
        }
        for (a, b) in [("taxi", "flight"), ("flight", "taxi")] {
            r.allow(TransitionSpec::new(a, b).with_channels(&[Position, Velocity, Pitch, Yaw]))
                .expect("built-in modes exist");
        }
        for (a, b) in [("hover", "flight"), ("flight", "hover")] {
            r.allow(TransitionSpec::new(a, b).with_channels(&[Position, Velocity, Yaw]))
                .expect("built-in modes exist");
        }
        r
    }

    pub fn register(&mut self, spec: ModeSpec) -> Result<(), ModelError> {
        spec.validate()?;
        self.modes.insert(spec.id.clone(), Arc::new(spec));
        Ok(())
    }

    pub fn allow(&mut self, spec: TransitionSpec) -> Result<(), ModelError> {
        for id in [&spec.from, &spec.to] {
            if !self.modes.contains_key(id) {
                return Err(ModelError::UnknownMode(id.clone()));
            }
        }
        if spec.channels.is_empty() || spec.channels.iter().any(|c| !(c.weight > 0.0)) {
            return Err(ModelError::InvalidSpec {
                mode: format!("{}->{}", spec.from, spec.to),
                reason: "transition needs at least one positively weighted channel".into(),
            });
        }
        self.transitions
            .insert((spec.from.clone(), spec.to.clone()), Arc::new(spec));
        Ok(())
    }

    pub fn mode(&self, id: &str) -> Result<Arc<ModeSpec>, ModelError> {
        self.modes
            .get(id)
            .cloned()
            .ok_or_else(|| ModelError::UnknownMode(id.to_string()))
    }

    pub fn transition(&self, from: &str, to: &str) -> Result<Arc<TransitionSpec>, ModelError> {
        self.transitions
            .get(&(from.to_string(), to.to_string()))
            .cloned()
            .ok_or_else(|| ModelError::TransitionNotAllowed(from.to_string(), to.to_string()))
    }

    pub fn mode_ids(&self) -> impl Iterator<Item = &str> {
        self.modes.keys().map(String::as_str)
    }

    pub fn modes(&self) -> impl Iterator<Item = &Arc<ModeSpec>> {
        self.modes.values()
    }
}

/// Looks up `mode_id` in `registry`.
pub fn mode_registry(registry: &ModeRegistry, mode_id: &str) -> Result<Arc<ModeSpec>, ModelError> {
    registry.mode(mode_id)
}
