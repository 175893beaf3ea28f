//! Pose, control and time-delta representations with their increment
//! operators, interpolation and finite-difference stencils.
//!
//! Rotations are unit quaternions. Increments carry a minimal 3-vector
//! rotation `w` applied through the quaternion exponential
//! `exp(w) = (cos|w|, sin|w| w/|w|)`, so `w` is half the axis-angle vector.
//! Derivatives produced by the stencils convert this back to physical
//! angular rates.

use nalgebra::{DVector, Quaternion, UnitQuaternion, Vector3, Vector6};
use thiserror::Error;

/// Lower bound enforced on every time delta after an increment [s].
pub const MIN_TIME_DELTA: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManifoldError {
    #[error("increment contains non-finite values")]
    InvalidIncrement,
    #[error("interpolation parameter {0} outside [0, 1]")]
    InvalidParameter(f64),
    #[error("control dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("non-positive time step {0}")]
    DegenerateTimestep(f64),
    #[error("unsupported derivative order {0}")]
    UnsupportedOrder(usize),
    #[error("stencil window has {got} entries, expected {expected}")]
    WindowSize { expected: usize, got: usize },
}

/// Position in meters plus scalar-first unit quaternion orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

/// Minimal 6-dimensional pose increment.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PoseIncrement {
    pub translation: Vector3<f64>,
    /// Half-angle rotation vector, fed to the quaternion exponential.
    pub rotation: Vector3<f64>,
}

/// Quaternion exponential of the pure quaternion `(0, w)`.
pub fn quat_exp(w: &Vector3<f64>) -> UnitQuaternion<f64> {
    let theta = w.norm();
    if theta < 1e-12 {
        // second-order series, renormalised
        let q = Quaternion::new(1.0 - 0.5 * theta * theta, w.x, w.y, w.z);
        return UnitQuaternion::new_normalize(q);
    }
    let s = theta.sin() / theta;
    UnitQuaternion::new_unchecked(Quaternion::new(theta.cos(), s * w.x, s * w.y, s * w.z))
}

/// Inverse of [`quat_exp`], taking the shortest representative.
pub fn quat_log(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let mut q = *q.quaternion();
    if q.w < 0.0 {
        q = -q;
    }
    let v = q.imag();
    let sin_half = v.norm();
    if sin_half < 1e-12 {
        return v;
    }
    let theta = sin_half.atan2(q.w);
    v * (theta / sin_half)
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self { position, orientation }
    }

    /// Pose from heading (about +z) and nose-up pitch, zero roll.
    pub fn from_yaw_pitch(position: Vector3<f64>, yaw: f64, pitch: f64) -> Self {
        Self::from_euler(position, 0.0, pitch, yaw)
    }

    /// Planar embedding: z = 0, yaw-only rotation.
    pub fn planar(x: f64, y: f64, yaw: f64) -> Self {
        Self::from_yaw_pitch(Vector3::new(x, y, 0.0), yaw, 0.0)
    }

    /// `R = Rz(yaw) * Ry(-pitch) * Rx(roll)`; positive pitch raises the nose.
    pub fn from_euler(position: Vector3<f64>, roll: f64, pitch: f64, yaw: f64) -> Self {
        Self {
            position,
            orientation: UnitQuaternion::from_euler_angles(roll, -pitch, yaw),
        }
    }

    /// (roll, nose-up pitch, yaw), read off the body axes so that pitch and
    /// yaw stay continuous for any roll.
    pub fn euler(&self) -> (f64, f64, f64) {
        let (f, l, u) = (self.forward(), self.left(), self.up());
        (l.z.atan2(u.z), f.z.clamp(-1.0, 1.0).asin(), f.y.atan2(f.x))
    }

    /// Elevation of the body y-axis above the horizontal plane. Equals roll
    /// in level attitude and, unlike roll, is smooth at vertical pitch.
    pub fn bank(&self) -> f64 {
        self.left().z.clamp(-1.0, 1.0).asin()
    }

    pub fn yaw(&self) -> f64 {
        self.euler().2
    }

    pub fn pitch(&self) -> f64 {
        self.euler().1
    }

    pub fn roll(&self) -> f64 {
        self.euler().0
    }

    /// Body x-axis expressed in the world frame.
    pub fn forward(&self) -> Vector3<f64> {
        self.orientation * Vector3::x()
    }

    pub fn left(&self) -> Vector3<f64> {
        self.orientation * Vector3::y()
    }

    pub fn up(&self) -> Vector3<f64> {
        self.orientation * Vector3::z()
    }

    pub fn boxplus(&self, dq: &PoseIncrement) -> Result<Pose, ManifoldError> {
        if !dq.is_finite() {
            return Err(ManifoldError::InvalidIncrement);
        }
        if dq.is_zero() {
            return Ok(*self);
        }
        let q = self.orientation * quat_exp(&dq.rotation);
        Ok(Pose {
            position: self.position + dq.translation,
            orientation: UnitQuaternion::new_normalize(q.into_inner()),
        })
    }

    /// `self ⊟ base`: the increment taking `base` to `self`.
    pub fn boxminus(&self, base: &Pose) -> PoseIncrement {
        PoseIncrement {
            translation: self.position - base.position,
            rotation: quat_log(&(base.orientation.inverse() * self.orientation)),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite()) && self.orientation.coords.iter().all(|v| v.is_finite())
    }
}

/// Free-function form of [`Pose::boxplus`].
pub fn boxplus_pose(q: &Pose, dq: &PoseIncrement) -> Result<Pose, ManifoldError> {
    q.boxplus(dq)
}

/// Free-function form of [`Pose::boxminus`]: `q_b ⊟ q_a`.
pub fn boxminus_pose(q_b: &Pose, q_a: &Pose) -> PoseIncrement {
    q_b.boxminus(q_a)
}

impl PoseIncrement {
    pub fn new(translation: Vector3<f64>, rotation: Vector3<f64>) -> Self {
        Self { translation, rotation }
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            translation: v.fixed_rows::<3>(0).into_owned(),
            rotation: v.fixed_rows::<3>(3).into_owned(),
        }
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            translation: Vector3::new(v[0], v[1], v[2]),
            rotation: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        let mut v = Vector6::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.translation);
        v.fixed_rows_mut::<3>(3).copy_from(&self.rotation);
        v
    }

    /// Translation and physical axis-angle rotation (twice the stored
    /// half-angle vector).
    pub fn motion(&self) -> Vector6<f64> {
        let mut v = self.to_vector();
        v.fixed_rows_mut::<3>(3).scale_mut(2.0);
        v
    }

    pub fn is_zero(&self) -> bool {
        self.translation.iter().chain(self.rotation.iter()).all(|v| *v == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.translation
            .iter()
            .chain(self.rotation.iter())
            .all(|v| v.is_finite())
    }
}

/// Control input vector; its dimension is fixed by the mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlVector(pub DVector<f64>);

impl ControlVector {
    pub fn zeros(dim: usize) -> Self {
        Self(DVector::zeros(dim))
    }

    pub fn from_slice(values: &[f64]) -> Self {
        Self(DVector::from_column_slice(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn boxplus(&self, du: &[f64]) -> Result<ControlVector, ManifoldError> {
        if du.len() != self.dim() {
            return Err(ManifoldError::DimensionMismatch(self.dim(), du.len()));
        }
        if du.iter().any(|v| !v.is_finite()) {
            return Err(ManifoldError::InvalidIncrement);
        }
        Ok(ControlVector(&self.0 + DVector::from_column_slice(du)))
    }
}

/// Positive time step between consecutive poses.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct TimeDelta(f64);

impl TimeDelta {
    /// Values below [`MIN_TIME_DELTA`] are raised to the floor.
    pub fn new(dt: f64) -> Self {
        Self(dt.max(MIN_TIME_DELTA))
    }

    /// Unfloored value, for numeric differentiation only.
    pub(crate) fn raw(dt: f64) -> Self {
        Self(dt)
    }

    pub fn seconds(self) -> f64 {
        self.0
    }

    pub fn boxplus(self, ddt: f64) -> Result<TimeDelta, ManifoldError> {
        if !ddt.is_finite() {
            return Err(ManifoldError::InvalidIncrement);
        }
        if ddt == 0.0 {
            return Ok(self);
        }
        Ok(TimeDelta::new(self.0 + ddt))
    }
}

pub fn interp_pose(q_a: &Pose, q_b: &Pose, s: f64) -> Result<Pose, ManifoldError> {
    if !(0.0..=1.0).contains(&s) {
        return Err(ManifoldError::InvalidParameter(s));
    }
    if s == 0.0 {
        return Ok(*q_a);
    }
    if s == 1.0 {
        return Ok(*q_b);
    }
    let position = q_a.position + (q_b.position - q_a.position) * s;
    // slerp along the shortest arc through the increment representation
    let w = quat_log(&(q_a.orientation.inverse() * q_b.orientation));
    let orientation = UnitQuaternion::new_normalize((q_a.orientation * quat_exp(&(w * s))).into_inner());
    Ok(Pose { position, orientation })
}

pub fn interp_control(u_a: &ControlVector, u_b: &ControlVector, s: f64) -> Result<ControlVector, ManifoldError> {
    if u_a.dim() != u_b.dim() {
        return Err(ManifoldError::DimensionMismatch(u_a.dim(), u_b.dim()));
    }
    if s == 0.0 {
        return Ok(u_a.clone());
    }
    Ok(ControlVector(&u_a.0 * (1.0 - s) + &u_b.0 * s))
}

fn check_dt(dt: f64) -> Result<f64, ManifoldError> {
    if dt > 0.0 && dt.is_finite() {
        Ok(dt)
    } else {
        Err(ManifoldError::DegenerateTimestep(dt))
    }
}

/// Physical rate `(q_b ⊟ q_a) / dt`.
pub fn difference_rate(q_b: &Pose, q_a: &Pose, dt: f64) -> Result<Vector6<f64>, ManifoldError> {
    Ok(q_b.boxminus(q_a).motion() / check_dt(dt)?)
}

/// Velocity and acceleration at the middle of a three-pose window on a
/// nonuniform grid.
pub fn central_stencil(
    q_prev: &Pose,
    q: &Pose,
    q_next: &Pose,
    dt_prev: f64,
    dt_next: f64,
) -> Result<(Vector6<f64>, Vector6<f64>), ManifoldError> {
    let span = check_dt(dt_prev)? + check_dt(dt_next)?;
    let d1 = difference_rate(q, q_prev, dt_prev)?;
    let d2 = difference_rate(q_next, q, dt_next)?;
    let vel = q_next.boxminus(q_prev).motion() / span;
    let acc = (d2 - d1) * (2.0 / span);
    Ok((vel, acc))
}

/// Velocity and acceleration at the first pose of a three-pose window,
/// from the quadratic through the three poses.
pub fn forward_stencil(
    q0: &Pose,
    q1: &Pose,
    q2: &Pose,
    dt0: f64,
    dt1: f64,
) -> Result<(Vector6<f64>, Vector6<f64>), ManifoldError> {
    let span = check_dt(dt0)? + check_dt(dt1)?;
    let d1 = difference_rate(q1, q0, dt0)?;
    let d2 = difference_rate(q2, q1, dt1)?;
    let acc = (d2 - d1) * (2.0 / span);
    Ok((d1 - acc * (0.5 * dt0), acc))
}

/// Velocity and acceleration at the last pose of a three-pose window.
pub fn backward_stencil(
    q0: &Pose,
    q1: &Pose,
    q2: &Pose,
    dt0: f64,
    dt1: f64,
) -> Result<(Vector6<f64>, Vector6<f64>), ManifoldError> {
    let span = check_dt(dt0)? + check_dt(dt1)?;
    let d1 = difference_rate(q1, q0, dt0)?;
    let d2 = difference_rate(q2, q1, dt1)?;
    let acc = (d2 - d1) * (2.0 / span);
    Ok((d2 + acc * (0.5 * dt1), acc))
}

/// Acceleration at a pose whose velocity is prescribed, looking forward
/// one interval: `q1 = q0 + v0 dt + a dt²/2`.
pub fn prescribed_start_acceleration(
    q0: &Pose,
    q1: &Pose,
    dt: f64,
    v0: &Vector6<f64>,
) -> Result<Vector6<f64>, ManifoldError> {
    let dt = check_dt(dt)?;
    Ok((q1.boxminus(q0).motion() - v0 * dt) * (2.0 / (dt * dt)))
}

/// Acceleration at a pose whose velocity is prescribed, looking back one
/// interval.
pub fn prescribed_end_acceleration(
    q_prev: &Pose,
    q_end: &Pose,
    dt: f64,
    v_end: &Vector6<f64>,
) -> Result<Vector6<f64>, ManifoldError> {
    let dt = check_dt(dt)?;
    let mean = q_end.boxminus(q_prev).motion() / dt;
    Ok((v_end - mean) * (2.0 / dt))
}

/// Derivatives `q̇ .. q^(n)` at the stencil point of `window`.
///
/// Order 1 uses a forward difference over a two-pose window; order 2 uses
/// the nonuniform central stencil over three poses.
pub fn finite_diff(window: &[Pose], dts: &[f64], order: usize) -> Result<Vec<Vector6<f64>>, ManifoldError> {
    match order {
        1 => {
            if window.len() != 2 || dts.len() != 1 {
                return Err(ManifoldError::WindowSize {
                    expected: 2,
                    got: window.len(),
                });
            }
            Ok(vec![difference_rate(&window[1], &window[0], dts[0])?])
        }
        2 => {
            if window.len() != 3 || dts.len() != 2 {
                return Err(ManifoldError::WindowSize {
                    expected: 3,
                    got: window.len(),
                });
            }
            let (v, a) = central_stencil(&window[0], &window[1], &window[2], dts[0], dts[1])?;
            Ok(vec![v, a])
        }
        n => Err(ManifoldError::UnsupportedOrder(n)),
    }
}

/// Forward difference of control vectors, `(u_b - u_a) / dt`.
pub fn control_rate(u_a: &ControlVector, u_b: &ControlVector, dt: f64) -> Result<DVector<f64>, ManifoldError> {
    if u_a.dim() != u_b.dim() {
        return Err(ManifoldError::DimensionMismatch(u_a.dim(), u_b.dim()));
    }
    Ok((&u_b.0 - &u_a.0) / check_dt(dt)?)
}

/// Angle of the relative rotation between two orientations [rad].
pub fn rotation_distance(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    a.angle_to(b)
}

/// Wraps an angle to (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut r = a % two_pi;
    if r <= -std::f64::consts::PI {
        r += two_pi;
    } else if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}
