//! Obstacle sets built from primitive shapes, queried by signed distance.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Distance reported for an empty obstacle set [m].
pub const FREE_SPACE_DISTANCE: f64 = 1e9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvironmentError {
    #[error("unknown obstacle set '{0}'")]
    UnknownSet(String),
    #[error("invalid primitive in set '{set}': {reason}")]
    InvalidPrimitive { set: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Primitive {
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    /// Axis-aligned box.
    Box {
        min: [f64; 3],
        max: [f64; 3],
    },
    /// Points with `normal · p < offset` are inside.
    HalfSpace {
        normal: [f64; 3],
        offset: f64,
    },
}

impl Primitive {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Primitive::Sphere { center, radius } => {
                if !(*radius > 0.0) || center.iter().any(|c| !c.is_finite()) {
                    return Err(format!("sphere radius must be positive, got {radius}"));
                }
            }
            Primitive::Box { min, max } => {
                if min.iter().zip(max).any(|(a, b)| !(a <= b)) {
                    return Err(format!("box corners not ordered: {min:?} / {max:?}"));
                }
            }
            Primitive::HalfSpace { normal, offset } => {
                let n = Vector3::from(*normal).norm();
                if !(n > 0.0) || !offset.is_finite() {
                    return Err("half-space normal must be nonzero".into());
                }
            }
        }
        Ok(())
    }

    /// Exact signed distance, negative inside.
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        match self {
            Primitive::Sphere { center, radius } => (p - Vector3::from(*center)).norm() - radius,
            Primitive::Box { min, max } => {
                let lo = Vector3::from(*min);
                let hi = Vector3::from(*max);
                let center = (lo + hi) * 0.5;
                let half = (hi - lo) * 0.5;
                let q = (p - center).abs() - half;
                let outside = q.map(|v| v.max(0.0)).norm();
                let inside = q.max().min(0.0);
                outside + inside
            }
            Primitive::HalfSpace { normal, offset } => {
                let n = Vector3::from(*normal);
                let len = n.norm();
                (n.dot(p) - offset) / len
            }
        }
    }
}

/// Axis-aligned workspace box used for sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Workspace {
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] - 1e-12 && p[i] <= self.max[i] + 1e-12)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub workspace: Workspace,
    #[serde(default)]
    pub obstacle_sets: BTreeMap<String, Vec<Primitive>>,
}

impl Environment {
    pub fn new(workspace: Workspace) -> Self {
        Self {
            workspace,
            obstacle_sets: BTreeMap::new(),
        }
    }

    pub fn with_set(mut self, id: &str, primitives: Vec<Primitive>) -> Self {
        self.obstacle_sets.insert(id.to_string(), primitives);
        self
    }

    pub fn validate(&self) -> Result<(), EnvironmentError> {
        if (0..3).any(|i| !(self.workspace.min[i] <= self.workspace.max[i])) {
            return Err(EnvironmentError::InvalidPrimitive {
                set: "workspace".into(),
                reason: "workspace corners not ordered".into(),
            });
        }
        for (id, set) in &self.obstacle_sets {
            for p in set {
                p.validate().map_err(|reason| EnvironmentError::InvalidPrimitive {
                    set: id.clone(),
                    reason,
                })?;
            }
        }
        Ok(())
    }

    pub fn has_set(&self, id: &str) -> bool {
        self.obstacle_sets.contains_key(id)
    }

    fn set(&self, id: &str) -> Result<&[Primitive], EnvironmentError> {
        self.obstacle_sets
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| EnvironmentError::UnknownSet(id.to_string()))
    }

    pub fn signed_distance(&self, p: &Vector3<f64>, set_id: &str) -> Result<f64, EnvironmentError> {
        Ok(min_distance(self.set(set_id)?, p))
    }

    /// Signed distance against the union of several sets.
    pub fn union_distance<S: AsRef<str>>(&self, p: &Vector3<f64>, set_ids: &[S]) -> Result<f64, EnvironmentError> {
        let mut d = FREE_SPACE_DISTANCE;
        for id in set_ids {
            d = d.min(min_distance(self.set(id.as_ref())?, p));
        }
        Ok(d)
    }

    pub fn segment_collision_free(
        &self,
        a: &Vector3<f64>,
        b: &Vector3<f64>,
        set_id: &str,
        margin: f64,
    ) -> Result<bool, EnvironmentError> {
        self.segment_clear_of(a, b, &[set_id], margin)
    }

    /// Samples the segment and requires distance strictly above `margin`
    /// at every sample against every listed set.
    pub fn segment_clear_of<S: AsRef<str>>(
        &self,
        a: &Vector3<f64>,
        b: &Vector3<f64>,
        set_ids: &[S],
        margin: f64,
    ) -> Result<bool, EnvironmentError> {
        let sets: Vec<&[Primitive]> = set_ids
            .iter()
            .map(|id| self.set(id.as_ref()))
            .collect::<Result<_, _>>()?;
        let spacing = sample_spacing(margin);
        let len = (b - a).norm();
        let n = (len / spacing).ceil().max(1.0) as usize;
        for k in 0..=n {
            let p = a + (b - a) * (k as f64 / n as f64);
            if sets.iter().any(|s| min_distance(s, &p) <= margin) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

fn sample_spacing(margin: f64) -> f64 {
    let s = 0.5 * margin;
    if s > 0.0 {
        s.min(0.1)
    } else {
        0.1
    }
}

fn min_distance(set: &[Primitive], p: &Vector3<f64>) -> f64 {
    set.iter()
        .map(|prim| prim.signed_distance(p))
        .fold(FREE_SPACE_DISTANCE, f64::min)
}
