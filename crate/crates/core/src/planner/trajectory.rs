use crate::manifold::{ControlVector, Pose, TimeDelta};
use nalgebra::{Vector3, Vector6};

/// A start or goal condition: a pose and, optionally, a prescribed
/// world-frame velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryCondition {
    pub pose: Pose,
    pub velocity: Option<Vector3<f64>>,
}

impl BoundaryCondition {
    pub fn at_rest(pose: Pose) -> Self {
        Self {
            pose,
            velocity: Some(Vector3::zeros()),
        }
    }

    pub fn free(pose: Pose) -> Self {
        Self { pose, velocity: None }
    }

    pub(crate) fn twist(&self) -> Option<Vector6<f64>> {
        self.velocity.map(|v| Vector6::new(v.x, v.y, v.z, 0.0, 0.0, 0.0))
    }
}

/// Single-mode band: `N` poses and controls, `N - 1` time deltas.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentTEB {
    pub mode: String,
    pub poses: Vec<Pose>,
    pub controls: Vec<ControlVector>,
    pub dts: Vec<TimeDelta>,
}

impl SegmentTEB {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.dts.iter().map(|d| d.seconds()).sum()
    }

    pub fn arc_length(&self) -> f64 {
        self.poses
            .windows(2)
            .map(|w| (w[1].position - w[0].position).norm())
            .sum()
    }

    pub fn dt_seconds(&self) -> Vec<f64> {
        self.dts.iter().map(|d| d.seconds()).collect()
    }

    pub fn check(&self) -> Result<(), String> {
        let n = self.poses.len();
        if n < 2 {
            return Err(format!("segment '{}' has {n} poses", self.mode));
        }
        if self.controls.len() != n || self.dts.len() != n - 1 {
            return Err(format!(
                "segment '{}' has {n} poses, {} controls, {} time deltas",
                self.mode,
                self.controls.len(),
                self.dts.len()
            ));
        }
        Ok(())
    }
}

/// Ordered segments; each consecutive pair is linked by a transition.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeTrajectory {
    pub segments: Vec<SegmentTEB>,
    pub start: BoundaryCondition,
    pub goal: BoundaryCondition,
}

impl CompositeTrajectory {
    pub fn mode_sequence(&self) -> Vec<String> {
        self.segments.iter().map(|s| s.mode.clone()).collect()
    }

    pub fn transition_count(&self) -> usize {
        self.segments.len().saturating_sub(1)
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(SegmentTEB::duration).sum()
    }

    pub fn pose_count(&self) -> usize {
        self.segments.iter().map(SegmentTEB::len).sum()
    }

    pub fn check(&self) -> Result<(), String> {
        if self.segments.is_empty() {
            return Err("trajectory has no segments".into());
        }
        for s in &self.segments {
            s.check()?;
        }
        if let Some(w) = self.segments.windows(2).find(|w| w[0].mode == w[1].mode) {
            return Err(format!("adjacent segments share mode '{}'", w[0].mode));
        }
        Ok(())
    }
}

/// True when `sub` can be obtained from `full` by deleting entries.
pub fn is_subsequence<T: PartialEq>(sub: &[T], full: &[T]) -> bool {
    let mut it = full.iter();
    sub.iter().all(|s| it.any(|f| f == s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsequence() {
        assert!(is_subsequence(&["a", "c"], &["a", "b", "c"]));
        assert!(is_subsequence::<&str>(&[], &["a"]));
        assert!(!is_subsequence(&["c", "a"], &["a", "b", "c"]));
        assert!(!is_subsequence(&["a", "a"], &["a", "b"]));
    }
}
