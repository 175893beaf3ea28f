use super::SegmentTEB;
use crate::manifold::{interp_control, interp_pose, Pose, TimeDelta};
use nalgebra::Vector3;

/// Spatial and temporal resolution targets for a band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResizeLimits {
    pub d_min: f64,
    pub d_max: f64,
    pub dt_min: f64,
    pub dt_max: f64,
}

/// Position at the temporal midpoint of interval `k`, from the Lagrange
/// polynomial through the interval ends and up to one neighbour per side.
fn midpoint_position(poses: &[Pose], dts: &[f64], k: usize) -> Vector3<f64> {
    let mut nodes = vec![(0.0, poses[k].position), (dts[k], poses[k + 1].position)];
    if k > 0 {
        nodes.push((-dts[k - 1], poses[k - 1].position));
    }
    if k + 2 < poses.len() {
        nodes.push((dts[k] + dts[k + 1], poses[k + 2].position));
    }
    let t = 0.5 * dts[k];
    nodes.iter().enumerate().fold(Vector3::zeros(), |acc, (i, &(ti, pi))| {
        let basis: f64 = nodes
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &(tj, _))| (t - tj) / (ti - tj))
            .product();
        acc + pi * basis
    })
}

/// One resizing pass over the intervals of `segment`.
///
/// An interval shorter than `d_min` or `dt_min` loses its far pose, or its
/// near pose when the far one is the segment end or cannot go, and the two
/// adjacent time deltas are summed. An interval longer than `d_max` or `dt_max` gets an interpolated
/// midpoint and its time delta is halved. Removal is tried first. A change
/// is skipped when the merged interval would exceed the upper limits or a
/// split half would fall below the lower limits, so repeated passes on a
/// static band settle. The end poses are never removed and every interval
/// changes at most once per pass.
pub fn resize_teb(segment: &SegmentTEB, limits: &ResizeLimits) -> SegmentTEB {
    let mut poses = segment.poses.clone();
    let mut controls = segment.controls.clone();
    let mut dts: Vec<f64> = segment.dt_seconds();
    let dist = |poses: &[Pose], a: usize, b: usize| (poses[b].position - poses[a].position).norm();

    let mut k = 0;
    while k < dts.len() {
        let d = dist(&poses, k, k + 1);
        let dt = dts[k];
        if (d < limits.d_min || dt < limits.dt_min) && poses.len() > 2 {
            let last = poses.len() - 1;
            let candidates = [k + 1, k].into_iter().filter(|&r| r > 0 && r < last);
            let fits = |r: usize| dist(&poses, r - 1, r + 1) <= limits.d_max && dts[r - 1] + dts[r] <= limits.dt_max;
            if let Some(r) = candidates.into_iter().find(|&r| fits(r)) {
                poses.remove(r);
                controls.remove(r);
                dts[r - 1] += dts[r];
                dts.remove(r);
                k = r;
                continue;
            }
        }
        if d > limits.d_max || dt > limits.dt_max {
            let (half_d, half_dt) = (0.5 * d, 0.5 * dt);
            if half_d >= limits.d_min && half_dt >= limits.dt_min {
                let mut mid = interp_pose(&poses[k], &poses[k + 1], 0.5).expect("midpoint parameter");
                mid.position = midpoint_position(&poses, &dts, k);
                let u = interp_control(&controls[k], &controls[k + 1], 0.5).expect("same mode controls");
                poses.insert(k + 1, mid);
                controls.insert(k + 1, u);
                dts[k] = half_dt;
                dts.insert(k + 1, half_dt);
                k += 2;
                continue;
            }
        }
        k += 1;
    }

    SegmentTEB {
        mode: segment.mode.clone(),
        poses,
        controls,
        dts: dts.into_iter().map(TimeDelta::new).collect(),
    }
}
