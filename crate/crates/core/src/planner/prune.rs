use super::{BoundaryCondition, CompositeTrajectory, SegmentTEB};
use crate::environment::Environment;
use crate::manifold::{interp_control, interp_pose, TimeDelta};
use crate::models::{ModeRegistry, ModeSpec};

/// Settings and lookups needed to decide whether a segment can go.
pub struct PruneContext<'a> {
    pub registry: &'a ModeRegistry,
    pub environment: &'a Environment,
    pub d_min: f64,
    pub dt_init: f64,
}

fn collapsed(seg: &SegmentTEB, d_min: f64) -> bool {
    seg.len() <= 2 && (seg.poses[seg.len() - 1].position - seg.poses[0].position).norm() < d_min
}

/// Whether `mode` can hold a fixed boundary state: all state bounds
/// satisfied and the position outside the mode's obstacles.
fn admits(mode: &ModeSpec, env: &Environment, bc: &BoundaryCondition) -> bool {
    const TOL: f64 = 1e-9;
    let twist = bc.twist();
    let pose_ok = mode
        .pose_bounds()
        .all(|b| b.interval.hinge(b.channel.value(&bc.pose, None)) <= TOL);
    let rate_ok = match &twist {
        Some(v) => mode
            .derivative_bounds()
            .all(|b| b.interval.hinge(b.channel.value(&bc.pose, Some(v))) <= TOL),
        None => true,
    };
    let clear = env
        .signed_distance(&bc.pose.position, &mode.obstacle_set)
        .map(|d| d >= 0.0)
        .unwrap_or(false);
    pose_ok && rate_ok && clear
}

/// Joins two same-mode segments around the removed segment `gone`,
/// bridging them with the midpoint of `gone`.
fn merge(a: SegmentTEB, gone: &SegmentTEB, b: SegmentTEB, dt_init: f64) -> SegmentTEB {
    let bridge = interp_pose(&gone.poses[0], &gone.poses[gone.len() - 1], 0.5).expect("midpoint parameter");
    let u = interp_control(a.controls.last().unwrap(), &b.controls[0], 0.5).expect("same mode controls");
    let mut out = a;
    out.poses.push(bridge);
    out.controls.push(u);
    out.dts.push(TimeDelta::new(dt_init));
    out.dts.push(TimeDelta::new(dt_init));
    out.poses.extend(b.poses);
    out.controls.extend(b.controls);
    out.dts.extend(b.dts);
    out
}

/// Removes collapsed segments until none can be removed.
///
/// A segment is collapsed when it has at most two poses lying within
/// `d_min` of each other. Its neighbours are merged when they share a
/// mode, or linked directly when the registry allows that transition;
/// otherwise the segment stays. A collapsed first or last segment hands
/// its fixed start or goal pose to its neighbour when the neighbour's mode
/// admits that state, and stays otherwise.
pub fn prune_modes(traj: &CompositeTrajectory, ctx: &PruneContext<'_>) -> CompositeTrajectory {
    let mut out = traj.clone();
    loop {
        let n = out.segments.len();
        let mut changed = false;
        for s in 0..n {
            if n == 1 || !collapsed(&out.segments[s], ctx.d_min) {
                continue;
            }
            if s == 0 || s == n - 1 {
                let (neighbour, bc) = if s == 0 { (1, out.start) } else { (n - 2, out.goal) };
                let Ok(mode) = ctx.registry.mode(&out.segments[neighbour].mode) else {
                    continue;
                };
                if !admits(&mode, ctx.environment, &bc) {
                    continue;
                }
                out.segments.remove(s);
                let seg = if s == 0 {
                    &mut out.segments[0]
                } else {
                    out.segments.last_mut().unwrap()
                };
                if s == 0 {
                    seg.poses[0] = bc.pose;
                } else {
                    *seg.poses.last_mut().unwrap() = bc.pose;
                }
                changed = true;
                break;
            }
            let (prev, next) = (&out.segments[s - 1].mode, &out.segments[s + 1].mode);
            if prev == next {
                let b = out.segments.remove(s + 1);
                let gone = out.segments.remove(s);
                let a = out.segments.remove(s - 1);
                out.segments.insert(s - 1, merge(a, &gone, b, ctx.dt_init));
            } else if ctx.registry.transition(prev, next).is_ok() {
                out.segments.remove(s);
            } else {
                continue;
            }
            changed = true;
            break;
        }
        if !changed {
            return out;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::Workspace;
    use crate::manifold::{ControlVector, Pose};

    fn env() -> Environment {
        Environment::new(Workspace {
            min: [-100.0; 3],
            max: [100.0; 3],
        })
        .with_set("taxi", vec![])
        .with_set("flight", vec![])
        .with_set("hover", vec![])
    }

    fn seg(mode: &str, x0: f64, n: usize, step: f64) -> SegmentTEB {
        let k = if mode == "flight" { 3 } else { 2 };
        SegmentTEB {
            mode: mode.into(),
            poses: (0..n).map(|i| Pose::planar(x0 + step * i as f64, 0.0, 0.0)).collect(),
            controls: vec![ControlVector::zeros(k); n],
            dts: vec![TimeDelta::new(0.1); n - 1],
        }
    }

    fn traj(segments: Vec<SegmentTEB>) -> CompositeTrajectory {
        let start = BoundaryCondition::at_rest(segments[0].poses[0]);
        let goal = BoundaryCondition::at_rest(*segments.last().unwrap().poses.last().unwrap());
        CompositeTrajectory { segments, start, goal }
    }

    #[test]
    fn collapsed_middle_merges_neighbours() {
        let reg = ModeRegistry::builtin();
        let env = env();
        let ctx = PruneContext {
            registry: &reg,
            environment: &env,
            d_min: 0.5,
            dt_init: 0.1,
        };
        let t = traj(vec![
            seg("taxi", 0.0, 20, 1.0),
            seg("flight", 19.0, 2, 0.1),
            seg("taxi", 19.1, 20, 1.0),
        ]);
        let p = prune_modes(&t, &ctx);
        assert_eq!(p.segments.len(), 1);
        assert_eq!(p.segments[0].len(), 41);
        assert_eq!(p.transition_count(), 0);
        p.check().unwrap();
        assert!((p.segments[0].poses[20].position.x - 19.05).abs() < 1e-12);
    }

    #[test]
    fn nothing_collapsed_is_fixed_point() {
        let reg = ModeRegistry::builtin();
        let env = env();
        let ctx = PruneContext {
            registry: &reg,
            environment: &env,
            d_min: 0.5,
            dt_init: 0.1,
        };
        let t = traj(vec![seg("taxi", 0.0, 5, 1.0), seg("flight", 4.0, 5, 1.0)]);
        assert_eq!(prune_modes(&t, &ctx), t);
    }

    #[test]
    fn boundary_segment_exempt_when_neighbour_cannot_hold_state() {
        let reg = ModeRegistry::builtin();
        let env = env();
        let ctx = PruneContext {
            registry: &reg,
            environment: &env,
            d_min: 0.5,
            dt_init: 0.1,
        };
        // flight cannot hold a start at rest
        let t = traj(vec![seg("taxi", 0.0, 2, 0.1), seg("flight", 0.1, 10, 1.0)]);
        assert_eq!(prune_modes(&t, &ctx), t);
        // taxi can hold the goal at rest on the ground
        let t = traj(vec![seg("taxi", 0.0, 10, 1.0), seg("flight", 9.0, 2, 0.1)]);
        let p = prune_modes(&t, &ctx);
        assert_eq!(p.mode_sequence(), vec!["taxi"]);
        assert_eq!(*p.segments[0].poses.last().unwrap(), t.goal.pose);
    }

    #[test]
    fn disallowed_transition_keeps_segment() {
        let reg = ModeRegistry::builtin();
        let env = env();
        let ctx = PruneContext {
            registry: &reg,
            environment: &env,
            d_min: 0.5,
            dt_init: 0.1,
        };
        // removing flight would need taxi -> hover, which is not registered
        let t = traj(vec![
            seg("taxi", 0.0, 5, 1.0),
            seg("flight", 4.0, 2, 0.1),
            seg("hover", 4.1, 5, 1.0),
        ]);
        assert_eq!(prune_modes(&t, &ctx), t);
    }
}
