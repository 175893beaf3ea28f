//! Sampling-based initialization: a collision-free geometric path, the
//! looping mode sequence and the initial composite trajectory.

use crate::environment::{Environment, EnvironmentError};
use crate::manifold::{interp_pose, ControlVector, Pose, TimeDelta};
use crate::models::{ModeRegistry, ModelError};
use crate::planner::{BoundaryCondition, CompositeTrajectory, SegmentTEB};
use nalgebra::Vector3;
use petgraph::algo::astar;
use petgraph::graph::{NodeIndex, UnGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InitError {
    #[error("start position is not clear of obstacles")]
    StartBlocked,
    #[error("goal position is not clear of obstacles")]
    GoalBlocked,
    #[error("no collision-free path found with {samples} samples")]
    NoPath { samples: usize },
    #[error("empty mode list")]
    EmptyModes,
    #[error("n_transitions must be at least 1")]
    NoTransitions,
    #[error("path needs at least two waypoints, got {0}")]
    ShortPath(usize),
    #[error(transparent)]
    Environment(#[from] EnvironmentError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrmConfig {
    pub samples: usize,
    pub k_nearest: usize,
    pub seed: u64,
    /// Clearance required along roadmap edges [m].
    pub margin: f64,
}

impl Default for PrmConfig {
    fn default() -> Self {
        Self {
            samples: 500,
            k_nearest: 10,
            seed: 0,
            margin: 0.25,
        }
    }
}

impl PrmConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.samples == 0 || self.k_nearest == 0 {
            return Err("PRM needs samples > 0 and k_nearest >= 1".into());
        }
        if !(self.margin >= 0.0) {
            return Err(format!("PRM margin must be non-negative, got {}", self.margin));
        }
        Ok(())
    }
}

/// Collision-free waypoints from `start` to `goal` against the union of
/// `set_ids`.
///
/// The straight line is tried first. Otherwise a k-nearest roadmap over
/// uniform workspace samples is searched with A* and the result is
/// shortcut greedily. Intermediate waypoints face the next waypoint with
/// zero pitch and roll. `start == goal` yields a single waypoint.
pub fn prm_initial_path<S: AsRef<str>>(
    start: &Pose,
    goal: &Pose,
    env: &Environment,
    set_ids: &[S],
    config: &PrmConfig,
) -> Result<Vec<Pose>, InitError> {
    let margin = config.margin;
    let clear = |p: &Vector3<f64>| -> Result<bool, InitError> { Ok(env.union_distance(p, set_ids)? > margin) };
    if !clear(&start.position)? {
        return Err(InitError::StartBlocked);
    }
    if !clear(&goal.position)? {
        return Err(InitError::GoalBlocked);
    }
    if start.position == goal.position {
        return Ok(vec![*start]);
    }
    if env.segment_clear_of(&start.position, &goal.position, set_ids, margin)? {
        return Ok(vec![*start, *goal]);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let ws = env.workspace;
    let mut points = vec![start.position, goal.position];
    for _ in 0..config.samples {
        let p = Vector3::from_fn(|i, _| {
            if ws.max[i] > ws.min[i] {
                rng.gen_range(ws.min[i]..=ws.max[i])
            } else {
                ws.min[i]
            }
        });
        if clear(&p)? {
            points.push(p);
        }
    }

    let mut roadmap: UnGraph<Vector3<f64>, f64> = UnGraph::new_undirected();
    let nodes: Vec<NodeIndex> = points.iter().map(|p| roadmap.add_node(*p)).collect();
    for i in 0..points.len() {
        let mut near: Vec<(f64, usize)> = (0..points.len())
            .filter(|&j| j != i)
            .map(|j| ((points[j] - points[i]).norm(), j))
            .collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(d, j) in near.iter().take(config.k_nearest) {
            if roadmap.find_edge(nodes[i], nodes[j]).is_some() {
                continue;
            }
            if env.segment_clear_of(&points[i], &points[j], set_ids, margin)? {
                roadmap.add_edge(nodes[i], nodes[j], d);
            }
        }
    }

    let target = nodes[1];
    let goal_p = goal.position;
    let (_, route) = astar(
        &roadmap,
        nodes[0],
        |n| n == target,
        |e| *e.weight(),
        |n| (roadmap[n] - goal_p).norm(),
    )
    .ok_or(InitError::NoPath {
        samples: config.samples,
    })?;

    let route: Vec<Vector3<f64>> = route.into_iter().map(|n| roadmap[n]).collect();
    let route = shortcut(&route, env, set_ids, margin)?;
    Ok(orient_waypoints(&route, start, goal))
}

/// Greedy shortcutting: from each kept waypoint jump to the farthest one
/// still visible.
fn shortcut<S: AsRef<str>>(
    route: &[Vector3<f64>],
    env: &Environment,
    set_ids: &[S],
    margin: f64,
) -> Result<Vec<Vector3<f64>>, InitError> {
    let mut out = vec![route[0]];
    let mut i = 0;
    while i + 1 < route.len() {
        let mut j = route.len() - 1;
        while j > i + 1 && !env.segment_clear_of(&route[i], &route[j], set_ids, margin)? {
            j -= 1;
        }
        out.push(route[j]);
        i = j;
    }
    Ok(out)
}

fn orient_waypoints(points: &[Vector3<f64>], start: &Pose, goal: &Pose) -> Vec<Pose> {
    let n = points.len();
    (0..n)
        .map(|i| {
            if i == 0 {
                *start
            } else if i == n - 1 {
                *goal
            } else {
                let d = points[i + 1] - points[i];
                Pose::from_yaw_pitch(points[i], d.y.atan2(d.x), 0.0)
            }
        })
        .collect()
}

/// `modes` repeated `n_transitions` times.
pub fn looping_mode_sequence<S: AsRef<str>>(modes: &[S], n_transitions: usize) -> Result<Vec<String>, InitError> {
    if modes.is_empty() {
        return Err(InitError::EmptyModes);
    }
    if n_transitions == 0 {
        return Err(InitError::NoTransitions);
    }
    Ok((0..n_transitions)
        .flat_map(|_| modes.iter().map(|m| m.as_ref().to_string()))
        .collect())
}

/// Discretization settings for the initial trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitConfig {
    /// Pose spacing along the path [m].
    pub spacing: f64,
    pub dt_init: f64,
}

/// Splits the path into `|sigma|` equal arc-length spans, one segment per
/// mode, each sampled at `spacing`. Consecutive segments start and end at
/// the same point with separate poses. The start and goal are substituted
/// into the first and last poses.
pub fn build_initial_trajectory(
    path: &[Pose],
    sigma: &[String],
    registry: &ModeRegistry,
    start: BoundaryCondition,
    goal: BoundaryCondition,
    config: &InitConfig,
) -> Result<CompositeTrajectory, InitError> {
    if path.len() < 2 {
        return Err(InitError::ShortPath(path.len()));
    }
    if sigma.is_empty() {
        return Err(InitError::EmptyModes);
    }
    let mut cumulative = vec![0.0];
    for w in path.windows(2) {
        let last = *cumulative.last().unwrap();
        cumulative.push(last + (w[1].position - w[0].position).norm());
    }
    let total = *cumulative.last().unwrap();
    let span = total / sigma.len() as f64;

    let pose_at = |s: f64| -> Pose {
        if total == 0.0 {
            return path[0];
        }
        let s = s.clamp(0.0, total);
        let k = cumulative[1..].iter().position(|&c| c >= s).unwrap_or(path.len() - 2);
        let len = cumulative[k + 1] - cumulative[k];
        let t = if len > 0.0 {
            ((s - cumulative[k]) / len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        interp_pose(&path[k], &path[k + 1], t).expect("parameter clamped to [0, 1]")
    };

    let mut segments = Vec::with_capacity(sigma.len());
    for (m, mode_id) in sigma.iter().enumerate() {
        let spec = registry.mode(mode_id)?;
        let s0 = span * m as f64;
        let intervals = ((span / config.spacing).ceil() as usize).max(1);
        let poses: Vec<Pose> = (0..=intervals)
            .map(|i| pose_at(s0 + span * i as f64 / intervals as f64))
            .collect();
        let u0 = ControlVector(spec.initial_control());
        let controls = vec![u0; intervals + 1];
        segments.push(SegmentTEB {
            mode: mode_id.clone(),
            poses,
            controls,
            dts: vec![TimeDelta::new(config.dt_init); intervals],
        });
    }
    segments[0].poses[0] = start.pose;
    let last = segments.last_mut().unwrap();
    *last.poses.last_mut().unwrap() = goal.pose;
    Ok(CompositeTrajectory { segments, start, goal })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{Primitive, Workspace};

    fn env() -> Environment {
        Environment::new(Workspace {
            min: [-10.0, -10.0, 0.0],
            max: [60.0, 10.0, 0.0],
        })
        .with_set("free", vec![])
    }

    #[test]
    fn empty_environment_gives_straight_line() {
        let s = Pose::planar(0.0, 0.0, 0.0);
        let g = Pose::planar(50.0, 0.0, 0.0);
        let path = prm_initial_path(&s, &g, &env(), &["free"], &PrmConfig::default()).unwrap();
        assert_eq!(path, vec![s, g]);
        let same = prm_initial_path(&s, &s, &env(), &["free"], &PrmConfig::default()).unwrap();
        assert_eq!(same.len(), 1);
    }

    #[test]
    fn wall_with_gap() {
        let walls = vec![
            Primitive::Box {
                min: [20.0, -10.0, -1.0],
                max: [22.0, -1.5, 1.0],
            },
            Primitive::Box {
                min: [20.0, 1.5, -1.0],
                max: [22.0, 10.0, 1.0],
            },
        ];
        let env = Environment::new(Workspace {
            min: [0.0, -10.0, 0.0],
            max: [40.0, 10.0, 0.0],
        })
        .with_set("w", walls);
        let s = Pose::planar(5.0, 8.0, 0.0);
        let g = Pose::planar(35.0, 8.0, 0.0);
        let cfg = PrmConfig {
            seed: 3,
            ..PrmConfig::default()
        };
        let path = prm_initial_path(&s, &g, &env, &["w"], &cfg).unwrap();
        assert!(path.len() >= 3);
        assert_eq!(path[0], s);
        assert_eq!(*path.last().unwrap(), g);
        for w in path.windows(2) {
            assert!(env
                .segment_collision_free(&w[0].position, &w[1].position, "w", cfg.margin)
                .unwrap());
        }
        // interior waypoints face the next one
        let d = path[2].position - path[1].position;
        assert!((path[1].yaw() - d.y.atan2(d.x)).abs() < 1e-9);
        // same seed, same path
        assert_eq!(path, prm_initial_path(&s, &g, &env, &["w"], &cfg).unwrap());
    }

    #[test]
    fn blocked_goal() {
        let env = env().with_set(
            "ball",
            vec![Primitive::Sphere {
                center: [50.0, 0.0, 0.0],
                radius: 1.0,
            }],
        );
        let r = prm_initial_path(
            &Pose::identity(),
            &Pose::planar(50.0, 0.0, 0.0),
            &env,
            &["ball"],
            &PrmConfig::default(),
        );
        assert_eq!(r, Err(InitError::GoalBlocked));
    }

    #[test]
    fn looping_sequences() {
        assert_eq!(
            looping_mode_sequence(&["taxi", "flight"], 3).unwrap(),
            vec!["taxi", "flight", "taxi", "flight", "taxi", "flight"]
        );
        assert_eq!(looping_mode_sequence(&["hover"], 1).unwrap(), vec!["hover"]);
        assert_eq!(looping_mode_sequence(&["A", "B", "C"], 2).unwrap().concat(), "ABCABC");
        assert_eq!(looping_mode_sequence::<&str>(&[], 2), Err(InitError::EmptyModes));
    }

    #[test]
    fn initial_trajectory_discretization() {
        let reg = ModeRegistry::builtin();
        let s = BoundaryCondition::at_rest(Pose::planar(0.0, 0.0, 0.0));
        let g = BoundaryCondition::at_rest(Pose::planar(100.0, 0.0, 0.0));
        let cfg = InitConfig {
            spacing: 2.0,
            dt_init: 0.1,
        };
        let t = build_initial_trajectory(&[s.pose, g.pose], &["taxi".into()], &reg, s, g, &cfg).unwrap();
        assert_eq!(t.segments.len(), 1);
        let seg = &t.segments[0];
        assert_eq!(seg.len(), 51);
        assert!(seg.dts.iter().all(|d| d.seconds() == 0.1));
        assert!(seg.controls.iter().all(|u| u.as_slice() == [0.0, 0.0]));
        assert!((seg.poses[1].position.x - 2.0).abs() < 1e-12);

        let two =
            build_initial_trajectory(&[s.pose, g.pose], &["taxi".into(), "flight".into()], &reg, s, g, &cfg).unwrap();
        assert_eq!(two.segments.len(), 2);
        assert_eq!(two.transition_count(), 1);
        for seg in &two.segments {
            assert!((seg.arc_length() - 50.0).abs() < 1e-9);
        }
        assert_eq!(
            two.segments[0].poses.last().unwrap().position,
            two.segments[1].poses[0].position
        );
        // flight controls start at the mean of their bounds
        assert_eq!(two.segments[1].controls[0].as_slice(), [7.5, 0.75, 0.0]);
    }

    #[test]
    fn short_span_gets_two_poses() {
        let reg = ModeRegistry::builtin();
        let s = BoundaryCondition::at_rest(Pose::planar(0.0, 0.0, 0.0));
        let g = BoundaryCondition::at_rest(Pose::planar(0.3, 0.0, 0.0));
        let cfg = InitConfig {
            spacing: 1.25,
            dt_init: 0.1,
        };
        let t = build_initial_trajectory(&[s.pose, g.pose], &["taxi".into()], &reg, s, g, &cfg).unwrap();
        assert_eq!(t.segments[0].len(), 2);
    }
}
