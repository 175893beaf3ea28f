use super::{CompositeTrajectory, PlanError, PlannerConfig};
use crate::environment::Environment;
use crate::graph::{Graph, GraphError, Residual, VertexId, VertexValue};
use crate::models::ModeRegistry;
use crate::penalties::{
    ControlBoundEdge, DynamicsEdge, DynamicsStencil, ObstacleEdge, RateBoundEdge, ServoEdge, StateBoundEdge, TimeEdge,
    TransitionEdge, VelocityStencil,
};
use std::sync::Arc;

/// Graph for one trajectory plus the vertex ids of every segment entry.
pub struct TrajectoryGraph {
    pub graph: Graph,
    pub poses: Vec<Vec<VertexId>>,
    pub controls: Vec<Vec<VertexId>>,
    pub dts: Vec<Vec<VertexId>>,
}

fn add(
    graph: &mut Graph,
    vertices: Vec<VertexId>,
    weight: f64,
    residual: impl Residual + 'static,
) -> Result<(), GraphError> {
    graph.add_edge(vertices, weight, Box::new(residual)).map(|_| ())
}

/// Builds the composite pose graph for `traj`.
///
/// Interior nodes carry central-stencil dynamics edges. The first and last
/// node of each segment use the prescribed boundary velocity when there is
/// one and a one-sided three-pose stencil otherwise. Controls that no
/// dynamics or servo edge reads are held fixed, as are the start and goal
/// poses.
pub fn build_graph(
    traj: &CompositeTrajectory,
    registry: &ModeRegistry,
    environment: &Arc<Environment>,
    config: &PlannerConfig,
) -> Result<TrajectoryGraph, PlanError> {
    traj.check().map_err(PlanError::Config)?;
    let w = config.weights;
    let mut graph = Graph::new();
    let mut pose_ids = Vec::new();
    let mut control_ids = Vec::new();
    let mut dt_ids = Vec::new();
    let last_seg = traj.segments.len() - 1;

    for (s, seg) in traj.segments.iter().enumerate() {
        let n = seg.len();
        let p: Vec<VertexId> = seg
            .poses
            .iter()
            .enumerate()
            .map(|(i, q)| {
                let fixed = (s == 0 && i == 0) || (s == last_seg && i == n - 1);
                graph.add_vertex(VertexValue::Pose(*q), fixed)
            })
            .collect();
        let u: Vec<VertexId> = seg
            .controls
            .iter()
            .map(|c| graph.add_vertex(VertexValue::Control(c.clone()), false))
            .collect();
        let t: Vec<VertexId> = seg
            .dts
            .iter()
            .map(|d| graph.add_vertex(VertexValue::TimeDelta(*d), false))
            .collect();
        pose_ids.push(p);
        control_ids.push(u);
        dt_ids.push(t);
    }

    for (s, seg) in traj.segments.iter().enumerate() {
        let mode = registry.mode(&seg.mode).map_err(|e| PlanError::Config(e.to_string()))?;
        let (p, u, t) = (&pose_ids[s], &control_ids[s], &dt_ids[s]);
        let n = seg.len();
        let start_v = if s == 0 { traj.start.twist() } else { None };
        let goal_v = if s == last_seg { traj.goal.twist() } else { None };
        let mut control_used = vec![false; n];

        for &dt in t {
            add(
                &mut graph,
                vec![dt],
                w.alpha_obj,
                TimeEdge {
                    mode_weight: mode.objective_weight,
                },
            )?;
        }

        for i in 1..n.saturating_sub(1) {
            add(
                &mut graph,
                vec![p[i - 1], p[i], p[i + 1], t[i - 1], t[i], u[i]],
                w.alpha_con,
                DynamicsEdge {
                    model: mode.model,
                    stencil: DynamicsStencil::Central,
                },
            )?;
            control_used[i] = true;
        }
        let head = match start_v {
            Some(v) => Some((vec![p[0], p[1], t[0], u[0]], DynamicsStencil::PrescribedStart(v))),
            None if n >= 3 => Some((vec![p[0], p[1], p[2], t[0], t[1], u[0]], DynamicsStencil::Forward)),
            None => None,
        };
        let tail = match goal_v {
            Some(v) => Some((
                vec![p[n - 2], p[n - 1], t[n - 2], u[n - 1]],
                DynamicsStencil::PrescribedEnd(v),
            )),
            None if n >= 3 => Some((
                vec![p[n - 3], p[n - 2], p[n - 1], t[n - 3], t[n - 2], u[n - 1]],
                DynamicsStencil::Backward,
            )),
            None => None,
        };
        for (node, end) in [(0, head), (n - 1, tail)] {
            if let Some((vertices, stencil)) = end {
                add(
                    &mut graph,
                    vertices,
                    w.alpha_con,
                    DynamicsEdge {
                        model: mode.model,
                        stencil,
                    },
                )?;
                control_used[node] = true;
            }
        }

        if let Some(servo) = &mode.servo {
            for i in 0..n - 1 {
                add(
                    &mut graph,
                    vec![t[i], u[i], u[i + 1]],
                    w.alpha_con,
                    ServoEdge { servo: servo.clone() },
                )?;
                control_used[i] = true;
                control_used[i + 1] = true;
            }
        }

        let pose_bounds: Vec<_> = mode.pose_bounds().copied().collect();
        let rate_bounds: Vec<_> = mode.derivative_bounds().copied().collect();
        for i in 0..n {
            let fixed = graph.vertex(p[i]).fixed;
            if !pose_bounds.is_empty() && !fixed {
                add(
                    &mut graph,
                    vec![p[i]],
                    w.alpha_con,
                    StateBoundEdge {
                        bounds: pose_bounds.clone(),
                    },
                )?;
            }
            if !fixed {
                add(
                    &mut graph,
                    vec![p[i]],
                    w.alpha_con,
                    ObstacleEdge {
                        environment: Arc::clone(environment),
                        set_id: mode.obstacle_set.clone(),
                        margin: config.obstacle_margin,
                    },
                )?;
            }
            let prescribed = (i == 0 && start_v.is_some()) || (i == n - 1 && goal_v.is_some());
            if !rate_bounds.is_empty() && !prescribed {
                let stencil = VelocityStencil::for_node(i, n);
                let k0 = stencil.window_start(i);
                let mut vs: Vec<VertexId> = p[k0..k0 + stencil.poses()].to_vec();
                vs.extend_from_slice(&t[k0..k0 + stencil.dts()]);
                add(
                    &mut graph,
                    vs,
                    w.alpha_con,
                    RateBoundEdge {
                        bounds: rate_bounds.clone(),
                        stencil,
                    },
                )?;
            }
            if control_used[i] {
                add(
                    &mut graph,
                    vec![u[i]],
                    w.alpha_con,
                    ControlBoundEdge {
                        bounds: mode.control_bounds.clone(),
                    },
                )?;
            } else {
                graph.set_fixed(u[i], true);
            }
        }
    }

    for s in 0..last_seg {
        let (a, b) = (&traj.segments[s], &traj.segments[s + 1]);
        let spec = registry
            .transition(&a.mode, &b.mode)
            .map_err(|e| PlanError::Config(e.to_string()))?;
        let (na, nb) = (a.len(), b.len());
        let tail = VelocityStencil::for_node(na - 1, na);
        let head = VelocityStencil::for_node(0, nb);
        let ta = tail.window_start(na - 1);
        let mut vs: Vec<VertexId> = pose_ids[s][ta..ta + tail.poses()].to_vec();
        vs.extend_from_slice(&pose_ids[s + 1][..head.poses()]);
        vs.extend_from_slice(&dt_ids[s][ta..ta + tail.dts()]);
        vs.extend_from_slice(&dt_ids[s + 1][..head.dts()]);
        add(&mut graph, vs, w.alpha_trans, TransitionEdge { spec, tail, head })?;
    }

    Ok(TrajectoryGraph {
        graph,
        poses: pose_ids,
        controls: control_ids,
        dts: dt_ids,
    })
}

/// Copies optimized vertex values back into `traj`.
pub fn write_back(traj: &mut CompositeTrajectory, tg: &TrajectoryGraph) {
    for (s, seg) in traj.segments.iter_mut().enumerate() {
        for (q, &id) in seg.poses.iter_mut().zip(&tg.poses[s]) {
            *q = *tg.graph.vertex(id).value.as_pose().expect("pose vertex");
        }
        for (u, &id) in seg.controls.iter_mut().zip(&tg.controls[s]) {
            *u = tg.graph.vertex(id).value.as_control().expect("control vertex").clone();
        }
        for (d, &id) in seg.dts.iter_mut().zip(&tg.dts[s]) {
            *d = tg.graph.vertex(id).value.as_time_delta().expect("time vertex");
        }
    }
}
