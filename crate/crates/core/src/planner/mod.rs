//! Outer optimization loop: resize each band, prune collapsed modes,
//! rebuild the graph and run a few Levenberg-Marquardt iterations.

mod build;
mod extract;
mod prune;
mod resize;
mod trajectory;

pub use build::{build_graph, write_back, TrajectoryGraph};
pub use extract::{
    extract_trajectory, feasibility, node_kinematics, FeasibilityReport, TrajectorySample, TransitionInstant,
    BOUND_TOLERANCE, DYNAMICS_TOLERANCE, TRANSITION_POSITION_TOLERANCE, TRANSITION_VELOCITY_TOLERANCE,
};
pub use prune::{prune_modes, PruneContext};
pub use resize::{resize_teb, ResizeLimits};
pub use trajectory::{is_subsequence, BoundaryCondition, CompositeTrajectory, SegmentTEB};

use crate::environment::Environment;
use crate::graph::GraphError;
use crate::lm::{lm_optimize, LmConfig};
use crate::manifold::ManifoldError;
use crate::models::ModeRegistry;
use crate::penalties::PenaltyWeights;
use crate::prm::{build_initial_trajectory, prm_initial_path, InitConfig, InitError, PrmConfig};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("initialization failed: {0}")]
    Init(#[from] InitError),
    #[error("optimization diverged at outer iteration {iteration}: {message}")]
    Divergence { iteration: usize, message: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub n_outer_iterations: usize,
    /// Levenberg-Marquardt iterations per outer iteration.
    pub lm_inner_iterations: usize,
    pub d_min: f64,
    pub d_max: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Initial and bridging time delta [s].
    pub dt_init: f64,
    pub weights: PenaltyWeights,
    pub obstacle_margin: f64,
    pub seed: u64,
    pub prm_samples: usize,
    pub prm_k_nearest: usize,
    pub lambda_init: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            n_outer_iterations: 40,
            lm_inner_iterations: 5,
            d_min: 0.5,
            d_max: 2.0,
            dt_min: 0.02,
            dt_max: 0.3,
            dt_init: 0.1,
            weights: PenaltyWeights::default(),
            obstacle_margin: 0.25,
            seed: 0,
            prm_samples: 500,
            prm_k_nearest: 10,
            lambda_init: 1e-4,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.d_min > 0.0 && self.d_min < self.d_max) {
            return Err(format!("need 0 < d_min < d_max, got {} / {}", self.d_min, self.d_max));
        }
        if !(self.dt_min > 0.0 && self.dt_min < self.dt_max) {
            return Err(format!(
                "need 0 < dt_min < dt_max, got {} / {}",
                self.dt_min, self.dt_max
            ));
        }
        if !(self.dt_init > 0.0) {
            return Err("dt_init must be positive".into());
        }
        if !(self.obstacle_margin >= 0.0) {
            return Err("obstacle_margin must be non-negative".into());
        }
        if self.lm_inner_iterations == 0 {
            return Err("lm_inner_iterations must be at least 1".into());
        }
        self.weights.validate()?;
        self.prm().validate()?;
        self.lm().validate()
    }

    pub fn limits(&self) -> ResizeLimits {
        ResizeLimits {
            d_min: self.d_min,
            d_max: self.d_max,
            dt_min: self.dt_min,
            dt_max: self.dt_max,
        }
    }

    pub fn prm(&self) -> PrmConfig {
        PrmConfig {
            samples: self.prm_samples,
            k_nearest: self.prm_k_nearest,
            seed: self.seed,
            margin: self.obstacle_margin,
        }
    }

    fn lm(&self) -> LmConfig {
        LmConfig {
            lambda_init: self.lambda_init,
            max_inner_iterations: self.lm_inner_iterations,
            ..LmConfig::default()
        }
    }
}

/// Everything that defines a planning query.
#[derive(Debug, Clone)]
pub struct PlanProblem {
    pub registry: ModeRegistry,
    pub environment: Arc<Environment>,
    pub start: BoundaryCondition,
    pub goal: BoundaryCondition,
    pub sigma_init: Vec<String>,
}

impl PlanProblem {
    pub fn validate(&self) -> Result<(), PlanError> {
        let cfg = |m: String| PlanError::Config(m);
        if self.sigma_init.is_empty() {
            return Err(cfg("initial mode sequence is empty".into()));
        }
        self.environment.validate().map_err(|e| cfg(e.to_string()))?;
        for id in &self.sigma_init {
            let mode = self.registry.mode(id).map_err(|e| cfg(e.to_string()))?;
            if !self.environment.has_set(&mode.obstacle_set) {
                return Err(cfg(format!(
                    "mode '{id}' references unknown obstacle set '{}'",
                    mode.obstacle_set
                )));
            }
        }
        for w in self.sigma_init.windows(2) {
            if w[0] == w[1] {
                return Err(cfg(format!("mode '{}' repeated back to back", w[0])));
            }
            self.registry.transition(&w[0], &w[1]).map_err(|e| cfg(e.to_string()))?;
        }
        for (name, bc) in [("start", &self.start), ("goal", &self.goal)] {
            if !bc.pose.is_finite() || bc.velocity.is_some_and(|v| v.iter().any(|x| !x.is_finite())) {
                return Err(cfg(format!("{name} state is not finite")));
            }
        }
        Ok(())
    }

    fn obstacle_sets(&self) -> Vec<String> {
        let mut sets: Vec<String> = self
            .sigma_init
            .iter()
            .filter_map(|id| self.registry.mode(id).ok().map(|m| m.obstacle_set.clone()))
            .collect();
        sets.sort();
        sets.dedup();
        sets
    }
}

/// Statistics of one outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub iteration: usize,
    /// Cost after resizing and pruning, before optimization.
    pub cost_before: f64,
    pub cost_after: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub segments: usize,
    pub poses: usize,
    pub duration: f64,
}

#[derive(Debug, Clone)]
pub struct PlanResult {
    pub trajectory: CompositeTrajectory,
    pub samples: Vec<TrajectorySample>,
    pub transitions: Vec<TransitionInstant>,
    pub mode_sequence: Vec<String>,
    pub total_time: f64,
    pub final_cost: f64,
    pub trace: Vec<OuterRecord>,
    /// Cost after every accepted LM step, one list per outer iteration.
    pub accepted_costs: Vec<Vec<f64>>,
    pub feasibility: FeasibilityReport,
}

/// Plans from scratch: roadmap path, initial bands, then the outer loop.
pub fn plan(problem: &PlanProblem, config: &PlannerConfig) -> Result<PlanResult, PlanError> {
    config.validate().map_err(PlanError::Config)?;
    problem.validate()?;
    let sets = problem.obstacle_sets();
    let mut path = prm_initial_path(
        &problem.start.pose,
        &problem.goal.pose,
        &problem.environment,
        &sets,
        &config.prm(),
    )?;
    if path.len() == 1 {
        path.push(problem.goal.pose);
    }
    let init = InitConfig {
        spacing: 0.5 * (config.d_min + config.d_max),
        dt_init: config.dt_init,
    };
    let traj = build_initial_trajectory(
        &path,
        &problem.sigma_init,
        &problem.registry,
        problem.start,
        problem.goal,
        &init,
    )?;
    optimize(problem, traj, config)
}

/// Replans starting from a previous trajectory instead of the roadmap.
pub fn warm_start(
    problem: &PlanProblem,
    previous: &CompositeTrajectory,
    config: &PlannerConfig,
) -> Result<PlanResult, PlanError> {
    config.validate().map_err(PlanError::Config)?;
    problem.validate()?;
    let mut traj = previous.clone();
    traj.check().map_err(PlanError::Config)?;
    traj.start = problem.start;
    traj.goal = problem.goal;
    traj.segments[0].poses[0] = problem.start.pose;
    *traj.segments.last_mut().unwrap().poses.last_mut().unwrap() = problem.goal.pose;
    optimize(problem, traj, config)
}

fn optimize(
    problem: &PlanProblem,
    mut traj: CompositeTrajectory,
    config: &PlannerConfig,
) -> Result<PlanResult, PlanError> {
    let env = &problem.environment;
    let limits = config.limits();
    let prune_ctx = PruneContext {
        registry: &problem.registry,
        environment: env,
        d_min: config.d_min,
        dt_init: config.dt_init,
    };
    let mut lm = config.lm();
    let mut trace = Vec::with_capacity(config.n_outer_iterations);
    let mut accepted_costs = Vec::with_capacity(config.n_outer_iterations);
    let mut final_cost = f64::NAN;

    for iteration in 0..config.n_outer_iterations {
        let diverged = |message: String| PlanError::Divergence { iteration, message };
        for seg in traj.segments.iter_mut() {
            *seg = resize_teb(seg, &limits);
        }
        traj = prune_modes(&traj, &prune_ctx);
        let mut tg = build_graph(&traj, &problem.registry, env, config)?;
        let cost_before = tg.graph.evaluate_cost().map_err(|e| diverged(e.to_string()))?;
        if !cost_before.is_finite() {
            return Err(diverged(format!("cost is {cost_before}")));
        }
        let report = lm_optimize(&mut tg.graph, &lm).map_err(|e| diverged(e.to_string()))?;
        if !report.final_cost.is_finite() {
            return Err(diverged(format!("cost is {}", report.final_cost)));
        }
        write_back(&mut traj, &tg);
        lm.lambda_init = report.final_lambda.clamp(1e-6, 1e3);
        final_cost = report.final_cost;
        trace.push(OuterRecord {
            iteration,
            cost_before,
            cost_after: report.final_cost,
            accepted_steps: report.accepted,
            rejected_steps: report.rejected,
            segments: traj.segments.len(),
            poses: traj.pose_count(),
            duration: traj.duration(),
        });
        accepted_costs.push(report.accepted_costs);
    }

    if config.n_outer_iterations == 0 {
        final_cost = build_graph(&traj, &problem.registry, env, config)?
            .graph
            .evaluate_cost()
            .map_err(|e| PlanError::Divergence {
                iteration: 0,
                message: e.to_string(),
            })?;
    }
    let (samples, transitions) = extract_trajectory(&traj)?;
    let report = feasibility(&traj, &problem.registry, env, config)?;
    Ok(PlanResult {
        mode_sequence: traj.mode_sequence(),
        total_time: traj.duration(),
        trajectory: traj,
        samples,
        transitions,
        final_cost,
        trace,
        accepted_costs,
        feasibility: report,
    })
}
