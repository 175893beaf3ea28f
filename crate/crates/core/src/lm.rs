//! Levenberg-Marquardt optimization of a [`Graph`].

use crate::graph::{Graph, GraphError, SparseSystem};
use crate::sparse::{EnvelopeCholesky, SolveError};
use nalgebra::DVector;
use std::io::{self, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct LmConfig {
    pub lambda_init: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub max_inner_iterations: usize,
    /// Relative cost change below which optimization stops.
    pub cost_tolerance: f64,
    /// Damping retries per linearization before giving up.
    pub max_retries: usize,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            lambda_init: 1e-4,
            lambda_up: 10.0,
            lambda_down: 0.5,
            max_inner_iterations: 100,
            cost_tolerance: 1e-8,
            max_retries: 10,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.lambda_up > 1.0 && self.lambda_down < 1.0 && self.lambda_down > 0.0) {
            return Err(format!(
                "lambda schedule must satisfy up > 1 > down > 0 (up = {}, down = {})",
                self.lambda_up, self.lambda_down
            ));
        }
        if !(self.lambda_init >= 0.0) {
            return Err(format!("lambda_init must be non-negative, got {}", self.lambda_init));
        }
        Ok(())
    }
}

/// One damped solve attempt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cost: f64,
    pub lambda: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationReport {
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Number of linearizations performed.
    pub iterations: usize,
    pub accepted: usize,
    pub rejected: usize,
    /// Damping used for every attempt, in order.
    pub lambda_history: Vec<f64>,
    /// Initial cost followed by the cost after every accepted step.
    pub accepted_costs: Vec<f64>,
    pub records: Vec<IterationRecord>,
    pub final_lambda: f64,
}

impl OptimizationReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "iteration,cost,lambda,accepted")?;
        for r in &self.records {
            writeln!(w, "{},{:e},{:e},{}", r.iteration, r.cost, r.lambda, r.accepted as u8)?;
        }
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> io::Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(io::BufWriter::new(f))
    }
}

/// Solves `(H + λI) Δx = -b`.
pub fn lm_step(system: &SparseSystem, lambda: f64) -> Result<DVector<f64>, SolveError> {
    let chol = EnvelopeCholesky::factor(&system.h, lambda)?;
    chol.solve(&(-&system.b))
}

/// Runs Levenberg-Marquardt until the iteration budget is spent, the
/// relative cost change drops below tolerance, or no damped step improves
/// the cost.
///
/// A step is kept only if it strictly lowers the cost; otherwise values
/// are rolled back and λ grows by `lambda_up`. Trial points where a
/// residual cannot be evaluated count as rejected steps.
pub fn lm_optimize(graph: &mut Graph, config: &LmConfig) -> Result<OptimizationReport, GraphError> {
    let mut cost = graph.evaluate_cost()?;
    let mut report = OptimizationReport {
        initial_cost: cost,
        final_cost: cost,
        iterations: 0,
        accepted: 0,
        rejected: 0,
        lambda_history: Vec::new(),
        accepted_costs: vec![cost],
        records: Vec::new(),
        final_lambda: config.lambda_init,
    };
    if graph.layout().dim() == 0 || cost == 0.0 {
        return Ok(report);
    }

    let mut lambda = config.lambda_init.max(1e-12);
    for iteration in 0..config.max_inner_iterations {
        let system = graph.linearize()?;
        report.iterations += 1;
        if system.b.amax() == 0.0 {
            break;
        }

        let mut improved = None;
        for _ in 0..config.max_retries.max(1) {
            report.lambda_history.push(lambda);
            let dx = match lm_step(&system, lambda) {
                Ok(dx) => dx,
                Err(_) => {
                    report.rejected += 1;
                    report.records.push(IterationRecord {
                        iteration,
                        cost: f64::INFINITY,
                        lambda,
                        accepted: false,
                    });
                    lambda *= config.lambda_up;
                    continue;
                }
            };
            let saved = graph.values();
            let trial = graph
                .apply_increment(&system.layout, &dx)
                .ok()
                .and_then(|_| graph.evaluate_cost().ok())
                .unwrap_or(f64::INFINITY);
            report.records.push(IterationRecord {
                iteration,
                cost: trial,
                lambda,
                accepted: trial < cost,
            });
            if trial < cost {
                report.accepted += 1;
                improved = Some(trial);
                lambda = (lambda * config.lambda_down).max(1e-12);
                break;
            }
            graph.restore(saved);
            report.rejected += 1;
            lambda *= config.lambda_up;
        }

        let Some(new_cost) = improved else { break };
        let change = (cost - new_cost) / cost.max(f64::MIN_POSITIVE);
        cost = new_cost;
        report.accepted_costs.push(cost);
        if cost == 0.0 || change < config.cost_tolerance {
            break;
        }
    }
    report.final_cost = cost;
    report.final_lambda = lambda;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{FnResidual, VertexValue};
    use crate::manifold::ControlVector;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_graph(x0: &[f64]) -> Graph {
        let mut g = Graph::new();
        for &x in x0 {
            g.add_vertex(VertexValue::Control(ControlVector::from_slice(&[x])), false);
        }
        g
    }

    fn x(g: &Graph, i: usize) -> f64 {
        g.vertex(i).value.as_control().unwrap().0[0]
    }

    fn identity_system(b: &[f64]) -> SparseSystem {
        let mut g = scalar_graph(&vec![0.0; b.len()]);
        let n = b.len();
        let target = b.to_vec();
        // e = x + b gives H = I, b = b at x = 0
        g.add_edge(
            (0..n).collect(),
            1.0,
            Box::new(FnResidual::new(n, "id", move |v| {
                Ok(DVector::from_fn(n, |i, _| v[i].as_control().unwrap().0[0] + target[i]))
            })),
        )
        .unwrap();
        g.linearize().unwrap()
    }

    #[test]
    fn identity_step() {
        let sys = identity_system(&[1.0, -2.0]);
        let dx = lm_step(&sys, 0.0).unwrap();
        assert!((dx - DVector::from_vec(vec![-1.0, 2.0])).amax() < 1e-9);
    }

    #[test]
    fn damping_shrinks_step_monotonically() {
        let sys = identity_system(&[1.0, -2.0, 0.5]);
        let mut prev = f64::INFINITY;
        for k in 0..12 {
            let n = lm_step(&sys, 10f64.powi(k - 4)).unwrap().norm();
            assert!(n < prev);
            prev = n;
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn matches_dense_solve_on_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let n = 20;
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let spd = &a * a.transpose() + DMatrix::identity(n, n) * 0.5;
        let b = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let mut h = crate::sparse::SparseSymmetric::new(n);
        for i in 0..n {
            for j in 0..=i {
                h.add(i, j, spd[(i, j)]);
            }
        }
        let layout = Graph::new().layout();
        let sys = SparseSystem {
            h,
            b: b.clone(),
            c: 0.0,
            layout,
        };
        let dx = lm_step(&sys, 0.1).unwrap();
        let oracle = (spd + DMatrix::identity(n, n) * 0.1).lu().solve(&(-b)).unwrap();
        assert!((dx - oracle).amax() < 1e-10);
    }

    #[test]
    fn linear_problem_converges() {
        let mut g = scalar_graph(&[0.0]);
        g.add_edge(
            vec![0],
            1.0,
            Box::new(FnResidual::new(1, "lin", |v| {
                Ok(DVector::from_element(1, v[0].as_control().unwrap().0[0] - 5.0))
            })),
        )
        .unwrap();
        let r = lm_optimize(&mut g, &LmConfig::default()).unwrap();
        assert!((x(&g, 0) - 5.0).abs() < 1e-6);
        assert!(r.iterations <= 10);
    }

    #[test]
    fn rosenbrock_reaches_minimum() {
        let mut g = scalar_graph(&[-1.2, 1.0]);
        g.add_edge(
            vec![0, 1],
            1.0,
            Box::new(FnResidual::new(2, "rosenbrock", |v| {
                let (x, y) = (v[0].as_control().unwrap().0[0], v[1].as_control().unwrap().0[0]);
                Ok(DVector::from_vec(vec![1.0 - x, 10.0 * (y - x * x)]))
            })),
        )
        .unwrap();
        let cfg = LmConfig {
            max_inner_iterations: 200,
            cost_tolerance: 1e-15,
            ..LmConfig::default()
        };
        let r = lm_optimize(&mut g, &cfg).unwrap();
        assert!((x(&g, 0) - 1.0).abs() < 1e-4, "{}", x(&g, 0));
        assert!((x(&g, 1) - 1.0).abs() < 1e-4);
        assert!(r.accepted_costs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_residual_start_is_stationary() {
        let mut g = scalar_graph(&[5.0]);
        g.add_edge(
            vec![0],
            1.0,
            Box::new(FnResidual::new(1, "lin", |v| {
                Ok(DVector::from_element(1, v[0].as_control().unwrap().0[0] - 5.0))
            })),
        )
        .unwrap();
        let r = lm_optimize(&mut g, &LmConfig::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.final_cost, 0.0);
        assert_eq!(x(&g, 0), 5.0);
    }

    #[test]
    fn all_fixed_is_noop() {
        let mut g = scalar_graph(&[1.0]);
        g.set_fixed(0, true);
        g.add_edge(
            vec![0],
            1.0,
            Box::new(FnResidual::new(1, "lin", |v| {
                Ok(DVector::from_element(1, v[0].as_control().unwrap().0[0] - 5.0))
            })),
        )
        .unwrap();
        let r = lm_optimize(&mut g, &LmConfig::default()).unwrap();
        assert_eq!(r.final_cost, 16.0);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn rejected_steps_roll_back_exactly() {
        // strongly nonlinear residual so the first undamped step overshoots
        let mut g = scalar_graph(&[3.0]);
        g.add_edge(
            vec![0],
            1.0,
            Box::new(FnResidual::new(1, "atan", |v| {
                Ok(DVector::from_element(1, v[0].as_control().unwrap().0[0].atan()))
            })),
        )
        .unwrap();
        let cfg = LmConfig {
            lambda_init: 0.0,
            max_inner_iterations: 1,
            ..LmConfig::default()
        };
        let before = g.evaluate_cost().unwrap();
        let r = lm_optimize(&mut g, &cfg).unwrap();
        assert!(r.rejected >= 1);
        assert!(r.final_cost <= before);
        assert_eq!(g.evaluate_cost().unwrap(), r.final_cost);
    }

    #[test]
    fn csv_diagnostics() {
        let mut g = scalar_graph(&[0.0]);
        g.add_edge(
            vec![0],
            1.0,
            Box::new(FnResidual::new(1, "lin", |v| {
                Ok(DVector::from_element(1, v[0].as_control().unwrap().0[0] - 5.0))
            })),
        )
        .unwrap();
        let r = lm_optimize(&mut g, &LmConfig::default()).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "iteration,cost,lambda,accepted");
        assert_eq!(text.lines().count(), r.records.len() + 1);
    }

    #[test]
    fn schedule_validation() {
        assert!(LmConfig::default().validate().is_ok());
        let bad = LmConfig {
            lambda_up: 0.5,
            ..LmConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
