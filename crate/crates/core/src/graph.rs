//! Factor hypergraph of optimizable vertices and weighted residual edges.

use crate::manifold::{ControlVector, ManifoldError, Pose, PoseIncrement, TimeDelta};
use crate::sparse::SparseSymmetric;
use nalgebra::{DMatrix, DVector};
use std::fmt;
use thiserror::Error;

/// Relative central-difference step for numeric Jacobians.
pub const JACOBIAN_STEP: f64 = 1e-6;

pub type VertexId = usize;
pub type EdgeId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("edge {edge} ({label}) references missing vertex {vertex}")]
    MissingVertex {
        edge: EdgeId,
        label: &'static str,
        vertex: VertexId,
    },
    #[error("edge {0} has zero residual dimension")]
    EmptyResidual(EdgeId),
    #[error("edge {edge} has invalid weight {weight}")]
    InvalidWeight { edge: EdgeId, weight: f64 },
    #[error("edge {edge} ({label}) failed to evaluate: {message}")]
    Evaluation {
        edge: EdgeId,
        label: &'static str,
        message: String,
    },
    #[error("edge {edge} ({label}) produced a non-finite Jacobian")]
    Linearization { edge: EdgeId, label: &'static str },
    #[error("increment has length {got}, expected {expected}")]
    IncrementSize { expected: usize, got: usize },
    #[error("increment rejected: {0}")]
    Increment(#[from] ManifoldError),
}

/// Error raised inside a residual function.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct ResidualError(pub String);

impl From<ManifoldError> for ResidualError {
    fn from(e: ManifoldError) -> Self {
        ResidualError(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexKind {
    Pose,
    Control,
    TimeDelta,
}

#[derive(Debug, Clone, PartialEq)]
pub enum VertexValue {
    Pose(Pose),
    Control(ControlVector),
    TimeDelta(TimeDelta),
}

impl VertexValue {
    pub fn kind(&self) -> VertexKind {
        match self {
            VertexValue::Pose(_) => VertexKind::Pose,
            VertexValue::Control(_) => VertexKind::Control,
            VertexValue::TimeDelta(_) => VertexKind::TimeDelta,
        }
    }

    pub fn tangent_dim(&self) -> usize {
        match self {
            VertexValue::Pose(_) => 6,
            VertexValue::Control(u) => u.dim(),
            VertexValue::TimeDelta(_) => 1,
        }
    }

    pub fn boxplus(&self, delta: &[f64]) -> Result<VertexValue, ManifoldError> {
        Ok(match self {
            VertexValue::Pose(q) => VertexValue::Pose(q.boxplus(&PoseIncrement::from_slice(delta))?),
            VertexValue::Control(u) => VertexValue::Control(u.boxplus(delta)?),
            VertexValue::TimeDelta(dt) => VertexValue::TimeDelta(dt.boxplus(delta[0])?),
        })
    }

    /// Perturbation used for numeric differentiation: like `boxplus` but
    /// without the time-delta floor so the difference quotient stays exact.
    fn perturbed(&self, component: usize, h: f64) -> Result<VertexValue, ManifoldError> {
        match self {
            VertexValue::TimeDelta(dt) => Ok(VertexValue::TimeDelta(TimeDelta::raw(dt.seconds() + h))),
            _ => {
                let mut d = vec![0.0; self.tangent_dim()];
                d[component] = h;
                self.boxplus(&d)
            }
        }
    }

    fn step(&self, component: usize) -> f64 {
        let magnitude = match self {
            VertexValue::Pose(q) if component < 3 => q.position[component].abs(),
            VertexValue::Pose(_) => 0.0,
            VertexValue::Control(u) => u.0[component].abs(),
            VertexValue::TimeDelta(dt) => dt.seconds(),
        };
        JACOBIAN_STEP * magnitude.max(1.0)
    }

    pub fn as_pose(&self) -> Option<&Pose> {
        match self {
            VertexValue::Pose(q) => Some(q),
            _ => None,
        }
    }

    pub fn as_control(&self) -> Option<&ControlVector> {
        match self {
            VertexValue::Control(u) => Some(u),
            _ => None,
        }
    }

    pub fn as_time_delta(&self) -> Option<TimeDelta> {
        match self {
            VertexValue::TimeDelta(dt) => Some(*dt),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub id: VertexId,
    pub value: VertexValue,
    /// Fixed vertices are excluded from the increment space.
    pub fixed: bool,
}

/// A residual function over an ordered list of vertex values.
pub trait Residual: Send + Sync {
    fn dim(&self) -> usize;

    fn evaluate(&self, values: &[&VertexValue]) -> Result<DVector<f64>, ResidualError>;

    fn label(&self) -> &'static str {
        "residual"
    }
}

pub struct Edge {
    pub vertices: Vec<VertexId>,
    pub weight: f64,
    pub residual: Box<dyn Residual>,
}

impl Edge {
    pub fn dim(&self) -> usize {
        self.residual.dim()
    }

    pub fn label(&self) -> &'static str {
        self.residual.label()
    }
}

impl fmt::Debug for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Edge")
            .field("label", &self.label())
            .field("vertices", &self.vertices)
            .field("weight", &self.weight)
            .field("dim", &self.dim())
            .finish()
    }
}

/// Offsets of free vertices in the stacked increment vector.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementLayout {
    offsets: Vec<Option<usize>>,
    dims: Vec<usize>,
    dim: usize,
}

impl IncrementLayout {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn offset(&self, v: VertexId) -> Option<usize> {
        self.offsets[v]
    }

    pub fn block(&self, v: VertexId) -> Option<std::ops::Range<usize>> {
        self.offsets[v].map(|o| o..o + self.dims[v])
    }
}

/// Quadratic model `c + 2 bᵀΔx + Δxᵀ H Δx` of the cost around the current
/// vertex values.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub h: SparseSymmetric,
    pub b: DVector<f64>,
    pub c: f64,
    pub layout: IncrementLayout,
}

#[derive(Debug, Default)]
pub struct Graph {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_vertex(&mut self, value: VertexValue, fixed: bool) -> VertexId {
        let id = self.vertices.len();
        self.vertices.push(Vertex { id, value, fixed });
        id
    }

    pub fn add_edge(
        &mut self,
        vertices: Vec<VertexId>,
        weight: f64,
        residual: Box<dyn Residual>,
    ) -> Result<EdgeId, GraphError> {
        let id = self.edges.len();
        if let Some(&v) = vertices.iter().find(|&&v| v >= self.vertices.len()) {
            return Err(GraphError::MissingVertex {
                edge: id,
                label: residual.label(),
                vertex: v,
            });
        }
        if residual.dim() == 0 {
            return Err(GraphError::EmptyResidual(id));
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(GraphError::InvalidWeight { edge: id, weight });
        }
        self.edges.push(Edge {
            vertices,
            weight,
            residual,
        });
        Ok(id)
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex(&self, id: VertexId) -> &Vertex {
        &self.vertices[id]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn set_fixed(&mut self, id: VertexId, fixed: bool) {
        self.vertices[id].fixed = fixed;
    }

    pub fn layout(&self) -> IncrementLayout {
        let mut offsets = Vec::with_capacity(self.vertices.len());
        let mut dims = Vec::with_capacity(self.vertices.len());
        let mut dim = 0;
        for v in &self.vertices {
            let d = v.value.tangent_dim();
            dims.push(d);
            if v.fixed {
                offsets.push(None);
            } else {
                offsets.push(Some(dim));
                dim += d;
            }
        }
        IncrementLayout { offsets, dims, dim }
    }

    fn edge_values(&self, edge: &Edge) -> Vec<&VertexValue> {
        edge.vertices.iter().map(|&v| &self.vertices[v].value).collect()
    }

    /// Unweighted residual of one edge at the current values.
    pub fn edge_residual(&self, id: EdgeId) -> Result<DVector<f64>, GraphError> {
        let edge = &self.edges[id];
        let values = self.edge_values(edge);
        evaluate_checked(id, edge, &values)
    }

    /// `Σ α eᵀe` over all edges.
    pub fn evaluate_cost(&self) -> Result<f64, GraphError> {
        let mut cost = 0.0;
        for (id, edge) in self.edges.iter().enumerate() {
            let e = self.edge_residual(id)?;
            cost += edge.weight * e.norm_squared();
        }
        Ok(cost)
    }

    /// Builds `H = Σ α JᵀJ`, `b = Σ α Jᵀe` and `c = F` with central-difference
    /// Jacobians over the free vertices.
    pub fn linearize(&self) -> Result<SparseSystem, GraphError> {
        let layout = self.layout();
        let mut h = SparseSymmetric::new(layout.dim());
        let mut b = DVector::zeros(layout.dim());
        let mut c = 0.0;

        for (id, edge) in self.edges.iter().enumerate() {
            let base: Vec<&VertexValue> = self.edge_values(edge);
            let e0 = evaluate_checked(id, edge, &base)?;
            c += edge.weight * e0.norm_squared();

            let mut blocks: Vec<(VertexId, DMatrix<f64>)> = Vec::new();
            for (slot, &vid) in edge.vertices.iter().enumerate() {
                if layout.offset(vid).is_none() {
                    continue;
                }
                let value = base[slot];
                let n = value.tangent_dim();
                let mut jac = DMatrix::zeros(e0.len(), n);
                for k in 0..n {
                    let step = value.step(k);
                    let plus = value.perturbed(k, step)?;
                    let minus = value.perturbed(k, -step)?;
                    let mut vals = base.clone();
                    vals[slot] = &plus;
                    let ep = evaluate_checked(id, edge, &vals)?;
                    vals[slot] = &minus;
                    let em = evaluate_checked(id, edge, &vals)?;
                    let col = (ep - em) / (2.0 * step);
                    if col.iter().any(|v| !v.is_finite()) {
                        return Err(GraphError::Linearization {
                            edge: id,
                            label: edge.label(),
                        });
                    }
                    jac.set_column(k, &col);
                }
                blocks.push((vid, jac));
            }

            for (i, (vi, ji)) in blocks.iter().enumerate() {
                let ri = layout.block(*vi).expect("free vertex");
                let g = ji.transpose() * &e0 * edge.weight;
                for (r, gv) in ri.clone().zip(g.iter()) {
                    b[r] += gv;
                }
                for (vj, jj) in blocks.iter().take(i + 1) {
                    let rj = layout.block(*vj).expect("free vertex");
                    let hij = ji.transpose() * jj * edge.weight;
                    for (a, ra) in ri.clone().enumerate() {
                        for (bb, rb) in rj.clone().enumerate() {
                            // diagonal blocks contribute their lower half only
                            if vi != vj || ra >= rb {
                                h.add(ra, rb, hij[(a, bb)]);
                            }
                        }
                    }
                }
            }
        }

        Ok(SparseSystem { h, b, c, layout })
    }

    pub fn values(&self) -> Vec<VertexValue> {
        self.vertices.iter().map(|v| v.value.clone()).collect()
    }

    /// Restores values captured by [`Graph::values`].
    pub fn restore(&mut self, values: Vec<VertexValue>) {
        for (v, value) in self.vertices.iter_mut().zip(values) {
            v.value = value;
        }
    }

    /// Applies `Δx` through each vertex's boxplus. Fixed vertices are
    /// untouched.
    pub fn apply_increment(&mut self, layout: &IncrementLayout, dx: &DVector<f64>) -> Result<(), GraphError> {
        if dx.len() != layout.dim() {
            return Err(GraphError::IncrementSize {
                expected: layout.dim(),
                got: dx.len(),
            });
        }
        let mut updated = Vec::with_capacity(self.vertices.len());
        for v in &self.vertices {
            updated.push(match layout.block(v.id) {
                Some(r) => Some(v.value.boxplus(&dx.as_slice()[r])?),
                None => None,
            });
        }
        for (v, u) in self.vertices.iter_mut().zip(updated) {
            if let Some(u) = u {
                v.value = u;
            }
        }
        Ok(())
    }
}

fn evaluate_checked(id: EdgeId, edge: &Edge, values: &[&VertexValue]) -> Result<DVector<f64>, GraphError> {
    let e = edge.residual.evaluate(values).map_err(|err| GraphError::Evaluation {
        edge: id,
        label: edge.label(),
        message: err.0,
    })?;
    if e.len() != edge.dim() {
        return Err(GraphError::Evaluation {
            edge: id,
            label: edge.label(),
            message: format!("residual has length {}, declared {}", e.len(), edge.dim()),
        });
    }
    if e.iter().any(|v| !v.is_finite()) {
        return Err(GraphError::Evaluation {
            edge: id,
            label: edge.label(),
            message: "non-finite residual".into(),
        });
    }
    Ok(e)
}

/// Residual built from a closure; handy for tests and small problems.
pub struct FnResidual<F> {
    dim: usize,
    label: &'static str,
    f: F,
}

impl<F> FnResidual<F>
where
    F: Fn(&[&VertexValue]) -> Result<DVector<f64>, ResidualError> + Send + Sync,
{
    pub fn new(dim: usize, label: &'static str, f: F) -> Self {
        Self { dim, label, f }
    }
}

impl<F> Residual for FnResidual<F>
where
    F: Fn(&[&VertexValue]) -> Result<DVector<f64>, ResidualError> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, values: &[&VertexValue]) -> Result<DVector<f64>, ResidualError> {
        (self.f)(values)
    }

    fn label(&self) -> &'static str {
        self.label
    }
}
