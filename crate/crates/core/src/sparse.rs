//! Symmetric sparse storage and a profile (envelope) Cholesky
//! factorization under reverse Cuthill-McKee ordering.
//!
//! Pose-graph normal equations are banded chains, so RCM keeps the
//! envelope narrow and the factorization cost close to `n * bw^2`.

use nalgebra::{DMatrix, DVector};
use std::collections::{BTreeMap, VecDeque};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("right-hand side has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Symmetric matrix storing the lower triangle row by row.
///
/// Entries are structural: an entry added with value zero still belongs
/// to the sparsity pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetric {
    n: usize,
    lower: Vec<BTreeMap<usize, f64>>,
}

impl SparseSymmetric {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            lower: vec![BTreeMap::new(); n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Adds `v` to entry `(i, j)` (and implicitly `(j, i)`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        *self.lower[r].entry(c).or_insert(0.0) += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        self.lower[r].get(&c).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        self.lower[r].contains_key(&c)
    }

    /// Number of stored lower-triangle entries.
    pub fn nnz_lower(&self) -> usize {
        self.lower.iter().map(BTreeMap::len).sum()
    }

    pub fn iter_lower(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.lower
            .iter()
            .enumerate()
            .flat_map(|(r, row)| row.iter().map(move |(c, v)| (r, *c, *v)))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (r, c, v) in self.iter_lower() {
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
        m
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n);
        for (r, c, v) in self.iter_lower() {
            y[r] += v * x[c];
            if r != c {
                y[c] += v * x[r];
            }
        }
        y
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for (r, c, _) in self.iter_lower() {
            if r != c {
                adj[r].push(c);
                adj[c].push(r);
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }
}

/// Reverse Cuthill-McKee ordering; `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &SparseSymmetric) -> Vec<usize> {
    let adj = a.adjacency();
    let n = a.dim();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));

    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = peripheral_node(seed, &adj, &degree);
        let mut queue = VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Pseudo-peripheral node of the component containing `seed`, found by
/// repeated breadth-first sweeps.
fn peripheral_node(seed: usize, adj: &[Vec<usize>], degree: &[usize]) -> usize {
    let mut current = seed;
    let mut best_ecc = 0;
    for _ in 0..8 {
        let levels = bfs_levels(current, adj);
        let ecc = levels.iter().filter_map(|l| *l).max().unwrap_or(0);
        if ecc <= best_ecc && current != seed {
            break;
        }
        best_ecc = ecc;
        let candidate = levels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Some(ecc))
            .map(|(v, _)| v)
            .min_by_key(|&v| (degree[v], v))
            .unwrap_or(current);
        if candidate == current {
            break;
        }
        current = candidate;
    }
    current
}

fn bfs_levels(start: usize, adj: &[Vec<usize>]) -> Vec<Option<usize>> {
    let mut level = vec![None; adj.len()];
    level[start] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        let l = level[v].unwrap_or(0);
        for &w in &adj[v] {
            if level[w].is_none() {
                level[w] = Some(l + 1);
                queue.push_back(w);
            }
        }
    }
    level
}

/// Cholesky factor `P (A + shift I) P^T = L L^T` stored by envelope rows.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl EnvelopeCholesky {
    pub fn factor(a: &SparseSymmetric, shift: f64) -> Result<Self, SolveError> {
        let n = a.dim();
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }

        // permuted lower-triangle entries grouped by row
        let mut entries: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (r, c, v) in a.iter_lower() {
            let (pr, pc) = (inv[r], inv[c]);
            let (row, col) = if pr >= pc { (pr, pc) } else { (pc, pr) };
            entries[row].push((col, v));
        }

        let mut first = vec![0; n];
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let f = entries[i].iter().map(|(c, _)| *c).min().unwrap_or(i).min(i);
            first[i] = f;
            let mut row = vec![0.0; i - f + 1];
            for &(c, v) in &entries[i] {
                row[c - f] += v;
            }
            row[i - f] += shift;
            rows.push(row);
        }

        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let mut s = rows[i][j - fi];
                for k in k0..j {
                    s -= rows[i][k - fi] * rows[j][k - fj];
                }
                let djj = rows[j][j - fj];
                rows[i][j - fi] = s / djj;
            }
            let mut d = rows[i][i - fi];
            let scale = d.abs().max(1.0);
            for k in fi..i {
                let l = rows[i][k - fi];
                d -= l * l;
            }
            if !(d.is_finite() && d > 1e-13 * scale) {
                return Err(SolveError::NotPositiveDefinite { row: perm[i], pivot: d });
            }
            rows[i][i - fi] = d.sqrt();
        }

        Ok(Self { perm, first, rows })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Stored factor entries, a proxy for fill.
    pub fn envelope_size(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>, SolveError> {
        let n = self.dim();
        if b.len() != n {
            return Err(SolveError::DimensionMismatch {
                expected: n,
                got: b.len(),
            });
        }
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let mut s = y[i];
            for k in fi..i {
                s -= self.rows[i][k - fi] * y[k];
            }
            y[i] = s / self.rows[i][i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            y[i] /= self.rows[i][i - fi];
            let yi = y[i];
            for k in fi..i {
                y[k] -= self.rows[i][k - fi] * yi;
            }
        }
        let mut x = DVector::zeros(n);
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        Ok(x)
    }
}
