//! Problem representations shared by every solver in the crate:
//! weighted graphs, ±1 quadratic forms, Ising energies, QUBO conversion
//! and the exhaustive oracles used throughout the test suites.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Hard cap for exhaustive 2^n enumeration.
pub const BRUTE_FORCE_LIMIT: usize = 25;

/// Undirected weighted graph with 0-based node indices.
///
/// Edges are stored once per unordered pair with `a < b`; self loops and
/// duplicate pairs are rejected at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl WeightedGraph {
    pub fn new(n: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for &(a, b, _) in &edges {
            if a >= b {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a},{b}) must satisfy a < b"
                )));
            }
            if b >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a},{b}) out of range for n = {n}"
                )));
            }
            if !seen.insert((a, b)) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({a},{b})")));
            }
        }
        Ok(Self { n, edges })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Total edge weight.
    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|&(_, _, w)| w).sum()
    }
}

/// A spin assignment, entries exactly ±1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpinState {
    x: Vec<i8>,
}

impl SpinState {
    pub fn new(x: Vec<i8>) -> Result<Self> {
        if x.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidGraph("spin entries must be ±1".into()));
        }
        Ok(Self { x })
    }

    /// All-(-1) state of length `n`.
    pub fn all_minus(n: usize) -> Self {
        Self { x: vec![-1; n] }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.x
    }

    pub fn get(&self, i: usize) -> i8 {
        self.x[i]
    }

    /// Decode bit `n-1-i` of `mask` into spin `i`, so increasing masks
    /// enumerate states in lexicographic order with -1 < +1.
    pub fn from_mask(n: usize, mask: u64) -> Self {
        let x = (0..n)
            .map(|i| if (mask >> (n - 1 - i)) & 1 == 1 { 1 } else { -1 })
            .collect();
        Self { x }
    }

    pub fn flipped(&self) -> Self {
        Self {
            x: self.x.iter().map(|&s| -s).collect(),
        }
    }
}

/// Symmetric quadratic form over ±1 vectors, `maximize xᵀAx`.
///
/// The matrix is stored once per unordered pair (diagonal plus strict
/// upper triangle), which doubles as an edge-sparse view for large
/// instances.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProblem {
    n: usize,
    diag: Vec<f64>,
    off: Vec<(usize, usize, f64)>,
}

impl QuadraticProblem {
    /// Build from diagonal and strict upper-triangular entries (a < b).
    pub fn from_parts(n: usize, diag: Vec<f64>, off: Vec<(usize, usize, f64)>) -> Result<Self> {
        if diag.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: diag.len(),
            });
        }
        for &(a, b, _) in &off {
            if a >= b || b >= n {
                return Err(Error::InvalidGraph(format!(
                    "off-diagonal entry ({a},{b}) invalid for n = {n}"
                )));
            }
        }
        Ok(Self { n, diag, off })
    }

    /// Build from a dense symmetric matrix. Requires exact symmetry.
    pub fn from_dense(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: a.ncols(),
            });
        }
        let mut off = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if a[(i, j)] != a[(j, i)] {
                    return Err(Error::InvalidGraph(format!(
                        "matrix not symmetric at ({i},{j})"
                    )));
                }
                if a[(i, j)] != 0.0 {
                    off.push((i, j, a[(i, j)]));
                }
            }
        }
        let diag = (0..n).map(|i| a[(i, i)]).collect();
        Ok(Self { n, diag, off })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn off_diagonal(&self) -> &[(usize, usize, f64)] {
        &self.off
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            a[(i, i)] = self.diag[i];
        }
        for &(i, j, w) in &self.off {
            a[(i, j)] = w;
            a[(j, i)] = w;
        }
        a
    }

    /// xᵀAx for a spin state.
    pub fn objective(&self, x: &SpinState) -> Result<f64> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        let mut val: f64 = self.diag.iter().sum();
        for &(i, j, w) in &self.off {
            val += 2.0 * w * f64::from(x.get(i) * x.get(j));
        }
        Ok(val)
    }

    /// Sparse product A·V for a thin factor V.
    pub fn mul_factor(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        let k = v.ncols();
        let mut out = DMatrix::zeros(self.n, k);
        for i in 0..self.n {
            if self.diag[i] != 0.0 {
                for c in 0..k {
                    out[(i, c)] += self.diag[i] * v[(i, c)];
                }
            }
        }
        for &(i, j, w) in &self.off {
            for c in 0..k {
                out[(i, c)] += w * v[(j, c)];
                out[(j, c)] += w * v[(i, c)];
            }
        }
        out
    }

    /// tr(A X) through the sparse view.
    pub fn trace_product(&self, x: &DMatrix<f64>) -> f64 {
        let mut t = 0.0;
        for i in 0..self.n {
            t += self.diag[i] * x[(i, i)];
        }
        for &(i, j, w) in &self.off {
            t += 2.0 * w * x[(i, j)];
        }
        t
    }

    /// Power-iteration estimate of the spectral norm of A.
    pub fn spectral_norm_estimate(&self, iters: usize) -> f64 {
        let mut v = DMatrix::from_fn(self.n, 1, |i, _| 1.0 + (i as f64 * 0.7).sin());
        let mut norm = v.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v /= norm;
        let mut est = 0.0;
        for _ in 0..iters {
            let w = self.mul_factor(&v);
            norm = w.norm();
            if norm == 0.0 {
                return 0.0;
            }
            est = norm;
            v = w / norm;
        }
        est
    }
}

/// Ising model: couplings on the edges of a graph plus node fields.
#[derive(Debug, Clone, PartialEq)]
pub struct IsingModel {
    graph: WeightedGraph,
    h: Vec<f64>,
    attractive: bool,
}

impl IsingModel {
    pub fn new(graph: WeightedGraph, h: Vec<f64>) -> Result<Self> {
        if h.len() != graph.n() {
            return Err(Error::DimensionMismatch {
                expected: graph.n(),
                got: h.len(),
            });
        }
        let attractive = graph.edges().iter().all(|&(_, _, j)| j >= 0.0);
        Ok(Self {
            graph,
            h,
            attractive,
        })
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn graph(&self) -> &WeightedGraph {
        &self.graph
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn is_attractive(&self) -> bool {
        self.attractive
    }

    /// Error unless every coupling is non-negative.
    pub fn require_attractive(&self) -> Result<()> {
        for &(a, b, j) in self.graph.edges() {
            if j < 0.0 {
                return Err(Error::NotAttractive { a, b, value: j });
            }
        }
        Ok(())
    }

    /// Same graph and couplings, fields negated.
    pub fn with_flipped_h(&self) -> Self {
        Self {
            graph: self.graph.clone(),
            h: self.h.iter().map(|v| -v).collect(),
            attractive: self.attractive,
        }
    }
}

/// E(x | J, h) = Σ_a h_a x_a − Σ_{{a,b}∈E} J_ab x_a x_b, each edge once.
pub fn energy(model: &IsingModel, x: &SpinState) -> Result<f64> {
    if x.len() != model.n() {
        return Err(Error::DimensionMismatch {
            expected: model.n(),
            got: x.len(),
        });
    }
    let mut e = 0.0;
    for (a, &h) in model.h.iter().enumerate() {
        e += h * f64::from(x.get(a));
    }
    for &(a, b, j) in model.graph.edges() {
        e -= j * f64::from(x.get(a) * x.get(b));
    }
    Ok(e)
}

/// QUBO over {0,1}: maximize yᵀQy + bᵀy.
#[derive(Debug, Clone, PartialEq)]
pub struct QuboProblem {
    n: usize,
    q_diag: Vec<f64>,
    q_off: Vec<(usize, usize, f64)>,
    b: Vec<f64>,
}

impl QuboProblem {
    pub fn from_parts(
        n: usize,
        q_diag: Vec<f64>,
        q_off: Vec<(usize, usize, f64)>,
        b: Vec<f64>,
    ) -> Result<Self> {
        if q_diag.len() != n || b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: q_diag.len().max(b.len()),
            });
        }
        for &(i, j, _) in &q_off {
            if i >= j || j >= n {
                return Err(Error::InvalidGraph(format!(
                    "Q entry ({i},{j}) invalid for n = {n}"
                )));
            }
        }
        Ok(Self {
            n,
            q_diag,
            q_off,
            b,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// yᵀQy + bᵀy for binary y.
    pub fn objective(&self, y: &[u8]) -> Result<f64> {
        if y.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: y.len(),
            });
        }
        let mut val = 0.0;
        for i in 0..self.n {
            let yi = f64::from(y[i]);
            val += self.q_diag[i] * yi * yi + self.b[i] * yi;
        }
        for &(i, j, q) in &self.q_off {
            val += 2.0 * q * f64::from(y[i]) * f64::from(y[j]);
        }
        Ok(val)
    }

    /// Exhaustive {0,1} maximum; oracle for conversion tests.
    pub fn brute_force_max(&self) -> Result<(Vec<u8>, f64)> {
        if self.n > BRUTE_FORCE_LIMIT {
            return Err(Error::TooLarge {
                n: self.n,
                limit: BRUTE_FORCE_LIMIT,
            });
        }
        let mut best: Option<(Vec<u8>, f64)> = None;
        for mask in 0u64..(1u64 << self.n) {
            let y: Vec<u8> = (0..self.n)
                .map(|i| ((mask >> (self.n - 1 - i)) & 1) as u8)
                .collect();
            let val = self.objective(&y)?;
            if best.as_ref().is_none_or(|(_, bv)| val > *bv) {
                best = Some((y, val));
            }
        }
        Ok(best.expect("nonempty enumeration"))
    }
}

/// Result of homogenizing a QUBO into a ±1 quadratic form.
///
/// `problem` has n+1 variables; index 0 is the homogenizing spin.
/// For any spin state x, objective(x) + constant equals the QUBO value
/// at `decode(x)`.
#[derive(Debug, Clone)]
pub struct QuboConversion {
    pub problem: QuadraticProblem,
    pub constant: f64,
}

impl QuboConversion {
    /// y_i = (1 + x_0 · x_{i+1}) / 2.
    pub fn decode(&self, x: &SpinState) -> Vec<u8> {
        let x0 = x.get(0);
        (1..x.len()).map(|i| u8::from(x0 * x.get(i) == 1)).collect()
    }
}

/// Homogenize a {0,1} QUBO into an (n+1)-spin ±1 problem.
pub fn qubo_to_quadratic(q: &QuboProblem) -> QuboConversion {
    let n = q.n;
    // Row sums of Q (symmetric, diagonal included).
    let mut row_sum = q.q_diag.clone();
    for &(i, j, w) in &q.q_off {
        row_sum[i] += w;
        row_sum[j] += w;
    }
    let sum_q: f64 =
        q.q_diag.iter().sum::<f64>() + 2.0 * q.q_off.iter().map(|&(_, _, w)| w).sum::<f64>();
    let sum_diag: f64 = q.q_diag.iter().sum();
    let sum_b: f64 = q.b.iter().sum();

    let constant = sum_q / 4.0 + sum_diag / 4.0 + sum_b / 2.0;

    let mut off = Vec::with_capacity(q.q_off.len() + n);
    for i in 0..n {
        let w = (row_sum[i] + q.b[i]) / 4.0;
        if w != 0.0 {
            off.push((0, i + 1, w));
        }
    }
    for &(i, j, w) in &q.q_off {
        off.push((i + 1, j + 1, w / 4.0));
    }
    let problem =
        QuadraticProblem::from_parts(n + 1, vec![0.0; n + 1], off).expect("valid by construction");
    QuboConversion { problem, constant }
}

/// Exhaustive maximizer of xᵀAx over ±1 states.
///
/// Ties broken toward the lexicographically smallest state with −1 < +1.
pub fn brute_force_max(p: &QuadraticProblem) -> Result<(SpinState, f64)> {
    if p.n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            n: p.n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let mut best: Option<(SpinState, f64)> = None;
    for mask in 0u64..(1u64 << p.n) {
        let x = SpinState::from_mask(p.n, mask);
        let val = p.objective(&x)?;
        if best.as_ref().is_none_or(|(_, bv)| val > *bv) {
            best = Some((x, val));
        }
    }
    Ok(best.expect("nonempty enumeration"))
}

/// Node and edge potential tables over a graph, indexed by spin:
/// index 0 ↔ spin −1, index 1 ↔ spin +1. Edge tables are indexed by the
/// smaller endpoint first, matching the graph's edge orientation.
#[derive(Debug, Clone)]
pub struct PotentialTables {
    pub node: Vec<[f64; 2]>,
    pub edge: Vec<[[f64; 2]; 2]>,
}

/// Convert MRF potentials U(x;θ) = Σθ_a(x_a) + Σθ_ab(x_a,x_b) into an
/// Ising model and a constant such that U(x) = −energy(x) + constant.
pub fn potentials_to_ising(
    graph: &WeightedGraph,
    theta: &PotentialTables,
) -> Result<(IsingModel, f64)> {
    let n = graph.n();
    if theta.node.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: theta.node.len(),
        });
    }
    if theta.edge.len() != graph.edge_count() {
        return Err(Error::DimensionMismatch {
            expected: graph.edge_count(),
            got: theta.edge.len(),
        });
    }

    let mut constant = 0.0;
    // Linear coefficient of U at each node; E carries the opposite sign.
    let mut lin = vec![0.0; n];
    for (a, t) in theta.node.iter().enumerate() {
        lin[a] += (t[1] - t[0]) / 2.0;
        constant += (t[1] + t[0]) / 2.0;
    }

    let mut edges = Vec::with_capacity(graph.edge_count());
    for (e, &(a, b, _)) in graph.edges().iter().enumerate() {
        let t = &theta.edge[e];
        let (pp, pm, mp, mm) = (t[1][1], t[1][0], t[0][1], t[0][0]);
        let j = (pp + mm - pm - mp) / 4.0;
        lin[a] += (pp + pm - mp - mm) / 4.0;
        lin[b] += (pp - pm + mp - mm) / 4.0;
        constant += (pp + pm + mp + mm) / 4.0;
        edges.push((a, b, j));
    }

    let h: Vec<f64> = lin.iter().map(|v| -v).collect();
    let model = IsingModel::new(WeightedGraph::new(n, edges)?, h)?;
    Ok((model, constant))
}
