//! Exact MAP inference for attractive Ising models with clamped nodes,
//! safe-polytope constructions, polarized/mixed classification and the
//! mixed-state-probability experiment.

use std::collections::BTreeSet;

use rand::Rng;

use crate::error::{Error, Result};
use crate::lowrank::stream_rng;
use crate::model::{energy, IsingModel, SpinState, WeightedGraph, BRUTE_FORCE_LIMIT};

/// Clamped-to-+1 node set ℐ.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InfectionPattern {
    nodes: BTreeSet<usize>,
}

impl InfectionPattern {
    pub fn new(nodes: BTreeSet<usize>, n: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidGraph("infection pattern must be nonempty".into()));
        }
        if nodes.iter().any(|&a| a >= n) {
            return Err(Error::InvalidGraph("infection pattern index out of range".into()));
        }
        Ok(Self { nodes })
    }

    pub fn single(node: usize, n: usize) -> Result<Self> {
        Self::new([node].into_iter().collect(), n)
    }

    pub fn nodes(&self) -> &BTreeSet<usize> {
        &self.nodes
    }

    pub fn contains(&self, a: usize) -> bool {
        self.nodes.contains(&a)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

// ---------------------------------------------------------------------
// Dinic max-flow on f64 capacities.

const FLOW_EPS: f64 = 1e-11;
const INF_CAP: f64 = 1e18;

#[derive(Clone)]
struct FlowEdge {
    to: usize,
    rev: usize,
    cap: f64,
}

struct Dinic {
    graph: Vec<Vec<FlowEdge>>,
    level: Vec<i32>,
    iter: Vec<usize>,
}

impl Dinic {
    fn new(n: usize) -> Self {
        Self {
            graph: vec![Vec::new(); n],
            level: vec![0; n],
            iter: vec![0; n],
        }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: f64) {
        let rev_from = self.graph[to].len();
        let rev_to = self.graph[from].len();
        self.graph[from].push(FlowEdge { to, rev: rev_from, cap });
        self.graph[to].push(FlowEdge { to: from, rev: rev_to, cap: 0.0 });
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.fill(-1);
        let mut queue = std::collections::VecDeque::new();
        self.level[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            for e in &self.graph[v] {
                if e.cap > FLOW_EPS && self.level[e.to] < 0 {
                    self.level[e.to] = self.level[v] + 1;
                    queue.push_back(e.to);
                }
            }
        }
        self.level[t] >= 0
    }

    fn dfs(&mut self, v: usize, t: usize, f: f64) -> f64 {
        if v == t {
            return f;
        }
        while self.iter[v] < self.graph[v].len() {
            let i = self.iter[v];
            let (to, cap, rev) = {
                let e = &self.graph[v][i];
                (e.to, e.cap, e.rev)
            };
            if cap > FLOW_EPS && self.level[v] < self.level[to] {
                let d = self.dfs(to, t, f.min(cap));
                if d > FLOW_EPS {
                    self.graph[v][i].cap -= d;
                    self.graph[to][rev].cap += d;
                    return d;
                }
            }
            self.iter[v] += 1;
        }
        0.0
    }

    fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut flow = 0.0;
        while self.bfs(s, t) {
            self.iter.fill(0);
            loop {
                let f = self.dfs(s, t, f64::INFINITY);
                if f <= FLOW_EPS {
                    break;
                }
                flow += f;
            }
        }
        flow
    }

    /// Source side of the min cut: nodes reachable in the residual graph.
    fn min_cut_source_side(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.graph.len()];
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(v) = stack.pop() {
            for e in &self.graph[v] {
                if e.cap > FLOW_EPS && !seen[e.to] {
                    seen[e.to] = true;
                    stack.push(e.to);
                }
            }
        }
        seen
    }
}

// ---------------------------------------------------------------------

/// Exact MAP state of an attractive Ising model under clamps, by
/// reduction to s–t min-cut. Ties resolve toward the state with fewest
/// +1 entries (the minimal source side of the cut lattice).
pub fn map_attractive(m: &IsingModel, clamp: &InfectionPattern) -> Result<SpinState> {
    m.require_attractive()?;
    let n = m.n();
    if clamp.nodes().iter().any(|&a| a >= n) {
        return Err(Error::InvalidGraph("clamp index out of range".into()));
    }
    let source = n;
    let sink = n + 1;
    let mut net = Dinic::new(n + 2);

    // Unary coefficients of the {0,1} reformulation (y=1 ↔ x=+1).
    let mut w = vec![0.0; n];
    for (a, &h) in m.h().iter().enumerate() {
        w[a] += 2.0 * h;
    }
    for &(a, b, j) in m.graph().edges() {
        // Submodular decomposition: cost 4J on (y_a=0, y_b=1).
        w[a] += 2.0 * j;
        w[b] -= 2.0 * j;
        if j > 0.0 {
            net.add_edge(b, a, 4.0 * j);
        }
    }
    for (a, &wa) in w.iter().enumerate() {
        if wa > 0.0 {
            net.add_edge(a, sink, wa);
        } else if wa < 0.0 {
            net.add_edge(source, a, -wa);
        }
    }
    for &a in clamp.nodes() {
        net.add_edge(source, a, INF_CAP);
    }

    net.max_flow(source, sink);
    let side = net.min_cut_source_side(source);
    SpinState::new((0..n).map(|a| if side[a] { 1 } else { -1 }).collect())
}

/// Exhaustive MAP with the same tie rule: minimum energy, then fewest
/// +1 entries, then lexicographically smallest.
pub fn map_bruteforce(m: &IsingModel, clamp: &InfectionPattern) -> Result<SpinState> {
    let n = m.n();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge { n, limit: BRUTE_FORCE_LIMIT });
    }
    let free: Vec<usize> = (0..n).filter(|a| !clamp.contains(*a)).collect();
    let mut best: Option<(SpinState, f64, usize)> = None;
    for mask in 0u64..(1u64 << free.len()) {
        let mut spins = vec![1i8; n];
        for (bit, &a) in free.iter().enumerate() {
            // Bit order chosen so increasing masks walk states in
            // lexicographic order (-1 < +1).
            if (mask >> (free.len() - 1 - bit)) & 1 == 0 {
                spins[a] = -1;
            }
        }
        let x = SpinState::new(spins)?;
        let e = energy(m, &x)?;
        let plus = x.spins().iter().filter(|&&s| s == 1).count();
        let better = match &best {
            None => true,
            Some((bx, be, bp)) => {
                e < *be
                    || (e == *be && plus < *bp)
                    || (e == *be && plus == *bp && x.spins() < bx.spins())
            }
        };
        if better {
            best = Some((x, e, plus));
        }
    }
    Ok(best.expect("nonempty enumeration").0)
}

/// Nodes with x = +1.
pub fn removed_set(x: &SpinState) -> BTreeSet<usize> {
    x.spins()
        .iter()
        .enumerate()
        .filter(|(_, &s)| s == 1)
        .map(|(a, _)| a)
        .collect()
}

/// True iff every pattern's MAP removed set has at most k nodes.
/// Also reports |R| per pattern.
pub fn is_k_safe(
    m: &IsingModel,
    patterns: &[InfectionPattern],
    k: usize,
) -> Result<(bool, Vec<usize>)> {
    let mut sizes = Vec::with_capacity(patterns.len());
    let mut safe = true;
    for pat in patterns {
        let x = map_attractive(m, pat)?;
        let r = removed_set(&x).len();
        if r > k {
            safe = false;
        }
        sizes.push(r);
    }
    Ok((safe, sizes))
}

/// One face of a safe polytope: cJ·J + cH·h ≥ rhs, with cJ indexed by
/// the graph's edge order and cH by node.
#[derive(Debug, Clone)]
pub struct PolytopeConstraint {
    pub c_j: Vec<f64>,
    pub c_h: Vec<f64>,
    pub rhs: f64,
    pub provenance: String,
}

impl PolytopeConstraint {
    pub fn margin(&self, m: &IsingModel) -> f64 {
        let mut lhs = 0.0;
        for (e, &(_, _, j)) in m.graph().edges().iter().enumerate() {
            lhs += self.c_j[e] * j;
        }
        for (a, &h) in m.h().iter().enumerate() {
            lhs += self.c_h[a] * h;
        }
        lhs - self.rhs
    }
}

/// Linear safety constraints over (J, h) for a fixed graph.
#[derive(Debug, Clone)]
pub struct SafePolytope {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    pub constraints: Vec<PolytopeConstraint>,
}

impl SafePolytope {
    /// All rows satisfied within `tol`.
    pub fn contains(&self, m: &IsingModel, tol: f64) -> bool {
        self.constraints.iter().all(|c| c.margin(m) >= -tol)
    }
}

/// Two-mode approximation: one row per pattern ℐ demanding that the
/// polarized-safe state beats all-infected,
/// E(all+1) − E(x^{(ℐ)}) = 2 Σ_{b∉ℐ} h_b − 2 Σ_{cut} J_ab ≥ 0.
pub fn two_mode_polytope(g: &WeightedGraph, patterns: &[InfectionPattern]) -> SafePolytope {
    let n = g.n();
    let edges: Vec<(usize, usize)> = g.edges().iter().map(|&(a, b, _)| (a, b)).collect();
    let mut constraints = Vec::with_capacity(patterns.len());
    for pat in patterns {
        let mut c_j = vec![0.0; edges.len()];
        for (e, &(a, b)) in edges.iter().enumerate() {
            if pat.contains(a) != pat.contains(b) {
                c_j[e] = -2.0;
            }
        }
        let c_h: Vec<f64> = (0..n)
            .map(|a| if pat.contains(a) { 0.0 } else { 2.0 })
            .collect();
        constraints.push(PolytopeConstraint {
            c_j,
            c_h,
            rhs: 0.0,
            provenance: format!("pattern {:?}", pat.nodes()),
        });
    }
    SafePolytope { n, edges, constraints }
}

/// All patterns of size 1..=k over n nodes, Σ C(n,k') of them.
pub fn patterns_up_to(n: usize, k: usize) -> Vec<InfectionPattern> {
    fn rec(n: usize, size: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<BTreeSet<usize>>) {
        if cur.len() == size {
            out.push(cur.iter().copied().collect());
            return;
        }
        for a in start..n {
            cur.push(a);
            rec(n, size, a + 1, cur, out);
            cur.pop();
        }
    }
    let mut sets = Vec::new();
    for size in 1..=k.min(n) {
        rec(n, size, 0, &mut Vec::new(), &mut sets);
    }
    sets.into_iter()
        .map(|s| InfectionPattern::new(s, n).expect("valid by construction"))
        .collect()
}

const STRICT_MARGIN: f64 = 1e-9;

/// Exact safe-polytope membership by enumeration (n ≤ 12): for every
/// R with |R| ≤ k, x^{(R)} must strictly beat every other state that is
/// +1 on R.
pub fn exact_polytope_membership(m: &IsingModel, k: usize) -> Result<bool> {
    let n = m.n();
    if n > 12 {
        return Err(Error::TooLarge { n, limit: 12 });
    }
    for pat in patterns_up_to(n, k) {
        // x^{(R)}: +1 exactly on R.
        let x_r = SpinState::new(
            (0..n).map(|a| if pat.contains(a) { 1 } else { -1 }).collect(),
        )?;
        let e_r = energy(m, &x_r)?;
        let free: Vec<usize> = (0..n).filter(|a| !pat.contains(*a)).collect();
        for mask in 1u64..(1u64 << free.len()) {
            let mut spins: Vec<i8> = (0..n).map(|a| if pat.contains(a) { 1 } else { -1 }).collect();
            for (bit, &a) in free.iter().enumerate() {
                if (mask >> bit) & 1 == 1 {
                    spins[a] = 1;
                }
            }
            let x = SpinState::new(spins)?;
            if !(e_r < energy(m, &x)? - STRICT_MARGIN) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// MAP state classification relative to the initially infected pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateClass {
    PolarizedSafe,
    PolarizedAllInfected,
    Mixed,
}

pub fn classify_state(x: &SpinState, pattern: &InfectionPattern) -> StateClass {
    let plus = removed_set(x);
    if plus == *pattern.nodes() {
        StateClass::PolarizedSafe
    } else if plus.len() == x.len() {
        StateClass::PolarizedAllInfected
    } else {
        StateClass::Mixed
    }
}

/// Graph-size parameter of the MSP sweep.
#[derive(Debug, Clone)]
pub enum MspGraphParam {
    /// Uniformly random graphs with the given edge counts.
    EdgeCounts(Vec<usize>),
    /// Random d-regular graphs for the given degrees.
    Degrees(Vec<usize>),
}

#[derive(Debug, Clone)]
pub struct MspConfig {
    pub n: usize,
    pub param: MspGraphParam,
    pub samples: usize,
    pub seed: u64,
    /// J sampled uniformly from (j_range.0, j_range.1].
    pub j_range: (f64, f64),
    /// h sampled uniformly from [h_range.0, h_range.1].
    pub h_range: (f64, f64),
}

impl MspConfig {
    pub fn new(n: usize, param: MspGraphParam, samples: usize, seed: u64) -> Self {
        Self {
            n,
            param,
            samples,
            seed,
            j_range: (0.0, 2.0),
            h_range: (0.5, 1.5),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MspRow {
    pub param: usize,
    pub samples: usize,
    pub mixed_count: usize,
    pub proportion: f64,
    pub seed: u64,
}

fn random_edge_graph(n: usize, m: usize, rng: &mut impl Rng) -> Result<WeightedGraph> {
    let mut pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
        .collect();
    if m > pairs.len() {
        return Err(Error::InvalidGraph(format!(
            "edge count {m} exceeds C({n},2) = {}",
            pairs.len()
        )));
    }
    // Partial Fisher-Yates: first m entries become the edge set.
    for i in 0..m {
        let j = rng.gen_range(i..pairs.len());
        pairs.swap(i, j);
    }
    let mut chosen: Vec<(usize, usize)> = pairs[..m].to_vec();
    chosen.sort_unstable();
    WeightedGraph::new(n, chosen.into_iter().map(|(a, b)| (a, b, 1.0)).collect())
}

fn random_regular_graph(n: usize, d: usize, rng: &mut impl Rng) -> Result<WeightedGraph> {
    if n * d % 2 != 0 || d >= n {
        return Err(Error::InvalidGraph(format!(
            "no simple {d}-regular graph on {n} nodes"
        )));
    }
    // Configuration model with rejection of self loops and multi-edges.
    'attempt: for _ in 0..10_000 {
        let mut stubs: Vec<usize> = (0..n).flat_map(|a| std::iter::repeat(a).take(d)).collect();
        for i in (1..stubs.len()).rev() {
            let j = rng.gen_range(0..=i);
            stubs.swap(i, j);
        }
        let mut seen = BTreeSet::new();
        for pair in stubs.chunks(2) {
            let (a, b) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if a == b || !seen.insert((a, b)) {
                continue 'attempt;
            }
        }
        let edges = seen.into_iter().map(|(a, b)| (a, b, 1.0)).collect();
        return WeightedGraph::new(n, edges);
    }
    Err(Error::InvalidGraph(format!(
        "failed to sample a simple {d}-regular graph on {n} nodes"
    )))
}

/// Sample random attractive models per graph-size parameter, compute the
/// MAP state for one random single-node infection each, and report the
/// fraction of mixed states.
pub fn msp_experiment(config: &MspConfig) -> Result<Vec<MspRow>> {
    let params: &[usize] = match &config.param {
        MspGraphParam::EdgeCounts(v) => v,
        MspGraphParam::Degrees(v) => v,
    };
    let mut rows = Vec::with_capacity(params.len());
    for (pi, &param) in params.iter().enumerate() {
        let mut mixed = 0usize;
        for s in 0..config.samples {
            let mut rng = stream_rng(config.seed, (pi * config.samples + s) as u64);
            let graph = match &config.param {
                MspGraphParam::EdgeCounts(_) => random_edge_graph(config.n, param, &mut rng)?,
                MspGraphParam::Degrees(_) => random_regular_graph(config.n, param, &mut rng)?,
            };
            let (jl, jh) = config.j_range;
            let edges = graph
                .edges()
                .iter()
                .map(|&(a, b, _)| {
                    // Uniform on (jl, jh]: flip the half-open side.
                    let u: f64 = rng.gen::<f64>();
                    (a, b, jh - u * (jh - jl))
                })
                .collect();
            let (hl, hh) = config.h_range;
            let h = (0..config.n).map(|_| rng.gen_range(hl..=hh)).collect();
            let model = IsingModel::new(WeightedGraph::new(config.n, edges)?, h)?;
            let pattern = InfectionPattern::single(rng.gen_range(0..config.n), config.n)?;
            let x = map_attractive(&model, &pattern)?;
            if classify_state(&x, &pattern) == StateClass::Mixed {
                mixed += 1;
            }
        }
        rows.push(MspRow {
            param,
            samples: config.samples,
            mixed_count: mixed,
            proportion: mixed as f64 / config.samples as f64,
            seed: config.seed,
        });
    }
    Ok(rows)
}

/// Experiment CSV: (param, samples, mixed_count, proportion, seed).
pub fn msp_rows_csv(rows: &[MspRow]) -> String {
    let mut out = String::from("param,samples,mixed_count,proportion,seed\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.param, r.samples, r.mixed_count, r.proportion, r.seed
        ));
    }
    out
}
