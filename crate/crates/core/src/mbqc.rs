//! Measurement-based computation on graph states.
//!
//! A pattern is a resource graph, an input state on a subset of its
//! vertices, a measurement order and a measurement spec for every vertex.
//! [`run_pattern`] executes it with lazy activation: a vertex joins the
//! background state only when it or one of its neighbours is about to be
//! measured, and leaves it as soon as it is measured. Before vertex `k` is
//! measured every unrealized edge incident to `k` is applied as a CZ, which
//! keeps the result identical to preparing the whole graph state first.
//!
//! [`dense_oracle`] prepares the full graph state and enumerates all
//! outcome branches; it exists to cross-check the lazy engine.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parallel::{self, Execution};
use crate::quantum::{StateVector, C64};
use crate::rng;

pub const MAX_ORACLE_VERTICES: usize = 16;
const ORTHO_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MbqcError {
    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),
    #[error("duplicate vertex `{0}`")]
    DuplicateVertex(String),
    #[error("self-loop on vertex `{0}`")]
    SelfLoop(String),
    #[error("measurement order is not a permutation of the vertices")]
    OrderNotPermutation,
    #[error("vertex `{vertex}` adapts on `{source_vertex}`, which is not measured before it")]
    FutureDependency { vertex: String, source_vertex: String },
    #[error("no measurement spec for vertex `{0}`")]
    MissingSpec(String),
    #[error("basis for vertex `{0}` is not orthonormal")]
    NotOrthonormal(String),
    #[error("explicit basis for vertex `{0}` cannot carry adaptivity")]
    AdaptiveExplicitBasis(String),
    #[error("input state has {got} qubits, input set has {expected}")]
    InputSize { expected: usize, got: usize },
    #[error("graph has {0} vertices; the dense oracle supports at most {MAX_ORACLE_VERTICES}")]
    TooLarge(usize),
    #[error("invalid input state: {0}")]
    InputState(String),
    #[error("pattern JSON: {0}")]
    Json(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResourceGraph {
    labels: Vec<String>,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    input: Vec<usize>,
    input_state: StateVector,
}

impl ResourceGraph {
    /// Graph with every vertex starting in `|+⟩`.
    pub fn new<S: AsRef<str>>(labels: &[S], edges: &[(usize, usize)]) -> Result<Self, MbqcError> {
        Self::with_input(labels, edges, &[], StateVector::new(0))
    }

    /// Graph whose vertices `input` (in listed order, first = least
    /// significant qubit of `input_state`) start in `input_state`.
    pub fn with_input<S: AsRef<str>>(
        labels: &[S],
        edges: &[(usize, usize)],
        input: &[usize],
        input_state: StateVector,
    ) -> Result<Self, MbqcError> {
        let labels: Vec<String> = labels.iter().map(|s| s.as_ref().to_string()).collect();
        let mut seen = BTreeSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(MbqcError::DuplicateVertex(l.clone()));
            }
        }
        let n = labels.len();
        let mut adjacency = vec![Vec::new(); n];
        let mut edge_set = BTreeSet::new();
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(MbqcError::UnknownVertex(a.max(b).to_string()));
            }
            if a == b {
                return Err(MbqcError::SelfLoop(labels[a].clone()));
            }
            if edge_set.insert((a.min(b), a.max(b))) {
                adjacency[a].push(b);
                adjacency[b].push(a);
            }
        }
        let mut input_seen = BTreeSet::new();
        for &v in input {
            if v >= n {
                return Err(MbqcError::UnknownVertex(v.to_string()));
            }
            if !input_seen.insert(v) {
                return Err(MbqcError::DuplicateVertex(labels[v].clone()));
            }
        }
        if input_state.num_qubits() != input.len() {
            return Err(MbqcError::InputSize {
                expected: input.len(),
                got: input_state.num_qubits(),
            });
        }
        Ok(ResourceGraph {
            labels,
            edges: edge_set.into_iter().collect(),
            adjacency,
            input: input.to_vec(),
            input_state,
        })
    }

    /// Path `0 - 1 - … - (n-1)`.
    pub fn chain(n: usize) -> Self {
        let labels: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        let edges: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
        Self::new(&labels, &edges).expect("chain is well formed")
    }

    pub fn complete(n: usize) -> Self {
        let labels: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        let edges: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        Self::new(&labels, &edges).expect("complete graph is well formed")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn input(&self) -> &[usize] {
        &self.input
    }

    pub fn input_state(&self) -> &StateVector {
        &self.input_state
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Plane {
    XY,
    YZ,
    XZ,
}

impl Plane {
    /// The `+1` eigenvector for measurement angle `alpha`; the `−1`
    /// eigenvector is its orthogonal complement.
    pub fn basis(self, alpha: f64) -> [[C64; 2]; 2] {
        let (c, s) = ((alpha / 2.0).cos(), (alpha / 2.0).sin());
        match self {
            Plane::XY => {
                let r = FRAC_1_SQRT_2;
                let e = Complex64::from_polar(r, alpha);
                [[C64::new(r, 0.0), e], [C64::new(r, 0.0), -e]]
            }
            Plane::XZ => [
                [C64::new(c, 0.0), C64::new(s, 0.0)],
                [C64::new(s, 0.0), C64::new(-c, 0.0)],
            ],
            Plane::YZ => [
                [C64::new(c, 0.0), C64::new(0.0, s)],
                [C64::new(s, 0.0), C64::new(0.0, -c)],
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Basis {
    Plane { plane: Plane, angle: f64 },
    /// Outcome 0 projects on the first vector, outcome 1 on the second.
    Explicit([[C64; 2]; 2]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSpec {
    pub basis: Basis,
    /// Vertices whose outcome parity flips the sign of the angle.
    pub s_domain: Vec<usize>,
    /// Vertices whose outcome parity adds π to the angle.
    pub t_domain: Vec<usize>,
}

impl MeasurementSpec {
    pub fn plane(plane: Plane, angle: f64) -> Self {
        MeasurementSpec {
            basis: Basis::Plane { plane, angle },
            s_domain: Vec::new(),
            t_domain: Vec::new(),
        }
    }

    pub fn x() -> Self {
        Self::plane(Plane::XY, 0.0)
    }

    pub fn z() -> Self {
        Self::plane(Plane::XZ, 0.0)
    }

    pub fn explicit(v0: [C64; 2], v1: [C64; 2]) -> Self {
        MeasurementSpec {
            basis: Basis::Explicit([v0, v1]),
            s_domain: Vec::new(),
            t_domain: Vec::new(),
        }
    }

    pub fn with_domains(mut self, s_domain: Vec<usize>, t_domain: Vec<usize>) -> Self {
        self.s_domain = s_domain;
        self.t_domain = t_domain;
        self
    }

    /// Basis vectors after adaptation to the outcomes recorded so far.
    fn resolve(&self, outcomes: &[Option<u8>]) -> [[C64; 2]; 2] {
        match &self.basis {
            Basis::Explicit(b) => *b,
            Basis::Plane { plane, angle } => {
                let parity = |dom: &[usize]| dom.iter().map(|&v| outcomes[v].unwrap_or(0)).sum::<u8>() % 2;
                let mut a = *angle;
                if parity(&self.s_domain) == 1 {
                    a = -a;
                }
                if parity(&self.t_domain) == 1 {
                    a += PI;
                }
                plane.basis(a)
            }
        }
    }
}

/// Graph, measurement order and per-vertex specs.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    pub graph: ResourceGraph,
    pub order: Vec<usize>,
    pub specs: Vec<MeasurementSpec>,
}

impl Pattern {
    pub fn new(graph: ResourceGraph, order: Vec<usize>, specs: Vec<MeasurementSpec>) -> Result<Self, MbqcError> {
        let p = Pattern { graph, order, specs };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), MbqcError> {
        let n = self.graph.len();
        check_order(n, &self.order)?;
        if self.specs.len() != n {
            let missing = self.specs.len().min(n.saturating_sub(1));
            return Err(MbqcError::MissingSpec(
                self.graph.labels.get(missing).cloned().unwrap_or_default(),
            ));
        }
        let mut rank = vec![0usize; n];
        for (i, &v) in self.order.iter().enumerate() {
            rank[v] = i;
        }
        for (v, spec) in self.specs.iter().enumerate() {
            if let Basis::Explicit(b) = &spec.basis {
                if !spec.s_domain.is_empty() || !spec.t_domain.is_empty() {
                    return Err(MbqcError::AdaptiveExplicitBasis(self.graph.labels[v].clone()));
                }
                if !orthonormal(b) {
                    return Err(MbqcError::NotOrthonormal(self.graph.labels[v].clone()));
                }
            }
            for &d in spec.s_domain.iter().chain(&spec.t_domain) {
                if d >= n {
                    return Err(MbqcError::UnknownVertex(d.to_string()));
                }
                if rank[d] >= rank[v] {
                    return Err(MbqcError::FutureDependency {
                        vertex: self.graph.labels[v].clone(),
                        source_vertex: self.graph.labels[d].clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Every vertex measured in the same non-adaptive basis, in index order.
    pub fn uniform(graph: ResourceGraph, spec: MeasurementSpec) -> Result<Self, MbqcError> {
        let n = graph.len();
        Self::new(graph, (0..n).collect(), vec![spec; n])
    }
}

fn orthonormal(b: &[[C64; 2]; 2]) -> bool {
    let dot = |u: &[C64; 2], v: &[C64; 2]| u[0].conj() * v[0] + u[1].conj() * v[1];
    (dot(&b[0], &b[0]).re - 1.0).abs() < ORTHO_TOLERANCE
        && (dot(&b[1], &b[1]).re - 1.0).abs() < ORTHO_TOLERANCE
        && dot(&b[0], &b[1]).norm() < ORTHO_TOLERANCE
}

fn check_order(n: usize, order: &[usize]) -> Result<(), MbqcError> {
    if order.len() != n {
        return Err(MbqcError::OrderNotPermutation);
    }
    let mut seen = vec![false; n];
    for &v in order {
        if v >= n || seen[v] {
            return Err(MbqcError::OrderNotPermutation);
        }
        seen[v] = true;
    }
    Ok(())
}

/// Pending / active / measured vertex lists.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VertexSets {
    pub pending: Vec<usize>,
    pub active: Vec<usize>,
    pub measured: Vec<usize>,
}

impl VertexSets {
    fn start(graph: &ResourceGraph) -> Self {
        let inputs: BTreeSet<usize> = graph.input.iter().copied().collect();
        VertexSets {
            pending: (0..graph.len()).filter(|v| !inputs.contains(v)).collect(),
            active: graph.input.clone(),
            measured: Vec::new(),
        }
    }

    pub fn is_partition_of(&self, n: usize) -> bool {
        let mut all: Vec<usize> = self
            .pending
            .iter()
            .chain(&self.active)
            .chain(&self.measured)
            .copied()
            .collect();
        all.sort_unstable();
        all == (0..n).collect::<Vec<_>>()
    }

    fn activate(&mut self, v: usize) -> bool {
        match self.pending.iter().position(|&p| p == v) {
            Some(i) => {
                self.pending.remove(i);
                self.active.push(v);
                true
            }
            None => false,
        }
    }

    /// Moves `v` from active to measured; returns its former position.
    fn retire(&mut self, v: usize) -> usize {
        let i = self.active.iter().position(|&a| a == v).expect("measured vertex is active");
        self.active.remove(i);
        self.measured.push(v);
        i
    }
}

/// Edges already applied as CZ gates.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EdgeLedger {
    realized: BTreeSet<(usize, usize)>,
}

impl EdgeLedger {
    fn key(a: usize, b: usize) -> (usize, usize) {
        (a.min(b), a.max(b))
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.realized.contains(&Self::key(a, b))
    }

    fn realize(&mut self, a: usize, b: usize) -> bool {
        self.realized.insert(Self::key(a, b))
    }

    pub fn len(&self) -> usize {
        self.realized.len()
    }

    pub fn is_empty(&self) -> bool {
        self.realized.is_empty()
    }
}

/// Vertices activated and edges realized before measuring `k`.
fn prepare_step(graph: &ResourceGraph, sets: &mut VertexSets, ledger: &EdgeLedger, k: usize) -> (Vec<usize>, Vec<usize>) {
    let mut activated = Vec::new();
    if sets.activate(k) {
        activated.push(k);
    }
    let mut edges_to = Vec::new();
    for &j in graph.neighbors(k) {
        if !ledger.contains(k, j) {
            if sets.activate(j) {
                activated.push(j);
            }
            edges_to.push(j);
        }
    }
    (activated, edges_to)
}

/// Vertex sets at the widest point of each step (after activation, before
/// measurement), for a dry run that allocates no state.
pub fn activation_trace(graph: &ResourceGraph, order: &[usize]) -> Result<Vec<VertexSets>, MbqcError> {
    check_order(graph.len(), order)?;
    let mut sets = VertexSets::start(graph);
    let mut ledger = EdgeLedger::default();
    let mut trace = Vec::with_capacity(order.len());
    for &k in order {
        let (_, edges_to) = prepare_step(graph, &mut sets, &ledger, k);
        for j in edges_to {
            ledger.realize(k, j);
        }
        trace.push(sets.clone());
        sets.retire(k);
    }
    Ok(trace)
}

/// Peak number of simultaneously active vertices.
pub fn max_active_width(graph: &ResourceGraph, order: &[usize]) -> Result<usize, MbqcError> {
    check_order(graph.len(), order)?;
    let mut sets = VertexSets::start(graph);
    let mut ledger = EdgeLedger::default();
    let mut width = sets.active.len();
    for &k in order {
        let (_, edges_to) = prepare_step(graph, &mut sets, &ledger, k);
        for j in edges_to {
            ledger.realize(k, j);
        }
        width = width.max(sets.active.len());
        sets.retire(k);
    }
    Ok(width)
}

/// Result of one pattern execution.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternRun {
    /// Outcome of each vertex, indexed by vertex.
    pub outcomes: Vec<u8>,
    pub max_width: usize,
    pub realized_edges: usize,
}

impl PatternRun {
    /// Outcomes in vertex order, e.g. `"010"`.
    pub fn key(&self) -> String {
        outcome_key(&self.outcomes)
    }
}

fn outcome_key(bits: &[u8]) -> String {
    bits.iter().map(|b| if *b == 1 { '1' } else { '0' }).collect()
}

/// Executes `pattern` once with lazy activation.
pub fn run_pattern<R: Rng + ?Sized>(pattern: &Pattern, rng: &mut R) -> Result<PatternRun, MbqcError> {
    pattern.validate()?;
    Ok(execute(pattern, rng))
}

fn execute<R: Rng + ?Sized>(pattern: &Pattern, rng: &mut R) -> PatternRun {
    let graph = &pattern.graph;
    let n = graph.len();
    let mut sets = VertexSets::start(graph);
    let mut ledger = EdgeLedger::default();
    let mut state = graph.input_state.clone();
    let mut outcomes: Vec<Option<u8>> = vec![None; n];
    let mut max_width = sets.active.len();
    let plus = C64::new(FRAC_1_SQRT_2, 0.0);
    for &k in &pattern.order {
        let (activated, edges_to) = prepare_step(graph, &mut sets, &ledger, k);
        for _ in &activated {
            state.push_qubit(plus, plus);
        }
        max_width = max_width.max(sets.active.len());
        let pos = |v: usize, sets: &VertexSets| sets.active.iter().position(|&a| a == v).expect("active");
        let qk = pos(k, &sets);
        for j in edges_to {
            state.apply_cz(qk, pos(j, &sets));
            ledger.realize(k, j);
        }
        let basis = pattern.specs[k].resolve(&outcomes);
        let mut zero = state.clone();
        let p0 = zero.contract_remove(qk, basis[0]);
        let bit = if rng.random::<f64>() < p0 {
            state = zero;
            0
        } else {
            state.contract_remove(qk, basis[1]);
            1
        };
        outcomes[k] = Some(bit);
        sets.retire(k);
    }
    PatternRun {
        outcomes: outcomes.into_iter().map(|o| o.unwrap_or(0)).collect(),
        max_width,
        realized_edges: ledger.len(),
    }
}

/// Outcome string → count over `shots` runs; run `i` uses the stream
/// derived from `(seed, i)`.
pub fn sample_pattern(
    pattern: &Pattern,
    shots: usize,
    seed: u64,
    exec: Execution,
) -> Result<BTreeMap<String, u64>, MbqcError> {
    pattern.validate()?;
    let parts = parallel::map_chunks(shots, 2048, exec, |range| {
        let mut counts = BTreeMap::new();
        for shot in range {
            let mut rng = rng::indexed_stream(seed, shot as u64);
            *counts.entry(execute(pattern, &mut rng).key()).or_insert(0u64) += 1;
        }
        counts
    });
    let mut total = BTreeMap::new();
    for part in parts {
        for (k, v) in part {
            *total.entry(k).or_insert(0) += v;
        }
    }
    Ok(total)
}

/// Full-register graph state: vertex `v` is qubit `v`.
fn dense_graph_state(graph: &ResourceGraph) -> Vec<C64> {
    let n = graph.len();
    let free = n - graph.input.len();
    let scale = FRAC_1_SQRT_2.powi(free as i32);
    let input_amps = graph.input_state.amplitudes();
    let mut amps = Vec::with_capacity(1 << n);
    for i in 0..(1usize << n) {
        let local: usize = graph
            .input
            .iter()
            .enumerate()
            .map(|(j, &v)| ((i >> v) & 1) << j)
            .sum();
        let mut a = input_amps[local] * scale;
        let phase: usize = graph
            .edges
            .iter()
            .filter(|&&(x, y)| (i >> x) & 1 == 1 && (i >> y) & 1 == 1)
            .count();
        if phase % 2 == 1 {
            a = -a;
        }
        amps.push(a);
    }
    amps
}

/// Applies `|v⟩⟨v|` to qubit `q` in place and returns the squared norm of
/// the result (unnormalized).
fn project_dense(amps: &mut [C64], q: usize, v: [C64; 2]) -> f64 {
    let bit = 1usize << q;
    let mut norm = 0.0;
    for i in 0..amps.len() {
        if i & bit == 0 {
            let overlap = v[0].conj() * amps[i] + v[1].conj() * amps[i | bit];
            amps[i] = v[0] * overlap;
            amps[i | bit] = v[1] * overlap;
            norm += overlap.norm_sqr();
        }
    }
    norm
}

/// Exact outcome distribution of `pattern` from the fully prepared graph
/// state, keyed like [`PatternRun::key`].
pub fn dense_oracle(pattern: &Pattern) -> Result<BTreeMap<String, f64>, MbqcError> {
    let n = pattern.graph.len();
    if n > MAX_ORACLE_VERTICES {
        return Err(MbqcError::TooLarge(n));
    }
    pattern.validate()?;
    // Branches carry unnormalized states; their squared norm is the
    // branch probability.
    let mut branches: Vec<(Vec<Option<u8>>, Vec<C64>)> = vec![(vec![None; n], dense_graph_state(&pattern.graph))];
    for &k in &pattern.order {
        let mut next = Vec::with_capacity(branches.len() * 2);
        for (outcomes, amps) in branches {
            let basis = pattern.specs[k].resolve(&outcomes);
            for bit in 0..2u8 {
                let mut a = amps.clone();
                let p = project_dense(&mut a, k, basis[bit as usize]);
                if p > 1e-15 {
                    let mut o = outcomes.clone();
                    o[k] = Some(bit);
                    next.push((o, a));
                }
            }
        }
        branches = next;
    }
    let mut dist = BTreeMap::new();
    for (outcomes, amps) in branches {
        let p: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        let bits: Vec<u8> = outcomes.into_iter().map(|o| o.unwrap_or(0)).collect();
        *dist.entry(outcome_key(&bits)).or_insert(0.0) += p;
    }
    Ok(dist)
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(untagged)]
enum LabelJson {
    Text(String),
    Number(i64),
}

impl LabelJson {
    fn text(&self) -> String {
        match self {
            LabelJson::Text(s) => s.clone(),
            LabelJson::Number(n) => n.to_string(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct InputJson {
    vertices: Vec<LabelJson>,
    state: Vec<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasurementJson {
    #[serde(default)]
    plane: Option<Plane>,
    #[serde(default)]
    angle: f64,
    #[serde(default)]
    basis: Option<[[[f64; 2]; 2]; 2]>,
    #[serde(default)]
    s_domain: Vec<LabelJson>,
    #[serde(default)]
    t_domain: Vec<LabelJson>,
}

#[derive(Debug, Deserialize)]
struct PatternJson {
    vertices: Vec<LabelJson>,
    #[serde(default)]
    edges: Vec<[LabelJson; 2]>,
    #[serde(default)]
    input: Option<InputJson>,
    order: Vec<LabelJson>,
    measurements: BTreeMap<String, MeasurementJson>,
}

impl Pattern {
    pub fn from_json(text: &str) -> Result<Self, MbqcError> {
        let raw: PatternJson = serde_json::from_str(text).map_err(|e| MbqcError::Json(e.to_string()))?;
        let labels: Vec<String> = raw.vertices.iter().map(LabelJson::text).collect();
        let lookup = |l: &LabelJson| {
            let t = l.text();
            labels
                .iter()
                .position(|x| *x == t)
                .ok_or(MbqcError::UnknownVertex(t))
        };
        let edges = raw
            .edges
            .iter()
            .map(|[a, b]| Ok((lookup(a)?, lookup(b)?)))
            .collect::<Result<Vec<_>, MbqcError>>()?;
        let graph = match &raw.input {
            None => ResourceGraph::new(&labels, &edges)?,
            Some(inp) => {
                let verts = inp.vertices.iter().map(lookup).collect::<Result<Vec<_>, _>>()?;
                let amps = inp.state.iter().map(|[re, im]| C64::new(*re, *im)).collect();
                let state = StateVector::from_amplitudes(amps).map_err(|e| MbqcError::InputState(e.to_string()))?;
                ResourceGraph::with_input(&labels, &edges, &verts, state)?
            }
        };
        let order = raw.order.iter().map(lookup).collect::<Result<Vec<_>, _>>()?;
        let mut specs = Vec::with_capacity(labels.len());
        for label in &labels {
            let m = raw
                .measurements
                .get(label)
                .ok_or_else(|| MbqcError::MissingSpec(label.clone()))?;
            let basis = match (&m.basis, m.plane) {
                (Some(b), _) => {
                    let v = |i: usize| [C64::new(b[i][0][0], b[i][0][1]), C64::new(b[i][1][0], b[i][1][1])];
                    Basis::Explicit([v(0), v(1)])
                }
                (None, plane) => Basis::Plane {
                    plane: plane.unwrap_or(Plane::XY),
                    angle: m.angle,
                },
            };
            specs.push(MeasurementSpec {
                basis,
                s_domain: m.s_domain.iter().map(lookup).collect::<Result<_, _>>()?,
                t_domain: m.t_domain.iter().map(lookup).collect::<Result<_, _>>()?,
            });
        }
        for key in raw.measurements.keys() {
            if !labels.contains(key) {
                return Err(MbqcError::UnknownVertex(key.clone()));
            }
        }
        Pattern::new(graph, order, specs)
    }
}
