//! Conflict graphs, feasible schedules and the capacity region.

mod simplex;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default node cap for exact enumeration.
pub const DEFAULT_EXACT_CAP: usize = 30;

/// Hard cap imposed by the 64-bit schedule masks.
pub const MAX_NODES: usize = 64;

/// Interference graph. Nodes `i` and `j` may not transmit together when
/// `(i, j)` is an edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConflictGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<u64>,
}

impl ConflictGraph {
    /// Builds a graph from an undirected edge list. Duplicate edges and both
    /// orientations of the same edge are merged.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("graph needs at least one node".into()));
        }
        if n > MAX_NODES {
            return Err(Error::InvalidGraph(format!(
                "{n} nodes exceed the {MAX_NODES}-node mask width"
            )));
        }
        let mut neighbors = vec![0u64; n];
        let mut canon = Vec::with_capacity(edges.len());
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidGraph(format!("edge ({i}, {j}) out of range for n = {n}")));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop at node {i}")));
            }
            neighbors[i] |= 1 << j;
            neighbors[j] |= 1 << i;
            canon.push((i.min(j), i.max(j)));
        }
        canon.sort_unstable();
        canon.dedup();
        Ok(Self { n, edges: canon, neighbors })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Adjacency bitmask of node `i`.
    pub fn neighbors(&self, i: usize) -> u64 {
        self.neighbors[i]
    }

    pub fn neighbor_masks(&self) -> &[u64] {
        &self.neighbors
    }

    pub fn is_independent(&self, schedule: Schedule) -> bool {
        let m = schedule.mask();
        if self.n < 64 && m >> self.n != 0 {
            return false;
        }
        schedule.nodes().all(|i| self.neighbors[i] & m == 0)
    }

    /// Named presets: `single`, `clique2`, `path3`, `cycle5`, `grid3x3`.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "single" => Self::new(1, &[]),
            "clique2" => Self::new(2, &[(0, 1)]),
            "path3" => Self::new(3, &[(0, 1), (1, 2)]),
            "cycle5" => Self::new(5, &(0..5).map(|i| (i, (i + 1) % 5)).collect::<Vec<_>>()),
            "grid3x3" => {
                let mut edges = Vec::new();
                for row in 0..3 {
                    for col in 0..3 {
                        let v = 3 * row + col;
                        if col < 2 {
                            edges.push((v, v + 1));
                        }
                        if row < 2 {
                            edges.push((v, v + 3));
                        }
                    }
                }
                Self::new(9, &edges)
            }
            other => Err(Error::InvalidGraph(format!("unknown preset '{other}'"))),
        }
    }

    /// Parses the edge-list text format: node count on the first
    /// non-comment line, then one `i j` pair (0-indexed) per line.
    /// Blank lines and `#` comments are ignored.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidGraph("empty edge list".into()))?;
        let n: usize = header
            .parse()
            .map_err(|_| Error::InvalidGraph(format!("bad node count '{header}'")))?;
        let mut edges = Vec::new();
        for line in lines {
            let mut it = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<usize> {
                tok.and_then(|t| t.parse().ok())
                    .ok_or_else(|| Error::InvalidGraph(format!("bad edge line '{line}'")))
            };
            let i = parse(it.next())?;
            let j = parse(it.next())?;
            if it.next().is_some() {
                return Err(Error::InvalidGraph(format!("bad edge line '{line}'")));
            }
            edges.push((i, j));
        }
        Self::new(n, &edges)
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{}\n", self.n);
        for (i, j) in &self.edges {
            out.push_str(&format!("{i} {j}\n"));
        }
        out
    }
}

impl FromStr for ConflictGraph {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse_edge_list(s)
    }
}

/// Preset names with one-line descriptions, in a stable order.
pub const PRESETS: &[(&str, &str)] = &[
    ("single", "one node, no conflicts"),
    ("clique2", "two mutually interfering nodes"),
    ("path3", "path 0-1-2"),
    ("cycle5", "five-node ring"),
    ("grid3x3", "3x3 grid with 4-neighbour interference"),
];

/// A transmission pattern; bit `i` set means node `i` transmits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schedule(u64);

impl Schedule {
    pub const EMPTY: Schedule = Schedule(0);

    pub fn from_mask(mask: u64) -> Self {
        Schedule(mask)
    }

    pub fn singleton(i: usize) -> Self {
        Schedule(1 << i)
    }

    pub fn mask(self) -> u64 {
        self.0
    }

    pub fn contains(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn with(self, i: usize) -> Self {
        Schedule(self.0 | 1 << i)
    }

    pub fn without(self, i: usize) -> Self {
        Schedule(self.0 & !(1 << i))
    }

    /// Indices of the transmitting nodes, ascending.
    pub fn nodes(self) -> impl Iterator<Item = usize> {
        let mut m = self.0;
        std::iter::from_fn(move || {
            if m == 0 {
                None
            } else {
                let i = m.trailing_zeros() as usize;
                m &= m - 1;
                Some(i)
            }
        })
    }

    /// `σ·w`, summing only over transmitting nodes so that `-inf` weights on
    /// silent nodes never produce `0 * inf`.
    pub fn dot(self, w: &[f64]) -> f64 {
        self.nodes().map(|i| w[i]).sum()
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.nodes().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}")
    }
}

/// Non-negative per-node rates (work per unit time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RateVector(Vec<f64>);

impl RateVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidInput(format!("rate {i} = {v} is not a finite non-negative number")));
        }
        Ok(Self(values))
    }

    pub fn uniform(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Smallest strictly positive entry, if any.
    pub fn min_positive(&self) -> Option<f64> {
        self.0.iter().copied().filter(|&v| v > 0.0).reduce(f64::min)
    }
}

impl std::ops::Index<usize> for RateVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// The enumerated feasible schedule set `I(G)`, in ascending mask order.
#[derive(Debug, Clone)]
pub struct IndependentSetFamily {
    n: usize,
    schedules: Vec<Schedule>,
    index: HashMap<u64, usize>,
}

impl IndependentSetFamily {
    fn from_sorted(n: usize, schedules: Vec<Schedule>) -> Self {
        let index = schedules.iter().enumerate().map(|(k, s)| (s.mask(), k)).collect();
        Self { n, schedules, index }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.schedules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.schedules.is_empty()
    }

    pub fn schedules(&self) -> &[Schedule] {
        &self.schedules
    }

    pub fn position(&self, schedule: Schedule) -> Option<usize> {
        self.index.get(&schedule.mask()).copied()
    }

    pub fn contains(&self, schedule: Schedule) -> bool {
        self.index.contains_key(&schedule.mask())
    }

    /// Sub-family of schedules using only nodes in `allowed`.
    pub fn restrict(&self, allowed: u64) -> Self {
        let kept = self.schedules.iter().copied().filter(|s| s.mask() & !allowed == 0).collect();
        Self::from_sorted(self.n, kept)
    }

    /// `Σ_σ weights[σ]·σ`, the rate vector induced by a distribution over the family.
    pub fn mean_schedule(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (s, &w) in self.schedules.iter().zip(weights) {
            for i in s.nodes() {
                out[i] += w;
            }
        }
        out
    }
}

/// Enumerates `I(G)` with the default cap of [`DEFAULT_EXACT_CAP`] nodes.
pub fn enumerate_independent_sets(graph: &ConflictGraph) -> Result<IndependentSetFamily> {
    enumerate_independent_sets_capped(graph, DEFAULT_EXACT_CAP)
}

pub fn enumerate_independent_sets_capped(graph: &ConflictGraph, cap: usize) -> Result<IndependentSetFamily> {
    let n = graph.n();
    if n > cap {
        return Err(Error::ExactModeUnavailable { n, cap });
    }
    let mut out = Vec::new();
    // Depth-first over nodes in index order; a node may join only if none of
    // its already-chosen neighbours is present.
    fn extend(node: usize, mask: u64, nbrs: &[u64], out: &mut Vec<Schedule>) {
        if node == nbrs.len() {
            out.push(Schedule(mask));
            return;
        }
        extend(node + 1, mask, nbrs, out);
        if nbrs[node] & mask == 0 {
            extend(node + 1, mask | 1 << node, nbrs, out);
        }
    }
    extend(0, 0, graph.neighbor_masks(), &mut out);
    out.sort_unstable();
    Ok(IndependentSetFamily::from_sorted(n, out))
}

/// Outcome of the admissibility linear program.
#[derive(Debug, Clone, Serialize)]
pub struct Admissibility {
    /// `max_slack > margin`, i.e. `λ + margin·1` lies strictly inside `Λ`.
    pub admissible: bool,
    /// Largest `t` with `λ + t·1 ∈ Λ`. Negative when `λ ∉ Λ`.
    pub max_slack: f64,
    /// Distribution `ν` over the family (aligned with its schedule order)
    /// with `Σν_σ σ = λ + margin·1` exactly; present only when admissible.
    pub decomposition: Option<Vec<f64>>,
    /// Dual certificate: weights `w ≥ 0`, `Σw = 1`, with
    /// `max_σ w·σ − w·λ = max_slack`.
    pub separating_weights: Vec<f64>,
}

/// Slack tolerance for declaring `max_slack > margin`.
const SLACK_EPS: f64 = 1e-12;

/// Decides whether `λ + margin·1` lies strictly inside the capacity region.
pub fn is_strictly_admissible(
    lambda: &RateVector,
    family: &IndependentSetFamily,
    margin: f64,
) -> Result<Admissibility> {
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::InvalidInput(format!("margin must be finite and >= 0, got {margin}")));
    }
    if lambda.len() != family.n() {
        return Err(Error::InvalidInput(format!(
            "rate vector has length {}, graph has {} nodes",
            lambda.len(),
            family.n()
        )));
    }
    let active = if family.n() == 64 { u64::MAX } else { (1u64 << family.n()) - 1 };
    let (max_slack, dominating, separating_weights) = max_slack(family, lambda.as_slice(), active)?;
    let admissible = max_slack - margin > SLACK_EPS;
    let decomposition = admissible.then(|| {
        let target: Vec<f64> = lambda.as_slice().iter().map(|l| l + margin).collect();
        exact_decomposition(family, dominating, &target)
    });
    Ok(Admissibility { admissible, max_slack, decomposition, separating_weights })
}

/// Solves `max t  s.t.  Σν_σ σ_i ≥ λ_i + t` for every node `i` in `active`,
/// `ν` a distribution over `family`. Returns `(t*, ν*, w*)`.
pub(crate) fn max_slack(
    family: &IndependentSetFamily,
    lambda: &[f64],
    active: u64,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let n = family.n();
    let nodes: Vec<usize> = (0..n).filter(|&i| active >> i & 1 == 1).collect();
    let m = family.len();
    if nodes.is_empty() {
        let mut nu = vec![0.0; m];
        nu[family.position(Schedule::EMPTY).expect("family contains the empty schedule")] = 1.0;
        return Ok((f64::INFINITY, nu, vec![0.0; n]));
    }
    // Shift t = t' - shift with t' >= 0. t* >= -max λ, so shift = 1 + max λ.
    let shift = 1.0 + nodes.iter().map(|&i| lambda[i]).fold(0.0, f64::max);
    // Columns: ν_σ for every σ, then t'. Rows: one per active node, then Σν <= 1.
    // Σν <= 1 is equivalent to Σν = 1 because the empty schedule absorbs slack.
    let mut a = Vec::with_capacity(nodes.len() + 1);
    let mut b = Vec::with_capacity(nodes.len() + 1);
    for &i in &nodes {
        let mut row: Vec<f64> = family.schedules().iter().map(|s| if s.contains(i) { -1.0 } else { 0.0 }).collect();
        row.push(1.0);
        a.push(row);
        b.push(shift - lambda[i]);
    }
    let mut total = vec![1.0; m];
    total.push(0.0);
    a.push(total);
    b.push(1.0);
    let mut c = vec![0.0; m];
    c.push(1.0);

    let sol = simplex::maximize(&a, &b, &c)
        .map_err(|e| Error::InvalidInput(format!("admissibility LP failed: {e:?}")))?;
    let t = sol.objective - shift;
    let mut nu: Vec<f64> = sol.x[..m].iter().map(|v| v.max(0.0)).collect();
    let mass: f64 = nu.iter().sum();
    let empty = family.position(Schedule::EMPTY).expect("family contains the empty schedule");
    nu[empty] += (1.0 - mass).max(0.0);
    let norm: f64 = nu.iter().sum();
    nu.iter_mut().for_each(|v| *v /= norm);

    let mut w = vec![0.0; n];
    for (k, &i) in nodes.iter().enumerate() {
        w[i] = sol.duals[k].max(0.0);
    }
    let wsum: f64 = w.iter().sum();
    if wsum > 0.0 {
        w.iter_mut().for_each(|v| *v /= wsum);
    }
    Ok((t, nu, w))
}

/// Turns a dominating distribution (`Σν σ ≥ target`) into one meeting the
/// target exactly by moving excess mass from `σ` to `σ \ {i}`, which is
/// again independent and changes only coordinate `i`.
fn exact_decomposition(family: &IndependentSetFamily, mut nu: Vec<f64>, target: &[f64]) -> Vec<f64> {
    let current = family.mean_schedule(&nu);
    for i in 0..family.n() {
        let mut excess = current[i] - target[i];
        if excess <= 0.0 {
            continue;
        }
        for k in 0..family.len() {
            if excess <= 0.0 {
                break;
            }
            let s = family.schedules()[k];
            if !s.contains(i) || nu[k] <= 0.0 {
                continue;
            }
            let moved = nu[k].min(excess);
            nu[k] -= moved;
            let dest = family.position(s.without(i)).expect("family is closed under subsets");
            nu[dest] += moved;
            excess -= moved;
        }
    }
    nu
}

/// `argmax_σ weights·σ` over the family; ties go to the smallest mask.
pub fn max_weight_independent_set(weights: &[f64], family: &IndependentSetFamily) -> (Schedule, f64) {
    let mut best = (Schedule::EMPTY, f64::NEG_INFINITY);
    for &s in family.schedules() {
        let v = s.dot(weights);
        if v > best.1 {
            best = (s, v);
        }
    }
    best
}
