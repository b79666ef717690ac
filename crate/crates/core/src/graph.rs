//! Weighted graphs over coefficient indices and the support family they
//! induce.
//!
//! A support `S` of size `s` belongs to the `(G, s, g, B)` family when some
//! forest `F` inside `G` spans exactly the nodes of `S` with exactly `g`
//! connected components and total edge weight at most `B`. Because all edge
//! weights are positive, feasibility is decided by the minimum-weight
//! spanning forest with exactly `g` components, which Kruskal's greedy edge
//! selection computes exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use itertools::Itertools;
use serde::Serialize;
use thiserror::Error;

/// Default ceiling on `C(d, s)` before support enumeration refuses to run.
pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("node index {index} out of range for graph on {node_count} nodes")]
    NodeOutOfRange { index: usize, node_count: usize },
    #[error("self-loop on node {0} is not allowed")]
    SelfLoop(usize),
    #[error("edge weight must be >= 1")]
    ZeroWeight,
    #[error("graph must have at least one node")]
    EmptyGraph,
    #[error("support must contain at least one index")]
    EmptySupport,
    #[error("support indices must be distinct (index {0} repeats)")]
    DuplicateIndex(usize),
    #[error("component count g must be >= 1")]
    ZeroComponents,
    #[error(
        "enumeration refused: C({d}, {s}) = {combinations} exceeds the cap of {cap} supports"
    )]
    EnumerationCapExceeded {
        d: usize,
        s: usize,
        combinations: u128,
        cap: u128,
    },
    #[error("invalid WGM parameters: {0}")]
    InvalidParams(String),
    #[error("graph text parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Undirected graph on `node_count` coefficient indices with positive
/// integer edge weights. At most one edge per unordered pair; parallel
/// inserts keep the lightest weight.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WeightedGraph {
    node_count: usize,
    /// Keyed by (min(u,v), max(u,v)).
    edges: BTreeMap<(usize, usize), u64>,
}

impl WeightedGraph {
    pub fn new(node_count: usize) -> Result<Self, GraphError> {
        if node_count == 0 {
            return Err(GraphError::EmptyGraph);
        }
        Ok(Self {
            node_count,
            edges: BTreeMap::new(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Insert an edge, collapsing a parallel edge to the lighter weight.
    pub fn add_edge(&mut self, u: usize, v: usize, weight: u64) -> Result<(), GraphError> {
        if u == v {
            return Err(GraphError::SelfLoop(u));
        }
        for &ix in &[u, v] {
            if ix >= self.node_count {
                return Err(GraphError::NodeOutOfRange {
                    index: ix,
                    node_count: self.node_count,
                });
            }
        }
        if weight == 0 {
            return Err(GraphError::ZeroWeight);
        }
        let key = (u.min(v), u.max(v));
        let entry = self.edges.entry(key).or_insert(weight);
        *entry = (*entry).min(weight);
        Ok(())
    }

    /// Edges as `(u, v, w)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        self.edges.iter().map(|(&(u, v), &w)| (u, v, w))
    }

    pub fn weight_of(&self, u: usize, v: usize) -> Option<u64> {
        self.edges.get(&(u.min(v), u.max(v))).copied()
    }

    /// Graph text format: first line `d`, then one `u v w` line per edge.
    /// Lines starting with `#` are comments.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{}\n", self.node_count));
        for (u, v, w) in self.edges() {
            out.push_str(&format!("{u} {v} {w}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, GraphError> {
        let mut graph: Option<WeightedGraph> = None;
        for (line_ix, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse = |tok: &str, what: &str| {
                tok.parse::<u64>().map_err(|_| GraphError::Parse {
                    line: line_ix + 1,
                    message: format!("expected integer {what}, got {tok:?}"),
                })
            };
            match graph {
                None => {
                    let d = parse(line, "node count")? as usize;
                    graph = Some(WeightedGraph::new(d)?);
                }
                Some(ref mut g) => {
                    let toks: Vec<&str> = line.split_whitespace().collect();
                    if toks.len() != 3 {
                        return Err(GraphError::Parse {
                            line: line_ix + 1,
                            message: format!("expected `u v w`, got {line:?}"),
                        });
                    }
                    let u = parse(toks[0], "node index")? as usize;
                    let v = parse(toks[1], "node index")? as usize;
                    let w = parse(toks[2], "weight")?;
                    g.add_edge(u, v, w)?;
                }
            }
        }
        graph.ok_or(GraphError::Parse {
            line: 0,
            message: "empty graph text".into(),
        })
    }
}

/// Parameters `(s, g, B)` of a support family plus the target weight-degree
/// `rho` used when building the explicit lower-bound graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WgmParams {
    pub s: usize,
    pub g: usize,
    pub budget: u64,
    pub rho: usize,
}

impl WgmParams {
    pub fn new(s: usize, g: usize, budget: u64, rho: usize) -> Result<Self, GraphError> {
        if g == 0 || s == 0 || g > s {
            return Err(GraphError::InvalidParams(format!(
                "need 1 <= g <= s, got s={s}, g={g}"
            )));
        }
        if budget == 0 {
            return Err(GraphError::InvalidParams("budget B must be >= 1".into()));
        }
        if rho < 2 || !rho.is_multiple_of(2) {
            return Err(GraphError::InvalidParams(format!(
                "rho must be a positive even integer >= 2, got {rho}"
            )));
        }
        Ok(Self { s, g, budget, rho })
    }
}

/// Sorted set of distinct node indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Support(Vec<usize>);

impl Support {
    pub fn new(mut indices: Vec<usize>) -> Result<Self, GraphError> {
        if indices.is_empty() {
            return Err(GraphError::EmptySupport);
        }
        indices.sort_unstable();
        for pair in indices.windows(2) {
            if pair[0] == pair[1] {
                return Err(GraphError::DuplicateIndex(pair[0]));
            }
        }
        Ok(Self(indices))
    }

    /// Caller guarantees sorted distinct indices.
    pub(crate) fn from_sorted_unchecked(indices: Vec<usize>) -> Self {
        debug_assert!(indices.windows(2).all(|p| p[0] < p[1]));
        Self(indices)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.binary_search(&index).is_ok()
    }
}

impl fmt::Display for Support {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.0.iter().join(", "))
    }
}

/// Per-node weight-degree and its maximum over the graph: for each node, the
/// largest number of incident edges sharing a single weight value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WeightDegree {
    pub per_node: Vec<usize>,
    pub graph_value: usize,
}

pub fn weight_degree(graph: &WeightedGraph) -> WeightDegree {
    let mut counts: Vec<BTreeMap<u64, usize>> = vec![BTreeMap::new(); graph.node_count()];
    for (u, v, w) in graph.edges() {
        *counts[u].entry(w).or_insert(0) += 1;
        *counts[v].entry(w).or_insert(0) += 1;
    }
    let per_node: Vec<usize> = counts
        .iter()
        .map(|m| m.values().copied().max().unwrap_or(0))
        .collect();
    let graph_value = per_node.iter().copied().max().unwrap_or(0);
    WeightDegree {
        per_node,
        graph_value,
    }
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// Minimum total weight of a forest inside `graph` that spans exactly the
/// nodes of `support` with exactly `g` connected components, or `None` when
/// no such forest exists (induced subgraph has more than `g` components, or
/// `g` exceeds `|S|`).
///
/// Kruskal's greedy selection is exact here: the first `k` cycle-free edges
/// in weight order form a minimum-weight forest with `|S| - k` components
/// for every prefix length `k`.
pub fn min_forest_weight(
    graph: &WeightedGraph,
    support: &Support,
    g: usize,
) -> Result<Option<u64>, GraphError> {
    if g == 0 {
        return Err(GraphError::ZeroComponents);
    }
    for &ix in support.indices() {
        if ix >= graph.node_count() {
            return Err(GraphError::NodeOutOfRange {
                index: ix,
                node_count: graph.node_count(),
            });
        }
    }
    let size = support.len();
    if g > size {
        return Ok(None);
    }
    let need = size - g;
    if need == 0 {
        return Ok(Some(0));
    }

    // Position of each support node in the sorted index list.
    let pos = |ix: usize| support.indices().binary_search(&ix).unwrap();
    let mut induced: Vec<(u64, usize, usize)> = graph
        .edges()
        .filter(|&(u, v, _)| support.contains(u) && support.contains(v))
        .map(|(u, v, w)| (w, pos(u), pos(v)))
        .collect();
    induced.sort_unstable();

    let mut dsu = DisjointSet::new(size);
    let mut total = 0u64;
    let mut added = 0usize;
    for (w, u, v) in induced {
        if dsu.union(u, v) {
            total += w;
            added += 1;
            if added == need {
                return Ok(Some(total));
            }
        }
    }
    Ok(None)
}

/// Why a candidate support is (or is not) a member of the family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MembershipVerdict {
    Member { forest_weight: u64 },
    WrongCardinality { expected: usize, got: usize },
    IndexOutOfRange { index: usize },
    TooManyComponents,
    OverBudget { forest_weight: u64, budget: u64 },
}

impl MembershipVerdict {
    pub fn is_member(&self) -> bool {
        matches!(self, MembershipVerdict::Member { .. })
    }
}

impl fmt::Display for MembershipVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Member { forest_weight } => {
                write!(f, "member (forest weight {forest_weight})")
            }
            Self::WrongCardinality { expected, got } => {
                write!(f, "not a member: |S| = {got}, expected {expected}")
            }
            Self::IndexOutOfRange { index } => {
                write!(f, "not a member: index {index} outside the graph")
            }
            Self::TooManyComponents => {
                write!(f, "not a member: induced subgraph has more components than g")
            }
            Self::OverBudget {
                forest_weight,
                budget,
            } => write!(
                f,
                "not a member: minimum forest weight {forest_weight} exceeds budget {budget}"
            ),
        }
    }
}

/// Full membership test with a diagnostic verdict. Malformed supports yield
/// a non-member verdict rather than an error.
pub fn wgm_membership(
    graph: &WeightedGraph,
    params: &WgmParams,
    support: &Support,
) -> MembershipVerdict {
    if support.len() != params.s {
        return MembershipVerdict::WrongCardinality {
            expected: params.s,
            got: support.len(),
        };
    }
    if let Some(&ix) = support.indices().iter().find(|&&ix| ix >= graph.node_count()) {
        return MembershipVerdict::IndexOutOfRange { index: ix };
    }
    match min_forest_weight(graph, support, params.g) {
        Ok(Some(w)) if w <= params.budget => MembershipVerdict::Member { forest_weight: w },
        Ok(Some(w)) => MembershipVerdict::OverBudget {
            forest_weight: w,
            budget: params.budget,
        },
        Ok(None) => MembershipVerdict::TooManyComponents,
        // Ranges were checked above; any residual error means non-membership.
        Err(_) => MembershipVerdict::TooManyComponents,
    }
}

pub fn is_wgm_support(graph: &WeightedGraph, params: &WgmParams, support: &Support) -> bool {
    wgm_membership(graph, params, support).is_member()
}

/// `C(n, k)` if it is at most `cap`, else `None`. Exact in u128.
fn binomial_capped(n: usize, k: usize, cap: u128) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k) as u128;
    let n = n as u128;
    // Quick log-space screen so huge inputs cannot overflow the product.
    let log_cap = (cap as f64).ln() + 1.0;
    let mut log_c = 0.0f64;
    for i in 0..k {
        log_c += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
    }
    if log_c > log_cap + 2.0 {
        return None;
    }
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) / (i + 1);
    }
    (c <= cap).then_some(c)
}

/// Exact binomial coefficient in u128; panics on overflow (desk-scale use).
pub fn binomial_u128(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k) as u128;
    let n = n as u128;
    let mut c: u128 = 1;
    for i in 0..k {
        c = c.checked_mul(n - i).expect("binomial overflow") / (i + 1);
    }
    c
}

/// All members of the `(G, s, g, B)` family in lexicographic order, by brute
/// force over every `s`-subset. Refuses when `C(d, s)` exceeds `cap`.
pub fn enumerate_wgm_supports_capped(
    graph: &WeightedGraph,
    params: &WgmParams,
    cap: u128,
) -> Result<Vec<Support>, GraphError> {
    let d = graph.node_count();
    let s = params.s;
    let combinations = binomial_capped(d, s, cap).ok_or({
        GraphError::EnumerationCapExceeded {
            d,
            s,
            combinations: 0,
            cap,
        }
    })?;
    if combinations > cap {
        return Err(GraphError::EnumerationCapExceeded {
            d,
            s,
            combinations,
            cap,
        });
    }
    let mut members = Vec::new();
    for combo in (0..d).combinations(s) {
        let support = Support::from_sorted_unchecked(combo);
        if is_wgm_support(graph, params, &support) {
            members.push(support);
        }
    }
    Ok(members)
}

pub fn enumerate_wgm_supports(
    graph: &WeightedGraph,
    params: &WgmParams,
) -> Result<Vec<Support>, GraphError> {
    enumerate_wgm_supports_capped(graph, params, DEFAULT_ENUMERATION_CAP)
}

impl FromStr for WeightedGraph {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        WeightedGraph::from_text(s)
    }
}
