//! The explicit lower-bound graph family and its support counting.
//!
//! `d` nodes split into `g` circular groups of `d/g`. Within a group, node
//! `i` connects forward to the next `rho/2` nodes with weight 1, the
//! following `rho/2` with weight 2, and so on up to weight `B/(s-g)`.
//! Groups stay disconnected. The parameters must satisfy
//!
//! - R1: `d/g >= rho*B/(s-g) + 1` (circular windows never wrap into
//!   themselves, so every edge pair is unique),
//! - R2: `rho*B/(2(s-g)) >= s/g - 1` (each root's forward window is large
//!   enough to host a connected component of `s/g` nodes),
//! - R3: `B >= s - g` (the weight budget covers a spanning forest),
//!
//! plus the divisibility conditions `g | d`, `g | s`, `(s-g) | B`, and
//! `2 | rho`, which this module requires exactly rather than rounding.

use std::fmt;

use itertools::Itertools;
use serde::Serialize;
use thiserror::Error;

use crate::graph::{binomial_u128, Support, WeightedGraph, WgmParams, DEFAULT_ENUMERATION_CAP};
use crate::info::log_binomial;

#[derive(Debug, Error)]
pub enum ConstructionError {
    #[error("construction parameters do not satisfy the requirements:\n{0}")]
    Requirements(RequirementsReport),
    #[error("R3 violated: budget B = {budget} is below s - g = {deficit}")]
    BudgetBelowSparsityGap { budget: u64, deficit: u64 },
    #[error("suggest_params requires s > g, got s = {s}, g = {g}")]
    SparsityGapEmpty { s: usize, g: usize },
    #[error(
        "enumeration refused: construction family has {count} supports, above the cap of {cap}"
    )]
    EnumerationCapExceeded { count: u128, cap: u128 },
    #[error("graph has {got} nodes but the spec requires {expected}")]
    GraphMismatch { expected: usize, got: usize },
}

/// One evaluated requirement, with both sides in the units the inequality
/// is usually quoted in.
#[derive(Debug, Clone, Serialize)]
pub struct RequirementCheck {
    pub name: &'static str,
    pub statement: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RequirementsReport {
    pub checks: Vec<RequirementCheck>,
}

impl RequirementsReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &RequirementCheck> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&RequirementCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for RequirementsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "  {:<10} {:<28} lhs = {} rhs = {} : {}",
                c.name,
                c.statement,
                c.lhs,
                c.rhs,
                if c.pass { "pass" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

/// Validated parameter tuple for the lower-bound construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConstructionSpec {
    d: usize,
    s: usize,
    g: usize,
    budget: u64,
    rho: usize,
}

impl ConstructionSpec {
    pub fn new(
        d: usize,
        s: usize,
        g: usize,
        budget: u64,
        rho: usize,
    ) -> Result<Self, ConstructionError> {
        let report = validate_requirements(d, s, g, budget, rho);
        if report.all_pass() {
            Ok(Self { d, s, g, budget, rho })
        } else {
            Err(ConstructionError::Requirements(report))
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn g(&self) -> usize {
        self.g
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn rho(&self) -> usize {
        self.rho
    }

    /// Nodes per group, `d/g`.
    pub fn group_size(&self) -> usize {
        self.d / self.g
    }

    /// Number of weight levels, `B/(s-g)`.
    pub fn weight_levels(&self) -> u64 {
        self.budget / (self.s - self.g) as u64
    }

    /// Forward fan-out per weight level, `rho/2`.
    pub fn band(&self) -> usize {
        self.rho / 2
    }

    /// Forward window a root can recruit from, `rho*B/(2(s-g))`.
    pub fn reach(&self) -> usize {
        self.band() * self.weight_levels() as usize
    }

    /// Nodes each connected component recruits beyond its root, `s/g - 1`.
    pub fn picks_per_group(&self) -> usize {
        self.s / self.g - 1
    }

    pub fn wgm_params(&self) -> WgmParams {
        WgmParams::new(self.s, self.g, self.budget, self.rho)
            .expect("validated spec always yields valid WGM parameters")
    }

    pub fn validation_report(&self) -> RequirementsReport {
        validate_requirements(self.d, self.s, self.g, self.budget, self.rho)
    }
}

impl fmt::Display for ConstructionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "d={} s={} g={} B={} rho={}",
            self.d, self.s, self.g, self.budget, self.rho
        )
    }
}

/// Evaluate every requirement and divisibility condition on raw parameters.
/// Comparisons are exact (integer cross-multiplication); the reported sides
/// are in the customary units, `NaN` where a guard makes them undefined.
pub fn validate_requirements(
    d: usize,
    s: usize,
    g: usize,
    budget: u64,
    rho: usize,
) -> RequirementsReport {
    let mut checks = Vec::new();
    let mut push = |name, statement, lhs: f64, rhs: f64, pass: bool| {
        checks.push(RequirementCheck {
            name,
            statement,
            lhs,
            rhs,
            pass,
        });
    };

    let positive = d >= 1 && s >= 1 && g >= 1 && budget >= 1 && rho >= 1;
    push(
        "positive",
        "d, s, g, B, rho >= 1",
        if positive { 1.0 } else { 0.0 },
        1.0,
        positive,
    );
    push("s > g", "s > g required", s as f64, g as f64, s > g);
    push(
        "g | d",
        "g divides d",
        (d % g.max(1)) as f64,
        0.0,
        g >= 1 && d.is_multiple_of(g),
    );
    push(
        "g | s",
        "g divides s",
        (s % g.max(1)) as f64,
        0.0,
        g >= 1 && s.is_multiple_of(g),
    );
    let gap = s.saturating_sub(g) as u64;
    push(
        "(s-g) | B",
        "(s-g) divides B",
        if gap > 0 { (budget % gap) as f64 } else { f64::NAN },
        0.0,
        gap > 0 && budget.is_multiple_of(gap),
    );
    push(
        "rho even",
        "rho is even and >= 2",
        rho as f64,
        2.0,
        rho >= 2 && rho.is_multiple_of(2),
    );

    let (d128, s128, g128, b128, r128) = (
        d as u128,
        s as u128,
        g as u128,
        budget as u128,
        rho as u128,
    );
    if s > g && g >= 1 {
        let gapu = s128 - g128;
        // R1: d/g >= rho*B/(s-g) + 1  <=>  d*(s-g) >= g*rho*B + g*(s-g)
        let r1 = d128 * gapu >= g128 * r128 * b128 + g128 * gapu;
        push(
            "R1",
            "d/g >= rho*B/(s-g) + 1",
            d as f64 / g as f64,
            (rho as f64 * budget as f64) / gap as f64 + 1.0,
            r1,
        );
        // R2: rho*B/(2(s-g)) >= s/g - 1  <=>  rho*B*g >= 2*(s-g)^2
        let r2 = r128 * b128 * g128 >= 2 * gapu * gapu;
        push(
            "R2",
            "rho*B/(2(s-g)) >= s/g - 1",
            (rho as f64 * budget as f64) / (2.0 * gap as f64),
            s as f64 / g as f64 - 1.0,
            r2,
        );
        let r3 = b128 >= gapu;
        push("R3", "B >= s - g", budget as f64, gap as f64, r3);
    } else {
        push("R1", "d/g >= rho*B/(s-g) + 1", f64::NAN, f64::NAN, false);
        push("R2", "rho*B/(2(s-g)) >= s/g - 1", f64::NAN, f64::NAN, false);
        push("R3", "B >= s - g", f64::NAN, f64::NAN, false);
    }

    RequirementsReport { checks }
}

/// Build the canonical lower-bound graph: `g` disjoint circular groups, node
/// `i` connected to the `p`-th band of `rho/2` successors with weight `p`
/// for each level `p = 1..=B/(s-g)`. Cross-group edges, which the family
/// tolerates but never uses, are omitted.
pub fn build_lb_graph(spec: &ConstructionSpec) -> WeightedGraph {
    let m = spec.group_size();
    let band = spec.band();
    let levels = spec.weight_levels();
    let mut graph = WeightedGraph::new(spec.d()).expect("spec.d >= 1");
    for group in 0..spec.g() {
        let base = group * m;
        for i in 0..m {
            for p in 1..=levels {
                for q in 1..=band {
                    let offset = (i + (p as usize - 1) * band + q) % m;
                    graph
                        .add_edge(base + i, base + offset, p)
                        .expect("construction edges are always in range");
                }
            }
        }
    }
    graph
}

/// Smallest even `rho` and smallest `d` (multiple of `g`) that satisfy R1
/// and R2 for the given `(s, g, B)`.
pub fn suggest_params(s: usize, g: usize, budget: u64) -> Result<(usize, usize), ConstructionError> {
    if s <= g || g == 0 {
        return Err(ConstructionError::SparsityGapEmpty { s, g });
    }
    let gap = (s - g) as u128;
    if (budget as u128) < gap {
        return Err(ConstructionError::BudgetBelowSparsityGap {
            budget,
            deficit: gap as u64,
        });
    }
    // R2 lower bound: rho >= 2(s-g)^2 / (B g), rounded up to an even integer.
    let num = 2 * gap * gap;
    let den = budget as u128 * g as u128;
    let mut rho = num.div_ceil(den) as usize;
    if rho < 2 {
        rho = 2;
    }
    if rho % 2 == 1 {
        rho += 1;
    }
    // R1 lower bound: d >= g*rho*B/(s-g) + g, rounded up to a multiple of g.
    let d_lb = (g as u128 * rho as u128 * budget as u128).div_ceil(gap) + g as u128;
    let d = (d_lb.div_ceil(g as u128) * g as u128) as usize;
    Ok((rho, d))
}

/// Number of construction supports, `(d/g)^g * C(reach, s/g - 1)^g`, if it
/// stays at or below `cap`.
fn construction_count_capped(spec: &ConstructionSpec, cap: u128) -> Option<u128> {
    let per_group = (spec.group_size() as u128)
        .checked_mul(binomial_u128(spec.reach(), spec.picks_per_group()))?;
    let mut total: u128 = 1;
    for _ in 0..spec.g() {
        total = total.checked_mul(per_group)?;
        if total > cap {
            return None;
        }
    }
    Some(total)
}

/// Enumerate the construction's support family: one root per group, plus
/// `s/g - 1` companions drawn from the root's next `reach` circular
/// successors. Deterministic order: roots and window combinations advance
/// lexicographically, last group fastest.
pub fn enumerate_construction_supports_capped(
    graph: &WeightedGraph,
    spec: &ConstructionSpec,
    cap: u128,
) -> Result<Vec<Support>, ConstructionError> {
    if graph.node_count() != spec.d() {
        return Err(ConstructionError::GraphMismatch {
            expected: spec.d(),
            got: graph.node_count(),
        });
    }
    let count = construction_count_capped(spec, cap)
        .ok_or(ConstructionError::EnumerationCapExceeded { count: 0, cap })?;
    if count > cap {
        return Err(ConstructionError::EnumerationCapExceeded { count, cap });
    }

    let m = spec.group_size();
    let picks = spec.picks_per_group();
    // Per-group choices: every (root, window combination) in order.
    let mut group_choices: Vec<Vec<usize>> = Vec::new();
    for root in 0..m {
        for combo in (1..=spec.reach()).combinations(picks) {
            let mut nodes = Vec::with_capacity(picks + 1);
            nodes.push(root);
            nodes.extend(combo.iter().map(|&c| (root + c) % m));
            group_choices.push(nodes);
        }
    }

    let mut supports = Vec::with_capacity(count as usize);
    let mut stack = vec![0usize; spec.g()];
    loop {
        let mut indices = Vec::with_capacity(spec.s());
        for (group, &choice) in stack.iter().enumerate() {
            let base = group * m;
            indices.extend(group_choices[choice].iter().map(|&i| base + i));
        }
        indices.sort_unstable();
        supports.push(Support::from_sorted_unchecked(indices));

        // Mixed-radix increment, last group fastest.
        let mut level = spec.g();
        loop {
            if level == 0 {
                return Ok(supports);
            }
            level -= 1;
            stack[level] += 1;
            if stack[level] < group_choices.len() {
                break;
            }
            stack[level] = 0;
        }
    }
}

pub fn enumerate_construction_supports(
    graph: &WeightedGraph,
    spec: &ConstructionSpec,
) -> Result<Vec<Support>, ConstructionError> {
    enumerate_construction_supports_capped(graph, spec, DEFAULT_ENUMERATION_CAP)
}

/// Exact and relaxed log-counts (nats) of the restricted ensemble.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CountBound {
    /// `s log 2 + g log(d/g) + g log C(reach, s/g - 1)`
    pub exact_log: f64,
    /// `s log 2 + g log(d/g) + (s-g) log(rho B g / (2 (s-g)^2))`
    pub relaxed_log: f64,
}

pub fn ensemble_count_bound(spec: &ConstructionSpec) -> CountBound {
    let s = spec.s() as f64;
    let g = spec.g() as f64;
    let gap = (spec.s() - spec.g()) as f64;
    let common = s * std::f64::consts::LN_2 + g * (spec.group_size() as f64).ln();
    let exact_log = common + g * log_binomial(spec.reach() as u64, spec.picks_per_group() as u64);
    let ratio = (spec.rho() as f64) * (spec.budget() as f64) * g / (2.0 * gap * gap);
    let relaxed_log = common + gap * ratio.ln();
    CountBound {
        exact_log,
        relaxed_log,
    }
}
