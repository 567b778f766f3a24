//! Local projection of each user's adjacency to a θ-bounded degree.
//!
//! Node-level projection truncates the reported degree. Edge-level
//! projection has over-threshold users ask neighbors to drop mutual edges;
//! the request bits are randomized so a neighbor receiving one cannot tell
//! whether the sender's degree was above or below θ.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::Substreams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionMethod {
    Node,
    Edge,
}

impl std::fmt::Display for ProjectionMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProjectionMethod::Node => "node",
            ProjectionMethod::Edge => "edge",
        })
    }
}

fn check_theta(theta: usize) -> Result<()> {
    if theta < 1 {
        return Err(Error::invalid("theta", "projection bound must be at least 1"));
    }
    Ok(())
}

fn check_eps2(eps2: f64) -> Result<()> {
    if !(eps2 > 0.0 && eps2.is_finite()) {
        return Err(Error::invalid("eps2", format!("{eps2} must be positive and finite")));
    }
    Ok(())
}

pub fn node_level_project(degree: usize, theta: usize) -> Result<usize> {
    check_theta(theta)?;
    Ok(degree.min(theta))
}

/// Per-bit randomization probabilities for one user's operation vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlipProbability {
    /// Isolated user; there is no vector to randomize.
    Empty,
    Bits { keep: f64, flip: f64 },
}

impl FlipProbability {
    pub fn flip(&self) -> f64 {
        match self {
            FlipProbability::Empty => 0.0,
            FlipProbability::Bits { flip, .. } => *flip,
        }
    }
}

/// Value of `p` at which the under-threshold flip rule switches branch:
/// `(e^ε − 1) / (e^ε − e^−ε)`.
pub fn flip_branch_threshold(eps2: f64) -> f64 {
    let up = eps2.exp();
    (up - 1.0) / (up - (-eps2).exp())
}

/// Smallest `x` with `e^−ε ≤ x/p ≤ e^ε` and `e^−ε ≤ (1−x)/(1−p) ≤ e^ε`,
/// before clamping into `[0, 1]`.
pub fn indistinguishable_flip(p: f64, eps2: f64) -> f64 {
    if p <= flip_branch_threshold(eps2) {
        p * (-eps2).exp()
    } else {
        (p - 1.0) * eps2.exp() + 1.0
    }
}

pub fn flip_probability(degree: usize, theta: usize, eps2: f64) -> Result<FlipProbability> {
    check_eps2(eps2)?;
    check_theta(theta)?;
    if degree == 0 {
        return Ok(FlipProbability::Empty);
    }
    let d = degree as f64;
    let t = theta as f64;
    let flip = if degree >= theta {
        (d - t) / d
    } else {
        // p is negative here, so the literal rule can go below zero.
        indistinguishable_flip((d - t) / d, eps2).clamp(0.0, 1.0)
    };
    Ok(FlipProbability::Bits { keep: 1.0 - flip, flip })
}

/// Edge-deletion request bits, one per current neighbor of `owner` in
/// ascending neighbor-id order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperationVector {
    pub owner: usize,
    pub bits: Vec<bool>,
}

impl OperationVector {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// `max(0, d − θ)` ones at uniformly random positions.
pub fn build_operation_vector<R: Rng + ?Sized>(
    owner: usize,
    degree: usize,
    theta: usize,
    rng: &mut R,
) -> OperationVector {
    let mut bits = vec![false; degree];
    let excess = degree.saturating_sub(theta);
    if excess > 0 {
        for pos in index::sample(rng, degree, excess) {
            bits[pos] = true;
        }
    }
    OperationVector { owner, bits }
}

pub fn randomize_operation_vector<R: Rng + ?Sized>(
    mut vector: OperationVector,
    degree: usize,
    theta: usize,
    eps2: f64,
    rng: &mut R,
) -> Result<OperationVector> {
    let flip = flip_probability(degree, theta, eps2)?.flip();
    flip_bits(&mut vector.bits, flip, rng);
    Ok(vector)
}

/// Complements each bit independently with probability `flip`.
fn flip_bits<R: Rng + ?Sized>(bits: &mut [bool], flip: f64, rng: &mut R) {
    for bit in bits {
        if rng.gen_bool(flip) {
            *bit = !*bit;
        }
    }
}

/// "Delete our mutual edge", sent by one endpoint to the other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeletionRequest {
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeliveryReport {
    /// Removed edges as `(u, v)` with `u < v`, sorted.
    pub deleted: Vec<(usize, usize)>,
    /// Requests that arrived after the edge was already gone.
    pub duplicates: usize,
    /// Requests naming a pair that was never an edge.
    pub ignored: usize,
}

/// Applies all requests in one pass. Both endpoints' vectors are updated;
/// repeated requests for the same edge are no-ops.
pub fn apply_deletions(graph: &mut Graph, requests: &[DeletionRequest]) -> DeliveryReport {
    let mut pairs = BTreeSet::new();
    let mut report = DeliveryReport::default();
    for req in requests {
        let pair = (req.from.min(req.to), req.from.max(req.to));
        if pairs.contains(&pair) {
            report.duplicates += 1;
        } else if req.from < graph.num_nodes()
            && req.to < graph.num_nodes()
            && graph.remove_edge(pair.0, pair.1)
        {
            pairs.insert(pair);
        } else {
            report.ignored += 1;
        }
    }
    report.deleted = pairs.into_iter().collect();
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EdgeProjectionMode {
    /// Skip bit randomization: each over-threshold user requests exactly
    /// `d − θ` deletions.
    pub deterministic: bool,
}

/// Every user's randomized operation vector, computed against the frozen
/// input graph.
pub fn plan_operation_vectors(
    graph: &Graph,
    theta: usize,
    eps2: f64,
    streams: &Substreams,
    mode: EdgeProjectionMode,
) -> Result<Vec<OperationVector>> {
    check_theta(theta)?;
    if !mode.deterministic {
        check_eps2(eps2)?;
    }
    (0..graph.num_nodes())
        .into_par_iter()
        .map(|user| {
            let d = graph.degree(user);
            if d == 0 {
                return Ok(OperationVector { owner: user, bits: Vec::new() });
            }
            let mut rng = streams.for_user(user);
            let vector = build_operation_vector(user, d, theta, &mut rng);
            if mode.deterministic {
                Ok(vector)
            } else {
                randomize_operation_vector(vector, d, theta, eps2, &mut rng)
            }
        })
        .collect()
}

/// Turns set bits into requests addressed to the corresponding neighbor.
pub fn deletion_requests(graph: &Graph, vectors: &[OperationVector]) -> Vec<DeletionRequest> {
    vectors
        .iter()
        .flat_map(|v| {
            let neighbors = graph.neighbors(v.owner);
            v.bits
                .iter()
                .zip(neighbors)
                .filter(|(bit, _)| **bit)
                .map(move |(_, &to)| DeletionRequest { from: v.owner, to })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionOutcome {
    pub original_degree: Vec<usize>,
    /// `d̂_i`, never above θ.
    pub projected_degree: Vec<usize>,
    /// Unordered pairs `(u, v)`, `u < v`, that existed before projection.
    pub deleted_edges: Vec<(usize, usize)>,
}

impl ProjectionOutcome {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("user,degree,projected_degree\n");
        for (u, (d, p)) in self.original_degree.iter().zip(&self.projected_degree).enumerate() {
            let _ = writeln!(out, "{u},{d},{p}");
        }
        out
    }

    pub fn deletions_csv(&self) -> String {
        let mut out = String::from("u,v\n");
        for (u, v) in &self.deleted_edges {
            let _ = writeln!(out, "{u},{v}");
        }
        out
    }
}

pub fn node_level_outcome(graph: &Graph, theta: usize) -> Result<ProjectionOutcome> {
    check_theta(theta)?;
    let original_degree = graph.degrees();
    let projected_degree = original_degree.iter().map(|&d| d.min(theta)).collect();
    Ok(ProjectionOutcome { original_degree, projected_degree, deleted_edges: Vec::new() })
}

/// Edge-level projection of the whole graph. Returns the projected graph and
/// the outcome; reported degrees are `min(remaining degree, θ)`.
pub fn edge_level_project(
    graph: &Graph,
    theta: usize,
    eps2: f64,
    streams: &Substreams,
    mode: EdgeProjectionMode,
) -> Result<(Graph, ProjectionOutcome)> {
    let vectors = plan_operation_vectors(graph, theta, eps2, streams, mode)?;
    let requests = deletion_requests(graph, &vectors);
    let mut projected = graph.clone();
    let report = apply_deletions(&mut projected, &requests);
    let outcome = ProjectionOutcome {
        original_degree: graph.degrees(),
        projected_degree: projected.degrees().into_iter().map(|d| d.min(theta)).collect(),
        deleted_edges: report.deleted,
    };
    Ok((projected, outcome))
}
