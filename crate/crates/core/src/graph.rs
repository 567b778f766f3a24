//! Undirected simple graphs, edge-list ingestion, degree statistics and
//! histogram error metrics.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric, self-loop-free graph over `n` users with dense ids `0..n`.
///
/// Each user's neighbor list is kept sorted ascending; it is the sparse form
/// of the user's adjacency bit vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    adjacency: Vec<Vec<usize>>,
    /// Dense index -> id in the source file.
    node_ids: Vec<u64>,
}

impl Graph {
    /// Builds a graph on `n` nodes. Edges are symmetrized, duplicates
    /// collapse, self loops are dropped. Endpoints must be `< n`.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut adjacency = vec![Vec::new(); n];
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::invalid("edge", format!("({u}, {v}) outside 0..{n}")));
            }
            if u == v {
                continue;
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self { adjacency, node_ids: (0..n as u64).collect() })
    }

    /// `n` isolated users.
    pub fn empty(n: usize) -> Result<Self> {
        Self::from_edges(n, std::iter::empty())
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Neighbors of `i` in ascending id order.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency.get(i).is_some_and(|l| l.binary_search(&j).is_ok())
    }

    /// The adjacency bit vector `B_i` (length `n`).
    pub fn bit_vector(&self, i: usize) -> Vec<bool> {
        let mut bits = vec![false; self.num_nodes()];
        for &j in &self.adjacency[i] {
            bits[j] = true;
        }
        bits
    }

    pub fn original_id(&self, i: usize) -> u64 {
        self.node_ids[i]
    }

    /// Undirected edges, each once with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, l)| l.iter().copied().filter(move |&v| v > u).map(move |v| (u, v)))
    }

    /// Removes `{i, j}` from both endpoints. Returns whether it existed.
    pub fn remove_edge(&mut self, i: usize, j: usize) -> bool {
        let Ok(pos) = self.adjacency[i].binary_search(&j) else {
            return false;
        };
        self.adjacency[i].remove(pos);
        if let Ok(pos) = self.adjacency[j].binary_search(&i) {
            self.adjacency[j].remove(pos);
        }
        true
    }

    /// `b_ij = b_ji` for all pairs and no self loops.
    pub fn is_symmetric(&self) -> bool {
        self.adjacency.iter().enumerate().all(|(i, l)| {
            l.iter().all(|&j| j != i && self.has_edge(j, i))
        })
    }
}

/// Parses SNAP-style edge-list text: two integer ids per line, `#` comments.
/// Ids are re-indexed densely in order of first appearance.
pub fn parse_edge_list(text: &str) -> Result<Graph> {
    let mut index: HashMap<u64, usize> = HashMap::new();
    let mut node_ids = Vec::new();
    let mut edges = Vec::new();
    let mut intern = |id: u64| {
        *index.entry(id).or_insert_with(|| {
            node_ids.push(id);
            node_ids.len() - 1
        })
    };

    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let mut next_id = || -> Result<u64> {
            let tok = tokens.next().ok_or_else(|| Error::Parse {
                line: lineno + 1,
                reason: "expected two node ids".into(),
            })?;
            tok.parse::<u64>().map_err(|e| Error::Parse {
                line: lineno + 1,
                reason: format!("bad node id `{tok}`: {e}"),
            })
        };
        let u = next_id()?;
        let v = next_id()?;
        edges.push((intern(u), intern(v)));
    }

    let n = node_ids.len();
    let mut graph = Graph::from_edges(n, edges)?;
    graph.node_ids = node_ids;
    Ok(graph)
}

pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(&text)
}

/// Canonical undirected edge list using the original ids, smaller id first.
pub fn write_edge_list(graph: &Graph) -> String {
    let mut lines: Vec<(u64, u64)> = graph
        .edges()
        .map(|(u, v)| {
            let (a, b) = (graph.original_id(u), graph.original_id(v));
            (a.min(b), a.max(b))
        })
        .collect();
    lines.sort_unstable();
    let mut out = String::new();
    for (a, b) in lines {
        let _ = writeln!(out, "{a} {b}");
    }
    out
}

/// Count per degree value over `0..len`.
///
/// Bins are real-valued so noisy and true histograms share one type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeHistogram {
    pub bins: Vec<f64>,
}

impl DegreeHistogram {
    /// Histogram over `0..len` of integer degrees. Degrees `>= len` are an
    /// invalid input for a graph on `len` nodes.
    pub fn from_degrees(degrees: &[usize], len: usize) -> Result<Self> {
        let mut bins = vec![0.0; len];
        for &d in degrees {
            let slot = bins.get_mut(d).ok_or_else(|| {
                Error::invalid("degree", format!("{d} outside histogram range 0..{len}"))
            })?;
            *slot += 1.0;
        }
        Ok(Self { bins })
    }

    /// Server-side binning of real-valued reports: each value is rounded to
    /// the nearest integer and clamped into `0..len`.
    pub fn from_reports(reports: &[f64], len: usize) -> Self {
        let mut bins = vec![0.0; len];
        if len == 0 {
            return Self { bins };
        }
        let top = (len - 1) as f64;
        for &r in reports {
            let slot = r.round().clamp(0.0, top) as usize;
            bins[slot] += 1.0;
        }
        Self { bins }
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.bins.iter().sum()
    }

    pub fn distribution(&self) -> DegreeDistribution {
        let total = self.total();
        let freq = if total == 0.0 {
            vec![0.0; self.bins.len()]
        } else {
            self.bins.iter().map(|b| b / total).collect()
        };
        DegreeDistribution { freq }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("degree,count\n");
        for (d, c) in self.bins.iter().enumerate() {
            let _ = writeln!(out, "{d},{c}");
        }
        out
    }
}

pub fn degree_histogram(graph: &Graph) -> DegreeHistogram {
    DegreeHistogram::from_degrees(&graph.degrees(), graph.num_nodes())
        .expect("simple graph degrees are below n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeDistribution {
    pub freq: Vec<f64>,
}

impl DegreeDistribution {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("degree,freq\n");
        for (d, f) in self.freq.iter().enumerate() {
            let _ = writeln!(out, "{d},{f}");
        }
        out
    }
}

fn check_lengths(h1: &DegreeHistogram, h2: &DegreeHistogram) -> Result<()> {
    if h1.len() != h2.len() || h1.is_empty() {
        return Err(Error::LengthMismatch { left: h1.len(), right: h2.len() });
    }
    Ok(())
}

/// `(1/n) Σ (h1_i − h2_i)²` over the `n` bins.
pub fn mse(h1: &DegreeHistogram, h2: &DegreeHistogram) -> Result<f64> {
    check_lengths(h1, h2)?;
    let sum: f64 = h1.bins.iter().zip(&h2.bins).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / h1.len() as f64)
}

/// `(1/n) Σ |h1_i − h2_i|` over the `n` bins.
pub fn mae(h1: &DegreeHistogram, h2: &DegreeHistogram) -> Result<f64> {
    check_lengths(h1, h2)?;
    let sum: f64 = h1.bins.iter().zip(&h2.bins).map(|(a, b)| (a - b).abs()).sum();
    Ok(sum / h1.len() as f64)
}
