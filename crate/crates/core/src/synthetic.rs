//! Power-law test graphs from the erased configuration model.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::{Purpose, SeedTree};

/// Degree sequence `P(d) ∝ d^−exponent` on `[min_degree, max_degree]`,
/// wired by uniform stub matching. Self loops and multi-edges are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawSpec {
    pub nodes: usize,
    pub exponent: f64,
    pub min_degree: usize,
    /// Defaults to the natural cutoff `n^(1/(exponent−1))`.
    pub max_degree: Option<usize>,
    pub seed: u64,
}

impl PowerLawSpec {
    pub fn new(nodes: usize, seed: u64) -> Self {
        Self { nodes, exponent: 2.5, min_degree: 2, max_degree: None, seed }
    }

    pub fn label(&self) -> String {
        format!("powerlaw-n{}-g{}-s{}", self.nodes, self.exponent, self.seed)
    }

    fn cutoff(&self) -> usize {
        let natural = (self.nodes as f64).powf(1.0 / (self.exponent - 1.0)).floor() as usize;
        self.max_degree.unwrap_or(natural).min(self.nodes.saturating_sub(1)).max(self.min_degree)
    }

    pub fn degree_sequence(&self) -> Result<Vec<usize>> {
        if self.nodes < 2 {
            return Err(Error::invalid("nodes", "need at least two nodes"));
        }
        if !(self.exponent > 1.0) || self.min_degree == 0 {
            return Err(Error::invalid("exponent", "need exponent > 1 and min degree >= 1"));
        }
        let lo = self.min_degree.min(self.nodes - 1);
        let hi = self.cutoff();
        let support: Vec<usize> = (lo..=hi).collect();
        let weights = support.iter().map(|&d| (d as f64).powf(-self.exponent));
        let dist = WeightedIndex::new(weights).map_err(|e| Error::invalid("exponent", e.to_string()))?;
        let mut rng = SeedTree::new(self.seed).stream(Purpose::Synthetic, 0, 0);
        let mut degrees: Vec<usize> = (0..self.nodes).map(|_| support[dist.sample(&mut rng)]).collect();
        if degrees.iter().sum::<usize>() % 2 == 1 {
            degrees[0] += 1;
        }
        Ok(degrees)
    }

    pub fn generate(&self) -> Result<Graph> {
        let degrees = self.degree_sequence()?;
        let mut stubs: Vec<usize> =
            degrees.iter().enumerate().flat_map(|(i, &d)| std::iter::repeat_n(i, d)).collect();
        let mut rng = SeedTree::new(self.seed).stream(Purpose::Synthetic, 1, 0);
        stubs.shuffle(&mut rng);
        Graph::from_edges(self.nodes, stubs.chunks_exact(2).map(|p| (p[0], p[1])))
    }
}
