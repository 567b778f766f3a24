//! Choosing the projection parameter θ from candidates `1..=K`.
//!
//! Each candidate `k` is scored by `F(k) = E_P + E_D`: the edges lost by
//! projecting to `k` plus the expected squared error of publishing with
//! Laplace scale `2k/ε3`. Two protocols collect the per-user loss terms:
//! Laplace-noised reports, or OPE-encoded reports hidden under pairwise
//! masks that cancel in the server's sum.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{Payload, Role, Server, ToServer, Trace};
use crate::crypto::{
    derive_mask, mask_ciphertext, ope_encrypt, to_fixed_point, OpeParams, PairwiseSeeds,
};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::mechanism::{laplace_sample, BudgetSplit};
use crate::projection::{EdgeProjectionMode, ProjectionMethod};
use crate::protocol::local_projection;
use crate::rng::{Purpose, SeedTree, Substreams};

/// `E_D = n · 2 · (2k/ε3)² = 8nk²/ε3²`.
pub fn publishing_loss(n: usize, k: usize, eps3: f64) -> Result<f64> {
    if !(eps3 > 0.0) {
        return Err(Error::invalid("eps3", format!("{eps3} must be positive")));
    }
    if n == 0 || k == 0 {
        return Err(Error::invalid("n/k", "must be at least 1"));
    }
    let (n, k) = (n as f64, k as f64);
    Ok(8.0 * n * k * k / (eps3 * eps3))
}

/// `E_P = Σ max(0, d_i − k)`.
pub fn projection_loss(degrees: &[usize], k: usize) -> u64 {
    degrees.iter().map(|&d| d.saturating_sub(k) as u64).sum()
}

/// A user's projection loss for one candidate before any protection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossReport {
    pub k: u32,
    /// `|d_i − d̂_i|` in edges.
    pub loss: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub k: u32,
    pub e_p: f64,
    pub e_d: f64,
    pub f: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionOptions {
    /// Projection each user runs per candidate to measure its loss.
    pub projection: ProjectionMethod,
    /// Laplace noise on reported losses (pure-LDP protocol only).
    pub noise: bool,
    /// Disable operation-vector randomization during edge-level projection.
    pub deterministic: bool,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        Self { projection: ProjectionMethod::Node, noise: true, deterministic: false }
    }
}

/// Every user's loss report for candidate `k`.
pub fn loss_reports(
    graph: &Graph,
    k: u32,
    eps2: f64,
    tree: &SeedTree,
    opts: &SelectionOptions,
    trace: &mut Trace,
) -> Result<Vec<LossReport>> {
    let streams = Substreams::new(*tree, Purpose::SelectionProjection, k as u64);
    let mode = EdgeProjectionMode { deterministic: opts.deterministic };
    let outcome =
        local_projection(graph, k as usize, opts.projection, eps2, &streams, mode, Some(k), trace)?;
    Ok(outcome
        .original_degree
        .iter()
        .zip(&outcome.projected_degree)
        .map(|(&d, &p)| LossReport { k, loss: d.abs_diff(p) as u64 })
        .collect())
}

fn argmin_first<T: PartialOrd + Copy>(scores: impl IntoIterator<Item = (u32, T)>) -> u32 {
    let mut best: Option<(u32, T)> = None;
    for (k, s) in scores {
        if best.is_none_or(|(_, b)| s < b) {
            best = Some((k, s));
        }
    }
    best.map(|(k, _)| k).expect("at least one candidate")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PureLdpSelection {
    pub theta: u32,
    /// The server's view: `e_p` is the sum of noisy reports.
    pub per_k: Vec<LossBreakdown>,
}

impl PureLdpSelection {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,E_P,E_D,F,selected\n");
        for b in &self.per_k {
            let sel = u8::from(b.k == self.theta);
            let _ = writeln!(out, "{},{},{},{},{}", b.k, b.e_p, b.e_d, b.f, sel);
        }
        out
    }
}

/// Laplace scale `(n − 1 − k) / (ε1 / K)` for a candidate's loss report.
pub fn selection_noise_scale(n: usize, k: u32, split: &BudgetSplit) -> f64 {
    (n as f64 - 1.0 - k as f64) * split.candidates as f64 / split.eps1
}

pub fn pureldp_select(
    graph: &Graph,
    split: &BudgetSplit,
    tree: &SeedTree,
    opts: &SelectionOptions,
) -> Result<PureLdpSelection> {
    pureldp_select_with(graph, split, tree, opts, &mut Server::new(), &mut Trace::disabled())
}

pub fn pureldp_select_with(
    graph: &Graph,
    split: &BudgetSplit,
    tree: &SeedTree,
    opts: &SelectionOptions,
    server: &mut Server,
    trace: &mut Trace,
) -> Result<PureLdpSelection> {
    let n = graph.num_nodes();
    let big_k = split.candidates;
    if big_k as usize + 2 > n {
        return Err(Error::invalid("K", format!("{big_k} candidates need at least {} users", big_k + 2)));
    }
    let mut per_k = Vec::with_capacity(big_k as usize);
    for k in 1..=big_k {
        let reports = loss_reports(graph, k, split.eps2, tree, opts, trace)?;
        let scale = selection_noise_scale(n, k, split);
        let noisy: Vec<f64> = reports
            .par_iter()
            .enumerate()
            .map(|(user, r)| {
                let noise = if opts.noise {
                    let mut rng = tree.stream(Purpose::SelectionNoise, k as u64, user as u64);
                    laplace_sample(scale, &mut rng)?
                } else {
                    0.0
                };
                Ok(r.loss as f64 + noise)
            })
            .collect::<Result<_>>()?;
        for value in noisy {
            server.receive(ToServer::NoisyLoss { round: k, value }, trace);
        }
        let e_p = server.sum_noisy_losses(k);
        let e_d = publishing_loss(n, k as usize, split.eps3)?;
        per_k.push(LossBreakdown { k, e_p, e_d, f: e_p + e_d });
    }
    let theta = argmin_first(per_k.iter().map(|b| (b.k, b.f)));
    server.broadcast_theta(n, trace);
    Ok(PureLdpSelection { theta, per_k })
}

/// Key material and pairwise seeds for the crypto-assisted protocol.
#[derive(Debug, Clone)]
pub struct CryptoSetup {
    pub key: OpeParams,
    pub seeds: PairwiseSeeds,
}

/// Largest per-user plaintext: `(n − 1) + E_D(K)/n`, fixed-point encoded.
pub fn max_share_plaintext(n: usize, split: &BudgetSplit) -> Result<u64> {
    let share = publishing_loss(n, split.candidates as usize, split.eps3)? / n as f64;
    to_fixed_point((n - 1) as f64 + share)
}

impl CryptoSetup {
    /// Trusted dealer hands out pairwise seeds; the key holder draws `(a, b)`
    /// sized for this run. Neither reaches the server.
    pub fn establish(users: usize, split: &BudgetSplit, tree: &SeedTree, trace: &mut Trace) -> Result<Self> {
        let seeds = PairwiseSeeds::deal(users, &mut tree.stream(Purpose::SeedDealing, 0, 0));
        for _ in 0..users {
            trace.record("seed_bundle", None, Role::Dealer, Role::User, Payload::PairSeeds, 16 * (users - 1));
        }
        let max = max_share_plaintext(users, split)?;
        let key = OpeParams::generate(users, max, &mut tree.stream(Purpose::OpeKey, 0, 0))?;
        for _ in 0..users {
            trace.record("ope_key", None, Role::KeyHolder, Role::User, Payload::OpeKey, 24);
        }
        Ok(Self { key, seeds })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CryptoSelection {
    pub theta: u32,
    /// `(k, aggregate)` as seen by the server; encrypted under the OPE key.
    pub aggregates: Vec<(u32, u64)>,
}

impl CryptoSelection {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,aggregate,selected\n");
        for (k, agg) in &self.aggregates {
            let _ = writeln!(out, "{k},{agg},{}", u8::from(*k == self.theta));
        }
        out
    }
}

pub fn crypto_select(
    graph: &Graph,
    split: &BudgetSplit,
    setup: &CryptoSetup,
    tree: &SeedTree,
    opts: &SelectionOptions,
) -> Result<CryptoSelection> {
    crypto_select_with(graph, split, setup, tree, opts, &mut Server::new(), &mut Trace::disabled())
}

/// Each user submits `Enc(|d_i − d̂_i| + E_D(k)/n) + mask_i`; the masks
/// cancel so the server's per-round sum orders like `F(k)`.
pub fn crypto_select_with(
    graph: &Graph,
    split: &BudgetSplit,
    setup: &CryptoSetup,
    tree: &SeedTree,
    opts: &SelectionOptions,
    server: &mut Server,
    trace: &mut Trace,
) -> Result<CryptoSelection> {
    let n = graph.num_nodes();
    if setup.seeds.users() != n {
        return Err(Error::invalid(
            "seeds",
            format!("dealt for {} users, graph has {n}", setup.seeds.users()),
        ));
    }
    setup.key.check_capacity(n, max_share_plaintext(n, split)?)?;

    let mut aggregates = Vec::with_capacity(split.candidates as usize);
    for k in 1..=split.candidates {
        let reports = loss_reports(graph, k, split.eps2, tree, opts, trace)?;
        let share = publishing_loss(n, k as usize, split.eps3)? / n as f64;
        let cts: Vec<_> = reports
            .par_iter()
            .enumerate()
            .map(|(user, r)| {
                let mut rng = tree.stream(Purpose::OpeNoise, k as u64, user as u64);
                let x = to_fixed_point(r.loss as f64 + share)?;
                let ct = ope_encrypt(x, &setup.key, &mut rng)?;
                let mask = derive_mask(user, &setup.seeds, k)?;
                Ok(mask_ciphertext(user, k, ct, mask))
            })
            .collect::<Result<_>>()?;
        for ct in cts {
            server.receive(ToServer::MaskedLoss(ct), trace);
        }
        aggregates.push((k, server.aggregate_masked(n, k)?));
    }
    let theta = argmin_first(aggregates.iter().copied());
    server.broadcast_theta(n, trace);
    Ok(CryptoSelection { theta, aggregates })
}
