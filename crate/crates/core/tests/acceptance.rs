//! Acceptance criteria. Each prints one PASS/FAIL line; the process exits
//! non-zero if any criterion fails.

use std::time::Instant;

use nldp::agents::{Payload, Role, Trace};
use nldp::crypto::{
    derive_mask, mask_ciphertext, ope_encrypt, secure_aggregate, OpeParams, PairwiseSeeds,
};
use nldp::graph::{degree_histogram, mse, DegreeHistogram, Graph};
use nldp::harness::{cmd_bench, BenchSpec, DEFAULT_ALPHA};
use nldp::mechanism::{account_privacy, laplace_sample, split_budget, BudgetSplit};
use nldp::projection::{
    edge_level_project, indistinguishable_flip, node_level_outcome, EdgeProjectionMode, ProjectionMethod,
};
use nldp::protocol::{run_pipeline_on, Dataset, MethodPair, RunConfig, SelectionMethod};
use nldp::rng::{Purpose, SeedTree, Substreams};
use nldp::selection::{crypto_select, pureldp_select, CryptoSetup, SelectionOptions};
use nldp::synthetic::PowerLawSpec;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

struct Verdict {
    pass: bool,
    detail: String,
}

fn spider() -> Graph {
    Graph::from_edges(5, [(0, 1), (0, 2), (0, 3), (3, 4)]).unwrap()
}

/// Exhaustive `argmin_k Σ max(0, d − k) + 8nk²/ε3²`, first minimum wins.
fn plaintext_argmin(graph: &Graph, candidates: u32, eps3: f64) -> u32 {
    let n = graph.num_nodes() as f64;
    let degrees = graph.degrees();
    let mut best = (0, f64::INFINITY);
    for k in 1..=candidates {
        let e_p: usize = degrees.iter().map(|&d| d.saturating_sub(k as usize)).sum();
        let kf = k as f64;
        let f = e_p as f64 + 8.0 * n * kf * kf / (eps3 * eps3);
        if f < best.1 {
            best = (k, f);
        }
    }
    best.0
}

fn spider_oracle() -> Verdict {
    let start = Instant::now();
    let graph = spider();
    let truth = degree_histogram(&graph);
    let node = node_level_outcome(&graph, 1).unwrap();
    let node_hist = DegreeHistogram::from_degrees(&node.projected_degree, 5).unwrap();
    let node_mse = mse(&truth, &node_hist).unwrap();
    let node_ok = node_hist.bins == vec![0.0, 5.0, 0.0, 0.0, 0.0] && node_mse == 1.2;

    let mode = EdgeProjectionMode { deterministic: true };
    let edge: Vec<f64> = (0..100)
        .map(|seed| {
            let streams = Substreams::new(SeedTree::new(seed), Purpose::Projection, 0);
            let (_, out) = edge_level_project(&graph, 1, 1.0, &streams, mode).unwrap();
            mse(&truth, &DegreeHistogram::from_degrees(&out.projected_degree, 5).unwrap()).unwrap()
        })
        .collect();
    let max = edge.iter().cloned().fold(f64::MIN, f64::max);
    let hits = edge.iter().filter(|&&m| (m - 0.8).abs() < 1e-12).count();
    let mean = edge.iter().sum::<f64>() / edge.len() as f64;
    let elapsed = start.elapsed().as_secs_f64();
    let every_seed_ok = max <= 1.2 + 1e-12;
    Verdict {
        pass: node_ok && every_seed_ok && hits > 0 && elapsed < 1.0,
        detail: format!(
            "node hist={:?} mse={node_mse}; edge over 100 seeds: max={max:.3} (need <= 1.2), \
             0.8 hit {hits} times, mean={mean:.4}; {elapsed:.3}s",
            node_hist.bins
        ),
    }
}

fn selection_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(2024);
    let opts = SelectionOptions { noise: false, ..Default::default() };
    let (mut pure_ok, mut crypto_ok) = (0, 0);
    let mut distinct = std::collections::BTreeSet::new();
    for trial in 0..50u64 {
        let big_k = rng.gen_range(1..=20u32);
        let n = rng.gen_range((big_k as usize + 2).max(8)..=200);
        let p = rng.gen_range(0.02..0.4);
        let edges: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| ((u + 1)..n).map(move |v| (u, v)))
            .filter(|_| rng.gen_bool(p))
            .collect();
        let graph = Graph::from_edges(n, edges).unwrap();
        let eps = rng.gen_range(0.5..20.0);
        let split = split_budget(eps, rng.gen_range(0.1..0.95), big_k).unwrap();
        let expect = plaintext_argmin(&graph, big_k, split.eps3);
        distinct.insert(expect);
        let tree = SeedTree::new(trial);
        let pure = pureldp_select(&graph, &split, &tree, &opts).unwrap();
        let setup = CryptoSetup::establish(n, &split, &tree, &mut Trace::disabled()).unwrap();
        let crypto = crypto_select(&graph, &split, &setup, &tree, &opts).unwrap();
        pure_ok += usize::from(pure.theta == expect);
        crypto_ok += usize::from(crypto.theta == expect);
    }
    let elapsed = start.elapsed().as_secs_f64();
    Verdict {
        pass: pure_ok == 50 && crypto_ok == 50 && elapsed < 30.0,
        detail: format!(
            "pureldp {pure_ok}/50, crypto {crypto_ok}/50 match plaintext argmin \
             ({} distinct optima); {elapsed:.1}s",
            distinct.len()
        ),
    }
}

fn crypto_exactness() -> Verdict {
    let mut rng = StdRng::seed_from_u64(7);
    let (mut cancel_ok, mut agg_ok) = (0, 0);
    for _ in 0..1000 {
        let users = rng.gen_range(2..=40);
        let round = rng.gen_range(1..=50);
        let seeds = PairwiseSeeds::deal(users, &mut rng);
        let max_plain = rng.gen_range(1..=1u64 << 30);
        let key = OpeParams::generate(users, max_plain, &mut rng).unwrap();
        let masks: Vec<u64> = (0..users).map(|u| derive_mask(u, &seeds, round).unwrap()).collect();
        cancel_ok += usize::from(masks.iter().fold(0u64, |a, m| a.wrapping_add(*m)) == 0);
        let cts: Vec<u64> =
            (0..users).map(|_| ope_encrypt(rng.gen_range(0..=max_plain), &key, &mut rng).unwrap()).collect();
        let oracle = cts.iter().fold(0u64, |a, c| a.wrapping_add(*c));
        let masked: Vec<_> = (0..users).map(|u| mask_ciphertext(u, round, cts[u], masks[u])).collect();
        agg_ok += usize::from(secure_aggregate(&masked, users, round).unwrap() == oracle);
    }

    let mut order_ok = 0;
    for _ in 0..100_000 {
        let users = rng.gen_range(1..=1000);
        let max_plain = rng.gen_range(2..=1u64 << 40);
        let key = OpeParams::generate(users, max_plain, &mut rng).unwrap();
        let x = rng.gen_range(0..max_plain);
        let y = rng.gen_range(x + 1..=max_plain);
        let (cx, cy) = (ope_encrypt(x, &key, &mut rng).unwrap(), ope_encrypt(y, &key, &mut rng).unwrap());
        order_ok += usize::from(cx < cy);
    }
    Verdict {
        pass: cancel_ok == 1000 && agg_ok == 1000 && order_ok == 100_000,
        detail: format!(
            "mask cancellation {cancel_ok}/1000, aggregate = oracle {agg_ok}/1000, \
             OPE order {order_ok}/100000"
        ),
    }
}

fn mechanism_calibration() -> Verdict {
    let mut worst = 0.0f64;
    for (i, scale) in [0.5, 1.0, 2.0, 8.0].into_iter().enumerate() {
        let mut rng = StdRng::seed_from_u64(100 + i as u64);
        let draws: Vec<f64> = (0..1_000_000).map(|_| laplace_sample(scale, &mut rng).unwrap()).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / draws.len() as f64;
        worst = worst.max((var / (2.0 * scale * scale) - 1.0).abs());
    }

    let (mut checked, mut ok) = (0, 0);
    for i in 0..40 {
        let p = (i as f64 + 0.5) / 40.0;
        for j in 0..25 {
            let eps2 = 0.05 + 0.2 * j as f64;
            let x = indistinguishable_flip(p, eps2);
            if !(0.0..=1.0).contains(&x) {
                continue;
            }
            checked += 1;
            let (lo, hi) = ((-eps2).exp() * (1.0 - 1e-12), eps2.exp() * (1.0 + 1e-12));
            let r1 = x / p;
            let r2 = (1.0 - x) / (1.0 - p);
            ok += usize::from((lo..=hi).contains(&r1) && (lo..=hi).contains(&r2));
        }
    }
    Verdict {
        pass: worst < 0.03 && checked > 0 && ok == checked,
        detail: format!(
            "worst Laplace variance error {:.3}% (limit 3%); ratio bounds hold at {ok}/{checked} \
             grid points with x in [0,1] (of 1000)",
            worst * 100.0
        ),
    }
}

fn trend_reproduction() -> Verdict {
    let start = Instant::now();
    let spec = PowerLawSpec::new(1000, 1);
    let graph = spec.generate().unwrap();
    let pure = MethodPair { selection: SelectionMethod::PureLdp, projection: ProjectionMethod::Node };
    let crypto = MethodPair { selection: SelectionMethod::Crypto, projection: ProjectionMethod::Edge };
    let mean_mse = |method: MethodPair, eps: f64| -> (f64, Vec<u32>) {
        let split = split_budget(eps, DEFAULT_ALPHA, 50).unwrap();
        let mut thetas = Vec::new();
        let total: f64 = (0..20)
            .map(|seed| {
                let cfg = RunConfig::new(Dataset::Synthetic(spec), method, split, seed);
                let out = run_pipeline_on(&graph, &cfg).unwrap();
                thetas.push(out.manifest.theta);
                out.metrics.mse
            })
            .sum();
        thetas.sort_unstable();
        thetas.dedup();
        (total / 20.0, thetas)
    };
    let mut p = Vec::new();
    let mut c = Vec::new();
    let mut crypto_thetas = Vec::new();
    for eps in [1.0, 2.0, 3.0] {
        p.push(mean_mse(pure, eps).0);
        let (m, t) = mean_mse(crypto, eps);
        c.push(m);
        crypto_thetas.push(t);
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ordered = (0..3).all(|i| c[i] < p[i]);
    let decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    Verdict {
        pass: ordered && decreasing(&p) && decreasing(&c) && elapsed < 300.0,
        detail: format!(
            "mean MSE eps=1,2,3: pureldp+node {:.1}/{:.1}/{:.1}, crypto+edge {:.1}/{:.1}/{:.1}; \
             crypto<pure in every cell: {ordered}; pure decreasing: {}; crypto decreasing: {}; \
             crypto thetas {:?}; {elapsed:.0}s",
            p[0], p[1], p[2], c[0], c[1], c[2], decreasing(&p), decreasing(&c), crypto_thetas
        ),
    }
}

fn complexity_fit() -> Verdict {
    let mut spec = BenchSpec::new(vec![1000, 2000, 4000]);
    spec.repetitions = 5;
    let report = cmd_bench(&spec).unwrap();
    let setup: Vec<f64> = spec.sizes.iter().map(|&n| report.ms("crypto_setup", n).unwrap()).collect();
    let node: Vec<f64> = spec.sizes.iter().map(|&n| report.ms("node_projection", n).unwrap()).collect();
    let ratios: Vec<f64> = setup.windows(2).map(|w| w[1] / w[0]).collect();
    let per_node: Vec<f64> = node.iter().zip(&spec.sizes).map(|(t, &n)| t / n as f64).collect();
    let band = per_node.iter().cloned().fold(f64::MIN, f64::max) / per_node.iter().cloned().fold(f64::MAX, f64::min);
    Verdict {
        pass: ratios.iter().all(|&r| r >= 2.5) && band <= 1.5,
        detail: format!(
            "setup ms {setup:.2?} ratios {ratios:.2?} (need >= 2.5); node projection ms {node:.4?}, \
             per-node spread {band:.2}x (need <= 1.5)"
        ),
    }
}

fn accounting() -> Verdict {
    let a = account_privacy(&BudgetSplit::custom(0.5, 0.3, 1.0, 50).unwrap());
    Verdict {
        pass: a.claimed_total == 1.31 && a.composed_total == 1.8,
        detail: format!("claimed {} (want 1.31), composed {} (want 1.8)", a.claimed_total, a.composed_total),
    }
}

fn information_flow() -> Verdict {
    let mut runs = 0;
    let mut violations = Vec::new();
    let graphs = [
        ("spider", spider()),
        ("powerlaw-200", PowerLawSpec::new(200, 3).generate().unwrap()),
    ];
    for (name, graph) in &graphs {
        let n = graph.num_nodes();
        let k = (n as u32 - 2).min(10);
        for method in nldp::harness::method_pairs() {
            for seed in 0..3 {
                let split = split_budget(2.0, 0.9, k).unwrap();
                let cfg = RunConfig::new(Dataset::Synthetic(PowerLawSpec::new(n, 0)), method, split, seed);
                let out = run_pipeline_on(graph, &cfg).unwrap();
                runs += 1;
                let to_server: Vec<_> = out.trace.received_by(Role::Server).collect();
                let sensitive = to_server.iter().filter(|e| e.payload.is_sensitive()).count();
                let allowed = to_server
                    .iter()
                    .all(|e| matches!(e.payload, Payload::NoisyLoss | Payload::MaskedLoss | Payload::NoisyDegree));
                let degrees_reported = to_server.iter().filter(|e| e.payload == Payload::NoisyDegree).count();
                let raw_degree_seen = out.server.noisy_degrees().iter().any(|v| v.fract() == 0.0);
                let secrets_went_elsewhere = method.selection == SelectionMethod::PureLdp
                    || out.trace.events().iter().any(|e| e.payload == Payload::OpeKey && e.recipient == Role::User);
                if sensitive > 0 || !allowed || degrees_reported != n || raw_degree_seen || !secrets_went_elsewhere {
                    violations.push(format!("{name}/{method}/seed{seed}"));
                }
            }
        }
    }
    Verdict {
        pass: violations.is_empty(),
        detail: format!("{runs} traced runs, violations: {violations:?}"),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("1 spider oracle", spider_oracle),
        ("2 selection oracle equivalence", selection_oracle),
        ("3 crypto exactness", crypto_exactness),
        ("4 mechanism calibration", mechanism_calibration),
        ("5 trend reproduction", trend_reproduction),
        ("6 complexity fit", complexity_fit),
        ("7 accounting", accounting),
        ("8 information flow", information_flow),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let v = check();
        failed += usize::from(!v.pass);
        println!("{} criterion {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("acceptance: {}/8 passed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
