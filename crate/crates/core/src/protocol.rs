//! End-to-end publishing run: select θ, project locally, perturb, aggregate.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{Payload, Role, Server, ToServer, Trace};
use crate::error::{Error, Result};
use crate::graph::{degree_histogram, load_edge_list, mae, mse, DegreeDistribution, DegreeHistogram, Graph};
use crate::mechanism::{account_privacy, laplace_sample, BudgetSplit, PrivacyAccount};
use crate::projection::{
    apply_deletions, deletion_requests, node_level_outcome, plan_operation_vectors, DeletionRequest,
    DeliveryReport, EdgeProjectionMode, ProjectionMethod, ProjectionOutcome,
};
use crate::rng::{Purpose, SeedTree, Substreams};
use crate::selection::{
    crypto_select_with, pureldp_select_with, CryptoSelection, CryptoSetup, PureLdpSelection,
    SelectionOptions,
};
use crate::synthetic::PowerLawSpec;

/// Delivers "delete our mutual edge" messages between neighbors.
///
/// The trace gets one record per message with no sender or recipient id.
pub fn anonymous_deliver(
    graph: &mut Graph,
    msgs: &[DeletionRequest],
    round: Option<u32>,
    trace: &mut Trace,
) -> DeliveryReport {
    for _ in msgs {
        trace.record("edge_delete", round, Role::User, Role::User, Payload::DeletionBit, 1);
    }
    let report = apply_deletions(graph, msgs);
    for _ in 0..report.ignored {
        trace.record("edge_delete_ignored", round, Role::User, Role::User, Payload::DeletionBit, 0);
    }
    report
}

/// Runs the chosen projection for every user against a frozen copy of
/// `graph`.
#[allow(clippy::too_many_arguments)]
pub fn local_projection(
    graph: &Graph,
    theta: usize,
    method: ProjectionMethod,
    eps2: f64,
    streams: &Substreams,
    mode: EdgeProjectionMode,
    round: Option<u32>,
    trace: &mut Trace,
) -> Result<ProjectionOutcome> {
    match method {
        ProjectionMethod::Node => node_level_outcome(graph, theta),
        ProjectionMethod::Edge => {
            let vectors = plan_operation_vectors(graph, theta, eps2, streams, mode)?;
            let requests = deletion_requests(graph, &vectors);
            let mut projected = graph.clone();
            let report = anonymous_deliver(&mut projected, &requests, round, trace);
            Ok(ProjectionOutcome {
                original_degree: graph.degrees(),
                projected_degree: projected.degrees().into_iter().map(|d| d.min(theta)).collect(),
                deleted_edges: report.deleted,
            })
        }
    }
}

/// User-side state: its own neighbor list and budget.
#[derive(Debug, Clone)]
pub struct UserAgent<'g> {
    pub id: usize,
    neighbors: &'g [usize],
    budget: BudgetSplit,
}

impl<'g> UserAgent<'g> {
    pub fn new(id: usize, graph: &'g Graph, budget: BudgetSplit) -> Self {
        Self { id, neighbors: graph.neighbors(id), budget }
    }

    /// `Σ_j b_ij` over the user's own bit vector.
    pub fn degree(&self) -> usize {
        self.neighbors.len()
    }

    /// `d̂ + Lap(2θ/ε3)`, or `d̂` when publishing noise is off.
    pub fn noisy_degree(&self, projected: usize, theta: u32, noise: bool, tree: &SeedTree) -> Result<ToServer> {
        let mut value = projected as f64;
        if noise {
            let scale = 2.0 * theta as f64 / self.budget.eps3;
            value += laplace_sample(scale, &mut tree.stream(Purpose::Publishing, 0, self.id as u64))?;
        }
        Ok(ToServer::NoisyDegree(value))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMethod {
    PureLdp,
    Crypto,
}

impl std::fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SelectionMethod::PureLdp => "pureldp",
            SelectionMethod::Crypto => "crypto",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MethodPair {
    pub selection: SelectionMethod,
    pub projection: ProjectionMethod,
}

impl std::fmt::Display for MethodPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.selection, self.projection)
    }
}

impl std::str::FromStr for MethodPair {
    type Err = Error;

    /// `pureldp|crypto` `x` `node|edge`, e.g. `cryptoxedge`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let (sel, proj) = lower
            .rsplit_once('x')
            .ok_or_else(|| Error::invalid("method", format!("`{s}` is not <selection>x<projection>")))?;
        let selection = match sel.trim_end_matches(['-', '_', '+']) {
            "pureldp" => SelectionMethod::PureLdp,
            "crypto" => SelectionMethod::Crypto,
            other => return Err(Error::invalid("method", format!("unknown selection `{other}`"))),
        };
        let projection = match proj.trim_start_matches(['-', '_', '+']) {
            "node" => ProjectionMethod::Node,
            "edge" => ProjectionMethod::Edge,
            other => return Err(Error::invalid("method", format!("unknown projection `{other}`"))),
        };
        Ok(Self { selection, projection })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dataset {
    EdgeList(PathBuf),
    Synthetic(PowerLawSpec),
}

impl Dataset {
    pub fn load(&self) -> Result<Graph> {
        match self {
            Dataset::EdgeList(path) => load_edge_list(path),
            Dataset::Synthetic(spec) => spec.generate(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Dataset::EdgeList(path) => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
            Dataset::Synthetic(spec) => spec.label(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: Dataset,
    pub method: MethodPair,
    pub split: BudgetSplit,
    pub seed: u64,
    /// Disable operation-vector randomization in edge-level projection.
    pub deterministic: bool,
    /// Skip selection and use this θ.
    pub theta_override: Option<u32>,
    pub selection_noise: bool,
    pub publishing_noise: bool,
}

impl RunConfig {
    pub fn new(dataset: Dataset, method: MethodPair, split: BudgetSplit, seed: u64) -> Self {
        Self {
            dataset,
            method,
            split,
            seed,
            deterministic: false,
            theta_override: None,
            selection_noise: true,
            publishing_noise: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Dataset::EdgeList(path) = &self.dataset {
            if !path.exists() {
                return Err(Error::invalid("dataset", format!("{} does not exist", path.display())));
            }
        }
        if self.theta_override == Some(0) {
            return Err(Error::invalid("theta", "must be at least 1"));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub setup_ms: f64,
    pub selection_ms: f64,
    pub projection_ms: f64,
    pub publishing_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub config_hash: String,
    pub seed: u64,
    pub accounting: PrivacyAccount,
    /// Selection rounds run (0 when θ was fixed).
    pub selection_rounds: u32,
    /// Local projections executed, including one per selection round.
    pub projection_invocations: u32,
    pub theta: u32,
    pub timings: PhaseTimings,
}

impl RunManifest {
    /// One-line `#` header embedded at the top of emitted CSV files.
    pub fn csv_header(&self) -> String {
        format!(
            "# config_hash={} seed={} eps_claimed={} eps_composed={} theta={}\n",
            self.config_hash,
            self.seed,
            self.accounting.claimed_total,
            self.accounting.composed_total,
            self.theta
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelectionRecord {
    Fixed,
    PureLdp(PureLdpSelection),
    Crypto(CryptoSelection),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
}

#[derive(Debug)]
pub struct RunOutput {
    pub noisy_histogram: DegreeHistogram,
    pub distribution: DegreeDistribution,
    pub true_histogram: DegreeHistogram,
    /// Histogram of `d̂` before publishing noise.
    pub projected_histogram: DegreeHistogram,
    pub metrics: Metrics,
    pub selection: SelectionRecord,
    pub projection: ProjectionOutcome,
    pub trace: Trace,
    pub server: Server,
    pub manifest: RunManifest,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

pub fn run_pipeline(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let graph = cfg.dataset.load().map_err(|e| e.in_phase("load"))?;
    run_pipeline_on(&graph, cfg)
}

/// Runs the protocol on an already loaded graph. `cfg.dataset` is only
/// recorded in the manifest.
pub fn run_pipeline_on(graph: &Graph, cfg: &RunConfig) -> Result<RunOutput> {
    let n = graph.num_nodes();
    let tree = SeedTree::new(cfg.seed);
    let mut trace = Trace::new();
    let mut server = Server::new();
    let mut timings = PhaseTimings::default();
    let sel_opts = SelectionOptions {
        projection: cfg.method.projection,
        noise: cfg.selection_noise,
        deterministic: cfg.deterministic,
    };

    let (theta, selection) = match cfg.theta_override {
        Some(theta) => (theta, SelectionRecord::Fixed),
        None => match cfg.method.selection {
            SelectionMethod::PureLdp => {
                let start = Instant::now();
                let sel = pureldp_select_with(graph, &cfg.split, &tree, &sel_opts, &mut server, &mut trace)
                    .map_err(|e| e.in_phase("selection"))?;
                timings.selection_ms = ms(start);
                (sel.theta, SelectionRecord::PureLdp(sel))
            }
            SelectionMethod::Crypto => {
                let start = Instant::now();
                let setup = CryptoSetup::establish(n, &cfg.split, &tree, &mut trace)
                    .map_err(|e| e.in_phase("setup"))?;
                timings.setup_ms = ms(start);
                let start = Instant::now();
                let sel = crypto_select_with(graph, &cfg.split, &setup, &tree, &sel_opts, &mut server, &mut trace)
                    .map_err(|e| e.in_phase("selection"))?;
                timings.selection_ms = ms(start);
                (sel.theta, SelectionRecord::Crypto(sel))
            }
        },
    };
    let selection_rounds = match selection {
        SelectionRecord::Fixed => 0,
        _ => cfg.split.candidates,
    };

    let start = Instant::now();
    let streams = Substreams::new(tree, Purpose::Projection, 0);
    let mode = EdgeProjectionMode { deterministic: cfg.deterministic };
    let projection = local_projection(
        graph,
        theta as usize,
        cfg.method.projection,
        cfg.split.eps2,
        &streams,
        mode,
        None,
        &mut trace,
    )
    .map_err(|e| e.in_phase("projection"))?;
    timings.projection_ms = ms(start);

    let start = Instant::now();
    let reports: Vec<ToServer> = (0..n)
        .into_par_iter()
        .map(|id| {
            UserAgent::new(id, graph, cfg.split).noisy_degree(
                projection.projected_degree[id],
                theta,
                cfg.publishing_noise,
                &tree,
            )
        })
        .collect::<Result<_>>()
        .map_err(|e| e.in_phase("publishing"))?;
    for msg in reports {
        server.receive(msg, &mut trace);
    }
    let noisy_histogram = DegreeHistogram::from_reports(server.noisy_degrees(), n);
    timings.publishing_ms = ms(start);

    let true_histogram = degree_histogram(graph);
    let projected_histogram = DegreeHistogram::from_degrees(&projection.projected_degree, n)?;
    let metrics = Metrics {
        mse: mse(&true_histogram, &noisy_histogram)?,
        mae: mae(&true_histogram, &noisy_histogram)?,
    };
    let manifest = RunManifest {
        config: cfg.clone(),
        config_hash: cfg.config_hash(),
        seed: cfg.seed,
        accounting: account_privacy(&cfg.split),
        selection_rounds,
        projection_invocations: selection_rounds + 1,
        theta,
        timings,
    };

    Ok(RunOutput {
        distribution: noisy_histogram.distribution(),
        noisy_histogram,
        true_histogram,
        projected_histogram,
        metrics,
        selection,
        projection,
        trace,
        server,
        manifest,
    })
}

impl RunOutput {
    /// Writes results, trace and manifest into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let header = self.manifest.csv_header();
        let write = |name: &str, body: String| -> Result<()> {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(path, e))
        };
        write("histogram.csv", format!("{header}{}", self.noisy_histogram.to_csv()))?;
        write("distribution.csv", format!("{header}{}", self.distribution.to_csv()))?;
        write("projection.csv", format!("{header}{}", self.projection.to_csv()))?;
        write("deletions.csv", format!("{header}{}", self.projection.deletions_csv()))?;
        match &self.selection {
            SelectionRecord::PureLdp(sel) => write("selection.csv", format!("{header}{}", sel.to_csv()))?,
            SelectionRecord::Crypto(sel) => write("selection.csv", format!("{header}{}", sel.to_csv()))?,
            SelectionRecord::Fixed => {}
        }
        write("trace.jsonl", self.trace.to_jsonl())?;
        write(
            "manifest.json",
            serde_json::to_string_pretty(&self.manifest).expect("manifest serializes"),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures;
    use crate::mechanism::split_budget;

    fn quiet_cfg(method: MethodPair, theta: Option<u32>) -> RunConfig {
        let mut cfg = RunConfig::new(
            Dataset::EdgeList("spider.txt".into()),
            method,
            split_budget(2.0, 0.5, 2).unwrap(),
            3,
        );
        cfg.theta_override = theta;
        cfg.selection_noise = false;
        cfg.publishing_noise = false;
        cfg.deterministic = true;
        cfg
    }

    const NODE: MethodPair =
        MethodPair { selection: SelectionMethod::PureLdp, projection: ProjectionMethod::Node };

    #[test]
    fn method_pair_parsing() {
        let m: MethodPair = "cryptoxedge".parse().unwrap();
        assert_eq!(m, MethodPair { selection: SelectionMethod::Crypto, projection: ProjectionMethod::Edge });
        assert_eq!("pureldp-x-node".parse::<MethodPair>().unwrap(), NODE);
        assert_eq!(NODE.to_string().parse::<MethodPair>().unwrap(), NODE);
        assert!("cryptox".parse::<MethodPair>().is_err());
        assert!("fooxnode".parse::<MethodPair>().is_err());
    }

    #[test]
    fn noise_free_node_level_on_spider() {
        let out = run_pipeline_on(&fixtures::spider(), &quiet_cfg(NODE, Some(1))).unwrap();
        assert_eq!(out.noisy_histogram.bins, vec![0.0, 5.0, 0.0, 0.0, 0.0]);
        assert!((out.metrics.mse - 1.2).abs() < 1e-12);
    }

    #[test]
    fn noise_free_lossless_path() {
        for projection in [ProjectionMethod::Node, ProjectionMethod::Edge] {
            let m = MethodPair { projection, ..NODE };
            let out = run_pipeline_on(&fixtures::spider(), &quiet_cfg(m, Some(3))).unwrap();
            assert_eq!(out.noisy_histogram, out.true_histogram);
            assert_eq!(out.metrics.mse, 0.0);
        }
    }

    #[test]
    fn replay_is_bit_identical() {
        let g = crate::synthetic::PowerLawSpec::new(120, 9).generate().unwrap();
        let cfg = RunConfig::new(
            Dataset::Synthetic(crate::synthetic::PowerLawSpec::new(120, 9)),
            MethodPair { selection: SelectionMethod::Crypto, projection: ProjectionMethod::Edge },
            split_budget(1.0, 0.9, 10).unwrap(),
            77,
        );
        let a = run_pipeline_on(&g, &cfg).unwrap();
        let b = run_pipeline_on(&g, &cfg).unwrap();
        assert_eq!(a.noisy_histogram, b.noisy_histogram);
        assert_eq!(a.projection, b.projection);
        assert_eq!(a.selection, b.selection);
        assert_eq!(a.trace.events(), b.trace.events());
        assert_eq!(a.projected_histogram.total(), 120.0);
        assert_eq!(a.noisy_histogram.len(), 120);
    }

    #[test]
    fn selection_errors_carry_phase() {
        let mut cfg = quiet_cfg(NODE, None);
        cfg.split.candidates = 10;
        match run_pipeline_on(&fixtures::spider(), &cfg) {
            Err(Error::Phase { phase, .. }) => assert_eq!(phase, "selection"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_dataset_fails_validation() {
        let cfg = RunConfig::new(
            Dataset::EdgeList("/nonexistent/graph.txt".into()),
            NODE,
            split_budget(1.0, 0.5, 2).unwrap(),
            1,
        );
        assert!(run_pipeline(&cfg).is_err());
    }

    #[test]
    fn deliveries_leave_no_ids_in_trace() {
        let mut g = Graph::from_edges(10, [(0, 2), (0, 5), (0, 9)]).unwrap();
        let mut trace = Trace::new();
        let msgs = [
            DeletionRequest { from: 0, to: 2 },
            DeletionRequest { from: 2, to: 0 },
            DeletionRequest { from: 0, to: 9 },
            DeletionRequest { from: 3, to: 4 },
        ];
        let report = anonymous_deliver(&mut g, &msgs, None, &mut trace);
        assert_eq!(report.deleted, vec![(0, 2), (0, 9)]);
        assert_eq!(report.ignored, 1);
        assert_eq!(trace.events().len(), 5);
        let text = trace.to_jsonl();
        assert!(!text.contains("\"from\"") && !text.contains("\"to\""));
        assert!(trace.received_by(Role::Server).next().is_none());
    }

    #[test]
    fn writes_all_artifacts_with_manifest_header() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = quiet_cfg(NODE, None);
        cfg.selection_noise = true;
        let out = run_pipeline_on(&fixtures::spider(), &cfg).unwrap();
        out.write_to(dir.path()).unwrap();
        for name in ["histogram.csv", "distribution.csv", "projection.csv", "deletions.csv", "selection.csv"] {
            let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
            assert!(text.starts_with(&format!("# config_hash={}", cfg.config_hash())), "{name}");
        }
        let manifest: RunManifest =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
                .unwrap();
        assert_eq!(manifest.seed, 3);
        assert_eq!(manifest.selection_rounds, 2);
    }
}
