//! Experiment plumbing behind the command-line tool: preprocessing, grid
//! sweeps with resumable cells, scaling benchmarks and one-off selection.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::Trace;
use crate::crypto::PairwiseSeeds;
use crate::error::{Error, Result};
use crate::graph::{parse_edge_list, write_edge_list, Graph};
use crate::mechanism::{account_privacy, split_budget, BudgetSplit};
use crate::projection::{
    edge_level_project, node_level_outcome, EdgeProjectionMode, ProjectionMethod,
};
use crate::protocol::{run_pipeline_on, Dataset, MethodPair, RunConfig, SelectionMethod};
use crate::rng::{Purpose, SeedTree, Substreams};
use crate::selection::{crypto_select, pureldp_select, CryptoSetup, SelectionOptions};
use crate::synthetic::PowerLawSpec;

/// Fallback publishing share, close to every tabulated optimum.
pub const DEFAULT_ALPHA: f64 = 0.94;

const DATASETS: [&str; 4] = ["ca-hepph", "cit-hepph", "twitter", "com-dblp"];
const TABLE_EPS: [f64; 6] = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
#[rustfmt::skip]
const TABLE_ALPHA: [[f64; 4]; 6] = [
    [0.895, 0.927, 0.945, 0.945],
    [0.944, 0.937, 0.949, 0.947],
    [0.901, 0.940, 0.944, 0.948],
    [0.948, 0.946, 0.947, 0.937],
    [0.944, 0.922, 0.948, 0.943],
    [0.944, 0.948, 0.941, 0.940],
];

/// Tabulated optimal α for the reference datasets, matched on the dataset
/// label (case-insensitive, `_` treated as `-`).
pub fn table_alpha(dataset: &str, eps: f64) -> Option<f64> {
    let name = dataset.to_ascii_lowercase().replace('_', "-");
    let col = DATASETS.iter().position(|d| name.contains(d))?;
    let row = TABLE_EPS.iter().position(|e| (e - eps).abs() < 1e-9)?;
    Some(TABLE_ALPHA[row][col])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AlphaChoice {
    Fixed(f64),
    /// Tabulated optimum when known; otherwise found by [`calibrate_alpha`]
    /// in sweeps, or [`DEFAULT_ALPHA`] elsewhere.
    Best,
}

impl AlphaChoice {
    pub fn resolve(&self, dataset: &str, eps: f64) -> f64 {
        match self {
            AlphaChoice::Fixed(a) => *a,
            AlphaChoice::Best => table_alpha(dataset, eps).unwrap_or(DEFAULT_ALPHA),
        }
    }
}

impl fmt::Display for AlphaChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlphaChoice::Fixed(a) => write!(f, "{a}"),
            AlphaChoice::Best => f.write_str("best"),
        }
    }
}

impl FromStr for AlphaChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("best") {
            return Ok(AlphaChoice::Best);
        }
        s.parse::<f64>()
            .map(AlphaChoice::Fixed)
            .map_err(|e| Error::invalid("alpha", format!("`{s}`: {e}")))
    }
}

// ---------------------------------------------------------------- preprocess

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PreprocessStats {
    pub nodes_before: usize,
    /// Data lines in the input, self loops and duplicates included.
    pub edges_before: usize,
    pub nodes_after: usize,
    pub edges_after: usize,
}

impl fmt::Display for PreprocessStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "|V| {} -> {}, |E| {} -> {}",
            self.nodes_before, self.nodes_after, self.edges_before, self.edges_after
        )
    }
}

/// Loads an edge list, symmetrizes it and writes the canonical undirected form.
pub fn cmd_preprocess(input: &Path, output: &Path) -> Result<PreprocessStats> {
    let text = std::fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
    let edges_before = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .count();
    let graph = parse_edge_list(&text)?;
    let body = format!(
        "# undirected edges={} nodes={}\n{}",
        graph.num_edges(),
        graph.num_nodes(),
        write_edge_list(&graph)
    );
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(output, body).map_err(|e| Error::io(output, e))?;
    Ok(PreprocessStats {
        nodes_before: graph.num_nodes(),
        edges_before,
        nodes_after: graph.num_nodes(),
        edges_after: graph.num_edges(),
    })
}

// --------------------------------------------------------------------- sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    /// Dataset, method and flags per template; split and seed are overridden.
    pub templates: Vec<RunConfig>,
    pub eps: Vec<f64>,
    pub alphas: Vec<AlphaChoice>,
    pub candidates: u32,
    pub repetitions: u32,
    pub base_seed: u64,
    /// Runs per grid point when calibrating `best` without a tabulated
    /// value; 0 falls back to [`DEFAULT_ALPHA`].
    pub calibration_reps: u32,
    pub out_dir: PathBuf,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::invalid("reps", "need at least one repetition"));
        }
        if self.templates.is_empty() || self.eps.is_empty() || self.alphas.is_empty() {
            return Err(Error::invalid("spec", "sweep axes must be non-empty"));
        }
        if self.candidates == 0 {
            return Err(Error::invalid("K", "must be at least 1"));
        }
        Ok(())
    }

    pub fn spec_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec serializes");
        Sha256::digest(&json).iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub dataset: String,
    pub method: String,
    pub eps: f64,
    pub alpha: String,
    pub alpha_value: f64,
    pub seed: u64,
    pub mse: f64,
    pub mae: f64,
    pub theta_selected: u32,
    pub eps_claimed: f64,
    pub eps_composed: f64,
    pub setup_ms: f64,
    pub selection_ms: f64,
    pub projection_ms: f64,
    pub publishing_ms: f64,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str = "dataset,method,eps,alpha,alpha_value,seed,mse,mae,theta_selected,\
eps_claimed,eps_composed,setup_ms,selection_ms,projection_ms,publishing_ms";

    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{:.3},{:.3},{:.3},{:.3}",
            self.dataset,
            self.method,
            self.eps,
            self.alpha,
            self.alpha_value,
            self.seed,
            self.mse,
            self.mae,
            self.theta_selected,
            self.eps_claimed,
            self.eps_composed,
            self.setup_ms,
            self.selection_ms,
            self.projection_ms,
            self.publishing_ms
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub key: String,
    pub dataset: String,
    pub method: String,
    pub eps: f64,
    pub alpha: String,
    pub runs: usize,
    pub mse_mean: f64,
    pub mse_std: f64,
    pub mae_mean: f64,
    pub mae_std: f64,
    pub eps_claimed: f64,
    pub eps_composed: f64,
    pub mean_ms: [f64; 4],
    /// Loaded from a finished cell file instead of recomputed.
    pub resumed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub key: String,
    pub dataset: String,
    pub method: String,
    pub eps: f64,
    pub alpha: String,
    pub seed: Option<u64>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub cells: Vec<CellSummary>,
    pub failures: Vec<SweepFailure>,
    pub files: Vec<PathBuf>,
}

/// Stored per cell so a rerun can skip it.
#[derive(Debug, Serialize, Deserialize)]
struct CellFile {
    key: String,
    base_config: RunConfig,
    repetitions: u32,
    rows: Vec<SweepRow>,
}

struct Cell {
    key: String,
    template: usize,
    eps: f64,
    alpha: AlphaChoice,
    config: RunConfig,
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn run_cell(graph: &Graph, cell: &Cell, reps: u32) -> (Vec<SweepRow>, Vec<SweepFailure>) {
    let dataset = cell.config.dataset.label();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for rep in 0..reps as u64 {
        let mut cfg = cell.config.clone();
        cfg.seed = cell.config.seed + rep;
        match run_pipeline_on(graph, &cfg) {
            Ok(out) => {
                let m = &out.manifest;
                rows.push(SweepRow {
                    dataset: dataset.clone(),
                    method: cfg.method.to_string(),
                    eps: cell.eps,
                    alpha: cell.alpha.to_string(),
                    alpha_value: cfg.split.alpha,
                    seed: cfg.seed,
                    mse: out.metrics.mse,
                    mae: out.metrics.mae,
                    theta_selected: m.theta,
                    eps_claimed: m.accounting.claimed_total,
                    eps_composed: m.accounting.composed_total,
                    setup_ms: m.timings.setup_ms,
                    selection_ms: m.timings.selection_ms,
                    projection_ms: m.timings.projection_ms,
                    publishing_ms: m.timings.publishing_ms,
                });
            }
            Err(e) => failures.push(SweepFailure {
                key: cell.key.clone(),
                dataset: dataset.clone(),
                method: cfg.method.to_string(),
                eps: cell.eps,
                alpha: cell.alpha.to_string(),
                seed: Some(cfg.seed),
                error: e.to_string(),
            }),
        }
    }
    (rows, failures)
}

fn summarize(cell: &Cell, rows: &[SweepRow], resumed: bool) -> CellSummary {
    let mse: Vec<f64> = rows.iter().map(|r| r.mse).collect();
    let mae: Vec<f64> = rows.iter().map(|r| r.mae).collect();
    let (mse_mean, mse_std) = mean_std(&mse);
    let (mae_mean, mae_std) = mean_std(&mae);
    let avg = |f: fn(&SweepRow) -> f64| mean_std(&rows.iter().map(f).collect::<Vec<_>>()).0;
    let account = account_privacy(&cell.config.split);
    CellSummary {
        key: cell.key.clone(),
        dataset: cell.config.dataset.label(),
        method: cell.config.method.to_string(),
        eps: cell.eps,
        alpha: cell.alpha.to_string(),
        runs: rows.len(),
        mse_mean,
        mse_std,
        mae_mean,
        mae_std,
        eps_claimed: account.claimed_total,
        eps_composed: account.composed_total,
        mean_ms: [
            avg(|r| r.setup_ms),
            avg(|r| r.selection_ms),
            avg(|r| r.projection_ms),
            avg(|r| r.publishing_ms),
        ],
        resumed,
    }
}

fn load_cell(path: &Path, key: &str, reps: u32) -> Option<Vec<SweepRow>> {
    let text = std::fs::read_to_string(path).ok()?;
    let file: CellFile = serde_json::from_str(&text).ok()?;
    (file.key == key && file.repetitions == reps && file.rows.len() == reps as usize).then_some(file.rows)
}

/// α values tried when calibrating `best`.
pub const CALIBRATION_GRID: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95];

/// Seeds used for calibration start here, away from sweep seeds.
pub const CALIBRATION_SEED_OFFSET: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaCalibration {
    pub key: String,
    pub alpha: f64,
    /// `(α, mean MSE)` per grid point.
    pub grid: Vec<(f64, f64)>,
}

/// Picks the grid α with the lowest mean MSE over `reps` held-out seeds.
pub fn calibrate_alpha(
    graph: &Graph,
    template: &RunConfig,
    eps: f64,
    candidates: u32,
    reps: u32,
    base_seed: u64,
) -> Result<AlphaCalibration> {
    let mut grid = Vec::with_capacity(CALIBRATION_GRID.len());
    let mut probe = template.clone();
    for &alpha in &CALIBRATION_GRID {
        probe.split = split_budget(eps, alpha, candidates)?;
        let mut total = 0.0;
        for rep in 0..reps.max(1) as u64 {
            probe.seed = base_seed + CALIBRATION_SEED_OFFSET + rep;
            total += run_pipeline_on(graph, &probe)?.metrics.mse;
        }
        grid.push((alpha, total / reps.max(1) as f64));
    }
    let alpha = grid.iter().fold((f64::NAN, f64::INFINITY), |b, &(a, m)| if m < b.1 { (a, m) } else { b }).0;
    probe.split = split_budget(eps, DEFAULT_ALPHA, candidates)?;
    probe.seed = base_seed;
    let key = format!("calib-{}-r{}", probe.config_hash(), reps);
    Ok(AlphaCalibration { key, alpha, grid })
}

fn cached_calibration(
    dir: &Path,
    graph: &Graph,
    template: &RunConfig,
    eps: f64,
    spec: &ExperimentSpec,
) -> Result<f64> {
    let mut probe = template.clone();
    probe.split = split_budget(eps, DEFAULT_ALPHA, spec.candidates)?;
    probe.seed = spec.base_seed;
    let key = format!("calib-{}-r{}", probe.config_hash(), spec.calibration_reps);
    let path = dir.join(format!("{key}.json"));
    if let Some(c) = std::fs::read_to_string(&path)
        .ok()
        .and_then(|t| serde_json::from_str::<AlphaCalibration>(&t).ok())
        .filter(|c| c.key == key)
    {
        return Ok(c.alpha);
    }
    let calib = calibrate_alpha(graph, template, eps, spec.candidates, spec.calibration_reps, spec.base_seed)?;
    write_file(&path, &serde_json::to_string_pretty(&calib).expect("calibration serializes"))?;
    Ok(calib.alpha)
}

/// Runs every (template, ε, α) cell for `repetitions` seeds and writes
/// `runs.csv`, `cells.csv`, `best_alpha.csv`, `runtime.csv` and
/// `failures.csv`. Finished cells live under `cells/` and are reused.
pub fn cmd_sweep(spec: &ExperimentSpec) -> Result<SweepReport> {
    spec.validate()?;
    let cell_dir = spec.out_dir.join("cells");
    std::fs::create_dir_all(&cell_dir).map_err(|e| Error::io(&cell_dir, e))?;

    let mut failures = Vec::new();
    let mut graphs: HashMap<usize, Graph> = HashMap::new();
    let mut cells = Vec::new();
    for (t, template) in spec.templates.iter().enumerate() {
        match template.dataset.load() {
            Ok(g) => {
                graphs.insert(t, g);
            }
            Err(e) => {
                failures.push(SweepFailure {
                    key: String::new(),
                    dataset: template.dataset.label(),
                    method: template.method.to_string(),
                    eps: f64::NAN,
                    alpha: String::new(),
                    seed: None,
                    error: e.in_phase("load").to_string(),
                });
                continue;
            }
        }
        let label = template.dataset.label();
        for &eps in &spec.eps {
            for &alpha in &spec.alphas {
                let alpha_value = match alpha {
                    AlphaChoice::Best if table_alpha(&label, eps).is_none() && spec.calibration_reps > 0 => {
                        cached_calibration(&cell_dir, &graphs[&t], template, eps, spec)
                    }
                    other => Ok(other.resolve(&label, eps)),
                };
                let split = match alpha_value.and_then(|a| split_budget(eps, a, spec.candidates)) {
                    Ok(s) => s,
                    Err(e) => {
                        failures.push(SweepFailure {
                            key: String::new(),
                            dataset: label.clone(),
                            method: template.method.to_string(),
                            eps,
                            alpha: alpha.to_string(),
                            seed: None,
                            error: e.to_string(),
                        });
                        continue;
                    }
                };
                let mut config = template.clone();
                config.split = split;
                config.seed = spec.base_seed;
                let key = format!("{}-r{}", config.config_hash(), spec.repetitions);
                cells.push(Cell { key, template: t, eps, alpha, config });
            }
        }
    }

    let results: Vec<(CellSummary, Vec<SweepRow>, Vec<SweepFailure>)> = cells
        .par_iter()
        .map(|cell| {
            let path = cell_dir.join(format!("{}.json", cell.key));
            if let Some(rows) = load_cell(&path, &cell.key, spec.repetitions) {
                return (summarize(cell, &rows, true), rows, Vec::new());
            }
            let (rows, mut fails) = run_cell(&graphs[&cell.template], cell, spec.repetitions);
            if fails.is_empty() {
                let file = CellFile {
                    key: cell.key.clone(),
                    base_config: cell.config.clone(),
                    repetitions: spec.repetitions,
                    rows: rows.clone(),
                };
                let body = serde_json::to_string_pretty(&file).expect("cell serializes");
                if let Err(e) = write_file(&path, &body) {
                    fails.push(SweepFailure {
                        key: cell.key.clone(),
                        dataset: cell.config.dataset.label(),
                        method: cell.config.method.to_string(),
                        eps: cell.eps,
                        alpha: cell.alpha.to_string(),
                        seed: None,
                        error: e.to_string(),
                    });
                }
            }
            (summarize(cell, &rows, false), rows, fails)
        })
        .collect();

    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (summary, r, f) in results {
        summaries.push(summary);
        rows.extend(r);
        failures.extend(f);
    }

    let header = format!(
        "# spec_hash={} base_seed={} reps={} K={}\n",
        spec.spec_hash(),
        spec.base_seed,
        spec.repetitions,
        spec.candidates
    );
    let files = write_sweep_tables(&spec.out_dir, &header, &rows, &summaries, &failures)?;
    Ok(SweepReport { rows, cells: summaries, failures, files })
}

fn write_sweep_tables(
    dir: &Path,
    header: &str,
    rows: &[SweepRow],
    cells: &[CellSummary],
    failures: &[SweepFailure],
) -> Result<Vec<PathBuf>> {
    let mut runs = format!("{header}{}\n", SweepRow::CSV_HEADER);
    for r in rows {
        let _ = writeln!(runs, "{}", r.csv_line());
    }

    let mut cell_csv = format!(
        "{header}key,dataset,method,eps,alpha,runs,mse_mean,mse_std,mae_mean,mae_std,eps_claimed,eps_composed\n"
    );
    let mut runtime = format!(
        "{header}dataset,method,eps,alpha,setup_ms,selection_ms,projection_ms,publishing_ms,total_ms\n"
    );
    for c in cells {
        let _ = writeln!(
            cell_csv,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            c.key, c.dataset, c.method, c.eps, c.alpha, c.runs, c.mse_mean, c.mse_std, c.mae_mean,
            c.mae_std, c.eps_claimed, c.eps_composed
        );
        let [s, sel, p, pu] = c.mean_ms;
        let _ = writeln!(
            runtime,
            "{},{},{},{},{s:.3},{sel:.3},{p:.3},{pu:.3},{:.3}",
            c.dataset,
            c.method,
            c.eps,
            c.alpha,
            s + sel + p + pu
        );
    }

    let mut best = format!("{header}dataset,method,eps,lowest_alpha,lowest_mse_mean,best_mse_mean\n");
    for row in best_alpha_table(cells) {
        let best_mse = row.best_mse.map(|m| m.to_string()).unwrap_or_default();
        let _ = writeln!(
            best,
            "{},{},{},{},{},{best_mse}",
            row.dataset, row.method, row.eps, row.lowest_alpha, row.lowest_mse
        );
    }

    let mut fails = format!("{header}key,dataset,method,eps,alpha,seed,error\n");
    for f in failures {
        let seed = f.seed.map(|s| s.to_string()).unwrap_or_default();
        let error = f.error.replace([',', '\n'], ";");
        let _ = writeln!(fails, "{},{},{},{},{},{seed},{error}", f.key, f.dataset, f.method, f.eps, f.alpha);
    }

    let mut files = Vec::new();
    for (name, body) in [
        ("runs.csv", runs),
        ("cells.csv", cell_csv),
        ("runtime.csv", runtime),
        ("best_alpha.csv", best),
        ("failures.csv", fails),
    ] {
        let path = dir.join(name);
        write_file(&path, &body)?;
        files.push(path);
    }
    Ok(files)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestAlphaRow {
    pub dataset: String,
    pub method: String,
    pub eps: f64,
    pub lowest_alpha: String,
    pub lowest_mse: f64,
    /// Mean MSE of the `best` column, when the grid has one.
    pub best_mse: Option<f64>,
}

/// Per (dataset, method, ε): the α with the lowest mean MSE.
pub fn best_alpha_table(cells: &[CellSummary]) -> Vec<BestAlphaRow> {
    let mut out: Vec<BestAlphaRow> = Vec::new();
    for c in cells.iter().filter(|c| c.runs > 0) {
        let slot = out
            .iter_mut()
            .find(|r| r.dataset == c.dataset && r.method == c.method && r.eps == c.eps);
        let row = match slot {
            Some(row) => row,
            None => {
                out.push(BestAlphaRow {
                    dataset: c.dataset.clone(),
                    method: c.method.clone(),
                    eps: c.eps,
                    lowest_alpha: c.alpha.clone(),
                    lowest_mse: c.mse_mean,
                    best_mse: None,
                });
                out.last_mut().expect("just pushed")
            }
        };
        if c.mse_mean < row.lowest_mse || (c.alpha == "best" && c.mse_mean == row.lowest_mse) {
            row.lowest_alpha = c.alpha.clone();
            row.lowest_mse = c.mse_mean;
        }
        if c.alpha == "best" {
            row.best_mse = Some(c.mse_mean);
        }
    }
    out
}

// --------------------------------------------------------------------- bench

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSpec {
    pub sizes: Vec<usize>,
    pub candidates: u32,
    pub eps: f64,
    pub alpha: f64,
    pub seed: u64,
    pub repetitions: u32,
    /// Also time full runs of every method pair.
    pub method_pairs: bool,
}

impl BenchSpec {
    pub fn new(sizes: Vec<usize>) -> Self {
        Self { sizes, candidates: 50, eps: 2.0, alpha: DEFAULT_ALPHA, seed: 0, repetitions: 3, method_pairs: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchPoint {
    pub metric: String,
    pub nodes: usize,
    pub edges: usize,
    pub ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthFit {
    pub metric: String,
    /// Least-squares slope of log time against log |V|.
    pub exponent: f64,
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub points: Vec<BenchPoint>,
    pub fits: Vec<GrowthFit>,
}

impl BenchReport {
    pub fn ms(&self, metric: &str, nodes: usize) -> Option<f64> {
        self.points.iter().find(|p| p.metric == metric && p.nodes == nodes).map(|p| p.ms)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,nodes,edges,ms\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{},{:.6}", p.metric, p.nodes, p.edges, p.ms);
        }
        out
    }

    pub fn fits_csv(&self) -> String {
        let mut out = String::from("metric,exponent,expected\n");
        for f in &self.fits {
            let _ = writeln!(out, "{},{:.3},{}", f.metric, f.exponent, f.expected);
        }
        out
    }
}

/// Slope of the least-squares line through `(ln x, ln y)`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.max(1e-12).ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Minimum over `reps` batches of the mean per-call time, in ms.
pub fn min_batch_ms(reps: u32, iters: u32, mut f: impl FnMut()) -> f64 {
    (0..reps.max(1))
        .map(|_| {
            let start = Instant::now();
            for _ in 0..iters.max(1) {
                f();
            }
            start.elapsed().as_secs_f64() * 1e3 / iters.max(1) as f64
        })
        .fold(f64::INFINITY, f64::min)
}

/// Per-call projection time on `graph` with the given method, in ms.
pub fn time_projection(graph: &Graph, method: ProjectionMethod, theta: usize, eps2: f64, reps: u32) -> f64 {
    let iters = (200_000 / graph.num_nodes().max(1)).clamp(1, 1000) as u32;
    let streams = Substreams::new(SeedTree::new(0), Purpose::Projection, 0);
    min_batch_ms(reps, iters, || match method {
        ProjectionMethod::Node => {
            std::hint::black_box(node_level_outcome(graph, theta).expect("theta >= 1"));
        }
        ProjectionMethod::Edge => {
            let mode = EdgeProjectionMode::default();
            std::hint::black_box(edge_level_project(graph, theta, eps2, &streams, mode).expect("valid input"));
        }
    })
}

/// Wall-clock scaling of the protocol phases on power-law graphs.
pub fn cmd_bench(spec: &BenchSpec) -> Result<BenchReport> {
    if spec.sizes.len() < 2 {
        return Err(Error::invalid("sizes", "need at least two sizes to fit growth"));
    }
    let split = split_budget(spec.eps, spec.alpha, spec.candidates)?;
    let mut points = Vec::new();
    for &n in &spec.sizes {
        let graph = PowerLawSpec::new(n, spec.seed).generate()?;
        let edges = graph.num_edges();
        let mut push = |metric: &str, ms: f64| {
            points.push(BenchPoint { metric: metric.into(), nodes: n, edges, ms });
        };

        let tree = SeedTree::new(spec.seed);
        push(
            "seed_setup",
            min_batch_ms(spec.repetitions, 1, || {
                let seeds = PairwiseSeeds::deal(n, &mut tree.stream(Purpose::SeedDealing, 0, 0));
                std::hint::black_box(seeds);
            }),
        );
        push(
            "crypto_setup",
            min_batch_ms(spec.repetitions, 1, || {
                let setup = CryptoSetup::establish(n, &split, &tree, &mut Trace::disabled());
                std::hint::black_box(setup.expect("setup fits"));
            }),
        );
        let theta = 10;
        push("node_projection", time_projection(&graph, ProjectionMethod::Node, theta, split.eps2, spec.repetitions));
        push("edge_projection", time_projection(&graph, ProjectionMethod::Edge, theta, split.eps2, spec.repetitions));

        if spec.method_pairs {
            for pair in method_pairs() {
                let cfg = RunConfig::new(Dataset::Synthetic(PowerLawSpec::new(n, spec.seed)), pair, split, spec.seed);
                let ms = min_batch_ms(spec.repetitions, 1, || {
                    std::hint::black_box(run_pipeline_on(&graph, &cfg).expect("valid run"));
                });
                push(&format!("run_{pair}"), ms);
            }
        }
    }

    let mut fits = Vec::new();
    let mut metrics: Vec<&str> = Vec::new();
    for p in &points {
        if !metrics.contains(&p.metric.as_str()) {
            metrics.push(&p.metric);
        }
    }
    for metric in metrics {
        let xy: Vec<(f64, f64)> =
            points.iter().filter(|p| p.metric == metric).map(|p| (p.nodes as f64, p.ms)).collect();
        let expected = match metric {
            "seed_setup" | "crypto_setup" | "run_cryptoxnode" | "run_cryptoxedge" => 2.0,
            "edge_projection" => 2.0,
            _ => 1.0,
        };
        fits.push(GrowthFit { metric: metric.into(), exponent: loglog_slope(&xy), expected });
    }
    Ok(BenchReport { points, fits })
}

pub fn method_pairs() -> [MethodPair; 4] {
    use ProjectionMethod::*;
    use SelectionMethod::*;
    [
        MethodPair { selection: PureLdp, projection: Node },
        MethodPair { selection: PureLdp, projection: Edge },
        MethodPair { selection: Crypto, projection: Node },
        MethodPair { selection: Crypto, projection: Edge },
    ]
}

// -------------------------------------------------------------- select-theta

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaChoice {
    pub theta: u32,
    /// Per-candidate breakdown as CSV.
    pub csv: String,
}

/// Runs only the selection phase.
pub fn select_theta(
    graph: &Graph,
    method: MethodPair,
    split: &BudgetSplit,
    seed: u64,
    opts: SelectionOptions,
) -> Result<ThetaChoice> {
    let tree = SeedTree::new(seed);
    let opts = SelectionOptions { projection: method.projection, ..opts };
    match method.selection {
        SelectionMethod::PureLdp => {
            let sel = pureldp_select(graph, split, &tree, &opts)?;
            Ok(ThetaChoice { theta: sel.theta, csv: sel.to_csv() })
        }
        SelectionMethod::Crypto => {
            let setup = CryptoSetup::establish(graph.num_nodes(), split, &tree, &mut Trace::disabled())?;
            let sel = crypto_select(graph, split, &setup, &tree, &opts)?;
            Ok(ThetaChoice { theta: sel.theta, csv: sel.to_csv() })
        }
    }
}
