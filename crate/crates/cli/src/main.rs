use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nldp::harness::{
    cmd_bench, cmd_preprocess, cmd_sweep, method_pairs, select_theta, AlphaChoice, BenchSpec,
    ExperimentSpec, DEFAULT_ALPHA,
};
use nldp::selection::SelectionOptions;
use nldp::synthetic::PowerLawSpec;
use nldp::{split_budget, Dataset, MethodPair, RunConfig};

#[derive(Parser)]
#[command(name = "nldp", version, about = "Degree distributions under node local differential privacy")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Symmetrize an edge list and write it in canonical form.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// One end-to-end protocol run.
    Run(RunArgs),
    /// Grid over methods, ε and α with repetitions.
    Sweep(SweepArgs),
    /// Runtime scaling on synthetic power-law graphs.
    Bench(BenchArgs),
    /// Run only the θ selection phase and print the per-candidate table.
    SelectTheta(SelectArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Edge-list file.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    dataset: Option<PathBuf>,
    /// Generate a power-law graph with this many nodes instead.
    #[arg(long, value_name = "N")]
    synthetic: Option<usize>,
    /// Seed for the synthetic graph.
    #[arg(long, default_value_t = 0)]
    graph_seed: u64,
}

impl DataArgs {
    fn dataset(&self) -> Dataset {
        match (&self.dataset, self.synthetic) {
            (Some(path), _) => Dataset::EdgeList(path.clone()),
            (None, Some(n)) => Dataset::Synthetic(PowerLawSpec::new(n, self.graph_seed)),
            (None, None) => unreachable!("clap enforces one data source"),
        }
    }
}

#[derive(Args, Clone)]
struct BudgetArgs {
    #[arg(long, default_value_t = 2.0)]
    eps: f64,
    /// Publishing share of ε, or `best`.
    #[arg(long, default_value = "best")]
    alpha: AlphaChoice,
    /// Number of θ candidates.
    #[arg(long = "K", default_value_t = 50)]
    k: u32,
    #[arg(long, env = "NLDP_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    budget: BudgetArgs,
    /// {pureldp|crypto}x{node|edge}
    #[arg(long, default_value = "cryptoxedge")]
    method: MethodPair,
    /// Skip selection and use this θ.
    #[arg(long)]
    theta: Option<u32>,
    /// Disable operation-vector randomization.
    #[arg(long)]
    deterministic: bool,
    /// Directory for histogram, trace and manifest files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Edge-list files; may be repeated.
    #[arg(long)]
    dataset: Vec<PathBuf>,
    /// Synthetic graph sizes; may be repeated.
    #[arg(long, value_name = "N")]
    synthetic: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    graph_seed: u64,
    /// Method pairs, or `all`.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    method: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    eps: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.6,0.9,best")]
    alpha: Vec<AlphaChoice>,
    #[arg(long = "K", default_value_t = 50)]
    k: u32,
    #[arg(long, default_value_t = 20)]
    reps: u32,
    /// Runs per grid point when searching for `best` α on unknown datasets.
    #[arg(long, default_value_t = 5)]
    calibration_reps: u32,
    #[arg(long, env = "NLDP_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    deterministic: bool,
    #[arg(long, default_value = "sweep-out")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "1000,2000,4000")]
    sizes: Vec<usize>,
    #[arg(long = "K", default_value_t = 50)]
    k: u32,
    #[arg(long, default_value_t = 3)]
    reps: u32,
    /// Also time complete runs of every method pair.
    #[arg(long)]
    pairs: bool,
    #[arg(long, env = "NLDP_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    budget: BudgetArgs,
    #[arg(long, default_value = "cryptoxnode")]
    method: MethodPair,
    /// Report exact losses (pure-LDP only).
    #[arg(long)]
    no_noise: bool,
    #[arg(long)]
    deterministic: bool,
}

type Res<T> = Result<T, Box<dyn std::error::Error>>;

fn split_for(budget: &BudgetArgs, dataset: &Dataset) -> Res<nldp::BudgetSplit> {
    let alpha = budget.alpha.resolve(&dataset.label(), budget.eps);
    Ok(split_budget(budget.eps, alpha, budget.k)?)
}

fn write(path: &Path, body: &str) -> Res<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, body)?;
    Ok(())
}

fn run(args: RunArgs) -> Res<()> {
    let dataset = args.data.dataset();
    let split = split_for(&args.budget, &dataset)?;
    let mut cfg = RunConfig::new(dataset, args.method, split, args.budget.seed);
    cfg.theta_override = args.theta;
    cfg.deterministic = args.deterministic;
    let out = nldp::run_pipeline(&cfg)?;
    let m = &out.manifest;
    println!("dataset      {}", cfg.dataset.label());
    println!("method       {}", cfg.method);
    println!("seed         {}", m.seed);
    println!("config_hash  {}", m.config_hash);
    println!("eps          {} (alpha {}, eps1 {}, eps2 {}, eps3 {})", split.eps_total, split.alpha, split.eps1, split.eps2, split.eps3);
    println!("accounting   claimed {} composed {}", m.accounting.claimed_total, m.accounting.composed_total);
    println!("theta        {}", m.theta);
    println!("mse          {}", out.metrics.mse);
    println!("mae          {}", out.metrics.mae);
    if let Some(dir) = args.out {
        out.write_to(&dir)?;
        println!("wrote        {}", dir.display());
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Res<()> {
    let methods: Vec<MethodPair> = if args.method.iter().any(|m| m == "all") {
        method_pairs().to_vec()
    } else {
        args.method.iter().map(|m| m.parse()).collect::<Result<_, _>>()?
    };
    let mut datasets: Vec<Dataset> = args.dataset.into_iter().map(Dataset::EdgeList).collect();
    datasets.extend(args.synthetic.iter().map(|&n| Dataset::Synthetic(PowerLawSpec::new(n, args.graph_seed))));
    if datasets.is_empty() {
        return Err("sweep needs at least one --dataset or --synthetic".into());
    }
    let placeholder = split_budget(1.0, DEFAULT_ALPHA, args.k)?;
    let templates = datasets
        .iter()
        .flat_map(|d| {
            methods.iter().map(move |&m| {
                let mut cfg = RunConfig::new(d.clone(), m, placeholder, args.seed);
                cfg.deterministic = args.deterministic;
                cfg
            })
        })
        .collect();
    let spec = ExperimentSpec {
        templates,
        eps: args.eps,
        alphas: args.alpha,
        candidates: args.k,
        repetitions: args.reps,
        base_seed: args.seed,
        calibration_reps: args.calibration_reps,
        out_dir: args.out,
    };
    let report = cmd_sweep(&spec)?;
    let resumed = report.cells.iter().filter(|c| c.resumed).count();
    println!("cells {} ({} resumed), runs {}, failures {}", report.cells.len(), resumed, report.rows.len(), report.failures.len());
    for c in &report.cells {
        println!(
            "{:<28} {:<12} eps={:<4} alpha={:<5} mse={:.4}±{:.4} mae={:.4}",
            c.dataset, c.method, c.eps, c.alpha, c.mse_mean, c.mse_std, c.mae_mean
        );
    }
    for f in &report.failures {
        eprintln!("failed: {} {} eps={} alpha={}: {}", f.dataset, f.method, f.eps, f.alpha, f.error);
    }
    for path in &report.files {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn bench(args: BenchArgs) -> Res<()> {
    let mut spec = BenchSpec::new(args.sizes);
    spec.candidates = args.k;
    spec.repetitions = args.reps;
    spec.method_pairs = args.pairs;
    spec.seed = args.seed;
    let report = cmd_bench(&spec)?;
    print!("{}", report.to_csv());
    println!();
    print!("{}", report.fits_csv());
    if let Some(dir) = args.out {
        let header = format!("# seed={} K={}\n", spec.seed, spec.candidates);
        write(&dir.join("bench.csv"), &format!("{header}{}", report.to_csv()))?;
        write(&dir.join("fits.csv"), &format!("{header}{}", report.fits_csv()))?;
    }
    Ok(())
}

fn select(args: SelectArgs) -> Res<()> {
    let dataset = args.data.dataset();
    let split = split_for(&args.budget, &dataset)?;
    let graph = dataset.load()?;
    let opts = SelectionOptions { noise: !args.no_noise, deterministic: args.deterministic, ..Default::default() };
    let choice = select_theta(&graph, args.method, &split, args.budget.seed, opts)?;
    print!("{}", choice.csv);
    println!("theta={}", choice.theta);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Preprocess { input, out } => cmd_preprocess(&input, &out)
            .map(|stats| println!("{stats}"))
            .map_err(Into::into),
        Command::Run(args) => run(args),
        Command::Sweep(args) => sweep(args),
        Command::Bench(args) => bench(args),
        Command::SelectTheta(args) => select(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
