//! `softblock` command-line tool.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};
use serde::Serialize;

use softblock::designs::{make_design, Bandwidth, Design, DesignOptions, FlipPolicy, Method};
use softblock::dpp::tree_log_probability;
use softblock::estimators::{estimate, Estimator};
use softblock::graph::{gaussian_similarity, pairwise_distances, read_edges, write_edges, SpanningTree};
use softblock::simulate::{
    generate, results_line, run_benchmark_with, runtime_scaling, write_timings_csv, BenchmarkConfig, Dgp,
    RESULTS_HEADER,
};
use softblock::{
    balance_report, format_number, load_covariates, load_outcomes, read_assignment, standardize,
    write_assignment, write_covariates, write_outcomes, CovariateMatrix, RandomSeed,
};

/// Seed used when `--seed` is not given.
const DEFAULT_SEED: u64 = 42;

#[derive(Parser)]
#[command(name = "softblock", version, about = "Covariate-balancing experimental designs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assign treatment to the units of a covariate file.
    Design(DesignArgs),
    /// Report balance statistics of an assignment.
    Balance(BalanceArgs),
    /// Estimate ATE and per-unit effects from a completed experiment.
    Estimate(EstimateArgs),
    /// Run a simulation benchmark described by a JSON config.
    Simulate(SimulateArgs),
    /// Time a design over a grid of sample sizes.
    Runtime(RuntimeArgs),
    /// Write a simulated dataset.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Covariate CSV, one unit per row.
    #[arg(long)]
    input: PathBuf,
    /// Input CSV files start with a header line.
    #[arg(long)]
    header: bool,
    /// Use the covariates as given instead of standardizing each column.
    #[arg(long = "no-standardize", action = ArgAction::SetFalse)]
    standardize: bool,
}

impl InputArgs {
    fn load(&self) -> Result<CovariateMatrix, CliError> {
        let x = load_covariates(&self.input, self.header)?;
        Ok(if self.standardize { standardize(&x).matrix } else { x })
    }
}

#[derive(Args)]
struct DesignArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_parser = parse_method, default_value = "softblock")]
    method: Method,
    /// `auto` (median heuristic) or a positive number.
    #[arg(long, value_parser = parse_bandwidth, default_value = "auto")]
    bandwidth: Bandwidth,
    /// Acceptance fraction for rerandomization.
    #[arg(long = "accept-frac", default_value_t = 0.01)]
    accept_frac: f64,
    /// Integer seed or `random`.
    #[arg(long, value_parser = parse_seed)]
    seed: Option<RandomSeed>,
    /// Orient every component so its lowest-index unit is treated instead of
    /// flipping a coin (SoftBlock only).
    #[arg(long)]
    fixed_flip: bool,
    /// Directory for assignment.csv, graph.csv and design.json. Without it
    /// the assignment is printed to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Add the SoftBlock tree's log-probability to design.json.
    #[arg(long = "emit-logprob")]
    emit_logprob: bool,
}

#[derive(Args)]
struct BalanceArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Assignment CSV written by `design`.
    #[arg(long)]
    assignment: PathBuf,
    #[arg(long, value_parser = parse_bandwidth, default_value = "auto")]
    bandwidth: Bandwidth,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    assignment: PathBuf,
    /// Outcome CSV; the last column is used.
    #[arg(long)]
    outcomes: PathBuf,
    /// Support graph (graph.csv from `design`); needed by `design` and `pairs`.
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long, value_parser = parse_estimator, default_value = "design")]
    estimator: Estimator,
    /// Neighbors for the k-NN T-learner.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Directory for ate.json and ite.csv. Without it the ATE JSON is
    /// printed to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Benchmark config JSON.
    #[arg(long, alias = "input")]
    config: PathBuf,
    /// Results CSV.
    #[arg(long)]
    output: PathBuf,
    /// Optional CSV of mean design times per cell.
    #[arg(long)]
    timings: Option<PathBuf>,
    /// Run replications one at a time so timings are not contended.
    #[arg(long = "serial-timing")]
    serial_timing: bool,
}

#[derive(Args)]
struct RuntimeArgs {
    #[arg(long, value_parser = parse_method, default_value = "softblock")]
    method: Method,
    /// Comma-separated ascending sample sizes.
    #[arg(long = "n-grid", value_delimiter = ',', default_value = "500,1000,2000,4000,8000")]
    n_grid: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, value_parser = parse_seed)]
    seed: Option<RandomSeed>,
    /// CSV of `n,mean_ms`.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_parser = parse_dgp)]
    dgp: Dgp,
    #[arg(long)]
    n: usize,
    #[arg(long, value_parser = parse_seed)]
    seed: Option<RandomSeed>,
    /// Reveal outcomes for this assignment into outcomes.csv.
    #[arg(long)]
    assignment: Option<PathBuf>,
    /// Directory for covariates.csv, potential_outcomes.csv and, with
    /// `--assignment`, outcomes.csv.
    #[arg(long)]
    output: PathBuf,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

fn parse_estimator(s: &str) -> Result<Estimator, String> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = Estimator::ALL.iter().map(|e| e.name()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

fn parse_bandwidth(s: &str) -> Result<Bandwidth, String> {
    s.parse().map_err(|e: softblock::Error| e.to_string())
}

fn parse_dgp(s: &str) -> Result<Dgp, String> {
    s.parse().map_err(|e: softblock::Error| e.to_string())
}

fn parse_seed(s: &str) -> Result<RandomSeed, String> {
    if s == "random" {
        return Ok(RandomSeed(rand::random()));
    }
    s.parse().map(RandomSeed).map_err(|_| "expected an integer or `random`".to_string())
}

enum CliError {
    Usage(String),
    Run(softblock::Error),
}

impl From<softblock::Error> for CliError {
    fn from(e: softblock::Error) -> Self {
        CliError::Run(e)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| {
        CliError::Run(softblock::Error::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    })
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| {
        CliError::Run(softblock::Error::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), CliError> {
    match output {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Run(softblock::Error::MissingFile(path.to_path_buf())))
    }
}

#[derive(Serialize)]
struct DesignSummary {
    method: Method,
    seed: u64,
    n: usize,
    bandwidth: Option<f64>,
    standardized: bool,
    group_sizes: (usize, usize),
    total_tree_weight: f64,
    components: usize,
    unmatched: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tree_log_probability: Option<f64>,
}

fn assignment_csv(design: &Design) -> String {
    let mut out = String::from("unit_index,arm,component_id\n");
    for (i, (&arm, &c)) in design.assignment.arms().iter().zip(&design.components).enumerate() {
        out.push_str(&format!("{i},{arm},{c}\n"));
    }
    out
}

fn cmd_design(args: DesignArgs) -> Result<(), CliError> {
    if args.emit_logprob && args.method != Method::SoftBlock {
        return Err(CliError::Usage("--emit-logprob requires --method softblock".into()));
    }
    require_file(&args.input.input)?;
    let x = args.input.load()?;
    let seed = args.seed.unwrap_or(RandomSeed(DEFAULT_SEED));
    let opts = DesignOptions {
        bandwidth: args.bandwidth,
        accept_frac: args.accept_frac,
        flip: if args.fixed_flip { FlipPolicy::Fixed } else { FlipPolicy::Random },
        ..DesignOptions::default()
    };
    let design = make_design(args.method, &x, &opts, seed)?;
    let Some(dir) = args.output else {
        print!("{}", assignment_csv(&design));
        return Ok(());
    };
    let tree_log_probability = if args.emit_logprob {
        let h = design.bandwidth.expect("softblock records its bandwidth");
        let graph = gaussian_similarity(&pairwise_distances(&x), h)?;
        let tree = SpanningTree::new(x.n(), design.support.clone())?;
        Some(tree_log_probability(&tree, &graph)?)
    } else {
        None
    };
    create_dir(&dir)?;
    write_assignment(dir.join("assignment.csv"), &design.assignment, &design.components)?;
    write_edges(dir.join("graph.csv"), &design.support)?;
    let summary = DesignSummary {
        method: design.method,
        seed: seed.0,
        n: design.n(),
        bandwidth: design.bandwidth,
        standardized: args.input.standardize,
        group_sizes: design.group_sizes(),
        total_tree_weight: design.support_weight(),
        components: design.component_count(),
        unmatched: design.unmatched,
        tree_log_probability,
    };
    write_file(&dir.join("design.json"), &to_json(&summary))
}

fn cmd_balance(args: BalanceArgs) -> Result<(), CliError> {
    require_file(&args.input.input)?;
    require_file(&args.assignment)?;
    let x = args.input.load()?;
    let (a, _) = read_assignment(&args.assignment)?;
    let report = balance_report(&x, &a, args.bandwidth)?;
    emit(args.output.as_deref(), &to_json(&report))
}

#[derive(Serialize)]
struct AteSummary {
    estimator: Estimator,
    ate: f64,
    se: Option<f64>,
    n: usize,
    group_sizes: (usize, usize),
}

fn cmd_estimate(args: EstimateArgs) -> Result<(), CliError> {
    for p in [&args.input.input, &args.assignment, &args.outcomes] {
        require_file(p)?;
    }
    let needs_graph = matches!(args.estimator, Estimator::Design | Estimator::Pairs);
    if needs_graph && args.graph.is_none() {
        return Err(CliError::Usage(format!("--estimator {} needs --graph", args.estimator)));
    }
    if let Some(g) = &args.graph {
        require_file(g)?;
    }
    let x = args.input.load()?;
    let (a, _) = read_assignment(&args.assignment)?;
    let y = load_outcomes(&args.outcomes, args.input.header)?;
    let support = match &args.graph {
        Some(g) => read_edges(g)?,
        None => Vec::new(),
    };
    // `pairs` checks that the graph really is a matching
    let method = if args.estimator == Estimator::Pairs {
        Method::MatchedPairs
    } else {
        Method::SoftBlock
    };
    let design = Design::from_parts(method, a, support)?;
    let est = estimate(args.estimator, &design, &x, &y, args.k)?;
    let summary = AteSummary {
        estimator: args.estimator,
        ate: est.ate,
        se: est.se,
        n: design.n(),
        group_sizes: design.group_sizes(),
    };
    let Some(dir) = args.output else {
        print!("{}", to_json(&summary));
        return Ok(());
    };
    create_dir(&dir)?;
    write_file(&dir.join("ate.json"), &to_json(&summary))?;
    let mut ite = String::from("unit_index,tau_hat\n");
    for (i, t) in est.ite.as_slice().iter().enumerate() {
        ite.push_str(&format!("{i},{}\n", format_number(*t)));
    }
    write_file(&dir.join("ite.csv"), &ite)
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    require_file(&args.config)?;
    let text = fs::read_to_string(&args.config).map_err(|e| {
        CliError::Run(softblock::Error::Io {
            path: args.config.clone(),
            message: e.to_string(),
        })
    })?;
    let config: BenchmarkConfig =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid benchmark config: {e}")))?;
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let file = fs::File::create(&args.output).map_err(|e| {
        CliError::Run(softblock::Error::Io {
            path: args.output.clone(),
            message: e.to_string(),
        })
    })?;
    let mut out = std::io::BufWriter::new(file);
    let io_err = |e: std::io::Error| {
        CliError::Run(softblock::Error::Io {
            path: args.output.clone(),
            message: e.to_string(),
        })
    };
    writeln!(out, "{RESULTS_HEADER}").map_err(io_err)?;
    let mut write_err = None;
    let table = run_benchmark_with(&config, args.serial_timing, |row| {
        match &row.error {
            Some(e) => eprintln!("{} {} {} n={}: failed: {e}", row.dgp, row.method, row.estimator, row.n),
            None => eprintln!(
                "{} {} {} n={}: mse_ate={} mise_ite={}",
                row.dgp,
                row.method,
                row.estimator,
                row.n,
                format_number(row.mse_ate),
                format_number(row.mise_ite)
            ),
        }
        let line = results_line(row, config.normalization_exponent);
        if let Err(e) = writeln!(out, "{line}").and_then(|_| out.flush()) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(io_err(e));
    }
    if let Some(t) = &args.timings {
        write_timings_csv(t, &table)?;
    }
    if table.rows.iter().all(|r| r.error.is_some()) {
        return Err(CliError::Run(softblock::Error::InvalidData("every benchmark cell failed".into())));
    }
    Ok(())
}

fn cmd_runtime(args: RuntimeArgs) -> Result<(), CliError> {
    let seed = args.seed.unwrap_or(RandomSeed(DEFAULT_SEED));
    let study = runtime_scaling(args.method, &args.n_grid, args.reps, args.dim, seed)?;
    if let Some(p) = &args.output {
        let mut csv = String::from("n,mean_ms\n");
        for (n, ms) in &study.points {
            csv.push_str(&format!("{n},{}\n", format_number(*ms)));
        }
        write_file(p, &csv)?;
    }
    print!("{}", to_json(&study));
    Ok(())
}

fn cmd_generate(args: GenerateArgs) -> Result<(), CliError> {
    let seed = args.seed.unwrap_or(RandomSeed(DEFAULT_SEED));
    let data = generate(args.dgp, args.n, seed)?;
    let assignment = match &args.assignment {
        Some(p) => {
            require_file(p)?;
            Some(read_assignment(p)?.0)
        }
        None => None,
    };
    create_dir(&args.output)?;
    write_covariates(args.output.join("covariates.csv"), &data.x)?;
    let mut po = String::from("y0,y1,tau\n");
    for i in 0..data.n() {
        po.push_str(&format!(
            "{},{},{}\n",
            format_number(data.y0[i]),
            format_number(data.y1[i]),
            format_number(data.tau[i])
        ));
    }
    write_file(&args.output.join("potential_outcomes.csv"), &po)?;
    if let Some(a) = assignment {
        write_outcomes(args.output.join("outcomes.csv"), &data.reveal(&a)?)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Design(a) => cmd_design(a),
        Command::Balance(a) => cmd_balance(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Runtime(a) => cmd_runtime(a),
        Command::Generate(a) => cmd_generate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
