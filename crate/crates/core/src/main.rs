use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use seqsamp::bvpe::BvpeConfig;
use seqsamp::cli_io::{
    emit_table, load_csv_series, replay_run, CliError, ColumnSelector, OutputFormat, Table,
};
use seqsamp::engine::{EngineError, SchemeParams};
use seqsamp::eta::{eta_table, EtaError, EtaKind};
use seqsamp::montecarlo::{
    simulate_bvpe_grid, simulate_mrpe_grid, Procedure, Scenario, SimError, SimPlan,
    DEFAULT_REPLICATIONS,
};
use seqsamp::mrpe::MrpeConfig;

#[derive(Parser)]
#[command(
    name = "seqsamp",
    version,
    about = "Accelerated sequential point estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate a correction constant for k = 1..k-max.
    EtaTable {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long, default_value_t = 20)]
        k_max: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Simulate the normal-mean minimum-risk procedure over a (c, rho, k) grid.
    SimMrpe(SimMrpeArgs),
    /// Simulate the negative-exponential bounded-variance procedure over a (b, rho, k) grid.
    SimBvpe(SimBvpeArgs),
    /// Run the minimum-risk procedure once on a shuffled CSV column.
    ReplayMrpe(ReplayMrpeArgs),
    /// Run the bounded-variance procedure once on a shuffled CSV column.
    ReplayBvpe(ReplayBvpeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Eta1,
    Eta2,
}

#[derive(Args)]
struct OutputArgs {
    /// markdown, csv or json
    #[arg(long, default_value = "markdown")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    /// Pilot size; overrides --m0.
    #[arg(long)]
    m: Option<usize>,
    /// Pilot stages, giving m = m0*k + 1.
    #[arg(long)]
    m0: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    rho: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    k: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_REPLICATIONS)]
    reps: usize,
    #[arg(long, default_value_t = 2021)]
    seed: u64,
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SimMrpeArgs {
    #[arg(long, default_value_t = 5.0, allow_negative_numbers = true)]
    mu: f64,
    #[arg(long, default_value_t = 2.0)]
    sigma: f64,
    #[arg(long = "A", default_value_t = 100.0)]
    a: f64,
    #[arg(long, value_delimiter = ',', required = true)]
    c: Vec<f64>,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args)]
struct BoundArgs {
    /// Standard-deviation bound.
    #[arg(
        long,
        value_delimiter = ',',
        conflicts_with = "b2",
        required_unless_present = "b2"
    )]
    b: Vec<f64>,
    /// Variance bound b².
    #[arg(long, value_delimiter = ',')]
    b2: Vec<f64>,
}

impl BoundArgs {
    fn values(&self) -> Vec<f64> {
        if self.b.is_empty() {
            self.b2.iter().map(|v| v.sqrt()).collect()
        } else {
            self.b.clone()
        }
    }
}

#[derive(Args)]
struct SimBvpeArgs {
    #[arg(long, default_value_t = 5.0, allow_negative_numbers = true)]
    mu: f64,
    #[arg(long, default_value_t = 2.0)]
    sigma: f64,
    #[command(flatten)]
    bound: BoundArgs,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    file: PathBuf,
    /// Header name or zero-based index.
    #[arg(long, default_value = "0")]
    column: String,
    #[arg(long)]
    no_header: bool,
    #[arg(long, default_value_t = 11)]
    m: usize,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Permutation seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ReplayMrpeArgs {
    #[arg(long = "A", default_value_t = 100.0)]
    a: f64,
    #[arg(long)]
    c: f64,
    #[command(flatten)]
    replay: ReplayArgs,
}

#[derive(Args)]
struct ReplayBvpeArgs {
    #[command(flatten)]
    bound: BoundArgs,
    #[command(flatten)]
    replay: ReplayArgs,
}

enum AppError {
    Validation(String),
    Runtime(String),
}

impl From<EngineError> for AppError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::InvalidParams(_) => AppError::Validation(e.to_string()),
            _ => AppError::Runtime(e.to_string()),
        }
    }
}

impl From<SimError> for AppError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidPlan(_) => AppError::Validation(e.to_string()),
            _ => AppError::Runtime(e.to_string()),
        }
    }
}

impl From<CliError> for AppError {
    fn from(e: CliError) -> Self {
        match e {
            CliError::Io { .. } | CliError::Json(_) => AppError::Runtime(e.to_string()),
            _ => AppError::Validation(e.to_string()),
        }
    }
}

impl From<EtaError> for AppError {
    fn from(e: EtaError) -> Self {
        match e {
            EtaError::InvalidK | EtaError::InvalidSpec(_) => AppError::Validation(e.to_string()),
            _ => AppError::Runtime(e.to_string()),
        }
    }
}

fn write_output(table: &Table, output: &OutputArgs) -> Result<(), AppError> {
    let format: OutputFormat = output.format.parse()?;
    let text = emit_table(table, format)?;
    match &output.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| AppError::Runtime(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn schemes(
    grid: &GridArgs,
    default_m0: impl Fn(usize) -> usize,
) -> Result<Vec<SchemeParams>, AppError> {
    let mut out = Vec::new();
    for &rho in &grid.rho {
        for &k in &grid.k {
            let scheme = match (grid.m, grid.m0) {
                (Some(m), _) => SchemeParams::new(rho, k, m)?,
                (None, m0) => {
                    SchemeParams::with_pilot_stages(rho, k, m0.unwrap_or_else(|| default_m0(k)))?
                }
            };
            out.push(scheme);
        }
    }
    Ok(out)
}

fn plan(scenarios: Vec<Scenario>, grid: &GridArgs) -> SimPlan {
    let mut plan = SimPlan::new(scenarios, grid.reps, grid.seed);
    plan.workers = grid.workers;
    plan
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::EtaTable {
            kind,
            k_max,
            output,
        } => {
            let kind = match kind {
                KindArg::Eta1 => EtaKind::Eta1,
                KindArg::Eta2 => EtaKind::Eta2,
            };
            write_output(&Table::Eta(eta_table(kind, k_max)?), &output)
        }
        Command::SimMrpe(args) => {
            // m = 21 whenever k divides 20.
            let schemes = schemes(&args.grid, |k| (20 / k).max(1))?;
            let mut scenarios = Vec::new();
            for &c in &args.c {
                for s in &schemes {
                    scenarios.push(Scenario::mrpe(
                        args.mu,
                        args.sigma,
                        MrpeConfig::new(args.a, c, *s)?,
                    ));
                }
            }
            let summaries = simulate_mrpe_grid(&plan(scenarios, &args.grid))?;
            write_output(&Table::Simulation(summaries), &args.grid.output)
        }
        Command::SimBvpe(args) => {
            let schemes = schemes(&args.grid, |_| 4)?;
            let mut scenarios = Vec::new();
            for b in args.bound.values() {
                for s in &schemes {
                    scenarios.push(Scenario::bvpe(args.mu, args.sigma, BvpeConfig::new(b, *s)?));
                }
            }
            let summaries = simulate_bvpe_grid(&plan(scenarios, &args.grid))?;
            write_output(&Table::Simulation(summaries), &args.grid.output)
        }
        Command::ReplayMrpe(args) => {
            let r = &args.replay;
            let scheme = SchemeParams::new(r.rho, r.k, r.m)?;
            let procedure = Procedure::Mrpe(MrpeConfig::new(args.a, args.c, scheme)?);
            replay(r, &procedure)
        }
        Command::ReplayBvpe(args) => {
            let r = &args.replay;
            let scheme = SchemeParams::new(r.rho, r.k, r.m)?;
            let b = args.bound.values();
            if b.len() != 1 {
                return Err(AppError::Validation("replay takes a single bound".into()));
            }
            let procedure = Procedure::Bvpe(BvpeConfig::new(b[0], scheme)?);
            replay(r, &procedure)
        }
    }
}

fn replay(args: &ReplayArgs, procedure: &Procedure) -> Result<(), AppError> {
    let column: ColumnSelector = args.column.parse().expect("infallible");
    let series = load_csv_series(&args.file, &column, !args.no_header)?;
    let record = replay_run(&series, procedure, args.seed)?;
    write_output(&Table::Records(vec![record]), &args.output)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(AppError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
