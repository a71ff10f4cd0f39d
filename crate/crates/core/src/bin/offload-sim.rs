use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use offload_sim::audit::audit_all;
use offload_sim::config::load_scenario;
use offload_sim::engine::run_experiment;
use offload_sim::money::Money;
use offload_sim::report::{read_traces, write_outputs};
use offload_sim::tightness::{logistic_offer, preference, StrategyParams};
use offload_sim::topology::{generate_geometric, GeometricParams, Topology, DEFAULT_MAX_ATTEMPTS};

const EXIT_USAGE: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_AUDIT: u8 = 4;

#[derive(Parser)]
#[command(name = "offload-sim", version, about = "Auction-based ad hoc forwarding simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write games.csv, transfers.csv and summary.json.
    Run(RunArgs),
    /// Check a scenario config and its topology.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Generate a random geometric topology.
    GenTopology(GenArgs),
    /// Offer curve samples as CSV.
    BidCurve(BidCurveArgs),
    /// Preference plane samples as CSV.
    PreferenceGrid(GridArgs),
    /// Re-verify a trace file written by `run --traces`.
    Replay { trace: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the master seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Play games on all cores. Output is identical either way.
    #[arg(long)]
    parallel: bool,
    #[arg(long)]
    quiet: bool,
    /// Also write traces.jsonl for `replay`.
    #[arg(long)]
    traces: bool,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    handhelds: u32,
    #[arg(long, default_value_t = 2)]
    aps: u32,
    #[arg(long)]
    radius: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_ATTEMPTS)]
    max_attempts: u32,
    /// Defaults to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BidCurveArgs {
    #[arg(long, default_value = "200")]
    budget: Money,
    #[arg(long, default_value = "80")]
    fine: Money,
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1,2")]
    steepness: Vec<f64>,
    #[arg(long, default_value_t = 21)]
    samples: usize,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, default_value = "20")]
    budget: Money,
    #[arg(long, default_value_t = 3.0)]
    c_max: f64,
    #[arg(long, default_value_t = 2.0)]
    k1: f64,
    #[arg(long, default_value_t = 3.0)]
    k2: f64,
    /// Points per axis.
    #[arg(long, default_value_t = 11)]
    grid: usize,
}

struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl ToString) -> Failure {
    Failure { code, message: message.to_string() }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Validate { config } => validate(config),
        Command::GenTopology(args) => gen_topology(args),
        Command::BidCurve(args) => bid_curve(args),
        Command::PreferenceGrid(args) => preference_grid(args),
        Command::Replay { trace } => replay(trace),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let (mut config, topo) = load_scenario(&args.config).map_err(|e| fail(EXIT_USAGE, e))?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let exp = run_experiment(&config, &topo, args.parallel).map_err(|e| fail(EXIT_RUNTIME, e))?;
    write_outputs(&args.out, &topo, config.auction_window, &exp, args.traces)
        .map_err(|e| fail(EXIT_RUNTIME, format!("writing {}: {e}", args.out.display())))?;
    if !args.quiet {
        let m = &exp.metrics;
        println!("games: {}", m.games);
        println!("delivery ratio: {:.4}", m.delivery_ratio);
        println!("operator balance: {}", m.operator_balance);
        println!("top balances:");
        for (node, balance) in m.top_balances(5) {
            println!("  {node}: {balance}");
        }
    }
    Ok(())
}

fn validate(config: PathBuf) -> Result<(), Failure> {
    let (_, topo) = load_scenario(&config).map_err(|e| fail(EXIT_USAGE, e))?;
    println!(
        "ok: {} handhelds, {} access points",
        topo.handhelds().count(),
        topo.access_points().count()
    );
    Ok(())
}

fn gen_topology(args: GenArgs) -> Result<(), Failure> {
    let topo = generate_geometric(&GeometricParams {
        handhelds: args.handhelds,
        access_points: args.aps,
        radius: args.radius,
        seed: args.seed,
        max_attempts: args.max_attempts,
    })
    .map_err(|e| fail(EXIT_USAGE, e))?;
    match args.out {
        Some(path) => topo.save(&path).map_err(|e| fail(EXIT_RUNTIME, e)),
        None => {
            print!("{}", topo.to_toml_string());
            Ok(())
        }
    }
}

fn csv_stdout() -> csv::Writer<io::StdoutLock<'static>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(io::stdout().lock())
}

fn bid_curve(args: BidCurveArgs) -> Result<(), Failure> {
    if args.fine.is_negative() || args.fine > args.budget {
        return Err(fail(EXIT_USAGE, "fine must be non-negative and smaller or equal to the budget"));
    }
    if args.samples < 2 {
        return Err(fail(EXIT_USAGE, "samples must be at least 2"));
    }
    if args.steepness.iter().any(|a| !a.is_finite() || *a < 0.0) {
        return Err(fail(EXIT_USAGE, "steepness values must be finite and non-negative"));
    }
    let mut w = csv_stdout();
    let io_fail = |e: csv::Error| fail(EXIT_RUNTIME, e);
    w.write_record(["a_n", "c_n", "offer"]).map_err(io_fail)?;
    for &a in &args.steepness {
        for i in 0..args.samples {
            let c = 2.0 * i as f64 / (args.samples - 1) as f64;
            let offer = logistic_offer(args.budget, args.fine, a, c);
            w.write_record([a.to_string(), c.to_string(), offer.to_string()]).map_err(io_fail)?;
        }
    }
    w.flush().map_err(|e| fail(EXIT_RUNTIME, e))
}

fn preference_grid(args: GridArgs) -> Result<(), Failure> {
    if !(args.k1 > 0.0 && args.k2 > args.k1) {
        return Err(fail(EXIT_USAGE, "need k2 > k1 > 0"));
    }
    if !(args.c_max > 0.0 && args.c_max.is_finite()) {
        return Err(fail(EXIT_USAGE, "c_max must be positive"));
    }
    if args.budget.is_negative() || args.budget.is_zero() {
        return Err(fail(EXIT_USAGE, "budget must be positive"));
    }
    if args.grid < 2 {
        return Err(fail(EXIT_USAGE, "grid must be at least 2"));
    }
    let params = StrategyParams { k1: args.k1, k2: args.k2, ..StrategyParams::default() };
    let steps = (args.grid - 1) as i64;
    let mut w = csv_stdout();
    let io_fail = |e: csv::Error| fail(EXIT_RUNTIME, e);
    w.write_record(["op_i", "c_i", "preference"]).map_err(io_fail)?;
    for i in 0..=steps {
        let op = Money::from_millis(args.budget.millis() * i / steps);
        for j in 0..=steps {
            let c = args.c_max * j as f64 / steps as f64;
            let p = preference(op, c, args.budget, args.c_max, &params);
            w.write_record([op.to_string(), c.to_string(), p.to_string()]).map_err(io_fail)?;
        }
    }
    w.flush().map_err(|e| fail(EXIT_RUNTIME, e))
}

fn replay(path: PathBuf) -> Result<(), Failure> {
    let file = File::open(&path).map_err(|e| fail(EXIT_USAGE, format!("{}: {e}", path.display())))?;
    let traces = read_traces(BufReader::new(file)).map_err(|e| fail(EXIT_USAGE, e))?;
    let topo = Topology::from_file(traces.header.topology.clone()).map_err(|e| fail(EXIT_USAGE, e))?;
    match audit_all(&topo, traces.header.auction_window, &traces.games) {
        Ok(n) => {
            let _ = writeln!(io::stdout(), "ok: {n} games verified");
            Ok(())
        }
        Err(v) => Err(fail(EXIT_AUDIT, format!("violation: {v}"))),
    }
}
