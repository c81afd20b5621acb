use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use a2l_core::dynamics::AlgorithmName;
use a2l_core::fisher::FisherMarket;
use a2l_core::game::{generate_game, GameKind, GraphSpec};
use a2l_core::harness::{
    self, fit_rate_csv, suite_names, verify, verify_all, ExperimentConfig, FisherDynamics, GameSource,
    MarketSource, Mode, VerifyOptions,
};
use a2l_core::WeightRule;

#[derive(Parser)]
#[command(name = "a2l", version, about = "Average-to-last-iterate learning dynamics: runs, rate fits and verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a built-in game or a random linear Fisher market as JSON.
    #[command(subcommand)]
    Gen(GenTarget),
    /// Full-feedback self-play.
    RunGradient(RunArgs),
    /// Epoch-based bandit self-play.
    RunBandit(RunArgs),
    /// Proportional response dynamics in a Fisher market.
    RunFisher(RunArgs),
    /// Log-log slope of a trajectory column against t.
    FitRate(FitArgs),
    /// Run a verification suite (or `all`) and print a JSON report.
    Verify(VerifyArgs),
}

#[derive(Subcommand)]
enum GenTarget {
    Game {
        /// matching_pennies, rps, random_zs or random_gs.
        #[arg(long)]
        kind: GameKind,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        d: usize,
        /// complete, cycle or gnp:<p>.
        #[arg(long, default_value = "complete")]
        graph: GraphSpec,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Market {
        #[arg(long)]
        agents: usize,
        #[arg(long)]
        goods: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config. Without it the run is built from the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Game file (gradient and bandit runs without a config).
    #[arg(long)]
    game: Option<PathBuf>,
    /// Market file (fisher runs without a config).
    #[arg(long)]
    market: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `0..20`, `1,2,3` or a single seed.
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<SeedList>,
    #[arg(long)]
    algorithm: Option<AlgorithmName>,
    #[arg(long)]
    eta: Option<f64>,
    /// uniform or linear.
    #[arg(long)]
    weights: Option<WeightRule>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// prd or a2l-prd.
    #[arg(long, value_parser = parse_fisher_dynamics)]
    dynamics: Option<FisherDynamics>,
    #[arg(long)]
    log_rounds: bool,
    #[arg(long)]
    certified: bool,
}

#[derive(Args)]
struct FitArgs {
    /// Trajectory CSV files.
    #[arg(long, num_args = 1.., required = true)]
    csv: Vec<PathBuf>,
    #[arg(long, default_value = "tgap_last")]
    column: String,
    #[arg(long, default_value_t = 100.0)]
    from: f64,
    #[arg(long, default_value_t = 10_000.0)]
    to: f64,
}

#[derive(Args)]
struct VerifyArgs {
    /// Suite name or `all`.
    #[arg(required_unless_present = "list")]
    suite: Option<String>,
    /// Print the registered suites.
    #[arg(long)]
    list: bool,
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    repetitions: Option<u64>,
    #[arg(long)]
    resamples: Option<usize>,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone)]
struct SeedList(Vec<u64>);

fn parse_seeds(s: &str) -> Result<SeedList, String> {
    let num = |x: &str| x.trim().parse::<u64>().map_err(|e| format!("bad seed `{x}`: {e}"));
    if let Some((lo, hi)) = s.split_once("..") {
        let (lo, hi) = (num(lo)?, num(hi)?);
        if lo >= hi {
            return Err(format!("empty seed range `{s}`"));
        }
        return Ok(SeedList((lo..hi).collect()));
    }
    s.split(',').map(num).collect::<Result<_, _>>().map(SeedList)
}

fn parse_fisher_dynamics(s: &str) -> Result<FisherDynamics, String> {
    match s {
        "prd" => Ok(FisherDynamics::Prd),
        "a2l-prd" => Ok(FisherDynamics::A2lPrd),
        _ => Err(format!("unknown dynamics `{s}` (expected prd or a2l-prd)")),
    }
}

/// `println!` that returns write errors instead of panicking, so a closed
/// pipe ends the process quietly.
macro_rules! outln {
    ($($arg:tt)*) => {
        writeln!(std::io::stdout().lock(), $($arg)*)?
    };
}

type CliResult = Result<ExitCode, Box<dyn std::error::Error>>;

fn write_or_print(text: &str, out: Option<&PathBuf>) -> std::io::Result<()> {
    match out {
        Some(path) => std::fs::write(path, format!("{text}\n")),
        None => {
            outln!("{text}");
            Ok(())
        }
    }
}

fn gen(target: GenTarget) -> CliResult {
    match target {
        GenTarget::Game { kind, n, d, graph, seed, out } => {
            let game = generate_game(kind, n, d, graph, seed)?;
            write_or_print(&game.to_json(), out.as_ref())?;
        }
        GenTarget::Market { agents, goods, seed, out } => {
            let market = FisherMarket::random_linear(agents, goods, seed)?;
            write_or_print(&market.to_json()?, out.as_ref())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn build_config(mode: Mode, args: RunArgs) -> Result<ExperimentConfig, Box<dyn std::error::Error>> {
    let mut config = match &args.config {
        Some(path) => {
            let config = ExperimentConfig::load(path)?;
            if config.mode != mode {
                return Err(format!("{} holds a {} config, not {mode}", path.display(), config.mode).into());
            }
            config
        }
        None => ExperimentConfig::new(mode),
    };
    if let Some(p) = args.game {
        config.game = Some(GameSource::File(p));
    }
    if let Some(p) = args.market {
        config.market = Some(MarketSource::File(p));
    }
    if let Some(out) = args.out {
        config.out_dir = out;
    }
    if let Some(seeds) = args.seeds {
        config.seeds = seeds.0;
    }
    if let Some(a) = args.algorithm {
        config.algorithm = a;
    }
    if args.eta.is_some() {
        config.eta = args.eta;
    }
    if let Some(w) = args.weights {
        config.weights = w;
    }
    if let Some(r) = args.rounds {
        config.rounds = r;
    }
    if let Some(e) = args.epochs {
        config.epochs = e;
    }
    if let Some(d) = args.dynamics {
        config.fisher_dynamics = d;
    }
    config.log_rounds |= args.log_rounds;
    config.certified |= args.certified;
    Ok(config)
}

fn run(mode: Mode, args: RunArgs) -> CliResult {
    let config = build_config(mode, args)?;
    let summary = harness::run(&config)?;
    for run in &summary.runs {
        log::info!("seed {}: {} final gap {:.3e}", run.seed, run.csv, run.final_gap);
    }
    for (name, agg) in &summary.checks {
        let status = if agg.failures == 0 { "ok" } else { "FAILED" };
        outln!("{name}: {status} ({} of {} runs failed, min slack {:.3e})", agg.failures, agg.runs, agg.min_slack);
    }
    outln!(
        "{} runs in {}, max final gap {:.3e}",
        summary.runs.len(),
        config.out_dir.display(),
        summary.max_final_gap
    );
    Ok(if summary.all_checks_pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn fit(args: FitArgs) -> CliResult {
    let report = fit_rate_csv(&args.csv, &args.column, args.from, args.to)?;
    outln!("{}", serde_json::to_string_pretty(&report)?);
    Ok(ExitCode::SUCCESS)
}

fn run_verify(args: VerifyArgs) -> CliResult {
    if args.list {
        for name in suite_names() {
            outln!("{name}");
        }
        return Ok(ExitCode::SUCCESS);
    }
    let defaults = VerifyOptions::default();
    let opts = VerifyOptions {
        seeds: args.seeds.unwrap_or(defaults.seeds),
        repetitions: args.repetitions.unwrap_or(defaults.repetitions),
        resamples: args.resamples.unwrap_or(defaults.resamples),
    };
    let suite = args.suite.expect("clap enforces suite or --list");
    let (text, pass) = if suite == "all" {
        let reports = verify_all(&opts)?;
        (serde_json::to_string_pretty(&reports)?, reports.iter().all(|r| r.pass))
    } else {
        let report = verify(&suite, &opts)?;
        (serde_json::to_string_pretty(&report)?, report.pass)
    };
    outln!("{text}");
    if let Some(path) = &args.out {
        std::fs::write(path, format!("{text}\n"))?;
    }
    Ok(if pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(target) => gen(target),
        Command::RunGradient(args) => run(Mode::Gradient, args),
        Command::RunBandit(args) => run(Mode::Bandit, args),
        Command::RunFisher(args) => run(Mode::Fisher, args),
        Command::FitRate(args) => fit(args),
        Command::Verify(args) => run_verify(args),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })
}
