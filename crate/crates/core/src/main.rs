use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};

use mdpsmc::engine::{Engine, EngineError, Hypothesis, HypothesisSpec, RunConfig, DEFAULT_SPRT_TRACE_CAP};
use mdpsmc::hash::{HashConfig, SchedulerId, DEFAULT_MODULUS, MODULUS_ENV};
use mdpsmc::model::{parse_model, MdpModel};
use mdpsmc::property::{parse_property, Formula};
use mdpsmc::report::{write_cdf_csv, Execution, Outcome, Parameters, RunReport};
use mdpsmc::simulator::{format_trace, SchedulerMode, Simulator};
use mdpsmc::stats::{ChernoffPlan, SprtPlan};

/// Statistical model checker for Markov decision processes with
/// hash-seeded history-dependent schedulers.
#[derive(Parser)]
#[command(name = "mdpsmc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate minimum and maximum probabilities over sampled schedulers
    Estimate(EstimateArgs),
    /// Search sampled schedulers for one satisfying a probability bound
    Check(CheckArgs),
    /// Simulate and print a single trace
    Simulate(SimulateArgs),
    /// Write the empirical CDF of per-scheduler estimates from a result file
    Cdf(CdfArgs),
}

#[derive(Args)]
struct Common {
    /// Model file
    #[arg(long)]
    model: PathBuf,
    /// Property file
    #[arg(long)]
    property: PathBuf,
    /// Use memoryless schedulers (choice depends on the current state only)
    #[arg(long)]
    memoryless: bool,
    /// Worker threads; results do not depend on this
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Prime modulus of the trace hash (overrides $MDPSMC_HASH_MODULUS)
    #[arg(long)]
    modulus: Option<u64>,
}

#[derive(Args)]
struct Sampling {
    /// Number of schedulers to sample
    #[arg(long)]
    schedulers: u64,
    /// Master seed; defaults to a time-derived value, always echoed in the output
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON result here instead of standard output
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    sampling: Sampling,
    /// Half-width of the confidence interval of every estimate
    #[arg(long)]
    epsilon: f64,
    /// Probability that some estimate misses its interval
    #[arg(long)]
    delta: f64,
    /// Also write the empirical CDF of estimates as CSV
    #[arg(long)]
    cdf: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Bound {
    /// P >= threshold + theta
    Geq,
    /// P <= threshold - theta
    Leq,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    sampling: Sampling,
    #[arg(long, value_enum)]
    hypothesis: Bound,
    #[arg(long)]
    threshold: f64,
    /// Half-width of the indifference region
    #[arg(long)]
    theta: f64,
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    #[arg(long, default_value_t = 0.01)]
    beta: f64,
    /// Traces per scheduler after which an undecided test gives up
    #[arg(long, default_value_t = DEFAULT_SPRT_TRACE_CAP)]
    trace_cap: u64,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    sigma: u64,
    #[arg(long)]
    prob_seed: u64,
}

#[derive(Args)]
struct CdfArgs {
    /// JSON result written by `estimate`
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

enum Failure {
    /// Unreadable or malformed input.
    Input(String),
    /// Parameters outside their domain.
    Invalid(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Invalid(_) => 3,
        }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Simulation { .. } => Failure::Input(e.to_string()),
            EngineError::Stats(_) | EngineError::NoWorkers => Failure::Invalid(e.to_string()),
            EngineError::Pool(_) => Failure::Input(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Estimate(args) => estimate(args),
        Command::Check(args) => check(args),
        Command::Simulate(args) => simulate(args),
        Command::Cdf(args) => cdf(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            let (Failure::Input(msg) | Failure::Invalid(msg)) = &failure;
            eprintln!("error: {msg}");
            ExitCode::from(failure.exit_code())
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

struct Loaded {
    model: MdpModel,
    formula: Formula,
    mode: SchedulerMode,
    hash: HashConfig,
}

fn load(common: &Common) -> Result<Loaded, Failure> {
    if common.jobs == 0 {
        return Err(Failure::Invalid("--jobs must be at least 1".into()));
    }
    let hash = hash_config(common.modulus)?;
    let model_text = read(&common.model)?;
    let model = parse_model(&model_text).map_err(|e| Failure::Input(format!("{}: {e}", common.model.display())))?;
    let property_text = read(&common.property)?;
    let formula = parse_property(&property_text, &model)
        .map_err(|e| Failure::Input(format!("{}: {e}", common.property.display())))?;
    let mode = if common.memoryless {
        SchedulerMode::Memoryless
    } else {
        SchedulerMode::General
    };
    Ok(Loaded {
        model,
        formula,
        mode,
        hash,
    })
}

fn hash_config(flag: Option<u64>) -> Result<HashConfig, Failure> {
    let modulus = match flag {
        Some(m) => m,
        None => match std::env::var(MODULUS_ENV) {
            Ok(text) => text
                .trim()
                .parse()
                .map_err(|_| Failure::Invalid(format!("{MODULUS_ENV}={text} is not an integer")))?,
            Err(_) => DEFAULT_MODULUS,
        },
    };
    let config = HashConfig::new(modulus).map_err(|e| Failure::Invalid(e.to_string()))?;
    if !config.is_recommended() {
        log::warn!("hash modulus {modulus} is outside (2^60, 2^61) or close to a power of two");
    }
    Ok(config)
}

fn master_seed(flag: Option<u64>) -> u64 {
    flag.unwrap_or_else(|| {
        let now = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
        now.as_secs().wrapping_mul(1_000_000_007) ^ u64::from(now.subsec_nanos())
    })
}

fn parameters(common: &Common, loaded: &Loaded, seed: u64) -> Parameters {
    Parameters {
        model: common.model.display().to_string(),
        property: common.property.display().to_string(),
        formula: loaded.formula.display(loaded.model.variable_names()).to_string(),
        horizon: loaded.formula.horizon(),
        scheduler_mode: loaded.mode,
        master_seed: seed,
        hash_modulus: loaded.hash.modulus(),
    }
}

fn emit(report: &RunReport, output: Option<&Path>) -> Result<(), Failure> {
    let json = report.to_json();
    match output {
        Some(path) => fs::write(path, json + "\n").map_err(|e| Failure::Input(format!("{}: {e}", path.display()))),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn estimate(args: EstimateArgs) -> Result<u8, Failure> {
    // validate numbers before touching files
    ChernoffPlan::two_sided(args.epsilon, args.delta, args.sampling.schedulers)
        .map_err(|e| Failure::Invalid(e.to_string()))?;
    let loaded = load(&args.common)?;
    let seed = master_seed(args.sampling.seed);
    let run = RunConfig {
        master_seed: seed,
        workers: args.common.jobs,
        mode: loaded.mode,
        hash: loaded.hash,
    };
    let started = Instant::now();
    let engine = Engine::new(&loaded.model, &loaded.formula, run)?;
    let result = engine.estimate_extrema(args.epsilon, args.delta, args.sampling.schedulers)?;
    let elapsed = started.elapsed().as_secs_f64();

    if let Some(path) = &args.cdf {
        let estimates: Vec<f64> = result.per_scheduler.iter().map(|e| e.p_hat).collect();
        let file = fs::File::create(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
        write_cdf_csv(std::io::BufWriter::new(file), &estimates)
            .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    }
    if result.none_satisfied {
        eprintln!("No schedulers were found to satisfy the property");
    }
    let report = RunReport {
        algorithm: "extremal-estimation".into(),
        parameters: parameters(&args.common, &loaded, seed),
        result: Outcome::Estimation(result),
        execution: Execution {
            jobs: args.common.jobs,
            wall_clock_seconds: elapsed,
        },
    };
    emit(&report, args.sampling.output.as_deref())?;
    Ok(0)
}

fn check(args: CheckArgs) -> Result<u8, Failure> {
    SprtPlan::new(args.threshold, args.theta, args.alpha, args.beta, args.sampling.schedulers)
        .map_err(|e| Failure::Invalid(e.to_string()))?;
    if args.trace_cap == 0 {
        return Err(Failure::Invalid("--trace-cap must be at least 1".into()));
    }
    let loaded = load(&args.common)?;
    let seed = master_seed(args.sampling.seed);
    let run = RunConfig {
        master_seed: seed,
        workers: args.common.jobs,
        mode: loaded.mode,
        hash: loaded.hash,
    };
    let spec = HypothesisSpec {
        hypothesis: match args.hypothesis {
            Bound::Geq => Hypothesis::H0,
            Bound::Leq => Hypothesis::H1,
        },
        threshold: args.threshold,
        theta: args.theta,
        alpha: args.alpha,
        beta: args.beta,
        max_schedulers: args.sampling.schedulers,
        trace_cap: args.trace_cap,
    };
    let started = Instant::now();
    let engine = Engine::new(&loaded.model, &loaded.formula, run)?;
    let report = engine.hypothesis_test(&spec)?;
    let elapsed = started.elapsed().as_secs_f64();
    let accepted = report.outcome.is_accepted();

    let report = RunReport {
        algorithm: "hypothesis-test".into(),
        parameters: parameters(&args.common, &loaded, seed),
        result: Outcome::HypothesisTest(report),
        execution: Execution {
            jobs: args.common.jobs,
            wall_clock_seconds: elapsed,
        },
    };
    emit(&report, args.sampling.output.as_deref())?;
    Ok(if accepted { 0 } else { 1 })
}

fn simulate(args: SimulateArgs) -> Result<u8, Failure> {
    let loaded = load(&args.common)?;
    let sim = Simulator::new(&loaded.model, &loaded.formula, loaded.mode, loaded.hash);
    let outcome = sim
        .simulate(SchedulerId(args.sigma), args.prob_seed, true)
        .map_err(|e| Failure::Input(e.to_string()))?;
    let mode = match loaded.mode {
        SchedulerMode::General => "general",
        SchedulerMode::Memoryless => "memoryless",
    };
    println!(
        "# sigma={} prob_seed={} mode={mode} modulus={}",
        args.sigma,
        args.prob_seed,
        loaded.hash.modulus()
    );
    print!("{}", format_trace(&loaded.model, outcome.trace.as_deref().unwrap_or_default()));
    if outcome.deadlocked {
        println!("# deadlock: a state without enabled commands was repeated");
    }
    println!("{}", if outcome.satisfied { "SAT" } else { "UNSAT" });
    Ok(0)
}

fn cdf(args: CdfArgs) -> Result<u8, Failure> {
    let text = read(&args.input)?;
    let report: RunReport =
        serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", args.input.display())))?;
    let Outcome::Estimation(result) = report.result else {
        return Err(Failure::Input(format!("{}: not an estimation result", args.input.display())));
    };
    let estimates: Vec<f64> = result.per_scheduler.iter().map(|e| e.p_hat).collect();
    let file = fs::File::create(&args.output).map_err(|e| Failure::Input(format!("{}: {e}", args.output.display())))?;
    write_cdf_csv(std::io::BufWriter::new(file), &estimates)
        .map_err(|e| Failure::Input(format!("{}: {e}", args.output.display())))?;
    Ok(0)
}
