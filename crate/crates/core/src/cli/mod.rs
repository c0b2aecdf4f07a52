//! Command-line front end.
//!
//! Every computation is written as JSON lines (one [`ResultRecord`] each) to
//! the output path, standard output by default. `estimate --csv` and
//! `bounds scan` write CSV instead. Exit codes: 0 success, 1 usage or parse
//! error, 2 a violated precondition or other runtime failure.

mod config;
mod oracle;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use config::{ConfigFile, Resolver, KNOWN_KEYS};
pub use oracle::{oracle_compare, parse_graph, OracleReport};

use crate::bounds::{self, Dim, M1Rule};
use crate::env::make_lattice_env;
use crate::epidemics::{
    replica_clock_seed, replica_env_seed, run_event_driven, ClockOracle, EnvMode, StopRule,
};
use crate::experiments::{mean_field_growth, normalized_table, table_csv, EstimationProtocol};
use crate::paths;
use crate::walks;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] crate::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Run(_) | CliError::Io(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "sirlab",
    version,
    about = "SIR epidemics on percolation clusters of Z^d"
)]
struct Cli {
    /// key=value configuration file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path (default: standard output).
    #[arg(long, global = true, env = "SIRLAB_OUTPUT")]
    output: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "SIRLAB_WORKERS")]
    workers: Option<usize>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run independent epidemics from the origin and emit one record each.
    Simulate(SimArgs),
    /// Estimate the critical rate for one or more dimensions.
    Estimate(EstimateArgs),
    /// Critical-rate bounds and dimension certification.
    #[command(subcommand)]
    Bounds(BoundsCommand),
    /// Structured random walk pairs.
    #[command(subcommand)]
    Walks(WalksCommand),
    /// Self-avoiding infection paths.
    #[command(subcommand)]
    Paths(PathsCommand),
    /// Cross-checks between the simulation engines.
    #[command(subcommand)]
    Oracle(OracleCommand),
}

#[derive(Debug, Args)]
struct EpidemicArgs {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    t_max: Option<f64>,
    /// annealed or quenched
    #[arg(long)]
    mode: Option<String>,
    /// Environment seed in quenched mode (default: the master seed).
    #[arg(long)]
    env_seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SimArgs {
    #[command(flatten)]
    common: EpidemicArgs,
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Dimension or comma-separated ascending dimensions.
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    env_seed: Option<u64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Relative bisection tolerance.
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    lambda_lo: Option<f64>,
    #[arg(long)]
    lambda_hi: Option<f64>,
    /// Emit the normalized table as CSV instead of JSON lines.
    #[arg(long)]
    csv: bool,
    /// Fit the early exponential growth rate at `--lambda` instead.
    #[arg(long)]
    growth: bool,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    t_window: Option<f64>,
}

#[derive(Debug, Args)]
struct M1Args {
    #[arg(long)]
    m1: Option<f64>,
    /// Derive M1 per dimension from this M2 (default 50) unless --m1 is given.
    #[arg(long)]
    m2: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum BoundsCommand {
    /// Certify lambda_c(d) <= r / (2dp).
    Upper {
        #[arg(long)]
        d: Option<Dim>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        r: Option<f64>,
        #[command(flatten)]
        m1: M1Args,
    },
    /// The rigorous lower bound 1 / ((2d-1)p - 1).
    Lower {
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        p: Option<f64>,
    },
    /// Certification over logarithmically spaced dimensions, as CSV.
    Scan {
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        r: Option<f64>,
        #[command(flatten)]
        m1: M1Args,
        #[arg(long)]
        d_min: Option<Dim>,
        #[arg(long)]
        d_max: Option<Dim>,
        #[arg(long)]
        points: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
enum WalksCommand {
    /// Monte Carlo estimate of E[theta^|F| psi^|D \ F|].
    Mc {
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        psi: Option<f64>,
        #[arg(long)]
        k_blocks: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
enum PathsCommand {
    /// Enumerate self-avoiding paths of length K from the origin.
    Enum {
        #[arg(long)]
        d: Option<usize>,
        #[arg(long = "K", visible_alias = "k")]
        k: Option<usize>,
    },
    /// Expected ever-infected bound and the implied lower bound on lambda_c.
    Bound {
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
    },
}

#[derive(Debug, Subcommand)]
enum OracleCommand {
    /// Compare both engines with exact enumeration on a small graph.
    Compare {
        /// triangle, path4, edge, single, or an edge list like 0-1,1-2
        #[arg(long)]
        graph: Option<String>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        replicas: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedLineage {
    pub master_seed: u64,
    /// Derivation tags used below the master seed.
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub subcommand: String,
    pub config: BTreeMap<String, Value>,
    pub payload: Value,
    pub seed_lineage: SeedLineage,
}

struct Sink {
    out: Box<dyn Write + Send>,
    subcommand: String,
    config: BTreeMap<String, Value>,
    lineage: SeedLineage,
}

impl Sink {
    fn record(&mut self, payload: Value) -> Result<(), CliError> {
        let rec = ResultRecord {
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            subcommand: self.subcommand.clone(),
            config: self.config.clone(),
            payload,
            seed_lineage: self.lineage.clone(),
        };
        let line = serde_json::to_string(&rec).expect("records serialize");
        writeln!(self.out, "{line}")?;
        Ok(())
    }

    fn raw(&mut self, text: &str) -> Result<(), CliError> {
        self.out.write_all(text.as_bytes())?;
        Ok(())
    }
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("payload serializes")
}

fn env_mode(
    r: &mut Resolver,
    mode: Option<String>,
    env_seed: Option<u64>,
    seed: u64,
) -> Result<EnvMode, CliError> {
    match r.or("mode", mode, "annealed".to_string())?.as_str() {
        "annealed" => Ok(EnvMode::Annealed),
        "quenched" => Ok(EnvMode::Quenched(r.or("env_seed", env_seed, seed)?)),
        other => Err(CliError::Usage(format!(
            "mode must be annealed or quenched, got '{other}'"
        ))),
    }
}

fn m1_rule(r: &mut Resolver, args: M1Args) -> Result<M1Rule, CliError> {
    match r.get("m1", args.m1)? {
        Some(m1) => Ok(M1Rule::Fixed(m1)),
        None => Ok(M1Rule::FromM2(r.or("m2", args.m2, 50.0)?)),
    }
}

fn parse_dims(raw: &str) -> Result<Vec<usize>, CliError> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| CliError::Usage(format!("dimension '{s}': {e}")))
        })
        .collect()
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let mut r = Resolver::new(&file);
    let workers = r.get("workers", cli.workers)?;
    let output: Option<String> = r.get(
        "output",
        cli.output.map(|p| p.to_string_lossy().into_owned()),
    )?;
    let seed = r.or("seed", cli.seed, 0u64)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(CliError::Usage("workers must be positive".into()));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {workers:?} workers: {e}")))?;
    let out: Box<dyn Write + Send> = match &output {
        Some(path) => Box::new(std::io::BufWriter::new(std::fs::File::create(path)?)),
        None => Box::new(std::io::BufWriter::new(std::io::stdout())),
    };
    let mut sink = Sink {
        out,
        subcommand: String::new(),
        config: BTreeMap::new(),
        lineage: SeedLineage {
            master_seed: seed,
            tags: Vec::new(),
        },
    };
    pool.install(|| dispatch(cli.command, r, seed, &mut sink))?;
    sink.out.flush()?;
    Ok(())
}

fn dispatch(command: Command, mut r: Resolver, seed: u64, sink: &mut Sink) -> Result<(), CliError> {
    let tags = |t: &[&str]| t.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    match command {
        Command::Simulate(args) => {
            let c = args.common;
            let d = r.req("d", c.d)?;
            let p = r.req("p", c.p)?;
            let lambda = r.req("lambda", args.lambda)?;
            let replicas = r.or("replicas", c.replicas, 1usize)?;
            let n_max = r.get("n_max", c.n_max)?;
            let t_max = r.or("t_max", c.t_max, f64::INFINITY)?;
            let mode = env_mode(&mut r, c.mode, c.env_seed, seed)?;
            let stop = StopRule::new(t_max, n_max)?;
            let base = make_lattice_env(d, p, 0)?;
            let outcomes: Result<Vec<Value>, crate::Error> = (0..replicas as u64)
                .into_par_iter()
                .map(|i| {
                    let env_seed = replica_env_seed(mode, seed, i);
                    let clock_seed = replica_clock_seed(seed, i);
                    let env = base.with_seed(env_seed);
                    let out = run_event_driven(&env, &ClockOracle::new(clock_seed), lambda, &stop)?;
                    Ok(json!({
                        "replica": i,
                        "env_seed": env_seed,
                        "clock_seed": clock_seed,
                        "outcome": out,
                    }))
                })
                .collect();
            start(sink, "simulate", r, tags(&["env", "clock"]));
            for payload in outcomes? {
                sink.record(payload)?;
            }
        }
        Command::Estimate(a) => {
            let p = r.req("p", a.p)?;
            if a.growth {
                let d = r.req("d", a.d.as_deref().map(str::to_string))?;
                let d = *parse_dims(&d)?.first().expect("split yields one item");
                let lambda = r.req("lambda", a.lambda)?;
                let replicas = r.or("replicas", a.replicas, 1000usize)?;
                let t_window = r.or("t_window", a.t_window, 5.0f64)?;
                let fit = mean_field_growth(d, p, lambda, replicas, t_window, seed)?;
                start(sink, "estimate growth", r, tags(&["env", "clock"]));
                return sink.record(to_json(&fit));
            }
            let dims = parse_dims(&r.req("d", a.d)?)?;
            let defaults = EstimationProtocol::default();
            let lo = r.get("lambda_lo", a.lambda_lo)?;
            let hi = r.get("lambda_hi", a.lambda_hi)?;
            let bracket = match (lo, hi) {
                (Some(lo), Some(hi)) => Some((lo, hi)),
                (None, None) => None,
                _ => return Err(CliError::Usage("give both lambda_lo and lambda_hi".into())),
            };
            let protocol = EstimationProtocol {
                replicas: r.or("replicas", a.replicas, defaults.replicas)?,
                n_max: r.or("n_max", a.n_max, defaults.n_max)?,
                t_max: r.or("t_max", a.t_max, defaults.t_max)?,
                epsilon: r.or("epsilon", a.epsilon, defaults.epsilon)?,
                tolerance: r.or("tolerance", a.tolerance, defaults.tolerance)?,
                bracket,
                mode: env_mode(&mut r, a.mode, a.env_seed, seed)?,
            };
            let rows = normalized_table(&dims, p, &protocol, seed)?;
            start(sink, "estimate", r, tags(&["env", "clock"]));
            if a.csv {
                sink.raw(&table_csv(&rows))?;
            } else {
                for row in &rows {
                    sink.record(to_json(row))?;
                }
            }
        }
        Command::Bounds(BoundsCommand::Upper { d, p, r: ratio, m1 }) => {
            let d = r.req("d", d)?;
            let p = r.or("p", p, 1.0)?;
            let ratio = r.req("r", ratio)?;
            let rule = m1_rule(&mut r, m1)?;
            let cert = bounds::certify_with_rule(d, p, ratio, rule)?;
            let phi = bounds::phi_matrix(d, cert.theta, cert.psi, cert.m1)?;
            start(sink, "bounds upper", r, vec![]);
            sink.record(json!({ "certification": cert, "phi": phi }))?;
        }
        Command::Bounds(BoundsCommand::Lower { d, p }) => {
            let d = r.req("d", d)?;
            let p = r.req("p", p)?;
            let bound = paths::rigorous_lower_bound(d, p)?;
            start(sink, "bounds lower", r, vec![]);
            sink.record(json!({ "d": d, "p": p, "lower_bound": bound }))?;
        }
        Command::Bounds(BoundsCommand::Scan {
            p,
            r: ratio,
            m1,
            d_min,
            d_max,
            points,
        }) => {
            let p = r.or("p", p, 1.0)?;
            let ratio = r.req("r", ratio)?;
            let rule = m1_rule(&mut r, m1)?;
            let lo = r.or("d_min", d_min, 1000 as Dim)?;
            let hi = r.or("d_max", d_max, (10 as Dim).pow(38))?;
            let n = r.or("points", points, 36usize)?;
            let rows = bounds::scan(&bounds::log_spaced(lo, hi, n), p, ratio, rule)?;
            start(sink, "bounds scan", r, vec![]);
            sink.raw(&bounds::scan_csv(&rows))?;
        }
        Command::Walks(WalksCommand::Mc {
            d,
            theta,
            psi,
            k_blocks,
            reps,
        }) => {
            let d = r.req("d", d)?;
            let theta = r.req("theta", theta)?;
            let psi = r.req("psi", psi)?;
            let k_blocks = r.or("k_blocks", k_blocks, 200usize)?;
            let reps = r.or("reps", reps, 1000usize)?;
            let report = walks::functional_mc(d, theta, psi, k_blocks, reps, seed)?;
            start(sink, "walks mc", r, tags(&["walk-s", "walk-v"]));
            sink.record(to_json(&report))?;
        }
        Command::Paths(PathsCommand::Enum { d, k }) => {
            let d = r.req("d", d)?;
            let k = r.req("k", k)?;
            let all = paths::enumerate_saw(d, k)?;
            start(sink, "paths enum", r, vec![]);
            sink.record(json!({
                "d": d,
                "K": k,
                "count": all.len(),
                "bound": paths::saw_count_bound(d, k),
                "paths": all,
            }))?;
        }
        Command::Paths(PathsCommand::Bound { d, p, lambda }) => {
            let d = r.req("d", d)?;
            let p = r.req("p", p)?;
            let lambda = r.req("lambda", lambda)?;
            let expected = paths::expected_total_infections_bound(d, p, lambda)?;
            let lower = paths::rigorous_lower_bound(d, p).ok();
            start(sink, "paths bound", r, vec![]);
            sink.record(json!({
                "expected_total_infections": expected.is_finite().then_some(expected),
                "diverges": expected.is_infinite(),
                "rigorous_lower_bound": lower,
            }))?;
        }
        Command::Oracle(OracleCommand::Compare {
            graph,
            lambda,
            replicas,
        }) => {
            let graph = r.or("graph", graph, "triangle".to_string())?;
            let lambda = r.req("lambda", lambda)?;
            let replicas = r.or("replicas", replicas, 100_000usize)?;
            let report = oracle_compare(&parse_graph(&graph)?, lambda, replicas, seed)?;
            start(sink, "oracle compare", r, tags(&["clock", "ctmc"]));
            sink.record(to_json(&report))?;
        }
    }
    Ok(())
}

fn start(sink: &mut Sink, name: &str, r: Resolver, tags: Vec<String>) {
    sink.subcommand = name.to_string();
    sink.config = r.echo();
    sink.lineage.tags = tags;
}
