mod plot;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use crowdgame::cmpc::CmpcOptions;
use crowdgame::crowd_sim::SimRecord;
use crowdgame::dmpc::{run_tcp_worker, DmpcOptions, TcpTransport};
use crowdgame::harness::{
    run_batch, run_episode, write_csv, write_summary, BatchSpec, CmpcPlanner, DmpcPlanner,
    ExperimentConfig, Method, Planner, PredictorKind, TransportKind,
};
use crowdgame::predictor::{ExternalPredictor, Predictor};
use crowdgame::solver::SolverOptions;
use crowdgame::Layout;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Duration;

const EXIT_RUNTIME: u8 = 1;
const EXIT_USAGE: u8 = 2;
const THREADS_ENV: &str = "CROWDGAME_THREADS";
const REMOTE_ACCEPT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Parser, Debug)]
#[command(
    name = "crowdgame",
    version,
    about = "Game-theoretic multi-robot crowd navigation"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run one episode and print its metrics as JSON.
    Run(RunArgs),
    /// Run an experiment grid and write one CSV per cell plus summary.json.
    Batch(BatchArgs),
    /// Render a trajectory log as SVG.
    Plot(PlotArgs),
    /// Serve one robot of a DMPC coordinator over TCP.
    Worker(WorkerArgs),
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum MethodArg {
    Cmpc,
    Dmpc,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Cmpc => Method::Cmpc,
            MethodArg::Dmpc => Method::Dmpc,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum LayoutArg {
    Circular,
    Perpendicular,
}

#[derive(Copy, Clone, Debug, PartialEq, ValueEnum)]
enum TransportArg {
    InProcess,
    Threads,
    Tcp,
}

#[derive(Copy, Clone, Debug, PartialEq, ValueEnum)]
enum PredictorArg {
    ConstantVelocity,
    Social,
    External,
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    /// Experiment config (JSON). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "cmpc")]
    method: MethodArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Layout for generated scenarios; defaults to the config's or circular.
    #[arg(long, value_enum)]
    layout: Option<LayoutArg>,
    /// Overrides the config's pedestrian count.
    #[arg(long)]
    humans: Option<usize>,
    /// Trajectory log (JSON lines).
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "in-process")]
    transport: TransportArg,
    /// TCP port for `--transport tcp`; 0 picks a free one.
    #[arg(long, default_value_t = 0)]
    port: u16,
    /// With `--transport tcp`, wait for `crowdgame worker` processes instead
    /// of spawning worker threads.
    #[arg(long)]
    remote_workers: bool,
    /// Overrides the config's predictor.
    #[arg(long, value_enum)]
    predictor: Option<PredictorArg>,
    /// Command line of an external predictor speaking JSON lines on stdio.
    #[arg(long)]
    predictor_cmd: Option<String>,
    /// Address of an external predictor speaking JSON lines over TCP.
    #[arg(long)]
    predictor_addr: Option<String>,
    /// CMPC returns its last iterate instead of the lowest-potential one.
    #[arg(long)]
    strict_alg1: bool,
    /// Drop the flocking objective.
    #[arg(long)]
    no_flocking: bool,
}

#[derive(clap::Args, Debug)]
struct BatchArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    episodes: usize,
    /// Pedestrian counts: `7`, `5,7` or an inclusive range `5..9`.
    #[arg(long, default_value = "5")]
    humans: String,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "cmpc")]
    methods: Vec<MethodArg>,
    /// `on`, `off` or both.
    #[arg(long, value_delimiter = ',', default_value = "on")]
    flocking: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args, Debug)]
struct PlotArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args, Debug)]
struct WorkerArgs {
    /// Coordinator address, e.g. 127.0.0.1:7000.
    #[arg(long)]
    connect: String,
    #[arg(long)]
    robot: usize,
}

/// Usage errors exit with 2, everything else with 1.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let result = match cli.command {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Batch(a) => cmd_batch(a),
        Cmd::Plot(a) => cmd_plot(a),
        Cmd::Worker(a) => run_tcp_worker(a.connect.as_str(), a.robot, SolverOptions::default())
            .context("worker")
            .map_err(runtime),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, Failure> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) => ExperimentConfig::load(p)
            .with_context(|| format!("reading config {}", p.display()))
            .map_err(usage),
    }
}

fn build_predictor(
    args: &RunArgs,
    config: &ExperimentConfig,
) -> Result<Box<dyn Predictor>, Failure> {
    let kind = match args.predictor {
        Some(PredictorArg::ConstantVelocity) => PredictorKind::ConstantVelocity,
        Some(PredictorArg::Social) => match config.predictor {
            social @ PredictorKind::Social { .. } => social,
            PredictorKind::ConstantVelocity => PredictorKind::social_default(),
        },
        Some(PredictorArg::External) => {
            return match (&args.predictor_cmd, &args.predictor_addr) {
                (Some(cmd), None) => {
                    let mut parts = cmd.split_whitespace();
                    let program = parts
                        .next()
                        .ok_or_else(|| usage(anyhow!("empty --predictor-cmd")))?;
                    let mut command = Command::new(program);
                    command.args(parts);
                    let p = ExternalPredictor::spawn(command)
                        .with_context(|| format!("starting predictor `{cmd}`"))
                        .map_err(runtime)?;
                    Ok(Box::new(p))
                }
                (None, Some(addr)) => {
                    let p = ExternalPredictor::connect(addr.as_str())
                        .with_context(|| format!("connecting to predictor at {addr}"))
                        .map_err(runtime)?;
                    Ok(Box::new(p))
                }
                _ => Err(usage(anyhow!(
                    "--predictor external needs exactly one of --predictor-cmd and --predictor-addr"
                ))),
            };
        }
        None => config.predictor,
    };
    kind.build(&config.params).map_err(usage)
}

fn build_planner(args: &RunArgs, num_robots: usize) -> Result<Box<dyn Planner>, Failure> {
    let method = Method::from(args.method);
    if args.strict_alg1 && method != Method::Cmpc {
        return Err(usage(anyhow!("--strict-alg1 only applies to cmpc")));
    }
    if args.remote_workers && args.transport != TransportArg::Tcp {
        return Err(usage(anyhow!("--remote-workers needs --transport tcp")));
    }
    match method {
        Method::Cmpc => Ok(Box::new(CmpcPlanner {
            opts: CmpcOptions {
                strict_alg1: args.strict_alg1,
                ..Default::default()
            },
        })),
        Method::Dmpc if args.remote_workers => {
            let listener = TcpListener::bind(("0.0.0.0", args.port)).map_err(runtime)?;
            eprintln!(
                "waiting for {num_robots} workers on {}",
                listener.local_addr().map_err(runtime)?
            );
            let transport = TcpTransport::accept(&listener, num_robots, REMOTE_ACCEPT_TIMEOUT)
                .map_err(runtime)?;
            Ok(Box::new(DmpcPlanner {
                transport: Box::new(transport),
                opts: DmpcOptions::default(),
            }))
        }
        Method::Dmpc => {
            let kind = match args.transport {
                TransportArg::InProcess => TransportKind::InProcess,
                TransportArg::Threads => TransportKind::Threads,
                TransportArg::Tcp => TransportKind::Tcp { port: args.port },
            };
            let planner =
                DmpcPlanner::new(kind, num_robots, SolverOptions::default()).map_err(runtime)?;
            Ok(Box::new(planner))
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(n) = args.humans {
        config.num_humans = n;
    }
    if args.no_flocking {
        config.params = config.params.without_flocking();
    }
    let layout = match args.layout {
        Some(LayoutArg::Circular) => Layout::Circular,
        Some(LayoutArg::Perpendicular) => Layout::Perpendicular,
        None => config.layout_for(0),
    };
    let sc = config.scenario(args.seed, layout).map_err(usage)?;
    let predictor = build_predictor(&args, &config)?;
    let mut planner = build_planner(&args, sc.num_robots())?;
    let (result, rec) = run_episode(&sc, planner.as_mut(), predictor.as_ref()).map_err(runtime)?;
    if let Some(path) = &args.log {
        let file = File::create(path)
            .with_context(|| format!("creating {}", path.display()))
            .map_err(runtime)?;
        rec.write_jsonl(BufWriter::new(file)).map_err(runtime)?;
    }
    let text = serde_json::to_string_pretty(&result).map_err(runtime)?;
    println!("{text}");
    Ok(())
}

/// Parses `7`, `5,7` or `5..9` (inclusive).
fn parse_counts(s: &str) -> anyhow::Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        if let Some((a, b)) = part.split_once("..") {
            let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().parse()?);
            if a > b {
                bail!("empty range {part}");
            }
            out.extend(a..=b);
        } else {
            out.push(
                part.parse()
                    .with_context(|| format!("bad count `{part}`"))?,
            );
        }
    }
    Ok(out)
}

fn parse_flocking(values: &[String]) -> anyhow::Result<Vec<bool>> {
    values
        .iter()
        .map(|v| match v.trim().to_ascii_lowercase().as_str() {
            "on" => Ok(true),
            "off" => Ok(false),
            other => Err(anyhow!("--flocking takes on/off, got `{other}`")),
        })
        .collect()
}

fn threads_from_env() -> anyhow::Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .with_context(|| format!("{THREADS_ENV}={v}"))?;
            if n == 0 {
                bail!("{THREADS_ENV} must be at least 1");
            }
            Ok(Some(n))
        }
    }
}

fn cmd_batch(args: BatchArgs) -> Result<(), Failure> {
    let config = load_config(args.config.as_deref())?;
    let counts = parse_counts(&args.humans).map_err(usage)?;
    let flocking = parse_flocking(&args.flocking).map_err(usage)?;
    let threads = threads_from_env().map_err(usage)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))
        .map_err(runtime)?;

    let mut summaries = Vec::new();
    for &method in &args.methods {
        for &flock in &flocking {
            for &n in &counts {
                let spec = BatchSpec {
                    config: ExperimentConfig {
                        num_humans: n,
                        ..config.clone()
                    },
                    method: method.into(),
                    flocking: flock,
                    episodes: args.episodes,
                    base_seed: args.seed,
                    threads,
                };
                let (results, summary) = run_batch(&spec).map_err(runtime)?;
                let name = format!(
                    "{}_{}_h{n}.csv",
                    spec.method.as_str(),
                    if flock { "flock" } else { "noflock" }
                );
                let file = File::create(args.out.join(&name)).map_err(runtime)?;
                write_csv(&results, BufWriter::new(file)).map_err(runtime)?;
                let o = &summary.overall;
                println!(
                    "{name}: success {:.1}% collision {:.1}% discomfort {:.1}% travel {}",
                    o.success_rate,
                    o.collision_rate,
                    o.discomfort_rate,
                    o.mean_travel_time
                        .map_or("-".to_string(), |t| format!("{t:.2}s"))
                );
                summaries.push(summary);
            }
        }
    }
    let file = File::create(args.out.join("summary.json")).map_err(runtime)?;
    let mut w = BufWriter::new(file);
    write_summary(&summaries, &mut w).map_err(runtime)?;
    w.flush().map_err(runtime)?;
    Ok(())
}

fn cmd_plot(args: PlotArgs) -> Result<(), Failure> {
    let file = File::open(&args.log)
        .with_context(|| format!("opening {}", args.log.display()))
        .map_err(usage)?;
    let rec = SimRecord::read_jsonl(BufReader::new(file)).map_err(usage)?;
    let svg = plot::render_svg(&rec).map_err(|e| usage(anyhow!(e)))?;
    std::fs::write(&args.out, svg)
        .with_context(|| format!("writing {}", args.out.display()))
        .map_err(runtime)?;
    Ok(())
}
