use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use shieldsim_core::dynamics::PhysicalParams;
use shieldsim_core::harness::{
    run_batch, summarize, write_csv, write_trajectory, BackupKind, ControllerKind, HumanKind, RunConfig,
};
use shieldsim_core::reachability::Transformer;
use shieldsim_core::scenarios::{BuiltinName, Scenario};
use shieldsim_core::shield::BackupSpec;
use shieldsim_core::verify::{isrec, shield_safety, soundness, VerifyReport};
use shieldsim_server::ServerConfig;

#[derive(Parser)]
#[command(name = "shieldsim", version, about = "Shielded robot and human driving simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch of seeded episodes and emit one CSV row per run.
    Run(RunArgs),
    /// Run a sampling check; exits nonzero on any violation.
    Verify(VerifyArgs),
    /// Serve live sessions over WebSocket at `/ws`.
    Serve(ServeArgs),
    /// Inspect and validate scenarios.
    Scenario {
        #[command(subcommand)]
        command: ScenarioCommand,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ControllerArg {
    Aggressive,
    Cem,
    Shield,
}

impl From<ControllerArg> for ControllerKind {
    fn from(c: ControllerArg) -> Self {
        match c {
            ControllerArg::Aggressive => ControllerKind::Aggressive,
            ControllerArg::Cem => ControllerKind::Cem,
            ControllerArg::Shield => ControllerKind::Shield,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum HumanArg {
    Social,
    CompliantRandom,
    CompliantGoal,
}

impl From<HumanArg> for HumanKind {
    fn from(h: HumanArg) -> Self {
        match h {
            HumanArg::Social => HumanKind::SocialForce,
            HumanArg::CompliantRandom => HumanKind::CompliantRandom,
            HumanArg::CompliantGoal => HumanKind::CompliantGoal,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BackupArg {
    Brake,
    PullOver,
    NoStop,
}

impl From<BackupArg> for BackupKind {
    fn from(b: BackupArg) -> Self {
        match b {
            BackupArg::Brake => BackupKind::Brake,
            BackupArg::PullOver => BackupKind::PullOver,
            BackupArg::NoStop => BackupKind::NoStop,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TransformerArg {
    Widening,
    Trigonometric,
}

impl From<TransformerArg> for Transformer {
    fn from(t: TransformerArg) -> Self {
        match t {
            TransformerArg::Widening => Transformer::Widening,
            TransformerArg::Trigonometric => Transformer::Trigonometric,
        }
    }
}

/// A builtin name or a path to a scenario file.
fn parse_scenario(s: &str) -> Result<Scenario, String> {
    if let Ok(name) = s.parse::<BuiltinName>() {
        return Ok(Scenario::builtin(name));
    }
    let path = Path::new(s);
    if path.is_file() {
        return Scenario::load(path).map_err(|e| e.to_string());
    }
    Err(format!(
        "unknown scenario `{s}`: not a builtin ({}) and not a file",
        BuiltinName::ALL.map(BuiltinName::as_str).join(", ")
    ))
}

#[derive(Args)]
struct RunArgs {
    /// Builtin scenario name or path to a scenario file.
    #[arg(long, value_parser = parse_scenario, default_value = "merge")]
    scenario: Scenario,
    #[arg(long, value_enum, default_value_t = ControllerArg::Shield)]
    controller: ControllerArg,
    #[arg(long, value_enum, default_value_t = HumanArg::Social)]
    human: HumanArg,
    #[arg(long, value_enum, default_value_t = BackupArg::Brake)]
    backup: BackupArg,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    runs: u64,
    /// Run `i` uses seed `seed + i`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV destination; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for one `run_<seed>.jsonl` trajectory file per run.
    #[arg(long, value_name = "DIR")]
    log_trajectories: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = TransformerArg::Trigonometric)]
    transformer: TransformerArg,
    /// Backup horizon in rounds.
    #[arg(long, default_value_t = BackupSpec::DEFAULT_HORIZON)]
    horizon: usize,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Exit nonzero if any run is unsafe.
    #[arg(long)]
    expect_safe: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum CheckArg {
    Soundness,
    Isrec,
    #[value(name = "theorem1")]
    ShieldSafety,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    check: CheckArg,
    /// Trials for `soundness`, recoverable states for `isrec`, runs per
    /// scenario and human for `theorem1`.
    #[arg(long)]
    samples: Option<usize>,
    /// Concrete rollouts per recoverable state (`isrec`).
    #[arg(long, default_value_t = 100)]
    rollouts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Transformer for `theorem1`; the other checks cover both.
    #[arg(long, value_enum, default_value_t = TransformerArg::Trigonometric)]
    transformer: TransformerArg,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    #[arg(long, value_parser = parse_scenario, default_value = "cross")]
    scenario: Scenario,
    #[arg(long, value_enum, default_value_t = ControllerArg::Shield)]
    controller: ControllerArg,
    #[arg(long, value_enum, default_value_t = BackupArg::Brake)]
    backup: BackupArg,
    #[arg(long, value_enum, default_value_t = TransformerArg::Trigonometric)]
    transformer: TransformerArg,
    /// Session `n` uses seed `seed + n`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum ScenarioCommand {
    /// List builtin scenario names.
    List,
    /// Print a builtin or file scenario in the on-disk format.
    Print {
        #[arg(value_parser = parse_scenario)]
        scenario: Scenario,
    },
    /// Check scenario files; exits nonzero if any is invalid.
    Validate {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Verify(args) => verify(args),
        Command::Serve(args) => serve(args),
        Command::Scenario { command } => scenario(command),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let mut cfg = RunConfig::new(args.scenario, args.controller.into(), args.human.into());
    cfg.backup = args.backup.into();
    cfg.run_count = usize::try_from(args.runs)?;
    cfg.seed = args.seed;
    cfg.transformer = args.transformer.into();
    cfg.horizon_k = args.horizon;
    cfg.log_trajectories = args.log_trajectories.is_some();
    let parallelism = args
        .parallelism
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let records = run_batch(&cfg, parallelism)?;

    if let Some(dir) = &args.log_trajectories {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for r in &records {
            let path = dir.join(format!("run_{}.jsonl", r.seed));
            let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(file);
            write_trajectory(r.trajectory.as_deref().unwrap_or_default(), &mut w)?;
            w.flush()?;
        }
    }
    let summary = summarize(&records);
    match &args.out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_csv(&records, BufWriter::new(file))?;
            println!("{summary}");
        }
        None => {
            write_csv(&records, io::stdout().lock())?;
            eprintln!("{summary}");
        }
    }
    if args.expect_safe && summary.unsafe_runs > 0 {
        eprintln!("error: {} unsafe runs with --expect-safe", summary.unsafe_runs);
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn verify(args: VerifyArgs) -> Result<ExitCode> {
    let p = PhysicalParams::default();
    let report: VerifyReport = match args.check {
        CheckArg::Soundness => soundness(args.samples.unwrap_or(100_000), args.seed, &p),
        CheckArg::Isrec => isrec(args.samples.unwrap_or(1000), args.rollouts, args.seed, &BackupSpec::default(), &p),
        CheckArg::ShieldSafety => shield_safety(args.samples.unwrap_or(20), args.seed, args.transformer.into())?,
    };
    println!("{report}");
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn serve(args: ServeArgs) -> Result<ExitCode> {
    tracing_subscriber::fmt().with_writer(io::stderr).init();
    let mut run = RunConfig::new(args.scenario, args.controller.into(), HumanKind::Remote);
    run.backup = args.backup.into();
    run.transformer = args.transformer.into();
    run.validate()?;
    let mut cfg = ServerConfig::new(run);
    cfg.base_seed = args.seed;
    let addr = SocketAddr::new(args.host, args.port);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        eprintln!("listening on ws://{}/ws", listener.local_addr()?);
        shieldsim_server::serve(listener, cfg).await?;
        Ok::<_, anyhow::Error>(())
    })?;
    Ok(ExitCode::SUCCESS)
}

fn scenario(command: ScenarioCommand) -> Result<ExitCode> {
    match command {
        ScenarioCommand::List => {
            for name in BuiltinName::ALL {
                println!("{name}");
            }
        }
        ScenarioCommand::Print { scenario } => print!("{}", scenario.to_text()),
        ScenarioCommand::Validate { paths } => {
            let mut bad = 0;
            for path in &paths {
                match Scenario::load(path) {
                    Ok(s) => println!("{}: ok ({})", path.display(), s.name),
                    Err(e) => {
                        bad += 1;
                        println!("{}: {e}", path.display());
                    }
                }
            }
            if bad > 0 {
                bail!("{bad} of {} scenario files invalid", paths.len());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
