use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use bdris_core::experiments::{noise_seed, receiver_seed, run_trial, score};
use bdris_core::identifiability::report;
use bdris_core::signal::add_noise;
use bdris_core::{run_sweep, Error, Fixture, ReceiverKind, Result, SystemConfig, TrialResult};

const EXIT_PARSE: u8 = 3;
const EXIT_VALIDATION: u8 = 4;
const EXIT_IDENTIFIABILITY: u8 = 5;
const EXIT_IO: u8 = 6;
const EXIT_NUMERICAL: u8 = 7;
const EXIT_DIMENSION: u8 = 8;

#[derive(Parser)]
#[command(
    name = "bdris",
    version,
    about = "Semi-blind channel and symbol estimation for BD-RIS assisted MIMO links",
    after_help = after_help()
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print identifiability bounds, the Kruskal check and per-iteration cost.
    Check {
        #[command(flatten)]
        common: Common,
        /// Rank of the surface-to-BS channel, if known to be deficient.
        #[arg(long)]
        rank_h: Option<usize>,
    },
    /// Run one seeded trial and print its result.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// pakron, tucker or zf-oracle.
        #[arg(long, default_value = "tucker")]
        receiver: String,
        /// Index into `snr_db`.
        #[arg(long, default_value_t = 0)]
        snr_index: usize,
        /// Run on a recorded fixture instead of a generated instance.
        #[arg(long, value_name = "FILE")]
        from_fixture: Option<PathBuf>,
    },
    /// Monte-Carlo sweep; writes trials.csv and report.json into --out.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated receivers.
        #[arg(long, default_value = "pakron,tucker")]
        receiver: String,
        /// Worker threads (0 = one per core).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Emit a deterministic noiseless instance (tensor plus truth) as JSON.
    Fixture {
        #[command(flatten)]
        common: Common,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Config file (flat `key = value` lines with dotted sections).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override a config key; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Do not add noise.
    #[arg(long)]
    noiseless: bool,
}

impl Common {
    fn load(&self) -> Result<SystemConfig> {
        let mut cfg = match &self.config {
            Some(path) => SystemConfig::from_file(path, &self.overrides)?,
            None => SystemConfig::parse("", &self.overrides)?,
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.noiseless |= self.noiseless;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn after_help() -> String {
    format!(
        "Configuration keys and their defaults:\n\n{}\nExit status: 0 success, {EXIT_PARSE} parse, {EXIT_VALIDATION} validation, \
         {EXIT_IDENTIFIABILITY} identifiability, {EXIT_IO} I/O, {EXIT_NUMERICAL} numerical, {EXIT_DIMENSION} dimension.",
        SystemConfig::default().to_text()
    )
}

#[derive(Serialize)]
struct FixtureRun {
    #[serde(flatten)]
    trial: TrialResult,
    /// Relative distance between the recorded tensor and the one rebuilt
    /// from the recorded truth.
    resynthesis_error: f64,
}

fn print_json(v: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn simulate_fixture(path: &Path, common: &Common, receiver: ReceiverKind, snr_index: usize) -> Result<()> {
    let fixture = Fixture::from_json(&std::fs::read_to_string(path)?)?;
    let mut cfg = fixture.config.clone();
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.noiseless |= common.noiseless;
    let resynthesis_error = fixture.resynthesis_error()?;
    let mut inst = fixture.instance()?;
    let snr_db = cfg.snr_db.get(snr_index).copied().unwrap_or(f64::INFINITY);
    if !cfg.noiseless {
        inst.received = add_noise(&inst.received, snr_db, noise_seed(cfg.seed, snr_index, 0));
    }
    let rx_seed = receiver_seed(&cfg, snr_index, receiver, 0);
    let trial = score(&inst, receiver, &cfg, rx_seed, snr_db, rx_seed)?;
    print_json(&FixtureRun {
        trial,
        resynthesis_error,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Check { common, rank_h } => {
            let cfg = common.load()?;
            print_json(&report(&cfg, rank_h))
        }
        Command::Simulate {
            common,
            receiver,
            snr_index,
            from_fixture,
        } => {
            let receiver: ReceiverKind = receiver.parse()?;
            if let Some(path) = from_fixture {
                return simulate_fixture(&path, &common, receiver, snr_index);
            }
            let cfg = common.load()?;
            if !cfg.ignore_identifiability {
                let d = (&cfg).into();
                match receiver {
                    ReceiverKind::Pakron => bdris_core::identifiability::require_pakron(d)?,
                    ReceiverKind::Tucker => bdris_core::identifiability::require_tucker(d)?,
                    ReceiverKind::ZfOracle => {}
                }
            }
            print_json(&run_trial(&cfg, snr_index, receiver, 0)?)
        }
        Command::Sweep {
            common,
            receiver,
            jobs,
            out,
        } => {
            let cfg = common.load()?;
            let receivers = receiver
                .split(',')
                .map(|r| r.trim().parse())
                .collect::<Result<Vec<ReceiverKind>>>()?;
            let rep = run_sweep(&cfg, &receivers, jobs)?;
            rep.write_to(&out)?;
            eprintln!(
                "wrote {} trials ({} failed) to {}",
                rep.trials.len(),
                rep.failures.len(),
                out.display()
            );
            Ok(())
        }
        Command::Fixture { common, out } => {
            let cfg = common.load()?;
            let json = Fixture::generate(&cfg)?.to_json()?;
            match out {
                Some(path) => std::fs::write(path, json)?,
                None => println!("{json}"),
            }
            Ok(())
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        "parse" => EXIT_PARSE,
        "validation" => EXIT_VALIDATION,
        "identifiability" => EXIT_IDENTIFIABILITY,
        "io" => EXIT_IO,
        "numerical" => EXIT_NUMERICAL,
        _ => EXIT_DIMENSION,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = serde_json::json!({
                "error": { "category": e.category(), "message": e.to_string() }
            });
            eprintln!("{body}");
            ExitCode::from(exit_code(&e))
        }
    }
}
