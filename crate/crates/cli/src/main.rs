//! `oc`: train option-critic agents, inspect checkpoints and run the
//! gradient verification battery.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or configuration
//! error, 3 training abort.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use option_critic::checkpoint::Checkpoint;
use option_critic::experiment;
use option_critic::verify::{self, VerifyOptions};
use option_critic::{Error, RunConfig};

#[derive(Parser)]
#[command(name = "oc", version, about = "Option-critic experiments and gradient checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every run described by a config file.
    Train {
        config: PathBuf,
        /// Worker threads for concurrent runs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Termination probabilities of a four-rooms checkpoint as CSV.
    Heatmap {
        checkpoint: PathBuf,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the analytic gradients on random MDPs against finite differences.
    Verify {
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        max_states: usize,
        #[arg(long, default_value_t = 3)]
        max_actions: usize,
        #[arg(long, default_value_t = 3)]
        max_options: usize,
        /// Directory for replay files of failing instances (default: the
        /// output directory, or the working directory).
        #[arg(long)]
        replay_dir: Option<PathBuf>,
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
    /// Play a checkpoint with learning switched off.
    Eval {
        checkpoint: PathBuf,
        config: PathBuf,
        /// Write the episode CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const EXIT_VERIFY: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_ABORT: u8 = 3;

fn fail(err: &Error) -> ExitCode {
    eprintln!("oc: {err}");
    if matches!(err, Error::Run { .. }) {
        ExitCode::from(EXIT_ABORT)
    } else {
        ExitCode::from(EXIT_USAGE)
    }
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<(), Error> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io {
            path: p.clone(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn train(config: &PathBuf, jobs: usize) -> Result<(), Error> {
    let cfg = RunConfig::load(config)?;
    let dir = experiment::output_dir(&cfg);
    let outputs = experiment::train_all(&cfg, jobs)?;
    experiment::write_outputs(&dir, &outputs)?;
    for out in &outputs {
        if out.logs.is_empty() {
            println!("run {} (seed {}): no episodes", out.run, out.seed);
            continue;
        }
        let tail = &out.logs[out.logs.len().saturating_sub(100)..];
        let n = tail.len().max(1) as f64;
        let steps: f64 = tail.iter().map(|l| l.steps as f64).sum::<f64>() / n;
        let ret: f64 = tail.iter().map(|l| l.undiscounted_return).sum::<f64>() / n;
        println!(
            "run {} (seed {}): {} episodes, last {} mean steps {:.1}, mean return {:.2}",
            out.run,
            out.seed,
            out.logs.len(),
            tail.len(),
            steps,
            ret
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn run(cli: Cli) -> ExitCode {
    match cli.command {
        Command::Train { config, jobs } => match train(&config, jobs) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => fail(&e),
        },
        Command::Heatmap { checkpoint, out } => {
            let result = Checkpoint::load(&checkpoint)
                .and_then(|ck| experiment::heatmap_csv(&ck))
                .and_then(|csv| emit(&csv, out.as_ref()));
            match result {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(&e),
            }
        }
        Command::Verify {
            instances,
            seed,
            max_states,
            max_actions,
            max_options,
            replay_dir,
            corrupt_gradient,
        } => {
            if max_states < 2 || max_actions < 1 || max_options < 1 {
                eprintln!("oc: size caps need at least 2 states, 1 action and 1 option");
                return ExitCode::from(EXIT_USAGE);
            }
            let replay_dir = replay_dir
                .or_else(|| std::env::var_os("OC_OUTPUT_DIR").map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("."));
            let opts = VerifyOptions {
                instances,
                seed,
                max_states,
                max_actions,
                max_options,
                corrupt_gradient,
                replay_dir: Some(replay_dir),
            };
            match verify::run(&opts) {
                Ok(report) => {
                    print!("{}", report.text);
                    if report.passed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(EXIT_VERIFY)
                    }
                }
                Err(e) => {
                    eprintln!("oc: {e}");
                    ExitCode::from(EXIT_VERIFY)
                }
            }
        }
        Command::Eval {
            checkpoint,
            config,
            out,
        } => {
            let result = (|| {
                let cfg = RunConfig::load(&config)?;
                let ck = Checkpoint::load(&checkpoint)?;
                let logs = experiment::evaluate(&ck, &cfg).map_err(|e| match e {
                    Error::Checkpoint(_) | Error::Config(_) | Error::Io { .. } | Error::Parse { .. } => e,
                    other => Error::Run {
                        run: 0,
                        source: Box::new(other),
                    },
                })?;
                emit(&experiment::logs_csv(&logs), out.as_ref())?;
                let n = logs.len().max(1) as f64;
                eprintln!(
                    "{} episodes: mean steps {:.1}, mean return {:.2}",
                    logs.len(),
                    logs.iter().map(|l| l.steps as f64).sum::<f64>() / n,
                    logs.iter().map(|l| l.undiscounted_return).sum::<f64>() / n
                );
                Ok(())
            })();
            match result {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(&e),
            }
        }
    }
}

fn main() -> ExitCode {
    match Cli::try_parse() {
        Ok(cli) => run(cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            ExitCode::from(code)
        }
    }
}
