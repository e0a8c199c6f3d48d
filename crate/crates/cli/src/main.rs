use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bellcav_core::causality::{self, AuditMode, SPEED_OF_LIGHT};
use bellcav_core::lhv::{self, ApparatusModel};
use bellcav_core::orchestrator::{self, ExperimentConfig, RunOptions};
use bellcav_core::polytope::{self, DeterministicStrategy};
use bellcav_core::{BehaviorTable, Error};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "bellcav",
    version,
    about = "Bell test outcomes relayed through torsion balances"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline from a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; overrides `output.dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (results do not depend on this).
        #[arg(long)]
        workers: Option<usize>,
        /// Also write one pointer trajectory CSV per orientation bit.
        #[arg(long)]
        trajectories: bool,
    },
    /// Test a behavior table (JSON) for membership in the local polytope.
    Falsify {
        #[arg(long)]
        behavior: PathBuf,
        #[arg(long, default_value_t = polytope::DEFAULT_TOL)]
        tol: f64,
    },
    /// Audit a schedule CSV against light-cone constraints.
    Causality {
        #[arg(long)]
        schedule: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Signal speed in m/s.
        #[arg(long, default_value_t = SPEED_OF_LIGHT)]
        c: f64,
    },
    /// Write the 16 deterministic vertices of the local polytope as JSON.
    Vertices {
        #[arg(long)]
        out: PathBuf,
    },
    /// Reduce an apparatus model (JSON) to standard form and print both behaviors.
    Reduce {
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Strict,
    Relaxed,
}

impl From<ModeArg> for AuditMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Strict => AuditMode::Strict,
            ModeArg::Relaxed => AuditMode::Relaxed,
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::Validation(_) | Error::DimensionMismatch { .. } | Error::Parse(_) => 1,
        Error::Inconclusive(_) => 3,
        _ => 2,
    }
}

fn read_text(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| Error::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, Error> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Run {
            config,
            trials,
            seed,
            out,
            workers,
            trajectories,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(n) = trials {
                cfg.trials = n;
            }
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            let dir = out.unwrap_or_else(|| cfg.output.dir.clone());
            let (output, artifacts) = orchestrator::execute(&cfg, RunOptions { workers }, &dir)?;
            if trajectories {
                for path in orchestrator::export_trajectories(&cfg, &dir)? {
                    eprintln!("wrote {}", path.display());
                }
            }
            print!("{}", read_text(&artifacts.report_text)?);
            eprintln!(
                "wrote {} ({} trials in {:.2} s)",
                dir.display(),
                output.ledger.len(),
                output.wall_clock.as_secs_f64()
            );
        }
        Command::Falsify { behavior, tol } => {
            let table: BehaviorTable = parse_json(&behavior)?;
            let cert = polytope::local_membership(&table, tol)?;
            println!("{}", to_json(&cert)?);
        }
        Command::Causality { schedule, mode, c } => {
            let file = fs::File::open(&schedule).map_err(|source| Error::Io {
                path: schedule.clone(),
                source,
            })?;
            let events = causality::read_schedule_csv(file)?;
            let verdict = causality::audit_schedule(&events, mode.into(), c)?;
            println!("{}", to_json(&verdict)?);
        }
        Command::Vertices { out } => {
            let vertices: Vec<serde_json::Value> = DeterministicStrategy::all()
                .zip(polytope::enumerate_deterministic_vertices())
                .map(|(strategy, behavior)| {
                    serde_json::json!({
                        "index": strategy.index(),
                        "strategy": strategy,
                        "chsh": polytope::chsh_value(&behavior),
                        "behavior": behavior,
                    })
                })
                .collect();
            write_text(&out, &(to_json(&vertices)? + "\n"))?;
            eprintln!("wrote {} vertices to {}", vertices.len(), out.display());
        }
        Command::Reduce { model } => {
            let apparatus: ApparatusModel = parse_json(&model)?;
            let reduced = lhv::reduce_apparatus_model(&apparatus)?;
            let direct = lhv::apparatus_behavior_direct(&apparatus)?;
            let via = lhv::behavior_from_lhv(&reduced)?;
            let report = serde_json::json!({
                "reduced_model": reduced,
                "direct_behavior": direct,
                "max_abs_diff": direct.max_abs_diff(&via),
            });
            println!("{}", to_json(&report)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
