//! End-to-end run: sample settings, draw quantum outcomes, relay each outcome
//! through its party's torsion balance, then analyze both layers.

mod config;
mod ledger;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;

pub use config::{CausalityConfig, ExperimentConfig, OutputConfig, QuantumConfig, ScheduleLayout, Tolerances};
pub use ledger::{read_ledger, write_ledger};
pub use report::{emit_report, parse_report, LayerReport, RelaySummary, ReportFormat, RunReport};

use crate::behavior::{BehaviorTable, Bit};
use crate::causality::audit_schedule;
use crate::cavendish::{self, CavendishConfig, PendulumState, RelayRecord};
use crate::error::{Error, Result};
use crate::polytope::local_membership;
use crate::quantum::{behavior_from_state, sample_outcomes};
use crate::seed::{self, Stream};
use crate::stats::{chsh_significance, estimate_behavior, Layer, TrialRecord};

/// Execution knobs that must not influence results.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub ledger: Vec<TrialRecord>,
    pub report: RunReport,
    pub wall_clock: Duration,
}

/// One simulated trial including relay diagnostics that stay out of the ledger.
#[derive(Clone, Debug)]
struct TrialOutcome {
    record: TrialRecord,
    alice: RelayRecord,
    bob: RelayRecord,
}

struct TrialContext<'a> {
    master_seed: u64,
    behavior: &'a BehaviorTable,
    balance: &'a CavendishConfig,
}

fn stage<T>(trial_id: u64, stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Trial {
        trial_id,
        stage,
        source: Box::new(e),
    })
}

fn simulate_trial(ctx: &TrialContext<'_>, trial_id: u64) -> Result<TrialOutcome> {
    let seed = seed::derive(ctx.master_seed, trial_id);
    let mut settings_rng = seed::stream_rng(seed, Stream::Settings);
    let x: Bit = settings_rng.random_range(0..2);
    let y: Bit = settings_rng.random_range(0..2);
    let (a, b) = stage(
        trial_id,
        "quantum",
        sample_outcomes(ctx.behavior, x, y, &mut seed::stream_rng(seed, Stream::Quantum)),
    )?;
    let alice = stage(
        trial_id,
        "alice_relay",
        cavendish::relay(ctx.balance, a, &mut seed::stream_rng(seed, Stream::AliceRelay)),
    )?;
    let bob = stage(
        trial_id,
        "bob_relay",
        cavendish::relay(ctx.balance, b, &mut seed::stream_rng(seed, Stream::BobRelay)),
    )?;
    Ok(TrialOutcome {
        record: TrialRecord {
            trial_id,
            x,
            y,
            a,
            b,
            a_macro: alice.output_bit,
            b_macro: bob.output_bit,
            seed,
        },
        alice,
        bob,
    })
}

/// Trials in id order up to the first failure, and that failure.
fn simulate_trials(
    config: &ExperimentConfig,
    behavior: &BehaviorTable,
    options: RunOptions,
) -> Result<(Vec<TrialOutcome>, Option<Error>)> {
    let balance = config.effective_cavendish();
    let ctx = TrialContext {
        master_seed: config.master_seed,
        behavior,
        balance: &balance,
    };
    let work = || -> Vec<Result<TrialOutcome>> {
        (0..config.trials)
            .into_par_iter()
            .map(|id| simulate_trial(&ctx, id))
            .collect()
    };
    let results = match options.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::validation(format!("cannot build worker pool: {e}")))?
            .install(work),
        None => work(),
    };
    let mut outcomes = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => return Ok((outcomes, Some(e))),
        }
    }
    Ok((outcomes, None))
}

fn summarize_relays<'a>(relays: impl Iterator<Item = &'a RelayRecord>) -> RelaySummary {
    let mut s = RelaySummary {
        flipped: 0,
        max_settle_time: 0.0,
        equilibrium_range: [None, None],
    };
    for r in relays {
        if r.output_bit != r.input_bit {
            s.flipped += 1;
        }
        s.max_settle_time = s.max_settle_time.max(r.settle_time);
        let slot = &mut s.equilibrium_range[r.input_bit as usize];
        let th = r.equilibrium_angle;
        *slot = Some(match *slot {
            None => [th, th],
            Some([lo, hi]) => [lo.min(th), hi.max(th)],
        });
    }
    s
}

fn analyze_layer(records: &[TrialRecord], layer: Layer, config: &ExperimentConfig) -> Result<LayerReport> {
    let estimate = estimate_behavior(records, layer)?;
    let tol = &config.tolerances;
    let membership_tolerance = tol.membership_tol.max(tol.sigma_multiplier * estimate.max_stderr());
    let certificate = local_membership(&estimate.table, membership_tolerance)?;
    let significance = chsh_significance(&estimate)?;
    Ok(LayerReport {
        layer,
        chsh_significant: significance.z > tol.z_threshold,
        estimate,
        membership_tolerance,
        certificate,
        significance,
    })
}

fn assemble_report(config: &ExperimentConfig, behavior: BehaviorTable, outcomes: &[TrialOutcome]) -> Result<RunReport> {
    let records: Vec<TrialRecord> = outcomes.iter().map(|o| o.record).collect();
    let schedule = config.causality.schedule()?;
    Ok(RunReport {
        config: config.clone(),
        trials: records.len() as u64,
        quantum_behavior: behavior,
        quantum_layer: analyze_layer(&records, Layer::Quantum, config)?,
        macro_layer: analyze_layer(&records, Layer::Macro, config)?,
        alice_relay: summarize_relays(outcomes.iter().map(|o| &o.alice)),
        bob_relay: summarize_relays(outcomes.iter().map(|o| &o.bob)),
        audit: audit_schedule(&schedule, config.causality.mode, config.causality.speed_of_light)?,
    })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    run_experiment_with(config, RunOptions::default())
}

pub fn run_experiment_with(config: &ExperimentConfig, options: RunOptions) -> Result<RunOutput> {
    let started = Instant::now();
    config.validate()?;
    let behavior = behavior_from_state(&config.quantum.state.build()?, &config.quantum.settings)?;
    let (outcomes, failure) = simulate_trials(config, &behavior, options)?;
    if let Some(e) = failure {
        return Err(e);
    }
    let report = assemble_report(config, behavior, &outcomes)?;
    Ok(RunOutput {
        ledger: outcomes.into_iter().map(|o| o.record).collect(),
        report,
        wall_clock: started.elapsed(),
    })
}

/// Files written by [`execute`].
#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub ledger: PathBuf,
    pub report_json: PathBuf,
    pub report_text: PathBuf,
    pub results_csv: PathBuf,
}

impl RunArtifacts {
    pub fn in_dir(dir: &Path) -> Self {
        RunArtifacts {
            ledger: dir.join("ledger.csv"),
            report_json: dir.join("report.json"),
            report_text: dir.join("report.txt"),
            results_csv: dir.join("results.csv"),
        }
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Runs and persists ledger, reports and results CSV under `out_dir`. On a trial
/// failure the ledger keeps every earlier trial plus a truncation marker.
pub fn execute(config: &ExperimentConfig, options: RunOptions, out_dir: &Path) -> Result<(RunOutput, RunArtifacts)> {
    let started = Instant::now();
    config.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let artifacts = RunArtifacts::in_dir(out_dir);

    let behavior = behavior_from_state(&config.quantum.state.build()?, &config.quantum.settings)?;
    let (outcomes, failure) = simulate_trials(config, &behavior, options)?;
    let records: Vec<TrialRecord> = outcomes.iter().map(|o| o.record).collect();

    let mut ledger_bytes = Vec::new();
    write_ledger(&mut ledger_bytes, &records, failure.as_ref())?;
    write_file(&artifacts.ledger, &ledger_bytes)?;
    if let Some(e) = failure {
        return Err(e);
    }

    let report = assemble_report(config, behavior, &outcomes)?;
    write_file(
        &artifacts.report_json,
        emit_report(&report, ReportFormat::Structured)?.as_bytes(),
    )?;
    write_file(
        &artifacts.report_text,
        emit_report(&report, ReportFormat::Text)?.as_bytes(),
    )?;
    let mut results = Vec::new();
    crate::stats::write_results_csv(
        &mut results,
        &[
            (
                Layer::Quantum,
                &report.quantum_layer.estimate,
                &report.quantum_layer.significance,
            ),
            (
                Layer::Macro,
                &report.macro_layer.estimate,
                &report.macro_layer.significance,
            ),
        ],
    )?;
    write_file(&artifacts.results_csv, &results)?;

    Ok((
        RunOutput {
            ledger: records,
            report,
            wall_clock: started.elapsed(),
        },
        artifacts,
    ))
}

/// Writes `trajectory_bit0.csv` and `trajectory_bit1.csv` for the effective
/// balance starting at rest.
pub fn export_trajectories(config: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let balance = config.effective_cavendish();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut paths = Vec::new();
    for bit in [0, 1] {
        let traj = cavendish::integrate_pendulum(&balance, PendulumState::at_rest(), bit, balance.dt, balance.t_max)?;
        let path = out_dir.join(format!("trajectory_bit{bit}.csv"));
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        traj.write_csv(std::io::BufWriter::new(file))?;
        paths.push(path);
    }
    Ok(paths)
}
