//! Outer solver loop, baselines, experiment orchestration, and the CLI.
//!
//! One [`papa_run`] alternates the two stages for a fixed number of outer
//! iterations and records a [`ConvergenceTrace`]. Three reference modes
//! share the loop: `random_phase` keeps the initial surface phases,
//! `no_ris` removes the surfaces entirely, and `lower_bound` replaces the
//! constrained phase regression with an unconstrained projection. On top
//! of that sit [`sweep_sinr`] (total power across a range of SINR
//! targets) and a small `run` / `sweep` / `compare` command-line surface.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use rand_chacha::ChaCha12Rng;
use rand_core::SeedableRng;

use crate::phase_opt::{lower_bound_stage, phase_stage, ScaConfig};
use crate::power_filter::{stage1_solve, Stage1Config, Stage1Status};
use crate::rand_util::uniform_phase;
use crate::scenario::{synthesize_channels, Scenario};
use crate::system::{sinr, sync_signatures, ModelKind, PhaseBank, SolverState};
use crate::{Error, Result};

/// Reference modes that reuse the outer loop with the phase stage altered.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Baseline {
    /// Full solver: both stages run every outer iteration.
    None,
    /// Surfaces removed; users reach the station over direct channels only.
    NoRis,
    /// Surfaces present but frozen at the randomly drawn initial phases.
    RandomPhase,
    /// Phase stage replaced by the unconstrained subspace projection.
    LowerBound,
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Baseline::None => "none",
            Baseline::NoRis => "no_ris",
            Baseline::RandomPhase => "random_phase",
            Baseline::LowerBound => "lower_bound",
        })
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Baseline::None),
            "no_ris" => Ok(Baseline::NoRis),
            "random_phase" => Ok(Baseline::RandomPhase),
            "lower_bound" => Ok(Baseline::LowerBound),
            other => Err(Error::Config(format!(
                "baseline must be \"none\", \"no_ris\", \"random_phase\", or \
                 \"lower_bound\", got \"{other}\""
            ))),
        }
    }
}

/// Everything one solver run needs: the network plus all solver knobs.
#[derive(Clone, Debug)]
pub struct RunConfig {
    /// Network instance to solve.
    pub scenario: Scenario,
    /// Signature model for the full solver and the lower bound.
    pub model: ModelKind,
    /// Number of outer two-stage iterations.
    pub outer_iters: usize,
    /// Inner power/filter iteration settings.
    pub stage1: Stage1Config,
    /// Phase-regression settings.
    pub sca: ScaConfig,
    /// Use the floor-multiplier target rescaled to the norm bound instead
    /// of solving the norm constraint by bisection.
    pub accelerated: bool,
    /// Reference mode; `Baseline::None` is the full solver.
    pub baseline: Baseline,
}

impl RunConfig {
    /// Default solver settings (personal model, 50 outer iterations,
    /// accelerated targets) for the given network.
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            model: ModelKind::Personal,
            outer_iters: 50,
            stage1: Stage1Config::default(),
            sca: ScaConfig::default(),
            accelerated: true,
            baseline: Baseline::None,
        }
    }

    /// The model the run actually uses: `no_ris` forces direct channels
    /// regardless of the configured model.
    pub fn effective_model(&self) -> ModelKind {
        if self.baseline == Baseline::NoRis {
            ModelKind::Direct
        } else {
            self.model
        }
    }

    /// Name for this (model, baseline) combination in file names, sweep
    /// rows, and log lines.
    pub fn variant_label(&self) -> &'static str {
        match self.baseline {
            Baseline::NoRis => "no_ris",
            Baseline::RandomPhase => "random_phase",
            Baseline::LowerBound => "lower_bound",
            Baseline::None => match self.model {
                ModelKind::Personal => "papa_personal",
                ModelKind::Parallel => "papa_parallel",
                ModelKind::Direct => "no_ris",
            },
        }
    }

    fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.outer_iters == 0 {
            return Err(Error::Config("outer_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// One outer iteration's record, taken right after the power stage.
///
/// `total_power`, `powers`, and `min_sinr_ratio` describe the state the
/// power stage left behind, before the phase stage moves the signatures
/// out from under it. `wall_time_s` is cumulative since the run started.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    /// Outer iteration index, starting at 0.
    pub iter: usize,
    /// Sum of all transmit powers in watts.
    pub total_power: f64,
    /// Per-user transmit powers in watts.
    pub powers: Vec<f64>,
    /// Minimum over users of achieved SINR over its target; 1 means every
    /// target is met exactly.
    pub min_sinr_ratio: f64,
    /// Seconds elapsed since the run began.
    pub wall_time_s: f64,
}

/// Per-iteration history of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTrace {
    /// User count, fixing the number of power columns even when no row
    /// was recorded.
    pub n_users: usize,
    /// One row per completed outer iteration, in order.
    pub rows: Vec<TraceRow>,
}

impl ConvergenceTrace {
    /// Total power of the last recorded iteration, if any.
    pub fn final_total_power(&self) -> Option<f64> {
        self.rows.last().map(|r| r.total_power)
    }

    /// True when both traces hold identical solver data. Wall-clock
    /// times are ignored; everything else must match bit for bit.
    pub fn data_eq(&self, other: &Self) -> bool {
        self.n_users == other.n_users
            && self.rows.len() == other.rows.len()
            && self.rows.iter().zip(&other.rows).all(|(a, b)| {
                a.iter == b.iter
                    && a.total_power.to_bits() == b.total_power.to_bits()
                    && a.powers.len() == b.powers.len()
                    && a.powers
                        .iter()
                        .zip(&b.powers)
                        .all(|(x, y)| x.to_bits() == y.to_bits())
                    && a.min_sinr_ratio.to_bits() == b.min_sinr_ratio.to_bits()
            })
    }

    /// Render the trace as CSV with a fixed header and 17-significant-
    /// digit floats (lossless for `f64` round-trips).
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("iter,total_power");
        for i in 0..self.n_users {
            out.push_str(&format!(",p_{i}"));
        }
        out.push_str(",min_sinr_ratio,wall_time_s\n");
        for row in &self.rows {
            out.push_str(&format!("{},{}", row.iter, csv_float(row.total_power)));
            for p in &row.powers {
                out.push(',');
                out.push_str(&csv_float(*p));
            }
            out.push(',');
            out.push_str(&csv_float(row.min_sinr_ratio));
            out.push(',');
            out.push_str(&csv_float(row.wall_time_s));
            out.push('\n');
        }
        out
    }

    /// Write [`Self::to_csv_string`] to a file.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

/// Everything a finished run leaves behind.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    /// Per-iteration history.
    pub trace: ConvergenceTrace,
    /// Final powers, filters, and signatures.
    pub state: SolverState,
    /// Final surface phases (initial ones for the frozen baselines; not
    /// meaningful under `lower_bound`, whose signatures leave the
    /// phase-realizable set).
    pub phases: PhaseBank,
}

/// Alternate the power and phase stages for the configured number of
/// outer iterations.
///
/// Surface phases start uniform on (-pi, pi] from the scenario's seed, so
/// every variant sharing a scenario also shares its initial phases and
/// channels. Each iteration runs the power stage to its fixed point,
/// snapshots powers and SINR margins into the trace, then applies the
/// phase stage (skipped for `no_ris` / `random_phase`, replaced by the
/// projection for `lower_bound`).
///
/// If the power stage ever diverges the run stops with
/// [`Error::Infeasible`] carrying the rows recorded so far.
pub fn papa_run(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let scenario = &cfg.scenario;
    let model = cfg.effective_model();
    let channels = synthesize_channels(scenario)?;

    let mut rng = ChaCha12Rng::seed_from_u64(scenario.seed);
    let mut phases = PhaseBank::zeros(scenario.n_users, scenario.n_ris_elements);
    for row in &mut phases.phi {
        for phi in row.iter_mut() {
            *phi = uniform_phase(&mut rng);
        }
    }

    let mut state = SolverState::new(
        scenario.n_users,
        scenario.n_bs_antennas,
        scenario.noise_power,
    );
    sync_signatures(&mut state, &channels, &phases, model)?;

    let started = Instant::now();
    let mut trace = ConvergenceTrace {
        n_users: scenario.n_users,
        rows: Vec::with_capacity(cfg.outer_iters),
    };
    for t in 0..cfg.outer_iters {
        let status = stage1_solve(
            &mut state,
            &cfg.stage1,
            &scenario.sinr_targets,
            scenario.noise_power,
        )?;
        if status == Stage1Status::Infeasible {
            return Err(Error::Infeasible { iter: t, trace });
        }

        let total_power = state.total_power();
        let powers = state.p.clone();
        let mut min_sinr_ratio = f64::INFINITY;
        for i in 0..scenario.n_users {
            let ratio = sinr(&state, i, scenario.noise_power)? / scenario.sinr_targets[i];
            min_sinr_ratio = min_sinr_ratio.min(ratio);
        }

        match cfg.baseline {
            Baseline::None => phase_stage(
                &mut state,
                &channels,
                &mut phases,
                model,
                &cfg.sca,
                cfg.accelerated,
            )?,
            Baseline::LowerBound => {
                lower_bound_stage(&mut state, &channels, &phases, model, cfg.accelerated)?
            }
            Baseline::NoRis | Baseline::RandomPhase => {}
        }

        trace.rows.push(TraceRow {
            iter: t,
            total_power,
            powers,
            min_sinr_ratio,
            wall_time_s: started.elapsed().as_secs_f64(),
        });
    }
    Ok(RunOutcome { trace, state, phases })
}

/// The four curves of the power-versus-target comparison, in row order.
const SWEEP_VARIANTS: [(ModelKind, Baseline); 4] = [
    (ModelKind::Personal, Baseline::None),
    (ModelKind::Parallel, Baseline::None),
    (ModelKind::Personal, Baseline::RandomPhase),
    (ModelKind::Direct, Baseline::NoRis),
];

/// One (target, variant) cell of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    /// Common SINR target in dB.
    pub target_db: f64,
    /// Variant label, e.g. `papa_personal`.
    pub variant: &'static str,
    /// Final total power in watts, or `None` when the targets are
    /// infeasible for this variant.
    pub total_power: Option<f64>,
}

/// Sweep results, one cell per (target, variant), targets ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    /// All cells, grouped by target in ascending order.
    pub cells: Vec<SweepCell>,
}

impl SweepTable {
    /// Cells of one variant, in target order.
    pub fn column(&self, variant: &str) -> Vec<&SweepCell> {
        self.cells.iter().filter(|c| c.variant == variant).collect()
    }

    /// Render the table as CSV. Infeasible cells carry `nan` power and
    /// status `infeasible`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("target_db,variant,total_power,status\n");
        for cell in &self.cells {
            let (power, status) = match cell.total_power {
                Some(p) => (csv_float(p), "ok"),
                None => ("nan".to_string(), "infeasible"),
            };
            out.push_str(&format!(
                "{},{},{power},{status}\n",
                cell.target_db, cell.variant
            ));
        }
        out
    }

    /// Write [`Self::to_csv_string`] to a file.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

/// Solve every variant at every SINR target and tabulate final total
/// powers.
///
/// Targets are given in dB and processed in ascending order; all users
/// share each target. Every variant at one target reuses the same
/// scenario (hence seed, channels, and initial phases), so cells differ
/// only in the algorithm. An infeasible cell is recorded as such and the
/// sweep moves on; `cfg`'s own model/baseline fields are ignored in
/// favor of the four standard variants.
pub fn sweep_sinr(cfg: &RunConfig, targets_db: &[f64]) -> Result<SweepTable> {
    if targets_db.is_empty() {
        return Err(Error::Config("sweep needs at least one SINR target".into()));
    }
    if let Some(bad) = targets_db.iter().find(|t| !t.is_finite()) {
        return Err(Error::Config(format!("SINR target {bad} dB is not finite")));
    }
    let mut targets = targets_db.to_vec();
    targets.sort_by(f64::total_cmp);

    let mut cells = Vec::with_capacity(targets.len() * SWEEP_VARIANTS.len());
    for &db in &targets {
        let mut scenario = cfg.scenario.clone();
        scenario.set_common_target(10f64.powf(db / 10.0));
        for (model, baseline) in SWEEP_VARIANTS {
            let mut cell_cfg = cfg.clone();
            cell_cfg.scenario = scenario.clone();
            cell_cfg.model = model;
            cell_cfg.baseline = baseline;
            let total_power = match papa_run(&cell_cfg) {
                Ok(outcome) => outcome.trace.final_total_power(),
                Err(Error::Infeasible { .. }) => None,
                Err(e) => return Err(e),
            };
            cells.push(SweepCell {
                target_db: db,
                variant: cell_cfg.variant_label(),
                total_power,
            });
        }
    }
    Ok(SweepTable { cells })
}

/// Format a float with 17 significant digits, enough to reproduce the
/// exact bit pattern on parse.
fn csv_float(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Parser)]
#[command(
    name = "ris-uplink",
    about = "Uplink power minimization with reconfigurable intelligent surfaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one configuration and write its convergence trace as CSV.
    Run {
        /// Scenario configuration file (key = value lines).
        #[arg(long)]
        config: PathBuf,
        /// Signature model: personal or parallel.
        #[arg(long, default_value = "personal")]
        model: String,
        /// Reference mode: none, no_ris, random_phase, or lower_bound.
        #[arg(long, default_value = "none")]
        baseline: String,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate final total power over a list of SINR targets.
    Sweep {
        /// Scenario configuration file (key = value lines).
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated SINR targets in dB, e.g. "0,2,5,8".
        #[arg(long = "targets-db")]
        targets_db: String,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the solver and its three references on one scenario and write
    /// the four convergence traces into a directory.
    Compare {
        /// Scenario configuration file (key = value lines).
        #[arg(long)]
        config: PathBuf,
        /// Output directory for <variant>.csv files.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Entry point behind the binary: parses arguments (binary name already
/// stripped), runs the chosen subcommand, and maps the outcome to an
/// exit code — 0 on success, 1 on configuration or solver errors, 2 when
/// the SINR targets are infeasible.
pub fn cli_main<I: Iterator<Item = String>>(args: I) -> i32 {
    let argv = std::iter::once("ris-uplink".to_string()).chain(args);
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Infeasible { .. } => 2,
                _ => 1,
            }
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Run { config, model, baseline, out } => {
            let scenario = Scenario::from_config_file(&config)?;
            let mut cfg = RunConfig::new(scenario);
            cfg.model = model.parse()?;
            cfg.baseline = baseline.parse()?;
            match papa_run(&cfg) {
                Ok(outcome) => {
                    outcome.trace.write_csv(&out)?;
                    println!(
                        "{}: {} iterations, final total power {:.6e} W -> {}",
                        cfg.variant_label(),
                        outcome.trace.rows.len(),
                        outcome.trace.final_total_power().unwrap_or(f64::NAN),
                        out.display()
                    );
                    Ok(0)
                }
                Err(Error::Infeasible { iter, trace }) => {
                    trace.write_csv(&out)?;
                    eprintln!(
                        "error: SINR targets are infeasible (power diverged at outer \
                         iteration {iter}); partial trace written to {}",
                        out.display()
                    );
                    Ok(2)
                }
                Err(e) => Err(e),
            }
        }
        Command::Sweep { config, targets_db, out } => {
            let scenario = Scenario::from_config_file(&config)?;
            let targets = parse_targets_db(&targets_db)?;
            let table = sweep_sinr(&RunConfig::new(scenario), &targets)?;
            table.write_csv(&out)?;
            let infeasible = table.cells.iter().filter(|c| c.total_power.is_none()).count();
            println!(
                "{} cells ({} infeasible) -> {}",
                table.cells.len(),
                infeasible,
                out.display()
            );
            Ok(0)
        }
        Command::Compare { config, out } => {
            let scenario = Scenario::from_config_file(&config)?;
            std::fs::create_dir_all(&out)?;
            let mut exit = 0;
            for (model, baseline) in [
                (ModelKind::Personal, Baseline::None),
                (ModelKind::Personal, Baseline::RandomPhase),
                (ModelKind::Direct, Baseline::NoRis),
                (ModelKind::Personal, Baseline::LowerBound),
            ] {
                let mut cfg = RunConfig::new(scenario.clone());
                cfg.model = model;
                cfg.baseline = baseline;
                let label = cfg.variant_label();
                let path = out.join(format!("{label}.csv"));
                match papa_run(&cfg) {
                    Ok(outcome) => {
                        outcome.trace.write_csv(&path)?;
                        println!(
                            "{label}: final total power {:.6e} W -> {}",
                            outcome.trace.final_total_power().unwrap_or(f64::NAN),
                            path.display()
                        );
                    }
                    Err(Error::Infeasible { iter, trace }) => {
                        trace.write_csv(&path)?;
                        println!("{label}: infeasible at outer iteration {iter}");
                        exit = 2;
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok(exit)
        }
    }
}

fn parse_targets_db(list: &str) -> Result<Vec<f64>> {
    let mut targets = Vec::new();
    for part in list.split(',') {
        let part = part.trim();
        if part.is_empty() {
            return Err(Error::Config(format!("empty entry in target list \"{list}\"")));
        }
        let db: f64 = part
            .parse()
            .map_err(|_| Error::Config(format!("bad SINR target \"{part}\"")))?;
        targets.push(db);
    }
    Ok(targets)
}
