//! Command-line front end.
//!
//! Exit codes: 0 success, 1 internal error, 2 invalid input (including
//! argument parsing), 3 numerical failure.

use std::ffi::OsString;
use std::io::Write;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::analytic::SetupParams;
use crate::design::{self, ScanRange, Spacing};
use crate::error::{Error, Result};
use crate::fock_oracle::{self, OracleConfig, SweepPoint, DEFAULT_N_MAX, DEFAULT_TAIL_TOLERANCE};
use crate::montecarlo::{self, TrialPlan};
use crate::output::{self, fmt_sig9, Format};
use crate::spectral::{overlap_t, ModeFile, StateFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const THREADS_ENV: &str = "HOMPROBE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "homprobe", version, about = "Hong-Ou-Mandel overlap measurement with a weak coherent probe")]
pub struct Cli {
    /// Output format for tables.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,

    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl From<OutputFormat> for Format {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Csv => Format::Csv,
            OutputFormat::Json => Format::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpacingArg {
    Linear,
    Log,
}

impl From<SpacingArg> for Spacing {
    fn from(s: SpacingArg) -> Self {
        match s {
            SpacingArg::Linear => Spacing::Linear,
            SpacingArg::Log => Spacing::Logarithmic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Default,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mode overlap T = <u|rho|u> of a photon state and a probe mode.
    Overlap {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        mode: PathBuf,
        /// Delay applied to the probe mode, in inverse grid units.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        delay: f64,
    },
    /// Coincidence probability per pulse pair.
    Rate(ScalarArgs),
    /// Dip visibility 1 - R_C(T)/R_C(0).
    Visibility(ScalarArgs),
    /// Correction factor c_f = V/T.
    CorrectionFactor(ScalarArgs),
    /// Overlap, visibility and rate as the probe is delayed.
    DipScan {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        mode: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        tau_lo: f64,
        #[arg(long, allow_negative_numbers = true)]
        tau_hi: f64,
        #[arg(long)]
        tau_steps: usize,
        #[command(flatten)]
        setup: SetupArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// c_f and R_C(0) over a grid of effective parameters.
    Contour {
        #[command(flatten)]
        dark: DarkArgs,
        #[arg(long)]
        eta_p_lo: f64,
        #[arg(long)]
        eta_p_hi: f64,
        #[arg(long)]
        eta_p_steps: usize,
        #[arg(long)]
        intensity_lo: f64,
        #[arg(long)]
        intensity_hi: f64,
        #[arg(long)]
        intensity_steps: usize,
        #[arg(long, value_enum, default_value_t = SpacingArg::Linear)]
        intensity_spacing: SpacingArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Probe intensity that minimizes the relative overlap uncertainty.
    Optimize {
        #[arg(long)]
        eta_p: f64,
        #[command(flatten)]
        dark: DarkArgs,
        /// Upper end of the searched intensity range.
        #[arg(long, default_value_t = design::DEFAULT_X_HI)]
        x_hi: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Randomized comparison of the Fock-space oracle with the closed form.
    OracleCheck {
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long, default_value_t = DEFAULT_N_MAX)]
        n_max: usize,
        #[arg(long, default_value_t = DEFAULT_TAIL_TOLERANCE)]
        tail_tol: f64,
        #[arg(long, default_value_t = 100)]
        sweep_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write every sweep point.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulated counting runs and the resulting overlap estimates.
    MonteCarlo {
        #[command(flatten)]
        setup: SetupArgs,
        #[arg(long)]
        overlap: f64,
        #[arg(long)]
        pulses: u64,
        #[arg(long)]
        replicas: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, Args)]
#[group(id = "dark", required = true, multiple = false)]
pub struct DarkArgs {
    /// Probability of no dark count per detection window.
    #[arg(long)]
    pub xi: Option<f64>,
    /// Probability of a dark count per detection window (1 - xi).
    #[arg(long)]
    pub dark_count_prob: Option<f64>,
}

impl DarkArgs {
    pub fn xi(&self) -> Result<f64> {
        match (self.xi, self.dark_count_prob) {
            (Some(xi), None) => Ok(xi),
            (None, Some(d)) if (0.0..1.0).contains(&d) => Ok(1.0 - d),
            (None, Some(d)) => Err(Error::param("dark_count_prob", d, "must be in [0, 1)")),
            _ => unreachable!("clap enforces exactly one of --xi, --dark-count-prob"),
        }
    }
}

#[derive(Debug, Clone, Copy, Args)]
pub struct SetupArgs {
    /// Probability that the source emits a photon.
    #[arg(long)]
    pub p: f64,
    /// Detector efficiency.
    #[arg(long)]
    pub eta: f64,
    #[command(flatten)]
    pub dark: DarkArgs,
    /// Mean photon number of the coherent probe.
    #[arg(long)]
    pub beta_sq: f64,
}

impl SetupArgs {
    pub fn params(&self) -> Result<SetupParams> {
        SetupParams::new(self.p, self.eta, self.dark.xi()?, self.beta_sq)
    }
}

#[derive(Debug, Clone, Copy, Args)]
pub struct ScalarArgs {
    #[command(flatten)]
    pub setup: SetupArgs,
    /// Mode overlap T.
    #[arg(long, default_value_t = 1.0)]
    pub overlap: f64,
}

#[derive(Serialize)]
struct ScalarRow {
    #[serde(serialize_with = "output::sig9")]
    value: f64,
}

#[derive(Serialize)]
struct SweepRow {
    #[serde(serialize_with = "output::sig9")]
    p: f64,
    #[serde(serialize_with = "output::sig9")]
    eta: f64,
    #[serde(serialize_with = "output::sig9")]
    xi: f64,
    #[serde(serialize_with = "output::sig9")]
    beta_sq: f64,
    #[serde(serialize_with = "output::sig9")]
    overlap: f64,
    #[serde(serialize_with = "output::sig9")]
    oracle: f64,
    #[serde(serialize_with = "output::sig9")]
    analytic: f64,
    #[serde(serialize_with = "output::sig9")]
    abs_diff: f64,
}

impl From<&SweepPoint> for SweepRow {
    fn from(pt: &SweepPoint) -> Self {
        SweepRow {
            p: pt.setup.p,
            eta: pt.setup.eta,
            xi: pt.setup.xi,
            beta_sq: pt.setup.beta_sq,
            overlap: pt.overlap,
            oracle: pt.oracle,
            analytic: pt.analytic,
            abs_diff: pt.abs_diff(),
        }
    }
}

/// Scalars print bare in CSV mode and as a one-row table in JSON mode.
fn emit_scalar(kind: &str, value: f64, format: Format) -> Result<()> {
    match format {
        Format::Csv => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{}", fmt_sig9(value))?;
            Ok(())
        }
        Format::Json => output::emit_table(None, kind, &[ScalarRow { value }], format),
    }
}

fn load_pair(state: &Path, mode: &Path) -> Result<(crate::spectral::SpectralDensityMatrix, crate::spectral::ModeFunction)> {
    let rho = StateFile::read(state)?.to_state()?;
    let u = ModeFile::read(mode)?.to_mode(Some(rho.grid()))?;
    Ok((rho, u))
}

pub fn execute(cli: &Cli) -> Result<()> {
    let format = Format::from(cli.format);
    match &cli.command {
        Command::Overlap { state, mode, delay } => {
            let (rho, u) = load_pair(state, mode)?;
            emit_scalar("overlap", overlap_t(&rho, &u.delayed(*delay))?, format)
        }
        Command::Rate(a) => emit_scalar("rate", a.setup.params()?.effective().coincidence_rate(a.overlap)?, format),
        Command::Visibility(a) => {
            emit_scalar("visibility", a.setup.params()?.effective().visibility(a.overlap)?, format)
        }
        Command::CorrectionFactor(a) => {
            emit_scalar("correction-factor", a.setup.params()?.effective().correction_factor()?, format)
        }
        Command::DipScan {
            state,
            mode,
            tau_lo,
            tau_hi,
            tau_steps,
            setup,
            out,
        } => {
            let s = setup.params()?;
            let (rho, u) = load_pair(state, mode)?;
            let taus = ScanRange::linear(*tau_lo, *tau_hi, *tau_steps)?;
            let rows = design::dip_scan(&rho, &u, &taus, &s)?;
            output::emit_table(out.as_deref(), "dip-scan", &rows, format)
        }
        Command::Contour {
            dark,
            eta_p_lo,
            eta_p_hi,
            eta_p_steps,
            intensity_lo,
            intensity_hi,
            intensity_steps,
            intensity_spacing,
            out,
        } => {
            let xr = ScanRange::linear(*eta_p_lo, *eta_p_hi, *eta_p_steps)?;
            let yr = ScanRange::new(*intensity_lo, *intensity_hi, *intensity_steps, (*intensity_spacing).into())?;
            let grid = design::contour_grid(&xr, &yr, dark.xi()?)?;
            output::emit_table(out.as_deref(), "contour", &grid.cells, format)
        }
        Command::Optimize { eta_p, dark, x_hi, out } => {
            let opt = design::optimal_intensity_with(*eta_p, dark.xi()?, *x_hi)?;
            output::emit_table(out.as_deref(), "optimize", &[opt], format)
        }
        Command::OracleCheck {
            preset,
            n_max,
            tail_tol,
            sweep_size,
            seed,
            out,
        } => {
            let cfg = match preset {
                Some(Preset::Default) => OracleConfig::default(),
                None => OracleConfig::new(*n_max, *tail_tol)?,
            };
            let points = fock_oracle::oracle_sweep(&cfg, *sweep_size, *seed)?;
            if let Some(path) = out {
                let rows: Vec<SweepRow> = points.iter().map(SweepRow::from).collect();
                output::emit_table(Some(path), "oracle-check", &rows, format)?;
            }
            let worst = points.iter().map(SweepPoint::abs_diff).fold(0.0, f64::max);
            println!("max |oracle−analytic| = {}", fmt_sig9(worst));
            let bound = cfg.tail_tolerance + 1e-9;
            if worst > bound {
                return Err(Error::Numerical(format!(
                    "oracle disagrees with closed form by {worst:e} > {bound:e}"
                )));
            }
            Ok(())
        }
        Command::MonteCarlo {
            setup,
            overlap,
            pulses,
            replicas,
            seed,
            out,
        } => {
            let s = setup.params()?;
            let plan = TrialPlan::new(*pulses, *seed)?;
            let rows = montecarlo::run_replicas(&s, *overlap, &plan, *replicas)?;
            output::emit_table(out.as_deref(), "monte-carlo", &rows, format)
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    // a second init (tests calling `run` repeatedly) is harmless
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidState(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    // fails only if the pool already exists
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_INPUT
    }
}

/// Parses `argv` (program name first), runs one subcommand and returns the
/// process exit code. Diagnostics go to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    init_logging(cli.verbose);
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return EXIT_INPUT;
    }
    match panic::catch_unwind(AssertUnwindSafe(|| execute(&cli))) {
        Ok(Ok(())) => EXIT_OK,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
        Err(_) => {
            eprintln!("error: internal failure");
            EXIT_INTERNAL
        }
    }
}
