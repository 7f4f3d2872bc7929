//! `balance-kit` command line.
//!
//! Exit codes: 0 success, 2 invalid input, 3 infeasible stance, 4 solver
//! failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use balance_kit_core::report::{error_document, run_command, Command, RunOptions};
use balance_kit_core::stance::load_stance;
use balance_kit_core::{Error, ErrorClass};
use clap::{Args, Parser, Subcommand};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "balance-kit", version, about = "Impact-aware multi-contact balance regions")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Balance region of planar CoM velocities.
    Region(CommonArgs),
    /// Feasible ZMP area on the projection plane.
    ZmpArea(CommonArgs),
    /// Candidate impulse set and post-impact CoM velocities.
    Impulse(CommonArgs),
    /// Maximum contact velocity that keeps the robot balanced.
    Maxvel(CommonArgs),
    /// Saturated LIPM phase trajectory.
    Phase(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Stance document (JSON).
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Output document; standard output when omitted.
    #[arg(long = "out", value_name = "PATH")]
    output: Option<PathBuf>,
    /// Also write plot-ready rows as CSV.
    #[arg(long, value_name = "PATH")]
    csv: Option<PathBuf>,
    /// Area gap at which region refinement stops.
    #[arg(long)]
    eps_area: Option<f64>,
    /// Direction budget for region refinement.
    #[arg(long)]
    max_dirs: Option<usize>,
    /// Height of the projection plane.
    #[arg(long)]
    plane_height: Option<f64>,
    /// Number of friction-cone generators at the impact.
    #[arg(long)]
    nmu: Option<usize>,
    /// Phase integration step.
    #[arg(long)]
    dt: Option<f64>,
    /// Phase horizon.
    #[arg(long)]
    horizon: Option<f64>,
    /// Optimize the generalized velocity instead of a scalar speed.
    #[arg(long)]
    full_qdot: bool,
    /// Initial CoM position for the phase trajectory.
    #[arg(long, allow_hyphen_values = true)]
    c0: Option<f64>,
    /// Initial CoM velocity for the phase trajectory.
    #[arg(long, allow_hyphen_values = true)]
    cd0: Option<f64>,
    /// Lower ZMP bound for the phase trajectory.
    #[arg(long, allow_hyphen_values = true)]
    zmp_lo: Option<f64>,
    /// Upper ZMP bound for the phase trajectory.
    #[arg(long, allow_hyphen_values = true)]
    zmp_hi: Option<f64>,
    /// Record wall-clock timings in the output metadata.
    #[arg(long)]
    timings: bool,
}

impl CommonArgs {
    fn options(&self) -> RunOptions {
        RunOptions {
            eps_area: self.eps_area,
            max_dirs: self.max_dirs,
            plane_height: self.plane_height,
            n_mu: self.nmu,
            dt: self.dt,
            horizon: self.horizon,
            full_qdot: self.full_qdot,
            c0: self.c0,
            cd0: self.cd0,
            zmp_lo: self.zmp_lo,
            zmp_hi: self.zmp_hi,
            timings: self.timings,
        }
    }
}

/// Exit code for an error class.
pub fn exit_code(err: &Error) -> i32 {
    match err.class() {
        ErrorClass::Input => EXIT_INPUT,
        ErrorClass::Infeasible => EXIT_INFEASIBLE,
        ErrorClass::Solver => EXIT_SOLVER,
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (command, args) = match &cli.command {
        Sub::Region(a) => (Command::Region, a),
        Sub::ZmpArea(a) => (Command::ZmpArea, a),
        Sub::Impulse(a) => (Command::Impulse, a),
        Sub::Maxvel(a) => (Command::Maxvel, a),
        Sub::Phase(a) => (Command::Phase, a),
    };
    match execute(command, args) {
        Ok(()) => EXIT_OK,
        Err(err) => {
            let body = error_document(&err, command);
            let mut line = format!("error [{}] {}: {}", body["stage"].as_str().unwrap_or(""), err.code(), err);
            if let Some(path) = err.field_path() {
                line.push_str(&format!(" (field: {path})"));
            }
            eprintln!("{line}");
            exit_code(&err)
        }
    }
}

fn execute(command: Command, args: &CommonArgs) -> Result<(), Error> {
    let text = std::fs::read_to_string(&args.input)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", args.input.display())))?;
    let loaded = load_stance(&text)?;
    let report = run_command(command, &loaded, &args.options())?;
    for warning in report.document["warnings"].as_array().into_iter().flatten() {
        if let Some(w) = warning.as_str() {
            eprintln!("warning [{}]: {w}", command.as_str());
        }
    }
    let json = report.to_json();
    match &args.output {
        Some(path) => write(path, &json)?,
        None => print!("{json}"),
    }
    if let Some(path) = &args.csv {
        write(path, &report.to_csv()?)?;
    }
    Ok(())
}

fn write(path: &Path, contents: &str) -> Result<(), Error> {
    std::fs::write(path, contents).map_err(|e| Error::InvalidInput(format!("cannot write {}: {e}", path.display())))
}
