//! Command-line front end.
//!
//! Exit codes: 0 success, 1 invalid input, 2 solver failure, 3 infeasible
//! OPF, 64 usage error. Failures print one JSON diagnostic line on stderr.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use phasorflow_core::experiments::{envelope, MonteCarloConfig};
use phasorflow_core::feeder::split_pair;
use phasorflow_core::opf::{build_opf_with_bounds, kkt_check, solve_opf_with, AdmmOptions, Weights, DEFAULT_E_MAX, DEFAULT_E_MIN};
use phasorflow_core::{solve_exact, solve_linear, Setpoints, SolverOptions};
use serde_json::json;

use crate::error::{Context, Error, Result};
use crate::io::{write_atomic, write_json};
use crate::mods::ModsDoc;
use crate::montecarlo::{parse_grid, records_csv, run_parallel};
use crate::output::{dispatch_doc, exact_csv, linear_csv, load_setpoints, AngleUnit};
use crate::scenario::{run_scenario_file, RunSettings};
use crate::schema::{load_feeder, save_feeder};

pub const EXIT_USAGE: i32 = 64;
/// Loosest tolerance a flag may request.
pub const MAX_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "phasorflow", version, about = "Unbalanced feeder power flow, linearization and phasor-tracking dispatch")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a feeder file against the schema and network invariants.
    Validate { file: PathBuf },
    /// Apply a modification script and write the resulting feeder.
    Modify {
        file: PathBuf,
        #[arg(long)]
        script: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Exact power flow (Newton-Raphson) to CSV.
    Solve {
        feeder: PathBuf,
        /// Dispatch document whose `dispatch` rows set the DER injections.
        #[arg(long)]
        dispatch: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        newton: NewtonArgs,
        #[arg(long, value_enum, default_value_t = Unit::Deg)]
        angle_unit: Unit,
    },
    /// Linearized power flow to CSV.
    Linearize {
        feeder: PathBuf,
        #[arg(long)]
        dispatch: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = Unit::Deg)]
        angle_unit: Unit,
    },
    /// Phasor-tracking dispatch for one or more terminal pairs.
    Opf {
        feeder: PathBuf,
        /// Terminal pairs `k1:k2`, comma separated or repeated.
        #[arg(long, required = true, value_delimiter = ',')]
        targets: Vec<String>,
        #[arg(long, default_value_t = 1000.0)]
        rho_e: f64,
        #[arg(long, default_value_t = 1000.0)]
        rho_theta: f64,
        #[arg(long, default_value_t = 1.0)]
        rho_w: f64,
        /// Bounds on squared voltage magnitude.
        #[arg(long, default_value_t = DEFAULT_E_MIN)]
        e_min: f64,
        #[arg(long, default_value_t = DEFAULT_E_MAX)]
        e_max: f64,
        #[command(flatten)]
        admm: AdmmArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Accuracy of the linear model over random loadings.
    Montecarlo {
        feeder: PathBuf,
        /// Modification scripts applied to the feeder first, in order.
        #[arg(long)]
        script: Vec<PathBuf>,
        /// `lo:hi:step` for both the real and reactive load bounds.
        #[arg(long, default_value = "0:0.15:0.01")]
        grid: String,
        /// Overrides `--grid` for the real-power axis.
        #[arg(long)]
        dr_grid: Option<String>,
        /// Overrides `--grid` for the reactive-power axis.
        #[arg(long)]
        di_grid: Option<String>,
        #[arg(long, default_value_t = 100)]
        per_cell: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 0.85)]
        beta_s: f64,
        #[arg(long, default_value_t = 0.15)]
        beta_z: f64,
        /// Worker threads; all cores when omitted.
        #[arg(long)]
        workers: Option<usize>,
        #[command(flatten)]
        newton: NewtonArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run a switching scenario and write the JSON report.
    Scenario {
        spec: PathBuf,
        #[command(flatten)]
        newton: NewtonArgs,
        #[command(flatten)]
        admm: AdmmArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Unit {
    Deg,
    Rad,
}

impl From<Unit> for AngleUnit {
    fn from(u: Unit) -> Self {
        match u {
            Unit::Deg => AngleUnit::Degrees,
            Unit::Rad => AngleUnit::Radians,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct NewtonArgs {
    /// Newton mismatch tolerance (at most 1e-6).
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct AdmmArgs {
    /// ADMM stopping tolerance (at most 1e-6).
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub admm_max_iter: Option<usize>,
}

fn checked_tol(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v <= MAX_TOLERANCE {
        Ok(v)
    } else {
        Err(Error::Config(format!("--{name} must lie in (0, {MAX_TOLERANCE:e}], got {v:e}")))
    }
}

impl NewtonArgs {
    pub fn options(&self) -> Result<SolverOptions> {
        let mut o = SolverOptions::default();
        if let Some(t) = self.tol {
            o.tolerance = checked_tol("tol", t)?;
            o.vvc_tolerance = o.tolerance;
        }
        if let Some(n) = self.max_iter {
            o.max_iterations = n;
        }
        Ok(o)
    }
}

impl AdmmArgs {
    pub fn options(&self) -> Result<AdmmOptions> {
        let mut o = AdmmOptions::default();
        if let Some(e) = self.eps {
            o.eps = checked_tol("eps", e)?;
        }
        if let Some(n) = self.admm_max_iter {
            o.max_iterations = n;
        }
        Ok(o)
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind as K;
            return match e.kind() {
                K::DisplayHelp | K::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{}", diagnostic(&e));
            e.exit_code()
        }
    }
}

/// One JSON object describing a failure.
pub fn diagnostic(e: &Error) -> serde_json::Value {
    let mut d = json!({
        "error": e.category(),
        "exit_code": e.exit_code(),
        "message": e.to_string(),
    });
    let mut core = match e {
        Error::Model { source, .. } => Some(source),
        _ => None,
    };
    while let Some(phasorflow_core::Error::Case { source, .. }) = core {
        core = Some(source);
    }
    if let Some(phasorflow_core::Error::NonConvergence { iterations, history, .. }) = core {
        d["iterations"] = json!(iterations);
        d["residual_history"] = json!(history);
    }
    d
}

fn targets_of(raw: &[String]) -> Result<Vec<(String, String)>> {
    raw.iter()
        .map(|t| split_pair(t).context(|| "--targets".to_string()))
        .collect()
}

fn dispatch_or_zero(path: Option<&Path>, net: &phasorflow_core::Network) -> Result<Setpoints> {
    match path {
        Some(p) => load_setpoints(p, net),
        None => Ok(Setpoints::zero()),
    }
}

fn execute(cmd: Command, out: &mut dyn Write) -> Result<()> {
    let say = |out: &mut dyn Write, msg: String| {
        let _ = writeln!(out, "{msg}");
    };
    match cmd {
        Command::Validate { file } => {
            let net = load_feeder(&file)?;
            let solvable = match net.ensure_solvable() {
                Ok(()) => "solvable as is".to_string(),
                Err(e) => format!("needs modification before solving: {e}"),
            };
            say(
                out,
                format!(
                    "ok: {} nodes, {} lines ({} open switches), {} loads, {} DER, {} VVC; {solvable}",
                    net.nodes().len(),
                    net.lines().len(),
                    net.open_switches().len(),
                    net.loads().len(),
                    net.der().len(),
                    net.vvc().len()
                ),
            );
        }
        Command::Modify { file, script, output } => {
            let net = load_feeder(&file)?;
            let mods = ModsDoc::load(&script)?.to_modifications()?;
            let modified = net
                .apply_modifications(&mods)
                .context(|| format!("applying {}", script.display()))?;
            save_feeder(&modified, &output)?;
            say(out, format!("wrote {}", output.display()));
        }
        Command::Solve {
            feeder,
            dispatch,
            output,
            newton,
            angle_unit,
        } => {
            let opts = newton.options()?;
            let net = load_feeder(&feeder)?;
            let w = dispatch_or_zero(dispatch.as_deref(), &net)?;
            let sol = solve_exact(&net, &w, &opts).context(|| "exact power flow".to_string())?;
            write_atomic(&output, &exact_csv(&net, &sol, angle_unit.into())?)?;
            say(
                out,
                format!("converged in {} iterations (mismatch {:e}); wrote {}", sol.iterations, sol.residual_norm, output.display()),
            );
        }
        Command::Linearize {
            feeder,
            dispatch,
            output,
            angle_unit,
        } => {
            let net = load_feeder(&feeder)?;
            let w = dispatch_or_zero(dispatch.as_deref(), &net)?;
            let sol = solve_linear(&net, &w).context(|| "linear power flow".to_string())?;
            write_atomic(&output, &linear_csv(&net, &sol, angle_unit.into())?)?;
            say(out, format!("wrote {}", output.display()));
        }
        Command::Opf {
            feeder,
            targets,
            rho_e,
            rho_theta,
            rho_w,
            e_min,
            e_max,
            admm,
            output,
        } => {
            let opts = admm.options()?;
            let net = load_feeder(&feeder)?;
            let targets = targets_of(&targets)?;
            let prob = build_opf_with_bounds(&net, &targets, Weights::new(rho_e, rho_theta, rho_w), e_min, e_max)
                .context(|| "OPF".to_string())?;
            let d = solve_opf_with(&prob, &opts).context(|| "OPF".to_string())?;
            let kkt = kkt_check(&prob, &d).context(|| "KKT check".to_string())?;
            write_json(&output, &dispatch_doc(&prob, &targets, &d, &kkt))?;
            say(
                out,
                format!(
                    "objective {:.6e} after {} iterations (KKT {}); wrote {}",
                    d.objective_value,
                    d.stats.iterations,
                    if kkt.passed() { "ok" } else { "FAILED" },
                    output.display()
                ),
            );
        }
        Command::Montecarlo {
            feeder,
            script,
            grid,
            dr_grid,
            di_grid,
            per_cell,
            seed,
            beta_s,
            beta_z,
            workers,
            newton,
            output,
        } => {
            let solver = newton.options()?;
            let mut net = load_feeder(&feeder)?;
            for path in &script {
                let mods = ModsDoc::load(path)?.to_modifications()?;
                net = net.apply_modifications(&mods).context(|| format!("applying {}", path.display()))?;
            }
            let both = parse_grid(&grid)?;
            let cfg = MonteCarloConfig {
                dr_values: dr_grid.as_deref().map(parse_grid).transpose()?.unwrap_or_else(|| both.clone()),
                di_values: di_grid.as_deref().map(parse_grid).transpose()?.unwrap_or(both),
                per_cell,
                seed,
                beta_s,
                beta_z,
                solver,
            };
            let records = run_parallel(&net, &cfg, workers)?;
            write_atomic(&output, &records_csv(&records)?)?;
            let failed = records.iter().filter(|r| !r.converged).count();
            say(out, format!("{} records ({failed} not converged); wrote {}", records.len(), output.display()));
            for limit in [1.0, 1.5] {
                let m = envelope(&records, limit);
                say(
                    out,
                    format!(
                        "S_sub <= {limit}: eps_mag {:.3e} eps_angle {:.3e} deg eps_power {:.3e}",
                        m.eps_mag, m.eps_angle_deg, m.eps_power
                    ),
                );
            }
        }
        Command::Scenario {
            spec,
            newton,
            admm,
            output,
        } => {
            let settings = RunSettings {
                solver: newton.options()?,
                admm: admm.options()?,
            };
            let (_, _, report) = run_scenario_file(&spec, &settings)?;
            write_json(&output, &report)?;
            say(out, format!("{} switching actions; wrote {}", report.actions.len(), output.display()));
        }
    }
    Ok(())
}
