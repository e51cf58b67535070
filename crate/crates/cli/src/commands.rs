//! Command-line definitions and the command implementations.

use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use qode_core::discretization::TimeGrid;
use qode_core::pipeline::{estimate, fit_scaling, log_space, sweep, verify, SweepAxis};
use qode_core::scenarios::ScenarioSummary;

use crate::config::{RunFlags, SchemeArg, TargetArg};
use crate::error::{CliError, CliResult, EXIT_CHECK_FAILED, EXIT_OK};
use crate::generators::{scenario_generators, GeneratorParams};
use crate::output::{csv_bytes, emit, error_rows_csv, json_bytes, read_sweep_csv, SweepCsvRow};
use crate::system_file::SystemFile;

/// Query-cost estimates for linear-ODE solvers built on a linear embedding.
#[derive(Parser, Debug)]
#[command(name = "qode", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Subcommands.
#[derive(Subcommand, Debug)]
pub enum Command {
    /// Print the cost report for one configuration as JSON.
    Estimate {
        #[command(flatten)]
        run: RunFlags,
        /// Output path; standard output when omitted.
        #[arg(long)]
        out: Option<String>,
    },
    /// Estimate along one axis and write the chosen-scheme rows as CSV.
    Sweep {
        #[command(flatten)]
        run: RunFlags,
        /// Swept quantity.
        #[arg(long, value_enum)]
        axis: AxisArg,
        /// First axis value.
        #[arg(long, allow_hyphen_values = true)]
        from: f64,
        /// Last axis value.
        #[arg(long, allow_hyphen_values = true)]
        to: f64,
        /// Number of points, log-spaced for t and epsilon, linear for mu.
        #[arg(long)]
        points: usize,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Output CSV path; standard output when omitted.
        #[arg(long)]
        out: Option<String>,
    },
    /// Compare analytic bounds with the assembled embedding of a system file.
    Verify {
        /// JSON system file.
        #[arg(long)]
        system: String,
        /// Number of steps M.
        #[arg(long)]
        steps: u64,
        /// Step h; the largest h ≤ 1 with ‖A‖h ≤ 1 when omitted.
        #[arg(long)]
        step: Option<f64>,
        /// Total error ε.
        #[arg(long, default_value_t = 1e-6)]
        epsilon: f64,
        /// Output state.
        #[arg(long, value_enum, default_value = "history")]
        target: TargetArg,
        /// Error scheme.
        #[arg(long, value_enum, default_value = "auto")]
        scheme: SchemeArg,
        /// Report path; standard output when omitted.
        #[arg(long)]
        out: Option<String>,
        /// Per-step error table as CSV.
        #[arg(long)]
        rows: Option<String>,
    },
    /// Write a generated system as a JSON system file.
    Scenario {
        /// Generator name; lists the generators when omitted.
        name: Option<String>,
        /// State dimension (oscillator count for `oscillators`).
        #[arg(long, default_value_t = 2)]
        dimension: usize,
        /// Log-norm of `negative-lognorm`.
        #[arg(long, default_value_t = -0.5, allow_hyphen_values = true)]
        mu: f64,
        /// RNG seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Carleman truncation level.
        #[arg(long, default_value_t = 4)]
        truncation: usize,
        /// Initial value of the logistic equation.
        #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
        u0: f64,
        /// Output path; standard output when omitted.
        #[arg(long)]
        out: Option<String>,
    },
    /// Least-squares slope of ln Q against ln T from a sweep CSV.
    FitScaling {
        /// Sweep CSV.
        csv: String,
        /// Smallest axis value in the window.
        #[arg(long, allow_hyphen_values = true)]
        from: Option<f64>,
        /// Largest axis value in the window.
        #[arg(long, allow_hyphen_values = true)]
        to: Option<f64>,
        /// Output path; standard output when omitted.
        #[arg(long)]
        out: Option<String>,
    },
}

/// `--axis` values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    T,
    Mu,
    Epsilon,
}

impl From<AxisArg> for SweepAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::T => SweepAxis::T,
            AxisArg::Mu => SweepAxis::Mu,
            AxisArg::Epsilon => SweepAxis::Epsilon,
        }
    }
}

/// `points` evenly spaced values from `from` to `to` inclusive.
pub fn lin_space(from: f64, to: f64, points: usize) -> CliResult<Vec<f64>> {
    if points < 2 {
        return Err(CliError::Validation("`points` must be ≥ 2".into()));
    }
    if !(from.is_finite() && to.is_finite() && from < to) {
        return Err(CliError::Validation("need finite `from` < `to`".into()));
    }
    Ok((0..points)
        .map(|i| {
            if i == points - 1 {
                to
            } else {
                from + (to - from) * i as f64 / (points - 1) as f64
            }
        })
        .collect())
}

/// Run a parsed command; returns the process exit code.
pub fn run(cli: Cli) -> CliResult<u8> {
    match cli.command {
        Command::Estimate { run, out } => {
            let req = run.resolve()?.request()?;
            let report = estimate(&req)?;
            info!("chosen {} with Q = {:e}", report.chosen.name(), report.q);
            emit(out.as_deref(), &json_bytes(&report)?)?;
            Ok(EXIT_OK)
        }
        Command::Sweep {
            run,
            axis,
            from,
            to,
            points,
            jobs,
            out,
        } => {
            if jobs == 0 {
                return Err(CliError::Validation("`jobs` must be ≥ 1".into()));
            }
            let template = run.resolve()?.request()?;
            let axis: SweepAxis = axis.into();
            let values = match axis {
                SweepAxis::Mu => lin_space(from, to, points)?,
                SweepAxis::T | SweepAxis::Epsilon => log_space(from, to, points)?,
            };
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| CliError::Computation(format!("thread pool: {e}")))?;
            let rows = pool.install(|| sweep(&template, axis, &values))?;
            let flat: Vec<SweepCsvRow> = rows.iter().map(|r| SweepCsvRow::from_row(axis, r)).collect();
            info!("{} sweep rows", flat.len());
            emit(out.as_deref(), &csv_bytes(&flat)?)?;
            Ok(EXIT_OK)
        }
        Command::Verify {
            system,
            steps,
            step,
            epsilon,
            target,
            scheme,
            out,
            rows,
        } => {
            let text = std::fs::read_to_string(&system).map_err(|e| CliError::io(&system, e))?;
            let sys = SystemFile::parse(&system, &text)?.to_system()?;
            let h = match step {
                Some(h) => h,
                None => sys.recommended_step()?,
            };
            let grid = TimeGrid::new(h, steps)?;
            let report = verify(&sys, &grid, epsilon, target.into(), scheme.into())?;
            if let Some(path) = rows.as_deref() {
                emit(Some(path), &error_rows_csv(&report.rows)?)?;
            }
            emit(out.as_deref(), &json_bytes(&report)?)?;
            if report.flags.all() {
                Ok(EXIT_OK)
            } else {
                warn!("verification checks failed: {:?}", report.flags);
                Ok(EXIT_CHECK_FAILED)
            }
        }
        Command::Scenario {
            name,
            dimension,
            mu,
            seed,
            truncation,
            u0,
            out,
        } => {
            let reg = scenario_generators();
            let Some(name) = name else {
                let listing: String = reg.iter().map(|(n, g)| format!("{n}\t{}\n", g.describe())).collect();
                emit(out.as_deref(), listing.as_bytes())?;
                return Ok(EXIT_OK);
            };
            let params = GeneratorParams {
                dimension,
                mu,
                seed,
                truncation,
                u0,
            };
            let sys = reg.get(&name)?.generate(&params)?;
            info!("{:?}", ScenarioSummary::of(&sys)?);
            emit(out.as_deref(), &json_bytes(&SystemFile::from_system(&sys))?)?;
            Ok(EXIT_OK)
        }
        Command::FitScaling { csv, from, to, out } => {
            let text = std::fs::read_to_string(&csv).map_err(|e| CliError::io(&csv, e))?;
            let rows = read_sweep_csv(&csv, &text)?;
            let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.axis_value, r.q)).collect();
            let lo = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
            let hi = pairs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
            let window = (from.unwrap_or(lo), to.unwrap_or(hi));
            let fit = fit_scaling(&pairs, window)?;
            emit(out.as_deref(), &json_bytes(&fit)?)?;
            Ok(EXIT_OK)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lin_space_endpoints_and_guards() {
        let v = lin_space(-1.0, 0.0, 5).unwrap();
        assert_eq!(v, vec![-1.0, -0.75, -0.5, -0.25, 0.0]);
        assert!(lin_space(0.0, 1.0, 1).is_err());
        assert!(lin_space(1.0, 0.0, 3).is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
