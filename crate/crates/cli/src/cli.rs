//! Command-line front end. Exit codes: 0 success, 1 check failure, 2 usage
//! or I/O error.

use std::path::PathBuf;

use anyhow::{bail, Result};
use banditq_core::env::{solve_reference_lp, RatePair};
use banditq_core::verify::check_trace;
use clap::{Parser, Subcommand, ValueEnum};

use crate::output::read_record;
use crate::run::{run_scenario, Overrides, RunError};
use crate::scenario::load_scenario;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "banditq", version, about = "Bandit-learning queue scheduling simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run every policy of a scenario and write CSV series, a summary and a plot.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "on")]
        check: Toggle,
    },
    /// Solve the capacity LP: arrival rates followed by service rates.
    Lp {
        #[arg(num_args = 2.., allow_negative_numbers = true, value_name = "LAMBDA... SIGMA...")]
        rates: Vec<f64>,
    },
    /// Replay the sample-path checkers on a stored record file.
    Verify { record: PathBuf },
}

/// Text printed by `lp`.
pub fn lp_report(rates: &[f64]) -> Result<String> {
    if !rates.len().is_multiple_of(2) || rates.is_empty() {
        bail!("expected K arrival rates followed by K service rates, got {} numbers", rates.len());
    }
    let k = rates.len() / 2;
    let pair = RatePair::new(rates[..k].to_vec(), rates[k..].to_vec()).map_err(|e| anyhow::anyhow!("{e}"))?;
    let solution = solve_reference_lp(&pair).map_err(|e| anyhow::anyhow!("{e}"))?;
    let theta: Vec<String> = solution.theta.as_slice().iter().map(|v| format!("{v:.8}")).collect();
    Ok(format!(
        "eps = {:.10e}\ntheta = ({})\nfeasible = {}\n",
        solution.eps,
        theta.join(", "),
        solution.feasible
    ))
}

/// Runs a parsed command, printing to stdout/stderr; returns the exit code.
pub fn execute(cli: Cli) -> i32 {
    match cli.command {
        Command::Run { scenario, reps, horizon, seed, out, check } => {
            let mut s = match load_scenario(&scenario) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_USAGE;
                }
            };
            let check = check == Toggle::On;
            Overrides { reps, horizon, seed, out_dir: out, check: Some(check) }.apply(&mut s);
            match run_scenario(&s, check) {
                Ok(outcome) => {
                    print!("{}", crate::run::summary_text(&s, &outcome.results, check));
                    println!("outputs in {}", outcome.out_dir.display());
                    if outcome.checks_passed() { EXIT_OK } else { EXIT_CHECK_FAILED }
                }
                Err(RunError::Assertion(e)) => {
                    eprintln!("error: runtime assertion failed: {e}");
                    EXIT_CHECK_FAILED
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    EXIT_USAGE
                }
            }
        }
        Command::Lp { rates } => match lp_report(&rates) {
            Ok(text) => {
                print!("{text}");
                EXIT_OK
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                EXIT_USAGE
            }
        },
        Command::Verify { record } => {
            let trace = match read_record(&record) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    return EXIT_USAGE;
                }
            };
            let reports = check_trace(&trace);
            println!("{} slots, K = {}, M = {}", trace.len(), trace.queues, trace.bound);
            for r in &reports {
                println!("{r}");
            }
            if reports.iter().all(|r| r.passed) { EXIT_OK } else { EXIT_CHECK_FAILED }
        }
    }
}

/// Parses `args` (including the program name) and executes.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}
