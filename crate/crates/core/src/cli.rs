//! Command-line front end. Exit codes: 0 clean, 1 violation, 2 budget, 64 usage.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::explorer::{self, ExploreConfig, MAX_CYCLES, MAX_MODEL_PROCESSES};
use crate::protocol::Variant;
use crate::stress::{self, StressConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_BUDGET: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

/// Largest process count explored without `--long-run`.
pub const DEFAULT_MAX_PROCESSES: u32 = 3;

#[derive(Parser, Debug)]
#[command(name = "claimlock", version, about = "Claim/release mutex: exhaustive exploration, stress runs and CAS reports")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Explore every interleaving and check all oracles.
    Explore(ExploreArgs),
    /// Run the mutex on real threads under the cooperative runtime.
    Stress(StressArgs),
    /// Explore and print the per-scenario CAS table with verdicts.
    CasReport(ExploreArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mutant {
    /// Owner CAS from NULL replaced by a plain store.
    BlindOwnerStore,
    /// SCHEDULE stops after its first state CAS.
    SingleScheduleCas,
    /// A denied claim that parked reports itself granted.
    GrantWhileUnscheduled,
}

impl From<Mutant> for Variant {
    fn from(m: Mutant) -> Variant {
        match m {
            Mutant::BlindOwnerStore => Variant::BlindOwnerStore,
            Mutant::SingleScheduleCas => Variant::SingleScheduleCas,
            Mutant::GrantWhileUnscheduled => Variant::GrantWhileUnscheduled,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct ExploreArgs {
    #[arg(long, short = 'n')]
    pub processes: Option<u32>,
    #[arg(long, short = 'c')]
    pub cycles: Option<u32>,
    /// Allow four processes.
    #[arg(long)]
    pub long_run: bool,
    #[arg(long, value_enum)]
    pub mutant: Option<Mutant>,
    /// Stop after this many distinct states (exit 2).
    #[arg(long)]
    pub max_states: Option<u64>,
    /// Write the JSON report here.
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct StressArgs {
    #[arg(long, short = 'n', default_value_t = 8)]
    pub processes: u32,
    #[arg(long, short = 'i', default_value_t = 10_000)]
    pub iterations: u64,
    #[arg(long, short = 'k', default_value_t = 4)]
    pub runners: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum)]
    pub mutant: Option<Mutant>,
    /// Give up after this many seconds.
    #[arg(long, default_value_t = 60)]
    pub timeout: u64,
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
}

impl ExploreArgs {
    fn config(&self, default_processes: u32, default_cycles: u32) -> Result<ExploreConfig, String> {
        let processes = self.processes.unwrap_or(default_processes);
        let cycles = self.cycles.unwrap_or(default_cycles);
        let hard_max = MAX_MODEL_PROCESSES as u32;
        if processes == 0 || processes > hard_max {
            return Err(format!("--processes must be between 1 and {hard_max}"));
        }
        if processes > DEFAULT_MAX_PROCESSES && !self.long_run {
            return Err(format!("--processes {processes} needs --long-run"));
        }
        if cycles == 0 || cycles > MAX_CYCLES {
            return Err(format!("--cycles must be between 1 and {MAX_CYCLES}"));
        }
        let mut config = ExploreConfig::new(processes, cycles);
        if let Some(m) = self.mutant {
            config = config.with_variant(m.into());
        }
        if let Some(max) = self.max_states {
            config = config.with_max_states(max);
        }
        Ok(config)
    }
}

fn write_output(path: &Path, json: &str) -> Result<(), String> {
    std::fs::write(path, json).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn usage(msg: &str) -> i32 {
    eprintln!("error: {msg}");
    EXIT_USAGE
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match cli.command {
        Command::Explore(args) => explore_cmd(&args),
        Command::Stress(args) => stress_cmd(&args),
        Command::CasReport(args) => cas_report_cmd(&args),
    }
}

pub fn explore_cmd(args: &ExploreArgs) -> i32 {
    let config = match args.config(2, 1) {
        Ok(c) => c,
        Err(e) => return usage(&e),
    };
    let report = match explorer::explore(&config) {
        Ok(r) => r,
        Err(e) => return usage(&e),
    };
    println!("{report}");
    if let Some(path) = &args.output {
        if let Err(e) = write_output(path, &report.to_json()) {
            eprintln!("error: {e}");
            return EXIT_BUDGET;
        }
    }
    report.exit_code()
}

pub fn cas_report_cmd(args: &ExploreArgs) -> i32 {
    let config = match args.config(3, 2) {
        Ok(c) => c,
        Err(e) => return usage(&e),
    };
    let report = match explorer::explore(&config) {
        Ok(r) => r,
        Err(e) => return usage(&e),
    };
    let c = &report.config;
    println!("CAS per claim, {} processes, {} cycles, {} states", c.processes, c.cycles, report.states);
    print!("{}", report.cas_table());
    println!("release: all CAS {}..{}, mean {:.2}", report.release_cas.min, report.release_cas.max, report.release_cas.mean);
    if let Some(path) = &args.output {
        if let Err(e) = write_output(path, &report.to_json()) {
            eprintln!("error: {e}");
            return EXIT_BUDGET;
        }
    }
    let rows_ok = report.scenarios.iter().all(|r| r.within != Some(false));
    match report.exit_code() {
        EXIT_OK if !rows_ok => EXIT_VIOLATION,
        code => code,
    }
}

pub fn stress_cmd(args: &StressArgs) -> i32 {
    if args.processes == 0 || args.iterations == 0 || args.runners == 0 {
        return usage("--processes, --iterations and --runners must be positive");
    }
    let mut config = StressConfig::new(args.processes, args.iterations, args.runners, args.seed)
        .with_deadline(std::time::Duration::from_secs(args.timeout));
    if let Some(m) = args.mutant {
        config = config.with_variant(m.into());
    }
    let report = match stress::run(&config) {
        Ok(r) => r,
        Err(e) => return usage(&e.to_string()),
    };
    println!("{report}");
    if let Some(path) = &args.output {
        if let Err(e) = write_output(path, &report.to_json()) {
            eprintln!("error: {e}");
            return EXIT_BUDGET;
        }
    }
    report.exit_code()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_processes_is_a_usage_error() {
        assert_eq!(run(["claimlock", "explore", "--processes", "0"]), EXIT_USAGE);
    }

    #[test]
    fn four_processes_need_long_run_and_five_are_refused() {
        assert_eq!(run(["claimlock", "explore", "--processes", "4"]), EXIT_USAGE);
        assert_eq!(run(["claimlock", "explore", "--processes", "5", "--long-run"]), EXIT_USAGE);
    }

    #[test]
    fn unknown_flag_is_a_usage_error() {
        assert_eq!(run(["claimlock", "explore", "--frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["claimlock"]), EXIT_USAGE);
    }

    #[test]
    fn small_explore_is_clean() {
        assert_eq!(run(["claimlock", "explore", "--processes", "2", "--cycles", "1"]), EXIT_OK);
    }

    #[test]
    fn mutant_explore_reports_a_violation() {
        assert_eq!(run(["claimlock", "explore", "--processes", "2", "--mutant", "blind-owner-store"]), EXIT_VIOLATION);
    }

    #[test]
    fn exhausted_budget_exits_two() {
        assert_eq!(run(["claimlock", "explore", "--processes", "2", "--max-states", "10"]), EXIT_BUDGET);
    }
}
