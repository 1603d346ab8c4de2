use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use green_mimo::cli::{self, FaultInjection};
use green_mimo::harness::{self, CurveTable, SweepSpec, SweepVariable};
use green_mimo::switching::CrossoverOutcome;
use green_mimo::{Error, SystemConfig};

#[derive(Parser)]
#[command(name = "green-mimo", version, about = "Energy-efficient MU-MIMO/MU-SIMO link adaptation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// key=value config file; omitted keys take their defaults
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Channel realizations per grid point
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Output CSV path; a `.meta` sidecar is written next to it
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grid as start:stop:step (inclusive)
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the CSI quality tau
    SweepTau(RunArgs),
    /// Sweep the fraction of delay-sensitive users
    SweepRho(RunArgs),
    /// Compare the simplified and power-aware receivers over total power
    Fig2(RunArgs),
    /// Locate the MIMO/SIMO crossover fraction
    Crossover {
        #[command(flatten)]
        run: RunArgs,
        /// Pick P_0 so that SIMO wins at rho = 0 and MIMO at rho = 1
        #[arg(long)]
        tune_circuit_power: bool,
    },
    /// Run the oracle checks
    Selftest {
        /// Negate f3 inside the power solver (the fixed-point check must fail)
        #[arg(long, hide = true)]
        inject_f3_fault: bool,
    },
}

enum Failure {
    Usage(String),
    Infeasible(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_infeasibility() {
            Failure::Infeasible(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, Failure> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Failure::Usage(format!("grid `{spec}` must be start:stop:step with step > 0"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    let (start, stop, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0) || !(stop >= start) {
        return Err(bad());
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    // Snap to 12 decimals so 0:1:0.1 yields 0.6 rather than 0.6000000000000001.
    Ok((0..count).map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12).collect())
}

fn load(args: &RunArgs) -> Result<SystemConfig, Failure> {
    match &args.config {
        Some(p) => cli::load_config(p).map_err(|e| Failure::Usage(e.to_string())),
        None => Ok(SystemConfig::default()),
    }
}

fn write(mut table: CurveTable, args: &RunArgs, default_name: &str) -> Result<(), Failure> {
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    table.metadata.timestamp = Some(format!("{stamp}"));
    let path = args.out.clone().unwrap_or_else(|| PathBuf::from(default_name));
    cli::emit_csv(&table, &path).map_err(|e| Failure::Usage(e.to_string()))?;
    println!("wrote {}", path.display());
    if table.columns.iter().all(|c| c.stats.iter().all(Option::is_none)) {
        return Err(Failure::Infeasible("every grid point is infeasible".into()));
    }
    Ok(())
}

fn sweep(variable: SweepVariable, args: &RunArgs, default_grid: &str) -> Result<(), Failure> {
    let cfg = load(args)?;
    let grid = parse_grid(args.grid.as_deref().unwrap_or(default_grid))?;
    let spec = SweepSpec::new(variable, grid, args.trials, args.seed);
    let table = harness::run_sweep(&spec, &cfg)?;
    write(table, args, &format!("sweep_{}.csv", variable.name()))
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::SweepTau(args) => sweep(SweepVariable::Tau, &args, "0:0.5:0.1"),
        Command::SweepRho(args) => sweep(SweepVariable::Rho, &args, "0:1:0.1"),
        Command::Fig2(args) => {
            let cfg = load(&args)?;
            let powers = match &args.grid {
                Some(g) => parse_grid(g)?,
                None => harness::FIG2_POWERS.to_vec(),
            };
            let table = harness::fig2_experiment(&cfg, &powers, args.trials, args.seed)?;
            write(table, &args, "fig2.csv")
        }
        Command::Crossover {
            run,
            tune_circuit_power,
        } => {
            let mut cfg = load(&run)?;
            if tune_circuit_power {
                let set = harness::realization_set(&cfg, run.trials, run.seed);
                match green_mimo::switching::tune_circuit_power(&cfg, &set)? {
                    Some(p0) => {
                        println!("tuned P_0 = {p0:.6e} W");
                        cfg = cfg.with_circuit_power(p0);
                    }
                    None => return Err(Failure::Infeasible("no circuit power separates the two modes".into())),
                }
            }
            let (table, report) = harness::crossover_experiment(&cfg, run.trials, run.seed)?;
            match report.outcome {
                CrossoverOutcome::Crossing { rho, total_power, .. } => {
                    println!("crossover rho* = {rho:.6} (total power {total_power:.6e} W)")
                }
                CrossoverOutcome::NoCrossover { cheaper } => {
                    println!("no crossover: {} is cheaper at every rho", cheaper.name())
                }
            }
            write(table, &run, "crossover.csv")
        }
        Command::Selftest { inject_f3_fault } => {
            let report = cli::selftest(FaultInjection {
                flip_f3_sign: inject_f3_fault,
            });
            for c in &report.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if !report.passed() {
                std::process::exit(report.exit_code());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Infeasible(msg)) => {
            eprintln!("infeasible: {msg}");
            ExitCode::from(2)
        }
    }
}
