//! Command-line front end for the slicing simulator.
//!
//! Exit codes: 0 success, 1 usage error, 2 scenario error, 3 experiment or
//! numerical error.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gkm_core::baselines::efficiency_report;
use gkm_core::error::Error;
use gkm_core::experiment::{
    run_experiment, write_csv, write_json, write_series, MechanismKind,
};
use gkm_core::gkm_auction::{run_auction, verify_equilibrium, GkmConfig};
use gkm_core::scenario::{load_preset, resolve_scenario, Scenario, PRESET_NAMES};

#[derive(Parser)]
#[command(
    name = "gkm-sim",
    version,
    about = "Auction-based bandwidth slicing simulator",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Bundled preset name or path to a scenario file.
    #[arg(long)]
    scenario: String,
    /// Override the scenario's master seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<Scenario, Error> {
        let mut s = resolve_scenario(&self.scenario)?;
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        Ok(s)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment and emit results.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Number of independent channel realizations.
        #[arg(long, default_value_t = 1)]
        trials: usize,
        /// Comma-separated mechanism set (equal, kelly, gkm, optimal).
        #[arg(long, default_value = "gkm", value_delimiter = ',')]
        mechanisms: Vec<String>,
        /// Output format.
        #[arg(long, default_value = "csv", value_parser = ["csv", "json"])]
        format: String,
        /// Output file (stdout when omitted).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Worker threads for trial execution (1 = sequential).
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Also write the per-iteration convergence series to this CSV file.
        #[arg(long)]
        series: Option<PathBuf>,
    },
    /// Run one auction and print its equilibrium residual report.
    Verify {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Residual threshold for the verdict line.
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Compare mechanisms over paired trials.
    Compare {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// List the bundled scenario presets.
    Presets,
}

fn parse_mechanisms(names: &[String]) -> Result<Vec<MechanismKind>, Error> {
    names.iter().map(|n| n.trim().parse()).collect()
}

fn open_sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn cmd_run(
    scenario: ScenarioArgs,
    trials: usize,
    mechanisms: Vec<String>,
    format: String,
    output: Option<PathBuf>,
    jobs: usize,
    series: Option<PathBuf>,
) -> Result<(), Error> {
    let scenario = scenario.load()?;
    let kinds = parse_mechanisms(&mechanisms)?;
    let keep_traces = series.is_some() || format == "json";
    let result = run_experiment(&scenario, trials, &kinds, &GkmConfig::default(), jobs, keep_traces)?;
    let mut sink = open_sink(&output)?;
    match format.as_str() {
        "csv" => write_csv(&result, &scenario.user_counts(), &mut sink)?,
        _ => write_json(&result, &mut sink)?,
    }
    sink.flush()?;
    if let Some(path) = series {
        let mut sink = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_series(&result, &mut sink)?;
        sink.flush()?;
    }
    Ok(())
}

fn cmd_verify(scenario: ScenarioArgs, tolerance: f64) -> Result<(), Error> {
    let scenario = scenario.load()?;
    let mut rng = gkm_core::scenario::scenario_rng(scenario.seed);
    let channels = scenario.draw_channels(&mut rng)?;
    let instance = scenario.instance_from_channels(&channels)?;
    let trace = run_auction(&instance, &GkmConfig::default())?;
    println!(
        "auction: {} rounds, converged = {}",
        trace.rounds_used, trace.converged
    );
    let states = gkm_core::gkm_auction::MvnoState::from_trace(&trace, &instance)?;
    println!("final state:");
    for (i, s) in states.iter().enumerate() {
        println!(
            "  mvno {i}: users {:>3}, bandwidth {:>10.1} Hz, bid {:.4e}, penalty {:.4e}, mu {:.4}, valuation {:.3}",
            s.users.len(),
            s.allocation,
            s.bid,
            s.penalty,
            s.market_power,
            s.valuation,
        );
    }
    let report = verify_equilibrium(&trace, &instance)?;
    println!("per-operator residuals:");
    for (i, (s, a)) in report
        .stationarity
        .iter()
        .zip(&report.allocation_identity)
        .enumerate()
    {
        println!("  mvno {i}: stationarity {s:.3e}  allocation-identity {a:.3e}");
    }
    println!("capacity residual: {:.3e}", report.capacity);
    println!(
        "uniqueness-condition violation: {:.3e}",
        report.max_uniqueness_violation()
    );
    let worst = report.max_residual().max(report.max_uniqueness_violation());
    println!(
        "verdict: {} (worst residual {worst:.3e}, tolerance {tolerance:.1e})",
        if worst <= tolerance { "EQUILIBRIUM" } else { "NOT AT EQUILIBRIUM" }
    );
    Ok(())
}

fn cmd_compare(scenario: ScenarioArgs, trials: usize, jobs: usize) -> Result<(), Error> {
    let scenario = scenario.load()?;
    let result = run_experiment(
        &scenario,
        trials,
        &MechanismKind::ALL,
        &GkmConfig::default(),
        jobs,
        false,
    )?;

    // Median outcomes per mechanism, arranged for the gap/gain table.
    let outcomes: Vec<gkm_core::baselines::MechanismOutcome> = result
        .aggregates
        .iter()
        .filter(|a| a.mechanism != "gkm-multi")
        .map(|a| gkm_core::baselines::MechanismOutcome {
            mechanism: a.mechanism.clone(),
            allocations: Vec::new(),
            valuations: a.median_valuations.clone(),
            welfare: a.median_welfare,
            scenario_hash: result.scenario_hash.clone(),
        })
        .collect();
    let rows = efficiency_report(&outcomes)?;

    println!(
        "scenario {} ({} trials, {} failed)",
        result.scenario_name, result.trials_requested, result.failed_trials
    );
    println!("{:<10} {:>14} {:>12} {:>12}", "mechanism", "median welfare", "gap to opt", "gkm gain");
    for row in rows {
        let gap = row
            .gap_to_optimal
            .map_or("-".to_string(), |g| format!("{:.3}%", 100.0 * g));
        let gain = row
            .gkm_gain_over
            .map_or("-".to_string(), |g| format!("{:.3}%", 100.0 * g));
        println!("{:<10} {:>14.4} {:>12} {:>12}", row.mechanism, row.welfare, gap, gain);
    }
    Ok(())
}

fn cmd_presets() -> Result<(), Error> {
    for name in PRESET_NAMES {
        let s = load_preset(name)?;
        let users: Vec<String> = s.user_counts().iter().map(|u| u.to_string()).collect();
        println!(
            "{name:<14} {:>6.1} MHz, {:>4.0} dBm, operators [{}]{}{}",
            s.bandwidth_hz / 1e6,
            s.power_dbm,
            users.join("/"),
            if s.outage.enabled { ", outage" } else { "" },
            if s.has_power_resource() { ", power resource" } else { "" },
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not usage errors.
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };

    let outcome = match cli.command {
        Command::Run {
            scenario,
            trials,
            mechanisms,
            format,
            output,
            jobs,
            series,
        } => cmd_run(scenario, trials, mechanisms, format, output, jobs, series),
        Command::Verify { scenario, tolerance } => cmd_verify(scenario, tolerance),
        Command::Compare { scenario, trials, jobs } => cmd_compare(scenario, trials, jobs),
        Command::Presets => cmd_presets(),
    };

    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Scenario(_) => ExitCode::from(2),
                Error::Domain(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}
