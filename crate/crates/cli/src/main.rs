//! Batch experiment runner for the PMBM, PMB and marginalized PMB SLAM filters.

mod config;
mod output;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rfs_slam::experiment::{run_monte_carlo, run_on_bundle, FilterKind, MonteCarlo};
use rfs_slam::sim::{read_bundle, simulate, write_bundle};

use config::{Failure, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "rfs-slam", version = output::VERSION, about = "Random-finite-set SLAM experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Runs the filter named by `--filter` or the config's `filter` key.
    Run {
        #[arg(long)]
        filter: Option<FilterKind>,
        #[command(flatten)]
        common: Common,
    },
    /// Runs the PMBM filter.
    Pmbm(Common),
    /// Runs the PMB filter.
    Pmb(Common),
    /// Runs the marginalized PMB filter.
    Mpmb(Common),
    /// Runs all three filters on the same realisations.
    Compare(Common),
    /// Writes one simulated scenario bundle.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Bundle file to write.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    max_hypotheses: Option<usize>,
    #[arg(long)]
    lbp_iterations: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stored bundle to run once instead of simulating.
    #[arg(long)]
    bundle: Option<PathBuf>,
}

impl Common {
    fn overrides(&self, filter: Option<FilterKind>) -> Overrides {
        Overrides {
            filter,
            runs: self.runs,
            seed: self.seed,
            particles: self.particles,
            max_hypotheses: self.max_hypotheses,
            lbp_iterations: self.lbp_iterations,
            output_dir: self.out.clone(),
            bundle_file: self.bundle.clone(),
        }
    }
}

fn experiment(command: &str, common: &Common, filter: Option<FilterKind>, compare: bool) -> Result<(), Failure> {
    let mut cfg = RunConfig::resolve(common.config.as_deref(), &common.overrides(filter))?;
    let filters: Vec<FilterKind> = if compare {
        FilterKind::ALL.to_vec()
    } else {
        vec![cfg
            .filter
            .ok_or_else(|| Failure::Config("configuration error in `filter`: required by `run`".into()))?]
    };
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| {
        Failure::Config(format!("configuration error in `output_dir`: {}: {e}", cfg.output_dir.display()))
    })?;
    let mc = match &cfg.bundle_file {
        Some(path) => {
            let bundle = load_bundle(path)?;
            cfg.scenario = bundle.scenario.clone();
            run_on_bundle(&bundle, &cfg.params, &filters, &cfg.gospa)
        }
        None => run_monte_carlo(&cfg.scenario, &cfg.params, &filters, cfg.runs, &cfg.gospa),
    }
    .map_err(|e| Failure::from_core(e, ""))?;
    let report = output::report(&mc, &filters, &cfg);
    output::write_all(&cfg.output_dir, command, &cfg, &filters, &mc, &report)?;
    print_summary(&mc, &report, &cfg.output_dir);
    if mc.failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(format!(
            "{} of {} filter runs failed; see {}",
            mc.failures.len(),
            mc.failures.len() + mc.runs.len(),
            cfg.output_dir.join(output::FAILURES).display()
        )))
    }
}

fn load_bundle(path: &Path) -> Result<rfs_slam::sim::Bundle, Failure> {
    let file = File::open(path)
        .map_err(|e| Failure::Config(format!("configuration error in `bundle_file`: {}: {e}", path.display())))?;
    read_bundle(BufReader::new(file)).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn print_summary(mc: &MonteCarlo, report: &[output::ReportRow], dir: &Path) {
    println!(
        "{:<6} {:>10} {:>10} {:>10} {:>12} {:>8}",
        "filter", "step ms", "gospa va", "gospa sp", "rmse pos m", "failed"
    );
    for r in report {
        println!(
            "{:<6} {:>10.2} {:>10.3} {:>10.3} {:>12.3} {:>8}",
            r.filter, r.mean_step_ms, r.mean_gospa_va, r.mean_gospa_sp, r.final_rmse_position_m, r.failed_runs
        );
    }
    for v in mc.violations.iter().take(5) {
        eprintln!("invariant violation: {v}");
    }
    println!("results in {}", dir.display());
}

fn simulate_bundle(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<(), Failure> {
    let overrides = Overrides {
        seed,
        ..Overrides::default()
    };
    let cfg = RunConfig::resolve(config, &overrides)?;
    let bundle = simulate(&cfg.scenario).map_err(|e| Failure::from_core(e, "scenario"))?;
    let file = File::create(out).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", out.display())))?;
    write_bundle(&bundle, BufWriter::new(file)).map_err(|e| Failure::Runtime(e.to_string()))?;
    println!("{} steps written to {}", bundle.frames.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { filter, common } => experiment("run", common, *filter, false),
        Command::Pmbm(c) => experiment("pmbm", c, Some(FilterKind::Pmbm), false),
        Command::Pmb(c) => experiment("pmb", c, Some(FilterKind::Pmb), false),
        Command::Mpmb(c) => experiment("mpmb", c, Some(FilterKind::Mpmb), false),
        Command::Compare(c) => experiment("compare", c, None, true),
        Command::Simulate { config, seed, out } => simulate_bundle(config.as_deref(), *seed, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
