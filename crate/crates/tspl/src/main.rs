use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use tspl::config::ExperimentConfig;
use tspl::harness;

#[derive(Parser)]
#[command(
    name = "tspl",
    version,
    about = "Random operator splitting for the convected Allen-Cahn equation on the torus"
)]
struct Cli {
    /// Configuration file (TOML); mutually exclusive with --preset
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Built-in preset: paper-desk or paper-full
    #[arg(long, global = true)]
    preset: Option<String>,

    /// Output directory (default: the config's [output] directory)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (fallback: TSPL_THREADS, then all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Master seed override
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trajectory of the first configured scheme, writing snapshots
    /// and a norm series
    Simulate,
    /// Run the convergence studies (expected error and bias over the tau
    /// ladders), with manifest-driven resume
    Converge,
    /// Run the property suites and write a JSON summary; nonzero exit on
    /// any failure
    Verify {
        /// Run a single suite (spectral, semigroups, splitting, truncation,
        /// expansions, reference, stability, boundedness)
        #[arg(long)]
        suite: Option<String>,
    },
    /// Render log-log convergence plots from stats CSV files
    Plot {
        /// Stats CSV files produced by converge
        csv: Vec<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, tspl::Error> {
    let mut cfg = match (&cli.config, &cli.preset) {
        (Some(path), None) => ExperimentConfig::from_file(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => ExperimentConfig::preset("paper-desk")?,
        (Some(_), Some(_)) => {
            return Err(tspl::Error::InvalidConfig(
                "pass either --config or --preset, not both".to_string(),
            ))
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seeds.master = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool, tspl::Error> {
    harness::init_threads(cli.threads);
    let cfg = load_config(&cli)?;
    let out_dir = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output.directory));
    match &cli.command {
        Command::Simulate => {
            let report = harness::cmd_simulate(&cfg, cli.seed, &out_dir)?;
            println!(
                "simulate: scheme {} wrote {} snapshots and {}",
                report.scheme,
                report.snapshots.len(),
                report.norms_csv.display()
            );
            Ok(true)
        }
        Command::Converge => {
            let summary = harness::cmd_converge(&cfg, &out_dir)?;
            for (name, report) in &summary.reports {
                for s in &report.slopes {
                    println!(
                        "{name}: {} E-slope {:.3} B-slope {:.3}",
                        s.norm.label(),
                        s.e_fit.slope,
                        s.b_fit.slope
                    );
                }
            }
            println!(
                "converge: ran {} ensembles, skipped {} (resume), plots: {}",
                summary.ran,
                summary.skipped,
                summary
                    .plots
                    .iter()
                    .map(|p| p.display().to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            );
            Ok(true)
        }
        Command::Verify { suite } => {
            let summary = harness::cmd_verify(&cfg, suite.as_deref(), &out_dir)?;
            for s in &summary.suites {
                println!(
                    "verify {}: {}",
                    s.name,
                    if s.passed { "pass" } else { "FAIL" }
                );
            }
            println!(
                "verify: {} (summary at {})",
                if summary.all_passed { "all suites passed" } else { "FAILURES present" },
                out_dir.join("verify.json").display()
            );
            Ok(summary.all_passed)
        }
        Command::Plot { csv } => {
            let plots = harness::cmd_plot(csv, &out_dir)?;
            for p in &plots {
                println!("plot: {}", p.display());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
