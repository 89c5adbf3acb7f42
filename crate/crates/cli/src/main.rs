use clap::{Parser, Subcommand};
use cyberbm_core::sweep::{
    emit_experiment_defaults, output_dir, Experiment, ExperimentConfig, Variant,
};
use cyberbm_core::Error;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "cyberbm",
    version,
    about = "Optimal cyber mitigation and insurance under Bonus-Malus contracts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the base premium and write the results as CSV.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Contract variant; both when omitted.
        #[arg(long, value_parser = parse_variant)]
        variant: Option<Variant>,
        /// Solve grid points on this many threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Output directory (overrides the environment and the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the reference experiment configuration.
    Defaults {
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a configuration without solving.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare a Monte Carlo run of the optimal policy with the dynamic program.
    McCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        paths: usize,
        #[arg(long)]
        seed: u64,
        /// Base premium; defaults to the configured validation premium.
        #[arg(long)]
        premium: Option<f64>,
        #[arg(long, value_parser = parse_variant)]
        variant: Option<Variant>,
    },
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

enum Failure {
    Config(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Defaults { out } => {
            std::fs::write(&out, emit_experiment_defaults().to_json() + "\n")
                .map_err(|e| Failure::Config(format!("cannot write {}: {e}", out.display())))?;
            println!("wrote {}", out.display());
        }
        Command::Validate { config } => {
            ExperimentConfig::load(&config)?.validate()?;
            println!("{}: ok", config.display());
        }
        Command::Solve {
            config,
            variant,
            jobs,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = output_dir(&cfg, out.as_deref());
            let start = Instant::now();
            let experiment = Experiment::prepare(cfg)?;
            eprintln!("loss tables ready in {:.1?}", start.elapsed());
            let variants = variant.map_or(vec![Variant::Flat, Variant::Bm], |v| vec![v]);
            let mut results = Vec::new();
            for v in variants {
                let result = experiment.sweep(v, jobs)?;
                eprintln!(
                    "{v}: {} premiums solved in {:.1?}",
                    result.rows.len(),
                    start.elapsed()
                );
                results.push(result);
            }
            for result in &results {
                for path in result.write(&dir)? {
                    println!("wrote {}", path.display());
                }
                println!("regime bands ({}):", result.variant);
                for band in result.bands() {
                    println!("  [{:.3}, {:.3}] {}", band.start, band.end, band.regime);
                }
            }
        }
        Command::McCheck {
            config,
            paths,
            seed,
            premium,
            variant,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let mc = cfg.mc_validation;
            let premium = premium.or(mc.map(|m| m.base_premium)).ok_or_else(|| {
                Failure::Config(
                    "no --premium given and no mc_validation block in the config".into(),
                )
            })?;
            let variant = variant.or(mc.map(|m| m.variant)).unwrap_or(Variant::Bm);
            let experiment = Experiment::prepare(cfg)?;
            let report = experiment.mc_check(variant, premium, paths, seed)?;
            println!("variant {variant}, base premium {premium}, {paths} paths, seed {seed}");
            println!("V0 (dynamic program)  {:.6}", report.v0);
            println!(
                "Monte Carlo mean      {:.6} ± {:.6}",
                report.mean, report.std_error
            );
            println!("max state-frequency z {:.3}", report.max_frequency_z);
            if !(report.value_consistent() && report.frequencies_consistent()) {
                return Err(Failure::Numerical(
                    "Monte Carlo estimate disagrees with the dynamic program".into(),
                ));
            }
            println!("consistent");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(EXIT_NUMERICAL)
        }
    }
}
