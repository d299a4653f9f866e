use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use logsp::scenario::{
    find_preset, find_sweep_preset, presets, run_scenario, sweep, sweep_presets, verify_kernels, worker_count,
    Scenario, Sweep,
};

/// Schrödinger–Poisson scenario runner.
#[derive(Parser)]
#[command(name = "logsp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario. Exit 0: bounded and all checks pass; 2: suspected blow-up; 1: failure.
    Run {
        #[command(flatten)]
        source: Source,
        /// Directory receiving `<name>/`.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run a parameter sweep and write `<name>/phase.csv`.
    Sweep {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Sample the kernel bounds and print a JSON report.
    VerifyKernels {
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
    },
    /// Inspect the shipped scenarios.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// TOML configuration file.
    config: Option<PathBuf>,
    /// Use a shipped preset instead of a file.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Subcommand)]
enum PresetAction {
    /// List scenario and sweep presets.
    List,
    /// Print a preset as TOML.
    Show { name: String },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn execute(command: Command) -> Result<u8, Box<dyn std::error::Error>> {
    match command {
        Command::Run { source, out } => {
            let scenario = match (source.config, source.preset) {
                (Some(path), _) => Scenario::load(&path)?,
                (None, Some(name)) => find_preset(&name).ok_or_else(|| format!("unknown preset {name:?}"))?,
                _ => unreachable!("clap enforces one source"),
            };
            let art = run_scenario(&scenario, &out)?;
            let last = art.run.records.last().expect("at least one record");
            println!(
                "{}: {} at t = {} (grad_norm {:.6e}, energy {:.12e}); checks {}; artifacts in {}",
                scenario.name,
                art.run.summary.outcome.as_str(),
                last.t,
                last.grad_norm,
                last.total_energy,
                if art.run.checks.all_hold() { "passed" } else { "FAILED" },
                art.dir.display()
            );
            Ok(art.exit_code as u8)
        }
        Command::Sweep { source, out } => {
            let cfg = match (source.config, source.preset) {
                (Some(path), _) => Sweep::load(&path)?,
                (None, Some(name)) => find_sweep_preset(&name).ok_or_else(|| format!("unknown sweep preset {name:?}"))?,
                _ => unreachable!("clap enforces one source"),
            };
            let rows = sweep(&cfg, &out, worker_count())?;
            for r in &rows {
                println!(
                    "lambda={} eta={} p={} amplitude={}: {}",
                    r.lambda,
                    r.eta,
                    r.p,
                    r.amplitude,
                    r.outcome.as_str()
                );
            }
            println!("wrote {}", out.join(&cfg.name).join("phase.csv").display());
            Ok(0)
        }
        Command::VerifyKernels { eta, p } => {
            let report = verify_kernels(eta, p)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(if report.passed { 0 } else { 1 })
        }
        Command::Presets { action } => {
            match action {
                PresetAction::List => {
                    for s in presets() {
                        println!("{:<36} {}", s.name, s.description);
                    }
                    for s in sweep_presets() {
                        println!("{:<36} (sweep) {}", s.name, s.description);
                    }
                }
                PresetAction::Show { name } => {
                    if let Some(s) = find_preset(&name) {
                        print!("{}", s.to_toml());
                    } else if let Some(s) = find_sweep_preset(&name) {
                        print!("{}", s.to_toml());
                    } else {
                        return Err(format!("unknown preset {name:?}").into());
                    }
                }
            }
            Ok(0)
        }
    }
}
