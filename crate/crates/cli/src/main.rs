use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use chemoblow::commands::{self, EXIT_COMPLETED, EXIT_FAILURE};
use chemoblow::RunConfig;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "chemoblow",
    version = concat!(env!("CARGO_PKG_VERSION"), " (", env!("CHEMOBLOW_GIT_REV"), ")"),
    about = "Radial attraction-repulsion chemotaxis runs, blow-up diagnostics and sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration: subcritical3d, supercritical3d or steady.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Output directory; overrides `output_dir` from the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Sweep worker threads (0 uses one per core).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the system; exit 0 on completion, 2 on blow-up, 1 otherwise.
    Run,
    /// Lockstep full vs reduced runs over three step sizes.
    Compare,
    /// Print the class membership report of the initial data as JSON.
    Membership,
    /// Run the Cartesian product of the `[sweep]` axes into phase.csv.
    Sweep,
    /// Push the initial data into the blow-up class and save it.
    Drive,
    /// Print the effective configuration as TOML.
    ShowConfig,
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match (&cli.config, &cli.preset) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(name)) => RunConfig::preset(name)?,
        (None, None) => bail!("pass --config PATH or --preset NAME"),
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<i32> {
    let cfg = load(cli)?;
    match cli.command {
        Command::Run if cfg.mode == chemoblow::Mode::Compare => execute_compare(&cfg),
        Command::Run => {
            let outcome = commands::cmd_run(&cfg)?;
            let r = &outcome.report;
            println!(
                "{:?}: t_last = {}, growth = {:.4e}, mass drift = {:.3e}",
                r.verdict, r.t_last, r.growth, outcome.relative_mass_drift
            );
            Ok(outcome.exit_code)
        }
        Command::Compare => execute_compare(&cfg),
        Command::Membership => {
            let report = commands::cmd_membership(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(if report.satisfies {
                EXIT_COMPLETED
            } else {
                EXIT_FAILURE
            })
        }
        Command::Sweep => {
            let rows = commands::cmd_sweep(&cfg, cli.workers)?;
            let bad = rows.iter().filter(|r| r.status != "ok").count();
            println!("{} rows, {} invalid or failed", rows.len(), bad);
            Ok(EXIT_COMPLETED)
        }
        Command::Drive => {
            let (summary, report) = commands::cmd_drive(&cfg)?;
            println!(
                "sigma = {:?}, distance = {:.6e}, G = {:?}",
                summary.sigma, summary.distance, report.g_value
            );
            Ok(EXIT_COMPLETED)
        }
        Command::ShowConfig => {
            print!("{}", cfg.to_toml_string());
            Ok(EXIT_COMPLETED)
        }
    }
}

fn execute_compare(cfg: &RunConfig) -> Result<i32> {
    let outcome = commands::cmd_compare(cfg)?;
    for row in &outcome.rows {
        println!(
            "dt = {:.4e}  max e_z = {:.3e}  max e_u = {:.3e}  order = {}",
            row.dt,
            row.max_e_z,
            row.max_e_u,
            row.order_z.map_or("-".into(), |o| format!("{o:.3}"))
        );
    }
    Ok(if outcome.passed {
        EXIT_COMPLETED
    } else {
        EXIT_FAILURE
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CHEMOBLOW_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE as u8)
        }
    }
}
