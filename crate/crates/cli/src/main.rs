use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use levy_sync::synchro::DriftKind;
use levy_sync_cli::run::{thread_override, ERROR_EXIT_CODE};
use levy_sync_cli::{parse_config, run, RunConfig, THREADS_ENV};

/// Experiments on coupled SDEs driven by a shared alpha-stable Lévy noise.
#[derive(Parser)]
#[command(name = "levy-sync", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a configuration file.
    Run {
        config: PathBuf,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Skip the SVG charts.
        #[arg(long)]
        no_plots: bool,
    },
    /// Parse and validate a configuration file without running it.
    Validate { config: PathBuf },
    /// List the built-in drift fields.
    ListDrifts,
}

fn load(path: &PathBuf) -> anyhow::Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(parse_config(&text)?)
}

fn configure_threads() -> anyhow::Result<()> {
    let value = std::env::var(THREADS_ENV).ok();
    if let Some(n) = thread_override(value.as_deref())? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure the worker pool")?;
    }
    Ok(())
}

fn main_inner(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::ListDrifts => {
            for info in DriftKind::catalog() {
                let params: Vec<String> = info.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
                println!("{:<10} {:<24} defaults: {}", info.name, info.formula, params.join(", "));
            }
            Ok(0)
        }
        Command::Validate { config } => {
            let c = load(&config)?;
            println!(
                "{}: valid {} configuration ({} paths, seed {})",
                config.display(),
                c.experiment,
                c.mc.n_paths,
                c.mc.master_seed
            );
            Ok(0)
        }
        Command::Run {
            config,
            seed,
            output,
            no_plots,
        } => {
            let mut c = load(&config)?;
            if let Some(seed) = seed {
                c.mc.master_seed = seed;
            }
            if let Some(dir) = output {
                c.output_dir = dir;
            }
            c.emit_plots &= !no_plots;
            configure_threads()?;
            let (status, report) = run(&c)?;
            for check in &report.checks {
                let tag = if check.passed { "ok  " } else { "FAIL" };
                println!("{tag} {}: {}", check.name, check.detail);
            }
            for warning in &report.warnings {
                println!("warning: {warning}");
            }
            println!("wrote {}", c.output_dir.display());
            Ok(status.exit_code())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(ERROR_EXIT_CODE)
        }
    }
}
