use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use maxwell_dirac_lab::catalog::catalog;
use maxwell_dirac_lab::error::LabError;
use maxwell_dirac_lab::ops::StencilOrder;
use maxwell_dirac_lab::verify::{emit_report, run_experiment, ExperimentConfig, ExperimentKind};

const EXIT_CONFIG: u8 = 3;
const EXIT_IO: u8 = 4;
const EXIT_RUNTIME: u8 = 5;
const DEFAULT_OUTPUT: &str = "mdlab-out";

#[derive(Parser)]
#[command(name = "mdlab", version, about = "Conservation-law verification for the damped dual-Ohm field equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a TOML config, or a preset by name.
    Run {
        config: String,
        /// Overrides MDLAB_OUTPUT_DIR and the config's output_dir.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = parse_order)]
        order: Option<StencilOrder>,
        #[arg(long)]
        quiet: bool,
    },
    /// List the named experiments.
    ListExperiments,
    /// List the conservation laws in the catalog.
    ListLaws,
}

fn parse_order(s: &str) -> Result<StencilOrder, String> {
    let v: u8 = s.parse().map_err(|_| format!("`{s}` is not 2 or 4"))?;
    StencilOrder::try_from(v)
}

fn load_config(arg: &str) -> Result<ExperimentConfig, LabError> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Ok(kind) = arg.parse::<ExperimentKind>() {
            return Ok(ExperimentConfig::preset(kind));
        }
    }
    ExperimentConfig::load(path)
}

fn exit_for(err: &LabError) -> u8 {
    match err {
        LabError::Config(_) | LabError::UnknownLaw(_) | LabError::UnknownExperiment(_) => EXIT_CONFIG,
        LabError::Io { .. } | LabError::Snapshot { .. } => EXIT_IO,
        _ => EXIT_RUNTIME,
    }
}

fn run(
    config_arg: &str,
    output_dir: Option<PathBuf>,
    seed: Option<u64>,
    order: Option<StencilOrder>,
    quiet: bool,
) -> Result<u8, LabError> {
    let mut config = load_config(config_arg)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(o) = order {
        config.order = o;
    }
    let dir = output_dir
        .or_else(|| std::env::var_os("MDLAB_OUTPUT_DIR").map(PathBuf::from))
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));
    config.output_dir = Some(dir.clone());
    config.validate()?;

    let report = run_experiment(&config)?;
    let files = emit_report(&report, &dir)?;
    if !quiet {
        for check in &report.checks {
            println!("{}", check.describe());
        }
        println!("records: {}", files.records.display());
        println!("invariants: {}", files.invariants.display());
        println!("summary: {}", files.summary.display());
        for s in &files.snapshots {
            println!("snapshot: {}", s.display());
        }
    }
    let code = report.exit_code();
    if code != 0 && !quiet {
        if let Some(first) = report.failures().next() {
            eprintln!("first failure: {}", first.describe());
        }
    }
    Ok(u8::try_from(code).unwrap_or(1))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListExperiments => {
            for kind in ExperimentKind::ALL {
                println!("{:<24} {}", kind.name(), kind.description());
            }
            ExitCode::SUCCESS
        }
        Command::ListLaws => {
            for law in catalog() {
                println!("{:<26} {:<12} {}", law.name, law.condition.as_str(), law.provenance);
            }
            ExitCode::SUCCESS
        }
        Command::Run {
            config,
            output_dir,
            seed,
            order,
            quiet,
        } => match run(&config, output_dir, seed, order, quiet) {
            Ok(code) => ExitCode::from(code),
            Err(err) => {
                eprintln!("error: {err}");
                ExitCode::from(exit_for(&err))
            }
        },
    }
}
