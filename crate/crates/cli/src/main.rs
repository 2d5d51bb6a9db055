use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sloppy_cli::check::run_check;
use sloppy_cli::config::{ConfigError, Format, ModelConfig, RunConfig};
use sloppy_cli::records::to_json_full_precision;
use sloppy_cli::report::{orbit_text, AnalyzeReport};
use sloppy_cli::runner::{analyze_point, run_orbits, run_sweep, RunError, SweepMetadata};

const EXIT_CHECK_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "sloppy", version, about = "Fisher-information sloppiness analysis of quantum simulation models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; sweeps go to stdout without one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Seed for random models; replaces the one in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// FIM spectrum, rank bounds and dominant CPDs at one point.
    Analyze,
    /// FIM spectra over a parameter grid.
    Sweep,
    /// Orbits of the Hamiltonian terms and the rank bound they imply.
    Orbits,
    /// Invariant suites; exits 3 on any failure.
    Check,
}

fn load_config(cli: &Cli) -> Result<RunConfig, RunError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| ConfigError::new("--config", "this subcommand needs a config file"))?;
    let text = std::fs::read_to_string(path).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
    let mut cfg = RunConfig::from_json(&text)?;
    if let Some(s) = cli.seed {
        match &mut cfg.model {
            ModelConfig::RandomTfim { seed, .. } => *seed = s,
            m => return Err(ConfigError::new("--seed", format!("model {} takes no seed", m.name())).into()),
        }
    }
    Ok(cfg)
}

fn write_file(path: &Path, text: &str) -> Result<(), RunError> {
    std::fs::write(path, text).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    out.with_file_name(name)
}

fn run(cli: &Cli) -> Result<ExitCode, RunError> {
    match cli.command {
        Command::Analyze => {
            let cfg = load_config(cli)?;
            if cfg.sweep.is_some() {
                return Err(ConfigError::new("sweep", "analyze takes a config without a sweep section").into());
            }
            let report = AnalyzeReport::new(&cfg, &analyze_point(&cfg)?);
            print!("{}", report.to_text());
            if let Some(out) = cli.out.clone().or(cfg.output.as_ref().map(|o| o.path.clone())) {
                write_file(&out, &(to_json_full_precision(&report) + "\n"))?;
            }
        }
        Command::Sweep => {
            let cfg = load_config(cli)?;
            let table = run_sweep(&cfg, cli.workers)?;
            let format = cli.format.or(cfg.output.as_ref().map(|o| o.format)).unwrap_or_default();
            let text = match format {
                Format::Csv => table.to_csv_string(),
                Format::Json => table.to_json_string(),
            }
            .map_err(|e| RunError::Io(e.to_string()))?;
            match cli.out.clone().or(cfg.output.as_ref().map(|o| o.path.clone())) {
                Some(out) => {
                    write_file(&out, &text)?;
                    let meta = SweepMetadata::new(&cfg, &table);
                    write_file(&sidecar_path(&out), &(to_json_full_precision(&meta) + "\n"))?;
                }
                None => print!("{text}"),
            }
            let failed = table.records.iter().filter(|r| r.is_error()).count();
            if failed > 0 {
                eprintln!("warning: {failed} of {} grid points failed", table.records.len());
            }
        }
        Command::Orbits => {
            let cfg = load_config(cli)?;
            let report = run_orbits(&cfg)?;
            print!("{}", orbit_text(&report));
            if let Some(out) = &cli.out {
                write_file(out, &(to_json_full_precision(&report) + "\n"))?;
            }
        }
        Command::Check => {
            let cfg = match &cli.config {
                Some(_) => Some(load_config(cli)?),
                None => None,
            };
            let suites = run_check(cfg.as_ref(), cli.seed.unwrap_or(17))?;
            let mut ok = true;
            for s in &suites {
                println!("{}: {}/{} passed", s.name, s.passed, s.total());
                for f in &s.failures {
                    println!("  FAIL {f}");
                }
                ok &= s.ok();
            }
            if !ok {
                return Ok(ExitCode::from(EXIT_CHECK_FAILED));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
