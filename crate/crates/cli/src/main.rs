use std::path::PathBuf;
use std::process::ExitCode;

use amlmc_cli::commands::{cmd_levels, cmd_mlmc, cmd_rates, cmd_sigma_sweep, format_rates};
use amlmc_cli::config::RawConfig;
use amlmc_cli::experiment::Experiment;
use amlmc_cli::{CliError, CliResult};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "amlmc", about = "Adaptive multilevel Monte Carlo experiments", version)]
struct Cli {
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed key.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Overrides the problem key.
    #[arg(long, global = true)]
    problem: Option<ProblemArg>,
    /// Overrides the adaptive key.
    #[arg(long, global = true)]
    adaptive: Option<Switch>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProblemArg {
    Nested,
    Gbm,
    Synthetic,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Per-level diagnostics with a fixed sample budget.
    Levels,
    /// MLMC estimates for each configured tolerance.
    Mlmc,
    /// Fit bias, variance and work rates to a levels file.
    Rates {
        file: PathBuf,
        /// Fit window as lo..hi (inclusive).
        #[arg(long)]
        window: Option<String>,
    },
    /// Work with constant sigma relative to the sample-std baseline.
    SigmaSweep,
}

fn load_config(cli: &Cli) -> CliResult<RawConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            RawConfig::parse(&text)?
        }
        None => RawConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set("seed", seed.to_string());
    }
    if let Some(p) = cli.problem {
        let name = match p {
            ProblemArg::Nested => "nested",
            ProblemArg::Gbm => "gbm",
            ProblemArg::Synthetic => "synthetic",
        };
        cfg.set("problem", name);
    }
    if let Some(a) = cli.adaptive {
        cfg.set("adaptive", if matches!(a, Switch::On) { "on" } else { "off" });
    }
    Ok(cfg)
}

fn parse_window(s: &str) -> CliResult<(u32, u32)> {
    let bad = || CliError::Usage(format!("window must look like 2..7, got {s:?}"));
    let (lo, hi) = s.split_once("..").ok_or_else(bad)?;
    let lo: u32 = lo.parse().map_err(|_| bad())?;
    let hi: u32 = hi.parse().map_err(|_| bad())?;
    if hi < lo {
        return Err(bad());
    }
    Ok((lo, hi))
}

/// Returns true when some run could not resolve its bias.
fn run(cli: &Cli) -> CliResult<bool> {
    match &cli.command {
        Command::Rates { file, window } => {
            let window = window.as_deref().map(parse_window).transpose()?;
            print!("{}", format_rates(&cmd_rates(file, window)?));
            Ok(false)
        }
        Command::Levels => {
            let exp = Experiment::resolve(&load_config(cli)?)?;
            cmd_levels(&exp, &cli.out)?;
            Ok(false)
        }
        Command::Mlmc => {
            let exp = Experiment::resolve(&load_config(cli)?)?;
            let rows = cmd_mlmc(&exp, &cli.out)?;
            Ok(rows.iter().any(|(_, r)| r.bias_unresolved))
        }
        Command::SigmaSweep => {
            let exp = Experiment::resolve(&load_config(cli)?)?;
            cmd_sigma_sweep(&exp, &cli.out)?;
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("warning: bias could not be resolved below max_level for at least one tolerance");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("amlmc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
