//! The four subcommands, as library functions writing into an output
//! directory.

use std::path::Path;

use adaptive_mlmc::mlmc::fit::{default_fit_window, fit_rates, FixedRates, RateFit};
use adaptive_mlmc::mlmc::sampling::LevelBatch;
use adaptive_mlmc::mlmc::{level_diagnostics, run_mlmc, MlmcResult};
use adaptive_mlmc::problems::nested::SigmaMode;

use crate::error::{CliError, CliResult};
use crate::experiment::{Experiment, ProblemKind};
use crate::output::{levels_csv, manifest, mlmc_csv, parse_levels_csv, sigma_csv, write_file};
use crate::with_sampler;

/// Fixed-budget diagnostics on the configured level range. Writes
/// `levels.csv` and `levels.manifest`.
pub fn cmd_levels(exp: &Experiment, out: &Path) -> CliResult<Vec<LevelBatch>> {
    let (lo, hi) = (*exp.diag_levels.start(), *exp.diag_levels.end());
    let batches = with_sampler!(&exp.problem, s => level_diagnostics(s, lo, hi, exp.m_diag, &exp.params, exp.seed))?;
    write_file(out, "levels.csv", &levels_csv(&batches))?;
    write_file(out, "levels.manifest", &manifest("levels", &exp.resolved, &exp.calibrated))?;
    Ok(batches)
}

/// One MLMC run per tolerance, the i-th with seed `seed + i`.
pub fn run_sweep(exp: &Experiment, epsilons: &[f64]) -> CliResult<Vec<(f64, MlmcResult)>> {
    epsilons
        .iter()
        .enumerate()
        .map(|(i, &eps)| {
            let seed = exp.seed.wrapping_add(i as u64);
            let r = with_sampler!(&exp.problem, s => run_mlmc(s, eps, &exp.mlmc, &exp.params, seed))?;
            Ok((eps, r))
        })
        .collect()
}

/// Writes `mlmc.csv` and `mlmc.manifest`. Unresolved runs stay in the file
/// and are flagged.
pub fn cmd_mlmc(exp: &Experiment, out: &Path) -> CliResult<Vec<(f64, MlmcResult)>> {
    if exp.epsilons.is_empty() {
        return Err(CliError::Usage("mlmc needs epsilons".into()));
    }
    let rows = run_sweep(exp, &exp.epsilons)?;
    write_file(out, "mlmc.csv", &mlmc_csv(&rows))?;
    write_file(out, "mlmc.manifest", &manifest("mlmc", &exp.resolved, &exp.calibrated))?;
    Ok(rows)
}

/// Fits rates to a `levels` file. The default window is the last five
/// levels above the first row's level.
pub fn cmd_rates(path: &Path, window: Option<(u32, u32)>) -> CliResult<RateFit> {
    let text = std::fs::read_to_string(path)?;
    let rows = parse_levels_csv(&text)?;
    if rows.len() < 2 {
        return Err(CliError::Usage(format!(
            "{} has {} data row(s); rate fitting needs at least 2",
            path.display(),
            rows.len()
        )));
    }
    let window = match window {
        Some((lo, hi)) => lo..=hi,
        None => {
            let base = rows.iter().map(|r| r.level).min().unwrap_or(0);
            let finest = rows.iter().map(|r| r.level).max().unwrap_or(0);
            default_fit_window(base, finest)
        }
    };
    fit_rates(&rows, window, FixedRates::default()).map_err(|e| CliError::Usage(e.to_string()))
}

pub fn format_rates(fit: &RateFit) -> String {
    format!(
        "alpha {:.3} +- {:.2e}\nbeta {:.3} +- {:.2e}\ngamma {:.3} +- {:.2e}\n",
        fit.alpha, fit.alpha_se, fit.beta, fit.beta_se, fit.gamma, fit.gamma_se
    )
}

/// Total work with constant σ divided by the sample-std baseline, at each
/// of the three sweep tolerances.
pub fn cmd_sigma_sweep(exp: &Experiment, out: &Path) -> CliResult<Vec<(f64, [f64; 3])>> {
    if exp.kind != ProblemKind::Nested {
        return Err(CliError::Usage("sigma-sweep needs the nested problem".into()));
    }
    if !exp.params.adaptive {
        return Err(CliError::Usage("sigma-sweep needs adaptive = on".into()));
    }
    if exp.sigmas.is_empty() {
        return Err(CliError::Usage("sigma-sweep needs sigmas".into()));
    }
    let baseline = run_sweep(&exp.with_sigma_mode(SigmaMode::SampleStd)?, &exp.sweep_epsilons)?;
    let mut rows = Vec::with_capacity(exp.sigmas.len());
    for &sigma in &exp.sigmas {
        let runs = run_sweep(&exp.with_sigma_mode(SigmaMode::Constant(sigma))?, &exp.sweep_epsilons)?;
        let mut ratios = [0.0; 3];
        for (k, ((_, run), (_, base))) in runs.iter().zip(&baseline).enumerate() {
            ratios[k] = run.total_cost / base.total_cost;
        }
        rows.push((sigma, ratios));
    }
    write_file(out, "sigma_sweep.csv", &sigma_csv(&rows))?;
    write_file(out, "sigma_sweep.manifest", &manifest("sigma-sweep", &exp.resolved, &exp.calibrated))?;
    Ok(rows)
}
