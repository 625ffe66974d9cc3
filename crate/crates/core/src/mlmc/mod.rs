//! The multilevel estimator: continuation runs, starting-level selection and
//! fixed-budget level diagnostics.

pub mod allocation;
pub mod fit;
pub mod sampling;
pub mod theory;

pub use allocation::optimal_allocation;
pub use fit::{default_fit_window, extrapolate_bias, fit_rates, FixedRates, RateFit};
pub use sampling::{sample_level, LevelBatch, SampleStreams};
pub use theory::{complexity_regime, optimal_theta, r_bound, Complexity, RBound, Regime};

use crate::error::{Error, Result};
use crate::refine::{RefinableSampler, RefinementParams};
use crate::stats::LevelSummary;

#[derive(Debug, Clone, PartialEq)]
pub struct MlmcConfig {
    pub start_level: u32,
    pub max_level: u32,
    /// Smallest sample count on any active level.
    pub m_min: u64,
    /// Share of ε² given to the estimator variance; the rest bounds the
    /// squared bias.
    pub phi: f64,
    /// Samples per level in the initial pilot over ℓ₀..ℓ₀+2.
    pub pilot_samples: u64,
    pub fixed_rates: FixedRates,
    /// Lower bound applied to a fitted (not fixed) bias rate.
    pub alpha_floor: f64,
    /// Cap on refit-and-resample rounds.
    pub max_iterations: u32,
}

impl Default for MlmcConfig {
    fn default() -> Self {
        Self {
            start_level: 0,
            max_level: 20,
            m_min: 32,
            phi: 0.5,
            pilot_samples: 1000,
            fixed_rates: FixedRates::default(),
            alpha_floor: 0.5,
            max_iterations: 100,
        }
    }
}

impl MlmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_min < 2 {
            return Err(Error::Config(format!("m_min must be at least 2, got {}", self.m_min)));
        }
        if !(self.phi > 0.0 && self.phi < 1.0) {
            return Err(Error::Config(format!("phi must lie in (0, 1), got {}", self.phi)));
        }
        if self.max_level < self.start_level {
            return Err(Error::Config(format!(
                "max_level {} is below start_level {}",
                self.max_level, self.start_level
            )));
        }
        if self.pilot_samples < self.m_min {
            return Err(Error::Config(format!(
                "pilot_samples {} is below m_min {}",
                self.pilot_samples, self.m_min
            )));
        }
        if !(self.alpha_floor > 0.0 && self.alpha_floor.is_finite()) {
            return Err(Error::Config(format!("alpha_floor must be positive, got {}", self.alpha_floor)));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlmcResult {
    /// Σ of the level means over ℓ₀..=L, clamped to [0, 1].
    pub estimate: f64,
    pub unclamped_estimate: f64,
    /// Every sampled level, including pilot levels above L.
    pub levels: Vec<LevelBatch>,
    pub total_cost: f64,
    pub start_level: u32,
    pub final_level: u32,
    pub fit: Option<RateFit>,
    /// Extrapolated bias after `final_level`.
    pub bias_estimate: f64,
    /// Σ V_ℓ/M_ℓ over ℓ₀..=L.
    pub variance_estimate: f64,
    /// The tolerance would need a level above `max_level`, or the bias could
    /// not be bounded.
    pub bias_unresolved: bool,
    pub iterations: u32,
}

impl MlmcResult {
    pub fn summaries(&self) -> Vec<LevelSummary> {
        self.levels.iter().map(|b| b.stats.summary()).collect()
    }
}

struct Continuation<'a, P: RefinableSampler> {
    problem: &'a P,
    params: &'a RefinementParams,
    config: &'a MlmcConfig,
    streams: SampleStreams,
    levels: Vec<LevelBatch>,
}

impl<P: RefinableSampler> Continuation<'_, P> {
    fn ell0(&self) -> u32 {
        self.config.start_level
    }

    fn finest(&self) -> u32 {
        self.ell0() + self.levels.len() as u32 - 1
    }

    fn count(&self, level: u32) -> u64 {
        self.levels
            .get((level - self.ell0()) as usize)
            .map_or(0, |b| b.stats.count())
    }

    /// Bring `level` up to `target` samples.
    fn sample_to(&mut self, level: u32, target: u64) -> Result<()> {
        while self.levels.len() <= (level - self.ell0()) as usize {
            let next = self.ell0() + self.levels.len() as u32;
            self.levels.push(LevelBatch::new(next));
        }
        let idx = (level - self.ell0()) as usize;
        let have = self.levels[idx].stats.count();
        if target > have {
            let batch = sample_level(self.problem, level, self.ell0(), self.params, self.streams, have..target)?;
            self.levels[idx].merge(&batch);
        }
        Ok(())
    }

    fn fit(&self) -> Result<RateFit> {
        let summaries: Vec<LevelSummary> = self.levels.iter().map(|b| b.stats.summary()).collect();
        let mut fit = fit_rates(
            &summaries,
            default_fit_window(self.ell0(), self.finest()),
            self.config.fixed_rates,
        )?;
        if self.config.fixed_rates.alpha.is_none() && fit.alpha < self.config.alpha_floor {
            // Refit the constant under the floored slope.
            let fixed = FixedRates {
                alpha: Some(self.config.alpha_floor),
                ..self.config.fixed_rates
            };
            let floored = fit_rates(&summaries, default_fit_window(self.ell0(), self.finest()), fixed)?;
            fit.alpha = floored.alpha;
            fit.c_e = floored.c_e;
        }
        Ok(fit)
    }

    /// Smallest L ≥ ℓ₀ whose extrapolated bias meets the bias budget.
    fn choose_level(&self, fit: &RateFit, epsilon: f64) -> Result<Option<u32>> {
        let budget = ((1.0 - self.config.phi) * epsilon * epsilon).sqrt();
        for level in self.ell0()..=self.config.max_level {
            if extrapolate_bias(fit, level)? <= budget {
                return Ok(Some(level));
            }
        }
        Ok(None)
    }

    /// Observed V and W where sampled (V floored at a tenth of the model on
    /// correction levels), the fitted models elsewhere.
    fn level_model(&self, level: u32, fit: &RateFit) -> (f64, f64) {
        if self.count(level) >= 2 {
            let stats = &self.levels[(level - self.ell0()) as usize].stats;
            let v = if level > self.ell0() {
                stats.variance().max(fit.variance(level) / 10.0)
            } else {
                stats.variance()
            };
            (v, stats.mean_cost())
        } else {
            (fit.variance(level), fit.work(level))
        }
    }
}

/// Estimate P(g ≥ 0) to root-mean-square error `epsilon`.
///
/// Pilot samples on ℓ₀..ℓ₀+2 seed a loop that fits the level models, picks
/// the smallest L with extrapolated squared bias ≤ (1 − φ)ε², allocates
/// samples for variance ≤ φε², and draws the missing samples, until no level
/// needs more. L only grows between iterations. A fit without enough signal
/// doubles the samples on its window instead.
pub fn run_mlmc<P: RefinableSampler>(
    problem: &P,
    epsilon: f64,
    config: &MlmcConfig,
    params: &RefinementParams,
    seed: u64,
) -> Result<MlmcResult> {
    config.validate()?;
    params.validate()?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    let ell0 = config.start_level;
    let mut run = Continuation {
        problem,
        params,
        config,
        streams: SampleStreams {
            seed,
            tag: sampling::ESTIMATOR_TAG,
        },
        levels: Vec::new(),
    };
    let pilot_top = (ell0 + 2).min(config.max_level);
    for level in ell0..=pilot_top {
        run.sample_to(level, config.pilot_samples)?;
    }

    let mut bias_unresolved = false;
    let mut level = pilot_top;
    let mut fit = None;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iterations {
        iterations += 1;
        let current = match run.fit() {
            Ok(f) => f,
            Err(Error::Fit(_)) => {
                for l in default_fit_window(ell0, run.finest()) {
                    let doubled = 2 * run.count(l).max(config.m_min);
                    run.sample_to(l, doubled)?;
                }
                continue;
            }
            Err(e) => return Err(e),
        };
        let chosen = match run.choose_level(&current, epsilon)? {
            Some(l) => l,
            None => {
                bias_unresolved = true;
                config.max_level
            }
        };
        // L never drops once chosen, so no sampled correction is discarded.
        let chosen = if fit.is_some() { chosen.max(level) } else { chosen };
        fit = Some(current);
        level = chosen;

        let models: Vec<(f64, f64)> = (ell0..=chosen).map(|l| run.level_model(l, &current)).collect();
        let variances: Vec<f64> = models.iter().map(|m| m.0).collect();
        let works: Vec<f64> = models.iter().map(|m| m.1).collect();
        let targets = optimal_allocation(&variances, &works, epsilon, config.phi, config.m_min)?;
        let mut grew = false;
        for (l, &target) in (ell0..=chosen).zip(&targets) {
            if target > run.count(l) {
                run.sample_to(l, target)?;
                grew = true;
            }
        }
        if !grew {
            converged = true;
            break;
        }
    }
    if !converged || fit.is_none() {
        bias_unresolved = true;
    }

    let final_level = level.min(run.finest());
    let active = &run.levels[..=(final_level - ell0) as usize];
    let unclamped: f64 = active.iter().map(|b| b.stats.mean()).sum();
    let variance_estimate = active
        .iter()
        .map(|b| b.stats.variance() / b.stats.count() as f64)
        .sum();
    let bias_estimate = fit
        .as_ref()
        .and_then(|f| extrapolate_bias(f, final_level).ok())
        .unwrap_or(f64::INFINITY);
    let total_cost = run.levels.iter().map(|b| b.stats.cost_sum()).sum();
    Ok(MlmcResult {
        estimate: unclamped.clamp(0.0, 1.0),
        unclamped_estimate: unclamped,
        levels: run.levels,
        total_cost,
        start_level: ell0,
        final_level,
        fit,
        bias_estimate,
        variance_estimate,
        bias_unresolved,
        iterations,
    })
}

/// Fixed-budget diagnostics: `samples` corrections on each of
/// `start_level..=max_level`.
pub fn level_diagnostics<P: RefinableSampler>(
    problem: &P,
    start_level: u32,
    max_level: u32,
    samples: u64,
    params: &RefinementParams,
    seed: u64,
) -> Result<Vec<LevelBatch>> {
    if samples == 0 {
        return Err(Error::Config("diagnostic sample count must be positive".into()));
    }
    if max_level < start_level {
        return Err(Error::Config(format!(
            "max_level {max_level} is below start_level {start_level}"
        )));
    }
    let streams = SampleStreams {
        seed,
        tag: sampling::DIAGNOSTIC_TAG,
    };
    (start_level..=max_level)
        .map(|l| sample_level(problem, l, start_level, params, streams, 0..samples))
        .collect()
}

/// Starting level with the smallest proxy cost
/// (√(V_b W_b)(ℓ₀) + Σ_{ℓ>ℓ₀} √(V_ℓ W_ℓ))², where V_b, W_b belong to the
/// base term at ℓ₀ and the sum runs over corrections up to one level above
/// the largest candidate. Ties go to the smaller level.
pub fn select_start_level<P: RefinableSampler>(
    problem: &P,
    params: &RefinementParams,
    pilot_m: u64,
    candidates: std::ops::RangeInclusive<u32>,
    seed: u64,
) -> Result<u32> {
    if candidates.is_empty() {
        return Err(Error::Config("no candidate starting levels".into()));
    }
    if pilot_m < 100 {
        return Err(Error::Config(format!("pilot_m must be at least 100, got {pilot_m}")));
    }
    let (lo, hi) = (*candidates.start(), *candidates.end());
    let streams = SampleStreams {
        seed,
        tag: sampling::PILOT_TAG,
    };
    let root = |b: &LevelBatch| (b.stats.variance() * b.stats.mean_cost()).sqrt();
    let mut corrections = Vec::new();
    for l in (lo + 1)..=(hi + 1) {
        // Correction terms do not depend on the base level.
        corrections.push(root(&sample_level(problem, l, 0, params, streams, 0..pilot_m)?));
    }
    let mut best = (lo, f64::INFINITY);
    for ell0 in candidates {
        let base = sample_level(problem, ell0, ell0, params, streams, 0..pilot_m)?;
        let tail: f64 = corrections[(ell0 - lo) as usize..].iter().sum();
        let proxy = (root(&base) + tail).powi(2);
        if proxy < best.1 {
            best = (ell0, proxy);
        }
    }
    Ok(best.0)
}
