//! Log-linear fits of the per-level bias, variance and work.

use crate::error::{Error, Result};
use crate::stats::{weighted_line_fit, LevelSummary, LineFit};

/// Smallest standard error of a log₂ estimate; keeps weights finite for
/// noiseless inputs.
const MIN_LOG_SE: f64 = 1e-9;

/// Fitted models |E_ℓ| ≈ c_E 2^{−αℓ}, V_ℓ ≈ c_V 2^{−βℓ}, W_ℓ ≈ c_W 2^{γℓ}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub c_e: f64,
    pub c_v: f64,
    pub c_w: f64,
    /// Standard errors of the rates; zero for rates fixed in advance.
    pub alpha_se: f64,
    pub beta_se: f64,
    pub gamma_se: f64,
}

impl RateFit {
    pub fn bias(&self, level: u32) -> f64 {
        self.c_e * (-self.alpha * f64::from(level)).exp2()
    }

    pub fn variance(&self, level: u32) -> f64 {
        self.c_v * (-self.beta * f64::from(level)).exp2()
    }

    pub fn work(&self, level: u32) -> f64 {
        self.c_w * (self.gamma * f64::from(level)).exp2()
    }
}

/// Rates known in advance; a set rate is used as the slope and only its
/// constant is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FixedRates {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
}

struct Series {
    x: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
}

impl Series {
    fn new() -> Self {
        Self {
            x: Vec::new(),
            y: Vec::new(),
            w: Vec::new(),
        }
    }

    fn push(&mut self, level: u32, value: f64, se_log: f64) {
        let se = se_log.max(MIN_LOG_SE);
        self.x.push(f64::from(level));
        self.y.push(value.log2());
        self.w.push(1.0 / (se * se));
    }

    /// Returns (rate, log₂ constant, rate standard error) with the slope
    /// sign flipped by `sign`.
    fn fit(&self, name: &str, sign: f64, fixed: Option<f64>) -> Result<(f64, f64, f64)> {
        if let Some(rate) = fixed {
            if self.x.is_empty() {
                return Err(Error::Fit(format!("no usable levels for {name}")));
            }
            let slope = sign * rate;
            let sw: f64 = self.w.iter().sum();
            let intercept = self
                .x
                .iter()
                .zip(&self.y)
                .zip(&self.w)
                .map(|((x, y), w)| w * (y - slope * x))
                .sum::<f64>()
                / sw;
            return Ok((rate, intercept, 0.0));
        }
        let LineFit {
            slope,
            intercept,
            slope_se,
            ..
        } = weighted_line_fit(&self.x, &self.y, &self.w)
            .ok_or_else(|| Error::Fit(format!("{name} needs at least two usable levels, have {}", self.x.len())))?;
        Ok((sign * slope, intercept, slope_se))
    }
}

/// Weighted least-squares fit over the levels of `summaries` inside
/// `window`. Bias and variance points are weighted by the inverse squared
/// standard errors of their log₂ estimates; levels with a zero mean (or
/// zero variance) are left out of that fit. Work points carry equal weight.
pub fn fit_rates(
    summaries: &[LevelSummary],
    window: std::ops::RangeInclusive<u32>,
    fixed: FixedRates,
) -> Result<RateFit> {
    let ln2 = std::f64::consts::LN_2;
    let mut e = Series::new();
    let mut v = Series::new();
    let mut w = Series::new();
    for s in summaries.iter().filter(|s| window.contains(&s.level) && s.count >= 2) {
        let mean = s.mean.abs();
        if mean > 0.0 {
            e.push(s.level, mean, s.mean_standard_error() / (mean * ln2));
        }
        if s.variance > 0.0 {
            v.push(s.level, s.variance, s.variance_standard_error() / (s.variance * ln2));
        }
        if s.mean_cost > 0.0 {
            w.push(s.level, s.mean_cost, 1.0);
        }
    }
    let (alpha, log_ce, alpha_se) = e.fit("bias", -1.0, fixed.alpha)?;
    let (beta, log_cv, beta_se) = v.fit("variance", -1.0, fixed.beta)?;
    let (gamma, log_cw, gamma_se) = w.fit("work", 1.0, fixed.gamma)?;
    Ok(RateFit {
        alpha,
        beta,
        gamma,
        c_e: log_ce.exp2(),
        c_v: log_cv.exp2(),
        c_w: log_cw.exp2(),
        alpha_se,
        beta_se,
        gamma_se,
    })
}

/// The last min(5, available) levels above the base level `ell0`, up to
/// `finest`.
pub fn default_fit_window(ell0: u32, finest: u32) -> std::ops::RangeInclusive<u32> {
    let lo = (ell0 + 1).max(finest.saturating_sub(4));
    lo..=finest
}

/// Geometric tail bound c_E 2^{−α(L+1)}/(1 − 2^{−α}) on the bias left after
/// level `level`.
pub fn extrapolate_bias(fit: &RateFit, level: u32) -> Result<f64> {
    if !(fit.alpha > 0.0) {
        return Err(Error::Fit(format!(
            "bias rate {} is not positive; the bias cannot be bounded",
            fit.alpha
        )));
    }
    Ok(fit.c_e * (-fit.alpha * f64::from(level + 1)).exp2() / (1.0 - (-fit.alpha).exp2()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn summary(level: u32, mean: f64, variance: f64, cost: f64) -> LevelSummary {
        LevelSummary {
            level,
            count: 10_000,
            mean,
            variance,
            mean_cost: cost,
        }
    }

    fn noiseless() -> Vec<LevelSummary> {
        (0..=6)
            .map(|l| {
                let x = f64::from(l);
                summary(l, 0.2 * (-x).exp2(), 0.01 * (-x / 2.0).exp2(), 3.0 * x.exp2())
            })
            .collect()
    }

    #[test]
    fn recovers_planted_rates() {
        let fit = fit_rates(&noiseless(), 2..=6, FixedRates::default()).unwrap();
        assert_relative_eq!(fit.alpha, 1.0, max_relative = 1e-12);
        assert_relative_eq!(fit.c_e, 0.2, max_relative = 1e-12);
        assert_relative_eq!(fit.beta, 0.5, max_relative = 1e-12);
        assert_relative_eq!(fit.c_v, 0.01, max_relative = 1e-12);
        assert_relative_eq!(fit.gamma, 1.0, max_relative = 1e-12);
        assert_relative_eq!(fit.c_w, 3.0, max_relative = 1e-12);
    }

    #[test]
    fn fixed_rate_fits_constant_only() {
        let fixed = FixedRates {
            alpha: Some(1.0),
            beta: None,
            gamma: Some(1.0),
        };
        let fit = fit_rates(&noiseless(), 2..=6, fixed).unwrap();
        assert_eq!(fit.alpha, 1.0);
        assert_eq!(fit.alpha_se, 0.0);
        assert_relative_eq!(fit.c_e, 0.2, max_relative = 1e-12);
        assert_relative_eq!(fit.c_w, 3.0, max_relative = 1e-12);
    }

    #[test]
    fn zero_means_are_dropped() {
        let mut s = noiseless();
        s[3].mean = 0.0;
        let fit = fit_rates(&s, 2..=6, FixedRates::default()).unwrap();
        assert_relative_eq!(fit.alpha, 1.0, max_relative = 1e-12);
        s[2].mean = 0.0;
        s[4].mean = 0.0;
        s[5].mean = 0.0;
        assert!(matches!(fit_rates(&s, 2..=6, FixedRates::default()), Err(Error::Fit(_))));
    }

    #[test]
    fn too_few_levels() {
        assert!(fit_rates(&noiseless(), 3..=3, FixedRates::default()).is_err());
    }

    #[test]
    fn window_excludes_base_level() {
        assert_eq!(default_fit_window(0, 2), 1..=2);
        assert_eq!(default_fit_window(0, 9), 5..=9);
        assert_eq!(default_fit_window(3, 6), 4..=6);
    }

    fn with(c_e: f64, alpha: f64) -> RateFit {
        RateFit {
            alpha,
            beta: 1.0,
            gamma: 1.0,
            c_e,
            c_v: 1.0,
            c_w: 1.0,
            alpha_se: 0.0,
            beta_se: 0.0,
            gamma_se: 0.0,
        }
    }

    #[test]
    fn bias_tail() {
        assert_relative_eq!(extrapolate_bias(&with(0.1, 1.0), 3).unwrap(), 0.0125, max_relative = 1e-15);
        assert_relative_eq!(
            extrapolate_bias(&with(0.1, 2.0), 3).unwrap(),
            0.1 / 256.0 / 0.75,
            max_relative = 1e-15
        );
        assert!((extrapolate_bias(&with(0.1, 2.0), 3).unwrap() - 5.21e-4).abs() < 1e-6);
        assert_eq!(extrapolate_bias(&with(0.0, 1.0), 3).unwrap(), 0.0);
        assert!(extrapolate_bias(&with(0.1, 0.0), 3).is_err());
        assert!(extrapolate_bias(&with(0.1, -0.5), 3).is_err());
    }
}
