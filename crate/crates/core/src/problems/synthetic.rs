//! Artificial problem with exactly known g:
//!
//! ```text
//! g   = −μ + ξ,                         ξ ~ N(0, 1)
//! g_k = g + 2^{−kγ/2}(2^{−kγ/2} + ζ² − 1),  ζ ~ N(0, 1)
//! ```
//!
//! One (ξ, ζ) pair drives every level of a correction sample, and level k
//! costs 2^{γk} work units. The normalized error (g_k − g)/(σ2^{−kγ/2}) is
//! positive with probability tending to one, so sign-based refinement cannot
//! improve the bias rate here.

use crate::error::{Error, Result};
use crate::refine::{RefinableSampler, RefinableState};
use crate::rng::{inverse_normal_cdf, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub mu: f64,
    pub gamma: f64,
    pub sigma: f64,
}

impl SyntheticSpec {
    pub fn new(mu: f64, gamma: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::Config(format!("mu must be finite, got {mu}")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self { mu, gamma, sigma })
    }

    /// μ chosen so that P(g ≥ 0) = `target_p`, with σ = √3.
    pub fn for_target(target_p: f64, gamma: f64) -> Result<Self> {
        Self::new(mu_for_target(target_p)?, gamma, 3f64.sqrt())
    }

    /// g_k for the latent draw (g, ζ).
    pub fn approximation(&self, g: f64, zeta: f64, level: u32) -> f64 {
        let scale = (-f64::from(level) * self.gamma / 2.0).exp2();
        g + scale * (scale + zeta * zeta - 1.0)
    }

    pub fn level_cost(&self, level: u32) -> f64 {
        (f64::from(level) * self.gamma).exp2()
    }
}

/// μ = Φ⁻¹(1 − p).
pub fn mu_for_target(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("target probability must lie in (0, 1), got {p}")));
    }
    Ok(-inverse_normal_cdf(p))
}

/// Latent draw shared by all levels of one correction sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticDraw {
    /// The exact g.
    pub g: f64,
    pub zeta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticState {
    pub level: u32,
    value: f64,
    sigma: f64,
    cost: f64,
}

impl RefinableState for SyntheticState {
    fn level(&self) -> u32 {
        self.level
    }
    fn value(&self) -> f64 {
        self.value
    }
    fn sigma(&self) -> f64 {
        self.sigma
    }
    fn cost(&self) -> f64 {
        self.cost
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSampler {
    pub spec: SyntheticSpec,
}

impl SyntheticSampler {
    pub fn new(spec: SyntheticSpec) -> Self {
        Self { spec }
    }
}

impl RefinableSampler for SyntheticSampler {
    type Coupling = SyntheticDraw;
    type State = SyntheticState;

    fn couple(&self, _ell: u32, stream: &Stream) -> Result<SyntheticDraw> {
        let mut s = stream.substream(0)?;
        let xi = s.standard_normal();
        let zeta = s.standard_normal();
        Ok(SyntheticDraw {
            g: -self.spec.mu + xi,
            zeta,
        })
    }

    fn init(&self, draw: &mut SyntheticDraw, level: u32) -> Result<SyntheticState> {
        Ok(SyntheticState {
            level,
            value: self.spec.approximation(draw.g, draw.zeta, level),
            sigma: self.spec.sigma,
            cost: self.spec.level_cost(level),
        })
    }

    fn refine(&self, draw: &mut SyntheticDraw, state: &mut SyntheticState) -> Result<()> {
        let level = state.level + 1;
        state.cost += self.spec.level_cost(level) - self.spec.level_cost(state.level);
        state.level = level;
        state.value = self.spec.approximation(draw.g, draw.zeta, level);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refine::{adaptive_sample_coupled, heaviside, RefinementParams};
    use crate::rng::derive_stream;
    use crate::stats::weighted_line_fit;
    use approx::assert_relative_eq;

    /// Φ⁻¹ by Newton iteration on the Taylor series of Φ.
    fn series_quantile(p: f64) -> f64 {
        fn cdf(x: f64) -> f64 {
            // Φ(x) = ½ + φ(x)·Σ x^{2n+1}/(1·3·…·(2n+1))
            let mut term = x;
            let mut sum = x;
            for n in 1..200 {
                term *= x * x / f64::from(2 * n + 1);
                sum += term;
            }
            0.5 + sum * (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
        }
        let mut x = 0.0f64;
        for _ in 0..100 {
            let density = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
            x -= (cdf(x) - p) / density;
        }
        x
    }

    #[test]
    fn mu_for_standard_targets() {
        assert_eq!(mu_for_target(0.5).unwrap(), 0.0);
        let mu = mu_for_target(0.025).unwrap();
        assert!((mu - series_quantile(0.975)).abs() < 1e-8, "{mu}");
        assert!((mu - 1.959_963_984_540_054).abs() < 1e-12);
        assert_relative_eq!(mu_for_target(0.975).unwrap(), -mu, max_relative = 1e-14);
        assert!(mu_for_target(0.0).is_err());
        assert!(mu_for_target(1.0).is_err());
    }

    #[test]
    fn approximation_formula() {
        let spec = SyntheticSpec::for_target(0.025, 1.0).unwrap();
        let g = 0.3;
        // ζ² = 1 − 2^{−k/2} removes the error exactly.
        let k = 4;
        let zeta = (1.0f64 - 0.25).sqrt();
        assert_relative_eq!(spec.approximation(g, zeta, k), g, epsilon = 1e-15);
        for k in 1..10 {
            assert!(spec.approximation(g, 0.0, k) < g);
        }
        assert!((spec.approximation(g, 1.7, 80) - g).abs() < 1e-11);
    }

    #[test]
    fn refinement_charges_cost_difference() {
        let sampler = SyntheticSampler::new(SyntheticSpec::new(1.0, 2.0, 1.0).unwrap());
        let mut draw = SyntheticDraw { g: 0.1, zeta: 0.5 };
        let mut state = sampler.init(&mut draw, 2).unwrap();
        assert_eq!(state.cost(), 16.0);
        sampler.refine(&mut draw, &mut state).unwrap();
        sampler.refine(&mut draw, &mut state).unwrap();
        assert_eq!(state.cost(), 256.0);
        assert_eq!(state, sampler.init(&mut draw, 4).unwrap());
    }

    #[test]
    fn normalized_error_is_biased_positive() {
        // Z_k = (2^{−k/2} + ζ² − 1)/√3 has mean 2^{−k/2}/√3.
        let spec = SyntheticSpec::for_target(0.025, 1.0).unwrap();
        let sampler = SyntheticSampler::new(spec);
        let n = 100_000;
        let k = 6;
        let scale = 2f64.powf(-f64::from(k) / 2.0);
        let (mut sum, mut sum_sq, mut positive) = (0.0, 0.0, 0u32);
        for i in 0..n {
            let stream = derive_stream(3, &[i]).unwrap();
            let mut draw = sampler.couple(k, &stream).unwrap();
            let z = (spec.approximation(draw.g, draw.zeta, k) - draw.g) / (spec.sigma * scale);
            sum += z;
            sum_sq += z * z;
            positive += u32::from(z > 0.0);
            let _ = sampler.init(&mut draw, k).unwrap();
        }
        let mean = sum / n as f64;
        let se = ((sum_sq / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - scale / 3f64.sqrt()).abs() < 4.0 * se, "{mean}");
        // P(ζ² > 1 − 2^{−3}) ≈ 0.35 at k = 6; it tends to one as k grows.
        assert!(f64::from(positive) / n as f64 > 0.3);
    }

    #[test]
    fn adaptive_oracle_error_decays_at_rate_one() {
        let spec = SyntheticSpec::for_target(0.025, 1.0).unwrap();
        let sampler = SyntheticSampler::new(spec);
        let params = RefinementParams::adaptive(1.95, 1.0, 1.0, 1.0).unwrap();
        let levels: Vec<u32> = (2..=7).collect();
        let n = 200_000u64;
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut w = Vec::new();
        for &ell in &levels {
            let mut mismatches = 0u64;
            for i in 0..n {
                let stream = derive_stream(17, &[u64::from(ell), i]).unwrap();
                let mut draw = sampler.couple(ell, &stream).unwrap();
                let exact = heaviside(draw.g).unwrap();
                let out = adaptive_sample_coupled(&sampler, &mut draw, ell, &params).unwrap();
                mismatches += u64::from(heaviside(out.state.value()).unwrap() != exact);
            }
            let p = mismatches as f64 / n as f64;
            let se_log = ((p * (1.0 - p) / n as f64).sqrt() / (p * std::f64::consts::LN_2)).max(1e-9);
            x.push(f64::from(ell));
            y.push(p.log2());
            w.push(1.0 / (se_log * se_log));
        }
        let rate = -weighted_line_fit(&x, &y, &w).unwrap().slope;
        assert!((rate - 1.0).abs() < 0.25, "{rate}");
    }
}
