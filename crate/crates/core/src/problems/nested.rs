//! Nested expectations g = E[X | Y] approximated by inner Monte Carlo.
//!
//! Level k uses N_k = N₀·2^{γk} inner draws. All approximations of one outer
//! draw Y read prefixes of a single inner-draw pool, so refining from k to
//! k+1 keeps the first N_k draws and appends N_k(2^γ − 1) new ones, and two
//! states at the same total level are bit-identical.

use crate::error::{Error, Result};
use crate::refine::{RefinableSampler, RefinableState};
use crate::rng::{normal_cdf, Stream};

/// Smallest σ used when forming δ = g/σ.
pub const SIGMA_FLOOR: f64 = 1e-12;

const PAYOFF_OFFSET: f64 = 0.0805;
const QUADRATIC: f64 = 0.02;
// 7√2/25
const CROSS: f64 = 7.0 * std::f64::consts::SQRT_2 / 25.0;

/// How σ_k is formed for δ_k = g_k/σ_k.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaMode {
    /// Sample standard deviation of the inner draws used so far.
    SampleStd,
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NestedModelSpec {
    /// Inner draws at level 0.
    pub n0: u64,
    /// Inner-sample growth: level k uses n0·2^{gamma·k} draws.
    pub gamma: u32,
    pub sigma_mode: SigmaMode,
}

impl NestedModelSpec {
    pub fn new(n0: u64, gamma: u32, sigma_mode: SigmaMode) -> Result<Self> {
        if n0 < 2 {
            return Err(Error::Config(format!("n0 must be at least 2, got {n0}")));
        }
        if gamma == 0 {
            return Err(Error::Config("nested gamma must be a positive integer".into()));
        }
        if let SigmaMode::Constant(s) = sigma_mode {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("constant sigma must be positive, got {s}")));
            }
        }
        Ok(Self {
            n0,
            gamma,
            sigma_mode,
        })
    }

    /// Default confidence constant 3/√N₀.
    pub fn default_c(&self) -> f64 {
        3.0 / (self.n0 as f64).sqrt()
    }

    /// N_k = N₀·2^{γk}.
    pub fn inner_count(&self, level: u32) -> u64 {
        self.n0 << (self.gamma * level)
    }
}

impl Default for NestedModelSpec {
    fn default() -> Self {
        Self {
            n0: 16,
            gamma: 1,
            sigma_mode: SigmaMode::SampleStd,
        }
    }
}

/// One draw of X | Y for the model problem
/// X = 0.02(Y² − Y₀²) + (7√2/25)·Y·Y₁ − 0.0805 with fresh Y₀, Y₁ ~ N(0, 1).
pub fn model_inner_payoff(y: f64, stream: &mut Stream) -> f64 {
    let y0 = stream.standard_normal();
    let y1 = stream.standard_normal();
    QUADRATIC * (y * y - y0 * y0) + CROSS * y * y1 - PAYOFF_OFFSET
}

/// E[X | Y] = 0.02(Y² − 1) − 0.0805.
pub fn model_conditional_mean(y: f64) -> f64 {
    QUADRATIC * (y * y - 1.0) - PAYOFF_OFFSET
}

/// Var(X | Y) = 2·0.02² + (7√2/25)²·Y².
pub fn model_conditional_variance(y: f64) -> f64 {
    2.0 * QUADRATIC * QUADRATIC + CROSS * CROSS * y * y
}

/// P(E[X | Y] ≥ 0) = P(Y² ≥ 1 + 0.0805/0.02) = 2Φ(−√5.025).
pub fn model_true_probability() -> f64 {
    2.0 * normal_cdf(-(1.0 + PAYOFF_OFFSET / QUADRATIC).sqrt())
}

/// Shifted running sums of inner draws: s1 = Σ(x − shift), s2 = Σ(x − shift)².
/// Shifting by the first draw keeps the variance free of cancellation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerMoments {
    pub n: u64,
    pub shift: f64,
    pub s1: f64,
    pub s2: f64,
}

impl InnerMoments {
    pub fn from_draws(draws: &[f64]) -> Self {
        let shift = draws.first().copied().unwrap_or(0.0);
        let mut m = Self {
            n: 0,
            shift,
            s1: 0.0,
            s2: 0.0,
        };
        for &x in draws {
            m.push(x);
        }
        m
    }

    #[inline]
    fn push(&mut self, x: f64) {
        let d = x - self.shift;
        self.n += 1;
        self.s1 += d;
        self.s2 += d * d;
    }

    pub fn mean(&self) -> f64 {
        self.shift + self.s1 / self.n as f64
    }

    /// Unbiased sample variance; zero for fewer than two draws.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        ((self.s2 - self.s1 * self.s1 / n) / (n - 1.0)).max(0.0)
    }
}

/// Lazily extended inner-draw pool for one outer draw Y. `snapshots[k]`
/// holds the moments of the first N_k draws.
#[derive(Debug, Clone)]
pub struct InnerPool {
    y: f64,
    stream: Stream,
    running: InnerMoments,
    snapshots: Vec<InnerMoments>,
}

impl InnerPool {
    pub fn new(y: f64, stream: Stream) -> Self {
        Self {
            y,
            stream,
            running: InnerMoments {
                n: 0,
                shift: 0.0,
                s1: 0.0,
                s2: 0.0,
            },
            snapshots: Vec::new(),
        }
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    /// Inner draws generated so far.
    pub fn drawn(&self) -> u64 {
        self.running.n
    }

    /// Moments of the first N_level draws, extending the pool if needed.
    pub fn prefix(&mut self, spec: &NestedModelSpec, level: u32) -> InnerMoments {
        while self.snapshots.len() <= level as usize {
            let target = spec.inner_count(self.snapshots.len() as u32);
            self.extend_to(target);
            self.snapshots.push(self.running);
        }
        self.snapshots[level as usize]
    }

    fn extend_to(&mut self, target: u64) {
        let y = self.y;
        if self.running.n == 0 && target > 0 {
            let first = model_inner_payoff(y, &mut self.stream);
            self.running.shift = first;
            self.running.push(first);
        }
        let (mut s1, mut s2) = (self.running.s1, self.running.s2);
        for _ in self.running.n..target {
            let d = model_inner_payoff(y, &mut self.stream) - self.running.shift;
            s1 += d;
            s2 += d * d;
        }
        self.running.s1 = s1;
        self.running.s2 = s2;
        self.running.n = self.running.n.max(target);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NestedState {
    pub y: f64,
    pub level: u32,
    pub moments: InnerMoments,
    sigma: f64,
    cost: f64,
}

impl NestedState {
    fn from_moments(spec: &NestedModelSpec, y: f64, level: u32, moments: InnerMoments, cost: f64) -> Result<Self> {
        let mut state = Self {
            y,
            level,
            moments,
            sigma: 1.0,
            cost,
        };
        state.sigma = sigma_value(&state, spec)?;
        Ok(state)
    }

    /// State built directly from explicit inner draws.
    pub fn from_draws(spec: &NestedModelSpec, y: f64, level: u32, draws: &[f64]) -> Result<Self> {
        Self::from_moments(spec, y, level, InnerMoments::from_draws(draws), draws.len() as f64)
    }

    pub fn n_used(&self) -> u64 {
        self.moments.n
    }
}

impl RefinableState for NestedState {
    fn level(&self) -> u32 {
        self.level
    }
    fn value(&self) -> f64 {
        self.moments.mean()
    }
    fn sigma(&self) -> f64 {
        self.sigma
    }
    fn cost(&self) -> f64 {
        self.cost
    }
}

/// σ of a nested state: floored sample standard deviation, or the configured
/// constant.
pub fn sigma_value(state: &NestedState, spec: &NestedModelSpec) -> Result<f64> {
    match spec.sigma_mode {
        SigmaMode::Constant(s) => Ok(s),
        SigmaMode::SampleStd => {
            if state.moments.n < 2 {
                return Err(Error::Domain(format!(
                    "sample standard deviation needs two draws, have {}",
                    state.moments.n
                )));
            }
            Ok(state.moments.variance().sqrt().max(SIGMA_FLOOR))
        }
    }
}

/// Consume the first N_ell pool draws.
pub fn nested_init(spec: &NestedModelSpec, ell: u32, pool: &mut InnerPool) -> Result<NestedState> {
    let moments = pool.prefix(spec, ell);
    NestedState::from_moments(spec, pool.y(), ell, moments, moments.n as f64)
}

/// Advance one level: the next N_k(2^γ − 1) pool draws join the sample.
pub fn nested_refine(spec: &NestedModelSpec, state: &mut NestedState, pool: &mut InnerPool) -> Result<()> {
    let moments = pool.prefix(spec, state.level + 1);
    let added = (moments.n - state.moments.n) as f64;
    *state = NestedState::from_moments(spec, state.y, state.level + 1, moments, state.cost + added)?;
    Ok(())
}

/// Sampler for the model problem.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NestedSampler {
    pub spec: NestedModelSpec,
}

impl NestedSampler {
    pub fn new(spec: NestedModelSpec) -> Self {
        Self { spec }
    }
}

impl RefinableSampler for NestedSampler {
    type Coupling = InnerPool;
    type State = NestedState;

    fn couple(&self, _ell: u32, stream: &Stream) -> Result<InnerPool> {
        let y = stream.substream(0)?.standard_normal();
        Ok(InnerPool::new(y, stream.substream(1)?))
    }

    fn init(&self, pool: &mut InnerPool, level: u32) -> Result<NestedState> {
        nested_init(&self.spec, level, pool)
    }

    fn refine(&self, pool: &mut InnerPool, state: &mut NestedState) -> Result<()> {
        nested_refine(&self.spec, state, pool)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refine::{correction_sample, RefinementParams};
    use crate::rng::derive_stream;

    fn pool_draws(stream: &Stream, y: f64, n: usize) -> Vec<f64> {
        let mut s = stream.clone();
        (0..n).map(|_| model_inner_payoff(y, &mut s)).collect()
    }

    #[test]
    fn payoff_with_zero_normals() {
        // Y = Y0 = 0 leaves only the offset, whatever Y1 is.
        assert_eq!(QUADRATIC * (0.0 - 0.0) + CROSS * 0.0 * 1.7 - PAYOFF_OFFSET, -0.0805);
        assert_eq!(model_conditional_mean(0.0), -0.1005);
    }

    #[test]
    fn true_probability_close_to_quarter_percent() {
        assert!((model_true_probability() - 0.024_983_925_616_958_89).abs() < 1e-12);
    }

    #[test]
    fn conditional_mean_by_monte_carlo() {
        let mut s = derive_stream(0, &[1]).unwrap();
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| model_inner_payoff(0.0, &mut s)).collect();
        let m = InnerMoments::from_draws(&draws);
        let se = (m.variance() / n as f64).sqrt();
        assert!((m.mean() - (-0.1005)).abs() < 4.0 * se, "{} ± {se}", m.mean());
    }

    #[test]
    fn conditional_moments_at_several_y() {
        for (i, &y) in [-2.0, -0.5, 0.0, 1.0, 2.5].iter().enumerate() {
            let mut s = derive_stream(3, &[i as u64]).unwrap();
            let n = 100_000;
            let draws: Vec<f64> = (0..n).map(|_| model_inner_payoff(y, &mut s)).collect();
            let m = InnerMoments::from_draws(&draws);
            let var = model_conditional_variance(y);
            let se_mean = (var / n as f64).sqrt();
            assert!((m.mean() - model_conditional_mean(y)).abs() < 4.0 * se_mean);
            // Fourth central moment of X|Y: Y0² and Y1 parts are independent.
            let a = QUADRATIC * QUADRATIC;
            let b = CROSS * CROSS * y * y;
            let mu4 = a * a * 60.0 + 6.0 * (2.0 * a) * b + 3.0 * b * b;
            let se_var = ((mu4 - var * var) / n as f64).sqrt();
            assert!((m.variance() - var).abs() < 4.0 * se_var, "y = {y}");
        }
    }

    #[test]
    fn sigma_at_y_one() {
        let spec = NestedModelSpec::default();
        let mut s = derive_stream(5, &[]).unwrap();
        let draws: Vec<f64> = (0..1_000_000).map(|_| model_inner_payoff(1.0, &mut s)).collect();
        let state = NestedState::from_draws(&spec, 1.0, 0, &draws).unwrap();
        let expected = (0.0008f64 + 0.1568).sqrt();
        assert!((state.sigma() / expected - 1.0).abs() < 0.01);
    }

    #[test]
    fn constant_sigma_mode() {
        let spec = NestedModelSpec::new(16, 1, SigmaMode::Constant(0.2814)).unwrap();
        let state = NestedState::from_draws(&spec, 0.3, 0, &[0.1, -0.4, 0.2]).unwrap();
        assert_eq!(state.sigma(), 0.2814);
    }

    #[test]
    fn degenerate_draws_hit_sigma_floor() {
        let spec = NestedModelSpec::default();
        let state = NestedState::from_draws(&spec, 0.0, 0, &[1.0, 1.0]).unwrap();
        assert_eq!(state.sigma(), SIGMA_FLOOR);
        assert!(state.delta().is_finite());
        assert!(NestedState::from_draws(&spec, 0.0, 0, &[1.0]).is_err());
    }

    #[test]
    fn invalid_spec_rejected() {
        assert!(NestedModelSpec::new(1, 1, SigmaMode::SampleStd).is_err());
        assert!(NestedModelSpec::new(16, 0, SigmaMode::SampleStd).is_err());
        assert!(NestedModelSpec::new(16, 1, SigmaMode::Constant(0.0)).is_err());
    }

    #[test]
    fn init_consumes_n0_two_to_gamma_ell() {
        let spec = NestedModelSpec::default();
        let stream = derive_stream(11, &[2]).unwrap();
        let mut pool = InnerPool::new(0.7, stream.clone());
        let s0 = nested_init(&spec, 0, &mut pool).unwrap();
        assert_eq!((s0.n_used(), s0.cost()), (16, 16.0));
        let mut pool = InnerPool::new(0.7, stream.clone());
        let s3 = nested_init(&spec, 3, &mut pool).unwrap();
        assert_eq!((s3.n_used(), s3.cost(), pool.drawn()), (128, 128.0, 128));

        // Two-pass oracle on the very same 128 draws.
        let draws = pool_draws(&stream, 0.7, 128);
        let mean = draws.iter().sum::<f64>() / 128.0;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 127.0;
        assert!((s3.value() - mean).abs() < 1e-15);
        assert!((s3.sigma() - var.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn refine_appends_draws() {
        let spec = NestedModelSpec::default();
        let stream = derive_stream(12, &[]).unwrap();
        let mut pool = InnerPool::new(-1.2, stream.clone());
        let mut state = nested_init(&spec, 0, &mut pool).unwrap();
        nested_refine(&spec, &mut state, &mut pool).unwrap();
        assert_eq!(state.n_used(), 32);
        assert_eq!(state.cost(), 32.0);
        assert_eq!(state.level, 1);
        let draws = pool_draws(&stream, -1.2, 32);
        let mean = draws.iter().sum::<f64>() / 32.0;
        assert!((state.value() - mean).abs() < 1e-15);
    }

    #[test]
    fn init_at_k_equals_refine_to_k() {
        for gamma in [1, 2] {
            let spec = NestedModelSpec::new(16, gamma, SigmaMode::SampleStd).unwrap();
            let stream = derive_stream(13, &[u64::from(gamma)]).unwrap();
            for start in 0..3 {
                let mut pool_a = InnerPool::new(0.4, stream.clone());
                let mut refined = nested_init(&spec, start, &mut pool_a).unwrap();
                nested_refine(&spec, &mut refined, &mut pool_a).unwrap();
                nested_refine(&spec, &mut refined, &mut pool_a).unwrap();
                let mut pool_b = InnerPool::new(0.4, stream.clone());
                let direct = nested_init(&spec, start + 2, &mut pool_b).unwrap();
                assert_eq!(refined.moments, direct.moments);
                assert_eq!(refined.sigma().to_bits(), direct.sigma().to_bits());
                assert_eq!(refined.n_used(), direct.n_used());
            }
        }
    }

    #[test]
    fn coarse_is_prefix_of_fine() {
        let spec = NestedModelSpec::default();
        let sampler = NestedSampler::new(spec);
        let stream = derive_stream(14, &[0]).unwrap();
        let mut pool = sampler.couple(3, &stream).unwrap();
        let fine = sampler.init(&mut pool, 3).unwrap();
        let coarse = sampler.init(&mut pool, 2).unwrap();
        let draws = pool_draws(&stream.substream(1).unwrap(), pool.y(), 128);
        let first_half = InnerMoments::from_draws(&draws[..64]);
        assert!((coarse.value() - first_half.mean()).abs() < 1e-15);
        assert_eq!(fine.n_used(), 128);
        // Same total level from the same pool: identical.
        let again = sampler.init(&mut pool, 3).unwrap();
        assert_eq!(again, fine);
    }

    #[test]
    fn correction_cost_counts_both_prefixes() {
        let spec = NestedModelSpec::default();
        let sampler = NestedSampler::new(spec);
        let params = RefinementParams::adaptive(1.95, 1.0, spec.default_c(), 1.0).unwrap();
        for i in 0..500 {
            let stream = derive_stream(15, &[i]).unwrap();
            let c = correction_sample(&sampler, 4, 0, &params, &stream).unwrap();
            let fine_n = spec.inner_count(4 + c.eta_fine);
            let coarse_n = spec.inner_count(3 + c.eta_coarse);
            assert_eq!(c.cost, (fine_n + coarse_n) as f64);
            if 4 + c.eta_fine == 3 + c.eta_coarse {
                assert_eq!(c.delta_h, 0);
            }
        }
    }
}
