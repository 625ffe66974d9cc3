//! Digital options on geometric Brownian motions,
//! dS_i = a_i S_i dt + b_i S_i dW_i, with g = mean_i S_i(T) − K.
//!
//! For d > 1 the Wiener drivers follow a one-factor model
//! W_i = ρ·W_com + √(1 − ρ²)·W_ind,i, stored as 1 + d factors. A single
//! asset uses one combined factor.
//!
//! The coupling of a correction sample is one Brownian path that starts at
//! the fine level and is refined by bridge insertion whenever some leg needs
//! a finer grid. Every leg evaluates the scheme on the path viewed at its own
//! total level, so the coarse leg never uses independent randomness.

use crate::error::{Error, Result};
use crate::problems::brownian::BrownianPath;
use crate::refine::{RefinableSampler, RefinableState};
use crate::rng::{derive_stream, inverse_normal_cdf, normal_cdf, Stream};

/// Stream tag for drawing (a, b, S₀) in sampled-parameter mode.
pub const PARAMS_STREAM_TAG: u64 = 0x5041_5241_4d53;

pub const DRIFT_RANGE: (f64, f64) = (0.05, 0.15);
pub const VOLATILITY_RANGE: (f64, f64) = (0.01, 0.4);
pub const INITIAL_PRICE_RANGE: (f64, f64) = (0.9, 1.1);

/// Paths used to calibrate the strike for d > 1.
pub const CALIBRATION_PATHS: usize = 1_000_000;
pub const CALIBRATION_TOLERANCE: f64 = 5e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Euler,
    Milstein,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Scheme::Euler),
            "milstein" => Ok(Scheme::Milstein),
            other => Err(Error::Config(format!("unknown scheme '{other}' (expected euler or milstein)"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Euler => "euler",
            Scheme::Milstein => "milstein",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbmSpec {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub s0: Vec<f64>,
    pub rho: f64,
    pub strike: f64,
    pub horizon: f64,
    pub scheme: Scheme,
    /// Each level divides the step size by 2^gamma.
    pub gamma: u32,
}

impl GbmSpec {
    /// Validates structural constraints only; drift, volatility and initial
    /// prices may lie outside the ranges used for sampled parameters.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: Vec<f64>,
        b: Vec<f64>,
        s0: Vec<f64>,
        rho: f64,
        strike: f64,
        horizon: f64,
        scheme: Scheme,
        gamma: u32,
    ) -> Result<Self> {
        let spec = Self {
            a,
            b,
            s0,
            rho,
            strike,
            horizon,
            scheme,
            gamma,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// One asset with the given parameters, T = 1.
    pub fn single(a: f64, b: f64, s0: f64, strike: f64, scheme: Scheme, gamma: u32) -> Result<Self> {
        Self::new(vec![a], vec![b], vec![s0], 0.0, strike, 1.0, scheme, gamma)
    }

    /// `d` assets with (a, b, S₀) drawn uniformly from their ranges using a
    /// dedicated substream of `seed`, T = 1 and strike 1 (to be calibrated).
    pub fn sampled(d: usize, rho: f64, scheme: Scheme, gamma: u32, seed: u64) -> Result<Self> {
        let mut stream = derive_stream(seed, &[PARAMS_STREAM_TAG])?;
        let mut draw = |(lo, hi): (f64, f64)| lo + (hi - lo) * stream.uniform();
        let mut a = Vec::with_capacity(d);
        let mut b = Vec::with_capacity(d);
        let mut s0 = Vec::with_capacity(d);
        for _ in 0..d {
            a.push(draw(DRIFT_RANGE));
            b.push(draw(VOLATILITY_RANGE));
            s0.push(draw(INITIAL_PRICE_RANGE));
        }
        Self::new(a, b, s0, rho, 1.0, 1.0, scheme, gamma)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.a.len();
        if d == 0 {
            return Err(Error::Config("dimension must be at least 1".into()));
        }
        if self.b.len() != d || self.s0.len() != d {
            return Err(Error::Config(format!(
                "parameter lengths differ: a {}, b {}, s0 {}",
                d,
                self.b.len(),
                self.s0.len()
            )));
        }
        if self.a.iter().chain(&self.b).chain(&self.s0).any(|v| !v.is_finite()) {
            return Err(Error::Config("GBM parameters must be finite".into()));
        }
        if self.b.iter().any(|&b| b < 0.0) {
            return Err(Error::Config("volatilities must be non-negative".into()));
        }
        if self.s0.iter().any(|&s| s <= 0.0) {
            return Err(Error::Config("initial prices must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Config(format!("rho must lie in [0, 1], got {}", self.rho)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("maturity must be positive, got {}", self.horizon)));
        }
        if !self.strike.is_finite() {
            return Err(Error::Config("strike must be finite".into()));
        }
        if self.gamma == 0 {
            return Err(Error::Config("SDE gamma must be a positive integer".into()));
        }
        if self.scheme == Scheme::Milstein && d > 1 {
            return Err(Error::Unsupported(format!(
                "milstein scheme is implemented for one asset only, got d = {d}"
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// Wiener factors stored per path: one for a single asset, else 1 + d.
    pub fn factors(&self) -> usize {
        if self.dim() == 1 {
            1
        } else {
            1 + self.dim()
        }
    }

    /// σ = d^{−1/2}.
    pub fn sigma(&self) -> f64 {
        1.0 / (self.dim() as f64).sqrt()
    }

    pub fn with_strike(mut self, strike: f64) -> Self {
        self.strike = strike;
        self
    }

    /// Work of one evaluation at `level`: d·2^{γ·level} time steps.
    pub fn evaluation_cost(&self, level: u32) -> f64 {
        (self.dim() as f64) * ((1u64 << (self.gamma * level)) as f64)
    }
}

/// Terminal prices from the scheme on `path` at its own resolution.
pub fn evolve(spec: &GbmSpec, path: &BrownianPath) -> Result<Vec<f64>> {
    evolve_at(spec, path, path.level())
}

/// Terminal prices from the scheme on `path` viewed at `level` (at most the
/// path's own level).
pub fn evolve_at(spec: &GbmSpec, path: &BrownianPath, level: u32) -> Result<Vec<f64>> {
    if level > path.level() {
        return Err(Error::Domain(format!(
            "cannot evaluate level {level} on a level {} path",
            path.level()
        )));
    }
    if path.factors() != spec.factors() || path.gamma() != spec.gamma {
        return Err(Error::Config(format!(
            "path with {} factors and gamma {} does not match the spec ({} factors, gamma {})",
            path.factors(),
            path.gamma(),
            spec.factors(),
            spec.gamma
        )));
    }
    let stride = 1usize << (spec.gamma * (path.level() - level));
    let steps = 1usize << (spec.gamma * level);
    let h = spec.horizon / steps as f64;
    let d = spec.dim();
    match spec.scheme {
        Scheme::Milstein => {
            if d > 1 {
                return Err(Error::Unsupported("milstein scheme needs d = 1".into()));
            }
            let w = path.points(0);
            let (a, b) = (spec.a[0], spec.b[0]);
            let half_b2 = 0.5 * b * b;
            let mut s = spec.s0[0];
            for n in 0..steps {
                let dw = w[(n + 1) * stride] - w[n * stride];
                s *= 1.0 + a * h + b * dw + half_b2 * (dw * dw - h);
            }
            Ok(vec![s])
        }
        Scheme::Euler if d == 1 => {
            let w = path.points(0);
            let (a, b) = (spec.a[0], spec.b[0]);
            let mut s = spec.s0[0];
            for n in 0..steps {
                let dw = w[(n + 1) * stride] - w[n * stride];
                s += s * (a * h + b * dw);
            }
            Ok(vec![s])
        }
        Scheme::Euler => {
            let common = path.points(0);
            let rho = spec.rho;
            let rho_c = (1.0 - rho * rho).sqrt();
            Ok((0..d)
                .map(|i| {
                    let own = path.points(1 + i);
                    let (a, b) = (spec.a[i], spec.b[i]);
                    let mut s = spec.s0[i];
                    for n in 0..steps {
                        let (j, k) = (n * stride, (n + 1) * stride);
                        let dw = rho * (common[k] - common[j]) + rho_c * (own[k] - own[j]);
                        s += s * (a * h + b * dw);
                    }
                    s
                })
                .collect())
        }
    }
}

/// g = mean(S) − K.
pub fn payoff_value(spec: &GbmSpec, terminal: &[f64]) -> f64 {
    terminal.iter().sum::<f64>() / terminal.len() as f64 - spec.strike
}

/// Exact terminal prices S_i(T) = S_i(0)·exp((a_i − b_i²/2)T + b_i W_i(T))
/// given the terminal value of every stored factor.
pub fn exact_terminal(spec: &GbmSpec, factor_terminals: &[f64]) -> Vec<f64> {
    let t = spec.horizon;
    let d = spec.dim();
    let rho_c = (1.0 - spec.rho * spec.rho).sqrt();
    (0..d)
        .map(|i| {
            let w = if d == 1 {
                factor_terminals[0]
            } else {
                spec.rho * factor_terminals[0] + rho_c * factor_terminals[1 + i]
            };
            spec.s0[i] * ((spec.a[i] - 0.5 * spec.b[i] * spec.b[i]) * t + spec.b[i] * w).exp()
        })
        .collect()
}

/// P(S(T) ≥ K) for a single asset.
pub fn digital_true_value(spec: &GbmSpec) -> Result<f64> {
    if spec.dim() != 1 {
        return Err(Error::Unsupported("closed-form digital value needs d = 1".into()));
    }
    if spec.strike <= 0.0 {
        return Err(Error::Domain(format!("strike must be positive, got {}", spec.strike)));
    }
    let (a, b, s0, t) = (spec.a[0], spec.b[0], spec.s0[0], spec.horizon);
    let drift = (s0 / spec.strike).ln() + (a - 0.5 * b * b) * t;
    if b == 0.0 {
        return Ok(if drift >= 0.0 { 1.0 } else { 0.0 });
    }
    Ok(normal_cdf(drift / (b * t.sqrt())))
}

/// Strike K with P(g ≥ 0) = `target_p`.
///
/// One asset inverts the closed form. Several assets bisect on the empirical
/// exceedance probability of [`CALIBRATION_PATHS`] exact terminal draws from
/// `stream`, and fail unless it lands within [`CALIBRATION_TOLERANCE`].
pub fn calibrate_strike(spec: &GbmSpec, target_p: f64, stream: &mut Stream) -> Result<f64> {
    if !(target_p > 0.0 && target_p < 1.0) {
        return Err(Error::Domain(format!("target probability must lie in (0, 1), got {target_p}")));
    }
    if spec.dim() == 1 {
        let (a, b, s0, t) = (spec.a[0], spec.b[0], spec.s0[0], spec.horizon);
        if b == 0.0 {
            return Err(Error::Calibration("zero volatility gives a degenerate payoff".into()));
        }
        let log_k = s0.ln() + (a - 0.5 * b * b) * t - b * t.sqrt() * inverse_normal_cdf(target_p);
        return Ok(log_k.exp());
    }

    let factors = spec.factors();
    let sqrt_t = spec.horizon.sqrt();
    let mut terminals = vec![0.0; factors];
    let mut means: Vec<f64> = (0..CALIBRATION_PATHS)
        .map(|_| {
            for w in terminals.iter_mut() {
                *w = sqrt_t * stream.standard_normal();
            }
            let s = exact_terminal(spec, &terminals);
            s.iter().sum::<f64>() / s.len() as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let n = means.len() as f64;
    let exceedance = |k: f64| (means.len() - means.partition_point(|&m| m < k)) as f64 / n;

    let mut lo = 0.0;
    let mut hi = 2.0 * means[means.len() - 1];
    if !(exceedance(lo) >= target_p && exceedance(hi) <= target_p) {
        return Err(Error::Calibration(format!(
            "bracket [{lo}, {hi}] does not enclose target {target_p}: P = {} .. {}",
            exceedance(lo),
            exceedance(hi)
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if exceedance(mid) >= target_p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    let p_hat = exceedance(lo);
    if (p_hat - target_p).abs() > CALIBRATION_TOLERANCE {
        return Err(Error::Calibration(format!(
            "bisection ended at K = {lo} with P = {p_hat}, target {target_p}"
        )));
    }
    Ok(lo)
}

/// Brownian path shared by both legs of one correction sample, plus the
/// stream that supplies bridge normals when it is refined.
#[derive(Debug, Clone)]
pub struct PathCoupling {
    path: BrownianPath,
    bridge: Stream,
}

impl PathCoupling {
    pub fn path(&self) -> &BrownianPath {
        &self.path
    }

    fn ensure_level(&mut self, level: u32) {
        while self.path.level() < level {
            self.path.refine(&mut self.bridge);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdeState {
    pub level: u32,
    pub terminal: Vec<f64>,
    value: f64,
    sigma: f64,
    cost: f64,
}

impl RefinableState for SdeState {
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

#[derive(Debug, Clone, PartialEq)]
pub struct SdeSampler {
    pub spec: GbmSpec,
}

impl SdeSampler {
    pub fn new(spec: GbmSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec })
    }

    fn evaluate(&self, coupling: &mut PathCoupling, level: u32) -> Result<(Vec<f64>, f64)> {
        coupling.ensure_level(level);
        let terminal = evolve_at(&self.spec, &coupling.path, level)?;
        let value = payoff_value(&self.spec, &terminal);
        Ok((terminal, value))
    }
}

impl RefinableSampler for SdeSampler {
    type Coupling = PathCoupling;
    type State = SdeState;

    fn couple(&self, ell: u32, stream: &Stream) -> Result<PathCoupling> {
        let mut base = stream.substream(0)?;
        let path = BrownianPath::sample(self.spec.factors(), self.spec.gamma, ell, self.spec.horizon, &mut base);
        Ok(PathCoupling {
            path,
            bridge: stream.substream(1)?,
        })
    }

    fn init(&self, coupling: &mut PathCoupling, level: u32) -> Result<SdeState> {
        let (terminal, value) = self.evaluate(coupling, level)?;
        Ok(SdeState {
            level,
            terminal,
            value,
            sigma: self.spec.sigma(),
            cost: self.spec.evaluation_cost(level),
        })
    }

    /// Re-evolves the scheme on the finer grid; the work of every
    /// evaluation is charged.
    fn refine(&self, coupling: &mut PathCoupling, state: &mut SdeState) -> Result<()> {
        let level = state.level + 1;
        let (terminal, value) = self.evaluate(coupling, level)?;
        state.level = level;
        state.terminal = terminal;
        state.value = value;
        state.cost += self.spec.evaluation_cost(level);
        Ok(())
    }
}
