//! Adaptive refinement of individual samples and construction of the
//! multilevel corrections ΔH_ℓ built from them.
//!
//! A sample drawn at level ℓ is refined one level at a time while its
//! normalized value δ = g/σ is too close to zero to trust its sign, up to at
//! most ⌈θℓ⌉ extra levels. The stopping threshold after η refinements is
//!
//! ```text
//! c · 2^{γ(θℓ(1−r) − η)/r}
//! ```

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Parameters of the refinement stopping rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementParams {
    /// Refinement strictness; must exceed 1.
    pub r: f64,
    /// Refinement range multiplier: at most ⌈θℓ⌉ extra levels.
    pub theta: f64,
    /// Confidence constant.
    pub c: f64,
    /// Work growth rate of the hierarchy.
    pub gamma: f64,
    /// When false every sample stays at its nominal level.
    pub adaptive: bool,
}

impl RefinementParams {
    pub fn adaptive(r: f64, theta: f64, c: f64, gamma: f64) -> Result<Self> {
        let params = Self {
            r,
            theta,
            c,
            gamma,
            adaptive: true,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn non_adaptive(gamma: f64) -> Self {
        Self {
            r: 2.0,
            theta: 1.0,
            c: 1.0,
            gamma,
            adaptive: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !self.adaptive {
            return Ok(());
        }
        if !(self.r > 1.0) {
            return Err(Error::Config(format!("r must exceed 1, got {}", self.r)));
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::Config(format!("theta must be positive, got {}", self.theta)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("c must be positive, got {}", self.c)));
        }
        Ok(())
    }

    /// ⌈θℓ⌉, or 0 when adaptivity is off.
    pub fn max_refinements(&self, ell: u32) -> u32 {
        if !self.adaptive {
            return 0;
        }
        let span = self.theta * f64::from(ell);
        // Absorb rounding in products like (1/3)·3.
        let rounded = span.round();
        if (span - rounded).abs() <= 1e-9 * span.max(1.0) {
            rounded as u32
        } else {
            span.ceil() as u32
        }
    }
}

/// One in-progress approximation g_k of a latent g.
pub trait RefinableState {
    /// Total level k of the approximation.
    fn level(&self) -> u32;
    /// The approximation g_k.
    fn value(&self) -> f64;
    /// Scale σ_k of the approximation error; strictly positive.
    fn sigma(&self) -> f64;
    /// Work spent on this approximation so far.
    fn cost(&self) -> f64;

    fn delta(&self) -> f64 {
        self.value() / self.sigma()
    }
}

/// A family of refinable samplers.
///
/// `Coupling` holds the latent randomness of one correction sample (an
/// inner-sample pool, a Brownian path, ...). Both legs of the sample read it,
/// so fine and coarse approximations are correlated by construction and two
/// states at the same total level built from one coupling are identical.
pub trait RefinableSampler: Sync {
    type Coupling;
    type State: RefinableState;

    /// Draw the latent randomness for a correction sample whose fine leg
    /// starts at level `ell`.
    fn couple(&self, ell: u32, stream: &Stream) -> Result<Self::Coupling>;

    /// Approximation at total level `level` from the coupling.
    fn init(&self, coupling: &mut Self::Coupling, level: u32) -> Result<Self::State>;

    /// Advance `state` by exactly one level.
    fn refine(&self, coupling: &mut Self::Coupling, state: &mut Self::State) -> Result<()>;
}

/// Heaviside observable: 1 when `x ≥ 0`, else 0.
pub fn heaviside(x: f64) -> Result<u8> {
    if x.is_nan() {
        return Err(Error::Domain("heaviside of NaN".into()));
    }
    Ok(u8::from(x >= 0.0))
}

/// Stopping threshold for |δ| after `eta` refinements of a level-`ell` sample.
pub fn refinement_threshold(ell: u32, eta: u32, params: &RefinementParams) -> f64 {
    let RefinementParams { r, theta, c, gamma, .. } = *params;
    let exponent = gamma * (theta * f64::from(ell) * (1.0 - r) - f64::from(eta)) / r;
    c * exponent.exp2()
}

/// Result of one adaptive sampling run.
#[derive(Debug, Clone)]
pub struct AdaptiveOutcome<S> {
    pub state: S,
    /// Number of refinements applied.
    pub eta: u32,
}

/// One loop check of the refinement rule, recorded for instrumentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    pub eta: u32,
    pub abs_delta: f64,
    pub threshold: f64,
}

/// Run the adaptive sampler at level `ell` against an existing coupling.
pub fn adaptive_sample_coupled<P: RefinableSampler>(
    problem: &P,
    coupling: &mut P::Coupling,
    ell: u32,
    params: &RefinementParams,
) -> Result<AdaptiveOutcome<P::State>> {
    run_adaptive(problem, coupling, ell, params, None)
}

/// As [`adaptive_sample_coupled`], recording |δ| and the threshold at every
/// loop check.
pub fn adaptive_sample_traced<P: RefinableSampler>(
    problem: &P,
    coupling: &mut P::Coupling,
    ell: u32,
    params: &RefinementParams,
    trace: &mut Vec<TraceStep>,
) -> Result<AdaptiveOutcome<P::State>> {
    run_adaptive(problem, coupling, ell, params, Some(trace))
}

/// Draw a fresh coupling from `stream` and run the adaptive sampler at `ell`.
pub fn adaptive_sample<P: RefinableSampler>(
    problem: &P,
    ell: u32,
    params: &RefinementParams,
    stream: &Stream,
) -> Result<AdaptiveOutcome<P::State>> {
    let mut coupling = problem.couple(ell, stream)?;
    run_adaptive(problem, &mut coupling, ell, params, None)
}

fn run_adaptive<P: RefinableSampler>(
    problem: &P,
    coupling: &mut P::Coupling,
    ell: u32,
    params: &RefinementParams,
    mut trace: Option<&mut Vec<TraceStep>>,
) -> Result<AdaptiveOutcome<P::State>> {
    let max_eta = params.max_refinements(ell);
    let mut state = problem.init(coupling, ell)?;
    let mut eta = 0;
    loop {
        let delta = state.delta();
        if delta.is_nan() {
            return Err(Error::NanSample {
                level: state.level(),
            });
        }
        if eta >= max_eta {
            break;
        }
        let threshold = refinement_threshold(ell, eta, params);
        if let Some(t) = trace.as_deref_mut() {
            t.push(TraceStep {
                eta,
                abs_delta: delta.abs(),
                threshold,
            });
        }
        if delta.abs() >= threshold {
            break;
        }
        problem.refine(coupling, &mut state)?;
        eta += 1;
    }
    Ok(AdaptiveOutcome { state, eta })
}

/// One draw of the multilevel correction ΔH_ℓ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectionSample {
    /// H(fine) − H(coarse), or H(fine) on the base level.
    pub delta_h: i8,
    /// Work of both legs.
    pub cost: f64,
    pub eta_fine: u32,
    pub eta_coarse: u32,
}

/// Draw ΔH_ℓ for a hierarchy starting at `ell0`, using `stream` for all
/// randomness of the sample.
pub fn correction_sample<P: RefinableSampler>(
    problem: &P,
    ell: u32,
    ell0: u32,
    params: &RefinementParams,
    stream: &Stream,
) -> Result<CorrectionSample> {
    if ell < ell0 {
        return Err(Error::Config(format!(
            "correction level {ell} is below the starting level {ell0}"
        )));
    }
    let mut coupling = problem.couple(ell, stream)?;
    correction_from_coupling(problem, &mut coupling, ell, ell0, params)
}

/// As [`correction_sample`] with a caller-supplied coupling.
pub fn correction_from_coupling<P: RefinableSampler>(
    problem: &P,
    coupling: &mut P::Coupling,
    ell: u32,
    ell0: u32,
    params: &RefinementParams,
) -> Result<CorrectionSample> {
    let fine = run_adaptive(problem, coupling, ell, params, None)?;
    let fine_h = heaviside(fine.state.value())?;
    if ell == ell0 {
        return Ok(CorrectionSample {
            delta_h: fine_h as i8,
            cost: fine.state.cost(),
            eta_fine: fine.eta,
            eta_coarse: 0,
        });
    }
    let coarse = run_adaptive(problem, coupling, ell - 1, params, None)?;
    let coarse_h = heaviside(coarse.state.value())?;
    Ok(CorrectionSample {
        delta_h: fine_h as i8 - coarse_h as i8,
        cost: fine.state.cost() + coarse.state.cost(),
        eta_fine: fine.eta,
        eta_coarse: coarse.eta,
    })
}

#[cfg(test)]
pub(crate) mod mock {
    use super::*;

    /// Sampler whose δ at every level comes from a fixed table; refining
    /// moves one entry along it. Costs 2^k at level k.
    pub struct TableSampler {
        pub values: Vec<f64>,
        pub refines: std::sync::atomic::AtomicU32,
    }

    impl TableSampler {
        pub fn new(values: Vec<f64>) -> Self {
            Self {
                values,
                refines: Default::default(),
            }
        }
    }

    #[derive(Debug, Clone)]
    pub struct TableState {
        pub level: u32,
        pub value: f64,
        pub cost: f64,
    }

    impl RefinableState for TableState {
        fn level(&self) -> u32 {
            self.level
        }
        fn value(&self) -> f64 {
            self.value
        }
        fn sigma(&self) -> f64 {
            1.0
        }
        fn cost(&self) -> f64 {
            self.cost
        }
    }

    impl RefinableSampler for TableSampler {
        type Coupling = ();
        type State = TableState;

        fn couple(&self, _ell: u32, _stream: &Stream) -> Result<()> {
            Ok(())
        }

        fn init(&self, _: &mut (), level: u32) -> Result<TableState> {
            Ok(TableState {
                level,
                value: self.values[level as usize],
                cost: f64::from(level).exp2(),
            })
        }

        fn refine(&self, _: &mut (), state: &mut TableState) -> Result<()> {
            self.refines
                .fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            state.level += 1;
            state.value = self.values[state.level as usize];
            state.cost += f64::from(state.level).exp2();
            Ok(())
        }
    }
}
