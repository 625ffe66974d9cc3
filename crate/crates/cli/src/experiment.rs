//! Resolution of a raw configuration into a runnable experiment.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use adaptive_mlmc::mlmc::fit::FixedRates;
use adaptive_mlmc::mlmc::{select_start_level, MlmcConfig};
use adaptive_mlmc::problems::nested::{model_true_probability, NestedModelSpec, NestedSampler, SigmaMode};
use adaptive_mlmc::problems::sde::{calibrate_strike, digital_true_value, GbmSpec, Scheme, SdeSampler, PARAMS_STREAM_TAG};
use adaptive_mlmc::problems::synthetic::{SyntheticSampler, SyntheticSpec};
use adaptive_mlmc::refine::RefinementParams;
use adaptive_mlmc::rng::derive_stream;

use crate::config::RawConfig;
use crate::error::{CliError, CliResult};

/// Candidate starting levels searched by `start_level = auto`.
pub const AUTO_START_CANDIDATES: RangeInclusive<u32> = 0..=4;

pub const DEFAULT_PILOT_M: u64 = 10_000;
pub const DEFAULT_M_DIAG: u64 = 100_000;
pub const DEFAULT_SWEEP_EPSILONS: [f64; 3] = [2.5e-3, 2.5e-4, 2.5e-5];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Nested,
    Gbm,
    Synthetic,
}

impl std::str::FromStr for ProblemKind {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "nested" => Ok(ProblemKind::Nested),
            "gbm" => Ok(ProblemKind::Gbm),
            "synthetic" => Ok(ProblemKind::Synthetic),
            _ => Err(CliError::Usage(format!("unknown problem {s:?}; expected nested, gbm or synthetic"))),
        }
    }
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Nested => "nested",
            ProblemKind::Gbm => "gbm",
            ProblemKind::Synthetic => "synthetic",
        }
    }
}

#[derive(Debug, Clone)]
pub enum Problem {
    Nested(NestedSampler),
    Gbm(SdeSampler),
    Synthetic(SyntheticSampler),
}

/// Evaluates `$body` with `$s` bound to the concrete sampler.
#[macro_export]
macro_rules! with_sampler {
    ($problem:expr, $s:ident => $body:expr) => {
        match $problem {
            $crate::experiment::Problem::Nested($s) => $body,
            $crate::experiment::Problem::Gbm($s) => $body,
            $crate::experiment::Problem::Synthetic($s) => $body,
        }
    };
}

/// Everything a command needs, with every default filled in.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub kind: ProblemKind,
    pub problem: Problem,
    pub params: RefinementParams,
    pub mlmc: MlmcConfig,
    pub seed: u64,
    pub epsilons: Vec<f64>,
    pub m_diag: u64,
    pub diag_levels: RangeInclusive<u32>,
    pub sigmas: Vec<f64>,
    pub sweep_epsilons: Vec<f64>,
    /// Value the estimator targets, where known.
    pub reference: Option<f64>,
    /// Resolved configuration, as written to the manifest.
    pub resolved: BTreeMap<String, String>,
    /// Constants computed while resolving (strike, μ, start level).
    pub calibrated: BTreeMap<String, String>,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn integer_gamma(gamma: f64) -> CliResult<u32> {
    if gamma >= 1.0 && gamma.fract() == 0.0 && gamma <= 8.0 {
        Ok(gamma as u32)
    } else {
        Err(usage(format!("gamma must be a positive integer for this problem, got {gamma}")))
    }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",")
}

impl Experiment {
    pub fn resolve(cfg: &RawConfig) -> CliResult<Self> {
        let kind: ProblemKind = cfg
            .raw("problem")
            .ok_or_else(|| usage("no problem given; use --problem or a problem key"))?
            .parse()?;
        let mut resolved = BTreeMap::new();
        let mut calibrated = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            resolved.insert(k.to_string(), v);
        };
        put("problem", kind.name().into());

        let seed: u64 = cfg.get_or("seed", 0)?;
        let adaptive = cfg.flag("adaptive", false)?;
        put("seed", seed.to_string());
        put("adaptive", if adaptive { "on" } else { "off" }.into());

        let gamma: f64 = cfg.get_or("gamma", 1.0)?;
        let theta: f64 = cfg.get_or("theta", 1.0)?;
        put("gamma", format!("{gamma}"));
        put("theta", format!("{theta}"));

        let (problem, default_r, default_c, reference) = match kind {
            ProblemKind::Nested => {
                let n0: u64 = cfg.get_or("n0", 16)?;
                let sigma_mode = match cfg.raw("sigma_mode").unwrap_or("sample") {
                    "sample" => SigmaMode::SampleStd,
                    v => SigmaMode::Constant(
                        v.parse()
                            .map_err(|_| usage(format!("sigma_mode must be sample or a number, got {v:?}")))?,
                    ),
                };
                let spec = NestedModelSpec::new(n0, integer_gamma(gamma)?, sigma_mode)?;
                put("n0", n0.to_string());
                put(
                    "sigma_mode",
                    match sigma_mode {
                        SigmaMode::SampleStd => "sample".into(),
                        SigmaMode::Constant(s) => format!("{s}"),
                    },
                );
                (
                    Problem::Nested(NestedSampler::new(spec)),
                    1.95,
                    spec.default_c(),
                    Some(model_true_probability()),
                )
            }
            ProblemKind::Gbm => {
                let d: usize = cfg.get_or("d", 1)?;
                let rho: f64 = cfg.get_or("rho", 0.0)?;
                let scheme: Scheme = cfg
                    .raw("scheme")
                    .unwrap_or("euler")
                    .parse()
                    .map_err(|e: adaptive_mlmc::Error| usage(e.to_string()))?;
                let gamma = integer_gamma(gamma)?;
                let default_mode = if d == 1 { "fixed:0.05,0.4,1" } else { "sampled" };
                let mode = cfg.raw("params_mode").unwrap_or(default_mode);
                let spec = if mode == "sampled" {
                    GbmSpec::sampled(d, rho, scheme, gamma, seed)?
                } else if let Some(rest) = mode.strip_prefix("fixed:") {
                    let v: Vec<f64> = rest
                        .split(',')
                        .map(|x| x.trim().parse().map_err(|_| usage(format!("bad params_mode {mode:?}"))))
                        .collect::<CliResult<_>>()?;
                    if v.len() != 3 {
                        return Err(usage(format!("params_mode fixed needs a,b,s0, got {mode:?}")));
                    }
                    GbmSpec::new(vec![v[0]; d], vec![v[1]; d], vec![v[2]; d], rho, 1.0, 1.0, scheme, gamma)?
                } else {
                    return Err(usage(format!("params_mode must be fixed:a,b,s0 or sampled, got {mode:?}")));
                };
                let strike_key = cfg.raw("K").unwrap_or("auto:0.025");
                let (strike, target) = if let Some(p) = strike_key.strip_prefix("auto:") {
                    let p: f64 = p.parse().map_err(|_| usage(format!("bad K {strike_key:?}")))?;
                    let mut stream = derive_stream(seed, &[PARAMS_STREAM_TAG, 1])?;
                    (calibrate_strike(&spec, p, &mut stream)?, Some(p))
                } else {
                    (strike_key.parse().map_err(|_| usage(format!("bad K {strike_key:?}")))?, None)
                };
                let spec = spec.with_strike(strike);
                spec.validate()?;
                let reference = if d == 1 { Some(digital_true_value(&spec)?) } else { target };
                put("d", d.to_string());
                put("rho", format!("{rho}"));
                put("scheme", scheme.to_string());
                put("params_mode", mode.to_string());
                put("K", strike_key.to_string());
                calibrated.insert("K".into(), format!("{strike}"));
                calibrated.insert("a".into(), fmt_list(&spec.a));
                calibrated.insert("b".into(), fmt_list(&spec.b));
                calibrated.insert("s0".into(), fmt_list(&spec.s0));
                let default_r = match scheme {
                    Scheme::Euler => 1.95,
                    Scheme::Milstein => 10.0,
                };
                (Problem::Gbm(SdeSampler::new(spec)?), default_r, 1.0, reference)
            }
            ProblemKind::Synthetic => {
                let target_p: f64 = cfg.get_or("target_p", 0.025)?;
                let sigma: f64 = cfg.get_or("sigma", 3f64.sqrt())?;
                let mut spec = SyntheticSpec::for_target(target_p, gamma)?;
                spec = SyntheticSpec::new(spec.mu, spec.gamma, sigma)?;
                put("target_p", format!("{target_p}"));
                put("sigma", format!("{sigma}"));
                calibrated.insert("mu".into(), format!("{}", spec.mu));
                (Problem::Synthetic(SyntheticSampler::new(spec)), 1.95, 1.0, Some(target_p))
            }
        };

        let params = if adaptive {
            let r: f64 = cfg.get_or("r", default_r)?;
            let c: f64 = cfg.get_or("c", default_c)?;
            put("r", format!("{r}"));
            put("c", format!("{c}"));
            RefinementParams {
                r,
                theta,
                c,
                gamma,
                adaptive: true,
            }
        } else {
            RefinementParams::non_adaptive(gamma)
        };
        params.validate()?;

        let defaults = MlmcConfig::default();
        let fixed_rates = FixedRates {
            alpha: cfg.get("theory_alpha")?,
            beta: cfg.get("theory_beta")?,
            gamma: cfg.get("theory_gamma")?,
        };
        for (key, v) in [
            ("theory_alpha", fixed_rates.alpha),
            ("theory_beta", fixed_rates.beta),
            ("theory_gamma", fixed_rates.gamma),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(usage(format!("{key} must be positive, got {v}")));
                }
                put(key, format!("{v}"));
            }
        }
        let mut mlmc = MlmcConfig {
            start_level: 0,
            max_level: cfg.get_or("max_level", defaults.max_level)?,
            m_min: cfg.get_or("m_min", defaults.m_min)?,
            phi: cfg.get_or("phi", defaults.phi)?,
            pilot_samples: cfg.get_or("pilot_samples", defaults.pilot_samples)?,
            fixed_rates,
            alpha_floor: cfg.get_or("alpha_floor", defaults.alpha_floor)?,
            max_iterations: cfg.get_or("max_iterations", defaults.max_iterations)?,
        };
        put("max_level", mlmc.max_level.to_string());
        put("m_min", mlmc.m_min.to_string());
        put("phi", format!("{}", mlmc.phi));
        put("pilot_samples", mlmc.pilot_samples.to_string());
        put("alpha_floor", format!("{}", mlmc.alpha_floor));
        put("max_iterations", mlmc.max_iterations.to_string());

        let start = cfg.raw("start_level").unwrap_or("0");
        put("start_level", start.to_string());
        let start_auto = start == "auto";
        if !start_auto {
            mlmc.start_level = start
                .parse()
                .map_err(|_| usage(format!("start_level must be an integer or auto, got {start:?}")))?;
        }
        mlmc.validate()?;

        let epsilons = cfg.list::<f64>("epsilons")?.unwrap_or_default();
        if epsilons.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(usage("epsilons must be positive"));
        }
        if epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(usage("epsilons must be strictly descending"));
        }
        if !epsilons.is_empty() {
            put("epsilons", fmt_list(&epsilons));
        }

        let m_diag: u64 = cfg.get_or("m_diag", DEFAULT_M_DIAG)?;
        if m_diag == 0 {
            return Err(usage("m_diag must be positive"));
        }
        let diag_min: u32 = cfg.get_or("diag_min_level", 0)?;
        let diag_max: u32 = cfg.get_or("diag_max_level", 7)?;
        if diag_max < diag_min {
            return Err(usage(format!("diag_max_level {diag_max} is below diag_min_level {diag_min}")));
        }
        put("m_diag", m_diag.to_string());
        put("diag_min_level", diag_min.to_string());
        put("diag_max_level", diag_max.to_string());

        let sigmas = cfg.list::<f64>("sigmas")?.unwrap_or_default();
        if sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(usage("sigmas must be positive"));
        }
        if !sigmas.is_empty() {
            put("sigmas", fmt_list(&sigmas));
        }
        let sweep_epsilons = cfg.list::<f64>("sweep_epsilons")?.unwrap_or(DEFAULT_SWEEP_EPSILONS.to_vec());
        if sweep_epsilons.len() != 3 || sweep_epsilons.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(usage("sweep_epsilons must list three positive tolerances"));
        }
        put("sweep_epsilons", fmt_list(&sweep_epsilons));

        let mut experiment = Experiment {
            kind,
            problem,
            params,
            mlmc,
            seed,
            epsilons,
            m_diag,
            diag_levels: diag_min..=diag_max,
            sigmas,
            sweep_epsilons,
            reference,
            resolved,
            calibrated,
        };
        if let Some(reference) = reference {
            experiment.calibrated.insert("reference".into(), format!("{reference}"));
        }
        if start_auto {
            let pilot_m: u64 = cfg.get_or("pilot_m", DEFAULT_PILOT_M)?;
            experiment.resolved.insert("pilot_m".into(), pilot_m.to_string());
            let hi = (*AUTO_START_CANDIDATES.end()).min(experiment.mlmc.max_level);
            let candidates = *AUTO_START_CANDIDATES.start()..=hi;
            let chosen = with_sampler!(&experiment.problem, s => select_start_level(
                s,
                &experiment.params,
                pilot_m,
                candidates.clone(),
                seed,
            ))?;
            experiment.mlmc.start_level = chosen;
            experiment.calibrated.insert("start_level".into(), chosen.to_string());
        }
        Ok(experiment)
    }

    /// Same experiment with `sigma_mode` switched (nested only).
    pub fn with_sigma_mode(&self, mode: SigmaMode) -> CliResult<Self> {
        let Problem::Nested(sampler) = &self.problem else {
            return Err(usage("sigma sweeps need the nested problem"));
        };
        let spec = NestedModelSpec::new(sampler.spec.n0, sampler.spec.gamma, mode)?;
        let mut out = self.clone();
        out.problem = Problem::Nested(NestedSampler::new(spec));
        Ok(out)
    }
}
