//! Closed-form complexity regimes and admissible refinement parameters.

use crate::error::{Error, Result};

/// Asymptotic growth of MLMC work as the tolerance ε → 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// ε^{-2}.
    Canonical,
    /// ε^{-2}(log ε)².
    LogPenalized,
    /// ε^{-2-(γ-β)/α}.
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Complexity {
    pub regime: Regime,
    /// Power of ε^{-1}, ignoring logarithmic factors.
    pub exponent: f64,
}

/// Work regime for a hierarchy with bias, variance and cost rates
/// (α, β, γ) of the multilevel corrections.
pub fn complexity_regime(beta: f64, gamma: f64, alpha: f64) -> Result<Complexity> {
    if !(beta > 0.0 && gamma > 0.0 && alpha > 0.0) || [alpha, beta, gamma].iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!(
            "rates must be positive and finite: alpha {alpha}, beta {beta}, gamma {gamma}"
        )));
    }
    if alpha < 0.5 * gamma.min(beta) {
        return Err(Error::Domain(format!(
            "alpha {alpha} is below min(gamma, beta)/2 = {}",
            0.5 * gamma.min(beta)
        )));
    }
    Ok(if beta > gamma {
        Complexity {
            regime: Regime::Canonical,
            exponent: 2.0,
        }
    } else if beta == gamma {
        Complexity {
            regime: Regime::LogPenalized,
            exponent: 2.0,
        }
    } else {
        Complexity {
            regime: Regime::Power,
            exponent: 2.0 + (gamma - beta) / alpha,
        }
    })
}

/// Upper bound on the refinement strictness r.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RBound {
    /// May be +∞.
    pub value: f64,
    /// True when r must be strictly below `value`.
    pub open: bool,
}

impl RBound {
    pub fn admits(&self, r: f64) -> bool {
        if self.open {
            r < self.value
        } else {
            r <= self.value
        }
    }

    fn min(self, other: RBound) -> RBound {
        if other.value < self.value || (other.value == self.value && other.open) {
            other
        } else {
            self
        }
    }
}

fn check_inputs(beta: f64, gamma: f64, q: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite() && gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Domain(format!("beta and gamma must be positive, got {beta}, {gamma}")));
    }
    if !(q > 2.0) {
        return Err(Error::Domain(format!("q must exceed 2 or be infinite, got {q}")));
    }
    Ok(())
}

/// (q + a)/(q + b), with its limit 1 for infinite q.
fn ratio(q: f64, a: f64, b: f64) -> f64 {
    if q.is_infinite() {
        1.0
    } else {
        (q + a) / (q + b)
    }
}

/// Refinement range θ balancing the refined and unrefined variance terms.
///
/// `strict` selects the bound for errors with exponentially decaying tails,
/// otherwise only q moments of the normalized error are assumed
/// (`q = f64::INFINITY` allowed).
pub fn optimal_theta(beta: f64, gamma: f64, q: f64, strict: bool) -> Result<f64> {
    check_inputs(beta, gamma, q)?;
    let factor = if strict { 1.0 } else { ratio(q, 1.0, 0.0) };
    Ok(if beta <= factor * gamma {
        1.0 / (2.0 * factor * gamma / beta - 1.0)
    } else {
        1.0
    })
}

/// Largest admissible r for the variance improvement (and, with
/// `need_bias_rate`, also the bias improvement, which needs strict tails and
/// β ≤ γ to tighten anything).
pub fn r_bound(beta: f64, gamma: f64, q: f64, strict: bool, need_bias_rate: bool) -> Result<RBound> {
    check_inputs(beta, gamma, q)?;
    let unbounded = RBound {
        value: f64::INFINITY,
        open: true,
    };
    let variance = if strict {
        if beta <= gamma {
            RBound {
                value: 2.0 * gamma / beta * ratio(q, -1.0, 0.0),
                open: true,
            }
        } else if beta < 2.0 * ratio(q, -1.0, -2.0) * gamma {
            // (q−2)/(2(q−1)) = ½·(q−2)/(q−1)
            RBound {
                value: 1.0 / (1.0 - 0.5 * ratio(q, -2.0, -1.0) * beta / gamma),
                open: false,
            }
        } else {
            unbounded
        }
    } else if beta <= ratio(q, 1.0, 0.0) * gamma {
        RBound {
            value: 2.0 * gamma / beta,
            open: true,
        }
    } else if beta < 2.0 * ratio(q, 1.0, -1.0) * gamma {
        RBound {
            value: 1.0 / (1.0 - 0.5 * ratio(q, -1.0, 1.0) * beta / gamma),
            open: false,
        }
    } else {
        unbounded
    };
    if need_bias_rate && beta <= gamma {
        let bias = RBound {
            value: 2.0 * gamma / beta * ratio(q, -2.0, 0.0),
            open: true,
        };
        return Ok(variance.min(bias));
    }
    Ok(variance)
}
