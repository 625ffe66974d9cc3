//! Variance-optimal sample counts per level.

use crate::error::{Error, Result};

/// ⌈x⌉, ignoring round-off just above an integer (0.01/(0.5·10⁻⁴) evaluates
/// to 200.00000000000003).
pub fn ceil_tolerant(x: f64) -> f64 {
    let rounded = x.round();
    if (x - rounded).abs() <= 1e-9 * rounded.abs().max(1.0) {
        rounded
    } else {
        x.ceil()
    }
}

/// M_ℓ = max(M_min, ⌈(φε²)⁻¹ √(V_ℓ/W_ℓ) Σ_k √(V_k W_k)⌉), which minimizes
/// Σ M_ℓ W_ℓ subject to Σ V_ℓ/M_ℓ ≤ φε². Levels with V_ℓ ≤ 0 get M_min.
pub fn optimal_allocation(variances: &[f64], works: &[f64], epsilon: f64, phi: f64, m_min: u64) -> Result<Vec<u64>> {
    if variances.len() != works.len() {
        return Err(Error::Config(format!(
            "{} variances but {} work estimates",
            variances.len(),
            works.len()
        )));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(phi > 0.0 && phi < 1.0) {
        return Err(Error::Config(format!("phi must lie in (0, 1), got {phi}")));
    }
    if let Some(w) = works.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
        return Err(Error::Domain(format!("work estimates must be positive, got {w}")));
    }
    let v: Vec<f64> = variances.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    let total: f64 = v.iter().zip(works).map(|(v, w)| (v * w).sqrt()).sum();
    let scale = total / (phi * epsilon * epsilon);
    Ok(v
        .iter()
        .zip(works)
        .map(|(&v, &w)| {
            let m = ceil_tolerant(scale * (v / w).sqrt());
            if m >= u64::MAX as f64 {
                u64::MAX
            } else {
                (m as u64).max(m_min)
            }
        })
        .collect())
}
