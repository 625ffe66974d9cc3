//! Running per-level aggregates of multilevel correction samples.

/// Accumulator of ΔH samples on one level.
///
/// ΔH takes values in {−1, 0, 1} (or {0, 1} on the base level) and costs are
/// integer work units for every shipped problem, so all sums are exact in
/// `f64` and merging is associative and commutative.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelStats {
    pub level: u32,
    count: u64,
    sum: f64,
    sum_sq: f64,
    cost_sum: f64,
}

impl LevelStats {
    pub fn new(level: u32) -> Self {
        Self {
            level,
            count: 0,
            sum: 0.0,
            sum_sq: 0.0,
            cost_sum: 0.0,
        }
    }

    pub fn push(&mut self, delta_h: f64, cost: f64) {
        self.count += 1;
        self.sum += delta_h;
        self.sum_sq += delta_h * delta_h;
        self.cost_sum += cost;
    }

    pub fn merge(&mut self, other: &LevelStats) {
        debug_assert_eq!(self.level, other.level);
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.cost_sum += other.cost_sum;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn sum(&self) -> f64 {
        self.sum
    }

    pub fn sum_sq(&self) -> f64 {
        self.sum_sq
    }

    pub fn cost_sum(&self) -> f64 {
        self.cost_sum
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }

    /// Unbiased sample variance, clamped at zero.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }

    pub fn mean_cost(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.cost_sum / self.count as f64
        }
    }

    pub fn summary(&self) -> LevelSummary {
        LevelSummary {
            level: self.level,
            count: self.count,
            mean: self.mean(),
            variance: self.variance(),
            mean_cost: self.mean_cost(),
        }
    }
}

/// The per-level quantities that rate fitting and allocation consume; also
/// exactly what a `levels` CSV row stores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSummary {
    pub level: u32,
    pub count: u64,
    pub mean: f64,
    pub variance: f64,
    pub mean_cost: f64,
}

impl LevelSummary {
    pub fn mean_standard_error(&self) -> f64 {
        if self.count == 0 {
            return f64::INFINITY;
        }
        (self.variance / self.count as f64).sqrt()
    }

    /// Standard error of the variance estimate. Uses X³ = X and X⁴ = X² for
    /// ternary samples, so the fourth central moment follows from the first
    /// two.
    pub fn variance_standard_error(&self) -> f64 {
        if self.count < 2 {
            return f64::INFINITY;
        }
        let n = self.count as f64;
        let m = self.mean;
        let second = self.variance * (n - 1.0) / n + m * m;
        let mu4 = second - 4.0 * m * m + 6.0 * m * m * second - 3.0 * m.powi(4);
        let pop_var = self.variance * (n - 1.0) / n;
        ((mu4 - pop_var * pop_var).max(0.0) / n).sqrt()
    }
}

/// Weighted least-squares line `y ≈ intercept + slope · x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
}

/// Fit a line through `(x, y)` with weights `w` (inverse variances of `y`).
/// Needs at least two points with distinct x and positive weight.
pub fn weighted_line_fit(x: &[f64], y: &[f64], w: &[f64]) -> Option<LineFit> {
    debug_assert!(x.len() == y.len() && y.len() == w.len());
    let points: Vec<(f64, f64, f64)> = x
        .iter()
        .zip(y)
        .zip(w)
        .filter(|((_, yi), wi)| **wi > 0.0 && wi.is_finite() && yi.is_finite())
        .map(|((&xi, &yi), &wi)| (xi, yi, wi))
        .collect();
    if points.len() < 2 {
        return None;
    }
    // Two passes around the weighted means: weights spanning many orders of
    // magnitude would otherwise cancel catastrophically.
    let sw: f64 = points.iter().map(|p| p.2).sum();
    let xbar = points.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let ybar = points.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = points.iter().map(|p| p.2 * (p.0 - xbar) * (p.0 - xbar)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| p.2 * (p.0 - xbar) * (p.1 - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    Some(LineFit {
        slope,
        intercept,
        slope_se: (1.0 / sxx).sqrt(),
        intercept_se: (1.0 / sw + xbar * xbar / sxx).sqrt(),
    })
}
