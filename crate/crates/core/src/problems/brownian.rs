//! Multi-factor Wiener paths on dyadic grids with Brownian-bridge refinement.
//!
//! Paths store the Wiener values at grid points rather than increments.
//! Refinement inserts midpoints and coarsening drops them, so coarsening a
//! refined path returns the original points exactly.

use crate::error::{Error, Result};
use crate::rng::Stream;

#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    level: u32,
    gamma: u32,
    horizon: f64,
    /// `points[f][n]` is factor `f` at time n·h, with `points[f][0] = 0`.
    points: Vec<Vec<f64>>,
}

impl BrownianPath {
    /// Sample a path with 2^{γ·level} steps per factor; each increment is
    /// √h·N(0, 1). Factors are filled one after another from `stream`.
    pub fn sample(factors: usize, gamma: u32, level: u32, horizon: f64, stream: &mut Stream) -> Self {
        let steps = 1usize << (gamma * level);
        let scale = (horizon / steps as f64).sqrt();
        let points = (0..factors)
            .map(|_| {
                let mut w = Vec::with_capacity(steps + 1);
                let mut acc = 0.0;
                w.push(acc);
                for _ in 0..steps {
                    acc += scale * stream.standard_normal();
                    w.push(acc);
                }
                w
            })
            .collect();
        Self {
            level,
            gamma,
            horizon,
            points,
        }
    }

    /// Build a path from explicit increments (one array per factor).
    pub fn from_increments(gamma: u32, level: u32, horizon: f64, increments: &[Vec<f64>]) -> Result<Self> {
        let steps = 1usize << (gamma * level);
        let mut points = Vec::with_capacity(increments.len());
        for inc in increments {
            if inc.len() != steps {
                return Err(Error::Config(format!(
                    "level {level} with gamma {gamma} needs {steps} increments, got {}",
                    inc.len()
                )));
            }
            let mut w = Vec::with_capacity(steps + 1);
            let mut acc = 0.0;
            w.push(acc);
            for &dw in inc {
                acc += dw;
                w.push(acc);
            }
            points.push(w);
        }
        Ok(Self {
            level,
            gamma,
            horizon,
            points,
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn gamma(&self) -> u32 {
        self.gamma
    }

    pub fn factors(&self) -> usize {
        self.points.len()
    }

    pub fn steps(&self) -> usize {
        1usize << (self.gamma * self.level)
    }

    pub fn step_size(&self) -> f64 {
        self.horizon / self.steps() as f64
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn points(&self, factor: usize) -> &[f64] {
        &self.points[factor]
    }

    pub fn terminal(&self, factor: usize) -> f64 {
        *self.points[factor].last().expect("path has at least one point")
    }

    pub fn increments(&self, factor: usize) -> Vec<f64> {
        self.points[factor].windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Increments of `factor` on the coarser grid of `level` (≤ own level).
    pub fn increments_at(&self, factor: usize, level: u32) -> impl Iterator<Item = f64> + '_ {
        debug_assert!(level <= self.level);
        let stride = 1usize << (self.gamma * (self.level - level));
        let w = &self.points[factor];
        (0..w.len() / stride).map(move |n| w[(n + 1) * stride] - w[n * stride])
    }

    /// Halve the step size γ times by Brownian-bridge midpoints:
    /// W((n+½)h) = (W(nh) + W((n+1)h))/2 + √(h/4)·ζ with fresh ζ per
    /// sub-interval and factor.
    pub fn refine(&mut self, stream: &mut Stream) {
        for _ in 0..self.gamma {
            let h = self.horizon / (self.points[0].len() - 1) as f64;
            let spread = (h / 4.0).sqrt();
            for w in &mut self.points {
                let mut fine = Vec::with_capacity(2 * w.len() - 1);
                for pair in w.windows(2) {
                    fine.push(pair[0]);
                    fine.push(0.5 * (pair[0] + pair[1]) + spread * stream.standard_normal());
                }
                fine.push(*w.last().expect("non-empty"));
                *w = fine;
            }
        }
        self.level += 1;
    }

    /// The same path one level coarser: every 2^γ-th point.
    pub fn coarsen(&self) -> Result<Self> {
        if self.level == 0 {
            return Err(Error::Domain(format!(
                "cannot coarsen a path with {} increments (needs at least {})",
                self.steps(),
                1usize << self.gamma
            )));
        }
        let stride = 1usize << self.gamma;
        let points = self
            .points
            .iter()
            .map(|w| w.iter().step_by(stride).copied().collect())
            .collect();
        Ok(Self {
            level: self.level - 1,
            gamma: self.gamma,
            horizon: self.horizon,
            points,
        })
    }
}

/// Path with 2^{γ·ell} steps per factor.
pub fn brownian_init(factors: usize, gamma: u32, ell: u32, horizon: f64, stream: &mut Stream) -> BrownianPath {
    BrownianPath::sample(factors, gamma, ell, horizon, stream)
}

/// Bridge-refined copy of `path`.
pub fn brownian_refine(path: &BrownianPath, stream: &mut Stream) -> BrownianPath {
    let mut refined = path.clone();
    refined.refine(stream);
    refined
}

/// `path` one level coarser (sums of 2^γ consecutive increments).
pub fn coarse_from_fine(path: &BrownianPath) -> Result<BrownianPath> {
    path.coarsen()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn level_zero_has_one_increment_per_factor() {
        let mut s = derive_stream(0, &[]).unwrap();
        let p = brownian_init(3, 1, 0, 1.0, &mut s);
        assert_eq!(p.factors(), 3);
        assert_eq!(p.steps(), 1);
        assert_eq!(p.increments(2).len(), 1);
    }

    #[test]
    fn base_increments_have_variance_h() {
        let n_paths = 10_000;
        let mut sum_sq = 0.0;
        let mut count = 0.0;
        for i in 0..n_paths {
            let mut s = derive_stream(1, &[i]).unwrap();
            let p = brownian_init(1, 1, 3, 1.0, &mut s);
            for dw in p.increments(0) {
                sum_sq += dw * dw;
                count += 1.0;
            }
        }
        let var = sum_sq / count;
        // Var of the χ² mean: 2h²/n.
        let se = (2.0f64 / 64.0 / count).sqrt();
        assert!((var - 0.125).abs() < 4.0 * se, "{var}");
    }

    #[test]
    fn bridge_midpoint_formula() {
        // ΔW = 0.6 over h = 0.25, so √(h/4) = 0.25.
        let p = BrownianPath::from_increments(1, 2, 1.0, &[vec![0.6, 0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(p.step_size(), 0.25);
        let spread = (p.step_size() / 4.0).sqrt();
        let w0 = 0.0;
        let w1 = 0.6;
        for (zeta, expected) in [(0.0, (0.3, 0.3)), (1.0, (0.55, 0.05))] {
            let mid: f64 = 0.5 * (w0 + w1) + spread * zeta;
            assert_relative_eq!(mid - w0, expected.0, epsilon = 1e-15);
            assert_relative_eq!(w1 - mid, expected.1, epsilon = 1e-15);
            assert_eq!((mid - w0) + (w1 - mid), 0.6);
        }
    }

    #[test]
    fn refined_increments_have_variance_half_h() {
        // Parent increment over h = 0.5 split once: each half has variance 0.25.
        let trials = 10_000;
        let mut sum_sq = 0.0;
        for i in 0..trials {
            let mut s = derive_stream(2, &[i]).unwrap();
            let parent = brownian_init(1, 1, 1, 1.0, &mut s);
            let fine = brownian_refine(&parent, &mut s);
            let inc = fine.increments(0);
            sum_sq += inc[0] * inc[0] + inc[3] * inc[3];
        }
        let var = sum_sq / (2.0 * trials as f64);
        let se = (2.0f64 * 0.25 * 0.25 / (2.0 * trials as f64)).sqrt();
        assert!((var - 0.25).abs() < 4.0 * se, "{var}");
    }

    #[test]
    fn coarsen_pairs_increments() {
        let p = BrownianPath::from_increments(1, 2, 1.0, &[vec![0.1, 0.2, -0.3, 0.4]]).unwrap();
        let c = coarse_from_fine(&p).unwrap();
        let inc = c.increments(0);
        assert_relative_eq!(inc[0], 0.3, epsilon = 1e-15);
        assert_relative_eq!(inc[1], 0.1, epsilon = 1e-15);
        assert_eq!(c.level(), 1);
    }

    #[test]
    fn coarsen_level_zero_is_an_error() {
        let p = BrownianPath::from_increments(1, 0, 1.0, &[vec![0.5]]).unwrap();
        assert!(coarse_from_fine(&p).is_err());
    }

    #[test]
    fn from_increments_checks_length() {
        assert!(BrownianPath::from_increments(1, 2, 1.0, &[vec![0.1; 3]]).is_err());
    }

    #[test]
    fn gamma_two_refines_by_four() {
        let mut s = derive_stream(4, &[]).unwrap();
        let p = brownian_init(2, 2, 1, 1.0, &mut s);
        assert_eq!(p.steps(), 4);
        let f = brownian_refine(&p, &mut s);
        assert_eq!(f.steps(), 16);
        assert_eq!(f.coarsen().unwrap(), p);
    }

    #[test]
    fn increments_at_coarser_level() {
        let mut s = derive_stream(5, &[]).unwrap();
        let p = brownian_init(1, 1, 4, 1.0, &mut s);
        let c = p.coarsen().unwrap().coarsen().unwrap();
        let via_view: Vec<f64> = p.increments_at(0, 2).collect();
        assert_eq!(via_view, c.increments(0));
    }

    proptest! {
        #[test]
        fn refine_then_coarsen_is_identity(seed in any::<u64>(), gamma in 1u32..3, level in 0u32..4, factors in 1usize..4, depth in 1usize..4) {
            let mut s = derive_stream(seed, &[]).unwrap();
            let original = brownian_init(factors, gamma, level, 1.0, &mut s);
            let mut refined = original.clone();
            for _ in 0..depth {
                refined.refine(&mut s);
            }
            // Every parent increment is reconstructed by summing children.
            let stride = 1usize << (gamma as usize * depth);
            for f in 0..factors {
                let fine = refined.increments(f);
                for (n, parent) in original.increments(f).iter().enumerate() {
                    let sum: f64 = fine[n * stride..(n + 1) * stride].iter().sum();
                    prop_assert!((sum - parent).abs() <= 1e-12 * (1.0 + parent.abs()));
                }
                prop_assert_eq!(refined.terminal(f), original.terminal(f));
            }
            let mut back = refined;
            for _ in 0..depth {
                back = back.coarsen().unwrap();
            }
            prop_assert_eq!(back, original);
        }
    }
}
