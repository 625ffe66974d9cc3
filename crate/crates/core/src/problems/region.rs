//! Signed distance to a region boundary, turning P(G ∈ Ω) into P(g ≥ 0).

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum RegionSpec {
    /// {x : normal·x > offset}.
    Halfspace { normal: Vec<f64>, offset: f64 },
    /// {x : |x − center| < radius}.
    Ball { center: Vec<f64>, radius: f64 },
}

impl RegionSpec {
    pub fn halfspace(normal: Vec<f64>, offset: f64) -> Result<Self> {
        let region = RegionSpec::Halfspace { normal, offset };
        region.validate()?;
        Ok(region)
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        let region = RegionSpec::Ball { center, radius };
        region.validate()?;
        Ok(region)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            RegionSpec::Halfspace { normal, offset } => {
                if !offset.is_finite() || normal.iter().any(|v| !v.is_finite()) || norm(normal) == 0.0 {
                    return Err(Error::Config("halfspace needs a finite nonzero normal".into()));
                }
            }
            RegionSpec::Ball { center, radius } => {
                if center.iter().any(|v| !v.is_finite()) || !(*radius > 0.0 && radius.is_finite()) {
                    return Err(Error::Config("ball needs a finite center and positive radius".into()));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            RegionSpec::Halfspace { normal, .. } => normal.len(),
            RegionSpec::Ball { center, .. } => center.len(),
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Distance from `g` to the boundary of `region`, positive inside.
pub fn signed_distance(g: &[f64], region: &RegionSpec) -> f64 {
    debug_assert_eq!(g.len(), region.dim());
    match region {
        RegionSpec::Halfspace { normal, offset } => {
            let dot: f64 = normal.iter().zip(g).map(|(n, x)| n * x).sum();
            (dot - offset) / norm(normal)
        }
        RegionSpec::Ball { center, radius } => {
            let dist = g.iter().zip(center).map(|(x, c)| (x - c) * (x - c)).sum::<f64>().sqrt();
            radius - dist
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    #[test]
    fn coordinate_halfspace() {
        let h = RegionSpec::halfspace(vec![1.0, 0.0], 0.0).unwrap();
        assert_eq!(signed_distance(&[3.0, 4.0], &h), 3.0);
        assert_eq!(signed_distance(&[-2.0, 4.0], &h), -2.0);
        let scaled = RegionSpec::halfspace(vec![0.0, 2.0], 2.0).unwrap();
        assert_eq!(signed_distance(&[5.0, 4.0], &scaled), 3.0);
    }

    #[test]
    fn unit_ball() {
        let b = RegionSpec::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert!(signed_distance(&[0.6, 0.8], &b).abs() < 1e-15);
        assert_eq!(signed_distance(&[0.0, 0.0], &b), 1.0);
        assert_eq!(signed_distance(&[3.0, 0.0], &b), -2.0);
    }

    #[test]
    fn invalid_regions() {
        assert!(RegionSpec::halfspace(vec![0.0, 0.0], 1.0).is_err());
        assert!(RegionSpec::ball(vec![0.0], 0.0).is_err());
        assert!(RegionSpec::ball(vec![f64::NAN], 1.0).is_err());
    }

    #[test]
    fn lipschitz_on_random_pairs() {
        let mut s = derive_stream(13, &[]).unwrap();
        let regions = [
            RegionSpec::halfspace(vec![0.3, -1.2, 2.0], 0.4).unwrap(),
            RegionSpec::ball(vec![0.5, 0.1, -0.2], 1.3).unwrap(),
        ];
        for region in &regions {
            for _ in 0..10_000 {
                let g: Vec<f64> = (0..3).map(|_| 2.0 * s.standard_normal()).collect();
                let h: Vec<f64> = (0..3).map(|_| 2.0 * s.standard_normal()).collect();
                let lhs = (signed_distance(&g, region) - signed_distance(&h, region)).abs();
                let rhs = g.iter().zip(&h).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-15, "{lhs} > {rhs}");
            }
        }
    }
}
