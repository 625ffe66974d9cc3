//! Deterministic batch sampling of multilevel corrections.
//!
//! Sample `i` of level `ℓ` always draws from the stream
//! `(seed, [tag, ℓ₀, ℓ, i])`. Batches are cut into fixed chunks that may run
//! on any thread; chunk results are merged in index order, so the output is
//! independent of scheduling.

use rayon::prelude::*;

use crate::error::Result;
use crate::refine::{correction_sample, RefinableSampler, RefinementParams};
use crate::rng::derive_stream;
use crate::stats::LevelStats;

/// Stream tag of the main estimator samples.
pub const ESTIMATOR_TAG: u64 = 1;
/// Stream tag of starting-level pilot samples.
pub const PILOT_TAG: u64 = 2;
/// Stream tag of fixed-budget level diagnostics.
pub const DIAGNOSTIC_TAG: u64 = 3;

const CHUNK: u64 = 1024;

/// Aggregates of a range of correction samples on one level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelBatch {
    pub stats: LevelStats,
    /// Σ 2^{γη} over fine legs, and Σ 2^{2γη}.
    pub work_ratio_sum: f64,
    pub work_ratio_sum_sq: f64,
    pub max_eta_fine: u32,
}

impl LevelBatch {
    pub fn new(level: u32) -> Self {
        Self {
            stats: LevelStats::new(level),
            work_ratio_sum: 0.0,
            work_ratio_sum_sq: 0.0,
            max_eta_fine: 0,
        }
    }

    pub fn merge(&mut self, other: &LevelBatch) {
        self.stats.merge(&other.stats);
        self.work_ratio_sum += other.work_ratio_sum;
        self.work_ratio_sum_sq += other.work_ratio_sum_sq;
        self.max_eta_fine = self.max_eta_fine.max(other.max_eta_fine);
    }

    /// Mean of 2^{γη} over fine legs and its standard error.
    pub fn work_ratio(&self) -> (f64, f64) {
        let n = self.stats.count() as f64;
        if n < 2.0 {
            return (self.work_ratio_sum / n.max(1.0), f64::INFINITY);
        }
        let mean = self.work_ratio_sum / n;
        let var = ((self.work_ratio_sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        (mean, (var / n).sqrt())
    }
}

/// Identifies one family of sample streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleStreams {
    pub seed: u64,
    pub tag: u64,
}

/// Correction samples with indices `range` on level `ell` (base level
/// `ell0`).
pub fn sample_level<P: RefinableSampler>(
    problem: &P,
    ell: u32,
    ell0: u32,
    params: &RefinementParams,
    streams: SampleStreams,
    range: std::ops::Range<u64>,
) -> Result<LevelBatch> {
    let starts: Vec<u64> = (range.start..range.end).step_by(CHUNK as usize).collect();
    let chunks: Vec<Result<LevelBatch>> = starts
        .par_iter()
        .map(|&start| {
            let end = (start + CHUNK).min(range.end);
            let mut batch = LevelBatch::new(ell);
            for i in start..end {
                let stream = derive_stream(streams.seed, &[streams.tag, u64::from(ell0), u64::from(ell), i])?;
                let sample = correction_sample(problem, ell, ell0, params, &stream)?;
                batch.stats.push(f64::from(sample.delta_h), sample.cost);
                let ratio = (params.gamma * f64::from(sample.eta_fine)).exp2();
                batch.work_ratio_sum += ratio;
                batch.work_ratio_sum_sq += ratio * ratio;
                batch.max_eta_fine = batch.max_eta_fine.max(sample.eta_fine);
            }
            Ok(batch)
        })
        .collect();
    let mut total = LevelBatch::new(ell);
    for chunk in chunks {
        total.merge(&chunk?);
    }
    Ok(total)
}
