//! Deterministic, splittable random-number streams.
//!
//! Every stream is a ChaCha8 keystream whose 256-bit key is a hash of
//! `(experiment_seed, path)`. A path such as `[tag, level, sample_index]`
//! addresses one independent stream, so any sample can be regenerated
//! without replaying the samples before it, and parallel dispatch order
//! never changes the output.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Longest admissible stream path.
pub const MAX_PATH_LEN: usize = 8;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// Address of a stream: experiment seed plus a short integer path.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StreamKey {
    seed: u64,
    path: Vec<u64>,
}

impl StreamKey {
    pub fn new(seed: u64, path: &[u64]) -> Result<Self> {
        if path.len() > MAX_PATH_LEN {
            return Err(Error::Config(format!(
                "stream path has {} components, at most {MAX_PATH_LEN} allowed",
                path.len()
            )));
        }
        Ok(Self {
            seed,
            path: path.to_vec(),
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Key for a child stream with `component` appended to the path.
    pub fn child(&self, component: u64) -> Result<Self> {
        let mut path = self.path.clone();
        path.push(component);
        Self::new(self.seed, &path)
    }

    fn key_bytes(&self) -> [u8; 32] {
        let mut h = splitmix(self.seed ^ 0x6a09_e667_f3bc_c908);
        h = splitmix(h ^ (self.path.len() as u64).wrapping_mul(GOLDEN));
        for &component in &self.path {
            h = splitmix(h.wrapping_add(GOLDEN) ^ splitmix(component ^ 0xbb67_ae85_84ca_a73b));
        }
        let mut bytes = [0u8; 32];
        for (i, chunk) in bytes.chunks_exact_mut(8).enumerate() {
            let word = splitmix(h.wrapping_add((i as u64 + 1).wrapping_mul(GOLDEN)));
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        bytes
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A positioned random stream. Cheap to clone; a clone continues from the
/// same position independently.
#[derive(Debug, Clone)]
pub struct Stream {
    key: StreamKey,
    rng: ChaCha8Rng,
}

/// Derive the stream addressed by `(seed, path)`, positioned at counter 0.
pub fn derive_stream(seed: u64, path: &[u64]) -> Result<Stream> {
    Ok(Stream::from_key(StreamKey::new(seed, path)?))
}

impl Stream {
    pub fn from_key(key: StreamKey) -> Self {
        let rng = ChaCha8Rng::from_seed(key.key_bytes());
        Self { key, rng }
    }

    pub fn key(&self) -> &StreamKey {
        &self.key
    }

    /// Derive an independent child stream (path extended by `component`).
    pub fn substream(&self, component: u64) -> Result<Stream> {
        Ok(Stream::from_key(self.key.child(component)?))
    }

    /// Number of 64-bit outputs consumed so far.
    pub fn counter(&self) -> u64 {
        (self.rng.get_word_pos() / 2) as u64
    }

    /// Reposition the stream at the given 64-bit output index.
    pub fn seek(&mut self, counter: u64) {
        self.rng.set_word_pos(u128::from(counter) * 2);
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform variate on the open interval (0, 1) with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Standard normal variate (ziggurat).
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }
}

/// One N(0, 1) draw from `stream`.
pub fn standard_normal(stream: &mut Stream) -> f64 {
    stream.standard_normal()
}

/// Standard normal quantile function, Wichura's AS 241 (PPND16).
///
/// Relative accuracy is about 1e-16 over (0, 1). Returns ±∞ at the
/// endpoints and NaN outside [0, 1].
pub fn inverse_normal_cdf(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
            + 6.726_577_092_700_87e4)
            * r
            + 4.592_195_393_154_987e4)
            * r
            + 1.373_169_376_550_946e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5;
        let den = ((((((5.226_495_278_852_854e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return q * num / den;
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let value = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_758_8)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_88e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (x, y) in a.iter().zip(b) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma) * (x - ma);
            sbb += (y - mb) * (y - mb);
        }
        sab / (saa * sbb).sqrt()
    }

    #[test]
    fn same_key_same_sequence() {
        let mut a = derive_stream(42, &[0, 0]).unwrap();
        let mut b = derive_stream(42, &[0, 0]).unwrap();
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn empty_path_is_a_valid_root() {
        let mut root = derive_stream(42, &[]).unwrap();
        let mut other = derive_stream(42, &[0]).unwrap();
        assert_ne!(root.next_u64(), other.next_u64());
    }

    #[test]
    fn path_too_long_is_rejected() {
        assert!(matches!(
            derive_stream(1, &[0; 9]),
            Err(Error::Config(_))
        ));
        assert!(derive_stream(1, &[0; 8]).is_ok());
    }

    #[test]
    fn sibling_streams_uncorrelated() {
        let n = 10_000;
        let mut a = derive_stream(42, &[0, 0]).unwrap();
        let mut b = derive_stream(42, &[0, 1]).unwrap();
        let xa: Vec<f64> = (0..n).map(|_| a.uniform()).collect();
        let xb: Vec<f64> = (0..n).map(|_| b.uniform()).collect();
        let rho = correlation(&xa, &xb);
        assert!(rho.abs() < 0.05, "rho = {rho}");
    }

    #[test]
    fn pairwise_independence_proxy_across_sample_indices() {
        let n = 10_000;
        let bound = 5.0 / (n as f64).sqrt();
        let draws: Vec<Vec<f64>> = (0..6)
            .map(|i| {
                let mut s = derive_stream(7, &[3, i]).unwrap();
                (0..n).map(|_| s.standard_normal()).collect()
            })
            .collect();
        for i in 0..draws.len() {
            for j in i + 1..draws.len() {
                let rho = correlation(&draws[i], &draws[j]);
                assert!(rho.abs() < bound, "({i},{j}) rho = {rho}");
            }
        }
    }

    #[test]
    fn seek_reproduces_position() {
        let mut s = derive_stream(9, &[1, 2, 3]).unwrap();
        for _ in 0..17 {
            s.next_u64();
        }
        assert_eq!(s.counter(), 17);
        let expected = s.standard_normal();
        let mut t = derive_stream(9, &[1, 2, 3]).unwrap();
        t.seek(17);
        assert_eq!(t.standard_normal(), expected);
    }

    #[test]
    fn normal_moments() {
        let mut s = derive_stream(0, &[]).unwrap();
        let n = 1_000_000;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..n {
            let z = standard_normal(&mut s);
            sum += z;
            sum_sq += z * z;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.004, "mean = {mean}");
        assert!((var - 1.0).abs() < 0.01, "var = {var}");
    }

    #[test]
    fn quantile_matches_reference() {
        let normal = Normal::standard();
        for i in 1..2000 {
            let p = i as f64 / 2000.0;
            let ours = inverse_normal_cdf(p);
            let reference = normal.inverse_cdf(p);
            assert!(
                (ours - reference).abs() <= 1e-12 * reference.abs().max(1.0),
                "p = {p}: {ours} vs {reference}"
            );
        }
        for &p in &[1e-300, 1e-100, 1e-20, 1e-10, 1e-5] {
            let ours = inverse_normal_cdf(p);
            let back = normal_cdf(ours);
            assert!((back - p).abs() <= 1e-12 * p, "p = {p}: Φ(Φ⁻¹(p)) = {back}");
        }
        for &p in &[1e-5, 0.01, 0.3] {
            let (lo, hi) = (inverse_normal_cdf(p), inverse_normal_cdf(1.0 - p));
            assert!((lo + hi).abs() < 1e-9, "asymmetry at {p}: {lo} {hi}");
        }
        assert_eq!(inverse_normal_cdf(0.5), 0.0);
        assert!(inverse_normal_cdf(1.5).is_nan());
    }
}
