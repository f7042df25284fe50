//! Dyad chains as a random number source: integer encoding, sample streams,
//! bit packing and three standard randomness tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

use crate::dynamics::{NoiseSpec, OutcomeKind};
use crate::ensemble::run_trial_range;
use crate::error::{invalid, Error, Result};
use crate::topology::DyadNetwork;

/// Significance level of every test in [`test_suite`].
pub const ALPHA: f64 = 0.01;

/// Largest fraction of failed trials [`generate_stream`] tolerates.
pub const MAX_FAILURE_FRACTION: f64 = 0.1;

/// One chain readout; `value` has dyad 0 as its most significant bit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSample {
    pub bits: Vec<u8>,
    pub value: u64,
    pub seed: u64,
}

pub fn encode(bits: &[u8]) -> Result<u64> {
    if bits.len() > 64 {
        return Err(Error::Overflow { bits: 64 });
    }
    bits.iter().try_fold(0u64, |acc, &b| match b {
        0 | 1 => Ok((acc << 1) | u64::from(b)),
        _ => Err(invalid(format!("bit value {b} is not 0 or 1"))),
    })
}

pub fn decode(value: u64, n: usize) -> Result<Vec<u8>> {
    if n > 64 || (n < 64 && value >> n != 0) {
        return Err(Error::Overflow { bits: n });
    }
    Ok((0..n).rev().map(|k| ((value >> k) & 1) as u8).collect())
}

/// Resolved samples plus the bookkeeping of the trials that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stream {
    pub samples: Vec<ChainSample>,
    pub attempted: usize,
    pub unresolved: usize,
    pub nonstationary: usize,
}

/// Runs seeds `noise.seed + k`, k = 0, 1, ... until `n_samples` trials resolve.
///
/// Unresolved and non-stationary trials are skipped and counted; more than
/// 10% of them fails with `YieldTooLow`.
pub fn generate_stream(net: &DyadNetwork, n_samples: usize, noise: &NoiseSpec) -> Result<Stream> {
    if net.dyads.is_empty() || net.dyads.len() > 64 {
        return Err(invalid("stream needs between 1 and 64 dyads"));
    }
    let mut samples = Vec::with_capacity(n_samples);
    let (mut attempted, mut unresolved, mut nonstationary) = (0usize, 0usize, 0usize);
    while samples.len() < n_samples {
        let missing = n_samples - samples.len();
        let batch = if attempted == 0 { missing } else { missing + missing / 8 + 8 };
        for o in run_trial_range(&net.config, &net.dyads, attempted, attempted + batch, noise)? {
            attempted += 1;
            match (o.kind, o.bits) {
                (OutcomeKind::Steady, Some(bits)) => {
                    if samples.len() < n_samples {
                        samples.push(ChainSample { value: encode(&bits)?, bits, seed: o.seed });
                    }
                }
                (OutcomeKind::Steady, None) => unresolved += 1,
                _ => nonstationary += 1,
            }
        }
        let failed = unresolved + nonstationary;
        if failed as f64 > MAX_FAILURE_FRACTION * attempted as f64 {
            return Err(Error::YieldTooLow { failed, attempted });
        }
    }
    Ok(Stream { samples, attempted, unresolved, nonstationary })
}

/// Concatenated sample bits packed MSB-first, final byte zero-padded.
pub fn pack_bits(samples: &[ChainSample]) -> Vec<u8> {
    let mut out = Vec::new();
    for (n, &b) in samples.iter().flat_map(|s| &s.bits).enumerate() {
        if n.is_multiple_of(8) {
            out.push(0);
        }
        if b != 0 {
            *out.last_mut().unwrap() |= 0x80 >> (n % 8);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub statistic: f64,
    pub p_value: f64,
    pub pass: bool,
}

impl TestReport {
    fn new(name: &str, statistic: f64, p_value: f64) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        TestReport { name: name.into(), statistic, p_value, pass: p_value >= ALPHA }
    }
}

/// Frequency (monobit) test over a bit sequence: `s = |sum(2b - 1)| / sqrt(n)`, `p = erfc(s / sqrt 2)`.
pub fn monobit(bits: &[u8]) -> Result<TestReport> {
    if bits.is_empty() {
        return Err(Error::TooFewSamples("monobit test needs at least one bit".into()));
    }
    let sum: i64 = bits.iter().map(|&b| if b != 0 { 1 } else { -1 }).sum();
    let s = sum.unsigned_abs() as f64 / (bits.len() as f64).sqrt();
    Ok(TestReport::new("monobit", s, erfc(s / std::f64::consts::SQRT_2)))
}

/// Runs test on one bit sequence; returns `(z, p)` where `z` is the normalised run-count deviation.
///
/// A sequence failing the frequency prerequisite `|pi - 1/2| >= 2 / sqrt(n)` gets `p = 0`.
pub fn runs_test_sequence(bits: &[u8]) -> (f64, f64) {
    let n = bits.len() as f64;
    let pi = bits.iter().filter(|&&b| b != 0).count() as f64 / n;
    if (pi - 0.5).abs() >= 2.0 / n.sqrt() {
        return (f64::INFINITY, 0.0);
    }
    let v = 1 + bits.windows(2).filter(|w| w[0] != w[1]).count();
    let dev = (v as f64 - 2.0 * n * pi * (1.0 - pi)).abs();
    let z = dev / (2.0 * (2.0 * n).sqrt() * pi * (1.0 - pi));
    (z, erfc(z))
}

/// Runs test applied to each dyad position across samples, combined by Bonferroni:
/// `p = min(1, n_positions * min_k p_k)`; the statistic is the largest `z`.
pub fn runs_by_position(samples: &[ChainSample]) -> Result<TestReport> {
    let width = sample_width(samples)?;
    let mut worst_z = 0.0f64;
    let mut min_p = 1.0f64;
    for k in 0..width {
        let column: Vec<u8> = samples.iter().map(|s| s.bits[k]).collect();
        let (z, p) = runs_test_sequence(&column);
        worst_z = worst_z.max(z);
        min_p = min_p.min(p);
    }
    Ok(TestReport::new("runs", worst_z, (min_p * width as f64).min(1.0)))
}

/// Pearson chi-square of the state histogram against uniform over `2^n` states.
pub fn chi_square_uniformity(samples: &[ChainSample]) -> Result<TestReport> {
    let width = sample_width(samples)?;
    if width > 20 {
        return Err(invalid("chi-square over more than 2^20 states is not supported"));
    }
    let k = 1usize << width;
    let expected = samples.len() as f64 / k as f64;
    if expected < 5.0 {
        return Err(Error::TooFewSamples(format!(
            "expected count {expected:.2} per state is below 5; need at least {} samples",
            5 * k
        )));
    }
    let mut counts = vec![0usize; k];
    for s in samples {
        counts[s.value as usize] += 1;
    }
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let dist = ChiSquared::new((k - 1) as f64).map_err(|e| invalid(e.to_string()))?;
    Ok(TestReport::new("chi_square", stat, dist.sf(stat)))
}

fn sample_width(samples: &[ChainSample]) -> Result<usize> {
    let width = samples.first().map(|s| s.bits.len()).unwrap_or(0);
    if width == 0 || samples.iter().any(|s| s.bits.len() != width) {
        return Err(invalid("samples must share a nonzero bit width"));
    }
    Ok(width)
}

/// Monobit over the concatenated stream, runs per dyad position, chi-square over states.
pub fn test_suite(samples: &[ChainSample]) -> Result<Vec<TestReport>> {
    if samples.len() < 100 {
        return Err(Error::TooFewSamples(format!("{} samples, need at least 100", samples.len())));
    }
    let bits: Vec<u8> = samples.iter().flat_map(|s| s.bits.iter().copied()).collect();
    Ok(vec![monobit(&bits)?, runs_by_position(samples)?, chi_square_uniformity(samples)?])
}

/// Empirical mutual information in bits between dyad positions `a` and `b`.
pub fn mutual_information(samples: &[ChainSample], a: usize, b: usize) -> Result<f64> {
    let width = sample_width(samples)?;
    if a >= width || b >= width {
        return Err(invalid("dyad position out of range"));
    }
    let mut joint = [[0usize; 2]; 2];
    for s in samples {
        joint[s.bits[a] as usize][s.bits[b] as usize] += 1;
    }
    let n = samples.len() as f64;
    let pa = [(joint[0][0] + joint[0][1]) as f64 / n, (joint[1][0] + joint[1][1]) as f64 / n];
    let pb = [(joint[0][0] + joint[1][0]) as f64 / n, (joint[0][1] + joint[1][1]) as f64 / n];
    let mut mi = 0.0;
    for (x, row) in joint.iter().enumerate() {
        for (y, &c) in row.iter().enumerate() {
            if c > 0 {
                let p = c as f64 / n;
                mi += p * (p / (pa[x] * pb[y])).log2();
            }
        }
    }
    Ok(mi.max(0.0))
}

/// Largest mutual information over all dyad pairs.
pub fn max_pairwise_mutual_information(samples: &[ChainSample]) -> Result<f64> {
    let width = sample_width(samples)?;
    let mut worst = 0.0f64;
    for a in 0..width {
        for b in a + 1..width {
            worst = worst.max(mutual_information(samples, a, b)?);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn samples_from_values(values: &[u64], width: usize) -> Vec<ChainSample> {
        values
            .iter()
            .map(|&v| ChainSample { bits: decode(v, width).unwrap(), value: v, seed: 0 })
            .collect()
    }

    fn ideal(n: usize, width: usize, seed: u64) -> Vec<ChainSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<u64> = (0..n).map(|_| rng.random_range(0..1u64 << width)).collect();
        samples_from_values(&values, width)
    }

    /// Binary expansion by repeated division, independent of the shift-based codec.
    fn binary_digits(mut v: u64, n: usize) -> Vec<u8> {
        let mut out = vec![0u8; n];
        for slot in out.iter_mut().rev() {
            *slot = (v % 2) as u8;
            v /= 2;
        }
        out
    }

    #[test]
    fn thirty_dyad_integer() {
        let pattern = "101000011111110001001001111010";
        let bits: Vec<u8> = pattern.bytes().map(|c| c - b'0').collect();
        assert_eq!(binary_digits(679_416_442, 30), bits);
        assert_eq!(encode(&bits).unwrap(), 679_416_442);
        assert_eq!(decode(679_416_442, 30).unwrap(), bits);
    }

    #[test]
    fn codec_edges() {
        assert_eq!(encode(&[0; 5]).unwrap(), 0);
        assert_eq!(encode(&[]).unwrap(), 0);
        assert_eq!(decode(u64::MAX, 64).unwrap(), vec![1; 64]);
        assert_eq!(decode(32, 5).unwrap_err(), Error::Overflow { bits: 5 });
        assert!(encode(&[1; 65]).is_err());
        assert!(encode(&[2]).is_err());
    }

    proptest! {
        #[test]
        fn codec_round_trip(bits in proptest::collection::vec(0u8..2, 0..=64)) {
            let v = encode(&bits).unwrap();
            prop_assert_eq!(decode(v, bits.len()).unwrap(), bits.clone());
            prop_assert_eq!(binary_digits(v, bits.len()), bits);
        }
    }

    #[test]
    fn packing_is_msb_first_and_padded() {
        let s = vec![
            ChainSample { bits: vec![1, 0, 1], value: 5, seed: 0 },
            ChainSample { bits: vec![1, 1, 1], value: 7, seed: 1 },
            ChainSample { bits: vec![0, 0, 1], value: 1, seed: 2 },
        ];
        // 101 111 001 -> 10111100 1(0000000)
        assert_eq!(pack_bits(&s), vec![0b1011_1100, 0b1000_0000]);
        assert!(pack_bits(&[]).is_empty());
    }

    #[test]
    fn ideal_coins_pass() {
        let s = ideal(5000, 5, 1);
        let reports = test_suite(&s).unwrap();
        assert_eq!(reports.len(), 3);
        for r in &reports {
            assert!(r.pass, "{r:?}");
            assert!((0.0..=1.0).contains(&r.p_value));
        }
        assert!(max_pairwise_mutual_information(&s).unwrap() < 0.01);
    }

    #[test]
    fn constant_stream_fails_monobit() {
        let s = samples_from_values(&vec![31; 500], 5);
        let r = test_suite(&s).unwrap();
        assert!(r[0].p_value < 1e-10 && !r[0].pass);
        assert!(!r[1].pass && !r[2].pass);
    }

    #[test]
    fn biased_histogram_fails_chi_square() {
        // states with the lowest bit set are never produced
        let values: Vec<u64> = ideal(2000, 5, 2).iter().map(|s| s.value & !1).collect();
        let s = samples_from_values(&values, 5);
        assert!(!chi_square_uniformity(&s).unwrap().pass);
    }

    #[test]
    fn chi_square_statistic_averages_to_dof() {
        let mut total = 0.0;
        let batches = 200;
        for b in 0..batches {
            total += chi_square_uniformity(&ideal(320, 3, 100 + b)).unwrap().statistic;
        }
        let mean = total / batches as f64;
        // mean 7, sd of the batch mean sqrt(14 / 200) ~ 0.26
        assert!((mean - 7.0).abs() < 1.0, "mean {mean}");
    }

    #[test]
    fn runs_test_reference_sequence() {
        // 1001101011, n = 10: V = 7, pi = 0.6, p = 0.147232
        let bits = [1, 0, 0, 1, 1, 0, 1, 0, 1, 1];
        let (_, p) = runs_test_sequence(&bits);
        assert!((p - 0.147232).abs() < 1e-6, "p {p}");
    }

    #[test]
    fn monobit_reference_sequence() {
        // 1011010101, n = 10: S = 2, s = 0.632456, p = 0.527089
        let r = monobit(&[1, 0, 1, 1, 0, 1, 0, 1, 0, 1]).unwrap();
        assert!((r.p_value - 0.527089).abs() < 1e-6);
    }

    #[test]
    fn alternating_bits_fail_runs() {
        let values: Vec<u64> = (0..400).map(|i| if i % 2 == 0 { 0b10101 } else { 0b01010 }).collect();
        assert!(!runs_by_position(&samples_from_values(&values, 5)).unwrap().pass);
    }

    #[test]
    fn sample_count_guards() {
        assert!(matches!(test_suite(&ideal(99, 2, 0)), Err(Error::TooFewSamples(_))));
        assert!(matches!(chi_square_uniformity(&ideal(150, 5, 0)), Err(Error::TooFewSamples(_))));
    }

    #[test]
    fn mutual_information_of_copies_is_one_bit() {
        let values: Vec<u64> = ideal(4000, 1, 9).iter().map(|s| s.value * 3).collect();
        let mi = mutual_information(&samples_from_values(&values, 2), 0, 1).unwrap();
        assert!((mi - 1.0).abs() < 1e-3);
    }
}
