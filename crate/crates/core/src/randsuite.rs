//! Seven tests from NIST SP800-22 for validating routing bit strings.
//!
//! Frequency (monobit), frequency within a block, runs, longest run of
//! ones in a block, cumulative sums (forward), serial and approximate
//! entropy. A test passes when its p-value is at least 0.01.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SIGNIFICANCE: f64 = 0.01;

/// Minimum length accepted by [`run_suite`].
pub const SUITE_MIN_BITS: usize = 1000;

pub mod special {
    //! Special functions for p-values.

    const LANCZOS_G: f64 = 7.0;
    const LANCZOS: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];

    /// `ln Γ(x)` for `x > 0`.
    pub fn ln_gamma(x: f64) -> f64 {
        if x < 0.5 {
            // reflection
            let pi = std::f64::consts::PI;
            return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
        }
        let x = x - 1.0;
        let mut a = LANCZOS[0];
        let t = x + LANCZOS_G + 0.5;
        for (i, &coef) in LANCZOS.iter().enumerate().skip(1) {
            a += coef / (x + i as f64);
        }
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
    }

    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;

    fn lower_series(a: f64, x: f64) -> f64 {
        let mut sum = 1.0 / a;
        let mut term = sum;
        let mut ap = a;
        for _ in 0..10_000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * EPS {
                break;
            }
        }
        sum * (-x + a * x.ln() - ln_gamma(a)).exp()
    }

    fn upper_fraction(a: f64, x: f64) -> f64 {
        // modified Lentz
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < EPS {
                break;
            }
        }
        (-x + a * x.ln() - ln_gamma(a)).exp() * h
    }

    /// Regularized upper incomplete gamma `Q(a, x)`.
    pub fn igamc(a: f64, x: f64) -> f64 {
        assert!(a > 0.0, "igamc requires a > 0");
        if x <= 0.0 {
            return 1.0;
        }
        if x < a + 1.0 {
            1.0 - lower_series(a, x)
        } else {
            upper_fraction(a, x)
        }
    }

    /// Regularized lower incomplete gamma `P(a, x)`.
    pub fn igam(a: f64, x: f64) -> f64 {
        assert!(a > 0.0, "igam requires a > 0");
        if x <= 0.0 {
            return 0.0;
        }
        if x < a + 1.0 {
            lower_series(a, x)
        } else {
            1.0 - upper_fraction(a, x)
        }
    }

    /// Complementary error function.
    pub fn erfc(x: f64) -> f64 {
        if x < 0.0 {
            return 2.0 - erfc(-x);
        }
        if x == 0.0 {
            return 1.0;
        }
        // erfc(x) = Q(1/2, x²)
        igamc(0.5, x * x)
    }

    /// Standard normal CDF.
    pub fn normal_cdf(z: f64) -> f64 {
        0.5 * erfc(-z / std::f64::consts::SQRT_2)
    }
}

use special::{erfc, igamc, normal_cdf};

/// Sequence of bits, one per byte.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitString {
    bits: Vec<u8>,
}

impl BitString {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(&b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::out_of_range("bit", format!("{b} is not 0 or 1")));
        }
        Ok(BitString { bits })
    }

    /// Parses ASCII '0'/'1' characters, ignoring whitespace.
    pub fn from_ascii(text: &str) -> Result<Self> {
        text.chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::out_of_range("bit", format!("unexpected character {other:?}"))),
            })
            .collect::<Result<Vec<u8>>>()
            .map(|bits| BitString { bits })
    }

    /// Unpacks bytes most significant bit first.
    pub fn from_packed(bytes: &[u8]) -> Self {
        let bits = bytes
            .iter()
            .flat_map(|&byte| (0..8).rev().map(move |k| (byte >> k) & 1))
            .collect();
        BitString { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    fn ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Monobit,
    BlockFrequency,
    Runs,
    LongestRun,
    CumulativeSums,
    Serial,
    ApproximateEntropy,
}

impl TestKind {
    pub const ALL: [TestKind; 7] = [
        TestKind::Monobit,
        TestKind::BlockFrequency,
        TestKind::Runs,
        TestKind::LongestRun,
        TestKind::CumulativeSums,
        TestKind::Serial,
        TestKind::ApproximateEntropy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TestKind::Monobit => "monobit",
            TestKind::BlockFrequency => "block_frequency",
            TestKind::Runs => "runs",
            TestKind::LongestRun => "longest_run",
            TestKind::CumulativeSums => "cumulative_sums",
            TestKind::Serial => "serial",
            TestKind::ApproximateEntropy => "approximate_entropy",
        }
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TestKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::UnknownName(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteParams {
    pub block_frequency_block: usize,
    pub serial_block: usize,
    pub approximate_entropy_block: usize,
    /// Enforce per-test minimum lengths.
    pub enforce_min_length: bool,
}

impl Default for SuiteParams {
    fn default() -> Self {
        SuiteParams {
            block_frequency_block: 128,
            serial_block: 2,
            approximate_entropy_block: 2,
            enforce_min_length: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub name: String,
    pub p_value: f64,
    pub pass: bool,
}

impl TestResult {
    fn new(kind: TestKind, p_value: f64) -> Self {
        TestResult {
            name: kind.as_str().to_string(),
            p_value,
            pass: p_value >= SIGNIFICANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub results: Vec<TestResult>,
    pub all_pass: bool,
}

fn min_length(kind: TestKind, params: &SuiteParams) -> usize {
    match kind {
        TestKind::Monobit | TestKind::Runs | TestKind::CumulativeSums => 100,
        TestKind::BlockFrequency => params.block_frequency_block.max(100),
        TestKind::LongestRun => 128,
        TestKind::Serial | TestKind::ApproximateEntropy => 100,
    }
}

/// Runs one test on `bits`.
pub fn nist_test(kind: TestKind, bits: &BitString, params: &SuiteParams) -> Result<TestResult> {
    let required = min_length(kind, params);
    if params.enforce_min_length && bits.len() < required {
        return Err(Error::TooShort {
            test: kind.as_str(),
            required,
            actual: bits.len(),
        });
    }
    if bits.is_empty() {
        return Err(Error::TooShort {
            test: kind.as_str(),
            required: 1,
            actual: 0,
        });
    }
    let p = match kind {
        TestKind::Monobit => monobit(bits),
        TestKind::BlockFrequency => block_frequency(bits, params.block_frequency_block)?,
        TestKind::Runs => runs(bits),
        TestKind::LongestRun => longest_run(bits)?,
        TestKind::CumulativeSums => cumulative_sums(bits),
        TestKind::Serial => serial(bits, params.serial_block)?,
        TestKind::ApproximateEntropy => approximate_entropy(bits, params.approximate_entropy_block)?,
    };
    Ok(TestResult::new(kind, p))
}

/// Runs all seven tests with default parameters.
pub fn run_suite(bits: &BitString) -> Result<SuiteReport> {
    if bits.len() < SUITE_MIN_BITS {
        return Err(Error::TooShort {
            test: "suite",
            required: SUITE_MIN_BITS,
            actual: bits.len(),
        });
    }
    let params = SuiteParams::default();
    let results = TestKind::ALL
        .iter()
        .map(|&k| nist_test(k, bits, &params))
        .collect::<Result<Vec<_>>>()?;
    let all_pass = results.iter().all(|r| r.pass);
    Ok(SuiteReport { results, all_pass })
}

fn monobit(bits: &BitString) -> f64 {
    let n = bits.len() as f64;
    let s = 2.0 * bits.ones() as f64 - n;
    erfc(s.abs() / n.sqrt() / std::f64::consts::SQRT_2)
}

fn block_frequency(bits: &BitString, block: usize) -> Result<f64> {
    if block == 0 || block > bits.len() {
        return Err(Error::out_of_range(
            "block_frequency_block",
            format!("{block} invalid for n = {}", bits.len()),
        ));
    }
    let blocks = bits.len() / block;
    let chi2: f64 = bits
        .bits()
        .chunks_exact(block)
        .map(|chunk| {
            let pi = chunk.iter().map(|&b| b as f64).sum::<f64>() / block as f64;
            (pi - 0.5) * (pi - 0.5)
        })
        .sum::<f64>()
        * 4.0
        * block as f64;
    Ok(igamc(blocks as f64 / 2.0, chi2 / 2.0))
}

fn runs(bits: &BitString) -> f64 {
    let n = bits.len() as f64;
    let pi = bits.ones() as f64 / n;
    // frequency prerequisite
    if (pi - 0.5).abs() >= 2.0 / n.sqrt() {
        return 0.0;
    }
    let v = 1 + bits.bits().windows(2).filter(|w| w[0] != w[1]).count();
    let num = (v as f64 - 2.0 * n * pi * (1.0 - pi)).abs();
    let den = 2.0 * (2.0 * n).sqrt() * pi * (1.0 - pi);
    erfc(num / den)
}

/// Exact class probabilities for the longest run of ones in 8-bit blocks:
/// `≤ 1`, `2`, `3`, `≥ 4`.
fn longest_run_probabilities() -> [f64; 4] {
    let mut counts = [0u32; 4];
    for word in 0u32..256 {
        let mut best = 0;
        let mut run = 0;
        for k in 0..8 {
            if (word >> k) & 1 == 1 {
                run += 1;
                best = best.max(run);
            } else {
                run = 0;
            }
        }
        counts[best.clamp(1, 4) - 1] += 1;
    }
    counts.map(|c| c as f64 / 256.0)
}

fn longest_run(bits: &BitString) -> Result<f64> {
    const BLOCK: usize = 8;
    if bits.len() < BLOCK {
        return Err(Error::TooShort {
            test: "longest_run",
            required: BLOCK,
            actual: bits.len(),
        });
    }
    let probs = longest_run_probabilities();
    let mut observed = [0f64; 4];
    let mut blocks = 0;
    for chunk in bits.bits().chunks_exact(BLOCK) {
        let mut best = 0usize;
        let mut run = 0usize;
        for &b in chunk {
            if b == 1 {
                run += 1;
                best = best.max(run);
            } else {
                run = 0;
            }
        }
        observed[best.clamp(1, 4) - 1] += 1.0;
        blocks += 1;
    }
    let n = blocks as f64;
    let chi2: f64 = observed
        .iter()
        .zip(&probs)
        .map(|(v, p)| (v - n * p).powi(2) / (n * p))
        .sum();
    Ok(igamc(1.5, chi2 / 2.0))
}

fn cumulative_sums(bits: &BitString) -> f64 {
    let n = bits.len() as f64;
    let mut s = 0i64;
    let mut z = 0i64;
    for &b in bits.bits() {
        s += if b == 1 { 1 } else { -1 };
        z = z.max(s.abs());
    }
    let z = z as f64;
    let sqrt_n = n.sqrt();
    let mut sum1 = 0.0;
    let start = ((-n / z + 1.0) / 4.0) as i64;
    let finish = ((n / z - 1.0) / 4.0) as i64;
    for k in start..=finish {
        let k = k as f64;
        sum1 += normal_cdf((4.0 * k + 1.0) * z / sqrt_n) - normal_cdf((4.0 * k - 1.0) * z / sqrt_n);
    }
    let mut sum2 = 0.0;
    let start = ((-n / z - 3.0) / 4.0) as i64;
    for k in start..=finish {
        let k = k as f64;
        sum2 += normal_cdf((4.0 * k + 3.0) * z / sqrt_n) - normal_cdf((4.0 * k + 1.0) * z / sqrt_n);
    }
    1.0 - sum1 + sum2
}

/// Frequencies of overlapping `m`-bit patterns with wrap-around.
fn pattern_counts(bits: &[u8], m: usize) -> Vec<u64> {
    let n = bits.len();
    let mut counts = vec![0u64; 1 << m];
    if m == 0 {
        return counts;
    }
    for i in 0..n {
        let pattern = (0..m).fold(0usize, |acc, k| (acc << 1) | bits[(i + k) % n] as usize);
        counts[pattern] += 1;
    }
    counts
}

fn psi_squared(bits: &[u8], m: usize) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let n = bits.len() as f64;
    let sum: f64 = pattern_counts(bits, m).iter().map(|&c| (c as f64).powi(2)).sum();
    (1u64 << m) as f64 / n * sum - n
}

fn serial(bits: &BitString, m: usize) -> Result<f64> {
    if m < 2 || m >= bits.len() {
        return Err(Error::out_of_range(
            "serial_block",
            format!("{m} invalid for n = {}", bits.len()),
        ));
    }
    let del = psi_squared(bits.bits(), m) - psi_squared(bits.bits(), m - 1);
    Ok(igamc((1u64 << (m - 2)) as f64, del / 2.0))
}

fn approximate_entropy(bits: &BitString, m: usize) -> Result<f64> {
    if m == 0 || m + 1 >= bits.len() {
        return Err(Error::out_of_range(
            "approximate_entropy_block",
            format!("{m} invalid for n = {}", bits.len()),
        ));
    }
    let n = bits.len() as f64;
    let phi = |block: usize| -> f64 {
        pattern_counts(bits.bits(), block)
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                p * p.ln()
            })
            .sum()
    };
    let apen = phi(m) - phi(m + 1);
    let chi2 = 2.0 * n * (std::f64::consts::LN_2 - apen);
    Ok(igamc((1u64 << (m - 1)) as f64, chi2 / 2.0))
}
