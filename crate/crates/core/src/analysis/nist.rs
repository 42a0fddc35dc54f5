use std::f64::consts::{LN_2, SQRT_2};

use serde::{Deserialize, Serialize};

use super::BitStream;
use crate::special::{erfc, igamc, normal_cdf};

pub const ALPHA: f64 = 0.01;

/// Result of one test. `p_value` is `None` when the stream was too short.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub name: String,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    /// Individual p-values of multi-part tests; `p_value` is their minimum.
    pub sub_p_values: Vec<f64>,
    pub pass: Option<bool>,
    pub skipped: Option<String>,
}

impl TestOutcome {
    fn done(name: &str, statistic: f64, ps: Vec<f64>) -> Self {
        let p = ps.iter().copied().fold(1.0f64, f64::min).clamp(0.0, 1.0);
        Self {
            name: name.into(),
            statistic: Some(statistic),
            p_value: Some(p),
            sub_p_values: if ps.len() > 1 { ps } else { vec![] },
            pass: Some(p >= ALPHA),
            skipped: None,
        }
    }

    fn skip(name: &str, need: usize, have: usize) -> Self {
        Self {
            name: name.into(),
            statistic: None,
            p_value: None,
            sub_p_values: vec![],
            pass: None,
            skipped: Some(format!("needs at least {need} bits, stream has {have}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub alpha: f64,
    pub n_bits: usize,
    pub tests: Vec<TestOutcome>,
}

impl TestReport {
    pub fn passed(&self) -> usize {
        self.tests.iter().filter(|t| t.pass == Some(true)).count()
    }

    pub fn skipped(&self) -> usize {
        self.tests.iter().filter(|t| t.pass.is_none()).count()
    }

    pub fn all_passed(&self) -> bool {
        self.tests.iter().all(|t| t.pass == Some(true))
    }
}

fn gate(name: &str, s: &BitStream, need: usize) -> Option<TestOutcome> {
    (s.len() < need).then(|| TestOutcome::skip(name, need, s.len()))
}

/// Monobit frequency test.
pub fn frequency(s: &BitStream) -> TestOutcome {
    const NAME: &str = "frequency";
    if let Some(t) = gate(NAME, s, 100) {
        return t;
    }
    let n = s.len() as f64;
    let sum = 2.0 * s.ones() as f64 - n;
    let s_obs = sum.abs() / n.sqrt();
    TestOutcome::done(NAME, s_obs, vec![erfc(s_obs / SQRT_2)])
}

/// Frequency within `m`-bit blocks.
pub fn block_frequency(s: &BitStream, m: usize) -> TestOutcome {
    const NAME: &str = "block_frequency";
    if let Some(t) = gate(NAME, s, 100.max(m)) {
        return t;
    }
    let blocks = s.len() / m;
    let chi: f64 = s
        .bits()
        .chunks_exact(m)
        .map(|b| {
            let pi = b.iter().map(|x| *x as f64).sum::<f64>() / m as f64;
            (pi - 0.5) * (pi - 0.5)
        })
        .sum::<f64>()
        * 4.0
        * m as f64;
    TestOutcome::done(NAME, chi, vec![igamc(blocks as f64 / 2.0, chi / 2.0)])
}

/// Runs test; p = 0 when the monobit prerequisite fails.
pub fn runs(s: &BitStream) -> TestOutcome {
    const NAME: &str = "runs";
    if let Some(t) = gate(NAME, s, 100) {
        return t;
    }
    let n = s.len() as f64;
    let pi = s.ones() as f64 / n;
    if (pi - 0.5).abs() >= 2.0 / n.sqrt() {
        return TestOutcome::done(NAME, f64::NAN, vec![0.0]);
    }
    let v = 1 + s.bits().windows(2).filter(|w| w[0] != w[1]).count();
    let v = v as f64;
    let q = pi * (1.0 - pi);
    let p = erfc((v - 2.0 * n * q).abs() / (2.0 * (2.0 * n).sqrt() * q));
    TestOutcome::done(NAME, v, vec![p])
}

/// Longest run of ones in a block, with the block size and category
/// probabilities the reference tables give for the stream length.
pub fn longest_run(s: &BitStream) -> TestOutcome {
    const NAME: &str = "longest_run";
    if let Some(t) = gate(NAME, s, 128) {
        return t;
    }
    let n = s.len();
    let (m, lo, probs): (usize, usize, &[f64]) = if n < 6272 {
        (8, 1, &[0.2148, 0.3672, 0.2305, 0.1875])
    } else if n < 750_000 {
        (128, 4, &[0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124])
    } else {
        (10_000, 10, &[0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727])
    };
    let k = probs.len() - 1;
    let blocks = n / m;
    let mut nu = vec![0usize; probs.len()];
    for b in s.bits().chunks_exact(m) {
        let (mut best, mut cur) = (0usize, 0usize);
        for &x in b {
            cur = if x == 1 { cur + 1 } else { 0 };
            best = best.max(cur);
        }
        nu[best.clamp(lo, lo + k) - lo] += 1;
    }
    let nb = blocks as f64;
    let chi: f64 = nu.iter().zip(probs).map(|(v, p)| (*v as f64 - nb * p).powi(2) / (nb * p)).sum();
    TestOutcome::done(NAME, chi, vec![igamc(k as f64 / 2.0, chi / 2.0)])
}

fn cusum_p(steps: impl Iterator<Item = u8>, n: usize) -> (f64, f64) {
    let mut sum = 0i64;
    let mut z = 0i64;
    for b in steps {
        sum += if b == 1 { 1 } else { -1 };
        z = z.max(sum.abs());
    }
    let z = z as f64;
    let nf = n as f64;
    let rn = nf.sqrt();
    let mut s1 = 0.0;
    let mut k = ((-nf / z + 1.0) / 4.0).floor();
    while k <= ((nf / z - 1.0) / 4.0).floor() {
        s1 += normal_cdf((4.0 * k + 1.0) * z / rn) - normal_cdf((4.0 * k - 1.0) * z / rn);
        k += 1.0;
    }
    let mut s2 = 0.0;
    let mut k = ((-nf / z - 3.0) / 4.0).floor();
    while k <= ((nf / z - 1.0) / 4.0).floor() {
        s2 += normal_cdf((4.0 * k + 3.0) * z / rn) - normal_cdf((4.0 * k + 1.0) * z / rn);
        k += 1.0;
    }
    (z, 1.0 - s1 + s2)
}

/// Cumulative sums, forward and backward; passes when both do.
pub fn cumulative_sums(s: &BitStream) -> TestOutcome {
    const NAME: &str = "cumulative_sums";
    if let Some(t) = gate(NAME, s, 100) {
        return t;
    }
    let (zf, pf) = cusum_p(s.bits().iter().copied(), s.len());
    let (_, pb) = cusum_p(s.bits().iter().rev().copied(), s.len());
    TestOutcome::done(NAME, zf, vec![pf, pb])
}

/// Counts of every overlapping `m`-bit pattern with wrap-around.
fn pattern_counts(bits: &[u8], m: usize) -> Vec<usize> {
    let n = bits.len();
    let mut counts = vec![0usize; 1 << m];
    if m == 0 {
        return counts;
    }
    let mask = (1usize << m) - 1;
    let mut w = 0usize;
    for i in 0..m - 1 {
        w = (w << 1) | bits[i] as usize;
    }
    for i in 0..n {
        w = ((w << 1) | bits[(i + m - 1) % n] as usize) & mask;
        counts[w] += 1;
    }
    counts
}

fn psi_sq(bits: &[u8], m: usize) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let n = bits.len() as f64;
    let sum: f64 = pattern_counts(bits, m).iter().map(|c| (*c as f64).powi(2)).sum();
    (1u64 << m) as f64 / n * sum - n
}

/// Serial test of order `m`; both p-values must pass.
pub fn serial(s: &BitStream, m: usize) -> TestOutcome {
    const NAME: &str = "serial";
    if let Some(t) = gate(NAME, s, 100.max(1 << (m + 2))) {
        return t;
    }
    assert!(m >= 2, "serial test order must be at least 2");
    let b = s.bits();
    let (p0, p1, p2) = (psi_sq(b, m), psi_sq(b, m - 1), psi_sq(b, m - 2));
    let d1 = p0 - p1;
    let d2 = p0 - 2.0 * p1 + p2;
    let pv1 = igamc(2f64.powi(m as i32 - 2), d1 / 2.0);
    let pv2 = igamc(2f64.powi(m as i32 - 3), d2 / 2.0);
    TestOutcome::done(NAME, d1, vec![pv1, pv2])
}

fn phi(bits: &[u8], m: usize) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let n = bits.len() as f64;
    pattern_counts(bits, m)
        .iter()
        .filter(|c| **c > 0)
        .map(|c| {
            let p = *c as f64 / n;
            p * p.ln()
        })
        .sum()
}

/// Approximate entropy of order `m`.
pub fn approximate_entropy(s: &BitStream, m: usize) -> TestOutcome {
    const NAME: &str = "approximate_entropy";
    if let Some(t) = gate(NAME, s, 100) {
        return t;
    }
    let b = s.bits();
    let apen = phi(b, m) - phi(b, m + 1);
    let chi = 2.0 * b.len() as f64 * (LN_2 - apen);
    TestOutcome::done(NAME, chi, vec![igamc(2f64.powi(m as i32 - 1), chi / 2.0)])
}

/// The seven-test battery used for key streams.
pub fn nist_subset(s: &BitStream) -> TestReport {
    let tests = vec![
        frequency(s),
        block_frequency(s, 128),
        runs(s),
        longest_run(s),
        cumulative_sums(s),
        serial(s, 2),
        approximate_entropy(s, 2),
    ];
    TestReport { alpha: ALPHA, n_bits: s.len(), tests }
}
