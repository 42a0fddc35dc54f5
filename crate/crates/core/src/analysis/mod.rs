//! Randomness quality of key streams: entropy estimates and a subset of
//! the SP800-22 statistical tests.

mod entropy;
mod nist;

pub use entropy::{conditional_entropy, entropy_report, min_entropy, shannon_entropy, EntropyReport};
pub use nist::{
    approximate_entropy, block_frequency, cumulative_sums, frequency, longest_run, nist_subset, runs, serial,
    TestOutcome, TestReport, ALPHA,
};

use rand::RngCore;

use crate::error::{Error, Result};
use crate::keys::BinaryKey;
use crate::rng::{self, ns};

/// Shortest stream any test or estimator accepts.
pub const MIN_BITS: usize = 100;

/// Ordered bit sequence, one byte (0 or 1) per bit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitStream {
    bits: Vec<u8>,
}

impl BitStream {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(b) = bits.iter().find(|b| **b > 1) {
            return Err(Error::Format { kind: "bit stream", detail: format!("value {b} is not a bit") });
        }
        Ok(Self { bits })
    }

    /// Parses a string of '0' and '1'; other characters are rejected.
    pub fn parse(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::Format { kind: "bit stream", detail: format!("unexpected '{other}'") }),
            })
            .collect::<Result<Vec<u8>>>()
            .map(|bits| Self { bits })
    }

    /// Concatenation of keys in order, each key bit 0 first.
    pub fn from_keys(keys: &[BinaryKey]) -> Self {
        Self { bits: keys.iter().flat_map(|k| k.bits().map(u8::from).collect::<Vec<_>>()).collect() }
    }

    /// `n` bits from a ChaCha20 stream, for testing the tests.
    pub fn uniform(seed: u64, n: usize) -> Self {
        let mut rng = rng::stream(seed, ns::SELF_TEST, &[]);
        let mut bytes = vec![0u8; n.div_ceil(8)];
        rng.fill_bytes(&mut bytes);
        Self { bits: (0..n).map(|i| bytes[i / 8] >> (i % 8) & 1).collect() }
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

    pub fn ones(&self) -> usize {
        self.bits.iter().map(|b| *b as usize).sum()
    }

    /// Same bits in an order drawn from `seed`.
    pub fn shuffled(&self, seed: u64) -> Self {
        use rand::seq::SliceRandom;
        let mut bits = self.bits.clone();
        bits.shuffle(&mut rng::stream(seed, ns::SELF_TEST, &[1]));
        Self { bits }
    }
}
