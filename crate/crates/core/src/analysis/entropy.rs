use serde::{Deserialize, Serialize};

use super::{BitStream, MIN_BITS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub h_min: f64,
    pub h_cond: f64,
    pub h_shannon: f64,
    pub n_bits: usize,
}

fn require(stream: &BitStream, n: usize, what: &str) -> Result<()> {
    if stream.len() < n {
        return Err(Error::InsufficientData(format!("{what} needs at least {n} bits, got {}", stream.len())));
    }
    Ok(())
}

fn h2(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
}

/// `-log2 max(p0, p1)` per bit.
pub fn min_entropy(stream: &BitStream) -> Result<f64> {
    require(stream, MIN_BITS, "min-entropy")?;
    let p1 = stream.ones() as f64 / stream.len() as f64;
    Ok(-p1.max(1.0 - p1).log2())
}

/// Order-0 Shannon entropy per bit.
pub fn shannon_entropy(stream: &BitStream) -> Result<f64> {
    require(stream, MIN_BITS, "Shannon entropy")?;
    Ok(h2(stream.ones() as f64 / stream.len() as f64))
}

/// `H(X_{i+1} | X_i)` from first-order transition counts.
pub fn conditional_entropy(stream: &BitStream) -> Result<f64> {
    require(stream, MIN_BITS + 1, "conditional entropy")?;
    let b = stream.bits();
    let mut t = [[0usize; 2]; 2];
    for w in b.windows(2) {
        t[w[0] as usize][w[1] as usize] += 1;
    }
    let pairs = (b.len() - 1) as f64;
    let mut h = 0.0;
    for row in t {
        let n = (row[0] + row[1]) as f64;
        if n > 0.0 {
            h += n / pairs * h2(row[1] as f64 / n);
        }
    }
    Ok(h.clamp(0.0, 1.0))
}

pub fn entropy_report(stream: &BitStream) -> Result<EntropyReport> {
    Ok(EntropyReport {
        h_min: min_entropy(stream)?,
        h_cond: conditional_entropy(stream)?,
        h_shannon: shannon_entropy(stream)?,
        n_bits: stream.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn degenerate_streams() {
        let zeros = BitStream::new(vec![0; 200]).unwrap();
        assert_eq!(min_entropy(&zeros).unwrap(), 0.0);
        assert_eq!(conditional_entropy(&zeros).unwrap(), 0.0);
        let alt = BitStream::new((0..200).map(|i| (i % 2) as u8).collect()).unwrap();
        assert_eq!(min_entropy(&alt).unwrap(), 1.0);
        assert_eq!(conditional_entropy(&alt).unwrap(), 0.0);
    }

    #[test]
    fn short_streams_rejected() {
        assert!(matches!(min_entropy(&BitStream::new(vec![]).unwrap()), Err(Error::InsufficientData(_))));
        assert!(conditional_entropy(&BitStream::new(vec![1; 100]).unwrap()).is_err());
    }

    #[test]
    fn uniform_source_is_near_one() {
        let s = BitStream::uniform(11, 1_000_000);
        assert!(conditional_entropy(&s).unwrap() >= 0.99);
        assert!(min_entropy(&s).unwrap() >= 0.99);
    }

    #[test]
    fn known_transition_entropy() {
        // 0 -> 0 three times, 0 -> 1 once, 1 -> 0 once, 1 -> 1 never, repeated
        let pattern = [0u8, 0, 0, 0, 1];
        let bits: Vec<u8> = pattern.iter().cycle().take(501).copied().collect();
        let h = conditional_entropy(&BitStream::new(bits).unwrap()).unwrap();
        // p(0) = 4/5, H(next | 0) = h2(1/4), H(next | 1) = 0
        assert!((h - 0.8 * h2(0.25)).abs() < 2e-3, "{h}");
    }

    proptest! {
        #[test]
        fn min_entropy_bounded_by_shannon(bits in proptest::collection::vec(0u8..2, 101..600)) {
            let s = BitStream::new(bits).unwrap();
            let hm = min_entropy(&s).unwrap();
            let hs = shannon_entropy(&s).unwrap();
            prop_assert!((0.0..=1.0).contains(&hm));
            prop_assert!(hm <= hs + 1e-12);
            let hc = conditional_entropy(&s).unwrap();
            prop_assert!((0.0..=1.0).contains(&hc));
        }
    }
}
