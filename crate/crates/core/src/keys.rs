//! Gabor-hash keys and fractional Hamming distance statistics.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::device::SpeckleImage;
use crate::error::{Error, Result};
use crate::rng::{self, ns};
use crate::scalar::Real;

pub const KEY_BITS: usize = 256;
pub const HISTOGRAM_BINS: usize = 64;

/// One hashed bit: the response of filter `filter` at pixel `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SamplePosition {
    pub x: usize,
    pub y: usize,
    pub filter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HashConfig {
    pub gabor_orientations: usize,
    /// Carrier wavelengths in pixels, one filter scale each.
    pub gabor_wavelengths_px: Vec<f64>,
    /// Gaussian envelope sigma as a fraction of the carrier wavelength.
    pub sigma_per_wavelength: f64,
    /// Sampling disk radius as a fraction of half the image width.
    pub roi_fraction: f64,
    /// Lattice step of the responses the per-filter median is taken over.
    pub median_stride: usize,
    pub hash_seed: u64,
    /// Explicit sample positions; drawn from `hash_seed` when absent.
    pub positions: Option<Vec<SamplePosition>>,
}

impl Default for HashConfig {
    fn default() -> Self {
        Self {
            gabor_orientations: 4,
            gabor_wavelengths_px: vec![8.0, 16.0],
            sigma_per_wavelength: 0.5,
            roi_fraction: 0.6,
            median_stride: 2,
            hash_seed: 0,
            positions: None,
        }
    }
}

/// Real, zero-sum Gabor kernel on a `(2r+1)^2` square.
#[derive(Debug, Clone)]
pub struct GaborKernel {
    pub radius: usize,
    pub orientation_rad: f64,
    pub wavelength_px: f64,
    /// Row-major weights.
    pub weights: Vec<f64>,
}

impl GaborKernel {
    pub fn new(orientation_rad: f64, wavelength_px: f64, sigma_px: f64) -> Self {
        let radius = (3.0 * sigma_px).ceil() as usize;
        let r = radius as isize;
        let (s, c) = orientation_rad.sin_cos();
        let mut env = Vec::new();
        let mut carrier = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                let (fx, fy) = (dx as f64, dy as f64);
                let xr = fx * c + fy * s;
                env.push((-(fx * fx + fy * fy) / (2.0 * sigma_px * sigma_px)).exp());
                carrier.push((std::f64::consts::TAU * xr / wavelength_px).cos());
            }
        }
        // subtract a scaled envelope so the kernel sums to zero
        let dc = env.iter().zip(&carrier).map(|(e, k)| e * k).sum::<f64>() / env.iter().sum::<f64>();
        let weights = env.iter().zip(&carrier).map(|(e, k)| e * (k - dc)).collect();
        Self { radius, orientation_rad, wavelength_px, weights }
    }

    /// `sum_o w(o) (I(p + o) - I(p))`, zero outside the image. Exactly zero
    /// on a constant image; equal to the plain correlation otherwise up to
    /// rounding, since the weights sum to zero.
    pub fn response(&self, image: &[f64], size: usize, x: usize, y: usize) -> f64 {
        let r = self.radius as isize;
        let center = image[y * size + x];
        let side = 2 * self.radius + 1;
        let mut acc = 0.0;
        for dy in -r..=r {
            let yy = y as isize + dy;
            let row = (dy + r) as usize * side;
            for dx in -r..=r {
                let xx = x as isize + dx;
                let v = if yy >= 0 && xx >= 0 && (yy as usize) < size && (xx as usize) < size {
                    image[yy as usize * size + xx as usize]
                } else {
                    0.0
                };
                acc += self.weights[row + (dx + r) as usize] * (v - center);
            }
        }
        acc
    }

    /// Whether `(px, py)` lies in the support of this kernel centred at `(x, y)`.
    pub fn covers(&self, x: usize, y: usize, px: usize, py: usize) -> bool {
        x.abs_diff(px) <= self.radius && y.abs_diff(py) <= self.radius
    }
}

/// Filter bank and sample positions resolved for one image size.
#[derive(Debug, Clone)]
pub struct GaborHasher {
    pub size: usize,
    pub filters: Vec<GaborKernel>,
    pub positions: Vec<SamplePosition>,
    /// Lattice the per-filter medians are taken over.
    pub lattice: Vec<(usize, usize)>,
}

impl HashConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gabor_orientations == 0 || self.gabor_wavelengths_px.is_empty() {
            return Err(Error::InvalidConfig("hash needs at least one orientation and one scale".into()));
        }
        if self.gabor_wavelengths_px.iter().any(|w| !(*w >= 2.0 && w.is_finite())) {
            return Err(Error::InvalidConfig("Gabor wavelengths must be at least 2 px".into()));
        }
        if !(self.sigma_per_wavelength > 0.0) || !(self.roi_fraction > 0.0 && self.roi_fraction <= 1.0) {
            return Err(Error::InvalidConfig("sigma_per_wavelength and roi_fraction must be positive".into()));
        }
        if self.median_stride == 0 {
            return Err(Error::InvalidConfig("median_stride must be positive".into()));
        }
        Ok(())
    }

    pub fn filter_count(&self) -> usize {
        self.gabor_orientations * self.gabor_wavelengths_px.len()
    }

    /// Builds kernels, positions and the median lattice for `size x size` images.
    pub fn hasher(&self, size: usize) -> Result<GaborHasher> {
        self.validate()?;
        let mut filters = Vec::with_capacity(self.filter_count());
        for &wl in &self.gabor_wavelengths_px {
            for o in 0..self.gabor_orientations {
                let theta = std::f64::consts::PI * o as f64 / self.gabor_orientations as f64;
                filters.push(GaborKernel::new(theta, wl, self.sigma_per_wavelength * wl));
            }
        }
        let support = filters.iter().map(|f| 2 * f.radius + 1).max().unwrap_or(1);
        if size < support {
            return Err(Error::InvalidConfig(format!(
                "{size} px image is smaller than the {support} px filter support"
            )));
        }
        let c = (size as f64 - 1.0) / 2.0;
        let roi = self.roi_fraction * size as f64 / 2.0;
        let in_roi = |x: usize, y: usize| (x as f64 - c).hypot(y as f64 - c) <= roi;
        let roi_pixels: Vec<(usize, usize)> =
            (0..size).flat_map(|y| (0..size).map(move |x| (x, y))).filter(|&(x, y)| in_roi(x, y)).collect();

        let positions = match &self.positions {
            Some(p) => {
                if p.len() != KEY_BITS {
                    return Err(Error::InvalidConfig(format!("{} sample positions, need {KEY_BITS}", p.len())));
                }
                let mut seen = HashSet::new();
                for s in p {
                    if s.x >= size || s.y >= size || s.filter >= filters.len() {
                        return Err(Error::InvalidConfig(format!(
                            "sample position ({}, {}, filter {}) outside {size} px image with {} filters",
                            s.x,
                            s.y,
                            s.filter,
                            filters.len()
                        )));
                    }
                    if !seen.insert(*s) {
                        return Err(Error::InvalidConfig(format!("duplicate sample position {s:?}")));
                    }
                }
                p.clone()
            }
            None => {
                if roi_pixels.len() * filters.len() < KEY_BITS {
                    return Err(Error::InvalidConfig("sampling disk too small for 256 distinct positions".into()));
                }
                let mut rng = rng::stream(self.hash_seed, ns::HASH_POSITIONS, &[size as u64]);
                let mut seen = HashSet::new();
                let mut out = Vec::with_capacity(KEY_BITS);
                while out.len() < KEY_BITS {
                    let (x, y) = roi_pixels[rng.random_range(0..roi_pixels.len())];
                    let s = SamplePosition { x, y, filter: rng.random_range(0..filters.len()) };
                    if seen.insert(s) {
                        out.push(s);
                    }
                }
                out
            }
        };
        let stride = self.median_stride;
        let lattice = roi_pixels.into_iter().filter(|&(x, y)| x % stride == 0 && y % stride == 0).collect();
        Ok(GaborHasher { size, filters, positions, lattice })
    }
}

impl GaborHasher {
    fn pixels<T: Real>(&self, image: &SpeckleImage<T>) -> Result<Vec<f64>> {
        if image.size != self.size {
            return Err(Error::InvalidConfig(format!("image is {} px, hasher built for {}", image.size, self.size)));
        }
        Ok(image.intensities.iter().map(|v| v.f64()).collect())
    }

    /// Response of every sample position.
    pub fn sample_responses<T: Real>(&self, image: &SpeckleImage<T>) -> Result<Vec<f64>> {
        let px = self.pixels(image)?;
        Ok(self.positions.iter().map(|s| self.filters[s.filter].response(&px, self.size, s.x, s.y)).collect())
    }

    /// Per-filter median of the responses over the lattice.
    pub fn thresholds<T: Real>(&self, image: &SpeckleImage<T>) -> Result<Vec<f64>> {
        let px = self.pixels(image)?;
        Ok(self
            .filters
            .iter()
            .map(|f| {
                let mut r: Vec<f64> = self.lattice.iter().map(|&(x, y)| f.response(&px, self.size, x, y)).collect();
                median(&mut r)
            })
            .collect())
    }

    /// Bits from given responses and thresholds; ties give 0.
    pub fn bits_from(&self, responses: &[f64], thresholds: &[f64]) -> BinaryKey {
        let mut key = BinaryKey::zero();
        for (i, (s, r)) in self.positions.iter().zip(responses).enumerate() {
            if *r > thresholds[s.filter] {
                key.set(i, true);
            }
        }
        key
    }

    pub fn hash<T: Real>(&self, image: &SpeckleImage<T>) -> Result<BinaryKey> {
        let r = self.sample_responses(image)?;
        let t = self.thresholds(image)?;
        Ok(self.bits_from(&r, &t))
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Hashes one image with a freshly built filter bank.
pub fn gabor_hash<T: Real>(image: &SpeckleImage<T>, config: &HashConfig) -> Result<BinaryKey> {
    config.hasher(image.size)?.hash(image)
}

/// 256-bit key, bit `i` is bit `i % 64` of word `i / 64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BinaryKey {
    words: [u64; 4],
}

impl BinaryKey {
    pub fn zero() -> Self {
        Self { words: [0; 4] }
    }

    pub fn from_words(words: [u64; 4]) -> Self {
        Self { words }
    }

    pub fn words(&self) -> [u64; 4] {
        self.words
    }

    pub fn bit(&self, i: usize) -> bool {
        assert!(i < KEY_BITS);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, v: bool) {
        assert!(i < KEY_BITS);
        if v {
            self.words[i / 64] |= 1 << (i % 64);
        } else {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        (0..KEY_BITS).map(|i| self.bit(i))
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        for (i, b) in out.iter_mut().enumerate() {
            for j in 0..8 {
                if self.bit(i * 8 + j) {
                    *b |= 0x80 >> j;
                }
            }
        }
        out
    }

    /// Inverse of [`to_bytes`](Self::to_bytes): bit `8i + j` is the `j`-th most significant bit of byte `i`.
    pub fn from_bytes(bytes: &[u8; 32]) -> Self {
        let mut k = Self::zero();
        for (i, b) in bytes.iter().enumerate() {
            for j in 0..8 {
                k.set(i * 8 + j, b & (0x80 >> j) != 0);
            }
        }
        k
    }
}

impl std::ops::Not for BinaryKey {
    type Output = Self;
    fn not(self) -> Self {
        Self { words: self.words.map(|w| !w) }
    }
}

impl fmt::Display for BinaryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.to_bytes()))
    }
}

impl FromStr for BinaryKey {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let raw = hex::decode(s.trim()).map_err(|e| Error::Format { kind: "key", detail: e.to_string() })?;
        let bytes: [u8; 32] = raw
            .try_into()
            .map_err(|v: Vec<u8>| Error::Format { kind: "key", detail: format!("{} bytes, need 32", v.len()) })?;
        Ok(Self::from_bytes(&bytes))
    }
}

/// Fraction of differing bits.
pub fn fhd(a: &BinaryKey, b: &BinaryKey) -> f64 {
    let d: u32 = a.words.iter().zip(&b.words).map(|(x, y)| (x ^ y).count_ones()).sum();
    d as f64 / KEY_BITS as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassMode {
    Intra,
    InterI,
    InterII,
}

impl ClassMode {
    pub fn name(self) -> &'static str {
        match self {
            ClassMode::Intra => "intra",
            ClassMode::InterI => "inter_I",
            ClassMode::InterII => "inter_II",
        }
    }
}

impl FromStr for ClassMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "intra" => Ok(ClassMode::Intra),
            "inter_I" | "inter_i" | "inter-I" | "inter1" => Ok(ClassMode::InterI),
            "inter_II" | "inter_ii" | "inter-II" | "inter2" => Ok(ClassMode::InterII),
            other => Err(Error::InvalidConfig(format!("unknown class '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FhdStats {
    pub mode: ClassMode,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// Counts over 64 equal bins of [0, 1]; 1.0 falls in the last bin.
    pub histogram: Vec<u64>,
    pub pair_count: usize,
}

impl FhdStats {
    pub fn from_distances(mode: ClassMode, d: &[f64]) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::InsufficientData(format!("{}: no key pairs", mode.name())));
        }
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let mut histogram = vec![0u64; HISTOGRAM_BINS];
        for &x in d {
            histogram[histogram_bin(x)] += 1;
        }
        Ok(Self {
            mode,
            // clamp rounding so min <= mean <= max holds exactly
            mean: mean.clamp(d.iter().copied().fold(f64::INFINITY, f64::min), d.iter().copied().fold(0.0, f64::max)),
            std: var.sqrt(),
            min: d.iter().copied().fold(f64::INFINITY, f64::min),
            max: d.iter().copied().fold(0.0, f64::max),
            histogram,
            pair_count: d.len(),
        })
    }
}

/// Bin of `x` in 64 equal bins over [0, 1].
pub fn histogram_bin(x: f64) -> usize {
    ((x * HISTOGRAM_BINS as f64).floor() as usize).min(HISTOGRAM_BINS - 1)
}

/// All-pairs FHD inside each group, pooled.
pub fn class_stats(groups: &[Vec<BinaryKey>], mode: ClassMode) -> Result<FhdStats> {
    if groups.is_empty() {
        return Err(Error::InsufficientData(format!("{}: no key groups", mode.name())));
    }
    let mut d = Vec::new();
    for (g, keys) in groups.iter().enumerate() {
        if keys.len() < 2 {
            return Err(Error::InsufficientData(format!("{}: group {g} has {} key(s)", mode.name(), keys.len())));
        }
        for i in 0..keys.len() {
            for j in i + 1..keys.len() {
                d.push(fhd(&keys[i], &keys[j]));
            }
        }
    }
    FhdStats::from_distances(mode, &d)
}

/// `min(inter) - max(intra)`; positive means the classes do not overlap.
pub fn overlap_margin(intra: &FhdStats, inter: &FhdStats) -> f64 {
    inter.min - intra.max
}
