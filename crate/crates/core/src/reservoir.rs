//! The PUF model inside a coherent feedback cavity, used as a reservoir
//! computer with a ridge-regression readout.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::device::{disk_pixels, new_device, Challenge, DeviceParams, Illumination, PufDevice};
use crate::error::{Error, Result};
use crate::modes::{Grid, ModeFamily};
use crate::rng::{self, ns};
use crate::scalar::{Complex, Real};
use crate::special::ln_gamma;

/// Side of the macro-block pattern each frame is upsampled from.
pub const MACRO_BLOCKS: usize = 8;
/// Minimum normalized Hamming distance between any two frames.
pub const MIN_FRAME_DISTANCE: f64 = 0.3;
const CODEBOOK_RETRIES: usize = 1000;

/// `K` binary frames on a `size x size` grid, row-major, entries 0 or 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub class_count: usize,
    pub size: usize,
    pub seed: u64,
    /// `8 x 8` macro-block bits per frame, row-major.
    pub blocks: Vec<Vec<u8>>,
}

impl Codebook {
    pub fn frame(&self, k: usize) -> Vec<u8> {
        let b = &self.blocks[k];
        (0..self.size * self.size)
            .map(|p| {
                let (x, y) = (p % self.size, p / self.size);
                b[(y * MACRO_BLOCKS / self.size) * MACRO_BLOCKS + x * MACRO_BLOCKS / self.size]
            })
            .collect()
    }

    /// Normalized Hamming distance of two frames at pixel level.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.frame(i), self.frame(j));
        a.iter().zip(&b).filter(|(x, y)| x != y).count() as f64 / a.len() as f64
    }
}

pub fn generate_codebook(k: usize, size: usize, seed: u64) -> Result<Codebook> {
    codebook_with_distance(k, size, seed, MIN_FRAME_DISTANCE)
}

fn codebook_with_distance(k: usize, size: usize, seed: u64, min_distance: f64) -> Result<Codebook> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("codebook needs at least 2 classes, got {k}")));
    }
    if size < MACRO_BLOCKS {
        return Err(Error::InvalidConfig(format!(
            "{size} px grid is smaller than the {MACRO_BLOCKS}x{MACRO_BLOCKS} block pattern"
        )));
    }
    let mut rng = rng::stream(seed, ns::CODEBOOK, &[k as u64, size as u64]);
    let mut book = Codebook { class_count: k, size, seed, blocks: Vec::with_capacity(k) };
    for _ in 0..k {
        let mut placed = false;
        for _ in 0..CODEBOOK_RETRIES {
            let mut cand = vec![0u8; MACRO_BLOCKS * MACRO_BLOCKS];
            for b in cand.iter_mut() {
                *b = rng.random_range(0..2);
            }
            if cand.iter().all(|b| *b == 0) {
                continue;
            }
            book.blocks.push(cand);
            let new = book.blocks.len() - 1;
            if (0..new).all(|j| book.distance(j, new) >= min_distance) {
                placed = true;
                break;
            }
            book.blocks.pop();
        }
        if !placed {
            return Err(Error::Seed {
                seed,
                what: format!(
                    "no {k}-frame codebook with pairwise distance >= {min_distance} after {CODEBOOK_RETRIES} draws"
                ),
            });
        }
    }
    Ok(book)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CavityConfig {
    pub feedback_gain: f64,
    pub input_gain: f64,
    pub steps_per_frame: usize,
}

impl Default for CavityConfig {
    fn default() -> Self {
        Self { feedback_gain: 0.6, input_gain: 1.0, steps_per_frame: 1 }
    }
}

impl CavityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.feedback_gain) {
            return Err(Error::InvalidConfig(format!("feedback gain {} must lie in [0, 1)", self.feedback_gain)));
        }
        if !(self.input_gain > 0.0 && self.input_gain.is_finite()) {
            return Err(Error::InvalidConfig(format!("input gain {} must be positive", self.input_gain)));
        }
        if self.steps_per_frame == 0 {
            return Err(Error::InvalidConfig("steps_per_frame must be at least 1".into()));
        }
        Ok(())
    }

    /// Round trips after which a state difference has shrunk by `tol`.
    pub fn echo_steps(&self, tol: f64) -> usize {
        (tol.ln() / self.feedback_gain.ln()).ceil() as usize
    }
}

/// What the photodiode array reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Square-law intensities.
    Intensity,
    /// Real and imaginary field amplitudes, no square law.
    LinearField,
}

/// Distinct detector pixels inside the core disk, drawn from `seed`.
pub fn feature_pixels<T: Real>(grid: Grid<T>, core_radius_um: T, count: usize, seed: u64) -> Result<Vec<usize>> {
    let mut pool = disk_pixels(grid, core_radius_um);
    if pool.len() < count {
        return Err(Error::InvalidConfig(format!("{count} feature pixels requested, core holds {}", pool.len())));
    }
    let mut rng = rng::stream(seed, ns::FEATURE_PIXELS, &[grid.size as u64]);
    for i in 0..count {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(count);
    Ok(pool)
}

/// Noiseless cavity trajectory: state and feature-pixel field per frame.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<Vec<Complex<f64>>>,
    /// Field at the feature pixels, scaled so that the frame-mean intensity equals the state power.
    pub fields: Vec<Vec<Complex<f64>>>,
    pub power: Vec<f64>,
}

/// Reservoir bound to one device, wavelength, codebook and pixel set.
#[derive(Debug, Clone)]
pub struct Reservoir<T> {
    pub device: PufDevice<T>,
    pub wavelength_nm: T,
    pub cavity: CavityConfig,
    pub pixels: Vec<usize>,
    transfer: DMatrix<Complex<f64>>,
    excitations: Vec<DVector<Complex<f64>>>,
    /// `pixels x modes`, profiles scaled by `sqrt(G^2 dA)`.
    readout_profiles: DMatrix<f64>,
}

impl<T: Real> Reservoir<T> {
    pub fn new(
        device: PufDevice<T>,
        codebook: &Codebook,
        cavity: CavityConfig,
        pixels: Vec<usize>,
        wavelength_nm: T,
    ) -> Result<Self> {
        cavity.validate()?;
        let grid = device.grid();
        if codebook.size != grid.size {
            return Err(Error::InvalidConfig(format!(
                "codebook is {} px, device grid {} px",
                codebook.size, grid.size
            )));
        }
        if let Some(p) = pixels.iter().find(|p| **p >= grid.pixels()) {
            return Err(Error::InvalidConfig(format!("feature pixel {p} outside the grid")));
        }
        let to64 = |z: &Complex<T>| Complex::new(z.re.f64(), z.im.f64());
        let transfer = device.transfer_matrix(wavelength_nm)?.map(|z| to64(&z));
        let excitations = (0..codebook.class_count)
            .map(|k| {
                let field = codebook.frame(k).iter().map(|b| Complex::new(T::of(*b as usize), T::zero())).collect();
                let ch = Challenge { wavelength_nm, illumination: Illumination::Field(field) };
                device.excite(&ch).map(|c| DVector::from_iterator(c.len(), c.iter().map(to64)))
            })
            .collect::<Result<Vec<_>>>()?;
        let basis = device.basis(wavelength_nm)?;
        let prof = basis.profiles()?;
        let n = grid.pixels();
        let scale = (n as f64 * grid.cell_area().f64()).sqrt();
        let data = prof.as_slice();
        let readout_profiles =
            DMatrix::from_fn(pixels.len(), prof.mode_count(), |i, m| data[m * n + pixels[i]].f64() * scale);
        Ok(Self { device, wavelength_nm, cavity, pixels, transfer, excitations, readout_profiles })
    }

    pub fn class_count(&self) -> usize {
        self.excitations.len()
    }

    /// `c_t = T (a e(x_t) + g c_{t-1})`, from `initial` (zero if absent).
    pub fn trajectory(&self, stream: &[usize], initial: Option<&[Complex<f64>]>) -> Result<Trajectory> {
        if stream.is_empty() {
            return Err(Error::InsufficientData("empty frame stream".into()));
        }
        let m = self.transfer.nrows();
        let mut c = match initial {
            Some(v) if v.len() == m => DVector::from_column_slice(v),
            Some(v) => return Err(Error::InvalidConfig(format!("initial state has {} modes, expected {m}", v.len()))),
            None => DVector::zeros(m),
        };
        let a = Complex::new(self.cavity.input_gain, 0.0);
        let g = Complex::new(self.cavity.feedback_gain, 0.0);
        let mut out = Trajectory { states: vec![], fields: vec![], power: vec![] };
        for &x in stream {
            let e = self.excitations.get(x).ok_or_else(|| {
                Error::InvalidConfig(format!("frame index {x} outside the {}-class codebook", self.class_count()))
            })?;
            for _ in 0..self.cavity.steps_per_frame {
                c = &self.transfer * (e * a + &c * g);
            }
            let f = self.readout_profiles.map(|v| Complex::new(v, 0.0)) * &c;
            out.power.push(c.norm_squared());
            out.fields.push(f.as_slice().to_vec());
            out.states.push(c.as_slice().to_vec());
        }
        Ok(out)
    }
}

/// Feature vectors of a trajectory seen through a noisy detector.
/// `snr_db = None` gives the noiseless features.
pub fn detect(traj: &Trajectory, mode: FeatureMode, snr_db: Option<f64>, noise_seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng::stream(noise_seed, ns::DETECTOR_NOISE, &[]);
    let attenuation = snr_db.filter(|d| d.is_finite()).map(|d| 10f64.powf(d / 20.0));
    traj.fields
        .iter()
        .zip(&traj.power)
        .map(|(f, &p)| match mode {
            FeatureMode::Intensity => {
                let sigma = attenuation.map_or(0.0, |s| p / s);
                f.iter()
                    .map(|e| {
                        let clean = e.norm_sqr();
                        if sigma > 0.0 {
                            (clean + sigma * rng.sample::<f64, _>(StandardNormal)).max(0.0)
                        } else {
                            clean
                        }
                    })
                    .collect()
            }
            FeatureMode::LinearField => {
                let sigma = attenuation.map_or(0.0, |s| p.sqrt() / s);
                f.iter()
                    .flat_map(|e| [e.re, e.im])
                    .map(|v| if sigma > 0.0 { v + sigma * rng.sample::<f64, _>(StandardNormal) } else { v })
                    .collect()
            }
        })
        .collect()
}

/// Full cavity run with detector noise, one feature vector per frame.
pub fn run_cavity<T: Real>(
    reservoir: &Reservoir<T>,
    stream: &[usize],
    mode: FeatureMode,
    snr_db: Option<f64>,
    noise_seed: u64,
) -> Result<Vec<Vec<f64>>> {
    Ok(detect(&reservoir.trajectory(stream, None)?, mode, snr_db, noise_seed))
}

/// Linear readout: class scores are `[f, 1] W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutModel {
    pub class_count: usize,
    pub ridge: f64,
    /// `(feature_dim + 1) x K`, row-major; last row is the bias.
    pub weights: Vec<f64>,
    pub feature_dim: usize,
}

impl ReadoutModel {
    pub fn weight_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.feature_dim + 1, self.class_count, &self.weights)
    }

    pub fn scores(&self, f: &[f64]) -> Vec<f64> {
        let k = self.class_count;
        let mut s = self.weights[self.feature_dim * k..].to_vec();
        for (i, v) in f.iter().enumerate() {
            for (j, sj) in s.iter_mut().enumerate() {
                *sj += v * self.weights[i * k + j];
            }
        }
        s
    }

    /// Argmax, ties to the lowest class index.
    pub fn predict(&self, f: &[f64]) -> usize {
        let s = self.scores(f);
        let mut best = 0;
        for (j, v) in s.iter().enumerate() {
            if *v > s[best] {
                best = j;
            }
        }
        best
    }
}

fn design(features: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = features.first().map(Vec::len).unwrap_or(0);
    if let Some(f) = features.iter().find(|f| f.len() != d) {
        return Err(Error::InvalidConfig(format!("feature vectors of length {} and {d}", f.len())));
    }
    Ok(DMatrix::from_fn(features.len(), d + 1, |i, j| if j < d { features[i][j] } else { 1.0 }))
}

fn one_hot(labels: &[usize], k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(labels.len(), k, |i, j| if labels[i] == j { 1.0 } else { 0.0 })
}

/// `(X^T X + ridge P) W = X^T Y`, `P` the identity with the bias entry zeroed.
fn normal_system(x: &DMatrix<f64>, y: &DMatrix<f64>, ridge: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut a = x.tr_mul(x);
    let d = a.nrows() - 1;
    for i in 0..d {
        a[(i, i)] += ridge;
    }
    (a, x.tr_mul(y))
}

/// Ridge regression onto one-hot labels. The bias column is not penalised,
/// so a very large ridge leaves only the class priors.
pub fn train_readout(features: &[Vec<f64>], labels: &[usize], k: usize, ridge: f64) -> Result<ReadoutModel> {
    if features.len() != labels.len() {
        return Err(Error::InvalidConfig(format!("{} feature vectors for {} labels", features.len(), labels.len())));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidConfig(format!("ridge {ridge} must be finite and non-negative")));
    }
    if let Some(l) = labels.iter().find(|l| **l >= k) {
        return Err(Error::InvalidConfig(format!("label {l} outside {k} classes")));
    }
    for c in 0..k {
        if !labels.contains(&c) {
            return Err(Error::InsufficientData(format!("no training sample of class {c}")));
        }
    }
    let x = design(features)?;
    let y = one_hot(labels, k);
    let (a, b) = normal_system(&x, &y, ridge);
    let chol = a.clone().cholesky();
    let singular = match &chol {
        None => true,
        Some(c) => {
            let diag = c.l_dirty().diagonal();
            let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
            ridge == 0.0 && (lo / hi).powi(2) < 1e2 * f64::EPSILON
        }
    };
    if singular {
        return Err(if ridge == 0.0 {
            Error::RegularizationRequired
        } else {
            Error::InvalidConfig("readout normal equations are not positive definite".into())
        });
    }
    let chol = chol.expect("checked above");
    let mut w = chol.solve(&b);
    // one step of iterative refinement
    let r = &b - &a * &w;
    w += chol.solve(&r);
    Ok(ReadoutModel { class_count: k, ridge, feature_dim: x.ncols() - 1, weights: w.transpose().as_slice().to_vec() })
}

/// `||(X^T X + ridge P) W - X^T Y||_F / ||X^T Y||_F` for a trained model.
pub fn normal_equation_residual(model: &ReadoutModel, features: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    let x = design(features)?;
    let y = one_hot(labels, model.class_count);
    let (a, b) = normal_system(&x, &y, model.ridge);
    let w = model.weight_matrix();
    Ok((&a * &w - &b).norm() / b.norm())
}

/// Misclassification fraction.
pub fn evaluate(model: &ReadoutModel, features: &[Vec<f64>], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let wrong = features.iter().zip(labels).filter(|(f, l)| model.predict(f) != **l).count();
    wrong as f64 / labels.len() as f64
}

/// Two-sided exact binomial test p-value for `k` successes in `n` trials.
pub fn binomial_two_sided_p(k: usize, n: usize, p: f64) -> f64 {
    let ln_pmf = |i: usize| {
        ln_gamma(n as f64 + 1.0) - ln_gamma(i as f64 + 1.0) - ln_gamma((n - i) as f64 + 1.0)
            + i as f64 * p.ln()
            + (n - i) as f64 * (1.0 - p).ln()
    };
    let target = ln_pmf(k);
    let total: f64 = (0..=n).map(ln_pmf).filter(|l| *l <= target + 1e-7).map(f64::exp).sum();
    total.min(1.0)
}

/// Random frame indices, uniform over `k` classes.
pub fn frame_stream(k: usize, len: usize, seed: u64, path: &[u64]) -> Vec<usize> {
    let mut rng = rng::stream(seed, ns::STREAM, path);
    (0..len).map(|_| rng.random_range(0..k)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub defect_counts: Vec<usize>,
    pub snr_levels_db: Vec<f64>,
    pub trials: usize,
    pub class_count: usize,
    pub stream_len: usize,
    pub feature_count: usize,
    pub ridge: f64,
    pub wavelength_nm: f64,
    pub cavity: CavityConfig,
    pub feature_mode: FeatureMode,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            defect_counts: vec![0, 15, 20, 30],
            snr_levels_db: vec![20.0, 25.0, 30.0, 35.0, 40.0],
            trials: 10,
            class_count: 4,
            stream_len: 200,
            feature_count: 256,
            ridge: 1e-3,
            wavelength_nm: 1550.0,
            cavity: CavityConfig::default(),
            feature_mode: FeatureMode::Intensity,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.defect_counts.is_empty() || self.snr_levels_db.is_empty() {
            return Err(Error::InvalidConfig("sweep needs at least one defect count and one SNR level".into()));
        }
        if self.trials == 0 || self.stream_len == 0 {
            return Err(Error::InvalidConfig("sweep needs trials > 0 and stream_len > 0".into()));
        }
        self.cavity.validate()
    }
}

/// One cell of the error surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub defects: usize,
    pub snr_db: f64,
    pub mean_error: f64,
    /// Sample standard deviation over trials.
    pub std_error: f64,
    pub trials: usize,
    pub errors: Vec<f64>,
}

/// Seeds of one sweep trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSeeds {
    pub defects: usize,
    pub trial: usize,
    pub device: u64,
    pub codebook: u64,
    pub pixels: u64,
    pub streams: u64,
    pub noise: u64,
}

pub fn trial_seeds(seed: u64, defects: usize, trial: usize) -> TrialSeeds {
    let p = [defects as u64, trial as u64];
    TrialSeeds {
        defects,
        trial,
        device: rng::derive_seed(seed, ns::DEVICE_SEED, &p),
        codebook: rng::derive_seed(seed, ns::CODEBOOK, &p),
        pixels: rng::derive_seed(seed, ns::FEATURE_PIXELS, &p),
        streams: rng::derive_seed(seed, ns::STREAM, &p),
        noise: rng::derive_seed(seed, ns::NOISE_SEED, &p),
    }
}

/// One sweep trial: a device, its codebook, feature pixels and the train and
/// test streams, all fixed by [`TrialSeeds`].
pub struct Trial<T> {
    pub seeds: TrialSeeds,
    pub reservoir: Reservoir<T>,
    pub train_stream: Vec<usize>,
    pub test_stream: Vec<usize>,
    cfg: SweepConfig,
}

impl<T: Real> Trial<T> {
    pub fn new(
        family: &Arc<ModeFamily<T>>,
        params: &DeviceParams<T>,
        cfg: &SweepConfig,
        seeds: &TrialSeeds,
    ) -> Result<Self> {
        let params = DeviceParams { defect_count: seeds.defects, ..params.clone() };
        let device = new_device(Arc::clone(family), &params, seeds.device)?;
        let grid = family.grid();
        let codebook = generate_codebook(cfg.class_count, grid.size, seeds.codebook)?;
        let pixels = feature_pixels(grid, family.spec().core_radius_um, cfg.feature_count, seeds.pixels)?;
        let reservoir = Reservoir::new(device, &codebook, cfg.cavity, pixels, T::lit(cfg.wavelength_nm))?;
        Ok(Self {
            seeds: *seeds,
            reservoir,
            train_stream: frame_stream(cfg.class_count, cfg.stream_len, seeds.streams, &[0]),
            test_stream: frame_stream(cfg.class_count, cfg.stream_len, seeds.streams, &[1]),
            cfg: cfg.clone(),
        })
    }

    fn level(&self, snr_db: f64) -> Result<usize> {
        self.cfg.snr_levels_db.iter().position(|&s| s == snr_db).ok_or_else(|| {
            Error::InvalidConfig(format!("{snr_db} dB is not one of the sweep levels {:?}", self.cfg.snr_levels_db))
        })
    }

    fn noisy(&self, traj: &Trajectory, level: usize, split: u64) -> Vec<Vec<f64>> {
        let seed = rng::derive_seed(self.seeds.noise, ns::DETECTOR_NOISE, &[level as u64, split]);
        detect(traj, self.cfg.feature_mode, Some(self.cfg.snr_levels_db[level]), seed)
    }

    fn fit(&self, train: &Trajectory, level: usize) -> Result<ReadoutModel> {
        let snr = self.cfg.snr_levels_db[level];
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        for (l, &s) in self.cfg.snr_levels_db.iter().enumerate() {
            if s >= snr {
                feats.extend(self.noisy(train, l, 0));
                labels.extend(self.train_stream.iter().copied());
            }
        }
        train_readout(&feats, &labels, self.cfg.class_count, self.cfg.ridge)
    }

    /// Readout for testing at `snr_db`, trained on every level at or above it.
    pub fn train(&self, snr_db: f64) -> Result<ReadoutModel> {
        let level = self.level(snr_db)?;
        self.fit(&self.reservoir.trajectory(&self.train_stream, None)?, level)
    }

    /// Test error of `model` on the test stream at `snr_db`.
    pub fn test(&self, model: &ReadoutModel, snr_db: f64) -> Result<f64> {
        let level = self.level(snr_db)?;
        let test = self.reservoir.trajectory(&self.test_stream, None)?;
        Ok(evaluate(model, &self.noisy(&test, level, 1), &self.test_stream))
    }

    /// Test error at every SNR level, sharing the noiseless trajectories.
    pub fn errors(&self) -> Result<Vec<f64>> {
        let train = self.reservoir.trajectory(&self.train_stream, None)?;
        let test = self.reservoir.trajectory(&self.test_stream, None)?;
        (0..self.cfg.snr_levels_db.len())
            .map(|level| {
                let model = self.fit(&train, level)?;
                Ok(evaluate(&model, &self.noisy(&test, level, 1), &self.test_stream))
            })
            .collect()
    }
}

/// Test error of one trial at every SNR level. Training uses the samples of
/// all levels at or above the tested one; testing uses that level only.
pub fn run_trial<T: Real>(
    family: &Arc<ModeFamily<T>>,
    params: &DeviceParams<T>,
    cfg: &SweepConfig,
    seeds: &TrialSeeds,
) -> Result<Vec<f64>> {
    Trial::new(family, params, cfg, seeds)?.errors()
}

/// Error surface over defect counts and SNR levels.
pub fn sweep_error_surface<T: Real>(
    family: &Arc<ModeFamily<T>>,
    params: &DeviceParams<T>,
    cfg: &SweepConfig,
    seed: u64,
) -> Result<Vec<SweepCell>> {
    cfg.validate()?;
    let jobs: Vec<TrialSeeds> =
        cfg.defect_counts.iter().flat_map(|&d| (0..cfg.trials).map(move |t| trial_seeds(seed, d, t))).collect();
    let results: Vec<Vec<f64>> = jobs.par_iter().map(|s| run_trial(family, params, cfg, s)).collect::<Result<_>>()?;
    let mut cells = Vec::new();
    for (di, &d) in cfg.defect_counts.iter().enumerate() {
        let rows = &results[di * cfg.trials..(di + 1) * cfg.trials];
        for (li, &snr) in cfg.snr_levels_db.iter().enumerate() {
            let errors: Vec<f64> = rows.iter().map(|r| r[li]).collect();
            let n = errors.len() as f64;
            let mean = errors.iter().sum::<f64>() / n;
            let var =
                if errors.len() > 1 { errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
            cells.push(SweepCell {
                defects: d,
                snr_db: snr,
                mean_error: mean,
                std_error: var.sqrt(),
                trials: cfg.trials,
                errors,
            });
        }
    }
    Ok(cells)
}
