//! PUF token model: fiber segments separated by random unitary mode-mixing
//! planes, a rough input facet, and a square-law camera.

use std::f64::consts::TAU;
use std::sync::Arc;

use nalgebra::{DMatrix, DMatrixView, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modes::{Grid, ModeBasis, ModeFamily};
use crate::rng::{self, ns};
use crate::scalar::{Complex, Real};

/// Input-facet transmission model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Facet<T> {
    /// `exp(i U(0, 2pi)) (1 - roughness U(0, 1))` per pixel.
    Rough { roughness: T },
    /// Unit transmission everywhere.
    Clear,
}

/// Construction parameters of a device population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceParams<T> {
    pub defect_count: usize,
    /// Mixing strength `eps` in `U = exp(i eps H)`.
    pub coupling_strength: T,
    pub total_length_mm: T,
    pub facet: Facet<T>,
    /// Accepted challenge wavelengths `[min, max]` nm.
    pub tunable_range_nm: [T; 2],
}

impl<T: Real> Default for DeviceParams<T> {
    fn default() -> Self {
        Self {
            defect_count: 20,
            coupling_strength: T::lit(0.5),
            total_length_mm: T::lit(200.0),
            facet: Facet::Rough { roughness: T::lit(0.3) },
            tunable_range_nm: [T::lit(1540.0), T::lit(1570.0)],
        }
    }
}

impl<T: Real> DeviceParams<T> {
    pub fn validate(&self) -> Result<()> {
        let eps = self.coupling_strength;
        if !(eps >= T::zero() && eps <= T::one()) {
            return Err(Error::InvalidConfig(format!("coupling strength {eps} outside [0, 1]")));
        }
        if !(self.total_length_mm >= T::zero()) || !self.total_length_mm.is_finite() {
            return Err(Error::InvalidGeometry(format!("total length {} mm", self.total_length_mm)));
        }
        if self.total_length_mm == T::zero() {
            return Err(Error::InvalidGeometry(if self.defect_count > 0 {
                format!("{} defects placed in a zero-length fiber", self.defect_count)
            } else {
                "zero-length fiber".into()
            }));
        }
        if let Facet::Rough { roughness } = self.facet {
            if !(roughness >= T::zero() && roughness <= T::one()) {
                return Err(Error::InvalidConfig(format!("facet roughness {roughness} outside [0, 1]")));
            }
        }
        let [lo, hi] = self.tunable_range_nm;
        if !(lo > T::zero() && hi >= lo) {
            return Err(Error::InvalidConfig(format!("tunable range [{lo}, {hi}] nm")));
        }
        Ok(())
    }
}

/// Input illumination of a challenge.
#[derive(Debug, Clone, PartialEq)]
pub enum Illumination<T> {
    PlaneWave,
    /// Complex field on the detector grid, row-major.
    Field(Vec<Complex<T>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Challenge<T> {
    pub wavelength_nm: T,
    pub illumination: Illumination<T>,
}

impl<T: Real> Challenge<T> {
    pub fn plane_wave(wavelength_nm: T) -> Self {
        Self { wavelength_nm, illumination: Illumination::PlaneWave }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantization {
    None,
    /// Round to 16-bit counts, full scale at the brightest pixel.
    Bits16,
}

/// Camera model. `snr_db = None` disables noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    pub grid_size: usize,
    pub snr_db: Option<f64>,
    pub noise_seed: u64,
    pub quantization: Quantization,
}

impl Default for DetectorSpec {
    fn default() -> Self {
        Self { grid_size: 128, snr_db: Some(30.0), noise_seed: 0, quantization: Quantization::None }
    }
}

impl DetectorSpec {
    pub fn noiseless(grid_size: usize) -> Self {
        Self { grid_size, snr_db: None, noise_seed: 0, quantization: Quantization::None }
    }

    /// Noise standard deviation for a frame of mean intensity `mean`.
    pub fn sigma(&self, mean: f64) -> f64 {
        match self.snr_db {
            Some(db) if db.is_finite() => mean / 10f64.powf(db / 20.0),
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageMeta {
    pub device_seed: u64,
    pub wavelength_nm: f64,
    pub snr_db: Option<f64>,
    pub noise_seed: u64,
}

/// Detector frame, row-major, non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeckleImage<T> {
    pub size: usize,
    pub intensities: Vec<T>,
    pub meta: ImageMeta,
}

impl<T: Real> SpeckleImage<T> {
    pub fn get(&self, x: usize, y: usize) -> T {
        self.intensities[y * self.size + x]
    }

    pub fn mean(&self) -> f64 {
        self.intensities.iter().map(|v| v.f64()).sum::<f64>() / self.intensities.len() as f64
    }
}

/// One simulated PUF token. Immutable once built.
#[derive(Debug, Clone)]
pub struct PufDevice<T> {
    family: Arc<ModeFamily<T>>,
    params: DeviceParams<T>,
    segment_lengths_mm: Vec<T>,
    defect_planes: Vec<DMatrix<Complex<T>>>,
    input_mask: Vec<Complex<T>>,
    device_seed: u64,
}

/// Builds a device; everything random comes from streams keyed by `device_seed`.
pub fn new_device<T: Real>(
    family: Arc<ModeFamily<T>>,
    params: &DeviceParams<T>,
    device_seed: u64,
) -> Result<PufDevice<T>> {
    params.validate()?;
    let m = family.mode_count();
    let total = params.total_length_mm.f64();

    let mut rng = rng::stream(device_seed, ns::DEVICE_GEOMETRY, &[]);
    let mut cuts: Vec<f64> = (0..params.defect_count).map(|_| rng.random::<f64>() * total).collect();
    cuts.sort_by(f64::total_cmp);
    let mut segment_lengths_mm = Vec::with_capacity(cuts.len() + 1);
    let mut last = 0.0;
    for &c in &cuts {
        segment_lengths_mm.push(T::lit(c - last));
        last = c;
    }
    segment_lengths_mm.push(T::lit(total - last));

    let defect_planes =
        (0..params.defect_count).map(|d| defect_plane(device_seed, d, m, params.coupling_strength)).collect();

    let grid = family.grid();
    let input_mask = match params.facet {
        Facet::Clear => vec![Complex::new(T::one(), T::zero()); grid.pixels()],
        Facet::Rough { roughness } => {
            let mut rng = rng::stream(device_seed, ns::INPUT_MASK, &[]);
            let r = roughness.f64();
            (0..grid.pixels())
                .map(|_| {
                    let phase = rng.random::<f64>() * TAU;
                    let amp = 1.0 - r * rng.random::<f64>();
                    Complex::new(T::lit(amp * phase.cos()), T::lit(amp * phase.sin()))
                })
                .collect()
        }
    };

    Ok(PufDevice { family, params: params.clone(), segment_lengths_mm, defect_planes, input_mask, device_seed })
}

/// Random Hermitian generator `H = (A + A^H)/2`, `A_ij ~ N(0,1) + i N(0,1)`.
pub fn defect_generator<T: Real>(device_seed: u64, plane: usize, m: usize) -> DMatrix<Complex<T>> {
    let mut rng = rng::stream(device_seed, ns::DEFECT_GENERATOR, &[plane as u64]);
    let a = DMatrix::<Complex<f64>>::from_fn(m, m, |_, _| {
        Complex::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    });
    let h = (&a + a.adjoint()) * Complex::new(0.5, 0.0);
    h.map(|z| Complex::new(T::lit(z.re), T::lit(z.im)))
}

/// `exp(i eps H)` for Hermitian `h`, via its eigendecomposition.
pub fn unitary_exp<T: Real>(h: DMatrix<Complex<T>>, eps: T) -> DMatrix<Complex<T>> {
    let m = h.nrows();
    if eps == T::zero() {
        return DMatrix::identity(m, m);
    }
    let eig = SymmetricEigen::new(h);
    let v = eig.eigenvectors;
    let phases = DVector::from_iterator(
        m,
        eig.eigenvalues.iter().map(|&l| {
            let t = eps * l;
            Complex::new(t.cos(), t.sin())
        }),
    );
    let mut scaled = v.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= phases[j];
    }
    scaled * v.adjoint()
}

fn defect_plane<T: Real>(device_seed: u64, plane: usize, m: usize, eps: T) -> DMatrix<Complex<T>> {
    if eps == T::zero() {
        return DMatrix::identity(m, m);
    }
    unitary_exp(defect_generator(device_seed, plane, m), eps)
}

// 2 pi split so that k * TAU_HI and k * TAU_MID are exact for k < 2^25.
const REDUCTION_BITS: u32 = 25;
const TAU_HI: f64 = f64::from_bits(TAU.to_bits() & !((1u64 << REDUCTION_BITS) - 1));
const TAU_MID: f64 = TAU - TAU_HI;
const TAU_LO: f64 = 2.449_293_598_294_706_4e-16;

/// `beta * len` reduced to `[-pi, pi]`, with the product's rounding error
/// carried through the reduction.
pub fn propagation_phase(beta_per_um: f64, len_um: f64) -> f64 {
    let p = beta_per_um * len_um;
    let err = beta_per_um.mul_add(len_um, -p);
    let k = (p / TAU).round();
    if k.abs() >= (1u64 << REDUCTION_BITS) as f64 {
        return (p + err).rem_euclid(TAU);
    }
    ((p - k * TAU_HI) - k * TAU_MID) - k * TAU_LO + err
}

impl<T: Real> PufDevice<T> {
    pub fn family(&self) -> &Arc<ModeFamily<T>> {
        &self.family
    }

    pub fn params(&self) -> &DeviceParams<T> {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.device_seed
    }

    pub fn mode_count(&self) -> usize {
        self.family.mode_count()
    }

    pub fn grid(&self) -> Grid<T> {
        self.family.grid()
    }

    pub fn segment_lengths_mm(&self) -> &[T] {
        &self.segment_lengths_mm
    }

    pub fn defect_planes(&self) -> &[DMatrix<Complex<T>>] {
        &self.defect_planes
    }

    pub fn input_mask(&self) -> &[Complex<T>] {
        &self.input_mask
    }

    pub fn basis(&self, wavelength_nm: T) -> Result<Arc<ModeBasis<T>>> {
        self.family.basis(wavelength_nm)
    }

    fn check_wavelength(&self, wavelength_nm: T) -> Result<()> {
        let [lo, hi] = self.params.tunable_range_nm;
        if wavelength_nm < lo || wavelength_nm > hi || !wavelength_nm.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "challenge wavelength {wavelength_nm} nm outside tunable range [{lo}, {hi}] nm"
            )));
        }
        Ok(())
    }

    /// Same device with one defect plane regenerated at `eps + delta`.
    pub fn with_perturbed_plane(&self, plane: usize, delta: T) -> Result<Self> {
        if plane >= self.defect_planes.len() {
            return Err(Error::InvalidConfig(format!("device has no defect plane {plane}")));
        }
        let mut out = self.clone();
        let h = defect_generator(self.device_seed, plane, self.mode_count());
        out.defect_planes[plane] = unitary_exp(h, self.params.coupling_strength + delta);
        Ok(out)
    }

    /// Projects `mask * illumination` onto the modes and normalises to unit power.
    pub fn excite(&self, challenge: &Challenge<T>) -> Result<Vec<Complex<T>>> {
        let basis = self.basis(challenge.wavelength_nm)?;
        let grid = self.grid();
        let field: Vec<Complex<T>> = match &challenge.illumination {
            Illumination::PlaneWave => self.input_mask.clone(),
            Illumination::Field(f) => {
                if f.len() != grid.pixels() {
                    return Err(Error::InvalidConfig(format!(
                        "illumination has {} samples, grid has {}",
                        f.len(),
                        grid.pixels()
                    )));
                }
                f.iter().zip(&self.input_mask).map(|(a, b)| *a * *b).collect()
            }
        };
        let mut c = project(&basis, &field)?;
        let power = c.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr());
        let input_energy = field.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr()) * grid.cell_area();
        if !(power > T::lit(1e-12) * input_energy) || !(power > T::zero()) {
            return Err(Error::DegenerateExcitation(format!(
                "excitation carries {power} of {input_energy} input power into the guided modes"
            )));
        }
        let scale = T::one() / power.sqrt();
        for z in &mut c {
            *z *= scale;
        }
        Ok(c)
    }

    fn phases(&self, basis: &ModeBasis<T>, length_mm: T) -> Vec<Complex<T>> {
        let len_um = length_mm.f64() * 1000.0;
        basis
            .betas
            .iter()
            .map(|b| {
                let phi = propagation_phase(b.f64(), len_um);
                Complex::new(T::lit(phi.cos()), T::lit(phi.sin()))
            })
            .collect()
    }

    /// Segment phases and defect planes applied in spatial order.
    pub fn propagate(&self, c: &[Complex<T>], wavelength_nm: T) -> Result<Vec<Complex<T>>> {
        let m = self.mode_count();
        if c.len() != m {
            return Err(Error::InvalidConfig(format!("{} coefficients for {m} modes", c.len())));
        }
        let basis = self.basis(wavelength_nm)?;
        let mut v = DVector::from_column_slice(c);
        for (k, len) in self.segment_lengths_mm.iter().enumerate() {
            for (z, p) in v.iter_mut().zip(self.phases(&basis, *len)) {
                *z *= p;
            }
            if let Some(u) = self.defect_planes.get(k) {
                v = u * v;
            }
        }
        Ok(v.as_slice().to_vec())
    }

    /// Full `M x M` transfer matrix at one wavelength.
    pub fn transfer_matrix(&self, wavelength_nm: T) -> Result<DMatrix<Complex<T>>> {
        let m = self.mode_count();
        let basis = self.basis(wavelength_nm)?;
        let mut t = DMatrix::<Complex<T>>::identity(m, m);
        for (k, len) in self.segment_lengths_mm.iter().enumerate() {
            let d = self.phases(&basis, *len);
            for (i, mut row) in t.row_iter_mut().enumerate() {
                row *= d[i];
            }
            if let Some(u) = self.defect_planes.get(k) {
                t = u * t;
            }
        }
        Ok(t)
    }

    /// Complex field `sum_m c_m psi_m` on the grid.
    pub fn field(&self, c: &[Complex<T>], wavelength_nm: T) -> Result<Vec<Complex<T>>> {
        let basis = self.basis(wavelength_nm)?;
        synthesize(&basis, c)
    }

    /// Noiseless intensity at the listed pixels only.
    pub fn intensity_at(&self, c: &[Complex<T>], wavelength_nm: T, pixels: &[usize]) -> Result<Vec<T>> {
        let basis = self.basis(wavelength_nm)?;
        let profiles = basis.profiles()?;
        let n = profiles.grid.pixels();
        let data = profiles.as_slice();
        Ok(pixels
            .iter()
            .map(|&p| {
                let mut e = Complex::new(T::zero(), T::zero());
                for (m, cm) in c.iter().enumerate() {
                    e += *cm * data[m * n + p];
                }
                e.norm_sqr()
            })
            .collect())
    }

    /// Square-law image of coefficients `c` with detector noise.
    pub fn render_speckle(
        &self,
        c: &[Complex<T>],
        wavelength_nm: T,
        detector: &DetectorSpec,
    ) -> Result<SpeckleImage<T>> {
        let grid = self.grid();
        if detector.grid_size != grid.size {
            return Err(Error::InvalidConfig(format!(
                "detector grid {} does not match profile grid {}",
                detector.grid_size, grid.size
            )));
        }
        let field = self.field(c, wavelength_nm)?;
        let clean: Vec<T> = field.iter().map(|z| z.norm_sqr()).collect();
        let mean = mean_intensity(c, grid);
        let mut noise =
            rng::stream(detector.noise_seed, ns::DETECTOR_NOISE, &[self.device_seed, wavelength_nm.f64().to_bits()]);
        let intensities = apply_detector(&clean, mean, detector, &mut noise);
        Ok(SpeckleImage {
            size: grid.size,
            intensities,
            meta: ImageMeta {
                device_seed: self.device_seed,
                wavelength_nm: wavelength_nm.f64(),
                snr_db: detector.snr_db,
                noise_seed: detector.noise_seed,
            },
        })
    }

    /// Full challenge-to-image path.
    pub fn respond(&self, challenge: &Challenge<T>, detector: &DetectorSpec) -> Result<SpeckleImage<T>> {
        self.check_wavelength(challenge.wavelength_nm)?;
        let c0 = self.excite(challenge)?;
        let c = self.propagate(&c0, challenge.wavelength_nm)?;
        self.render_speckle(&c, challenge.wavelength_nm, detector)
    }
}

/// Grid mean of `|sum c psi|^2`; exact for an orthonormal basis.
pub fn mean_intensity<T: Real>(c: &[Complex<T>], grid: Grid<T>) -> f64 {
    let power: f64 = c.iter().map(|z| z.norm_sqr().f64()).sum();
    power / (grid.pixels() as f64 * grid.cell_area().f64())
}

/// Adds Gaussian noise of `sigma(mean)`, clamps at zero, then quantises.
pub fn apply_detector<T: Real, R: Rng>(clean: &[T], mean: f64, detector: &DetectorSpec, rng: &mut R) -> Vec<T> {
    let sigma = detector.sigma(mean);
    let mut out: Vec<T> = if sigma > 0.0 {
        clean
            .iter()
            .map(|v| {
                let n: f64 = rng.sample(StandardNormal);
                T::lit((v.f64() + sigma * n).max(0.0))
            })
            .collect()
    } else {
        clean.to_vec()
    };
    if detector.quantization == Quantization::Bits16 {
        let peak = out.iter().fold(T::zero(), |a, b| a.max(*b));
        if peak > T::zero() {
            let full = T::lit(65535.0);
            for v in &mut out {
                *v = (*v / peak * full).round();
            }
        }
    }
    out
}

fn project<T: Real>(basis: &ModeBasis<T>, field: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
    let profiles = basis.profiles()?;
    let n = profiles.grid.pixels();
    let m = profiles.mode_count();
    let psi = DMatrixView::from_slice(profiles.as_slice(), n, m);
    let re = DVector::from_iterator(n, field.iter().map(|z| z.re));
    let im = DVector::from_iterator(n, field.iter().map(|z| z.im));
    let da = profiles.grid.cell_area();
    let cr = psi.tr_mul(&re) * da;
    let ci = psi.tr_mul(&im) * da;
    Ok(cr.iter().zip(ci.iter()).map(|(a, b)| Complex::new(*a, *b)).collect())
}

fn synthesize<T: Real>(basis: &ModeBasis<T>, c: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
    let profiles = basis.profiles()?;
    let n = profiles.grid.pixels();
    let m = profiles.mode_count();
    if c.len() != m {
        return Err(Error::InvalidConfig(format!("{} coefficients for {m} modes", c.len())));
    }
    let data = profiles.as_slice();
    const CHUNK: usize = 1024;
    let mut out = vec![Complex::new(T::zero(), T::zero()); n];
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(k, chunk)| {
        let start = k * CHUNK;
        for (mi, cm) in c.iter().enumerate() {
            let col = &data[mi * n + start..mi * n + start + chunk.len()];
            for (e, psi) in chunk.iter_mut().zip(col) {
                *e += *cm * *psi;
            }
        }
    });
    Ok(out)
}

/// Flat indices of pixels whose centre lies within `radius_um` of the axis.
pub fn disk_pixels<T: Real>(grid: Grid<T>, radius_um: T) -> Vec<usize> {
    (0..grid.pixels())
        .filter(|&p| {
            let (x, y) = grid.xy(p);
            x.hypot(y) <= radius_um
        })
        .collect()
}

/// Pearson correlation of two equally sized samples.
pub fn pearson<T: Real>(a: &[T], b: &[T]) -> f64 {
    assert_eq!(a.len(), b.len(), "pearson: length mismatch");
    let n = a.len() as f64;
    let ma = a.iter().map(|v| v.f64()).sum::<f64>() / n;
    let mb = b.iter().map(|v| v.f64()).sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x.f64() - ma, y.f64() - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// Pearson correlation restricted to the pixels of the fiber core.
pub fn core_pearson<T: Real>(grid: Grid<T>, core_radius_um: T, a: &SpeckleImage<T>, b: &SpeckleImage<T>) -> f64 {
    let idx = disk_pixels(grid, core_radius_um);
    let xa: Vec<T> = idx.iter().map(|&p| a.intensities[p]).collect();
    let xb: Vec<T> = idx.iter().map(|&p| b.intensities[p]).collect();
    pearson(&xa, &xb)
}
