//! Guided LP modes of a step-index fiber.
//!
//! Roots of the weakly-guiding characteristic equation
//!
//! ```text
//! u J_{l+1}(u) / J_l(u) = w K_{l+1}(w) / K_l(w),   u^2 + w^2 = V^2
//! ```
//!
//! are bracketed between consecutive zeros of `J_l` (the left-hand side runs
//! from -inf to +inf on each such interval while the right-hand side is
//! finite and decreasing in `u`) and refined by bisection. The cladding is
//! treated as infinite.

use std::fmt;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Complex, Real};
use crate::special::{bessel_j, bessel_j_all, bessel_k_ratio, ln_bessel_k};

/// Relative bracket width at which bisection stops.
pub const ROOT_RTOL: f64 = 1e-10;
/// Smallest grid accepted by [`sample_profiles`].
pub const MIN_GRID: usize = 32;
/// Minimum pixels per transverse oscillation of the highest-order mode.
pub const MIN_PIXELS_PER_PERIOD: f64 = 4.0;

const ZERO_SCAN_STEP: f64 = 0.1;

/// Step-index fiber geometry. Lengths in micrometres, wavelength in nanometres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberSpec<T> {
    pub core_radius_um: T,
    /// Metadata only: the mode solution treats the cladding as infinite.
    pub clad_thickness_um: T,
    pub n_core: T,
    pub n_clad: T,
    pub wavelength_ref_nm: T,
}

impl<T: Real> FiberSpec<T> {
    /// Builds a spec from the cladding index and numerical aperture.
    pub fn from_na(core_radius_um: T, clad_thickness_um: T, n_clad: T, na: T, wavelength_ref_nm: T) -> Result<Self> {
        let spec = Self {
            core_radius_um,
            clad_thickness_um,
            n_core: (n_clad * n_clad + na * na).sqrt(),
            n_clad,
            wavelength_ref_nm,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n_clad > T::one()) {
            return Err(Error::InvalidSpec(format!("n_clad = {} must exceed 1", self.n_clad)));
        }
        if !(self.n_core > self.n_clad) {
            return Err(Error::InvalidSpec(format!("n_core = {} must exceed n_clad = {}", self.n_core, self.n_clad)));
        }
        if !(self.core_radius_um > T::zero()) || !(self.clad_thickness_um > T::zero()) {
            return Err(Error::InvalidSpec("core radius and cladding thickness must be positive".into()));
        }
        if !(self.wavelength_ref_nm > T::zero()) {
            return Err(Error::InvalidSpec("reference wavelength must be positive".into()));
        }
        Ok(())
    }

    pub fn numerical_aperture(&self) -> T {
        (self.n_core * self.n_core - self.n_clad * self.n_clad).sqrt()
    }

    /// Vacuum wavenumber in rad/um.
    pub fn k0(wavelength_nm: T) -> T {
        T::two_pi() / (wavelength_nm * T::lit(1e-3))
    }
}

impl<T: Real> Default for FiberSpec<T> {
    /// 980 um core polymer fiber with 20 um cladding at 1540 nm, NA 0.5.
    fn default() -> Self {
        Self::from_na(T::lit(490.0), T::lit(20.0), T::lit(1.49), T::lit(0.5), T::lit(1540.0))
            .expect("default fiber spec is valid")
    }
}

/// Normalised frequency `V = (2 pi a / lambda) NA`.
pub fn v_number<T: Real>(spec: &FiberSpec<T>, wavelength_nm: T) -> Result<T> {
    spec.validate()?;
    if !(wavelength_nm > T::zero()) {
        return Err(Error::InvalidSpec(format!("wavelength {wavelength_nm} nm must be positive")));
    }
    Ok(FiberSpec::k0(wavelength_nm) * spec.core_radius_um * spec.numerical_aperture())
}

/// Large-V estimate of the guided mode count, `V^2 / 2`.
pub fn approx_mode_count<T: Real>(v: T) -> T {
    v * v / T::lit(2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Cos,
    Sin,
}

/// `LP_lm` with its azimuthal orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModeLabel {
    pub l: u32,
    pub m: u32,
    pub orientation: Orientation,
}

impl ModeLabel {
    pub fn new(l: u32, m: u32, orientation: Orientation) -> Self {
        debug_assert!(m >= 1);
        debug_assert!(l >= 1 || orientation == Orientation::Cos);
        Self { l, m, orientation }
    }
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LP{},{}", self.l, self.m)?;
        match (self.l, self.orientation) {
            (0, _) => Ok(()),
            (_, Orientation::Cos) => f.write_str("c"),
            (_, Orientation::Sin) => f.write_str("s"),
        }
    }
}

/// Square pixel grid centred on the fiber axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    pub size: usize,
    pub extent_um: T,
}

impl<T: Real> Grid<T> {
    pub fn pitch(&self) -> T {
        self.extent_um / T::of(self.size)
    }

    /// Pixel area, the quadrature weight of every inner product.
    pub fn cell_area(&self) -> T {
        let h = self.pitch();
        h * h
    }

    pub fn pixels(&self) -> usize {
        self.size * self.size
    }

    /// Cell-centre coordinate of column/row `i`; symmetric about zero.
    pub fn coord(&self, i: usize) -> T {
        (T::of(i) + T::lit(0.5)) * self.pitch() - self.extent_um / T::lit(2.0)
    }

    /// `(x, y)` of flat pixel index `p` (row-major, rows along y).
    pub fn xy(&self, p: usize) -> (T, T) {
        (self.coord(p % self.size), self.coord(p / self.size))
    }
}

/// Mode profiles sampled on a grid, mode-major.
#[derive(Debug, Clone)]
pub struct Profiles<T> {
    pub grid: Grid<T>,
    data: Vec<T>,
}

impl<T: Real> Profiles<T> {
    pub fn mode(&self, m: usize) -> &[T] {
        let n = self.grid.pixels();
        &self.data[m * n..(m + 1) * n]
    }

    pub fn mode_count(&self) -> usize {
        self.data.len() / self.grid.pixels()
    }

    /// Column-major `pixels x modes` sample matrix.
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Grid inner product `sum_p f g dA` of two modes.
    pub fn inner(&self, i: usize, j: usize) -> T {
        let s: T = self.mode(i).iter().zip(self.mode(j)).fold(T::zero(), |acc, (a, b)| acc + *a * *b);
        s * self.grid.cell_area()
    }

    /// Max-abs deviation of the Gram matrix from identity.
    pub fn orthonormality_error(&self) -> T {
        let g = gram(&self.data, self.mode_count(), self.grid.pixels(), self.grid.cell_area());
        let mut worst = T::zero();
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let target = if i == j { T::one() } else { T::zero() };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        worst
    }
}

/// Guided modes of one fiber at one wavelength.
#[derive(Debug, Clone)]
pub struct ModeBasis<T> {
    pub spec: FiberSpec<T>,
    pub wavelength_nm: T,
    pub v: T,
    pub labels: Vec<ModeLabel>,
    /// Core parameter `u` per mode.
    pub u: Vec<T>,
    /// Cladding decay parameter `w = sqrt(V^2 - u^2)` per mode.
    pub w: Vec<T>,
    /// Propagation constants in rad/um.
    pub betas: Vec<T>,
    pub profiles: Option<Profiles<T>>,
}

impl<T: Real> ModeBasis<T> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn k0(&self) -> T {
        FiberSpec::k0(self.wavelength_nm)
    }

    pub fn effective_index(&self, m: usize) -> T {
        self.betas[m] / self.k0()
    }

    pub fn profiles(&self) -> Result<&Profiles<T>> {
        self.profiles.as_ref().ok_or_else(|| Error::InvalidConfig("mode profiles have not been sampled".into()))
    }

    /// Unnormalised analytic field of mode `m` at `(x, y)` um: `J_l(u r/a)`
    /// in the core, `J_l(u) K_l(w r/a) / K_l(w)` outside, times the
    /// azimuthal factor.
    pub fn analytic_field(&self, m: usize, x: T, y: T) -> T {
        let label = self.labels[m];
        let r = x.hypot(y);
        radial(label.l as usize, self.u[m], self.w[m], r / self.spec.core_radius_um) * angular(label, x, y, r)
    }
}

/// Characteristic function `u J_{l+1}(u)/J_l(u) - w K_{l+1}(w)/K_l(w)`.
/// At `u = V` the cladding term takes its `w -> 0` limit (`2l`, or 0 for `l = 0`).
pub fn characteristic<T: Real>(l: usize, u: T, v: T) -> T {
    let j = bessel_j_all(l + 1, u);
    let lhs = u * j[l + 1] / j[l];
    let w2 = v * v - u * u;
    let rhs = if w2 <= T::zero() {
        T::of(2 * l)
    } else {
        let w = w2.sqrt();
        w * bessel_k_ratio(l, w)
    };
    lhs - rhs
}

/// Zeros of `J_l` in `(0, limit)`, ascending.
pub fn bessel_zeros_below<T: Real>(l: usize, limit: T) -> Vec<T> {
    let step = T::lit(ZERO_SCAN_STEP);
    let mut zeros = Vec::new();
    // J_l has no zeros in (0, l]
    let mut x0 = if l == 0 { step } else { T::of(l) };
    let mut f0 = bessel_j(l, x0);
    while x0 < limit {
        let x1 = (x0 + step).min(limit);
        let f1 = bessel_j(l, x1);
        if f1 == T::zero() {
            if x1 < limit {
                zeros.push(x1);
            }
        } else if f0 * f1 < T::zero() {
            let (mut lo, mut hi) = (x0, x1);
            while hi - lo > T::lit(4.0) * T::eps() * hi {
                let mid = (lo + hi) / T::lit(2.0);
                let fm = bessel_j(l, mid);
                if fm == T::zero() {
                    lo = mid;
                    hi = mid;
                } else if (fm > T::zero()) == (f0 > T::zero()) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            zeros.push((lo + hi) / T::lit(2.0));
        }
        x0 = x1;
        f0 = f1;
    }
    zeros
}

/// Guided roots `u_{l,1} < u_{l,2} < ...` below `limit <= V`.
fn roots_for_l<T: Real>(l: usize, v: T, limit: T) -> Vec<T> {
    let zeros = bessel_zeros_below(l, limit);
    let mut roots = Vec::with_capacity(zeros.len() + 1);
    let mut lo = T::zero();
    for &z in &zeros {
        roots.push(bisect(l, v, lo, z));
        lo = z;
    }
    // partial last interval: a root exists iff F changes sign before `limit`
    if characteristic(l, limit, v) > T::zero() {
        roots.push(bisect(l, v, lo, limit));
    }
    roots
}

// F(lo+) < 0 < F(hi-) on the open bracket.
fn bisect<T: Real>(l: usize, v: T, mut lo: T, mut hi: T) -> T {
    let tol = T::lit(ROOT_RTOL).max(T::lit(4.0) * T::eps());
    while hi - lo > tol * hi {
        let mid = (lo + hi) / T::lit(2.0);
        if characteristic(l, mid, v) > T::zero() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (lo + hi) / T::lit(2.0)
}

fn beta_of<T: Real>(spec: &FiberSpec<T>, wavelength_nm: T, u: T) -> T {
    let nk = spec.n_core * FiberSpec::k0(wavelength_nm);
    let q = u / spec.core_radius_um;
    (nk * nk - q * q).sqrt()
}

fn build_basis<T: Real>(
    spec: &FiberSpec<T>,
    wavelength_nm: T,
    v: T,
    labels: Vec<ModeLabel>,
    u: Vec<T>,
) -> ModeBasis<T> {
    let w = u.iter().map(|&ui| (v * v - ui * ui).max(T::zero()).sqrt()).collect();
    let betas = u.iter().map(|&ui| beta_of(spec, wavelength_nm, ui)).collect();
    ModeBasis { spec: *spec, wavelength_nm, v, labels, u, w, betas, profiles: None }
}

/// Up to `max_modes` guided LP modes ordered by descending propagation
/// constant. Each `l >= 1` root contributes a cos and a sin mode, which share
/// one `beta`; equal-`beta` entries are ordered by `(l, m, orientation)`.
pub fn solve_lp_modes<T: Real>(spec: &FiberSpec<T>, wavelength_nm: T, max_modes: usize) -> Result<ModeBasis<T>> {
    if max_modes == 0 {
        return Err(Error::InvalidConfig("max_modes must be at least 1".into()));
    }
    let v = v_number(spec, wavelength_nm)?;
    let mut found: Vec<(T, usize, usize)> = Vec::new(); // (u, l, m)
    let mut threshold = v;
    for l in 0.. {
        let roots = roots_for_l(l, v, threshold);
        if roots.is_empty() {
            // u_{l,1} increases with l
            break;
        }
        found.extend(roots.into_iter().enumerate().map(|(i, u)| (u, l, i + 1)));
        found.sort_by(|a, b| a.partial_cmp(b).expect("finite roots"));
        let mut count = 0;
        for &(u, l, _) in &found {
            count += if l == 0 { 1 } else { 2 };
            if count >= max_modes {
                threshold = threshold.min(u);
                break;
            }
        }
    }
    let mut labels = Vec::new();
    let mut us = Vec::new();
    for &(u, l, m) in &found {
        let orientations: &[Orientation] =
            if l == 0 { &[Orientation::Cos] } else { &[Orientation::Cos, Orientation::Sin] };
        for &o in orientations {
            labels.push(ModeLabel::new(l as u32, m as u32, o));
            us.push(u);
        }
    }
    labels.truncate(max_modes);
    us.truncate(max_modes);
    Ok(build_basis(spec, wavelength_nm, v, labels, us))
}

/// Solves for a fixed label set (typically one found at a reference
/// wavelength), keeping its order.
pub fn solve_for_labels<T: Real>(spec: &FiberSpec<T>, wavelength_nm: T, labels: &[ModeLabel]) -> Result<ModeBasis<T>> {
    let v = v_number(spec, wavelength_nm)?;
    let max_l = labels.iter().map(|lb| lb.l as usize).max().unwrap_or(0);
    let mut per_l: Vec<Option<Vec<T>>> = vec![None; max_l + 1];
    let mut us = Vec::with_capacity(labels.len());
    for lb in labels {
        let l = lb.l as usize;
        let roots = per_l[l].get_or_insert_with(|| roots_for_l(l, v, v));
        let u = roots
            .get(lb.m as usize - 1)
            .copied()
            .ok_or_else(|| Error::NotGuided { label: lb.to_string(), wavelength_nm: wavelength_nm.f64() })?;
        us.push(u);
    }
    Ok(build_basis(spec, wavelength_nm, v, labels.to_vec(), us))
}

fn radial<T: Real>(l: usize, u: T, w: T, rho: T) -> T {
    if rho <= T::one() {
        bessel_j(l, u * rho)
    } else if w > T::zero() {
        bessel_j(l, u) * (ln_bessel_k(l, w * rho) - ln_bessel_k(l, w)).exp()
    } else {
        T::zero()
    }
}

// cos(l phi) / sin(l phi) from (x + iy)^l / r^l; exact parity under (x, y) -> (-x, -y).
fn angular<T: Real>(label: ModeLabel, x: T, y: T, r: T) -> T {
    if label.l == 0 {
        return T::one();
    }
    if r == T::zero() {
        return T::zero();
    }
    let unit = Complex::new(x / r, y / r);
    let mut p = Complex::new(T::one(), T::zero());
    for _ in 0..label.l {
        p *= unit;
    }
    match label.orientation {
        Orientation::Cos => p.re,
        Orientation::Sin => p.im,
    }
}

fn gram<T: Real>(data: &[T], modes: usize, pixels: usize, da: T) -> DMatrix<T> {
    // column-major (pixels x modes) view of the mode-major buffer
    let p = DMatrix::from_column_slice(pixels, modes, data);
    p.tr_mul(&p) * da
}

/// Samples the basis on a `grid_size`-square grid spanning `grid_extent_um`.
///
/// Each profile is the analytic LP field normalised to unit grid norm. The
/// sampled set is then orthonormalised with the symmetric (Löwdin)
/// transform `S^{-1/2}`, the smallest change that makes the discrete Gram
/// matrix the identity; this preserves parity, so `LP0,1` stays even under
/// inversion.
pub fn sample_profiles<T: Real>(basis: &ModeBasis<T>, grid_size: usize, grid_extent_um: T) -> Result<ModeBasis<T>> {
    let a = basis.spec.core_radius_um;
    if grid_size < MIN_GRID {
        return Err(Error::Resolution(format!("grid size {grid_size} is below {MIN_GRID}")));
    }
    if grid_extent_um < T::lit(2.0) * a {
        return Err(Error::InvalidConfig(format!(
            "grid extent {grid_extent_um} um does not cover the {} um core",
            T::lit(2.0) * a
        )));
    }
    let grid = Grid { size: grid_size, extent_um: grid_extent_um };
    let h = grid.pitch();
    for (m, &u) in basis.u.iter().enumerate() {
        let period = T::two_pi() * a / u;
        if period < T::lit(MIN_PIXELS_PER_PERIOD) * h {
            return Err(Error::Resolution(format!(
                "{} oscillates every {:.3} px; need at least {MIN_PIXELS_PER_PERIOD}",
                basis.labels[m],
                (period / h).f64()
            )));
        }
    }

    let n = grid.pixels();
    let modes = basis.len();
    let mut data = vec![T::zero(); modes * n];
    let da = grid.cell_area();
    for m in 0..modes {
        let slot = &mut data[m * n..(m + 1) * n];
        for (p, v) in slot.iter_mut().enumerate() {
            let (x, y) = grid.xy(p);
            *v = basis.analytic_field(m, x, y);
        }
        let norm = (slot.iter().fold(T::zero(), |acc, v| acc + *v * *v) * da).sqrt();
        if !(norm > T::zero()) {
            return Err(Error::Resolution(format!("{} vanishes on the grid", basis.labels[m])));
        }
        for v in slot.iter_mut() {
            *v /= norm;
        }
    }

    for _ in 0..2 {
        let s = gram(&data, modes, n, da);
        let eig = SymmetricEigen::new(s);
        let min_eig = eig.eigenvalues.iter().copied().fold(T::max_value().unwrap(), |a, b| a.min(b));
        if !(min_eig > T::lit(1e-6)) {
            return Err(Error::Resolution(format!(
                "sampled modes are nearly linearly dependent (min Gram eigenvalue {min_eig})"
            )));
        }
        let inv_sqrt = eig.eigenvalues.map(|e| T::one() / e.sqrt());
        let transform = &eig.eigenvectors * DMatrix::from_diagonal(&inv_sqrt) * eig.eigenvectors.transpose();
        let p = DMatrix::from_column_slice(n, modes, &data);
        let q = p * transform;
        data.copy_from_slice(q.as_slice());
        let err = Profiles { grid, data: data.clone() }.orthonormality_error();
        if err < T::lit(100.0) * T::eps() * T::of(modes) {
            break;
        }
    }

    let mut out = basis.clone();
    out.profiles = Some(Profiles { grid, data });
    Ok(out)
}

/// A fiber's mode set at a reference wavelength, re-solvable at other
/// wavelengths with the same labels in the same order. Sampled bases are
/// memoised per wavelength and shared.
#[derive(Debug)]
pub struct ModeFamily<T> {
    spec: FiberSpec<T>,
    labels: Vec<ModeLabel>,
    grid: Grid<T>,
    cache: Mutex<Vec<(u64, Arc<ModeBasis<T>>)>>,
}

impl<T: Real> ModeFamily<T> {
    pub fn new(spec: FiberSpec<T>, max_modes: usize, grid: Grid<T>) -> Result<Self> {
        let reference = solve_lp_modes(&spec, spec.wavelength_ref_nm, max_modes)?;
        let sampled = sample_profiles(&reference, grid.size, grid.extent_um)?;
        let labels = sampled.labels.clone();
        let key = spec.wavelength_ref_nm.f64().to_bits();
        Ok(Self { spec, labels, grid, cache: Mutex::new(vec![(key, Arc::new(sampled))]) })
    }

    pub fn spec(&self) -> &FiberSpec<T> {
        &self.spec
    }

    pub fn labels(&self) -> &[ModeLabel] {
        &self.labels
    }

    pub fn grid(&self) -> Grid<T> {
        self.grid
    }

    pub fn mode_count(&self) -> usize {
        self.labels.len()
    }

    pub fn basis(&self, wavelength_nm: T) -> Result<Arc<ModeBasis<T>>> {
        let key = wavelength_nm.f64().to_bits();
        if let Some((_, b)) = self.cache.lock().expect("mode cache").iter().find(|(k, _)| *k == key) {
            return Ok(Arc::clone(b));
        }
        let solved = solve_for_labels(&self.spec, wavelength_nm, &self.labels)?;
        let sampled = Arc::new(sample_profiles(&solved, self.grid.size, self.grid.extent_um)?);
        let mut cache = self.cache.lock().expect("mode cache");
        if let Some((_, b)) = cache.iter().find(|(k, _)| *k == key) {
            return Ok(Arc::clone(b));
        }
        cache.push((key, Arc::clone(&sampled)));
        Ok(sampled)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_with_v(v: f64) -> FiberSpec<f64> {
        // a = 1 um at 1000 nm: V = 2 pi NA
        FiberSpec::from_na(1.0, 20.0, 1.45, v / std::f64::consts::TAU, 1000.0).unwrap()
    }

    #[test]
    fn v_number_formula() {
        let spec = FiberSpec::<f64>::default();
        let v = v_number(&spec, 1540.0).unwrap();
        let want = std::f64::consts::TAU * 490.0 / 1.54 * 0.5;
        assert!((v - want).abs() < 1e-9 * want);
        assert!((v - 1000.0).abs() < 1.0, "V = {v}");
        let mut wide = spec;
        wide.core_radius_um = 980.0;
        assert!((v_number(&wide, 1540.0).unwrap() - 2.0 * v).abs() < 1e-9 * v);
    }

    #[test]
    fn v_number_vanishes_with_na() {
        let spec = FiberSpec::from_na(490.0, 20.0, 1.49, 1e-6, 1540.0).unwrap();
        assert!(v_number(&spec, 1540.0).unwrap() < 3e-3);
    }

    #[test]
    fn non_physical_spec_rejected() {
        let mut spec = FiberSpec::<f64>::default();
        spec.n_core = spec.n_clad;
        assert!(matches!(v_number(&spec, 1540.0), Err(Error::InvalidSpec(_))));
        spec.n_core = 1.3;
        assert!(matches!(v_number(&spec, 1540.0), Err(Error::InvalidSpec(_))));
        assert!(v_number(&FiberSpec::<f64>::default(), 0.0).is_err());
    }

    #[test]
    fn single_mode_below_lp11_cutoff() {
        let b = solve_lp_modes(&spec_with_v(2.0), 1000.0, 50).unwrap();
        assert_eq!(b.labels, vec![ModeLabel::new(0, 1, Orientation::Cos)]);
    }

    #[test]
    fn v5_supports_six_modes() {
        let b = solve_lp_modes(&spec_with_v(5.0), 1000.0, 50).unwrap();
        let names: Vec<String> = b.labels.iter().map(|l| l.to_string()).collect();
        assert_eq!(names, ["LP0,1", "LP1,1c", "LP1,1s", "LP2,1c", "LP2,1s", "LP0,2"]);
    }

    #[test]
    fn betas_are_guided_and_ordered() {
        let spec = FiberSpec::<f64>::default();
        let b = solve_lp_modes(&spec, 1540.0, 100).unwrap();
        assert_eq!(b.len(), 100);
        let k0 = b.k0();
        for (i, &beta) in b.betas.iter().enumerate() {
            assert!(beta > spec.n_clad * k0 && beta < spec.n_core * k0, "mode {i}");
        }
        for pair in b.betas.windows(2) {
            assert!(pair[1] <= pair[0]);
        }
        // distinct roots strictly decrease
        let mut distinct: Vec<f64> = b.betas.clone();
        distinct.dedup();
        for pair in distinct.windows(2) {
            assert!(pair[1] < pair[0]);
        }
    }

    #[test]
    fn every_beta_moves_with_wavelength() {
        let spec = FiberSpec::<f64>::default();
        let a = solve_lp_modes(&spec, 1540.0, 60).unwrap();
        let b = solve_for_labels(&spec, 1541.0, &a.labels).unwrap();
        for (x, y) in a.betas.iter().zip(&b.betas) {
            assert!(x != y);
        }
    }

    #[test]
    fn roots_satisfy_characteristic_equation() {
        let spec = spec_with_v(12.0);
        let b = solve_lp_modes(&spec, 1000.0, 200).unwrap();
        for (i, lb) in b.labels.iter().enumerate() {
            let l = lb.l as usize;
            let u = b.u[i];
            // sign change across the refined root
            let d = 1e-7 * u;
            assert!(characteristic(l, u - d, b.v) < 0.0 && characteristic(l, u + d, b.v) > 0.0, "{lb}");
        }
    }

    #[test]
    fn truncation_keeps_highest_betas() {
        let spec = spec_with_v(15.0);
        let all = solve_lp_modes(&spec, 1000.0, 10_000).unwrap();
        let some = solve_lp_modes(&spec, 1000.0, 17).unwrap();
        assert_eq!(some.labels[..], all.labels[..17]);
    }

    #[test]
    fn unknown_label_is_not_guided() {
        let spec = spec_with_v(5.0);
        let err = solve_for_labels(&spec, 1000.0, &[ModeLabel::new(0, 3, Orientation::Cos)]);
        assert!(matches!(err, Err(Error::NotGuided { .. })));
    }

    fn sampled(max_modes: usize, grid: usize) -> ModeBasis<f64> {
        let spec = FiberSpec::<f64>::default();
        let b = solve_lp_modes(&spec, 1540.0, max_modes).unwrap();
        sample_profiles(&b, grid, 2.2 * spec.core_radius_um).unwrap()
    }

    #[test]
    fn fundamental_profile_is_inversion_symmetric() {
        let b = sampled(20, 64);
        let prof = b.profiles().unwrap();
        let g = prof.grid.size;
        let lp01 = prof.mode(0);
        for iy in 0..g {
            for ix in 0..g {
                let a = lp01[iy * g + ix];
                let c = lp01[(g - 1 - iy) * g + (g - 1 - ix)];
                assert!((a - c).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn profiles_orthonormal_on_grid() {
        let b = sampled(100, 128);
        assert!(b.profiles().unwrap().orthonormality_error() < 1e-6);
    }

    #[test]
    fn field_is_continuous_and_smooth_at_interface() {
        let spec = spec_with_v(9.0);
        let b = solve_lp_modes(&spec, 1000.0, 30).unwrap();
        let a = spec.core_radius_um;
        for m in 0..b.len() {
            let l = b.labels[m].l as usize;
            let (u, w) = (b.u[m], b.w[m]);
            let inner = bessel_j(l, u);
            let outer = bessel_j(l, u) * (ln_bessel_k(l, w) - ln_bessel_k(l, w)).exp();
            assert!((inner - outer).abs() <= 1e-9 * inner.abs().max(1e-300));
            // one-sided slopes agree: that is the characteristic equation
            let h = 1e-6;
            let d_in = (radial(l, u, w, 1.0) - radial(l, u, w, 1.0 - h)) / h;
            let d_out = (radial(l, u, w, 1.0 + h) - radial(l, u, w, 1.0)) / h;
            let scale = d_in.abs().max(inner.abs());
            assert!((d_in - d_out).abs() < 1e-4 * scale, "{}: {d_in} vs {d_out}", b.labels[m]);
        }
        let _ = a;
    }

    #[test]
    fn coarse_grid_rejected() {
        let spec = FiberSpec::<f64>::default();
        let b = solve_lp_modes(&spec, 1540.0, 100).unwrap();
        assert!(matches!(sample_profiles(&b, 16, 1078.0), Err(Error::Resolution(_))));
        let many = solve_lp_modes(&spec, 1540.0, 1000).unwrap();
        assert!(matches!(sample_profiles(&many, 32, 1078.0), Err(Error::Resolution(_))));
        assert!(sample_profiles(&b, 64, 900.0).is_err());
    }

    #[test]
    fn family_reuses_labels_across_wavelengths() {
        let fam = ModeFamily::new(FiberSpec::<f64>::default(), 30, Grid { size: 64, extent_um: 1078.0 }).unwrap();
        let a = fam.basis(1540.0).unwrap();
        let b = fam.basis(1570.0).unwrap();
        assert_eq!(a.labels, b.labels);
        assert!(Arc::ptr_eq(&b, &fam.basis(1570.0).unwrap()));
        assert!(b.profiles().unwrap().orthonormality_error() < 1e-9);
    }

    #[test]
    fn f32_solver_agrees_with_f64() {
        let s64 = FiberSpec::<f64>::default();
        let s32 = FiberSpec::<f32>::default();
        let a = solve_lp_modes(&s64, 1540.0, 12).unwrap();
        let b = solve_lp_modes(&s32, 1540.0, 12).unwrap();
        assert_eq!(a.labels, b.labels);
        for (x, y) in a.u.iter().zip(&b.u) {
            assert!((x - *y as f64).abs() < 1e-4 * x);
        }
    }
}
