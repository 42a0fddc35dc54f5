//! Monte Carlo properties of the device model at the default scale
//! (M = 100 modes, 128 x 128 detector, 200 mm fiber).

use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use speckle_puf::config::device_seed;
use speckle_puf::device::{
    core_pearson, new_device, pearson, Challenge, DetectorSpec, DeviceParams, PufDevice, Quantization, SpeckleImage,
};
use speckle_puf::modes::{FiberSpec, Grid, ModeFamily};

fn family() -> &'static Arc<ModeFamily<f64>> {
    static F: OnceLock<Arc<ModeFamily<f64>>> = OnceLock::new();
    F.get_or_init(|| {
        let spec = FiberSpec::default();
        Arc::new(ModeFamily::new(spec, 100, Grid { size: 128, extent_um: 2.2 * spec.core_radius_um }).unwrap())
    })
}

fn device(i: usize) -> PufDevice<f64> {
    new_device(Arc::clone(family()), &DeviceParams::default(), device_seed(11, i)).unwrap()
}

fn clean(dev: &PufDevice<f64>, wl: f64) -> SpeckleImage<f64> {
    dev.respond(&Challenge::plane_wave(wl), &DetectorSpec::noiseless(128)).unwrap()
}

fn core_rho(a: &SpeckleImage<f64>, b: &SpeckleImage<f64>) -> f64 {
    core_pearson(family().grid(), family().spec().core_radius_um, a, b)
}

#[test]
fn independent_devices_are_uncorrelated_on_average() {
    let rhos: Vec<f64> = (0..50)
        .into_par_iter()
        .map(|p| core_rho(&clean(&device(2 * p), 1550.0), &clean(&device(2 * p + 1), 1550.0)))
        .collect();
    let mean = rhos.iter().sum::<f64>() / rhos.len() as f64;
    assert!(mean.abs() < 0.1, "mean core correlation {mean}");
}

#[test]
fn rough_facet_excites_most_modes() {
    let m = family().mode_count() as f64;
    for i in 0..20 {
        let c = device(i).excite(&Challenge::plane_wave(1550.0)).unwrap();
        let lit = c.iter().filter(|z| z.norm_sqr() > 1.0 / (10.0 * m)).count() as f64;
        assert!(lit / m >= 0.5, "device {i}: {lit} of {m} modes carry power");
    }
}

#[test]
fn pixel_noise_matches_the_snr_definition() {
    let dev = device(0);
    let c = dev.propagate(&dev.excite(&Challenge::plane_wave(1550.0)).unwrap(), 1550.0).unwrap();
    let base = dev.render_speckle(&c, 1550.0, &DetectorSpec::noiseless(128)).unwrap();
    let det = DetectorSpec { grid_size: 128, snr_db: Some(20.0), noise_seed: 0, quantization: Quantization::None };
    let sigma = det.sigma(base.mean());
    // pixels bright enough that clamping at zero never triggers
    let bright: Vec<usize> = (0..base.intensities.len()).filter(|&p| base.intensities[p] > 6.0 * sigma).collect();
    assert!(bright.len() > 500);
    let sums: Vec<(f64, f64)> = (0..1000u64)
        .into_par_iter()
        .map(|r| {
            let img = dev.render_speckle(&c, 1550.0, &DetectorSpec { noise_seed: r, ..det }).unwrap();
            bright.iter().fold((0.0, 0.0), |(s, q), &p| {
                let d = img.intensities[p] - base.intensities[p];
                (s + d, q + d * d)
            })
        })
        .collect();
    let n = 1000.0 * bright.len() as f64;
    let (s, q) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let std = (q / n - (s / n).powi(2)).sqrt();
    assert!((std / sigma - 1.0).abs() < 0.05, "empirical {std} vs {sigma}");
}

#[test]
fn remeasurement_at_40_db_differs_only_by_noise() {
    let dev = device(3);
    let det = |n| DetectorSpec { grid_size: 128, snr_db: Some(40.0), noise_seed: n, quantization: Quantization::None };
    let ch = Challenge::plane_wave(1550.0);
    let a = dev.respond(&ch, &det(1)).unwrap();
    let b = dev.respond(&ch, &det(2)).unwrap();
    assert_ne!(a.intensities, b.intensities);
    assert!(pearson(&a.intensities, &b.intensities) > 0.99);
}

#[test]
fn larger_detuning_decorrelates_more() {
    let pairs: Vec<(f64, f64)> = (0..20)
        .into_par_iter()
        .map(|i| {
            let dev = device(i);
            let base = clean(&dev, 1540.0);
            (core_rho(&base, &clean(&dev, 1550.0)), core_rho(&base, &clean(&dev, 1570.0)))
        })
        .collect();
    let r10 = pairs.iter().map(|p| p.0).sum::<f64>() / 20.0;
    let r30 = pairs.iter().map(|p| p.1).sum::<f64>() / 20.0;
    assert!(r30 < r10, "rho(30 nm) {r30} vs rho(10 nm) {r10}");
}

#[test]
fn perturbing_one_defect_plane_changes_the_speckle() {
    for i in 0..5 {
        let dev = device(i);
        let moved = dev.with_perturbed_plane(i % dev.defect_planes().len(), 0.05).unwrap();
        let rho = core_rho(&clean(&dev, 1550.0), &clean(&moved, 1550.0));
        assert!(rho < 0.9, "device {i}: rho {rho}");
    }
}
