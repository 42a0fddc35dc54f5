//! Brute-force check of the LP mode solver.
//!
//! Bessel functions here come from their integral representations evaluated
//! by the trapezoidal rule, not from the library's recurrences, and roots are
//! located by a dense sign scan of the pole-free characteristic function
//! `G(u) = u J_{l+1}(u) K_l(w) - w K_{l+1}(w) J_l(u)`.

use std::f64::consts::PI;

use speckle_puf::modes::{solve_lp_modes, FiberSpec};

/// `J_n(x) = (1/pi) int_0^pi cos(n t - x sin t) dt`
fn j_quad(n: usize, x: f64) -> f64 {
    let steps = 256;
    let h = PI / steps as f64;
    let mut s = 0.0;
    for k in 0..=steps {
        let t = k as f64 * h;
        let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
        s += w * (n as f64 * t - x * t.sin()).cos();
    }
    s * h / PI
}

/// `e^x K_n(x) = int_0^inf exp(-x (cosh t - 1)) cosh(n t) dt`
fn kscaled_quad(n: usize, x: f64) -> f64 {
    let h: f64 = 0.01;
    let mut s = 0.5;
    let mut t = h;
    loop {
        let term = (-x * (t.cosh() - 1.0) + n as f64 * t).exp() * 0.5 * (1.0 + (-2.0 * n as f64 * t).exp());
        s += term;
        if term < 1e-18 * s {
            break;
        }
        t += h;
    }
    s * h
}

fn g(l: usize, u: f64, v: f64) -> f64 {
    let w = (v * v - u * u).sqrt();
    u * j_quad(l + 1, u) * kscaled_quad(l, w) - w * kscaled_quad(l + 1, w) * j_quad(l, u)
}

fn oracle_roots(l: usize, v: f64, step: f64) -> Vec<f64> {
    let mut roots = Vec::new();
    // guided roots with l >= 1 lie above the first zero of J_{l-1}, which exceeds l - 1;
    // below that the quadrature's absolute error swamps J_l(u)
    let mut u0 = (l as f64 - 1.0).max(step / 2.0);
    let mut g0 = g(l, u0, v);
    while u0 + step < v {
        let u1 = u0 + step;
        let g1 = g(l, u1, v);
        if g0.signum() != g1.signum() {
            roots.push(0.5 * (u0 + u1));
        }
        u0 = u1;
        g0 = g1;
    }
    roots
}

fn spec_with_v(v: f64) -> FiberSpec<f64> {
    FiberSpec::from_na(1.0, 20.0, 1.45, v / (2.0 * PI), 1000.0).unwrap()
}

#[test]
fn quadrature_oracle_is_itself_sane() {
    // J_0 first zero and a K value cross-checked against tabulated constants
    assert!(j_quad(0, 2.404_825_557_695_773).abs() < 1e-12);
    assert!((kscaled_quad(0, 1.0) - 1.144_463_079_806_895_6).abs() < 1e-10);
}

#[test]
fn root_counts_and_locations_match_dense_scan() {
    let step = 4e-3;
    for &v in &[2.0, 5.0, 8.3, 13.7, 19.2] {
        let spec = spec_with_v(v);
        let basis = solve_lp_modes(&spec, 1000.0, 100_000).unwrap();
        assert!((basis.v - v).abs() < 1e-9);
        let max_l = basis.labels.iter().map(|l| l.l).max().unwrap() as usize;
        // one l beyond the last guided order must have no roots
        for l in 0..=max_l + 1 {
            let expected = oracle_roots(l, v, step);
            let mut solver: Vec<f64> = basis
                .labels
                .iter()
                .zip(&basis.u)
                .filter(|(lb, _)| lb.l as usize == l && lb.orientation == speckle_puf::modes::Orientation::Cos)
                .map(|(_, &u)| u)
                .collect();
            solver.sort_by(f64::total_cmp);
            assert_eq!(solver.len(), expected.len(), "V={v} l={l}: {solver:?} vs {expected:?}");
            for (a, b) in solver.iter().zip(&expected) {
                assert!((a - b).abs() <= step, "V={v} l={l}: solver {a} oracle {b}");
            }
        }
    }
}

#[test]
fn v5_label_set() {
    let basis = solve_lp_modes(&spec_with_v(5.0), 1000.0, 100).unwrap();
    assert_eq!(basis.len(), 6);
    let total: usize = (0..4).map(|l| oracle_roots(l, 5.0, 4e-3).len() * if l == 0 { 1 } else { 2 }).sum();
    assert_eq!(total, 6);
}
