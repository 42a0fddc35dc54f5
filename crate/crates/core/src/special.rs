//! Special functions.
//!
//! Integer-order Bessel functions for the mode solver (generic over the
//! scalar type) and the incomplete gamma / complementary error functions
//! used by the randomness tests (`f64` only).

use crate::scalar::Real;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `J_0(x) ..= J_{n_max}(x)` by Miller's backward recurrence, normalised with
/// `J_0 + 2 sum_k J_{2k} = 1`.
pub fn bessel_j_all<T: Real>(n_max: usize, x: T) -> Vec<T> {
    let mut out = vec![T::zero(); n_max + 1];
    if x == T::zero() {
        out[0] = T::one();
        return out;
    }
    let ax = x.abs();
    if ax < T::lit(1e-8) {
        // two-term series, exact to O(x^4) relative
        let h = ax / T::lit(2.0);
        let mut lead = T::one();
        for (n, slot) in out.iter_mut().enumerate() {
            if n > 0 {
                lead = lead * h / T::of(n);
            }
            *slot = lead * (T::one() - h * h / T::of(n + 1));
        }
    } else {
        miller(&mut out, ax);
    }
    if x < T::zero() {
        for (n, v) in out.iter_mut().enumerate() {
            if n % 2 == 1 {
                *v = -*v;
            }
        }
    }
    out
}

fn miller<T: Real>(out: &mut [T], x: T) {
    let n_max = out.len() - 1;
    let big = T::lit(1e10);
    let small = T::lit(1e-10);
    let xf = x.f64();
    let reach = (n_max as f64).max(xf.ceil());
    let mut m = (reach + 20.0 + (40.0 * reach).sqrt()) as usize;
    m += m % 2;

    let two_over_x = T::lit(2.0) / x;
    let mut above = T::zero(); // J_{j+1}
    let mut cur = T::one(); // J_j, unnormalised, starting at j = m
    let mut sum = T::zero();
    for j in (1..=m).rev() {
        let next = T::of(j) * two_over_x * cur - above; // J_{j-1}
        above = cur;
        cur = next;
        if cur.abs() > big {
            cur *= small;
            above *= small;
            sum *= small;
            for v in out.iter_mut() {
                *v *= small;
            }
        }
        let order = j - 1;
        if order > 0 && order % 2 == 0 {
            sum += cur;
        }
        if order <= n_max {
            out[order] = cur;
        }
    }
    let norm = T::lit(2.0) * sum + cur;
    for v in out.iter_mut() {
        *v /= norm;
    }
}

/// `J_n(x)` for integer `n >= 0`.
pub fn bessel_j<T: Real>(n: usize, x: T) -> T {
    bessel_j_all(n, x)[n]
}

/// Exponentially scaled `(e^x K_0(x), e^x K_1(x))` for `x > 0`.
pub fn bessel_k01_scaled<T: Real>(x: T) -> (T, T) {
    assert!(x > T::zero(), "K_n needs x > 0");
    if x <= T::lit(2.0) {
        k01_series(x)
    } else {
        k01_steed(x)
    }
}

fn k01_series<T: Real>(x: T) -> (T, T) {
    let gamma = T::lit(EULER_GAMMA);
    let q = x * x / T::lit(4.0);
    let lnh = (x / T::lit(2.0)).ln();
    let eps = T::eps();

    // I0, I1 and the digamma-weighted tails
    let mut i0 = T::zero();
    let mut i1s = T::zero();
    let mut k0_tail = T::zero();
    let mut k1_tail = T::zero();
    let mut t0 = T::one(); // q^k / (k!)^2
    let mut t1 = T::one(); // q^k / (k! (k+1)!)
    let mut harmonic = T::zero(); // H_k
    for k in 0..200usize {
        if k > 0 {
            let kk = T::of(k);
            t0 = t0 * q / (kk * kk);
            t1 = t1 * q / (kk * (kk + T::one()));
            harmonic += T::one() / kk;
        }
        let h_next = harmonic + T::one() / T::of(k + 1);
        i0 += t0;
        i1s += t1;
        k0_tail += t0 * harmonic;
        k1_tail += t1 * (harmonic + h_next - T::lit(2.0) * gamma);
        if t0 < eps * i0 && t1 < eps * i1s {
            break;
        }
    }
    let i1 = x / T::lit(2.0) * i1s;
    let k0 = -(lnh + gamma) * i0 + k0_tail;
    let k1 = T::one() / x + lnh * i1 - x / T::lit(4.0) * k1_tail;
    let s = x.exp();
    (k0 * s, k1 * s)
}

// Steed's continued fraction (Temme's normalisation) for order zero.
fn k01_steed<T: Real>(x: T) -> (T, T) {
    let two = T::lit(2.0);
    let mut b = two * (T::one() + x);
    let mut d = T::one() / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = T::zero();
    let mut q2 = T::one();
    let a1 = T::lit(0.25);
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = T::one() + q * delh;
    for i in 2..10_000usize {
        a -= T::of(2 * (i - 1));
        c = -a * c / T::of(i);
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += two;
        d = T::one() / (b + a * d);
        delh = (b * d - T::one()) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < T::eps() {
            break;
        }
    }
    h *= a1;
    let k0 = (T::pi() / (two * x)).sqrt() / s;
    let k1 = k0 * (x + T::lit(0.5) - h) / x;
    (k0, k1)
}

/// `K_{n+1}(x) / K_n(x)` for `x > 0`, by upward recurrence on the ratio.
pub fn bessel_k_ratio<T: Real>(n: usize, x: T) -> T {
    let (k0, k1) = bessel_k01_scaled(x);
    let mut r = k1 / k0;
    for k in 1..=n {
        r = T::one() / r + T::of(2 * k) / x;
    }
    r
}

/// `ln K_n(x)` for `x > 0`; finite where `K_n` itself would under- or overflow.
pub fn ln_bessel_k<T: Real>(n: usize, x: T) -> T {
    let (k0, k1) = bessel_k01_scaled(x);
    let mut acc = k0.ln() - x;
    let mut r = k1 / k0;
    for k in 0..n {
        if k > 0 {
            r = T::one() / r + T::of(2 * k) / x;
        }
        acc += r.ln();
    }
    acc
}

/// `ln Gamma(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
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
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularised lower incomplete gamma `P(a, x)` by its power series.
pub fn gamma_p_series(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..100_000 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Regularised upper incomplete gamma `Q(a, x)` by Lentz's continued fraction.
pub fn gamma_q_fraction(a: f64, x: f64) -> f64 {
    const FPMIN: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..100_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-17 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Regularised upper incomplete gamma `Q(a, x) = Gamma(a, x) / Gamma(a)`.
pub fn igamc(a: f64, x: f64) -> f64 {
    assert!(a > 0.0, "igamc needs a > 0");
    if x <= 0.0 {
        1.0
    } else if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_fraction(a, x)
    }
}

/// Complementary error function via `erfc(x) = Q(1/2, x^2)`.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        2.0 - erfc(-x)
    } else if x * x < 1.5 {
        1.0 - gamma_p_series(0.5, x * x)
    } else {
        gamma_q_fraction(0.5, x * x)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    // Reference values from scipy.special (jv, kve, gammaincc, erfc).
    const J_REF: &[(usize, f64, f64)] = &[
        (0, 0.5, 0.938469807240813),
        (1, 3.0, 0.33905895852593626),
        (2, 7.5, -0.23027341052579028),
        (5, 1.0, 0.00024975773021123466),
        (10, 25.0, -0.07517984394852324),
        (30, 12.0, 2.5522590430344187e-10),
        (3, 60.0, -0.040396711521655165),
        (0, 95.3, 0.07886772569312558),
    ];

    const KVE_REF: &[(usize, f64, f64)] = &[
        (0, 0.1, 2.682326102262895),
        (1, 0.1, 10.890182683049698),
        (0, 1.9, 0.8614506167517544),
        (1, 1.9, 1.0674709298145704),
        (0, 2.1, 0.8230171525316622),
        (1, 2.1, 1.0023680527405792),
        (0, 10.0, 0.39163193443659866),
        (1, 10.0, 0.4107665705957888),
        (0, 1000.0, 0.03962832160075422),
        (1, 1000.0, 0.03964813081296021),
        (5, 3.0, 18.835686316330943),
        (20, 50.0, 8.845876936934712),
    ];

    #[test]
    fn bessel_j_matches_reference() {
        for &(n, x, want) in J_REF {
            let got = bessel_j(n, x);
            assert!(rel(got, want) < 1e-12, "J_{n}({x}) = {got}, want {want}");
        }
        // near the first zero of J0 the absolute error is what counts
        assert!((bessel_j(0, 2.4048f64) - 1.3268284301217434e-05).abs() < 1e-15);
    }

    #[test]
    fn bessel_j_small_argument_and_parity() {
        let v = bessel_j_all(3, 1e-9f64);
        assert!((v[0] - 1.0).abs() < 1e-16);
        assert!(rel(v[1], 5e-10) < 1e-12);
        let p = bessel_j_all(4, 2.5f64);
        let m = bessel_j_all(4, -2.5f64);
        for n in 0..=4 {
            let s = if n % 2 == 0 { 1.0 } else { -1.0 };
            assert_eq!(m[n], s * p[n]);
        }
    }

    #[test]
    fn bessel_k_matches_reference() {
        for &(n, x, want) in KVE_REF {
            let got = (ln_bessel_k(n, x) + x).exp();
            assert!(rel(got, want) < 1e-12, "e^x K_{n}({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn k_branches_agree_at_switchover() {
        let below = k01_series(2.0f64);
        let above = k01_steed(2.0f64);
        assert!(rel(below.0, above.0) < 1e-13);
        assert!(rel(below.1, above.1) < 1e-13);
    }

    #[test]
    fn k_ratio_consistent_with_logs() {
        for &(n, x) in &[(0usize, 0.3f64), (4, 1.7), (12, 40.0), (30, 900.0)] {
            let r = bessel_k_ratio(n, x);
            let via_logs = (ln_bessel_k(n + 1, x) - ln_bessel_k(n, x)).exp();
            assert!(rel(r, via_logs) < 1e-12);
        }
    }

    #[test]
    fn f32_bessel_is_close() {
        let got = bessel_j(2, 7.5f32) as f64;
        assert!((got - -0.23027341052579028).abs() < 1e-6);
        let k = (ln_bessel_k(1, 10.0f32) + 10.0) as f64;
        assert!((k.exp() - 0.4107665705957888).abs() < 1e-5);
    }

    #[test]
    fn incomplete_gamma_matches_reference() {
        let refs = [
            (0.5, 0.3, 0.4385780260809997),
            (2.0, 1.5, 0.5578254003710748),
            (10.0, 12.0, 0.24239216167051245),
            (50.0, 40.0, 0.9296649333406051),
            (3.5, 0.01, 0.9999999914694195),
            (127.0, 140.0, 0.12595183622924672),
            (1.5, 8.0, 0.0011339842897853216),
        ];
        for (a, x, want) in refs {
            let got = igamc(a, x);
            assert!(rel(got, want) < 1e-10, "Q({a},{x}) = {got}, want {want}");
        }
    }

    #[test]
    fn series_and_fraction_agree() {
        // both routes are valid everywhere; they must meet in the overlap
        for &(a, x) in &[(1.0, 1.5), (5.0, 5.5), (20.0, 22.0), (0.5, 2.0)] {
            let p = gamma_p_series(a, x);
            let q = gamma_q_fraction(a, x);
            assert!((p + q - 1.0).abs() < 1e-13, "a={a} x={x}: P+Q = {}", p + q);
        }
    }

    #[test]
    fn erfc_matches_reference() {
        let refs = [
            (0.0, 1.0),
            (0.1, 0.8875370839817152),
            (0.5, 0.4795001221869535),
            (1.0, 0.15729920705028516),
            (2.5, 0.00040695201744495886),
            (5.0, 1.5374597944280347e-12),
            (10.0, 2.0884875837625446e-45),
            (26.0, 5.663192408856145e-296),
        ];
        for (x, want) in refs {
            let got = erfc(x);
            assert!(rel(got, want) < 1e-10, "erfc({x}) = {got}, want {want}");
        }
        assert!((erfc(-1.0) - (2.0 - 0.15729920705028516)).abs() < 1e-15);
    }
}
