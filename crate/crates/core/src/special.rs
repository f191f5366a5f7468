//! Special functions: Gamma wrappers, ball volumes, the modified Bessel
//! function of the second kind, a complex log-Gamma and the complete
//! elliptic integral of the first kind.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::quadrature;

/// Euler's Gamma function.
pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

/// Natural logarithm of Gamma for positive arguments.
pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// Volume of the Euclidean unit ball in dimension `n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    let h = n as f64 / 2.0;
    PI.powf(h) / gamma(h + 1.0)
}

/// Surface area of the unit sphere `S^{n-1}` in dimension `n`.
pub fn unit_sphere_area(n: usize) -> f64 {
    n as f64 * unit_ball_volume(n)
}

// Coefficients of 1/Gamma(z) = sum_{k>=1} C[k-1] z^k.
const RECIP_GAMMA: [f64; 26] = [
    1.0,
    0.577_215_664_901_532_9,
    -0.655_878_071_520_253_8,
    -0.042_002_635_034_095_2,
    0.166_538_611_382_291_5,
    -0.042_197_734_555_544_3,
    -0.009_621_971_527_877_0,
    0.007_218_943_246_663_0,
    -0.001_165_167_591_859_1,
    -0.000_215_241_674_114_9,
    0.000_128_050_282_388_2,
    -0.000_020_134_854_780_7,
    -0.000_001_250_493_482_1,
    0.000_001_133_027_232_0,
    -0.000_000_205_633_841_7,
    0.000_000_006_116_095_0,
    0.000_000_005_002_007_5,
    -0.000_000_001_181_274_6,
    0.000_000_000_104_342_7,
    0.000_000_000_007_782_3,
    -0.000_000_000_003_696_8,
    0.000_000_000_000_510_0,
    -0.000_000_000_000_020_6,
    -0.000_000_000_000_005_4,
    0.000_000_000_000_001_4,
    0.000_000_000_000_000_1,
];

/// Returns `(gam1, gam2)` for `|mu| <= 1/2`, where
/// `gam1 = (1/G(1-mu) - 1/G(1+mu)) / (2 mu)` and
/// `gam2 = (1/G(1-mu) + 1/G(1+mu)) / 2`.
fn temme_gammas(mu: f64) -> (f64, f64) {
    let mu2 = mu * mu;
    let mut gam1 = 0.0;
    let mut gam2 = 0.0;
    let mut pw = 1.0;
    // 1/G(1+x) = sum_k RECIP_GAMMA[k] x^k; split into even and odd powers.
    for pair in RECIP_GAMMA.chunks(2) {
        gam2 += pair[0] * pw;
        if pair.len() > 1 {
            gam1 -= pair[1] * pw;
        }
        pw *= mu2;
    }
    (gam1, gam2)
}

/// Temme's series for `(K_mu(x), K_{mu+1}(x))`, valid for `|mu| <= 1/2`, `0 < x <= 2`.
fn temme_small(mu: f64, x: f64) -> (f64, f64) {
    let x2 = 0.5 * x;
    let pimu = PI * mu;
    let fact = if pimu.abs() < 1e-15 { 1.0 } else { pimu / pimu.sin() };
    let d = -x2.ln();
    let e = mu * d;
    let fact2 = if e.abs() < 1e-15 { 1.0 } else { e.sinh() / e };
    let (gam1, gam2) = temme_gammas(mu);
    let gampl = gam2 - mu * gam1;
    let gammi = gam2 + mu * gam1;
    let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
    let mut sum = ff;
    let ee = e.exp();
    let mut p = 0.5 * ee / gampl;
    let mut q = 0.5 / (ee * gammi);
    let mut c = 1.0;
    let dd = x2 * x2;
    let mut sum1 = p;
    for i in 1..500 {
        let fi = i as f64;
        ff = (fi * ff + p + q) / (fi * fi - mu * mu);
        c *= dd / fi;
        p /= fi - mu;
        q /= fi + mu;
        let del = c * ff;
        sum += del;
        let del1 = c * (p - fi * ff);
        sum1 += del1;
        if del.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    (sum, sum1 * 2.0 / x)
}

/// Optimally truncated large-argument expansion of `K_nu(x) e^x sqrt(2x/pi)`.
/// Returns `None` when the smallest term exceeds the relative target.
fn asymptotic_scaled(nu: f64, x: f64, target: f64) -> Option<f64> {
    let mu4 = 4.0 * nu * nu;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        let fk = k as f64;
        let odd = 2.0 * fk - 1.0;
        let next = term * (mu4 - odd * odd) / (fk * 8.0 * x);
        if next == 0.0 {
            return Some(sum);
        }
        if next.abs() >= term.abs() {
            return None;
        }
        term = next;
        sum += term;
        if term.abs() < target * sum.abs() {
            return Some(sum);
        }
    }
    None
}

/// `K_nu(x) e^x` from the integral representation `int_0^inf e^{-x(cosh t - 1)} cosh(nu t) dt`.
fn integral_scaled(nu: f64, x: f64) -> f64 {
    // The integrand is below 1e-300 once x (cosh t - 1) - nu t > 700.
    let mut upper: f64 = 1.0;
    while x * (upper.cosh() - 1.0) - nu * upper < 745.0 {
        upper *= 1.5;
    }
    let f = |t: f64| (-x * (t.cosh() - 1.0)).exp() * (nu * t).cosh();
    quadrature::adaptive(f, 0.0, upper, 1e-15, 1e-300).value
}

/// Modified Bessel function of the second kind `K_nu(x)` for real order and `x > 0`.
///
/// Uses Temme's series below `x = 2` and, above, the large-argument expansion
/// whenever its optimally truncated error is below `1e-14`; otherwise the
/// integral representation.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    assert!(x > 0.0, "bessel_k requires x > 0");
    let nu = nu.abs();
    if x < 2.0 {
        let nl = (nu + 0.5).floor();
        let mu = nu - nl;
        let (mut k_mu, mut k_mu1) = temme_small(mu, x);
        for i in 1..=(nl as usize) {
            let next = (mu + i as f64) * (2.0 / x) * k_mu1 + k_mu;
            k_mu = k_mu1;
            k_mu1 = next;
        }
        k_mu
    } else {
        let pref = (PI / (2.0 * x)).sqrt() * (-x).exp();
        match asymptotic_scaled(nu, x, 1e-14) {
            Some(s) => pref * s,
            None => integral_scaled(nu, x) * (-x).exp(),
        }
    }
}

/// Complex `ln Gamma(z)` for `Re z > 0` (branch irrelevant under exponentiation).
pub fn ln_gamma_complex(z: Complex64) -> Complex64 {
    assert!(z.re > 0.0, "ln_gamma_complex requires Re z > 0");
    let mut shift = Complex64::new(0.0, 0.0);
    let mut w = z;
    while w.norm() < 15.0 {
        shift += w.ln();
        w += 1.0;
    }
    // Stirling series with Bernoulli numbers B_2..B_16.
    const B: [f64; 8] = [
        1.0 / 6.0,
        -1.0 / 30.0,
        1.0 / 42.0,
        -1.0 / 30.0,
        5.0 / 66.0,
        -691.0 / 2730.0,
        7.0 / 6.0,
        -3617.0 / 510.0,
    ];
    let mut series = (w - 0.5) * w.ln() - w + 0.5 * (2.0 * PI).ln();
    let w2 = w * w;
    let mut wp = w;
    for (k, b) in B.iter().enumerate() {
        let kk = (k + 1) as f64;
        series += *b / (2.0 * kk * (2.0 * kk - 1.0)) / wp;
        wp *= w2;
    }
    series - shift
}

/// Arithmetic-geometric mean.
pub fn agm(mut a: f64, mut b: f64) -> f64 {
    for _ in 0..64 {
        let an = 0.5 * (a + b);
        let bn = (a * b).sqrt();
        if (an - bn).abs() <= 1e-16 * an {
            return an;
        }
        a = an;
        b = bn;
    }
    a
}

/// Complete elliptic integral of the first kind `K(k)` with modulus `k in [0,1)`.
pub fn elliptic_k(k: f64) -> f64 {
    assert!((0.0..1.0).contains(&k), "modulus must lie in [0,1)");
    PI / (2.0 * agm(1.0, (1.0 - k * k).sqrt()))
}

/// Mean of `|x - y|^{-1}` over the circle `|y| = rho` in the plane, where `|x| = s`.
pub fn circle_mean_inverse_distance(s: f64, rho: f64) -> f64 {
    let k = 2.0 * (rho * s).sqrt() / (rho + s);
    2.0 * elliptic_k(k) / (PI * (rho + s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn half_order_closed_form_both_regimes() {
        for &x in &[0.01, 0.3, 1.0, 1.99, 2.0, 3.7, 10.0, 40.0] {
            let exact = (PI / (2.0 * x)).sqrt() * (-x).exp();
            assert!(rel(bessel_k(0.5, x), exact) < 1e-12, "x={x}");
        }
    }

    #[test]
    fn three_halves_closed_form() {
        for &x in &[0.05, 1.5, 2.5, 8.0] {
            let exact = (PI / (2.0 * x)).sqrt() * (-x).exp() * (1.0 + 1.0 / x);
            assert!(rel(bessel_k(1.5, x), exact) < 1e-12, "x={x}");
        }
    }

    #[test]
    fn tabulated_integer_orders() {
        assert!(rel(bessel_k(0.0, 1.0), 0.421_024_438_240_708_34) < 1e-12);
        assert!(rel(bessel_k(1.0, 1.0), 0.601_907_230_197_234_6) < 1e-12);
        assert!(rel(bessel_k(0.0, 2.0), 0.113_893_872_749_533_4) < 1e-11);
        assert!(rel(bessel_k(1.0, 3.0), 0.040_156_431_128_194_18) < 1e-11);
    }

    #[test]
    fn regimes_agree_with_integral_representation() {
        for &nu in &[0.0, 0.3, 1.0, 2.7, 4.1] {
            for &x in &[0.4, 1.9, 2.1, 5.0, 15.0] {
                let oracle = integral_scaled(nu, x) * (-x).exp();
                assert!(rel(bessel_k(nu, x), oracle) < 1e-11, "nu={nu} x={x}");
            }
        }
    }

    #[test]
    fn positive_and_decreasing() {
        let mut prev = f64::INFINITY;
        for i in 1..200 {
            let z = 0.05 * i as f64;
            let v = bessel_k(0.7, z);
            assert!(v > 0.0 && v < prev);
            prev = v;
        }
    }

    #[test]
    fn complex_ln_gamma_matches_real() {
        for &x in &[0.3, 1.0, 2.5, 7.0, 30.0] {
            let z = ln_gamma_complex(Complex64::new(x, 0.0));
            assert!((z.re - ln_gamma(x)).abs() < 1e-12);
        }
        // |Gamma(1/2 + iy)|^2 = pi / cosh(pi y)
        let y: f64 = 3.0;
        let z = ln_gamma_complex(Complex64::new(0.5, y));
        assert!((2.0 * z.re - (PI / (PI * y).cosh()).ln()).abs() < 1e-11);
    }

    #[test]
    fn elliptic_known_value() {
        assert!(rel(elliptic_k(0.0), PI / 2.0) < 1e-15);
        // K(1/sqrt 2) = Gamma(1/4)^2 / (4 sqrt(pi))
        let exact = gamma(0.25).powi(2) / (4.0 * PI.sqrt());
        assert!(rel(elliptic_k(0.5f64.sqrt()), exact) < 1e-13);
    }

    #[test]
    fn ball_volumes() {
        assert!(rel(unit_ball_volume(2), PI) < 1e-14);
        assert!(rel(unit_ball_volume(3), 4.0 * PI / 3.0) < 1e-14);
        assert!(rel(unit_ball_volume(4), PI * PI / 2.0) < 1e-14);
    }
}
