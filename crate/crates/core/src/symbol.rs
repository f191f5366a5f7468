//! Polynomial symbols of constant-coefficient operators.
//!
//! A symbol is stored as a polynomial in ξ with complex coefficients. The
//! operator convention `p(ξ) = Σ a_k (2πiξ)^k` maps to ξ-coefficients
//! `a_k (2πi)^{|k|}`; [`PolySymbol::from_operator`] performs that conversion.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::kernel::riesz_constant;
use crate::quadrature;
use crate::special::{unit_ball_volume, unit_sphere_area};

/// One monomial `coeff · ξ^exps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub exps: Vec<u32>,
    pub coeff: Complex64,
}

impl Term {
    pub fn degree(&self) -> u32 {
        self.exps.iter().sum()
    }

    fn eval(&self, xi: &[f64]) -> Complex64 {
        self.coeff * self.exps.iter().zip(xi).map(|(e, x)| x.powi(*e as i32)).product::<f64>()
    }
}

/// A polynomial symbol in `n` variables of order `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolySymbol {
    pub n: usize,
    pub alpha: u32,
    pub terms: Vec<Term>,
}

impl PolySymbol {
    /// From operator coefficients `(k, a_k)` with `p(ξ) = Σ a_k (2πiξ)^k`.
    pub fn from_operator(n: usize, coefficients: &[(Vec<u32>, f64)]) -> Result<Self> {
        let terms = coefficients
            .iter()
            .map(|(k, a)| {
                let d = k.iter().sum::<u32>();
                let unit = Complex64::new(0.0, 2.0 * PI).powu(d);
                Term { exps: k.clone(), coeff: unit * *a }
            })
            .collect();
        Self::from_terms(n, terms)
    }

    /// From real ξ-monomial coefficients `(k, c_k)` with `p(ξ) = Σ c_k ξ^k`.
    pub fn from_xi(n: usize, coefficients: &[(Vec<u32>, f64)]) -> Result<Self> {
        let terms =
            coefficients.iter().map(|(k, c)| Term { exps: k.clone(), coeff: Complex64::new(*c, 0.0) }).collect();
        Self::from_terms(n, terms)
    }

    fn from_terms(n: usize, terms: Vec<Term>) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("n", "dimension must be positive"));
        }
        if terms.iter().any(|t| t.exps.len() != n) {
            return Err(Error::param("coefficients", format!("multi-indices must have {n} entries")));
        }
        let mut merged: Vec<Term> = Vec::new();
        for t in terms {
            match merged.iter_mut().find(|m| m.exps == t.exps) {
                Some(m) => m.coeff += t.coeff,
                None => merged.push(t),
            }
        }
        merged.retain(|t| t.coeff.norm() > 0.0);
        let alpha = merged.iter().map(Term::degree).max().ok_or_else(|| Error::param("coefficients", "zero symbol"))?;
        Ok(Self { n, alpha, terms: merged })
    }

    /// `|2πξ|^{2m}` in `R^n`, the symbol of `(-Δ)^m`.
    pub fn laplacian_power(n: usize, m: u32) -> Self {
        Self::radial(n, &[(m, 1.0)])
    }

    /// `Σ_j b_j |2πξ|^{2 m_j}` from pairs `(m_j, b_j)`.
    pub fn radial(n: usize, parts: &[(u32, f64)]) -> Self {
        let mut terms = Vec::new();
        for (m, b) in parts {
            let scale = b * (2.0 * PI).powi(2 * *m as i32);
            for (exps, mult) in compositions(n, *m) {
                terms.push(Term { exps: exps.iter().map(|e| 2 * e).collect(), coeff: Complex64::new(scale * mult, 0.0) });
            }
        }
        Self::from_terms(n, terms).expect("radial symbol has a nonzero term")
    }

    /// `1 + |2πξ|^2`, the symbol of `I - Δ`.
    pub fn helmholtz(n: usize) -> Self {
        Self::radial(n, &[(0, 1.0), (1, 1.0)])
    }

    /// `(ξ_8 - |ξ'|^2)^2 + ξ_8^4` in `R^8`.
    pub fn r8_counterexample() -> Self {
        let n = 8;
        let mut c: Vec<(Vec<u32>, f64)> = Vec::new();
        let unit = |i: usize, e: u32| {
            let mut k = vec![0u32; n];
            k[i] = e;
            k
        };
        c.push((unit(7, 2), 1.0));
        c.push((unit(7, 4), 1.0));
        for i in 0..7 {
            let mut k = unit(7, 1);
            k[i] = 2;
            c.push((k, -2.0));
        }
        // |ξ'|^4 = Σ ξ_i^4 + 2 Σ_{i<j} ξ_i^2 ξ_j^2.
        for i in 0..7 {
            c.push((unit(i, 4), 1.0));
            for j in i + 1..7 {
                let mut k = unit(i, 2);
                k[j] = 2;
                c.push((k, 2.0));
            }
        }
        Self::from_xi(n, &c).expect("fixed symbol")
    }

    pub fn eval(&self, xi: &[f64]) -> Complex64 {
        self.terms.iter().map(|t| t.eval(xi)).sum()
    }

    pub fn eval_principal(&self, xi: &[f64]) -> Complex64 {
        self.terms.iter().filter(|t| t.degree() == self.alpha).map(|t| t.eval(xi)).sum()
    }

    pub fn principal_part(&self) -> Self {
        Self { n: self.n, alpha: self.alpha, terms: self.terms.iter().filter(|t| t.degree() == self.alpha).cloned().collect() }
    }

    /// Only top-order coefficients are nonzero.
    pub fn is_homogeneous(&self) -> bool {
        self.terms.iter().all(|t| t.degree() == self.alpha)
    }

    /// Every monomial has even degree in each variable and real coefficient,
    /// so `p` is real and even.
    pub fn is_real_even(&self) -> bool {
        self.terms.iter().all(|t| t.coeff.im == 0.0 && t.exps.iter().all(|e| e % 2 == 0))
    }

    /// `p(ξ)` depends only on `|ξ|` (checked on quasi-random directions).
    pub fn radial_coefficients(&self) -> Option<Vec<f64>> {
        if !self.is_real_even() {
            return None;
        }
        // Radial even polynomials are Σ b_m |ξ|^{2m}; read b_m on the e_1 axis and verify.
        let mut b = vec![0.0; self.alpha as usize / 2 + 1];
        for t in &self.terms {
            if t.exps[1..].iter().all(|e| *e == 0) {
                b[t.exps[0] as usize / 2] = t.coeff.re;
            }
        }
        let dirs = halton_sphere(self.n, 64);
        for r in [0.3f64, 1.0, 2.7] {
            let want: f64 = b.iter().enumerate().map(|(m, c)| c * r.powi(2 * m as i32)).sum();
            for d in &dirs {
                let x: Vec<f64> = d.iter().map(|c| c * r).collect();
                let got = self.eval(&x);
                if (got.re - want).abs() > 1e-10 * want.abs().max(1.0) || got.im.abs() > 1e-10 {
                    return None;
                }
            }
        }
        Some(b)
    }
}

/// Multinomial expansion of `(Σ x_i)^m` as (exponents, coefficient).
fn compositions(n: usize, m: u32) -> Vec<(Vec<u32>, f64)> {
    fn rec(n: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == n - 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for e in 0..=left {
            cur.push(e);
            rec(n, left - e, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, m, &mut Vec::new(), &mut out);
    let fact = |k: u32| (1..=k).map(f64::from).product::<f64>();
    out.into_iter()
        .map(|e| {
            let c = fact(m) / e.iter().map(|k| fact(*k)).product::<f64>();
            (e, c)
        })
        .collect()
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

const PRIMES: [u64; 24] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89];

/// Seeded real symbol with standard normal coefficients on every monomial of
/// degree `<= degree`; the top-degree diagonal terms are kept nonzero so the
/// order is exactly `degree`.
pub fn random_symbol(n: usize, degree: u32, seed: u64) -> Result<PolySymbol> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    if degree == 0 {
        return Err(Error::param("degree", "must be positive"));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut exps = vec![Vec::new()];
    for _ in 0..n {
        exps = exps.into_iter().flat_map(|e: Vec<u32>| (0..=degree).map(move |k| [e.clone(), vec![k]].concat())).collect();
    }
    let coefficients: Vec<(Vec<u32>, f64)> = exps
        .into_iter()
        .filter(|e| e.iter().sum::<u32>() <= degree)
        .map(|e| {
            let c: f64 = StandardNormal.sample(&mut rng);
            let top = e.iter().any(|k| *k == degree);
            (e, if top { c.signum() * (c.abs() + 0.5) } else { c })
        })
        .collect();
    PolySymbol::from_xi(n, &coefficients)
}

/// Deterministic quasi-uniform points on `S^{n-1}`: Halton points mapped
/// through Box–Muller and normalised.
pub fn halton_sphere(n: usize, count: usize) -> Vec<Vec<f64>> {
    assert!(2 * n.div_ceil(2) <= PRIMES.len(), "dimension too large for the Halton bases");
    (1..=count as u64)
        .map(|i| {
            let mut v = Vec::with_capacity(n + 1);
            for pair in 0..n.div_ceil(2) {
                let u1 = radical_inverse(i, PRIMES[2 * pair]).max(1e-300);
                let u2 = radical_inverse(i, PRIMES[2 * pair + 1]);
                let rad = (-2.0 * u1.ln()).sqrt();
                v.push(rad * (2.0 * PI * u2).cos());
                v.push(rad * (2.0 * PI * u2).sin());
            }
            v.truncate(n);
            let s = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            v.iter().map(|c| c / s).collect()
        })
        .collect()
}

/// Lower bounds of the principal part on the sphere and of the full symbol
/// on dyadic shells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Margins {
    /// `min_{|ω|=1} |p_α(ω)|`.
    pub c0: f64,
    pub c0_direction: Vec<f64>,
    /// `inf |p(ξ)|/|ξ|^α` over radii `2^{-20..=20}`.
    pub c1: f64,
    pub c1_point: Vec<f64>,
    pub elliptic: bool,
}

/// Refines a sphere minimiser by shrinking random-free coordinate moves.
fn refine_on_sphere(f: &dyn Fn(&[f64]) -> f64, start: &[f64]) -> (f64, Vec<f64>) {
    let n = start.len();
    let mut best = start.to_vec();
    let mut val = f(&best);
    let mut step = 0.1;
    while step > 1e-9 {
        let mut improved = false;
        for i in 0..n {
            for s in [step, -step] {
                let mut c = best.clone();
                c[i] += s;
                let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
                c.iter_mut().for_each(|x| *x /= norm);
                let v = f(&c);
                if v < val {
                    val = v;
                    best = c;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (val, best)
}

/// Ellipticity margins from `samples` sphere directions, with the eight best
/// directions refined by local search.
pub fn ellipticity_margins(p: &PolySymbol, samples: usize) -> Margins {
    let dirs = halton_sphere(p.n, samples.max(1));
    let alpha = p.alpha as i32;
    let principal = |w: &[f64]| p.eval_principal(w).norm();
    let mut scored: Vec<(f64, usize)> = dirs.iter().enumerate().map(|(i, d)| (principal(d), i)).collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (c0, c0_direction) = scored
        .iter()
        .take(8)
        .map(|(_, i)| refine_on_sphere(&principal, &dirs[*i]))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("at least one direction");
    let radii: Vec<f64> = (-20..=20).map(|k| 2f64.powi(k)).collect();
    let (c1, c1_point) = radii
        .par_iter()
        .map(|&r| {
            let ratio = |w: &[f64]| {
                let x: Vec<f64> = w.iter().map(|c| c * r).collect();
                p.eval(&x).norm() / r.powi(alpha)
            };
            let (_, i) = dirs
                .iter()
                .enumerate()
                .map(|(i, d)| (ratio(d), i))
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .expect("directions");
            let (v, w) = refine_on_sphere(&ratio, &dirs[i]);
            (v, w.iter().map(|c| c * r).collect::<Vec<f64>>())
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("radii");
    let scale = p.terms.iter().filter(|t| t.degree() == p.alpha).map(|t| t.coeff.norm()).fold(0.0, f64::max);
    let elliptic = c0 > 1e-9 * scale;
    Margins { c0, c0_direction, c1, c1_point, elliptic }
}

/// Verdict of a shell-by-shell integrability test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Integrability {
    Finite { value: f64 },
    /// Shells contribute equally; `rate` is the contribution per unit of `log(1/|ξ|)`.
    LogDivergent { rate: f64 },
    Divergent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegrabilityVerdict {
    pub exponent: f64,
    /// Cumulative integrals after each refinement level.
    pub partial_values: Vec<f64>,
    pub verdict: Integrability,
}

/// Shell quadrature options for [`reciprocal_integrability`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellOptions {
    /// Number of dyadic shells `2^{-j} <= |ξ| < 2^{1-j}`.
    pub shells: usize,
    /// Coordinate used as the polar axis of the sphere integral.
    pub axis: Option<usize>,
    /// Directions of the inner `S^{n-2}` average.
    pub inner: usize,
    /// Shell-to-shell ratio at or below which contributions count as decaying.
    pub decay_ratio: f64,
    /// Relative tolerance of the polar-angle quadrature.
    pub rel_tol: f64,
}

impl Default for ShellOptions {
    fn default() -> Self {
        Self { shells: 40, axis: None, inner: 48, decay_ratio: 0.75, rel_tol: 1e-9 }
    }
}

/// `∫_{S^{n-1}} f` with adaptive quadrature in the polar coordinate along
/// `axis` and a quasi-random average over the complementary sphere.
fn sphere_integral(n: usize, axis: usize, inner: &[Vec<f64>], f: &(dyn Fn(&[f64]) -> f64 + Sync), tol: f64) -> f64 {
    let area_inner = unit_sphere_area(n - 1);
    let slice = |s: f64| -> f64 {
        let c = (1.0 - s * s).max(0.0).sqrt();
        let mut acc = 0.0;
        for eta in inner {
            let mut w = Vec::with_capacity(n);
            let mut it = eta.iter();
            for i in 0..n {
                w.push(if i == axis { s } else { c * it.next().copied().unwrap_or(0.0) });
            }
            acc += f(&w);
        }
        area_inner * acc / inner.len() as f64 * (1.0 - s * s).max(0.0).powf((n as f64 - 3.0) / 2.0)
    };
    // Split at the location of the largest slice value so the adaptive rule sees peaks at an endpoint.
    let grid = 400;
    let (mut peak, mut top) = (0.0, f64::NEG_INFINITY);
    for i in 0..=grid {
        let s = -1.0 + 2.0 * i as f64 / grid as f64;
        let v = slice(s);
        if v > top {
            top = v;
            peak = s;
        }
    }
    let (mut a, mut b) = ((peak - 2.0 / grid as f64).max(-1.0), (peak + 2.0 / grid as f64).min(1.0));
    for _ in 0..80 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if slice(m1) > slice(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    let s_star = 0.5 * (a + b);
    quadrature::adaptive(slice, -1.0, s_star, tol, 0.0).value + quadrature::adaptive(slice, s_star, 1.0, tol, 0.0).value
}

/// Shell test of `∫_{B_1} |p|^{-exponent}`; the exponent defaults to `n/α`.
pub fn reciprocal_integrability(p: &PolySymbol, exponent: Option<f64>, opts: &ShellOptions) -> Result<IntegrabilityVerdict> {
    let margins = ellipticity_margins(p, 2048);
    if !margins.elliptic {
        return Err(Error::Precondition(format!("principal part is not elliptic (c0 = {:.3e})", margins.c0)));
    }
    if p.eval(&vec![0.0; p.n]).norm() != 0.0 {
        return Err(Error::Precondition("requires p(0) = 0".into()));
    }
    if p.n < 2 {
        return Err(Error::param("n", "shell test needs n >= 2"));
    }
    let q = exponent.unwrap_or(p.n as f64 / p.alpha as f64);
    let axis = opts.axis.unwrap_or(p.n - 1);
    let inner = if p.n == 2 { vec![vec![1.0], vec![-1.0]] } else { halton_sphere(p.n - 1, opts.inner) };
    let nodes = quadrature::gauss_legendre(12);
    let shells: Vec<f64> = (1..=opts.shells)
        .into_par_iter()
        .map(|j| {
            let (lo, hi) = (2f64.powi(-(j as i32)), 2f64.powi(1 - j as i32));
            nodes
                .0
                .iter()
                .zip(&nodes.1)
                .map(|(x, w)| {
                    // Log-radial substitution keeps the cell shape independent of j.
                    let t = lo.ln() + (0.5 * (x + 1.0)) * (hi / lo).ln();
                    let r = t.exp();
                    let jac = 0.5 * (hi / lo).ln() * r;
                    let f = |w: &[f64]| {
                        let xi: Vec<f64> = w.iter().map(|c| c * r).collect();
                        let v = p.eval(&xi).norm();
                        if v > 0.0 { v.powf(-q) } else { 0.0 }
                    };
                    w * jac * r.powi(p.n as i32 - 1) * sphere_integral(p.n, axis, &inner, &f, opts.rel_tol)
                })
                .sum()
        })
        .collect();
    let mut acc = 0.0;
    let partial_values: Vec<f64> = shells
        .iter()
        .map(|s| {
            acc += s;
            acc
        })
        .collect();
    let window = 6.min(shells.len().saturating_sub(1));
    let tail = &shells[shells.len() - window - 1..];
    let ratios: Vec<f64> = tail.windows(2).map(|w| w[1] / w[0]).collect();
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    let min_ratio = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let verdict = if max_ratio <= opts.decay_ratio {
        let last = *shells.last().unwrap_or(&0.0);
        let rq = max_ratio.max(1e-300);
        Integrability::Finite { value: acc + last * rq / (1.0 - rq) }
    } else if min_ratio > 1.0 / opts.decay_ratio {
        Integrability::Divergent
    } else {
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        Integrability::LogDivergent { rate: mean / std::f64::consts::LN_2 }
    };
    Ok(IntegrabilityVerdict { exponent: q, partial_values, verdict })
}

/// Coefficients of `t ↦ p(x, t)` for a fixed prefix `x` of the first `n - 1` coordinates.
fn last_axis_coefficients(p: &PolySymbol, x: &[f64]) -> Vec<Complex64> {
    let deg = p.terms.iter().filter_map(|t| t.exps.last()).max().copied().unwrap_or(0) as usize;
    let mut c = vec![Complex64::new(0.0, 0.0); deg + 1];
    for t in &p.terms {
        if let Some((last, head)) = t.exps.split_last() {
            let m: f64 = head.iter().zip(x).map(|(e, v)| v.powi(*e as i32)).product();
            c[*last as usize] += t.coeff * m;
        }
    }
    c
}

/// Real parts of the roots of `Σ c_k t^k`, as eigenvalues of the companion matrix.
fn root_abscissae(c: &[Complex64]) -> Vec<f64> {
    let scale = c.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let d = match c.iter().rposition(|z| z.norm() > 1e-14 * scale) {
        Some(d) if d > 0 => d,
        _ => return Vec::new(),
    };
    let companion = nalgebra::DMatrix::from_fn(d, d, |i, j| {
        if j == d - 1 {
            -c[i] / c[d]
        } else if i == j + 1 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    companion.schur().eigenvalues().map_or_else(Vec::new, |ev| ev.iter().map(|z| z.re).collect())
}

/// `∫_lo^hi |log|p(x, t)|| dt`, split at the root abscissae so that every
/// logarithmic singularity sits at a subinterval endpoint.
fn log_line_integral(p: &PolySymbol, x: &[f64], lo: f64, hi: f64, tol: f64) -> f64 {
    let c = last_axis_coefficients(p, x);
    let mut cuts: Vec<f64> = root_abscissae(&c).into_iter().filter(|r| *r > lo && *r < hi).collect();
    cuts.extend([lo, hi]);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let f = |t: f64| {
        let v = c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, a| acc * t + a).norm();
        if v > 0.0 { v.ln().abs() } else { 0.0 }
    };
    cuts.windows(2).map(|w| quadrature::adaptive(f, w[0], w[1], tol, 1e-14).value).sum()
}

/// `∫_Q |log|p||` over the cube `[lo, hi]^n` by nested adaptive quadrature,
/// repeated at a tenfold tighter tolerance; the two levels must agree.
pub fn log_integrability(p: &PolySymbol, lo: f64, hi: f64) -> Result<IntegrabilityVerdict> {
    if !(hi > lo) {
        return Err(Error::param("cube", "empty cube"));
    }
    if p.n > 3 {
        return Err(Error::Unsupported("nested adaptive cubature is limited to n <= 3".into()));
    }
    // Inner levels run tenfold tighter so their noise stays below the outer tolerance.
    fn nested(p: &PolySymbol, x: &mut Vec<f64>, lo: f64, hi: f64, tol: f64) -> f64 {
        if x.len() + 1 == p.n {
            return log_line_integral(p, x, lo, hi, tol);
        }
        quadrature::adaptive(
            |t| {
                x.push(t);
                let v = nested(p, x, lo, hi, 0.1 * tol);
                x.pop();
                v
            },
            lo,
            hi,
            tol,
            1e-14,
        )
        .value
    }
    // Each nesting level multiplies the cost; three levels run two decades looser.
    let tol = if p.n == 3 { 1e-4 } else { 1e-6 };
    let coarse = nested(p, &mut Vec::new(), lo, hi, tol);
    let fine = nested(p, &mut Vec::new(), lo, hi, 0.1 * tol);
    let partial_values = vec![coarse, fine];
    if !fine.is_finite() || (fine - coarse).abs() > 1e-3 * fine.abs().max(1e-12) {
        return Ok(IntegrabilityVerdict { exponent: 0.0, partial_values, verdict: Integrability::Divergent });
    }
    Ok(IntegrabilityVerdict { exponent: 0.0, partial_values, verdict: Integrability::Finite { value: fine } })
}

/// Sharp exponential constant for `∇^α` in `R^n`.
pub fn sharp_constant_grad(n: usize, alpha: u32) -> Result<f64> {
    let nf = n as f64;
    let a = alpha as f64;
    if alpha == 0 || a >= nf {
        return Err(Error::param("alpha", "requires 0 < alpha < n"));
    }
    let e = -nf / (nf - a);
    let b1 = unit_ball_volume(n);
    if alpha % 2 == 0 {
        Ok(riesz_constant(n, a)?.powf(e) / b1)
    } else if alpha as usize == n - 1 {
        Err(Error::Unsupported("odd alpha = n - 1 makes the factor n - alpha - 1 vanish".into()))
    } else {
        Ok(((nf - a - 1.0) * riesz_constant(n, a + 1.0)?).powf(e) / b1)
    }
}

/// `A_g = (1/n) ∫_{S^{n-1}} |g|^{n/(n-α)}` and the exponential constant `1/A_g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SphereConstant {
    pub a_g: f64,
    pub constant: f64,
    /// Points per angular axis at convergence.
    pub resolution: usize,
    pub change: f64,
}

/// Product Gauss rule on `S^{n-1}` in hyperspherical angles with `m` nodes per axis.
fn sphere_product_rule(n: usize, m: usize) -> Vec<(Vec<f64>, f64)> {
    let (gx, gw) = quadrature::gauss_legendre(m);
    let phis: Vec<(f64, f64)> = (0..2 * m).map(|i| (PI * i as f64 / m as f64, PI / m as f64)).collect();
    let mut out: Vec<(Vec<f64>, f64)> = phis.iter().map(|(p, w)| (vec![p.cos(), p.sin()], *w)).collect();
    // Lift from S^{k-1} to S^k: x = (cos θ, sin θ · y), weight sin^{k-1} θ.
    for k in 2..n {
        let mut next = Vec::with_capacity(out.len() * m);
        for (x, w) in gx.iter().zip(&gw) {
            let theta = 0.5 * PI * (x + 1.0);
            let (c, s) = (theta.cos(), theta.sin());
            let wt = 0.5 * PI * w * s.powi(k as i32 - 1);
            for (y, wy) in &out {
                let mut v = Vec::with_capacity(k + 1);
                v.push(c);
                v.extend(y.iter().map(|t| s * t));
                next.push((v, wt * wy));
            }
        }
        out = next;
    }
    out
}

/// Sphere quadrature of `A_g` with node doubling until the relative change is below `1e-10`.
pub fn sharp_constant_ag(g: &(dyn Fn(&[f64]) -> f64 + Sync), n: usize, alpha: f64) -> Result<SphereConstant> {
    let nf = n as f64;
    if !(alpha > 0.0 && alpha < nf) || n < 2 {
        return Err(Error::param("alpha", "requires 0 < alpha < n, n >= 2"));
    }
    let e = nf / (nf - alpha);
    let budget = 4_000_000usize;
    let mut prev: Option<f64> = None;
    let mut m = 8;
    loop {
        let rule = sphere_product_rule(n, m);
        let v: f64 = rule.par_iter().map(|(x, w)| w * g(x).abs().powf(e)).sum::<f64>() / nf;
        if let Some(p) = prev {
            let change = ((v - p) / v).abs();
            if change < 1e-10 {
                return Ok(SphereConstant { a_g: v, constant: 1.0 / v, resolution: m, change });
            }
        }
        prev = Some(v);
        m *= 2;
        if m.pow(n as u32 - 1) * 2 > budget {
            return Err(Error::UnderResolved("sphere quadrature did not converge within the node budget".into()));
        }
    }
}

/// `g(ω) = c_α (det A)^{-1/2} (A^{-1}ω·ω)^{(α-n)/2}` for the operator `(-div A∇)^{α/2}`.
pub fn anisotropic_g(a: &nalgebra::DMatrix<f64>, alpha: f64) -> Result<impl Fn(&[f64]) -> f64 + Sync> {
    let n = a.nrows();
    let c = riesz_constant(n, alpha)?;
    let chol = a.clone().cholesky().ok_or_else(|| Error::param("A", "must be symmetric positive definite"))?;
    let inv = chol.inverse();
    let det = a.determinant();
    Ok(move |w: &[f64]| {
        let v = nalgebra::DVector::from_column_slice(w);
        let q = (v.transpose() * &inv * &v)[(0, 0)];
        c * det.powf(-0.5) * q.powf((alpha - n as f64) / 2.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn helmholtz_values() {
        let p = PolySymbol::helmholtz(3);
        let v = p.eval(&[0.1, 0.2, -0.3]);
        assert_relative_eq!(v.re, 1.0 + 4.0 * PI * PI * 0.14, max_relative = 1e-14);
        assert!(v.im.abs() < 1e-14);
        // (2πi ξ_j)^2 with a = -1 gives +4π² ξ_j².
        let q = PolySymbol::from_operator(3, &[(vec![0, 0, 0], 1.0), (vec![2, 0, 0], -1.0), (vec![0, 2, 0], -1.0), (vec![0, 0, 2], -1.0)]).unwrap();
        assert_relative_eq!(q.eval(&[0.1, 0.2, -0.3]).re, v.re, max_relative = 1e-14);
        assert_eq!(q.radial_coefficients().unwrap().len(), 2);
    }

    #[test]
    fn margins_of_radial_symbols() {
        let m = ellipticity_margins(&PolySymbol::laplacian_power(3, 1), 512);
        assert_relative_eq!(m.c0, 4.0 * PI * PI, max_relative = 1e-10);
        assert_relative_eq!(m.c1, 4.0 * PI * PI, max_relative = 1e-10);
        let p = PolySymbol::radial(6, &[(2, 1.0), (1, 1.0)]);
        let m = ellipticity_margins(&p, 512);
        assert_relative_eq!(m.c0, (2.0 * PI).powi(4), max_relative = 1e-10);
        assert_relative_eq!(m.c1, (2.0 * PI).powi(4), max_relative = 1e-6);
    }

    #[test]
    fn quartic_sum_minimum_on_diagonal() {
        for n in [2usize, 3, 4] {
            let c: Vec<(Vec<u32>, f64)> = (0..n)
                .map(|i| {
                    let mut k = vec![0; n];
                    k[i] = 4;
                    (k, (2.0 * PI).powi(4))
                })
                .collect();
            let m = ellipticity_margins(&PolySymbol::from_xi(n, &c).unwrap(), 1024);
            // Lagrange oracle: min Σ ω_i^4 on the sphere is 1/n at the diagonal.
            let oracle = (2.0 * PI).powi(4) / n as f64;
            assert!((m.c0 / oracle - 1.0).abs() < 0.01, "n={n}: {} vs {oracle}", m.c0);
        }
    }

    #[test]
    fn r8_symbol_structure() {
        let p = PolySymbol::r8_counterexample();
        assert_eq!(p.alpha, 4);
        let x = [0.1, 0.2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.3];
        let xp2 = 0.05;
        assert_relative_eq!(p.eval(&x).re, (0.3f64 - xp2).powi(2) + 0.3f64.powi(4), max_relative = 1e-13);
        assert!(!p.is_homogeneous());
        assert!(p.radial_coefficients().is_none());
    }

    #[test]
    fn halton_points_are_unit() {
        for n in [2, 3, 5, 8] {
            for p in halton_sphere(n, 50) {
                assert_relative_eq!(p.iter().map(|c| c * c).sum::<f64>(), 1.0, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn product_rule_integrates_sphere_area() {
        for n in 2..6 {
            let s: f64 = sphere_product_rule(n, 32).iter().map(|(_, w)| w).sum();
            assert_relative_eq!(s, unit_sphere_area(n), max_relative = 1e-12);
        }
    }

    #[test]
    fn grad_constants() {
        assert_relative_eq!(sharp_constant_grad(4, 2).unwrap(), 32.0 * PI * PI, max_relative = 1e-12);
        assert_relative_eq!(sharp_constant_grad(3, 2).unwrap(), 48.0 * PI * PI, max_relative = 1e-12);
        assert!(sharp_constant_grad(2, 1).is_err());
        // Odd branch oracle: ((n-α-1) c_{α+1})^{-n/(n-α)} / |B_1| for n=4, α=1 with c_2 = 1/(4π²).
        let oracle = (2.0 / (4.0 * PI * PI)).powf(-4.0 / 3.0) / (PI * PI / 2.0);
        assert_relative_eq!(sharp_constant_grad(4, 1).unwrap(), oracle, max_relative = 1e-12);
    }

    #[test]
    fn constant_g_reproduces_ball_normalisation() {
        let c1 = riesz_constant(2, 1.0).unwrap();
        let r = sharp_constant_ag(&|_: &[f64]| c1, 2, 1.0).unwrap();
        assert_relative_eq!(r.a_g, 1.0 / (4.0 * PI), max_relative = 1e-12);
        let r = sharp_constant_ag(&|_: &[f64]| 1.0, 2, 1.0).unwrap();
        assert_relative_eq!(r.a_g, PI, max_relative = 1e-12);
    }
}
