//! Kernels: Riesz, Bessel, drift, symbol inverses, hyperbolic Green's
//! function, restricted and Agmon-normalised Riesz kernels, and the shell
//! kernel. Includes the radial log-Hankel transform, the Cartesian FFT
//! assembly of fundamental solutions and the local/tail asymptotics check.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::measure::{DoublingRule, SeriesVerdict};
use crate::quadrature;
use crate::special::{bessel_k, gamma, ln_gamma_complex, unit_sphere_area};
use crate::symbol::{ellipticity_margins, halton_sphere, PolySymbol};

/// `Γ((n-α)/2) / (2^α π^{n/2} Γ(α/2))`, the normalisation making
/// `c_α |x|^{α-n}` the fundamental solution of `(-Δ)^{α/2}`.
pub fn riesz_constant(n: usize, alpha: f64) -> Result<f64> {
    let nf = n as f64;
    if !(alpha > 0.0 && alpha < nf) {
        return Err(Error::param("alpha", format!("requires 0 < alpha < n = {n}, got {alpha}")));
    }
    Ok(gamma((nf - alpha) / 2.0) / (2f64.powf(alpha) * PI.powf(nf / 2.0) * gamma(alpha / 2.0)))
}

/// Closed form `G_α(r) = 2 (2πr)^{(α-n)/2} K_{(n-α)/2}(r) / ((4π)^{α/2} Γ(α/2))`.
pub fn bessel_closed_form(n: usize, alpha: f64, r: f64) -> f64 {
    let nf = n as f64;
    2.0 * (2.0 * PI * r).powf((alpha - nf) / 2.0) * bessel_k((nf - alpha) / 2.0, r)
        / ((4.0 * PI).powf(alpha / 2.0) * gamma(alpha / 2.0))
}

/// Cover used by [`KernelSpec::AgmonNormalized`]: cells
/// `B_j = B(x_j*, 2R₁) \ ∪_{k<j} B_k` in enumeration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgmonCover {
    /// Centres at `Z^n` in lexicographic order.
    Lattice { r1: f64 },
    /// Explicit centres in list order.
    Points { centers: Vec<Vec<f64>>, r1: f64 },
}

impl AgmonCover {
    pub fn r1(&self) -> f64 {
        match self {
            AgmonCover::Lattice { r1 } | AgmonCover::Points { r1, .. } => *r1,
        }
    }

    /// Centre `x_j*` of the cell containing `x`.
    pub fn center_for(&self, x: &[f64]) -> Option<Vec<f64>> {
        let reach = 2.0 * self.r1();
        let near = |c: &[f64]| c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() < reach * reach;
        match self {
            AgmonCover::Points { centers, .. } => centers.iter().find(|c| near(c)).cloned(),
            AgmonCover::Lattice { .. } => {
                // Lexicographically smallest integer point within 2R₁.
                fn rec(x: &[f64], reach: f64, prefix: &mut Vec<f64>, d2: f64) -> Option<Vec<f64>> {
                    let i = prefix.len();
                    if i == x.len() {
                        return (d2 < reach * reach).then(|| prefix.clone());
                    }
                    let lo = (x[i] - reach).floor() as i64;
                    let hi = (x[i] + reach).ceil() as i64;
                    for m in lo..=hi {
                        let c = m as f64 - x[i];
                        if d2 + c * c >= reach * reach {
                            continue;
                        }
                        prefix.push(m as f64);
                        let found = rec(x, reach, prefix, d2 + c * c);
                        prefix.pop();
                        if found.is_some() {
                            return found;
                        }
                    }
                    None
                }
                rec(x, reach, &mut Vec::new(), 0.0)
            }
        }
    }
}

/// Kernel families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `|x-y|^{α-n}`.
    Riesz { n: usize, alpha: f64 },
    /// Fundamental solution of `(I-Δ)^{α/2}`.
    Bessel { n: usize, alpha: f64 },
    /// Fundamental solution of `(∇ᵀA∇ + bᵀ∇)^{α/2}`, even `α`.
    Drift { n: usize, alpha: f64, a: Vec<Vec<f64>>, b: Vec<f64> },
    /// Fundamental solution `K_P` with `P̂ = p`.
    SymbolInverse { symbol: PolySymbol, cutoff_radius: f64, ell: Option<u32> },
    /// Green's function of `-Δ` on hyperbolic space, Poincaré ball model.
    Hyperbolic2 { n: usize },
    /// `|x-y|^{α-n}` for `x, y ∈ Ω`, zero otherwise.
    RestrictedRiesz { n: usize, alpha: f64, domain: DomainSpec },
    /// `c_α(|x-y|^{α-n} - |x_j*-y|^{α-n})` on `Ω`, with `j` the cover cell of `x`.
    AgmonNormalized { n: usize, alpha: f64, domain: DomainSpec, cover: AgmonCover },
    /// `|y|^{α-n}` on the shell `|x|/2 <= |y| < |x|`, zero elsewhere.
    Shell { n: usize, alpha: f64 },
}

/// Radial profile shared across threads.
pub type RadialFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_order(n: usize, alpha: f64) -> Result<()> {
    if n < 2 {
        return Err(Error::param("n", "dimension must be at least 2"));
    }
    if !(alpha > 0.0 && alpha < n as f64) {
        return Err(Error::param("alpha", format!("requires 0 < alpha < n = {n}")));
    }
    Ok(())
}

impl KernelSpec {
    pub fn dim(&self) -> usize {
        match self {
            KernelSpec::Riesz { n, .. }
            | KernelSpec::Bessel { n, .. }
            | KernelSpec::Drift { n, .. }
            | KernelSpec::Hyperbolic2 { n }
            | KernelSpec::RestrictedRiesz { n, .. }
            | KernelSpec::AgmonNormalized { n, .. }
            | KernelSpec::Shell { n, .. } => *n,
            KernelSpec::SymbolInverse { symbol, .. } => symbol.n,
        }
    }

    /// Order `α` of the kernel.
    pub fn order(&self) -> f64 {
        match self {
            KernelSpec::Riesz { alpha, .. }
            | KernelSpec::Bessel { alpha, .. }
            | KernelSpec::Drift { alpha, .. }
            | KernelSpec::RestrictedRiesz { alpha, .. }
            | KernelSpec::AgmonNormalized { alpha, .. }
            | KernelSpec::Shell { alpha, .. } => *alpha,
            KernelSpec::SymbolInverse { symbol, .. } => symbol.alpha as f64,
            KernelSpec::Hyperbolic2 { .. } => 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        check_order(n, self.order())?;
        match self {
            KernelSpec::Drift { alpha, a, b, .. } => {
                if alpha.fract() != 0.0 || (*alpha as i64) % 2 != 0 {
                    return Err(Error::param("alpha", "drift kernel needs even alpha for a real sign"));
                }
                drift_frame(n, a, b).map(|_| ())
            }
            KernelSpec::SymbolInverse { symbol, cutoff_radius, ell } => {
                if symbol.alpha % 2 != 0 {
                    return Err(Error::param("symbol", "order must be even"));
                }
                if !(*cutoff_radius > 0.0) {
                    return Err(Error::param("cutoff_radius", "must be positive"));
                }
                if let Some(l) = ell {
                    if 2.0 * *l as f64 <= n as f64 - symbol.alpha as f64 {
                        return Err(Error::param("ell", "requires ell > (n - alpha)/2"));
                    }
                }
                let m = ellipticity_margins(symbol, 1024);
                if !m.elliptic {
                    return Err(Error::Precondition(format!("symbol is not elliptic (c0 = {:.3e})", m.c0)));
                }
                Ok(())
            }
            KernelSpec::RestrictedRiesz { domain, .. } | KernelSpec::AgmonNormalized { domain, .. } => {
                domain.validate()?;
                if domain.dim() != n {
                    return Err(Error::param("domain", "dimension differs from the kernel"));
                }
                if let KernelSpec::AgmonNormalized { cover, .. } = self {
                    if !(cover.r1() > 0.0) {
                        return Err(Error::param("cover", "R1 must be positive"));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// `k(x, y)`.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let n = self.dim();
        if x.len() != n || y.len() != n {
            return Err(Error::param("point", format!("expected {n} coordinates")));
        }
        let d = dist(x, y);
        let singular = |d: f64| if d == 0.0 { Err(Error::Singular) } else { Ok(d) };
        match self {
            KernelSpec::Riesz { alpha, .. } => Ok(singular(d)?.powf(alpha - n as f64)),
            KernelSpec::Bessel { alpha, .. } => Ok(bessel_closed_form(n, *alpha, singular(d)?)),
            KernelSpec::Drift { alpha, a, b, .. } => {
                singular(d)?;
                let z: Vec<f64> = x.iter().zip(y).map(|(p, q)| p - q).collect();
                Ok(drift_value(n, *alpha, &drift_frame(n, a, b)?, &z))
            }
            KernelSpec::SymbolInverse { .. } => {
                singular(d)?;
                let f = self.radial_profile().ok_or_else(|| {
                    Error::Unsupported("pointwise evaluation needs a radial symbol; use fundamental_solution_fft".into())
                })?;
                Ok((f.0)(d))
            }
            KernelSpec::Hyperbolic2 { n } => {
                let (nx, ny) = (norm(x), norm(y));
                if nx >= 1.0 || ny >= 1.0 {
                    return Err(Error::param("point", "must lie in the unit ball"));
                }
                singular(d)?;
                let arg = 2.0 * d * d / ((1.0 - nx * nx) * (1.0 - ny * ny));
                hyperbolic_h2(*n, (arg + (arg * (arg + 2.0)).sqrt()).ln_1p())
            }
            KernelSpec::RestrictedRiesz { alpha, domain, .. } => {
                if !domain.contains(x) || !domain.contains(y) {
                    return Ok(0.0);
                }
                Ok(singular(d)?.powf(alpha - n as f64))
            }
            KernelSpec::AgmonNormalized { alpha, domain, cover, .. } => {
                if !domain.contains(x) || !domain.contains(y) {
                    return Ok(0.0);
                }
                let e = alpha - n as f64;
                let c = riesz_constant(n, *alpha)?;
                let star = cover
                    .center_for(x)
                    .ok_or_else(|| Error::Precondition("point not covered by any cell B(x_j*, 2R1)".into()))?;
                Ok(c * (singular(d)?.powf(e) - singular(dist(&star, y))?.powf(e)))
            }
            KernelSpec::Shell { alpha, .. } => {
                let (rx, ry) = (norm(x), norm(y));
                Ok(if ry >= 0.5 * rx && ry < rx { ry.powf(alpha - n as f64) } else { 0.0 })
            }
        }
    }

    /// `K(z) = k(z, 0)` for translation-invariant kernels.
    pub fn profile(&self, z: &[f64]) -> Result<f64> {
        match self {
            KernelSpec::Riesz { .. } | KernelSpec::Bessel { .. } | KernelSpec::Drift { .. } | KernelSpec::SymbolInverse { .. } => {
                self.eval(z, &vec![0.0; self.dim()])
            }
            _ => Err(Error::Unsupported("kernel is not translation invariant".into())),
        }
    }

    /// `k(x,y) = F(|x-y|)` on a domain (full space when `None`).
    pub fn radial_profile(&self) -> Option<(RadialFn, Option<DomainSpec>)> {
        let n = self.dim() as f64;
        match self {
            KernelSpec::Riesz { alpha, .. } => {
                let e = alpha - n;
                Some((Arc::new(move |r: f64| r.powf(e)), None))
            }
            KernelSpec::RestrictedRiesz { alpha, domain, .. } => {
                let e = alpha - n;
                Some((Arc::new(move |r: f64| r.powf(e)), Some(domain.clone())))
            }
            KernelSpec::Bessel { alpha, .. } => {
                let (n, a) = (self.dim(), *alpha);
                Some((Arc::new(move |r: f64| bessel_closed_form(n, a, r)), None))
            }
            KernelSpec::SymbolInverse { symbol, .. } => {
                let table = cached_symbol_profile(symbol).ok()?;
                Some((Arc::new(move |r: f64| table.at(r)), None))
            }
            _ => None,
        }
    }
}

/// Normalised drift data: `A^{-1/2}`, `(det A)^{-1/2}`.
struct DriftFrame {
    inv_sqrt: DMatrix<f64>,
    det_factor: f64,
    b: DVector<f64>,
}

fn drift_frame(n: usize, a: &[Vec<f64>], b: &[f64]) -> Result<DriftFrame> {
    if a.len() != n || a.iter().any(|r| r.len() != n) || b.len() != n {
        return Err(Error::param("a", "A must be n×n and b of length n"));
    }
    let m = DMatrix::from_fn(n, n, |i, j| a[i][j]);
    if (0..n).any(|i| (0..n).any(|j| (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * (1.0 + m[(i, j)].abs()))) {
        return Err(Error::param("a", "A must be symmetric"));
    }
    let eig = SymmetricEigen::new(m);
    if eig.eigenvalues.iter().any(|l| *l <= 0.0) {
        return Err(Error::param("a", "A must be positive definite"));
    }
    if b.iter().all(|c| *c == 0.0) {
        return Err(Error::param("b", "drift vector must be nonzero"));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.powf(-0.5)));
    let inv_sqrt = &eig.eigenvectors * d * eig.eigenvectors.transpose();
    let det: f64 = eig.eigenvalues.iter().product();
    let bv = &inv_sqrt * DVector::from_column_slice(b);
    Ok(DriftFrame { inv_sqrt, det_factor: det.powf(-0.5), b: bv })
}

/// Drift kernel at `z = x - y`, evaluated through the identity-matrix formula.
fn drift_value(n: usize, alpha: f64, f: &DriftFrame, z: &[f64]) -> f64 {
    let y = &f.inv_sqrt * DVector::from_column_slice(z);
    drift_identity(n, alpha, y.as_slice(), f.b.as_slice()) * f.det_factor
}

fn drift_identity(n: usize, alpha: f64, x: &[f64], b: &[f64]) -> f64 {
    let nf = n as f64;
    let (rx, rb) = (norm(x), norm(b));
    let bx: f64 = x.iter().zip(b).map(|(p, q)| p * q).sum();
    let sign = if ((alpha / 2.0) as i64) % 2 == 0 { 1.0 } else { -1.0 };
    let nu = (nf - alpha) / 2.0;
    let z = 0.5 * rx * rb;
    // e^{-b·x/2} K_ν(z) = e^{-(b·x)/2 - z} (e^z K_ν(z)); the scaled product avoids overflow.
    let scaled = bessel_k(nu, z) * z.exp();
    sign / (2f64.powf(nf - 1.0) * PI.powf(nf / 2.0) * gamma(alpha / 2.0)) * (rx / rb).powf((alpha - nf) / 2.0)
        * scaled
        * (-0.5 * bx - z).exp()
}

/// `H₂(ρ) = (1/ω_{n-1}) ∫_ρ^∞ (sinh r)^{1-n} dr`; closed form for `n = 3`.
pub fn hyperbolic_h2(n: usize, rho: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::param("rho", "must be positive"));
    }
    if n < 2 {
        return Err(Error::param("n", "dimension must be at least 2"));
    }
    let omega = unit_sphere_area(n);
    if n == 3 {
        // coth ρ - 1 = 2/(e^{2ρ} - 1).
        return Ok(2.0 / (2.0 * rho).exp_m1() / omega);
    }
    Ok(hyperbolic_h2_quadrature(n, rho) / omega)
}

/// `∫_ρ^∞ (sinh r)^{1-n} dr` by adaptive quadrature on dyadic pieces.
pub fn hyperbolic_h2_quadrature(n: usize, rho: f64) -> f64 {
    let e = 1.0 - n as f64;
    let f = |r: f64| r.sinh().powf(e);
    let mut acc = 0.0;
    let mut a = rho;
    while a < 1.0 {
        let b = (2.0 * a).min(1.0);
        acc += quadrature::adaptive(f, a, b, 1e-13, 0.0).value;
        a = b;
    }
    let end = 60.0f64.max(a + 1.0);
    acc += quadrature::adaptive(f, a, end, 1e-13, 0.0).value;
    // Beyond `end`, sinh r ≈ e^r/2.
    acc + 2f64.powf(n as f64 - 1.0) * (e * end).exp() / (n as f64 - 1.0)
}

/// `H₂(ρ)` against `ρ^{2-n}/((n-2)ω_{n-1})` at `small` and against
/// `2^{n-1}e^{-(n-1)ρ}/((n-1)ω_{n-1})` at `large`.
pub fn hyperbolic_asymptotic_ratios(n: usize, small: f64, large: f64) -> Result<(f64, f64)> {
    if n < 3 {
        return Err(Error::param("n", "the small-distance asymptotics need n >= 3"));
    }
    let nf = n as f64;
    let omega = unit_sphere_area(n);
    let near = small.powf(2.0 - nf) / ((nf - 2.0) * omega);
    let far = 2f64.powf(nf - 1.0) * (-(nf - 1.0) * large).exp() / ((nf - 1.0) * omega);
    Ok((hyperbolic_h2(n, small)? / near, hyperbolic_h2(n, large)? / far))
}

/// Log-uniform grid of the input radius for the log-Hankel transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HankelGrid {
    pub rho_min: f64,
    pub rho_max: f64,
    pub points: usize,
}

impl Default for HankelGrid {
    fn default() -> Self {
        Self { rho_min: 1e-14, rho_max: 1e10, points: 4096 }
    }
}

/// `H(k) = ∫_0^∞ a(ρ) J_μ(kρ) dρ` on the reciprocal log grid `k_j = e^{v_j}`,
/// `v_0 = -ln ρ_max`, with power-law bias `q` (`-μ < q < 1/2`).
pub fn hankel_transform(a: &dyn Fn(f64) -> f64, mu: f64, q: f64, grid: &HankelGrid) -> (Vec<f64>, Vec<f64>) {
    let n = grid.points;
    let u0 = grid.rho_min.ln();
    let du = (grid.rho_max.ln() - u0) / (n as f64 - 1.0);
    let mut data: Vec<Complex64> = (0..n)
        .map(|k| {
            let u = u0 + k as f64 * du;
            let rho = u.exp();
            Complex64::new(a(rho) * rho.powf(1.0 - q), 0.0)
        })
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut data);
    let v0 = -(u0 + (n as f64 - 1.0) * du);
    let half = n / 2;
    for (idx, c) in data.iter_mut().enumerate() {
        let m = if idx < half { idx as f64 } else { idx as f64 - n as f64 };
        if idx == half {
            *c = Complex64::new(0.0, 0.0);
            continue;
        }
        let eta = 2.0 * PI * m / (n as f64 * du);
        let s = Complex64::new(q, eta);
        let ln_m = (s - 1.0) * 2f64.ln() + ln_gamma_complex((mu + s) / 2.0) - ln_gamma_complex((mu - s) / 2.0 + 1.0);
        let phase = Complex64::new(0.0, -eta * (u0 + v0)).exp();
        *c = *c / n as f64 * ln_m.exp() * phase;
    }
    planner.plan_fft_forward(n).process(&mut data);
    let ks: Vec<f64> = (0..n).map(|j| (v0 + j as f64 * du).exp()).collect();
    let hs = ks.iter().zip(&data).map(|(k, c)| c.re * k.powf(-q)).collect();
    (ks, hs)
}

/// Sampled radial function `r ↦ F(r)` on an increasing grid, interpolated
/// linearly in `log r` after scaling by `r^{n-α}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialProfile {
    pub n: usize,
    pub alpha: f64,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    /// Max relative deviation from a half-resolution transform over the requested radii.
    pub error_estimate: f64,
}

impl RadialProfile {
    pub fn at(&self, r: f64) -> f64 {
        let e = self.n as f64 - self.alpha;
        let m = self.radii.len();
        if m == 0 {
            return 0.0;
        }
        if r <= self.radii[0] {
            return self.values[0] * (self.radii[0] / r).powf(e);
        }
        if r >= self.radii[m - 1] {
            // Power-law continuation from the last two samples when they share a sign.
            let (r1, r2, v1, v2) = (self.radii[m - 2], self.radii[m - 1], self.values[m - 2], self.values[m - 1]);
            if v1 * v2 > 0.0 {
                let slope = (v2 / v1).ln() / (r2 / r1).ln();
                return v2 * (r / r2).powf(slope);
            }
            return 0.0;
        }
        let i = self.radii.partition_point(|x| *x <= r) - 1;
        let (ra, rb) = (self.radii[i], self.radii[i + 1]);
        let (va, vb) = (self.values[i], self.values[i + 1]);
        let t = (r / ra).ln() / (rb / ra).ln();
        if va * vb > 0.0 {
            // Log-log interpolation: exact on power laws, second order on exponential decay.
            return va * (vb / va).powf(t);
        }
        let (sa, sb) = (va * ra.powf(e), vb * rb.powf(e));
        (sa + t * (sb - sa)) * r.powf(-e)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("r,value\n");
        for (r, v) in self.radii.iter().zip(&self.values) {
            s.push_str(&format!("{r:.12e},{v:.12e}\n"));
        }
        s
    }
}

/// Bias for the radial inverse transform of a residual behaving like
/// `ρ^{-α}` at 0 and `ρ^{-α-2}` at ∞, balanced against the grid's decades.
fn residual_bias(n: usize, alpha: f64, grid: &HankelGrid) -> Result<f64> {
    let h = n as f64 / 2.0;
    let lo = (h - alpha - 1.0).max(1.0 - h);
    let hi = (h - alpha + 1.0).min(0.5);
    if !(hi > lo) {
        return Err(Error::Unsupported(format!("no admissible transform bias for n = {n}, alpha = {alpha}")));
    }
    let (d0, d1) = (-grid.rho_min.log10(), grid.rho_max.log10());
    // Equalise the truncated magnitudes ρ^{h-α+1-q} at ρ_min and ρ^{h-α-1-q} at ρ_max.
    let q = ((h - alpha + 1.0) * d0 + (h - alpha - 1.0) * d1) / (d0 + d1);
    let w = hi - lo;
    Ok(q.clamp(lo + 0.1 * w, hi - 0.1 * w))
}

/// Bias for transforming `1/p` directly: `ρ^{n/2}/p` behaves like `ρ^{n/2-low}` at 0 and
/// `ρ^{n/2-α}` at ∞, and the Bessel Mellin factor converges conditionally for `q < 3/2`.
fn direct_bias(n: usize, alpha: f64, low: f64) -> Option<f64> {
    let h = n as f64 / 2.0;
    let lo = (h - alpha + 1.0).max(1.0 - h);
    let hi = (h - low + 1.0).min(1.5);
    (hi - lo >= 0.2).then(|| lo + 0.8 * (hi - lo))
}

/// Radial inverse transform of `1/p`, where `low` is the order of `p` at the origin.
/// Direct when a conditional bias exists, otherwise
/// `K(r) = (c_α/κ) r^{α-n} + F^{-1}[residual](r)` with `1/p = 1/(κ|2πξ|^α) + residual`.
fn radial_inverse(
    n: usize,
    alpha: f64,
    inverse: &InverseSymbol<'_>,
    grid: &HankelGrid,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let h = n as f64 / 2.0;
    let (ks, hs, singular) = match direct_bias(n, alpha, inverse.low) {
        Some(q) => {
            let (ks, hs) = hankel_transform(&|rho| (inverse.full)(rho) * rho.powf(h), h - 1.0, q, grid);
            (ks, hs, 0.0)
        }
        None => {
            let q = residual_bias(n, alpha, grid)?;
            let (ks, hs) = hankel_transform(&|rho| (inverse.residual)(rho) * rho.powf(h), h - 1.0, q, grid);
            (ks, hs, riesz_constant(n, alpha)? / inverse.kappa)
        }
    };
    let radii: Vec<f64> = ks.iter().map(|k| k / (2.0 * PI)).collect();
    let values = radii
        .iter()
        .zip(&hs)
        .map(|(r, hv)| singular * r.powf(alpha - n as f64) + 2.0 * PI * r.powf(1.0 - h) * hv)
        .collect();
    Ok((radii, values))
}

/// `1/p` as a function of `ρ = |ξ|`, with its residual after removing `1/(κ|2πξ|^α)`.
struct InverseSymbol<'a> {
    low: f64,
    kappa: f64,
    full: &'a dyn Fn(f64) -> f64,
    residual: &'a dyn Fn(f64) -> f64,
}

/// Restricts a transform output to `[r_lo, r_hi]`, where the log-Hankel result is reliable.
fn trim(radii: Vec<f64>, values: Vec<f64>, r_lo: f64, r_hi: f64) -> (Vec<f64>, Vec<f64>) {
    radii.into_iter().zip(values).filter(|(r, _)| *r >= r_lo && *r <= r_hi).unzip()
}

/// Profile on the trusted output window with a half-resolution error estimate at `check`.
fn radial_profile_with_error(
    n: usize,
    alpha: f64,
    inverse: &InverseSymbol<'_>,
    grid: &HankelGrid,
    check: &[f64],
) -> Result<RadialProfile> {
    let (r_lo, r_hi) = (1e-8, 1e5);
    let (radii, values) = radial_inverse(n, alpha, inverse, grid)?;
    let (radii, values) = trim(radii, values, r_lo, r_hi);
    let coarse_grid = HankelGrid { points: grid.points / 2, ..*grid };
    let (cr, cv) = radial_inverse(n, alpha, inverse, &coarse_grid)?;
    let (cr, cv) = trim(cr, cv, r_lo, r_hi);
    let fine = RadialProfile { n, alpha, radii, values, error_estimate: 0.0 };
    let coarse = RadialProfile { n, alpha, radii: cr, values: cv, error_estimate: 0.0 };
    let error_estimate = check
        .iter()
        .map(|r| {
            let (a, b) = (fine.at(*r), coarse.at(*r));
            (a - b).abs() / a.abs().max(1e-300)
        })
        .fold(0.0, f64::max);
    Ok(RadialProfile { error_estimate, ..fine })
}

/// Bessel kernel `G_α` by radial inverse Fourier transform of
/// `(1+4π²|ξ|²)^{-α/2}`, sampled at `radii`.
pub fn bessel_kernel(n: usize, alpha: f64, radii: &[f64], grid: &HankelGrid) -> Result<RadialProfile> {
    check_order(n, alpha)?;
    if radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::param("radii", "must be positive"));
    }
    let residual = |rho: f64| {
        let w = 2.0 * PI * rho;
        (1.0 + w * w).powf(-alpha / 2.0) - w.powf(-alpha)
    };
    let direct = |rho: f64| (1.0 + 4.0 * PI * PI * rho * rho).powf(-alpha / 2.0);
    let inverse = InverseSymbol { low: 0.0, kappa: 1.0, full: &direct, residual: &residual };
    let full = radial_profile_with_error(n, alpha, &inverse, grid, radii)?;
    if full.error_estimate > 1e-2 {
        return Err(Error::UnderResolved(format!(
            "relative change {:.3e} between {} and {} transform points",
            full.error_estimate,
            grid.points,
            grid.points / 2
        )));
    }
    let values = radii.iter().map(|r| full.at(*r)).collect();
    Ok(RadialProfile { n, alpha, radii: radii.to_vec(), values, error_estimate: full.error_estimate })
}

/// Radial fundamental solution of `p(ξ) = Σ_m b_m |ξ|^{2m}` on the default grid.
pub fn radial_symbol_profile(symbol: &PolySymbol) -> Result<RadialProfile> {
    let b = symbol
        .radial_coefficients()
        .ok_or_else(|| Error::Unsupported("symbol is not radial".into()))?;
    let n = symbol.n;
    let alpha = symbol.alpha as f64;
    let top = *b.last().expect("nonempty");
    // κ|2πξ|^α = top |ξ|^α.
    let kappa = top / (2.0 * PI).powf(alpha);
    if !(kappa > 0.0) {
        return Err(Error::Precondition("principal coefficient must be positive".into()));
    }
    let lowest = b.iter().position(|c| *c != 0.0).unwrap_or(0);
    if 2 * lowest >= n {
        return Err(Error::Precondition("1/p is not locally integrable at ξ = 0".into()));
    }
    let residual = move |rho: f64| {
        let p: f64 = b.iter().enumerate().map(|(m, c)| c * rho.powi(2 * m as i32)).sum();
        let t = top * rho.powf(alpha);
        // 1/p - 1/t = (t - p)/(p t); the numerator drops the top term exactly.
        let lower: f64 = b[..b.len() - 1].iter().enumerate().map(|(m, c)| c * rho.powi(2 * m as i32)).sum();
        if p == 0.0 || t == 0.0 {
            return 0.0;
        }
        -lower / (p * t)
    };
    let coeffs = symbol.radial_coefficients().expect("radial");
    let direct = move |rho: f64| {
        let p: f64 = coeffs.iter().enumerate().map(|(m, c)| c * rho.powi(2 * m as i32)).sum();
        if p == 0.0 { 0.0 } else { 1.0 / p }
    };
    let inverse = InverseSymbol { low: 2.0 * lowest as f64, kappa, full: &direct, residual: &residual };
    let check = [1e-3, 1e-2, 0.1, 1.0, 3.0];
    radial_profile_with_error(n, alpha, &inverse, &HankelGrid::default(), &check)
}

fn profile_cache() -> &'static Mutex<HashMap<String, Arc<RadialProfile>>> {
    static CACHE: OnceLock<Mutex<HashMap<String, Arc<RadialProfile>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn cached_symbol_profile(symbol: &PolySymbol) -> Result<Arc<RadialProfile>> {
    let key = serde_json::to_string(symbol).map_err(|e| Error::Io(e.to_string()))?;
    if let Some(p) = profile_cache().lock().expect("cache lock").get(&key) {
        return Ok(p.clone());
    }
    let p = Arc::new(radial_symbol_profile(symbol)?);
    profile_cache().lock().expect("cache lock").insert(key, p.clone());
    Ok(p)
}

/// Cartesian grid: `points` per axis and physical box `box_len` (`dξ = 1/box_len`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FftGrid {
    pub points: usize,
    pub box_len: f64,
}

impl Default for FftGrid {
    fn default() -> Self {
        Self { points: 256, box_len: 24.0 }
    }
}

/// Samples of a field at points with a refinement error estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldSamples {
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    /// Max relative difference to the half-resolution grid at shared points.
    pub error_estimate: f64,
}

impl FieldSamples {
    pub fn radii(&self) -> Vec<f64> {
        self.points.iter().map(|p| norm(p)).collect()
    }

    pub fn to_csv(&self) -> String {
        let n = self.points.first().map_or(0, |p| p.len());
        let mut s: String = (1..=n).map(|i| format!("x{i},")).collect();
        s.push_str("value\n");
        for (p, v) in self.points.iter().zip(&self.values) {
            for c in p {
                s.push_str(&format!("{c:.10e},"));
            }
            s.push_str(&format!("{v:.12e}\n"));
        }
        s
    }
}

/// Radial cutoff: 1 on `s <= 1`, 0 on `s >= 2`, `C⁴` in between.
pub fn cutoff(s: f64) -> f64 {
    if s <= 1.0 {
        return 1.0;
    }
    if s >= 2.0 {
        return 0.0;
    }
    let t = s - 1.0;
    1.0 - t.powi(5) * (126.0 - 420.0 * t + 540.0 * t * t - 315.0 * t.powi(3) + 70.0 * t.powi(4))
}

/// In-place multidimensional FFT along every axis of an `N^dims` array.
fn fft_nd(data: &mut [Complex64], side: usize, dims: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let plan = if inverse { planner.plan_fft_inverse(side) } else { planner.plan_fft_forward(side) };
    let total = data.len();
    for axis in 0..dims {
        let stride = side.pow((dims - 1 - axis) as u32);
        if stride == 1 {
            plan.process(data);
            continue;
        }
        let block = stride * side;
        let mut line = vec![Complex64::new(0.0, 0.0); side];
        for base in (0..total).step_by(block) {
            for inner in 0..stride {
                for (k, l) in line.iter_mut().enumerate() {
                    *l = data[base + inner + k * stride];
                }
                plan.process(&mut line);
                for (k, l) in line.iter().enumerate() {
                    data[base + inner + k * stride] = *l;
                }
            }
        }
    }
}

/// One fourth-order Laplacian pass; entries within 2 of the border are zeroed.
fn laplacian_pass(src: &[f64], dst: &mut [f64], side: usize, dims: usize, h: f64) {
    let strides: Vec<usize> = (0..dims).map(|a| side.pow((dims - 1 - a) as u32)).collect();
    let w = 1.0 / (12.0 * h * h);
    dst.par_iter_mut().enumerate().for_each(|(i, out)| {
        let mut rem = i;
        let mut interior = true;
        for s in &strides {
            let c = rem / s;
            rem %= s;
            if c < 2 || c + 2 >= side {
                interior = false;
            }
        }
        if !interior {
            *out = 0.0;
            return;
        }
        let mut acc = 0.0;
        for s in &strides {
            acc += -src[i - 2 * s] + 16.0 * src[i - s] - 30.0 * src[i] + 16.0 * src[i + s] - src[i + 2 * s];
        }
        *out = acc * w;
    });
}

/// `K_P` on the lattice `x_j = j/(N dξ)`, assembled from the smooth part
/// `F^{-1}[η/p]` and `(-1)^ℓ (2π|x|)^{-2ℓ} F^{-1}[Δ^ℓ((1-η)/p)]`.
fn assemble_grid(p: &PolySymbol, grid: &FftGrid, ell: u32, cutoff_radius: f64) -> Vec<f64> {
    let (side, dims) = (grid.points, p.n);
    let dxi = 1.0 / grid.box_len;
    let margin = 2 * ell as usize;
    let ext = side + 2 * margin;
    let half = (side / 2) as i64;
    let coord_ext = |idx: usize| (idx as i64 - half - margin as i64) as f64 * dxi;
    let total_ext = ext.pow(dims as u32);
    let decode = |mut i: usize, s: usize| -> Vec<usize> {
        let mut c = vec![0; dims];
        for a in (0..dims).rev() {
            c[a] = i % s;
            i /= s;
        }
        c
    };
    let mut outer: Vec<f64> = (0..total_ext)
        .into_par_iter()
        .map(|i| {
            let xi: Vec<f64> = decode(i, ext).into_iter().map(coord_ext).collect();
            let weight = 1.0 - cutoff(norm(&xi) / cutoff_radius);
            if weight == 0.0 { 0.0 } else { weight / p.eval(&xi).re }
        })
        .collect();
    let mut scratch = vec![0.0; total_ext];
    for _ in 0..ell {
        laplacian_pass(&outer, &mut scratch, ext, dims, dxi);
        std::mem::swap(&mut outer, &mut scratch);
    }
    drop(scratch);
    let p0 = p.eval(&vec![0.0; dims]).re;
    let total = side.pow(dims as u32);
    let mut data: Vec<Complex64> = (0..total)
        .into_par_iter()
        .map(|pos| {
            // Array position ↔ frequency index k ∈ [-N/2, N/2).
            let c = decode(pos, side);
            let ks: Vec<i64> = c.iter().map(|&v| if (v as i64) < half { v as i64 } else { v as i64 - side as i64 }).collect();
            if ks.iter().any(|k| *k == -half) {
                return Complex64::new(0.0, 0.0);
            }
            let xi: Vec<f64> = ks.iter().map(|k| *k as f64 * dxi).collect();
            let inner = if ks.iter().all(|k| *k == 0) && p0 == 0.0 {
                // Cell average of the integrable singularity 1/p.
                let m: usize = 16;
                let mut acc = 0.0;
                for sub in 0..m.pow(dims as u32) {
                    let pt: Vec<f64> = decode(sub, m).iter().map(|j| ((*j as f64 + 0.5) / m as f64 - 0.5) * dxi).collect();
                    acc += cutoff(norm(&pt) / cutoff_radius) / p.eval(&pt).re;
                }
                acc / m.pow(dims as u32) as f64
            } else {
                cutoff(norm(&xi) / cutoff_radius) / p.eval(&xi).re
            };
            let e_idx = ks.iter().fold(0usize, |acc, k| acc * ext + (k + half + margin as i64) as usize);
            Complex64::new(inner, outer[e_idx])
        })
        .collect();
    drop(outer);
    fft_nd(&mut data, side, dims, true);
    let cell = dxi.powi(dims as i32);
    let dx = grid.box_len / side as f64;
    let sign = if ell % 2 == 0 { 1.0 } else { -1.0 };
    data.par_iter()
        .enumerate()
        .map(|(pos, v)| {
            let c = decode(pos, side);
            let r = c
                .iter()
                .map(|&j| {
                    let jj = if (j as i64) < half { j as f64 } else { j as f64 - side as f64 };
                    (jj * dx).powi(2)
                })
                .sum::<f64>()
                .sqrt();
            if r == 0.0 {
                return f64::NAN;
            }
            cell * (v.re + sign * (2.0 * PI * r).powi(-2 * ell as i32) * v.im)
        })
        .collect()
}

/// Fundamental solution `K_P` of an elliptic symbol.
///
/// For `n <= 3` the field is assembled on a Cartesian FFT grid and sampled at
/// grid points `j d` along each integer direction `d` with `|x| ∈ [r_min, r_max]`;
/// the error estimate compares against the half-resolution grid on the same box.
/// For `n >= 4` radial symbols use the log-Hankel transform at the same points.
pub fn fundamental_solution_fft(
    p: &PolySymbol,
    grid: &FftGrid,
    ell: Option<u32>,
    cutoff_radius: f64,
    directions: &[Vec<i64>],
    r_range: (f64, f64),
) -> Result<FieldSamples> {
    let n = p.n;
    let alpha = p.alpha as f64;
    check_order(n, alpha)?;
    let margins = ellipticity_margins(p, 2048);
    if !margins.elliptic {
        return Err(Error::Precondition(format!("ellipticity margin {:.3e} is not positive", margins.c0)));
    }
    if !(margins.c1 > 0.0) {
        return Err(Error::Precondition("p vanishes away from the origin".into()));
    }
    let ell = ell.unwrap_or(((n as f64 - alpha) / 2.0).ceil() as u32 + 1);
    if 2.0 * ell as f64 <= n as f64 - alpha {
        return Err(Error::param("ell", "requires ell > (n - alpha)/2"));
    }
    if !(cutoff_radius > 0.0) {
        return Err(Error::param("cutoff_radius", "must be positive"));
    }
    if grid.box_len < 8.0 * r_range.1 {
        return Err(Error::param("grid", "box length must be at least 8 times the largest requested radius"));
    }
    if directions.iter().any(|d| d.len() != n || d.iter().all(|c| *c == 0)) {
        return Err(Error::param("directions", "need nonzero integer vectors of length n"));
    }
    let dx = grid.box_len / grid.points as f64;
    let mut lattice: Vec<(Vec<i64>, i64)> = Vec::new();
    for d in directions {
        let len = d.iter().map(|c| (*c as f64).powi(2)).sum::<f64>().sqrt() * dx;
        let mut j = 1;
        while j as f64 * len <= r_range.1 {
            if j as f64 * len >= r_range.0 {
                lattice.push((d.clone(), j));
            }
            j += 1;
        }
    }
    let points: Vec<Vec<f64>> = lattice.iter().map(|(d, j)| d.iter().map(|c| (c * j) as f64 * dx).collect()).collect();
    if n >= 4 {
        let profile = radial_symbol_profile(p)?;
        let values = points.iter().map(|x| profile.at(norm(x))).collect();
        return Ok(FieldSamples { points, values, error_estimate: profile.error_estimate });
    }
    if !p.is_real_even() {
        return Err(Error::Unsupported("Cartesian assembly needs a real even symbol".into()));
    }
    if grid.points % 4 != 0 {
        return Err(Error::param("grid", "points per axis must be divisible by 4"));
    }
    let index = |side: usize, mult: &[i64]| -> usize {
        mult.iter().fold(0usize, |acc, m| acc * side + m.rem_euclid(side as i64) as usize)
    };
    let fine = assemble_grid(p, grid, ell, cutoff_radius);
    let values: Vec<f64> = lattice
        .iter()
        .map(|(d, j)| fine[index(grid.points, &d.iter().map(|c| c * j).collect::<Vec<_>>())])
        .collect();
    drop(fine);
    let coarse_grid = FftGrid { points: grid.points / 2, box_len: grid.box_len };
    let coarse = assemble_grid(p, &coarse_grid, ell, cutoff_radius);
    let error_estimate = lattice
        .iter()
        .zip(&values)
        .filter(|((_, j), _)| j % 2 == 0)
        .map(|((d, j), v)| {
            let c = coarse[index(coarse_grid.points, &d.iter().map(|c| c * j / 2).collect::<Vec<_>>())];
            (c - v).abs() / v.abs().max(1e-300)
        })
        .fold(0.0, f64::max);
    Ok(FieldSamples { points, values, error_estimate })
}

/// Tail integral verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum TailNorm {
    Finite { value: f64 },
    Divergent { rate: f64 },
    Undecided { value: f64 },
}

/// Local coefficient fit and tail integrability of a kernel `K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticsReport {
    /// Limit of `K(rω) r^{n-α}` as `r → 0` along `ω = e_1`.
    pub fitted_constant: f64,
    /// Per-direction limits for the directions in `directions`.
    pub directional_constants: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
    /// `ε` in `K = g |x|^{α-n} + O(|x|^{α-n+ε})`; infinite when the remainder vanishes.
    pub residual_exponent: f64,
    /// `∫_{|x|>=R} |K|^{n/(n-α)}`.
    pub tail_norm: TailNorm,
    pub tail_sup: f64,
    /// Local expansion fitted and, when a candidate is given, matched within 5%.
    pub local_pass: bool,
    /// Tail in `L^{n/(n-α)} ∩ L^∞`.
    pub tail_pass: bool,
    /// Fit residuals were not monotone.
    pub inconclusive: bool,
}

/// Fit of `v(r) = g + b r^ε` from values at `r_k = 2^{-k}`.
fn fit_local(values: &[f64]) -> (f64, f64, bool) {
    let m = values.len();
    let last = values[m - 1];
    let diffs: Vec<f64> = values.windows(2).map(|w| w[0] - w[1]).collect();
    let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if diffs.iter().rev().take(4).all(|d| d.abs() <= 1e-11 * scale) {
        return (last, f64::INFINITY, true);
    }
    let logs: Vec<f64> = diffs.windows(2).rev().take(5).map(|w| (w[0] / w[1]).abs().log2()).collect();
    let monotone = diffs.windows(2).rev().take(5).all(|w| w[0] * w[1] > 0.0);
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    let spread = logs.iter().map(|l| (l - mean).abs()).fold(0.0, f64::max);
    let eps = logs[0];
    let g = last - diffs[m - 2] / (2f64.powf(eps) - 1.0);
    (g, eps, monotone && spread < 0.5 && eps > 0.0)
}

/// Fits the local expansion on `r = 2^{-4..=22}` and evaluates the tail
/// beyond `radius`. `candidate` is the expected `g(ω)`, if any.
pub fn asymptotics_check(spec: &KernelSpec, candidate: Option<&dyn Fn(&[f64]) -> f64>, radius: f64) -> Result<AsymptoticsReport> {
    spec.validate()?;
    if !(radius > 0.0) {
        return Err(Error::param("radius", "must be positive"));
    }
    let n = spec.dim();
    let nf = n as f64;
    let alpha = spec.order();
    let mut directions = vec![{
        let mut e = vec![0.0; n];
        e[0] = 1.0;
        e
    }];
    directions.push(vec![1.0 / nf.sqrt(); n]);
    directions.extend(halton_sphere(n, 4));
    if let KernelSpec::Drift { b, .. } = spec {
        let nb = norm(b);
        directions.push(b.iter().map(|c| c / nb).collect());
        directions.push(b.iter().map(|c| -c / nb).collect());
    }
    let mut constants = Vec::new();
    let mut stable = true;
    let mut residual = f64::INFINITY;
    for (i, w) in directions.iter().enumerate() {
        let vals: Vec<f64> = (4..=22)
            .map(|k| {
                let r = 2f64.powi(-k);
                let z: Vec<f64> = w.iter().map(|c| c * r).collect();
                spec.profile(&z).map(|v| v * r.powf(nf - alpha))
            })
            .collect::<Result<_>>()?;
        let (g, eps, ok) = fit_local(&vals);
        stable &= ok;
        if i == 0 {
            residual = eps;
        }
        constants.push(g);
    }
    let matches = match candidate {
        Some(g) => directions.iter().zip(&constants).all(|(w, c)| (c / g(w) - 1.0).abs() < 0.05),
        None => true,
    };
    let p = nf / (nf - alpha);
    let rule = DoublingRule { max_doublings: 44, ..DoublingRule::default() };
    let series = match spec {
        KernelSpec::Drift { a, b, .. } => {
            let frame = drift_frame(n, a, b)?;
            let bn = norm(frame.b.as_slice());
            let bhat: Vec<f64> = frame.b.iter().map(|c| c / bn).collect();
            // Orthonormal partner of b̂ spans the meridian plane.
            let mut perp = vec![0.0; n];
            let k = (0..n).min_by(|&i, &j| bhat[i].abs().total_cmp(&bhat[j].abs())).unwrap_or(0);
            perp[k] = 1.0;
            let dot: f64 = perp.iter().zip(&bhat).map(|(x, y)| x * y).sum();
            perp.iter_mut().zip(&bhat).for_each(|(x, y)| *x -= dot * y);
            let pn = norm(&perp);
            perp.iter_mut().for_each(|x| *x /= pn);
            let shell = unit_sphere_area(n - 1);
            let inner = |r: f64| {
                let f = |theta: f64| {
                    let y: Vec<f64> = bhat.iter().zip(&perp).map(|(u, v)| r * (theta.cos() * u + theta.sin() * v)).collect();
                    // Integrate in transformed coordinates y = A^{-1/2} x.
                    let val = drift_identity(n, alpha, &y, frame.b.as_slice()) * frame.det_factor;
                    val.abs().powf(p) * theta.sin().powi(n as i32 - 2)
                };
                let w = (8.0 / (r * bn * p).sqrt()).min(PI);
                let split = PI - w;
                let mut v = quadrature::adaptive(f, split, PI, 1e-10, 0.0).value;
                if split > 0.0 {
                    v += quadrature::adaptive(f, 0.0, split, 1e-10, 0.0).value;
                }
                v * shell
            };
            // dx = det(A)^{1/2} dy.
            let jac = frame.det_factor.recip();
            rule.run(radius, |lo, hi| jac * quadrature::adaptive(|r| r.powi(n as i32 - 1) * inner(r), lo, hi, 1e-9, 0.0).value)
        }
        _ => {
            let (f, _) = spec.radial_profile().ok_or_else(|| Error::Unsupported("tail needs a radial or drift kernel".into()))?;
            let omega = unit_sphere_area(n);
            rule.run(radius, |lo, hi| {
                quadrature::adaptive(|r| omega * f(r).abs().powf(p) * r.powi(n as i32 - 1), lo, hi, 1e-10, 0.0).value
            })
        }
    };
    let tail_norm = match series.verdict {
        SeriesVerdict::Finite { value, .. } => TailNorm::Finite { value },
        SeriesVerdict::Divergent { rate } => TailNorm::Divergent { rate },
        SeriesVerdict::Undecided { value } => TailNorm::Undecided { value },
    };
    let tail_sup = directions
        .iter()
        .flat_map(|w| {
            (0..=300).map(move |k| {
                let r = radius * 10f64.powf(k as f64 / 30.0);
                w.iter().map(|c| c * r).collect::<Vec<f64>>()
            })
        })
        .map(|z| spec.profile(&z).map(f64::abs))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let tail_pass = matches!(tail_norm, TailNorm::Finite { .. }) && tail_sup.is_finite();
    Ok(AsymptoticsReport {
        fitted_constant: constants[0],
        directional_constants: constants,
        directions,
        residual_exponent: residual,
        tail_norm,
        tail_sup,
        local_pass: stable && matches,
        tail_pass,
        inconclusive: !stable,
    })
}

/// Analytic constant `C` with `|K(x,y)| <= C R₁ |x-y|^{α-n-1}` for `|x-y| >= 4R₁`.
pub fn agmon_far_constant(n: usize, alpha: f64) -> Result<f64> {
    let c = riesz_constant(n, alpha)?;
    Ok(c * (n as f64 - alpha) * 2f64.powf(n as f64 + 2.0 - alpha))
}

/// Max of `|K(x,y)| / (R₁ |x-y|^{α-n-1})` over pairs with `|x-y| ∈ [lo, hi)`.
pub fn agmon_decay_ratio(spec: &KernelSpec, pairs: &[(Vec<f64>, Vec<f64>)], lo: f64, hi: f64) -> Result<f64> {
    let KernelSpec::AgmonNormalized { n, alpha, cover, .. } = spec else {
        return Err(Error::Unsupported("decay ratio needs an Agmon-normalised kernel".into()));
    };
    let r1 = cover.r1();
    let mut worst = 0.0f64;
    for (x, y) in pairs {
        let d = dist(x, y);
        if d < lo || d >= hi {
            continue;
        }
        let k = spec.eval(x, y)?;
        worst = worst.max(k.abs() / (r1 * d.powf(alpha - *n as f64 - 1.0)));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn riesz_constants() {
        assert_relative_eq!(riesz_constant(4, 2.0).unwrap(), 1.0 / (4.0 * PI * PI), max_relative = 1e-13);
        assert_relative_eq!(riesz_constant(2, 1.0).unwrap(), 1.0 / (2.0 * PI), max_relative = 1e-13);
        assert_relative_eq!(riesz_constant(3, 2.0).unwrap(), 1.0 / (4.0 * PI), max_relative = 1e-13);
        assert!(riesz_constant(2, 2.0).is_err());
    }

    #[test]
    fn riesz_value_and_scaling() {
        let k = KernelSpec::Riesz { n: 2, alpha: 1.0 };
        assert_eq!(k.eval(&[0.0, 0.0], &[2.0, 0.0]).unwrap(), 0.5);
        assert_eq!(k.eval(&[1.0, 1.0], &[1.0, 1.0]), Err(Error::Singular));
    }

    #[test]
    fn bessel_closed_form_in_three_dimensions() {
        for r in [0.1, 1.0, 4.0] {
            assert_relative_eq!(bessel_closed_form(3, 2.0, r), (-r).exp() / (4.0 * PI * r), max_relative = 1e-12);
        }
    }

    #[test]
    fn hankel_matches_bessel_closed_form() {
        let radii = [1e-2, 0.1, 0.5, 1.0, 3.0, 8.0];
        for (n, alpha) in [(2, 1.0), (3, 2.0), (3, 1.0), (6, 4.0)] {
            let prof = bessel_kernel(n, alpha, &radii, &HankelGrid::default()).unwrap();
            for (r, v) in radii.iter().zip(&prof.values) {
                let exact = bessel_closed_form(n, alpha, *r);
                assert!((v / exact - 1.0).abs() < 1e-3, "n={n} α={alpha} r={r}: {v} vs {exact}");
            }
        }
    }

    #[test]
    fn cutoff_is_smooth_partition() {
        assert_eq!(cutoff(0.5), 1.0);
        assert_eq!(cutoff(2.5), 0.0);
        assert_relative_eq!(cutoff(1.5), 0.5, max_relative = 1e-12);
        let h = 1e-4;
        for s in [1.0 + h, 2.0 - h] {
            assert!((cutoff(s + h) - cutoff(s - h)).abs() < 1e-12);
        }
    }

    #[test]
    fn drift_identity_case() {
        let k = KernelSpec::Drift { n: 3, alpha: 2.0, a: vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]], b: vec![0.0, 0.0, 1.0] };
        for x in [[1.0, 0.0, 0.0], [0.3, -0.2, 2.0], [0.0, 0.0, -7.0]] {
            let r = norm(&x);
            let expect = -(-(r + x[2]) / 2.0).exp() / (4.0 * PI * r);
            assert_relative_eq!(k.eval(&x, &[0.0; 3]).unwrap(), expect, max_relative = 1e-12);
        }
        assert!(k.eval(&[0.0, 0.0, 1.0], &[0.0; 3]).unwrap() != k.eval(&[0.0; 3], &[0.0, 0.0, 1.0]).unwrap());
    }

    #[test]
    fn drift_general_matrix_is_linear_change() {
        let a = vec![vec![4.0, 0.0], vec![0.0, 1.0]];
        let k = KernelSpec::Drift { n: 2, alpha: 2.0, a, b: vec![1.0, 1.0] };
        assert!(k.validate().is_err(), "alpha = n is rejected");
        let k = KernelSpec::Drift { n: 3, alpha: 2.0, a: vec![vec![4.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]], b: vec![2.0, 0.0, 0.0] };
        // A^{-1/2} x = (x1/2, x2, x3), A^{-1/2} b = (1, 0, 0), det^{-1/2} = 1/2.
        let x = [1.0, 0.5, 0.0];
        let id = KernelSpec::Drift { n: 3, alpha: 2.0, a: vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]], b: vec![1.0, 0.0, 0.0] };
        let expect = 0.5 * id.eval(&[0.5, 0.5, 0.0], &[0.0; 3]).unwrap();
        assert_relative_eq!(k.eval(&x, &[0.0; 3]).unwrap(), expect, max_relative = 1e-12);
    }

    #[test]
    fn hyperbolic_closed_form_and_quadrature() {
        assert_relative_eq!(hyperbolic_h2(3, 1.0).unwrap(), (1.0 / 1f64.tanh() - 1.0) / (4.0 * PI), max_relative = 1e-12);
        for rho in [1e-3, 0.1, 1.0, 5.0] {
            let q = hyperbolic_h2_quadrature(3, rho) / (4.0 * PI);
            assert_relative_eq!(q, hyperbolic_h2(3, rho).unwrap(), max_relative = 1e-9);
        }
        // n = 2: ∫_ρ^∞ 1/sinh = -ln tanh(ρ/2).
        assert_relative_eq!(hyperbolic_h2(2, 0.7).unwrap(), -(0.35f64.tanh().ln()) / (2.0 * PI), max_relative = 1e-10);
        assert!(hyperbolic_h2(3, 0.0).is_err());
    }

    #[test]
    fn agmon_cover_lexicographic() {
        let c = AgmonCover::Lattice { r1: 0.5f64.sqrt() };
        // (0,-1), (0,0), (1,0) and (1,1) lie within 2R₁ of (0.6, 0.1); the lexicographic first wins.
        assert_eq!(c.center_for(&[0.6, 0.1]).unwrap(), vec![0.0, -1.0]);
        let p = AgmonCover::Points { centers: vec![vec![5.0, 5.0], vec![0.0, 0.0]], r1: 1.0 };
        assert_eq!(p.center_for(&[0.5, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert!(p.center_for(&[20.0, 0.0]).is_none());
    }

    #[test]
    fn riesz_asymptotics() {
        let r = asymptotics_check(&KernelSpec::Riesz { n: 2, alpha: 1.0 }, Some(&|_: &[f64]| 1.0), 1.0).unwrap();
        assert_relative_eq!(r.fitted_constant, 1.0, max_relative = 1e-12);
        assert!(r.local_pass);
        assert!(matches!(r.tail_norm, TailNorm::Divergent { .. }));
        assert!(!r.tail_pass);
    }
}
