//! Potentials of radial sources, regularized exponentials, exponential
//! functionals, and the extremal and failure families built on them.
//!
//! All potentials are for translation-invariant radial kernels `K(|x-y|)`
//! acting on radially symmetric sources, which covers every family used by
//! the experiments while keeping each value a deterministic nested quadrature.

use crate::domain::DomainSpec;
use crate::fit;
use crate::kernel::{riesz_constant, KernelSpec, RadialFn};
use crate::measure::{DoublingRule, SeriesVerdict};
use crate::quadrature::{adaptive, gauss_legendre_on};
use crate::special::{ln_gamma, unit_ball_volume, unit_sphere_area};
use crate::symbol::sharp_constant_grad;
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// `exp_m(t) = e^t - Σ_{k≤m} t^k/k!`.
///
/// Below `t = m+1` the terms of the tail series decrease from the first, so
/// summing the tail avoids the cancellation of the subtraction form.
pub fn exp_regularized(t: f64, m: u32) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    if t.abs() < m as f64 + 1.0 {
        let mut k = m as f64 + 1.0;
        let mut term = (k * t.abs().ln() - ln_gamma(k + 1.0)).exp();
        if t < 0.0 && (m + 1) % 2 == 1 {
            term = -term;
        }
        let mut sum = term;
        loop {
            k += 1.0;
            term *= t / k;
            sum += term;
            if term.abs() <= 1e-17 * sum.abs() {
                return sum;
            }
        }
    }
    t.exp() - taylor_head(t, m)
}

fn taylor_head(t: f64, m: u32) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..=m {
        term *= t / k as f64;
        sum += term;
    }
    sum
}

/// `ln exp_m(t)` for `t ≥ 0`, finite far beyond the overflow of `e^t`.
pub fn ln_exp_regularized(t: f64, m: u32) -> f64 {
    if t < m as f64 + 1.0 || t < 700.0 {
        return exp_regularized(t, m).ln();
    }
    // Σ_{k≤m} t^k/k! < e^t, so the log of the ratio is finite.
    let lt = t.ln();
    let ratio: f64 = (0..=m).map(|k| (k as f64 * lt - ln_gamma(k as f64 + 1.0) - t).exp()).sum();
    t + (-ratio).ln_1p()
}

/// `[λ]`: the smallest integer at least `λ`, clamped at zero.
pub fn regularization_order(lambda: f64) -> u32 {
    lambda.ceil().max(0.0) as u32
}

#[derive(Clone)]
enum Shape {
    Constant(f64),
    Power { coeff: f64, exponent: f64 },
    Profile { f: RadialFn, scale: f64 },
}

#[derive(Clone)]
struct Piece {
    lo: f64,
    hi: f64,
    shape: Shape,
}

impl Piece {
    fn value(&self, rho: f64) -> f64 {
        match &self.shape {
            Shape::Constant(c) => *c,
            Shape::Power { coeff, exponent } => coeff * rho.powf(*exponent),
            Shape::Profile { f, scale } => scale * f(rho),
        }
    }

    fn scaled(&self, c: f64) -> Piece {
        let shape = match &self.shape {
            Shape::Constant(v) => Shape::Constant(v * c),
            Shape::Power { coeff, exponent } => Shape::Power { coeff: coeff * c, exponent: *exponent },
            Shape::Profile { f, scale } => Shape::Profile { f: f.clone(), scale: scale * c },
        };
        Piece { lo: self.lo, hi: self.hi, shape }
    }

    /// `∫_lo^hi |f|^p ρ^{n-1} dρ`.
    fn radial_moment(&self, n: usize, p: f64) -> f64 {
        let nf = n as f64;
        let power_moment = |c: f64, e: f64| {
            let q = p * e + nf;
            let i = if q.abs() < 1e-14 { (self.hi / self.lo).ln() } else { (self.hi.powf(q) - self.lo.powf(q)) / q };
            c.abs().powf(p) * i
        };
        match &self.shape {
            Shape::Constant(c) => power_moment(*c, 0.0),
            Shape::Power { coeff, exponent } => power_moment(*coeff, *exponent),
            Shape::Profile { .. } => {
                let (a, b) = (self.lo.max(1e-300).ln(), self.hi.ln());
                adaptive(|u| { let r = u.exp(); self.value(r).abs().powf(p) * r.powf(nf) }, a, b, 1e-11, 0.0).value
            }
        }
    }
}

/// A radially symmetric source `f(|y|)` on `ℝⁿ`, piecewise on disjoint
/// intervals `[lo, hi)` of the radius.
#[derive(Clone)]
pub struct RadialSource {
    n: usize,
    pieces: Vec<Piece>,
}

impl std::fmt::Debug for RadialSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RadialSource").field("n", &self.n).field("breakpoints", &self.breakpoints()).finish()
    }
}

impl RadialSource {
    pub fn zero(n: usize) -> Self {
        Self { n, pieces: Vec::new() }
    }

    pub fn indicator_ball(n: usize, radius: f64) -> Result<Self> {
        Self::steps(n, vec![0.0, radius], vec![1.0])
    }

    /// `values[i]` on `[edges[i], edges[i+1])`.
    pub fn steps(n: usize, edges: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if edges.len() != values.len() + 1 || edges.windows(2).any(|w| !(w[1] > w[0])) || edges[0] < 0.0 {
            return Err(Error::param("edges", "need increasing nonnegative edges, one more than values"));
        }
        let pieces = edges
            .windows(2)
            .zip(values)
            .filter(|(_, v)| *v != 0.0)
            .map(|(w, v)| Piece { lo: w[0], hi: w[1], shape: Shape::Constant(v) })
            .collect();
        Ok(Self { n, pieces })
    }

    /// `coeff ρ^exponent` on `[lo, hi)` with `lo > 0`.
    pub fn power(n: usize, coeff: f64, exponent: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::param("support", "need 0 < lo < hi < ∞"));
        }
        Ok(Self { n, pieces: vec![Piece { lo, hi, shape: Shape::Power { coeff, exponent } }] })
    }

    /// `f(ρ)` on `[lo, hi)` with `lo > 0`.
    pub fn profile(n: usize, f: RadialFn, lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::param("support", "need 0 < lo < hi < ∞"));
        }
        Ok(Self { n, pieces: vec![Piece { lo, hi, shape: Shape::Profile { f, scale: 1.0 } }] })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_zero(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn value(&self, rho: f64) -> f64 {
        self.pieces.iter().find(|p| rho >= p.lo && rho < p.hi).map_or(0.0, |p| p.value(rho))
    }

    /// Piece edges in increasing order, deduplicated.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.pieces.iter().flat_map(|p| [p.lo, p.hi]).collect();
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    pub fn support_end(&self) -> f64 {
        self.pieces.iter().map(|p| p.hi).fold(0.0, f64::max)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { n: self.n, pieces: self.pieces.iter().map(|p| p.scaled(c)).collect() }
    }

    /// `‖f‖_p^p`.
    pub fn norm_pow(&self, p: f64) -> f64 {
        unit_sphere_area(self.n) * self.pieces.iter().map(|q| q.radial_moment(self.n, p)).sum::<f64>()
    }

    pub fn norm(&self, p: f64) -> f64 {
        self.norm_pow(p).powf(1.0 / p)
    }

    /// Spherical integral `ω_{n-2} ∫_0^π f(|x + rθ|) sin^{n-2}θ dθ` with `|x| = s`.
    fn spherical_integral(&self, s: f64, r: f64, tol: f64) -> (f64, f64) {
        let n = self.n;
        if s == 0.0 {
            return (unit_sphere_area(n) * self.value(r), 0.0);
        }
        let wedge = unit_sphere_area(n - 1);
        let mut cuts = vec![0.0, PI];
        for b in self.breakpoints() {
            let c = (b * b - s * s - r * r) / (2.0 * s * r);
            if c > -1.0 && c < 1.0 {
                cuts.push(c.acos());
            }
        }
        cuts.sort_by(f64::total_cmp);
        let sin_power = n as i32 - 2;
        let mut total = 0.0;
        let mut err = 0.0;
        for w in cuts.windows(2) {
            if w[1] - w[0] <= 0.0 {
                continue;
            }
            let q = adaptive(
                |t: f64| {
                    let rho = (s * s + r * r + 2.0 * s * r * t.cos()).max(0.0).sqrt();
                    self.value(rho) * t.sin().powi(sin_power)
                },
                w[0],
                w[1],
                tol,
                0.0,
            );
            total += q.value;
            err += q.error;
        }
        (wedge * total, wedge * err)
    }
}

/// Seeded radial step source on `B(0, radius)` with `1..=6` steps,
/// log-normal heights and unit `L^p` norm.
pub fn random_step_source(n: usize, radius: f64, p: f64, seed: u64) -> Result<RadialSource> {
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, LogNormal};
    if !(radius > 0.0 && p >= 1.0) {
        return Err(Error::param("radius", "need radius > 0 and p >= 1"));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let steps = rng.gen_range(1..=6usize);
    let outer = radius * rng.gen_range(0.2..=1.0);
    let mut edges: Vec<f64> = (1..steps).map(|_| outer * rng.gen_range(0.01..1.0)).collect();
    edges.push(0.0);
    edges.push(outer);
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    let height = LogNormal::new(0.0, 1.0).expect("valid lognormal");
    let values: Vec<f64> = (1..edges.len()).map(|_| height.sample(&mut rng)).collect();
    let f = RadialSource::steps(n, edges, values)?;
    let norm = f.norm(p);
    Ok(f.scaled(1.0 / norm))
}

/// Options for [`potential`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialOptions {
    /// Radius of the neighbourhood of `x` integrated against `f(x)` exactly;
    /// defaults to `10⁻³` of the support radius.
    pub delta: Option<f64>,
    pub rel_tol: f64,
}

impl Default for PotentialOptions {
    fn default() -> Self {
        Self { delta: None, rel_tol: 1e-8 }
    }
}

/// A potential value with its quadrature error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Potential {
    pub value: f64,
    pub error: f64,
}

fn radial_kernel(kernel: &KernelSpec) -> Result<RadialFn> {
    kernel.validate()?;
    match kernel.radial_profile() {
        Some((k, None)) => Ok(k),
        Some((k, Some(DomainSpec::FullSpace { .. }))) => Ok(k),
        _ => Err(Error::Unsupported("potentials need a translation-invariant radial kernel on the full space".into())),
    }
}

/// `∫_{|z|<δ} K(|z|) dz`, with the substitution `r = δ u^{1/α}` absorbing the
/// `r^{α-1}` singularity of the radial integrand.
fn kernel_mass(k: &RadialFn, n: usize, alpha: f64, delta: f64) -> f64 {
    let nf = n as f64;
    let q = adaptive(
        |u: f64| {
            if u <= 0.0 {
                return 0.0;
            }
            let r = delta * u.powf(1.0 / alpha);
            k(r) * r.powf(nf - alpha)
        },
        0.0,
        1.0,
        1e-12,
        0.0,
    );
    unit_sphere_area(n) * delta.powf(alpha) / alpha * q.value
}

/// `Tf(x) = ∫ K(|x-y|) f(|y|) dy`.
///
/// Written around `x` as `∫_0^∞ K(r) r^{n-1} M_f(x,r) dr` with `M_f` the
/// spherical integral of `f` at radius `r`. On `r < δ` the source is frozen at
/// `f(x)` against the exact kernel mass; the remainder is split at every radius
/// where the sphere crosses a source breakpoint.
pub fn potential(kernel: &KernelSpec, f: &RadialSource, x: &[f64], opts: &PotentialOptions) -> Result<Potential> {
    let n = kernel.dim();
    if f.dim() != n || x.len() != n {
        return Err(Error::param("x", format!("source, kernel and point must share dimension {n}")));
    }
    let k = radial_kernel(kernel)?;
    if f.is_zero() {
        return Ok(Potential { value: 0.0, error: 0.0 });
    }
    let alpha = kernel.order();
    let s = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let bps = f.breakpoints();
    let reach = f.support_end();
    let gap = bps.iter().map(|b| (b - s).abs()).fold(f64::INFINITY, f64::min);
    let mut delta = opts.delta.unwrap_or(1e-3 * reach).min(0.5 * gap);
    if !(delta > 0.0) {
        delta = 1e-12 * reach;
    }
    let inner = f.value(s) * kernel_mass(&k, n, alpha, delta);
    let mut cuts = vec![delta, s + reach];
    for b in &bps {
        cuts.push((b - s).abs());
        cuts.push(b + s);
    }
    cuts.retain(|c| *c >= delta && *c <= s + reach);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let inner_tol = (opts.rel_tol * 1e-2).max(1e-13);
    let mut value = inner;
    let mut error = 0.0;
    for w in cuts.windows(2) {
        let mut inner_err = 0.0;
        let q = adaptive(
            |u: f64| {
                let r = u.exp();
                let (m, e) = f.spherical_integral(s, r, inner_tol);
                let weight = k(r) * r.powi(n as i32);
                inner_err += e * weight.abs();
                weight * m
            },
            w[0].ln(),
            w[1].ln(),
            opts.rel_tol,
            0.0,
        );
        if !q.value.is_finite() {
            return Err(Error::Divergent("non-integrable kernel-source interaction".into()));
        }
        value += q.value;
        error += q.error + inner_err * (w[1] / w[0]).ln() / q.intervals.max(1) as f64 / 15.0;
    }
    Ok(Potential { value, error })
}

/// Reference measure on the evaluation region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Measure {
    Lebesgue,
    /// Density `min(1, |x|^{n(σ-1)})`, so that `ν(B(x,r)) ≤ Q r^{σn}`.
    Singular { sigma: f64 },
}

impl Measure {
    pub fn for_sigma(sigma: f64) -> Self {
        if sigma == 1.0 { Measure::Lebesgue } else { Measure::Singular { sigma } }
    }

    pub fn sigma(&self) -> f64 {
        match self {
            Measure::Lebesgue => 1.0,
            Measure::Singular { sigma } => *sigma,
        }
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        let sigma = self.sigma();
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        (r.powf(x.len() as f64 * (sigma - 1.0))).min(1.0)
    }

    fn validate(&self) -> Result<()> {
        let s = self.sigma();
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::param("sigma", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Radii and weights integrating radial functions over `B(0,R)` against a
/// measure. Power substitutions in the radius absorb both `s^{n-1}` and the
/// singular density, so every node carries an equal share of its shell's mass.
pub fn radial_measure_nodes(n: usize, radius: f64, measure: &Measure, count: usize) -> Result<Vec<(f64, f64)>> {
    measure.validate()?;
    if !(radius > 0.0) || count == 0 {
        return Err(Error::param("radius", "need a positive radius and at least one node"));
    }
    let omega = unit_sphere_area(n);
    let nf = n as f64;
    // ∫_0^c s^{k-1} g(s) ds = (c^k/k) ∫_0^1 g(c u^{1/k}) du.
    let power_shell = |c: f64, k: f64| -> Vec<(f64, f64)> {
        gauss_legendre_on(count, 0.0, 1.0).into_iter().map(|(u, w)| (c * u.powf(1.0 / k), omega * c.powf(k) / k * w)).collect()
    };
    let sigma = measure.sigma();
    if sigma == 1.0 {
        return Ok(power_shell(radius, nf));
    }
    let inner = radius.min(1.0);
    let mut nodes = power_shell(inner, nf * sigma);
    if radius > 1.0 {
        let (a, b) = (1.0f64.powf(nf), radius.powf(nf));
        nodes.extend(
            gauss_legendre_on(count, a, b).into_iter().map(|(v, w)| (v.powf(1.0 / nf), omega / nf * w)),
        );
    }
    Ok(nodes)
}

/// Values of `Tf` at evaluation points with quadrature weights of a region.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialField {
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    /// Weights of a quadrature rule for the measure on the sampled region.
    pub weights: Vec<f64>,
}

impl PotentialField {
    pub fn from_values(points: Vec<Vec<f64>>, values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != values.len() || values.len() != weights.len() {
            return Err(Error::param("values", "points, values and weights must have equal lengths"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("values", "field values must be finite"));
        }
        let errors = vec![0.0; values.len()];
        Ok(Self { points, values, errors, weights })
    }

    /// `Tf` on `B(0, R)` for a radial source, sampled at radial nodes along the
    /// first axis and weighted by shell measures.
    pub fn radial_ball(
        kernel: &KernelSpec,
        f: &RadialSource,
        radius: f64,
        nodes: usize,
        measure: &Measure,
        opts: &PotentialOptions,
    ) -> Result<Self> {
        let n = kernel.dim();
        let rule = radial_measure_nodes(n, radius, measure, nodes)?;
        let evaluated: Vec<(Vec<f64>, Potential)> = rule
            .par_iter()
            .map(|(s, _)| {
                let mut x = vec![0.0; n];
                x[0] = *s;
                potential(kernel, f, &x, opts).map(|p| (x, p))
            })
            .collect::<Result<_>>()?;
        let (points, pots): (Vec<_>, Vec<_>) = evaluated.into_iter().unzip();
        Ok(Self {
            points,
            values: pots.iter().map(|p| p.value).collect(),
            errors: pots.iter().map(|p| p.error).collect(),
            weights: rule.iter().map(|(_, w)| *w).collect(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("r,value,error,weight\n");
        for i in 0..self.values.len() {
            let r = self.points[i].iter().map(|v| v * v).sum::<f64>().sqrt();
            s.push_str(&format!("{r:.12e},{:.12e},{:.3e},{:.12e}\n", self.values[i], self.errors[i], self.weights[i]));
        }
        s
    }
}

/// An exponential functional in linear and log form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpFunctional {
    pub value: f64,
    pub ln_value: f64,
    /// First-order propagation of the field's quadrature errors.
    pub error: f64,
}

/// `∫_E exp_m[γ|Tf|^β] dν` on the field's quadrature, with `m = None` for the
/// plain exponential. Summed in log space so enormous integrands stay finite.
pub fn mt_functional(field: &PotentialField, gamma: f64, beta: f64, region: &DomainSpec, m: Option<u32>) -> Result<ExpFunctional> {
    if !(gamma > 0.0) {
        return Err(Error::param("gamma", "must be positive"));
    }
    if !(beta > 1.0) {
        return Err(Error::param("beta", "must exceed 1"));
    }
    if m.is_none() && region.total_measure().map_or(true, |v| !v.is_finite()) {
        return Err(Error::Precondition("the unregularized functional needs a region of finite measure".into()));
    }
    let mut logs = Vec::with_capacity(field.values.len());
    let mut err_logs = Vec::new();
    for i in 0..field.values.len() {
        if field.weights[i] <= 0.0 || !region.contains(&field.points[i]) {
            continue;
        }
        let u = field.values[i].abs();
        let t = gamma * u.powf(beta);
        let lw = field.weights[i].ln();
        let le = match m {
            None => t,
            Some(m) => ln_exp_regularized(t, m),
        };
        if le == f64::NEG_INFINITY {
            continue;
        }
        logs.push(lw + le);
        if field.errors[i] > 0.0 && u > 0.0 {
            // d/du exp_m(γu^β) ≤ γβu^{β-1} e^{γu^β}.
            err_logs.push(lw + t + (gamma * beta * u.powf(beta - 1.0) * field.errors[i]).ln());
        }
    }
    let ln_value = log_sum_exp(&logs);
    Ok(ExpFunctional { value: ln_value.exp(), ln_value, error: log_sum_exp(&err_logs).exp() })
}

fn log_sum_exp(logs: &[f64]) -> f64 {
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    top + logs.iter().map(|l| (l - top).exp()).sum::<f64>().ln()
}

/// Both sides of the regularization sandwich for a step field `u` on atoms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sandwich {
    pub lower: f64,
    pub middle: f64,
    pub upper: f64,
}

impl Sandwich {
    /// Holds up to relative rounding `tol`.
    pub fn holds(&self, tol: f64) -> bool {
        let slack = tol * self.upper.abs().max(self.middle.abs()).max(1.0);
        self.lower <= self.middle + slack && self.middle <= self.upper + slack
    }
}

fn check_step_field(values: &[f64], weights: &[f64], gamma: f64, p: f64) -> Result<()> {
    if values.len() != weights.len() || weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::param("weights", "need one nonnegative weight per value"));
    }
    if !(gamma > 0.0) || !(p > 1.0 && p.is_finite()) {
        return Err(Error::param("p", "need γ > 0 and 1 < p < ∞"));
    }
    Ok(())
}

fn big_part(values: &[f64], weights: &[f64], gamma: f64, q: f64) -> f64 {
    values.iter().zip(weights).filter(|(u, _)| u.abs() >= 1.0).map(|(u, w)| w * (gamma * u.abs().powf(q)).exp()).sum()
}

/// `∫_{|u|≥1} e^{γ|u|^{p'}} ∓ e^γ‖u‖_p^p` around `∫ exp_{[p-2]}[γ|u|^{p'}]`.
pub fn regularization_sandwich(values: &[f64], weights: &[f64], gamma: f64, p: f64) -> Result<Sandwich> {
    check_step_field(values, weights, gamma, p)?;
    let q = p / (p - 1.0);
    let m = regularization_order(p - 2.0);
    let norm: f64 = values.iter().zip(weights).map(|(u, w)| w * u.abs().powf(p)).sum();
    let big = big_part(values, weights, gamma, q);
    let middle: f64 = values.iter().zip(weights).map(|(u, w)| w * exp_regularized(gamma * u.abs().powf(q), m)).sum();
    let slack = gamma.exp() * norm;
    Ok(Sandwich { lower: big - slack, middle, upper: big + slack })
}

/// `(γ^m/m!)‖u‖_{mp'}^{mp'} ≤ ∫ exp_{m-1}[γ|u|^{p'}] ≤ ∫_{|u|≥1} e^{γ|u|^{p'}} + e^γ‖u χ_{|u|≤1}‖_{mp'}^{mp'}`.
pub fn regularization_moment_bounds(values: &[f64], weights: &[f64], gamma: f64, p: f64, m: u32) -> Result<Sandwich> {
    check_step_field(values, weights, gamma, p)?;
    if m == 0 {
        return Err(Error::param("m", "must be at least 1"));
    }
    let q = p / (p - 1.0);
    let e = m as f64 * q;
    let moment: f64 = values.iter().zip(weights).map(|(u, w)| w * u.abs().powf(e)).sum();
    let small: f64 = values.iter().zip(weights).filter(|(u, _)| u.abs() <= 1.0).map(|(u, w)| w * u.abs().powf(e)).sum();
    let middle: f64 = values.iter().zip(weights).map(|(u, w)| w * exp_regularized(gamma * u.abs().powf(q), m - 1)).sum();
    let lower = (m as f64 * gamma.ln() - ln_gamma(m as f64 + 1.0)).exp() * moment;
    Ok(Sandwich { lower, middle, upper: big_part(values, weights, gamma, q) + gamma.exp() * small })
}

/// Which extremal construction a family follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    /// `|y|^{-α}` on `ε < |y| < r₀`.
    RieszLog,
    /// `K|K|^{β-2}` on `ε < |y| < r₀` for the kernel's own profile.
    KernelAdapted,
    /// Smoothed `log(1/r)` on hyperbolic space, plateaued below `ε` and cut off at `3/4`.
    HyperbolicLog,
}

/// One member of an extremal family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremalFamily {
    pub kind: FamilyKind,
    pub epsilon: f64,
    pub r0: f64,
}

impl ExtremalFamily {
    pub fn new(kind: FamilyKind, epsilon: f64, r0: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < r0) {
            return Err(Error::param("epsilon", "need 0 < ε < r₀"));
        }
        if kind == FamilyKind::HyperbolicLog && !(epsilon <= 0.25 && r0 == 1.0) {
            return Err(Error::param("epsilon", "the hyperbolic family needs ε ≤ 1/4 and r₀ = 1"));
        }
        Ok(Self { kind, epsilon, r0 })
    }

    /// The unnormalized source `φ_ε`.
    pub fn source(&self, kernel: &KernelSpec) -> Result<RadialSource> {
        let n = kernel.dim();
        let alpha = kernel.order();
        match self.kind {
            FamilyKind::RieszLog => RadialSource::power(n, 1.0, -alpha, self.epsilon, self.r0),
            FamilyKind::KernelAdapted => {
                let k = radial_kernel(kernel)?;
                let beta = n as f64 / (n as f64 - alpha);
                let f: RadialFn = Arc::new(move |r| {
                    let v = k(r);
                    v * v.abs().powf(beta - 2.0)
                });
                RadialSource::profile(n, f, self.epsilon, self.r0)
            }
            FamilyKind::HyperbolicLog => Err(Error::Unsupported("the hyperbolic family is not a Euclidean source".into())),
        }
    }

    /// `‖φ_ε‖_{n/α}^{n/α}`, exact for the Riesz family.
    pub fn norm_pow(&self, kernel: &KernelSpec) -> Result<f64> {
        let n = kernel.dim();
        let alpha = kernel.order();
        match self.kind {
            FamilyKind::RieszLog => Ok(unit_ball_volume(n) * n as f64 * (self.r0 / self.epsilon).ln()),
            _ => Ok(self.source(kernel)?.norm_pow(n as f64 / alpha)),
        }
    }

    /// `ψ_ε = φ_ε/‖φ_ε‖_{n/α}`.
    pub fn normalized_source(&self, kernel: &KernelSpec) -> Result<RadialSource> {
        let alpha = kernel.order();
        let norm = self.norm_pow(kernel)?.powf(alpha / kernel.dim() as f64);
        Ok(self.source(kernel)?.scaled(1.0 / norm))
    }

    /// `(v, v', v'')` of the hyperbolic profile at geodesic radius `r`, with
    /// cubic Hermite blends on `[ε, 2ε]` and `[1/2, 3/4]`.
    pub fn hyperbolic_profile(&self, r: f64) -> Result<(f64, f64, f64)> {
        if self.kind != FamilyKind::HyperbolicLog {
            return Err(Error::Unsupported("profile belongs to the hyperbolic family".into()));
        }
        let e = self.epsilon;
        Ok(if r <= e {
            ((1.0 / e).ln(), 0.0, 0.0)
        } else if r < 2.0 * e {
            hermite(r, e, 2.0 * e, ((1.0 / e).ln(), 0.0), ((0.5 / e).ln(), -0.5 / e))
        } else if r <= 0.5 {
            (-r.ln(), -1.0 / r, 1.0 / (r * r))
        } else if r < 0.75 {
            hermite(r, 0.5, 0.75, (2f64.ln(), -2.0), (0.0, 0.0))
        } else {
            (0.0, 0.0, 0.0)
        })
    }

    /// `‖Δ v_ε‖_{n/2}^{n/2}` on `ℍⁿ`, with `Δv = v'' + (n-1) coth(r) v'` and
    /// volume element `sinh^{n-1} r dr dθ`.
    pub fn hyperbolic_norm_pow(&self, n: usize) -> Result<f64> {
        if n < 3 {
            return Err(Error::param("n", "the order-2 family needs n ≥ 3"));
        }
        let p = n as f64 / 2.0;
        let nf = n as f64;
        let e = self.epsilon;
        let mut total = 0.0;
        for (a, b) in [(e, 2.0 * e), (2.0 * e, 0.5), (0.5, 0.75)] {
            if b <= a {
                continue;
            }
            let q = adaptive(
                |u: f64| {
                    let r = u.exp();
                    let (_, d1, d2) = self.hyperbolic_profile(r).expect("hyperbolic family");
                    let lap = d2 + (nf - 1.0) * d1 / r.tanh();
                    lap.abs().powf(p) * r.sinh().powf(nf - 1.0) * r
                },
                a.ln(),
                b.ln(),
                1e-11,
                0.0,
            );
            total += q.value;
        }
        Ok(unit_sphere_area(n) * total)
    }
}

fn hermite(r: f64, a: f64, b: f64, (va, da): (f64, f64), (vb, db): (f64, f64)) -> (f64, f64, f64) {
    let h = b - a;
    let t = (r - a) / h;
    let (t2, t3) = (t * t, t * t * t);
    let v = (2.0 * t3 - 3.0 * t2 + 1.0) * va + (t3 - 2.0 * t2 + t) * h * da + (-2.0 * t3 + 3.0 * t2) * vb + (t3 - t2) * h * db;
    let d1 = ((6.0 * t2 - 6.0 * t) * va + (3.0 * t2 - 4.0 * t + 1.0) * h * da + (-6.0 * t2 + 6.0 * t) * vb + (3.0 * t2 - 2.0 * t) * h * db) / h;
    let d2 = ((12.0 * t - 6.0) * va + (6.0 * t - 4.0) * h * da + (-12.0 * t + 6.0) * vb + (6.0 * t - 2.0) * h * db) / (h * h);
    (v, d1, d2)
}

/// `lim_{r→0} K(r) r^{n-α}`, read off the profile deep inside the local regime.
pub fn local_constant(kernel: &KernelSpec) -> Result<f64> {
    let k = radial_kernel(kernel)?;
    let r = 1e-9;
    Ok(k(r) * r.powf(kernel.dim() as f64 - kernel.order()))
}

/// [`local_constant`] with the change between `r = 1e-9` and `r = 2e-9` as its error.
pub fn local_constant_with_error(kernel: &KernelSpec) -> Result<(f64, f64)> {
    let k = radial_kernel(kernel)?;
    let e = kernel.dim() as f64 - kernel.order();
    let at = |r: f64| k(r) * r.powf(e);
    Ok((at(1e-9), (at(1e-9) - at(2e-9)).abs()))
}

/// `γ((-Δ)^{α/2}) = n/(ω_{n-1} c_α^{n/(n-α)})`, the exponential constant of
/// the Bessel-potential inequality.
pub fn bessel_exponential_constant(n: usize, alpha: f64) -> Result<f64> {
    let beta = n as f64 / (n as f64 - alpha);
    Ok(1.0 / (unit_ball_volume(n) * riesz_constant(n, alpha)?.powf(beta)))
}

/// Options for [`saturation_experiment`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationOptions {
    /// Radial quadrature nodes on `B(0, ε/2)`.
    pub nodes: usize,
    /// Number of smallest `ε` values entering the fit.
    pub fit_points: usize,
    pub min_r2: f64,
    pub rel_tol: f64,
}

impl Default for SaturationOptions {
    fn default() -> Self {
        Self { nodes: 12, fit_points: 4, min_r2: 0.95, rel_tol: 1e-9 }
    }
}

/// Functional values along `ε` for one `γ` with the fitted power law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaturationResult {
    pub gamma: f64,
    pub epsilons: Vec<f64>,
    pub values: Vec<f64>,
    pub ln_values: Vec<f64>,
    pub fitted_exponent: f64,
    pub r2: f64,
    /// Whether the fit reached the required `r²`.
    pub fit_accepted: bool,
    /// `n(σ - γ|B₁|c^{n/(n-α)})` with `c` the kernel's local constant.
    pub predicted_exponent: f64,
}

impl SaturationResult {
    pub fn to_csv_rows(&self) -> String {
        self.epsilons
            .iter()
            .zip(&self.ln_values)
            .map(|(e, l)| format!("{:.12e},{e:.12e},{l:.12e},{:.12e}\n", self.gamma, self.fitted_exponent))
            .collect()
    }
}

/// Evaluates `∫_{B(0,ε/2)} exp[γ|Tψ_ε|^{n/(n-α)}] dν` along the extremal family
/// and fits its growth exponent in `ε` over the smallest scales.
pub fn saturation_experiment(
    kernel: &KernelSpec,
    gammas: &[f64],
    epsilons: &[f64],
    sigma: f64,
    opts: &SaturationOptions,
) -> Result<Vec<SaturationResult>> {
    let n = kernel.dim();
    let alpha = kernel.order();
    let beta = n as f64 / (n as f64 - alpha);
    if epsilons.len() < opts.fit_points.max(2) {
        return Err(Error::param("epsilons", format!("need at least {} scales", opts.fit_points.max(2))));
    }
    if gammas.iter().any(|g| !(*g > 0.0)) || gammas.is_empty() {
        return Err(Error::param("gammas", "need positive exponential constants"));
    }
    let kind = if matches!(kernel, KernelSpec::Riesz { .. }) { FamilyKind::RieszLog } else { FamilyKind::KernelAdapted };
    let measure = Measure::for_sigma(sigma);
    measure.validate()?;
    let c = local_constant(kernel)?;
    let mut eps: Vec<f64> = epsilons.to_vec();
    eps.sort_by(|a, b| b.total_cmp(a));
    let fields: Vec<PotentialField> = eps
        .par_iter()
        .map(|e| {
            let psi = ExtremalFamily::new(kind, *e, 1.0)?.normalized_source(kernel)?;
            let popts = PotentialOptions { delta: Some(e / 4.0), rel_tol: opts.rel_tol };
            PotentialField::radial_ball(kernel, &psi, e / 2.0, opts.nodes, &measure, &popts)
        })
        .collect::<Result<_>>()?;
    let regions: Vec<DomainSpec> = eps.iter().map(|e| DomainSpec::Ball { center: vec![0.0; n], radius: e / 2.0 }).collect();
    gammas
        .iter()
        .map(|g| {
            let ln_values: Vec<f64> = fields
                .iter()
                .zip(&regions)
                .map(|(field, region)| mt_functional(field, *g, beta, region, None).map(|f| f.ln_value))
                .collect::<Result<_>>()?;
            let k = opts.fit_points;
            let tail = eps.len() - k;
            let lx: Vec<f64> = eps[tail..].iter().map(|e| e.ln()).collect();
            let line = fit::line(&lx, &ln_values[tail..]).ok_or_else(|| Error::UnderResolved("degenerate fit".into()))?;
            Ok(SaturationResult {
                gamma: *g,
                epsilons: eps.clone(),
                values: ln_values.iter().map(|l| l.exp()).collect(),
                ln_values,
                fitted_exponent: line.slope,
                r2: line.r2,
                fit_accepted: line.r2 >= opts.min_r2,
                predicted_exponent: n as f64 * (sigma - g * unit_ball_volume(n) * c.powf(beta)),
            })
        })
        .collect()
}

/// One term of the failure sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WitnessStep {
    pub m: u32,
    pub level: f64,
    /// Radii bounding the level-set annulus `{ε_m < K ≤ ε₀}`.
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// `Γ_m = ∫ |K|^β` over the annulus, which equals `‖Φ_m‖_{β'}^{β'}`.
    pub gamma_level: f64,
    pub norm: f64,
    /// `inf_{B_m} TΨ_m` over the sampled witness ball.
    pub inf_potential: f64,
    /// `min_{B_m} TΦ_m / Γ_m`: the regularity constant achieved on samples.
    pub reg_ratio: f64,
}

/// Parameters of [`failure_witness`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessPlan {
    /// Basepoints `x_m`; a single entry is reused for every level.
    pub basepoints: Vec<Vec<f64>>,
    pub levels: Vec<u32>,
    pub eps0: f64,
    pub ball_radius: f64,
    /// Radial samples of the witness ball.
    pub samples: usize,
}

impl WitnessPlan {
    pub fn new(n: usize, levels: Vec<u32>) -> Self {
        Self { basepoints: vec![vec![0.0; n]], levels, eps0: 1.0, ball_radius: 0.5, samples: 9 }
    }
}

/// Radius where a decreasing radial profile crosses `level`.
fn level_radius(k: &RadialFn, level: f64) -> Result<f64> {
    let (mut lo, mut hi) = (1e-12f64, 1.0f64);
    while k(lo) <= level {
        lo *= 1e-3;
        if lo < 1e-300 {
            return Err(Error::Precondition("kernel never exceeds the level".into()));
        }
    }
    while k(hi) > level {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Precondition("kernel never drops below the level".into()));
        }
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if k(mid) > level {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-14 {
            break;
        }
    }
    Ok(hi)
}

/// Builds `Φ_m = K^{β-1}` on the level-set annulus around `x_m`, normalizes it,
/// and evaluates the infimum of `TΨ_m` over `B(x_m, r₁)`.
///
/// Requires the critical integral `∫ K^β` away from the origin to diverge.
pub fn failure_witness(kernel: &KernelSpec, plan: &WitnessPlan) -> Result<Vec<WitnessStep>> {
    let n = kernel.dim();
    let alpha = kernel.order();
    let beta = n as f64 / (n as f64 - alpha);
    let beta_dual = n as f64 / alpha;
    let k = radial_kernel(kernel)?;
    if plan.basepoints.is_empty() || !(plan.eps0 > 0.0) || !(plan.ball_radius > 0.0) || plan.samples < 2 {
        return Err(Error::param("plan", "need a basepoint, ε₀ > 0, r₁ > 0 and two samples"));
    }
    if plan.basepoints.len() != 1 && plan.basepoints.len() != plan.levels.len() {
        return Err(Error::param("basepoints", "one basepoint or one per level"));
    }
    let r_in = level_radius(&k, plan.eps0)?;
    let omega = unit_sphere_area(n);
    let shell = |a: f64, b: f64| {
        omega * adaptive(|u: f64| { let r = u.exp(); k(r).abs().powf(beta) * r.powi(n as i32) }, a.ln(), b.ln(), 1e-11, 0.0).value
    };
    let critical = DoublingRule::default().run(r_in, |a, b| shell(a, b));
    if !matches!(critical.verdict, SeriesVerdict::Divergent { .. }) {
        return Err(Error::Precondition("the critical integral is finite; no failure sequence exists".into()));
    }
    plan.levels
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let x_m = &plan.basepoints[if plan.basepoints.len() == 1 { 0 } else { i }];
            if x_m.len() != n {
                return Err(Error::param("basepoints", format!("expected {n} coordinates")));
            }
            let level = plan.eps0 * 0.5f64.powi(m as i32);
            let r_out = level_radius(&k, level)?;
            if !(r_out > r_in) {
                return Err(Error::Precondition(format!("level set for m = {m} is empty")));
            }
            let gamma_level = shell(r_in, r_out);
            let norm = gamma_level.powf(1.0 / beta_dual);
            let kk = k.clone();
            let phi = RadialSource::profile(n, Arc::new(move |r| kk(r).abs().powf(beta - 1.0)), r_in, r_out)?;
            let values: Vec<f64> = (0..plan.samples)
                .into_par_iter()
                .map(|j| {
                    let mut x = vec![0.0; n];
                    x[0] = plan.ball_radius * j as f64 / (plan.samples - 1) as f64;
                    potential(kernel, &phi, &x, &PotentialOptions::default()).map(|p| p.value)
                })
                .collect::<Result<_>>()?;
            let inf_phi = values.iter().cloned().fold(f64::INFINITY, f64::min);
            Ok(WitnessStep {
                m,
                level,
                inner_radius: r_in,
                outer_radius: r_out,
                gamma_level,
                norm,
                inf_potential: inf_phi / norm,
                reg_ratio: inf_phi / gamma_level,
            })
        })
        .collect()
}

/// Measured growth of `‖Δ v_ε‖_{n/2}^{n/2}` in `log(1/ε)` on `ℍⁿ`, and the
/// exponential constant it implies next to the Euclidean `γ(∇²)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HyperbolicSaturation {
    pub n: usize,
    pub epsilons: Vec<f64>,
    pub norms: Vec<f64>,
    pub slope: f64,
    pub r2: f64,
    /// `ω_{n-1}^{-(n-2)/2} c_2^{-n/2}`.
    pub predicted_slope: f64,
    /// `n A^{2/(n-2)}` from the measured slope `A`.
    pub measured_constant: f64,
    pub euclidean_constant: f64,
}

pub fn hyperbolic_saturation(n: usize, epsilons: &[f64]) -> Result<HyperbolicSaturation> {
    if n < 3 {
        return Err(Error::param("n", "order 2 needs n ≥ 3"));
    }
    if epsilons.len() < 2 {
        return Err(Error::param("epsilons", "need at least two scales"));
    }
    let norms: Vec<f64> = epsilons
        .iter()
        .map(|e| ExtremalFamily::new(FamilyKind::HyperbolicLog, *e, 1.0)?.hyperbolic_norm_pow(n))
        .collect::<Result<_>>()?;
    let lx: Vec<f64> = epsilons.iter().map(|e| (1.0 / e).ln()).collect();
    let line = fit::line(&lx, &norms).ok_or_else(|| Error::UnderResolved("degenerate fit".into()))?;
    let nf = n as f64;
    let c2 = riesz_constant(n, 2.0)?;
    let predicted_slope = unit_sphere_area(n).powf(-(nf - 2.0) / 2.0) * c2.powf(-nf / 2.0);
    Ok(HyperbolicSaturation {
        n,
        epsilons: epsilons.to_vec(),
        norms,
        slope: line.slope,
        r2: line.r2,
        predicted_slope,
        measured_constant: nf * line.slope.powf(2.0 / (nf - 2.0)),
        euclidean_constant: sharp_constant_grad(n, 2)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn riesz(n: usize, alpha: f64) -> KernelSpec {
        KernelSpec::Riesz { n, alpha }
    }

    #[test]
    fn regularized_exponential_small_orders() {
        let e = std::f64::consts::E;
        assert_relative_eq!(exp_regularized(1.0, 0), e - 1.0, max_relative = 1e-14);
        assert_relative_eq!(exp_regularized(1.0, 1), e - 2.0, max_relative = 1e-14);
        assert_eq!(exp_regularized(0.0, 3), 0.0);
    }

    #[test]
    fn regularized_exponential_avoids_cancellation() {
        // Oracle: the tail Σ_{k≥4} t^k/k! summed from its exact rational terms.
        let t = 1e-3f64;
        let oracle = t.powi(4) / 24.0 + t.powi(5) / 120.0 + t.powi(6) / 720.0;
        assert!((exp_regularized(t, 3) / oracle - 1.0).abs() < 1e-6);
    }

    #[test]
    fn log_form_matches_direct_and_survives_overflow() {
        for (t, m) in [(3.0, 1), (40.0, 2), (650.0, 5)] {
            assert_relative_eq!(ln_exp_regularized(t, m), exp_regularized(t, m).ln(), max_relative = 1e-12);
        }
        assert_relative_eq!(ln_exp_regularized(5000.0, 2), 5000.0, max_relative = 1e-12);
    }

    #[test]
    fn ceiling_order() {
        assert_eq!(regularization_order(0.5), 1);
        assert_eq!(regularization_order(2.0), 2);
        assert_eq!(regularization_order(-0.5), 0);
    }

    #[test]
    fn ball_indicator_potential_at_center() {
        let f = RadialSource::indicator_ball(2, 1.0).unwrap();
        let p = potential(&riesz(2, 1.0), &f, &[0.0, 0.0], &PotentialOptions::default()).unwrap();
        assert_relative_eq!(p.value, 2.0 * PI, max_relative = 1e-9);
    }

    #[test]
    fn zero_source_vanishes() {
        let p = potential(&riesz(3, 1.0), &RadialSource::zero(3), &[0.1, 0.2, 0.0], &PotentialOptions::default()).unwrap();
        assert_eq!(p.value, 0.0);
    }

    #[test]
    fn off_center_disk_potential_matches_elliptic_oracle() {
        // ∫_{B(0,1)} |x-y|^{-1} dy = ∫_0^1 2πρ · mean_{|y|=ρ}|x-y|^{-1} dρ.
        let s = 0.4;
        let ring = |rho: f64| {
            if (rho - s).abs() < 1e-7 { 0.0 } else { 2.0 * PI * rho * crate::special::circle_mean_inverse_distance(s, rho) }
        };
        let oracle = adaptive(ring, 0.0, s, 1e-12, 0.0).value + adaptive(ring, s, 1.0, 1e-12, 0.0).value;
        let f = RadialSource::indicator_ball(2, 1.0).unwrap();
        let p = potential(&riesz(2, 1.0), &f, &[s, 0.0], &PotentialOptions::default()).unwrap();
        assert_relative_eq!(p.value, oracle, max_relative = 1e-5);
    }

    #[test]
    fn newtonian_ball_potential() {
        // Inside a uniform ball in ℝ³: ∫_{B(0,1)} |x-y|^{-1} dy = 2π(1 - s²/3).
        let f = RadialSource::indicator_ball(3, 1.0).unwrap();
        for s in [0.0, 0.3, 0.7] {
            let p = potential(&riesz(3, 2.0), &f, &[0.0, s, 0.0], &PotentialOptions::default()).unwrap();
            assert_relative_eq!(p.value, 2.0 * PI * (1.0 - s * s / 3.0), max_relative = 1e-7);
        }
    }

    #[test]
    fn riesz_family_norm_is_exact() {
        let fam = ExtremalFamily::new(FamilyKind::RieszLog, 0.01, 1.0).unwrap();
        let k = riesz(2, 1.0);
        let exact = fam.norm_pow(&k).unwrap();
        assert_relative_eq!(exact, PI * (1.0f64 / 1e-4).ln(), max_relative = 1e-14);
        assert_relative_eq!(fam.source(&k).unwrap().norm_pow(2.0), exact, max_relative = 1e-12);
    }

    #[test]
    fn riesz_family_potential_near_center() {
        // |I₁ψ_ε(x)|² ≥ |B₁| log(1/ε²) - C on B(0, ε/2), with C stable in ε.
        let k = riesz(2, 1.0);
        let gaps: Vec<f64> = (3..=8)
            .map(|j| {
                let eps = 0.5f64.powi(j);
                let psi = ExtremalFamily::new(FamilyKind::RieszLog, eps, 1.0).unwrap().normalized_source(&k).unwrap();
                let v = potential(&k, &psi, &[eps / 2.0, 0.0], &PotentialOptions::default()).unwrap().value;
                PI * (1.0 / (eps * eps)).ln() - v * v
            })
            .collect();
        let spread = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - gaps.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread < 0.5, "{gaps:?}");
    }

    #[test]
    fn constant_field_functional() {
        let nodes = radial_measure_nodes(2, 1.0, &Measure::Lebesgue, 8).unwrap();
        let points: Vec<Vec<f64>> = nodes.iter().map(|(s, _)| vec![*s, 0.0]).collect();
        let weights: Vec<f64> = nodes.iter().map(|(_, w)| *w).collect();
        let ball = DomainSpec::Ball { center: vec![0.0, 0.0], radius: 1.0 };
        let one = PotentialField::from_values(points.clone(), vec![1.0; 8], weights.clone()).unwrap();
        assert_relative_eq!(mt_functional(&one, 1.0, 2.0, &ball, None).unwrap().value, std::f64::consts::E * PI, max_relative = 1e-12);
        let zero = PotentialField::from_values(points, vec![0.0; 8], weights).unwrap();
        assert_eq!(mt_functional(&zero, 1.0, 2.0, &ball, Some(0)).unwrap().value, 0.0);
    }

    #[test]
    fn singular_measure_nodes_integrate_density() {
        // ν(B(0,r)) = ω r^{nσ}/(nσ) for r ≤ 1.
        let (n, sigma) = (2, 0.6);
        let nodes = radial_measure_nodes(n, 0.5, &Measure::Singular { sigma }, 6).unwrap();
        let mass: f64 = nodes.iter().map(|(_, w)| w).sum();
        assert_relative_eq!(mass, 2.0 * PI * 0.5f64.powf(1.2) / 1.2, max_relative = 1e-13);
        let both = radial_measure_nodes(n, 2.0, &Measure::Singular { sigma }, 6).unwrap();
        let mass: f64 = both.iter().map(|(_, w)| w).sum();
        assert_relative_eq!(mass, 2.0 * PI / 1.2 + PI * 3.0, max_relative = 1e-13);
    }

    #[test]
    fn hyperbolic_profile_is_c1() {
        let fam = ExtremalFamily::new(FamilyKind::HyperbolicLog, 0.01, 1.0).unwrap();
        for r in [0.01, 0.02, 0.5, 0.75] {
            let (a, da, _) = fam.hyperbolic_profile(r * (1.0 - 1e-9)).unwrap();
            let (b, db, _) = fam.hyperbolic_profile(r * (1.0 + 1e-9)).unwrap();
            assert!((a - b).abs() < 1e-6 && (da - db).abs() < 1e-5 * (1.0 + da.abs()), "r={r}");
        }
    }

    #[test]
    fn hyperbolic_slope_matches_local_constant() {
        let h = hyperbolic_saturation(4, &[1e-3, 1e-4, 1e-5, 1e-6]).unwrap();
        assert_relative_eq!(h.predicted_slope, 8.0 * PI * PI, max_relative = 1e-12);
        assert_relative_eq!(h.slope, h.predicted_slope, max_relative = 1e-3);
        assert_relative_eq!(h.measured_constant, h.euclidean_constant, max_relative = 3e-3);
    }

    #[test]
    fn witness_rejects_subcritical_kernel() {
        let plan = WitnessPlan::new(2, vec![2, 3]);
        assert!(matches!(failure_witness(&KernelSpec::Bessel { n: 2, alpha: 1.0 }, &plan), Err(Error::Precondition(_))));
    }

    #[test]
    fn witness_annulus_closed_forms() {
        let plan = WitnessPlan::new(2, vec![2, 3, 4]);
        let steps = failure_witness(&riesz(2, 1.0), &plan).unwrap();
        for s in &steps {
            assert_relative_eq!(s.inner_radius, 1.0, max_relative = 1e-12);
            assert_relative_eq!(s.outer_radius, 2f64.powi(s.m as i32), max_relative = 1e-12);
            assert_relative_eq!(s.gamma_level, 2.0 * PI * s.m as f64 * 2f64.ln(), max_relative = 1e-9);
            assert!(s.reg_ratio >= 0.5);
        }
        assert!(steps.windows(2).all(|w| w[1].inf_potential > w[0].inf_potential));
    }
}
