//! Distribution functions, nonincreasing rearrangements, level averages
//! `f**` and the critical integrability functional.
//!
//! A [`RearrangementProfile`] is a nonincreasing function on `(0, inf)`
//! stored at nodes `t_0 < t_1 < ...`. Two interpolation rules exist:
//!
//! - [`Interpolation::Step`]: value `v_i` on `[t_{i-1}, t_i)` with `t_{-1} = 0`
//!   and zero after the last node. This is the exact rearrangement of a finite
//!   weighted sample.
//! - [`Interpolation::LogLinear`]: piecewise power law through the nodes,
//!   extrapolated as a power law below the first and above the last node.
//!   A zero node ends the support: the function is held constant on the
//!   preceding cell and vanishes afterwards.

use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{DomainSpec, McConfig};
use crate::error::{Error, Result};
use crate::fit;
use crate::kernel::KernelSpec;
use crate::quadrature;
use crate::special::unit_ball_volume;

/// Finite weighted atoms `(value, weight)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSamples {
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedSamples {
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.len() != weights.len() {
            return Err(Error::param("weights", "length differs from values"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::param("weights", "must be finite and nonnegative"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("values", "must be finite"));
        }
        Ok(Self { values, weights })
    }

    /// Atoms of unit weight.
    pub fn uniform(values: Vec<f64>) -> Result<Self> {
        let weights = vec![1.0; values.len()];
        Self::new(values, weights)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `μ{|f| > s}`.
    pub fn distribution_function(&self, s: f64) -> f64 {
        self.values
            .iter()
            .zip(&self.weights)
            .filter(|(v, _)| v.abs() > s)
            .map(|(_, w)| w)
            .sum()
    }
}

/// Interpolation rule between profile nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Interpolation {
    Step,
    LogLinear,
}

/// Nonincreasing nonnegative function of `t > 0` sampled on a strictly
/// increasing grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RearrangementProfile {
    grid: Vec<f64>,
    star_values: Vec<f64>,
    interpolation: Interpolation,
}

/// `∫_{lo}^{hi} e^{k u} du`, stable as `k -> 0`.
fn exp_integral(lo: f64, hi: f64, k: f64) -> f64 {
    if k.abs() < 1e-12 {
        hi - lo
    } else if k * hi > 700.0 {
        f64::INFINITY
    } else {
        ((k * hi).exp_m1() - (k * lo).exp_m1()) / k
    }
}

impl RearrangementProfile {
    fn validated(grid: Vec<f64>, star_values: Vec<f64>, interpolation: Interpolation) -> Result<Self> {
        if grid.len() != star_values.len() || grid.is_empty() {
            return Err(Error::param("grid", "must be nonempty and match star_values"));
        }
        if grid[0] <= 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("grid", "must be positive and strictly increasing"));
        }
        if star_values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::param("star_values", "must be nonnegative"));
        }
        if star_values.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::param("star_values", "must be nonincreasing"));
        }
        Ok(Self { grid, star_values, interpolation })
    }

    /// Step profile: `values[i]` on `[grid[i-1], grid[i])`.
    pub fn step(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::validated(grid, values, Interpolation::Step)
    }

    /// Piecewise power-law profile through `(grid[i], values[i])`.
    pub fn log_linear(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::validated(grid, values, Interpolation::LogLinear)
    }

    /// Constant `c` on `[0, mass)`.
    pub fn constant(c: f64, mass: f64) -> Result<Self> {
        Self::step(vec![mass], vec![c])
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn star_values(&self) -> &[f64] {
        &self.star_values
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    /// Index of the first zero node for log-linear profiles.
    fn zero_start(&self) -> Option<usize> {
        self.star_values.iter().position(|v| *v == 0.0)
    }

    /// Power-law exponent of cell `i` (between nodes `i` and `i+1`).
    fn exponent(&self, i: usize) -> f64 {
        let (v0, v1) = (self.star_values[i], self.star_values[i + 1]);
        if v0 <= 0.0 || v1 <= 0.0 {
            return 0.0;
        }
        (v1 / v0).ln() / (self.grid[i + 1] / self.grid[i]).ln()
    }

    /// Log-linear pieces `(t_lo, t_hi, anchor_t, anchor_v, exponent)` covering `(0, inf)`.
    fn power_pieces(&self) -> Vec<(f64, f64, f64, f64, f64)> {
        let n = self.grid.len();
        let end = self.zero_start().unwrap_or(n);
        let mut out = Vec::with_capacity(end + 2);
        if end == 0 {
            return out;
        }
        let first_exp = if end >= 2 { self.exponent(0) } else { 0.0 };
        out.push((0.0, self.grid[0], self.grid[0], self.star_values[0], first_exp));
        for i in 0..end.saturating_sub(1) {
            out.push((self.grid[i], self.grid[i + 1], self.grid[i], self.star_values[i], self.exponent(i)));
        }
        let last = end - 1;
        if end < n {
            // Held constant on the cell preceding the first zero node.
            out.push((self.grid[last], self.grid[end], self.grid[last], self.star_values[last], 0.0));
        } else {
            let tail_exp = if end >= 2 { self.exponent(end - 2) } else { 0.0 };
            out.push((self.grid[last], f64::INFINITY, self.grid[last], self.star_values[last], tail_exp));
        }
        out
    }

    /// Profile value at `t > 0`.
    pub fn value(&self, t: f64) -> f64 {
        match self.interpolation {
            Interpolation::Step => {
                let i = self.grid.partition_point(|g| *g <= t);
                self.star_values.get(i).copied().unwrap_or(0.0)
            }
            Interpolation::LogLinear => {
                for (lo, hi, at, av, e) in self.power_pieces() {
                    if t >= lo && t < hi {
                        return av * (t / at).powf(e);
                    }
                }
                0.0
            }
        }
    }

    /// `∫_a^b φ(u)^β du` for `0 <= a <= b <= inf`, exact for both rules.
    pub fn pow_integral(&self, a: f64, b: f64, beta: f64) -> Result<f64> {
        if !(a >= 0.0 && b >= a) {
            return Err(Error::param("interval", "requires 0 <= a <= b"));
        }
        if a == b {
            return Ok(0.0);
        }
        match self.interpolation {
            Interpolation::Step => {
                let mut acc = 0.0;
                let mut left: f64 = 0.0;
                for (t, v) in self.grid.iter().zip(&self.star_values) {
                    let lo = left.max(a);
                    let hi = t.min(b);
                    if hi > lo && *v > 0.0 {
                        acc += (hi - lo) * v.powf(beta);
                    }
                    left = *t;
                    if left >= b {
                        break;
                    }
                }
                Ok(acc)
            }
            Interpolation::LogLinear => {
                let mut acc = 0.0;
                for (lo, hi, at, av, e) in self.power_pieces() {
                    let from = lo.max(a);
                    let to = hi.min(b);
                    if to <= from || av == 0.0 {
                        continue;
                    }
                    let k = beta * e + 1.0;
                    if from == 0.0 && k <= 0.0 {
                        return Err(Error::Divergent("profile not integrable at 0".into()));
                    }
                    if to.is_infinite() && k >= 0.0 {
                        return Err(Error::Divergent("profile tail not integrable".into()));
                    }
                    let lf = if from == 0.0 { f64::NEG_INFINITY } else { (from / at).ln() };
                    let lt = if to.is_infinite() { f64::INFINITY } else { (to / at).ln() };
                    let piece = if lf.is_infinite() {
                        (k * lt).exp() / k
                    } else if lt.is_infinite() {
                        -(k * lf).exp() / k
                    } else {
                        exp_integral(lf, lt, k)
                    };
                    acc += av.powf(beta) * at * piece;
                }
                Ok(acc)
            }
        }
    }

    /// `∫_a^b φ`.
    pub fn integral(&self, a: f64, b: f64) -> Result<f64> {
        self.pow_integral(a, b, 1.0)
    }

    /// Level average `φ**(t) = (1/t)∫_0^t φ`.
    pub fn double_star(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::param("t", "must be positive"));
        }
        Ok(self.integral(0.0, t)? / t)
    }

    /// `|{t : φ(t) > s}|`.
    pub fn distribution(&self, s: f64) -> f64 {
        match self.interpolation {
            Interpolation::Step => {
                let k = self.star_values.partition_point(|v| *v > s);
                if k == 0 {
                    0.0
                } else {
                    self.grid[k - 1]
                }
            }
            Interpolation::LogLinear => {
                if s <= 0.0 {
                    return self.support_end();
                }
                for (lo, hi, at, av, e) in self.power_pieces().into_iter().rev() {
                    let v_lo = if lo == 0.0 {
                        if e < 0.0 { f64::INFINITY } else { av }
                    } else {
                        av * (lo / at).powf(e)
                    };
                    if v_lo > s {
                        if e == 0.0 {
                            return hi;
                        }
                        let t = at * (s / av).powf(1.0 / e);
                        return t.clamp(lo, hi);
                    }
                }
                0.0
            }
        }
    }

    /// Measure of the support (possibly infinite).
    pub fn support_end(&self) -> f64 {
        match self.interpolation {
            Interpolation::Step => {
                let k = self.star_values.partition_point(|v| *v > 0.0);
                if k == 0 { 0.0 } else { self.grid[k - 1] }
            }
            Interpolation::LogLinear => match self.zero_start() {
                Some(0) => 0.0,
                Some(i) => self.grid[i],
                None => f64::INFINITY,
            },
        }
    }

    /// Step profile viewed as weighted atoms (one atom per step).
    pub fn to_samples(&self) -> Result<WeightedSamples> {
        if self.interpolation != Interpolation::Step {
            return Err(Error::Unsupported("only step profiles are finite atom sets".into()));
        }
        let mut left = 0.0;
        let mut weights = Vec::with_capacity(self.grid.len());
        for t in &self.grid {
            weights.push(t - left);
            left = *t;
        }
        WeightedSamples::new(self.star_values.clone(), weights)
    }

    /// CSV with columns `t,value`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,value\n");
        for (t, v) in self.grid.iter().zip(&self.star_values) {
            s.push_str(&format!("{t:e},{v:e}\n"));
        }
        s
    }
}

/// Nonincreasing rearrangement of `|f|`; ties keep input order, zero-weight
/// atoms are dropped and equal consecutive values merged.
pub fn rearrangement(f: &WeightedSamples) -> RearrangementProfile {
    let mut order: Vec<usize> = (0..f.len()).filter(|&i| f.weights[i] > 0.0).collect();
    order.sort_by(|&i, &j| f.values[j].abs().total_cmp(&f.values[i].abs()).then(i.cmp(&j)));
    let mut grid: Vec<f64> = Vec::with_capacity(order.len());
    let mut vals: Vec<f64> = Vec::with_capacity(order.len());
    let mut acc = 0.0;
    for i in order {
        let v = f.values[i].abs();
        acc += f.weights[i];
        match vals.last() {
            Some(last) if *last == v => *grid.last_mut().expect("nonempty") = acc,
            _ => {
                grid.push(acc);
                vals.push(v);
            }
        }
    }
    if grid.is_empty() {
        // Empty input: the zero function on a unit carrier.
        return RearrangementProfile { grid: vec![1.0], star_values: vec![0.0], interpolation: Interpolation::Step };
    }
    RearrangementProfile { grid, star_values: vals, interpolation: Interpolation::Step }
}

/// How to reconcile profiles defined on different grids.
#[derive(Debug, Clone, PartialEq)]
pub enum Regrid {
    /// Grids must agree exactly.
    Require,
    /// Union of all nodes (exact for step profiles).
    Union,
    /// Evaluate on the supplied grid.
    Onto(Vec<f64>),
}

/// Pointwise supremum envelope of nonincreasing profiles.
pub fn maximal_rearrangement(profiles: &[RearrangementProfile], regrid: &Regrid) -> Result<RearrangementProfile> {
    let first = profiles.first().ok_or_else(|| Error::param("profiles", "empty list"))?;
    let interp = first.interpolation;
    if profiles.iter().any(|p| p.interpolation != interp) {
        return Err(Error::IncompatibleGrids);
    }
    let same = profiles.iter().all(|p| p.grid == first.grid);
    let grid: Vec<f64> = match (regrid, same) {
        (_, true) => first.grid.clone(),
        (Regrid::Require, false) => return Err(Error::IncompatibleGrids),
        (Regrid::Union, false) => {
            let mut g: Vec<f64> = profiles.iter().flat_map(|p| p.grid.iter().copied()).collect();
            g.sort_by(f64::total_cmp);
            g.dedup();
            g
        }
        (Regrid::Onto(g), false) => g.clone(),
    };
    let values: Vec<f64> = match interp {
        // For steps the value on [g_{i-1}, g_i) is read at its left end.
        Interpolation::Step => {
            let mut left = 0.0;
            grid.iter()
                .map(|t| {
                    let probe = if left == 0.0 { 0.5 * t } else { left };
                    left = *t;
                    profiles.iter().map(|p| p.value(probe)).fold(0.0, f64::max)
                })
                .collect()
        }
        Interpolation::LogLinear => grid.iter().map(|t| profiles.iter().map(|p| p.value(*t)).fold(0.0, f64::max)).collect(),
    };
    // Left-end reads of nonincreasing functions are nonincreasing; enforce against rounding.
    let mut values = values;
    for i in 1..values.len() {
        if values[i] > values[i - 1] {
            values[i] = values[i - 1];
        }
    }
    RearrangementProfile::validated(grid, values, interp)
}

/// Logarithmic grid specification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogGrid {
    pub min_decade: i32,
    pub max_decade: i32,
    pub per_decade: usize,
}

impl Default for LogGrid {
    fn default() -> Self {
        Self { min_decade: -6, max_decade: 6, per_decade: 32 }
    }
}

impl LogGrid {
    pub fn points(&self) -> Vec<f64> {
        let count = (self.max_decade - self.min_decade) as usize * self.per_decade;
        (0..=count)
            .map(|i| 10f64.powf(self.min_decade as f64 + i as f64 / self.per_decade as f64))
            .collect()
    }
}

/// Divergence detection under repeated doubling of a truncation bound.
///
/// Increments `Δ_k = I(T_k) - I(T_{k-1})` over `T_k = T_0 2^k` are tracked.
/// The series is finite once `window` consecutive ratios `Δ_{k-1}/Δ_k` reach
/// `growth_factor`. After at least `min_doublings` doublings, ratios that all
/// stay at or above `stall_factor` are accepted as slow geometric convergence,
/// and ratios that all stay below it mark divergence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DoublingRule {
    pub growth_factor: f64,
    pub stall_factor: f64,
    pub window: usize,
    pub min_doublings: usize,
    pub max_doublings: usize,
}

impl Default for DoublingRule {
    fn default() -> Self {
        Self { growth_factor: 1.5, stall_factor: 1.15, window: 4, min_doublings: 8, max_doublings: 40 }
    }
}

/// Outcome of a doubling study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SeriesVerdict {
    /// Converged; `value` includes a geometric tail estimate `tail`.
    Finite { value: f64, tail: f64 },
    /// Increments fail to shrink; `rate` is the slope of `I` against `log T`.
    Divergent { rate: f64 },
    /// Neither criterion met within the doubling budget.
    Undecided { value: f64 },
}

impl SeriesVerdict {
    pub fn finite_value(&self) -> Option<f64> {
        match self {
            SeriesVerdict::Finite { value, .. } => Some(*value),
            _ => None,
        }
    }

    pub fn is_divergent(&self) -> bool {
        matches!(self, SeriesVerdict::Divergent { .. })
    }
}

/// Partial integrals along the doubling schedule with their verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoublingSeries {
    pub truncations: Vec<f64>,
    pub partials: Vec<f64>,
    pub verdict: SeriesVerdict,
}

impl DoublingRule {
    /// Classifies given partial sums at truncations `T_k`.
    pub fn classify(&self, truncations: &[f64], partials: &[f64]) -> SeriesVerdict {
        let m = partials.len();
        let last = partials.last().copied().unwrap_or(0.0);
        if m < self.window + 1 {
            return SeriesVerdict::Undecided { value: last };
        }
        let incs: Vec<f64> = (0..m).map(|k| partials[k] - if k == 0 { 0.0 } else { partials[k - 1] }).collect();
        let tail = &incs[m - self.window - 1..];
        let scale = partials.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if tail.iter().skip(1).all(|d| d.abs() <= 1e-13 * scale) {
            return SeriesVerdict::Finite { value: last, tail: 0.0 };
        }
        let ratios: Vec<f64> = tail.windows(2).map(|w| if w[1].abs() > 0.0 { w[0] / w[1] } else { f64::INFINITY }).collect();
        let settled = m >= self.min_doublings && ratios.iter().all(|r| *r >= self.stall_factor);
        if settled || ratios.iter().all(|r| *r >= self.growth_factor) {
            let q = 1.0 / ratios.iter().cloned().fold(f64::INFINITY, f64::min);
            let d = incs[m - 1];
            let t = d * q / (1.0 - q);
            return SeriesVerdict::Finite { value: last + t, tail: t };
        }
        if m >= self.min_doublings && ratios.iter().all(|r| *r < self.stall_factor && *r > 0.0) {
            let lx: Vec<f64> = truncations[m - self.window - 1..].iter().map(|t| t.ln()).collect();
            let rate = fit::line(&lx, &partials[m - self.window - 1..]).map(|f| f.slope).unwrap_or(f64::NAN);
            return SeriesVerdict::Divergent { rate };
        }
        SeriesVerdict::Undecided { value: last }
    }

    /// Runs `I(T_k) = Σ_{j<=k} piece(T_{j-1}, T_j)` with `T_{-1} = lower`,
    /// `T_k = lower 2^{k+1}`, stopping early on convergence.
    pub fn run<F: FnMut(f64, f64) -> f64>(&self, lower: f64, mut piece: F) -> DoublingSeries {
        let mut truncations = Vec::new();
        let mut partials = Vec::new();
        let mut acc = 0.0;
        let mut left = lower;
        let mut verdict = SeriesVerdict::Undecided { value: 0.0 };
        for _ in 0..self.max_doublings {
            let right = 2.0 * left;
            acc += piece(left, right);
            truncations.push(right);
            partials.push(acc);
            left = right;
            verdict = self.classify(&truncations, &partials);
            if matches!(verdict, SeriesVerdict::Finite { .. }) {
                break;
            }
        }
        DoublingSeries { truncations, partials, verdict }
    }
}

/// The rearrangement `t ↦ k*(x,t)` of one kernel slice.
pub enum StarFunction {
    /// Closed-form or root-finding evaluation.
    Analytic(Box<dyn Fn(f64) -> f64 + Send + Sync>),
    /// Sampled profile.
    Profile(RearrangementProfile),
}

impl StarFunction {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            StarFunction::Analytic(f) => f(t),
            StarFunction::Profile(p) => p.value(t),
        }
    }

    /// `∫_a^b k*(t)^β dt` for finite `0 < a < b`.
    pub fn pow_integral(&self, a: f64, b: f64, beta: f64) -> f64 {
        match self {
            StarFunction::Profile(p) => p.pow_integral(a, b, beta).unwrap_or(f64::INFINITY),
            StarFunction::Analytic(f) => {
                let (la, lb) = (a.ln(), b.ln());
                quadrature::adaptive(
                    |u| {
                        let t = u.exp();
                        t * f(t).powf(beta)
                    },
                    la,
                    lb,
                    1e-10,
                    1e-300,
                )
                .value
            }
        }
    }

    /// Tabulates the function on `grid` as a log-linear profile.
    pub fn tabulate(&self, grid: &[f64]) -> Result<RearrangementProfile> {
        match self {
            StarFunction::Profile(p) if p.grid == grid => Ok(p.clone()),
            _ => {
                let mut vals: Vec<f64> = grid.iter().map(|t| self.value(*t)).collect();
                for i in 1..vals.len() {
                    vals[i] = vals[i].min(vals[i - 1]);
                }
                RearrangementProfile::log_linear(grid.to_vec(), vals)
            }
        }
    }
}

/// Sampling resolution for kernels without an analytic rearrangement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolarSampling {
    pub r_min: f64,
    pub r_max: f64,
    pub rings_per_decade: usize,
    pub angles: usize,
}

impl Default for PolarSampling {
    fn default() -> Self {
        Self { r_min: 1e-3, r_max: 1e3, rings_per_decade: 200, angles: 64 }
    }
}

/// Unit directions in `R^n`: equispaced for `n = 2`, a Fibonacci lattice for
/// `n = 3`, and a deterministic Halton-normal set otherwise.
pub fn sphere_directions(n: usize, count: usize) -> Vec<Vec<f64>> {
    let count = count.max(1);
    match n {
        2 => (0..count)
            .map(|i| {
                let th = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / count as f64;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                    let rho = (1.0 - z * z).sqrt();
                    let ph = golden * i as f64;
                    vec![rho * ph.cos(), rho * ph.sin(), z]
                })
                .collect()
        }
        _ => crate::symbol::halton_sphere(n, count),
    }
}

/// Builds `t ↦ k*(x,t)` for one basepoint.
///
/// Translation-invariant radial kernels use `k*(x,t) = K(r)` where
/// `Λ_Ω(x, r) = t`; the shell kernel has a closed form; the remaining
/// variants are sampled on log-polar rings around `x`.
pub fn kernel_star(kernel: &KernelSpec, x: &[f64], mc: &McConfig, sampling: &PolarSampling) -> Result<StarFunction> {
    kernel.validate()?;
    let n = kernel.dim();
    if x.len() != n {
        return Err(Error::param("basepoint", format!("expected {n} coordinates")));
    }
    let b1 = unit_ball_volume(n);
    match kernel {
        KernelSpec::Shell { alpha, .. } => {
            let rho = x.iter().map(|c| c * c).sum::<f64>().sqrt();
            let inner = (0.5 * rho).powi(n as i32);
            let end = b1 * rho.powi(n as i32) * (1.0 - 0.5f64.powi(n as i32));
            let e = (alpha - n as f64) / n as f64;
            Ok(StarFunction::Analytic(Box::new(move |t| if t < end { (t / b1 + inner).powf(e) } else { 0.0 })))
        }
        _ => {
            if let Some((radial, domain)) = kernel.radial_profile() {
                let domain = domain.unwrap_or(DomainSpec::FullSpace { n });
                if !domain.contains(x) {
                    return Ok(StarFunction::Analytic(Box::new(|_| 0.0)));
                }
                if let DomainSpec::FullSpace { .. } = domain {
                    return Ok(StarFunction::Analytic(Box::new(move |t| radial((t / b1).powf(1.0 / n as f64)))));
                }
                let x = x.to_vec();
                let mc = *mc;
                Ok(StarFunction::Analytic(Box::new(move |t| {
                    match domain.radius_for_measure(&x, t, &mc) {
                        Some(r) => radial(r),
                        None => 0.0,
                    }
                })))
            } else {
                Ok(StarFunction::Profile(sampled_star(kernel, x, sampling)?))
            }
        }
    }
}

/// Rearrangement of `y ↦ |k(x,y)|` from log-polar samples around `x`.
pub fn sampled_star(kernel: &KernelSpec, x: &[f64], s: &PolarSampling) -> Result<RearrangementProfile> {
    let n = kernel.dim();
    let omega = crate::special::unit_sphere_area(n);
    let decades = (s.r_max / s.r_min).log10();
    let rings = (decades * s.rings_per_decade as f64).ceil() as usize;
    let h = (s.r_max / s.r_min).ln() / rings as f64;
    let dirs = sphere_directions(n, if n == 2 { s.angles } else { s.angles * s.angles / 4 });
    let per_dir = 1.0 / dirs.len() as f64;
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..rings)
        .into_par_iter()
        .map(|i| {
            let r0 = s.r_min * (h * i as f64).exp();
            let r1 = s.r_min * (h * (i + 1) as f64).exp();
            let rm = (r0 * r1).sqrt();
            let vol = omega / n as f64 * (r1.powi(n as i32) - r0.powi(n as i32)) * per_dir;
            let mut vals = Vec::with_capacity(dirs.len());
            let mut wts = Vec::with_capacity(dirs.len());
            let mut y = vec![0.0; n];
            for d in &dirs {
                for k in 0..n {
                    y[k] = x[k] + rm * d[k];
                }
                let v = kernel.eval(x, &y).unwrap_or(0.0);
                vals.push(v.abs());
                wts.push(vol);
            }
            (vals, wts)
        })
        .collect();
    let (values, weights): (Vec<f64>, Vec<f64>) = rows.into_iter().fold((vec![], vec![]), |(mut a, mut b), (v, w)| {
        a.extend(v);
        b.extend(w);
        (a, b)
    });
    Ok(rearrangement(&WeightedSamples::new(values, weights)?))
}

/// Per-basepoint outcome of a critical integral.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointIntegral {
    pub index: usize,
    pub basepoint: Vec<f64>,
    pub series: DoublingSeries,
}

/// Supremum over the basepoint sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SupValue {
    Finite(f64),
    Divergent { rate: f64 },
    Undecided(f64),
}

/// Report for `J_τ = (1/A) sup_x ∫_τ^∞ k₁*(x,t)^β dt`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalIntegralReport {
    pub tau: f64,
    pub beta: f64,
    pub normalizer: Option<f64>,
    pub per_point: Vec<PointIntegral>,
    pub sup_value: SupValue,
}

impl CriticalIntegralReport {
    pub fn is_divergent(&self) -> bool {
        matches!(self.sup_value, SupValue::Divergent { .. })
    }

    pub fn finite_value(&self) -> Option<f64> {
        match self.sup_value {
            SupValue::Finite(v) => Some(v),
            _ => None,
        }
    }
}

fn sup_of(series: &[&DoublingSeries], normalizer: Option<f64>) -> SupValue {
    let a = normalizer.unwrap_or(1.0);
    let mut best = 0.0f64;
    let mut undecided = false;
    let mut rate = None::<f64>;
    for s in series {
        match s.verdict {
            SeriesVerdict::Finite { value, .. } => best = best.max(value / a),
            SeriesVerdict::Divergent { rate: r } => rate = Some(rate.map_or(r / a, |q: f64| q.max(r / a))),
            SeriesVerdict::Undecided { value } => {
                undecided = true;
                best = best.max(value / a);
            }
        }
    }
    match (rate, undecided) {
        (Some(r), _) => SupValue::Divergent { rate: r },
        (None, true) => SupValue::Undecided(best),
        (None, false) => SupValue::Finite(best),
    }
}

/// Options for [`critical_integral`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CriticalOptions {
    pub rule: DoublingRule,
    pub mc: McConfig,
    pub sampling: PolarSampling,
    /// Divides the supremum when present.
    pub normalizer: Option<f64>,
}

/// Per-point `∫_τ^∞ k₁*(x,t)^β dt` under truncation doubling, and the sup.
pub fn critical_integral(
    kernel: &KernelSpec,
    basepoints: &[Vec<f64>],
    tau: f64,
    beta: f64,
    opts: &CriticalOptions,
) -> Result<CriticalIntegralReport> {
    if !(tau > 0.0) {
        return Err(Error::param("tau", "must be positive"));
    }
    if !(beta > 1.0) {
        return Err(Error::param("beta", "must exceed 1"));
    }
    if basepoints.is_empty() {
        return Err(Error::param("basepoints", "empty sample"));
    }
    let per_point: Vec<PointIntegral> = basepoints
        .par_iter()
        .enumerate()
        .map(|(index, x)| {
            let star = kernel_star(kernel, x, &opts.mc, &opts.sampling)?;
            let series = opts.rule.run(tau, |a, b| star.pow_integral(a, b, beta));
            Ok(PointIntegral { index, basepoint: x.clone(), series })
        })
        .collect::<Result<_>>()?;
    let refs: Vec<&DoublingSeries> = per_point.iter().map(|p| &p.series).collect();
    let sup_value = sup_of(&refs, opts.normalizer);
    Ok(CriticalIntegralReport { tau, beta, normalizer: opts.normalizer, per_point, sup_value })
}

/// `∫_τ^∞ (sup_x k*(x,t))^β dt` over the basepoint sample: the integral of the
/// maximal rearrangement rather than the sup of per-point integrals.
pub fn maximal_critical_integral(
    kernel: &KernelSpec,
    basepoints: &[Vec<f64>],
    tau: f64,
    beta: f64,
    opts: &CriticalOptions,
) -> Result<DoublingSeries> {
    let stars: Vec<StarFunction> =
        basepoints.iter().map(|x| kernel_star(kernel, x, &opts.mc, &opts.sampling)).collect::<Result<_>>()?;
    let envelope = StarFunction::Analytic(Box::new(move |t| stars.iter().map(|s| s.value(t)).fold(0.0, f64::max)));
    Ok(opts.rule.run(tau, |a, b| {
        // The envelope has kinks where the maximizer changes; split finely.
        let cells = 16;
        let ratio = (b / a).powf(1.0 / cells as f64);
        (0..cells).map(|i| envelope.pow_integral(a * ratio.powi(i), a * ratio.powi(i + 1), beta)).sum()
    }))
}

/// Both sides of the layer-cake identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LayerCake {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// `∫_0^{φ(t0)} λ_φ(s) s^{p-1} ds` against
/// `(1/p)∫_{t0}^∞ φ^p + (t0/p) φ(t0)^p`.
pub fn layer_cake_identity(phi: &RearrangementProfile, p: f64, t0: f64) -> Result<LayerCake> {
    if !(p > 1.0) {
        return Err(Error::param("p", "must exceed 1"));
    }
    if !(t0 > 0.0) {
        return Err(Error::param("t0", "must be positive"));
    }
    let level = phi.value(t0);
    let lhs = match phi.interpolation {
        Interpolation::Step => {
            // λ(s) = t_i on [v_{i+1}, v_i), truncated at s = φ(t0).
            let j = phi.grid.partition_point(|g| *g <= t0);
            let mut acc = 0.0;
            for i in j..phi.grid.len() {
                let top = if i == j { level } else { phi.star_values[i] };
                let below = phi.star_values.get(i + 1).copied().unwrap_or(0.0);
                acc += phi.grid[i] * (top.powf(p) - below.powf(p)) / p;
            }
            acc
        }
        Interpolation::LogLinear => {
            // Stieltjes form ∫_{t0}^∞ t d(-φ^p/p): per power piece c t^e it
            // contributes -e c^p ∫ t^{pe} dt; a dropping zero node adds t φ^p/p.
            let mut acc = 0.0;
            let pieces = phi.power_pieces();
            for (lo, hi, at, av, e) in &pieces {
                let from = lo.max(t0);
                if *hi <= from || *av == 0.0 {
                    continue;
                }
                if *e != 0.0 {
                    let k = p * e + 1.0;
                    if hi.is_infinite() && k >= 0.0 {
                        return Err(Error::Divergent("layer-cake side diverges".into()));
                    }
                    let lf = (from / at).ln();
                    let piece = if hi.is_infinite() { -(k * lf).exp() / k } else { exp_integral(lf, (hi / at).ln(), k) };
                    acc += -e * av.powf(p) * at * piece;
                }
            }
            if let Some((_, hi, at, av, e)) = pieces.last() {
                if hi.is_finite() && *hi > t0 {
                    acc += hi * (av * (hi / at).powf(*e)).powf(p) / p;
                }
            }
            acc
        }
    };
    let tail = phi.pow_integral(t0, f64::INFINITY, p)?;
    let rhs = tail / p + t0 / p * level.powf(p);
    if !lhs.is_finite() || !rhs.is_finite() {
        return Err(Error::Divergent("layer-cake integrals".into()));
    }
    Ok(LayerCake { lhs, rhs, residual: (lhs - rhs).abs() })
}

/// Right side with the boundary term `t0 φ(t0)^{p-1}` in place of the
/// Fubini term, kept for comparison.
pub fn layer_cake_printed_variant(phi: &RearrangementProfile, p: f64, t0: f64) -> Result<f64> {
    let tail = phi.pow_integral(t0, f64::INFINITY, p)?;
    Ok(tail / p + t0 * phi.value(t0).powf(p - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn distribution_counts() {
        let f = WeightedSamples::uniform(vec![3.0, 1.0, 2.0]).unwrap();
        assert_eq!(f.distribution_function(1.5), 2.0);
        assert_eq!(f.distribution_function(3.5), 0.0);
        assert_eq!(WeightedSamples::uniform(vec![]).unwrap().distribution_function(0.0), 0.0);
    }

    #[test]
    fn distribution_of_sampled_riesz() {
        // |x|^{-1} on a fine grid of B(0,1) ⊂ R²; λ(2) = |B(0,1/2)| = π/4.
        let m = 800;
        let h = 2.0 / m as f64;
        let mut vals = vec![];
        for i in 0..m {
            for j in 0..m {
                let (x, y) = (-1.0 + (i as f64 + 0.5) * h, -1.0 + (j as f64 + 0.5) * h);
                let r = (x * x + y * y).sqrt();
                if r < 1.0 {
                    vals.push(1.0 / r);
                }
            }
        }
        let w = vec![h * h; vals.len()];
        let f = WeightedSamples::new(vals, w).unwrap();
        assert!((f.distribution_function(2.0) - PI / 4.0).abs() < 5e-3);
    }

    #[test]
    fn sort_example() {
        let p = rearrangement(&WeightedSamples::uniform(vec![3.0, 1.0, 2.0]).unwrap());
        assert_eq!(p.grid(), &[1.0, 2.0, 3.0]);
        assert_eq!(p.star_values(), &[3.0, 2.0, 1.0]);
        let c = rearrangement(&WeightedSamples::new(vec![-4.0; 5], vec![0.5; 5]).unwrap());
        assert_eq!(c.grid(), &[2.5]);
        assert_eq!(c.star_values(), &[4.0]);
    }

    #[test]
    fn double_star_examples() {
        let c = RearrangementProfile::constant(7.0, 10.0).unwrap();
        assert!((c.double_star(3.0).unwrap() - 7.0).abs() < 1e-15);
        let s = RearrangementProfile::log_linear(vec![1.0, 4.0], vec![1.0, 0.5]).unwrap();
        assert!((s.double_star(1.0).unwrap() - 2.0).abs() < 1e-13);
        let bad = RearrangementProfile::log_linear(vec![1.0, 2.0], vec![1.0, 0.25]).unwrap();
        assert!(matches!(bad.double_star(1.0), Err(Error::Divergent(_))));
    }

    #[test]
    fn layer_cake_power_example() {
        let phi = RearrangementProfile::log_linear(vec![1.0, 4.0], vec![1.0, 0.5]).unwrap();
        let lc = layer_cake_identity(&phi, 3.0, 1.0).unwrap();
        assert!((lc.lhs - 1.0).abs() < 1e-12 && (lc.rhs - 1.0).abs() < 1e-12);
        let printed = layer_cake_printed_variant(&phi, 3.0, 1.0).unwrap();
        assert!((printed - 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn layer_cake_constant() {
        let phi = RearrangementProfile::constant(2.0, 5.0).unwrap();
        // t0 inside the support so that φ(t0) = c.
        let lc = layer_cake_identity(&phi, 2.5, 4.999_999).unwrap();
        let exact = 5.0 * 2f64.powf(2.5) / 2.5;
        assert!((lc.lhs - exact).abs() < 1e-9 && lc.residual < 1e-9);
    }

    #[test]
    fn maximal_of_constants() {
        let a = RearrangementProfile::constant(1.0, 2.0).unwrap();
        let b = RearrangementProfile::constant(3.0, 2.0).unwrap();
        let m = maximal_rearrangement(&[a.clone(), b.clone()], &Regrid::Require).unwrap();
        assert_eq!(m, b);
        let single = maximal_rearrangement(std::slice::from_ref(&a), &Regrid::Require).unwrap();
        assert_eq!(single, a);
        let c = RearrangementProfile::constant(1.0, 3.0).unwrap();
        assert_eq!(maximal_rearrangement(&[a.clone(), c.clone()], &Regrid::Require), Err(Error::IncompatibleGrids));
        let u = maximal_rearrangement(&[b, c], &Regrid::Union).unwrap();
        assert_eq!(u.star_values(), &[3.0, 1.0]);
    }

    #[test]
    fn doubling_rule_classes() {
        let rule = DoublingRule::default();
        let log = rule.run(1.0, |a, b| (b / a).ln() * PI);
        match log.verdict {
            SeriesVerdict::Divergent { rate } => assert!((rate - PI).abs() < 1e-9),
            v => panic!("{v:?}"),
        }
        let geo = rule.run(1.0, |a, b| 1.0 / a - 1.0 / b);
        let v = geo.verdict.finite_value().unwrap();
        assert!((v - 1.0).abs() < 1e-6);
    }

    #[test]
    fn riesz_full_space_critical_diverges() {
        let k = KernelSpec::Riesz { n: 2, alpha: 1.0 };
        let rep = critical_integral(&k, &[vec![0.0, 0.0]], 1.0, 2.0, &CriticalOptions::default()).unwrap();
        match rep.sup_value {
            SupValue::Divergent { rate } => assert!((rate - PI).abs() < 1e-6),
            v => panic!("{v:?}"),
        }
    }
}
