//! Exact checks of O'Neil-type rearrangement inequalities on finite measure
//! spaces. Every rearrangement, `(·)**` and kernel integral is a finite sum
//! over atoms, so comparisons are exact up to accumulated rounding.

use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Rounding slack for exact comparisons.
pub const EXACT_TOL: f64 = 1e-10;

/// A nonincreasing right-continuous step function on `(0, ∞)`:
/// `heights[k]` on `[ends[k-1], ends[k])`, zero after the last end.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepFunction {
    heights: Vec<f64>,
    ends: Vec<f64>,
}

impl StepFunction {
    /// Decreasing rearrangement of `|values|` against atom weights.
    pub fn rearrange(values: &[f64], weights: &[f64]) -> Self {
        let mut atoms: Vec<(f64, f64)> =
            values.iter().zip(weights).map(|(v, w)| (v.abs(), *w)).filter(|(v, w)| *v > 0.0 && *w > 0.0).collect();
        atoms.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut heights: Vec<f64> = Vec::with_capacity(atoms.len());
        let mut ends: Vec<f64> = Vec::with_capacity(atoms.len());
        let mut acc = 0.0;
        for (v, w) in atoms {
            acc += w;
            if heights.last() == Some(&v) {
                *ends.last_mut().expect("paired") = acc;
            } else {
                heights.push(v);
                ends.push(acc);
            }
        }
        Self { heights, ends }
    }

    /// Pointwise maximum of nonincreasing step functions, itself nonincreasing.
    pub fn envelope(parts: &[StepFunction]) -> Self {
        let mut cuts: Vec<f64> = parts.iter().flat_map(|p| p.ends.iter().copied()).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut heights = Vec::new();
        let mut ends = Vec::new();
        let mut left = 0.0;
        for c in cuts {
            let mid = 0.5 * (left + c);
            let h = parts.iter().map(|p| p.value(mid)).fold(0.0, f64::max);
            if h > 0.0 {
                if heights.last() == Some(&h) {
                    *ends.last_mut().expect("paired") = c;
                } else {
                    heights.push(h);
                    ends.push(c);
                }
            }
            left = c;
        }
        Self { heights, ends }
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn ends(&self) -> &[f64] {
        &self.ends
    }

    pub fn support(&self) -> f64 {
        self.ends.last().copied().unwrap_or(0.0)
    }

    pub fn value(&self, t: f64) -> f64 {
        let k = self.ends.partition_point(|e| *e <= t);
        self.heights.get(k).copied().unwrap_or(0.0)
    }

    fn start(&self, k: usize) -> f64 {
        if k == 0 { 0.0 } else { self.ends[k - 1] }
    }

    /// `∫_a^b f(u) g(u) du` where `big_g` is an antiderivative of `g`.
    pub fn integral_against(&self, a: f64, b: f64, big_g: impl Fn(f64) -> f64) -> f64 {
        let mut s = 0.0;
        for (k, h) in self.heights.iter().enumerate() {
            let (lo, hi) = (self.start(k).max(a), self.ends[k].min(b));
            if hi > lo {
                s += h * (big_g(hi) - big_g(lo));
            }
        }
        s
    }

    pub fn integral(&self, a: f64, b: f64) -> f64 {
        self.integral_against(a, b, |u| u)
    }

    /// `f**(t) = (1/t) ∫_0^t f*`.
    pub fn double_star(&self, t: f64) -> f64 {
        self.integral(0.0, t) / t
    }

    /// `∫_τ^∞ f(u) g(u) du` for two step functions.
    pub fn product_tail(&self, other: &StepFunction, tau: f64) -> f64 {
        let (mut i, mut j) = (0, 0);
        let mut left = 0.0f64;
        let mut s = 0.0;
        while i < self.ends.len() && j < other.ends.len() {
            let right = self.ends[i].min(other.ends[j]);
            let lo = left.max(tau);
            if right > lo {
                s += self.heights[i] * other.heights[j] * (right - lo);
            }
            left = right;
            if self.ends[i] == right {
                i += 1;
            }
            if other.ends[j] == right {
                j += 1;
            }
        }
        s
    }

    /// `sup_t f(t) t^{e}`, attained at the right end of a step.
    pub fn power_sup(&self, e: f64) -> f64 {
        self.heights.iter().zip(&self.ends).map(|(h, b)| h * b.powf(e)).fold(0.0, f64::max)
    }
}

/// The exponents `β, σ, p` of the lemma; `q` follows from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneilParams {
    pub beta: f64,
    pub sigma: f64,
    pub p: f64,
}

impl OneilParams {
    /// `1/q = 1/(σβ) + (1/σ)(1/p - 1)`.
    pub fn q(&self) -> f64 {
        1.0 / (1.0 / (self.sigma * self.beta) + (1.0 / self.p - 1.0) / self.sigma)
    }

    /// `max{1, β(1-σ)/(β-1)} ≤ p < β'` and `q > p`.
    pub fn validate(&self) -> Result<()> {
        let (b, s, p) = (self.beta, self.sigma, self.p);
        if !(b > 1.0) {
            return Err(Error::param("beta", "must exceed 1"));
        }
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::param("sigma", "must lie in (0, 1]"));
        }
        let lo = 1f64.max(b * (1.0 - s) / (b - 1.0));
        let hi = b / (b - 1.0);
        if !(p >= lo && p < hi) {
            return Err(Error::param("p", format!("must lie in [{lo}, {hi})")));
        }
        let q = self.q();
        if !(q > p) || !q.is_finite() {
            return Err(Error::param("p", format!("gives q = {q} ≤ p = {p}; the weak-type constant q²/(σβ(q-p)) breaks down")));
        }
        Ok(())
    }

    /// `q²/(σβ(q-p)) D_λ^{1-1/p} B_λ^{1/q}` with the distribution-form constants
    /// `λ₁ ≤ D_λ s^{-β}`, `λ₂ ≤ B_λ s^{-σβ}`, i.e. `D_λ = D^β`, `B_λ = B^{σβ}` for the
    /// rearrangement constants `D, B`. Only this form is invariant under scaling the kernel.
    pub fn weak_type_constant(&self, d: f64, b: f64) -> f64 {
        let q = self.q();
        let (dl, bl) = (d.powf(self.beta), b.powf(self.sigma * self.beta));
        q * q / (self.sigma * self.beta * (q - self.p)) * dl.powf(1.0 - 1.0 / self.p) * bl.powf(1.0 / q)
    }

    /// The constant with `D, B` of the rearrangement bounds substituted verbatim.
    pub fn weak_type_constant_verbatim(&self, d: f64, b: f64) -> f64 {
        let q = self.q();
        q * q / (self.sigma * self.beta * (q - self.p)) * d.powf(1.0 - 1.0 / self.p) * b.powf(1.0 / q)
    }
}

/// A kernel between two finite measure spaces with its rearrangement bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteInstance {
    /// Weights of the source atoms (`M`).
    pub mu: Vec<f64>,
    /// Weights of the target atoms (`N`).
    pub nu: Vec<f64>,
    /// `kernel[i][j] = k(x_i, y_j)`, one row per target atom.
    pub kernel: Vec<Vec<f64>>,
    pub params: OneilParams,
    pub d: f64,
    pub b: f64,
}

impl DiscreteInstance {
    /// Builds an instance with the tightest constants `D, B` allowed by the kernel.
    pub fn with_tight_bounds(mu: Vec<f64>, nu: Vec<f64>, kernel: Vec<Vec<f64>>, params: OneilParams) -> Result<Self> {
        let mut inst = Self { mu, nu, kernel, params, d: 0.0, b: 0.0 };
        inst.check_shapes()?;
        let (d, b) = inst.minimal_bounds();
        inst.d = d;
        inst.b = b;
        inst.validate()?;
        Ok(inst)
    }

    fn check_shapes(&self) -> Result<()> {
        if self.mu.is_empty() || self.nu.is_empty() || self.kernel.len() != self.nu.len() {
            return Err(Error::param("kernel", "need one row per N-atom and nonempty weights"));
        }
        if self.kernel.iter().any(|r| r.len() != self.mu.len()) {
            return Err(Error::param("kernel", "need one column per M-atom"));
        }
        if self.mu.iter().chain(&self.nu).any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::param("weights", "must be positive and finite"));
        }
        if self.kernel.iter().flatten().any(|k| !(*k >= 0.0 && k.is_finite())) {
            return Err(Error::param("kernel", "entries must be finite and nonnegative"));
        }
        Ok(())
    }

    /// Parameter window plus `k₁* ≤ D t^{-1/β}` and `k₂* ≤ B t^{-1/(σβ)}` at every step.
    pub fn validate(&self) -> Result<()> {
        self.check_shapes()?;
        self.params.validate()?;
        let (d, b) = self.minimal_bounds();
        if d > self.d * (1.0 + EXACT_TOL) || b > self.b * (1.0 + EXACT_TOL) {
            return Err(Error::Precondition(format!("rearrangement bounds need D ≥ {d} and B ≥ {b}")));
        }
        Ok(())
    }

    /// Unit of `C₀` for this instance. The constant of the rearrangement inequality
    /// scales with `D, B` exactly as the weak-type constant does.
    pub fn c0_scale(&self) -> f64 {
        self.params.weak_type_constant(self.d, self.b)
    }

    pub fn n_atoms(&self) -> usize {
        self.nu.len()
    }

    pub fn m_atoms(&self) -> usize {
        self.mu.len()
    }

    /// `k₁*(x_i, ·)`: rearrangement of row `i` against `μ`.
    pub fn row_star(&self, i: usize) -> StepFunction {
        StepFunction::rearrange(&self.kernel[i], &self.mu)
    }

    /// `k₂*(y_j, ·)`: rearrangement of column `j` against `ν`.
    pub fn column_star(&self, j: usize) -> StepFunction {
        let col: Vec<f64> = self.kernel.iter().map(|r| r[j]).collect();
        StepFunction::rearrange(&col, &self.nu)
    }

    /// `k₁*(t) = sup_x k₁*(x, t)`.
    pub fn maximal_row_star(&self) -> StepFunction {
        let rows: Vec<StepFunction> = (0..self.n_atoms()).map(|i| self.row_star(i)).collect();
        StepFunction::envelope(&rows)
    }

    pub fn maximal_column_star(&self) -> StepFunction {
        let cols: Vec<StepFunction> = (0..self.m_atoms()).map(|j| self.column_star(j)).collect();
        StepFunction::envelope(&cols)
    }

    /// Smallest `D, B` satisfying the rearrangement bounds.
    pub fn minimal_bounds(&self) -> (f64, f64) {
        let beta = self.params.beta;
        let d = self.maximal_row_star().power_sup(1.0 / beta);
        let b = self.maximal_column_star().power_sup(1.0 / (self.params.sigma * beta));
        (d, b)
    }

    /// Dense matrix text: a header of exponents and constants, the two weight
    /// rows, then one kernel row per N-atom.
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:.17e}")).collect::<Vec<_>>().join(" ");
        let mut s = format!(
            "beta {:.17e} sigma {:.17e} p {:.17e} D {:.17e} B {:.17e}\nmu {}\nnu {}\n",
            self.params.beta,
            self.params.sigma,
            self.params.p,
            self.d,
            self.b,
            join(&self.mu),
            join(&self.nu)
        );
        for r in &self.kernel {
            s.push_str(&join(r));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, reason: &str| Error::Manifest { field: format!("line {line}"), reason: reason.into() };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let nums = |s: &str, line: usize| -> Result<Vec<f64>> {
            s.split_whitespace().map(|t| t.parse::<f64>().map_err(|_| bad(line, "expected a number"))).collect()
        };
        let header: Vec<&str> = lines.next().ok_or_else(|| bad(1, "missing header"))?.split_whitespace().collect();
        if header.len() != 10 || header.iter().step_by(2).ne(["beta", "sigma", "p", "D", "B"].iter()) {
            return Err(bad(1, "header must read `beta _ sigma _ p _ D _ B _`"));
        }
        let h = |k: usize| header[k].parse::<f64>().map_err(|_| bad(1, "expected a number"));
        let params = OneilParams { beta: h(1)?, sigma: h(3)?, p: h(5)? };
        let (d, b) = (h(7)?, h(9)?);
        let weights = |line: Option<&str>, key: &str, at: usize| -> Result<Vec<f64>> {
            let l = line.ok_or_else(|| bad(at, "missing weights"))?;
            let rest = l.trim_start().strip_prefix(key).ok_or_else(|| bad(at, "weights row must start with its name"))?;
            nums(rest, at)
        };
        let mu = weights(lines.next(), "mu", 2)?;
        let nu = weights(lines.next(), "nu", 3)?;
        let kernel: Vec<Vec<f64>> = lines.enumerate().map(|(i, l)| nums(l, i + 4)).collect::<Result<_>>()?;
        let inst = Self { mu, nu, kernel, params, d, b };
        inst.validate()?;
        Ok(inst)
    }
}

/// `Tf(x_i) = Σ_j k(i,j) f(j) μ_j`.
pub fn discrete_potential(inst: &DiscreteInstance, f: &[f64]) -> Result<Vec<f64>> {
    if f.len() != inst.m_atoms() {
        return Err(Error::param("f", format!("expected {} values", inst.m_atoms())));
    }
    Ok(inst.kernel.iter().map(|row| row.iter().zip(f).zip(&inst.mu).map(|((k, v), w)| k * v * w).sum()).collect())
}

/// Breakpoints with midpoints, plus one point past the last break.
fn refine(mut cuts: Vec<f64>) -> Vec<f64> {
    cuts.retain(|c| *c > 0.0);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut out = Vec::with_capacity(2 * cuts.len() + 1);
    let mut left = 0.0;
    for c in &cuts {
        out.push(0.5 * (left + c));
        out.push(*c);
        left = *c;
    }
    out.push(2.0 * left.max(1.0));
    out
}

/// Default `t` and `τ` grids: breakpoints of `(Tf)*` and of `f*`, `k₁*` with midpoints.
pub fn default_grids(inst: &DiscreteInstance, f: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let tf = discrete_potential(inst, f)?;
    let t = refine(StepFunction::rearrange(&tf, &inst.nu).ends().to_vec());
    let mut tc = StepFunction::rearrange(f, &inst.mu).ends().to_vec();
    tc.extend_from_slice(inst.maximal_row_star().ends());
    Ok((t, refine(tc)))
}

/// Worst case of the improved O'Neil inequality over a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OneilMargin {
    /// `max (LHS - RHS)`; nonpositive when the inequality holds everywhere.
    pub max_margin: f64,
    pub worst_t: f64,
    pub worst_tau: f64,
    /// `max (LHS - S(τ)) / A(t,τ)`: the smallest `C₀` this function needs.
    pub required_c0: f64,
}

struct OneilTerms {
    lhs: Vec<f64>,
    /// `∫_0^τ u^{-1+1/p} f*(u) du` per `τ`.
    head: Vec<f64>,
    /// `sup_x ∫_τ^∞ k₁*(x,u) f*(u) du` per `τ`.
    tail: Vec<f64>,
}

fn oneil_terms(inst: &DiscreteInstance, f: &[f64], t_grid: &[f64], tau_grid: &[f64], per_point: bool) -> Result<OneilTerms> {
    let tf = StepFunction::rearrange(&discrete_potential(inst, f)?, &inst.nu);
    let fs = StepFunction::rearrange(f, &inst.mu);
    let p = inst.params.p;
    let lhs = t_grid.iter().map(|t| tf.double_star(*t)).collect();
    let head = tau_grid.iter().map(|tau| fs.integral_against(0.0, *tau, |u| p * u.powf(1.0 / p))).collect();
    let tail = if per_point {
        let rows: Vec<StepFunction> = (0..inst.n_atoms()).map(|i| inst.row_star(i)).collect();
        tau_grid.iter().map(|tau| rows.iter().map(|r| r.product_tail(&fs, *tau)).fold(0.0, f64::max)).collect()
    } else {
        let top = inst.maximal_row_star();
        tau_grid.iter().map(|tau| top.product_tail(&fs, *tau)).collect()
    };
    Ok(OneilTerms { lhs, head, tail })
}

fn margin_of(inst: &DiscreteInstance, terms: &OneilTerms, t_grid: &[f64], tau_grid: &[f64], c0: f64) -> OneilMargin {
    let q = inst.params.q();
    let s = inst.params.sigma;
    let mut out = OneilMargin { max_margin: f64::NEG_INFINITY, worst_t: 0.0, worst_tau: 0.0, required_c0: 0.0 };
    for (it, t) in t_grid.iter().enumerate() {
        for (iu, tau) in tau_grid.iter().enumerate() {
            let a = tau.powf(-s / q).max(t.powf(-1.0 / q)) * terms.head[iu];
            let excess = terms.lhs[it] - terms.tail[iu];
            let margin = excess - c0 * a;
            if margin > out.max_margin {
                out.max_margin = margin;
                out.worst_t = *t;
                out.worst_tau = *tau;
            }
            if a > 0.0 {
                out.required_c0 = out.required_c0.max(excess / a);
            }
        }
    }
    out
}

/// `(Tf)**(t) ≤ C₀ max{τ^{-σ/q}, t^{-1/q}} ∫_0^τ u^{-1+1/p} f*(u) du + sup_x ∫_τ^∞ k₁*(x,u) f*(u) du`
/// on the product of the grids.
pub fn oneil_check(inst: &DiscreteInstance, f: &[f64], t_grid: &[f64], tau_grid: &[f64], c0: f64) -> Result<OneilMargin> {
    inst.validate()?;
    if f.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::param("f", "must be nonnegative"));
    }
    let terms = oneil_terms(inst, f, t_grid, tau_grid, true)?;
    Ok(margin_of(inst, &terms, t_grid, tau_grid, c0))
}

/// Second terms of the inequality with the per-point `k₁*(x,·)` and with the
/// maximal `k₁*`, per `τ`.
pub fn tail_terms(inst: &DiscreteInstance, f: &[f64], tau_grid: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let per = oneil_terms(inst, f, &[], tau_grid, true)?.tail;
    let max = oneil_terms(inst, f, &[], tau_grid, false)?.tail;
    Ok((per, max))
}

/// Seeded generator of near-extremal instances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceGenerator {
    pub params: OneilParams,
    pub max_atoms: usize,
}

impl InstanceGenerator {
    /// Row `i` gives its `r`-th ranked column `(W_r)^{-1/β} u` with `W_r` the
    /// cumulative `μ`-weight of the first `r` ranks and `u ~ U[1/2, 1]`; the
    /// kernel is then rescaled so that `D = 1` is tight.
    pub fn instance(&self, seed: u64) -> Result<DiscreteInstance> {
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.gen_range(1..=self.max_atoms);
        let n = rng.gen_range(1..=self.max_atoms);
        let weight = LogNormal::new(0.0, 1.0).expect("valid lognormal");
        let mu: Vec<f64> = (0..m).map(|_| weight.sample(&mut rng)).collect();
        let nu: Vec<f64> = (0..n).map(|_| weight.sample(&mut rng)).collect();
        let mut order: Vec<usize> = (0..m).collect();
        let kernel: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                order.shuffle(&mut rng);
                let mut row = vec![0.0; m];
                let mut cum = 0.0;
                for &j in &order {
                    cum += mu[j];
                    row[j] = if rng.gen_bool(0.15) { 0.0 } else { cum.powf(-1.0 / self.params.beta) * rng.gen_range(0.5..=1.0) };
                }
                row
            })
            .collect();
        let mut inst = DiscreteInstance { mu, nu, kernel, params: self.params, d: 1.0, b: 1.0 };
        let (d, _) = inst.minimal_bounds();
        if d > 0.0 {
            inst.kernel.iter_mut().flatten().for_each(|k| *k /= d);
        }
        DiscreteInstance::with_tight_bounds(inst.mu, inst.nu, inst.kernel, inst.params)
    }

    /// A nonnegative source with a fraction of empty atoms and heavy-tailed values.
    pub fn source(&self, inst: &DiscreteInstance, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let value = LogNormal::new(0.0, 1.5).expect("valid lognormal");
        (0..inst.m_atoms()).map(|_| if rng.gen_bool(0.3) { 0.0 } else { value.sample(&mut rng) }).collect()
    }
}

/// Empirical `C₀` for one parameter cell, in units of [`DiscreteInstance::c0_scale`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Calibration {
    pub params: OneilParams,
    pub instances: usize,
    pub max_required: f64,
    /// `1.05 × max_required`.
    pub c0: f64,
}

pub fn calibrate_c0(generator: &InstanceGenerator, instances: usize, seed: u64) -> Result<Calibration> {
    let max_required = (0..instances as u64)
        .into_par_iter()
        .map(|k| {
            let s = seed.wrapping_add(k.wrapping_mul(0x2545_f491_4f6c_dd1d));
            let inst = generator.instance(s)?;
            let f = generator.source(&inst, s);
            let (t, tau) = default_grids(&inst, &f)?;
            Ok(oneil_check(&inst, &f, &t, &tau, 0.0)?.required_c0 / inst.c0_scale())
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(Calibration { params: generator.params, instances, max_required, c0: 1.05 * max_required })
}

/// Largest observed weak-type ratio over a batch of sources.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeakTypeReport {
    pub max_observed: f64,
    pub printed_constant: f64,
    /// The verbatim substitution, which is not scale invariant.
    pub verbatim_constant: f64,
}

impl WeakTypeReport {
    pub fn holds(&self) -> bool {
        self.max_observed <= self.printed_constant * (1.0 + EXACT_TOL)
    }
}

/// `sup_s s ν({Tf > s})^{1/q} / ‖f‖_p`, attained just below a value of `Tf`.
pub fn weak_type_ratio(inst: &DiscreteInstance, f: &[f64]) -> Result<f64> {
    let p = inst.params.p;
    let q = inst.params.q();
    let norm = f.iter().zip(&inst.mu).map(|(v, w)| w * v.abs().powf(p)).sum::<f64>().powf(1.0 / p);
    if norm == 0.0 {
        return Ok(0.0);
    }
    let tf = StepFunction::rearrange(&discrete_potential(inst, f)?, &inst.nu);
    let sup = tf.heights().iter().zip(tf.ends()).map(|(h, e)| h * e.powf(1.0 / q)).fold(0.0, f64::max);
    Ok(sup / norm)
}

pub fn weak_type_check(inst: &DiscreteInstance, batch: &[Vec<f64>]) -> Result<WeakTypeReport> {
    inst.validate()?;
    let max_observed = batch.iter().map(|f| weak_type_ratio(inst, f)).collect::<Result<Vec<_>>>()?.into_iter().fold(0.0, f64::max);
    Ok(WeakTypeReport {
        max_observed,
        printed_constant: inst.params.weak_type_constant(inst.d, inst.b),
        verbatim_constant: inst.params.weak_type_constant_verbatim(inst.d, inst.b),
    })
}

/// Outcome of the pointwise and averaged bounds for a bounded source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClaimReport {
    /// `max_i (Tf(x_i) - α ∫_0^z k₁*(x_i,v) dv)`.
    pub pointwise_margin: f64,
    /// `max_t ((Tf)**(t) - C α z^{1/p} t^{-1/q})`.
    pub averaged_margin: f64,
    /// `C = q/(q-1)` times the weak-type constant.
    pub averaged_constant: f64,
    pub pass: bool,
}

/// Checks `Tf ≤ α ∫_0^z k₁*(x,·)` at every atom and `(Tf)** ≤ C α z^{1/p} t^{-1/q}`
/// on the `t` grid, for `0 ≤ f ≤ α` with support of measure `z`.
pub fn claim_check(inst: &DiscreteInstance, f: &[f64], alpha_bound: f64, t_grid: &[f64]) -> Result<ClaimReport> {
    inst.validate()?;
    if f.len() != inst.m_atoms() || f.iter().any(|v| !(*v >= 0.0 && *v <= alpha_bound)) {
        return Err(Error::param("f", "need one value per atom in [0, α]"));
    }
    let z: f64 = f.iter().zip(&inst.mu).filter(|(v, _)| **v > 0.0).map(|(_, w)| w).sum();
    let tf = discrete_potential(inst, f)?;
    let pointwise_margin = (0..inst.n_atoms())
        .map(|i| tf[i] - alpha_bound * inst.row_star(i).integral(0.0, z))
        .fold(f64::NEG_INFINITY, f64::max);
    let q = inst.params.q();
    let averaged_constant = q / (q - 1.0) * inst.params.weak_type_constant(inst.d, inst.b);
    let star = StepFunction::rearrange(&tf, &inst.nu);
    let averaged_margin = t_grid
        .iter()
        .map(|t| star.double_star(*t) - averaged_constant * alpha_bound * z.powf(1.0 / inst.params.p) * t.powf(-1.0 / q))
        .fold(f64::NEG_INFINITY, f64::max);
    let scale = tf.iter().cloned().fold(1.0, f64::max);
    Ok(ClaimReport {
        pointwise_margin,
        averaged_margin,
        averaged_constant,
        pass: pointwise_margin <= EXACT_TOL * scale && averaged_margin <= EXACT_TOL * scale,
    })
}

/// The truncation split at `r = k₁*(x,z)`: `α z r + α ∫_r^∞ λ₁(x,s) ds` next to
/// `α ∫_0^z k₁*(x,u) du`.
pub fn claim_splitting(inst: &DiscreteInstance, row: usize, z: f64, alpha_bound: f64) -> (f64, f64) {
    let star = inst.row_star(row);
    let r = star.value(z);
    // ∫_r^∞ λ₁(x,s) ds = Σ_j μ_j (k(x,y_j) - r)_+.
    let excess: f64 = inst.kernel[row].iter().zip(&inst.mu).map(|(k, w)| w * (k - r).max(0.0)).sum();
    (alpha_bound * (z * r + excess), alpha_bound * star.integral(0.0, z))
}

/// Radial discretization of the shell kernel `|y|^{α-n}` on `|x|/2 ≤ |y| < |x|`
/// in the plane: atoms are annuli of a geometric radius grid, both sides.
pub fn shell_instance(alpha: f64, shells: usize, ratio: f64) -> Result<DiscreteInstance> {
    if !(alpha > 0.0 && alpha < 2.0) || shells < 2 || !(ratio > 1.0) {
        return Err(Error::param("shells", "need 0 < α < 2, two shells and ratio > 1"));
    }
    let n = 2.0;
    let edges: Vec<f64> = (0..=shells).map(|k| ratio.powi(k as i32)).collect();
    let area: Vec<f64> = edges.windows(2).map(|w| std::f64::consts::PI * (w[1] * w[1] - w[0] * w[0])).collect();
    let mid: Vec<f64> = edges.windows(2).map(|w| (w[0] * w[1]).sqrt()).collect();
    let kernel: Vec<Vec<f64>> = mid
        .iter()
        .map(|x| mid.iter().map(|y| if *y >= 0.5 * x && *y < *x { y.powf(alpha - n) } else { 0.0 }).collect())
        .collect();
    let params = OneilParams { beta: n / (n - alpha), sigma: 1.0, p: 1.0 };
    DiscreteInstance::with_tight_bounds(area.clone(), area, kernel, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn note1() -> OneilParams {
        OneilParams { beta: 2.0, sigma: 1.0, p: 1.0 }
    }

    #[test]
    fn single_atom_potential() {
        let inst = DiscreteInstance::with_tight_bounds(vec![1.0], vec![1.0], vec![vec![2.0]], note1()).unwrap();
        assert_eq!(discrete_potential(&inst, &[3.0]).unwrap(), vec![6.0]);
    }

    #[test]
    fn heaviest_atom_picks_column() {
        let gen = InstanceGenerator { params: note1(), max_atoms: 12 };
        let inst = gen.instance(7).unwrap();
        let j = (0..inst.m_atoms()).max_by(|a, b| inst.mu[*a].total_cmp(&inst.mu[*b])).unwrap();
        let mut f = vec![0.0; inst.m_atoms()];
        f[j] = 1.0;
        let tf = discrete_potential(&inst, &f).unwrap();
        for (i, v) in tf.iter().enumerate() {
            assert_eq!(*v, inst.kernel[i][j] * inst.mu[j]);
        }
    }

    #[test]
    fn note1_exponents() {
        assert_relative_eq!(note1().q(), 2.0, max_relative = 1e-15);
        note1().validate().unwrap();
    }

    #[test]
    fn window_rejects_q_not_above_p() {
        let bad = OneilParams { beta: 2.0, sigma: 0.5, p: 1.0 };
        assert_relative_eq!(bad.q(), 1.0, max_relative = 1e-15);
        assert!(bad.validate().is_err());
        assert!(OneilParams { beta: 2.0, sigma: 1.0, p: 2.0 }.validate().is_err());
    }

    #[test]
    fn rearrangement_is_exact() {
        let s = StepFunction::rearrange(&[1.0, 3.0, 0.0, 3.0, 2.0], &[0.5, 1.0, 4.0, 0.25, 2.0]);
        assert_eq!(s.heights(), &[3.0, 2.0, 1.0]);
        assert_eq!(s.ends(), &[1.25, 3.25, 3.75]);
        assert_relative_eq!(s.double_star(2.0), (3.0 * 1.25 + 2.0 * 0.75) / 2.0, max_relative = 1e-15);
    }

    #[test]
    fn text_round_trip() {
        let gen = InstanceGenerator { params: note1(), max_atoms: 6 };
        let inst = gen.instance(3).unwrap();
        assert_eq!(DiscreteInstance::from_text(&inst.to_text()).unwrap(), inst);
    }

    #[test]
    fn single_atom_weak_type_by_hand() {
        // Ratio k μ^{1-1/p} ν^{1/q}.
        let params = OneilParams { beta: 2.0, sigma: 0.8, p: 1.2 };
        params.validate().unwrap();
        let (k, mu, nu) = (1.7, 0.6, 2.5);
        let inst = DiscreteInstance::with_tight_bounds(vec![mu], vec![nu], vec![vec![k]], params).unwrap();
        let r = weak_type_ratio(&inst, &[4.0]).unwrap();
        assert_relative_eq!(r, k * mu.powf(1.0 - 1.0 / 1.2) * nu.powf(1.0 / params.q()), max_relative = 1e-13);
        let w = weak_type_check(&inst, &[vec![4.0]]).unwrap();
        assert!(w.holds());
    }

    #[test]
    fn weak_type_constant_scales_with_kernel() {
        let params = OneilParams { beta: 2.0, sigma: 0.7, p: 1.5 };
        let gen = InstanceGenerator { params, max_atoms: 8 };
        let inst = gen.instance(2).unwrap();
        let scaled = DiscreteInstance::with_tight_bounds(
            inst.mu.clone(),
            inst.nu.clone(),
            inst.kernel.iter().map(|r| r.iter().map(|k| 3.0 * k).collect()).collect(),
            params,
        )
        .unwrap();
        let f = gen.source(&inst, 2);
        let ratio = weak_type_ratio(&scaled, &f).unwrap() / weak_type_ratio(&inst, &f).unwrap();
        let constant = params.weak_type_constant(scaled.d, scaled.b) / params.weak_type_constant(inst.d, inst.b);
        assert_relative_eq!(ratio, 3.0, max_relative = 1e-12);
        assert_relative_eq!(constant, 3.0, max_relative = 1e-12);
    }

    #[test]
    fn zero_source_has_no_margin() {
        let gen = InstanceGenerator { params: note1(), max_atoms: 10 };
        let inst = gen.instance(11).unwrap();
        let f = vec![0.0; inst.m_atoms()];
        let (t, tau) = default_grids(&inst, &f).unwrap();
        assert!(oneil_check(&inst, &f, &t, &tau, 1.0).unwrap().max_margin <= 0.0);
    }

    #[test]
    fn constant_source_is_claim_equality() {
        let gen = InstanceGenerator { params: note1(), max_atoms: 10 };
        let inst = gen.instance(5).unwrap();
        let f = vec![2.0; inst.m_atoms()];
        let z: f64 = inst.mu.iter().sum();
        let tf = discrete_potential(&inst, &f).unwrap();
        for (i, v) in tf.iter().enumerate() {
            assert_relative_eq!(*v, 2.0 * inst.row_star(i).integral(0.0, z), max_relative = 1e-12);
        }
    }

    #[test]
    fn splitting_recombines_exactly() {
        let gen = InstanceGenerator { params: note1(), max_atoms: 16 };
        for seed in 0..20 {
            let inst = gen.instance(seed).unwrap();
            let z = 0.37 * inst.mu.iter().sum::<f64>();
            for i in 0..inst.n_atoms() {
                let (split, direct) = claim_splitting(&inst, i, z, 1.5);
                assert!((split - direct).abs() <= 1e-12 * direct.abs().max(1.0));
            }
        }
    }

    #[test]
    fn per_point_tail_is_smaller_for_shell_kernel() {
        let inst = shell_instance(1.0, 24, 1.25).unwrap();
        let f: Vec<f64> = (0..inst.m_atoms()).map(|j| 1.0 / (1.0 + j as f64)).collect();
        let (_, tau) = default_grids(&inst, &f).unwrap();
        let (per, max) = tail_terms(&inst, &f, &tau).unwrap();
        assert!(per.iter().zip(&max).all(|(a, b)| *a <= *b + 1e-12));
        assert!(per.iter().zip(&max).any(|(a, b)| *a < 0.9 * *b));
    }
}
