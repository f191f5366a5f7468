//! Experiment manifests: schema validation, dispatch to the library, and the
//! CSV / verdict / log artifacts written by the binary.
//!
//! Every number in a verdict is wrapped as `{"value": v, "provenance": kind, ...}`
//! with `kind` one of `closed-form`, `quadrature` (with `error_estimate`),
//! `monte-carlo` (with `half_width`) or `fitted` (with `r2`).

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Map, Value};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::adams::{self, Measure, PotentialField, PotentialOptions, RadialSource, SaturationOptions, WitnessPlan};
use crate::catalog::{self, PresetItem};
use crate::domain::{self, DomainSpec, McConfig, Site, Verdict};
use crate::fit;
use crate::kernel::{self, KernelSpec};
use crate::measure::{self, CriticalOptions, DoublingRule, SupValue, WeightedSamples};
use crate::oneil::{self, InstanceGenerator, OneilParams};
use crate::symbol::{self, Integrability, PolySymbol, ShellOptions};
use crate::{Error, Result};

/// Manifest commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Rearrange,
    DomainCheck,
    KernelCheck,
    SymbolCheck,
    AdamsEval,
    Saturate,
    OneilVerify,
    Hyperbolic,
    Witness,
}

impl Command {
    pub const ALL: [Command; 9] = [
        Command::Rearrange,
        Command::DomainCheck,
        Command::KernelCheck,
        Command::SymbolCheck,
        Command::AdamsEval,
        Command::Saturate,
        Command::OneilVerify,
        Command::Hyperbolic,
        Command::Witness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Rearrange => "rearrange",
            Command::DomainCheck => "domain-check",
            Command::KernelCheck => "kernel-check",
            Command::SymbolCheck => "symbol-check",
            Command::AdamsEval => "adams-eval",
            Command::Saturate => "saturate",
            Command::OneilVerify => "oneil-verify",
            Command::Hyperbolic => "hyperbolic",
            Command::Witness => "witness",
        }
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| {
            let known: Vec<&str> = Command::ALL.iter().map(|c| c.name()).collect();
            manifest_err("command", format!("unknown command `{s}`; expected one of {}", known.join(", ")))
        })
    }
}

fn manifest_err(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Manifest { field: field.into(), reason: reason.into() }
}

/// A validated experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub command: Command,
    pub parameters: Map<String, Value>,
    pub seed: Option<u64>,
    pub output: Option<String>,
}

const TOP_LEVEL: [&str; 4] = ["command", "parameters", "seed", "output"];

impl Manifest {
    /// Parses JSON text; syntax errors report line and column.
    pub fn parse(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| {
            let field = if text.trim().is_empty() { "command".to_string() } else { format!("line {} column {}", e.line(), e.column()) };
            let reason = if text.trim().is_empty() { "missing field (empty manifest)".to_string() } else { e.to_string() };
            manifest_err(field, reason)
        })?;
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        let Value::Object(top) = value else {
            return Err(manifest_err("<root>", "manifest must be a JSON object"));
        };
        if let Some(k) = top.keys().find(|k| !TOP_LEVEL.contains(&k.as_str())) {
            return Err(manifest_err(k.clone(), "unknown top-level field"));
        }
        let command = match top.get("command") {
            None => return Err(manifest_err("command", "missing field")),
            Some(Value::String(s)) => s.parse()?,
            Some(_) => return Err(manifest_err("command", "must be a string")),
        };
        let parameters = match top.get("parameters") {
            None => Map::new(),
            Some(Value::Object(m)) => m.clone(),
            Some(_) => return Err(manifest_err("parameters", "must be an object")),
        };
        let seed = match top.get("seed") {
            None | Some(Value::Null) => None,
            Some(v) => Some(v.as_u64().ok_or_else(|| manifest_err("seed", "must be a nonnegative 64-bit integer"))?),
        };
        let output = match top.get("output") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => return Err(manifest_err("output", "must be a string path prefix")),
        };
        let manifest = Self { command, parameters, seed, output };
        manifest.validate_schema()?;
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| manifest_err("--manifest", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Commands drawing random numbers, which therefore need an explicit seed.
    pub fn is_stochastic(&self) -> bool {
        match self.command {
            Command::DomainCheck | Command::OneilVerify => true,
            Command::Rearrange | Command::AdamsEval => self.parameters.contains_key("random"),
            _ => false,
        }
    }

    /// Full check run before any computation: schema plus a seed for stochastic commands.
    pub fn validate(&self) -> Result<()> {
        self.validate_schema()?;
        if self.is_stochastic() && self.seed.is_none() {
            return Err(manifest_err("seed", format!("missing field; `{}` is stochastic", self.command.name())));
        }
        Ok(())
    }

    /// Field names, types and spec validity; the seed may still come from the command line.
    pub fn validate_schema(&self) -> Result<()> {
        let allowed: &[&str] = match self.command {
            Command::Rearrange => &["values", "weights", "random", "t"],
            Command::DomainCheck => &["domain", "doublings", "samples", "basepoints"],
            Command::KernelCheck => &["kernel", "tau", "beta", "basepoints", "radius"],
            Command::SymbolCheck => &["symbol", "exponent", "shells", "rel_tol", "log_range"],
            Command::AdamsEval => &["kernel", "source", "radius", "nodes", "sigma", "gamma", "beta", "m", "random"],
            Command::Saturate => &["kernel", "gammas", "gammas_over_pi", "epsilons", "sigma", "nodes"],
            Command::OneilVerify => &["beta", "sigma", "p", "instances", "calibration_instances", "max_atoms"],
            Command::Hyperbolic => &["n", "epsilons", "rho"],
            Command::Witness => &["kernel", "levels"],
        };
        let ctx = Ctx { params: &self.parameters };
        if let Some(k) = self.parameters.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(manifest_err(format!("parameters.{k}"), format!("not a parameter of `{}`", self.command.name())));
        }
        match self.command {
            Command::Rearrange => {
                if self.parameters.contains_key("random") == self.parameters.contains_key("values") {
                    return Err(manifest_err("parameters.values", "give exactly one of `values` or `random`"));
                }
            }
            Command::DomainCheck => {
                ctx.domain("domain")?;
            }
            Command::KernelCheck | Command::AdamsEval | Command::Saturate => {
                ctx.kernel("kernel")?;
            }
            Command::Witness => {
                ctx.opt_kernel("kernel")?;
            }
            Command::SymbolCheck => {
                ctx.symbol("symbol")?;
            }
            Command::OneilVerify | Command::Hyperbolic => {}
        }
        if self.command == Command::Saturate && !self.parameters.contains_key("gammas") && !self.parameters.contains_key("gammas_over_pi") {
            return Err(manifest_err("parameters.gammas", "missing field (or `gammas_over_pi`)"));
        }
        Ok(())
    }
}

/// Read access to `parameters` with field-named errors.
struct Ctx<'a> {
    params: &'a Map<String, Value>,
}

impl Ctx<'_> {
    fn get<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>> {
        match self.params.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone()).map(Some).map_err(|e| manifest_err(format!("parameters.{key}"), e.to_string())),
        }
    }

    fn or<T: DeserializeOwned>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn require<T: DeserializeOwned>(&self, key: &str) -> Result<T> {
        self.get(key)?.ok_or_else(|| manifest_err(format!("parameters.{key}"), "missing field"))
    }

    fn preset(&self, key: &str, category: &str) -> Result<Option<PresetItem>> {
        match self.params.get(key) {
            Some(Value::String(name)) => {
                let p = catalog::find(name).ok_or_else(|| manifest_err(format!("parameters.{key}"), format!("unknown preset `{name}`")))?;
                if p.item.category() != category {
                    return Err(manifest_err(format!("parameters.{key}"), format!("preset `{name}` is a {}, not a {category}", p.item.category())));
                }
                Ok(Some(p.item))
            }
            _ => Ok(None),
        }
    }

    fn opt_kernel(&self, key: &str) -> Result<Option<KernelSpec>> {
        if let Some(PresetItem::Kernel(k)) = self.preset(key, "kernel")? {
            return Ok(Some(k));
        }
        let k: Option<KernelSpec> = self.get(key)?;
        if let Some(k) = &k {
            k.validate().map_err(|e| manifest_err(format!("parameters.{key}"), e.to_string()))?;
        }
        Ok(k)
    }

    fn kernel(&self, key: &str) -> Result<KernelSpec> {
        self.opt_kernel(key)?.ok_or_else(|| manifest_err(format!("parameters.{key}"), "missing field"))
    }

    fn domain(&self, key: &str) -> Result<DomainSpec> {
        if let Some(PresetItem::Domain(d)) = self.preset(key, "domain")? {
            return Ok(d);
        }
        let d: DomainSpec = self.require(key)?;
        d.validate().map_err(|e| manifest_err(format!("parameters.{key}"), e.to_string()))?;
        Ok(d)
    }

    fn symbol(&self, key: &str) -> Result<PolySymbol> {
        if let Some(PresetItem::Symbol(s)) = self.preset(key, "symbol")? {
            return Ok(s);
        }
        self.require(key)
    }

    fn label(&self, key: &str) -> String {
        match self.params.get(key) {
            Some(Value::String(s)) => s.clone(),
            Some(_) => "inline".to_string(),
            None => "default".to_string(),
        }
    }
}

/// Radial sources accepted by `adams-eval`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum SourceSpec {
    IndicatorBall { radius: f64 },
    Steps { edges: Vec<f64>, values: Vec<f64> },
    Power { coeff: f64, exponent: f64, lo: f64, hi: f64 },
}

impl SourceSpec {
    fn build(&self, n: usize) -> Result<RadialSource> {
        match self {
            SourceSpec::IndicatorBall { radius } => RadialSource::indicator_ball(n, *radius),
            SourceSpec::Steps { edges, values } => RadialSource::steps(n, edges.clone(), values.clone()),
            SourceSpec::Power { coeff, exponent, lo, hi } => RadialSource::power(n, *coeff, *exponent, *lo, *hi),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
struct RandomSpec {
    count: usize,
}

/// Overrides supplied on the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    pub seed: Option<u64>,
    /// Replaces the command's sample-size knob (Monte-Carlo points, instances or random sources).
    pub samples: Option<usize>,
}

/// Outcome class of a run, mapped to the process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Inconclusive,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Inconclusive => 2,
        }
    }
}

/// In-memory artifacts of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub status: Status,
    pub csv: String,
    pub verdict: Value,
    pub log: String,
}

impl Artifacts {
    /// Writes `<prefix>.csv`, `<prefix>.verdict.json` and `<prefix>.log`.
    pub fn write(&self, prefix: &str) -> Result<Vec<PathBuf>> {
        let paths: Vec<PathBuf> = ["csv", "verdict.json", "log"].iter().map(|ext| PathBuf::from(format!("{prefix}.{ext}"))).collect();
        if let Some(dir) = paths[0].parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let verdict = serde_json::to_string_pretty(&self.verdict).map_err(|e| Error::Io(e.to_string()))? + "\n";
        std::fs::write(&paths[0], &self.csv)?;
        std::fs::write(&paths[1], verdict)?;
        std::fs::write(&paths[2], &self.log)?;
        Ok(paths)
    }
}

fn closed(v: f64) -> Value {
    json!({ "value": finite(v), "provenance": "closed-form" })
}

fn count(v: usize) -> Value {
    json!({ "value": v, "provenance": "closed-form" })
}

fn quad(v: f64, error: f64) -> Value {
    json!({ "value": finite(v), "provenance": "quadrature", "error_estimate": finite(error) })
}

fn monte_carlo(v: f64, half_width: f64) -> Value {
    json!({ "value": finite(v), "provenance": "monte-carlo", "half_width": finite(half_width) })
}

fn fitted(v: f64, r2: f64) -> Value {
    json!({ "value": finite(v), "provenance": "fitted", "r2": finite(r2) })
}

/// JSON has no infinities; they are written as strings.
fn finite(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(v.to_string())
    }
}

/// Accumulates the human-readable log.
#[derive(Default)]
struct Log(String);

impl Log {
    fn line(&mut self, s: impl AsRef<str>) {
        self.0.push_str(s.as_ref());
        self.0.push('\n');
    }
}

/// Runs a validated manifest.
pub fn run(manifest: &Manifest, opts: &RunOptions) -> Result<Artifacts> {
    let mut m = manifest.clone();
    if opts.seed.is_some() {
        m.seed = opts.seed;
    }
    m.validate()?;
    let mut log = Log::default();
    log.line(format!("command: {}", m.command.name()));
    log.line(format!("seed: {}", m.seed.map_or("none".to_string(), |s| s.to_string())));
    log.line(format!("parameters: {}", Value::Object(m.parameters.clone())));
    if let Some(s) = opts.samples {
        log.line(format!("samples override: {s}"));
    }
    let ctx = Ctx { params: &m.parameters };
    let seed = m.seed.unwrap_or(0);
    let (status, csv, body) = match m.command {
        Command::Rearrange => run_rearrange(&ctx, seed, opts, &mut log)?,
        Command::DomainCheck => run_domain(&ctx, seed, opts, &mut log)?,
        Command::KernelCheck => run_kernel(&ctx, &mut log)?,
        Command::SymbolCheck => run_symbol(&ctx, &mut log)?,
        Command::AdamsEval => run_adams(&ctx, seed, opts, &mut log)?,
        Command::Saturate => run_saturate(&ctx, &mut log)?,
        Command::OneilVerify => run_oneil(&ctx, seed, opts, &mut log)?,
        Command::Hyperbolic => run_hyperbolic(&ctx, &mut log)?,
        Command::Witness => run_witness(&ctx, &mut log)?,
    };
    let mut verdict = Map::new();
    verdict.insert("command".into(), json!(m.command.name()));
    verdict.insert("status".into(), json!(if status == Status::Ok { "ok" } else { "inconclusive" }));
    for (k, v) in body {
        verdict.insert(k, v);
    }
    log.line(format!("status: {status:?}"));
    Ok(Artifacts { status, csv, verdict: Value::Object(verdict), log: log.0 })
}

type Outcome = (Status, String, Map<String, Value>);

fn obj(pairs: Vec<(&str, Value)>) -> Map<String, Value> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn run_rearrange(ctx: &Ctx, seed: u64, opts: &RunOptions, log: &mut Log) -> Result<Outcome> {
    let samples = if let Some(spec) = ctx.get::<RandomSpec>("random")? {
        use rand::{Rng, SeedableRng};
        let count = opts.samples.unwrap_or(spec.count);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let values = (0..count).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let weights = (0..count).map(|_| rng.gen_range(0.1..1.0)).collect();
        WeightedSamples::new(values, weights)?
    } else {
        let values: Vec<f64> = ctx.require("values")?;
        match ctx.get::<Vec<f64>>("weights")? {
            Some(w) => WeightedSamples::new(values, w)?,
            None => WeightedSamples::uniform(values)?,
        }
    };
    log.line(format!("atoms: {}", samples.len()));
    let profile = measure::rearrangement(&samples);
    // Equimeasurability at every atom level, as an exact comparison of finite sums.
    let levels: Vec<f64> = samples.values().iter().map(|v| v.abs()).chain([0.0]).collect();
    let equi = levels.iter().map(|s| (profile.distribution(*s) - samples.distribution_function(*s)).abs()).fold(0.0, f64::max);
    let stars = profile.star_values();
    let monotone = stars.windows(2).all(|w| w[1] <= w[0]);
    let mut body = obj(vec![
        ("atoms", count(samples.len())),
        ("total_mass", closed(samples.total_mass())),
        ("sup", closed(stars.first().copied().unwrap_or(0.0))),
        ("equimeasurability_error", closed(equi)),
        ("nonincreasing", json!(monotone)),
    ]);
    if let Some(ts) = ctx.get::<Vec<f64>>("t")? {
        let ds: Vec<Value> = ts.iter().map(|t| Ok(json!({ "t": closed(*t), "double_star": closed(profile.double_star(*t)?) }))).collect::<Result<_>>()?;
        body.insert("double_star".into(), Value::Array(ds));
    }
    let status = if monotone && equi <= 1e-10 * samples.total_mass().max(1.0) { Status::Ok } else { Status::Inconclusive };
    Ok((status, profile.to_csv(), body))
}

fn verdict_name(v: &Verdict) -> &'static str {
    match v {
        Verdict::Subcritical => "Subcritical",
        Verdict::Critical { .. } => "Critical",
        Verdict::Inconclusive => "Inconclusive",
    }
}

fn run_domain(ctx: &Ctx, seed: u64, opts: &RunOptions, log: &mut Log) -> Result<Outcome> {
    let d = ctx.domain("domain")?;
    let doublings = ctx.or("doublings", d.default_doublings())?;
    let mc = McConfig { samples: opts.samples.unwrap_or(ctx.or("samples", 20_000)?), seed };
    let sites: Vec<Site> = ctx.get("basepoints")?.unwrap_or_else(|| d.canonical_basepoints());
    log.line(format!("domain: {}", ctx.label("domain")));
    log.line(format!("doublings: {doublings}, mc samples per cell: {}, basepoints: {}", mc.samples, sites.len()));
    let rule = DoublingRule::default();
    let report = domain::subcriticality_test(&d, &sites, doublings, &mc, &rule)?;
    let exact = sites.iter().all(|s| matches!(d.evaluator(s, &mc, 1.0), domain::GrowthEval::Exact { .. }));
    let hw = report.per_point.iter().map(|p| p.half_widths.last().copied().unwrap_or(0.0)).fold(0.0, f64::max);
    let tail = report
        .per_point
        .iter()
        .map(|p| match p.verdict {
            measure::SeriesVerdict::Finite { tail, .. } => tail.abs(),
            _ => 0.0,
        })
        .fold(0.0, f64::max);
    let critical = matches!(report.verdict, Verdict::Critical { .. });
    // A divergent integral is reported by its largest partial sum, keyed accordingly.
    let (key, value) = if critical {
        ("partial_integral", report.per_point.iter().filter_map(|p| p.partials.last()).fold(0.0, |a: f64, b| a.max(*b)))
    } else {
        ("integral", report.sup_estimate)
    };
    let integral = if exact { quad(value, tail) } else { monte_carlo(value, hw + tail) };
    let mut body = obj(vec![("domain", json!(ctx.label("domain"))), ("verdict", json!(verdict_name(&report.verdict))), (key, integral)]);
    if critical {
        let r_max = report.per_point.iter().filter_map(|p| p.truncations.last()).fold(0.0, |a: f64, b| a.max(*b));
        body.insert("r_max".into(), closed(r_max));
    }
    if let Verdict::Critical { rate } = report.verdict {
        let r2 = report
            .per_point
            .iter()
            .filter(|p| p.verdict.is_divergent())
            .map(|p| log_fit_r2(&p.truncations, &p.partials, rule.window + 1))
            .fold(f64::INFINITY, f64::min);
        body.insert("log_slope".into(), fitted(rate, r2));
    }
    let points: Vec<Value> = report
        .per_point
        .iter()
        .map(|p| {
            let (kind, value) = match p.verdict {
                measure::SeriesVerdict::Finite { value, .. } => ("finite", value),
                measure::SeriesVerdict::Divergent { rate } => ("divergent", rate),
                measure::SeriesVerdict::Undecided { value } => ("undecided", value),
            };
            let value = if exact { quad(value, tail_increment(&p.partials)) } else { monte_carlo(value, p.half_widths.last().copied().unwrap_or(0.0)) };
            json!({ "site": site_label(&p.site), "series": kind, "value": value })
        })
        .collect();
    body.insert("basepoints".into(), Value::Array(points));
    if let DomainSpec::BallClusterUnion { schedule } = &d {
        let sums = schedule.proxy_partial_sums();
        body.insert("proxy_partial_sums".into(), Value::Array(sums.iter().map(|v| closed(*v)).collect()));
        // Against 2^{-n}(H_M - 1), M = 2, 3, ...
        let scale = 0.5f64.powi(schedule.n as i32);
        let mut harmonic = 0.0;
        let worst = sums
            .iter()
            .enumerate()
            .map(|(i, v)| {
                harmonic += 1.0 / (i + 2) as f64;
                (v / (scale * harmonic) - 1.0).abs()
            })
            .fold(0.0, f64::max);
        body.insert("proxy_harmonic_deviation".into(), closed(worst));
    }
    for p in &report.per_point {
        log.line(format!("site {}: {:?}", site_label(&p.site), p.verdict));
    }
    let status = if report.verdict == Verdict::Inconclusive { Status::Inconclusive } else { Status::Ok };
    Ok((status, report.to_csv(), body))
}

fn site_label(site: &Site) -> String {
    let coords: Vec<String> = site.offset.iter().map(|c| format!("{c}")).collect();
    match site.anchor {
        Some(m) => format!("cluster {} + ({})", m + 1, coords.join(", ")),
        None => format!("({})", coords.join(", ")),
    }
}

fn run_kernel(ctx: &Ctx, log: &mut Log) -> Result<Outcome> {
    let k = ctx.kernel("kernel")?;
    let (n, alpha) = (k.dim() as f64, k.order());
    let beta = ctx.or("beta", n / (n - alpha))?;
    let tau = ctx.or("tau", 1.0)?;
    let basepoints: Vec<Vec<f64>> = ctx.or("basepoints", vec![vec![0.5; k.dim()]])?;
    log.line(format!("kernel: {}, beta = {beta}, tau = {tau}, basepoints: {}", ctx.label("kernel"), basepoints.len()));
    let report = measure::critical_integral(&k, &basepoints, tau, beta, &CriticalOptions::default())?;
    let series: Vec<&measure::DoublingSeries> = report.per_point.iter().map(|p| &p.series).collect();
    let last_increment = series.iter().map(|s| tail_increment(&s.partials)).fold(0.0, f64::max);
    let (class, integral) = match report.sup_value {
        SupValue::Finite(v) => {
            let tail = series
                .iter()
                .map(|s| match s.verdict {
                    measure::SeriesVerdict::Finite { tail, .. } => tail.abs(),
                    _ => 0.0,
                })
                .fold(0.0, f64::max);
            ("Subcritical", quad(v, tail))
        }
        SupValue::Divergent { rate } => {
            let r2 = series
                .iter()
                .filter(|s| s.verdict.is_divergent())
                .map(|s| log_fit_r2(&s.truncations, &s.partials, DoublingRule::default().window + 1))
                .fold(f64::INFINITY, f64::min);
            ("Critical", fitted(rate, r2))
        }
        SupValue::Undecided(v) => ("Inconclusive", quad(v, last_increment)),
    };
    let mut body = obj(vec![("kernel", json!(ctx.label("kernel"))), ("beta", closed(beta)), ("tau", closed(tau)), ("verdict", json!(class)), ("critical_integral", integral)]);
    if let Ok((c, err)) = adams::local_constant_with_error(&k) {
        body.insert("local_constant".into(), quad(c, err));
        if let Ok(cr) = kernel::riesz_constant(k.dim(), alpha) {
            body.insert("riesz_constant".into(), closed(cr));
        }
    }
    match kernel::asymptotics_check(&k, None, ctx.or("radius", 10.0)?) {
        Ok(a) => {
            body.insert("local_expansion_fitted".into(), json!(a.local_pass));
            body.insert("tail_pass".into(), json!(a.tail_pass));
        }
        Err(e) => log.line(format!("asymptotics skipped: {e}")),
    }
    // Radial trace K(x, x + r e_1) on a log grid.
    let x = basepoints[0].clone();
    let mut csv = String::from("r,kernel\n");
    for i in 0..=80 {
        let r = 10f64.powf(-3.0 + 6.0 * i as f64 / 80.0);
        let mut y = x.clone();
        y[0] += r;
        let v = k.eval(&x, &y).unwrap_or(f64::NAN);
        let _ = writeln!(csv, "{r:.12e},{v:.12e}");
    }
    let status = if class == "Inconclusive" { Status::Inconclusive } else { Status::Ok };
    Ok((status, csv, body))
}

/// Final step of the sphere search behind the ellipticity margins.
const MARGIN_SEARCH_STEP: f64 = 1e-9;

fn tail_increment(partials: &[f64]) -> f64 {
    match partials {
        [.., a, b] => (b - a).abs(),
        [b] => b.abs(),
        [] => 0.0,
    }
}

/// `r²` of the partial sums against `log T` over the last `w` truncations.
fn log_fit_r2(truncations: &[f64], partials: &[f64], w: usize) -> f64 {
    let m = partials.len();
    let w = w.min(m);
    let lx: Vec<f64> = truncations[m - w..].iter().map(|t| t.ln()).collect();
    fit::line(&lx, &partials[m - w..]).map_or(f64::NAN, |f| f.r2)
}

fn integrability_json(v: &symbol::IntegrabilityVerdict) -> (&'static str, Value) {
    let parts = &v.partial_values;
    match v.verdict {
        Integrability::Finite { value } => ("Finite", quad(value, tail_increment(parts))),
        Integrability::LogDivergent { rate } => {
            let idx: Vec<f64> = (0..parts.len()).map(|i| i as f64).collect();
            let w = parts.len().min(8);
            let r2 = fit::line(&idx[parts.len() - w..], &parts[parts.len() - w..]).map_or(f64::NAN, |f| f.r2);
            ("LogDivergent", fitted(rate, r2))
        }
        Integrability::Divergent => ("Divergent", Value::Null),
    }
}

fn run_symbol(ctx: &Ctx, log: &mut Log) -> Result<Outcome> {
    let p = ctx.symbol("symbol")?;
    let exponent: Option<f64> = ctx.get("exponent")?;
    let defaults = ShellOptions::default();
    let shell = ShellOptions { shells: ctx.or("shells", defaults.shells)?, rel_tol: ctx.or("rel_tol", defaults.rel_tol)?, ..defaults };
    log.line(format!("symbol: {} (n = {}, order {}), shells: {}", ctx.label("symbol"), p.n, p.alpha, shell.shells));
    let margins = symbol::ellipticity_margins(&p, 2048);
    let v = symbol::reciprocal_integrability(&p, exponent, &shell)?;
    let (kind, value) = integrability_json(&v);
    let mut body = obj(vec![
        ("symbol", json!(ctx.label("symbol"))),
        ("homogeneous", json!(p.is_homogeneous())),
        ("exponent", closed(v.exponent)),
        ("c0", quad(margins.c0, MARGIN_SEARCH_STEP)),
        ("c1", quad(margins.c1, MARGIN_SEARCH_STEP)),
        ("elliptic", json!(margins.elliptic)),
        ("verdict", json!(kind)),
    ]);
    if !value.is_null() {
        body.insert("value".into(), value);
    }
    if let Some([lo, hi]) = ctx.get::<[f64; 2]>("log_range")? {
        let l = symbol::log_integrability(&p, lo, hi)?;
        let (lk, lv) = integrability_json(&l);
        body.insert("log_integrability".into(), json!({ "verdict": lk, "value": lv }));
    }
    let mut csv = String::from("shell,cumulative\n");
    for (i, s) in v.partial_values.iter().enumerate() {
        let _ = writeln!(csv, "{},{s:.12e}", i + 1);
    }
    Ok((Status::Ok, csv, body))
}

fn run_adams(ctx: &Ctx, seed: u64, opts: &RunOptions, log: &mut Log) -> Result<Outcome> {
    let k = ctx.kernel("kernel")?;
    let n = k.dim();
    let alpha = k.order();
    let beta = ctx.or("beta", n as f64 / (n as f64 - alpha))?;
    let radius = ctx.or("radius", 1.0)?;
    let nodes = ctx.or("nodes", 16usize)?;
    let measure = Measure::for_sigma(ctx.or("sigma", 1.0)?);
    let default_gamma = match k {
        KernelSpec::Bessel { n, alpha } => adams::bessel_exponential_constant(n, alpha)?,
        _ => 1.0 / (crate::special::unit_ball_volume(n) * adams::local_constant(&k)?.powf(beta)),
    };
    let gamma = ctx.or("gamma", default_gamma)?;
    let m: Option<u32> = ctx.get("m")?;
    let region = DomainSpec::Ball { center: vec![0.0; n], radius };
    let popts = PotentialOptions::default();
    let p_dual = n as f64 / alpha;
    log.line(format!("kernel: {}, gamma = {gamma}, beta = {beta}, radius = {radius}, nodes = {nodes}", ctx.label("kernel")));
    if let Some(spec) = ctx.get::<RandomSpec>("random")? {
        let sources = opts.samples.unwrap_or(spec.count);
        log.line(format!("random normalized step sources: {sources}"));
        let rows: Vec<(f64, f64)> = (0..sources as u64)
            .into_par_iter()
            .map(|i| {
                let f = adams::random_step_source(n, radius, p_dual, seed.wrapping_add(i))?;
                let field = PotentialField::radial_ball(&k, &f, radius, nodes, &measure, &popts)?;
                let e = adams::mt_functional(&field, gamma, beta, &region, m)?;
                Ok((e.ln_value, e.error))
            })
            .collect::<Result<_>>()?;
        let mut csv = String::from("index,ln_functional,error\n");
        for (i, (l, e)) in rows.iter().enumerate() {
            let _ = writeln!(csv, "{i},{l:.12e},{e:.6e}");
        }
        if rows.is_empty() {
            return Err(manifest_err("parameters.random.count", "need at least one source"));
        }
        let mut vals: Vec<(f64, f64)> = rows.iter().map(|(l, e)| (l.exp(), *e)).collect();
        vals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (median, median_err) = vals[vals.len() / 2];
        let (max, max_err) = vals[vals.len() - 1];
        let body = obj(vec![
            ("kernel", json!(ctx.label("kernel"))),
            ("gamma", closed(gamma)),
            ("sources", count(sources)),
            ("median", quad(median, median_err)),
            ("max", quad(max, max_err)),
            ("max_over_median", quad(max / median, max / median * (max_err / max + median_err / median))),
            ("envelope_holds", json!(max / median <= 10.0)),
        ]);
        return Ok((Status::Ok, csv, body));
    }
    let spec: SourceSpec = ctx.get("source")?.unwrap_or(SourceSpec::IndicatorBall { radius });
    let f = spec.build(n)?;
    let norm = f.norm(p_dual);
    let field = PotentialField::radial_ball(&k, &f, radius, nodes, &measure, &popts)?;
    let e = adams::mt_functional(&field, gamma, beta, &region, m)?;
    let body = obj(vec![
        ("kernel", json!(ctx.label("kernel"))),
        ("gamma", closed(gamma)),
        ("source_norm", closed(norm)),
        ("ln_functional", quad(e.ln_value, e.error / e.value.max(f64::MIN_POSITIVE))),
        ("functional", quad(e.value, e.error)),
    ]);
    Ok((Status::Ok, field.to_csv(), body))
}

fn default_epsilons() -> Vec<f64> {
    (4..16).map(|k| 2f64.powi(-k)).collect()
}

fn run_saturate(ctx: &Ctx, log: &mut Log) -> Result<Outcome> {
    let k = ctx.kernel("kernel")?;
    let gammas: Vec<f64> = match ctx.get::<Vec<f64>>("gammas")? {
        Some(g) => g,
        None => ctx.require::<Vec<f64>>("gammas_over_pi")?.iter().map(|g| g / std::f64::consts::PI).collect(),
    };
    let eps: Vec<f64> = ctx.or("epsilons", default_epsilons())?;
    let sigma = ctx.or("sigma", 1.0)?;
    let sopts = SaturationOptions { nodes: ctx.or("nodes", SaturationOptions::default().nodes)?, ..SaturationOptions::default() };
    log.line(format!("kernel: {}, sigma = {sigma}, scales: {}, field nodes: {}", ctx.label("kernel"), eps.len(), sopts.nodes));
    let results = adams::saturation_experiment(&k, &gammas, &eps, sigma, &sopts)?;
    let mut csv = String::from("gamma,epsilon,ln_functional,fitted_exponent\n");
    let mut rows = Vec::new();
    let mut all_accepted = true;
    for r in &results {
        csv.push_str(&r.to_csv_rows());
        log.line(format!("gamma = {:.6}: fitted slope {:.6} (r2 {:.4}), predicted {:.6}", r.gamma, r.fitted_exponent, r.r2, r.predicted_exponent));
        all_accepted &= r.fit_accepted;
        rows.push(json!({
            "gamma": closed(r.gamma),
            "fitted_exponent": fitted(r.fitted_exponent, r.r2),
            "predicted_exponent": closed(r.predicted_exponent),
            "fit_accepted": r.fit_accepted,
        }));
    }
    let body = obj(vec![("kernel", json!(ctx.label("kernel"))), ("sigma", closed(sigma)), ("results", Value::Array(rows))]);
    Ok((if all_accepted { Status::Ok } else { Status::Inconclusive }, csv, body))
}

/// Seeds of fresh instances are drawn from a stream disjoint from calibration.
const FRESH_STREAM: u64 = 0xf1e5_4c0f_fee0_0001;

fn run_oneil(ctx: &Ctx, seed: u64, opts: &RunOptions, log: &mut Log) -> Result<Outcome> {
    let params = OneilParams { beta: ctx.or("beta", 2.0)?, sigma: ctx.or("sigma", 1.0)?, p: ctx.or("p", 1.0)? };
    params.validate()?;
    let instances = opts.samples.unwrap_or(ctx.or("instances", 1000)?);
    let calibration = ctx.or("calibration_instances", 1000usize)?;
    let generator = InstanceGenerator { params, max_atoms: ctx.or("max_atoms", 64)? };
    log.line(format!("params: {params:?}, calibration instances: {calibration}, fresh instances: {instances}, max atoms: {}", generator.max_atoms));
    let cal = oneil::calibrate_c0(&generator, calibration, seed)?;
    log.line(format!("calibrated C0 / W(D,B) = {:.6} (max required {:.6})", cal.c0, cal.max_required));
    let rows = oneil_rows(&generator, instances, seed ^ FRESH_STREAM, cal.c0)?;
    let mut csv = String::from("instance,n_atoms,m_atoms,required_c0,oneil_margin,weak_ratio,weak_constant,claim_pointwise,claim_averaged\n");
    for (i, r) in rows.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{i},{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            r.n_atoms, r.m_atoms, r.required, r.margin, r.weak_ratio, r.weak_constant, r.claim.pointwise_margin, r.claim.averaged_margin
        );
    }
    let oneil_violations = rows.iter().filter(|r| r.margin > oneil::EXACT_TOL * r.scale).count();
    let weak_violations = rows.iter().filter(|r| r.weak_ratio > r.weak_constant * (1.0 + oneil::EXACT_TOL)).count();
    let claim_failures = rows.iter().filter(|r| !r.claim.pass).count();
    let worst_weak = rows.iter().map(|r| r.weak_ratio / r.weak_constant).fold(0.0, f64::max);
    let worst_fresh = rows.iter().map(|r| r.required).fold(0.0, f64::max);
    let body = obj(vec![
        ("beta", closed(params.beta)),
        ("sigma", closed(params.sigma)),
        ("p", closed(params.p)),
        ("q", closed(params.q())),
        ("calibrated_c0", monte_carlo(cal.c0, cal.c0 - cal.max_required)),
        ("fresh_max_required_c0", monte_carlo(worst_fresh, 0.0)),
        ("instances", count(instances)),
        ("oneil_violations", count(oneil_violations)),
        ("weak_type_violations", count(weak_violations)),
        ("worst_weak_type_ratio", closed(worst_weak)),
        ("claim_failures", count(claim_failures)),
    ]);
    let status = if oneil_violations + weak_violations + claim_failures == 0 { Status::Ok } else { Status::Inconclusive };
    Ok((status, csv, body))
}

/// Per-instance results of the O'Neil suite.
pub struct OneilRow {
    pub n_atoms: usize,
    pub m_atoms: usize,
    /// Smallest admissible `C₀` in units of the instance scale.
    pub required: f64,
    pub margin: f64,
    /// Magnitude used for the relative exactness tolerance.
    pub scale: f64,
    pub weak_ratio: f64,
    pub weak_constant: f64,
    pub claim: oneil::ClaimReport,
}

/// Fresh instances checked against a calibrated `c0`, given in units of each
/// instance's [`DiscreteInstance::c0_scale`](oneil::DiscreteInstance::c0_scale): the rearrangement
/// inequality, the weak-type bound on `{f, near-delta}` and the Claim with `α = max f`.
pub fn oneil_rows(generator: &InstanceGenerator, instances: usize, seed: u64, c0: f64) -> Result<Vec<OneilRow>> {
    (0..instances as u64)
        .into_par_iter()
        .map(|k| {
            let s = seed.wrapping_add(k.wrapping_mul(0x2545_f491_4f6c_dd1d));
            let inst = generator.instance(s)?;
            let f = generator.source(&inst, s);
            let (t, tau) = oneil::default_grids(&inst, &f)?;
            let unit = inst.c0_scale();
            let margin = oneil::oneil_check(&inst, &f, &t, &tau, c0 * unit)?;
            let mut delta = vec![0.0; inst.m_atoms()];
            let j = (0..inst.m_atoms()).min_by(|a, b| inst.mu[*a].total_cmp(&inst.mu[*b])).unwrap_or(0);
            delta[j] = 1.0 / inst.mu[j];
            let weak = oneil::weak_type_check(&inst, &[f.clone(), delta])?;
            let alpha = f.iter().cloned().fold(0.0, f64::max);
            let claim = if alpha > 0.0 {
                oneil::claim_check(&inst, &f, alpha, &t)?
            } else {
                oneil::ClaimReport { pointwise_margin: 0.0, averaged_margin: 0.0, averaged_constant: f64::NAN, pass: true }
            };
            let tf = oneil::discrete_potential(&inst, &f)?;
            let scale = tf.iter().cloned().fold(1.0, f64::max);
            Ok(OneilRow {
                n_atoms: inst.n_atoms(),
                m_atoms: inst.m_atoms(),
                required: margin.required_c0 / unit,
                margin: margin.max_margin,
                scale,
                weak_ratio: weak.max_observed,
                weak_constant: weak.printed_constant,
                claim,
            })
        })
        .collect()
}

fn run_hyperbolic(ctx: &Ctx, log: &mut Log) -> Result<Outcome> {
    let n = ctx.or("n", 4usize)?;
    let eps: Vec<f64> = ctx.or("epsilons", vec![1e-3, 1e-4, 1e-5, 1e-6])?;
    let rho: Vec<f64> = ctx.or("rho", (0..=16).map(|i| 10f64.powf(-3.0 + 0.25 * i as f64)).collect())?;
    log.line(format!("n = {n}, scales: {}, rho grid: {}", eps.len(), rho.len()));
    let h = adams::hyperbolic_saturation(n, &eps)?;
    // The closed form exists in three dimensions only; it is checked there.
    let omega3 = crate::special::unit_sphere_area(3);
    let mut worst = 0.0f64;
    for r in &rho {
        let q = kernel::hyperbolic_h2_quadrature(3, *r) / omega3;
        worst = worst.max((kernel::hyperbolic_h2(3, *r)? / q - 1.0).abs());
    }
    let (small, large) = kernel::hyperbolic_asymptotic_ratios(n, 1e-3, 10.0)?;
    log.line(format!("small-rho ratio {small:.6}, large-rho ratio {large:.6}"));
    let mut csv = String::from("epsilon,norm_pow\n");
    for (e, v) in h.epsilons.iter().zip(&h.norms) {
        let _ = writeln!(csv, "{e:.12e},{v:.12e}");
    }
    let body = obj(vec![
        ("n", count(n)),
        ("slope", fitted(h.slope, h.r2)),
        ("predicted_slope", closed(h.predicted_slope)),
        ("measured_constant", fitted(h.measured_constant, h.r2)),
        ("euclidean_constant", closed(h.euclidean_constant)),
        ("h3_closed_form_max_rel_diff", quad(worst, 1e-13)),
        ("small_rho_ratio", quad(small, 1e-13)),
        ("large_rho_ratio", quad(large, 1e-13)),
    ]);
    Ok((Status::Ok, csv, body))
}

fn run_witness(ctx: &Ctx, log: &mut Log) -> Result<Outcome> {
    let k = ctx.opt_kernel("kernel")?.unwrap_or(KernelSpec::Riesz { n: 2, alpha: 1.0 });
    let levels: Vec<u32> = ctx.or("levels", (2..=8).collect())?;
    log.line(format!("kernel: {}, levels: {levels:?}", ctx.label("kernel")));
    let steps = adams::failure_witness(&k, &WitnessPlan::new(k.dim(), levels))?;
    let mut csv = String::from("m,level,inner_radius,outer_radius,gamma_level,norm,inf_potential,reg_ratio\n");
    for s in &steps {
        let _ = writeln!(
            csv,
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            s.m, s.level, s.inner_radius, s.outer_radius, s.gamma_level, s.norm, s.inf_potential, s.reg_ratio
        );
    }
    let increasing = steps.windows(2).all(|w| w[1].inf_potential > w[0].inf_potential);
    let (c, r2) = sqrt_fit(&steps);
    let body = obj(vec![("kernel", json!(ctx.label("kernel"))), ("strictly_increasing", json!(increasing)), ("sqrt_m_constant", fitted(c, r2))]);
    Ok((if increasing { Status::Ok } else { Status::Inconclusive }, csv, body))
}

/// Least-squares `inf_potential ≈ C √m` through the origin, with its `r²`.
pub fn sqrt_fit(steps: &[adams::WitnessStep]) -> (f64, f64) {
    let xs: Vec<f64> = steps.iter().map(|s| (s.m as f64).sqrt()).collect();
    let ys: Vec<f64> = steps.iter().map(|s| s.inf_potential).collect();
    let c = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / xs.iter().map(|x| x * x).sum::<f64>();
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - c * x).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
    (c, if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 })
}

/// Manifest that runs the natural check for a catalog preset.
pub fn preset_manifest(name: &str) -> Result<Manifest> {
    let p = catalog::find(name).ok_or_else(|| manifest_err("--preset", format!("unknown preset `{name}`")))?;
    let (command, key) = match p.item {
        PresetItem::Kernel(_) => ("kernel-check", "kernel"),
        PresetItem::Domain(_) => ("domain-check", "domain"),
        PresetItem::Symbol(_) => ("symbol-check", "symbol"),
    };
    let mut value = json!({ "command": command, "parameters": { key: name } });
    if command == "domain-check" {
        value["seed"] = json!(0);
    }
    Manifest::from_value(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field_of(e: Error) -> String {
        match e {
            Error::Manifest { field, .. } => field,
            other => panic!("expected a manifest error, got {other:?}"),
        }
    }

    #[test]
    fn empty_manifest_names_command() {
        assert_eq!(field_of(Manifest::parse("").unwrap_err()), "command");
        assert_eq!(field_of(Manifest::parse("{}").unwrap_err()), "command");
    }

    #[test]
    fn syntax_error_reports_line() {
        let f = field_of(Manifest::parse("{\n \"command\": \"witness\",\n ]").unwrap_err());
        assert!(f.starts_with("line 3"), "{f}");
    }

    #[test]
    fn schema_errors_name_fields() {
        let unseeded = Manifest::parse(r#"{"command":"domain-check","parameters":{"domain":"strip"}}"#).unwrap();
        assert_eq!(field_of(run(&unseeded, &RunOptions::default()).unwrap_err()), "seed");
        assert!(run(&unseeded, &RunOptions { seed: Some(1), samples: None }).is_ok());
        let e = Manifest::parse(r#"{"command":"saturate","parameters":{"kernel":"riesz-r2"}}"#).unwrap_err();
        assert_eq!(field_of(e), "parameters.gammas");
        let e = Manifest::parse(r#"{"command":"kernel-check","parameters":{"kernel":"strip"}}"#).unwrap_err();
        assert_eq!(field_of(e), "parameters.kernel");
        let e = Manifest::parse(r#"{"command":"witness","parameters":{"levelz":[2]}}"#).unwrap_err();
        assert_eq!(field_of(e), "parameters.levelz");
        let e = Manifest::parse(r#"{"command":"frobnicate"}"#).unwrap_err();
        assert_eq!(field_of(e), "command");
    }

    #[test]
    fn inline_specs_parse() {
        let m = Manifest::parse(r#"{"command":"kernel-check","parameters":{"kernel":{"kind":"riesz","n":2,"alpha":1.0}}}"#).unwrap();
        assert_eq!(Ctx { params: &m.parameters }.kernel("kernel").unwrap(), KernelSpec::Riesz { n: 2, alpha: 1.0 });
        let bad = Manifest::parse(r#"{"command":"kernel-check","parameters":{"kernel":{"kind":"riesz","n":2,"alpha":3.0}}}"#);
        assert_eq!(field_of(bad.unwrap_err()), "parameters.kernel");
    }

    #[test]
    fn rearrange_equimeasurable() {
        let m = Manifest::parse(r#"{"command":"rearrange","parameters":{"values":[3,-1,2],"weights":[0.5,1,2],"t":[1]}}"#).unwrap();
        let a = run(&m, &RunOptions::default()).unwrap();
        assert_eq!(a.status, Status::Ok);
        assert_eq!(a.verdict["sup"]["value"], json!(3.0));
        // (3·0.5 + 2·0.5)/1.
        assert_eq!(a.verdict["double_star"][0]["double_star"]["value"], json!(2.5));
    }

    #[test]
    fn presets_build_manifests() {
        for p in catalog::builtin() {
            preset_manifest(p.name).unwrap();
        }
        assert!(preset_manifest("nope").is_err());
    }

    #[test]
    fn sqrt_fit_recovers_constant() {
        let steps: Vec<adams::WitnessStep> = (2..=8)
            .map(|m| adams::WitnessStep {
                m,
                level: 0.0,
                inner_radius: 0.0,
                outer_radius: 0.0,
                gamma_level: 0.0,
                norm: 0.0,
                inf_potential: 1.5 * (m as f64).sqrt(),
                reg_ratio: 0.0,
            })
            .collect();
        let (c, r2) = sqrt_fit(&steps);
        assert!((c - 1.5).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }
}
