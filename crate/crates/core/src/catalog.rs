//! Named built-in kernels, domains and symbols.

use serde::Serialize;
use std::fmt;

use crate::domain::{AxisBound, CenterMap, ClusterSchedule, DomainSpec, HoleSchedule};
use crate::kernel::KernelSpec;
use crate::symbol::PolySymbol;

/// What a preset builds.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "category", content = "spec", rename_all = "snake_case")]
pub enum PresetItem {
    Kernel(KernelSpec),
    Domain(DomainSpec),
    Symbol(PolySymbol),
}

impl PresetItem {
    pub fn category(&self) -> &'static str {
        match self {
            PresetItem::Kernel(_) => "kernel",
            PresetItem::Domain(_) => "domain",
            PresetItem::Symbol(_) => "symbol",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    pub item: PresetItem,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<8} {:<30} {}", self.item.category(), self.name, self.summary)
    }
}

fn strip() -> DomainSpec {
    DomainSpec::Strip { n: 2, bounds: vec![AxisBound { axis: 0, lo: 0.0, hi: 1.0 }] }
}

/// Every built-in preset, grouped by category.
pub fn builtin() -> Vec<Preset> {
    use PresetItem::*;
    let p = |name, summary, item| Preset { name, summary, item };
    vec![
        p("riesz-r2", "Riesz kernel |x-y|^{-1} in R^2 (alpha = 1)", Kernel(KernelSpec::Riesz { n: 2, alpha: 1.0 })),
        p("riesz-r4", "Riesz kernel |x-y|^{-2} in R^4 (alpha = 2)", Kernel(KernelSpec::Riesz { n: 4, alpha: 2.0 })),
        p("bessel-r2", "Bessel kernel of (I-Lap)^{1/2} in R^2", Kernel(KernelSpec::Bessel { n: 2, alpha: 1.0 })),
        p("bessel-r3", "Bessel kernel of I-Lap in R^3, e^{-r}/(4 pi r)", Kernel(KernelSpec::Bessel { n: 3, alpha: 2.0 })),
        p(
            "drift-r3",
            "fundamental solution of div(A grad) + b.grad in R^3, A = diag(1,2,1), b = (1/2,0,0)",
            Kernel(KernelSpec::Drift {
                n: 3,
                alpha: 2.0,
                a: vec![vec![1.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 1.0]],
                b: vec![0.5, 0.0, 0.0],
            }),
        ),
        p("hyperbolic-h3", "Green's function of -Lap on hyperbolic 3-space", Kernel(KernelSpec::Hyperbolic2 { n: 3 })),
        p("shell-r2", "shell kernel |y|^{-1} on |x|/2 <= |y| < |x| in R^2", Kernel(KernelSpec::Shell { n: 2, alpha: 1.0 })),
        p(
            "riesz-strip",
            "Riesz kernel restricted to the strip 0 < x_1 < 1",
            Kernel(KernelSpec::RestrictedRiesz { n: 2, alpha: 1.0, domain: strip() }),
        ),
        p("full-r2", "the whole plane", Domain(DomainSpec::FullSpace { n: 2 })),
        p("strip", "planar strip 0 < x_1 < 1", Domain(strip())),
        p("unit-disk", "unit disk centred at the origin", Domain(DomainSpec::Ball { center: vec![0.0, 0.0], radius: 1.0 })),
        p(
            "lattice-complement",
            "plane minus disks of radius 0.1 at integer points",
            Domain(DomainSpec::BallLatticeComplement { n: 2, eps0: 0.1 }),
        ),
        p(
            "cluster",
            "four clusters: R_m = 4^m, eps_m^2 log R_m = 1/4, centres 100^m",
            Domain(DomainSpec::BallClusterUnion { schedule: ClusterSchedule::geometric(2, 4) }),
        ),
        p(
            "lattice-union-linear",
            "disks of radius 0.05 at integer points of the quadrant",
            Domain(DomainSpec::LatticeBallUnion { n: 2, map: CenterMap::Linear, delta0: 0.05, truncation: 100_000 }),
        ),
        p(
            "lattice-union-square",
            "disks of radius 0.05 at (i^2, j^2)",
            Domain(DomainSpec::LatticeBallUnion { n: 2, map: CenterMap::Power { exponent: 2.0 }, delta0: 0.05, truncation: 10_000 }),
        ),
        p(
            "holes-product",
            "product of two unit-interval chains with holes, kept fractions max(k^{-2}, 2^{1-k})",
            Domain(DomainSpec::Product1D { factors: vec![HoleSchedule { amplitude: 1.0, gamma: 2.0, k_max: 40 }; 2] }),
        ),
        p("laplacian-r2", "|2 pi xi|^2 in R^2", Symbol(PolySymbol::laplacian_power(2, 1))),
        p("bilaplacian-r6", "|2 pi xi|^4 in R^6 (homogeneous)", Symbol(PolySymbol::laplacian_power(6, 2))),
        p(
            "bilaplacian-plus-laplacian-r6",
            "|2 pi xi|^4 + |2 pi xi|^2 in R^6",
            Symbol(PolySymbol::radial(6, &[(2, 1.0), (1, 1.0)])),
        ),
        p(
            "r8-counterexample",
            "(xi_8 - |xi'|^2)^2 + xi_8^4 in R^8, order 4 but c_1 = 0",
            Symbol(PolySymbol::r8_counterexample()),
        ),
        p("helmholtz-r3", "1 + |2 pi xi|^2 in R^3", Symbol(PolySymbol::helmholtz(3))),
    ]
}

/// Presets whose category equals `filter`; all of them when `filter` is `None`.
/// An unknown category yields an empty list.
pub fn list(filter: Option<&str>) -> Vec<Preset> {
    builtin().into_iter().filter(|p| filter.is_none_or(|f| p.item.category() == f)).collect()
}

pub fn find(name: &str) -> Option<Preset> {
    builtin().into_iter().find(|p| p.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn presets_are_valid_and_unique() {
        let all = builtin();
        assert!(all.len() >= 10);
        let names: HashSet<_> = all.iter().map(|p| p.name).collect();
        assert_eq!(names.len(), all.len());
        for p in &all {
            match &p.item {
                PresetItem::Kernel(k) => k.validate().unwrap(),
                PresetItem::Domain(d) => d.validate().unwrap(),
                PresetItem::Symbol(s) => assert!(s.alpha > 0),
            }
        }
    }

    #[test]
    fn filter_by_category() {
        let domains = list(Some("domain"));
        assert!(!domains.is_empty());
        assert!(domains.iter().all(|p| matches!(p.item, PresetItem::Domain(_))));
        assert!(list(Some("no-such-category")).is_empty());
        assert_eq!(list(None).len(), builtin().len());
    }

    #[test]
    fn named_examples_present() {
        for name in ["cluster", "r8-counterexample", "shell-r2"] {
            assert!(find(name).is_some(), "{name}");
        }
    }
}
