use proptest::prelude::*;

use riesz_adams::adams::{exp_regularized, ln_exp_regularized};
use riesz_adams::domain::{AxisBound, DomainSpec, McConfig};
use riesz_adams::kernel::KernelSpec;
use riesz_adams::measure::{self, RearrangementProfile, WeightedSamples};
use riesz_adams::oneil::{self, InstanceGenerator, OneilParams};
use riesz_adams::special::unit_ball_volume;

fn weighted(max_len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..=max_len).prop_flat_map(|n| (prop::collection::vec(-10.0..10.0f64, n), prop::collection::vec(0.01..3.0f64, n)))
}

fn step_profile() -> impl Strategy<Value = RearrangementProfile> {
    (1..=16usize)
        .prop_flat_map(|n| (prop::collection::vec(0.05..2.0f64, n), prop::collection::vec(0.1..10.0f64, n)))
        .prop_map(|(lengths, mut values)| {
            let grid: Vec<f64> = lengths.iter().scan(0.0, |acc, l| {
                *acc += l;
                Some(*acc)
            }).collect();
            values.sort_by(|a, b| b.total_cmp(a));
            RearrangementProfile::step(grid, values).expect("valid step profile")
        })
}

proptest! {
    #[test]
    fn rearrangement_is_equimeasurable_and_nonincreasing((values, weights) in weighted(48)) {
        let f = WeightedSamples::new(values.clone(), weights).unwrap();
        let star = measure::rearrangement(&f);
        prop_assert!(star.star_values().windows(2).all(|w| w[1] <= w[0]));
        for s in values.iter().map(|v| v.abs()).chain([0.0]) {
            prop_assert!((star.distribution(s) - f.distribution_function(s)).abs() <= 1e-12 * f.total_mass());
        }
        let l1: f64 = f.values().iter().zip(f.weights()).map(|(v, w)| v.abs() * w).sum();
        prop_assert!((star.integral(0.0, star.support_end()).unwrap() - l1).abs() <= 1e-10 * l1.max(1.0));
    }

    #[test]
    fn double_star_dominates_and_decreases((values, weights) in weighted(32), a in 0.01..1.0f64, b in 0.01..1.0f64) {
        let f = WeightedSamples::new(values, weights).unwrap();
        let star = measure::rearrangement(&f);
        let end = star.support_end();
        let (s, t) = (a.min(b) * end, a.max(b) * end);
        let (ds, dt) = (star.double_star(s).unwrap(), star.double_star(t).unwrap());
        prop_assert!(dt <= ds * (1.0 + 1e-12));
        prop_assert!(star.value(t) <= dt * (1.0 + 1e-12));
    }

    #[test]
    fn double_star_is_subadditive((values, weights) in weighted(32), shift in prop::collection::vec(-10.0..10.0f64, 32), a in 0.01..1.0f64) {
        let g: Vec<f64> = shift[..values.len()].to_vec();
        let sum: Vec<f64> = values.iter().zip(&g).map(|(x, y)| x + y).collect();
        let rf = measure::rearrangement(&WeightedSamples::new(values, weights.clone()).unwrap());
        let rg = measure::rearrangement(&WeightedSamples::new(g, weights.clone()).unwrap());
        let rs = measure::rearrangement(&WeightedSamples::new(sum, weights.clone()).unwrap());
        let t = a * weights.iter().sum::<f64>();
        let lhs = rs.double_star(t).unwrap();
        let rhs = rf.double_star(t).unwrap() + rg.double_star(t).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-12, "{lhs} > {rhs}");
    }

    #[test]
    fn layer_cake_identity_holds(phi in step_profile(), p in 1.05..5.0f64, frac in 0.001..0.999f64) {
        let t0 = frac * phi.support_end();
        let lc = measure::layer_cake_identity(&phi, p, t0).unwrap();
        prop_assert!(lc.residual < 1e-8, "residual {}", lc.residual);
    }

    #[test]
    fn regularized_exponential_recurrence(t in 0.0..60.0f64, m in 1u32..8) {
        // exp_{m-1}(t) - exp_m(t) = t^m / m!.
        let gap = exp_regularized(t, m - 1) - exp_regularized(t, m);
        let term = (m as f64 * t.ln() - (1..=m).map(|k| (k as f64).ln()).sum::<f64>()).exp();
        let scale = exp_regularized(t, m - 1).max(term).max(f64::MIN_POSITIVE);
        prop_assert!((gap - term).abs() <= 1e-12 * scale);
        prop_assert!(exp_regularized(t, m) >= 0.0);
        if t > 0.0 {
            prop_assert!((ln_exp_regularized(t, m) - exp_regularized(t, m).ln()).abs() <= 1e-12 * exp_regularized(t, m).ln().abs().max(1.0));
        }
    }

    #[test]
    fn riesz_kernel_is_homogeneous(x in prop::array::uniform3(-5.0..5.0f64), lambda in 0.05..20.0f64, alpha in 0.2..2.8f64) {
        prop_assume!(x.iter().map(|c| c * c).sum::<f64>() > 1e-6);
        let k = KernelSpec::Riesz { n: 3, alpha };
        let scaled: Vec<f64> = x.iter().map(|c| lambda * c).collect();
        let lhs = k.eval(&scaled, &[0.0; 3]).unwrap();
        let rhs = lambda.powf(alpha - 3.0) * k.eval(&x, &[0.0; 3]).unwrap();
        prop_assert!((lhs / rhs - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_growth_is_monotone_and_below_ball(x0 in -2.0..3.0f64, y0 in -5.0..5.0f64, r in 0.01..50.0f64, dr in 0.0..10.0f64) {
        let mc = McConfig { samples: 1, seed: 0 };
        let strip = DomainSpec::Strip { n: 2, bounds: vec![AxisBound { axis: 0, lo: 0.0, hi: 1.0 }] };
        let disk = DomainSpec::Ball { center: vec![0.5, 0.0], radius: 2.0 };
        for d in [strip, disk] {
            let a = d.local_growth(&[x0, y0], r, &mc).value;
            let b = d.local_growth(&[x0, y0], r + dr, &mc).value;
            prop_assert!(a >= 0.0 && a <= b * (1.0 + 1e-12) + 1e-14);
            prop_assert!(b <= unit_ball_volume(2) * (r + dr).powi(2) * (1.0 + 1e-12));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// The O'Neil checks are exact comparisons of finite sums: the smallest
    /// admissible constant closes the gap, and the weak-type and Claim bounds hold.
    #[test]
    fn oneil_checks_are_exact(seed in any::<u64>(), cell in 0usize..3) {
        let params = [
            OneilParams { beta: 2.0, sigma: 1.0, p: 1.0 },
            OneilParams { beta: 3.0, sigma: 1.0, p: 1.2 },
            OneilParams { beta: 2.5, sigma: 0.8, p: 1.1 },
        ][cell];
        let generator = InstanceGenerator { params, max_atoms: 24 };
        let inst = generator.instance(seed).unwrap();
        let f = generator.source(&inst, seed);
        let (t, tau) = oneil::default_grids(&inst, &f).unwrap();
        let required = oneil::oneil_check(&inst, &f, &t, &tau, 0.0).unwrap().required_c0;
        let scale = oneil::discrete_potential(&inst, &f).unwrap().iter().cloned().fold(1.0, f64::max);
        let at_required = oneil::oneil_check(&inst, &f, &t, &tau, required).unwrap();
        prop_assert!(at_required.max_margin <= oneil::EXACT_TOL * scale, "margin {}", at_required.max_margin);
        prop_assert!(oneil::weak_type_check(&inst, std::slice::from_ref(&f)).unwrap().holds());
        let alpha = f.iter().cloned().fold(0.0, f64::max);
        if alpha > 0.0 {
            prop_assert!(oneil::claim_check(&inst, &f, alpha, &t).unwrap().pass);
        }
    }
}
