//! The exponential functional of Bessel potentials of normalized sources on the
//! unit disk, and the hyperbolic extremal family.

use riesz_adams::adams::{self, Measure, PotentialField, PotentialOptions};
use riesz_adams::domain::DomainSpec;
use riesz_adams::kernel::KernelSpec;

fn main() -> riesz_adams::Result<()> {
    let k = KernelSpec::Bessel { n: 2, alpha: 1.0 };
    let gamma = adams::bessel_exponential_constant(2, 1.0)?;
    let disk = DomainSpec::Ball { center: vec![0.0, 0.0], radius: 1.0 };
    let mut values = Vec::new();
    for seed in 0..20 {
        let f = adams::random_step_source(2, 1.0, 2.0, seed)?;
        let field = PotentialField::radial_ball(&k, &f, 1.0, 16, &Measure::for_sigma(1.0), &PotentialOptions::default())?;
        values.push(adams::mt_functional(&field, gamma, 2.0, &disk, None)?.value);
    }
    values.sort_by(f64::total_cmp);
    println!("γ = {gamma:.6}: functional over 20 sources ranges {:.4} .. {:.4}", values[0], values[values.len() - 1]);

    for (t, m) in [(0.5, 0), (3.0, 1), (40.0, 2)] {
        println!("exp_{m}({t}) = {:.10e}", adams::exp_regularized(t, m));
    }

    let h = adams::hyperbolic_saturation(4, &[1e-3, 1e-4, 1e-5, 1e-6])?;
    println!("hyperbolic 4-space: slope {:.6} (predicted {:.6}), constant {:.4} vs Euclidean {:.4}", h.slope, h.predicted_slope, h.measured_constant, h.euclidean_constant);
    Ok(())
}
