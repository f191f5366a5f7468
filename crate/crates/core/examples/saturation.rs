//! Blow-up exponents of the exponential functional along the extremal family,
//! and the failure witness for a critical kernel.

use std::f64::consts::PI;

use riesz_adams::adams::{self, SaturationOptions, WitnessPlan};
use riesz_adams::kernel::KernelSpec;

fn main() -> riesz_adams::Result<()> {
    let riesz = KernelSpec::Riesz { n: 2, alpha: 1.0 };
    let eps: Vec<f64> = (4..16).map(|j| 2f64.powi(-j)).collect();
    let gammas = [0.8 / PI, 1.0 / PI, 1.2 / PI];
    for r in adams::saturation_experiment(&riesz, &gammas, &eps, 1.0, &SaturationOptions::default())? {
        println!("γπ = {:.2}: fitted exponent {:+.5} (r² {:.6}), predicted {:+.5}", r.gamma * PI, r.fitted_exponent, r.r2, r.predicted_exponent);
    }

    let steps = adams::failure_witness(&riesz, &WitnessPlan::new(2, (2..=8).collect()))?;
    for s in &steps {
        println!("m = {}: inf of the potential {:.5}, ratio to sqrt(m) {:.5}", s.m, s.inf_potential, s.inf_potential / (s.m as f64).sqrt());
    }
    Ok(())
}
