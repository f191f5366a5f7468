//! Calibrates the constant of the rearrangement inequality on seeded instances
//! and checks it, the weak-type bound and the Claim on fresh ones.

use riesz_adams::manifest;
use riesz_adams::oneil::{self, InstanceGenerator, OneilParams};

fn main() -> riesz_adams::Result<()> {
    for params in [OneilParams { beta: 2.0, sigma: 1.0, p: 1.0 }, OneilParams { beta: 3.0, sigma: 0.8, p: 1.2 }] {
        params.validate()?;
        let generator = InstanceGenerator { params, max_atoms: 32 };
        let cal = oneil::calibrate_c0(&generator, 200, 1)?;
        let rows = manifest::oneil_rows(&generator, 200, 2, cal.c0)?;
        let violations = rows.iter().filter(|r| r.margin > oneil::EXACT_TOL * r.scale).count();
        let worst_weak = rows.iter().map(|r| r.weak_ratio / r.weak_constant).fold(0.0, f64::max);
        let claims = rows.iter().filter(|r| r.claim.pass).count();
        println!(
            "β = {}, σ = {}, p = {} (q = {:.3}): C0/W = {:.4}, {violations} violations, worst weak-type ratio {worst_weak:.3}, claim {claims}/{}",
            params.beta,
            params.sigma,
            params.p,
            params.q(),
            cal.c0,
            rows.len()
        );
    }
    Ok(())
}
