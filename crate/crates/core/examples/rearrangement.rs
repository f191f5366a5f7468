//! Decreasing rearrangement of a weighted sample, its level averages and the
//! layer-cake identity.

use riesz_adams::measure::{self, RearrangementProfile, WeightedSamples};

fn main() -> riesz_adams::Result<()> {
    let f = WeightedSamples::new(vec![0.5, -3.0, 2.0, 1.0, -0.25], vec![1.0, 0.5, 0.25, 2.0, 1.0])?;
    let star = measure::rearrangement(&f);
    println!("{:>8} {:>8} {:>8}", "t", "f*(t)", "f**(t)");
    for t in [0.1, 0.5, 0.75, 1.0, 2.0, 3.5, 4.75] {
        println!("{t:>8.2} {:>8.4} {:>8.4}", star.value(t), star.double_star(t)?);
    }
    for s in [0.0, 0.5, 1.5] {
        println!("|{{|f| > {s}}}| = {} for the sample, {} for f*", f.distribution_function(s), star.distribution(s));
    }

    // φ(t) = t^{-1/2}: both sides equal 1 at p = 3, t0 = 1.
    let phi = RearrangementProfile::log_linear(vec![1.0, 4.0], vec![1.0, 0.5])?;
    let lc = measure::layer_cake_identity(&phi, 3.0, 1.0)?;
    println!("layer cake: lhs = {:.12}, rhs = {:.12}, residual = {:.1e}", lc.lhs, lc.rhs, lc.residual);
    Ok(())
}
