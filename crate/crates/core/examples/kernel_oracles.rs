//! Cross-checks between independent evaluations of the same kernels.

use std::f64::consts::PI;

use riesz_adams::kernel::{self, FftGrid, HankelGrid, KernelSpec};
use riesz_adams::symbol::PolySymbol;

fn main() -> riesz_adams::Result<()> {
    // (I - Δ)^{-1} in R³: Cartesian FFT against the log-Hankel transform.
    let dirs = vec![vec![1, 0, 0], vec![1, 1, 1]];
    let field = kernel::fundamental_solution_fft(&PolySymbol::helmholtz(3), &FftGrid::default(), None, 1.0, &dirs, (0.1, 3.0))?;
    let hankel = kernel::bessel_kernel(3, 2.0, &field.radii(), &HankelGrid::default())?;
    println!("{:>8} {:>12} {:>12} {:>12}", "r", "fft", "hankel", "e^-r/(4πr)");
    for ((r, a), b) in field.radii().iter().zip(&field.values).zip(&hankel.values).step_by(8) {
        println!("{r:>8.4} {a:>12.6e} {b:>12.6e} {:>12.6e}", (-r).exp() / (4.0 * PI * r));
    }

    let drift = KernelSpec::Drift { n: 3, alpha: 2.0, a: vec![vec![1.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 1.0]], b: vec![0.5, 0.0, 0.0] };
    for x in [[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0]] {
        println!("drift kernel at {x:?}: {:.6e}", drift.eval(&x, &[0.0; 3])?);
    }

    for rho in [1e-3, 0.1, 1.0, 5.0] {
        println!("H2 on hyperbolic 3-space at {rho}: {:.10e}", kernel::hyperbolic_h2(3, rho)?);
    }
    Ok(())
}
