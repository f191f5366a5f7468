//! Integrability of 1/|p|^{n/m} near the origin, which separates homogeneous
//! symbols from those with lower-order terms.

use riesz_adams::symbol::{self, PolySymbol, ShellOptions};

fn main() -> riesz_adams::Result<()> {
    let opts = ShellOptions { shells: 16, rel_tol: 1e-6, ..ShellOptions::default() };
    let cases = [
        ("|2πξ|^4 in R^6", PolySymbol::laplacian_power(6, 2)),
        ("|2πξ|^4 + |2πξ|^2 in R^6", PolySymbol::radial(6, &[(2, 1.0), (1, 1.0)])),
    ];
    for (name, p) in &cases {
        let margins = symbol::ellipticity_margins(p, 2048);
        let v = symbol::reciprocal_integrability(p, None, &opts)?;
        println!("{name:<26} homogeneous {:<5} c0 {:.3e}  {:?}", p.is_homogeneous(), margins.c0, v.verdict);
    }

    // Fewer shells and a looser sphere tolerance; the divergence shows within eight shells.
    let r8 = PolySymbol::r8_counterexample();
    let v = symbol::reciprocal_integrability(&r8, Some(2.0), &ShellOptions { shells: 8, rel_tol: 1e-5, ..opts })?;
    println!("R^8 counterexample, exponent 2: {:?}, shell sums {:?}", v.verdict, v.partial_values);

    for seed in 0..5 {
        let p = symbol::random_symbol(2, 4, seed)?;
        println!("random quartic {seed}: log|p| on [-1,1]^2 -> {:?}", symbol::log_integrability(&p, -1.0, 1.0)?.verdict);
    }
    Ok(())
}
