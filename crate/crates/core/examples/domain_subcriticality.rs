//! Subcriticality verdicts for a few planar domains.

use riesz_adams::domain::{self, AxisBound, ClusterSchedule, DomainSpec, McConfig, Verdict};
use riesz_adams::measure::DoublingRule;

fn main() -> riesz_adams::Result<()> {
    let mc = McConfig { samples: 20_000, seed: 1 };
    let domains = [
        ("strip 0 < x1 < 1", DomainSpec::Strip { n: 2, bounds: vec![AxisBound { axis: 0, lo: 0.0, hi: 1.0 }] }),
        ("whole plane", DomainSpec::FullSpace { n: 2 }),
        ("lattice complement", DomainSpec::BallLatticeComplement { n: 2, eps0: 0.1 }),
        ("four clusters", DomainSpec::BallClusterUnion { schedule: ClusterSchedule::geometric(2, 4) }),
    ];
    for (name, d) in &domains {
        let report = domain::subcriticality_test(d, &d.canonical_basepoints(), d.default_doublings(), &mc, &DoublingRule::default())?;
        match report.verdict {
            Verdict::Subcritical => println!("{name:<20} subcritical, sup integral {:.4}", report.sup_estimate),
            Verdict::Critical { rate } => println!("{name:<20} critical, growth {rate:.4} per unit log r"),
            Verdict::Inconclusive => println!("{name:<20} inconclusive"),
        }
    }
    let schedule = ClusterSchedule::geometric(2, 4);
    println!("cluster proxy partial sums: {:?}", schedule.proxy_partial_sums());
    Ok(())
}
