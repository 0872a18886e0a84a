//! Optimal-covariance multicast: the certified minimum power, its gap to the
//! single-beam CCMC design and a rank-one beam recovered from the covariance.

use cilab::channel::generate_rayleigh;
use cilab::linkmodel::QosTargets;
use cilab::multicast::{ccmc, optimal_multicast, OptimalMulticastOptions};
use cilab::rng::seeded;
use cilab::PskSymbol;

fn main() -> cilab::Result<()> {
    let mut rng = seeded(8);
    let h = generate_rayleigh(4, 4, 10.0, &mut rng)?;
    println!("{:>5} {:>10} {:>10} {:>10} {:>10} {:>6}", "rate", "CCMC", "tr(Q)", "bound", "beam", "iters");
    for rate in [0.5, 1.0, 2.0, 4.0] {
        let qos = QosTargets::uniform_rate(4, rate)?;
        let single = ccmc(&h, PskSymbol::new(0, 4)?, &qos)?;
        let sol = optimal_multicast(&h, &qos, OptimalMulticastOptions::default())?.with_rank_one(&h, &qos, 64, &mut rng);
        let beam = sol.rank1_w.as_ref().map_or(f64::NAN, |w| w.norm_squared());
        println!(
            "{rate:>5} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>6}",
            single.power(),
            sol.power,
            sol.lower_bound,
            beam,
            sol.iterations
        );
    }

    let qos = QosTargets::uniform_rate(4, 1.0)?;
    let sol = optimal_multicast(&h, &qos, OptimalMulticastOptions::default())?;
    let eig = sol.q.clone().symmetric_eigen();
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    println!("\neigenvalues of Q at rate 1: {ev:.4?}");
    for j in 0..4 {
        let hj = h.entries().row(j);
        let snr = (hj * &sol.q * hj.adjoint())[(0, 0)].re;
        println!("  user {j}: h Q h^H = {snr:.4} (target {:.4})", qos.zeta()[j]);
    }
    Ok(())
}
