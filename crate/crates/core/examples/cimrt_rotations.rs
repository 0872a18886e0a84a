//! The CIMRT plane sweep under both rotation rules on a three-user channel,
//! with the pair-equation roots and their residuals.

use cilab::channel::generate_rayleigh;
use cilab::constellation::{detection_region_contains, SymbolVector};
use cilab::downlink::{cimrt_with, pair_residual, CimrtOptions, PairRule};
use cilab::linkmodel::{received_signal, PrecoderOutput, QosTargets};
use cilab::rng::seeded;

fn main() -> cilab::Result<()> {
    let mut rng = seeded(17);
    let h = generate_rayleigh(3, 4, 10.0, &mut rng)?;
    let d = SymbolVector::from_indices(&[0, 1, 3], 4)?;
    let qos = QosTargets::uniform_rate(3, 2.0)?;
    println!("symbols {:?}", d.indices());

    for rule in [PairRule::ConstructivePower, PairRule::PairEquations] {
        let out = cimrt_with(&h, &d, &qos, CimrtOptions { rule })?;
        println!("\n{rule:?} (initial powers: {:?})", out.allocation);
        for s in &out.steps {
            print!("  plane ({}, {}): ", s.j, s.k);
            match (s.params, s.root) {
                (Some(p), Some(r)) => {
                    let res = pair_residual(&s.block, d.get(s.k), d.get(s.j), p.alpha, p.delta, r.xi_kk, r.xi_jj);
                    println!(
                        "root alpha {:.4} delta {:.4}, gains ({:.4}, {:.4}), residual {res:.1e}, back-offs {}",
                        p.alpha, p.delta, r.xi_kk, r.xi_jj, r.backoff_steps
                    );
                }
                (Some(p), None) => {
                    let c = s.choice.expect("search result");
                    println!(
                        "alpha {:.4} delta {:.4}, efficiency {:.4} (unrotated {:.4})",
                        p.alpha, p.delta, c.value.efficiency, c.identity.efficiency
                    );
                }
                (None, _) => println!("unrotated"),
            }
        }
        let power = out.precoder.total_power();
        let y = received_signal(&h, &PrecoderOutput::from(out.precoder), &d, None)?;
        let inside = y
            .y
            .iter()
            .enumerate()
            .filter(|(j, v)| detection_region_contains(d.get(*j), **v).unwrap_or(false))
            .count();
        println!("  power {power:.4}, {inside}/3 users in their sector");
    }
    Ok(())
}
