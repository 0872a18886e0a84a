//! Multicast to downlink: CIDC is CCMC on the symbol-aligned channel, and
//! every user's noiseless sample lands exactly on its own scaled symbol.

use cilab::channel::generate_rayleigh;
use cilab::constellation::{alignment_matrix, SymbolVector};
use cilab::linkmodel::QosTargets;
use cilab::multicast::{ccmc, cidc_default};
use cilab::rng::seeded;

fn main() -> cilab::Result<()> {
    let mut rng = seeded(5);
    let h = generate_rayleigh(3, 4, 10.0, &mut rng)?;
    let d = SymbolVector::from_indices(&[0, 1, 2], 4)?;
    let qos = QosTargets::new(vec![1.0, 2.0, 4.0])?;

    let common = ccmc(&h, d.get(0), &qos)?;
    println!("CCMC, common symbol {}: power {:.4}", d.get(0).index(), common.power());
    for j in 0..3 {
        let y = h.entries().row(j) * common.w();
        println!("  user {j}: y = {:.4}", y[0]);
    }

    let downlink = cidc_default(&h, &d, &qos)?;
    println!("\nCIDC, symbols {:?}: power {:.4}", d.indices(), downlink.power());
    for j in 0..3 {
        let y = (h.entries().row(j) * downlink.w())[0];
        let want = d.get(j).value() * qos.zeta()[j].sqrt();
        println!("  user {j}: y = {y:.4}, target {want:.4}, error {:.1e}", (y - want).norm());
    }
    println!("  mu    = {:.4?}", downlink.lagrange_mu());
    println!("  alpha = {:.4?}", downlink.lagrange_alpha());

    let a = alignment_matrix(&d, d.get(0))?;
    let dual = ccmc(&h.aligned(&a)?, d.get(0), &qos)?;
    let diff = (dual.w() - downlink.w()).camax();
    println!("\nCCMC on A H vs CIDC: max |w difference| = {diff:.1e}");
    Ok(())
}
