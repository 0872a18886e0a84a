//! QPSK geometry: symbol phases, detection sectors and which interference is constructive.

use cilab::constellation::{detection_region_contains, is_constructive, mpsk_symbol, relative_phase};
use cilab::linalg::cis;

fn main() -> cilab::Result<()> {
    let order = 4;
    for i in 0..order as usize {
        let s = mpsk_symbol(i, order)?;
        println!(
            "symbol {i}: phase {:6.3} rad, value {:.3}, sector half-width {:.3}",
            s.phase(),
            s.value(),
            s.half_sector()
        );
    }

    let target = mpsk_symbol(0, order)?;
    println!("\nreceived points tested against symbol 0's sector:");
    for deg in [0.0_f64, 30.0, 44.0, 46.0, 90.0, 180.0] {
        let y = cis(deg.to_radians()) * 2.0;
        println!("  {deg:5.1} deg -> inside = {}", detection_region_contains(target, y)?);
    }

    let interferer = mpsk_symbol(1, order)?;
    println!("\ninterference rho * d_1 at symbol 0 (rho = e^(i theta)):");
    for deg in [-120.0_f64, -90.0, -60.0, 0.0, 90.0] {
        let rho = cis(deg.to_radians());
        println!(
            "  theta {deg:6.1} deg: rotation to align {:6.3}, constructive = {}",
            relative_phase(rho, interferer, target)?,
            is_constructive(rho, interferer, target)
        );
    }
    Ok(())
}
