//! Rayleigh channel draw, user cross-correlations and the SVD factors
//! used by the rotation-based precoder.

use cilab::channel::{cross_correlation, generate_rayleigh, max_cross_correlation, svd_factor};
use cilab::linalg::{identity_deviation, max_abs_diff};
use cilab::rng::seeded;
use cilab::Complex64;

fn main() -> cilab::Result<()> {
    let mut rng = seeded(42);
    let h = generate_rayleigh(3, 4, 10.0, &mut rng)?;
    println!("H ({} users x {} antennas), row norms {:?}", h.users(), h.antennas(), h.row_norms());

    let rho = cross_correlation(&h)?;
    println!("|rho|:");
    for j in 0..h.users() {
        let row: Vec<String> = (0..h.users()).map(|k| format!("{:.3}", rho[(j, k)].norm())).collect();
        println!("  [{}]", row.join(", "));
    }
    println!("max off-diagonal |rho| = {:.4}", max_cross_correlation(&h)?);

    let f = svd_factor(&h)?;
    println!("\nS unitary within {:.1e}", identity_deviation(&(f.s.adjoint() * &f.s)));
    println!("D unitary within {:.1e}", identity_deviation(&(f.d.adjoint() * &f.d)));
    let sigma = f.v().map(|x| Complex64::new(x, 0.0));
    let rebuilt = &f.s * sigma * &f.d;
    println!("S Sigma D reproduces H within {:.1e}", max_abs_diff(&rebuilt, h.entries()));
    let xi = f.xi(&f.b);
    let diag: Vec<String> = (0..h.users()).map(|j| format!("{:.4}", xi[(j, j)])).collect();
    println!("xi diagonal before any rotation: [{}]", diag.join(", "));
    Ok(())
}
