//! Per-user precoders on one channel: naive MRT, correlation-rotation zero
//! forcing and constructive-interference MRT. Each is scaled so the weakest
//! user reaches a 2 bit/s/Hz target.

use cilab::channel::generate_rayleigh;
use cilab::constellation::{detection_region_contains, SymbolVector};
use cilab::downlink::{cimrt, crzf, nmrt, PerUserPrecoder};
use cilab::linkmodel::{received_signal, received_snr, PrecoderOutput, QosTargets};
use cilab::rng::seeded;
use cilab::ChannelMatrix;

fn report(name: &str, p: PerUserPrecoder, h: &ChannelMatrix, d: &SymbolVector, qos: &QosTargets) -> cilab::Result<()> {
    let out = PrecoderOutput::from(p);
    let y = received_signal(h, &out, d, None)?;
    // smallest common scale that meets every target
    let scale = received_snr(&y)
        .iter()
        .zip(qos.zeta())
        .map(|(s, z)| z / s)
        .fold(0.0, f64::max);
    println!("{name}: power {:.4}", out.total_power() * scale);
    for (j, v) in y.y.iter().enumerate() {
        let v = v * scale.sqrt();
        let inside = detection_region_contains(d.get(j), v)?;
        println!("  user {j}: y = {v:.3}  |y|^2 = {:.3}  {}", v.norm_sqr(), if inside { "correct sector" } else { "WRONG sector" });
    }
    Ok(())
}

fn main() -> cilab::Result<()> {
    let mut rng = seeded(3);
    let h = generate_rayleigh(2, 4, 10.0, &mut rng)?;
    let d = SymbolVector::from_indices(&[0, 3], 4)?;
    let qos = QosTargets::uniform_rate(2, 2.0)?;
    println!("targets zeta = {:?}, symbols {:?}\n", qos.zeta(), d.indices());

    report("nMRT", nmrt(&h)?, &h, &d, &qos)?;
    report("CRZF", crzf(&h, &d, 1.0)?.precoder, &h, &d, &qos)?;

    let c = cimrt(&h, &d, &qos)?;
    for s in &c.steps {
        match s.params {
            Some(r) => println!("CIMRT plane ({}, {}): alpha {:.4}, delta {:.4}", s.j, s.k, r.alpha, r.delta),
            None => println!("CIMRT plane ({}, {}): left unrotated", s.j, s.k),
        }
    }
    report("CIMRT", c.precoder, &h, &d, &qos)?;
    Ok(())
}
