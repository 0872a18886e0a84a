//! Link-level evaluation of one CIDC design: noisy detection over many symbol
//! slots on a fixed channel, then rate, power and energy efficiency.

use cilab::channel::generate_rayleigh;
use cilab::constellation::SymbolVector;
use cilab::linkmodel::{detect, metrics, received_signal, PrecoderOutput, QosTargets, SerEstimate, NOISE_VARIANCE};
use cilab::multicast::cidc_default;
use cilab::rng::seeded;
use cilab::Complex64;
use rand_distr::{Distribution, Normal};

fn main() -> cilab::Result<()> {
    let mut rng = seeded(99);
    let h = generate_rayleigh(2, 4, 10.0, &mut rng)?;
    let qos = QosTargets::uniform_rate(2, 3.0)?;
    let noise = Normal::new(0.0, (NOISE_VARIANCE / 2.0).sqrt()).expect("valid deviation");

    let mut ser = SerEstimate::default();
    let mut power = 0.0;
    let slots = 20_000;
    for _ in 0..slots {
        let d = SymbolVector::random(2, 8, &mut rng)?;
        let p = PrecoderOutput::from(cidc_default(&h, &d, &qos)?);
        power += p.total_power();
        let z: Vec<Complex64> = (0..2)
            .map(|_| Complex64::new(noise.sample(&mut rng), noise.sample(&mut rng)))
            .collect();
        let y = received_signal(&h, &p, &d, Some(&z))?;
        let got = detect(&y, 8)?;
        ser = ser.merge(SerEstimate {
            errors: got.errors(&d.indices()),
            symbols: 2,
        });
    }
    let mean_power = power / slots as f64;
    println!("8-PSK, 3 bit/s/Hz target (zeta = {:.1}) per user, {slots} slots", qos.zeta()[0]);
    println!("SER {:.4} ({} errors in {} symbols)", ser.rate(), ser.errors, ser.symbols);

    // CIDC meets every target exactly, so the achieved SNR is zeta
    let m = metrics(
        &PrecoderOutput::from(cidc_default(&h, &SymbolVector::from_indices(&[0, 0], 8)?, &qos)?),
        qos.zeta(),
        ser,
    )?;
    println!("per-user rate {:?} bit/s/Hz, sum {:.3}", m.per_user_rate, m.sum_rate());
    println!("mean power {mean_power:.4}, eta at the mean power {:.3}", m.sum_rate() / mean_power);
    Ok(())
}
