//! A small SNR sweep over every technique with paired efficiency comparisons.
//! Pass a trial count as the first argument (default 300).

use cilab::montecarlo::{paired_eta, run_sweep, SweepAxis};
use cilab::{ExperimentConfig, Technique};

fn main() -> cilab::Result<()> {
    let trials = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(300);
    let mut config = ExperimentConfig::new(2, 4, 4, SweepAxis::SnrDb, vec![0.0, 10.0, 20.0]);
    config.trials = trials;
    config.master_seed = 2024;
    let result = run_sweep(&config)?;

    println!("{:<7} {:>6} {:>10} {:>16} {:>7} {:>6}", "tech", "snr", "power", "eta", "ser", "fail");
    for r in &result.rows {
        println!(
            "{:<7} {:>6} {:>10.4} {:>9.3} ± {:<5.3} {:>7.4} {:>6}",
            r.technique.name(),
            r.axis_value,
            r.mean_power,
            r.eta,
            r.ci_halfwidth_eta,
            r.ser,
            r.failures
        );
    }

    println!("\npaired eta differences at 10 dB:");
    let at = |t| &result.samples(t, 1).expect("technique was run").outcomes;
    for (a, b) in [
        (Technique::OptMc, Technique::Cidc),
        (Technique::Cidc, Technique::Ccmc),
        (Technique::Cimrt, Technique::Crzf),
        (Technique::Cimrt, Technique::Nmrt),
    ] {
        let c = paired_eta(at(a), at(b))?;
        let verdict = if c.a_better() {
            "better"
        } else if c.a_not_worse() {
            "not distinguishable"
        } else {
            "worse"
        };
        println!("  {a} - {b}: {:.3} ± {:.3} over {} pairs ({verdict})", c.difference, c.halfwidth, c.pairs);
    }
    Ok(())
}
