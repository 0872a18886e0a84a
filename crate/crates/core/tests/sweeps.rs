use cilab::montecarlo::{run_sweep, SweepAxis};
use cilab::{ExperimentConfig, Technique};

fn rate_sweep(techniques: Vec<Technique>, points: Vec<f64>, trials: usize, seed: u64) -> cilab::SweepResult {
    let mut c = ExperimentConfig::new(3, 4, 4, SweepAxis::Rate, points);
    c.techniques = techniques;
    c.trials = trials;
    c.master_seed = seed;
    run_sweep(&c).unwrap()
}

#[test]
fn optimal_multicast_never_needs_more_power_than_ccmc() {
    let r = rate_sweep(vec![Technique::Ccmc, Technique::OptMc], vec![0.5, 1.0, 2.0], 100, 21);
    for p in 0..3 {
        let ccmc = &r.samples(Technique::Ccmc, p).unwrap().outcomes;
        let opt = &r.samples(Technique::OptMc, p).unwrap().outcomes;
        for (a, b) in ccmc.iter().zip(opt) {
            let (a, b) = (a.unwrap(), b.unwrap());
            assert!(b.power <= a.power * (1.0 + 1e-6), "rate {}: {} > {}", r.points[p], b.power, a.power);
        }
        assert!(r.row(Technique::OptMc, p).unwrap().mean_power <= r.row(Technique::Ccmc, p).unwrap().mean_power);
    }
}

#[test]
fn power_grows_with_rate() {
    let r = rate_sweep(vec![Technique::Nmrt, Technique::Crzf, Technique::Cidc], vec![0.5, 1.0, 2.0, 3.0], 60, 3);
    for t in [Technique::Nmrt, Technique::Crzf, Technique::Cidc] {
        let powers: Vec<f64> = (0..4).map(|p| r.row(t, p).unwrap().mean_power).collect();
        assert!(powers.windows(2).all(|w| w[1] > w[0]), "{t}: {powers:?}");
    }
}

#[test]
fn ser_falls_as_target_rate_rises() {
    let r = rate_sweep(vec![Technique::Cidc, Technique::Ccmc], vec![0.5, 2.0, 4.0], 400, 9);
    for t in [Technique::Cidc, Technique::Ccmc] {
        let ser: Vec<f64> = (0..3).map(|p| r.row(t, p).unwrap().ser).collect();
        assert!(ser.windows(2).all(|w| w[1] <= w[0]), "{t}: {ser:?}");
        assert!(ser[0] > ser[2], "{t}: {ser:?}");
    }
}

#[test]
fn rows_follow_point_then_technique_order() {
    let r = rate_sweep(vec![Technique::Cidc, Technique::Nmrt], vec![1.0, 2.0], 5, 1);
    let order: Vec<(Technique, f64)> = r.rows.iter().map(|row| (row.technique, row.axis_value)).collect();
    assert_eq!(
        order,
        vec![
            (Technique::Cidc, 1.0),
            (Technique::Nmrt, 1.0),
            (Technique::Cidc, 2.0),
            (Technique::Nmrt, 2.0)
        ]
    );
}
