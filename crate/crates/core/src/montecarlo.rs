//! Seeded, paired Monte Carlo sweeps.
//!
//! Trial `i` draws a unit-power channel, the users' symbols and one noise
//! sample per user from its own stream `substream(master_seed, i)`. Every
//! technique sees that same realization, and every sweep point reuses it with
//! the channel scaled to the point's average power. Trials run in parallel but
//! are folded in index order, so results do not depend on the worker count.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{generate_rayleigh, ChannelMatrix};
use crate::constellation::{detection_region_contains, SymbolVector};
use crate::downlink::{cimrt, constructive_power_allocation, crzf, nmrt};
use crate::linalg::{CMatrix, CVector};
use crate::linkmodel::{detect, QosTargets, ReceivedVector, NOISE_VARIANCE};
use crate::multicast::{ccmc, cidc_default, optimal_multicast, OptimalMulticastOptions};
use crate::rng::{mix_seed, seeded, substream};
use crate::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Technique {
    #[serde(rename = "nMRT")]
    Nmrt,
    #[serde(rename = "CRZF")]
    Crzf,
    #[serde(rename = "CIMRT")]
    Cimrt,
    #[serde(rename = "CCMC")]
    Ccmc,
    #[serde(rename = "CIDC")]
    Cidc,
    #[serde(rename = "OPT-MC")]
    OptMc,
}

impl Technique {
    pub const ALL: [Technique; 6] = [
        Technique::Nmrt,
        Technique::Crzf,
        Technique::Cimrt,
        Technique::Ccmc,
        Technique::Cidc,
        Technique::OptMc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Technique::Nmrt => "nMRT",
            Technique::Crzf => "CRZF",
            Technique::Cimrt => "CIMRT",
            Technique::Ccmc => "CCMC",
            Technique::Cidc => "CIDC",
            Technique::OptMc => "OPT-MC",
        }
    }

    /// Needs `K ≤ nt`.
    pub fn needs_full_row_rank(self) -> bool {
        !matches!(self, Technique::OptMc)
    }

    /// Per-user streams, whose rates come from the received amplitude.
    pub fn is_per_user(self) -> bool {
        matches!(self, Technique::Nmrt | Technique::Crzf | Technique::Cimrt)
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Technique {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_uppercase().replace('_', "-");
        Technique::ALL
            .into_iter()
            .find(|t| t.name().to_ascii_uppercase() == key)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown technique '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Average channel power `γ_0` in dB at a fixed target rate.
    SnrDb,
    /// Common target rate in bits per symbol at a fixed `γ_0`.
    Rate,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::SnrDb => "snr_db",
            SweepAxis::Rate => "rate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub users: usize,
    pub antennas: usize,
    pub order: u32,
    pub techniques: Vec<Technique>,
    pub axis: SweepAxis,
    pub points: Vec<f64>,
    pub trials: usize,
    pub master_seed: u64,
    /// `γ_0` in dB used on the rate axis.
    pub snr_db: f64,
    /// Common target rate used on the SNR axis; `log2 M` when absent.
    pub target_rate: Option<f64>,
    /// Worker threads; all cores when absent.
    pub workers: Option<usize>,
    /// Gaussian randomizations for the rank-one multicast beam.
    pub randomizations: usize,
    pub sdp_rel_gap: f64,
}

impl ExperimentConfig {
    pub fn new(users: usize, antennas: usize, order: u32, axis: SweepAxis, points: Vec<f64>) -> Self {
        Self {
            users,
            antennas,
            order,
            techniques: Technique::ALL.to_vec(),
            axis,
            points,
            trials: 2000,
            master_seed: 1,
            snr_db: 10.0,
            target_rate: None,
            workers: None,
            randomizations: 32,
            sdp_rel_gap: OptimalMulticastOptions::default().rel_gap,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.antennas == 0 {
            return Err(Error::InvalidParameter("K and nt must be at least 1".into()));
        }
        if self.order < 2 || !self.order.is_power_of_two() {
            return Err(Error::InvalidOrder(self.order));
        }
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if self.techniques.is_empty() {
            return Err(Error::InvalidParameter("no techniques selected".into()));
        }
        if self.points.is_empty() || self.points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter("sweep points must be finite and non-empty".into()));
        }
        if self.axis == SweepAxis::Rate && self.points.iter().any(|r| *r <= 0.0) {
            return Err(Error::InvalidParameter("target rates must be positive".into()));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::InvalidParameter("snr_db must be finite".into()));
        }
        if let Some(r) = self.target_rate {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidParameter("target_rate must be positive".into()));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidParameter("workers must be at least 1".into()));
        }
        if !(self.sdp_rel_gap > 0.0) {
            return Err(Error::InvalidParameter("sdp_rel_gap must be positive".into()));
        }
        if self.users > self.antennas {
            if let Some(t) = self.techniques.iter().find(|t| t.needs_full_row_rank()) {
                return Err(Error::InvalidParameter(format!(
                    "{t} needs K <= nt, got K = {} and nt = {}",
                    self.users, self.antennas
                )));
            }
        }
        Ok(())
    }

    fn default_rate(&self) -> f64 {
        self.target_rate.unwrap_or((self.order as f64).log2())
    }

    /// `(γ_0 linear, common target rate)` of a sweep point.
    pub fn operating_point(&self, value: f64) -> (f64, f64) {
        match self.axis {
            SweepAxis::SnrDb => (db_to_linear(value), self.default_rate()),
            SweepAxis::Rate => (db_to_linear(self.snr_db), value),
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Channel, symbols and noise of one trial, at unit average channel power.
#[derive(Debug, Clone)]
pub struct Realization {
    pub channel: ChannelMatrix,
    pub symbols: SymbolVector,
    pub noise: Vec<Complex64>,
    /// Seed for randomized post-processing (rank-one extraction).
    pub aux_seed: u64,
}

impl Realization {
    pub fn draw(config: &ExperimentConfig, trial: u64) -> Result<Self> {
        let mut rng = substream(config.master_seed, trial);
        let channel = generate_rayleigh(config.users, config.antennas, 1.0, &mut rng)?;
        let symbols = SymbolVector::random(config.users, config.order, &mut rng)?;
        let amp = (NOISE_VARIANCE / 2.0).sqrt();
        let noise = (0..config.users)
            .map(|_| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(amp * re, amp * im)
            })
            .collect();
        Ok(Self {
            channel,
            symbols,
            noise,
            aux_seed: mix_seed(config.master_seed, trial ^ (1 << 63)),
        })
    }
}

/// What one technique achieved on one realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialMetrics {
    pub power: f64,
    pub sum_rate: f64,
    pub errors: u64,
    pub symbols: u64,
    /// Users whose noiseless point left their detection region.
    pub out_of_region: u64,
}

/// A designed transmit signal.
#[derive(Debug, Clone, PartialEq)]
pub enum Design {
    /// Effective per-user precoder `W P^{1/2}`; the transmit vector is `W P^{1/2} d`.
    PerUser { w: CMatrix, power: f64 },
    /// One beam. `gains[j]` is the noiseless sample at user `j`, which detects `sent[j]`.
    Multicast {
        w: CVector,
        power: f64,
        gains: Vec<Complex64>,
        sent: Vec<usize>,
    },
}

impl Design {
    pub fn power(&self) -> f64 {
        match self {
            Design::PerUser { power, .. } | Design::Multicast { power, .. } => *power,
        }
    }

    /// Noiseless received samples and the index each user should detect.
    pub fn received(&self, h: &ChannelMatrix, d: &SymbolVector) -> (Vec<Complex64>, Vec<usize>) {
        match self {
            Design::PerUser { w, .. } => {
                let y = h.entries() * w * DVector::from_vec(d.values());
                (y.iter().copied().collect(), d.indices())
            }
            Design::Multicast { gains, sent, .. } => (gains.clone(), sent.clone()),
        }
    }
}

/// Solver knobs that are not part of the channel realization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignOptions {
    pub randomizations: usize,
    pub sdp_rel_gap: f64,
    /// Seed of the rank-one randomizations.
    pub aux_seed: u64,
}

impl DesignOptions {
    pub fn for_trial(config: &ExperimentConfig, realization: &Realization) -> Self {
        Self {
            randomizations: config.randomizations,
            sdp_rel_gap: config.sdp_rel_gap,
            aux_seed: realization.aux_seed,
        }
    }
}

/// Builds the transmit signal of `technique` for channel `h` and symbols `d`.
///
/// Per-user techniques are scaled so the weakest user meets its target. CCMC
/// sends `d_1` to everyone; OPT-MC reports `tr(Q)` as its power and detects
/// through the rank-one beam after derotation.
pub fn design(
    technique: Technique,
    h: &ChannelMatrix,
    d: &SymbolVector,
    qos: &QosTargets,
    options: DesignOptions,
) -> Result<Design> {
    let dv = DVector::from_vec(d.values());
    match technique {
        Technique::Nmrt => {
            let (powers, _) = constructive_power_allocation(h, qos)?;
            let base = nmrt(h)?.with_powers(powers)?;
            let y = h.entries() * base.effective() * &dv;
            let scale = qos_scale(&y, qos)?;
            let scaled: Vec<f64> = base.powers().iter().map(|p| p * scale).collect();
            let p = base.with_powers(scaled)?;
            Ok(Design::PerUser {
                w: p.effective(),
                power: p.total_power(),
            })
        }
        Technique::Crzf => {
            let unit = crzf(h, d, 1.0)?;
            let y = h.entries() * unit.raw() * &dv;
            let budget = qos_scale(&y, qos)?;
            let w = crzf(h, d, budget)?;
            Ok(Design::PerUser {
                w: w.raw(),
                power: budget,
            })
        }
        Technique::Cimrt => {
            let out = cimrt(h, d, qos)?;
            Ok(Design::PerUser {
                w: out.precoder.effective(),
                power: out.precoder.total_power(),
            })
        }
        Technique::Ccmc => {
            let common = d.get(0);
            let m = ccmc(h, common, qos)?;
            Ok(Design::Multicast {
                gains: (h.entries() * m.w()).iter().copied().collect(),
                power: m.power(),
                sent: vec![common.index(); d.len()],
                w: m.w().clone(),
            })
        }
        Technique::Cidc => {
            let m = cidc_default(h, d, qos)?;
            Ok(Design::Multicast {
                gains: (h.entries() * m.w()).iter().copied().collect(),
                power: m.power(),
                sent: d.indices(),
                w: m.w().clone(),
            })
        }
        Technique::OptMc => {
            let solver = OptimalMulticastOptions {
                rel_gap: options.sdp_rel_gap,
                ..Default::default()
            };
            let mut rng = seeded(options.aux_seed);
            let sol = optimal_multicast(h, qos, solver)?.with_rank_one(h, qos, options.randomizations, &mut rng);
            let w = sol
                .rank1_w
                .ok_or_else(|| Error::Infeasible("no feasible rank-one beam".into()))?;
            // receivers derotate by their effective channel h_j w and see the common symbol
            let common = d.get(0);
            let gains = (h.entries() * &w)
                .iter()
                .map(|g| Complex64::new(g.norm(), 0.0) * common.value())
                .collect();
            Ok(Design::Multicast {
                w,
                power: sol.power,
                gains,
                sent: vec![common.index(); d.len()],
            })
        }
    }
}

/// Runs `technique` on one realization at average channel power `gamma0`.
pub fn evaluate(
    technique: Technique,
    realization: &Realization,
    gamma0: f64,
    qos: &QosTargets,
    config: &ExperimentConfig,
) -> Result<TrialMetrics> {
    let h = realization.channel.scaled(gamma0.sqrt());
    let d = &realization.symbols;
    let out = design(technique, &h, d, qos, DesignOptions::for_trial(config, realization))?;
    let (clean, sent) = out.received(&h, d);

    let out_of_region = match out {
        Design::PerUser { .. } => {
            let mut n = 0;
            for (j, y) in clean.iter().enumerate() {
                if !detection_region_contains(d.get(j), *y)? {
                    n += 1;
                }
            }
            n
        }
        Design::Multicast { .. } => 0,
    };
    let sum_rate = match out {
        Design::PerUser { .. } => clean.iter().map(|y| (1.0 + y.norm_sqr() / NOISE_VARIANCE).log2()).sum(),
        Design::Multicast { .. } => qos.rates().iter().sum(),
    };
    let noisy = ReceivedVector {
        y: clean.iter().zip(&realization.noise).map(|(y, z)| y + z).collect(),
        noise_variance: NOISE_VARIANCE,
    };
    Ok(TrialMetrics {
        power: out.power(),
        sum_rate,
        errors: detect(&noisy, d.order())?.errors(&sent),
        symbols: h.users() as u64,
        out_of_region,
    })
}

/// `max_j ζ_j / |y_j|²`: the common power factor that brings the weakest user to its target.
fn qos_scale(y: &DVector<Complex64>, qos: &QosTargets) -> Result<f64> {
    let mut scale = 0.0f64;
    for (v, z) in y.iter().zip(qos.zeta()) {
        let a = v.norm_sqr();
        if !(a > 1e-300) {
            return Err(Error::Infeasible("a user receives no signal".into()));
        }
        scale = scale.max(z / a);
    }
    Ok(scale)
}

/// Per-trial outcomes of one technique at one point, in trial order.
#[derive(Debug, Clone, PartialEq)]
pub struct TechniqueSamples {
    pub technique: Technique,
    pub point: usize,
    pub outcomes: Vec<Option<TrialMetrics>>,
}

/// One `(technique, point)` row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointSummary {
    pub technique: Technique,
    pub axis_value: f64,
    pub mean_power: f64,
    pub mean_sum_rate: f64,
    pub eta: f64,
    pub ser: f64,
    pub failures: usize,
    pub trials: usize,
    pub ci_halfwidth_eta: f64,
    pub ci_halfwidth_power: f64,
    pub ser_halfwidth: f64,
    pub out_of_region: u64,
}

impl PointSummary {
    pub fn successes(&self) -> usize {
        self.trials - self.failures
    }

    pub fn eta_interval(&self) -> (f64, f64) {
        (self.eta - self.ci_halfwidth_eta, self.eta + self.ci_halfwidth_eta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub points: Vec<f64>,
    pub rows: Vec<PointSummary>,
    pub samples: Vec<TechniqueSamples>,
}

impl SweepResult {
    pub fn row(&self, technique: Technique, point: usize) -> Option<&PointSummary> {
        let value = self.points.get(point)?.to_bits();
        self.rows
            .iter()
            .find(|r| r.technique == technique && r.axis_value.to_bits() == value)
    }

    pub fn samples(&self, technique: Technique, point: usize) -> Option<&TechniqueSamples> {
        self.samples.iter().find(|s| s.technique == technique && s.point == point)
    }

    /// True when no technique succeeded on any trial.
    pub fn all_failed(&self) -> bool {
        self.rows.iter().all(|r| r.successes() == 0)
    }
}

/// Ratio-of-means summary with delta-method confidence half-widths.
pub fn summarize(technique: Technique, axis_value: f64, outcomes: &[Option<TrialMetrics>]) -> PointSummary {
    let ok: Vec<&TrialMetrics> = outcomes.iter().flatten().collect();
    let n = ok.len();
    let trials = outcomes.len();
    let nan = f64::NAN;
    if n == 0 {
        return PointSummary {
            technique,
            axis_value,
            mean_power: nan,
            mean_sum_rate: nan,
            eta: nan,
            ser: nan,
            failures: trials,
            trials,
            ci_halfwidth_eta: nan,
            ci_halfwidth_power: nan,
            ser_halfwidth: nan,
            out_of_region: 0,
        };
    }
    let nf = n as f64;
    let mean_power = ok.iter().map(|m| m.power).sum::<f64>() / nf;
    let mean_sum_rate = ok.iter().map(|m| m.sum_rate).sum::<f64>() / nf;
    let eta = mean_sum_rate / mean_power;
    let (var_power, var_infl) = if n > 1 {
        let vp = ok.iter().map(|m| (m.power - mean_power).powi(2)).sum::<f64>() / (nf - 1.0);
        let vi = ok
            .iter()
            .map(|m| ((m.sum_rate - eta * m.power) / mean_power).powi(2))
            .sum::<f64>()
            / (nf - 1.0);
        (vp, vi)
    } else {
        (0.0, 0.0)
    };
    let errors: u64 = ok.iter().map(|m| m.errors).sum();
    let symbols: u64 = ok.iter().map(|m| m.symbols).sum();
    let ser = errors as f64 / symbols as f64;
    PointSummary {
        technique,
        axis_value,
        mean_power,
        mean_sum_rate,
        eta,
        ser,
        failures: trials - n,
        trials,
        ci_halfwidth_eta: Z95 * (var_infl / nf).sqrt(),
        ci_halfwidth_power: Z95 * (var_power / nf).sqrt(),
        ser_halfwidth: Z95 * (ser * (1.0 - ser) / symbols as f64).sqrt(),
        out_of_region: ok.iter().map(|m| m.out_of_region).sum(),
    }
}

/// Paired comparison of two techniques' `η` on the trials where both succeeded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedComparison {
    /// `η_a − η_b`.
    pub difference: f64,
    pub halfwidth: f64,
    pub pairs: usize,
}

impl PairedComparison {
    /// `η_a > η_b` at 95% confidence.
    pub fn a_better(&self) -> bool {
        self.difference - self.halfwidth > 0.0
    }

    /// `η_a ≥ η_b` is not rejected at 95% confidence.
    pub fn a_not_worse(&self) -> bool {
        self.difference + self.halfwidth >= 0.0
    }
}

pub fn paired_eta(a: &[Option<TrialMetrics>], b: &[Option<TrialMetrics>]) -> Result<PairedComparison> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch("sample sets of different length".into()));
    }
    let pairs: Vec<(&TrialMetrics, &TrialMetrics)> = a
        .iter()
        .zip(b)
        .filter_map(|(x, y)| Some((x.as_ref()?, y.as_ref()?)))
        .collect();
    let n = pairs.len();
    if n < 2 {
        return Err(Error::InvalidParameter("need at least two paired trials".into()));
    }
    let nf = n as f64;
    let mean = |f: &dyn Fn(&(&TrialMetrics, &TrialMetrics)) -> f64| pairs.iter().map(f).sum::<f64>() / nf;
    let (pa, ra) = (mean(&|p| p.0.power), mean(&|p| p.0.sum_rate));
    let (pb, rb) = (mean(&|p| p.1.power), mean(&|p| p.1.sum_rate));
    let (eta_a, eta_b) = (ra / pa, rb / pb);
    let influence: Vec<f64> = pairs
        .iter()
        .map(|(x, y)| (x.sum_rate - eta_a * x.power) / pa - (y.sum_rate - eta_b * y.power) / pb)
        .collect();
    let var = influence.iter().map(|v| v * v).sum::<f64>() / (nf - 1.0);
    Ok(PairedComparison {
        difference: eta_a - eta_b,
        halfwidth: Z95 * (var / nf).sqrt(),
        pairs: n,
    })
}

/// Outcomes of every configured technique at every point for one trial.
fn run_trial(config: &ExperimentConfig, trial: u64) -> Vec<Vec<Option<TrialMetrics>>> {
    let Ok(realization) = Realization::draw(config, trial) else {
        return vec![vec![None; config.techniques.len()]; config.points.len()];
    };
    config
        .points
        .iter()
        .map(|&value| {
            let (gamma0, rate) = config.operating_point(value);
            let qos = QosTargets::uniform_rate(config.users, rate);
            config
                .techniques
                .iter()
                .map(|&t| {
                    let qos = qos.as_ref().ok()?;
                    evaluate(t, &realization, gamma0, qos, config).ok()
                })
                .collect()
        })
        .collect()
}

/// Runs every trial and summarizes each `(technique, point)`.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let trials = config.trials as u64;
    let per_trial: Vec<Vec<Vec<Option<TrialMetrics>>>> = match config.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?
            .install(|| (0..trials).into_par_iter().map(|i| run_trial(config, i)).collect()),
        None => (0..trials).into_par_iter().map(|i| run_trial(config, i)).collect(),
    };

    let mut rows = Vec::new();
    let mut samples = Vec::new();
    for (p, &value) in config.points.iter().enumerate() {
        for (ti, &technique) in config.techniques.iter().enumerate() {
            let outcomes: Vec<Option<TrialMetrics>> = per_trial.iter().map(|t| t[p][ti]).collect();
            rows.push(summarize(technique, value, &outcomes));
            samples.push(TechniqueSamples {
                technique,
                point: p,
                outcomes,
            });
        }
    }
    Ok(SweepResult {
        axis: config.axis,
        points: config.points.clone(),
        rows,
        samples,
    })
}

/// [`run_sweep`] over target rates.
pub fn sweep_rate(config: &ExperimentConfig) -> Result<SweepResult> {
    if config.axis != SweepAxis::Rate {
        return Err(Error::InvalidParameter("sweep_rate needs the rate axis".into()));
    }
    run_sweep(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(techniques: Vec<Technique>) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(2, 4, 4, SweepAxis::SnrDb, vec![0.0, 10.0]);
        c.techniques = techniques;
        c.trials = 12;
        c.master_seed = 7;
        c
    }

    #[test]
    fn technique_names_round_trip() {
        for t in Technique::ALL {
            assert_eq!(t.name().parse::<Technique>().unwrap(), t);
        }
        assert_eq!("opt_mc".parse::<Technique>().unwrap(), Technique::OptMc);
        assert_eq!("nmrt".parse::<Technique>().unwrap(), Technique::Nmrt);
        assert!("zf".parse::<Technique>().is_err());
    }

    #[test]
    fn validation() {
        let mut c = small(vec![Technique::Cidc]);
        assert!(c.validate().is_ok());
        c.trials = 0;
        assert!(c.validate().is_err());
        let mut c = small(vec![Technique::Cimrt]);
        c.users = 5;
        assert!(c.validate().is_err());
        c.techniques = vec![Technique::OptMc];
        assert!(c.validate().is_ok());
        let mut c = small(vec![Technique::Cidc]);
        c.order = 6;
        assert!(matches!(c.validate(), Err(Error::InvalidOrder(6))));
    }

    #[test]
    fn single_trial_matches_hand_driven_chain() {
        let mut c = small(vec![Technique::Cidc]);
        c.trials = 1;
        c.points = vec![10.0];
        let result = run_sweep(&c).unwrap();

        let mut rng = substream(7, 0);
        let h = generate_rayleigh(2, 4, 1.0, &mut rng).unwrap().scaled(10f64.sqrt());
        let d = SymbolVector::random(2, 4, &mut rng).unwrap();
        let qos = QosTargets::uniform_rate(2, 2.0).unwrap();
        let m = cidc_default(&h, &d, &qos).unwrap();

        let row = result.row(Technique::Cidc, 0).unwrap();
        assert_eq!(row.trials, 1);
        assert_eq!(row.failures, 0);
        assert!((row.mean_power - m.power()).abs() < 1e-12);
        assert!((row.mean_sum_rate - 4.0).abs() < 1e-12);
        assert!((row.eta - 4.0 / m.power()).abs() < 1e-9);
    }

    #[test]
    fn reruns_and_worker_counts_agree() {
        let mut c = small(vec![Technique::Crzf, Technique::Cimrt, Technique::Ccmc]);
        c.workers = Some(1);
        let a = run_sweep(&c).unwrap();
        c.workers = Some(3);
        let b = run_sweep(&c).unwrap();
        let again = run_sweep(&c).unwrap();
        assert_eq!(a, b);
        assert_eq!(b, again);
    }

    #[test]
    fn eta_is_ratio_of_stored_means() {
        let c = small(vec![Technique::Nmrt, Technique::Cidc]);
        let r = run_sweep(&c).unwrap();
        for row in &r.rows {
            assert!((row.eta - row.mean_sum_rate / row.mean_power).abs() <= 1e-9 * row.eta.abs());
        }
    }

    #[test]
    fn summary_of_known_samples() {
        let m = |power, sum_rate| {
            Some(TrialMetrics {
                power,
                sum_rate,
                errors: 1,
                symbols: 2,
                out_of_region: 0,
            })
        };
        let s = summarize(Technique::Cidc, 1.0, &[m(1.0, 2.0), None, m(3.0, 2.0)]);
        assert_eq!(s.failures, 1);
        assert_eq!(s.trials, 3);
        assert!((s.mean_power - 2.0).abs() < 1e-15);
        assert!((s.eta - 1.0).abs() < 1e-15);
        assert!((s.ser - 0.5).abs() < 1e-15);
        // influence (R - ηP)/P̄ = ±0.5, sample variance 0.5
        assert!((s.ci_halfwidth_eta - Z95 * (0.5f64 / 2.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn paired_difference_of_identical_samples_is_zero() {
        let c = small(vec![Technique::Cidc]);
        let r = run_sweep(&c).unwrap();
        let s = &r.samples(Technique::Cidc, 1).unwrap().outcomes;
        let cmp = paired_eta(s, s).unwrap();
        assert_eq!(cmp.difference, 0.0);
        assert_eq!(cmp.halfwidth, 0.0);
        assert!(!cmp.a_better());
        assert!(cmp.a_not_worse());
    }

    #[test]
    fn rate_axis_holds_channel_power() {
        let mut c = small(vec![Technique::Ccmc]);
        c.axis = SweepAxis::Rate;
        c.points = vec![0.5, 1.0, 2.0];
        let r = sweep_rate(&c).unwrap();
        // same channels, higher targets: power grows with ζ exactly
        let p: Vec<f64> = (0..3).map(|i| r.row(Technique::Ccmc, i).unwrap().mean_power).collect();
        let zeta = |x: f64| x.exp2() - 1.0;
        assert!((p[1] / p[0] - zeta(1.0) / zeta(0.5)).abs() < 1e-9);
        assert!((p[2] / p[0] - zeta(2.0) / zeta(0.5)).abs() < 1e-9);
        c.axis = SweepAxis::SnrDb;
        assert!(sweep_rate(&c).is_err());
    }
}
