//! Received-signal synthesis, M-PSK detection and energy-efficiency metrics.

use std::f64::consts::TAU;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::channel::ChannelMatrix;
use crate::constellation::SymbolVector;
use crate::downlink::PerUserPrecoder;
use crate::multicast::MulticastPrecoder;
use crate::{Error, Result};

/// Receiver noise variance; SNR is steered through the channel power and targets.
pub const NOISE_VARIANCE: f64 = 1.0;

/// Per-user SNR targets `ζ_j` (linear).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QosTargets {
    zeta: Vec<f64>,
}

impl QosTargets {
    pub fn new(zeta: Vec<f64>) -> Result<Self> {
        if zeta.is_empty() {
            return Err(Error::InvalidParameter("no SNR targets".into()));
        }
        if zeta.iter().any(|z| !(*z > 0.0) || !z.is_finite()) {
            return Err(Error::InvalidParameter("SNR targets must be positive and finite".into()));
        }
        Ok(Self { zeta })
    }

    /// Targets from rates, `ζ = 2^R − 1`.
    pub fn from_rates(rates: &[f64]) -> Result<Self> {
        Self::new(rates.iter().map(|r| r.exp2() - 1.0).collect())
    }

    pub fn uniform_rate(users: usize, rate: f64) -> Result<Self> {
        Self::from_rates(&vec![rate; users])
    }

    pub fn zeta(&self) -> &[f64] {
        &self.zeta
    }

    /// `R_j = log2(1 + ζ_j)`.
    pub fn rates(&self) -> Vec<f64> {
        self.zeta.iter().map(|z| (1.0 + z).log2()).collect()
    }

    pub fn len(&self) -> usize {
        self.zeta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zeta.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.zeta.iter().map(|z| z * factor).collect())
    }
}

/// Either per-user beams with powers, or a single symbol-dependent vector
/// whose norm carries the power.
#[derive(Debug, Clone)]
pub enum PrecoderOutput {
    PerUser(PerUserPrecoder),
    SingleVector(MulticastPrecoder),
}

impl PrecoderOutput {
    pub fn antennas(&self) -> usize {
        match self {
            Self::PerUser(p) => p.antennas(),
            Self::SingleVector(m) => m.w().len(),
        }
    }

    /// `tr(W P W^H)` or `‖w‖²`.
    pub fn total_power(&self) -> f64 {
        match self {
            Self::PerUser(p) => p.total_power(),
            Self::SingleVector(m) => m.w().norm_squared(),
        }
    }
}

impl From<PerUserPrecoder> for PrecoderOutput {
    fn from(p: PerUserPrecoder) -> Self {
        Self::PerUser(p)
    }
}

impl From<MulticastPrecoder> for PrecoderOutput {
    fn from(m: MulticastPrecoder) -> Self {
        Self::SingleVector(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedVector {
    pub y: Vec<Complex64>,
    pub noise_variance: f64,
}

/// `y = H W P^{1/2} d + z`, or `y_j = h_j w + z_j` for a single vector.
pub fn received_signal(
    h: &ChannelMatrix,
    precoder: &PrecoderOutput,
    d: &SymbolVector,
    noise: Option<&[Complex64]>,
) -> Result<ReceivedVector> {
    let users = h.users();
    if precoder.antennas() != h.antennas() {
        return Err(Error::DimensionMismatch(format!(
            "precoder for {} antennas on a {}-antenna channel",
            precoder.antennas(),
            h.antennas()
        )));
    }
    if let Some(z) = noise {
        if z.len() != users {
            return Err(Error::DimensionMismatch(format!("{} noise samples for {} users", z.len(), users)));
        }
    }
    let clean = match precoder {
        PrecoderOutput::PerUser(p) => {
            if p.users() != users || d.len() != users {
                return Err(Error::DimensionMismatch(format!(
                    "{} streams and {} symbols for {} users",
                    p.users(),
                    d.len(),
                    users
                )));
            }
            h.entries() * p.effective() * DVector::from_vec(d.values())
        }
        PrecoderOutput::SingleVector(m) => h.entries() * m.w(),
    };
    let y = clean
        .iter()
        .enumerate()
        .map(|(j, v)| v + noise.map_or(Complex64::new(0.0, 0.0), |z| z[j]))
        .collect();
    Ok(ReceivedVector {
        y,
        noise_variance: NOISE_VARIANCE,
    })
}

/// Hard decisions; zero samples are erasures and get index 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Detection {
    pub indices: Vec<usize>,
    pub erasures: Vec<bool>,
}

impl Detection {
    /// Symbol errors against `sent`; erasures count as errors.
    pub fn errors(&self, sent: &[usize]) -> u64 {
        self.indices
            .iter()
            .zip(&self.erasures)
            .zip(sent)
            .filter(|((got, erased), want)| **erased || got != want)
            .count() as u64
    }
}

/// Nearest-angle M-PSK detection, ties toward the lower index.
pub fn detect(y: &ReceivedVector, order: u32) -> Result<Detection> {
    if order < 2 || !order.is_power_of_two() {
        return Err(Error::InvalidOrder(order));
    }
    let m = order as usize;
    let mut indices = Vec::with_capacity(y.y.len());
    let mut erasures = Vec::with_capacity(y.y.len());
    for v in &y.y {
        if v.norm() == 0.0 {
            indices.push(0);
            erasures.push(true);
            continue;
        }
        let pos = v.arg().rem_euclid(TAU) / TAU * m as f64;
        let lo = pos.floor();
        let frac = pos - lo;
        let lo_idx = lo as usize % m;
        let hi_idx = (lo as usize + 1) % m;
        let idx = if frac < 0.5 {
            lo_idx
        } else if frac > 0.5 {
            hi_idx
        } else {
            lo_idx.min(hi_idx)
        };
        indices.push(idx);
        erasures.push(false);
    }
    Ok(Detection { indices, erasures })
}

/// Symbol error counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct SerEstimate {
    pub errors: u64,
    pub symbols: u64,
}

impl SerEstimate {
    pub fn rate(&self) -> f64 {
        if self.symbols == 0 {
            0.0
        } else {
            self.errors as f64 / self.symbols as f64
        }
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            errors: self.errors + other.errors,
            symbols: self.symbols + other.symbols,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MetricsRecord {
    pub total_power: f64,
    pub per_user_rate: Vec<f64>,
    /// `Σ_j R_j / P_tot`.
    pub eta: f64,
    pub ser: SerEstimate,
}

impl MetricsRecord {
    pub fn sum_rate(&self) -> f64 {
        self.per_user_rate.iter().sum()
    }
}

pub fn metrics(precoder: &PrecoderOutput, achieved_snr: &[f64], ser: SerEstimate) -> Result<MetricsRecord> {
    if achieved_snr.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::InvalidParameter("achieved SNR must be nonnegative".into()));
    }
    if ser.errors > ser.symbols {
        return Err(Error::InvalidParameter("more symbol errors than symbols".into()));
    }
    let total_power = precoder.total_power();
    if !(total_power > 0.0) {
        return Err(Error::InvalidParameter("zero total transmit power".into()));
    }
    let per_user_rate: Vec<f64> = achieved_snr.iter().map(|s| (1.0 + s).log2()).collect();
    let eta = per_user_rate.iter().sum::<f64>() / total_power;
    Ok(MetricsRecord {
        total_power,
        per_user_rate,
        eta,
        ser,
    })
}

/// `|y_j|² / σ²` of the noiseless received signal.
pub fn received_snr(y: &ReceivedVector) -> Vec<f64> {
    y.y.iter().map(|v| v.norm_sqr() / y.noise_variance).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::PskSymbol;
    use crate::linalg::{c, CMatrix};
    use crate::multicast::cidc_default;
    use proptest::prelude::*;

    fn rv(y: Vec<Complex64>) -> ReceivedVector {
        ReceivedVector {
            y,
            noise_variance: NOISE_VARIANCE,
        }
    }

    #[test]
    fn qos_from_rates() {
        let q = QosTargets::from_rates(&[1.0, 2.0]).unwrap();
        assert_eq!(q.zeta(), &[1.0, 3.0]);
        assert_eq!(q.rates(), vec![1.0, 2.0]);
        assert!(QosTargets::new(vec![]).is_err());
        assert!(QosTargets::new(vec![0.0]).is_err());
        assert_eq!(QosTargets::uniform_rate(3, 1.0).unwrap().zeta(), &[1.0; 3]);
        assert_eq!(q.scaled(2.0).unwrap().zeta(), &[2.0, 6.0]);
    }

    #[test]
    fn detect_qpsk_points() {
        let y = rv(vec![c(1.0, 0.1), c(-0.1, 2.0), c(-3.0, 0.0), c(0.2, -1.0), c(0.0, 0.0)]);
        let det = detect(&y, 4).unwrap();
        assert_eq!(det.indices, vec![0, 1, 2, 3, 0]);
        assert_eq!(det.erasures, vec![false, false, false, false, true]);
        assert_eq!(det.errors(&[0, 1, 2, 3, 0]), 1);
        assert_eq!(det.errors(&[0, 1, 2, 0, 0]), 2);
        assert!(detect(&y, 3).is_err());
    }

    #[test]
    fn detect_boundary_ties_go_low() {
        // exactly between symbols 0 and 1 of QPSK
        let y = rv(vec![c(1.0, 1.0)]);
        assert_eq!(detect(&y, 4).unwrap().indices, vec![0]);
    }

    proptest! {
        #[test]
        fn detect_inverts_symbols(index in 0usize..16, scale in 1e-3f64..1e3, jitter in -0.99f64..0.99) {
            let order = 16;
            let s = PskSymbol::new(index, order).unwrap();
            let y = rv(vec![crate::linalg::cis(s.phase() + jitter * s.half_sector()) * scale]);
            prop_assert_eq!(detect(&y, order).unwrap().indices, vec![index]);
        }
    }

    #[test]
    fn received_signal_per_user_and_multicast() {
        let h = ChannelMatrix::new(CMatrix::identity(2, 2)).unwrap();
        let d = SymbolVector::from_indices(&[0, 1], 4).unwrap();
        let per_user = crate::downlink::nmrt(&h).unwrap().with_powers(vec![4.0, 1.0]).unwrap();
        let y = received_signal(&h, &per_user.into(), &d, None).unwrap();
        assert!((y.y[0] - c(2.0, 0.0)).norm() < 1e-15);
        assert!((y.y[1] - c(0.0, 1.0)).norm() < 1e-15);

        let qos = QosTargets::new(vec![1.0, 1.0]).unwrap();
        let m: PrecoderOutput = cidc_default(&h, &d, &qos).unwrap().into();
        let noise = [c(0.5, 0.0), c(0.0, -0.5)];
        let y = received_signal(&h, &m, &d, Some(&noise)).unwrap();
        assert!((y.y[0] - c(1.5, 0.0)).norm() < 1e-14);
        assert!((y.y[1] - c(0.0, 0.5)).norm() < 1e-14);
        assert!((m.total_power() - 2.0).abs() < 1e-12);
        assert!(received_signal(&h, &m, &d, Some(&noise[..1])).is_err());
    }

    #[test]
    fn metrics_efficiency() {
        let h = ChannelMatrix::new(CMatrix::identity(2, 2)).unwrap();
        let p: PrecoderOutput = crate::downlink::nmrt(&h).unwrap().with_powers(vec![1.0, 3.0]).unwrap().into();
        let ser = SerEstimate { errors: 1, symbols: 4 };
        let m = metrics(&p, &[1.0, 3.0], ser).unwrap();
        assert_eq!(m.per_user_rate, vec![1.0, 2.0]);
        assert!((m.sum_rate() - 3.0).abs() < 1e-15);
        assert!((m.eta - 0.75).abs() < 1e-15);
        assert_eq!(m.ser.rate(), 0.25);
        assert!(metrics(&p, &[-1.0, 1.0], ser).is_err());
        assert!(metrics(&p, &[1.0, 1.0], SerEstimate { errors: 5, symbols: 4 }).is_err());
        assert_eq!(received_snr(&rv(vec![c(3.0, 4.0)])), vec![25.0]);
    }

    #[test]
    fn ser_merge() {
        let a = SerEstimate { errors: 1, symbols: 10 };
        let b = SerEstimate { errors: 3, symbols: 30 };
        assert_eq!(a.merge(b), SerEstimate { errors: 4, symbols: 40 });
        assert_eq!(SerEstimate::default().rate(), 0.0);
    }
}
