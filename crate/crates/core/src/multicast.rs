//! Multicast precoding and its duality with constructive-interference downlink.
//!
//! * [`ccmc`]: least-norm `w` such that every user receives exactly
//!   `√ζ_j · d` for one common symbol `d`. Stationarity of the Lagrangian puts
//!   `w` in the row space of `H`, `w = Σ_j ν_j h_j^H`; substituting this into
//!   the `2K` real equality constraints gives a square real linear system in
//!   `(Re ν, Im ν)`.
//! * [`cidc`]: per-user symbols `d_j` are handled by running [`ccmc`] on the
//!   equivalent channel `A·H`, where `A` rotates every user onto a common
//!   reference symbol.
//! * [`optimal_multicast`]: `min tr(Q)` s.t. `h_j Q h_j^H ≥ ζ_j`, `Q ⪰ 0`,
//!   solved with a log-barrier method on its `K`-variable dual.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::ChannelMatrix;
use crate::constellation::{alignment_matrix, PskSymbol, SymbolVector};
use crate::linalg::{require_full_row_rank, CMatrix, CVector, RANK_TOLERANCE};
use crate::linkmodel::QosTargets;
use crate::{Error, Result};

/// Single beamforming vector `w = Σ_j ν_j h_j^H`.
#[derive(Debug, Clone, PartialEq)]
pub struct MulticastPrecoder {
    w: CVector,
    nu: Vec<Complex64>,
    power: f64,
}

impl MulticastPrecoder {
    pub fn w(&self) -> &CVector {
        &self.w
    }

    /// Combination coefficients with respect to the rows of the channel the
    /// precoder was solved on (the equivalent channel for CIDC).
    pub fn nu(&self) -> &[Complex64] {
        &self.nu
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    /// Multipliers of the imaginary-part constraints, `μ_j = −2 Im ν_j`.
    pub fn lagrange_mu(&self) -> Vec<f64> {
        self.nu.iter().map(|v| -2.0 * v.im).collect()
    }

    /// Multipliers of the real-part constraints, `α_j = −2 Re ν_j`.
    pub fn lagrange_alpha(&self) -> Vec<f64> {
        self.nu.iter().map(|v| -2.0 * v.re).collect()
    }
}

/// Real `2K × 2K` system for `(Re ν, Im ν)` obtained by substituting
/// `w = Σ_k ν_k h_k^H` into `Re{h_j w} = √ζ_j Re{d}` and `Im{h_j w} = √ζ_j Im{d}`.
/// Rows `0..K` are the real-part constraints, rows `K..2K` the imaginary ones.
pub fn ccmc_system(h: &ChannelMatrix, d: PskSymbol, qos: &QosTargets) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let k = h.users();
    if qos.len() != k {
        return Err(Error::DimensionMismatch(format!("{} targets for {} users", qos.len(), k)));
    }
    let gram = h.entries() * h.entries().adjoint();
    let dv = d.value();
    let mut m = DMatrix::<f64>::zeros(2 * k, 2 * k);
    let mut rhs = DVector::<f64>::zeros(2 * k);
    for j in 0..k {
        for l in 0..k {
            let g = gram[(j, l)];
            // h_j w = Σ_l g_jl (x_l + i y_l)
            m[(j, l)] = g.re;
            m[(j, k + l)] = -g.im;
            m[(k + j, l)] = g.im;
            m[(k + j, k + l)] = g.re;
        }
        let amp = qos.zeta()[j].sqrt();
        rhs[j] = amp * dv.re;
        rhs[k + j] = amp * dv.im;
    }
    Ok((m, rhs))
}

/// Constrained-constellation multicast: minimum `‖w‖²` with `h_j w = √ζ_j·d` for all users.
pub fn ccmc(h: &ChannelMatrix, d: PskSymbol, qos: &QosTargets) -> Result<MulticastPrecoder> {
    if h.row_norms().contains(&0.0) {
        return Err(Error::ZeroVector("channel row"));
    }
    require_full_row_rank(h.entries(), RANK_TOLERANCE)?;
    let (m, rhs) = ccmc_system(h, d, qos)?;
    let k = h.users();
    let x = m
        .lu()
        .solve(&rhs)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Infeasible("singular constraint system".into()))?;
    let nu: Vec<Complex64> = (0..k).map(|l| Complex64::new(x[l], x[k + l])).collect();
    let w = h.entries().adjoint() * CVector::from_column_slice(&nu);
    let power = w.norm_squared();
    Ok(MulticastPrecoder { w, nu, power })
}

/// Constructive-interference downlink precoder: `ccmc(A·H, reference, ζ)`,
/// which places user `j`'s noiseless sample exactly at `√ζ_j·d_j`.
pub fn cidc(h: &ChannelMatrix, d: &SymbolVector, qos: &QosTargets, reference: PskSymbol) -> Result<MulticastPrecoder> {
    if d.len() != h.users() {
        return Err(Error::DimensionMismatch(format!("{} symbols for {} users", d.len(), h.users())));
    }
    let alignment = alignment_matrix(d, reference)?;
    ccmc(&h.aligned(&alignment)?, reference, qos)
}

/// [`cidc`] with the first user's symbol as reference.
pub fn cidc_default(h: &ChannelMatrix, d: &SymbolVector, qos: &QosTargets) -> Result<MulticastPrecoder> {
    cidc(h, d, qos, d.get(0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalMulticastOptions {
    /// Cap on Newton steps across all barrier stages.
    pub max_iterations: usize,
    /// Stop once `tr(Q) − ζᵀλ ≤ rel_gap · tr(Q)`.
    pub rel_gap: f64,
}

/// Relative gap accepted when rounding stalls the barrier before `rel_gap`.
pub const FALLBACK_REL_GAP: f64 = 1e-4;
const CENTERING_STEPS: usize = 60;

impl Default for OptimalMulticastOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            rel_gap: 1e-6,
        }
    }
}

/// Optimal-covariance multicast solution with its dual certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSolution {
    pub q: CMatrix,
    pub power: f64,
    pub rank1_w: Option<CVector>,
    /// Dual multipliers `λ`, feasible for `Σ λ_j h_j^H h_j ⪯ I`.
    pub dual: Vec<f64>,
    /// `ζᵀλ`, a lower bound on the optimal power.
    pub lower_bound: f64,
    pub iterations: usize,
}

impl CovarianceSolution {
    pub fn gap(&self) -> f64 {
        self.power - self.lower_bound
    }

    pub fn with_rank_one<R: Rng + ?Sized>(
        mut self,
        h: &ChannelMatrix,
        qos: &QosTargets,
        randomizations: usize,
        rng: &mut R,
    ) -> Self {
        self.rank1_w = rank_one_extraction(&self.q, h, qos, randomizations, rng);
        self
    }
}

struct DualBarrier<'a> {
    rows: Vec<CVector>,
    zeta: &'a [f64],
    nt: usize,
}

struct DualPoint {
    s_inv: CMatrix,
}

impl DualBarrier<'_> {
    fn slack(&self, lambda: &[f64]) -> Option<DualPoint> {
        if lambda.iter().any(|l| !(*l > 0.0)) {
            return None;
        }
        let mut s = CMatrix::identity(self.nt, self.nt);
        for (h, l) in self.rows.iter().zip(lambda) {
            s -= (h * h.adjoint()).scale(*l);
        }
        let chol = s.cholesky()?;
        Some(DualPoint { s_inv: chol.inverse() })
    }

}

/// Solves `min tr(Q)` s.t. `h_j Q h_j^H ≥ ζ_j`, `Q ⪰ 0`.
///
/// Works on the dual `max ζᵀλ` s.t. `I − Σ λ_j h_j^H h_j ⪰ 0`, `λ ≥ 0`. At
/// barrier parameter `t` the centered dual point gives `Q = S^{-1}/t`, which is
/// strictly feasible with duality gap `(nt + K)/t`.
pub fn optimal_multicast(h: &ChannelMatrix, qos: &QosTargets, options: OptimalMulticastOptions) -> Result<CovarianceSolution> {
    let k = h.users();
    let nt = h.antennas();
    if qos.len() != k {
        return Err(Error::DimensionMismatch(format!("{} targets for {} users", qos.len(), k)));
    }
    if h.row_norms().contains(&0.0) {
        return Err(Error::ZeroVector("channel row"));
    }
    let rows: Vec<CVector> = (0..k).map(|j| h.entries().row(j).adjoint()).collect();
    let barrier = DualBarrier {
        rows,
        zeta: qos.zeta(),
        nt,
    };
    let mut lambda: Vec<f64> = h.row_norms().iter().map(|n| 0.5 / (k as f64 * n * n)).collect();
    let initial_bound: f64 = qos.zeta().iter().zip(&lambda).map(|(z, l)| z * l).sum();
    let mut t = (nt + k) as f64 / initial_bound;
    let mut iterations = 0usize;
    let mut best: Option<CovarianceSolution> = None;

    loop {
        // centering
        let mut point = barrier.slack(&lambda).expect("dual iterate stays strictly feasible");
        for _ in 0..CENTERING_STEPS {
            let u: Vec<CVector> = barrier.rows.iter().map(|r| &point.s_inv * r).collect();
            let mut grad = DVector::<f64>::zeros(k);
            let mut hess = DMatrix::<f64>::zeros(k, k);
            for a in 0..k {
                let qaa = barrier.rows[a].dotc(&u[a]).re;
                grad[a] = -t * barrier.zeta[a] + qaa - 1.0 / lambda[a];
                for b in 0..k {
                    hess[(a, b)] = barrier.rows[a].dotc(&u[b]).norm_sqr();
                }
                hess[(a, a)] += 1.0 / (lambda[a] * lambda[a]);
            }
            let Some(step) = hess.cholesky().map(|c| -c.solve(&grad)) else {
                break;
            };
            let decrement = (-grad.dot(&step)).max(0.0).sqrt();
            if decrement * decrement / 2.0 < 1e-10 {
                break;
            }
            iterations += 1;
            if iterations > options.max_iterations {
                let best = best.ok_or(Error::NonConvergence {
                    iterations: options.max_iterations,
                    best_power: f64::INFINITY,
                    gap: f64::INFINITY,
                })?;
                return Err(Error::NonConvergence {
                    iterations: options.max_iterations,
                    best_power: best.power,
                    gap: best.gap(),
                });
            }
            // damped step of the self-concordant barrier; full steps near the center
            let mut s = if decrement > 0.25 { 1.0 / (1.0 + decrement) } else { 1.0 };
            let mut accepted = false;
            while s > 1e-12 {
                let cand: Vec<f64> = lambda.iter().zip(step.iter()).map(|(l, d)| l + s * d).collect();
                if let Some(p) = barrier.slack(&cand) {
                    lambda = cand;
                    point = p;
                    accepted = true;
                    break;
                }
                s *= 0.5;
            }
            if !accepted {
                break;
            }
        }

        let solution = primal_from_dual(h, qos, &point.s_inv, t, &lambda, iterations);
        if solution.gap() <= options.rel_gap * solution.power {
            return Ok(solution);
        }
        let floor = 1e-3 * options.rel_gap * solution.power;
        if best.as_ref().is_none_or(|b| solution.gap() < b.gap()) {
            best = Some(solution);
        }
        // the central path gap is below what rounding lets the recovery certify
        if ((nt + k) as f64) / t < floor {
            let best = best.expect("set above");
            if best.gap() <= FALLBACK_REL_GAP * best.power {
                return Ok(best);
            }
            return Err(Error::NonConvergence {
                iterations,
                best_power: best.power,
                gap: best.gap(),
            });
        }
        t *= 10.0;
    }
}

fn primal_from_dual(
    h: &ChannelMatrix,
    qos: &QosTargets,
    s_inv: &CMatrix,
    t: f64,
    lambda: &[f64],
    iterations: usize,
) -> CovarianceSolution {
    let mut q = s_inv.unscale(t);
    // enforce exact Hermitian symmetry
    q = (&q + q.adjoint()).unscale(2.0);
    // inexact centering may leave a constraint marginally short
    let mut scale = 1.0f64;
    for (j, z) in qos.zeta().iter().enumerate() {
        let row = h.entries().row(j);
        let got = (row * &q * row.adjoint())[(0, 0)].re;
        scale = scale.max(z / got);
    }
    q = q.scale(scale);
    let power = q.trace().re;
    let lower_bound = qos.zeta().iter().zip(lambda).map(|(z, l)| z * l).sum();
    CovarianceSolution {
        q,
        power,
        rank1_w: None,
        dual: lambda.to_vec(),
        lower_bound,
        iterations,
    }
}

/// Scales `w` up to the smallest multiple meeting every SNR target.
fn rescale_to_feasible(w: CVector, h: &ChannelMatrix, qos: &QosTargets) -> Option<CVector> {
    let gains = h.entries() * &w;
    let mut factor = 0.0f64;
    for (g, z) in gains.iter().zip(qos.zeta()) {
        let p = g.norm_sqr();
        if p < 1e-300 {
            return None;
        }
        factor = factor.max(z / p);
    }
    Some(w.scale(factor.sqrt()))
}

/// Rank-one beamformer from a covariance: principal eigenvector plus Gaussian
/// randomizations `U Λ^{1/2} e`, each rescaled to feasibility; the lowest-power
/// candidate wins.
pub fn rank_one_extraction<R: Rng + ?Sized>(
    q: &CMatrix,
    h: &ChannelMatrix,
    qos: &QosTargets,
    randomizations: usize,
    rng: &mut R,
) -> Option<CVector> {
    let n = q.nrows();
    let eig = q.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = order[0];
    let principal = eig
        .eigenvectors
        .column(top)
        .scale(eig.eigenvalues[top].max(0.0).sqrt());
    let mut best = rescale_to_feasible(principal, h, qos);

    let roots: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
    let amp = std::f64::consts::FRAC_1_SQRT_2;
    for _ in 0..randomizations {
        let e = CVector::from_fn(n, |i, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(amp * re * roots[i], amp * im * roots[i])
        });
        let cand = &eig.eigenvectors * e;
        if let Some(c) = rescale_to_feasible(cand, h, qos) {
            if best.as_ref().is_none_or(|b| c.norm_squared() < b.norm_squared()) {
                best = Some(c);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::generate_rayleigh;
    use crate::linalg::{c, hermitian_pd_inverse};
    use crate::rng::seeded;

    fn psk(index: usize, order: u32) -> PskSymbol {
        PskSymbol::new(index, order).unwrap()
    }

    fn identity_channel(k: usize) -> ChannelMatrix {
        ChannelMatrix::new(CMatrix::identity(k, k)).unwrap()
    }

    /// Least-norm solution of `H w = b` through the complex pseudo-inverse.
    fn pinv_solution(h: &ChannelMatrix, b: &CVector) -> CVector {
        let gram = h.entries() * h.entries().adjoint();
        h.entries().adjoint() * hermitian_pd_inverse(&gram).unwrap() * b
    }

    #[test]
    fn ccmc_orthonormal_channel() {
        let qos = QosTargets::new(vec![1.0, 4.0]).unwrap();
        let m = ccmc(&identity_channel(2), psk(0, 4), &qos).unwrap();
        assert!((m.w()[0] - c(1.0, 0.0)).norm() < 1e-14);
        assert!((m.w()[1] - c(2.0, 0.0)).norm() < 1e-14);
        assert!((m.power() - 5.0).abs() < 1e-12);
        // ν_j = 1/‖h_j‖² · √ζ_j d for orthogonal rows
        assert_eq!(m.lagrange_alpha(), vec![-2.0, -4.0]);
        assert_eq!(m.lagrange_mu(), vec![0.0, 0.0]);
    }

    #[test]
    fn ccmc_is_least_norm_and_exact() {
        let mut rng = seeded(17);
        for trial in 0..40 {
            let k = 2 + trial % 3;
            let h = generate_rayleigh(k, 4, 1.0, &mut rng).unwrap();
            let d = psk(trial % 8, 8);
            let zeta: Vec<f64> = (0..k).map(|j| 0.5 + j as f64).collect();
            let qos = QosTargets::new(zeta.clone()).unwrap();
            let m = ccmc(&h, d, &qos).unwrap();

            let y = h.entries() * m.w();
            for j in 0..k {
                assert!((y[j] - d.value() * zeta[j].sqrt()).norm() < 1e-10);
            }
            let b = CVector::from_fn(k, |j, _| d.value() * zeta[j].sqrt());
            let oracle = pinv_solution(&h, &b);
            assert!((m.w() - &oracle).norm() < 1e-10 * oracle.norm());
            assert!((m.power() - m.w().norm_squared()).abs() < 1e-12);

            // w lies in the row space of H
            let proj = pinv_solution(&h, &(h.entries() * m.w()));
            assert!((m.w() - proj).norm() < 1e-9 * m.w().norm());
            let from_nu = h.entries().adjoint() * CVector::from_column_slice(m.nu());
            assert!((m.w() - from_nu).norm() < 1e-10 * m.w().norm());
        }
    }

    #[test]
    fn ccmc_rejects_rank_deficient_and_mismatched() {
        let h = ChannelMatrix::from_rows(&[vec![c(1.0, 0.0), c(0.0, 1.0)], vec![c(2.0, 0.0), c(0.0, 2.0)]]).unwrap();
        let qos = QosTargets::new(vec![1.0, 1.0]).unwrap();
        assert!(matches!(ccmc(&h, psk(0, 4), &qos), Err(Error::DegenerateChannel { .. })));
        let qos3 = QosTargets::new(vec![1.0; 3]).unwrap();
        assert!(ccmc(&identity_channel(2), psk(0, 4), &qos3).is_err());
    }

    #[test]
    fn cidc_equals_ccmc_on_aligned_channel() {
        let mut rng = seeded(23);
        for trial in 0..30 {
            let k = 2 + trial % 3;
            let order = if trial % 2 == 0 { 4 } else { 8 };
            let h = generate_rayleigh(k, 4, 1.0, &mut rng).unwrap();
            let d = SymbolVector::random(k, order, &mut rng).unwrap();
            let qos = QosTargets::new((0..k).map(|j| 1.0 + j as f64).collect()).unwrap();
            let reference = psk(trial % order as usize, order);
            let a = cidc(&h, &d, &qos, reference).unwrap();
            let aligned = h.aligned(&alignment_matrix(&d, reference).unwrap()).unwrap();
            let b = ccmc(&aligned, reference, &qos).unwrap();
            assert!((a.w() - b.w()).camax() < 1e-10);

            let y = h.entries() * a.w();
            for j in 0..k {
                assert!((y[j] - d.get(j).value() * qos.zeta()[j].sqrt()).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn cidc_orthonormal_example() {
        let d = SymbolVector::from_indices(&[0, 1], 4).unwrap();
        let qos = QosTargets::new(vec![1.0, 1.0]).unwrap();
        let m = cidc_default(&identity_channel(2), &d, &qos).unwrap();
        assert!((m.w()[0] - c(1.0, 0.0)).norm() < 1e-14);
        assert!((m.w()[1] - c(0.0, 1.0)).norm() < 1e-14);
        assert!((m.power() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn covariance_single_user_closed_form() {
        let h = generate_rayleigh(1, 4, 1.0, &mut seeded(4)).unwrap();
        let qos = QosTargets::new(vec![3.0]).unwrap();
        let sol = optimal_multicast(&h, &qos, OptimalMulticastOptions::default()).unwrap();
        let expected = 3.0 / (h.row_norms()[0] * h.row_norms()[0]);
        assert!((sol.power - expected).abs() < 1e-5 * expected);
        assert!(sol.gap() <= 1e-6 * sol.power * 1.0001);
    }

    #[test]
    fn covariance_orthogonal_users() {
        let qos = QosTargets::new(vec![1.0, 2.0, 0.5]).unwrap();
        let sol = optimal_multicast(&identity_channel(3), &qos, OptimalMulticastOptions::default()).unwrap();
        assert!((sol.power - 3.5).abs() < 1e-5);
        for j in 0..3 {
            assert!((sol.q[(j, j)].re - qos.zeta()[j]).abs() < 1e-4);
        }
    }

    #[test]
    fn covariance_is_feasible_certified_and_dominates_ccmc() {
        let mut rng = seeded(29);
        for trial in 0..20 {
            let k = 2 + trial % 3;
            let h = generate_rayleigh(k, 4, 1.0, &mut rng).unwrap();
            let qos = QosTargets::new((0..k).map(|j| 0.5 + 1.5 * j as f64).collect()).unwrap();
            let sol = optimal_multicast(&h, &qos, OptimalMulticastOptions::default()).unwrap();

            assert!(sol.lower_bound <= sol.power);
            assert!(sol.gap() <= FALLBACK_REL_GAP * sol.power);
            assert!(sol.dual.iter().all(|l| *l > 0.0));
            let eig = sol.q.clone().symmetric_eigen();
            assert!(eig.eigenvalues.iter().all(|l| *l > -1e-12));
            for j in 0..k {
                let row = h.entries().row(j);
                let got = (row * &sol.q * row.adjoint())[(0, 0)].re;
                assert!(got >= qos.zeta()[j] * (1.0 - 1e-9));
            }
            let m = ccmc(&h, psk(0, 4), &qos).unwrap();
            assert!(sol.power <= m.power() + 1e-6);
        }
    }

    #[test]
    fn covariance_handles_more_users_than_antennas() {
        let h = generate_rayleigh(5, 2, 1.0, &mut seeded(6)).unwrap();
        let qos = QosTargets::new(vec![1.0; 5]).unwrap();
        let sol = optimal_multicast(&h, &qos, OptimalMulticastOptions::default()).unwrap();
        assert!(sol.gap() <= FALLBACK_REL_GAP * sol.power);
    }

    #[test]
    fn rank_one_beam_is_feasible_and_not_below_bound() {
        let mut rng = seeded(33);
        for _ in 0..10 {
            let h = generate_rayleigh(3, 4, 1.0, &mut rng).unwrap();
            let qos = QosTargets::new(vec![1.0, 2.0, 1.5]).unwrap();
            let sol = optimal_multicast(&h, &qos, OptimalMulticastOptions::default())
                .unwrap()
                .with_rank_one(&h, &qos, 16, &mut rng);
            let w = sol.rank1_w.as_ref().unwrap();
            let y = h.entries() * w;
            for j in 0..3 {
                assert!(y[j].norm_sqr() >= qos.zeta()[j] * (1.0 - 1e-9));
            }
            assert!(w.norm_squared() >= sol.lower_bound * (1.0 - 1e-9));
        }
    }

    #[test]
    fn rank_one_of_rank_one_covariance_is_exact() {
        let h = identity_channel(2);
        let qos = QosTargets::new(vec![1.0, 1.0]).unwrap();
        let v = CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 1.0)]);
        let q = &v * v.adjoint();
        let w = rank_one_extraction(&q, &h, &qos, 0, &mut seeded(1)).unwrap();
        assert!((w.norm_squared() - 2.0).abs() < 1e-12);
    }
}
