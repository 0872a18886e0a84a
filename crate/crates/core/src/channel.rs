//! Channel matrices, correlation factors and the SVD factorization used by CIMRT.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::constellation::AlignmentMatrix;
use crate::linalg::{complete_unitary_rows, require_full_row_rank, CMatrix, RANK_TOLERANCE};
use crate::{Error, Result};

/// `K × nt` matrix whose row `j` is the channel of user `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    entries: CMatrix,
    row_norms: Vec<f64>,
    avg_power: f64,
}

impl ChannelMatrix {
    pub fn new(entries: CMatrix) -> Result<Self> {
        Self::with_avg_power(entries, 1.0)
    }

    pub fn with_avg_power(entries: CMatrix, avg_power: f64) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(Error::DimensionMismatch("channel must be at least 1x1".into()));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParameter("channel entries must be finite".into()));
        }
        let row_norms = (0..entries.nrows()).map(|j| entries.row(j).norm()).collect();
        Ok(Self {
            entries,
            row_norms,
            avg_power,
        })
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let nt = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != nt) {
            return Err(Error::DimensionMismatch("channel rows differ in length".into()));
        }
        let flat: Vec<Complex64> = rows.iter().flatten().copied().collect();
        Self::new(DMatrix::from_row_slice(rows.len(), nt, &flat))
    }

    pub fn users(&self) -> usize {
        self.entries.nrows()
    }

    pub fn antennas(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn row_norms(&self) -> &[f64] {
        &self.row_norms
    }

    pub fn avg_power(&self) -> f64 {
        self.avg_power
    }

    pub fn row(&self, j: usize) -> Vec<Complex64> {
        self.entries.row(j).iter().copied().collect()
    }

    /// Channel with every entry multiplied by `amplitude` (average power scales by its square).
    pub fn scaled(&self, amplitude: f64) -> Self {
        Self {
            entries: self.entries.scale(amplitude),
            row_norms: self.row_norms.iter().map(|n| n * amplitude).collect(),
            avg_power: self.avg_power * amplitude * amplitude,
        }
    }

    /// Equivalent channel `A · H`.
    pub fn aligned(&self, alignment: &AlignmentMatrix) -> Result<Self> {
        Self::with_avg_power(alignment.apply(&self.entries)?, self.avg_power)
    }

    fn require_nonzero_rows(&self) -> Result<()> {
        if self.row_norms.contains(&0.0) {
            return Err(Error::ZeroVector("channel row"));
        }
        Ok(())
    }
}

/// Draws an i.i.d. circularly-symmetric Gaussian channel with per-entry
/// variance `gamma0`. Entries are drawn row by row, real part first.
pub fn generate_rayleigh<R: Rng + ?Sized>(
    users: usize,
    antennas: usize,
    gamma0: f64,
    rng: &mut R,
) -> Result<ChannelMatrix> {
    if !(gamma0 > 0.0) || !gamma0.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "average channel power must be positive, got {gamma0}"
        )));
    }
    if users == 0 || antennas == 0 {
        return Err(Error::DimensionMismatch("channel must be at least 1x1".into()));
    }
    let sigma = (gamma0 / 2.0).sqrt();
    let mut flat = Vec::with_capacity(users * antennas);
    for _ in 0..users * antennas {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        flat.push(Complex64::new(sigma * re, sigma * im));
    }
    ChannelMatrix::with_avg_power(DMatrix::from_row_slice(users, antennas, &flat), gamma0)
}

/// `ρ_jk = h_j h_k^H / (‖h_j‖ ‖h_k‖)`.
pub fn cross_correlation(h: &ChannelMatrix) -> Result<CMatrix> {
    h.require_nonzero_rows()?;
    let k = h.users();
    let gram = h.entries() * h.entries().adjoint();
    let norms = h.row_norms();
    Ok(CMatrix::from_fn(k, k, |a, b| {
        if a == b {
            Complex64::new(1.0, 0.0)
        } else {
            gram[(a, b)] / (norms[a] * norms[b])
        }
    }))
}

/// Largest off-diagonal `|ρ_jk|`, 0 for a single user.
pub fn max_cross_correlation(h: &ChannelMatrix) -> Result<f64> {
    let rho = cross_correlation(h)?;
    let k = h.users();
    let mut worst = 0.0f64;
    for a in 0..k {
        for b in 0..k {
            if a != b {
                worst = worst.max(rho[(a, b)].norm());
            }
        }
    }
    Ok(worst)
}

/// `ψ = h · w / (‖h‖ ‖w‖)` for a channel row `h` and a precoding column `w`.
pub fn normalized_interference(h_row: &[Complex64], w_col: &[Complex64]) -> Result<Complex64> {
    if h_row.len() != w_col.len() {
        return Err(Error::DimensionMismatch(format!(
            "channel row of length {} against precoder of length {}",
            h_row.len(),
            w_col.len()
        )));
    }
    let hn = h_row.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let wn = w_col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if hn == 0.0 {
        return Err(Error::ZeroVector("channel row"));
    }
    if wn == 0.0 {
        return Err(Error::ZeroVector("precoding column"));
    }
    let dot: Complex64 = h_row.iter().zip(w_col).map(|(a, b)| a * b).sum();
    Ok(dot / (hn * wn))
}

/// SVD-based view of the matched-filter precoder, `H = S·V·D`.
///
/// `vp` is chosen so that `D^H·vp·S^H` equals the matched-filter precoder
/// `H^H diag(1/‖h_k‖)` exactly; then `G·B = H·W_MRT` and
/// `‖g_j‖·ξ_jk = ‖h_j‖·ρ_jk`. When all users have equal channel norm `c`,
/// `vp` reduces to `V^T / c`.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    /// Left singular vectors, `K × K` unitary.
    pub s: CMatrix,
    /// Diagonal of `V`, descending.
    pub singular_values: Vec<f64>,
    /// Right singular vectors, `nt × nt` unitary.
    pub d: CMatrix,
    /// Power-scaled `V`, `nt × K`.
    pub vp: CMatrix,
    /// `G = S·V·vp`, `K × K`.
    pub g: CMatrix,
    /// Initial rotation factor `B = S^H`.
    pub b: CMatrix,
    /// `D^H·vp`, so that any precoder of the family is `mrt_basis · B'`.
    pub mrt_basis: CMatrix,
}

impl SvdFactors {
    pub fn users(&self) -> usize {
        self.s.nrows()
    }

    /// `K × nt` rectangular diagonal matrix of singular values.
    pub fn v(&self) -> DMatrix<f64> {
        let k = self.s.nrows();
        let nt = self.d.nrows();
        DMatrix::from_fn(k, nt, |r, c| if r == c { self.singular_values[r] } else { 0.0 })
    }

    pub fn g_row_norms(&self) -> Vec<f64> {
        (0..self.g.nrows()).map(|j| self.g.row(j).norm()).collect()
    }

    /// `ξ_jk = g_j · b_k / ‖g_j‖` for the rotation factor `b`.
    pub fn xi(&self, b: &CMatrix) -> CMatrix {
        let norms = self.g_row_norms();
        let mut gb = &self.g * b;
        for (j, n) in norms.iter().enumerate() {
            gb.row_mut(j).unscale_mut(*n);
        }
        gb
    }
}

/// Factorizes a full-row-rank channel. Each left singular vector is rotated so
/// that its largest-magnitude entry is real and positive.
pub fn svd_factor(h: &ChannelMatrix) -> Result<SvdFactors> {
    h.require_nonzero_rows()?;
    require_full_row_rank(h.entries(), RANK_TOLERANCE)?;
    let k = h.users();
    let nt = h.antennas();

    let svd = h.entries().clone().svd(true, true);
    let mut s = svd.u.expect("left singular vectors requested");
    let mut v_t = svd.v_t.expect("right singular vectors requested");
    let singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();

    for i in 0..k {
        let (_, pivot) = s
            .column(i)
            .iter()
            .enumerate()
            .fold((0.0f64, Complex64::new(1.0, 0.0)), |(best, z), (_, x)| {
                if x.norm() > best {
                    (x.norm(), *x)
                } else {
                    (best, z)
                }
            });
        let phase = Complex64::from_polar(1.0, pivot.arg());
        for r in 0..k {
            s[(r, i)] *= phase.conj();
        }
        for c in 0..nt {
            v_t[(i, c)] *= phase;
        }
    }

    let d = complete_unitary_rows(&v_t);

    let mut v_t_rect = CMatrix::zeros(nt, k);
    for (i, sv) in singular_values.iter().enumerate() {
        v_t_rect[(i, i)] = Complex64::new(*sv, 0.0);
    }
    let inv_norms = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        k,
        h.row_norms().iter().map(|n| Complex64::new(1.0 / n, 0.0)),
    ));
    let vp = &v_t_rect * s.adjoint() * &inv_norms * &s;
    let mrt_basis = d.adjoint() * &vp;

    let mut v_rect = CMatrix::zeros(k, nt);
    for (i, sv) in singular_values.iter().enumerate() {
        v_rect[(i, i)] = Complex64::new(*sv, 0.0);
    }
    let g = &s * v_rect * &vp;
    let b = s.adjoint();

    Ok(SvdFactors {
        s,
        singular_values,
        d,
        vp,
        g,
        b,
        mrt_basis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, identity_deviation, max_abs_diff};
    use crate::rng::seeded;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn h2x2() -> ChannelMatrix {
        ChannelMatrix::from_rows(&[
            vec![c(1.0, 0.0), c(0.0, 0.0)],
            vec![c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)],
        ])
        .unwrap()
    }

    #[test]
    fn rayleigh_is_deterministic_per_seed() {
        let a = generate_rayleigh(3, 4, 2.0, &mut seeded(11)).unwrap();
        let b = generate_rayleigh(3, 4, 2.0, &mut seeded(11)).unwrap();
        assert_eq!(a, b);
        let c2 = generate_rayleigh(3, 4, 2.0, &mut seeded(12)).unwrap();
        assert_ne!(a, c2);
        assert!(generate_rayleigh(1, 1, 0.0, &mut seeded(1)).is_err());
        assert!(generate_rayleigh(1, 1, -1.0, &mut seeded(1)).is_err());
    }

    #[test]
    fn rayleigh_mean_power() {
        let gamma0 = 3.5;
        let h = generate_rayleigh(100, 1000, gamma0, &mut seeded(5)).unwrap();
        let mean = h.entries().iter().map(|z| z.norm_sqr()).sum::<f64>() / 1e5;
        assert!((mean - gamma0).abs() < 0.02 * gamma0, "mean {mean}");
    }

    #[test]
    fn scalar_rayleigh_power_is_exponential() {
        // Kolmogorov-Smirnov against Exp(1) at the 5% level.
        let mut rng = seeded(99);
        let mut xs: Vec<f64> = (0..10_000)
            .map(|_| generate_rayleigh(1, 1, 1.0, &mut rng).unwrap().entries()[(0, 0)].norm_sqr())
            .collect();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let stat = xs
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let cdf = 1.0 - (-x).exp();
                (cdf - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf).abs())
            })
            .fold(0.0, f64::max);
        assert!(stat < 1.36 / n.sqrt(), "KS statistic {stat}");
    }

    #[test]
    fn correlation_examples() {
        let ortho = ChannelMatrix::from_rows(&[vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(1.0, 0.0)]]).unwrap();
        let rho = cross_correlation(&ortho).unwrap();
        assert_eq!(rho[(0, 1)], c(0.0, 0.0));
        assert_eq!(rho[(1, 0)], c(0.0, 0.0));

        let same = ChannelMatrix::from_rows(&[vec![c(1.0, 2.0), c(0.5, -1.0)], vec![c(1.0, 2.0), c(0.5, -1.0)]]).unwrap();
        let rho = cross_correlation(&same).unwrap();
        assert!(rho.iter().all(|z| (z - c(1.0, 0.0)).norm() < 1e-15));

        let rho = cross_correlation(&h2x2()).unwrap();
        assert!((rho[(0, 1)] - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);

        let zero = ChannelMatrix::from_rows(&[vec![c(0.0, 0.0)], vec![c(1.0, 0.0)]]).unwrap();
        assert!(cross_correlation(&zero).is_err());
    }

    #[test]
    fn correlation_is_hermitian_and_bounded() {
        let mut rng = seeded(3);
        for _ in 0..50 {
            let h = generate_rayleigh(4, 3, 1.0, &mut rng).unwrap();
            let rho = cross_correlation(&h).unwrap();
            for a in 0..4 {
                assert_eq!(rho[(a, a)], c(1.0, 0.0));
                for b in 0..4 {
                    assert!((rho[(a, b)] - rho[(b, a)].conj()).norm() < 1e-14);
                    assert!(rho[(a, b)].norm() <= 1.0 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn interference_examples() {
        let h = [c(1.0, 2.0), c(-0.5, 0.3)];
        let n = (h.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt();
        let matched: Vec<_> = h.iter().map(|z| z.conj() / n).collect();
        assert!((normalized_interference(&h, &matched).unwrap() - c(1.0, 0.0)).norm() < 1e-15);

        let perp = [c(0.3, 0.0), c(1.0, 0.0)];
        let h1 = [c(1.0, 0.0), c(0.0, 0.0)];
        let w = [c(0.0, 0.0), c(1.0, 0.0)];
        assert_eq!(normalized_interference(&h1, &w).unwrap(), c(0.0, 0.0));
        let w = [c(0.0, FRAC_1_SQRT_2), c(FRAC_1_SQRT_2, 0.0)];
        assert!((normalized_interference(&h1, &w).unwrap() - c(0.0, FRAC_1_SQRT_2)).norm() < 1e-15);
        assert!(normalized_interference(&[c(0.0, 0.0)], &[c(1.0, 0.0)]).is_err());
        assert!(normalized_interference(&perp, &[c(0.0, 0.0), c(0.0, 0.0)]).is_err());
    }

    #[test]
    fn svd_of_identity() {
        let h = ChannelMatrix::new(CMatrix::identity(3, 3)).unwrap();
        let f = svd_factor(&h).unwrap();
        assert!(identity_deviation(&(&f.g * &f.b)) < 1e-12);
        let rebuilt = &f.s * f.v().map(|x| c(x, 0.0)) * &f.d;
        assert!(max_abs_diff(&rebuilt, h.entries()) < 1e-12);
    }

    #[test]
    fn svd_invariants_on_random_channels() {
        let mut rng = seeded(17);
        for _ in 0..100 {
            let h = generate_rayleigh(2, 4, 1.0, &mut rng).unwrap();
            let f = svd_factor(&h).unwrap();
            let rebuilt = &f.s * f.v().map(|x| c(x, 0.0)) * &f.d;
            assert!(max_abs_diff(&rebuilt, h.entries()) < 1e-10);
            assert!(identity_deviation(&(f.s.adjoint() * &f.s)) < 1e-10);
            assert!(identity_deviation(&(f.d.adjoint() * &f.d)) < 1e-10);

            // largest-magnitude entry of each left singular vector is real positive
            for i in 0..2 {
                let col = f.s.column(i);
                let pivot = col.iter().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
                assert!(pivot.im.abs() < 1e-12 && pivot.re > 0.0);
            }

            let mrt = &f.mrt_basis * &f.b;
            for k in 0..2 {
                assert!((mrt.column(k).norm() - 1.0).abs() < 1e-10);
            }

            // ‖g_j‖ ξ_jk = ‖h_j‖ ρ_jk
            let xi = f.xi(&f.b);
            let rho = cross_correlation(&h).unwrap();
            let gn = f.g_row_norms();
            for j in 0..2 {
                for k in 0..2 {
                    let lhs = gn[j] * xi[(j, k)];
                    let rhs = h.row_norms()[j] * rho[(j, k)];
                    assert!((lhs - rhs).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn svd_rejects_rank_deficient() {
        let h = ChannelMatrix::from_rows(&[vec![c(1.0, 0.0), c(1.0, 1.0)], vec![c(2.0, 0.0), c(2.0, 2.0)]]).unwrap();
        assert!(matches!(svd_factor(&h), Err(Error::DegenerateChannel { .. })));
        let wide = ChannelMatrix::new(CMatrix::zeros(3, 2).map(|_: Complex64| c(1.0, 0.0))).unwrap();
        assert!(matches!(svd_factor(&wide), Err(Error::DimensionMismatch(_))));
    }
}
