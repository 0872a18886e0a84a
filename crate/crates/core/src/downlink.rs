//! Per-user-stream precoders: naive MRT, correlation-rotation zero forcing
//! (CRZF) and constructive-interference MRT (CIMRT).
//!
//! CIMRT starts from the SVD view of the matched filter, `W = D^H·V'·B`, and
//! rotates pairs of columns of the unitary factor `B` until the interference
//! each user sees falls inside its own detection region.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::{cross_correlation, svd_factor, ChannelMatrix, SvdFactors};
use crate::constellation::{detection_region_contains, relative_phase, PskSymbol, SymbolVector};
use crate::linalg::{cis, hermitian_pd_inverse, require_full_row_rank, wrap_angle, CMatrix, CVector, RANK_TOLERANCE};
use crate::linkmodel::QosTargets;
use crate::{Error, Result};

/// Unit-norm precoding columns with per-user powers.
#[derive(Debug, Clone, PartialEq)]
pub struct PerUserPrecoder {
    w: CMatrix,
    powers: Vec<f64>,
}

const UNIT_TOL: f64 = 1e-10;

impl PerUserPrecoder {
    pub fn new(w: CMatrix, powers: Vec<f64>) -> Result<Self> {
        if powers.len() != w.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} powers for {} precoding columns",
                powers.len(),
                w.ncols()
            )));
        }
        if powers.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidParameter("powers must be finite and nonnegative".into()));
        }
        for k in 0..w.ncols() {
            let n = w.column(k).norm();
            if (n - 1.0).abs() > UNIT_TOL {
                return Err(Error::InvalidParameter(format!("column {k} has norm {n}, expected 1")));
            }
        }
        Ok(Self { w, powers })
    }

    /// Splits an unnormalized precoder into unit columns and powers `‖w_k‖²`.
    pub fn from_raw(raw: &CMatrix) -> Result<Self> {
        let mut w = raw.clone();
        let mut powers = Vec::with_capacity(raw.ncols());
        for k in 0..raw.ncols() {
            let n = raw.column(k).norm();
            if n == 0.0 {
                return Err(Error::ZeroVector("precoding column"));
            }
            w.column_mut(k).unscale_mut(n);
            powers.push(n * n);
        }
        Ok(Self { w, powers })
    }

    pub fn w(&self) -> &CMatrix {
        &self.w
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    pub fn users(&self) -> usize {
        self.w.ncols()
    }

    pub fn antennas(&self) -> usize {
        self.w.nrows()
    }

    pub fn with_powers(self, powers: Vec<f64>) -> Result<Self> {
        Self::new(self.w, powers)
    }

    /// `W · P^{1/2}`.
    pub fn effective(&self) -> CMatrix {
        let mut m = self.w.clone();
        for (k, p) in self.powers.iter().enumerate() {
            m.column_mut(k).scale_mut(p.sqrt());
        }
        m
    }

    /// `tr(W P W^H)`.
    pub fn total_power(&self) -> f64 {
        (0..self.w.ncols())
            .map(|k| self.powers[k] * self.w.column(k).norm_squared())
            .sum()
    }
}

/// Matched-filter columns `h_k^H / ‖h_k‖` with unit powers.
pub fn nmrt(h: &ChannelMatrix) -> Result<PerUserPrecoder> {
    let mut w = h.entries().adjoint();
    for (k, n) in h.row_norms().iter().enumerate() {
        if *n == 0.0 {
            return Err(Error::ZeroVector("channel row"));
        }
        w.column_mut(k).unscale_mut(*n);
    }
    Ok(PerUserPrecoder {
        w,
        powers: vec![1.0; h.users()],
    })
}

/// CRZF output: the precoder (column norms folded into powers) together with
/// the shared scaling `γ` and the correlation-rotation matrix `R_φ`.
#[derive(Debug, Clone)]
pub struct Crzf {
    pub precoder: PerUserPrecoder,
    pub gamma: f64,
    pub rotation: CMatrix,
}

impl Crzf {
    /// Unnormalized `γ·H^H(HH^H)^{-1}·R_φ`.
    pub fn raw(&self) -> CMatrix {
        self.precoder.effective()
    }
}

/// `R_φ(j,k) = ρ_jk·exp(iφ)`, where `φ` rotates `ρ_jk·d_k` onto `∠d_j`.
pub fn correlation_rotation(h: &ChannelMatrix, d: &SymbolVector) -> Result<CMatrix> {
    let k = h.users();
    if d.len() != k {
        return Err(Error::DimensionMismatch(format!("{} symbols for {} users", d.len(), k)));
    }
    let rho = cross_correlation(h)?;
    let mut r = CMatrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            r[(a, b)] = if a == b {
                Complex64::new(1.0, 0.0)
            } else if rho[(a, b)].norm() == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                rho[(a, b)] * cis(relative_phase(rho[(a, b)], d.get(b), d.get(a))?)
            };
        }
    }
    Ok(r)
}

/// `W = γ·H^H(HH^H)^{-1}·R_φ` with `γ` fixing the total power to `budget`.
pub fn crzf(h: &ChannelMatrix, d: &SymbolVector, budget: f64) -> Result<Crzf> {
    if !(budget > 0.0) || !budget.is_finite() {
        return Err(Error::InvalidParameter(format!("power budget must be positive, got {budget}")));
    }
    require_full_row_rank(h.entries(), RANK_TOLERANCE)?;
    let rotation = correlation_rotation(h, d)?;
    let gram = h.entries() * h.entries().adjoint();
    let gram_inv = hermitian_pd_inverse(&gram).ok_or(Error::DegenerateChannel {
        ratio: 0.0,
        tolerance: RANK_TOLERANCE,
    })?;
    let trace = (rotation.adjoint() * &gram_inv * &rotation).trace().re;
    let gamma = (budget / trace).sqrt();
    let raw = (h.entries().adjoint() * &gram_inv * &rotation).scale(gamma);
    Ok(Crzf {
        precoder: PerUserPrecoder::from_raw(&raw)?,
        gamma,
        rotation,
    })
}

/// Plane rotation between columns `j < k` (0-based) of a unitary matrix.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RotationParams {
    pub k: usize,
    pub j: usize,
    pub alpha: f64,
    pub delta: f64,
}

/// `K × K` unitary equal to the identity except
/// `R[j][j] = R[k][k] = cos α`, `R[j][k] = -sin α·e^{-iδ}`, `R[k][j] = sin α·e^{iδ}`.
pub fn givens_rotation(params: RotationParams, dim: usize) -> Result<CMatrix> {
    let RotationParams { k, j, alpha, delta } = params;
    if !(j < k && k < dim) {
        return Err(Error::InvalidParameter(format!(
            "rotation plane ({k}, {j}) invalid for dimension {dim}"
        )));
    }
    let mut r = CMatrix::identity(dim, dim);
    let (s, c) = alpha.sin_cos();
    r[(j, j)] = Complex64::new(c, 0.0);
    r[(k, k)] = Complex64::new(c, 0.0);
    r[(j, k)] = -s * cis(-delta);
    r[(k, j)] = s * cis(delta);
    Ok(r)
}

/// Right-multiplies `b` by the plane rotation in place, touching only columns `j` and `k`.
pub fn apply_rotation(b: &mut CMatrix, params: RotationParams) {
    let RotationParams { k, j, alpha, delta } = params;
    let (s, c) = alpha.sin_cos();
    let col_j = b.column(j).clone_owned();
    let col_k = b.column(k).clone_owned();
    let new_k = &col_k * Complex64::new(c, 0.0) - &col_j * (s * cis(-delta));
    let new_j = &col_j * Complex64::new(c, 0.0) + &col_k * (s * cis(delta));
    b.set_column(k, &new_k);
    b.set_column(j, &new_j);
}

/// The four normalized gains `ξ` of a user pair `(k, j)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct XiBlock {
    pub kk: Complex64,
    pub kj: Complex64,
    pub jk: Complex64,
    pub jj: Complex64,
}

impl XiBlock {
    pub fn from_xi(xi: &CMatrix, k: usize, j: usize) -> Self {
        Self {
            kk: xi[(k, k)],
            kj: xi[(k, j)],
            jk: xi[(j, k)],
            jj: xi[(j, j)],
        }
    }

    /// `(√(|ξ_kk|² + |ξ_kj|²), √(|ξ_jj|² + |ξ_jk|²))`.
    pub fn default_targets(&self) -> (f64, f64) {
        (self.kk.norm().hypot(self.kj.norm()), self.jj.norm().hypot(self.jk.norm()))
    }

    /// Right-hand sides of the pair equations:
    /// `ξ_kk cos α d_k − ξ_kj sin α e^{−iδ} d_j` and `ξ_jk sin α e^{iδ} d_k + ξ_jj cos α d_j`.
    pub fn rotated(&self, d_k: Complex64, d_j: Complex64, alpha: f64, delta: f64) -> (Complex64, Complex64) {
        let (s, c) = alpha.sin_cos();
        let e = cis(delta);
        (
            self.kk * c * d_k - self.kj * s * e.conj() * d_j,
            self.jk * s * e * d_k + self.jj * c * d_j,
        )
    }

    fn derivatives(&self, d_k: Complex64, d_j: Complex64, alpha: f64, delta: f64) -> [(Complex64, Complex64); 2] {
        let (s, c) = alpha.sin_cos();
        let e = cis(delta);
        let i = Complex64::i();
        [
            (
                -self.kk * s * d_k - self.kj * c * e.conj() * d_j,
                i * self.kj * s * e.conj() * d_j,
            ),
            (self.jk * c * e * d_k - self.jj * s * d_j, i * self.jk * s * e * d_k),
        ]
    }
}

/// Residual norm of `ξ'_kk d_k = rhs_k`, `ξ'_jj d_j = rhs_j` at real gains `xi_kk`, `xi_jj`.
pub fn pair_residual(
    block: &XiBlock,
    d_k: PskSymbol,
    d_j: PskSymbol,
    alpha: f64,
    delta: f64,
    xi_kk: f64,
    xi_jj: f64,
) -> f64 {
    let (dk, dj) = (d_k.value(), d_j.value());
    let (rk, rj) = block.rotated(dk, dj, alpha, delta);
    (dk * xi_kk - rk).norm().hypot((dj * xi_jj - rj).norm())
}

/// Accepted root of the pair equations.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RootSolution {
    pub alpha: f64,
    pub delta: f64,
    pub xi_kk: f64,
    pub xi_jj: f64,
    pub residual: f64,
    /// Number of 0.9 back-off steps applied to the targets before acceptance.
    pub backoff_steps: u32,
    pub targets: (f64, f64),
}

impl RootSolution {
    /// `min(ξ'_kk, ξ'_jj)`, the quantity maximized over roots.
    pub fn score(&self) -> f64 {
        self.xi_kk.min(self.xi_jj)
    }
}

pub const ROOT_TOL: f64 = 1e-8;
const START_GRID: usize = 16;
const BACKOFF_FACTOR: f64 = 0.9;
const MAX_BACKOFF: u32 = 20;
const REFINE_SEEDS: usize = 8;

/// Pair equations projected onto the symbols: `a = conj(d_k)·rhs_k`,
/// `b = conj(d_j)·rhs_j`; at a root both are real.
struct PairSystem<'a> {
    block: &'a XiBlock,
    dk: Complex64,
    dj: Complex64,
}

impl PairSystem<'_> {
    fn eval(&self, alpha: f64, delta: f64) -> (Complex64, Complex64) {
        let (rk, rj) = self.block.rotated(self.dk, self.dj, alpha, delta);
        (rk * self.dk.conj(), rj * self.dj.conj())
    }

    fn residual(&self, alpha: f64, delta: f64) -> f64 {
        let (a, b) = self.eval(alpha, delta);
        a.im.hypot(b.im)
    }

    fn score(&self, alpha: f64, delta: f64) -> f64 {
        let (a, b) = self.eval(alpha, delta);
        a.re.min(b.re)
    }

    fn jacobian(&self, alpha: f64, delta: f64) -> [[f64; 2]; 2] {
        let [(ka, kd), (ja, jd)] = self.block.derivatives(self.dk, self.dj, alpha, delta);
        let (ck, cj) = (self.dk.conj(), self.dj.conj());
        [[(ka * ck).im, (kd * ck).im], [(ja * cj).im, (jd * cj).im]]
    }

    /// Levenberg-Marquardt from `(alpha, delta)`; returns the wrapped end point and its residual.
    fn solve_from(&self, mut alpha: f64, mut delta: f64) -> (f64, f64, f64) {
        let mut res = self.residual(alpha, delta);
        let mut damping = 1e-6;
        for _ in 0..80 {
            if res < 1e-15 {
                break;
            }
            let (a, b) = self.eval(alpha, delta);
            let f = [a.im, b.im];
            let j = self.jacobian(alpha, delta);
            let m00 = j[0][0] * j[0][0] + j[1][0] * j[1][0];
            let m01 = j[0][0] * j[0][1] + j[1][0] * j[1][1];
            let m11 = j[0][1] * j[0][1] + j[1][1] * j[1][1];
            let g0 = j[0][0] * f[0] + j[1][0] * f[1];
            let g1 = j[0][1] * f[0] + j[1][1] * f[1];
            let mut improved = false;
            while damping < 1e10 {
                let a00 = m00 + damping;
                let a11 = m11 + damping;
                let det = a00 * a11 - m01 * m01;
                let na = alpha - (a11 * g0 - m01 * g1) / det;
                let nd = delta - (a00 * g1 - m01 * g0) / det;
                let nres = self.residual(na, nd);
                if nres < res {
                    alpha = na;
                    delta = nd;
                    res = nres;
                    damping = (damping * 0.1).max(1e-15);
                    improved = true;
                    break;
                }
                damping *= 10.0;
            }
            if !improved {
                break;
            }
        }
        (wrap_angle(alpha), wrap_angle(delta), res)
    }
}

/// Projected pattern search along the root set from `start`. Projections that
/// land on the line `sin α = 0`, where every point is a root of equal score,
/// are refused so the search stays on the curve it started from.
fn refine_along_roots(system: &PairSystem, start: (f64, f64, f64), mut h: f64) -> (f64, f64, f64) {
    let (mut alpha, mut delta, mut score) = start;
    let mut budget = 400;
    while h > 1e-10 && budget > 0 {
        budget -= 1;
        let mut moved = false;
        for (da, dd) in [(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)] {
            let (na, nd, res) = system.solve_from(alpha + da, delta + dd);
            if res < 1e-12 && na.sin().abs() > 1e-9 {
                let s = system.score(na, nd);
                if s > score + 1e-15 {
                    alpha = na;
                    delta = nd;
                    score = s;
                    moved = true;
                    break;
                }
            }
        }
        if !moved {
            h *= 0.5;
        }
    }
    (alpha, delta, score)
}

/// Solves `ξ'_kk d_k = ξ_kk cos α d_k − ξ_kj sin α e^{−iδ} d_j`,
/// `ξ'_jj d_j = ξ_jk sin α e^{iδ} d_k + ξ_jj cos α d_j` for `(α, δ)` with real
/// gains `ξ'`.
///
/// Roots come from damped Newton on a 16×16 grid of starts. The root with the
/// largest `min(ξ'_kk, ξ'_jj)`, and a few more away from `sin α = 0`, are
/// pushed along the root set by a projected pattern search; the best wins.
/// It is accepted if it meets the targets (default
/// [`XiBlock::default_targets`]) after at most 20 back-offs by 0.9.
pub fn solve_rotation_pair(
    block: &XiBlock,
    d_k: PskSymbol,
    d_j: PskSymbol,
    targets: Option<(f64, f64)>,
) -> Result<RootSolution> {
    let targets = targets.unwrap_or_else(|| block.default_targets());
    if !(targets.0 > 0.0 && targets.1 > 0.0) {
        return Err(Error::InvalidParameter("pair targets must be positive".into()));
    }
    let system = PairSystem {
        block,
        dk: d_k.value(),
        dj: d_j.value(),
    };

    let step = TAU / START_GRID as f64;
    let mut roots: Vec<(f64, f64, f64)> = Vec::new();
    for ia in 0..START_GRID {
        for id in 0..START_GRID {
            let (alpha, delta, res) = system.solve_from(-PI + ia as f64 * step, -PI + id as f64 * step);
            if res < ROOT_TOL {
                roots.push((alpha, delta, system.score(alpha, delta)));
            }
        }
    }
    if roots.is_empty() {
        return Err(Error::Infeasible("no root of the pair equations".into()));
    }
    roots.sort_by(|x, y| y.2.total_cmp(&x.2));
    // Every point with sin α = 0 is a root and they all score alike, so the
    // best start can sit on that line far from where a curve of roots leaves
    // it. Refine the best root and the best few off that line.
    let mut seeds = vec![roots[0]];
    for r in roots.iter().filter(|r| r.0.sin().abs() > 0.05) {
        if seeds.len() > REFINE_SEEDS {
            break;
        }
        if seeds.iter().all(|s| (s.0 - r.0).abs() + (s.1 - r.1).abs() > 1e-3) {
            seeds.push(*r);
        }
    }
    let (mut alpha, mut delta, mut score) = roots[0];
    for seed in seeds {
        let refined = refine_along_roots(&system, seed, step / 2.0);
        if refined.2 > score {
            (alpha, delta, score) = refined;
        }
    }

    let (a, b) = system.eval(alpha, delta);
    let (xi_kk, xi_jj) = (a.re, b.re);
    let residual = pair_residual(block, d_k, d_j, alpha, delta, xi_kk, xi_jj);
    if residual >= ROOT_TOL {
        return Err(Error::Infeasible(format!("pair residual {residual:.3e}")));
    }
    let mut factor = 1.0;
    for backoff_steps in 0..=MAX_BACKOFF {
        let slack = 1.0 - 1e-12;
        if xi_kk >= factor * targets.0 * slack && xi_jj >= factor * targets.1 * slack {
            return Ok(RootSolution {
                alpha,
                delta,
                xi_kk,
                xi_jj,
                residual,
                backoff_steps,
                targets,
            });
        }
        factor *= BACKOFF_FACTOR;
    }
    Err(Error::Infeasible(format!(
        "best root reaches ({xi_kk:.4}, {xi_jj:.4}) against targets ({:.4}, {:.4})",
        targets.0, targets.1
    )))
}

/// Quality of one plane rotation: whether every user stays inside its
/// detection region, and `min_u |y_u|²/ζ_u` per unit transmit power.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PlaneValue {
    pub constructive: bool,
    pub efficiency: f64,
}

impl PlaneValue {
    /// Constructive rotations beat non-constructive ones; then higher efficiency wins.
    pub fn better_than(&self, other: &PlaneValue) -> bool {
        match (self.constructive, other.constructive) {
            (true, false) => true,
            (false, true) => false,
            _ => self.efficiency > other.efficiency,
        }
    }
}

/// Received signals and transmit power as functions of the rotation of one
/// plane `(k, j)` of `B'`, with all other columns and all powers held fixed.
#[derive(Debug, Clone)]
pub struct PlaneSearch {
    k: usize,
    j: usize,
    symbols: Vec<PskSymbol>,
    zeta: Vec<f64>,
    /// `√p_k d_k` and `√p_j d_j`.
    u_k: Complex64,
    u_j: Complex64,
    /// `G b_k`, `G b_j`.
    g_k: CVector,
    g_j: CVector,
    rest: CVector,
    p_k: f64,
    p_j: f64,
    norm_k2: f64,
    norm_j2: f64,
    /// `(D^H V' b_k)^H (D^H V' b_j)`.
    cross: Complex64,
    rest_power: f64,
}

impl PlaneSearch {
    pub fn new(
        factors: &SvdFactors,
        b: &CMatrix,
        powers: &[f64],
        d: &SymbolVector,
        qos: &QosTargets,
        k: usize,
        j: usize,
    ) -> Result<Self> {
        let users = b.ncols();
        if !(j < k && k < users) || powers.len() != users || d.len() != users || qos.len() != users {
            return Err(Error::DimensionMismatch(format!("plane ({k}, {j}) over {users} users")));
        }
        let symbols = d.symbols().to_vec();
        let gb = &factors.g * b;
        let mb = &factors.mrt_basis * b;
        let mut rest = CVector::zeros(users);
        let mut rest_power = 0.0;
        for l in (0..users).filter(|&l| l != k && l != j) {
            rest += gb.column(l) * (powers[l].sqrt() * symbols[l].value());
            rest_power += powers[l] * mb.column(l).norm_squared();
        }
        Ok(Self {
            k,
            j,
            u_k: powers[k].sqrt() * symbols[k].value(),
            u_j: powers[j].sqrt() * symbols[j].value(),
            g_k: gb.column(k).clone_owned(),
            g_j: gb.column(j).clone_owned(),
            rest,
            p_k: powers[k],
            p_j: powers[j],
            norm_k2: mb.column(k).norm_squared(),
            norm_j2: mb.column(j).norm_squared(),
            cross: mb.column(k).dotc(&mb.column(j)),
            rest_power,
            symbols,
            zeta: qos.zeta().to_vec(),
        })
    }

    pub fn plane(&self) -> (usize, usize) {
        (self.k, self.j)
    }

    /// Noiseless received signals after rotating the plane by `(α, δ)`.
    pub fn received(&self, alpha: f64, delta: f64) -> CVector {
        let (s, c) = alpha.sin_cos();
        let e = cis(delta);
        let coef_k = self.u_k * c + self.u_j * s * e;
        let coef_j = self.u_j * c - self.u_k * s * e.conj();
        &self.rest + &self.g_k * coef_k + &self.g_j * coef_j
    }

    /// Transmit power `Σ_l p_l ‖D^H V' b'_l‖²` after the rotation.
    pub fn power(&self, alpha: f64, delta: f64) -> f64 {
        let (s, c) = alpha.sin_cos();
        let mixed = 2.0 * c * s * (cis(-delta) * self.cross).re;
        self.rest_power
            + self.p_k * (c * c * self.norm_k2 + s * s * self.norm_j2 - mixed)
            + self.p_j * (c * c * self.norm_j2 + s * s * self.norm_k2 + mixed)
    }

    pub fn value(&self, alpha: f64, delta: f64) -> PlaneValue {
        let y = self.received(alpha, delta);
        let constructive = y
            .iter()
            .zip(&self.symbols)
            .all(|(yu, du)| detection_region_contains(*du, *yu).unwrap_or(false));
        let worst = y
            .iter()
            .zip(&self.zeta)
            .map(|(yu, z)| yu.norm_sqr() / z)
            .fold(f64::INFINITY, f64::min);
        PlaneValue {
            constructive,
            efficiency: worst / self.power(alpha, delta),
        }
    }
}

/// Rotation chosen for one plane by [`best_plane_rotation`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PlaneChoice {
    pub alpha: f64,
    pub delta: f64,
    pub value: PlaneValue,
    /// Value of the unrotated plane.
    pub identity: PlaneValue,
}

const PLANE_GRID: usize = 32;
const PLANE_STARTS: usize = 8;

/// Rotation of one plane that keeps every user constructive at the least
/// power per unit of worst-user SNR; if no rotation is constructive, the most
/// efficient one. A 32×32 grid of starts; the best few by value and by raw
/// efficiency are refined by a fan pattern search.
/// Returns the identity unless something strictly better is found.
pub fn best_plane_rotation(search: &PlaneSearch) -> PlaneChoice {
    let identity = search.value(0.0, 0.0);
    let step = TAU / PLANE_GRID as f64;
    let mut starts: Vec<(f64, f64, PlaneValue)> = Vec::with_capacity(PLANE_GRID * PLANE_GRID);
    for ia in 0..PLANE_GRID {
        for id in 0..PLANE_GRID {
            let (a, d) = (-PI + ia as f64 * step, -PI + id as f64 * step);
            starts.push((a, d, search.value(a, d)));
        }
    }
    let mut by_value = starts.clone();
    by_value.sort_by(|x, y| {
        if x.2.better_than(&y.2) {
            std::cmp::Ordering::Less
        } else if y.2.better_than(&x.2) {
            std::cmp::Ordering::Greater
        } else {
            std::cmp::Ordering::Equal
        }
    });
    // thin constructive strips can hide next to efficient non-constructive starts
    starts.sort_by(|x, y| y.2.efficiency.total_cmp(&x.2.efficiency));

    let mut best = (0.0, 0.0, identity);
    for &(a0, d0, v0) in by_value.iter().take(PLANE_STARTS).chain(starts.iter().take(PLANE_STARTS)) {
        let (a, d, v) = ridge_refine(search, a0, d0, v0, step / 2.0);
        if v.better_than(&best.2) {
            best = (a, d, v);
        }
    }
    PlaneChoice {
        alpha: wrap_angle(best.0),
        delta: wrap_angle(best.1),
        value: best.2,
        identity,
    }
}

/// Pattern search over a fan of directions; the max-min objective has
/// narrow ridges that axis-aligned moves cannot follow.
fn ridge_refine(search: &PlaneSearch, mut a: f64, mut d: f64, mut v: PlaneValue, mut h: f64) -> (f64, f64, PlaneValue) {
    const DIRECTIONS: usize = 48;
    let fan: Vec<(f64, f64)> = (0..DIRECTIONS)
        .map(|i| (TAU * i as f64 / DIRECTIONS as f64).sin_cos())
        .collect();
    let mut budget = 400;
    while h > 1e-10 && budget > 0 {
        budget -= 1;
        let mut best: Option<(f64, f64, PlaneValue)> = None;
        for (sn, cs) in &fan {
            let (na, nd) = (a + h * cs, d + h * sn);
            let cand = search.value(na, nd);
            if cand.better_than(best.as_ref().map_or(&v, |b| &b.2)) {
                best = Some((na, nd, cand));
            }
        }
        match best {
            Some((na, nd, nv)) => {
                a = na;
                d = nd;
                v = nv;
                h *= 1.5;
            }
            None => h *= 0.3,
        }
    }
    (a, d, v)
}

/// How the initial powers were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum PowerAllocation {
    /// Solved the all-constructive amplitude system.
    Constructive,
    /// The system had a negative amplitude or was singular; equal powers used.
    EqualFallback,
}

/// Powers assuming every interference term adds in phase:
/// `Σ_k ‖h_j‖ |ρ_jk| √p_k = √ζ_j` for every user `j`.
pub fn constructive_power_allocation(h: &ChannelMatrix, qos: &QosTargets) -> Result<(Vec<f64>, PowerAllocation)> {
    let k = h.users();
    if qos.len() != k {
        return Err(Error::DimensionMismatch(format!("{} targets for {} users", qos.len(), k)));
    }
    let rho = cross_correlation(h)?;
    let norms = h.row_norms();
    let m = DMatrix::<f64>::from_fn(k, k, |a, b| norms[a] * rho[(a, b)].norm());
    let rhs = DVector::<f64>::from_iterator(k, qos.zeta().iter().map(|z| z.sqrt()));
    if let Some(s) = m.lu().solve(&rhs) {
        if s.iter().all(|x| x.is_finite() && *x >= 0.0) {
            return Ok((s.iter().map(|x| x * x).collect(), PowerAllocation::Constructive));
        }
    }
    let worst = qos
        .zeta()
        .iter()
        .zip(norms)
        .map(|(z, n)| z / (n * n))
        .fold(0.0, f64::max);
    Ok((vec![worst / k as f64; k], PowerAllocation::EqualFallback))
}

/// How CIMRT chooses the rotation of each plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum PairRule {
    /// [`best_plane_rotation`] on the powered received signals of all users.
    #[default]
    ConstructivePower,
    /// [`solve_rotation_pair`] on the unpowered `ξ` block with default targets.
    PairEquations,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CimrtOptions {
    pub rule: PairRule,
}

/// One plane of the CIMRT sweep.
#[derive(Debug, Clone)]
pub struct RotationStep {
    pub k: usize,
    pub j: usize,
    /// `None` when the plane was left unrotated.
    pub params: Option<RotationParams>,
    /// `ξ` block the pair equations were posed on (pair-equation rule).
    pub block: XiBlock,
    pub root: Option<RootSolution>,
    /// Search result (constructive-power rule).
    pub choice: Option<PlaneChoice>,
    /// `B'` after this step.
    pub b_after: CMatrix,
}

#[derive(Debug, Clone)]
pub struct CimrtOutcome {
    pub precoder: PerUserPrecoder,
    pub factors: SvdFactors,
    pub b_prime: CMatrix,
    pub steps: Vec<RotationStep>,
    pub allocation: PowerAllocation,
    /// Common factor applied to the powers so the weakest user gets exactly `ζ_j`.
    pub qos_scale: f64,
}

/// Constructive-interference MRT with the default options.
pub fn cimrt(h: &ChannelMatrix, d: &SymbolVector, qos: &QosTargets) -> Result<CimrtOutcome> {
    cimrt_with(h, d, qos, CimrtOptions::default())
}

/// Constructive-interference MRT.
///
/// Initial powers come from [`constructive_power_allocation`], then the SVD
/// factors give `B = S^H` and `G`. For every plane `(j, k)`, `j < k`, in
/// lexicographic order, a rotation is chosen per `options.rule` and `B'` is
/// right-multiplied by it.
///
/// The precoder is `D^H·V'·B'·P^{1/2}` written as unit columns with powers,
/// the column norms folded into the powers. Powers are finally scaled by a
/// common factor so the weakest user receives exactly `ζ_j`.
pub fn cimrt_with(h: &ChannelMatrix, d: &SymbolVector, qos: &QosTargets, options: CimrtOptions) -> Result<CimrtOutcome> {
    let users = h.users();
    if d.len() != users || qos.len() != users {
        return Err(Error::DimensionMismatch(format!(
            "{} symbols and {} targets for {} users",
            d.len(),
            qos.len(),
            users
        )));
    }
    let (powers, allocation) = constructive_power_allocation(h, qos)?;
    let factors = svd_factor(h)?;
    let mut b_prime = factors.b.clone();
    let mut steps = Vec::with_capacity(users * users.saturating_sub(1) / 2);

    for j in 0..users {
        for k in j + 1..users {
            let block = XiBlock::from_xi(&factors.xi(&b_prime), k, j);
            let (params, root, choice) = match options.rule {
                PairRule::PairEquations => {
                    let root = solve_rotation_pair(&block, d.get(k), d.get(j), None).ok();
                    let params = root.map(|r| RotationParams {
                        k,
                        j,
                        alpha: r.alpha,
                        delta: r.delta,
                    });
                    (params, root, None)
                }
                PairRule::ConstructivePower => {
                    let search = PlaneSearch::new(&factors, &b_prime, &powers, d, qos, k, j)?;
                    let choice = best_plane_rotation(&search);
                    let params = (choice.alpha != 0.0 || choice.delta != 0.0).then_some(RotationParams {
                        k,
                        j,
                        alpha: choice.alpha,
                        delta: choice.delta,
                    });
                    (params, None, Some(choice))
                }
            };
            if let Some(p) = params {
                apply_rotation(&mut b_prime, p);
            }
            steps.push(RotationStep {
                k,
                j,
                params,
                block,
                root,
                choice,
                b_after: b_prime.clone(),
            });
        }
    }

    let mut raw = &factors.mrt_basis * &b_prime;
    for (k, p) in powers.iter().enumerate() {
        raw.column_mut(k).scale_mut(p.sqrt());
    }
    let candidate = PerUserPrecoder::from_raw(&raw)?;
    let y = h.entries() * candidate.effective() * DVector::from_vec(d.values());
    let mut qos_scale = 0.0f64;
    for (yj, zeta) in y.iter().zip(qos.zeta()) {
        let amp2 = yj.norm_sqr();
        if amp2 < 1e-300 {
            return Err(Error::Infeasible("a user receives no signal".into()));
        }
        qos_scale = qos_scale.max(zeta / amp2);
    }
    let powers: Vec<f64> = candidate.powers().iter().map(|p| p * qos_scale).collect();
    Ok(CimrtOutcome {
        precoder: candidate.with_powers(powers)?,
        factors,
        b_prime,
        steps,
        allocation,
        qos_scale,
    })
}
