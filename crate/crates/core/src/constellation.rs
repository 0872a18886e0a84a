//! M-PSK geometry and constructive-interference predicates.
//!
//! Constellation point `m` of an `M`-PSK alphabet is `exp(i·2πm/M)`. The
//! detection region of a point is the closed angular sector of half-width
//! `π/M` around it. Angles are wrapped to (-π, π] everywhere.

use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::linalg::{cis, wrap_angle, CMatrix};
use crate::{Error, Result};

/// Slack applied to the inclusive sector boundary and to "zero" components.
const ANGLE_EPS: f64 = 1e-12;

/// One M-PSK symbol, stored by constellation index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct PskSymbol {
    index: usize,
    order: u32,
}

fn check_order(order: u32) -> Result<()> {
    if order < 2 || !order.is_power_of_two() {
        return Err(Error::InvalidOrder(order));
    }
    Ok(())
}

/// Constellation point `index` of the `order`-PSK alphabet.
pub fn mpsk_symbol(index: usize, order: u32) -> Result<PskSymbol> {
    PskSymbol::new(index, order)
}

impl PskSymbol {
    pub fn new(index: usize, order: u32) -> Result<Self> {
        check_order(order)?;
        if index >= order as usize {
            return Err(Error::IndexOutOfRange { index, order });
        }
        Ok(Self { index, order })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    /// Phase in (-π, π].
    pub fn phase(&self) -> f64 {
        wrap_angle(TAU * self.index as f64 / self.order as f64)
    }

    pub fn value(&self) -> Complex64 {
        cis(TAU * self.index as f64 / self.order as f64)
    }

    /// Half-width of the detection sector, `π/M`.
    pub fn half_sector(&self) -> f64 {
        PI / self.order as f64
    }

    pub fn random<R: Rng + ?Sized>(order: u32, rng: &mut R) -> Result<Self> {
        check_order(order)?;
        Self::new(rng.random_range(0..order as usize), order)
    }
}

/// Whether `point` falls in the (closed) detection sector of `target`.
pub fn detection_region_contains(target: PskSymbol, point: Complex64) -> Result<bool> {
    if point.norm() == 0.0 {
        return Err(Error::ZeroVector("detection point"));
    }
    let offset = wrap_angle(point.arg() - target.phase()).abs();
    Ok(offset <= target.half_sector() + ANGLE_EPS)
}

fn sign_compatible(target: f64, received: f64) -> bool {
    // a zero component carries no quadrant information
    target.abs() <= ANGLE_EPS || target * received > 0.0
}

/// Constructive-interference test: the interfering contribution `psi · interferer`
/// must land in the detection sector of `target` with matching real and
/// imaginary signs.
pub fn is_constructive(psi: Complex64, interferer: PskSymbol, target: PskSymbol) -> bool {
    let point = psi * interferer.value();
    if point.norm() == 0.0 {
        return false;
    }
    let in_sector = detection_region_contains(target, point).unwrap_or(false);
    let t = target.value();
    in_sector && sign_compatible(t.re, point.re) && sign_compatible(t.im, point.im)
}

/// Phase `φ` that rotates `rho · d_i` onto the phase of `d_j`.
pub fn relative_phase(rho: Complex64, d_i: PskSymbol, d_j: PskSymbol) -> Result<f64> {
    if rho.norm() == 0.0 {
        return Err(Error::ZeroVector("cross-correlation"));
    }
    Ok(wrap_angle(d_j.phase() - (rho * d_i.value()).arg()))
}

/// Symbols of all users, sharing one modulation order.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SymbolVector {
    symbols: Vec<PskSymbol>,
    order: u32,
}

impl SymbolVector {
    pub fn new(symbols: Vec<PskSymbol>) -> Result<Self> {
        let first = symbols
            .first()
            .ok_or_else(|| Error::InvalidParameter("empty symbol vector".into()))?;
        let order = first.order;
        if let Some(other) = symbols.iter().find(|s| s.order != order) {
            return Err(Error::MixedOrders(order, other.order));
        }
        Ok(Self { symbols, order })
    }

    pub fn from_indices(indices: &[usize], order: u32) -> Result<Self> {
        let symbols = indices
            .iter()
            .map(|&i| PskSymbol::new(i, order))
            .collect::<Result<Vec<_>>>()?;
        Self::new(symbols)
    }

    pub fn random<R: Rng + ?Sized>(users: usize, order: u32, rng: &mut R) -> Result<Self> {
        let symbols = (0..users)
            .map(|_| PskSymbol::random(order, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::new(symbols)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn symbols(&self) -> &[PskSymbol] {
        &self.symbols
    }

    pub fn get(&self, j: usize) -> PskSymbol {
        self.symbols[j]
    }

    pub fn values(&self) -> Vec<Complex64> {
        self.symbols.iter().map(PskSymbol::value).collect()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.symbols.iter().map(PskSymbol::index).collect()
    }
}

/// Diagonal unitary matrix whose entry `j` is `exp(i(∠d − ∠d_j))`.
///
/// Left-multiplying a channel by it produces the equivalent channel under
/// which every user's symbol appears as the common reference `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentMatrix {
    diag: Vec<Complex64>,
    reference: PskSymbol,
}

pub fn alignment_matrix(symbols: &SymbolVector, reference: PskSymbol) -> Result<AlignmentMatrix> {
    if symbols.order() != reference.order() {
        return Err(Error::MixedOrders(symbols.order(), reference.order()));
    }
    let m = reference.order() as i64;
    let diag = symbols
        .symbols()
        .iter()
        .map(|s| {
            // integer index difference keeps A = I exact when d_j = d
            let steps = (reference.index() as i64 - s.index() as i64).rem_euclid(m);
            if steps == 0 {
                Complex64::new(1.0, 0.0)
            } else {
                cis(TAU * steps as f64 / m as f64)
            }
        })
        .collect();
    Ok(AlignmentMatrix { diag, reference })
}

impl AlignmentMatrix {
    pub fn diag(&self) -> &[Complex64] {
        &self.diag
    }

    pub fn reference(&self) -> PskSymbol {
        self.reference
    }

    pub fn to_matrix(&self) -> CMatrix {
        DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.diag))
    }

    /// `A · h`, scaling row `j` of `h` by entry `j`.
    pub fn apply(&self, h: &CMatrix) -> Result<CMatrix> {
        if h.nrows() != self.diag.len() {
            return Err(Error::DimensionMismatch(format!(
                "alignment of size {} applied to {} channel rows",
                self.diag.len(),
                h.nrows()
            )));
        }
        let mut out = h.clone();
        for (j, a) in self.diag.iter().enumerate() {
            for col in 0..h.ncols() {
                out[(j, col)] = a * h[(j, col)];
            }
        }
        Ok(out)
    }
}
