//! Scattering/transition operator algebra.

use faer::c64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::swe::WaveBasis;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    S,
    T,
    Z,
    Projection,
}

/// Dense operator tagged with its kind and (row) wave basis.
///
/// `extra` counts port dimensions appended after the spherical waves.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub kind: OperatorKind,
    pub basis: WaveBasis,
    pub extra: usize,
    pub data: CMat,
}

impl OperatorMatrix {
    pub fn new(kind: OperatorKind, basis: WaveBasis, data: CMat) -> Result<Self> {
        Self::with_ports(kind, basis, 0, data)
    }

    pub fn with_ports(kind: OperatorKind, basis: WaveBasis, extra: usize, data: CMat) -> Result<Self> {
        let dim = basis.len() + extra;
        if kind != OperatorKind::Projection && data.nrows() != data.ncols() {
            return Err(Error::Shape(format!("{kind:?} operator must be square, got {}x{}", data.nrows(), data.ncols())));
        }
        if kind != OperatorKind::Z && data.nrows() != dim {
            return Err(Error::Shape(format!("{} rows for a basis of dimension {dim}", data.nrows())));
        }
        for j in 0..data.ncols() {
            for i in 0..data.nrows() {
                let v = data[(i, j)];
                if !v.re.is_finite() || !v.im.is_finite() {
                    return Err(Error::Domain(format!("non-finite entry at ({i}, {j})")));
                }
            }
        }
        Ok(Self { kind, basis, extra, data })
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }
}

/// Eigenvalue of `S_bᴴS` together with its transition and characteristic
/// numbers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenTriple {
    pub s: c64,
    pub t: c64,
    /// `None` encodes λ = ∞ (s = 1).
    pub lambda: Option<c64>,
}

impl EigenTriple {
    pub fn from_t(t: c64) -> Self {
        eigen_maps(t * 2.0 + 1.0).with_t(t)
    }

    fn with_t(mut self, t: c64) -> Self {
        self.t = t;
        self
    }

    pub fn modal_significance(&self) -> f64 {
        self.t.norm()
    }

    /// Distance outside the lossless circle `|t + 1/2| = 1/2` (signed).
    pub fn circle_excess(&self) -> f64 {
        (self.t + 0.5).norm() - 0.5
    }

    pub fn lambda_is_infinite(&self) -> bool {
        self.lambda.is_none()
    }
}

pub fn eigen_maps(s: c64) -> EigenTriple {
    let one = c64::new(1.0, 0.0);
    let t = (s - one) * 0.5;
    let lambda = if s == one { None } else { Some(linalg::J * (s + one) / (s - one)) };
    EigenTriple { s, t, lambda }
}

/// `t` from a characteristic number, `t = −1/(1 + jλ)`.
pub fn t_from_lambda(lambda: f64) -> c64 {
    -linalg::ONE / c64::new(1.0, lambda)
}

fn check_square(m: &OperatorMatrix) -> Result<()> {
    if m.data.nrows() != m.data.ncols() {
        return Err(Error::Shape(format!("expected square operator, got {}x{}", m.data.nrows(), m.data.ncols())));
    }
    Ok(())
}

pub fn s_from_t(t: &OperatorMatrix) -> Result<OperatorMatrix> {
    check_square(t)?;
    let n = t.dim();
    let data = CMat::from_fn(n, n, |i, j| t.data[(i, j)] * 2.0 + if i == j { linalg::ONE } else { linalg::ZERO });
    Ok(OperatorMatrix { kind: OperatorKind::S, basis: t.basis.clone(), extra: t.extra, data })
}

pub fn t_from_s(s: &OperatorMatrix) -> Result<OperatorMatrix> {
    check_square(s)?;
    let n = s.dim();
    let data = CMat::from_fn(n, n, |i, j| (s.data[(i, j)] - if i == j { linalg::ONE } else { linalg::ZERO }) * 0.5);
    Ok(OperatorMatrix { kind: OperatorKind::T, basis: s.basis.clone(), extra: s.extra, data })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckReport {
    pub deviation: f64,
    pub pass: bool,
}

pub const DEFAULT_UNITARY_TOL: f64 = 1e-8;
pub const DEFAULT_SPECTRAL_TOL: f64 = 1e-6;

pub fn check_unitary(m: &OperatorMatrix, tol: f64) -> Result<CheckReport> {
    check_square(m)?;
    let deviation = linalg::unitarity_deviation(m.data.as_ref());
    Ok(CheckReport { deviation, pass: deviation <= tol })
}

/// `‖TᴴT + Re T‖_F/√n`, where `Re T` is the Hermitian part.
pub fn check_t_power(t: &OperatorMatrix, tol: f64) -> Result<CheckReport> {
    check_square(t)?;
    let n = t.dim();
    if n == 0 {
        return Ok(CheckReport { deviation: 0.0, pass: true });
    }
    let g = t.data.adjoint() * &t.data;
    let d = &g + linalg::hermitian_part(t.data.as_ref());
    let deviation = linalg::fro(d.as_ref()) / (n as f64).sqrt();
    Ok(CheckReport { deviation, pass: deviation <= tol })
}

/// Embed `m` into `target` through an explicit index map, acting as the
/// identity (S) or zero (T) on the complement.
pub fn embed_with_map(m: &OperatorMatrix, target: &WaveBasis, map: &[usize]) -> Result<OperatorMatrix> {
    check_square(m)?;
    if map.len() != m.dim() {
        return Err(Error::Mapping(format!("index map has {} entries for dimension {}", map.len(), m.dim())));
    }
    let n = target.len();
    let mut seen = vec![false; n];
    for &i in map {
        if i >= n {
            return Err(Error::Mapping(format!("index {i} outside target dimension {n}")));
        }
        if seen[i] {
            return Err(Error::Mapping(format!("index {i} mapped twice")));
        }
        seen[i] = true;
    }
    let fill = match m.kind {
        OperatorKind::T => linalg::ZERO,
        _ => linalg::ONE,
    };
    let mut data = CMat::from_fn(n, n, |i, j| if i == j { fill } else { linalg::ZERO });
    for (a, &i) in map.iter().enumerate() {
        for (b, &j) in map.iter().enumerate() {
            data[(i, j)] = m.data[(a, b)];
        }
    }
    Ok(OperatorMatrix { kind: m.kind, basis: target.clone(), extra: 0, data })
}

/// Embed into a larger basis using the canonical prefix order.
pub fn embed_identity(m: &OperatorMatrix, target: &WaveBasis) -> Result<OperatorMatrix> {
    let map = m.basis.embedding_into(target)?;
    embed_with_map(m, target, &map)
}
