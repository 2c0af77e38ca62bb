//! Spherical vector wave bookkeeping.
//!
//! Waves are power normalized with real-valued angular functions: an
//! outgoing coefficient vector `f` carries time-averaged power `|f|²/2`
//! once scaled by the dipole backend, and every regular wave is a real
//! vector field for real wavenumbers. Time convention is `exp(jωt)`, so
//! outgoing waves use the spherical Hankel function of the second kind.
//!
//! Angular functions, for a real spherical harmonic `Y_lm`:
//!
//! ```text
//! A1 = (∇Y × r) / sqrt(l(l+1))      (TE, tangential)
//! A2 = (r ∇Y)   / sqrt(l(l+1))      (TM, tangential)
//! A3 = r̂ Y                          (TM, radial)
//! regular TE = j_l(kr) A1
//! regular TM = (kr j_l)'/(kr) A2 + sqrt(l(l+1)) j_l(kr)/(kr) A3
//! ```

use std::fmt;

use faer::c64;

use crate::error::{Error, Result};
use crate::special::{gauss_legendre, irregular_radial, regular_radial, LegendreTable};

pub type Vec3 = [f64; 3];
pub type CVec3 = [c64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarization {
    TE,
    TM,
}

/// Degree, azimuthal index and polarization of one spherical vector wave.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WaveIndex {
    pub l: usize,
    pub m: i64,
    pub pol: Polarization,
}

impl WaveIndex {
    pub fn new(l: usize, m: i64, pol: Polarization) -> Result<Self> {
        if l < 1 || m.unsigned_abs() as usize > l {
            return Err(Error::Domain(format!("invalid wave index l={l}, m={m}")));
        }
        Ok(Self { l, m, pol })
    }

    /// Position of this index in the canonical ordering
    /// `(l ascending, m ascending, TE before TM)`.
    pub fn position(&self) -> usize {
        let l = self.l as i64;
        let pol = match self.pol {
            Polarization::TE => 0,
            Polarization::TM => 1,
        };
        (2 * (l * l - 1) + 2 * (self.m + l) + pol) as usize
    }

    /// Kept by a PEC ground plane at z = 0: TE with even `l + m`, TM with
    /// odd `l + m`.
    pub fn ground_plane_allowed(&self) -> bool {
        let even = (self.l as i64 + self.m).rem_euclid(2) == 0;
        match self.pol {
            Polarization::TE => even,
            Polarization::TM => !even,
        }
    }
}

impl fmt::Display for WaveIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {:?})", self.l, self.m, self.pol)
    }
}

/// Normalization tag carried by every basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convention {
    PowerNormalizedReal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveBasis {
    l_max: usize,
    indices: Vec<WaveIndex>,
    convention: Convention,
}

impl WaveBasis {
    pub fn new(l_max: usize) -> Result<Self> {
        if l_max < 1 {
            return Err(Error::Domain(format!("l_max must be >= 1, got {l_max}")));
        }
        let mut indices = Vec::with_capacity(2 * l_max * (l_max + 2));
        for l in 1..=l_max {
            for m in -(l as i64)..=(l as i64) {
                for pol in [Polarization::TE, Polarization::TM] {
                    indices.push(WaveIndex { l, m, pol });
                }
            }
        }
        Ok(Self { l_max, indices, convention: Convention::PowerNormalizedReal })
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[WaveIndex] {
        &self.indices
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    /// Index map from this basis into a larger one (prefix under the
    /// canonical order).
    pub fn embedding_into(&self, target: &WaveBasis) -> Result<Vec<usize>> {
        if target.l_max < self.l_max {
            return Err(Error::Mapping(format!(
                "basis with l_max {} does not embed into l_max {}",
                self.l_max, target.l_max
            )));
        }
        Ok(self.indices.iter().map(WaveIndex::position).collect())
    }
}

/// Basis size for a given truncation, `2 l_max (l_max + 2)`.
pub fn basis_size(l_max: usize) -> usize {
    2 * l_max * (l_max + 2)
}

/// Truncation order `ceil(ka + 7 (ka)^(1/3) + 3)` for a scatterer of
/// electrical radius `ka`.
pub fn truncation_order(ka: f64) -> Result<usize> {
    if !ka.is_finite() || ka <= 0.0 {
        return Err(Error::Domain(format!("electrical radius must be positive and finite, got {ka}")));
    }
    Ok(((ka + 7.0 * ka.cbrt() + 3.0).ceil() as usize).max(1))
}

pub fn basis(l_max: usize) -> Result<WaveBasis> {
    WaveBasis::new(l_max)
}

/// Positions (into `basis`) of the waves compatible with a PEC plane at z = 0.
pub fn ground_plane_filter(basis: &WaveBasis) -> Vec<usize> {
    basis
        .indices()
        .iter()
        .enumerate()
        .filter(|(_, w)| w.ground_plane_allowed())
        .map(|(i, _)| i)
        .collect()
}

pub(crate) fn norm3(p: &Vec3) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

/// Angular frame and Legendre data at a point, shared by all waves.
struct Angular {
    rhat: Vec3,
    that: Vec3,
    phat: Vec3,
    phi: f64,
    leg: LegendreTable,
}

impl Angular {
    fn new(l_max: usize, point: &Vec3) -> (f64, Self) {
        let r = norm3(point);
        let (theta, phi) = if r == 0.0 {
            (0.0, 0.0)
        } else {
            ((point[2] / r).clamp(-1.0, 1.0).acos(), point[1].atan2(point[0]))
        };
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        let ang = Angular {
            rhat: [st * cp, st * sp, ct],
            that: [ct * cp, ct * sp, -st],
            phat: [-sp, cp, 0.0],
            phi,
            leg: LegendreTable::new(l_max, theta),
        };
        (r, ang)
    }

    /// `(Y, ∂θY, (1/sinθ) ∂φY)` for the real harmonic `(l, m)`.
    fn harmonic(&self, l: usize, m: i64) -> (f64, f64, f64) {
        let mu = m.unsigned_abs() as usize;
        let (p, dp, q) = (self.leg.p(l, mu), self.leg.dp(l, mu), if mu > 0 { self.leg.q(l, mu) } else { 0.0 });
        let sq2 = std::f64::consts::SQRT_2;
        let muf = mu as f64;
        match m.cmp(&0) {
            std::cmp::Ordering::Equal => (p, dp, 0.0),
            std::cmp::Ordering::Greater => {
                let (s, c) = (muf * self.phi).sin_cos();
                (sq2 * p * c, sq2 * dp * c, -sq2 * muf * q * s)
            }
            std::cmp::Ordering::Less => {
                let (s, c) = (muf * self.phi).sin_cos();
                (sq2 * p * s, sq2 * dp * s, sq2 * muf * q * c)
            }
        }
    }

    /// `(A1, A2, A3)` for `(l, m)`.
    fn vector_harmonics(&self, l: usize, m: i64) -> (Vec3, Vec3, Vec3) {
        let (y, yt, yp) = self.harmonic(l, m);
        let norm = 1.0 / ((l * (l + 1)) as f64).sqrt();
        let mut a1 = [0.0; 3];
        let mut a2 = [0.0; 3];
        let mut a3 = [0.0; 3];
        for i in 0..3 {
            a1[i] = norm * (self.that[i] * yp - self.phat[i] * yt);
            a2[i] = norm * (self.that[i] * yt + self.phat[i] * yp);
            a3[i] = self.rhat[i] * y;
        }
        (a1, a2, a3)
    }
}

/// All regular waves of `basis` evaluated at one point.
pub fn regular_waves_at(basis: &WaveBasis, k: f64, point: &Vec3) -> Vec<Vec3> {
    let (r, ang) = Angular::new(basis.l_max(), point);
    let radial = regular_radial(basis.l_max(), k * r);
    basis
        .indices()
        .iter()
        .map(|w| {
            let (a1, a2, a3) = ang.vector_harmonics(w.l, w.m);
            let (jl, dpsi, jx) = radial[w.l];
            match w.pol {
                Polarization::TE => a1.map(|c| jl * c),
                Polarization::TM => {
                    let s = ((w.l * (w.l + 1)) as f64).sqrt();
                    [0, 1, 2].map(|i| dpsi * a2[i] + s * jx * a3[i])
                }
            }
        })
        .collect()
}

/// Value of one regular spherical vector wave.
pub fn regular_wave_field(idx: WaveIndex, k: f64, point: &Vec3) -> Vec3 {
    let (r, ang) = Angular::new(idx.l, point);
    let (jl, dpsi, jx) = regular_radial(idx.l, k * r)[idx.l];
    let (a1, a2, a3) = ang.vector_harmonics(idx.l, idx.m);
    match idx.pol {
        Polarization::TE => a1.map(|c| jl * c),
        Polarization::TM => {
            let s = ((idx.l * (idx.l + 1)) as f64).sqrt();
            [0, 1, 2].map(|i| dpsi * a2[i] + s * jx * a3[i])
        }
    }
}

/// All outgoing waves (spherical Hankel functions of the second kind) of
/// `basis` at one point; the point must not be the origin.
pub fn outgoing_waves_at(basis: &WaveBasis, k: f64, point: &Vec3) -> Result<Vec<CVec3>> {
    let (r, ang) = Angular::new(basis.l_max(), point);
    if r == 0.0 {
        return Err(Error::Domain("outgoing waves are singular at the origin".into()));
    }
    let x = k * r;
    let reg = regular_radial(basis.l_max(), x);
    let irr = irregular_radial(basis.l_max(), x);
    Ok(basis
        .indices()
        .iter()
        .map(|w| {
            let (a1, a2, a3) = ang.vector_harmonics(w.l, w.m);
            let (jl, dpsi, jx) = reg[w.l];
            let (yl, dchi, yx) = irr[w.l];
            let h = c64::new(jl, -yl);
            let dxi = c64::new(dpsi, -dchi);
            let hx = c64::new(jx, -yx);
            match w.pol {
                Polarization::TE => a1.map(|c| h * c),
                Polarization::TM => {
                    let s = ((w.l * (w.l + 1)) as f64).sqrt();
                    [0, 1, 2].map(|i| dxi * a2[i] + hx * (s * a3[i]))
                }
            }
        })
        .collect())
}

/// One sampled field value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub point: Vec3,
    pub value: CVec3,
}

/// Gauss–Legendre (polar) × uniform (azimuth) quadrature on a sphere.
#[derive(Debug, Clone)]
pub struct SphereGrid {
    pub radius: f64,
    pub n_theta: usize,
    pub n_phi: usize,
    points: Vec<Vec3>,
    weights: Vec<f64>,
}

impl SphereGrid {
    pub fn new(radius: f64, n_theta: usize, n_phi: usize) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::Domain(format!("grid radius must be positive, got {radius}")));
        }
        if n_theta == 0 || n_phi == 0 {
            return Err(Error::Resolution("empty quadrature grid".into()));
        }
        let (z, w) = gauss_legendre(n_theta);
        let dphi = 2.0 * std::f64::consts::PI / n_phi as f64;
        let mut points = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        for (zi, wi) in z.iter().zip(&w) {
            let st = (1.0 - zi * zi).max(0.0).sqrt();
            for j in 0..n_phi {
                let (sp, cp) = (j as f64 * dphi).sin_cos();
                points.push([radius * st * cp, radius * st * sp, radius * zi]);
                weights.push(wi * dphi);
            }
        }
        Ok(Self { radius, n_theta, n_phi, points, weights })
    }

    /// Grid resolving products of waves up to degree `l_max`.
    pub fn for_degree(radius: f64, l_max: usize) -> Result<Self> {
        Self::new(radius, l_max + 2, 2 * l_max + 3)
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    /// Solid-angle weights (sum to 4π).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn check_resolution(&self, l_max: usize) -> Result<()> {
        if self.n_theta < l_max + 1 || self.n_phi < 2 * l_max + 1 || self.len() < (l_max + 1) * (l_max + 1) {
            return Err(Error::Resolution(format!(
                "{}x{} grid cannot resolve degree {l_max}",
                self.n_theta, self.n_phi
            )));
        }
        Ok(())
    }
}

/// Result of projecting sampled fields onto regular waves.
#[derive(Debug, Clone)]
pub struct Projection {
    pub coefficients: Vec<c64>,
    /// Relative L2 mismatch between the samples and the truncated expansion.
    pub residual: f64,
}

/// Per-grid cache of regular-wave values at the quadrature nodes.
#[derive(Debug, Clone)]
pub struct RegularProjector {
    grid: SphereGrid,
    basis: WaveBasis,
    values: Vec<Vec<Vec3>>,
    norms: Vec<f64>,
}

impl RegularProjector {
    pub fn new(grid: SphereGrid, basis: &WaveBasis, k: f64) -> Result<Self> {
        grid.check_resolution(basis.l_max())?;
        if !(k > 0.0) {
            return Err(Error::Domain(format!("wavenumber must be positive, got {k}")));
        }
        let values: Vec<Vec<Vec3>> = grid.points().iter().map(|p| regular_waves_at(basis, k, p)).collect();
        let radial = regular_radial(basis.l_max(), k * grid.radius);
        let norms: Vec<f64> = basis
            .indices()
            .iter()
            .map(|w| {
                let (jl, dpsi, jx) = radial[w.l];
                match w.pol {
                    Polarization::TE => jl * jl,
                    Polarization::TM => dpsi * dpsi + (w.l * (w.l + 1)) as f64 * jx * jx,
                }
            })
            .collect();
        if let Some((i, _)) = norms.iter().enumerate().find(|(_, n)| **n < 1e-280) {
            return Err(Error::Resolution(format!(
                "wave {} vanishes on the sampling sphere (kr = {})",
                basis.indices()[i],
                k * grid.radius
            )));
        }
        Ok(Self { grid, basis: basis.clone(), values, norms })
    }

    pub fn grid(&self) -> &SphereGrid {
        &self.grid
    }

    pub fn basis(&self) -> &WaveBasis {
        &self.basis
    }

    /// Project field values given at the grid nodes (same order as
    /// [`SphereGrid::points`]).
    pub fn project(&self, field: &[CVec3]) -> Result<Projection> {
        if field.len() != self.grid.len() {
            return Err(Error::Shape(format!("{} samples for a {}-node grid", field.len(), self.grid.len())));
        }
        let n = self.basis.len();
        let mut coef = vec![c64::new(0.0, 0.0); n];
        for ((vals, e), w) in self.values.iter().zip(field).zip(self.grid.weights()) {
            for (c, v) in coef.iter_mut().zip(vals) {
                *c += (e[0] * v[0] + e[1] * v[1] + e[2] * v[2]) * *w;
            }
        }
        for (c, nrm) in coef.iter_mut().zip(&self.norms) {
            *c /= *nrm;
        }
        let mut err = 0.0;
        let mut tot = 0.0;
        for ((vals, e), w) in self.values.iter().zip(field).zip(self.grid.weights()) {
            let mut rec = [c64::new(0.0, 0.0); 3];
            for (c, v) in coef.iter().zip(vals) {
                for i in 0..3 {
                    rec[i] += *c * v[i];
                }
            }
            for i in 0..3 {
                err += w * (e[i] - rec[i]).norm_sqr();
                tot += w * e[i].norm_sqr();
            }
        }
        let residual = if tot == 0.0 { 0.0 } else { (err / tot).sqrt() };
        Ok(Projection { coefficients: coef, residual })
    }
}

/// Project field samples lying on a full quadrature grid of radius `r`.
///
/// Samples must be in grid order; the grid is validated against the basis
/// truncation.
pub fn project_onto_regular(samples: &[FieldSample], grid: &SphereGrid, k: f64, basis: &WaveBasis) -> Result<Projection> {
    if samples.len() != grid.len() {
        return Err(Error::Shape(format!("{} samples for a {}-node grid", samples.len(), grid.len())));
    }
    for (s, p) in samples.iter().zip(grid.points()) {
        let d = ((s.point[0] - p[0]).powi(2) + (s.point[1] - p[1]).powi(2) + (s.point[2] - p[2]).powi(2)).sqrt();
        if d > 1e-9 * grid.radius || s.value.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Precondition("samples do not match the quadrature grid".into()));
        }
    }
    let proj = RegularProjector::new(grid.clone(), basis, k)?;
    let field: Vec<CVec3> = samples.iter().map(|s| s.value).collect();
    proj.project(&field)
}
