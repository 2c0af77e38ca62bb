//! Coupled-dipole volumetric MoM.
//!
//! Unknowns are current moments `I = jωp` (A·m), three per dipole, ordered
//! `3·p + axis`. The impedance matrix is
//! `Z_pq = jkη·G(r_p − r_q)` off the diagonal and
//! `Z_pp = k²η/(6π)·1 − j(η/k)·α⁻¹` on it, so `Re Z = U₁ᵀU₁` with
//! `U₁ = k√η·v(k r_p)` for the regular waves `v`.

use faer::c64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, Lu};
use crate::network::{s_from_t, OperatorKind, OperatorMatrix};
use crate::par;
use crate::swe::{self, norm3, regular_waves_at, Vec3, WaveBasis};

pub const C0: f64 = 299_792_458.0;
pub const ETA0: f64 = 376.730_313_668;

pub type Mat3 = [[f64; 3]; 3];

pub fn wavenumber(frequency_hz: f64) -> f64 {
    2.0 * std::f64::consts::PI * frequency_hz / C0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    Controllable,
    Background,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Port {
    pub element: usize,
    pub axis: usize,
    pub z0: f64,
    /// Effective gap length (m) converting current moment to port current.
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DipoleScene {
    pub positions: Vec<Vec3>,
    /// Static polarizabilities (m³), symmetric positive definite.
    pub polarizabilities: Vec<Mat3>,
    pub regions: Vec<Region>,
    pub ports: Vec<Port>,
    pub ground_plane: bool,
    /// Optional Lorentz resonance shared by all dipoles:
    /// `α(f) = α_s / (1 − (f/f₀)²)`.
    pub resonance_hz: Option<f64>,
}

pub fn isotropic(alpha: f64) -> Mat3 {
    [[alpha, 0.0, 0.0], [0.0, alpha, 0.0], [0.0, 0.0, alpha]]
}

fn det3(a: &Mat3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

fn inv3(a: &Mat3) -> Mat3 {
    let d = det3(a);
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (i1, i2) = ((j + 1) % 3, (j + 2) % 3);
            let (j1, j2) = ((i + 1) % 3, (i + 2) % 3);
            r[i][j] = (a[i1][j1] * a[i2][j2] - a[i1][j2] * a[i2][j1]) / d;
        }
    }
    r
}

fn is_spd(a: &Mat3) -> bool {
    let sym = (0..3).all(|i| (0..3).all(|j| (a[i][j] - a[j][i]).abs() <= 1e-12 * (a[i][j].abs() + a[j][i].abs())));
    let m1 = a[0][0];
    let m2 = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    sym && m1 > 0.0 && m2 > 0.0 && det3(a) > 0.0 && a.iter().flatten().all(|v| v.is_finite())
}

const MIRROR: [f64; 3] = [-1.0, -1.0, 1.0];

impl DipoleScene {
    pub fn new(positions: Vec<Vec3>, polarizabilities: Vec<Mat3>, regions: Vec<Region>) -> Result<Self> {
        let s = Self { positions, polarizabilities, regions, ports: vec![], ground_plane: false, resonance_hz: None };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dofs(&self) -> usize {
        3 * self.len()
    }

    pub fn with_ground_plane(mut self) -> Result<Self> {
        self.ground_plane = true;
        self.validate()?;
        Ok(self)
    }

    pub fn with_ports(mut self, ports: Vec<Port>) -> Result<Self> {
        self.ports = ports;
        self.validate()?;
        Ok(self)
    }

    pub fn indices_of(&self, region: Region) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.regions[i] == region).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        if self.polarizabilities.len() != n || self.regions.len() != n {
            return Err(Error::Shape(format!(
                "{n} positions, {} polarizabilities, {} region labels",
                self.polarizabilities.len(),
                self.regions.len()
            )));
        }
        for (i, p) in self.positions.iter().enumerate() {
            if p.iter().any(|c| !c.is_finite()) {
                return Err(Error::Geometry(format!("dipole {i} has a non-finite position")));
            }
            if self.ground_plane && p[2] <= 0.0 {
                return Err(Error::Geometry(format!("dipole {i} is not above the ground plane (z = {})", p[2])));
            }
        }
        let scale = self.positions.iter().map(norm3).fold(0.0, f64::max).max(1e-300);
        for i in 0..n {
            for j in (i + 1)..n {
                let d = norm3(&sub(&self.positions[i], &self.positions[j]));
                if d <= 1e-12 * scale {
                    return Err(Error::Geometry(format!("dipoles {i} and {j} coincide")));
                }
            }
        }
        for (i, a) in self.polarizabilities.iter().enumerate() {
            if !is_spd(a) {
                return Err(Error::Domain(format!("polarizability of dipole {i} is not symmetric positive definite")));
            }
        }
        if let Some(f0) = self.resonance_hz {
            if !(f0 > 0.0) || !f0.is_finite() {
                return Err(Error::Domain(format!("resonance frequency must be positive, got {f0}")));
            }
        }
        for (q, p) in self.ports.iter().enumerate() {
            if p.element >= n || p.axis > 2 {
                return Err(Error::Geometry(format!("port {q} references element {} axis {}", p.element, p.axis)));
            }
            if self.regions[p.element] != Region::Controllable {
                return Err(Error::Geometry(format!("port {q} sits on a background dipole")));
            }
            if !(p.z0 > 0.0) || !p.z0.is_finite() {
                return Err(Error::Domain(format!("port {q} reference impedance must be positive, got {}", p.z0)));
            }
            if !(p.length > 0.0) || !p.length.is_finite() {
                return Err(Error::Domain(format!("port {q} length must be positive, got {}", p.length)));
            }
            if self.ports[..q].iter().any(|o| o.element == p.element && o.axis == p.axis) {
                return Err(Error::Geometry(format!("port {q} duplicates an earlier port")));
            }
        }
        Ok(())
    }

    /// Largest distance of a dipole (and its image) from the origin.
    pub fn radius(&self) -> f64 {
        self.positions.iter().map(norm3).fold(0.0, f64::max)
    }

    /// Inverse of the (possibly dispersive) polarizability at wavenumber `k`.
    fn inverse_polarizability(&self, p: usize, k: f64) -> Mat3 {
        let mut inv = inv3(&self.polarizabilities[p]);
        if let Some(f0) = self.resonance_hz {
            let k0 = wavenumber(f0);
            let s = 1.0 - (k / k0).powi(2);
            for row in inv.iter_mut() {
                for v in row.iter_mut() {
                    *v *= s;
                }
            }
        }
        inv
    }
}

fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn mirrored(p: &Vec3) -> Vec3 {
    [p[0], p[1], -p[2]]
}

fn check_k(k: f64) -> Result<()> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::Domain(format!("wavenumber must be positive and finite, got {k}")));
    }
    Ok(())
}

/// Free-space dyadic Green's function `(1 + ∇∇/k²) e^{-jkR}/(4πR)`.
pub fn green_dyadic(k: f64, r: &Vec3) -> [[c64; 3]; 3] {
    let d = norm3(r);
    let kr = k * d;
    let g = c64::from_polar(1.0 / (4.0 * std::f64::consts::PI * d), -kr);
    let inv = 1.0 / kr;
    let a = g * c64::new(1.0 - inv * inv, -inv);
    let b = g * c64::new(-1.0 + 3.0 * inv * inv, 3.0 * inv);
    let u = [r[0] / d, r[1] / d, r[2] / d];
    let mut out = [[linalg::ZERO; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = b * (u[i] * u[j]);
            if i == j {
                out[i][j] += a;
            }
        }
    }
    out
}

fn coupling(k: f64, r: &Vec3) -> [[c64; 3]; 3] {
    let s = c64::new(0.0, k * ETA0);
    green_dyadic(k, r).map(|row| row.map(|v| v * s))
}

fn self_term(scene: &DipoleScene, p: usize, k: f64) -> [[c64; 3]; 3] {
    let inv = scene.inverse_polarizability(p, k);
    let rad = k * k * ETA0 / (6.0 * std::f64::consts::PI);
    let mut out = [[linalg::ZERO; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = c64::new(if i == j { rad } else { 0.0 }, -(ETA0 / k) * inv[i][j]);
        }
    }
    out
}

/// Full impedance matrix in scene order; the ground plane (if set) is
/// folded in through image dipoles.
pub fn impedance_matrix(scene: &DipoleScene, k: f64) -> Result<CMat> {
    check_k(k)?;
    scene.validate()?;
    let n = scene.len();
    let rows: Vec<Vec<[[c64; 3]; 3]>> = par::map_range(n, |p| {
        (0..n)
            .map(|q| {
                let mut blk = if p == q { self_term(scene, p, k) } else { coupling(k, &sub(&scene.positions[p], &scene.positions[q])) };
                if scene.ground_plane {
                    let img = coupling(k, &sub(&scene.positions[p], &mirrored(&scene.positions[q])));
                    for i in 0..3 {
                        for j in 0..3 {
                            blk[i][j] += img[i][j] * MIRROR[j];
                        }
                    }
                }
                blk
            })
            .collect()
    });
    let mut z = CMat::zeros(3 * n, 3 * n);
    for (p, row) in rows.iter().enumerate() {
        for (q, blk) in row.iter().enumerate() {
            for i in 0..3 {
                for j in 0..3 {
                    z[(3 * p + i, 3 * q + j)] = blk[i][j];
                }
            }
        }
    }
    Ok(z)
}

/// Smallest admissible wave basis for the scene at wavenumber `k`.
pub fn scene_basis(scene: &DipoleScene, k: f64) -> Result<WaveBasis> {
    check_k(k)?;
    let ka = (k * scene.radius()).max(1e-3);
    swe::basis(swe::truncation_order(ka)?)
}

fn projection_columns(basis: &WaveBasis, k: f64, point: &Vec3) -> Vec<Vec3> {
    regular_waves_at(basis, k, point)
}

/// Real projection `U₁` (basis × 3N) in scene order.
///
/// With a ground plane, columns include the image contribution and are
/// scaled by `1/√2` so that `Re Z = U₁ᵀU₁` holds for the half-space system.
pub fn assemble_projection(scene: &DipoleScene, k: f64, basis: &WaveBasis) -> Result<CMat> {
    check_k(k)?;
    scene.validate()?;
    let scale = k * ETA0.sqrt();
    let n = scene.len();
    let cols: Vec<Vec<Vec3>> = par::map_range(n, |p| {
        let v = projection_columns(basis, k, &scene.positions[p]);
        if scene.ground_plane {
            let w = projection_columns(basis, k, &mirrored(&scene.positions[p]));
            v.iter()
                .zip(&w)
                .map(|(a, b)| [0, 1, 2].map(|j| (a[j] + b[j] * MIRROR[j]) * std::f64::consts::FRAC_1_SQRT_2))
                .collect()
        } else {
            v
        }
    });
    let mut u = CMat::zeros(basis.len(), 3 * n);
    for (p, col) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            for j in 0..3 {
                u[(i, 3 * p + j)] = c64::new(scale * v[j], 0.0);
            }
        }
    }
    Ok(u)
}

/// Impedance and projection partitioned into background (b) and
/// controllable (c) blocks. The stacked unknown order is `[b; c]`.
///
/// `t0` is an optional background transition matrix already present
/// without any dipole (e.g. a sphere); then `T = t0 − U Z⁻¹ Uᵀ`.
#[derive(Debug, Clone)]
pub struct BlockImpedance {
    pub basis: WaveBasis,
    pub k: f64,
    pub background: Vec<usize>,
    pub controllable: Vec<usize>,
    pub z_bb: CMat,
    pub z_bc: CMat,
    pub z_cb: CMat,
    pub z_cc: CMat,
    pub u1_b: CMat,
    pub u1_c: CMat,
    pub t0: Option<CMat>,
    /// `‖Herm Z − U₁ᴴU₁‖_F / ‖Herm Z‖_F`.
    pub factorization_residual: f64,
}

fn dof_list(ids: &[usize]) -> Vec<usize> {
    ids.iter().flat_map(|&p| (0..3).map(move |a| 3 * p + a)).collect()
}

/// Transition and scattering matrices of a scene and of its background.
#[derive(Debug, Clone)]
pub struct Transition {
    pub t: OperatorMatrix,
    pub t_b: OperatorMatrix,
    pub s: OperatorMatrix,
    pub s_b: OperatorMatrix,
}

impl BlockImpedance {
    /// Partition full `z` and `u` (scene order) by region.
    pub fn from_parts(
        basis: WaveBasis,
        k: f64,
        regions: &[Region],
        z: &CMat,
        u: &CMat,
        t0: Option<CMat>,
    ) -> Result<Self> {
        let n = regions.len();
        if z.nrows() != 3 * n || z.ncols() != 3 * n || u.ncols() != 3 * n || u.nrows() != basis.len() {
            return Err(Error::Shape("impedance/projection sizes do not match the scene".into()));
        }
        if let Some(t) = &t0 {
            if t.nrows() != basis.len() || t.ncols() != basis.len() {
                return Err(Error::Shape("background transition matrix does not match the basis".into()));
            }
        }
        let background: Vec<usize> = (0..n).filter(|&i| regions[i] == Region::Background).collect();
        let controllable: Vec<usize> = (0..n).filter(|&i| regions[i] == Region::Controllable).collect();
        let (db, dc) = (dof_list(&background), dof_list(&controllable));
        let rows: Vec<usize> = (0..basis.len()).collect();
        let herm = linalg::hermitian_part(z.as_ref());
        let gram = u.adjoint() * u;
        let den = linalg::fro(herm.as_ref());
        let factorization_residual =
            if den == 0.0 { 0.0 } else { linalg::fro((&herm - &gram).as_ref()) / den };
        Ok(Self {
            z_bb: linalg::submatrix(z.as_ref(), &db, &db),
            z_bc: linalg::submatrix(z.as_ref(), &db, &dc),
            z_cb: linalg::submatrix(z.as_ref(), &dc, &db),
            z_cc: linalg::submatrix(z.as_ref(), &dc, &dc),
            u1_b: linalg::submatrix(u.as_ref(), &rows, &db),
            u1_c: linalg::submatrix(u.as_ref(), &rows, &dc),
            basis,
            k,
            background,
            controllable,
            t0,
            factorization_residual,
        })
    }

    pub fn n_b(&self) -> usize {
        self.z_bb.nrows()
    }

    pub fn n_c(&self) -> usize {
        self.z_cc.nrows()
    }

    /// Full `Z` in `[b; c]` order.
    pub fn full_z(&self) -> CMat {
        let (nb, nc) = (self.n_b(), self.n_c());
        CMat::from_fn(nb + nc, nb + nc, |i, j| match (i < nb, j < nb) {
            (true, true) => self.z_bb[(i, j)],
            (true, false) => self.z_bc[(i, j - nb)],
            (false, true) => self.z_cb[(i - nb, j)],
            (false, false) => self.z_cc[(i - nb, j - nb)],
        })
    }

    /// Full `U₁` in `[b; c]` column order.
    pub fn full_u(&self) -> CMat {
        let nb = self.n_b();
        CMat::from_fn(self.basis.len(), nb + self.n_c(), |i, j| {
            if j < nb {
                self.u1_b[(i, j)]
            } else {
                self.u1_c[(i, j - nb)]
            }
        })
    }

    fn t_offset(&self) -> CMat {
        self.t0.clone().unwrap_or_else(|| CMat::zeros(self.basis.len(), self.basis.len()))
    }

    /// `t0 − U Z⁻¹ Uᵀ`.
    fn reduced_t(&self, u: &CMat, z: &CMat, what: &str) -> Result<CMat> {
        let mut t = self.t_offset();
        if z.nrows() > 0 {
            let x = linalg::solve(z.as_ref(), u.transpose(), what)?;
            t -= u * &x;
        }
        Ok(t)
    }

    pub fn t_matrix(&self) -> Result<CMat> {
        self.reduced_t(&self.full_u(), &self.full_z(), "scene impedance")
    }

    pub fn t_background(&self) -> Result<CMat> {
        self.reduced_t(&self.u1_b, &self.z_bb, "background impedance")
    }

    pub fn transition(&self) -> Result<Transition> {
        let t = OperatorMatrix::new(OperatorKind::T, self.basis.clone(), self.t_matrix()?)?;
        let t_b = OperatorMatrix::new(OperatorKind::T, self.basis.clone(), self.t_background()?)?;
        Ok(Transition { s: s_from_t(&t)?, s_b: s_from_t(&t_b)?, t, t_b })
    }

    /// Position of scene dof `(dipole, axis)` in the `[b; c]` ordering.
    pub fn stacked_dof(&self, dipole: usize, axis: usize) -> Option<usize> {
        if let Some(i) = self.background.iter().position(|&p| p == dipole) {
            return Some(3 * i + axis);
        }
        self.controllable.iter().position(|&p| p == dipole).map(|i| self.n_b() + 3 * i + axis)
    }
}

pub fn assemble_impedance_with_basis(scene: &DipoleScene, k: f64, basis: &WaveBasis) -> Result<BlockImpedance> {
    let z = impedance_matrix(scene, k)?;
    let u = assemble_projection(scene, k, basis)?;
    BlockImpedance::from_parts(basis.clone(), k, &scene.regions, &z, &u, None)
}

pub fn assemble_impedance(scene: &DipoleScene, k: f64) -> Result<BlockImpedance> {
    assemble_impedance_with_basis(scene, k, &scene_basis(scene, k)?)
}

pub fn transition(scene: &DipoleScene, k: f64) -> Result<Transition> {
    assemble_impedance(scene, k)?.transition()
}

/// Free-space scene holding the originals followed by their images.
pub fn mirror_scene(scene: &DipoleScene) -> Result<DipoleScene> {
    if !scene.ground_plane {
        return Err(Error::Precondition("scene has no ground plane to mirror".into()));
    }
    scene.validate()?;
    if !scene.ports.is_empty() {
        return Err(Error::Precondition("mirroring scenes with ports is not supported".into()));
    }
    let mut out = scene.clone();
    out.ground_plane = false;
    for p in 0..scene.len() {
        out.positions.push(mirrored(&scene.positions[p]));
        let a = scene.polarizabilities[p];
        out.polarizabilities.push(std::array::from_fn(|i| std::array::from_fn(|j| MIRROR[i] * a[i][j] * MIRROR[j])));
        out.regions.push(scene.regions[p]);
    }
    out.validate()?;
    Ok(out)
}

/// Scattering matrix over spherical waves followed by port power waves.
#[derive(Debug, Clone)]
pub struct PortScattering {
    pub s: OperatorMatrix,
    /// Background scattering matrix, identity on the port rows.
    pub s_b: OperatorMatrix,
    pub blocks: BlockImpedance,
    /// Stacked dof index of every port.
    pub port_dofs: Vec<usize>,
}

/// Generalized scattering matrix `S = 1 − 2WᵀYW` with
/// `W = [U₁ᵀ, B·diag(√z0)]`, `Y = (Z + L)⁻¹` and port load
/// `L = z0/ℓ²` on the port dofs.
pub fn generalized_scattering(scene: &DipoleScene, k: f64) -> Result<PortScattering> {
    let blocks = assemble_impedance(scene, k)?;
    generalized_scattering_from_blocks(scene, blocks)
}

pub fn generalized_scattering_from_blocks(scene: &DipoleScene, blocks: BlockImpedance) -> Result<PortScattering> {
    let nw = blocks.basis.len();
    let np = scene.ports.len();
    let mut z = blocks.full_z();
    let u = blocks.full_u();
    let nd = z.nrows();
    let mut port_dofs = Vec::with_capacity(np);
    let mut w = CMat::zeros(nd, nw + np);
    for i in 0..nd {
        for a in 0..nw {
            w[(i, a)] = u[(a, i)];
        }
    }
    for (q, p) in scene.ports.iter().enumerate() {
        let d = blocks
            .stacked_dof(p.element, p.axis)
            .ok_or_else(|| Error::Geometry(format!("port {q} element not in the scene")))?;
        z[(d, d)] += c64::new(p.z0 / (p.length * p.length), 0.0);
        w[(d, nw + q)] = c64::new(p.z0.sqrt() / p.length, 0.0);
        port_dofs.push(d);
    }
    let y_w = linalg::solve(z.as_ref(), w.as_ref(), "port-loaded impedance")?;
    let g = w.transpose() * &y_w;
    let dim = nw + np;
    let s_data = CMat::from_fn(dim, dim, |i, j| if i == j { linalg::ONE } else { linalg::ZERO } - g[(i, j)] * 2.0);
    let t_b = blocks.t_background()?;
    let s_b_data = CMat::from_fn(dim, dim, |i, j| {
        let id = if i == j { linalg::ONE } else { linalg::ZERO };
        if i < nw && j < nw {
            id + t_b[(i, j)] * 2.0
        } else {
            id
        }
    });
    Ok(PortScattering {
        s: OperatorMatrix::with_ports(OperatorKind::S, blocks.basis.clone(), np, s_data)?,
        s_b: OperatorMatrix::with_ports(OperatorKind::S, blocks.basis.clone(), np, s_b_data)?,
        blocks,
        port_dofs,
    })
}

/// Solve `(Z + L) I = V` for the stacked currents, useful for diagnostics.
pub fn solve_currents(blocks: &BlockImpedance, rhs: &[c64]) -> Result<Vec<c64>> {
    Ok(Lu::new(blocks.full_z().as_ref(), "scene impedance")?.solve_vec(rhs))
}
