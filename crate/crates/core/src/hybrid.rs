//! Dipole cloud coupled to a sphere described only by its transition
//! matrix.
//!
//! With `U₄` mapping dipole currents to the regular-wave field they
//! produce at the sphere, the coupled system is
//! `(Z + U₄ᵀT₁U₄) I = (U₁ᵀ + U₄ᵀT₁) a` and the composite transition
//! matrix is `T₁ − U₁′Z′⁻¹U₁′ᵀ` with `U₁′ = U₁ + T₁U₄`.

use faer::c64;

use crate::dipole::{assemble_projection, impedance_matrix, green_dyadic, BlockImpedance, DipoleScene, Region, ETA0};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::mie::{mie_diagonal, SphereSpec};
use crate::modes::{cm_impedance_substructure, cm_scattering, ModeSet};
use crate::par;
use crate::swe::{self, norm3, outgoing_waves_at, CVec3, RegularProjector, SphereGrid, WaveBasis};

#[derive(Debug, Clone)]
pub struct HybridScene {
    pub mom: DipoleScene,
    pub sphere: SphereSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum U4Method {
    /// Quadrature projection of sampled dipole fields.
    Quadrature,
    /// Closed form from outgoing waves at the dipole positions.
    Analytic,
}

/// `U₄` with its per-column projection self-check.
#[derive(Debug, Clone)]
pub struct U4 {
    pub data: CMat,
    /// Relative change of each column against a denser check grid.
    pub residuals: Vec<f64>,
    pub r_fit: f64,
}

impl HybridScene {
    pub fn new(mom: DipoleScene, sphere: SphereSpec) -> Result<Self> {
        let s = Self { mom, sphere };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.mom.validate()?;
        self.sphere.validate()?;
        if self.mom.ground_plane {
            return Err(Error::Precondition("hybrid scenes cannot use a ground plane".into()));
        }
        if !self.mom.is_empty() && self.clearance() <= 0.0 {
            return Err(Error::Geometry(format!("a dipole lies inside the sphere (clearance {})", self.clearance())));
        }
        Ok(())
    }

    pub fn min_distance(&self) -> f64 {
        self.mom.positions.iter().map(norm3).fold(f64::INFINITY, f64::min)
    }

    /// Minimum dipole distance from the origin minus the sphere radius.
    pub fn clearance(&self) -> f64 {
        self.min_distance() - self.sphere.radius
    }

    pub fn basis(&self, k: f64) -> Result<WaveBasis> {
        let r = self.mom.radius().max(self.sphere.radius);
        swe::basis(swe::truncation_order(k * r)?)
    }
}

fn dipole_field(k: f64, source: &swe::Vec3, axis: usize, point: &swe::Vec3) -> CVec3 {
    let r = [point[0] - source[0], point[1] - source[1], point[2] - source[2]];
    let g = green_dyadic(k, &r);
    let s = c64::new(0.0, -k * ETA0);
    [g[0][axis] * s, g[1][axis] * s, g[2][axis] * s]
}

fn quadrature_degree(ratio: f64, l_max: usize) -> usize {
    let extra = (1e-13f64.ln() / ratio.ln()).ceil().max(0.0) as usize;
    (l_max + extra).clamp(l_max + 4, 150)
}

fn project_columns(scene: &HybridScene, k: f64, basis: &WaveBasis, r_fit: f64, degree: usize) -> Result<Vec<Vec<c64>>> {
    let grid = SphereGrid::new(r_fit, degree + 2, 2 * degree + 3)?;
    let proj = RegularProjector::new(grid, basis, k)?;
    let scale = -1.0 / (k * ETA0.sqrt());
    let n = scene.mom.len();
    let cols = par::map_range(3 * n, |c| {
        let (p, axis) = (c / 3, c % 3);
        let src = scene.mom.positions[p];
        let field: Vec<CVec3> = proj.grid().points().iter().map(|x| dipole_field(k, &src, axis, x)).collect();
        proj.project(&field).map(|pr| pr.coefficients.into_iter().map(|v| v * scale).collect::<Vec<c64>>())
    });
    cols.into_iter().collect()
}

pub fn assemble_u4(scene: &HybridScene, k: f64, basis: &WaveBasis, method: U4Method) -> Result<U4> {
    scene.validate()?;
    let n = scene.mom.len();
    let nw = basis.len();
    let r_fit = if n == 0 { scene.sphere.radius } else { (scene.sphere.radius * scene.min_distance()).sqrt() };
    if n == 0 {
        return Ok(U4 { data: CMat::zeros(nw, 0), residuals: vec![], r_fit });
    }
    match method {
        U4Method::Analytic => {
            let scale = k * ETA0.sqrt();
            let waves: Vec<Vec<CVec3>> = par::map(&scene.mom.positions, |p| outgoing_waves_at(basis, k, p))
                .into_iter()
                .collect::<Result<_>>()?;
            let data = CMat::from_fn(nw, 3 * n, |i, c| waves[c / 3][i][c % 3] * scale);
            Ok(U4 { data, residuals: vec![0.0; 3 * n], r_fit })
        }
        U4Method::Quadrature => {
            let ratio = r_fit / scene.min_distance();
            let deg = quadrature_degree(ratio, basis.l_max());
            let main = project_columns(scene, k, basis, r_fit, deg)?;
            let check = project_columns(scene, k, basis, r_fit, (deg + deg / 4 + 8).min(190))?;
            let residuals: Vec<f64> = main
                .iter()
                .zip(&check)
                .map(|(a, b)| {
                    let d: Vec<c64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                    linalg::vec_norm(&d) / linalg::vec_norm(b).max(f64::MIN_POSITIVE)
                })
                .collect();
            if let Some(worst) = residuals.iter().copied().reduce(f64::max) {
                if worst > 1e-6 {
                    return Err(Error::Resolution(format!("U4 projection residual {worst:.3e} exceeds 1e-6")));
                }
            }
            let data = CMat::from_fn(nw, 3 * n, |i, c| check[c][i]);
            Ok(U4 { data, residuals, r_fit })
        }
    }
}

/// Blocks of the coupled system with the sphere folded into the
/// background: `Z′ = Z + U₄ᵀT₁U₄`, `U₁′ = U₁ + T₁U₄`, offset `T₁`.
pub fn hybrid_blocks(scene: &HybridScene, k: f64, method: U4Method) -> Result<(BlockImpedance, U4)> {
    let basis = scene.basis(k)?;
    let t1 = mie_diagonal(&scene.sphere, k, &basis)?;
    let u4 = assemble_u4(scene, k, &basis, method)?;
    let z = impedance_matrix(&scene.mom, k)?;
    let u1 = assemble_projection(&scene.mom, k, &basis)?;
    let nw = basis.len();
    let t1u4 = CMat::from_fn(nw, u4.data.ncols(), |i, j| t1[i] * u4.data[(i, j)]);
    let zp = &z + u4.data.transpose() * &t1u4;
    let up = &u1 + &t1u4;
    let t0 = CMat::from_fn(nw, nw, |i, j| if i == j { t1[i] } else { linalg::ZERO });
    let blocks = BlockImpedance::from_parts(basis, k, &scene.mom.regions, &zp, &up, Some(t0))?;
    Ok((blocks, u4))
}

/// Substructure modes from the Schur complement of the coupled impedance.
pub fn hybrid_impedance_modes(scene: &HybridScene, k: f64) -> Result<ModeSet> {
    let (blocks, _) = hybrid_blocks(scene, k, U4Method::Quadrature)?;
    cm_impedance_substructure(&blocks)
}

/// Substructure modes from composite and background scattering matrices.
pub fn hybrid_scattering_modes(scene: &HybridScene, k: f64) -> Result<ModeSet> {
    let (blocks, _) = hybrid_blocks(scene, k, U4Method::Quadrature)?;
    let tr = blocks.transition()?;
    cm_scattering(&tr.s, &tr.s_b)
}

/// Number of background dipoles (the sphere is always background).
pub fn background_dipoles(scene: &HybridScene) -> usize {
    scene.mom.regions.iter().filter(|r| **r == Region::Background).count()
}
