//! Seeded scene generators used by tests, benches and examples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dipole::{isotropic, DipoleScene, Mat3, Port, Region};
use crate::error::{Error, Result};
use crate::swe::{norm3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudSpec {
    pub n_dipoles: usize,
    /// Wavenumber the polarizabilities are scaled for.
    pub k: f64,
    /// Electrical radius `k·r` of the enclosing ball.
    pub ka: f64,
    /// Fraction of dipoles labelled controllable (at least one of each
    /// region when `0 < fraction < 1` and `n ≥ 2`).
    pub controllable_fraction: f64,
    pub seed: u64,
    /// Place every dipole above `z = 0` (for ground-plane scenes).
    pub upper_half: bool,
}

impl Default for CloudSpec {
    fn default() -> Self {
        Self { n_dipoles: 10, k: 1.0, ka: 1.0, controllable_fraction: 0.5, seed: 0, upper_half: false }
    }
}

/// Anisotropic SPD polarizability with single-dipole `|t|` roughly in
/// `[0.05, 0.7]` at wavenumber `k`.
fn random_polarizability(rng: &mut ChaCha8Rng, k: f64) -> Mat3 {
    let base = 6.0 * std::f64::consts::PI / k.powi(3);
    let d: [f64; 3] = std::array::from_fn(|_| base * (0.05 + 0.95 * rng.random::<f64>()));
    // random rotation from a normalized quaternion
    let q: [f64; 4] = std::array::from_fn(|_| rng.random::<f64>() - 0.5);
    let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    let [w, x, y, z] = q.map(|v| v / n);
    let r = [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
        [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
        [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
    ];
    let mut a = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            a[i][j] = (0..3).map(|m| r[i][m] * d[m] * r[j][m]).sum();
        }
    }
    for i in 0..3 {
        for j in 0..i {
            let v = 0.5 * (a[i][j] + a[j][i]);
            a[i][j] = v;
            a[j][i] = v;
        }
    }
    a
}

pub fn random_cloud(spec: &CloudSpec) -> Result<DipoleScene> {
    if spec.n_dipoles == 0 || !(spec.ka > 0.0) || !(spec.k > 0.0) {
        return Err(Error::Domain("cloud needs dipoles, positive ka and k".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let radius = spec.ka / spec.k;
    let min_sep = 0.6 * radius / (spec.n_dipoles as f64).cbrt();
    let mut pos: Vec<Vec3> = Vec::with_capacity(spec.n_dipoles);
    let mut attempts = 0usize;
    while pos.len() < spec.n_dipoles {
        attempts += 1;
        if attempts > 1_000_000 {
            return Err(Error::Geometry("could not place dipoles with the required separation".into()));
        }
        let mut p: Vec3 = std::array::from_fn(|_| (2.0 * rng.random::<f64>() - 1.0) * radius);
        if spec.upper_half {
            p[2] = p[2].abs();
            if p[2] < 0.1 * min_sep {
                continue;
            }
        }
        if norm3(&p) > radius {
            continue;
        }
        if pos.iter().all(|q| norm3(&[p[0] - q[0], p[1] - q[1], p[2] - q[2]]) >= min_sep) {
            pos.push(p);
        }
    }
    let pols: Vec<Mat3> = (0..spec.n_dipoles).map(|_| random_polarizability(&mut rng, spec.k)).collect();
    let n_c = ((spec.n_dipoles as f64 * spec.controllable_fraction).round() as usize).min(spec.n_dipoles);
    let n_c = if spec.n_dipoles >= 2 && spec.controllable_fraction > 0.0 && spec.controllable_fraction < 1.0 {
        n_c.clamp(1, spec.n_dipoles - 1)
    } else {
        n_c
    };
    let regions = (0..spec.n_dipoles).map(|i| if i < n_c { Region::Controllable } else { Region::Background }).collect();
    let scene = DipoleScene::new(pos, pols, regions)?;
    if spec.upper_half {
        scene.with_ground_plane()
    } else {
        Ok(scene)
    }
}

/// Two parallel dipole strips along `x`, mirror symmetric under
/// `x → −x`: a controllable strip at `y = 0` and a background strip at
/// `y = gap`. The strips have `2·half + 1` elements.
pub fn twin_strips(half: usize, spacing: f64, gap: f64, k: f64) -> Result<DipoleScene> {
    let base = 6.0 * std::f64::consts::PI / k.powi(3);
    let mut pos = vec![];
    let mut pols = vec![];
    let mut regions = vec![];
    for (y, region, s) in [(0.0, Region::Controllable, 0.7), (gap, Region::Background, 0.45)] {
        for i in -(half as i64)..=(half as i64) {
            let x = i as f64 * spacing;
            pos.push([x, y, 0.0]);
            // stronger along the strip axis; symmetric in |i|
            let w = 1.0 - 0.1 * (i.unsigned_abs() as f64) / (half as f64 + 1.0);
            pols.push([[s * base * w, 0.0, 0.0], [0.0, 0.3 * s * base, 0.0], [0.0, 0.0, 0.2 * s * base]]);
            regions.push(region);
        }
    }
    DipoleScene::new(pos, pols, regions)
}

/// Centre element index of the controllable strip of [`twin_strips`].
pub fn twin_strip_centre(half: usize) -> usize {
    half
}

pub fn port_at(element: usize, axis: usize, z0: f64, length: f64) -> Port {
    Port { element, axis, z0, length }
}

pub fn isotropic_scene(positions: Vec<Vec3>, alpha: f64, regions: Vec<Region>) -> Result<DipoleScene> {
    let n = positions.len();
    DipoleScene::new(positions, vec![isotropic(alpha); n], regions)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clouds_are_seeded_and_valid() {
        let spec = CloudSpec { n_dipoles: 25, ka: 2.0, seed: 3, ..Default::default() };
        let a = random_cloud(&spec).unwrap();
        let b = random_cloud(&spec).unwrap();
        assert_eq!(a, b);
        assert!(a.radius() <= 2.0);
        assert!(!a.indices_of(Region::Background).is_empty());
        assert!(!a.indices_of(Region::Controllable).is_empty());
        let up = random_cloud(&CloudSpec { upper_half: true, ..spec }).unwrap();
        assert!(up.ground_plane && up.positions.iter().all(|p| p[2] > 0.0));
    }

    #[test]
    fn twin_strips_are_symmetric() {
        let s = twin_strips(2, 0.3, 0.5, 1.0).unwrap();
        assert_eq!(s.len(), 10);
        for (i, p) in s.positions.iter().enumerate() {
            let j = s.positions.iter().position(|q| q[0] == -p[0] && q[1] == p[1]).unwrap();
            assert_eq!(s.polarizabilities[i], s.polarizabilities[j]);
        }
    }
}
