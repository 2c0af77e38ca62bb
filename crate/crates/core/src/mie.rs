//! Diagonal transition matrices of spheres centred at the origin.

use faer::c64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::modes::{row_degrees, ModeFlags, ModeSet};
use crate::network::{EigenTriple, OperatorKind, OperatorMatrix};
use crate::special::{irregular_radial, regular_radial};
use crate::swe::{truncation_order, Polarization, WaveBasis};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Material {
    Pec,
    Dielectric { eps_r: f64, mu_r: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereSpec {
    pub radius: f64,
    pub material: Material,
}

impl SphereSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::Domain(format!("sphere radius must be positive, got {}", self.radius)));
        }
        if let Material::Dielectric { eps_r, mu_r } = self.material {
            if !(eps_r >= 1.0) || !eps_r.is_finite() || !(mu_r > 0.0) || !mu_r.is_finite() {
                return Err(Error::Domain(format!("unsupported material eps_r = {eps_r}, mu_r = {mu_r}")));
            }
        }
        Ok(())
    }
}

/// `(t_TE, t_TM)` for degrees `0..=l_max` (index 0 unused).
pub fn mie_coefficients(spec: &SphereSpec, k: f64, l_max: usize) -> Result<Vec<(c64, c64)>> {
    spec.validate()?;
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::Domain(format!("wavenumber must be positive, got {k}")));
    }
    let x = k * spec.radius;
    let reg = regular_radial(l_max, x);
    let irr = irregular_radial(l_max, x);
    let mut out = vec![(linalg::ZERO, linalg::ZERO); l_max + 1];
    for l in 1..=l_max {
        let (j, dpsi, _) = reg[l];
        let (y, dchi, _) = irr[l];
        let h = c64::new(j, -y);
        let psi_p = x * dpsi;
        let xi_p = c64::new(psi_p, -x * dchi);
        out[l] = match spec.material {
            Material::Pec => (-j / h, -psi_p / xi_p),
            Material::Dielectric { eps_r, mu_r } => {
                let m = (eps_r * mu_r).sqrt();
                let (ji, dpsi_i, _) = regular_radial(l, m * x)[l];
                let psi_p_i = m * x * dpsi_i;
                let coef = |c: f64| -> c64 {
                    let num = c * ji * psi_p - j * psi_p_i;
                    let den = xi_p * (c * ji) - h * psi_p_i;
                    -(c64::new(num, 0.0) / den)
                };
                (coef(mu_r), coef(eps_r))
            }
        };
    }
    Ok(out)
}

/// Diagonal of the transition matrix over `basis`, without a validity check.
pub fn mie_diagonal(spec: &SphereSpec, k: f64, basis: &WaveBasis) -> Result<Vec<c64>> {
    let c = mie_coefficients(spec, k, basis.l_max())?;
    Ok(basis
        .indices()
        .iter()
        .map(|w| match w.pol {
            Polarization::TE => c[w.l].0,
            Polarization::TM => c[w.l].1,
        })
        .collect())
}

pub fn mie_tmatrix(spec: &SphereSpec, k: f64, basis: &WaveBasis) -> Result<OperatorMatrix> {
    spec.validate()?;
    let need = truncation_order(k * spec.radius)?;
    if basis.l_max() < need {
        return Err(Error::Resolution(format!(
            "basis degree {} below {need} required for ka = {}",
            basis.l_max(),
            k * spec.radius
        )));
    }
    let d = mie_diagonal(spec, k, basis)?;
    let n = d.len();
    let data = CMat::from_fn(n, n, |i, j| if i == j { d[i] } else { linalg::ZERO });
    OperatorMatrix::new(OperatorKind::T, basis.clone(), data)
}

pub fn mie_modeset(spec: &SphereSpec, k: f64, basis: &WaveBasis) -> Result<ModeSet> {
    let t = mie_tmatrix(spec, k, basis)?;
    let n = t.dim();
    let eigen: Vec<EigenTriple> = (0..n).map(|i| EigenTriple::from_t(t.data[(i, i)])).collect();
    let a = linalg::identity(n);
    let f = CMat::from_fn(n, n, |i, j| if i == j { linalg::ONE } else { linalg::ZERO });
    let mut ms = ModeSet {
        frequency: 0.0,
        eigen,
        a,
        f,
        currents: None,
        controllable_currents: None,
        cancellation: vec![false; n],
        flags: ModeFlags::default(),
        row_degree: row_degrees(basis, 0),
    };
    ms.sort();
    Ok(ms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swe::basis;

    /// Independent evaluation: power series for j_l, upward recurrence for y_l.
    fn jl(l: usize, x: f64) -> f64 {
        let mut df = 1.0;
        for k in 0..=l {
            df *= (2 * k + 1) as f64;
        }
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..80 {
            term *= -x * x / (2.0 * k as f64 * (2 * l + 2 * k + 1) as f64);
            sum += term;
        }
        x.powi(l as i32) / df * sum
    }

    fn yl(l: usize, x: f64) -> f64 {
        let mut a = -x.cos() / x;
        if l == 0 {
            return a;
        }
        let mut b = -x.cos() / (x * x) - x.sin() / x;
        for n in 1..l {
            let c = (2 * n + 1) as f64 / x * b - a;
            a = b;
            b = c;
        }
        b
    }

    fn dpsi(l: usize, x: f64) -> f64 {
        x * jl(l - 1, x) - l as f64 * jl(l, x)
    }

    fn dchi(l: usize, x: f64) -> f64 {
        x * yl(l - 1, x) - l as f64 * yl(l, x)
    }

    fn oracle(l: usize, x: f64, mat: Material) -> (c64, c64) {
        let h = c64::new(jl(l, x), -yl(l, x));
        let xp = c64::new(dpsi(l, x), -dchi(l, x));
        match mat {
            Material::Pec => (-jl(l, x) / h, -dpsi(l, x) / xp),
            Material::Dielectric { eps_r, mu_r } => {
                let m = (eps_r * mu_r).sqrt();
                let a = (eps_r * jl(l, m * x) * dpsi(l, x) - jl(l, x) * dpsi(l, m * x))
                    / (xp * (eps_r * jl(l, m * x)) - h * (dpsi(l, m * x)));
                let b = (mu_r * jl(l, m * x) * dpsi(l, x) - jl(l, x) * dpsi(l, m * x))
                    / (xp * (mu_r * jl(l, m * x)) - h * (dpsi(l, m * x)));
                (-b, -a)
            }
        }
    }

    #[test]
    fn matches_independent_series() {
        let cases = [
            (Material::Pec, 0.5),
            (Material::Pec, 1.0),
            (Material::Pec, 2.0),
            (Material::Dielectric { eps_r: 4.0, mu_r: 1.0 }, 0.5),
            (Material::Dielectric { eps_r: 4.0, mu_r: 1.0 }, 1.0),
        ];
        for (mat, ka) in cases {
            let spec = SphereSpec { radius: 1.0, material: mat };
            let c = mie_coefficients(&spec, ka, 8).unwrap();
            for l in 1..=8 {
                let (te, tm) = oracle(l, ka, mat);
                assert!((c[l].0 - te).norm() <= 1e-10 * te.norm().max(1e-300), "TE l={l} {mat:?} {ka}");
                assert!((c[l].1 - tm).norm() <= 1e-10 * tm.norm().max(1e-300), "TM l={l} {mat:?} {ka}");
            }
        }
    }

    #[test]
    fn rayleigh_limit_and_circle() {
        let ka = 1e-2;
        let spec = SphereSpec { radius: 1.0, material: Material::Pec };
        let c = mie_coefficients(&spec, ka, 6).unwrap();
        let expect = c64::new(0.0, -2.0 / 3.0 * ka.powi(3));
        assert!((c[1].1 - expect).norm() < 1e-3 * expect.norm());
        let t = mie_tmatrix(&spec, 1.0, &basis(12).unwrap()).unwrap();
        for i in 0..t.dim() {
            assert!(((t.data[(i, i)] + 0.5).norm() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn vacuum_sphere_is_transparent() {
        let spec = SphereSpec { radius: 1.0, material: Material::Dielectric { eps_r: 1.0, mu_r: 1.0 } };
        let c = mie_coefficients(&spec, 0.7, 10).unwrap();
        assert!(c.iter().skip(1).all(|(a, b)| a.norm() < 1e-15 && b.norm() < 1e-15));
    }

    #[test]
    fn modeset_degeneracy() {
        let spec = SphereSpec { radius: 1.0, material: Material::Dielectric { eps_r: 4.0, mu_r: 1.0 } };
        let b = basis(truncation_order(1.0).unwrap()).unwrap();
        let ms = mie_modeset(&spec, 1.0, &b).unwrap();
        let t = mie_coefficients(&spec, 1.0, 1).unwrap()[1].1;
        let count = ms.eigen.iter().filter(|e| (e.t - t).norm() < 1e-13 * t.norm()).count();
        assert_eq!(count, 3);
        assert_eq!(ms.orthonormality_a(), 0.0);
        let tm = mie_tmatrix(&spec, 1.0, &b).unwrap();
        let mut diag: Vec<f64> = (0..tm.dim()).map(|i| tm.data[(i, i)].norm()).collect();
        diag.sort_by(|a, b| b.total_cmp(a));
        for (e, d) in ms.eigen.iter().zip(&diag) {
            assert_eq!(e.t.norm(), *d);
        }
    }

    #[test]
    fn high_degrees_decay() {
        let spec = SphereSpec { radius: 1.0, material: Material::Pec };
        let c = mie_coefficients(&spec, 1.0, 20).unwrap();
        for l in 3..20 {
            assert!(c[l + 1].1.norm() < c[l].1.norm());
            assert!(c[l + 1].0.norm() < c[l].0.norm());
        }
    }

    #[test]
    fn resolution_error() {
        let spec = SphereSpec { radius: 1.0, material: Material::Pec };
        assert!(matches!(mie_tmatrix(&spec, 1.0, &basis(3).unwrap()), Err(Error::Resolution(_))));
    }
}
