//! Special functions: spherical Bessel functions, normalized associated
//! Legendre functions and Gauss–Legendre nodes.

use std::f64::consts::PI;

/// Spherical Bessel functions `j_0(x) ..= j_lmax(x)` for real `x >= 0`.
///
/// Ratios `j_l / j_{l-1}` come from a downward continued-fraction recurrence
/// seeded well above `lmax`, then are anchored on whichever of `j_0`, `j_1`
/// has the larger magnitude. No overflow for tiny arguments.
pub fn spherical_jn(lmax: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; lmax + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let (s, c) = x.sin_cos();
    let j0 = s / x;
    let j1 = s / (x * x) - c / x;
    out[0] = j0;
    if lmax == 0 {
        return out;
    }

    // ratio[l] = j_l / j_{l-1}
    let start = lmax + 32 + (1.5 * x) as usize;
    let mut ratio = vec![0.0; lmax + 1];
    let mut r = 0.0;
    for l in (1..=start).rev() {
        r = x / ((2 * l + 1) as f64 - x * r);
        if l <= lmax {
            ratio[l] = r;
        }
    }
    out[1] = if j0.abs() >= j1.abs() { j0 * ratio[1] } else { j1 };
    for l in 2..=lmax {
        out[l] = out[l - 1] * ratio[l];
    }
    out
}

/// Spherical Neumann functions `y_0(x) ..= y_lmax(x)` by upward recurrence
/// (stable for the irregular solution). Requires `x > 0`.
pub fn spherical_yn(lmax: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; lmax + 1];
    let (s, c) = x.sin_cos();
    out[0] = -c / x;
    if lmax >= 1 {
        out[1] = -c / (x * x) - s / x;
    }
    for l in 2..=lmax {
        out[l] = (2 * l - 1) as f64 / x * out[l - 1] - out[l - 2];
    }
    out
}

/// Radial factors of the regular spherical vector waves at argument `x`:
/// `(j_l(x), (x j_l(x))'/x, j_l(x)/x)` for `l = 0..=lmax`, with the
/// finite limits at `x = 0`.
pub fn regular_radial(lmax: usize, x: f64) -> Vec<(f64, f64, f64)> {
    if x == 0.0 {
        return (0..=lmax)
            .map(|l| match l {
                0 => (1.0, 1.0, 0.0),
                1 => (0.0, 2.0 / 3.0, 1.0 / 3.0),
                _ => (0.0, 0.0, 0.0),
            })
            .collect();
    }
    let j = spherical_jn(lmax + 1, x);
    (0..=lmax)
        .map(|l| {
            let jl = j[l];
            let dpsi = if l == 0 {
                // (x j_0)' / x = cos(x) / x
                x.cos() / x
            } else {
                j[l - 1] - l as f64 * jl / x
            };
            (jl, dpsi, jl / x)
        })
        .collect()
}

/// Same as [`regular_radial`] for the irregular (Neumann) solution; `x > 0`.
pub fn irregular_radial(lmax: usize, x: f64) -> Vec<(f64, f64, f64)> {
    let y = spherical_yn(lmax + 1, x);
    (0..=lmax)
        .map(|l| {
            let yl = y[l];
            let dchi = if l == 0 {
                x.sin() / x
            } else {
                y[l - 1] - l as f64 * yl / x
            };
            (yl, dchi, yl / x)
        })
        .collect()
}

/// Normalized associated Legendre data at polar angle `theta`, without the
/// Condon–Shortley phase, normalized so that
/// `∫ (P̄_l^m(cos θ))² sin θ dθ dφ = 1` over the sphere (times the azimuthal
/// normalization applied by the caller).
///
/// Stores, for `0 <= m <= l <= lmax`:
/// `p` = P̄_l^m, `q` = P̄_l^m / sin θ (m ≥ 1, finite at the poles),
/// `dp` = dP̄_l^m / dθ.
#[derive(Debug, Clone)]
pub struct LegendreTable {
    lmax: usize,
    p: Vec<f64>,
    q: Vec<f64>,
    dp: Vec<f64>,
}

impl LegendreTable {
    pub fn new(lmax: usize, theta: f64) -> Self {
        let n = (lmax + 1) * (lmax + 2) / 2;
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        let mut dp = vec![0.0; n];
        let (s, x) = theta.sin_cos();
        let idx = |l: usize, m: usize| l * (l + 1) / 2 + m;

        // Sectoral seeds: P̄_m^m and P̄_m^m / sin θ.
        let mut pmm = 1.0 / (4.0 * PI).sqrt();
        // qmm tracks P̄_m^m / s for m >= 1, i.e. c_m s^(m-1)
        let mut qmm = 0.0;
        for m in 0..=lmax {
            if m > 0 {
                let f = ((2 * m + 1) as f64 / (2 * m) as f64).sqrt();
                qmm = if m == 1 { f * pmm } else { f * s * qmm };
                pmm *= f * s;
            }
            p[idx(m, m)] = pmm;
            q[idx(m, m)] = qmm;
            if m < lmax {
                let f = ((2 * m + 3) as f64).sqrt();
                p[idx(m + 1, m)] = f * x * pmm;
                q[idx(m + 1, m)] = f * x * qmm;
            }
            for l in (m + 2)..=lmax {
                let (lf, mf) = (l as f64, m as f64);
                let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
                let b = (((lf - 1.0).powi(2) - mf * mf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt();
                p[idx(l, m)] = a * (x * p[idx(l - 1, m)] - b * p[idx(l - 2, m)]);
                q[idx(l, m)] = a * (x * q[idx(l - 1, m)] - b * q[idx(l - 2, m)]);
            }
        }
        for l in 0..=lmax {
            let lf = l as f64;
            // m = 0: dP̄_l/dθ = -sqrt(l(l+1)) P̄_l^1
            dp[idx(l, 0)] = if l == 0 { 0.0 } else { -(lf * (lf + 1.0)).sqrt() * p[idx(l, 1)] };
            for m in 1..=l {
                let mf = m as f64;
                let lower = if l > m {
                    (((2.0 * lf + 1.0) / (2.0 * lf - 1.0)) * (lf - mf) * (lf + mf)).sqrt()
                        * q[idx(l - 1, m)]
                } else {
                    0.0
                };
                dp[idx(l, m)] = lf * x * q[idx(l, m)] - lower;
            }
        }
        Self { lmax, p, q, dp }
    }

    #[inline]
    fn idx(&self, l: usize, m: usize) -> usize {
        debug_assert!(m <= l && l <= self.lmax);
        l * (l + 1) / 2 + m
    }

    pub fn p(&self, l: usize, m: usize) -> f64 {
        self.p[self.idx(l, m)]
    }

    pub fn q(&self, l: usize, m: usize) -> f64 {
        self.q[self.idx(l, m)]
    }

    pub fn dp(&self, l: usize, m: usize) -> f64 {
        self.dp[self.idx(l, m)]
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dpn = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dpn = nf * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dpn;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dpn * dpn);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}
