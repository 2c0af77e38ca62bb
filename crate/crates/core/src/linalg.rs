//! Dense complex helpers over `faer`.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{c64, Mat, MatRef, Side};

use crate::error::{Error, Result};

pub type CMat = Mat<c64>;

pub const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
pub const ONE: c64 = c64 { re: 1.0, im: 0.0 };
pub const J: c64 = c64 { re: 0.0, im: 1.0 };

pub fn zeros(rows: usize, cols: usize) -> CMat {
    Mat::zeros(rows, cols)
}

pub fn identity(n: usize) -> CMat {
    Mat::identity(n, n)
}

pub fn from_real(m: MatRef<'_, f64>) -> CMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| c64::new(m[(i, j)], 0.0))
}

/// Frobenius norm.
pub fn fro(m: MatRef<'_, c64>) -> f64 {
    let mut s = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            s += m[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

pub fn vec_norm(v: &[c64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn adjoint(m: MatRef<'_, c64>) -> CMat {
    m.adjoint().to_owned()
}

pub fn transpose(m: MatRef<'_, c64>) -> CMat {
    m.transpose().to_owned()
}

pub fn conj(m: MatRef<'_, c64>) -> CMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].conj())
}

pub fn scale(m: MatRef<'_, c64>, s: c64) -> CMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * s)
}

/// Hermitian part `(M + Mᴴ)/2`.
pub fn hermitian_part(m: MatRef<'_, c64>) -> CMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5)
}

/// Anti-Hermitian part divided by j: `(M − Mᴴ)/(2j)`, Hermitian.
pub fn skew_part(m: MatRef<'_, c64>) -> CMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| (m[(i, j)] - m[(j, i)].conj()) * c64::new(0.0, -0.5))
}

pub fn column(m: MatRef<'_, c64>, j: usize) -> Vec<c64> {
    (0..m.nrows()).map(|i| m[(i, j)]).collect()
}

pub fn from_columns(rows: usize, cols: &[Vec<c64>]) -> CMat {
    Mat::from_fn(rows, cols.len(), |i, j| cols[j][i])
}

pub fn matvec(m: MatRef<'_, c64>, x: &[c64]) -> Vec<c64> {
    let mut y = vec![ZERO; m.nrows()];
    for j in 0..m.ncols() {
        let xj = x[j];
        if xj == ZERO {
            continue;
        }
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += m[(i, j)] * xj;
        }
    }
    y
}

pub fn dotc(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn submatrix(m: MatRef<'_, c64>, rows: &[usize], cols: &[usize]) -> CMat {
    Mat::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// `‖MᴴM − I‖_F / √n`.
pub fn unitarity_deviation(m: MatRef<'_, c64>) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    let g = m.adjoint() * m;
    let d = &g - identity(n);
    fro(d.as_ref()) / (n as f64).sqrt()
}

/// LU factorization with a pivot-ratio singularity guard.
pub struct Lu {
    lu: faer::linalg::solvers::PartialPivLu<c64>,
    n: usize,
}

impl Lu {
    pub fn new(a: MatRef<'_, c64>, what: &str) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Shape(format!("{what}: {}x{} is not square", a.nrows(), a.ncols())));
        }
        let n = a.nrows();
        let lu = a.partial_piv_lu();
        if n > 0 {
            let u = lu.U();
            let mut lo = f64::INFINITY;
            let mut hi: f64 = 0.0;
            for i in 0..n {
                let d = u[(i, i)].norm();
                lo = lo.min(d);
                hi = hi.max(d);
            }
            let cond = if lo == 0.0 { f64::INFINITY } else { hi / lo };
            if !lo.is_finite() || !(cond < 1e15) {
                return Err(Error::Singular { what: what.to_string(), condition: cond });
            }
        }
        Ok(Self { lu, n })
    }

    pub fn solve(&self, b: MatRef<'_, c64>) -> CMat {
        debug_assert_eq!(b.nrows(), self.n);
        self.lu.solve(b)
    }

    pub fn solve_vec(&self, b: &[c64]) -> Vec<c64> {
        let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
        column(self.lu.solve(rhs.as_ref()).as_ref(), 0)
    }

    pub fn inverse(&self) -> CMat {
        self.lu.inverse()
    }
}

pub fn solve(a: MatRef<'_, c64>, b: MatRef<'_, c64>, what: &str) -> Result<CMat> {
    Ok(Lu::new(a, what)?.solve(b))
}

pub fn inverse(a: MatRef<'_, c64>, what: &str) -> Result<CMat> {
    Ok(Lu::new(a, what)?.inverse())
}

/// General complex eigendecomposition; eigenvectors normalized to unit
/// length.
pub fn eig_general(a: MatRef<'_, c64>) -> Result<(Vec<c64>, CMat)> {
    let n = a.nrows();
    if n == 0 {
        return Ok((vec![], zeros(0, 0)));
    }
    let ev = a.eigen().map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let vals: Vec<c64> = ev.S().column_vector().iter().copied().collect();
    let mut vecs = ev.U().to_owned();
    normalize_columns(&mut vecs);
    Ok((vals, vecs))
}

pub fn eigenvalues(a: MatRef<'_, c64>) -> Result<Vec<c64>> {
    if a.nrows() == 0 {
        return Ok(vec![]);
    }
    a.eigenvalues().map_err(|e| Error::Eigen(format!("{e:?}")))
}

/// Hermitian eigendecomposition (ascending eigenvalues). Only the lower
/// triangle is read, so the input is symmetrized first.
pub fn eig_hermitian(a: MatRef<'_, c64>) -> Result<(Vec<f64>, CMat)> {
    let n = a.nrows();
    if n == 0 {
        return Ok((vec![], zeros(0, 0)));
    }
    let h = hermitian_part(a);
    let ev = h.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let vals = ev.S().column_vector().iter().map(|x| x.re).collect();
    Ok((vals, ev.U().to_owned()))
}

/// Generalized eigenproblem `A x = μ B x` returned as `(α, β, X)` with
/// `μ = α/β`.
pub fn eig_generalized(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Result<(Vec<c64>, Vec<c64>, CMat)> {
    let n = a.nrows();
    if n == 0 {
        return Ok((vec![], vec![], zeros(0, 0)));
    }
    let g = a.generalized_eigen(b).map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let alpha = g.S_a().column_vector().iter().copied().collect();
    let beta = g.S_b().column_vector().iter().copied().collect();
    let mut vecs = g.U().to_owned();
    normalize_columns(&mut vecs);
    Ok((alpha, beta, vecs))
}

/// Eigendecomposition of a (numerically) unitary matrix with an exactly
/// orthonormal eigenbasis.
///
/// Uses a rotated Cayley transform `G = j(I − w)(I + w)⁻¹`, `w = e^{-jφ}M`,
/// which is Hermitian for unitary `M`; the pole `−e^{jφ}` is placed in the
/// widest gap of the spectrum on the unit circle. Eigenvalues are returned
/// as Rayleigh quotients `qᴴ M q`.
pub fn eig_unitary(m: MatRef<'_, c64>) -> Result<(Vec<c64>, CMat)> {
    let n = m.nrows();
    if n == 0 {
        return Ok((vec![], zeros(0, 0)));
    }
    let vals = eigenvalues(m)?;
    let mut angles: Vec<f64> = vals.iter().map(|v| v.arg()).collect();
    angles.sort_by(f64::total_cmp);
    let mut best_gap = -1.0;
    let mut pole = std::f64::consts::PI;
    for i in 0..angles.len() {
        let a = angles[i];
        let b = if i + 1 < angles.len() { angles[i + 1] } else { angles[0] + 2.0 * std::f64::consts::PI };
        if b - a > best_gap {
            best_gap = b - a;
            pole = 0.5 * (a + b);
        }
    }
    // -e^{jφ} = e^{j pole}
    let phi = pole - std::f64::consts::PI;
    let rot = c64::from_polar(1.0, -phi);
    let w = scale(m, rot);
    let eye = identity(n);
    let plus = &eye + &w;
    let minus = &eye - &w;
    let g = scale(solve(plus.as_ref(), minus.as_ref(), "Cayley transform")?.as_ref(), J);
    let (_, q) = eig_hermitian(g.as_ref())?;
    let mq = m * &q;
    let s: Vec<c64> = (0..n)
        .map(|j| (0..n).map(|i| q[(i, j)].conj() * mq[(i, j)]).sum())
        .collect();
    Ok((s, q))
}

pub fn normalize_columns(m: &mut CMat) {
    for j in 0..m.ncols() {
        let nrm = (0..m.nrows()).map(|i| m[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        if nrm > 0.0 {
            for i in 0..m.nrows() {
                m[(i, j)] /= nrm;
            }
        }
    }
}

/// Modified Gram–Schmidt over selected columns, in place.
pub fn mgs_columns(m: &mut CMat, cols: &[usize]) {
    for (a, &j) in cols.iter().enumerate() {
        for _pass in 0..2 {
            for &p in &cols[..a] {
                let mut d = ZERO;
                for i in 0..m.nrows() {
                    d += m[(i, p)].conj() * m[(i, j)];
                }
                for i in 0..m.nrows() {
                    let v = m[(i, p)];
                    m[(i, j)] -= d * v;
                }
            }
        }
        let nrm = (0..m.nrows()).map(|i| m[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        if nrm > 0.0 {
            for i in 0..m.nrows() {
                m[(i, j)] /= nrm;
            }
        }
    }
}

/// Group eigenvalues whose distance is below `rel_gap · max(1, |μ|)` and
/// re-orthonormalize the eigenvectors of every group with more than one
/// member. Returns the number of groups touched.
pub fn orthonormalize_clusters(values: &[c64], vecs: &mut CMat, rel_gap: f64) -> usize {
    let n = values.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        let mut c = i;
        while p[c] != r {
            let nx = p[c];
            p[c] = r;
            c = nx;
        }
        r
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let tol = rel_gap * values[i].norm().max(values[j].norm()).max(1.0);
            if (values[i] - values[j]).norm() < tol {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let mut touched = 0;
    for g in groups.values().filter(|g| g.len() > 1) {
        mgs_columns(vecs, g);
        touched += 1;
    }
    touched
}

/// Largest deviation of `QᴴQ` from the identity (entrywise max).
pub fn orthonormality_deviation(q: MatRef<'_, c64>) -> f64 {
    let g = q.adjoint() * q;
    let mut d: f64 = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let e = if i == j { ONE } else { ZERO };
            d = d.max((g[(i, j)] - e).norm());
        }
    }
    d
}
