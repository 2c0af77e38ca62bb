//! Matrix-free estimation of dominant substructure modes from forward
//! scattering solves only.

use std::sync::Arc;

use faer::c64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::network::{eigen_maps, EigenTriple};

pub type Apply = Arc<dyn Fn(&[c64]) -> Vec<c64> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleKind {
    /// Callbacks return `T x` and `T_b x`.
    TForm,
    /// Callbacks return `S x` and `S_b x`.
    SForm,
}

/// Forward-solve callbacks of a scene and of its background.
#[derive(Clone)]
pub struct ScatterOracle {
    pub apply: Apply,
    pub apply_background: Apply,
    pub kind: OracleKind,
    pub dim: usize,
}

impl std::fmt::Debug for ScatterOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScatterOracle").field("kind", &self.kind).field("dim", &self.dim).finish()
    }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<c64> {
    (0..n).map(|_| c64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect()
}

fn dot_t(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl ScatterOracle {
    pub fn new(apply: Apply, apply_background: Apply, kind: OracleKind, dim: usize) -> Self {
        Self { apply, apply_background, kind, dim }
    }

    /// Oracle backed by explicit matrices.
    pub fn from_dense(m: CMat, m_b: CMat, kind: OracleKind) -> Result<Self> {
        if m.nrows() != m.ncols() || m_b.nrows() != m_b.ncols() || m.nrows() != m_b.nrows() {
            return Err(Error::Shape("oracle matrices must be square and of equal size".into()));
        }
        let dim = m.nrows();
        let (m, m_b) = (Arc::new(m), Arc::new(m_b));
        Ok(Self::new(
            Arc::new(move |x| linalg::matvec(m.as_ref().as_ref(), x)),
            Arc::new(move |x| linalg::matvec(m_b.as_ref().as_ref(), x)),
            kind,
            dim,
        ))
    }

    fn call(&self, f: &Apply, x: &[c64]) -> Result<Vec<c64>> {
        let y = f(x);
        if y.len() != self.dim {
            return Err(Error::Shape(format!("oracle returned {} entries for dimension {}", y.len(), self.dim)));
        }
        Ok(y)
    }

    /// Largest relative violation of linearity over random probes.
    pub fn linearity_defect(&self, seed: u64, probes: usize) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for f in [&self.apply, &self.apply_background] {
            for _ in 0..probes {
                let x = random_vec(&mut rng, self.dim);
                let y = random_vec(&mut rng, self.dim);
                let (al, be) = (c64::new(rng.random(), rng.random()), c64::new(rng.random(), rng.random()));
                let z: Vec<c64> = x.iter().zip(&y).map(|(a, b)| al * a + be * b).collect();
                let (fx, fy, fz) = (self.call(f, &x)?, self.call(f, &y)?, self.call(f, &z)?);
                let d: Vec<c64> = (0..self.dim).map(|i| fz[i] - al * fx[i] - be * fy[i]).collect();
                let scale = linalg::vec_norm(&fx).max(linalg::vec_norm(&fy)).max(linalg::vec_norm(&fz)).max(1.0);
                worst = worst.max(linalg::vec_norm(&d) / scale);
            }
        }
        Ok(worst)
    }

    /// Largest relative `|yᵀMx − xᵀMy|` over random probes.
    pub fn symmetry_defect(&self, seed: u64, probes: usize) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for f in [&self.apply, &self.apply_background] {
            for _ in 0..probes {
                let x = random_vec(&mut rng, self.dim);
                let y = random_vec(&mut rng, self.dim);
                let (fx, fy) = (self.call(f, &x)?, self.call(f, &y)?);
                let d = (dot_t(&y, &fx) - dot_t(&x, &fy)).norm();
                let scale = linalg::vec_norm(&x) * linalg::vec_norm(&fx).max(linalg::vec_norm(&fy)).max(1e-300);
                worst = worst.max(d / scale);
            }
        }
        Ok(worst)
    }

    /// Run the linearity and symmetry probes, failing on violation.
    pub fn verify(&self, seed: u64) -> Result<()> {
        let lin = self.linearity_defect(seed, 2)?;
        if lin > 1e-10 {
            return Err(Error::Precondition(format!("oracle is not linear (defect {lin:.3e})")));
        }
        let sym = self.symmetry_defect(seed.wrapping_add(1), 2)?;
        if sym > 1e-8 {
            return Err(Error::Precondition(format!("oracle is not complex symmetric (defect {sym:.3e})")));
        }
        Ok(())
    }
}

fn conj(v: &[c64]) -> Vec<c64> {
    v.iter().map(|x| x.conj()).collect()
}

/// Action of `S_bᴴS` (S-form) or `2T_bᴴT + T_bᴴ + T` (T-form) using only
/// forward applications: `S_bᴴy = (S_b y*)*` for symmetric `S_b`.
///
/// Returns the composed vector and the full-scene response.
pub fn composed_matvec_with_response(oracle: &ScatterOracle, x: &[c64]) -> Result<(Vec<c64>, Vec<c64>)> {
    if x.len() != oracle.dim {
        return Err(Error::Shape(format!("vector of length {} for dimension {}", x.len(), oracle.dim)));
    }
    let f1 = oracle.call(&oracle.apply, x)?;
    match oracle.kind {
        OracleKind::SForm => {
            let f2 = oracle.call(&oracle.apply_background, &conj(&f1))?;
            Ok((conj(&f2), f1))
        }
        OracleKind::TForm => {
            let hat: Vec<c64> = x.iter().zip(&f1).map(|(a, f)| (a + f * 2.0).conj()).collect();
            let f2 = oracle.call(&oracle.apply_background, &hat)?;
            Ok((f1.iter().zip(&f2).map(|(a, b)| a + b.conj()).collect(), f1))
        }
    }
}

pub fn composed_matvec(oracle: &ScatterOracle, x: &[c64]) -> Result<Vec<c64>> {
    Ok(composed_matvec_with_response(oracle, x)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterateOptions {
    pub max_iter: usize,
    pub n_modes: usize,
    /// Stop when `‖a_{m+1}‖ < tol_residual·‖f_1‖`.
    pub tol_residual: f64,
    /// Stop when the top `n_modes` estimates drift by less than this
    /// (relative) over three consecutive iterations.
    pub tol_eig: f64,
    pub seed: u64,
}

impl Default for IterateOptions {
    fn default() -> Self {
        Self { max_iter: 60, n_modes: 5, tol_residual: 1e-8, tol_eig: 1e-6, seed: 42 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationLog {
    pub m: usize,
    /// `‖a_{m+1}‖` before normalization.
    pub residual: f64,
    /// Part of the first response not yet spanned, `‖(1 − P_m) f_1‖`.
    pub coverage: f64,
    /// Largest relative change of the top estimates.
    pub drift: f64,
}

#[derive(Debug, Clone)]
pub struct IterationResult {
    /// Top estimates ordered by `|t|` descending.
    pub eigen: Vec<EigenTriple>,
    /// Ritz vectors (columns).
    pub vectors: CMat,
    pub log: Vec<IterationLog>,
    pub converged: bool,
    pub iterations: usize,
    /// Largest `|a_iᴴa_j − δ_ij|` of the Krylov basis at the end.
    pub basis_orthonormality: f64,
}

fn t_of(kind: OracleKind, mu: c64) -> EigenTriple {
    match kind {
        OracleKind::TForm => EigenTriple::from_t(mu),
        OracleKind::SForm => eigen_maps(mu),
    }
}

fn sorted_ritz(h: &CMat, kind: OracleKind) -> Result<(Vec<EigenTriple>, CMat)> {
    let (vals, vecs) = linalg::eig_general(h.as_ref())?;
    let mut order: Vec<usize> = (0..vals.len()).collect();
    let trip: Vec<EigenTriple> = vals.iter().map(|&v| t_of(kind, v)).collect();
    order.sort_by(|&i, &j| trip[j].t.norm().total_cmp(&trip[i].t.norm()));
    let sorted = order.iter().map(|&i| trip[i]).collect();
    let v = CMat::from_fn(vecs.nrows(), order.len(), |i, j| vecs[(i, order[j])]);
    Ok((sorted, v))
}

/// Orthogonalize `w` against `q` with two modified Gram–Schmidt passes;
/// returns the projection coefficients.
fn mgs(q: &[Vec<c64>], w: &mut [c64]) -> Vec<c64> {
    let mut h = vec![linalg::ZERO; q.len()];
    for _ in 0..2 {
        for (p, qp) in q.iter().enumerate() {
            let d = linalg::dotc(qp, w);
            h[p] += d;
            for (wi, qi) in w.iter_mut().zip(qp) {
                *wi -= d * qi;
            }
        }
    }
    h
}

/// Arnoldi-type iteration on the composed operator.
pub fn iterate(oracle: &ScatterOracle, opts: &IterateOptions) -> Result<IterationResult> {
    let n = oracle.dim;
    if n == 0 || opts.n_modes == 0 || opts.n_modes > n {
        return Err(Error::Precondition(format!("cannot estimate {} modes in dimension {n}", opts.n_modes)));
    }
    oracle.verify(opts.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut a = random_vec(&mut rng, n);
    let nrm = linalg::vec_norm(&a);
    a.iter_mut().for_each(|x| *x /= nrm);

    let mut q: Vec<Vec<c64>> = Vec::new();
    let mut f: Vec<Vec<c64>> = Vec::new();
    let mut log = Vec::new();
    let mut history: Vec<Vec<EigenTriple>> = Vec::new();
    let mut f1_norm = 0.0;
    let mut f1: Vec<c64> = vec![];
    let mut converged = false;
    let mut stable_count = 0;
    let max_iter = opts.max_iter.min(n);

    for m in 1..=max_iter {
        q.push(a.clone());
        let (fm, _) = composed_matvec_with_response(oracle, &a)?;
        if m == 1 {
            f1_norm = linalg::vec_norm(&fm);
            f1 = fm.clone();
        }
        f.push(fm.clone());
        let mut next = fm;
        mgs(&q, &mut next);
        let residual = linalg::vec_norm(&next);

        let mut cov = f1.clone();
        mgs(&q, &mut cov);
        let coverage = linalg::vec_norm(&cov);

        let h = CMat::from_fn(m, m, |i, j| linalg::dotc(&q[i], &f[j]));
        let (ritz, _) = sorted_ritz(&h, oracle.kind)?;
        let top: Vec<EigenTriple> = ritz.iter().take(opts.n_modes).copied().collect();
        let drift = match history.last() {
            Some(prev) if prev.len() == top.len() => top
                .iter()
                .zip(prev)
                .map(|(x, y)| (x.t - y.t).norm() / x.t.norm().max(f64::MIN_POSITIVE).max(1e-300))
                .fold(0.0, f64::max),
            _ => f64::INFINITY,
        };
        history.push(top);
        log.push(IterationLog { m, residual, coverage, drift });

        if f1_norm == 0.0 || residual <= opts.tol_residual * f1_norm {
            converged = true;
            break;
        }
        if m >= opts.n_modes && drift < opts.tol_eig {
            stable_count += 1;
            if stable_count >= 3 {
                converged = true;
                break;
            }
        } else {
            stable_count = 0;
        }
        if m == max_iter {
            break;
        }
        a = next.iter().map(|x| x / residual).collect();
    }

    let m = q.len();
    let h = CMat::from_fn(m, m, |i, j| linalg::dotc(&q[i], &f[j]));
    let (ritz, y) = sorted_ritz(&h, oracle.kind)?;
    let k = opts.n_modes.min(m);
    let mut eigen: Vec<EigenTriple> = ritz.into_iter().take(k).collect();
    let mut vectors = CMat::zeros(n, opts.n_modes);
    for c in 0..k {
        for (p, qp) in q.iter().enumerate() {
            let coef = y[(p, c)];
            for i in 0..n {
                vectors[(i, c)] += coef * qp[i];
            }
        }
    }
    while eigen.len() < opts.n_modes {
        eigen.push(t_of(oracle.kind, if oracle.kind == OracleKind::SForm { linalg::ONE } else { linalg::ZERO }));
    }
    let qm = linalg::from_columns(n, &q);
    Ok(IterationResult {
        eigen,
        vectors,
        basis_orthonormality: linalg::orthonormality_deviation(qm.as_ref()),
        iterations: m,
        converged,
        log,
    })
}
