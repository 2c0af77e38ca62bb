//! Dense characteristic-mode engines and their cross-checks.

use faer::c64;

use crate::dipole::{mirror_scene, transition, BlockImpedance, DipoleScene};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, Lu};
use crate::network::{self, eigen_maps, EigenTriple, OperatorMatrix};
use crate::swe::{ground_plane_filter, WaveBasis};

/// Relative eigenvalue gap below which eigenvectors are re-orthonormalized.
pub const CLUSTER_GAP: f64 = 1e-9;
/// `‖(S − S_b)a‖ < CANCEL_RATIO·‖S a‖` marks a cancellation-sensitive mode.
pub const CANCEL_RATIO: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ModeFlags {
    /// The background was not unitary and a two-matrix solver was used.
    pub non_unitary_background: bool,
    /// The Schur radiation part was not positive semidefinite.
    pub indefinite_radiation: bool,
}

/// Eigenpairs at one frequency, ordered by `|t|` descending.
#[derive(Debug, Clone)]
pub struct ModeSet {
    pub frequency: f64,
    pub eigen: Vec<EigenTriple>,
    /// Excitation vectors as columns.
    pub a: CMat,
    /// Scattered-field vectors `f = S_b a` as columns.
    pub f: CMat,
    /// Full stacked currents `[I_b; I_c]`, when available.
    pub currents: Option<CMat>,
    /// Controllable currents `I_c`, when available.
    pub controllable_currents: Option<CMat>,
    pub cancellation: Vec<bool>,
    pub flags: ModeFlags,
    /// Degree `l` of every row (0 for port rows).
    pub row_degree: Vec<usize>,
}

pub fn row_degrees(basis: &WaveBasis, extra: usize) -> Vec<usize> {
    basis.indices().iter().map(|w| w.l).chain(std::iter::repeat_n(0, extra)).collect()
}

impl ModeSet {
    pub fn len(&self) -> usize {
        self.eigen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigen.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn t_values(&self) -> Vec<c64> {
        self.eigen.iter().map(|e| e.t).collect()
    }

    pub fn with_frequency(mut self, f: f64) -> Self {
        self.frequency = f;
        self
    }

    /// `Σ|a_i|² l_i / Σ|a_i|²` of mode `n`.
    pub fn degree_centroid(&self, n: usize) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..self.a.nrows() {
            let w = self.a[(i, n)].norm_sqr();
            num += w * self.row_degree[i] as f64;
            den += w;
        }
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }

    /// Largest `|t + 1/2| − 1/2`.
    pub fn max_circle_excess(&self) -> f64 {
        self.eigen.iter().map(|e| e.circle_excess()).fold(f64::NEG_INFINITY, f64::max).max(0.0)
    }

    pub fn orthonormality_a(&self) -> f64 {
        linalg::orthonormality_deviation(self.a.as_ref())
    }

    pub fn orthonormality_f(&self) -> f64 {
        linalg::orthonormality_deviation(self.f.as_ref())
    }

    /// Per-mode orthogonality residual: largest `|a_mᴴa_n − δ|` over `m`.
    pub fn orthonormality_per_mode(&self) -> Vec<f64> {
        let g = self.a.adjoint() * &self.a;
        (0..g.ncols())
            .map(|n| {
                (0..g.nrows())
                    .map(|m| (g[(m, n)] - if m == n { linalg::ONE } else { linalg::ZERO }).norm())
                    .fold(0.0, f64::max)
            })
            .collect()
    }

    fn permute(&mut self, order: &[usize]) {
        let pick = |m: &CMat| CMat::from_fn(m.nrows(), order.len(), |i, j| m[(i, order[j])]);
        self.eigen = order.iter().map(|&i| self.eigen[i]).collect();
        self.cancellation = order.iter().map(|&i| self.cancellation[i]).collect();
        self.a = pick(&self.a);
        self.f = pick(&self.f);
        self.currents = self.currents.as_ref().map(pick);
        self.controllable_currents = self.controllable_currents.as_ref().map(pick);
    }

    /// Order by `|t|` descending, ties by ascending degree centroid.
    pub fn sort(&mut self) {
        let n = self.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| self.eigen[j].t.norm().total_cmp(&self.eigen[i].t.norm()));
        let scale = self.eigen.iter().map(|e| e.t.norm()).fold(0.0, f64::max).max(1.0);
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && (self.eigen[order[start]].t.norm() - self.eigen[order[end]].t.norm()).abs() <= CLUSTER_GAP * scale {
                end += 1;
            }
            if end - start > 1 {
                let cent: Vec<f64> = order[start..end].iter().map(|&i| self.degree_centroid(i)).collect();
                let mut idx: Vec<usize> = (0..end - start).collect();
                idx.sort_by(|&a, &b| cent[a].total_cmp(&cent[b]));
                let seg: Vec<usize> = idx.iter().map(|&a| order[start + a]).collect();
                order[start..end].copy_from_slice(&seg);
            }
            start = end;
        }
        self.permute(&order);
    }

    /// Keep the `n` most significant modes.
    pub fn truncate(&mut self, n: usize) {
        if n < self.len() {
            let order: Vec<usize> = (0..n).collect();
            self.permute(&order);
        }
    }
}

fn check_same_dim(a: &OperatorMatrix, b: &OperatorMatrix) -> Result<()> {
    if a.dim() != b.dim() || a.data.nrows() != a.data.ncols() || b.data.nrows() != b.data.ncols() {
        return Err(Error::Shape(format!("operator dimensions {} and {} differ", a.dim(), b.dim())));
    }
    Ok(())
}

fn cancellation_flags(s: &CMat, s_b: &CMat, a: &CMat) -> Vec<bool> {
    let sa = s * a;
    let sba = s_b * a;
    (0..a.ncols())
        .map(|n| {
            let d: f64 = (0..a.nrows()).map(|i| (sa[(i, n)] - sba[(i, n)]).norm_sqr()).sum::<f64>().sqrt();
            let r: f64 = (0..a.nrows()).map(|i| sa[(i, n)].norm_sqr()).sum::<f64>().sqrt();
            d < CANCEL_RATIO * r
        })
        .collect()
}

fn finish(
    eigen: Vec<EigenTriple>,
    a: CMat,
    f: CMat,
    s: &CMat,
    s_b: &CMat,
    flags: ModeFlags,
    row_degree: Vec<usize>,
) -> ModeSet {
    let cancellation = cancellation_flags(s, s_b, &a);
    let mut ms = ModeSet {
        frequency: 0.0,
        eigen,
        a,
        f,
        currents: None,
        controllable_currents: None,
        cancellation,
        flags,
        row_degree,
    };
    ms.sort();
    ms
}

/// Modes of `S a = s S_b a`.
///
/// Unitary inputs go through the normal matrix `S_bᴴS`, whose eigenbasis
/// is orthonormal; otherwise a QZ decomposition of the pencil is used and
/// the result is flagged.
pub fn cm_scattering(s: &OperatorMatrix, s_b: &OperatorMatrix) -> Result<ModeSet> {
    check_same_dim(s, s_b)?;
    let unitary = network::check_unitary(s, network::DEFAULT_UNITARY_TOL)?.pass
        && network::check_unitary(s_b, network::DEFAULT_UNITARY_TOL)?.pass;
    let degrees = row_degrees(&s.basis, s.extra);
    let degrees = if degrees.len() == s.dim() { degrees } else { vec![0; s.dim()] };
    let (vals, a, flags) = if unitary {
        let m = s_b.data.adjoint() * &s.data;
        let (vals, a) = linalg::eig_unitary(m.as_ref())?;
        (vals, a, ModeFlags::default())
    } else {
        let (alpha, beta, mut a) = linalg::eig_generalized(s.data.as_ref(), s_b.data.as_ref())?;
        let vals: Vec<c64> = alpha.iter().zip(&beta).map(|(x, y)| x / y).collect();
        linalg::orthonormalize_clusters(&vals, &mut a, CLUSTER_GAP);
        (vals, a, ModeFlags { non_unitary_background: true, ..Default::default() })
    };
    let f = &s_b.data * &a;
    let eigen = vals.into_iter().map(eigen_maps).collect();
    Ok(finish(eigen, a, f, &s.data, &s_b.data, flags, degrees))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    /// `(2T_bᴴT + T_bᴴ + T) a = t a`.
    Excitation,
    /// `(2T T_bᴴ + T_bᴴ + T) f = t f`.
    Scattered,
}

/// Composed transition operator of the chosen representation.
pub fn t_form_operator(t: &CMat, t_b: &CMat, rep: Representation) -> CMat {
    let tbh = t_b.adjoint().to_owned();
    let prod = match rep {
        Representation::Excitation => &tbh * t,
        Representation::Scattered => t * &tbh,
    };
    linalg::scale(prod.as_ref(), c64::new(2.0, 0.0)) + &tbh + t
}

pub fn cm_t_form(t: &OperatorMatrix, t_b: &OperatorMatrix, rep: Representation) -> Result<ModeSet> {
    check_same_dim(t, t_b)?;
    let op = t_form_operator(&t.data, &t_b.data, rep);
    let (vals, mut v) = linalg::eig_general(op.as_ref())?;
    linalg::orthonormalize_clusters(&vals, &mut v, CLUSTER_GAP);
    let n = t.dim();
    let eye = linalg::identity(n);
    let s = &eye + linalg::scale(t.data.as_ref(), c64::new(2.0, 0.0));
    let s_b = &eye + linalg::scale(t_b.data.as_ref(), c64::new(2.0, 0.0));
    let (a, f) = match rep {
        Representation::Excitation => {
            let f = &s_b * &v;
            (v, f)
        }
        Representation::Scattered => (s_b.adjoint() * &v, v),
    };
    let eigen = vals.into_iter().map(EigenTriple::from_t).collect();
    let degrees = row_degrees(&t.basis, t.extra);
    let degrees = if degrees.len() == n { degrees } else { vec![0; n] };
    Ok(finish(eigen, a, f, &s, &s_b, ModeFlags::default(), degrees))
}

/// Schur-complement quantities of a two-region impedance system.
#[derive(Debug, Clone)]
pub struct SchurSystem {
    pub z_tilde: CMat,
    pub r_tilde: CMat,
    pub x_tilde: CMat,
    pub u1_tilde: CMat,
    /// `Z_bb⁻¹ Z_bc`.
    pub zbb_inv_zbc: CMat,
    /// `‖R̃ − Ũ₁ᴴŨ₁‖_F / ‖R̃‖_F`.
    pub radiation_residual: f64,
    /// `‖Z̃ − (Z_cc − Z_cb Z_bb⁻¹ Z_bc)‖_F / ‖Z̃‖_F`, evaluated by an
    /// independent block elimination.
    pub assembly_residual: f64,
}

impl SchurSystem {
    pub fn new(blocks: &BlockImpedance) -> Result<Self> {
        let (nb, nc) = (blocks.n_b(), blocks.n_c());
        let zbb_inv_zbc = if nb > 0 {
            Lu::new(blocks.z_bb.as_ref(), "background impedance")?.solve(blocks.z_bc.as_ref())
        } else {
            CMat::zeros(0, nc)
        };
        let z_tilde = &blocks.z_cc - &blocks.z_cb * &zbb_inv_zbc;
        let u1_tilde = &blocks.u1_c - &blocks.u1_b * &zbb_inv_zbc;
        let r_tilde = linalg::hermitian_part(z_tilde.as_ref());
        let x_tilde = linalg::skew_part(z_tilde.as_ref());
        let gram = u1_tilde.adjoint() * &u1_tilde;
        let rn = linalg::fro(r_tilde.as_ref());
        let radiation_residual = if rn == 0.0 { 0.0 } else { linalg::fro((&r_tilde - &gram).as_ref()) / rn };
        // The inverse of the controllable block of Z⁻¹ is Z̃.
        let assembly_residual = if nc > 0 {
            let zinv = linalg::inverse(blocks.full_z().as_ref(), "scene impedance")?;
            let cc: Vec<usize> = (nb..nb + nc).collect();
            let corner = linalg::submatrix(zinv.as_ref(), &cc, &cc);
            let prod = &corner * &z_tilde;
            linalg::fro((&prod - linalg::identity(nc)).as_ref()) / (nc as f64).sqrt()
        } else {
            0.0
        };
        Ok(Self { z_tilde, r_tilde, x_tilde, u1_tilde, zbb_inv_zbc, radiation_residual, assembly_residual })
    }
}

/// Modes of `X̃ I = λ R̃ I`; one mode per controllable unknown.
pub fn cm_impedance_substructure(blocks: &BlockImpedance) -> Result<ModeSet> {
    let schur = SchurSystem::new(blocks)?;
    let t_b = blocks.t_background()?;
    let nw = blocks.basis.len();
    let s_b = linalg::identity(nw) + linalg::scale(t_b.as_ref(), c64::new(2.0, 0.0));
    let t_full = blocks.t_matrix()?;
    let s = linalg::identity(nw) + linalg::scale(t_full.as_ref(), c64::new(2.0, 0.0));
    let nc = blocks.n_c();
    let (alpha, beta, mut ic) = linalg::eig_generalized(schur.x_tilde.as_ref(), schur.r_tilde.as_ref())?;
    let mut eigen = Vec::with_capacity(nc);
    let mut f = CMat::zeros(nw, nc);
    for n in 0..nc {
        let (al, be) = (alpha[n], beta[n]);
        let den = be + linalg::J * al;
        let t = if den.norm() == 0.0 { linalg::ZERO } else { -be / den };
        let col = linalg::column(ic.as_ref(), n);
        let fr = linalg::matvec(schur.u1_tilde.as_ref(), &col);
        let fnorm = linalg::vec_norm(&fr);
        // I_c scaled so that −Ũ₁ I_c = t f with |f| = 1.
        let (scale, t) = if fnorm > 0.0 && t.norm() > 0.0 { (t.norm() / fnorm, t) } else { (0.0, linalg::ZERO) };
        for i in 0..nc {
            ic[(i, n)] *= scale;
        }
        if t.norm() > 0.0 {
            for i in 0..nw {
                f[(i, n)] = -fr[i] * scale / t;
            }
        }
        eigen.push(EigenTriple::from_t(t));
    }
    let radiating_min = {
        let (ev, _) = linalg::eig_hermitian(schur.r_tilde.as_ref())?;
        ev.first().copied().unwrap_or(0.0)
    };
    let rn = linalg::fro(schur.r_tilde.as_ref()).max(f64::MIN_POSITIVE);
    let flags = ModeFlags { indefinite_radiation: radiating_min < -1e-8 * rn, ..Default::default() };
    let a = s_b.adjoint() * &f;
    let mut ms = ModeSet {
        frequency: 0.0,
        eigen,
        cancellation: cancellation_flags(&s, &s_b, &a),
        a,
        f,
        currents: None,
        controllable_currents: Some(ic),
        flags,
        row_degree: row_degrees(&blocks.basis, 0),
    };
    ms.sort();
    Ok(ms)
}

/// `T̃ = −Ũ₁ Z̃⁻¹ Ũ₁ᴴ` together with the residual of
/// `2T T_bᴴ + T_bᴴ + T = T̃`.
#[derive(Debug, Clone)]
pub struct TildeT {
    pub t_tilde: OperatorMatrix,
    pub identity_residual: f64,
}

pub fn tilde_tmatrix(blocks: &BlockImpedance) -> Result<TildeT> {
    let nw = blocks.basis.len();
    let data = if blocks.n_c() == 0 {
        CMat::zeros(nw, nw)
    } else {
        let schur = SchurSystem::new(blocks)?;
        let x = linalg::solve(schur.z_tilde.as_ref(), linalg::adjoint(schur.u1_tilde.as_ref()).as_ref(), "Schur complement")?;
        -(&schur.u1_tilde * &x)
    };
    let t = blocks.t_matrix()?;
    let t_b = blocks.t_background()?;
    let composed = t_form_operator(&t, &t_b, Representation::Scattered);
    let den = linalg::fro(data.as_ref());
    let diff = linalg::fro((&composed - &data).as_ref());
    let identity_residual = if den == 0.0 { diff } else { diff / den };
    Ok(TildeT {
        t_tilde: OperatorMatrix::new(network::OperatorKind::T, blocks.basis.clone(), data)?,
        identity_residual,
    })
}

/// Eigenvalues of `T̃` (ordered by `|t|` descending).
pub fn tilde_eigenvalues(tt: &TildeT) -> Result<Vec<c64>> {
    let mut v = linalg::eigenvalues(tt.t_tilde.data.as_ref())?;
    v.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    Ok(v)
}

/// Currents of one mode by both routes.
#[derive(Debug, Clone)]
pub struct RecoveredCurrents {
    /// Full stacked `[I_b; I_c]` from `Z⁻¹Uᵀa − [Z_bb⁻¹U_bᵀa; 0]`.
    pub full: Vec<c64>,
    pub background: Vec<c64>,
    pub controllable: Vec<c64>,
    /// `Z̃⁻¹Ũ₁ᴴ f`, absent when `t = 0`.
    pub controllable_from_f: Option<Vec<c64>>,
    /// `‖I_c − I_c'‖/‖I_c‖`.
    pub agreement: Option<f64>,
}

pub struct CurrentSolver<'a> {
    blocks: &'a BlockImpedance,
    z_lu: Lu,
    zbb_lu: Option<Lu>,
    schur: SchurSystem,
    z_tilde_lu: Option<Lu>,
    u_full: CMat,
}

impl<'a> CurrentSolver<'a> {
    pub fn new(blocks: &'a BlockImpedance) -> Result<Self> {
        let z_lu = Lu::new(blocks.full_z().as_ref(), "scene impedance")?;
        let zbb_lu = if blocks.n_b() > 0 { Some(Lu::new(blocks.z_bb.as_ref(), "background impedance")?) } else { None };
        let schur = SchurSystem::new(blocks)?;
        let z_tilde_lu = if blocks.n_c() > 0 { Some(Lu::new(schur.z_tilde.as_ref(), "Schur complement")?) } else { None };
        Ok(Self { blocks, z_lu, zbb_lu, schur, z_tilde_lu, u_full: blocks.full_u() })
    }

    pub fn recover(&self, a: &[c64], f: &[c64], t: c64) -> RecoveredCurrents {
        let nb = self.blocks.n_b();
        let rhs = linalg::matvec(self.u_full.transpose(), a);
        let mut full = self.z_lu.solve_vec(&rhs);
        if let Some(lu) = &self.zbb_lu {
            let rb = linalg::matvec(self.blocks.u1_b.transpose(), a);
            let ib = lu.solve_vec(&rb);
            for (x, y) in full.iter_mut().zip(&ib) {
                *x -= y;
            }
        }
        let background = full[..nb].to_vec();
        let controllable = full[nb..].to_vec();
        let (controllable_from_f, agreement) = match (&self.z_tilde_lu, t.norm() > 0.0) {
            (Some(lu), true) => {
                let r = linalg::matvec(linalg::adjoint(self.schur.u1_tilde.as_ref()).as_ref(), f);
                let ic: Vec<c64> = lu.solve_vec(&r);
                let d: Vec<c64> = ic.iter().zip(&controllable).map(|(x, y)| x - y).collect();
                let den = linalg::vec_norm(&controllable);
                let agreement = if den == 0.0 { linalg::vec_norm(&d) } else { linalg::vec_norm(&d) / den };
                (Some(ic), Some(agreement))
            }
            _ => (None, None),
        };
        RecoveredCurrents { full, background, controllable, controllable_from_f, agreement }
    }

    pub fn schur(&self) -> &SchurSystem {
        &self.schur
    }
}

pub fn recover_currents(a: &[c64], f: &[c64], t: c64, blocks: &BlockImpedance) -> Result<RecoveredCurrents> {
    Ok(CurrentSolver::new(blocks)?.recover(a, f, t))
}

/// Attach currents to every mode of `ms` and return the worst relative
/// disagreement between the two recovery routes over modes with
/// `|t| > t_min`.
pub fn attach_currents(ms: &mut ModeSet, blocks: &BlockImpedance, t_min: f64) -> Result<f64> {
    let solver = CurrentSolver::new(blocks)?;
    let n = ms.len();
    let nd = blocks.n_b() + blocks.n_c();
    let mut full = CMat::zeros(nd, n);
    let mut ctl = CMat::zeros(blocks.n_c(), n);
    let mut worst: f64 = 0.0;
    for m in 0..n {
        let a = linalg::column(ms.a.as_ref(), m);
        let f = linalg::column(ms.f.as_ref(), m);
        let r = solver.recover(&a, &f, ms.eigen[m].t);
        for i in 0..nd {
            full[(i, m)] = r.full[i];
        }
        for i in 0..blocks.n_c() {
            ctl[(i, m)] = r.controllable[i];
        }
        if ms.eigen[m].t.norm() > t_min {
            worst = worst.max(r.agreement.unwrap_or(0.0));
        }
    }
    ms.currents = Some(full);
    ms.controllable_currents = Some(ctl);
    Ok(worst)
}

/// Per-mode residual of `½|(T−T_b)a|² = −Re{t}/2·|a|² = ½|t|²|a|²`.
pub fn substructure_power_check(t: &OperatorMatrix, t_b: &OperatorMatrix, ms: &ModeSet) -> Result<Vec<f64>> {
    check_same_dim(t, t_b)?;
    if ms.dim() != t.dim() {
        return Err(Error::Shape("mode vectors do not match the operator dimension".into()));
    }
    let d = &t.data - &t_b.data;
    let da = &d * &ms.a;
    Ok((0..ms.len())
        .map(|n| {
            let a2: f64 = (0..ms.dim()).map(|i| ms.a[(i, n)].norm_sqr()).sum();
            let p1 = 0.5 * (0..ms.dim()).map(|i| da[(i, n)].norm_sqr()).sum::<f64>();
            let tn = ms.eigen[n].t;
            let p2 = -0.5 * tn.re * a2;
            let p3 = 0.5 * tn.norm_sqr() * a2;
            (p1 - p2).abs().max((p1 - p3).abs())
        })
        .collect())
}

fn restrict(m: &OperatorMatrix, keep: &[usize]) -> OperatorMatrix {
    OperatorMatrix {
        kind: m.kind,
        basis: m.basis.clone(),
        extra: 0,
        data: linalg::submatrix(m.data.as_ref(), keep, keep),
    }
}

/// Modes of a scene above a PEC plane: explicit images, then the operators
/// restricted to the waves compatible with the plane. Eigenvectors are
/// returned in the full basis (zero on the dropped waves).
pub fn cm_ground_plane(scene: &DipoleScene, k: f64) -> Result<ModeSet> {
    let mirrored = mirror_scene(scene)?;
    let tr = transition(&mirrored, k)?;
    let keep = ground_plane_filter(&tr.s.basis);
    let (s, s_b) = (restrict(&tr.s, &keep), restrict(&tr.s_b, &keep));
    let mut ms = cm_scattering(&s, &s_b)?;
    let nw = tr.s.dim();
    let lift = |m: &CMat| {
        let mut out = CMat::zeros(nw, m.ncols());
        for (r, &i) in keep.iter().enumerate() {
            for j in 0..m.ncols() {
                out[(i, j)] = m[(r, j)];
            }
        }
        out
    };
    ms.a = lift(&ms.a);
    ms.f = lift(&ms.f);
    ms.row_degree = row_degrees(&tr.s.basis, 0);
    Ok(ms)
}

/// Modal traces over a frequency sweep.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub frequencies: Vec<f64>,
    pub modesets: Vec<ModeSet>,
    /// `trace_of[i][n]` is the trace id of mode `n` at frequency `i`.
    pub trace_of: Vec<Vec<usize>>,
    pub n_traces: usize,
}

impl SweepResult {
    /// `(frequency index, mode index)` samples of one trace.
    pub fn trace(&self, id: usize) -> Vec<(usize, usize)> {
        self.trace_of
            .iter()
            .enumerate()
            .filter_map(|(i, row)| row.iter().position(|&t| t == id).map(|n| (i, n)))
            .collect()
    }
}

/// Greedy correlation tracking of modes across adjacent frequencies.
pub fn track_modes(sweep: Vec<ModeSet>) -> Result<SweepResult> {
    let frequencies: Vec<f64> = sweep.iter().map(|m| m.frequency).collect();
    let port_rows = |m: &ModeSet| m.row_degree.iter().filter(|&&l| l == 0).count();
    if let Some(first) = sweep.first() {
        if sweep.iter().any(|m| port_rows(m) != port_rows(first) || m.row_degree.len() != m.dim()) {
            return Err(Error::Shape("mode sets in a sweep must share their port rows".into()));
        }
    }
    let mut trace_of: Vec<Vec<usize>> = Vec::with_capacity(sweep.len());
    let mut next = 0usize;
    for (i, ms) in sweep.iter().enumerate() {
        if i == 0 {
            trace_of.push((0..ms.len()).collect());
            next = ms.len();
            continue;
        }
        let prev = &sweep[i - 1];
        let c = overlap(prev, ms);
        let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(prev.len() * ms.len());
        for m in 0..prev.len() {
            for n in 0..ms.len() {
                pairs.push((c[(m, n)].norm(), m, n));
            }
        }
        pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        let mut used_prev = vec![false; prev.len()];
        let mut assigned: Vec<Option<usize>> = vec![None; ms.len()];
        for (_, m, n) in pairs {
            if !used_prev[m] && assigned[n].is_none() {
                used_prev[m] = true;
                assigned[n] = Some(trace_of[i - 1][m]);
            }
        }
        let row = assigned
            .into_iter()
            .map(|a| {
                a.unwrap_or_else(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect();
        trace_of.push(row);
    }
    Ok(SweepResult { frequencies, modesets: sweep, trace_of, n_traces: next })
}

/// `|a_mᴴa_n|` over the shared wave rows (nested bases share a prefix)
/// and the trailing port rows.
fn overlap(prev: &ModeSet, next: &ModeSet) -> CMat {
    let waves = |m: &ModeSet| m.row_degree.iter().filter(|&&l| l > 0).count();
    let (wp, wn) = (waves(prev), waves(next));
    let shared = wp.min(wn);
    let ports = prev.dim() - wp;
    let rows: Vec<(usize, usize)> = (0..shared).map(|i| (i, i)).chain((0..ports).map(|q| (wp + q, wn + q))).collect();
    CMat::from_fn(prev.len(), next.len(), |m, n| {
        rows.iter().map(|&(i, j)| prev.a[(i, m)].conj() * next.a[(j, n)]).sum()
    })
}

/// Optimal one-to-one matching distance between two eigenvalue multisets;
/// the shorter list is padded with zeros. Returns the largest matched
/// distance.
pub fn matched_distance(a: &[c64], b: &[c64]) -> f64 {
    let n = a.len().max(b.len());
    if n == 0 {
        return 0.0;
    }
    let pad = |v: &[c64]| {
        let mut v = v.to_vec();
        v.resize(n, linalg::ZERO);
        v
    };
    let (a, b) = (pad(a), pad(b));
    let cost: Vec<Vec<f64>> = a.iter().map(|x| b.iter().map(|y| (x - y).norm()).collect()).collect();
    let assign = hungarian(&cost);
    assign.iter().enumerate().map(|(i, &j)| cost[i][j]).fold(0.0, f64::max)
}

/// Minimum-cost assignment (rows to columns) for a square cost matrix.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut ans = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            ans[p[j] - 1] = j - 1;
        }
    }
    ans
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dipole::{assemble_impedance, isotropic, Region};
    use crate::network::OperatorKind;
    use crate::swe::{basis, norm3, Vec3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scene(n: usize, seed: u64, k: f64, radius: f64) -> DipoleScene {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pos: Vec<Vec3> = vec![];
        while pos.len() < n {
            let p = [0, 1, 2].map(|_| (rng.random::<f64>() * 2.0 - 1.0) * radius);
            if norm3(&p) < radius
                && pos.iter().all(|q: &Vec3| norm3(&[p[0] - q[0], p[1] - q[1], p[2] - q[2]]) > 0.25 * radius)
            {
                pos.push(p);
            }
        }
        let base = 6.0 * std::f64::consts::PI / k.powi(3);
        let pols = (0..n).map(|_| isotropic(base * (0.1 + 0.9 * rng.random::<f64>()))).collect();
        let regions = (0..n).map(|i| if i % 2 == 0 { Region::Controllable } else { Region::Background }).collect();
        DipoleScene::new(pos, pols, regions).unwrap()
    }

    fn one(kind: OperatorKind, v: f64) -> OperatorMatrix {
        let mut d = CMat::zeros(6, 6);
        for i in 0..6 {
            d[(i, i)] = if kind == OperatorKind::S { linalg::ONE } else { linalg::ZERO };
        }
        d[(0, 0)] = c64::new(v, 0.0);
        OperatorMatrix::new(kind, basis(1).unwrap(), d).unwrap()
    }

    #[test]
    fn scattering_trivial_examples() {
        let ms = cm_scattering(&one(OperatorKind::S, -1.0), &one(OperatorKind::S, 1.0)).unwrap();
        assert!((ms.eigen[0].t + linalg::ONE).norm() < 1e-14);
        assert!(ms.eigen[0].lambda.unwrap().norm() < 1e-14);
        assert!(ms.eigen[1..].iter().all(|e| e.t.norm() < 1e-14));
        let s = one(OperatorKind::S, 1.0);
        let ms = cm_scattering(&s, &s).unwrap();
        assert!(ms.eigen.iter().all(|e| e.t.norm() < 1e-14));
    }

    #[test]
    fn t_form_trivial_examples() {
        let ms = cm_t_form(&one(OperatorKind::T, -1.0), &one(OperatorKind::T, 0.0), Representation::Excitation).unwrap();
        assert!((ms.eigen[0].t + linalg::ONE).norm() < 1e-14);
    }

    #[test]
    fn formulations_agree_on_two_region_scene() {
        let k: f64 = 1.0;
        let s = scene(8, 5, k, 1.0);
        let blocks = assemble_impedance(&s, k).unwrap();
        let tr = blocks.transition().unwrap();
        let a = cm_scattering(&tr.s, &tr.s_b).unwrap();
        let b = cm_t_form(&tr.t, &tr.t_b, Representation::Excitation).unwrap();
        let c = cm_t_form(&tr.t, &tr.t_b, Representation::Scattered).unwrap();
        let d = cm_impedance_substructure(&blocks).unwrap();
        let tt = tilde_tmatrix(&blocks).unwrap();
        let e = tilde_eigenvalues(&tt).unwrap();
        let scale = a.eigen[0].t.norm();
        assert!(matched_distance(&a.t_values(), &b.t_values()) < 1e-6 * scale);
        assert!(matched_distance(&a.t_values(), &c.t_values()) < 1e-6 * scale);
        assert!(matched_distance(&a.t_values(), &d.t_values()) < 1e-6 * scale);
        assert!(matched_distance(&a.t_values(), &e) < 1e-6 * scale);
        assert!(tt.identity_residual < 1e-8, "{}", tt.identity_residual);
        assert!(a.orthonormality_a() < 1e-8 && a.orthonormality_f() < 1e-8);
        assert!(a.max_circle_excess() < 1e-8);
        let schur = SchurSystem::new(&blocks).unwrap();
        assert!(schur.radiation_residual < 1e-8);
        assert!(schur.assembly_residual < 1e-8);
    }

    #[test]
    fn currents_and_power() {
        let k: f64 = 1.0;
        let s = scene(8, 9, k, 1.0);
        let blocks = assemble_impedance(&s, k).unwrap();
        let tr = blocks.transition().unwrap();
        let mut ms = cm_scattering(&tr.s, &tr.s_b).unwrap();
        let worst = attach_currents(&mut ms, &blocks, 1e-3).unwrap();
        assert!(worst < 1e-6, "{worst}");
        let res = substructure_power_check(&tr.t, &tr.t_b, &ms).unwrap();
        assert!(res.iter().all(|r| *r < 1e-8));
        // −Ũ₁ I_c = t f
        let schur = SchurSystem::new(&blocks).unwrap();
        let ic = ms.controllable_currents.as_ref().unwrap();
        let rad = &schur.u1_tilde * ic;
        for n in 0..ms.len() {
            let t = ms.eigen[n].t;
            let err: f64 = (0..ms.dim()).map(|i| (rad[(i, n)] + t * ms.f[(i, n)]).norm_sqr()).sum::<f64>().sqrt();
            assert!(err < 1e-8 * (1.0 + t.norm()));
        }
    }

    #[test]
    fn impedance_path_currents_reproduce_fields() {
        let k: f64 = 1.0;
        let s = scene(6, 12, k, 0.9);
        let blocks = assemble_impedance(&s, k).unwrap();
        let ms = cm_impedance_substructure(&blocks).unwrap();
        let schur = SchurSystem::new(&blocks).unwrap();
        let ic = ms.controllable_currents.as_ref().unwrap();
        let rad = &schur.u1_tilde * ic;
        for n in 0..ms.len() {
            let t = ms.eigen[n].t;
            let err: f64 = (0..ms.dim()).map(|i| (rad[(i, n)] + t * ms.f[(i, n)]).norm_sqr()).sum::<f64>().sqrt();
            assert!(err < 1e-8, "{err}");
        }
    }

    #[test]
    fn empty_controllable_region() {
        let k: f64 = 1.0;
        let mut s = scene(4, 1, k, 0.8);
        s.regions = vec![Region::Background; 4];
        let blocks = assemble_impedance(&s, k).unwrap();
        let tt = tilde_tmatrix(&blocks).unwrap();
        assert_eq!(linalg::fro(tt.t_tilde.data.as_ref()), 0.0);
        let tr = blocks.transition().unwrap();
        let mut ms = cm_scattering(&tr.s, &tr.s_b).unwrap();
        assert!(ms.eigen.iter().all(|e| e.t.norm() < 1e-12));
        attach_currents(&mut ms, &blocks, 1e-3).unwrap();
        assert!(linalg::fro(ms.currents.as_ref().unwrap().as_ref()) < 1e-12);
    }

    #[test]
    fn one_controllable_one_background_gives_three_modes() {
        let k: f64 = 1.0;
        let a = 3.0 / f64::powi(k, 3);
        let s = DipoleScene::new(
            vec![[0.3, 0.0, 0.0], [-0.3, 0.1, 0.0]],
            vec![isotropic(a), isotropic(2.0 * a)],
            vec![Region::Controllable, Region::Background],
        )
        .unwrap();
        let blocks = assemble_impedance(&s, k).unwrap();
        let tr = blocks.transition().unwrap();
        let ms = cm_scattering(&tr.s, &tr.s_b).unwrap();
        let nontrivial = ms.eigen.iter().filter(|e| e.t.norm() > 1e-8).count();
        assert_eq!(nontrivial, 3);
        let imp = cm_impedance_substructure(&blocks).unwrap();
        assert_eq!(imp.len(), 3);
        assert!(matched_distance(&ms.t_values(), &imp.t_values()) < 1e-8);
    }

    #[test]
    fn hungarian_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let n = 5;
            let c: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
            let a = hungarian(&c);
            let best: f64 = a.iter().enumerate().map(|(i, &j)| c[i][j]).sum();
            // all permutations of 5
            let mut perm: Vec<usize> = (0..n).collect();
            let mut bf = f64::INFINITY;
            permute(&mut perm, 0, &c, &mut bf);
            assert!((best - bf).abs() < 1e-12);
        }
        fn permute(p: &mut Vec<usize>, k: usize, c: &[Vec<f64>], best: &mut f64) {
            if k == p.len() {
                *best = best.min(p.iter().enumerate().map(|(i, &j)| c[i][j]).sum());
                return;
            }
            for i in k..p.len() {
                p.swap(k, i);
                permute(p, k + 1, c, best);
                p.swap(k, i);
            }
        }
    }

    #[test]
    fn tracking_constant_operators() {
        let k: f64 = 1.0;
        let s = scene(4, 3, k, 0.7);
        let tr = transition(&s, k).unwrap();
        let ms = cm_scattering(&tr.s, &tr.s_b).unwrap();
        let sweep = vec![ms.clone().with_frequency(1.0), ms.clone().with_frequency(2.0), ms.with_frequency(3.0)];
        let r = track_modes(sweep).unwrap();
        for row in &r.trace_of {
            assert_eq!(row, &(0..row.len()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn ground_plane_vertical_dipole() {
        let k: f64 = 1.0;
        let s = DipoleScene::new(vec![[0.0, 0.0, 0.4]], vec![[[1e-6, 0.0, 0.0], [0.0, 1e-6, 0.0], [0.0, 0.0, 5.0]]], vec![Region::Controllable])
            .unwrap()
            .with_ground_plane()
            .unwrap();
        let ms = cm_ground_plane(&s, k).unwrap();
        let keep = ground_plane_filter(&basis(ms.row_degree.iter().copied().max().unwrap()).unwrap());
        for n in 0..ms.len() {
            for i in 0..ms.dim() {
                if !keep.contains(&i) {
                    assert!(ms.a[(i, n)].norm() < 1e-10);
                }
            }
        }
        assert!(ms.eigen[0].t.norm() > 1e-3);
    }
}
