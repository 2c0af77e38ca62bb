//! Per-frequency solver dispatch and sweeps with invariant diagnostics.

use crate::dipole::{assemble_impedance, generalized_scattering, wavenumber, DipoleScene};
use crate::error::{Error, Result};
use crate::hybrid::{hybrid_blocks, HybridScene, U4Method};
use crate::iterative::{iterate, IterateOptions, OracleKind, ScatterOracle};
use crate::linalg;
use crate::mie::SphereSpec;
use crate::modes::{
    cm_ground_plane, cm_impedance_substructure, cm_scattering, cm_t_form, matched_distance, row_degrees,
    substructure_power_check, track_modes, ModeFlags, ModeSet, Representation, SweepResult,
};
use crate::network::{check_t_power, check_unitary, OperatorMatrix};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Solver {
    DenseScattering,
    DenseImpedance,
    TForm,
    Iterative,
    HybridImpedance,
    HybridScattering,
}

impl Solver {
    pub const ALL: [Solver; 6] = [
        Solver::DenseScattering,
        Solver::DenseImpedance,
        Solver::TForm,
        Solver::Iterative,
        Solver::HybridImpedance,
        Solver::HybridScattering,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Solver::DenseScattering => "dense-scattering",
            Solver::DenseImpedance => "dense-impedance",
            Solver::TForm => "t-form",
            Solver::Iterative => "iterative",
            Solver::HybridImpedance => "hybrid-impedance",
            Solver::HybridScattering => "hybrid-scattering",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|v| v.name() == s)
    }

    pub fn is_hybrid(&self) -> bool {
        matches!(self, Solver::HybridImpedance | Solver::HybridScattering)
    }
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub scene: DipoleScene,
    pub sphere: Option<SphereSpec>,
}

impl Problem {
    /// Every reason the solver cannot handle this problem.
    pub fn incompatibilities(&self, solver: Solver) -> Vec<String> {
        let mut out = vec![];
        if solver.is_hybrid() && self.sphere.is_none() {
            out.push(format!("solver {} requires a sphere", solver.name()));
        }
        if !solver.is_hybrid() && self.sphere.is_some() {
            out.push(format!("a sphere requires a hybrid solver, not {}", solver.name()));
        }
        if !self.scene.ports.is_empty() && solver != Solver::DenseScattering {
            out.push(format!("ports require dense-scattering, not {}", solver.name()));
        }
        if self.scene.ground_plane && !matches!(solver, Solver::DenseScattering | Solver::DenseImpedance) {
            out.push(format!("a ground plane requires dense-scattering or dense-impedance, not {}", solver.name()));
        }
        if self.scene.ground_plane && !self.scene.ports.is_empty() {
            out.push("ports cannot be combined with a ground plane".into());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub n_modes: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol_residual: f64,
    pub tol_eig: f64,
    /// Also run a second formulation and report the spectral distance.
    pub cross_check: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { n_modes: 5, seed: 42, max_iter: 60, tol_residual: 1e-8, tol_eig: 1e-6, cross_check: true }
    }
}

/// Invariant residuals at one frequency; `None` when not applicable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub frequency: f64,
    pub unitarity_s: Option<f64>,
    pub unitarity_s_b: Option<f64>,
    pub t_power: Option<f64>,
    pub power_identity: Option<f64>,
    pub factorization: Option<f64>,
    pub equivalence: Option<f64>,
    pub max_circle_excess: f64,
    pub max_orthonormality: f64,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub flags: ModeFlags,
}

#[derive(Debug, Clone)]
pub struct FrequencyResult {
    pub modes: ModeSet,
    pub diagnostics: Diagnostics,
}

struct Operators {
    t: OperatorMatrix,
    t_b: OperatorMatrix,
    s: OperatorMatrix,
    s_b: OperatorMatrix,
}

fn spectral_scale(ms: &ModeSet) -> f64 {
    ms.eigen.iter().map(|e| e.t.norm()).fold(0.0, f64::max).max(1e-300)
}

pub fn solve_frequency(problem: &Problem, solver: Solver, frequency: f64, opts: &SolveOptions) -> Result<FrequencyResult> {
    let issues = problem.incompatibilities(solver);
    if !issues.is_empty() {
        return Err(Error::Precondition(issues.join("; ")));
    }
    if !(frequency > 0.0) || !frequency.is_finite() {
        return Err(Error::Domain(format!("frequency must be positive, got {frequency}")));
    }
    let k = wavenumber(frequency);
    let mut diag = Diagnostics { frequency, ..Default::default() };
    let scene = &problem.scene;

    let (mut modes, ops) = if scene.ground_plane {
        let blocks = assemble_impedance(scene, k)?;
        diag.factorization = Some(blocks.factorization_residual);
        let tr = blocks.transition()?;
        let ops = Operators { t: tr.t, t_b: tr.t_b, s: tr.s, s_b: tr.s_b };
        let ms = match solver {
            Solver::DenseScattering => cm_ground_plane(scene, k)?,
            _ => cm_impedance_substructure(&blocks)?,
        };
        if opts.cross_check {
            let other = match solver {
                Solver::DenseScattering => cm_impedance_substructure(&blocks)?,
                _ => cm_ground_plane(scene, k)?,
            };
            diag.equivalence = Some(matched_distance(&ms.t_values(), &other.t_values()) / spectral_scale(&ms));
        }
        (ms, Some(ops))
    } else if !scene.ports.is_empty() {
        let g = generalized_scattering(scene, k)?;
        diag.factorization = Some(g.blocks.factorization_residual);
        let ms = cm_scattering(&g.s, &g.s_b)?;
        diag.unitarity_s = Some(check_unitary(&g.s, 1.0)?.deviation);
        diag.unitarity_s_b = Some(check_unitary(&g.s_b, 1.0)?.deviation);
        (ms, None)
    } else {
        let blocks = match (solver.is_hybrid(), problem.sphere) {
            (true, Some(sphere)) => hybrid_blocks(&HybridScene::new(scene.clone(), sphere)?, k, U4Method::Quadrature)?.0,
            _ => assemble_impedance(scene, k)?,
        };
        diag.factorization = Some(blocks.factorization_residual);
        let tr = blocks.transition()?;
        let ops = Operators { t: tr.t, t_b: tr.t_b, s: tr.s, s_b: tr.s_b };
        let ms = match solver {
            Solver::DenseScattering | Solver::HybridScattering => cm_scattering(&ops.s, &ops.s_b)?,
            Solver::DenseImpedance | Solver::HybridImpedance => cm_impedance_substructure(&blocks)?,
            Solver::TForm => cm_t_form(&ops.t, &ops.t_b, Representation::Excitation)?,
            Solver::Iterative => {
                let oracle = ScatterOracle::from_dense(ops.t.data.clone(), ops.t_b.data.clone(), OracleKind::TForm)?;
                let n_modes = opts.n_modes.min(oracle.dim).max(1);
                let r = iterate(
                    &oracle,
                    &IterateOptions {
                        max_iter: opts.max_iter,
                        n_modes,
                        tol_residual: opts.tol_residual,
                        tol_eig: opts.tol_eig,
                        seed: opts.seed,
                    },
                )?;
                diag.iterations = Some(r.iterations);
                diag.converged = Some(r.converged);
                let mut a = r.vectors;
                linalg::normalize_columns(&mut a);
                let f = &ops.s_b.data * &a;
                let mut ms = ModeSet {
                    frequency,
                    eigen: r.eigen,
                    a,
                    f,
                    currents: None,
                    controllable_currents: None,
                    cancellation: vec![false; n_modes],
                    flags: ModeFlags::default(),
                    row_degree: row_degrees(&ops.t.basis, 0),
                };
                ms.sort();
                ms
            }
        };
        if opts.cross_check {
            let other = match solver {
                Solver::DenseImpedance | Solver::HybridImpedance => cm_scattering(&ops.s, &ops.s_b)?,
                _ => cm_impedance_substructure(&blocks)?,
            };
            let (mut a, mut b) = (ms.t_values(), other.t_values());
            let n = opts.n_modes.min(a.len()).min(b.len());
            if solver == Solver::Iterative {
                a.truncate(n);
                b.truncate(n);
            }
            diag.equivalence = Some(matched_distance(&a, &b) / spectral_scale(&other));
        }
        (ms, Some(ops))
    };

    if let Some(ops) = &ops {
        diag.unitarity_s = Some(check_unitary(&ops.s, 1.0)?.deviation);
        diag.unitarity_s_b = Some(check_unitary(&ops.s_b, 1.0)?.deviation);
        diag.t_power = Some(check_t_power(&ops.t, 1.0)?.deviation);
        if modes.dim() == ops.t.dim() {
            let p = substructure_power_check(&ops.t, &ops.t_b, &modes)?;
            diag.power_identity = Some(p.into_iter().fold(0.0, f64::max));
        }
    }
    modes.truncate(opts.n_modes);
    modes.frequency = frequency;
    diag.max_circle_excess = modes.max_circle_excess();
    diag.max_orthonormality = modes.orthonormality_per_mode().into_iter().fold(0.0, f64::max);
    diag.flags = modes.flags;
    Ok(FrequencyResult { modes, diagnostics: diag })
}

/// `n` equally spaced frequencies from `f_min` to `f_max`.
pub fn frequency_grid(f_min: f64, f_max: f64, n: usize) -> Result<Vec<f64>> {
    if n == 0 || !(f_min > 0.0) || !(f_max >= f_min) || !f_max.is_finite() {
        return Err(Error::Domain(format!("invalid sweep {f_min}..{f_max} with {n} points")));
    }
    if n == 1 {
        return Ok(vec![f_min]);
    }
    Ok((0..n).map(|i| f_min + (f_max - f_min) * i as f64 / (n - 1) as f64).collect())
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub sweep: SweepResult,
    pub diagnostics: Vec<Diagnostics>,
}

/// Solve every frequency (in parallel when enabled) and track the modes.
pub fn run_sweep(problem: &Problem, solver: Solver, frequencies: &[f64], opts: &SolveOptions) -> Result<SweepOutcome> {
    let results: Vec<Result<FrequencyResult>> = par::map(frequencies, |&f| solve_frequency(problem, solver, f, opts));
    let mut modes = Vec::with_capacity(results.len());
    let mut diagnostics = Vec::with_capacity(results.len());
    for r in results {
        let r = r?;
        modes.push(r.modes);
        diagnostics.push(r.diagnostics);
    }
    Ok(SweepOutcome { sweep: track_modes(modes)?, diagnostics })
}
