//! JSON scenario format.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use subcm::dipole::{DipoleScene, Mat3, Port, Region};
use subcm::mie::{Material, SphereSpec};
use subcm::solver::{frequency_grid, Problem, SolveOptions, Solver};

use crate::CliError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub scene: SceneSpec,
    #[serde(default)]
    pub sphere: Option<SphereInput>,
    pub sweep: SweepSpec,
    pub solver: String,
    #[serde(default = "default_modes")]
    pub n_modes: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_modes() -> usize {
    5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub dipoles: Vec<DipoleSpec>,
    #[serde(default)]
    pub ports: Vec<PortSpec>,
    #[serde(default)]
    pub ground_plane: bool,
    #[serde(default)]
    pub resonance_hz: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DipoleSpec {
    pub position: [f64; 3],
    pub polarizability: Polarizability,
    pub region: RegionSpec,
}

/// Scalar (isotropic) or full 3×3 polarizability in m³.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Polarizability {
    Scalar(f64),
    Tensor(Mat3),
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionSpec {
    Controllable,
    Background,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortSpec {
    pub element: usize,
    pub axis: Axis,
    pub z0: f64,
    pub length: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphereInput {
    pub radius: f64,
    pub material: MaterialSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaterialSpec {
    Pec,
    Dielectric {
        eps_r: f64,
        #[serde(default = "unit")]
        mu_r: f64,
    },
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub f_min: f64,
    pub f_max: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub residual: f64,
    pub eigen: f64,
    pub max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        let d = SolveOptions::default();
        Self { residual: d.tol_residual, eigen: d.tol_eig, max_iter: d.max_iter }
    }
}

/// A validated scenario ready to run.
#[derive(Debug, Clone)]
pub struct Plan {
    pub scenario: Scenario,
    pub problem: Problem,
    pub solver: Solver,
    pub frequencies: Vec<f64>,
}

impl Plan {
    pub fn options(&self, seed: u64) -> SolveOptions {
        let t = &self.scenario.tolerances;
        SolveOptions {
            n_modes: self.scenario.n_modes,
            seed,
            max_iter: t.max_iter,
            tol_residual: t.residual,
            tol_eig: t.eigen,
            cross_check: true,
        }
    }
}

pub fn parse(text: &str) -> Result<Scenario, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let at = if path == "." { String::new() } else { format!(" at `{path}`") };
        CliError::Input(format!("scenario parse error{at}: {inner}"))
    })
}

pub fn load(path: &Path) -> Result<Plan, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read scenario {}: {e}", path.display())))?;
    plan(parse(&text)?)
}

pub fn plan(scenario: Scenario) -> Result<Plan, CliError> {
    let bad = |m: String| CliError::Input(m);
    if scenario.version != FORMAT_VERSION {
        return Err(bad(format!("unsupported scenario version {} (expected {FORMAT_VERSION})", scenario.version)));
    }
    let solver = Solver::from_name(&scenario.solver).ok_or_else(|| {
        let names: Vec<&str> = Solver::ALL.iter().map(|s| s.name()).collect();
        bad(format!("unknown solver `{}`; expected one of {}", scenario.solver, names.join(", ")))
    })?;
    let sw = &scenario.sweep;
    if !(sw.f_min <= sw.f_max) {
        return Err(bad(format!("sweep.f_min ({}) exceeds sweep.f_max ({})", sw.f_min, sw.f_max)));
    }
    if sw.n_points == 0 {
        return Err(bad("sweep.n_points must be at least 1".into()));
    }
    if scenario.n_modes == 0 {
        return Err(bad("n_modes must be at least 1".into()));
    }
    let frequencies = frequency_grid(sw.f_min, sw.f_max, sw.n_points).map_err(|e| bad(format!("sweep: {e}")))?;

    let s = &scenario.scene;
    let positions = s.dipoles.iter().map(|d| d.position).collect();
    let pols = s
        .dipoles
        .iter()
        .map(|d| match d.polarizability {
            Polarizability::Scalar(a) => subcm::dipole::isotropic(a),
            Polarizability::Tensor(m) => m,
        })
        .collect();
    let regions = s
        .dipoles
        .iter()
        .map(|d| match d.region {
            RegionSpec::Controllable => Region::Controllable,
            RegionSpec::Background => Region::Background,
        })
        .collect();
    let scene_err = |e: subcm::Error| bad(format!("scene: {e}"));
    let mut scene = DipoleScene::new(positions, pols, regions).map_err(scene_err)?;
    scene.resonance_hz = s.resonance_hz;
    if s.ground_plane {
        scene = scene.with_ground_plane().map_err(scene_err)?;
    }
    if !s.ports.is_empty() {
        let ports = s
            .ports
            .iter()
            .map(|p| Port { element: p.element, axis: p.axis as usize, z0: p.z0, length: p.length })
            .collect();
        scene = scene.with_ports(ports).map_err(scene_err)?;
    }
    scene.validate().map_err(scene_err)?;
    let sphere = scenario.sphere.as_ref().map(|sp| SphereSpec {
        radius: sp.radius,
        material: match sp.material {
            MaterialSpec::Pec => Material::Pec,
            MaterialSpec::Dielectric { eps_r, mu_r } => Material::Dielectric { eps_r, mu_r },
        },
    });
    if let Some(sp) = &sphere {
        sp.validate().map_err(|e| bad(format!("sphere: {e}")))?;
    }
    let problem = Problem { scene, sphere };
    let issues = problem.incompatibilities(solver);
    if !issues.is_empty() {
        return Err(bad(format!("incompatible solver/scene combination:\n  - {}", issues.join("\n  - "))));
    }
    Ok(Plan { scenario, problem, solver, frequencies })
}
