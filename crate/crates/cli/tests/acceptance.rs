//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any fails.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subcm::c64;
use subcm::dipole::{
    assemble_impedance, assemble_impedance_with_basis, generalized_scattering, isotropic, transition, BlockImpedance,
    DipoleScene, Region,
};
use subcm::hybrid::{hybrid_blocks, hybrid_impedance_modes, hybrid_scattering_modes, HybridScene, U4Method};
use subcm::iterative::{composed_matvec, iterate, IterateOptions, OracleKind, ScatterOracle};
use subcm::linalg;
use subcm::mie::{mie_coefficients, mie_tmatrix, Material, SphereSpec};
use subcm::modes::{
    attach_currents, cm_ground_plane, cm_impedance_substructure, cm_scattering, cm_t_form, matched_distance,
    substructure_power_check, tilde_eigenvalues, tilde_tmatrix, ModeSet, Representation,
};
use subcm::network::{check_t_power, check_unitary};
use subcm::scenes::{port_at, random_cloud, twin_strip_centre, twin_strips, CloudSpec};
use subcm::swe::{basis, ground_plane_filter, truncation_order, Polarization};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn scale(ms: &ModeSet) -> f64 {
    ms.eigen.iter().map(|e| e.t.norm()).fold(0.0, f64::max).max(1e-300)
}

// ---------------------------------------------------------------- Mie oracle

fn sph_j(l: usize, x: f64) -> f64 {
    // ascending series
    let mut df = 1.0;
    for k in 0..=l {
        df *= (2 * k + 1) as f64;
    }
    let (mut term, mut sum) = (1.0, 1.0);
    for k in 1..200 {
        term *= -x * x / (2.0 * k as f64 * (2 * l + 2 * k + 1) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    x.powi(l as i32) / df * sum
}

fn sph_y(l: usize, x: f64) -> f64 {
    let (mut a, mut b) = (-x.cos() / x, -x.cos() / (x * x) - x.sin() / x);
    if l == 0 {
        return a;
    }
    for n in 1..l {
        let c = (2 * n + 1) as f64 / x * b - a;
        a = b;
        b = c;
    }
    b
}

/// Riccati derivatives from the lower-order recurrence.
fn psi_d(l: usize, x: f64) -> f64 {
    x * sph_j(l - 1, x) - l as f64 * sph_j(l, x)
}

fn chi_d(l: usize, x: f64) -> f64 {
    x * sph_y(l - 1, x) - l as f64 * sph_y(l, x)
}

/// `(t_TE, t_TM)` with `h = j − i·y`.
fn mie_oracle(l: usize, x: f64, mat: Material) -> (c64, c64) {
    let h = c64::new(sph_j(l, x), -sph_y(l, x));
    let xi_d = c64::new(psi_d(l, x), -chi_d(l, x));
    match mat {
        Material::Pec => (-sph_j(l, x) / h, -psi_d(l, x) / xi_d),
        Material::Dielectric { eps_r, mu_r } => {
            let m = (eps_r * mu_r).sqrt();
            let (ji, pi) = (sph_j(l, m * x), psi_d(l, m * x));
            let coef = |c: f64| -(c * ji * psi_d(l, x) - sph_j(l, x) * pi) / (xi_d * (c * ji) - h * pi);
            (coef(mu_r), coef(eps_r))
        }
    }
}

fn criterion_1() -> Outcome {
    let eps4 = Material::Dielectric { eps_r: 4.0, mu_r: 1.0 };
    let cases = [(Material::Pec, 0.5), (Material::Pec, 1.0), (Material::Pec, 2.0), (eps4, 0.5), (eps4, 1.0)];
    let mut worst: f64 = 0.0;
    let mut multiplicity_ok = true;
    let mut coincidences = 0;
    for (mat, ka) in cases {
        let spec = SphereSpec { radius: 1.0, material: mat };
        let lmax = truncation_order(ka).unwrap();
        let c = mie_coefficients(&spec, ka, lmax).unwrap();
        for (l, &(te, tm)) in c.iter().enumerate().skip(1) {
            let (ote, otm) = mie_oracle(l, ka, mat);
            worst = worst.max((te - ote).norm() / ote.norm()).max((tm - otm).norm() / otm.norm());
        }
        let b = basis(lmax).unwrap();
        let t = mie_tmatrix(&spec, ka, &b).unwrap();
        for (l, &(te, tm)) in c.iter().enumerate().skip(1) {
            for (pol, v) in [(Polarization::TE, te), (Polarization::TM, tm)] {
                let block: Vec<c64> = b
                    .indices()
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| w.l == l && w.pol == pol)
                    .map(|(i, _)| t.data[(i, i)])
                    .collect();
                multiplicity_ok &= block.len() == 2 * l + 1 && block.iter().all(|d| *d == v);
                // distinct (l, pol) pairs can coincide exactly (PEC TM at ka = 2 for l = 1, 2)
                let others = c.iter().enumerate().skip(1).filter(|&(l2, p)| l2 != l && (p.0 == v || p.1 == v)).count()
                    + usize::from(te == tm);
                coincidences += others;
            }
        }
    }
    outcome(worst < 1e-10 && multiplicity_ok, format!("max rel err {worst:.2e}, multiplicity 2l+1: {multiplicity_ok}, cross-degree coincidences {}", coincidences / 2))
}

// ------------------------------------------------------------ scene suites

fn lossless_scene(i: u64) -> (DipoleScene, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + i);
    let n = rng.random_range(2..=30);
    let ka = 0.2 + 1.8 * rng.random::<f64>();
    let spec = CloudSpec { n_dipoles: n, k: 1.0, ka, controllable_fraction: 0.5, seed: i, upper_half: false };
    (random_cloud(&spec).unwrap(), 1.0)
}

fn criterion_2() -> Outcome {
    let (mut us, mut tp, mut circ, mut orth) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..50 {
        let (scene, k) = lossless_scene(i);
        let tr = transition(&scene, k).unwrap();
        us = us.max(check_unitary(&tr.s, 1.0).unwrap().deviation);
        tp = tp.max(check_t_power(&tr.t, 1.0).unwrap().deviation);
        let ms = cm_scattering(&tr.s, &tr.s_b).unwrap();
        circ = circ.max(ms.max_circle_excess());
        orth = orth.max(ms.orthonormality_a()).max(ms.orthonormality_f());
    }
    let pass = us < 1e-8 && tp < 1e-8 && circ <= 1e-8 && orth < 1e-8;
    outcome(pass, format!("unitarity {us:.2e}, T power {tp:.2e}, circle excess {circ:.2e}, orthonormality {orth:.2e}"))
}

/// Two-region scenes shared by criteria 3 to 6.
fn suite() -> Vec<BlockImpedance> {
    (0..20)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(2000 + i);
            let spec = CloudSpec {
                n_dipoles: rng.random_range(4..=20),
                k: 1.0,
                ka: 0.3 + 1.2 * rng.random::<f64>(),
                controllable_fraction: 0.3 + 0.4 * rng.random::<f64>(),
                seed: 500 + i,
                upper_half: false,
            };
            assemble_impedance(&random_cloud(&spec).unwrap(), 1.0).unwrap()
        })
        .collect()
}

fn criterion_3(suite: &[BlockImpedance]) -> Outcome {
    let (mut worst, mut ident) = (0.0f64, 0.0f64);
    for blocks in suite {
        let tr = blocks.transition().unwrap();
        let a = cm_scattering(&tr.s, &tr.s_b).unwrap();
        let sc = scale(&a);
        let tt = tilde_tmatrix(blocks).unwrap();
        ident = ident.max(tt.identity_residual);
        let sets = [
            a.t_values(),
            cm_t_form(&tr.t, &tr.t_b, Representation::Excitation).unwrap().t_values(),
            cm_t_form(&tr.t, &tr.t_b, Representation::Scattered).unwrap().t_values(),
            tilde_eigenvalues(&tt).unwrap(),
            cm_impedance_substructure(blocks).unwrap().t_values(),
        ];
        for i in 0..sets.len() {
            for j in i + 1..sets.len() {
                worst = worst.max(matched_distance(&sets[i], &sets[j]) / sc);
            }
        }
    }
    outcome(worst < 1e-6 && ident < 1e-8, format!("pairwise rel distance {worst:.2e}, identity residual {ident:.2e}"))
}

fn criterion_4(suite: &[BlockImpedance]) -> Outcome {
    let mut worst: f64 = 0.0;
    for blocks in suite {
        let tr = blocks.transition().unwrap();
        let mut ms = cm_scattering(&tr.s, &tr.s_b).unwrap();
        worst = worst.max(attach_currents(&mut ms, blocks, 1e-3).unwrap());
    }
    outcome(worst < 1e-6, format!("worst controllable-current disagreement {worst:.2e}"))
}

fn criterion_5(suite: &[BlockImpedance]) -> Outcome {
    let mut worst: f64 = 0.0;
    for blocks in suite {
        let tr = blocks.transition().unwrap();
        for ms in [cm_scattering(&tr.s, &tr.s_b).unwrap(), cm_impedance_substructure(blocks).unwrap()] {
            let r = substructure_power_check(&tr.t, &tr.t_b, &ms).unwrap();
            worst = r.into_iter().fold(worst, f64::max);
        }
    }
    for i in 0..50 {
        let (scene, k) = lossless_scene(i);
        let tr = transition(&scene, k).unwrap();
        let ms = cm_scattering(&tr.s, &tr.s_b).unwrap();
        worst = substructure_power_check(&tr.t, &tr.t_b, &ms).unwrap().into_iter().fold(worst, f64::max);
    }
    outcome(worst < 1e-8, format!("worst per-mode power residual {worst:.2e}"))
}

fn criterion_6(suite: &[BlockImpedance]) -> Outcome {
    let (mut worst, mut mv, mut iters, mut used) = (0.0f64, 0.0f64, 0usize, 0usize);
    let mut all_converged = true;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for blocks in suite.iter().filter(|b| b.basis.len() <= 300) {
        used += 1;
        let tr = blocks.transition().unwrap();
        let oracle = ScatterOracle::from_dense(tr.t.data.clone(), tr.t_b.data.clone(), OracleKind::TForm).unwrap();
        let op = subcm::modes::t_form_operator(&tr.t.data, &tr.t_b.data, Representation::Excitation);
        for _ in 0..3 {
            let x: Vec<c64> = (0..oracle.dim).map(|_| c64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
            let y = composed_matvec(&oracle, &x).unwrap();
            let z = linalg::matvec(op.as_ref(), &x);
            let d: Vec<c64> = y.iter().zip(&z).map(|(a, b)| a - b).collect();
            mv = mv.max(linalg::vec_norm(&d) / linalg::vec_norm(&z).max(1e-300));
        }
        let opts = IterateOptions { max_iter: 60, n_modes: 5, tol_residual: 1e-10, tol_eig: 1e-10, seed: 42 };
        let r = iterate(&oracle, &opts).unwrap();
        all_converged &= r.converged && r.iterations <= 60;
        iters = iters.max(r.iterations);
        let dense = cm_scattering(&tr.s, &tr.s_b).unwrap();
        for (e, d) in r.eigen.iter().zip(&dense.eigen).take(5) {
            worst = worst.max((e.t.norm() - d.t.norm()).abs());
        }
    }
    let pass = used > 0 && worst < 1e-6 && mv < 1e-12 && all_converged;
    outcome(pass, format!("{used} scenes, top-5 |t| err {worst:.2e}, max iterations {iters}, matvec err {mv:.2e}"))
}

// --------------------------------------------------------------- ground plane

fn forbidden_content(ms: &ModeSet, allowed: &[usize]) -> Vec<f64> {
    let mut mask = vec![false; ms.dim()];
    for &i in allowed {
        mask[i] = true;
    }
    (0..ms.len())
        .map(|n| {
            let (mut bad, mut all) = (0.0, 0.0);
            for (i, &ok) in mask.iter().enumerate() {
                let v = ms.a[(i, n)].norm_sqr();
                all += v;
                if !ok {
                    bad += v;
                }
            }
            if all == 0.0 {
                0.0
            } else {
                (bad / all).sqrt()
            }
        })
        .collect()
}

fn criterion_7() -> Outcome {
    let (mut brute, mut reduced, mut forbidden) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..10 {
        let spec = CloudSpec { n_dipoles: 3 + i as usize, ka: 0.6 + 0.1 * i as f64, seed: 70 + i, upper_half: true, ..Default::default() };
        let scene = random_cloud(&spec).unwrap();
        let k = 1.0;
        let filtered = cm_ground_plane(&scene, k).unwrap();
        let sc = scale(&filtered);
        let allowed = ground_plane_filter(&basis(*filtered.row_degree.iter().max().unwrap()).unwrap());

        // brute force: whole mirrored scene, then keep the modes that live in the allowed sector
        let mirrored = subcm::dipole::mirror_scene(&scene).unwrap();
        let tr = transition(&mirrored, k).unwrap();
        let full = cm_scattering(&tr.s, &tr.s_b).unwrap();
        let content = forbidden_content(&full, &allowed);
        let kept: Vec<c64> = (0..full.len())
            .filter(|&n| full.eigen[n].t.norm() > 1e-12 * sc && content[n] < 0.5)
            .map(|n| full.eigen[n].t)
            .collect();
        brute = brute.max(matched_distance(&filtered.t_values(), &kept) / sc);

        let blocks = assemble_impedance(&scene, k).unwrap();
        let half = cm_impedance_substructure(&blocks).unwrap();
        reduced = reduced.max(matched_distance(&filtered.t_values(), &half.t_values()) / sc);
        for ms in [&filtered, &half] {
            forbidden = forbidden_content(ms, &allowed).into_iter().fold(forbidden, f64::max);
        }
    }
    let pass = brute < 1e-8 && reduced < 1e-8 && forbidden < 1e-10;
    outcome(pass, format!("filtered vs mirrored {brute:.2e}, vs half-space impedance {reduced:.2e}, forbidden {forbidden:.2e}"))
}

// ---------------------------------------------------------------------- hybrid

fn hybrid_cloud(k: f64) -> DipoleScene {
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let base = 6.0 * std::f64::consts::PI / k.powi(3);
    let mut pos = vec![];
    while pos.len() < 8 {
        let p: [f64; 3] = std::array::from_fn(|_| 2.4 * rng.random::<f64>() - 1.2);
        let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        let far = pos.iter().all(|q: &[f64; 3]| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt() > 0.35);
        if (0.75..1.2).contains(&r) && far {
            pos.push(p);
        }
    }
    let pols = (0..8).map(|i| isotropic(base * (0.15 + 0.05 * i as f64))).collect();
    let regions = (0..8).map(|i| if i % 2 == 0 { Region::Controllable } else { Region::Background }).collect();
    DipoleScene::new(pos, pols, regions).unwrap()
}

fn criterion_8() -> Outcome {
    let k = 1.5;
    let sphere = |eps: f64| SphereSpec { radius: 0.45, material: Material::Dielectric { eps_r: eps, mu_r: 1.0 } };
    let s = HybridScene::new(hybrid_cloud(k), sphere(4.0)).unwrap();
    let a = hybrid_impedance_modes(&s, k).unwrap();
    let b = hybrid_scattering_modes(&s, k).unwrap();
    let sig = |m: &ModeSet| m.eigen.iter().map(|e| c64::new(e.modal_significance(), 0.0)).collect::<Vec<_>>();
    let paths = matched_distance(&sig(&a), &sig(&b));

    let v = HybridScene::new(hybrid_cloud(k), sphere(1.0)).unwrap();
    let hv = hybrid_impedance_modes(&v, k).unwrap();
    let plain = cm_impedance_substructure(&assemble_impedance_with_basis(&v.mom, k, &v.basis(k).unwrap()).unwrap()).unwrap();
    let vacuum = matched_distance(&hv.t_values(), &plain.t_values());

    let empty = DipoleScene::new(vec![], vec![], vec![]).unwrap();
    let so = HybridScene::new(empty, sphere(4.0)).unwrap();
    let (blocks, _) = hybrid_blocks(&so, k, U4Method::Quadrature).unwrap();
    let t = blocks.t_matrix().unwrap();
    let mie = mie_tmatrix(&so.sphere, k, &so.basis(k).unwrap()).unwrap();
    let sphere_only = linalg::fro((&t - &mie.data).as_ref()) / linalg::fro(mie.data.as_ref());

    let pass = paths < 1e-5 && vacuum < 1e-10 && sphere_only < 1e-8;
    outcome(pass, format!("paths {paths:.2e}, vacuum sphere {vacuum:.2e}, sphere only {sphere_only:.2e}"))
}

// ----------------------------------------------------------------------- ports

fn criterion_9() -> Outcome {
    let k = 1.0;
    let half = 3;
    let scene = twin_strips(half, 0.35, 0.6, k).unwrap();
    let plain_blocks = assemble_impedance(&scene, k).unwrap();
    let tr = plain_blocks.transition().unwrap();
    let mut plain = cm_scattering(&tr.s, &tr.s_b).unwrap();
    attach_currents(&mut plain, &plain_blocks, 0.0).unwrap();

    let centre = twin_strip_centre(half);
    let ported = scene.clone().with_ports(vec![port_at(centre, 0, 50.0, 0.05)]).unwrap();
    let g = generalized_scattering(&ported, k).unwrap();
    let unitary = check_unitary(&g.s, 1.0).unwrap().deviation;
    let with_ports = cm_scattering(&g.s, &g.s_b).unwrap();

    let dof = plain_blocks.stacked_dof(centre, 0).unwrap();
    let currents = plain.currents.as_ref().unwrap();
    let sc = scale(&plain);
    let (mut checked, mut worst) = (0usize, 0.0f64);
    for n in 0..plain.len() {
        let col = linalg::column(currents.as_ref(), n);
        let norm = linalg::vec_norm(&col);
        if plain.eigen[n].t.norm() < 1e-6 * sc || col[dof].norm() > 1e-10 * norm {
            continue;
        }
        checked += 1;
        let t = plain.eigen[n].t;
        let best = with_ports.eigen.iter().map(|e| (e.t - t).norm()).fold(f64::INFINITY, f64::min);
        worst = worst.max(best);
    }
    let pass = unitary < 1e-8 && checked > 0 && worst < 1e-8;
    outcome(pass, format!("unitarity {unitary:.2e}, {checked} port-free modes, max |dt| {worst:.2e}"))
}

// ---------------------------------------------------------------- determinism

fn criterion_10() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let tmp = tempfile::tempdir().unwrap();
    let mut names: Vec<_> = std::fs::read_dir(&dir).unwrap().filter_map(|e| e.ok()).map(|e| e.path()).collect();
    names.retain(|p| p.extension().is_some_and(|e| e == "json"));
    names.sort();
    let mut mismatches = vec![];
    for p in &names {
        let stem = p.file_stem().unwrap().to_string_lossy().to_string();
        let mut outs = vec![];
        for (r, jobs) in [(0, Some(1)), (1, None)] {
            let out = tmp.path().join(format!("{stem}-{r}"));
            let args = subcm_cli::RunArgs { scenario: p.clone(), out: Some(out.clone()), jobs, seed: 42, dump_vectors: true };
            subcm_cli::run(&args).unwrap();
            outs.push(out);
        }
        for f in ["modes.csv", "diagnostics.json", "vectors.json"] {
            if std::fs::read(outs[0].join(f)).unwrap() != std::fs::read(outs[1].join(f)).unwrap() {
                mismatches.push(format!("{stem}/{f}"));
            }
        }
    }
    let pass = !names.is_empty() && mismatches.is_empty();
    outcome(pass, format!("{} scenarios, mismatches: {mismatches:?}", names.len()))
}

fn main() {
    let timed = |name: &str, limit: Option<Duration>, f: &dyn Fn() -> Outcome| -> bool {
        let start = Instant::now();
        let o = f();
        let el = start.elapsed();
        let in_time = limit.is_none_or(|l| el <= l);
        let ok = o.pass && in_time;
        let budget = limit.map_or(String::new(), |l| format!(" / {}s", l.as_secs()));
        println!("{} {name}: {} [{:.2}s{budget}]", if ok { "PASS" } else { "FAIL" }, o.detail, el.as_secs_f64());
        ok
    };
    let suite = suite();
    let results = [
        timed("1 mie oracle", Some(Duration::from_secs(1)), &criterion_1),
        timed("2 lossless invariants", Some(Duration::from_secs(30)), &criterion_2),
        timed("3 equivalence", None, &|| criterion_3(&suite)),
        timed("4 current recovery", None, &|| criterion_4(&suite)),
        timed("5 power identity", None, &|| criterion_5(&suite)),
        timed("6 iterative", Some(Duration::from_secs(60)), &|| criterion_6(&suite)),
        timed("7 ground plane", None, &criterion_7),
        timed("8 hybrid", Some(Duration::from_secs(120)), &criterion_8),
        timed("9 ports", None, &criterion_9),
        timed("10 determinism", None, &criterion_10),
    ];
    let passed = results.iter().filter(|r| **r).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
