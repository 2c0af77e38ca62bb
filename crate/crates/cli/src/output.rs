//! CSV traces, JSON diagnostics and optional eigenvector dumps.

use serde::Serialize;
use subcm::modes::ModeFlags;
use subcm::solver::{Diagnostics, SweepOutcome};

pub const CSV_HEADER: &str =
    "frequency_hz,trace_id,mode_rank,re_t,im_t,modal_significance,lambda,circle_dev,orth_dev,cancel_flag";

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// One row per mode, frequencies ascending and modes by rank.
pub fn modes_csv(out: &SweepOutcome) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    let sw = &out.sweep;
    for (i, ms) in sw.modesets.iter().enumerate() {
        let orth = ms.orthonormality_per_mode();
        for (n, e) in ms.eigen.iter().enumerate() {
            // characteristic numbers of lossless modes are real
            let lambda = e.lambda.map_or(f64::INFINITY, |l| l.re);
            let row = [
                num(ms.frequency),
                sw.trace_of[i][n].to_string(),
                (n + 1).to_string(),
                num(e.t.re),
                num(e.t.im),
                num(e.modal_significance()),
                num(lambda),
                num(e.circle_excess()),
                num(orth[n]),
                u8::from(ms.cancellation[n]).to_string(),
            ];
            s.push_str(&row.join(","));
            s.push('\n');
        }
    }
    s
}

#[derive(Debug, Serialize)]
pub struct FlagsOut {
    pub non_unitary_background: bool,
    pub indefinite_radiation: bool,
}

impl From<ModeFlags> for FlagsOut {
    fn from(f: ModeFlags) -> Self {
        Self { non_unitary_background: f.non_unitary_background, indefinite_radiation: f.indefinite_radiation }
    }
}

#[derive(Debug, Serialize)]
pub struct FrequencyDiagnostics {
    pub frequency_hz: f64,
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
    pub n_modes: usize,
    pub cancellation_sensitive: usize,
    pub flags: FlagsOut,
}

#[derive(Debug, Serialize)]
pub struct DiagnosticsFile {
    pub version: u32,
    pub solver: String,
    pub seed: u64,
    pub n_frequencies: usize,
    pub n_traces: usize,
    pub worst: Worst,
    pub frequencies: Vec<FrequencyDiagnostics>,
}

/// Largest residual of each kind over the sweep.
#[derive(Debug, Default, Serialize)]
pub struct Worst {
    pub unitarity_s: Option<f64>,
    pub unitarity_s_b: Option<f64>,
    pub t_power: Option<f64>,
    pub power_identity: Option<f64>,
    pub factorization: Option<f64>,
    pub equivalence: Option<f64>,
    pub circle_excess: f64,
    pub orthonormality: f64,
}

fn fold(acc: Option<f64>, v: Option<f64>) -> Option<f64> {
    match (acc, v) {
        (Some(a), Some(b)) => Some(a.max(b)),
        (a, b) => a.or(b),
    }
}

pub fn worst(diags: &[Diagnostics]) -> Worst {
    diags.iter().fold(Worst::default(), |w, d| Worst {
        unitarity_s: fold(w.unitarity_s, d.unitarity_s),
        unitarity_s_b: fold(w.unitarity_s_b, d.unitarity_s_b),
        t_power: fold(w.t_power, d.t_power),
        power_identity: fold(w.power_identity, d.power_identity),
        factorization: fold(w.factorization, d.factorization),
        equivalence: fold(w.equivalence, d.equivalence),
        circle_excess: w.circle_excess.max(d.max_circle_excess),
        orthonormality: w.orthonormality.max(d.max_orthonormality),
    })
}

pub fn diagnostics(out: &SweepOutcome, solver: &str, seed: u64) -> DiagnosticsFile {
    let frequencies = out
        .diagnostics
        .iter()
        .zip(&out.sweep.modesets)
        .map(|(d, ms)| FrequencyDiagnostics {
            frequency_hz: d.frequency,
            unitarity_s: d.unitarity_s,
            unitarity_s_b: d.unitarity_s_b,
            t_power: d.t_power,
            power_identity: d.power_identity,
            factorization: d.factorization,
            equivalence: d.equivalence,
            max_circle_excess: d.max_circle_excess,
            max_orthonormality: d.max_orthonormality,
            iterations: d.iterations,
            converged: d.converged,
            n_modes: ms.len(),
            cancellation_sensitive: ms.cancellation.iter().filter(|c| **c).count(),
            flags: d.flags.into(),
        })
        .collect();
    DiagnosticsFile {
        version: crate::scenario::FORMAT_VERSION,
        solver: solver.into(),
        seed,
        n_frequencies: out.diagnostics.len(),
        n_traces: out.sweep.n_traces,
        worst: worst(&out.diagnostics),
        frequencies,
    }
}

#[derive(Debug, Serialize)]
struct ModeVectors {
    rank: usize,
    trace_id: usize,
    t: [f64; 2],
    /// `[re, im]` pairs.
    a: Vec<[f64; 2]>,
    f: Vec<[f64; 2]>,
}

#[derive(Debug, Serialize)]
struct FrequencyVectors {
    frequency_hz: f64,
    modes: Vec<ModeVectors>,
}

pub fn vectors_json(out: &SweepOutcome) -> serde_json::Result<String> {
    let sw = &out.sweep;
    let data: Vec<FrequencyVectors> = sw
        .modesets
        .iter()
        .enumerate()
        .map(|(i, ms)| FrequencyVectors {
            frequency_hz: ms.frequency,
            modes: (0..ms.len())
                .map(|n| ModeVectors {
                    rank: n + 1,
                    trace_id: sw.trace_of[i][n],
                    t: [ms.eigen[n].t.re, ms.eigen[n].t.im],
                    a: (0..ms.dim()).map(|r| [ms.a[(r, n)].re, ms.a[(r, n)].im]).collect(),
                    f: (0..ms.dim()).map(|r| [ms.f[(r, n)].re, ms.f[(r, n)].im]).collect(),
                })
                .collect(),
        })
        .collect();
    serde_json::to_string_pretty(&data)
}
