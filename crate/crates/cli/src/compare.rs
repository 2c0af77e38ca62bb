//! Per-frequency optimal matching of two mode CSV files.

use std::path::Path;

use subcm::modes::hungarian;

use crate::output::CSV_HEADER;
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub frequency: f64,
    pub rank: usize,
    pub t: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct Report {
    pub max_deviation: f64,
    pub mean_deviation: f64,
    /// `(frequency, mode rank in the first file, deviation)` of the worst match.
    pub worst: Option<(f64, usize, f64)>,
    /// Every matched pair above the tolerance.
    pub violations: Vec<(f64, usize, f64)>,
    pub pass: bool,
}

pub fn parse_csv(text: &str, name: &str) -> Result<Vec<Row>, CliError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        _ => return Err(CliError::Input(format!("{name}: missing or unexpected CSV header"))),
    }
    let mut rows = vec![];
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        let err = |what: &str| CliError::Input(format!("{name}:{}: bad {what}", i + 2));
        if cols.len() != 10 {
            return Err(err("column count"));
        }
        let f = |j: usize, what: &str| cols[j].trim().parse::<f64>().map_err(|_| err(what));
        rows.push(Row {
            frequency: f(0, "frequency_hz")?,
            rank: cols[2].trim().parse().map_err(|_| err("mode_rank"))?,
            t: (f(3, "re_t")?, f(4, "im_t")?),
        });
    }
    Ok(rows)
}

fn read(path: &Path) -> Result<Vec<Row>, CliError> {
    let file = if path.is_dir() { path.join("modes.csv") } else { path.to_path_buf() };
    let text = std::fs::read_to_string(&file).map_err(|e| CliError::Input(format!("cannot read {}: {e}", file.display())))?;
    parse_csv(&text, &file.display().to_string())
}

fn group(rows: &[Row]) -> Vec<(f64, Vec<&Row>)> {
    let mut out: Vec<(f64, Vec<&Row>)> = vec![];
    for r in rows {
        match out.last_mut() {
            Some((f, v)) if *f == r.frequency => v.push(r),
            _ => out.push((r.frequency, vec![r])),
        }
    }
    out
}

/// Compare per frequency; with `top`, only ranks `1..=top` of each file.
pub fn compare_rows(a: &[Row], b: &[Row], tol: f64, top: Option<usize>) -> Result<Report, CliError> {
    let keep = |rows: &[Row]| -> Vec<Row> { rows.iter().filter(|r| top.is_none_or(|n| r.rank <= n)).cloned().collect() };
    let (a, b) = (keep(a), keep(b));
    let (ga, gb) = (group(&a), group(&b));
    let fa: Vec<f64> = ga.iter().map(|g| g.0).collect();
    let fb: Vec<f64> = gb.iter().map(|g| g.0).collect();
    if fa.len() != fb.len() || fa.iter().zip(&fb).any(|(x, y)| (x - y).abs() > 1e-9 * x.abs().max(y.abs())) {
        return Err(CliError::Shape(format!(
            "frequency grids differ ({} vs {} points)",
            fa.len(),
            fb.len()
        )));
    }
    let mut devs: Vec<(f64, usize, f64)> = vec![];
    for ((f, ra), (_, rb)) in ga.iter().zip(&gb) {
        let n = ra.len().max(rb.len());
        let t = |rows: &[&Row], i: usize| rows.get(i).map_or((0.0, 0.0), |r| r.t);
        let cost: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let x = t(ra, i);
                (0..n).map(|j| {
                    let y = t(rb, j);
                    (x.0 - y.0).hypot(x.1 - y.1)
                })
                .collect()
            })
            .collect();
        let assign = hungarian(&cost);
        for (i, &j) in assign.iter().enumerate() {
            let rank = ra.get(i).map_or(i + 1, |r| r.rank);
            devs.push((*f, rank, cost[i][j]));
        }
    }
    let max = devs.iter().map(|d| d.2).fold(0.0, f64::max);
    let mean = if devs.is_empty() { 0.0 } else { devs.iter().map(|d| d.2).sum::<f64>() / devs.len() as f64 };
    let worst = devs.iter().copied().reduce(|x, y| if y.2 > x.2 { y } else { x });
    let violations: Vec<_> = devs.into_iter().filter(|d| d.2 > tol).collect();
    Ok(Report { max_deviation: max, mean_deviation: mean, worst, pass: violations.is_empty(), violations })
}

pub fn compare_files(a: &Path, b: &Path, tol: f64, top: Option<usize>) -> Result<Report, CliError> {
    compare_rows(&read(a)?, &read(b)?, tol, top)
}

pub fn render(r: &Report, tol: f64) -> String {
    let mut s = format!("max |dt| = {:e}\nmean |dt| = {:e}\ntolerance = {tol:e}\n", r.max_deviation, r.mean_deviation);
    for (f, rank, d) in &r.violations {
        s.push_str(&format!("  exceeds tolerance: frequency_hz={f:e} mode_rank={rank} |dt|={d:e}\n"));
    }
    s.push_str(if r.pass { "PASS\n" } else { "FAIL\n" });
    s
}
