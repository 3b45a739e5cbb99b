//! CSV tables and self-contained SVG plots of sweep results.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::equilibria::{write_branches_csv, Branch};
use crate::sweep::{SweepRow, SweepTable};

pub const CSV_HEADER: [&str; 8] = ["param", "tau", "tau_H", "tau_A", "dE", "E_c", "admissible", "verdicts"];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}")]
    Io { path: String, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}, column {column}: cannot parse {value:?}")]
    Parse { row: usize, column: &'static str, value: String },
    #[error("unexpected header {0:?}")]
    Header(Vec<String>),
    #[error("empty table")]
    Empty,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Verdict codes plus the closest-UEP position (`uep=δ1/δ2/...`), `;`-separated.
fn verdict_field(row: &SweepRow) -> String {
    let mut parts = row.verdicts.clone();
    if let Some(u) = &row.closest_uep {
        parts.push(format!("uep={}", u.iter().map(f64::to_string).collect::<Vec<_>>().join("/")));
    }
    parts.join(";")
}

pub fn write_csv<W: Write>(table: &SweepTable, w: W) -> Result<(), ReportError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in &table.rows {
        out.write_record([
            r.param.to_string(),
            opt(r.tau),
            opt(r.tau_h),
            opt(r.tau_a),
            opt(r.delta_e),
            opt(r.e_c),
            r.admissible.to_string(),
            verdict_field(r),
        ])?;
    }
    out.flush().map_err(|source| ReportError::Io { path: "<csv>".into(), source })?;
    Ok(())
}

/// Parses a table written by [`write_csv`]. The parameter label is not stored
/// in the file and is left empty.
pub fn read_csv<R: Read>(r: R) -> Result<SweepTable, ReportError> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(ReportError::Header(header));
    }
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let bad = |column: &'static str, value: &str| ReportError::Parse { row: i + 1, column, value: value.to_string() };
        let num = |k: usize| -> Result<Option<f64>, ReportError> {
            let s = &rec[k];
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(CSV_HEADER[k], s))
            }
        };
        let mut verdicts = Vec::new();
        let mut closest_uep = None;
        for part in rec[7].split(';').filter(|s| !s.is_empty()) {
            match part.strip_prefix("uep=") {
                Some(pos) => {
                    let v = pos.split('/').map(str::parse).collect::<Result<Vec<f64>, _>>().map_err(|_| bad("verdicts", part))?;
                    closest_uep = Some(v);
                }
                None => verdicts.push(part.to_string()),
            }
        }
        rows.push(SweepRow {
            param: num(0)?.ok_or_else(|| bad("param", ""))?,
            tau: num(1)?,
            tau_h: num(2)?,
            tau_a: num(3)?,
            delta_e: num(4)?,
            e_c: num(5)?,
            admissible: rec[6].parse().map_err(|_| bad("admissible", &rec[6]))?,
            closest_uep,
            verdicts,
        });
    }
    Ok(SweepTable { param: String::new(), rows })
}

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Self { lo: 0.0, hi: 1.0 };
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = 0.05 * (hi - lo);
        Self { lo: lo - pad, hi: hi + pad }
    }

    fn map(&self, v: f64, a: f64, b: f64) -> f64 {
        a + (v - self.lo) / (self.hi - self.lo) * (b - a)
    }

    fn ticks(&self) -> Vec<f64> {
        let raw = (self.hi - self.lo) / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
        let mut t = (self.lo / step).ceil() * step;
        let mut out = Vec::new();
        while t <= self.hi + 1e-12 {
            out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
            t += step;
        }
        out
    }
}

const W: f64 = 720.0;
const H: f64 = 440.0;
const L: f64 = 70.0;
const R: f64 = 650.0;
const T: f64 = 30.0;
const B: f64 = 380.0;

fn frame(svg: &mut String, x: &Axis, y: &Axis, xlabel: &str, ylabel: &str) {
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect x="{L}" y="{T}" width="{}" height="{}" fill="none" stroke="black"/>"#, R - L, B - T);
    for t in x.ticks() {
        let px = x.map(t, L, R);
        let _ = writeln!(svg, r#"<line x1="{px:.2}" y1="{B}" x2="{px:.2}" y2="{}" stroke="black"/><text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#, B + 5.0, B + 18.0, fmt_tick(t));
    }
    for t in y.ticks() {
        let py = y.map(t, B, T);
        let _ = writeln!(svg, r#"<line x1="{}" y1="{py:.2}" x2="{L}" y2="{py:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, L - 5.0, L - 8.0, py + 4.0, fmt_tick(t));
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (L + R) / 2.0, H - 20.0, escape(xlabel));
    let _ = writeln!(svg, r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#, (T + B) / 2.0, (T + B) / 2.0, escape(ylabel));
}

fn fmt_tick(t: f64) -> String {
    let s = format!("{t:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Polylines broken wherever a point is missing.
fn polyline(svg: &mut String, pts: &[Option<(f64, f64)>], style: &str) {
    for run in pts.split(|p| p.is_none()) {
        if run.is_empty() {
            continue;
        }
        let coords: Vec<String> = run.iter().flatten().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(svg, r#"<polyline fill="none" {style} points="{}"/>"#, coords.join(" "));
    }
}

/// Trend plot: the three clearing times on the left axis, ΔE on the right.
pub fn trend_svg(table: &SweepTable) -> String {
    let rows = &table.rows;
    let x = Axis::fit(rows.iter().map(|r| r.param));
    let times = rows.iter().filter(|r| r.admissible).flat_map(|r| [r.tau, r.tau_h, r.tau_a]).flatten();
    let y = Axis::fit(times);
    let ye = Axis::fit(rows.iter().filter_map(|r| r.delta_e));

    let mut svg = String::new();
    frame(&mut svg, &x, &y, &table.param, "clearing time (s)");
    type Series = (fn(&SweepRow) -> Option<f64>, &'static str, &'static str);
    let series: [Series; 3] = [
        (|r| r.tau, "tau", r#"stroke="black" stroke-width="2""#),
        (|r| r.tau_h, "tau_H", r##"stroke="#1f77b4" stroke-width="1.5""##),
        (|r| r.tau_a, "tau_A", r##"stroke="#d62728" stroke-width="1.5" stroke-dasharray="6 3""##),
    ];
    for (get, _, style) in &series {
        let pts: Vec<_> = rows
            .iter()
            .map(|r| get(r).filter(|v| r.admissible && v.is_finite()).map(|v| (x.map(r.param, L, R), y.map(v, B, T))))
            .collect();
        polyline(&mut svg, &pts, style);
    }
    let pts: Vec<_> = rows.iter().map(|r| r.delta_e.map(|v| (x.map(r.param, L, R), ye.map(v, B, T)))).collect();
    polyline(&mut svg, &pts, r##"stroke="#2ca02c" stroke-width="1.5" stroke-dasharray="2 2""##);
    for t in ye.ticks() {
        let py = ye.map(t, B, T);
        let _ = writeln!(svg, r#"<line x1="{R}" y1="{py:.2}" x2="{}" y2="{py:.2}" stroke="black"/><text x="{}" y="{:.2}">{}</text>"#, R + 5.0, R + 8.0, py + 4.0, fmt_tick(t));
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle" transform="rotate(90 {} {})">energy margin dE (p.u.)</text>"#, W - 12.0, (T + B) / 2.0, W - 12.0, (T + B) / 2.0);
    let legend = [("tau", "black"), ("tau_H", "#1f77b4"), ("tau_A", "#d62728"), ("dE (right axis)", "#2ca02c")];
    for (i, (name, color)) in legend.iter().enumerate() {
        let ly = T + 15.0 + 16.0 * i as f64;
        let _ = writeln!(svg, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{name}</text>"#, L + 10.0, L + 35.0, L + 40.0, ly + 4.0);
    }
    svg.push_str("</svg>\n");
    svg
}

/// Branch diagram: ‖δ‖ of every equilibrium branch against the parameter,
/// coloured by type (stable blue, type 1 red, higher types grey), with the
/// closest UEP of each admissible sweep row drawn as a thick line.
pub fn branch_svg(branches: &[Branch], table: Option<&SweepTable>, param: &str) -> String {
    let pts = branches.iter().flat_map(|b| b.points.iter());
    let x = Axis::fit(pts.clone().map(|p| p.param).chain(table.into_iter().flat_map(|t| t.rows.iter().map(|r| r.param))));
    let y = Axis::fit(pts.map(|p| p.norm));
    let mut svg = String::new();
    frame(&mut svg, &x, &y, param, "|x*|");
    for b in branches {
        for s in b.segments() {
            let color = match s.type_index {
                0 => "#1f77b4",
                1 => "#d62728",
                _ => "#7f7f7f",
            };
            let run: Vec<_> = b
                .points
                .iter()
                .filter(|p| p.param >= s.start && p.param <= s.end && p.point.type_index == s.type_index)
                .map(|p| Some((x.map(p.param, L, R), y.map(p.norm, B, T))))
                .collect();
            polyline(&mut svg, &run, &format!(r#"stroke="{color}" stroke-width="1.5""#));
        }
        for &f in &b.folds {
            if let Some(p) = b.points.iter().min_by(|a, c| (a.param - f).abs().total_cmp(&(c.param - f).abs())) {
                let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="none" stroke="black"/>"#, x.map(p.param, L, R), y.map(p.norm, B, T));
            }
        }
    }
    if let Some(t) = table {
        let pts: Vec<_> = t
            .rows
            .iter()
            .map(|r| {
                let u = r.closest_uep.as_ref().filter(|_| r.admissible)?;
                let n = u.iter().map(|d| d * d).sum::<f64>().sqrt();
                Some((x.map(r.param, L, R), y.map(n, B, T)))
            })
            .collect();
        polyline(&mut svg, &pts, r##"stroke="#d62728" stroke-width="5" stroke-opacity="0.6""##);
    }
    svg.push_str("</svg>\n");
    svg
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ReportError> {
    std::fs::write(path, bytes).map_err(|source| ReportError::Io { path: path.display().to_string(), source })
}

/// Writes `sweep.csv`, `trend.svg` and, when branches are given,
/// `branches.csv` and `branches.svg` into `dir`.
pub fn emit_reports(table: &SweepTable, branches: Option<&[Branch]>, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    if table.rows.is_empty() {
        return Err(ReportError::Empty);
    }
    std::fs::create_dir_all(dir).map_err(|source| ReportError::Io { path: dir.display().to_string(), source })?;
    let mut written = Vec::new();

    let mut csv_bytes = Vec::new();
    write_csv(table, &mut csv_bytes)?;
    let p = dir.join("sweep.csv");
    write_file(&p, &csv_bytes)?;
    written.push(p);

    let p = dir.join("trend.svg");
    write_file(&p, trend_svg(table).as_bytes())?;
    written.push(p);

    if let Some(branches) = branches {
        let mut bytes = Vec::new();
        write_branches_csv(branches, &mut bytes).map_err(|source| ReportError::Io { path: "branches.csv".into(), source })?;
        let p = dir.join("branches.csv");
        write_file(&p, &bytes)?;
        written.push(p);
        let p = dir.join("branches.svg");
        write_file(&p, branch_svg(branches, Some(table), &table.param).as_bytes())?;
        written.push(p);
    }
    Ok(written)
}
