use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ColumnAxis, ExperimentKind, ExperimentSpec};
use super::global::{run_global_case, GlobalCase};
use super::seeds::sub_seed;
use super::single::{run_patch_case, PatchCase};
use crate::error::{Error, Result};
use crate::fem::CounterSnapshot;

/// Outcome of one sweep point over all realizations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub column: f64,
    /// Iteration count per realization; `None` marks non-convergence.
    pub counts: Vec<Option<usize>>,
    /// Degenerate distortion draws that were redrawn.
    pub resamples: usize,
    /// Operator applications summed over realizations (single patch only).
    pub counters: CounterSnapshot,
}

impl CellResult {
    /// Mean over converged realizations.
    pub fn mean(&self) -> Option<f64> {
        let ok: Vec<usize> = self.counts.iter().flatten().copied().collect();
        (!ok.is_empty()).then(|| ok.iter().sum::<usize>() as f64 / ok.len() as f64)
    }

    pub fn nc(&self) -> bool {
        self.counts.iter().any(Option::is_none)
    }

    pub fn nc_fraction(&self) -> f64 {
        if self.counts.is_empty() {
            return 0.0;
        }
        self.counts.iter().filter(|c| c.is_none()).count() as f64 / self.counts.len() as f64
    }

    /// The value written to a report: `None` (printed "NC") when any
    /// realization failed, else the mean rounded to one decimal.
    pub fn reported_mean(&self) -> Option<f64> {
        if self.nc() {
            None
        } else {
            self.mean().map(|m| (m * 10.0).round() / 10.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub series: String,
    pub p: usize,
    /// Value of the sweep parameter not laid out across columns.
    pub row_value: f64,
    pub cells: Vec<CellResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub id: String,
    pub kind: ExperimentKind,
    pub seed: u64,
    pub config_hash: String,
    pub realizations: usize,
    pub column_axis: ColumnAxis,
    pub columns: Vec<f64>,
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, Copy)]
struct Point {
    series: usize,
    p: usize,
    row: usize,
    col: usize,
}

fn points(spec: &ExperimentSpec) -> Vec<Point> {
    let mut out = Vec::new();
    for series in 0..spec.series.len() {
        for &p in &spec.p {
            for row in 0..spec.row_values().len() {
                for col in 0..spec.column_values().len() {
                    out.push(Point { series, p, row, col });
                }
            }
        }
    }
    out
}

fn delta_mu(spec: &ExperimentSpec, pt: &Point) -> (f64, f64) {
    let (r, c) = (spec.row_values()[pt.row], spec.column_values()[pt.col]);
    match spec.columns {
        ColumnAxis::Delta => (c, r),
        ColumnAxis::Mu => (r, c),
    }
}

/// Seed of realization `i`; it depends on the base seed, the experiment id
/// and `i` only, so every sweep point sees the same meshes.
pub fn realization_seed(spec: &ExperimentSpec, i: usize) -> u64 {
    sub_seed(spec.seed, &spec.id, i as u64)
}

fn assemble_report(spec: &ExperimentSpec, pts: &[Point], results: Vec<CellResult>) -> RunReport {
    let ncol = spec.column_values().len();
    let rows = pts
        .chunks(ncol)
        .zip(results.chunks(ncol))
        .map(|(pc, rc)| ReportRow {
            series: spec.series[pc[0].series].name.clone(),
            p: pc[0].p,
            row_value: spec.row_values()[pc[0].row],
            cells: rc.to_vec(),
        })
        .collect();
    RunReport {
        id: spec.id.clone(),
        kind: spec.kind,
        seed: spec.seed,
        config_hash: spec.config_hash(),
        realizations: spec.realizations,
        column_axis: spec.columns,
        columns: spec.column_values().to_vec(),
        rows,
    }
}

/// Runs every (series, p, δ, μ, realization) of a single-patch sweep.
pub fn run_single_patch(spec: &ExperimentSpec) -> Result<RunReport> {
    spec.validate()?;
    if spec.kind != ExperimentKind::SinglePatch {
        return Err(Error::Config("run_single_patch needs kind = \"single_patch\"".into()));
    }
    let pts = points(spec);
    let jobs: Vec<(usize, usize)> = (0..pts.len()).flat_map(|k| (0..spec.realizations).map(move |i| (k, i))).collect();
    let runs = jobs
        .par_iter()
        .map(|&(k, i)| {
            let pt = &pts[k];
            let (delta, mu) = delta_mu(spec, pt);
            let case = PatchCase {
                dim: spec.dim,
                p: pt.p,
                patch_type: spec.patch_type,
                delta,
                mu,
                rho: spec.rho,
                pressure_space: spec.pressure_space,
            };
            run_patch_case(&case, &spec.series[pt.series].local, realization_seed(spec, i), spec.tol, spec.max_it)
        })
        .collect::<Result<Vec<_>>>()?;
    let results = runs
        .chunks(spec.realizations)
        .zip(&pts)
        .map(|(rs, pt)| {
            let mut cell =
                CellResult { column: spec.column_values()[pt.col], counts: Vec::new(), resamples: 0, counters: CounterSnapshot::default() };
            for r in rs {
                cell.counts.push(r.stats.converged.then_some(r.stats.iterations));
                cell.resamples += r.resamples;
                cell.counters += r.counters;
            }
            cell
        })
        .collect();
    Ok(assemble_report(spec, &pts, results))
}

/// Runs a global multigrid sweep. Sweep points run one after another since
/// each preconditioner setup is already parallel and memory-heavy.
pub fn run_global(spec: &ExperimentSpec) -> Result<RunReport> {
    spec.validate()?;
    if spec.kind != ExperimentKind::GlobalMg {
        return Err(Error::Config("run_global needs kind = \"global_mg\"".into()));
    }
    let pts = points(spec);
    let mut results = Vec::with_capacity(pts.len());
    for pt in &pts {
        let (delta, mu) = delta_mu(spec, pt);
        let case = GlobalCase { p: pt.p, delta, mu, levels: spec.levels, rho: spec.rho, pressure_space: spec.pressure_space };
        let cfg = spec.series[pt.series].gmg_config();
        let mut cell =
            CellResult { column: spec.column_values()[pt.col], counts: Vec::new(), resamples: 0, counters: CounterSnapshot::default() };
        for i in 0..spec.realizations {
            let run = run_global_case(&case, &cfg, realization_seed(spec, i), spec.tol, spec.max_it)?;
            cell.counts.push((!run.run.nc).then_some(run.run.stats.iterations));
            cell.resamples += run.resamples;
        }
        results.push(cell);
    }
    Ok(assemble_report(spec, &pts, results))
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunReport> {
    match spec.kind {
        ExperimentKind::SinglePatch => run_single_patch(spec),
        ExperimentKind::GlobalMg => run_global(spec),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::Config(format!("unknown report format {other:?}"))),
        }
    }
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "md",
        }
    }
}

pub const NC: &str = "NC";

fn header_lines(r: &RunReport) -> String {
    let kind = match r.kind {
        ExperimentKind::SinglePatch => "single_patch",
        ExperimentKind::GlobalMg => "global_mg",
    };
    let mut s = String::new();
    let _ = writeln!(s, "# experiment: {}", r.id);
    let _ = writeln!(s, "# kind: {kind}");
    let _ = writeln!(s, "# seed: {}", r.seed);
    let _ = writeln!(s, "# config_hash: {}", r.config_hash);
    let _ = writeln!(s, "# realizations: {}", r.realizations);
    let _ = writeln!(
        s,
        "# means: arithmetic mean over converged realizations, one decimal; NC when any realization did not converge; nc_frac gives the failed share"
    );
    s
}

fn column_names(r: &RunReport) -> Vec<String> {
    let axis = r.column_axis.name();
    let mut names = vec!["series".to_string(), "p".to_string(), r.column_axis.other().name().to_string()];
    names.extend(r.columns.iter().map(|c| format!("{axis}={c}")));
    names.extend(r.columns.iter().map(|c| format!("nc_frac:{axis}={c}")));
    names
}

fn row_fields(row: &ReportRow) -> Vec<String> {
    let mut f = vec![row.series.clone(), row.p.to_string(), row.row_value.to_string()];
    f.extend(row.cells.iter().map(|c| c.reported_mean().map_or_else(|| NC.to_string(), |m| format!("{m:.1}"))));
    f.extend(row.cells.iter().map(|c| format!("{:.2}", c.nc_fraction())));
    f
}

/// Renders a report; the output is a pure function of the report.
pub fn render_report(r: &RunReport, format: ReportFormat) -> String {
    let mut out = header_lines(r);
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(column_names(r)).expect("writing to memory");
            for row in &r.rows {
                w.write_record(row_fields(row)).expect("writing to memory");
            }
            out.push_str(&String::from_utf8(w.into_inner().expect("writing to memory")).expect("utf-8 fields"));
        }
        ReportFormat::Markdown => {
            let names = column_names(r);
            out.push('\n');
            let _ = writeln!(out, "| {} |", names.join(" | "));
            let _ = writeln!(out, "|{}", "---|".repeat(names.len()));
            for row in &r.rows {
                let _ = writeln!(out, "| {} |", row_fields(row).join(" | "));
            }
        }
    }
    out
}

/// Writes the report to `path`.
pub fn emit_report(r: &RunReport, format: ReportFormat, path: &Path) -> Result<()> {
    std::fs::write(path, render_report(r, format))?;
    Ok(())
}

/// One data row read back from a CSV report.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedRow {
    pub series: String,
    pub p: usize,
    pub row_value: f64,
    pub means: Vec<Option<f64>>,
    pub nc_fraction: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedReport {
    /// `key: value` pairs of the '#' header lines.
    pub header: Vec<(String, String)>,
    pub columns: Vec<f64>,
    pub rows: Vec<ParsedRow>,
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Report(format!("not a number: {s:?}")))
}

/// Parses a CSV report written by [`render_report`].
pub fn parse_csv_report(text: &str) -> Result<ParsedReport> {
    let header = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .filter_map(|l| l.trim_start_matches('#').split_once(':'))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect();
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let names = rd.headers().map_err(|e| Error::Report(e.to_string()))?.clone();
    if names.len() < 3 || (names.len() - 3) % 2 != 0 {
        return Err(Error::Report(format!("unexpected column count {}", names.len())));
    }
    let n = (names.len() - 3) / 2;
    let columns = names
        .iter()
        .skip(3)
        .take(n)
        .map(|c| c.split_once('=').ok_or_else(|| Error::Report(format!("bad column {c:?}"))).and_then(|(_, v)| parse_f64(v)))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| Error::Report(e.to_string()))?;
        let p = rec[1].parse().map_err(|_| Error::Report(format!("bad degree {:?}", &rec[1])))?;
        let means = (3..3 + n).map(|k| if &rec[k] == NC { Ok(None) } else { parse_f64(&rec[k]).map(Some) }).collect::<Result<_>>()?;
        let nc_fraction = (3 + n..3 + 2 * n).map(|k| parse_f64(&rec[k])).collect::<Result<_>>()?;
        rows.push(ParsedRow { series: rec[0].to_string(), p, row_value: parse_f64(&rec[2])?, means, nc_fraction });
    }
    Ok(ParsedReport { header, columns, rows })
}
