//! Parameter sweeps, CSV persistence and plot emission.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{channel_inversion_traced, equal_offloading};
use crate::bcd::{run_bcd, IterationTrace, ACCEPT_TOL};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::model::{check_feasibility, energy, DecisionSet, EnergyBreakdown};
use crate::scenario::{build_scenario, stream_rng, Scenario, INIT_STREAM};

/// Optimization scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Joint block coordinate descent.
    Bcd,
    /// Round-robin schedule with equally split offloading.
    Equal,
    /// Channel-inversion AirComp scaling.
    Inversion,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Bcd, Method::Equal, Method::Inversion];

    pub fn name(self) -> &'static str {
        match self {
            Method::Bcd => "bcd",
            Method::Equal => "equal",
            Method::Inversion => "inversion",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown method `{s}` (expected bcd, equal or inversion)")))
    }
}

/// Parameters a sweep can vary. The names match the configuration keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweptParam {
    #[serde(rename = "mse_threshold_zeta")]
    MseThreshold,
    #[serde(rename = "p_max_edge")]
    PMaxEdge,
    /// Edge UE count with the total UE count held fixed.
    #[serde(rename = "num_edge_K")]
    NumEdge,
    #[serde(rename = "horizon_T")]
    Horizon,
    #[serde(rename = "data_demand_Dk")]
    DataDemand,
}

impl SweptParam {
    pub const ALL: [SweptParam; 5] = [
        SweptParam::MseThreshold,
        SweptParam::PMaxEdge,
        SweptParam::NumEdge,
        SweptParam::Horizon,
        SweptParam::DataDemand,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweptParam::MseThreshold => "mse_threshold_zeta",
            SweptParam::PMaxEdge => "p_max_edge",
            SweptParam::NumEdge => "num_edge_K",
            SweptParam::Horizon => "horizon_T",
            SweptParam::DataDemand => "data_demand_Dk",
        }
    }

    /// SI unit of the parameter, `-` for dimensionless.
    pub fn unit(self) -> &'static str {
        match self {
            SweptParam::MseThreshold | SweptParam::NumEdge => "-",
            SweptParam::PMaxEdge => "W",
            SweptParam::Horizon => "s",
            SweptParam::DataDemand => "bit",
        }
    }

    /// `base` with the parameter set to `value`.
    pub fn apply(self, base: &SystemConfig, value: f64) -> Result<SystemConfig> {
        let mut c = base.clone();
        match self {
            SweptParam::MseThreshold => c.mse_threshold = value,
            SweptParam::PMaxEdge => c.p_max_edge = value,
            SweptParam::Horizon => c.horizon = value,
            SweptParam::DataDemand => c.data_demand = value,
            SweptParam::NumEdge => {
                let total = base.num_aircomp + base.num_edge;
                if value.fract() != 0.0 || value < 1.0 || value > total as f64 {
                    return Err(Error::Config(format!(
                        "num_edge_K = {value} must be an integer in 1..={total} (J + K is held at {total})"
                    )));
                }
                c.num_edge = value as usize;
                c.num_aircomp = total - c.num_edge;
            }
        }
        c.validate()?;
        Ok(c)
    }
}

impl fmt::Display for SweptParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweptParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweptParam::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown swept parameter `{s}`")))
    }
}

fn default_true() -> bool {
    true
}

/// One sweep: every (method, value, seed) cell is an independent run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweptParam,
    pub values: Vec<f64>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    /// Record wall time per cell; off makes CSV output byte-reproducible.
    #[serde(default = "default_true")]
    pub record_timing: bool,
}

impl SweepSpec {
    pub fn validate(&self, base: &SystemConfig) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        let up = self.values.windows(2).all(|w| w[0] < w[1]);
        let down = self.values.windows(2).all(|w| w[0] > w[1]);
        if !(up || down) {
            return Err(Error::Config("sweep values must be strictly monotone".into()));
        }
        if self.methods.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("sweep needs at least one method and one seed".into()));
        }
        for &v in &self.values {
            self.parameter.apply(base, v)?;
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

/// Output of one method on one scenario.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub decisions: DecisionSet,
    pub energy: EnergyBreakdown,
    pub iterations: usize,
    pub trace: Option<IterationTrace>,
}

/// Run `method` on the scenario of `seed`. The scenario and the random
/// initial point both derive from the seed.
pub fn run_method(config: &SystemConfig, scenario: &Scenario, method: Method, seed: u64) -> Result<MethodRun> {
    let mut rng = stream_rng(seed, INIT_STREAM);
    let (decisions, trace) = match method {
        Method::Bcd => {
            let (d, t) = run_bcd(config, scenario, &mut rng)?;
            (d, Some(t))
        }
        Method::Equal => (equal_offloading(config, scenario, &mut rng)?.0, None),
        Method::Inversion => {
            let (d, t) = channel_inversion_traced(config, scenario)?;
            (d, Some(t))
        }
    };
    let report = check_feasibility(config, scenario, &decisions, ACCEPT_TOL)?;
    if !report.feasible {
        let (family, residual) = report.worst();
        return Err(Error::Infeasible {
            family,
            detail: format!("{method} returned a point with residual {residual:.3e}"),
        });
    }
    Ok(MethodRun {
        energy: energy(config, &decisions),
        iterations: trace.as_ref().map_or(1, IterationTrace::iterations),
        decisions,
        trace,
    })
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: Method,
    pub seed: u64,
    pub swept_param: SweptParam,
    pub swept_value: f64,
    #[serde(rename = "e_edge_tran_J")]
    pub e_edge_tran: Option<f64>,
    #[serde(rename = "e_aircomp_tran_J")]
    pub e_aircomp_tran: Option<f64>,
    #[serde(rename = "e_comp_J")]
    pub e_comp: Option<f64>,
    #[serde(rename = "e_total_J")]
    pub e_total: Option<f64>,
    pub feasible: bool,
    pub iterations: usize,
    pub wall_ms: f64,
}

/// Column names in file order.
pub const CSV_COLUMNS: [&str; 11] = [
    "method",
    "seed",
    "swept_param",
    "swept_value",
    "e_edge_tran_J",
    "e_aircomp_tran_J",
    "e_comp_J",
    "e_total_J",
    "feasible",
    "iterations",
    "wall_ms",
];

/// Rows ordered by (method, value, seed).
pub type ResultTable = Vec<ResultRow>;

/// Run every cell of the sweep on a pool of `jobs` workers. Cells that turn
/// out infeasible are recorded as such.
pub fn run_sweep(base: &SystemConfig, spec: &SweepSpec, jobs: usize) -> Result<ResultTable> {
    spec.validate(base)?;
    let mut methods = spec.methods.clone();
    methods.sort();
    methods.dedup();
    let mut cells = Vec::new();
    for &method in &methods {
        for &value in &spec.values {
            for &seed in &spec.seeds {
                cells.push((method, value, seed));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| cells.par_iter().map(|&(m, v, s)| run_cell(base, spec, m, v, s)).collect())
}

fn run_cell(base: &SystemConfig, spec: &SweepSpec, method: Method, value: f64, seed: u64) -> Result<ResultRow> {
    let config = spec.parameter.apply(base, value)?;
    let clock = Instant::now();
    let scenario = build_scenario(&config, seed)?;
    let outcome = match run_method(&config, &scenario, method, seed) {
        Ok(run) => Some(run),
        Err(Error::Infeasible { .. } | Error::DegenerateSlot { .. }) => None,
        Err(e) => return Err(e),
    };
    let wall_ms = if spec.record_timing {
        clock.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    };
    let e = outcome.as_ref().map(|r| r.energy);
    Ok(ResultRow {
        method,
        seed,
        swept_param: spec.parameter,
        swept_value: value,
        e_edge_tran: e.map(|e| e.e_edge_tran),
        e_aircomp_tran: e.map(|e| e.e_aircomp_tran),
        e_comp: e.map(|e| e.e_comp),
        e_total: e.map(|e| e.total),
        feasible: outcome.is_some(),
        iterations: outcome.map_or(0, |r| r.iterations),
        wall_ms,
    })
}

/// CSV text of a table; an empty table gives the header only.
pub fn csv_string(table: &[ResultRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for row in table {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn emit_csv(table: &[ResultRow], path: &Path) -> Result<()> {
    std::fs::write(path, csv_string(table)?)?;
    Ok(())
}

pub fn parse_csv(text: &str) -> Result<ResultTable> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_COLUMNS {
        return Err(Error::Parse(format!("unexpected CSV header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn load_csv(path: &Path) -> Result<ResultTable> {
    parse_csv(&std::fs::read_to_string(path)?)
}

/// Seed-averaged value of `column` per (method, swept value) over feasible
/// rows; `None` where no seed was feasible.
pub fn seed_means(
    table: &[ResultRow],
    method: Method,
    column: impl Fn(&ResultRow) -> Option<f64>,
) -> Vec<(f64, Option<f64>)> {
    let mut values: Vec<f64> = table.iter().filter(|r| r.method == method).map(|r| r.swept_value).collect();
    values.dedup();
    values
        .into_iter()
        .map(|v| {
            let xs: Vec<f64> = table
                .iter()
                .filter(|r| r.method == method && r.swept_value == v)
                .filter_map(&column)
                .collect();
            let mean = (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
            (v, mean)
        })
        .collect()
}

/// Energy column read by a plot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyColumn {
    EdgeTran,
    AircompTran,
    Comp,
    Total,
}

impl EnergyColumn {
    pub fn header(self) -> &'static str {
        match self {
            EnergyColumn::EdgeTran => "e_edge_tran_J",
            EnergyColumn::AircompTran => "e_aircomp_tran_J",
            EnergyColumn::Comp => "e_comp_J",
            EnergyColumn::Total => "e_total_J",
        }
    }

    pub fn get(self, row: &ResultRow) -> Option<f64> {
        match self {
            EnergyColumn::EdgeTran => row.e_edge_tran,
            EnergyColumn::AircompTran => row.e_aircomp_tran,
            EnergyColumn::Comp => row.e_comp,
            EnergyColumn::Total => row.e_total,
        }
    }

    /// Axis label with the unit taken from the `_J` suffix.
    pub fn label(self) -> String {
        let h = self.header();
        format!("{} [J]", h.trim_end_matches("_J"))
    }
}

/// Figure kinds; each plots one swept parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlotKind(pub SweptParam);

impl PlotKind {
    pub fn columns(self) -> &'static [EnergyColumn] {
        match self.0 {
            SweptParam::NumEdge => &[EnergyColumn::EdgeTran, EnergyColumn::Comp],
            _ => &[EnergyColumn::Total],
        }
    }

    pub fn file_stem(self) -> String {
        format!("energy_vs_{}", self.0.name())
    }
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.parse::<SweptParam>()
            .map(PlotKind)
            .map_err(|_| Error::Usage(format!("unknown plot kind `{s}`")))
    }
}

/// Files written by [`emit_plot`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlotFiles {
    pub svg: PathBuf,
    pub script: PathBuf,
}

/// Write an SVG of the sweep in `table` plus a matplotlib script that
/// regenerates it from `csv_name` (a path relative to `out_dir`).
pub fn emit_plot(table: &[ResultRow], kind: &str, out_dir: &Path, csv_name: &str) -> Result<PlotFiles> {
    let kind: PlotKind = kind.parse()?;
    let rows: Vec<ResultRow> = table.iter().filter(|r| r.swept_param == kind.0).cloned().collect();
    if rows.is_empty() {
        return Err(Error::Usage(format!("no rows for plot kind `{}`", kind.0)));
    }
    std::fs::create_dir_all(out_dir)?;
    let stem = kind.file_stem();
    let svg = out_dir.join(format!("{stem}.svg"));
    let script = out_dir.join(format!("{stem}.py"));
    std::fs::write(&svg, render_svg(&rows, kind))?;
    std::fs::write(&script, plot_script(kind, csv_name))?;
    Ok(PlotFiles { svg, script })
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// One series: mean line plus per-seed points.
struct Series {
    name: String,
    means: Vec<(f64, f64)>,
    points: Vec<(f64, f64)>,
}

fn collect_series(rows: &[ResultRow], kind: PlotKind) -> Vec<Series> {
    let mut methods: Vec<Method> = rows.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();
    let mut out = Vec::new();
    for &column in kind.columns() {
        for &m in &methods {
            let means = seed_means(rows, m, |r| column.get(r))
                .into_iter()
            .filter_map(|(x, y)| y.map(|y| (x, y)))
            .collect();
            let points = rows
                .iter()
                .filter(|r| r.method == m)
                .filter_map(|r| column.get(r).map(|y| (r.swept_value, y)))
                .collect();
            let name = if kind.columns().len() > 1 {
                format!("{m} {}", column.header().trim_end_matches("_J"))
            } else {
                m.to_string()
            };
            out.push(Series { name, means, points });
        }
    }
    out
}

fn render_svg(rows: &[ResultRow], kind: PlotKind) -> String {
    let series = collect_series(rows, kind);
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (80.0, 170.0, 30.0, 60.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let xs: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    let ys: Vec<f64> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .filter(|y| *y > 0.0)
        .collect();
    let (x0, x1) = bounds(&xs);
    let (y0, y1) = bounds(&ys);
    let log_y = y0 > 0.0 && y1 / y0 > 100.0;
    let ty = |y: f64| if log_y { y.max(y0).log10() } else { y };
    let (ly0, ly1) = if log_y { (y0.log10(), y1.log10()) } else { (y0.min(0.0), y1) };
    let span = |a: f64, b: f64| if b > a { b - a } else { 1.0 };
    let px = |x: f64| left + (x - x0) / span(x0, x1) * pw;
    let py = |y: f64| top + ph - (ty(y) - ly0) / span(ly0, ly1) * ph;

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    s.push_str(&format!("<rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"));
    s.push_str(&format!(
        "<rect x=\"{left}\" y=\"{top}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"black\"/>\n"
    ));
    for t in 0..5 {
        let f = t as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let x = left + f * pw;
        s.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\n<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n",
            top + ph,
            top + ph + 5.0,
            top + ph + 18.0,
            tick(xv)
        ));
        let lv = ly0 + f * (ly1 - ly0);
        let yv = if log_y { 10f64.powf(lv) } else { lv };
        let y = top + ph - f * ph;
        s.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{left}\" y2=\"{y:.2}\" stroke=\"black\"/>\n<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>\n",
            left - 5.0,
            left - 8.0,
            y + 4.0,
            tick(yv)
        ));
    }
    s.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{} [{}]</text>\n",
        left + pw / 2.0,
        h - 15.0,
        kind.0.name(),
        kind.0.unit()
    ));
    let ylabel = if kind.columns().len() == 1 {
        kind.columns()[0].label()
    } else {
        "energy [J]".to_string()
    };
    s.push_str(&format!(
        "<text x=\"18\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.2})\">{ylabel}{}</text>\n",
        top + ph / 2.0,
        top + ph / 2.0,
        if log_y { " (log scale)" } else { "" }
    ));
    for (n, ser) in series.iter().enumerate() {
        let color = PALETTE[n % PALETTE.len()];
        s.push_str(&format!("<g class=\"series\" data-name=\"{}\">\n", ser.name));
        for &(x, y) in &ser.points {
            if log_y && y <= 0.0 {
                continue;
            }
            s.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"{color}\" fill-opacity=\"0.35\"/>\n",
                px(x),
                py(y)
            ));
        }
        let path: Vec<String> = ser
            .means
            .iter()
            .filter(|(_, y)| !log_y || *y > 0.0)
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        s.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n</g>\n",
            path.join(" ")
        ));
        let ly = top + 12.0 + 18.0 * n as f64;
        s.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{color}\" stroke-width=\"2\"/>\n<text x=\"{:.2}\" y=\"{:.2}\">{}</text>\n",
            left + pw + 10.0,
            left + pw + 30.0,
            left + pw + 35.0,
            ly + 4.0,
            ser.name
        ));
    }
    s.push_str("</svg>\n");
    s
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn plot_script(kind: PlotKind, csv_name: &str) -> String {
    let columns: Vec<String> = kind.columns().iter().map(|c| format!("\"{}\"", c.header())).collect();
    let ylabel = if kind.columns().len() == 1 {
        kind.columns()[0].label()
    } else {
        "energy [J]".to_string()
    };
    format!(
        r#"#!/usr/bin/env python3
"""Regenerate {stem}.svg from {csv}."""
import csv
import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))
PARAM = "{param}"
COLUMNS = [{columns}]

rows = []
with open(os.path.join(HERE, "{csv}"), newline="") as f:
    for row in csv.DictReader(f):
        if row["swept_param"] == PARAM:
            rows.append(row)

fig, ax = plt.subplots(figsize=(6.4, 4.2))
for column in COLUMNS:
    for method in sorted({{r["method"] for r in rows}}):
        xs, ys = [], []
        by_value = defaultdict(list)
        for r in rows:
            if r["method"] == method and r[column] != "":
                x, y = float(r["swept_value"]), float(r[column])
                xs.append(x)
                ys.append(y)
                by_value[x].append(y)
        label = method if len(COLUMNS) == 1 else method + " " + column[:-2]
        line = ax.plot(sorted(by_value), [sum(by_value[x]) / len(by_value[x]) for x in sorted(by_value)], label=label)
        ax.scatter(xs, ys, s=8, alpha=0.35, color=line[0].get_color())

ax.set_xlabel("{param} [{unit}]")
ax.set_ylabel("{ylabel}")
values = [float(r[c]) for r in rows for c in COLUMNS if r[c] != ""]
if values and min(values) > 0 and max(values) / min(values) > 100:
    ax.set_yscale("log")
ax.legend()
fig.tight_layout()
fig.savefig(os.path.join(HERE, "{stem}.svg"), metadata={{"Date": None}})
"#,
        stem = kind.file_stem(),
        csv = csv_name,
        param = kind.0.name(),
        unit = kind.0.unit(),
        columns = columns.join(", "),
        ylabel = ylabel,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: Method, seed: u64, v: f64, e: Option<f64>) -> ResultRow {
        ResultRow {
            method,
            seed,
            swept_param: SweptParam::MseThreshold,
            swept_value: v,
            e_edge_tran: e.map(|x| x * 0.1),
            e_aircomp_tran: e.map(|x| x * 0.2),
            e_comp: e.map(|x| x * 0.7),
            e_total: e,
            feasible: e.is_some(),
            iterations: 3,
            wall_ms: 1.25,
        }
    }

    #[test]
    fn csv_header_and_roundtrip() {
        let empty = csv_string(&[]).unwrap();
        assert_eq!(empty.trim_end(), CSV_COLUMNS.join(","));
        let table = vec![
            row(Method::Bcd, 0, 0.4, Some(0.123456789012345)),
            row(Method::Bcd, 1, 0.4, None),
            row(Method::Equal, 0, 0.7, Some(1e-7 / 3.0)),
        ];
        let text = csv_string(&table).unwrap();
        assert_eq!(text.lines().next().unwrap().split(',').count(), 11);
        assert!(text.lines().nth(2).unwrap().contains(",,,,false,"));
        assert_eq!(parse_csv(&text).unwrap(), table);
    }

    #[test]
    fn edge_count_sweep_keeps_total() {
        let base = SystemConfig::desk();
        let c = SweptParam::NumEdge.apply(&base, 3.0).unwrap();
        assert_eq!((c.num_aircomp, c.num_edge), (7, 3));
        assert!(SweptParam::NumEdge.apply(&base, 2.5).is_err());
        assert!(SweptParam::NumEdge.apply(&base, 11.0).is_err());
        // the base is untouched
        assert_eq!(base.num_edge, 5);
    }

    #[test]
    fn spec_validation() {
        let base = SystemConfig::desk();
        let spec = SweepSpec::from_toml_str(
            "parameter = \"mse_threshold_zeta\"\nvalues = [0.4, 0.7]\nmethods = [\"bcd\"]\nseeds = [1]\n",
        )
        .unwrap();
        assert!(spec.record_timing);
        spec.validate(&base).unwrap();
        let bad = SweepSpec {
            values: vec![0.4, 0.4],
            ..spec.clone()
        };
        assert!(bad.validate(&base).is_err());
        assert!(SweepSpec::from_toml_str("parameter = \"gamma\"\nvalues = [1.0]\nmethods = []\nseeds = []\n").is_err());
        assert!(SweepSpec::from_toml_str("parameter = \"horizon_T\"\nvalues = [1.0]\nmethods = [\"bcd\"]\nseeds = [0]\nextra = 1\n").is_err());
    }

    #[test]
    fn plot_files() {
        let dir = tempfile::tempdir().unwrap();
        let table: Vec<ResultRow> = Method::ALL
            .iter()
            .flat_map(|&m| (0..3).map(move |s| row(m, s, 0.4 + s as f64 * 0.3, Some(1.0 + s as f64))))
            .collect();
        let files = emit_plot(&table, "mse_threshold_zeta", dir.path(), "sweep.csv").unwrap();
        let svg = std::fs::read_to_string(&files.svg).unwrap();
        assert_eq!(svg.matches("class=\"series\"").count(), 3);
        assert!(svg.contains("mse_threshold_zeta [-]"));
        assert!(svg.contains("e_total [J]"));
        let script = std::fs::read_to_string(&files.script).unwrap();
        let again = emit_plot(&table, "mse_threshold_zeta", dir.path(), "sweep.csv").unwrap();
        assert_eq!(std::fs::read_to_string(again.script).unwrap(), script);
        assert!(matches!(emit_plot(&table, "fig9", dir.path(), "sweep.csv"), Err(Error::Usage(_))));
        assert!(matches!(emit_plot(&table, "horizon_T", dir.path(), "sweep.csv"), Err(Error::Usage(_))));
    }
}
