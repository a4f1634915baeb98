//! Config-driven sweeps over the hot-bath occupation or the coupling, and
//! cutoff / semi-classical-limit convergence tables.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::fcs::CountedCurrent;
use crate::lindblad::{check_cutoff_convergence, ConvergenceOptions, OpenSystem, STEADY_STATE_TOL};
use crate::models::{build_maser, build_sc_maser, maser_thermo_hamiltonian, semiclassical_limit_family, MaserParams, COLD_BATH, HOT_BATH};
use crate::thermo::{evaluate, thermodynamic_uncertainty, Framework, ThermoReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "n_H")]
    NH,
    #[serde(rename = "g_ratio")]
    GRatio,
}

impl Axis {
    pub fn label(self) -> &'static str {
        match self {
            Axis::NH => "n_H",
            Axis::GRatio => "g_ratio",
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n_H" => Ok(Axis::NH),
            "g_ratio" => Ok(Axis::GRatio),
            other => Err(Error::Config(format!("unknown sweep axis `{other}` (expected n_H or g_ratio)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Config(format!("unknown output format `{other}` (expected csv or json)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Linspace {
    pub start: f64,
    pub stop: f64,
    pub num: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: Axis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linspace: Option<Linspace>,
    #[serde(default = "default_frameworks")]
    pub frameworks: Vec<Framework>,
    /// Baths whose heat current is counted: `cold` and/or `hot`.
    #[serde(default = "default_count")]
    pub count: Vec<String>,
}

fn default_frameworks() -> Vec<Framework> {
    vec![Framework::Standard, Framework::Io, Framework::SemiClassical]
}

fn default_count() -> Vec<String> {
    vec![COLD_BATH.to_string()]
}

impl SweepSpec {
    pub fn points(&self) -> Result<Vec<f64>> {
        match (&self.values, &self.linspace) {
            (Some(v), None) => Ok(v.clone()),
            (None, Some(l)) => {
                if l.num == 0 {
                    return Ok(Vec::new());
                }
                if l.num == 1 {
                    return Ok(vec![l.start]);
                }
                let step = (l.stop - l.start) / (l.num - 1) as f64;
                Ok((0..l.num).map(|i| if i + 1 == l.num { l.stop } else { l.start + step * i as f64 }).collect())
            }
            _ => Err(Error::Config("sweep needs exactly one of `values` or `linspace`".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    pub tol: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self { tol: STEADY_STATE_TOL }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceSpec {
    /// Also run the convergence tables after `run`.
    pub enabled: bool,
    pub cutoffs: Vec<usize>,
    pub scales: Vec<f64>,
    /// Hot occupation of the convergence point; defaults to the parameter set's.
    #[serde(rename = "n_H", skip_serializing_if = "Option::is_none")]
    pub n_h: Option<f64>,
    pub rel_threshold: f64,
    pub edge_threshold: f64,
    /// Largest tolerated ratio of the last to the first limit-family gap.
    pub gap_ratio: f64,
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        let opts = ConvergenceOptions::default();
        Self {
            enabled: false,
            cutoffs: vec![20, 25, 30],
            scales: vec![1.0, 2.0, 4.0],
            n_h: None,
            rel_threshold: opts.rel_threshold,
            edge_threshold: opts.edge_threshold,
            gap_ratio: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub params: MaserParams,
    pub sweep: SweepSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub convergence: ConvergenceSpec,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let points = self.sweep.points()?;
        if points.is_empty() {
            return Err(Error::Config("sweep values are empty".into()));
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("sweep values must be strictly increasing".into()));
        }
        if points.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("sweep values must be finite and non-negative".into()));
        }
        if self.sweep.axis == Axis::NH && points[0] <= 0.0 {
            return Err(Error::Config("n_H sweep values must be positive".into()));
        }
        if self.sweep.frameworks.is_empty() {
            return Err(Error::Config("at least one framework is required".into()));
        }
        if self.sweep.count.is_empty() {
            return Err(Error::Config("at least one counted current is required".into()));
        }
        for c in &self.sweep.count {
            if c != COLD_BATH && c != HOT_BATH {
                return Err(Error::Config(format!("cannot count current `{c}` (expected cold or hot)")));
            }
        }
        if !(self.solver.tol > 0.0) {
            return Err(Error::Config("solver tolerance must be positive".into()));
        }
        self.params.validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn with_cutoff(mut self, cutoff: usize) -> Self {
        self.params.cutoff = cutoff;
        self
    }

    pub fn with_axis(mut self, axis: Axis) -> Self {
        self.sweep.axis = axis;
        self
    }

    fn runs_composite(&self) -> bool {
        self.sweep.frameworks.iter().any(|f| matches!(f, Framework::Standard | Framework::Io))
    }

    fn runs_sc(&self) -> bool {
        self.sweep.frameworks.contains(&Framework::SemiClassical)
    }

    /// Parameters of one sweep point.
    pub fn point_params(&self, value: f64) -> MaserParams {
        match self.sweep.axis {
            Axis::NH => self.params.with_n_h(value),
            Axis::GRatio => MaserParams { g: value * self.params.kappa, ..self.params.clone() },
        }
    }
}

fn short(bath: &str) -> &'static str {
    match bath {
        HOT_BATH => "H",
        _ => "C",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Composite,
    Semiclassical,
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Composite => "composite",
            ModelKind::Semiclassical => "semiclassical",
        }
    }
}

/// Statistics of one counted current.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CountedStats {
    pub mean: Option<f64>,
    pub variance: Option<f64>,
    pub q_standard: Option<f64>,
    pub q_io: Option<f64>,
    pub q_sc: Option<f64>,
    pub q_undefined: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub model: ModelKind,
    pub sweep_value: f64,
    pub n_h: f64,
    pub t_h: f64,
    pub g: f64,
    pub j_h: Option<f64>,
    pub j_c: Option<f64>,
    pub j: Option<f64>,
    pub j_io: Option<f64>,
    pub p: Option<f64>,
    pub p_io: Option<f64>,
    pub p_sc: Option<f64>,
    pub sigma: Option<f64>,
    pub sigma_io: Option<f64>,
    pub sigma_sc: Option<f64>,
    /// One entry per counted bath, in config order.
    pub counted: Vec<CountedStats>,
    pub first_law_standard: Option<f64>,
    pub first_law_io: Option<f64>,
    pub first_law_sc: Option<f64>,
    pub solver_residual: Option<f64>,
    pub edge_population: Option<f64>,
    /// `σ − (σ_sc − J/T)` with `σ_sc` from the semi-classical model.
    pub sigma_split_gap: Option<f64>,
    pub error: Option<String>,
}

impl SweepRow {
    fn empty(model: ModelKind, value: f64, p: &MaserParams, ncount: usize) -> Self {
        Self {
            model,
            sweep_value: value,
            n_h: p.n_bar_hot().unwrap_or(f64::NAN),
            t_h: p.hot_temperature(),
            g: p.g,
            j_h: None,
            j_c: None,
            j: None,
            j_io: None,
            p: None,
            p_io: None,
            p_sc: None,
            sigma: None,
            sigma_io: None,
            sigma_sc: None,
            counted: vec![CountedStats::default(); ncount],
            first_law_standard: None,
            first_law_io: None,
            first_law_sc: None,
            solver_residual: None,
            edge_population: None,
            sigma_split_gap: None,
            error: None,
        }
    }

    pub fn failed(&self) -> bool {
        self.error.is_some()
    }

    pub fn q_undefined(&self) -> bool {
        self.counted.iter().any(|c| c.q_undefined)
    }
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub axis: Axis,
    pub count: Vec<String>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.failed()).count()
    }

    pub fn columns(&self) -> Vec<String> {
        let mut cols: Vec<String> =
            ["model", "sweep_value", "n_H", "T_H", "g", "J_H", "J_C", "J", "J_io", "P", "P_io", "P_sc", "sigma", "sigma_io", "sigma_sc"]
                .iter()
                .map(|s| s.to_string())
                .collect();
        for bath in &self.count {
            let s = short(bath);
            cols.extend([format!("mean_J_{s}"), format!("var_J_{s}"), format!("Q_{s}_standard"), format!("Q_{s}_io"), format!("Q_{s}_sc")]);
        }
        cols.extend(
            [
                "first_law_standard",
                "first_law_io",
                "first_law_sc",
                "solver_residual",
                "edge_population",
                "sigma_split_gap",
                "Q_undefined",
                "error",
            ]
            .iter()
            .map(|s| s.to_string()),
        );
        cols
    }

    fn cells(&self, row: &SweepRow) -> Vec<Cell> {
        use Cell::*;
        let mut cells = vec![
            Text(row.model.label().to_string()),
            Num(Some(row.sweep_value)),
            Num(Some(row.n_h)),
            Num(Some(row.t_h)),
            Num(Some(row.g)),
            Num(row.j_h),
            Num(row.j_c),
            Num(row.j),
            Num(row.j_io),
            Num(row.p),
            Num(row.p_io),
            Num(row.p_sc),
            Num(row.sigma),
            Num(row.sigma_io),
            Num(row.sigma_sc),
        ];
        for c in &row.counted {
            cells.extend([Num(c.mean), Num(c.variance), Num(c.q_standard), Num(c.q_io), Num(c.q_sc)]);
        }
        cells.extend([
            Num(row.first_law_standard),
            Num(row.first_law_io),
            Num(row.first_law_sc),
            Num(row.solver_residual),
            Num(row.edge_population),
            Num(row.sigma_split_gap),
            Flag(row.q_undefined()),
            Text(row.error.clone().unwrap_or_default()),
        ]);
        cells
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().from_writer(out);
        w.write_record(self.columns())?;
        for row in &self.rows {
            w.write_record(self.cells(row).iter().map(Cell::to_csv))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self, cfg: &RunConfig) -> Value {
        let columns = self.columns();
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let obj: serde_json::Map<String, Value> = columns.iter().cloned().zip(self.cells(row).iter().map(Cell::to_json)).collect();
                Value::Object(obj)
            })
            .collect();
        json!({
            "metadata": {
                "program": env!("CARGO_PKG_NAME"),
                "version": env!("CARGO_PKG_VERSION"),
                "axis": self.axis.label(),
                "params": cfg.params,
                "frameworks": cfg.sweep.frameworks,
                "count": self.count,
                "solver_tol": cfg.solver.tol,
                "n_h_override": self.axis == Axis::NH || cfg.params.n_h_override.is_some(),
                "n_h_rule": "T_H = omega_3 / ln(1 + 1/n_H) whenever n_H is overridden",
                "occupation_ratio": cfg.params.occupation_ratio().ok(),
                "columns": columns,
            },
            "rows": rows,
        })
    }

    pub fn write_json<W: Write>(&self, cfg: &RunConfig, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, &self.to_json(cfg))?;
        writeln!(out)?;
        Ok(())
    }
}

enum Cell {
    Text(String),
    Num(Option<f64>),
    Flag(bool),
}

impl Cell {
    fn to_csv(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Num(Some(v)) => format_float(*v),
            Cell::Num(None) => String::new(),
            Cell::Flag(b) => b.to_string(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Text(s) if s.is_empty() => Value::Null,
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Num(Some(v)) if v.is_finite() => json!(v),
            Cell::Num(_) => Value::Null,
            Cell::Flag(b) => Value::Bool(*b),
        }
    }
}

/// 17 significant digits: enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn counted_currents(sys: &OpenSystem, count: &[String]) -> Result<Vec<CountedCurrent>> {
    count.iter().map(|b| CountedCurrent::for_bath(sys, b)).collect()
}

/// Evaluates every counted current; the first carries the full report.
fn evaluate_all(sys: &OpenSystem, p: &MaserParams, count: &[String], tol: f64) -> Result<(ThermoReport, Vec<CountedStats>)> {
    let th = maser_thermo_hamiltonian(p)?;
    let currents = counted_currents(sys, count)?;
    let report = evaluate(sys, &th, &currents[0], tol)?;
    let mut stats = vec![stats_of(&report, report.noise)];
    for c in &currents[1..] {
        let r = evaluate(sys, &th, c, tol)?;
        stats.push(stats_of(&report, r.noise));
    }
    Ok((report, stats))
}

fn stats_of(report: &ThermoReport, noise: crate::fcs::NoiseResult) -> CountedStats {
    let q = |s: Option<f64>| s.and_then(|s| thermodynamic_uncertainty(noise.mean, noise.variance, s).ok());
    CountedStats {
        mean: Some(noise.mean),
        variance: Some(noise.variance),
        q_standard: q(report.sigma_standard),
        q_io: q(report.sigma_io),
        q_sc: q(Some(report.sigma_sc)),
        q_undefined: thermodynamic_uncertainty(noise.mean, noise.variance, 1.0).is_err(),
    }
}

fn fill(row: &mut SweepRow, report: &ThermoReport, stats: Vec<CountedStats>) {
    row.j_h = report.j(HOT_BATH);
    row.j_c = report.j(COLD_BATH);
    row.j = report.j_cavity;
    row.j_io = report.j_io;
    row.p = report.p_standard;
    row.p_io = report.p_io;
    row.p_sc = report.p_sc;
    row.sigma = report.sigma_standard;
    row.sigma_io = report.sigma_io;
    row.sigma_sc = Some(report.sigma_sc);
    row.counted = stats;
    row.first_law_standard = report.first_law.get(&Framework::Standard).copied();
    row.first_law_io = report.first_law.get(&Framework::Io).copied();
    row.first_law_sc = report.first_law.get(&Framework::SemiClassical).copied();
    row.solver_residual = Some(report.solver_residual);
    row.edge_population = Some(report.edge_population);
}

fn run_point(cfg: &RunConfig, value: f64) -> Vec<SweepRow> {
    let p = cfg.point_params(value);
    let count = &cfg.sweep.count;
    let tol = cfg.solver.tol;
    let mut rows = Vec::new();

    let mut composite = None;
    if cfg.runs_composite() {
        let mut row = SweepRow::empty(ModelKind::Composite, value, &p, count.len());
        match build_maser(&p).and_then(|sys| evaluate_all(&sys, &p, count, tol)) {
            Ok((report, stats)) => {
                fill(&mut row, &report, stats);
                composite = Some(report);
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        rows.push(row);
    }
    if cfg.runs_sc() {
        let mut row = SweepRow::empty(ModelKind::Semiclassical, value, &p, count.len());
        match build_sc_maser(&p).and_then(|sys| evaluate_all(&sys, &p, count, tol)) {
            Ok((report, stats)) => {
                fill(&mut row, &report, stats);
                if let (Some(c), Some(first)) = (&composite, rows.first_mut()) {
                    if let (Some(s), Some(j)) = (c.sigma_standard, c.j_cavity) {
                        first.sigma_split_gap = Some(s - (report.sigma_sc - j / p.temperature));
                    }
                }
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        rows.push(row);
    }
    rows
}

/// Runs every sweep point (in parallel) and returns rows in sweep order.
pub fn run_sweep(cfg: &RunConfig) -> Result<SweepTable> {
    cfg.validate()?;
    let points = cfg.sweep.points()?;
    let rows: Vec<Vec<SweepRow>> = points.par_iter().map(|&v| run_point(cfg, v)).collect();
    Ok(SweepTable { axis: cfg.sweep.axis, count: cfg.sweep.count.clone(), rows: rows.into_iter().flatten().collect() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutoffEntry {
    pub cutoff: usize,
    pub j_c: f64,
    pub rel_diff: Option<f64>,
    pub edge_population: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleEntry {
    pub scale: f64,
    pub g: f64,
    #[serde(rename = "E")]
    pub drive: f64,
    pub j_c_composite: f64,
    pub j_c_sc: f64,
    pub gap: f64,
    pub edge_population: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTables {
    pub cutoffs: Vec<CutoffEntry>,
    pub cutoff_pass: bool,
    pub cutoff_error: Option<String>,
    pub scales: Vec<ScaleEntry>,
    pub scale_pass: bool,
    pub scale_error: Option<String>,
}

impl ConvergenceTables {
    pub fn passed(&self) -> bool {
        self.cutoff_pass && self.scale_pass
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().flexible(false).from_writer(out);
        w.write_record(["table", "parameter", "J_C", "J_C_sc", "difference", "edge_population", "pass", "error"])?;
        let opt = |v: Option<f64>| v.map(format_float).unwrap_or_default();
        for c in &self.cutoffs {
            w.write_record([
                "cutoff".to_string(),
                c.cutoff.to_string(),
                format_float(c.j_c),
                String::new(),
                opt(c.rel_diff),
                format_float(c.edge_population),
                self.cutoff_pass.to_string(),
                String::new(),
            ])?;
        }
        if let Some(e) = &self.cutoff_error {
            w.write_record(["cutoff", "", "", "", "", "", "false", e.as_str()])?;
        }
        for s in &self.scales {
            w.write_record([
                "scale".to_string(),
                format_float(s.scale),
                format_float(s.j_c_composite),
                format_float(s.j_c_sc),
                format_float(s.gap),
                format_float(s.edge_population),
                self.scale_pass.to_string(),
                String::new(),
            ])?;
        }
        if let Some(e) = &self.scale_error {
            w.write_record(["scale", "", "", "", "", "", "false", e.as_str()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn cold_heat(sys: &OpenSystem, p: &MaserParams, tol: f64) -> Result<(f64, f64)> {
    let th = maser_thermo_hamiltonian(p)?;
    let r = evaluate(sys, &th, &CountedCurrent::for_bath(sys, COLD_BATH)?, tol)?;
    Ok((r.j(COLD_BATH).ok_or_else(|| Error::UnknownBath(COLD_BATH.into()))?, r.edge_population))
}

fn cutoff_table(cfg: &RunConfig, base: &MaserParams) -> Result<(Vec<CutoffEntry>, bool)> {
    let conv = &cfg.convergence;
    let opts = ConvergenceOptions { rel_threshold: conv.rel_threshold, edge_threshold: conv.edge_threshold, solver_tol: cfg.solver.tol };
    let th = maser_thermo_hamiltonian(base)?;
    if conv.cutoffs.len() < 2 {
        // a single cutoff cannot show convergence; still report its edge population
        let &cutoff = conv.cutoffs.first().ok_or_else(|| Error::Config("no cutoffs given".into()))?;
        let p = MaserParams { cutoff, ..base.clone() };
        let (j_c, edge) = cold_heat(&build_maser(&p)?, &p, cfg.solver.tol)?;
        return Ok((vec![CutoffEntry { cutoff, j_c, rel_diff: None, edge_population: edge }], false));
    }
    let observable = |sys: &OpenSystem, ss: &crate::lindblad::SteadyState| crate::thermo::bath_heat_current(sys, &ss.rho, &th, COLD_BATH);
    let report = check_cutoff_convergence(|n| build_maser(&MaserParams { cutoff: n, ..base.clone() }), observable, &conv.cutoffs, &opts)?;
    let entries = report
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| CutoffEntry {
            cutoff: s.cutoff,
            j_c: s.value,
            rel_diff: if i == 0 { None } else { Some(report.rel_diffs[i - 1]) },
            edge_population: s.edge_population,
        })
        .collect();
    Ok((entries, report.converged))
}

fn scale_table(cfg: &RunConfig, base: &MaserParams) -> Result<(Vec<ScaleEntry>, bool)> {
    let conv = &cfg.convergence;
    if conv.scales.is_empty() {
        return Err(Error::Config("no limit-family scales given".into()));
    }
    let entries: Vec<Result<ScaleEntry>> = conv
        .scales
        .par_iter()
        .map(|&s| {
            let p = semiclassical_limit_family(base, s)?;
            let (jc, edge) = cold_heat(&build_maser(&p)?, &p, cfg.solver.tol)?;
            let (jsc, _) = cold_heat(&build_sc_maser(&p)?, &p, cfg.solver.tol)?;
            Ok(ScaleEntry {
                scale: s,
                g: p.g,
                drive: p.drive,
                j_c_composite: jc,
                j_c_sc: jsc,
                gap: (jc - jsc).abs(),
                edge_population: edge,
            })
        })
        .collect();
    let entries = entries.into_iter().collect::<Result<Vec<_>>>()?;
    let monotone = entries.windows(2).all(|w| w[1].gap < w[0].gap);
    let first = entries.first().map(|e| e.gap).unwrap_or(0.0);
    let last = entries.last().map(|e| e.gap).unwrap_or(0.0);
    let pass = entries.len() >= 2 && monotone && last <= conv.gap_ratio * first;
    Ok((entries, pass))
}

/// Cutoff and semi-classical-limit convergence at one parameter point.
pub fn run_convergence(cfg: &RunConfig) -> Result<ConvergenceTables> {
    cfg.validate()?;
    let mut base = cfg.params.clone();
    if let Some(n) = cfg.convergence.n_h {
        base = base.with_n_h(n);
    }
    let (cutoffs, cutoff_pass, cutoff_error) = match cutoff_table(cfg, &base) {
        Ok((c, p)) => (c, p, None),
        Err(Error::Config(e)) => return Err(Error::Config(e)),
        Err(e) => (Vec::new(), false, Some(e.to_string())),
    };
    let (scales, scale_pass, scale_error) = match scale_table(cfg, &base) {
        Ok((s, p)) => (s, p, None),
        Err(Error::Config(e)) => return Err(Error::Config(e)),
        Err(e) => (Vec::new(), false, Some(e.to_string())),
    };
    Ok(ConvergenceTables { cutoffs, cutoff_pass, cutoff_error, scales, scale_pass, scale_error })
}

/// Row, failure and undefined-Q counts for progress output.
pub fn summary(table: &SweepTable) -> BTreeMap<&'static str, usize> {
    let mut m = BTreeMap::new();
    m.insert("rows", table.rows.len());
    m.insert("failed", table.failures());
    m.insert("q_undefined", table.rows.iter().filter(|r| r.q_undefined()).count());
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
[params]
n_cutoff = 8

[sweep]
axis = "n_H"
values = [1.0, 3.0]
"#;

    #[test]
    fn config_defaults_and_validation() {
        let cfg = RunConfig::from_toml(SMALL).unwrap();
        assert_eq!(cfg.params.cutoff, 8);
        assert_eq!(cfg.params.drive, 1.5);
        assert_eq!(cfg.sweep.frameworks.len(), 3);
        assert_eq!(cfg.sweep.count, vec!["cold".to_string()]);
        assert_eq!(cfg.output.format, Format::Csv);

        let bad = SMALL.replace("values = [1.0, 3.0]", "values = [3.0, 1.0]");
        assert!(matches!(RunConfig::from_toml(&bad), Err(Error::Config(_))));
        let bad = SMALL.replace("values = [1.0, 3.0]", "values = []");
        assert!(RunConfig::from_toml(&bad).is_err());
        let bad = SMALL.replace("values = [1.0, 3.0]", "values = [1.0]\nframeworks = []");
        assert!(matches!(RunConfig::from_toml(&bad), Err(Error::Config(_))));
        let bad = SMALL.replace("n_cutoff = 8", "n_cutoff = 8\nbogus = 1");
        assert!(RunConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn linspace_points() {
        let cfg = RunConfig::from_toml("[sweep]\naxis = \"n_H\"\nlinspace = { start = 0.5, stop = 10.0, num = 10 }\n").unwrap();
        let pts = cfg.sweep.points().unwrap();
        assert_eq!(pts.len(), 10);
        assert_eq!(pts[0], 0.5);
        assert_eq!(pts[9], 10.0);
        assert!((pts[1] - (0.5 + 9.5 / 9.0)).abs() < 1e-15);
    }

    #[test]
    fn small_sweep_rows_and_csv_round_trip() {
        let cfg = RunConfig::from_toml(SMALL).unwrap();
        let table = run_sweep(&cfg).unwrap();
        assert_eq!(table.rows.len(), 4);
        assert_eq!(table.failures(), 0);
        assert_eq!(table.rows[0].model, ModelKind::Composite);
        assert_eq!(table.rows[1].model, ModelKind::Semiclassical);
        assert_eq!(table.rows[2].sweep_value, 3.0);

        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let mut rdr = csv::Reader::from_reader(buf.as_slice());
        let headers = rdr.headers().unwrap().clone();
        assert_eq!(headers.iter().collect::<Vec<_>>(), table.columns());
        let records: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
        let p: f64 = records[0][col("P")].parse().unwrap();
        assert_eq!(p.to_bits(), table.rows[0].p.unwrap().to_bits());
        let q: f64 = records[1][col("Q_C_sc")].parse().unwrap();
        assert_eq!(q.to_bits(), table.rows[1].counted[0].q_sc.unwrap().to_bits());
        assert_eq!(&records[1][col("P")], "");
    }

    #[test]
    fn failed_points_are_isolated() {
        let mut cfg = RunConfig::from_toml(SMALL).unwrap();
        // absurd tolerance makes every steady state fail
        cfg.solver.tol = 1e-300;
        let table = run_sweep(&cfg).unwrap();
        assert_eq!(table.failures(), 4);
        assert!(table.rows.iter().all(|r| r.error.as_deref().unwrap().contains("residual")));
        cfg.solver.tol = STEADY_STATE_TOL;
        let good = run_sweep(&cfg).unwrap();
        assert_eq!(good.failures(), 0);
    }

    #[test]
    fn json_output_carries_metadata() {
        let cfg = RunConfig::from_toml(SMALL).unwrap();
        let table = run_sweep(&cfg).unwrap();
        let v = table.to_json(&cfg);
        assert_eq!(v["metadata"]["axis"], "n_H");
        assert_eq!(v["metadata"]["n_h_override"], true);
        assert_eq!(v["rows"].as_array().unwrap().len(), 4);
        assert!(v["rows"][1]["P"].is_null());
        assert!(v["rows"][1]["P_sc"].as_f64().unwrap() < 0.0);
    }

    #[test]
    fn g_axis_and_hot_current() {
        let text = "[params]\nn_cutoff = 6\n[sweep]\naxis = \"g_ratio\"\nvalues = [0.01, 0.05]\ncount = [\"cold\", \"hot\"]\nframeworks = [\"io\"]\n";
        let cfg = RunConfig::from_toml(text).unwrap();
        let table = run_sweep(&cfg).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.rows[1].g, 0.05);
        assert!(table.columns().contains(&"Q_H_io".to_string()));
        let hot = table.rows[0].counted[1];
        assert!((hot.mean.unwrap() - table.rows[0].j_h.unwrap()).abs() <= 1e-9 * hot.mean.unwrap().abs());
    }

    #[test]
    fn undersized_cutoff_fails_convergence() {
        let text =
            "[params]\nbasis = \"fock\"\n[sweep]\naxis = \"n_H\"\nvalues = [2.0]\n[convergence]\ncutoffs = [3]\nscales = [1.0, 2.0]\n";
        let cfg = RunConfig::from_toml(text).unwrap();
        let t = run_convergence(&cfg).unwrap();
        assert!(!t.cutoff_pass);
        assert!(t.cutoffs[0].edge_population > 1e-2);
    }
}
