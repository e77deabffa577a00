//! File emission. Every CSV starts with a `# schema=...` comment line so
//! downstream tooling can detect layout changes; floats are written with
//! the shortest round-trip formatting, which makes re-runs byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sirv_core::meanfield::{AprioriReport, MeanFieldSolution, ScalarSolution};
use sirv_core::measure::{MeasureComponent, PairingTable};
use sirv_core::model::{ExperimentConfig, Population};
use sirv_core::sim::{EventKind, EventLog};

use crate::error::CliError;

pub fn component_tag(c: MeasureComponent) -> &'static str {
    match c {
        MeasureComponent::S => "S",
        MeasureComponent::F => "F",
        MeasureComponent::I => "I",
        MeasureComponent::R => "R",
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let body = toml::to_string_pretty(value).expect("report types serialize to TOML");
    write_file(path, &body)
}

fn coord_header(prefix: &str, dim: usize) -> String {
    (1..=dim).map(|a| format!("{prefix}x{a}")).collect::<Vec<_>>().join(",")
}

pub fn write_events_csv(
    path: &Path,
    pop: &Population,
    log: &EventLog,
) -> Result<(), CliError> {
    let dim = pop.dim();
    let mut eta = vec![None; pop.len()];
    for rec in &log.infections {
        eta[rec.id as usize] = Some(rec.eta);
    }
    let mut out = String::new();
    out.push_str("# schema=sirv-events-v1\n");
    let _ = writeln!(out, "time,id,kind,{},eta", coord_header("", dim));
    for ev in &log.events {
        let _ = write!(out, "{},{},{}", ev.time, ev.id, ev.kind.short());
        for c in pop.position(ev.id as usize) {
            let _ = write!(out, ",{c}");
        }
        match (ev.kind, eta[ev.id as usize]) {
            (EventKind::Infection, Some(e)) => {
                let _ = writeln!(out, ",{e}");
            }
            _ => out.push_str(",\n"),
        }
    }
    write_file(path, &out)
}

pub fn write_pairings_csv(path: &Path, table: &PairingTable) -> Result<(), CliError> {
    let mut out = String::new();
    out.push_str("# schema=sirv-snapshots-v1\n");
    out.push_str("t,measure,phi,value\n");
    for (ti, t) in table.times.iter().enumerate() {
        for (ci, comp) in table.components.iter().enumerate() {
            for (pi, phi) in table.phi_names.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{t},{},{phi},{}",
                    component_tag(*comp),
                    table.value(ti, ci, pi)
                );
            }
        }
    }
    write_file(path, &out)
}

pub fn write_solution_csv(path: &Path, sol: &MeanFieldSolution) -> Result<(), CliError> {
    let grid = sol.grid();
    let mut out = String::new();
    out.push_str("# schema=sirv-solution-v1\n");
    let _ = writeln!(out, "t,{},muS,muF,muI,muR,Gamma", coord_header("node_", grid.dim()));
    for (k, t) in sol.snapshot_times().iter().enumerate() {
        for g in 0..grid.len() {
            let _ = write!(out, "{t}");
            for c in grid.node(g) {
                let _ = write!(out, ",{c}");
            }
            let _ = writeln!(
                out,
                ",{},{},{},{},{}",
                sol.field(MeasureComponent::S)[k][g],
                sol.field(MeasureComponent::F)[k][g],
                sol.field(MeasureComponent::I)[k][g],
                sol.field(MeasureComponent::R)[k][g],
                sol.force_field()[k][g]
            );
        }
    }
    write_file(path, &out)
}

pub fn write_oracle_csv(path: &Path, oracle: &ScalarSolution) -> Result<(), CliError> {
    let mut out = String::new();
    out.push_str("# schema=sirv-oracle-v1\n");
    out.push_str("t,S,I,R,F\n");
    for (k, t) in oracle.times.iter().enumerate() {
        let _ = writeln!(out, "{t},{},{},{},{}", oracle.s[k], oracle.i[k], oracle.r[k], oracle.f[k]);
    }
    write_file(path, &out)
}

/// One study row per (replicate, component, phi), already ordered.
pub struct StudyRow {
    pub n: usize,
    pub replicate: usize,
    pub phi: String,
    pub component: MeasureComponent,
    pub sup_err: f64,
    pub aggregate: f64,
}

pub fn write_study_csv(path: &Path, rows: &[StudyRow]) -> Result<(), CliError> {
    let mut out = String::new();
    out.push_str("# schema=sirv-study-v1\n");
    out.push_str("N,replicate,phi,component,sup_err,aggregate\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.n,
            r.replicate,
            r.phi,
            component_tag(r.component),
            r.sup_err,
            r.aggregate
        );
    }
    write_file(path, &out)
}

#[derive(Serialize)]
pub struct ArtifactInfo {
    pub tool: &'static str,
    pub version: &'static str,
}

impl ArtifactInfo {
    pub fn current() -> Self {
        ArtifactInfo { tool: "sirv", version: env!("CARGO_PKG_VERSION") }
    }
}

#[derive(Serialize)]
pub struct SimManifest<'a> {
    pub artifact: ArtifactInfo,
    pub invocation: SimInvocation,
    pub floor: FloorInfo,
    /// Full resolved config (seed and mode overrides applied); feeding it
    /// back through `sim` reproduces every artifact byte for byte.
    pub config: &'a ExperimentConfig,
}

#[derive(Serialize)]
pub struct SimInvocation {
    pub subcommand: &'static str,
    pub seed: u64,
    pub mode: String,
    pub probe_per_axis: usize,
}

/// Denominator floor diagnostics: the limit estimate and whether this
/// run's empirical denominators clear half of it everywhere probed.
#[derive(Serialize)]
pub struct FloorInfo {
    pub c_hat: f64,
    pub omega_holds: bool,
    pub probe_per_axis: usize,
}

#[derive(Serialize)]
pub struct AprioriToml {
    pub mass_sup_observed: f64,
    pub mass_sup_bound: f64,
    pub mass_ok: bool,
    pub denominator_inf: f64,
    pub denominator_ok: bool,
    pub force_sup_observed: f64,
    pub force_constant: f64,
    pub force_bound: f64,
    pub force_ok: bool,
    pub monotone_s_ok: bool,
    pub all_ok: bool,
    pub mass_residual: f64,
    pub monotone_defect: f64,
    pub snap_alignment_error: f64,
}

impl AprioriToml {
    pub fn new(report: &AprioriReport, sol: &MeanFieldSolution) -> Self {
        AprioriToml {
            mass_sup_observed: report.mass_sup_observed,
            mass_sup_bound: report.mass_sup_bound,
            mass_ok: report.mass_ok,
            denominator_inf: report.denominator_inf,
            denominator_ok: report.denominator_ok,
            force_sup_observed: report.force_sup_observed,
            force_constant: report.force_constant,
            force_bound: report.force_bound,
            force_ok: report.force_ok,
            monotone_s_ok: report.monotone_s_ok,
            all_ok: report.all_ok(),
            mass_residual: sol.mass_residual,
            monotone_defect: sol.monotone_defect,
            snap_alignment_error: sol.snap_alignment_error,
        }
    }
}

#[derive(Serialize)]
pub struct HalvingToml {
    pub dt: f64,
    /// Sup-norm field change from dt to dt/2.
    pub diff_half: f64,
    /// Sup-norm field change from dt/2 to dt/4.
    pub diff_quarter: f64,
    /// diff_half / diff_quarter; approximately 2 for a first-order scheme.
    pub ratio: f64,
}

#[derive(Serialize)]
pub struct OracleToml {
    pub dt_oracle: f64,
    pub sup_err_s: f64,
    pub sup_err_i: f64,
    pub sup_err_r: f64,
}

/// Pick the output directory: explicit flag, then the SIRV_OUT
/// environment variable, then ./out. Creates it.
pub fn resolve_out_dir(flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
    let dir = flag
        .or_else(|| std::env::var_os("SIRV_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir)
        .map_err(|source| CliError::Write { path: dir.clone(), source })?;
    Ok(dir)
}
