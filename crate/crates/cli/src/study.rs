//! N-ladder convergence studies: many seeded replicates per population
//! size, all compared against one shared limit solution, with a log-log
//! slope fit over the ladder.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sirv_core::kernel::{estimate_c_hat, omega_n_holds};
use sirv_core::meanfield::{empirical_vs_meanfield, solve_stepping, MeanFieldSolution};
use sirv_core::measure::default_library;
use sirv_core::model::{sample_population, ExperimentConfig, TruncationMode};
use sirv_core::rng::replicate_master;
use sirv_core::sim::{simulate, truncated_mode, RateMode};
use sirv_core::{MeasureComponent, SpatialGrid, TestFunction};

use crate::commands::{field_sup_diff, load_config};
use crate::error::{CliError, StudyError};
use crate::output::StudyRow;

fn default_ladder() -> Vec<usize> {
    vec![250, 500, 1000, 2000, 4000, 8000]
}

fn default_replicates() -> usize {
    20
}

fn default_grid() -> usize {
    16
}

fn default_dt() -> f64 {
    2e-3
}

fn default_components() -> Vec<String> {
    vec!["S".into(), "F".into(), "I".into(), "R".into()]
}

fn default_probe() -> usize {
    9
}

#[derive(Deserialize, Serialize, Clone, Copy, Debug, Default, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum PhiLibrary {
    /// Constants, first and second moments, bumps and a hat.
    #[default]
    Default,
    /// Only the constant function (compartment masses).
    MassOnly,
}

#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    /// Experiment config, relative to the study file's directory.
    pub config: PathBuf,
    #[serde(default = "default_ladder")]
    pub n_ladder: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Reference solver nodes per axis.
    #[serde(default = "default_grid")]
    pub grid: usize,
    /// Reference solver time step.
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub phi_library: PhiLibrary,
    /// Measure components entering the aggregate distance.
    #[serde(default = "default_components")]
    pub components: Vec<String>,
    /// Probe nodes per axis for the denominator floor checks.
    #[serde(default = "default_probe")]
    pub probe_per_axis: usize,
}

impl StudySpec {
    pub fn validate(&self) -> Result<Vec<MeasureComponent>, StudyError> {
        if self.n_ladder.is_empty() {
            return Err(StudyError::LadderEmpty);
        }
        if self.n_ladder.windows(2).any(|w| w[1] <= w[0]) {
            return Err(StudyError::LadderNotIncreasing(self.n_ladder.clone()));
        }
        if self.replicates < 2 {
            return Err(StudyError::TooFewReplicates(self.replicates));
        }
        if self.n_ladder.len() < 3 {
            return Err(StudyError::TooFewPoints(self.n_ladder.len()));
        }
        self.components
            .iter()
            .map(|c| match c.as_str() {
                "S" => Ok(MeasureComponent::S),
                "F" => Ok(MeasureComponent::F),
                "I" => Ok(MeasureComponent::I),
                "R" => Ok(MeasureComponent::R),
                other => Err(StudyError::UnknownComponent(other.to_string())),
            })
            .collect()
    }
}

pub fn load_study(path: &Path) -> Result<(StudySpec, PathBuf), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| CliError::Read { path: path.to_path_buf(), source })?;
    let spec: StudySpec = toml::from_str(&text)
        .map_err(|e| CliError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    Ok((spec, base))
}

/// Everything a replicate needs, built once per study.
pub struct StudyContext {
    pub config: ExperimentConfig,
    pub reference: MeanFieldSolution,
    pub halving_delta: f64,
    pub phis: Vec<TestFunction>,
    pub components: Vec<MeasureComponent>,
    pub rate_mode: RateMode,
    pub c_hat: f64,
    pub probe_grid: SpatialGrid,
}

pub fn study_context(spec: &StudySpec, base: &Path) -> Result<StudyContext, CliError> {
    let components = spec.validate()?;
    let config_path = if spec.config.is_absolute() {
        spec.config.clone()
    } else {
        base.join(&spec.config)
    };
    let config = load_config(&config_path)?;
    config.ensure_valid()?;

    let reference = solve_stepping(&config, spec.grid, spec.dt)?;
    let coarse = solve_stepping(&config, spec.grid, spec.dt * 2.0)?;
    let halving_delta = field_sup_diff(&coarse, &reference);

    let phis = match spec.phi_library {
        PhiLibrary::Default => default_library(config.domain.dimension()),
        PhiLibrary::MassOnly => vec![TestFunction::constant()],
    };
    let density = config.total_density()?;
    let c_hat = estimate_c_hat(&config.kernel, &config.domain, &density, spec.probe_per_axis);
    let rate_mode = match config.run.truncation {
        TruncationMode::Raw => RateMode::Raw,
        TruncationMode::Truncated => truncated_mode(&config, spec.probe_per_axis)?,
    };
    let probe_grid = SpatialGrid::uniform(&config.domain, spec.probe_per_axis);

    Ok(StudyContext {
        config,
        reference,
        halving_delta,
        phis,
        components,
        rate_mode,
        c_hat,
        probe_grid,
    })
}

pub struct ReplicateOutcome {
    pub n: usize,
    pub replicate: usize,
    /// (phi name, component, sup error) for every tracked pair.
    pub rows: Vec<(String, MeasureComponent, f64)>,
    pub aggregate: f64,
    pub omega_holds: bool,
    pub candidates: u64,
    pub accepted: u64,
    pub events: usize,
    pub sim_seconds: f64,
}

/// One seeded replicate: the seed depends only on (master, N, replicate),
/// so any row of a study can be reproduced in isolation.
pub fn replicate_outcome(
    ctx: &StudyContext,
    n: usize,
    rep: usize,
) -> Result<ReplicateOutcome, String> {
    let mut config = ctx.config.clone();
    config.run.population = n;
    config.run.master_seed = replicate_master(ctx.config.run.master_seed, n, rep);
    let pop = sample_population(&config).map_err(|e| e.to_string())?;
    let out = simulate(&config, &pop, ctx.rate_mode).map_err(|e| e.to_string())?;
    let omega = omega_n_holds(&ctx.config.kernel, &pop, ctx.c_hat, &ctx.probe_grid);

    let dist = empirical_vs_meanfield(&out.trajectory, &ctx.reference, &ctx.phis)
        .map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    let mut aggregate = 0.0f64;
    for row in &dist.rows {
        if ctx.components.contains(&row.component) {
            aggregate = aggregate.max(row.sup_err);
            rows.push((row.phi.clone(), row.component, row.sup_err));
        }
    }
    Ok(ReplicateOutcome {
        n,
        replicate: rep,
        rows,
        aggregate,
        omega_holds: omega,
        candidates: out.telemetry.candidates,
        accepted: out.telemetry.accepted,
        events: out.log.events.len(),
        sim_seconds: out.telemetry.sim_seconds,
    })
}

#[derive(Serialize, Debug, Clone)]
pub struct PerN {
    pub n: usize,
    pub replicates_ok: usize,
    pub failures: usize,
    pub mean_aggregate: f64,
    pub se_aggregate: f64,
    pub omega_fraction: f64,
    pub candidates_per_sec: f64,
}

#[derive(Serialize, Debug, Clone)]
pub struct FitInfo {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    /// slope +- 2 standard errors.
    pub ci95_lo: f64,
    pub ci95_hi: f64,
    pub points: usize,
}

#[derive(Serialize, Debug, Clone)]
pub struct StudyEcho {
    pub config: String,
    pub n_ladder: Vec<usize>,
    pub replicates: usize,
    pub grid: usize,
    pub dt: f64,
    pub phi_library: PhiLibrary,
    pub components: Vec<String>,
    pub mode: String,
    pub c_hat: f64,
    pub master_seed: u64,
}

#[derive(Serialize, Debug, Clone)]
pub struct ReferenceInfo {
    pub mass_residual: f64,
    pub sup_force: f64,
    /// Field change when halving the step down to `dt`.
    pub halving_delta: f64,
    /// Reference resolution should sit well below the sampling noise:
    /// halving_delta less than 10% of the smallest per-N mean distance.
    pub resolution_ok: bool,
}

#[derive(Serialize, Debug, Clone)]
pub struct StudyTelemetry {
    pub wall_seconds: f64,
    pub total_candidates: u64,
    pub total_accepted: u64,
    pub total_events: u64,
}

#[derive(Serialize, Debug, Clone)]
pub struct StudyReport {
    pub study: StudyEcho,
    pub reference: ReferenceInfo,
    pub per_n: Vec<PerN>,
    pub fit: FitInfo,
    pub telemetry: StudyTelemetry,
}

pub struct StudyOutput {
    pub report: StudyReport,
    pub rows: Vec<StudyRow>,
    /// One warning line per failed replicate, in ladder order.
    pub warnings: Vec<String>,
}

/// Ordinary least squares of y on x; returns (slope, intercept, slope se).
fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let dof = (x.len() as f64 - 2.0).max(1.0);
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - (intercept + slope * a);
            r * r
        })
        .sum();
    let se = (ss_res / dof / sxx).sqrt();
    (slope, intercept, se)
}

pub fn run_study(
    ctx: &StudyContext,
    spec: &StudySpec,
    threads: usize,
) -> Result<StudyOutput, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("worker pool construction cannot fail for sane thread counts");

    let tasks: Vec<(usize, usize)> = spec
        .n_ladder
        .iter()
        .flat_map(|&n| (0..spec.replicates).map(move |rep| (n, rep)))
        .collect();

    let started = Instant::now();
    // results come back in task order regardless of the pool size, which
    // keeps every output byte thread-count independent
    let results: Vec<Result<ReplicateOutcome, String>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(n, rep)| replicate_outcome(ctx, n, rep))
            .collect()
    });
    let wall_seconds = started.elapsed().as_secs_f64();

    let mut warnings = Vec::new();
    for ((n, rep), res) in tasks.iter().zip(&results) {
        if let Err(message) = res {
            warnings.push(format!("replicate N={n} rep={rep} failed: {message}"));
        }
    }
    let failed = warnings.len();
    if failed * 10 > tasks.len() {
        return Err(StudyError::TooManyFailures { failed, total: tasks.len() }.into());
    }

    let mut rows = Vec::new();
    let mut per_n = Vec::new();
    let mut total_candidates = 0u64;
    let mut total_accepted = 0u64;
    let mut total_events = 0u64;
    for &n in &spec.n_ladder {
        let outcomes: Vec<&ReplicateOutcome> = results
            .iter()
            .filter_map(|r| r.as_ref().ok())
            .filter(|o| o.n == n)
            .collect();
        let m = outcomes.len();
        let failures = spec.replicates - m;
        let mean = outcomes.iter().map(|o| o.aggregate).sum::<f64>() / m as f64;
        let var = outcomes
            .iter()
            .map(|o| (o.aggregate - mean) * (o.aggregate - mean))
            .sum::<f64>()
            / (m as f64 - 1.0);
        let se = (var / m as f64).sqrt();
        let omega_fraction =
            outcomes.iter().filter(|o| o.omega_holds).count() as f64 / m as f64;
        let candidates: u64 = outcomes.iter().map(|o| o.candidates).sum();
        let seconds: f64 = outcomes.iter().map(|o| o.sim_seconds).sum();
        total_candidates += candidates;
        total_accepted += outcomes.iter().map(|o| o.accepted).sum::<u64>();
        total_events += outcomes.iter().map(|o| o.events as u64).sum::<u64>();
        per_n.push(PerN {
            n,
            replicates_ok: m,
            failures,
            mean_aggregate: mean,
            se_aggregate: se,
            omega_fraction,
            candidates_per_sec: candidates as f64 / seconds,
        });
        for o in outcomes {
            for (phi, comp, sup) in &o.rows {
                rows.push(StudyRow {
                    n,
                    replicate: o.replicate,
                    phi: phi.clone(),
                    component: *comp,
                    sup_err: *sup,
                    aggregate: o.aggregate,
                });
            }
        }
    }

    let xs: Vec<f64> = per_n.iter().map(|p| (p.n as f64).ln()).collect();
    let ys: Vec<f64> = per_n.iter().map(|p| p.mean_aggregate.ln()).collect();
    let (slope, intercept, slope_se) = ols(&xs, &ys);
    let fit = FitInfo {
        slope,
        intercept,
        slope_se,
        ci95_lo: slope - 2.0 * slope_se,
        ci95_hi: slope + 2.0 * slope_se,
        points: per_n.len(),
    };

    let min_mean = per_n.iter().map(|p| p.mean_aggregate).fold(f64::INFINITY, f64::min);
    let report = StudyReport {
        study: StudyEcho {
            config: spec.config.display().to_string(),
            n_ladder: spec.n_ladder.clone(),
            replicates: spec.replicates,
            grid: spec.grid,
            dt: ctx.reference.dt(),
            phi_library: spec.phi_library,
            components: spec.components.clone(),
            mode: match ctx.rate_mode {
                RateMode::Raw => "raw".to_string(),
                RateMode::Truncated { .. } => "truncated".to_string(),
            },
            c_hat: ctx.c_hat,
            master_seed: ctx.config.run.master_seed,
        },
        reference: ReferenceInfo {
            mass_residual: ctx.reference.mass_residual,
            sup_force: ctx.reference.sup_force,
            halving_delta: ctx.halving_delta,
            resolution_ok: ctx.halving_delta < 0.1 * min_mean,
        },
        per_n,
        fit,
        telemetry: StudyTelemetry {
            wall_seconds,
            total_candidates,
            total_accepted,
            total_events,
        },
    };
    Ok(StudyOutput { report, rows, warnings })
}
