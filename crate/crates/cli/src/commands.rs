use std::fs;
use std::path::{Path, PathBuf};

use sirv_core::infectivity::InfectivityModel;
use sirv_core::kernel::{estimate_c_hat, omega_n_holds, Kernel};
use sirv_core::meanfield::{
    check_apriori_bounds, homogeneous_oracle, markov_sir_oracle, solve_stepping,
    MeanFieldSolution, ScalarSolution, SolveError,
};
use sirv_core::measure::default_library;
use sirv_core::model::{sample_population, DensitySpec, ExperimentConfig, TruncationMode};
use sirv_core::sim::{simulate, truncated_mode, RateMode};
use sirv_core::{MeasureComponent, SpatialGrid};

use crate::cli::ModeArg;
use crate::error::CliError;
use crate::output::{
    self, AprioriToml, ArtifactInfo, FloorInfo, HalvingToml, OracleToml, SimInvocation,
    SimManifest,
};

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|source| CliError::Read { path: path.to_path_buf(), source })?;
    toml::from_str(&text)
        .map_err(|e| CliError::Parse { path: path.to_path_buf(), message: e.to_string() })
}

fn mode_tag(mode: TruncationMode) -> &'static str {
    match mode {
        TruncationMode::Raw => "raw",
        TruncationMode::Truncated => "truncated",
    }
}

pub fn validate(config_path: &Path) -> Result<String, CliError> {
    let config = load_config(config_path)?;
    config.ensure_valid()?;
    let counts = config
        .initial_condition
        .counts(config.run.population)
        .expect("a valid config rounds to nonnegative counts");
    Ok(format!(
        "ok: population {} (S {}, I {}, R {}), dimension {}, gamma {}, \
         horizon {}, lambda_star {}, {} snapshots, mode {}",
        config.run.population,
        counts[0],
        counts[1],
        counts[2],
        config.domain.dimension(),
        config.run.gamma,
        config.run.horizon,
        config.lambda_star(),
        config.snapshots().len(),
        mode_tag(config.run.truncation),
    ))
}

pub struct SimArgs {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub mode: Option<ModeArg>,
    pub grid: usize,
}

pub fn sim(args: SimArgs) -> Result<PathBuf, CliError> {
    let mut config = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.run.master_seed = seed;
    }
    if let Some(mode) = args.mode {
        config.run.truncation = mode.into();
    }
    config.ensure_valid()?;
    let out_dir = output::resolve_out_dir(args.out)?;
    let probe_per_axis = args.grid.max(3);

    let pop = sample_population(&config)?;
    let rate_mode = match config.run.truncation {
        TruncationMode::Raw => RateMode::Raw,
        TruncationMode::Truncated => truncated_mode(&config, probe_per_axis)?,
    };
    let sim_out = simulate(&config, &pop, rate_mode)?;

    let density = config.total_density()?;
    let c_hat = estimate_c_hat(&config.kernel, &config.domain, &density, probe_per_axis);
    let probe_grid = SpatialGrid::uniform(&config.domain, probe_per_axis);
    let omega = omega_n_holds(&config.kernel, &pop, c_hat, &probe_grid);

    output::write_events_csv(&out_dir.join("events.csv"), &pop, &sim_out.log)?;
    let table = sim_out.trajectory.pairings(&default_library(config.domain.dimension()));
    output::write_pairings_csv(&out_dir.join("snapshots.csv"), &table)?;

    let manifest = SimManifest {
        artifact: ArtifactInfo::current(),
        invocation: SimInvocation {
            subcommand: "sim",
            seed: config.run.master_seed,
            mode: mode_tag(config.run.truncation).to_string(),
            probe_per_axis,
        },
        floor: FloorInfo { c_hat, omega_holds: omega, probe_per_axis },
        config: &config,
    };
    output::write_toml(&out_dir.join("manifest.toml"), &manifest)?;

    let t = &sim_out.telemetry;
    println!(
        "sim: {} events ({} infections), final S/I/R {}/{}/{}, \
         {} candidates ({} accepted) in {:.3}s, omega_holds {}",
        sim_out.log.events.len(),
        sim_out.log.infections.len(),
        t.final_counts[0],
        t.final_counts[1],
        t.final_counts[2],
        t.candidates,
        t.accepted,
        t.sim_seconds,
        omega,
    );
    Ok(out_dir)
}

pub struct MeanfieldArgs {
    pub config: PathBuf,
    pub grid: usize,
    pub dt: f64,
    pub out: Option<PathBuf>,
    pub mode: Option<ModeArg>,
    pub halving: bool,
    pub oracle: bool,
}

/// Sup over snapshots, nodes and components of the field difference.
/// Snapshot times agree across step sizes by construction.
pub fn field_sup_diff(a: &MeanFieldSolution, b: &MeanFieldSolution) -> f64 {
    let mut worst = 0.0f64;
    for comp in MeasureComponent::ALL {
        for (ra, rb) in a.field(comp).iter().zip(b.field(comp)) {
            for (x, y) in ra.iter().zip(rb) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    worst
}

pub fn meanfield(args: MeanfieldArgs) -> Result<PathBuf, CliError> {
    let mut config = load_config(&args.config)?;
    if let Some(mode) = args.mode {
        config.run.truncation = mode.into();
    }
    config.ensure_valid()?;
    let out_dir = output::resolve_out_dir(args.out)?;

    let sol = solve_stepping(&config, args.grid, args.dt)?;
    output::write_solution_csv(&out_dir.join("solution.csv"), &sol)?;
    let table = sol
        .pairings(&default_library(config.domain.dimension()))
        .expect("the default test-function library is not empty");
    output::write_pairings_csv(&out_dir.join("pairings.csv"), &table)?;

    let report = check_apriori_bounds(&sol, &config);
    output::write_toml(&out_dir.join("apriori.toml"), &AprioriToml::new(&report, &sol))?;

    if args.halving {
        let half = solve_stepping(&config, args.grid, args.dt / 2.0)?;
        let quarter = solve_stepping(&config, args.grid, args.dt / 4.0)?;
        let diff_half = field_sup_diff(&sol, &half);
        let diff_quarter = field_sup_diff(&half, &quarter);
        let halving = HalvingToml {
            dt: sol.dt(),
            diff_half,
            diff_quarter,
            ratio: diff_half / diff_quarter,
        };
        output::write_toml(&out_dir.join("halving.toml"), &halving)?;
    }

    if args.oracle {
        let oracle = scalar_oracle(&config, sol.dt())?;
        output::write_oracle_csv(&out_dir.join("oracle.csv"), &oracle)?;
        let mut err = [0.0f64; 3];
        for (k, &t) in sol.scalar_times.iter().enumerate() {
            let o = ((t / oracle.dt).round() as usize).min(oracle.times.len() - 1);
            err[0] = err[0].max((sol.s_bar[k] - oracle.s[o]).abs());
            err[1] = err[1].max((sol.i_bar[k] - oracle.i[o]).abs());
            err[2] = err[2].max((sol.r_bar[k] - oracle.r[o]).abs());
        }
        let toml = OracleToml {
            dt_oracle: oracle.dt,
            sup_err_s: err[0],
            sup_err_i: err[1],
            sup_err_r: err[2],
        };
        output::write_toml(&out_dir.join("oracle.toml"), &toml)?;
    }

    println!(
        "meanfield: {} nodes, dt {}, mass residual {:.3e}, sup force {:.4}, \
         a priori bounds {}",
        sol.grid().len(),
        sol.dt(),
        sol.mass_residual,
        sol.sup_force,
        if report.all_ok() { "ok" } else { "VIOLATED" },
    );
    Ok(out_dir)
}

/// Independent scalar reference for spatially homogeneous configs. A shared
/// exponential course law collapses to the classical SIR ODE, solved
/// cheaply by RK4 at `dt / 10`; any other law falls back to the scalar
/// Volterra march at `dt / 2`, whose cost grows as `(horizon / dt)^2`.
fn scalar_oracle(config: &ExperimentConfig, dt: f64) -> Result<ScalarSolution, SolveError> {
    let shared_markov = match (&config.infectivity.initial, &config.infectivity.new) {
        (
            InfectivityModel::Markov { level: l0, rate: r0 },
            InfectivityModel::Markov { level: l1, rate: r1 },
        ) if l0 == l1 && r0 == r1 => Some((*l0, *r0)),
        _ => None,
    };
    let ic = &config.initial_condition;
    let uniform = |d: &DensitySpec| matches!(d, DensitySpec::Uniform);
    let homogeneous =
        uniform(&ic.density_s) && uniform(&ic.density_i) && uniform(&ic.density_r);
    match (shared_markov, &config.kernel) {
        (Some((level, rate)), Kernel::Constant { value }) if homogeneous => {
            let kappa = value.powf(1.0 - config.run.gamma);
            Ok(markov_sir_oracle(
                kappa * level,
                rate,
                ic.frac_s,
                ic.frac_i,
                ic.frac_r,
                dt / 10.0,
                config.run.horizon,
            ))
        }
        _ => homogeneous_oracle(config, dt / 2.0),
    }
}
