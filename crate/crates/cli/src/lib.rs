//! Library half of the `sirv` binary. The subcommand implementations live
//! here so integration tests can drive them directly.

pub mod cli;
pub mod commands;
pub mod error;
pub mod output;
pub mod study;

use std::path::PathBuf;

use cli::Command;
use error::CliError;

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Validate { config } => {
            let summary = commands::validate(&config)?;
            println!("{summary}");
            Ok(())
        }
        Command::Sim { config, seed, out, mode, grid } => {
            commands::sim(commands::SimArgs { config, seed, out, mode, grid })?;
            Ok(())
        }
        Command::Meanfield { config, grid, dt, out, mode, halving, oracle } => {
            commands::meanfield(commands::MeanfieldArgs {
                config,
                grid,
                dt,
                out,
                mode,
                halving,
                oracle,
            })?;
            Ok(())
        }
        Command::Converge { config, out, threads } => converge(config, out, threads),
    }
}

fn converge(study_path: PathBuf, out: Option<PathBuf>, threads: usize) -> Result<(), CliError> {
    let (spec, base) = study::load_study(&study_path)?;
    let ctx = study::study_context(&spec, &base)?;
    let out_dir = output::resolve_out_dir(out)?;
    let result = study::run_study(&ctx, &spec, threads)?;
    for warning in &result.warnings {
        eprintln!("warning: {warning}");
    }
    output::write_study_csv(&out_dir.join("study.csv"), &result.rows)?;
    output::write_toml(&out_dir.join("report.toml"), &result.report)?;
    let fit = &result.report.fit;
    println!(
        "converge: {} ladder points, slope {:.3} (se {:.3}), wall {:.1}s",
        fit.points, fit.slope, fit.slope_se, result.report.telemetry.wall_seconds,
    );
    for p in &result.report.per_n {
        println!(
            "  N={}: mean {:.5} se {:.5} omega {:.2} ({} ok, {} failed)",
            p.n, p.mean_aggregate, p.se_aggregate, p.omega_fraction, p.replicates_ok, p.failures,
        );
    }
    Ok(())
}
