//! Deterministic solver for the large-population limit: densities
//! `µS, µF, µI, µR` and the force field `Γ` on a spatial grid over `[0, T]`.
//!
//! The system is a Volterra integral system in time coupled through a
//! spatial integral operator. The march is explicit: `µF` at a node needs
//! only strictly earlier history. Susceptible mass is always written as
//! `µS(t) = µS(0) · exp(-cumulative force)`, and the per-step infected
//! mass `δ_k = µS(t_k) - µS(t_{k+1})` is what enters every convolution, so
//! `µS + µI + µR` telescopes back to the initial density up to float
//! rounding regardless of step size.

use crate::grid::SpatialGrid;
use crate::kernel::{estimate_c_hat, limit_denominators, phi_trunc, Kernel};
use crate::measure::{
    exact_sum, trajectory_distance, MeasureComponent, MeasureError, PairingTable, TestFunction,
    TrajectoryDistance,
};
use crate::model::{ConfigError, Density, ExperimentConfig, TruncationMode};
use crate::sim::EpidemicTrajectory;

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("time step must be positive and at most the horizon {horizon}, got {dt}")]
    BadStep { dt: f64, horizon: f64 },
    #[error("grid must have at least one node per axis")]
    EmptyGrid,
    #[error("contact density is not positive on the grid: min {min:e} at node {node}")]
    DenominatorVanishes { min: f64, node: usize },
    #[error(
        "fixed-point iteration still at residual {residual:e} after {iterations} iterations \
         (tolerance {tol:e})"
    )]
    NoConvergence { iterations: usize, residual: f64, tol: f64 },
    #[error("the homogeneous reduction requires {0}")]
    NotHomogeneous(&'static str),
}

/// Scalar time series from the spatially homogeneous reduction.
#[derive(Clone, Debug)]
pub struct ScalarSolution {
    pub dt: f64,
    pub times: Vec<f64>,
    pub s: Vec<f64>,
    pub i: Vec<f64>,
    pub r: Vec<f64>,
    pub f: Vec<f64>,
}

/// Starting trajectory for the fixed-point iteration.
#[derive(Clone, Copy, Debug)]
pub enum PicardGuess {
    /// Zero force everywhere: nobody transmits.
    Zero,
    /// Constant force field at the given level.
    Constant(f64),
    /// Solve by explicit stepping first and start from its force; the
    /// iteration then only confirms self-consistency.
    Stepping,
}

#[derive(Clone, Debug)]
pub struct PicardStats {
    pub iterations: usize,
    /// Sup-norm change of the force trajectory after each iteration.
    pub residuals: Vec<f64>,
    /// Worst successive residual ratio; below one means contraction.
    pub contraction: Option<f64>,
}

/// Everything shared by the time-stepping and fixed-point solvers:
/// quadrature grid, initial densities, denominator field and the
/// interaction matrix.
struct Discretization {
    grid: SpatialGrid,
    dt: f64,
    steps: usize,
    snap_indices: Vec<usize>,
    snap_alignment_error: f64,
    mu_s0: Vec<f64>,
    mu_i0: Vec<f64>,
    mu_r0: Vec<f64>,
    mu_bar: Vec<f64>,
    denominators: Vec<f64>,
    c_hat: Option<f64>,
    /// `m[x*G + g] = w_g · K(x_x, y_g) / denom(y_g)`; the force field is
    /// this matrix applied to `µF`.
    interaction: Vec<f64>,
    /// `λ̄⁰(k·dt)` and `λ̄(k·dt)` for `k = 0..=steps`.
    lag_initial: Vec<f64>,
    lag_new: Vec<f64>,
    /// History beyond this many steps contributes nothing to `µF`.
    lag_cutoff_steps: usize,
    lambda_star: f64,
}

impl Discretization {
    fn build(config: &ExperimentConfig, per_axis: usize, dt: f64) -> Result<Self, SolveError> {
        config.ensure_valid()?;
        let horizon = config.run.horizon;
        if !(dt > 0.0 && dt <= horizon) {
            return Err(SolveError::BadStep { dt, horizon });
        }
        if per_axis == 0 {
            return Err(SolveError::EmptyGrid);
        }
        let grid = SpatialGrid::uniform(&config.domain, per_axis);
        let g_count = grid.len();

        // snap the step count so the last node lands exactly on the horizon
        let steps = ((horizon / dt).round() as usize).max(1);
        let dt = horizon / steps as f64;

        let compile = |spec, which| -> Result<Density, SolveError> {
            Density::compile(spec, &config.domain)
                .map_err(|message| {
                    ConfigError::Invalid(vec![crate::model::Violation::Density { which, message }])
                })
                .map_err(SolveError::from)
        };
        let ic = &config.initial_condition;
        let d_s = compile(&ic.density_s, "density_s")?;
        let d_i = compile(&ic.density_i, "density_i")?;
        let d_r = compile(&ic.density_r, "density_r")?;
        let mu_s0 = grid.map(|x| ic.frac_s * d_s.eval(x));
        let mu_i0 = grid.map(|x| ic.frac_i * d_i.eval(x));
        let mu_r0 = grid.map(|x| ic.frac_r * d_r.eval(x));
        let mu_bar: Vec<f64> =
            (0..g_count).map(|g| mu_s0[g] + mu_i0[g] + mu_r0[g]).collect();

        let denominators = limit_denominators(&config.kernel, &grid, &mu_bar, &grid);
        let (min_d, min_node) = denominators
            .iter()
            .copied()
            .zip(0..)
            .fold((f64::INFINITY, 0usize), |acc, (d, g)| if d < acc.0 { (d, g) } else { acc });
        if !(min_d > 0.0) {
            return Err(SolveError::DenominatorVanishes { min: min_d, node: min_node });
        }

        let gamma = config.run.gamma;
        let c_hat = match config.run.truncation {
            TruncationMode::Raw => None,
            TruncationMode::Truncated => {
                let density = config.total_density()?;
                Some(estimate_c_hat(&config.kernel, &config.domain, &density, per_axis.max(9)))
            }
        };
        let denom_pow = |d: f64| match c_hat {
            None => d.powf(gamma),
            Some(c) => phi_trunc(d, c, gamma),
        };

        let weight = grid.weight();
        let mut interaction = vec![0.0; g_count * g_count];
        for x in 0..g_count {
            let row = &mut interaction[x * g_count..(x + 1) * g_count];
            for (g, slot) in row.iter_mut().enumerate() {
                *slot = weight * config.kernel.eval(grid.node(x), grid.node(g))
                    / denom_pow(denominators[g]);
            }
        }

        let mut snap_indices = Vec::new();
        let mut snap_alignment_error = 0.0f64;
        for t in config.snapshots() {
            let k = ((t / dt).round() as usize).min(steps);
            snap_alignment_error = snap_alignment_error.max((k as f64 * dt - t).abs());
            snap_indices.push(k);
        }

        let lag_initial: Vec<f64> =
            (0..=steps).map(|k| config.infectivity.initial.mean_lambda(k as f64 * dt)).collect();
        let lag_new: Vec<f64> =
            (0..=steps).map(|k| config.infectivity.new.mean_lambda(k as f64 * dt)).collect();
        let cutoff = config.infectivity.new.mean_lambda_cutoff();
        let lag_cutoff_steps = if cutoff.is_finite() {
            ((cutoff / dt).ceil() as usize).saturating_add(1).min(steps + 1)
        } else {
            steps + 1
        };

        Ok(Discretization {
            grid,
            dt,
            steps,
            snap_indices,
            snap_alignment_error,
            mu_s0,
            mu_i0,
            mu_r0,
            mu_bar,
            denominators,
            c_hat,
            interaction,
            lag_initial,
            lag_new,
            lag_cutoff_steps,
            lambda_star: config.lambda_star(),
        })
    }

    /// `µF` at step `k` from the infected-mass history `delta`
    /// (`delta[m*G..]` covers `[t_m, t_{m+1})`), written into `out`.
    fn mu_f_at(&self, k: usize, delta: &[f64], out: &mut [f64]) {
        let g_count = self.grid.len();
        let lam0 = self.lag_initial[k];
        for (g, slot) in out.iter_mut().enumerate() {
            *slot = lam0 * self.mu_i0[g];
        }
        let start = k.saturating_sub(self.lag_cutoff_steps);
        for m in start..k {
            let c = self.lag_new[k - m];
            if c == 0.0 {
                continue;
            }
            let row = &delta[m * g_count..(m + 1) * g_count];
            for (slot, d) in out.iter_mut().zip(row) {
                *slot += c * d;
            }
        }
    }

    /// Force field from `µF`: one matrix row dot product per node.
    fn force_from_mu_f(&self, mu_f: &[f64], out: &mut [f64]) {
        let g_count = self.grid.len();
        for (x, slot) in out.iter_mut().enumerate() {
            let row = &self.interaction[x * g_count..(x + 1) * g_count];
            let mut acc = 0.0;
            for (m, f) in row.iter().zip(mu_f) {
                acc += m * f;
            }
            *slot = acc;
        }
    }

    /// Susceptible decay and per-step infected mass from a force
    /// trajectory: `µS(t_k) = µS(0)·exp(-cum_k)`. Shared verbatim by both
    /// solvers so their outputs coincide bit-for-bit on a fixed point.
    fn mass_from_force(&self, force: &[f64], delta: &mut [f64]) -> f64 {
        let g_count = self.grid.len();
        let mut cum = vec![0.0f64; g_count];
        let mut mu_s: Vec<f64> = self.mu_s0.clone();
        let mut monotone_min = 0.0f64;
        for k in 0..self.steps {
            let force_k = &force[k * g_count..(k + 1) * g_count];
            let slot = &mut delta[k * g_count..(k + 1) * g_count];
            for g in 0..g_count {
                cum[g] += force_k[g] * self.dt;
                let next = self.mu_s0[g] * (-cum[g]).exp();
                let d = mu_s[g] - next;
                monotone_min = monotone_min.min(d);
                slot[g] = d.max(0.0);
                mu_s[g] = next;
            }
        }
        monotone_min
    }
}

/// Solution fields at the configured snapshot times plus scalar series at
/// every time step.
#[derive(Clone, Debug)]
pub struct MeanFieldSolution {
    grid: SpatialGrid,
    dt: f64,
    snapshot_times: Vec<f64>,
    /// Worst gap between a requested snapshot time and its grid node.
    pub snap_alignment_error: f64,
    mu_s: Vec<Vec<f64>>,
    mu_f: Vec<Vec<f64>>,
    mu_i: Vec<Vec<f64>>,
    mu_r: Vec<Vec<f64>>,
    force: Vec<Vec<f64>>,
    /// Time-integrated force at each snapshot; `µS` is exactly
    /// `µS(0) · exp(-cumulative_force)`.
    cumulative_force: Vec<Vec<f64>>,
    mu_s0: Vec<f64>,
    mu_bar: Vec<f64>,
    denominators: Vec<f64>,
    c_hat: Option<f64>,
    /// Scalar series on the full step grid `k·dt`.
    pub scalar_times: Vec<f64>,
    pub s_bar: Vec<f64>,
    pub i_bar: Vec<f64>,
    pub r_bar: Vec<f64>,
    pub f_bar: Vec<f64>,
    /// Sup over all steps and nodes, not just snapshots.
    pub sup_mu_f: f64,
    pub sup_force: f64,
    /// Most negative raw `µS(t_k) - µS(t_{k+1})` seen (float guard; the
    /// exact value is nonnegative).
    pub monotone_defect: f64,
    /// Max over snapshots and nodes of `|µS + µI + µR - µ̄|`.
    pub mass_residual: f64,
    pub lambda_star: f64,
}

impl MeanFieldSolution {
    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn snapshot_times(&self) -> &[f64] {
        &self.snapshot_times
    }

    pub fn denominators(&self) -> &[f64] {
        &self.denominators
    }

    pub fn c_hat(&self) -> Option<f64> {
        self.c_hat
    }

    pub fn mu_bar(&self) -> &[f64] {
        &self.mu_bar
    }

    pub fn field(&self, which: MeasureComponent) -> &[Vec<f64>] {
        match which {
            MeasureComponent::S => &self.mu_s,
            MeasureComponent::F => &self.mu_f,
            MeasureComponent::I => &self.mu_i,
            MeasureComponent::R => &self.mu_r,
        }
    }

    pub fn force_field(&self) -> &[Vec<f64>] {
        &self.force
    }

    pub fn cumulative_force(&self) -> &[Vec<f64>] {
        &self.cumulative_force
    }

    pub fn mu_s0(&self) -> &[f64] {
        &self.mu_s0
    }

    /// `(µ_component(t_snap), φ)` by grid quadrature.
    pub fn pair(&self, snap: usize, which: MeasureComponent, phi: &TestFunction) -> f64 {
        let vals = &self.field(which)[snap];
        exact_sum((0..self.grid.len()).map(|g| phi.eval(self.grid.node(g)) * vals[g]))
            * self.grid.weight()
    }

    /// Pairing at an arbitrary time: exact at a stored snapshot, linear
    /// interpolation between the neighbours otherwise. The flag reports
    /// whether interpolation happened.
    pub fn pair_at(
        &self,
        t: f64,
        which: MeasureComponent,
        phi: &TestFunction,
    ) -> Result<(f64, bool), MeasureError> {
        let times = &self.snapshot_times;
        if let Some(idx) = times.iter().position(|s| (s - t).abs() <= 1e-9) {
            return Ok((self.pair(idx, which, phi), false));
        }
        if t < times[0] || t > *times.last().expect("snapshots are never empty") {
            return Err(MeasureError::UnknownSnapshot { t });
        }
        let hi = times.partition_point(|&s| s < t);
        let lo = hi - 1;
        let w = (t - times[lo]) / (times[hi] - times[lo]);
        let a = self.pair(lo, which, phi);
        let b = self.pair(hi, which, phi);
        Ok((a + w * (b - a), true))
    }

    /// Pairings on an arbitrary time axis; the flag reports whether any
    /// value needed interpolation.
    pub fn pairings_at(
        &self,
        times: &[f64],
        phis: &[TestFunction],
    ) -> Result<(PairingTable, bool), MeasureError> {
        if phis.is_empty() {
            return Err(MeasureError::EmptyLibrary);
        }
        let comps = MeasureComponent::ALL.to_vec();
        let mut values = Vec::with_capacity(times.len() * comps.len() * phis.len());
        let mut interpolated = false;
        for &t in times {
            for &comp in &comps {
                for phi in phis {
                    let (v, interp) = self.pair_at(t, comp, phi)?;
                    interpolated |= interp;
                    values.push(v);
                }
            }
        }
        let names = phis.iter().map(|f| f.name()).collect();
        Ok((PairingTable::new(times.to_vec(), comps, names, values), interpolated))
    }

    /// Pairings on the solution's own snapshot grid.
    pub fn pairings(&self, phis: &[TestFunction]) -> Result<PairingTable, MeasureError> {
        Ok(self.pairings_at(&self.snapshot_times.clone(), phis)?.0)
    }
}

/// Sup-over-time pairing distance between an empirical run and the limit
/// solution, per component and test function.
pub fn empirical_vs_meanfield(
    emp: &EpidemicTrajectory,
    mf: &MeanFieldSolution,
    phis: &[TestFunction],
) -> Result<TrajectoryDistance, MeasureError> {
    if phis.is_empty() {
        return Err(MeasureError::EmptyLibrary);
    }
    let times = emp.times();
    let (mf_table, _) = mf.pairings_at(&times, phis)?;
    trajectory_distance(&emp.pairings(phis), &mf_table)
}

/// The explicit march: the system is lower-triangular in time, so one
/// forward sweep solves it. Returns the force and infected-mass
/// trajectories plus the worst raw monotonicity defect.
fn march(disc: &Discretization) -> (Vec<f64>, Vec<f64>, f64) {
    let g_count = disc.grid.len();
    let steps = disc.steps;
    let mut force = vec![0.0f64; (steps + 1) * g_count];
    let mut delta = vec![0.0f64; steps * g_count];
    let mut mu_f = vec![0.0f64; g_count];
    let mut cum = vec![0.0f64; g_count];
    let mut mu_s: Vec<f64> = disc.mu_s0.clone();
    let mut monotone_defect = 0.0f64;

    for k in 0..=steps {
        disc.mu_f_at(k, &delta, &mut mu_f);
        disc.force_from_mu_f(&mu_f, &mut force[k * g_count..(k + 1) * g_count]);
        if k == steps {
            break;
        }
        let force_k = &force[k * g_count..(k + 1) * g_count];
        let slot = &mut delta[k * g_count..(k + 1) * g_count];
        for g in 0..g_count {
            cum[g] += force_k[g] * disc.dt;
            let next = disc.mu_s0[g] * (-cum[g]).exp();
            let d = mu_s[g] - next;
            monotone_defect = monotone_defect.min(d);
            slot[g] = d.max(0.0);
            mu_s[g] = next;
        }
    }
    (force, delta, monotone_defect)
}

/// Explicit time-marching solve on a `per_axis`-per-dimension midpoint
/// grid. The truncation mode comes from the config.
pub fn solve_stepping(
    config: &ExperimentConfig,
    per_axis: usize,
    dt: f64,
) -> Result<MeanFieldSolution, SolveError> {
    let disc = Discretization::build(config, per_axis, dt)?;
    let (force, delta, monotone_defect) = march(&disc);
    Ok(finalize(config, disc, force, delta, monotone_defect))
}

/// Fixed-point iteration on the force trajectory. Each sweep maps a force
/// history to the susceptible decay it implies, then to the `µF` and force
/// that history generates; a solution is a fixed point of this map.
pub fn solve_picard(
    config: &ExperimentConfig,
    per_axis: usize,
    dt: f64,
    tol: f64,
    max_iter: usize,
    guess: PicardGuess,
) -> Result<(MeanFieldSolution, PicardStats), SolveError> {
    assert!(tol > 0.0, "tolerance must be positive");
    let disc = Discretization::build(config, per_axis, dt)?;
    let g_count = disc.grid.len();
    let steps = disc.steps;

    let mut force: Vec<f64> = match guess {
        PicardGuess::Zero => vec![0.0; (steps + 1) * g_count],
        PicardGuess::Constant(level) => vec![level; (steps + 1) * g_count],
        PicardGuess::Stepping => march(&disc).0,
    };

    let mut delta = vec![0.0f64; steps * g_count];
    let mut mu_f = vec![0.0f64; g_count];
    let mut next_force = vec![0.0f64; (steps + 1) * g_count];
    let mut residuals = Vec::new();
    let mut converged = false;

    for _ in 0..max_iter {
        disc.mass_from_force(&force, &mut delta);
        for k in 0..=steps {
            disc.mu_f_at(k, &delta, &mut mu_f);
            disc.force_from_mu_f(&mu_f, &mut next_force[k * g_count..(k + 1) * g_count]);
        }
        let residual = force
            .iter()
            .zip(&next_force)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        residuals.push(residual);
        std::mem::swap(&mut force, &mut next_force);
        if residual < tol {
            converged = true;
            break;
        }
    }

    if !converged {
        return Err(SolveError::NoConvergence {
            iterations: residuals.len(),
            residual: *residuals.last().unwrap_or(&f64::NAN),
            tol,
        });
    }

    // the returned fields must correspond to the returned force exactly
    let monotone_defect = disc.mass_from_force(&force, &mut delta);
    let contraction = residuals
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))));
    let stats = PicardStats { iterations: residuals.len(), residuals, contraction };
    Ok((finalize(config, disc, force, delta, monotone_defect), stats))
}

/// Assemble the public solution from a force trajectory and its infected
/// mass history: snapshot fields, scalar series, sups and the mass
/// residual.
fn finalize(
    config: &ExperimentConfig,
    disc: Discretization,
    force: Vec<f64>,
    delta: Vec<f64>,
    monotone_defect: f64,
) -> MeanFieldSolution {
    let g_count = disc.grid.len();
    let steps = disc.steps;
    let dt = disc.dt;

    // scalar ingredients: per-step infected mass and susceptible total
    let big_delta: Vec<f64> =
        (0..steps).map(|m| disc.grid.integrate(&delta[m * g_count..(m + 1) * g_count])).collect();
    let s0_total = disc.grid.integrate(&disc.mu_s0);
    let i0_total = disc.grid.integrate(&disc.mu_i0);
    let r0_total = disc.grid.integrate(&disc.mu_r0);

    let initial_law = &config.infectivity.initial;
    let new_law = &config.infectivity.new;
    let f0_cdf: Vec<f64> = (0..=steps).map(|k| initial_law.duration_cdf(k as f64 * dt)).collect();
    let f_cdf: Vec<f64> = (0..=steps).map(|k| new_law.duration_cdf(k as f64 * dt)).collect();

    let mut s_bar = Vec::with_capacity(steps + 1);
    let mut i_bar = Vec::with_capacity(steps + 1);
    let mut r_bar = Vec::with_capacity(steps + 1);
    let mut f_bar = Vec::with_capacity(steps + 1);
    let mut cum_infected = 0.0f64;
    for k in 0..=steps {
        s_bar.push(s0_total - cum_infected);
        let mut inf_i = 0.0;
        let mut inf_r = 0.0;
        let mut inf_f = 0.0;
        let start = k.saturating_sub(disc.lag_cutoff_steps);
        for m in 0..k {
            let lag = k - m;
            inf_i += (1.0 - f_cdf[lag]) * big_delta[m];
            inf_r += f_cdf[lag] * big_delta[m];
            if m >= start {
                inf_f += disc.lag_new[lag] * big_delta[m];
            }
        }
        i_bar.push((1.0 - f0_cdf[k]) * i0_total + inf_i);
        r_bar.push(r0_total + f0_cdf[k] * i0_total + inf_r);
        f_bar.push(disc.lag_initial[k] * i0_total + inf_f);
        if k < steps {
            cum_infected += big_delta[k];
        }
    }

    // cumulative force at the snapshot indices, accumulated exactly as the
    // march does, so the stored µS is the literal exponential formula
    debug_assert!(disc.snap_indices.windows(2).all(|w| w[0] <= w[1]));
    let mut cum_snaps: Vec<Vec<f64>> = Vec::with_capacity(disc.snap_indices.len());
    {
        let mut cum = vec![0.0f64; g_count];
        let mut next = disc.snap_indices.iter().peekable();
        for k in 0..=steps {
            while next.peek() == Some(&&k) {
                next.next();
                cum_snaps.push(cum.clone());
            }
            if k == steps {
                break;
            }
            let force_k = &force[k * g_count..(k + 1) * g_count];
            for g in 0..g_count {
                cum[g] += force_k[g] * dt;
            }
        }
    }

    // snapshot fields
    let mut mu_s_snaps = Vec::with_capacity(disc.snap_indices.len());
    let mut mu_f_snaps = Vec::with_capacity(disc.snap_indices.len());
    let mut mu_i_snaps = Vec::with_capacity(disc.snap_indices.len());
    let mut mu_r_snaps = Vec::with_capacity(disc.snap_indices.len());
    let mut force_snaps = Vec::with_capacity(disc.snap_indices.len());
    let mut cum_out = Vec::with_capacity(disc.snap_indices.len());
    let mut mass_residual = 0.0f64;
    let mut mu_f_buf = vec![0.0f64; g_count];
    for (pos, &k) in disc.snap_indices.iter().enumerate() {
        let cum_k = &cum_snaps[pos];
        let mu_s_k: Vec<f64> =
            (0..g_count).map(|g| disc.mu_s0[g] * (-cum_k[g]).exp()).collect();
        let mut mu_i_k: Vec<f64> =
            (0..g_count).map(|g| (1.0 - f0_cdf[k]) * disc.mu_i0[g]).collect();
        let mut mu_r_k: Vec<f64> =
            (0..g_count).map(|g| disc.mu_r0[g] + f0_cdf[k] * disc.mu_i0[g]).collect();
        for m in 0..k {
            let lag = k - m;
            let row = &delta[m * g_count..(m + 1) * g_count];
            for g in 0..g_count {
                mu_i_k[g] += (1.0 - f_cdf[lag]) * row[g];
                mu_r_k[g] += f_cdf[lag] * row[g];
            }
        }
        disc.mu_f_at(k, &delta, &mut mu_f_buf);
        for g in 0..g_count {
            debug_assert!(mu_s_k[g] >= 0.0 && mu_i_k[g] >= -1e-15 && mu_r_k[g] >= 0.0);
            let r = (mu_s_k[g] + mu_i_k[g] + mu_r_k[g] - disc.mu_bar[g]).abs();
            mass_residual = mass_residual.max(r);
        }
        mu_s_snaps.push(mu_s_k);
        mu_i_snaps.push(mu_i_k);
        mu_r_snaps.push(mu_r_k);
        mu_f_snaps.push(mu_f_buf.clone());
        force_snaps.push(force[k * g_count..(k + 1) * g_count].to_vec());
        cum_out.push(cum_k.clone());
    }

    // sups over the whole march, not just snapshots
    let mut sup_mu_f = 0.0f64;
    for k in 0..=steps {
        disc.mu_f_at(k, &delta, &mut mu_f_buf);
        sup_mu_f = mu_f_buf.iter().copied().fold(sup_mu_f, f64::max);
    }
    let sup_force = force.iter().copied().fold(0.0f64, f64::max);

    let snapshot_times: Vec<f64> = disc.snap_indices.iter().map(|&k| k as f64 * dt).collect();
    let scalar_times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();

    MeanFieldSolution {
        grid: disc.grid,
        dt,
        snapshot_times,
        snap_alignment_error: disc.snap_alignment_error,
        mu_s: mu_s_snaps,
        mu_f: mu_f_snaps,
        mu_i: mu_i_snaps,
        mu_r: mu_r_snaps,
        force: force_snaps,
        cumulative_force: cum_out,
        mu_s0: disc.mu_s0,
        mu_bar: disc.mu_bar,
        denominators: disc.denominators,
        c_hat: disc.c_hat,
        scalar_times,
        s_bar,
        i_bar,
        r_bar,
        f_bar,
        sup_mu_f,
        sup_force,
        monotone_defect,
        mass_residual,
        lambda_star: disc.lambda_star,
    }
}

/// Outcome of the a priori sanity checks on a solved trajectory.
#[derive(Clone, Copy, Debug)]
pub struct AprioriReport {
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
}

impl AprioriReport {
    pub fn all_ok(&self) -> bool {
        self.mass_ok && self.denominator_ok && self.force_ok && self.monotone_s_ok
    }
}

/// Check the structural bounds every solution must satisfy: susceptible
/// mass below the total density, positive contact density, exponential
/// envelope on the force, monotone susceptible decay.
pub fn check_apriori_bounds(sol: &MeanFieldSolution, config: &ExperimentConfig) -> AprioriReport {
    let mu_bar_sup = sol.mu_bar.iter().copied().fold(0.0f64, f64::max);
    let mass_sup_observed = sol
        .field(MeasureComponent::S)
        .iter()
        .flat_map(|snap| snap.iter().copied())
        .fold(0.0f64, f64::max);

    let denominator_inf = sol.denominators.iter().copied().fold(f64::INFINITY, f64::min);

    // envelope constant: kernel mass against the inverse denominator,
    // inflated so C strictly dominates the total density
    let gamma = config.run.gamma;
    let grid = sol.grid();
    let kernel_mass = (0..grid.len())
        .map(|x| {
            (0..grid.len())
                .map(|g| {
                    let inv = match sol.c_hat {
                        None => 1.0 / sol.denominators[g].powf(gamma),
                        Some(c) => 1.0 / phi_trunc(sol.denominators[g], c, gamma),
                    };
                    grid.weight() * config.kernel.eval(grid.node(x), grid.node(g)) * inv
                })
                .sum::<f64>()
        })
        .fold(0.0f64, f64::max);
    let force_constant = mu_bar_sup * (1.0 + kernel_mass);
    let horizon = config.run.horizon;
    let force_bound =
        sol.lambda_star * force_constant * (sol.lambda_star * force_constant * horizon).exp();

    AprioriReport {
        mass_sup_observed,
        mass_sup_bound: mu_bar_sup,
        mass_ok: mass_sup_observed <= mu_bar_sup * (1.0 + 1e-12),
        denominator_inf,
        denominator_ok: denominator_inf > 0.0,
        force_sup_observed: sol.sup_mu_f,
        force_constant,
        force_bound,
        force_ok: sol.sup_mu_f <= force_bound,
        monotone_s_ok: sol.monotone_defect >= -1e-12,
    }
}

/// Scalar Volterra march for spatially homogeneous configurations
/// (constant kernel, uniform initial densities): an oracle with its own,
/// deliberately different discretization (plain Euler and rectangle
/// sums on raw products).
pub fn homogeneous_oracle(
    config: &ExperimentConfig,
    dt: f64,
) -> Result<ScalarSolution, SolveError> {
    config.ensure_valid()?;
    let kappa = match config.kernel {
        Kernel::Constant { value } => value.powf(1.0 - config.run.gamma),
        _ => return Err(SolveError::NotHomogeneous("a constant kernel")),
    };
    let ic = &config.initial_condition;
    let uniform = |d: &crate::model::DensitySpec| matches!(d, crate::model::DensitySpec::Uniform);
    if !(uniform(&ic.density_s) && uniform(&ic.density_i) && uniform(&ic.density_r)) {
        return Err(SolveError::NotHomogeneous("spatially uniform initial densities"));
    }
    let horizon = config.run.horizon;
    if !(dt > 0.0 && dt <= horizon) {
        return Err(SolveError::BadStep { dt, horizon });
    }
    let steps = ((horizon / dt).round() as usize).max(1);
    let dt = horizon / steps as f64;
    let initial_law = &config.infectivity.initial;
    let new_law = &config.infectivity.new;

    let s0 = ic.frac_s;
    let i0 = ic.frac_i;
    let r0 = ic.frac_r;
    let mut s = Vec::with_capacity(steps + 1);
    let mut f = Vec::with_capacity(steps + 1);
    let mut i_series = Vec::with_capacity(steps + 1);
    let mut r_series = Vec::with_capacity(steps + 1);
    let mut times = Vec::with_capacity(steps + 1);
    s.push(s0);
    for k in 0..=steps {
        let t = k as f64 * dt;
        times.push(t);
        // left-rectangle sums over the raw product history κ·F(s)·S(s)
        let mut conv_f = 0.0;
        let mut conv_i = 0.0;
        let mut conv_r = 0.0;
        for m in 0..k {
            let lag = (k - m) as f64 * dt;
            let flow = kappa * f[m] * s[m] * dt;
            conv_f += new_law.mean_lambda(lag) * flow;
            let cdf = new_law.duration_cdf(lag);
            conv_i += (1.0 - cdf) * flow;
            conv_r += cdf * flow;
        }
        f.push(initial_law.mean_lambda(t) * i0 + conv_f);
        i_series.push((1.0 - initial_law.duration_cdf(t)) * i0 + conv_i);
        r_series.push(r0 + initial_law.duration_cdf(t) * i0 + conv_r);
        if k < steps {
            let next = s[k] - dt * kappa * f[k] * s[k];
            s.push(next.max(0.0));
        }
    }

    Ok(ScalarSolution { dt, times, s, i: i_series, r: r_series, f })
}

/// Classical SIR ODE by fourth-order Runge-Kutta: `S' = -β S I`,
/// `I' = β S I - ρ I`, `R' = ρ I`. Independent oracle for exponential
/// course laws, where the limit system collapses to this ODE with
/// `β = κ · level`.
pub fn markov_sir_oracle(
    beta: f64,
    rho: f64,
    s0: f64,
    i0: f64,
    r0: f64,
    dt: f64,
    horizon: f64,
) -> ScalarSolution {
    assert!(dt > 0.0 && horizon > 0.0);
    let steps = ((horizon / dt).round() as usize).max(1);
    let dt = horizon / steps as f64;
    let deriv = |s: f64, i: f64| (-beta * s * i, beta * s * i - rho * i, rho * i);
    let mut s = vec![s0];
    let mut i = vec![i0];
    let mut r = vec![r0];
    let mut times = vec![0.0];
    for k in 0..steps {
        let (sk, ik, rk) = (s[k], i[k], r[k]);
        let (ds1, di1, dr1) = deriv(sk, ik);
        let (ds2, di2, dr2) = deriv(sk + 0.5 * dt * ds1, ik + 0.5 * dt * di1);
        let (ds3, di3, dr3) = deriv(sk + 0.5 * dt * ds2, ik + 0.5 * dt * di2);
        let (ds4, di4, dr4) = deriv(sk + dt * ds3, ik + dt * di3);
        s.push(sk + dt / 6.0 * (ds1 + 2.0 * ds2 + 2.0 * ds3 + ds4));
        i.push(ik + dt / 6.0 * (di1 + 2.0 * di2 + 2.0 * di3 + di4));
        r.push(rk + dt / 6.0 * (dr1 + 2.0 * dr2 + 2.0 * dr3 + dr4));
        times.push((k + 1) as f64 * dt);
    }
    let f = i.iter().map(|&ik| beta * ik).collect();
    ScalarSolution { dt, times, s, i, r, f }
}

/// Solution of the final-size fixed point `r = 1 - s0·e^{-R0·r}` by
/// bisection; the limiting recovered fraction of the classical SIR model.
pub fn sir_final_size(r0_basic: f64, s0: f64) -> f64 {
    let g = |r: f64| 1.0 - s0 * (-r0_basic * r).exp() - r;
    let (mut lo, mut hi) = (1e-12, 1.0);
    assert!(g(lo) > 0.0 && g(hi) < 0.0, "final-size equation needs R0 > 1");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
