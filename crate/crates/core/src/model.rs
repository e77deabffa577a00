//! Population model: domain, compartments, initial condition, experiment
//! configuration, and deterministic population sampling.
//!
//! The spatial domain is the closed unit box `[0,1]^d`. Initial subgroup
//! sizes are deterministic roundings of the configured fractions; positions
//! are drawn i.i.d. from each subgroup's density via rejection sampling
//! against its known supremum, with one dedicated random stream per
//! individual so sampled populations are reproducible and order-independent.

use serde::{Deserialize, Serialize};

use crate::infectivity::InfectivityModel;
use crate::kernel::Kernel;
use crate::rng::{self, tag};

/// Epidemiological compartment of an individual.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Compartment {
    #[serde(rename = "S")]
    Susceptible,
    #[serde(rename = "I")]
    Infectious,
    #[serde(rename = "R")]
    Recovered,
}

impl Compartment {
    pub fn short(self) -> &'static str {
        match self {
            Compartment::Susceptible => "S",
            Compartment::Infectious => "I",
            Compartment::Recovered => "R",
        }
    }
}

impl std::fmt::Display for Compartment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.short())
    }
}

/// Closed axis-aligned unit box `[0,1]^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub dimension: usize,
}

impl Domain {
    pub fn new(dimension: usize) -> Self {
        Domain { dimension }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dimension && x.iter().all(|&c| (0.0..=1.0).contains(&c))
    }

    pub fn volume(&self) -> f64 {
        1.0
    }
}

/// One isotropic Gaussian bump of a mixture density, truncated to the box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianComponent {
    pub center: Vec<f64>,
    pub scale: f64,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

/// Parametric probability density on the domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    /// Constant density 1 on the unit box.
    Uniform,
    /// Mixture of isotropic Gaussians, each truncated to the box and
    /// normalized there.
    GaussianMixture { components: Vec<GaussianComponent> },
    /// Piecewise-constant on a regular cell grid, normalized; `values` is
    /// row-major over `shape` with the last axis fastest.
    PiecewiseConstant { shape: Vec<usize>, values: Vec<f64> },
}

/// Standard normal CDF.
fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z / std::f64::consts::SQRT_2))
}

/// Compiled, evaluable form of a [`DensitySpec`].
#[derive(Clone, Debug)]
pub struct Density {
    dim: usize,
    body: DensityBody,
    /// Upper bound on the density, used for rejection sampling.
    sup_bound: f64,
}

#[derive(Clone, Debug)]
enum DensityBody {
    Uniform,
    Mixture {
        // per component: center, scale, weight/(weight_sum * box_mass * (2πs²)^{d/2})
        comps: Vec<(Vec<f64>, f64, f64)>,
    },
    Piecewise {
        shape: Vec<usize>,
        values: Vec<f64>, // normalized to unit integral
    },
}

impl Density {
    pub fn compile(spec: &DensitySpec, domain: &Domain) -> Result<Self, String> {
        let dim = domain.dimension();
        match spec {
            DensitySpec::Uniform => Ok(Density { dim, body: DensityBody::Uniform, sup_bound: 1.0 }),
            DensitySpec::GaussianMixture { components } => {
                if components.is_empty() {
                    return Err("gaussian mixture needs at least one component".into());
                }
                let wsum: f64 = components.iter().map(|c| c.weight).sum();
                let mut comps = Vec::with_capacity(components.len());
                let mut bound = 0.0;
                for c in components {
                    if c.center.len() != dim {
                        return Err(format!(
                            "component center has {} coordinates, domain has {dim}",
                            c.center.len()
                        ));
                    }
                    if !(c.scale > 0.0) || !c.scale.is_finite() {
                        return Err(format!("component scale must be positive, got {}", c.scale));
                    }
                    if !(c.weight > 0.0) || !c.weight.is_finite() {
                        return Err(format!("component weight must be positive, got {}", c.weight));
                    }
                    // mass the untruncated Gaussian leaves inside the box
                    let mut box_mass = 1.0;
                    for a in 0..dim {
                        box_mass *= normal_cdf((1.0 - c.center[a]) / c.scale)
                            - normal_cdf(-c.center[a] / c.scale);
                    }
                    if box_mass <= 0.0 {
                        return Err("gaussian component has no mass inside the domain".into());
                    }
                    let gauss_norm = (2.0 * std::f64::consts::PI * c.scale * c.scale)
                        .powf(dim as f64 / 2.0);
                    let coeff = c.weight / (wsum * box_mass * gauss_norm);
                    bound += coeff; // exp factor is at most 1
                    comps.push((c.center.clone(), c.scale, coeff));
                }
                Ok(Density { dim, body: DensityBody::Mixture { comps }, sup_bound: bound })
            }
            DensitySpec::PiecewiseConstant { shape, values } => {
                if shape.len() != dim {
                    return Err(format!("piecewise shape has {} axes, domain has {dim}", shape.len()));
                }
                if shape.iter().any(|&n| n == 0) {
                    return Err("piecewise shape has a zero-cell axis".into());
                }
                let total: usize = shape.iter().product();
                if values.len() != total {
                    return Err(format!(
                        "piecewise values has {} entries, shape needs {total}",
                        values.len()
                    ));
                }
                if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err("piecewise values must be finite and nonnegative".into());
                }
                let cell_vol: f64 = shape.iter().map(|&n| 1.0 / n as f64).product();
                let mass: f64 = values.iter().sum::<f64>() * cell_vol;
                if mass <= 0.0 {
                    return Err("piecewise density has zero total mass".into());
                }
                let values: Vec<f64> = values.iter().map(|v| v / mass).collect();
                let sup = values.iter().copied().fold(0.0, f64::max);
                Ok(Density {
                    dim,
                    body: DensityBody::Piecewise { shape: shape.clone(), values },
                    sup_bound: sup,
                })
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        match &self.body {
            DensityBody::Uniform => 1.0,
            DensityBody::Mixture { comps } => {
                let mut v = 0.0;
                for (center, scale, coeff) in comps {
                    let mut q = 0.0;
                    for a in 0..self.dim {
                        let d = x[a] - center[a];
                        q += d * d;
                    }
                    v += coeff * (-q / (2.0 * scale * scale)).exp();
                }
                v
            }
            DensityBody::Piecewise { shape, values } => {
                let mut idx = 0usize;
                for a in 0..self.dim {
                    let n = shape[a];
                    let cell = ((x[a] * n as f64) as usize).min(n - 1);
                    idx = idx * n + cell;
                }
                values[idx]
            }
        }
    }

    /// Upper bound on the density over the box (not necessarily tight).
    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    /// One draw by rejection against the uniform proposal.
    pub fn sample(&self, rng: &mut impl rand::Rng) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        // acceptance probability is 1/sup_bound on average; valid densities
        // have sup_bound >= 1, so this terminates quickly with probability 1
        for _ in 0..1_000_000 {
            for c in x.iter_mut() {
                *c = rng.random();
            }
            let u: f64 = rng.random();
            if u * self.sup_bound < self.eval(&x) {
                return x;
            }
        }
        unreachable!("rejection sampling failed to accept; density bound is inconsistent");
    }
}

/// Initial compartment fractions and per-subgroup position densities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialCondition {
    pub frac_s: f64,
    pub frac_i: f64,
    pub frac_r: f64,
    pub density_s: DensitySpec,
    pub density_i: DensitySpec,
    pub density_r: DensitySpec,
}

impl InitialCondition {
    /// Deterministic subgroup sizes: round S and I, remainder to R.
    pub fn counts(&self, n: usize) -> Result<[usize; 3], Violation> {
        let s = (n as f64 * self.frac_s).round() as i64;
        let i = (n as f64 * self.frac_i).round() as i64;
        let r = n as i64 - s - i;
        if s < 0 || i < 0 || r < 0 {
            return Err(Violation::CountRounding { s, i, r });
        }
        Ok([s as usize, i as usize, r as usize])
    }
}

/// Whether infection rates divide by the raw denominator power or by its
/// truncated (floored) version.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruncationMode {
    Raw,
    Truncated,
}

impl std::fmt::Display for TruncationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TruncationMode::Raw => "raw",
            TruncationMode::Truncated => "truncated",
        })
    }
}

fn default_truncation() -> TruncationMode {
    TruncationMode::Raw
}

/// Scalar run parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    pub population: usize,
    /// Denominator exponent; must lie in [0, 1].
    pub gamma: f64,
    pub horizon: f64,
    pub master_seed: u64,
    /// Explicit snapshot times; mutually exclusive with `snapshot_count`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_times: Option<Vec<f64>>,
    /// Evenly spaced snapshots from 0 to the horizon (count includes both ends).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_count: Option<usize>,
    #[serde(default = "default_truncation")]
    pub truncation: TruncationMode,
}

/// Infectious-load laws for the initially infected and for those infected
/// during the run; the two may differ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfectivityPair {
    pub initial: InfectivityModel,
    pub new: InfectivityModel,
}

/// Complete description of one experiment; serializes to/from the on-disk
/// config format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: Domain,
    pub run: RunSettings,
    pub kernel: Kernel,
    pub infectivity: InfectivityPair,
    pub initial_condition: InitialCondition,
}

impl ExperimentConfig {
    /// Resolved snapshot times (defaults to 21 evenly spaced).
    pub fn snapshots(&self) -> Vec<f64> {
        if let Some(ts) = &self.run.snapshot_times {
            return ts.clone();
        }
        let count = self.run.snapshot_count.unwrap_or(21).max(2);
        let t = self.run.horizon;
        (0..count).map(|i| t * i as f64 / (count - 1) as f64).collect()
    }

    /// Uniform bound on any individual's transmission rate.
    pub fn lambda_star(&self) -> f64 {
        self.infectivity.initial.lambda_star().max(self.infectivity.new.lambda_star())
    }

    /// Total initial density `µ̄` at a point (mixture of the subgroup
    /// densities weighted by their fractions).
    pub fn total_density(&self) -> Result<TotalDensity, ConfigError> {
        let d = &self.domain;
        let ic = &self.initial_condition;
        let compile = |spec: &DensitySpec, which: &'static str| {
            Density::compile(spec, d).map_err(|message| {
                ConfigError::Invalid(vec![Violation::Density { which, message }])
            })
        };
        Ok(TotalDensity {
            parts: [
                (ic.frac_s, compile(&ic.density_s, "density_s")?),
                (ic.frac_i, compile(&ic.density_i, "density_i")?),
                (ic.frac_r, compile(&ic.density_r, "density_r")?),
            ],
        })
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate_config(self)
    }

    pub fn ensure_valid(&self) -> Result<(), ConfigError> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(v))
        }
    }
}

/// Evaluable total initial density.
pub struct TotalDensity {
    parts: [(f64, Density); 3],
}

impl TotalDensity {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.parts.iter().map(|(f, d)| f * d.eval(x)).sum()
    }

    pub fn sup_bound(&self) -> f64 {
        self.parts.iter().map(|(f, d)| f * d.sup_bound()).sum()
    }
}

/// A single validation failure, with enough context to act on.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    Gamma { value: f64 },
    Horizon { value: f64 },
    PopulationEmpty,
    Dimension { value: usize },
    FractionNegative { which: &'static str, value: f64 },
    FractionSum { sum: f64 },
    CountRounding { s: i64, i: i64, r: i64 },
    SnapshotConflict,
    SnapshotOutOfRange { t: f64, horizon: f64 },
    SnapshotUnsorted,
    Density { which: &'static str, message: String },
    TotalDensityVanishes { minimum: f64 },
    Kernel { message: String },
    KernelDiscontinuous,
    KernelNotSymmetric { at: f64 },
    KernelLowerBound { observed: f64, required: f64 },
    Infectivity { which: &'static str, message: String },
    Population { message: String },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        use Violation::*;
        match self {
            Gamma { value } => write!(
                f,
                "denominator exponent gamma = {value} violates the required range [0, 1]"
            ),
            Horizon { value } => write!(f, "horizon must be a positive finite time, got {value}"),
            PopulationEmpty => write!(f, "population size must be at least 1"),
            Dimension { value } => write!(f, "domain dimension must be at least 1, got {value}"),
            FractionNegative { which, value } => {
                write!(f, "initial fraction {which} must be finite and >= 0, got {value}")
            }
            FractionSum { sum } => {
                write!(f, "initial fractions must sum to 1, got {sum}")
            }
            CountRounding { s, i, r } => write!(
                f,
                "rounded initial counts (S={s}, I={i}, R={r}) include a negative group; \
                 adjust fractions or population size"
            ),
            SnapshotConflict => {
                write!(f, "snapshot_times and snapshot_count are mutually exclusive")
            }
            SnapshotOutOfRange { t, horizon } => {
                write!(f, "snapshot time {t} lies outside [0, {horizon}]")
            }
            SnapshotUnsorted => write!(f, "snapshot_times must be sorted ascending"),
            Density { which, message } => write!(f, "{which}: {message}"),
            TotalDensityVanishes { minimum } => write!(
                f,
                "total initial density is not bounded away from zero on the domain \
                 (grid minimum {minimum:e})"
            ),
            Kernel { message } => write!(f, "kernel: {message}"),
            KernelDiscontinuous => write!(
                f,
                "top-hat kernel is discontinuous; set allow_discontinuous = true to \
                 accept it anyway"
            ),
            KernelNotSymmetric { at } => {
                write!(f, "kernel is not symmetric (max |K(x,y)-K(y,x)| = {at:e})")
            }
            KernelLowerBound { observed, required } => write!(
                f,
                "kernel near-diagonal lower bound fails: observed {observed}, required {required}"
            ),
            Infectivity { which, message } => write!(f, "infectivity.{which}: {message}"),
            Population { message } => write!(f, "population: {message}"),
        }
    }
}

impl std::error::Error for Violation {}

/// Validation error carrying the full list of violations.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid configuration:\n{}", format_violations(.0))]
    Invalid(Vec<Violation>),
}

fn format_violations(vs: &[Violation]) -> String {
    vs.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n")
}

/// Check every structural and numerical constraint on a configuration.
///
/// Numerical checks (density positivity, kernel symmetry and near-diagonal
/// lower bound) are evaluated on a fixed midpoint grid plus one refinement.
pub fn validate_config(config: &ExperimentConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let run = &config.run;
    let dim = config.domain.dimension();

    if dim == 0 {
        out.push(Violation::Dimension { value: dim });
    }
    if !(run.gamma >= 0.0 && run.gamma <= 1.0) {
        out.push(Violation::Gamma { value: run.gamma });
    }
    if !(run.horizon > 0.0) || !run.horizon.is_finite() {
        out.push(Violation::Horizon { value: run.horizon });
    }
    if run.population == 0 {
        out.push(Violation::PopulationEmpty);
    }

    let ic = &config.initial_condition;
    for (which, value) in
        [("frac_s", ic.frac_s), ("frac_i", ic.frac_i), ("frac_r", ic.frac_r)]
    {
        if !(value >= 0.0) || !value.is_finite() {
            out.push(Violation::FractionNegative { which, value });
        }
    }
    let sum = ic.frac_s + ic.frac_i + ic.frac_r;
    if (sum - 1.0).abs() > 1e-9 {
        out.push(Violation::FractionSum { sum });
    }
    if run.population > 0 {
        if let Err(v) = ic.counts(run.population) {
            out.push(v);
        }
    }

    if run.snapshot_times.is_some() && run.snapshot_count.is_some() {
        out.push(Violation::SnapshotConflict);
    }
    if let Some(ts) = &run.snapshot_times {
        if ts.windows(2).any(|w| w[0] > w[1]) {
            out.push(Violation::SnapshotUnsorted);
        }
        for &t in ts {
            if !(0.0..=run.horizon).contains(&t) {
                out.push(Violation::SnapshotOutOfRange { t, horizon: run.horizon });
                break;
            }
        }
    }

    out.extend(config.kernel.validate());
    out.extend(config.infectivity.initial.validate("initial"));
    out.extend(config.infectivity.new.validate("new"));

    // Numerical checks on a grid (with one refinement) When the structural
    // pieces compile.
    let mut densities_ok = true;
    for (which, spec) in [
        ("density_s", &ic.density_s),
        ("density_i", &ic.density_i),
        ("density_r", &ic.density_r),
    ] {
        if let Err(message) = Density::compile(spec, &config.domain) {
            out.push(Violation::Density { which, message });
            densities_ok = false;
        }
    }
    if densities_ok && dim > 0 && dim <= 4 {
        if let Ok(total) = config.total_density() {
            let per_axis = match dim {
                1 => 64,
                2 => 17,
                3 => 9,
                _ => 5,
            };
            let mut minimum = f64::INFINITY;
            for grid in [
                crate::grid::SpatialGrid::uniform(&config.domain, per_axis),
                crate::grid::SpatialGrid::uniform(&config.domain, 2 * per_axis),
            ] {
                for g in 0..grid.len() {
                    minimum = minimum.min(total.eval(grid.node(g)));
                }
            }
            if !(minimum > 1e-12) {
                out.push(Violation::TotalDensityVanishes { minimum });
            }
            out.extend(kernel_grid_checks(config));
        }
    }

    out
}

/// Symmetry and near-diagonal lower bound of the kernel, sampled on a grid.
fn kernel_grid_checks(config: &ExperimentConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let kernel = &config.kernel;
    let grid = crate::grid::SpatialGrid::uniform(&config.domain, 5);
    let mut max_asym = 0.0f64;
    for a in 0..grid.len() {
        for b in 0..grid.len() {
            let k_ab = kernel.eval(grid.node(a), grid.node(b));
            let k_ba = kernel.eval(grid.node(b), grid.node(a));
            max_asym = max_asym.max((k_ab - k_ba).abs());
        }
    }
    if max_asym > 1e-12 {
        out.push(Violation::KernelNotSymmetric { at: max_asym });
    }
    let (radius, floor) = kernel.near_diagonal_bound();
    if floor > 0.0 {
        // probe pairs at distance <= radius along each axis
        let dim = config.domain.dimension();
        let step = (radius / (dim as f64).sqrt()).min(0.5);
        let mut worst = f64::INFINITY;
        for g in 0..grid.len() {
            let x = grid.node(g).to_vec();
            let mut y = x.clone();
            for a in 0..dim {
                y[a] = (x[a] + step).min(1.0);
            }
            worst = worst.min(kernel.eval(&x, &y));
        }
        if worst < floor * (1.0 - 1e-9) {
            out.push(Violation::KernelLowerBound { observed: worst, required: floor });
        }
    } else {
        out.push(Violation::Kernel {
            message: "kernel admits no positive near-diagonal lower bound".into(),
        });
    }
    out
}

/// Sampled population: static positions and initial compartments.
///
/// Individual `id` occupies `positions[id*dim .. (id+1)*dim]`. Sampled
/// populations group ids as `0..counts[0]` susceptible, then `counts[1]`
/// infectious, then recovered; consumers must read `compartments`, not
/// assume the grouping.
#[derive(Clone, Debug)]
pub struct Population {
    dim: usize,
    master_seed: u64,
    counts: [usize; 3],
    positions: Vec<f64>,
    compartments: Vec<Compartment>,
}

/// Read-only view of one individual.
#[derive(Clone, Copy, Debug)]
pub struct Individual<'a> {
    pub id: usize,
    pub position: &'a [f64],
    pub initial_compartment: Compartment,
    /// 0 for the initially infectious, unset otherwise; infections during a
    /// run are recorded in the event log, not here.
    pub infection_time: Option<f64>,
}

impl Population {
    pub fn len(&self) -> usize {
        self.compartments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.compartments.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Initial (S, I, R) sizes.
    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }

    pub fn position(&self, id: usize) -> &[f64] {
        &self.positions[id * self.dim..(id + 1) * self.dim]
    }

    pub fn positions_flat(&self) -> &[f64] {
        &self.positions
    }

    pub fn initial_compartment(&self, id: usize) -> Compartment {
        self.compartments[id]
    }

    pub fn initial_compartments(&self) -> &[Compartment] {
        &self.compartments
    }

    pub fn individual(&self, id: usize) -> Individual<'_> {
        let c = self.compartments[id];
        Individual {
            id,
            position: self.position(id),
            initial_compartment: c,
            infection_time: (c == Compartment::Infectious).then_some(0.0),
        }
    }

    /// Assemble a population from explicit positions and compartments,
    /// bypassing density sampling. Positions are flat, `dim` per individual.
    pub fn from_parts(
        dim: usize,
        master_seed: u64,
        positions: Vec<f64>,
        compartments: Vec<Compartment>,
    ) -> Result<Population, ConfigError> {
        let fail = |message: String| ConfigError::Invalid(vec![Violation::Population { message }]);
        if dim == 0 {
            return Err(fail("dimension must be at least 1".into()));
        }
        if compartments.is_empty() {
            return Err(fail("population must contain at least one individual".into()));
        }
        if positions.len() != compartments.len() * dim {
            return Err(fail(format!(
                "{} coordinates do not match {} individuals of dimension {dim}",
                positions.len(),
                compartments.len()
            )));
        }
        let domain = Domain::new(dim);
        if let Some(id) = (0..compartments.len())
            .find(|&id| !domain.contains(&positions[id * dim..(id + 1) * dim]))
        {
            return Err(fail(format!("individual {id} lies outside the unit box")));
        }
        let mut counts = [0usize; 3];
        for c in &compartments {
            match c {
                Compartment::Susceptible => counts[0] += 1,
                Compartment::Infectious => counts[1] += 1,
                Compartment::Recovered => counts[2] += 1,
            }
        }
        Ok(Population { dim, master_seed, counts, positions, compartments })
    }
}

/// Draw the initial population for a validated configuration.
pub fn sample_population(config: &ExperimentConfig) -> Result<Population, ConfigError> {
    config.ensure_valid()?;
    let n = config.run.population;
    let dim = config.domain.dimension();
    let ic = &config.initial_condition;
    let counts = ic.counts(n).map_err(|v| ConfigError::Invalid(vec![v]))?;

    let compile = |spec: &DensitySpec, which: &'static str| {
        Density::compile(spec, &config.domain)
            .map_err(|message| ConfigError::Invalid(vec![Violation::Density { which, message }]))
    };
    let groups = [
        (counts[0], compile(&ic.density_s, "density_s")?, Compartment::Susceptible),
        (counts[1], compile(&ic.density_i, "density_i")?, Compartment::Infectious),
        (counts[2], compile(&ic.density_r, "density_r")?, Compartment::Recovered),
    ];

    let mut positions = Vec::with_capacity(n * dim);
    let mut compartments = Vec::with_capacity(n);
    let mut id = 0usize;
    for (count, density, comp) in &groups {
        for _ in 0..*count {
            let mut stream = rng::substream(config.run.master_seed, &[tag::POSITION, id as u64]);
            positions.extend_from_slice(&density.sample(&mut stream));
            compartments.push(*comp);
            id += 1;
        }
    }

    Ok(Population {
        dim,
        master_seed: config.run.master_seed,
        counts,
        positions,
        compartments,
    })
}
