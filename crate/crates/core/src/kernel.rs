//! Spatial contact kernels and the denominator fields they induce.
//!
//! A kernel `K(x, y) ∈ [0, 1]` weights the influence of an infected
//! individual at `y` on a susceptible at `x`. Infection rates divide by a
//! power of the local contact density around the infected individual:
//! empirically `d_N(y) = (1/N) Σ_ℓ K(X_ℓ, y)`, in the limit
//! `d(y) = ∫ K(z, y) µ̄(z) dz`. The truncation `phi_trunc` floors the
//! denominator at half the estimated infimum `c_hat` of the limit field;
//! on runs where the empirical field stays above that floor, truncated and
//! raw dynamics coincide exactly.

use serde::{Deserialize, Serialize};

use crate::grid::SpatialGrid;
use crate::model::{Domain, Population, TotalDensity, Violation};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Kernel {
    /// `K ≡ value`; with uniform densities this removes all spatial
    /// structure.
    Constant { value: f64 },
    /// `height` inside `radius`, zero outside. Discontinuous, so it is
    /// rejected by validation unless `allow_discontinuous` is set.
    TopHat {
        radius: f64,
        height: f64,
        #[serde(default)]
        allow_discontinuous: bool,
    },
    /// `max(floor, exp(-|x-y|²/(2 scale²)))`.
    GaussianBump {
        scale: f64,
        #[serde(default)]
        floor: f64,
    },
    /// `max(floor, exp(-|x-y|/scale))`.
    ExpDecay {
        scale: f64,
        #[serde(default)]
        floor: f64,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum KernelError {
    #[error("point {which} = {point:?} lies outside the domain")]
    OutsideDomain { which: &'static str, point: Vec<f64> },
}

#[inline]
fn dist2(a: &[f64], b: &[f64]) -> f64 {
    if a.len() == 2 {
        let dx = a[0] - b[0];
        let dy = a[1] - b[1];
        dx * dx + dy * dy
    } else {
        a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
    }
}

impl Kernel {
    /// Kernel value from the squared distance; hot path of the simulator.
    #[inline]
    pub fn eval_dist2(&self, d2: f64) -> f64 {
        match self {
            Kernel::Constant { value } => *value,
            Kernel::TopHat { radius, height, .. } => {
                if d2 <= radius * radius {
                    *height
                } else {
                    0.0
                }
            }
            Kernel::GaussianBump { scale, floor } => {
                floor.max((-d2 / (2.0 * scale * scale)).exp())
            }
            Kernel::ExpDecay { scale, floor } => floor.max((-d2.sqrt() / scale).exp()),
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.eval_dist2(dist2(x, y))
    }

    /// Domain-checked evaluation.
    pub fn eval_in(&self, domain: &Domain, x: &[f64], y: &[f64]) -> Result<f64, KernelError> {
        if !domain.contains(x) {
            return Err(KernelError::OutsideDomain { which: "x", point: x.to_vec() });
        }
        if !domain.contains(y) {
            return Err(KernelError::OutsideDomain { which: "y", point: y.to_vec() });
        }
        Ok(self.eval(x, y))
    }

    /// `(radius, bound)` such that `K(x, y) >= bound` whenever
    /// `|x - y| <= radius`; the positive near-diagonal floor all kernels
    /// must provide.
    pub fn near_diagonal_bound(&self) -> (f64, f64) {
        match self {
            Kernel::Constant { value } => (1.0, *value),
            Kernel::TopHat { radius, height, .. } => (*radius, *height),
            Kernel::GaussianBump { scale, floor } => (*scale, floor.max((-0.5f64).exp())),
            Kernel::ExpDecay { scale, floor } => (*scale, floor.max((-1.0f64).exp())),
        }
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self, Kernel::TopHat { .. })
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut check_unit = |name: &str, v: f64, allow_zero: bool| {
            let lo_ok = if allow_zero { v >= 0.0 } else { v > 0.0 };
            if !v.is_finite() || !lo_ok || v > 1.0 {
                out.push(Violation::Kernel {
                    message: format!("{name} must lie in {} got {v}", if allow_zero { "[0,1]," } else { "(0,1]," }),
                });
            }
        };
        match self {
            Kernel::Constant { value } => check_unit("value", *value, false),
            Kernel::TopHat { radius, height, allow_discontinuous } => {
                check_unit("height", *height, false);
                if !radius.is_finite() || *radius <= 0.0 {
                    out.push(Violation::Kernel {
                        message: format!("radius must be positive, got {radius}"),
                    });
                }
                if !allow_discontinuous {
                    out.push(Violation::KernelDiscontinuous);
                }
            }
            Kernel::GaussianBump { scale, floor } | Kernel::ExpDecay { scale, floor } => {
                check_unit("floor", *floor, true);
                if !scale.is_finite() || *scale <= 0.0 {
                    out.push(Violation::Kernel {
                        message: format!("scale must be positive, got {scale}"),
                    });
                }
            }
        }
        out
    }
}

/// Truncated denominator power: `max(x, c/2)^gamma`.
pub fn phi_trunc(x: f64, c: f64, gamma: f64) -> f64 {
    x.max(0.5 * c).powf(gamma)
}

/// Empirical contact density at `y`: `(1/N) Σ_ℓ K(X_ℓ, y)`.
pub fn empirical_denominator(kernel: &Kernel, pop: &Population, y: &[f64]) -> f64 {
    // constant kernel: the mean is the constant, no pair loop
    if let Kernel::Constant { value } = kernel {
        return *value;
    }
    let n = pop.len();
    let dim = pop.dim();
    let flat = pop.positions_flat();
    let mut acc = 0.0;
    for l in 0..n {
        acc += kernel.eval(&flat[l * dim..(l + 1) * dim], y);
    }
    acc / n as f64
}

/// Empirical contact density at every individual's own position.
pub fn empirical_denominators(kernel: &Kernel, pop: &Population) -> Vec<f64> {
    if let Kernel::Constant { value } = kernel {
        return vec![*value; pop.len()];
    }
    (0..pop.len()).map(|j| empirical_denominator(kernel, pop, pop.position(j))).collect()
}

/// Limit contact density `∫ K(z, y) µ̄(z) dz` at `y`, by midpoint
/// quadrature with `mu_bar` given on the grid nodes.
pub fn limit_denominator(kernel: &Kernel, grid: &SpatialGrid, mu_bar: &[f64], y: &[f64]) -> f64 {
    assert_eq!(mu_bar.len(), grid.len());
    let mut acc = 0.0;
    for g in 0..grid.len() {
        acc += kernel.eval(grid.node(g), y) * mu_bar[g];
    }
    acc * grid.weight()
}

/// Limit contact density evaluated at every node of `targets`.
pub fn limit_denominators(
    kernel: &Kernel,
    source: &SpatialGrid,
    mu_bar: &[f64],
    targets: &SpatialGrid,
) -> Vec<f64> {
    (0..targets.len())
        .map(|g| limit_denominator(kernel, source, mu_bar, targets.node(g)))
        .collect()
}

/// Estimate of `inf_y d(y)` by grid minimization with one refinement: the
/// minimum over a base grid and its axis-doubled refinement, quadrature on
/// the refined grid. Always an overestimate of the true infimum, never
/// above the minimum over either node set.
pub fn estimate_c_hat(
    kernel: &Kernel,
    domain: &Domain,
    density: &TotalDensity,
    base_per_axis: usize,
) -> f64 {
    let base = SpatialGrid::uniform(domain, base_per_axis);
    let fine = base.refined_double(domain);
    let mu_fine = fine.map(|x| density.eval(x));
    let mut c_hat = f64::INFINITY;
    for targets in [&base, &fine] {
        for g in 0..targets.len() {
            c_hat = c_hat.min(limit_denominator(kernel, &fine, &mu_fine, targets.node(g)));
        }
    }
    c_hat
}

/// Does the empirical field clear the truncation floor everywhere on the
/// probe grid: `min_y d_N(y) > c_hat / 2`?
pub fn omega_n_holds(
    kernel: &Kernel,
    pop: &Population,
    c_hat: f64,
    probe_grid: &SpatialGrid,
) -> bool {
    let mut min = f64::INFINITY;
    for g in 0..probe_grid.len() {
        min = min.min(empirical_denominator(kernel, pop, probe_grid.node(g)));
        if min <= 0.5 * c_hat {
            return false;
        }
    }
    min > 0.5 * c_hat
}
