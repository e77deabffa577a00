//! Regular midpoint grids on the unit box.
//!
//! Quadrature convention throughout the crate: a density `f` integrates as
//! `weight() * Σ_g f(node_g)` with cell-midpoint nodes and equal cell
//! volumes, second-order accurate for smooth integrands.

use crate::model::Domain;

#[derive(Clone, Debug, PartialEq)]
pub struct SpatialGrid {
    dim: usize,
    shape: Vec<usize>,
    nodes: Vec<f64>, // len() * dim, row-major
    weight: f64,
}

impl SpatialGrid {
    /// Midpoint grid with `per_axis[a]` cells along axis `a`.
    ///
    /// Panics if a count is zero or the shape does not match the domain
    /// dimension; grid shapes are caller-controlled, not user input.
    pub fn regular(domain: &Domain, per_axis: &[usize]) -> Self {
        assert_eq!(per_axis.len(), domain.dimension(), "shape/domain mismatch");
        assert!(per_axis.iter().all(|&n| n > 0), "grid axis with zero cells");
        let dim = domain.dimension();
        let total: usize = per_axis.iter().product();
        let mut nodes = Vec::with_capacity(total * dim);
        let mut idx = vec![0usize; dim];
        for _ in 0..total {
            for a in 0..dim {
                nodes.push((idx[a] as f64 + 0.5) / per_axis[a] as f64);
            }
            // odometer increment, last axis fastest
            for a in (0..dim).rev() {
                idx[a] += 1;
                if idx[a] < per_axis[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        let weight = per_axis.iter().map(|&n| 1.0 / n as f64).product();
        SpatialGrid { dim, shape: per_axis.to_vec(), nodes, weight }
    }

    /// Same cell count along every axis.
    pub fn uniform(domain: &Domain, n: usize) -> Self {
        Self::regular(domain, &vec![n; domain.dimension()])
    }

    /// Grid with every axis count doubled (one refinement step).
    pub fn refined_double(&self, domain: &Domain) -> Self {
        let shape: Vec<usize> = self.shape.iter().map(|&n| 2 * n).collect();
        Self::regular(domain, &shape)
    }

    pub fn len(&self) -> usize {
        self.nodes.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Common cell volume; node weights are all equal by construction.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn node(&self, g: usize) -> &[f64] {
        &self.nodes[g * self.dim..(g + 1) * self.dim]
    }

    pub fn nodes_flat(&self) -> &[f64] {
        &self.nodes
    }

    /// Evaluate `f` on every node.
    pub fn map(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.len()).map(|g| f(self.node(g))).collect()
    }

    /// Midpoint quadrature of `values` given per node.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.len());
        self.weight * crate::measure::exact_sum(values.iter().copied())
    }
}
