//! Observables: test functions paired against measures, and distances
//! between paired trajectories.
//!
//! Weak-convergence statements are tested through a finite library of test
//! functions. Pairings of empirical point measures use exactly rounded
//! summation ([`exact_sum`]), so identities that hold for the underlying
//! real sums (conservation across compartments, grouping invariance) hold
//! bit-for-bit for the computed values as well.

use crate::model::Compartment;

/// Exactly rounded sum of f64 values (Shewchuk partials with a final
/// round-half-even correction). The result is the f64 nearest the exact
/// real sum, hence independent of summand order and grouping.
pub fn exact_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        debug_assert!(x.is_finite(), "exact_sum needs finite terms");
        let mut keep = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[keep] = lo;
                keep += 1;
            }
            x = hi;
        }
        partials.truncate(keep);
        partials.push(x);
    }
    // fold the non-overlapping partials from the top, then correct the
    // final rounding toward round-half-even
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        if y == x - hi {
            hi = x;
        }
    }
    hi
}

/// Shape of a test function on the unit box.
#[derive(Clone, Debug, PartialEq)]
pub enum TestShape {
    Constant,
    /// Product of per-axis powers, `Π x_a^{e_a}`.
    Monomial { exponents: Vec<u32> },
    /// Smooth bump `exp(-|x-c|²/(2s²))`.
    Bump { center: Vec<f64>, scale: f64 },
    /// Lipschitz hat `max(0, 1 - |x-c|/s)`.
    Hat { center: Vec<f64>, scale: f64 },
}

/// A test function: a shape scaled by a coefficient.
#[derive(Clone, Debug, PartialEq)]
pub struct TestFunction {
    pub shape: TestShape,
    pub coeff: f64,
}

impl TestFunction {
    pub fn constant() -> Self {
        TestFunction { shape: TestShape::Constant, coeff: 1.0 }
    }

    pub fn monomial(exponents: Vec<u32>) -> Self {
        TestFunction { shape: TestShape::Monomial { exponents }, coeff: 1.0 }
    }

    pub fn bump(center: Vec<f64>, scale: f64) -> Self {
        TestFunction { shape: TestShape::Bump { center, scale }, coeff: 1.0 }
    }

    pub fn hat(center: Vec<f64>, scale: f64) -> Self {
        TestFunction { shape: TestShape::Hat { center, scale }, coeff: 1.0 }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let base = match &self.shape {
            TestShape::Constant => 1.0,
            TestShape::Monomial { exponents } => {
                let mut v = 1.0;
                for (c, e) in x.iter().zip(exponents) {
                    v *= c.powi(*e as i32);
                }
                v
            }
            TestShape::Bump { center, scale } => {
                let q: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                (-q / (2.0 * scale * scale)).exp()
            }
            TestShape::Hat { center, scale } => {
                let q: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                (1.0 - q.sqrt() / scale).max(0.0)
            }
        };
        self.coeff * base
    }

    /// Sup norm over the unit box.
    pub fn sup_norm(&self) -> f64 {
        // every shape peaks at 1 on the box (monomials at the all-ones corner)
        self.coeff.abs()
    }

    /// A Lipschitz constant over the unit box (not necessarily tight).
    pub fn lipschitz(&self) -> f64 {
        let base: f64 = match &self.shape {
            TestShape::Constant => 0.0,
            TestShape::Monomial { exponents } => {
                exponents.iter().map(|&e| e as f64).sum::<f64>()
            }
            TestShape::Bump { scale, .. } => 1.0 / (scale * std::f64::consts::E.sqrt()),
            TestShape::Hat { scale, .. } => 1.0 / scale,
        };
        self.coeff.abs() * base
    }

    /// The same shape with the coefficient multiplied by `k`.
    pub fn scaled(&self, k: f64) -> TestFunction {
        TestFunction { shape: self.shape.clone(), coeff: self.coeff * k }
    }

    /// CSV-safe identifier (no commas or quotes).
    pub fn name(&self) -> String {
        let tag = match &self.shape {
            TestShape::Constant => "one".to_string(),
            TestShape::Monomial { exponents } => {
                let factors: Vec<String> = exponents
                    .iter()
                    .enumerate()
                    .filter(|(_, &e)| e > 0)
                    .map(|(a, &e)| {
                        if e == 1 {
                            format!("x{}", a + 1)
                        } else {
                            format!("x{}^{e}", a + 1)
                        }
                    })
                    .collect();
                if factors.is_empty() {
                    "one".to_string()
                } else {
                    factors.join("*")
                }
            }
            TestShape::Bump { center, scale } => format!("bump_{}_s{scale}", coords(center)),
            TestShape::Hat { center, scale } => format!("hat_{}_s{scale}", coords(center)),
        };
        if self.coeff == 1.0 {
            tag
        } else {
            format!("{}x_{tag}", self.coeff)
        }
    }
}

fn coords(center: &[f64]) -> String {
    center.iter().map(|c| format!("{c}")).collect::<Vec<_>>().join("_")
}

/// Default library: the constant, coordinate monomials up to degree two,
/// two smooth bumps at different scales, and one Lipschitz hat.
pub fn default_library(dim: usize) -> Vec<TestFunction> {
    let mut lib = vec![TestFunction::constant()];
    for a in 0..dim {
        let mut e = vec![0u32; dim];
        e[a] = 1;
        lib.push(TestFunction::monomial(e));
    }
    for a in 0..dim {
        for b in a..dim {
            let mut e = vec![0u32; dim];
            e[a] += 1;
            e[b] += 1;
            lib.push(TestFunction::monomial(e));
        }
    }
    lib.push(TestFunction::bump(vec![0.5; dim], 0.2));
    lib.push(TestFunction::bump(vec![0.25; dim], 0.15));
    let mut corner = vec![0.25; dim];
    corner[0] = 0.75;
    lib.push(TestFunction::hat(corner, 0.3));
    lib
}

/// The four components of the paired state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MeasureComponent {
    /// Susceptible mass.
    S,
    /// Force of infection (infectious mass weighted by current load).
    F,
    /// Infectious mass.
    I,
    /// Recovered mass.
    R,
}

impl MeasureComponent {
    pub const ALL: [MeasureComponent; 4] =
        [MeasureComponent::S, MeasureComponent::F, MeasureComponent::I, MeasureComponent::R];

    pub fn short(self) -> &'static str {
        match self {
            MeasureComponent::S => "S",
            MeasureComponent::F => "F",
            MeasureComponent::I => "I",
            MeasureComponent::R => "R",
        }
    }

    pub fn from_compartment(c: Compartment) -> Self {
        match c {
            Compartment::Susceptible => MeasureComponent::S,
            Compartment::Infectious => MeasureComponent::I,
            Compartment::Recovered => MeasureComponent::R,
        }
    }
}

impl std::fmt::Display for MeasureComponent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.short())
    }
}

impl std::str::FromStr for MeasureComponent {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "S" => Ok(MeasureComponent::S),
            "F" => Ok(MeasureComponent::F),
            "I" => Ok(MeasureComponent::I),
            "R" => Ok(MeasureComponent::R),
            other => Err(format!("unknown measure component {other:?}")),
        }
    }
}

/// Pairing values on a grid of snapshot times, components and test
/// functions; the common currency between the simulator and the solver.
#[derive(Clone, Debug)]
pub struct PairingTable {
    pub times: Vec<f64>,
    pub components: Vec<MeasureComponent>,
    pub phi_names: Vec<String>,
    /// `[time][component][phi]`, row-major.
    values: Vec<f64>,
}

impl PairingTable {
    pub fn new(
        times: Vec<f64>,
        components: Vec<MeasureComponent>,
        phi_names: Vec<String>,
        values: Vec<f64>,
    ) -> Self {
        assert_eq!(values.len(), times.len() * components.len() * phi_names.len());
        PairingTable { times, components, phi_names, values }
    }

    pub fn value(&self, time_idx: usize, comp_idx: usize, phi_idx: usize) -> f64 {
        self.values
            [(time_idx * self.components.len() + comp_idx) * self.phi_names.len() + phi_idx]
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MeasureError {
    #[error("pairing tables disagree on {axis}: {detail}")]
    AxisMismatch { axis: &'static str, detail: String },
    #[error("no snapshot stored at t = {t}")]
    UnknownSnapshot { t: f64 },
    #[error("the test-function library is empty")]
    EmptyLibrary,
}

/// Sup-over-time error per (component, phi), and their maximum.
#[derive(Clone, Debug)]
pub struct TrajectoryDistance {
    pub rows: Vec<DistanceRow>,
    /// Max of `sup_err` over all rows.
    pub aggregate: f64,
}

#[derive(Clone, Debug)]
pub struct DistanceRow {
    pub component: MeasureComponent,
    pub phi: String,
    pub sup_err: f64,
}

/// Distance between two paired trajectories on identical axes. Symmetric
/// in its arguments; zero iff every pairing value coincides.
pub fn trajectory_distance(
    a: &PairingTable,
    b: &PairingTable,
) -> Result<TrajectoryDistance, MeasureError> {
    if a.times.len() != b.times.len()
        || a.times.iter().zip(&b.times).any(|(s, t)| (s - t).abs() > 1e-9)
    {
        return Err(MeasureError::AxisMismatch {
            axis: "times",
            detail: format!("{:?} vs {:?}", a.times, b.times),
        });
    }
    if a.components != b.components {
        return Err(MeasureError::AxisMismatch {
            axis: "components",
            detail: format!("{:?} vs {:?}", a.components, b.components),
        });
    }
    if a.phi_names != b.phi_names {
        return Err(MeasureError::AxisMismatch {
            axis: "test functions",
            detail: format!("{:?} vs {:?}", a.phi_names, b.phi_names),
        });
    }
    let mut rows = Vec::with_capacity(a.components.len() * a.phi_names.len());
    let mut aggregate = 0.0f64;
    for (ci, comp) in a.components.iter().enumerate() {
        for (pi, phi) in a.phi_names.iter().enumerate() {
            let mut sup = 0.0f64;
            for ti in 0..a.times.len() {
                sup = sup.max((a.value(ti, ci, pi) - b.value(ti, ci, pi)).abs());
            }
            aggregate = aggregate.max(sup);
            rows.push(DistanceRow { component: *comp, phi: phi.clone(), sup_err: sup });
        }
    }
    Ok(TrajectoryDistance { rows, aggregate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_sum_survives_catastrophic_cancellation() {
        assert_eq!(exact_sum([1e100, 1.0, -1e100]), 1.0);
        assert_eq!(exact_sum([1.0, 1e100, 1e-100, -1e100]), 1.0 + 1e-100);
        assert_eq!(exact_sum(std::iter::empty()), 0.0);
    }

    #[test]
    fn exact_sum_rounds_to_nearest_even_across_partials() {
        // inputs whose naive sum is off by one ulp; expected values are the
        // correctly rounded real sums
        assert_eq!(exact_sum([2f64.powi(53), 1.0, 2f64.powi(-100)]), 2f64.powi(53) + 2.0);
        assert_eq!(exact_sum([2f64.powi(53) + 10.0, 1.0, 2f64.powi(-100)]), 2f64.powi(53) + 12.0);
        assert_eq!(exact_sum([2f64.powi(53) - 4.0, 0.5, 2f64.powi(-54)]), 2f64.powi(53) - 3.0);
    }

    #[test]
    fn exact_sum_matches_reference_on_heavy_cancellation() {
        // 21 terms of magnitude ~1e12 with sign changes; expected bits frozen
        // from an independent correctly rounded summation
        let xs = [
            494706435277.30176,
            -420511212137.46234,
            570439566970.79,
            438033188388.8217,
            -469014242999.2369,
            -799245207892.413,
            -924827993327.9103,
            -954637186092.109,
            -71263766067.45444,
            -116213709459.22813,
            -318454530830.52515,
            294827570650.5434,
            243415763817.61465,
            302722416782.7174,
            -799857542751.4951,
            604218585526.8093,
            505422142287.30774,
            368931508411.872,
            946729205555.822,
            -131265324801.70818,
            354255307696.8891,
        ];
        assert_eq!(exact_sum(xs).to_bits(), 0x423b91d8171ef25a);
    }

    #[test]
    fn exact_sum_of_ones_is_the_count() {
        let n = 10_000;
        assert_eq!(exact_sum(std::iter::repeat(1.0).take(n)), n as f64);
    }

    proptest! {
        #[test]
        fn exact_sum_is_order_and_grouping_independent(
            mut xs in proptest::collection::vec(-1e12f64..1e12, 0..60),
            split in 0usize..60,
        ) {
            let total = exact_sum(xs.iter().copied());
            xs.reverse();
            prop_assert_eq!(total, exact_sum(xs.iter().copied()));
            let k = split.min(xs.len());
            let (a, b) = xs.split_at(k);
            let sa = exact_sum(a.iter().copied());
            let sb = exact_sum(b.iter().copied());
            let grouped = exact_sum([sa, sb]);
            // grouping through two correctly rounded partial sums moves the
            // result by at most one rounding of each part, so the error
            // scales with the parts, not the (possibly cancelled) total
            prop_assert!((grouped - total).abs() <= (sa.abs() + sb.abs() + 1.0) * 1e-15);
            // but concatenation of the same multiset is bit-identical
            let mut cat: Vec<f64> = a.to_vec();
            cat.extend_from_slice(b);
            prop_assert_eq!(total, exact_sum(cat));
        }
    }

    #[test]
    fn monomial_names_and_values() {
        let f = TestFunction::monomial(vec![2, 1]);
        assert_eq!(f.name(), "x1^2*x2");
        assert_eq!(f.eval(&[2.0, 3.0]), 12.0);
        assert_eq!(TestFunction::constant().name(), "one");
    }

    #[test]
    fn default_library_covers_degree_two_in_2d() {
        let lib = default_library(2);
        let names: Vec<String> = lib.iter().map(|f| f.name()).collect();
        for expect in ["one", "x1", "x2", "x1^2", "x1*x2", "x2^2"] {
            assert!(names.iter().any(|n| n == expect), "library missing {expect}: {names:?}");
        }
        assert!(names.iter().all(|n| !n.contains(',')), "names must be CSV-safe");
    }

    #[test]
    fn hat_is_lipschitz_with_its_stated_constant() {
        let f = TestFunction::hat(vec![0.5, 0.5], 0.3);
        let l = f.lipschitz();
        let pts = [[0.5, 0.5], [0.6, 0.5], [0.8, 0.9], [0.0, 0.0], [0.5, 0.81]];
        for a in &pts {
            for b in &pts {
                let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                assert!(
                    (f.eval(a) - f.eval(b)).abs() <= l * d + 1e-12,
                    "hat violates its Lipschitz bound between {a:?} and {b:?}"
                );
            }
        }
    }

    #[test]
    fn distance_is_symmetric_zero_on_self_and_scales_linearly() {
        let times = vec![0.0, 1.0, 2.0];
        let comps = vec![MeasureComponent::S, MeasureComponent::F];
        let phis = vec!["one".to_string(), "x1".to_string()];
        let v_a: Vec<f64> = (0..12).map(|i| i as f64 * 0.1).collect();
        let v_b: Vec<f64> = (0..12).map(|i| i as f64 * 0.1 + if i == 5 { 0.25 } else { 0.0 }).collect();
        let a = PairingTable::new(times.clone(), comps.clone(), phis.clone(), v_a.clone());
        let b = PairingTable::new(times.clone(), comps.clone(), phis.clone(), v_b);
        let self_dist = trajectory_distance(&a, &a).unwrap();
        assert_eq!(self_dist.aggregate, 0.0, "distance to itself must vanish");
        let ab = trajectory_distance(&a, &b).unwrap();
        let ba = trajectory_distance(&b, &a).unwrap();
        assert_eq!(ab.aggregate, ba.aggregate, "distance must be symmetric");
        assert_eq!(ab.aggregate, 0.25);

        // doubling every pairing value doubles all distances exactly
        let a2 = PairingTable::new(times.clone(), comps.clone(), phis.clone(),
            v_a.iter().map(|v| 2.0 * v).collect());
        let zero = PairingTable::new(times, comps, phis, vec![0.0; 12]);
        let d1 = trajectory_distance(&a, &zero).unwrap();
        let d2 = trajectory_distance(&a2, &zero).unwrap();
        assert_eq!(d2.aggregate, 2.0 * d1.aggregate);
        for (r1, r2) in d1.rows.iter().zip(&d2.rows) {
            assert_eq!(r2.sup_err, 2.0 * r1.sup_err);
        }
    }

    #[test]
    fn distance_rejects_mismatched_axes() {
        let a = PairingTable::new(vec![0.0], vec![MeasureComponent::S], vec!["one".into()], vec![1.0]);
        let b = PairingTable::new(vec![0.5], vec![MeasureComponent::S], vec!["one".into()], vec![1.0]);
        assert!(trajectory_distance(&a, &b).is_err());
    }
}
