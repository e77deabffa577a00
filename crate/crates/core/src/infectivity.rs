//! Infectious-load laws.
//!
//! An infected individual carries a random trajectory `λ(age)`: its
//! transmission rate as a function of time since infection. Trajectories
//! are right-continuous piecewise step or linear curves, bounded by the
//! law's `lambda_star`, and vanish at ages `>= eta` (the infectious
//! duration). Recovery happens exactly at age `eta`.
//!
//! Each family exposes its mean curve `mean_lambda(t) = E[λ(t)]` and the
//! duration CDF; the mean-field solver consumes only these two functions,
//! while the simulator consumes sampled trajectories.

use serde::{Deserialize, Serialize};

use crate::model::Violation;

/// Table row for the `tabulated` family: a value with a sampling weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableEntry {
    pub value: f64,
    pub weight: f64,
}

/// Law of the infectious-load trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum InfectivityModel {
    /// Constant `level` over an exponentially distributed duration with the
    /// given `rate`. With this law the mean-field system reduces to the
    /// classical SIR ODE.
    Markov { level: f64, rate: f64 },
    /// Constant `level` over a deterministic `duration`.
    FixedDuration { level: f64, duration: f64 },
    /// Piecewise-linear tent: 0 at age 0, `peak` at `peak_time`, back to 0
    /// at a duration drawn uniformly from `[duration_min, duration_max]`.
    Hump { peak: f64, peak_time: f64, duration_min: f64, duration_max: f64 },
    /// Piecewise-constant trajectory: the duration is drawn from the
    /// `durations` table, split into `pieces` equal segments whose positive
    /// levels are drawn i.i.d. from the `levels` table.
    Tabulated { pieces: usize, levels: Vec<TableEntry>, durations: Vec<TableEntry> },
}

/// One sampled trajectory. `nodes` are `(age, level)` pairs sorted by age,
/// starting at age 0; the curve is zero outside `[0, eta)`.
#[derive(Clone, Debug, PartialEq)]
pub struct InfectivityTrajectory {
    nodes: Vec<(f64, f64)>,
    eta: f64,
    interp: Interp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Interp {
    Step,
    Linear,
}

impl InfectivityTrajectory {
    /// Transmission rate at the given infectious age.
    #[inline]
    pub fn eval(&self, age: f64) -> f64 {
        if !(age >= 0.0) || age >= self.eta {
            return 0.0;
        }
        match self.interp {
            Interp::Step => {
                // nodes are few; linear scan beats binary search here
                let mut level = 0.0;
                for &(t, v) in &self.nodes {
                    if t <= age {
                        level = v;
                    } else {
                        break;
                    }
                }
                level
            }
            Interp::Linear => {
                let mut prev = self.nodes[0];
                for &(t, v) in &self.nodes[1..] {
                    if age < t {
                        let w = (age - prev.0) / (t - prev.0);
                        return prev.1 + w * (v - prev.1);
                    }
                    prev = (t, v);
                }
                prev.1
            }
        }
    }

    /// Infectious duration; recovery happens exactly at this age.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn nodes(&self) -> &[(f64, f64)] {
        &self.nodes
    }
}

impl InfectivityModel {
    /// Deterministic uniform bound: every trajectory satisfies
    /// `0 <= λ(t) <= lambda_star()`.
    pub fn lambda_star(&self) -> f64 {
        match self {
            InfectivityModel::Markov { level, .. } => *level,
            InfectivityModel::FixedDuration { level, .. } => *level,
            InfectivityModel::Hump { peak, .. } => *peak,
            InfectivityModel::Tabulated { levels, .. } => {
                levels.iter().map(|e| e.value).fold(0.0, f64::max)
            }
        }
    }

    pub fn validate(&self, which: &'static str) -> Vec<Violation> {
        let mut msgs: Vec<String> = Vec::new();
        let finite_pos = |x: f64| x.is_finite() && x > 0.0;
        match self {
            InfectivityModel::Markov { level, rate } => {
                if !level.is_finite() || *level < 0.0 {
                    msgs.push(format!("level must be finite and >= 0, got {level}"));
                }
                if !finite_pos(*rate) {
                    msgs.push(format!("rate must be positive, got {rate}"));
                }
            }
            InfectivityModel::FixedDuration { level, duration } => {
                if !level.is_finite() || *level < 0.0 {
                    msgs.push(format!("level must be finite and >= 0, got {level}"));
                }
                if !finite_pos(*duration) {
                    msgs.push(format!("duration must be positive, got {duration}"));
                }
            }
            InfectivityModel::Hump { peak, peak_time, duration_min, duration_max } => {
                if !peak.is_finite() || *peak < 0.0 {
                    msgs.push(format!("peak must be finite and >= 0, got {peak}"));
                }
                if !finite_pos(*peak_time) {
                    msgs.push(format!("peak_time must be positive, got {peak_time}"));
                }
                if !finite_pos(*duration_min) || !finite_pos(*duration_max) {
                    msgs.push("durations must be positive".into());
                } else if !(*peak_time < *duration_min) {
                    msgs.push(format!(
                        "peak_time ({peak_time}) must lie strictly before duration_min ({duration_min})"
                    ));
                } else if *duration_min > *duration_max {
                    msgs.push(format!(
                        "duration_min ({duration_min}) exceeds duration_max ({duration_max})"
                    ));
                }
            }
            InfectivityModel::Tabulated { pieces, levels, durations } => {
                if *pieces == 0 {
                    msgs.push("pieces must be at least 1".into());
                }
                if levels.is_empty() {
                    msgs.push("levels table is empty".into());
                }
                if durations.is_empty() {
                    msgs.push("durations table is empty".into());
                }
                // positive levels keep the duration equal to the support of λ
                if levels.iter().any(|e| !finite_pos(e.value) || !finite_pos(e.weight)) {
                    msgs.push("level values and weights must be positive".into());
                }
                if durations.iter().any(|e| !finite_pos(e.value) || !finite_pos(e.weight)) {
                    msgs.push("duration values and weights must be positive".into());
                }
            }
        }
        msgs.into_iter().map(|message| Violation::Infectivity { which, message }).collect()
    }

    /// Draw one trajectory. All randomness comes from `rng`, so a dedicated
    /// substream per individual makes the draw order-independent.
    pub fn sample_trajectory(&self, rng: &mut impl rand::Rng) -> InfectivityTrajectory {
        match self {
            InfectivityModel::Markov { level, rate } => {
                let eta = crate::rng::exponential(rng, *rate);
                InfectivityTrajectory { nodes: vec![(0.0, *level)], eta, interp: Interp::Step }
            }
            InfectivityModel::FixedDuration { level, duration } => InfectivityTrajectory {
                nodes: vec![(0.0, *level)],
                eta: *duration,
                interp: Interp::Step,
            },
            InfectivityModel::Hump { peak, peak_time, duration_min, duration_max } => {
                let u: f64 = rng.random();
                let eta = duration_min + u * (duration_max - duration_min);
                InfectivityTrajectory {
                    nodes: vec![(0.0, 0.0), (*peak_time, *peak), (eta, 0.0)],
                    eta,
                    interp: Interp::Linear,
                }
            }
            InfectivityModel::Tabulated { pieces, levels, durations } => {
                let eta = sample_table(durations, rng);
                let nodes = (0..*pieces)
                    .map(|k| (k as f64 * eta / *pieces as f64, sample_table(levels, rng)))
                    .collect();
                InfectivityTrajectory { nodes, eta, interp: Interp::Step }
            }
        }
    }

    /// Mean curve `E[λ(t)]`. Closed form for all families except
    /// `tabulated`, which is an exact expectation over its duration table.
    pub fn mean_lambda(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match self {
            InfectivityModel::Markov { level, rate } => level * (-rate * t).exp(),
            InfectivityModel::FixedDuration { level, duration } => {
                if t < *duration {
                    *level
                } else {
                    0.0
                }
            }
            InfectivityModel::Hump { peak, peak_time, duration_min, duration_max } => {
                let (p, a) = (*peak_time, *peak);
                if t < p {
                    return a * t / p;
                }
                if *duration_min == *duration_max {
                    let h = *duration_min;
                    return if t < h { a * (h - t) / (h - p) } else { 0.0 };
                }
                // E[(h-t)/(h-p) ; h > t], h uniform on [duration_min, duration_max]:
                // antiderivative in h is (h-p) + (p-t) ln(h-p)
                let lo = t.max(*duration_min);
                let hi = *duration_max;
                if lo >= hi {
                    return 0.0;
                }
                let anti = |h: f64| (h - p) + (p - t) * (h - p).ln();
                a * (anti(hi) - anti(lo)) / (duration_max - duration_min)
            }
            InfectivityModel::Tabulated { levels, durations, .. } => {
                // segment levels are i.i.d., so E[λ(t) | η=d] = mean level for t < d
                let wsum: f64 = levels.iter().map(|e| e.weight).sum();
                let mean_level: f64 =
                    levels.iter().map(|e| e.value * e.weight).sum::<f64>() / wsum;
                let dsum: f64 = durations.iter().map(|e| e.weight).sum();
                let mut acc = 0.0;
                for e in durations {
                    if t < e.value {
                        acc += e.weight * mean_level;
                    }
                }
                acc / dsum
            }
        }
    }

    /// Duration CDF `P(eta <= t)` (right-continuous).
    pub fn duration_cdf(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match self {
            InfectivityModel::Markov { rate, .. } => -(-rate * t).exp_m1(),
            InfectivityModel::FixedDuration { duration, .. } => {
                if t >= *duration {
                    1.0
                } else {
                    0.0
                }
            }
            InfectivityModel::Hump { duration_min, duration_max, .. } => {
                if duration_min == duration_max {
                    return if t >= *duration_min { 1.0 } else { 0.0 };
                }
                ((t - duration_min) / (duration_max - duration_min)).clamp(0.0, 1.0)
            }
            InfectivityModel::Tabulated { durations, .. } => {
                let dsum: f64 = durations.iter().map(|e| e.weight).sum();
                durations.iter().filter(|e| e.value <= t).map(|e| e.weight).sum::<f64>() / dsum
            }
        }
    }

    /// Age beyond which `mean_lambda` is treated as exactly zero; the
    /// mean-field solver truncates Volterra history there. Bounded-support
    /// families return their maximum duration; the exponential tail of the
    /// markov family is cut where it falls below 1e-12.
    pub fn mean_lambda_cutoff(&self) -> f64 {
        match self {
            InfectivityModel::Markov { level, rate } => {
                if *level <= 0.0 {
                    0.0
                } else {
                    (level / 1e-12).ln() / rate
                }
            }
            InfectivityModel::FixedDuration { duration, .. } => *duration,
            InfectivityModel::Hump { duration_max, .. } => *duration_max,
            InfectivityModel::Tabulated { durations, .. } => {
                durations.iter().map(|e| e.value).fold(0.0, f64::max)
            }
        }
    }
}

fn sample_table(table: &[TableEntry], rng: &mut impl rand::Rng) -> f64 {
    let wsum: f64 = table.iter().map(|e| e.weight).sum();
    let mut u: f64 = rng.random::<f64>() * wsum;
    for e in table {
        u -= e.weight;
        if u < 0.0 {
            return e.value;
        }
    }
    table.last().expect("non-empty table").value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn hump() -> InfectivityModel {
        InfectivityModel::Hump { peak: 1.0, peak_time: 1.0, duration_min: 2.0, duration_max: 2.0 }
    }

    #[test]
    fn hump_is_a_tent() {
        let mut rng = substream(0, &[1]);
        let traj = hump().sample_trajectory(&mut rng);
        assert_eq!(traj.eta(), 2.0);
        assert_eq!(traj.eval(0.0), 0.0);
        assert_eq!(traj.eval(0.5), 0.5, "rising edge");
        assert_eq!(traj.eval(1.0), 1.0, "peak");
        assert_eq!(traj.eval(1.5), 0.5, "falling edge");
        assert_eq!(traj.eval(2.0), 0.0, "zero at the duration");
        assert_eq!(traj.eval(5.0), 0.0);
        assert_eq!(traj.eval(-0.1), 0.0);
    }

    #[test]
    fn hump_duration_cdf_is_uniform() {
        let m = InfectivityModel::Hump {
            peak: 1.0,
            peak_time: 0.5,
            duration_min: 1.0,
            duration_max: 3.0,
        };
        assert_eq!(m.duration_cdf(0.5), 0.0);
        assert_eq!(m.duration_cdf(2.0), 0.5);
        assert_eq!(m.duration_cdf(3.0), 1.0);
        assert_eq!(m.duration_cdf(4.0), 1.0);
    }

    #[test]
    fn markov_mean_matches_level_times_survival() {
        let m = InfectivityModel::Markov { level: 0.7, rate: 0.3 };
        for k in 0..50 {
            let t = 0.25 * k as f64;
            let expected = 0.7 * (1.0 - m.duration_cdf(t));
            assert!(
                (m.mean_lambda(t) - expected).abs() < 1e-14,
                "markov mean at t={t}: {} vs level*(1-F) = {expected}",
                m.mean_lambda(t)
            );
        }
    }

    #[test]
    fn fixed_duration_mean_is_a_step() {
        let m = InfectivityModel::FixedDuration { level: 0.4, duration: 2.5 };
        assert_eq!(m.mean_lambda(2.49), 0.4);
        assert_eq!(m.mean_lambda(2.5), 0.0);
    }

    #[test]
    fn hump_mean_matches_numeric_expectation_over_durations() {
        // independent oracle: Simpson quadrature of the per-duration tent
        let m = InfectivityModel::Hump {
            peak: 0.8,
            peak_time: 0.6,
            duration_min: 1.0,
            duration_max: 3.0,
        };
        let tent = |t: f64, h: f64| -> f64 {
            if t < 0.0 || t >= h {
                0.0
            } else if t < 0.6 {
                0.8 * t / 0.6
            } else {
                0.8 * (h - t) / (h - 0.6)
            }
        };
        for &t in &[0.0, 0.3, 0.6, 0.9, 1.5, 2.0, 2.9, 3.0, 3.5] {
            let n = 40_000;
            let mut acc = 0.0;
            for j in 0..=n {
                let h = 1.0 + 2.0 * j as f64 / n as f64;
                let w = if j == 0 || j == n {
                    1.0
                } else if j % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                acc += w * tent(t, h);
            }
            let oracle = acc * (2.0 / n as f64) / 3.0 / 2.0;
            assert!(
                (m.mean_lambda(t) - oracle).abs() < 1e-6,
                "hump mean at t={t}: {} vs quadrature {oracle}",
                m.mean_lambda(t)
            );
        }
    }

    #[test]
    fn hump_mean_is_continuous_at_the_peak() {
        let m = InfectivityModel::Hump {
            peak: 0.8,
            peak_time: 0.6,
            duration_min: 1.0,
            duration_max: 3.0,
        };
        assert!((m.mean_lambda(0.6) - 0.8).abs() < 1e-12);
        assert!((m.mean_lambda(0.6 - 1e-9) - 0.8).abs() < 1e-8);
    }

    #[test]
    fn tabulated_mean_matches_hand_sum() {
        let m = InfectivityModel::Tabulated {
            pieces: 3,
            levels: vec![
                TableEntry { value: 0.2, weight: 1.0 },
                TableEntry { value: 0.8, weight: 3.0 },
            ],
            durations: vec![
                TableEntry { value: 1.0, weight: 1.0 },
                TableEntry { value: 2.0, weight: 1.0 },
            ],
        };
        let mean_level = (0.2 + 0.8 * 3.0) / 4.0;
        assert!((m.mean_lambda(0.5) - mean_level).abs() < 1e-15, "both durations active");
        assert!((m.mean_lambda(1.5) - 0.5 * mean_level).abs() < 1e-15, "one duration active");
        assert_eq!(m.mean_lambda(2.5), 0.0);
        assert_eq!(m.lambda_star(), 0.8);
    }

    #[test]
    fn trajectories_respect_bounds_and_support() {
        let laws = [
            InfectivityModel::Markov { level: 0.5, rate: 0.25 },
            InfectivityModel::FixedDuration { level: 0.3, duration: 1.7 },
            InfectivityModel::Hump {
                peak: 0.9,
                peak_time: 0.4,
                duration_min: 0.8,
                duration_max: 2.2,
            },
            InfectivityModel::Tabulated {
                pieces: 4,
                levels: vec![
                    TableEntry { value: 0.1, weight: 1.0 },
                    TableEntry { value: 0.6, weight: 1.0 },
                ],
                durations: vec![
                    TableEntry { value: 0.5, weight: 2.0 },
                    TableEntry { value: 1.5, weight: 1.0 },
                ],
            },
        ];
        for (li, law) in laws.iter().enumerate() {
            let star = law.lambda_star();
            for seed in 0..200u64 {
                let mut rng = substream(seed, &[li as u64]);
                let traj = law.sample_trajectory(&mut rng);
                assert!(traj.eta() > 0.0);
                for k in 0..=100 {
                    let age = traj.eta() * 1.2 * k as f64 / 100.0;
                    let v = traj.eval(age);
                    assert!(
                        (0.0..=star + 1e-15).contains(&v),
                        "law {li}: λ({age}) = {v} outside [0, {star}]"
                    );
                    if age >= traj.eta() {
                        assert_eq!(v, 0.0, "law {li}: positive rate past eta");
                    }
                }
            }
        }
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        let bad = InfectivityModel::Hump {
            peak: 1.0,
            peak_time: 2.0,
            duration_min: 1.0,
            duration_max: 3.0,
        };
        assert!(!bad.validate("new").is_empty(), "peak after duration_min must be rejected");
        let bad = InfectivityModel::Markov { level: 0.5, rate: 0.0 };
        assert!(!bad.validate("new").is_empty(), "zero rate must be rejected");
        let ok = InfectivityModel::Markov { level: 0.0, rate: 1.0 };
        assert!(ok.validate("new").is_empty(), "zero level (no transmission) is legal");
    }
}
