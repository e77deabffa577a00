//! Exact event-driven simulation of the finite-population system.
//!
//! Each susceptible individual carries a homogeneous Poisson candidate
//! stream at its personal majorant rate; candidates are accepted by
//! thinning against the current force of infection, so the simulated law
//! is exact (no time discretization). Recoveries fire at `tau + eta`
//! exactly. All randomness is drawn from per-individual substreams keyed
//! by the master seed, which makes runs reproducible event-for-event and
//! independent of scheduling order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::infectivity::InfectivityTrajectory;
use crate::kernel::{empirical_denominators, estimate_c_hat, phi_trunc, Kernel};
use crate::measure::{
    exact_sum, MeasureComponent, MeasureError, PairingTable, TestFunction,
};
use crate::model::{Compartment, ConfigError, ExperimentConfig, Population};
use crate::rng::{self, tag};

/// How per-infector denominators enter the rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RateMode {
    /// Divide by the bare contact density to the power gamma.
    Raw,
    /// Floor the contact density at `c_hat / 2` before taking the power.
    Truncated { c_hat: f64 },
}

impl RateMode {
    fn denominator_power(self, d: f64, gamma: f64) -> f64 {
        match self {
            RateMode::Raw => d.powf(gamma),
            RateMode::Truncated { c_hat } => phi_trunc(d, c_hat, gamma),
        }
    }
}

/// Truncated mode with the floor estimated from the limiting density of
/// the supplied configuration.
pub fn truncated_mode(
    config: &ExperimentConfig,
    base_per_axis: usize,
) -> Result<RateMode, ConfigError> {
    let density = config.total_density()?;
    let c_hat = estimate_c_hat(&config.kernel, &config.domain, &density, base_per_axis);
    assert!(c_hat > 0.0, "validated configs have a positive denominator floor, got {c_hat}");
    Ok(RateMode::Truncated { c_hat })
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("population holds {actual} individuals but the config requests {expected}")]
    PopulationMismatch { expected: usize, actual: usize },
    #[error("population was sampled under seed {population} but the config carries {config}")]
    SeedMismatch { population: u64, config: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    Infection,
    Recovery,
}

impl EventKind {
    pub fn short(self) -> &'static str {
        match self {
            EventKind::Infection => "infect",
            EventKind::Recovery => "recover",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub time: f64,
    pub id: u32,
    pub kind: EventKind,
}

/// One infection with its sampled course.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InfectionRecord {
    pub id: u32,
    pub tau: f64,
    pub eta: f64,
}

/// Ordered record of everything that happened in a run. Initial
/// infections appear as events at time zero.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventLog {
    pub events: Vec<Event>,
    pub infections: Vec<InfectionRecord>,
}

struct ActiveInfection {
    id: u32,
    tau: f64,
    inv_denom_pow: f64,
    traj: InfectivityTrajectory,
}

const NOT_ACTIVE: u32 = u32::MAX;

/// Mutable simulation state over a borrowed population: compartments, the
/// set of currently infectious individuals with their trajectories, and
/// the precomputed denominators and thinning bounds.
pub struct SimState<'a> {
    kernel: &'a Kernel,
    pop: &'a Population,
    mode: RateMode,
    lambda_star: f64,
    denominators: Vec<f64>,
    inv_denom_pow: Vec<f64>,
    bounds: Vec<f64>,
    compartments: Vec<Compartment>,
    active: Vec<ActiveInfection>,
    active_slot: Vec<u32>,
    counts: [usize; 3],
    time: f64,
}

impl<'a> SimState<'a> {
    pub fn new(
        kernel: &'a Kernel,
        pop: &'a Population,
        gamma: f64,
        mode: RateMode,
        lambda_star: f64,
    ) -> SimState<'a> {
        let n = pop.len();
        let denominators = empirical_denominators(kernel, pop);
        let inv_denom_pow: Vec<f64> = denominators
            .iter()
            .map(|&d| {
                debug_assert!(d > 0.0, "contact density vanished at an occupied position");
                1.0 / mode.denominator_power(d, gamma)
            })
            .collect();

        // B_i = lambda_star * (1/N) Σ_j K(X_i, X_j) / denom_j; the sum runs
        // over all j (any individual may become infectious later), so the
        // bound is static for the whole run
        let bounds: Vec<f64> = if let Kernel::Constant { value } = kernel {
            let row: f64 = inv_denom_pow.iter().map(|inv| value * inv).sum();
            vec![lambda_star * (row / n as f64); n]
        } else {
            let dim = pop.dim();
            let flat = pop.positions_flat();
            (0..n)
                .map(|i| {
                    let xi = &flat[i * dim..(i + 1) * dim];
                    let mut row = 0.0;
                    for j in 0..n {
                        let xj = &flat[j * dim..(j + 1) * dim];
                        let mut d2 = 0.0;
                        for c in 0..dim {
                            let dc = xi[c] - xj[c];
                            d2 += dc * dc;
                        }
                        row += kernel.eval_dist2(d2) * inv_denom_pow[j];
                    }
                    lambda_star * (row / n as f64)
                })
                .collect()
        };

        SimState {
            kernel,
            pop,
            mode,
            lambda_star,
            denominators,
            inv_denom_pow,
            bounds,
            compartments: pop.initial_compartments().to_vec(),
            active: Vec::new(),
            active_slot: vec![NOT_ACTIVE; n],
            counts: pop.counts(),
            time: 0.0,
        }
    }

    pub fn population(&self) -> &Population {
        self.pop
    }

    pub fn mode(&self) -> RateMode {
        self.mode
    }

    pub fn lambda_star(&self) -> f64 {
        self.lambda_star
    }

    /// Contact densities at the individuals' own positions.
    pub fn denominators(&self) -> &[f64] {
        &self.denominators
    }

    pub fn compartment(&self, id: usize) -> Compartment {
        self.compartments[id]
    }

    /// Current (S, I, R) sizes; they sum to N at all times.
    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// The force of infection at position `x` and time `t`:
    /// `(1/N) Σ_{j active} K(x, X_j) λ_j(t - tau_j) / denom_j`.
    pub fn gamma_at(&self, t: f64, x: &[f64]) -> f64 {
        let dim = self.pop.dim();
        let flat = self.pop.positions_flat();
        let mut acc = 0.0;
        for a in &self.active {
            let lam = a.traj.eval(t - a.tau);
            if lam > 0.0 {
                let xj = &flat[a.id as usize * dim..(a.id as usize + 1) * dim];
                let mut d2 = 0.0;
                for c in 0..dim {
                    let dc = x[c] - xj[c];
                    d2 += dc * dc;
                }
                acc += self.kernel.eval_dist2(d2) * lam * a.inv_denom_pow;
            }
        }
        acc / self.pop.len() as f64
    }

    /// Static majorant of `gamma_at(t, X_i)` over every reachable state.
    pub fn thinning_bound(&self, id: usize) -> f64 {
        self.bounds[id]
    }

    /// Mark `id` infected at time `tau` with the given course; returns the
    /// duration `eta`. Initially infectious individuals are activated
    /// through this with `tau = 0`.
    pub fn infect(&mut self, id: usize, tau: f64, traj: InfectivityTrajectory) -> f64 {
        assert_eq!(self.active_slot[id], NOT_ACTIVE, "individual {id} is already infectious");
        match self.compartments[id] {
            Compartment::Susceptible => {
                self.compartments[id] = Compartment::Infectious;
                self.counts[0] -= 1;
                self.counts[1] += 1;
            }
            Compartment::Infectious => {
                assert_eq!(tau, 0.0, "individual {id} can only start infectious at time zero");
            }
            Compartment::Recovered => {
                panic!("recovered individual {id} cannot be reinfected in this model");
            }
        }
        debug_assert!(traj.eval(0.0) <= self.lambda_star * (1.0 + 1e-12));
        let eta = traj.eta();
        self.active_slot[id] = self.active.len() as u32;
        self.active.push(ActiveInfection {
            id: id as u32,
            tau,
            inv_denom_pow: self.inv_denom_pow[id],
            traj,
        });
        self.time = self.time.max(tau);
        eta
    }

    /// Move `id` from infectious to recovered and drop it from the active
    /// set.
    pub fn recover(&mut self, id: usize) {
        assert_eq!(
            self.compartments[id],
            Compartment::Infectious,
            "recovery fired for individual {id} which is not infectious"
        );
        let slot = self.active_slot[id] as usize;
        assert!(slot != NOT_ACTIVE as usize);
        self.compartments[id] = Compartment::Recovered;
        self.counts[1] -= 1;
        self.counts[2] += 1;
        self.active_slot[id] = NOT_ACTIVE;
        self.active.swap_remove(slot);
        if let Some(moved) = self.active.get(slot) {
            self.active_slot[moved.id as usize] = slot as u32;
        }
    }

    fn snapshot(&self, t: f64) -> Snapshot {
        let mut force: Vec<(u32, f64)> = self
            .active
            .iter()
            .filter_map(|a| {
                let w = a.traj.eval(t - a.tau);
                (w > 0.0).then_some((a.id, w))
            })
            .collect();
        force.sort_unstable_by_key(|&(id, _)| id);
        Snapshot { t, compartments: self.compartments.clone(), force, counts: self.counts }
    }
}

/// State of the whole population at one snapshot time. `force` holds
/// `(id, λ_id(t - tau_id))` for the currently loaded infectious
/// individuals, ascending by id, zero weights dropped.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub compartments: Vec<Compartment>,
    pub force: Vec<(u32, f64)>,
    pub counts: [usize; 3],
}

/// Empirical measures of a run: the static positions plus per-snapshot
/// compartments and force weights. Pairings against test functions use
/// exactly rounded summation, so sums split by compartment recombine to
/// the whole-population pairing bit-for-bit.
#[derive(Clone, Debug)]
pub struct EpidemicTrajectory {
    dim: usize,
    n: usize,
    positions: Vec<f64>,
    snapshots: Vec<Snapshot>,
}

impl EpidemicTrajectory {
    pub fn new(pop: &Population, snapshots: Vec<Snapshot>) -> Self {
        EpidemicTrajectory {
            dim: pop.dim(),
            n: pop.len(),
            positions: pop.positions_flat().to_vec(),
            snapshots,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn position(&self, id: usize) -> &[f64] {
        &self.positions[id * self.dim..(id + 1) * self.dim]
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn snapshot_index(&self, t: f64) -> Result<usize, MeasureError> {
        self.snapshots
            .iter()
            .position(|s| (s.t - t).abs() <= 1e-9)
            .ok_or(MeasureError::UnknownSnapshot { t })
    }

    /// `(µ_component at snapshot `snap`, φ)`.
    pub fn pair(&self, snap: usize, which: MeasureComponent, phi: &TestFunction) -> f64 {
        let s = &self.snapshots[snap];
        let n = self.n as f64;
        match which {
            MeasureComponent::F => {
                exact_sum(
                    s.force.iter().map(|&(id, w)| w * phi.eval(self.position(id as usize))),
                ) / n
            }
            _ => {
                let target = member_compartment(which);
                exact_sum(
                    (0..self.n)
                        .filter(|&i| s.compartments[i] == target)
                        .map(|i| phi.eval(self.position(i))),
                ) / n
            }
        }
    }

    /// The S, I and R pairings at `snap` summed as one exactly rounded
    /// pass over the compartments in that order. Because every individual
    /// sits in exactly one compartment, this equals [`total_pairing`]
    /// bit-for-bit at every snapshot.
    ///
    /// [`total_pairing`]: EpidemicTrajectory::total_pairing
    pub fn partition_pairing(&self, snap: usize, phi: &TestFunction) -> f64 {
        let s = &self.snapshots[snap];
        let member = |target: Compartment| {
            (0..self.n)
                .filter(move |&i| s.compartments[i] == target)
                .map(|i| phi.eval(self.position(i)))
        };
        exact_sum(
            member(Compartment::Susceptible)
                .chain(member(Compartment::Infectious))
                .chain(member(Compartment::Recovered)),
        ) / self.n as f64
    }

    /// `(µ̄, φ)` over the full static population; time-independent.
    pub fn total_pairing(&self, phi: &TestFunction) -> f64 {
        exact_sum((0..self.n).map(|i| phi.eval(self.position(i)))) / self.n as f64
    }

    /// Total force `(µ_F, 1)` at a snapshot.
    pub fn total_force(&self, snap: usize) -> f64 {
        exact_sum(self.snapshots[snap].force.iter().map(|&(_, w)| w)) / self.n as f64
    }

    /// Pairings over all snapshots, components and test functions.
    pub fn pairings(&self, phis: &[TestFunction]) -> PairingTable {
        let comps = MeasureComponent::ALL.to_vec();
        let mut values = Vec::with_capacity(self.snapshots.len() * comps.len() * phis.len());
        for snap in 0..self.snapshots.len() {
            for &comp in &comps {
                for phi in phis {
                    values.push(self.pair(snap, comp, phi));
                }
            }
        }
        let names = phis.iter().map(|f| f.name()).collect();
        PairingTable::new(self.times(), comps, names, values)
    }
}

fn member_compartment(which: MeasureComponent) -> Compartment {
    match which {
        MeasureComponent::S => Compartment::Susceptible,
        MeasureComponent::I => Compartment::Infectious,
        MeasureComponent::R => Compartment::Recovered,
        MeasureComponent::F => unreachable!("the force measure has no membership compartment"),
    }
}

/// Run counters for performance and diagnostic reporting.
#[derive(Clone, Copy, Debug)]
pub struct Telemetry {
    pub candidates: u64,
    pub accepted: u64,
    pub sim_seconds: f64,
    /// Minimum contact density over the individuals' own positions.
    pub min_position_denominator: f64,
    pub final_counts: [usize; 3],
}

pub struct SimOutput {
    pub log: EventLog,
    pub trajectory: EpidemicTrajectory,
    /// Sampled course per individual, indexed by id; `None` if never
    /// infected.
    pub trajectories: Vec<Option<InfectivityTrajectory>>,
    pub telemetry: Telemetry,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum QueueKind {
    Recovery,
    Candidate,
}

#[derive(Clone, Copy, Debug)]
struct QueueEntry {
    time: f64,
    id: u32,
    kind: QueueKind,
}

impl QueueEntry {
    fn rank(&self) -> u8 {
        match self.kind {
            QueueKind::Recovery => 0,
            QueueKind::Candidate => 1,
        }
    }
}

// ordering by (time, id, recovery-before-candidate); ties are measure zero
// but the order must still be deterministic
impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then_with(|| self.id.cmp(&other.id))
            .then_with(|| self.rank().cmp(&other.rank()))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for QueueEntry {}

/// Simulate one run of the validated configuration over the supplied
/// population. Event processing is globally time-ordered; snapshots are
/// taken once every event up to (and including) the snapshot time has
/// been applied.
pub fn simulate(
    config: &ExperimentConfig,
    pop: &Population,
    mode: RateMode,
) -> Result<SimOutput, SimError> {
    config.ensure_valid()?;
    if pop.len() != config.run.population {
        return Err(SimError::PopulationMismatch {
            expected: config.run.population,
            actual: pop.len(),
        });
    }
    if pop.master_seed() != config.run.master_seed {
        return Err(SimError::SeedMismatch {
            population: pop.master_seed(),
            config: config.run.master_seed,
        });
    }

    let started = std::time::Instant::now();
    let n = pop.len();
    let master = pop.master_seed();
    let horizon = config.run.horizon;
    let snapshot_times = config.snapshots();
    let mut state =
        SimState::new(&config.kernel, pop, config.run.gamma, mode, config.lambda_star());

    let mut log = EventLog::default();
    let mut trajectories: Vec<Option<InfectivityTrajectory>> = vec![None; n];
    let mut heap: BinaryHeap<std::cmp::Reverse<QueueEntry>> = BinaryHeap::new();
    let mut candidate_rng: Vec<Option<rand_chacha::ChaCha8Rng>> = Vec::with_capacity(n);
    let mut telemetry = Telemetry {
        candidates: 0,
        accepted: 0,
        sim_seconds: 0.0,
        min_position_denominator: state
            .denominators()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min),
        final_counts: [0; 3],
    };

    // initially infectious individuals carry the initial-course law, start
    // at tau = 0 and recover at eta
    for id in 0..n {
        if pop.initial_compartment(id) != Compartment::Infectious {
            continue;
        }
        let mut stream = rng::substream(master, &[tag::TRAJECTORY, id as u64]);
        let traj = config.infectivity.initial.sample_trajectory(&mut stream);
        let eta = state.infect(id, 0.0, traj.clone());
        trajectories[id] = Some(traj);
        log.events.push(Event { time: 0.0, id: id as u32, kind: EventKind::Infection });
        log.infections.push(InfectionRecord { id: id as u32, tau: 0.0, eta });
        if eta <= horizon {
            heap.push(std::cmp::Reverse(QueueEntry {
                time: eta,
                id: id as u32,
                kind: QueueKind::Recovery,
            }));
        }
    }

    // one pending candidate per susceptible, drawn from its own stream
    for id in 0..n {
        if pop.initial_compartment(id) == Compartment::Susceptible && state.thinning_bound(id) > 0.0
        {
            let mut stream = rng::substream(master, &[tag::CANDIDATES, id as u64]);
            let t = rng::exponential(&mut stream, state.thinning_bound(id));
            if t <= horizon {
                heap.push(std::cmp::Reverse(QueueEntry {
                    time: t,
                    id: id as u32,
                    kind: QueueKind::Candidate,
                }));
            }
            candidate_rng.push(Some(stream));
        } else {
            candidate_rng.push(None);
        }
    }

    let mut snapshots: Vec<Snapshot> = Vec::with_capacity(snapshot_times.len());
    let mut next_snap = 0usize;

    while let Some(std::cmp::Reverse(next)) = heap.peek().copied() {
        // snapshots strictly before the next event see the current state;
        // a snapshot exactly at an event time waits for the event
        while next_snap < snapshot_times.len() && snapshot_times[next_snap] < next.time {
            snapshots.push(state.snapshot(snapshot_times[next_snap]));
            next_snap += 1;
        }
        if next.time > horizon {
            break;
        }
        heap.pop();
        let id = next.id as usize;
        match next.kind {
            QueueKind::Recovery => {
                state.recover(id);
                log.events.push(Event { time: next.time, id: next.id, kind: EventKind::Recovery });
            }
            QueueKind::Candidate => {
                assert_eq!(
                    state.compartment(id),
                    Compartment::Susceptible,
                    "candidate fired for non-susceptible individual {id}"
                );
                let t = next.time;
                let bound = state.thinning_bound(id);
                let gamma = state.gamma_at(t, pop.position(id));
                assert!(
                    gamma <= bound * (1.0 + 1e-9),
                    "thinning bound violated for individual {id} at t = {t}: \
                     rate {gamma} exceeds bound {bound}"
                );
                telemetry.candidates += 1;
                let stream = candidate_rng[id].as_mut().expect("susceptible lost its stream");
                let u: f64 = rand::Rng::random(stream);
                if u * bound < gamma {
                    telemetry.accepted += 1;
                    let mut traj_stream = rng::substream(master, &[tag::TRAJECTORY, id as u64]);
                    let traj = config.infectivity.new.sample_trajectory(&mut traj_stream);
                    let eta = state.infect(id, t, traj.clone());
                    trajectories[id] = Some(traj);
                    log.events.push(Event { time: t, id: next.id, kind: EventKind::Infection });
                    log.infections.push(InfectionRecord { id: next.id, tau: t, eta });
                    let recovery = t + eta;
                    if recovery <= horizon {
                        heap.push(std::cmp::Reverse(QueueEntry {
                            time: recovery,
                            id: next.id,
                            kind: QueueKind::Recovery,
                        }));
                    }
                    candidate_rng[id] = None;
                } else {
                    let next_t = t + rng::exponential(stream, bound);
                    if next_t <= horizon {
                        heap.push(std::cmp::Reverse(QueueEntry {
                            time: next_t,
                            id: next.id,
                            kind: QueueKind::Candidate,
                        }));
                    }
                }
            }
        }
    }

    // remaining snapshots see the final state
    while next_snap < snapshot_times.len() {
        snapshots.push(state.snapshot(snapshot_times[next_snap]));
        next_snap += 1;
    }

    telemetry.final_counts = state.counts();
    telemetry.sim_seconds = started.elapsed().as_secs_f64();
    debug_assert_eq!(state.counts().iter().sum::<usize>(), n);

    Ok(SimOutput {
        log,
        trajectory: EpidemicTrajectory::new(pop, snapshots),
        trajectories,
        telemetry,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infectivity::InfectivityModel;
    use crate::model::{
        Domain, ExperimentConfig, InfectivityPair, InitialCondition, Population, RunSettings,
    };

    fn three_person_pop() -> Population {
        Population::from_parts(
            2,
            7,
            vec![0.2, 0.2, 0.8, 0.2, 0.5, 0.9],
            vec![Compartment::Susceptible, Compartment::Infectious, Compartment::Infectious],
        )
        .unwrap()
    }

    fn flat_course(level: f64, eta: f64) -> InfectivityTrajectory {
        InfectivityModel::FixedDuration { level, duration: eta }
            .sample_trajectory(&mut rng::substream(1, &[99]))
    }

    #[test]
    fn force_field_matches_hand_sum_for_three_individuals() {
        let kernel = Kernel::GaussianBump { scale: 0.3, floor: 0.0 };
        let pop = three_person_pop();
        let gamma = 0.5;
        let mut state = SimState::new(&kernel, &pop, gamma, RateMode::Raw, 0.7);
        state.infect(1, 0.0, flat_course(0.7, 2.0));
        state.infect(2, 0.0, flat_course(0.4, 1.0));

        // direct evaluation of the defining formula
        let denom = |j: usize| {
            let mut acc = 0.0;
            for l in 0..3 {
                acc += kernel.eval(pop.position(l), pop.position(j));
            }
            (acc / 3.0f64).powf(gamma)
        };
        let x = pop.position(0);
        let expect = (kernel.eval(x, pop.position(1)) * 0.7 / denom(1)
            + kernel.eval(x, pop.position(2)) * 0.4 / denom(2))
            / 3.0;
        let got = state.gamma_at(0.5, x);
        assert!(
            (got - expect).abs() <= 1e-14,
            "force at the susceptible: got {got}, hand value {expect}"
        );

        // individual 2 recovers at age 1, dropping its term
        let expect_late = kernel.eval(x, pop.position(1)) * 0.7 / denom(1) / 3.0;
        assert!((state.gamma_at(1.5, x) - expect_late).abs() <= 1e-14);

        // no infected individuals, no force
        state.recover(1);
        state.recover(2);
        assert_eq!(state.gamma_at(0.5, x), 0.0);
    }

    #[test]
    fn constant_kernel_homogeneous_reduction() {
        // K = 1, gamma = 1: denominators are 1, the force is the mean
        // current load, independent of position
        let kernel = Kernel::Constant { value: 1.0 };
        let pop = Population::from_parts(
            2,
            3,
            (0..20).flat_map(|i| vec![(i as f64 + 0.5) / 20.0, 0.5]).collect(),
            std::iter::once(Compartment::Infectious)
                .chain(std::iter::repeat(Compartment::Susceptible).take(19))
                .collect(),
        )
        .unwrap();
        let mut state = SimState::new(&kernel, &pop, 1.0, RateMode::Raw, 0.5);
        state.infect(0, 0.0, flat_course(0.5, 3.0));
        let n = 20.0;
        for id in 1..20 {
            assert_eq!(state.gamma_at(1.0, pop.position(id)), 0.5 / n);
            assert_eq!(state.thinning_bound(id), 0.5, "K = 1, gamma = 1 gives B = lambda_star");
        }
    }

    #[test]
    fn truncated_and_raw_agree_when_density_clears_the_floor() {
        let kernel = Kernel::GaussianBump { scale: 0.4, floor: 0.05 };
        let pop = three_person_pop();
        let raw = SimState::new(&kernel, &pop, 0.8, RateMode::Raw, 1.0);
        // floor far below every contact density: the truncation never binds
        let c_hat = raw.denominators().iter().copied().fold(f64::INFINITY, f64::min);
        let mut trunc =
            SimState::new(&kernel, &pop, 0.8, RateMode::Truncated { c_hat }, 1.0);
        let mut raw = SimState::new(&kernel, &pop, 0.8, RateMode::Raw, 1.0);
        for s in [&mut raw, &mut trunc] {
            s.infect(1, 0.0, flat_course(1.0, 5.0));
        }
        for id in [0usize, 2] {
            assert_eq!(
                raw.gamma_at(0.3, pop.position(id)),
                trunc.gamma_at(0.3, pop.position(id)),
                "rates must coincide individual-by-individual when the floor is slack"
            );
            assert_eq!(raw.thinning_bound(id), trunc.thinning_bound(id));
        }
    }

    fn tiny_config(n: usize, level: f64) -> ExperimentConfig {
        ExperimentConfig {
            domain: Domain::new(2),
            run: RunSettings {
                population: n,
                gamma: 1.0,
                horizon: 4.0,
                master_seed: 11,
                snapshot_times: None,
                snapshot_count: Some(5),
                truncation: crate::model::TruncationMode::Raw,
            },
            kernel: Kernel::Constant { value: 1.0 },
            infectivity: InfectivityPair {
                initial: InfectivityModel::FixedDuration { level, duration: 1.5 },
                new: InfectivityModel::FixedDuration { level, duration: 1.5 },
            },
            initial_condition: InitialCondition {
                frac_s: 0.8,
                frac_i: 0.2,
                frac_r: 0.0,
                density_s: crate::model::DensitySpec::Uniform,
                density_i: crate::model::DensitySpec::Uniform,
                density_r: crate::model::DensitySpec::Uniform,
            },
        }
    }

    #[test]
    fn zero_infectivity_means_no_infections_and_scheduled_recoveries() {
        let config = tiny_config(10, 0.0);
        let pop = crate::model::sample_population(&config).unwrap();
        let out = simulate(&config, &pop, RateMode::Raw).unwrap();
        assert!(
            out.log.events.iter().all(|e| e.kind != EventKind::Infection || e.time == 0.0),
            "a zero course must never transmit"
        );
        assert_eq!(out.telemetry.final_counts, [8, 0, 2], "both seeds recover at eta = 1.5");
        assert_eq!(out.telemetry.candidates, 0, "zero bound means no candidate stream at all");
        let last = out.trajectory.snapshots().len() - 1;
        assert_eq!(out.trajectory.snapshots()[last].counts, [8, 0, 2]);
    }

    #[test]
    fn no_initial_infectious_means_nothing_happens() {
        let mut config = tiny_config(10, 0.5);
        config.initial_condition.frac_s = 1.0;
        config.initial_condition.frac_i = 0.0;
        let pop = crate::model::sample_population(&config).unwrap();
        let out = simulate(&config, &pop, RateMode::Raw).unwrap();
        assert!(out.log.events.is_empty());
        assert_eq!(out.telemetry.final_counts, [10, 0, 0]);
        for snap in out.trajectory.snapshots() {
            assert_eq!(snap.counts, [10, 0, 0]);
            assert!(snap.force.is_empty());
        }
    }

    #[test]
    fn event_log_is_ordered_and_single_entry_per_individual() {
        let config = tiny_config(60, 0.9);
        let pop = crate::model::sample_population(&config).unwrap();
        let out = simulate(&config, &pop, RateMode::Raw).unwrap();
        assert!(out.telemetry.accepted > 0, "this configuration should produce infections");
        let times: Vec<f64> = out.log.events.iter().map(|e| e.time).collect();
        assert!(times.windows(2).all(|w| w[0] <= w[1]), "event times must be nondecreasing");
        let mut infected = std::collections::HashSet::new();
        let mut recovered = std::collections::HashSet::new();
        for e in &out.log.events {
            let fresh = match e.kind {
                EventKind::Infection => infected.insert(e.id),
                EventKind::Recovery => recovered.insert(e.id),
            };
            assert!(fresh, "individual {} saw a duplicate {:?}", e.id, e.kind);
        }
        assert!(recovered.is_subset(&infected));
        for r in &out.log.infections {
            let rec = out
                .log
                .events
                .iter()
                .find(|e| e.id == r.id && e.kind == EventKind::Recovery);
            if let Some(rec) = rec {
                assert_eq!(rec.time, r.tau + r.eta, "recovery must fire at tau + eta exactly");
            }
        }
    }

    #[test]
    fn identical_seeds_reproduce_the_log_bit_for_bit() {
        let config = tiny_config(40, 0.8);
        let pop = crate::model::sample_population(&config).unwrap();
        let a = simulate(&config, &pop, RateMode::Raw).unwrap();
        let b = simulate(&config, &pop, RateMode::Raw).unwrap();
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn conservation_of_pairings_is_exact_at_every_snapshot() {
        let config = tiny_config(60, 0.9);
        let pop = crate::model::sample_population(&config).unwrap();
        let out = simulate(&config, &pop, RateMode::Raw).unwrap();
        let phis = crate::measure::default_library(2);
        for snap in 0..out.trajectory.snapshots().len() {
            for phi in &phis {
                let total = out.trajectory.total_pairing(phi);
                let split = out.trajectory.partition_pairing(snap, phi);
                assert_eq!(
                    split, total,
                    "S+I+R pairing must reproduce the whole-population pairing exactly"
                );
            }
            let one = TestFunction::constant();
            let s = out.trajectory.pair(snap, MeasureComponent::S, &one);
            let i = out.trajectory.pair(snap, MeasureComponent::I, &one);
            let r = out.trajectory.pair(snap, MeasureComponent::R, &one);
            assert_eq!(s + i + r, 1.0, "counts over N are exact dyadic-free sums");
        }
    }

    #[test]
    fn force_measure_supported_on_loaded_infectious_only() {
        let config = tiny_config(60, 0.9);
        let pop = crate::model::sample_population(&config).unwrap();
        let out = simulate(&config, &pop, RateMode::Raw).unwrap();
        for snap in out.trajectory.snapshots() {
            for &(id, w) in &snap.force {
                assert!(w > 0.0);
                assert_eq!(snap.compartments[id as usize], Compartment::Infectious);
                let rec = out
                    .log
                    .infections
                    .iter()
                    .find(|r| r.id == id)
                    .expect("force weight on a never-infected individual");
                assert!(snap.t < rec.tau + rec.eta, "weight must vanish from age eta on");
            }
            let bound = config.lambda_star() * snap.counts[1] as f64 / 60.0;
            let total = exact_sum(snap.force.iter().map(|&(_, w)| w)) / 60.0;
            assert!((0.0..=bound * (1.0 + 1e-12)).contains(&total));
        }
    }
}
