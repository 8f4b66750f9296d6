//! Gillespie direct-method simulator for well-mixed reaction networks.
//!
//! The reaction index is chosen by partitioning `[0, 1]` into bins of width
//! `r_j / sum(r)` and locating `p1`; the waiting time is `-ln(p2) / sum(r)`.
//! Trajectories are sampled at caller-supplied observation times with the
//! right-continuous convention: the state reported at `t` is the state after
//! the last event whose time is `<= t`.

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// A well-mixed reaction network with integer species counts.
pub trait ReactionNetwork {
    fn n_species(&self) -> usize;
    fn n_reactions(&self) -> usize;
    /// Writes the propensity of every reaction (units 1/time) into `out`.
    fn propensities(&self, counts: &[i64], out: &mut [f64]);
    fn stoichiometry(&self, reaction: usize) -> &[i64];
    /// Total count preserved by every reaction, when the model has one.
    fn conserved_total(&self) -> Option<i64> {
        None
    }
}

/// Counts of one realization at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FineState {
    pub counts: Vec<i64>,
    pub t: f64,
}

impl FineState {
    pub fn new(counts: Vec<i64>, t: f64) -> Self {
        Self { counts, t }
    }

    pub fn total(&self) -> i64 {
        self.counts.iter().sum()
    }
}

/// Source of the two uniform variates consumed per event.
pub trait VariateSource {
    /// Reaction-selection variate on `[0, 1]`.
    fn p1(&mut self) -> f64;
    /// Waiting-time variate on `(0, 1]`.
    fn p2(&mut self) -> f64;
}

impl VariateSource for RngStream {
    #[inline]
    fn p1(&mut self) -> f64 {
        self.uniform()
    }

    #[inline]
    fn p2(&mut self) -> f64 {
        self.uniform_open_closed()
    }
}

/// Picks the reaction whose cumulative-propensity bin contains `p1`.
///
/// Ties on a bin boundary go to the lower index. Zero-width bins are never
/// selected.
pub fn select_reaction(rates: &[f64], p1: f64) -> Result<usize> {
    let total: f64 = rates.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Exhausted);
    }
    let target = p1 * total;
    let mut cumulative = 0.0;
    let mut last_live = None;
    for (j, &r) in rates.iter().enumerate() {
        if r <= 0.0 {
            continue;
        }
        cumulative += r;
        last_live = Some(j);
        if target <= cumulative {
            return Ok(j);
        }
    }
    // p1 == 1 with rounding in the running sum lands past the last bin
    last_live.ok_or(Error::Exhausted)
}

/// Waiting time until the next event, `-ln(p2) / sum(rates)`.
///
/// `p2 == 1` would give a zero increment; it is mapped to the smallest
/// positive increment instead so the result is always `> 0`.
pub fn time_increment(rates: &[f64], p2: f64) -> Result<f64> {
    let total: f64 = rates.iter().sum();
    time_increment_total(total, p2)
}

#[inline]
fn time_increment_total(total: f64, p2: f64) -> Result<f64> {
    if !(total > 0.0) {
        return Err(Error::Exhausted);
    }
    if !(p2 > 0.0 && p2 <= 1.0) {
        return Err(Error::Numerical(format!(
            "waiting-time variate {p2} outside (0, 1]"
        )));
    }
    let dt = -p2.ln() / total;
    Ok(if dt > 0.0 { dt } else { f64::MIN_POSITIVE })
}

/// One fired reaction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub reaction: usize,
    pub time: f64,
}

/// Stateful single-trajectory stepper.
pub struct Simulator<'a, N: ReactionNetwork> {
    network: &'a N,
    counts: Vec<i64>,
    t: f64,
    rates: Vec<f64>,
}

impl<'a, N: ReactionNetwork> Simulator<'a, N> {
    pub fn new(network: &'a N, state0: &FineState) -> Result<Self> {
        if state0.counts.len() != network.n_species() {
            return Err(Error::Dimension(format!(
                "state has {} species, network expects {}",
                state0.counts.len(),
                network.n_species()
            )));
        }
        if state0.counts.iter().any(|&c| c < 0) {
            return Err(Error::Numerical("negative species count".into()));
        }
        Ok(Self {
            network,
            counts: state0.counts.clone(),
            t: state0.t,
            rates: vec![0.0; network.n_reactions()],
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn counts(&self) -> &[i64] {
        &self.counts
    }

    pub fn state(&self) -> FineState {
        FineState::new(self.counts.clone(), self.t)
    }

    /// Draws the next event without applying it. `None` when every
    /// propensity is zero.
    #[inline]
    pub fn propose<V: VariateSource>(&mut self, variates: &mut V) -> Option<Event> {
        self.network.propensities(&self.counts, &mut self.rates);
        let total: f64 = self.rates.iter().sum();
        if !(total > 0.0) {
            return None;
        }
        let p1 = variates.p1();
        let p2 = variates.p2();
        let reaction = select_reaction(&self.rates, p1).ok()?;
        let dt = time_increment_total(total, p2).ok()?;
        let mut time = self.t + dt;
        if time <= self.t {
            time = self.t.next_up();
        }
        Some(Event { reaction, time })
    }

    #[inline]
    pub fn apply(&mut self, event: Event) {
        let stoich = self.network.stoichiometry(event.reaction);
        for (c, &d) in self.counts.iter_mut().zip(stoich) {
            *c += d;
        }
        self.t = event.time;
    }

    /// Draws and applies one event.
    pub fn step<V: VariateSource>(&mut self, variates: &mut V) -> Option<Event> {
        let ev = self.propose(variates)?;
        self.apply(ev);
        Some(ev)
    }
}

/// Snapshots of a single continuous SSA run.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledTrajectory {
    pub snapshots: Vec<FineState>,
    /// Index of the first snapshot taken after the system ran out of
    /// possible events; that snapshot and all later ones repeat the frozen
    /// state.
    pub frozen_from: Option<usize>,
    pub events: u64,
}

/// Runs one trajectory from `state0` and records it at `observation_times`.
pub fn simulate_sampled<N: ReactionNetwork, V: VariateSource>(
    state0: &FineState,
    observation_times: &[f64],
    network: &N,
    variates: &mut V,
) -> Result<SampledTrajectory> {
    let mut out = SampledTrajectory {
        snapshots: Vec::with_capacity(observation_times.len()),
        frozen_from: None,
        events: 0,
    };
    let Some(&first) = observation_times.first() else {
        return Ok(out);
    };
    if first < state0.t {
        return Err(Error::Numerical(format!(
            "first observation time {first} precedes initial time {}",
            state0.t
        )));
    }
    if observation_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Numerical(
            "observation times must be ascending".into(),
        ));
    }

    let mut sim = Simulator::new(network, state0)?;
    let mut next_obs = 0;
    let n_obs = observation_times.len();
    while next_obs < n_obs {
        match sim.propose(variates) {
            Some(ev) => {
                while next_obs < n_obs && observation_times[next_obs] < ev.time {
                    out.snapshots
                        .push(FineState::new(sim.counts.clone(), observation_times[next_obs]));
                    next_obs += 1;
                }
                if next_obs < n_obs {
                    sim.apply(ev);
                    out.events += 1;
                }
            }
            None => {
                out.frozen_from = Some(next_obs);
                for &t in &observation_times[next_obs..] {
                    out.snapshots.push(FineState::new(sim.counts.clone(), t));
                }
                next_obs = n_obs;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Birth-death test network: 0 -> X at rate k, X -> 0 at rate d*X.
    struct BirthDeath {
        k: f64,
        d: f64,
    }

    impl ReactionNetwork for BirthDeath {
        fn n_species(&self) -> usize {
            1
        }
        fn n_reactions(&self) -> usize {
            2
        }
        fn propensities(&self, counts: &[i64], out: &mut [f64]) {
            out[0] = self.k;
            out[1] = self.d * counts[0] as f64;
        }
        fn stoichiometry(&self, reaction: usize) -> &[i64] {
            const S: [[i64; 1]; 2] = [[1], [-1]];
            &S[reaction]
        }
    }

    struct Fixed(Vec<f64>, usize);

    impl VariateSource for Fixed {
        fn p1(&mut self) -> f64 {
            self.1 += 1;
            self.0[(self.1 - 1) % self.0.len()]
        }
        fn p2(&mut self) -> f64 {
            self.p1().max(1e-300)
        }
    }

    #[test]
    fn selects_quarter_bins() {
        assert_eq!(select_reaction(&[1.0, 1.0, 1.0, 1.0], 0.6).unwrap(), 2);
    }

    #[test]
    fn selects_leftmost_and_rightmost() {
        let r = [400.0, 466.875, 4.0, 50.0];
        assert_eq!(select_reaction(&r, 0.0).unwrap(), 0);
        assert_eq!(select_reaction(&r, 0.99).unwrap(), 3);
        assert_eq!(select_reaction(&r, 1.0).unwrap(), 3);
    }

    #[test]
    fn boundary_tie_goes_low() {
        assert_eq!(select_reaction(&[1.0, 1.0], 0.5).unwrap(), 0);
    }

    #[test]
    fn zero_width_bins_are_skipped() {
        assert_eq!(select_reaction(&[0.0, 2.0, 0.0], 0.0).unwrap(), 1);
        assert_eq!(select_reaction(&[1.0, 0.0, 0.0], 1.0).unwrap(), 0);
    }

    #[test]
    fn exhausted_rates_signal() {
        assert!(matches!(
            select_reaction(&[0.0, 0.0], 0.3),
            Err(Error::Exhausted)
        ));
        assert!(matches!(
            time_increment(&[0.0], 0.3),
            Err(Error::Exhausted)
        ));
    }

    #[test]
    fn increments() {
        let dt = time_increment(&[0.25, 0.75], (-1.0f64).exp()).unwrap();
        assert!((dt - 1.0).abs() < 1e-15);
        let dt = time_increment(&[400.0, 466.875, 4.0, 50.0], 0.5).unwrap();
        assert!((dt - std::f64::consts::LN_2 / 920.875).abs() < 1e-18);
        assert!((dt - 7.527e-4).abs() < 1e-7);
        let dt = time_increment(&[3.0], 1.0).unwrap();
        assert!(dt > 0.0);
        assert!(time_increment(&[3.0], 0.0).is_err());
    }

    #[test]
    fn empty_observation_list() {
        let net = BirthDeath { k: 1.0, d: 0.1 };
        let mut rng = RngStream::seeded(1);
        let out = simulate_sampled(&FineState::new(vec![3], 0.0), &[], &net, &mut rng).unwrap();
        assert!(out.snapshots.is_empty());
    }

    #[test]
    fn observation_before_start_rejected() {
        let net = BirthDeath { k: 1.0, d: 0.1 };
        let mut rng = RngStream::seeded(1);
        assert!(simulate_sampled(&FineState::new(vec![3], 1.0), &[0.5], &net, &mut rng).is_err());
    }

    #[test]
    fn frozen_state_is_flagged() {
        // pure death with no birth exhausts at X = 0
        let net = BirthDeath { k: 0.0, d: 5.0 };
        let mut rng = RngStream::seeded(3);
        let times: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let out = simulate_sampled(&FineState::new(vec![2], 0.0), &times, &net, &mut rng).unwrap();
        let idx = out.frozen_from.expect("should exhaust");
        assert_eq!(out.snapshots.len(), 20);
        for s in &out.snapshots[idx..] {
            assert_eq!(s.counts, vec![0]);
        }
    }

    #[test]
    fn snapshot_is_right_continuous() {
        // with p2 fixed, the first event time is known exactly
        let net = BirthDeath { k: 1.0, d: 0.0 };
        let mut v = Fixed(vec![0.5], 0);
        let t1 = -(0.5f64).ln();
        let out = simulate_sampled(
            &FineState::new(vec![0], 0.0),
            &[t1 * 0.5, t1, t1 * 1.5],
            &net,
            &mut v,
        )
        .unwrap();
        assert_eq!(out.snapshots[0].counts, vec![0]);
        assert_eq!(out.snapshots[1].counts, vec![1]);
        assert_eq!(out.snapshots[2].counts, vec![1]);
    }

    #[test]
    fn event_times_strictly_increase() {
        let net = BirthDeath { k: 50.0, d: 1.0 };
        let mut rng = RngStream::seeded(11);
        let mut sim = Simulator::new(&net, &FineState::new(vec![10], 0.0)).unwrap();
        let mut last = 0.0;
        for _ in 0..5_000 {
            let ev = sim.step(&mut rng).unwrap();
            assert!(ev.time > last);
            last = ev.time;
        }
    }
}
