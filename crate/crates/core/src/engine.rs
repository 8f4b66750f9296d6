//! The inner simulator behind every coarse-time-stepper call.
//!
//! Either the stochastic fine model (lift, simulate, restrict) or the
//! mean-field ODE, so the outer algorithms can be checked without noise.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bridge::{self, ClampPolicy, ClampReport, CoarseState, CountSum, LiftingPolicy, XiScheme};
use crate::error::{Error, Result};
use crate::gpc::GpcCoeffs;
use crate::model::{self, BetaSpec, CatalyticNetwork, KineticParams};
use crate::rng::{RngStream, StreamKey};
use crate::ssa::{self, FineState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InnerEngine {
    Ssa {
        replicas: usize,
        #[serde(default)]
        lifting: LiftingPolicy,
    },
    Oracle {
        #[serde(default = "default_oracle_dt")]
        dt: f64,
    },
}

fn default_oracle_dt() -> f64 {
    1e-3
}

impl Default for InnerEngine {
    fn default() -> Self {
        InnerEngine::Ssa {
            replicas: 1,
            lifting: LiftingPolicy::Multinomial,
        }
    }
}

/// Coverage at each requested time for each ξ member.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineOutput {
    /// Indexed `[time][member]`.
    pub coverage: Vec<Vec<CoarseState>>,
    pub events: u64,
    /// Replicas that ran out of possible reactions before the last time.
    pub frozen_replicas: usize,
}

impl InnerEngine {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InnerEngine::Ssa { replicas: 0, .. } => {
                Err(Error::config("engine.replicas", "need at least one replica"))
            }
            InnerEngine::Oracle { dt } if !(dt > 0.0 && dt.is_finite()) => {
                Err(Error::config("engine.dt", format!("step must be positive, got {dt}")))
            }
            _ => Ok(()),
        }
    }

    /// Evolves each member `states[m]` at rate `betas[m]` and records it at
    /// `times`, measured from the start of the burst. Member `m`, replica
    /// `r` draws from the stream `(master, epoch, m, r)`.
    pub fn evolve(
        &self,
        states: &[CoarseState],
        betas: &[f64],
        times: &[f64],
        params: &KineticParams,
        master: u64,
        epoch: u64,
    ) -> Result<EngineOutput> {
        if states.len() != betas.len() {
            return Err(Error::Dimension(format!(
                "{} states but {} beta values",
                states.len(),
                betas.len()
            )));
        }
        if times.iter().any(|&t| t < 0.0) || times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Numerical("observation times must be ascending and >= 0".into()));
        }
        match *self {
            InnerEngine::Oracle { dt } => {
                let per_member: Vec<Vec<CoarseState>> = states
                    .par_iter()
                    .zip(betas.par_iter())
                    .map(|(s, &beta)| {
                        let mut th = s.0;
                        let mut t = 0.0;
                        times
                            .iter()
                            .map(|&target| {
                                th = crate::oracle::advance(th, beta, params, target - t, dt);
                                t = target;
                                CoarseState(th)
                            })
                            .collect()
                    })
                    .collect();
                Ok(EngineOutput {
                    coverage: transpose(per_member, times.len()),
                    events: 0,
                    frozen_replicas: 0,
                })
            }
            InnerEngine::Ssa { replicas, lifting } => {
                let n_tot = params.n_tot;
                let jobs: Vec<(usize, usize)> = (0..states.len())
                    .flat_map(|m| (0..replicas).map(move |r| (m, r)))
                    .collect();
                let runs: Vec<ssa::SampledTrajectory> = jobs
                    .par_iter()
                    .map(|&(m, r)| {
                        let mut rng = RngStream::from_key(StreamKey::new(master, epoch, m as u64, r as u64));
                        let counts = bridge::lift_one(&states[m], n_tot, lifting, &mut rng);
                        let network = CatalyticNetwork::new(*params, betas[m]);
                        ssa::simulate_sampled(&FineState::new(counts.to_vec(), 0.0), times, &network, &mut rng)
                    })
                    .collect::<Result<_>>()?;

                let mut events = 0;
                let mut frozen = 0;
                let mut per_member = Vec::with_capacity(states.len());
                for member in runs.chunks(replicas) {
                    let mut sums = vec![CountSum::default(); times.len()];
                    for run in member {
                        events += run.events;
                        if run.frozen_from.is_some() {
                            frozen += 1;
                        }
                        for (k, snap) in run.snapshots.iter().enumerate() {
                            sums[k].add(&snap.counts);
                        }
                    }
                    per_member.push(sums.iter().map(|s| s.coverage(n_tot)).collect());
                }
                Ok(EngineOutput {
                    coverage: transpose(per_member, times.len()),
                    events,
                    frozen_replicas: frozen,
                })
            }
        }
    }
}

/// How a chaos expansion is realized: the ξ points, the inner engine (which
/// carries the replica count for the SSA) and the clamp thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    #[serde(default)]
    pub xi: XiScheme,
    #[serde(default)]
    pub engine: InnerEngine,
    #[serde(default)]
    pub clamp: ClampPolicy,
}

impl EnsembleSpec {
    pub fn validate(&self, order: usize) -> Result<()> {
        self.xi.validate(order)?;
        self.engine.validate()?;
        self.clamp.validate()
    }
}

/// Restricted chaos coefficients along one burst.
#[derive(Debug, Clone, PartialEq)]
pub struct Burst {
    /// One entry per requested time.
    pub coeffs: Vec<GpcCoeffs>,
    pub clamp: ClampReport,
    pub events: u64,
    pub frozen_replicas: usize,
}

/// Lift `coeffs` to coverages at the ξ points for `epoch`, evolve them with
/// the inner engine and restrict back at every entry of `times`.
#[allow(clippy::too_many_arguments)]
pub fn coarse_burst(
    coeffs: &GpcCoeffs,
    ensemble: &EnsembleSpec,
    beta: &BetaSpec,
    params: &KineticParams,
    times: &[f64],
    master: u64,
    epoch: u64,
) -> Result<Burst> {
    let order = coeffs.order();
    let set = ensemble.xi.realize(master, epoch)?;
    let (states, clamp) = bridge::lift_gpc_to_coarse(coeffs, set.xis(), &ensemble.clamp)?;
    let betas = set
        .xis()
        .iter()
        .map(|&x| model::beta_from_xi(x, beta))
        .collect::<Result<Vec<_>>>()?;
    let out = ensemble.engine.evolve(&states, &betas, times, params, master, epoch)?;
    let coeffs = out
        .coverage
        .iter()
        .map(|row| bridge::restrict_coarse_to_gpc(row, &set, order))
        .collect::<Result<Vec<_>>>()?;
    Ok(Burst {
        coeffs,
        clamp,
        events: out.events,
        frozen_replicas: out.frozen_replicas,
    })
}

fn transpose(per_member: Vec<Vec<CoarseState>>, n_times: usize) -> Vec<Vec<CoarseState>> {
    (0..n_times)
        .map(|k| per_member.iter().map(|s| s[k]).collect())
        .collect()
}
