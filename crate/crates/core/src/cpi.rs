//! Coarse projective integration of chaos coefficients.
//!
//! Each cycle runs a short burst of the inner engine, fits a straight line
//! to the trailing records and jumps forward with explicit Euler.

use serde::{Deserialize, Serialize};

use crate::bridge::ClampReport;
use crate::engine::{self, EnsembleSpec};
use crate::error::{Error, Result};
use crate::gpc::GpcCoeffs;
use crate::model::{BetaSpec, KineticParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CpiConfig {
    /// Observation interval inside a burst, seconds.
    pub dt_c: f64,
    pub n_inner: usize,
    /// Trailing records used for the slope fit.
    pub fit_window: usize,
    /// Leading burst records never used for fitting.
    pub discard: usize,
    /// Projective jump, seconds.
    pub dt_cc: f64,
    pub t_end: f64,
    /// Chaos truncation order P.
    pub order: usize,
    /// Warn when the fit scatter exceeds this fraction of the fitted change
    /// across the window.
    pub residual_warn_ratio: f64,
    pub ensemble: EnsembleSpec,
}

impl Default for CpiConfig {
    fn default() -> Self {
        Self {
            dt_c: 0.01,
            n_inner: 40,
            fit_window: 5,
            discard: 0,
            dt_cc: 0.8,
            t_end: 10.0,
            order: 3,
            residual_warn_ratio: 0.1,
            ensemble: EnsembleSpec::default(),
        }
    }
}

impl CpiConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::config(format!("cpi.{field}"), msg));
        if !(self.dt_c > 0.0 && self.dt_c.is_finite()) {
            return bad("dt_c", format!("must be positive, got {}", self.dt_c));
        }
        if self.fit_window < 2 {
            return bad("fit_window", format!("need at least 2 points, got {}", self.fit_window));
        }
        if self.fit_window > self.n_inner {
            return bad(
                "fit_window",
                format!("{} exceeds n_inner = {}", self.fit_window, self.n_inner),
            );
        }
        if self.discard + self.fit_window > self.n_inner + 1 {
            return bad(
                "discard",
                format!("discarding {} leaves fewer than {} records", self.discard, self.fit_window),
            );
        }
        if !(self.dt_cc >= 0.0 && self.dt_cc.is_finite()) {
            return bad("dt_cc", format!("must be >= 0, got {}", self.dt_cc));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad("t_end", format!("must be >= 0, got {}", self.t_end));
        }
        if !(self.residual_warn_ratio >= 0.0) {
            return bad("residual_warn_ratio", "must be >= 0".into());
        }
        self.ensemble.validate(self.order)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Simulated,
    Projected,
}

impl Segment {
    pub fn as_str(self) -> &'static str {
        match self {
            Segment::Simulated => "simulated",
            Segment::Projected => "projected",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpiRecord {
    pub t: f64,
    pub coeffs: GpcCoeffs,
    pub segment: Segment,
}

/// Least-squares line through one window of records.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    /// Per-entry slope, 1/s.
    pub slope: GpcCoeffs,
    /// Per-entry root-mean-square deviation from the fitted line.
    pub residual: GpcCoeffs,
    /// Euclidean norm of `residual` over all entries.
    pub residual_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BurstDiagnostics {
    pub t_start: f64,
    pub slope: GpcCoeffs,
    pub residual_norm: f64,
    /// `residual_norm / (|slope| · window span)`; infinite for a flat fit
    /// with scatter.
    pub residual_ratio: f64,
    pub clamp: ClampReport,
    pub events: u64,
    pub frozen_replicas: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Completed,
    /// A projected state could not be lifted; the records stop there.
    Aborted(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpiTrajectory {
    pub records: Vec<CpiRecord>,
    pub diagnostics: Vec<BurstDiagnostics>,
    pub termination: Termination,
}

/// Output of one inner burst.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerBurst {
    /// `(t0 + k·dt_c, coefficients)` for `k = 0..=n_inner`.
    pub series: Vec<(f64, GpcCoeffs)>,
    pub clamp: ClampReport,
    pub events: u64,
    pub frozen_replicas: usize,
}

/// Lift once, run the inner engine continuously for `n_inner` observation
/// intervals and restrict at each of them.
pub fn inner_burst(
    coeffs0: &GpcCoeffs,
    t0: f64,
    config: &CpiConfig,
    params: &KineticParams,
    beta: &BetaSpec,
    master: u64,
    epoch: u64,
) -> Result<InnerBurst> {
    let rel: Vec<f64> = (0..=config.n_inner).map(|k| k as f64 * config.dt_c).collect();
    let burst = engine::coarse_burst(coeffs0, &config.ensemble, beta, params, &rel, master, epoch)?;
    if burst.frozen_replicas > 0 {
        log::warn!(
            "burst at t={t0}: {} replicas ran out of reactions",
            burst.frozen_replicas
        );
    }
    Ok(InnerBurst {
        series: rel.iter().map(|&r| t0 + r).zip(burst.coeffs).collect(),
        clamp: burst.clamp,
        events: burst.events,
        frozen_replicas: burst.frozen_replicas,
    })
}

/// Independent ordinary least-squares fit of every coefficient entry
/// against time.
pub fn slope_ls(series: &[(f64, GpcCoeffs)]) -> Result<SlopeFit> {
    let n = series.len();
    if n < 2 {
        return Err(Error::Numerical(format!("slope fit needs >= 2 points, got {n}")));
    }
    let order = series[0].1.order();
    if series.iter().any(|(_, c)| c.order() != order) {
        return Err(Error::Dimension("slope window mixes chaos orders".into()));
    }
    let t_mean = series.iter().map(|(t, _)| t).sum::<f64>() / n as f64;
    let sxx: f64 = series.iter().map(|(t, _)| (t - t_mean).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Numerical("slope fit over coincident times".into()));
    }
    let mut slope = GpcCoeffs::zeros(order);
    let mut residual = GpcCoeffs::zeros(order);
    let mut sq_total = 0.0;
    for i in 0..=order {
        for s in 0..3 {
            let y_mean = series.iter().map(|(_, c)| c.get(i, s)).sum::<f64>() / n as f64;
            let sxy: f64 = series.iter().map(|(t, c)| (t - t_mean) * (c.get(i, s) - y_mean)).sum();
            let m = sxy / sxx;
            let sq: f64 = series
                .iter()
                .map(|(t, c)| (c.get(i, s) - y_mean - m * (t - t_mean)).powi(2))
                .sum();
            slope.set(i, s, m);
            residual.set(i, s, (sq / n as f64).sqrt());
            sq_total += sq / n as f64;
        }
    }
    Ok(SlopeFit {
        slope,
        residual,
        residual_norm: sq_total.sqrt(),
    })
}

/// Forward Euler in coefficient space.
pub fn projective_step(coeffs: &GpcCoeffs, slope: &GpcCoeffs, dt_cc: f64) -> GpcCoeffs {
    let rows = coeffs
        .rows()
        .iter()
        .zip(slope.rows())
        .map(|(c, m)| [c[0] + m[0] * dt_cc, c[1] + m[1] * dt_cc, c[2] + m[2] * dt_cc])
        .collect();
    GpcCoeffs::from_rows(rows)
}

const TIME_SLACK: f64 = 1e-9;

/// Times and segment tags `run_cpi` produces for `config` when it runs to
/// completion, computed with the same arithmetic.
pub fn record_schedule(config: &CpiConfig) -> Vec<(f64, Segment)> {
    let mut out = Vec::new();
    if config.t_end <= 0.0 {
        return out;
    }
    let mut t = 0.0;
    let mut first = true;
    loop {
        let skip = if first { 0 } else { 1 };
        for k in skip..=config.n_inner {
            out.push((t + k as f64 * config.dt_c, Segment::Simulated));
        }
        t += config.n_inner as f64 * config.dt_c;
        if t >= config.t_end - TIME_SLACK {
            break;
        }
        let jump = config.dt_cc.min(config.t_end - t);
        if jump > 0.0 {
            t += jump;
            out.push((t, Segment::Projected));
        }
        if t >= config.t_end - TIME_SLACK {
            break;
        }
        first = false;
    }
    out
}

/// Alternates bursts and projective jumps from `t = 0` until `t_end`.
/// Burst `b` draws from epoch `b`.
pub fn run_cpi(
    config: &CpiConfig,
    params: &KineticParams,
    beta: &BetaSpec,
    coeffs0: &GpcCoeffs,
    master: u64,
) -> Result<CpiTrajectory> {
    config.validate()?;
    params.validate()?;
    beta.validate()?;
    if coeffs0.order() != config.order {
        return Err(Error::Dimension(format!(
            "initial coefficients have order {}, config says {}",
            coeffs0.order(),
            config.order
        )));
    }
    let mut traj = CpiTrajectory {
        records: Vec::new(),
        diagnostics: Vec::new(),
        termination: Termination::Completed,
    };
    if config.t_end <= 0.0 {
        return Ok(traj);
    }

    let span = (config.fit_window - 1) as f64 * config.dt_c;
    let mut t = 0.0;
    let mut current = coeffs0.clone();
    let mut epoch = 0u64;
    loop {
        let burst = match inner_burst(&current, t, config, params, beta, master, epoch) {
            Ok(b) => b,
            Err(e @ Error::Unliftable { .. }) => {
                log::error!("aborting projective integration at t={t}: {e}");
                traj.termination = Termination::Aborted(e.to_string());
                return Ok(traj);
            }
            Err(e) => return Err(e),
        };
        let skip = if epoch == 0 { 0 } else { 1 };
        for (tk, c) in burst.series.iter().skip(skip) {
            traj.records.push(CpiRecord {
                t: *tk,
                coeffs: c.clone(),
                segment: Segment::Simulated,
            });
        }
        let (t_last, last) = burst.series.last().cloned().expect("burst has at least one record");
        t = t_last;

        let usable = &burst.series[config.discard..];
        let fit = slope_ls(&usable[usable.len() - config.fit_window..])?;
        let slope_norm = fit.slope.to_flat().iter().map(|v| v * v).sum::<f64>().sqrt();
        let ratio = if fit.residual_norm == 0.0 {
            0.0
        } else {
            fit.residual_norm / (slope_norm * span)
        };
        if ratio > config.residual_warn_ratio {
            log::warn!("burst at t={:.6}: fit residual ratio {ratio:.3e}", burst.series[0].0);
        }
        traj.diagnostics.push(BurstDiagnostics {
            t_start: burst.series[0].0,
            slope: fit.slope.clone(),
            residual_norm: fit.residual_norm,
            residual_ratio: ratio,
            clamp: burst.clamp,
            events: burst.events,
            frozen_replicas: burst.frozen_replicas,
        });

        if t >= config.t_end - TIME_SLACK {
            break;
        }
        let jump = config.dt_cc.min(config.t_end - t);
        current = if jump > 0.0 {
            let projected = projective_step(&last, &fit.slope, jump);
            t += jump;
            traj.records.push(CpiRecord {
                t,
                coeffs: projected.clone(),
                segment: Segment::Projected,
            });
            projected
        } else {
            last
        };
        if t >= config.t_end - TIME_SLACK {
            break;
        }
        epoch += 1;
    }
    Ok(traj)
}
