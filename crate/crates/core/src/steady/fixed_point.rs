//! The coarse time-stepper Φ_T and the residual `x − Φ_T(x)`.

use serde::{Deserialize, Serialize};

use crate::engine::{self, EnsembleSpec, InnerEngine};
use crate::error::{Error, Result};
use crate::gpc::GpcCoeffs;
use crate::model::{BetaSpec, KineticParams};

/// A nonlinear map `R^n -> R^m` evaluated by simulation.
pub trait ResidualMap {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPointProblem {
    /// Time-stepper horizon T, seconds.
    pub horizon: f64,
    pub order: usize,
    pub ensemble: EnsembleSpec,
    pub beta: BetaSpec,
    pub params: KineticParams,
    /// Seed and epoch shared by every Φ_T evaluation (common random numbers).
    pub master: u64,
    pub epoch: u64,
}

impl Default for FixedPointProblem {
    fn default() -> Self {
        Self {
            horizon: 0.4,
            order: 3,
            ensemble: EnsembleSpec::default(),
            beta: BetaSpec::Relative { mean: 6.0, rho: 0.05 },
            params: KineticParams::default(),
            master: 0,
            epoch: 0,
        }
    }
}

impl FixedPointProblem {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::config(
                "fixed_point.horizon",
                format!("must be positive, got {}", self.horizon),
            ));
        }
        self.ensemble.validate(self.order)?;
        self.params.validate()?;
        self.beta.validate()
    }

    pub fn dim(&self) -> usize {
        3 * (self.order + 1)
    }

    pub fn with_mean_beta(&self, mean: f64) -> Self {
        Self {
            beta: self.beta.with_mean(mean),
            ..*self
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self.ensemble.engine, InnerEngine::Ssa { .. })
    }

    /// Default relative finite-difference increment for this engine.
    pub fn default_eps0(&self) -> f64 {
        if self.is_stochastic() {
            1e-3
        } else {
            1e-6
        }
    }
}

/// Lift, evolve for the horizon, restrict.
pub fn phi_t(coeffs: &GpcCoeffs, problem: &FixedPointProblem) -> Result<GpcCoeffs> {
    phi_for(coeffs, problem, problem.horizon)
}

fn phi_for(coeffs: &GpcCoeffs, problem: &FixedPointProblem, horizon: f64) -> Result<GpcCoeffs> {
    if coeffs.order() != problem.order {
        return Err(Error::Dimension(format!(
            "coefficients of order {} for a problem of order {}",
            coeffs.order(),
            problem.order
        )));
    }
    let burst = engine::coarse_burst(
        coeffs,
        &problem.ensemble,
        &problem.beta,
        &problem.params,
        &[horizon],
        problem.master,
        problem.epoch,
    )?;
    Ok(burst.coeffs.into_iter().next().expect("one output time requested"))
}

/// Φ_0: the lift/restrict round trip with no evolution.
pub fn phi_zero(coeffs: &GpcCoeffs, problem: &FixedPointProblem) -> Result<GpcCoeffs> {
    phi_for(coeffs, problem, 0.0)
}

/// `x − Φ_T(x)`, flattened row-major.
pub fn residual(coeffs: &GpcCoeffs, problem: &FixedPointProblem) -> Result<Vec<f64>> {
    let phi = phi_t(coeffs, problem)?;
    Ok(coeffs.to_flat().iter().zip(phi.to_flat()).map(|(x, p)| x - p).collect())
}

impl ResidualMap for FixedPointProblem {
    fn dim_in(&self) -> usize {
        self.dim()
    }

    fn dim_out(&self) -> usize {
        self.dim()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        residual(&GpcCoeffs::from_flat(x)?, self)
    }
}

/// Φ_T itself as a map on flattened coefficients.
pub struct StepperMap<'a>(pub &'a FixedPointProblem);

impl ResidualMap for StepperMap<'_> {
    fn dim_in(&self) -> usize {
        self.0.dim()
    }

    fn dim_out(&self) -> usize {
        self.0.dim()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(phi_t(&GpcCoeffs::from_flat(x)?, self.0)?.to_flat())
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Directional derivative `(F(x + εv̂) − F(x)) / ε` with `v̂ = v/|v|` and
/// `ε = eps0·(1 + |x|)`. `fx` must be `F(x)`. If the perturbed point cannot
/// be lifted, ε is shrunk tenfold once before giving up.
pub fn jvp<M: ResidualMap + ?Sized>(map: &M, x: &[f64], fx: &[f64], v: &[f64], eps0: f64) -> Result<Vec<f64>> {
    let nv = norm2(v);
    if !(nv > 0.0) || !nv.is_finite() {
        return Err(Error::Numerical("directional derivative along a zero direction".into()));
    }
    let mut eps = eps0 * (1.0 + norm2(x));
    for attempt in 0..2 {
        let xp: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + eps * b / nv).collect();
        match map.eval(&xp) {
            Ok(fp) => return Ok(fp.iter().zip(fx).map(|(a, b)| (a - b) / eps).collect()),
            Err(Error::Unliftable { .. }) if attempt == 0 => eps /= 10.0,
            Err(e) => return Err(e),
        }
    }
    unreachable!("loop returns on its second pass")
}

/// `J·v` without normalizing the direction (zero maps to zero).
pub fn apply_jacobian<M: ResidualMap + ?Sized>(
    map: &M,
    x: &[f64],
    fx: &[f64],
    v: &[f64],
    eps0: f64,
) -> Result<Vec<f64>> {
    let nv = norm2(v);
    if nv == 0.0 {
        return Ok(vec![0.0; map.dim_out()]);
    }
    Ok(jvp(map, x, fx, v, eps0)?.into_iter().map(|y| y * nv).collect())
}

/// Largest per-entry standard deviation of Φ_T(x) across `seeds` master
/// seeds. This is the noise floor against which SSA-mode residuals are judged.
pub fn noise_floor(coeffs: &GpcCoeffs, problem: &FixedPointProblem, seeds: &[u64]) -> Result<f64> {
    if seeds.len() < 2 {
        return Err(Error::Numerical("noise floor needs at least two seeds".into()));
    }
    let samples = seeds
        .iter()
        .map(|&s| phi_t(coeffs, &FixedPointProblem { master: s, ..*problem }).map(|c| c.to_flat()))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_entry_std(&samples).into_iter().fold(0.0, f64::max))
}

/// Sample standard deviation of each entry over a set of vectors.
pub fn per_entry_std(samples: &[Vec<f64>]) -> Vec<f64> {
    let n = samples.len() as f64;
    let d = samples[0].len();
    (0..d)
        .map(|k| {
            let mean = samples.iter().map(|s| s[k]).sum::<f64>() / n;
            (samples.iter().map(|s| (s[k] - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        })
        .collect()
}
