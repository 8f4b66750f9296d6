//! Reference solutions built directly on the mean-field coverage equations.
//!
//! These never touch the SSA; they are what the equation-free machinery is
//! checked against.

use rayon::prelude::*;

use crate::bridge::{self, ClampPolicy, CoarseState, XiScheme};
use crate::error::Result;
use crate::gpc::GpcCoeffs;
use crate::model::{self, BetaSpec, KineticParams};

fn rk4_step(theta: [f64; 3], beta: f64, params: &KineticParams, h: f64) -> [f64; 3] {
    let add = |x: [f64; 3], k: [f64; 3], s: f64| [x[0] + s * k[0], x[1] + s * k[1], x[2] + s * k[2]];
    let k1 = model::coarse_rhs(&theta, beta, params);
    let k2 = model::coarse_rhs(&add(theta, k1, h / 2.0), beta, params);
    let k3 = model::coarse_rhs(&add(theta, k2, h / 2.0), beta, params);
    let k4 = model::coarse_rhs(&add(theta, k3, h), beta, params);
    let mut out = theta;
    for s in 0..3 {
        out[s] += h / 6.0 * (k1[s] + 2.0 * k2[s] + 2.0 * k3[s] + k4[s]);
    }
    out
}

/// Advances `theta` by `duration` with classical RK4, using the smallest
/// number of equal substeps not longer than `dt`.
pub fn advance(theta: [f64; 3], beta: f64, params: &KineticParams, duration: f64, dt: f64) -> [f64; 3] {
    if duration <= 0.0 {
        return theta;
    }
    let steps = (duration / dt - 1e-9).ceil().max(1.0) as usize;
    let h = duration / steps as f64;
    (0..steps).fold(theta, |th, _| rk4_step(th, beta, params, h))
}

/// RK4 trajectory on `[t0, t1]` sampled at every step.
pub fn integrate_coarse(
    theta0: CoarseState,
    beta: f64,
    params: &KineticParams,
    t_span: (f64, f64),
    dt: f64,
) -> Vec<(f64, CoarseState)> {
    assert!(dt > 0.0, "step must be positive");
    let (t0, t1) = t_span;
    let steps = ((t1 - t0) / dt - 1e-9).ceil().max(0.0) as usize;
    let h = if steps > 0 { (t1 - t0) / steps as f64 } else { 0.0 };
    let mut out = Vec::with_capacity(steps + 1);
    let mut th = theta0.0;
    out.push((t0, theta0));
    for k in 1..=steps {
        th = rk4_step(th, beta, params, h);
        out.push((t0 + k as f64 * h, CoarseState(th)));
    }
    out
}

/// Everything needed to propagate a chaos expansion through the mean-field
/// equations node by node.
#[derive(Debug, Clone)]
pub struct ReferenceConfig {
    pub params: KineticParams,
    pub beta: BetaSpec,
    pub initial: GpcCoeffs,
    pub xi: XiScheme,
    pub seed: u64,
    pub dt: f64,
}

/// Integrates the coverage ODEs at every ξ value and projects at each of
/// `times` (ascending, starting at or after 0).
pub fn reference_gpc_trajectory(config: &ReferenceConfig, times: &[f64]) -> Result<Vec<(f64, GpcCoeffs)>> {
    let order = config.initial.order();
    config.xi.validate(order)?;
    let set = config.xi.realize(config.seed, 0)?;
    let (states0, _) = bridge::lift_gpc_to_coarse(&config.initial, set.xis(), &ClampPolicy::default())?;
    let betas = set
        .xis()
        .iter()
        .map(|&x| model::beta_from_xi(x, &config.beta))
        .collect::<Result<Vec<_>>>()?;

    // per-node time series, computed independently so the result does not
    // depend on how rayon splits the work
    let series: Vec<Vec<CoarseState>> = states0
        .par_iter()
        .zip(betas.par_iter())
        .map(|(s0, &beta)| {
            let mut th = s0.0;
            let mut t = 0.0;
            times
                .iter()
                .map(|&target| {
                    th = advance(th, beta, &config.params, target - t, config.dt);
                    t = target;
                    CoarseState(th)
                })
                .collect()
        })
        .collect();

    times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let states: Vec<CoarseState> = series.iter().map(|s| s[k]).collect();
            Ok((t, bridge::restrict_coarse_to_gpc(&states, &set, order)?))
        })
        .collect()
}

/// One steady state of the mean-field equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyRoot {
    pub state: CoarseState,
    pub stable: bool,
    /// Eigenvalues (re, im) of the reduced 2×2 Jacobian.
    pub eigenvalues: [(f64, f64); 2],
}

impl SteadyRoot {
    /// True for roots on the edge of the simplex (the B-poisoned surface).
    pub fn on_boundary(&self) -> bool {
        self.state.0.iter().any(|&v| v < 1e-9)
    }
}

const GRID: usize = 400;
const DEDUP_RADIUS: f64 = 1e-6;

fn reduced_residual(a: f64, b: f64, beta: f64, params: &KineticParams) -> [f64; 2] {
    let d = model::coarse_rhs(&[a, b, 1.0 - a - b], beta, params);
    [d[0], d[1]]
}

fn newton_polish(mut a: f64, mut b: f64, beta: f64, params: &KineticParams) -> Option<(f64, f64)> {
    for _ in 0..60 {
        let f = reduced_residual(a, b, beta, params);
        if f[0].abs().max(f[1].abs()) <= 1e-15 {
            break;
        }
        let j = model::reduced_jacobian(a, b, beta, params);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-300 {
            return None;
        }
        let da = (f[0] * j[1][1] - f[1] * j[0][1]) / det;
        let db = (j[0][0] * f[1] - j[1][0] * f[0]) / det;
        a -= da;
        b -= db;
        if !a.is_finite() || !b.is_finite() || a.abs() > 10.0 || b.abs() > 10.0 {
            return None;
        }
        if da.abs().max(db.abs()) < 1e-16 {
            break;
        }
    }
    let f = reduced_residual(a, b, beta, params);
    let inside = a >= -1e-12 && b >= -1e-12 && a + b <= 1.0 + 1e-12;
    (f[0].abs().max(f[1].abs()) <= 1e-12 && inside).then_some((a, b))
}

/// All steady states in the closed simplex for one β.
///
/// Scans a 400×400 grid over `(θ_A, θ_B)` for cells where both residual
/// components change sign, polishes each candidate with Newton, and merges
/// roots closer than 1e-6. Sorted by θ_A.
pub fn steady_state_root(beta: f64, params: &KineticParams) -> Vec<SteadyRoot> {
    let h = 1.0 / GRID as f64;
    let values: Vec<Vec<[f64; 2]>> = (0..=GRID)
        .map(|i| (0..=GRID).map(|j| reduced_residual(i as f64 * h, j as f64 * h, beta, params)).collect())
        .collect();

    let mut candidates = Vec::new();
    for i in 0..GRID {
        for j in 0..GRID - i {
            let corners = [values[i][j], values[i + 1][j], values[i][j + 1], values[i + 1][j + 1]];
            let brackets = |c: usize| {
                let lo = corners.iter().map(|v| v[c]).fold(f64::INFINITY, f64::min);
                let hi = corners.iter().map(|v| v[c]).fold(f64::NEG_INFINITY, f64::max);
                lo <= 0.0 && hi >= 0.0
            };
            if brackets(0) && brackets(1) {
                candidates.push(((i as f64 + 0.5) * h, (j as f64 + 0.5) * h));
            }
        }
    }
    // coarse starts catch nearly coincident pairs the sign test can miss
    for i in 0..20 {
        for j in 0..20 - i {
            candidates.push(((i as f64 + 0.25) / 20.0, (j as f64 + 0.25) / 20.0));
        }
    }

    let mut roots: Vec<(f64, f64)> = Vec::new();
    for (a0, b0) in candidates {
        if let Some((a, b)) = newton_polish(a0, b0, beta, params) {
            if roots.iter().all(|&(ra, rb)| (ra - a).hypot(rb - b) > DEDUP_RADIUS) {
                roots.push((a, b));
            }
        }
    }
    roots.sort_by(|x, y| x.0.total_cmp(&y.0));
    roots
        .into_iter()
        .map(|(a, b)| {
            let eig = model::eigenvalues_2x2(&model::reduced_jacobian(a, b, beta, params));
            SteadyRoot {
                state: CoarseState::from_ab(a, b),
                stable: eig.iter().all(|e| e.0 < 0.0),
                eigenvalues: eig,
            }
        })
        .collect()
}

/// Number of steady states with every coverage strictly positive.
pub fn interior_root_count(beta: f64, params: &KineticParams) -> usize {
    steady_state_root(beta, params).iter().filter(|r| !r.on_boundary()).count()
}

/// Fold (turning-point) values of β on `[lo, hi]`: scans the interior root
/// count on a grid of spacing `step` and bisects each change of count down
/// to a relative width of `rel_tol`.
pub fn deterministic_folds(params: &KineticParams, lo: f64, hi: f64, step: f64, rel_tol: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).ceil() as usize;
    let grid: Vec<f64> = (0..=n).map(|k| (lo + k as f64 * step).min(hi)).collect();
    let counts: Vec<usize> = grid.par_iter().map(|&b| interior_root_count(b, params)).collect();
    let mut folds = Vec::new();
    for k in 0..n {
        if counts[k] == counts[k + 1] {
            continue;
        }
        let (mut a, mut b) = (grid[k], grid[k + 1]);
        let ca = counts[k];
        while (b - a) > rel_tol * b.abs() {
            let m = 0.5 * (a + b);
            if interior_root_count(m, params) == ca {
                a = m;
            } else {
                b = m;
            }
        }
        folds.push(0.5 * (a + b));
    }
    folds
}
