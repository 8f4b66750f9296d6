//! Pseudo-arclength continuation of fixed points of Φ_T in the mean of β.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpc::GpcCoeffs;

use super::fixed_point::{apply_jacobian, jvp, norm2, residual, FixedPointProblem, ResidualMap, StepperMap};
use super::gmres::{gmres, GmresOptions};
use super::newton::{newton_solve, NewtonOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
}

impl Stability {
    pub fn as_str(self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
        }
    }
}

/// Magnitude of the dominant multiplier of DΦ_T at `x`, by power iteration
/// on finite-difference products.
pub fn dominant_multiplier(coeffs: &GpcCoeffs, problem: &FixedPointProblem, eps0: f64) -> Result<f64> {
    let map = StepperMap(problem);
    let x = coeffs.to_flat();
    let fx = map.eval(&x)?;
    let n = x.len();
    let mut v: Vec<f64> = (0..n).map(|k| 1.0 + 0.1 * (k as f64 + 1.0).sin()).collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|a| *a /= nv);

    const WINDOW: usize = 8;
    let mut logs: Vec<f64> = Vec::new();
    let mut estimates: Vec<f64> = Vec::new();
    for _ in 0..400 {
        let w = jvp(&map, &x, &fx, &v, eps0)?;
        let g = norm2(&w);
        if g == 0.0 {
            return Ok(0.0);
        }
        logs.push(g.ln());
        v = w.iter().map(|a| a / g).collect();
        if logs.len() >= WINDOW {
            // geometric mean over a window also settles for complex pairs
            let est = (logs[logs.len() - WINDOW..].iter().sum::<f64>() / WINDOW as f64).exp();
            estimates.push(est);
            if estimates.len() > WINDOW {
                let old = estimates[estimates.len() - 1 - WINDOW];
                if (est - old).abs() <= 1e-7 * est.max(1.0) {
                    return Ok(est);
                }
            }
        }
    }
    Ok(*estimates.last().expect("at least one estimate after 400 iterations"))
}

/// Stable below `1 − dead_band`, unstable above `1 + dead_band`; inside the
/// band the previous label is kept (or the side of 1 decides if none).
pub fn classify(multiplier: f64, previous: Option<Stability>, dead_band: f64) -> Stability {
    if multiplier > 1.0 + dead_band {
        Stability::Unstable
    } else if multiplier < 1.0 - dead_band {
        Stability::Stable
    } else {
        previous.unwrap_or(if multiplier > 1.0 {
            Stability::Unstable
        } else {
            Stability::Stable
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuationMode {
    PseudoArclength,
    /// Fixed increments in ⟨β⟩; cannot pass folds. Kept for debugging.
    Natural,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationOptions {
    pub mode: ContinuationMode,
    pub ds0: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub max_points: usize,
    /// +1 to start towards larger ⟨β⟩, −1 towards smaller.
    pub direction: f64,
    pub dead_band: f64,
    pub newton: NewtonOptions,
}

impl ContinuationOptions {
    pub fn for_problem(problem: &FixedPointProblem) -> Self {
        let mut newton = NewtonOptions::for_problem(problem);
        newton.max_iter = 8;
        newton.gmres = GmresOptions {
            tol: 1e-8,
            max_iter: 4 * (problem.dim() + 1),
            restart: problem.dim() + 1,
        };
        Self {
            mode: ContinuationMode::PseudoArclength,
            ds0: 0.1,
            ds_min: 1e-4,
            ds_max: 0.5,
            max_points: 500,
            direction: 1.0,
            dead_band: 1e-3,
            newton,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    pub mean_beta: f64,
    pub coeffs: GpcCoeffs,
    pub stability: Stability,
    pub multiplier: f64,
    /// Set on the point nearest a turning point.
    pub fold: bool,
    pub newton_iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub ds: f64,
    pub accepted: bool,
    pub corrector_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BranchEnd {
    LeftRange,
    MaxPoints,
    CorrectorFailed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    pub steps: Vec<StepRecord>,
    /// Turning-point estimates of ⟨β⟩, from a quadratic fit in arclength
    /// through the three points around each reversal.
    pub folds: Vec<f64>,
    pub end: BranchEnd,
}

/// `[F(x; λ); t·(z − z_pred)]` for `z = [x, λ]`.
struct Arclength<'a> {
    problem: &'a FixedPointProblem,
    pred: Vec<f64>,
    tangent: Vec<f64>,
}

impl ResidualMap for Arclength<'_> {
    fn dim_in(&self) -> usize {
        self.problem.dim() + 1
    }

    fn dim_out(&self) -> usize {
        self.problem.dim() + 1
    }

    fn eval(&self, z: &[f64]) -> Result<Vec<f64>> {
        let n = self.problem.dim();
        let mut out = residual(&GpcCoeffs::from_flat(&z[..n])?, &self.problem.with_mean_beta(z[n]))?;
        out.push(z.iter().zip(&self.pred).zip(&self.tangent).map(|((a, b), t)| t * (a - b)).sum());
        Ok(out)
    }
}

/// `F(x; λ)` as a map of `[x, λ]`.
struct Parametrized<'a>(&'a FixedPointProblem);

impl ResidualMap for Parametrized<'_> {
    fn dim_in(&self) -> usize {
        self.0.dim() + 1
    }

    fn dim_out(&self) -> usize {
        self.0.dim()
    }

    fn eval(&self, z: &[f64]) -> Result<Vec<f64>> {
        let n = self.0.dim();
        residual(&GpcCoeffs::from_flat(&z[..n])?, &self.0.with_mean_beta(z[n]))
    }
}

fn initial_tangent(problem: &FixedPointProblem, z: &[f64], opts: &ContinuationOptions) -> Result<Vec<f64>> {
    let n = problem.dim();
    let map = Parametrized(problem);
    let fz = map.eval(z)?;
    let mut e = vec![0.0; n + 1];
    e[n] = 1.0;
    let f_lambda = apply_jacobian(&map, z, &fz, &e, opts.newton.eps0)?;
    let rhs: Vec<f64> = f_lambda.iter().map(|v| -v).collect();
    let lin = gmres(
        |v| {
            let mut w = v.to_vec();
            w.push(0.0);
            apply_jacobian(&map, z, &fz, &w, opts.newton.eps0)
        },
        &rhs,
        &opts.newton.gmres,
    )?;
    let mut t = lin.x;
    t.push(1.0);
    let nt = norm2(&t);
    Ok(t.into_iter().map(|v| opts.direction.signum() * v / nt).collect())
}

fn make_point(
    z: &[f64],
    problem: &FixedPointProblem,
    previous: Option<Stability>,
    opts: &ContinuationOptions,
    newton_iterations: usize,
    residual_norm: f64,
) -> Result<BranchPoint> {
    let n = problem.dim();
    let coeffs = GpcCoeffs::from_flat(&z[..n])?;
    let p = problem.with_mean_beta(z[n]);
    let mu = dominant_multiplier(&coeffs, &p, opts.newton.eps0)?;
    Ok(BranchPoint {
        mean_beta: z[n],
        coeffs,
        stability: classify(mu, previous, opts.dead_band),
        multiplier: mu,
        fold: false,
        newton_iterations,
        residual: residual_norm,
    })
}

fn vertex_of_parabola(s: [f64; 3], l: [f64; 3]) -> f64 {
    // Newton divided differences, then the stationary point
    let d1 = (l[1] - l[0]) / (s[1] - s[0]);
    let d2 = (l[2] - l[1]) / (s[2] - s[1]);
    let c2 = (d2 - d1) / (s[2] - s[0]);
    if c2 == 0.0 {
        return l[1];
    }
    // l(s) = l0 + d1 (s − s0) + c2 (s − s0)(s − s1)
    let s_star = 0.5 * (s[0] + s[1] - d1 / c2);
    l[0] + d1 * (s_star - s[0]) + c2 * (s_star - s[0]) * (s_star - s[1])
}

/// Traces the branch through the converged point `x0` at ⟨β⟩ = the mean of
/// `problem.beta`, until ⟨β⟩ leaves `beta_range`.
pub fn continuation(
    problem: &FixedPointProblem,
    x0: &GpcCoeffs,
    beta_range: (f64, f64),
    opts: &ContinuationOptions,
) -> Result<Branch> {
    problem.validate()?;
    let (lo, hi) = beta_range;
    if !(lo < hi) {
        return Err(Error::config("continuation.beta_range", format!("empty range [{lo}, {hi}]")));
    }
    if !(opts.ds0 > 0.0 && opts.ds_min > 0.0 && opts.ds_max >= opts.ds0) {
        return Err(Error::config("continuation.ds0", "need 0 < ds_min, 0 < ds0 <= ds_max"));
    }
    let n = problem.dim();
    let mut z: Vec<f64> = x0.to_flat();
    z.push(problem.beta.mean());
    let r0 = super::fixed_point::norm_inf(&Parametrized(problem).eval(&z)?);
    let mut branch = Branch {
        points: vec![make_point(&z, problem, None, opts, 0, r0)?],
        steps: Vec::new(),
        folds: Vec::new(),
        end: BranchEnd::MaxPoints,
    };
    let mut arclength = vec![0.0];
    let mut zs = vec![z.clone()];
    let mut tangent = match opts.mode {
        ContinuationMode::PseudoArclength => initial_tangent(problem, &z, opts)?,
        ContinuationMode::Natural => {
            let mut t = vec![0.0; n + 1];
            t[n] = opts.direction.signum();
            t
        }
    };
    let mut ds = opts.ds0;

    while branch.points.len() < opts.max_points {
        let pred: Vec<f64> = z.iter().zip(&tangent).map(|(a, t)| a + ds * t).collect();
        let solved = match opts.mode {
            ContinuationMode::PseudoArclength => {
                let map = Arclength {
                    problem,
                    pred: pred.clone(),
                    tangent: tangent.clone(),
                };
                newton_solve(&map, &pred, &opts.newton)
            }
            ContinuationMode::Natural => {
                let p = problem.with_mean_beta(pred[n]);
                newton_solve(&p, &pred[..n], &opts.newton).map(|(mut x, rep)| {
                    x.push(pred[n]);
                    (x, rep)
                })
            }
        };
        let outcome = match solved {
            Ok((zn, rep)) if rep.converged() && norm2(&diff(&zn, &z)) <= 2.0 * ds => Ok((zn, rep)),
            Ok((_, rep)) => Err(format!("corrector {:?} after {} iterations", rep.status, rep.iterations)),
            Err(e @ Error::Unliftable { .. }) => Err(e.to_string()),
            Err(e) => return Err(e),
        };
        match outcome {
            Ok((zn, rep)) => {
                branch.steps.push(StepRecord {
                    ds,
                    accepted: true,
                    corrector_iterations: rep.iterations,
                });
                if zn[n] < lo || zn[n] > hi {
                    branch.end = BranchEnd::LeftRange;
                    break;
                }
                let prev = branch.points.last().map(|p| p.stability);
                let point = make_point(&zn, problem, prev, opts, rep.iterations, rep.final_residual())?;
                let step = diff(&zn, &z);
                let len = norm2(&step);
                arclength.push(arclength.last().unwrap() + len);
                if opts.mode == ContinuationMode::PseudoArclength {
                    tangent = step.iter().map(|v| v / len).collect();
                }
                z = zn;
                zs.push(z.clone());
                branch.points.push(point);
                check_turn(&mut branch, &zs, &arclength, n);
                ds = if rep.iterations <= 2 {
                    (ds * 1.5).min(opts.ds_max)
                } else if rep.iterations >= 5 {
                    (ds * 0.5).max(opts.ds_min)
                } else {
                    ds
                };
            }
            Err(why) => {
                branch.steps.push(StepRecord {
                    ds,
                    accepted: false,
                    corrector_iterations: 0,
                });
                ds *= 0.5;
                if ds < opts.ds_min {
                    log::warn!("continuation stopped at <beta> = {}: {why}", z[n]);
                    branch.end = BranchEnd::CorrectorFailed(why);
                    break;
                }
            }
        }
    }
    Ok(branch)
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn check_turn(branch: &mut Branch, zs: &[Vec<f64>], s: &[f64], n: usize) {
    let k = zs.len();
    if k < 3 {
        return;
    }
    let (a, b, c) = (zs[k - 3][n], zs[k - 2][n], zs[k - 1][n]);
    if (b - a) * (c - b) < 0.0 {
        let fold = vertex_of_parabola([s[k - 3], s[k - 2], s[k - 1]], [a, b, c]);
        branch.points[k - 2].fold = true;
        branch.folds.push(fold);
        log::info!("turning point near <beta> = {fold:.6}");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::XiScheme;
    use crate::engine::{EnsembleSpec, InnerEngine};
    use crate::model::BetaSpec;
    use crate::steady::newton::newton_krylov;

    #[test]
    fn classification_with_dead_band() {
        assert_eq!(classify(1.01, None, 1e-3), Stability::Unstable);
        assert_eq!(classify(0.99, None, 1e-3), Stability::Stable);
        assert_eq!(classify(1.0005, Some(Stability::Stable), 1e-3), Stability::Stable);
        assert_eq!(classify(0.9995, Some(Stability::Unstable), 1e-3), Stability::Unstable);
        assert_eq!(classify(1.0005, None, 1e-3), Stability::Unstable);
    }

    #[test]
    fn parabola_vertex() {
        let f = |s: f64| 3.0 - 2.0 * (s - 0.7).powi(2);
        let v = vertex_of_parabola([0.0, 0.5, 1.3], [f(0.0), f(0.5), f(1.3)]);
        assert!((v - 3.0).abs() < 1e-12);
    }

    fn problem(mean: f64) -> FixedPointProblem {
        FixedPointProblem {
            ensemble: EnsembleSpec {
                xi: XiScheme::GaussLegendre { n: 4 },
                engine: InnerEngine::Oracle { dt: 1e-3 },
                ..Default::default()
            },
            beta: BetaSpec::Relative { mean, rho: 0.05 },
            ..Default::default()
        }
    }

    #[test]
    fn branch_with_unique_steady_state_is_monotone() {
        let p = problem(2.0);
        let (x0, rep) = newton_krylov(
            &GpcCoeffs::constant(3, [0.97, 0.005, 0.025]),
            &p,
            &NewtonOptions::for_problem(&p),
        )
        .unwrap();
        assert!(rep.converged());
        let opts = ContinuationOptions::for_problem(&p);
        let branch = continuation(&p, &x0, (1.0, 4.0), &opts).unwrap();
        assert_eq!(branch.end, BranchEnd::LeftRange);
        assert!(branch.folds.is_empty());
        assert!(branch.points.len() > 3);
        assert!(branch.points.windows(2).all(|w| w[1].mean_beta > w[0].mean_beta));
        assert!(branch.points.iter().all(|p| p.stability == Stability::Stable));
        for w in branch.points.windows(2) {
            let dx = w[1].coeffs.to_flat().iter().zip(w[0].coeffs.to_flat()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let dist = (dx + (w[1].mean_beta - w[0].mean_beta).powi(2)).sqrt();
            assert!(dist <= 2.0 * opts.ds_max);
        }
    }

    #[test]
    fn multiplier_of_the_middle_family_exceeds_one() {
        let p = problem(10.0);
        let (x, rep) = newton_krylov(
            &GpcCoeffs::constant(3, [0.5, 0.2, 0.3]),
            &p,
            &NewtonOptions::for_problem(&p),
        )
        .unwrap();
        assert!(rep.converged());
        let mu = dominant_multiplier(&x, &p, 1e-6).unwrap();
        assert!(mu > 1.001, "{mu}");
    }
}
