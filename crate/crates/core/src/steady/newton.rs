//! Damped Newton with GMRES inner solves and finite-difference Jacobians.

use crate::error::{Error, Result};
use crate::gpc::GpcCoeffs;

use super::fixed_point::{apply_jacobian, norm2, norm_inf, FixedPointProblem, ResidualMap};
use super::gmres::{gmres, GmresOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Converged when the residual's max-norm is at or below this.
    pub tol_out: f64,
    /// A solve that stops early (line search or iteration limit) still
    /// counts as converged if its residual is at or below this. Used with
    /// noisy steppers, where `tol_out` sits under the noise floor.
    pub accept_tol: f64,
    pub max_iter: usize,
    pub gmres: GmresOptions,
    /// Relative finite-difference increment.
    pub eps0: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Smallest step fraction tried before the line search gives up.
    pub min_step: f64,
}

impl NewtonOptions {
    pub fn for_problem(problem: &FixedPointProblem) -> Self {
        Self {
            tol_out: 1e-8,
            accept_tol: 0.0,
            max_iter: 30,
            gmres: GmresOptions {
                tol: 1e-6,
                max_iter: 4 * problem.dim(),
                restart: problem.dim() + 1,
            },
            eps0: problem.default_eps0(),
            armijo: 1e-4,
            min_step: 1.0 / 64.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NewtonStatus {
    Converged,
    /// Stopped early with the residual below `accept_tol`.
    NoiseLimited,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    pub status: NewtonStatus,
    pub iterations: usize,
    /// Max-norm of the residual at the start and after every accepted step.
    pub residual_history: Vec<f64>,
    pub gmres_iterations: usize,
    /// Residual evaluations, including those inside JVPs.
    pub evaluations: usize,
}

impl NewtonReport {
    pub fn converged(&self) -> bool {
        matches!(self.status, NewtonStatus::Converged | NewtonStatus::NoiseLimited)
    }

    pub fn final_residual(&self) -> f64 {
        *self.residual_history.last().unwrap_or(&f64::INFINITY)
    }
}

/// Newton's method on any square residual map.
pub fn newton_solve<M: ResidualMap + ?Sized>(
    map: &M,
    x0: &[f64],
    opts: &NewtonOptions,
) -> Result<(Vec<f64>, NewtonReport)> {
    if map.dim_in() != map.dim_out() || x0.len() != map.dim_in() {
        return Err(Error::Dimension(format!(
            "Newton needs a square map; got {} -> {} with x0 of length {}",
            map.dim_in(),
            map.dim_out(),
            x0.len()
        )));
    }
    let mut x = x0.to_vec();
    let mut fx = map.eval(&x)?;
    let mut report = NewtonReport {
        status: NewtonStatus::MaxIterations,
        iterations: 0,
        residual_history: vec![norm_inf(&fx)],
        gmres_iterations: 0,
        evaluations: 1,
    };

    loop {
        if norm_inf(&fx) <= opts.tol_out {
            report.status = NewtonStatus::Converged;
            break;
        }
        if report.iterations >= opts.max_iter {
            break;
        }
        let rhs: Vec<f64> = fx.iter().map(|v| -v).collect();
        let mut evals = 0;
        let lin = gmres(
            |v| {
                evals += 1;
                apply_jacobian(map, &x, &fx, v, opts.eps0)
            },
            &rhs,
            &opts.gmres,
        )?;
        report.evaluations += evals;
        report.gmres_iterations += lin.iterations;
        if lin.stagnated {
            log::debug!("GMRES stagnated at relative residual {:.3e}", lin.relative_residual());
        }

        let f_norm = norm2(&fx);
        let mut lambda = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = x.iter().zip(&lin.x).map(|(a, d)| a + lambda * d).collect();
            report.evaluations += 1;
            match map.eval(&trial) {
                Ok(ft) if norm2(&ft) <= (1.0 - opts.armijo * lambda) * f_norm => break Some((trial, ft)),
                Ok(_) | Err(Error::Unliftable { .. }) => {}
                Err(e) => return Err(e),
            }
            lambda /= 2.0;
            if lambda < opts.min_step {
                break None;
            }
        };
        report.iterations += 1;
        match accepted {
            Some((xt, ft)) => {
                x = xt;
                fx = ft;
                report.residual_history.push(norm_inf(&fx));
                log::debug!(
                    "newton {}: |F|inf = {:.3e}, step {lambda}, gmres {} its",
                    report.iterations,
                    norm_inf(&fx),
                    lin.iterations
                );
            }
            None => {
                report.status = NewtonStatus::LineSearchFailed;
                break;
            }
        }
    }
    if !report.converged() && report.final_residual() <= opts.accept_tol {
        report.status = NewtonStatus::NoiseLimited;
    }
    Ok((x, report))
}

/// Fixed point of Φ_T near `x0`.
pub fn newton_krylov(
    x0: &GpcCoeffs,
    problem: &FixedPointProblem,
    opts: &NewtonOptions,
) -> Result<(GpcCoeffs, NewtonReport)> {
    problem.validate()?;
    let (x, report) = newton_solve(problem, &x0.to_flat(), opts)?;
    log::info!(
        "fixed point: status {:?}, {} iterations, |F|inf = {:.3e}",
        report.status,
        report.iterations,
        report.final_residual()
    );
    Ok((GpcCoeffs::from_flat(&x)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::XiScheme;
    use crate::engine::{EnsembleSpec, InnerEngine};
    use crate::gpc;
    use crate::model::{self, BetaSpec};
    use crate::oracle;

    struct Quadratic;

    impl ResidualMap for Quadratic {
        fn dim_in(&self) -> usize {
            2
        }
        fn dim_out(&self) -> usize {
            2
        }
        fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![x[0] * x[0] - 2.0, x[0] * x[1] - 1.0])
        }
    }

    fn plain_opts() -> NewtonOptions {
        NewtonOptions {
            tol_out: 1e-12,
            accept_tol: 0.0,
            max_iter: 40,
            gmres: GmresOptions {
                tol: 1e-10,
                max_iter: 20,
                restart: 3,
            },
            eps0: 1e-8,
            armijo: 1e-4,
            min_step: 1.0 / 64.0,
        }
    }

    #[test]
    fn solves_a_small_nonlinear_system() {
        let (x, rep) = newton_solve(&Quadratic, &[1.0, 1.0], &plain_opts()).unwrap();
        assert!(rep.converged());
        assert!((x[0] - 2f64.sqrt()).abs() < 1e-10);
        assert!((x[1] - 1.0 / 2f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn starting_at_the_root_takes_no_steps() {
        let x0 = [2f64.sqrt(), 1.0 / 2f64.sqrt()];
        let (_, rep) = newton_solve(&Quadratic, &x0, &NewtonOptions { tol_out: 1e-14, ..plain_opts() }).unwrap();
        assert!(rep.converged());
        assert!(rep.iterations <= 1);
    }

    #[test]
    fn early_stop_below_accept_tol_counts_as_converged() {
        let opts = NewtonOptions {
            max_iter: 2,
            accept_tol: 1e-2,
            ..plain_opts()
        };
        let (_, rep) = newton_solve(&Quadratic, &[3.0, 1.0], &opts).unwrap();
        assert_eq!(rep.iterations, 2);
        let status = if rep.final_residual() <= 1e-2 {
            NewtonStatus::NoiseLimited
        } else {
            NewtonStatus::MaxIterations
        };
        assert_eq!(rep.status, status);
        assert_eq!(rep.converged(), status == NewtonStatus::NoiseLimited);
        let strict = NewtonOptions { accept_tol: 0.0, ..opts };
        let (_, rep) = newton_solve(&Quadratic, &[3.0, 1.0], &strict).unwrap();
        assert_eq!(rep.status, NewtonStatus::MaxIterations);
    }

    fn problem(mean: f64) -> FixedPointProblem {
        FixedPointProblem {
            ensemble: EnsembleSpec {
                xi: XiScheme::GaussLegendre { n: 4 },
                engine: InnerEngine::Oracle { dt: 1e-3 },
                ..Default::default()
            },
            beta: BetaSpec::Affine { b0: mean, b1: 0.25 },
            ..Default::default()
        }
    }

    fn roots_at(beta: f64) -> Vec<oracle::SteadyRoot> {
        oracle::steady_state_root(beta, &model::KineticParams::default())
            .into_iter()
            .filter(|r| !r.on_boundary())
            .collect()
    }

    #[test]
    fn upper_branch_envelope_matches_brute_force() {
        let p = problem(6.0);
        let guess = GpcCoeffs::constant(3, [0.95, 0.01, 0.04]);
        let (x, rep) = newton_krylov(&guess, &p, &NewtonOptions::for_problem(&p)).unwrap();
        assert!(rep.converged(), "{rep:?}");
        for (xi, beta) in [(1.0, 6.25), (-1.0, 5.75)] {
            let want = *roots_at(beta).last().unwrap();
            let got = gpc::expand(&x, xi);
            for s in 0..3 {
                assert!((got[s] - want.state.0[s]).abs() <= 1e-6, "xi {xi}: {got:?} vs {:?}", want.state);
            }
        }
    }

    #[test]
    fn middle_branch_is_reachable_and_unstable() {
        let p = problem(6.0);
        let guess = GpcCoeffs::constant(3, [0.58, 0.16, 0.26]);
        let (x, rep) = newton_krylov(&guess, &p, &NewtonOptions::for_problem(&p)).unwrap();
        assert!(rep.converged(), "{rep:?}");
        let rule = gpc::gl_rule(4).unwrap();
        for &xi in &rule.nodes {
            let th = gpc::expand(&x, xi);
            let j = model::reduced_jacobian(th[0], th[1], p.beta.beta(xi), &p.params);
            let eig = model::eigenvalues_2x2(&j);
            assert!(eig.iter().any(|e| e.0 > 0.0), "node {xi}: {eig:?}");
        }
    }
}
