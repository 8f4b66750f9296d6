//! Restarted GMRES with modified Gram-Schmidt and Givens rotations.

use crate::error::Result;

use super::fixed_point::norm2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresOptions {
    /// Target for `|b − Ax| / |b|`.
    pub tol: f64,
    /// Cap on operator applications inside Arnoldi.
    pub max_iter: usize,
    pub restart: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 200,
            restart: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmresReport {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Relative residual after each Arnoldi step, with the initial 1.0 first.
    pub history: Vec<f64>,
    pub converged: bool,
    /// The Krylov space stopped reducing the residual (singular or nearly
    /// singular operator, or a restart cycle that made no progress).
    pub stagnated: bool,
}

impl GmresReport {
    pub fn relative_residual(&self) -> f64 {
        *self.history.last().unwrap_or(&1.0)
    }
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else {
        let r = a.hypot(b);
        (a / r, b / r)
    }
}

/// Solves `A x = b` from `x = 0`.
pub fn gmres<F>(mut apply: F, rhs: &[f64], opts: &GmresOptions) -> Result<GmresReport>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = rhs.len();
    let b_norm = norm2(rhs);
    let mut report = GmresReport {
        x: vec![0.0; n],
        iterations: 0,
        history: vec![1.0],
        converged: false,
        stagnated: false,
    };
    if b_norm == 0.0 {
        report.history[0] = 0.0;
        report.converged = true;
        return Ok(report);
    }
    let m = opts.restart.clamp(1, n.max(1));
    let mut r = rhs.to_vec();
    let mut rel = 1.0;

    while report.iterations < opts.max_iter {
        let beta = norm2(&r);
        let cycle_start = beta / b_norm;
        if cycle_start <= opts.tol {
            report.converged = true;
            break;
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|x| x / beta).collect()];
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut cols = 0;
        let mut singular = false;

        for j in 0..m {
            if report.iterations >= opts.max_iter {
                break;
            }
            let mut w = apply(&v[j])?;
            report.iterations += 1;
            let w_norm0 = norm2(&w);
            for i in 0..=j {
                let hij: f64 = w.iter().zip(&v[i]).map(|(a, b)| a * b).sum();
                h[i][j] = hij;
                for (wk, vk) in w.iter_mut().zip(&v[i]) {
                    *wk -= hij * vk;
                }
            }
            let h_next = norm2(&w);
            h[j + 1][j] = h_next;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let (c, s) = givens(h[j][j], h[j + 1][j]);
            cs[j] = c;
            sn[j] = s;
            h[j][j] = c * h[j][j] + s * h[j + 1][j];
            h[j + 1][j] = 0.0;
            if h[j][j].abs() <= 1e-13 * w_norm0.max(f64::MIN_POSITIVE) || h[j][j] == 0.0 {
                // the new direction adds nothing the operator can reach
                singular = true;
                break;
            }
            g[j + 1] = -s * g[j];
            g[j] *= c;
            cols = j + 1;
            rel = g[j + 1].abs() / b_norm;
            report.history.push(rel);
            if rel <= opts.tol || h_next <= 1e-14 * beta {
                break;
            }
            v.push(w.iter().map(|x| x / h_next).collect());
        }

        // back substitution on the leading `cols` columns
        let mut y = vec![0.0; cols];
        for i in (0..cols).rev() {
            let mut acc = g[i];
            for k in i + 1..cols {
                acc -= h[i][k] * y[k];
            }
            y[i] = acc / h[i][i];
        }
        for (i, yi) in y.iter().enumerate() {
            for (xk, vk) in report.x.iter_mut().zip(&v[i]) {
                *xk += yi * vk;
            }
        }

        if rel <= opts.tol {
            report.converged = true;
            break;
        }
        if singular || rel > 0.999 * cycle_start {
            report.stagnated = true;
            break;
        }
        let ax = apply(&report.x)?;
        r = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    }
    Ok(report)
}
