//! Legendre polynomial chaos for a scalar input ξ uniform on [-1, 1].
//!
//! All inner products are taken against the probability density ½ on
//! [-1, 1], so `<P_i, P_i> = 1 / (2i + 1)` and Gauss-Legendre weights sum
//! to one.

use crate::error::{Error, Result};

/// Legendre polynomial `P_i(xi)` by the three-term recurrence.
pub fn legendre_eval(order: usize, xi: f64) -> f64 {
    match order {
        0 => 1.0,
        1 => xi,
        _ => {
            let (mut p0, mut p1) = (1.0, xi);
            for k in 1..order {
                let kf = k as f64;
                let p2 = ((2.0 * kf + 1.0) * xi * p1 - kf * p0) / (kf + 1.0);
                p0 = p1;
                p1 = p2;
            }
            p1
        }
    }
}

/// `P_0(xi) ..= P_max(xi)` in one pass.
pub fn legendre_all(max_order: usize, xi: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(max_order + 1);
    out.push(1.0);
    if max_order >= 1 {
        out.push(xi);
    }
    for k in 1..max_order {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * xi * out[k] - kf * out[k - 1]) / (kf + 1.0);
        out.push(next);
    }
    out
}

/// `<P_i, P_i>` under the uniform probability measure.
pub fn norm_sq(order: usize) -> f64 {
    1.0 / (2 * order + 1) as f64
}

/// Gauss-Legendre nodes with probability-normalized weights.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Expectation of `f(xi)` under the uniform measure.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// `P_n(x)` and its derivative.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let dp = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// `n`-point Gauss-Legendre rule, nodes ascending.
///
/// Roots of `P_n` are found by Newton iteration from the asymptotic guess
/// `cos(π(k − ¼)/(n + ½))`; weights are `1 / ((1 − x²) P_n'(x)²)` (the usual
/// weights halved).
pub fn gl_rule(n: usize) -> Result<QuadratureRule> {
    if n == 0 {
        return Err(Error::config("quadrature.n", "need at least one node"));
    }
    if n == 1 {
        return Ok(QuadratureRule {
            nodes: vec![0.0],
            weights: vec![1.0],
        });
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for k in 1..=half {
        let mut x = (std::f64::consts::PI * (k as f64 - 0.25) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 1.0 / ((1.0 - x * x) * dp * dp);
        // k counts from the largest root down
        nodes[n - k] = x;
        nodes[k - 1] = -x;
        weights[n - k] = w;
        weights[k - 1] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(QuadratureRule { nodes, weights })
}

/// Legendre-chaos coefficients of the coverage triple, row `i` holding
/// the order-`i` coefficients of `(θ_A, θ_B, θ_*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GpcCoeffs {
    rows: Vec<[f64; 3]>,
}

impl GpcCoeffs {
    pub fn zeros(order: usize) -> Self {
        Self {
            rows: vec![[0.0; 3]; order + 1],
        }
    }

    /// Deterministic state: only the zeroth row is set.
    pub fn constant(order: usize, value: [f64; 3]) -> Self {
        let mut c = Self::zeros(order);
        c.rows[0] = value;
        c
    }

    pub fn from_rows(rows: Vec<[f64; 3]>) -> Self {
        assert!(!rows.is_empty(), "gPC coefficients need at least the zeroth row");
        Self { rows }
    }

    /// Inverse of [`GpcCoeffs::to_flat`].
    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.is_empty() || !flat.len().is_multiple_of(3) {
            return Err(Error::Dimension(format!(
                "flat coefficient vector of length {} is not 3(P+1)",
                flat.len()
            )));
        }
        Ok(Self {
            rows: flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        })
    }

    /// Truncation order `P`.
    pub fn order(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn rows(&self) -> &[[f64; 3]] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> [f64; 3] {
        self.rows[i]
    }

    pub fn get(&self, i: usize, s: usize) -> f64 {
        self.rows[i][s]
    }

    pub fn set(&mut self, i: usize, s: usize, v: f64) {
        self.rows[i][s] = v;
    }

    /// Row-major flattening `(c0_A, c0_B, c0_*, c1_A, ...)`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.rows.iter().flatten().copied().collect()
    }

    pub fn len_flat(&self) -> usize {
        3 * self.rows.len()
    }

    pub fn max_abs_diff(&self, other: &GpcCoeffs) -> f64 {
        self.to_flat()
            .iter()
            .zip(other.to_flat())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn check_order(values_len: usize, order: usize) -> Result<()> {
    if values_len < order + 1 {
        return Err(Error::Dimension(format!(
            "{values_len} ensemble members cannot determine {} coefficients",
            order + 1
        )));
    }
    Ok(())
}

/// Projection by quadrature: `c[i,s] = Σ_k w_k v_k[s] P_i(x_k) / <P_i,P_i>`.
pub fn project_quadrature(values: &[[f64; 3]], rule: &QuadratureRule, order: usize) -> Result<GpcCoeffs> {
    if values.len() != rule.len() {
        return Err(Error::Dimension(format!(
            "{} values for {} quadrature nodes",
            values.len(),
            rule.len()
        )));
    }
    check_order(values.len(), order)?;
    let mut out = GpcCoeffs::zeros(order);
    for ((v, &x), &w) in values.iter().zip(&rule.nodes).zip(&rule.weights) {
        let p = legendre_all(order, x);
        for (i, row) in out.rows.iter_mut().enumerate() {
            for s in 0..3 {
                row[s] += w * v[s] * p[i];
            }
        }
    }
    for (i, row) in out.rows.iter_mut().enumerate() {
        for c in row.iter_mut() {
            *c /= norm_sq(i);
        }
    }
    Ok(out)
}

/// Monte-Carlo projection estimate together with its standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct McProjection {
    pub coeffs: GpcCoeffs,
    pub std_err: GpcCoeffs,
}

/// Projection by sample averaging over i.i.d. uniform ξ.
///
/// Normalizes by the analytic `<P_i, P_i>` rather than the empirical one,
/// which keeps the estimator unbiased.
pub fn project_mc(xis: &[f64], values: &[[f64; 3]], order: usize) -> Result<McProjection> {
    if xis.len() != values.len() {
        return Err(Error::Dimension(format!(
            "{} xi samples for {} values",
            xis.len(),
            values.len()
        )));
    }
    check_order(values.len(), order)?;
    let ne = xis.len() as f64;
    let mut sum = GpcCoeffs::zeros(order);
    let mut sum_sq = GpcCoeffs::zeros(order);
    for (&x, v) in xis.iter().zip(values) {
        let p = legendre_all(order, x);
        for i in 0..=order {
            for s in 0..3 {
                let term = v[s] * p[i] / norm_sq(i);
                sum.rows[i][s] += term;
                sum_sq.rows[i][s] += term * term;
            }
        }
    }
    let mut coeffs = GpcCoeffs::zeros(order);
    let mut std_err = GpcCoeffs::zeros(order);
    for i in 0..=order {
        for s in 0..3 {
            let mean = sum.rows[i][s] / ne;
            coeffs.rows[i][s] = mean;
            let var = if ne > 1.0 {
                ((sum_sq.rows[i][s] / ne - mean * mean) * ne / (ne - 1.0)).max(0.0)
            } else {
                0.0
            };
            std_err.rows[i][s] = (var / ne).sqrt();
        }
    }
    Ok(McProjection { coeffs, std_err })
}

/// Evaluates the chaos expansion at `xi`. No clamping to the simplex.
pub fn expand(coeffs: &GpcCoeffs, xi: f64) -> [f64; 3] {
    let p = legendre_all(coeffs.order(), xi);
    let mut out = [0.0; 3];
    for (row, &pi) in coeffs.rows.iter().zip(&p) {
        for s in 0..3 {
            out[s] += row[s] * pi;
        }
    }
    out
}

/// Mean and variance of each coverage over ξ.
pub fn moments(coeffs: &GpcCoeffs) -> ([f64; 3], [f64; 3]) {
    let mean = coeffs.rows[0];
    let mut var = [0.0; 3];
    for (i, row) in coeffs.rows.iter().enumerate().skip(1) {
        for s in 0..3 {
            var[s] += row[s] * row[s] * norm_sq(i);
        }
    }
    (mean, var)
}
