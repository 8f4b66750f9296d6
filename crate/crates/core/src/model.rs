//! The A + ½B₂ → AB surface reaction.
//!
//! Species order everywhere is `[A, B, vacant]`. Four elementary steps act on
//! a surface of `n_tot` sites: adsorption of A, dissociative adsorption of B₂
//! onto a vacant pair, desorption of A, and the A + B surface reaction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ssa::{FineState, ReactionNetwork};

pub const SPECIES: [&str; 3] = ["A", "B", "star"];

/// Known rate constants and surface size. `beta` is supplied separately
/// because it is the uncertain (or continued) parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KineticParams {
    pub alpha: f64,
    pub gamma: f64,
    pub k_r: f64,
    pub n_tot: i64,
}

impl Default for KineticParams {
    fn default() -> Self {
        Self {
            alpha: 1.6,
            gamma: 0.04,
            k_r: 4.0,
            n_tot: 200 * 200,
        }
    }
}

impl KineticParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("gamma", self.gamma), ("k_r", self.k_r)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(
                    format!("kinetics.{name}"),
                    format!("rate must be finite and >= 0, got {v}"),
                ));
            }
        }
        if self.n_tot < 2 {
            return Err(Error::config(
                "kinetics.n_tot",
                format!("need at least 2 sites, got {}", self.n_tot),
            ));
        }
        Ok(())
    }
}

/// How the uncertain adsorption rate depends on the random input ξ ∈ [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum BetaSpec {
    /// β = b0 + b1·ξ
    Affine { b0: f64, b1: f64 },
    /// β = mean·(1 + rho·ξ)
    Relative { mean: f64, rho: f64 },
}

impl Default for BetaSpec {
    fn default() -> Self {
        BetaSpec::Affine { b0: 6.0, b1: 0.25 }
    }
}

impl BetaSpec {
    pub fn beta(&self, xi: f64) -> f64 {
        match *self {
            BetaSpec::Affine { b0, b1 } => b0 + b1 * xi,
            BetaSpec::Relative { mean, rho } => mean * (1.0 + rho * xi),
        }
    }

    /// β at ξ = 0.
    pub fn mean(&self) -> f64 {
        self.beta(0.0)
    }

    /// Same spread, centred on a different mean. For the affine form the
    /// slope is kept.
    pub fn with_mean(&self, mean: f64) -> Self {
        match *self {
            BetaSpec::Affine { b1, .. } => BetaSpec::Affine { b0: mean, b1 },
            BetaSpec::Relative { rho, .. } => BetaSpec::Relative { mean, rho },
        }
    }

    /// β(ξ) is affine in ξ, so positivity on [-1, 1] is checked at the ends.
    pub fn validate(&self) -> Result<()> {
        let lo = self.beta(-1.0).min(self.beta(1.0));
        if !(lo > 0.0 && self.beta(1.0).is_finite()) {
            return Err(Error::config(
                "beta",
                format!("beta(xi) must stay > 0 on [-1, 1]; minimum is {lo}"),
            ));
        }
        Ok(())
    }
}

/// β for a random input value.
pub fn beta_from_xi(xi: f64, spec: &BetaSpec) -> Result<f64> {
    if !(xi.abs() <= 1.0) {
        return Err(Error::Numerical(format!("xi = {xi} outside [-1, 1]")));
    }
    let b = spec.beta(xi);
    if !(b > 0.0) {
        return Err(Error::config("beta", format!("beta({xi}) = {b} is not positive")));
    }
    Ok(b)
}

const STOICHIOMETRY: [[i64; 3]; 4] = [
    [1, 0, -1],  // A(g) + * -> A*
    [0, 2, -2],  // B2(g) + 2* -> 2B*
    [-1, 0, 1],  // A* -> A(g) + *
    [-1, -1, 2], // A* + B* -> AB(g) + 2*
];

pub fn stoichiometry() -> [[i64; 3]; 4] {
    STOICHIOMETRY
}

/// Finite-size propensities `[r1, r2, r3, r4]` for counts `[N_A, N_B, N_*]`.
#[inline]
pub fn propensities(counts: &[i64], params: &KineticParams, beta: f64) -> [f64; 4] {
    let n_a = counts[0] as f64;
    let n_b = counts[1] as f64;
    let n_v = counts[2] as f64;
    let n_tot = params.n_tot as f64;
    [
        params.alpha * n_v,
        0.5 * (beta / n_tot) * n_v * (n_v - 1.0),
        params.gamma * n_a,
        (params.k_r / n_tot) * n_a * n_b,
    ]
}

/// The surface model at one fixed β, ready for the SSA.
#[derive(Debug, Clone, Copy)]
pub struct CatalyticNetwork {
    pub params: KineticParams,
    pub beta: f64,
}

impl CatalyticNetwork {
    pub fn new(params: KineticParams, beta: f64) -> Self {
        Self { params, beta }
    }

    pub fn is_conserving(state: &FineState, n_tot: i64) -> bool {
        state.counts.len() == 3 && state.total() == n_tot && state.counts.iter().all(|&c| c >= 0)
    }
}

impl ReactionNetwork for CatalyticNetwork {
    fn n_species(&self) -> usize {
        3
    }

    fn n_reactions(&self) -> usize {
        4
    }

    #[inline]
    fn propensities(&self, counts: &[i64], out: &mut [f64]) {
        out.copy_from_slice(&propensities(counts, &self.params, self.beta));
    }

    #[inline]
    fn stoichiometry(&self, reaction: usize) -> &[i64] {
        &STOICHIOMETRY[reaction]
    }

    fn conserved_total(&self) -> Option<i64> {
        Some(self.params.n_tot)
    }
}

/// Mean-field coverage equations; the vacancy rate closes the simplex.
pub fn coarse_rhs(theta: &[f64; 3], beta: f64, params: &KineticParams) -> [f64; 3] {
    let [a, b, v] = *theta;
    let ab = params.k_r * a * b;
    let da = params.alpha * v - params.gamma * a - ab;
    let db = beta * v * v - ab;
    [da, db, -(da + db)]
}

/// Jacobian of the (θ_A, θ_B) system with θ_* = 1 − θ_A − θ_B eliminated.
pub fn reduced_jacobian(theta_a: f64, theta_b: f64, beta: f64, params: &KineticParams) -> [[f64; 2]; 2] {
    let v = 1.0 - theta_a - theta_b;
    let k = params.k_r;
    [
        [-params.alpha - params.gamma - k * theta_b, -params.alpha - k * theta_a],
        [-2.0 * beta * v - k * theta_b, -2.0 * beta * v - k * theta_a],
    ]
}

/// Eigenvalues of a real 2×2 matrix as (re, im) pairs.
pub fn eigenvalues_2x2(m: &[[f64; 2]; 2]) -> [(f64, f64); 2] {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        [(tr / 2.0 + s, 0.0), (tr / 2.0 - s, 0.0)]
    } else {
        let s = (-disc).sqrt();
        [(tr / 2.0, s), (tr / 2.0, -s)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn paper_params(n_tot: i64) -> KineticParams {
        KineticParams {
            n_tot,
            ..KineticParams::default()
        }
    }

    #[test]
    fn propensities_reference_point() {
        let r = propensities(&[100, 50, 250], &paper_params(400), 6.0);
        let expect = [400.0, 466.875, 4.0, 50.0];
        for (a, b) in r.iter().zip(expect) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn no_vacancies_no_adsorption() {
        let r = propensities(&[300, 100, 0], &paper_params(400), 6.0);
        assert_eq!(r[0], 0.0);
        assert_eq!(r[1], 0.0);
        let r = propensities(&[300, 99, 1], &paper_params(400), 6.0);
        assert_eq!(r[1], 0.0);
    }

    #[test]
    fn stoichiometry_conserves_sites() {
        for row in stoichiometry() {
            assert_eq!(row.iter().sum::<i64>(), 0);
        }
        let s = stoichiometry();
        let apply = |state: [i64; 3], j: usize| -> [i64; 3] {
            [state[0] + s[j][0], state[1] + s[j][1], state[2] + s[j][2]]
        };
        assert_eq!(apply([0, 0, 400], 1), [0, 2, 398]);
        assert_eq!(apply([1, 1, 398], 3), [0, 0, 400]);
    }

    #[test]
    fn coarse_rhs_examples() {
        let p = KineticParams::default();
        let d = coarse_rhs(&[0.0, 0.0, 1.0], 6.0, &p);
        assert_abs_diff_eq!(d[0], 1.6, epsilon = 1e-15);
        assert_abs_diff_eq!(d[1], 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d[2], -7.6, epsilon = 1e-14);
        assert_eq!(coarse_rhs(&[0.0, 1.0, 0.0], 6.0, &p), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn beta_forms() {
        let aff = BetaSpec::Affine { b0: 6.0, b1: 0.25 };
        assert_eq!(beta_from_xi(0.0, &aff).unwrap(), 6.0);
        assert_eq!(beta_from_xi(1.0, &aff).unwrap(), 6.25);
        let rel = BetaSpec::Relative { mean: 1.0, rho: 0.05 };
        assert_abs_diff_eq!(beta_from_xi(-1.0, &rel).unwrap(), 0.95, epsilon = 1e-15);
        assert!(beta_from_xi(1.5, &rel).is_err());
        assert!(BetaSpec::Affine { b0: 0.1, b1: 0.2 }.validate().is_err());
        assert!(aff.validate().is_ok());
    }

    #[test]
    fn reduced_jacobian_matches_finite_differences() {
        let p = KineticParams::default();
        let (a, b, beta) = (0.3, 0.4, 6.0);
        let f = |a: f64, b: f64| {
            let d = coarse_rhs(&[a, b, 1.0 - a - b], beta, &p);
            [d[0], d[1]]
        };
        let j = reduced_jacobian(a, b, beta, &p);
        let h = 1e-6;
        for col in 0..2 {
            let (da, db) = if col == 0 { (h, 0.0) } else { (0.0, h) };
            let fp = f(a + da, b + db);
            let fm = f(a - da, b - db);
            for row in 0..2 {
                assert_abs_diff_eq!(j[row][col], (fp[row] - fm[row]) / (2.0 * h), epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn params_validation() {
        assert!(KineticParams { n_tot: 1, ..Default::default() }.validate().is_err());
        assert!(KineticParams { alpha: -1.0, ..Default::default() }.validate().is_err());
        assert!(KineticParams::default().validate().is_ok());
    }
}
