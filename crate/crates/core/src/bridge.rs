//! Lifting and restriction across the two scale gaps:
//! chaos coefficients ↔ coverage ensemble over ξ, and coverage ↔ site counts.

use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpc::{self, GpcCoeffs, QuadratureRule};
use crate::rng::{RngStream, StreamKey};
use crate::ssa::FineState;

/// Mean coverages `(θ_A, θ_B, θ_*)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoarseState(pub [f64; 3]);

impl CoarseState {
    pub fn new(theta_a: f64, theta_b: f64, theta_v: f64) -> Self {
        Self([theta_a, theta_b, theta_v])
    }

    /// Builds a state from `(θ_A, θ_B)` with the vacancy fraction closing
    /// the simplex.
    pub fn from_ab(theta_a: f64, theta_b: f64) -> Self {
        Self([theta_a, theta_b, 1.0 - theta_a - theta_b])
    }

    pub fn theta(&self) -> [f64; 3] {
        self.0
    }

    pub fn on_simplex(&self, tol: f64) -> bool {
        self.0.iter().all(|&v| v >= -tol && v <= 1.0 + tol) && (self.0.iter().sum::<f64>() - 1.0).abs() <= tol
    }

    pub fn validate(&self) -> Result<()> {
        if !self.on_simplex(1e-12) {
            return Err(Error::Numerical(format!("coverage {:?} is not on the simplex", self.0)));
        }
        Ok(())
    }
}

/// How ξ values are chosen for the coverage ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum XiScheme {
    /// Gauss-Legendre nodes; projection by quadrature.
    GaussLegendre { n: usize },
    /// `ne` i.i.d. uniform draws; projection by sample averaging.
    MonteCarlo { ne: usize },
}

impl Default for XiScheme {
    fn default() -> Self {
        XiScheme::GaussLegendre { n: 8 }
    }
}

/// Stream node index reserved for drawing Monte-Carlo ξ samples.
const XI_SAMPLER_NODE: u64 = u64::MAX;

impl XiScheme {
    pub fn len(&self) -> usize {
        match *self {
            XiScheme::GaussLegendre { n } => n,
            XiScheme::MonteCarlo { ne } => ne,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self, order: usize) -> Result<()> {
        if self.len() < order + 1 {
            return Err(Error::config(
                "ensemble.xi",
                format!("{} xi values cannot resolve order {order}", self.len()),
            ));
        }
        Ok(())
    }

    /// Concrete ξ values. Monte-Carlo draws depend on `(master, epoch)`.
    pub fn realize(&self, master: u64, epoch: u64) -> Result<XiSet> {
        match *self {
            XiScheme::GaussLegendre { n } => Ok(XiSet::Quadrature(gpc::gl_rule(n)?)),
            XiScheme::MonteCarlo { ne } => {
                let mut rng = RngStream::from_key(StreamKey::new(master, epoch, XI_SAMPLER_NODE, 0));
                Ok(XiSet::Samples((0..ne).map(|_| rng.symmetric()).collect()))
            }
        }
    }
}

/// Realized ξ values together with the projection they imply.
#[derive(Debug, Clone, PartialEq)]
pub enum XiSet {
    Quadrature(QuadratureRule),
    Samples(Vec<f64>),
}

impl XiSet {
    pub fn xis(&self) -> &[f64] {
        match self {
            XiSet::Quadrature(rule) => &rule.nodes,
            XiSet::Samples(xs) => xs,
        }
    }

    pub fn len(&self) -> usize {
        self.xis().len()
    }

    pub fn is_empty(&self) -> bool {
        self.xis().is_empty()
    }

    /// Linear weights mapping per-ξ values onto coefficient `order`:
    /// `c_order = Σ_k a_k v_k`.
    pub fn projection_weights(&self, order: usize) -> Vec<f64> {
        let scale = 1.0 / gpc::norm_sq(order);
        match self {
            XiSet::Quadrature(rule) => rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .map(|(&x, &w)| w * gpc::legendre_eval(order, x) * scale)
                .collect(),
            XiSet::Samples(xs) => {
                let ne = xs.len() as f64;
                xs.iter().map(|&x| gpc::legendre_eval(order, x) * scale / ne).collect()
            }
        }
    }
}

/// Thresholds on how far an expansion may leave the simplex before lifting
/// refuses it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClampPolicy {
    pub warn: f64,
    pub fail: f64,
}

impl Default for ClampPolicy {
    fn default() -> Self {
        Self { warn: 0.05, fail: 0.2 }
    }
}

impl ClampPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.warn >= 0.0 && self.fail >= self.warn) {
            return Err(Error::config(
                "ensemble.clamp",
                format!("need 0 <= warn <= fail, got warn={} fail={}", self.warn, self.fail),
            ));
        }
        Ok(())
    }
}

/// What clamping did during one lifting.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClampReport {
    /// Largest negative excursion removed, over all ξ and components.
    pub max_magnitude: f64,
    pub clamped_members: usize,
}

/// Expands the coefficients at each ξ and pushes the result onto the
/// simplex: negative components are zeroed, then the triple is rescaled to
/// sum to one.
pub fn lift_gpc_to_coarse(
    coeffs: &GpcCoeffs,
    xis: &[f64],
    policy: &ClampPolicy,
) -> Result<(Vec<CoarseState>, ClampReport)> {
    let mut report = ClampReport::default();
    let mut out = Vec::with_capacity(xis.len());
    for &xi in xis {
        if !(xi.abs() <= 1.0) {
            return Err(Error::Numerical(format!("xi = {xi} outside [-1, 1]")));
        }
        let raw = gpc::expand(coeffs, xi);
        let neg = raw.iter().map(|&v| (-v).max(0.0)).fold(0.0, f64::max);
        if neg > 0.0 {
            report.clamped_members += 1;
            report.max_magnitude = report.max_magnitude.max(neg);
        }
        let clamped = raw.map(|v| v.max(0.0));
        let total: f64 = clamped.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Unliftable {
                magnitude: f64::INFINITY,
                limit: policy.fail,
            });
        }
        out.push(CoarseState(clamped.map(|v| v / total)));
    }
    if report.max_magnitude > policy.fail {
        return Err(Error::Unliftable {
            magnitude: report.max_magnitude,
            limit: policy.fail,
        });
    }
    if report.max_magnitude > policy.warn {
        log::warn!(
            "lifting clamped {} ensemble members, largest excursion {:.3e}",
            report.clamped_members,
            report.max_magnitude
        );
    }
    Ok((out, report))
}

/// How a coverage is turned into integer site counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiftingPolicy {
    /// Independent multinomial draw per replica; mean coverage is exact.
    #[default]
    Multinomial,
    /// Deterministic largest-remainder rounding; every replica identical.
    LargestRemainder,
}

fn binomial(n: i64, p: f64, rng: &mut RngStream) -> i64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n as u64, p)
        .expect("probability checked to lie in (0, 1)")
        .sample(rng) as i64
}

/// Site counts for one replica.
pub fn lift_one(theta: &CoarseState, n_tot: i64, policy: LiftingPolicy, rng: &mut RngStream) -> [i64; 3] {
    let [a, b, v] = theta.0;
    match policy {
        LiftingPolicy::Multinomial => {
            let n_a = binomial(n_tot, a, rng);
            let rest = b + v;
            let n_b = if rest > 0.0 {
                binomial(n_tot - n_a, b / rest, rng)
            } else {
                0
            };
            [n_a, n_b, n_tot - n_a - n_b]
        }
        LiftingPolicy::LargestRemainder => {
            let exact = [a * n_tot as f64, b * n_tot as f64, v * n_tot as f64];
            let mut counts = exact.map(|x| x.floor() as i64);
            let mut missing = n_tot - counts.iter().sum::<i64>();
            let mut order = [0usize, 1, 2];
            order.sort_by(|&i, &j| {
                let (fi, fj) = (exact[i] - exact[i].floor(), exact[j] - exact[j].floor());
                fj.partial_cmp(&fi).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j))
            });
            let mut k = 0;
            while missing > 0 {
                counts[order[k % 3]] += 1;
                missing -= 1;
                k += 1;
            }
            counts
        }
    }
}

/// `replicas` independent fine states consistent with `theta`. Replica `r`
/// draws from the stream `(master, epoch, node, r)`.
pub fn lift_coarse_to_fine(
    theta: &CoarseState,
    n_tot: i64,
    replicas: usize,
    policy: LiftingPolicy,
    stream: StreamKey,
) -> Vec<FineState> {
    (0..replicas)
        .map(|r| {
            let mut rng = RngStream::from_key(StreamKey {
                replica: r as u64,
                ..stream
            });
            FineState::new(lift_one(theta, n_tot, policy, &mut rng).to_vec(), 0.0)
        })
        .collect()
}

/// Running integer sum of replica counts; dividing once at the end keeps
/// the restriction independent of summation order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CountSum {
    pub counts: [i64; 3],
    pub replicas: i64,
}

impl CountSum {
    pub fn add(&mut self, counts: &[i64]) {
        for s in 0..3 {
            self.counts[s] += counts[s];
        }
        self.replicas += 1;
    }

    pub fn coverage(&self, n_tot: i64) -> CoarseState {
        let denom = (self.replicas * n_tot) as f64;
        CoarseState(self.counts.map(|c| c as f64 / denom))
    }
}

/// Average coverage over the replicas.
pub fn restrict_fine_to_coarse(states: &[FineState]) -> Result<CoarseState> {
    let first = states
        .first()
        .ok_or_else(|| Error::Dimension("cannot restrict an empty ensemble".into()))?;
    let n_tot = first.total();
    if n_tot <= 0 {
        return Err(Error::Numerical("replica with no sites".into()));
    }
    let mut sum = CountSum::default();
    for s in states {
        if s.counts.len() != 3 {
            return Err(Error::Dimension(format!("replica has {} species", s.counts.len())));
        }
        if s.total() != n_tot {
            return Err(Error::Numerical(format!(
                "replicas disagree on site count: {} vs {n_tot}",
                s.total()
            )));
        }
        sum.add(&s.counts);
    }
    Ok(sum.coverage(n_tot))
}

/// Chaos coefficients of a coverage ensemble, by quadrature or sample mean
/// depending on how the ξ values were generated.
pub fn restrict_coarse_to_gpc(states: &[CoarseState], xis: &XiSet, order: usize) -> Result<GpcCoeffs> {
    let values: Vec<[f64; 3]> = states.iter().map(|s| s.0).collect();
    match xis {
        XiSet::Quadrature(rule) => gpc::project_quadrature(&values, rule, order),
        XiSet::Samples(xs) => Ok(gpc::project_mc(xs, &values, order)?.coeffs),
    }
}
