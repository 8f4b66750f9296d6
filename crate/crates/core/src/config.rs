//! Run configuration read from TOML. Every field has a default, and the
//! fully resolved configuration is written next to the outputs.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bridge::{CoarseState, XiScheme};
use crate::cpi::CpiConfig;
use crate::engine::{EnsembleSpec, InnerEngine};
use crate::error::{Error, Result};
use crate::gpc::GpcCoeffs;
use crate::model::{BetaSpec, KineticParams};

/// Starting chaos coefficients: either a deterministic coverage (row 0
/// only) or explicit rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialCondition {
    pub coverage: [f64; 3],
    /// Overrides `coverage` when non-empty; row `i` holds `[A, B, star]`.
    pub rows: Vec<[f64; 3]>,
}

impl Default for InitialCondition {
    fn default() -> Self {
        Self {
            coverage: [0.0, 0.0, 1.0],
            rows: Vec::new(),
        }
    }
}

impl InitialCondition {
    pub fn coeffs(&self, order: usize, field: &str) -> Result<GpcCoeffs> {
        if self.rows.is_empty() {
            CoarseState(self.coverage)
                .validate()
                .map_err(|e| Error::config(format!("{field}.coverage"), e.to_string()))?;
            return Ok(GpcCoeffs::constant(order, self.coverage));
        }
        if self.rows.len() != order + 1 {
            return Err(Error::config(
                format!("{field}.rows"),
                format!("need {} rows for order {order}, got {}", order + 1, self.rows.len()),
            ));
        }
        Ok(GpcCoeffs::from_rows(self.rows.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SsaSection {
    pub beta: f64,
    pub replicas: usize,
    pub dt_obs: f64,
    pub t_end: f64,
    pub initial: [f64; 3],
}

impl Default for SsaSection {
    fn default() -> Self {
        Self {
            beta: 6.0,
            replicas: 100,
            dt_obs: 0.01,
            t_end: 1.0,
            initial: [0.0, 0.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceSection {
    pub xi: XiScheme,
    /// RK4 step.
    pub dt: f64,
}

impl Default for ReferenceSection {
    fn default() -> Self {
        Self {
            xi: XiScheme::MonteCarlo { ne: 40_000 },
            dt: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixedPointSection {
    pub horizon: f64,
    pub order: usize,
    pub ensemble: EnsembleSpec,
    pub initial: InitialCondition,
    /// Newton tolerance on the residual max-norm. When absent: 1e-8 with the
    /// oracle engine; with the SSA, Newton aims for a tenth of the measured
    /// noise floor and accepts anything below three times it.
    pub tol_out: Option<f64>,
    /// Seeds used to measure the SSA noise floor.
    pub noise_seeds: usize,
    pub max_iter: usize,
    pub eps0: Option<f64>,
}

impl Default for FixedPointSection {
    fn default() -> Self {
        Self {
            horizon: 0.4,
            order: 3,
            ensemble: EnsembleSpec {
                xi: XiScheme::GaussLegendre { n: 8 },
                engine: InnerEngine::Oracle { dt: 1e-3 },
                ..Default::default()
            },
            initial: InitialCondition {
                coverage: [0.95, 0.01, 0.04],
                rows: Vec::new(),
            },
            tol_out: None,
            noise_seeds: 6,
            max_iter: 30,
            eps0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuationSection {
    pub beta_min: f64,
    pub beta_max: f64,
    pub ds0: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub max_points: usize,
    /// +1 or −1: initial direction in ⟨β⟩.
    pub direction: f64,
    pub dead_band: f64,
    pub natural: bool,
}

impl Default for ContinuationSection {
    fn default() -> Self {
        Self {
            beta_min: 3.0,
            beta_max: 25.0,
            ds0: 0.1,
            ds_min: 1e-4,
            ds_max: 0.5,
            max_points: 500,
            direction: -1.0,
            dead_band: 1e-3,
            natural: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 lets the runtime choose. Never changes results.
    pub workers: usize,
    pub kinetics: KineticParams,
    pub beta: BetaSpec,
    pub initial: InitialCondition,
    pub ssa: SsaSection,
    pub cpi: CpiConfig,
    pub reference: ReferenceSection,
    pub fixed_point: FixedPointSection,
    pub continuation: ContinuationSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            workers: 0,
            kinetics: KineticParams::default(),
            beta: BetaSpec::default(),
            initial: InitialCondition::default(),
            ssa: SsaSection::default(),
            cpi: CpiConfig::default(),
            reference: ReferenceSection::default(),
            fixed_point: FixedPointSection::default(),
            continuation: ContinuationSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("config", e.message().to_string() + &span_hint(text, e.span())))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Canonical text of the resolved configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always serializable")
    }

    /// SHA-256 of the resolved configuration text, hex encoded. The worker
    /// count is left out since it never changes results.
    pub fn hash(&self) -> String {
        let canonical = Self { workers: 0, ..self.clone() };
        Sha256::digest(canonical.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn validate_common(&self) -> Result<()> {
        self.kinetics.validate()?;
        self.beta.validate()
    }
}

fn span_hint(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(r) => {
            let line = text[..r.start.min(text.len())].matches('\n').count() + 1;
            format!(" (line {line})")
        }
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn resolved_config_round_trips() {
        let mut cfg = RunConfig {
            seed: 99,
            ..RunConfig::default()
        };
        cfg.cpi.ensemble.engine = InnerEngine::Oracle { dt: 1e-3 };
        cfg.beta = BetaSpec::Relative { mean: 8.0, rho: 0.05 };
        cfg.fixed_point.tol_out = Some(1e-7);
        let text = cfg.to_toml();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn hash_ignores_worker_count() {
        let mut cfg = RunConfig::default();
        let h = cfg.hash();
        cfg.workers = 7;
        assert_eq!(cfg.hash(), h);
        cfg.seed = 2;
        assert_ne!(cfg.hash(), h);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml("[kinetics]\nalpah = 1.0\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("alpah"), "{err}");
    }

    #[test]
    fn nested_sections_parse() {
        let cfg = RunConfig::from_toml(
            r#"
seed = 7
[beta]
form = "relative"
mean = 10.0
rho = 0.05
[cpi]
dt_cc = 0.4
[cpi.ensemble.xi]
kind = "monte_carlo"
ne = 200
[cpi.ensemble.engine]
kind = "ssa"
replicas = 100
"#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.cpi.dt_cc, 0.4);
        assert_eq!(cfg.cpi.n_inner, 40);
        assert_eq!(cfg.cpi.ensemble.xi, XiScheme::MonteCarlo { ne: 200 });
        assert!(matches!(cfg.cpi.ensemble.engine, InnerEngine::Ssa { replicas: 100, .. }));
    }

    #[test]
    fn initial_rows_must_match_order() {
        let ic = InitialCondition {
            rows: vec![[0.3, 0.3, 0.4]],
            ..Default::default()
        };
        assert!(ic.coeffs(3, "initial").is_err());
        assert_eq!(ic.coeffs(0, "initial").unwrap().order(), 0);
        let bad = InitialCondition {
            coverage: [0.5, 0.6, 0.1],
            rows: Vec::new(),
        };
        assert!(matches!(bad.coeffs(3, "initial"), Err(Error::Config { .. })));
    }
}
