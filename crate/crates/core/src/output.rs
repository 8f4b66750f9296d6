//! CSV emission. Floats are written with 17 significant digits so files diff
//! cleanly and round-trip exactly.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::gpc::{self, GpcCoeffs};
use crate::model::SPECIES;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

/// In-memory CSV table with the provenance comment as its first line.
#[derive(Debug, Clone)]
pub struct Table {
    text: String,
    columns: usize,
}

impl Table {
    pub fn new(seed: u64, config_hash: &str, columns: &[String]) -> Self {
        let mut text = String::new();
        writeln!(text, "# eqfree {VERSION} seed={seed} config_sha256={config_hash}").unwrap();
        writeln!(text, "{}", columns.join(",")).unwrap();
        Self {
            text,
            columns: columns.len(),
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        assert_eq!(cells.len(), self.columns, "row width must match the header");
        writeln!(self.text, "{}", cells.join(",")).unwrap();
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, &self.text)?;
        Ok(())
    }
}

/// `c{i}_{A|B|star}` for every coefficient, row-major.
pub fn coeff_columns(order: usize) -> Vec<String> {
    (0..=order)
        .flat_map(|i| SPECIES.iter().map(move |s| format!("c{i}_{s}")))
        .collect()
}

pub fn per_species(prefix: &str) -> Vec<String> {
    SPECIES.iter().map(|s| format!("{prefix}_{s}")).collect()
}

/// Coefficients followed by mean and standard deviation per species.
pub fn coeff_cells(c: &GpcCoeffs) -> Vec<String> {
    let (mean, var) = gpc::moments(c);
    c.to_flat()
        .iter()
        .chain(mean.iter())
        .copied()
        .chain(var.iter().map(|v| v.max(0.0).sqrt()))
        .map(fmt_f64)
        .collect()
}

pub fn coeff_header(order: usize) -> Vec<String> {
    let mut cols = coeff_columns(order);
    cols.extend(per_species("mean"));
    cols.extend(per_species("std"));
    cols
}

/// Minimum and maximum of the expansion over ξ ∈ [−1, 1], on a uniform
/// grid of 401 points.
pub fn envelope(c: &GpcCoeffs) -> ([f64; 3], [f64; 3]) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for k in 0..=400 {
        let v = gpc::expand(c, -1.0 + k as f64 / 200.0);
        for s in 0..3 {
            lo[s] = lo[s].min(v[s]);
            hi[s] = hi[s].max(v[s]);
        }
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
            assert_eq!(mantissa.len(), 17);
        }
    }

    #[test]
    fn header_comment_comes_first() {
        let mut t = Table::new(5, "abc", &["t".into(), "x".into()]);
        t.row(&[fmt_f64(0.0), fmt_f64(1.0)]);
        let mut lines = t.as_str().lines();
        assert_eq!(lines.next().unwrap(), format!("# eqfree {VERSION} seed=5 config_sha256=abc"));
        assert_eq!(lines.next().unwrap(), "t,x");
    }

    #[test]
    fn coefficient_column_names() {
        let cols = coeff_columns(1);
        assert_eq!(cols, ["c0_A", "c0_B", "c0_star", "c1_A", "c1_B", "c1_star"]);
        assert_eq!(coeff_header(3).len(), 12 + 6);
    }

    #[test]
    fn envelope_of_a_linear_expansion() {
        let c = GpcCoeffs::from_rows(vec![[0.5, 0.3, 0.2], [0.1, -0.1, 0.0]]);
        let (lo, hi) = envelope(&c);
        assert!((lo[0] - 0.4).abs() < 1e-15 && (hi[0] - 0.6).abs() < 1e-15);
        assert!((lo[1] - 0.2).abs() < 1e-15 && (hi[1] - 0.4).abs() < 1e-15);
    }
}
