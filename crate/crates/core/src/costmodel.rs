//! Analytic training-time model: full fine-tuning, one- and two-drop
//! progressive schedules, and the measured sparse-update scaling factor.
//!
//! Time units are per-layer-per-epoch multiples of `c`; the bench side fits
//! `c` and the sparse factor from real epoch timings.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CostParams {
    /// Time to train one layer for one epoch.
    pub c: f64,
    /// Total layer count N.
    pub n_layers: usize,
    /// Layers to drop.
    pub n_drop: usize,
    pub n_epochs: usize,
    /// Measured sparse/full epoch-time ratio.
    pub sparse_factor: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams { c: 1.0, n_layers: 64, n_drop: 32, n_epochs: 5, sparse_factor: 0.6 }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(Error::Config(format!("c must be positive, got {}", self.c)));
        }
        if self.n_layers == 0 {
            return Err(Error::Config("n_layers must be positive".to_string()));
        }
        if self.n_drop > self.n_layers {
            return Err(Error::Dimension(format!(
                "cannot drop {} of {} layers",
                self.n_drop, self.n_layers
            )));
        }
        if !(self.sparse_factor > 0.0) {
            return Err(Error::Config("sparse_factor must be positive".to_string()));
        }
        Ok(())
    }
}

/// Full fine-tuning for n epochs: c * N * n.
pub fn t_full(p: &CostParams) -> f64 {
    p.c * p.n_layers as f64 * p.n_epochs as f64
}

/// One drop per epoch until n_drop layers are gone:
/// c * n_drop * (N - (n_drop - 1) / 2), the telescoped sum
/// T(N) + T(N-1) + ... + T(N - n_drop + 1).
pub fn t_drop1(p: &CostParams) -> Result<f64> {
    p.validate()?;
    if p.n_drop < 1 {
        return Err(Error::Dimension("one-drop schedule needs n_drop >= 1".to_string()));
    }
    let n = p.n_layers as f64;
    let nd = p.n_drop as f64;
    Ok(p.c * nd * (n - (nd - 1.0) / 2.0))
}

/// Two drops per epoch: c * (n_drop / 2) * (N - n_drop / 2 + 1), the sum
/// T(N) + T(N-2) + ... + T(N - n_drop + 2). n_drop must be even.
pub fn t_drop2(p: &CostParams) -> Result<f64> {
    p.validate()?;
    if p.n_drop < 2 || p.n_drop % 2 != 0 {
        return Err(Error::Dimension(format!(
            "two-drop schedule needs even n_drop >= 2, got {}",
            p.n_drop
        )));
    }
    let n = p.n_layers as f64;
    let half = p.n_drop as f64 / 2.0;
    Ok(p.c * half * (n - half + 1.0))
}

/// Sparse-update scaling of any schedule's time.
pub fn t_sparse(base: f64, p: &CostParams) -> Result<f64> {
    if base < 0.0 {
        return Err(Error::Input(format!("base time must be non-negative, got {base}")));
    }
    Ok(p.sparse_factor * base)
}

/// Header of the predicted-vs-measured curve export.
pub const COST_CSV_HEADER: &str =
    "n_d,t_full,t_drop1,t_drop2,t_sparse_drop1,t_sparse_drop2,measured";

/// Writes cost curves for n_d = 1..=max_drop. `measured` pairs
/// (layers_dropped, cumulative seconds) fill the last column where present.
pub fn write_cost_curves(
    path: &Path,
    base: &CostParams,
    max_drop: usize,
    measured: &[(usize, f64)],
) -> Result<()> {
    if max_drop > base.n_layers {
        return Err(Error::Dimension(format!(
            "max_drop {} exceeds n_layers {}",
            max_drop, base.n_layers
        )));
    }
    let mut out = String::new();
    out.push_str(COST_CSV_HEADER);
    out.push('\n');
    let full = t_full(base);
    for nd in 1..=max_drop {
        let p = CostParams { n_drop: nd, ..*base };
        let d1 = t_drop1(&p)?;
        let d2 = if nd >= 2 && nd % 2 == 0 { Some(t_drop2(&p)?) } else { None };
        let cell = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
        let m = measured.iter().find(|&&(d, _)| d == nd).map(|&(_, secs)| secs);
        out.push_str(&format!(
            "{nd},{full:.4},{d1:.4},{},{:.4},{},{}\n",
            cell(d2),
            t_sparse(d1, &p)?,
            cell(d2.map(|d| d * p.sparse_factor)),
            cell(m),
        ));
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: explicit epoch-by-epoch summation.
    fn loop_drop(n_layers: usize, n_drop: usize, step: usize, c: f64) -> f64 {
        let mut total = 0.0;
        let mut live = n_layers;
        let mut dropped = 0;
        while dropped < n_drop {
            total += c * live as f64;
            live -= step;
            dropped += step;
        }
        total
    }

    #[test]
    fn closed_forms_match_pinned_values() {
        let p = CostParams { c: 1.0, n_layers: 64, n_drop: 32, n_epochs: 5, sparse_factor: 0.6 };
        assert_eq!(t_drop1(&p).unwrap(), 1552.0);
        assert_eq!(loop_drop(64, 32, 1, 1.0), 1552.0);
        assert_eq!(t_drop2(&p).unwrap(), 784.0);
        assert_eq!(loop_drop(64, 32, 2, 1.0), 784.0);
        assert_eq!(t_full(&p), 320.0);
        assert!((t_sparse(t_drop1(&p).unwrap(), &p).unwrap() - 931.2).abs() < 1e-9);
        assert!((t_sparse(t_drop2(&p).unwrap(), &p).unwrap() - 470.4).abs() < 1e-9);
    }

    #[test]
    fn t_full_edge_cases() {
        let zero = CostParams { n_epochs: 0, ..CostParams::default() };
        assert_eq!(t_full(&zero), 0.0);
        let p = CostParams { c: 2.0, n_layers: 64, n_epochs: 5, ..CostParams::default() };
        assert_eq!(t_full(&p), 2.0 * 320.0);
    }

    #[test]
    fn single_drop_costs_one_full_epoch() {
        let p = CostParams { c: 1.5, n_layers: 40, n_drop: 1, ..CostParams::default() };
        assert_eq!(t_drop1(&p).unwrap(), 1.5 * 40.0);
        let p2 = CostParams { n_drop: 2, ..p };
        assert_eq!(t_drop2(&p2).unwrap(), 1.5 * 40.0);
    }

    #[test]
    fn closed_forms_equal_loop_sums_over_a_small_sweep() {
        for n in 1..=48usize {
            for nd in 1..=n {
                let p = CostParams { c: 1.0, n_layers: n, n_drop: nd, ..CostParams::default() };
                let d1 = t_drop1(&p).unwrap();
                assert!(
                    (d1 - loop_drop(n, nd, 1, 1.0)).abs() < 1e-9,
                    "drop1 mismatch at N={n}, n_d={nd}"
                );
                if nd >= 2 && nd % 2 == 0 {
                    let d2 = t_drop2(&p).unwrap();
                    assert!(
                        (d2 - loop_drop(n, nd, 2, 1.0)).abs() < 1e-9,
                        "drop2 mismatch at N={n}, n_d={nd}"
                    );
                    assert!(d2 < d1, "two-at-a-time must be cheaper at N={n}, n_d={nd}");
                }
            }
        }
    }

    #[test]
    fn invalid_schedules_are_domain_errors() {
        let odd = CostParams { n_drop: 5, ..CostParams::default() };
        assert!(matches!(t_drop2(&odd), Err(Error::Dimension(_))));
        let over = CostParams { n_drop: 65, ..CostParams::default() };
        assert!(matches!(t_drop1(&over), Err(Error::Dimension(_))));
    }

    #[test]
    fn sparse_factor_one_is_identity() {
        let p = CostParams { sparse_factor: 1.0, ..CostParams::default() };
        assert_eq!(t_sparse(123.4, &p).unwrap(), 123.4);
    }

    #[test]
    fn csv_export_includes_measured_column() {
        let dir = std::env::temp_dir().join("layertrim-cost-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("curves.csv");
        let p = CostParams::default();
        write_cost_curves(&path, &p, 32, &[(32, 1234.5)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], COST_CSV_HEADER);
        assert_eq!(lines.len(), 33);
        let last: Vec<&str> = lines[32].split(',').collect();
        assert_eq!(last[0], "32");
        assert_eq!(last[1], "320.0000");
        assert_eq!(last[2], "1552.0000");
        assert_eq!(last[3], "784.0000");
        assert_eq!(last[4], "931.2000");
        assert_eq!(last[5], "470.4000");
        assert_eq!(last[6], "1234.5000");
        // odd rows leave the two-drop cells empty
        let odd: Vec<&str> = lines[31].split(',').collect();
        assert_eq!(odd[3], "");
        assert_eq!(odd[6], "");
    }
}
