//! Per-unit importance scores and drop-target selection.
//!
//! Two metrics: a sensitivity scan that measures calibration accuracy with
//! each unit temporarily masked, and a cheaper activation-norm score that
//! ranks units by the Frobenius norm of their post-residual outputs (high
//! norm, high-rank activations carry generic information the specialized
//! model can shed first). The combined selector orders by scan score and
//! breaks exact ties with the norm score.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{TrimModel, UnitId};
use crate::scalar::Scalar;
use crate::tasks::{evaluate_accuracy_masked, Sample};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ScoringConfig {
    /// Small positive constant bounding the maximum scan score at
    /// 100 / (1 + delta^2).
    pub delta: f64,
    /// Calibration samples drawn per scoring pass.
    pub calibration_size: usize,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig { delta: 0.01, calibration_size: 256 }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::Config(format!("delta must be positive, got {}", self.delta)));
        }
        if self.calibration_size == 0 {
            return Err(Error::Config("calibration_size must be positive".to_string()));
        }
        Ok(())
    }
}

/// Importance record for one unit. Each scoring pass fills its half; a
/// record produced by `merge_scores` carries both.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceScore {
    pub unit: UnitId,
    /// Calibration accuracy (percent) with the unit masked.
    pub a_i: Option<f64>,
    pub s_scan: Option<f64>,
    /// Mean Frobenius norm of the unit's post-residual activations. Zero is
    /// degenerate (identity passthrough) and flags the unit at score 100.
    pub activation_norm: Option<f64>,
    pub s_norm: Option<f64>,
}

impl ImportanceScore {
    fn scan(unit: UnitId, a_i: f64, delta: f64) -> Self {
        ImportanceScore {
            unit,
            a_i: Some(a_i),
            s_scan: Some(scan_score_value(a_i, delta)),
            activation_norm: None,
            s_norm: None,
        }
    }
}

/// Sensitivity score: (100 - a) / ((1 + d^2) + (1 + d) * a).
/// Strictly decreasing in the accuracy-after-drop a; the maximum
/// 100 / (1 + d^2) is reached at a = 0 and the minimum 0 at a = 100.
pub fn scan_score_value(a: f64, delta: f64) -> f64 {
    (100.0 - a) / ((1.0 + delta * delta) + (1.0 + delta) * a)
}

/// Masks each live unit in turn (parameters untouched), measures calibration
/// accuracy, and scores it. The model is bit-identical before and after.
pub fn scan_scores<S: Scalar>(
    model: &TrimModel<S>,
    calib: &[Sample],
    cfg: &ScoringConfig,
) -> Result<Vec<ImportanceScore>> {
    cfg.validate()?;
    if calib.is_empty() {
        return Err(Error::Input("scan_scores needs a non-empty calibration set".to_string()));
    }
    let live = model.live_units();
    if live.is_empty() {
        return Err(Error::Input("scan_scores needs at least one live unit".to_string()));
    }
    let mut out = Vec::with_capacity(live.len());
    for unit in live {
        let masked = model.mask().without(unit)?;
        let acc = evaluate_accuracy_masked(model, calib, &masked)?.accuracy_pct;
        out.push(ImportanceScore::scan(unit, acc, cfg.delta));
    }
    Ok(out)
}

/// Activation-norm scores over the calibration set: the minimum-norm unit
/// scores exactly 100, the maximum-norm unit lowest; invariant under uniform
/// positive scaling of all norms.
pub fn norm_scores<S: Scalar>(
    model: &TrimModel<S>,
    calib: &[Sample],
) -> Result<Vec<ImportanceScore>> {
    if calib.is_empty() {
        return Err(Error::Input("norm_scores needs a non-empty calibration set".to_string()));
    }
    if model.live_units().is_empty() {
        return Err(Error::Input("norm_scores needs at least one live unit".to_string()));
    }
    // teacher-forcing inputs, matching what evaluation feeds the model
    let inputs: Vec<&[u32]> =
        calib.iter().map(|s| &s.tokens[..s.tokens.len() - 1]).collect();
    let norms = model.snapshot_activation_norms(&inputs)?;
    Ok(norm_scores_from_raw(&norms))
}

/// Eq-style scoring from raw per-unit norms; exposed for formula tests.
pub fn norm_scores_from_raw(norms: &[(UnitId, f64)]) -> Vec<ImportanceScore> {
    let min_positive = norms
        .iter()
        .map(|&(_, n)| n)
        .filter(|&n| n > 0.0)
        .fold(f64::INFINITY, f64::min);
    norms
        .iter()
        .map(|&(unit, n)| {
            let s = if n <= 0.0 || !min_positive.is_finite() {
                // degenerate identity passthrough
                100.0
            } else {
                100.0 * min_positive / n
            };
            ImportanceScore {
                unit,
                a_i: None,
                s_scan: None,
                activation_norm: Some(n),
                s_norm: Some(s),
            }
        })
        .collect()
}

/// Joins two score lists by unit, filling whichever halves each side has.
pub fn merge_scores(a: &[ImportanceScore], b: &[ImportanceScore]) -> Vec<ImportanceScore> {
    let mut merged: Vec<ImportanceScore> = a.to_vec();
    for s in b {
        if let Some(m) = merged.iter_mut().find(|m| m.unit == s.unit) {
            m.a_i = m.a_i.or(s.a_i);
            m.s_scan = m.s_scan.or(s.s_scan);
            m.activation_norm = m.activation_norm.or(s.activation_norm);
            m.s_norm = m.s_norm.or(s.s_norm);
        } else {
            merged.push(*s);
        }
    }
    merged.sort_by_key(|s| s.unit);
    merged
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    Calibration,
    ActivationNorm,
    Both,
}

impl std::fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SelectionMethod::Calibration => write!(f, "calibration"),
            SelectionMethod::ActivationNorm => write!(f, "activation_norm"),
            SelectionMethod::Both => write!(f, "both"),
        }
    }
}

/// Picks the `count` lowest-importance units. Pure in its inputs: permuting
/// the score lists cannot change the selection.
///
/// - `Calibration`: ascending scan score.
/// - `ActivationNorm`: ascending norm score.
/// - `Both`: ascending scan score, exact ties broken by ascending norm
///   score, residual ties by unit order (deepest block last).
pub fn select_targets(
    scan: &[ImportanceScore],
    norm: &[ImportanceScore],
    count: usize,
    method: SelectionMethod,
) -> Result<Vec<UnitId>> {
    let scored: Vec<(UnitId, f64, f64)> = match method {
        SelectionMethod::Calibration => scan
            .iter()
            .map(|s| Ok((s.unit, required(s.s_scan, s.unit, "s_scan")?, 0.0)))
            .collect::<Result<_>>()?,
        SelectionMethod::ActivationNorm => norm
            .iter()
            .map(|s| Ok((s.unit, required(s.s_norm, s.unit, "s_norm")?, 0.0)))
            .collect::<Result<_>>()?,
        SelectionMethod::Both => {
            let mut scan_units: Vec<UnitId> = scan.iter().map(|s| s.unit).collect();
            let mut norm_units: Vec<UnitId> = norm.iter().map(|s| s.unit).collect();
            scan_units.sort();
            norm_units.sort();
            if scan_units != norm_units {
                return Err(Error::Input(
                    "scan and norm score lists cover different unit sets".to_string(),
                ));
            }
            scan.iter()
                .map(|s| {
                    let n = norm.iter().find(|n| n.unit == s.unit).expect("same unit set");
                    Ok((
                        s.unit,
                        required(s.s_scan, s.unit, "s_scan")?,
                        required(n.s_norm, n.unit, "s_norm")?,
                    ))
                })
                .collect::<Result<_>>()?
        }
    };
    if count > scored.len() {
        return Err(Error::Size(format!(
            "cannot select {count} drop targets from {} live units",
            scored.len()
        )));
    }
    let mut ranked = scored;
    ranked.sort_by(|a, b| {
        a.1.partial_cmp(&b.1)
            .expect("finite scores")
            .then(a.2.partial_cmp(&b.2).expect("finite scores"))
            .then(a.0.cmp(&b.0))
    });
    Ok(ranked.into_iter().take(count).map(|(u, _, _)| u).collect())
}

fn required(v: Option<f64>, unit: UnitId, what: &str) -> Result<f64> {
    match v {
        Some(x) if x.is_finite() => Ok(x),
        _ => Err(Error::Input(format!("unit {unit} lacks a finite {what}"))),
    }
}

/// Header for the per-epoch score dump.
pub const SCORE_CSV_HEADER: &str = "epoch,block_index,kind,a_i,s_scan,activation_norm,s_norm";

/// One CSV row of the score dump; missing halves stay empty.
pub fn score_csv_row(epoch: usize, s: &ImportanceScore) -> String {
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    format!(
        "{epoch},{},{},{},{},{},{}",
        s.unit.block,
        s.unit.kind,
        cell(s.a_i),
        cell(s.s_scan),
        cell(s.activation_norm),
        cell(s.s_norm)
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, TrimModel, UnitKind};
    use crate::tasks::{gen_domain_dataset, DomainSpec};

    #[test]
    fn scan_formula_matches_pinned_values() {
        // a = 0 reaches the maximum 100 / (1 + delta^2)
        let s = scan_score_value(0.0, 0.01);
        assert!((s - 100.0 / 1.0001).abs() < 1e-12);
        assert!((s - 99.99000099990001).abs() < 1e-9);
        // a = 100 kills the numerator
        assert_eq!(scan_score_value(100.0, 0.01), 0.0);
        // direct evaluation at a = 50
        let s = scan_score_value(50.0, 0.01);
        assert!((s - 50.0 / 51.5001).abs() < 1e-12);
        assert!((s - 0.970871).abs() < 1e-6);
    }

    #[test]
    fn scan_formula_is_strictly_decreasing_and_bounded() {
        for &delta in &[0.001, 0.01, 0.1, 1.0] {
            let cap = 100.0 / (1.0 + delta * delta);
            let mut prev = f64::INFINITY;
            for step in 0..=1000 {
                let a = step as f64 * 0.1;
                let s = scan_score_value(a, delta);
                assert!(s < prev, "not decreasing at a={a}, delta={delta}");
                assert!((0.0..=cap).contains(&s));
                prev = s;
            }
        }
    }

    #[test]
    fn norm_scores_match_pinned_ratio() {
        let raw = vec![(UnitId::mha(0), 2.0), (UnitId::mlp(0), 4.0)];
        let scores = norm_scores_from_raw(&raw);
        assert_eq!(scores[0].s_norm, Some(100.0));
        assert_eq!(scores[1].s_norm, Some(50.0));
    }

    #[test]
    fn norm_scores_equal_norms_all_hit_100() {
        let raw = vec![(UnitId::mha(0), 3.5), (UnitId::mlp(0), 3.5), (UnitId::mha(1), 3.5)];
        assert!(norm_scores_from_raw(&raw).iter().all(|s| s.s_norm == Some(100.0)));
    }

    #[test]
    fn norm_scores_are_scale_invariant() {
        let base = vec![(UnitId::mha(0), 1.0), (UnitId::mlp(0), 2.5), (UnitId::mha(1), 7.0)];
        let scaled: Vec<(UnitId, f64)> = base.iter().map(|&(u, n)| (u, n * 37.2)).collect();
        let a = norm_scores_from_raw(&base);
        let b = norm_scores_from_raw(&scaled);
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x.s_norm.unwrap() - y.s_norm.unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_norm_unit_is_flagged_at_100() {
        let raw = vec![(UnitId::mha(0), 0.0), (UnitId::mlp(0), 5.0), (UnitId::mha(1), 10.0)];
        let scores = norm_scores_from_raw(&raw);
        assert_eq!(scores[0].s_norm, Some(100.0));
        assert_eq!(scores[0].activation_norm, Some(0.0));
        // others score against the minimum positive norm
        assert_eq!(scores[1].s_norm, Some(100.0));
        assert_eq!(scores[2].s_norm, Some(50.0));
    }

    fn scan_only(unit: UnitId, s: f64) -> ImportanceScore {
        ImportanceScore { unit, a_i: Some(0.0), s_scan: Some(s), activation_norm: None, s_norm: None }
    }

    fn norm_only(unit: UnitId, s: f64) -> ImportanceScore {
        ImportanceScore { unit, a_i: None, s_scan: None, activation_norm: Some(1.0), s_norm: Some(s) }
    }

    #[test]
    fn select_targets_picks_lowest_scan_score() {
        let scan = vec![scan_only(UnitId::mha(0), 0.5), scan_only(UnitId::mlp(0), 0.9)];
        let picked = select_targets(&scan, &[], 1, SelectionMethod::Calibration).unwrap();
        assert_eq!(picked, vec![UnitId::mha(0)]);
    }

    #[test]
    fn select_targets_breaks_exact_ties_with_norm_score() {
        let scan = vec![scan_only(UnitId::mha(0), 0.5), scan_only(UnitId::mlp(0), 0.5)];
        let norm = vec![norm_only(UnitId::mha(0), 100.0), norm_only(UnitId::mlp(0), 40.0)];
        let picked = select_targets(&scan, &norm, 1, SelectionMethod::Both).unwrap();
        assert_eq!(picked, vec![UnitId::mlp(0)]);
    }

    #[test]
    fn select_targets_residual_ties_use_unit_order() {
        let scan = vec![scan_only(UnitId::mlp(1), 0.5), scan_only(UnitId::mha(0), 0.5)];
        let norm = vec![norm_only(UnitId::mlp(1), 60.0), norm_only(UnitId::mha(0), 60.0)];
        let picked = select_targets(&scan, &norm, 2, SelectionMethod::Both).unwrap();
        // deepest block last
        assert_eq!(picked, vec![UnitId::mha(0), UnitId::mlp(1)]);
    }

    #[test]
    fn select_targets_takes_two_smallest_of_three() {
        let scan = vec![
            scan_only(UnitId::mha(0), 3.0),
            scan_only(UnitId::mlp(0), 1.0),
            scan_only(UnitId::mha(1), 2.0),
        ];
        let picked = select_targets(&scan, &[], 2, SelectionMethod::Calibration).unwrap();
        assert_eq!(picked, vec![UnitId::mlp(0), UnitId::mha(1)]);
    }

    #[test]
    fn select_targets_rejects_oversized_count() {
        let scan = vec![scan_only(UnitId::mha(0), 1.0)];
        assert!(matches!(
            select_targets(&scan, &[], 2, SelectionMethod::Calibration),
            Err(Error::Size(_))
        ));
    }

    #[test]
    fn select_targets_is_permutation_invariant() {
        let mut scan = vec![
            scan_only(UnitId::mha(0), 3.0),
            scan_only(UnitId::mlp(0), 1.0),
            scan_only(UnitId::mha(1), 2.0),
        ];
        let a = select_targets(&scan, &[], 2, SelectionMethod::Calibration).unwrap();
        scan.reverse();
        let b = select_targets(&scan, &[], 2, SelectionMethod::Calibration).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scan_scores_leave_the_model_bit_identical() {
        let cfg = ModelConfig {
            vocab_size: 64,
            d_model: 24,
            n_heads: 2,
            d_ffn: 32,
            n_blocks: 2,
            max_seq_len: 16,
            seed: 5,
        };
        let model = TrimModel::<f32>::build(cfg).unwrap();
        let spec = DomainSpec::key_value("alpha", 8, 32, 3, 2);
        let ds = gen_domain_dataset(&spec, 64, 8, 8, 8).unwrap();
        let fp = model.state_fingerprint();
        let scores = scan_scores(&model, &ds.valid, &ScoringConfig::default()).unwrap();
        assert_eq!(model.state_fingerprint(), fp);
        assert_eq!(scores.len(), 4);
        for s in &scores {
            let cap = 100.0 / (1.0 + 0.01f64 * 0.01);
            assert!(s.s_scan.unwrap() >= 0.0 && s.s_scan.unwrap() <= cap);
        }
        // merging with norm halves yields full rows for the CSV dump
        let norm = norm_scores(&model, &ds.valid).unwrap();
        let merged = merge_scores(&scores, &norm);
        assert!(merged.iter().all(|m| m.s_scan.is_some() && m.s_norm.is_some()));
        let row = score_csv_row(3, &merged[0]);
        assert!(row.starts_with("3,0,mha,"));
        assert_eq!(merged[0].unit.kind, UnitKind::Mha);
    }

    #[test]
    fn empty_calibration_set_is_an_input_error() {
        let cfg = ModelConfig {
            vocab_size: 16,
            d_model: 8,
            n_heads: 2,
            d_ffn: 8,
            n_blocks: 1,
            max_seq_len: 8,
            seed: 1,
        };
        let model = TrimModel::<f32>::build(cfg).unwrap();
        assert!(matches!(
            scan_scores(&model, &[], &ScoringConfig::default()),
            Err(Error::Input(_))
        ));
    }
}
