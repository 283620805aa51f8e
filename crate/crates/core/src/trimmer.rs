//! The trimming pipeline: per-epoch training, score-driven dropping,
//! sparse-update freezing, adaptive multi-drop, stopping criteria, and the
//! rule-based baselines.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bench::per_token_latency;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, TrimModel, UnitId};
use crate::scalar::Scalar;
use crate::scoring::{
    merge_scores, norm_scores, scan_scores, select_targets, ImportanceScore, ScoringConfig,
    SelectionMethod,
};
use crate::tasks::{evaluate_accuracy, evaluate_accuracy_masked, sample_calibration, Sample};
use crate::tensor::optim::{OptimKind, Optimizer};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StoppingCriterion {
    /// Stop (reverting the breaching drop) once validation accuracy would
    /// fall below `floor_fraction` times the post-first-epoch reference.
    Accuracy { floor_fraction: f64 },
    /// Stop once the given deployment targets are met; both must hold when
    /// both are set.
    Efficiency {
        memory_ratio: Option<f64>,
        per_token_latency_s: Option<f64>,
    },
}

impl Default for StoppingCriterion {
    fn default() -> Self {
        StoppingCriterion::Accuracy { floor_fraction: 0.90 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrimConfig {
    pub method: SelectionMethod,
    /// Sparse update ratio r: the top floor(r * N) units by initial
    /// importance stay trainable, the rest freeze.
    pub sparse_ratio: f64,
    /// Units dropped per epoch.
    pub drops_per_epoch: usize,
    /// Small positive constant in the scan-score denominator.
    pub delta: f64,
    pub stopping: StoppingCriterion,
    pub max_epochs: usize,
    pub lr: f64,
    pub optimizer: OptimKind,
    pub batch_size: usize,
    pub calibration_size: usize,
    pub seed: u64,
}

impl Default for TrimConfig {
    fn default() -> Self {
        TrimConfig {
            method: SelectionMethod::Both,
            sparse_ratio: 0.25,
            drops_per_epoch: 1,
            delta: 0.01,
            stopping: StoppingCriterion::default(),
            max_epochs: 12,
            lr: 1e-3,
            optimizer: OptimKind::AdamW,
            batch_size: 16,
            calibration_size: 256,
            seed: 0,
        }
    }
}

impl TrimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sparse_ratio > 0.0 && self.sparse_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "sparse_ratio must be in (0, 1], got {}",
                self.sparse_ratio
            )));
        }
        if self.drops_per_epoch == 0 {
            return Err(Error::Config("drops_per_epoch must be >= 1".to_string()));
        }
        if !(self.delta > 0.0) {
            return Err(Error::Config("delta must be positive".to_string()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be >= 1".to_string()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("lr must be positive".to_string()));
        }
        if self.batch_size == 0 || self.calibration_size == 0 {
            return Err(Error::Config("batch and calibration sizes must be >= 1".to_string()));
        }
        match self.stopping {
            StoppingCriterion::Accuracy { floor_fraction } => {
                if !(floor_fraction > 0.0) {
                    return Err(Error::Config("floor_fraction must be positive".to_string()));
                }
            }
            StoppingCriterion::Efficiency { memory_ratio, per_token_latency_s } => {
                if memory_ratio.is_none() && per_token_latency_s.is_none() {
                    return Err(Error::Config(
                        "efficiency stopping needs a memory or latency target".to_string(),
                    ));
                }
                if let Some(m) = memory_ratio {
                    if !(m > 0.0 && m <= 1.0) {
                        return Err(Error::Config(format!(
                            "memory_ratio target must be in (0, 1], got {m}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn scoring(&self) -> ScoringConfig {
        ScoringConfig { delta: self.delta, calibration_size: self.calibration_size }
    }
}

/// The sparse-update plan fixed at run start. The trainable set only ever
/// shrinks (a dropped unit leaves it; nothing is promoted).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FreezePlan {
    pub trainable: Vec<UnitId>,
    pub origin_scores: Vec<ImportanceScore>,
}

/// Scans the untouched model once and freezes everything but the top
/// floor(r * N) units by scan score (highest importance trains). Boundary
/// ties go to the lower unit id.
pub fn initial_freeze_plan<S: Scalar>(
    model: &mut TrimModel<S>,
    calib: &[Sample],
    cfg: &TrimConfig,
) -> Result<FreezePlan> {
    cfg.validate()?;
    let n_units = model.unit_count();
    let n_trainable = (cfg.sparse_ratio * n_units as f64).floor() as usize;
    if n_trainable == 0 {
        return Err(Error::Config(format!(
            "sparse_ratio {} leaves no trainable units out of {n_units}",
            cfg.sparse_ratio
        )));
    }
    let scores = scan_scores(model, calib, &cfg.scoring())?;
    let mut ranked: Vec<&ImportanceScore> = scores.iter().collect();
    ranked.sort_by(|a, b| {
        b.s_scan
            .partial_cmp(&a.s_scan)
            .expect("finite scores")
            .then(a.unit.cmp(&b.unit))
    });
    let mut trainable: Vec<UnitId> =
        ranked.into_iter().take(n_trainable).map(|s| s.unit).collect();
    trainable.sort();
    model.set_trainable(&trainable)?;
    Ok(FreezePlan { trainable, origin_scores: scores })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrimStatus {
    /// The next drop would have breached the accuracy floor; it was
    /// reverted and the run stopped.
    AccuracyFloor,
    /// Memory/latency targets met.
    EfficiencyTarget,
    /// max_epochs elapsed before the criterion fired.
    MaxEpochs,
    /// No live units remain to drop.
    UnitsExhausted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropRecord {
    pub epoch: usize,
    pub unit: UnitId,
    pub s_scan: Option<f64>,
    pub s_norm: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Validation accuracy after this epoch's training, before any drop.
    pub val_accuracy: f64,
    /// Validation accuracy after this epoch's committed drops, if any.
    pub val_accuracy_after_drop: Option<f64>,
    pub wall_secs: f64,
    pub live_units: usize,
    pub memory_ratio: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochScores {
    pub epoch: usize,
    pub scores: Vec<ImportanceScore>,
}

/// Ordered drop log, per-epoch metrics, and final deployment numbers for
/// one trimming run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrimReport {
    pub config: TrimConfig,
    pub model: ModelConfig,
    pub status: TrimStatus,
    /// Accuracy after the first (pre-drop) epoch; the C_a floor references it.
    pub reference_accuracy: f64,
    pub initial_trainable: Vec<UnitId>,
    pub initial_scores: Vec<ImportanceScore>,
    pub drops: Vec<DropRecord>,
    pub epochs: Vec<EpochRecord>,
    pub epoch_scores: Vec<EpochScores>,
    pub final_memory_ratio: f64,
    pub final_per_token_latency_s: f64,
    pub final_live_units: usize,
    pub total_wall_secs: f64,
}

impl TrimReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("bad report json: {e}")))
    }

    /// Cumulative wall time after each n-th drop, for the cost-model
    /// measured column.
    pub fn measured_drop_times(&self) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        let mut cum = 0.0;
        let mut dropped = 0usize;
        for e in &self.epochs {
            cum += e.wall_secs;
            let drops_this_epoch = self.drops.iter().filter(|d| d.epoch == e.epoch).count();
            if drops_this_epoch > 0 {
                dropped += drops_this_epoch;
                out.push((dropped, cum));
            }
        }
        out
    }
}

/// Calibration draw sized and seeded by the run config, capped at the
/// split size.
pub fn sample_calibration_for(valid: &[Sample], cfg: &TrimConfig) -> Result<Vec<Sample>> {
    sample_calibration(valid, cfg.calibration_size.min(valid.len()), cfg.seed)
}

/// Linear decay from the base rate to a tenth of it across the planned
/// epochs.
fn lr_at(base: f64, epoch: usize, total_epochs: usize) -> f64 {
    if total_epochs <= 1 {
        return base;
    }
    let progress = (epoch - 1) as f64 / (total_epochs - 1) as f64;
    base * (1.0 - 0.9 * progress)
}

/// One pass over the training split in seeded-shuffle order. Returns
/// (mean loss, wall seconds).
pub fn train_one_epoch<S: Scalar>(
    model: &mut TrimModel<S>,
    train: &[Sample],
    optimizer: &mut Optimizer<S>,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Result<(f64, f64)> {
    use rand::Rng;
    if train.is_empty() {
        return Err(Error::Input("empty training split".to_string()));
    }
    let t0 = Instant::now();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = crate::rng::substream_indexed(seed, "epoch-shuffle", epoch as u64);
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let mut loss_sum = 0.0;
    let mut n = 0usize;
    for chunk in order.chunks(batch_size) {
        let batch: Vec<_> = chunk.iter().map(|&i| train[i].scored()).collect();
        let loss = model.train_batch(&batch, optimizer)?;
        loss_sum += loss * batch.len() as f64;
        n += batch.len();
    }
    Ok((loss_sum / n as f64, t0.elapsed().as_secs_f64()))
}

/// Plain fine-tuning without dropping (full-FT, or sparse-FT when the
/// caller applied a freeze plan first).
pub fn run_train<S: Scalar>(
    model: &mut TrimModel<S>,
    train: &[Sample],
    valid: &[Sample],
    cfg: &TrimConfig,
    epochs: usize,
) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.lr);
    let mut out = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        optimizer.set_lr(lr_at(cfg.lr, epoch, epochs));
        let (train_loss, wall_secs) =
            train_one_epoch(model, train, &mut optimizer, cfg.batch_size, cfg.seed, epoch)?;
        let val_accuracy = evaluate_accuracy(model, valid)?.accuracy_pct;
        out.push(EpochRecord {
            epoch,
            train_loss,
            val_accuracy,
            val_accuracy_after_drop: None,
            wall_secs,
            live_units: model.live_units().len(),
            memory_ratio: model.memory_ratio(),
        });
    }
    Ok(out)
}

/// The full loop: train an epoch, score live units on a fresh calibration
/// sample, drop the selected targets, stop per the criterion.
pub fn run_trim<S: Scalar>(
    model: &mut TrimModel<S>,
    train: &[Sample],
    valid: &[Sample],
    cfg: &TrimConfig,
) -> Result<TrimReport> {
    cfg.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(Error::Input("trim run needs non-empty train and valid splits".to_string()));
    }
    let run_start = Instant::now();

    let calib0 = sample_calibration_for(valid, cfg)?;
    let plan = initial_freeze_plan(model, &calib0, cfg)?;

    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.lr);
    let mut report = TrimReport {
        config: cfg.clone(),
        model: *model.config(),
        status: TrimStatus::MaxEpochs,
        reference_accuracy: 0.0,
        initial_trainable: plan.trainable.clone(),
        initial_scores: plan.origin_scores.clone(),
        drops: Vec::new(),
        epochs: Vec::new(),
        epoch_scores: Vec::new(),
        final_memory_ratio: 1.0,
        final_per_token_latency_s: 0.0,
        final_live_units: model.live_units().len(),
        total_wall_secs: 0.0,
    };

    'epochs: for epoch in 1..=cfg.max_epochs {
        optimizer.set_lr(lr_at(cfg.lr, epoch, cfg.max_epochs));
        let (train_loss, wall_secs) =
            train_one_epoch(model, train, &mut optimizer, cfg.batch_size, cfg.seed, epoch)?;
        let val_accuracy = evaluate_accuracy(model, valid)?.accuracy_pct;
        if epoch == 1 {
            report.reference_accuracy = val_accuracy;
        }
        let mut record = EpochRecord {
            epoch,
            train_loss,
            val_accuracy,
            val_accuracy_after_drop: None,
            wall_secs,
            live_units: model.live_units().len(),
            memory_ratio: model.memory_ratio(),
        };

        let live = model.live_units().len();
        if live < cfg.drops_per_epoch {
            if epoch == 1 {
                // surfaces the oversized-delta precondition directly
                let scan = scan_scores(model, &calib0, &cfg.scoring())?;
                select_targets(&scan, &[], cfg.drops_per_epoch, SelectionMethod::Calibration)?;
            }
            report.epochs.push(record);
            report.status = TrimStatus::UnitsExhausted;
            break 'epochs;
        }

        // fresh calibration sample each epoch: run seed + epoch index
        let calib = sample_calibration(
            valid,
            cfg.calibration_size.min(valid.len()),
            cfg.seed.wrapping_add(epoch as u64),
        )?;
        let (scan, norm) = match cfg.method {
            SelectionMethod::Calibration => (scan_scores(model, &calib, &cfg.scoring())?, Vec::new()),
            SelectionMethod::ActivationNorm => (Vec::new(), norm_scores(model, &calib)?),
            SelectionMethod::Both => (
                scan_scores(model, &calib, &cfg.scoring())?,
                norm_scores(model, &calib)?,
            ),
        };
        let targets = select_targets(&scan, &norm, cfg.drops_per_epoch, cfg.method)?;
        let merged = merge_scores(&scan, &norm);
        report.epoch_scores.push(EpochScores { epoch, scores: merged.clone() });

        let score_of = |u: UnitId| -> (Option<f64>, Option<f64>) {
            merged
                .iter()
                .find(|s| s.unit == u)
                .map(|s| (s.s_scan, s.s_norm))
                .unwrap_or((None, None))
        };

        match cfg.stopping {
            StoppingCriterion::Accuracy { floor_fraction } => {
                let mut tentative = model.mask().clone();
                for &u in &targets {
                    tentative.kill(u)?;
                }
                let after = evaluate_accuracy_masked(model, valid, &tentative)?.accuracy_pct;
                if after < floor_fraction * report.reference_accuracy {
                    // revert: the tentative mask never touched the model
                    report.epochs.push(record);
                    report.status = TrimStatus::AccuracyFloor;
                    break 'epochs;
                }
                for &u in &targets {
                    let (s_scan, s_norm) = score_of(u);
                    optimizer.forget(model.unit_slots(u));
                    model.drop_unit(u)?;
                    report.drops.push(DropRecord { epoch, unit: u, s_scan, s_norm });
                }
                record.val_accuracy_after_drop = Some(after);
                record.live_units = model.live_units().len();
                record.memory_ratio = model.memory_ratio();
                report.epochs.push(record);
            }
            StoppingCriterion::Efficiency { memory_ratio, per_token_latency_s } => {
                for &u in &targets {
                    let (s_scan, s_norm) = score_of(u);
                    optimizer.forget(model.unit_slots(u));
                    model.drop_unit(u)?;
                    report.drops.push(DropRecord { epoch, unit: u, s_scan, s_norm });
                }
                let after = evaluate_accuracy(model, valid)?.accuracy_pct;
                record.val_accuracy_after_drop = Some(after);
                record.live_units = model.live_units().len();
                record.memory_ratio = model.memory_ratio();
                report.epochs.push(record);
                let mem_ok = memory_ratio.map_or(true, |m| model.memory_ratio() <= m);
                let lat_ok = per_token_latency_s
                    .map_or(Ok(true), |l| Ok::<bool, Error>(per_token_latency(model)? <= l))?;
                if mem_ok && lat_ok {
                    report.status = TrimStatus::EfficiencyTarget;
                    break 'epochs;
                }
            }
        }
    }

    report.final_memory_ratio = model.memory_ratio();
    report.final_live_units = model.live_units().len();
    report.final_per_token_latency_s = per_token_latency(model)?;
    report.total_wall_secs = run_start.elapsed().as_secs_f64();
    debug_assert_eq!(
        {
            let mut d: Vec<UnitId> = report.drops.iter().map(|d| d.unit).collect();
            d.sort();
            d
        },
        {
            let mut m = model.mask().dead_units();
            m.sort();
            m
        },
        "drop log must match the final mask"
    );
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleStrategy {
    Random,
    Top,
    Bottom,
}

impl std::str::FromStr for RuleStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(RuleStrategy::Random),
            "top" => Ok(RuleStrategy::Top),
            "bottom" => Ok(RuleStrategy::Bottom),
            other => Err(Error::Config(format!("unknown rule strategy {other}"))),
        }
    }
}

/// One-shot rule-based masking: drops floor(fraction * N) units up front.
/// `top` drops the units closest to the output, `bottom` closest to the
/// input, `random` uniformly without replacement. The caller fine-tunes
/// afterwards without further drops.
pub fn rule_based_mask<S: Scalar>(
    model: &mut TrimModel<S>,
    strategy: RuleStrategy,
    fraction: f64,
    seed: u64,
) -> Result<Vec<UnitId>> {
    use rand::Rng;
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("fraction must be in (0, 1), got {fraction}")));
    }
    let k = (fraction * model.unit_count() as f64).floor() as usize;
    let mut live = model.live_units();
    if k > live.len() {
        return Err(Error::Size(format!(
            "cannot drop {k} units, only {} are live",
            live.len()
        )));
    }
    let chosen: Vec<UnitId> = match strategy {
        RuleStrategy::Top => {
            live.sort_by(|a, b| b.cmp(a));
            live.into_iter().take(k).collect()
        }
        RuleStrategy::Bottom => {
            live.sort();
            live.into_iter().take(k).collect()
        }
        RuleStrategy::Random => {
            let mut rng = crate::rng::substream(seed, "rule-mask");
            for i in 0..k {
                let j = rng.gen_range(i..live.len());
                live.swap(i, j);
            }
            live.truncate(k);
            live
        }
    };
    for &u in &chosen {
        model.drop_unit(u)?;
    }
    Ok(chosen)
}

/// Negative control for progressivity: scores once and drops the k
/// lowest-importance units simultaneously.
pub fn one_shot_drop<S: Scalar>(
    model: &mut TrimModel<S>,
    calib: &[Sample],
    k: usize,
    method: SelectionMethod,
    cfg: &ScoringConfig,
) -> Result<Vec<UnitId>> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let (scan, norm) = match method {
        SelectionMethod::Calibration => (scan_scores(model, calib, cfg)?, Vec::new()),
        SelectionMethod::ActivationNorm => (Vec::new(), norm_scores(model, calib)?),
        SelectionMethod::Both => (scan_scores(model, calib, cfg)?, norm_scores(model, calib)?),
    };
    let targets = select_targets(&scan, &norm, k, method)?;
    for &u in &targets {
        model.drop_unit(u)?;
    }
    Ok(targets)
}
