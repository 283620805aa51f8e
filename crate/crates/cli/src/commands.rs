//! Command implementations. Each writes its resolved config plus the
//! artifacts named in its help text into the run's output directory.

use std::fs;
use std::path::{Path, PathBuf};

use layertrim_core::bench::{export_pareto, measure_throughput, BenchResult, ParetoPoint,
                            BENCH_CSV_HEADER};
use layertrim_core::checkpoint;
use layertrim_core::costmodel::{self, CostParams};
use layertrim_core::error::{Error, Result};
use layertrim_core::scoring::{score_csv_row, SCORE_CSV_HEADER};
use layertrim_core::tasks::{evaluate_accuracy, Dataset};
use layertrim_core::trimmer::{
    initial_freeze_plan, rule_based_mask, run_train, run_trim, sample_calibration_for,
    EpochRecord, RuleStrategy, TrimReport,
};
use layertrim_core::TrimModel;

use crate::config::RunConfig;

fn load_or_build(cfg: &RunConfig, init_from: &Option<PathBuf>) -> Result<TrimModel<f32>> {
    match init_from {
        Some(path) => checkpoint::load(path),
        None => TrimModel::build(cfg.model_config()),
    }
}

fn write_metrics_csv(path: &Path, records: &[EpochRecord], trainable_units: usize) -> Result<()> {
    let mut text =
        String::from("epoch,train_loss,val_accuracy,wall_secs,live_units,memory_ratio,trainable_units\n");
    for r in records {
        text.push_str(&format!(
            "{},{:.6},{:.3},{:.3},{},{:.6},{}\n",
            r.epoch, r.train_loss, r.val_accuracy, r.wall_secs, r.live_units, r.memory_ratio,
            trainable_units
        ));
    }
    fs::write(path, text)?;
    Ok(())
}

fn write_scores_csv(path: &Path, report: &TrimReport) -> Result<()> {
    let mut text = String::from(SCORE_CSV_HEADER);
    text.push('\n');
    for s in &report.initial_scores {
        text.push_str(&score_csv_row(0, s));
        text.push('\n');
    }
    for es in &report.epoch_scores {
        for s in &es.scores {
            text.push_str(&score_csv_row(es.epoch, s));
            text.push('\n');
        }
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn cmd_train(
    cfg: &RunConfig,
    epochs: usize,
    sparse: Option<f64>,
    init_from: &Option<PathBuf>,
) -> Result<()> {
    let out = cfg.out_dir.clone();
    cfg.write_resolved(&out)?;
    let data = cfg.dataset()?;
    let mut model = load_or_build(cfg, init_from)?;
    let mut trim_cfg = cfg.trim_config();
    if let Some(r) = sparse {
        trim_cfg.sparse_ratio = r;
    }

    let mut trainable_units = model.unit_count();
    if sparse.is_some() {
        let calib = sample_calibration_for(&data.valid, &trim_cfg)?;
        let plan = initial_freeze_plan(&mut model, &calib, &trim_cfg)?;
        trainable_units = plan.trainable.len();
        println!("sparse update: {} of {} units trainable", trainable_units, model.unit_count());
    }

    let records = run_train(&mut model, &data.train, &data.valid, &trim_cfg, epochs)?;
    for r in &records {
        println!(
            "epoch {} loss {:.4} val {:.2}% ({:.1}s)",
            r.epoch, r.train_loss, r.val_accuracy, r.wall_secs
        );
    }
    write_metrics_csv(&out.join("metrics.csv"), &records, trainable_units)?;
    checkpoint::save(&model, &out.join("checkpoint.bin"))?;
    let test_acc = evaluate_accuracy(&model, &data.test)?;
    println!(
        "saved {} (test accuracy {:.2}% over {} samples)",
        out.join("checkpoint.bin").display(),
        test_acc.accuracy_pct,
        test_acc.samples
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_trim(
    cfg: &RunConfig,
    baseline: Option<RuleStrategy>,
    fraction: f64,
    init_from: &Option<PathBuf>,
) -> Result<()> {
    let out = cfg.out_dir.clone();
    cfg.write_resolved(&out)?;
    let data = cfg.dataset()?;
    let mut model = load_or_build(cfg, init_from)?;
    let trim_cfg = cfg.trim_config();

    match baseline {
        Some(strategy) => {
            let dropped = rule_based_mask(&mut model, strategy, fraction, cfg.seed)?;
            println!(
                "rule-based mask ({strategy:?}, fraction {fraction}): dropped {} units",
                dropped.len()
            );
            let records =
                run_train(&mut model, &data.train, &data.valid, &trim_cfg, trim_cfg.max_epochs)?;
            write_metrics_csv(&out.join("metrics.csv"), &records, model.unit_count())?;
        }
        None => {
            let report = run_trim(&mut model, &data.train, &data.valid, &trim_cfg)?;
            println!(
                "status {:?}: {} drops, memory ratio {:.3}, reference accuracy {:.2}%",
                report.status,
                report.drops.len(),
                report.final_memory_ratio,
                report.reference_accuracy
            );
            for d in &report.drops {
                println!("  epoch {:>2}: dropped {}", d.epoch, d.unit);
            }
            fs::write(out.join("report.json"), report.to_json())?;
            write_scores_csv(&out.join("scores.csv"), &report)?;
        }
    }
    checkpoint::save(&model, &out.join("checkpoint.bin"))?;
    let test_acc = evaluate_accuracy(&model, &data.test)?;
    println!(
        "saved {} (test accuracy {:.2}%, {} live units)",
        out.join("checkpoint.bin").display(),
        test_acc.accuracy_pct,
        model.live_units().len()
    );
    Ok(())
}

pub fn cmd_eval(cfg: &RunConfig, ckpt: &Path, split: &str) -> Result<()> {
    let out = cfg.out_dir.clone();
    cfg.write_resolved(&out)?;
    let model = checkpoint::load(ckpt)?;
    let data = cfg.dataset()?;
    let samples = split_of(&data, split)?;
    let outcome = evaluate_accuracy(&model, samples)?;
    if outcome.is_empty_split() {
        eprintln!("warning: split {split} is empty");
    }
    let report = serde_json::json!({
        "checkpoint": ckpt.display().to_string(),
        "task": cfg.task,
        "split": split,
        "accuracy_pct": outcome.accuracy_pct,
        "samples": outcome.samples,
        "live_units": model.live_units().len(),
        "memory_ratio": model.memory_ratio(),
    });
    fs::write(out.join("eval.json"), serde_json::to_string_pretty(&report).expect("json"))?;
    println!(
        "accuracy {:.2}% on {} {split} samples ({} live units, memory ratio {:.3})",
        outcome.accuracy_pct,
        outcome.samples,
        model.live_units().len(),
        model.memory_ratio()
    );
    Ok(())
}

fn split_of<'a>(data: &'a Dataset, split: &str) -> Result<&'a [layertrim_core::Sample]> {
    match split {
        "train" => Ok(&data.train),
        "valid" => Ok(&data.valid),
        "test" => Ok(&data.test),
        other => Err(Error::Config(format!("unknown split {other} (train, valid, test)"))),
    }
}

pub fn cmd_bench(
    cfg: &RunConfig,
    ckpt: &Path,
    seq_len: Option<usize>,
    batch: usize,
    reps: usize,
) -> Result<()> {
    let out = cfg.out_dir.clone();
    cfg.write_resolved(&out)?;
    let model = checkpoint::load(ckpt)?;
    let seq_len = seq_len.unwrap_or(model.config().max_seq_len);
    let result = measure_throughput(&model, seq_len, batch, reps)?;
    let mut text = String::from(BENCH_CSV_HEADER);
    text.push('\n');
    text.push_str(&result.csv_row());
    text.push('\n');
    fs::write(out.join("bench.csv"), text)?;
    print_bench(&result);
    Ok(())
}

fn print_bench(r: &BenchResult) {
    println!(
        "throughput {:.1} tokens/s (min {:.1}, max {:.1}) over {} reps, \
         seq_len {}, batch {}, {} live units, memory ratio {:.3}",
        r.tokens_per_second,
        r.tokens_per_second_min,
        r.tokens_per_second_max,
        r.reps,
        r.seq_len,
        r.batch_size,
        r.live_units,
        r.memory_ratio
    );
}

pub fn cmd_costmodel(
    cfg: &RunConfig,
    c: f64,
    layers: usize,
    epochs: usize,
    sparse_factor: f64,
    max_drop: Option<usize>,
    report_path: &Option<PathBuf>,
) -> Result<()> {
    let out = cfg.out_dir.clone();
    cfg.write_resolved(&out)?;
    let params = CostParams {
        c,
        n_layers: layers,
        n_drop: 1,
        n_epochs: epochs,
        sparse_factor,
    };
    params.validate()?;
    let measured = match report_path {
        Some(p) => {
            let report = TrimReport::from_json(&fs::read_to_string(p)?)?;
            report.measured_drop_times()
        }
        None => Vec::new(),
    };
    let max_drop = max_drop.unwrap_or(layers);
    costmodel::write_cost_curves(&out.join("costmodel.csv"), &params, max_drop, &measured)?;
    println!(
        "wrote {} (N = {layers}, c = {c}, sparse factor {sparse_factor}, measured points: {})",
        out.join("costmodel.csv").display(),
        measured.len()
    );
    Ok(())
}

pub fn cmd_sweep(cfg: &RunConfig, ratios: &[f64], init_from: &Option<PathBuf>) -> Result<()> {
    let out = cfg.out_dir.clone();
    cfg.write_resolved(&out)?;
    let data = cfg.dataset()?;
    let mut points = Vec::new();
    for &ratio in ratios {
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(Error::Config(format!("sweep ratio {ratio} outside (0, 1]")));
        }
        let mut model = load_or_build(cfg, init_from)?;
        let mut trim_cfg = cfg.trim_config();
        let label = format!("mem{ratio:.2}");
        if (ratio - 1.0).abs() < f64::EPSILON {
            run_train(&mut model, &data.train, &data.valid, &trim_cfg, trim_cfg.max_epochs)?;
        } else {
            trim_cfg.stopping = layertrim_core::trimmer::StoppingCriterion::Efficiency {
                memory_ratio: Some(ratio),
                per_token_latency_s: None,
            };
            let report = run_trim(&mut model, &data.train, &data.valid, &trim_cfg)?;
            fs::write(out.join(format!("report-{label}.json")), report.to_json())?;
        }
        checkpoint::save(&model, &out.join(format!("checkpoint-{label}.bin")))?;
        let acc = evaluate_accuracy(&model, &data.test)?;
        let bench = measure_throughput(&model, model.config().max_seq_len, 1, 5)?;
        println!(
            "ratio {ratio:.2}: accuracy {:.2}%, {:.1} tokens/s, memory {:.3}",
            acc.accuracy_pct, bench.tokens_per_second, model.memory_ratio()
        );
        points.push(ParetoPoint {
            memory_ratio: model.memory_ratio(),
            accuracy_pct: acc.accuracy_pct,
            tokens_per_s: bench.tokens_per_second,
            live_units: model.live_units().len(),
            config_id: label,
        });
    }
    export_pareto(&points, &out.join("pareto.csv"))?;
    println!("wrote {}", out.join("pareto.csv").display());
    Ok(())
}
