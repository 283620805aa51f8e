// scratch calibration for the desk-scale experiment; not part of the deliverable
use std::time::Instant;

use layertrim_core::model::{ModelConfig, TrimModel};
use layertrim_core::scoring::SelectionMethod;
use layertrim_core::tasks::{evaluate_accuracy, gen_domain_dataset, mix_datasets, standard_domains};
use layertrim_core::tensor::optim::OptimKind;
use layertrim_core::trimmer::{
    rule_based_mask, run_train, run_trim, RuleStrategy, StoppingCriterion, TrimConfig,
};

fn main() {
    let seed = 1u64;
    let t_all = Instant::now();
    let cfg = ModelConfig {
        vocab_size: 64,
        d_model: 128,
        n_heads: 4,
        d_ffn: 256,
        n_blocks: 8,
        max_seq_len: 16,
        seed,
    };
    let domains = standard_domains(cfg.vocab_size, seed).unwrap();
    let ds: Vec<_> = domains
        .iter()
        .map(|d| gen_domain_dataset(d, cfg.vocab_size, 512, 192, 192).unwrap())
        .collect();
    let mixture = mix_datasets(&ds, seed);
    println!("mixture train {}", mixture.train.len());

    let mut model = TrimModel::<f32>::build(cfg).unwrap();

    let pre_cfg = TrimConfig {
        sparse_ratio: 1.0,
        lr: 2e-3,
        optimizer: OptimKind::AdamW,
        batch_size: 16,
        calibration_size: 96,
        seed,
        ..TrimConfig::default()
    };
    let t0 = Instant::now();
    let pre_epochs = 14;
    let recs = run_train(&mut model, &mixture.train, &mixture.valid, &pre_cfg, pre_epochs).unwrap();
    println!(
        "pretrain {:.0}s; last-epoch mix-val {:.1}",
        t0.elapsed().as_secs_f64(),
        recs.last().unwrap().val_accuracy
    );
    for (i, d) in ds.iter().enumerate() {
        let acc = evaluate_accuracy(&model, &d.test).unwrap();
        println!("mixture model on domain {i} test: {:.1}", acc.accuracy_pct);
    }

    // scarce fine-tuning phase: specialization maintains, rebuilding starves
    let ft_train = &ds[0].train[..128];
    let ft_cfg = TrimConfig {
        method: SelectionMethod::Both,
        sparse_ratio: 0.25,
        drops_per_epoch: 1,
        delta: 0.01,
        stopping: StoppingCriterion::Accuracy { floor_fraction: 0.90 },
        max_epochs: 12,
        lr: 5e-4,
        optimizer: OptimKind::AdamW,
        batch_size: 16,
        calibration_size: 96,
        seed,
    };
    let mut trim_model = model.clone();
    let t0 = Instant::now();
    let report = run_trim(&mut trim_model, ft_train, &ds[0].valid, &ft_cfg).unwrap();
    println!(
        "trim: {:.0}s, status {:?}, drops {}, final mem {:.3}",
        t0.elapsed().as_secs_f64(),
        report.status,
        report.drops.len(),
        report.final_memory_ratio
    );
    for e in &report.epochs {
        println!(
            "  epoch {} loss {:.4} val {:.1} after-drop {:?} live {}",
            e.epoch, e.train_loss, e.val_accuracy, e.val_accuracy_after_drop, e.live_units
        );
    }
    let trim_acc_a = evaluate_accuracy(&trim_model, &ds[0].test).unwrap().accuracy_pct;
    let trim_acc_b = evaluate_accuracy(&trim_model, &ds[1].test).unwrap().accuracy_pct;
    let mix_acc_b = evaluate_accuracy(&model, &ds[1].test).unwrap().accuracy_pct;
    println!("trim A-test {trim_acc_a:.1}; trim B-test {trim_acc_b:.1}; mixture B-test {mix_acc_b:.1}");

    let budget = report.epochs.len();
    let ft_plain = TrimConfig { sparse_ratio: 1.0, ..ft_cfg.clone() };

    let mut fullft = model.clone();
    run_train(&mut fullft, ft_train, &ds[0].valid, &ft_plain, budget).unwrap();
    let fullft_acc = evaluate_accuracy(&fullft, &ds[0].test).unwrap().accuracy_pct;
    println!("full-FT on A ({budget} epochs): {fullft_acc:.1}");

    for strat in [RuleStrategy::Random, RuleStrategy::Top, RuleStrategy::Bottom] {
        let mut b = model.clone();
        rule_based_mask(&mut b, strat, 0.5, seed).unwrap();
        let before = evaluate_accuracy(&b, &ds[0].test).unwrap().accuracy_pct;
        run_train(&mut b, ft_train, &ds[0].valid, &ft_plain, budget).unwrap();
        let acc = evaluate_accuracy(&b, &ds[0].test).unwrap().accuracy_pct;
        println!("baseline {strat:?}: A-test {acc:.1} (pre-retrain {before:.1})");
    }

    println!("TOTAL {:.0}s", t_all.elapsed().as_secs_f64());
}
