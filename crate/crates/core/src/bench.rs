//! Deployment-time measurement: generation throughput, parameter-memory
//! ratio, per-token latency, and Pareto-frontier export.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TrimModel;
use crate::scalar::Scalar;
use crate::tasks::grammar;

/// Timed greedy-generation result. Throughput is generated tokens per wall
/// second, median of the repetitions after one untimed warmup.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BenchResult {
    pub seq_len: usize,
    pub batch_size: usize,
    pub reps: usize,
    pub live_units: usize,
    pub memory_ratio: f64,
    pub tokens_per_second: f64,
    pub tokens_per_second_min: f64,
    pub tokens_per_second_max: f64,
    pub per_token_latency_s: f64,
    pub generated_tokens: usize,
}

pub const BENCH_CSV_HEADER: &str = "seq_len,batch_size,reps,live_units,memory_ratio,\
tokens_per_s_median,tokens_per_s_min,tokens_per_s_max,per_token_latency_s,generated_tokens";

impl BenchResult {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{:.3},{:.3},{:.3},{:.9},{}",
            self.seq_len,
            self.batch_size,
            self.reps,
            self.live_units,
            self.memory_ratio,
            self.tokens_per_second,
            self.tokens_per_second_min,
            self.tokens_per_second_max,
            self.per_token_latency_s,
            self.generated_tokens
        )
    }
}

/// Greedy generation up to `seq_len`, timed on a monotone clock, one warmup
/// run excluded. `batch_size` sequences are generated per repetition.
pub fn measure_throughput<S: Scalar>(
    model: &TrimModel<S>,
    seq_len: usize,
    batch_size: usize,
    reps: usize,
) -> Result<BenchResult> {
    if seq_len < 2 || seq_len > model.config().max_seq_len {
        return Err(Error::Input(format!(
            "bench seq_len {seq_len} outside 2..={}",
            model.config().max_seq_len
        )));
    }
    if batch_size == 0 || reps == 0 {
        return Err(Error::Input("batch_size and reps must be >= 1".to_string()));
    }
    let prompt = [grammar::BOS.min(model.config().vocab_size as u32 - 1)];
    let n_new = seq_len - prompt.len();

    // warmup, untimed
    model.generate(&prompt, n_new)?;

    let mut rates = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t0 = Instant::now();
        for _ in 0..batch_size {
            model.generate(&prompt, n_new)?;
        }
        let secs = t0.elapsed().as_secs_f64().max(1e-12);
        rates.push((batch_size * n_new) as f64 / secs);
    }
    rates.sort_by(|a, b| a.partial_cmp(b).expect("finite rates"));
    let median = if rates.len() % 2 == 1 {
        rates[rates.len() / 2]
    } else {
        0.5 * (rates[rates.len() / 2 - 1] + rates[rates.len() / 2])
    };
    Ok(BenchResult {
        seq_len,
        batch_size,
        reps,
        live_units: model.live_units().len(),
        memory_ratio: model.memory_ratio(),
        tokens_per_second: median,
        tokens_per_second_min: rates[0],
        tokens_per_second_max: rates[rates.len() - 1],
        per_token_latency_s: 1.0 / median,
        generated_tokens: reps * batch_size * n_new,
    })
}

/// Live parameter count over the initial parameter count.
pub fn memory_ratio<S: Scalar>(model: &TrimModel<S>) -> f64 {
    model.memory_ratio()
}

/// Quick per-token latency estimate: one short timed greedy generation.
pub fn per_token_latency<S: Scalar>(model: &TrimModel<S>) -> Result<f64> {
    let max = model.config().max_seq_len;
    let n_new = (max - 1).min(32).max(1);
    let prompt = [0u32];
    model.generate(&prompt, n_new)?; // warmup
    let t0 = Instant::now();
    model.generate(&prompt, n_new)?;
    Ok(t0.elapsed().as_secs_f64() / n_new as f64)
}

/// One operating point of the memory/accuracy/throughput trade-off sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub memory_ratio: f64,
    pub accuracy_pct: f64,
    pub tokens_per_s: f64,
    pub live_units: usize,
    pub config_id: String,
}

impl ParetoPoint {
    /// Dominated: some other point is no worse on every axis and strictly
    /// better on at least one (lower memory, higher accuracy, higher
    /// throughput).
    fn dominated_by(&self, other: &ParetoPoint) -> bool {
        let no_worse = other.memory_ratio <= self.memory_ratio
            && other.accuracy_pct >= self.accuracy_pct
            && other.tokens_per_s >= self.tokens_per_s;
        let strictly_better = other.memory_ratio < self.memory_ratio
            || other.accuracy_pct > self.accuracy_pct
            || other.tokens_per_s > self.tokens_per_s;
        no_worse && strictly_better
    }
}

pub const PARETO_CSV_HEADER: &str =
    "memory_ratio,accuracy_pct,tokens_per_s,live_units,config_id,dominated";

/// Flags each point's dominated status; points come back sorted by memory
/// ratio ascending.
pub fn pareto_flags(points: &[ParetoPoint]) -> Vec<(ParetoPoint, bool)> {
    let mut out: Vec<(ParetoPoint, bool)> = points
        .iter()
        .map(|p| {
            let dominated = points.iter().any(|q| p.dominated_by(q));
            (p.clone(), dominated)
        })
        .collect();
    out.sort_by(|a, b| a.0.memory_ratio.partial_cmp(&b.0.memory_ratio).expect("finite"));
    out
}

/// CSV export of the sweep, non-dominated subset marked.
pub fn export_pareto(points: &[ParetoPoint], path: &Path) -> Result<()> {
    if points.is_empty() {
        return Err(Error::Input("no operating points to export".to_string()));
    }
    let mut text = String::from(PARETO_CSV_HEADER);
    text.push('\n');
    for (p, dominated) in pareto_flags(points) {
        text.push_str(&format!(
            "{:.6},{:.3},{:.3},{},{},{}\n",
            p.memory_ratio, p.accuracy_pct, p.tokens_per_s, p.live_units, p.config_id, dominated
        ));
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, TrimModel, UnitId};

    fn bench_model() -> TrimModel<f32> {
        TrimModel::build(ModelConfig {
            vocab_size: 32,
            d_model: 16,
            n_heads: 2,
            d_ffn: 24,
            n_blocks: 2,
            max_seq_len: 24,
            seed: 9,
        })
        .unwrap()
    }

    #[test]
    fn single_rep_dispersion_collapses_to_the_single_value() {
        let m = bench_model();
        let r = measure_throughput(&m, 12, 1, 1).unwrap();
        assert_eq!(r.tokens_per_second, r.tokens_per_second_min);
        assert_eq!(r.tokens_per_second, r.tokens_per_second_max);
        assert_eq!(r.generated_tokens, 11);
        assert!(r.tokens_per_second > 0.0);
    }

    #[test]
    fn seq_len_over_model_max_is_an_input_error() {
        let m = bench_model();
        assert!(matches!(measure_throughput(&m, 25, 1, 1), Err(Error::Input(_))));
    }

    #[test]
    fn memory_ratio_tracks_drops() {
        let mut m = bench_model();
        assert_eq!(memory_ratio(&m), 1.0);
        let before = m.param_count();
        let released = m.drop_unit(UnitId::mlp(0)).unwrap();
        let expect = (before - released) as f64 / m.initial_param_count() as f64;
        assert!((memory_ratio(&m) - expect).abs() < 1e-12);
        assert!(memory_ratio(&m) < 1.0);
    }

    #[test]
    fn worked_drop_example_memory_ratio() {
        let cfg = ModelConfig {
            vocab_size: 64,
            d_model: 128,
            n_heads: 8,
            d_ffn: 512,
            n_blocks: 2,
            max_seq_len: 8,
            seed: 7,
        };
        let mut m = TrimModel::<f32>::build(cfg).unwrap();
        let initial = m.initial_param_count();
        m.drop_unit(UnitId::mlp(0)).unwrap();
        let expect = 1.0 - 131_968.0 / initial as f64;
        assert!((memory_ratio(&m) - expect).abs() < 1e-12);
    }

    #[test]
    fn pareto_domination_flags() {
        let a = ParetoPoint {
            memory_ratio: 0.5,
            accuracy_pct: 90.0,
            tokens_per_s: 100.0,
            live_units: 8,
            config_id: "a".into(),
        };
        // b is worse on every axis
        let b = ParetoPoint {
            memory_ratio: 0.6,
            accuracy_pct: 85.0,
            tokens_per_s: 80.0,
            live_units: 10,
            config_id: "b".into(),
        };
        // c trades memory for accuracy; not dominated
        let c = ParetoPoint {
            memory_ratio: 0.4,
            accuracy_pct: 80.0,
            tokens_per_s: 120.0,
            live_units: 6,
            config_id: "c".into(),
        };
        let flags = pareto_flags(&[a.clone(), b, c]);
        assert_eq!(flags.len(), 3);
        // sorted by memory ratio ascending
        assert_eq!(flags[0].0.config_id, "c");
        assert!(!flags[0].1);
        assert_eq!(flags[1].0.config_id, "a");
        assert!(!flags[1].1);
        assert_eq!(flags[2].0.config_id, "b");
        assert!(flags[2].1, "strictly worse point must be flagged");
    }

    #[test]
    fn single_point_is_trivially_non_dominated() {
        let p = ParetoPoint {
            memory_ratio: 1.0,
            accuracy_pct: 50.0,
            tokens_per_s: 10.0,
            live_units: 4,
            config_id: "solo".into(),
        };
        let flags = pareto_flags(&[p]);
        assert!(!flags[0].1);
    }

    #[test]
    fn export_pareto_writes_sorted_rows() {
        let dir = std::env::temp_dir().join("layertrim-bench-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("pareto.csv");
        let points: Vec<ParetoPoint> = [(1.0, 95.0, 50.0), (0.5, 92.0, 95.0), (0.7, 93.0, 70.0)]
            .iter()
            .enumerate()
            .map(|(i, &(m, a, t))| ParetoPoint {
                memory_ratio: m,
                accuracy_pct: a,
                tokens_per_s: t,
                live_units: i,
                config_id: format!("p{i}"),
            })
            .collect();
        export_pareto(&points, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], PARETO_CSV_HEADER);
        assert_eq!(lines.len(), 4);
        let first: f64 = lines[1].split(',').next().unwrap().parse().unwrap();
        let last: f64 = lines[3].split(',').next().unwrap().parse().unwrap();
        assert!(first < last);
        assert!(matches!(export_pareto(&[], &path), Err(Error::Input(_))));
    }
}
