//! Helpers shared by the criterion benches: deterministic models at fixed
//! compression levels.

use layertrim_core::model::{ModelConfig, TrimModel};
use layertrim_core::trimmer::{rule_based_mask, RuleStrategy};

pub fn bench_config() -> ModelConfig {
    ModelConfig {
        vocab_size: 64,
        d_model: 128,
        n_heads: 4,
        d_ffn: 256,
        n_blocks: 8,
        max_seq_len: 64,
        seed: 7,
    }
}

/// Fresh model with `fraction` of its units dropped (0.0 = full depth).
/// Uses the deterministic top-of-stack rule so runs are comparable.
pub fn model_at_compression(fraction: f64) -> TrimModel<f32> {
    let mut model = TrimModel::build(bench_config()).expect("valid bench config");
    if fraction > 0.0 {
        rule_based_mask(&mut model, RuleStrategy::Top, fraction, 7).expect("valid fraction");
    }
    model
}
