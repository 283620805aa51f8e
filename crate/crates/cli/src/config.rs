//! Run configuration: a TOML file whose fields the command-line flags
//! mirror. Every command writes the fully-resolved config next to its
//! outputs so a run is reproducible from that file alone.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use layertrim_core::error::{Error, Result};
use layertrim_core::model::ModelConfig;
use layertrim_core::scoring::SelectionMethod;
use layertrim_core::tasks::{
    gen_domain_dataset, load_mcq_jsonl, mix_datasets, standard_domains, Dataset,
};
use layertrim_core::tensor::optim::OptimKind;
use layertrim_core::trimmer::{StoppingCriterion, TrimConfig};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub model: ModelSection,
    pub task: TaskSection,
    pub trim: TrimSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            out_dir: PathBuf::from("runs/out"),
            model: ModelSection::default(),
            task: TaskSection::default(),
            trim: TrimSection::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ffn: usize,
    pub n_blocks: usize,
    pub max_seq_len: usize,
    /// Defaults to the run seed when absent.
    pub seed: Option<u64>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            vocab_size: 64,
            d_model: 128,
            n_heads: 4,
            d_ffn: 256,
            n_blocks: 8,
            max_seq_len: 16,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskSection {
    /// "builtin" or "jsonl".
    pub source: String,
    /// builtin: domain-a | domain-b | domain-c | mixture.
    pub domain: String,
    /// jsonl: path to the multiple-choice file.
    pub path: Option<PathBuf>,
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
}

impl Default for TaskSection {
    fn default() -> Self {
        TaskSection {
            source: "builtin".to_string(),
            domain: "domain-a".to_string(),
            path: None,
            n_train: 512,
            n_valid: 192,
            n_test: 192,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TrimSection {
    pub method: SelectionMethod,
    pub sparse_ratio: f64,
    pub drops_per_epoch: usize,
    pub delta: f64,
    pub max_epochs: usize,
    pub lr: f64,
    pub optimizer: OptimKind,
    pub batch_size: usize,
    pub calibration_size: usize,
    pub stopping: StoppingCriterion,
}

impl Default for TrimSection {
    fn default() -> Self {
        let d = TrimConfig::default();
        TrimSection {
            method: d.method,
            sparse_ratio: d.sparse_ratio,
            drops_per_epoch: d.drops_per_epoch,
            delta: d.delta,
            max_epochs: d.max_epochs,
            lr: d.lr,
            optimizer: d.optimizer,
            batch_size: d.batch_size,
            calibration_size: 96,
            stopping: d.stopping,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            vocab_size: self.model.vocab_size,
            d_model: self.model.d_model,
            n_heads: self.model.n_heads,
            d_ffn: self.model.d_ffn,
            n_blocks: self.model.n_blocks,
            max_seq_len: self.model.max_seq_len,
            seed: self.model.seed.unwrap_or(self.seed),
        }
    }

    pub fn trim_config(&self) -> TrimConfig {
        TrimConfig {
            method: self.trim.method,
            sparse_ratio: self.trim.sparse_ratio,
            drops_per_epoch: self.trim.drops_per_epoch,
            delta: self.trim.delta,
            stopping: self.trim.stopping,
            max_epochs: self.trim.max_epochs,
            lr: self.trim.lr,
            optimizer: self.trim.optimizer,
            batch_size: self.trim.batch_size,
            calibration_size: self.trim.calibration_size,
            seed: self.seed,
        }
    }

    /// Builds the configured dataset (deterministic in the run seed).
    pub fn dataset(&self) -> Result<Dataset> {
        match self.task.source.as_str() {
            "builtin" => {
                let domains = standard_domains(self.model.vocab_size, self.seed)?;
                let gen = |spec| {
                    gen_domain_dataset(
                        spec,
                        self.model.vocab_size,
                        self.task.n_train,
                        self.task.n_valid,
                        self.task.n_test,
                    )
                };
                match self.task.domain.as_str() {
                    "domain-a" => gen(&domains[0]),
                    "domain-b" => gen(&domains[1]),
                    "domain-c" => gen(&domains[2]),
                    "mixture" => {
                        let parts: Vec<Dataset> =
                            domains.iter().map(gen).collect::<Result<_>>()?;
                        Ok(mix_datasets(&parts, self.seed))
                    }
                    other => Err(Error::Config(format!(
                        "unknown builtin domain {other} (domain-a, domain-b, domain-c, mixture)"
                    ))),
                }
            }
            "jsonl" => {
                let path = self.task.path.as_ref().ok_or_else(|| {
                    Error::Config("task.source = jsonl needs task.path".to_string())
                })?;
                load_mcq_jsonl(path, self.model.vocab_size, self.model.max_seq_len)
            }
            other => Err(Error::Config(format!("unknown task source {other}"))),
        }
    }

    /// Writes the fully-resolved config next to the run outputs.
    pub fn write_resolved(&self, out_dir: &Path) -> Result<()> {
        let mut resolved = self.clone();
        resolved.model.seed = Some(self.model_config().seed);
        resolved.out_dir = out_dir.to_path_buf();
        let text = toml::to_string_pretty(&resolved)
            .map_err(|e| Error::Config(format!("config serialization: {e}")))?;
        std::fs::create_dir_all(out_dir)?;
        std::fs::write(out_dir.join("config.toml"), text)?;
        Ok(())
    }
}
