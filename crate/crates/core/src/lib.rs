//! Fine-tune a decoder-only transformer while progressively dropping its
//! least-important attention/MLP sub-layers, so the specialized model gets
//! real memory and latency savings at deployment time.
//!
//! The crate is organized around the pipeline:
//!
//! - [`tensor`]: dense tensors with reverse-mode autodiff, small-matrix SVD,
//!   optimizers, and a finite-difference gradient checker.
//! - [`model`]: the decoder whose MHA/MLP sub-layers are independently
//!   droppable units, with cache-backed greedy generation.
//! - [`scoring`]: sensitivity (calibration-scan) and activation-norm
//!   importance scores plus the combined selector.
//! - [`trimmer`]: the fine-tune/score/drop loop, sparse-update freezing, and
//!   rule-based baselines.
//! - [`tasks`]: synthetic multi-domain task generators and a multiple-choice
//!   JSONL loader.
//! - [`costmodel`]: closed-form training-time estimates.
//! - [`bench`]: throughput/memory measurement and Pareto export.
//! - [`checkpoint`]: bit-exact model persistence.

pub mod bench;
pub mod checkpoint;
pub mod costmodel;
pub mod error;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod scoring;
pub mod tasks;
pub mod tensor;
pub mod trimmer;

pub use bench::{BenchResult, ParetoPoint};
pub use error::{Error, Result};
pub use model::{ModelConfig, TrimModel, UnitId, UnitKind, UnitMask};
pub use scalar::Scalar;
pub use scoring::{ImportanceScore, ScoringConfig, SelectionMethod};
pub use tasks::{Dataset, DomainSpec, Sample, TaskKind};
pub use tensor::{Tape, Tensor};
pub use trimmer::{FreezePlan, StoppingCriterion, TrimConfig, TrimReport, TrimStatus};
