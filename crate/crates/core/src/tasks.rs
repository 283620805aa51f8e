//! Synthetic multi-domain task generators and a generic multiple-choice
//! JSONL loader.
//!
//! Domains own pairwise-disjoint exclusive token ranges on top of a small
//! shared grammar vocabulary, which is what makes layer-wise specialization
//! observable at toy scale: knowledge about one domain cannot leak into
//! another through shared content tokens.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ScoredSequence, TrimModel, UnitMask};
use crate::rng::substream;
use crate::scalar::Scalar;

/// Shared grammar tokens, present in every domain's prompts.
pub mod grammar {
    pub const BOS: u32 = 0;
    pub const SEP: u32 = 1;
    pub const QUERY: u32 = 2;
    pub const ANSWER: u32 = 3;
    pub const PLUS: u32 = 4;
    pub const REVERSE: u32 = 5;
    /// Size of the reserved shared range.
    pub const SHARED_LEN: u32 = 8;
    /// Choice-index answer tokens for multiple-choice data sit right after
    /// the grammar range.
    pub const CHOICE_BASE: u32 = 8;
    pub const MAX_CHOICES: u32 = 8;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "task")]
pub enum TaskKind {
    /// Store `pairs` key/value pairs, recall the value of a queried key.
    KeyValueRecall { pairs: usize },
    /// Sum of `terms` digits modulo `modulus`.
    ModularAdd { terms: usize, modulus: u32 },
    /// Emit a span of symbols in reverse order.
    SequenceReversal { span: usize },
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskKind::KeyValueRecall { pairs } => write!(f, "key-value recall ({pairs} pairs)"),
            TaskKind::ModularAdd { terms, modulus } => {
                write!(f, "sum of {terms} digits mod {modulus}")
            }
            TaskKind::SequenceReversal { span } => write!(f, "reversal of {span} symbols"),
        }
    }
}

/// One knowledge domain: a task family over an exclusive token range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub domain_id: String,
    pub kind: TaskKind,
    /// First token of the domain-exclusive range.
    pub exclusive_start: u32,
    pub exclusive_len: u32,
    /// Shared grammar range is 0..shared_len.
    pub shared_len: u32,
    pub seed: u64,
}

impl DomainSpec {
    pub fn key_value(id: &str, start: u32, len: u32, pairs: usize, seed: u64) -> Self {
        DomainSpec {
            domain_id: id.to_string(),
            kind: TaskKind::KeyValueRecall { pairs },
            exclusive_start: start,
            exclusive_len: len,
            shared_len: grammar::SHARED_LEN,
            seed,
        }
    }

    pub fn modular_add(
        id: &str,
        start: u32,
        len: u32,
        terms: usize,
        modulus: u32,
        seed: u64,
    ) -> Self {
        DomainSpec {
            domain_id: id.to_string(),
            kind: TaskKind::ModularAdd { terms, modulus },
            exclusive_start: start,
            exclusive_len: len,
            shared_len: grammar::SHARED_LEN,
            seed,
        }
    }

    pub fn reversal(id: &str, start: u32, len: u32, span: usize, seed: u64) -> Self {
        DomainSpec {
            domain_id: id.to_string(),
            kind: TaskKind::SequenceReversal { span },
            exclusive_start: start,
            exclusive_len: len,
            shared_len: grammar::SHARED_LEN,
            seed,
        }
    }

    pub fn exclusive_end(&self) -> u32 {
        self.exclusive_start + self.exclusive_len
    }

    fn validate(&self, vocab_size: usize) -> Result<()> {
        if self.exclusive_start < self.shared_len {
            return Err(Error::Config(format!(
                "domain {}: exclusive range overlaps the shared grammar range",
                self.domain_id
            )));
        }
        if self.exclusive_end() as usize > vocab_size {
            return Err(Error::Config(format!(
                "domain {}: tokens up to {} overflow vocab {}",
                self.domain_id,
                self.exclusive_end(),
                vocab_size
            )));
        }
        match self.kind {
            TaskKind::KeyValueRecall { pairs } => {
                let keys = self.exclusive_len / 2;
                if pairs == 0 || keys < pairs as u32 || self.exclusive_len < 2 {
                    return Err(Error::Config(format!(
                        "domain {}: {} keys cannot hold {pairs} distinct pairs",
                        self.domain_id, keys
                    )));
                }
            }
            TaskKind::ModularAdd { terms, modulus } => {
                if terms == 0 || modulus == 0 || modulus > self.exclusive_len {
                    return Err(Error::Config(format!(
                        "domain {}: modulus {modulus} does not fit exclusive range {}",
                        self.domain_id, self.exclusive_len
                    )));
                }
            }
            TaskKind::SequenceReversal { span } => {
                if span == 0 || self.exclusive_len == 0 {
                    return Err(Error::Config(format!(
                        "domain {}: empty span or alphabet",
                        self.domain_id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Accuracy (percent) of uniform guessing over this domain's answers.
    pub fn chance_accuracy_pct(&self) -> f64 {
        match self.kind {
            TaskKind::KeyValueRecall { .. } => 100.0 / (self.exclusive_len / 2) as f64,
            TaskKind::ModularAdd { modulus, .. } => 100.0 / modulus as f64,
            TaskKind::SequenceReversal { span } => {
                100.0 / (self.exclusive_len as f64).powi(span as i32)
            }
        }
    }
}

/// Token sequence with its teacher-forced answer suffix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub tokens: Vec<u32>,
    /// Index of the first answer token.
    pub answer_start: usize,
}

impl Sample {
    pub fn new(prompt: Vec<u32>, answer: &[u32]) -> Self {
        let answer_start = prompt.len();
        let mut tokens = prompt;
        tokens.extend_from_slice(answer);
        Sample { tokens, answer_start }
    }

    pub fn prompt(&self) -> &[u32] {
        &self.tokens[..self.answer_start]
    }

    pub fn answer(&self) -> &[u32] {
        &self.tokens[self.answer_start..]
    }

    /// Loss mask covering exactly the answer positions.
    pub fn loss_mask(&self) -> Vec<bool> {
        (0..self.tokens.len()).map(|i| i >= self.answer_start).collect()
    }

    pub fn scored(&self) -> ScoredSequence<'_> {
        ScoredSequence { tokens: &self.tokens, answer_start: self.answer_start }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    Domain(DomainSpec),
    File { path: String, skipped_over_length: usize },
    Mixture(Vec<String>),
}

/// Train/valid/test splits, disjoint by construction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub valid: Vec<Sample>,
    pub test: Vec<Sample>,
    pub provenance: Provenance,
}

/// Deterministic dataset generation; every sample's answer is computable by
/// a trivial oracle from its prompt.
pub fn gen_domain_dataset(
    spec: &DomainSpec,
    vocab_size: usize,
    n_train: usize,
    n_valid: usize,
    n_test: usize,
) -> Result<Dataset> {
    spec.validate(vocab_size)?;
    if n_train == 0 || n_valid == 0 || n_test == 0 {
        return Err(Error::Config("split sizes must be positive".to_string()));
    }
    let total = n_train + n_valid + n_test;
    let mut rng = substream(spec.seed, "gen");
    let mut seen: HashSet<Vec<u32>> = HashSet::with_capacity(total);
    let mut samples: Vec<Sample> = Vec::with_capacity(total);
    let mut attempts: usize = 0;
    let max_attempts = total.saturating_mul(1000);
    while samples.len() < total {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::Config(format!(
                "domain {}: task space too small for {} disjoint samples",
                spec.domain_id, total
            )));
        }
        let s = draw_sample(spec, &mut rng);
        if seen.insert(s.tokens.clone()) {
            samples.push(s);
        }
    }
    let test = samples.split_off(n_train + n_valid);
    let valid = samples.split_off(n_train);
    Ok(Dataset { train: samples, valid, test, provenance: Provenance::Domain(spec.clone()) })
}

fn draw_sample(spec: &DomainSpec, rng: &mut rand_chacha::ChaCha12Rng) -> Sample {
    use grammar::*;
    match spec.kind {
        TaskKind::KeyValueRecall { pairs } => {
            let n_keys = spec.exclusive_len / 2;
            let key_base = spec.exclusive_start;
            let val_base = spec.exclusive_start + n_keys;
            let n_vals = spec.exclusive_len - n_keys;
            // keys come from disjoint strata, one per record slot, so keys
            // stay distinct and each key token types its slot
            let stratum = n_keys / pairs as u32;
            let mut prompt = vec![BOS];
            let mut stored: Vec<(u32, u32)> = Vec::with_capacity(pairs);
            for i in 0..pairs as u32 {
                let k = key_base + i * stratum + rng.gen_range(0..stratum);
                let v = val_base + rng.gen_range(0..n_vals);
                prompt.push(k);
                prompt.push(v);
                stored.push((k, v));
            }
            let (qk, qv) = stored[rng.gen_range(0..pairs)];
            prompt.extend_from_slice(&[QUERY, qk, ANSWER]);
            Sample::new(prompt, &[qv])
        }
        TaskKind::ModularAdd { terms, modulus } => {
            let base = spec.exclusive_start;
            let digits: Vec<u32> = (0..terms).map(|_| rng.gen_range(0..modulus)).collect();
            let mut prompt = vec![BOS];
            for (i, &d) in digits.iter().enumerate() {
                if i > 0 {
                    prompt.push(PLUS);
                }
                prompt.push(base + d);
            }
            prompt.push(ANSWER);
            let sum = digits.iter().fold(0u32, |acc, &d| (acc + d) % modulus);
            Sample::new(prompt, &[base + sum])
        }
        TaskKind::SequenceReversal { span } => {
            let base = spec.exclusive_start;
            let syms: Vec<u32> =
                (0..span).map(|_| base + rng.gen_range(0..spec.exclusive_len)).collect();
            let mut prompt = vec![BOS];
            prompt.extend_from_slice(&syms);
            prompt.extend_from_slice(&[REVERSE, ANSWER]);
            let answer: Vec<u32> = syms.into_iter().rev().collect();
            Sample::new(prompt, &answer)
        }
    }
}

/// Interleaves the splits of several datasets, deterministically shuffled.
pub fn mix_datasets(parts: &[Dataset], seed: u64) -> Dataset {
    let mut ids = Vec::new();
    let mut out = Dataset {
        train: Vec::new(),
        valid: Vec::new(),
        test: Vec::new(),
        provenance: Provenance::Mixture(Vec::new()),
    };
    for d in parts {
        out.train.extend(d.train.iter().cloned());
        out.valid.extend(d.valid.iter().cloned());
        out.test.extend(d.test.iter().cloned());
        ids.push(match &d.provenance {
            Provenance::Domain(s) => s.domain_id.clone(),
            Provenance::File { path, .. } => path.clone(),
            Provenance::Mixture(m) => m.join("+"),
        });
    }
    let mut rng = substream(seed, "mixture");
    for split in [&mut out.train, &mut out.valid, &mut out.test] {
        for i in (1..split.len()).rev() {
            let j = rng.gen_range(0..=i);
            split.swap(i, j);
        }
    }
    out.provenance = Provenance::Mixture(ids);
    out
}

/// Accuracy evaluation outcome; an empty split evaluates to zero and is
/// flagged rather than treated as an error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub accuracy_pct: f64,
    pub samples: usize,
}

impl EvalOutcome {
    pub fn is_empty_split(&self) -> bool {
        self.samples == 0
    }
}

/// Fraction of samples whose masked answer tokens are all argmax-correct
/// under teacher forcing, times 100. Deterministic, side-effect free.
pub fn evaluate_accuracy<S: Scalar>(model: &TrimModel<S>, data: &[Sample]) -> Result<EvalOutcome> {
    let mask = model.mask().clone();
    evaluate_accuracy_masked(model, data, &mask)
}

/// Same, under a temporary mask override (used by candidate-drop scanning).
pub fn evaluate_accuracy_masked<S: Scalar>(
    model: &TrimModel<S>,
    data: &[Sample],
    mask: &UnitMask,
) -> Result<EvalOutcome> {
    if data.is_empty() {
        return Ok(EvalOutcome { accuracy_pct: 0.0, samples: 0 });
    }
    let vocab = model.config().vocab_size;
    let mut correct = 0usize;
    for sample in data {
        let n = sample.tokens.len();
        if sample.answer_start == 0 || sample.answer_start >= n {
            return Err(Error::Input("sample without an answer suffix".to_string()));
        }
        let logits = model.forward_masked(&sample.tokens[..n - 1], mask)?;
        let ld = logits.data();
        let ok = (sample.answer_start..n).all(|p| {
            let row = &ld[(p - 1) * vocab..p * vocab];
            argmax_ix(row) == sample.tokens[p] as usize
        });
        if ok {
            correct += 1;
        }
    }
    Ok(EvalOutcome {
        accuracy_pct: 100.0 * correct as f64 / data.len() as f64,
        samples: data.len(),
    })
}

fn argmax_ix<S: Scalar>(row: &[S]) -> usize {
    let mut best = 0;
    let mut best_v = row[0];
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

/// Uniform sample without replacement from the validation split,
/// deterministic in the seed.
pub fn sample_calibration(data: &[Sample], k: usize, seed: u64) -> Result<Vec<Sample>> {
    if k == 0 {
        return Err(Error::Input("calibration set must be non-empty".to_string()));
    }
    if k > data.len() {
        return Err(Error::Size(format!(
            "calibration size {k} exceeds split size {}",
            data.len()
        )));
    }
    let mut rng = substream(seed, "calibration");
    let mut idx: Vec<usize> = (0..data.len()).collect();
    for i in 0..k {
        let j = rng.gen_range(i..idx.len());
        idx.swap(i, j);
    }
    Ok(idx[..k].iter().map(|&i| data[i].clone()).collect())
}

#[derive(Deserialize)]
struct McqLine {
    question: String,
    choices: Vec<String>,
    answer: usize,
}

/// Loads a multiple-choice JSONL file: one object per line with fields
/// `question` (string), `choices` (array of strings), `answer` (0-based
/// index). Text is tokenized through a byte-level fallback into the tail of
/// the model vocabulary; the answer becomes a choice-index token. Samples
/// whose encoding exceeds `max_seq_len` are skipped and counted.
pub fn load_mcq_jsonl(path: &Path, vocab_size: usize, max_seq_len: usize) -> Result<Dataset> {
    use grammar::*;
    let fallback_base = CHOICE_BASE + MAX_CHOICES;
    if (vocab_size as u32) < fallback_base + 2 {
        return Err(Error::Config(format!(
            "vocab {vocab_size} too small for multiple-choice encoding (needs > {fallback_base})"
        )));
    }
    let fallback_len = vocab_size as u32 - fallback_base;
    let text = fs::read_to_string(path)?;
    let mut all: Vec<Sample> = Vec::new();
    let mut skipped = 0usize;
    let mut saw_any_line = false;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        saw_any_line = true;
        let row: McqLine = serde_json::from_str(line).map_err(|e| Error::Data {
            line: Some(line_no),
            message: e.to_string(),
        })?;
        if row.choices.is_empty() || row.choices.len() > MAX_CHOICES as usize {
            return Err(Error::Data {
                line: Some(line_no),
                message: format!("needs 1..={} choices, got {}", MAX_CHOICES, row.choices.len()),
            });
        }
        if row.answer >= row.choices.len() {
            return Err(Error::Data {
                line: Some(line_no),
                message: format!(
                    "answer index {} out of range for {} choices",
                    row.answer,
                    row.choices.len()
                ),
            });
        }
        let byte_tok = |b: u8| fallback_base + (b as u32 % fallback_len);
        let mut prompt = vec![BOS];
        prompt.extend(row.question.bytes().map(byte_tok));
        for choice in &row.choices {
            prompt.push(SEP);
            prompt.extend(choice.bytes().map(byte_tok));
        }
        prompt.extend_from_slice(&[QUERY, ANSWER]);
        let sample = Sample::new(prompt, &[CHOICE_BASE + row.answer as u32]);
        if sample.tokens.len() > max_seq_len {
            skipped += 1;
            continue;
        }
        all.push(sample);
    }
    if !saw_any_line {
        return Err(Error::Data { line: None, message: format!("{} is empty", path.display()) });
    }
    // deterministic 8/1/1 split by line position
    let mut ds = Dataset {
        train: Vec::new(),
        valid: Vec::new(),
        test: Vec::new(),
        provenance: Provenance::File {
            path: path.display().to_string(),
            skipped_over_length: skipped,
        },
    };
    for (i, s) in all.into_iter().enumerate() {
        match i % 10 {
            8 => ds.valid.push(s),
            9 => ds.test.push(s),
            _ => ds.train.push(s),
        }
    }
    Ok(ds)
}

/// The three stock domains used by the CLI and the desk-scale experiments:
/// two key-value-recall domains over disjoint vocabularies plus a reversal
/// domain. Requires vocab >= 56.
pub fn standard_domains(vocab_size: usize, seed: u64) -> Result<[DomainSpec; 3]> {
    if vocab_size < 56 {
        return Err(Error::Config(format!(
            "builtin domains need vocab >= 56, got {vocab_size}"
        )));
    }
    Ok([
        DomainSpec::key_value("domain-a", 16, 16, 2, seed.wrapping_add(1)),
        DomainSpec::reversal("domain-b", 32, 8, 4, seed.wrapping_add(2)),
        DomainSpec::key_value("domain-c", 40, 16, 2, seed.wrapping_add(3)),
    ])
}
