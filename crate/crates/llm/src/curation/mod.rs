//! Dataset curation: generate a greedy default and `n` sampled responses per
//! question, label them against the reference, checkpoint as we go.

mod rouge;

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use geouq_core::jsonl::{append_jsonl, read_jsonl_lenient, write_jsonl, JsonlError};

use crate::client::{chat_complete, ChatModel};
use crate::config::GenerationRequest;
use crate::error::LlmError;
use crate::judge::Judge;

pub use rouge::{lcs_len, rouge_l_f1, rouge_label, tokenize, ROUGE_THRESHOLD};

pub const DEFAULT_N_SAMPLES: usize = 20;
pub const DEFAULT_PROMPT_TEMPLATE: &str = "Answer the following question concisely.\nQuestion: {question}\nAnswer:";

#[derive(Debug, Error)]
pub enum CurationError {
    #[error("need at least 2 samples per question, got {0}")]
    InvalidN(usize),
    #[error("question {0} has no reference answer")]
    MissingReference(String),
    #[error("judge labelling requested but no judge configured")]
    MissingJudge,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("invalid corpus: {0}")]
    InvalidCorpus(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
}

pub type Result<T> = std::result::Result<T, CurationError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub id: String,
    pub question: String,
    #[serde(default)]
    pub reference_answer: Option<String>,
    #[serde(default)]
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseBatch {
    pub question_id: String,
    pub default_response: String,
    pub samples: Vec<String>,
    pub default_temperature: f64,
    pub sample_temperature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    Rouge,
    Judge,
}

impl std::str::FromStr for LabelMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "rouge" => Ok(LabelMode::Rouge),
            "judge" => Ok(LabelMode::Judge),
            other => Err(format!("unknown label mode '{other}' (expected rouge or judge)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledBatch {
    pub question_id: String,
    pub default_label: u8,
    pub sample_labels: Vec<u8>,
    pub label_source: LabelMode,
    /// Per-sample ROUGE-L F1, present only for ROUGE labels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rouge_scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_rouge: Option<f64>,
}

impl LabeledBatch {
    /// Samples contain both hallucinated and correct responses.
    pub fn is_mixed(&self) -> bool {
        self.sample_labels.contains(&0) && self.sample_labels.contains(&1)
    }
}

/// Labels the default response and every sample of `batch`.
pub fn label_batch(
    batch: &ResponseBatch,
    record: &QueryRecord,
    mode: LabelMode,
    judge: Option<&Judge<'_>>,
    threshold: f64,
) -> Result<LabeledBatch> {
    let reference = record
        .reference_answer
        .as_deref()
        .filter(|r| !r.trim().is_empty())
        .ok_or_else(|| CurationError::MissingReference(record.id.clone()))?;
    match mode {
        LabelMode::Rouge => {
            let default_rouge = rouge_l_f1(&batch.default_response, reference);
            let scores: Vec<f64> = batch.samples.iter().map(|s| rouge_l_f1(s, reference)).collect();
            Ok(LabeledBatch {
                question_id: batch.question_id.clone(),
                default_label: rouge_label(default_rouge, threshold),
                sample_labels: scores.iter().map(|&s| rouge_label(s, threshold)).collect(),
                label_source: LabelMode::Rouge,
                rouge_scores: Some(scores),
                default_rouge: Some(default_rouge),
            })
        }
        LabelMode::Judge => {
            let judge = judge.ok_or(CurationError::MissingJudge)?;
            let label = |c: &str| judge.judge_label(&record.question, reference, c);
            let default_label = label(&batch.default_response)?;
            let sample_labels = batch.samples.iter().map(|s| label(s)).collect::<std::result::Result<_, _>>()?;
            Ok(LabeledBatch {
                question_id: batch.question_id.clone(),
                default_label,
                sample_labels,
                label_source: LabelMode::Judge,
                rouge_scores: None,
                default_rouge: None,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurateConfig {
    pub n_samples: usize,
    pub default_temperature: f64,
    pub sample_temperature: f64,
    pub max_tokens: usize,
    /// Prompt with a `{question}` placeholder.
    pub prompt_template: String,
    pub mode: LabelMode,
    pub rouge_threshold: f64,
    pub workers: usize,
    /// One JSONL line per finished question; reused on the next run.
    pub checkpoint: Option<PathBuf>,
    /// Keep only questions whose samples have both labels.
    pub require_mixed: bool,
}

impl Default for CurateConfig {
    fn default() -> Self {
        CurateConfig {
            n_samples: DEFAULT_N_SAMPLES,
            default_temperature: 0.0,
            sample_temperature: 1.0,
            max_tokens: 256,
            prompt_template: DEFAULT_PROMPT_TEMPLATE.into(),
            mode: LabelMode::Rouge,
            rouge_threshold: ROUGE_THRESHOLD,
            workers: 4,
            checkpoint: None,
            require_mixed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuratedItem {
    pub response: ResponseBatch,
    pub labels: LabeledBatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationFailure {
    pub question_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CurateReport {
    /// Finished questions in corpus order.
    pub items: Vec<CuratedItem>,
    pub failures: Vec<CurationFailure>,
    /// Ids taken from the checkpoint instead of being generated.
    pub resumed: Vec<String>,
    /// Ids removed by the mixed-label filter.
    pub dropped_single_label: Vec<String>,
}

fn validate_corpus(corpus: &[QueryRecord], cfg: &CurateConfig) -> Result<()> {
    if cfg.n_samples < 2 {
        return Err(CurationError::InvalidN(cfg.n_samples));
    }
    if corpus.is_empty() {
        return Err(CurationError::EmptyCorpus);
    }
    let mut ids = HashSet::new();
    for r in corpus {
        if !ids.insert(r.id.as_str()) {
            return Err(CurationError::InvalidCorpus(format!("duplicate id {}", r.id)));
        }
        if r.question.trim().is_empty() {
            return Err(CurationError::InvalidCorpus(format!("question {} is empty", r.id)));
        }
        if r.reference_answer.as_deref().is_none_or(|a| a.trim().is_empty()) {
            return Err(CurationError::MissingReference(r.id.clone()));
        }
    }
    Ok(())
}

fn generate_one(
    record: &QueryRecord,
    chat: &dyn ChatModel,
    judge: Option<&Judge<'_>>,
    cfg: &CurateConfig,
) -> Result<CuratedItem> {
    let prompt = cfg.prompt_template.replace("{question}", &record.question);
    let mut default_req = GenerationRequest::new(prompt.clone(), cfg.default_temperature, 1);
    default_req.max_tokens = cfg.max_tokens;
    let mut sample_req = GenerationRequest::new(prompt, cfg.sample_temperature, cfg.n_samples);
    sample_req.max_tokens = cfg.max_tokens;
    let default_response = chat_complete(chat, &default_req)?.remove(0);
    let samples = chat_complete(chat, &sample_req)?;
    if let Some(i) = samples.iter().position(|s| s.trim().is_empty()) {
        return Err(LlmError::MalformedResponse(format!("sample {i} is empty")).into());
    }
    let response = ResponseBatch {
        question_id: record.id.clone(),
        default_response,
        samples,
        default_temperature: cfg.default_temperature,
        sample_temperature: cfg.sample_temperature,
    };
    let labels = label_batch(&response, record, cfg.mode, judge, cfg.rouge_threshold)?;
    Ok(CuratedItem { response, labels })
}

/// Generates and labels every question not already in the checkpoint.
/// Per-question failures are collected in the report and do not stop the run.
pub fn curate(
    corpus: &[QueryRecord],
    chat: &dyn ChatModel,
    judge: Option<&Judge<'_>>,
    cfg: &CurateConfig,
) -> Result<CurateReport> {
    validate_corpus(corpus, cfg)?;
    if cfg.mode == LabelMode::Judge && judge.is_none() {
        return Err(CurationError::MissingJudge);
    }

    let wanted: HashSet<&str> = corpus.iter().map(|r| r.id.as_str()).collect();
    let mut done: HashMap<String, CuratedItem> = HashMap::new();
    if let Some(path) = &cfg.checkpoint {
        let previous: Vec<CuratedItem> = read_jsonl_lenient(path)?;
        let mut kept = Vec::new();
        for item in previous {
            let id = item.response.question_id.clone();
            if wanted.contains(id.as_str()) && item.response.samples.len() == cfg.n_samples && !done.contains_key(&id) {
                done.insert(id, item.clone());
                kept.push(item);
            }
        }
        write_jsonl(path, &kept)?;
        if !kept.is_empty() {
            info!("resuming: {} of {} questions already in {}", kept.len(), corpus.len(), path.display());
        }
    }
    let resumed: Vec<String> = corpus.iter().filter(|r| done.contains_key(&r.id)).map(|r| r.id.clone()).collect();
    let pending: Vec<&QueryRecord> = corpus.iter().filter(|r| !done.contains_key(&r.id)).collect();

    let mut failures = Vec::new();
    let next = AtomicUsize::new(0);
    let workers = cfg.workers.clamp(1, pending.len().max(1));
    let (tx, rx) = mpsc::channel::<(usize, Result<CuratedItem>)>();
    let write_result = std::thread::scope(|s| -> Result<()> {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, pending) = (&next, &pending);
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(record) = pending.get(i) else { break };
                if tx.send((i, generate_one(record, chat, judge, cfg))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut first_err = None;
        for (i, outcome) in rx {
            match outcome {
                Ok(item) => {
                    if let Some(path) = &cfg.checkpoint {
                        if let Err(e) = append_jsonl(path, &item) {
                            first_err.get_or_insert(e);
                        }
                    }
                    done.insert(item.response.question_id.clone(), item);
                }
                Err(e) => {
                    warn!("question {} failed: {e}", pending[i].id);
                    failures.push((i, CurationFailure { question_id: pending[i].id.clone(), error: e.to_string() }));
                }
            }
        }
        first_err.map_or(Ok(()), |e| Err(e.into()))
    });
    write_result?;
    failures.sort_by_key(|(i, _)| *i);

    let mut items = Vec::new();
    let mut dropped = Vec::new();
    for r in corpus {
        if let Some(item) = done.remove(&r.id) {
            if cfg.require_mixed && !item.labels.is_mixed() {
                dropped.push(r.id.clone());
            } else {
                items.push(item);
            }
        }
    }
    Ok(CurateReport {
        items,
        failures: failures.into_iter().map(|(_, f)| f).collect(),
        resumed,
        dropped_single_label: dropped,
    })
}
