//! LLM-as-judge labelling with strict verdict markers and an audit log.

use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use geouq_core::jsonl::append_jsonl;

use crate::client::{chat_complete, ChatModel};
use crate::config::GenerationRequest;
use crate::error::{LlmError, Result};

pub const DEFAULT_JUDGE_TEMPLATE: &str = "You are grading an answer to a question against a reference answer.\n\
Question: {question}\n\
Reference answer: {reference}\n\
Candidate answer: {candidate}\n\
Reply with exactly one word: CORRECT if the candidate agrees with the reference, INCORRECT otherwise.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JudgeConfig {
    /// Prompt with `{question}`, `{reference}` and `{candidate}` placeholders.
    pub template: String,
    pub correct_marker: String,
    pub incorrect_marker: String,
    pub max_tokens: usize,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        JudgeConfig {
            template: DEFAULT_JUDGE_TEMPLATE.into(),
            correct_marker: "CORRECT".into(),
            incorrect_marker: "INCORRECT".into(),
            max_tokens: 8,
        }
    }
}

impl JudgeConfig {
    pub fn render(&self, question: &str, reference: &str, candidate: &str) -> String {
        self.template
            .replace("{question}", question)
            .replace("{reference}", reference)
            .replace("{candidate}", candidate)
    }

    /// 1 for the incorrect marker, 0 for the correct one. Only the first
    /// whitespace-separated token counts, with surrounding punctuation
    /// removed; the comparison is case-sensitive.
    pub fn parse_verdict(&self, output: &str) -> Result<u8> {
        let first = output.split_whitespace().next().unwrap_or("");
        let token = first.trim_matches(|c: char| c.is_ascii_punctuation());
        if token == self.incorrect_marker {
            Ok(1)
        } else if token == self.correct_marker {
            Ok(0)
        } else {
            Err(LlmError::UnparseableVerdict(output.to_string()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeAudit {
    pub question: String,
    pub candidate: String,
    pub raw_output: String,
    pub label: Option<u8>,
}

pub struct Judge<'a> {
    chat: &'a dyn ChatModel,
    cfg: JudgeConfig,
    audit_path: Option<PathBuf>,
    audit_lock: Mutex<()>,
}

impl<'a> Judge<'a> {
    pub fn new(chat: &'a dyn ChatModel, cfg: JudgeConfig) -> Self {
        Judge { chat, cfg, audit_path: None, audit_lock: Mutex::new(()) }
    }

    /// Appends every raw verdict to this JSONL file.
    pub fn with_audit(mut self, path: impl Into<PathBuf>) -> Self {
        self.audit_path = Some(path.into());
        self
    }

    pub fn config(&self) -> &JudgeConfig {
        &self.cfg
    }

    pub fn judge_label(&self, question: &str, reference: &str, candidate: &str) -> Result<u8> {
        for (name, s) in [("question", question), ("reference", reference), ("candidate", candidate)] {
            if s.trim().is_empty() {
                return Err(LlmError::InvalidRequest(format!("judge {name} is empty")));
            }
        }
        let prompt = self.cfg.render(question, reference, candidate);
        let req = GenerationRequest { max_tokens: self.cfg.max_tokens, ..GenerationRequest::new(prompt, 0.0, 1) };
        let raw = chat_complete(self.chat, &req)?.remove(0);
        let verdict = self.cfg.parse_verdict(&raw);
        if let Some(path) = &self.audit_path {
            let _guard = self.audit_lock.lock().expect("audit lock");
            append_jsonl(
                path,
                &JudgeAudit {
                    question: question.to_string(),
                    candidate: candidate.to_string(),
                    raw_output: raw,
                    label: verdict.as_ref().ok().copied(),
                },
            )?;
        }
        verdict
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_markers_strictly() {
        let cfg = JudgeConfig::default();
        assert_eq!(cfg.parse_verdict("CORRECT").unwrap(), 0);
        assert_eq!(cfg.parse_verdict("INCORRECT.").unwrap(), 1);
        assert_eq!(cfg.parse_verdict("  INCORRECT because ...").unwrap(), 1);
        assert!(matches!(cfg.parse_verdict("maybe"), Err(LlmError::UnparseableVerdict(_))));
        assert!(matches!(cfg.parse_verdict("correct"), Err(LlmError::UnparseableVerdict(_))));
        assert!(matches!(cfg.parse_verdict(""), Err(LlmError::UnparseableVerdict(_))));
    }

    #[test]
    fn template_placeholders() {
        let cfg = JudgeConfig { template: "{question}|{reference}|{candidate}".into(), ..Default::default() };
        assert_eq!(cfg.render("q", "r", "c"), "q|r|c");
    }
}
