use std::sync::atomic::{AtomicUsize, Ordering};

use geouq_llm::client::ChatModel;
use geouq_llm::config::GenerationRequest;
use geouq_llm::curation::{
    curate, label_batch, lcs_len, rouge_l_f1, tokenize, CurateConfig, CurationError, LabelMode, QueryRecord,
    ResponseBatch, ROUGE_THRESHOLD,
};
use geouq_llm::error::{LlmError, Result};
use geouq_llm::judge::{Judge, JudgeConfig};
use geouq_llm::mock::{AnswerKey, MockChat, MockMode};
use proptest::prelude::*;

fn record(id: &str, q: &str, a: &str) -> QueryRecord {
    QueryRecord { id: id.into(), question: q.into(), reference_answer: Some(a.into()), tags: vec![] }
}

fn corpus() -> Vec<QueryRecord> {
    vec![record("q1", "What is the capital of France?", "Paris"), record("q2", "Who wrote Hamlet?", "William Shakespeare")]
}

fn mock() -> MockChat {
    let key = AnswerKey::new(corpus().into_iter().map(|r| (r.question, r.reference_answer.unwrap())));
    MockChat::new(MockMode::AnswerKey(key), 1)
}

#[test]
fn two_questions_three_samples() {
    let cfg = CurateConfig { n_samples: 3, workers: 2, ..Default::default() };
    let report = curate(&corpus(), &mock(), None, &cfg).unwrap();
    assert_eq!(report.items.len(), 2);
    assert!(report.failures.is_empty());
    for (item, rec) in report.items.iter().zip(corpus()) {
        assert_eq!(item.response.question_id, rec.id);
        assert_eq!(item.response.samples.len(), 3);
        assert_eq!(item.labels.sample_labels.len(), 3);
        assert_eq!(item.response.default_temperature, 0.0);
        assert_eq!(item.response.sample_temperature, 1.0);
        assert_eq!(item.labels.rouge_scores.as_ref().unwrap().len(), 3);
    }
    assert_eq!(report, curate(&corpus(), &mock(), None, &CurateConfig { workers: 1, ..cfg }).unwrap());
}

#[test]
fn n_below_two_is_rejected() {
    let cfg = CurateConfig { n_samples: 1, ..Default::default() };
    assert!(matches!(curate(&corpus(), &mock(), None, &cfg), Err(CurationError::InvalidN(1))));
}

#[test]
fn missing_reference_is_rejected() {
    let mut c = corpus();
    c[1].reference_answer = None;
    assert!(matches!(curate(&c, &mock(), None, &CurateConfig::default()), Err(CurationError::MissingReference(id)) if id == "q2"));
}

/// Fails every prompt containing `poison`, counting calls.
struct Flaky {
    inner: MockChat,
    poison: &'static str,
    calls: AtomicUsize,
}

impl ChatModel for Flaky {
    fn model_name(&self) -> &str {
        "flaky"
    }

    fn complete(&self, req: &GenerationRequest) -> Result<Vec<String>> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if req.prompt.contains(self.poison) {
            return Err(LlmError::RateLimited { attempts: 3, last_status: Some(503), detail: String::new() });
        }
        self.inner.complete(req)
    }
}

#[test]
fn resume_skips_completed_questions() {
    let dir = tempfile::tempdir().unwrap();
    let checkpoint = dir.path().join("checkpoint.jsonl");
    let cfg = CurateConfig { n_samples: 3, checkpoint: Some(checkpoint.clone()), ..Default::default() };

    let interrupted = Flaky { inner: mock(), poison: "Hamlet", calls: AtomicUsize::new(0) };
    let first = curate(&corpus(), &interrupted, None, &cfg).unwrap();
    assert_eq!(first.items.len(), 1);
    assert_eq!(first.failures.len(), 1);
    assert_eq!(first.failures[0].question_id, "q2");

    let resumed = Flaky { inner: mock(), poison: "never", calls: AtomicUsize::new(0) };
    let second = curate(&corpus(), &resumed, None, &cfg).unwrap();
    assert_eq!(second.resumed, vec!["q1"]);
    assert_eq!(second.items.len(), 2);
    assert_eq!(resumed.calls.load(Ordering::SeqCst), 2, "only question 2 is generated");
    assert_eq!(second.items[0], first.items[0]);
    assert_eq!(std::fs::read_to_string(&checkpoint).unwrap().lines().count(), 2);
}

#[test]
fn torn_checkpoint_tail_is_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let checkpoint = dir.path().join("checkpoint.jsonl");
    let cfg = CurateConfig { n_samples: 3, checkpoint: Some(checkpoint.clone()), ..Default::default() };
    curate(&corpus()[..1], &mock(), None, &cfg).unwrap();
    let mut text = std::fs::read_to_string(&checkpoint).unwrap();
    text.push_str("{\"response\":{\"question_id\":\"q2\"");
    std::fs::write(&checkpoint, text).unwrap();
    let report = curate(&corpus(), &mock(), None, &cfg).unwrap();
    assert_eq!(report.items.len(), 2);
    assert_eq!(report.resumed, vec!["q1"]);
}

#[test]
fn judge_mode_uses_the_judge() {
    let judge_chat = MockChat::fixed("CORRECT");
    let judge = Judge::new(&judge_chat, JudgeConfig::default());
    let cfg = CurateConfig { n_samples: 3, mode: LabelMode::Judge, ..Default::default() };
    let report = curate(&corpus(), &mock(), Some(&judge), &cfg).unwrap();
    for item in &report.items {
        assert_eq!(item.labels.default_label, 0);
        assert!(item.labels.sample_labels.iter().all(|&l| l == 0));
        assert!(item.labels.rouge_scores.is_none());
    }
    assert_eq!(judge_chat.calls(), 2 * 4);
    assert!(matches!(curate(&corpus(), &mock(), None, &cfg), Err(CurationError::MissingJudge)));
}

#[test]
fn mixed_filter_drops_single_label_questions() {
    let chat = MockChat::fixed("Paris");
    let cfg = CurateConfig { n_samples: 4, require_mixed: true, ..Default::default() };
    let report = curate(&corpus(), &chat, None, &cfg).unwrap();
    assert!(report.items.is_empty());
    assert_eq!(report.dropped_single_label, vec!["q1", "q2"]);
}

#[test]
fn rouge_labels_at_the_boundary() {
    let rec = record("q", "q?", "a b c d e f g h i j");
    let batch = ResponseBatch {
        question_id: "q".into(),
        default_response: "a b c x x x x x x x".into(),
        samples: vec!["a b x x x x x x x x".into(), "a b c d e f g h i j".into()],
        default_temperature: 0.0,
        sample_temperature: 1.0,
    };
    let l = label_batch(&batch, &rec, LabelMode::Rouge, None, ROUGE_THRESHOLD).unwrap();
    assert_eq!(l.default_rouge, Some(0.3));
    assert_eq!(l.default_label, 0);
    assert_eq!(l.sample_labels, vec![1, 0]);
}

fn lcs_by_enumeration(a: &[String], b: &[String]) -> usize {
    (0u32..1 << a.len())
        .filter_map(|mask| {
            let sub: Vec<&String> = a.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, t)| t).collect();
            let mut it = b.iter();
            sub.iter().all(|t| it.any(|u| u == *t)).then_some(sub.len())
        })
        .max()
        .unwrap_or(0)
}

proptest! {
    #[test]
    fn f1_identity_and_symmetry(c in "[abc ]{0,24}", r in "[abc ]{0,24}") {
        let (ct, rt) = (tokenize(&c), tokenize(&r));
        let f = rouge_l_f1(&c, &r);
        let lcs = lcs_len(&ct, &rt);
        let expected = if lcs == 0 { 0.0 } else { 2.0 * lcs as f64 / (ct.len() + rt.len()) as f64 };
        prop_assert!((f - expected).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&f));
        if ct.len() == rt.len() {
            prop_assert!((f - rouge_l_f1(&r, &c)).abs() < 1e-12);
        }
    }

    #[test]
    fn lcs_matches_enumeration(a in prop::collection::vec("[xyz]", 0..9), b in prop::collection::vec("[xyz]", 0..9)) {
        prop_assert_eq!(lcs_len(&a, &b), lcs_by_enumeration(&a, &b));
    }
}
