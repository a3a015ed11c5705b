//! The pipeline stages. Each stage reads the JSONL artifacts of earlier
//! stages from the output directory and writes its own.

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;

use clap::ValueEnum;
use log::{info, warn};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use geouq_core::batch::{fit_reduced, global_score, BatchConfig};
use geouq_core::evaluation::{
    aggregate, analyze_terms, auroc, delta_hr, deserialize_threshold, f1_score, format_detection_table,
    format_subset_table, predict, serialize_threshold, split_by_hallucination_rate, tune_threshold, EvalReport,
    QuestionTerms, SubsetName, TermOptions,
};
use geouq_core::jsonl::{read_jsonl, write_jsonl};
use geouq_core::records::{ArchetypeRecord, EmbeddingRecord, ReducedRecord, ScoreRecord, SuspicionRecord};
use geouq_core::{select_best_of_n, GeoError};
use geouq_llm::curation::{curate, CurateConfig, LabelMode, LabeledBatch, QueryRecord, ResponseBatch};
use geouq_llm::{
    embed_texts, AnswerKey, CachedEmbedder, ChatModel, Embedder, HttpChat, HttpEmbedder, Judge, MockChat, MockEmbedder,
    MockMode,
};

use crate::config::RunConfig;
use crate::error::CliError;

pub const RESPONSES: &str = "responses.jsonl";
pub const LABELS: &str = "labels.jsonl";
pub const CURATE_CHECKPOINT: &str = "curate_checkpoint.jsonl";
pub const CURATE_FAILURES: &str = "curate_failures.jsonl";
pub const JUDGE_AUDIT: &str = "judge_audit.jsonl";
pub const EMBED_CACHE_DEFAULT: &str = "embed_cache.jsonl";
pub const EMBEDDINGS: &str = "embeddings.jsonl";
pub const REDUCED: &str = "reduced.jsonl";
pub const ARCHETYPES: &str = "archetypes.jsonl";
pub const SCORES: &str = "scores.jsonl";
pub const SUSPICION: &str = "suspicion.jsonl";
pub const TUNE: &str = "tune.jsonl";
pub const EVAL_REPORT: &str = "eval_report.jsonl";
pub const EVAL_TABLE: &str = "eval_report.txt";
pub const TERMS: &str = "terms.jsonl";
pub const TERMS_TABLE: &str = "terms.txt";
pub const RUN_CONFIG: &str = "run_config.toml";

const BUNDLED_QUESTIONS: &str = include_str!("../data/questions.jsonl");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Stage {
    Curate,
    Embed,
    Reduce,
    Fit,
    ScoreGlobal,
    ScoreLocal,
    Tune,
    Eval,
    AnalyzeTerms,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Curate,
        Stage::Embed,
        Stage::Reduce,
        Stage::Fit,
        Stage::ScoreGlobal,
        Stage::ScoreLocal,
        Stage::Tune,
        Stage::Eval,
        Stage::AnalyzeTerms,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Curate => "curate",
            Stage::Embed => "embed",
            Stage::Reduce => "reduce",
            Stage::Fit => "fit",
            Stage::ScoreGlobal => "score-global",
            Stage::ScoreLocal => "score-local",
            Stage::Tune => "tune",
            Stage::Eval => "eval",
            Stage::AnalyzeTerms => "analyze-terms",
        }
    }

    /// Stages from `from` to `to` inclusive, in pipeline order.
    pub fn range(from: Option<Stage>, to: Option<Stage>) -> Vec<Stage> {
        let from = from.unwrap_or(Stage::Curate);
        let to = to.unwrap_or(Stage::AnalyzeTerms);
        Stage::ALL.into_iter().filter(|s| *s >= from && *s <= to).collect()
    }
}

/// Threshold chosen for one evaluation seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TuneRecord {
    Tuned {
        seed: u64,
        split_seed: u64,
        #[serde(serialize_with = "serialize_threshold", deserialize_with = "deserialize_threshold")]
        tau: f64,
        val_f1: f64,
        val_ids: Vec<String>,
        test_ids: Vec<String>,
    },
    Failed {
        seed: u64,
        error: String,
    },
}

pub struct Context {
    pub cfg: RunConfig,
    pub mock: bool,
    pub subset: Option<SubsetName>,
}

impl Context {
    pub fn path(&self, name: &str) -> PathBuf {
        self.cfg.out_dir().join(name)
    }

    fn batch_config(&self) -> BatchConfig {
        BatchConfig {
            pca_dim: self.cfg.pca_dim,
            k_archetypes: self.cfg.k_archetypes,
            aa_steps: self.cfg.aa_steps,
            k_neighbors: self.cfg.k_neighbors,
            epsilon: self.cfg.epsilon,
            seed: self.cfg.seeds[0],
            fuse_extended: self.cfg.fuse_extended,
            voronoi: self.cfg.voronoi,
        }
    }

    fn read<T: DeserializeOwned>(&self, name: &str, producer: Stage, stage: Stage) -> Result<Vec<T>, CliError> {
        let path = self.path(name);
        if !path.exists() {
            return Err(CliError::MissingInput { path, hint: format!("run the {} stage first", producer.name()) });
        }
        read_jsonl(&path).map_err(|e| CliError::stage(stage.name(), e))
    }

    fn write<T: Serialize>(&self, name: &str, items: &[T], stage: Stage) -> Result<(), CliError> {
        write_jsonl(&self.path(name), items).map_err(|e| CliError::stage(stage.name(), e))
    }

    fn write_text(&self, name: &str, text: &str, stage: Stage) -> Result<(), CliError> {
        std::fs::write(self.path(name), text).map_err(|e| CliError::stage(stage.name(), e))
    }
}

/// Runs `stages` in order; each stage finishes before the next starts.
pub fn run_stages(ctx: &Context, stages: &[Stage]) -> Result<(), CliError> {
    std::fs::create_dir_all(ctx.cfg.out_dir())
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", ctx.cfg.out_dir().display())))?;
    let snapshot = toml::to_string(&ctx.cfg).map_err(|e| CliError::Config(e.to_string()))?;
    std::fs::write(ctx.path(RUN_CONFIG), snapshot).map_err(|e| CliError::Config(e.to_string()))?;
    for &stage in stages {
        info!("stage {}", stage.name());
        match stage {
            Stage::Curate => run_curate(ctx)?,
            Stage::Embed => run_embed(ctx)?,
            Stage::Reduce => run_reduce(ctx)?,
            Stage::Fit => run_fit(ctx)?,
            Stage::ScoreGlobal => run_score_global(ctx)?,
            Stage::ScoreLocal => run_score_local(ctx)?,
            Stage::Tune => run_tune(ctx)?,
            Stage::Eval => run_eval(ctx)?,
            Stage::AnalyzeTerms => run_analyze_terms(ctx)?,
        }
    }
    Ok(())
}

pub fn load_questions(cfg: &RunConfig) -> Result<Vec<QueryRecord>, CliError> {
    if cfg.paths.questions.is_empty() {
        return BUNDLED_QUESTIONS
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| CliError::stage("curate", e)))
            .collect();
    }
    let path = PathBuf::from(&cfg.paths.questions);
    if !path.exists() {
        return Err(CliError::MissingInput { path, hint: "set paths.questions to a question corpus".into() });
    }
    read_jsonl(&path).map_err(|e| CliError::stage("curate", e))
}

fn require_key(cfg: &geouq_llm::ClientConfig, var: &str) -> Result<(), CliError> {
    if cfg.api_key.is_empty() {
        return Err(CliError::Config(format!("{var} is not set (or pass --mock)")));
    }
    Ok(())
}

fn run_curate(ctx: &Context) -> Result<(), CliError> {
    const S: Stage = Stage::Curate;
    let cfg = &ctx.cfg;
    let corpus = load_questions(cfg)?;
    let (chat, judge_chat): (Box<dyn ChatModel>, Box<dyn ChatModel>) = if ctx.mock {
        let key = AnswerKey::new(
            corpus.iter().filter_map(|r| Some((r.question.clone(), r.reference_answer.clone()?))),
        );
        let refs = corpus.iter().filter_map(|r| r.reference_answer.clone()).collect();
        (
            Box::new(MockChat::new(MockMode::AnswerKey(key), cfg.seeds[0])),
            Box::new(MockChat::new(MockMode::ReferenceJudge(refs), cfg.seeds[0])),
        )
    } else {
        require_key(&cfg.chat, geouq_llm::config::ENV_LLM_KEY)?;
        let chat = HttpChat::new(cfg.chat.clone()).map_err(|e| CliError::Config(e.to_string()))?;
        let judge = HttpChat::new(cfg.judge_client.clone()).map_err(|e| CliError::Config(e.to_string()))?;
        (Box::new(chat), Box::new(judge))
    };
    let judge = (cfg.label_mode == LabelMode::Judge)
        .then(|| Judge::new(judge_chat.as_ref(), cfg.judge.clone()).with_audit(ctx.path(JUDGE_AUDIT)));
    let ccfg = CurateConfig {
        n_samples: cfg.n_samples,
        default_temperature: cfg.temperatures.0,
        sample_temperature: cfg.temperatures.1,
        max_tokens: cfg.max_tokens,
        prompt_template: cfg.prompt_template.clone(),
        mode: cfg.label_mode,
        rouge_threshold: cfg.rouge_threshold,
        workers: cfg.workers,
        checkpoint: Some(ctx.path(CURATE_CHECKPOINT)),
        require_mixed: cfg.require_mixed,
    };
    let report = curate(&corpus, chat.as_ref(), judge.as_ref(), &ccfg).map_err(|e| CliError::stage(S.name(), e))?;
    if !report.dropped_single_label.is_empty() {
        info!("dropped {} questions whose samples share one label", report.dropped_single_label.len());
    }
    ctx.write(CURATE_FAILURES, &report.failures, S)?;
    if report.items.is_empty() {
        return Err(CliError::stage(S.name(), format!("no question was curated ({} failures)", report.failures.len())));
    }
    let responses: Vec<&ResponseBatch> = report.items.iter().map(|i| &i.response).collect();
    let labels: Vec<&LabeledBatch> = report.items.iter().map(|i| &i.labels).collect();
    ctx.write(RESPONSES, &responses, S)?;
    ctx.write(LABELS, &labels, S)?;
    info!("curated {} questions, {} failed", report.items.len(), report.failures.len());
    Ok(())
}

fn run_embed(ctx: &Context) -> Result<(), CliError> {
    const S: Stage = Stage::Embed;
    let responses: Vec<ResponseBatch> = ctx.read(RESPONSES, Stage::Curate, S)?;
    let inner: Box<dyn Embedder> = if ctx.mock {
        Box::new(MockEmbedder::default())
    } else {
        require_key(&ctx.cfg.embed, geouq_llm::config::ENV_EMBED_KEY)?;
        Box::new(HttpEmbedder::new(ctx.cfg.embed.clone()).map_err(|e| CliError::Config(e.to_string()))?)
    };
    let embedder =
        CachedEmbedder::persistent(inner, &ctx.cfg.embed_cache()).map_err(|e| CliError::stage(S.name(), e))?;
    let records = responses
        .par_iter()
        .map(|b| {
            let texts: Vec<String> = std::iter::once(b.default_response.clone()).chain(b.samples.iter().cloned()).collect();
            let mut rows = embed_texts(&embedder, &texts).map_err(|e| format!("{}: {e}", b.question_id))?;
            let default_row = rows.remove(0);
            Ok(EmbeddingRecord { question_id: b.question_id.clone(), rows, default_row: Some(default_row) })
        })
        .collect::<Result<Vec<_>, String>>()
        .map_err(|e| CliError::stage(S.name(), e))?;
    embedder.compact().map_err(|e| CliError::stage(S.name(), e))?;
    info!("embedded {} questions ({} cache hits)", records.len(), embedder.hits());
    ctx.write(EMBEDDINGS, &records, S)
}

fn run_reduce(ctx: &Context) -> Result<(), CliError> {
    const S: Stage = Stage::Reduce;
    let embeddings: Vec<EmbeddingRecord> = ctx.read(EMBEDDINGS, Stage::Embed, S)?;
    let reduced = embeddings
        .par_iter()
        .map(|r| {
            let batch = r.to_batch()?;
            Ok(ReducedRecord::from(&geouq_core::reduce_batch(&batch, ctx.cfg.pca_dim)?))
        })
        .collect::<Result<Vec<_>, GeoError>>()
        .map_err(|e| CliError::stage(S.name(), e))?;
    let degenerate = reduced.iter().filter(|r| r.degenerate).count();
    if degenerate > 0 {
        warn!("{degenerate} batches consist of identical responses");
    }
    ctx.write(REDUCED, &reduced, S)
}

fn run_fit(ctx: &Context) -> Result<(), CliError> {
    const S: Stage = Stage::Fit;
    let reduced: Vec<ReducedRecord> = ctx.read(REDUCED, Stage::Reduce, S)?;
    let bcfg = ctx.batch_config();
    let fitted = reduced
        .par_iter()
        .map(|r| {
            let (model, k) = fit_reduced(&r.to_batch()?, &bcfg)?;
            Ok((ArchetypeRecord::new(&r.question_id, &model), k))
        })
        .collect::<Result<Vec<_>, GeoError>>()
        .map_err(|e| CliError::stage(S.name(), e))?;
    let clamped: BTreeSet<usize> = fitted.iter().map(|(_, k)| *k).filter(|&k| k < bcfg.k_archetypes).collect();
    if !clamped.is_empty() {
        warn!("K = {} exceeds min(n, d' + 1) for some batches; fitted K = {clamped:?} instead", bcfg.k_archetypes);
    }
    let records: Vec<ArchetypeRecord> = fitted.into_iter().map(|(r, _)| r).collect();
    ctx.write(ARCHETYPES, &records, S)
}

/// Pairs reduced batches with their archetypes by question id, in the
/// order of the reduced file.
fn join_models(ctx: &Context, stage: Stage) -> Result<Vec<(ReducedRecord, ArchetypeRecord)>, CliError> {
    let reduced: Vec<ReducedRecord> = ctx.read(REDUCED, Stage::Reduce, stage)?;
    let archetypes: Vec<ArchetypeRecord> = ctx.read(ARCHETYPES, Stage::Fit, stage)?;
    let mut by_id: HashMap<String, ArchetypeRecord> =
        archetypes.into_iter().map(|a| (a.question_id.clone(), a)).collect();
    reduced
        .into_iter()
        .map(|r| match by_id.remove(&r.question_id) {
            Some(a) => Ok((r, a)),
            None => Err(CliError::stage(stage.name(), format!("no archetypes for question {}", r.question_id))),
        })
        .collect()
}

fn run_score_global(ctx: &Context) -> Result<(), CliError> {
    const S: Stage = Stage::ScoreGlobal;
    let pairs = join_models(ctx, S)?;
    let scores = pairs
        .par_iter()
        .map(|(r, a)| {
            let model = a.to_model(r.explained_variance.len())?;
            Ok(ScoreRecord::from(&global_score(&r.question_id, &model, ctx.cfg.epsilon)?))
        })
        .collect::<Result<Vec<_>, GeoError>>()
        .map_err(|e| CliError::stage(S.name(), e))?;
    ctx.write(SCORES, &scores, S)
}

fn run_score_local(ctx: &Context) -> Result<(), CliError> {
    const S: Stage = Stage::ScoreLocal;
    let pairs = join_models(ctx, S)?;
    let opts = ctx.batch_config().suspicion_options();
    let records = pairs
        .par_iter()
        .map(|(r, a)| {
            let batch = r.to_batch()?;
            let model = a.to_model(r.explained_variance.len())?;
            Ok(SuspicionRecord::from(&select_best_of_n(&batch, &model, &opts)?))
        })
        .collect::<Result<Vec<_>, GeoError>>()
        .map_err(|e| CliError::stage(S.name(), e))?;
    ctx.write(SUSPICION, &records, S)
}

/// Scores with their labels, in the order of the scores file.
fn join_labels(ctx: &Context, stage: Stage) -> Result<Vec<(ScoreRecord, LabeledBatch)>, CliError> {
    let scores: Vec<ScoreRecord> = ctx.read(SCORES, Stage::ScoreGlobal, stage)?;
    let labels: Vec<LabeledBatch> = ctx.read(LABELS, Stage::Curate, stage)?;
    let mut by_id: HashMap<String, LabeledBatch> = labels.into_iter().map(|l| (l.question_id.clone(), l)).collect();
    scores
        .into_iter()
        .map(|s| match by_id.remove(&s.question_id) {
            Some(l) => Ok((s, l)),
            None => Err(CliError::stage(stage.name(), format!("no labels for question {}", s.question_id))),
        })
        .collect()
}

fn run_tune(ctx: &Context) -> Result<(), CliError> {
    const S: Stage = Stage::Tune;
    let joined = join_labels(ctx, S)?;
    let scores: Vec<f64> = joined.iter().map(|(s, _)| s.h_g).collect();
    let labels: Vec<u8> = joined.iter().map(|(_, l)| l.default_label).collect();
    let ids = |idx: &[usize]| idx.iter().map(|&i| joined[i].0.question_id.clone()).collect::<Vec<_>>();
    let mut records = Vec::new();
    for &seed in &ctx.cfg.seeds {
        match tune_threshold(&scores, &labels, ctx.cfg.val_fraction, seed) {
            Ok(t) => records.push(TuneRecord::Tuned {
                seed,
                split_seed: t.split_seed,
                tau: t.tau,
                val_f1: t.val_f1,
                val_ids: ids(&t.val_indices),
                test_ids: ids(&t.test_indices),
            }),
            Err(e @ GeoError::SingleClassValidation { .. }) => {
                warn!("seed {seed}: {e}");
                records.push(TuneRecord::Failed { seed, error: e.to_string() });
            }
            Err(e) => return Err(CliError::stage(S.name(), e)),
        }
    }
    ctx.write(TUNE, &records, S)?;
    if records.iter().all(|r| matches!(r, TuneRecord::Failed { .. })) {
        return Err(CliError::stage(S.name(), "every seed drew single-class validation splits"));
    }
    Ok(())
}

fn subsets(ctx: &Context, default: &[SubsetName]) -> Vec<SubsetName> {
    ctx.subset.map_or_else(|| default.to_vec(), |s| vec![s])
}

fn run_eval(ctx: &Context) -> Result<(), CliError> {
    const S: Stage = Stage::Eval;
    let joined = join_labels(ctx, S)?;
    let suspicion: Vec<SuspicionRecord> = ctx.read(SUSPICION, Stage::ScoreLocal, S)?;
    let tunes: Vec<TuneRecord> = ctx.read(TUNE, Stage::Tune, S)?;
    let selected: HashMap<&str, usize> = suspicion.iter().map(|r| (r.question_id.as_str(), r.selected_index)).collect();
    let position: HashMap<&str, usize> =
        joined.iter().enumerate().map(|(i, (s, _))| (s.question_id.as_str(), i)).collect();
    let stage_err = |e: GeoError| CliError::stage(S.name(), e);

    let mut default_labels = Vec::with_capacity(joined.len());
    let mut bon_labels = Vec::with_capacity(joined.len());
    for (s, l) in &joined {
        let idx = *selected
            .get(s.question_id.as_str())
            .ok_or_else(|| CliError::stage(S.name(), format!("no suspicion record for {}", s.question_id)))?;
        let label = *l.sample_labels.get(idx).ok_or_else(|| {
            CliError::stage(S.name(), format!("selected index {idx} out of range for {}", s.question_id))
        })?;
        default_labels.push(l.default_label);
        bon_labels.push(label);
    }
    let sample_labels: Vec<Vec<u8>> = joined.iter().map(|(_, l)| l.sample_labels.clone()).collect();
    let wanted = subsets(ctx, &SubsetName::ALL);

    let mut reports = Vec::new();
    for t in &tunes {
        let TuneRecord::Tuned { seed, split_seed, tau, test_ids, val_ids, .. } = t else { continue };
        let ids = if test_ids.is_empty() { val_ids } else { test_ids };
        let test: Vec<usize> = ids
            .iter()
            .map(|id| {
                position.get(id.as_str()).copied().ok_or_else(|| {
                    CliError::stage(S.name(), format!("tuned split names unknown question {id}; rerun tune"))
                })
            })
            .collect::<Result<_, _>>()?;
        let test_scores: Vec<f64> = test.iter().map(|&i| joined[i].0.h_g).collect();
        let test_labels: Vec<u8> = test.iter().map(|&i| default_labels[i]).collect();
        let f1 = f1_score(&predict(&test_scores, *tau), &test_labels).map_err(stage_err)?;
        let auroc = match auroc(&test_scores, &test_labels) {
            Ok(v) => Some(v),
            Err(GeoError::SingleClass) => None,
            Err(e) => return Err(stage_err(e)),
        };
        for &subset in &wanted {
            let idx = split_by_hallucination_rate(&sample_labels, &subset.spec());
            if idx.is_empty() {
                if *seed == ctx.cfg.seeds[0] {
                    warn!("subset {subset} holds no questions");
                }
                continue;
            }
            let d: Vec<u8> = idx.iter().map(|&i| default_labels[i]).collect();
            let b: Vec<u8> = idx.iter().map(|&i| bon_labels[i]).collect();
            let rates = delta_hr(&d, &b).map_err(stage_err)?;
            reports.push(EvalReport {
                tau: *tau,
                f1,
                auroc,
                baseline_hr: rates.baseline_hr,
                bon_hr: rates.bon_hr,
                delta_hr: rates.delta_hr,
                n_questions: rates.n_questions,
                split_seed: *split_seed,
                seed: *seed,
                subset,
            });
        }
    }
    if reports.is_empty() {
        return Err(CliError::stage(S.name(), "no tuned seed and non-empty subset to evaluate"));
    }
    ctx.write(EVAL_REPORT, &reports, S)?;
    ctx.write_text(EVAL_TABLE, &eval_text(&reports), S)
}

fn eval_text(reports: &[EvalReport]) -> String {
    let mut subsets: Vec<SubsetName> = Vec::new();
    for r in reports {
        if !subsets.contains(&r.subset) {
            subsets.push(r.subset);
        }
    }
    let per_subset = |s: SubsetName| reports.iter().filter(|r| r.subset == s).cloned().collect::<Vec<_>>();
    let mut out = String::from("Hallucination detection (score H_G, default-response labels, mean ± std over seeds)\n");
    if let Some(agg) = aggregate(&per_subset(subsets[0])) {
        out.push_str(&format_detection_table(&[("Geometric Volume".to_string(), agg)]));
    }
    out.push_str("\nBest-of-N selection by Geometric Suspicion\n");
    let rows: Vec<_> = subsets.iter().filter_map(|&s| aggregate(&per_subset(s)).map(|a| (s, a))).collect();
    out.push_str(&format_subset_table(&rows));
    out
}

fn run_analyze_terms(ctx: &Context) -> Result<(), CliError> {
    const S: Stage = Stage::AnalyzeTerms;
    let labels: Vec<LabeledBatch> = ctx.read(LABELS, Stage::Curate, S)?;
    let suspicion: Vec<SuspicionRecord> = ctx.read(SUSPICION, Stage::ScoreLocal, S)?;
    let by_id: HashMap<&str, &LabeledBatch> = labels.iter().map(|l| (l.question_id.as_str(), l)).collect();
    let questions: Vec<QuestionTerms> = suspicion
        .iter()
        .filter_map(|r| {
            let l = by_id.get(r.question_id.as_str())?;
            Some(QuestionTerms::from_suspicion(l.sample_labels.clone(), &r.to_breakdown()))
        })
        .collect();
    let mut default = SubsetName::BANDS.to_vec();
    default.push(SubsetName::AllValid);
    let opts = TermOptions { standardize: ctx.cfg.standardize_terms };
    let table = analyze_terms(&questions, &subsets(ctx, &default), opts).map_err(|e| CliError::stage(S.name(), e))?;
    ctx.write(TERMS, &table.cells, S)?;
    let mut text = String::from("One-sided Mann-Whitney p-values, hallucinated > correct\n");
    text.push_str(&table.to_text());
    ctx.write_text(TERMS_TABLE, &text, S)
}
