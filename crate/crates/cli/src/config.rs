//! Run configuration, loaded from TOML with API keys taken from the
//! environment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use geouq_core::archetypes::{DEFAULT_ARCHETYPES, DEFAULT_STEPS};
use geouq_core::embedding::DEFAULT_PCA_DIM;
use geouq_core::evaluation::DEFAULT_VAL_FRACTION;
use geouq_core::geometry::DEFAULT_EPSILON;
use geouq_core::suspicion::DEFAULT_K_NEIGHBORS;
use geouq_llm::curation::{LabelMode, DEFAULT_N_SAMPLES, DEFAULT_PROMPT_TEMPLATE, ROUGE_THRESHOLD};
use geouq_llm::{ClientConfig, JudgeConfig};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub pca_dim: usize,
    #[serde(rename = "K")]
    pub k_archetypes: usize,
    pub aa_steps: usize,
    pub n_samples: usize,
    pub k_neighbors: usize,
    pub epsilon: f64,
    pub val_fraction: f64,
    pub seeds: Vec<u64>,
    /// Default (greedy) and sampling temperature.
    pub temperatures: (f64, f64),
    pub rouge_threshold: f64,
    pub label_mode: LabelMode,
    pub prompt_template: String,
    pub max_tokens: usize,
    /// Drop questions whose samples all share one label.
    pub require_mixed: bool,
    /// Also fuse the three auxiliary terms into the suspicion score.
    pub fuse_extended: bool,
    pub voronoi: bool,
    /// Z-score term values per question before the term analysis.
    pub standardize_terms: bool,
    pub workers: usize,
    pub paths: Paths,
    pub chat: ClientConfig,
    pub embed: ClientConfig,
    pub judge_client: ClientConfig,
    pub judge: JudgeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Question corpus; empty means the bundled 20-question corpus.
    pub questions: String,
    pub out_dir: String,
    /// Persistent embedding cache; empty means `<out_dir>/embed_cache.jsonl`.
    pub embed_cache: String,
}

impl Default for Paths {
    fn default() -> Self {
        Paths { questions: String::new(), out_dir: "geo-uq-out".into(), embed_cache: String::new() }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            pca_dim: DEFAULT_PCA_DIM,
            k_archetypes: DEFAULT_ARCHETYPES,
            aa_steps: DEFAULT_STEPS,
            n_samples: DEFAULT_N_SAMPLES,
            k_neighbors: DEFAULT_K_NEIGHBORS,
            epsilon: DEFAULT_EPSILON,
            val_fraction: DEFAULT_VAL_FRACTION,
            seeds: vec![0, 1, 2],
            temperatures: (0.0, 1.0),
            rouge_threshold: ROUGE_THRESHOLD,
            label_mode: LabelMode::Rouge,
            prompt_template: DEFAULT_PROMPT_TEMPLATE.into(),
            max_tokens: 256,
            require_mixed: false,
            fuse_extended: false,
            voronoi: true,
            standardize_terms: false,
            workers: 4,
            paths: Paths::default(),
            chat: ClientConfig { model_name: "gpt-4o-mini".into(), ..Default::default() },
            embed: ClientConfig { model_name: "text-embedding-3-small".into(), ..Default::default() },
            judge_client: ClientConfig { model_name: "gpt-4o-mini".into(), ..Default::default() },
            judge: JudgeConfig::default(),
        }
    }
}

/// Every configuration key with a short description, in file order.
pub const KEY_DOCS: &[(&str, &str)] = &[
    ("pca_dim", "PCA dimension d' of each response batch"),
    ("K", "number of archetypes (capped at min(K, n, d'+1))"),
    ("aa_steps", "archetypal analysis iterations"),
    ("n_samples", "sampled responses per question"),
    ("k_neighbors", "neighbours in the local density term"),
    ("epsilon", "additive floor inside log(volume + epsilon)"),
    ("val_fraction", "share of questions used to tune the detection threshold"),
    ("seeds", "one evaluation run per seed; --seed N gives [N, N+1, N+2]"),
    ("temperatures", "default and sampling temperature"),
    ("rouge_threshold", "ROUGE-L F1 below this labels a response hallucinated"),
    ("label_mode", "rouge or judge"),
    ("prompt_template", "generation prompt with a {question} placeholder"),
    ("max_tokens", "generation length cap"),
    ("require_mixed", "keep only questions whose samples have both labels"),
    ("fuse_extended", "add -H_L, D_A and Voronoi ranks to the suspicion score"),
    ("voronoi", "compute the Voronoi term"),
    ("standardize_terms", "z-score terms per question before the term analysis"),
    ("workers", "worker threads per stage"),
    ("paths.questions", "question corpus JSONL (empty: bundled corpus)"),
    ("paths.out_dir", "artifact directory"),
    ("paths.embed_cache", "embedding cache JSONL (empty: <out_dir>/embed_cache.jsonl)"),
    ("chat.*", "generation endpoint; key from GEOUQ_LLM_KEY, base from GEOUQ_LLM_BASE"),
    ("embed.*", "embedding endpoint; key from GEOUQ_EMBED_KEY, base from GEOUQ_EMBED_BASE"),
    ("judge_client.*", "judge endpoint; key and base as for chat"),
    ("judge.*", "judge template and verdict markers"),
];

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("pca_dim", self.pca_dim),
            ("K", self.k_archetypes),
            ("aa_steps", self.aa_steps),
            ("k_neighbors", self.k_neighbors),
            ("workers", self.workers),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(format!("{name} must be at least 1"));
        }
        if self.n_samples < 2 {
            return Err(format!("n_samples must be at least 2, got {}", self.n_samples));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction <= 1.0) {
            return Err(format!("val_fraction must be in (0, 1], got {}", self.val_fraction));
        }
        if self.seeds.is_empty() {
            return Err("seeds must not be empty".into());
        }
        let (t0, t1) = self.temperatures;
        if !(t0 >= 0.0 && t1 >= 0.0 && t0.is_finite() && t1.is_finite()) {
            return Err(format!("temperatures must be >= 0, got ({t0}, {t1})"));
        }
        if !(0.0..=1.0).contains(&self.rouge_threshold) {
            return Err(format!("rouge_threshold must be in [0, 1], got {}", self.rouge_threshold));
        }
        if !self.prompt_template.contains("{question}") {
            return Err("prompt_template needs a {question} placeholder".into());
        }
        for (name, c) in [("chat", &self.chat), ("embed", &self.embed), ("judge_client", &self.judge_client)] {
            c.validate().map_err(|e| format!("{name}: {e}"))?;
        }
        Ok(())
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(&self.paths.out_dir)
    }

    pub fn embed_cache(&self) -> PathBuf {
        if self.paths.embed_cache.is_empty() {
            self.out_dir().join(crate::pipeline::EMBED_CACHE_DEFAULT)
        } else {
            PathBuf::from(&self.paths.embed_cache)
        }
    }

    /// Reads endpoint URLs and keys from the environment.
    pub fn apply_env(&mut self) {
        self.chat = self.chat.clone().with_chat_env();
        self.judge_client = self.judge_client.clone().with_chat_env();
        self.embed = self.embed.clone().with_embed_env();
    }

    /// The defaults as TOML, one `key = value  # description` line per key.
    pub fn documented_defaults() -> String {
        let text = toml::to_string(&RunConfig::default()).expect("defaults serialize");
        let value: toml::Table = text.parse().expect("round trip");
        let mut out = String::from("Configuration keys (TOML, --config) and defaults:\n");
        for (key, doc) in KEY_DOCS {
            let shown = match key.split_once('.') {
                Some((table, "*")) => format!("[{table}] {}", table_keys(&value, table)),
                Some((table, field)) => format!("{key} = {}", value[table][field]),
                None => format!("{key} = {}", value[*key]),
            };
            out.push_str(&format!("  {shown}\n      {doc}\n"));
        }
        out
    }
}

fn table_keys(value: &toml::Table, table: &str) -> String {
    match value.get(table) {
        Some(toml::Value::Table(t)) => {
            t.iter().map(|(k, v)| format!("{k} = {}", short(v))).collect::<Vec<_>>().join(", ")
        }
        _ => String::new(),
    }
}

fn short(v: &toml::Value) -> String {
    let s = v.to_string();
    if s.chars().count() > 40 {
        let cut: String = s.chars().take(37).collect();
        format!("{cut}...\"")
    } else {
        s
    }
}
