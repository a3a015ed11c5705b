use std::path::PathBuf;

use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use geouq_cli::{run_stages, CliError, Context, RunConfig, Stage};
use geouq_core::evaluation::SubsetName;

#[derive(Parser)]
#[command(name = "geo-uq", version, about = "Geometric uncertainty scoring of sampled LLM responses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration file; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replaces `seeds` with [N, N+1, N+2].
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Use the offline mock chat, judge and embedding models.
    #[arg(long, global = true)]
    mock: bool,
    /// Overrides `paths.out_dir`.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Restrict eval and analyze-terms to one hallucination-rate subset.
    #[arg(long, global = true, value_parser = subset_parser())]
    subset: Option<SubsetName>,
}

fn subset_parser() -> impl TypedValueParser<Value = SubsetName> {
    PossibleValuesParser::new(SubsetName::ALL.map(SubsetName::as_str))
        .map(|s| s.parse::<SubsetName>().expect("listed subset"))
}

#[derive(Subcommand)]
enum Command {
    /// Sample and label responses for every question.
    Curate,
    /// Embed default and sampled responses.
    Embed,
    /// L2-normalize and PCA-reduce each batch.
    Reduce,
    /// Fit archetypes per batch.
    Fit,
    /// Geometric Volume score per question.
    ScoreGlobal,
    /// Suspicion terms and Best-of-N selection per question.
    ScoreLocal,
    /// Tune the detection threshold, once per seed.
    Tune,
    /// Detection metrics and hallucination-rate reduction.
    Eval,
    /// Mann-Whitney tests per term and subset.
    AnalyzeTerms,
    /// Run a range of stages end to end.
    Run {
        #[arg(long, value_enum)]
        stage_from: Option<Stage>,
        #[arg(long, value_enum)]
        stage_to: Option<Stage>,
    },
}

impl Command {
    fn stages(&self) -> Vec<Stage> {
        match self {
            Command::Curate => vec![Stage::Curate],
            Command::Embed => vec![Stage::Embed],
            Command::Reduce => vec![Stage::Reduce],
            Command::Fit => vec![Stage::Fit],
            Command::ScoreGlobal => vec![Stage::ScoreGlobal],
            Command::ScoreLocal => vec![Stage::ScoreLocal],
            Command::Tune => vec![Stage::Tune],
            Command::Eval => vec![Stage::Eval],
            Command::AnalyzeTerms => vec![Stage::AnalyzeTerms],
            Command::Run { stage_from, stage_to } => Stage::range(*stage_from, *stage_to),
        }
    }
}

fn build_context(cli: &Cli) -> Result<Context, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed, seed.wrapping_add(1), seed.wrapping_add(2)];
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.paths.out_dir = dir.to_string_lossy().into_owned();
    }
    cfg.validate().map_err(CliError::Config)?;
    cfg.apply_env();
    Ok(Context { cfg, mock: cli.mock, subset: cli.subset })
}

fn run(cli: Cli) -> Result<(), CliError> {
    let stages = cli.command.stages();
    if stages.is_empty() {
        return Err(CliError::Config("--stage-from comes after --stage-to".into()));
    }
    let ctx = build_context(&cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.cfg.workers)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    pool.install(|| run_stages(&ctx, &stages))
}

fn main() {
    env_logger::Builder::from_env(
        env_logger::Env::default().default_filter_or("warn,geo_uq=info,geouq_cli=info,geouq_llm=info,geouq_core=info"),
    )
    .format_timestamp(None)
    .init();
    let matches = Cli::command().after_help(RunConfig::documented_defaults()).get_matches();
    let cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    if let Err(e) = run(cli) {
        eprintln!("geo-uq: {e}");
        std::process::exit(e.exit_code());
    }
}
