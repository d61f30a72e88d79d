//! `hyperrec` command line.
//!
//! Every command reads the same TOML config (`--config`, optionally
//! adjusted with `--set section.key=value`) and works on the files named in
//! its `[paths]` section. Exit codes: 0 success, 1 usage or configuration
//! error, 2 data error, 3 runtime failure.

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::augment::{
    annotate_corpus, encode_items, encode_users, read_hyps, summarize_corpus, user_prompt_inputs, write_hyps,
    EncoderClient, LlmClient,
};
use crate::checkpoint::Checkpoint;
use crate::corpus::synthetic::{generate, SyntheticConfig};
use crate::corpus::{
    build_tag_graph, ingest, read_annotations, read_metadata, read_reviews, read_split_dir, read_user_summaries,
    split, write_annotations, write_metadata, write_reviews, write_split_dir, write_tag_map, write_user_summaries,
    SplitRatios,
};
use crate::error::{Error, Result};
use crate::eval::{
    group_members, longtail_groups, metric_rows, sample_indices, ward_linkage, write_linkage_csv, write_metrics_csv,
    DEFAULT_KS, LINKAGE_SAMPLE, LONGTAIL_GROUPS,
};
use crate::model::Role;
use crate::moe::MoEParams;
use crate::pipeline::{
    evaluate, init_from_moe, item_tangent_coords, random_init, run_phase1, run_phase2, variant_matrix,
    write_batch_log, write_epoch_log, Config, RunDir, Stage, TrainData, Variant,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "hyperrec", version, about = "Hyperbolic recommendation with LLM-derived tag hierarchies")]
pub struct Cli {
    /// TOML config file; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Config override, repeatable (e.g. `--set train.lr=0.01`).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Seed for splitting, sampling and initialization (sets train.seed).
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads; 1 gives bitwise-reproducible output.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rating filter, k-core pruning and 8:1:1 split of the reviews file.
    Prepare(PrepareArgs),
    /// Item summaries, tags and tag edges from the chat model.
    Annotate(AugmentArgs),
    /// One summary per user from their train items' annotations.
    SummarizeUsers(AugmentArgs),
    /// Semantic embeddings of item and user summaries (HYPS files).
    Encode(AugmentArgs),
    /// Phase 1 (meta) or the full pipeline of one variant.
    Train(TrainArgs),
    /// Test Recall@K / NDCG@K of a trained run.
    Eval(EvalArgs),
    /// Post-hoc analyses of a trained run.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Split directory (default: paths.data).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Write a synthetic corpus to paths.reviews and paths.metadata first.
    #[arg(long)]
    pub synthetic: bool,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Deterministic offline client.
    #[arg(long, conflicts_with = "endpoint")]
    pub mock: bool,
    /// HTTP endpoint (default: the config's endpoint).
    #[arg(long, value_name = "URL")]
    pub endpoint: Option<String>,
    /// Output file (encode: output directory).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PhaseArg {
    Meta,
    Full,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value = "full")]
    pub phase: PhaseArg,
    /// base | structural | semantic | hyperllm
    #[arg(long, default_value = "hyperllm", value_name = "NAME")]
    pub variant: Variant,
    /// Run directory (default: paths.runs/<variant>).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, default_value = "hyperllm", value_name = "NAME")]
    pub variant: Variant,
    /// Run directory (default: paths.runs/<variant>).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Cutoffs, comma separated.
    #[arg(long, value_name = "LIST", value_delimiter = ',', default_values_t = DEFAULT_KS.to_vec())]
    pub k: Vec<usize>,
    /// Also write per-group metrics over five interaction-count groups.
    #[arg(long)]
    pub longtail: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(subcommand)]
    pub what: Analysis,
}

#[derive(Debug, Subcommand)]
pub enum Analysis {
    /// Ward linkage over sampled item representations.
    Linkage(LinkageArgs),
}

#[derive(Debug, Args)]
pub struct LinkageArgs {
    #[arg(long, default_value = "hyperllm", value_name = "NAME")]
    pub variant: Variant,
    /// Run directory (default: paths.runs/<variant>).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => EXIT_DATA,
        Error::Shape(_)
        | Error::EmptyCorpus(_)
        | Error::Data(_)
        | Error::MissingSemanticRows { .. }
        | Error::Parse { .. }
        | Error::Checkpoint { .. }
        | Error::NoTrainingItems(_)
        | Error::Csv(_)
        | Error::Json(_) => EXIT_DATA,
        Error::Contract(_) | Error::Transport { .. } | Error::NonFiniteLoss { .. } | Error::Io { .. } => EXIT_RUNTIME,
    }
}

/// Parses `argv` (program name first), runs the command, prints
/// diagnostics to standard error and returns the exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let deterministic = cli.threads == Some(1);
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        // a second call in the same process keeps the first pool
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            log::debug!("rayon pool already initialized");
        }
    }
    match cli.command {
        Command::Prepare(a) => prepare(&cfg, &a),
        Command::Annotate(a) => annotate(&cfg, &a),
        Command::SummarizeUsers(a) => summarize_users(&cfg, &a),
        Command::Encode(a) => encode(&cfg, &a),
        Command::Train(a) => train(&cfg, &a, !deterministic),
        Command::Eval(a) => eval(&cfg, &a),
        Command::Analyze(AnalyzeArgs { what: Analysis::Linkage(a) }) => linkage(&cfg, &a),
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("train.seed={seed}"));
    }
    match &cli.config {
        Some(path) if !path.is_file() => Err(Error::Config(format!("config file {} not found", path.display()))),
        Some(path) => Config::load(path, &overrides),
        None => Config::from_toml("", &overrides),
    }
}

fn prepare(cfg: &Config, a: &PrepareArgs) -> Result<()> {
    let p = &cfg.paths;
    if a.synthetic {
        let corpus = generate(&SyntheticConfig { seed: cfg.train.seed, ..SyntheticConfig::default() });
        for f in [&p.reviews, &p.metadata] {
            if let Some(dir) = f.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
        }
        write_reviews(&p.reviews, &corpus.reviews)?;
        write_metadata(&p.metadata, &corpus.metadata)?;
        log::info!("synthetic corpus: {} reviews, {} items", corpus.reviews.len(), corpus.metadata.len());
    }
    let interactions = ingest(read_reviews(&p.reviews)?, cfg.corpus.min_rating, cfg.corpus.core)?;
    let ds = split(&interactions, SplitRatios::default(), cfg.train.seed)?;
    let out = a.out.as_deref().unwrap_or(&p.data);
    write_split_dir(out, &ds)?;
    eprintln!(
        "prepared {} users, {} items: {} train / {} val / {} test -> {}",
        ds.num_users(),
        ds.num_items(),
        ds.train.len(),
        ds.val.len(),
        ds.test.len(),
        out.display()
    );
    Ok(())
}

fn llm_client(cfg: &Config, a: &AugmentArgs) -> Result<LlmClient> {
    if a.mock {
        return Ok(LlmClient::mock());
    }
    let url = a.endpoint.clone().unwrap_or_else(|| cfg.llm.endpoint.clone());
    if url.is_empty() {
        return Err(Error::Config("no chat endpoint: pass --endpoint URL or --mock".into()));
    }
    let mut c = LlmClient::http(&url, cfg.llm.model.clone(), Duration::from_secs_f64(cfg.llm.timeout_s));
    c.max_retries = cfg.llm.max_retries;
    c.in_flight = cfg.llm.in_flight;
    c.user_item_cap = cfg.llm.user_item_cap;
    Ok(c)
}

fn encoder_client(cfg: &Config, a: &AugmentArgs) -> Result<EncoderClient> {
    let mut c = if a.mock {
        EncoderClient::mock(cfg.encoder.mock_seed, cfg.moe.semantic_dim)?
    } else {
        let url = a.endpoint.clone().unwrap_or_else(|| cfg.encoder.endpoint.clone());
        if url.is_empty() {
            return Err(Error::Config("no embedding endpoint: pass --endpoint URL or --mock".into()));
        }
        EncoderClient::http(&url, &cfg.encoder.model, cfg.moe.semantic_dim, Duration::from_secs_f64(cfg.encoder.timeout_s))?
    };
    c.batch_size = cfg.encoder.batch_size;
    Ok(c)
}

fn annotate(cfg: &Config, a: &AugmentArgs) -> Result<()> {
    let client = llm_client(cfg, a)?;
    let ds = read_split_dir(&cfg.paths.data)?;
    let metas = read_metadata(&cfg.paths.metadata)?;
    let (annotations, issues) = annotate_corpus(&client, &metas, &ds)?;
    for i in &issues {
        log::warn!("item {}: {}", i.item_id, i.reason);
    }
    let out = a.out.as_deref().unwrap_or(&cfg.paths.annotations);
    write_annotations(out, &annotations)?;
    let (graph, dropped) = build_tag_graph(&annotations, &ds.item_index());
    for i in &dropped {
        log::warn!("item {}: {}", i.item_id, i.reason);
    }
    write_tag_map(&cfg.paths.data.join("tags.tsv"), &graph)?;
    eprintln!(
        "annotated {} of {} items ({} tags, {} issues) -> {}",
        annotations.len(),
        ds.num_items(),
        graph.num_tags(),
        issues.len() + dropped.len(),
        out.display()
    );
    Ok(())
}

fn summarize_users(cfg: &Config, a: &AugmentArgs) -> Result<()> {
    let client = llm_client(cfg, a)?;
    let ds = read_split_dir(&cfg.paths.data)?;
    let annotations = read_annotations(&cfg.paths.annotations)?;
    let (summaries, issues) = summarize_corpus(&client, &user_prompt_inputs(&ds, &annotations))?;
    for i in &issues {
        log::warn!("user {}: {}", i.item_id, i.reason);
    }
    let out = a.out.as_deref().unwrap_or(&cfg.paths.user_summaries);
    write_user_summaries(out, &summaries)?;
    eprintln!("summarized {} users ({} fallbacks) -> {}", summaries.len(), issues.len(), out.display());
    Ok(())
}

fn encode(cfg: &Config, a: &AugmentArgs) -> Result<()> {
    let enc = encoder_client(cfg, a)?;
    let ds = read_split_dir(&cfg.paths.data)?;
    let annotations = read_annotations(&cfg.paths.annotations)?;
    let metas = read_metadata(&cfg.paths.metadata)?;
    let summaries = read_user_summaries(&cfg.paths.user_summaries)?;
    let (item_path, user_path) = match &a.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            (dir.join("items.hyps"), dir.join("users.hyps"))
        }
        None => (cfg.paths.item_semantic.clone(), cfg.paths.user_semantic.clone()),
    };
    let items = encode_items(&enc, &ds, &annotations, &metas)?;
    write_hyps(&item_path, &items)?;
    let users = encode_users(&enc, &summaries)?;
    write_hyps(&user_path, &users)?;
    eprintln!(
        "encoded {} items, {} users at dim {} -> {}, {}",
        items.rows(),
        users.rows(),
        enc.dim,
        item_path.display(),
        user_path.display()
    );
    Ok(())
}

fn run_dir_path(cfg: &Config, out: &Option<PathBuf>, variant: Variant) -> PathBuf {
    out.clone().unwrap_or_else(|| cfg.paths.runs.join(variant.as_str()))
}

/// Split plus whatever the stages of `variant` read.
fn load_train_data(cfg: &Config, stages: &[Stage]) -> Result<TrainData> {
    let ds = read_split_dir(&cfg.paths.data)?;
    let mut data = TrainData::new(ds);
    if stages.iter().any(|s| matches!(s, Stage::TagLoss | Stage::Contrastive)) {
        let annotations = read_annotations(&cfg.paths.annotations)?;
        let (graph, _) = build_tag_graph(&annotations, &data.split.item_index());
        data = data.with_tags(graph)?;
    }
    if stages.contains(&Stage::MetaPhase) {
        let users = read_hyps(&cfg.paths.user_semantic, Role::User)?;
        let items = read_hyps(&cfg.paths.item_semantic, Role::Item)?;
        data = data.with_semantics(users, items)?;
    }
    Ok(data)
}

fn train(cfg: &Config, a: &TrainArgs, timed: bool) -> Result<()> {
    let plan = variant_matrix(a.variant, &cfg.train);
    let stages: Vec<Stage> = match a.phase {
        PhaseArg::Meta => vec![Stage::MetaPhase],
        PhaseArg::Full => plan.stages.iter().copied().collect(),
    };
    let data = load_train_data(cfg, &stages)?;
    let run = RunDir::create(run_dir_path(cfg, &a.out, a.variant))?;
    run.write_config(cfg)?;

    // the adapter always goes through its f32 checkpoint so fresh and
    // reused runs continue from identical values
    let meta_config = run.root().join("checkpoints/meta.config.toml");
    let meta = |run: &RunDir| -> Result<MoEParams> {
        let p1 = run_phase1(cfg, &data, timed)?;
        let ckpt = p1.moe.to_checkpoint()?;
        ckpt.save(run.meta_checkpoint())?;
        std::fs::write(&meta_config, cfg.to_toml()).map_err(|e| Error::io(&meta_config, e))?;
        write_epoch_log(&run.log("meta_epochs.csv"), &p1.log)?;
        eprintln!(
            "meta phase: val recall@20 {:.4} -> {:.4} (best epoch {})",
            p1.initial_val, p1.best_val, p1.best_epoch
        );
        MoEParams::from_checkpoint(&ckpt)
    };
    if a.phase == PhaseArg::Meta {
        meta(&run)?;
        return Ok(());
    }
    let init = if plan.has(Stage::MetaPhase) {
        let same_config = std::fs::read_to_string(&meta_config).is_ok_and(|t| t == cfg.to_toml());
        let moe = if same_config && run.meta_checkpoint().is_file() {
            log::info!("reusing {}", run.meta_checkpoint().display());
            MoEParams::from_checkpoint(&Checkpoint::load(run.meta_checkpoint())?)?
        } else {
            meta(&run)?
        };
        init_from_moe(&moe, &data, cfg)?
    } else {
        random_init(&data, cfg)
    };
    let out = run_phase2(cfg, &plan, &data, init, timed)?;
    let st = &out.state;
    run.save_tables(&st.users, &st.items, st.tags.as_ref())?;
    write_epoch_log(&run.log("epochs.csv"), &out.log)?;
    write_batch_log(&run.log("batches.csv"), &out.batches)?;
    eprintln!(
        "{}: val recall@20 {:.4} -> {:.4} (best epoch {} of {}) -> {}",
        a.variant,
        out.initial_val,
        st.best_metric,
        st.best_epoch,
        st.epoch,
        run.root().display()
    );
    Ok(())
}

fn open_trained(cfg: &Config, out: &Option<PathBuf>, variant: Variant) -> Result<RunDir> {
    let run = RunDir::open(run_dir_path(cfg, out, variant));
    if !run.model_checkpoint().is_file() {
        return Err(Error::Data(format!("no checkpoint found at {}", run.model_checkpoint().display())));
    }
    Ok(run)
}

fn eval(cfg: &Config, a: &EvalArgs) -> Result<()> {
    let run = open_trained(cfg, &a.out, a.variant)?;
    if a.k.is_empty() || a.k.contains(&0) {
        return Err(Error::Config("--k needs positive cutoffs".into()));
    }
    let data = TrainData::new(read_split_dir(&cfg.paths.data)?);
    let (users, items) = run.load_tables()?;
    let kmax = *a.k.iter().max().unwrap();
    let ranked = evaluate(&users, &items, &data, cfg, kmax)?;
    let rows = metric_rows(a.variant.as_str(), &ranked, &data.test_sets, &a.k, None);
    write_metrics_csv(&run.root().join("metrics.csv"), &rows)?;
    for r in &rows {
        println!("{},{},{:.6},{:.6},", r.variant, r.k, r.recall, r.ndcg);
    }
    if a.longtail {
        let counts: Vec<usize> = data.train_sets.iter().map(Vec::len).collect();
        let groups = group_members(&longtail_groups(&counts, LONGTAIL_GROUPS)?, LONGTAIL_GROUPS);
        let rows = metric_rows(a.variant.as_str(), &ranked, &data.test_sets, &a.k, Some(&groups));
        write_metrics_csv(&run.root().join("metrics_longtail.csv"), &rows)?;
        for r in rows.iter().filter(|r| r.group.is_some()) {
            println!("{},{},{:.6},{:.6},{}", r.variant, r.k, r.recall, r.ndcg, r.group.unwrap());
        }
    }
    Ok(())
}

fn linkage(cfg: &Config, a: &LinkageArgs) -> Result<()> {
    let run = open_trained(cfg, &a.out, a.variant)?;
    let data = TrainData::new(read_split_dir(&cfg.paths.data)?);
    let (users, items) = run.load_tables()?;
    let coords = item_tangent_coords(&users, &items, &data, cfg);
    let d = cfg.geometry.dim;
    let picked = sample_indices(data.num_items(), LINKAGE_SAMPLE, cfg.train.seed);
    let points: Vec<f64> = picked.iter().flat_map(|&i| coords[i * d..(i + 1) * d].iter().copied()).collect();
    let rows = ward_linkage(&points, d)?;
    let ids: Vec<String> = picked.iter().map(|&i| data.split.items[i].clone()).collect();
    let path = run.root().join("linkage.csv");
    write_linkage_csv(&path, &rows, &ids)?;
    eprintln!("linkage over {} items -> {}", ids.len(), path.display());
    Ok(())
}

/// Long flags of every subcommand, for help-coverage checks.
pub fn documented_flags() -> Vec<(String, Vec<String>)> {
    use clap::CommandFactory;
    fn walk(cmd: &clap::Command, prefix: &str, out: &mut Vec<(String, Vec<String>)>) {
        let name = if prefix.is_empty() { cmd.get_name().to_string() } else { format!("{prefix} {}", cmd.get_name()) };
        let flags = cmd.get_arguments().filter_map(|a| a.get_long().map(String::from)).collect();
        out.push((name.clone(), flags));
        for sub in cmd.get_subcommands() {
            walk(sub, &name, out);
        }
    }
    let mut out = Vec::new();
    walk(&Cli::command(), "", &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn parser_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn help_lists_every_flag() {
        let mut root = Cli::command();
        root.build();
        let mut stack = vec![root];
        while let Some(mut cmd) = stack.pop() {
            let help = cmd.render_long_help().to_string();
            for arg in cmd.get_arguments() {
                if let Some(long) = arg.get_long() {
                    assert!(help.contains(&format!("--{long}")), "{} help lacks --{long}", cmd.get_name());
                }
            }
            stack.extend(cmd.get_subcommands().cloned());
        }
    }

    #[test]
    fn spec_flags_exist() {
        let all: Vec<String> = documented_flags().into_iter().flat_map(|(_, f)| f).collect();
        for f in ["config", "seed", "threads", "mock", "endpoint", "variant", "phase", "out", "k"] {
            assert!(all.iter().any(|x| x == f), "missing --{f}");
        }
    }

    #[test]
    fn usage_errors() {
        assert_eq!(dispatch(["hyperrec", "frobnicate"]), EXIT_USAGE);
        assert_eq!(dispatch(["hyperrec", "train", "--variant", "nope"]), EXIT_USAGE);
        assert_eq!(dispatch(["hyperrec", "--config", "/nonexistent/x.toml", "prepare"]), EXIT_USAGE);
        assert_eq!(dispatch(["hyperrec", "--set", "train.bogus=1", "prepare"]), EXIT_USAGE);
        assert_eq!(dispatch(["hyperrec", "--help"]), EXIT_OK);
    }

    #[test]
    fn eval_without_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let runs = format!("paths.runs=\"{}\"", dir.path().display());
        assert_eq!(dispatch(["hyperrec", "--set", runs.as_str(), "eval", "--variant", "base"]), EXIT_DATA);
    }
}
