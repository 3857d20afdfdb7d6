//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chemrl_core::env::{rollout, validity_fraction, PromptSpec};
use chemrl_core::history::RunHistory;
use chemrl_core::metrics::{compute_bundle, suite_totals, summarize_runs, MetricBundle, MetricConfig, METRIC_NAMES};
use chemrl_core::policy::{load_checkpoint, save_checkpoint, PolicyParams};
use chemrl_core::pretrain::{load_corpus, pretrain_run, training_log_csv, PretrainConfig};
use chemrl_core::rl::{train_loop, TrainSetup};
use chemrl_core::scoring::{ReferenceStats, Scorer};
use chemrl_core::vocab::Vocabulary;

use crate::config::{Config, ConfigError};
use crate::tasks::{algo_config, scoring_task};

/// Configuration failures exit with code 2, runtime failures with code 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> CliError {
        CliError::Config(e.0)
    }
}

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> CliError {
        CliError::Runtime(e.to_string())
    }
}

fn runtime(msg: String) -> CliError {
    CliError::Runtime(msg)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| runtime(format!("{}: {e}", parent.display())))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| runtime(format!("{}: {e}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    Ok(())
}

/// Marker dropped while a run directory is being produced; removed on
/// success so interrupted runs are recognizable.
struct IncompleteMarker(PathBuf);

impl IncompleteMarker {
    fn place(dir: &Path) -> Result<IncompleteMarker, CliError> {
        fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
        let path = dir.join("_INCOMPLETE");
        fs::write(&path, b"run in progress\n")
            .map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        Ok(IncompleteMarker(path))
    }

    fn finish(self) -> Result<(), CliError> {
        fs::remove_file(&self.0).map_err(|e| runtime(format!("{}: {e}", self.0.display())))?;
        Ok(())
    }
}

fn out_dir(config: &Config) -> Result<PathBuf, ConfigError> {
    Ok(PathBuf::from(config.require("run.out")?))
}

fn seeds(config: &Config) -> Result<Vec<u64>, ConfigError> {
    let list = config.list("run.seeds")?;
    list.iter()
        .map(|s| {
            s.parse()
                .map_err(|_| ConfigError(format!("run.seeds: bad seed `{s}`")))
        })
        .collect()
}

fn pretrain_config(config: &Config) -> Result<PretrainConfig, ConfigError> {
    let d = PretrainConfig::default();
    Ok(PretrainConfig {
        embed_dim: config.parse("model.embed_dim", d.embed_dim)?,
        hidden_dim: config.parse("model.hidden_dim", d.hidden_dim)?,
        layers: config.parse("model.layers", d.layers)?,
        epochs: config.parse("pretrain.epochs", d.epochs)?,
        batch_size: config.parse("pretrain.batch_size", d.batch_size)?,
        learning_rate: config.parse("pretrain.lr", d.learning_rate)?,
        max_len: config.parse("pretrain.max_len", d.max_len)?,
        valid_fraction: config.parse("pretrain.valid_fraction", d.valid_fraction)?,
        grad_clip: {
            let clip: f64 = config.parse("pretrain.grad_clip", 5.0)?;
            (clip > 0.0).then_some(clip)
        },
        validity_samples: config.parse("pretrain.validity_samples", d.validity_samples)?,
        seed: 0, // per-seed runs override
    })
}

pub fn cmd_pretrain(config: &Config) -> Result<(), CliError> {
    let corpus_path = config.path("pretrain.corpus")?;
    let out = out_dir(config)?;
    let mut cfg = pretrain_config(config)?;
    let all_seeds = seeds(config)?;

    let corpus_text =
        fs::read_to_string(&corpus_path).map_err(|e| runtime(format!("corpus: {e}")))?;
    for seed in all_seeds {
        cfg.seed = seed;
        let marker = IncompleteMarker::place(&out.join(format!("seed{seed}")))?;
        let dir = out.join(format!("seed{seed}"));
        let corpus = load_corpus(&corpus_path, None, cfg.max_len, cfg.valid_fraction, seed)?;
        eprintln_quiet(
            config,
            &format!(
                "pretraining on {} sequences ({} skipped), seed {seed}",
                corpus.len(),
                corpus.skipped
            ),
        );
        let output = pretrain_run(&corpus, &cfg);
        let mut meta = BTreeMap::new();
        meta.insert("seed".to_string(), seed.to_string());
        meta.insert("best_epoch".to_string(), output.best_epoch.to_string());
        meta.insert("corpus".to_string(), corpus_path.display().to_string());
        save_checkpoint(&dir.join("prior.ckpt"), &output.params, &output.vocab, &meta)?;
        write_atomic(
            &dir.join("pretrain_log.csv"),
            training_log_csv(&output.log).as_bytes(),
        )?;
        output
            .vocab
            .save(&dir.join("vocabulary.txt"))
            .map_err(|e| runtime(format!("vocabulary: {e}")))?;
        if let Some(stats) = ReferenceStats::from_corpus(corpus_text.lines()) {
            write_atomic(&dir.join("reference_stats.json"), stats.to_json().as_bytes())?;
        }
        marker.finish()?;
        eprintln_quiet(
            config,
            &format!("wrote {}", dir.join("prior.ckpt").display()),
        );
    }
    Ok(())
}

fn eprintln_quiet(config: &Config, msg: &str) {
    if config.get("run.quiet") != Some("true") {
        eprintln!("{msg}");
    }
}

fn load_prior(config: &Config) -> Result<(PolicyParams, Vocabulary), CliError> {
    let path = config.path("run.prior")?;
    let (params, vocab, _) = load_checkpoint(&path)?;
    Ok((params, vocab))
}

fn metric_config(config: &Config) -> Result<MetricConfig, ConfigError> {
    let d = MetricConfig::default();
    Ok(MetricConfig {
        k: config.parse("metrics.k", d.k)?,
        report_every: config.parse("run.report_every", d.report_every)?,
        diversity_threshold: config.parse("metrics.diversity_threshold", d.diversity_threshold)?,
        sediv_threshold: config.parse("metrics.sediv_threshold", d.sediv_threshold)?,
        sediv_sample: config.parse("metrics.sediv_sample", d.sediv_sample)?,
    })
}

fn reference_stats(config: &Config) -> Result<Option<ReferenceStats>, CliError> {
    match config.get("run.refstats") {
        None => Ok(None),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| runtime(format!("run.refstats `{path}`: {e}")))?;
            Ok(Some(ReferenceStats::from_json(&text).map_err(CliError::Runtime)?))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_one_cell(
    prior: &PolicyParams,
    vocab: &Vocabulary,
    config: &Config,
    algo_name: &str,
    task_prefix: &str,
    seed: u64,
    dir: &Path,
    metric_cfg: &MetricConfig,
    stats: Option<&ReferenceStats>,
) -> Result<MetricBundle, CliError> {
    let cfg = algo_config(config, algo_name)?;
    let task = scoring_task(config, task_prefix)?;
    let marker = IncompleteMarker::place(dir)?;
    let mut scorer = Scorer::new(task)?;
    let setup = TrainSetup {
        prior,
        vocab,
        prompt: PromptSpec::DeNovo,
        seed,
        label: Some(algo_name.to_string()),
    };
    let artifacts = train_loop(&setup, &mut scorer, &cfg)?;
    write_atomic(&dir.join("history.csv"), artifacts.history.to_csv().as_bytes())?;
    let mut meta = BTreeMap::new();
    meta.insert("algorithm".to_string(), algo_name.to_string());
    meta.insert("seed".to_string(), seed.to_string());
    save_checkpoint(&dir.join("agent.ckpt"), &artifacts.params, vocab, &meta)?;
    let bundle = compute_bundle(&artifacts.history, metric_cfg, stats)?;
    write_atomic(
        &dir.join("metrics.json"),
        serde_json::to_string_pretty(&bundle)
            .expect("bundle serializes")
            .as_bytes(),
    )?;
    marker.finish()?;
    Ok(bundle)
}

pub fn cmd_optimize(config: &Config) -> Result<(), CliError> {
    let out = out_dir(config)?;
    let algo_name = config.require("algo.name")?.to_string();
    // fail fast on bad algorithm/task configuration before loading anything
    algo_config(config, &algo_name)?;
    scoring_task(config, "task")?;
    let all_seeds = seeds(config)?;
    let metric_cfg = metric_config(config)?;
    let stats = reference_stats(config)?;
    let (prior, vocab) = load_prior(config)?;
    for seed in all_seeds {
        let dir = out.join(&algo_name).join(format!("seed{seed}"));
        let bundle = run_one_cell(
            &prior,
            &vocab,
            config,
            &algo_name,
            "task",
            seed,
            &dir,
            &metric_cfg,
            stats.as_ref(),
        )?;
        eprintln_quiet(
            config,
            &format!(
                "{algo_name} seed {seed}: top-{} avg {:?}, AUC {:?} -> {}",
                metric_cfg.k,
                bundle.topk_avg,
                bundle.topk_auc,
                dir.display()
            ),
        );
    }
    Ok(())
}

pub fn cmd_benchmark(config: &Config) -> Result<(), CliError> {
    let out = out_dir(config)?;
    let algos = config.list("suite.algos")?;
    let tasks = config.list("suite.tasks")?;
    let all_seeds = seeds(config)?;
    let metric_cfg = metric_config(config)?;
    // validate the whole grid up front
    for algo in &algos {
        algo_config(config, algo)?;
    }
    for task in &tasks {
        scoring_task(config, &format!("suite.task.{task}"))?;
    }
    let stats = reference_stats(config)?;
    let (prior, vocab) = load_prior(config)?;

    let mut failures: Vec<String> = Vec::new();
    // per algorithm: task -> seed bundles
    let mut per_algo: BTreeMap<String, BTreeMap<String, Vec<MetricBundle>>> = BTreeMap::new();
    for task in &tasks {
        for algo in &algos {
            for &seed in &all_seeds {
                let dir = out.join(task).join(algo).join(format!("seed{seed}"));
                match run_one_cell(
                    &prior,
                    &vocab,
                    config,
                    algo,
                    &format!("suite.task.{task}"),
                    seed,
                    &dir,
                    &metric_cfg,
                    stats.as_ref(),
                ) {
                    Ok(bundle) => {
                        per_algo
                            .entry(algo.clone())
                            .or_default()
                            .entry(task.clone())
                            .or_default()
                            .push(bundle);
                        eprintln_quiet(config, &format!("cell {task}/{algo}/seed{seed}: done"));
                    }
                    Err(e @ CliError::Config(_)) => return Err(e),
                    Err(CliError::Runtime(msg)) => {
                        failures.push(format!("{task}/{algo}/seed{seed}: {msg}"));
                        eprintln_quiet(
                            config,
                            &format!("cell {task}/{algo}/seed{seed}: FAILED ({msg})"),
                        );
                    }
                }
            }
        }
    }

    // aggregate
    let mut report = serde_json::Map::new();
    report.insert("version".into(), serde_json::json!(1));
    report.insert("failed_cells".into(), serde_json::json!(failures));
    let mut algos_json = serde_json::Map::new();
    let mut csv = String::from("metric");
    for algo in &algos {
        csv.push_str(&format!(",{algo}_mean,{algo}_std"));
    }
    csv.push('\n');
    let mut totals_by_algo = BTreeMap::new();
    for algo in &algos {
        let empty = BTreeMap::new();
        let per_task_bundles = per_algo.get(algo).unwrap_or(&empty);
        let per_task = summarize_runs(per_task_bundles);
        let totals = suite_totals(&per_task);
        algos_json.insert(
            algo.clone(),
            serde_json::json!({
                "seeds": per_task_bundles,
                "tasks": per_task,
                "suite": totals,
            }),
        );
        totals_by_algo.insert(algo.clone(), totals);
    }
    for metric in METRIC_NAMES {
        csv.push_str(metric);
        for algo in &algos {
            match totals_by_algo[algo.as_str()].get(metric).and_then(|a| *a) {
                Some(agg) => csv.push_str(&format!(",{},{}", agg.mean, agg.std)),
                None => csv.push_str(",,"),
            }
        }
        csv.push('\n');
    }
    report.insert("algorithms".into(), serde_json::Value::Object(algos_json));
    write_atomic(
        &out.join("suite_report.json"),
        serde_json::to_string_pretty(&serde_json::Value::Object(report))
            .expect("report serializes")
            .as_bytes(),
    )?;
    write_atomic(&out.join("suite_report.csv"), csv.as_bytes())?;
    eprintln_quiet(
        config,
        &format!(
            "suite complete: {} cells failed, report at {}",
            failures.len(),
            out.join("suite_report.json").display()
        ),
    );
    Ok(())
}

pub fn cmd_evaluate(config: &Config, histories: &[PathBuf]) -> Result<(), CliError> {
    if histories.is_empty() {
        return Err(CliError::Config(
            "evaluate needs at least one history CSV".into(),
        ));
    }
    let metric_cfg = metric_config(config)?;
    let stats = reference_stats(config)?;
    let mut results = serde_json::Map::new();
    for path in histories {
        let text =
            fs::read_to_string(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        let history = RunHistory::from_csv(&text)?;
        let bundle = compute_bundle(&history, &metric_cfg, stats.as_ref())?;
        results.insert(
            path.display().to_string(),
            serde_json::json!({
                "algorithm": history.algorithm,
                "seed": history.seed,
                "metrics": bundle,
            }),
        );
    }
    let text = serde_json::to_string_pretty(&serde_json::Value::Object(results))
        .expect("results serialize");
    match config.get("run.out") {
        Some(dir) => write_atomic(&Path::new(dir).join("evaluation.json"), text.as_bytes())?,
        None => println!("{text}"),
    }
    Ok(())
}

pub struct GenerateArgs {
    pub checkpoint: PathBuf,
    pub count: usize,
    pub max_len: usize,
    pub seed: u64,
    pub prefix: Option<String>,
    pub scaffold: Option<String>,
    pub prompts: Vec<String>,
    pub report_validity: bool,
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<(), CliError> {
    let (params, vocab, _) = load_checkpoint(&args.checkpoint)?;
    let prompt = match (&args.prefix, &args.scaffold) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config(
                "--prefix and --scaffold are mutually exclusive".into(),
            ))
        }
        (Some(prefix), None) => PromptSpec::prefix_from_smiles(prefix)
            .map_err(|e| CliError::Config(e.to_string()))?,
        (None, Some(template)) => PromptSpec::scaffold(template, args.prompts.clone())
            .map_err(|e| CliError::Config(e.to_string()))?,
        (None, None) => PromptSpec::DeNovo,
    };
    let trajs = rollout(
        &params,
        None,
        &vocab,
        args.count,
        args.max_len,
        args.seed,
        &prompt,
    )?;
    let mut stdout = String::new();
    for t in &trajs {
        stdout.push_str(&t.smiles);
        stdout.push('\n');
    }
    print!("{stdout}");
    if args.report_validity {
        eprintln!("valid fraction: {:.4}", validity_fraction(&trajs));
    }
    Ok(())
}
