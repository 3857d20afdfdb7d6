//! Construction of scoring tasks and algorithm configs from configuration
//! keys.

use chemrl_core::rl::{Algorithm, AlgoConfig};
use chemrl_core::scoring::{
    DiversityFilterConfig, Oracle, ScoringTask, DEFAULT_TIMEOUT_SECS,
};

use crate::config::{Config, ConfigError};

pub fn algorithm_from_name(name: &str) -> Result<(Algorithm, AlgoConfig), ConfigError> {
    let (algorithm, cfg) = match name {
        "reinforce" => (Algorithm::Reinforce, AlgoConfig::preset(Algorithm::Reinforce)),
        "reinvent" => (Algorithm::Reinvent, AlgoConfig::preset(Algorithm::Reinvent)),
        "reinvent-molopt" => (Algorithm::Reinvent, AlgoConfig::reinvent_molopt()),
        "ahc" => (Algorithm::Ahc, AlgoConfig::preset(Algorithm::Ahc)),
        "a2c" => (Algorithm::A2c, AlgoConfig::preset(Algorithm::A2c)),
        "ppo" => (Algorithm::Ppo, AlgoConfig::preset(Algorithm::Ppo)),
        "ppod" => (Algorithm::Ppod, AlgoConfig::preset(Algorithm::Ppod)),
        other => {
            return Err(ConfigError(format!(
                "unknown algorithm `{other}` (expected reinforce, reinvent, \
                 reinvent-molopt, ahc, a2c, ppo, or ppod)"
            )))
        }
    };
    Ok((algorithm, cfg))
}

/// Algorithm config from `algo.*` keys over the named preset.
pub fn algo_config(config: &Config, name: &str) -> Result<AlgoConfig, ConfigError> {
    let (_, mut cfg) = algorithm_from_name(name)?;
    cfg.sigma = config.parse("algo.sigma", cfg.sigma)?;
    cfg.topk_fraction = config.parse("algo.topk", cfg.topk_fraction)?;
    cfg.penalty_kappa = config.parse("algo.kappa", cfg.penalty_kappa)?;
    cfg.kl_beta = config.parse("algo.beta", cfg.kl_beta)?;
    cfg.ppo_clip = config.parse("algo.clip", cfg.ppo_clip)?;
    cfg.ppo_epochs = config.parse("algo.ppo_epochs", cfg.ppo_epochs)?;
    cfg.ppo_minibatches = config.parse("algo.ppo_minibatches", cfg.ppo_minibatches)?;
    cfg.replay = config.parse_bool("algo.replay", cfg.replay)?;
    cfg.replay_sample = config.parse("algo.replay_sample", cfg.replay_sample)?;
    cfg.replay_capacity = config.parse("algo.replay_capacity", cfg.replay_capacity)?;
    cfg.entropy_coef = config.parse("algo.entropy_coef", cfg.entropy_coef)?;
    cfg.value_coef = config.parse("algo.value_coef", cfg.value_coef)?;
    cfg.baseline = config.parse_bool("algo.baseline", cfg.baseline)?;
    cfg.learning_rate = config.parse("algo.lr", cfg.learning_rate)?;
    cfg.batch_size = config.parse("algo.batch_size", cfg.batch_size)?;
    cfg.max_len = config.parse("algo.max_len", cfg.max_len)?;
    let clip: f64 = config.parse("algo.grad_clip", cfg.grad_clip.unwrap_or(0.0))?;
    cfg.grad_clip = (clip > 0.0).then_some(clip);
    cfg.budget = config.parse("run.budget", cfg.budget)?;
    cfg.validate().map_err(|e| ConfigError(e.to_string()))?;
    Ok(cfg)
}

fn oracle_at(config: &Config, prefix: &str) -> Result<Oracle, ConfigError> {
    let key = |suffix: &str| format!("{prefix}.{suffix}");
    let kind = config.require(&key("kind"))?;
    Ok(match kind {
        "similarity" => Oracle::SimilarityToTarget {
            target: config.require(&key("target"))?.to_string(),
        },
        "mw_target" => Oracle::MolWeightTarget {
            target_da: config.parse_required(&key("target_mw"))?,
            width_da: config.parse(&key("width"), 50.0)?,
        },
        "validity" => Oracle::ValidityOnly,
        "token_pattern" => Oracle::TokenPattern {
            pattern: config.require(&key("pattern"))?.to_string(),
        },
        "composite" => {
            let parts = config.list(&key("parts"))?;
            let mut oracle_parts = Vec::new();
            for part in &parts {
                let sub = oracle_at(config, &format!("{prefix}.part.{part}"))?;
                if matches!(sub, Oracle::ExternalProcess { .. }) {
                    return Err(ConfigError(format!(
                        "{prefix}: external scorers cannot be composite parts"
                    )));
                }
                let weight: f64 = config.parse(&format!("{prefix}.part.{part}.weight"), 1.0)?;
                oracle_parts.push((sub, weight));
            }
            Oracle::Composite {
                parts: oracle_parts,
                geometric: config.parse_bool(&key("geometric"), false)?,
            }
        }
        "external" => Oracle::ExternalProcess {
            command: config
                .require(&key("command"))?
                .split_whitespace()
                .map(str::to_string)
                .collect(),
            timeout_secs: config.parse(&key("timeout_secs"), DEFAULT_TIMEOUT_SECS)?,
        },
        other => {
            return Err(ConfigError(format!(
                "{prefix}.kind: unknown oracle `{other}`"
            )))
        }
    })
}

/// Scoring task from keys under `prefix` (default prefix: `task`).
pub fn scoring_task(config: &Config, prefix: &str) -> Result<ScoringTask, ConfigError> {
    let key = |suffix: &str| format!("{prefix}.{suffix}");
    let name = config
        .get(&key("name"))
        .unwrap_or_else(|| prefix.rsplit('.').next().expect("non-empty prefix"))
        .to_string();
    let oracle = oracle_at(config, prefix)?;
    let mut task = ScoringTask::new(&name, oracle);
    if config.parse_bool(&key("diversity"), false)? {
        task = task.with_diversity(DiversityFilterConfig {
            similarity_threshold: config.parse(&key("diversity.threshold"), 0.35)?,
            bucket_limit: config.parse(&key("diversity.limit"), 25)?,
            min_score: config.parse(&key("diversity.min_score"), 0.5)?,
        });
    }
    Ok(task)
}
