//! Experiment config: INI sections `[env]`, `[train]`, `[anyplay]`,
//! `[eval]` and one `[pool.<label>]` per algorithm, plus a top-level
//! `output_dir`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyplay_core::anyplay::{AnyPlayConfig, EvalProtocol};
use anyplay_core::env::EnvConfig;
use anyplay_core::qlearn::TrainConfig;
use ini::{Ini, Properties};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("missing section [{0}]")]
    MissingSection(String),
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("[{section}] unknown key `{key}`")]
    UnknownKey { section: String, key: String },
    #[error("[{section}] {key}: {msg}")]
    BadValue { section: String, key: String, msg: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Baseline,
    AnyPlay,
}

impl Algorithm {
    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Baseline => "baseline",
            Algorithm::AnyPlay => "anyplay",
        }
    }
}

/// One algorithm's members in the pool.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolSpec {
    pub label: String,
    pub algorithm: Algorithm,
    pub num_intents: usize,
    pub seeds: Vec<u64>,
    pub zsc_exempt: bool,
}

impl PoolSpec {
    pub fn run_id(&self, member: usize) -> String {
        format!("{}-{member:02}", self.label)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub n_games: usize,
    pub base_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { n_games: 2500, base_seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub anyplay: AnyPlayConfig,
    pub eval: EvalConfig,
    pub pools: Vec<PoolSpec>,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Reads a config file. A relative `output_dir` is taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        let mut cfg = Self::parse(&text)?;
        if cfg.output_dir.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let ini = Ini::load_from_str(text)
            .map_err(|e| ConfigError::Syntax { line: e.line, msg: e.msg.to_string() })?;

        for name in ini.sections().flatten() {
            let known = ["env", "train", "anyplay", "eval"].contains(&name) || name.starts_with("pool.");
            if !known {
                return Err(ConfigError::UnknownSection(name.to_string()));
            }
        }

        let general = Section::new("", ini.general_section(), &["output_dir"])?;
        let output_dir = PathBuf::from(
            general.raw("output_dir").ok_or_else(|| ConfigError::Invalid("missing top-level `output_dir`".into()))?,
        );

        let env_props = ini.section(Some("env")).ok_or_else(|| ConfigError::MissingSection("env".into()))?;
        let s = Section::new(
            "env",
            env_props,
            &[
                "num_objects",
                "num_messages",
                "reward_p1_leave",
                "reward_p2_leave",
                "curtain_penalty",
                "reward_correct",
                "reward_incorrect",
            ],
        )?;
        let d = EnvConfig::default();
        let env = EnvConfig {
            num_objects: s.get_or("num_objects", d.num_objects)?,
            num_messages: s.get_or("num_messages", d.num_messages)?,
            reward_p1_leave: s.get_or("reward_p1_leave", d.reward_p1_leave)?,
            reward_p2_leave: s.get_or("reward_p2_leave", d.reward_p2_leave)?,
            curtain_penalty: s.get_or("curtain_penalty", d.curtain_penalty)?,
            reward_correct: s.get_or("reward_correct", d.reward_correct)?,
            reward_incorrect: s.get_or("reward_incorrect", d.reward_incorrect)?,
        };
        env.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;

        let empty = Properties::new();
        let s = Section::new(
            "train",
            ini.section(Some("train")).unwrap_or(&empty),
            &[
                "num_episodes",
                "alpha",
                "gamma",
                "epsilon_start",
                "epsilon_end",
                "epsilon_anneal_fraction",
                "epoch_size",
            ],
        )?;
        let d = TrainConfig::default();
        let train = TrainConfig {
            num_episodes: s.get_or("num_episodes", d.num_episodes)?,
            alpha: s.get_or("alpha", d.alpha)?,
            gamma: s.get_or("gamma", d.gamma)?,
            epsilon_start: s.get_or("epsilon_start", d.epsilon_start)?,
            epsilon_end: s.get_or("epsilon_end", d.epsilon_end)?,
            epsilon_anneal_fraction: s.get_or("epsilon_anneal_fraction", d.epsilon_anneal_fraction)?,
            epoch_size: s.get_or("epoch_size", d.epoch_size)?,
            seed: 0,
        };
        train.validate().map_err(|m| ConfigError::Invalid(format!("[train] {m}")))?;

        let s = Section::new(
            "anyplay",
            ini.section(Some("anyplay")).unwrap_or(&empty),
            &[
                "num_intents",
                "lambda",
                "eta",
                "warmup_fraction",
                "intent_loss_drop_threshold",
                "return_gain_threshold",
                "lambda_multiplier",
                "max_restarts",
                "eval_protocol",
            ],
        )?;
        let d = AnyPlayConfig::default();
        let anyplay = AnyPlayConfig {
            num_intents: s.get_or("num_intents", d.num_intents)?,
            lambda: s.get_or("lambda", d.lambda)?,
            eta: s.get_or("eta", d.eta)?,
            warmup_fraction: s.get_or("warmup_fraction", d.warmup_fraction)?,
            intent_loss_drop_threshold: s.get_or("intent_loss_drop_threshold", d.intent_loss_drop_threshold)?,
            return_gain_threshold: s.get_or("return_gain_threshold", d.return_gain_threshold)?,
            lambda_multiplier: s.get_or("lambda_multiplier", d.lambda_multiplier)?,
            max_restarts: s.get_or("max_restarts", d.max_restarts)?,
            eval_protocol: s.get_or::<EvalProtocol>("eval_protocol", d.eval_protocol)?,
        };
        anyplay.validate().map_err(|e| ConfigError::Invalid(format!("[anyplay] {e}")))?;

        let s = Section::new("eval", ini.section(Some("eval")).unwrap_or(&empty), &["n_games", "base_seed"])?;
        let d = EvalConfig::default();
        let eval = EvalConfig { n_games: s.get_or("n_games", d.n_games)?, base_seed: s.get_or("base_seed", d.base_seed)? };
        if eval.n_games == 0 {
            return Err(ConfigError::Invalid("[eval] n_games must be >= 1".into()));
        }

        let mut pools = Vec::new();
        for (name, props) in ini.iter() {
            let Some(label) = name.and_then(|n| n.strip_prefix("pool.")) else { continue };
            if pools.iter().any(|p: &PoolSpec| p.label == label) {
                return Err(ConfigError::Invalid(format!("pool label `{label}` appears twice")));
            }
            pools.push(parse_pool(label, props, &anyplay)?);
        }
        if pools.is_empty() {
            return Err(ConfigError::MissingSection("pool.<label>".into()));
        }

        Ok(Self { env, train, anyplay, eval, pools, output_dir })
    }

    pub fn zsc_exempt(&self) -> BTreeSet<String> {
        self.pools.iter().filter(|p| p.zsc_exempt).map(|p| p.label.clone()).collect()
    }

    /// Run-level anyplay settings for a pool.
    pub fn anyplay_for(&self, pool: &PoolSpec) -> AnyPlayConfig {
        AnyPlayConfig { num_intents: pool.num_intents, ..self.anyplay.clone() }
    }
}

fn parse_pool(label: &str, props: &Properties, anyplay: &AnyPlayConfig) -> Result<PoolSpec, ConfigError> {
    let section = format!("pool.{label}");
    let valid = !label.is_empty()
        && label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if !valid {
        return Err(ConfigError::Invalid(format!("[{section}] label must be alphanumeric, `_` or `-`")));
    }
    let s = Section::new(&section, props, &["count", "num_intents", "seed_base", "seeds", "zsc_exempt", "algorithm"])?;
    let num_intents: usize = s.get_or("num_intents", anyplay.num_intents)?;
    if num_intents == 0 {
        return Err(s.bad("num_intents", "must be >= 1"));
    }
    let algorithm = match s.raw("algorithm") {
        None if num_intents == 1 => Algorithm::Baseline,
        None | Some("anyplay") => Algorithm::AnyPlay,
        Some("baseline") if num_intents == 1 => Algorithm::Baseline,
        Some("baseline") => return Err(s.bad("algorithm", "baseline requires num_intents = 1")),
        Some(other) => return Err(s.bad("algorithm", &format!("unknown algorithm `{other}`"))),
    };
    let seeds: Vec<u64> = match (s.raw("seeds"), s.raw("seed_base")) {
        (Some(_), Some(_)) => return Err(s.bad("seeds", "give either seeds or seed_base, not both")),
        (Some(list), None) => {
            let seeds = list
                .split(',')
                .map(|v| v.trim().parse::<u64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| s.bad("seeds", &e.to_string()))?;
            if let Some(count) = s.get::<usize>("count")? {
                if count != seeds.len() {
                    return Err(s.bad("count", &format!("{count} does not match {} listed seeds", seeds.len())));
                }
            }
            seeds
        }
        (None, _) => {
            let count: usize = s.get("count")?.ok_or_else(|| s.bad("count", "required"))?;
            let base: u64 = s.get_or("seed_base", 0)?;
            (0..count as u64).map(|i| base.wrapping_add(i)).collect()
        }
    };
    if seeds.is_empty() {
        return Err(s.bad("count", "must be >= 1"));
    }
    Ok(PoolSpec {
        label: label.to_string(),
        algorithm,
        num_intents,
        seeds,
        zsc_exempt: s.get_or("zsc_exempt", false)?,
    })
}

/// A section checked against its allowed keys.
struct Section<'a> {
    name: String,
    props: &'a Properties,
}

impl<'a> Section<'a> {
    fn new(name: &str, props: &'a Properties, allowed: &[&str]) -> Result<Self, ConfigError> {
        let mut seen = BTreeSet::new();
        for (key, _) in props.iter() {
            if !allowed.contains(&key) {
                return Err(ConfigError::UnknownKey { section: name.to_string(), key: key.to_string() });
            }
            if !seen.insert(key) {
                return Err(ConfigError::BadValue {
                    section: name.to_string(),
                    key: key.to_string(),
                    msg: "given more than once".into(),
                });
            }
        }
        Ok(Self { name: name.to_string(), props })
    }

    fn raw(&self, key: &str) -> Option<&'a str> {
        self.props.get(key)
    }

    fn bad(&self, key: &str, msg: &str) -> ConfigError {
        ConfigError::BadValue { section: self.name.clone(), key: key.to_string(), msg: msg.to_string() }
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|_| self.bad(key, &format!("cannot parse `{v}`"))))
            .transpose()
    }

    fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        Ok(self.get(key)?.unwrap_or(default))
    }
}
