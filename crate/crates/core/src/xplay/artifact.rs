use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use crate::anyplay::{AnyPlayArtifacts, EvalProtocol};
use crate::env::{Env, EnvConfig, Role};
use crate::qlearn::{BaselineRun, QTable, StateKey};

use super::XplayError;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "anyplay-policy v";

/// How a published Player 1 picks its intent when evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntentChoice {
    /// The table has no intent component.
    Unconditioned,
    Fixed(usize),
    /// A fresh intent per game, uniform over `0..n`.
    Uniform(usize),
}

/// One role's published policy plus the metadata needed to replay it.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyArtifact {
    pub role: Role,
    pub algorithm: String,
    pub num_intents: usize,
    pub frozen_intent: Option<usize>,
    pub seed: u64,
    pub env: EnvConfig,
    pub table: QTable,
}

impl PolicyArtifact {
    /// Player 1 and Player 2 artifacts of a plain self-play run.
    pub fn from_baseline(
        run: &BaselineRun,
        algorithm: &str,
        seed: u64,
        env: &Env,
    ) -> (PolicyArtifact, PolicyArtifact) {
        let make = |role, table: &QTable| PolicyArtifact {
            role,
            algorithm: algorithm.to_string(),
            num_intents: 1,
            frozen_intent: None,
            seed,
            env: env.config().clone(),
            table: table.clone(),
        };
        (make(Role::Player1, &run.p1), make(Role::Player2, &run.p2))
    }

    /// Player 1 and Player 2 artifacts of an intent-diverse run. The eval
    /// protocol is folded into `frozen_intent`: uniform play is recorded as
    /// no frozen intent.
    pub fn from_anyplay(
        run: &AnyPlayArtifacts,
        algorithm: &str,
        seed: u64,
        env: &Env,
    ) -> (PolicyArtifact, PolicyArtifact) {
        let frozen = match run.eval_protocol {
            EvalProtocol::FrozenBestIntent => run.frozen_intent.map(|z| z.value),
            EvalProtocol::FixedIntent(z) => Some(z),
            EvalProtocol::UniformIntent => None,
        };
        let n = run.num_intents();
        let make = |role, table: &QTable, frozen_intent| PolicyArtifact {
            role,
            algorithm: algorithm.to_string(),
            num_intents: n,
            frozen_intent,
            seed,
            env: env.config().clone(),
            table: table.clone(),
        };
        (
            make(Role::Player1, &run.specializer, frozen),
            make(Role::Player2, &run.accommodator, None),
        )
    }

    pub fn env_fingerprint(&self) -> String {
        self.env.fingerprint()
    }

    pub fn intent_choice(&self) -> IntentChoice {
        if !self.table.is_intent_conditioned() {
            return IntentChoice::Unconditioned;
        }
        match self.frozen_intent {
            Some(z) => IntentChoice::Fixed(z),
            None => IntentChoice::Uniform(self.num_intents),
        }
    }

    pub fn check_compatible(&self, env: &Env, role: Role) -> Result<(), XplayError> {
        if self.role != role {
            return Err(XplayError::RoleMismatch { expected: role.tag(), found: self.role.tag() });
        }
        let expected = env.config().fingerprint();
        let found = self.env_fingerprint();
        if expected != found {
            return Err(XplayError::FingerprintMismatch { expected, found });
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let env = Env::new(self.env.clone()).expect("artifact env was validated");
        let mut rows: Vec<(usize, i64, usize, f64)> = Vec::new();
        for (key, values) in self.table.rows() {
            let obs = env.observation_id(key.obs);
            let intent = key.intent.map_or(-1, |z| z as i64);
            for (a, &v) in values.iter().enumerate() {
                rows.push((obs, intent, a, v));
            }
        }
        rows.sort_by_key(|r| (r.0, r.1, r.2));

        let mut out = format!("{MAGIC}{FORMAT_VERSION}\n");
        out.push_str(&format!("role={}\n", self.role.tag()));
        out.push_str(&format!("algorithm={}\n", self.algorithm));
        out.push_str(&format!("num_intents={}\n", self.num_intents));
        match self.frozen_intent {
            Some(z) => out.push_str(&format!("frozen_intent={z}\n")),
            None => out.push_str("frozen_intent=none\n"),
        }
        out.push_str(&format!("seed={}\n", self.seed));
        out.push_str(&format!("env={}\n", self.env_fingerprint()));
        out.push('\n');
        for (obs, intent, a, v) in rows {
            out.push_str(&format!("{obs} {intent} {a} {v}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, XplayError> {
        let mut lines = text.split('\n').enumerate().map(|(i, l)| (i + 1, l));
        let err = |line: usize, msg: String| XplayError::Parse { line, msg };

        let (_, first) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
        match first.strip_prefix(MAGIC) {
            Some(v) if v == FORMAT_VERSION.to_string() => {}
            Some(v) => return Err(XplayError::Version(v.to_string())),
            None => return Err(err(1, format!("expected `{MAGIC}{FORMAT_VERSION}`"))),
        }

        let mut headers: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
        let mut blank_seen = false;
        for (n, line) in lines.by_ref() {
            if line.is_empty() {
                blank_seen = true;
                break;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| err(n, "expected key=value".into()))?;
            if !["role", "algorithm", "num_intents", "frozen_intent", "seed", "env"].contains(&k) {
                return Err(err(n, format!("unknown header `{k}`")));
            }
            if headers.insert(k, (n, v)).is_some() {
                return Err(err(n, format!("duplicate header `{k}`")));
            }
        }
        let header_end = 1 + headers.len() + 1;
        if !blank_seen {
            return Err(err(header_end, "missing blank line after headers".into()));
        }
        let get = |k: &str| headers.get(k).copied().ok_or_else(|| err(header_end, format!("missing header `{k}`")));

        let (n, role) = get("role")?;
        let role = match role {
            "p1" => Role::Player1,
            "p2" => Role::Player2,
            other => return Err(err(n, format!("unknown role `{other}`"))),
        };
        let (_, algorithm) = get("algorithm")?;
        let (n, num_intents) = get("num_intents")?;
        let num_intents: usize = num_intents
            .parse()
            .ok()
            .filter(|&v| v >= 1)
            .ok_or_else(|| err(n, format!("bad num_intents `{num_intents}`")))?;
        let (n, frozen) = get("frozen_intent")?;
        let frozen_intent = match frozen {
            "none" => None,
            z => Some(
                z.parse::<usize>()
                    .ok()
                    .filter(|&z| z < num_intents)
                    .ok_or_else(|| err(n, format!("bad frozen_intent `{z}`")))?,
            ),
        };
        let (n, seed) = get("seed")?;
        let seed = seed.parse().map_err(|_| err(n, format!("bad seed `{seed}`")))?;
        let (n, fingerprint) = get("env")?;
        let config = EnvConfig::from_fingerprint(fingerprint).map_err(|e| err(n, e.to_string()))?;
        let env = Env::new(config.clone()).map_err(|e| err(n, e.to_string()))?;

        let mut table = QTable::for_env(&env, role);
        let mut seen = BTreeSet::new();
        for (n, line) in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(' ').collect();
            if fields.len() != 4 {
                return Err(err(n, format!("expected 4 fields, found {}", fields.len())));
            }
            let obs_id: usize = fields[0].parse().map_err(|_| err(n, format!("bad observation id `{}`", fields[0])))?;
            let obs = env
                .observation_from_id(role, obs_id)
                .ok_or_else(|| err(n, format!("observation id {obs_id} out of range")))?;
            let intent = match fields[1] {
                "-1" => None,
                z => Some(
                    z.parse::<usize>()
                        .ok()
                        .filter(|&z| z < num_intents && role == Role::Player1)
                        .ok_or_else(|| err(n, format!("bad intent `{z}`")))?,
                ),
            };
            let action: usize = fields[2]
                .parse()
                .ok()
                .filter(|&a| a < env.num_actions(role))
                .ok_or_else(|| err(n, format!("bad action id `{}`", fields[2])))?;
            let value: f64 = fields[3].parse().map_err(|_| err(n, format!("bad value `{}`", fields[3])))?;
            let key = StateKey { obs, intent };
            if !seen.insert((key, action)) {
                return Err(err(n, "duplicate row".into()));
            }
            table.set(key, action, value);
        }

        Ok(PolicyArtifact {
            role,
            algorithm: algorithm.to_string(),
            num_intents,
            frozen_intent,
            seed,
            env: config,
            table,
        })
    }
}

pub fn save_policy(artifact: &PolicyArtifact, path: &Path) -> Result<(), XplayError> {
    fs::write(path, artifact.to_text()).map_err(|e| XplayError::Io(path.display().to_string(), e))
}

pub fn load_policy(path: &Path) -> Result<PolicyArtifact, XplayError> {
    let text = fs::read_to_string(path).map_err(|e| XplayError::Io(path.display().to_string(), e))?;
    PolicyArtifact::from_text(&text)
}
