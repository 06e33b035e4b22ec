//! Intent-diverse self-play.
//!
//! Player 1 (the specializer) is conditioned on an intent drawn once per
//! episode. A discriminator reads the observation Player 2 (the
//! accommodator) receives after each specializer action and tries to
//! recover the intent. Its scaled log-likelihood is added to the shared
//! step reward, so play-styles that the partner can tell apart are
//! rewarded alongside the game score.

mod controller;
mod discriminator;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::env::{Env, ObservationKey, Role};
use crate::qlearn::{EpochMeter, GreedyP1, GreedyP2, QTable, StateKey, TrainConfig, TrainDiagnostics};
use crate::rng::{intent_rng, seeded_rng};

pub use controller::{Decision, LambdaController};
pub use discriminator::{
    cross_entropy, cross_entropy_grad, intrinsic_reward, sample_intent, softmax, Discriminator,
    Intent,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnyPlayError {
    #[error("lambda controller gave up after {restarts} restarts (lambda history {history:?})")]
    RestartExhausted { restarts: usize, history: Vec<f64> },
    #[error("invalid config: {0}")]
    Config(String),
}

/// How an intent-conditioned Player 1 is played at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalProtocol {
    /// The intent that scores best with the training partner, chosen once.
    FrozenBestIntent,
    /// A fresh uniform intent every game.
    UniformIntent,
    FixedIntent(usize),
}

impl fmt::Display for EvalProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalProtocol::FrozenBestIntent => write!(f, "frozen_best"),
            EvalProtocol::UniformIntent => write!(f, "uniform"),
            EvalProtocol::FixedIntent(z) => write!(f, "fixed:{z}"),
        }
    }
}

impl FromStr for EvalProtocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "frozen_best" => Ok(EvalProtocol::FrozenBestIntent),
            "uniform" => Ok(EvalProtocol::UniformIntent),
            other => other
                .strip_prefix("fixed:")
                .and_then(|z| z.parse().ok())
                .map(EvalProtocol::FixedIntent)
                .ok_or_else(|| format!("unknown eval protocol `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnyPlayConfig {
    pub num_intents: usize,
    /// Initial intrinsic reward scale.
    pub lambda: f64,
    pub eta: f64,
    pub warmup_fraction: f64,
    pub intent_loss_drop_threshold: f64,
    pub return_gain_threshold: f64,
    pub lambda_multiplier: f64,
    pub max_restarts: usize,
    pub eval_protocol: EvalProtocol,
}

impl Default for AnyPlayConfig {
    fn default() -> Self {
        Self {
            num_intents: 4,
            lambda: 50.0,
            eta: 0.1,
            warmup_fraction: 0.1,
            intent_loss_drop_threshold: 0.05,
            return_gain_threshold: 0.5,
            lambda_multiplier: 2.0,
            max_restarts: 8,
            eval_protocol: EvalProtocol::FrozenBestIntent,
        }
    }
}

impl AnyPlayConfig {
    pub fn validate(&self) -> Result<(), AnyPlayError> {
        let fail = |m: String| Err(AnyPlayError::Config(m));
        if self.num_intents < 1 {
            return fail("num_intents must be >= 1".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if self.eta.is_nan() || self.eta <= 0.0 {
            return fail(format!("eta must be > 0, got {}", self.eta));
        }
        if !(self.warmup_fraction > 0.0 && self.warmup_fraction <= 1.0) {
            return fail("warmup_fraction must be in (0, 1]".into());
        }
        if self.lambda_multiplier.is_nan() || self.lambda_multiplier <= 1.0 {
            return fail("lambda_multiplier must be > 1".into());
        }
        if let EvalProtocol::FixedIntent(z) = self.eval_protocol {
            if z >= self.num_intents {
                return fail(format!("fixed intent {z} out of range for N={}", self.num_intents));
            }
        }
        Ok(())
    }
}

/// Everything a finished run publishes.
#[derive(Debug, Clone)]
pub struct AnyPlayArtifacts {
    pub specializer: QTable,
    pub accommodator: QTable,
    pub discriminator: Discriminator,
    pub frozen_intent: Option<Intent>,
    pub eval_protocol: EvalProtocol,
    pub diagnostics: TrainDiagnostics,
}

impl AnyPlayArtifacts {
    pub fn num_intents(&self) -> usize {
        self.discriminator.num_intents()
    }

    /// Greedy specializer action index per `(intent, object)`.
    pub fn intent_action_map(&self, env: &Env) -> Vec<Vec<usize>> {
        let legal: Vec<usize> = (0..env.num_actions(Role::Player1)).collect();
        (0..self.num_intents())
            .map(|z| {
                (0..env.num_objects())
                    .map(|k| {
                        let key = StateKey::with_intent(ObservationKey::ObjectSeen(k), z);
                        self.specializer.greedy_action(&key, &legal)
                    })
                    .collect()
            })
            .collect()
    }

    /// True when each intent plays one object-independent action and no two
    /// intents share an action.
    pub fn intents_are_injective(&self, env: &Env) -> bool {
        let map = self.intent_action_map(env);
        let mut used = std::collections::BTreeSet::new();
        map.iter().all(|per_object| {
            let first = per_object[0];
            per_object.iter().all(|&a| a == first) && used.insert(first)
        })
    }

    /// Fraction of `(intent, object)` pairs whose greedy post-action
    /// observation the discriminator classifies correctly.
    pub fn discriminator_accuracy(&self, env: &Env) -> f64 {
        let map = self.intent_action_map(env);
        let mut hits = 0usize;
        let mut total = 0usize;
        for (z, per_object) in map.iter().enumerate() {
            for (k, &a) in per_object.iter().enumerate() {
                let (state, _, _) = env.reset_with_object(k);
                let action = env.action_from_index(Role::Player1, a).expect("canonical index");
                let obs = env.step(&state, action).expect("P1 turn").obs_p2;
                hits += usize::from(self.discriminator.top1(&obs) == z);
                total += 1;
            }
        }
        hits as f64 / total as f64
    }
}

/// Picks the intent whose greedy play scores best with the run's own
/// accommodator. Ties go to the lowest intent.
pub fn select_frozen_intent(
    specializer: &QTable,
    accommodator: &QTable,
    num_intents: usize,
    env: &Env,
) -> Intent {
    let p2 = GreedyP2 { env, table: accommodator };
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for z in 0..num_intents {
        let p1 = GreedyP1 { env, table: specializer, intent: Some(z) };
        let value = env.exact_return(&p1, &p2).expect("greedy policies are total");
        if value > best_value {
            best = z;
            best_value = value;
        }
    }
    Intent::new(best, num_intents)
}

enum RunOutcome {
    Finished(Box<AnyPlayArtifacts>),
    Restart(f64),
}

/// Greedy self-play return averaged over intents, and the discriminator's
/// loss on the observations the greedy specializer produces.
fn greedy_snapshot(env: &Env, spec: &QTable, accom: &QTable, disc: &Discriminator) -> (f64, f64) {
    let n = disc.num_intents();
    let p2 = GreedyP2 { env, table: accom };
    let legal: Vec<usize> = (0..spec.num_actions()).collect();
    let mut ret = 0.0;
    let mut loss = 0.0;
    for z in 0..n {
        let p1 = GreedyP1 { env, table: spec, intent: Some(z) };
        ret += env.exact_return(&p1, &p2).expect("greedy policies are total");
        for k in 0..env.num_objects() {
            let (state, obs, _) = env.reset_with_object(k);
            let a = spec.greedy_action(&StateKey::with_intent(obs, z), &legal);
            let action = env.action_from_index(Role::Player1, a).expect("canonical index");
            let seen = env.step(&state, action).expect("P1 turn").obs_p2;
            loss += cross_entropy(&disc.predict(&seen), z);
        }
    }
    (ret / n as f64, loss / (n * env.num_objects()) as f64)
}

/// Trains a specializer/accommodator pair, restarting with a rescaled
/// lambda whenever the warmup check fails.
pub fn train_anyplay(
    env: &Env,
    train: &TrainConfig,
    anyplay: &AnyPlayConfig,
) -> Result<AnyPlayArtifacts, AnyPlayError> {
    train.validate().map_err(AnyPlayError::Config)?;
    anyplay.validate()?;

    let controller = LambdaController::new(env, train, anyplay);
    let mut lambda = anyplay.lambda;
    let mut bracket = LambdaBracket::default();
    let mut history = vec![lambda];
    let mut restarts = 0;
    loop {
        match run_once(env, train, anyplay, &controller, lambda) {
            RunOutcome::Finished(mut artifacts) => {
                artifacts.diagnostics.lambda_history = history;
                artifacts.diagnostics.restart_count = restarts;
                return Ok(*artifacts);
            }
            RunOutcome::Restart(proposed) => {
                restarts += 1;
                let next = bracket.next(lambda, proposed);
                history.push(next);
                if restarts > anyplay.max_restarts {
                    return Err(AnyPlayError::RestartExhausted { restarts, history });
                }
                lambda = next;
            }
        }
    }
}

/// Remembers the largest lambda found too low and the smallest found too
/// high. Once both sides are known, restarts bisect geometrically instead
/// of bouncing between the same two values.
#[derive(Debug, Default, Clone, Copy)]
struct LambdaBracket {
    too_low: Option<f64>,
    too_high: Option<f64>,
}

impl LambdaBracket {
    fn next(&mut self, current: f64, proposed: f64) -> f64 {
        if proposed > current {
            self.too_low = Some(self.too_low.map_or(current, |l| l.max(current)));
        } else {
            self.too_high = Some(self.too_high.map_or(current, |h| h.min(current)));
        }
        match (self.too_low, self.too_high) {
            (Some(lo), Some(hi)) if lo > 0.0 => (lo * hi).sqrt(),
            (Some(lo), Some(hi)) => 0.5 * (lo + hi),
            // raising from zero would stay at zero
            _ if current == 0.0 && proposed == 0.0 => 1.0,
            _ => proposed,
        }
    }
}

fn run_once(
    env: &Env,
    train: &TrainConfig,
    anyplay: &AnyPlayConfig,
    controller: &LambdaController,
    lambda: f64,
) -> RunOutcome {
    let n = anyplay.num_intents;
    let mut rng = seeded_rng(train.seed);
    let mut intents = intent_rng(train.seed);
    let mut spec = QTable::for_env(env, Role::Player1);
    let mut accom = QTable::for_env(env, Role::Player2);
    let mut disc = Discriminator::new(n, anyplay.eta);
    let p1_legal: Vec<usize> = (0..spec.num_actions()).collect();
    let p2_legal: Vec<usize> = (0..accom.num_actions()).collect();
    let mut diag = TrainDiagnostics::default();
    let mut meter = EpochMeter::default();

    for episode in 0..train.num_episodes {
        let z = sample_intent(n, &mut intents).value;
        let eps = train.epsilon(episode);
        let (state, obs_p1, _) = env.reset(&mut rng);
        let key1 = StateKey::with_intent(obs_p1, z);
        let a1 = spec.epsilon_greedy(&key1, &p1_legal, eps, &mut rng);
        let action1 = env.action_from_index(Role::Player1, a1).expect("canonical index");
        let first = env.step(&state, action1).expect("P1 acts on its turn");

        let probs = disc.predict(&first.obs_p2);
        let bonus = intrinsic_reward(&probs, z, lambda);
        let loss = disc.update(first.obs_p2, z);
        let shaped = first.reward + bonus;

        if first.done {
            spec.q_update(key1, a1, shaped, None, train.alpha, train.gamma);
            meter.record(first.reward, &[loss]);
        } else {
            let key2 = StateKey::plain(first.obs_p2);
            let a2 = accom.epsilon_greedy(&key2, &p2_legal, eps, &mut rng);
            let action2 = env.action_from_index(Role::Player2, a2).expect("canonical index");
            let second = env.step(&first.next_state, action2).expect("P2 acts on its turn");
            spec.q_update(key1, a1, shaped + train.gamma * second.reward, None, train.alpha, train.gamma);
            accom.q_update(key2, a2, second.reward, None, train.alpha, train.gamma);
            meter.record(second.next_state.accumulated_reward, &[loss]);
        }

        diag.episodes_run += 1;
        if diag.episodes_run % train.epoch_size == 0 || diag.episodes_run == train.num_episodes {
            meter.flush(&mut diag);
            let (ret, loss) = greedy_snapshot(env, &spec, &accom, &disc);
            diag.greedy_return.push(ret);
            diag.greedy_intent_loss.push(loss);
            let epoch = diag.extrinsic_return.len();
            if let Decision::Restart(next) = controller.decide(&diag, lambda, epoch) {
                return RunOutcome::Restart(next);
            }
        }
    }

    let frozen_intent = match anyplay.eval_protocol {
        EvalProtocol::FrozenBestIntent => Some(select_frozen_intent(&spec, &accom, n, env)),
        EvalProtocol::FixedIntent(z) => Some(Intent::new(z, n)),
        EvalProtocol::UniformIntent => None,
    };
    RunOutcome::Finished(Box::new(AnyPlayArtifacts {
        specializer: spec,
        accommodator: accom,
        discriminator: disc,
        frozen_intent,
        eval_protocol: anyplay.eval_protocol,
        diagnostics: diag,
    }))
}
