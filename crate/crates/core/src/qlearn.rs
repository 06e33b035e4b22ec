//! Tabular independent Q-learning for the two players.
//!
//! Both learners are credited the shared team reward. Each player's
//! transition runs from its own decision to the end of the episode, so
//! Player 1's target is the sum of its step reward and whatever Player 2's
//! step earns afterwards. With an undiscounted two-step game this is the
//! full return.

use std::collections::BTreeMap;

use rand::Rng;

use crate::env::{Action, Env, ObservationKey, P1Action, P2Action, Role};
use crate::rng::seeded_rng;

/// Table row key: an observation, plus the intent for a specializer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateKey {
    pub obs: ObservationKey,
    pub intent: Option<usize>,
}

impl StateKey {
    pub fn plain(obs: ObservationKey) -> Self {
        Self { obs, intent: None }
    }

    pub fn with_intent(obs: ObservationKey, intent: usize) -> Self {
        Self { obs, intent: Some(intent) }
    }
}

/// Action values indexed by canonical action index. Missing rows read as 0.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    role: Role,
    num_actions: usize,
    rows: BTreeMap<StateKey, Vec<f64>>,
}

impl QTable {
    pub fn new(role: Role, num_actions: usize) -> Self {
        Self { role, num_actions, rows: BTreeMap::new() }
    }

    pub fn for_env(env: &Env, role: Role) -> Self {
        Self::new(role, env.num_actions(role))
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn value(&self, key: &StateKey, action: usize) -> f64 {
        self.rows.get(key).map_or(0.0, |row| row[action])
    }

    pub fn set(&mut self, key: StateKey, action: usize, value: f64) {
        let n = self.num_actions;
        self.rows.entry(key).or_insert_with(|| vec![0.0; n])[action] = value;
    }

    pub fn rows(&self) -> impl Iterator<Item = (&StateKey, &[f64])> {
        self.rows.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// True when any row is keyed by an intent.
    pub fn is_intent_conditioned(&self) -> bool {
        self.rows.keys().any(|k| k.intent.is_some())
    }

    /// Rows for one intent with the intent stripped from the key.
    pub fn slice_intent(&self, intent: usize) -> QTable {
        let rows = self
            .rows
            .iter()
            .filter(|(k, _)| k.intent == Some(intent))
            .map(|(k, v)| (StateKey::plain(k.obs), v.clone()))
            .collect();
        QTable { role: self.role, num_actions: self.num_actions, rows }
    }

    /// Argmax over `legal`; ties go to the lowest canonical index.
    pub fn greedy_action(&self, key: &StateKey, legal: &[usize]) -> usize {
        assert!(!legal.is_empty(), "greedy_action needs at least one legal action");
        let row = self.rows.get(key);
        let mut best = legal[0];
        let mut best_value = row.map_or(0.0, |r| r[best]);
        for &a in &legal[1..] {
            let v = row.map_or(0.0, |r| r[a]);
            if v > best_value || (v == best_value && a < best) {
                best = a;
                best_value = v;
            }
        }
        best
    }

    pub fn max_value(&self, key: &StateKey, legal: &[usize]) -> f64 {
        let a = self.greedy_action(key, legal);
        self.value(key, a)
    }

    /// Uniform legal action with probability `epsilon`, greedy otherwise.
    /// Always consumes one uniform draw, plus one index draw when exploring.
    pub fn epsilon_greedy<R: Rng + ?Sized>(
        &self,
        key: &StateKey,
        legal: &[usize],
        epsilon: f64,
        rng: &mut R,
    ) -> usize {
        if rng.gen::<f64>() < epsilon {
            legal[rng.gen_range(0..legal.len())]
        } else {
            self.greedy_action(key, legal)
        }
    }

    /// One-step Q-learning update. `next` is `None` for terminal transitions.
    /// Returns the TD error measured before the update.
    pub fn q_update(
        &mut self,
        key: StateKey,
        action: usize,
        reward: f64,
        next: Option<(StateKey, &[usize])>,
        alpha: f64,
        gamma: f64,
    ) -> f64 {
        let bootstrap = match next {
            Some((next_key, next_legal)) => gamma * self.max_value(&next_key, next_legal),
            None => 0.0,
        };
        let target = reward + bootstrap;
        let n = self.num_actions;
        let slot = &mut self.rows.entry(key).or_insert_with(|| vec![0.0; n])[action];
        let td = target - *slot;
        *slot += alpha * td;
        td
    }
}

/// Greedy Player 1 policy read from a table, optionally fixed to one intent.
pub struct GreedyP1<'a> {
    pub env: &'a Env,
    pub table: &'a QTable,
    pub intent: Option<usize>,
}

impl crate::env::DeterministicPolicy<P1Action> for GreedyP1<'_> {
    fn act(&self, obs: &ObservationKey) -> Option<P1Action> {
        let legal: Vec<usize> = (0..self.env.num_actions(Role::Player1)).collect();
        let key = StateKey { obs: *obs, intent: self.intent };
        self.env.p1_action_from_index(self.table.greedy_action(&key, &legal))
    }
}

pub struct GreedyP2<'a> {
    pub env: &'a Env,
    pub table: &'a QTable,
}

impl crate::env::DeterministicPolicy<P2Action> for GreedyP2<'_> {
    fn act(&self, obs: &ObservationKey) -> Option<P2Action> {
        let legal: Vec<usize> = (0..self.env.num_actions(Role::Player2)).collect();
        self.env
            .p2_action_from_index(self.table.greedy_action(&StateKey::plain(*obs), &legal))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub num_episodes: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_anneal_fraction: f64,
    pub epoch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            num_episodes: 50_000,
            alpha: 0.1,
            gamma: 1.0,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_anneal_fraction: 0.8,
            epoch_size: 500,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(format!("alpha must be in (0, 1], got {}", self.alpha));
        }
        if !(0.0 <= self.epsilon_end
            && self.epsilon_end <= self.epsilon_start
            && self.epsilon_start <= 1.0)
        {
            return Err("epsilon schedule must satisfy 0 <= end <= start <= 1".into());
        }
        if !(self.epsilon_anneal_fraction > 0.0 && self.epsilon_anneal_fraction <= 1.0) {
            return Err("epsilon_anneal_fraction must be in (0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(format!("gamma must be in [0, 1], got {}", self.gamma));
        }
        if self.epoch_size == 0 {
            return Err("epoch_size must be >= 1".into());
        }
        Ok(())
    }

    /// Linear anneal from start to end over the first
    /// `epsilon_anneal_fraction` of episodes, constant afterwards.
    pub fn epsilon(&self, episode: usize) -> f64 {
        let horizon = self.epsilon_anneal_fraction * self.num_episodes as f64;
        if horizon <= 0.0 {
            return self.epsilon_end;
        }
        let frac = episode as f64 / horizon;
        if frac >= 1.0 {
            return self.epsilon_end;
        }
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }

    pub fn num_epochs(&self) -> usize {
        self.num_episodes.div_ceil(self.epoch_size)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainDiagnostics {
    /// Mean extrinsic episode return per epoch.
    pub extrinsic_return: Vec<f64>,
    /// Mean discriminator loss per epoch; zeros without a discriminator.
    pub intent_loss: Vec<f64>,
    /// Exact return of the greedy pair at each epoch end, averaged over
    /// intents.
    pub greedy_return: Vec<f64>,
    /// Discriminator loss on the greedy post-action observations at each
    /// epoch end, averaged over intents and objects.
    pub greedy_intent_loss: Vec<f64>,
    pub lambda_history: Vec<f64>,
    pub restart_count: usize,
    pub episodes_run: usize,
}

/// Accumulates per-episode values into per-epoch means.
#[derive(Debug, Default)]
pub(crate) struct EpochMeter {
    ret_sum: f64,
    loss_sum: f64,
    loss_count: usize,
    episodes: usize,
}

impl EpochMeter {
    pub(crate) fn record(&mut self, extrinsic: f64, losses: &[f64]) {
        self.ret_sum += extrinsic;
        self.loss_sum += losses.iter().sum::<f64>();
        self.loss_count += losses.len();
        self.episodes += 1;
    }

    pub(crate) fn flush(&mut self, diag: &mut TrainDiagnostics) {
        if self.episodes == 0 {
            return;
        }
        diag.extrinsic_return.push(self.ret_sum / self.episodes as f64);
        let loss = if self.loss_count == 0 { 0.0 } else { self.loss_sum / self.loss_count as f64 };
        diag.intent_loss.push(loss);
        *self = EpochMeter::default();
    }
}

#[derive(Debug, Clone)]
pub struct BaselineRun {
    pub p1: QTable,
    pub p2: QTable,
    pub diagnostics: TrainDiagnostics,
}

fn greedy_return(env: &Env, p1: &QTable, p2: &QTable) -> f64 {
    env.exact_return(&GreedyP1 { env, table: p1, intent: None }, &GreedyP2 { env, table: p2 })
        .expect("greedy policies are total")
}

/// Plain self-play with two independent tabular learners.
pub fn train_baseline(env: &Env, cfg: &TrainConfig) -> BaselineRun {
    let mut rng = seeded_rng(cfg.seed);
    let mut p1 = QTable::for_env(env, Role::Player1);
    let mut p2 = QTable::for_env(env, Role::Player2);
    let p1_legal: Vec<usize> = (0..p1.num_actions()).collect();
    let p2_legal: Vec<usize> = (0..p2.num_actions()).collect();
    let mut diag = TrainDiagnostics::default();
    let mut meter = EpochMeter::default();

    for episode in 0..cfg.num_episodes {
        let eps = cfg.epsilon(episode);
        let (state, obs_p1, _) = env.reset(&mut rng);
        let key1 = StateKey::plain(obs_p1);
        let a1 = p1.epsilon_greedy(&key1, &p1_legal, eps, &mut rng);
        let action1 = env.action_from_index(Role::Player1, a1).expect("canonical index");
        let first = env.step(&state, action1).expect("P1 acts on its turn");

        if first.done {
            p1.q_update(key1, a1, first.reward, None, cfg.alpha, cfg.gamma);
            meter.record(first.reward, &[]);
        } else {
            let key2 = StateKey::plain(first.obs_p2);
            let a2 = p2.epsilon_greedy(&key2, &p2_legal, eps, &mut rng);
            let action2: Action = env.action_from_index(Role::Player2, a2).expect("canonical index");
            let second = env.step(&first.next_state, action2).expect("P2 acts on its turn");
            p1.q_update(key1, a1, first.reward + cfg.gamma * second.reward, None, cfg.alpha, cfg.gamma);
            p2.q_update(key2, a2, second.reward, None, cfg.alpha, cfg.gamma);
            meter.record(second.next_state.accumulated_reward, &[]);
        }

        diag.episodes_run += 1;
        if diag.episodes_run % cfg.epoch_size == 0 || diag.episodes_run == cfg.num_episodes {
            meter.flush(&mut diag);
            diag.greedy_return.push(greedy_return(env, &p1, &p2));
            diag.greedy_intent_loss.push(0.0);
        }
    }
    BaselineRun { p1, p2, diagnostics: diag }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;

    fn key() -> StateKey {
        StateKey::plain(ObservationKey::MessageHeard(0))
    }

    #[test]
    fn greedy_tie_break_and_argmax() {
        let mut t = QTable::new(Role::Player1, 4);
        let legal = [0, 1, 2, 3];
        assert_eq!(t.greedy_action(&key(), &legal), 0);
        t.set(key(), 2, 5.0);
        assert_eq!(t.greedy_action(&key(), &legal), 2);
        t.set(key(), 1, 5.0);
        assert_eq!(t.greedy_action(&key(), &legal), 1);
        assert_eq!(t.greedy_action(&key(), &[3, 2]), 2);
    }

    #[test]
    fn epsilon_zero_is_greedy() {
        let mut t = QTable::new(Role::Player2, 3);
        t.set(key(), 2, 1.0);
        let mut rng = seeded_rng(1);
        for _ in 0..100 {
            assert_eq!(t.epsilon_greedy(&key(), &[0, 1, 2], 0.0, &mut rng), 2);
        }
    }

    #[test]
    fn epsilon_one_is_uniform() {
        let t = QTable::new(Role::Player1, 4);
        let mut rng = seeded_rng(11);
        let n = 40_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[t.epsilon_greedy(&key(), &[0, 1, 2, 3], 1.0, &mut rng)] += 1;
        }
        let sigma = (n as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 / 4.0).abs() < 5.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn epsilon_greedy_is_reproducible() {
        let t = QTable::new(Role::Player1, 4);
        let draw = |seed| {
            let mut rng = seeded_rng(seed);
            (0..64).map(|_| t.epsilon_greedy(&key(), &[0, 1, 2, 3], 0.5, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }

    #[test]
    fn q_update_arithmetic() {
        let mut t = QTable::new(Role::Player2, 3);
        let td = t.q_update(key(), 1, 5.0, None, 0.1, 1.0);
        assert_eq!(td, 5.0);
        assert_eq!(t.value(&key(), 1), 0.5);

        t.set(key(), 2, 10.0);
        let td = t.q_update(key(), 2, 10.0, None, 0.7, 1.0);
        assert_eq!(td, 0.0);
        assert_eq!(t.value(&key(), 2), 10.0);

        let next = StateKey::plain(ObservationKey::P1Left);
        t.set(next, 0, 10.0);
        let k = StateKey::plain(ObservationKey::Initial);
        t.q_update(k, 0, 0.0, Some((next, &[0, 1, 2])), 0.1, 1.0);
        assert_eq!(t.value(&k, 0), 1.0);
    }

    #[test]
    fn q_update_converges_monotonically() {
        let mut t = QTable::new(Role::Player2, 3);
        let r = 7.25;
        let mut gap = (t.value(&key(), 0) - r).abs();
        for _ in 0..200 {
            t.q_update(key(), 0, r, None, 0.3, 1.0);
            let g = (t.value(&key(), 0) - r).abs();
            // Strict while the step is representable; at ulp scale the
            // update can round to a no-op.
            assert!(g <= gap);
            if gap > 1e-12 {
                assert!(g < gap);
            }
            gap = g;
        }
        assert!(gap < 1e-9);
    }

    #[test]
    fn epsilon_schedule() {
        let cfg = TrainConfig { num_episodes: 1000, ..Default::default() };
        assert_eq!(cfg.epsilon(0), 1.0);
        assert!((cfg.epsilon(400) - 0.525).abs() < 1e-12);
        assert_eq!(cfg.epsilon(800), 0.05);
        assert_eq!(cfg.epsilon(999), 0.05);
        assert_eq!(cfg.num_epochs(), 2);
    }

    #[test]
    fn zero_episodes_gives_leave_policy() {
        let env = Env::new(EnvConfig::default()).unwrap();
        let cfg = TrainConfig { num_episodes: 0, ..Default::default() };
        let run = train_baseline(&env, &cfg);
        assert!(run.p1.is_empty() && run.p2.is_empty());
        let ret = env
            .exact_return(
                &GreedyP1 { env: &env, table: &run.p1, intent: None },
                &GreedyP2 { env: &env, table: &run.p2 },
            )
            .unwrap();
        assert_eq!(ret, 1.0);
        assert!(run.diagnostics.extrinsic_return.is_empty());
    }

    #[test]
    fn diagnostics_track_epochs() {
        let env = Env::new(EnvConfig::default()).unwrap();
        let cfg = TrainConfig { num_episodes: 1_250, epoch_size: 500, ..Default::default() };
        let run = train_baseline(&env, &cfg);
        assert_eq!(run.diagnostics.episodes_run, 1_250);
        assert_eq!(run.diagnostics.extrinsic_return.len(), 3);
        assert_eq!(run.diagnostics.intent_loss, vec![0.0; 3]);
        assert_eq!(run.diagnostics.greedy_return.len(), 3);
    }
}
