//! Two-player referential game.
//!
//! Player 1 sees one of `K` hidden objects and may leave, send one of `M`
//! messages, or pay a penalty to lift the curtain and reveal the object to
//! Player 2. Player 2 then leaves or guesses the object. The team shares a
//! single scalar reward per step; an episode has at most two decisions.

use std::fmt;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    Config(String),
    #[error("{0}")]
    Phase(String),
    #[error("policy has no action for reachable observation {0}")]
    IncompletePolicy(ObservationKey),
}

/// Game parameters. Defaults are the classic cat/dog game.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub num_objects: usize,
    pub num_messages: usize,
    pub reward_p1_leave: f64,
    pub reward_p2_leave: f64,
    pub curtain_penalty: f64,
    pub reward_correct: f64,
    pub reward_incorrect: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            num_objects: 2,
            num_messages: 2,
            reward_p1_leave: 1.0,
            reward_p2_leave: 0.5,
            curtain_penalty: -5.0,
            reward_correct: 10.0,
            reward_incorrect: -10.0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.num_objects < 2 {
            return Err(EnvError::Config(format!(
                "num_objects must be >= 2, got {}",
                self.num_objects
            )));
        }
        if self.num_messages < 1 {
            return Err(EnvError::Config(format!(
                "num_messages must be >= 1, got {}",
                self.num_messages
            )));
        }
        let ordered = self.reward_correct > self.reward_p1_leave
            && self.reward_p1_leave > self.reward_p2_leave
            && self.reward_p2_leave > self.reward_incorrect;
        if !ordered {
            return Err(EnvError::Config(
                "rewards must satisfy correct > p1_leave > p2_leave > incorrect".into(),
            ));
        }
        if self.curtain_penalty.is_nan() || self.curtain_penalty > 0.0 {
            return Err(EnvError::Config(format!(
                "curtain_penalty must be <= 0, got {}",
                self.curtain_penalty
            )));
        }
        let all_finite = [
            self.reward_p1_leave,
            self.reward_p2_leave,
            self.curtain_penalty,
            self.reward_correct,
            self.reward_incorrect,
        ]
        .iter()
        .all(|r| r.is_finite());
        if !all_finite {
            return Err(EnvError::Config("rewards must be finite".into()));
        }
        Ok(())
    }

    /// Canonical `key=value;...` rendering. Two configs describe the same
    /// game iff their fingerprints are equal.
    pub fn fingerprint(&self) -> String {
        format!(
            "num_objects={};num_messages={};reward_p1_leave={};reward_p2_leave={};\
             curtain_penalty={};reward_correct={};reward_incorrect={}",
            self.num_objects,
            self.num_messages,
            self.reward_p1_leave,
            self.reward_p2_leave,
            self.curtain_penalty,
            self.reward_correct,
            self.reward_incorrect
        )
    }

    /// Inverse of [`EnvConfig::fingerprint`]. Only the canonical rendering is
    /// accepted, so `from_fingerprint(s)?.fingerprint() == s`.
    pub fn from_fingerprint(s: &str) -> Result<Self, EnvError> {
        let bad = |m: String| EnvError::Config(format!("bad fingerprint `{s}`: {m}"));
        let mut fields = std::collections::BTreeMap::new();
        for part in s.split(';') {
            let (k, v) = part.split_once('=').ok_or_else(|| bad(format!("`{part}` is not key=value")))?;
            if fields.insert(k, v).is_some() {
                return Err(bad(format!("duplicate key `{k}`")));
            }
        }
        let int = |k: &str| -> Result<usize, EnvError> {
            fields.get(k).ok_or_else(|| bad(format!("missing `{k}`")))?.parse().map_err(|_| bad(format!("`{k}` is not an integer")))
        };
        let real = |k: &str| -> Result<f64, EnvError> {
            fields.get(k).ok_or_else(|| bad(format!("missing `{k}`")))?.parse().map_err(|_| bad(format!("`{k}` is not a number")))
        };
        let config = Self {
            num_objects: int("num_objects")?,
            num_messages: int("num_messages")?,
            reward_p1_leave: real("reward_p1_leave")?,
            reward_p2_leave: real("reward_p2_leave")?,
            curtain_penalty: real("curtain_penalty")?,
            reward_correct: real("reward_correct")?,
            reward_incorrect: real("reward_incorrect")?,
        };
        if config.fingerprint() != s {
            return Err(bad("not in canonical form".into()));
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Player1,
    Player2,
}

impl Role {
    pub fn tag(self) -> &'static str {
        match self {
            Role::Player1 => "p1",
            Role::Player2 => "p2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum P1Action {
    Leave,
    SendMessage(usize),
    LiftCurtain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum P2Action {
    Leave,
    Guess(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    P1(P1Action),
    P2(P2Action),
}

impl Action {
    pub fn role(&self) -> Role {
        match self {
            Action::P1(_) => Role::Player1,
            Action::P2(_) => Role::Player2,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::P1(P1Action::Leave) => write!(f, "leave"),
            Action::P1(P1Action::SendMessage(m)) => write!(f, "msg{m}"),
            Action::P1(P1Action::LiftCurtain) => write!(f, "curtain"),
            Action::P2(P2Action::Leave) => write!(f, "leave"),
            Action::P2(P2Action::Guess(k)) => write!(f, "guess{k}"),
        }
    }
}

/// What a player sees. `ObjectSeen` belongs to Player 1, everything else to
/// Player 2. Only `CurtainRevealed` tells Player 2 which object is hidden.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObservationKey {
    ObjectSeen(usize),
    Initial,
    MessageHeard(usize),
    CurtainRevealed(usize),
    P1Left,
}

impl ObservationKey {
    pub fn role(&self) -> Role {
        match self {
            ObservationKey::ObjectSeen(_) => Role::Player1,
            _ => Role::Player2,
        }
    }
}

impl fmt::Display for ObservationKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObservationKey::ObjectSeen(k) => write!(f, "seen{k}"),
            ObservationKey::Initial => write!(f, "initial"),
            ObservationKey::MessageHeard(m) => write!(f, "heard{m}"),
            ObservationKey::CurtainRevealed(k) => write!(f, "revealed{k}"),
            ObservationKey::P1Left => write!(f, "p1left"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    P1Turn,
    P2Turn,
    Terminal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeState {
    pub object_id: usize,
    pub phase: Phase,
    pub p1_action: Option<P1Action>,
    pub accumulated_reward: f64,
    pub step_count: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: EpisodeState,
    pub obs_p1: ObservationKey,
    pub obs_p2: ObservationKey,
    /// Team reward for this step, credited to both players.
    pub reward: f64,
    pub done: bool,
}

/// Deterministic policy: a (possibly partial) map from observations to actions.
pub trait DeterministicPolicy<A> {
    fn act(&self, obs: &ObservationKey) -> Option<A>;
}

impl<A: Copy> DeterministicPolicy<A> for std::collections::HashMap<ObservationKey, A> {
    fn act(&self, obs: &ObservationKey) -> Option<A> {
        self.get(obs).copied()
    }
}

impl<A: Copy> DeterministicPolicy<A> for std::collections::BTreeMap<ObservationKey, A> {
    fn act(&self, obs: &ObservationKey) -> Option<A> {
        self.get(obs).copied()
    }
}

/// Wraps a closure as a policy.
pub struct FnPolicy<F>(pub F);

impl<A, F: Fn(&ObservationKey) -> Option<A>> DeterministicPolicy<A> for FnPolicy<F> {
    fn act(&self, obs: &ObservationKey) -> Option<A> {
        (self.0)(obs)
    }
}

/// Immutable game handle.
#[derive(Debug, Clone)]
pub struct Env {
    config: EnvConfig,
}

impl Env {
    pub fn new(config: EnvConfig) -> Result<Self, EnvError> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn num_objects(&self) -> usize {
        self.config.num_objects
    }

    pub fn num_messages(&self) -> usize {
        self.config.num_messages
    }

    pub fn num_actions(&self, role: Role) -> usize {
        match role {
            Role::Player1 => self.config.num_messages + 2,
            Role::Player2 => self.config.num_objects + 1,
        }
    }

    pub fn num_observations(&self, role: Role) -> usize {
        match role {
            Role::Player1 => self.config.num_objects,
            Role::Player2 => 1 + self.config.num_messages + self.config.num_objects + 1,
        }
    }

    /// Player 1 actions in canonical order: leave, messages, curtain.
    pub fn p1_actions(&self) -> Vec<P1Action> {
        let mut out = Vec::with_capacity(self.num_actions(Role::Player1));
        out.push(P1Action::Leave);
        out.extend((0..self.config.num_messages).map(P1Action::SendMessage));
        out.push(P1Action::LiftCurtain);
        out
    }

    /// Player 2 actions in canonical order: leave, then guesses.
    pub fn p2_actions(&self) -> Vec<P2Action> {
        let mut out = Vec::with_capacity(self.num_actions(Role::Player2));
        out.push(P2Action::Leave);
        out.extend((0..self.config.num_objects).map(P2Action::Guess));
        out
    }

    pub fn p1_action_index(&self, a: P1Action) -> usize {
        match a {
            P1Action::Leave => 0,
            P1Action::SendMessage(m) => 1 + m,
            P1Action::LiftCurtain => 1 + self.config.num_messages,
        }
    }

    pub fn p1_action_from_index(&self, idx: usize) -> Option<P1Action> {
        let m = self.config.num_messages;
        match idx {
            0 => Some(P1Action::Leave),
            i if i <= m => Some(P1Action::SendMessage(i - 1)),
            i if i == m + 1 => Some(P1Action::LiftCurtain),
            _ => None,
        }
    }

    pub fn p2_action_index(&self, a: P2Action) -> usize {
        match a {
            P2Action::Leave => 0,
            P2Action::Guess(k) => 1 + k,
        }
    }

    pub fn p2_action_from_index(&self, idx: usize) -> Option<P2Action> {
        match idx {
            0 => Some(P2Action::Leave),
            i if i <= self.config.num_objects => Some(P2Action::Guess(i - 1)),
            _ => None,
        }
    }

    pub fn action_index(&self, a: Action) -> usize {
        match a {
            Action::P1(a) => self.p1_action_index(a),
            Action::P2(a) => self.p2_action_index(a),
        }
    }

    pub fn action_from_index(&self, role: Role, idx: usize) -> Option<Action> {
        match role {
            Role::Player1 => self.p1_action_from_index(idx).map(Action::P1),
            Role::Player2 => self.p2_action_from_index(idx).map(Action::P2),
        }
    }

    /// Canonical per-role observation id, used by the policy file format.
    pub fn observation_id(&self, obs: ObservationKey) -> usize {
        let (m, k) = (self.config.num_messages, self.config.num_objects);
        match obs {
            ObservationKey::ObjectSeen(o) => o,
            ObservationKey::Initial => 0,
            ObservationKey::MessageHeard(msg) => 1 + msg,
            ObservationKey::CurtainRevealed(o) => 1 + m + o,
            ObservationKey::P1Left => 1 + m + k,
        }
    }

    pub fn observation_from_id(&self, role: Role, id: usize) -> Option<ObservationKey> {
        let (m, k) = (self.config.num_messages, self.config.num_objects);
        match role {
            Role::Player1 => (id < k).then_some(ObservationKey::ObjectSeen(id)),
            Role::Player2 => match id {
                0 => Some(ObservationKey::Initial),
                i if i <= m => Some(ObservationKey::MessageHeard(i - 1)),
                i if i <= m + k => Some(ObservationKey::CurtainRevealed(i - 1 - m)),
                i if i == m + k + 1 => Some(ObservationKey::P1Left),
                _ => None,
            },
        }
    }

    /// Starts an episode with the object drawn uniformly.
    pub fn reset<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
    ) -> (EpisodeState, ObservationKey, ObservationKey) {
        let object_id = rng.gen_range(0..self.config.num_objects);
        self.reset_with_object(object_id)
    }

    pub fn reset_with_object(
        &self,
        object_id: usize,
    ) -> (EpisodeState, ObservationKey, ObservationKey) {
        let state = EpisodeState {
            object_id,
            phase: Phase::P1Turn,
            p1_action: None,
            accumulated_reward: 0.0,
            step_count: 0,
        };
        (
            state,
            ObservationKey::ObjectSeen(object_id),
            ObservationKey::Initial,
        )
    }

    pub fn legal_actions(&self, state: &EpisodeState) -> Result<Vec<Action>, EnvError> {
        match state.phase {
            Phase::P1Turn => Ok(self.p1_actions().into_iter().map(Action::P1).collect()),
            Phase::P2Turn => Ok(self.p2_actions().into_iter().map(Action::P2).collect()),
            Phase::Terminal => Err(EnvError::Phase("no legal actions in a terminal state".into())),
        }
    }

    pub fn step(&self, state: &EpisodeState, action: Action) -> Result<StepResult, EnvError> {
        let cfg = &self.config;
        let seen = ObservationKey::ObjectSeen(state.object_id);
        match (state.phase, action) {
            (Phase::Terminal, _) => Err(EnvError::Phase("step called on a terminal state".into())),
            (Phase::P1Turn, Action::P1(a)) => {
                let (reward, obs_p2, phase) = match a {
                    P1Action::Leave => (cfg.reward_p1_leave, ObservationKey::P1Left, Phase::Terminal),
                    P1Action::SendMessage(m) => {
                        if m >= cfg.num_messages {
                            return Err(EnvError::Phase(format!("message {m} out of range")));
                        }
                        (0.0, ObservationKey::MessageHeard(m), Phase::P2Turn)
                    }
                    P1Action::LiftCurtain => (
                        cfg.curtain_penalty,
                        ObservationKey::CurtainRevealed(state.object_id),
                        Phase::P2Turn,
                    ),
                };
                let next_state = EpisodeState {
                    object_id: state.object_id,
                    phase,
                    p1_action: Some(a),
                    accumulated_reward: state.accumulated_reward + reward,
                    step_count: state.step_count + 1,
                };
                Ok(StepResult {
                    next_state,
                    obs_p1: seen,
                    obs_p2,
                    reward,
                    done: phase == Phase::Terminal,
                })
            }
            (Phase::P2Turn, Action::P2(a)) => {
                let reward = match a {
                    P2Action::Leave => cfg.reward_p2_leave,
                    P2Action::Guess(k) if k >= cfg.num_objects => {
                        return Err(EnvError::Phase(format!("guess {k} out of range")));
                    }
                    P2Action::Guess(k) if k == state.object_id => cfg.reward_correct,
                    P2Action::Guess(_) => cfg.reward_incorrect,
                };
                let obs_p2 = match state.p1_action {
                    Some(P1Action::SendMessage(m)) => ObservationKey::MessageHeard(m),
                    Some(P1Action::LiftCurtain) => ObservationKey::CurtainRevealed(state.object_id),
                    _ => ObservationKey::Initial,
                };
                let next_state = EpisodeState {
                    object_id: state.object_id,
                    phase: Phase::Terminal,
                    p1_action: state.p1_action,
                    accumulated_reward: state.accumulated_reward + reward,
                    step_count: state.step_count + 1,
                };
                Ok(StepResult {
                    next_state,
                    obs_p1: seen,
                    obs_p2,
                    reward,
                    done: true,
                })
            }
            (phase, a) => Err(EnvError::Phase(format!(
                "action {a} by {:?} is not legal in phase {phase:?}",
                a.role()
            ))),
        }
    }

    /// Plays one episode with a fixed object and deterministic policies.
    pub fn play_deterministic<P1, P2>(
        &self,
        object_id: usize,
        p1: &P1,
        p2: &P2,
    ) -> Result<f64, EnvError>
    where
        P1: DeterministicPolicy<P1Action> + ?Sized,
        P2: DeterministicPolicy<P2Action> + ?Sized,
    {
        let (state, obs_p1, _) = self.reset_with_object(object_id);
        let a1 = p1.act(&obs_p1).ok_or(EnvError::IncompletePolicy(obs_p1))?;
        let first = self.step(&state, Action::P1(a1))?;
        if first.done {
            return Ok(first.next_state.accumulated_reward);
        }
        let a2 = p2
            .act(&first.obs_p2)
            .ok_or(EnvError::IncompletePolicy(first.obs_p2))?;
        let second = self.step(&first.next_state, Action::P2(a2))?;
        Ok(second.next_state.accumulated_reward)
    }

    /// Episode return for each possible hidden object.
    pub fn returns_by_object<P1, P2>(&self, p1: &P1, p2: &P2) -> Result<Vec<f64>, EnvError>
    where
        P1: DeterministicPolicy<P1Action> + ?Sized,
        P2: DeterministicPolicy<P2Action> + ?Sized,
    {
        (0..self.config.num_objects)
            .map(|k| self.play_deterministic(k, p1, p2))
            .collect()
    }

    /// Expected return of a deterministic policy pair under the uniform
    /// object prior.
    pub fn exact_return<P1, P2>(&self, p1: &P1, p2: &P2) -> Result<f64, EnvError>
    where
        P1: DeterministicPolicy<P1Action> + ?Sized,
        P2: DeterministicPolicy<P2Action> + ?Sized,
    {
        let returns = self.returns_by_object(p1, p2)?;
        Ok(returns.iter().sum::<f64>() / returns.len() as f64)
    }

    /// Expected return when both players pick uniformly among legal actions.
    pub fn uniform_random_return(&self) -> f64 {
        let cfg = &self.config;
        let p2_actions = self.p2_actions();
        let mut total = 0.0;
        for object in 0..cfg.num_objects {
            let (state, _, _) = self.reset_with_object(object);
            let mut per_object = 0.0;
            for a1 in self.p1_actions() {
                let first = self.step(&state, Action::P1(a1)).expect("legal by construction");
                if first.done {
                    per_object += first.reward;
                    continue;
                }
                let follow: f64 = p2_actions
                    .iter()
                    .map(|&a2| {
                        self.step(&first.next_state, Action::P2(a2))
                            .expect("legal by construction")
                            .reward
                    })
                    .sum::<f64>()
                    / p2_actions.len() as f64;
                per_object += first.reward + follow;
            }
            total += per_object / self.num_actions(Role::Player1) as f64;
        }
        total / cfg.num_objects as f64
    }
}
