use std::collections::BTreeSet;

use rand::Rng;
use rayon::prelude::*;

use crate::env::{Env, Role};
use crate::qlearn::{GreedyP1, GreedyP2};
use crate::rng::{pairing_seed, seeded_rng};

use super::artifact::{IntentChoice, PolicyArtifact};
use super::XplayError;

#[derive(Debug, Clone, PartialEq)]
pub struct PoolMember {
    pub run_id: String,
    pub label: String,
    pub p1: PolicyArtifact,
    pub p2: PolicyArtifact,
}

/// Trained agents grouped by algorithm label. Labels in `zsc_exempt` were
/// not designed for zero-shot play and serve as the fixed partner set for
/// the one-sided score.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentPool {
    members: Vec<PoolMember>,
    zsc_exempt: BTreeSet<String>,
}

impl AgentPool {
    pub fn new(members: Vec<PoolMember>, zsc_exempt: BTreeSet<String>) -> Result<Self, XplayError> {
        if members.is_empty() {
            return Err(XplayError::Config("pool has no members".into()));
        }
        for m in &members {
            if m.p1.role != Role::Player1 || m.p2.role != Role::Player2 {
                return Err(XplayError::Config(format!("member {} has swapped roles", m.run_id)));
            }
        }
        let mut ids = BTreeSet::new();
        if let Some(m) = members.iter().find(|m| !ids.insert(m.run_id.as_str())) {
            return Err(XplayError::Config(format!("duplicate run id {}", m.run_id)));
        }
        let labels: BTreeSet<&str> = members.iter().map(|m| m.label.as_str()).collect();
        if let Some(b) = zsc_exempt.iter().find(|b| !labels.contains(b.as_str())) {
            return Err(XplayError::Config(format!("exempt label `{b}` has no members")));
        }
        Ok(Self { members, zsc_exempt })
    }

    pub fn members(&self) -> &[PoolMember] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn zsc_exempt(&self) -> &BTreeSet<String> {
        &self.zsc_exempt
    }

    /// Distinct labels in order of first appearance.
    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for m in &self.members {
            if !out.contains(&m.label) {
                out.push(m.label.clone());
            }
        }
        out
    }

    pub fn indices_of(&self, label: &str) -> Vec<usize> {
        (0..self.members.len()).filter(|&i| self.members[i].label == label).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairingResult {
    pub mean: f64,
    /// Sample standard deviation over games divided by `sqrt(n_games)`.
    pub stderr: f64,
    pub n_games: usize,
}

impl PairingResult {
    pub fn from_returns(returns: &[f64]) -> Self {
        let n = returns.len();
        assert!(n >= 1, "need at least one game");
        if returns.iter().all(|&r| r == returns[0]) {
            return Self { mean: returns[0], stderr: 0.0, n_games: n };
        }
        let mean = returns.iter().sum::<f64>() / n as f64;
        let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Self { mean, stderr: (var / n as f64).sqrt(), n_games: n }
    }
}

/// Exact return per `(intent slot, object)`. Unconditioned and fixed
/// choices have a single slot.
fn return_grid(p1: &PolicyArtifact, p2: &PolicyArtifact, env: &Env) -> Result<Vec<Vec<f64>>, XplayError> {
    let intents: Vec<Option<usize>> = match p1.intent_choice() {
        IntentChoice::Unconditioned => vec![None],
        IntentChoice::Fixed(z) => vec![Some(z)],
        IntentChoice::Uniform(n) => (0..n).map(Some).collect(),
    };
    let accom = GreedyP2 { env, table: &p2.table };
    intents
        .into_iter()
        .map(|intent| {
            let spec = GreedyP1 { env, table: &p1.table, intent };
            env.returns_by_object(&spec, &accom).map_err(XplayError::from)
        })
        .collect()
}

/// Expected return of a greedy pairing and its standard deviation over
/// the game's randomness (intent draw and object draw).
pub fn exact_pairing(p1: &PolicyArtifact, p2: &PolicyArtifact, env: &Env) -> Result<(f64, f64), XplayError> {
    p1.check_compatible(env, Role::Player1)?;
    p2.check_compatible(env, Role::Player2)?;
    let grid = return_grid(p1, p2, env)?;
    let all: Vec<f64> = grid.into_iter().flatten().collect();
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    let var = all.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

/// Monte Carlo estimate of the greedy pairing's value. Each game draws the
/// intent first (uniform protocol only) and then the object, both from the
/// stream seeded by `seed`.
pub fn play_match(
    p1: &PolicyArtifact,
    p2: &PolicyArtifact,
    env: &Env,
    n_games: usize,
    seed: u64,
) -> Result<PairingResult, XplayError> {
    p1.check_compatible(env, Role::Player1)?;
    p2.check_compatible(env, Role::Player2)?;
    if n_games == 0 {
        return Err(XplayError::Config("n_games must be >= 1".into()));
    }
    let grid = return_grid(p1, p2, env)?;
    let mut rng = seeded_rng(seed);
    let mut returns = Vec::with_capacity(n_games);
    for _ in 0..n_games {
        let slot = match p1.intent_choice() {
            IntentChoice::Uniform(n) => rng.gen_range(0..n),
            _ => 0,
        };
        let (state, _, _) = env.reset(&mut rng);
        returns.push(grid[slot][state.object_id]);
    }
    Ok(PairingResult::from_returns(&returns))
}

/// Row `i` is member `i` playing Player 1, column `j` is member `j` playing
/// Player 2.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossPlayMatrix {
    pub labels: Vec<String>,
    pub cells: Vec<Vec<PairingResult>>,
}

impl CrossPlayMatrix {
    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn means(&self) -> Vec<Vec<f64>> {
        self.cells.iter().map(|row| row.iter().map(|c| c.mean).collect()).collect()
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.cells.iter().flatten().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
            (lo.min(c.mean), hi.max(c.mean))
        })
    }
}

/// Every ordered pairing in the pool. Cells run in parallel on the current
/// rayon pool; each owns a seed derived from its position, so the result
/// does not depend on scheduling.
pub fn crossplay_matrix(
    pool: &AgentPool,
    env: &Env,
    n_games: usize,
    base_seed: u64,
) -> Result<CrossPlayMatrix, XplayError> {
    let members = pool.members();
    for m in members {
        m.p1.check_compatible(env, Role::Player1)?;
        m.p2.check_compatible(env, Role::Player2)?;
    }
    let p = members.len();
    let flat: Vec<PairingResult> = (0..p * p)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / p, idx % p);
            play_match(&members[i].p1, &members[j].p2, env, n_games, pairing_seed(base_seed, i, j))
        })
        .collect::<Result<_, _>>()?;
    Ok(CrossPlayMatrix {
        labels: members.iter().map(|m| m.run_id.clone()).collect(),
        cells: flat.chunks(p).map(|row| row.to_vec()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvConfig, ObservationKey};
    use crate::qlearn::{QTable, StateKey};

    fn env() -> Env {
        Env::new(EnvConfig::default()).unwrap()
    }

    fn artifact(role: Role, entries: &[(ObservationKey, Option<usize>, usize)], frozen: Option<usize>, n: usize) -> PolicyArtifact {
        let env = env();
        let mut table = QTable::for_env(&env, role);
        for &(obs, intent, a) in entries {
            table.set(StateKey { obs, intent }, a, 1.0);
        }
        PolicyArtifact {
            role,
            algorithm: "test".into(),
            num_intents: n,
            frozen_intent: frozen,
            seed: 0,
            env: EnvConfig::default(),
            table,
        }
    }

    use ObservationKey::*;

    fn convention_p1(flip: bool) -> PolicyArtifact {
        let m = |k: usize| 1 + if flip { 1 - k } else { k };
        artifact(Role::Player1, &[(ObjectSeen(0), None, m(0)), (ObjectSeen(1), None, m(1))], None, 1)
    }

    fn convention_p2() -> PolicyArtifact {
        artifact(Role::Player2, &[(MessageHeard(0), None, 1), (MessageHeard(1), None, 2)], None, 1)
    }

    #[test]
    fn matched_and_reversed_conventions() {
        let r = play_match(&convention_p1(false), &convention_p2(), &env(), 200, 3).unwrap();
        assert_eq!(r, PairingResult { mean: 10.0, stderr: 0.0, n_games: 200 });
        let r = play_match(&convention_p1(true), &convention_p2(), &env(), 200, 3).unwrap();
        assert_eq!(r.mean, -10.0);
        assert_eq!(r.stderr, 0.0);
    }

    #[test]
    fn curtain_pair_scores_five() {
        let p1 = artifact(Role::Player1, &[(ObjectSeen(0), None, 3), (ObjectSeen(1), None, 3)], None, 1);
        let p2 = artifact(Role::Player2, &[(CurtainRevealed(0), None, 1), (CurtainRevealed(1), None, 2)], None, 1);
        let r = play_match(&p1, &p2, &env(), 50, 9).unwrap();
        assert_eq!((r.mean, r.stderr), (5.0, 0.0));
    }

    #[test]
    fn object_dependent_pair_matches_exact() {
        // Object 0 is messaged correctly, object 1 leaves: returns {10, 1}.
        let p1 = artifact(Role::Player1, &[(ObjectSeen(0), None, 1)], None, 1);
        let p2 = convention_p2();
        let (mean, std) = exact_pairing(&p1, &p2, &env()).unwrap();
        assert_eq!((mean, std), (5.5, 4.5));
        let n = 10_000;
        let r = play_match(&p1, &p2, &env(), n, 17).unwrap();
        assert!((r.mean - mean).abs() < 4.0 * std / (n as f64).sqrt(), "{r:?}");
        assert!((r.stderr - std / (n as f64).sqrt()).abs() < 0.01);
    }

    #[test]
    fn uniform_intent_draws_per_game() {
        // Intent 0 leaves, intent 1 lifts the curtain.
        let p1 = artifact(
            Role::Player1,
            &[(ObjectSeen(0), Some(1), 3), (ObjectSeen(1), Some(1), 3)],
            None,
            2,
        );
        let p2 = artifact(Role::Player2, &[(CurtainRevealed(0), None, 1), (CurtainRevealed(1), None, 2)], None, 2);
        assert_eq!(p1.intent_choice(), IntentChoice::Uniform(2));
        let (mean, _) = exact_pairing(&p1, &p2, &env()).unwrap();
        assert_eq!(mean, 3.0);
        let r = play_match(&p1, &p2, &env(), 4_000, 1).unwrap();
        assert!((r.mean - 3.0).abs() < 4.0 * 2.0 / (4_000f64).sqrt());
        let frozen = PolicyArtifact { frozen_intent: Some(1), ..p1 };
        assert_eq!(play_match(&frozen, &p2, &env(), 10, 1).unwrap().mean, 5.0);
    }

    #[test]
    fn rejects_swapped_roles() {
        let err = play_match(&convention_p2(), &convention_p1(false), &env(), 1, 0).unwrap_err();
        assert!(matches!(err, XplayError::RoleMismatch { .. }));
    }

    #[test]
    fn single_member_matrix_is_self_play() {
        let pool = AgentPool::new(
            vec![PoolMember { run_id: "a-0".into(), label: "a".into(), p1: convention_p1(false), p2: convention_p2() }],
            BTreeSet::new(),
        )
        .unwrap();
        let m = crossplay_matrix(&pool, &env(), 7, 0).unwrap();
        assert_eq!(m.cells, vec![vec![PairingResult { mean: 10.0, stderr: 0.0, n_games: 7 }]]);
    }

    #[test]
    fn pool_validation() {
        let member = |id: &str| PoolMember { run_id: id.into(), label: "a".into(), p1: convention_p1(false), p2: convention_p2() };
        assert!(AgentPool::new(vec![], BTreeSet::new()).is_err());
        assert!(AgentPool::new(vec![member("x"), member("x")], BTreeSet::new()).is_err());
        assert!(AgentPool::new(vec![member("x")], BTreeSet::from(["b".to_string()])).is_err());
    }

    #[test]
    fn stderr_uses_sample_std() {
        let r = PairingResult::from_returns(&[1.0, 3.0]);
        assert_eq!(r.mean, 2.0);
        assert!((r.stderr - 1.0).abs() < 1e-15);
        assert_eq!(PairingResult::from_returns(&[4.0]).stderr, 0.0);
    }
}
