use std::collections::{BTreeMap, BTreeSet};

use anyplay_core::env::{Action, Env, EnvConfig, ObservationKey, P1Action, P2Action, Phase, Role};
use anyplay_core::rng::seeded_rng;
use rand::Rng;

fn random_policies<R: Rng>(env: &Env, rng: &mut R) -> (BTreeMap<ObservationKey, P1Action>, BTreeMap<ObservationKey, P2Action>) {
    let p1_actions = env.p1_actions();
    let p2_actions = env.p2_actions();
    let p1 = (0..env.num_observations(Role::Player1))
        .map(|id| (env.observation_from_id(Role::Player1, id).unwrap(), p1_actions[rng.gen_range(0..p1_actions.len())]))
        .collect();
    let p2 = (0..env.num_observations(Role::Player2))
        .map(|id| (env.observation_from_id(Role::Player2, id).unwrap(), p2_actions[rng.gen_range(0..p2_actions.len())]))
        .collect();
    (p1, p2)
}

/// Runs one episode through `step`, returning the sum of step rewards and
/// the final accumulated reward.
fn simulate<R: Rng>(
    env: &Env,
    p1: &BTreeMap<ObservationKey, P1Action>,
    p2: &BTreeMap<ObservationKey, P2Action>,
    rng: &mut R,
) -> (f64, f64) {
    let (mut state, obs1, _) = env.reset(rng);
    let mut total = 0.0;
    let first = env.step(&state, Action::P1(p1[&obs1])).unwrap();
    total += first.reward;
    state = first.next_state;
    if !first.done {
        let second = env.step(&state, Action::P2(p2[&first.obs_p2])).unwrap();
        total += second.reward;
        state = second.next_state;
    }
    assert_eq!(state.phase, Phase::Terminal);
    assert!(state.step_count <= 2);
    (total, state.accumulated_reward)
}

#[test]
fn simulated_mean_matches_exact_return() {
    for (k, m) in [(2, 2), (3, 2), (2, 3)] {
        let env = Env::new(EnvConfig { num_objects: k, num_messages: m, ..EnvConfig::default() }).unwrap();
        let mut rng = seeded_rng(k as u64 * 10 + m as u64);
        for _ in 0..10 {
            let (p1, p2) = random_policies(&env, &mut rng);
            let exact = env.exact_return(&p1, &p2).unwrap();
            let n = 10_000;
            let returns: Vec<f64> = (0..n)
                .map(|_| {
                    let (sum, acc) = simulate(&env, &p1, &p2, &mut rng);
                    assert_eq!(sum, acc);
                    sum
                })
                .collect();
            let mean = returns.iter().sum::<f64>() / n as f64;
            let sd = (returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
            if sd == 0.0 {
                assert_eq!(mean, exact);
            } else {
                assert!((mean - exact).abs() < 4.0 * sd / (n as f64).sqrt(), "{mean} vs {exact}");
            }
        }
    }
}

#[test]
fn player_two_observations_are_injective() {
    let env = Env::new(EnvConfig { num_objects: 3, num_messages: 2, ..EnvConfig::default() }).unwrap();
    let mut seen: BTreeMap<ObservationKey, (Option<P1Action>, Option<usize>)> = BTreeMap::new();
    for object in 0..env.num_objects() {
        for a in env.p1_actions() {
            let (state, _, _) = env.reset_with_object(object);
            let obs = env.step(&state, Action::P1(a)).unwrap().obs_p2;
            let revealed = (a == P1Action::LiftCurtain).then_some(object);
            let cause = (Some(a), revealed);
            if let Some(prev) = seen.insert(obs, cause) {
                assert_eq!(prev, cause, "{obs} produced by two different situations");
            }
        }
    }
    let distinct: BTreeSet<_> = seen.keys().collect();
    assert_eq!(distinct.len(), 1 + 2 + 3);
    assert_eq!(env.num_observations(Role::Player2), 1 + 2 + 3 + 1);
}

#[test]
fn same_seed_same_trajectories() {
    let env = Env::new(EnvConfig::default()).unwrap();
    let mut rng = seeded_rng(5);
    let (p1, p2) = random_policies(&env, &mut rng);
    let run = |seed| {
        let mut rng = seeded_rng(seed);
        (0..500).map(|_| simulate(&env, &p1, &p2, &mut rng).0.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(run(11), run(11));
}
