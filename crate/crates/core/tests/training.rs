use std::collections::BTreeSet;

use anyplay_core::anyplay::{train_anyplay, AnyPlayConfig, EvalProtocol};
use anyplay_core::env::{Env, EnvConfig, ObservationKey, P1Action, Role};
use anyplay_core::qlearn::{train_baseline, GreedyP1, GreedyP2, StateKey, TrainConfig};

fn env() -> Env {
    Env::new(EnvConfig::default()).unwrap()
}

fn train(seed: u64) -> TrainConfig {
    TrainConfig { seed, ..TrainConfig::default() }
}

/// Message index sent for each object, or `None` if the policy does not
/// message on every object.
fn message_map(env: &Env, p1: &GreedyP1) -> Option<Vec<usize>> {
    use anyplay_core::env::DeterministicPolicy;
    (0..env.num_objects())
        .map(|k| match p1.act(&ObservationKey::ObjectSeen(k)) {
            Some(P1Action::SendMessage(m)) => Some(m),
            _ => None,
        })
        .collect()
}

#[test]
fn baseline_converges_with_varied_conventions() {
    let env = env();
    let mut converged = 0;
    let mut conventions = BTreeSet::new();
    for seed in 0..10 {
        let run = train_baseline(&env, &train(seed));
        let p1 = GreedyP1 { env: &env, table: &run.p1, intent: None };
        let p2 = GreedyP2 { env: &env, table: &run.p2 };
        if env.exact_return(&p1, &p2).unwrap() == 10.0 {
            converged += 1;
        }
        if let Some(map) = message_map(&env, &p1) {
            conventions.insert(map);
        }
        assert_eq!(run.diagnostics.episodes_run, 50_000);
        assert_eq!(run.diagnostics.extrinsic_return.len(), 100);
    }
    assert!(converged >= 9, "{converged}/10 converged");
    assert!(conventions.len() >= 2, "{conventions:?}");
}

#[test]
fn zero_episodes_leaves_on_everything() {
    let env = env();
    let run = train_baseline(&env, &TrainConfig { num_episodes: 0, ..train(3) });
    assert!(run.p1.is_empty() && run.p2.is_empty());
    let p1 = GreedyP1 { env: &env, table: &run.p1, intent: None };
    let p2 = GreedyP2 { env: &env, table: &run.p2 };
    assert_eq!(env.exact_return(&p1, &p2).unwrap(), 1.0);
}

#[test]
fn training_is_deterministic() {
    let env = env();
    let cfg = TrainConfig { num_episodes: 5_000, ..train(42) };
    let a = train_baseline(&env, &cfg);
    let b = train_baseline(&env, &cfg);
    assert_eq!(a.p1, b.p1);
    assert_eq!(a.p2, b.p2);
    assert_eq!(a.diagnostics, b.diagnostics);

    let ap = AnyPlayConfig::default();
    let x = train_anyplay(&env, &cfg, &ap).unwrap();
    let y = train_anyplay(&env, &cfg, &ap).unwrap();
    assert_eq!(x.specializer, y.specializer);
    assert_eq!(x.discriminator, y.discriminator);
}

fn assert_bitwise_equal(a: &anyplay_core::qlearn::QTable, b: &anyplay_core::qlearn::QTable) {
    let ra: Vec<_> = a.rows().map(|(k, v)| (*k, v.iter().map(|x| x.to_bits()).collect::<Vec<_>>())).collect();
    let rb: Vec<_> = b.rows().map(|(k, v)| (*k, v.iter().map(|x| x.to_bits()).collect::<Vec<_>>())).collect();
    assert_eq!(ra, rb);
}

#[test]
fn single_intent_matches_baseline_bit_for_bit() {
    let env = env();
    for seed in [0, 7, 123] {
        for lambda in [0.0, 2.0, 50.0] {
            let cfg = train(seed);
            let base = train_baseline(&env, &cfg);
            let ap = AnyPlayConfig { num_intents: 1, lambda, ..AnyPlayConfig::default() };
            let run = train_anyplay(&env, &cfg, &ap).unwrap();
            assert!(run.specializer.rows().all(|(k, _)| k.intent == Some(0)));
            assert_bitwise_equal(&run.specializer.slice_intent(0), &base.p1);
            assert_bitwise_equal(&run.accommodator, &base.p2);
            assert_eq!(run.diagnostics.restart_count, 0);
            assert_eq!(run.frozen_intent.map(|z| z.value), Some(0));
        }
    }
}

#[test]
fn four_intents_become_a_bijection_with_curtain_frozen() {
    let env = env();
    let curtain = env.p1_action_index(P1Action::LiftCurtain);
    let mut good = 0;
    for seed in 0..10 {
        let run = train_anyplay(&env, &train(seed), &AnyPlayConfig::default()).unwrap();
        let injective = run.intents_are_injective(&env);
        let accuracy = run.discriminator_accuracy(&env);
        if injective && accuracy == 1.0 {
            good += 1;
        }
        let z = run.frozen_intent.expect("frozen protocol").value;
        let key = StateKey::with_intent(ObservationKey::ObjectSeen(0), z);
        let legal: Vec<usize> = (0..env.num_actions(Role::Player1)).collect();
        if injective {
            assert_eq!(run.specializer.greedy_action(&key, &legal), curtain, "seed {seed}");
            let p1 = GreedyP1 { env: &env, table: &run.specializer, intent: Some(z) };
            let p2 = GreedyP2 { env: &env, table: &run.accommodator };
            assert_eq!(env.exact_return(&p1, &p2).unwrap(), 5.0);
        }
    }
    assert!(good >= 9, "{good}/10 bijective");
}

#[test]
fn uniform_protocol_has_no_frozen_intent() {
    let env = env();
    let ap = AnyPlayConfig { eval_protocol: EvalProtocol::UniformIntent, ..AnyPlayConfig::default() };
    let run = train_anyplay(&env, &TrainConfig { num_episodes: 2_000, ..train(1) }, &ap).unwrap();
    assert_eq!(run.frozen_intent, None);
}
