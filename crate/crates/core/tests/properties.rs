use anyplay_core::anyplay::{cross_entropy, cross_entropy_grad, softmax, Discriminator};
use anyplay_core::env::{Env, EnvConfig, ObservationKey, Role};
use anyplay_core::qlearn::{QTable, StateKey};
use anyplay_core::xplay::{pearson, PolicyArtifact};
use proptest::prelude::*;

/// Central-difference gradient of `cross_entropy(softmax(logits), z)`.
fn numeric_grad(logits: &[f64], z: usize, h: f64) -> Vec<f64> {
    (0..logits.len())
        .map(|i| {
            let mut up = logits.to_vec();
            let mut down = logits.to_vec();
            up[i] += h;
            down[i] -= h;
            (cross_entropy(&softmax(&up), z) - cross_entropy(&softmax(&down), z)) / (2.0 * h)
        })
        .collect()
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(f64::MIN_POSITIVE)
}

proptest! {
    #[test]
    fn gradient_matches_finite_differences(
        logits in prop::collection::vec(-4.0f64..4.0, 2..8),
        z_seed in 0usize..1000,
    ) {
        let z = z_seed % logits.len();
        let analytic = cross_entropy_grad(&softmax(&logits), z);
        let numeric = numeric_grad(&logits, z, 1e-5);
        prop_assert!(relative_error(&analytic, &numeric) < 1e-6);
    }

    #[test]
    fn predictions_stay_normalized(
        n in 1usize..7,
        steps in prop::collection::vec((0usize..6, 0usize..4), 1..200),
        eta in 0.01f64..2.0,
    ) {
        let keys = [
            ObservationKey::Initial,
            ObservationKey::MessageHeard(0),
            ObservationKey::CurtainRevealed(1),
            ObservationKey::P1Left,
        ];
        let mut d = Discriminator::new(n, eta);
        for (z, k) in steps {
            d.update(keys[k], z % n);
            for key in &keys {
                let p = d.predict(key);
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(p.iter().all(|&v| v > 0.0 && v <= 1.0));
            }
        }
    }

    #[test]
    fn intrinsic_reward_is_negated_scaled_loss(
        logits in prop::collection::vec(-10.0f64..10.0, 1..7),
        lambda in 0.0f64..100.0,
        z_seed in 0usize..100,
    ) {
        let z = z_seed % logits.len();
        let mut d = Discriminator::new(logits.len(), 0.1);
        d.set_logits(ObservationKey::Initial, logits.clone());
        let r = d.intrinsic_reward(&ObservationKey::Initial, z, lambda);
        prop_assert!(r <= 0.0);
        prop_assert_eq!(r, -lambda * cross_entropy(&d.predict(&ObservationKey::Initial), z));
    }

    #[test]
    fn pearson_symmetric_and_bounded(
        pairs in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 3..20),
    ) {
        let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let (Ok(a), Ok(b)) = (pearson(&xs, &ys), pearson(&ys, &xs)) {
            prop_assert_eq!(a, b);
            prop_assert!(a.abs() <= 1.0);
        }
    }

    #[test]
    fn pearson_affine_invariant(
        pairs in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 3..20),
        scale in 0.1f64..10.0,
        shift in -100.0f64..100.0,
    ) {
        let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let spread = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assume!(spread(&xs) > 1e-3 && spread(&ys) > 1e-3);
        let r = pearson(&xs, &ys).unwrap();
        let moved: Vec<f64> = xs.iter().map(|x| scale * x + shift).collect();
        prop_assert!((pearson(&moved, &ys).unwrap() - r).abs() < 1e-12);
        let moved: Vec<f64> = ys.iter().map(|y| scale * y + shift).collect();
        prop_assert!((pearson(&xs, &moved).unwrap() - r).abs() < 1e-12);
    }

    #[test]
    fn policy_text_round_trips(
        entries in prop::collection::vec((0usize..2, prop::option::of(0usize..5), 0usize..4, any::<f64>()), 0..40),
        frozen in prop::option::of(0usize..5),
        seed in any::<u64>(),
    ) {
        let env = Env::new(EnvConfig::default()).unwrap();
        let mut table = QTable::for_env(&env, Role::Player1);
        for (k, z, a, v) in entries {
            if v.is_nan() {
                continue;
            }
            table.set(StateKey { obs: ObservationKey::ObjectSeen(k), intent: z }, a, v);
        }
        let artifact = PolicyArtifact {
            role: Role::Player1,
            algorithm: "prop".into(),
            num_intents: 5,
            frozen_intent: frozen,
            seed,
            env: EnvConfig::default(),
            table,
        };
        let text = artifact.to_text();
        let back = PolicyArtifact::from_text(&text).unwrap();
        prop_assert_eq!(&back, &artifact);
        prop_assert_eq!(back.to_text(), text);
    }
}
