use std::collections::BTreeMap;

use rand::Rng;

use crate::env::ObservationKey;

/// Latent play-style index `z` in `0..num_intents`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Intent {
    pub value: usize,
    pub num_intents: usize,
}

impl Intent {
    pub fn new(value: usize, num_intents: usize) -> Self {
        assert!(value < num_intents, "intent {value} out of range for N={num_intents}");
        Self { value, num_intents }
    }

    pub fn one_hot(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.num_intents];
        v[self.value] = 1.0;
        v
    }
}

/// Uniform intent draw. Consumes exactly one draw, even when `n == 1`.
pub fn sample_intent<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Intent {
    assert!(n >= 1, "need at least one intent");
    Intent::new(rng.gen_range(0..n), n)
}

/// Tabular softmax classifier from accommodator observations to intents.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    num_intents: usize,
    eta: f64,
    logits: BTreeMap<ObservationKey, Vec<f64>>,
}

impl Discriminator {
    pub fn new(num_intents: usize, eta: f64) -> Self {
        assert!(num_intents >= 1);
        Self { num_intents, eta, logits: BTreeMap::new() }
    }

    pub fn num_intents(&self) -> usize {
        self.num_intents
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn logits(&self, key: &ObservationKey) -> Vec<f64> {
        self.logits
            .get(key)
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.num_intents])
    }

    pub fn set_logits(&mut self, key: ObservationKey, logits: Vec<f64>) {
        assert_eq!(logits.len(), self.num_intents);
        self.logits.insert(key, logits);
    }

    pub fn predict(&self, key: &ObservationKey) -> Vec<f64> {
        match self.logits.get(key) {
            Some(l) => softmax(l),
            None => vec![1.0 / self.num_intents as f64; self.num_intents],
        }
    }

    /// Most likely intent, lowest index on ties.
    pub fn top1(&self, key: &ObservationKey) -> usize {
        let p = self.predict(key);
        let mut best = 0;
        for (i, &v) in p.iter().enumerate() {
            if v > p[best] {
                best = i;
            }
        }
        best
    }

    /// One gradient step on the cross-entropy loss for `(key, z)` using the
    /// instance learning rate. Returns the loss before the step.
    pub fn update(&mut self, key: ObservationKey, z: usize) -> f64 {
        let eta = self.eta;
        self.update_with_rate(key, z, eta)
    }

    pub fn update_with_rate(&mut self, key: ObservationKey, z: usize, eta: f64) -> f64 {
        assert!(z < self.num_intents);
        let n = self.num_intents;
        let logits = self.logits.entry(key).or_insert_with(|| vec![0.0; n]);
        let probs = softmax(logits);
        let grad = cross_entropy_grad(&probs, z);
        for (l, g) in logits.iter_mut().zip(&grad) {
            *l -= eta * g;
        }
        cross_entropy(&probs, z)
    }

    /// `lambda * log q(z | key)`, i.e. the negated, scaled intent loss.
    pub fn intrinsic_reward(&self, key: &ObservationKey, z: usize, lambda: f64) -> f64 {
        intrinsic_reward(&self.predict(key), z, lambda)
    }
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `-log probs[z]`.
pub fn cross_entropy(probs: &[f64], z: usize) -> f64 {
    -probs[z].ln()
}

/// Gradient of the cross-entropy of `softmax(logits)` w.r.t. the logits.
pub fn cross_entropy_grad(probs: &[f64], z: usize) -> Vec<f64> {
    probs
        .iter()
        .enumerate()
        .map(|(i, &p)| if i == z { p - 1.0 } else { p })
        .collect()
}

pub fn intrinsic_reward(probs: &[f64], z: usize, lambda: f64) -> f64 {
    lambda * probs[z].ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;

    const KEY: ObservationKey = ObservationKey::MessageHeard(1);

    #[test]
    fn unseen_key_is_uniform() {
        let d = Discriminator::new(4, 0.1);
        assert_eq!(d.predict(&KEY), vec![0.25; 4]);
        assert_eq!(Discriminator::new(1, 0.1).predict(&KEY), vec![1.0]);
    }

    #[test]
    fn softmax_is_stable() {
        let p = softmax(&[1000.0, 0.0, 0.0, 0.0]);
        assert!(p[0] >= 1.0 - 1e-12);
        assert!(p.iter().all(|v| v.is_finite()));
        let p = softmax(&[-1000.0, -1000.0]);
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn loss_values() {
        assert!((cross_entropy(&[0.25; 4], 3) - 4f64.ln()).abs() < 1e-15);
        assert!((cross_entropy(&[0.25; 4], 3) - 1.386_294_4).abs() < 1e-7);
        assert_eq!(cross_entropy(&[0.0, 1.0], 1), 0.0);
        assert_eq!(cross_entropy(&[0.5, 0.5], 0), std::f64::consts::LN_2);
    }

    #[test]
    fn update_from_zero_logits() {
        let mut d = Discriminator::new(4, 0.1);
        let loss = d.update(KEY, 2);
        assert!((loss - 4f64.ln()).abs() < 1e-15);
        let l = d.logits(&KEY);
        let expected = [-0.025, -0.025, 0.075, -0.025];
        for (a, b) in l.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{l:?}");
        }
    }

    #[test]
    fn repeated_updates_raise_target_probability() {
        let mut d = Discriminator::new(4, 0.05);
        let mut last = d.predict(&KEY)[1];
        for _ in 0..1_000 {
            d.update(KEY, 1);
            let p = d.predict(&KEY);
            assert!(p[1] > last);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            last = p[1];
        }
        assert!(last > 0.9);
    }

    #[test]
    fn single_intent_is_inert() {
        let mut d = Discriminator::new(1, 0.5);
        assert_eq!(d.update(KEY, 0), 0.0);
        assert_eq!(d.logits(&KEY), vec![0.0]);
        assert_eq!(d.intrinsic_reward(&KEY, 0, 3.0), 0.0);
    }

    #[test]
    fn intrinsic_reward_values() {
        let d = Discriminator::new(4, 0.1);
        assert!((d.intrinsic_reward(&KEY, 0, 2.0) - (-2.772_588_7)).abs() < 1e-7);
        assert_eq!(intrinsic_reward(&[0.0, 1.0], 1, 5.0), 0.0);
        let probs = softmax(&[0.3, -1.2, 2.0]);
        assert_eq!(intrinsic_reward(&probs, 1, 1.5), -1.5 * cross_entropy(&probs, 1));
    }

    #[test]
    fn sample_intent_draws() {
        let mut rng = seeded_rng(4);
        assert!((0..100).all(|_| sample_intent(1, &mut rng).value == 0));

        let mut counts = [0usize; 4];
        let n = 40_000;
        for _ in 0..n {
            counts[sample_intent(4, &mut rng).value] += 1;
        }
        let sigma = (n as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 / 4.0).abs() < 5.0 * sigma);
        }
    }

    #[test]
    fn single_intent_consumes_one_draw() {
        use rand::RngCore;
        let mut a = seeded_rng(8);
        let mut b = seeded_rng(8);
        sample_intent(1, &mut a);
        b.next_u64();
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn one_hot_encoding() {
        assert_eq!(Intent::new(2, 4).one_hot(), vec![0.0, 0.0, 1.0, 0.0]);
    }
}
