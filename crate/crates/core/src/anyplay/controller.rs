use crate::env::Env;
use crate::qlearn::{TrainConfig, TrainDiagnostics};

use super::AnyPlayConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    Continue,
    Restart(f64),
}

/// Warmup check on the intrinsic scale. Runs once, at the end of the warmup
/// epoch, on the greedy snapshot: an intent loss still near that of an
/// untrained discriminator means lambda is too small, a game score still
/// near that of random play means it is too large.
#[derive(Debug, Clone)]
pub struct LambdaController {
    pub warmup_epochs: usize,
    /// Loss of the untrained (uniform) discriminator, `ln N`.
    pub initial_intent_loss: f64,
    pub random_return: f64,
    pub intent_loss_drop_threshold: f64,
    pub return_gain_threshold: f64,
    pub lambda_multiplier: f64,
    /// With a single intent lambda has no effect, so there is nothing to tune.
    pub active: bool,
}

impl LambdaController {
    pub fn new(env: &Env, train: &TrainConfig, anyplay: &AnyPlayConfig) -> Self {
        let epochs = train.num_epochs();
        let warmup_epochs = ((anyplay.warmup_fraction * epochs as f64).round() as usize).max(1);
        Self {
            warmup_epochs,
            initial_intent_loss: (anyplay.num_intents as f64).ln(),
            random_return: env.uniform_random_return(),
            intent_loss_drop_threshold: anyplay.intent_loss_drop_threshold,
            return_gain_threshold: anyplay.return_gain_threshold,
            lambda_multiplier: anyplay.lambda_multiplier,
            active: anyplay.num_intents > 1,
        }
    }

    pub fn decide(&self, diag: &TrainDiagnostics, lambda: f64, epoch: usize) -> Decision {
        if !self.active || epoch != self.warmup_epochs || diag.greedy_intent_loss.len() < epoch {
            return Decision::Continue;
        }
        let current = diag.greedy_intent_loss[epoch - 1];
        let drop = (self.initial_intent_loss - current) / self.initial_intent_loss;
        if drop < self.intent_loss_drop_threshold {
            return Decision::Restart(lambda * self.lambda_multiplier);
        }
        let gain = diag.greedy_return[epoch - 1] - self.random_return;
        if gain < self.return_gain_threshold {
            return Decision::Restart(lambda / self.lambda_multiplier);
        }
        Decision::Continue
    }
}
