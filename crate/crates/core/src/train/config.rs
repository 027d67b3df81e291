use crate::config::{parse_bool, parse_value};
use crate::error::{Error, Result};
use crate::model::{Pooling, DEFAULT_LATENT_DIM};
use crate::nrl::DEFAULT_T_MAX;

use super::loss::{LossToggles, LossWeights};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Weight of the bottom-r term.
    pub lambda1: f64,
    /// Weight of the top-r term.
    pub lambda2: f64,
    pub r: usize,
    /// Epochs trained on the bag loss alone before the instance terms join.
    pub warmup_epochs: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub val_ratio: f64,
    pub runs: usize,
    pub seed: u64,
    pub toggles: LossToggles,
    pub latent_dim: usize,
    pub t_max: usize,
    pub pooling: Pooling,
    /// Run independent trainings on the rayon pool. Results are unchanged.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 2e-4,
            weight_decay: 1e-5,
            lambda1: 1.0,
            lambda2: 1.0,
            r: 5,
            warmup_epochs: 10,
            patience: 10,
            max_epochs: 100,
            val_ratio: 0.1,
            runs: 5,
            seed: 0,
            toggles: LossToggles::default(),
            latent_dim: DEFAULT_LATENT_DIM,
            t_max: DEFAULT_T_MAX,
            pooling: Pooling::Saliency,
            parallel: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if !(self.val_ratio > 0.0 && self.val_ratio < 1.0) {
            return bad("val_ratio must lie in (0, 1)");
        }
        if self.r == 0 {
            return bad("r must be at least 1");
        }
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return bad("lambda1 and lambda2 must be non-negative");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if self.runs == 0 {
            return bad("runs must be at least 1");
        }
        if self.latent_dim == 0 || self.t_max == 0 {
            return bad("latent_dim and t_max must be at least 1");
        }
        Ok(())
    }

    /// Whether the instance terms are active in 1-based `epoch`.
    pub fn warmup_active(&self, epoch: usize) -> bool {
        epoch <= self.warmup_epochs
    }

    pub fn loss_weights(&self, epoch: usize) -> LossWeights {
        LossWeights::gated(self.lambda1, self.lambda2, self.r, self.warmup_active(epoch), self.toggles)
    }

    fn instance_terms_enabled(&self) -> bool {
        (self.toggles.use_bot && self.lambda1 > 0.0) || (self.toggles.use_top && self.lambda2 > 0.0)
    }

    /// First epoch eligible for model selection and early stopping. When
    /// instance terms are in use, warm-up epochs only prime the network.
    pub fn selection_start(&self) -> usize {
        if self.instance_terms_enabled() && self.warmup_epochs < self.max_epochs {
            self.warmup_epochs + 1
        } else {
            1
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "learning_rate" | "lr" => self.learning_rate = parse_value(key, value)?,
            "weight_decay" => self.weight_decay = parse_value(key, value)?,
            "lambda1" => self.lambda1 = parse_value(key, value)?,
            "lambda2" => self.lambda2 = parse_value(key, value)?,
            "r" => self.r = parse_value(key, value)?,
            "warmup" | "warmup_epochs" => self.warmup_epochs = parse_value(key, value)?,
            "patience" => self.patience = parse_value(key, value)?,
            "max_epochs" => self.max_epochs = parse_value(key, value)?,
            "val_ratio" => self.val_ratio = parse_value(key, value)?,
            "runs" => self.runs = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "use_bot" => self.toggles.use_bot = parse_bool(key, value)?,
            "use_top" => self.toggles.use_top = parse_bool(key, value)?,
            "latent_dim" | "d_h" => self.latent_dim = parse_value(key, value)?,
            "t_max" => self.t_max = parse_value(key, value)?,
            "pooling" => {
                self.pooling = match value {
                    "saliency" => Pooling::Saliency,
                    "uniform" | "mean" => Pooling::Uniform,
                    _ => return Err(Error::InvalidArgument(format!("unknown pooling `{value}`"))),
                }
            }
            "parallel" => self.parallel = parse_bool(key, value)?,
            _ => return Err(Error::InvalidArgument(format!("unknown training key `{key}`"))),
        }
        Ok(())
    }

    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut c = TrainConfig::default();
        for (k, v) in pairs {
            c.set(k, v)?;
        }
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_validation() {
        let c = TrainConfig::default();
        assert_eq!((c.learning_rate, c.weight_decay, c.r, c.warmup_epochs), (2e-4, 1e-5, 5, 10));
        assert!(c.validate().is_ok());
        let bad = TrainConfig { val_ratio: 1.0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { r: 0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn warmup_gates_instance_terms() {
        let c = TrainConfig { warmup_epochs: 2, ..TrainConfig::default() };
        assert_eq!(c.loss_weights(2).lambda_bot, 0.0);
        assert_eq!(c.loss_weights(3).lambda_top, 1.0);
        assert_eq!(c.selection_start(), 3);
        let ce = TrainConfig {
            toggles: LossToggles { use_bot: false, use_top: false },
            ..c
        };
        assert_eq!(ce.selection_start(), 1);
    }

    #[test]
    fn parses_pairs() {
        let pairs = crate::config::parse_pairs("lr=0.01\nuse-top=false\npooling=mean").unwrap();
        let c = TrainConfig::from_pairs(&pairs).unwrap();
        assert_eq!(c.learning_rate, 0.01);
        assert!(!c.toggles.use_top);
        assert_eq!(c.pooling, Pooling::Uniform);
        assert!(TrainConfig::from_pairs(&[("nope".into(), "1".into())]).is_err());
    }
}
