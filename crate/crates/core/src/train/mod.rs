//! Training loop: RMSProp with weight decay, step LR schedule, per-epoch
//! evaluation, checkpoints and CSV curves.

mod fit;
mod optim;

pub use fit::{fit, EpochLog, FitReport};
pub(crate) use fit::argmax_low;
pub use optim::{rmsprop_step, rmsprop_update, OptimizerState};

use crate::error::{Error, Result};

/// All training hyperparameters in one place.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub base_lr: f64,
    pub lr_step_epochs: usize,
    pub lr_multiplier: f64,
    /// L2 coefficient applied to conv/fc weight matrices only.
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub rmsprop_alpha: f64,
    pub rmsprop_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 10,
            base_lr: 1e-4,
            lr_step_epochs: 3,
            lr_multiplier: 0.8,
            weight_decay: 1e-1,
            max_epochs: 30,
            seed: 0,
            rmsprop_alpha: 0.99,
            rmsprop_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::invalid(
                "batch_size must be >= 2 (batch norm needs batch statistics)",
            ));
        }
        if !(self.base_lr > 0.0) {
            return Err(Error::invalid("base_lr must be > 0"));
        }
        if self.lr_step_epochs == 0 {
            return Err(Error::invalid("lr_step_epochs must be >= 1"));
        }
        if !(self.lr_multiplier > 0.0 && self.lr_multiplier <= 1.0) {
            return Err(Error::invalid("lr_multiplier must be in (0, 1]"));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::invalid("weight_decay must be >= 0"));
        }
        if self.max_epochs > 100 {
            return Err(Error::invalid("max_epochs must be <= 100"));
        }
        if !(self.rmsprop_alpha > 0.0 && self.rmsprop_alpha < 1.0) {
            return Err(Error::invalid("rmsprop_alpha must be in (0, 1)"));
        }
        if !(self.rmsprop_eps > 0.0) {
            return Err(Error::invalid("rmsprop_eps must be > 0"));
        }
        Ok(())
    }
}

/// Step schedule: `base_lr * multiplier^floor(epoch / step)`.
pub fn lr_at(config: &TrainConfig, epoch: usize) -> f64 {
    let steps = (epoch / config.lr_step_epochs) as i32;
    config.base_lr * config.lr_multiplier.powi(steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_matches_stated_constants() {
        let cfg = TrainConfig::default();
        assert!((lr_at(&cfg, 0) - 1.0e-4).abs() < 1e-18);
        assert!((lr_at(&cfg, 2) - 1.0e-4).abs() < 1e-18);
        assert!((lr_at(&cfg, 3) - 8.0e-5).abs() < 1e-12);
        assert!((lr_at(&cfg, 6) - 6.4e-5).abs() < 1e-12);
    }

    #[test]
    fn unit_multiplier_is_constant() {
        let cfg = TrainConfig {
            lr_multiplier: 1.0,
            ..TrainConfig::default()
        };
        for epoch in 0..50 {
            assert_eq!(lr_at(&cfg, epoch), cfg.base_lr);
        }
    }

    #[test]
    fn schedule_is_piecewise_constant_on_step_boundaries() {
        let cfg = TrainConfig::default();
        for epoch in 0..60 {
            let expected_drops = epoch / cfg.lr_step_epochs;
            let expect = cfg.base_lr * cfg.lr_multiplier.powi(expected_drops as i32);
            assert_eq!(lr_at(&cfg, epoch), expect);
            if epoch % cfg.lr_step_epochs != 0 {
                assert_eq!(lr_at(&cfg, epoch), lr_at(&cfg, epoch - 1));
            }
        }
    }

    #[test]
    fn validation_bounds() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig {
            batch_size: 1,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            max_epochs: 101,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            lr_multiplier: 0.0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
    }
}
