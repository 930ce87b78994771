//! Hyperparameters shared by every model variant.

use crate::balance::TradeoffState;
use crate::denoise::CorruptionPolicy;
use crate::error::{Error, Result};
use crate::numerics::Activation;
use crate::optim::OptimizerKind;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelSettings {
    /// Activation of the reconstruction layer.
    pub output_activation: Activation,
    pub optimizer: OptimizerKind,
    /// Hedge discount `θ0`.
    pub theta0: f64,
    /// Hedge floor `ε_β`.
    pub beta_floor: f64,
    /// Initial trade-off coefficients and their discounts.
    pub tradeoff: TradeoffState,
    /// Only used by the denoising variants.
    pub corruption: CorruptionPolicy,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            output_activation: Activation::Sigmoid,
            optimizer: OptimizerKind::adam(0.01),
            theta0: 0.99,
            beta_floor: 0.01,
            tradeoff: TradeoffState::default(),
            corruption: CorruptionPolicy::None,
        }
    }
}

impl ModelSettings {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        self.corruption.validate()?;
        if !(self.theta0 > 0.0 && self.theta0 < 1.0) {
            return Err(Error::Config(format!("theta0 must lie in (0, 1), got {}", self.theta0)));
        }
        if !(0.0..=1.0).contains(&self.beta_floor) {
            return Err(Error::Config(format!(
                "beta floor must lie in [0, 1], got {}",
                self.beta_floor
            )));
        }
        let t = &self.tradeoff;
        TradeoffState::new(t.a_re, t.beta_re, t.beta_pre, t.adaptive)?;
        if (t.a_re + t.a_pre - 1.0).abs() > 1e-9 {
            return Err(Error::Config("a_re + a_pre must equal 1".into()));
        }
        Ok(())
    }
}
