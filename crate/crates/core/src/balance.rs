//! Reconstruction/prediction trade-off.
//!
//! `L_total = a_re·L_re + a_pre·L_pre`, where the coefficients are discounted
//! multiplicatively by their own (clipped) loss every step and renormalized:
//!
//! ```text
//! a_re ← a_re·β_re^L̃_re / (a_re·β_re^L̃_re + a_pre·β_pre^L̃_pre),   L̃ = min(L, 1)
//! ```

use crate::error::{Error, Result};

/// Smallest value either coefficient may reach. Only matters on very long
/// runs where one loss stays persistently larger than the other.
pub const TRADEOFF_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TradeoffState {
    pub a_re: f64,
    pub a_pre: f64,
    pub beta_re: f64,
    pub beta_pre: f64,
    /// When false the coefficients stay fixed for the whole run.
    pub adaptive: bool,
}

impl Default for TradeoffState {
    fn default() -> Self {
        TradeoffState {
            a_re: 0.5,
            a_pre: 0.5,
            beta_re: 0.99,
            beta_pre: 0.99,
            adaptive: true,
        }
    }
}

fn in_open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")))
    }
}

impl TradeoffState {
    pub fn new(a_re: f64, beta_re: f64, beta_pre: f64, adaptive: bool) -> Result<Self> {
        in_open_unit("a_re", a_re)?;
        in_open_unit("beta_re", beta_re)?;
        in_open_unit("beta_pre", beta_pre)?;
        Ok(TradeoffState {
            a_re,
            a_pre: 1.0 - a_re,
            beta_re,
            beta_pre,
            adaptive,
        })
    }

    /// Coefficients that never change, e.g. `(0.3, 0.7)`.
    pub fn fixed(a_re: f64) -> Result<Self> {
        TradeoffState::new(a_re, 0.99, 0.99, false)
    }

    pub fn total_loss(&self, l_re: f64, l_pre: f64) -> Result<f64> {
        total_loss(l_re, l_pre, self)
    }

    /// Applies [`update_tradeoffs`] when adaptive; otherwise only validates.
    pub fn observe(&mut self, l_re: f64, l_pre: f64) -> Result<()> {
        check_loss(l_re)?;
        check_loss(l_pre)?;
        if self.adaptive {
            *self = update_tradeoffs(self, l_re, l_pre)?;
        }
        Ok(())
    }
}

fn check_loss(l: f64) -> Result<()> {
    if !l.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite loss {l}")));
    }
    if l < 0.0 {
        return Err(Error::InvalidInput(format!("negative loss {l}")));
    }
    Ok(())
}

pub fn total_loss(l_re: f64, l_pre: f64, s: &TradeoffState) -> Result<f64> {
    check_loss(l_re)?;
    check_loss(l_pre)?;
    Ok(s.a_re * l_re + s.a_pre * l_pre)
}

/// One multiplicative step of the trade-off recurrence with exponents
/// clipped at 1.
pub fn update_tradeoffs(s: &TradeoffState, l_re: f64, l_pre: f64) -> Result<TradeoffState> {
    check_loss(l_re)?;
    check_loss(l_pre)?;
    let re = s.a_re * s.beta_re.powf(l_re.min(1.0));
    let pre = s.a_pre * s.beta_pre.powf(l_pre.min(1.0));
    let total = re + pre;
    let (mut a_re, mut a_pre) = (re / total, pre / total);
    if a_re < TRADEOFF_FLOOR {
        a_re = TRADEOFF_FLOOR;
        a_pre = 1.0 - TRADEOFF_FLOOR;
    } else if a_pre < TRADEOFF_FLOOR {
        a_pre = TRADEOFF_FLOOR;
        a_re = 1.0 - TRADEOFF_FLOOR;
    }
    Ok(TradeoffState { a_re, a_pre, ..*s })
}
