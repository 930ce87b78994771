//! Input corruption `x̃ ~ q_D(x̃ | x)` for denoising training and for noisy
//! evaluation streams.
//!
//! A denoising model encodes `x̃` but scores its reconstruction against the
//! clean `x`; the hedge and attention models take a [`Corruptor`] and apply it
//! before their forward pass. With [`CorruptionPolicy::None`] no random draws
//! are made, so a denoising model with that policy follows exactly the same
//! trajectory as the plain one.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{Rng, RngState, Vector};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CorruptionPolicy {
    None,
    /// Each coordinate is zeroed independently with probability `rate`.
    Masking { rate: f64 },
    /// `x̃_i = clamp(x_i + N(0, σ²), 0, 1)`
    Gaussian { sigma: f64 },
}

impl CorruptionPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CorruptionPolicy::None => Ok(()),
            CorruptionPolicy::Masking { rate } if (0.0..=1.0).contains(&rate) => Ok(()),
            CorruptionPolicy::Masking { rate } => Err(Error::Config(format!(
                "masking rate must lie in [0, 1], got {rate}"
            ))),
            CorruptionPolicy::Gaussian { sigma } if sigma >= 0.0 && sigma.is_finite() => Ok(()),
            CorruptionPolicy::Gaussian { sigma } => Err(Error::Config(format!(
                "gaussian sigma must be >= 0, got {sigma}"
            ))),
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, CorruptionPolicy::None)
    }

    /// `(kind code, parameter)` used by the checkpoint format.
    pub fn encode(&self) -> (u8, f64) {
        match *self {
            CorruptionPolicy::None => (0, 0.0),
            CorruptionPolicy::Masking { rate } => (1, rate),
            CorruptionPolicy::Gaussian { sigma } => (2, sigma),
        }
    }

    pub fn decode(code: u8, param: f64) -> Result<Self> {
        let policy = match code {
            0 => CorruptionPolicy::None,
            1 => CorruptionPolicy::Masking { rate: param },
            2 => CorruptionPolicy::Gaussian { sigma: param },
            other => return Err(Error::Format(format!("unknown corruption code {other}"))),
        };
        policy.validate()?;
        Ok(policy)
    }
}

impl fmt::Display for CorruptionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorruptionPolicy::None => write!(f, "none"),
            CorruptionPolicy::Masking { rate } => write!(f, "masking:{rate}"),
            CorruptionPolicy::Gaussian { sigma } => write!(f, "gaussian:{sigma}"),
        }
    }
}

/// Parses `none`, `masking:0.1` or `gaussian:0.05`.
impl FromStr for CorruptionPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s.as_str(), None),
        };
        let num = |a: Option<&str>| -> Result<f64> {
            a.ok_or_else(|| Error::Config(format!("`{kind}` needs a parameter, e.g. {kind}:0.1")))?
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad corruption parameter: {e}")))
        };
        let policy = match kind {
            "none" => CorruptionPolicy::None,
            "masking" | "mask" => CorruptionPolicy::Masking { rate: num(arg)? },
            "gaussian" | "gauss" => CorruptionPolicy::Gaussian { sigma: num(arg)? },
            other => return Err(Error::Config(format!("unknown corruption policy `{other}`"))),
        };
        policy.validate()?;
        Ok(policy)
    }
}

pub fn corrupt(x: &[f64], policy: &CorruptionPolicy, rng: &mut Rng) -> Vector {
    match *policy {
        CorruptionPolicy::None => Vector::from_vec(x.to_vec()),
        CorruptionPolicy::Masking { rate } => Vector::from_vec(
            x.iter()
                .map(|&v| if rng.bernoulli(rate) { 0.0 } else { v })
                .collect(),
        ),
        CorruptionPolicy::Gaussian { sigma } => Vector::from_vec(
            x.iter()
                .map(|&v| (v + sigma * rng.normal()).clamp(0.0, 1.0))
                .collect(),
        ),
    }
}

/// A policy together with the generator it draws from.
#[derive(Clone, Debug)]
pub struct Corruptor {
    pub policy: CorruptionPolicy,
    pub rng: Rng,
}

impl Corruptor {
    pub fn new(policy: CorruptionPolicy, rng: Rng) -> Result<Self> {
        policy.validate()?;
        Ok(Corruptor { policy, rng })
    }

    pub fn none() -> Self {
        Corruptor {
            policy: CorruptionPolicy::None,
            rng: Rng::new(0),
        }
    }

    pub fn apply(&mut self, x: &[f64]) -> Vector {
        corrupt(x, &self.policy, &mut self.rng)
    }

    pub fn rng_state(&self) -> RngState {
        self.rng.state()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::numerics::Rng;

    #[test]
    fn masking_extremes() {
        let x = [0.2, 0.5, 1.0, 0.0];
        let mut rng = Rng::new(1);
        assert_eq!(
            corrupt(&x, &CorruptionPolicy::Masking { rate: 0.0 }, &mut rng).as_slice(),
            &x
        );
        assert_eq!(
            corrupt(&x, &CorruptionPolicy::Masking { rate: 1.0 }, &mut rng).as_slice(),
            &[0.0; 4]
        );
        assert_eq!(corrupt(&x, &CorruptionPolicy::None, &mut rng).as_slice(), &x);
    }

    #[test]
    fn masking_rate_is_respected() {
        // Binomial(10⁵, 0.1): sd of the fraction is ≈ 9.5e-4, so ±0.005 is > 5 sd.
        let x = vec![1.0; 100_000];
        let mut rng = Rng::new(2024);
        let xt = corrupt(&x, &CorruptionPolicy::Masking { rate: 0.1 }, &mut rng);
        let zeroed = xt.iter().filter(|&&v| v == 0.0).count() as f64 / 1e5;
        assert!((zeroed - 0.1).abs() < 0.005, "{zeroed}");
    }

    #[test]
    fn none_policy_draws_nothing() {
        let mut c = Corruptor::new(CorruptionPolicy::None, Rng::new(3)).unwrap();
        let before = c.rng_state();
        c.apply(&[0.1, 0.2]);
        assert_eq!(before, c.rng_state());
    }

    #[test]
    fn is_deterministic_given_seed() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 / 50.0).collect();
        let p = CorruptionPolicy::Gaussian { sigma: 0.2 };
        let a = corrupt(&x, &p, &mut Rng::new(9));
        let b = corrupt(&x, &p, &mut Rng::new(9));
        assert_eq!(a, b);
    }

    #[test]
    fn parse_and_validate() {
        assert_eq!("none".parse::<CorruptionPolicy>().unwrap(), CorruptionPolicy::None);
        assert_eq!(
            "masking:0.25".parse::<CorruptionPolicy>().unwrap(),
            CorruptionPolicy::Masking { rate: 0.25 }
        );
        assert_eq!(
            "gaussian:0.1".parse::<CorruptionPolicy>().unwrap(),
            CorruptionPolicy::Gaussian { sigma: 0.1 }
        );
        assert!("masking:1.5".parse::<CorruptionPolicy>().is_err());
        assert!("gaussian:-1".parse::<CorruptionPolicy>().is_err());
        assert!("salt".parse::<CorruptionPolicy>().is_err());
        assert!("masking".parse::<CorruptionPolicy>().is_err());
        let p = CorruptionPolicy::Masking { rate: 0.1 };
        let (c, v) = p.encode();
        assert_eq!(CorruptionPolicy::decode(c, v).unwrap(), p);
    }

    proptest! {
        #[test]
        fn stays_in_unit_box(x in proptest::collection::vec(0.0f64..=1.0, 1..40),
                             sigma in 0.0f64..2.0, rate in 0.0f64..=1.0, seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            for p in [CorruptionPolicy::Gaussian { sigma }, CorruptionPolicy::Masking { rate }] {
                let xt = corrupt(&x, &p, &mut rng);
                prop_assert!(xt.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}
