use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `scale / i^exponent`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerDecay {
    pub scale: f64,
    pub exponent: f64,
}

impl PowerDecay {
    pub const fn new(scale: f64, exponent: f64) -> Self {
        Self { scale, exponent }
    }

    pub fn at(&self, i: u64) -> f64 {
        self.scale / (i as f64).powf(self.exponent)
    }
}

/// Rates applied to episodes up to and including `until` (open-ended if
/// `None`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regime {
    pub until: Option<u64>,
    pub xi: PowerDecay,
    pub psi1: PowerDecay,
    pub psi2: PowerDecay,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rates {
    pub xi: f64,
    pub psi1: f64,
    pub psi2: f64,
}

impl Rates {
    pub const ZERO: Rates = Rates { xi: 0.0, psi1: 0.0, psi2: 0.0 };
}

/// Piecewise power-decay learning rates indexed by episode `i ≥ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schedule {
    regimes: Vec<Regime>,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            regimes: vec![
                Regime {
                    until: Some(10_000),
                    xi: PowerDecay::new(0.015, 0.61),
                    psi1: PowerDecay::new(0.1, 0.61),
                    psi2: PowerDecay::new(0.01, 0.61),
                },
                Regime {
                    until: None,
                    xi: PowerDecay::new(0.005, 0.81),
                    psi1: PowerDecay::new(0.05, 0.81),
                    psi2: PowerDecay::new(0.005, 0.81),
                },
            ],
        }
    }
}

impl Schedule {
    pub fn new(regimes: Vec<Regime>) -> Result<Self> {
        let s = Self { regimes };
        s.validate()?;
        Ok(s)
    }

    pub fn constant(xi: f64, psi1: f64, psi2: f64) -> Self {
        Self {
            regimes: vec![Regime {
                until: None,
                xi: PowerDecay::new(xi, 0.0),
                psi1: PowerDecay::new(psi1, 0.0),
                psi2: PowerDecay::new(psi2, 0.0),
            }],
        }
    }

    /// Every scale multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut s = self.clone();
        for r in &mut s.regimes {
            r.xi.scale *= factor;
            r.psi1.scale *= factor;
            r.psi2.scale *= factor;
        }
        s
    }

    pub fn regimes(&self) -> &[Regime] {
        &self.regimes
    }

    pub fn validate(&self) -> Result<()> {
        if self.regimes.is_empty() {
            return Err(Error::InvalidConfig("schedule has no regimes".into()));
        }
        let mut prev = 0;
        for (k, r) in self.regimes.iter().enumerate() {
            for d in [r.xi, r.psi1, r.psi2] {
                if !(d.scale >= 0.0 && d.scale.is_finite() && d.exponent >= 0.0 && d.exponent.is_finite()) {
                    return Err(Error::InvalidConfig(format!("regime {k}: scales and exponents must be non-negative")));
                }
            }
            match r.until {
                Some(u) if u <= prev => {
                    return Err(Error::InvalidConfig(format!("regime {k}: boundaries must increase")))
                }
                Some(u) => prev = u,
                None if k + 1 != self.regimes.len() => {
                    return Err(Error::InvalidConfig("only the last regime may be open-ended".into()))
                }
                None => {}
            }
        }
        if self.regimes.last().and_then(|r| r.until).is_some() {
            return Err(Error::InvalidConfig("last regime must be open-ended".into()));
        }
        Ok(())
    }

    pub fn rates(&self, i: u64) -> Result<Rates> {
        if i == 0 {
            return Err(Error::InvalidConfig("episode index starts at 1".into()));
        }
        let r = self
            .regimes
            .iter()
            .find(|r| r.until.is_none_or(|u| i <= u))
            .ok_or_else(|| Error::InvalidConfig(format!("no regime covers episode {i}")))?;
        Ok(Rates { xi: r.xi.at(i), psi1: r.psi1.at(i), psi2: r.psi2.at(i) })
    }
}
