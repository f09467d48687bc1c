use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Model constants: nonlinearity exponent `p`, Bopp–Podolsky length `a`
/// and frequency `omega`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemParams {
    pub p: f64,
    pub a: f64,
    pub omega: f64,
}

impl ProblemParams {
    pub fn new(p: f64, a: f64, omega: f64) -> Result<Self> {
        let params = Self { p, a, omega };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 2.0 && self.p <= 3.0) {
            return Err(invalid(format!("p must lie in (2, 3], got {}", self.p)));
        }
        if !(self.a >= 0.0) || !self.a.is_finite() {
            return Err(invalid(format!("a must be finite and >= 0, got {}", self.a)));
        }
        if !(self.omega > 0.0) || !self.omega.is_finite() {
            return Err(invalid(format!("omega must be finite and > 0, got {}", self.omega)));
        }
        Ok(())
    }
}

impl Default for ProblemParams {
    fn default() -> Self {
        Self { p: 2.5, a: 1.0, omega: 1.0 }
    }
}
