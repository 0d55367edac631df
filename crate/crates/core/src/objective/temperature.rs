use serde::{Deserialize, Serialize};

pub const INITIAL_TEMPERATURE: f64 = 0.07;
pub const MAX_INVERSE_TEMPERATURE: f64 = 100.0;

/// Trainable temperature `nu`, stored as `log(1/nu)`. The effective inverse
/// temperature is clamped at [`MAX_INVERSE_TEMPERATURE`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Temperature {
    pub log_inv: f64,
}

impl Default for Temperature {
    fn default() -> Self {
        Self::from_value(INITIAL_TEMPERATURE)
    }
}

impl Temperature {
    pub fn from_value(nu: f64) -> Self {
        Self { log_inv: (1.0 / nu).ln() }
    }

    /// Effective `1/nu`.
    pub fn inverse(&self) -> f64 {
        self.log_inv.exp().min(MAX_INVERSE_TEMPERATURE)
    }

    pub fn value(&self) -> f64 {
        1.0 / self.inverse()
    }

    /// `d(1/nu) / d(log(1/nu))`; zero once clamped.
    pub fn inverse_derivative(&self) -> f64 {
        let e = self.log_inv.exp();
        if e < MAX_INVERSE_TEMPERATURE {
            e
        } else {
            0.0
        }
    }
}

/// Effective temperature of a configuration.
pub fn temperature_value(t: &Temperature) -> f64 {
    t.value()
}
