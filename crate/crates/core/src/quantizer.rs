//! Discrete-rate adaptation: after each continuous update a user drops to the
//! nearest admissible rate at or below it.

use crate::error::{Error, Result};

/// Sorted, duplicate-free, strictly positive admissible rates (bps).
#[derive(Debug, Clone, PartialEq)]
pub struct RateSet(Vec<f64>);

impl RateSet {
    /// Sorts and de-duplicates `rates`.
    pub fn new(mut rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::config("rate set must not be empty"));
        }
        if rates.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(Error::config("admissible rates must be positive and finite"));
        }
        rates.sort_by(f64::total_cmp);
        rates.dedup();
        Ok(RateSet(rates))
    }

    pub fn rates(&self) -> &[f64] {
        &self.0
    }

    /// Largest admissible rate not above `rate`.
    pub fn quantize_down(&self, rate: f64) -> Result<f64> {
        let below = self.0.partition_point(|&x| x <= rate);
        if below == 0 {
            return Err(Error::NoFeasibleRate { rate });
        }
        Ok(self.0[below - 1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuantizeMode {
    #[default]
    EveryIteration,
    AtConvergence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateQuantization {
    pub set: RateSet,
    pub mode: QuantizeMode,
}
