//! Bounded variance point estimation of a negative-exponential location:
//! boundary `n ≥ ρ·V_n/b`, estimate `Y_{N:1}`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    run_scheme, EngineError, ObservationSource, RunOptions, SchemeParams, StoppingRecord,
    StoppingRule,
};
use crate::stats::RunningStats;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("variance needs at least 2 estimates, got {0}")]
pub struct InsufficientData(pub usize);

/// Standard-deviation bound `b` (the variance target is `b²`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BvpeConfig {
    pub b: f64,
    pub scheme: SchemeParams,
}

impl BvpeConfig {
    pub fn new(b: f64, scheme: SchemeParams) -> Result<Self, EngineError> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(EngineError::InvalidParams(format!(
                "b must be > 0, got {b}"
            )));
        }
        scheme.check_pilot_congruence()?;
        Ok(Self { b, scheme })
    }

    /// Same, from the variance bound `b²`.
    pub fn from_variance_bound(b2: f64, scheme: SchemeParams) -> Result<Self, EngineError> {
        if !(b2 > 0.0) {
            return Err(EngineError::InvalidParams(format!(
                "b^2 must be > 0, got {b2}"
            )));
        }
        Self::new(b2.sqrt(), scheme)
    }

    pub fn rule(&self) -> BvpeRule {
        BvpeRule {
            scale: self.scheme.rho() / self.b,
        }
    }
}

/// `n ≥ scale · V_n` with `scale = ρ/b`; the estimate is the sample minimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BvpeRule {
    pub scale: f64,
}

impl StoppingRule for BvpeRule {
    fn is_satisfied(&self, stats: &RunningStats, n: usize) -> bool {
        self.boundary_value(stats).is_some_and(|v| n as f64 >= v)
    }

    fn boundary_value(&self, stats: &RunningStats) -> Option<f64> {
        stats.umvue_scale().map(|v| self.scale * v)
    }

    fn estimate(&self, stats: &RunningStats) -> f64 {
        stats.min()
    }
}

/// `n* = σ/b`.
pub fn bvpe_optimal_n(sigma: f64, b: f64) -> f64 {
    sigma / b
}

pub fn run_bvpe<S: ObservationSource + ?Sized>(
    config: &BvpeConfig,
    source: &mut S,
) -> Result<StoppingRecord, EngineError> {
    run_bvpe_with(config, source, &RunOptions::default())
}

pub fn run_bvpe_with<S: ObservationSource + ?Sized>(
    config: &BvpeConfig,
    source: &mut S,
    opts: &RunOptions,
) -> Result<StoppingRecord, EngineError> {
    config.scheme.check_pilot_congruence()?;
    run_scheme(&config.scheme, source, &config.rule(), opts)
}

/// Unbiased sample variance of the replication estimates `Y_{N:1}`.
pub fn bvpe_variance_summary(estimates: &[f64]) -> Result<f64, InsufficientData> {
    if estimates.len() < 2 {
        return Err(InsufficientData(estimates.len()));
    }
    let stats: RunningStats = estimates.iter().copied().collect();
    Ok(stats.variance().expect("n >= 2"))
}
