//! Minimum risk point estimation of a normal mean under the loss
//! `A(X̄_n − μ)² + cn`, with the boundary `n ≥ ρ·S_n·√(A/c)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    run_scheme, EngineError, ObservationSource, RunOptions, SchemeParams, StoppingRecord,
    StoppingRule,
};
use crate::stats::RunningStats;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("no replications supplied")]
    Empty,
    #[error("losses ({losses}) and final sizes ({sizes}) differ in length")]
    LengthMismatch { losses: usize, sizes: usize },
}

/// Loss weight `A`, unit cost `c` and the sampling scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MrpeConfig {
    pub a: f64,
    pub c: f64,
    pub scheme: SchemeParams,
}

impl MrpeConfig {
    pub fn new(a: f64, c: f64, scheme: SchemeParams) -> Result<Self, EngineError> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(EngineError::InvalidParams(format!(
                "A must be > 0, got {a}"
            )));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(EngineError::InvalidParams(format!(
                "c must be > 0, got {c}"
            )));
        }
        scheme.check_pilot_congruence()?;
        Ok(Self { a, c, scheme })
    }

    /// `√(A/c)`.
    pub fn cost_ratio_sqrt(&self) -> f64 {
        (self.a / self.c).sqrt()
    }

    pub fn rule(&self) -> MrpeRule {
        MrpeRule {
            scale: self.scheme.rho() * self.cost_ratio_sqrt(),
        }
    }
}

/// `n ≥ scale · S_n` with `scale = ρ√(A/c)`; ties stop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MrpeRule {
    pub scale: f64,
}

impl StoppingRule for MrpeRule {
    fn is_satisfied(&self, stats: &RunningStats, n: usize) -> bool {
        match self.boundary_value(stats) {
            Some(b) => n as f64 >= b,
            None => false,
        }
    }

    fn boundary_value(&self, stats: &RunningStats) -> Option<f64> {
        stats.std_dev().map(|s| self.scale * s)
    }
}

/// `n* = σ√(A/c)`.
pub fn mrpe_optimal_n(a: f64, c: f64, sigma: f64) -> f64 {
    sigma * (a / c).sqrt()
}

pub fn mrpe_boundary_check(stats: &RunningStats, n: usize, config: &MrpeConfig) -> bool {
    config.rule().is_satisfied(stats, n)
}

/// Runs the procedure; the estimate is the mean of all `N` observations.
pub fn run_mrpe<S: ObservationSource + ?Sized>(
    config: &MrpeConfig,
    source: &mut S,
) -> Result<StoppingRecord, EngineError> {
    run_mrpe_with(config, source, &RunOptions::default())
}

pub fn run_mrpe_with<S: ObservationSource + ?Sized>(
    config: &MrpeConfig,
    source: &mut S,
    opts: &RunOptions,
) -> Result<StoppingRecord, EngineError> {
    config.scheme.check_pilot_congruence()?;
    run_scheme(&config.scheme, source, &config.rule(), opts)
}

/// `A(estimate − μ)² + cN`.
pub fn mrpe_loss(a: f64, c: f64, mu_true: f64, estimate: f64, n: usize) -> f64 {
    let err = estimate - mu_true;
    a * err * err + c * n as f64
}

/// Risk efficiency and regret per unit cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskMetrics {
    pub xi_hat: f64,
    pub omega_hat_over_c: f64,
}

/// From realized losses: `R̂ = mean(loss)`, `ξ̂ = R̂/(2cn*)`, `ω̂/c = (R̂ − 2cn*)/c`.
pub fn mrpe_risk_metrics(
    losses: &[f64],
    final_sizes: &[usize],
    n_star: f64,
    c: f64,
) -> Result<RiskMetrics, MetricsError> {
    if losses.is_empty() {
        return Err(MetricsError::Empty);
    }
    if losses.len() != final_sizes.len() {
        return Err(MetricsError::LengthMismatch {
            losses: losses.len(),
            sizes: final_sizes.len(),
        });
    }
    let risk = losses.iter().sum::<f64>() / losses.len() as f64;
    let min_risk = 2.0 * c * n_star;
    Ok(RiskMetrics {
        xi_hat: risk / min_risk,
        omega_hat_over_c: (risk - min_risk) / c,
    })
}

/// From final sizes alone, using the risk-efficiency and regret identities
/// `ξ = ½E[N/n*] + ½E[n*/N]` and `ω/c = E[(N − n*)²/N]`.
///
/// These are the conditional expectations of the loss-based quantities given
/// `N` (the squared error of `X̄_N` averages to `σ²/N`), so they estimate the
/// same targets with far less Monte Carlo noise.
pub fn mrpe_risk_metrics_from_sizes(
    final_sizes: &[usize],
    n_star: f64,
) -> Result<RiskMetrics, MetricsError> {
    if final_sizes.is_empty() {
        return Err(MetricsError::Empty);
    }
    let r = final_sizes.len() as f64;
    let (mut ratio, mut inv_ratio, mut regret) = (0.0, 0.0, 0.0);
    for &n in final_sizes {
        let n = n as f64;
        ratio += n / n_star;
        inv_ratio += n_star / n;
        regret += (n - n_star).powi(2) / n;
    }
    Ok(RiskMetrics {
        xi_hat: 0.5 * (ratio + inv_ratio) / r,
        omega_hat_over_c: regret / r,
    })
}
