//! The general scheme: a pilot sample, `k`-at-a-time sequential stages until
//! the boundary is met, then one batch that inflates the preliminary size by
//! `1/ρ`.
//!
//! Sampling operations are counted as: one for the pilot evaluation, one per
//! sequential stage, and one for the final batch when `ρ < 1`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::RunningStats;

pub const DEFAULT_STAGE_CAP: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid scheme parameters: {0}")]
    InvalidParams(String),
    #[error("observation source exhausted: needed {needed} observations but only {available} were available (short by {})", needed - available)]
    SourceExhausted { needed: usize, available: usize },
    #[error("no termination within {cap} sequential stages")]
    StageCap { cap: usize },
}

/// `(ρ, k, m)`: acceleration proportion, stage size, pilot size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeParams {
    rho: f64,
    k: usize,
    m: usize,
}

impl SchemeParams {
    pub fn new(rho: f64, k: usize, m: usize) -> Result<Self, EngineError> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(EngineError::InvalidParams(format!(
                "rho must lie in (0, 1], got {rho}"
            )));
        }
        if k < 1 {
            return Err(EngineError::InvalidParams("k must be >= 1".into()));
        }
        if m < 2 {
            return Err(EngineError::InvalidParams(format!(
                "pilot size m must be >= 2, got {m}"
            )));
        }
        Ok(Self { rho, k, m })
    }

    /// Pilot size `m = m₀·k + 1`.
    pub fn with_pilot_stages(rho: f64, k: usize, m0: usize) -> Result<Self, EngineError> {
        let p = Self::new(rho, k, m0 * k + 1)?;
        p.check_pilot_congruence()?;
        Ok(p)
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn is_accelerated(&self) -> bool {
        self.rho < 1.0
    }

    /// `m₀` when `m ≡ 1 (mod k)` with `m₀ ≥ 1`.
    pub fn m0(&self) -> Option<usize> {
        let r = self.m - 1;
        (r % self.k == 0 && r / self.k >= 1).then_some(r / self.k)
    }

    pub fn check_pilot_congruence(&self) -> Result<usize, EngineError> {
        self.m0().ok_or_else(|| {
            EngineError::InvalidParams(format!(
                "pilot size m = {} must satisfy m = m0*k + 1 with m0 >= 1 (k = {})",
                self.m, self.k
            ))
        })
    }
}

impl fmt::Display for SchemeParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.rho, self.k)
    }
}

/// An ordered stream of observations.
pub trait ObservationSource {
    fn next_observation(&mut self) -> Option<f64>;
    fn total_drawn(&self) -> usize;
}

/// Wraps any `f64` iterator and counts what it yields.
#[derive(Debug, Clone)]
pub struct IterSource<I> {
    inner: I,
    drawn: usize,
}

impl<I: Iterator<Item = f64>> IterSource<I> {
    pub fn new(inner: I) -> Self {
        Self { inner, drawn: 0 }
    }
}

impl<I: Iterator<Item = f64>> ObservationSource for IterSource<I> {
    fn next_observation(&mut self) -> Option<f64> {
        let x = self.inner.next()?;
        self.drawn += 1;
        Some(x)
    }

    fn total_drawn(&self) -> usize {
        self.drawn
    }
}

/// Replays a finite slice in order.
pub fn slice_source(values: &[f64]) -> IterSource<std::iter::Copied<std::slice::Iter<'_, f64>>> {
    IterSource::new(values.iter().copied())
}

/// Stopping condition evaluated at the current size `n = stats.count()`.
pub trait StoppingRule {
    fn is_satisfied(&self, stats: &RunningStats, n: usize) -> bool;

    /// The value `n` is compared against, when the rule has one. Only used
    /// for the audit trace.
    fn boundary_value(&self, _stats: &RunningStats) -> Option<f64> {
        None
    }

    /// Point estimate reported on termination.
    fn estimate(&self, stats: &RunningStats) -> f64 {
        stats.mean()
    }
}

impl<F: Fn(&RunningStats, usize) -> bool> StoppingRule for F {
    fn is_satisfied(&self, stats: &RunningStats, n: usize) -> bool {
        self(stats, n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub stage_cap: usize,
    pub keep_trace: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            stage_cap: DEFAULT_STAGE_CAP,
            keep_trace: false,
        }
    }
}

/// Outcome of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingRecord {
    /// Post-pilot sequential stages `T`.
    pub stages: usize,
    /// `m + k·T`.
    pub prelim_n: usize,
    pub final_n: usize,
    /// Sampling operations `T + 1 + I(ρ < 1)`.
    pub ops: usize,
    pub estimate: f64,
    pub stats: RunningStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_trace: Option<Vec<(usize, f64)>>,
}

/// `⌊prelim/ρ⌋ + 1` with the strict floor (largest integer `< u`), i.e.
/// `⌈prelim/ρ⌉`.
///
/// When `ρ` is a decimal with at most six places the quotient is formed in
/// integers so that exact multiples are not pushed up by rounding.
pub fn final_sample_size(prelim_n: usize, rho: f64) -> usize {
    if rho >= 1.0 {
        return prelim_n;
    }
    const SCALE: f64 = 1e6;
    let scaled = rho * SCALE;
    let rounded = scaled.round();
    if rounded >= 1.0 && (scaled - rounded).abs() <= 1e-6 {
        let num = prelim_n as u128 * SCALE as u128;
        let den = rounded as u128;
        num.div_ceil(den) as usize
    } else {
        ((prelim_n as f64 / rho).ceil() as usize).max(prelim_n)
    }
}

/// Pulls observations until `stats` holds `target` of them.
fn draw_to<S: ObservationSource + ?Sized>(
    source: &mut S,
    stats: &mut RunningStats,
    target: usize,
) -> Result<(), EngineError> {
    while stats.count() < target {
        match source.next_observation() {
            Some(x) => stats.push(x),
            None => {
                return Err(EngineError::SourceExhausted {
                    needed: target,
                    available: stats.count(),
                })
            }
        }
    }
    Ok(())
}

/// Runs the scheme over `source` with stopping condition `rule`.
pub fn run_scheme<S, R>(
    params: &SchemeParams,
    source: &mut S,
    rule: &R,
    opts: &RunOptions,
) -> Result<StoppingRecord, EngineError>
where
    S: ObservationSource + ?Sized,
    R: StoppingRule + ?Sized,
{
    let mut stats = RunningStats::new();
    let mut trace = opts.keep_trace.then(Vec::new);
    draw_to(source, &mut stats, params.m)?;
    let mut stages = 0;
    loop {
        let n = stats.count();
        if let Some(t) = trace.as_mut() {
            t.push((n, rule.boundary_value(&stats).unwrap_or(f64::NAN)));
        }
        if rule.is_satisfied(&stats, n) {
            break;
        }
        if stages >= opts.stage_cap {
            return Err(EngineError::StageCap {
                cap: opts.stage_cap,
            });
        }
        draw_to(source, &mut stats, n + params.k)?;
        stages += 1;
    }
    let prelim_n = stats.count();
    let final_n = final_sample_size(prelim_n, params.rho);
    draw_to(source, &mut stats, final_n)?;
    Ok(StoppingRecord {
        stages,
        prelim_n,
        final_n,
        ops: stages + 1 + usize::from(params.is_accelerated()),
        estimate: rule.estimate(&stats),
        stats,
        boundary_trace: trace,
    })
}

/// Asymptotic expected sampling operations `k⁻¹[ρn* − m + η] + 1 + I(ρ < 1)`.
pub fn expected_ops(params: &SchemeParams, n_star: f64, eta_value: f64) -> f64 {
    (params.rho * n_star - params.m as f64 + eta_value) / params.k as f64
        + 1.0
        + if params.is_accelerated() { 1.0 } else { 0.0 }
}

/// The canonical boundary `(kn)⁻¹ Σᵢ₌₁ⁿ Uᵢ ≤ θ·[kn/(ρn*)]^δ·l(kn)` on
/// `k`-sums `Uᵢ` of the underlying `W` variates.
#[derive(Clone)]
pub struct GenericBoundary {
    pub delta: f64,
    pub theta: f64,
    /// `l` as a function of the number of `W`s summed so far (`kn`).
    pub l_sequence: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub n_star: f64,
    /// Variance of `W`; recorded, never used by the rule.
    pub tau2: Option<f64>,
    /// Lower-tail regularity `P(W ≤ x) ≤ B x^α`; only validated against the pilot.
    pub alpha: Option<f64>,
    pub b_const: Option<f64>,
}

impl fmt::Debug for GenericBoundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GenericBoundary")
            .field("delta", &self.delta)
            .field("theta", &self.theta)
            .field("n_star", &self.n_star)
            .field("tau2", &self.tau2)
            .field("alpha", &self.alpha)
            .field("b_const", &self.b_const)
            .finish_non_exhaustive()
    }
}

impl GenericBoundary {
    /// Normal-mean risk rule after the Helmert reduction: `W ~ χ²₁`, δ = 2,
    /// θ = 1, `l(j) = (1 + 1/j)²`.
    pub fn normal_mrpe(n_star: f64) -> Self {
        Self {
            delta: 2.0,
            theta: 1.0,
            l_sequence: Arc::new(|j| {
                let r = 1.0 / j;
                1.0 + 2.0 * r + r * r
            }),
            n_star,
            tau2: Some(2.0),
            alpha: Some(0.5),
            b_const: None,
        }
    }

    /// Negative-exponential bounded-variance rule: `W ~ χ²₂`, δ = 1, θ = 2,
    /// `l(j) = 1 + 1/j`.
    pub fn nexp_bvpe(n_star: f64) -> Self {
        Self {
            delta: 1.0,
            theta: 2.0,
            l_sequence: Arc::new(|j| 1.0 + 1.0 / j),
            n_star,
            tau2: Some(4.0),
            alpha: Some(1.0),
            b_const: None,
        }
    }

    pub fn validate(&self, m0: usize) -> Result<(), EngineError> {
        if !(self.delta > 0.0 && self.theta > 0.0 && self.n_star > 0.0) {
            return Err(EngineError::InvalidParams(
                "generic boundary needs delta, theta and n_star > 0".into(),
            ));
        }
        if let Some(alpha) = self.alpha {
            if !(alpha > 0.0) {
                return Err(EngineError::InvalidParams("alpha must be > 0".into()));
            }
            if !(m0 as f64 > 1.0 / (alpha * self.delta)) {
                return Err(EngineError::InvalidParams(format!(
                    "pilot stages m0 = {m0} must exceed 1/(alpha*delta) = {}",
                    1.0 / (alpha * self.delta)
                )));
            }
        }
        Ok(())
    }

    /// Right-hand side at `j = kn` observations.
    pub fn threshold(&self, j: usize, rho: f64) -> f64 {
        let j = j as f64;
        self.theta * (j / (rho * self.n_star)).powf(self.delta) * (self.l_sequence)(j)
    }
}

/// Runs `t₁ = inf{n ≥ m₀ : …}` on the `W` stream and sets
/// `t₂ = final_sample_size(k·t₁, ρ)`.
///
/// In the returned record `stages = t₁ − m₀`, `prelim_n = k·t₁`,
/// `final_n = t₂` and `estimate` is the mean of the `W`s drawn. No batch is
/// drawn after `t₁`.
pub fn run_generic_woodroofe<S: ObservationSource + ?Sized>(
    boundary: &GenericBoundary,
    params: &SchemeParams,
    w_source: &mut S,
    opts: &RunOptions,
) -> Result<StoppingRecord, EngineError> {
    let m0 = params.check_pilot_congruence()?;
    boundary.validate(m0)?;
    let k = params.k;
    let mut stats = RunningStats::new();
    let mut trace = opts.keep_trace.then(Vec::new);
    draw_to(w_source, &mut stats, k * m0)?;
    let mut stages = 0;
    loop {
        let j = stats.count();
        let bound = boundary.threshold(j, params.rho);
        if let Some(t) = trace.as_mut() {
            t.push((j, bound));
        }
        if stats.sum() / j as f64 <= bound {
            break;
        }
        if stages >= opts.stage_cap {
            return Err(EngineError::StageCap {
                cap: opts.stage_cap,
            });
        }
        draw_to(w_source, &mut stats, j + k)?;
        stages += 1;
    }
    let prelim_n = stats.count();
    Ok(StoppingRecord {
        stages,
        prelim_n,
        final_n: final_sample_size(prelim_n, params.rho),
        ops: stages + 1 + usize::from(params.is_accelerated()),
        estimate: stats.mean(),
        stats,
        boundary_trace: trace,
    })
}
