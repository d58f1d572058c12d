//! Seeded replication harness.
//!
//! Every replication owns a ChaCha8 substream: the key is derived from
//! `(master_seed, scenario index)` and the 64-bit stream id is the
//! replication index. Replications run on a rayon pool and are reduced in
//! index order, so summaries do not depend on the number of workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Open01, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bvpe::{bvpe_optimal_n, bvpe_variance_summary, run_bvpe, BvpeConfig};
use crate::engine::{
    expected_ops, run_generic_woodroofe, EngineError, GenericBoundary, IterSource, RunOptions,
    SchemeParams, StoppingRecord,
};
use crate::eta::{eta1, eta2, EtaError};
use crate::mrpe::{
    mrpe_loss, mrpe_optimal_n, mrpe_risk_metrics, mrpe_risk_metrics_from_sizes, run_mrpe,
    MrpeConfig,
};

pub const DEFAULT_REPLICATIONS: usize = 10_000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation plan: {0}")]
    InvalidPlan(String),
    #[error("scenario {scenario}, replication {replication}: {source}")]
    Replication {
        scenario: usize,
        replication: usize,
        #[source]
        source: EngineError,
    },
    #[error(transparent)]
    Eta(#[from] EtaError),
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Population the observations are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Population {
    Normal {
        mu: f64,
        sigma: f64,
    },
    /// Support `(μ, ∞)`, scale `σ`; mean `μ + σ`.
    NegExp {
        mu: f64,
        sigma: f64,
    },
}

impl Population {
    pub fn mu(&self) -> f64 {
        match *self {
            Population::Normal { mu, .. } | Population::NegExp { mu, .. } => mu,
        }
    }

    pub fn sigma(&self) -> f64 {
        match *self {
            Population::Normal { sigma, .. } | Population::NegExp { sigma, .. } => sigma,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Population::Normal { mu, sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                mu + sigma * z
            }
            Population::NegExp { mu, sigma } => {
                let u: f64 = rng.sample(Open01);
                mu - sigma * u.ln()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Procedure {
    Mrpe(MrpeConfig),
    Bvpe(BvpeConfig),
}

impl Procedure {
    pub fn scheme(&self) -> &SchemeParams {
        match self {
            Procedure::Mrpe(c) => &c.scheme,
            Procedure::Bvpe(c) => &c.scheme,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub population: Population,
    pub procedure: Procedure,
    pub n_star: f64,
}

impl Scenario {
    /// Normal population under the risk procedure; `n* = σ√(A/c)`.
    pub fn mrpe(mu: f64, sigma: f64, config: MrpeConfig) -> Self {
        Self {
            population: Population::Normal { mu, sigma },
            procedure: Procedure::Mrpe(config),
            n_star: mrpe_optimal_n(config.a, config.c, sigma),
        }
    }

    /// Negative-exponential population under the bounded-variance procedure; `n* = σ/b`.
    pub fn bvpe(mu: f64, sigma: f64, config: BvpeConfig) -> Self {
        Self {
            population: Population::NegExp { mu, sigma },
            procedure: Procedure::Bvpe(config),
            n_star: bvpe_optimal_n(sigma, config.b),
        }
    }

    pub fn label(&self) -> String {
        let s = self.procedure.scheme();
        let letter = match self.procedure {
            Procedure::Mrpe(_) => 'P',
            Procedure::Bvpe(_) => 'Q',
        };
        format!("{letter}({},{})", s.rho(), s.k())
    }
}

/// How per-replication substreams are keyed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum StreamKeying {
    /// Stream id = replication index.
    #[default]
    PerReplication,
    /// Every replication replays stream 0 (common random numbers).
    Shared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimPlan {
    pub scenarios: Vec<Scenario>,
    pub replications: usize,
    pub master_seed: u64,
    /// Rayon worker count; `None` uses the global pool.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub keying: StreamKeying,
}

impl SimPlan {
    pub fn new(scenarios: Vec<Scenario>, replications: usize, master_seed: u64) -> Self {
        Self {
            scenarios,
            replications,
            master_seed,
            workers: None,
            keying: StreamKeying::PerReplication,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.replications < 2 {
            return Err(SimError::InvalidPlan("replications must be >= 2".into()));
        }
        if self.scenarios.is_empty() {
            return Err(SimError::InvalidPlan("no scenarios".into()));
        }
        if self.workers == Some(0) {
            return Err(SimError::InvalidPlan("workers must be >= 1".into()));
        }
        for (i, sc) in self.scenarios.iter().enumerate() {
            let s = sc.procedure.scheme();
            s.check_pilot_congruence()
                .map_err(|e| SimError::InvalidPlan(format!("scenario {i}: {e}")))?;
            let floor = s.m() as f64 / s.rho();
            if !(sc.n_star > floor) {
                return Err(SimError::InvalidPlan(format!(
                    "scenario {i}: n* = {} must exceed m/rho = {floor}",
                    sc.n_star
                )));
            }
            if !(sc.population.sigma() >= 0.0) {
                return Err(SimError::InvalidPlan(format!(
                    "scenario {i}: sigma must be >= 0"
                )));
            }
        }
        Ok(())
    }
}

/// Aggregates for one scenario, in the column order of the simulation tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub label: String,
    pub n_star: f64,
    /// Unit cost `c` (risk procedure) or bound `b` (variance procedure).
    pub design_value: f64,
    pub rho: f64,
    pub k: usize,
    pub m: usize,
    pub n_bar: f64,
    pub se_n_bar: f64,
    pub n_bar_minus_n_star: f64,
    /// `ρ⁻¹η(k)`.
    pub second_order_ref: f64,
    /// Size-based risk efficiency `½ mean(N/n*) + ½ mean(n*/N)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi_hat: Option<f64>,
    /// `½ρ⁻¹`, the regret target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_inv_rho: Option<f64>,
    /// Size-based regret `mean((N − n*)²/N)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_hat_over_c: Option<f64>,
    /// Loss-based `R̂/(2cn*)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi_hat_loss: Option<f64>,
    /// Loss-based `(R̂ − 2cn*)/c`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_hat_over_c_loss: Option<f64>,
    pub phi_bar: f64,
    pub se_phi_bar: f64,
    pub expected_phi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator_variance: Option<f64>,
    pub replications: usize,
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for replication `replication` of scenario `scenario`.
pub fn substream(master_seed: u64, scenario: u64, replication: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = mix64(master_seed) ^ mix64(scenario.wrapping_add(0x5851_f42d_4c95_7f2d));
    for chunk in key.chunks_exact_mut(8) {
        state = mix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(replication);
    rng
}

fn run_indexed<T, F>(workers: Option<usize>, count: usize, f: F) -> Result<Vec<T>, SimError>
where
    T: Send,
    F: Fn(usize) -> Result<T, SimError> + Sync + Send,
{
    let job = || {
        (0..count)
            .into_par_iter()
            .map(&f)
            .collect::<Result<Vec<T>, SimError>>()
    };
    match workers {
        None => job(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| SimError::Pool(e.to_string()))?
            .install(job),
    }
}

fn mean_and_se(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let stats: crate::stats::RunningStats = values.collect();
    let sd = stats.std_dev().unwrap_or(0.0);
    (stats.mean(), sd / (stats.count() as f64).sqrt())
}

fn simulate_scenario(plan: &SimPlan, index: usize) -> Result<Vec<StoppingRecord>, SimError> {
    let sc = plan.scenarios[index];
    run_indexed(plan.workers, plan.replications, |rep| {
        let stream = match plan.keying {
            StreamKeying::PerReplication => rep as u64,
            StreamKeying::Shared => 0,
        };
        let mut rng = substream(plan.master_seed, index as u64, stream);
        let population = sc.population;
        let mut source = IterSource::new(std::iter::from_fn(|| Some(population.sample(&mut rng))));
        let result = match &sc.procedure {
            Procedure::Mrpe(cfg) => run_mrpe(cfg, &mut source),
            Procedure::Bvpe(cfg) => run_bvpe(cfg, &mut source),
        };
        result.map_err(|source| SimError::Replication {
            scenario: index,
            replication: rep,
            source,
        })
    })
}

fn summarize(sc: &Scenario, records: &[StoppingRecord]) -> Result<SimSummary, SimError> {
    let scheme = *sc.procedure.scheme();
    let rho = scheme.rho();
    let (n_bar, se_n_bar) = mean_and_se(records.iter().map(|r| r.final_n as f64));
    let (phi_bar, se_phi_bar) = mean_and_se(records.iter().map(|r| r.ops as f64));
    let k = scheme.k() as u64;
    let mut summary = SimSummary {
        label: sc.label(),
        n_star: sc.n_star,
        design_value: 0.0,
        rho,
        k: scheme.k(),
        m: scheme.m(),
        n_bar,
        se_n_bar,
        n_bar_minus_n_star: n_bar - sc.n_star,
        second_order_ref: 0.0,
        xi_hat: None,
        half_inv_rho: None,
        omega_hat_over_c: None,
        xi_hat_loss: None,
        omega_hat_over_c_loss: None,
        phi_bar,
        se_phi_bar,
        expected_phi: 0.0,
        estimator_variance: None,
        replications: records.len(),
    };
    let sizes: Vec<usize> = records.iter().map(|r| r.final_n).collect();
    match &sc.procedure {
        Procedure::Mrpe(cfg) => {
            let eta = eta1(k)?;
            let mu = sc.population.mu();
            let losses: Vec<f64> = records
                .iter()
                .map(|r| mrpe_loss(cfg.a, cfg.c, mu, r.estimate, r.final_n))
                .collect();
            let by_loss = mrpe_risk_metrics(&losses, &sizes, sc.n_star, cfg.c)
                .map_err(|e| SimError::InvalidPlan(e.to_string()))?;
            let by_size = mrpe_risk_metrics_from_sizes(&sizes, sc.n_star)
                .map_err(|e| SimError::InvalidPlan(e.to_string()))?;
            summary.design_value = cfg.c;
            summary.second_order_ref = eta / rho;
            summary.xi_hat = Some(by_size.xi_hat);
            summary.half_inv_rho = Some(0.5 / rho);
            summary.omega_hat_over_c = Some(by_size.omega_hat_over_c);
            summary.xi_hat_loss = Some(by_loss.xi_hat);
            summary.omega_hat_over_c_loss = Some(by_loss.omega_hat_over_c);
            summary.expected_phi = expected_ops(&scheme, sc.n_star, eta);
        }
        Procedure::Bvpe(cfg) => {
            let eta = eta2(k)?;
            let estimates: Vec<f64> = records.iter().map(|r| r.estimate).collect();
            summary.design_value = cfg.b;
            summary.second_order_ref = eta / rho;
            summary.expected_phi = expected_ops(&scheme, sc.n_star, eta);
            summary.estimator_variance = Some(
                bvpe_variance_summary(&estimates)
                    .map_err(|e| SimError::InvalidPlan(e.to_string()))?,
            );
        }
    }
    Ok(summary)
}

/// Runs every scenario and returns the per-replication records.
pub fn simulate_records(plan: &SimPlan) -> Result<Vec<Vec<StoppingRecord>>, SimError> {
    plan.validate()?;
    (0..plan.scenarios.len())
        .map(|i| simulate_scenario(plan, i))
        .collect()
}

fn simulate_grid(plan: &SimPlan, want_mrpe: bool) -> Result<Vec<SimSummary>, SimError> {
    plan.validate()?;
    for (i, sc) in plan.scenarios.iter().enumerate() {
        if matches!(sc.procedure, Procedure::Mrpe(_)) != want_mrpe {
            return Err(SimError::InvalidPlan(format!(
                "scenario {i} uses the wrong procedure for this grid"
            )));
        }
    }
    plan.scenarios
        .iter()
        .enumerate()
        .map(|(i, sc)| summarize(sc, &simulate_scenario(plan, i)?))
        .collect()
}

pub fn simulate_mrpe_grid(plan: &SimPlan) -> Result<Vec<SimSummary>, SimError> {
    simulate_grid(plan, true)
}

pub fn simulate_bvpe_grid(plan: &SimPlan) -> Result<Vec<SimSummary>, SimError> {
    simulate_grid(plan, false)
}

const RHOS: [f64; 3] = [1.0, 0.8, 0.5];
const KS: [usize; 3] = [1, 2, 5];

/// N(5, 2²), A = 100, m = 21, c ∈ {0.04, 0.01, 0.0025}, ρ ∈ {1, 0.8, 0.5}, k ∈ {1, 2, 5}.
pub fn mrpe_reference_grid() -> Vec<Scenario> {
    let mut out = Vec::with_capacity(27);
    for c in [0.04, 0.01, 0.0025] {
        for rho in RHOS {
            for k in KS {
                let scheme = SchemeParams::new(rho, k, 21).expect("valid");
                let cfg = MrpeConfig::new(100.0, c, scheme).expect("valid");
                out.push(Scenario::mrpe(5.0, 2.0, cfg));
            }
        }
    }
    out
}

/// NExp(5, 2), b ∈ {0.02, 0.01, 0.005}, m = 4k + 1, ρ ∈ {1, 0.8, 0.5}, k ∈ {1, 2, 5}.
pub fn bvpe_reference_grid() -> Vec<Scenario> {
    let mut out = Vec::with_capacity(27);
    for b in [0.02, 0.01, 0.005] {
        for rho in RHOS {
            for k in KS {
                let scheme = SchemeParams::with_pilot_stages(rho, k, 4).expect("valid");
                let cfg = BvpeConfig::new(b, scheme).expect("valid");
                out.push(Scenario::bvpe(5.0, 2.0, cfg));
            }
        }
    }
    out
}

/// Which canonical boundary drives a generic run, and so which `W` law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenericKind {
    /// `W ~ χ²₁`, δ = 2, θ = 1.
    NormalMrpe,
    /// `W ~ χ²₂`, δ = 1, θ = 2.
    NexpBvpe,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenericPlan {
    pub kind: GenericKind,
    pub n_star: f64,
    pub scheme: SchemeParams,
    pub replications: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    /// Replace every `W` by zero.
    #[serde(default)]
    pub zero_stream: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenericSummary {
    pub n_star: f64,
    pub rho: f64,
    pub k: usize,
    pub m0: usize,
    /// `mean(k·t₁) − ρn*`.
    pub kt1_minus_rho_n_star: f64,
    pub se_kt1: f64,
    /// `mean(t₂) − n*`.
    pub t2_minus_n_star: f64,
    pub se_t2: f64,
    /// `mean(t₁)`.
    pub t1_bar: f64,
    /// The tabulated constant for the matching procedure (`η₁(k)` or `η₂(k)`).
    pub eta_ref: f64,
    pub phi_bar: f64,
    pub replications: usize,
}

/// Replicates [`run_generic_woodroofe`] on chi-square `W` streams.
pub fn simulate_generic(plan: &GenericPlan) -> Result<GenericSummary, SimError> {
    if plan.replications < 2 {
        return Err(SimError::InvalidPlan("replications must be >= 2".into()));
    }
    let m0 = plan
        .scheme
        .check_pilot_congruence()
        .map_err(|e| SimError::InvalidPlan(e.to_string()))?;
    let boundary = match plan.kind {
        GenericKind::NormalMrpe => GenericBoundary::normal_mrpe(plan.n_star),
        GenericKind::NexpBvpe => GenericBoundary::nexp_bvpe(plan.n_star),
    };
    let records = run_indexed(plan.workers, plan.replications, |rep| {
        let mut rng = substream(plan.master_seed, 0, rep as u64);
        let kind = plan.kind;
        let zero = plan.zero_stream;
        let mut source = IterSource::new(std::iter::from_fn(|| {
            if zero {
                return Some(0.0);
            }
            Some(match kind {
                GenericKind::NormalMrpe => {
                    let z: f64 = rng.sample(StandardNormal);
                    z * z
                }
                GenericKind::NexpBvpe => {
                    let u: f64 = rng.sample(Open01);
                    -2.0 * u.ln()
                }
            })
        }));
        run_generic_woodroofe(&boundary, &plan.scheme, &mut source, &RunOptions::default()).map_err(
            |source| SimError::Replication {
                scenario: 0,
                replication: rep,
                source,
            },
        )
    })?;
    let k = plan.scheme.k();
    let rho = plan.scheme.rho();
    let (kt1, se_kt1) = mean_and_se(records.iter().map(|r| r.prelim_n as f64));
    let (t2, se_t2) = mean_and_se(records.iter().map(|r| r.final_n as f64));
    let (phi_bar, _) = mean_and_se(records.iter().map(|r| r.ops as f64));
    let eta_ref = match plan.kind {
        GenericKind::NormalMrpe => eta1(k as u64)?,
        GenericKind::NexpBvpe => eta2(k as u64)?,
    };
    Ok(GenericSummary {
        n_star: plan.n_star,
        rho,
        k,
        m0,
        kt1_minus_rho_n_star: kt1 - rho * plan.n_star,
        se_kt1,
        t2_minus_n_star: t2 - plan.n_star,
        se_t2,
        t1_bar: kt1 / k as f64,
        eta_ref,
        phi_bar,
        replications: records.len(),
    })
}
