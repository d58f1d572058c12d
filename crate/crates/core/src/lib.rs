//! Accelerated sequential sampling: the `M(ρ, k)` scheme, its minimum-risk
//! and bounded-variance procedures, the second-order correction constants and
//! a reproducible Monte Carlo harness.

pub mod bvpe;
pub mod cli_io;
pub mod engine;
pub mod eta;
pub mod montecarlo;
pub mod mrpe;
pub mod special_fn;
pub mod stats;

pub use bvpe::{run_bvpe, BvpeConfig};
pub use engine::{run_scheme, EngineError, SchemeParams, StoppingRecord, StoppingRule};
pub use eta::{eta1, eta2};
pub use montecarlo::{SimPlan, SimSummary};
pub use mrpe::{run_mrpe, MrpeConfig};
pub use stats::RunningStats;
