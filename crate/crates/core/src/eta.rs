//! Second-order correction constants.
//!
//! Both constants share the template
//!
//! ```text
//! η(k) = (k − 1)/2 − ½ Σ_{n≥1} n⁻¹ E[{χ²_{d·k·n} − s·k·n}⁺]
//! ```
//!
//! with `(d, s) = (1, 3)` for the normal-mean risk problem and `(d, s) = (2, 4)`
//! for the negative-exponential bounded-variance problem.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special_fn::{chisq_partial_expectation, SpecialFnError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EtaError {
    #[error("invalid series parameters: {0}")]
    InvalidSpec(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("series did not reach the truncation threshold within {0} terms")]
    NoConvergence(usize),
    #[error(transparent)]
    Special(#[from] SpecialFnError),
}

/// Parameters of one correction series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaSpec {
    /// Term `n` uses `dof_factor · k · n` degrees of freedom.
    pub dof_factor: u64,
    /// Term `n` subtracts `shift_factor · k · n`.
    pub shift_factor: f64,
    pub truncation_threshold: f64,
    pub max_terms: usize,
}

impl EtaSpec {
    pub const DEFAULT_THRESHOLD: f64 = 1e-15;
    pub const DEFAULT_MAX_TERMS: usize = 1_000_000;

    pub fn new(dof_factor: u64, shift_factor: f64) -> Result<Self, EtaError> {
        let spec = Self {
            dof_factor,
            shift_factor,
            truncation_threshold: Self::DEFAULT_THRESHOLD,
            max_terms: Self::DEFAULT_MAX_TERMS,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Normal mean, minimum risk: `(d, s) = (1, 3)`.
    pub fn normal_mrpe() -> Self {
        Self::new(1, 3.0).expect("constant spec is valid")
    }

    /// Negative-exponential location, bounded variance: `(d, s) = (2, 4)`.
    pub fn nexp_bvpe() -> Self {
        Self::new(2, 4.0).expect("constant spec is valid")
    }

    pub fn validate(&self) -> Result<(), EtaError> {
        if self.dof_factor < 1 {
            return Err(EtaError::InvalidSpec("dof_factor must be >= 1".into()));
        }
        // Terms only vanish when the shift outruns the mean d·k·n.
        if !(self.shift_factor > self.dof_factor as f64) {
            return Err(EtaError::InvalidSpec(format!(
                "shift_factor ({}) must exceed dof_factor ({})",
                self.shift_factor, self.dof_factor
            )));
        }
        if !(self.truncation_threshold > 0.0) {
            return Err(EtaError::InvalidSpec(
                "truncation_threshold must be > 0".into(),
            ));
        }
        if self.max_terms == 0 {
            return Err(EtaError::InvalidSpec("max_terms must be >= 1".into()));
        }
        Ok(())
    }

    /// The `n`-th summand `n⁻¹ E[{χ²_{dkn} − skn}⁺]`.
    pub fn term(&self, k: u64, n: u64) -> Result<f64, EtaError> {
        let kn = k * n;
        let e = chisq_partial_expectation(self.dof_factor * kn, self.shift_factor * kn as f64)?;
        Ok(e / n as f64)
    }
}

/// Value of a truncated series together with the number of terms summed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaValue {
    pub k: u64,
    pub value: f64,
    pub terms_used: usize,
}

/// Sum terms until two consecutive ones fall below the threshold.
pub fn eta_series(spec: &EtaSpec, k: u64) -> Result<EtaValue, EtaError> {
    spec.validate()?;
    if k < 1 {
        return Err(EtaError::InvalidK);
    }
    let mut sum = 0.0;
    let mut below = 0;
    for n in 1..=spec.max_terms as u64 {
        let term = spec.term(k, n)?;
        sum += term;
        if term.abs() < spec.truncation_threshold {
            below += 1;
            if below == 2 {
                return Ok(EtaValue {
                    k,
                    value: (k as f64 - 1.0) / 2.0 - 0.5 * sum,
                    terms_used: n as usize,
                });
            }
        } else {
            below = 0;
        }
    }
    Err(EtaError::NoConvergence(spec.max_terms))
}

/// `η₁(k)`, the normal-mean constant.
pub fn eta1(k: u64) -> Result<f64, EtaError> {
    Ok(eta_series(&EtaSpec::normal_mrpe(), k)?.value)
}

/// `η₂(k)`, the negative-exponential constant.
pub fn eta2(k: u64) -> Result<f64, EtaError> {
    Ok(eta_series(&EtaSpec::nexp_bvpe(), k)?.value)
}

/// Which constant an [`eta_table`] enumerates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EtaKind {
    Eta1,
    Eta2,
}

impl EtaKind {
    pub fn spec(self) -> EtaSpec {
        match self {
            EtaKind::Eta1 => EtaSpec::normal_mrpe(),
            EtaKind::Eta2 => EtaSpec::nexp_bvpe(),
        }
    }
}

pub fn eta_table(kind: EtaKind, k_max: u64) -> Result<Vec<EtaValue>, EtaError> {
    let spec = kind.spec();
    (1..=k_max).map(|k| eta_series(&spec, k)).collect()
}
