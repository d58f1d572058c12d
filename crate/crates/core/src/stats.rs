//! Streaming sufficient statistics for the stopping boundaries.

use serde::{Deserialize, Serialize};

/// Count, Welford mean / sum of squared deviations, minimum and plain sum.
///
/// Serves both procedures: the normal-mean rule reads `X̄_n` and `S_n`, the
/// negative-exponential rule reads `Y_{n:1}` and `V_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    n: usize,
    mean: f64,
    m2: f64,
    min: f64,
    sum: f64,
}

impl Default for RunningStats {
    fn default() -> Self {
        Self::new()
    }
}

impl RunningStats {
    pub fn new() -> Self {
        Self {
            n: 0,
            mean: 0.0,
            m2: 0.0,
            min: f64::INFINITY,
            sum: 0.0,
        }
    }

    /// Rebuild from stored moments. `m2` is clamped at zero.
    pub fn from_parts(n: usize, mean: f64, m2: f64, min: f64, sum: f64) -> Self {
        Self {
            n,
            mean,
            m2: m2.max(0.0),
            min,
            sum,
        }
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
        if x < self.min {
            self.min = x;
        }
        self.sum += x;
    }

    /// Chan et al. pairwise combination.
    pub fn merge(&self, other: &Self) -> Self {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let nf = n as f64;
        let mean = self.mean + delta * other.n as f64 / nf;
        let m2 = self.m2 + other.m2 + delta * delta * (self.n as f64) * (other.n as f64) / nf;
        Self {
            n,
            mean,
            m2,
            min: self.min.min(other.min),
            sum: self.sum + other.sum,
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sum(&self) -> f64 {
        self.sum
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    /// Σ(xᵢ − x̄)².
    pub fn sum_sq_dev(&self) -> f64 {
        self.m2
    }

    /// Unbiased sample variance `S²_n`; `None` below two observations.
    pub fn variance(&self) -> Option<f64> {
        (self.n >= 2).then(|| (self.m2 / (self.n - 1) as f64).max(0.0))
    }

    pub fn std_dev(&self) -> Option<f64> {
        self.variance().map(f64::sqrt)
    }

    /// `V_n = (n−1)⁻¹ Σ(yᵢ − y_{n:1})`, the UMVUE of the negative-exponential scale.
    pub fn umvue_scale(&self) -> Option<f64> {
        (self.n >= 2)
            .then(|| ((self.sum - self.n as f64 * self.min) / (self.n - 1) as f64).max(0.0))
    }
}

impl Extend<f64> for RunningStats {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.push(x);
        }
    }
}

impl FromIterator<f64> for RunningStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::new();
        s.extend(iter);
        s
    }
}
