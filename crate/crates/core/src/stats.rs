//! Mergeable sufficient statistics for Monte Carlo estimators.
//!
//! Every accumulator here merges associatively, so per-worker partial results
//! can be combined in any grouping; merging in a fixed order gives
//! bit-identical output.

use alloc::vec::Vec;

/// Running mean and variance (Welford, with Chan's merge).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeanVar {
    n: u64,
    mean: f64,
    m2: f64,
}

impl MeanVar {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &MeanVar) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.n as f64 / n as f64;
        let m2 = self.m2 + other.m2 + delta * delta * (self.n as f64) * (other.n as f64) / n as f64;
        self.n = n;
        self.mean = mean;
        self.m2 = m2;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero below two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_err(&self) -> f64 {
        if self.n < 2 {
            f64::INFINITY
        } else {
            libm::sqrt(self.variance() / self.n as f64)
        }
    }
}

impl FromIterator<f64> for MeanVar {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = MeanVar::new();
        for x in iter {
            acc.push(x);
        }
        acc
    }
}

/// Sufficient statistics for a ratio estimator `Σ reward / Σ length` over
/// i.i.d. cycles, with a delta-method standard error.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RatioAccumulator {
    pub n: u64,
    pub sum_reward: f64,
    pub sum_length: f64,
    pub sum_reward2: f64,
    pub sum_length2: f64,
    pub sum_cross: f64,
}

impl RatioAccumulator {
    pub fn push(&mut self, reward: f64, length: f64) {
        self.n += 1;
        self.sum_reward += reward;
        self.sum_length += length;
        self.sum_reward2 += reward * reward;
        self.sum_length2 += length * length;
        self.sum_cross += reward * length;
    }

    pub fn merge(&mut self, other: &RatioAccumulator) {
        self.n += other.n;
        self.sum_reward += other.sum_reward;
        self.sum_length += other.sum_length;
        self.sum_reward2 += other.sum_reward2;
        self.sum_length2 += other.sum_length2;
        self.sum_cross += other.sum_cross;
    }

    pub fn ratio(&self) -> f64 {
        self.sum_reward / self.sum_length
    }

    pub fn mean_reward(&self) -> f64 {
        self.sum_reward / self.n as f64
    }

    pub fn mean_length(&self) -> f64 {
        self.sum_length / self.n as f64
    }

    /// Delta-method standard error of the ratio: `sd(Z − r T) / (√n · E T)`.
    pub fn std_err(&self) -> f64 {
        if self.n < 2 {
            return f64::INFINITY;
        }
        let n = self.n as f64;
        let r = self.ratio();
        // Σ (Z - rT)^2 expanded; its mean is zero by construction of r.
        let ss = self.sum_reward2 - 2.0 * r * self.sum_cross + r * r * self.sum_length2;
        let var = (ss / (n - 1.0)).max(0.0);
        libm::sqrt(var / n) / self.mean_length()
    }
}

/// Batch means over equally long consecutive batches of a time series.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchMeans {
    pub batches: Vec<f64>,
}

impl BatchMeans {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, batch_mean: f64) {
        self.batches.push(batch_mean);
    }

    pub fn merge(&mut self, other: &BatchMeans) {
        self.batches.extend_from_slice(&other.batches);
    }

    pub fn summary(&self) -> MeanVar {
        self.batches.iter().copied().collect()
    }

    /// Lag-one autocorrelation of the batch means; close to zero when the
    /// batches are long enough to be treated as independent.
    pub fn lag1_correlation(&self) -> f64 {
        let n = self.batches.len();
        if n < 3 {
            return 0.0;
        }
        let s = self.summary();
        let m = s.mean();
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..n {
            let d = self.batches[k] - m;
            den += d * d;
            if k + 1 < n {
                num += d * (self.batches[k + 1] - m);
            }
        }
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }
}
