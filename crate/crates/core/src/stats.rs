//! Streaming accumulators and estimators for Monte Carlo ensembles.

use serde::{Deserialize, Serialize};

/// Welford accumulator; `merge` is the pairwise update of Chan et al.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut s = Self::new();
        xs.iter().for_each(|&x| s.push(x));
        s
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Self) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            f64::INFINITY
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    pub fn estimate(&self) -> Estimate {
        Estimate { value: self.mean(), stderr: self.stderr() }
    }
}

pub type EnsembleStats = RunningStats;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0 }
    }

    /// `|value − target| / stderr`.
    pub fn z_against(&self, target: f64) -> f64 {
        let d = (self.value - target).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.stderr
        }
    }

    /// Difference in units of the combined standard error.
    pub fn z_between(&self, other: &Self) -> f64 {
        let d = (self.value - other.value).abs();
        if d == 0.0 {
            0.0
        } else {
            d / (self.stderr * self.stderr + other.stderr * other.stderr).sqrt()
        }
    }

    pub fn relative_error(&self, target: f64) -> f64 {
        (self.value - target).abs() / target.abs()
    }
}

pub fn mean_estimate(xs: &[f64]) -> Estimate {
    RunningStats::from_slice(xs).estimate()
}

pub const MOM_BLOCKS: usize = 16;

/// Median of `blocks` contiguous block means; the standard error uses the
/// asymptotic efficiency of the median, `√(π/2) sd(block means) / √blocks`.
pub fn median_of_means(xs: &[f64], blocks: usize) -> Estimate {
    assert!(blocks >= 1 && xs.len() >= blocks, "need at least one sample per block");
    let means = block_means(xs, blocks);
    let mut sorted = means.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if blocks % 2 == 1 {
        sorted[blocks / 2]
    } else {
        0.5 * (sorted[blocks / 2 - 1] + sorted[blocks / 2])
    };
    let sd = RunningStats::from_slice(&means).variance().sqrt();
    Estimate { value: median, stderr: (std::f64::consts::PI / 2.0).sqrt() * sd / (blocks as f64).sqrt() }
}

pub fn block_means(xs: &[f64], blocks: usize) -> Vec<f64> {
    let n = xs.len();
    (0..blocks)
        .map(|b| {
            let (lo, hi) = (b * n / blocks, (b + 1) * n / blocks);
            xs[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Mean of block means with the standard error taken from their spread.
pub fn batch_means(xs: &[f64], blocks: usize) -> Estimate {
    let means = block_means(xs, blocks);
    RunningStats::from_slice(&means).estimate()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub below: u64,
    pub above: u64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        assert!(hi > lo && bins > 0);
        Self { lo, hi, counts: vec![0; bins], below: 0, above: 0 }
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        let w = self.width();
        (0..self.counts.len()).map(|i| self.lo + (i as f64 + 0.5) * w).collect()
    }

    pub fn push(&mut self, x: f64) {
        if x < self.lo {
            self.below += 1;
        } else if x >= self.hi {
            self.above += 1;
        } else {
            let last = self.counts.len() - 1;
            let i = ((x - self.lo) / self.width()) as usize;
            self.counts[i.min(last)] += 1;
        }
    }

    pub fn merge(&mut self, other: &Self) {
        assert_eq!(self.counts.len(), other.counts.len());
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.below += other.below;
        self.above += other.above;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.below + self.above
    }

    /// Density normalized by the total count, so out-of-range mass is kept out.
    pub fn density(&self) -> Vec<f64> {
        let t = self.total() as f64;
        let w = self.width();
        self.counts.iter().map(|&c| c as f64 / (t * w)).collect()
    }

    /// Binomial standard error per bin. Counts of eigenvalues from one draw are
    /// correlated, so this is a lower bound for spectral histograms.
    pub fn density_stderr(&self) -> Vec<f64> {
        let t = self.total() as f64;
        let w = self.width();
        self.counts
            .iter()
            .map(|&c| {
                let p = c as f64 / t;
                (p * (1.0 - p) / t).sqrt() / w
            })
            .collect()
    }
}

/// One-sample Kolmogorov–Smirnov statistic `sup |F_n − F|`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Survival function of the Kolmogorov distribution, `P(K > λ)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let j = j as f64;
        let term = (-2.0 * j * j * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Asymptotic p-value with Stephens' finite-n correction.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d)
}
