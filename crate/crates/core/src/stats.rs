//! Replication-level estimates and streaming moments.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

/// Mean with standard error and a two-sided 95% Student-t half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub half_width: f64,
    pub samples: u64,
}

impl Estimate {
    /// From independent replication means (`samples >= 2`).
    pub fn from_replications(values: &[f64]) -> Self {
        let n = values.len();
        let mut acc = Moments::default();
        values.iter().for_each(|v| acc.push(*v));
        let std_error = acc.std_error();
        let half_width = if n >= 2 {
            t_quantile_975(n as f64 - 1.0) * std_error
        } else {
            f64::INFINITY
        };
        Self {
            mean: acc.mean(),
            std_error,
            half_width,
            samples: n as u64,
        }
    }

    /// `|mean - target| <= k * std_error`, with an absolute floor for
    /// degenerate (zero-variance) samples.
    pub fn within_std_errors(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_error + 1e-12 * target.abs().max(1.0)
    }
}

pub(crate) fn t_quantile_975(dof: f64) -> f64 {
    // statrs loses accuracy far in the tail of the dof range.
    if dof > 1e4 {
        return Normal::standard().inverse_cdf(0.975);
    }
    StudentsT::new(0.0, 1.0, dof)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975)
}

/// Welford accumulator.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.mean
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            return f64::NAN;
        }
        (self.variance() / self.n as f64).sqrt()
    }

    pub fn estimate(&self) -> Estimate {
        Estimate {
            mean: self.mean(),
            std_error: self.std_error(),
            half_width: if self.n >= 2 {
                t_quantile_975(self.n as f64 - 1.0) * self.std_error()
            } else {
                f64::INFINITY
            },
            samples: self.n,
        }
    }
}
