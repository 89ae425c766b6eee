use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::pattern::{distance, Point};

/// Anything that can fill a covariance matrix between two locations.
pub trait Covariance {
    fn cov(&self, a: &Point, b: &Point) -> f64;
    fn variance(&self) -> f64;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Exponential,
}

/// Stationary isotropic kernel `C(r) = variance · exp(-range · r)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub kind: KernelKind,
    pub range: f64,
    pub variance: f64,
}

impl Kernel {
    pub fn exponential(range: f64, variance: f64) -> Result<Self> {
        if !(range > 0.0 && range.is_finite()) {
            return Err(param(format!("kernel range must be positive, got {range}")));
        }
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(param(format!(
                "kernel variance must be positive, got {variance}"
            )));
        }
        Ok(Self {
            kind: KernelKind::Exponential,
            range,
            variance,
        })
    }

    pub fn at_distance(&self, r: f64) -> f64 {
        match self.kind {
            KernelKind::Exponential => self.variance * (-self.range * r).exp(),
        }
    }

    pub fn default_jitter(&self) -> f64 {
        1e-8 * self.variance
    }
}

impl Covariance for Kernel {
    fn cov(&self, a: &Point, b: &Point) -> f64 {
        self.at_distance(distance(a, b))
    }

    fn variance(&self) -> f64 {
        self.variance
    }
}
