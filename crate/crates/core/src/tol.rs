use serde::{Deserialize, Serialize};

/// Numerical tolerances shared by every operation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Absolute tolerance for adaptive quadrature.
    pub quad: f64,
    /// Relative tolerance for kernel inversion.
    pub inv: f64,
    /// Acceptance threshold for dyadic limit schedules.
    pub limit: f64,
    /// Relative slack for monotonicity and convexity checks on grids.
    pub mono: f64,
    /// Relative slack for the PSD test, scaled by the largest |A| entry.
    pub psd: f64,
    /// Slack on |xi| = 1 for spherical directions.
    pub unit: f64,
    /// Maximum bisection depth of adaptive quadrature.
    pub max_depth: u32,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { quad: 1e-10, inv: 1e-12, limit: 1e-8, mono: 1e-12, psd: 1e-12, unit: 1e-12, max_depth: 60 }
    }
}

impl Tolerances {
    pub fn with_quad(mut self, quad: f64) -> Self {
        self.quad = quad;
        self
    }
}
