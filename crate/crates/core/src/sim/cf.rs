//! Empirical characteristic functions and the end-to-end comparison against
//! the exponent of the mapped triplet.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{simulate_phi_integral, Provenance, SampleBatch, SimConfig};
use crate::error::{Error, Result};
use crate::kernel::MappingParams;
use crate::phi::apply_phi;
use crate::tol::Tolerances;
use crate::triplet::{char_exponent, LevyTriplet};

/// Probability that one point lands beyond three standard errors.
const EXCEED_P: f64 = 0.0027;
/// The comparison fails when this few exceedances would be surprising.
const BINOMIAL_LEVEL: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfPoint {
    pub z: Vec<f64>,
    pub value: Complex64,
    /// `sqrt((1 - |value|^2) / n)`, the standard error of a complex mean of unit-modulus terms.
    pub standard_error: f64,
}

/// `(1/n) sum_j exp(i <z, x_j>)` at each `z`, summed in sample order.
pub fn empirical_cf(batch: &SampleBatch, z_grid: &[Vec<f64>]) -> Result<Vec<CfPoint>> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let n = batch.len() as f64;
    z_grid
        .iter()
        .map(|z| {
            if z.len() != batch.dim {
                return Err(Error::InvalidInput(format!("z has length {} but dim is {}", z.len(), batch.dim)));
            }
            let (mut c, mut s) = (0.0, 0.0);
            for x in &batch.samples {
                let phase: f64 = z.iter().zip(x).map(|(a, b)| a * b).sum();
                c += phase.cos();
                s += phase.sin();
            }
            let value = Complex64::new(c / n, s / n);
            let var = (1.0 - value.norm_sqr()).max(0.0);
            Ok(CfPoint { z: z.clone(), value, standard_error: (var / n).sqrt() })
        })
        .collect()
}

/// `n` points spread over `[-half_width, half_width]`, cycling through the axes.
pub fn axis_grid(dim: usize, n: usize, half_width: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|j| {
            let s = if n == 1 { 0.0 } else { -half_width + 2.0 * half_width * j as f64 / (n - 1) as f64 };
            let mut z = vec![0.0; dim];
            z[j % dim] = s;
            z
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub z: Vec<Vec<f64>>,
    pub empirical: Vec<Complex64>,
    pub exact: Vec<Complex64>,
    pub deviation: Vec<f64>,
    pub standard_error: Vec<f64>,
    /// Points with `deviation > 3 standard_error`.
    pub exceedances: usize,
    /// Largest count compatible with chance at the 1% level.
    pub allowed: usize,
    pub pass: bool,
    pub n_samples: usize,
    pub provenance: Provenance,
}

/// Smallest `k` with `P(Binomial(n, p) > k) <= level`.
fn binomial_allowance(n: usize, p: f64, level: f64) -> usize {
    let mut pmf = (1.0 - p).powi(n as i32);
    let mut cdf = pmf;
    let mut k = 0;
    while 1.0 - cdf > level && k < n {
        pmf *= (n - k) as f64 / (k + 1) as f64 * p / (1.0 - p);
        cdf += pmf;
        k += 1;
    }
    k
}

/// Simulates the integral and compares its empirical characteristic function
/// with `exp(char_exponent(apply_phi(t, p), z))`.
pub fn mc_compare(
    t: &LevyTriplet,
    p: &MappingParams,
    cfg: &SimConfig,
    z_grid: &[Vec<f64>],
    tol: &Tolerances,
) -> Result<McReport> {
    let mapped = apply_phi(t, p, tol)?;
    let batch = simulate_phi_integral(t, p, cfg, tol)?;
    compare_batch(&batch, &mapped, z_grid, tol)
}

/// The comparison for an existing batch against any target triplet.
pub fn compare_batch(
    batch: &SampleBatch,
    target: &LevyTriplet,
    z_grid: &[Vec<f64>],
    tol: &Tolerances,
) -> Result<McReport> {
    let emp = empirical_cf(batch, z_grid)?;
    let exact = z_grid.iter().map(|z| Ok(char_exponent(target, z, tol)?.exp())).collect::<Result<Vec<_>>>()?;
    let deviation: Vec<f64> = emp.iter().zip(&exact).map(|(e, x)| (e.value - x).norm()).collect();
    let standard_error: Vec<f64> = emp.iter().map(|e| e.standard_error).collect();
    let exceedances = deviation.iter().zip(&standard_error).filter(|(d, s)| **d > 3.0 * **s).count();
    let allowed = binomial_allowance(z_grid.len(), EXCEED_P, BINOMIAL_LEVEL);
    Ok(McReport {
        z: z_grid.to_vec(),
        empirical: emp.iter().map(|e| e.value).collect(),
        exact,
        deviation,
        standard_error,
        exceedances,
        allowed,
        pass: exceedances <= allowed,
        n_samples: batch.len(),
        provenance: batch.provenance.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Provenance, SimConfig};
    use std::f64::consts::PI;

    fn batch(samples: Vec<Vec<f64>>) -> SampleBatch {
        SampleBatch {
            dim: samples[0].len(),
            samples,
            provenance: Provenance {
                triplet_sha256: String::new(),
                params: None,
                seed: 0,
                config: SimConfig::new(1, 0),
                horizon: 0.0,
                horizon_truncated: false,
                u_min: 0.0,
                truncated_square_integral: 0.0,
                expected_jumps: 0.0,
            },
        }
    }

    #[test]
    fn trivial_batches() {
        let zero = batch(vec![vec![0.0]; 10]);
        for p in empirical_cf(&zero, &[vec![3.7], vec![-1.0]]).unwrap() {
            assert_eq!(p.value, Complex64::new(1.0, 0.0));
            assert_eq!(p.standard_error, 0.0);
        }
        let pm = batch(vec![vec![1.0], vec![-1.0]]);
        let p = &empirical_cf(&pm, &[vec![PI]]).unwrap()[0];
        assert!((p.value - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
        assert!(empirical_cf(&pm, &[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn standard_error_is_bounded() {
        let b = batch((0..1000).map(|j| vec![j as f64 * 0.37]).collect());
        for p in empirical_cf(&b, &axis_grid(1, 21, 3.0)).unwrap() {
            assert!(p.standard_error <= 1.0 / (1000f64).sqrt() + 1e-15);
        }
    }

    #[test]
    fn allowance_quantiles() {
        // P(X >= 1) = 5.5% and P(X >= 2) = 0.15% for 21 points
        assert_eq!(binomial_allowance(21, EXCEED_P, 0.01), 1);
        assert_eq!(binomial_allowance(1, EXCEED_P, 0.01), 0);
        assert_eq!(binomial_allowance(1000, EXCEED_P, 0.01), 7);
    }

    #[test]
    fn axis_grid_cycles() {
        let g = axis_grid(2, 5, 2.0);
        assert_eq!(g[0], vec![-2.0, 0.0]);
        assert_eq!(g[1], vec![0.0, -1.0]);
        assert_eq!(g[2], vec![0.0, 0.0]);
    }
}
