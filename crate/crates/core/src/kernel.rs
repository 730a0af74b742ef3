//! The kernels `g_{alpha,m}`, `eps_{alpha,m}` and the inverse `eps*_{alpha,m}`.
//!
//! In the variable `y = log(1/u)` the kernel is
//! `eps_{alpha,m}(u) = int_0^y e^{alpha s} s^m / m! ds`, which is increasing
//! in `y`; all inversions bisect in `y`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::special::{exp_partial, factorial};

/// Selects the mapping `Phi_alpha^{m+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct MappingParams {
    pub alpha: f64,
    pub m: u32,
}

#[derive(Deserialize)]
struct RawParams {
    alpha: f64,
    #[serde(default)]
    m: u32,
}

impl TryFrom<RawParams> for MappingParams {
    type Error = Error;
    fn try_from(raw: RawParams) -> Result<Self> {
        MappingParams::new(raw.alpha, raw.m)
    }
}

impl MappingParams {
    pub fn new(alpha: f64, m: u32) -> Result<Self> {
        if !(alpha.is_finite() && alpha < 2.0) {
            return Err(Error::InvalidInput(format!(
                "alpha must be finite and below 2 (the domain is trivial from 2 on), got {alpha}"
            )));
        }
        Ok(MappingParams { alpha, m })
    }

    pub fn single(alpha: f64) -> Result<Self> {
        Self::new(alpha, 0)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidInput(format!("params JSON: {e}")))
    }
}

/// `g_{alpha,m}(s) = s^{-alpha-1} (log 1/s)^m / m!` on `(0, 1]`.
pub fn g_kernel(p: &MappingParams, s: f64) -> f64 {
    if !(s > 0.0) || s > 1.0 {
        return 0.0;
    }
    let l = -s.ln();
    s.powf(-p.alpha - 1.0) * l.powi(p.m as i32) / factorial(p.m)
}

/// `eps_{alpha,m}(u) = int_u^1 g_{alpha,m}(s) ds`, zero for `u >= 1`.
pub fn epsilon(p: &MappingParams, u: f64) -> f64 {
    if u >= 1.0 {
        return 0.0;
    }
    if !(u > 0.0) {
        return epsilon_zero(p).as_f64();
    }
    epsilon_y(p, -u.ln())
}

/// The kernel as a function of `y = log(1/u)`.
pub(crate) fn epsilon_y(p: &MappingParams, y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let m = p.m;
    let a = p.alpha;
    let x = a * y;
    if a == 0.0 {
        return y.powi(m as i32 + 1) / factorial(m + 1);
    }
    if x.abs() <= 2.0 {
        // e^x y^{m+1}/(m+1)! * sum_j (-x)^j (m+1)!/(m+1+j)!
        let mut term = 1.0f64;
        let mut sum = 1.0f64;
        let mut j = 1u32;
        while term.abs() > 1e-17 * sum.abs() && j < 200 {
            term *= -x / (m + 1 + j) as f64;
            sum += term;
            j += 1;
        }
        x.exp() * y.powi(m as i32 + 1) / factorial(m + 1) * sum
    } else {
        // (1 - e^x sum_{k<=m} (-x)^k/k!) / (-alpha)^{m+1}
        let head = x.exp() * exp_partial(-x, m);
        (1.0 - head) / (-a).powi(m as i32 + 1)
    }
}

/// `eps_{alpha,m}(0)`: `(-alpha)^{-(m+1)}` for negative alpha, infinite otherwise.
pub fn epsilon_zero(p: &MappingParams) -> ExtReal {
    if p.alpha < 0.0 {
        ExtReal::Finite((-p.alpha).powi(-(p.m as i32 + 1)))
    } else {
        ExtReal::Infinite
    }
}

/// The inverse of `epsilon`: `eps*(t)` in `[0, 1]`, with `eps*(0) = 1` and
/// `eps*(t) = 0` from `eps(0)` on.
pub fn epsilon_star(p: &MappingParams, t: f64, tol_inv: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if let ExtReal::Finite(top) = epsilon_zero(p) {
        if t >= top {
            return 0.0;
        }
    }
    let a = p.alpha;
    if p.m == 0 {
        if a == 0.0 {
            return (-t).exp();
        }
        // (1 + alpha t)^{-1/alpha}
        return (-(a * t).ln_1p() / a).exp();
    }
    if a == 0.0 {
        let y = (factorial(p.m + 1) * t).powf(1.0 / (p.m + 1) as f64);
        return (-y).exp();
    }
    epsilon_star_bisect(p, t, tol_inv)
}

/// Bisection in `y = log(1/u)`, used for `m >= 1`, `alpha != 0` and as an
/// independent check of the closed forms.
pub fn epsilon_star_bisect(p: &MappingParams, t: f64, tol_inv: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if let ExtReal::Finite(top) = epsilon_zero(p) {
        if t >= top {
            return 0.0;
        }
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while epsilon_y(p, hi) < t {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return 0.0;
        }
    }
    let target = tol_inv * t.max(1.0);
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let e = epsilon_y(p, mid);
        if (e - t).abs() <= target * 1e-3 {
            lo = mid;
            hi = mid;
            break;
        }
        if e < t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (-0.5 * (lo + hi)).exp()
}

/// Cached description of one kernel: its upper limit and a monotone table
/// `(t_k, u_k)` on which simulation grids are laid out.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelTable {
    pub alpha: f64,
    pub m: u32,
    pub upper: ExtReal,
    /// Geometric `u` grid from 1 down to `u_min`.
    pub u: Vec<f64>,
    /// `eps(u)` on that grid, increasing.
    pub t: Vec<f64>,
}

impl KernelTable {
    pub fn new(p: &MappingParams, u_min: f64, n: usize) -> Self {
        let n = n.max(2);
        let ly = -u_min.ln();
        let u: Vec<f64> = (0..n).map(|k| (-ly * k as f64 / (n - 1) as f64).exp()).collect();
        let t = u.iter().map(|&x| epsilon(p, x)).collect();
        KernelTable { alpha: p.alpha, m: p.m, upper: epsilon_zero(p), u, t }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{integrate_log, Estimate, QuadOptions};

    fn lattice() -> Vec<MappingParams> {
        let mut v = Vec::new();
        for &a in &[-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5] {
            for m in 0..3 {
                v.push(MappingParams::new(a, m).unwrap());
            }
        }
        v
    }

    #[test]
    fn rejects_alpha_two() {
        assert!(MappingParams::new(2.0, 0).is_err());
        assert!(MappingParams::from_json(r#"{"alpha": 2.5, "m": 0}"#).is_err());
        assert_eq!(MappingParams::from_json(r#"{"alpha": 0.5}"#).unwrap().m, 0);
    }

    #[test]
    fn kernel_examples() {
        let p = |a, m| MappingParams::new(a, m).unwrap();
        assert_eq!(g_kernel(&p(0.0, 0), 0.5), 2.0);
        assert!((g_kernel(&p(-1.0, 1), (-1f64).exp()) - 1.0).abs() < 1e-15);
        assert_eq!(g_kernel(&p(1.0, 2), 1.0), 0.0);
        assert!((epsilon(&p(-1.0, 0), 0.25) - 0.75).abs() < 1e-15);
        assert!((epsilon(&p(0.0, 0), (-2f64).exp()) - 2.0).abs() < 1e-15);
        assert!((epsilon(&p(0.0, 1), (-2f64).exp()) - 2.0).abs() < 1e-15);
        assert!((epsilon_star(&p(0.0, 0), 1.0, 1e-12) - (-1f64).exp()).abs() < 1e-15);
        assert!((epsilon_star(&p(-1.0, 0), 0.3, 1e-12) - 0.7).abs() < 1e-15);
        assert!((epsilon_star(&p(0.0, 1), 0.5, 1e-12) - (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn closed_sum_matches_quadrature_of_g() {
        let opts = QuadOptions::default();
        for p in lattice() {
            for &u in &[1e-6, 1e-3, 0.01, 0.2, 0.5, 0.9, 0.999] {
                let q: Estimate<f64> = integrate_log(|s| g_kernel(&p, s), u, 1.0, &opts).unwrap();
                let e = epsilon(&p, u);
                assert!((e - q.value).abs() <= 1e-10 * q.value.max(1.0), "{p:?} u={u}: {e} vs {}", q.value);
            }
        }
    }

    #[test]
    fn first_order_sign() {
        // int_u^1 s^{-alpha-1} log(1/s) ds = (1 + e^x (x - 1)) / alpha^2, x = alpha log(1/u)
        let p = MappingParams::new(0.5, 1).unwrap();
        let u: f64 = 0.01;
        let x = 0.5 * (1.0 / u).ln();
        let want = (1.0 + x.exp() * (x - 1.0)) / 0.25;
        assert!((epsilon(&p, u) - want).abs() < 1e-12 * want);
    }

    #[test]
    fn bisection_agrees_with_closed_inverses() {
        for p in lattice() {
            for k in 0..20 {
                let t = 10f64.powf(-3.0 + 0.3 * k as f64);
                let a = epsilon_star(&p, t, 1e-14);
                let b = epsilon_star_bisect(&p, t, 1e-14);
                assert!((a - b).abs() <= 1e-10, "{p:?} t={t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn upper_limit_for_negative_alpha() {
        for p in lattice().into_iter().filter(|p| p.alpha < 0.0) {
            let top = epsilon_zero(&p).as_f64();
            assert!((epsilon(&p, 1e-300) - top).abs() < 1e-12 * top);
            assert_eq!(epsilon_star(&p, top * 1.0001, 1e-12), 0.0);
        }
    }
}
