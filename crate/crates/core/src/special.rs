//! Small special-function helpers.

use num_complex::Complex64;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

pub fn factorial(k: u32) -> f64 {
    (1..=k).fold(1.0, |acc, j| acc * j as f64)
}

/// `cos(x) - 1` without cancellation.
pub fn cos_m1(x: f64) -> f64 {
    let h = (0.5 * x).sin();
    -2.0 * h * h
}

/// `sin(x) - x` without cancellation near zero.
pub fn sin_mx(x: f64) -> f64 {
    if x.abs() < 0.5 {
        // -x^3/3! + x^5/5! - ...
        let x2 = x * x;
        let mut term = -x * x2 / 6.0;
        let mut sum = term;
        let mut k = 3.0;
        while term.abs() > 1e-18 * sum.abs() {
            term *= -x2 / ((2.0 * k - 2.0) * (2.0 * k - 1.0));
            sum += term;
            k += 1.0;
        }
        sum
    } else {
        x.sin() - x
    }
}

/// `e^{ix} - 1 - i x c` evaluated stably, where `c` is a compensator weight in [0, 1].
pub fn levy_integrand(x: f64, c: f64) -> Complex64 {
    // sin x - x c = (sin x - x) + x (1 - c)
    Complex64::new(cos_m1(x), sin_mx(x) + x * (1.0 - c))
}

/// Sum `sum_{k=0}^m y^k / k!` (truncated exponential series).
pub fn exp_partial(y: f64, m: u32) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..=m {
        term *= y / k as f64;
        sum += term;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_negative_half() {
        // Gamma(-1/2) = -2 sqrt(pi)
        assert!((gamma(-0.5) + 2.0 * std::f64::consts::PI.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn stable_trig_forms() {
        for &x in &[1e-8, 1e-3, 0.3, 0.49, 0.51, 2.0, -0.2] {
            assert!((cos_m1(x) - (x.cos() - 1.0)).abs() <= 1e-15 + 1e-12 * x * x);
            let direct = x.sin() - x;
            assert!((sin_mx(x) - direct).abs() <= 1e-16 + 1e-10 * direct.abs(), "{x}");
        }
        let x: f64 = 1e-3;
        let series = -x.powi(3) / 6.0 + x.powi(5) / 120.0;
        assert!((sin_mx(x) - series).abs() < 1e-24);
    }

    #[test]
    fn partial_exponential() {
        assert_eq!(exp_partial(2.0, 0), 1.0);
        assert!((exp_partial(1.0, 20) - std::f64::consts::E).abs() < 1e-15);
        assert_eq!(factorial(5), 120.0);
    }
}
