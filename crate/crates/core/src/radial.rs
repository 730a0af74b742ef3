//! Radial components of a polar Lévy measure.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ell::{EllFunction, EllTail};
use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::quad::{integrate_fourier_tail, integrate_range, Estimate, QuadOptions};
use crate::special::{cos_m1, factorial, gamma, sin_mx};
use crate::tol::Tolerances;

/// A measure on `(0, inf)` describing jump sizes along one direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RadialMeasure {
    /// Density `c r^{-beta-1}`: the radial part of a strictly stable law.
    PowerLaw { c: f64, beta: f64 },
    /// Density `c r^{-beta-1} e^{-theta r}`.
    Tilted { c: f64, beta: f64, theta: f64 },
    /// Point mass `mass` at `r0`.
    Dirac { r0: f64, mass: f64 },
    /// Density `r^{-alpha-1} l(r)`.
    #[serde(rename = "kclass")]
    KClass { alpha: f64, ell: EllFunction },
    /// Density on a grid, interpolated linearly in log-log coordinates.
    /// Outside the grid the density is zero unless the matching
    /// extrapolation flag asks for a power law fitted on the outermost decade.
    Tabulated {
        r: Vec<f64>,
        density: Vec<f64>,
        #[serde(default)]
        extrapolate_low: bool,
        #[serde(default)]
        extrapolate_high: bool,
    },
}

/// Density behaviour `r^{-1-b} (log)^{log_power}` at one end of the support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Index {
    pub b: f64,
    pub log_power: u32,
}

/// Behaviour of the measure near the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NearZero {
    /// No mass below this radius.
    Empty(f64),
    Power(Index),
}

/// Behaviour of the measure at infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tail {
    /// No mass above this radius.
    Compact(f64),
    Exponential(f64),
    Power(Index),
}

/// Integration region for moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// `(0, 1]`
    NearZero,
    /// `(1, inf)`
    Tail,
    Full,
}

impl RadialMeasure {
    pub fn power_law(c: f64, beta: f64) -> Self {
        RadialMeasure::PowerLaw { c, beta }
    }

    pub fn dirac(r0: f64, mass: f64) -> Self {
        RadialMeasure::Dirac { r0, mass }
    }

    pub fn tilted(c: f64, beta: f64, theta: f64) -> Self {
        RadialMeasure::Tilted { c, beta, theta }
    }

    /// Density of the absolutely continuous part; zero for a point mass.
    pub fn density(&self, r: f64) -> f64 {
        if !(r > 0.0) {
            return 0.0;
        }
        match self {
            RadialMeasure::PowerLaw { c, beta } => c * r.powf(-beta - 1.0),
            RadialMeasure::Tilted { c, beta, theta } => c * r.powf(-beta - 1.0) * (-theta * r).exp(),
            RadialMeasure::Dirac { .. } => 0.0,
            RadialMeasure::KClass { alpha, ell } => {
                let l = ell.eval(r);
                if l == 0.0 {
                    0.0
                } else {
                    r.powf(-alpha - 1.0) * l
                }
            }
            RadialMeasure::Tabulated { r: grid, density, extrapolate_low, extrapolate_high } => {
                tabulated_density(grid, density, *extrapolate_low, *extrapolate_high, r)
            }
        }
    }

    /// The point mass, if the measure is atomic.
    pub fn atom(&self) -> Option<(f64, f64)> {
        match self {
            RadialMeasure::Dirac { r0, mass } => Some((*r0, *mass)),
            _ => None,
        }
    }

    pub fn is_absolutely_continuous(&self) -> bool {
        self.atom().is_none()
    }

    /// Points where the density may fail to be smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            RadialMeasure::KClass { ell, .. } => ell.breakpoints(),
            RadialMeasure::Tabulated { r, .. } => r.clone(),
            RadialMeasure::Dirac { r0, .. } => vec![*r0],
            _ => Vec::new(),
        }
    }

    /// A typical length scale of the measure.
    pub fn scale_hint(&self) -> f64 {
        match self {
            RadialMeasure::PowerLaw { .. } => 1.0,
            RadialMeasure::Tilted { theta, .. } => 1.0 / theta,
            RadialMeasure::Dirac { r0, .. } => *r0,
            RadialMeasure::KClass { ell, .. } => ell.scale_hint(),
            RadialMeasure::Tabulated { r, .. } => (r[0] * r[r.len() - 1]).sqrt(),
        }
    }

    pub fn near_zero(&self) -> NearZero {
        match self {
            RadialMeasure::PowerLaw { beta, .. } | RadialMeasure::Tilted { beta, .. } => {
                NearZero::Power(Index { b: *beta, log_power: 0 })
            }
            RadialMeasure::Dirac { r0, .. } => NearZero::Empty(*r0),
            RadialMeasure::KClass { alpha, ell } => {
                let a = ell.near_zero();
                NearZero::Power(Index { b: alpha + a.exponent, log_power: a.log_power })
            }
            RadialMeasure::Tabulated { r, density, extrapolate_low, .. } => {
                if *extrapolate_low && density[0] > 0.0 {
                    let s = decade_slope(r, density, false);
                    NearZero::Power(Index { b: -1.0 - s, log_power: 0 })
                } else {
                    NearZero::Empty(r[0])
                }
            }
        }
    }

    pub fn tail(&self) -> Tail {
        match self {
            RadialMeasure::PowerLaw { beta, .. } => Tail::Power(Index { b: *beta, log_power: 0 }),
            RadialMeasure::Tilted { theta, .. } => Tail::Exponential(*theta),
            RadialMeasure::Dirac { r0, .. } => Tail::Compact(*r0),
            RadialMeasure::KClass { alpha, ell } => match ell.tail() {
                EllTail::Compact(e) => Tail::Compact(e),
                EllTail::Exponential(t) => Tail::Exponential(t),
                EllTail::Power(a) => Tail::Power(Index { b: alpha + a.exponent, log_power: a.log_power }),
            },
            RadialMeasure::Tabulated { r, density, extrapolate_high, .. } => {
                let n = r.len();
                if *extrapolate_high && density[n - 1] > 0.0 {
                    let s = decade_slope(r, density, true);
                    Tail::Power(Index { b: -1.0 - s, log_power: 0 })
                } else {
                    Tail::Compact(r[n - 1])
                }
            }
        }
    }

    /// Smallest and largest radius that can carry mass.
    pub fn support(&self) -> (f64, f64) {
        let lo = match self.near_zero() {
            NearZero::Empty(a) => a,
            NearZero::Power(_) => 0.0,
        };
        let hi = match self.tail() {
            Tail::Compact(b) => b,
            _ => f64::INFINITY,
        };
        (lo, hi)
    }

    /// `int_{(lo, hi]} f(r) nu(dr)`, assuming the integral converges.
    pub fn integrate<T, F>(&self, f: F, lo: f64, hi: f64, opts: &QuadOptions) -> Result<T>
    where
        T: crate::quad::QuadValue,
        F: Fn(f64) -> T,
    {
        if let Some((r0, mass)) = self.atom() {
            return Ok(if r0 > lo && r0 <= hi { f(r0) * mass } else { T::zero() });
        }
        let (s_lo, s_hi) = self.support();
        let a = lo.max(s_lo);
        let b = hi.min(s_hi);
        if !(b > a) {
            return Ok(T::zero());
        }
        let est: Estimate<T> = integrate_range(
            |r: f64| {
                let d = self.density(r);
                if d == 0.0 {
                    T::zero()
                } else {
                    f(r) * d
                }
            },
            a,
            b,
            &self.quad_breaks(),
            opts,
        )?;
        Ok(est.value)
    }

    fn quad_breaks(&self) -> Vec<f64> {
        let mut b = self.breakpoints();
        b.push(1.0);
        b
    }

    /// Whether `int_{(0,1]} r^delta (log 1/r)^k nu(dr)` is finite; logarithms never matter.
    pub fn finite_near_zero(&self, delta: f64) -> bool {
        match self.near_zero() {
            NearZero::Empty(_) => true,
            NearZero::Power(i) => delta > i.b,
        }
    }

    /// Whether `int_{(1,inf)} r^delta (log r)^k nu(dr)` is finite; logarithms never matter.
    pub fn finite_tail(&self, delta: f64) -> bool {
        match self.tail() {
            Tail::Compact(_) | Tail::Exponential(_) => true,
            Tail::Power(i) => delta < i.b,
        }
    }

    /// `int_{(1,inf)} r^delta (log r)^k nu(dr)`.
    pub fn tail_moment(&self, delta: f64, k: u32, tol: &Tolerances) -> Result<ExtReal> {
        if !self.finite_tail(delta) {
            return Ok(ExtReal::Infinite);
        }
        match self {
            RadialMeasure::PowerLaw { c, beta } => {
                Ok(ExtReal::Finite(c * factorial(k) / (beta - delta).powi(k as i32 + 1)))
            }
            RadialMeasure::Dirac { r0, mass } => {
                Ok(ExtReal::Finite(if *r0 > 1.0 { mass * r0.powf(delta) * r0.ln().powi(k as i32) } else { 0.0 }))
            }
            _ => {
                let v: f64 = self.integrate(
                    |r: f64| r.powf(delta) * r.ln().powi(k as i32),
                    1.0,
                    f64::INFINITY,
                    &QuadOptions::from_tol(tol),
                )?;
                Ok(ExtReal::Finite(v))
            }
        }
    }

    /// `int_{(0,1]} r^delta nu(dr)`.
    pub fn near_zero_moment(&self, delta: f64, tol: &Tolerances) -> Result<ExtReal> {
        if !self.finite_near_zero(delta) {
            return Ok(ExtReal::Infinite);
        }
        match self {
            RadialMeasure::PowerLaw { c, beta } => Ok(ExtReal::Finite(c / (delta - beta))),
            RadialMeasure::Dirac { r0, mass } => {
                Ok(ExtReal::Finite(if *r0 <= 1.0 { mass * r0.powf(delta) } else { 0.0 }))
            }
            _ => {
                let v: f64 = self.integrate(|r: f64| r.powf(delta), 0.0, 1.0, &QuadOptions::from_tol(tol))?;
                Ok(ExtReal::Finite(v))
            }
        }
    }

    /// `int r^delta nu(dr)` over the chosen region.
    pub fn moment(&self, delta: f64, region: Region, tol: &Tolerances) -> Result<ExtReal> {
        Ok(match region {
            Region::NearZero => self.near_zero_moment(delta, tol)?,
            Region::Tail => self.tail_moment(delta, 0, tol)?,
            Region::Full => self.near_zero_moment(delta, tol)? + self.tail_moment(delta, 0, tol)?,
        })
    }

    /// `int_{(1,inf)} (log r)^k nu(dr)`.
    pub fn log_moment(&self, k: u32, tol: &Tolerances) -> Result<ExtReal> {
        self.tail_moment(0.0, k, tol)
    }

    /// `nu((lo, hi])`.
    pub fn mass_between(&self, lo: f64, hi: f64, tol: &Tolerances) -> Result<ExtReal> {
        if !(hi > lo) {
            return Ok(ExtReal::Finite(0.0));
        }
        match self {
            RadialMeasure::PowerLaw { c, beta } => {
                if lo <= 0.0 {
                    return Ok(ExtReal::Infinite);
                }
                let upper = if hi.is_finite() { hi.powf(-beta) } else { 0.0 };
                Ok(ExtReal::Finite(c / beta * (lo.powf(-beta) - upper)))
            }
            RadialMeasure::Dirac { r0, mass } => Ok(ExtReal::Finite(if *r0 > lo && *r0 <= hi { *mass } else { 0.0 })),
            _ => {
                if let NearZero::Power(i) = self.near_zero() {
                    if lo <= 0.0 && i.b >= 0.0 {
                        return Ok(ExtReal::Infinite);
                    }
                }
                let v: f64 = self.integrate(|_| 1.0, lo, hi, &QuadOptions::from_tol(tol))?;
                Ok(ExtReal::Finite(v))
            }
        }
    }

    /// `int r^3 / (1 + r^2) nu(dr)`, the correction between drift and mean.
    pub fn mean_correction(&self, tol: &Tolerances) -> Result<ExtReal> {
        if !self.finite_tail(1.0) {
            return Ok(ExtReal::Infinite);
        }
        match self {
            RadialMeasure::PowerLaw { c, beta } => Ok(ExtReal::Finite(c * FRAC_PI_2 / -(PI * beta / 2.0).cos())),
            RadialMeasure::Dirac { r0, mass } => Ok(ExtReal::Finite(mass * r0.powi(3) / (1.0 + r0 * r0))),
            _ => {
                let v: f64 = self.integrate(
                    |r: f64| r * r * r / (1.0 + r * r),
                    0.0,
                    f64::INFINITY,
                    &QuadOptions::from_tol(tol),
                )?;
                Ok(ExtReal::Finite(v))
            }
        }
    }

    /// Structural and integrability problems, one message per failure.
    pub fn issues(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            RadialMeasure::PowerLaw { c, beta } => {
                if !(c.is_finite() && *c > 0.0) {
                    out.push("power_law needs c > 0".into());
                }
                if !beta.is_finite() {
                    out.push("power_law beta must be finite".into());
                }
            }
            RadialMeasure::Tilted { c, beta, theta } => {
                if !(c.is_finite() && *c > 0.0) {
                    out.push("tilted needs c > 0".into());
                }
                if !(theta.is_finite() && *theta > 0.0) {
                    out.push("tilted needs theta > 0".into());
                }
                if !beta.is_finite() {
                    out.push("tilted beta must be finite".into());
                }
            }
            RadialMeasure::Dirac { r0, mass } => {
                if !(r0.is_finite() && *r0 > 0.0) {
                    out.push("dirac needs r0 > 0".into());
                }
                if !(mass.is_finite() && *mass > 0.0) {
                    out.push("dirac needs mass > 0".into());
                }
            }
            RadialMeasure::KClass { alpha, ell } => {
                if !(alpha.is_finite() && *alpha < 2.0) {
                    out.push("kclass needs alpha < 2".into());
                }
                out.extend(ell.structural_issues());
            }
            RadialMeasure::Tabulated { r, density, .. } => {
                if r.len() < 2 || r.len() != density.len() {
                    out.push("tabulated radial needs at least two points and matching lengths".into());
                } else if !(r.iter().all(|x| x.is_finite() && *x > 0.0) && r.windows(2).all(|w| w[1] > w[0])) {
                    out.push("tabulated radial grid must be positive and strictly increasing".into());
                }
                if density.iter().any(|d| !d.is_finite() || *d < 0.0) {
                    out.push("tabulated radial density must be finite and nonnegative".into());
                }
            }
        }
        if !out.is_empty() {
            return out;
        }
        if let NearZero::Power(i) = self.near_zero() {
            if i.b >= 2.0 {
                out.push(format!("(r^2 ^ 1) integral diverges near 0 (density ~ r^(-1-{}))", i.b));
            }
        }
        if let Tail::Power(i) = self.tail() {
            if i.b <= 0.0 {
                out.push(format!("(r^2 ^ 1) integral diverges at infinity (density ~ r^(-1-{}))", i.b));
            }
        }
        if self.is_absolutely_continuous() {
            let grid = self.probe_grid(200);
            let mut any_positive = false;
            for &r in &grid {
                let d = self.density(r);
                if (!d.is_finite() || d < 0.0) && d < -1e-12 * self.density_scale(r) {
                    out.push(format!("negative or non-finite density {d:e} at r = {r:e}"));
                    break;
                }
                if d > 0.0 {
                    any_positive = true;
                }
            }
            if !any_positive {
                out.push("radial measure is the zero measure".into());
            }
        }
        out
    }

    /// Magnitude reference for relative slack in sign checks.
    fn density_scale(&self, r: f64) -> f64 {
        match self {
            RadialMeasure::KClass { alpha, ell: EllFunction::Composite { terms } } => {
                r.powf(-alpha - 1.0) * terms.iter().map(|t| (t.coef * t.ell.eval(r)).abs()).sum::<f64>()
            }
            _ => self.density(r).abs(),
        }
    }

    /// Geometric grid covering the effective support, with points on both sides of every breakpoint.
    pub fn probe_grid(&self, n: usize) -> Vec<f64> {
        let s = self.scale_hint();
        let (lo, hi) = self.support();
        let a = if lo > 0.0 { lo } else { s * 1e-6 };
        let b = if hi.is_finite() { hi } else { s * 1e6 };
        let mut g = geometric(a, b, n);
        for bp in self.breakpoints() {
            if bp > a && bp < b {
                g.push(bp * (1.0 - 1e-9));
                g.push(bp);
            }
        }
        g.sort_by(f64::total_cmp);
        g.dedup();
        g
    }

    /// `int (e^{iur} - 1 - iur/(1+r^2)) nu(dr)`.
    pub fn levy_exponent(&self, u: f64, tol: &Tolerances) -> Result<Complex64> {
        if u == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        if u < 0.0 {
            return Ok(self.levy_exponent(-u, tol)?.conj());
        }
        if let Some(v) = self.levy_exponent_closed(u, tol)? {
            return Ok(v);
        }
        self.levy_exponent_numeric(u, tol)
    }

    fn levy_exponent_closed(&self, u: f64, tol: &Tolerances) -> Result<Option<Complex64>> {
        let near = |x: f64, y: f64| (x - y).abs() < 1e-4 && x != y;
        Ok(match self {
            RadialMeasure::Dirac { r0, mass } => {
                let x = u * r0;
                let comp = 1.0 / (1.0 + r0 * r0);
                Some(Complex64::new(cos_m1(x), x.sin() - x * comp) * *mass)
            }
            RadialMeasure::PowerLaw { c, beta } if *beta > 0.0 && *beta < 2.0 && !near(*beta, 1.0) => {
                Some(power_law_exponent(*c, *beta, u))
            }
            RadialMeasure::Tilted { c, beta, theta } if *beta < 2.0 && !near(*beta, 1.0) && !near(*beta, 0.0) => {
                Some(tilted_exponent(*c, *beta, *theta, u, tol)?)
            }
            RadialMeasure::KClass { alpha, ell } => match ell {
                EllFunction::PowerTail { c, p } => {
                    RadialMeasure::PowerLaw { c: *c, beta: alpha + p }.levy_exponent_closed(u, tol)?
                }
                EllFunction::ExpTail { c, theta, p } => {
                    RadialMeasure::Tilted { c: *c, beta: alpha + p, theta: *theta }.levy_exponent_closed(u, tol)?
                }
                EllFunction::Composite { terms } => {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for t in terms {
                        if t.coef == 0.0 {
                            continue;
                        }
                        let part = RadialMeasure::KClass { alpha: *alpha, ell: t.ell.clone() };
                        acc += part.levy_exponent(u, tol)? * t.coef;
                    }
                    Some(acc)
                }
                _ => None,
            },
            _ => None,
        })
    }

    /// Direct quadrature of the Lévy–Khintchine integrand, split at `1/u`.
    pub fn levy_exponent_numeric(&self, u: f64, tol: &Tolerances) -> Result<Complex64> {
        if let Some((r0, mass)) = self.atom() {
            let x = u * r0;
            return Ok(Complex64::new(cos_m1(x), x.sin() - x / (1.0 + r0 * r0)) * mass);
        }
        let opts = QuadOptions::from_tol(tol).with_abs(tol.quad / 4.0);
        let (lo, hi) = self.support();
        let split = (1.0 / u).max(lo).min(hi);
        let breaks = self.quad_breaks();
        let dens = |r: f64| self.density(r);
        // inner region: expand the integrand stably
        let inner: Estimate<Complex64> = integrate_range(
            |r: f64| {
                let d = dens(r);
                if d == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                let x = u * r;
                Complex64::new(cos_m1(x), sin_mx(x) + x * r * r / (1.0 + r * r)) * d
            },
            lo,
            split,
            &breaks,
            &opts,
        )?;
        if !(hi > split) {
            return Ok(inner.value);
        }
        // outer region: oscillatory part minus the two non-oscillatory pieces
        let plain: Estimate<f64> = integrate_range(dens, split, hi, &breaks, &opts)?;
        let comp: Estimate<f64> = integrate_range(|r: f64| r * dens(r) / (1.0 + r * r), split, hi, &breaks, &opts)?;
        let osc = if hi.is_finite() {
            oscillatory_finite(&dens, split, hi, u, &breaks, &opts)?
        } else {
            integrate_fourier_tail(dens, split, u, &opts)?
        };
        Ok(inner.value + osc - Complex64::new(plain.value, u * comp.value))
    }
}

fn power_law_exponent(c: f64, beta: f64, u: f64) -> Complex64 {
    let phase = Complex64::from_polar(1.0, -PI * beta / 2.0);
    let main = phase * (c * gamma(-beta) * u.powf(beta));
    let half = (PI * beta / 2.0).cos();
    // compensator: -iu c int r^{-beta}/(1+r^2) for beta < 1, +iu c int r^{2-beta}/(1+r^2) for beta > 1
    let comp = if beta < 1.0 { -c * FRAC_PI_2 / half } else { c * FRAC_PI_2 / -half };
    main + Complex64::new(0.0, u * comp)
}

fn tilted_exponent(c: f64, beta: f64, theta: f64, u: f64, tol: &Tolerances) -> Result<Complex64> {
    let z = Complex64::new(theta, -u);
    let opts = QuadOptions::from_tol(tol).with_abs(tol.quad / 4.0);
    if beta < 1.0 {
        let main =
            if beta == 0.0 { -(z / theta).ln() * c } else { (z.powf(beta) - theta.powf(beta)) * (c * gamma(-beta)) };
        // r^{-beta} is subtracted on (0, 1]: near beta = 1 it is barely integrable
        let f = |r: f64| (-theta * r).exp() / (1.0 + r * r);
        let near: Estimate<f64> = integrate_range(|r: f64| r.powf(-beta) * (f(r) - 1.0), 0.0, 1.0, &[], &opts)?;
        let far: Estimate<f64> =
            integrate_range(|r: f64| r.powf(-beta) * f(r), 1.0, f64::INFINITY, &[1.0 / theta], &opts)?;
        let k = near.value + 1.0 / (1.0 - beta) + far.value;
        Ok(main - Complex64::new(0.0, u * c * k))
    } else {
        let main = if beta == 1.0 {
            (z * (z / theta).ln() + Complex64::new(0.0, u)) * c
        } else {
            (z.powf(beta) - theta.powf(beta) + Complex64::new(0.0, u * beta * theta.powf(beta - 1.0)))
                * (c * gamma(-beta))
        };
        let k: Estimate<f64> = integrate_range(
            |r: f64| r.powf(2.0 - beta) * (-theta * r).exp() / (1.0 + r * r),
            0.0,
            f64::INFINITY,
            &[1.0 / theta],
            &opts,
        )?;
        Ok(main + Complex64::new(0.0, u * c * k.value))
    }
}

/// `int_a^b e^{iur} rho(r) dr` on a finite range, one half period per panel.
fn oscillatory_finite<F: Fn(f64) -> f64>(
    rho: &F,
    a: f64,
    b: f64,
    u: f64,
    breaks: &[f64],
    opts: &QuadOptions,
) -> Result<Complex64> {
    let h = PI / u;
    let n = ((b - a) / h).ceil().max(1.0);
    if n > 200_000.0 {
        return Err(Error::QuadratureNonConvergence {
            error: f64::NAN,
            tolerance: opts.abs_tol,
            context: format!("too many oscillations on [{a:e}, {b:e}] at frequency {u:e}"),
        });
    }
    let n = n as usize;
    let mut nodes: Vec<f64> = (0..=n).map(|k| (a + k as f64 * h).min(b)).collect();
    nodes.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    let sub = QuadOptions { abs_tol: opts.abs_tol / nodes.len() as f64, ..*opts };
    let mut acc = Complex64::new(0.0, 0.0);
    for w in nodes.windows(2) {
        let est: Estimate<Complex64> = crate::quad::integrate(
            |r: f64| {
                let (s, c) = (u * r).sin_cos();
                Complex64::new(c, s) * rho(r)
            },
            w[0],
            w[1],
            &sub,
        )?;
        acc += est.value;
    }
    Ok(acc)
}

pub(crate) fn geometric(a: f64, b: f64, n: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    (0..n).map(|j| (la + (lb - la) * j as f64 / (n - 1) as f64).exp()).collect()
}

/// Log-log slope fitted over the outermost decade at one end of a table.
fn decade_slope(r: &[f64], d: &[f64], high: bool) -> f64 {
    let n = r.len();
    let i = if high { n - 1 } else { 0 };
    let mut j = i;
    loop {
        let next = if high { j.checked_sub(1) } else { Some(j + 1).filter(|&x| x < n) };
        let Some(next) = next else { break };
        j = next;
        let ratio = if high { r[i] / r[j] } else { r[j] / r[i] };
        if ratio >= 10.0 {
            break;
        }
    }
    if j == i || d[j] <= 0.0 || d[i] <= 0.0 {
        return 0.0;
    }
    (d[j] / d[i]).ln() / (r[j] / r[i]).ln()
}

fn tabulated_density(r: &[f64], d: &[f64], low: bool, high: bool, x: f64) -> f64 {
    let n = r.len();
    if x < r[0] {
        return if low && d[0] > 0.0 { d[0] * (x / r[0]).powf(decade_slope(r, d, false)) } else { 0.0 };
    }
    if x > r[n - 1] {
        return if high && d[n - 1] > 0.0 { d[n - 1] * (x / r[n - 1]).powf(decade_slope(r, d, true)) } else { 0.0 };
    }
    let j = (r.partition_point(|&g| g <= x)).clamp(1, n - 1) - 1;
    let t = (x / r[j]).ln() / (r[j + 1] / r[j]).ln();
    let (d0, d1) = (d[j], d[j + 1]);
    if d0 > 0.0 && d1 > 0.0 {
        (d0.ln() * (1.0 - t) + d1.ln() * t).exp()
    } else {
        d0 * (1.0 - t) + d1 * t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ell::EllTerm;
    use crate::special::EULER_GAMMA;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn close(a: Complex64, b: Complex64, eps: f64) -> bool {
        (a - b).norm() <= eps * (1.0 + b.norm())
    }

    #[test]
    fn moments_match_closed_forms() {
        let t = tol();
        let p = RadialMeasure::power_law(1.0, 1.5);
        assert_eq!(p.moment(1.0, Region::Tail, &t).unwrap(), ExtReal::Finite(2.0));
        assert_eq!(p.moment(1.5, Region::Tail, &t).unwrap(), ExtReal::Infinite);
        assert_eq!(RadialMeasure::dirac(2.0, 3.0).moment(2.0, Region::Full, &t).unwrap(), ExtReal::Finite(12.0));
        assert_eq!(RadialMeasure::power_law(1.0, 1.0).log_moment(1, &t).unwrap(), ExtReal::Finite(1.0));
        assert_eq!(RadialMeasure::dirac(1.0, 5.0).log_moment(3, &t).unwrap(), ExtReal::Finite(0.0));
        assert_eq!(RadialMeasure::power_law(2.0, 0.5).log_moment(2, &t).unwrap(), ExtReal::Finite(32.0));
    }

    #[test]
    fn closed_moments_agree_with_quadrature() {
        let t = tol();
        // the same power law read as a K-class density goes through quadrature
        let (c, beta) = (1.7, 0.8);
        let p = RadialMeasure::power_law(c, beta);
        let k = RadialMeasure::KClass {
            alpha: 0.0,
            ell: EllFunction::Composite {
                terms: vec![EllTerm { coef: 1.0, ell: EllFunction::PowerTail { c, p: beta } }],
            },
        };
        for (delta, kk) in [(0.0, 1u32), (0.3, 2), (-1.0, 0), (0.5, 3)] {
            let a = p.tail_moment(delta, kk, &t).unwrap().as_f64();
            let b = k.tail_moment(delta, kk, &t).unwrap().as_f64();
            assert!((a - b).abs() < 1e-9 * a.max(1.0), "{delta} {kk}: {a} vs {b}");
        }
        let a = p.near_zero_moment(1.5, &t).unwrap().as_f64();
        let b = k.near_zero_moment(1.5, &t).unwrap().as_f64();
        assert!((a - b).abs() < 1e-9 * a);
    }

    #[test]
    fn annulus_masses() {
        let t = tol();
        let d = RadialMeasure::dirac(1.0, 1.0);
        assert_eq!(d.mass_between(0.5, 2.0, &t).unwrap(), ExtReal::Finite(1.0));
        assert_eq!(d.mass_between(1.0, 2.0, &t).unwrap(), ExtReal::Finite(0.0));
        let p = RadialMeasure::power_law(1.0, 1.0);
        assert!((p.mass_between(1.0, 2.0, &t).unwrap().as_f64() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn integrability_verdicts() {
        assert!(RadialMeasure::power_law(1.0, 0.5).issues().is_empty());
        let bad = RadialMeasure::power_law(1.0, 2.5).issues();
        assert!(bad[0].contains("diverges near 0"), "{bad:?}");
        assert!(!RadialMeasure::power_law(1.0, -0.5).issues().is_empty());
        let zero = RadialMeasure::KClass { alpha: 0.0, ell: EllFunction::PowerTail { c: 0.0, p: 1.0 } };
        assert!(zero.issues().iter().any(|s| s.contains("zero measure")));
    }

    #[test]
    fn power_law_exponent_closed_vs_numeric() {
        let t = tol();
        for &beta in &[0.3, 0.5, 1.0, 1.2, 1.5, 1.9] {
            let m = RadialMeasure::power_law(1.3, beta);
            for &u in &[0.1, 1.0, 3.7] {
                let a = if beta == 1.0 {
                    // the closed form for beta = 1
                    let c = 1.3;
                    Complex64::new(-c * FRAC_PI_2 * u, c * (-u * u.ln() + (1.0 - EULER_GAMMA) * u))
                } else {
                    m.levy_exponent(u, &t).unwrap()
                };
                let b = m.levy_exponent_numeric(u, &t).unwrap();
                assert!(close(a, b, 1e-9), "beta {beta} u {u}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn tilted_exponent_closed_vs_numeric() {
        let t = tol();
        // 0.97 and 0.999 sit next to the barely integrable r^{-1} of the compensator
        for &beta in &[-0.7, 0.0, 0.5, 0.97, 0.999, 1.0, 1.5] {
            let m = RadialMeasure::tilted(0.8, beta, 1.7);
            for &u in &[0.2, 1.0, 5.0] {
                let a = m.levy_exponent(u, &t).unwrap();
                let b = m.levy_exponent_numeric(u, &t).unwrap();
                assert!(close(a, b, 1e-9), "beta {beta} u {u}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn dirac_exponent() {
        let v = RadialMeasure::dirac(1.0, 1.0).levy_exponent(1.0, &tol()).unwrap();
        let want = Complex64::new(1f64.cos() - 1.0, 1f64.sin() - 0.5);
        assert!((v - want).norm() < 1e-15);
        // reflection gives the conjugate
        let w = RadialMeasure::dirac(1.0, 1.0).levy_exponent(-1.0, &tol()).unwrap();
        assert!((w - want.conj()).norm() < 1e-15);
    }

    #[test]
    fn step_density_exponent_is_a_finite_sum() {
        // l = 1 on (0,1): density r^{-1} on (0,1) at alpha = 0
        let m = RadialMeasure::KClass {
            alpha: 0.0,
            ell: EllFunction::StepDown { breakpoints: vec![1.0], levels: vec![1.0, 0.0] },
        };
        let u = 2.0;
        let v = m.levy_exponent(u, &tol()).unwrap();
        // int_0^1 (cos(ur)-1)/r dr = Ci(u) - gamma - ln u, computed here by a plain sum
        let n = 200_000;
        let h = 1.0 / n as f64;
        let mut re = 0.0;
        let mut im = 0.0;
        for j in 0..n {
            let r = (j as f64 + 0.5) * h;
            re += ((u * r).cos() - 1.0) / r * h;
            im += ((u * r).sin() - u * r / (1.0 + r * r)) / r * h;
        }
        assert!((v.re - re).abs() < 1e-8 && (v.im - im).abs() < 1e-8, "{v} vs {re} {im}");
    }

    #[test]
    fn json_round_trip() {
        let m: RadialMeasure =
            serde_json::from_str(r#"{"kind":"kclass","alpha":0.5,"ell":{"kind":"power_tail","c":1.0,"p":1.0}}"#)
                .unwrap();
        let back: RadialMeasure = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(m, back);
        let t: RadialMeasure = serde_json::from_str(r#"{"kind":"tilted","c":1.0,"beta":0.5,"theta":2.0}"#).unwrap();
        assert_eq!(t, RadialMeasure::tilted(1.0, 0.5, 2.0));
    }
}
