//! Membership in the classes `K_alpha`, the decomposability factor of a
//! member, and grid diagnostics for convexity and m-times monotonicity.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::ell::{EllFunction, EllTail, PowerAsym};
use crate::error::{Error, Result};
use crate::quad::QuadOptions;
use crate::radial::{geometric, RadialMeasure};
use crate::tol::Tolerances;
use crate::triplet::{char_exponent, LevyTriplet, SphericalAtom};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Member,
    /// Passes every grid test, which is necessary but not sufficient.
    Consistent,
    NotMember,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomVerdict {
    pub index: usize,
    pub member: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub member: bool,
    pub verdict: Verdict,
    pub level_alpha: f64,
    pub atom_verdicts: Vec<AtomVerdict>,
    pub witnesses: BTreeMap<String, Value>,
}

impl MembershipReport {
    pub(crate) fn from_atoms(level_alpha: f64, atoms: Vec<AtomVerdict>, grid_based: bool) -> Self {
        let member = atoms.iter().all(|a| a.member);
        let verdict = match (member, grid_based) {
            (false, _) => Verdict::NotMember,
            (true, true) => Verdict::Consistent,
            (true, false) => Verdict::Member,
        };
        MembershipReport { member, verdict, level_alpha, atom_verdicts: atoms, witnesses: BTreeMap::new() }
    }

    pub(crate) fn reject(&mut self, key: &str, why: Value) {
        self.member = false;
        self.verdict = Verdict::NotMember;
        self.witnesses.insert(key.into(), why);
    }
}

/// `l(u) = u^{alpha+1} * density(u)` of an absolutely continuous radial
/// component, held as `u^{alpha - base} * ell(u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelEll {
    pub alpha: f64,
    pub base: f64,
    pub ell: EllFunction,
}

impl LevelEll {
    /// `None` for an atom.
    pub fn of(r: &RadialMeasure, alpha: f64) -> Option<Self> {
        let (base, ell) = match r {
            RadialMeasure::Dirac { .. } => return None,
            RadialMeasure::PowerLaw { c, beta } => (*beta, EllFunction::PowerTail { c: *c, p: 0.0 }),
            RadialMeasure::Tilted { c, beta, theta } => (*beta, EllFunction::ExpTail { c: *c, theta: *theta, p: 0.0 }),
            RadialMeasure::KClass { alpha: a, ell } => (*a, ell.clone()),
            RadialMeasure::Tabulated { r, density, extrapolate_low, extrapolate_high } => {
                // at level -1 the function is the density itself; zero pads stop extrapolation
                let mut grid = r.clone();
                let mut values = density.clone();
                if !extrapolate_low {
                    grid.insert(0, r[0]);
                    values.insert(0, 0.0);
                }
                if !extrapolate_high {
                    grid.push(r[r.len() - 1]);
                    values.push(0.0);
                }
                (-1.0, EllFunction::Tabulated { r: grid, values, slopes: None })
            }
        };
        Some(LevelEll { alpha, base, ell })
    }

    pub fn eval(&self, u: f64) -> f64 {
        let v = self.ell.eval(u);
        if v == 0.0 || self.alpha == self.base {
            v
        } else {
            u.powf(self.alpha - self.base) * v
        }
    }

    /// Sum of the absolute values of the terms: the scale for rounding slack.
    pub fn magnitude(&self, u: f64) -> f64 {
        let m = match &self.ell {
            EllFunction::Composite { terms } => terms.iter().map(|t| (t.coef * t.ell.eval(u)).abs()).sum(),
            e => e.eval(u).abs(),
        };
        m * u.powf(self.alpha - self.base)
    }

    /// `l(u) ~ u^{-exponent} (log 1/u)^k` as `u -> 0`.
    pub fn near_zero(&self) -> PowerAsym {
        let a = self.ell.near_zero();
        PowerAsym { exponent: a.exponent + self.base - self.alpha, log_power: a.log_power }
    }

    pub fn tail(&self) -> EllTail {
        match self.ell.tail() {
            EllTail::Power(a) => {
                EllTail::Power(PowerAsym { exponent: a.exponent + self.base - self.alpha, log_power: a.log_power })
            }
            other => other,
        }
    }

    /// The decomposability factor's density `u^{-alpha-1}(l(u) - l(u/c))`,
    /// expressed at the stored base level.
    pub fn factor_radial(&self, c: f64) -> RadialMeasure {
        let shrink = c.powf(self.base - self.alpha);
        let ell = EllFunction::Composite {
            terms: vec![
                crate::ell::EllTerm { coef: 1.0, ell: self.ell.clone() },
                crate::ell::EllTerm { coef: -shrink, ell: self.ell.dilate(c) },
            ],
        }
        .simplify();
        match ell {
            EllFunction::PowerTail { c, p: 0.0 } => RadialMeasure::PowerLaw { c, beta: self.base },
            EllFunction::ExpTail { c, theta, p: 0.0 } => RadialMeasure::Tilted { c, beta: self.base, theta },
            ell => RadialMeasure::KClass { alpha: self.base, ell },
        }
    }
}

const NOT_CONTINUOUS: &str = "radial measure not absolutely continuous";
const NO_VANISH: &str = "ℓ does not vanish at ∞";

/// Checks `l` nonincreasing and vanishing at infinity for one radial component.
fn k_alpha_atom(r: &RadialMeasure, alpha: f64, tol: &Tolerances) -> (bool, Option<String>, Value) {
    let Some(l) = LevelEll::of(r, alpha) else {
        return (false, Some(NOT_CONTINUOUS.into()), json!({ "reason": NOT_CONTINUOUS }));
    };
    match l.tail() {
        EllTail::Power(a) if a.exponent <= 0.0 => {
            return (false, Some(NO_VANISH.into()), json!({ "reason": NO_VANISH, "tail_exponent": -a.exponent }));
        }
        _ => {}
    }
    let z = l.near_zero();
    if z.exponent < 0.0 {
        let why = "ℓ increases near 0";
        return (false, Some(why.into()), json!({ "reason": why, "near_zero_exponent": -z.exponent }));
    }
    let grid = r.probe_grid(400);
    let slack = tol.mono.max(64.0 * f64::EPSILON);
    let vals: Vec<f64> = grid.iter().map(|&u| l.eval(u)).collect();
    for j in 0..grid.len() - 1 {
        let scale = l.magnitude(grid[j]).max(l.magnitude(grid[j + 1]));
        if vals[j + 1] > vals[j] + slack * scale {
            let why = format!("ℓ increases between r = {:e} and r = {:e}", grid[j], grid[j + 1]);
            return (
                false,
                Some(why.clone()),
                json!({ "reason": why, "r": [grid[j], grid[j + 1]], "l": [vals[j], vals[j + 1]] }),
            );
        }
    }
    (true, None, json!({ "grid_points": grid.len() }))
}

/// Whether every radial component has the form `r^{-alpha-1} l(r) dr` with
/// `l` nonincreasing and vanishing at infinity. A pure Gaussian is a member.
pub fn is_k_alpha(t: &LevyTriplet, alpha: f64, tol: &Tolerances) -> MembershipReport {
    let mut verdicts = Vec::new();
    let mut witnesses = BTreeMap::new();
    for (i, atom) in t.atoms().iter().enumerate() {
        let (member, reason, w) = k_alpha_atom(&atom.radial, alpha, tol);
        verdicts.push(AtomVerdict { index: i, member, reason });
        witnesses.insert(format!("atom_{i}"), w);
    }
    let mut rep = MembershipReport::from_atoms(alpha, verdicts, false);
    rep.witnesses = witnesses;
    rep
}

/// `mu = mu(c.)^{c^{-alpha}} * mu_c`, with `mu_c` infinitely divisible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionFactor {
    pub c: f64,
    pub alpha: f64,
    /// The drift correction folded into `mu_c`'s drift.
    pub a_c: Vec<f64>,
    pub mu_c: LevyTriplet,
    /// Set when `alpha >= 0`, outside the range of the original statement.
    pub extended: bool,
}

/// Builds the factor `mu_c` of a member of `K_alpha`.
pub fn factor_decomposition(t: &LevyTriplet, alpha: f64, c: f64, tol: &Tolerances) -> Result<DecompositionFactor> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::InvalidInput(format!("c must lie in (0, 1), got {c}")));
    }
    if !(alpha < 2.0) {
        return Err(Error::InvalidInput(format!("alpha must be below 2, got {alpha}")));
    }
    let rep = is_k_alpha(t, alpha, tol);
    if !rep.member {
        let why = rep
            .atom_verdicts
            .iter()
            .find_map(|a| a.reason.clone().map(|r| format!("atom {}: {r}", a.index)))
            .unwrap_or_default();
        return Err(Error::NotInClass(why));
    }
    let opts = QuadOptions::from_tol(tol);
    let d = t.dim;
    let mut a_c = vec![0.0; d];
    let mut atoms = Vec::with_capacity(t.atoms().len());
    for atom in t.atoms() {
        let l = LevelEll::of(&atom.radial, alpha).expect("members have densities");
        // int u^{-alpha}(1/(1+u^2) - 1/(1+u^2/c^2)) l(u/c) du, substituted u = c v
        let v: f64 = atom.radial.integrate(
            |v: f64| {
                let v2 = v * v;
                v * v2 * (1.0 - c * c) / ((1.0 + c * c * v2) * (1.0 + v2))
            },
            0.0,
            f64::INFINITY,
            &opts,
        )?;
        let v = v * c.powf(1.0 - alpha);
        for (ak, x) in a_c.iter_mut().zip(&atom.xi) {
            *ak += atom.w * x * v;
        }
        atoms.push(SphericalAtom { xi: atom.xi.clone(), w: atom.w, radial: l.factor_radial(c) });
    }
    let shrink_a = 1.0 - c.powf(2.0 - alpha);
    let shrink_g = 1.0 - c.powf(1.0 - alpha);
    let a = t.a.iter().map(|row| row.iter().map(|x| shrink_a * x).collect()).collect();
    let gamma = t.gamma.iter().zip(&a_c).map(|(g, ac)| shrink_g * g - ac).collect();
    Ok(DecompositionFactor { c, alpha, a_c, mu_c: LevyTriplet::new(a, gamma, atoms), extended: alpha >= 0.0 })
}

/// `max_z |Psi(z) - c^{-alpha} Psi(cz) - Psi_c(z)|` over the grid.
pub fn verify_decomposition(
    t: &LevyTriplet,
    factor: &DecompositionFactor,
    z_grid: &[Vec<f64>],
    tol: &Tolerances,
) -> Result<f64> {
    let c = factor.c;
    let k = c.powf(-factor.alpha);
    let mut worst = 0.0f64;
    for z in z_grid {
        let cz: Vec<f64> = z.iter().map(|x| c * x).collect();
        let lhs = char_exponent(t, z, tol)?;
        let rhs = char_exponent(t, &cz, tol)? * k + char_exponent(&factor.mu_c, z, tol)?;
        worst = worst.max((lhs - rhs).norm());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvexityVerdict {
    Convex,
    NonConvex,
    /// The measure has an atom, so `H` jumps.
    NonSmooth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityDiagnostic {
    pub x: Vec<f64>,
    pub h: Vec<f64>,
    pub second_differences: Vec<f64>,
    pub verdict: ConvexityVerdict,
}

/// Tabulates `H(x) = int_{e^{-x}}^inf r^alpha nu(dr)` on a uniform grid and
/// checks its second differences.
pub fn h_convexity_diagnostic(r: &RadialMeasure, alpha: f64, tol: &Tolerances) -> Result<ConvexityDiagnostic> {
    if !r.finite_tail(alpha) {
        return Err(Error::InvalidInput(format!("int r^{alpha} nu(dr) diverges at infinity")));
    }
    let s = r.scale_hint();
    let (lo, hi) = r.support();
    let u_max = if hi.is_finite() { (2.0 * hi).min(s * 1e4) } else { s * 1e4 };
    let u_min = if lo > 0.0 { (0.5 * lo).max(s * 1e-4) } else { s * 1e-4 };
    let n = 201;
    let u = geometric(u_max, u_min, n);
    let x: Vec<f64> = u.iter().map(|v| -v.ln()).collect();
    let opts = QuadOptions::from_tol(tol).with_abs(tol.quad * 1e-3);
    let top: f64 = r.integrate(|v: f64| v.powf(alpha), u[0], f64::INFINITY, &opts)?;
    let mut incs = Vec::with_capacity(n - 1);
    for j in 0..n - 1 {
        let inc: f64 = r.integrate(|v: f64| v.powf(alpha), u[j + 1], u[j], &opts)?;
        incs.push(inc);
    }
    let mut h = vec![top];
    for inc in &incs {
        h.push(h[h.len() - 1] + inc);
    }
    let slack = tol.mono.max(1e-10);
    let second: Vec<f64> = incs.windows(2).map(|w| w[1] - w[0]).collect();
    let convex =
        incs.windows(2).zip(&second).all(|(w, d)| *d >= -slack * (w[0].abs() + w[1].abs()) - f64::MIN_POSITIVE);
    let verdict = if !r.is_absolutely_continuous() {
        ConvexityVerdict::NonSmooth
    } else if convex {
        ConvexityVerdict::Convex
    } else {
        ConvexityVerdict::NonConvex
    };
    Ok(ConvexityDiagnostic { x, h, second_differences: second, verdict })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneCheck {
    pub consistent: bool,
    pub order: u32,
    pub grid_points: usize,
    pub grid: (f64, f64),
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// Grid test of m-times monotonicity: the divided differences of order
/// `k = 0..=m` must have sign `(-1)^k`, up to a slack relative to the
/// magnitudes that were differenced.
pub fn monotone_order_check(h: &EllFunction, m: u32, tol: &Tolerances) -> MonotoneCheck {
    let s = h.scale_hint();
    let (lo, hi) = match h.tail() {
        EllTail::Compact(e) if e > 0.0 => (e * 1e-6, e * 2.0),
        _ => (s * 1e-6, s * 1e6),
    };
    monotone_order_check_fn(|u| h.eval(u), m, lo, hi, 200, tol)
}

pub fn monotone_order_check_fn<F: Fn(f64) -> f64>(
    f: F,
    m: u32,
    lo: f64,
    hi: f64,
    n: usize,
    tol: &Tolerances,
) -> MonotoneCheck {
    let x = geometric(lo, hi, n);
    let mut d: Vec<f64> = x.iter().map(|&u| f(u)).collect();
    let mut mag: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let slack = tol.mono.max(64.0 * f64::EPSILON);
    let mut failure = None;
    'orders: for k in 0..=m as usize {
        if k > 0 {
            let len = d.len() - 1;
            let mut nd = Vec::with_capacity(len);
            let mut nm = Vec::with_capacity(len);
            for j in 0..len {
                let w = x[j + k] - x[j];
                nd.push((d[j + 1] - d[j]) / w);
                nm.push((mag[j + 1] + mag[j]) / w);
            }
            d = nd;
            mag = nm;
        }
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        for j in 0..d.len() {
            if sign * d[j] < -slack * mag[j] {
                failure = Some(format!("divided difference of order {k} has the wrong sign near u = {:e}", x[j]));
                break 'orders;
            }
        }
    }
    MonotoneCheck { consistent: failure.is_none(), order: m, grid_points: n, grid: (lo, hi), failure }
}
