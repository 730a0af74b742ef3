//! The mapping `Phi_alpha^{m+1}` as a transform of Lévy triplets: domain
//! gates, the Gaussian, Lévy-measure and drift components, and range checks.
//!
//! Radial images are returned in the class form `u^{-alpha-1} h(u) du`,
//! where `h(u) = (1/m!) int_u^inf (log(r/u))^m r^alpha nu(dr)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::ell::{EllFunction, EllTail, EllTerm};
use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::kernel::MappingParams;
use crate::membership::{is_k_alpha, monotone_order_check_fn, AtomVerdict, LevelEll, MembershipReport};
use crate::quad::{integrate, integrate_log, integrate_range, integrate_to_zero, Estimate, QuadOptions, Trap};
use crate::radial::{geometric, RadialMeasure, Tail};
use crate::special::factorial;
use crate::tol::Tolerances;
use crate::triplet::{LevyTriplet, SphericalAtom};

/// Grid density of tabulated images.
const PER_DECADE: f64 = 256.0;
/// Doublings allowed to dyadic limit schedules.
const MAX_DOUBLINGS: usize = 40;
/// Consecutive contracting steps needed to accept a dyadic limit.
const CAUCHY_RUN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequiredCondition {
    None,
    LogMoment,
    AlphaMoment,
    AlphaLogMoment,
    ZeroMean,
    Alpha1Limit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitMethod {
    /// Every contribution cancels against its mirror image.
    Symmetric,
    /// Each atom's integral converges absolutely and is evaluated in one piece.
    Absolute,
    /// Dyadic partial sums with a Cauchy test.
    Dyadic,
}

/// A limit over a dyadic schedule, with its evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitDiagnostic {
    pub method: LimitMethod,
    pub converged: bool,
    pub value: Option<Vec<f64>>,
    /// Partial sums after each doubling.
    pub partial_sums: Vec<Vec<f64>>,
    /// Norms of the successive increments.
    pub deltas: Vec<f64>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainReport {
    pub in_domain: bool,
    /// The condition that failed, or the last one checked when all pass.
    pub required_condition: RequiredCondition,
    pub checked: Vec<RequiredCondition>,
    /// Per-atom tail moments `int_1^inf r^delta (log r)^k nu_i(dr)`.
    pub tail_moments: Vec<ExtReal>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_limit: Option<LimitDiagnostic>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// The tail moment `(delta, k)` governing the domain at level `alpha`.
fn moment_condition(p: &MappingParams) -> Option<(f64, u32, RequiredCondition)> {
    let (a, m) = (p.alpha, p.m);
    if a < 0.0 {
        None
    } else if a == 0.0 {
        Some((0.0, m + 1, RequiredCondition::LogMoment))
    } else if m == 0 {
        Some((a, 0, RequiredCondition::AlphaMoment))
    } else {
        Some((a, m, RequiredCondition::AlphaLogMoment))
    }
}

/// Scale of the mean for the zero-mean test: `|gamma| + sum |w xi int r^3/(1+r^2) nu|`.
fn mean_scale(t: &LevyTriplet, tol: &Tolerances) -> Result<f64> {
    let mut s: f64 = t.gamma.iter().map(|g| g.abs()).sum();
    for atom in t.atoms() {
        if let ExtReal::Finite(v) = atom.radial.mean_correction(tol)? {
            s += atom.w * v.abs();
        }
    }
    Ok(s.max(1.0))
}

/// Whether `t` lies in the domain of `Phi_alpha^{m+1}`.
pub fn check_domain(t: &LevyTriplet, p: &MappingParams, tol: &Tolerances) -> Result<DomainReport> {
    let mut rep = DomainReport {
        in_domain: true,
        required_condition: RequiredCondition::None,
        checked: vec![RequiredCondition::None],
        tail_moments: Vec::new(),
        mean: None,
        tail_limit: None,
        reason: None,
    };
    let Some((delta, k, cond)) = moment_condition(p) else {
        return Ok(rep);
    };
    rep.checked = vec![cond];
    rep.required_condition = cond;
    for (i, atom) in t.atoms().iter().enumerate() {
        let v = atom.radial.tail_moment(delta, k, tol)?;
        if !v.is_finite() && rep.in_domain {
            rep.in_domain = false;
            rep.reason = Some(format!("atom {i}: int_1^inf r^{delta} (log r)^{k} nu(dr) = +inf"));
        }
        rep.tail_moments.push(v);
    }
    if !rep.in_domain || p.alpha < 1.0 {
        return Ok(rep);
    }
    rep.checked.push(RequiredCondition::ZeroMean);
    rep.required_condition = RequiredCondition::ZeroMean;
    let mean = t.mean(tol)?.expect("finite alpha-moment implies a finite mean");
    let bound = tol.limit * mean_scale(t, tol)?;
    let centred = mean.iter().all(|x| x.abs() <= bound);
    rep.mean = Some(mean.clone());
    if !centred {
        rep.in_domain = false;
        rep.reason = Some(format!("mean {mean:?} is not zero"));
        return Ok(rep);
    }
    if p.alpha == 1.0 {
        rep.checked.push(RequiredCondition::Alpha1Limit);
        rep.required_condition = RequiredCondition::Alpha1Limit;
        let diag = tail_limit(t, p.m, tol)?;
        if !diag.converged {
            rep.in_domain = false;
            rep.reason = Some("the alpha = 1 tail limit does not settle".into());
        }
        rep.tail_limit = Some(diag);
    }
    Ok(rep)
}

/// `int_{r>t} r (log(r/t))^m nu(dr)`.
fn tail_log_integral(r: &RadialMeasure, t: f64, m: u32, opts: &QuadOptions) -> Result<f64> {
    match r {
        RadialMeasure::PowerLaw { c, beta } => {
            Ok(c * t.powf(1.0 - beta) * factorial(m) / (beta - 1.0).powi(m as i32 + 1))
        }
        _ => r.integrate(|x: f64| x * (x / t).ln().powi(m as i32), t, f64::INFINITY, opts),
    }
}

/// Accepts at the first index closing a run of contracting small steps.
fn cauchy_accept(deltas: &[f64], tol: f64) -> Option<usize> {
    let mut run = 0;
    for k in 1..deltas.len() {
        let contracting = deltas[k] == 0.0 || deltas[k] < 0.75 * deltas[k - 1];
        if deltas[k] < tol && contracting {
            run += 1;
            if run >= CAUCHY_RUN {
                return Some(k);
            }
        } else {
            run = 0;
        }
    }
    None
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn accumulate(acc: &mut [f64], atom: &SphericalAtom, v: f64) {
    for (a, x) in acc.iter_mut().zip(&atom.xi) {
        *a += atom.w * x * v;
    }
}

/// `lim_T int_1^T t^{-1} sum_i w_i xi_i int_{r>t} r (log(r/t))^m nu_i(dr) dt`.
pub fn tail_limit(t: &LevyTriplet, m: u32, tol: &Tolerances) -> Result<LimitDiagnostic> {
    let d = t.dim;
    if t.levy_is_symmetric() {
        return Ok(LimitDiagnostic {
            method: LimitMethod::Symmetric,
            converged: true,
            value: Some(vec![0.0; d]),
            partial_sums: Vec::new(),
            deltas: Vec::new(),
            note: "symmetric: inner integral ≡ 0".into(),
        });
    }
    let opts = QuadOptions::from_tol(tol).with_abs(tol.quad * 1e-2);
    let mut partial = vec![0.0; d];
    let mut partial_sums = Vec::new();
    let mut deltas = Vec::new();
    let ln2 = std::f64::consts::LN_2;
    for k in 1..=MAX_DOUBLINGS {
        let mut inc = vec![0.0; d];
        for atom in t.atoms() {
            let trap = Trap::new();
            let est: Result<Estimate<f64>> = integrate(
                |s: f64| trap.catch(|| tail_log_integral(&atom.radial, s.exp(), m, &opts)),
                (k - 1) as f64 * ln2,
                k as f64 * ln2,
                &opts,
            );
            let v = trap.finish(est)?.value;
            accumulate(&mut inc, atom, v);
        }
        for (p, x) in partial.iter_mut().zip(&inc) {
            *p += x;
        }
        deltas.push(norm(&inc));
        partial_sums.push(partial.clone());
    }
    // per-atom absolute convergence: int_1^inf t^{-1} int_{r>t} ... = int_{r>1} r (log r)^{m+1} nu / (m+1)
    let mut absolute = Some(vec![0.0; d]);
    for atom in t.atoms() {
        match (atom.radial.tail_moment(1.0, m + 1, tol)?, absolute.as_mut()) {
            (ExtReal::Finite(v), Some(acc)) => accumulate(acc, atom, v / (m + 1) as f64),
            _ => absolute = None,
        }
    }
    if let Some(value) = absolute {
        return Ok(LimitDiagnostic {
            method: LimitMethod::Absolute,
            converged: true,
            value: Some(value),
            partial_sums,
            deltas,
            note: "every atom has a finite r (log r)^(m+1) tail moment".into(),
        });
    }
    let hit = cauchy_accept(&deltas, tol.limit);
    Ok(LimitDiagnostic {
        method: LimitMethod::Dyadic,
        converged: hit.is_some(),
        value: hit.map(|k| partial_sums[k].clone()),
        note: match hit {
            Some(k) => format!("accepted at T = 2^{}", k + 1),
            None => format!("no Cauchy run within {MAX_DOUBLINGS} doublings"),
        },
        partial_sums,
        deltas,
    })
}

/// `(2 - alpha)^{-(m+1)} A`.
pub fn map_gaussian(a: &[Vec<f64>], p: &MappingParams) -> Vec<Vec<f64>> {
    let k = (2.0 - p.alpha).powi(-(p.m as i32 + 1));
    a.iter().map(|row| row.iter().map(|x| k * x).collect()).collect()
}

/// One log-step `c (log(b/u))^k / k!` on `(0, b)`.
fn log_step(c: f64, b: f64, k: u32) -> EllFunction {
    if k == 0 {
        EllFunction::StepDown { breakpoints: vec![b], levels: vec![c, 0.0] }
    } else {
        EllFunction::LogFactor { base: Box::new(EllFunction::PowerTail { c: c / factorial(k), p: 0.0 }), k, scale: b }
    }
}

fn sum_of(mut terms: Vec<EllFunction>) -> EllFunction {
    if terms.len() == 1 {
        terms.pop().unwrap()
    } else {
        EllFunction::Composite { terms: terms.into_iter().map(|ell| EllTerm { coef: 1.0, ell }).collect() }
    }
}

/// Writes `l` as `sum c_j (log(b_j/u))^{k_j} / k_j!` on `(0, b_j)` when it has that form.
fn log_steps(ell: &EllFunction) -> Option<Vec<(f64, f64, u32)>> {
    match ell {
        EllFunction::StepDown { breakpoints, levels } => {
            if *levels.last()? != 0.0 {
                return None;
            }
            Some(
                breakpoints
                    .iter()
                    .enumerate()
                    .map(|(i, &b)| (levels[i] - levels[i + 1], b, 0))
                    .filter(|s| s.0 != 0.0)
                    .collect(),
            )
        }
        EllFunction::LogFactor { base, k, scale } => {
            let c = match base.as_ref() {
                EllFunction::PowerTail { c, p } if *p == 0.0 => *c,
                EllFunction::StepDown { breakpoints, levels } if breakpoints.iter().all(|b| b >= scale) => levels[0],
                _ => return None,
            };
            Some(vec![(c * factorial(*k), *scale, *k)])
        }
        EllFunction::Composite { terms } => {
            let mut out = Vec::new();
            for t in terms {
                out.extend(log_steps(&t.ell)?.into_iter().map(|(c, b, k)| (t.coef * c, b, k)));
            }
            Some(out)
        }
        _ => None,
    }
}

fn power_image(c: f64, beta: f64, p: &MappingParams) -> EllFunction {
    let gap = beta - p.alpha;
    EllFunction::PowerTail { c: c / gap.powi(p.m as i32 + 1), p: gap }
}

/// Images with exact closed forms.
fn closed_image(r: &RadialMeasure, p: &MappingParams) -> Option<EllFunction> {
    match r {
        RadialMeasure::PowerLaw { c, beta } => Some(power_image(*c, *beta, p)),
        RadialMeasure::Dirac { r0, mass } => Some(log_step(mass * r0.powf(p.alpha), *r0, p.m)),
        RadialMeasure::KClass { alpha, ell } => closed_kclass_image(*alpha, ell, p),
        _ => None,
    }
}

fn closed_kclass_image(base: f64, ell: &EllFunction, p: &MappingParams) -> Option<EllFunction> {
    match ell {
        EllFunction::PowerTail { c, p: q } => Some(power_image(*c, base + q, p)),
        EllFunction::Composite { terms } => {
            let mut out = Vec::with_capacity(terms.len());
            for t in terms {
                out.push(EllTerm { coef: t.coef, ell: closed_kclass_image(base, &t.ell, p)? });
            }
            Some(EllFunction::Composite { terms: out }.simplify())
        }
        // steps in (log)^k / k! at the mapping level raise k by m + 1
        _ if base == p.alpha => {
            let steps = log_steps(ell)?;
            Some(sum_of(steps.into_iter().map(|(c, b, k)| log_step(c, b, k + p.m + 1)).collect()))
        }
        _ => None,
    }
}

/// Whether the density jumps at `b`.
fn jumps(r: &RadialMeasure, b: f64) -> bool {
    let left = r.density(b * (1.0 - 1e-12));
    let right = r.density(b);
    (left - right).abs() > 1e-9 * (left.abs() + right.abs())
}

/// Builds `h` on a geometric grid from the cumulative moments
/// `M_k(u) = (1/k!) int_u^inf (log(r/u))^k r^alpha nu(dr)`, summed from the
/// top down, with exact slopes `M_0' = -u^alpha rho(u)` and `M_k' = -M_{k-1}/u`.
fn tabulated_image(r: &RadialMeasure, p: &MappingParams, tol: &Tolerances) -> Result<EllFunction> {
    let a = p.alpha;
    let m = p.m as usize;
    let s = r.scale_hint();
    let (lo, _) = r.support();
    let breaks = r.breakpoints();
    let u_lo = 1e-8 * if lo > 0.0 { lo.min(s) } else { s };
    let top_break = breaks.iter().copied().fold(s, f64::max);
    let (u_hi, compact) = match r.tail() {
        Tail::Compact(e) => (e, true),
        Tail::Exponential(theta) => ((600.0 / theta).max(10.0 * top_break), false),
        Tail::Power(_) => (1e10 * top_break, false),
    };
    let n = ((u_hi / u_lo).log10() * PER_DECADE).ceil() as usize + 1;
    let mut grid = geometric(u_lo, u_hi, n);
    grid[n - 1] = u_hi;
    for &b in &breaks {
        if b > u_lo && b < u_hi {
            // a node a rounding error away from a kink leaves a sliver cell
            grid.retain(|&g| (g / b - 1.0).abs() > 1e-9);
            grid.push(b);
            if m == 0 && jumps(r, b) {
                grid.push(b);
            }
        }
    }
    grid.sort_by(f64::total_cmp);
    let n = grid.len();
    let weight = |k: usize, u0: f64| move |x: f64| (x / u0).ln().powi(k as i32) / factorial(k as u32) * x.powf(a);
    let base = QuadOptions::from_tol(tol);
    let mut mk = vec![vec![0.0; m + 1]; n];
    if !compact {
        for k in 0..=m {
            mk[n - 1][k] = r.integrate(weight(k, u_hi), u_hi, f64::INFINITY, &base.with_abs(f64::MIN_POSITIVE))?;
        }
    }
    for j in (0..n - 1).rev() {
        let (u0, u1) = (grid[j], grid[j + 1]);
        let gap = (u1 / u0).ln();
        for k in 0..=m {
            let mut v = 0.0;
            for i in 0..=k {
                v += mk[j + 1][i] * gap.powi((k - i) as i32) / factorial((k - i) as u32);
            }
            if u1 > u0 {
                let opts = base.with_abs(1e-16 * mk[j + 1][k].abs() + f64::MIN_POSITIVE);
                v += r.integrate(weight(k, u0), u0, u1, &opts)?;
            }
            mk[j][k] = v;
        }
    }
    let slopes: Vec<f64> = (0..n)
        .map(|j| {
            let u = grid[j];
            if m > 0 {
                -mk[j][m - 1] / u
            } else {
                let left = j + 1 < n && grid[j + 1] == u || j + 1 == n;
                let x = if left { u * (1.0 - 1e-12) } else { u };
                -u.powf(a) * r.density(x)
            }
        })
        .collect();
    let values = mk.iter().map(|row| row[m]).collect();
    Ok(EllFunction::Tabulated { r: grid, values, slopes: Some(slopes) })
}

/// The image of one radial component, `u^{-alpha-1} h(u) du`.
pub fn map_radial(r: &RadialMeasure, p: &MappingParams, tol: &Tolerances) -> Result<RadialMeasure> {
    if let Some((delta, k, _)) = moment_condition(p) {
        if !r.tail_moment(delta, k, tol)?.is_finite() {
            return Err(Error::DomainViolation(format!("int_1^inf r^{delta} (log r)^{k} nu(dr) diverges")));
        }
    }
    let ell = match closed_image(r, p) {
        Some(ell) => ell,
        None => tabulated_image(r, p, tol)?,
    };
    Ok(RadialMeasure::KClass { alpha: p.alpha, ell })
}

/// `(1/m!) int_0^1 s^{-alpha} (log 1/s)^m (1 - s^2) int r^3/((1+r^2)(1+s^2 r^2)) nu(dr) ds`,
/// integrated over `s` first so the outer integral only sees the density of `nu`.
fn drift_weight_below_one(r: &RadialMeasure, p: &MappingParams, tol: &Tolerances) -> Result<f64> {
    let inner = QuadOptions::from_tol(tol).with_abs(f64::MIN_POSITIVE);
    let outer = QuadOptions::from_tol(tol);
    let mf = factorial(p.m);
    let trap = Trap::new();
    let est = r.integrate(
        |x: f64| {
            let x2 = x * x;
            let w: Result<Estimate<f64>> = integrate_to_zero(
                |s: f64| s.powf(-p.alpha) * (-s.ln()).powi(p.m as i32) * (1.0 - s * s) / (1.0 + s * s * x2),
                1.0,
                &inner,
            );
            x * x2 / (1.0 + x2) * trap.catch(|| w.map(|e| e.value)) / mf
        },
        0.0,
        f64::INFINITY,
        &outer,
    );
    trap.finish(est)
}

/// `(1/m!) int_lo^hi t^{2-alpha} (log 1/t)^m int r^3/(1+t^2 r^2) nu(dr) dt`, again with the
/// `t` integral innermost.
fn drift_weight_centred(r: &RadialMeasure, p: &MappingParams, lo: f64, hi: f64, tol: &Tolerances) -> Result<f64> {
    let inner = QuadOptions::from_tol(tol).with_abs(f64::MIN_POSITIVE);
    let outer = QuadOptions::from_tol(tol);
    let mf = factorial(p.m);
    let trap = Trap::new();
    let weight = |t: f64| t.powf(2.0 - p.alpha) * (-t.ln()).powi(p.m as i32);
    let est = r.integrate(
        |x: f64| {
            let x2 = x * x;
            let kernel = |t: f64| weight(t) / (1.0 + t * t * x2);
            let w: Result<Estimate<f64>> =
                if lo == 0.0 { integrate_to_zero(kernel, hi, &inner) } else { integrate_log(kernel, lo, hi, &inner) };
            x * x2 * trap.catch(|| w.map(|e| e.value)) / mf
        },
        0.0,
        f64::INFINITY,
        &outer,
    );
    trap.finish(est)
}

/// The drift of the image by direct integration against `nu`.
pub fn map_gamma_direct(t: &LevyTriplet, p: &MappingParams, tol: &Tolerances) -> Result<Vec<f64>> {
    let d = t.dim;
    let a = p.alpha;
    let symmetric = t.levy_is_symmetric();
    if a < 1.0 {
        let k = (1.0 - a).powi(-(p.m as i32 + 1));
        let mut g: Vec<f64> = t.gamma.iter().map(|x| k * x).collect();
        if !symmetric {
            for atom in t.atoms() {
                accumulate(&mut g, atom, drift_weight_below_one(&atom.radial, p, tol)?);
            }
        }
        return Ok(g);
    }
    if symmetric {
        return Ok(vec![0.0; d]);
    }
    let mut g = vec![0.0; d];
    if a > 1.0
        || t.atoms().iter().all(|x| x.radial.tail_moment(1.0, p.m + 1, tol).map(|v| v.is_finite()).unwrap_or(false))
    {
        for atom in t.atoms() {
            accumulate(&mut g, atom, -drift_weight_centred(&atom.radial, p, 0.0, 1.0, tol)?);
        }
        return Ok(g);
    }
    // conditionally convergent: dyadic lower limits eps = 2^{-k}
    let mut deltas = Vec::new();
    let mut sums = Vec::new();
    for k in 1..=MAX_DOUBLINGS {
        let (lo, hi) = (0.5f64.powi(k as i32), 0.5f64.powi(k as i32 - 1));
        let mut inc = vec![0.0; d];
        for atom in t.atoms() {
            accumulate(&mut inc, atom, -drift_weight_centred(&atom.radial, p, lo, hi, tol)?);
        }
        for (x, y) in g.iter_mut().zip(&inc) {
            *x += y;
        }
        deltas.push(norm(&inc));
        sums.push(g.clone());
    }
    match cauchy_accept(&deltas, tol.limit) {
        Some(k) => Ok(sums[k].clone()),
        None => Err(Error::LimitNonConvergence { steps: MAX_DOUBLINGS, context: "alpha = 1 drift limit".into() }),
    }
}

/// The drift of the image. Above `alpha = 1` it is read off the mapped
/// measure as `-sum_i w_i xi_i int r^3/(1+r^2) nu~_i(dr)`.
pub fn map_gamma(t: &LevyTriplet, p: &MappingParams, tol: &Tolerances) -> Result<Vec<f64>> {
    let dom = check_domain(t, p, tol)?;
    if !dom.in_domain {
        return Err(Error::DomainViolation(dom.reason.unwrap_or_default()));
    }
    if p.alpha > 1.0 {
        let images = t.atoms().iter().map(|a| map_radial(&a.radial, p, tol)).collect::<Result<Vec<_>>>()?;
        return gamma_from_images(t, &images, tol);
    }
    map_gamma_direct(t, p, tol)
}

fn gamma_from_images(t: &LevyTriplet, images: &[RadialMeasure], tol: &Tolerances) -> Result<Vec<f64>> {
    let mut g = vec![0.0; t.dim];
    for (atom, img) in t.atoms().iter().zip(images) {
        let v = img
            .mean_correction(tol)?
            .finite()
            .ok_or_else(|| Error::DomainViolation("mapped measure has no first moment".into()))?;
        accumulate(&mut g, atom, -v);
    }
    Ok(g)
}

/// The triplet of `Phi_alpha^{m+1}(mu)`.
pub fn apply_phi(t: &LevyTriplet, p: &MappingParams, tol: &Tolerances) -> Result<LevyTriplet> {
    if t.is_delta0() {
        return Ok(t.clone());
    }
    let dom = check_domain(t, p, tol)?;
    if !dom.in_domain {
        return Err(Error::DomainViolation(dom.reason.unwrap_or_default()));
    }
    let images = map_images(t, p, tol)?;
    let gamma = if p.alpha > 1.0 { gamma_from_images(t, &images, tol)? } else { map_gamma_direct(t, p, tol)? };
    let atoms =
        t.atoms().iter().zip(images).map(|(a, radial)| SphericalAtom { xi: a.xi.clone(), w: a.w, radial }).collect();
    Ok(LevyTriplet::new(map_gaussian(&t.a, p), gamma, atoms))
}

#[cfg(feature = "parallel")]
fn map_images(t: &LevyTriplet, p: &MappingParams, tol: &Tolerances) -> Result<Vec<RadialMeasure>> {
    use rayon::prelude::*;
    t.atoms().par_iter().map(|a| map_radial(&a.radial, p, tol)).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_images(t: &LevyTriplet, p: &MappingParams, tol: &Tolerances) -> Result<Vec<RadialMeasure>> {
    t.atoms().iter().map(|a| map_radial(&a.radial, p, tol)).collect()
}

/// `phi_m(x) = P_m(x) / (1 + x^2)^{m+2}` with `phi_0(x) = 2x/(1+x^2)^2` and
/// `phi_{k+1} = (x phi_k)'`.
#[derive(Debug, Clone)]
struct KernelPoly {
    coef: Vec<f64>,
    power: i32,
}

impl KernelPoly {
    fn new(m: u32) -> Self {
        let mut coef = vec![0.0, 2.0];
        let mut n = 2i32;
        for _ in 0..m {
            // (x P)'(1 + x^2) - 2 n x^2 P
            let xp_d: Vec<f64> = coef.iter().enumerate().map(|(i, c)| (i + 1) as f64 * c).collect();
            let mut next = vec![0.0; coef.len() + 2];
            for (i, c) in xp_d.iter().enumerate() {
                next[i] += c;
                next[i + 2] += c;
            }
            for (i, c) in coef.iter().enumerate() {
                next[i + 2] -= 2.0 * n as f64 * c;
            }
            coef = next;
            n += 1;
        }
        KernelPoly { coef, power: n }
    }

    fn eval(&self, x: f64) -> f64 {
        if x <= 1.0 {
            let p = self.coef.iter().rev().fold(0.0, |acc, c| acc * x + c);
            p / (1.0 + x * x).powi(self.power)
        } else {
            // divide through by x^{2n} to avoid overflow
            let y = 1.0 / x;
            let top = 2 * self.power;
            let p: f64 = self.coef.iter().enumerate().map(|(i, c)| c * y.powi(top - i as i32)).sum();
            p / (1.0 + y * y).powi(self.power)
        }
    }
}

/// `-(1/m!) lim_eps int_eps^1 (log 1/t)^m int h(r) phi_m(t r) dr dt` for one
/// atom, which equals `-(1/m!) lim int t (log 1/t)^m int r^3/(1+t^2r^2) nu(dr) dt`
/// for the preimage `nu` after integrating by parts in `r`.
fn alpha1_range_weight(h: &LevelEll, p: &MappingParams, tol: &Tolerances) -> Result<f64> {
    let kern = KernelPoly::new(p.m);
    // the kernel changes sign for m >= 1; a tighter inner target is roundoff-bound
    let inner = QuadOptions::from_tol(tol);
    let outer = QuadOptions::from_tol(tol);
    let mf = factorial(p.m);
    let breaks = h.ell.breakpoints();
    let trap = Trap::new();
    let f = |t: f64| {
        // below this the inner integrand peaks beyond f64 while the outer weight is ~ t^{1/2}
        if t < 1e-200 {
            return 0.0;
        }
        let v: f64 = trap.catch(|| {
            integrate_range(|r: f64| h.eval(r) * kern.eval(t * r), 0.0, f64::INFINITY, &breaks, &inner).map(|e| e.value)
        });
        (-t.ln()).powi(p.m as i32) * v / mf
    };
    let est: Result<Estimate<f64>> = integrate_to_zero(f, 1.0, &outer);
    Ok(-trap.finish(est)?.value)
}

/// Whether `t` lies in the range of `Phi_alpha^{m+1}`.
pub fn range_check(t: &LevyTriplet, p: &MappingParams, tol: &Tolerances) -> Result<MembershipReport> {
    let a = p.alpha;
    let mut rep = if p.m == 0 {
        is_k_alpha(t, a, tol)
    } else {
        let mut verdicts = Vec::new();
        let mut witnesses = BTreeMap::new();
        for (i, atom) in t.atoms().iter().enumerate() {
            let (member, reason) = match LevelEll::of(&atom.radial, a) {
                None => (false, Some("radial measure not absolutely continuous".to_string())),
                Some(h) => {
                    let vanishes = !matches!(h.tail(), EllTail::Power(q) if q.exponent <= 0.0);
                    let s = atom.radial.scale_hint();
                    let hi = match atom.radial.tail() {
                        Tail::Compact(e) => 2.0 * e,
                        _ => s * 1e6,
                    };
                    let check = monotone_order_check_fn(|u| h.eval(u), p.m, hi * 1e-12, hi, 200, tol);
                    witnesses.insert(format!("atom_{i}"), json!(check));
                    if !vanishes {
                        (false, Some("ℓ does not vanish at ∞".to_string()))
                    } else if !check.consistent {
                        (false, check.failure)
                    } else {
                        (true, None)
                    }
                }
            };
            verdicts.push(AtomVerdict { index: i, member, reason });
        }
        let mut rep = MembershipReport::from_atoms(a, verdicts, true);
        rep.witnesses = witnesses;
        rep
    };
    if !rep.member || a < 1.0 {
        return Ok(rep);
    }
    if t.atoms().is_empty() {
        // a Gaussian image carries no drift
        if t.gamma.iter().any(|g| *g != 0.0) {
            rep.reject("drift", json!("a Gaussian image is centred"));
        }
        return Ok(rep);
    }
    if a > 1.0 {
        let mean = t.mean(tol)?;
        let ok = match &mean {
            Some(m) => {
                let bound = tol.limit * mean_scale(t, tol)?;
                m.iter().all(|x| x.abs() <= bound)
            }
            None => false,
        };
        rep.witnesses.insert("mean".into(), json!(mean));
        if !ok {
            rep.reject("zero_mean", json!("the mean of a range element must vanish"));
        }
        return Ok(rep);
    }
    // alpha = 1: the drift must equal the limit built from h
    let mut want = vec![0.0; t.dim];
    let mut scale = 1.0f64;
    if !t.levy_is_symmetric() {
        for atom in t.atoms() {
            let h = LevelEll::of(&atom.radial, a).expect("checked above");
            let v = alpha1_range_weight(&h, p, tol)?;
            scale += atom.w * v.abs();
            accumulate(&mut want, atom, v);
        }
    }
    let bound = 1e-6 * (scale + norm(&t.gamma));
    let ok = want.iter().zip(&t.gamma).all(|(w, g)| (w - g).abs() <= bound);
    rep.witnesses.insert("alpha1_drift".into(), json!({ "limit": want, "gamma": t.gamma, "tolerance": bound }));
    if !ok {
        rep.reject("alpha1_limit", json!("the drift differs from the alpha = 1 limit"));
    }
    Ok(rep)
}
