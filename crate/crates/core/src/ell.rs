use serde::{Deserialize, Serialize};

use crate::special::factorial;

/// The function `l` in a radial density `r^{-alpha-1} l(r)`.
///
/// Members of `K_alpha` need `l` nonincreasing with limit zero at infinity.
/// Those properties are checked by the membership tests, not here: factor
/// laws are built from signed composites whose individual terms need not
/// be monotone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EllFunction {
    /// Right-continuous step function: `levels[0]` below `breakpoints[0]`,
    /// `levels[j]` on `[breakpoints[j-1], breakpoints[j])`, last level beyond.
    StepDown { breakpoints: Vec<f64>, levels: Vec<f64> },
    /// `c r^{-p}`.
    PowerTail { c: f64, p: f64 },
    /// `c r^{-p} e^{-theta r}`; `p` defaults to zero.
    ExpTail {
        c: f64,
        theta: f64,
        #[serde(default)]
        p: f64,
    },
    /// `base(r) (log(scale / r))^k` for `r < scale`, zero beyond.
    LogFactor {
        base: Box<EllFunction>,
        k: u32,
        #[serde(default = "one")]
        scale: f64,
    },
    /// Finite linear combination.
    Composite { terms: Vec<EllTerm> },
    /// Values on a nondecreasing grid. With `slopes` (the derivative in `r`)
    /// the interpolant is cubic Hermite in `log r`, on log values wherever the
    /// log-slope is steady; without, it is piecewise linear in log-log
    /// coordinates. A node may appear twice
    /// to carry one-sided slopes at a kink.
    Tabulated {
        r: Vec<f64>,
        values: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        slopes: Option<Vec<f64>>,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllTerm {
    pub coef: f64,
    pub ell: EllFunction,
}

/// Leading behaviour `r^{-exponent} (log)^{log_power}` near zero or at infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerAsym {
    pub exponent: f64,
    pub log_power: u32,
}

/// Behaviour of `l` as `r -> infinity`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EllTail {
    /// Identically zero from this point on.
    Compact(f64),
    /// Decays like `e^{-theta r}` (up to algebraic factors).
    Exponential(f64),
    /// Behaves like `r^{-exponent}` (up to logarithms).
    Power(PowerAsym),
}

impl EllFunction {
    pub fn eval(&self, r: f64) -> f64 {
        match self {
            EllFunction::StepDown { breakpoints, levels } => {
                let j = breakpoints.partition_point(|&b| b <= r);
                levels.get(j).copied().unwrap_or(0.0)
            }
            EllFunction::PowerTail { c, p } => c * r.powf(-p),
            EllFunction::ExpTail { c, theta, p } => c * r.powf(-p) * (-theta * r).exp(),
            EllFunction::LogFactor { base, k, scale } => {
                if r >= *scale {
                    0.0
                } else {
                    base.eval(r) * (scale / r).ln().powi(*k as i32)
                }
            }
            EllFunction::Composite { terms } => terms.iter().map(|t| t.coef * t.ell.eval(r)).sum(),
            EllFunction::Tabulated { r: grid, values, slopes } => tabulated_eval(grid, values, slopes.as_deref(), r),
        }
    }

    /// `l(r / c)` as a new function of `r`.
    pub fn dilate(&self, c: f64) -> EllFunction {
        match self {
            EllFunction::StepDown { breakpoints, levels } => EllFunction::StepDown {
                breakpoints: breakpoints.iter().map(|b| b * c).collect(),
                levels: levels.clone(),
            },
            EllFunction::PowerTail { c: k, p } => EllFunction::PowerTail { c: k * c.powf(*p), p: *p },
            EllFunction::ExpTail { c: k, theta, p } => {
                EllFunction::ExpTail { c: k * c.powf(*p), theta: theta / c, p: *p }
            }
            EllFunction::LogFactor { base, k, scale } => {
                EllFunction::LogFactor { base: Box::new(base.dilate(c)), k: *k, scale: scale * c }
            }
            EllFunction::Composite { terms } => EllFunction::Composite {
                terms: terms.iter().map(|t| EllTerm { coef: t.coef, ell: t.ell.dilate(c) }).collect(),
            },
            EllFunction::Tabulated { r, values, slopes } => EllFunction::Tabulated {
                r: r.iter().map(|x| x * c).collect(),
                values: values.clone(),
                slopes: slopes.as_ref().map(|s| s.iter().map(|d| d / c).collect()),
            },
        }
    }

    /// `k l(r)`.
    pub fn scaled(&self, k: f64) -> EllFunction {
        match self {
            EllFunction::PowerTail { c, p } => EllFunction::PowerTail { c: c * k, p: *p },
            EllFunction::ExpTail { c, theta, p } => EllFunction::ExpTail { c: c * k, theta: *theta, p: *p },
            _ => EllFunction::Composite { terms: vec![EllTerm { coef: k, ell: self.clone() }] },
        }
    }

    /// Flattens nested composites and merges power and exponential terms
    /// with equal exponents. Drops zero terms.
    pub fn simplify(&self) -> EllFunction {
        let mut flat: Vec<EllTerm> = Vec::new();
        fn push(out: &mut Vec<EllTerm>, coef: f64, ell: &EllFunction) {
            match ell {
                EllFunction::Composite { terms } => {
                    for t in terms {
                        push(out, coef * t.coef, &t.ell);
                    }
                }
                EllFunction::PowerTail { c, p } => {
                    out.push(EllTerm { coef: 1.0, ell: EllFunction::PowerTail { c: coef * c, p: *p } })
                }
                EllFunction::ExpTail { c, theta, p } => {
                    out.push(EllTerm { coef: 1.0, ell: EllFunction::ExpTail { c: coef * c, theta: *theta, p: *p } })
                }
                other => out.push(EllTerm { coef, ell: other.clone() }),
            }
        }
        push(&mut flat, 1.0, self);
        let mut merged: Vec<EllTerm> = Vec::new();
        for t in flat {
            let slot = merged.iter_mut().find(|m| match (&m.ell, &t.ell) {
                (EllFunction::PowerTail { p: a, .. }, EllFunction::PowerTail { p: b, .. }) => a == b,
                (EllFunction::ExpTail { theta: a, p: pa, .. }, EllFunction::ExpTail { theta: b, p: pb, .. }) => {
                    a == b && pa == pb
                }
                _ => false,
            });
            match (slot, &t.ell) {
                (Some(m), EllFunction::PowerTail { c, .. }) | (Some(m), EllFunction::ExpTail { c, .. }) => {
                    match &mut m.ell {
                        EllFunction::PowerTail { c: mc, .. } | EllFunction::ExpTail { c: mc, .. } => *mc += c,
                        _ => unreachable!(),
                    }
                }
                _ => merged.push(t),
            }
        }
        merged.retain(|t| {
            t.coef != 0.0
                && !matches!(t.ell, EllFunction::PowerTail { c, .. } | EllFunction::ExpTail { c, .. } if c == 0.0)
        });
        if merged.len() == 1 && merged[0].coef == 1.0 {
            return merged.pop().unwrap().ell;
        }
        EllFunction::Composite { terms: merged }
    }

    /// Asymptotics as `r -> 0`: `l(r) ~ r^{-exponent} (log 1/r)^{log_power}`.
    pub fn near_zero(&self) -> PowerAsym {
        let flat = PowerAsym { exponent: 0.0, log_power: 0 };
        match self {
            EllFunction::StepDown { .. } => flat,
            EllFunction::PowerTail { p, .. } | EllFunction::ExpTail { p, .. } => {
                PowerAsym { exponent: *p, log_power: 0 }
            }
            EllFunction::LogFactor { base, k, .. } => {
                let b = base.near_zero();
                PowerAsym { exponent: b.exponent, log_power: b.log_power + k }
            }
            EllFunction::Composite { terms } => terms
                .iter()
                .filter(|t| t.coef != 0.0)
                .map(|t| t.ell.near_zero())
                .fold(None, |acc: Option<PowerAsym>, a| match acc {
                    None => Some(a),
                    Some(b) => Some(worse_at_zero(a, b)),
                })
                .unwrap_or(flat),
            EllFunction::Tabulated { r, values, slopes } => {
                if values[0] <= 0.0 {
                    flat
                } else {
                    PowerAsym { exponent: -edge_slope(r, values, slopes.as_deref(), false), log_power: 0 }
                }
            }
        }
    }

    /// Asymptotics as `r -> infinity`.
    pub fn tail(&self) -> EllTail {
        match self {
            EllFunction::StepDown { breakpoints, levels } => {
                if levels.last().copied().unwrap_or(0.0) == 0.0 {
                    // first breakpoint from which every level vanishes
                    let mut end = 0.0;
                    for (j, &l) in levels.iter().enumerate().rev() {
                        if l != 0.0 {
                            end = breakpoints[j];
                            break;
                        }
                    }
                    EllTail::Compact(end)
                } else {
                    EllTail::Power(PowerAsym { exponent: 0.0, log_power: 0 })
                }
            }
            EllFunction::PowerTail { p, .. } => EllTail::Power(PowerAsym { exponent: *p, log_power: 0 }),
            EllFunction::ExpTail { theta, p, .. } => {
                if *theta > 0.0 {
                    EllTail::Exponential(*theta)
                } else {
                    EllTail::Power(PowerAsym { exponent: *p, log_power: 0 })
                }
            }
            EllFunction::LogFactor { base, k, scale } => {
                if scale.is_finite() {
                    match base.tail() {
                        EllTail::Compact(e) => EllTail::Compact(e.min(*scale)),
                        _ => EllTail::Compact(*scale),
                    }
                } else {
                    match base.tail() {
                        EllTail::Power(a) => {
                            EllTail::Power(PowerAsym { exponent: a.exponent, log_power: a.log_power + k })
                        }
                        other => other,
                    }
                }
            }
            EllFunction::Composite { terms } => terms
                .iter()
                .filter(|t| t.coef != 0.0)
                .map(|t| t.ell.tail())
                .fold(None, |acc: Option<EllTail>, t| match acc {
                    None => Some(t),
                    Some(a) => Some(slower_tail(a, t)),
                })
                .unwrap_or(EllTail::Compact(0.0)),
            EllFunction::Tabulated { r, values, slopes } => {
                let n = values.len();
                if values[n - 1] <= 0.0 {
                    let last = values.iter().rposition(|&v| v > 0.0).map(|j| r[(j + 1).min(n - 1)]).unwrap_or(r[0]);
                    EllTail::Compact(last)
                } else {
                    EllTail::Power(PowerAsym {
                        exponent: -edge_slope(r, values, slopes.as_deref(), true),
                        log_power: 0,
                    })
                }
            }
        }
    }

    /// Points where `l` may fail to be smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.collect_breaks(&mut out);
        out.retain(|b| b.is_finite() && *b > 0.0);
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    fn collect_breaks(&self, out: &mut Vec<f64>) {
        match self {
            EllFunction::StepDown { breakpoints, .. } => out.extend_from_slice(breakpoints),
            EllFunction::PowerTail { .. } | EllFunction::ExpTail { .. } => {}
            EllFunction::LogFactor { base, scale, .. } => {
                out.push(*scale);
                base.collect_breaks(out);
            }
            EllFunction::Composite { terms } => terms.iter().for_each(|t| t.ell.collect_breaks(out)),
            EllFunction::Tabulated { r, slopes, .. } => {
                if slopes.is_none() {
                    out.extend_from_slice(r);
                } else {
                    out.push(r[0]);
                    out.push(r[r.len() - 1]);
                }
            }
        }
    }

    /// A length scale at which `l` changes character, used to place grids.
    pub fn scale_hint(&self) -> f64 {
        match self {
            EllFunction::StepDown { breakpoints, .. } => geometric_mid(breakpoints),
            EllFunction::PowerTail { .. } => 1.0,
            EllFunction::ExpTail { theta, .. } => 1.0 / theta,
            EllFunction::LogFactor { base, scale, .. } => {
                if scale.is_finite() {
                    *scale
                } else {
                    base.scale_hint()
                }
            }
            EllFunction::Composite { terms } => {
                let v: Vec<f64> = terms.iter().map(|t| t.ell.scale_hint()).collect();
                geometric_mid(&v)
            }
            EllFunction::Tabulated { r, .. } => (r[0] * r[r.len() - 1]).sqrt(),
        }
    }

    /// Structural problems: malformed grids or parameters.
    pub fn structural_issues(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_issues(&mut out);
        out
    }

    fn collect_issues(&self, out: &mut Vec<String>) {
        match self {
            EllFunction::StepDown { breakpoints, levels } => {
                if levels.len() != breakpoints.len() + 1 {
                    out.push(format!(
                        "step_down needs one more level than breakpoints (got {} and {})",
                        levels.len(),
                        breakpoints.len()
                    ));
                }
                if !strictly_increasing_positive(breakpoints) {
                    out.push("step_down breakpoints must be positive and strictly increasing".into());
                }
                if levels.iter().any(|l| !l.is_finite()) {
                    out.push("step_down levels must be finite".into());
                }
            }
            EllFunction::PowerTail { c, p } => {
                if !c.is_finite() || !p.is_finite() {
                    out.push("power_tail parameters must be finite".into());
                }
            }
            EllFunction::ExpTail { c, theta, p } => {
                if !c.is_finite() || !p.is_finite() || !(theta.is_finite() && *theta > 0.0) {
                    out.push("exp_tail needs finite c and p and theta > 0".into());
                }
            }
            EllFunction::LogFactor { base, scale, .. } => {
                if !(*scale > 0.0) {
                    out.push("log_factor scale must be positive".into());
                }
                base.collect_issues(out);
            }
            EllFunction::Composite { terms } => {
                for t in terms {
                    if !t.coef.is_finite() {
                        out.push("composite coefficients must be finite".into());
                    }
                    t.ell.collect_issues(out);
                }
            }
            EllFunction::Tabulated { r, values, slopes } => {
                if r.len() < 2 || r.len() != values.len() {
                    out.push("tabulated ell needs at least two points and matching lengths".into());
                } else if !nondecreasing_positive(r) {
                    out.push("tabulated ell grid must be positive and increasing (nodes may repeat once)".into());
                }
                if values.iter().any(|v| !v.is_finite()) {
                    out.push("tabulated ell values must be finite".into());
                }
                if let Some(s) = slopes {
                    if s.len() != r.len() || s.iter().any(|v| !v.is_finite()) {
                        out.push("tabulated ell slopes must be finite and match the grid".into());
                    }
                }
            }
        }
    }
}

fn one_if_empty(v: f64) -> f64 {
    if v.is_finite() && v > 0.0 {
        v
    } else {
        1.0
    }
}

fn geometric_mid(v: &[f64]) -> f64 {
    let pos: Vec<f64> = v.iter().copied().filter(|x| x.is_finite() && *x > 0.0).collect();
    if pos.is_empty() {
        return 1.0;
    }
    one_if_empty((pos.iter().map(|x| x.ln()).sum::<f64>() / pos.len() as f64).exp())
}

fn strictly_increasing_positive(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite() && *x > 0.0) && v.windows(2).all(|w| w[1] > w[0])
}

fn nondecreasing_positive(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite() && *x > 0.0)
        && v.windows(2).all(|w| w[1] >= w[0])
        && v.windows(3).all(|w| w[2] > w[0])
}

fn worse_at_zero(a: PowerAsym, b: PowerAsym) -> PowerAsym {
    if a.exponent > b.exponent || (a.exponent == b.exponent && a.log_power > b.log_power) {
        a
    } else {
        b
    }
}

fn slower_tail(a: EllTail, b: EllTail) -> EllTail {
    use EllTail::*;
    match (a, b) {
        (Compact(x), Compact(y)) => Compact(x.max(y)),
        (Compact(_), t) | (t, Compact(_)) => t,
        (Exponential(x), Exponential(y)) => Exponential(x.min(y)),
        (Exponential(_), p @ Power(_)) | (p @ Power(_), Exponential(_)) => p,
        (Power(x), Power(y)) => {
            if x.exponent < y.exponent || (x.exponent == y.exponent && x.log_power >= y.log_power) {
                Power(x)
            } else {
                Power(y)
            }
        }
    }
}

/// Log-log slope used for extrapolation at the low (`high = false`) or high end.
fn edge_slope(r: &[f64], v: &[f64], slopes: Option<&[f64]>, high: bool) -> f64 {
    let n = r.len();
    let (i, sign) = if high { (n - 1, -1isize) } else { (0, 1isize) };
    if v[i] <= 0.0 {
        return 0.0;
    }
    if let Some(s) = slopes {
        return r[i] * s[i] / v[i];
    }
    // fit over the outermost decade
    let mut j = i as isize;
    loop {
        let next = j + sign;
        if next < 0 || next >= n as isize {
            break;
        }
        j = next;
        let ratio = if high { r[i] / r[j as usize] } else { r[j as usize] / r[i] };
        if ratio >= 10.0 {
            break;
        }
    }
    let j = j as usize;
    if v[j] <= 0.0 || j == i {
        return 0.0;
    }
    (v[j] / v[i]).ln() / (r[j] / r[i]).ln()
}

/// Largest relative change of the log-slope across a cell that still uses
/// log-log interpolation.
const LOG_SLOPE_DRIFT: f64 = 0.015;

fn tabulated_eval(r: &[f64], v: &[f64], slopes: Option<&[f64]>, x: f64) -> f64 {
    let n = r.len();
    if x < r[0] {
        if v[0] <= 0.0 {
            return v[0];
        }
        let s = edge_slope(r, v, slopes, false);
        return v[0] * (x / r[0]).powf(s);
    }
    if x >= r[n - 1] {
        if v[n - 1] <= 0.0 {
            return 0.0;
        }
        let s = edge_slope(r, v, slopes, true);
        return v[n - 1] * (x / r[n - 1]).powf(s);
    }
    // the last node not above x; with a repeated node this picks the right-hand copy
    let j = (r.partition_point(|&g| g <= x) - 1).min(n - 2);
    let (x0, x1) = (r[j].ln(), r[j + 1].ln());
    let h = x1 - x0;
    let t = (x.ln() - x0) / h;
    let (v0, v1) = (v[j], v[j + 1]);
    match slopes {
        Some(s) => {
            let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
            let h10 = t * (1.0 - t) * (1.0 - t);
            let h01 = t * t * (3.0 - 2.0 * t);
            let h11 = t * t * (t - 1.0);
            let d0 = r[j] * s[j];
            let d1 = r[j + 1] * s[j + 1];
            if v0 > 0.0 && v1 > 0.0 {
                // log-log is exact for power laws, but near a zero of the
                // table the log-slope runs away and the value itself is smoother
                let (e0, e1) = (d0 / v0, d1 / v1);
                if (e0 - e1).abs() <= LOG_SLOPE_DRIFT * e0.abs().max(e1.abs()).max(1.0) {
                    return (h00 * v0.ln() + h10 * h * e0 + h01 * v1.ln() + h11 * h * e1).exp();
                }
            }
            h00 * v0 + h10 * h * d0 + h01 * v1 + h11 * h * d1
        }
        None => {
            if v0 > 0.0 && v1 > 0.0 {
                (v0.ln() * (1.0 - t) + v1.ln() * t).exp()
            } else {
                v0 * (1.0 - t) + v1 * t
            }
        }
    }
}

/// Builds a log-factor term `coef * base(r) (log(scale/r))^k / k!`.
pub fn log_factor_term(coef: f64, base: EllFunction, k: u32, scale: f64) -> EllTerm {
    EllTerm { coef: coef / factorial(k), ell: EllFunction::LogFactor { base: Box::new(base), k, scale } }
}
