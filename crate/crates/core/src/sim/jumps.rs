//! Per-atom bookkeeping for a family of jump cutoffs: tail masses, the
//! variance of the jumps below each cutoff, the compensator left in the
//! drift, and an inverse-transform sampler for the jumps above.

use rand::Rng;

use crate::error::{Error, Result};
use crate::quad::QuadOptions;
use crate::radial::{geometric, RadialMeasure, Tail};
use crate::tol::Tolerances;

/// Table nodes per decade beyond the largest cutoff.
const TAIL_PER_DECADE: f64 = 64.0;
/// The table stops once the remaining tail mass falls below this fraction.
const TAIL_FLOOR: f64 = 1e-14;

/// `N(c) = nu((c, inf))`, `V(c) = int_{r<=c} r^2 nu(dr)` and
/// `D(c) = int_{r<=c} r^3/(1+r^2) nu(dr) - int_{r>c} r/(1+r^2) nu(dr)` at each cutoff.
#[derive(Debug, Clone)]
pub(crate) struct CutoffSchedule {
    pub tail: Vec<f64>,
    pub var: Vec<f64>,
    pub drift: Vec<f64>,
}

/// Draws `r` from `nu` restricted to `(c, inf)` by inverting `N`.
#[derive(Debug, Clone)]
pub(crate) enum JumpLaw {
    Power {
        c: f64,
        beta: f64,
    },
    Point {
        r0: f64,
    },
    /// Decreasing tail masses on an increasing grid; `n[last]` is what lies beyond.
    Table {
        r: Vec<f64>,
        n: Vec<f64>,
    },
}

impl JumpLaw {
    /// A jump above the cutoff whose tail mass is `tail`.
    pub fn sample<R: Rng + ?Sized>(&self, tail: f64, rng: &mut R) -> f64 {
        // 1 - U lies in (0, 1], so the target never reaches zero
        let y = (1.0 - rng.random::<f64>()) * tail;
        match self {
            JumpLaw::Power { c, beta } => (beta * y / c).powf(-1.0 / beta),
            JumpLaw::Point { r0 } => *r0,
            JumpLaw::Table { r, n } => invert(r, n, y),
        }
    }
}

fn invert(r: &[f64], n: &[f64], y: f64) -> f64 {
    let last = r.len() - 1;
    // first node whose tail mass drops below y
    let k = n.partition_point(|&v| v >= y);
    if k == 0 {
        return r[0];
    }
    if k > last {
        return r[last];
    }
    let j = k - 1;
    let (n0, n1) = (n[j], n[j + 1]);
    if n1 > 0.0 {
        let t = (n0 / y).ln() / (n0 / n1).ln();
        r[j] * (r[j + 1] / r[j]).powf(t)
    } else {
        r[j] + (r[j + 1] - r[j]) * (n0 - y) / n0
    }
}

/// Schedule and sampler for one radial component at increasing cutoffs `cuts`.
pub(crate) fn build(r: &RadialMeasure, cuts: &[f64], tol: &Tolerances) -> Result<(CutoffSchedule, JumpLaw)> {
    if cuts.is_empty() || !cuts.iter().all(|c| c.is_finite() && *c > 0.0) {
        return Err(Error::InvalidCutoff("cutoffs must be positive and finite".into()));
    }
    if cuts.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidCutoff("cutoffs must be increasing".into()));
    }
    let opts = QuadOptions::from_tol(tol);
    let (_, s_hi) = r.support();
    let c_max = cuts[cuts.len() - 1];

    // tabulation grid: the cutoffs, then a coarser extension into the tail
    let mut grid = cuts.to_vec();
    let top = tail_top(r, c_max, tol)?;
    if top > c_max {
        let n = (((top / c_max).log10() * TAIL_PER_DECADE).ceil() as usize).max(1) + 1;
        grid.extend(geometric(c_max, top, n).into_iter().skip(1));
    }
    grid.dedup();
    let m = grid.len();

    let piece = |f: &dyn Fn(f64) -> f64, lo: f64, hi: f64| -> Result<f64> {
        if !(hi > lo) {
            return Ok(0.0);
        }
        r.integrate(f, lo, hi, &opts)
    };
    let beyond = grid[m - 1];
    let mut n = vec![0.0; m];
    let mut out = vec![0.0; m];
    n[m - 1] = if beyond < s_hi { piece(&|_| 1.0, beyond, f64::INFINITY)? } else { 0.0 };
    out[m - 1] = if beyond < s_hi { piece(&|x| x / (1.0 + x * x), beyond, f64::INFINITY)? } else { 0.0 };
    for j in (0..m - 1).rev() {
        let (a, b) = (grid[j], grid[j + 1]);
        n[j] = n[j + 1] + piece(&|_| 1.0, a, b)?;
        out[j] = out[j + 1] + piece(&|x| x / (1.0 + x * x), a, b)?;
    }
    let mut v = vec![0.0; m];
    let mut inn = vec![0.0; m];
    v[0] = piece(&|x| x * x, 0.0, grid[0])?;
    inn[0] = piece(&|x| x * x * x / (1.0 + x * x), 0.0, grid[0])?;
    for j in 1..m {
        let (a, b) = (grid[j - 1], grid[j]);
        v[j] = v[j - 1] + piece(&|x| x * x, a, b)?;
        inn[j] = inn[j - 1] + piece(&|x| x * x * x / (1.0 + x * x), a, b)?;
    }
    if !n.iter().chain(&v).chain(&inn).chain(&out).all(|x| x.is_finite()) {
        return Err(Error::InvalidCutoff(format!("tail tables are not finite from cutoff {}", cuts[0])));
    }

    let k = cuts.len();
    let sched = CutoffSchedule {
        tail: n[..k].to_vec(),
        var: v[..k].to_vec(),
        drift: (0..k).map(|j| inn[j] - out[j]).collect(),
    };
    let law = match r {
        RadialMeasure::PowerLaw { c, beta } => JumpLaw::Power { c: *c, beta: *beta },
        RadialMeasure::Dirac { r0, .. } => JumpLaw::Point { r0: *r0 },
        _ => JumpLaw::Table { r: grid, n },
    };
    Ok((sched, law))
}

/// Where the tail table can stop: the end of the support, or where the
/// remaining mass is negligible against the mass above the largest cutoff.
fn tail_top(r: &RadialMeasure, c_max: f64, tol: &Tolerances) -> Result<f64> {
    match r.tail() {
        Tail::Compact(e) => Ok(e.max(c_max)),
        _ if matches!(r, RadialMeasure::PowerLaw { .. }) => Ok(c_max),
        _ => {
            let base = r.mass_between(c_max, f64::INFINITY, tol)?.as_f64();
            if base == 0.0 {
                return Ok(c_max);
            }
            let mut top = c_max.max(r.scale_hint());
            for _ in 0..300 {
                top *= 10.0;
                if r.mass_between(top, f64::INFINITY, tol)?.as_f64() <= TAIL_FLOOR * base {
                    return Ok(top);
                }
            }
            Ok(top)
        }
    }
}
