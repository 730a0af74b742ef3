//! Monte Carlo realisations of `int_0^{eps(0)} eps*(t) dX_t` for a Lévy
//! process `X` with a given triplet at time one.
//!
//! The time axis is laid out as the image under `eps` of a geometric grid in
//! `u`, and `eps*` is frozen at the left end of each step. Jumps of the
//! integral below `jump_cutoff` are replaced by their variance (or by
//! nothing, in drift mode); since the integrand shrinks along the grid, the
//! cutoff on the jumps of `X` at step `k` is `jump_cutoff / eps*(t_k)`.
//!
//! Summing the Gaussian and drift contributions of every step gives one
//! Gaussian vector and one drift vector, and the jumps of all steps form a
//! single compound Poisson sum, so the cost of a sample is independent of
//! the number of steps.

mod cf;
mod jumps;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::kernel::{epsilon, epsilon_star, epsilon_zero, g_kernel, MappingParams};
use crate::phi::check_domain;
use crate::quad::{integrate_to_zero, Estimate, QuadOptions};
use crate::tol::Tolerances;
use crate::triplet::LevyTriplet;

pub use cf::{axis_grid, compare_batch, empirical_cf, mc_compare, CfPoint, McReport};
use jumps::JumpLaw;

/// Default number of time steps.
pub const DEFAULT_STEPS: usize = 16384;
/// Default lower end of the `u` grid; the horizon is cut where `eps*` reaches it.
pub const U_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SmallJumpMode {
    #[serde(rename = "drift", alias = "drift_only")]
    DriftOnly,
    #[serde(rename = "gaussian", alias = "gaussian_substitution")]
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_samples: usize,
    #[serde(default = "default_cutoff")]
    pub jump_cutoff: f64,
    /// Horizon for kernels with `eps(0) = inf`; by default `eps*(t_max) = U_FLOOR`.
    #[serde(default)]
    pub t_max: Option<f64>,
    #[serde(default, alias = "rng_seed")]
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub small_jump_mode: SmallJumpMode,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

fn default_cutoff() -> f64 {
    0.01
}

fn default_mode() -> SmallJumpMode {
    SmallJumpMode::Gaussian
}

fn default_steps() -> usize {
    DEFAULT_STEPS
}

impl SimConfig {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        SimConfig {
            n_samples,
            jump_cutoff: default_cutoff(),
            t_max: None,
            seed,
            small_jump_mode: default_mode(),
            steps: default_steps(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: SimConfig =
            serde_json::from_str(s).map_err(|e| Error::InvalidInput(format!("sim config JSON: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidInput("n_samples must be positive".into()));
        }
        if !(self.jump_cutoff.is_finite() && self.jump_cutoff > 0.0) {
            return Err(Error::InvalidCutoff(format!("jump_cutoff must be positive, got {}", self.jump_cutoff)));
        }
        if let Some(t) = self.t_max {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::InvalidInput(format!("t_max must be positive, got {t}")));
            }
        }
        if self.steps == 0 {
            return Err(Error::InvalidInput("steps must be positive".into()));
        }
        Ok(())
    }
}

/// Where a batch came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub triplet_sha256: String,
    pub params: Option<MappingParams>,
    pub seed: u64,
    pub config: SimConfig,
    /// End of the simulated time interval.
    pub horizon: f64,
    /// Whether the kernel's own horizon `eps(0)` was cut short.
    pub horizon_truncated: bool,
    pub u_min: f64,
    /// `int_{horizon}^{eps(0)} eps*(t)^2 dt`: the Gaussian exponent lost to
    /// truncation is this times `<z, A z>/2`.
    pub truncated_square_integral: f64,
    /// Mean number of simulated jumps per sample.
    pub expected_jumps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub dim: usize,
    pub samples: Vec<Vec<f64>>,
    pub provenance: Provenance,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// One row per sample after a `#` comment line holding the provenance.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        let prov = serde_json::to_string(&self.provenance).map_err(std::io::Error::other)?;
        writeln!(out, "# provenance: {prov}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record((0..self.dim).map(|i| format!("x{i}")))?;
        for s in &self.samples {
            w.write_record(s.iter().map(|v| format!("{v:e}")))?;
        }
        w.flush()
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is ASCII")
    }

    /// Sample covariance, normalised by `n - 1`.
    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let n = self.samples.len() as f64;
        let d = self.dim;
        let mut mean = vec![0.0; d];
        for s in &self.samples {
            for i in 0..d {
                mean[i] += s[i] / n;
            }
        }
        let mut c = vec![vec![0.0; d]; d];
        for s in &self.samples {
            for i in 0..d {
                for j in 0..d {
                    c[i][j] += (s[i] - mean[i]) * (s[j] - mean[j]) / (n - 1.0);
                }
            }
        }
        c
    }
}

/// SHA-256 of the triplet's JSON form, as lowercase hex.
pub fn triplet_sha256(t: &LevyTriplet) -> String {
    let bytes = serde_json::to_vec(t).expect("triplets serialise");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// The stream for one sample; streams never overlap, so output does not
/// depend on how samples are scheduled.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Left-endpoint integrand values and step lengths.
#[derive(Debug, Clone)]
struct TimeGrid {
    f: Vec<f64>,
    dt: Vec<f64>,
    horizon: f64,
    truncated: bool,
    u_min: f64,
}

fn time_grid(p: &MappingParams, cfg: &SimConfig, tol: &Tolerances) -> TimeGrid {
    let top = epsilon_zero(p);
    let mut u_min = U_FLOOR;
    if let Some(t) = cfg.t_max {
        let u = epsilon_star(p, t, tol.inv);
        if u > 0.0 {
            u_min = u;
        }
    }
    let n = cfg.steps;
    let ly = u_min.ln();
    let u: Vec<f64> = (0..=n).map(|k| (ly * k as f64 / n as f64).exp()).collect();
    let t: Vec<f64> = u.iter().map(|&x| epsilon(p, x)).collect();
    let mut f = u[..n].to_vec();
    let mut dt: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    let (horizon, truncated) = match top {
        ExtReal::Finite(e) => {
            // the last stretch up to eps(0), where eps* is below u_min
            f.push(u_min);
            dt.push((e - t[n]).max(0.0));
            (e, false)
        }
        ExtReal::Infinite => (t[n], true),
    };
    TimeGrid { f, dt, horizon, truncated, u_min }
}

/// `int_0^{u_min} u^2 g(u) du`, the part of `int eps*^2 dt` beyond the grid.
fn truncated_square_integral(p: &MappingParams, grid: &TimeGrid, tol: &Tolerances) -> Result<f64> {
    if !grid.truncated {
        return Ok(0.0);
    }
    let est: Estimate<f64> =
        integrate_to_zero(|u: f64| u * u * g_kernel(p, u), grid.u_min, &QuadOptions::from_tol(tol))?;
    Ok(est.value)
}

/// The discretised integral `sum_k f_k dX_k` reduced to a drift, one
/// Gaussian factor and a compound Poisson sum over (atom, step) cells.
#[derive(Debug, Clone)]
struct Scheme {
    dim: usize,
    drift: Vec<f64>,
    /// Square root of the Gaussian covariance, column-major.
    root: DMatrix<f64>,
    gaussian: bool,
    total_rate: f64,
    /// Cumulative rates of the cells that carry jumps.
    cum: Vec<f64>,
    cells: Vec<Cell>,
    laws: Vec<JumpLaw>,
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    atom: usize,
    /// Multiplier on the jump of `X`, i.e. the integrand value.
    f: f64,
    /// Tail mass above this cell's cutoff, for the inverse transform.
    tail: f64,
}

impl Scheme {
    fn new(t: &LevyTriplet, f: &[f64], dt: &[f64], cfg: &SimConfig, tol: &Tolerances) -> Result<Self> {
        let d = t.dim;
        let mut drift = vec![0.0; d];
        let mut cov = DMatrix::<f64>::zeros(d, d);
        let a = t.a_matrix();
        let (mut s1, mut s2) = (0.0, 0.0);
        for (&fk, &h) in f.iter().zip(dt) {
            s1 += fk * h;
            s2 += fk * fk * h;
        }
        for i in 0..d {
            drift[i] += s1 * t.gamma[i];
        }
        cov += &a * s2;

        // cutoffs on the jumps of X rise as the integrand falls
        let mut order: Vec<usize> = (0..f.len()).filter(|&k| f[k] > 0.0 && dt[k] > 0.0).collect();
        order.sort_by(|&x, &y| f[y].total_cmp(&f[x]));
        let cuts: Vec<f64> = order.iter().map(|&k| cfg.jump_cutoff / f[k]).collect();

        let mut cells = Vec::new();
        let mut cum = Vec::new();
        let mut total = 0.0;
        let mut laws = Vec::new();
        if !cuts.is_empty() {
            for (i, atom) in t.atoms().iter().enumerate() {
                let (sched, law) = jumps::build(&atom.radial, &cuts, tol)?;
                let xi = DVector::from_column_slice(&atom.xi);
                let (mut dsum, mut vsum) = (0.0, 0.0);
                for (j, &k) in order.iter().enumerate() {
                    let (fk, h) = (f[k], dt[k]);
                    dsum += fk * h * sched.drift[j];
                    vsum += fk * fk * h * sched.var[j];
                    let rate = atom.w * h * sched.tail[j];
                    if rate > 0.0 {
                        total += rate;
                        cum.push(total);
                        cells.push(Cell { atom: i, f: fk, tail: sched.tail[j] });
                    }
                }
                for r in 0..d {
                    drift[r] += atom.w * dsum * atom.xi[r];
                }
                if cfg.small_jump_mode == SmallJumpMode::Gaussian {
                    cov += &xi * xi.transpose() * (atom.w * vsum);
                }
                laws.push(law);
            }
        }
        let eig = SymmetricEigen::new(cov);
        let sq = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let root = &eig.eigenvectors * DMatrix::from_diagonal(&sq);
        let gaussian = sq.iter().any(|&x| x > 0.0);
        Ok(Scheme { dim: d, drift, root, gaussian, total_rate: total, cum, cells, laws })
    }

    fn sample<R: Rng + ?Sized>(&self, t: &LevyTriplet, rng: &mut R) -> Result<Vec<f64>> {
        let d = self.dim;
        let mut x = self.drift.clone();
        if self.gaussian {
            let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            for r in 0..d {
                for c in 0..d {
                    x[r] += self.root[(r, c)] * z[c];
                }
            }
        }
        if self.total_rate > 0.0 {
            let pois = Poisson::new(self.total_rate).map_err(|e| Error::InvalidInput(format!("jump rate: {e}")))?;
            let count = pois.sample(rng) as u64;
            for _ in 0..count {
                let v = rng.random::<f64>() * self.total_rate;
                let k = self.cum.partition_point(|&c| c <= v).min(self.cells.len() - 1);
                let cell = self.cells[k];
                let size = cell.f * self.laws[cell.atom].sample(cell.tail, rng);
                let xi = &t.atoms()[cell.atom].xi;
                for r in 0..d {
                    x[r] += size * xi[r];
                }
            }
        }
        Ok(x)
    }
}

/// One increment `X_{s+dt} - X_s` with jumps below `jump_cutoff` substituted.
pub fn sample_levy_increment<R: Rng + ?Sized>(
    t: &LevyTriplet,
    dt: f64,
    cfg: &SimConfig,
    rng: &mut R,
    tol: &Tolerances,
) -> Result<Vec<f64>> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    cfg.validate()?;
    Scheme::new(t, &[1.0], &[dt], cfg, tol)?.sample(t, rng)
}

/// Samples of `int_0^{eps(0)} eps*_{alpha,m}(t) dX_t`.
pub fn simulate_phi_integral(
    t: &LevyTriplet,
    p: &MappingParams,
    cfg: &SimConfig,
    tol: &Tolerances,
) -> Result<SampleBatch> {
    cfg.validate()?;
    let dom = check_domain(t, p, tol)?;
    if !dom.in_domain {
        return Err(Error::DomainViolation(dom.reason.unwrap_or_default()));
    }
    let grid = time_grid(p, cfg, tol);
    let provenance = |expected_jumps: f64, lost: f64| Provenance {
        triplet_sha256: triplet_sha256(t),
        params: Some(*p),
        seed: cfg.seed,
        config: cfg.clone(),
        horizon: grid.horizon,
        horizon_truncated: grid.truncated,
        u_min: grid.u_min,
        truncated_square_integral: lost,
        expected_jumps,
    };
    if t.is_delta0() {
        return Ok(SampleBatch {
            dim: t.dim,
            samples: vec![vec![0.0; t.dim]; cfg.n_samples],
            provenance: provenance(0.0, 0.0),
        });
    }
    let lost = truncated_square_integral(p, &grid, tol)?;
    let scheme = Scheme::new(t, &grid.f, &grid.dt, cfg, tol)?;
    let samples = draw(&scheme, t, cfg)?;
    Ok(SampleBatch { dim: t.dim, samples, provenance: provenance(scheme.total_rate, lost) })
}

#[cfg(feature = "parallel")]
fn draw(s: &Scheme, t: &LevyTriplet, cfg: &SimConfig) -> Result<Vec<Vec<f64>>> {
    use rayon::prelude::*;
    (0..cfg.n_samples as u64).into_par_iter().map(|j| s.sample(t, &mut sample_rng(cfg.seed, j))).collect()
}

#[cfg(not(feature = "parallel"))]
fn draw(s: &Scheme, t: &LevyTriplet, cfg: &SimConfig) -> Result<Vec<Vec<f64>>> {
    (0..cfg.n_samples as u64).map(|j| s.sample(t, &mut sample_rng(cfg.seed, j))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial::RadialMeasure;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn params(a: f64, m: u32) -> MappingParams {
        MappingParams::new(a, m).unwrap()
    }

    #[test]
    fn config_json_defaults_and_aliases() {
        let c = SimConfig::from_json(r#"{"n_samples": 10, "seed": 7}"#).unwrap();
        assert_eq!(c.small_jump_mode, SmallJumpMode::Gaussian);
        assert_eq!(c.steps, DEFAULT_STEPS);
        let c = SimConfig::from_json(r#"{"n_samples": 10, "rng_seed": 3, "small_jump_mode": "drift_only"}"#).unwrap();
        assert_eq!((c.seed, c.small_jump_mode), (3, SmallJumpMode::DriftOnly));
        assert!(SimConfig::from_json(r#"{"n_samples": 0}"#).is_err());
        assert!(matches!(SimConfig::from_json(r#"{"n_samples": 5, "jump_cutoff": -1}"#), Err(Error::InvalidCutoff(_))));
    }

    #[test]
    fn grid_covers_the_kernel() {
        let t = tol();
        let cfg = SimConfig::new(1, 0);
        // eps*_{-1}(t) = 1 - t on [0, 1]
        let g = time_grid(&params(-1.0, 0), &cfg, &t);
        assert!(!g.truncated);
        assert!((g.dt.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // int_0^inf e^{-2t} dt = 1/2, less the truncated part
        let g = time_grid(&params(0.0, 0), &cfg, &t);
        assert!(g.truncated);
        assert!((g.horizon - 1e6f64.ln()).abs() < 1e-9);
        let s2: f64 = g.f.iter().zip(&g.dt).map(|(f, h)| f * f * h).sum();
        let lost = truncated_square_integral(&params(0.0, 0), &g, &t).unwrap();
        assert!((lost - 0.5e-12).abs() < 1e-20);
        // left endpoints overshoot by about half a step in log u
        let step = 1e6f64.ln() / DEFAULT_STEPS as f64;
        assert!((s2 - 0.5).abs() < step, "{s2}");
    }

    #[test]
    fn delta0_gives_zeros() {
        let cfg = SimConfig::new(5, 1);
        let b = simulate_phi_integral(&LevyTriplet::delta0(2), &params(0.5, 1), &cfg, &tol()).unwrap();
        assert!(b.samples.iter().all(|s| s == &vec![0.0, 0.0]));
    }

    #[test]
    fn batches_are_reproducible() {
        let t = LevyTriplet::one_dim(0.5, 0.1, vec![(1.0, 1.0, RadialMeasure::tilted(1.0, 0.5, 1.0))]);
        let mut cfg = SimConfig::new(64, 11);
        cfg.steps = 256;
        let a = simulate_phi_integral(&t, &params(0.0, 0), &cfg, &tol()).unwrap();
        let b = simulate_phi_integral(&t, &params(0.0, 0), &cfg, &tol()).unwrap();
        assert_eq!(a, b);
        cfg.seed = 12;
        let c = simulate_phi_integral(&t, &params(0.0, 0), &cfg, &tol()).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn gaussian_integral_has_half_the_variance() {
        let t = LevyTriplet::gaussian(vec![vec![1.0]]);
        let n = 100_000;
        let b = simulate_phi_integral(&t, &params(0.0, 0), &SimConfig::new(n, 5), &tol()).unwrap();
        let v = b.covariance()[0][0];
        assert!((v - 0.5).abs() < 5.0 / (n as f64).sqrt() * 0.5, "{v}");
    }

    #[test]
    fn dirac_increment_counts_unit_jumps() {
        // gamma = 1/2 cancels the compensator of the unit jump, leaving a Poisson(1) count
        let t = LevyTriplet::one_dim(0.0, 0.5, vec![(1.0, 1.0, RadialMeasure::dirac(1.0, 1.0))]);
        let mut cfg = SimConfig::new(1, 0);
        cfg.jump_cutoff = 0.5;
        let mut rng = sample_rng(9, 0);
        let n = 20_000;
        let mut mean = 0.0;
        for _ in 0..n {
            let x = sample_levy_increment(&t, 1.0, &cfg, &mut rng, &tol()).unwrap()[0];
            assert!((x - x.round()).abs() < 1e-12, "{x}");
            mean += x / n as f64;
        }
        assert!((mean - 1.0).abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn csv_has_provenance_line() {
        let t = LevyTriplet::gaussian(vec![vec![1.0, 0.0], vec![0.0, 2.0]]);
        let mut cfg = SimConfig::new(3, 2);
        cfg.steps = 32;
        let b = simulate_phi_integral(&t, &params(-1.0, 0), &cfg, &tol()).unwrap();
        let csv = b.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("# provenance: {"));
        assert_eq!(lines[1], "x0,x1");
        assert_eq!(lines.len(), 5);
        assert_eq!(b.provenance.triplet_sha256.len(), 64);
    }
}
