//! Lévy–Khintchine triplets `(A, nu, gamma)` with a finite polar Lévy measure.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::radial::{RadialMeasure, Region};
use crate::tol::Tolerances;

/// One spherical atom `w delta_xi` together with its radial component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphericalAtom {
    pub xi: Vec<f64>,
    pub w: f64,
    pub radial: RadialMeasure,
}

/// `nu(B) = sum_i w_i int 1_B(r xi_i) nu_i(dr)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PolarLevyMeasure {
    pub atoms: Vec<SphericalAtom>,
}

/// The triplet of an infinitely divisible law on `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevyTriplet {
    pub dim: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub gamma: Vec<f64>,
    #[serde(default, rename = "atoms")]
    pub levy: PolarLevyMeasure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub failures: Vec<String>,
}

impl LevyTriplet {
    pub fn new(a: Vec<Vec<f64>>, gamma: Vec<f64>, atoms: Vec<SphericalAtom>) -> Self {
        LevyTriplet { dim: gamma.len(), a, gamma, levy: PolarLevyMeasure { atoms } }
    }

    /// `N(0, A)` with no drift and no jumps.
    pub fn gaussian(a: Vec<Vec<f64>>) -> Self {
        let d = a.len();
        Self::new(a, vec![0.0; d], Vec::new())
    }

    /// The point mass at the origin in dimension `d`.
    pub fn delta0(d: usize) -> Self {
        Self::new(vec![vec![0.0; d]; d], vec![0.0; d], Vec::new())
    }

    /// One-dimensional triplet with atoms along `+1` and `-1`.
    pub fn one_dim(a: f64, gamma: f64, atoms: Vec<(f64, f64, RadialMeasure)>) -> Self {
        let atoms = atoms.into_iter().map(|(xi, w, radial)| SphericalAtom { xi: vec![xi], w, radial }).collect();
        Self::new(vec![vec![a]], vec![gamma], atoms)
    }

    pub fn atoms(&self) -> &[SphericalAtom] {
        &self.levy.atoms
    }

    pub fn a_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.a[i][j])
    }

    pub fn is_delta0(&self) -> bool {
        self.levy.atoms.is_empty() && self.gamma.iter().all(|g| *g == 0.0) && self.a.iter().flatten().all(|x| *x == 0.0)
    }

    /// Invariant under `x -> -x` up to the drift: every atom has a mirror
    /// image with the same weight and radial component.
    pub fn levy_is_symmetric(&self) -> bool {
        let atoms = &self.levy.atoms;
        let mut used = vec![false; atoms.len()];
        for i in 0..atoms.len() {
            if used[i] {
                continue;
            }
            let mirror = (0..atoms.len()).find(|&j| {
                !used[j]
                    && j != i
                    && atoms[j].w == atoms[i].w
                    && atoms[j].radial == atoms[i].radial
                    && atoms[j].xi.iter().zip(&atoms[i].xi).all(|(a, b)| *a == -*b)
            });
            match mirror {
                Some(j) => {
                    used[i] = true;
                    used[j] = true;
                }
                None => return false,
            }
        }
        true
    }

    /// Merges atoms that share both direction and radial component.
    pub fn canonicalize(&self) -> LevyTriplet {
        let mut merged: Vec<SphericalAtom> = Vec::new();
        for atom in &self.levy.atoms {
            match merged.iter_mut().find(|m| m.xi == atom.xi && m.radial == atom.radial) {
                Some(m) => m.w += atom.w,
                None => merged.push(atom.clone()),
            }
        }
        LevyTriplet { levy: PolarLevyMeasure { atoms: merged }, ..self.clone() }
    }

    /// `int x mu(dx) = gamma + sum_i w_i xi_i int r^3/(1+r^2) nu_i(dr)`, or
    /// `None` when the first moment is infinite.
    pub fn mean(&self, tol: &Tolerances) -> Result<Option<Vec<f64>>> {
        let mut m = self.gamma.clone();
        for atom in &self.levy.atoms {
            match atom.radial.mean_correction(tol)? {
                ExtReal::Finite(v) => {
                    for (mk, x) in m.iter_mut().zip(&atom.xi) {
                        *mk += atom.w * x * v;
                    }
                }
                ExtReal::Infinite => return Ok(None),
            }
        }
        Ok(Some(m))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidInput(format!("triplet JSON: {e}")))
    }
}

/// Checks the shape, the PSD property of `A` and the integrability of every radial component.
pub fn validate_triplet(t: &LevyTriplet, tol: &Tolerances) -> ValidationReport {
    let mut failures = Vec::new();
    let d = t.dim;
    if d == 0 {
        failures.push("dim must be positive".into());
    }
    if t.a.len() != d || t.a.iter().any(|row| row.len() != d) {
        failures.push(format!("A must be {d}x{d}"));
    }
    if t.gamma.len() != d {
        failures.push(format!("gamma must have length {d}"));
    }
    if failures.is_empty() {
        let scale = t.a.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
        let slack = tol.psd * scale.max(f64::MIN_POSITIVE);
        if t.a.iter().flatten().any(|x| !x.is_finite()) {
            failures.push("A has non-finite entries".into());
        } else {
            let mut symmetric = true;
            for i in 0..d {
                for j in 0..i {
                    if (t.a[i][j] - t.a[j][i]).abs() > slack {
                        symmetric = false;
                    }
                }
            }
            if !symmetric {
                failures.push("A is not symmetric".into());
            } else if d > 0 {
                let eig = SymmetricEigen::new(t.a_matrix());
                let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
                if min < -slack {
                    failures.push(format!("A is not positive semidefinite (eigenvalue {min:e})"));
                }
            }
        }
        if t.gamma.iter().any(|g| !g.is_finite()) {
            failures.push("gamma has non-finite entries".into());
        }
    }
    for (i, atom) in t.levy.atoms.iter().enumerate() {
        if atom.xi.len() != d {
            failures.push(format!("atom {i}: direction has length {} but dim is {d}", atom.xi.len()));
            continue;
        }
        let norm = atom.xi.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !((norm - 1.0).abs() <= tol.unit) {
            failures.push(format!("atom {i}: |xi| = {norm} is not 1"));
        }
        if !(atom.w.is_finite() && atom.w > 0.0) {
            failures.push(format!("atom {i}: weight must be positive"));
        }
        for issue in atom.radial.issues() {
            failures.push(format!("atom {i}: {issue}"));
        }
    }
    ValidationReport { valid: failures.is_empty(), failures }
}

/// `log mu^(z) = -<z,Az>/2 + i<gamma,z> + sum_i w_i int (e^{ir<z,xi>} - 1 - ir<z,xi>/(1+r^2)) nu_i(dr)`.
pub fn char_exponent(t: &LevyTriplet, z: &[f64], tol: &Tolerances) -> Result<Complex64> {
    if z.len() != t.dim {
        return Err(Error::InvalidInput(format!("z has length {} but dim is {}", z.len(), t.dim)));
    }
    let mut quad_form = 0.0;
    for i in 0..t.dim {
        for j in 0..t.dim {
            quad_form += z[i] * t.a[i][j] * z[j];
        }
    }
    let drift: f64 = t.gamma.iter().zip(z).map(|(g, x)| g * x).sum();
    let mut acc = Complex64::new(-0.5 * quad_form, drift);
    for atom in &t.levy.atoms {
        let u: f64 = atom.xi.iter().zip(z).map(|(a, b)| a * b).sum();
        if u != 0.0 {
            acc += atom.radial.levy_exponent(u, tol)? * atom.w;
        }
    }
    Ok(acc)
}

/// Moment `int r^delta` of one radial component over `region`.
pub fn radial_moment(r: &RadialMeasure, delta: f64, region: Region, tol: &Tolerances) -> Result<ExtReal> {
    r.moment(delta, region, tol)
}

/// `int_1^inf (log r)^k` of one radial component.
pub fn log_moment(r: &RadialMeasure, k: u32, tol: &Tolerances) -> Result<ExtReal> {
    if k == 0 {
        return Err(Error::InvalidInput("log_moment needs k >= 1".into()));
    }
    r.log_moment(k, tol)
}

/// `w_i nu_i((r_lo, r_hi])` for atom `index`.
pub fn measure_of_annulus(t: &LevyTriplet, index: usize, r_lo: f64, r_hi: f64, tol: &Tolerances) -> Result<ExtReal> {
    let atom = t.levy.atoms.get(index).ok_or_else(|| Error::InvalidInput(format!("no atom with index {index}")))?;
    if !(r_lo >= 0.0 && r_hi > r_lo) {
        return Err(Error::InvalidInput(format!("need 0 <= r_lo < r_hi, got ({r_lo}, {r_hi}]")));
    }
    Ok(atom.radial.mass_between(r_lo, r_hi, tol)?.scale(atom.w))
}
