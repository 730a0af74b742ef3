//! Browser bindings for the demo page. Every export takes and returns JSON
//! strings so the page needs no glue beyond `JSON.parse`.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use kalpha::kernel::{epsilon_star, epsilon_zero, MappingParams};
use kalpha::phi::{apply_phi, check_domain};
use kalpha::triplet::{char_exponent, validate_triplet, LevyTriplet};
use kalpha::{ExtReal, Tolerances};

fn params(alpha: f64, m: u32) -> Result<MappingParams, String> {
    MappingParams::new(alpha, m).map_err(|e| e.to_string())
}

fn parse(triplet: &str) -> Result<LevyTriplet, String> {
    let t = LevyTriplet::from_json(triplet).map_err(|e| e.to_string())?;
    let rep = validate_triplet(&t, &Tolerances::default());
    if !rep.valid {
        return Err(rep.failures.join("; "));
    }
    Ok(t)
}

/// `eps*(t)` on `n` points of `[0, eps(0))`, or of `[0, 10]` when `eps(0)` is infinite.
pub fn kernel_curve_value(alpha: f64, m: u32, n: usize) -> Result<Value, String> {
    let p = params(alpha, m)?;
    let n = n.clamp(2, 4000);
    let top = epsilon_zero(&p);
    let end = match top {
        ExtReal::Finite(e) => e,
        ExtReal::Infinite => 10.0,
    };
    let t: Vec<f64> = (0..n).map(|k| end * k as f64 / (n - 1) as f64).collect();
    let u: Vec<f64> = t.iter().map(|&t| epsilon_star(&p, t, 1e-12)).collect();
    Ok(json!({ "t": t, "u": u, "eps0": top.finite() }))
}

/// The mapped triplet, its domain report, and each atom's density before and after.
pub fn map_triplet_value(triplet: &str, alpha: f64, m: u32) -> Result<Value, String> {
    let tol = Tolerances::default();
    let t = parse(triplet)?;
    let p = params(alpha, m)?;
    let domain = check_domain(&t, &p, &tol).map_err(|e| e.to_string())?;
    if !domain.in_domain {
        return Err(domain.reason.unwrap_or_else(|| "outside the domain".into()));
    }
    let img = apply_phi(&t, &p, &tol).map_err(|e| e.to_string())?;
    let densities: Vec<Value> = t
        .atoms()
        .iter()
        .zip(img.atoms())
        .map(|(a, b)| {
            let s = a.radial.scale_hint();
            let u: Vec<f64> = (0..200).map(|k| s * 10f64.powf(-3.0 + 4.0 * k as f64 / 199.0)).collect();
            json!({
                "xi": a.xi,
                "u": u,
                "before": u.iter().map(|&x| a.radial.density(x)).collect::<Vec<_>>(),
                "after": u.iter().map(|&x| b.radial.density(x)).collect::<Vec<_>>(),
                "atom": a.radial.atom(),
            })
        })
        .collect();
    Ok(json!({ "triplet": img, "domain": domain, "densities": densities }))
}

/// Characteristic functions of the input and of its image along the first axis.
pub fn characteristic_functions_value(
    triplet: &str,
    alpha: f64,
    m: u32,
    z_max: f64,
    n: usize,
) -> Result<Value, String> {
    let tol = Tolerances::default();
    let t = parse(triplet)?;
    let img = apply_phi(&t, &params(alpha, m)?, &tol).map_err(|e| e.to_string())?;
    let n = n.clamp(2, 2000);
    let z: Vec<f64> = (0..n).map(|k| -z_max + 2.0 * z_max * k as f64 / (n - 1) as f64).collect();
    let curve = |x: &LevyTriplet| -> Result<Vec<[f64; 2]>, String> {
        z.iter()
            .map(|&s| {
                let mut v = vec![0.0; x.dim];
                v[0] = s;
                let c = char_exponent(x, &v, &tol).map_err(|e| e.to_string())?.exp();
                Ok([c.re, c.im])
            })
            .collect()
    };
    Ok(json!({ "z": z, "before": curve(&t)?, "after": curve(&img)? }))
}

fn export(v: Result<Value, String>) -> Result<String, JsError> {
    v.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn kernel_curve(alpha: f64, m: u32, n: usize) -> Result<String, JsError> {
    export(kernel_curve_value(alpha, m, n))
}

#[wasm_bindgen]
pub fn map_triplet(triplet: &str, alpha: f64, m: u32) -> Result<String, JsError> {
    export(map_triplet_value(triplet, alpha, m))
}

#[wasm_bindgen]
pub fn characteristic_functions(triplet: &str, alpha: f64, m: u32, z_max: f64, n: usize) -> Result<String, JsError> {
    export(characteristic_functions_value(triplet, alpha, m, z_max, n))
}
