//! `kalpha`: batch front end over JSON files.
//!
//! Exit codes: 0 success or pass, 1 analytic rejection, 2 I/O or parse
//! error, 3 numeric non-convergence.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use kalpha::kernel::MappingParams;
use kalpha::membership::{factor_decomposition, is_k_alpha, verify_decomposition};
use kalpha::phi::{apply_phi, check_domain, range_check};
use kalpha::sim::{axis_grid, mc_compare, simulate_phi_integral, SimConfig};
use kalpha::triplet::{validate_triplet, LevyTriplet};
use kalpha::{Error, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Command {
    Validate,
    Map,
    Domain,
    Membership,
    Range,
    Decompose,
    Verify,
    Simulate,
    Compare,
}

#[derive(Debug, Parser)]
#[command(name = "kalpha", version, about = "Lévy triplets, the K_alpha classes and their stochastic-integral maps")]
struct Cli {
    command: Command,
    /// Triplet JSON file, or a `map` report whose result holds one.
    #[arg(long)]
    triplet: Option<PathBuf>,
    /// Mapping parameters, inline JSON or a file: {"alpha": .., "m": ..}.
    #[arg(long)]
    params: Option<String>,
    /// Simulation config, inline JSON or a file.
    #[arg(long)]
    sim: Option<String>,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Class level for `membership`, `decompose` and `verify`.
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    /// Decomposition constant in (0, 1).
    #[arg(long, default_value_t = 0.5)]
    c: f64,
    /// Where `simulate` writes its samples as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    tol_quad: Option<f64>,
    #[arg(long)]
    tol_inv: Option<f64>,
    #[arg(long)]
    tol_limit: Option<f64>,
    /// Overrides the seed of the simulation config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug)]
enum Failure {
    Analytic(String),
    Io(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Analytic(_) => 1,
            Failure::Io(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Analytic(m) | Failure::Io(m) | Failure::Numeric(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_analytic() {
            Failure::Analytic(e.to_string())
        } else if e.is_numerical() {
            Failure::Numeric(e.to_string())
        } else {
            Failure::Io(e.to_string())
        }
    }
}

#[derive(Debug, Serialize)]
struct InputRef {
    source: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Report {
    tool: &'static str,
    version: &'static str,
    command: Command,
    timestamp: u64,
    inputs: BTreeMap<String, InputRef>,
    parameters: Value,
    tolerances: Tolerances,
    status: &'static str,
    exit_code: u8,
    #[serde(skip_serializing_if = "Value::is_null")]
    result: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Inputs read so far, with their hashes.
#[derive(Default)]
struct Inputs(BTreeMap<String, InputRef>);

impl Inputs {
    fn read_file(&mut self, key: &str, path: &Path) -> Result<String, Failure> {
        let text = fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        self.0.insert(key.into(), InputRef { source: path.display().to_string(), sha256: sha256_hex(text.as_bytes()) });
        Ok(text)
    }

    /// Inline JSON when the argument starts with `{`, a file path otherwise.
    fn read_inline(&mut self, key: &str, arg: &str) -> Result<String, Failure> {
        if arg.trim_start().starts_with('{') {
            self.0.insert(key.into(), InputRef { source: "inline".into(), sha256: sha256_hex(arg.as_bytes()) });
            Ok(arg.to_string())
        } else {
            self.read_file(key, Path::new(arg))
        }
    }

    fn triplet(&mut self, cli: &Cli) -> Result<LevyTriplet, Failure> {
        let path = cli.triplet.as_ref().ok_or_else(|| Failure::Io("--triplet is required".into()))?;
        let text = self.read_file("triplet", path)?;
        let v: Value = serde_json::from_str(&text).map_err(|e| Failure::Io(format!("triplet JSON: {e}")))?;
        // a `map` report carries its output triplet under result.triplet
        let v = match v.pointer("/result/triplet") {
            Some(t) => t.clone(),
            None => v,
        };
        serde_json::from_value(v).map_err(|e| Failure::Io(format!("triplet JSON: {e}")))
    }

    /// A triplet that also passes `validate_triplet`.
    fn valid_triplet(&mut self, cli: &Cli, tol: &Tolerances) -> Result<LevyTriplet, Failure> {
        let t = self.triplet(cli)?;
        let rep = validate_triplet(&t, tol);
        if !rep.valid {
            return Err(Failure::Io(format!("invalid triplet: {}", rep.failures.join("; "))));
        }
        Ok(t)
    }

    fn params(&mut self, cli: &Cli) -> Result<MappingParams, Failure> {
        let arg = cli.params.as_deref().ok_or_else(|| Failure::Io("--params is required".into()))?;
        let text = self.read_inline("params", arg)?;
        Ok(MappingParams::from_json(&text)?)
    }

    fn sim(&mut self, cli: &Cli) -> Result<SimConfig, Failure> {
        let arg = cli.sim.as_deref().ok_or_else(|| Failure::Io("--sim is required".into()))?;
        let text = self.read_inline("sim", arg)?;
        let mut cfg = SimConfig::from_json(&text)?;
        if let Some(seed) = cli.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

fn tolerances(cli: &Cli) -> Result<Tolerances, Failure> {
    let mut tol = Tolerances::default();
    for (name, value, slot) in [
        ("--tol-quad", cli.tol_quad, &mut tol.quad),
        ("--tol-inv", cli.tol_inv, &mut tol.inv),
        ("--tol-limit", cli.tol_limit, &mut tol.limit),
    ] {
        if let Some(v) = value {
            if !(1e-14..=1e-2).contains(&v) {
                return Err(Failure::Io(format!("{name} must lie in [1e-14, 1e-2], got {v}")));
            }
            *slot = v;
        }
    }
    Ok(tol)
}

fn alpha(cli: &Cli) -> Result<f64, Failure> {
    cli.alpha.ok_or_else(|| Failure::Io("--alpha is required".into()))
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("reports serialise")
}

/// `(passed, parameters, result)` for one command.
fn execute(cli: &Cli, tol: &Tolerances, inputs: &mut Inputs) -> Result<(bool, Value, Value), Failure> {
    match cli.command {
        Command::Validate => {
            let t = inputs.triplet(cli)?;
            let rep = validate_triplet(&t, tol);
            Ok((rep.valid, Value::Null, to_value(&rep)))
        }
        Command::Map => {
            let t = inputs.valid_triplet(cli, tol)?;
            let p = inputs.params(cli)?;
            let img = apply_phi(&t, &p, tol)?;
            Ok((true, to_value(&p), json!({ "triplet": img })))
        }
        Command::Domain => {
            let t = inputs.valid_triplet(cli, tol)?;
            let p = inputs.params(cli)?;
            let rep = check_domain(&t, &p, tol)?;
            Ok((rep.in_domain, to_value(&p), to_value(&rep)))
        }
        Command::Membership => {
            let t = inputs.valid_triplet(cli, tol)?;
            let a = alpha(cli)?;
            let rep = is_k_alpha(&t, a, tol);
            Ok((rep.member, json!({ "alpha": a }), to_value(&rep)))
        }
        Command::Range => {
            let t = inputs.valid_triplet(cli, tol)?;
            let p = inputs.params(cli)?;
            let rep = range_check(&t, &p, tol)?;
            Ok((rep.member, to_value(&p), to_value(&rep)))
        }
        Command::Decompose | Command::Verify => {
            let t = inputs.valid_triplet(cli, tol)?;
            let a = alpha(cli)?;
            let f = factor_decomposition(&t, a, cli.c, tol)?;
            let z = axis_grid(t.dim, 21, 5.0);
            let residual = verify_decomposition(&t, &f, &z, tol)?;
            let bound = 1e3 * tol.quad;
            let params = json!({ "alpha": a, "c": cli.c });
            if cli.command == Command::Decompose {
                Ok((true, params, json!({ "factor": f, "residual": residual })))
            } else {
                let pass = residual <= bound;
                Ok((pass, params, json!({ "residual": residual, "bound": bound, "pass": pass, "z_grid": z })))
            }
        }
        Command::Simulate => {
            let t = inputs.valid_triplet(cli, tol)?;
            let p = inputs.params(cli)?;
            let cfg = inputs.sim(cli)?;
            let batch = simulate_phi_integral(&t, &p, &cfg, tol)?;
            let n = batch.len() as f64;
            let mean: Vec<f64> = (0..batch.dim).map(|i| batch.samples.iter().map(|s| s[i]).sum::<f64>() / n).collect();
            if let Some(path) = &cli.csv {
                let file = fs::File::create(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
                batch
                    .write_csv(std::io::BufWriter::new(file))
                    .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
            }
            let result = json!({
                "n_samples": batch.len(),
                "mean": mean,
                "covariance": batch.covariance(),
                "provenance": batch.provenance,
                "csv": cli.csv.as_ref().map(|p| p.display().to_string()),
            });
            Ok((true, json!({ "mapping": p, "sim": cfg }), result))
        }
        Command::Compare => {
            let t = inputs.valid_triplet(cli, tol)?;
            let p = inputs.params(cli)?;
            let cfg = inputs.sim(cli)?;
            let rep = mc_compare(&t, &p, &cfg, &axis_grid(t.dim, 21, 3.0), tol)?;
            Ok((rep.pass, json!({ "mapping": p, "sim": cfg }), to_value(&rep)))
        }
    }
}

fn timestamp() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut inputs = Inputs::default();
    let outcome = tolerances(&cli).and_then(|tol| Ok((tol, execute(&cli, &tol, &mut inputs)?)));
    let (tol, code, status, parameters, result, error) = match outcome {
        Ok((tol, (true, params, result))) => (tol, 0, "ok", params, result, None),
        Ok((tol, (false, params, result))) => (tol, 1, "rejected", params, result, None),
        Err(f) => {
            eprintln!("kalpha: {}", f.message());
            let status = match f {
                Failure::Analytic(_) => "rejected",
                Failure::Io(_) => "input_error",
                Failure::Numeric(_) => "numeric_error",
            };
            (
                tolerances(&cli).unwrap_or_default(),
                f.code(),
                status,
                Value::Null,
                Value::Null,
                Some(f.message().to_string()),
            )
        }
    };
    if code == 1 && error.is_none() {
        eprintln!("kalpha: {:?} rejected the input", cli.command);
    }
    let report = Report {
        tool: "kalpha",
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command,
        timestamp: timestamp(),
        inputs: inputs.0,
        parameters,
        tolerances: tol,
        status,
        exit_code: code,
        result,
        error,
    };
    let mut text = serde_json::to_string_pretty(&report).expect("reports serialise");
    text.push('\n');
    let written = match &cli.out {
        Some(path) => fs::write(path, text).map_err(|e| format!("{}: {e}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    };
    if let Err(msg) = written {
        eprintln!("kalpha: {msg}");
        return ExitCode::from(2);
    }
    ExitCode::from(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_errors_map_to_exit_codes() {
        let code = |e: Error| Failure::from(e).code();
        assert_eq!(code(Error::NotInClass("x".into())), 1);
        assert_eq!(code(Error::DomainViolation("x".into())), 1);
        assert_eq!(code(Error::InvalidInput("x".into())), 2);
        assert_eq!(code(Error::InvalidCutoff("x".into())), 2);
        assert_eq!(code(Error::QuadratureNonConvergence { error: 1.0, tolerance: 0.1, context: "x".into() }), 3);
        assert_eq!(code(Error::LimitNonConvergence { steps: 40, context: "x".into() }), 3);
    }
}
