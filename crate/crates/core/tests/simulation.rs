use kalpha::kernel::MappingParams;
use kalpha::phi::apply_phi;
use kalpha::radial::RadialMeasure;
use kalpha::sim::{
    axis_grid, compare_batch, empirical_cf, mc_compare, simulate_phi_integral, SimConfig, SmallJumpMode,
};
use kalpha::triplet::LevyTriplet;
use kalpha::Tolerances;

fn tol() -> Tolerances {
    Tolerances::default()
}

fn dirac() -> LevyTriplet {
    LevyTriplet::one_dim(0.0, 0.0, vec![(1.0, 1.0, RadialMeasure::dirac(1.0, 1.0))])
}

fn tilted() -> LevyTriplet {
    LevyTriplet::one_dim(0.3, 0.2, vec![(1.0, 1.0, RadialMeasure::tilted(1.0, 0.6, 1.5))])
}

#[test]
fn same_seed_same_batch() {
    let p = MappingParams::new(0.0, 0).unwrap();
    let cfg = SimConfig::new(2000, 11);
    let a = simulate_phi_integral(&tilted(), &p, &cfg, &tol()).unwrap();
    let b = simulate_phi_integral(&tilted(), &p, &cfg, &tol()).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    let c = simulate_phi_integral(&tilted(), &p, &SimConfig::new(2000, 12), &tol()).unwrap();
    assert_ne!(a.samples, c.samples);
    // a longer batch extends a shorter one: sample j depends only on (seed, j)
    let d = simulate_phi_integral(&tilted(), &p, &SimConfig::new(3000, 11), &tol()).unwrap();
    assert_eq!(a.samples[..], d.samples[..2000]);
}

#[test]
fn gaussian_variance_is_exact() {
    let n = 100_000;
    let a = vec![vec![1.5, 0.4], vec![0.4, 0.8]];
    let x = LevyTriplet::gaussian(a.clone());
    for (alpha, m) in [(0.0, 0), (-1.0, 1), (0.5, 2)] {
        let p = MappingParams::new(alpha, m).unwrap();
        let batch = simulate_phi_integral(&x, &p, &SimConfig::new(n, 5), &tol()).unwrap();
        let cov = batch.covariance();
        let k = (2.0 - alpha).powi(-(m as i32 + 1));
        // the covariance carries the truncated-horizon loss
        let kept = k - batch.provenance.truncated_square_integral;
        for i in 0..2 {
            for j in 0..2 {
                let want = kept * a[i][j];
                let se = (a[i][i] * a[j][j] * kept * kept * 2.0 / n as f64).sqrt();
                assert!((cov[i][j] - want).abs() <= 5.0 * se, "({alpha}, {m}) [{i}][{j}]: {} vs {want}", cov[i][j]);
            }
        }
    }
}

#[test]
fn halving_the_cutoff_agrees() {
    let p = MappingParams::new(0.0, 0).unwrap();
    let z = axis_grid(1, 21, 3.0);
    for cutoff in [0.02, 0.01] {
        for mode in [SmallJumpMode::Gaussian, SmallJumpMode::DriftOnly] {
            let cfg = SimConfig { jump_cutoff: cutoff, small_jump_mode: mode, ..SimConfig::new(40_000, 3) };
            let rep = mc_compare(&tilted(), &p, &cfg, &z, &tol()).unwrap();
            assert!(rep.pass, "cutoff {cutoff} {mode:?}: {} exceedances", rep.exceedances);
        }
    }
}

#[test]
fn doubling_the_horizon_agrees() {
    let p = MappingParams::new(0.0, 0).unwrap();
    let z = axis_grid(1, 21, 3.0);
    let n = 40_000;
    let run = |t_max: f64, seed: u64| {
        let cfg = SimConfig { t_max: Some(t_max), ..SimConfig::new(n, seed) };
        simulate_phi_integral(&dirac(), &p, &cfg, &tol()).unwrap()
    };
    let short = empirical_cf(&run(10.0, 1), &z).unwrap();
    let long = empirical_cf(&run(20.0, 2), &z).unwrap();
    for (a, b) in short.iter().zip(&long) {
        let se = (a.standard_error.powi(2) + b.standard_error.powi(2)).sqrt();
        assert!((a.value - b.value).norm() <= 4.0 * se, "z = {:?}", a.z);
    }
    let target = apply_phi(&dirac(), &p, &tol()).unwrap();
    assert!(compare_batch(&run(20.0, 2), &target, &z, &tol()).unwrap().pass);
}

#[test]
fn a_corrupted_target_is_caught() {
    let p = MappingParams::new(0.0, 0).unwrap();
    let x = LevyTriplet::gaussian(vec![vec![1.0]]);
    let z = axis_grid(1, 21, 3.0);
    let batch = simulate_phi_integral(&x, &p, &SimConfig::new(100_000, 7), &tol()).unwrap();
    let mut target = apply_phi(&x, &p, &tol()).unwrap();
    assert!(compare_batch(&batch, &target, &z, &tol()).unwrap().pass);
    target.a[0][0] *= 2.0;
    let rep = compare_batch(&batch, &target, &z, &tol()).unwrap();
    assert!(!rep.pass);
    assert!(rep.exceedances > rep.allowed);
}

#[test]
fn finite_horizon_is_not_truncated() {
    let p = MappingParams::new(-1.0, 0).unwrap();
    let batch = simulate_phi_integral(&dirac(), &p, &SimConfig::new(10, 0), &tol()).unwrap();
    assert!(!batch.provenance.horizon_truncated);
    assert!((batch.provenance.horizon - 1.0).abs() < 1e-12);
    assert_eq!(batch.provenance.truncated_square_integral, 0.0);
}
