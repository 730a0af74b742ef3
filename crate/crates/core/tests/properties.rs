use kalpha::kernel::{epsilon, epsilon_star, epsilon_zero, g_kernel, MappingParams};
use kalpha::membership::{factor_decomposition, h_convexity_diagnostic, is_k_alpha, verify_decomposition, LevelEll};
use kalpha::phi::{apply_phi, map_radial};
use kalpha::quad::{integrate, integrate_log, Estimate, QuadOptions};
use kalpha::radial::{RadialMeasure, Region};
use kalpha::triplet::{char_exponent, measure_of_annulus, radial_moment, LevyTriplet};
use kalpha::{ExtReal, Tolerances};
use proptest::prelude::*;

fn tol() -> Tolerances {
    Tolerances::default()
}

fn radial() -> impl Strategy<Value = RadialMeasure> {
    prop_oneof![
        (0.2..3.0f64, 0.1..1.9f64).prop_map(|(c, b)| RadialMeasure::power_law(c, b)),
        (0.2..3.0f64, -0.5..1.9f64, 0.2..3.0f64).prop_map(|(c, b, t)| RadialMeasure::tilted(c, b, t)),
        (0.1..5.0f64, 0.1..3.0f64).prop_map(|(r, m)| RadialMeasure::dirac(r, m)),
    ]
}

/// Radials with a finite log-moment at infinity, the domain of every map with alpha <= 0.
fn tame_radial() -> impl Strategy<Value = RadialMeasure> {
    prop_oneof![
        (0.2..3.0f64, -0.5..1.9f64, 0.2..3.0f64).prop_map(|(c, b, t)| RadialMeasure::tilted(c, b, t)),
        (0.1..5.0f64, 0.1..3.0f64).prop_map(|(r, m)| RadialMeasure::dirac(r, m)),
        (0.2..3.0f64, 0.1..1.9f64).prop_map(|(c, b)| RadialMeasure::power_law(c, b)),
    ]
}

fn triplet_1d() -> impl Strategy<Value = LevyTriplet> {
    (0.0..2.0f64, -1.0..1.0f64, prop::collection::vec((prop::bool::ANY, 0.2..2.0f64, radial()), 0..3)).prop_map(
        |(a, g, atoms)| {
            let atoms = atoms.into_iter().map(|(up, w, r)| (if up { 1.0 } else { -1.0 }, w, r)).collect();
            LevyTriplet::one_dim(a, g, atoms)
        },
    )
}

fn mapping() -> impl Strategy<Value = MappingParams> {
    (-2.0..1.95f64, 0u32..3).prop_map(|(a, m)| MappingParams::new(a, m).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exponent_vanishes_at_zero(t in triplet_1d()) {
        prop_assert_eq!(char_exponent(&t, &[0.0], &tol()).unwrap(), num_complex::Complex64::new(0.0, 0.0));
    }

    #[test]
    fn exponent_is_hermitian_with_nonpositive_real_part(t in triplet_1d(), z in -5.0..5.0f64) {
        let p = char_exponent(&t, &[z], &tol()).unwrap();
        let q = char_exponent(&t, &[-z], &tol()).unwrap();
        prop_assert!((p - q.conj()).norm() <= 1e-9 * (1.0 + p.norm()), "{p} vs {q}");
        prop_assert!(p.re <= 1e-12 * (1.0 + p.norm()));
    }

    #[test]
    fn symmetric_triplets_have_real_exponents(a in 0.0..2.0f64, w in 0.2..2.0f64, r in radial(), z in -5.0..5.0f64) {
        let t = LevyTriplet::one_dim(a, 0.0, vec![(1.0, w, r.clone()), (-1.0, w, r)]);
        let p = char_exponent(&t, &[z], &tol()).unwrap();
        prop_assert!(p.im.abs() <= tol().quad, "{p}");
    }

    #[test]
    fn annulus_masses_add(t in triplet_1d(), a in 0.05..1.0f64, s in 1.1..4.0f64, u in 1.1..4.0f64) {
        let (b, c) = (a * s, a * s * u);
        for i in 0..t.atoms().len() {
            let whole = measure_of_annulus(&t, i, a, c, &tol()).unwrap().as_f64();
            let parts = measure_of_annulus(&t, i, a, b, &tol()).unwrap().as_f64()
                + measure_of_annulus(&t, i, b, c, &tol()).unwrap().as_f64();
            prop_assert!((whole - parts).abs() <= tol().quad * whole.max(1.0), "{whole} vs {parts}");
        }
    }

    #[test]
    fn moments_match_quadrature(r in radial(), delta in 0.0..2.5f64) {
        let t = tol();
        let near = radial_moment(&r, delta.max(2.0), Region::NearZero, &t).unwrap();
        let q: f64 = r.integrate(|x: f64| x.powf(delta.max(2.0)), 0.0, 1.0, &QuadOptions::from_tol(&t)).unwrap();
        prop_assert!((near.as_f64() - q).abs() <= t.quad * q.max(1.0));
        if let ExtReal::Finite(v) = radial_moment(&r, delta, Region::Tail, &t).unwrap() {
            // in s = log x the tail decays exponentially; the cut keeps e^(s (delta + 1)) finite and,
            // for a power law, drops a relative e^(-(beta - delta) top) <= e^-35
            let top = 690.0 / (delta + 1.0);
            if let RadialMeasure::PowerLaw { beta, .. } = r {
                prop_assume!((beta - delta) * top >= 35.0);
            }
            let q: f64 = match r.atom() {
                Some(_) => r.integrate(|x: f64| x.powf(delta), 1.0, f64::INFINITY, &QuadOptions::from_tol(&t)).unwrap(),
                None => {
                    let f = |s: f64| (s * (delta + 1.0)).exp() * r.density(s.exp());
                    integrate(f, 0.0, top, &QuadOptions::from_tol(&t)).unwrap().value
                }
            };
            prop_assert!((v - q).abs() <= t.quad * q.max(1.0), "{v} vs {q}");
        }
    }

    #[test]
    fn inverse_kernel_round_trips(p in mapping(), lt in -3.0..3.0f64) {
        let t = 10f64.powf(lt);
        if let ExtReal::Finite(top) = epsilon_zero(&p) {
            prop_assume!(t < top * (1.0 - 1e-9));
        }
        let u = epsilon_star(&p, t, tol().inv);
        prop_assume!(u > 1e-300);
        prop_assert!((epsilon(&p, u) - t).abs() <= tol().inv * t.max(1.0), "{} vs {t}", epsilon(&p, u));
    }

    #[test]
    fn kernel_matches_its_integral(p in mapping(), lu in -6.0..-0.001f64) {
        let u = 10f64.powf(lu);
        let q: Estimate<f64> = integrate_log(|s| g_kernel(&p, s), u, 1.0, &QuadOptions::default()).unwrap();
        prop_assert!((epsilon(&p, u) - q.value).abs() <= tol().quad * q.value.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { max_global_rejects: 1 << 16, ..ProptestConfig::with_cases(16) })]

    #[test]
    fn pushforward_matches_the_double_integral(r in tame_radial(), p in mapping(), a in 0.01..3.0f64, s in 1.2..5.0f64) {
        let t = tol();
        prop_assume!(p.alpha < 1.0);
        // the oracle starts at v = 1e-120 a, where g is still finite; below it a power law
        // leaves mass of order (1e-120)^(beta - alpha)
        if let RadialMeasure::PowerLaw { beta, .. } = r {
            prop_assume!(beta - p.alpha >= 0.1);
        }
        let Ok(img) = map_radial(&r, &p, &t) else { return Ok(()) };
        let b = a * s;
        let got = img.mass_between(a, b, &t).unwrap().as_f64();
        let f = |v: f64| match r.mass_between(a / v, b / v, &t).unwrap().as_f64() {
            // a light tail underflows before g is large
            0.0 => 0.0,
            m => g_kernel(&p, v) * m,
        };
        // split where an atom enters and leaves (a/v, b/v], or the panels step over it
        let lo = 1e-120 * a;
        let mut cuts = vec![lo, 1.0];
        if let Some((r0, _)) = r.atom() {
            cuts.extend([a / r0, b / r0].into_iter().filter(|&v| v > lo && v < 1.0));
        }
        cuts.sort_by(f64::total_cmp);
        let oracle: f64 =
            cuts.windows(2).map(|w| integrate_log(f, w[0], w[1], &QuadOptions::default()).unwrap().value).sum();
        prop_assert!((got - oracle).abs() <= 1e-8 * oracle.max(1.0), "{got} vs {oracle}");
    }

    #[test]
    fn images_lie_in_the_class(t in triplet_1d(), a in -2.0..1.0f64) {
        let p = MappingParams::new(a, 0).unwrap();
        let Ok(img) = apply_phi(&t, &p, &tol()) else { return Ok(()) };
        prop_assert!(is_k_alpha(&img, a, &tol()).member);
    }

    #[test]
    fn moments_below_alpha_survive(r in radial(), a in 0.1..1.9f64, frac in 0.05..0.95f64) {
        let t = tol();
        let delta = a * frac;
        prop_assume!(r.tail_moment(delta, 0, &t).unwrap().is_finite());
        let x = LevyTriplet::one_dim(0.0, 0.0, vec![(1.0, 1.0, r.clone()), (-1.0, 1.0, r)]);
        let Ok(img) = apply_phi(&x, &MappingParams::new(a, 0).unwrap(), &t) else { return Ok(()) };
        prop_assert!(img.atoms()[0].radial.tail_moment(delta, 0, &t).unwrap().is_finite());
    }

    #[test]
    fn membership_nests_downwards(c in 0.2..3.0f64, beta in 0.1..1.9f64, theta in 0.0..2.0f64, below in 0.05..3.0f64) {
        let r = if theta > 0.0 { RadialMeasure::tilted(c, beta, theta) } else { RadialMeasure::power_law(c, beta) };
        let x = LevyTriplet::one_dim(0.0, 0.0, vec![(1.0, 1.0, r)]);
        // members at level b for every b < beta
        let hi = beta - 0.01;
        prop_assert!(is_k_alpha(&x, hi, &tol()).member);
        prop_assert!(is_k_alpha(&x, hi - below, &tol()).member);
    }

    #[test]
    fn decomposition_factors(r in tame_radial(), level in -1.5..-0.1f64, c in prop::sample::select(vec![0.1, 0.5, 0.9])) {
        let t = tol();
        let x = LevyTriplet::one_dim(0.3, 0.2, vec![(1.0, 1.0, r.clone())]);
        prop_assume!(is_k_alpha(&x, level, &t).member);
        let f = factor_decomposition(&x, level, c, &t).unwrap();
        let h = LevelEll::of(&f.mu_c.atoms()[0].radial, level).unwrap();
        for u in r.probe_grid(200) {
            prop_assert!(h.eval(u) >= -t.mono * h.magnitude(u), "h({u}) = {}", h.eval(u));
        }
        let z: Vec<Vec<f64>> = (0..21).map(|k| vec![-5.0 + 0.5 * k as f64]).collect();
        prop_assert!(verify_decomposition(&x, &f, &z, &t).unwrap() <= 10.0 * t.quad);
        let conv = h_convexity_diagnostic(&r, level, &t).unwrap();
        prop_assert_eq!(conv.verdict, kalpha::membership::ConvexityVerdict::Convex);
    }
}
