use proptest::prelude::*;
use sigrf::equivalence::{
    check_fbm_boundary, check_hform_iff, check_mixture_inequality, check_pair, CheckOptions, RuleChoice, Verdict,
};
use sigrf::experiments::{draw, llr_values, log_space, norm_ratio_study, non_origin_points};
use sigrf::model::{h_from_beta_gamma, validate, AnisotropicDensity, HFormDensity, SpectralModel};
use sigrf::quadrature::{lattice_variogram, variogram, FrequencyLattice, QuadratureConfig};
use sigrf::rkhs::{build_kernel, halton_anchors};
use sigrf::simulate::{sample_batch, CholeskySampler, GridSpec, SpectralSampler, SynthesisConfig, CHOLESKY_CAP};

/// Anisotropic density with every `H_j` in `[0.1, 0.9]`.
fn arb_density() -> impl Strategy<Value = AnisotropicDensity> {
    (1usize..=3)
        .prop_flat_map(|d| (prop::collection::vec(0.8f64..2.0, d), 0.0f64..1.0))
        .prop_map(|(beta, u)| {
            let hi = beta.iter().map(|b| 1.8 / b).fold(f64::INFINITY, f64::min);
            let lo = beta.iter().map(|b| 0.2 / b).fold(0.0, f64::max);
            let alpha = lo + u * (hi - lo);
            let gamma = alpha + beta.iter().map(|b| 1.0 / b).sum::<f64>();
            AnisotropicDensity::new(beta, gamma)
        })
}

fn arb_lag(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, d)
}

fn arb_h() -> impl Strategy<Value = Vec<f64>> {
    (1usize..=3).prop_flat_map(|d| prop::collection::vec(0.1f64..0.9, d))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn variogram_scaling_law(
        (a, t) in arb_density().prop_flat_map(|a| { let d = a.dim(); (Just(a), arb_lag(d)) }),
        k in 0usize..3,
    ) {
        prop_assume!(t.iter().any(|x| x.abs() > 1e-3));
        let cfg = QuadratureConfig::default();
        let c: f64 = [0.5, 2.0, 4.0][k];
        let m = SpectralModel::Anisotropic(a.clone());
        let ct: Vec<f64> = t.iter().zip(&a.beta).map(|(x, b)| c.powf(1.0 / b) * x).collect();
        let lhs = variogram(&m, &ct, &cfg).unwrap().value;
        let rhs = c.powf(a.alpha()) * variogram(&m, &t, &cfg).unwrap().value;
        prop_assert!((lhs - rhs).abs() <= 3.0 * cfg.rel_tol * rhs);
    }

    #[test]
    fn variogram_even_and_positive(
        (a, t) in arb_density().prop_flat_map(|a| { let d = a.dim(); (Just(a), arb_lag(d)) }),
    ) {
        prop_assume!(t.iter().any(|x| *x != 0.0));
        let cfg = QuadratureConfig::default();
        let m = SpectralModel::Anisotropic(a);
        let neg: Vec<f64> = t.iter().map(|x| -x).collect();
        let v = variogram(&m, &t, &cfg).unwrap().value;
        prop_assert!(v > 0.0);
        prop_assert_eq!(v, variogram(&m, &neg, &cfg).unwrap().value);
    }

    #[test]
    fn axis_slope_is_two_h(a in arb_density(), axis in 0usize..3) {
        let j = axis % a.dim();
        let h = h_from_beta_gamma(&a).h[j];
        let cfg = QuadratureConfig::default();
        let m = SpectralModel::Anisotropic(a.clone());
        let s: Vec<f64> = (0..5).map(|k| 2f64.powi(-4 + k)).collect();
        let v: Vec<f64> = s
            .iter()
            .map(|&x| {
                let mut p = vec![0.0; a.dim()];
                p[j] = x;
                variogram(&m, &p, &cfg).unwrap().value.ln()
            })
            .collect();
        for w in 0..4 {
            let slope = (v[w + 1] - v[w]) / 2f64.ln();
            prop_assert!((slope - 2.0 * h).abs() <= 0.01 * 2.0 * h, "slope {} vs 2H {}", slope, 2.0 * h);
        }
    }

    #[test]
    fn mixture_monotone_in_added_gamma(
        beta in prop::collection::vec(1.0f64..4.0, 2),
        beta_added in prop::collection::vec(1.0f64..4.0, 2),
        extra in 0.05f64..1.0,
        gp in 0.0f64..6.0,
        bump in 0.0f64..2.0,
    ) {
        let inv: f64 = beta.iter().map(|b| 1.0 / b).sum();
        let base = AnisotropicDensity::new(beta, inv + extra);
        let lo = beta_added.iter().map(|b| 1.0 / b).sum::<f64>() + 1e-3;
        let a1 = AnisotropicDensity::new(beta_added.clone(), lo + gp);
        let a2 = AnisotropicDensity::new(beta_added, lo + gp + bump);
        if check_mixture_inequality(&base, &a1).unwrap().verdict == Verdict::Equivalent {
            prop_assert_eq!(check_mixture_inequality(&base, &a2).unwrap().verdict, Verdict::Equivalent);
        }
    }

    #[test]
    fn hform_iff_symmetric(h0 in arb_h(), pick in prop::collection::vec(any::<bool>(), 3), h1 in arb_h()) {
        let d = h0.len();
        let h1: Vec<f64> = (0..d).map(|j| if pick[j] { h0[j] } else { h1[j % h1.len()] }).collect();
        let (a, b) = (HFormDensity::new(h0), HFormDensity::new(h1));
        prop_assert_eq!(check_hform_iff(&a, &b).unwrap().verdict, check_hform_iff(&b, &a).unwrap().verdict);
    }

    #[test]
    fn norm_ratio_slope_matches_prediction(h0 in arb_h(), h1 in arb_h(), axis in 0usize..3) {
        prop_assume!(h0.len() == h1.len());
        let j = axis % h0.len();
        prop_assume!((h1[j] - h0[j]).abs() > 0.05);
        let s = norm_ratio_study(
            &HFormDensity::new(h0),
            &HFormDensity::new(h1),
            j,
            &log_space(1e-3, 1e-1, 5),
            &QuadratureConfig::default(),
        )
        .unwrap();
        prop_assert!((s.slope - s.predicted_slope).abs() <= 0.1 * s.predicted_slope.abs());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn fbm_boundary_matches_mixture_rule(h in 0.01f64..0.99, h_added in 0.01f64..0.99) {
        let fbm = check_fbm_boundary(h, h_added).unwrap().verdict;
        let mix = check_mixture_inequality(
            &AnisotropicDensity::new(vec![2.0], h + 0.5),
            &AnisotropicDensity::new(vec![2.0], h_added + 0.5),
        )
        .unwrap()
        .verdict;
        prop_assert_eq!(fbm, mix);
    }

    #[test]
    fn validate_is_idempotent(h in arb_h()) {
        let m = SpectralModel::hform(h);
        prop_assert_eq!(validate(&m), validate(&m));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn only_hform_rule_says_singular(
        (h0, h1) in (1usize..=2).prop_flat_map(|d| (prop::collection::vec(0.1f64..0.9, d), prop::collection::vec(0.1f64..0.9, d))),
    ) {
        let cfg = QuadratureConfig::default();
        let m0 = SpectralModel::hform(h0);
        let m1 = SpectralModel::hform(h1);
        let tail = CheckOptions { rule: RuleChoice::Tail, ..CheckOptions::default() };
        prop_assert_ne!(check_pair(&m0, &m1, &tail, &cfg).unwrap().verdict, Verdict::Singular);
    }


    #[test]
    fn kernel_hermitian_cauchy_schwarz_and_monotone(
        w in prop::collection::vec(-6.0f64..6.0, 2),
        l in prop::collection::vec(-6.0f64..6.0, 2),
    ) {
        let m = SpectralModel::anisotropic(vec![2.0, 1.0], 2.0);
        let cfg = QuadratureConfig::default();
        let anchors = halton_anchors(2, 1.0, 24).unwrap();
        let small = build_kernel(&m, 1.0, &anchors[..12], None, &cfg).unwrap();
        let k = build_kernel(&m, 1.0, &anchors, None, &cfg).unwrap();
        let (re, im) = k.eval(&w, &l).unwrap();
        let (re2, im2) = k.eval(&l, &w).unwrap();
        let scale = k.diagonal(&w).unwrap().max(k.diagonal(&l).unwrap()).max(1e-300);
        prop_assert!((re - re2).abs() <= 1e-9 * scale && (im + im2).abs() <= 1e-9 * scale);
        prop_assert!(re * re + im * im <= k.diagonal(&w).unwrap() * k.diagonal(&l).unwrap() * (1.0 + 1e-8) + 1e-300);
        prop_assert!(small.diagonal(&w).unwrap() <= k.diagonal(&w).unwrap() + 1e-8);
    }

    #[test]
    fn llr_self_zero_and_antisymmetric(seed in any::<u64>(), h in 0.2f64..0.8) {
        let cfg = QuadratureConfig::default();
        let grid = GridSpec::new(1.0, 9, 1).unwrap();
        let pts = non_origin_points(&grid);
        let m0 = SpectralModel::hform(vec![h]);
        let m1 = SpectralModel::anisotropic(vec![2.0], 1.0);
        let xs: Vec<Vec<f64>> = (0..4).map(|r| draw(&m0, &pts, seed.wrapping_add(r), &cfg).unwrap()).collect();
        prop_assert!(llr_values(&m0, &m0, &pts, &xs, &cfg).unwrap().iter().all(|v| *v == 0.0));
        let fwd = llr_values(&m0, &m1, &pts, &xs, &cfg).unwrap();
        let bwd = llr_values(&m1, &m0, &pts, &xs, &cfg).unwrap();
        for (a, b) in fwd.iter().zip(&bwd) {
            prop_assert_eq!(*a, -*b);
        }
    }
}

#[test]
fn two_sided_norm_bound() {
    let cfg = QuadratureConfig::default();
    let a = AnisotropicDensity::new(vec![2.0, 1.0], 2.0);
    let h = h_from_beta_gamma(&a).h;
    let m = SpectralModel::Anisotropic(a);
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for dir in [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, -0.3], [0.2, 1.0]] {
        for s in log_space(1e-3, 1e2, 11) {
            let t = [s * dir[0], s * dir[1]];
            let norm: f64 = t.iter().zip(&h).map(|(x, hj)| x.abs().powf(2.0 * hj)).sum();
            let r = variogram(&m, &t, &cfg).unwrap().value / norm;
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    assert!(lo > 0.0 && hi / lo < 20.0, "bracket [{lo}, {hi}]");
}

#[test]
fn doubling_r_max_stays_within_truncation_bound() {
    let m = SpectralModel::anisotropic(vec![2.0], 1.2);
    let mut cfg = QuadratureConfig {
        r_max: 50.0,
        ..QuadratureConfig::default()
    };
    for t in [0.3, 1.0] {
        let l1 = FrequencyLattice::build(1, &cfg, &[t]).unwrap();
        let e1 = lattice_variogram(&m, &[t], &l1).unwrap();
        cfg.r_max *= 2.0;
        let l2 = FrequencyLattice::build(1, &cfg, &[t]).unwrap();
        let e2 = lattice_variogram(&m, &[t], &l2).unwrap();
        cfg.r_max /= 2.0;
        assert!(
            (e1.value - e2.value).abs() <= e1.truncation_bound + e1.error_estimate + e2.error_estimate,
            "t={t}: {} vs {} bound {}",
            e1.value,
            e2.value,
            e1.truncation_bound
        );
    }
}

#[test]
fn samplers_mean_zero_and_variance_match() {
    let cfg = QuadratureConfig::default();
    let m = SpectralModel::hform(vec![0.35]);
    let grid = GridSpec::new(1.0, 5, 1).unwrap();
    let n = 4000;
    let spectral = SpectralSampler::new(&m, grid, &SynthesisConfig::default()).unwrap();
    let chol = CholeskySampler::new(&m, grid, &cfg, CHOLESKY_CAP).unwrap();
    for (name, samples) in [
        ("spectral", sample_batch(|s| spectral.sample(s), 11, n)),
        ("cholesky", sample_batch(|s| chol.sample(s), 11, n)),
    ] {
        for (i, p) in grid.points().iter().enumerate() {
            if i == grid.origin_index() {
                continue;
            }
            let v = variogram(&m, p, &cfg).unwrap().value;
            let mean = samples.iter().map(|s| s.values[i]).sum::<f64>() / n as f64;
            let var = samples.iter().map(|s| s.values[i].powi(2)).sum::<f64>() / n as f64;
            assert!(mean.abs() <= 4.0 * (v / n as f64).sqrt(), "{name} mean at {p:?}");
            assert!((var - v).abs() <= 4.0 * v * (2.0 / n as f64).sqrt(), "{name} var at {p:?}: {var} vs {v}");
        }
    }
}
