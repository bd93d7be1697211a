use std::sync::{Arc, OnceLock};

use fpf_core::ensemble::{enkf_step, kalman_filter_step, sample_moments, Ensemble};
use fpf_core::fokker_planck::{build_generator, build_propagator, propagate, Propagator};
use fpf_core::metrics::{fit_rate, rel_rmse};
use fpf_core::quadrature::{interpolate, mass, moments, normalize, trapezoid};
use fpf_core::rng::{Stream, StreamSet};
use fpf_core::sde::{ObsModel, Scheme, SdeModel, Window};
use fpf_core::updates::{
    bayes_update, dmfenkf_update, kalman_gain, kalman_moment_update, ConvolutionRule,
};
use fpf_core::{DensityField, Grid1D, MomentPair};
use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use rand::Rng;
use rand_distr::StandardNormal;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        rng_seed: RngSeed::Fixed(0x5eed),
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn mixture(grid: &Arc<Grid1D>, w: f64, m1: f64, v1: f64, m2: f64, v2: f64) -> DensityField {
    let g = |x: f64, m: f64, v: f64| (-(x - m) * (x - m) / (2.0 * v)).exp() / v.sqrt();
    let values = grid
        .nodes()
        .iter()
        .map(|&x| w * g(x, m1, v1) + (1.0 - w) * g(x, m2, v2))
        .collect();
    normalize(values, grid).unwrap()
}

fn ou_propagator() -> &'static (Arc<Grid1D>, Propagator) {
    static P: OnceLock<(Arc<Grid1D>, Propagator)> = OnceLock::new();
    P.get_or_init(|| {
        let g = Grid1D::shared(200, 6.0).unwrap();
        let l = build_generator(&SdeModel::ou(1.0, 1.0).unwrap(), &g).unwrap();
        (g, build_propagator(&l, 1.0).unwrap())
    })
}

fn double_well_propagator() -> &'static (Arc<Grid1D>, Propagator) {
    static P: OnceLock<(Arc<Grid1D>, Propagator)> = OnceLock::new();
    P.get_or_init(|| {
        let g = Grid1D::shared(200, 3.0).unwrap();
        let l = build_generator(&SdeModel::double_well(10.0, 0.5).unwrap(), &g).unwrap();
        (g, build_propagator(&l, 0.1).unwrap())
    })
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn trapezoid_is_linear(
        n in 5usize..300,
        seed in any::<u64>(),
        alpha in -10.0f64..10.0,
        beta in -10.0f64..10.0,
    ) {
        let grid = Grid1D::new(n, 2.5).unwrap();
        let mut rng = StreamSet::new(seed).rng(Stream::Initial, 0);
        let f: Vec<f64> = (0..n).map(|_| rng.random_range(-1e3..1e3)).collect();
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(-1e3..1e3)).collect();
        let combo: Vec<f64> = f.iter().zip(&g).map(|(a, b)| alpha * a + beta * b).collect();
        let lhs = trapezoid(&combo, &grid);
        let rhs = alpha * trapezoid(&f, &grid) + beta * trapezoid(&g, &grid);
        let abs = |v: &[f64]| v.iter().map(|x| x.abs()).collect::<Vec<_>>();
        let scale = alpha.abs() * trapezoid(&abs(&f), &grid) + beta.abs() * trapezoid(&abs(&g), &grid);
        prop_assert!((lhs - rhs).abs() <= 1e-13 * scale.max(f64::MIN_POSITIVE));
    }

    #[test]
    fn trapezoid_of_odd_functions_vanishes(n in 5usize..500, k in 1u32..6) {
        let grid = Grid1D::new(n, 3.0).unwrap();
        let v: Vec<f64> = grid.nodes().iter().map(|x| x.powi(2 * k as i32 - 1) * (-x * x).exp()).collect();
        prop_assert_eq!(trapezoid(&v, &grid), 0.0);
    }

    #[test]
    fn moments_ignore_positive_rescaling(
        w in 0.1f64..0.9, m1 in -2.0f64..2.0, m2 in -2.0f64..2.0,
        v1 in 0.05f64..1.0, v2 in 0.05f64..1.0, c in 1e-6f64..1e6,
    ) {
        let grid = Grid1D::shared(301, 6.0).unwrap();
        let p = mixture(&grid, w, m1, v1, m2, v2);
        let scaled = normalize(p.values().iter().map(|v| c * v).collect(), &grid).unwrap();
        let (a, b) = (moments(&p), moments(&scaled));
        prop_assert!((a.mean - b.mean).abs() <= 1e-13);
        prop_assert!((a.var - b.var).abs() <= 1e-13);
    }

    #[test]
    fn interpolation_is_continuous(
        i in 1usize..199, eps in 1e-12f64..1e-6,
        w in 0.1f64..0.9, m1 in -2.0f64..2.0, v1 in 0.1f64..1.0,
    ) {
        let (grid, prop) = ou_propagator();
        let p = propagate(&mixture(grid, w, m1, v1, 0.0, 1.0), prop).unwrap().density;
        let slope = p.values().windows(2).map(|s| (s[1] - s[0]).abs()).fold(0.0, f64::max) / grid.dx();
        let x = grid.node(i);
        for y in [x - eps, x + eps] {
            prop_assert!((interpolate(&p, y) - p.values()[i]).abs() <= slope * eps * (1.0 + 1e-9));
        }
        // Propagated densities vanish on the boundary, so the off-grid zero
        // continues them continuously.
        let r = grid.radius();
        prop_assert_eq!(interpolate(&p, r), 0.0);
        prop_assert_eq!(interpolate(&p, -r), 0.0);
        prop_assert!(interpolate(&p, r - eps) <= slope * eps * (1.0 + 1e-9));
    }
}

proptest! {
    #![proptest_config(config(32))]

    #[test]
    fn propagation_keeps_unit_mass_and_sign(
        double_well in any::<bool>(),
        m in -1.5f64..1.5, v in 0.02f64..1.0,
    ) {
        let (grid, prop) = if double_well { double_well_propagator() } else { ou_propagator() };
        let p = mixture(grid, 1.0, m, v, 0.0, 1.0);
        let out = propagate(&p, prop).unwrap();
        prop_assert!((mass(&out.density) - 1.0).abs() <= 1e-8);
        prop_assert!(out.density.values().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn dmfenkf_moment_identity(
        w in 0.2f64..0.8, m1 in -2.0f64..2.0, m2 in -2.0f64..2.0,
        v1 in 0.1f64..1.0, v2 in 0.1f64..1.0,
        coeff in 0.5f64..2.0, gamma in 0.2f64..2.0, y in -3.0f64..3.0,
    ) {
        let grid = Grid1D::shared(401, 6.0).unwrap();
        let tol = 10.0 * grid.dx() * grid.dx();
        let obs = ObsModel::new(coeff, gamma).unwrap();
        let p = mixture(&grid, w, m1, v1, m2, v2);
        let hat = moments(&p);
        let want = kalman_moment_update(&hat, y, &obs);
        let out = dmfenkf_update(&p, y, &obs, ConvolutionRule::TrapezoidDirect).unwrap();
        let got = moments(&out);
        prop_assert!((got.mean - want.mean).abs() <= tol, "{:?} vs {:?}", got, want);
        prop_assert!((got.var - want.var).abs() <= tol, "{:?} vs {:?}", got, want);
        prop_assert!((mass(&out) - 1.0).abs() <= 1e-12);
        prop_assert!(out.values().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn bayes_and_dmfenkf_agree_on_gaussian_priors(
        m in -1.5f64..1.5, v in 0.2f64..1.5, y in -2.5f64..2.5, gamma in 0.3f64..2.0,
    ) {
        let grid = Grid1D::shared(401, 6.0).unwrap();
        let tol = 10.0 * grid.dx() * grid.dx();
        let obs = ObsModel::new(1.0, gamma).unwrap();
        let p = mixture(&grid, 1.0, m, v, 0.0, 1.0);
        let a = moments(&bayes_update(&p, y, &obs).unwrap());
        let b = moments(&dmfenkf_update(&p, y, &obs, ConvolutionRule::TrapezoidDirect).unwrap());
        prop_assert!((a.mean - b.mean).abs() <= tol && (a.var - b.var).abs() <= tol);
    }

    #[test]
    fn gain_contracts(var in 0.0f64..100.0, coeff in -3.0f64..3.0, gamma in 1e-3f64..10.0) {
        prop_assume!(coeff.abs() > 1e-3);
        let obs = ObsModel::new(coeff, gamma).unwrap();
        let g = kalman_gain(&MomentPair { mean: 0.0, var }, &obs);
        prop_assert!(g.s >= gamma);
        let kh = g.k * coeff;
        prop_assert!((0.0..1.0).contains(&kh));
    }

    #[test]
    fn riccati_recursion_reaches_its_fixed_point(
        a in 0.2f64..3.0, b in 0.2f64..3.0, h in 0.1f64..2.0,
        coeff in 0.5f64..2.0, gamma in 0.2f64..3.0,
    ) {
        let model = SdeModel::ou(a, b).unwrap();
        let obs = ObsModel::new(coeff, gamma).unwrap();
        let mut m = MomentPair { mean: 0.0, var: 0.0 };
        for _ in 0..2000 {
            m = kalman_filter_step(&m, &model, &obs, 0.0, h).unwrap();
        }
        let next = kalman_filter_step(&m, &model, &obs, 0.0, h).unwrap();
        prop_assert!((next.var - m.var).abs() <= 1e-12 * m.var.max(1.0));
    }

    #[test]
    fn rel_rmse_is_scale_covariant(seed in any::<u64>(), alpha in prop_oneof![-1e3f64..-1e-3, 1e-3f64..1e3]) {
        let mut rng = StreamSet::new(seed).rng(Stream::Initial, 0);
        let r: Vec<f64> = (0..50).map(|_| rng.sample(StandardNormal)).collect();
        let e: Vec<f64> = r.iter().map(|x| x + 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
        let scaled = |v: &[f64]| v.iter().map(|x| alpha * x).collect::<Vec<_>>();
        let a = rel_rmse(&e, &r).unwrap();
        let b = rel_rmse(&scaled(&e), &scaled(&r)).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn rate_fit_ignores_relabeling(c in 1e-3f64..1e3, p in -3.0f64..1.0, seed in any::<u64>()) {
        let mut rng = StreamSet::new(seed).rng(Stream::Initial, 0);
        let n = [1e2, 3e2, 1e3, 3e3, 1e4];
        let e: Vec<f64> = n.iter().map(|x: &f64| x.powf(p) * rng.random_range(0.8..1.2)).collect();
        let fit = fit_rate(&n, &e).unwrap();
        let relabeled: Vec<f64> = n.iter().map(|x| c * x).collect();
        let fit2 = fit_rate(&relabeled, &e).unwrap();
        prop_assert!((fit.slope - fit2.slope).abs() <= 1e-9);
        prop_assert!((fit2.intercept - (fit.intercept - fit.slope * c.ln())).abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(config(12))]

    #[test]
    fn semigroup_composition(h1 in 0.005f64..0.2, h2 in 0.005f64..0.2) {
        let g = Grid1D::shared(160, 3.0).unwrap();
        let l = build_generator(&SdeModel::double_well(10.0, 0.5).unwrap(), &g).unwrap();
        let p1 = build_propagator(&l, h1).unwrap();
        let p2 = build_propagator(&l, h2).unwrap();
        let p12 = build_propagator(&l, h1 + h2).unwrap();
        let diff = p1.matrix() * p2.matrix() - p12.matrix();
        let max = |m: &nalgebra::DMatrix<f64>| m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        prop_assert!(max(&diff) <= 1e-10 * max(p12.matrix()));
    }
}

#[test]
fn enkf_single_step_is_mean_field_consistent() {
    let n = 100_000;
    let model = SdeModel::ou(1.0, 1.0).unwrap();
    let window = Window::new(1.0, 1.0, Scheme::ExactOu).unwrap();
    for (seed, m0, c0, y, gamma) in [
        (1u64, 0.0f64, 1.0f64, 0.5f64, 1.0f64),
        (2, -0.7, 0.3, 1.8, 0.5),
        (3, 1.2, 2.0, -0.4, 2.0),
    ] {
        let obs = ObsModel::new(1.0, gamma).unwrap();
        let streams = StreamSet::new(seed);
        let mut rng = streams.rng(Stream::Initial, 0);
        let members = (0..n)
            .map(|_| m0 + c0.sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let e = Ensemble::new(members).unwrap();
        let got = sample_moments(&enkf_step(&e, &model, &obs, y, &window, &streams, 1).unwrap());
        let want =
            kalman_filter_step(&MomentPair { mean: m0, var: c0 }, &model, &obs, y, 1.0).unwrap();
        let se_mean = (want.var / n as f64).sqrt();
        let se_var = want.var * (2.0 / n as f64).sqrt();
        assert!(
            (got.mean - want.mean).abs() < 4.0 * se_mean,
            "seed {seed}: {got:?} {want:?}"
        );
        assert!(
            (got.var - want.var).abs() < 4.0 * se_var,
            "seed {seed}: {got:?} {want:?}"
        );
    }
}
