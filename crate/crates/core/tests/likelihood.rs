mod common;

use common::m1_design;
use locscale_core::linalg::{Cholesky, Matrix};
use locscale_core::priors::PriorConfig;
use locscale_core::sampler::likelihood::{residual_s, Projection, Weighted};
use locscale_core::{build_design, log_marginal_likelihood, parse_model_formula, BlockSizes, ChainState, DataTable, Sampler};
use locscale_core::sampler::residual_sum;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

const FORMULA: &str = r#"y ~ sm(u, k = 6, bs = "rd") | sm(u, k = 6, bs = "rd")"#;

fn intercept_only(y: Vec<f64>) -> locscale_core::DesignMatrices {
    let t = DataTable::from_numeric(vec![("y", y)]).unwrap();
    build_design(&parse_model_formula("y ~ 1").unwrap(), &t).unwrap()
}

#[test]
fn three_point_hand_check() {
    let design = intercept_only(vec![1.0, 2.0, 3.0]);
    let mut state = ChainState::initial(&design);
    state.c_beta = 1.0;
    let s = residual_sum(&state, &design).unwrap();
    assert!((s - 8.0).abs() < 1e-12, "S = {s}");
}

/// `S` straight from its definition with dense matrices.
fn direct_s(design: &locscale_core::DesignMatrices, state: &ChainState) -> f64 {
    let n = design.n();
    let cols: Vec<usize> = std::iter::once(0)
        .chain((0..design.p1()).filter(|&j| state.gamma[j]).map(|j| j + 1))
        .collect();
    let d: Vec<f64> = (0..n)
        .map(|i| {
            let e: f64 = (0..design.p2()).map(|j| design.z[(i, j)] * state.alpha[j]).sum();
            (-0.5 * e).exp()
        })
        .collect();
    let yt: Vec<f64> = (0..n).map(|i| design.response[i] * d[i]).collect();
    let k = cols.len();
    let mut xtx = Matrix::zeros(k, k);
    let mut xty = vec![0.0; k];
    for i in 0..n {
        for (a, &ca) in cols.iter().enumerate() {
            let xa = design.xstar[(i, ca)] * d[i];
            xty[a] += xa * yt[i];
            for (b, &cb) in cols.iter().enumerate() {
                xtx[(a, b)] += xa * design.xstar[(i, cb)] * d[i];
            }
        }
    }
    let coef = Cholesky::new(&xtx).unwrap().solve(&xty);
    let quad: f64 = coef.iter().zip(&xty).map(|(a, b)| a * b).sum();
    let yty: f64 = yt.iter().map(|v| v * v).sum();
    yty - state.c_beta / (1.0 + state.c_beta) * quad
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn empty_model_s_formula(y in prop::collection::vec(-50.0f64..50.0, 2..40), c in 0.01f64..1e4) {
        let design = intercept_only(y.clone());
        let mut state = ChainState::initial(&design);
        state.c_beta = c;
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let expected = y.iter().map(|v| v * v).sum::<f64>() - c / (1.0 + c) * n * mean * mean;
        let s = residual_sum(&state, &design).unwrap();
        prop_assert!((s - expected).abs() <= 1e-9 * (1.0 + expected.abs()));
    }

    #[test]
    fn cached_s_matches_dense_definition(
        mask in prop::collection::vec(any::<bool>(), 7),
        vmask in prop::collection::vec(any::<bool>(), 7),
        alpha in prop::collection::vec(-1.5f64..1.5, 7),
        c in 0.1f64..1e3,
    ) {
        let design = m1_design(60, 2, FORMULA);
        let mut state = ChainState::initial(&design);
        state.gamma = mask;
        state.delta = vmask.clone();
        state.alpha = alpha.iter().zip(&vmask).map(|(a, &d)| if d { *a } else { 0.0 }).collect();
        state.c_beta = c;
        let s = residual_sum(&state, &design).unwrap();
        let expected = direct_s(&design, &state);
        prop_assert!((s - expected).abs() <= 1e-8 * expected.abs(), "{s} vs {expected}");
    }

    #[test]
    fn s_derivative_matches_finite_difference(
        mask in prop::collection::vec(any::<bool>(), 7),
        c in 0.5f64..500.0,
    ) {
        let design = m1_design(60, 3, FORMULA);
        let alpha = vec![0.0; design.p2()];
        let w = Weighted::new(&design, &alpha);
        let proj = Projection::new(&w, &mask).unwrap();
        let analytic = -proj.quad / (1.0 + c).powi(2);
        let h = 1e-4 * c;
        let numeric = (residual_s(w.yty, proj.quad, c + h) - residual_s(w.yty, proj.quad, c - h)) / (2.0 * h);
        prop_assert!((numeric - analytic).abs() <= 1e-6 * analytic.abs().max(1e-12));
    }

    #[test]
    fn cbeta_target_derivatives(c in 0.5f64..500.0, sigma2 in 0.05f64..5.0) {
        let design = m1_design(60, 3, FORMULA);
        let priors = PriorConfig::defaults(design.n(), 1, 1);
        let mut state = ChainState::initial(&design);
        state.gamma[1] = true;
        state.sigma2 = sigma2;
        let s = Sampler::new(&design, &priors, BlockSizes::Geometric, state, ChaCha20Rng::seed_from_u64(0)).unwrap();
        let t = s.cbeta_target();
        let h = 1e-5 * c;
        let d1 = (t.ln_density(c + h) - t.ln_density(c - h)) / (2.0 * h);
        let d2 = (t.d1(c + h) - t.d1(c - h)) / (2.0 * h);
        prop_assert!((d1 - t.d1(c)).abs() <= 1e-5 * (t.d1(c).abs() + 1e-8));
        prop_assert!((d2 - t.d2(c)).abs() <= 1e-5 * (t.d2(c).abs() + 1e-10));
    }

    #[test]
    fn variance_design_is_centered(seed in 0u64..50) {
        let design = m1_design(80, seed, FORMULA);
        for j in 0..design.p2() {
            let sum: f64 = (0..design.n()).map(|i| design.z[(i, j)]).sum();
            prop_assert!(sum.abs() < 1e-9);
        }
        for j in 1..=design.p1() {
            let sum: f64 = (0..design.n()).map(|i| design.xstar[(i, j)]).sum();
            prop_assert!(sum.abs() < 1e-9);
        }
    }

    #[test]
    fn determinant_term_vanishes(alpha in prop::collection::vec(-3.0f64..3.0, 7)) {
        let design = m1_design(80, 9, FORMULA);
        let w = Weighted::new(&design, &alpha);
        prop_assert!(w.eta_sum.abs() < 1e-8);
    }
}

#[test]
fn inclusion_penalty_grows_with_cbeta() {
    let design = m1_design(60, 1, FORMULA);
    let mut off = ChainState::initial(&design);
    off.sigma2 = 0.5;
    let mut on = off.clone();
    on.gamma[2] = true;
    let ratio = |c: f64| {
        let (mut a, mut b) = (off.clone(), on.clone());
        a.c_beta = c;
        b.c_beta = c;
        let ds = residual_sum(&b, &design).unwrap() - residual_sum(&a, &design).unwrap();
        let lr = log_marginal_likelihood(&b, &design) - log_marginal_likelihood(&a, &design);
        lr - (-0.5 * (c + 1.0).ln() - ds / (2.0 * 0.5))
    };
    for c in [1.0, 10.0, 1e3, 1e6] {
        assert!(ratio(c).abs() < 1e-9);
    }
}

#[test]
fn alpha_delta_move_satisfies_detailed_balance() {
    let design = m1_design(150, 7, r#"y ~ sm(u, k = 8, bs = "rd") | sm(u, k = 8, bs = "rd")"#);
    let priors = PriorConfig::defaults(design.n(), 1, 1);
    let mut state = ChainState::initial(&design);
    state.gamma[0] = true;
    state.sigma2 = 0.3;
    let mut s = Sampler::new(&design, &priors, BlockSizes::Geometric, state, ChaCha20Rng::seed_from_u64(21)).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(22);
    use rand::Rng;
    for _ in 0..200 {
        let pick = |rng: &mut ChaCha20Rng| {
            let delta: Vec<bool> = (0..design.p2()).map(|_| rng.random::<f64>() < 0.4).collect();
            let alpha: Vec<f64> = delta
                .iter()
                .map(|&d| if d { 2.0 * rng.random::<f64>() - 1.0 } else { 0.0 })
                .collect();
            (delta, alpha)
        };
        let (dc, ac) = pick(&mut rng);
        let (dp, ap) = pick(&mut rng);
        s.tuning.h = 0.5 + 3.0 * rng.random::<f64>();
        let fwd = s.alpha_delta_log_ratio(&dc, &ac, &dp, &ap);
        let rev = s.alpha_delta_log_ratio(&dp, &ap, &dc, &ac);
        assert!((fwd + rev).abs() < 1e-10, "fwd {fwd} rev {rev}");
        assert_eq!(s.alpha_delta_log_ratio(&dc, &ac, &dc, &ac), 0.0);
    }
}
