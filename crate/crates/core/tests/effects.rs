mod common;

use common::{dsdm_data, dsdm_design, random_weights};
use nalgebra::DMatrix;
use proptest::prelude::*;
use spillover::dsdm::{fit_bayes_data, fit_mle_data, Diagnostics, DsdmFit, Estimator, McmcConfig};
use spillover::effects::{
    decompose, effects_at, effects_uncertainty, effects_uncertainty_with, EffectsMethod,
};
use spillover::simulate::gen_dsdm;
use spillover::weights::{row_normalize, WeightKind, WeightMatrix};

fn fit_with(rho: f64, beta: f64, theta: f64, vcov: DMatrix<f64>) -> DsdmFit {
    DsdmFit {
        estimator: Estimator::Mle,
        param_names: ["tau", "rho", "eta", "beta", "theta", "sigma2"]
            .map(String::from)
            .to_vec(),
        estimates: vec![0.2, rho, 0.0, beta, theta, 1.0],
        vcov,
        loglik: 0.0,
        draws: None,
        rho_interval: (-1.0, 1.0),
        n_entities: 3,
        n_periods: 10,
        diagnostics: Diagnostics::default(),
    }
}

// Explicit cofactor inverse of a 3×3 matrix.
fn inverse3(a: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let c =
        |r0: usize, r1: usize, c0: usize, c1: usize| a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0];
    let det = a[0][0] * c(1, 2, 1, 2) - a[0][1] * c(1, 2, 0, 2) + a[0][2] * c(1, 2, 0, 1);
    let cof = [
        [c(1, 2, 1, 2), -c(1, 2, 0, 2), c(1, 2, 0, 1)],
        [-c(0, 2, 1, 2), c(0, 2, 0, 2), -c(0, 2, 0, 1)],
        [c(0, 1, 1, 2), -c(0, 1, 0, 2), c(0, 1, 0, 1)],
    ];
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            inv[i][j] = cof[j][i] / det;
        }
    }
    inv
}

fn three_node() -> WeightMatrix {
    let raw = DMatrix::from_row_slice(3, 3, &[0., 2., 1., 1., 0., 1., 3., 1., 0.]);
    row_normalize(&raw, WeightKind::Custom, None).unwrap()
}

#[test]
fn zero_rho_gives_beta_and_theta() {
    for seed in 0..5 {
        let w = random_weights(12, 0.3, seed);
        let e = effects_at(0.0, 0.7, -0.4, &w).unwrap();
        assert!((e.direct - 0.7).abs() < 1e-12);
        assert!((e.indirect + 0.4).abs() < 1e-12);
        assert!((e.total - 0.3).abs() < 1e-12);
    }
}

#[test]
fn zero_coefficients_give_zero_effects() {
    let e = effects_at(0.45, 0.0, 0.0, &three_node()).unwrap();
    assert_eq!((e.direct, e.indirect, e.total), (0.0, 0.0, 0.0));
    assert_eq!(e.ratio(), None);
}

#[test]
fn three_node_hand_inversion() {
    let w = three_node();
    let (rho, beta, theta) = (0.5, 1.0, 0.4);
    let wm = w.matrix();
    let mut a = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            a[i][j] = f64::from(u8::from(i == j)) - rho * wm[(i, j)];
        }
    }
    let s = inverse3(&a);
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                let b = beta * f64::from(u8::from(k == j)) + theta * wm[(k, j)];
                m[i][j] += s[i][k] * b;
            }
        }
    }
    let direct = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
    let total = m.iter().flatten().sum::<f64>() / 3.0;
    let e = effects_at(rho, beta, theta, &w).unwrap();
    assert!((e.direct - direct).abs() < 1e-10);
    assert!((e.total - total).abs() < 1e-10);
    assert!((e.indirect - (total - direct)).abs() < 1e-10);
}

fn neumann(rho: f64, beta: f64, theta: f64, w: &DMatrix<f64>) -> (f64, f64) {
    let n = w.nrows();
    let b = DMatrix::identity(n, n) * beta + w * theta;
    let mut term = b.clone();
    let mut m = b;
    for _ in 1..=200 {
        term = w * &term * rho;
        m += &term;
    }
    (m.trace() / n as f64, m.sum() / n as f64)
}

#[test]
fn neumann_series_cross_check() {
    for seed in 0..4 {
        let w = random_weights(15, 0.4, 100 + seed);
        for rho in [-0.7, -0.3, 0.3, 0.7] {
            let (direct, total) = neumann(rho, 0.8, 0.35, w.matrix());
            let e = effects_at(rho, 0.8, 0.35, &w).unwrap();
            assert!((e.direct - direct).abs() < 1e-8, "rho {rho}");
            assert!((e.total - total).abs() < 1e-8, "rho {rho}");
        }
    }
}

#[test]
fn unnormalized_weights_use_the_solve() {
    let raw = DMatrix::from_row_slice(
        4,
        4,
        &[
            0., 0.2, 0.1, 0., 0.3, 0., 0.2, 0.1, 0., 0.4, 0., 0.3, 0.1, 0., 0.2, 0.,
        ],
    );
    let w = WeightMatrix::from_raw_unnormalized(raw.clone(), WeightKind::Custom).unwrap();
    assert!(!w.is_row_normalized());
    let (direct, total) = neumann(0.6, 1.1, -0.3, &raw);
    let e = effects_at(0.6, 1.1, -0.3, &w).unwrap();
    assert!((e.direct - direct).abs() < 1e-10);
    assert!((e.total - total).abs() < 1e-10);
}

#[test]
fn indirect_closed_form_at_zero_rho() {
    let w = random_weights(10, 0.5, 7);
    let theta = 0.9;
    let ones = nalgebra::DVector::from_element(10, 1.0);
    let closed = theta * (w.matrix() * &ones).sum() / 10.0;
    let e = effects_at(0.0, 0.2, theta, &w).unwrap();
    assert!((e.indirect - closed).abs() < 1e-12);
    assert!((closed - theta).abs() < 1e-12);
}

#[test]
fn singular_rho_is_rejected() {
    assert!(effects_at(1.0, 1.0, 0.0, &three_node()).is_err());
    let fit = fit_with(1.5, 0.3, 0.2, DMatrix::zeros(6, 6));
    assert!(decompose(&fit, &three_node()).is_err());
}

#[test]
fn degenerate_covariance_gives_zero_se() {
    let fit = fit_with(0.3, 0.5, 0.2, DMatrix::zeros(6, 6));
    let se = effects_uncertainty(&fit, &three_node(), 200, 1).unwrap();
    assert_eq!(se.method, EffectsMethod::Delta);
    assert_eq!((se.direct, se.indirect, se.total), (0.0, 0.0, 0.0));
}

#[test]
fn missing_uncertainty_inputs_error() {
    let fit = fit_with(0.3, 0.5, 0.2, DMatrix::zeros(0, 0));
    assert!(effects_uncertainty(&fit, &three_node(), 100, 1).is_err());
    assert!(
        effects_uncertainty_with(&fit, &three_node(), EffectsMethod::PosteriorSim, 100, 1).is_err()
    );
}

#[test]
fn delta_method_ses_stabilize_and_decompose() {
    let spec = dsdm_design(41);
    let w = spec.weights.clone().unwrap();
    let data = dsdm_data(&gen_dsdm(&spec).unwrap().panel, &w);
    let fit = fit_mle_data(&data, &w, true).unwrap();
    let d = decompose(&fit, &w).unwrap();
    assert!((d.direct + d.indirect - d.total).abs() < 1e-10);
    assert!((d.ratio_indirect_total.unwrap() - d.indirect / d.total).abs() < 1e-15);
    let a = effects_uncertainty(&fit, &w, 1000, 5).unwrap();
    let b = effects_uncertainty(&fit, &w, 2000, 5).unwrap();
    for (x, y) in [
        (a.direct, b.direct),
        (a.indirect, b.indirect),
        (a.total, b.total),
    ] {
        assert!((x / y - 1.0).abs() < 0.05, "{x} vs {y}");
    }
    assert_eq!(
        effects_uncertainty(&fit, &w, 300, 9).unwrap(),
        effects_uncertainty(&fit, &w, 300, 9).unwrap()
    );
}

#[test]
fn posterior_simulation_uses_every_draw() {
    let spec = dsdm_design(42);
    let w = spec.weights.clone().unwrap();
    let data = dsdm_data(&gen_dsdm(&spec).unwrap().panel, &w);
    let cfg = McmcConfig {
        iterations: 1500,
        burn_in: 500,
        ..Default::default()
    };
    let fit = fit_bayes_data(&data, &w, &cfg).unwrap();
    let se = effects_uncertainty(&fit, &w, 10, 0).unwrap();
    assert_eq!(se.method, EffectsMethod::PosteriorSim);
    assert_eq!(se.draws, 1000);
    assert!(se.direct > 0.0 && se.total > 0.0);
}

proptest! {
    #[test]
    fn relabeling_leaves_effects_unchanged(seed in 0u64..1000, rho in -0.6f64..0.6, shift in 1usize..9) {
        let w = random_weights(9, 0.4, seed);
        let perm: Vec<usize> = (0..9).map(|i| (i + shift) % 9).collect();
        let a = effects_at(rho, 0.4, 0.3, &w).unwrap();
        let b = effects_at(rho, 0.4, 0.3, &w.permuted(&perm)).unwrap();
        prop_assert!((a.direct - b.direct).abs() < 1e-10);
        prop_assert!((a.total - b.total).abs() < 1e-10);
    }

    #[test]
    fn components_add_up(seed in 0u64..1000, rho in -0.9f64..0.9, beta in -2f64..2.0, theta in -2f64..2.0) {
        let w = random_weights(8, 0.5, seed);
        let e = effects_at(rho, beta, theta, &w).unwrap();
        prop_assert!((e.direct + e.indirect - e.total).abs() < 1e-10);
    }
}
