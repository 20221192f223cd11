mod common;

use common::{dsdm_data, dsdm_design, mean, sd, DSDM_TRUTH};
use rayon::prelude::*;
use spillover::dsdm::{
    fit, fit_bayes_data, fit_mle_data, fit_qmle_data, loglik, DsdmSpec, Estimator, FixedEffects,
    McmcConfig,
};
use spillover::numeric::gradient;
use spillover::panel::Outcome;
use spillover::simulate::{gen_dsdm, DgpSpec, Innovation, TreatmentRule};

#[test]
fn gradient_vanishes_at_the_maximizer() {
    let spec = dsdm_design(11);
    let w = spec.weights.clone().unwrap();
    let data = dsdm_data(&gen_dsdm(&spec).unwrap().panel, &w);
    let fit = fit_mle_data(&data, &w, false).unwrap();
    let g = gradient(|p| loglik(p, &data, &w).unwrap(), &fit.estimates);
    for (name, gi) in fit.param_names.iter().zip(&g) {
        assert!(gi.abs() < 1e-5, "d lnL / d {name} = {gi}");
    }
}

#[test]
fn loglik_invariant_to_relabeling() {
    let spec = dsdm_design(12);
    let w = spec.weights.clone().unwrap();
    let data = dsdm_data(&gen_dsdm(&spec).unwrap().panel, &w);
    let perm: Vec<usize> = (0..50).map(|i| (i * 17 + 3) % 50).collect();
    let (dp, wp) = (data.permuted(&perm), w.permuted(&perm));
    let p = [0.45, 0.3, -0.1, 0.2, 0.4, 0.1, 1.2];
    let a = loglik(&p, &data, &w).unwrap();
    let b = loglik(&p, &dp, &wp).unwrap();
    assert!((a - b).abs() < 1e-8 * a.abs(), "{a} vs {b}");
}

#[test]
fn qmle_shares_mle_point_estimates() {
    let spec = dsdm_design(13);
    let w = spec.weights.clone().unwrap();
    let data = dsdm_data(&gen_dsdm(&spec).unwrap().panel, &w);
    for correct in [false, true] {
        let m = fit_mle_data(&data, &w, correct).unwrap();
        let q = fit_qmle_data(&data, &w, correct).unwrap();
        assert_eq!(m.estimates, q.estimates);
        assert_eq!(q.estimator, Estimator::Qmle);
    }
}

#[test]
fn panel_level_fit_matches_data_level_fit() {
    let dgp = dsdm_design(14);
    let w = dgp.weights.clone().unwrap();
    let panel = gen_dsdm(&dgp).unwrap().panel;
    let spec = DsdmSpec {
        outcome: Outcome::Roa,
        weights: w.clone(),
        controls: vec!["x1".into()],
        fixed_effects: FixedEffects::Both,
        estimator: Estimator::Mle,
        bias_correction: true,
    };
    let a = fit(&spec, &panel, &McmcConfig::default()).unwrap();
    let b = fit_mle_data(&dsdm_data(&panel, &w), &w, true).unwrap();
    assert_eq!(a.estimates, b.estimates);
    assert_eq!(
        a.param_names,
        ["tau", "rho", "eta", "beta", "theta", "gamma[x1]", "sigma2"]
    );
    let table = a.table();
    assert_eq!(table.len(), 7);
    assert!(table
        .iter()
        .all(|r| r.lower < r.estimate && r.estimate < r.upper));
}

#[test]
fn sandwich_close_to_hessian_se_under_gaussian_errors() {
    let ratios: Vec<f64> = (0..40u64)
        .into_par_iter()
        .map(|s| {
            let spec = dsdm_design(1000 + s);
            let w = spec.weights.clone().unwrap();
            let data = dsdm_data(&gen_dsdm(&spec).unwrap().panel, &w);
            let m = fit_mle_data(&data, &w, true).unwrap().se();
            let q = fit_qmle_data(&data, &w, true).unwrap().se();
            (0..5).map(|k| q[k] / m[k]).sum::<f64>() / 5.0
        })
        .collect();
    let avg = mean(&ratios);
    assert!((avg - 1.0).abs() < 0.25, "mean sandwich/MLE SE ratio {avg}");
}

#[test]
fn null_spillover_dgp() {
    let results: Vec<(f64, f64)> = (0..50u64)
        .into_par_iter()
        .map(|s| {
            let mut spec = dsdm_design(2000 + s);
            spec.rho = 0.0;
            let w = spec.weights.clone().unwrap();
            let data = dsdm_data(&gen_dsdm(&spec).unwrap().panel, &w);
            let f = fit_mle_data(&data, &w, true).unwrap();
            (f.rho(), f.se()[1])
        })
        .collect();
    let within = results.iter().filter(|(r, se)| r.abs() <= *se).count();
    let m = mean(&results.iter().map(|r| r.0).collect::<Vec<_>>());
    let se = mean(&results.iter().map(|r| r.1).collect::<Vec<_>>());
    assert!(m.abs() < se, "mean rho-hat {m} vs se {se}");
    assert!(within >= 25, "{within}/50 within one SE");
}

#[test]
fn zero_treatment_effect_is_mostly_insignificant() {
    let sig = (0..100u64)
        .into_par_iter()
        .filter(|&s| {
            let mut spec = dsdm_design(3000 + s);
            spec.beta = 0.0;
            let w = spec.weights.clone().unwrap();
            let data = dsdm_data(&gen_dsdm(&spec).unwrap().panel, &w);
            let f = fit_mle_data(&data, &w, true).unwrap();
            f.table()[3].p_value < 0.05
        })
        .count();
    assert!(sig <= 10, "beta significant in {sig}/100 runs");
}

#[test]
fn bayes_is_deterministic_and_respects_support() {
    let spec = dsdm_design(15);
    let w = spec.weights.clone().unwrap();
    let data = dsdm_data(&gen_dsdm(&spec).unwrap().panel, &w);
    let cfg = McmcConfig {
        iterations: 2000,
        burn_in: 1000,
        seed: 7,
        ..Default::default()
    };
    let a = fit_bayes_data(&data, &w, &cfg).unwrap();
    let b = fit_bayes_data(&data, &w, &cfg).unwrap();
    let (da, db) = (a.draws.as_ref().unwrap(), b.draws.as_ref().unwrap());
    assert_eq!(da.shape(), (1000, 7));
    assert!(da
        .iter()
        .zip(db.iter())
        .all(|(x, y)| x.to_bits() == y.to_bits()));
    let (lo, hi) = w.rho_interval().unwrap();
    for r in 0..da.nrows() {
        assert!(da[(r, 1)] > lo && da[(r, 1)] < hi);
        assert!(da[(r, 6)] > 0.0);
        assert!(da[(r, 0)].abs() < 1.0 && da[(r, 2)].abs() < 1.0);
    }
    let other = fit_bayes_data(&data, &w, &McmcConfig { seed: 8, ..cfg }).unwrap();
    assert_ne!(other.draws, a.draws);
}

#[test]
fn prior_only_run_recovers_prior_moments() {
    let spec = dsdm_design(16);
    let w = spec.weights.clone().unwrap();
    let data = dsdm_data(&gen_dsdm(&spec).unwrap().panel, &w);
    let cfg = McmcConfig {
        iterations: 30_000,
        burn_in: 5_000,
        seed: 3,
        prior_only: true,
        ..Default::default()
    };
    let f = fit_bayes_data(&data, &w, &cfg).unwrap();
    let d = f.draws.unwrap();
    let col = |c: usize| d.column(c).iter().copied().collect::<Vec<_>>();
    let target = 10f64.sqrt();
    for c in [3, 4, 5] {
        let s = sd(&col(c));
        assert!((s / target - 1.0).abs() < 0.1, "column {c}: sd {s}");
    }
    let uniform_sd = 1.0 / 3f64.sqrt();
    for c in [0, 2] {
        let s = sd(&col(c));
        assert!((s / uniform_sd - 1.0).abs() < 0.1, "column {c}: sd {s}");
    }
    assert!(col(6).iter().all(|&s2| s2 > 0.0));
}

#[test]
fn posterior_means_near_mle() {
    let spec = dsdm_design(17);
    let w = spec.weights.clone().unwrap();
    let data = dsdm_data(&gen_dsdm(&spec).unwrap().panel, &w);
    let mle = fit_mle_data(&data, &w, false).unwrap();
    let post = fit_bayes_data(&data, &w, &McmcConfig::default()).unwrap();
    let psd = post.se();
    for k in 0..post.estimates.len() {
        let z = (post.estimates[k] - mle.estimates[k]).abs() / psd[k];
        assert!(
            z < 2.0,
            "{}: {} vs {} (psd {})",
            mle.param_names[k],
            post.estimates[k],
            mle.estimates[k],
            psd[k]
        );
    }
    let acc = post.diagnostics.rho_acceptance.unwrap();
    assert!((0.1..=0.6).contains(&acc), "acceptance {acc}");
    assert!(post.diagnostics.rhat.iter().all(|r| *r < 1.1));
}

#[test]
fn credible_intervals_drive_bayes_significance() {
    let spec = dsdm_design(18);
    let w = spec.weights.clone().unwrap();
    let data = dsdm_data(&gen_dsdm(&spec).unwrap().panel, &w);
    let cfg = McmcConfig {
        iterations: 4000,
        burn_in: 2000,
        ..Default::default()
    };
    let post = fit_bayes_data(&data, &w, &cfg).unwrap();
    for row in post.table() {
        let excludes_zero = row.lower > 0.0 || row.upper < 0.0;
        assert_eq!(excludes_zero, row.p_value < 0.05, "{row:?}");
    }
}

#[test]
fn mcmc_config_rejects_burn_in_past_iterations() {
    let spec = dsdm_design(19);
    let w = spec.weights.clone().unwrap();
    let data = dsdm_data(&gen_dsdm(&spec).unwrap().panel, &w);
    let cfg = McmcConfig {
        iterations: 100,
        burn_in: 100,
        ..Default::default()
    };
    assert!(fit_bayes_data(&data, &w, &cfg).is_err());
}

#[test]
fn student_t_innovations_fit() {
    let spec = DgpSpec {
        innovation: Innovation::StudentT { df: 5.0 },
        ..dsdm_design(20)
    };
    let w = spec.weights.clone().unwrap();
    let data = dsdm_data(&gen_dsdm(&spec).unwrap().panel, &w);
    let q = fit_qmle_data(&data, &w, true).unwrap();
    for k in 0..5 {
        assert!((q.estimates[k] - DSDM_TRUTH[k]).abs() < 4.0 * q.se()[k]);
    }
}

#[test]
fn untreated_panel_reports_collinear_columns() {
    let spec = DgpSpec {
        treatment: TreatmentRule::None,
        ..dsdm_design(21)
    };
    let w = spec.weights.clone().unwrap();
    let panel = gen_dsdm(&spec).unwrap().panel;
    let y = panel.variable("roa").unwrap().values().clone();
    let d = panel.variable("treatment").unwrap().values().clone();
    let err =
        spillover::dsdm::DsdmData::from_matrices(&y, &d, &[], &w, FixedEffects::Both).unwrap_err();
    match err {
        spillover::Error::Collinear(cols) => assert_eq!(cols, ["beta", "theta"]),
        other => panic!("{other}"),
    }
}
