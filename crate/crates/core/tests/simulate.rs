mod common;

use spillover::dsdm::stationarity_modulus;
use spillover::panel::TREATMENT;
use spillover::simulate::{
    gen_dsdm, gen_sdid, ring_weights, DgpSpec, Innovation, SdidVariant, TreatmentRule, Truth,
};
use spillover::Error;

fn quiet(seed: u64) -> DgpSpec {
    DgpSpec {
        n: 20,
        t: 30,
        fe_scale: 0.0,
        weights: Some(ring_weights(20, 2).unwrap()),
        seed,
        ..Default::default()
    }
}

fn pooled(m: &nalgebra::DMatrix<f64>) -> Vec<f64> {
    m.iter().copied().collect()
}

#[test]
fn zero_parameters_give_iid_normals() {
    let spec = DgpSpec {
        n: 40,
        t: 50,
        sigma: 2.0,
        weights: Some(ring_weights(40, 2).unwrap()),
        ..quiet(1)
    };
    let sim = gen_dsdm(&spec).unwrap();
    let y = sim.panel.variable("roa").unwrap().values();
    assert_eq!(y, &sim.components.eps);
    let v = pooled(y);
    let m = common::mean(&v);
    let s = common::sd(&v);
    assert!(m.abs() < 3.0 * 2.0 / (v.len() as f64).sqrt(), "mean {m}");
    assert!((s / 2.0 - 1.0).abs() < 0.05, "sd {s}");
    // lag-one correlation within entities is negligible
    let mut num = 0.0;
    for i in 0..40 {
        for c in 1..50 {
            num += y[(i, c)] * y[(i, c - 1)];
        }
    }
    let r = num / (40.0 * 49.0 * 4.0);
    assert!(r.abs() < 0.07, "autocorrelation {r}");
}

#[test]
fn theta_only_moves_outcomes_after_onset() {
    let base = DgpSpec {
        treatment: TreatmentRule::RandomShare { share: 0.3 },
        t0: 12,
        ..quiet(2)
    };
    let with = DgpSpec {
        theta: 0.7,
        ..base.clone()
    };
    let a = gen_dsdm(&base).unwrap();
    let b = gen_dsdm(&with).unwrap();
    let ya = a.panel.variable("roa").unwrap().values();
    let yb = b.panel.variable("roa").unwrap().values();
    let diff = yb - ya;
    for c in 0..12 {
        assert!(diff.column(c).amax() == 0.0, "column {c}");
    }
    let w = base.weights.as_ref().unwrap();
    let d = &a.components.d;
    for c in 12..30 {
        let expected = w.matrix() * d.column(c) * 0.7;
        assert!((diff.column(c) - expected).amax() < 1e-12);
    }
    assert!(diff.column(12).amax() > 0.0);
}

#[test]
fn ar1_variance_matches_theory() {
    let tau: f64 = 0.6;
    let spec = DgpSpec {
        n: 5,
        t: 2000,
        tau,
        treatment: TreatmentRule::None,
        weights: Some(ring_weights(5, 1).unwrap()),
        ..quiet(3)
    };
    let sim = gen_dsdm(&spec).unwrap();
    let v = pooled(sim.panel.variable("roa").unwrap().values());
    let var = common::sd(&v).powi(2);
    let theory = 1.0 / (1.0 - tau * tau);
    assert!((var / theory - 1.0).abs() < 0.05, "var {var} vs {theory}");
}

/// Scalar-loop version of the recursion with the spatial lag taken from the
/// weight rows, compared against the generator cell by cell.
fn recursion_residual(sim: &spillover::simulate::Simulated, spec: &DgpSpec) -> f64 {
    let w = spec.weights.as_ref().unwrap().matrix();
    let y = sim.panel.variable("roa").unwrap().values();
    let c = &sim.components;
    let (n, t) = (spec.n, spec.t);
    let mut worst: f64 = 0.0;
    for col in 0..t {
        for i in 0..n {
            let prev = |j: usize| {
                if col == 0 {
                    c.y_init[j]
                } else {
                    y[(j, col - 1)]
                }
            };
            let mut lag_y = 0.0;
            let mut lag_prev = 0.0;
            let mut lag_d = 0.0;
            for j in 0..n {
                lag_y += w[(i, j)] * y[(j, col)];
                lag_prev += w[(i, j)] * prev(j);
                lag_d += w[(i, j)] * c.d[(j, col)];
            }
            let mut rhs = spec.rho * lag_y
                + spec.tau * prev(i)
                + spec.eta * lag_prev
                + spec.beta * c.d[(i, col)]
                + spec.theta * lag_d
                + c.mu[i]
                + c.delta[col]
                + c.eps[(i, col)];
            for (k, g) in spec.gamma.iter().enumerate() {
                rhs += g * c.x[k][(i, col)];
            }
            worst = worst.max((y[(i, col)] - rhs).abs());
        }
    }
    worst
}

#[test]
fn non_spatial_recursion_matches_scalar_loop() {
    let spec = DgpSpec {
        tau: 0.5,
        beta: 0.8,
        gamma: vec![0.3, -0.1],
        fe_scale: 1.0,
        t0: 10,
        ..quiet(4)
    };
    let sim = gen_dsdm(&spec).unwrap();
    assert!(recursion_residual(&sim, &spec) < 1e-10);
}

#[test]
fn spatial_recursion_satisfies_its_equation() {
    let spec = common::dsdm_design(5);
    let sim = gen_dsdm(&spec).unwrap();
    assert!(recursion_residual(&sim, &spec) < 1e-10);
}

#[test]
fn same_seed_same_panel() {
    let spec = common::dsdm_design(6);
    let a = gen_dsdm(&spec).unwrap();
    let b = gen_dsdm(&spec).unwrap();
    assert_eq!(a.panel, b.panel);
    assert_eq!(a.truth, b.truth);
    let c = gen_dsdm(&DgpSpec { seed: 7, ..spec }).unwrap();
    assert_ne!(a.panel, c.panel);
}

#[test]
fn truth_round_trips_through_json() {
    let sim = gen_sdid(&DgpSpec {
        sdid: SdidVariant {
            effect: 1.5,
            cohorts: vec![10, 14],
            ..Default::default()
        },
        ..Default::default()
    })
    .unwrap();
    let text = serde_json::to_string_pretty(&sim.truth).unwrap();
    let back: Truth = serde_json::from_str(&text).unwrap();
    assert_eq!(back, sim.truth);
    assert_eq!(back.att, Some(1.5));
    let dsdm = gen_dsdm(&common::dsdm_design(8)).unwrap();
    let back: Truth = serde_json::from_str(&serde_json::to_string(&dsdm.truth).unwrap()).unwrap();
    assert_eq!(back, dsdm.truth);
}

#[test]
fn explosive_parameters_are_reported() {
    let spec = DgpSpec {
        tau: 0.9,
        rho: 0.4,
        eta: 0.5,
        ..quiet(9)
    };
    assert!(stationarity_modulus(0.9, 0.4, 0.5, spec.weights.as_ref().unwrap()).unwrap() > 1.0);
    let err = gen_dsdm(&spec).unwrap_err();
    assert!(err.to_string().contains("explosive"), "{err}");
}

#[test]
fn rho_outside_interval_is_rejected() {
    let spec = DgpSpec {
        rho: 1.5,
        ..quiet(10)
    };
    assert!(matches!(
        gen_dsdm(&spec),
        Err(Error::RhoOutOfInterval { .. })
    ));
    let spec = DgpSpec {
        tau: 1.0,
        ..quiet(10)
    };
    assert!(gen_dsdm(&spec).is_err());
    let spec = DgpSpec {
        rho: 0.3,
        weights: None,
        ..quiet(10)
    };
    assert!(gen_dsdm(&spec).is_err());
}

#[test]
fn treatment_is_absorbing_with_the_requested_share() {
    let spec = DgpSpec {
        n: 40,
        treatment: TreatmentRule::Staggered {
            share: 0.25,
            first: 5,
            last: 20,
        },
        weights: Some(ring_weights(40, 2).unwrap()),
        ..quiet(11)
    };
    let sim = gen_dsdm(&spec).unwrap();
    let d = sim.panel.variable(TREATMENT).unwrap().values();
    let adopters: Vec<usize> = (0..40).filter(|&i| d.row(i).sum() > 0.0).collect();
    assert_eq!(adopters.len(), 10);
    for &i in &adopters {
        let start = (0..30).find(|&c| d[(i, c)] == 1.0).unwrap();
        assert!((5..=20).contains(&start));
        assert!((start..30).all(|c| d[(i, c)] == 1.0));
        assert_eq!(sim.truth.adoption[i], Some(sim.panel.quarters()[start]));
    }
}

#[test]
fn logit_selection_favours_high_latent_entities() {
    let spec = DgpSpec {
        n: 400,
        t: 4,
        t0: 2,
        treatment: TreatmentRule::Logit {
            share: 0.25,
            slope: 2.0,
        },
        ..Default::default()
    };
    let sim = gen_sdid(&spec).unwrap();
    let d = &sim.components.d;
    let a = &sim.components.latent;
    let (tr, co): (Vec<usize>, Vec<usize>) = (0..400).partition(|&i| d[(i, 3)] == 1.0);
    assert_eq!(tr.len(), 100);
    let m = |ix: &[usize]| ix.iter().map(|&i| a[i]).sum::<f64>() / ix.len() as f64;
    assert!(m(&tr) - m(&co) > 0.8, "{} vs {}", m(&tr), m(&co));
}

#[test]
fn student_innovations_keep_the_variance() {
    let spec = DgpSpec {
        n: 50,
        t: 200,
        innovation: Innovation::StudentT { df: 5.0 },
        treatment: TreatmentRule::None,
        weights: Some(ring_weights(50, 2).unwrap()),
        ..quiet(12)
    };
    let sim = gen_dsdm(&spec).unwrap();
    let s = common::sd(&pooled(&sim.components.eps));
    assert!((s - 1.0).abs() < 0.05, "sd {s}");
    assert!(gen_dsdm(&DgpSpec {
        innovation: Innovation::StudentT { df: 2.0 },
        ..spec
    })
    .is_err());
}

#[test]
fn sdid_panel_adds_the_effect_to_treated_cells() {
    let spec = DgpSpec {
        n: 30,
        t: 12,
        t0: 8,
        treatment: TreatmentRule::RandomShare { share: 0.2 },
        sdid: SdidVariant {
            effect: 2.5,
            trend_sd: 0.3,
            effect_lead: 2,
            ..Default::default()
        },
        ..Default::default()
    };
    let sim = gen_sdid(&spec).unwrap();
    let y = sim.panel.variable("roa").unwrap().values();
    let c = &sim.components;
    for i in 0..30 {
        let adopter = c.d[(i, 11)] == 1.0;
        for col in 0..12 {
            let shift = if adopter && col >= 6 { 2.5 } else { 0.0 };
            assert!((y[(i, col)] - c.y0[(i, col)] - shift).abs() < 1e-12);
            let trend = 0.3 * c.latent[i] * col as f64;
            assert!(
                (c.y0[(i, col)] - c.mu[i] - c.delta[col] - trend - c.eps[(i, col)]).abs() < 1e-12
            );
        }
    }
    let noiseless = gen_sdid(&DgpSpec { sigma: 0.0, ..spec }).unwrap();
    assert!(noiseless.components.eps.amax() == 0.0);
}
