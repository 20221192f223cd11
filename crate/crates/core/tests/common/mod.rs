//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spillover::dsdm::{DsdmData, FixedEffects};
use spillover::panel::PanelDataset;
use spillover::simulate::{ring_weights, DgpSpec, TreatmentRule};
use spillover::weights::{row_normalize, WeightKind, WeightMatrix};

pub const DSDM_TRUTH: [f64; 5] = [0.5, 0.4, -0.2, 0.3, 0.5];

/// Random nonnegative matrix with roughly `density` nonzero off-diagonal
/// entries, every row nonempty, row-normalized.
pub fn random_weights(n: usize, density: f64, seed: u64) -> WeightMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = DMatrix::from_fn(n, n, |i, j| {
        if i != j && rng.random::<f64>() < density {
            rng.random::<f64>() + 0.05
        } else {
            0.0
        }
    });
    for i in 0..n {
        let j = (i + 1) % n;
        if raw.row(i).sum() == 0.0 {
            raw[(i, j)] = 1.0;
        }
    }
    row_normalize(&raw, WeightKind::Custom, None).unwrap()
}

/// The recovery design: N = 50, T = 40, (τ, ρ, η, β, θ) = (0.5, 0.4, −0.2,
/// 0.3, 0.5), σ = 1, one control with γ = 0.2.
pub fn dsdm_design(seed: u64) -> DgpSpec {
    DgpSpec {
        n: 50,
        t: 40,
        tau: DSDM_TRUTH[0],
        rho: DSDM_TRUTH[1],
        eta: DSDM_TRUTH[2],
        beta: DSDM_TRUTH[3],
        theta: DSDM_TRUTH[4],
        gamma: vec![0.2],
        sigma: 1.0,
        treatment: TreatmentRule::Staggered {
            share: 0.5,
            first: 4,
            last: 36,
        },
        weights: Some(ring_weights(50, 2).unwrap()),
        seed,
        ..Default::default()
    }
}

pub fn dsdm_data(panel: &PanelDataset, w: &WeightMatrix) -> DsdmData {
    let y = panel.variable("roa").unwrap().values().clone();
    let d = panel.variable("treatment").unwrap().values().clone();
    let controls: Vec<(String, DMatrix<f64>)> = panel
        .control_names()
        .into_iter()
        .map(|c| (c.to_string(), panel.variable(c).unwrap().values().clone()))
        .collect();
    DsdmData::from_matrices(&y, &d, &controls, w, FixedEffects::Both).unwrap()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}
