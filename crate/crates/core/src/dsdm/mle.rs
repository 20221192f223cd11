use nalgebra::DMatrix;

use super::bias;
use super::data::DsdmData;
use super::likelihood::{loglik, period_scores, Profile};
use super::params::ParamLayout;
use super::{common_warnings, Diagnostics, DsdmFit, DsdmSpec, Estimator};
use crate::error::{Error, Result};
use crate::numeric::{hessian, symmetric_inverse};
use crate::panel::PanelDataset;
use crate::weights::WeightMatrix;

const GRID: usize = 200;
const GOLDEN_TOL: f64 = 1e-8;
const MAX_LINE_SEARCH: usize = 200;

/// Maximize the profile likelihood over the admissible ρ interval: coarse
/// grid, golden-section refinement of the best cell, then Newton polishing
/// on the analytic derivative inside the final bracket.
fn maximize_profile(prof: &Profile, data: &DsdmData, w: &WeightMatrix) -> Result<(f64, usize)> {
    let (lo, hi) = w.rho_interval()?;
    let margin = 1e-9 * (hi - lo);
    let (a0, b0) = (lo + margin, hi - margin);
    let grid: Vec<f64> = (0..=GRID)
        .map(|k| a0 + (b0 - a0) * k as f64 / GRID as f64)
        .collect();
    let vals: Vec<f64> = grid.iter().map(|&r| prof.value(data, r, w)).collect();
    let best = (0..vals.len())
        .max_by(|&i, &j| vals[i].total_cmp(&vals[j]))
        .ok_or_else(|| Error::Numerical("empty rho grid".into()))?;
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(GRID)];
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (prof.value(data, c, w), prof.value(data, d, w));
    let mut iter = 0;
    while b - a > GOLDEN_TOL {
        iter += 1;
        if iter > MAX_LINE_SEARCH {
            return Err(Error::NonConvergence {
                what: "rho golden-section search",
                iterations: MAX_LINE_SEARCH,
                detail: format!("bracket [{a}, {b}]"),
            });
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = prof.value(data, c, w);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = prof.value(data, d, w);
        }
    }
    let mut rho = 0.5 * (a + b);
    let (lo_b, hi_b) = ((a - GOLDEN_TOL).max(a0), (b + GOLDEN_TOL).min(b0));
    for _ in 0..20 {
        let (g, h) = prof.derivatives(data, rho, w);
        if !(h < 0.0) {
            break;
        }
        let next = (rho - g / h).clamp(lo_b, hi_b);
        let step = (next - rho).abs();
        rho = next;
        if step < 1e-15 {
            break;
        }
    }
    Ok((rho, iter))
}

fn point_estimates(data: &DsdmData, w: &WeightMatrix) -> Result<(Vec<f64>, usize)> {
    w.spectrum()?;
    let prof = Profile::new(data)?;
    let (rho, iters) = maximize_profile(&prof, data, w)?;
    let b = prof.coefficients(rho);
    let sigma2 = prof.ssr(rho) / data.eff_obs;
    let layout = ParamLayout::new(data.n_regressors() - 4);
    Ok((layout.join(rho, &b, sigma2), iters))
}

fn assemble(
    data: &DsdmData,
    w: &WeightMatrix,
    est: Vec<f64>,
    iters: usize,
    robust: bool,
    correct: bool,
) -> Result<DsdmFit> {
    let layout = ParamLayout::new(data.n_regressors() - 4);
    let ll = loglik(&est, data, w)?;
    let h = hessian(|p| loglik(p, data, w).unwrap_or(f64::NEG_INFINITY), &est);
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "Hessian evaluation left the admissible region".into(),
        ));
    }
    let info = -&h;
    let (inv, pinv) = symmetric_inverse(&info);
    let mut warnings = common_warnings(data, est[0], est[1], est[2], w);
    if pinv {
        warnings.push("near-singular Hessian; pseudo-inverse used".into());
    }
    let (est, uncorrected) = if correct {
        let c = bias::corrected(&est, &inv, data, w)?;
        let (lo, hi) = w.rho_interval()?;
        if !(c[1] > lo && c[1] < hi) || !(c[layout.sigma2()] > 0.0) {
            warnings.push(
                "bias correction left the admissible region; uncorrected estimates kept".into(),
            );
            (est, None)
        } else {
            (c, Some(est))
        }
    } else {
        (est, None)
    };
    let vcov = if robust {
        let s = period_scores(uncorrected.as_deref().unwrap_or(&est), data, w)?;
        let g = s.transpose() * &s;
        &inv * g * &inv
    } else {
        inv
    };
    let vcov: DMatrix<f64> = (&vcov + vcov.transpose()) * 0.5;
    for msg in &warnings {
        log::warn!("{msg}");
    }
    Ok(DsdmFit {
        estimator: if robust {
            Estimator::Qmle
        } else {
            Estimator::Mle
        },
        param_names: layout.names(data.regressor_names()),
        estimates: est,
        vcov,
        loglik: ll,
        draws: None,
        rho_interval: w.rho_interval()?,
        n_entities: data.n_entities(),
        n_periods: data.periods(),
        diagnostics: Diagnostics {
            line_search_iterations: iters,
            pseudo_inverse: pinv,
            uncorrected,
            warnings,
            ..Default::default()
        },
    })
}

/// Concentrated maximum likelihood with inverse-Hessian covariance. With
/// `bias_correction` the dynamic-panel bias of the maximizer is removed to
/// first order; the maximizer itself is kept in the diagnostics.
pub fn fit_mle_data(data: &DsdmData, w: &WeightMatrix, bias_correction: bool) -> Result<DsdmFit> {
    let (est, iters) = point_estimates(data, w)?;
    assemble(data, w, est, iters, false, bias_correction)
}

/// Same point estimates as [`fit_mle_data`] with sandwich covariance
/// `H⁻¹ G H⁻¹`, `G` the outer product of per-period scores.
pub fn fit_qmle_data(data: &DsdmData, w: &WeightMatrix, bias_correction: bool) -> Result<DsdmFit> {
    let (est, iters) = point_estimates(data, w)?;
    assemble(data, w, est, iters, true, bias_correction)
}

pub fn fit_mle(spec: &DsdmSpec, panel: &PanelDataset) -> Result<DsdmFit> {
    let data = DsdmData::from_panel(panel, spec)?;
    fit_mle_data(&data, &spec.weights, spec.bias_correction)
}

pub fn fit_qmle(spec: &DsdmSpec, panel: &PanelDataset) -> Result<DsdmFit> {
    let data = DsdmData::from_panel(panel, spec)?;
    fit_qmle_data(&data, &spec.weights, spec.bias_correction)
}
