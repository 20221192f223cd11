//! Direct, indirect and total effects of the treatment through the spatial
//! multiplier `M = (I − ρW)⁻¹(βI + θW)`:
//! direct = tr(M)/N, total = ι'Mι/N, indirect = total − direct.
//!
//! These are contemporaneous effects; τ and η do not enter.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsdm::{DsdmFit, Estimator};
use crate::error::{invalid, Error, Result};
use crate::numeric::{psd_factor, sample_sd};
use crate::rng::seeded;
use crate::weights::WeightMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectsMethod {
    /// Draws from `Normal(estimate, vcov)`.
    Delta,
    /// One evaluation per stored posterior draw.
    PosteriorSim,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Effects {
    pub direct: f64,
    pub indirect: f64,
    pub total: f64,
}

impl Effects {
    /// `indirect / total`, `None` when the total is 0.
    pub fn ratio(&self) -> Option<f64> {
        (self.total != 0.0).then(|| self.indirect / self.total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectsSe {
    pub direct: f64,
    pub indirect: f64,
    pub total: f64,
    pub ratio: f64,
    pub method: EffectsMethod,
    /// Number of parameter draws behind the standard errors.
    pub draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectsDecomposition {
    pub direct: f64,
    pub indirect: f64,
    pub total: f64,
    pub ratio_indirect_total: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub se: Option<EffectsSe>,
}

/// Effects at given `(ρ, β, θ)`.
pub fn effects_at(rho: f64, beta: f64, theta: f64, w: &WeightMatrix) -> Result<Effects> {
    let (lo, hi) = w.rho_interval()?;
    if !(rho > lo && rho < hi) {
        return Err(Error::RhoOutOfInterval {
            rho,
            lower: lo,
            upper: hi,
        });
    }
    let n = w.n() as f64;
    // tr((I − ρW)⁻¹) and tr((I − ρW)⁻¹W) from the spectrum
    let one = Complex::new(1.0, 0.0);
    let (mut tr_s, mut tr_sw) = (0.0, 0.0);
    for &l in &w.spectrum()?.eigenvalues {
        let inv = one / (one - l * rho);
        tr_s += inv.re;
        tr_sw += (inv * l).re;
    }
    let direct = (beta * tr_s + theta * tr_sw) / n;
    let total = if w.is_row_normalized() {
        (beta + theta) / (1.0 - rho)
    } else {
        let a = DMatrix::identity(w.n(), w.n()) - w.matrix() * rho;
        let ones = DVector::from_element(w.n(), 1.0);
        let rhs = &ones * beta + w.lag(&ones) * theta;
        let x = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("I − ρW is singular".into()))?;
        x.sum() / n
    };
    Ok(Effects {
        direct,
        indirect: total - direct,
        total,
    })
}

fn point(fit: &DsdmFit) -> (f64, f64, f64) {
    (fit.rho(), fit.beta(), fit.theta())
}

/// Point decomposition at the fit's estimates.
pub fn decompose(fit: &DsdmFit, w: &WeightMatrix) -> Result<EffectsDecomposition> {
    let (rho, beta, theta) = point(fit);
    let e = effects_at(rho, beta, theta, w)?;
    Ok(EffectsDecomposition {
        direct: e.direct,
        indirect: e.indirect,
        total: e.total,
        ratio_indirect_total: e.ratio(),
        se: None,
    })
}

fn summarize(draws: &[Effects], method: EffectsMethod) -> EffectsSe {
    let col = |f: fn(&Effects) -> f64| sample_sd(&draws.iter().map(f).collect::<Vec<_>>());
    let ratios: Vec<f64> = draws.iter().filter_map(Effects::ratio).collect();
    EffectsSe {
        direct: col(|e| e.direct),
        indirect: col(|e| e.indirect),
        total: col(|e| e.total),
        ratio: if ratios.len() >= 2 {
            sample_sd(&ratios)
        } else {
            f64::NAN
        },
        method,
        draws: draws.len(),
    }
}

/// Standard errors with the method that matches the fit's estimator.
pub fn effects_uncertainty(
    fit: &DsdmFit,
    w: &WeightMatrix,
    reps: usize,
    seed: u64,
) -> Result<EffectsSe> {
    let method = match fit.estimator {
        Estimator::Bayes if fit.draws.is_some() => EffectsMethod::PosteriorSim,
        _ => EffectsMethod::Delta,
    };
    effects_uncertainty_with(fit, w, method, reps, seed)
}

/// Standard errors by an explicit method. `reps` is ignored for posterior
/// simulation, which uses every stored draw.
pub fn effects_uncertainty_with(
    fit: &DsdmFit,
    w: &WeightMatrix,
    method: EffectsMethod,
    reps: usize,
    seed: u64,
) -> Result<EffectsSe> {
    let idx = [1usize, 3, 4];
    let params: Vec<[f64; 3]> = match method {
        EffectsMethod::PosteriorSim => {
            let d = fit
                .draws
                .as_ref()
                .ok_or_else(|| invalid("posterior simulation needs stored draws"))?;
            (0..d.nrows()).map(|r| idx.map(|c| d[(r, c)])).collect()
        }
        EffectsMethod::Delta => {
            let k = fit.estimates.len();
            if fit.vcov.shape() != (k, k) || fit.vcov.iter().any(|v| !v.is_finite()) {
                return Err(invalid(
                    "fit has neither a usable covariance matrix nor posterior draws",
                ));
            }
            if reps < 2 {
                return Err(invalid("need at least 2 replications"));
            }
            let sub = DMatrix::from_fn(3, 3, |i, j| fit.vcov[(idx[i], idx[j])]);
            let l = psd_factor(&sub);
            let mean = idx.map(|c| fit.estimates[c]);
            let (lo, hi) = w.rho_interval()?;
            let mut rng = seeded(seed);
            let mut out = Vec::with_capacity(reps);
            let mut attempts = 0;
            while out.len() < reps {
                attempts += 1;
                if attempts > 10 * reps {
                    return Err(Error::NonConvergence {
                        what: "delta-method draws",
                        iterations: attempts - 1,
                        detail: format!(
                            "only {} of {reps} draws had rho inside ({lo}, {hi})",
                            out.len()
                        ),
                    });
                }
                let z: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
                let p: [f64; 3] = std::array::from_fn(|i| {
                    mean[i] + (0..3).map(|j| l[(i, j)] * z[j]).sum::<f64>()
                });
                if p[0] > lo && p[0] < hi {
                    out.push(p);
                }
            }
            out
        }
    };
    if params.len() < 2 {
        return Err(invalid("need at least 2 draws"));
    }
    w.spectrum()?;
    let effects = params
        .par_iter()
        .map(|p| effects_at(p[0], p[1], p[2], w))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(&effects, method))
}

/// Point decomposition plus standard errors.
pub fn decompose_with_uncertainty(
    fit: &DsdmFit,
    w: &WeightMatrix,
    reps: usize,
    seed: u64,
) -> Result<EffectsDecomposition> {
    let mut d = decompose(fit, w)?;
    d.se = Some(effects_uncertainty(fit, w, reps, seed)?);
    Ok(d)
}
