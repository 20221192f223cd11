//! Dynamic spatial Durbin model with two-way fixed effects:
//!
//! `Y_t = τY_{t−1} + ρWY_t + ηWY_{t−1} + βD_t + θWD_t + ΓX_t + μ + δ_t ι + ε_t`
//!
//! Three estimators share one likelihood: concentrated MLE, QMLE with a
//! sandwich covariance, and a Metropolis-within-Gibbs sampler.
//!
//! Prior note for [`fit_bayes`]: `Normal(0, 10)` on β, θ, γ means variance
//! 10 (sd √10). `Inverse-Gamma(0.01, 0.01)` on σ² is shape/scale with density
//! ∝ x^(−a−1) e^(−b/x).

mod bayes;
mod bias;
mod coupling;
mod data;
mod likelihood;
mod mle;
pub(crate) mod params;

use nalgebra::Complex;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numeric::{quantile_sorted, serde_matrix, stars, two_sided_p};
use crate::panel::{Outcome, PanelDataset};
use crate::weights::WeightMatrix;

pub use bayes::{fit_bayes, fit_bayes_data, McmcConfig};
pub use coupling::coupling_correlation;
pub use data::{demean_two_way, DsdmData, FixedEffects};
pub use likelihood::loglik;
pub use mle::{fit_mle, fit_mle_data, fit_qmle, fit_qmle_data};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Mle,
    Qmle,
    Bayes,
}

impl std::str::FromStr for Estimator {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mle" => Ok(Self::Mle),
            "qmle" => Ok(Self::Qmle),
            "bayes" => Ok(Self::Bayes),
            other => Err(crate::error::invalid(format!(
                "unknown estimator `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DsdmSpec {
    pub outcome: Outcome,
    pub weights: WeightMatrix,
    pub controls: Vec<String>,
    pub fixed_effects: FixedEffects,
    pub estimator: Estimator,
    /// Remove the first-order dynamic-panel bias (MLE and QMLE only).
    pub bias_correction: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub line_search_iterations: usize,
    pub pseudo_inverse: bool,
    /// Maximizer before the dynamic-panel bias correction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncorrected: Option<Vec<f64>>,
    pub rho_acceptance: Option<f64>,
    pub rho_step: Option<f64>,
    /// Split-chain potential scale reduction per parameter (bayes only).
    pub rhat: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Estimated parameters `(τ, ρ, η, β, θ, γ…, σ²)` with their covariance.
/// For the Bayesian estimator `estimates` are posterior means, `vcov` the
/// posterior covariance and `draws` the post-burn-in sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsdmFit {
    pub estimator: Estimator,
    pub param_names: Vec<String>,
    pub estimates: Vec<f64>,
    #[serde(with = "serde_matrix")]
    pub vcov: DMatrix<f64>,
    pub loglik: f64,
    #[serde(
        with = "serde_matrix::option",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub draws: Option<DMatrix<f64>>,
    pub rho_interval: (f64, f64),
    pub n_entities: usize,
    pub n_periods: usize,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRow {
    pub name: String,
    pub estimate: f64,
    /// Standard error, or posterior sd for the Bayesian fit.
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
    pub p_value: f64,
    pub stars: String,
}

impl DsdmFit {
    pub fn tau(&self) -> f64 {
        self.estimates[params::TAU]
    }
    pub fn rho(&self) -> f64 {
        self.estimates[params::RHO]
    }
    pub fn eta(&self) -> f64 {
        self.estimates[params::ETA]
    }
    pub fn beta(&self) -> f64 {
        self.estimates[params::BETA]
    }
    pub fn theta(&self) -> f64 {
        self.estimates[params::THETA]
    }
    pub fn gamma(&self) -> &[f64] {
        &self.estimates[5..self.estimates.len() - 1]
    }
    pub fn sigma2(&self) -> f64 {
        self.estimates[self.estimates.len() - 1]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.param_names.iter().position(|n| n == name)
    }

    pub fn se(&self) -> Vec<f64> {
        (0..self.estimates.len())
            .map(|i| self.vcov[(i, i)].max(0.0).sqrt())
            .collect()
    }

    /// One row per parameter: estimate, SE, 95% interval, p-value, stars.
    /// Bayesian intervals are equal-tailed credible intervals and the
    /// p-value is twice the smaller posterior tail mass at zero, so a
    /// coefficient is significant at 5% exactly when its interval excludes 0.
    pub fn table(&self) -> Vec<ParamRow> {
        let se = self.se();
        (0..self.estimates.len())
            .map(|i| {
                let est = self.estimates[i];
                let (lower, upper, p) = match &self.draws {
                    Some(d) => {
                        let mut col: Vec<f64> = d.column(i).iter().copied().collect();
                        col.sort_by(f64::total_cmp);
                        let pos =
                            col.iter().filter(|v| **v > 0.0).count() as f64 / col.len() as f64;
                        (
                            quantile_sorted(&col, 0.025),
                            quantile_sorted(&col, 0.975),
                            (2.0 * pos.min(1.0 - pos)).min(1.0),
                        )
                    }
                    None => {
                        let p = if se[i] > 0.0 {
                            two_sided_p(est / se[i])
                        } else {
                            f64::NAN
                        };
                        (est - 1.96 * se[i], est + 1.96 * se[i], p)
                    }
                };
                ParamRow {
                    name: self.param_names[i].clone(),
                    estimate: est,
                    se: se[i],
                    lower,
                    upper,
                    p_value: p,
                    stars: if p.is_nan() {
                        String::new()
                    } else {
                        stars(p).to_string()
                    },
                }
            })
            .collect()
    }
}

/// Largest modulus of the companion map `(τ + ηλ) / (1 − ρλ)` over the
/// spectrum of `W`; the process is stationary when it is below 1.
pub fn stationarity_modulus(tau: f64, rho: f64, eta: f64, w: &WeightMatrix) -> Result<f64> {
    let one = Complex::new(1.0, 0.0);
    Ok(w.spectrum()?
        .eigenvalues
        .iter()
        .map(|&l| ((l * eta + tau) / (one - l * rho)).norm())
        .fold(0.0, f64::max))
}

/// Run the estimator named in `spec`.
pub fn fit(spec: &DsdmSpec, panel: &PanelDataset, mcmc: &McmcConfig) -> Result<DsdmFit> {
    match spec.estimator {
        Estimator::Mle => fit_mle(spec, panel),
        Estimator::Qmle => fit_qmle(spec, panel),
        Estimator::Bayes => fit_bayes(spec, panel, mcmc),
    }
}

pub(crate) fn common_warnings(
    data: &DsdmData,
    tau: f64,
    rho: f64,
    eta: f64,
    w: &WeightMatrix,
) -> Vec<String> {
    let mut out = Vec::new();
    if data.n_entities() < 10 || data.periods() + 1 < 5 {
        out.push(format!(
            "panel {}×{} is below the recommended N >= 10, T >= 5",
            data.n_entities(),
            data.periods() + 1
        ));
    }
    if let Ok(m) = stationarity_modulus(tau, rho, eta, w) {
        if m >= 1.0 {
            out.push(format!(
                "estimated dynamics are non-stationary (modulus {m:.4} >= 1)"
            ));
        }
    }
    out
}
