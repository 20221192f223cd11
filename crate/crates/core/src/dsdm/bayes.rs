//! Metropolis-within-Gibbs sampler.
//!
//! Each sweep draws
//! 1. `b = (τ, η, β, θ, γ)` jointly from its Gaussian full conditional, with
//!    the Uniform(−1, 1) priors on τ and η imposed by rejection;
//! 2. ρ by random-walk Metropolis on the Jacobian term minus `SSR/(2σ²)`;
//! 3. σ² from its inverse-gamma full conditional.
//!
//! All conditionals are evaluated from cross-product sufficient statistics,
//! so a sweep costs O(k² + N) regardless of the panel length.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::data::DsdmData;
use super::likelihood::{jacobian, loglik};
use super::params::ParamLayout;
use super::{common_warnings, Diagnostics, DsdmFit, DsdmSpec, Estimator};
use crate::error::{invalid, Error, Result};
use crate::panel::PanelDataset;
use crate::rng::{seeded, Rng};
use crate::weights::WeightMatrix;

/// Prior variance of β, θ and γ.
pub const COEF_PRIOR_VAR: f64 = 10.0;
pub const SIGMA2_PRIOR_SHAPE: f64 = 0.01;
pub const SIGMA2_PRIOR_SCALE: f64 = 0.01;
const TARGET_ACCEPTANCE: f64 = 0.3;
const ADAPT_BATCH: usize = 50;
const MAX_REDRAWS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    /// Total sweeps including burn-in.
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Initial random-walk sd for ρ.
    pub rho_step: f64,
    /// Tune `rho_step` toward 30% acceptance during burn-in.
    pub adapt: bool,
    /// Test hook: drop the likelihood and sample the prior.
    #[serde(default)]
    pub prior_only: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            burn_in: 5_000,
            seed: 42,
            rho_step: 0.05,
            adapt: true,
            prior_only: false,
        }
    }
}

struct Stats {
    ztz: DMatrix<f64>,
    zty: DVector<f64>,
    ztwy: DVector<f64>,
    yty: f64,
    ytwy: f64,
    wywy: f64,
    n_obs: f64,
}

impl Stats {
    fn new(d: &DsdmData) -> Self {
        let zt = d.z.transpose();
        Self {
            ztz: &zt * &d.z,
            zty: &zt * &d.y,
            ztwy: &zt * &d.wy,
            yty: d.y.norm_squared(),
            ytwy: d.y.dot(&d.wy),
            wywy: d.wy.norm_squared(),
            n_obs: d.eff_obs,
        }
    }

    fn zty_rho(&self, rho: f64) -> DVector<f64> {
        &self.zty - &self.ztwy * rho
    }

    fn ssr(&self, rho: f64, b: &DVector<f64>) -> f64 {
        let yy = self.yty - 2.0 * rho * self.ytwy + rho * rho * self.wywy;
        (yy - 2.0 * b.dot(&self.zty_rho(rho)) + b.dot(&(&self.ztz * b))).max(0.0)
    }
}

fn normal(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn inv_gamma(rng: &mut Rng, shape: f64, scale: f64) -> f64 {
    let g = Gamma::new(shape, 1.0 / scale).expect("positive gamma parameters");
    for _ in 0..MAX_REDRAWS {
        let v = 1.0 / g.sample(rng);
        if v.is_finite() && v > 0.0 {
            return v;
        }
    }
    // shape this small only occurs when sampling the prior
    scale / shape
}

fn split_rhat(chain: &[f64]) -> f64 {
    let n = chain.len() / 2;
    if n < 2 {
        return f64::NAN;
    }
    let halves = [&chain[..n], &chain[n..2 * n]];
    let means: Vec<f64> = halves
        .iter()
        .map(|h| h.iter().sum::<f64>() / n as f64)
        .collect();
    let vars: Vec<f64> = halves
        .iter()
        .zip(&means)
        .map(|(h, m)| h.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64)
        .collect();
    let w = 0.5 * (vars[0] + vars[1]);
    let gm = 0.5 * (means[0] + means[1]);
    let b = n as f64 * ((means[0] - gm).powi(2) + (means[1] - gm).powi(2));
    if w <= 0.0 {
        return 1.0;
    }
    let var_plus = (n - 1) as f64 / n as f64 * w + b / n as f64;
    (var_plus / w).sqrt()
}

/// Bayesian fit on prepared data.
pub fn fit_bayes_data(data: &DsdmData, w: &WeightMatrix, cfg: &McmcConfig) -> Result<DsdmFit> {
    if cfg.burn_in >= cfg.iterations {
        return Err(invalid("burn_in must be smaller than iterations"));
    }
    if !(cfg.rho_step > 0.0) {
        return Err(invalid("rho_step must be positive"));
    }
    let k = data.n_regressors();
    let layout = ParamLayout::new(k - 4);
    let stats = Stats::new(data);
    let (lo, hi) = w.rho_interval()?;
    let (rho_lo, rho_hi) = (lo.max(-1.0), hi.min(1.0));
    let mut rng = seeded(cfg.seed);

    let prior_prec = DVector::from_fn(k, |i, _| if i < 2 { 0.0 } else { 1.0 / COEF_PRIOR_VAR });
    let in_support = |b: &DVector<f64>| b[0].abs() < 1.0 && b[1].abs() < 1.0;

    let mut rho = 0.0;
    let mut b = DVector::zeros(k);
    let mut sigma2 = 1.0;
    if !cfg.prior_only {
        if let Some(ch) = stats.ztz.clone().cholesky() {
            b = ch.solve(&stats.zty);
            b[0] = b[0].clamp(-0.99, 0.99);
            b[1] = b[1].clamp(-0.99, 0.99);
        }
        sigma2 = (stats.ssr(rho, &b) / stats.n_obs).max(1e-8);
    }
    let log_target = |rho: f64, b: &DVector<f64>, s2: f64| -> f64 {
        jacobian(data, w, rho) - stats.ssr(rho, b) / (2.0 * s2)
    };

    let keep = cfg.iterations - cfg.burn_in;
    let mut draws = DMatrix::zeros(keep, layout.len());
    let mut step = cfg.rho_step;
    let (mut batch_acc, mut batch_n) = (0usize, 0usize);
    let (mut post_acc, mut post_n) = (0usize, 0usize);
    let mut coef_failures = 0usize;

    for it in 0..cfg.iterations {
        // 1. coefficients
        if cfg.prior_only {
            b[0] = rng.random_range(-1.0..1.0);
            b[1] = rng.random_range(-1.0..1.0);
            for j in 2..k {
                b[j] = COEF_PRIOR_VAR.sqrt() * normal(&mut rng);
            }
        } else {
            let mut prec = &stats.ztz / sigma2;
            for j in 0..k {
                prec[(j, j)] += prior_prec[j];
            }
            let ch = prec.cholesky().ok_or_else(|| {
                Error::Numerical("conditional precision not positive definite".into())
            })?;
            let mean = ch.solve(&(stats.zty_rho(rho) / sigma2));
            let lt = ch.l().transpose();
            let mut accepted = false;
            for _ in 0..MAX_REDRAWS {
                let u = DVector::from_fn(k, |_, _| normal(&mut rng));
                let cand = &mean
                    + lt.clone()
                        .solve_upper_triangular(&u)
                        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
                if in_support(&cand) {
                    b = cand;
                    accepted = true;
                    break;
                }
            }
            if !accepted {
                coef_failures += 1;
            }
        }

        // 2. rho
        let prop = rho + step * normal(&mut rng);
        let mut acc = false;
        if prop > rho_lo && prop < rho_hi {
            let log_ratio = if cfg.prior_only {
                0.0
            } else {
                log_target(prop, &b, sigma2) - log_target(rho, &b, sigma2)
            };
            if log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio {
                rho = prop;
                acc = true;
            }
        }
        if it < cfg.burn_in {
            batch_acc += usize::from(acc);
            batch_n += 1;
            if cfg.adapt && batch_n == ADAPT_BATCH {
                let rate = batch_acc as f64 / batch_n as f64;
                step = (step * (rate - TARGET_ACCEPTANCE).exp()).clamp(1e-6, 1.0);
                batch_acc = 0;
                batch_n = 0;
            }
        } else {
            post_acc += usize::from(acc);
            post_n += 1;
        }

        // 3. sigma2
        sigma2 = if cfg.prior_only {
            inv_gamma(&mut rng, SIGMA2_PRIOR_SHAPE, SIGMA2_PRIOR_SCALE)
        } else {
            inv_gamma(
                &mut rng,
                SIGMA2_PRIOR_SHAPE + 0.5 * stats.n_obs,
                SIGMA2_PRIOR_SCALE + 0.5 * stats.ssr(rho, &b),
            )
        };

        if it >= cfg.burn_in {
            let row = layout.join(rho, &b, sigma2);
            draws.set_row(it - cfg.burn_in, &DVector::from_vec(row).transpose());
        }
    }

    let p = layout.len();
    let means: Vec<f64> = (0..p).map(|j| draws.column(j).mean()).collect();
    let mut vcov = DMatrix::zeros(p, p);
    for r in 0..keep {
        for i in 0..p {
            for j in 0..=i {
                vcov[(i, j)] += (draws[(r, i)] - means[i]) * (draws[(r, j)] - means[j]);
            }
        }
    }
    for i in 0..p {
        for j in 0..=i {
            let v = vcov[(i, j)] / (keep.max(2) - 1) as f64;
            vcov[(i, j)] = v;
            vcov[(j, i)] = v;
        }
    }
    let rhat: Vec<f64> = (0..p)
        .map(|j| split_rhat(&draws.column(j).iter().copied().collect::<Vec<_>>()))
        .collect();
    let acceptance = post_acc as f64 / post_n.max(1) as f64;

    let mut warnings = if cfg.prior_only {
        Vec::new()
    } else {
        common_warnings(data, means[0], means[1], means[2], w)
    };
    if !(0.1..=0.6).contains(&acceptance) {
        warnings.push(format!(
            "rho acceptance rate {acceptance:.3} outside [0.1, 0.6]"
        ));
    }
    if let Some((j, r)) = rhat.iter().enumerate().find(|(_, r)| **r > 1.1) {
        warnings.push(format!("split R-hat {r:.3} > 1.1 for parameter {j}"));
    }
    if coef_failures > 0 {
        warnings.push(format!(
            "{coef_failures} sweeps kept the previous coefficients after {MAX_REDRAWS} out-of-support draws"
        ));
    }
    for msg in &warnings {
        log::warn!("{msg}");
    }
    let ll = loglik(&means, data, w).unwrap_or(f64::NAN);
    Ok(DsdmFit {
        estimator: Estimator::Bayes,
        param_names: layout.names(data.regressor_names()),
        estimates: means,
        vcov,
        loglik: ll,
        draws: Some(draws),
        rho_interval: (lo, hi),
        n_entities: data.n_entities(),
        n_periods: data.periods(),
        diagnostics: Diagnostics {
            rho_acceptance: Some(acceptance),
            rho_step: Some(step),
            rhat,
            warnings,
            ..Default::default()
        },
    })
}

pub fn fit_bayes(spec: &DsdmSpec, panel: &PanelDataset, cfg: &McmcConfig) -> Result<DsdmFit> {
    let data = DsdmData::from_panel(panel, spec)?;
    fit_bayes_data(&data, &spec.weights, cfg)
}
