//! Gaussian log-likelihood of the demeaned dynamic spatial Durbin model
//!
//! `ln L = −(n/2) ln(2πσ²) + P·J(ρ) − ε'ε / (2σ²)`
//!
//! with `ε = ỹ − ρ·W̃y − Z̃b`, `b = (τ, η, β, θ, γ)`, and the effective
//! counts of the transformed sample: `n = (N − 1)(T' − 1)`, `P = T' − 1` and
//! `J(ρ) = ln|I − ρW| − ln(1 − ρ)` under two-way effects with row-normalized
//! `W` (`T'` is the number of periods after the lag). Without entity effects
//! `P = T'`; without time effects `n = N·P` and `J(ρ) = ln|I − ρW|`.

use nalgebra::{DMatrix, DVector};

use super::data::DsdmData;
use super::params::ParamLayout;
use crate::error::{Error, Result};
use crate::weights::WeightMatrix;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn check(rho: f64, sigma2: f64, w: &WeightMatrix) -> Result<()> {
    let (lo, hi) = w.rho_interval()?;
    if !(rho > lo && rho < hi) {
        return Err(Error::RhoOutOfInterval {
            rho,
            lower: lo,
            upper: hi,
        });
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "sigma2 must be positive, got {sigma2}"
        )));
    }
    Ok(())
}

/// `P·J(ρ)`; assumes the spectrum is cached and ρ admissible.
pub(crate) fn jacobian(data: &DsdmData, w: &WeightMatrix, rho: f64) -> f64 {
    let mut j = w.log_det_unchecked(rho);
    if data.drop_unit_root {
        j -= (1.0 - rho).ln();
    }
    data.jac_periods * j
}

/// First and second derivatives of `P·J(ρ)`.
pub(crate) fn jacobian_derivatives(data: &DsdmData, w: &WeightMatrix, rho: f64) -> (f64, f64) {
    let one = nalgebra::Complex::new(1.0, 0.0);
    let ev = &w.spectrum().expect("spectrum cached").eigenvalues;
    let (mut d1, mut d2) = (0.0, 0.0);
    for &l in ev {
        let q = l / (one - l * rho);
        d1 -= q.re;
        d2 -= (q * q).re;
    }
    if data.drop_unit_root {
        d1 += 1.0 / (1.0 - rho);
        d2 += 1.0 / ((1.0 - rho) * (1.0 - rho));
    }
    (data.jac_periods * d1, data.jac_periods * d2)
}

pub(crate) fn residuals(data: &DsdmData, rho: f64, b: &DVector<f64>) -> DVector<f64> {
    &data.y - &data.wy * rho - &data.z * b
}

/// Exact log-likelihood at the full parameter vector
/// `(τ, ρ, η, β, θ, γ…, σ²)`.
pub fn loglik(params: &[f64], data: &DsdmData, w: &WeightMatrix) -> Result<f64> {
    let layout = ParamLayout::new(data.n_regressors() - 4);
    let (rho, b, sigma2) = layout.split(params);
    check(rho, sigma2, w)?;
    let e = residuals(data, rho, &b);
    let ssr = e.norm_squared();
    if !ssr.is_finite() {
        return Err(Error::Numerical("non-finite residual".into()));
    }
    let n = data.eff_obs;
    Ok(-0.5 * n * (LN_2PI + sigma2.ln()) + jacobian(data, w, rho) - ssr / (2.0 * sigma2))
}

/// Per-period analytic score contributions, one row per period, columns in
/// parameter order.
pub(crate) fn period_scores(
    params: &[f64],
    data: &DsdmData,
    w: &WeightMatrix,
) -> Result<DMatrix<f64>> {
    let layout = ParamLayout::new(data.n_regressors() - 4);
    let (rho, b, sigma2) = layout.split(params);
    check(rho, sigma2, w)?;
    w.spectrum()?;
    let share = 1.0 / data.periods as f64;
    let djac = jacobian_derivatives(data, w, rho).0 * share;
    let n_share = data.eff_obs * share;
    let e = residuals(data, rho, &b);
    let n = data.n;
    let k = layout.len();
    let mut s = DMatrix::zeros(data.periods, k);
    for t in 0..data.periods {
        let rows = t * n..(t + 1) * n;
        let et = e.rows(rows.start, n);
        let zt = data.z.rows(rows.start, n);
        let wyt = data.wy.rows(rows.start, n);
        let gb = zt.transpose() * et / sigma2;
        let grho = djac + wyt.dot(&et) / sigma2;
        let gs = -n_share / (2.0 * sigma2) + et.norm_squared() / (2.0 * sigma2 * sigma2);
        let row = layout.join(grho, &gb, gs);
        s.set_row(t, &DVector::from_vec(row).transpose());
    }
    Ok(s)
}

/// Profile (concentrated) likelihood in ρ with `b` and `σ²` solved in
/// closed form.
#[derive(Debug, Clone)]
pub(crate) struct Profile {
    pub b0: DVector<f64>,
    pub b1: DVector<f64>,
    e0e0: f64,
    e0e1: f64,
    e1e1: f64,
    n_obs: f64,
}

impl Profile {
    pub fn new(data: &DsdmData) -> Result<Self> {
        let ztz = data.z.transpose() * &data.z;
        let chol = ztz
            .cholesky()
            .ok_or_else(|| Error::Collinear(data.regressor_names.clone()))?;
        let b0 = chol.solve(&(data.z.transpose() * &data.y));
        let b1 = chol.solve(&(data.z.transpose() * &data.wy));
        let e0 = &data.y - &data.z * &b0;
        let e1 = &data.wy - &data.z * &b1;
        Ok(Self {
            e0e0: e0.norm_squared(),
            e0e1: e0.dot(&e1),
            e1e1: e1.norm_squared(),
            b0,
            b1,
            n_obs: data.eff_obs,
        })
    }

    pub fn ssr(&self, rho: f64) -> f64 {
        self.e0e0 - 2.0 * rho * self.e0e1 + rho * rho * self.e1e1
    }

    pub fn coefficients(&self, rho: f64) -> DVector<f64> {
        &self.b0 - &self.b1 * rho
    }

    pub fn value(&self, data: &DsdmData, rho: f64, w: &WeightMatrix) -> f64 {
        let s2 = self.ssr(rho) / self.n_obs;
        -0.5 * self.n_obs * (LN_2PI + s2.ln() + 1.0) + jacobian(data, w, rho)
    }

    /// First and second derivatives of the profile in ρ.
    pub fn derivatives(&self, data: &DsdmData, rho: f64, w: &WeightMatrix) -> (f64, f64) {
        let (d1, d2) = jacobian_derivatives(data, w, rho);
        let s = self.ssr(rho);
        let s1 = -2.0 * self.e0e1 + 2.0 * rho * self.e1e1;
        let s2 = 2.0 * self.e1e1;
        let g = -0.5 * self.n_obs * s1 / s + d1;
        let h = -0.5 * self.n_obs * (s2 * s - s1 * s1) / (s * s) + d2;
        (g, h)
    }
}
