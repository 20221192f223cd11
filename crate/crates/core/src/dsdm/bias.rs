//! First-order correction for the dynamic-panel bias that entity demeaning
//! induces in the lagged regressors.
//!
//! With `S = I − ρW`, `A = S⁻¹(τI + ηW)` and `G = (I − A)⁻¹S⁻¹`, the scores of
//! τ, η and ρ have expectations `−tr G`, `−tr WG` and `−tr WAG` at the true
//! parameters instead of 0 (traces taken on the space orthogonal to ι when
//! time effects are removed). The bias of the estimator is approximately
//! `(−H)⁻¹ E[score]`, which is subtracted.

use nalgebra::DMatrix;

use super::data::DsdmData;
use super::params::{ETA, RHO, TAU};
use crate::error::{Error, Result};
use crate::weights::WeightMatrix;

/// Expected score at `est` in parameter order, zero for exogenous terms.
pub(crate) fn expected_score(est: &[f64], data: &DsdmData, w: &WeightMatrix) -> Result<Vec<f64>> {
    let mut out = vec![0.0; est.len()];
    if data.jac_periods == data.periods as f64 {
        // no entity effects, no incidental-parameter bias
        return Ok(out);
    }
    let n = data.n;
    let (tau, rho, eta) = (est[TAU], est[RHO], est[ETA]);
    let wm = w.matrix();
    let eye = DMatrix::<f64>::identity(n, n);
    let s_inv = (&eye - wm * rho)
        .try_inverse()
        .ok_or_else(|| Error::Numerical("I − ρW is singular".into()))?;
    let a = &s_inv * (&eye * tau + wm * eta);
    let g = (&eye - &a).try_inverse().ok_or_else(|| {
        Error::Numerical("I − A is singular; the process is nonstationary".into())
    })? * &s_inv;
    let wg = wm * &g;
    let wag = wm * &a * &g;
    let trace = |m: &DMatrix<f64>| {
        let mut t = m.trace();
        if data.drop_unit_root {
            t -= m.sum() / n as f64;
        }
        t
    };
    out[TAU] = -trace(&g);
    out[ETA] = -trace(&wg);
    out[RHO] = -trace(&wag);
    Ok(out)
}

/// `est − V·E[score]` with `V` the inverse negative Hessian.
pub(crate) fn corrected(
    est: &[f64],
    inv_info: &DMatrix<f64>,
    data: &DsdmData,
    w: &WeightMatrix,
) -> Result<Vec<f64>> {
    let s = expected_score(est, data, w)?;
    let k = est.len();
    Ok((0..k)
        .map(|i| est[i] - (0..k).map(|j| inv_info[(i, j)] * s[j]).sum::<f64>())
        .collect())
}
