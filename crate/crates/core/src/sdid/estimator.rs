use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::simplex::{solve_simplex_ridge, SimplexSolution};
use crate::error::{invalid, Result};
use crate::numeric::sample_sd;

/// Treated rows of `y` adopt at column `t0`; the remaining rows are controls.
#[derive(Debug, Clone, PartialEq)]
pub struct SdidProblem {
    /// `N × T` outcomes.
    pub y: DMatrix<f64>,
    pub treated: Vec<usize>,
    /// First post-treatment column.
    pub t0: usize,
    /// Overrides of the default regularization strengths.
    pub zeta_unit: Option<f64>,
    pub zeta_time: Option<f64>,
    /// Center the weight programs, i.e. allow a free intercept.
    pub with_intercept: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdidResult {
    pub att: f64,
    /// Bootstrap standard error; NaN until [`super::bootstrap_se`] has run.
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// Unit weights, in control order ([`SdidProblem::controls`]).
    pub omega: Vec<f64>,
    /// Time weights over the pre-treatment columns.
    pub lambda: Vec<f64>,
    pub bootstrap_draws: Vec<f64>,
    pub zeta_unit: f64,
    pub zeta_time: f64,
    pub n_treated: usize,
    pub n_control: usize,
    pub t_pre: usize,
    pub t_post: usize,
}

impl SdidResult {
    /// Attach bootstrap draws: `se` is their sd and the CI `att ± 1.96·se`.
    pub fn with_bootstrap(mut self, se: f64, draws: Vec<f64>) -> Self {
        self.se = se;
        self.ci_lower = self.att - 1.96 * se;
        self.ci_upper = self.att + 1.96 * se;
        self.bootstrap_draws = draws;
        self
    }
}

impl SdidProblem {
    pub fn new(y: DMatrix<f64>, treated: Vec<usize>, t0: usize) -> Result<Self> {
        let p = Self {
            y,
            treated,
            t0,
            zeta_unit: None,
            zeta_time: None,
            with_intercept: false,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, t) = self.y.shape();
        if self.treated.is_empty() {
            return Err(invalid("SDID needs at least one treated entity"));
        }
        if self.treated.iter().any(|&i| i >= n) {
            return Err(invalid("treated index out of range"));
        }
        let mut sorted = self.treated.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.treated.len() {
            return Err(invalid("treated indices must be distinct"));
        }
        if n - sorted.len() < 2 {
            return Err(invalid(format!(
                "SDID needs at least 2 controls, got {}",
                n - sorted.len()
            )));
        }
        if self.t0 < 2 {
            return Err(invalid(format!(
                "SDID needs at least 2 pre-periods, got {}",
                self.t0
            )));
        }
        if self.t0 >= t {
            return Err(invalid(format!(
                "treatment column {} leaves no post-period (T = {t})",
                self.t0
            )));
        }
        if self.y.iter().any(|v| !v.is_finite()) {
            return Err(invalid("SDID outcomes must be complete"));
        }
        for z in [self.zeta_unit, self.zeta_time].into_iter().flatten() {
            if !(z >= 0.0) || !z.is_finite() {
                return Err(invalid(format!(
                    "regularization must be finite and ≥ 0, got {z}"
                )));
            }
        }
        Ok(())
    }

    /// Control row indices in ascending order.
    pub fn controls(&self) -> Vec<usize> {
        let mut is_treated = vec![false; self.y.nrows()];
        for &i in &self.treated {
            is_treated[i] = true;
        }
        (0..self.y.nrows()).filter(|&i| !is_treated[i]).collect()
    }
}

/// Noise scale: sd of first differences of control outcomes over the
/// pre-treatment columns.
pub fn noise_scale(y: &DMatrix<f64>, controls: &[usize], t0: usize) -> f64 {
    let diffs: Vec<f64> = controls
        .iter()
        .flat_map(|&j| (1..t0).map(move |t| y[(j, t)] - y[(j, t - 1)]))
        .collect();
    sample_sd(&diffs)
}

/// Default strengths: `ζ_unit = (N_tr·T_post)^{1/4}·σ̂`, `ζ_time = 1e-6·σ̂`.
pub fn default_zetas(n_treated: usize, t_post: usize, sigma_hat: f64) -> (f64, f64) {
    (
        ((n_treated * t_post) as f64).powf(0.25) * sigma_hat,
        1e-6 * sigma_hat,
    )
}

fn center_columns(m: &mut DMatrix<f64>) {
    for mut c in m.column_iter_mut() {
        let mean = c.mean();
        c.add_scalar_mut(-mean);
    }
}

/// Weighted-data layer shared by the point estimate and the bootstrap: rows
/// are listed explicitly so that resampled duplicates enter as copies.
pub(crate) struct Design<'a> {
    pub y: &'a DMatrix<f64>,
    pub treated: &'a [usize],
    pub controls: &'a [usize],
    pub t0: usize,
    pub zeta_unit: Option<f64>,
    pub zeta_time: Option<f64>,
    pub with_intercept: bool,
}

pub(crate) struct Weights {
    pub omega: SimplexSolution,
    pub lambda: SimplexSolution,
    pub zeta_unit: f64,
    pub zeta_time: f64,
}

impl Design<'_> {
    fn t(&self) -> usize {
        self.y.ncols()
    }

    /// Mean of the treated rows at column `c`.
    fn treated_mean(&self, c: usize) -> f64 {
        self.treated.iter().map(|&i| self.y[(i, c)]).sum::<f64>() / self.treated.len() as f64
    }

    fn control_post_mean(&self, j: usize) -> f64 {
        let t = self.t();
        (self.t0..t).map(|c| self.y[(j, c)]).sum::<f64>() / (t - self.t0) as f64
    }

    pub fn weights(&self) -> Result<Weights> {
        let (nc, t_pre, t_post) = (self.controls.len(), self.t0, self.t() - self.t0);
        let sigma = noise_scale(self.y, self.controls, self.t0);
        let (du, dt) = default_zetas(self.treated.len(), t_post, sigma);
        let zeta_unit = self.zeta_unit.unwrap_or(du);
        let zeta_time = self.zeta_time.unwrap_or(dt);

        // unit program: pre-period trajectories, candidates are controls
        let mut a = DMatrix::from_fn(t_pre, nc, |t, k| self.y[(self.controls[k], t)]);
        let mut b = DVector::from_fn(t_pre, |t, _| self.treated_mean(t));
        if self.with_intercept {
            center_columns(&mut a);
            b.add_scalar_mut(-b.mean());
        }
        let omega = solve_simplex_ridge(&a, &b, zeta_unit * zeta_unit * t_pre as f64)?;

        // time program: control rows, candidates are pre-periods
        let mut a = DMatrix::from_fn(nc, t_pre, |k, t| self.y[(self.controls[k], t)]);
        let mut b = DVector::from_fn(nc, |k, _| self.control_post_mean(self.controls[k]));
        if self.with_intercept {
            center_columns(&mut a);
            b.add_scalar_mut(-b.mean());
        }
        let lambda = solve_simplex_ridge(&a, &b, zeta_time * zeta_time * nc as f64)?;
        Ok(Weights {
            omega,
            lambda,
            zeta_unit,
            zeta_time,
        })
    }

    /// `(Ȳ_tr,post − Σλ_t Ȳ_tr,t) − (Σω_j Ȳ_j,post − Σω_j λ_t Y_jt)`.
    pub fn att(&self, omega: &[f64], lambda: &[f64]) -> f64 {
        let t = self.t();
        let tr_post =
            (self.t0..t).map(|c| self.treated_mean(c)).sum::<f64>() / (t - self.t0) as f64;
        let tr_pre: f64 = (0..self.t0).map(|c| lambda[c] * self.treated_mean(c)).sum();
        let mut co_post = 0.0;
        let mut co_pre = 0.0;
        for (k, &j) in self.controls.iter().enumerate() {
            co_post += omega[k] * self.control_post_mean(j);
            co_pre += omega[k]
                * (0..self.t0)
                    .map(|c| lambda[c] * self.y[(j, c)])
                    .sum::<f64>();
        }
        (tr_post - tr_pre) - (co_post - co_pre)
    }

    pub fn estimate(&self) -> Result<(f64, Weights)> {
        let w = self.weights()?;
        Ok((self.att(&w.omega.weights, &w.lambda.weights), w))
    }
}

impl SdidProblem {
    pub(crate) fn design<'a>(&'a self, controls: &'a [usize]) -> Design<'a> {
        Design {
            y: &self.y,
            treated: &self.treated,
            controls,
            t0: self.t0,
            zeta_unit: self.zeta_unit,
            zeta_time: self.zeta_time,
            with_intercept: self.with_intercept,
        }
    }
}

/// Point estimate with unit and time weights; `se` and the CI are NaN.
pub fn fit_sdid(problem: &SdidProblem) -> Result<SdidResult> {
    problem.validate()?;
    let controls = problem.controls();
    let design = problem.design(&controls);
    let (att, w) = design.estimate()?;
    Ok(SdidResult {
        att,
        se: f64::NAN,
        ci_lower: f64::NAN,
        ci_upper: f64::NAN,
        omega: w.omega.weights,
        lambda: w.lambda.weights,
        bootstrap_draws: Vec::new(),
        zeta_unit: w.zeta_unit,
        zeta_time: w.zeta_time,
        n_treated: problem.treated.len(),
        n_control: controls.len(),
        t_pre: problem.t0,
        t_post: problem.y.ncols() - problem.t0,
    })
}

/// Classical two-by-two difference in differences with uniform weights.
pub fn did_estimate(problem: &SdidProblem) -> Result<f64> {
    problem.validate()?;
    let controls = problem.controls();
    let design = problem.design(&controls);
    let omega = vec![1.0 / controls.len() as f64; controls.len()];
    let lambda = vec![1.0 / problem.t0 as f64; problem.t0];
    Ok(design.att(&omega, &lambda))
}
