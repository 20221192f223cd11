use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::DsdmSpec;
use crate::error::{invalid, Error, Result};
use crate::panel::{PanelDataset, TREATMENT};
use crate::weights::WeightMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FixedEffects {
    Entity,
    Time,
    #[default]
    Both,
}

/// Within transformation: `x̃_it = x_it − x̄_i· − x̄_·t + x̄_··` for two-way
/// effects, or the one-way entity / time version.
pub fn demean_two_way(m: &DMatrix<f64>, fe: FixedEffects) -> DMatrix<f64> {
    let (n, t) = m.shape();
    let row: Vec<f64> = (0..n).map(|i| m.row(i).mean()).collect();
    let col: Vec<f64> = (0..t).map(|j| m.column(j).mean()).collect();
    let grand = m.mean();
    DMatrix::from_fn(n, t, |i, j| match fe {
        FixedEffects::Entity => m[(i, j)] - row[i],
        FixedEffects::Time => m[(i, j)] - col[j],
        FixedEffects::Both => m[(i, j)] - row[i] - col[j] + grand,
    })
}

/// Demeaned, stacked estimation arrays. Observations are ordered period-major
/// (all entities of the second quarter, then the third, ...); the first
/// quarter is consumed by the temporal lag.
///
/// Demeaning is an orthogonal projection, so the likelihood is written for
/// the transformed data: entity effects remove one period, time effects
/// remove one entity from the effective sample, and with time effects and a
/// row-normalized `W` the unit eigenvalue drops out of the Jacobian.
#[derive(Debug, Clone)]
pub struct DsdmData {
    pub(crate) n: usize,
    pub(crate) periods: usize,
    /// Effective number of periods multiplying the log-determinant.
    pub(crate) jac_periods: f64,
    /// Effective number of observations.
    pub(crate) eff_obs: f64,
    /// Subtract `ln(1 − ρ)` from the log-determinant.
    pub(crate) drop_unit_root: bool,
    pub(crate) y: DVector<f64>,
    pub(crate) wy: DVector<f64>,
    pub(crate) z: DMatrix<f64>,
    pub(crate) regressor_names: Vec<String>,
}

/// Apply `W` to every column of an `N × T` matrix.
fn lag_columns(w: &WeightMatrix, m: &DMatrix<f64>) -> DMatrix<f64> {
    w.matrix() * m
}

impl DsdmData {
    /// Build from `N × T` outcome, treatment and control matrices. Spatial
    /// lags are taken before demeaning.
    pub fn from_matrices(
        y: &DMatrix<f64>,
        d: &DMatrix<f64>,
        controls: &[(String, DMatrix<f64>)],
        w: &WeightMatrix,
        fe: FixedEffects,
    ) -> Result<Self> {
        let (n, t) = y.shape();
        if t < 3 {
            return Err(invalid(format!("need at least 3 quarters, got {t}")));
        }
        if w.n() != n {
            return Err(invalid(format!(
                "W is {}×{}, panel has N = {n}",
                w.n(),
                w.n()
            )));
        }
        if d.shape() != (n, t) || controls.iter().any(|(_, x)| x.shape() != (n, t)) {
            return Err(invalid("all panel matrices must share the outcome's shape"));
        }
        let all = std::iter::once(y)
            .chain(std::iter::once(d))
            .chain(controls.iter().map(|(_, x)| x));
        for m in all {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(invalid(
                    "DSDM requires a balanced panel without missing cells",
                ));
            }
        }
        let wy_full = lag_columns(w, y);
        let wd_full = lag_columns(w, d);
        let cur = |m: &DMatrix<f64>| m.columns(1, t - 1).into_owned();
        let prev = |m: &DMatrix<f64>| m.columns(0, t - 1).into_owned();

        let mut blocks: Vec<(String, DMatrix<f64>)> = vec![
            ("tau".into(), prev(y)),
            ("eta".into(), prev(&wy_full)),
            ("beta".into(), cur(d)),
            ("theta".into(), cur(&wd_full)),
        ];
        for (name, x) in controls {
            blocks.push((format!("gamma[{name}]"), cur(x)));
        }
        let periods = t - 1;
        let stack = |m: &DMatrix<f64>| {
            let dm = demean_two_way(m, fe);
            // column-major storage of an N × (T−1) matrix is period-major stacking
            DVector::from_column_slice(dm.as_slice())
        };
        let yv = stack(&cur(y));
        let wyv = stack(&cur(&wy_full));
        let k = blocks.len();
        let mut z = DMatrix::zeros(n * periods, k);
        for (c, (_, m)) in blocks.iter().enumerate() {
            z.set_column(c, &stack(m));
        }
        let entity_fe = matches!(fe, FixedEffects::Entity | FixedEffects::Both);
        let time_fe = matches!(fe, FixedEffects::Time | FixedEffects::Both);
        let jac_periods = (periods - usize::from(entity_fe)) as f64;
        let n_eff = (n - usize::from(time_fe)) as f64;
        let data = Self {
            n,
            periods,
            jac_periods,
            eff_obs: n_eff * jac_periods,
            drop_unit_root: time_fe && w.is_row_normalized(),
            y: yv,
            wy: wyv,
            z,
            regressor_names: blocks.into_iter().map(|(name, _)| name).collect(),
        };
        data.check_collinearity()?;
        Ok(data)
    }

    /// Build from a panel according to `spec`. Remaining missing cells are
    /// mean-imputed within entity.
    pub fn from_panel(panel: &PanelDataset, spec: &DsdmSpec) -> Result<Self> {
        let panel = panel.impute_missing();
        let y = panel.outcome(spec.outcome)?.values().clone();
        let d = panel.require(TREATMENT)?.values().clone();
        let controls = spec
            .controls
            .iter()
            .map(|c| Ok((c.clone(), panel.require(c)?.values().clone())))
            .collect::<Result<Vec<_>>>()?;
        for m in std::iter::once(&y).chain(std::iter::once(&d)) {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(invalid(
                    "an entity has no observed values for a model variable",
                ));
            }
        }
        Self::from_matrices(&y, &d, &controls, &spec.weights, spec.fixed_effects)
    }

    /// Gram–Schmidt pass over the regressor columns; columns that are
    /// (numerically) spanned by earlier ones are reported by name.
    fn check_collinearity(&self) -> Result<()> {
        let mut basis: Vec<DVector<f64>> = Vec::new();
        let mut bad = Vec::new();
        for (c, name) in self.regressor_names.iter().enumerate() {
            let col = self.z.column(c).into_owned();
            let norm0 = col.norm_squared();
            let mut r = col;
            for q in &basis {
                let proj = q.dot(&r);
                r -= q * proj;
            }
            let norm = r.norm_squared();
            if norm0 == 0.0 || norm <= 1e-10 * norm0 {
                bad.push(name.clone());
            } else {
                basis.push(r / norm.sqrt());
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Collinear(bad))
        }
    }

    pub fn n_obs(&self) -> usize {
        self.n * self.periods
    }

    /// Sample size after the fixed-effects transformation,
    /// `(N − 1)(T' − 1)` for two-way effects.
    pub fn effective_obs(&self) -> f64 {
        self.eff_obs
    }

    pub fn n_entities(&self) -> usize {
        self.n
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn regressor_names(&self) -> &[String] {
        &self.regressor_names
    }

    pub fn n_regressors(&self) -> usize {
        self.z.ncols()
    }

    /// Entity relabeling `new[k] = old[perm[k]]` applied within every period.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let map = |i: usize| (i / n) * n + perm[i % n];
        let len = self.n_obs();
        Self {
            n,
            periods: self.periods,
            jac_periods: self.jac_periods,
            eff_obs: self.eff_obs,
            drop_unit_root: self.drop_unit_root,
            y: DVector::from_fn(len, |i, _| self.y[map(i)]),
            wy: DVector::from_fn(len, |i, _| self.wy[map(i)]),
            z: DMatrix::from_fn(len, self.z.ncols(), |i, c| self.z[(map(i), c)]),
            regressor_names: self.regressor_names.clone(),
        }
    }
}
