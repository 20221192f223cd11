//! Entity × quarter panel data model.
//!
//! A [`PanelDataset`] is rectangular: every variable is an `N × T` matrix
//! indexed by (entity, quarter) with a per-cell [`CellFlag`]. Missing cells
//! keep a `NaN` value and a `Missing` flag; they are never silently zeroed.

mod ingest;
mod keywords;
mod quarter;
mod transform;
mod treatment;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use ingest::{ingest_panel, write_missing_report, write_panel, Schema};
pub use keywords::{count_mentions, KeywordDictionary};
pub use quarter::Quarter;
pub use transform::{apply_filter, size_split, winsorize, FilterReport, SampleFilter};
pub use treatment::{build_treatment, TreatmentAssignment, TreatmentMode};

pub const ROA: &str = "roa";
pub const ROE: &str = "roe";
pub const TREATMENT: &str = "treatment";
pub const MENTIONS: &str = "mentions";
pub const LOG_ASSETS: &str = "log_assets";

/// Reserved variable names; every other variable is a control.
pub const RESERVED: [&str; 5] = [ROA, ROE, TREATMENT, MENTIONS, LOG_ASSETS];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Roa,
    Roe,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Roa => ROA,
            Outcome::Roe => ROE,
        }
    }
}

impl std::str::FromStr for Outcome {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "roa" => Ok(Outcome::Roa),
            "roe" => Ok(Outcome::Roe),
            other => Err(invalid(format!("unknown outcome `{other}` (roa|roe)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CellFlag {
    #[default]
    Observed,
    Missing,
    Imputed,
}

/// One `N × T` panel variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    values: DMatrix<f64>,
    flags: DMatrix<CellFlag>,
}

impl Variable {
    /// Fully observed variable. Non-finite entries are flagged missing.
    pub fn from_matrix(values: DMatrix<f64>) -> Self {
        let flags = values.map(|v| {
            if v.is_finite() {
                CellFlag::Observed
            } else {
                CellFlag::Missing
            }
        });
        let values = values.map(|v| if v.is_finite() { v } else { f64::NAN });
        Self { values, flags }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn flags(&self) -> &DMatrix<CellFlag> {
        &self.flags
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    pub fn is_missing(&self, i: usize, t: usize) -> bool {
        self.flags[(i, t)] == CellFlag::Missing
    }

    pub fn n_missing(&self) -> usize {
        self.flags
            .iter()
            .filter(|f| **f == CellFlag::Missing)
            .count()
    }

    /// Number of non-missing cells in row `i`.
    pub fn observed_in_row(&self, i: usize) -> usize {
        self.flags
            .row(i)
            .iter()
            .filter(|f| **f != CellFlag::Missing)
            .count()
    }

    /// Mean of the non-missing cells of row `i`, `NaN` if none.
    pub fn row_mean(&self, i: usize) -> f64 {
        let (sum, cnt) = (0..self.values.ncols())
            .filter(|&t| !self.is_missing(i, t))
            .fold((0.0, 0usize), |(s, c), t| (s + self.values[(i, t)], c + 1));
        if cnt == 0 {
            f64::NAN
        } else {
            sum / cnt as f64
        }
    }

    /// Replace missing cells with the entity's time mean and flag them.
    pub fn impute_entity_means(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.values.nrows() {
            let m = self.row_mean(i);
            for t in 0..self.values.ncols() {
                if self.is_missing(i, t) && m.is_finite() {
                    out.values[(i, t)] = m;
                    out.flags[(i, t)] = CellFlag::Imputed;
                }
            }
        }
        out
    }

    pub(crate) fn with_values(&self, values: DMatrix<f64>) -> Self {
        Self {
            values,
            flags: self.flags.clone(),
        }
    }

    pub(crate) fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            values: self.values.select_rows(rows),
            flags: self.flags.select_rows(rows),
        }
    }

    pub(crate) fn from_parts(values: DMatrix<f64>, flags: DMatrix<CellFlag>) -> Self {
        Self { values, flags }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

/// Balanced entity × quarter panel.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    entity_ids: Vec<String>,
    quarters: Vec<Quarter>,
    variables: BTreeMap<String, Variable>,
    coordinates: Option<Vec<GeoPoint>>,
    sdid_excluded: Vec<bool>,
}

impl PanelDataset {
    pub fn new(entity_ids: Vec<String>, quarters: Vec<Quarter>) -> Result<Self> {
        if quarters.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("quarter labels must be strictly increasing"));
        }
        let mut seen = std::collections::HashSet::new();
        for e in &entity_ids {
            if !seen.insert(e) {
                return Err(invalid(format!("duplicate entity id `{e}`")));
            }
        }
        let n = entity_ids.len();
        Ok(Self {
            entity_ids,
            quarters,
            variables: BTreeMap::new(),
            coordinates: None,
            sdid_excluded: vec![false; n],
        })
    }

    pub fn n(&self) -> usize {
        self.entity_ids.len()
    }

    pub fn t(&self) -> usize {
        self.quarters.len()
    }

    pub fn entity_ids(&self) -> &[String] {
        &self.entity_ids
    }

    pub fn quarters(&self) -> &[Quarter] {
        &self.quarters
    }

    pub fn quarter_index(&self, q: Quarter) -> Option<usize> {
        self.quarters.binary_search(&q).ok()
    }

    pub fn with_variable(mut self, name: &str, var: Variable) -> Result<Self> {
        if var.shape() != (self.n(), self.t()) {
            return Err(invalid(format!(
                "variable `{name}` has shape {:?}, panel is {}×{}",
                var.shape(),
                self.n(),
                self.t()
            )));
        }
        if name == TREATMENT
            && var
                .values()
                .iter()
                .zip(var.flags().iter())
                .any(|(v, f)| *f != CellFlag::Missing && *v != 0.0 && *v != 1.0)
        {
            return Err(invalid("treatment must be binary 0/1"));
        }
        self.variables.insert(name.to_string(), var);
        Ok(self)
    }

    pub fn with_coordinates(mut self, coords: Vec<GeoPoint>) -> Result<Self> {
        if coords.len() != self.n() {
            return Err(invalid("one coordinate pair per entity required"));
        }
        self.coordinates = Some(coords);
        Ok(self)
    }

    pub fn with_sdid_excluded(mut self, excluded: Vec<bool>) -> Result<Self> {
        if excluded.len() != self.n() {
            return Err(invalid("one exclusion flag per entity required"));
        }
        self.sdid_excluded = excluded;
        Ok(self)
    }

    pub fn variable(&self, name: &str) -> Option<&Variable> {
        self.variables.get(name)
    }

    pub fn require(&self, name: &str) -> Result<&Variable> {
        self.variable(name)
            .ok_or_else(|| invalid(format!("panel has no variable `{name}`")))
    }

    pub fn variables(&self) -> &BTreeMap<String, Variable> {
        &self.variables
    }

    pub fn outcome(&self, outcome: Outcome) -> Result<&Variable> {
        self.require(outcome.name())
    }

    pub fn treatment(&self) -> Option<&Variable> {
        self.variable(TREATMENT)
    }

    /// Control names: every non-reserved variable, in name order.
    pub fn control_names(&self) -> Vec<&str> {
        self.variables
            .keys()
            .map(String::as_str)
            .filter(|k| !RESERVED.contains(k))
            .collect()
    }

    pub fn coordinates(&self) -> Option<&[GeoPoint]> {
        self.coordinates.as_deref()
    }

    pub fn sdid_excluded(&self) -> &[bool] {
        &self.sdid_excluded
    }

    /// Per-entity time mean of observed `log_assets`.
    pub fn avg_log_assets(&self) -> Option<Vec<f64>> {
        let v = self.variable(LOG_ASSETS)?;
        Some((0..self.n()).map(|i| v.row_mean(i)).collect())
    }

    /// Entity `i` is an adopter if any observed treatment cell is 1.
    pub fn adopters(&self) -> Vec<bool> {
        match self.treatment() {
            None => vec![false; self.n()],
            Some(d) => (0..self.n())
                .map(|i| (0..self.t()).any(|t| !d.is_missing(i, t) && d.values()[(i, t)] > 0.5))
                .collect(),
        }
    }

    /// Sub-panel of the given entity rows (in the given order).
    pub fn select_entities(&self, rows: &[usize]) -> Self {
        Self {
            entity_ids: rows.iter().map(|&i| self.entity_ids[i].clone()).collect(),
            quarters: self.quarters.clone(),
            variables: self
                .variables
                .iter()
                .map(|(k, v)| (k.clone(), v.select_rows(rows)))
                .collect(),
            coordinates: self
                .coordinates
                .as_ref()
                .map(|c| rows.iter().map(|&i| c[i]).collect()),
            sdid_excluded: rows.iter().map(|&i| self.sdid_excluded[i]).collect(),
        }
    }

    /// Copy with every missing cell mean-imputed within entity.
    pub fn impute_missing(&self) -> Self {
        let mut out = self.clone();
        for v in out.variables.values_mut() {
            *v = v.impute_entity_means();
        }
        out
    }

    /// Entities with every listed variable fully observed.
    pub fn complete_entities(&self, names: &[&str]) -> Result<Vec<usize>> {
        let vars: Vec<&Variable> = names
            .iter()
            .map(|n| self.require(n))
            .collect::<Result<_>>()?;
        Ok((0..self.n())
            .filter(|&i| {
                vars.iter()
                    .all(|v| v.flags().row(i).iter().all(|f| *f == CellFlag::Observed))
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> Quarter {
        s.parse().unwrap()
    }

    #[test]
    fn shape_is_enforced() {
        let p = PanelDataset::new(vec!["a".into(), "b".into()], vec![q("2018Q1"), q("2018Q2")])
            .unwrap();
        let bad = Variable::from_matrix(DMatrix::zeros(3, 2));
        assert!(p.clone().with_variable(ROA, bad).is_err());
        let ok = Variable::from_matrix(DMatrix::zeros(2, 2));
        assert!(p.with_variable(ROA, ok).is_ok());
    }

    #[test]
    fn quarters_must_increase() {
        assert!(PanelDataset::new(vec!["a".into()], vec![q("2018Q2"), q("2018Q1")]).is_err());
    }

    #[test]
    fn imputation_flags_cells() {
        let m = DMatrix::from_row_slice(1, 3, &[1.0, f64::NAN, 3.0]);
        let v = Variable::from_matrix(m).impute_entity_means();
        assert_eq!(v.values()[(0, 1)], 2.0);
        assert_eq!(v.flags()[(0, 1)], CellFlag::Imputed);
        assert_eq!(v.n_missing(), 0);
    }

    #[test]
    fn avg_log_assets_is_row_mean_of_observed() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 5.0, f64::NAN, 7.0]);
        let p = PanelDataset::new(
            vec!["a".into(), "b".into()],
            q("2018Q1").range_inclusive(q("2018Q3")),
        )
        .unwrap()
        .with_variable(LOG_ASSETS, Variable::from_matrix(m))
        .unwrap();
        assert_eq!(p.avg_log_assets().unwrap(), vec![2.0, 6.0]);
    }
}
