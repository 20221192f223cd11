use serde::{Deserialize, Serialize};

use super::{PanelDataset, Variable};
use crate::error::{invalid, Error, Result};
use crate::numeric::{nearest_rank_sorted, quantile_sorted};

/// Clip a variable at pooled lower/upper percentiles (in percent).
///
/// Bounds are the nearest order statistics `x[round((n − 1) p)]` of the pooled
/// non-missing sample, which makes the operation idempotent. Missing cells are
/// untouched.
pub fn winsorize(var: &Variable, lower_pct: f64, upper_pct: f64) -> Result<Variable> {
    if !(0.0..=100.0).contains(&lower_pct)
        || !(0.0..=100.0).contains(&upper_pct)
        || lower_pct > upper_pct
    {
        return Err(invalid(format!(
            "bad percentiles ({lower_pct}, {upper_pct})"
        )));
    }
    let (n, t) = var.shape();
    let mut pooled: Vec<f64> = (0..n)
        .flat_map(|i| (0..t).map(move |j| (i, j)))
        .filter(|&(i, j)| !var.is_missing(i, j))
        .map(|(i, j)| var.values()[(i, j)])
        .collect();
    if pooled.len() < 2 {
        return Err(Error::Empty(
            "winsorize needs at least two non-missing values".into(),
        ));
    }
    pooled.sort_by(f64::total_cmp);
    let lo = nearest_rank_sorted(&pooled, lower_pct / 100.0);
    let hi = nearest_rank_sorted(&pooled, upper_pct / 100.0);
    let values = var
        .values()
        .map(|v| if v.is_nan() { v } else { v.clamp(lo, hi) });
    Ok(var.with_values(values))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleFilter {
    pub min_quarters: usize,
    pub required_fields: Vec<String>,
}

impl Default for SampleFilter {
    fn default() -> Self {
        Self {
            min_quarters: 4,
            required_fields: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub retained: usize,
    pub dropped: usize,
    pub dropped_entities: Vec<String>,
    pub adopters: usize,
    pub controls: usize,
}

/// Keep entities with at least `min_quarters` quarters in which every
/// required field is observed.
pub fn apply_filter(
    panel: &PanelDataset,
    f: &SampleFilter,
) -> Result<(PanelDataset, FilterReport)> {
    if f.min_quarters == 0 || f.min_quarters > panel.t() {
        return Err(invalid(format!(
            "min_quarters = {} must lie in 1..={}",
            f.min_quarters,
            panel.t()
        )));
    }
    let vars: Vec<&Variable> = f
        .required_fields
        .iter()
        .map(|name| panel.require(name))
        .collect::<Result<_>>()?;
    let (keep, drop): (Vec<usize>, Vec<usize>) = (0..panel.n()).partition(|&i| {
        let complete = (0..panel.t())
            .filter(|&t| vars.iter().all(|v| !v.is_missing(i, t)))
            .count();
        complete >= f.min_quarters
    });
    if keep.is_empty() {
        return Err(Error::Empty("sample filter dropped every entity".into()));
    }
    let out = panel.select_entities(&keep);
    let adopters = out.adopters().iter().filter(|a| **a).count();
    let report = FilterReport {
        retained: keep.len(),
        dropped: drop.len(),
        dropped_entities: drop
            .iter()
            .map(|&i| panel.entity_ids()[i].clone())
            .collect(),
        adopters,
        controls: keep.len() - adopters,
    };
    Ok((out, report))
}

/// Split entities at the cross-entity `quantile` of average log assets.
/// Returns `(large, small)`; entities tied at the threshold go to `large`.
pub fn size_split(panel: &PanelDataset, quantile: f64) -> Result<(PanelDataset, PanelDataset)> {
    if panel.n() < 4 {
        return Err(invalid(format!(
            "size split needs N >= 4, got {}",
            panel.n()
        )));
    }
    let sizes = panel
        .avg_log_assets()
        .ok_or_else(|| invalid("size split requires `log_assets`"))?;
    if sizes.iter().any(|s| !s.is_finite()) {
        return Err(invalid("avg_log_assets not populated for every entity"));
    }
    let mut sorted = sizes.clone();
    sorted.sort_by(f64::total_cmp);
    let threshold = quantile_sorted(&sorted, quantile);
    let (large, small): (Vec<usize>, Vec<usize>) =
        (0..panel.n()).partition(|&i| sizes[i] >= threshold);
    Ok((panel.select_entities(&large), panel.select_entities(&small)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{Quarter, LOG_ASSETS, ROA, TREATMENT};
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn quarters(t: usize) -> Vec<Quarter> {
        let q0: Quarter = "2018Q1".parse().unwrap();
        q0.range_inclusive((0..t - 1).fold(q0, |q, _| q.next()))
    }

    fn panel_with(name: &str, m: DMatrix<f64>) -> PanelDataset {
        let ids = (0..m.nrows()).map(|i| format!("e{i:02}")).collect();
        PanelDataset::new(ids, quarters(m.ncols()))
            .unwrap()
            .with_variable(name, Variable::from_matrix(m))
            .unwrap()
    }

    #[test]
    fn winsorize_one_to_hundred() {
        let v = Variable::from_matrix(DMatrix::from_fn(1, 100, |_, j| (j + 1) as f64));
        let w = winsorize(&v, 1.0, 99.0).unwrap();
        // brute force: sorted[round(99 * 0.01)] = sorted[1] = 2, sorted[round(99 * 0.99)] = sorted[98] = 99
        assert_eq!(w.values()[(0, 0)], 2.0);
        assert_eq!(w.values()[(0, 99)], 99.0);
        for j in 1..99 {
            assert_eq!(w.values()[(0, j)], (j + 1) as f64);
        }
    }

    #[test]
    fn winsorize_degenerate_and_interior() {
        let c = Variable::from_matrix(DMatrix::from_element(3, 4, 7.5));
        assert_eq!(winsorize(&c, 1.0, 99.0).unwrap(), c);
        let two = Variable::from_matrix(DMatrix::from_row_slice(1, 2, &[1.0, 2.0]));
        assert_eq!(winsorize(&two, 1.0, 99.0).unwrap(), two);
        let missing = Variable::from_matrix(DMatrix::from_element(2, 2, f64::NAN));
        assert!(winsorize(&missing, 1.0, 99.0).is_err());
    }

    proptest! {
        #[test]
        fn winsorize_idempotent(xs in proptest::collection::vec(-1e3f64..1e3, 2..200)) {
            let v = Variable::from_matrix(DMatrix::from_row_slice(1, xs.len(), &xs));
            let once = winsorize(&v, 1.0, 99.0).unwrap();
            let twice = winsorize(&once, 1.0, 99.0).unwrap();
            prop_assert_eq!(once, twice);
        }
    }

    #[test]
    fn filter_drops_short_entities() {
        // ten entities, six quarters; entities 0,3,5,8 have only 3 observed quarters
        let mut m = DMatrix::from_element(10, 6, 1.0);
        for &i in &[0usize, 3, 5, 8] {
            for t in 0..3 {
                m[(i, t)] = f64::NAN;
            }
        }
        let p = panel_with(ROA, m);
        let f = SampleFilter {
            min_quarters: 4,
            required_fields: vec![ROA.into()],
        };
        let (out, rep) = apply_filter(&p, &f).unwrap();
        assert_eq!((out.n(), rep.retained, rep.dropped), (6, 6, 4));
        assert_eq!(rep.dropped_entities, ["e00", "e03", "e05", "e08"]);
    }

    #[test]
    fn filter_identity_and_empty() {
        let p = panel_with(ROA, DMatrix::from_element(3, 5, 0.5));
        let f = SampleFilter {
            min_quarters: 4,
            required_fields: vec![ROA.into()],
        };
        assert_eq!(apply_filter(&p, &f).unwrap().0, p);
        let empty = panel_with(ROA, DMatrix::from_element(3, 5, f64::NAN));
        assert!(matches!(apply_filter(&empty, &f), Err(Error::Empty(_))));
    }

    #[test]
    fn filter_reports_adopter_split() {
        let d = DMatrix::from_row_slice(3, 4, &[0., 0., 1., 1., 0., 0., 0., 0., 0., 1., 1., 1.]);
        let p = panel_with(ROA, DMatrix::from_element(3, 4, 1.0))
            .with_variable(TREATMENT, Variable::from_matrix(d))
            .unwrap();
        let f = SampleFilter {
            min_quarters: 4,
            required_fields: vec![ROA.into()],
        };
        let rep = apply_filter(&p, &f).unwrap().1;
        assert_eq!((rep.adopters, rep.controls), (2, 1));
    }

    #[test]
    fn size_split_quartile() {
        let m = DMatrix::from_fn(8, 2, |i, _| i as f64 + 10.0);
        let p = panel_with(LOG_ASSETS, m);
        let (large, small) = size_split(&p, 0.75).unwrap();
        assert_eq!((large.n(), small.n()), (2, 6));
        assert_eq!(large.entity_ids(), ["e06", "e07"]);
    }

    #[test]
    fn size_split_ties_go_large() {
        // sizes 1,2,3,4,4,4,4,4: the 0.75 quantile is 4 and all five at 4 are large
        let sizes = [1.0, 2.0, 3.0, 4.0, 4.0, 4.0, 4.0, 4.0];
        let m = DMatrix::from_fn(8, 2, |i, _| sizes[i]);
        let (large, small) = size_split(&panel_with(LOG_ASSETS, m), 0.75).unwrap();
        assert_eq!((large.n(), small.n()), (5, 3));
        assert!(size_split(&panel_with(LOG_ASSETS, DMatrix::zeros(3, 2)), 0.75).is_err());
    }
}
