use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{PanelDataset, Quarter, Variable, MENTIONS, TREATMENT};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreatmentMode {
    /// `1[mentions > 0]` cell by cell.
    Raw,
    /// 1 from the first qualifying mention onward.
    Absorbing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreatmentAssignment {
    pub indicator: DMatrix<u8>,
    /// Column of the first positive mention at or after the earliest quarter.
    pub first_treated: Vec<Option<usize>>,
    /// Mentioned before the earliest quarter: always-treated, no clean
    /// pre-period, excluded from SDID.
    pub excluded: Vec<bool>,
}

impl TreatmentAssignment {
    pub fn is_adopter(&self, i: usize) -> bool {
        self.first_treated[i].is_some()
    }
}

pub fn build_treatment(
    mentions: &DMatrix<u64>,
    quarters: &[Quarter],
    mode: TreatmentMode,
    earliest: Quarter,
) -> Result<TreatmentAssignment> {
    let (n, t) = mentions.shape();
    if quarters.len() != t {
        return Err(invalid("quarter labels do not match mention columns"));
    }
    let start = quarters
        .iter()
        .position(|q| *q == earliest)
        .ok_or_else(|| invalid(format!("earliest quarter {earliest} outside panel range")))?;
    let mut indicator = DMatrix::<u8>::zeros(n, t);
    let mut first_treated = vec![None; n];
    let mut excluded = vec![false; n];
    for i in 0..n {
        excluded[i] = (0..start).any(|j| mentions[(i, j)] > 0);
        first_treated[i] = (start..t).find(|&j| mentions[(i, j)] > 0);
        match mode {
            TreatmentMode::Raw => {
                for j in 0..t {
                    indicator[(i, j)] = u8::from(mentions[(i, j)] > 0);
                }
            }
            TreatmentMode::Absorbing => {
                if let (Some(f), false) = (first_treated[i], excluded[i]) {
                    for j in f..t {
                        indicator[(i, j)] = 1;
                    }
                }
            }
        }
        if excluded[i] && mode == TreatmentMode::Absorbing {
            first_treated[i] = None;
        }
    }
    Ok(TreatmentAssignment {
        indicator,
        first_treated,
        excluded,
    })
}

impl PanelDataset {
    /// Derive the `treatment` variable and SDID exclusion flags from the
    /// `mentions` variable (missing cells count as zero mentions).
    pub fn with_treatment_from_mentions(
        self,
        mode: TreatmentMode,
        earliest: Quarter,
    ) -> Result<Self> {
        let m = self.require(MENTIONS)?;
        let counts = DMatrix::from_fn(self.n(), self.t(), |i, j| {
            if m.is_missing(i, j) {
                0
            } else {
                m.values()[(i, j)].max(0.0).round() as u64
            }
        });
        let a = build_treatment(&counts, self.quarters(), mode, earliest)?;
        let d = Variable::from_matrix(a.indicator.map(f64::from));
        self.with_variable(TREATMENT, d)?
            .with_sdid_excluded(a.excluded)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quarters(t: usize) -> Vec<Quarter> {
        let q0: Quarter = "2022Q1".parse().unwrap();
        let mut v = vec![q0];
        while v.len() < t {
            v.push(v.last().unwrap().next());
        }
        v
    }

    fn row(m: &[u64]) -> DMatrix<u64> {
        DMatrix::from_row_slice(1, m.len(), m)
    }

    #[test]
    fn absorbing_carry_forward() {
        let q = quarters(4);
        let a = build_treatment(&row(&[0, 0, 3, 0]), &q, TreatmentMode::Absorbing, q[0]).unwrap();
        assert_eq!(
            a.indicator.row(0).iter().copied().collect::<Vec<_>>(),
            vec![0, 0, 1, 1]
        );
        assert_eq!(a.first_treated[0], Some(2));
        let raw = build_treatment(&row(&[0, 0, 3, 0]), &q, TreatmentMode::Raw, q[0]).unwrap();
        assert_eq!(
            raw.indicator.row(0).iter().copied().collect::<Vec<_>>(),
            vec![0, 0, 1, 0]
        );
    }

    #[test]
    fn never_mentioned_is_control() {
        let q = quarters(4);
        let a = build_treatment(&row(&[0, 0, 0, 0]), &q, TreatmentMode::Absorbing, q[0]).unwrap();
        assert!(a.indicator.iter().all(|v| *v == 0));
        assert!(!a.is_adopter(0) && !a.excluded[0]);
    }

    #[test]
    fn early_mention_is_excluded() {
        // first mention in column 0, earliest admissible is column 2
        let q = quarters(4);
        let a = build_treatment(&row(&[2, 0, 0, 0]), &q, TreatmentMode::Absorbing, q[2]).unwrap();
        assert!(a.excluded[0]);
        assert!(a.indicator.iter().all(|v| *v == 0));
        assert_eq!(a.first_treated[0], None);
    }

    #[test]
    fn earliest_outside_range() {
        let q = quarters(4);
        let late: Quarter = "2030Q1".parse().unwrap();
        assert!(build_treatment(&row(&[0, 0, 0, 0]), &q, TreatmentMode::Raw, late).is_err());
    }

    proptest! {
        #[test]
        fn absorbing_is_monotone(m in proptest::collection::vec(0u64..3, 1..40), start in 0usize..8) {
            let t = m.len();
            let q = quarters(t);
            let a = build_treatment(&row(&m), &q, TreatmentMode::Absorbing, q[start.min(t - 1)]).unwrap();
            for j in 1..t {
                prop_assert!(a.indicator[(0, j)] >= a.indicator[(0, j - 1)]);
            }
        }
    }
}
