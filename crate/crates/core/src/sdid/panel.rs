//! Panel-level entry points: the main ATT, the event study and the two
//! placebo designs.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bootstrap::{fit_sdid_bootstrap, stratified_draw};
use super::estimator::{fit_sdid, Design, SdidProblem, SdidResult};
use crate::error::{invalid, Result};
use crate::numeric::sample_sd;
use crate::panel::{Outcome, PanelDataset, Quarter, TREATMENT};
use crate::rng::replication_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdidConfig {
    pub outcome: Outcome,
    /// Adoption quarter; defaults to the earliest first-treated quarter.
    pub t0: Option<Quarter>,
    pub bootstrap: usize,
    pub seed: u64,
    pub zeta_unit: Option<f64>,
    pub zeta_time: Option<f64>,
    pub with_intercept: bool,
}

impl Default for SdidConfig {
    fn default() -> Self {
        Self {
            outcome: Outcome::Roe,
            t0: None,
            bootstrap: 200,
            seed: 42,
            zeta_unit: None,
            zeta_time: None,
            with_intercept: false,
        }
    }
}

/// Complete-case outcome matrix with each entity's first treated column.
/// Entities flagged as SDID-excluded or with any unobserved outcome (or
/// treatment) cell are dropped.
#[derive(Debug, Clone)]
pub struct SdidPanel {
    pub y: DMatrix<f64>,
    pub ids: Vec<String>,
    pub first_treated: Vec<Option<usize>>,
    pub quarters: Vec<Quarter>,
    pub dropped: Vec<String>,
}

impl SdidPanel {
    pub fn from_panel(panel: &PanelDataset, outcome: Outcome) -> Result<Self> {
        let complete = panel.complete_entities(&[outcome.name(), TREATMENT])?;
        let excluded = panel.sdid_excluded();
        let keep: Vec<usize> = complete.into_iter().filter(|&i| !excluded[i]).collect();
        let dropped = (0..panel.n())
            .filter(|i| !keep.contains(i))
            .map(|i| panel.entity_ids()[i].clone())
            .collect::<Vec<_>>();
        if !dropped.is_empty() {
            log::warn!(
                "SDID drops {} incomplete or excluded entities",
                dropped.len()
            );
        }
        let y_all = panel.outcome(outcome)?.values();
        let d = panel.require(TREATMENT)?.values();
        let y = DMatrix::from_fn(keep.len(), panel.t(), |r, c| y_all[(keep[r], c)]);
        let first_treated = keep
            .iter()
            .map(|&i| (0..panel.t()).find(|&c| d[(i, c)] > 0.5))
            .collect();
        Ok(Self {
            y,
            ids: keep
                .iter()
                .map(|&i| panel.entity_ids()[i].clone())
                .collect(),
            first_treated,
            quarters: panel.quarters().to_vec(),
            dropped,
        })
    }

    pub fn never_treated(&self) -> Vec<usize> {
        (0..self.ids.len())
            .filter(|&i| self.first_treated[i].is_none())
            .collect()
    }

    fn column_of(&self, q: Quarter) -> Result<usize> {
        self.quarters
            .binary_search(&q)
            .map_err(|_| invalid(format!("quarter {q} is outside the panel")))
    }

    /// Common adoption design at `t0` (or the earliest adoption): every
    /// adopter is treated and must not adopt before `t0`.
    pub fn problem(&self, t0: Option<Quarter>, cfg: &SdidConfig) -> Result<SdidProblem> {
        let treated: Vec<usize> = (0..self.ids.len())
            .filter(|&i| self.first_treated[i].is_some())
            .collect();
        let col = match t0 {
            Some(q) => self.column_of(q)?,
            None => treated
                .iter()
                .filter_map(|&i| self.first_treated[i])
                .min()
                .ok_or_else(|| invalid("no treated entities in the panel"))?,
        };
        let early: Vec<&str> = treated
            .iter()
            .filter(|&&i| self.first_treated[i].is_some_and(|c| c < col))
            .map(|&i| self.ids[i].as_str())
            .collect();
        if !early.is_empty() {
            return Err(invalid(format!(
                "{} entities are treated before {}: {}",
                early.len(),
                self.quarters[col],
                early.join(", ")
            )));
        }
        let mut p = SdidProblem::new(self.y.clone(), treated, col)?;
        p.zeta_unit = cfg.zeta_unit;
        p.zeta_time = cfg.zeta_time;
        p.with_intercept = cfg.with_intercept;
        Ok(p)
    }
}

fn apply_config(mut p: SdidProblem, cfg: &SdidConfig) -> Result<SdidProblem> {
    p.zeta_unit = cfg.zeta_unit;
    p.zeta_time = cfg.zeta_time;
    p.with_intercept = cfg.with_intercept;
    p.validate()?;
    Ok(p)
}

/// ATT with bootstrap inference for the common-adoption design.
pub fn estimate(panel: &PanelDataset, cfg: &SdidConfig) -> Result<SdidResult> {
    let sp = SdidPanel::from_panel(panel, cfg.outcome)?;
    let problem = sp.problem(cfg.t0, cfg)?;
    fit_sdid_bootstrap(&problem, cfg.bootstrap, cfg.seed)
}

/// Pretend adoption happened at `fake_t0`, using only quarters before the
/// earliest true adoption.
pub fn placebo_shift(
    panel: &PanelDataset,
    cfg: &SdidConfig,
    fake_t0: Quarter,
) -> Result<SdidResult> {
    let sp = SdidPanel::from_panel(panel, cfg.outcome)?;
    let treated: Vec<usize> = (0..sp.ids.len())
        .filter(|&i| sp.first_treated[i].is_some())
        .collect();
    let true_start = treated
        .iter()
        .filter_map(|&i| sp.first_treated[i])
        .min()
        .ok_or_else(|| invalid("no treated entities in the panel"))?;
    let fake = sp.column_of(fake_t0)?;
    if fake >= true_start {
        return Err(invalid(format!(
            "placebo date {fake_t0} must precede the earliest adoption {}",
            sp.quarters[true_start]
        )));
    }
    if fake < 2 {
        return Err(invalid(format!(
            "placebo date {fake_t0} leaves fewer than 2 pre-periods"
        )));
    }
    let y = sp.y.columns(0, true_start).into_owned();
    let problem = apply_config(SdidProblem::new(y, treated, fake)?, cfg)?;
    fit_sdid_bootstrap(&problem, cfg.bootstrap, cfg.seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceboDistribution {
    pub actual: f64,
    pub draws: Vec<f64>,
    /// `(1 + #{|draw| ≥ |actual|}) / (reps + 1)`.
    pub p_value: f64,
}

/// Permutation placebo: the treated label is reassigned to random entities
/// (same count) and the point estimate refitted `reps` times.
pub fn placebo_random(
    panel: &PanelDataset,
    cfg: &SdidConfig,
    reps: usize,
    seed: u64,
) -> Result<PlaceboDistribution> {
    if reps < 100 {
        return Err(invalid(format!(
            "random placebo needs at least 100 permutations, got {reps}"
        )));
    }
    let sp = SdidPanel::from_panel(panel, cfg.outcome)?;
    let problem = sp.problem(cfg.t0, cfg)?;
    placebo_random_problem(&problem, reps, seed)
}

/// Permutation distribution for a matrix-level problem.
pub fn placebo_random_problem(
    problem: &SdidProblem,
    reps: usize,
    seed: u64,
) -> Result<PlaceboDistribution> {
    let actual = fit_sdid(problem)?.att;
    let n = problem.y.nrows();
    let k = problem.treated.len();
    let draws = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = replication_rng(seed, r as u64);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let mut p = problem.clone();
            p.treated = idx[..k].to_vec();
            p.treated.sort_unstable();
            Ok(fit_sdid(&p)?.att)
        })
        .collect::<Result<Vec<f64>>>()?;
    let extreme = draws.iter().filter(|d| d.abs() >= actual.abs()).count();
    Ok(PlaceboDistribution {
        actual,
        p_value: (1 + extreme) as f64 / (reps + 1) as f64,
        draws,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventStudyConfig {
    pub sdid: SdidConfig,
    pub min_horizon: i64,
    pub max_horizon: i64,
}

impl Default for EventStudyConfig {
    fn default() -> Self {
        Self {
            sdid: SdidConfig::default(),
            min_horizon: -4,
            max_horizon: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonEstimate {
    pub horizon: i64,
    pub att: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// Treated entities behind the estimate (over contributing cohorts).
    pub n_treated: usize,
    pub n_cohorts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub adoption: Quarter,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventStudyResult {
    pub horizons: Vec<HorizonEstimate>,
    pub cohorts: Vec<Cohort>,
}

/// Columns used for cohort adopting at `start` and horizon `k`: the
/// pre-period span and the single post column. `None` when infeasible.
fn horizon_columns(start: usize, k: i64, t: usize) -> Option<(usize, usize)> {
    let post = start as i64 + k;
    let pre = if k >= 0 { start as i64 } else { post };
    if pre < 2 || post < 0 || post as usize >= t {
        return None;
    }
    Some((pre as usize, post as usize))
}

struct Cell {
    cohort: usize,
    horizon: usize,
    pre: usize,
    post: usize,
}

fn cell_att(
    y: &DMatrix<f64>,
    treated: &[usize],
    controls: &[usize],
    cell: &Cell,
    cfg: &SdidConfig,
) -> Result<f64> {
    let mut cols: Vec<usize> = (0..cell.pre).collect();
    cols.push(cell.post);
    let sub = y.select_columns(&cols);
    let design = Design {
        y: &sub,
        treated,
        controls,
        t0: cell.pre,
        zeta_unit: cfg.zeta_unit,
        zeta_time: cfg.zeta_time,
        with_intercept: cfg.with_intercept,
    };
    Ok(design.estimate()?.0)
}

/// Horizon-specific ATTs. Each cohort (entities sharing a first treated
/// quarter) is compared with never-treated controls; horizon `k ≥ 0` uses
/// the pre-adoption quarters and the single quarter `t* + k`, horizon
/// `k < 0` the quarters before `t* + k` and the quarter `t* + k` itself
/// (a placebo). Cohort estimates are averaged with treated-count weights
/// and the standard error comes from a cohort-stratified bootstrap of the
/// aggregate.
pub fn event_study(panel: &PanelDataset, cfg: &EventStudyConfig) -> Result<EventStudyResult> {
    let sp = SdidPanel::from_panel(panel, cfg.sdid.outcome)?;
    event_study_panel(&sp, cfg)
}

pub fn event_study_panel(sp: &SdidPanel, cfg: &EventStudyConfig) -> Result<EventStudyResult> {
    if cfg.min_horizon > cfg.max_horizon {
        return Err(invalid("min horizon exceeds max horizon"));
    }
    if cfg.sdid.bootstrap < 2 {
        return Err(invalid("bootstrap needs at least 2 replications"));
    }
    let t = sp.y.ncols();
    let controls = sp.never_treated();
    if controls.len() < 2 {
        return Err(invalid(
            "event study needs at least 2 never-treated controls",
        ));
    }
    let mut starts: Vec<usize> = sp.first_treated.iter().flatten().copied().collect();
    starts.sort_unstable();
    starts.dedup();
    let members: Vec<Vec<usize>> = starts
        .iter()
        .map(|&s| {
            (0..sp.ids.len())
                .filter(|&i| sp.first_treated[i] == Some(s))
                .collect()
        })
        .collect();
    let horizons: Vec<i64> = (cfg.min_horizon..=cfg.max_horizon).collect();
    let mut cells = Vec::new();
    for (c, &s) in starts.iter().enumerate() {
        for (h, &k) in horizons.iter().enumerate() {
            if let Some((pre, post)) = horizon_columns(s, k, t) {
                cells.push(Cell {
                    cohort: c,
                    horizon: h,
                    pre,
                    post,
                });
            }
        }
    }
    if cells.is_empty() {
        return Err(invalid(
            "no cohort has at least 2 pre-periods and a quarter in the horizon window",
        ));
    }
    let aggregate = |treated: &[Vec<usize>], controls: &[usize]| -> Result<Vec<Option<f64>>> {
        let atts = cells
            .iter()
            .map(|cell| cell_att(&sp.y, &treated[cell.cohort], controls, cell, &cfg.sdid))
            .collect::<Result<Vec<f64>>>()?;
        let mut num = vec![0.0; horizons.len()];
        let mut den = vec![0usize; horizons.len()];
        for (cell, att) in cells.iter().zip(atts) {
            let w = treated[cell.cohort].len();
            num[cell.horizon] += w as f64 * att;
            den[cell.horizon] += w;
        }
        Ok(num
            .iter()
            .zip(&den)
            .map(|(n, &d)| (d > 0).then(|| n / d as f64))
            .collect())
    };
    let point = aggregate(&members, &controls)?;
    let strata: Vec<&[usize]> = members.iter().map(Vec::as_slice).collect();
    let boot = (0..cfg.sdid.bootstrap)
        .into_par_iter()
        .map(|b| {
            let mut rng = replication_rng(cfg.sdid.seed, b as u64);
            let (tr, co) = stratified_draw(&mut rng, &strata, &controls, b)?;
            aggregate(&tr, &co)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = Vec::new();
    for (h, &k) in horizons.iter().enumerate() {
        let Some(att) = point[h] else { continue };
        let draws: Vec<f64> = boot.iter().filter_map(|d| d[h]).collect();
        let se = sample_sd(&draws);
        let contributing: Vec<usize> = cells
            .iter()
            .filter(|c| c.horizon == h)
            .map(|c| c.cohort)
            .collect();
        out.push(HorizonEstimate {
            horizon: k,
            att,
            se,
            ci_lower: att - 1.96 * se,
            ci_upper: att + 1.96 * se,
            n_treated: contributing.iter().map(|&c| members[c].len()).sum(),
            n_cohorts: contributing.len(),
        });
    }
    Ok(EventStudyResult {
        horizons: out,
        cohorts: starts
            .iter()
            .zip(&members)
            .map(|(&s, m)| Cohort {
                adoption: sp.quarters[s],
                size: m.len(),
            })
            .collect(),
    })
}
