//! Synthetic panels from known data-generating processes.
//!
//! [`gen_dsdm`] simulates the dynamic spatial Durbin recursion forward after a
//! burn-in; [`gen_sdid`] builds untreated potential outcomes from entity
//! effects, time effects and optional entity-specific trends, then adds a
//! constant effect to treated cells. Both return the panel, the ground truth
//! and the raw components used to build it.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::panel::{Outcome, PanelDataset, Quarter, Variable, LOG_ASSETS, TREATMENT};
use crate::rng::{seeded, Rng};
use crate::weights::{WeightKind, WeightMatrix};

/// Trajectories beyond this magnitude are reported as explosive.
pub const EXPLOSIVE_BOUND: f64 = 1e8;
pub const MIN_BURN_IN: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreatmentRule {
    None,
    /// `round(share · N)` entities chosen uniformly at random.
    RandomShare {
        share: f64,
    },
    /// The `round(share · N)` entities with the largest latent utility
    /// `slope · a_i + ε_i`, `ε_i` standard logistic, where `a_i` is the
    /// standardized entity effect.
    Logit {
        share: f64,
        slope: f64,
    },
    /// `round(share · N)` random entities, each adopting at a column drawn
    /// uniformly from `first..=last` (ignores `t0`).
    Staggered {
        share: f64,
        first: usize,
        last: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Innovation {
    Gaussian,
    /// Student-t with `df > 2`, rescaled to variance σ².
    StudentT {
        df: f64,
    },
}

/// Settings used only by [`gen_sdid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdidVariant {
    /// Constant effect added to treated cells.
    pub effect: f64,
    /// Entity trend slope is `trend_sd · a_i`; 0 gives parallel trends.
    pub trend_sd: f64,
    /// Adoption columns; treated entities are spread over them in turn.
    /// Empty means a single cohort at `DgpSpec::t0`.
    pub cohorts: Vec<usize>,
    /// The effect starts this many columns before adoption while the
    /// treatment indicator still switches on at adoption.
    pub effect_lead: usize,
}

impl Default for SdidVariant {
    fn default() -> Self {
        Self {
            effect: 0.0,
            trend_sd: 0.0,
            cohorts: Vec::new(),
            effect_lead: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DgpSpec {
    pub n: usize,
    pub t: usize,
    pub tau: f64,
    pub rho: f64,
    pub eta: f64,
    pub beta: f64,
    pub theta: f64,
    /// One coefficient per control `x1, x2, …`.
    pub gamma: Vec<f64>,
    pub sigma: f64,
    /// Standard deviation of entity and time effects.
    pub fe_scale: f64,
    pub treatment: TreatmentRule,
    /// First treated column of the retained panel.
    pub t0: usize,
    pub innovation: Innovation,
    pub sdid: SdidVariant,
    /// Required by [`gen_dsdm`].
    pub weights: Option<WeightMatrix>,
    /// Written as a constant-per-entity `log_assets` variable when present.
    pub log_assets: Option<Vec<f64>>,
    pub outcome: Outcome,
    pub burn_in: usize,
    pub first_quarter: Quarter,
    pub seed: u64,
}

impl Default for DgpSpec {
    fn default() -> Self {
        Self {
            n: 50,
            t: 40,
            tau: 0.0,
            rho: 0.0,
            eta: 0.0,
            beta: 0.0,
            theta: 0.0,
            gamma: Vec::new(),
            sigma: 1.0,
            fe_scale: 1.0,
            treatment: TreatmentRule::RandomShare { share: 0.5 },
            t0: 20,
            innovation: Innovation::Gaussian,
            sdid: SdidVariant::default(),
            weights: None,
            log_assets: None,
            outcome: Outcome::Roa,
            burn_in: MIN_BURN_IN,
            first_quarter: Quarter::new(2010, 1).expect("valid quarter"),
            seed: 0,
        }
    }
}

/// Parameters a panel was generated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub model: String,
    pub seed: u64,
    pub n: usize,
    pub t: usize,
    pub tau: f64,
    pub rho: f64,
    pub eta: f64,
    pub beta: f64,
    pub theta: f64,
    pub gamma: Vec<f64>,
    pub sigma: f64,
    pub fe_scale: f64,
    pub treatment: TreatmentRule,
    pub innovation: Innovation,
    /// True ATT (constant effect) for SDID panels.
    pub att: Option<f64>,
    pub sdid: Option<SdidVariant>,
    /// First treated quarter per entity, in entity order.
    pub adoption: Vec<Option<Quarter>>,
}

/// Building blocks of a simulated panel, kept for oracle checks.
#[derive(Debug, Clone)]
pub struct Components {
    /// Standardized latent entity effect `a_i`.
    pub latent: Vec<f64>,
    /// Entity effects `μ_i`.
    pub mu: Vec<f64>,
    /// Time effects of the retained periods.
    pub delta: Vec<f64>,
    pub eps: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub x: Vec<DMatrix<f64>>,
    /// Outcome in the last burn-in period (DSDM only, else zeros).
    pub y_init: Vec<f64>,
    /// Untreated potential outcomes (SDID only, else the outcome itself).
    pub y0: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct Simulated {
    pub panel: PanelDataset,
    pub truth: Truth,
    pub components: Components,
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.t < 2 {
            return Err(invalid("need N ≥ 2 and T ≥ 2"));
        }
        if !(self.tau.abs() < 1.0) {
            return Err(invalid(format!("|tau| must be < 1, got {}", self.tau)));
        }
        if !(self.sigma >= 0.0) || !(self.fe_scale >= 0.0) {
            return Err(invalid("sigma and fe_scale must be ≥ 0"));
        }
        if self.burn_in < MIN_BURN_IN {
            return Err(invalid(format!("burn_in must be ≥ {MIN_BURN_IN}")));
        }
        if let Innovation::StudentT { df } = self.innovation {
            if !(df > 2.0) {
                return Err(invalid("Student-t innovations need df > 2"));
            }
        }
        match self.treatment {
            TreatmentRule::None => {}
            TreatmentRule::RandomShare { share } | TreatmentRule::Logit { share, .. } => {
                if !(0.0..=1.0).contains(&share) {
                    return Err(invalid("treated share must lie in [0, 1]"));
                }
                if self.t0 >= self.t {
                    return Err(invalid(format!(
                        "t0 = {} must be < T = {}",
                        self.t0, self.t
                    )));
                }
            }
            TreatmentRule::Staggered { share, first, last } => {
                if !(0.0..=1.0).contains(&share) || first > last || last >= self.t {
                    return Err(invalid(
                        "staggered adoption needs share in [0, 1] and first ≤ last < T",
                    ));
                }
            }
        }
        if self.sdid.cohorts.iter().any(|&c| c >= self.t) {
            return Err(invalid("cohort adoption columns must be < T"));
        }
        if let Some(w) = &self.weights {
            if w.n() != self.n {
                return Err(invalid(format!("W is {0}×{0}, N = {1}", w.n(), self.n)));
            }
            let (lower, upper) = w.rho_interval()?;
            if !(self.rho > lower && self.rho < upper) {
                return Err(Error::RhoOutOfInterval {
                    rho: self.rho,
                    lower,
                    upper,
                });
            }
        } else if self.rho != 0.0 || self.eta != 0.0 || self.theta != 0.0 {
            return Err(invalid("spatial parameters need a weight matrix"));
        }
        if let Some(s) = &self.log_assets {
            if s.len() != self.n {
                return Err(invalid("one log_assets value per entity required"));
            }
        }
        Ok(())
    }

    fn entity_ids(&self) -> Vec<String> {
        let width = self.n.to_string().len().max(3);
        (1..=self.n).map(|i| format!("B{i:0width$}")).collect()
    }

    fn quarters(&self) -> Vec<Quarter> {
        let mut q = self.first_quarter;
        (0..self.t)
            .map(|_| {
                let cur = q;
                q = q.next();
                cur
            })
            .collect()
    }

    fn truth(&self, model: &str, adoption_cols: &[Option<usize>], quarters: &[Quarter]) -> Truth {
        Truth {
            model: model.into(),
            seed: self.seed,
            n: self.n,
            t: self.t,
            tau: self.tau,
            rho: self.rho,
            eta: self.eta,
            beta: self.beta,
            theta: self.theta,
            gamma: self.gamma.clone(),
            sigma: self.sigma,
            fe_scale: self.fe_scale,
            treatment: self.treatment,
            innovation: self.innovation,
            att: (model == "sdid").then_some(self.sdid.effect),
            sdid: (model == "sdid").then(|| self.sdid.clone()),
            adoption: adoption_cols
                .iter()
                .map(|c| c.map(|c| quarters[c]))
                .collect(),
        }
    }
}

fn normal(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn innovation_draw(rng: &mut Rng, kind: Innovation, sigma: f64) -> f64 {
    match kind {
        Innovation::Gaussian => sigma * normal(rng),
        Innovation::StudentT { df } => {
            let t = StudentT::new(df).expect("df > 2 validated");
            sigma * ((df - 2.0) / df).sqrt() * t.sample(rng)
        }
    }
}

/// Which entities are treated under `rule`.
fn select_treated(rng: &mut Rng, rule: TreatmentRule, latent: &[f64]) -> Vec<bool> {
    let n = latent.len();
    let (share, utility): (f64, Vec<f64>) = match rule {
        TreatmentRule::None => return vec![false; n],
        TreatmentRule::RandomShare { share } | TreatmentRule::Staggered { share, .. } => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(rng);
            let k = (share * n as f64).round() as usize;
            let mut out = vec![false; n];
            for &i in &idx[..k] {
                out[i] = true;
            }
            return out;
        }
        TreatmentRule::Logit { share, slope } => (
            share,
            latent
                .iter()
                .map(|a| {
                    let u: f64 = rng.random_range(f64::EPSILON..1.0);
                    slope * a + (u / (1.0 - u)).ln()
                })
                .collect(),
        ),
    };
    let k = (share * n as f64).round() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| utility[b].total_cmp(&utility[a]));
    let mut out = vec![false; n];
    for &i in &idx[..k] {
        out[i] = true;
    }
    out
}

/// Adoption column per entity; staggered rules draw one per treated entity.
fn adoption_columns(rng: &mut Rng, spec: &DgpSpec, treated: &[bool]) -> Vec<Option<usize>> {
    treated
        .iter()
        .map(|&tr| {
            tr.then(|| match spec.treatment {
                TreatmentRule::Staggered { first, last, .. } => rng.random_range(first..=last),
                _ => spec.t0,
            })
        })
        .collect()
}

fn build_panel(
    spec: &DgpSpec,
    y: DMatrix<f64>,
    d: &DMatrix<f64>,
    x: &[DMatrix<f64>],
) -> Result<(PanelDataset, Vec<Quarter>)> {
    let quarters = spec.quarters();
    let mut panel = PanelDataset::new(spec.entity_ids(), quarters.clone())?
        .with_variable(spec.outcome.name(), Variable::from_matrix(y))?
        .with_variable(TREATMENT, Variable::from_matrix(d.clone()))?;
    for (j, xm) in x.iter().enumerate() {
        panel = panel.with_variable(&format!("x{}", j + 1), Variable::from_matrix(xm.clone()))?;
    }
    if let Some(s) = &spec.log_assets {
        let m = DMatrix::from_fn(spec.n, spec.t, |i, _| s[i]);
        panel = panel.with_variable(LOG_ASSETS, Variable::from_matrix(m))?;
    }
    Ok((panel, quarters))
}

/// Simulate the spatial Durbin recursion. Treatment is absorbing from
/// column `t0` for the selected entities and zero during burn-in.
pub fn gen_dsdm(spec: &DgpSpec) -> Result<Simulated> {
    spec.validate()?;
    if !(spec.sigma > 0.0) {
        return Err(invalid("DSDM innovations need sigma > 0"));
    }
    let w = spec
        .weights
        .as_ref()
        .ok_or_else(|| invalid("gen_dsdm requires a weight matrix"))?;
    let (n, t) = (spec.n, spec.t);
    let mut rng = seeded(spec.seed);
    let latent: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
    let mu: Vec<f64> = latent.iter().map(|a| spec.fe_scale * a).collect();
    let treated = select_treated(&mut rng, spec.treatment, &latent);
    let adoption = adoption_columns(&mut rng, spec, &treated);

    let a = DMatrix::identity(n, n) - w.matrix() * spec.rho;
    let lu = a.lu();
    let total = spec.burn_in + t;
    let k = spec.gamma.len();
    let mut y_prev = DVector::zeros(n);
    let mut y = DMatrix::zeros(n, t);
    let mut d = DMatrix::zeros(n, t);
    let mut eps = DMatrix::zeros(n, t);
    let mut x = vec![DMatrix::zeros(n, t); k];
    let mut delta = Vec::with_capacity(t);
    let mut y_init = vec![0.0; n];
    for s in 0..total {
        let keep = s.checked_sub(spec.burn_in);
        let dt = spec.fe_scale * normal(&mut rng);
        let d_t = DVector::from_fn(n, |i, _| {
            let on = matches!((keep, adoption[i]), (Some(c), Some(a)) if c >= a);
            f64::from(u8::from(on))
        });
        let mut rhs = &y_prev * spec.tau
            + w.lag(&y_prev) * spec.eta
            + &d_t * spec.beta
            + w.lag(&d_t) * spec.theta;
        for (j, g) in spec.gamma.iter().enumerate() {
            let xj = DVector::from_fn(n, |_, _| normal(&mut rng));
            rhs += &xj * *g;
            if let Some(c) = keep {
                x[j].set_column(c, &xj);
            }
        }
        let e = DVector::from_fn(n, |_, _| {
            innovation_draw(&mut rng, spec.innovation, spec.sigma)
        });
        for i in 0..n {
            rhs[i] += mu[i] + dt + e[i];
        }
        let y_t = lu
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("I − ρW is singular".into()))?;
        if y_t
            .iter()
            .any(|v| !v.is_finite() || v.abs() > EXPLOSIVE_BOUND)
        {
            return Err(Error::Numerical(format!(
                "explosive trajectory at period {s} (|Y| > {EXPLOSIVE_BOUND:e}); reduce tau, rho or eta"
            )));
        }
        if s + 1 == spec.burn_in {
            y_init = y_t.iter().copied().collect();
        }
        if let Some(c) = keep {
            y.set_column(c, &y_t);
            d.set_column(c, &d_t);
            eps.set_column(c, &e);
            delta.push(dt);
        }
        y_prev = y_t;
    }
    let (panel, quarters) = build_panel(spec, y.clone(), &d, &x)?;
    let truth = spec.truth("dsdm", &adoption, &quarters);
    Ok(Simulated {
        panel,
        truth,
        components: Components {
            latent,
            mu,
            delta,
            eps,
            d,
            x,
            y_init,
            y0: y,
        },
    })
}

/// Potential-outcomes panel:
/// `Y_it(0) = μ_i + δ_t + κ_i·t + ε_it` with `κ_i = trend_sd · a_i`, and
/// `Y_it = Y_it(0) + effect` on treated cells from adoption on. `sigma = 0`
/// gives a noiseless panel.
pub fn gen_sdid(spec: &DgpSpec) -> Result<Simulated> {
    spec.validate()?;
    let (n, t) = (spec.n, spec.t);
    let mut rng = seeded(spec.seed);
    let latent: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
    let mu: Vec<f64> = latent.iter().map(|a| spec.fe_scale * a).collect();
    let treated = select_treated(&mut rng, spec.treatment, &latent);
    let delta: Vec<f64> = (0..t).map(|_| spec.fe_scale * normal(&mut rng)).collect();
    let mut eps = DMatrix::zeros(n, t);
    for c in 0..t {
        for i in 0..n {
            eps[(i, c)] = innovation_draw(&mut rng, spec.innovation, spec.sigma);
        }
    }
    let x: Vec<DMatrix<f64>> = spec
        .gamma
        .iter()
        .map(|_| DMatrix::from_fn(n, t, |_, _| normal(&mut rng)))
        .collect();

    let cohorts = if spec.sdid.cohorts.is_empty() {
        vec![spec.t0]
    } else {
        spec.sdid.cohorts.clone()
    };
    let mut adoption = vec![None; n];
    if matches!(spec.treatment, TreatmentRule::Staggered { .. }) {
        adoption = adoption_columns(&mut rng, spec, &treated);
    } else {
        for (rank, i) in (0..n).filter(|&i| treated[i]).enumerate() {
            adoption[i] = Some(cohorts[rank % cohorts.len()]);
        }
    }

    let mut y0 = DMatrix::zeros(n, t);
    for i in 0..n {
        let kappa = spec.sdid.trend_sd * latent[i];
        for c in 0..t {
            let mut v = mu[i] + delta[c] + kappa * c as f64 + eps[(i, c)];
            for (j, g) in spec.gamma.iter().enumerate() {
                v += g * x[j][(i, c)];
            }
            y0[(i, c)] = v;
        }
    }
    let mut y = y0.clone();
    let mut d = DMatrix::zeros(n, t);
    for i in 0..n {
        if let Some(a) = adoption[i] {
            let start = a.saturating_sub(spec.sdid.effect_lead);
            for c in 0..t {
                if c >= a {
                    d[(i, c)] = 1.0;
                }
                if c >= start {
                    y[(i, c)] += spec.sdid.effect;
                }
            }
        }
    }
    let (panel, quarters) = build_panel(spec, y, &d, &x)?;
    let truth = spec.truth("sdid", &adoption, &quarters);
    Ok(Simulated {
        panel,
        truth,
        components: Components {
            latent,
            mu,
            delta,
            eps,
            d,
            x,
            y_init: vec![0.0; n],
            y0,
        },
    })
}

/// Row-normalized ring in which each entity links to its `k` nearest
/// neighbours on either side.
pub fn ring_weights(n: usize, k: usize) -> Result<WeightMatrix> {
    if k == 0 || 2 * k >= n {
        return Err(invalid(format!(
            "ring needs 0 < 2k < N, got k = {k}, N = {n}"
        )));
    }
    let raw = DMatrix::from_fn(n, n, |i, j| {
        let gap = i.abs_diff(j);
        let gap = gap.min(n - gap);
        if gap >= 1 && gap <= k {
            1.0
        } else {
            0.0
        }
    });
    crate::weights::row_normalize(&raw, WeightKind::Custom, None)
}

/// Entity sizes on the log-assets scale, `N(10, 1.5²)`.
pub fn synthetic_sizes(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed);
    (0..n).map(|_| 10.0 + 1.5 * normal(&mut rng)).collect()
}
