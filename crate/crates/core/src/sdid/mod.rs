//! Synthetic difference in differences.
//!
//! Unit weights ω make the weighted control trajectory track the treated
//! mean over the pre-period; time weights λ make the weighted pre-period
//! track the post-period mean for controls. Both solve
//! `min_{w ∈ Δ} ‖Aw − b‖² + ζ²·m·‖w‖²` with `m` the number of rows of `A`
//! (pre-periods for ω, controls for λ). The estimator is
//!
//! `τ̂ = (Ȳ_tr,post − Σ_t λ_t Ȳ_tr,t) − (Σ_j ω_j Ȳ_j,post − Σ_j Σ_t ω_j λ_t Y_jt)`.
//!
//! Default strengths are `ζ_unit = (N_tr·T_post)^{1/4}·σ̂` and
//! `ζ_time = 1e-6·σ̂`, where σ̂ is the sd of first-differenced control
//! outcomes over the pre-period.

mod bootstrap;
mod estimator;
mod panel;
mod simplex;

pub use bootstrap::{bootstrap_se, fit_sdid_bootstrap};
pub use estimator::{default_zetas, did_estimate, fit_sdid, noise_scale, SdidProblem, SdidResult};
pub use panel::{
    estimate, event_study, event_study_panel, placebo_random, placebo_random_problem,
    placebo_shift, Cohort, EventStudyConfig, EventStudyResult, HorizonEstimate,
    PlaceboDistribution, SdidConfig, SdidPanel,
};
pub use simplex::{project_simplex, simplex_objective, solve_simplex_ridge, SimplexSolution};
