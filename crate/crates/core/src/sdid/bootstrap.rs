use rand::Rng as _;
use rayon::prelude::*;

use super::estimator::{SdidProblem, SdidResult};
use crate::error::{invalid, Error, Result};
use crate::numeric::sample_sd;
use crate::rng::{replication_rng, Rng};

/// Attempts per replication before giving up; with `B` replications the
/// total number of draws stays within `10·B`.
pub const MAX_ATTEMPTS: usize = 10;

/// Resample each stratum with replacement to its own size.
pub(crate) fn resample(rng: &mut Rng, strata: &[&[usize]]) -> Vec<Vec<usize>> {
    strata
        .iter()
        .map(|s| {
            (0..s.len())
                .map(|_| s[rng.random_range(0..s.len())])
                .collect()
        })
        .collect()
}

pub(crate) fn distinct(xs: &[usize]) -> usize {
    let mut v = xs.to_vec();
    v.sort_unstable();
    v.dedup();
    v.len()
}

/// Draw treated from treated and controls from controls until at least two
/// distinct controls appear.
pub(crate) fn stratified_draw(
    rng: &mut Rng,
    treated: &[&[usize]],
    controls: &[usize],
    replication: usize,
) -> Result<(Vec<Vec<usize>>, Vec<usize>)> {
    for _ in 0..MAX_ATTEMPTS {
        let tr = resample(rng, treated);
        let co = resample(rng, &[controls]).pop().expect("one stratum");
        if distinct(&co) >= 2 {
            return Ok((tr, co));
        }
    }
    Err(Error::NonConvergence {
        what: "bootstrap resampling",
        iterations: MAX_ATTEMPTS,
        detail: format!("replication {replication} never drew 2 distinct controls"),
    })
}

/// Stratified bootstrap of the SDID estimate: entities are resampled with
/// replacement, treated from treated and controls from controls, and the
/// weights are re-solved on every draw. Replication `b` uses its own
/// generator derived from `(seed, b)`.
pub fn bootstrap_se(
    problem: &SdidProblem,
    replications: usize,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    if replications < 2 {
        return Err(invalid("bootstrap needs at least 2 replications"));
    }
    problem.validate()?;
    let controls = problem.controls();
    let draws = (0..replications)
        .into_par_iter()
        .map(|b| {
            let mut rng = replication_rng(seed, b as u64);
            let (tr, co) = stratified_draw(&mut rng, &[&problem.treated], &controls, b)?;
            let mut design = problem.design(&co);
            design.treated = &tr[0];
            Ok(design.estimate()?.0)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((sample_sd(&draws), draws))
}

/// Point estimate plus bootstrap standard error and CI.
pub fn fit_sdid_bootstrap(
    problem: &SdidProblem,
    replications: usize,
    seed: u64,
) -> Result<SdidResult> {
    let fit = super::fit_sdid(problem)?;
    let (se, draws) = bootstrap_se(problem, replications, seed)?;
    Ok(fit.with_bootstrap(se, draws))
}
