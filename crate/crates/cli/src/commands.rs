use std::collections::HashMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use spillover::dsdm::{self, DsdmFit, DsdmSpec, Estimator, FixedEffects, McmcConfig, ParamRow};
use spillover::effects::decompose_with_uncertainty;
use spillover::netrisk::{
    binarize, coupling_matrix, edge_list, graph_stats, CouplingSummary, GraphStats,
};
use spillover::numeric::{serde_matrix, stars, two_sided_p};
use spillover::panel::{
    apply_filter, count_mentions, ingest_panel, size_split, winsorize, write_missing_report,
    write_panel, FilterReport, KeywordDictionary, Outcome, PanelDataset, Quarter, SampleFilter,
    Schema, TreatmentMode, Variable, MENTIONS, ROA, ROE,
};
use spillover::sdid::{
    event_study, fit_sdid_bootstrap, placebo_random, placebo_shift, EventStudyConfig,
    EventStudyResult, PlaceboDistribution, SdidConfig, SdidPanel, SdidResult,
};
use spillover::simulate::{
    gen_dsdm, gen_sdid, ring_weights, synthetic_sizes, DgpSpec, Innovation, SdidVariant, Simulated,
    TreatmentRule,
};
use spillover::weights::{
    geographic_weights, load_weights, network_weights, write_weights, WeightKind, WeightMatrix,
};

use crate::output::{num, Outputs};
use crate::{
    Command, DsdmArgs, EffectsArgs, EventStudyArgs, FixedEffectsArg, IngestArgs, NetriskArgs,
    PanelArgs, PlaceboArgs, SdidAction, SdidArgs, SimCommon, SimDsdmArgs, SimSdidArgs, SimulateCmd,
    TreatmentArg, TreatmentModeArg, WeightsArgs, WeightsCmd,
};

pub fn run(cmd: &Command) -> Result<()> {
    let (name, manifest_out) = match cmd {
        Command::Ingest(a) => ("ingest", ingest(a)?),
        Command::Weights(a) => ("weights", weights(a)?),
        Command::Dsdm(a) => ("dsdm", fit_dsdm(a)?),
        Command::Effects(a) => ("effects", effects(a)?),
        Command::Sdid(c) => match (&c.action, &c.main) {
            (Some(SdidAction::EventStudy(a)), _) => ("sdid event-study", sdid_event_study(a)?),
            (Some(SdidAction::Placebo(a)), _) => ("sdid placebo", placebo(a)?),
            (None, Some(a)) => ("sdid", sdid_main(a, c.size_split, c.no_split)?),
            (None, None) => {
                bail!("sdid needs --panel and --out, or a subcommand (event-study, placebo)")
            }
        },
        Command::Netrisk(a) => ("netrisk", netrisk(a)?),
        Command::Simulate(SimulateCmd::Dsdm(a)) => ("simulate dsdm", simulate_dsdm(a)?),
        Command::Simulate(SimulateCmd::Sdid(a)) => ("simulate sdid", simulate_sdid(a)?),
        Command::Placebo(a) => ("placebo", placebo(a)?),
    };
    let path = manifest_out.finish(name, cmd)?;
    log::info!("manifest written to {}", path.display());
    Ok(())
}

// ---------- shared loaders ----------

fn load_panel(args: &PanelArgs, out: &mut Outputs) -> Result<PanelDataset> {
    let schema = match &args.schema {
        Some(p) => {
            out.input(p);
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Schema::from_toml(&text)?
        }
        None => Schema::canonical().with_delimiter(args.delimiter),
    };
    out.input(&args.panel);
    Ok(ingest_panel(&args.panel, &schema)?)
}

fn build_weights(
    panel: &PanelDataset,
    args: &WeightsArgs,
    out: &mut Outputs,
) -> Result<WeightMatrix> {
    let w = match args.weights.as_str() {
        "network" => {
            let sizes = panel
                .avg_log_assets()
                .context("network weights need a `log_assets` variable")?;
            network_weights(&sizes, args.bandwidth)?
        }
        "geographic" => {
            let coords = panel
                .coordinates()
                .context("geographic weights need latitude and longitude columns")?;
            geographic_weights(coords)?
        }
        path => {
            let p = Path::new(path);
            out.input(p);
            load_weights(p, ',', !args.no_normalize)?
        }
    };
    if w.n() != panel.n() {
        bail!(
            "weight matrix is {0}×{0} but the panel has {1} entities",
            w.n(),
            panel.n()
        );
    }
    Ok(w)
}

fn weights_csv(w: &WeightMatrix) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_weights(w, &mut buf, ',')?;
    Ok(buf)
}

fn with_stars(p: f64) -> String {
    if p.is_nan() {
        String::new()
    } else {
        stars(p).to_string()
    }
}

// ---------- ingest ----------

#[derive(Serialize)]
struct IngestReport {
    entities: usize,
    quarters: usize,
    first_quarter: Option<Quarter>,
    last_quarter: Option<Quarter>,
    filter: FilterReport,
    winsorized: Vec<String>,
    sdid_excluded: Vec<String>,
    missing_cells: usize,
}

fn mention_counts(
    panel: &PanelDataset,
    docs: &Path,
    dict: &KeywordDictionary,
) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(docs)
        .with_context(|| format!("reading {}", docs.display()))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("{}: missing column `{name}`", docs.display()))
    };
    let (ce, cq, ct) = (col("entity")?, col("quarter")?, col("text")?);
    let index: HashMap<&str, usize> = panel
        .entity_ids()
        .iter()
        .enumerate()
        .map(|(i, e)| (e.as_str(), i))
        .collect();
    let mut counts = DMatrix::zeros(panel.n(), panel.t());
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let q: Quarter = rec[cq].parse()?;
        match (index.get(&rec[ce]), panel.quarter_index(q)) {
            (Some(&i), Some(j)) => counts[(i, j)] += count_mentions(&rec[ct], dict) as f64,
            _ => log::warn!(
                "{}: row {} ({} {q}) is outside the panel",
                docs.display(),
                k + 2,
                &rec[ce]
            ),
        }
    }
    Ok(counts)
}

fn ingest(a: &IngestArgs) -> Result<Outputs> {
    let mut out = Outputs::new(&a.out)?;
    let schema = match &a.schema {
        Some(p) => {
            out.input(p);
            Schema::from_toml(&std::fs::read_to_string(p)?)?
        }
        None => Schema::canonical().with_delimiter(a.delimiter),
    };
    out.input(&a.input);
    let mut panel = ingest_panel(&a.input, &schema)?;
    if let Some(docs) = &a.documents {
        out.input(docs);
        let dict = match &a.keywords {
            Some(k) => {
                out.input(k);
                KeywordDictionary::parse(&std::fs::read_to_string(k)?)?
            }
            None => KeywordDictionary::genai_default(),
        };
        let counts = mention_counts(&panel, docs, &dict)?;
        panel = panel.with_variable(MENTIONS, Variable::from_matrix(counts))?;
    }
    if let Some(q) = a.earliest {
        let mode = match a.treatment_mode {
            TreatmentModeArg::Raw => TreatmentMode::Raw,
            TreatmentModeArg::Absorbing => TreatmentMode::Absorbing,
        };
        panel = panel.with_treatment_from_mentions(mode, q)?;
    }
    let required = if a.require.is_empty() {
        [ROA, ROE]
            .iter()
            .filter(|v| panel.variable(v).is_some())
            .map(|s| s.to_string())
            .collect()
    } else {
        a.require.clone()
    };
    let (mut panel, filter) = apply_filter(
        &panel,
        &SampleFilter {
            min_quarters: a.min_quarters,
            required_fields: required,
        },
    )?;
    let mut winsorized = Vec::new();
    if a.winsorize != "none" {
        let (lo, hi) = a
            .winsorize
            .split_once(':')
            .and_then(|(l, h)| Some((l.parse::<f64>().ok()?, h.parse::<f64>().ok()?)))
            .context("--winsorize expects LOW:HIGH percentiles or `none`")?;
        for name in [ROA, ROE] {
            if let Some(v) = panel.variable(name) {
                let w = winsorize(v, lo, hi)?;
                panel = panel.with_variable(name, w)?;
                winsorized.push(name.to_string());
            }
        }
    }
    let mut buf = Vec::new();
    write_panel(&panel, &mut buf, ',')?;
    out.write_bytes(&a.out, &buf)?;
    let mut miss = Vec::new();
    let missing_cells = write_missing_report(&panel, &mut miss)?;
    out.write_bytes(&out.sidecar("missing.csv"), &miss)?;
    let report = IngestReport {
        entities: panel.n(),
        quarters: panel.t(),
        first_quarter: panel.quarters().first().copied(),
        last_quarter: panel.quarters().last().copied(),
        filter,
        winsorized,
        sdid_excluded: (0..panel.n())
            .filter(|&i| panel.sdid_excluded()[i])
            .map(|i| panel.entity_ids()[i].clone())
            .collect(),
        missing_cells,
    };
    out.write_json(&out.sidecar("report.json"), &report)?;
    Ok(out)
}

// ---------- weights ----------

#[derive(Serialize)]
struct WeightsSummary {
    source: String,
    kind: WeightKind,
    n: usize,
    row_normalized: bool,
    rho_interval: (f64, f64),
}

fn weights(a: &WeightsCmd) -> Result<Outputs> {
    let mut out = Outputs::new(&a.out)?;
    let panel = load_panel(&a.panel, &mut out)?;
    let w = build_weights(&panel, &a.weights, &mut out)?;
    out.write_bytes(&a.out, &weights_csv(&w)?)?;
    let summary = WeightsSummary {
        source: a.weights.weights.clone(),
        kind: w.kind(),
        n: w.n(),
        row_normalized: w.is_row_normalized(),
        rho_interval: w.rho_interval()?,
    };
    out.write_json(&out.sidecar("summary.json"), &summary)?;
    Ok(out)
}

// ---------- dsdm / effects ----------

#[derive(Serialize, Deserialize)]
struct SavedWeights {
    source: String,
    kind: WeightKind,
    #[serde(with = "serde_matrix")]
    matrix: DMatrix<f64>,
}

/// Everything `effects` needs to work from the fit file alone.
#[derive(Serialize, Deserialize)]
struct FitFile {
    outcome: Outcome,
    controls: Vec<String>,
    entities: Vec<String>,
    table: Vec<ParamRow>,
    fit: DsdmFit,
    weights: SavedWeights,
}

fn fit_dsdm(a: &DsdmArgs) -> Result<Outputs> {
    let mut out = Outputs::new(&a.out)?;
    let panel = load_panel(&a.panel, &mut out)?;
    let w = build_weights(&panel, &a.weights, &mut out)?;
    let controls = match &a.controls {
        Some(c) => c.clone(),
        None => panel
            .control_names()
            .iter()
            .map(|s| s.to_string())
            .collect(),
    };
    let spec = DsdmSpec {
        outcome: a.outcome,
        weights: w.clone(),
        controls: controls.clone(),
        fixed_effects: match a.fixed_effects {
            FixedEffectsArg::Entity => FixedEffects::Entity,
            FixedEffectsArg::Time => FixedEffects::Time,
            FixedEffectsArg::Both => FixedEffects::Both,
        },
        estimator: a.estimator,
        bias_correction: !a.no_bias_correction,
    };
    let mcmc = McmcConfig {
        iterations: a.iterations,
        burn_in: a.burn_in,
        seed: a.seed,
        rho_step: a.rho_step,
        ..Default::default()
    };
    let fit = dsdm::fit(&spec, &panel, &mcmc)?;
    for warning in &fit.diagnostics.warnings {
        log::warn!("{warning}");
    }
    let table = fit.table();
    let rows: Vec<Vec<String>> = table
        .iter()
        .map(|r| {
            vec![
                r.name.clone(),
                num(r.estimate),
                num(r.se),
                num(r.lower),
                num(r.upper),
                num(r.p_value),
                r.stars.clone(),
            ]
        })
        .collect();
    out.write_table(
        &out.sidecar("params.csv"),
        &[
            "parameter",
            "estimate",
            "se",
            "lower",
            "upper",
            "p_value",
            "stars",
        ],
        &rows,
    )?;
    if a.draws {
        match &fit.draws {
            Some(d) => {
                let header: Vec<&str> = fit.param_names.iter().map(String::as_str).collect();
                let rows: Vec<Vec<String>> = (0..d.nrows())
                    .map(|i| d.row(i).iter().map(|v| num(*v)).collect())
                    .collect();
                out.write_table(&out.sidecar("draws.csv"), &header, &rows)?;
            }
            None => log::warn!("--draws has no effect for the {:?} estimator", a.estimator),
        }
    }
    let file = FitFile {
        outcome: a.outcome,
        controls,
        entities: panel.entity_ids().to_vec(),
        table,
        fit,
        weights: SavedWeights {
            source: a.weights.weights.clone(),
            kind: w.kind(),
            matrix: w.matrix().clone(),
        },
    };
    out.write_json(&a.out, &file)?;
    Ok(out)
}

#[derive(Serialize)]
struct EffectRow {
    effect: &'static str,
    estimate: f64,
    se: f64,
    p_value: f64,
    stars: String,
}

#[derive(Serialize)]
struct EffectsFile {
    estimator: Estimator,
    rows: Vec<EffectRow>,
    decomposition: spillover::effects::EffectsDecomposition,
}

fn effects(a: &EffectsArgs) -> Result<Outputs> {
    let mut out = Outputs::new(&a.out)?;
    out.input(&a.fit);
    let text =
        std::fs::read_to_string(&a.fit).with_context(|| format!("reading {}", a.fit.display()))?;
    let file: FitFile = serde_json::from_str(&text)
        .with_context(|| format!("{} is not a dsdm fit file", a.fit.display()))?;
    let w = WeightMatrix::from_raw_unnormalized(file.weights.matrix, file.weights.kind)?;
    let d = decompose_with_uncertainty(&file.fit, &w, a.reps, a.seed)?;
    let se = d.se.as_ref().expect("uncertainty requested");
    let row = |effect, estimate: f64, se: f64| {
        let p = if se > 0.0 {
            two_sided_p(estimate / se)
        } else {
            f64::NAN
        };
        EffectRow {
            effect,
            estimate,
            se,
            p_value: p,
            stars: with_stars(p),
        }
    };
    let rows = vec![
        row("Direct", d.direct, se.direct),
        row("Indirect", d.indirect, se.indirect),
        row("Total", d.total, se.total),
        row(
            "Indirect/Total Ratio",
            d.ratio_indirect_total.unwrap_or(f64::NAN),
            se.ratio,
        ),
    ];
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.effect.to_string(),
                num(r.estimate),
                num(r.se),
                num(r.p_value),
                r.stars.clone(),
            ]
        })
        .collect();
    out.write_table(
        &out.sidecar("table.csv"),
        &["effect", "estimate", "se", "p_value", "stars"],
        &table,
    )?;
    out.write_json(
        &a.out,
        &EffectsFile {
            estimator: file.fit.estimator,
            rows,
            decomposition: d,
        },
    )?;
    Ok(out)
}

// ---------- sdid ----------

fn sdid_setup(a: &SdidArgs, out: &mut Outputs) -> Result<(PanelDataset, SdidConfig)> {
    let mut panel = load_panel(&a.panel_args(), out)?;
    if let Some(q) = a.earliest {
        panel = panel
            .with_treatment_from_mentions(TreatmentMode::Absorbing, q)
            .context("--earliest rebuilds treatment from the `mentions` variable")?;
    }
    let cfg = SdidConfig {
        outcome: a.outcome,
        t0: a.t0,
        bootstrap: a.bootstrap,
        seed: a.seed,
        zeta_unit: a.zeta_unit,
        zeta_time: a.zeta_time,
        with_intercept: a.intercept,
    };
    Ok((panel, cfg))
}

#[derive(Serialize)]
struct AttRow {
    sample: String,
    att: f64,
    se: f64,
    ci_lower: f64,
    ci_upper: f64,
    p_value: f64,
    stars: String,
    n_treated: usize,
    n_control: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

impl AttRow {
    fn from_result(sample: &str, r: &SdidResult) -> Self {
        let p = if r.se > 0.0 {
            two_sided_p(r.att / r.se)
        } else {
            f64::NAN
        };
        Self {
            sample: sample.into(),
            att: r.att,
            se: r.se,
            ci_lower: r.ci_lower,
            ci_upper: r.ci_upper,
            p_value: p,
            stars: with_stars(p),
            n_treated: r.n_treated,
            n_control: r.n_control,
            note: None,
        }
    }

    fn failed(sample: &str, why: String) -> Self {
        Self {
            sample: sample.into(),
            att: f64::NAN,
            se: f64::NAN,
            ci_lower: f64::NAN,
            ci_upper: f64::NAN,
            p_value: f64::NAN,
            stars: String::new(),
            n_treated: 0,
            n_control: 0,
            note: Some(why),
        }
    }
}

#[derive(Serialize)]
struct UnitWeight {
    entity: String,
    omega: f64,
}

#[derive(Serialize)]
struct TimeWeight {
    quarter: Quarter,
    lambda: f64,
}

#[derive(Serialize)]
struct SdidFile {
    outcome: Outcome,
    t0: Quarter,
    table: Vec<AttRow>,
    full: SdidResult,
    unit_weights: Vec<UnitWeight>,
    time_weights: Vec<TimeWeight>,
    dropped_entities: Vec<String>,
}

fn estimate_with_ids(
    panel: &PanelDataset,
    cfg: &SdidConfig,
) -> Result<(SdidResult, SdidPanel, Vec<usize>, usize)> {
    let sp = SdidPanel::from_panel(panel, cfg.outcome)?;
    let problem = sp.problem(cfg.t0, cfg)?;
    let fit = fit_sdid_bootstrap(&problem, cfg.bootstrap, cfg.seed)?;
    let controls = problem.controls();
    let t0 = problem.t0;
    Ok((fit, sp, controls, t0))
}

fn sdid_main(a: &SdidArgs, split: f64, no_split: bool) -> Result<Outputs> {
    let mut out = Outputs::new(&a.out)?;
    let (panel, cfg) = sdid_setup(a, &mut out)?;
    let (full, sp, controls, t0) = estimate_with_ids(&panel, &cfg)?;
    let mut table = vec![AttRow::from_result("Full sample", &full)];
    if !no_split {
        if panel.avg_log_assets().is_some() {
            let (large, small) = size_split(&panel, split)?;
            let label = format!("top {:.0}%", 100.0 * (1.0 - split));
            for (name, sub) in [
                (format!("Large banks ({label})"), large),
                ("Small banks".to_string(), small),
            ] {
                // the subsample keeps the full-sample adoption quarter
                let sub_cfg = SdidConfig {
                    t0: Some(sp.quarters[t0]),
                    ..cfg.clone()
                };
                table.push(match estimate_with_ids(&sub, &sub_cfg) {
                    Ok((r, ..)) => AttRow::from_result(&name, &r),
                    Err(e) => AttRow::failed(&name, e.to_string()),
                });
            }
        } else {
            log::info!("no log_assets variable; size split skipped");
        }
    }
    let unit_weights: Vec<UnitWeight> = controls
        .iter()
        .zip(&full.omega)
        .map(|(&i, &w)| UnitWeight {
            entity: sp.ids[i].clone(),
            omega: w,
        })
        .collect();
    let time_weights: Vec<TimeWeight> = full
        .lambda
        .iter()
        .enumerate()
        .map(|(c, &l)| TimeWeight {
            quarter: sp.quarters[c],
            lambda: l,
        })
        .collect();
    let rows: Vec<Vec<String>> = table
        .iter()
        .map(|r| {
            vec![
                r.sample.clone(),
                num(r.att),
                num(r.se),
                num(r.ci_lower),
                num(r.ci_upper),
                num(r.p_value),
                r.stars.clone(),
                r.n_treated.to_string(),
                r.n_control.to_string(),
            ]
        })
        .collect();
    out.write_table(
        &out.sidecar("att.csv"),
        &[
            "sample",
            "att",
            "se",
            "ci_lower",
            "ci_upper",
            "p_value",
            "stars",
            "n_treated",
            "n_control",
        ],
        &rows,
    )?;
    let uw: Vec<Vec<String>> = unit_weights
        .iter()
        .map(|u| vec![u.entity.clone(), num(u.omega)])
        .collect();
    out.write_table(&out.sidecar("unit_weights.csv"), &["entity", "omega"], &uw)?;
    let tw: Vec<Vec<String>> = time_weights
        .iter()
        .map(|t| vec![t.quarter.to_string(), num(t.lambda)])
        .collect();
    out.write_table(
        &out.sidecar("time_weights.csv"),
        &["quarter", "lambda"],
        &tw,
    )?;
    out.write_json(
        &a.out,
        &SdidFile {
            outcome: cfg.outcome,
            t0: sp.quarters[t0],
            table,
            full,
            unit_weights,
            time_weights,
            dropped_entities: sp.dropped.clone(),
        },
    )?;
    Ok(out)
}

fn parse_horizons(s: &str) -> Result<(i64, i64)> {
    let (lo, hi) = s
        .split_once(':')
        .and_then(|(l, h)| Some((l.trim().parse().ok()?, h.trim().parse().ok()?)))
        .with_context(|| format!("--horizons expects MIN:MAX, got `{s}`"))?;
    Ok((lo, hi))
}

fn sdid_event_study(a: &EventStudyArgs) -> Result<Outputs> {
    let mut out = Outputs::new(&a.sdid.out)?;
    let (panel, cfg) = sdid_setup(&a.sdid, &mut out)?;
    let (min_horizon, max_horizon) = parse_horizons(&a.horizons)?;
    let es: EventStudyResult = event_study(
        &panel,
        &EventStudyConfig {
            sdid: cfg,
            min_horizon,
            max_horizon,
        },
    )?;
    let rows: Vec<Vec<String>> = es
        .horizons
        .iter()
        .map(|h| {
            vec![
                h.horizon.to_string(),
                num(h.att),
                num(h.se),
                num(h.ci_lower),
                num(h.ci_upper),
                h.n_treated.to_string(),
                h.n_cohorts.to_string(),
            ]
        })
        .collect();
    out.write_table(
        &out.sidecar("series.csv"),
        &[
            "horizon",
            "att",
            "se",
            "ci_lower",
            "ci_upper",
            "n_treated",
            "n_cohorts",
        ],
        &rows,
    )?;
    out.write_json(&a.sdid.out, &es)?;
    Ok(out)
}

#[derive(Serialize)]
#[serde(tag = "design", rename_all = "lowercase")]
enum PlaceboFile {
    Shift {
        fake_t0: Quarter,
        row: AttRow,
        result: SdidResult,
    },
    Random {
        reps: usize,
        distribution: PlaceboDistribution,
    },
}

fn placebo(a: &PlaceboArgs) -> Result<Outputs> {
    let mut out = Outputs::new(&a.sdid.out)?;
    let (panel, cfg) = sdid_setup(&a.sdid, &mut out)?;
    let file = match (a.shift, a.random) {
        (Some(q), false) => {
            let r = placebo_shift(&panel, &cfg, q)?;
            PlaceboFile::Shift {
                fake_t0: q,
                row: AttRow::from_result(&format!("Placebo at {q}"), &r),
                result: r,
            }
        }
        (None, true) => {
            let d = placebo_random(&panel, &cfg, a.reps, a.sdid.seed)?;
            let rows: Vec<Vec<String>> = d
                .draws
                .iter()
                .enumerate()
                .map(|(k, v)| vec![k.to_string(), num(*v)])
                .collect();
            out.write_table(&out.sidecar("draws.csv"), &["permutation", "att"], &rows)?;
            PlaceboFile::Random {
                reps: a.reps,
                distribution: d,
            }
        }
        _ => bail!("choose one placebo design: --shift QUARTER or --random"),
    };
    out.write_json(&a.sdid.out, &file)?;
    Ok(out)
}

// ---------- netrisk ----------

fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if k == 0 => continue,
            Err(_) => bail!("{}: row {} is not numeric", path.display(), k + 1),
        }
    }
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        bail!("{}: matrix is not square", path.display());
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

#[derive(Serialize)]
struct NetriskFile {
    stats: GraphStats,
    hub_ids: Vec<String>,
    core_ids: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coupling: Option<CouplingSummary>,
}

fn netrisk(a: &NetriskArgs) -> Result<Outputs> {
    let mut out = Outputs::new(&a.out)?;
    let panel = load_panel(&a.panel, &mut out)?;
    let w = build_weights(&panel, &a.weights, &mut out)?;
    let threshold = match a.threshold.as_str() {
        "auto" => None,
        t => Some(
            t.parse::<f64>()
                .with_context(|| format!("--threshold expects a number or `auto`, got `{t}`"))?,
        ),
    };
    let adopters = panel.adopters();
    let g = binarize(&w, threshold, adopters.clone(), panel.avg_log_assets())?;
    let stats = graph_stats(&g);
    for warning in &stats.warnings {
        log::warn!("{warning}");
    }
    let ids = panel.entity_ids();
    let edges: Vec<Vec<String>> = edge_list(&g, &w)
        .iter()
        .map(|e| {
            vec![
                ids[e.source].clone(),
                ids[e.target].clone(),
                num(e.weight),
                u8::from(e.both_adopters).to_string(),
            ]
        })
        .collect();
    out.write_table(
        &out.sidecar("edges.csv"),
        &["source", "target", "weight", "both_adopters"],
        &edges,
    )?;
    let coupling = match &a.overlap {
        Some(p) => {
            out.input(p);
            let overlap = read_matrix(p)?;
            let n = panel.n();
            let base = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { a.base_corr });
            Some(coupling_matrix(&base, a.delta, &adopters, &overlap)?.1)
        }
        None => None,
    };
    let file = NetriskFile {
        hub_ids: stats.hubs.iter().map(|&i| ids[i].clone()).collect(),
        core_ids: stats.core.nodes.iter().map(|&i| ids[i].clone()).collect(),
        stats,
        coupling,
    };
    out.write_json(&a.out, &file)?;
    Ok(out)
}

// ---------- simulate ----------

fn base_spec(c: &SimCommon) -> Result<DgpSpec> {
    let t0 = c.t0.unwrap_or(c.t / 2);
    let treatment = match c.treatment {
        TreatmentArg::None => TreatmentRule::None,
        TreatmentArg::Random => TreatmentRule::RandomShare { share: c.share },
        TreatmentArg::Logit => TreatmentRule::Logit {
            share: c.share,
            slope: c.slope,
        },
        TreatmentArg::Staggered => TreatmentRule::Staggered {
            share: c.share,
            first: c.first.unwrap_or(c.t / 10),
            last: c.last.unwrap_or(c.t * 9 / 10),
        },
    };
    Ok(DgpSpec {
        n: c.n,
        t: c.t,
        sigma: c.sigma,
        fe_scale: c.fe_scale,
        gamma: c.gamma.clone(),
        treatment,
        t0,
        innovation: match c.df {
            Some(df) => Innovation::StudentT { df },
            None => Innovation::Gaussian,
        },
        first_quarter: c.first_quarter,
        seed: c.seed,
        ..Default::default()
    })
}

fn write_simulated(sim: &Simulated, c: &SimCommon, out: &mut Outputs) -> Result<()> {
    let mut buf = Vec::new();
    write_panel(&sim.panel, &mut buf, ',')?;
    out.write_bytes(&c.out, &buf)?;
    let truth_path = c.truth.clone().unwrap_or_else(|| out.sidecar("truth.json"));
    out.write_json(&truth_path, &sim.truth)?;
    Ok(())
}

fn simulate_dsdm(a: &SimDsdmArgs) -> Result<Outputs> {
    let mut out = Outputs::new(&a.common.out)?;
    let n = a.common.n;
    let (w, sizes) = match a.weights.as_str() {
        "network" => {
            let sizes = synthetic_sizes(n, a.common.seed);
            (network_weights(&sizes, None)?, Some(sizes))
        }
        "ring" => (ring_weights(n, a.ring_k)?, None),
        path => {
            out.input(Path::new(path));
            (load_weights(Path::new(path), ',', true)?, None)
        }
    };
    let spec = DgpSpec {
        tau: a.tau,
        rho: a.rho,
        eta: a.eta,
        beta: a.beta,
        theta: a.theta,
        weights: Some(w.clone()),
        log_assets: sizes,
        burn_in: a.burn_in,
        outcome: a.outcome,
        ..base_spec(&a.common)?
    };
    let sim = gen_dsdm(&spec)?;
    write_simulated(&sim, &a.common, &mut out)?;
    out.write_bytes(&out.sidecar("weights.csv"), &weights_csv(&w)?)?;
    Ok(out)
}

fn simulate_sdid(a: &SimSdidArgs) -> Result<Outputs> {
    let mut out = Outputs::new(&a.common.out)?;
    let spec = DgpSpec {
        sdid: SdidVariant {
            effect: a.effect,
            trend_sd: a.trend_sd,
            cohorts: a.cohorts.clone(),
            effect_lead: a.effect_lead,
        },
        outcome: a.outcome,
        ..base_spec(&a.common)?
    };
    let sim = gen_sdid(&spec)?;
    write_simulated(&sim, &a.common, &mut out)?;
    Ok(out)
}
