mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use spillover::dsdm::Estimator;
use spillover::panel::{Outcome, Quarter};

#[derive(Debug, Parser)]
#[command(
    name = "spillover",
    version,
    about = "Spatial Durbin and synthetic DiD estimators for bank panels"
)]
struct Cli {
    /// Worker threads for parallel loops (0 = one per core)
    #[arg(long, env = "SPILLOVER_WORKERS", default_value_t = 0, global = true)]
    workers: usize,

    /// More log output (-v info, -vv debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Read a long-format file into the canonical panel layout
    Ingest(IngestArgs),
    /// Build or load a spatial weight matrix
    Weights(WeightsCmd),
    /// Fit the dynamic spatial Durbin model
    Dsdm(DsdmArgs),
    /// Direct, indirect and total effects from a saved fit
    Effects(EffectsArgs),
    /// Synthetic difference-in-differences
    Sdid(SdidCmd),
    /// Clustering, path and hub statistics of the thresholded weight graph
    Netrisk(NetriskArgs),
    /// Generate synthetic panels with known parameters
    #[command(subcommand)]
    Simulate(SimulateCmd),
    /// Placebo designs for the SDID estimate (same as `sdid placebo`)
    Placebo(PlaceboArgs),
}

fn parse_quarter(s: &str) -> Result<Quarter, String> {
    s.parse().map_err(|e: spillover::Error| e.to_string())
}

#[derive(Debug, Args, Serialize, Clone)]
struct PanelArgs {
    /// Panel file in the canonical layout written by `ingest`
    #[arg(long)]
    panel: PathBuf,
    /// Schema file (TOML) for files not in the canonical layout
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Field delimiter of the panel file
    #[arg(long, default_value_t = ',')]
    delimiter: char,
}

#[derive(Debug, Args, Serialize, Clone)]
struct WeightsArgs {
    /// `network`, `geographic`, or the path of an N×N delimited matrix
    #[arg(long, default_value = "network")]
    weights: String,
    /// Kernel bandwidth for network weights (default: sd of average log assets)
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Use a loaded matrix as given instead of row-normalizing it
    #[arg(long)]
    no_normalize: bool,
}

#[derive(Debug, Args, Serialize)]
struct IngestArgs {
    /// Long-format delimited input (one row per entity-quarter)
    #[arg(long)]
    input: PathBuf,
    /// Column mapping (TOML); default is the canonical layout
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Field delimiter when no schema is given
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    /// Filings table with columns entity, quarter, text; mention counts are added as `mentions`
    #[arg(long)]
    documents: Option<PathBuf>,
    /// Keyword dictionary (category headers in brackets, one phrase per line)
    #[arg(long)]
    keywords: Option<PathBuf>,
    /// Build `treatment` from `mentions`, counting adoption from this quarter
    #[arg(long, value_parser = parse_quarter)]
    earliest: Option<Quarter>,
    /// Treatment indicator rule
    #[arg(long, value_enum, default_value_t = TreatmentModeArg::Absorbing)]
    treatment_mode: TreatmentModeArg,
    /// Pooled winsorization percentiles for roa/roe as LOW:HIGH, or `none`
    #[arg(long, default_value = "1:99")]
    winsorize: String,
    /// Minimum quarters with all required fields observed
    #[arg(long, default_value_t = 4)]
    min_quarters: usize,
    /// Fields that must be observed (default: roa and roe when present)
    #[arg(long, value_delimiter = ',')]
    require: Vec<String>,
    /// Canonical panel output; a missing-cell report and filter report go beside it
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum TreatmentModeArg {
    Raw,
    Absorbing,
}

#[derive(Debug, Args, Serialize)]
struct WeightsCmd {
    #[command(flatten)]
    panel: PanelArgs,
    #[command(flatten)]
    weights: WeightsArgs,
    /// Matrix output (delimited); a summary JSON goes beside it
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum FixedEffectsArg {
    Entity,
    Time,
    Both,
}

#[derive(Debug, Args, Serialize)]
struct DsdmArgs {
    #[command(flatten)]
    panel: PanelArgs,
    #[command(flatten)]
    weights: WeightsArgs,
    /// Outcome variable
    #[arg(long, default_value = "roa")]
    outcome: Outcome,
    /// mle, qmle or bayes
    #[arg(long, default_value = "mle")]
    estimator: Estimator,
    /// Control variables (default: every non-reserved panel variable)
    #[arg(long, value_delimiter = ',')]
    controls: Option<Vec<String>>,
    /// Fixed effects
    #[arg(long, value_enum, default_value_t = FixedEffectsArg::Both)]
    fixed_effects: FixedEffectsArg,
    /// Skip the dynamic-panel bias correction (mle/qmle)
    #[arg(long)]
    no_bias_correction: bool,
    /// MCMC sweeps including burn-in
    #[arg(long, default_value_t = 10_000)]
    iterations: usize,
    /// MCMC burn-in sweeps
    #[arg(long, default_value_t = 5_000)]
    burn_in: usize,
    /// Initial random-walk step for rho
    #[arg(long, default_value_t = 0.05)]
    rho_step: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Also write the posterior draws as a delimited sidecar
    #[arg(long)]
    draws: bool,
    /// Result file (JSON); the parameter table CSV and manifest go beside it
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct EffectsArgs {
    /// Fit file written by `dsdm`
    #[arg(long)]
    fit: PathBuf,
    /// Parameter draws for the standard errors
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

// Kept flat: clap cannot detect an optional flattened group that itself
// contains flattened groups.
#[derive(Debug, Args, Serialize, Clone)]
struct SdidArgs {
    /// Panel file in the canonical layout written by `ingest`
    #[arg(long)]
    panel: PathBuf,
    /// Schema file (TOML) for files not in the canonical layout
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Field delimiter of the panel file
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    /// Outcome variable
    #[arg(long, default_value = "roe")]
    outcome: Outcome,
    /// Adoption quarter (default: earliest first-treated quarter)
    #[arg(long, value_parser = parse_quarter)]
    t0: Option<Quarter>,
    /// Rebuild treatment from `mentions` from this quarter on, excluding earlier mentioners
    #[arg(long, value_parser = parse_quarter)]
    earliest: Option<Quarter>,
    /// Bootstrap replications
    #[arg(long, default_value_t = 200)]
    bootstrap: usize,
    /// Seed for bootstrap and permutation draws
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Unit-weight penalty (default: (N_tr·T_post)^(1/4)·σ̂)
    #[arg(long)]
    zeta_unit: Option<f64>,
    /// Time-weight penalty (default: 1e-6·σ̂)
    #[arg(long)]
    zeta_time: Option<f64>,
    /// Allow a level shift in the unit-weight fit
    #[arg(long)]
    intercept: bool,
    /// Result file (JSON); tables and weight vectors go beside it
    #[arg(long)]
    out: PathBuf,
}

impl SdidArgs {
    fn panel_args(&self) -> PanelArgs {
        PanelArgs {
            panel: self.panel.clone(),
            schema: self.schema.clone(),
            delimiter: self.delimiter,
        }
    }
}

#[derive(Debug, Args, Serialize)]
#[command(args_conflicts_with_subcommands = true)]
struct SdidCmd {
    #[command(subcommand)]
    action: Option<SdidAction>,
    #[command(flatten)]
    main: Option<SdidArgs>,
    /// Size split quantile of average log assets for the large/small rows
    #[arg(long, default_value_t = 0.75)]
    size_split: f64,
    /// Only the full-sample row
    #[arg(long)]
    no_split: bool,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SdidAction {
    /// Horizon-specific ATTs for staggered adoption
    EventStudy(EventStudyArgs),
    /// Placebo designs
    Placebo(PlaceboArgs),
}

#[derive(Debug, Args, Serialize)]
struct EventStudyArgs {
    #[command(flatten)]
    sdid: SdidArgs,
    /// Horizon window MIN:MAX relative to adoption
    #[arg(long, default_value = "-4:4", allow_hyphen_values = true)]
    horizons: String,
}

#[derive(Debug, Args, Serialize)]
struct PlaceboArgs {
    #[command(flatten)]
    sdid: SdidArgs,
    /// Pretend adoption happened in this (pre-adoption) quarter
    #[arg(long, value_parser = parse_quarter, conflicts_with = "random")]
    shift: Option<Quarter>,
    /// Permute treated labels across entities
    #[arg(long)]
    random: bool,
    /// Permutations for --random (at least 100)
    #[arg(long, default_value_t = 500)]
    reps: usize,
}

#[derive(Debug, Args, Serialize)]
struct NetriskArgs {
    #[command(flatten)]
    panel: PanelArgs,
    #[command(flatten)]
    weights: WeightsArgs,
    /// Edge threshold on max(w_ij, w_ji), or `auto` for the median positive entry
    #[arg(long, default_value = "auto")]
    threshold: String,
    /// N×N vendor-overlap matrix for the coupling summary
    #[arg(long)]
    overlap: Option<PathBuf>,
    /// Baseline pairwise correlation for the coupling summary
    #[arg(long, default_value_t = 0.0)]
    base_corr: f64,
    /// Additional correlation from shared AI systems
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// Result file (JSON); the edge list CSV goes beside it
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SimulateCmd {
    /// Panel from the dynamic spatial Durbin recursion
    Dsdm(SimDsdmArgs),
    /// Potential-outcomes panel for SDID
    Sdid(SimSdidArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum TreatmentArg {
    None,
    Random,
    Logit,
    Staggered,
}

#[derive(Debug, Args, Serialize)]
struct SimCommon {
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = 40)]
    t: usize,
    /// Innovation standard deviation
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Standard deviation of entity and time effects
    #[arg(long, default_value_t = 1.0)]
    fe_scale: f64,
    /// Coefficients of iid N(0,1) controls x1, x2, …
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    gamma: Vec<f64>,
    /// Treatment assignment rule
    #[arg(long, value_enum, default_value_t = TreatmentArg::Random)]
    treatment: TreatmentArg,
    /// Treated share
    #[arg(long, default_value_t = 0.5)]
    share: f64,
    /// Adoption column for random and logit rules (default T/2)
    #[arg(long)]
    t0: Option<usize>,
    /// Selection strength of the logit rule
    #[arg(long, default_value_t = 1.0)]
    slope: f64,
    /// Adoption window for the staggered rule (default 10%..90% of T)
    #[arg(long)]
    first: Option<usize>,
    #[arg(long)]
    last: Option<usize>,
    /// Student-t degrees of freedom for the innovations (default Gaussian)
    #[arg(long)]
    df: Option<f64>,
    #[arg(long, value_parser = parse_quarter, default_value = "2010Q1")]
    first_quarter: Quarter,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Panel output in the canonical layout
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth JSON (default: beside the panel)
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SimDsdmArgs {
    #[command(flatten)]
    common: SimCommon,
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    tau: f64,
    #[arg(long, default_value_t = 0.4, allow_hyphen_values = true)]
    rho: f64,
    #[arg(long, default_value_t = -0.2, allow_hyphen_values = true)]
    eta: f64,
    #[arg(long, default_value_t = 0.3, allow_hyphen_values = true)]
    beta: f64,
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    theta: f64,
    /// `network` (kernel on synthetic sizes, written as log_assets), `ring`, or a matrix file
    #[arg(long, default_value = "network")]
    weights: String,
    /// Neighbours on each side for the ring
    #[arg(long, default_value_t = 2)]
    ring_k: usize,
    #[arg(long, default_value_t = 50)]
    burn_in: usize,
    #[arg(long, default_value = "roa")]
    outcome: Outcome,
}

#[derive(Debug, Args, Serialize)]
struct SimSdidArgs {
    #[command(flatten)]
    common: SimCommon,
    /// Effect added to treated cells from adoption on
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    effect: f64,
    /// Sd of entity-specific linear trends (scaled by the latent effect)
    #[arg(long, default_value_t = 0.0)]
    trend_sd: f64,
    /// Adoption columns assigned round-robin to treated entities
    #[arg(long, value_delimiter = ',')]
    cohorts: Vec<usize>,
    /// Quarters by which the effect precedes recorded adoption
    #[arg(long, default_value_t = 0)]
    effect_lead: usize,
    #[arg(long, default_value = "roe")]
    outcome: Outcome,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("spillover error [cli]: cannot start worker pool: {e}");
            return ExitCode::FAILURE;
        }
    };
    let module = cli.command.module();
    match pool.install(|| commands::run(&cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let cause: Vec<String> = e.chain().map(ToString::to_string).collect();
            eprintln!("spillover error [{module}]: {}", cause.join(": "));
            ExitCode::FAILURE
        }
    }
}

impl Command {
    fn module(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "panel",
            Command::Weights(_) => "spatial_weights",
            Command::Dsdm(_) => "dsdm",
            Command::Effects(_) => "effects",
            Command::Sdid(_) | Command::Placebo(_) => "sdid",
            Command::Netrisk(_) => "netrisk",
            Command::Simulate(_) => "simulate",
        }
    }
}
