//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime or verification failure, 2 usage or
//! configuration error.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bias::BiasParams;
use crate::distribution::TrueModel;
use crate::error::LabError;
use crate::fairness::{ConstraintKind, Criterion};
use crate::plot::sweep_svg;
use crate::recovery::{read_sweep_csv, recheck_rows, recovery_region, AxisSpec, BiasFamily};
use crate::simulate::{
    default_table_columns, intervention_table, run_experiment, ExperimentConfig, Intervention,
    TableColumn, TableSettings, DEFAULT_RECOVERY_TOLERANCE, DEFAULT_THRESHOLD_GRID,
};
use crate::verify::{run_suite, Suite, VerifyOptions};

pub const THREADS_ENV: &str = "BIASED_ERM_LAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "biased-erm-lab", version, about = "Fairness-constrained ERM under biased training data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sweep two parameters and classify each cell by recovery verdict.
    Region(RegionArgs),
    /// Run a Monte Carlo experiment.
    Experiment(ExperimentArgs),
    /// Run the invariant suites.
    Verify(VerifyArgs),
    /// Build the intervention by bias-model recovery table.
    Table(TableArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// Mass of group B.
    #[arg(long)]
    pub r: Option<f64>,
    /// Positive mass of the Bayes rule.
    #[arg(long)]
    pub p: Option<f64>,
    /// Label noise.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Retention of true positives in group B.
    #[arg(long = "beta-pos", alias = "beta")]
    pub beta_pos: Option<f64>,
    /// Retention of true negatives in group B.
    #[arg(long = "beta-neg")]
    pub beta_neg: Option<f64>,
    /// Probability a group B positive is labelled negative.
    #[arg(long)]
    pub nu: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Format {
    Csv,
    Json,
    Svg,
    Md,
}

#[derive(Debug, Args)]
pub struct RegionArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Horizontal axis as `name:lo:hi` (eta, beta, beta_pos, beta_neg, nu, r).
    #[arg(long, default_value = "eta:0:0.499")]
    pub x: String,
    /// Vertical axis as `name:lo:hi`.
    #[arg(long, default_value = "beta:0.005:1")]
    pub y: String,
    /// Grid points per axis.
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Outputs to write; defaults to csv and svg.
    #[arg(long, value_enum)]
    pub format: Vec<Format>,
    /// Recompute the verdicts of an existing sweep CSV instead of sweeping.
    #[arg(long)]
    pub check: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterventionArg {
    None,
    Constraint,
    ReweightUr,
    ReweightLb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintArg {
    Eo,
    Eodds,
    Dp,
    None,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub intervention: Option<InterventionArg>,
    /// Constraint for `--intervention constraint`; `none` disables it.
    #[arg(long, value_enum)]
    pub constraint: Option<ConstraintArg>,
    /// Empirical constraint tolerance; defaults to 0.01 at n = 100000,
    /// scaled by n^-1/2.
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Threshold grid size per group.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also score each fitted pair on a fresh sample of this size.
    #[arg(long)]
    pub holdout: Option<usize>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Outputs to write; defaults to json and csv.
    #[arg(long, value_enum)]
    pub format: Vec<Format>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Suites to run (repeatable); all when omitted.
    #[arg(long)]
    pub suite: Vec<String>,
    /// Trials per randomized suite.
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Monte Carlo sample size for the reweighting suite.
    #[arg(long, default_value_t = 1_000_000)]
    pub mc_samples: usize,
    /// Write a JSON report and manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

#[derive(Debug, Args)]
pub struct TableArgs {
    /// JSON list of bias-model columns replacing the defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Skip the Monte Carlo column (writes CSV only).
    #[arg(long)]
    pub analytic_only: bool,
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Outputs to write; defaults to csv and md.
    #[arg(long, value_enum)]
    pub format: Vec<Format>,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

/// Parameter problems are usage errors; everything else is a runtime
/// failure.
fn classify(e: LabError) -> CliError {
    match e {
        LabError::Range { .. } | LabError::Invalid(_) => CliError::Usage(e.to_string()),
        other => CliError::Runtime(other.to_string()),
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub params: Value,
    pub seed: u64,
    pub version: String,
    pub outputs: Vec<String>,
    pub duration_secs: f64,
}

struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(path.display().to_string());
        Ok(())
    }

    fn finish(mut self, command: &str, params: Value, seed: u64, start: Instant) -> CliResult<()> {
        let path = self.dir.join("manifest.json");
        self.written.push(path.display().to_string());
        let manifest = RunManifest {
            command: command.to_string(),
            argv: std::env::args().collect(),
            params,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: self.written,
            duration_secs: start.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
        fs::write(&path, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        for o in &manifest.outputs {
            println!("wrote {o}");
        }
        Ok(())
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> crate::error::Result<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(classify)?;
    Ok(buf)
}

fn to_json<T: Serialize>(v: &T) -> CliResult<String> {
    serde_json::to_string_pretty(v).map_err(|e| CliError::Runtime(e.to_string()))
}

const DEFAULT_R: f64 = 1.0 / 3.0;
const DEFAULT_P: f64 = 0.5;
const DEFAULT_ETA: f64 = 0.2;

/// Model section of a config file; `r`, `p` and `eta` are required.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub r: f64,
    pub p: f64,
    pub eta: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasSpec {
    #[serde(default = "one")]
    pub beta_pos: f64,
    #[serde(default = "one")]
    pub beta_neg: f64,
    #[serde(default)]
    pub nu: f64,
}

impl Default for BiasSpec {
    fn default() -> Self {
        BiasSpec {
            beta_pos: 1.0,
            beta_neg: 1.0,
            nu: 0.0,
        }
    }
}

/// Experiment config file schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub model: ModelSpec,
    #[serde(default)]
    pub bias: BiasSpec,
    pub intervention: Option<InterventionArg>,
    pub constraint: Option<ConstraintArg>,
    pub tolerance: Option<f64>,
    pub n_train: Option<usize>,
    pub n_reps: Option<usize>,
    pub threshold_grid: Option<usize>,
    pub seed: Option<u64>,
    pub recovery_tolerance: Option<f64>,
    pub holdout: Option<usize>,
}

fn resolve_model(flags: &ModelArgs, file: Option<(&ModelSpec, &BiasSpec)>) -> CliResult<(TrueModel, BiasParams)> {
    let (fm, fb) = match file {
        Some((m, b)) => (Some(*m), Some(*b)),
        None => (None, None),
    };
    let pick = |flag: Option<f64>, file: Option<f64>, default: f64| flag.or(file).unwrap_or(default);
    let model = TrueModel::new(
        pick(flags.r, fm.map(|m| m.r), DEFAULT_R),
        pick(flags.p, fm.map(|m| m.p), DEFAULT_P),
        pick(flags.eta, fm.map(|m| m.eta), DEFAULT_ETA),
    )
    .map_err(classify)?;
    let bias = BiasParams::new(
        pick(flags.beta_pos, fb.map(|b| b.beta_pos), 1.0),
        pick(flags.beta_neg, fb.map(|b| b.beta_neg), 1.0),
        pick(flags.nu, fb.map(|b| b.nu), 0.0),
    )
    .map_err(classify)?;
    Ok((model, bias))
}

fn read_json_file<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn formats(requested: &[Format], defaults: &[Format], allowed: &[Format]) -> CliResult<Vec<Format>> {
    let list = if requested.is_empty() { defaults } else { requested };
    if let Some(f) = list.iter().find(|f| !allowed.contains(f)) {
        return Err(CliError::Usage(format!("format {f:?} is not available for this command")));
    }
    Ok(list.to_vec())
}

fn cmd_region(args: &RegionArgs) -> CliResult<()> {
    let start = Instant::now();
    let (model, bias) = resolve_model(&args.model, None)?;
    if args.steps == 0 {
        return Err(CliError::Usage("--steps must be at least 1".into()));
    }
    let x = AxisSpec::parse(&args.x, args.steps).map_err(classify)?;
    let y = AxisSpec::parse(&args.y, args.steps).map_err(classify)?;

    if let Some(path) = &args.check {
        let file = fs::File::open(path).map_err(|e| CliError::Runtime(format!("cannot open {}: {e}", path.display())))?;
        let rows = read_sweep_csv(file).map_err(classify)?;
        let bad = recheck_rows(&rows, x.axis, y.axis, &model, &bias).map_err(classify)?;
        println!("checked {} cells, {} mismatches", rows.len(), bad.len());
        if let Some(row) = bad.first() {
            return Err(CliError::Runtime(format!(
                "verdict mismatch at {}={} {}={}: file says {}",
                x.axis, row.x, y.axis, row.y, row.verdict
            )));
        }
        return Ok(());
    }

    let fmts = formats(&args.format, &[Format::Csv, Format::Svg], &[Format::Csv, Format::Svg, Format::Json])?;
    let sweep = recovery_region(&model, &bias, x, y).map_err(classify)?;
    let recovering = sweep.cells.iter().filter(|c| c.verdict == crate::recovery::Verdict::Recovers).count();
    println!(
        "{} cells, {} recover, {} solver/condition mismatches",
        sweep.cells.len(),
        recovering,
        sweep.mismatches
    );
    let mut out = Outputs::new(&args.out)?;
    for f in fmts {
        match f {
            Format::Csv => out.write("sweep.csv", &csv_bytes(|b| sweep.write_csv(b))?)?,
            Format::Svg => out.write("sweep.svg", sweep_svg(&sweep).as_bytes())?,
            Format::Json => out.write("sweep.json", to_json(&sweep)?.as_bytes())?,
            Format::Md => unreachable!("filtered"),
        }
    }
    let params = json!({ "model": model, "bias": bias, "x": x, "y": y });
    out.finish("region", params, args.seed, start)
}

fn constraint_criterion(c: ConstraintArg) -> Option<Criterion> {
    match c {
        ConstraintArg::Eo => Some(Criterion::EqualOpportunity),
        ConstraintArg::Eodds => Some(Criterion::EqualizedOdds),
        ConstraintArg::Dp => Some(Criterion::DemographicParity),
        ConstraintArg::None => None,
    }
}

/// Resolves flags over the optional config file over defaults.
pub fn resolve_experiment(args: &ExperimentArgs) -> CliResult<ExperimentConfig> {
    let file: Option<ExperimentFile> = args.config.as_deref().map(read_json_file).transpose()?;
    let f = file.as_ref();
    let (model, bias) = resolve_model(&args.model, f.map(|f| (&f.model, &f.bias)))?;
    let n_train = args.n.or(f.and_then(|f| f.n_train)).unwrap_or(100_000);
    let constraint = args.constraint.or(f.and_then(|f| f.constraint));
    let intervention_arg = args
        .intervention
        .or(f.and_then(|f| f.intervention))
        .unwrap_or(match constraint {
            Some(c) if c != ConstraintArg::None => InterventionArg::Constraint,
            _ => InterventionArg::None,
        });
    let tolerance = args
        .tolerance
        .or(f.and_then(|f| f.tolerance))
        .unwrap_or_else(|| ConstraintKind::default_empirical_tolerance(n_train));
    let intervention = match intervention_arg {
        InterventionArg::None => Intervention::None,
        InterventionArg::ReweightUr => Intervention::ReweightUnderrep,
        InterventionArg::ReweightLb => Intervention::ReweightLabelbias,
        InterventionArg::Constraint => match constraint.and_then(constraint_criterion) {
            Some(c) => Intervention::Constraint(ConstraintKind::empirical(c, tolerance).map_err(classify)?),
            None => Intervention::None,
        },
    };
    let config = ExperimentConfig {
        model,
        bias,
        intervention,
        n_train,
        n_reps: args.reps.or(f.and_then(|f| f.n_reps)).unwrap_or(50),
        threshold_grid: args.grid.or(f.and_then(|f| f.threshold_grid)).unwrap_or(DEFAULT_THRESHOLD_GRID),
        seed: args.seed.or(f.and_then(|f| f.seed)).unwrap_or(0),
        recovery_tolerance: f.and_then(|f| f.recovery_tolerance).unwrap_or(DEFAULT_RECOVERY_TOLERANCE),
        holdout: args.holdout.or(f.and_then(|f| f.holdout)),
    };
    config.validate().map_err(classify)?;
    Ok(config)
}

fn cmd_experiment(args: &ExperimentArgs) -> CliResult<()> {
    let start = Instant::now();
    let config = resolve_experiment(args)?;
    let fmts = formats(&args.format, &[Format::Json, Format::Csv], &[Format::Json, Format::Csv])?;
    let result = run_experiment(&config).map_err(classify)?;
    println!(
        "{}: recovery rate {} over {} reps ({} failed); mean true error {}",
        config.intervention,
        result.recovery_rate,
        config.n_reps,
        result.failed,
        result.mean_true_error.map_or("n/a".to_string(), |e| e.to_string())
    );
    let mut out = Outputs::new(&args.out)?;
    for f in fmts {
        match f {
            Format::Json => out.write("result.json", result.to_json().map_err(classify)?.as_bytes())?,
            Format::Csv => out.write("result.csv", &csv_bytes(|b| result.write_csv(b))?)?,
            _ => unreachable!("filtered"),
        }
    }
    let params = serde_json::to_value(config).map_err(|e| CliError::Runtime(e.to_string()))?;
    out.finish("experiment", params, config.seed, start)
}

fn cmd_verify(args: &VerifyArgs) -> CliResult<()> {
    let start = Instant::now();
    let suites: Vec<Suite> = if args.suite.is_empty() {
        Suite::ALL.to_vec()
    } else {
        args.suite
            .iter()
            .map(|s| s.parse().map_err(classify))
            .collect::<CliResult<_>>()?
    };
    if args.trials == Some(0) {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let opts = VerifyOptions {
        trials: args.trials,
        seed: args.seed,
        mc_samples: args.mc_samples,
        inject_fault: args.inject_fault,
    };
    let mut reports = Vec::new();
    for s in suites {
        let rep = run_suite(s, &opts).map_err(classify)?;
        println!("{rep}");
        reports.push(rep);
    }
    let failed = reports.iter().filter(|r| !r.passed()).count();
    if let Some(dir) = &args.out {
        let mut out = Outputs::new(dir)?;
        out.write("verify.json", to_json(&reports)?.as_bytes())?;
        let params = json!({ "trials": args.trials, "mc_samples": args.mc_samples, "suites": reports.iter().map(|r| r.suite.name()).collect::<Vec<_>>() });
        out.finish("verify", params, args.seed, start)?;
    }
    if failed > 0 {
        return Err(CliError::Runtime(format!("{failed} suite(s) failed")));
    }
    println!("all {} suites passed", reports.len());
    Ok(())
}

/// Column entry of a table config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    pub family: String,
    pub model: ModelSpec,
    #[serde(default)]
    pub bias: BiasSpec,
}

fn parse_family(s: &str) -> CliResult<BiasFamily> {
    match s {
        "under-representation" => Ok(BiasFamily::UnderRepresentation),
        "labeling" => Ok(BiasFamily::Labeling),
        "combined" | "both" => Ok(BiasFamily::Combined),
        other => Err(CliError::Usage(format!(
            "unknown bias family `{other}` (expected under-representation, labeling or combined)"
        ))),
    }
}

fn cmd_table(args: &TableArgs) -> CliResult<()> {
    let start = Instant::now();
    let columns: Vec<TableColumn> = match &args.config {
        None => default_table_columns(),
        Some(path) => {
            let specs: Vec<ColumnSpec> = read_json_file(path)?;
            specs
                .iter()
                .map(|c| {
                    let m = TrueModel::new(c.model.r, c.model.p, c.model.eta).map_err(classify)?;
                    let b = BiasParams::new(c.bias.beta_pos, c.bias.beta_neg, c.bias.nu).map_err(classify)?;
                    Ok(TableColumn {
                        family: parse_family(&c.family)?,
                        model: m,
                        bias: b,
                    })
                })
                .collect::<CliResult<_>>()?
        }
    };
    if args.n == 0 || args.reps == 0 {
        return Err(CliError::Usage("--n and --reps must be at least 1".into()));
    }
    let defaults: &[Format] = if args.analytic_only {
        &[Format::Csv]
    } else {
        &[Format::Csv, Format::Md]
    };
    let fmts = formats(&args.format, defaults, &[Format::Csv, Format::Md, Format::Json])?;
    let settings = TableSettings {
        n_train: args.n,
        n_reps: args.reps,
        seed: args.seed,
        analytic_only: args.analytic_only,
        ..TableSettings::default()
    };
    let table = intervention_table(&columns, &settings).map_err(classify)?;
    print!("{}", table.to_markdown());
    let mut out = Outputs::new(&args.out)?;
    for f in fmts {
        match f {
            Format::Csv => out.write("table.csv", &csv_bytes(|b| table.write_csv(b))?)?,
            Format::Md => out.write("table.md", table.to_markdown().as_bytes())?,
            Format::Json => out.write("table.json", to_json(&table)?.as_bytes())?,
            Format::Svg => unreachable!("filtered"),
        }
    }
    let params = json!({ "columns": columns, "settings": settings });
    out.finish("table", params, args.seed, start)?;
    let bad = table.disagreements();
    if let Some(c) = bad.first() {
        return Err(CliError::Runtime(format!(
            "{} analytic/empirical disagreement(s), first: {} under {} (analytic margin {}, recovery rate {:?})",
            bad.len(),
            c.row.label(),
            c.family,
            c.analytic_margin,
            c.empirical_rate
        )));
    }
    Ok(())
}

fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn run(cli: &Cli) -> CliResult<()> {
    configure_threads()?;
    match &cli.command {
        Command::Region(a) => cmd_region(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Table(a) => cmd_table(a),
    }
}

/// Parses the process arguments, runs, and returns the exit code.
pub fn main_exit() -> i32 {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
