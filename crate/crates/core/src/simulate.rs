//! Finite-sample experiments: draw, corrupt, intervene, fit a threshold
//! pair by weighted ERM, then score it on the true distribution.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bias::{apply_bias, estimate_beta, region_masses, BiasParams, RegionMasses};
use crate::distribution::{analytic_true_error, empirical_error, sample_true, Dataset, Group, TrueModel};
use crate::error::{range_err, LabError, Result};
use crate::fairness::{constraint_gap, ConstraintKind, Criterion};
use crate::recovery::{check_conditions, BiasFamily, Extreme};
use crate::rng::derive_seed;
use crate::solver::{
    best_feasible_outside, estimated_labelbias_z, exact_constrained_erm, grid_constrained_erm,
    population_reweighting_factor, reweight_labelbias, reweight_underrep, reweighted_masses,
    Candidate, DeviationParams, ThresholdPair, TIE_EPS,
};

pub const DEFAULT_THRESHOLD_GRID: usize = 101;
pub const DEFAULT_RECOVERY_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Intervention {
    None,
    Constraint(ConstraintKind),
    #[serde(rename = "reweight-ur")]
    ReweightUnderrep,
    #[serde(rename = "reweight-lb")]
    ReweightLabelbias,
}

impl fmt::Display for Intervention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Intervention::None => f.write_str("none"),
            Intervention::Constraint(k) => write!(f, "constraint:{}", k.criterion.short_name()),
            Intervention::ReweightUnderrep => f.write_str("reweight-ur"),
            Intervention::ReweightLabelbias => f.write_str("reweight-lb"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: TrueModel,
    pub bias: BiasParams,
    pub intervention: Intervention,
    pub n_train: usize,
    pub n_reps: usize,
    pub threshold_grid: usize,
    pub seed: u64,
    /// A rep recovers when both thresholds are strictly closer than this to
    /// the Bayes thresholds.
    pub recovery_tolerance: f64,
    /// Size of an optional fresh true-distribution sample for a sampled
    /// error next to the analytic one.
    pub holdout: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(model: TrueModel, bias: BiasParams, intervention: Intervention, n_train: usize, n_reps: usize, seed: u64) -> Self {
        ExperimentConfig {
            model,
            bias,
            intervention,
            n_train,
            n_reps,
            threshold_grid: DEFAULT_THRESHOLD_GRID,
            seed,
            recovery_tolerance: DEFAULT_RECOVERY_TOLERANCE,
            holdout: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        crate::distribution::validate_model(self.model)?;
        self.bias.validate()?;
        if self.n_train < 1 {
            return Err(range_err("n_train", 0.0, "n_train >= 1"));
        }
        if self.n_reps < 1 {
            return Err(range_err("n_reps", 0.0, "n_reps >= 1"));
        }
        if self.threshold_grid < 2 {
            return Err(range_err("threshold_grid", self.threshold_grid as f64, "threshold_grid >= 2"));
        }
        if !(self.recovery_tolerance > 0.0) {
            return Err(range_err("recovery_tolerance", self.recovery_tolerance, "recovery_tolerance > 0"));
        }
        if let Intervention::Constraint(kind) = self.intervention {
            if !(kind.tolerance > 0.0) || !kind.tolerance.is_finite() {
                return Err(range_err("tolerance", kind.tolerance, "tolerance > 0"));
            }
        }
        if self.holdout == Some(0) {
            return Err(range_err("holdout", 0.0, "holdout >= 1"));
        }
        Ok(())
    }
}

/// Coarse shape of one group's threshold relative to the Bayes threshold.
fn group_class(t: f64, theta: f64, tol: f64) -> Option<Candidate> {
    if (t - theta).abs() < tol {
        Some(Candidate::HStar)
    } else if t > 1.0 - tol {
        Some(Candidate::AllNegative)
    } else if t < tol {
        Some(Candidate::AllPositive)
    } else {
        None
    }
}

/// Classifies a fitted pair as Bayes-like, all-negative, all-positive or
/// other, both groups agreeing.
pub fn classify_thresholds(h: &ThresholdPair, model: &TrueModel, tol: f64) -> Candidate {
    let a = group_class(h.t_a, model.theta_a, tol);
    let b = group_class(h.t_b, model.theta_b, tol);
    match (a, b) {
        (Some(x), Some(y)) if x == y => x,
        _ => Candidate::Other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub rep: usize,
    pub seed: u64,
    pub thresholds: Option<ThresholdPair>,
    pub true_error: Option<f64>,
    pub error_a: Option<f64>,
    pub error_b: Option<f64>,
    pub holdout_error: Option<f64>,
    pub recovered: bool,
    pub class: Option<Candidate>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub h_star: usize,
    pub all_negative: usize,
    pub all_positive: usize,
    pub other: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub reps: Vec<RepOutcome>,
    pub completed: usize,
    pub failed: usize,
    pub mean_true_error: Option<f64>,
    pub sd_true_error: Option<f64>,
    pub mean_error_b: Option<f64>,
    /// Largest `|t_B - theta_B|` among recovered reps.
    pub max_dev_b_recovered: Option<f64>,
    /// Recovered reps over all reps; failed reps count as not recovered.
    pub recovery_rate: f64,
    pub classes: ClassCounts,
}

impl ExperimentResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "rep", "seed", "t_a", "t_b", "true_error", "error_a", "error_b", "holdout_error",
            "recovered", "class", "failure",
        ])?;
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.reps {
            w.write_record([
                r.rep.to_string(),
                r.seed.to_string(),
                opt(r.thresholds.map(|h| h.t_a)),
                opt(r.thresholds.map(|h| h.t_b)),
                opt(r.true_error),
                opt(r.error_a),
                opt(r.error_b),
                opt(r.holdout_error),
                r.recovered.to_string(),
                r.class.map(|c| c.to_string()).unwrap_or_default(),
                r.failure.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Deterministic pairwise summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        xs.iter().sum()
    } else {
        let (l, r) = xs.split_at(xs.len() / 2);
        pairwise_sum(l) + pairwise_sum(r)
    }
}

fn mean_sd(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    let sd = if xs.len() > 1 {
        let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        (pairwise_sum(&sq) / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(sd))
}

/// Threshold grid `t_k = k / (grid - 1)`.
pub fn grid_threshold(k: usize, grid: usize) -> f64 {
    k as f64 / (grid - 1) as f64
}

/// Largest `k` with `t_k <= x`.
fn bucket(x: f64, grid: usize) -> usize {
    let last = grid - 1;
    let mut k = ((x * last as f64).floor().max(0.0) as usize).min(last);
    while k < last && grid_threshold(k + 1, grid) <= x {
        k += 1;
    }
    while k > 0 && grid_threshold(k, grid) > x {
        k -= 1;
    }
    k
}

/// Weighted positive and negative mass at or above every grid threshold,
/// for one group.
#[derive(Debug, Clone)]
pub struct GroupProfile {
    pub pos_above: Vec<f64>,
    pub neg_above: Vec<f64>,
}

impl GroupProfile {
    pub fn build(data: &Dataset, group: Group, grid: usize) -> Self {
        let mut pos = vec![0.0; grid];
        let mut neg = vec![0.0; grid];
        for e in data.group(group) {
            let k = bucket(e.x, grid);
            if e.label {
                pos[k] += e.weight;
            } else {
                neg[k] += e.weight;
            }
        }
        for k in (0..grid - 1).rev() {
            pos[k] += pos[k + 1];
            neg[k] += neg[k + 1];
        }
        GroupProfile {
            pos_above: pos,
            neg_above: neg,
        }
    }

    pub fn positives(&self) -> f64 {
        self.pos_above[0]
    }

    pub fn negatives(&self) -> f64 {
        self.neg_above[0]
    }

    /// Weighted misclassified mass of threshold `k`.
    pub fn error(&self, k: usize) -> f64 {
        (self.positives() - self.pos_above[k]) + self.neg_above[k]
    }

    fn rate(num: f64, den: f64, what: &str) -> Result<f64> {
        if den > 0.0 {
            Ok(num / den)
        } else {
            Err(LabError::InsufficientData(format!("{what} undefined")))
        }
    }

    pub fn tpr(&self, k: usize) -> Result<f64> {
        Self::rate(self.pos_above[k], self.positives(), "TPR")
    }

    pub fn fpr(&self, k: usize) -> Result<f64> {
        Self::rate(self.neg_above[k], self.negatives(), "FPR")
    }

    pub fn positive_rate(&self, k: usize) -> Result<f64> {
        Self::rate(
            self.pos_above[k] + self.neg_above[k],
            self.positives() + self.negatives(),
            "positive rate",
        )
    }

    fn gap_signature(&self, criterion: Criterion, k: usize) -> Result<[f64; 2]> {
        Ok(match criterion {
            Criterion::EqualOpportunity => [self.tpr(k)?, 0.0],
            Criterion::DemographicParity => [self.positive_rate(k)?, 0.0],
            Criterion::EqualizedOdds => [self.tpr(k)?, self.fpr(k)?],
        })
    }
}

/// Weighted ERM over the threshold grid, optionally restricted to pairs
/// satisfying `constraint` on `data`. Ties go to the lowest `(k_A, k_B)`.
pub fn fit_thresholds(data: &Dataset, grid: usize, constraint: Option<&ConstraintKind>) -> Result<ThresholdPair> {
    if grid < 2 {
        return Err(range_err("threshold_grid", grid as f64, "threshold_grid >= 2"));
    }
    let a = GroupProfile::build(data, Group::A, grid);
    let b = GroupProfile::build(data, Group::B, grid);
    for (g, prof) in [(Group::A, &a), (Group::B, &b)] {
        if prof.positives() + prof.negatives() <= 0.0 {
            return Err(LabError::InsufficientData(format!("group {g} is empty")));
        }
    }
    let argmin = |p: &GroupProfile| {
        (0..grid).fold(0, |best, k| if p.error(k) < p.error(best) { k } else { best })
    };
    let (ka, kb) = match constraint {
        None => (argmin(&a), argmin(&b)),
        Some(kind) => {
            let sa = (0..grid)
                .map(|k| a.gap_signature(kind.criterion, k))
                .collect::<Result<Vec<_>>>()?;
            let sb = (0..grid)
                .map(|k| b.gap_signature(kind.criterion, k))
                .collect::<Result<Vec<_>>>()?;
            let mut best: Option<(f64, usize, usize)> = None;
            for (i, x) in sa.iter().enumerate() {
                for (j, y) in sb.iter().enumerate() {
                    if !kind.satisfied_by(x[0] - y[0]) || !kind.satisfied_by(x[1] - y[1]) {
                        continue;
                    }
                    let err = a.error(i) + b.error(j);
                    if best.is_none_or(|(e, _, _)| err < e) {
                        best = Some((err, i, j));
                    }
                }
            }
            let (_, i, j) = best.ok_or(LabError::NoFeasiblePoint)?;
            (i, j)
        }
    };
    Ok(ThresholdPair {
        t_a: grid_threshold(ka, grid),
        t_b: grid_threshold(kb, grid),
    })
}

/// Training data after the intervention's reweighting, if any.
fn intervene(data: Dataset, intervention: &Intervention) -> Result<Dataset> {
    match intervention {
        Intervention::ReweightUnderrep => {
            // the odds-ratio estimate can exceed 1 from noise alone
            let beta = estimate_beta(&data)?.min(1.0);
            reweight_underrep(&data, beta)
        }
        Intervention::ReweightLabelbias => {
            let z = estimated_labelbias_z(&data)?;
            reweight_labelbias(&data, z)
        }
        _ => Ok(data),
    }
}

fn run_rep(config: &ExperimentConfig, rep: usize) -> RepOutcome {
    let seed = derive_seed(config.seed, rep as u64);
    let mut out = RepOutcome {
        rep,
        seed,
        thresholds: None,
        true_error: None,
        error_a: None,
        error_b: None,
        holdout_error: None,
        recovered: false,
        class: None,
        failure: None,
    };
    let fitted = (|| {
        let clean = sample_true(&config.model, config.n_train, seed);
        let biased = apply_bias(&clean, &config.bias, seed);
        let train = intervene(biased, &config.intervention)?;
        let constraint = match &config.intervention {
            Intervention::Constraint(kind) => Some(kind),
            _ => None,
        };
        fit_thresholds(&train, config.threshold_grid, constraint)
    })();
    match fitted {
        Ok(h) => {
            let m = &config.model;
            let params = DeviationParams::from_thresholds(&h, m);
            let group_err = |dev: f64| m.eta + dev * (1.0 - 2.0 * m.eta);
            let tol = config.recovery_tolerance;
            out.thresholds = Some(h);
            out.true_error = Some(analytic_true_error(&params, m));
            out.error_a = Some(group_err(params.p1a + params.p2a));
            out.error_b = Some(group_err(params.p1b + params.p2b));
            out.recovered = (h.t_a - m.theta_a).abs() < tol && (h.t_b - m.theta_b).abs() < tol;
            out.class = Some(classify_thresholds(&h, m, tol));
            if let Some(n) = config.holdout {
                let fresh = sample_true(m, n, derive_seed(seed, 1));
                out.holdout_error = Some(empirical_error(&fresh, h.t_a, h.t_b));
            }
        }
        Err(e) => out.failure = Some(e.to_string()),
    }
    out
}

/// Runs every rep (in parallel) and aggregates. Reps that fail, for
/// example with an empty feasible set, are recorded, not fatal.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let reps: Vec<RepOutcome> = (0..config.n_reps)
        .into_par_iter()
        .map(|rep| run_rep(config, rep))
        .collect();
    let errors: Vec<f64> = reps.iter().filter_map(|r| r.true_error).collect();
    let errors_b: Vec<f64> = reps.iter().filter_map(|r| r.error_b).collect();
    let (mean_true_error, sd_true_error) = mean_sd(&errors);
    let (mean_error_b, _) = mean_sd(&errors_b);
    let completed = errors.len();
    let recovered = reps.iter().filter(|r| r.recovered).count();
    let max_dev_b_recovered = reps
        .iter()
        .filter(|r| r.recovered)
        .filter_map(|r| r.thresholds)
        .map(|h| (h.t_b - config.model.theta_b).abs())
        .reduce(f64::max);
    let count = |c: Candidate| reps.iter().filter(|r| r.class == Some(c)).count();
    let classes = ClassCounts {
        h_star: count(Candidate::HStar),
        all_negative: count(Candidate::AllNegative),
        all_positive: count(Candidate::AllPositive),
        other: count(Candidate::Other),
    };
    Ok(ExperimentResult {
        config: *config,
        completed,
        failed: reps.len() - completed,
        reps,
        mean_true_error,
        sd_true_error,
        mean_error_b,
        max_dev_b_recovered,
        recovery_rate: recovered as f64 / config.n_reps as f64,
        classes,
    })
}

/// Rows of the intervention table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TableRow {
    EqualOpportunity,
    EqualizedOdds,
    DemographicParity,
    Reweighting,
}

impl TableRow {
    pub const ALL: [TableRow; 4] = [
        TableRow::EqualOpportunity,
        TableRow::EqualizedOdds,
        TableRow::DemographicParity,
        TableRow::Reweighting,
    ];

    pub fn label(self) -> &'static str {
        match self {
            TableRow::EqualOpportunity => "Equal Opportunity",
            TableRow::EqualizedOdds => "Equalized Odds",
            TableRow::DemographicParity => "Demographic Parity",
            TableRow::Reweighting => "Re-weighting",
        }
    }

    fn criterion(self) -> Option<Criterion> {
        match self {
            TableRow::EqualOpportunity => Some(Criterion::EqualOpportunity),
            TableRow::EqualizedOdds => Some(Criterion::EqualizedOdds),
            TableRow::DemographicParity => Some(Criterion::DemographicParity),
            TableRow::Reweighting => None,
        }
    }
}

impl FromStr for TableRow {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eo" => Ok(TableRow::EqualOpportunity),
            "eodds" => Ok(TableRow::EqualizedOdds),
            "dp" => Ok(TableRow::DemographicParity),
            "reweight" => Ok(TableRow::Reweighting),
            other => Err(LabError::Invalid(format!("unknown table row `{other}`"))),
        }
    }
}

/// One bias-model column: a family label and the concrete parameters used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableColumn {
    pub family: BiasFamily,
    pub model: TrueModel,
    pub bias: BiasParams,
}

/// Default columns: under-representation at `beta = 0.2`, labeling bias at
/// `nu = 0.3`, and the combined-model point where reweighting is exactly
/// indifferent between the Bayes rule and all-negative in group B.
pub fn default_table_columns() -> Vec<TableColumn> {
    let third = 1.0 / 3.0;
    vec![
        TableColumn {
            family: BiasFamily::UnderRepresentation,
            model: TrueModel::new(third, 0.5, 0.2).expect("valid"),
            bias: BiasParams::under_representation(0.2).expect("valid"),
        },
        TableColumn {
            family: BiasFamily::Labeling,
            model: TrueModel::new(third, 0.5, 0.1).expect("valid"),
            bias: BiasParams::labeling(0.3).expect("valid"),
        },
        TableColumn {
            family: BiasFamily::Combined,
            model: TrueModel::new(third, 0.25, 0.0).expect("valid"),
            bias: BiasParams::new(1.0, third, 0.5).expect("valid"),
        },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableSettings {
    pub n_train: usize,
    pub n_reps: usize,
    pub seed: u64,
    pub threshold_grid: usize,
    /// Lattice resolution of the analytic grid solver.
    pub resolution: usize,
    /// Skip the Monte Carlo column.
    pub analytic_only: bool,
    /// Empirical "Yes" needs at least this recovery rate.
    pub yes_threshold: f64,
    /// Cells whose analytic margin exceeds this must agree.
    pub agreement_margin: f64,
}

impl Default for TableSettings {
    fn default() -> Self {
        TableSettings {
            n_train: 100_000,
            n_reps: 20,
            seed: 0,
            threshold_grid: DEFAULT_THRESHOLD_GRID,
            resolution: 200,
            analytic_only: false,
            yes_threshold: 0.9,
            agreement_margin: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub row: TableRow,
    pub family: BiasFamily,
    pub analytic: bool,
    /// Distance from the analytic decision flipping: an error gap, or the
    /// constraint violation of the Bayes rule when it is infeasible.
    pub analytic_margin: f64,
    /// Why the analytic prediction is "No".
    pub note: String,
    pub empirical_rate: Option<f64>,
    pub empirical: Option<bool>,
}

impl TableCell {
    /// `None` when there is nothing to compare or the margin is too thin.
    pub fn agrees(&self, agreement_margin: f64) -> Option<bool> {
        let e = self.empirical?;
        (self.analytic_margin > agreement_margin).then_some(e == self.analytic)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionTable {
    pub settings: TableSettings,
    pub columns: Vec<TableColumn>,
    pub cells: Vec<TableCell>,
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "Yes"
    } else {
        "No"
    }
}

impl InterventionTable {
    pub fn disagreements(&self) -> Vec<&TableCell> {
        self.cells
            .iter()
            .filter(|c| c.agrees(self.settings.agreement_margin) == Some(false))
            .collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "intervention", "bias_model", "analytic", "analytic_margin", "empirical",
            "recovery_rate", "note",
        ])?;
        for c in &self.cells {
            w.write_record([
                c.row.label().to_string(),
                c.family.to_string(),
                yes_no(c.analytic).to_string(),
                c.analytic_margin.to_string(),
                c.empirical.map(|e| yes_no(e).to_string()).unwrap_or_default(),
                c.empirical_rate.map(|r| r.to_string()).unwrap_or_default(),
                c.note.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| Intervention |");
        for col in &self.columns {
            s.push_str(&format!(" {} |", col.family));
        }
        s.push_str("\n|---|");
        s.push_str(&"---|".repeat(self.columns.len()));
        s.push('\n');
        for row in TableRow::ALL {
            s.push_str(&format!("| {} |", row.label()));
            for col in &self.columns {
                let Some(c) = self.cells.iter().find(|c| c.row == row && c.family == col.family) else {
                    s.push_str(" |");
                    continue;
                };
                let mut text = yes_no(c.analytic).to_string();
                if let (Some(e), Some(rate)) = (c.empirical, c.empirical_rate) {
                    text.push_str(&format!(" / {} ({:.2})", yes_no(e), rate));
                }
                if !c.note.is_empty() {
                    text.push_str(&format!(": {}", c.note));
                }
                s.push_str(&format!(" {text} |"));
            }
            s.push('\n');
        }
        s
    }
}

fn extreme_name(e: Extreme) -> &'static str {
    match e {
        Extreme::AllNegative => "all-negative wins",
        Extreme::AllPositive => "all-positive wins",
        Extreme::Both => "both extremes beat h*",
    }
}

/// Unconstrained threshold ERM on population masses recovers exactly when
/// every Bayes region of every group carries a strict majority of its own
/// label. Returns the verdict and the smallest majority margin.
fn majority_verdict(masses: &RegionMasses) -> (bool, f64, String) {
    let mut margin = f64::INFINITY;
    let mut note = String::new();
    for g in Group::BOTH {
        let [pp, pn, np, nn] = masses.group_cells(g);
        for (region, right, wrong) in [("positive", pp, pn), ("negative", nn, np)] {
            let d = right - wrong;
            margin = margin.min(d.abs());
            if d <= TIE_EPS && note.is_empty() {
                note = format!("group {g} {region} region has no {region} majority");
            }
        }
    }
    (note.is_empty(), margin, note)
}

fn analytic_cell(row: TableRow, col: &TableColumn, resolution: usize) -> Result<(bool, f64, String)> {
    let (m, b) = (&col.model, &col.bias);
    match row {
        TableRow::EqualOpportunity => {
            let report = exact_constrained_erm(&ConstraintKind::analytic(Criterion::EqualOpportunity), m, b)?;
            let h_star = report.h_star_biased_error;
            let margin = report
                .candidates
                .iter()
                .filter(|c| c.candidate != Candidate::HStar && Candidate::classify(&c.params, m) != Candidate::HStar)
                .map(|c| (c.biased_error - h_star).abs())
                .fold(f64::INFINITY, f64::min);
            let cond = check_conditions(m, b);
            let yes = report.chosen_candidate == Candidate::HStar && !report.tie;
            let note = match (yes, cond.failing_extreme) {
                (true, _) => String::new(),
                (false, Some(e)) => extreme_name(e).to_string(),
                (false, None) => "tie".to_string(),
            };
            Ok((yes, margin, note))
        }
        TableRow::EqualizedOdds | TableRow::DemographicParity => {
            let kind = ConstraintKind::analytic(row.criterion().expect("constraint row"));
            let gap = constraint_gap(&kind, &DeviationParams::H_STAR, m, b)?;
            if !kind.satisfied_by(gap) {
                return Ok((false, gap.abs(), format!("h* infeasible (gap {gap:.4})")));
            }
            let report = grid_constrained_erm(&kind, m, b, resolution)?;
            let yes = report.chosen_candidate == Candidate::HStar && !report.tie;
            let h_star = report.h_star_biased_error;
            let margin = match best_feasible_outside(&kind, m, b, resolution, DEFAULT_RECOVERY_TOLERANCE)? {
                Some((err, _)) => (err - h_star).abs(),
                None => f64::INFINITY,
            };
            let note = if yes {
                String::new()
            } else {
                format!("{} preferred", report.chosen_candidate)
            };
            Ok((yes, margin, note))
        }
        TableRow::Reweighting => {
            let masses = region_masses(m, b);
            let w = population_reweighting_factor(&masses);
            Ok(majority_verdict(&reweighted_masses(&masses, w)))
        }
    }
}

fn empirical_intervention(row: TableRow, col: &TableColumn, n: usize) -> Result<Intervention> {
    Ok(match row.criterion() {
        Some(c) => Intervention::Constraint(ConstraintKind::empirical(c, ConstraintKind::default_empirical_tolerance(n))?),
        None if col.family == BiasFamily::UnderRepresentation => Intervention::ReweightUnderrep,
        None => Intervention::ReweightLabelbias,
    })
}

/// The intervention by bias-model recovery matrix, analytic and (unless
/// disabled) empirical.
pub fn intervention_table(columns: &[TableColumn], settings: &TableSettings) -> Result<InterventionTable> {
    let mut cells = Vec::new();
    for (ci, col) in columns.iter().enumerate() {
        for (ri, row) in TableRow::ALL.into_iter().enumerate() {
            let (analytic, analytic_margin, note) = analytic_cell(row, col, settings.resolution)?;
            let (empirical_rate, empirical) = if settings.analytic_only {
                (None, None)
            } else {
                let mut cfg = ExperimentConfig::new(
                    col.model,
                    col.bias,
                    empirical_intervention(row, col, settings.n_train)?,
                    settings.n_train,
                    settings.n_reps,
                    derive_seed(settings.seed, (ci * TableRow::ALL.len() + ri) as u64),
                );
                cfg.threshold_grid = settings.threshold_grid;
                let res = run_experiment(&cfg)?;
                (Some(res.recovery_rate), Some(res.recovery_rate >= settings.yes_threshold))
            };
            cells.push(TableCell {
                row,
                family: col.family,
                analytic,
                analytic_margin,
                note,
                empirical_rate,
                empirical,
            });
        }
    }
    Ok(InterventionTable {
        settings: *settings,
        columns: columns.to_vec(),
        cells,
    })
}
