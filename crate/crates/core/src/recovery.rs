//! When does Equal Opportunity constrained ERM return the Bayes rule?
//!
//! Two linear forms in the bias parameters decide it: `cond_neg` compares
//! the Bayes rule against the all-negative pair and `cond_pos` against the
//! all-positive pair. Both are multilinear in `(r, eta, beta_pos, beta_neg,
//! nu)`, which lets sweeps solve boundaries exactly and lets Strong-Recovery
//! certificates bound the worst case by box vertices.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bias::BiasParams;
use crate::distribution::TrueModel;
use crate::error::{range_err, LabError, Result};
use crate::fairness::{ConstraintKind, Criterion};
use crate::rng::stream_rng;
use crate::solver::{exact_constrained_erm, Candidate};

/// Slack for evaluating the closed-box infimum in `f64`; the parameters
/// `1/3`, `3/7`, ... are themselves rounded.
pub const CORNER_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Extreme {
    AllNegative,
    AllPositive,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub cond_neg: f64,
    pub cond_pos: f64,
    pub recovers: bool,
    pub failing_extreme: Option<Extreme>,
}

impl ConditionReport {
    /// Smaller of the two condition magnitudes.
    pub fn margin(&self) -> f64 {
        self.cond_neg.abs().min(self.cond_pos.abs())
    }
}

pub fn cond_neg(model: &TrueModel, bias: &BiasParams) -> f64 {
    let TrueModel { r, eta, .. } = *model;
    (1.0 - r) * (1.0 - 2.0 * eta)
        + r * ((1.0 - eta) * bias.beta_pos * (1.0 - 2.0 * bias.nu) - eta * bias.beta_neg)
}

pub fn cond_pos(model: &TrueModel, bias: &BiasParams) -> f64 {
    let TrueModel { r, eta, .. } = *model;
    (1.0 - r) * (1.0 - 2.0 * eta)
        + r * ((1.0 - eta) * bias.beta_neg - (1.0 - 2.0 * bias.nu) * bias.beta_pos * eta)
}

pub fn check_conditions(model: &TrueModel, bias: &BiasParams) -> ConditionReport {
    report_from(cond_neg(model, bias), cond_pos(model, bias))
}

pub(crate) fn report_from(cond_neg: f64, cond_pos: f64) -> ConditionReport {
    let recovers = cond_neg > 0.0 && cond_pos > 0.0;
    let failing_extreme = match (cond_neg > 0.0, cond_pos > 0.0) {
        (true, true) => None,
        (false, true) => Some(Extreme::AllNegative),
        (true, false) => Some(Extreme::AllPositive),
        (false, false) => Some(Extreme::Both),
    };
    ConditionReport {
        cond_neg,
        cond_pos,
        recovers,
        failing_extreme,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    Eta,
    BetaPos,
    BetaNeg,
    Nu,
    R,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Eta => "eta",
            Axis::BetaPos => "beta_pos",
            Axis::BetaNeg => "beta_neg",
            Axis::Nu => "nu",
            Axis::R => "r",
        }
    }

    pub fn get(self, model: &TrueModel, bias: &BiasParams) -> f64 {
        match self {
            Axis::Eta => model.eta,
            Axis::BetaPos => bias.beta_pos,
            Axis::BetaNeg => bias.beta_neg,
            Axis::Nu => bias.nu,
            Axis::R => model.r,
        }
    }

    /// Returns validated copies of `(model, bias)` with this axis set to
    /// `value`.
    pub fn set(self, model: &TrueModel, bias: &BiasParams, value: f64) -> Result<(TrueModel, BiasParams)> {
        let mut m = *model;
        let mut b = *bias;
        match self {
            Axis::Eta => m.eta = value,
            Axis::BetaPos => b.beta_pos = value,
            Axis::BetaNeg => b.beta_neg = value,
            Axis::Nu => b.nu = value,
            Axis::R => m.r = value,
        }
        Ok((TrueModel::new(m.r, m.p, m.eta)?, b.validate()?))
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eta" => Ok(Axis::Eta),
            "beta" | "beta_pos" | "beta-pos" => Ok(Axis::BetaPos),
            "beta_neg" | "beta-neg" => Ok(Axis::BetaNeg),
            "nu" => Ok(Axis::Nu),
            "r" => Ok(Axis::R),
            other => Err(LabError::Invalid(format!(
                "unknown axis `{other}` (expected eta, beta, beta_pos, beta_neg, nu or r)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub axis: Axis,
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl AxisSpec {
    pub fn value(&self, i: usize) -> f64 {
        if self.steps <= 1 {
            self.lo
        } else {
            self.lo + (self.hi - self.lo) * i as f64 / (self.steps - 1) as f64
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.steps).map(|i| self.value(i))
    }

    /// Parses `name:lo:hi`; the step count is supplied separately.
    pub fn parse(text: &str, steps: usize) -> Result<Self> {
        let parts: Vec<&str> = text.split(':').collect();
        let [name, lo, hi] = parts.as_slice() else {
            return Err(LabError::Invalid(format!(
                "axis `{text}` must look like name:lo:hi"
            )));
        };
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| LabError::Invalid(format!("axis `{text}`: `{s}` is not a number")))
        };
        Ok(AxisSpec {
            axis: name.parse()?,
            lo: num(lo)?,
            hi: num(hi)?,
            steps,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Recovers,
    FailsToH0,
    FailsToH1,
    Tie,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Recovers => "Recovers",
            Verdict::FailsToH0 => "FailsToH0",
            Verdict::FailsToH1 => "FailsToH1",
            Verdict::Tie => "Tie",
        })
    }
}

impl FromStr for Verdict {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Recovers" => Ok(Verdict::Recovers),
            "FailsToH0" => Ok(Verdict::FailsToH0),
            "FailsToH1" => Ok(Verdict::FailsToH1),
            "Tie" => Ok(Verdict::Tie),
            other => Err(LabError::Invalid(format!("unknown verdict `{other}`"))),
        }
    }
}

/// Verdict of the exact Equal Opportunity solver at one parameter point.
pub fn solver_verdict(model: &TrueModel, bias: &BiasParams) -> Result<Verdict> {
    let kind = ConstraintKind::analytic(Criterion::EqualOpportunity);
    let rep = exact_constrained_erm(&kind, model, bias)?;
    Ok(if rep.tie {
        Verdict::Tie
    } else {
        match rep.chosen_candidate {
            Candidate::HStar => Verdict::Recovers,
            Candidate::AllNegative => Verdict::FailsToH0,
            Candidate::AllPositive => Verdict::FailsToH1,
            Candidate::Other => unreachable!("three-candidate solver"),
        }
    })
}

/// Verdict implied by the condition signs alone; `None` when both fail and
/// only the error comparison of the two extremes can decide.
pub fn condition_verdict(report: &ConditionReport) -> Option<Verdict> {
    let (n, p) = (report.cond_neg, report.cond_pos);
    if n > 0.0 && p > 0.0 {
        Some(Verdict::Recovers)
    } else if n < 0.0 && p < 0.0 {
        None
    } else if n < 0.0 {
        Some(Verdict::FailsToH0)
    } else if p < 0.0 {
        Some(Verdict::FailsToH1)
    } else {
        Some(Verdict::Tie)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub x: f64,
    pub y: f64,
    pub verdict: Verdict,
    pub cond_neg: f64,
    pub cond_pos: f64,
}

/// Zero-level set of one condition across the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    /// `"cond_neg"` or `"cond_pos"`.
    pub condition: String,
    /// Connected runs of `(x, y)` points.
    pub segments: Vec<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSweep {
    pub x: AxisSpec,
    pub y: AxisSpec,
    pub model: TrueModel,
    pub bias: BiasParams,
    /// Column-major: `cells[ix * y.steps + iy]`.
    pub cells: Vec<SweepCell>,
    pub boundary: Vec<Boundary>,
    /// Cells with condition margin above `1e-9` where the solver disagrees
    /// with the condition signs.
    pub mismatches: usize,
}

impl RegionSweep {
    pub fn cell(&self, ix: usize, iy: usize) -> &SweepCell {
        &self.cells[ix * self.y.steps + iy]
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["axis1", "axis2", "verdict", "cond_neg", "cond_pos"])?;
        for c in &self.cells {
            w.write_record([
                c.x.to_string(),
                c.y.to_string(),
                c.verdict.to_string(),
                c.cond_neg.to_string(),
                c.cond_pos.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One parsed row of a sweep CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub x: f64,
    pub y: f64,
    pub verdict: Verdict,
}

pub fn read_sweep_csv<R: std::io::Read>(reader: R) -> Result<Vec<SweepRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != "axis1,axis2,verdict,cond_neg,cond_pos" {
        return Err(LabError::Invalid(format!("unexpected sweep header `{header}`")));
    }
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            let num = |i: usize| {
                rec[i]
                    .parse::<f64>()
                    .map_err(|_| LabError::Invalid(format!("bad number `{}`", &rec[i])))
            };
            Ok(SweepRow {
                x: num(0)?,
                y: num(1)?,
                verdict: rec[2].parse()?,
            })
        })
        .collect()
}

/// Recomputes the verdict of every row under `(model, bias)` with the two
/// axes substituted; returns the rows that disagree.
pub fn recheck_rows(
    rows: &[SweepRow],
    x: Axis,
    y: Axis,
    model: &TrueModel,
    bias: &BiasParams,
) -> Result<Vec<SweepRow>> {
    let mut bad = Vec::new();
    for row in rows {
        let (m, b) = x.set(model, bias, row.x)?;
        let (m, b) = y.set(&m, &b, row.y)?;
        if solver_verdict(&m, &b)? != row.verdict {
            bad.push(*row);
        }
    }
    Ok(bad)
}

fn validate_axis(axis_range: &AxisSpec, model: &TrueModel, bias: &BiasParams) -> Result<()> {
    if axis_range.steps == 0 {
        return Err(range_err("steps", 0.0, "steps >= 1"));
    }
    axis_range.axis.set(model, bias, axis_range.lo)?;
    axis_range.axis.set(model, bias, axis_range.hi)?;
    Ok(())
}

type CondFn = fn(&TrueModel, &BiasParams) -> f64;

fn boundary_for(
    name: &str,
    cond: CondFn,
    x: &AxisSpec,
    y: &AxisSpec,
    model: &TrueModel,
    bias: &BiasParams,
) -> Result<Boundary> {
    let mut segments: Vec<Vec<(f64, f64)>> = Vec::new();
    let mut current = Vec::new();
    let (ylo, yhi) = (y.lo.min(y.hi), y.lo.max(y.hi));
    for xv in x.values() {
        let (m, b) = x.axis.set(model, bias, xv)?;
        let (m0, b0) = y.axis.set(&m, &b, y.lo)?;
        let (m1, b1) = y.axis.set(&m, &b, y.hi)?;
        let c0 = cond(&m0, &b0);
        let c1 = cond(&m1, &b1);
        // the condition is affine in any single parameter
        let root = if c1 != c0 {
            let yv = y.lo - c0 * (y.hi - y.lo) / (c1 - c0);
            (yv >= ylo && yv <= yhi).then_some(yv)
        } else {
            None
        };
        match root {
            Some(yv) => current.push((xv, yv)),
            None if !current.is_empty() => segments.push(std::mem::take(&mut current)),
            None => {}
        }
    }
    if !current.is_empty() {
        segments.push(current);
    }
    Ok(Boundary {
        condition: name.to_string(),
        segments,
    })
}

/// Sweeps two parameters over a grid, recording the exact solver's verdict
/// and both condition values at every cell, and solves each condition's
/// zero-level set along `y` for every `x` column.
pub fn recovery_region(
    model: &TrueModel,
    bias: &BiasParams,
    x: AxisSpec,
    y: AxisSpec,
) -> Result<RegionSweep> {
    if x.axis == y.axis {
        return Err(LabError::Invalid("the two sweep axes must differ".into()));
    }
    validate_axis(&x, model, bias)?;
    validate_axis(&y, model, bias)?;
    let mut cells = Vec::with_capacity(x.steps * y.steps);
    let mut mismatches = 0;
    for xv in x.values() {
        let (mx, bx) = x.axis.set(model, bias, xv)?;
        for yv in y.values() {
            let (m, b) = y.axis.set(&mx, &bx, yv)?;
            let report = check_conditions(&m, &b);
            let verdict = solver_verdict(&m, &b)?;
            if report.margin() > 1e-9 {
                if let Some(expected) = condition_verdict(&report) {
                    if expected != verdict {
                        mismatches += 1;
                    }
                }
            }
            cells.push(SweepCell {
                x: xv,
                y: yv,
                verdict,
                cond_neg: report.cond_neg,
                cond_pos: report.cond_pos,
            });
        }
    }
    let boundary = vec![
        boundary_for("cond_neg", cond_neg, &x, &y, model, bias)?,
        boundary_for("cond_pos", cond_pos, &x, &y, model, bias)?,
    ];
    Ok(RegionSweep {
        x,
        y,
        model: *model,
        bias: *bias,
        cells,
        boundary,
        mismatches,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BiasFamily {
    /// `(beta, 1, 0)`
    UnderRepresentation,
    /// `(1, 1, nu)`
    Labeling,
    /// `(beta_pos, beta_neg, nu)`
    Combined,
}

impl BiasFamily {
    pub const ALL: [BiasFamily; 3] = [
        BiasFamily::UnderRepresentation,
        BiasFamily::Labeling,
        BiasFamily::Combined,
    ];

    /// Closure of the family's `(beta_pos, beta_neg, nu)` box, as vertex
    /// coordinate choices.
    fn vertex_choices(self) -> [&'static [f64]; 3] {
        match self {
            BiasFamily::UnderRepresentation => [&[0.0, 1.0], &[1.0], &[0.0]],
            BiasFamily::Labeling => [&[1.0], &[1.0], &[0.0, 1.0]],
            BiasFamily::Combined => [&[0.0, 1.0], &[0.0, 1.0], &[0.0, 1.0]],
        }
    }

    fn sample<R: Rng>(self, rng: &mut R) -> BiasParams {
        // beta in (0, 1], nu in [0, 1)
        let beta = |rng: &mut R| 1.0 - rng.random::<f64>();
        match self {
            BiasFamily::UnderRepresentation => BiasParams {
                beta_pos: beta(rng),
                beta_neg: 1.0,
                nu: 0.0,
            },
            BiasFamily::Labeling => BiasParams {
                beta_pos: 1.0,
                beta_neg: 1.0,
                nu: rng.random(),
            },
            BiasFamily::Combined => BiasParams {
                beta_pos: beta(rng),
                beta_neg: beta(rng),
                nu: rng.random(),
            },
        }
    }
}

impl fmt::Display for BiasFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BiasFamily::UnderRepresentation => "under-representation",
            BiasFamily::Labeling => "labeling",
            BiasFamily::Combined => "combined",
        })
    }
}

/// A parameter point at which a condition fails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub model: TrueModel,
    pub bias: BiasParams,
    pub report: ConditionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub family: BiasFamily,
    pub r0: f64,
    pub eta0: f64,
    pub trials: usize,
    pub passed: bool,
    /// Infimum of each condition over the closed parameter box.
    pub inf_cond_neg: f64,
    pub inf_cond_pos: f64,
    pub counterexample: Option<Counterexample>,
}

/// Vertices `(r, eta, beta_pos, beta_neg, nu)` of the closed box.
fn box_vertices(family: BiasFamily, r0: f64, eta0: f64) -> Vec<[f64; 5]> {
    let [bp, bn, nu] = family.vertex_choices();
    let mut out = Vec::new();
    for &r in &[0.0, r0] {
        for &eta in &[0.0, eta0] {
            for &a in bp {
                for &b in bn {
                    for &c in nu {
                        out.push([r, eta, a, b, c]);
                    }
                }
            }
        }
    }
    out
}

/// Condition values at a raw coordinate, skipping range validation so that
/// closed-box vertices can be evaluated.
fn raw_conditions(v: &[f64; 5]) -> (f64, f64) {
    let m = TrueModel {
        r: v[0],
        p: 0.5,
        eta: v[1],
        theta_a: 0.5,
        theta_b: 0.5,
    };
    let b = BiasParams {
        beta_pos: v[2],
        beta_neg: v[3],
        nu: v[4],
    };
    (cond_neg(&m, &b), cond_pos(&m, &b))
}

/// Moves a box vertex a relative distance `delta` into the admissible set.
fn interior_near(v: &[f64; 5], r0: f64, eta0: f64, delta: f64, p: f64) -> Option<(TrueModel, BiasParams)> {
    let r = if v[0] > 0.0 { r0 * (1.0 - delta) } else { r0 * delta };
    let eta = if v[1] > 0.0 { eta0 * (1.0 - delta) } else { 0.0 };
    let beta = |x: f64| if x > 0.0 { 1.0 } else { delta };
    let nu = if v[4] > 0.0 { 1.0 - delta } else { 0.0 };
    let model = TrueModel::new(r, p, eta).ok()?;
    let bias = BiasParams::new(beta(v[2]), beta(v[3]), nu).ok()?;
    Some((model, bias))
}

/// Checks Strong-Recovery `(r0, eta0)` for a bias family: `trials` uniform
/// random points of the admissible box, plus the closed-form infimum over
/// the box vertices (the conditions are multilinear, so the vertices attain
/// it). A negative infimum that the random search missed is turned into an
/// explicit counterexample by stepping inside from the worst vertex.
pub fn strong_recovery_certificate(
    family: BiasFamily,
    r0: f64,
    eta0: f64,
    trials: usize,
    seed: u64,
) -> Result<Certificate> {
    if !(r0 > 0.0 && r0 < 1.0) {
        return Err(range_err("r0", r0, "0 < r0 < 1"));
    }
    if !(eta0 > 0.0 && eta0 < 0.5) {
        return Err(range_err("eta0", eta0, "0 < eta0 < 1/2"));
    }
    if trials == 0 {
        return Err(range_err("trials", 0.0, "trials >= 1"));
    }
    let mut rng = stream_rng(seed, 0);
    let mut counterexample = None;
    for _ in 0..trials {
        let r = loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                break r0 * u;
            }
        };
        let eta = eta0 * rng.random::<f64>();
        let p = 1.0 - rng.random::<f64>();
        let model = TrueModel::new(r, p, eta)?;
        let bias = family.sample(&mut rng);
        let report = check_conditions(&model, &bias);
        if !report.recovers {
            counterexample = Some(Counterexample {
                model,
                bias,
                report,
            });
            break;
        }
    }

    let vertices = box_vertices(family, r0, eta0);
    let values: Vec<(f64, f64)> = vertices.iter().map(raw_conditions).collect();
    let inf_cond_neg = values.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
    let inf_cond_pos = values.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    let corner_ok = inf_cond_neg >= -CORNER_EPS && inf_cond_pos >= -CORNER_EPS;

    if counterexample.is_none() && !corner_ok {
        let worst = vertices
            .iter()
            .zip(&values)
            .min_by(|a, b| a.1 .0.min(a.1 .1).total_cmp(&b.1 .0.min(b.1 .1)))
            .map(|(v, _)| *v)
            .expect("non-empty vertex set");
        for delta in [1e-3, 1e-6, 1e-9] {
            if let Some((model, bias)) = interior_near(&worst, r0, eta0, delta, 0.5) {
                let report = check_conditions(&model, &bias);
                if !report.recovers {
                    counterexample = Some(Counterexample {
                        model,
                        bias,
                        report,
                    });
                    break;
                }
            }
        }
    }

    Ok(Certificate {
        family,
        r0,
        eta0,
        trials,
        passed: counterexample.is_none(),
        inf_cond_neg,
        inf_cond_pos,
        counterexample,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(r: f64, eta: f64) -> TrueModel {
        TrueModel::new(r, 0.5, eta).unwrap()
    }

    #[test]
    fn reduces_to_under_representation_form() {
        for &(r, eta, beta) in &[(0.3, 0.1, 0.5), (0.6, 0.4, 0.05), (0.25, 0.45, 0.9)] {
            let m = model(r, eta);
            let b = BiasParams::under_representation(beta).unwrap();
            let eq2 = (1.0 - r) * (1.0 - 2.0 * eta) + r * ((1.0 - eta) * beta - eta);
            assert!((cond_neg(&m, &b) - eq2).abs() < 1e-15);
        }
    }

    #[test]
    fn quarter_group_limit() {
        // beta_pos -> 0 leaves 3/4 - 7/4 eta
        for eta in [0.1, 0.3, 0.42] {
            let m = model(0.25, eta);
            let b = BiasParams::new(1e-300, 1.0, 0.0).unwrap();
            assert!((cond_neg(&m, &b) - (0.75 - 1.75 * eta)).abs() < 1e-12);
            assert!(check_conditions(&m, &b).recovers == (eta < 3.0 / 7.0));
        }
    }

    #[test]
    fn extreme_bias_still_recovers_for_small_groups() {
        let m = model(1.0 / 3.0, 0.24);
        let b = BiasParams::new(0.01, 0.01, 0.99).unwrap();
        assert!(check_conditions(&m, &b).recovers);
    }

    #[test]
    fn clean_data_recovers() {
        let rep = check_conditions(&model(0.7, 0.0), &BiasParams::NONE);
        assert!(rep.recovers && rep.failing_extreme.is_none());
        assert!((rep.cond_neg - 1.0).abs() < 1e-15);
    }

    #[test]
    fn failing_extreme_is_reported() {
        let rep = report_from(-1.0, 1.0);
        assert_eq!(rep.failing_extreme, Some(Extreme::AllNegative));
        let rep = report_from(1.0, -1.0);
        assert_eq!(rep.failing_extreme, Some(Extreme::AllPositive));
        let rep = report_from(-1.0, -1.0);
        assert_eq!(rep.failing_extreme, Some(Extreme::Both));
        assert_eq!(condition_verdict(&report_from(0.0, 1.0)), Some(Verdict::Tie));
    }

    #[test]
    fn single_cell_sweep() {
        let m = model(1.0 / 3.0, 0.1);
        let b = BiasParams::NONE;
        let x = AxisSpec::parse("eta:0.1:0.2", 1).unwrap();
        let y = AxisSpec::parse("beta:0.5:1", 1).unwrap();
        let s = recovery_region(&m, &b, x, y).unwrap();
        assert_eq!(s.cells.len(), 1);
        assert_eq!(s.cells[0].verdict, Verdict::Recovers);
    }

    #[test]
    fn sweep_rejects_bad_axes() {
        let m = model(1.0 / 3.0, 0.1);
        let b = BiasParams::NONE;
        let bad = AxisSpec::parse("eta:0:0.6", 3).unwrap();
        let y = AxisSpec::parse("beta:0.5:1", 3).unwrap();
        assert!(matches!(
            recovery_region(&m, &b, bad, y),
            Err(LabError::Range { field: "eta", .. })
        ));
        assert!(AxisSpec::parse("gamma:0:1", 3).is_err());
        assert!(AxisSpec::parse("eta:0", 3).is_err());
        let x = AxisSpec::parse("beta:0.5:1", 3).unwrap();
        assert!(recovery_region(&m, &b, x, y).is_err());
    }

    #[test]
    fn failing_cells_choose_all_negative() {
        let m = model(1.0 / 3.0, 0.1);
        let x = AxisSpec::parse("eta:0.45:0.49", 5).unwrap();
        let y = AxisSpec::parse("beta:0.005:0.05", 5).unwrap();
        let s = recovery_region(&m, &BiasParams::NONE, x, y).unwrap();
        assert_eq!(s.mismatches, 0);
        for c in &s.cells {
            assert!(c.cond_neg < 0.0 && c.cond_pos > 0.0);
            assert_eq!(c.verdict, Verdict::FailsToH0);
        }
    }

    #[test]
    fn certificate_counterexample() {
        let c = strong_recovery_certificate(BiasFamily::Combined, 0.5, 0.49, 1000, 3).unwrap();
        assert!(!c.passed);
        let ce = c.counterexample.unwrap();
        assert!(!ce.report.recovers);
        assert!(ce.model.r < 0.5 && ce.model.eta < 0.49);
    }

    #[test]
    fn certificate_corner_witness_when_search_is_short() {
        // a single trial rarely lands in the thin failing sliver; the vertex
        // check must still produce a witness
        let c = strong_recovery_certificate(BiasFamily::UnderRepresentation, 0.5, 0.34, 1, 1).unwrap();
        assert!(!c.passed);
        assert!(c.inf_cond_neg < 0.0);
        assert!(c.counterexample.is_some());
    }

    #[test]
    fn certificate_rejects_bad_box() {
        assert!(strong_recovery_certificate(BiasFamily::Combined, 1.0, 0.2, 10, 0).is_err());
        assert!(strong_recovery_certificate(BiasFamily::Combined, 0.3, 0.5, 10, 0).is_err());
        assert!(strong_recovery_certificate(BiasFamily::Combined, 0.3, 0.2, 0, 0).is_err());
    }
}
