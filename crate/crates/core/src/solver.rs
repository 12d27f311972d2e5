//! Constrained ERM on the biased distribution.
//!
//! Hypothesis pairs are described by how much mass they disagree with the
//! Bayes rule on: `p1` inside its positive region, `p2` inside its negative
//! region. Biased error is linear in these four numbers, which is what makes
//! the three-candidate solver exact.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bias::{positive_fraction, region_masses, BiasParams, RegionMasses};
use crate::distribution::{analytic_true_error, Dataset, Group, TrueModel};
use crate::error::{range_err, LabError, Result};
use crate::fairness::{
    gap_from_masses, rate_from_masses, spread, ConstraintKind, ConstraintLevel, Criterion, Rate,
};
use crate::format::ser_sig17;

/// Absolute slack under which two un-normalized biased errors are a tie.
pub const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationParams {
    #[serde(serialize_with = "ser_sig17")]
    pub p1a: f64,
    #[serde(serialize_with = "ser_sig17")]
    pub p2a: f64,
    #[serde(serialize_with = "ser_sig17")]
    pub p1b: f64,
    #[serde(serialize_with = "ser_sig17")]
    pub p2b: f64,
}

impl DeviationParams {
    pub const H_STAR: DeviationParams = DeviationParams {
        p1a: 0.0,
        p2a: 0.0,
        p1b: 0.0,
        p2b: 0.0,
    };

    pub fn all_negative(model: &TrueModel) -> Self {
        DeviationParams {
            p1a: model.p,
            p2a: 0.0,
            p1b: model.p,
            p2b: 0.0,
        }
    }

    pub fn all_positive(model: &TrueModel) -> Self {
        let q = 1.0 - model.p;
        DeviationParams {
            p1a: 0.0,
            p2a: q,
            p1b: 0.0,
            p2b: q,
        }
    }

    pub fn validate(self, model: &TrueModel) -> Result<Self> {
        let p = model.p;
        let q = 1.0 - p;
        for (field, v, hi, expected) in [
            ("p1a", self.p1a, p, "0 <= p1a <= p"),
            ("p1b", self.p1b, p, "0 <= p1b <= p"),
            ("p2a", self.p2a, q, "0 <= p2a <= 1 - p"),
            ("p2b", self.p2b, q, "0 <= p2b <= 1 - p"),
        ] {
            if !(v >= 0.0 && v <= hi + 1e-15) {
                return Err(range_err(field, v, expected));
            }
        }
        Ok(self)
    }

    pub fn group(&self, group: Group) -> (f64, f64) {
        match group {
            Group::A => (self.p1a, self.p2a),
            Group::B => (self.p1b, self.p2b),
        }
    }

    /// Deviations induced by the threshold pair under the uniform feature
    /// model.
    pub fn from_thresholds(h: &ThresholdPair, model: &TrueModel) -> Self {
        let dev = |t: f64, theta: f64| {
            let t = t.clamp(0.0, 1.0);
            if t >= theta {
                (t - theta, 0.0)
            } else {
                (0.0, theta - t)
            }
        };
        let (p1a, p2a) = dev(h.t_a, model.theta_a);
        let (p1b, p2b) = dev(h.t_b, model.theta_b);
        DeviationParams { p1a, p2a, p1b, p2b }
    }

    fn key(&self) -> [f64; 4] {
        [self.p1a, self.p2a, self.p1b, self.p2b]
    }

    fn approx_eq(&self, other: &DeviationParams) -> bool {
        self.key()
            .iter()
            .zip(other.key())
            .all(|(a, b)| (a - b).abs() <= 1e-12)
    }
}

/// A pair of one-dimensional threshold rules: `h_g(x) = 1` iff `x >= t_g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPair {
    pub t_a: f64,
    pub t_b: f64,
}

impl ThresholdPair {
    pub fn bayes(model: &TrueModel) -> Self {
        ThresholdPair {
            t_a: model.theta_a,
            t_b: model.theta_b,
        }
    }

    pub fn threshold(&self, group: Group) -> f64 {
        match group {
            Group::A => self.t_a,
            Group::B => self.t_b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Candidate {
    HStar,
    AllNegative,
    AllPositive,
    Other,
}

impl Candidate {
    pub fn classify(params: &DeviationParams, model: &TrueModel) -> Candidate {
        if params.approx_eq(&DeviationParams::H_STAR) {
            Candidate::HStar
        } else if params.approx_eq(&DeviationParams::all_negative(model)) {
            Candidate::AllNegative
        } else if params.approx_eq(&DeviationParams::all_positive(model)) {
            Candidate::AllPositive
        } else {
            Candidate::Other
        }
    }
}

impl fmt::Display for Candidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Candidate::HStar => "h*",
            Candidate::AllNegative => "h0",
            Candidate::AllPositive => "h1",
            Candidate::Other => "other",
        })
    }
}

fn group_error(cells: [f64; 4], p1: f64, p2: f64, p: f64) -> f64 {
    let q = 1.0 - p;
    let [pp, pn, np, nn] = cells;
    spread(pp, p1, p) + spread(pn, p - p1, p) + spread(np, q - p2, q) + spread(nn, p2, q)
}

/// Un-normalized error of `params` on the biased distribution.
pub fn biased_error(params: &DeviationParams, masses: &RegionMasses) -> f64 {
    group_error(masses.group_cells(Group::A), params.p1a, params.p2a, masses.p)
        + group_error(masses.group_cells(Group::B), params.p1b, params.p2b, masses.p)
}

/// Result of [`shrink`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shrunk {
    pub params: DeviationParams,
    pub level_a: ConstraintLevel,
    pub level_b: ConstraintLevel,
    /// Whether the input already satisfied Equal Opportunity. The shrunken
    /// pair keeps each group's level, so an input gap survives unchanged.
    pub input_feasible: bool,
}

fn shrink_group(p1: f64, p2: f64, eta: f64) -> (f64, f64) {
    if p1 == 0.0 || p2 == 0.0 {
        return (p1, p2);
    }
    // removing d of p2 must remove d * eta / (1 - eta) of p1 to hold the level
    let forced = p2 * eta / (1.0 - eta);
    if p1 >= forced {
        (p1 - forced, 0.0)
    } else {
        (0.0, p2 - p1 * (1.0 - eta) / eta)
    }
}

/// Moves each group to a hypothesis with at most one nonzero deviation at
/// the same Equal Opportunity level. Never increases biased error.
pub fn shrink(params: &DeviationParams, model: &TrueModel) -> Shrunk {
    let eta = model.eta;
    let (p1a, p2a) = shrink_group(params.p1a, params.p2a, eta);
    let (p1b, p2b) = shrink_group(params.p1b, params.p2b, eta);
    let level_a = ConstraintLevel::of(params.p1a, params.p2a, eta);
    let level_b = ConstraintLevel::of(params.p1b, params.p2b, eta);
    Shrunk {
        params: DeviationParams { p1a, p2a, p1b, p2b },
        level_a,
        level_b,
        input_feasible: (level_a.c - level_b.c).abs() <= 1e-12,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredCandidate {
    pub params: DeviationParams,
    pub candidate: Candidate,
    #[serde(serialize_with = "ser_sig17")]
    pub biased_error: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub kind: ConstraintKind,
    pub chosen: DeviationParams,
    pub chosen_candidate: Candidate,
    /// Un-normalized; the surviving mass does not depend on the hypothesis.
    #[serde(serialize_with = "ser_sig17")]
    pub biased_error: f64,
    #[serde(serialize_with = "ser_sig17")]
    pub normalized_biased_error: f64,
    #[serde(serialize_with = "ser_sig17")]
    pub true_error: f64,
    pub candidates: Vec<ScoredCandidate>,
    #[serde(serialize_with = "ser_sig17")]
    pub constraint_gap: f64,
    /// Another distinct candidate attains the minimum within [`TIE_EPS`].
    pub tie: bool,
    pub h_star_feasible: bool,
    #[serde(serialize_with = "ser_sig17")]
    pub h_star_biased_error: f64,
}

impl SolveReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn finish_report(
    kind: ConstraintKind,
    chosen: DeviationParams,
    candidates: Vec<ScoredCandidate>,
    tie: bool,
    model: &TrueModel,
    masses: &RegionMasses,
) -> Result<SolveReport> {
    let err = biased_error(&chosen, masses);
    let h_star_gap = gap_from_masses(kind.criterion, &DeviationParams::H_STAR, masses)?;
    Ok(SolveReport {
        kind,
        chosen,
        chosen_candidate: Candidate::classify(&chosen, model),
        biased_error: err,
        normalized_biased_error: err / masses.total(),
        true_error: analytic_true_error(&chosen, model),
        candidates,
        constraint_gap: gap_from_masses(kind.criterion, &chosen, masses)?,
        tie,
        h_star_feasible: kind.satisfied_by(h_star_gap),
        h_star_biased_error: biased_error(&DeviationParams::H_STAR, masses),
    })
}

/// Exact Equal Opportunity constrained ERM: the optimum is always one of
/// the Bayes rule, the all-negative pair or the all-positive pair.
///
/// Ties prefer the Bayes rule, then all-negative, and set `tie`.
pub fn exact_constrained_erm(
    kind: &ConstraintKind,
    model: &TrueModel,
    bias: &BiasParams,
) -> Result<SolveReport> {
    if kind.criterion != Criterion::EqualOpportunity {
        return Err(LabError::Invalid(format!(
            "the three-candidate solver is exact only for Equal Opportunity, not {}",
            kind.criterion
        )));
    }
    let masses = region_masses(model, bias);
    let list = [
        (Candidate::HStar, DeviationParams::H_STAR),
        (Candidate::AllNegative, DeviationParams::all_negative(model)),
        (Candidate::AllPositive, DeviationParams::all_positive(model)),
    ];
    let scored: Vec<ScoredCandidate> = list
        .iter()
        .map(|&(candidate, params)| ScoredCandidate {
            params,
            candidate,
            biased_error: biased_error(&params, &masses),
            feasible: true,
        })
        .collect();
    let min = scored
        .iter()
        .map(|c| c.biased_error)
        .fold(f64::INFINITY, f64::min);
    let best = scored
        .iter()
        .find(|c| c.biased_error <= min + TIE_EPS)
        .expect("three finite candidates");
    let tie = scored.iter().any(|c| {
        c.biased_error <= min + TIE_EPS && !c.params.approx_eq(&best.params)
    });
    finish_report(*kind, best.params, scored.clone(), tie, model, &masses)
}

/// One lattice point of a single group.
#[derive(Debug, Clone, Copy)]
struct LatticePoint {
    p1: f64,
    p2: f64,
    err: f64,
    sig: [f64; 2],
}

fn group_lattice(
    group: Group,
    criterion: Criterion,
    masses: &RegionMasses,
    resolution: usize,
) -> Result<Vec<LatticePoint>> {
    let p = masses.p;
    let q = 1.0 - p;
    let cells = masses.group_cells(group);
    let p2_steps = if q > 0.0 { resolution } else { 0 };
    let mut points = Vec::with_capacity((resolution + 1) * (p2_steps + 1));
    for i in 0..=resolution {
        let p1 = p * i as f64 / resolution as f64;
        for j in 0..=p2_steps {
            let p2 = q * j as f64 / resolution as f64;
            let params = match group {
                Group::A => DeviationParams { p1a: p1, p2a: p2, ..DeviationParams::H_STAR },
                Group::B => DeviationParams { p1b: p1, p2b: p2, ..DeviationParams::H_STAR },
            };
            let rate = |r| rate_from_masses(r, &params, group, masses);
            let sig = match criterion {
                Criterion::EqualOpportunity => [rate(Rate::TruePositive)?, 0.0],
                Criterion::DemographicParity => [rate(Rate::Positive)?, 0.0],
                Criterion::EqualizedOdds => [rate(Rate::TruePositive)?, rate(Rate::FalsePositive)?],
            };
            points.push(LatticePoint {
                p1,
                p2,
                err: group_error(cells, p1, p2, p),
                sig,
            });
        }
    }
    Ok(points)
}

fn pair_params(a: &LatticePoint, b: &LatticePoint) -> DeviationParams {
    DeviationParams {
        p1a: a.p1,
        p2a: a.p2,
        p1b: b.p1,
        p2b: b.p2,
    }
}

fn order(x: (f64, DeviationParams), y: (f64, DeviationParams)) -> Ordering {
    x.0.total_cmp(&y.0).then_with(|| {
        x.1.key()
            .iter()
            .zip(y.1.key())
            .map(|(u, v)| u.total_cmp(&v))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

/// Calls `visit` with `(error, params)` for every feasible lattice pair.
fn scan_feasible(
    kind: &ConstraintKind,
    masses: &RegionMasses,
    resolution: usize,
    mut visit: impl FnMut((f64, DeviationParams)),
) -> Result<()> {
    let tol = kind.tolerance;
    let lattice_a = group_lattice(Group::A, kind.criterion, masses, resolution)?;
    let mut lattice_b = group_lattice(Group::B, kind.criterion, masses, resolution)?;
    lattice_b.sort_by(|x, y| x.sig[0].total_cmp(&y.sig[0]));
    for a in &lattice_a {
        let lo = lattice_b.partition_point(|b| b.sig[0] < a.sig[0] - tol);
        for b in lattice_b[lo..].iter().take_while(|b| b.sig[0] <= a.sig[0] + tol) {
            if (a.sig[1] - b.sig[1]).abs() <= tol {
                visit((a.err + b.err, pair_params(a, b)));
            }
        }
    }
    Ok(())
}

/// Lowest-error feasible lattice pair that deviates from the Bayes rule by
/// at least `radius` in some group, or `None` if every feasible pair is
/// closer.
pub fn best_feasible_outside(
    kind: &ConstraintKind,
    model: &TrueModel,
    bias: &BiasParams,
    resolution: usize,
    radius: f64,
) -> Result<Option<(f64, DeviationParams)>> {
    if resolution < 2 {
        return Err(range_err("resolution", resolution as f64, "resolution >= 2"));
    }
    let masses = region_masses(model, bias);
    let mut best: Option<(f64, DeviationParams)> = None;
    scan_feasible(kind, &masses, resolution, |entry| {
        let d = entry.1;
        if (d.p1a + d.p2a).max(d.p1b + d.p2b) >= radius
            && best.is_none_or(|cur| order(entry, cur).is_lt())
        {
            best = Some(entry);
        }
    })?;
    Ok(best)
}

/// Smallest per-group deviation `max(p1a + p2a, p1b + p2b)` among feasible
/// lattice pairs, or `None` if nothing is feasible.
pub fn nearest_feasible_deviation(
    kind: &ConstraintKind,
    model: &TrueModel,
    bias: &BiasParams,
    resolution: usize,
) -> Result<Option<f64>> {
    if resolution < 2 {
        return Err(range_err("resolution", resolution as f64, "resolution >= 2"));
    }
    let masses = region_masses(model, bias);
    let mut best: Option<f64> = None;
    scan_feasible(kind, &masses, resolution, |(_, d)| {
        let dev = (d.p1a + d.p2a).max(d.p1b + d.p2b);
        if best.is_none_or(|b| dev < b) {
            best = Some(dev);
        }
    })?;
    Ok(best)
}

/// Brute-force constrained ERM over the lattice `{0, p/k, .., p} x {0,
/// (1-p)/k, .., 1-p}` in each group, `k = resolution`.
///
/// A pair is feasible when every rate gap of the criterion is within the
/// tolerance. The minimizer is taken in `(error, params)` order, so the
/// result is independent of enumeration order. The report lists the
/// minimizer and the runner-up.
pub fn grid_constrained_erm(
    kind: &ConstraintKind,
    model: &TrueModel,
    bias: &BiasParams,
    resolution: usize,
) -> Result<SolveReport> {
    if resolution < 2 {
        return Err(range_err("resolution", resolution as f64, "resolution >= 2"));
    }
    let masses = region_masses(model, bias);
    let mut best: Option<(f64, DeviationParams)> = None;
    let mut runner_up: Option<(f64, DeviationParams)> = None;
    scan_feasible(kind, &masses, resolution, |entry| match best {
        Some(cur) if order(entry, cur).is_ge() => {
            if runner_up.is_none_or(|r| order(entry, r).is_lt()) {
                runner_up = Some(entry);
            }
        }
        _ => {
            runner_up = best;
            best = Some(entry);
        }
    })?;
    let (_, chosen) = best.ok_or(LabError::NoFeasiblePoint)?;
    let scored = |params: DeviationParams| ScoredCandidate {
        params,
        candidate: Candidate::classify(&params, model),
        biased_error: biased_error(&params, &masses),
        feasible: true,
    };
    let mut candidates = vec![scored(chosen)];
    if let Some((_, params)) = runner_up {
        candidates.push(scored(params));
    }
    let tie = candidates.len() == 2
        && (candidates[1].biased_error - candidates[0].biased_error).abs() <= TIE_EPS;
    finish_report(*kind, chosen, candidates, tie, model, &masses)
}

/// Weights every apparent group-B positive by `1 / beta`; everything else
/// gets weight 1.
pub fn reweight_underrep(data: &Dataset, beta: f64) -> Result<Dataset> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(range_err("beta", beta, "0 < beta <= 1"));
    }
    Ok(reweight_b_positives(data, 1.0 / beta))
}

/// Multiplicative weight on apparent group-B positives that restores group
/// A's positive-to-negative odds under labeling bias.
#[allow(non_snake_case)]
pub fn labelbias_Z(p_a1: f64, nu: f64) -> Result<f64> {
    if !(p_a1 > 0.0 && p_a1 < 1.0) {
        return Err(range_err("p_a1", p_a1, "0 < p_a1 < 1"));
    }
    if !(nu >= 0.0 && nu < 1.0) {
        return Err(range_err("nu", nu, "0 <= nu < 1"));
    }
    Ok((1.0 - p_a1 * (1.0 - nu)) / ((1.0 - nu) * (1.0 - p_a1)))
}

/// Open interval of weights under which both of group B's Bayes regions
/// carry a weighted majority of their correct label.
pub fn labelbias_z_window(eta: f64, nu: f64) -> (f64, f64) {
    (
        (eta + (1.0 - eta) * nu) / ((1.0 - eta) * (1.0 - nu)),
        (1.0 - eta + eta * nu) / (eta * (1.0 - nu)),
    )
}

/// Weights every apparent group-B positive by `z`.
pub fn reweight_labelbias(data: &Dataset, z: f64) -> Result<Dataset> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(range_err("z", z, "z > 0"));
    }
    Ok(reweight_b_positives(data, z))
}

fn reweight_b_positives(data: &Dataset, w: f64) -> Dataset {
    let examples = data
        .examples
        .iter()
        .map(|e| {
            let mut e = *e;
            e.weight = if e.group == Group::B && e.label { w } else { 1.0 };
            e
        })
        .collect();
    Dataset {
        examples,
        seed: data.seed,
    }
}

/// Region masses after multiplying every apparent group-B positive by `w`.
pub fn reweighted_masses(masses: &RegionMasses, w: f64) -> RegionMasses {
    RegionMasses {
        r5: masses.r5 * w,
        r7: masses.r7 * w,
        ..*masses
    }
}

/// The positive weight both reweighting estimators converge to:
/// group A's positive odds over group B's observed positive odds, floored
/// at 1 (the estimators are clamped to their parameter ranges).
pub fn population_reweighting_factor(masses: &RegionMasses) -> f64 {
    let odds = |pos: f64, neg: f64| pos / neg;
    let a = odds(masses.r1 + masses.r3, masses.r2 + masses.r4);
    let b = odds(masses.r5 + masses.r7, masses.r6 + masses.r8);
    (a / b).max(1.0)
}

/// Sample analogue of [`population_reweighting_factor`] for the labeling
/// bias intervention: `Z` evaluated at the estimated `p_A1` and `nu`.
pub fn estimated_labelbias_z(data: &Dataset) -> Result<f64> {
    let nu = crate::bias::estimate_nu(data)?;
    let (pos_a, tot_a) = positive_fraction(data, Group::A);
    labelbias_Z(pos_a / tot_a, nu)
}
