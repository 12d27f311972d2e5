//! Group-conditional rates on the biased distribution and on samples.
//!
//! All rates condition on the observed (possibly corrupted) labels, which
//! is what a learner constrained on its training data can check.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bias::{region_masses, BiasParams, RegionMasses};
use crate::distribution::{Dataset, Group, TrueModel};
use crate::error::{LabError, Result};
use crate::solver::{DeviationParams, ThresholdPair};

/// Default tolerance for analytic feasibility checks.
pub const ANALYTIC_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Criterion {
    EqualOpportunity,
    EqualizedOdds,
    DemographicParity,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [
        Criterion::EqualOpportunity,
        Criterion::EqualizedOdds,
        Criterion::DemographicParity,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            Criterion::EqualOpportunity => "eo",
            Criterion::EqualizedOdds => "eodds",
            Criterion::DemographicParity => "dp",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::EqualOpportunity => "Equal Opportunity",
            Criterion::EqualizedOdds => "Equalized Odds",
            Criterion::DemographicParity => "Demographic Parity",
        })
    }
}

impl FromStr for Criterion {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eo" => Ok(Criterion::EqualOpportunity),
            "eodds" => Ok(Criterion::EqualizedOdds),
            "dp" => Ok(Criterion::DemographicParity),
            other => Err(LabError::Invalid(format!("unknown constraint `{other}`"))),
        }
    }
}

/// A fairness criterion together with the largest rate gap it tolerates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintKind {
    pub criterion: Criterion,
    pub tolerance: f64,
}

impl ConstraintKind {
    pub fn analytic(criterion: Criterion) -> Self {
        ConstraintKind {
            criterion,
            tolerance: ANALYTIC_TOLERANCE,
        }
    }

    /// Sample-based checks need slack for sampling noise.
    pub fn empirical(criterion: Criterion, tolerance: f64) -> Result<Self> {
        if !(tolerance > 0.0) || !tolerance.is_finite() {
            return Err(LabError::Range {
                field: "tolerance",
                value: tolerance,
                expected: "tolerance > 0 for empirical checks",
            });
        }
        Ok(ConstraintKind {
            criterion,
            tolerance,
        })
    }

    /// Default empirical tolerance: 0.01 at `n = 10^5`, scaling as `n^-1/2`.
    pub fn default_empirical_tolerance(n: usize) -> f64 {
        0.01 * (1e5 / n.max(1) as f64).sqrt()
    }

    pub fn satisfied_by(&self, gap: f64) -> bool {
        gap.abs() <= self.tolerance
    }
}

/// Per-group Equal Opportunity invariant `p2 * eta - p1 * (1 - eta)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ConstraintLevel {
    pub c: f64,
}

impl ConstraintLevel {
    pub fn of(p1: f64, p2: f64, eta: f64) -> Self {
        ConstraintLevel {
            c: p2 * eta - p1 * (1.0 - eta),
        }
    }

    /// Attainable interval `[-p (1 - eta), (1 - p) eta]`.
    pub fn bounds(p: f64, eta: f64) -> (f64, f64) {
        (-p * (1.0 - eta), (1.0 - p) * eta)
    }
}

/// `mass * part / width`, with zero-width regions contributing nothing.
pub(crate) fn spread(mass: f64, part: f64, width: f64) -> f64 {
    if width <= 0.0 {
        0.0
    } else {
        mass * part / width
    }
}

/// Fraction of `(pos_region_mass, neg_region_mass)` that a hypothesis with
/// deviations `(p1, p2)` labels positive.
fn covered_fraction(pos_mass: f64, neg_mass: f64, p1: f64, p2: f64, p: f64) -> Option<f64> {
    let total = pos_mass + neg_mass;
    if total <= 0.0 {
        return None;
    }
    let hit = spread(pos_mass, p - p1, p) + spread(neg_mass, p2, 1.0 - p);
    Some((hit / total).clamp(0.0, 1.0))
}

fn group_params(params: &DeviationParams, group: Group) -> (f64, f64) {
    match group {
        Group::A => (params.p1a, params.p2a),
        Group::B => (params.p1b, params.p2b),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rate {
    TruePositive,
    FalsePositive,
    Positive,
}

/// One biased-distribution rate for one group, computed from region masses.
pub fn rate_from_masses(
    rate: Rate,
    params: &DeviationParams,
    group: Group,
    masses: &RegionMasses,
) -> Result<f64> {
    let [pp, pn, np, nn] = masses.group_cells(group);
    let (pos, neg) = match rate {
        Rate::TruePositive => (pp, np),
        Rate::FalsePositive => (pn, nn),
        Rate::Positive => (pp + pn, np + nn),
    };
    let (p1, p2) = group_params(params, group);
    covered_fraction(pos, neg, p1, p2, masses.p).ok_or_else(|| {
        LabError::DegenerateDenominator(format!("{rate:?} rate of group {group} has zero mass"))
    })
}

pub fn biased_tpr(
    params: &DeviationParams,
    group: Group,
    model: &TrueModel,
    bias: &BiasParams,
) -> Result<f64> {
    rate_from_masses(Rate::TruePositive, params, group, &region_masses(model, bias))
}

pub fn biased_fpr(
    params: &DeviationParams,
    group: Group,
    model: &TrueModel,
    bias: &BiasParams,
) -> Result<f64> {
    rate_from_masses(Rate::FalsePositive, params, group, &region_masses(model, bias))
}

pub fn biased_positive_rate(
    params: &DeviationParams,
    group: Group,
    model: &TrueModel,
    bias: &BiasParams,
) -> Result<f64> {
    rate_from_masses(Rate::Positive, params, group, &region_masses(model, bias))
}

/// Signed A-minus-B gap of `criterion` from precomputed masses. For
/// Equalized Odds this is whichever of the TPR and FPR gaps is larger in
/// magnitude.
pub fn gap_from_masses(
    criterion: Criterion,
    params: &DeviationParams,
    masses: &RegionMasses,
) -> Result<f64> {
    let gap = |rate| -> Result<f64> {
        Ok(rate_from_masses(rate, params, Group::A, masses)?
            - rate_from_masses(rate, params, Group::B, masses)?)
    };
    match criterion {
        Criterion::EqualOpportunity => gap(Rate::TruePositive),
        Criterion::DemographicParity => gap(Rate::Positive),
        Criterion::EqualizedOdds => {
            let tpr = gap(Rate::TruePositive)?;
            let fpr = gap(Rate::FalsePositive)?;
            Ok(if fpr.abs() > tpr.abs() { fpr } else { tpr })
        }
    }
}

pub fn constraint_gap(
    kind: &ConstraintKind,
    params: &DeviationParams,
    model: &TrueModel,
    bias: &BiasParams,
) -> Result<f64> {
    gap_from_masses(kind.criterion, params, &region_masses(model, bias))
}

/// Weighted confusion counts of one group under a threshold rule.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GroupCounts {
    pub positives: f64,
    pub negatives: f64,
    pub true_positives: f64,
    pub false_positives: f64,
}

impl GroupCounts {
    pub fn tpr(&self) -> Result<f64> {
        if self.positives > 0.0 {
            Ok(self.true_positives / self.positives)
        } else {
            Err(LabError::InsufficientData("TPR undefined: no positives".into()))
        }
    }

    pub fn fpr(&self) -> Result<f64> {
        if self.negatives > 0.0 {
            Ok(self.false_positives / self.negatives)
        } else {
            Err(LabError::InsufficientData("FPR undefined: no negatives".into()))
        }
    }

    pub fn positive_rate(&self) -> Result<f64> {
        let total = self.positives + self.negatives;
        if total > 0.0 {
            Ok((self.true_positives + self.false_positives) / total)
        } else {
            Err(LabError::InsufficientData("empty group".into()))
        }
    }
}

/// Weighted plug-in rates of the threshold pair `h` on `data`, indexed by
/// [`Group::index`].
pub fn empirical_rates(h: &ThresholdPair, data: &Dataset) -> Result<[GroupCounts; 2]> {
    let mut counts = [GroupCounts::default(); 2];
    for e in &data.examples {
        let c = &mut counts[e.group.index()];
        let predicted = e.x >= h.threshold(e.group);
        match (e.label, predicted) {
            (true, true) => {
                c.positives += e.weight;
                c.true_positives += e.weight;
            }
            (true, false) => c.positives += e.weight,
            (false, true) => {
                c.negatives += e.weight;
                c.false_positives += e.weight;
            }
            (false, false) => c.negatives += e.weight,
        }
    }
    for g in Group::BOTH {
        let c = counts[g.index()];
        if c.positives + c.negatives <= 0.0 {
            return Err(LabError::InsufficientData(format!("group {g} is empty")));
        }
    }
    Ok(counts)
}

/// Signed A-minus-B gap of `criterion` from empirical counts.
pub fn empirical_gap(criterion: Criterion, rates: &[GroupCounts; 2]) -> Result<f64> {
    let [a, b] = rates;
    match criterion {
        Criterion::EqualOpportunity => Ok(a.tpr()? - b.tpr()?),
        Criterion::DemographicParity => Ok(a.positive_rate()? - b.positive_rate()?),
        Criterion::EqualizedOdds => {
            let tpr = a.tpr()? - b.tpr()?;
            let fpr = a.fpr()? - b.fpr()?;
            Ok(if fpr.abs() > tpr.abs() { fpr } else { tpr })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::LabeledExample;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    fn setting(r: f64, p: f64, eta: f64, bp: f64, bn: f64, nu: f64) -> (TrueModel, BiasParams) {
        (
            TrueModel::new(r, p, eta).unwrap(),
            BiasParams::new(bp, bn, nu).unwrap(),
        )
    }

    #[test]
    fn bayes_rule_tpr_is_bias_invariant() {
        let h = DeviationParams::H_STAR;
        for bias in [(1.0, 1.0, 0.0), (0.2, 0.7, 0.4), (0.01, 0.01, 0.99)] {
            let (m, b) = setting(0.4, 0.5, 1.0 / 3.0, bias.0, bias.1, bias.2);
            for g in Group::BOTH {
                assert!(close(biased_tpr(&h, g, &m, &b).unwrap(), 2.0 / 3.0));
            }
        }
    }

    #[test]
    fn extremes_have_trivial_rates() {
        let (m, b) = setting(0.4, 0.3, 0.2, 0.5, 0.6, 0.3);
        let h0 = DeviationParams::all_negative(&m);
        let h1 = DeviationParams::all_positive(&m);
        for g in Group::BOTH {
            assert_eq!(biased_tpr(&h0, g, &m, &b).unwrap(), 0.0);
            assert_eq!(biased_positive_rate(&h0, g, &m, &b).unwrap(), 0.0);
            assert!(close(biased_tpr(&h1, g, &m, &b).unwrap(), 1.0));
            assert!(close(biased_fpr(&h1, g, &m, &b).unwrap(), 1.0));
        }
    }

    #[test]
    fn labeling_bias_breaks_fpr_parity() {
        let (m, b) = setting(0.3, 0.5, 0.0, 1.0, 1.0, 0.5);
        let rm = region_masses(&m, &b);
        let h = DeviationParams::H_STAR;
        assert_eq!(biased_fpr(&h, Group::A, &m, &b).unwrap(), 0.0);
        let fpr_b = biased_fpr(&h, Group::B, &m, &b).unwrap();
        assert!(close(fpr_b, rm.r6 / (rm.r6 + rm.r8)));
        assert!(fpr_b > 0.0);
        let kind = ConstraintKind::analytic(Criterion::EqualizedOdds);
        let gap = constraint_gap(&kind, &h, &m, &b).unwrap();
        assert!(close(gap, -rm.r6 / (rm.r6 + rm.r8)));
        assert!(!kind.satisfied_by(gap));
    }

    #[test]
    fn demographic_parity_under_representation_example() {
        let (m, b) = setting(0.3, 0.5, 0.0, 0.5, 1.0, 0.0);
        let h = DeviationParams::H_STAR;
        assert!(close(biased_positive_rate(&h, Group::A, &m, &b).unwrap(), 0.5));
        assert!(close(biased_positive_rate(&h, Group::B, &m, &b).unwrap(), 1.0 / 3.0));
        let kind = ConstraintKind::analytic(Criterion::DemographicParity);
        assert!(close(constraint_gap(&kind, &h, &m, &b).unwrap(), 1.0 / 6.0));
    }

    #[test]
    fn matched_params_without_bias_have_equal_positive_rates() {
        let (m, b) = setting(0.3, 0.4, 0.1, 1.0, 1.0, 0.0);
        let h = DeviationParams {
            p1a: 0.1,
            p2a: 0.2,
            p1b: 0.1,
            p2b: 0.2,
        };
        let a = biased_positive_rate(&h, Group::A, &m, &b).unwrap();
        let bb = biased_positive_rate(&h, Group::B, &m, &b).unwrap();
        assert!(close(a, bb));
        assert!(close(a, 0.4 - 0.1 + 0.2));
    }

    #[test]
    fn eo_gap_matches_constraint_levels() {
        let (m, b) = setting(0.3, 0.4, 0.15, 0.3, 0.8, 0.2);
        let h = DeviationParams {
            p1a: 0.05,
            p2a: 0.1,
            p1b: 0.2,
            p2b: 0.3,
        };
        let ca = ConstraintLevel::of(h.p1a, h.p2a, m.eta).c;
        let cb = ConstraintLevel::of(h.p1b, h.p2b, m.eta).c;
        let q = m.base_rate();
        let gap = constraint_gap(&ConstraintKind::analytic(Criterion::EqualOpportunity), &h, &m, &b)
            .unwrap();
        assert!(close(gap, (ca - cb) / q));
    }

    #[test]
    fn degenerate_fpr_denominator() {
        // p = 1 and eta = 0 leave group A without apparent negatives
        let (m, b) = setting(0.3, 1.0, 0.0, 1.0, 1.0, 0.0);
        assert!(matches!(
            biased_fpr(&DeviationParams::H_STAR, Group::A, &m, &b),
            Err(LabError::DegenerateDenominator(_))
        ));
    }

    #[test]
    fn empirical_rates_edge_cases() {
        let ex = |x, group, label| LabeledExample {
            x,
            group,
            label,
            weight: 1.0,
        };
        let h = ThresholdPair { t_a: 0.5, t_b: 0.5 };
        let d = Dataset {
            examples: vec![ex(0.9, Group::A, true), ex(0.8, Group::B, true)],
            seed: 0,
        };
        let rates = empirical_rates(&h, &d).unwrap();
        assert_eq!(rates[0].tpr().unwrap(), 1.0);
        assert_eq!(rates[1].tpr().unwrap(), 1.0);
        assert!(matches!(rates[0].fpr(), Err(LabError::InsufficientData(_))));

        let d = Dataset {
            examples: vec![ex(0.9, Group::A, true)],
            seed: 0,
        };
        assert!(matches!(
            empirical_rates(&h, &d),
            Err(LabError::InsufficientData(_))
        ));
    }

    #[test]
    fn empirical_tolerance_must_be_positive() {
        assert!(ConstraintKind::empirical(Criterion::EqualOpportunity, 0.0).is_err());
        assert!(ConstraintKind::empirical(Criterion::EqualOpportunity, 0.01).is_ok());
        assert!((ConstraintKind::default_empirical_tolerance(100_000) - 0.01).abs() < 1e-15);
    }
}
