//! Corruption of group B: under-representation of true positives and
//! negatives followed by one-sided mislabeling of surviving positives.

use serde::{Deserialize, Serialize};

use crate::distribution::{Dataset, Group, TrueModel};
use crate::error::{range_err, LabError, Result};
use crate::rng::CounterUniforms;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasParams {
    /// Retention probability of true positives in group B.
    pub beta_pos: f64,
    /// Retention probability of true negatives in group B.
    pub beta_neg: f64,
    /// Probability that a retained B positive is relabeled negative.
    pub nu: f64,
}

impl BiasParams {
    pub const NONE: BiasParams = BiasParams {
        beta_pos: 1.0,
        beta_neg: 1.0,
        nu: 0.0,
    };

    pub fn new(beta_pos: f64, beta_neg: f64, nu: f64) -> Result<Self> {
        BiasParams {
            beta_pos,
            beta_neg,
            nu,
        }
        .validate()
    }

    /// Pure under-representation `(beta, 1, 0)`.
    pub fn under_representation(beta: f64) -> Result<Self> {
        Self::new(beta, 1.0, 0.0)
    }

    /// Pure labeling bias `(1, 1, nu)`.
    pub fn labeling(nu: f64) -> Result<Self> {
        Self::new(1.0, 1.0, nu)
    }

    pub fn validate(self) -> Result<Self> {
        if !(self.beta_pos > 0.0 && self.beta_pos <= 1.0) {
            return Err(range_err("beta_pos", self.beta_pos, "0 < beta_pos <= 1"));
        }
        if !(self.beta_neg > 0.0 && self.beta_neg <= 1.0) {
            return Err(range_err("beta_neg", self.beta_neg, "0 < beta_neg <= 1"));
        }
        if !(self.nu >= 0.0 && self.nu < 1.0) {
            return Err(range_err("nu", self.nu, "0 <= nu < 1"));
        }
        Ok(self)
    }
}

impl Default for BiasParams {
    fn default() -> Self {
        Self::NONE
    }
}

/// Un-normalized probabilities of the eight (group, Bayes-rule sign,
/// observed label) events of the biased distribution.
///
/// | cell | group | h* | label |
/// |------|-------|----|-------|
/// | r1   | A     | +  | +     |
/// | r2   | A     | +  | -     |
/// | r3   | A     | -  | +     |
/// | r4   | A     | -  | -     |
/// | r5   | B     | +  | +     |
/// | r6   | B     | +  | -     |
/// | r7   | B     | -  | +     |
/// | r8   | B     | -  | -     |
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionMasses {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r4: f64,
    pub r5: f64,
    pub r6: f64,
    pub r7: f64,
    pub r8: f64,
    /// Positive-region width of the Bayes rule, needed to spread each cell
    /// uniformly over its region.
    pub p: f64,
}

impl RegionMasses {
    pub fn cells(&self) -> [f64; 8] {
        [
            self.r1, self.r2, self.r3, self.r4, self.r5, self.r6, self.r7, self.r8,
        ]
    }

    pub fn total(&self) -> f64 {
        self.cells().iter().sum()
    }

    /// `(pos-region, positive label)`, `(pos-region, negative label)`,
    /// `(neg-region, positive label)`, `(neg-region, negative label)` for one
    /// group.
    pub fn group_cells(&self, group: Group) -> [f64; 4] {
        match group {
            Group::A => [self.r1, self.r2, self.r3, self.r4],
            Group::B => [self.r5, self.r6, self.r7, self.r8],
        }
    }
}

pub fn region_masses(model: &TrueModel, bias: &BiasParams) -> RegionMasses {
    let TrueModel { r, p, eta, .. } = *model;
    let BiasParams {
        beta_pos,
        beta_neg,
        nu,
    } = *bias;
    let q = 1.0 - p;
    RegionMasses {
        r1: (1.0 - r) * p * (1.0 - eta),
        r2: (1.0 - r) * p * eta,
        r3: (1.0 - r) * q * eta,
        r4: (1.0 - r) * q * (1.0 - eta),
        r5: r * p * (1.0 - eta) * beta_pos * (1.0 - nu),
        r6: r * p * ((1.0 - eta) * beta_pos * nu + eta * beta_neg),
        r7: r * q * (eta * beta_pos) * (1.0 - nu),
        r8: r * q * ((1.0 - eta) * beta_neg + eta * beta_pos * nu),
        p,
    }
}

const RETAIN_SLOT: u8 = 0;
const FLIP_SLOT: u8 = 1;

/// Corrupts group B of `data`: each example is first retained with
/// `beta_pos` or `beta_neg` according to its true label, then each retained
/// positive is relabeled negative with probability `nu`.
///
/// Coins are addressed by the example's position in `data`, so changing the
/// bias parameters never reshuffles decisions for other examples.
pub fn apply_bias(data: &Dataset, bias: &BiasParams, seed: u64) -> Dataset {
    let mut coins = CounterUniforms::new(seed, 1);
    let examples = data
        .examples
        .iter()
        .enumerate()
        .filter_map(|(i, e)| {
            if e.group == Group::A {
                return Some(*e);
            }
            let keep = if e.label {
                bias.beta_pos
            } else {
                bias.beta_neg
            };
            if coins.uniform(i as u64, RETAIN_SLOT) >= keep {
                return None;
            }
            let mut out = *e;
            if e.label && coins.uniform(i as u64, FLIP_SLOT) < bias.nu {
                out.label = false;
            }
            Some(out)
        })
        .collect();
    Dataset {
        examples,
        seed: data.seed,
    }
}

/// Weighted (positive, total) mass of one group.
pub(crate) fn positive_fraction(data: &Dataset, group: Group) -> (f64, f64) {
    data.group(group).fold((0.0, 0.0), |(pos, tot), e| {
        (pos + if e.label { e.weight } else { 0.0 }, tot + e.weight)
    })
}

/// Odds-ratio estimate of `beta` under pure under-representation.
pub fn estimate_beta(data: &Dataset) -> Result<f64> {
    let (pos_a, tot_a) = positive_fraction(data, Group::A);
    let (pos_b, tot_b) = positive_fraction(data, Group::B);
    let cells = [
        ("group A positives", pos_a),
        ("group A negatives", tot_a - pos_a),
        ("group B positives", pos_b),
        ("group B negatives", tot_b - pos_b),
    ];
    if let Some((name, _)) = cells.iter().find(|(_, v)| *v <= 0.0) {
        return Err(LabError::InsufficientData(format!("no {name}")));
    }
    let odds_a = pos_a / (tot_a - pos_a);
    let odds_b = pos_b / (tot_b - pos_b);
    Ok(odds_b / odds_a)
}

/// Positive-fraction-ratio estimate of `nu` under pure labeling bias,
/// clamped to `[0, 1)`.
pub fn estimate_nu(data: &Dataset) -> Result<f64> {
    let (pos_a, tot_a) = positive_fraction(data, Group::A);
    let (pos_b, tot_b) = positive_fraction(data, Group::B);
    if tot_a <= 0.0 || pos_a <= 0.0 {
        return Err(LabError::InsufficientData("no group A positives".into()));
    }
    if tot_b <= 0.0 {
        return Err(LabError::InsufficientData("no group B examples".into()));
    }
    let nu = 1.0 - (pos_b / tot_b) / (pos_a / tot_a);
    Ok(nu.clamp(0.0, f64::from_bits(1.0f64.to_bits() - 1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::{sample_true, LabeledExample};

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn reference_setting_masses() {
        let m = TrueModel::new(1.0 / 3.0, 0.5, 1.0 / 3.0).unwrap();
        let b = BiasParams::new(1.0 / 3.0, 1.0, 0.0).unwrap();
        let got = region_masses(&m, &b).cells();
        let want = [
            2.0 / 9.0,
            1.0 / 9.0,
            1.0 / 9.0,
            2.0 / 9.0,
            1.0 / 27.0,
            1.0 / 18.0,
            1.0 / 54.0,
            1.0 / 9.0,
        ];
        for (g, w) in got.iter().zip(want) {
            assert!(close(*g, w), "{got:?}");
        }
        assert!(got[5] > got[4]);
    }

    #[test]
    fn noiseless_unbiased_masses() {
        let m = TrueModel::new(0.3, 0.4, 0.0).unwrap();
        let rm = region_masses(&m, &BiasParams::NONE);
        assert_eq!([rm.r2, rm.r3, rm.r6, rm.r7], [0.0; 4]);
        assert!(close(rm.r1, 0.7 * 0.4));
        assert!(close(rm.r4, 0.7 * 0.6));
        assert!(close(rm.r5, 0.3 * 0.4));
        assert!(close(rm.r8, 0.3 * 0.6));
        assert!(close(rm.total(), 1.0));
    }

    #[test]
    fn bias_validation() {
        assert!(BiasParams::new(0.0, 1.0, 0.0).is_err());
        assert!(BiasParams::new(1.0, 1.1, 0.0).is_err());
        assert!(matches!(
            BiasParams::new(1.0, 1.0, 1.0),
            Err(LabError::Range { field: "nu", .. })
        ));
    }

    #[test]
    fn identity_bias_is_identity() {
        let m = TrueModel::new(0.4, 0.5, 0.2).unwrap();
        let d = sample_true(&m, 3000, 2);
        assert_eq!(apply_bias(&d, &BiasParams::NONE, 9), d);
    }

    #[test]
    fn group_a_untouched_and_no_growth() {
        let m = TrueModel::new(0.5, 0.5, 0.2).unwrap();
        let d = sample_true(&m, 3000, 2);
        let b = BiasParams::new(0.3, 0.6, 0.4).unwrap();
        let out = apply_bias(&d, &b, 4);
        assert!(out.len() <= d.len());
        let a_in: Vec<_> = d.group(Group::A).collect();
        let a_out: Vec<_> = out.group(Group::A).collect();
        assert_eq!(a_in, a_out);
    }

    #[test]
    fn retention_decisions_are_stable_under_parameter_changes() {
        // lowering nu only changes labels, never membership
        let m = TrueModel::new(0.5, 0.5, 0.2).unwrap();
        let d = sample_true(&m, 2000, 8);
        let lo = apply_bias(&d, &BiasParams::new(0.5, 0.7, 0.1).unwrap(), 3);
        let hi = apply_bias(&d, &BiasParams::new(0.5, 0.7, 0.8).unwrap(), 3);
        let xs = |d: &Dataset| d.examples.iter().map(|e| e.x).collect::<Vec<_>>();
        assert_eq!(xs(&lo), xs(&hi));
    }

    #[test]
    fn estimators_report_empty_cells() {
        let ex = |group, label| LabeledExample {
            x: 0.5,
            group,
            label,
            weight: 1.0,
        };
        let d = Dataset {
            examples: vec![ex(Group::A, true), ex(Group::A, false), ex(Group::B, true)],
            seed: 0,
        };
        assert!(matches!(estimate_beta(&d), Err(LabError::InsufficientData(_))));
        let d = Dataset {
            examples: vec![ex(Group::A, false), ex(Group::B, true)],
            seed: 0,
        };
        assert!(matches!(estimate_nu(&d), Err(LabError::InsufficientData(_))));
    }

    #[test]
    fn nu_estimate_is_clamped() {
        let ex = |group, label| LabeledExample {
            x: 0.5,
            group,
            label,
            weight: 1.0,
        };
        let d = Dataset {
            examples: vec![ex(Group::A, true), ex(Group::B, false)],
            seed: 0,
        };
        let nu = estimate_nu(&d).unwrap();
        assert!(nu < 1.0 && nu > 0.999);
        let d = Dataset {
            examples: vec![ex(Group::A, true), ex(Group::A, false), ex(Group::B, true)],
            seed: 0,
        };
        assert_eq!(estimate_nu(&d).unwrap(), 0.0);
    }
}
