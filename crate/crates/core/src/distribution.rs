//! The uncorrupted population: two groups, a Bayes-optimal threshold pair
//! and symmetric label noise.
//!
//! Features are uniform on `[0, 1)` within each group and the Bayes-optimal
//! rule for group `g` is `x >= theta_g` with `theta_g = 1 - p`, so every
//! region mass used by the analytic engine is an interval length.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{range_err, LabError, Result};
use crate::format::sig17;
use crate::rng::stream_rng;
use crate::solver::DeviationParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    A,
    B,
}

impl Group {
    pub const BOTH: [Group; 2] = [Group::A, Group::B];

    pub fn index(self) -> usize {
        match self {
            Group::A => 0,
            Group::B => 1,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::A => "A",
            Group::B => "B",
        })
    }
}

impl FromStr for Group {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" => Ok(Group::A),
            "B" => Ok(Group::B),
            other => Err(LabError::Invalid(format!("unknown group `{other}`"))),
        }
    }
}

/// Population and label-generation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueModel {
    /// Mass of group B.
    pub r: f64,
    /// Positive mass of the Bayes-optimal rule in each group.
    pub p: f64,
    /// Label-flip noise.
    pub eta: f64,
    pub theta_a: f64,
    pub theta_b: f64,
}

impl TrueModel {
    /// Builds the canonical model (`theta_g = 1 - p`) and validates it.
    pub fn new(r: f64, p: f64, eta: f64) -> Result<Self> {
        validate_model(TrueModel {
            r,
            p,
            eta,
            theta_a: 1.0 - p,
            theta_b: 1.0 - p,
        })
    }

    pub fn theta(&self, group: Group) -> f64 {
        match group {
            Group::A => self.theta_a,
            Group::B => self.theta_b,
        }
    }

    /// Fraction of positive true labels, identical in both groups.
    pub fn base_rate(&self) -> f64 {
        base_rate(self)
    }
}

pub fn validate_model(model: TrueModel) -> Result<TrueModel> {
    let TrueModel {
        r, p, eta, theta_a, theta_b,
    } = model;
    if !(r > 0.0 && r < 1.0) {
        return Err(range_err("r", r, "0 < r < 1"));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(range_err("p", p, "0 < p <= 1"));
    }
    if !(eta >= 0.0 && eta < 0.5) {
        return Err(range_err("eta", eta, "0 <= eta < 1/2"));
    }
    for (field, theta) in [("theta_a", theta_a), ("theta_b", theta_b)] {
        if !(0.0..=1.0).contains(&theta) {
            return Err(range_err(field, theta, "0 <= theta <= 1"));
        }
        if (theta - (1.0 - p)).abs() > 1e-12 {
            return Err(range_err(field, theta, "theta = 1 - p"));
        }
    }
    Ok(model)
}

pub fn base_rate(model: &TrueModel) -> f64 {
    let TrueModel { p, eta, .. } = *model;
    p * (1.0 - eta) + (1.0 - p) * eta
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledExample {
    pub x: f64,
    pub group: Group,
    pub label: bool,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub examples: Vec<LabeledExample>,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn group(&self, group: Group) -> impl Iterator<Item = &LabeledExample> {
        self.examples.iter().filter(move |e| e.group == group)
    }

    /// Writes `x,group,label,weight` CSV with 17-significant-digit numbers.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x", "group", "label", "weight"])?;
        for e in &self.examples {
            w.write_record([
                sig17(e.x),
                e.group.to_string(),
                u8::from(e.label).to_string(),
                sig17(e.weight),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV written by [`Dataset::write_csv`]. The seed is not part
    /// of the format and is set to `seed`.
    pub fn read_csv<R: Read>(reader: R, seed: u64) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["x", "group", "label", "weight"] {
            return Err(LabError::Invalid(format!(
                "expected header `x,group,label,weight`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut examples = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let bad = |what: &str| LabError::Invalid(format!("row {}: bad {what}", line + 2));
            let x: f64 = record[0].trim().parse().map_err(|_| bad("x"))?;
            if !(0.0..=1.0).contains(&x) {
                return Err(bad("x (outside [0,1])"));
            }
            let group: Group = record[1].parse()?;
            let label = match record[2].trim() {
                "0" => false,
                "1" => true,
                _ => return Err(bad("label")),
            };
            let weight: f64 = record[3].trim().parse().map_err(|_| bad("weight"))?;
            if !(weight > 0.0) {
                return Err(bad("weight (must be positive)"));
            }
            examples.push(LabeledExample {
                x,
                group,
                label,
                weight,
            });
        }
        Ok(Dataset { examples, seed })
    }
}

/// Draws `n` examples from the uncorrupted distribution.
///
/// Per example, in order: group coin (B with probability `r`), uniform
/// feature, then a flip coin with probability `eta` applied to the
/// threshold rule's label.
pub fn sample_true(model: &TrueModel, n: usize, seed: u64) -> Dataset {
    let mut rng = stream_rng(seed, 0);
    let examples = (0..n)
        .map(|_| {
            let group = if rng.random::<f64>() < model.r {
                Group::B
            } else {
                Group::A
            };
            let x: f64 = rng.random();
            let clean = x >= model.theta(group);
            let flip = rng.random::<f64>() < model.eta;
            LabeledExample {
                x,
                group,
                label: clean ^ flip,
                weight: 1.0,
            }
        })
        .collect();
    Dataset { examples, seed }
}

/// True-distribution error of the hypothesis pair described by `params`.
///
/// Disagreeing with the Bayes rule on mass `p1 + p2` costs `1 - 2 eta` per
/// unit over the Bayes error `eta`.
pub fn analytic_true_error(params: &DeviationParams, model: &TrueModel) -> f64 {
    let TrueModel { r, eta, .. } = *model;
    let group_err = |dev: f64| eta + dev * (1.0 - 2.0 * eta);
    (1.0 - r) * group_err(params.p1a + params.p2a) + r * group_err(params.p1b + params.p2b)
}

/// Error of a threshold pair measured on a labeled sample, ignoring weights.
pub fn empirical_error(data: &Dataset, t_a: f64, t_b: f64) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let wrong = data
        .examples
        .iter()
        .filter(|e| {
            let t = match e.group {
                Group::A => t_a,
                Group::B => t_b,
            };
            (e.x >= t) != e.label
        })
        .count();
    wrong as f64 / data.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn validate_accepts_reference_settings() {
        assert!(TrueModel::new(1.0 / 3.0, 0.5, 1.0 / 3.0).is_ok());
        assert!(TrueModel::new(0.25, 1.0, 0.49).is_ok());
    }

    #[test]
    fn validate_names_offending_field() {
        match TrueModel::new(0.0, 0.5, 0.0) {
            Err(LabError::Range { field, .. }) => assert_eq!(field, "r"),
            other => panic!("expected range error on r, got {other:?}"),
        }
        match TrueModel::new(0.5, 0.0, 0.0) {
            Err(LabError::Range { field, .. }) => assert_eq!(field, "p"),
            other => panic!("expected range error on p, got {other:?}"),
        }
        match TrueModel::new(0.5, 0.5, 0.5) {
            Err(LabError::Range { field, .. }) => assert_eq!(field, "eta"),
            other => panic!("expected range error on eta, got {other:?}"),
        }
        let mut m = TrueModel::new(0.5, 0.5, 0.1).unwrap();
        m.theta_b = 0.3;
        assert!(matches!(
            validate_model(m),
            Err(LabError::Range { field: "theta_b", .. })
        ));
    }

    #[test]
    fn base_rate_examples() {
        let m = |p, eta| TrueModel::new(0.3, p, eta).unwrap();
        assert!(close(base_rate(&m(0.5, 1.0 / 3.0)), 0.5));
        assert!(close(base_rate(&m(0.25, 0.0)), 0.25));
        assert!(close(base_rate(&m(0.25, 0.2)), 0.35));
    }

    #[test]
    fn empty_sample() {
        let m = TrueModel::new(0.3, 0.5, 0.1).unwrap();
        assert!(sample_true(&m, 0, 1).is_empty());
    }

    #[test]
    fn noiseless_labels_follow_threshold() {
        let m = TrueModel::new(0.4, 0.3, 0.0).unwrap();
        let d = sample_true(&m, 5000, 11);
        assert!(d.examples.iter().all(|e| e.label == (e.x >= 0.7)));
        assert!(d.examples.iter().all(|e| e.weight == 1.0));
    }

    #[test]
    fn sampling_is_reproducible() {
        let m = TrueModel::new(0.4, 0.3, 0.2).unwrap();
        assert_eq!(sample_true(&m, 1000, 5), sample_true(&m, 1000, 5));
        assert_ne!(sample_true(&m, 1000, 5), sample_true(&m, 1000, 6));
    }

    #[test]
    fn analytic_true_error_examples() {
        let m = TrueModel::new(0.7, 0.5, 1.0 / 3.0).unwrap();
        assert!(close(analytic_true_error(&DeviationParams::H_STAR, &m), 1.0 / 3.0));
        let h0 = DeviationParams::all_negative(&m);
        assert!(close(analytic_true_error(&h0, &m), 0.5));

        let m = TrueModel::new(1.0 / 3.0, 0.5, 0.2).unwrap();
        let params = DeviationParams {
            p1b: 0.1,
            ..DeviationParams::H_STAR
        };
        assert!(close(analytic_true_error(&params, &m), 0.22));
    }

    #[test]
    fn csv_round_trip() {
        let m = TrueModel::new(0.4, 0.3, 0.2).unwrap();
        let d = sample_true(&m, 200, 3);
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x,group,label,weight\n"));
        let back = Dataset::read_csv(buf.as_slice(), 3).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn csv_rejects_bad_header() {
        let err = Dataset::read_csv("a,b,c,d\n".as_bytes(), 0).unwrap_err();
        assert!(err.to_string().contains("header"));
    }
}
