//! Invariant suites behind the `verify` command.
//!
//! Each suite draws its own deterministic stream from the master seed and
//! reports how many checks ran, how many failed, and the first failing
//! parameters.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bias::{apply_bias, region_masses, BiasParams};
use crate::distribution::{analytic_true_error, sample_true, Group, TrueModel};
use crate::error::{LabError, Result};
use crate::fairness::{biased_positive_rate, gap_from_masses, rate_from_masses, ConstraintKind, Criterion, Rate};
use crate::recovery::{self, recovery_region, strong_recovery_certificate, AxisSpec, BiasFamily, Verdict};
use crate::rng::stream_rng;
use crate::solver::{
    biased_error, estimated_labelbias_z, exact_constrained_erm, grid_constrained_erm, labelbias_Z,
    labelbias_z_window, nearest_feasible_deviation, population_reweighting_factor, reweight_labelbias,
    reweight_underrep, reweighted_masses, shrink, Candidate, DeviationParams, ThresholdPair, TIE_EPS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Suite {
    RegionSweep,
    Tightness,
    Oracle,
    EoInvariance,
    Shrink,
    DpFailure,
    EoddsFailure,
    Reweighting,
    StrongRecovery,
}

impl Suite {
    pub const ALL: [Suite; 9] = [
        Suite::RegionSweep,
        Suite::Tightness,
        Suite::Oracle,
        Suite::EoInvariance,
        Suite::Shrink,
        Suite::DpFailure,
        Suite::EoddsFailure,
        Suite::Reweighting,
        Suite::StrongRecovery,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::RegionSweep => "region-sweep",
            Suite::Tightness => "tightness",
            Suite::Oracle => "oracle",
            Suite::EoInvariance => "eo-invariance",
            Suite::Shrink => "shrink",
            Suite::DpFailure => "dp-failure",
            Suite::EoddsFailure => "eodds-failure",
            Suite::Reweighting => "reweighting",
            Suite::StrongRecovery => "strong-recovery",
        }
    }

    fn default_trials(self) -> usize {
        match self {
            Suite::Oracle => 1_000,
            _ => 10_000,
        }
    }

    fn stream(self) -> u64 {
        Suite::ALL.iter().position(|s| *s == self).expect("listed") as u64 + 100
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| LabError::Invalid(format!("unknown suite `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    /// Overrides each suite's default trial count.
    pub trials: Option<usize>,
    pub seed: u64,
    /// Monte Carlo sample size for the reweighting checks.
    pub mc_samples: usize,
    /// Flips the sign of the all-negative condition, to prove the suites
    /// can fail.
    pub inject_fault: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            trials: None,
            seed: 0,
            mc_samples: 1_000_000,
            inject_fault: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: usize,
    pub failures: usize,
    pub counterexample: Option<String>,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.checks > 0
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {}/{} checks passed ({:.2?})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.suite,
            self.checks - self.failures,
            self.checks,
            self.elapsed
        )?;
        if let Some(c) = &self.counterexample {
            write!(f, "\n  counterexample: {c}")?;
        }
        Ok(())
    }
}

/// Accumulates check outcomes, keeping the first failure's description.
#[derive(Default)]
struct Tally {
    checks: usize,
    failures: usize,
    counterexample: Option<String>,
}

impl Tally {
    fn check(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures += 1;
            if self.counterexample.is_none() {
                self.counterexample = Some(describe());
            }
        }
    }

    fn merge(&mut self, other: Tally) {
        self.checks += other.checks;
        self.failures += other.failures;
        if self.counterexample.is_none() {
            self.counterexample = other.counterexample;
        }
    }

    fn finish(self, suite: Suite, start: Instant) -> SuiteReport {
        SuiteReport {
            suite,
            checks: self.checks,
            failures: self.failures,
            counterexample: self.counterexample,
            elapsed: start.elapsed(),
        }
    }
}

/// A uniform draw from the full parameter box: `r` in `(0,1)`, `p` in
/// `(0,1]`, `eta` in `[0,1/2)`, `beta` in `(0,1]`, `nu` in `[0,1)`.
pub fn random_setting(rng: &mut ChaCha8Rng) -> (TrueModel, BiasParams) {
    loop {
        let r: f64 = rng.random();
        let p = 1.0 - rng.random::<f64>();
        let eta = 0.5 * rng.random::<f64>();
        let bias = BiasParams {
            beta_pos: 1.0 - rng.random::<f64>(),
            beta_neg: 1.0 - rng.random::<f64>(),
            nu: rng.random(),
        };
        if let Ok(m) = TrueModel::new(r, p, eta) {
            return (m, bias);
        }
    }
}

fn describe(m: &TrueModel, b: &BiasParams) -> String {
    format!(
        "r={} p={} eta={} beta_pos={} beta_neg={} nu={}",
        m.r, m.p, m.eta, b.beta_pos, b.beta_neg, b.nu
    )
}

type Conditions = fn(&TrueModel, &BiasParams) -> (f64, f64);

fn true_conditions(m: &TrueModel, b: &BiasParams) -> (f64, f64) {
    (recovery::cond_neg(m, b), recovery::cond_pos(m, b))
}

fn faulty_conditions(m: &TrueModel, b: &BiasParams) -> (f64, f64) {
    (-recovery::cond_neg(m, b), recovery::cond_pos(m, b))
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Result<SuiteReport> {
    let start = Instant::now();
    let trials = opts.trials.unwrap_or(suite.default_trials());
    let mut rng = stream_rng(opts.seed, suite.stream());
    let conditions: Conditions = if opts.inject_fault {
        faulty_conditions
    } else {
        true_conditions
    };
    let tally = match suite {
        Suite::RegionSweep => region_sweep(conditions)?,
        Suite::Tightness => tightness(trials, &mut rng, conditions)?,
        Suite::Oracle => oracle(trials, &mut rng)?,
        Suite::EoInvariance => eo_invariance(trials, &mut rng)?,
        Suite::Shrink => shrink_suite(trials, &mut rng)?,
        Suite::DpFailure => dp_failure()?,
        Suite::EoddsFailure => eodds_failure(trials, &mut rng)?,
        Suite::Reweighting => reweighting(trials, &mut rng, opts)?,
        Suite::StrongRecovery => strong(trials, opts.seed)?,
    };
    Ok(tally.finish(suite, start))
}

pub fn run_all(opts: &VerifyOptions) -> Result<Vec<SuiteReport>> {
    Suite::ALL.iter().map(|s| run_suite(*s, opts)).collect()
}

fn region_sweep(conditions: Conditions) -> Result<Tally> {
    let mut t = Tally::default();
    let r = 1.0 / 3.0;
    let model = TrueModel::new(r, 0.5, 0.0)?;
    let x = AxisSpec::parse("eta:0:0.499", 200)?;
    let y = AxisSpec::parse("beta:0.005:1", 200)?;
    let sweep = recovery_region(&model, &BiasParams::NONE, x, y)?;
    for c in &sweep.cells {
        let (m, b) = (
            TrueModel::new(r, 0.5, c.x)?,
            BiasParams::under_representation(c.y)?,
        );
        let (n, _) = conditions(&m, &b);
        if n.abs() <= 1e-9 {
            continue;
        }
        let expected = if n > 0.0 {
            Verdict::Recovers
        } else {
            Verdict::FailsToH0
        };
        t.check(c.verdict == expected, || {
            format!("eta={} beta={} verdict={} expected={expected}", c.x, c.y, c.verdict)
        });
        if c.x < 0.4 {
            t.check(c.verdict == Verdict::Recovers, || format!("eta={} beta={} below 2/5 fails", c.x, c.y));
        }
    }
    for seg in &sweep.boundary.iter().find(|b| b.condition == "cond_neg").expect("present").segments {
        for &(eta, beta) in seg {
            let closed = (5.0 * eta - 2.0) / (1.0 - eta);
            t.check((beta - closed).abs() < 1e-9, || format!("boundary at eta={eta}: {beta} vs {closed}"));
        }
    }
    Ok(t)
}

fn tightness(trials: usize, rng: &mut ChaCha8Rng, conditions: Conditions) -> Result<Tally> {
    let mut t = Tally::default();
    let kind = ConstraintKind::analytic(Criterion::EqualOpportunity);
    while t.checks < trials {
        let (m, b) = random_setting(rng);
        let (n, p) = conditions(&m, &b);
        if n.abs().min(p.abs()) <= 1e-6 {
            continue;
        }
        let rep = exact_constrained_erm(&kind, &m, &b)?;
        let got = rep.chosen_candidate;
        // with p = 1 the all-positive pair is the Bayes rule
        let ok = match (n > 0.0, p > 0.0) {
            (true, true) => got == Candidate::HStar && !rep.tie,
            (false, true) => got == Candidate::AllNegative,
            (true, false) => got == Candidate::AllPositive || (m.p == 1.0 && got == Candidate::HStar),
            (false, false) => got != Candidate::HStar,
        };
        t.check(ok, || format!("{} cond_neg={n} cond_pos={p} chosen={got}", describe(&m, &b)));
    }
    Ok(t)
}

fn oracle(trials: usize, rng: &mut ChaCha8Rng) -> Result<Tally> {
    let kind = ConstraintKind::analytic(Criterion::EqualOpportunity);
    let mut settings = Vec::with_capacity(trials);
    while settings.len() < trials {
        let (m, b) = random_setting(rng);
        let exact = exact_constrained_erm(&kind, &m, &b)?;
        let chosen = Candidate::classify(&exact.chosen, &m);
        let margin = exact
            .candidates
            .iter()
            .filter(|c| Candidate::classify(&c.params, &m) != chosen)
            .map(|c| c.biased_error - exact.biased_error)
            .fold(f64::INFINITY, f64::min);
        if margin > 1e-6 {
            settings.push((m, b, exact.chosen_candidate));
        }
    }
    let tallies: Vec<Result<Tally>> = settings
        .par_iter()
        .map(|(m, b, expected)| {
            let mut t = Tally::default();
            let grid = grid_constrained_erm(&kind, m, b, 200)?;
            t.check(grid.chosen_candidate == *expected, || {
                format!("{} exact={expected} grid={}", describe(m, b), grid.chosen_candidate)
            });
            Ok(t)
        })
        .collect();
    let mut t = Tally::default();
    for x in tallies {
        t.merge(x?);
    }
    Ok(t)
}

fn eo_invariance(trials: usize, rng: &mut ChaCha8Rng) -> Result<Tally> {
    let mut t = Tally::default();
    for _ in 0..trials {
        let (m, b) = random_setting(rng);
        let gap = gap_from_masses(Criterion::EqualOpportunity, &DeviationParams::H_STAR, &region_masses(&m, &b))?;
        t.check(gap.abs() < 1e-12, || format!("{} gap={gap}", describe(&m, &b)));
    }
    Ok(t)
}

/// Draws deviations for both groups at a common Equal Opportunity level.
fn feasible_params(m: &TrueModel, rng: &mut ChaCha8Rng) -> DeviationParams {
    let (p, q, eta) = (m.p, 1.0 - m.p, m.eta);
    loop {
        let p1a = p * rng.random::<f64>();
        let p2a = q * rng.random::<f64>();
        let c = p2a * eta - p1a * (1.0 - eta);
        let (p1b, p2b) = if eta == 0.0 {
            (p1a, q * rng.random::<f64>())
        } else {
            let p1b = p * rng.random::<f64>();
            (p1b, (c + p1b * (1.0 - eta)) / eta)
        };
        if (0.0..=q).contains(&p2b) {
            return DeviationParams { p1a, p2a, p1b, p2b };
        }
    }
}

fn shrink_suite(trials: usize, rng: &mut ChaCha8Rng) -> Result<Tally> {
    let mut t = Tally::default();
    for _ in 0..trials {
        let (m, _) = random_setting(rng);
        let d = feasible_params(&m, rng);
        let s = shrink(&d, &m);
        let o = s.params;
        let one_each = (o.p1a == 0.0 || o.p2a == 0.0) && (o.p1b == 0.0 || o.p2b == 0.0);
        t.check(one_each, || format!("{d:?} -> {o:?}"));
        let level = |p1: f64, p2: f64| p2 * m.eta - p1 * (1.0 - m.eta);
        let kept = (level(o.p1a, o.p2a) - level(d.p1a, d.p2a)).abs() <= 1e-12
            && (level(o.p1b, o.p2b) - level(d.p1b, d.p2b)).abs() <= 1e-12;
        t.check(kept, || format!("level moved: {d:?} -> {o:?} eta={}", m.eta));
        for _ in 0..10 {
            let (_, b) = random_setting(rng);
            let masses = region_masses(&m, &b);
            let (before, after) = (biased_error(&d, &masses), biased_error(&o, &masses));
            t.check(after <= before + 1e-12, || {
                format!("{} {d:?}: error {before} -> {after}", describe(&m, &b))
            });
        }
    }
    Ok(t)
}

fn dp_failure() -> Result<Tally> {
    let mut t = Tally::default();
    let kind = ConstraintKind::analytic(Criterion::DemographicParity);
    for r in [0.05, 0.25, 1.0 / 3.0, 0.5, 0.9] {
        let m = TrueModel::new(r, 0.5, 0.0)?;
        let b = BiasParams::under_representation(0.5)?;
        let pr_b = biased_positive_rate(&DeviationParams::H_STAR, Group::B, &m, &b)?;
        t.check((pr_b - 1.0 / 3.0).abs() < 1e-12, || format!("r={r}: B positive rate {pr_b}"));
        let gap = gap_from_masses(Criterion::DemographicParity, &DeviationParams::H_STAR, &region_masses(&m, &b))?;
        t.check((gap - 1.0 / 6.0).abs() < 1e-12, || format!("r={r}: gap {gap}"));
        for tol in [1e-12, 0.01, 0.1, 1.0 / 6.0 - 1e-9] {
            let k = ConstraintKind { tolerance: tol, ..kind };
            t.check(!k.satisfied_by(gap), || format!("r={r}: h* feasible at tolerance {tol}"));
        }
    }
    Ok(t)
}

fn eodds_failure(trials: usize, rng: &mut ChaCha8Rng) -> Result<Tally> {
    let mut t = Tally::default();
    for _ in 0..trials {
        let (m0, mut b) = random_setting(rng);
        let m = TrueModel::new(m0.r, m0.p, 0.0)?;
        if b.nu == 0.0 || m.p == 1.0 {
            continue;
        }
        b.nu = b.nu.max(1e-9);
        let masses = region_masses(&m, &b);
        let expected = -masses.r6 / (masses.r6 + masses.r8);
        let fpr_a = rate_from_masses(Rate::FalsePositive, &DeviationParams::H_STAR, Group::A, &masses)?;
        let fpr_b = rate_from_masses(Rate::FalsePositive, &DeviationParams::H_STAR, Group::B, &masses)?;
        let gap = fpr_a - fpr_b;
        t.check((gap - expected).abs() < 1e-12 && gap != 0.0, || {
            format!("{} fpr gap {gap} vs {expected}", describe(&m, &b))
        });
    }
    let kind = ConstraintKind {
        criterion: Criterion::EqualizedOdds,
        tolerance: 1e-3,
    };
    for r in [0.25, 1.0 / 3.0, 0.5] {
        let m = TrueModel::new(r, 0.5, 0.0)?;
        let b = BiasParams::labeling(0.5)?;
        let nearest = nearest_feasible_deviation(&kind, &m, &b, 200)?;
        t.check(nearest.is_none_or(|d| d > 1e-3), || {
            format!("r={r} nu=0.5: feasible point at deviation {nearest:?}")
        });
        let solved = grid_constrained_erm(&kind, &m, &b, 200);
        let picks_h_star = matches!(&solved, Ok(rep) if rep.chosen_candidate == Candidate::HStar);
        t.check(!picks_h_star, || format!("r={r} nu=0.5: grid solver returned h*"));
    }
    Ok(t)
}

/// Weighted mean and its standard error.
fn weighted_mean_se(values: &[(f64, f64)]) -> (f64, f64) {
    let sw: f64 = values.iter().map(|(w, _)| w).sum();
    let mean = values.iter().map(|(w, x)| w * x).sum::<f64>() / sw;
    let var: f64 = values.iter().map(|(w, x)| (w * (x - mean)).powi(2)).sum();
    (mean, var.sqrt() / sw)
}

fn reweighting(trials: usize, rng: &mut ChaCha8Rng, opts: &VerifyOptions) -> Result<Tally> {
    let mut t = Tally::default();
    let z = labelbias_Z(0.5, 0.5)?;
    t.check((z - 3.0).abs() < 1e-12, || format!("Z(0.5, 0.5) = {z}"));
    for _ in 0..trials {
        let eta = 0.5 * rng.random::<f64>();
        let nu: f64 = rng.random();
        let p = 1.0 - rng.random::<f64>();
        if eta == 0.0 || p == 1.0 {
            continue;
        }
        let q = p * (1.0 - eta) + (1.0 - p) * eta;
        let z = labelbias_Z(q, nu)?;
        let (lo, hi) = labelbias_z_window(eta, nu);
        t.check(lo < z && z < hi, || format!("eta={eta} nu={nu} p={p}: {lo} < {z} < {hi} fails"));
    }

    // known under-representation weights make the weighted risk unbiased
    let n = opts.mc_samples;
    let m = TrueModel::new(1.0 / 3.0, 0.5, 0.2)?;
    let beta = 0.3;
    let b = BiasParams::under_representation(beta)?;
    let seed = crate::rng::derive_seed(opts.seed, 1);
    let data = reweight_underrep(&apply_bias(&sample_true(&m, n, seed), &b, seed), beta)?;
    for k in 0..50 {
        let th = (k as f64 + 0.5) / 50.0;
        let vals: Vec<(f64, f64)> = data
            .examples
            .iter()
            .map(|e| (e.weight, f64::from(u8::from((e.x >= th) != e.label))))
            .collect();
        let (risk, se) = weighted_mean_se(&vals);
        let truth = analytic_true_error(&DeviationParams::from_thresholds(&ThresholdPair { t_a: th, t_b: th }, &m), &m);
        t.check((risk - truth).abs() <= 3.0 * se, || {
            format!("threshold {th}: weighted risk {risk} vs true {truth} (se {se})")
        });
    }

    // combined-model point where reweighting cannot separate h* from
    // all-negative in group B
    let m = TrueModel::new(1.0 / 3.0, 0.25, 0.0)?;
    let b = BiasParams::new(1.0, 1.0 / 3.0, 0.5)?;
    let masses = region_masses(&m, &b);
    let rw = reweighted_masses(&masses, population_reweighting_factor(&masses));
    let b_err = |p1b: f64| {
        biased_error(
            &DeviationParams {
                p1b,
                ..DeviationParams::H_STAR
            },
            &rw,
        )
    };
    let (e_star, e_neg) = (b_err(0.0), b_err(m.p));
    t.check((e_star - e_neg).abs() < TIE_EPS, || format!("knife-edge: {e_star} vs {e_neg}"));

    let seed = crate::rng::derive_seed(opts.seed, 2);
    let biased = apply_bias(&sample_true(&m, n, seed), &b, seed);
    let z = estimated_labelbias_z(&biased)?;
    let data = reweight_labelbias(&biased, z)?;
    // per-example loss of h*_B minus loss of all-negative on B
    let diffs: Vec<f64> = data
        .examples
        .iter()
        .map(|e| {
            if e.group != Group::B {
                return 0.0;
            }
            let star = (e.x >= m.theta_b) != e.label;
            let neg = e.label;
            e.weight * (f64::from(u8::from(star)) - f64::from(u8::from(neg)))
        })
        .collect();
    let nf = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / nf;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
    let se = sd / nf.sqrt();
    t.check(mean.abs() <= 3.0 * se, || format!("knife-edge Monte Carlo: difference {mean} (se {se}, z {z})"));
    Ok(t)
}

fn strong(trials: usize, seed: u64) -> Result<Tally> {
    let mut t = Tally::default();
    let cases = [
        (BiasFamily::UnderRepresentation, 0.5, 1.0 / 3.0, true),
        (BiasFamily::Combined, 1.0 / 3.0, 0.25, true),
        (BiasFamily::Combined, 0.25, 1.0 / 3.0, true),
        (BiasFamily::UnderRepresentation, 0.25, 3.0 / 7.0, true),
        (BiasFamily::Combined, 0.5, 0.49, false),
    ];
    for (i, (family, r0, eta0, should_pass)) in cases.into_iter().enumerate() {
        let cert = strong_recovery_certificate(family, r0, eta0, trials, crate::rng::derive_seed(seed, i as u64))?;
        t.check(cert.passed == should_pass, || {
            format!(
                "{family} ({r0}, {eta0}): passed={} expected {should_pass}; infima ({}, {}); counterexample {:?}",
                cert.passed, cert.inf_cond_neg, cert.inf_cond_pos, cert.counterexample
            )
        });
        if !should_pass {
            let ok = cert.counterexample.is_some_and(|c| !c.report.recovers && c.model.r < r0 && c.model.eta < eta0);
            t.check(ok, || format!("{family} ({r0}, {eta0}): no valid counterexample"));
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(trials: usize) -> VerifyOptions {
        VerifyOptions {
            trials: Some(trials),
            mc_samples: 20_000,
            ..VerifyOptions::default()
        }
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn small_suites_pass() {
        for s in [Suite::Tightness, Suite::EoInvariance, Suite::Shrink, Suite::DpFailure, Suite::StrongRecovery] {
            let rep = run_suite(s, &quick(300)).unwrap();
            assert!(rep.passed(), "{rep}");
        }
    }

    #[test]
    fn injected_fault_is_caught() {
        let opts = VerifyOptions {
            inject_fault: true,
            ..quick(200)
        };
        let rep = run_suite(Suite::Tightness, &opts).unwrap();
        assert!(!rep.passed());
        assert!(rep.counterexample.unwrap().contains("cond_neg"));
    }
}
