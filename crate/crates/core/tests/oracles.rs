//! Library quantities against independent closed forms and Monte Carlo.

mod common;

use biased_erm_lab::bias::{apply_bias, estimate_beta, estimate_nu, region_masses, BiasParams};
use biased_erm_lab::distribution::{analytic_true_error, empirical_error, sample_true, Group, TrueModel};
use biased_erm_lab::fairness::{biased_fpr, biased_positive_rate, biased_tpr, empirical_rates};
use biased_erm_lab::solver::{biased_error, DeviationParams, ThresholdPair};
use common::{masses, random_point, rng, true_error, Point};

fn setting(pt: &Point) -> (TrueModel, BiasParams) {
    (
        TrueModel::new(pt.r, pt.p, pt.eta).unwrap(),
        BiasParams::new(pt.bp, pt.bn, pt.nu).unwrap(),
    )
}

#[test]
fn region_masses_match_closed_form() {
    let mut g = rng(11);
    for _ in 0..2_000 {
        let pt = random_point(&mut g);
        let (m, b) = setting(&pt);
        let lib = region_masses(&m, &b).cells();
        let oracle = masses(&pt);
        for (x, y) in lib.iter().zip(oracle) {
            assert!((x - y).abs() < 1e-15, "{pt:?}: {lib:?} vs {oracle:?}");
        }
    }
}

#[test]
fn biased_error_matches_closed_form() {
    let mut g = rng(12);
    use rand::Rng;
    for _ in 0..2_000 {
        let pt = random_point(&mut g);
        let (m, b) = setting(&pt);
        let q = 1.0 - pt.p;
        let d = DeviationParams {
            p1a: pt.p * g.random::<f64>(),
            p2a: q * g.random::<f64>(),
            p1b: pt.p * g.random::<f64>(),
            p2b: q * g.random::<f64>(),
        };
        let lib = biased_error(&d, &region_masses(&m, &b));
        let oracle = common::error(&masses(&pt), pt.p, [d.p1a, d.p2a, d.p1b, d.p2b]);
        assert!((lib - oracle).abs() < 1e-14);
    }
}

#[test]
fn empirical_masses_converge_to_region_masses() {
    let pt = Point { r: 0.4, p: 0.3, eta: 0.15, bp: 0.6, bn: 0.8, nu: 0.25 };
    let (m, b) = setting(&pt);
    let n = 400_000;
    let data = apply_bias(&sample_true(&m, n, 3), &b, 3);
    let mut counts = [0.0f64; 8];
    for e in &data.examples {
        let g = if e.group == Group::A { 0 } else { 4 };
        let region = if e.x >= m.theta(e.group) { 0 } else { 2 };
        let label = if e.label { 0 } else { 1 };
        counts[g + region + label] += 1.0;
    }
    for (i, (c, mass)) in counts.iter().zip(masses(&pt)).enumerate() {
        let est = c / n as f64;
        let se = (mass * (1.0 - mass) / n as f64).sqrt();
        assert!((est - mass).abs() < 5.0 * se, "cell {i}: {est} vs {mass}");
    }
}

#[test]
fn empirical_rates_converge_to_biased_rates() {
    let pt = Point { r: 0.35, p: 0.4, eta: 0.1, bp: 0.5, bn: 0.9, nu: 0.2 };
    let (m, b) = setting(&pt);
    let data = apply_bias(&sample_true(&m, 300_000, 4), &b, 4);
    for (ta, tb) in [(0.6, 0.6), (0.5, 0.75), (0.8, 0.3)] {
        let h = ThresholdPair { t_a: ta, t_b: tb };
        let d = DeviationParams::from_thresholds(&h, &m);
        let rates = empirical_rates(&h, &data).unwrap();
        for g in Group::BOTH {
            let c = rates[g.index()];
            assert!((c.tpr().unwrap() - biased_tpr(&d, g, &m, &b).unwrap()).abs() < 0.01);
            assert!((c.fpr().unwrap() - biased_fpr(&d, g, &m, &b).unwrap()).abs() < 0.01);
            assert!((c.positive_rate().unwrap() - biased_positive_rate(&d, g, &m, &b).unwrap()).abs() < 0.01);
        }
    }
}

#[test]
fn true_error_converges_on_clean_samples() {
    let (r, p, eta) = (0.3, 0.6, 0.2);
    let m = TrueModel::new(r, p, eta).unwrap();
    let n = 400_000;
    let data = sample_true(&m, n, 5);
    for (ta, tb) in [(0.4, 0.4), (0.1, 0.9), (1.0, 0.0), (0.55, 0.25)] {
        let h = ThresholdPair { t_a: ta, t_b: tb };
        let oracle = true_error(r, p, eta, ta, tb);
        let lib = analytic_true_error(&DeviationParams::from_thresholds(&h, &m), &m);
        assert!((lib - oracle).abs() < 1e-15);
        let emp = empirical_error(&data, ta, tb);
        let se = (oracle * (1.0 - oracle) / n as f64).sqrt();
        assert!((emp - oracle).abs() < 5.0 * se, "({ta},{tb}): {emp} vs {oracle}");
    }
}

#[test]
fn bias_estimators_are_consistent() {
    let m = TrueModel::new(1.0 / 3.0, 0.5, 0.2).unwrap();
    let ur = apply_bias(&sample_true(&m, 600_000, 6), &BiasParams::under_representation(0.4).unwrap(), 6);
    assert!((estimate_beta(&ur).unwrap() - 0.4).abs() < 0.02);
    let lb = apply_bias(&sample_true(&m, 600_000, 7), &BiasParams::labeling(0.3).unwrap(), 7);
    assert!((estimate_nu(&lb).unwrap() - 0.3).abs() < 0.02);
}
