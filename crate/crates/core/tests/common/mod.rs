//! Independent closed-form oracles, written from the model definitions
//! without calling into the library's mass or rate code.
#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy)]
pub struct Point {
    pub r: f64,
    pub p: f64,
    pub eta: f64,
    pub bp: f64,
    pub bn: f64,
    pub nu: f64,
}

pub fn random_point(rng: &mut ChaCha20Rng) -> Point {
    loop {
        let pt = Point {
            r: rng.random(),
            p: 1.0 - rng.random::<f64>(),
            eta: 0.5 * rng.random::<f64>(),
            bp: 1.0 - rng.random::<f64>(),
            bn: 1.0 - rng.random::<f64>(),
            nu: rng.random(),
        };
        if pt.r > 0.0 {
            return pt;
        }
    }
}

/// Probability of each (group, Bayes sign, observed label) event under
/// retention-then-flip corruption of group B. Order: A(+,+), A(+,-),
/// A(-,+), A(-,-), then the same for B.
pub fn masses(pt: &Point) -> [f64; 8] {
    let Point { r, p, eta, bp, bn, nu } = *pt;
    let a = 1.0 - r;
    // group B: a true positive survives with bp and keeps its label with
    // 1 - nu; a true negative survives with bn and is never flipped
    let b_pos_true_pos = r * p * (1.0 - eta);
    let b_pos_true_neg = r * p * eta;
    let b_neg_true_pos = r * (1.0 - p) * eta;
    let b_neg_true_neg = r * (1.0 - p) * (1.0 - eta);
    [
        a * p * (1.0 - eta),
        a * p * eta,
        a * (1.0 - p) * eta,
        a * (1.0 - p) * (1.0 - eta),
        b_pos_true_pos * bp * (1.0 - nu),
        b_pos_true_pos * bp * nu + b_pos_true_neg * bn,
        b_neg_true_pos * bp * (1.0 - nu),
        b_neg_true_pos * bp * nu + b_neg_true_neg * bn,
    ]
}

/// Biased error of a hypothesis that in each group labels negative a
/// `d1` slice of the Bayes positive region and positive a `d2` slice of
/// the Bayes negative region.
pub fn error(m: &[f64; 8], p: f64, d: [f64; 4]) -> f64 {
    let q = 1.0 - p;
    let frac = |x: f64, w: f64| if w > 0.0 { x / w } else { 0.0 };
    let group = |c: &[f64], d1: f64, d2: f64| {
        c[0] * frac(d1, p) + c[1] * (1.0 - frac(d1, p)) + c[2] * (1.0 - frac(d2, q)) + c[3] * frac(d2, q)
    };
    group(&m[0..4], d[0], d[1]) + group(&m[4..8], d[2], d[3])
}

/// `(cond_neg, cond_pos)` as differences of biased errors of the extreme
/// pairs against the Bayes rule, divided by the regions' widths.
pub fn conditions(pt: &Point) -> (f64, f64) {
    let m = masses(pt);
    let p = pt.p;
    let q = 1.0 - p;
    let star = error(&m, p, [0.0; 4]);
    let neg = error(&m, p, [p, 0.0, p, 0.0]);
    let pos = error(&m, p, [0.0, q, 0.0, q]);
    ((neg - star) / p, if q > 0.0 { (pos - star) / q } else { f64::INFINITY })
}

/// Same conditions from the published linear forms, for cross-checking.
pub fn conditions_closed(pt: &Point) -> (f64, f64) {
    let Point { r, eta, bp, bn, nu, .. } = *pt;
    let base = (1.0 - r) * (1.0 - 2.0 * eta);
    (
        base + r * ((1.0 - eta) * bp * (1.0 - 2.0 * nu) - eta * bn),
        base + r * ((1.0 - eta) * bn - (1.0 - 2.0 * nu) * bp * eta),
    )
}

/// True error of thresholds `(ta, tb)` with canonical uniform features.
pub fn true_error(r: f64, p: f64, eta: f64, ta: f64, tb: f64) -> f64 {
    let theta = 1.0 - p;
    let g = |t: f64| eta + (t.clamp(0.0, 1.0) - theta).abs() * (1.0 - 2.0 * eta);
    (1.0 - r) * g(ta) + r * g(tb)
}

/// Prints a result line straight to stdout so it is visible even when the
/// test harness captures output.
pub fn report(label: &str, pass: bool, detail: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "\n[{label}] {} {detail}", if pass { "PASS" } else { "FAIL" });
}
