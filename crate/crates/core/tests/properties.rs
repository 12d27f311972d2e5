//! Property-based invariants of the solvers and reweighting.

mod common;

use biased_erm_lab::bias::{region_masses, BiasParams};
use biased_erm_lab::distribution::TrueModel;
use biased_erm_lab::fairness::{gap_from_masses, ConstraintKind, Criterion};
use biased_erm_lab::recovery::{check_conditions, recovery_region, solver_verdict, AxisSpec, Axis, Verdict};
use biased_erm_lab::simulate::{run_experiment, ExperimentConfig, Intervention};
use biased_erm_lab::solver::{
    biased_error, exact_constrained_erm, labelbias_Z, labelbias_z_window, shrink, Candidate, DeviationParams,
};
use proptest::prelude::*;

fn model_and_bias() -> impl Strategy<Value = (TrueModel, BiasParams)> {
    (0.01f64..0.99, 0.01f64..=1.0, 0.0f64..0.49, 0.01f64..=1.0, 0.01f64..=1.0, 0.0f64..0.99).prop_map(
        |(r, p, eta, bp, bn, nu)| (TrueModel::new(r, p, eta).unwrap(), BiasParams::new(bp, bn, nu).unwrap()),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn exact_solver_matches_condition_signs((m, b) in model_and_bias()) {
        let rep = check_conditions(&m, &b);
        prop_assume!(rep.margin() > 1e-6);
        let chosen = exact_constrained_erm(&ConstraintKind::analytic(Criterion::EqualOpportunity), &m, &b)
            .unwrap()
            .chosen_candidate;
        prop_assert_eq!(rep.recovers, chosen == Candidate::HStar);
    }

    #[test]
    fn chosen_candidate_minimizes_biased_error((m, b) in model_and_bias()) {
        let masses = region_masses(&m, &b);
        let rep = exact_constrained_erm(&ConstraintKind::analytic(Criterion::EqualOpportunity), &m, &b).unwrap();
        for c in &rep.candidates {
            prop_assert!(rep.biased_error <= c.biased_error + 1e-12);
        }
        prop_assert!((rep.biased_error - biased_error(&rep.chosen, &masses)).abs() < 1e-15);
        prop_assert!(rep.true_error >= m.eta - 1e-15);
    }

    #[test]
    fn extremes_satisfy_equal_opportunity((m, b) in model_and_bias()) {
        let masses = region_masses(&m, &b);
        for d in [DeviationParams::H_STAR, DeviationParams::all_negative(&m), DeviationParams::all_positive(&m)] {
            let gap = gap_from_masses(Criterion::EqualOpportunity, &d, &masses).unwrap();
            prop_assert!(gap.abs() < 1e-12);
        }
    }

    #[test]
    fn shrink_is_idempotent((m, _b) in model_and_bias(), u in prop::array::uniform4(0.0f64..1.0)) {
        let q = 1.0 - m.p;
        let d = DeviationParams { p1a: m.p * u[0], p2a: q * u[1], p1b: m.p * u[2], p2b: q * u[3] };
        let once = shrink(&d, &m).params;
        let twice = shrink(&once, &m).params;
        prop_assert_eq!(once, twice);
        prop_assert!(once.validate(&m).is_ok());
    }

    #[test]
    fn reweighting_factor_stays_in_window(eta in 0.001f64..0.499, nu in 0.0f64..0.999, p in 0.001f64..0.999) {
        let q = p * (1.0 - eta) + (1.0 - p) * eta;
        let z = labelbias_Z(q, nu).unwrap();
        let (lo, hi) = labelbias_z_window(eta, nu);
        prop_assert!(lo < z && z < hi);
    }

    #[test]
    fn sweep_boundary_points_separate_verdicts(r in 0.05f64..0.6, p in 0.1f64..0.9) {
        let m = TrueModel::new(r, p, 0.1).unwrap();
        let x = AxisSpec { axis: Axis::Eta, lo: 0.0, hi: 0.49, steps: 9 };
        let y = AxisSpec { axis: Axis::BetaPos, lo: 0.01, hi: 1.0, steps: 3 };
        let sweep = recovery_region(&m, &BiasParams::NONE, x, y).unwrap();
        prop_assert_eq!(sweep.mismatches, 0);
        for bnd in &sweep.boundary {
            for &(eta, beta) in bnd.segments.iter().flatten() {
                let at = |bv: f64| {
                    let bias = BiasParams::under_representation(bv.clamp(1e-9, 1.0)).unwrap();
                    solver_verdict(&TrueModel::new(r, p, eta).unwrap(), &bias).unwrap()
                };
                if beta - 1e-4 > 0.0 && beta + 1e-4 <= 1.0 {
                    prop_assert_ne!(at(beta - 1e-4), at(beta + 1e-4));
                    prop_assert_eq!(at(beta + 1e-4), Verdict::Recovers);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn experiments_replay_bit_for_bit(seed in any::<u64>()) {
        let m = TrueModel::new(0.3, 0.5, 0.1).unwrap();
        let b = BiasParams::new(0.5, 0.9, 0.1).unwrap();
        let iv = Intervention::Constraint(ConstraintKind::empirical(Criterion::EqualOpportunity, 0.05).unwrap());
        let cfg = ExperimentConfig::new(m, b, iv, 2_000, 3, seed);
        let x = run_experiment(&cfg).unwrap();
        let y = run_experiment(&cfg).unwrap();
        prop_assert_eq!(x.to_json().unwrap(), y.to_json().unwrap());
        prop_assert!((0.0..=1.0).contains(&x.recovery_rate));
        for rep in &x.reps {
            if let Some(e) = rep.true_error {
                prop_assert!(e >= m.eta - 1e-15);
            }
        }
    }
}
