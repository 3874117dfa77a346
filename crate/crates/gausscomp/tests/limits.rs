mod common;

use gausscomp::fixtures::fixture;
use gausscomp::limits::{
    adjusted_value, chain_bound_check, interpolated_max, lifted_bound_check, lifted_exp_functional,
    slepian_gordon_check, Direction,
};
use gausscomp::model::build_set;
use gausscomp::{SeedPlan, Sign};

/// With one unit vector the chain bound's left side is `s E chi_m` and its
/// right side is `ln E exp(c s chi_m) / c`.
#[test]
fn chain_bound_single_element_oracle() {
    let set = build_set::<f64>(&[vec![1.0], vec![0.0]]).unwrap();
    let m = 3;
    let plan = SeedPlan::new(1, 40_000).unwrap();
    for sign in [Sign::Plus, Sign::Minus] {
        for c in [0.3, 1.0] {
            let report = chain_bound_check(&set, m, sign, c, &plan).unwrap();
            let s = sign.value::<f64>();
            let lhs = s * common::chi_mean(m);
            let rhs = common::chi_exp_moment(m, c * s).ln() / c;
            assert!(
                (report.lhs.mean - lhs).abs() <= 3.0 * report.lhs.std_error,
                "{report}"
            );
            assert!(
                (report.rhs.mean - rhs).abs() <= 3.0 * report.rhs.std_error,
                "{report} vs {rhs}"
            );
            assert!(rhs >= lhs, "Jensen");
            assert!(report.pass);
            assert_eq!(report.direction, Direction::LhsLeqRhs);
        }
    }
}

#[test]
fn interpolated_max_single_element_is_chi_mean() {
    let set = build_set::<f64>(&[vec![0.0], vec![2.0], vec![0.0], vec![0.0]]).unwrap();
    let plan = SeedPlan::new(3, 30_000).unwrap();
    for t in [0.0, 0.6, 1.0] {
        let e = interpolated_max(&set, 4, Sign::Plus, t, &plan, true).unwrap();
        // |x| = 2 and n = 4, so the scale factors cancel.
        let oracle = common::chi_mean(4);
        assert!(
            (e.mean - oracle).abs() <= 3.0 * e.std_error,
            "t={t}: {} vs {oracle}",
            e.mean
        );
    }
}

#[test]
fn comparison_inequalities_hold_on_fixtures() {
    let plan = SeedPlan::new(1, 20_000).unwrap();
    for (name, general) in [("x_plus", false), ("x_plus", true), ("x_minus", true)] {
        let set = fixture(name).unwrap();
        for sign in [Sign::Plus, Sign::Minus] {
            let r = slepian_gordon_check(&set, 5, sign, &plan, general).unwrap();
            assert!(r.pass, "{name}: {r}");
            assert_eq!(
                r.name,
                if sign == Sign::Plus {
                    "slepian"
                } else {
                    "gordon"
                }
            );
            assert_eq!(r.provenance.seed, 1);
            assert_eq!(r.provenance.replications, 20_000);
            let r = lifted_bound_check(&set, 5, sign, 0.3, &plan).unwrap();
            assert!(r.pass, "{name}: {r}");
        }
    }
}

#[test]
fn lifted_value_reports_raw_and_log() {
    let set = fixture("x_plus").unwrap();
    let plan = SeedPlan::new(2, 5000).unwrap();
    let v = lifted_exp_functional(&set, 5, Sign::Plus, 0.3, 0.5, &plan).unwrap();
    assert!((v.log.mean - v.raw.mean.ln()).abs() < 1e-12);
    assert!((v.log.std_error - v.raw.std_error / v.raw.mean).abs() < 1e-12);
}

#[test]
fn adjusted_value_reference_point() {
    // The published lifted value 3.1279 at beta = 3, c3 = 0.1, n = 5 maps to 1.6329.
    let a = adjusted_value(3.1279, 3.0, 0.1, 5).unwrap();
    assert!((a - 1.6329).abs() < 5e-4, "{a}");
}
