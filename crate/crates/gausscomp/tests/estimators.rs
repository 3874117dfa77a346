mod common;

use gausscomp::estimators::{
    dpsi_computed, dpsi_standard, psi_direct, verify_identities, Evaluator, IdentityCase,
};
use gausscomp::fixtures::{fixture, fixture_in};
use gausscomp::model::{build_set, ReplicationDraw};
use gausscomp::sampling::replication_stream;
use gausscomp::{
    DerivativeRoute, Error, Identity, ModelParams, ModelParamsF32, SeedPlan, Sign, Variant,
};

/// A single unit vector: the functional reduces to `s E|g| / sqrt(n)` with
/// `g` standard normal in `m` dimensions, for every `t`.
#[test]
fn single_element_curve_is_the_chi_mean() {
    let set = build_set::<f64>(&[vec![0.6], vec![0.0], vec![0.8]]).unwrap();
    let m = 5;
    let plan = SeedPlan::new(9, 30_000).unwrap();
    let oracle = common::chi_mean(m) / 3f64.sqrt();
    assert!((common::chi_mean(5) - 2.1277).abs() < 1e-4);
    for sign in [Sign::Plus, Sign::Minus] {
        let params = ModelParams::spherical(&set, m, 3.0, sign).unwrap();
        for t in [0.0, 0.3, 0.7, 1.0] {
            let est = psi_direct(&set, &params, t, &plan).unwrap();
            let target = sign.value::<f64>() * oracle;
            assert!(
                (est.mean - target).abs() <= 3.0 * est.std_error,
                "t={t}: {} vs {target} (se {})",
                est.mean,
                est.std_error
            );
            // With one element there are no pairs, so the computed derivative is exactly zero.
            assert_eq!(dpsi_computed(&set, &params, t, &plan).unwrap().mean, 0.0);
        }
    }
}

/// With `c3 = 1` the lifted functional is `E Z`, which factorizes into a
/// chi moment and a lognormal moment for each element.
#[test]
fn lifted_unit_exponent_matches_quadrature() {
    // Column norms stay near one so the lognormal factor keeps a usable variance.
    let moderate = build_set::<f64>(&[
        vec![0.5, -0.3, 0.9],
        vec![0.2, 0.8, -0.4],
        vec![-0.6, 0.1, 0.2],
    ])
    .unwrap();
    let (m, beta) = (5, 1.0);
    let plan = SeedPlan::new(4, 40_000).unwrap();
    for (set, sign) in [
        (fixture("x_plus").unwrap(), Sign::Plus),
        (fixture("x_plus").unwrap(), Sign::Minus),
        (moderate.clone(), Sign::Plus),
        (moderate, Sign::Minus),
    ] {
        let params = ModelParams::lifted(&set, m, beta, sign, 1.0).unwrap();
        let oracle: f64 = params
            .betas
            .iter()
            .map(|&b| (b * b / 2.0).exp() * common::chi_exp_moment(m, b * sign.value::<f64>()))
            .sum();
        for t in [0.1, 0.5, 0.9] {
            let est = psi_direct(&set, &params, t, &plan).unwrap();
            assert!(
                (est.mean - oracle).abs() <= 3.0 * est.std_error,
                "s={sign} t={t}: {} vs {oracle} (se {})",
                est.mean,
                est.std_error
            );
        }
    }
}

#[test]
fn quadrature_oracle_reproduces_known_moments() {
    // E exp(a X) for X ~ chi_1 is 2 e^{a^2/2} Phi(a); at a = 0 it is 1.
    assert!((common::chi_exp_moment(1, 0.0) - 1.0).abs() < 1e-6);
    assert!((common::chi_exp_moment(5, 0.0) - 1.0).abs() < 1e-9);
    // First derivative at zero is the chi mean.
    let h = 1e-4;
    let deriv = (common::chi_exp_moment(5, h) - common::chi_exp_moment(5, -h)) / (2.0 * h);
    assert!((deriv - common::chi_mean(5)).abs() < 1e-6);
}

#[test]
fn relabelling_the_set_is_bit_identical() {
    let set = fixture("x_minus").unwrap();
    let perm = [3, 9, 0, 5, 1, 8, 2, 7, 4, 6];
    let shuffled = set.permuted(&perm).unwrap();
    for variant in [Variant::General, Variant::Lifted] {
        let a = ModelParams::new(&set, variant, 5, 3.0, Sign::Minus, 0.1).unwrap();
        let b = ModelParams::new(&shuffled, variant, 5, 3.0, Sign::Minus, 0.1).unwrap();
        let (ea, eb) = (
            Evaluator::new(&set, &a).unwrap(),
            Evaluator::new(&shuffled, &b).unwrap(),
        );
        let plan = SeedPlan::new(2, 50).unwrap();
        for index in 0..50 {
            let da =
                ReplicationDraw::generate(&set, 5, &mut replication_stream(&plan, index).unwrap());
            let db = ReplicationDraw::generate(
                &shuffled,
                5,
                &mut replication_stream(&plan, index).unwrap(),
            );
            for t in [0.2, 0.6] {
                let (sa, sb) = (ea.state(&da, t).unwrap(), eb.state(&db, t).unwrap());
                assert_eq!(ea.psi(&sa).to_bits(), eb.psi(&sb).to_bits());
                for route in [DerivativeRoute::Standard, DerivativeRoute::Computed] {
                    let (x, y) = (
                        ea.dpsi(route, &da, &sa).unwrap(),
                        eb.dpsi(route, &db, &sb).unwrap(),
                    );
                    assert_eq!(x.to_bits(), y.to_bits(), "{variant} {route} draw {index}");
                }
            }
        }
    }
}

#[test]
fn single_precision_agrees_with_double() {
    let set64 = fixture("x_plus").unwrap();
    let set32 = fixture_in::<f32>("x_plus").unwrap();
    let p64 = ModelParams::spherical(&set64, 5, 3.0, Sign::Plus).unwrap();
    let p32 = ModelParamsF32::spherical(&set32, 5, 3.0, Sign::Plus).unwrap();
    let plan = SeedPlan::new(8, 5000).unwrap();
    for t in [0.25, 0.75] {
        let (a, b) = (
            psi_direct(&set64, &p64, t, &plan).unwrap(),
            psi_direct(&set32, &p32, t, &plan).unwrap(),
        );
        assert!((a.mean - b.mean).abs() < 1e-4, "{} vs {}", a.mean, b.mean);
        let (a, b) = (
            dpsi_computed(&set64, &p64, t, &plan).unwrap(),
            dpsi_computed(&set32, &p32, t, &plan).unwrap(),
        );
        assert!((a.mean - b.mean).abs() < 1e-4, "{} vs {}", a.mean, b.mean);
    }
}

#[test]
fn computed_route_has_a_sign_on_every_draw() {
    let plus = fixture("x_plus").unwrap();
    let plan = SeedPlan::new(3, 2000).unwrap();
    let configs = [
        (Variant::Spherical, 3.0, 0.0, -1.0),
        (Variant::General, 3.0, 0.0, -1.0),
        (Variant::Lifted, 3.0, 0.1, -1.0),
        (Variant::Lifted, 1.0, -0.5, 1.0),
        (Variant::Lifted, 1.0, 2.0, 1.0),
    ];
    for (variant, beta, c3, direction) in configs {
        for sign in [Sign::Plus, Sign::Minus] {
            let params = ModelParams::new(&plus, variant, 5, beta, sign, c3).unwrap();
            let ev = Evaluator::new(&plus, &params).unwrap();
            for index in 0..plan.replications {
                let draw = ReplicationDraw::generate(
                    &plus,
                    5,
                    &mut replication_stream(&plan, index).unwrap(),
                );
                for t in [0.0, 0.5, 1.0] {
                    let d = ev.dpsi_computed(&ev.state(&draw, t).unwrap()).unwrap();
                    assert!(
                        d * direction >= 0.0,
                        "{variant} c3={c3} s={sign} t={t}: {d}"
                    );
                }
            }
        }
    }
}

#[test]
fn standard_route_refuses_endpoints() {
    let set = fixture("x_plus").unwrap();
    let params = ModelParams::spherical(&set, 5, 3.0, Sign::Plus).unwrap();
    let plan = SeedPlan::new(1, 100).unwrap();
    for t in [0.0, 0.005, 0.995, 1.0] {
        assert!(matches!(
            dpsi_standard(&set, &params, t, &plan),
            Err(Error::EndpointSingularity { .. })
        ));
    }
    assert!(dpsi_standard(&set, &params, 0.01, &plan).is_ok());
    assert!(matches!(
        psi_direct(&set, &params, 1.5, &plan),
        Err(Error::OutOfDomain(_))
    ));
}

#[test]
fn u4_identity_is_rejected_for_spherical() {
    let set = fixture("x_plus").unwrap();
    let params = ModelParams::spherical(&set, 5, 3.0, Sign::Plus).unwrap();
    let plan = SeedPlan::new(1, 100).unwrap();
    let case = IdentityCase {
        identity: Identity::U4Linear,
        t: 0.5,
        i: 0,
        j: 0,
    };
    assert!(matches!(
        verify_identities(&set, &params, &[case], &plan),
        Err(Error::VariantMismatch(_))
    ));
    assert!(!Identity::applicable(Variant::Spherical).contains(&Identity::U4Linear));
    assert_eq!(Identity::applicable(Variant::Lifted).len(), 6);
}

#[test]
fn identities_hold_on_a_general_set() {
    let set = fixture("x_minus").unwrap();
    let plan = SeedPlan::new(12, 30_000).unwrap();
    for variant in [Variant::General, Variant::Lifted] {
        let params = ModelParams::new(&set, variant, 5, 1.0, Sign::Minus, 0.3).unwrap();
        let cases = gausscomp::estimators::identity_battery(variant, set.len(), 5, &[0.4]);
        for check in verify_identities(&set, &params, &cases, &plan).unwrap() {
            assert!(check.passes(4.0), "{variant}: {:?}", check);
        }
    }
}
