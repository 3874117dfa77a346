use gausscomp::estimators::psi_direct;
use gausscomp::fixtures::fixture;
use gausscomp::sampling::{aggregate, replication_stream, DEFAULT_REPLICATIONS, GENERATOR};
use gausscomp::{Error, ModelParams, SeedPlan, Sign};
use proptest::prelude::*;

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`.
fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

fn normals(seed: u64, index: usize, count: usize) -> Vec<f64> {
    let plan = SeedPlan::new(seed, index + 2).unwrap();
    let mut s = replication_stream(&plan, index).unwrap();
    (0..count).map(|_| s.next_normal()).collect()
}

/// Critical value of the two-sample KS test at level 0.001.
const KS_C_001: f64 = 1.949;

#[test]
fn separate_streams_look_like_the_same_normal_law() {
    let count = 20_000;
    let a = normals(11, 0, count);
    let b = normals(11, 7, count);
    let d = ks_statistic(a.clone(), b.clone());
    let crit = KS_C_001 * ((2 * count) as f64 / (count * count) as f64).sqrt();
    assert!(d < crit, "KS statistic {d} exceeds {crit}");
    // Paired draws from different streams are uncorrelated.
    let corr = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / count as f64;
    assert!(
        corr.abs() < 4.0 / (count as f64).sqrt(),
        "correlation {corr}"
    );
    // Sample moments of a standard normal.
    let mean = a.iter().sum::<f64>() / count as f64;
    let var = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
    assert!(mean.abs() < 4.0 / (count as f64).sqrt());
    assert!((var - 1.0).abs() < 0.05);
}

#[test]
fn streams_are_reproducible_and_distinct() {
    assert_eq!(normals(5, 3, 64), normals(5, 3, 64));
    assert_ne!(normals(5, 3, 64), normals(5, 4, 64));
    assert_ne!(normals(5, 3, 64), normals(6, 3, 64));
}

#[test]
fn stream_index_is_bounded_by_the_plan() {
    let plan = SeedPlan::new(1, 10).unwrap();
    assert!(matches!(
        replication_stream(&plan, 10),
        Err(Error::IndexOutOfRange {
            index: 10,
            replications: 10
        })
    ));
    assert!(SeedPlan::new(1, 1).is_err());
}

#[test]
fn estimates_repeat_exactly() {
    let set = fixture("x_plus").unwrap();
    let params = ModelParams::spherical(&set, 5, 3.0, Sign::Plus).unwrap();
    let plan = SeedPlan::new(42, 2000).unwrap();
    let a = psi_direct(&set, &params, 0.4, &plan).unwrap();
    let b = psi_direct(&set, &params, 0.4, &plan).unwrap();
    assert_eq!(a.mean.to_bits(), b.mean.to_bits());
    assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    assert_eq!(a.n, 2000);
}

#[test]
fn metadata_constants() {
    assert_eq!(GENERATOR, "chacha8-stream/box-muller");
    assert_eq!(DEFAULT_REPLICATIONS, 30_000);
}

proptest! {
    #[test]
    fn aggregate_matches_textbook_formulas(values in prop::collection::vec(-1e3f64..1e3, 2..200)) {
        let e = aggregate(&values).unwrap();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        prop_assert!((e.mean - mean).abs() <= 1e-9 * (1.0 + mean.abs()));
        prop_assert!((e.std_error - (var / n).sqrt()).abs() <= 1e-9 * (1.0 + (var / n).sqrt()));
        prop_assert_eq!(e.n, values.len());
    }
}
