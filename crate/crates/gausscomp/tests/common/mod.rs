//! Helpers shared by the integration tests: random vector sets and
//! closed-form chi-distribution moments used as independent oracles.

#![allow(dead_code)]

use gausscomp::model::build_set;
use gausscomp::VectorSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

/// A random `n x l` set with `2 <= l <= 8` and `2 <= n <= 6`.
///
/// Entries are uniform on `[-1, 1]`; with `unit` set every column is rescaled
/// to norm one, otherwise column norms are spread over roughly `[0.3, 1.7]`.
pub fn fuzzed_set(seed: u64, unit: bool) -> VectorSet {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF0F0 ^ seed);
    let n = rng.gen_range(2..=6);
    let l = rng.gen_range(2..=8);
    let columns: Vec<Vec<f64>> = (0..l)
        .map(|_| {
            let column: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = column.iter().map(|x| x * x).sum::<f64>().sqrt();
            let target = if unit { 1.0 } else { rng.gen_range(0.3..1.7) };
            column.into_iter().map(|x| x * target / norm).collect()
        })
        .collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|r| columns.iter().map(|c| c[r]).collect())
        .collect();
    build_set(&rows).expect("random columns are nonzero")
}

/// Twenty fuzzed sets, the first ten with unit columns.
pub fn fuzzed_sets() -> Vec<VectorSet> {
    (0..20).map(|k| fuzzed_set(k, k < 10)).collect()
}

/// Mean of the chi distribution with `m` degrees of freedom.
pub fn chi_mean(m: usize) -> f64 {
    let m = m as f64;
    2f64.sqrt() * (ln_gamma((m + 1.0) / 2.0) - ln_gamma(m / 2.0)).exp()
}

/// `E exp(a X)` for `X` chi-distributed with `m` degrees of freedom, by
/// composite Simpson quadrature of the density on `[0, 40 + |a|]`.
pub fn chi_exp_moment(m: usize, a: f64) -> f64 {
    let mf = m as f64;
    let log_norm = (mf / 2.0 - 1.0) * 2f64.ln() + ln_gamma(mf / 2.0);
    let f = |x: f64| {
        if x <= 0.0 {
            return if m == 1 { (-log_norm).exp() } else { 0.0 };
        }
        ((mf - 1.0) * x.ln() - x * x / 2.0 + a * x - log_norm).exp()
    };
    let upper = 40.0 + a.abs();
    let steps = 40_000;
    let h = upper / steps as f64;
    let mut acc = f(0.0) + f(upper);
    for k in 1..steps {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(k as f64 * h);
    }
    acc * h / 3.0
}
