//! Seeded per-replication random streams and deterministic aggregation.
//!
//! Replication `k` draws from a ChaCha8 generator keyed by the master seed
//! and switched to stream `k`, so every replication can be produced
//! independently on any thread. Results are collected in replication order
//! and reduced with a fixed pairwise tree, which makes every estimate
//! bit-identical regardless of the thread count.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    interpolation_state, InterpolationState, ModelParams, ReplicationDraw, VectorSet,
};
use crate::scalar::Real;

/// Name of the random generator, echoed into every output artifact.
pub const GENERATOR: &str = "chacha8-stream/box-muller";

/// Default number of replications.
pub const DEFAULT_REPLICATIONS: usize = 30_000;

/// Largest tolerated fraction of skipped replications.
pub const MAX_SKIP_FRACTION: f64 = 1e-4;

/// Master seed and replication count of a Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPlan {
    pub master_seed: u64,
    pub replications: usize,
}

impl SeedPlan {
    pub fn new(master_seed: u64, replications: usize) -> Result<Self> {
        if replications < 2 {
            return Err(Error::InvalidInput(format!(
                "at least 2 replications are needed for a standard error, got {replications}"
            )));
        }
        Ok(Self {
            master_seed,
            replications,
        })
    }
}

/// Source of standard normal variates for one replication.
///
/// Normals come from the Box-Muller transform applied to pairs of uniforms
/// in `(0, 1]`; both outputs of each pair are used.
#[derive(Debug, Clone)]
pub struct ReplicationStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl ReplicationStream {
    fn uniform_open0(&mut self) -> f64 {
        // 53 random bits mapped to (0, 1], so the logarithm below is finite.
        ((self.rng.next_u64() >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let r = (-2.0 * self.uniform_open0().ln()).sqrt();
        let theta = std::f64::consts::TAU * self.uniform_open0();
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// Random stream for replication `index` of `plan`.
pub fn replication_stream(plan: &SeedPlan, index: usize) -> Result<ReplicationStream> {
    if index >= plan.replications {
        return Err(Error::IndexOutOfRange {
            index,
            replications: plan.replications,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(plan.master_seed);
    rng.set_stream(index as u64);
    Ok(ReplicationStream { rng, spare: None })
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    /// Replications that contributed.
    pub n: usize,
    /// Replications skipped because of a probability-zero degeneracy.
    pub skipped: usize,
}

impl Estimate {
    /// Standard error of `self - other` treating the two as independent.
    pub fn combined_se(&self, other: &Estimate) -> f64 {
        self.std_error.hypot(other.std_error)
    }
}

fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        xs.iter().fold(0.0, |acc, &x| acc + x)
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Mean and standard error of per-replication values, reduced in index order.
pub fn aggregate(values: &[f64]) -> Result<Estimate> {
    if values.len() < 2 {
        return Err(Error::InvalidInput(
            "aggregation needs at least 2 values".into(),
        ));
    }
    if let Some(index) = values.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let n = values.len();
    let mean = pairwise_sum(values) / n as f64;
    let squares: Vec<f64> = values.iter().map(|&x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&squares) / (n - 1) as f64;
    Ok(Estimate {
        mean,
        std_error: (var / n as f64).sqrt(),
        n,
        skipped: 0,
    })
}

/// A per-draw functional producing a fixed number of outputs.
///
/// Returning [`Error::ZeroNorm`] marks the replication as skipped; any other
/// error aborts the run.
pub trait DrawFunctional<T: Real>: Sync {
    fn width(&self) -> usize;
    fn evaluate(&self, draw: &ReplicationDraw<T>, out: &mut [f64]) -> Result<()>;
}

/// Per-replication outputs of a run, kept so that estimates of arbitrary
/// linear combinations (paired differences, integrals) carry correct errors.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTable {
    width: usize,
    data: Vec<f64>,
    total: usize,
    skipped: usize,
}

impl SampleTable {
    pub fn width(&self) -> usize {
        self.width
    }

    /// Replications that contributed.
    pub fn rows(&self) -> usize {
        self.data.len() / self.width.max(1)
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        self.data.chunks_exact(self.width).map(|r| r[col]).collect()
    }

    /// Estimate of the expectation of output column `col`.
    pub fn estimate(&self, col: usize) -> Result<Estimate> {
        self.finish(aggregate(&self.column(col)))
    }

    /// Estimate of `sum_k weight_k * column_k`, evaluated replication by replication.
    pub fn combination(&self, terms: &[(usize, f64)]) -> Result<Estimate> {
        let values: Vec<f64> = self
            .data
            .chunks_exact(self.width)
            .map(|r| terms.iter().fold(0.0, |acc, &(c, w)| acc + w * r[c]))
            .collect();
        self.finish(aggregate(&values))
    }

    /// Applies `f` to each replication's row and aggregates the results.
    pub fn map_rows(&self, f: impl Fn(&[f64]) -> f64) -> Result<Estimate> {
        let values: Vec<f64> = self.data.chunks_exact(self.width).map(f).collect();
        self.finish(aggregate(&values))
    }

    fn finish(&self, est: Result<Estimate>) -> Result<Estimate> {
        est.map(|e| Estimate {
            skipped: self.skipped,
            ..e
        })
    }
}

/// Runs `functional` on every replication of `plan` in parallel.
///
/// Each replication's draw is generated once and handed to the functional,
/// which may evaluate it at several interpolation parameters.
pub fn sample_draws<T, F>(
    set: &VectorSet<T>,
    m: usize,
    plan: &SeedPlan,
    functional: &F,
) -> Result<SampleTable>
where
    T: Real,
    F: DrawFunctional<T> + ?Sized,
{
    let width = functional.width();
    let rows: Vec<Result<Option<Vec<f64>>>> = (0..plan.replications)
        .into_par_iter()
        .map(|index| {
            let mut stream = replication_stream(plan, index)?;
            let draw = ReplicationDraw::generate(set, m, &mut stream);
            let mut out = vec![0.0; width];
            match functional.evaluate(&draw, &mut out) {
                Ok(()) if out.iter().all(|x| x.is_finite()) => Ok(Some(out)),
                Ok(()) => Err(Error::NonFinite { index }),
                Err(Error::ZeroNorm) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();

    let mut data = Vec::with_capacity(plan.replications * width);
    let mut skipped = 0;
    for row in rows {
        match row? {
            Some(r) => data.extend(r),
            None => skipped += 1,
        }
    }
    if skipped as f64 > MAX_SKIP_FRACTION * plan.replications as f64 {
        return Err(Error::TooManySkipped {
            skipped,
            total: plan.replications,
        });
    }
    Ok(SampleTable {
        width,
        data,
        total: plan.replications,
        skipped,
    })
}

/// Result of evaluating a scalar functional on a grid of `t` with shared draws.
#[derive(Debug, Clone)]
pub struct PairedRun {
    pub t_grid: Vec<f64>,
    pub estimates: Vec<Estimate>,
    pub samples: SampleTable,
}

struct GridFunctional<'a, T, F> {
    set: &'a VectorSet<T>,
    params: &'a ModelParams<T>,
    t_grid: Vec<T>,
    f: F,
}

impl<T, F> DrawFunctional<T> for GridFunctional<'_, T, F>
where
    T: Real,
    F: Fn(&ReplicationDraw<T>, &InterpolationState<T>) -> Result<T> + Sync,
{
    fn width(&self) -> usize {
        self.t_grid.len()
    }

    fn evaluate(&self, draw: &ReplicationDraw<T>, out: &mut [f64]) -> Result<()> {
        for (slot, &t) in out.iter_mut().zip(&self.t_grid) {
            let state = interpolation_state(draw, self.set, self.params, t)?;
            *slot = (self.f)(draw, &state)?.as_f64();
        }
        Ok(())
    }
}

/// Evaluates a per-draw functional at every `t` of a sorted grid on common random numbers.
pub fn paired_run<T, F>(
    set: &VectorSet<T>,
    params: &ModelParams<T>,
    plan: &SeedPlan,
    t_grid: &[f64],
    functional: F,
) -> Result<PairedRun>
where
    T: Real,
    F: Fn(&ReplicationDraw<T>, &InterpolationState<T>) -> Result<T> + Sync,
{
    params.check_against(set)?;
    if t_grid.is_empty() {
        return Err(Error::InvalidInput("the t grid is empty".into()));
    }
    if let Some(&bad) = t_grid.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::OutOfDomain(bad));
    }
    if t_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidInput("the t grid must be sorted".into()));
    }
    let grid = GridFunctional {
        set,
        params,
        t_grid: t_grid.iter().map(|&t| T::of(t)).collect(),
        f: functional,
    };
    let samples = sample_draws(set, params.m, plan, &grid)?;
    let estimates = (0..t_grid.len())
        .map(|c| samples.estimate(c))
        .collect::<Result<Vec<_>>>()?;
    Ok(PairedRun {
        t_grid: t_grid.to_vec(),
        estimates,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_values_have_zero_error() {
        let e = aggregate(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!((e.mean, e.std_error, e.n), (1.0, 0.0, 4));
    }

    #[test]
    fn two_point_sample() {
        let e = aggregate(&[0.0, 2.0]).unwrap();
        assert_eq!(e.mean, 1.0);
        assert!((e.std_error - 1.0).abs() < 1e-15);
    }

    #[test]
    fn non_finite_value_names_its_index() {
        assert_eq!(
            aggregate(&[0.0, 1.0, f64::NAN]),
            Err(Error::NonFinite { index: 2 })
        );
    }

    #[test]
    fn streams_are_reproducible_and_seed_sensitive() {
        let plan = SeedPlan::new(42, 4).unwrap();
        let a: Vec<f64> = {
            let mut s = replication_stream(&plan, 1).unwrap();
            (0..16).map(|_| s.next_normal()).collect()
        };
        let b: Vec<f64> = {
            let mut s = replication_stream(&plan, 1).unwrap();
            (0..16).map(|_| s.next_normal()).collect()
        };
        assert_eq!(a, b);
        let other = SeedPlan::new(43, 4).unwrap();
        let mut s = replication_stream(&other, 1).unwrap();
        let c: Vec<f64> = (0..16).map(|_| s.next_normal()).collect();
        assert_ne!(a, c);
    }

    #[test]
    fn index_out_of_range_is_rejected() {
        let plan = SeedPlan::new(1, 3).unwrap();
        assert!(matches!(
            replication_stream(&plan, 3),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(SeedPlan::new(1, 1).is_err());
    }

    #[test]
    fn normal_sample_mean_is_near_zero() {
        let plan = SeedPlan::new(7, 2).unwrap();
        let mut s = replication_stream(&plan, 0).unwrap();
        let xs: Vec<f64> = (0..10_000).map(|_| s.next_normal()).collect();
        let e = aggregate(&xs).unwrap();
        assert!(e.mean.abs() < 4.0 / 100.0, "mean {}", e.mean);
        assert!((e.std_error * 100.0 - 1.0).abs() < 0.05);
    }
}
