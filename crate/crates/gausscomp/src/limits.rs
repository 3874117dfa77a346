//! Large-`beta` max-form functionals and the comparison inequalities they obey.
//!
//! As `beta` grows, `psi` tends to the expected maximum of the exponent over
//! the set. Evaluated at `t = 1` and `t = 0` this yields Slepian-type
//! (`s = 1`) and Gordon-type (`s = -1`) inequalities; the lifted functional
//! gives their exponential-moment versions and a chain bound.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{mixed_vectors, ReplicationDraw, Sign, VectorSet};
use crate::sampling::{
    aggregate, sample_draws, DrawFunctional, Estimate, SampleTable, SeedPlan, GENERATOR,
};
use crate::scalar::Real;

/// Orientation of an inequality between two expectations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    LhsLeqRhs,
    LhsGeqRhs,
}

/// Everything needed to regenerate a bound check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub seed: u64,
    pub replications: usize,
    pub generator: &'static str,
    pub sign: i8,
    pub m: usize,
    pub n: usize,
    pub l: usize,
    pub general: bool,
    pub c3s: Option<f64>,
}

/// Statistical check of one inequality.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub name: String,
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub direction: Direction,
    /// Signed slack in the direction of the inequality; negative means violated.
    pub margin: f64,
    /// Standard error of the margin treating both sides as independent.
    pub combined_se: f64,
    /// Standard error of the margin from paired per-replication differences.
    pub paired_se: f64,
    /// `margin >= -3 * combined_se`.
    pub pass: bool,
    pub provenance: Provenance,
}

impl BoundReport {
    fn new(
        name: &str,
        lhs: Estimate,
        rhs: Estimate,
        direction: Direction,
        paired_se: f64,
        provenance: Provenance,
    ) -> Self {
        let margin = match direction {
            Direction::LhsLeqRhs => rhs.mean - lhs.mean,
            Direction::LhsGeqRhs => lhs.mean - rhs.mean,
        };
        let combined_se = lhs.combined_se(&rhs);
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            direction,
            margin,
            combined_se,
            paired_se,
            pass: margin >= -3.0 * combined_se,
            provenance,
        }
    }
}

impl fmt::Display for BoundReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rel = match self.direction {
            Direction::LhsLeqRhs => "<=",
            Direction::LhsGeqRhs => ">=",
        };
        write!(
            f,
            "{}: {:.5} {rel} {:.5}  margin {:+.5} (se {:.5})  {}",
            self.name,
            self.lhs.mean,
            self.rhs.mean,
            self.margin,
            self.combined_se,
            if self.pass { "pass" } else { "FAIL" }
        )
    }
}

struct FnFunctional<F> {
    width: usize,
    f: F,
}

impl<T, F> DrawFunctional<T> for FnFunctional<F>
where
    T: Real,
    F: Fn(&ReplicationDraw<T>, &mut [f64]) -> Result<()> + Sync,
{
    fn width(&self) -> usize {
        self.width
    }

    fn evaluate(&self, draw: &ReplicationDraw<T>, out: &mut [f64]) -> Result<()> {
        (self.f)(draw, out)
    }
}

fn run<T, F>(
    set: &VectorSet<T>,
    m: usize,
    plan: &SeedPlan,
    width: usize,
    f: F,
) -> Result<SampleTable>
where
    T: Real,
    F: Fn(&ReplicationDraw<T>, &mut [f64]) -> Result<()> + Sync,
{
    if m == 0 {
        return Err(Error::InvalidInput("m must be at least 1".into()));
    }
    sample_draws(set, m, plan, &FnFunctional { width, f })
}

/// Per-draw values `|x_i| (s B_i + [sqrt(t) u4] + sqrt(1-t) u3_i)`, the
/// exponents of the interpolating model divided by `beta`.
fn exponent_terms<T: Real>(
    set: &VectorSet<T>,
    draw: &ReplicationDraw<T>,
    s: Sign,
    t: T,
    with_u4: bool,
) -> Result<Vec<T>> {
    let (_, b) = mixed_vectors(draw, t)?;
    let s = s.value::<T>();
    let shared = if with_u4 {
        t.sqrt() * draw.u4
    } else {
        T::zero()
    };
    let rest = (T::one() - t).sqrt();
    Ok((0..set.len())
        .map(|i| set.norms()[i] * (s * b[i] + shared + rest * draw.u3[i]))
        .collect())
}

fn max_of<T: Real>(xs: &[T]) -> T {
    xs.iter().fold(T::neg_infinity(), |a, &b| a.max(b))
}

fn min_of<T: Real>(xs: &[T]) -> T {
    xs.iter().fold(T::infinity(), |a, &b| a.min(b))
}

fn check_t(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::OutOfDomain(t))
    }
}

fn provenance<T: Real>(
    set: &VectorSet<T>,
    m: usize,
    s: Sign,
    plan: &SeedPlan,
    general: bool,
    c3s: Option<f64>,
) -> Provenance {
    Provenance {
        seed: plan.master_seed,
        replications: plan.replications,
        generator: GENERATOR,
        sign: s.as_i8(),
        m,
        n: set.dim(),
        l: set.len(),
        general,
        c3s,
    }
}

/// Estimate of `E max_i |x_i| (s B_i + [sqrt(t) u4] + sqrt(1-t) u3_i) / sqrt(n)`,
/// the large-`beta` limit of the functional at `t`.
///
/// With `general` unset the `u4` term is dropped, matching the spherical model.
pub fn interpolated_max<T: Real>(
    set: &VectorSet<T>,
    m: usize,
    s: Sign,
    t: f64,
    plan: &SeedPlan,
    general: bool,
) -> Result<Estimate> {
    check_t(t)?;
    let scale = T::of(set.dim() as f64).sqrt();
    let tt = T::of(t);
    let table = run(set, m, plan, 1, |draw, out| {
        out[0] = (max_of(&exponent_terms(set, draw, s, tt, general)?) / scale).as_f64();
        Ok(())
    })?;
    table.estimate(0)
}

/// Slepian (`s = 1`) or Gordon (`s = -1`) inequality between the Gaussian
/// model at `t = 1` and its decoupled surrogate at `t = 0`.
pub fn slepian_gordon_check<T: Real>(
    set: &VectorSet<T>,
    m: usize,
    s: Sign,
    plan: &SeedPlan,
    general: bool,
) -> Result<BoundReport> {
    let scale = T::of(set.dim() as f64).sqrt();
    let table = run(set, m, plan, 2, |draw, out| {
        let model = exponent_terms(set, draw, Sign::Plus, T::one(), false)?;
        let surrogate = exponent_terms(set, draw, Sign::Plus, T::zero(), false)?;
        let norms = set.norms();
        // model[i] = |G x_i|, surrogate[i] = |x_i||u2| + h.x_i
        let (lhs, rhs) = match s {
            Sign::Plus => {
                let shared = if general { draw.u4 } else { T::zero() };
                let lhs: Vec<T> = (0..set.len())
                    .map(|i| model[i] + norms[i] * shared)
                    .collect();
                (max_of(&lhs), max_of(&surrogate))
            }
            Sign::Minus => {
                let shared = if general { draw.u4 } else { T::zero() };
                let lhs: Vec<T> = (0..set.len())
                    .map(|i| model[i] - norms[i] * shared)
                    .collect();
                let u2_norm = draw.u2.iter().fold(T::zero(), |a, &x| a + x * x).sqrt();
                let rhs: Vec<T> = (0..set.len())
                    .map(|i| norms[i] * u2_norm - norms[i] * draw.u3[i])
                    .collect();
                (min_of(&lhs), min_of(&rhs))
            }
        };
        out[0] = (lhs / scale).as_f64();
        out[1] = (rhs / scale).as_f64();
        Ok(())
    })?;
    let (name, direction) = match s {
        Sign::Plus => ("slepian", Direction::LhsLeqRhs),
        Sign::Minus => ("gordon", Direction::LhsGeqRhs),
    };
    let paired = table.combination(&[(0, 1.0), (1, -1.0)])?;
    Ok(BoundReport::new(
        name,
        table.estimate(0)?,
        table.estimate(1)?,
        direction,
        paired.std_error,
        provenance(set, m, s, plan, general, None),
    ))
}

/// Value of an exponential moment together with its logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LiftedValue {
    /// Estimate of the moment itself.
    pub raw: Estimate,
    /// Logarithm of the estimated moment, with a delta-method standard error.
    pub log: Estimate,
}

/// Estimates `E exp(x_k)` from per-replication exponents by log-mean-exp.
fn exp_moment(exponents: &[f64], skipped: usize) -> Result<LiftedValue> {
    let shift = exponents.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let scaled: Vec<f64> = exponents.iter().map(|&x| (x - shift).exp()).collect();
    let e = aggregate(&scaled)?;
    let factor = shift.exp();
    let raw = Estimate {
        mean: e.mean * factor,
        std_error: e.std_error * factor,
        n: e.n,
        skipped,
    };
    let log = Estimate {
        mean: shift + e.mean.ln(),
        std_error: e.std_error / e.mean,
        n: e.n,
        skipped,
    };
    Ok(LiftedValue { raw, log })
}

fn lifted_exponents<T: Real>(
    set: &VectorSet<T>,
    draw: &ReplicationDraw<T>,
    s: Sign,
    c3s: T,
    t: T,
) -> Result<f64> {
    Ok((c3s * max_of(&exponent_terms(set, draw, s, t, true)?)).as_f64())
}

fn check_c3s(c3s: f64) -> Result<()> {
    if c3s > 0.0 && c3s.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "the lifting scale must be positive, got {c3s}"
        )))
    }
}

/// `E exp(c3s * max_i |x_i| (s B_i + sqrt(t) u4 + sqrt(1-t) u3_i))`, the
/// large-`beta` limit of the lifted functional with `c3 = c3s / beta`.
pub fn lifted_exp_functional<T: Real>(
    set: &VectorSet<T>,
    m: usize,
    s: Sign,
    c3s: f64,
    t: f64,
    plan: &SeedPlan,
) -> Result<LiftedValue> {
    check_c3s(c3s)?;
    check_t(t)?;
    let (c, tt) = (T::of(c3s), T::of(t));
    let table = run(set, m, plan, 1, |draw, out| {
        out[0] = lifted_exponents(set, draw, s, c, tt)?;
        Ok(())
    })?;
    exp_moment(&table.column(0), table.skipped())
}

/// Lifted Slepian (`s = 1`) or lifted Gordon (`s = -1`) inequality: the
/// moment at `t = 1` does not exceed the moment at `t = 0`. Both sides are
/// reported on the log scale.
pub fn lifted_bound_check<T: Real>(
    set: &VectorSet<T>,
    m: usize,
    s: Sign,
    c3s: f64,
    plan: &SeedPlan,
) -> Result<BoundReport> {
    check_c3s(c3s)?;
    let c = T::of(c3s);
    let table = run(set, m, plan, 2, |draw, out| {
        out[0] = lifted_exponents(set, draw, s, c, T::one())?;
        out[1] = lifted_exponents(set, draw, s, c, T::zero())?;
        Ok(())
    })?;
    let lhs = exp_moment(&table.column(0), table.skipped())?.log;
    let rhs = exp_moment(&table.column(1), table.skipped())?.log;
    let name = match s {
        Sign::Plus => "lifted-slepian",
        Sign::Minus => "lifted-gordon",
    };
    let paired_se = lhs.combined_se(&rhs);
    Ok(BoundReport::new(
        name,
        lhs,
        rhs,
        Direction::LhsLeqRhs,
        paired_se,
        provenance(set, m, s, plan, true, Some(c3s)),
    ))
}

/// Maps a lifted value back to the scale of the plain functional:
/// `(ln(psi_star) / (beta c3) - beta c3 / 2) / sqrt(n)`.
pub fn adjusted_value(psi_star: f64, beta: f64, c3: f64, n: usize) -> Result<f64> {
    if psi_star.is_nan() || psi_star <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "the lifted value must be positive, got {psi_star}"
        )));
    }
    let bc = beta * c3;
    if bc == 0.0 || !bc.is_finite() {
        return Err(Error::InvalidInput(
            "beta * c3 must be finite and nonzero".into(),
        ));
    }
    if n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    Ok((psi_star.ln() / bc - bc / 2.0) / (n as f64).sqrt())
}

/// Chain bound for unit sets: `E max_i s|G x_i|` is at most
/// `ln E exp(c3s max_i (s|u2| + h.x_i)) / c3s - c3s / 2`.
pub fn chain_bound_check<T: Real>(
    set: &VectorSet<T>,
    m: usize,
    s: Sign,
    c3s: f64,
    plan: &SeedPlan,
) -> Result<BoundReport> {
    if !set.unit_flag() {
        return Err(Error::NonUnitSet);
    }
    check_c3s(c3s)?;
    let sv = s.value::<T>();
    let c = T::of(c3s);
    let table = run(set, m, plan, 2, |draw, out| {
        let model = exponent_terms(set, draw, Sign::Plus, T::one(), false)?;
        let lhs: Vec<T> = model.iter().map(|&x| sv * x).collect();
        let u2_norm = draw.u2.iter().fold(T::zero(), |a, &x| a + x * x).sqrt();
        let rhs: Vec<T> = draw.u3.iter().map(|&h| sv * u2_norm + h).collect();
        out[0] = max_of(&lhs).as_f64();
        out[1] = (c * max_of(&rhs)).as_f64();
        Ok(())
    })?;
    let lhs = table.estimate(0)?;
    let moment = exp_moment(&table.column(1), table.skipped())?;
    let rhs = Estimate {
        mean: moment.log.mean / c3s - c3s / 2.0,
        std_error: moment.log.std_error / c3s,
        ..moment.log
    };
    let paired_se = lhs.combined_se(&rhs);
    Ok(BoundReport::new(
        "chain",
        lhs,
        rhs,
        Direction::LhsLeqRhs,
        paired_se,
        provenance(set, m, s, plan, false, Some(c3s)),
    ))
}
