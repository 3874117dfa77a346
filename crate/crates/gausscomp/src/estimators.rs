//! Per-draw evaluators and Monte Carlo estimators of the interpolating
//! functional, its two derivative routes, and the Gaussian
//! integration-by-parts identities behind them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    interpolation_state, InterpolationState, ModelParams, ReplicationDraw, Variant, VectorSet,
};
use crate::sampling::{paired_run, sample_draws, DrawFunctional, Estimate, SeedPlan};
use crate::scalar::{canonical_sum, Real};

/// Interval of `t` on which the standard route is evaluated.
pub const STANDARD_WINDOW: (f64, f64) = (0.01, 0.99);

/// The two independent formulas for the derivative along the path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DerivativeRoute {
    /// Chain rule through the norms, then averaging of the raw Gaussian factors.
    Standard,
    /// Closed form after integrating by parts; a nonpositive sum per draw.
    Computed,
}

impl fmt::Display for DerivativeRoute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DerivativeRoute::Standard => "standard",
            DerivativeRoute::Computed => "computed",
        })
    }
}

impl FromStr for DerivativeRoute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "standard" => Ok(DerivativeRoute::Standard),
            "computed" => Ok(DerivativeRoute::Computed),
            other => Err(Error::InvalidInput(format!(
                "unknown derivative route `{other}`"
            ))),
        }
    }
}

/// Whether the standard route may be evaluated at `t`.
pub fn in_standard_window(t: f64) -> bool {
    t >= STANDARD_WINDOW.0 - 1e-12 && t <= STANDARD_WINDOW.1 + 1e-12
}

fn check_standard_window(t: f64) -> Result<()> {
    if in_standard_window(t) {
        Ok(())
    } else {
        Err(Error::EndpointSingularity {
            t,
            lo: STANDARD_WINDOW.0,
            hi: STANDARD_WINDOW.1,
        })
    }
}

/// Per-draw evaluator bound to one set and one parameter choice.
///
/// The pairwise gap matrix is computed once here and reused by every draw.
#[derive(Debug, Clone)]
pub struct Evaluator<'a, T> {
    set: &'a VectorSet<T>,
    params: &'a ModelParams<T>,
    gaps: Vec<T>,
    sqrt_n: T,
}

impl<'a, T: Real> Evaluator<'a, T> {
    pub fn new(set: &'a VectorSet<T>, params: &'a ModelParams<T>) -> Result<Self> {
        params.check_against(set)?;
        let gaps = set.overlap_gaps(params.variant != Variant::Spherical);
        let sqrt_n = T::of(set.dim() as f64).sqrt();
        Ok(Self {
            set,
            params,
            gaps,
            sqrt_n,
        })
    }

    pub fn set(&self) -> &VectorSet<T> {
        self.set
    }

    pub fn params(&self) -> &ModelParams<T> {
        self.params
    }

    pub fn state(&self, draw: &ReplicationDraw<T>, t: T) -> Result<InterpolationState<T>> {
        interpolation_state(draw, self.set, self.params, t)
    }

    /// Per-draw value of the functional itself.
    pub fn psi(&self, state: &InterpolationState<T>) -> T {
        match self.params.variant {
            Variant::Spherical | Variant::General => state.log_z / (self.params.beta * self.sqrt_n),
            Variant::Lifted => (self.params.c3 * state.log_z).exp(),
        }
    }

    /// Per-draw derivative by the standard route.
    pub fn dpsi_standard(
        &self,
        draw: &ReplicationDraw<T>,
        state: &InterpolationState<T>,
    ) -> Result<T> {
        check_standard_window(state.t.as_f64())?;
        state.require_positive_norms()?;
        let p = self.params;
        let t = state.t;
        let two = T::of(2.0);
        let (rt, rs) = (t.sqrt(), (T::one() - t).sqrt());
        let cross = rs / rt - rt / rs;
        let s = p.sign.value::<T>();
        let shared = if p.variant.has_shared_scalar() {
            draw.u4 / (two * rt)
        } else {
            T::zero()
        };

        let mut terms: Vec<T> = (0..self.set.len())
            .map(|i| {
                let a_row = draw.u1_row(i);
                let numer = a_row.iter().zip(&draw.u2).fold(T::zero(), |acc, (&a, &b)| {
                    acc + a * a - b * b + a * b * cross
                });
                let db_dt = numer / (two * state.b[i]);
                let g = s * db_dt + shared - draw.u3[i] / (two * rs);
                let weight = match p.variant {
                    Variant::Lifted => (state.log_a[i] + (p.c3 - T::one()) * state.log_z).exp(),
                    _ => state.w[i],
                };
                weight * p.betas[i] * g
            })
            .collect();
        let total = canonical_sum(&mut terms);
        Ok(match p.variant {
            Variant::Lifted => p.c3 * total,
            _ => total / (p.beta * self.sqrt_n),
        })
    }

    /// Per-draw derivative by the computed route.
    ///
    /// Every summand is a product of nonnegative factors, so the value has a
    /// definite sign for each draw, not only on average.
    pub fn dpsi_computed(&self, state: &InterpolationState<T>) -> Result<T> {
        let p = self.params;
        let l = self.set.len();
        let c3 = p.c3;
        let lifted = p.variant == Variant::Lifted;
        let mut terms = Vec::with_capacity(l * (l.saturating_sub(1)) / 2);
        for i in 0..l {
            for q in (i + 1)..l {
                let gap = self.gaps[i * l + q];
                if gap == T::zero() {
                    continue;
                }
                let rho = state.mixed_overlap(i, q)?;
                let pair = if lifted {
                    (state.log_a[i] + state.log_a[q] - (T::of(2.0) - c3) * state.log_z).exp()
                } else {
                    state.w[i] * state.w[q]
                };
                terms.push(pair * gap * (T::one() - rho));
            }
        }
        // Each unordered pair stands for both orderings of the double sum.
        let total = T::of(2.0) * canonical_sum(&mut terms);
        let half = T::of(0.5);
        Ok(if lifted {
            -(p.beta * p.beta * c3 * (T::one() - c3) * half) * total
        } else {
            -(p.beta * half / self.sqrt_n) * total
        })
    }

    /// Per-draw derivative by the requested route.
    pub fn dpsi(
        &self,
        route: DerivativeRoute,
        draw: &ReplicationDraw<T>,
        state: &InterpolationState<T>,
    ) -> Result<T> {
        match route {
            DerivativeRoute::Standard => self.dpsi_standard(draw, state),
            DerivativeRoute::Computed => self.dpsi_computed(state),
        }
    }
}

fn single_t(set_check: Result<()>, t: f64) -> Result<()> {
    set_check?;
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::OutOfDomain(t))
    }
}

/// Estimate of the functional at `t`.
pub fn psi_direct<T: Real>(
    set: &VectorSet<T>,
    params: &ModelParams<T>,
    t: f64,
    plan: &SeedPlan,
) -> Result<Estimate> {
    single_t(params.check_against(set), t)?;
    let ev = Evaluator::new(set, params)?;
    let run = paired_run(set, params, plan, &[t], |_, st| Ok(ev.psi(st)))?;
    Ok(run.estimates[0])
}

/// Estimate of the derivative at `t` by the standard route.
pub fn dpsi_standard<T: Real>(
    set: &VectorSet<T>,
    params: &ModelParams<T>,
    t: f64,
    plan: &SeedPlan,
) -> Result<Estimate> {
    single_t(params.check_against(set), t)?;
    check_standard_window(t)?;
    let ev = Evaluator::new(set, params)?;
    let run = paired_run(set, params, plan, &[t], |d, st| ev.dpsi_standard(d, st))?;
    Ok(run.estimates[0])
}

/// Estimate of the derivative at `t` by the computed route.
pub fn dpsi_computed<T: Real>(
    set: &VectorSet<T>,
    params: &ModelParams<T>,
    t: f64,
    plan: &SeedPlan,
) -> Result<Estimate> {
    single_t(params.check_against(set), t)?;
    let ev = Evaluator::new(set, params)?;
    let run = paired_run(set, params, plan, &[t], |_, st| ev.dpsi_computed(st))?;
    Ok(run.estimates[0])
}

/// Gaussian integration-by-parts identities used to derive the computed route.
///
/// Each identity equates the expectation of a Gaussian variable times a
/// smooth functional of the draw with the expectation of the functional's
/// derivative. Names refer to the Gaussian factor being integrated out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Identity {
    /// `u1[i][j] u2[j]` term, integrating over the projection `u1`.
    #[serde(rename = "cross-by-u1")]
    CrossByU1,
    /// `u1[i][j] u2[j]` term, integrating over the shared vector `u2`.
    #[serde(rename = "cross-by-u2")]
    CrossByU2,
    /// `u2[j]^2` term.
    #[serde(rename = "u2-square")]
    U2Square,
    /// `u1[i][j]^2` term.
    #[serde(rename = "u1-square")]
    U1Square,
    /// Linear `u3[i]` term.
    #[serde(rename = "u3-linear")]
    U3Linear,
    /// Linear `u4` term (only when the exponent carries `u4`).
    #[serde(rename = "u4-linear")]
    U4Linear,
}

impl Identity {
    pub const ALL: [Identity; 6] = [
        Identity::CrossByU1,
        Identity::CrossByU2,
        Identity::U2Square,
        Identity::U1Square,
        Identity::U3Linear,
        Identity::U4Linear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Identity::CrossByU1 => "cross-by-u1",
            Identity::CrossByU2 => "cross-by-u2",
            Identity::U2Square => "u2-square",
            Identity::U1Square => "u1-square",
            Identity::U3Linear => "u3-linear",
            Identity::U4Linear => "u4-linear",
        }
    }

    /// Identities that make sense for `variant`.
    pub fn applicable(variant: Variant) -> Vec<Identity> {
        Self::ALL
            .iter()
            .copied()
            .filter(|id| *id != Identity::U4Linear || variant.has_shared_scalar())
            .collect()
    }
}

impl fmt::Display for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Identity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::UnknownIdentity(s.to_string()))
    }
}

/// One identity instance: which identity, at which `t`, element `i`, coordinate `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityCase {
    pub identity: Identity,
    pub t: f64,
    pub i: usize,
    pub j: usize,
}

impl<T: Real> Evaluator<'_, T> {
    /// Per-draw left and right sides of an integration-by-parts identity.
    pub fn identity_sides(
        &self,
        identity: Identity,
        draw: &ReplicationDraw<T>,
        state: &InterpolationState<T>,
        i: usize,
        j: usize,
    ) -> Result<(T, T)> {
        state.require_positive_norms()?;
        let p = self.params;
        let l = self.set.len();
        let one = T::one();
        let c = p.lift_exponent();
        let t = state.t;
        let (rt, rs) = (t.sqrt(), (one - t).sqrt());
        let s = p.sign.value::<T>();
        let b = &state.b;
        let a = draw.u1_row(i)[j];
        let u2 = draw.u2[j];
        let vij = state.mixed(i)[j];

        // A_i / Z^(1-c) and A_i A_q / Z^(2-c), formed in log space.
        let single = (state.log_a[i] - (one - c) * state.log_z).exp();
        let pair =
            |q: usize| (state.log_a[i] + state.log_a[q] - (T::of(2.0) - c) * state.log_z).exp();
        let slope = p.betas[i] * s - one / b[i];
        let back = one - c;

        // Sum over q of weight(q) * beta_q * pair(q) * v_qj / B_q, the
        // contribution of differentiating Z.
        let norm_sum = |use_cos: bool| {
            let mut terms: Vec<T> = (0..l)
                .map(|q| {
                    let cos = if use_cos {
                        self.set.gram_unit(i, q)
                    } else {
                        one
                    };
                    cos * p.betas[q] * pair(q) * state.mixed(q)[j] / b[q]
                })
                .collect();
            canonical_sum(&mut terms)
        };
        let plain_sum = |use_cos: bool| {
            let mut terms: Vec<T> = (0..l)
                .map(|q| {
                    let cos = if use_cos {
                        self.set.gram_unit(i, q)
                    } else {
                        one
                    };
                    cos * p.betas[q] * pair(q)
                })
                .collect();
            canonical_sum(&mut terms)
        };

        Ok(match identity {
            Identity::CrossByU1 => {
                let lhs = single * a * u2 / b[i];
                let rhs = single / b[i] * slope * (vij / b[i]) * u2 * rt
                    - back * s * u2 * rt / b[i] * norm_sum(true);
                (lhs, rhs)
            }
            Identity::CrossByU2 => {
                let lhs = single * a * u2 / b[i];
                let rhs = single / b[i] * slope * (vij / b[i]) * a * rs
                    - back * s * a * rs / b[i] * norm_sum(false);
                (lhs, rhs)
            }
            Identity::U2Square => {
                let lhs = single * u2 * u2 / b[i];
                let rhs = single / b[i] * (one + slope * (vij / b[i]) * u2 * rs)
                    - back * s * u2 * rs / b[i] * norm_sum(false);
                (lhs, rhs)
            }
            Identity::U1Square => {
                let lhs = single * a * a / b[i];
                let rhs = single / b[i] * (one + slope * (vij / b[i]) * a * rt)
                    - back * s * a * rt / b[i] * norm_sum(true);
                (lhs, rhs)
            }
            Identity::U3Linear => {
                let lhs = single * draw.u3[i];
                let rhs = p.betas[i] * rs * single - back * rs * plain_sum(true);
                (lhs, rhs)
            }
            Identity::U4Linear => {
                if !p.variant.has_shared_scalar() {
                    return Err(Error::VariantMismatch(
                        "the u4-linear identity needs an exponent that contains u4".into(),
                    ));
                }
                let lhs = single * draw.u4;
                let rhs = p.betas[i] * rt * single - back * rt * plain_sum(false);
                (lhs, rhs)
            }
        })
    }
}

struct IdentityFunctional<'a, T> {
    ev: Evaluator<'a, T>,
    cases: Vec<IdentityCase>,
    ts: Vec<f64>,
}

impl<T: Real> DrawFunctional<T> for IdentityFunctional<'_, T> {
    fn width(&self) -> usize {
        2 * self.cases.len()
    }

    fn evaluate(&self, draw: &ReplicationDraw<T>, out: &mut [f64]) -> Result<()> {
        let states = self
            .ts
            .iter()
            .map(|&t| self.ev.state(draw, T::of(t)))
            .collect::<Result<Vec<_>>>()?;
        for (k, case) in self.cases.iter().enumerate() {
            let pos = self
                .ts
                .iter()
                .position(|&t| t == case.t)
                .expect("case t is on the grid");
            let (lhs, rhs) =
                self.ev
                    .identity_sides(case.identity, draw, &states[pos], case.i, case.j)?;
            out[2 * k] = lhs.as_f64();
            out[2 * k + 1] = rhs.as_f64();
        }
        Ok(())
    }
}

/// Outcome of one identity check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub identity: Identity,
    pub t: f64,
    pub i: usize,
    pub j: usize,
    pub lhs: Estimate,
    pub rhs: Estimate,
    /// `(lhs - rhs) / combined standard error`; zero when both sides are exact.
    pub z: f64,
}

impl IdentityCheck {
    pub fn passes(&self, z_max: f64) -> bool {
        self.z.abs() <= z_max
    }
}

fn validate_case<T: Real>(
    set: &VectorSet<T>,
    params: &ModelParams<T>,
    case: &IdentityCase,
) -> Result<()> {
    if !(case.t > 0.0 && case.t < 1.0) {
        return Err(Error::OutOfDomain(case.t));
    }
    if case.i >= set.len() {
        return Err(Error::InvalidInput(format!(
            "element index {} out of range",
            case.i
        )));
    }
    if case.j >= params.m {
        return Err(Error::InvalidInput(format!(
            "coordinate index {} out of range",
            case.j
        )));
    }
    if case.identity == Identity::U4Linear && !params.variant.has_shared_scalar() {
        return Err(Error::VariantMismatch(
            "the u4-linear identity does not apply to the spherical variant".into(),
        ));
    }
    Ok(())
}

/// Checks many identity instances on one shared set of draws.
pub fn verify_identities<T: Real>(
    set: &VectorSet<T>,
    params: &ModelParams<T>,
    cases: &[IdentityCase],
    plan: &SeedPlan,
) -> Result<Vec<IdentityCheck>> {
    params.check_against(set)?;
    for case in cases {
        validate_case(set, params, case)?;
    }
    let mut ts: Vec<f64> = cases.iter().map(|c| c.t).collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let functional = IdentityFunctional {
        ev: Evaluator::new(set, params)?,
        cases: cases.to_vec(),
        ts,
    };
    let samples = sample_draws(set, params.m, plan, &functional)?;
    cases
        .iter()
        .enumerate()
        .map(|(k, case)| {
            let lhs = samples.estimate(2 * k)?;
            let rhs = samples.estimate(2 * k + 1)?;
            let se = lhs.combined_se(&rhs);
            let diff = lhs.mean - rhs.mean;
            let z = if se > 0.0 {
                diff / se
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY.copysign(diff)
            };
            Ok(IdentityCheck {
                identity: case.identity,
                t: case.t,
                i: case.i,
                j: case.j,
                lhs,
                rhs,
                z,
            })
        })
        .collect()
}

/// Estimates both sides of one integration-by-parts identity on common draws.
pub fn verify_ibp<T: Real>(
    set: &VectorSet<T>,
    params: &ModelParams<T>,
    t: f64,
    identity: Identity,
    i: usize,
    j: usize,
    plan: &SeedPlan,
) -> Result<(Estimate, Estimate)> {
    let check = verify_identities(set, params, &[IdentityCase { identity, t, i, j }], plan)?;
    Ok((check[0].lhs, check[0].rhs))
}

/// The standard battery: every applicable identity at the given `t`, for the
/// first and last element and the first and last coordinate.
pub fn identity_battery(variant: Variant, l: usize, m: usize, ts: &[f64]) -> Vec<IdentityCase> {
    let mut elems = vec![0, l - 1];
    elems.dedup();
    let mut coords = vec![0, m - 1];
    coords.dedup();
    let mut cases = Vec::new();
    for &t in ts {
        for identity in Identity::applicable(variant) {
            for &i in &elems {
                for &j in &coords {
                    cases.push(IdentityCase { identity, t, i, j });
                }
            }
        }
    }
    cases
}
