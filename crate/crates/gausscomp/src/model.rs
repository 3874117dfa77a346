//! Domain types and the per-draw interpolation kernel.
//!
//! A replication draws a Gaussian matrix `G` (m x n), vectors `u2` (m) and
//! `h` (n), and a scalar `u4`. Only the projections of `G` and `h` onto the
//! normalized set directions are kept. At interpolation parameter `t` each set
//! element `i` gets the mixed vector `v_i = sqrt(t) u1_i + sqrt(1-t) u2`, its
//! norm `B_i`, and the exponent `log A_i` that enters the partition function.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::ReplicationStream;
use crate::scalar::{canonical_sum, dot, log_sum_exp, Real};

/// Tolerance used to decide whether every element of a set has unit norm,
/// in double precision. Narrower types use a multiple of their epsilon instead.
pub const UNIT_NORM_TOL: f64 = 1e-12;

/// Which interpolating functional is being studied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Unit-norm set, `psi = E log Z / (beta sqrt n)`.
    Spherical,
    /// Arbitrary norms carried by per-element inverse temperatures.
    General,
    /// `psi_* = E Z^c3`, the lifted functional.
    Lifted,
}

impl Variant {
    /// Whether the exponent carries the shared `sqrt(t) u4` term.
    pub fn has_shared_scalar(self) -> bool {
        !matches!(self, Variant::Spherical)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Spherical => "spherical",
            Variant::General => "general",
            Variant::Lifted => "lifted",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spherical" => Ok(Variant::Spherical),
            "general" => Ok(Variant::General),
            "lifted" => Ok(Variant::Lifted),
            other => Err(Error::InvalidInput(format!("unknown variant `{other}`"))),
        }
    }
}

/// Sign in front of the norm term: `+1` gives max-type, `-1` min-type comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "1")]
    Plus,
    #[serde(rename = "-1")]
    Minus,
}

impl Sign {
    pub fn value<T: Real>(self) -> T {
        match self {
            Sign::Plus => T::one(),
            Sign::Minus => -T::one(),
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_i8())
    }
}

impl FromStr for Sign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" | "+1" | "+" | "plus" => Ok(Sign::Plus),
            "-1" | "-" | "minus" => Ok(Sign::Minus),
            other => Err(Error::InvalidInput(format!(
                "sign must be 1 or -1, got `{other}`"
            ))),
        }
    }
}

/// A finite collection of nonzero vectors in `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSet<T> {
    n: usize,
    vectors: Vec<Vec<T>>,
    norms: Vec<T>,
    units: Vec<Vec<T>>,
    gram_unit: Vec<T>,
    inner: Vec<T>,
    unit_flag: bool,
}

impl<T: Real> VectorSet<T> {
    /// Builds a set from its elements given as columns.
    pub fn from_columns(columns: Vec<Vec<T>>) -> Result<Self> {
        let l = columns.len();
        if l == 0 {
            return Err(Error::InvalidInput(
                "a vector set needs at least one element".into(),
            ));
        }
        let n = columns[0].len();
        if n == 0 {
            return Err(Error::InvalidInput(
                "vectors must have dimension at least 1".into(),
            ));
        }
        for (c, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(Error::InvalidInput(format!(
                    "column {c} has length {} but expected {n}",
                    col.len()
                )));
            }
            if col.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "column {c} has a non-finite entry"
                )));
            }
        }

        let norms: Vec<T> = columns.iter().map(|c| dot(c, c).sqrt()).collect();
        if let Some(column) = norms.iter().position(|&r| r <= T::zero()) {
            return Err(Error::DegenerateDirection { column });
        }
        let units: Vec<Vec<T>> = columns
            .iter()
            .zip(&norms)
            .map(|(c, &r)| c.iter().map(|&x| x / r).collect())
            .collect();

        let mut gram_unit = vec![T::zero(); l * l];
        let mut inner = vec![T::zero(); l * l];
        for i in 0..l {
            for p in i..l {
                let g = if i == p {
                    T::one()
                } else {
                    dot(&units[i], &units[p])
                };
                let d = dot(&columns[i], &columns[p]);
                gram_unit[i * l + p] = g;
                gram_unit[p * l + i] = g;
                inner[i * l + p] = d;
                inner[p * l + i] = d;
            }
        }

        let tol = T::of(UNIT_NORM_TOL).max(T::of(64.0) * T::epsilon());
        let unit_flag = norms.iter().all(|&r| (r - T::one()).abs() <= tol);

        Ok(Self {
            n,
            vectors: columns,
            norms,
            units,
            gram_unit,
            inner,
            unit_flag,
        })
    }

    /// Dimension of each vector.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of elements.
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[Vec<T>] {
        &self.vectors
    }

    pub fn norms(&self) -> &[T] {
        &self.norms
    }

    /// Normalized directions `x / |x|`.
    pub fn units(&self) -> &[Vec<T>] {
        &self.units
    }

    /// Cosine between elements `i` and `p`.
    pub fn gram_unit(&self, i: usize, p: usize) -> T {
        self.gram_unit[i * self.len() + p]
    }

    pub fn unit_flag(&self) -> bool {
        self.unit_flag
    }

    /// Pairwise gap matrix (row-major, l x l) weighting the computed-route sum.
    ///
    /// For unit sets this is `1 - cos`, otherwise `|x_i||x_p| - x_i.x_p`.
    /// Both are nonnegative by Cauchy-Schwarz; rounding residue is clamped to
    /// zero and the diagonal is zero exactly.
    pub fn overlap_gaps(&self, use_norms: bool) -> Vec<T> {
        let l = self.len();
        let mut out = vec![T::zero(); l * l];
        for i in 0..l {
            for p in 0..l {
                if i == p {
                    continue;
                }
                let raw = if use_norms {
                    self.norms[i] * self.norms[p] - self.inner[i * l + p]
                } else {
                    T::one() - self.gram_unit[i * l + p]
                };
                out[i * l + p] = raw.max(T::zero());
            }
        }
        out
    }

    /// The same directions rescaled to unit norm.
    pub fn normalized(&self) -> Self {
        Self::from_columns(self.units.clone()).expect("unit directions are valid")
    }

    /// Reorders the elements: element `k` of the result is element `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.len()];
        if perm.len() != self.len()
            || perm
                .iter()
                .any(|&k| k >= self.len() || std::mem::replace(&mut seen[k], true))
        {
            return Err(Error::InvalidInput(
                "not a permutation of the set elements".into(),
            ));
        }
        Self::from_columns(perm.iter().map(|&k| self.vectors[k].clone()).collect())
    }

    /// Converts to another scalar type.
    pub fn cast<U: Real>(&self) -> VectorSet<U> {
        let cols = self
            .vectors
            .iter()
            .map(|c| c.iter().map(|&x| U::of(x.as_f64())).collect())
            .collect();
        VectorSet::from_columns(cols).expect("cast of a valid set stays valid")
    }

    /// Renders the set in the plain text matrix format (n rows, l columns).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in 0..self.n {
            let row: Vec<String> = self
                .vectors
                .iter()
                .map(|c| format!("{}", c[r].as_f64()))
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    /// Parses the plain text matrix format.
    pub fn from_text(text: &str) -> Result<Self> {
        let rows = parse_matrix(text)?;
        build_set(&rows)
    }
}

/// Builds a vector set from an n x l matrix given row by row; columns are the vectors.
pub fn build_set<T: Real>(rows: &[Vec<f64>]) -> Result<VectorSet<T>> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("matrix has no rows".into()));
    }
    let l = rows[0].len();
    if let Some(bad) = rows.iter().position(|r| r.len() != l) {
        return Err(Error::InvalidInput(format!(
            "row {bad} has a different length than row 0"
        )));
    }
    let columns = (0..l)
        .map(|c| rows.iter().map(|r| T::of(r[c])).collect())
        .collect();
    VectorSet::from_columns(columns)
}

/// Parses whitespace-separated rows, skipping blank lines and `#` comments.
pub fn parse_matrix(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let row = trimmed
            .split_whitespace()
            .map(|tok| {
                let x: f64 = tok.parse().map_err(|_| Error::Parse {
                    line: k + 1,
                    message: format!("`{tok}` is not a number"),
                })?;
                if x.is_finite() {
                    Ok(x)
                } else {
                    Err(Error::Parse {
                        line: k + 1,
                        message: format!("`{tok}` is not finite"),
                    })
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first().map(|r: &Vec<f64>| r.len()) {
            if row.len() != first {
                return Err(Error::Parse {
                    line: k + 1,
                    message: format!("expected {first} entries, found {}", row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 0,
            message: "no matrix rows found".into(),
        });
    }
    Ok(rows)
}

/// Model configuration paired with a specific vector set.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub variant: Variant,
    /// Number of rows of `G`.
    pub m: usize,
    pub beta: T,
    pub sign: Sign,
    /// Lifting exponent; ignored unless the variant is lifted.
    pub c3: T,
    /// Per-element inverse temperatures `beta |x_i|` (all equal to `beta` when spherical).
    pub betas: Vec<T>,
}

impl<T: Real> ModelParams<T> {
    pub fn new(
        set: &VectorSet<T>,
        variant: Variant,
        m: usize,
        beta: T,
        sign: Sign,
        c3: T,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidInput("m must be at least 1".into()));
        }
        if !(beta > T::zero() && beta.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "beta must be positive and finite, got {beta}"
            )));
        }
        if variant == Variant::Spherical && !set.unit_flag() {
            return Err(Error::VariantMismatch(
                "the spherical variant needs every element to have unit norm".into(),
            ));
        }
        if variant == Variant::Lifted && !(c3.is_finite() && c3 != T::zero()) {
            return Err(Error::InvalidInput(format!(
                "c3 must be finite and nonzero, got {c3}"
            )));
        }
        let betas = match variant {
            Variant::Spherical => vec![beta; set.len()],
            Variant::General | Variant::Lifted => set.norms().iter().map(|&r| beta * r).collect(),
        };
        Ok(Self {
            variant,
            m,
            beta,
            sign,
            c3,
            betas,
        })
    }

    pub fn spherical(set: &VectorSet<T>, m: usize, beta: T, sign: Sign) -> Result<Self> {
        Self::new(set, Variant::Spherical, m, beta, sign, T::zero())
    }

    pub fn general(set: &VectorSet<T>, m: usize, beta: T, sign: Sign) -> Result<Self> {
        Self::new(set, Variant::General, m, beta, sign, T::zero())
    }

    pub fn lifted(set: &VectorSet<T>, m: usize, beta: T, sign: Sign, c3: T) -> Result<Self> {
        Self::new(set, Variant::Lifted, m, beta, sign, c3)
    }

    /// Checks that the parameters were built for a set of this shape.
    pub fn check_against(&self, set: &VectorSet<T>) -> Result<()> {
        if self.betas.len() != set.len() {
            return Err(Error::VariantMismatch(format!(
                "parameters describe {} elements but the set has {}",
                self.betas.len(),
                set.len()
            )));
        }
        if self.variant == Variant::Spherical && !set.unit_flag() {
            return Err(Error::VariantMismatch(
                "the spherical variant needs every element to have unit norm".into(),
            ));
        }
        Ok(())
    }

    /// Exponent used by the lifted functional, zero otherwise.
    pub fn lift_exponent(&self) -> T {
        match self.variant {
            Variant::Lifted => self.c3,
            _ => T::zero(),
        }
    }
}

/// The Gaussian randomness of one replication, stored in projected form.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationDraw<T> {
    m: usize,
    /// Row `i` holds `G x_i / |x_i|` (l x m, row-major).
    pub u1: Vec<T>,
    pub u2: Vec<T>,
    /// `u3[i] = h . x_i / |x_i|`.
    pub u3: Vec<T>,
    pub u4: T,
}

impl<T: Real> ReplicationDraw<T> {
    /// Draws one replication: `G` row-major, then `u2`, then `h`, then `u4`.
    pub fn generate(set: &VectorSet<T>, m: usize, stream: &mut ReplicationStream) -> Self {
        let n = set.dim();
        let g: Vec<f64> = (0..m * n).map(|_| stream.next_normal()).collect();
        let u2: Vec<f64> = (0..m).map(|_| stream.next_normal()).collect();
        let h: Vec<f64> = (0..n).map(|_| stream.next_normal()).collect();
        let u4 = stream.next_normal();
        Self::from_raw(set, m, &g, &u2, &h, u4)
    }

    /// Projects raw Gaussian inputs onto the set directions.
    pub fn from_raw(
        set: &VectorSet<T>,
        m: usize,
        g: &[f64],
        u2: &[f64],
        h: &[f64],
        u4: f64,
    ) -> Self {
        let n = set.dim();
        assert_eq!(g.len(), m * n, "G must be m x n");
        assert_eq!(u2.len(), m);
        assert_eq!(h.len(), n);
        let g: Vec<T> = g.iter().map(|&x| T::of(x)).collect();
        let h: Vec<T> = h.iter().map(|&x| T::of(x)).collect();
        let l = set.len();
        let mut u1 = Vec::with_capacity(l * m);
        let mut u3 = Vec::with_capacity(l);
        for dir in set.units() {
            for row in g.chunks_exact(n) {
                u1.push(dot(row, dir));
            }
            u3.push(dot(&h, dir));
        }
        Self {
            m,
            u1,
            u2: u2.iter().map(|&x| T::of(x)).collect(),
            u3,
            u4: T::of(u4),
        }
    }

    /// Number of rows of `G`.
    pub fn rows(&self) -> usize {
        self.m
    }

    /// Number of set elements the draw was projected on.
    pub fn elements(&self) -> usize {
        self.u3.len()
    }

    /// Projection `G x_i / |x_i|`.
    pub fn u1_row(&self, i: usize) -> &[T] {
        &self.u1[i * self.m..(i + 1) * self.m]
    }
}

/// Mixed vectors `v_i = sqrt(t) u1_i + sqrt(1-t) u2` (l x m, row-major) and their norms.
pub fn mixed_vectors<T: Real>(draw: &ReplicationDraw<T>, t: T) -> Result<(Vec<T>, Vec<T>)> {
    check_t(t)?;
    let (a, b) = (t.sqrt(), (T::one() - t).sqrt());
    let m = draw.rows();
    let mut v = Vec::with_capacity(draw.u1.len());
    let mut norms = Vec::with_capacity(draw.elements());
    for i in 0..draw.elements() {
        let row = draw.u1_row(i);
        let start = v.len();
        v.extend(row.iter().zip(&draw.u2).map(|(&x, &y)| a * x + b * y));
        let vi = &v[start..start + m];
        norms.push(dot(vi, vi).sqrt());
    }
    Ok((v, norms))
}

fn check_t<T: Real>(t: T) -> Result<()> {
    if t >= T::zero() && t <= T::one() {
        Ok(())
    } else {
        Err(Error::OutOfDomain(t.as_f64()))
    }
}

/// Everything a per-draw estimator needs at one value of `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationState<T> {
    pub t: T,
    /// Norms of the mixed vectors.
    pub b: Vec<T>,
    pub log_a: Vec<T>,
    pub log_z: T,
    /// Softmax weights `A_i / Z`.
    pub w: Vec<T>,
    v: Vec<T>,
    m: usize,
}

impl<T: Real> InterpolationState<T> {
    /// Mixed vector `v_i`.
    pub fn mixed(&self, i: usize) -> &[T] {
        &self.v[i * self.m..(i + 1) * self.m]
    }

    /// Cosine between the mixed vectors of elements `i` and `p`, clamped to `[-1, 1]`.
    pub fn mixed_overlap(&self, i: usize, p: usize) -> Result<T> {
        let denom = self.b[i] * self.b[p];
        if denom <= T::zero() {
            return Err(Error::ZeroNorm);
        }
        if i == p {
            return Ok(T::one());
        }
        let r = dot(self.mixed(i), self.mixed(p)) / denom;
        Ok(r.max(-T::one()).min(T::one()))
    }

    /// Fails with [`Error::ZeroNorm`] if any mixed vector vanishes.
    pub fn require_positive_norms(&self) -> Result<()> {
        if self.b.iter().any(|&x| x <= T::zero()) {
            Err(Error::ZeroNorm)
        } else {
            Ok(())
        }
    }
}

/// Evaluates the interpolation kernel for one draw at parameter `t`.
pub fn interpolation_state<T: Real>(
    draw: &ReplicationDraw<T>,
    set: &VectorSet<T>,
    params: &ModelParams<T>,
    t: T,
) -> Result<InterpolationState<T>> {
    params.check_against(set)?;
    if draw.elements() != set.len() || draw.rows() != params.m {
        return Err(Error::InvalidInput(
            "draw shape does not match the set and parameters".into(),
        ));
    }
    let (v, b) = mixed_vectors(draw, t)?;
    let s = params.sign.value::<T>();
    let shared = if params.variant.has_shared_scalar() {
        t.sqrt() * draw.u4
    } else {
        T::zero()
    };
    let rest = (T::one() - t).sqrt();
    let log_a: Vec<T> = (0..set.len())
        .map(|i| params.betas[i] * (s * b[i] + shared + rest * draw.u3[i]))
        .collect();
    let log_z = log_sum_exp(&log_a);
    let w = log_a.iter().map(|&x| (x - log_z).exp()).collect();
    Ok(InterpolationState {
        t,
        b,
        log_a,
        log_z,
        w,
        v,
        m: draw.rows(),
    })
}

/// Cosine between mixed vectors `i` and `p` of a draw at parameter `t`.
pub fn mixed_overlap<T: Real>(draw: &ReplicationDraw<T>, t: T, i: usize, p: usize) -> Result<T> {
    let l = draw.elements();
    if i >= l || p >= l {
        return Err(Error::InvalidInput(format!(
            "indices ({i}, {p}) out of range for {l} elements"
        )));
    }
    let (v, b) = mixed_vectors(draw, t)?;
    let m = draw.rows();
    if b[i] <= T::zero() || b[p] <= T::zero() {
        return Err(Error::ZeroNorm);
    }
    if i == p {
        return Ok(T::one());
    }
    let r = dot(&v[i * m..(i + 1) * m], &v[p * m..(p + 1) * m]) / (b[i] * b[p]);
    Ok(r.max(-T::one()).min(T::one()))
}

/// Sum of softmax weights, used by invariants checks.
pub fn weight_total<T: Real>(state: &InterpolationState<T>) -> T {
    let mut w = state.w.clone();
    canonical_sum(&mut w)
}
