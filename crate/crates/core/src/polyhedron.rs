//! Polyhedral feasible sets, interior points and sign-pattern regions.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg;
use crate::qp::{self, ConcaveQp, QpOptions, QpStatus};
use crate::scalar::Scalar;

/// `{x : Ax <= b, Ex = f, lb <= x <= ub}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polyhedron<T: Scalar> {
    pub a: DMatrix<T>,
    pub b: DVector<T>,
    pub e: DMatrix<T>,
    pub f: DVector<T>,
    pub lb: Option<DVector<T>>,
    pub ub: Option<DVector<T>>,
}

impl<T: Scalar> Polyhedron<T> {
    pub fn new(a: DMatrix<T>, b: DVector<T>) -> Self {
        let n = a.ncols();
        Self {
            a,
            b,
            e: DMatrix::zeros(0, n),
            f: DVector::zeros(0),
            lb: None,
            ub: None,
        }
    }

    pub fn unconstrained(n: usize) -> Self {
        Self::new(DMatrix::zeros(0, n), DVector::zeros(0))
    }

    /// The standard simplex `{x >= 0, sum x = 1}`.
    pub fn simplex(n: usize) -> Self {
        Self::unconstrained(n)
            .with_equalities(DMatrix::from_element(1, n, T::one()), DVector::from_element(1, T::one()))
            .with_lower(DVector::zeros(n))
    }

    pub fn with_equalities(mut self, e: DMatrix<T>, f: DVector<T>) -> Self {
        self.e = e;
        self.f = f;
        self
    }

    pub fn with_bounds(mut self, lb: DVector<T>, ub: DVector<T>) -> Self {
        self.lb = Some(lb);
        self.ub = Some(ub);
        self
    }

    pub fn with_lower(mut self, lb: DVector<T>) -> Self {
        self.lb = Some(lb);
        self
    }

    pub fn with_upper(mut self, ub: DVector<T>) -> Self {
        self.ub = Some(ub);
        self
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn n_ineq(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_eq(&self) -> usize {
        self.e.nrows()
    }

    pub fn check_dimensions(&self) -> Result<()> {
        let n = self.dim();
        if self.b.len() != self.a.nrows() {
            return Err(Error::Dimension(format!(
                "A has {} rows but b has length {}",
                self.a.nrows(),
                self.b.len()
            )));
        }
        if self.e.ncols() != n && self.e.nrows() > 0 {
            return Err(Error::Dimension(format!(
                "E has {} columns, expected {n}",
                self.e.ncols()
            )));
        }
        if self.f.len() != self.e.nrows() {
            return Err(Error::Dimension(format!(
                "E has {} rows but f has length {}",
                self.e.nrows(),
                self.f.len()
            )));
        }
        for (name, v) in [("lb", &self.lb), ("ub", &self.ub)] {
            if let Some(v) = v {
                if v.len() != n {
                    return Err(Error::Dimension(format!(
                        "{name} has length {}, expected {n}",
                        v.len()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Appends inequality rows `extra_a x <= extra_b`.
    pub fn with_rows(&self, extra_a: &DMatrix<T>, extra_b: &DVector<T>) -> Self {
        let n = self.dim();
        let m = self.a.nrows();
        let r = extra_a.nrows();
        let mut a = DMatrix::zeros(m + r, n);
        a.rows_mut(0, m).copy_from(&self.a);
        a.rows_mut(m, r).copy_from(extra_a);
        let mut b = DVector::zeros(m + r);
        b.rows_mut(0, m).copy_from(&self.b);
        b.rows_mut(m, r).copy_from(extra_b);
        Self {
            a,
            b,
            ..self.clone()
        }
    }

    /// Largest constraint violation at `x` (zero when feasible).
    pub fn max_violation(&self, x: &DVector<T>) -> T {
        let mut v = T::zero();
        if self.a.nrows() > 0 {
            let ax = &self.a * x;
            for (ai, bi) in ax.iter().zip(self.b.iter()) {
                v = v.max(*ai - *bi);
            }
        }
        if self.e.nrows() > 0 {
            let ex = &self.e * x;
            for (ei, fi) in ex.iter().zip(self.f.iter()) {
                v = v.max((*ei - *fi).abs());
            }
        }
        if let Some(lb) = &self.lb {
            for (l, xi) in lb.iter().zip(x.iter()) {
                v = v.max(*l - *xi);
            }
        }
        if let Some(ub) = &self.ub {
            for (u, xi) in ub.iter().zip(x.iter()) {
                v = v.max(*xi - *u);
            }
        }
        v
    }

    pub fn to_f64(&self) -> Polyhedron<f64> {
        let m = |a: &DMatrix<T>| a.map(|v| v.to_f64_lossy());
        let v = |a: &DVector<T>| a.map(|v| v.to_f64_lossy());
        Polyhedron {
            a: m(&self.a),
            b: v(&self.b),
            e: if self.e.nrows() == 0 {
                DMatrix::zeros(0, self.dim())
            } else {
                m(&self.e)
            },
            f: v(&self.f),
            lb: self.lb.as_ref().map(v),
            ub: self.ub.as_ref().map(v),
        }
    }
}

/// Result of the max-min-slack search.
#[derive(Clone, Debug, PartialEq)]
pub enum Interior {
    /// A point whose normalized inequality slacks are all at least `delta`.
    Point { x: DVector<f64>, slack: f64 },
    /// Feasible, but the largest achievable slack is below `delta`.
    BoundaryOnly { x: DVector<f64>, slack: f64 },
    Empty,
}

impl Interior {
    pub fn point(&self) -> Option<&DVector<f64>> {
        match self {
            Interior::Point { x, .. } => Some(x),
            _ => None,
        }
    }

    /// Any feasible point, interior or not.
    pub fn feasible_point(&self) -> Option<&DVector<f64>> {
        match self {
            Interior::Point { x, .. } | Interior::BoundaryOnly { x, .. } => Some(x),
            Interior::Empty => None,
        }
    }
}

/// Slack below which a max-min-slack value is taken as infeasible.
const EMPTY_TOL: f64 = 1e-9;
const SLACK_CAP: f64 = 1.0;
const SLACK_REG: f64 = 1e-10;

impl Polyhedron<f64> {
    /// Smallest inequality slack at `x`, each row scaled to unit normal.
    pub fn min_normalized_slack(&self, x: &DVector<f64>) -> f64 {
        let mut s = f64::INFINITY;
        for i in 0..self.a.nrows() {
            let row = self.a.row(i);
            let norm = row.norm();
            if norm > 0.0 {
                s = s.min((self.b[i] - row.dot(&x.transpose())) / norm);
            }
        }
        if let Some(lb) = &self.lb {
            for (l, xi) in lb.iter().zip(x.iter()) {
                if l.is_finite() {
                    s = s.min(xi - l);
                }
            }
        }
        if let Some(ub) = &self.ub {
            for (u, xi) in ub.iter().zip(x.iter()) {
                if u.is_finite() {
                    s = s.min(u - xi);
                }
            }
        }
        s
    }

    /// Maximizes the smallest normalized inequality slack.
    ///
    /// Returns the slack-maximizing point (projected onto the equality
    /// constraints) and its recomputed slack, or `None` if the equalities
    /// are inconsistent or the solve fails outright.
    pub fn max_min_slack(&self) -> Option<(DVector<f64>, f64)> {
        let n = self.dim();
        let m = self.a.nrows();
        let nl = self.lb.as_ref().map_or(0, |l| l.iter().filter(|v| v.is_finite()).count());
        let nu = self.ub.as_ref().map_or(0, |u| u.iter().filter(|v| v.is_finite()).count());
        let rows = m + nl + nu;
        let mut a = DMatrix::zeros(rows, n + 1);
        let mut b = DVector::zeros(rows);
        let mut k = 0;
        for i in 0..m {
            let norm = self.a.row(i).norm();
            if norm == 0.0 {
                if self.b[i] < -EMPTY_TOL {
                    return None;
                }
                a[(k, n)] = 1.0;
                b[k] = SLACK_CAP;
            } else {
                for j in 0..n {
                    a[(k, j)] = self.a[(i, j)] / norm;
                }
                a[(k, n)] = 1.0;
                b[k] = self.b[i] / norm;
            }
            k += 1;
        }
        if let Some(lb) = &self.lb {
            for (j, &l) in lb.iter().enumerate() {
                if l.is_finite() {
                    a[(k, j)] = -1.0;
                    a[(k, n)] = 1.0;
                    b[k] = -l;
                    k += 1;
                }
            }
        }
        if let Some(ub) = &self.ub {
            for (j, &u) in ub.iter().enumerate() {
                if u.is_finite() {
                    a[(k, j)] = 1.0;
                    a[(k, n)] = 1.0;
                    b[k] = u;
                    k += 1;
                }
            }
        }
        let mut e = DMatrix::zeros(self.e.nrows(), n + 1);
        if self.e.nrows() > 0 {
            e.columns_mut(0, n).copy_from(&self.e);
        }
        let mut ub = DVector::from_element(n + 1, f64::INFINITY);
        ub[n] = SLACK_CAP;
        let lifted = Polyhedron::new(a, b)
            .with_equalities(e, self.f.clone())
            .with_upper(ub);
        let mut c = DVector::zeros(n + 1);
        c[n] = 1.0;
        let h = DMatrix::identity(n + 1, n + 1) * (-2.0 * SLACK_REG);
        let problem = ConcaveQp::new(h, c, &lifted);
        let sol = qp::solve(&problem, None, &QpOptions::default());
        if matches!(sol.status, QpStatus::Infeasible | QpStatus::Unbounded) {
            return None;
        }
        let x = linalg::project_affine(&self.e, &self.f, &sol.x.rows(0, n).into_owned());
        let eq_ok = self.e.nrows() == 0
            || (&self.e * &x - &self.f).amax() <= 1e-9 * (1.0 + self.f.amax());
        if !eq_ok {
            return None;
        }
        let slack = self.min_normalized_slack(&x).min(SLACK_CAP);
        Some((x, slack))
    }

    /// Chebyshev-style interior point with slack at least `delta`.
    pub fn find_interior_point(&self, delta: f64) -> Interior {
        match self.max_min_slack() {
            None => Interior::Empty,
            Some((x, slack)) if slack >= delta => Interior::Point { x, slack },
            Some((x, slack)) if slack >= -EMPTY_TOL => Interior::BoundaryOnly { x, slack },
            Some(_) => Interior::Empty,
        }
    }

    /// Per-coordinate bounds of X from explicit bounds or, where missing, linear programs.
    pub fn bounding_box(&self) -> Result<(DVector<f64>, DVector<f64>)> {
        let n = self.dim();
        let mut lo = DVector::from_element(n, f64::NEG_INFINITY);
        let mut hi = DVector::from_element(n, f64::INFINITY);
        if let Some(lb) = &self.lb {
            lo.copy_from(lb);
        }
        if let Some(ub) = &self.ub {
            hi.copy_from(ub);
        }
        for j in 0..n {
            for sign in [-1.0, 1.0] {
                let known = if sign < 0.0 { lo[j] } else { hi[j] };
                if known.is_finite() {
                    continue;
                }
                let mut c = DVector::zeros(n);
                c[j] = sign;
                let v = self.linear_max(&c)?;
                if sign < 0.0 {
                    lo[j] = -v;
                } else {
                    hi[j] = v;
                }
            }
        }
        Ok((lo, hi))
    }

    /// `max c'x` over the polyhedron.
    pub fn linear_max(&self, c: &DVector<f64>) -> Result<f64> {
        let problem = ConcaveQp::linear(c.clone(), self);
        let sol = qp::solve(&problem, None, &QpOptions::default());
        match sol.status {
            QpStatus::Optimal => Ok(sol.value),
            QpStatus::Unbounded => Err(Error::Unbounded),
            QpStatus::Infeasible => Err(Error::Infeasible),
            QpStatus::NotConverged => {
                if sol.value.abs() > 1e9 || !sol.value.is_finite() {
                    Err(Error::Unbounded)
                } else if self.max_violation(&sol.x) > 1e-6 {
                    Err(Error::Infeasible)
                } else {
                    Ok(sol.value)
                }
            }
        }
    }

    /// True when every feasible point is entrywise nonnegative.
    pub fn within_nonnegative_orthant(&self) -> bool {
        if let Some(lb) = &self.lb {
            if lb.iter().all(|&l| l >= 0.0) {
                return true;
            }
        }
        match self.bounding_box() {
            Ok((lo, _)) => lo.iter().all(|&l| l >= -1e-12),
            Err(_) => false,
        }
    }
}

/// A binary word selecting `<q_m, x> >= 0` (bit set) or `<= 0` (bit clear) per factor.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SignPattern {
    bits: Vec<bool>,
}

impl SignPattern {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    /// Bit `m` of `index`, least significant bit first.
    pub fn from_index(index: u64, len: usize) -> Self {
        Self {
            bits: (0..len).map(|m| (index >> m) & 1 == 1).collect(),
        }
    }

    /// The pattern of `x`; a zero inner product counts as nonnegative.
    pub fn of_point(vectors: &[DVector<f64>], x: &DVector<f64>) -> Self {
        Self {
            bits: vectors.iter().map(|q| q.dot(x) >= 0.0).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// `+1` for a set bit, `-1` otherwise.
    pub fn sign(&self, m: usize) -> f64 {
        if self.bits[m] {
            1.0
        } else {
            -1.0
        }
    }
}

impl fmt::Display for SignPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for SignPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SignPattern({self})")
    }
}

impl Serialize for SignPattern {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// The closed subregion of a base polyhedron fixing the sign of each `<q_m, x>`.
#[derive(Clone, Debug)]
pub struct Region {
    pub pattern: SignPattern,
    /// Base constraints with the `M` sign rows `-sigma_m q_m' x <= 0` appended.
    pub polyhedron: Polyhedron<f64>,
}

impl Region {
    pub fn new(base: &Polyhedron<f64>, vectors: &[DVector<f64>], pattern: SignPattern) -> Self {
        assert_eq!(vectors.len(), pattern.len(), "pattern length must equal the rank");
        let n = base.dim();
        let mut rows = DMatrix::zeros(vectors.len(), n);
        for (m, q) in vectors.iter().enumerate() {
            let norm = q.norm().max(f64::MIN_POSITIVE);
            let sigma = pattern.sign(m);
            for j in 0..n {
                rows[(m, j)] = -sigma * q[j] / norm;
            }
        }
        let polyhedron = base.with_rows(&rows, &DVector::zeros(vectors.len()));
        Self {
            pattern,
            polyhedron,
        }
    }

    /// Checks the sign constraints at `x` within `tol`.
    pub fn contains_signs(&self, vectors: &[DVector<f64>], x: &DVector<f64>, tol: f64) -> bool {
        vectors
            .iter()
            .enumerate()
            .all(|(m, q)| self.pattern.sign(m) * q.dot(x) >= -tol * q.norm())
    }
}

#[derive(Clone, Debug)]
pub struct NonemptyRegion {
    pub region: Region,
    pub interior: DVector<f64>,
    pub slack: f64,
}

#[derive(Clone, Debug, Default)]
pub struct RegionScan {
    pub regions: Vec<NonemptyRegion>,
    /// Patterns whose region is feasible but thinner than `delta_feas`.
    pub thin: Vec<SignPattern>,
    /// Patterns skipped by single-factor prefeasibility checks.
    pub pruned: usize,
    /// Patterns tested with a full interior-point solve.
    pub tested: usize,
}

/// Largest number of sign patterns [`enumerate_nonempty_regions`] will visit.
pub const PATTERN_BUDGET: u128 = 1 << 20;

/// Lists the sign patterns whose regions have an interior point.
///
/// A factor whose half-space `R_m^0` (or `R_m^1`) is already empty against
/// the base polyhedron fixes that bit, so only consistent patterns are tried.
pub fn enumerate_nonempty_regions(
    base: &Polyhedron<f64>,
    vectors: &[DVector<f64>],
    delta_feas: f64,
    max_rank: usize,
    parallel: bool,
) -> Result<RegionScan> {
    let m = vectors.len();
    let patterns: u128 = 1u128 << m.min(127);
    if m > max_rank || patterns > PATTERN_BUDGET {
        return Err(Error::RegionOverflow {
            patterns,
            budget: PATTERN_BUDGET.min(1u128 << max_rank.min(127)),
        });
    }
    // allowed[m] = (can be 0, can be 1)
    let half_space = |k: usize, bit: bool| -> bool {
        let mut bits = vec![true; 1];
        bits[0] = bit;
        let region = Region::new(base, &vectors[k..k + 1], SignPattern::new(bits));
        !matches!(region.polyhedron.find_interior_point(delta_feas), Interior::Empty)
    };
    let allowed: Vec<(bool, bool)> = if parallel {
        (0..m)
            .into_par_iter()
            .map(|k| (half_space(k, false), half_space(k, true)))
            .collect()
    } else {
        (0..m).map(|k| (half_space(k, false), half_space(k, true))).collect()
    };
    if allowed.iter().any(|&(z, o)| !z && !o) {
        return Ok(RegionScan::default());
    }
    let free: Vec<usize> = (0..m).filter(|&k| allowed[k].0 && allowed[k].1).collect();
    let fixed_bits: Vec<bool> = allowed.iter().map(|&(_, one)| one).collect();
    let total = 1u64 << m;
    let candidates = 1u64 << free.len();
    let pruned = (total - candidates) as usize;

    let test = |idx: u64| -> (SignPattern, Interior) {
        let mut bits = fixed_bits.clone();
        for (k, &pos) in free.iter().enumerate() {
            bits[pos] = (idx >> k) & 1 == 1;
        }
        let pattern = SignPattern::new(bits);
        let region = Region::new(base, vectors, pattern.clone());
        let interior = region.polyhedron.find_interior_point(delta_feas);
        (pattern, interior)
    };
    let mut results: Vec<(SignPattern, Interior)> = if parallel {
        (0..candidates).into_par_iter().map(test).collect()
    } else {
        (0..candidates).map(test).collect()
    };
    results.sort_by(|a, b| a.0.cmp(&b.0));

    let mut scan = RegionScan {
        pruned,
        tested: candidates as usize,
        ..RegionScan::default()
    };
    for (pattern, interior) in results {
        match interior {
            Interior::Point { x, slack } => scan.regions.push(NonemptyRegion {
                region: Region::new(base, vectors, pattern),
                interior: x,
                slack,
            }),
            Interior::BoundaryOnly { .. } => scan.thin.push(pattern),
            Interior::Empty => {}
        }
    }
    Ok(scan)
}
