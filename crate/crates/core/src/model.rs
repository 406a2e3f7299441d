//! Problem data, objective evaluation, solver configuration and outcomes.

use std::fmt;
use std::time::Duration;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::polyhedron::{Interior, Polyhedron, SignPattern};
use crate::scalar::Scalar;

/// Denominators at or below this value are treated as zero.
pub const DENOM_TOL: f64 = 1e-14;
/// Smallest eigenvalue the denominator matrix must exceed.
pub const PD_TOL: f64 = 1e-10;
/// Relative tolerance (against the largest eigenvalue of `Q`) for PSD checks.
pub const PSD_REL_TOL: f64 = 1e-8;
/// Absolute symmetry tolerance, scaled by `max(1, max |entry|)`.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Maximize `x'Qx / x'Px` over a polyhedron.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemInstance<T: Scalar> {
    pub q: DMatrix<T>,
    pub p: DMatrix<T>,
    pub feasible: Polyhedron<T>,
    /// Optional user-supplied factors with `Q = sum q_m q_m'`.
    pub decomp: Option<Vec<DVector<T>>>,
}

impl<T: Scalar> ProblemInstance<T> {
    pub fn new(q: DMatrix<T>, p: DMatrix<T>, feasible: Polyhedron<T>) -> Result<Self> {
        let inst = Self {
            q,
            p,
            feasible,
            decomp: None,
        };
        inst.check_dimensions()?;
        Ok(inst)
    }

    pub fn with_decomposition(mut self, vectors: Vec<DVector<T>>) -> Result<Self> {
        self.decomp = Some(vectors);
        self.check_dimensions()?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn check_dimensions(&self) -> Result<()> {
        let n = self.q.nrows();
        if self.q.ncols() != n {
            return Err(Error::Dimension(format!(
                "Q is {}x{}",
                self.q.nrows(),
                self.q.ncols()
            )));
        }
        if self.p.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "P is {}x{}, expected {n}x{n}",
                self.p.nrows(),
                self.p.ncols()
            )));
        }
        self.feasible.check_dimensions()?;
        if self.feasible.dim() != n {
            return Err(Error::Dimension(format!(
                "constraints act on {} variables, matrices on {n}",
                self.feasible.dim()
            )));
        }
        if let Some(vs) = &self.decomp {
            if let Some((i, v)) = vs.iter().enumerate().find(|(_, v)| v.len() != n) {
                return Err(Error::Dimension(format!(
                    "decomposition vector {i} has length {}, expected {n}",
                    v.len()
                )));
            }
        }
        Ok(())
    }

    pub fn numerator(&self, x: &DVector<T>) -> T {
        quad_form(&self.q, x)
    }

    pub fn denominator(&self, x: &DVector<T>) -> T {
        quad_form(&self.p, x)
    }

    /// `F(x) = x'Qx / x'Px`.
    pub fn objective(&self, x: &DVector<T>) -> Result<T> {
        self.check_point(x)?;
        let den = self.denominator(x);
        if den <= T::lit(DENOM_TOL) {
            return Err(Error::DenominatorZero(den.to_f64_lossy()));
        }
        Ok(self.numerator(x) / den)
    }

    /// Analytic gradient `2 (Qx (x'Px) - (x'Qx) Px) / (x'Px)^2`.
    pub fn gradient(&self, x: &DVector<T>) -> Result<DVector<T>> {
        self.check_point(x)?;
        let qx = &self.q * x;
        let px = &self.p * x;
        let num = x.dot(&qx);
        let den = x.dot(&px);
        if den <= T::lit(DENOM_TOL) {
            return Err(Error::DenominatorZero(den.to_f64_lossy()));
        }
        let two = T::lit(2.0);
        Ok((qx * den - px * num) * (two / (den * den)))
    }

    fn check_point(&self, x: &DVector<T>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "point has length {}, expected {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }
}

/// `x'Mx` for a symmetric `M`.
pub fn quad_form<T: Scalar>(m: &DMatrix<T>, x: &DVector<T>) -> T {
    let mut acc = T::zero();
    for j in 0..m.ncols() {
        let mut col = T::zero();
        for i in 0..m.nrows() {
            col += m[(i, j)] * x[i];
        }
        acc += col * x[j];
    }
    acc
}

pub fn evaluate_objective<T: Scalar>(inst: &ProblemInstance<T>, x: &DVector<T>) -> Result<T> {
    inst.objective(x)
}

/// Outcome of [`validate`]. Failures are carried in the report, never raised.
#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub dimensions_ok: bool,
    pub q_symmetric: bool,
    pub p_symmetric: bool,
    pub q_eig_min: f64,
    pub q_eig_max: f64,
    pub p_eig_min: f64,
    pub p_eig_max: f64,
    pub q_psd: bool,
    pub p_pd: bool,
    pub feasibility: FeasibilityStatus,
    /// The origin lies in X; it is excluded from candidate optima.
    pub origin_feasible: bool,
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FeasibilityStatus {
    Nonempty,
    BoundaryOnly,
    Empty,
    Unknown,
}

fn symmetric_within<T: Scalar>(m: &DMatrix<T>) -> bool {
    let scale = m.iter().fold(1.0f64, |acc, v| acc.max(v.to_f64_lossy().abs()));
    let tol = SYMMETRY_TOL * scale;
    (0..m.nrows()).all(|i| {
        (0..i).all(|j| (m[(i, j)].to_f64_lossy() - m[(j, i)].to_f64_lossy()).abs() <= tol)
    })
}

/// Checks the PSD/PD assumptions, dimensions and nonemptiness of X.
pub fn validate<T: Scalar>(inst: &ProblemInstance<T>, delta_feas: f64) -> ValidationReport {
    let mut issues = Vec::new();
    let dimensions_ok = match inst.check_dimensions() {
        Ok(()) => true,
        Err(e) => {
            issues.push(e.to_string());
            false
        }
    };
    let q_symmetric = inst.q.is_square() && symmetric_within(&inst.q);
    let p_symmetric = inst.p.is_square() && symmetric_within(&inst.p);
    if !q_symmetric {
        issues.push("Q is not symmetric".into());
    }
    if !p_symmetric {
        issues.push("P is not symmetric".into());
    }
    let (mut q_eig_min, mut q_eig_max, mut p_eig_min, mut p_eig_max) =
        (f64::NAN, f64::NAN, f64::NAN, f64::NAN);
    let (mut q_psd, mut p_pd) = (false, false);
    if inst.q.is_square() {
        let ev = linalg::sym_eigenvalues(&to_f64_matrix(&inst.q));
        q_eig_min = ev.iter().copied().fold(f64::INFINITY, f64::min);
        q_eig_max = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tau = PSD_REL_TOL * q_eig_max.max(0.0);
        q_psd = q_eig_min >= -tau;
        if !q_psd {
            issues.push(format!("Q has negative eigenvalue {q_eig_min:e}"));
        }
    }
    if inst.p.is_square() {
        let ev = linalg::sym_eigenvalues(&to_f64_matrix(&inst.p));
        p_eig_min = ev.iter().copied().fold(f64::INFINITY, f64::min);
        p_eig_max = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        p_pd = p_eig_min >= PD_TOL;
        if !p_pd {
            issues.push(format!("P smallest eigenvalue {p_eig_min:e} is below {PD_TOL:e}"));
        }
    }
    let mut feasibility = FeasibilityStatus::Unknown;
    let mut origin_feasible = false;
    if dimensions_ok {
        let poly = inst.feasible.to_f64();
        feasibility = match poly.find_interior_point(delta_feas) {
            Interior::Point { .. } => FeasibilityStatus::Nonempty,
            Interior::BoundaryOnly { .. } => FeasibilityStatus::BoundaryOnly,
            Interior::Empty => FeasibilityStatus::Empty,
        };
        if feasibility == FeasibilityStatus::Empty {
            issues.push("feasible set is empty".into());
        }
        origin_feasible = poly.max_violation(&DVector::zeros(poly.dim())) <= delta_feas;
    }
    ValidationReport {
        dimensions_ok,
        q_symmetric,
        p_symmetric,
        q_eig_min,
        q_eig_max,
        p_eig_min,
        p_eig_max,
        q_psd,
        p_pd,
        feasibility,
        origin_feasible,
        issues,
    }
}

pub(crate) fn to_f64_matrix<T: Scalar>(m: &DMatrix<T>) -> DMatrix<f64> {
    m.map(|v| v.to_f64_lossy())
}

pub(crate) fn to_f64_vector<T: Scalar>(v: &DVector<T>) -> DVector<f64> {
    v.map(|x| x.to_f64_lossy())
}

impl<T: Scalar> ProblemInstance<T> {
    pub fn to_f64(&self) -> ProblemInstance<f64> {
        ProblemInstance {
            q: to_f64_matrix(&self.q),
            p: to_f64_matrix(&self.p),
            feasible: self.feasible.to_f64(),
            decomp: self
                .decomp
                .as_ref()
                .map(|vs| vs.iter().map(to_f64_vector).collect()),
        }
    }
}

impl ProblemInstance<f64> {
    /// Largest generalized eigenvalue of `(Q, P)`, an upper bound on `F`.
    pub fn rayleigh_bound(&self) -> Result<f64> {
        linalg::max_generalized_eigenvalue(&self.q, &self.p)
    }

    /// `Q` with eigenvalues in `[-tau_psd, 0)` clipped to zero.
    pub fn clipped_numerator(&self) -> Result<DMatrix<f64>> {
        linalg::clip_psd(&self.q, PSD_REL_TOL)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DecompMode {
    #[default]
    Eigen,
    Ldl,
    User,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Interpolated binary search on the Dinkelbach function.
    Ibaraki,
    /// Region checking with global certificates.
    #[default]
    Region,
    /// One quadratic-transform run per region, no certificates.
    FastRegion,
    /// Two Dinkelbach runs on the square-root ratio; rank-one numerators only.
    RankOne,
    /// Picks a path from the structure of `Q`.
    Auto,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Tolerance on `|pi(lambda)|` for Dinkelbach-type termination.
    pub eps: f64,
    /// Minimum normalized inequality slack for a region to count as nonempty.
    pub delta_feas: f64,
    /// Absolute optimality gap of the branch-and-bound.
    pub bb_gap: f64,
    /// Relative objective change that stops the quadratic-transform loop.
    pub sy_tol: f64,
    pub kkt_tol: f64,
    pub rank_tol: f64,
    pub max_sy_iters: usize,
    pub max_dinkelbach_rounds: usize,
    pub max_bb_nodes: usize,
    /// Largest decomposition rank whose sign patterns may be enumerated.
    pub max_rank: usize,
    pub decomp_mode: DecompMode,
    pub algorithm: Algorithm,
    /// Recompute the branching directions at every node instead of once per lambda.
    pub per_node_relaxation: bool,
    /// Process regions on the rayon pool.
    pub parallel: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            delta_feas: 1e-7,
            bb_gap: 1e-6,
            sy_tol: 1e-8,
            kkt_tol: 1e-8,
            rank_tol: 1e-10,
            max_sy_iters: 500,
            max_dinkelbach_rounds: 100,
            max_bb_nodes: 50_000,
            max_rank: 20,
            decomp_mode: DecompMode::Eigen,
            algorithm: Algorithm::Region,
            per_node_relaxation: false,
            parallel: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let tols = [
            ("eps", self.eps),
            ("delta_feas", self.delta_feas),
            ("bb_gap", self.bb_gap),
            ("sy_tol", self.sy_tol),
            ("kkt_tol", self.kkt_tol),
            ("rank_tol", self.rank_tol),
        ];
        for (name, v) in tols {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let caps = [
            ("max_sy_iters", self.max_sy_iters),
            ("max_dinkelbach_rounds", self.max_dinkelbach_rounds),
            ("max_bb_nodes", self.max_bb_nodes),
            ("max_rank", self.max_rank),
        ];
        for (name, v) in caps {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    GlobalVerified,
    StationaryOnly,
    Infeasible,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveStatus::GlobalVerified => "global_verified",
            SolveStatus::StationaryOnly => "stationary_only",
            SolveStatus::Infeasible => "infeasible",
        })
    }
}

/// Per-region record of a region-checking run.
#[derive(Clone, Debug, Serialize)]
pub struct RegionTrace {
    pub pattern: SignPattern,
    /// Quadratic-transform iterations summed over all restarts.
    pub iterations: usize,
    /// Number of transform runs, i.e. Dinkelbach restarts plus one.
    pub dinkelbach_rounds: usize,
    pub value: f64,
    /// Objective after each transform run; strictly increasing across restarts.
    pub round_values: Vec<f64>,
    pub certified: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveOutcome {
    #[serde(serialize_with = "ser_vector")]
    pub x_star: DVector<f64>,
    pub f_star: f64,
    pub status: SolveStatus,
    pub regions_checked: usize,
    pub per_region: Vec<RegionTrace>,
    /// `(lambda, pi(lambda))` pairs evaluated by Dinkelbach-type loops.
    pub lambda_trace: Vec<(f64, f64)>,
    pub dinkelbach_rounds: usize,
    pub sy_iterations: usize,
    #[serde(serialize_with = "ser_duration")]
    pub wall_time: Duration,
    pub diagnostics: Vec<String>,
}

fn ser_vector<S: serde::Serializer>(v: &DVector<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter())
}

fn ser_duration<S: serde::Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

impl SolveOutcome {
    pub(crate) fn infeasible(n: usize, wall_time: Duration, why: impl Into<String>) -> Self {
        Self {
            x_star: DVector::zeros(n),
            f_star: f64::NAN,
            status: SolveStatus::Infeasible,
            regions_checked: 0,
            per_region: Vec::new(),
            lambda_trace: Vec::new(),
            dinkelbach_rounds: 0,
            sy_iterations: 0,
            wall_time,
            diagnostics: vec![why.into()],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn simplex2() -> Polyhedron<f64> {
        Polyhedron::simplex(2)
    }

    #[test]
    fn identity_ratio_is_one() {
        let inst =
            ProblemInstance::new(DMatrix::identity(2, 2), DMatrix::identity(2, 2), simplex2())
                .unwrap();
        let x = DVector::from_vec(vec![0.3, 0.7]);
        assert_relative_eq!(inst.objective(&x).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn rank_one_ratio() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let inst = ProblemInstance::new(q, DMatrix::identity(2, 2), simplex2()).unwrap();
        let x = DVector::from_vec(vec![0.5, 0.5]);
        assert_relative_eq!(inst.objective(&x).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn zero_point_is_rejected() {
        let inst =
            ProblemInstance::new(DMatrix::identity(2, 2), DMatrix::identity(2, 2), simplex2())
                .unwrap();
        assert!(matches!(
            inst.objective(&DVector::zeros(2)),
            Err(Error::DenominatorZero(_))
        ));
    }

    #[test]
    fn objective_in_f32() {
        let q = DMatrix::<f32>::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let inst =
            ProblemInstance::new(q, DMatrix::identity(2, 2), Polyhedron::<f32>::simplex(2))
                .unwrap();
        let x = DVector::from_vec(vec![0.5f32, 0.5]);
        assert!((inst.objective(&x).unwrap() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn wrong_length_point() {
        let inst =
            ProblemInstance::new(DMatrix::identity(2, 2), DMatrix::identity(2, 2), simplex2())
                .unwrap();
        assert!(matches!(
            inst.objective(&DVector::zeros(3)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn mismatched_matrices_rejected() {
        let r = ProblemInstance::new(DMatrix::identity(2, 2), DMatrix::identity(3, 3), simplex2());
        assert!(matches!(r, Err(Error::Dimension(_))));
    }

    #[test]
    fn validate_flags_indefinite_numerator() {
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -0.1]));
        let inst = ProblemInstance::new(q, DMatrix::identity(2, 2), simplex2()).unwrap();
        let rep = validate(&inst, 1e-7);
        assert!(!rep.q_psd);
        assert!(rep.p_pd);
        assert!(!rep.is_clean());
    }

    #[test]
    fn validate_flags_singular_denominator() {
        let p = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        let inst = ProblemInstance::new(DMatrix::identity(2, 2), p, simplex2()).unwrap();
        let rep = validate(&inst, 1e-7);
        assert!(!rep.p_pd);
        assert!(rep.q_psd);
    }

    #[test]
    fn validate_clean_instance() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
        let p = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let poly = Polyhedron::simplex(2).with_bounds(
            DVector::from_element(2, 0.0),
            DVector::from_element(2, 0.8),
        );
        let inst = ProblemInstance::new(q, p, poly).unwrap();
        let rep = validate(&inst, 1e-7);
        assert!(rep.is_clean(), "{:?}", rep.issues);
        assert_eq!(rep.feasibility, FeasibilityStatus::Nonempty);
        assert!(!rep.origin_feasible);
    }

    #[test]
    fn default_config_is_valid() {
        SolverConfig::default().validate().unwrap();
        let bad = SolverConfig {
            bb_gap: 0.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            max_bb_nodes: 0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
