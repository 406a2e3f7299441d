//! Rank-one decompositions `Q = sum_m q_m q_m'` and structure detection.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{DecompMode, ProblemInstance, PSD_REL_TOL};
use crate::scalar::Scalar;

/// Relative reconstruction tolerance for accepted decompositions.
pub const RECONSTRUCTION_TOL: f64 = 1e-8;
/// Above this size total nonnegativity is decided by the LDL sufficient check.
pub const EXACT_TN_MAX_DIM: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct RankOneDecomposition<T: Scalar> {
    pub vectors: Vec<DVector<T>>,
    pub mode: DecompMode,
}

impl<T: Scalar> RankOneDecomposition<T> {
    pub fn rank(&self) -> usize {
        self.vectors.len()
    }

    pub fn reconstruct(&self, n: usize) -> DMatrix<T> {
        let mut out = DMatrix::zeros(n, n);
        for q in &self.vectors {
            out += q * q.transpose();
        }
        out
    }

    /// `sum_m <q_m, x>^2`.
    pub fn quadratic(&self, x: &DVector<T>) -> T {
        self.vectors.iter().fold(T::zero(), |acc, q| {
            let t = q.dot(x);
            acc + t * t
        })
    }

    /// `||Q - sum q q'||_F / max(1, ||Q||_F)`.
    pub fn reconstruction_error(&self, q: &DMatrix<T>) -> f64 {
        let diff = q - self.reconstruct(q.nrows());
        let num = diff.iter().map(|v| v.to_f64_lossy().powi(2)).sum::<f64>().sqrt();
        let den = q.iter().map(|v| v.to_f64_lossy().powi(2)).sum::<f64>().sqrt();
        num / den.max(1.0)
    }
}

/// Scaled eigenvectors `q_m = sqrt(lambda_m) v_m` for the eigenvalues above
/// `rank_tol * lambda_max`. Each vector's first nonzero entry is positive.
pub fn eigen_decompose(q: &DMatrix<f64>, rank_tol: f64) -> Result<RankOneDecomposition<f64>> {
    let clipped = linalg::clip_psd(q, PSD_REL_TOL)?;
    let (vals, vecs) = linalg::sym_eigen(&clipped);
    let top = vals.iter().copied().fold(0.0f64, f64::max);
    let mut vectors = Vec::new();
    if top > 0.0 {
        for (k, &lam) in vals.iter().enumerate() {
            if lam > rank_tol * top {
                let mut v = vecs.column(k).into_owned() * lam.sqrt();
                let scale = v.amax();
                if let Some(first) = v.iter().copied().find(|c| c.abs() > 1e-12 * scale) {
                    if first < 0.0 {
                        v.neg_mut();
                    }
                }
                vectors.push(v);
            }
        }
    }
    Ok(RankOneDecomposition {
        vectors,
        mode: DecompMode::Eigen,
    })
}

/// `Q = L D L'` without pivoting; returns `q_m = sqrt(d_m) l_m` for pivots
/// above `pivot_tol * max_diag`. A zero pivot with a nonzero remaining
/// column triggers one retry on `Q + shift I`, then [`Error::PivotBreakdown`].
pub fn ldl_decompose<T: Scalar>(q: &DMatrix<T>, pivot_tol: f64) -> Result<RankOneDecomposition<T>> {
    match ldl_factor(q, pivot_tol, T::zero()) {
        Ok(d) => Ok(d),
        Err(Error::PivotBreakdown(j)) => {
            let scale = max_abs_diag(q);
            let dec = ldl_factor(q, pivot_tol, T::lit(1e-10) * scale)
                .map_err(|_| Error::PivotBreakdown(j))?;
            if dec.reconstruction_error(q) > RECONSTRUCTION_TOL {
                return Err(Error::PivotBreakdown(j));
            }
            Ok(dec)
        }
        Err(e) => Err(e),
    }
}

fn max_abs_diag<T: Scalar>(q: &DMatrix<T>) -> T {
    (0..q.nrows()).fold(T::zero(), |acc, i| acc.max(q[(i, i)].abs()))
}

fn ldl_factor<T: Scalar>(q: &DMatrix<T>, pivot_tol: f64, shift: T) -> Result<RankOneDecomposition<T>> {
    let n = q.nrows();
    if q.ncols() != n {
        return Err(Error::Dimension(format!("Q is {}x{}", n, q.ncols())));
    }
    let scale = max_abs_diag(q);
    let mut l = DMatrix::<T>::zeros(n, n);
    let mut d = vec![T::zero(); n];
    if scale == T::zero() {
        return Ok(RankOneDecomposition {
            vectors: Vec::new(),
            mode: DecompMode::Ldl,
        });
    }
    let tiny = T::lit(pivot_tol) * scale;
    let breakdown = T::lit(1e-7) * scale;
    for j in 0..n {
        let mut dj = q[(j, j)] + shift;
        for k in 0..j {
            dj -= l[(j, k)] * l[(j, k)] * d[k];
        }
        l[(j, j)] = T::one();
        if dj < -breakdown {
            return Err(Error::PivotBreakdown(j));
        }
        if dj <= tiny {
            for i in (j + 1)..n {
                let mut r = q[(i, j)];
                for k in 0..j {
                    r -= l[(i, k)] * l[(j, k)] * d[k];
                }
                if r.abs() > breakdown {
                    return Err(Error::PivotBreakdown(j));
                }
            }
            d[j] = T::zero();
            continue;
        }
        d[j] = dj;
        for i in (j + 1)..n {
            let mut r = q[(i, j)];
            for k in 0..j {
                r -= l[(i, k)] * l[(j, k)] * d[k];
            }
            l[(i, j)] = r / dj;
        }
    }
    let vectors = (0..n)
        .filter(|&j| d[j] > tiny)
        .map(|j| l.column(j).into_owned() * d[j].sqrt())
        .collect();
    Ok(RankOneDecomposition {
        vectors,
        mode: DecompMode::Ldl,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TnMethod {
    /// Every minor enumerated.
    ExactMinors,
    /// Sufficient check: all LDL columns entrywise nonnegative.
    LdlColumns,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TnCheck {
    pub totally_nonnegative: bool,
    pub method: TnMethod,
}

/// Total nonnegativity: exact minor enumeration up to [`EXACT_TN_MAX_DIM`],
/// the LDL-column sufficient condition above it.
pub fn is_totally_nonnegative<T: Scalar>(q: &DMatrix<T>) -> TnCheck {
    let n = q.nrows();
    if n <= EXACT_TN_MAX_DIM {
        return TnCheck {
            totally_nonnegative: all_minors_nonnegative(q, 1e-10),
            method: TnMethod::ExactMinors,
        };
    }
    let ok = match ldl_decompose(q, 1e-12) {
        Ok(dec) => dec
            .vectors
            .iter()
            .all(|v| v.iter().all(|&c| c >= T::lit(-1e-12))),
        Err(_) => false,
    };
    TnCheck {
        totally_nonnegative: ok,
        method: TnMethod::LdlColumns,
    }
}

fn all_minors_nonnegative<T: Scalar>(q: &DMatrix<T>, tol: f64) -> bool {
    let n = q.nrows();
    let subsets: Vec<Vec<usize>> = (1u32..(1 << n))
        .map(|mask| (0..n).filter(|i| mask >> i & 1 == 1).collect())
        .collect();
    for rows in &subsets {
        for cols in subsets.iter().filter(|c| c.len() == rows.len()) {
            let k = rows.len();
            let sub = DMatrix::from_fn(k, k, |i, j| q[(rows[i], cols[j])]);
            if det(sub) < T::lit(-tol) {
                return false;
            }
        }
    }
    true
}

/// Determinant by Gaussian elimination with partial pivoting.
fn det<T: Scalar>(mut m: DMatrix<T>) -> T {
    let k = m.nrows();
    let mut acc = T::one();
    for c in 0..k {
        let piv = (c..k)
            .max_by(|&a, &b| m[(a, c)].abs().partial_cmp(&m[(b, c)].abs()).unwrap())
            .unwrap();
        if m[(piv, c)] == T::zero() {
            return T::zero();
        }
        if piv != c {
            m.swap_rows(piv, c);
            acc = -acc;
        }
        let p = m[(c, c)];
        acc *= p;
        for r in (c + 1)..k {
            let factor = m[(r, c)] / p;
            for j in c..k {
                let v = m[(c, j)];
                m[(r, j)] -= factor * v;
            }
        }
    }
    acc
}

/// Checks user-supplied factors against `Q` and drops zero vectors.
pub fn user_decomposition(
    q: &DMatrix<f64>,
    vectors: &[DVector<f64>],
) -> Result<RankOneDecomposition<f64>> {
    let n = q.nrows();
    if let Some(v) = vectors.iter().find(|v| v.len() != n) {
        return Err(Error::Dimension(format!(
            "decomposition vector of length {}, expected {n}",
            v.len()
        )));
    }
    let dec = RankOneDecomposition {
        vectors: vectors
            .iter()
            .filter(|v| v.amax() > 0.0)
            .cloned()
            .collect(),
        mode: DecompMode::User,
    };
    let err = dec.reconstruction_error(q);
    if err > RECONSTRUCTION_TOL {
        return Err(Error::Malformed(format!(
            "user decomposition does not reproduce Q (relative error {err:e})"
        )));
    }
    Ok(dec)
}

/// The decomposition selected by `mode` for `inst`.
pub fn decompose(
    inst: &ProblemInstance<f64>,
    mode: DecompMode,
    rank_tol: f64,
) -> Result<RankOneDecomposition<f64>> {
    match mode {
        DecompMode::Eigen => eigen_decompose(&inst.q, rank_tol),
        DecompMode::Ldl => {
            let clipped = inst.clipped_numerator()?;
            ldl_decompose(&clipped, rank_tol)
        }
        DecompMode::User => match &inst.decomp {
            Some(vs) => user_decomposition(&inst.q, vs),
            None => Err(Error::Config(
                "user decomposition requested but the instance carries none".into(),
            )),
        },
    }
}
