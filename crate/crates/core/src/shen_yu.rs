//! Quadratic-transform ascent on `sum <q_m, x>^2 / x'Px` inside one sign region.
//!
//! With `y` fixed, `g(x, y) = sum 2 y_m |<q_m, x>| - y_m^2 x'Px` is concave
//! on a region where every `<q_m, x>` has a fixed sign, so the x-update is
//! a concave QP. The y-update has the closed form `|<q_m, x>| / x'Px`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{quad_form, ProblemInstance, SolverConfig, DENOM_TOL};
use crate::polyhedron::Region;
use crate::qp::{self, ConcaveQp, QpOptions};

/// Result of one transform run.
#[derive(Clone, Debug)]
pub struct TransformRun {
    pub x: DVector<f64>,
    pub f: f64,
    pub iterations: usize,
    /// `F` at the start and after every x-update.
    pub trace: Vec<f64>,
    pub converged: bool,
}

pub fn update_y(vectors: &[DVector<f64>], p: &DMatrix<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
    let d = quad_form(p, x);
    if d <= DENOM_TOL {
        return Err(Error::DenominatorZero(d));
    }
    Ok(DVector::from_iterator(vectors.len(), vectors.iter().map(|q| q.dot(x).abs() / d)))
}

/// `g(x, y)`; equals `F(x)` when `y` is the y-update at `x`.
pub fn transform_value(vectors: &[DVector<f64>], p: &DMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let d = quad_form(p, x);
    vectors
        .iter()
        .zip(y.iter())
        .map(|(q, &ym)| 2.0 * ym * q.dot(x).abs() - ym * ym * d)
        .sum()
}

/// Maximizes `g(., y)` over the region, starting from the feasible `x`.
pub fn update_x(
    vectors: &[DVector<f64>],
    p: &DMatrix<f64>,
    region: &Region,
    y: &DVector<f64>,
    x: &DVector<f64>,
    opts: &QpOptions,
) -> Result<DVector<f64>> {
    let n = x.len();
    let ysq: f64 = y.iter().map(|v| v * v).sum();
    if ysq == 0.0 {
        return Ok(x.clone());
    }
    let mut c = DVector::zeros(n);
    for (m, q) in vectors.iter().enumerate() {
        c += q * (2.0 * region.pattern.sign(m) * y[m]);
    }
    let problem = ConcaveQp::new(p * (-2.0 * ysq), c, &region.polyhedron);
    Ok(qp::maximize(&problem, x, opts)?.x)
}

/// Alternates the two updates from `x0` until `|dF| <= sy_tol max(1, F)`.
pub fn iterate(
    inst: &ProblemInstance<f64>,
    vectors: &[DVector<f64>],
    region: &Region,
    x0: &DVector<f64>,
    config: &SolverConfig,
) -> Result<TransformRun> {
    let opts = QpOptions::for_dim(inst.dim(), config.kkt_tol);
    let objective = |x: &DVector<f64>| -> Result<f64> {
        let d = quad_form(&inst.p, x);
        if d <= DENOM_TOL {
            return Err(Error::DenominatorZero(d));
        }
        Ok(vectors.iter().map(|q| q.dot(x).powi(2)).sum::<f64>() / d)
    };
    let mut x = x0.clone();
    let mut f = objective(&x)?;
    let mut trace = vec![f];
    for k in 1..=config.max_sy_iters {
        let y = update_y(vectors, &inst.p, &x)?;
        let next = update_x(vectors, &inst.p, region, &y, &x, &opts)?;
        let fn_ = match objective(&next) {
            Ok(v) => v,
            Err(_) => break,
        };
        if fn_ < f {
            // no ascent possible beyond solver precision
            trace.push(f);
            return Ok(TransformRun { x, f, iterations: k, trace, converged: true });
        }
        let done = fn_ - f <= config.sy_tol * f.max(1.0);
        x = next;
        f = fn_;
        trace.push(f);
        if done {
            return Ok(TransformRun { x, f, iterations: k, trace, converged: true });
        }
    }
    let iterations = trace.len() - 1;
    Ok(TransformRun { x, f, iterations, trace, converged: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyhedron::{Polyhedron, SignPattern};
    use approx::assert_abs_diff_eq;

    fn segment() -> Polyhedron<f64> {
        Polyhedron::new(DMatrix::zeros(0, 2), DVector::zeros(0))
            .with_equalities(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DVector::from_vec(vec![1.0]))
            .with_bounds(DVector::zeros(2), DVector::from_element(2, 1.0))
    }

    #[test]
    fn y_update_examples() {
        // <q, x> = 0.5, x'Px = 0.5
        let q = vec![DVector::from_vec(vec![1.0, 0.0])];
        let x = DVector::from_vec(vec![0.5, 0.5]);
        let y = update_y(&q, &DMatrix::identity(2, 2), &x).unwrap();
        assert_abs_diff_eq!(y[0], 1.0, epsilon = 1e-15);
        let orth = vec![DVector::from_vec(vec![1.0, -1.0])];
        assert_eq!(update_y(&orth, &DMatrix::identity(2, 2), &x).unwrap()[0], 0.0);
        assert!(update_y(&q, &DMatrix::identity(2, 2), &DVector::zeros(2)).is_err());
    }

    #[test]
    fn unit_vector_factor_on_segment() {
        let q = DVector::from_vec(vec![1.0, 0.0]);
        let inst = ProblemInstance::new(&q * q.transpose(), DMatrix::identity(2, 2), segment()).unwrap();
        let vectors = vec![q];
        let region = Region::new(&inst.feasible, &vectors, SignPattern::new(vec![true]));
        let x0 = DVector::from_vec(vec![0.5, 0.5]);
        let y = update_y(&vectors, &inst.p, &x0).unwrap();
        let x1 = update_x(&vectors, &inst.p, &region, &y, &x0, &QpOptions::default()).unwrap();
        assert_abs_diff_eq!(x1[0], 1.0, epsilon = 1e-7);
        let run = iterate(&inst, &vectors, &region, &x0, &SolverConfig::default()).unwrap();
        assert_abs_diff_eq!(run.f, 1.0, epsilon = 1e-9);
        assert!(run.converged && run.iterations <= 2);
    }

    #[test]
    fn transform_matches_objective_after_y_update() {
        let vectors = vec![DVector::from_vec(vec![1.0, 2.0]), DVector::from_vec(vec![-0.5, 1.0])];
        let p = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let x = DVector::from_vec(vec![0.3, 0.7]);
        let y = update_y(&vectors, &p, &x).unwrap();
        let f = vectors.iter().map(|q| q.dot(&x).powi(2)).sum::<f64>() / quad_form(&p, &x);
        assert_abs_diff_eq!(transform_value(&vectors, &p, &x, &y), f, epsilon = 1e-12);
    }

    #[test]
    fn constant_ratio_is_a_fixed_point() {
        let inst = ProblemInstance::new(DMatrix::identity(2, 2), DMatrix::identity(2, 2), segment()).unwrap();
        let vectors = vec![DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![0.0, 1.0])];
        let region = Region::new(&inst.feasible, &vectors, SignPattern::new(vec![true, true]));
        let x0 = DVector::from_vec(vec![0.3, 0.7]);
        let run = iterate(&inst, &vectors, &region, &x0, &SolverConfig::default()).unwrap();
        assert_abs_diff_eq!(run.f, 1.0, epsilon = 1e-12);
        assert_eq!(run.iterations, 1);
    }
}
