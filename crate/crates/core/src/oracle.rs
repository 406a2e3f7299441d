//! Brute-force reference values for small instances.
//!
//! Samples X by rejection from its bounding box and by hit-and-run, adds
//! the basic vertices when there are few enough, then polishes the best
//! candidates by projected-gradient ascent on `F`. Shares no code with the
//! solvers beyond the polyhedron and concave-QP kernels.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{ProblemInstance, DENOM_TOL};
use crate::polyhedron::Polyhedron;
use crate::qp::{self, ConcaveQp, QpOptions};

pub const DEFAULT_SAMPLES: usize = 200_000;
const POLISH_TOP: usize = 20;
const POLISH_STEPS: usize = 500;
const VERTEX_COMBINATION_CAP: usize = 50_000;
const FEAS_TOL: f64 = 1e-9;
const CHUNK: usize = 4096;

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub f: f64,
    pub x: DVector<f64>,
    /// Feasible points evaluated before polishing.
    pub evaluated: usize,
}

fn value(inst: &ProblemInstance<f64>, x: &DVector<f64>) -> Option<f64> {
    let d = x.dot(&(&inst.p * x));
    (d > DENOM_TOL).then(|| x.dot(&(&inst.q * x)) / d)
}

/// Best feasible value found with about `samples` evaluations.
pub fn grid_oracle(inst: &ProblemInstance<f64>, samples: usize, seed: u64) -> Result<OracleResult> {
    let x = &inst.feasible;
    let n = inst.dim();
    let (lo, hi) = x.bounding_box()?;
    let interior = x.find_interior_point(0.0);
    let center = interior.feasible_point().cloned();
    let basis = linalg::null_space(&x.e, n);

    let chunks = samples.div_ceil(CHUNK);
    let mut pool: Vec<(f64, DVector<f64>)> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (c as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let budget = CHUNK.min(samples - c * CHUNK);
            let mut out = Vec::with_capacity(budget);
            // half rejection from the box (projected onto the equalities), half hit-and-run
            for _ in 0..budget / 2 {
                let raw = DVector::from_fn(n, |i, _| rng.random_range(lo[i]..=hi[i]));
                let p = linalg::project_affine(&x.e, &x.f, &raw);
                if x.max_violation(&p) <= FEAS_TOL {
                    if let Some(v) = value(inst, &p) {
                        out.push((v, p));
                    }
                }
            }
            if let Some(mut walk) = center.clone() {
                for _ in budget / 2..budget {
                    walk = hit_and_run_step(x, &basis, &walk, &mut rng);
                    if let Some(v) = value(inst, &walk) {
                        out.push((v, walk.clone()));
                    }
                }
            }
            out
        })
        .collect();
    if let Some(c) = &center {
        if let Some(v) = value(inst, c) {
            pool.push((v, c.clone()));
        }
    }
    for v in basic_vertices(x) {
        if let Some(f) = value(inst, &v) {
            pool.push((f, v));
        }
    }
    let evaluated = pool.len();
    if pool.is_empty() {
        return Err(Error::Solver("no feasible sample: X is empty or too thin to sample".into()));
    }
    pool.sort_by(|a, b| b.0.total_cmp(&a.0));
    pool.truncate(POLISH_TOP);
    let best = pool
        .into_par_iter()
        .map(|(f, x0)| polish(inst, x0, f))
        .reduce_with(|a, b| if b.0 > a.0 { b } else { a })
        .unwrap();
    Ok(OracleResult { f: best.0, x: best.1, evaluated })
}

/// One hit-and-run move inside the affine hull of X.
fn hit_and_run_step(x: &Polyhedron<f64>, basis: &DMatrix<f64>, at: &DVector<f64>, rng: &mut ChaCha8Rng) -> DVector<f64> {
    if basis.ncols() == 0 {
        return at.clone();
    }
    let z = DVector::from_fn(basis.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let d = basis * z;
    let (mut t_lo, mut t_hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut clip = |slack: f64, rate: f64| {
        // need slack - t * rate >= 0
        if rate > 1e-15 {
            t_hi = t_hi.min(slack / rate);
        } else if rate < -1e-15 {
            t_lo = t_lo.max(slack / rate);
        }
    };
    let ad = &x.a * &d;
    let ax = &x.a * at;
    for i in 0..x.a.nrows() {
        clip(x.b[i] - ax[i], ad[i]);
    }
    for j in 0..at.len() {
        if let Some(l) = x.lb.as_ref().map(|l| l[j]).filter(|l| l.is_finite()) {
            clip(at[j] - l, -d[j]);
        }
        if let Some(u) = x.ub.as_ref().map(|u| u[j]).filter(|u| u.is_finite()) {
            clip(u - at[j], d[j]);
        }
    }
    if !(t_lo.is_finite() && t_hi.is_finite()) || t_hi <= t_lo {
        return at.clone();
    }
    let t = rng.random_range(t_lo.min(0.0)..=t_hi.max(0.0));
    let next = at + d * t;
    if x.max_violation(&next) <= FEAS_TOL {
        next
    } else {
        at.clone()
    }
}

/// Vertices of X from square active sets, when their number is small.
fn basic_vertices(x: &Polyhedron<f64>) -> Vec<DVector<f64>> {
    let n = x.dim();
    let mut rows: Vec<(DVector<f64>, f64)> = (0..x.a.nrows())
        .map(|i| (x.a.row(i).transpose(), x.b[i]))
        .collect();
    for j in 0..n {
        let mut unit = DVector::zeros(n);
        unit[j] = 1.0;
        if let Some(l) = x.lb.as_ref().map(|l| l[j]).filter(|l| l.is_finite()) {
            rows.push((-unit.clone(), -l));
        }
        if let Some(u) = x.ub.as_ref().map(|u| u[j]).filter(|u| u.is_finite()) {
            rows.push((unit, u));
        }
    }
    let need = n.saturating_sub(x.e.nrows());
    if need > rows.len() || binomial(rows.len(), need) > VERTEX_COMBINATION_CAP {
        return Vec::new();
    }
    (0..rows.len())
        .combinations(need)
        .filter_map(|active| {
            let mut m = DMatrix::zeros(n, n);
            let mut r = DVector::zeros(n);
            for (k, &i) in active.iter().enumerate() {
                m.set_row(k, &rows[i].0.transpose());
                r[k] = rows[i].1;
            }
            for q in 0..x.e.nrows() {
                m.set_row(need + q, &x.e.row(q));
                r[need + q] = x.f[q];
            }
            let v = m.lu().solve(&r)?;
            (v.iter().all(|c| c.is_finite()) && x.max_violation(&v) <= FEAS_TOL).then_some(v)
        })
        .collect()
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Projected-gradient ascent with backtracking; the projection is a concave QP.
fn polish(inst: &ProblemInstance<f64>, x0: DVector<f64>, f0: f64) -> (f64, DVector<f64>) {
    let feasible = &inst.feasible;
    let n = inst.dim();
    let opts = QpOptions::default();
    let project = |z: &DVector<f64>| -> Option<DVector<f64>> {
        let problem = ConcaveQp::new(DMatrix::identity(n, n) * -2.0, z * 2.0, feasible);
        let sol = qp::solve(&problem, Some(z), &opts);
        (feasible.max_violation(&sol.x) <= 1e-8).then_some(sol.x)
    };
    let (mut x, mut f) = (x0, f0);
    let mut step = 1.0;
    for _ in 0..POLISH_STEPS {
        let Ok(g) = inst.gradient(&x) else { break };
        let gn = g.norm();
        if gn == 0.0 {
            break;
        }
        let mut moved = false;
        while step > 1e-12 {
            let Some(y) = project(&(&x + &g * (step / gn))) else { break };
            match value(inst, &y) {
                Some(fy) if fy > f + 1e-15 * f.abs().max(1.0) => {
                    let done = fy - f <= 1e-13 * f.abs().max(1.0);
                    x = y;
                    f = fy;
                    moved = !done;
                    step *= 2.0;
                    break;
                }
                _ => step *= 0.5,
            }
        }
        if !moved {
            break;
        }
    }
    (f, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_ratio() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let inst = ProblemInstance::new(q.clone(), q, Polyhedron::simplex(2)).unwrap();
        let r = grid_oracle(&inst, 2000, 1).unwrap();
        assert_abs_diff_eq!(r.f, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn capped_segment() {
        let feasible = Polyhedron::new(DMatrix::zeros(0, 2), DVector::zeros(0))
            .with_equalities(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DVector::from_vec(vec![1.0]))
            .with_bounds(DVector::zeros(2), DVector::from_element(2, 0.6));
        let inst = ProblemInstance::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0])),
            DMatrix::identity(2, 2),
            feasible,
        )
        .unwrap();
        let r = grid_oracle(&inst, 5000, 2).unwrap();
        assert_abs_diff_eq!(r.f, 0.36 / 0.52, epsilon = 1e-9);
    }

    #[test]
    fn diagonal_on_simplex() {
        let inst = ProblemInstance::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0])),
            DMatrix::identity(2, 2),
            Polyhedron::simplex(2),
        )
        .unwrap();
        let r = grid_oracle(&inst, 5000, 3).unwrap();
        assert_abs_diff_eq!(r.f, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.x[0], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn simplex_vertices_enumerated() {
        let v = basic_vertices(&Polyhedron::simplex(3));
        assert_eq!(v.len(), 3);
    }

    #[test]
    fn empty_set_reports_error() {
        let feasible = Polyhedron::simplex(2).with_lower(DVector::from_element(2, 0.8));
        let inst = ProblemInstance::new(DMatrix::identity(2, 2), DMatrix::identity(2, 2), feasible).unwrap();
        assert!(grid_oracle(&inst, 100, 0).is_err());
    }
}
