//! Global maximization of the indefinite quadratic `x'(Q - lambda P)x` over
//! a polyhedron.
//!
//! `Q - lambda P` splits into a concave part and at most `rank(Q)` convex
//! rank-one terms `<w_j, x>^2`. Each convex term is bounded above by its
//! secant on an interval `[L_j, U_j]` of `<w_j, x>`, which turns the node
//! relaxation into a concave QP. Branching bisects those intervals, so the
//! tree lives in a space of dimension `rank(Q)` rather than `n`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{quad_form, ProblemInstance, SolverConfig};
use crate::polyhedron::Polyhedron;
use crate::qp::{self, ConcaveQp, QpOptions, QpStatus};

/// Largest interior-point residual whose value still serves as a node bound.
const NEAR_CONVERGED: f64 = 1e-6;

/// When the search may stop before closing the tree.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EarlyStop {
    /// Solve to the configured gap.
    Never,
    /// Only decide which side of the threshold the maximum lies on: stop at
    /// the first incumbent reaching it and discard nodes that cannot.
    Threshold(f64),
}

#[derive(Clone, Debug)]
pub struct BbOptions {
    pub bb_gap: f64,
    pub max_nodes: usize,
    pub kkt_tol: f64,
    /// Re-tighten every interval by linear programs at each child node.
    pub tighten_nodes: bool,
    pub stop: EarlyStop,
}

impl BbOptions {
    pub fn from_config(config: &SolverConfig) -> Self {
        Self {
            bb_gap: config.bb_gap,
            max_nodes: config.max_bb_nodes,
            kkt_tol: config.kkt_tol,
            tighten_nodes: config.per_node_relaxation,
            stop: EarlyStop::Never,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PiSolution {
    /// Best value found, attained at `x`.
    pub value: f64,
    pub x: DVector<f64>,
    /// Global upper bound on the maximum.
    pub upper: f64,
    pub nodes: usize,
    /// The node budget ran out before the gap closed.
    pub exhausted: bool,
}

impl PiSolution {
    pub fn gap(&self) -> f64 {
        (self.upper - self.value).max(0.0)
    }
}

struct Split {
    /// Concave remainder, doubled for the `1/2 x'Hx` convention.
    h: DMatrix<f64>,
    /// Rows `w_j'`.
    w: DMatrix<f64>,
    m: DMatrix<f64>,
}

fn split(m: DMatrix<f64>) -> Split {
    let n = m.nrows();
    let (vals, vecs) = linalg::sym_eigen(&m);
    let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let cut = 1e-12 * scale;
    let pos: Vec<usize> = (0..n).filter(|&k| vals[k] > cut).collect();
    let mut w = DMatrix::zeros(pos.len(), n);
    for (r, &k) in pos.iter().enumerate() {
        w.set_row(r, &(vecs.column(k) * vals[k].sqrt()).transpose());
    }
    let mut h = DMatrix::zeros(n, n);
    for k in 0..n {
        if vals[k] < 0.0 {
            let v = vecs.column(k);
            h += v * v.transpose() * (2.0 * vals[k]);
        }
    }
    Split { h, w, m }
}

struct Node {
    lo: Vec<f64>,
    hi: Vec<f64>,
    bound: f64,
    x: DVector<f64>,
}

struct Tree<'a> {
    x: &'a Polyhedron<f64>,
    sp: Split,
    qp_opts: QpOptions,
}

impl<'a> Tree<'a> {
    fn value(&self, x: &DVector<f64>) -> f64 {
        quad_form(&self.sp.m, x)
    }

    fn node_polyhedron(&self, lo: &[f64], hi: &[f64]) -> Polyhedron<f64> {
        let k = lo.len();
        if k == 0 {
            return self.x.clone();
        }
        let n = self.x.dim();
        let mut a = DMatrix::zeros(2 * k, n);
        let mut b = DVector::zeros(2 * k);
        for j in 0..k {
            a.set_row(2 * j, &self.sp.w.row(j));
            b[2 * j] = hi[j];
            a.set_row(2 * j + 1, &(-self.sp.w.row(j)));
            b[2 * j + 1] = -lo[j];
        }
        self.x.with_rows(&a, &b)
    }

    /// Range of each `<w_j, x>` over `poly`.
    fn ranges(&self, poly: &Polyhedron<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
        let k = self.sp.w.nrows();
        let mut lo = vec![0.0; k];
        let mut hi = vec![0.0; k];
        for j in 0..k {
            let w = self.sp.w.row(j).transpose();
            hi[j] = poly.linear_max(&w)?;
            lo[j] = -poly.linear_max(&(-w))?;
        }
        Ok((lo, hi))
    }

    /// Upper bound and relaxation maximizer, `None` if the node is empty.
    fn relax(&self, lo: &[f64], hi: &[f64], warm: Option<&DVector<f64>>) -> Option<(f64, DVector<f64>)> {
        let poly = self.node_polyhedron(lo, hi);
        let n = self.x.dim();
        let mut c = DVector::zeros(n);
        let mut constant = 0.0;
        for j in 0..lo.len() {
            c += self.sp.w.row(j).transpose() * (lo[j] + hi[j]);
            constant -= lo[j] * hi[j];
        }
        let problem = ConcaveQp::new(self.sp.h.clone(), c, &poly);
        let sol = qp::solve(&problem, warm, &self.qp_opts);
        match sol.status {
            QpStatus::Optimal => {
                let v = sol.value + constant;
                Some((v + 1e-9 * (1.0 + v.abs()), sol.x))
            }
            QpStatus::Unbounded => None,
            // stalled just short of the tolerance on an ill-conditioned node
            QpStatus::NotConverged if sol.residual <= NEAR_CONVERGED && poly.max_violation(&sol.x) <= 1e-9 => {
                let v = sol.value + constant;
                Some((v + (1e-9 + 10.0 * sol.residual) * (1.0 + v.abs()), sol.x))
            }
            QpStatus::Infeasible | QpStatus::NotConverged => match poly.max_min_slack() {
                Some((x, slack)) if slack >= -1e-9 => {
                    // the concave part is nonpositive, so this bound holds without the QP
                    let loose = (0..lo.len()).map(|j| lo[j].powi(2).max(hi[j].powi(2))).sum::<f64>();
                    Some((loose, x))
                }
                _ => None,
            },
        }
    }

    /// Concave-convex ascent: linearize the convex terms at the current point.
    fn polish(&self, x0: &DVector<f64>) -> (f64, DVector<f64>) {
        let mut x = x0.clone();
        let mut v = self.value(&x);
        if self.sp.w.nrows() == 0 || self.x.max_violation(&x) > self.qp_opts.start_tol {
            return (v, x);
        }
        for _ in 0..30 {
            let y = &self.sp.w * &x;
            let c = self.sp.w.tr_mul(&y) * 2.0;
            let problem = ConcaveQp::new(self.sp.h.clone(), c, self.x);
            let Ok(sol) = qp::maximize(&problem, &x, &self.qp_opts) else {
                break;
            };
            let nv = self.value(&sol.x);
            if nv <= v + 1e-12 * (1.0 + v.abs()) {
                break;
            }
            x = sol.x;
            v = nv;
        }
        (v, x)
    }
}

/// `max x'(Q - lambda P)x` over the feasible set.
pub fn solve_pi(inst: &ProblemInstance<f64>, lambda: f64, config: &SolverConfig) -> Result<PiSolution> {
    maximize_indefinite(
        &(&inst.q - &inst.p * lambda),
        &inst.feasible,
        &BbOptions::from_config(config),
        None,
    )
}

/// A feasible `x` with `x'(Q - lambda P)x >= delta`, or `None` when the
/// tree closes below `delta`.
pub fn improvement_exists(
    inst: &ProblemInstance<f64>,
    lambda: f64,
    delta: f64,
    config: &SolverConfig,
    hint: Option<&DVector<f64>>,
) -> Result<Option<DVector<f64>>> {
    let opts = BbOptions {
        stop: EarlyStop::Threshold(delta),
        ..BbOptions::from_config(config)
    };
    let sol = maximize_indefinite(&(&inst.q - &inst.p * lambda), &inst.feasible, &opts, hint)?;
    if sol.value >= delta {
        Ok(Some(sol.x))
    } else if sol.exhausted {
        Err(Error::Solver(format!(
            "node budget exhausted with upper bound {:e} above {delta:e}",
            sol.upper
        )))
    } else {
        Ok(None)
    }
}

/// Branch-and-bound for `max x'Mx` over `feasible`; `m` is symmetrized.
pub fn maximize_indefinite(
    m: &DMatrix<f64>,
    feasible: &Polyhedron<f64>,
    opts: &BbOptions,
    hint: Option<&DVector<f64>>,
) -> Result<PiSolution> {
    let n = feasible.dim();
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::Dimension(format!("M is {}x{}, X has dimension {n}", m.nrows(), m.ncols())));
    }
    let tree = Tree {
        x: feasible,
        sp: split(linalg::symmetrize(m)),
        qp_opts: QpOptions::for_dim(n, opts.kkt_tol),
    };
    let gap = opts.bb_gap;
    let (lo, hi) = tree.ranges(feasible)?;
    let Some((bound, x_root)) = tree.relax(&lo, &hi, None) else {
        return Err(Error::Infeasible);
    };

    let (mut best, mut best_x) = tree.polish(&x_root);
    if let Some(h) = hint {
        if feasible.max_violation(h) <= tree.qp_opts.start_tol {
            let (v, x) = tree.polish(h);
            if v > best {
                best = v;
                best_x = x;
            }
        }
    }

    let threshold = match opts.stop {
        EarlyStop::Threshold(t) => Some(t),
        EarlyStop::Never => None,
    };
    let root_width: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| h - l).collect();
    let mut stack = vec![Node { lo, hi, bound, x: x_root }];
    // bounds of nodes dropped without being resolved
    let mut dropped = f64::NEG_INFINITY;
    // largest bound pruned against the incumbent or the threshold
    let mut pruned = f64::NEG_INFINITY;
    let mut nodes = 1usize;
    let mut exhausted = false;

    while let Some(node) = stack.pop() {
        if threshold.is_some_and(|t| best >= t) {
            break;
        }
        if node.bound <= best + gap || threshold.is_some_and(|t| node.bound < t) {
            pruned = pruned.max(node.bound);
            continue;
        }
        let y = &tree.sp.w * &node.x;
        let k = node.lo.len();
        let pick = (0..k)
            .map(|j| (j, (node.hi[j] - y[j]).max(0.0) * (y[j] - node.lo[j]).max(0.0), node.hi[j] - node.lo[j]))
            .filter(|&(j, _, width)| width > 1e-9 * root_width[j])
            .max_by(|a, b| a.1.total_cmp(&b.1));
        let Some((j, err, width)) = pick else {
            dropped = dropped.max(node.bound);
            continue;
        };
        if err <= 1e-14 {
            // relaxation is tight at its maximizer but the bound is not
            dropped = dropped.max(node.bound);
            continue;
        }
        if nodes + 2 > opts.max_nodes {
            exhausted = true;
            stack.push(node);
            break;
        }
        let cut = y[j].clamp(node.lo[j] + 0.25 * width, node.hi[j] - 0.25 * width);
        let mut children = Vec::with_capacity(2);
        for side in 0..2 {
            let mut lo = node.lo.clone();
            let mut hi = node.hi.clone();
            if side == 0 {
                hi[j] = cut;
            } else {
                lo[j] = cut;
            }
            if opts.tighten_nodes {
                let poly = tree.node_polyhedron(&lo, &hi);
                match tree.ranges(&poly) {
                    Ok((l, h)) => {
                        for t in 0..k {
                            lo[t] = lo[t].max(l[t]);
                            hi[t] = hi[t].min(h[t]).max(lo[t]);
                        }
                    }
                    Err(_) => continue,
                }
            }
            nodes += 1;
            let Some((bound, x)) = tree.relax(&lo, &hi, Some(&node.x)) else {
                continue;
            };
            let bound = bound.min(node.bound);
            let v = tree.value(&x);
            if v > best + gap && tree.x.max_violation(&x) <= 1e-7 {
                let (pv, px) = tree.polish(&x);
                if pv > best {
                    best = pv;
                    best_x = px;
                }
            }
            children.push(Node { lo, hi, bound, x });
        }
        children.sort_by(|a, b| a.bound.total_cmp(&b.bound));
        stack.extend(children);
    }

    let open = stack.iter().map(|s| s.bound).fold(f64::NEG_INFINITY, f64::max);
    let upper = open.max(dropped).max(pruned).max(best).min(bound);
    Ok(PiSolution {
        value: best,
        x: best_x,
        upper: upper.max(best),
        nodes,
        exhausted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn simplex_instance(q: DMatrix<f64>, p: DMatrix<f64>) -> ProblemInstance<f64> {
        let n = q.nrows();
        ProblemInstance::new(q, p, Polyhedron::simplex(n)).unwrap()
    }

    #[test]
    fn identity_on_simplex() {
        let inst = simplex_instance(DMatrix::identity(2, 2), DMatrix::identity(2, 2));
        let cfg = SolverConfig::default();
        let at0 = solve_pi(&inst, 0.0, &cfg).unwrap();
        assert_abs_diff_eq!(at0.value, 1.0, epsilon = 1e-6);
        assert!(at0.x.iter().any(|&v| (v - 1.0).abs() < 1e-5));
        let at2 = solve_pi(&inst, 2.0, &cfg).unwrap();
        assert_abs_diff_eq!(at2.value, -0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(at2.x[0], 0.5, epsilon = 1e-4);
        assert!(at2.gap() <= cfg.bb_gap + 1e-8);
    }

    #[test]
    fn equal_matrices_give_zero_at_one() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let inst = simplex_instance(q.clone(), q);
        let sol = solve_pi(&inst, 1.0, &SolverConfig::default()).unwrap();
        assert!(sol.value.abs() <= 1e-6 && sol.upper <= 1e-6);
    }

    #[test]
    fn improvement_examples() {
        let cfg = SolverConfig::default();
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        assert!(improvement_exists(&simplex_instance(q.clone(), q), 1.0, 1e-3, &cfg, None)
            .unwrap()
            .is_none());
        let inst = simplex_instance(
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0])),
            DMatrix::identity(2, 2),
        );
        let x = improvement_exists(&inst, 0.4, 0.1, &cfg, None).unwrap().unwrap();
        assert!(quad_form(&(&inst.q - &inst.p * 0.4), &x) >= 0.1);
        let above = inst.rayleigh_bound().unwrap() + 0.1;
        assert!(improvement_exists(&inst, above, 1e-9, &cfg, None).unwrap().is_none());
    }

    #[test]
    fn matches_grid_on_random_boxes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = SolverConfig::default();
        for _ in 0..10 {
            let g = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
            let m = linalg::symmetrize(&(&g + g.transpose()));
            let poly = Polyhedron::new(DMatrix::zeros(0, 2), DVector::zeros(0))
                .with_bounds(DVector::from_element(2, -1.0), DVector::from_element(2, 1.0));
            let sol = maximize_indefinite(&m, &poly, &BbOptions::from_config(&cfg), None).unwrap();
            let steps = 400;
            let mut grid = f64::NEG_INFINITY;
            for i in 0..=steps {
                for j in 0..=steps {
                    let x = DVector::from_vec(vec![
                        -1.0 + 2.0 * i as f64 / steps as f64,
                        -1.0 + 2.0 * j as f64 / steps as f64,
                    ]);
                    grid = grid.max(quad_form(&m, &x));
                }
            }
            assert!(sol.value >= grid - 1e-6, "{} < grid {}", sol.value, grid);
            assert!(sol.value <= grid + 0.05, "{} vs grid {}", sol.value, grid);
            assert!(poly.max_violation(&sol.x) <= 1e-7);
        }
    }

    #[test]
    fn empty_set_is_an_error() {
        let poly = Polyhedron::new(DMatrix::zeros(0, 1), DVector::zeros(0))
            .with_bounds(DVector::from_element(1, 1.0), DVector::from_element(1, 0.0));
        let r = maximize_indefinite(&DMatrix::identity(1, 1), &poly, &BbOptions::from_config(&SolverConfig::default()), None);
        assert!(matches!(r, Err(Error::Infeasible)));
    }
}
