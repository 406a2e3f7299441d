//! Concave quadratic maximization over a polyhedron.
//!
//! Solves `max 1/2 x'Hx + c'x` subject to `Ax <= b`, `Ex = f`, `l <= x <= u`
//! with `H` negative semidefinite, using a dense primal-dual interior-point
//! method with Mehrotra predictor-corrector steps. Simple bounds are kept
//! out of the dense rows so they only touch the diagonal of the Newton
//! system. An independent KKT check ([`kkt_residual`]) measures the
//! distance of the gradient to the normal cone of the active constraints.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::polyhedron::Polyhedron;

/// A concave quadratic `1/2 x'Hx + c'x` over a polyhedron.
#[derive(Clone, Debug)]
pub struct ConcaveQp<'a> {
    pub h: DMatrix<f64>,
    pub c: DVector<f64>,
    pub feasible: &'a Polyhedron<f64>,
}

impl<'a> ConcaveQp<'a> {
    pub fn new(h: DMatrix<f64>, c: DVector<f64>, feasible: &'a Polyhedron<f64>) -> Self {
        Self { h, c, feasible }
    }

    /// Linear objective `c'x`.
    pub fn linear(c: DVector<f64>, feasible: &'a Polyhedron<f64>) -> Self {
        let n = c.len();
        Self {
            h: DMatrix::zeros(n, n),
            c,
            feasible,
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.c.dot(x)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.h * x + &self.c
    }
}

#[derive(Clone, Copy, Debug)]
pub struct QpOptions {
    pub kkt_tol: f64,
    pub max_iter: usize,
    /// Violation tolerated on the starting point passed to [`maximize`].
    pub start_tol: f64,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            kkt_tol: 1e-8,
            max_iter: 200,
            start_tol: 1e-6,
        }
    }
}

impl QpOptions {
    /// Iteration cap `50 n + 2000` scaled down for the interior-point method,
    /// which needs far fewer (but more expensive) iterations than a gradient scheme.
    pub fn for_dim(n: usize, kkt_tol: f64) -> Self {
        Self {
            kkt_tol,
            max_iter: (50 * n + 2000).min(400),
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    /// Iteration cap or stalled progress; `x` is the best iterate.
    NotConverged,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub value: f64,
    pub status: QpStatus,
    pub iterations: usize,
    /// Scaled residual of the interior-point KKT system at `x`.
    pub residual: f64,
}

impl QpSolution {
    pub fn converged(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

/// Maximizes `problem` starting from the feasible point `x0`.
///
/// The returned value is never below the objective at `x0`: if the solver
/// cannot improve on the start, `x0` itself is returned.
pub fn maximize(problem: &ConcaveQp<'_>, x0: &DVector<f64>, opts: &QpOptions) -> Result<QpSolution> {
    let viol = problem.feasible.max_violation(x0);
    if viol > opts.start_tol {
        return Err(Error::InfeasibleStart(viol));
    }
    let v0 = problem.value(x0);
    let sol = solve(problem, Some(x0), opts);
    if sol.status == QpStatus::Unbounded {
        return Err(Error::Unbounded);
    }
    let feasible = problem.feasible.max_violation(&sol.x) <= opts.start_tol.max(1e-8);
    if feasible && sol.value >= v0 && sol.status != QpStatus::Infeasible {
        return Ok(sol);
    }
    Ok(QpSolution {
        x: x0.clone(),
        value: v0,
        status: if sol.status == QpStatus::Optimal {
            QpStatus::NotConverged
        } else {
            sol.status
        },
        iterations: sol.iterations,
        residual: sol.residual,
    })
}

/// Iterations without a 10% residual improvement before giving up.
const STALL_ITERS: usize = 30;

struct Rows<'a> {
    a: &'a DMatrix<f64>,
    b: &'a DVector<f64>,
    lo_idx: Vec<usize>,
    lo_val: Vec<f64>,
    up_idx: Vec<usize>,
    up_val: Vec<f64>,
}

impl<'a> Rows<'a> {
    fn new(poly: &'a Polyhedron<f64>) -> Self {
        let mut lo_idx = Vec::new();
        let mut lo_val = Vec::new();
        let mut up_idx = Vec::new();
        let mut up_val = Vec::new();
        if let Some(lb) = &poly.lb {
            for (i, &v) in lb.iter().enumerate() {
                if v.is_finite() {
                    lo_idx.push(i);
                    lo_val.push(v);
                }
            }
        }
        if let Some(ub) = &poly.ub {
            for (i, &v) in ub.iter().enumerate() {
                if v.is_finite() {
                    up_idx.push(i);
                    up_val.push(v);
                }
            }
        }
        Self {
            a: &poly.a,
            b: &poly.b,
            lo_idx,
            lo_val,
            up_idx,
            up_val,
        }
    }

    fn m(&self) -> usize {
        self.a.nrows()
    }

    fn len(&self) -> usize {
        self.a.nrows() + self.lo_idx.len() + self.up_idx.len()
    }

    /// Row values `Cx` with lower bounds written as `-x_i <= -l_i`.
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let m = self.m();
        let mut out = DVector::zeros(self.len());
        if m > 0 {
            out.rows_mut(0, m).copy_from(&(self.a * x));
        }
        let mut k = m;
        for &i in &self.lo_idx {
            out[k] = -x[i];
            k += 1;
        }
        for &i in &self.up_idx {
            out[k] = x[i];
            k += 1;
        }
        out
    }

    fn apply_t(&self, z: &DVector<f64>, n: usize) -> DVector<f64> {
        let m = self.m();
        let mut out = if m > 0 {
            self.a.tr_mul(&z.rows(0, m).into_owned())
        } else {
            DVector::zeros(n)
        };
        let mut k = m;
        for &i in &self.lo_idx {
            out[i] -= z[k];
            k += 1;
        }
        for &i in &self.up_idx {
            out[i] += z[k];
            k += 1;
        }
        out
    }

    fn rhs(&self) -> DVector<f64> {
        let m = self.m();
        let mut out = DVector::zeros(self.len());
        if m > 0 {
            out.rows_mut(0, m).copy_from(self.b);
        }
        let mut k = m;
        for &v in &self.lo_val {
            out[k] = -v;
            k += 1;
        }
        for &v in &self.up_val {
            out[k] = v;
            k += 1;
        }
        out
    }

    /// Adds `C' diag(w) C` to `k`.
    fn add_gram(&self, w: &DVector<f64>, k: &mut DMatrix<f64>) {
        let m = self.m();
        if m > 0 {
            let mut scaled = self.a.clone();
            for (r, mut row) in scaled.row_iter_mut().enumerate() {
                row *= w[r].sqrt();
            }
            k.gemm_tr(1.0, &scaled, &scaled, 1.0);
        }
        let mut idx = m;
        for &i in &self.lo_idx {
            k[(i, i)] += w[idx];
            idx += 1;
        }
        for &i in &self.up_idx {
            k[(i, i)] += w[idx];
            idx += 1;
        }
    }
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    let mut alpha = f64::INFINITY;
    for (vi, di) in v.iter().zip(dv.iter()) {
        if *di < 0.0 {
            alpha = alpha.min(-vi / di);
        }
    }
    alpha
}

struct Factor {
    chol: Option<Cholesky<f64, nalgebra::Dyn>>,
    lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    kinv_et: DMatrix<f64>,
    schur: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl Factor {
    fn new(mut k: DMatrix<f64>, e: &DMatrix<f64>) -> Option<Self> {
        let n = k.nrows();
        let scale = (0..n).fold(1.0f64, |acc, i| acc.max(k[(i, i)].abs()));
        let mut reg = 1e-13 * scale;
        for i in 0..n {
            k[(i, i)] += reg;
        }
        let mut chol = None;
        let mut lu = None;
        for _ in 0..4 {
            if let Some(c) = Cholesky::new(k.clone()) {
                chol = Some(c);
                break;
            }
            let bump = reg * 99.0;
            for i in 0..n {
                k[(i, i)] += bump;
            }
            reg *= 100.0;
        }
        if chol.is_none() {
            let l = k.clone().lu();
            if !l.is_invertible() {
                return None;
            }
            lu = Some(l);
        }
        let mut f = Self {
            chol,
            lu,
            kinv_et: DMatrix::zeros(n, e.nrows()),
            schur: None,
        };
        if e.nrows() > 0 {
            let et = e.transpose();
            f.kinv_et = f.solve_k_mat(&et)?;
            let mut s = e * &f.kinv_et;
            let sscale = (0..s.nrows()).fold(1.0f64, |acc, i| acc.max(s[(i, i)].abs()));
            for i in 0..s.nrows() {
                s[(i, i)] += 1e-13 * sscale;
            }
            let lu = s.lu();
            if !lu.is_invertible() {
                return None;
            }
            f.schur = Some(lu);
        }
        Some(f)
    }

    fn solve_k(&self, r: &DVector<f64>) -> Option<DVector<f64>> {
        if let Some(c) = &self.chol {
            Some(c.solve(r))
        } else {
            self.lu.as_ref()?.solve(r)
        }
    }

    fn solve_k_mat(&self, r: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        if let Some(c) = &self.chol {
            Some(c.solve(r))
        } else {
            self.lu.as_ref()?.solve(r)
        }
    }

    /// Solves `[K E'; E 0] [dx; dnu] = [r1; r2]`.
    fn solve(&self, e: &DMatrix<f64>, r1: &DVector<f64>, r2: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        let kr = self.solve_k(r1)?;
        if e.nrows() == 0 {
            return Some((kr, DVector::zeros(0)));
        }
        let rhs = e * &kr - r2;
        let dnu = self.schur.as_ref()?.solve(&rhs)?;
        let dx = kr - &self.kinv_et * &dnu;
        Some((dx, dnu))
    }
}

/// Runs the interior-point method; the start need not be feasible.
pub fn solve(problem: &ConcaveQp<'_>, start: Option<&DVector<f64>>, opts: &QpOptions) -> QpSolution {
    let poly = problem.feasible;
    let n = problem.c.len();
    // minimize 1/2 x'Gx + d'x
    let g = -&problem.h;
    let d = -&problem.c;
    let rows = Rows::new(poly);
    let e = &poly.e;
    let f = &poly.f;
    let p = rows.len();
    let rhs = rows.rhs();

    let mut x = start.cloned().unwrap_or_else(|| DVector::zeros(n));
    let cx = rows.apply(&x);
    let mut s = DVector::from_iterator(p, (0..p).map(|i| (rhs[i] - cx[i]).max(1.0)));
    let mut z = DVector::from_element(p, 1.0);
    let mut nu = DVector::zeros(e.nrows());

    let h_norm = inf_norm(&rhs);
    let f_norm = inf_norm(f);
    let d_norm = inf_norm(&d);
    let tol = (0.1 * opts.kkt_tol).max(1e-14);

    let mut status = QpStatus::NotConverged;
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut best_at = 0;
    let mut stalls = 0;

    for it in 0..opts.max_iter {
        iterations = it;
        let gx = &g * &x;
        let r_d = &gx + &d + rows.apply_t(&z, n) + e.tr_mul(&nu);
        let r_p = rows.apply(&x) + &s - &rhs;
        let r_e = if e.nrows() > 0 { e * &x - f } else { DVector::zeros(0) };
        let mu = if p > 0 { s.dot(&z) / p as f64 } else { 0.0 };

        let dual_scale = 1.0 + d_norm + inf_norm(&gx);
        let pres = (inf_norm(&r_p) / (1.0 + h_norm)).max(inf_norm(&r_e) / (1.0 + f_norm));
        let dres = inf_norm(&r_d) / dual_scale;
        let obj = 0.5 * x.dot(&gx) + d.dot(&x);
        let gap = mu / (1.0 + obj.abs());
        residual = pres.max(dres).max(gap);
        if pres <= 1e-6 && best.as_ref().map_or(true, |(r, _)| residual < 0.9 * *r) {
            best = Some((residual, x.clone()));
            best_at = it;
        }
        if pres <= tol && dres <= tol && gap <= tol {
            status = QpStatus::Optimal;
            break;
        }
        if it - best_at > STALL_ITERS {
            break;
        }
        if inf_norm(&x) > 1e10 {
            status = QpStatus::Unbounded;
            break;
        }
        if inf_norm(&z) > 1e12 || (inf_norm(&nu) > 1e12) {
            status = QpStatus::Infeasible;
            break;
        }

        let w = DVector::from_iterator(p, (0..p).map(|i| z[i] / s[i]));
        let mut k = g.clone();
        rows.add_gram(&w, &mut k);
        let Some(factor) = Factor::new(k, e) else {
            break;
        };

        let newton = |r_c: &DVector<f64>| -> Option<(DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>)> {
            // r1 = -r_d - C' S^{-1} (r_c + Z r_p)
            let tmp = DVector::from_iterator(p, (0..p).map(|i| (r_c[i] + z[i] * r_p[i]) / s[i]));
            let r1 = -&r_d - rows.apply_t(&tmp, n);
            let r2 = -&r_e;
            let (dx, dnu) = factor.solve(e, &r1, &r2)?;
            let ds = -&r_p - rows.apply(&dx);
            let dz = DVector::from_iterator(p, (0..p).map(|i| (r_c[i] - z[i] * ds[i]) / s[i]));
            Some((dx, ds, dz, dnu))
        };

        let r_aff = DVector::from_iterator(p, (0..p).map(|i| -s[i] * z[i]));
        let Some((_, ds_a, dz_a, _)) = newton(&r_aff) else {
            break;
        };
        let a_aff = max_step(&s, &ds_a).min(max_step(&z, &dz_a)).min(1.0);
        let sigma = if p > 0 {
            let mu_aff = (0..p)
                .map(|i| (s[i] + a_aff * ds_a[i]) * (z[i] + a_aff * dz_a[i]))
                .sum::<f64>()
                / p as f64;
            (mu_aff / mu.max(1e-300)).powi(3).min(1.0)
        } else {
            0.0
        };
        let r_c = DVector::from_iterator(p, (0..p).map(|i| -s[i] * z[i] - ds_a[i] * dz_a[i] + sigma * mu));
        let Some((dx, ds, dz, dnu)) = newton(&r_c) else {
            break;
        };
        let alpha = (0.995 * max_step(&s, &ds).min(max_step(&z, &dz))).min(1.0);
        if alpha < 1e-12 {
            stalls += 1;
            if stalls > 5 {
                break;
            }
        }
        x += alpha * dx;
        s += alpha * ds;
        z += alpha * dz;
        nu += alpha * dnu;
        for v in s.iter_mut().chain(z.iter_mut()) {
            *v = v.max(1e-300);
        }
    }

    if status == QpStatus::NotConverged {
        if let Some((r, bx)) = best {
            if r < residual {
                x = bx;
                residual = r;
            }
        }
    }
    if status == QpStatus::Optimal && p > 0 {
        if let Some(px) = purify(problem, &rows, &g, &d, &x, &s, &z) {
            x = px;
        }
    }
    let value = problem.value(&x);
    QpSolution {
        x,
        value,
        status,
        iterations,
        residual,
    }
}

/// Re-solves the equality-constrained problem on the constraints the
/// interior-point iterate identifies as active. Interior-point iterates
/// approach degenerate or flat optima only like `sqrt(mu)`; the purified
/// point is accepted when it is feasible and no worse.
fn purify(
    problem: &ConcaveQp<'_>,
    rows: &Rows<'_>,
    g: &DMatrix<f64>,
    d: &DVector<f64>,
    x: &DVector<f64>,
    s: &DVector<f64>,
    z: &DVector<f64>,
) -> Option<DVector<f64>> {
    let n = x.len();
    let e = &problem.feasible.e;
    let rhs = rows.rhs();
    let active: Vec<usize> = (0..rows.len())
        .filter(|&i| s[i] < z[i] && s[i] <= 1e-6 * (1.0 + rhs[i].abs()))
        .collect();
    let k = active.len() + e.nrows();
    let mut kkt = DMatrix::zeros(n + k, n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(g);
    let mut r = DVector::zeros(n + k);
    r.rows_mut(0, n).copy_from(&(-d));
    for (row, &i) in active.iter().enumerate() {
        let mut unit = DVector::zeros(rows.len());
        unit[i] = 1.0;
        let c = rows.apply_t(&unit, n);
        for j in 0..n {
            kkt[(n + row, j)] = c[j];
            kkt[(j, n + row)] = c[j];
        }
        r[n + row] = rhs[i];
    }
    for q in 0..e.nrows() {
        let row = active.len() + q;
        for j in 0..n {
            kkt[(n + row, j)] = e[(q, j)];
            kkt[(j, n + row)] = e[(q, j)];
        }
        r[n + row] = problem.feasible.f[q];
    }
    // LU handles the usual nonsingular system; SVD covers dependent active rows
    let accept = |sol: &DVector<f64>| purified(problem, rows, g, d, x, &active, sol);
    let lu = kkt.clone().lu().solve(&r).filter(|sol| (&kkt * sol - &r).amax() <= 1e-10 * (1.0 + r.amax()));
    match lu {
        Some(sol) => accept(&sol),
        None => accept(&kkt.svd(true, true).solve(&r, 1e-12).ok()?),
    }
}

/// Validates a KKT solution from [`purify`] and returns its primal part.
fn purified(
    problem: &ConcaveQp<'_>,
    rows: &Rows<'_>,
    g: &DMatrix<f64>,
    d: &DVector<f64>,
    x: &DVector<f64>,
    active: &[usize],
    sol: &DVector<f64>,
) -> Option<DVector<f64>> {
    let n = x.len();
    let e = &problem.feasible.e;
    let rhs = rows.rhs();
    let px = sol.rows(0, n).into_owned();
    // multipliers of active inequalities must be nonnegative
    let dual_ok = (0..active.len()).all(|row| sol[n + row] >= -1e-9 * (1.0 + d.amax()));
    let feas = problem.feasible.max_violation(&px) <= 1e-12 * (1.0 + rhs.amax());
    let stationary = {
        let mut res = g * &px + d;
        for (row, &i) in active.iter().enumerate() {
            let mut unit = DVector::zeros(rows.len());
            unit[i] = 1.0;
            res += rows.apply_t(&unit, n) * sol[n + row];
        }
        if e.nrows() > 0 {
            res += e.tr_mul(&sol.rows(n + active.len(), e.nrows()).into_owned());
        }
        res.amax() <= 1e-9 * (1.0 + d.amax() + (g * &px).amax())
    };
    if dual_ok && feas && stationary && problem.value(&px) >= problem.value(x) - 1e-12 * (1.0 + problem.value(x).abs()) {
        Some(px)
    } else {
        None
    }
}

/// Distance of the objective gradient at `x` to the normal cone of the
/// constraints active within `active_tol`, i.e. the norm of the gradient's
/// projection onto the cone of feasible directions.
pub fn kkt_residual(problem: &ConcaveQp<'_>, x: &DVector<f64>, active_tol: f64) -> f64 {
    let poly = problem.feasible;
    let n = x.len();
    let grad = problem.gradient(x);
    let rows = Rows::new(poly);
    let vals = rows.apply(x);
    let rhs = rows.rhs();
    let mut active: Vec<DVector<f64>> = Vec::new();
    for k in 0..rows.len() {
        if rhs[k] - vals[k] <= active_tol * (1.0 + rhs[k].abs()) {
            let mut unit = DVector::zeros(rows.len());
            unit[k] = 1.0;
            active.push(rows.apply_t(&unit, n));
        }
    }
    // remove the equality span
    let basis = crate::linalg::null_space(&poly.e, n);
    let proj = |v: &DVector<f64>| &basis * basis.tr_mul(v);
    let g = proj(&grad);
    if active.is_empty() {
        return g.norm();
    }
    let mut cmat = DMatrix::zeros(n, active.len());
    for (j, c) in active.iter().enumerate() {
        cmat.set_column(j, &proj(c));
    }
    let coef = nnls(&cmat, &g, 500);
    (g - cmat * coef).norm()
}

/// Lawson-Hanson nonnegative least squares `min ||Az - b||, z >= 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>, max_iter: usize) -> DVector<f64> {
    let m = a.ncols();
    let mut z = DVector::zeros(m);
    let mut passive = vec![false; m];
    let tol = 1e-12 * (1.0 + a.norm() * b.norm());
    for _ in 0..max_iter {
        let w = a.tr_mul(&(b - a * &z));
        let cand = (0..m)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = cand else { break };
        if w[j] <= tol {
            break;
        }
        passive[j] = true;
        loop {
            let idx: Vec<usize> = (0..m).filter(|&j| passive[j]).collect();
            let sub = a.select_columns(&idx);
            let sol = sub
                .clone()
                .svd(true, true)
                .solve(b, 1e-12)
                .unwrap_or_else(|_| DVector::zeros(idx.len()));
            if sol.iter().all(|&v| v > 0.0) {
                z.fill(0.0);
                for (k, &j) in idx.iter().enumerate() {
                    z[j] = sol[k];
                }
                break;
            }
            let mut alpha = 1.0f64;
            for (k, &j) in idx.iter().enumerate() {
                if sol[k] <= 0.0 {
                    let denom = z[j] - sol[k];
                    if denom > 0.0 {
                        alpha = alpha.min(z[j] / denom);
                    }
                }
            }
            for (k, &j) in idx.iter().enumerate() {
                z[j] += alpha * (sol[k] - z[j]);
                if z[j] <= 1e-15 {
                    z[j] = 0.0;
                    passive[j] = false;
                }
            }
            if idx.iter().all(|&j| !passive[j]) {
                break;
            }
        }
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_box(n: usize) -> Polyhedron<f64> {
        Polyhedron::unconstrained(n).with_bounds(DVector::zeros(n), DVector::from_element(n, 1.0))
    }

    fn segment() -> Polyhedron<f64> {
        // x1 + x2 = 1, 0 <= x <= 1
        unit_box(2).with_equalities(
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_vec(vec![1.0]),
        )
    }

    #[test]
    fn box_projection_of_outside_maximizer() {
        let poly = unit_box(2);
        // -||x - (2,2)||^2 = -x'x + 4 1'x - 8
        let qp = ConcaveQp::new(
            DMatrix::identity(2, 2) * -2.0,
            DVector::from_vec(vec![4.0, 4.0]),
            &poly,
        );
        let sol = maximize(&qp, &DVector::from_vec(vec![0.5, 0.5]), &QpOptions::default()).unwrap();
        assert!(sol.converged());
        assert_relative_eq!(sol.x, DVector::from_vec(vec![1.0, 1.0]), epsilon = 1e-7);
        assert!(kkt_residual(&qp, &sol.x, 1e-7) <= 1e-8);
    }

    #[test]
    fn segment_vertex_maximizer() {
        // 2 x1 - ||x||^2 on the segment; t = x1 gives 4t - 2t^2 - 1, max at t = 1
        let poly = segment();
        let qp = ConcaveQp::new(
            DMatrix::identity(2, 2) * -2.0,
            DVector::from_vec(vec![2.0, 0.0]),
            &poly,
        );
        let sol = maximize(&qp, &DVector::from_vec(vec![0.5, 0.5]), &QpOptions::default()).unwrap();
        assert_relative_eq!(sol.x, DVector::from_vec(vec![1.0, 0.0]), epsilon = 1e-7);
        assert_relative_eq!(sol.value, 1.0, epsilon = 1e-8);
        assert!(kkt_residual(&qp, &sol.x, 1e-7) <= 1e-8);
    }

    #[test]
    fn linear_objective_on_simplex() {
        let poly = Polyhedron::simplex(2);
        let qp = ConcaveQp::linear(DVector::from_vec(vec![1.0, 0.0]), &poly);
        let sol = maximize(&qp, &DVector::from_vec(vec![0.5, 0.5]), &QpOptions::default()).unwrap();
        assert_relative_eq!(sol.x, DVector::from_vec(vec![1.0, 0.0]), epsilon = 1e-7);
        assert_relative_eq!(sol.value, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn infeasible_start_rejected() {
        let poly = unit_box(2);
        let qp = ConcaveQp::linear(DVector::from_vec(vec![1.0, 0.0]), &poly);
        let r = maximize(&qp, &DVector::from_vec(vec![2.0, 0.0]), &QpOptions::default());
        assert!(matches!(r, Err(Error::InfeasibleStart(_))));
    }

    #[test]
    fn detects_infeasible_polyhedron() {
        // x1 <= -1 and x1 >= 0
        let poly = Polyhedron::new(
            DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            DVector::from_vec(vec![-1.0, 0.0]),
        );
        let qp = ConcaveQp::new(DMatrix::identity(1, 1) * -1.0, DVector::zeros(1), &poly);
        let sol = solve(&qp, None, &QpOptions::default());
        assert_ne!(sol.status, QpStatus::Optimal);
    }

    #[test]
    fn general_rows_and_equalities() {
        // max -(x-3)^2 - (y-3)^2 s.t. x + 2y <= 4, x - y = 0
        let poly = Polyhedron::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 2.0]),
            DVector::from_vec(vec![4.0]),
        )
        .with_equalities(
            DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
            DVector::from_vec(vec![0.0]),
        );
        let qp = ConcaveQp::new(
            DMatrix::identity(2, 2) * -2.0,
            DVector::from_vec(vec![6.0, 6.0]),
            &poly,
        );
        let sol = maximize(&qp, &DVector::zeros(2), &QpOptions::default()).unwrap();
        let t = 4.0 / 3.0;
        assert_relative_eq!(sol.x, DVector::from_vec(vec![t, t]), epsilon = 1e-7);
        assert!(kkt_residual(&qp, &sol.x, 1e-7) <= 1e-8);
    }

    #[test]
    fn nnls_recovers_nonnegative_combination() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![2.0, -1.0]);
        let z = nnls(&a, &b, 100);
        assert_relative_eq!(z, DVector::from_vec(vec![2.0, 0.0]), epsilon = 1e-12);
    }
}
