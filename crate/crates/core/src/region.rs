//! Region-checking solvers.
//!
//! The feasible set is cut into the sign regions of the factors `<q_m, x>`.
//! [`solve_fast`] runs one quadratic-transform ascent per region;
//! [`solve_exact`] follows each run with a Dinkelbach check `pi(F(x*)) < eps`
//! and restarts from `x(lambda)` when the check fails. [`solve_rank_one`]
//! handles `Q = qq'` by Dinkelbach on the concave-convex ratio
//! `sigma <q, x> / sqrt(x'Px)` in each of the two regions.

use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::decomposition::{self, is_totally_nonnegative};
use crate::dinkelbach;
use crate::error::{Error, Result};
use crate::model::{
    quad_form, Algorithm, DecompMode, ProblemInstance, RegionTrace, SolveOutcome, SolveStatus, SolverConfig,
};
use crate::nonconvex::{self, BbOptions, EarlyStop};
use crate::polyhedron::{enumerate_nonempty_regions, NonemptyRegion, Region, SignPattern};
use crate::qp::{self, ConcaveQp, QpOptions};
use crate::shen_yu;

type Inst = ProblemInstance<f64>;

struct RegionRun {
    trace: RegionTrace,
    x: DVector<f64>,
    f: f64,
    lambdas: Vec<(f64, f64)>,
    error: Option<String>,
}

/// Nonempty regions of the configured decomposition. When no region has
/// an interior, the closed region holding a feasible point of X stands in.
fn regions(inst: &Inst, vectors: &[DVector<f64>], config: &SolverConfig) -> Result<Vec<NonemptyRegion>> {
    let scan = enumerate_nonempty_regions(
        &inst.feasible,
        vectors,
        config.delta_feas,
        config.max_rank,
        config.parallel,
    )?;
    if !scan.regions.is_empty() {
        return Ok(scan.regions);
    }
    let interior = inst.feasible.find_interior_point(config.delta_feas);
    let Some(x) = interior.feasible_point() else {
        return Err(Error::Infeasible);
    };
    let pattern = SignPattern::of_point(vectors, x);
    Ok(vec![NonemptyRegion {
        region: Region::new(&inst.feasible, vectors, pattern),
        interior: x.clone(),
        slack: 0.0,
    }])
}

fn map_regions<F>(list: &[NonemptyRegion], parallel: bool, f: F) -> Vec<RegionRun>
where
    F: Fn(&NonemptyRegion) -> RegionRun + Sync + Send,
{
    if parallel {
        list.par_iter().map(f).collect()
    } else {
        list.iter().map(f).collect()
    }
}

fn failed(pattern: SignPattern, x: &DVector<f64>, why: String) -> RegionRun {
    RegionRun {
        trace: RegionTrace {
            pattern,
            iterations: 0,
            dinkelbach_rounds: 0,
            value: f64::NEG_INFINITY,
            round_values: Vec::new(),
            certified: false,
        },
        x: x.clone(),
        f: f64::NEG_INFINITY,
        lambdas: Vec::new(),
        error: Some(why),
    }
}

/// Best region first in enumeration order; certified status needs one certificate.
fn assemble(inst: &Inst, runs: Vec<RegionRun>, start: Instant, exact: bool) -> SolveOutcome {
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut diagnostics = Vec::new();
    let mut lambda_trace = Vec::new();
    let mut certified = true;
    let mut rounds = 0;
    let mut iters = 0;
    let mut per_region = Vec::with_capacity(runs.len());
    for run in runs {
        if let Some(e) = &run.error {
            diagnostics.push(format!("region {}: {e}", run.trace.pattern));
        }
        if run.f.is_finite() && best.as_ref().is_none_or(|(f, _)| run.f > *f + 1e-9) {
            best = Some((run.f, run.x.clone()));
        }
        certified &= run.trace.certified;
        rounds += run.trace.dinkelbach_rounds;
        iters += run.trace.iterations;
        lambda_trace.extend(run.lambdas);
        per_region.push(run.trace);
    }
    let regions_checked = per_region.len();
    let Some((f_star, x_star)) = best else {
        let mut out = SolveOutcome::infeasible(inst.dim(), start.elapsed(), "no region produced a point");
        out.diagnostics.extend(diagnostics);
        out.status = SolveStatus::StationaryOnly;
        out.per_region = per_region;
        return out;
    };
    let status = if exact && certified && regions_checked > 0 {
        SolveStatus::GlobalVerified
    } else {
        SolveStatus::StationaryOnly
    };
    SolveOutcome {
        x_star,
        f_star,
        status,
        regions_checked,
        per_region,
        lambda_trace,
        dinkelbach_rounds: rounds,
        sy_iterations: iters,
        wall_time: start.elapsed(),
        diagnostics,
    }
}

fn vectors_for(inst: &Inst, config: &SolverConfig) -> Result<Vec<DVector<f64>>> {
    Ok(decomposition::decompose(inst, config.decomp_mode, config.rank_tol)?.vectors)
}

/// Number of rank-one terms the default decomposition finds for `Q`.
pub fn numerator_rank(inst: &Inst) -> Result<usize> {
    Ok(vectors_for(inst, &SolverConfig::default())?.len())
}

/// One transform run per nonempty region.
pub fn solve_fast(inst: &Inst, config: &SolverConfig) -> Result<SolveOutcome> {
    let start = Instant::now();
    config.validate()?;
    let vectors = vectors_for(inst, config)?;
    let list = match regions(inst, &vectors, config) {
        Err(Error::Infeasible) => return Ok(SolveOutcome::infeasible(inst.dim(), start.elapsed(), "X is empty")),
        other => other?,
    };
    let runs = map_regions(&list, config.parallel, |nr| {
        match shen_yu::iterate(inst, &vectors, &nr.region, &nr.interior, config) {
            Ok(run) => {
                let f = inst.objective(&run.x).unwrap_or(run.f);
                RegionRun {
                    trace: RegionTrace {
                        pattern: nr.region.pattern.clone(),
                        iterations: run.iterations,
                        dinkelbach_rounds: 1,
                        value: f,
                        round_values: vec![f],
                        certified: false,
                    },
                    x: run.x,
                    f,
                    lambdas: Vec::new(),
                    error: (!run.converged).then(|| "iteration cap reached".to_string()),
                }
            }
            Err(e) => failed(nr.region.pattern.clone(), &nr.interior, e.to_string()),
        }
    });
    Ok(assemble(inst, runs, start, false))
}

/// Transform runs in each region, certified by the region's own
/// `pi(F(x*)) < eps` and restarted from `x(lambda)` when the check fails.
pub fn solve_exact(inst: &Inst, config: &SolverConfig) -> Result<SolveOutcome> {
    let start = Instant::now();
    config.validate()?;
    let vectors = vectors_for(inst, config)?;
    let list = match regions(inst, &vectors, config) {
        Err(Error::Infeasible) => return Ok(SolveOutcome::infeasible(inst.dim(), start.elapsed(), "X is empty")),
        other => other?,
    };
    let runs = map_regions(&list, config.parallel, |nr| exact_region(inst, &vectors, nr, config));
    Ok(assemble(inst, runs, start, true))
}

fn exact_region(
    inst: &Inst,
    vectors: &[DVector<f64>],
    nr: &NonemptyRegion,
    config: &SolverConfig,
) -> RegionRun {
    let bb = BbOptions {
        stop: EarlyStop::Threshold(config.eps),
        ..BbOptions::from_config(config)
    };
    let region = &nr.region;
    let mut x = nr.interior.clone();
    let mut out = RegionRun {
        trace: RegionTrace {
            pattern: nr.region.pattern.clone(),
            iterations: 0,
            dinkelbach_rounds: 0,
            value: f64::NEG_INFINITY,
            round_values: Vec::new(),
            certified: false,
        },
        x: x.clone(),
        f: f64::NEG_INFINITY,
        lambdas: Vec::new(),
        error: None,
    };
    for _ in 0..config.max_dinkelbach_rounds {
        let run = match shen_yu::iterate(inst, vectors, region, &x, config) {
            Ok(r) => r,
            Err(e) => {
                out.error = Some(e.to_string());
                return out;
            }
        };
        out.trace.dinkelbach_rounds += 1;
        out.trace.iterations += run.iterations;
        let lambda = match inst.objective(&run.x) {
            Ok(v) => v,
            Err(e) => {
                out.error = Some(e.to_string());
                return out;
            }
        };
        out.trace.round_values.push(lambda);
        if lambda > out.f {
            out.f = lambda;
            out.x = run.x.clone();
            out.trace.value = lambda;
        }
        let m = &inst.q - &inst.p * lambda;
        let pi = match nonconvex::maximize_indefinite(&m, &region.polyhedron, &bb, Some(&run.x)) {
            Ok(p) => p,
            Err(e) => {
                out.error = Some(e.to_string());
                return out;
            }
        };
        out.lambdas.push((lambda, pi.value));
        if pi.upper < config.eps {
            out.trace.certified = true;
            return out;
        }
        if pi.value < config.eps {
            out.error = Some(format!("pi({lambda}) undecided: bounds [{:e}, {:e}]", pi.value, pi.upper));
            return out;
        }
        // x(lambda) has F > lambda in this region; restart from it
        x = pi.x;
        if let Ok(f) = inst.objective(&x) {
            if f > out.f {
                out.f = f;
                out.x = x.clone();
                out.trace.value = f;
            }
        }
    }
    out.error = Some(format!("round cap {} reached", config.max_dinkelbach_rounds));
    out
}

/// `Q = qq'`: Dinkelbach on `sigma <q, x> / sqrt(x'Px)` in both regions.
pub fn solve_rank_one(inst: &Inst, config: &SolverConfig) -> Result<SolveOutcome> {
    let start = Instant::now();
    config.validate()?;
    let vectors = vectors_for(inst, config)?;
    if vectors.len() != 1 {
        return Err(Error::Config(format!(
            "rank-one path needs a rank-one numerator, decomposition has {} factors",
            vectors.len()
        )));
    }
    let list = match regions(inst, &vectors, config) {
        Err(Error::Infeasible) => return Ok(SolveOutcome::infeasible(inst.dim(), start.elapsed(), "X is empty")),
        other => other?,
    };
    let q = &vectors[0];
    let runs = map_regions(&list, config.parallel, |nr| {
        let sigma = nr.region.pattern.sign(0);
        match sqrt_ratio_dinkelbach(inst, q, sigma, &nr.region, &nr.interior, config) {
            Ok((x, ratio, rounds, lambdas)) => {
                let f = inst.objective(&x).unwrap_or(ratio * ratio);
                RegionRun {
                    trace: RegionTrace {
                        pattern: nr.region.pattern.clone(),
                        iterations: 0,
                        dinkelbach_rounds: rounds,
                        value: f,
                        round_values: vec![f],
                        certified: true,
                    },
                    x,
                    f,
                    lambdas,
                    error: None,
                }
            }
            Err(e) => failed(nr.region.pattern.clone(), &nr.interior, e.to_string()),
        }
    });
    Ok(assemble(inst, runs, start, true))
}

/// Dinkelbach iteration on a concave-convex ratio; returns the maximizer,
/// the ratio, the number of rounds and the `(lambda, pi)` trace.
fn sqrt_ratio_dinkelbach(
    inst: &Inst,
    q: &DVector<f64>,
    sigma: f64,
    region: &Region,
    x0: &DVector<f64>,
    config: &SolverConfig,
) -> Result<(DVector<f64>, f64, usize, Vec<(f64, f64)>)> {
    let opts = QpOptions::for_dim(inst.dim(), config.kkt_tol);
    let ratio = |x: &DVector<f64>| sigma * q.dot(x) / quad_form(&inst.p, x).max(0.0).sqrt();
    let mut x = x0.clone();
    let mut lambda = ratio(&x);
    let mut trace = Vec::new();
    for round in 1..=config.max_dinkelbach_rounds {
        let target = |z: &DVector<f64>| sigma * q.dot(z) - lambda * quad_form(&inst.p, z).sqrt();
        // majorize sqrt(t) at s by t / (2s) + s / 2 and maximize the minorant
        let mut z = x.clone();
        let mut value = target(&z);
        for _ in 0..200 {
            let s = quad_form(&inst.p, &z).sqrt();
            if s <= 0.0 {
                break;
            }
            let h = &inst.p * (-lambda / s);
            let problem = ConcaveQp::new(h, q * sigma, &region.polyhedron);
            let sol = qp::maximize(&problem, &z, &opts)?;
            let next = target(&sol.x);
            if next <= value + 1e-13 * (1.0 + value.abs()) {
                if next > value {
                    z = sol.x;
                    value = next;
                }
                break;
            }
            z = sol.x;
            value = next;
        }
        trace.push((lambda, value));
        let r = ratio(&z);
        if r > lambda {
            x = z;
        }
        if value <= 1e-10 * lambda.abs().max(1.0) || r <= lambda {
            return Ok((x.clone(), lambda.max(r), round, trace));
        }
        lambda = r;
    }
    Ok((x, lambda, config.max_dinkelbach_rounds, trace))
}

/// A feasible point improving on `F(x_star)` by a `pi`-margin of `eps`, if any.
pub fn verify_or_improve(inst: &Inst, x_star: &DVector<f64>, config: &SolverConfig) -> Result<Option<DVector<f64>>> {
    let lambda = inst.objective(x_star)?;
    nonconvex::improvement_exists(inst, lambda, config.eps, config, None)
}

/// Dispatches on `config.algorithm`; `Auto` inspects the structure of `Q`.
pub fn solve(inst: &Inst, config: &SolverConfig) -> Result<SolveOutcome> {
    match config.algorithm {
        Algorithm::Region => solve_exact(inst, config),
        Algorithm::FastRegion => solve_fast(inst, config),
        Algorithm::RankOne => solve_rank_one(inst, config),
        Algorithm::Ibaraki => solve_ibaraki(inst, config),
        Algorithm::Auto => {
            let rank = vectors_for(inst, config)?.len();
            if rank == 1 {
                return solve_rank_one(inst, config);
            }
            let orthant = inst.feasible.within_nonnegative_orthant();
            let user_nonnegative = inst
                .decomp
                .as_ref()
                .is_some_and(|vs| vs.iter().all(|v| v.iter().all(|&c| c >= 0.0)));
            let mode = if orthant && user_nonnegative {
                Some(DecompMode::User)
            } else if orthant && is_totally_nonnegative(&inst.q).totally_nonnegative {
                Some(DecompMode::Ldl)
            } else {
                None
            };
            if let Some(decomp_mode) = mode {
                let single = SolverConfig {
                    decomp_mode,
                    ..config.clone()
                };
                let mut out = solve_fast(inst, &single)?;
                out.diagnostics.push("nonnegative factors on the orthant: single-region path".into());
                return Ok(out);
            }
            solve_exact(inst, config)
        }
    }
}

/// Ibaraki search started from the Chebyshev-style point of X.
pub fn solve_ibaraki(inst: &Inst, config: &SolverConfig) -> Result<SolveOutcome> {
    let start = Instant::now();
    config.validate()?;
    let interior = inst.feasible.find_interior_point(config.delta_feas);
    let Some(x) = interior.feasible_point() else {
        return Ok(SolveOutcome::infeasible(inst.dim(), start.elapsed(), "X is empty"));
    };
    let mut out = dinkelbach::solve(inst, x, config)?;
    out.wall_time = start.elapsed();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyhedron::Polyhedron;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn capped_segment() -> Inst {
        let feasible = Polyhedron::new(DMatrix::zeros(0, 2), DVector::zeros(0))
            .with_equalities(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DVector::from_vec(vec![1.0]))
            .with_bounds(DVector::zeros(2), DVector::from_element(2, 0.6));
        ProblemInstance::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0])),
            DMatrix::identity(2, 2),
            feasible,
        )
        .unwrap()
    }

    #[test]
    fn equal_matrices() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let inst = ProblemInstance::new(q.clone(), q, Polyhedron::simplex(2)).unwrap();
        let cfg = SolverConfig::default();
        let exact = solve_exact(&inst, &cfg).unwrap();
        assert_abs_diff_eq!(exact.f_star, 1.0, epsilon = 1e-9);
        assert_eq!(exact.status, SolveStatus::GlobalVerified);
        assert!(exact.per_region.iter().all(|r| r.dinkelbach_rounds == 1));
        assert_abs_diff_eq!(solve_fast(&inst, &cfg).unwrap().f_star, 1.0, epsilon = 1e-9);
        assert!(verify_or_improve(&inst, &DVector::from_vec(vec![0.3, 0.7]), &cfg).unwrap().is_none());
    }

    #[test]
    fn capped_segment_all_paths() {
        let inst = capped_segment();
        let cfg = SolverConfig::default();
        let want = 0.36 / 0.52;
        for out in [
            solve_exact(&inst, &cfg).unwrap(),
            solve_fast(&inst, &cfg).unwrap(),
            solve_rank_one(&inst, &cfg).unwrap(),
        ] {
            assert_abs_diff_eq!(out.f_star, want, epsilon = 1e-6);
            assert_abs_diff_eq!(out.x_star[0], 0.6, epsilon = 1e-5);
        }
    }

    #[test]
    fn rank_one_on_simplex() {
        // <q, x> = 1 on the simplex, so maximize 1 / |x|^2
        let q = DVector::from_vec(vec![1.0, 1.0]);
        let inst = ProblemInstance::new(&q * q.transpose(), DMatrix::identity(2, 2), Polyhedron::simplex(2)).unwrap();
        let out = solve_rank_one(&inst, &SolverConfig::default()).unwrap();
        assert_abs_diff_eq!(out.f_star, 2.0, epsilon = 1e-8);
        assert_eq!(out.regions_checked, 1);
        assert_eq!(out.status, SolveStatus::GlobalVerified);
    }

    #[test]
    fn improvement_from_dominated_point() {
        // F = (x1^2 + 3 x2^2) / |x|^2 is 1 at e1 and 3 at e2
        let inst = ProblemInstance::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0])),
            DMatrix::identity(2, 2),
            Polyhedron::simplex(2),
        )
        .unwrap();
        let cfg = SolverConfig::default();
        let local = DVector::from_vec(vec![1.0, 0.0]);
        let better = verify_or_improve(&inst, &local, &cfg).unwrap().expect("e2 dominates e1");
        assert!(inst.objective(&better).unwrap() > 1.0);
        assert!(verify_or_improve(&inst, &DVector::from_vec(vec![0.0, 1.0]), &cfg).unwrap().is_none());
    }

    #[test]
    fn auto_picks_rank_one_and_tn_paths() {
        let inst = capped_segment();
        let cfg = SolverConfig {
            algorithm: Algorithm::Auto,
            ..SolverConfig::default()
        };
        let out = solve(&inst, &cfg).unwrap();
        assert_eq!(out.status, SolveStatus::GlobalVerified);
        // min(i, j) + 1 is totally nonnegative
        let q = DMatrix::from_fn(3, 3, |i, j| (i.min(j) + 1) as f64);
        let tn = ProblemInstance::new(q, DMatrix::identity(3, 3), Polyhedron::simplex(3)).unwrap();
        let out = solve(&tn, &cfg).unwrap();
        assert_eq!(out.regions_checked, 1);
        let exact = solve_exact(&tn, &SolverConfig::default()).unwrap();
        assert!(out.f_star >= exact.f_star * (1.0 - 1e-2));
    }

    #[test]
    fn ibaraki_matches_region_checking() {
        let q = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let p = DMatrix::from_row_slice(3, 3, &[1.5, 0.2, 0.0, 0.2, 1.0, 0.1, 0.0, 0.1, 2.0]);
        let inst = ProblemInstance::new(q, p, Polyhedron::simplex(3)).unwrap();
        let cfg = SolverConfig::default();
        let a = solve_ibaraki(&inst, &cfg).unwrap();
        let b = solve_exact(&inst, &cfg).unwrap();
        assert_eq!(a.status, SolveStatus::GlobalVerified);
        assert_eq!(b.status, SolveStatus::GlobalVerified);
        assert!((a.f_star - b.f_star).abs() <= 2e-3 * b.f_star.max(1.0), "{} vs {}", a.f_star, b.f_star);
    }

    #[test]
    fn empty_feasible_set() {
        let feasible = Polyhedron::simplex(2).with_lower(DVector::from_element(2, 0.8));
        let inst = ProblemInstance::new(DMatrix::identity(2, 2), DMatrix::identity(2, 2), feasible).unwrap();
        let out = solve_fast(&inst, &SolverConfig::default()).unwrap();
        assert_eq!(out.status, SolveStatus::Infeasible);
    }
}
