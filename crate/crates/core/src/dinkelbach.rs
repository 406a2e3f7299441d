//! Interpolated bisection (Ibaraki) on the root of `pi(lambda)`.
//!
//! `pi(lambda) = max x'(Q - lambda P)x` is convex and strictly decreasing;
//! its root is the optimal ratio. The search keeps a bracket with
//! `pi(lambda_l) > 0 > pi(lambda_u)` and stops at `|pi| < eps`.

use std::time::Instant;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{quad_form, ProblemInstance, SolveOutcome, SolveStatus, SolverConfig};
use crate::nonconvex::{self, PiSolution};

#[derive(Clone, Debug)]
pub struct DinkelbachState {
    pub lambda_l: f64,
    pub lambda_u: f64,
    pub pi_l: f64,
    pub pi_u: f64,
    /// Maximizer at `lambda_u`.
    pub x_u: DVector<f64>,
    /// `x_u' P x_u`.
    pub d_u: f64,
    pub history: Vec<(f64, f64)>,
}

#[derive(Clone, Debug)]
pub enum Bracket {
    /// `|pi(F(x_feas))| < eps` already certifies `x_feas`.
    AlreadyOptimal { lambda: f64, pi: f64, x: DVector<f64> },
    Open { state: DinkelbachState, best: (f64, DVector<f64>) },
}

fn pi(inst: &ProblemInstance<f64>, lambda: f64, config: &SolverConfig) -> Result<PiSolution> {
    let sol = nonconvex::solve_pi(inst, lambda, config)?;
    if sol.exhausted {
        return Err(Error::Solver(format!(
            "branch-and-bound budget exhausted at lambda = {lambda} (gap {:e})",
            sol.gap()
        )));
    }
    Ok(sol)
}

/// Lower end `F(x_feas)`, upper end the Rayleigh bound plus `eps`.
pub fn initial_bracket(inst: &ProblemInstance<f64>, x_feas: &DVector<f64>, config: &SolverConfig) -> Result<Bracket> {
    let f0 = inst.objective(x_feas)?;
    let at_f0 = pi(inst, f0, config)?;
    let mut history = vec![(f0, at_f0.value)];
    if at_f0.value < config.eps {
        return Ok(Bracket::AlreadyOptimal { lambda: f0, pi: at_f0.value, x: x_feas.clone() });
    }
    let mut best = (f0, x_feas.clone());
    if let Ok(f) = inst.objective(&at_f0.x) {
        if f > best.0 {
            best = (f, at_f0.x.clone());
        }
    }
    let lambda_u = inst.rayleigh_bound()? + config.eps;
    let at_u = pi(inst, lambda_u, config)?;
    history.push((lambda_u, at_u.value));
    if at_u.value >= -2.0 * config.bb_gap {
        // only possible when x = 0 is feasible
        return Err(Error::Solver(format!(
            "pi at the Rayleigh bound is {:e}, not negative",
            at_u.value
        )));
    }
    let d_u = quad_form(&inst.p, &at_u.x);
    Ok(Bracket::Open {
        state: DinkelbachState {
            lambda_l: f0,
            lambda_u,
            pi_l: at_f0.value,
            pi_u: at_u.value,
            x_u: at_u.x,
            d_u,
            history,
        },
        best,
    })
}

/// Next trial `lambda`, safeguarded by bisection.
pub fn step(state: &DinkelbachState) -> f64 {
    let (ll, lu) = (state.lambda_l, state.lambda_u);
    let slope = (state.pi_u - state.pi_l) / (lu - ll);
    let raw = if state.d_u + slope != 0.0 {
        -state.pi_u / slope + lu
    } else {
        state.pi_u / state.d_u + lu
    };
    if raw.is_finite() && raw > ll && raw < lu {
        raw
    } else {
        0.5 * (ll + lu)
    }
}

pub fn solve(inst: &ProblemInstance<f64>, x_feas: &DVector<f64>, config: &SolverConfig) -> Result<SolveOutcome> {
    let start = Instant::now();
    let finish = |x: DVector<f64>, f: f64, status, history: Vec<(f64, f64)>, rounds, diag: Vec<String>| SolveOutcome {
        x_star: x,
        f_star: f,
        status,
        regions_checked: 0,
        per_region: Vec::new(),
        lambda_trace: history,
        dinkelbach_rounds: rounds,
        sy_iterations: 0,
        wall_time: start.elapsed(),
        diagnostics: diag,
    };
    let (mut state, mut best) = match initial_bracket(inst, x_feas, config)? {
        Bracket::AlreadyOptimal { lambda, pi, x } => {
            return Ok(finish(x, lambda, SolveStatus::GlobalVerified, vec![(lambda, pi)], 0, Vec::new()));
        }
        Bracket::Open { state, best } => (state, best),
    };
    let threshold = 2.0 * config.bb_gap;
    for round in 1..=config.max_dinkelbach_rounds {
        let lambda = step(&state);
        let sol = pi(inst, lambda, config)?;
        state.history.push((lambda, sol.value));
        if let Ok(f) = inst.objective(&sol.x) {
            if f > best.0 {
                best = (f, sol.x.clone());
            }
        }
        if sol.value.abs() < config.eps {
            return Ok(finish(best.1, best.0, SolveStatus::GlobalVerified, state.history, round, Vec::new()));
        }
        if sol.value > threshold {
            state.lambda_l = lambda;
            state.pi_l = sol.value;
        } else if sol.value < -threshold {
            state.lambda_u = lambda;
            state.pi_u = sol.value;
            state.d_u = quad_form(&inst.p, &sol.x);
            state.x_u = sol.x;
        }
    }
    let rounds = config.max_dinkelbach_rounds;
    Ok(finish(
        best.1,
        best.0,
        SolveStatus::StationaryOnly,
        state.history,
        rounds,
        vec![format!("round cap {rounds} reached")],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyhedron::Polyhedron;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn state(ll: f64, lu: f64, pl: f64, pu: f64, d_u: f64) -> DinkelbachState {
        DinkelbachState {
            lambda_l: ll,
            lambda_u: lu,
            pi_l: pl,
            pi_u: pu,
            x_u: DVector::zeros(1),
            d_u,
            history: Vec::new(),
        }
    }

    #[test]
    fn step_formula_branches() {
        // secant root through (1, 1) and (2, -1)
        assert_abs_diff_eq!(step(&state(1.0, 2.0, 1.0, -1.0, 1.0)), 1.5, epsilon = 1e-15);
        // d_u + slope = 0 takes the second branch: -1/2 + 2
        assert_abs_diff_eq!(step(&state(1.0, 2.0, 1.0, -1.0, 2.0)), 1.5, epsilon = 1e-15);
        // a noisy lower value pushes the secant root out of the bracket
        assert_abs_diff_eq!(step(&state(1.0, 2.0, -0.5, -1.0, 1.0)), 1.5, epsilon = 1e-15);
    }

    #[test]
    fn constant_ratio_needs_no_rounds() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let inst = ProblemInstance::new(q.clone(), q, Polyhedron::simplex(2)).unwrap();
        let out = solve(&inst, &DVector::from_vec(vec![0.5, 0.5]), &SolverConfig::default()).unwrap();
        assert_abs_diff_eq!(out.f_star, 1.0, epsilon = 1e-12);
        assert_eq!(out.dinkelbach_rounds, 0);
        assert_eq!(out.status, SolveStatus::GlobalVerified);
    }

    #[test]
    fn bracket_for_diagonal_numerator() {
        let inst = ProblemInstance::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0])),
            DMatrix::identity(2, 2),
            Polyhedron::simplex(2),
        )
        .unwrap();
        let cfg = SolverConfig::default();
        match initial_bracket(&inst, &DVector::from_vec(vec![0.5, 0.5]), &cfg).unwrap() {
            Bracket::Open { state, .. } => {
                assert_abs_diff_eq!(state.lambda_l, 0.5, epsilon = 1e-12);
                assert_abs_diff_eq!(state.lambda_u, 1.0 + cfg.eps, epsilon = 1e-12);
                assert!(state.pi_l > 0.0 && state.pi_u < 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn capped_segment() {
        // x1 + x2 = 1, 0 <= x <= 0.6: optimum 0.36 / 0.52 at (0.6, 0.4)
        let feasible = Polyhedron::new(DMatrix::zeros(0, 2), DVector::zeros(0))
            .with_equalities(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DVector::from_vec(vec![1.0]))
            .with_bounds(DVector::zeros(2), DVector::from_element(2, 0.6));
        let inst = ProblemInstance::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0])),
            DMatrix::identity(2, 2),
            feasible,
        )
        .unwrap();
        let cfg = SolverConfig::default();
        let out = solve(&inst, &DVector::from_vec(vec![0.5, 0.5]), &cfg).unwrap();
        assert_abs_diff_eq!(out.f_star, 0.36 / 0.52, epsilon = cfg.eps);
        assert_abs_diff_eq!(out.x_star[0], 0.6, epsilon = 1e-4);
        assert_eq!(out.status, SolveStatus::GlobalVerified);
        let last = out.lambda_trace.last().unwrap();
        assert!(last.1.abs() < cfg.eps);
    }
}
