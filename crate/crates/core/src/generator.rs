//! Random instances in the style of the standard experiments.
//!
//! Every family lives on `{sum x = 1, 0 <= x <= ub}` intersected with `T`
//! random rows `Ax <= b`, all of which hold strictly at `x = (1/n, ..., 1/n)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ProblemInstance;
use crate::polyhedron::Polyhedron;

/// Ridge added to `Y'Y` so the denominator is positive definite.
pub const P_RIDGE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// `Q = X'X` with `X` an `M x n` uniform matrix.
    #[default]
    Standard,
    /// `Q = sum q_i q_i'` over `n` uniform vectors, carried as the decomposition.
    FullRankTn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n: usize,
    pub rank: usize,
    pub t: usize,
    pub seed: u64,
    pub family: Family,
    pub ub: f64,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Generator("n must be positive".into()));
        }
        if self.family == Family::Standard && (self.rank == 0 || self.rank > self.n) {
            return Err(Error::Generator(format!("rank {} outside 1..={}", self.rank, self.n)));
        }
        if !(self.ub.is_finite() && self.ub * self.n as f64 >= 1.0 - 1e-12) {
            return Err(Error::Generator(format!(
                "n * ub = {} < 1 leaves sum x = 1 infeasible",
                self.ub * self.n as f64
            )));
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    // row-major fill keeps the stream order independent of storage layout
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.random::<f64>()).collect();
    DMatrix::from_row_slice(rows, cols, &data)
}

pub fn generate(spec: &GeneratorSpec) -> Result<ProblemInstance<f64>> {
    spec.validate()?;
    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let a = uniform(&mut rng, spec.t, n);
    let b = DVector::from_fn(spec.t, |i, _| {
        let lo = a.row(i).sum() / n as f64;
        rng.random_range(lo..=1.0)
    });
    let feasible = Polyhedron::new(a, b)
        .with_equalities(DMatrix::from_element(1, n, 1.0), DVector::from_element(1, 1.0))
        .with_bounds(DVector::zeros(n), DVector::from_element(n, spec.ub));
    match spec.family {
        Family::Standard => {
            let x = uniform(&mut rng, spec.rank, n);
            let y = uniform(&mut rng, n, n);
            let q = x.tr_mul(&x);
            let p = y.tr_mul(&y) + DMatrix::identity(n, n) * P_RIDGE;
            ProblemInstance::new(q, p, feasible)
        }
        Family::FullRankTn => {
            let vs = uniform(&mut rng, n, n);
            let y = uniform(&mut rng, n, n);
            let q = vs.tr_mul(&vs);
            let p = y.tr_mul(&y) + DMatrix::identity(n, n) * P_RIDGE;
            let vectors = (0..n).map(|i| vs.row(i).transpose()).collect();
            ProblemInstance::new(q, p, feasible)?.with_decomposition(vectors)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyhedron::enumerate_nonempty_regions;

    fn spec(n: usize, rank: usize, t: usize, seed: u64, family: Family) -> GeneratorSpec {
        GeneratorSpec { n, rank, t, seed, family, ub: 0.2 }
    }

    #[test]
    fn barycenter_is_feasible() {
        let inst = generate(&GeneratorSpec { ub: 0.1, ..spec(10, 2, 10, 7, Family::Standard) }).unwrap();
        let bar = DVector::from_element(10, 0.1);
        assert!(inst.feasible.max_violation(&bar) <= 1e-12);
        assert!((&inst.feasible.a * &bar - &inst.feasible.b).max() <= 0.0);
    }

    #[test]
    fn deterministic_in_seed() {
        let s = spec(6, 3, 4, 11, Family::Standard);
        assert_eq!(generate(&s).unwrap(), generate(&s).unwrap());
        assert_ne!(generate(&s).unwrap(), generate(&GeneratorSpec { seed: 12, ..s }).unwrap());
    }

    #[test]
    fn full_rank_family_has_one_region() {
        let inst = generate(&GeneratorSpec { ub: 0.4, ..spec(5, 5, 5, 3, Family::FullRankTn) }).unwrap();
        let vectors = inst.decomp.clone().unwrap();
        let scan = enumerate_nonempty_regions(&inst.feasible, &vectors, 1e-7, 20, false).unwrap();
        assert_eq!(scan.regions.len(), 1);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(generate(&GeneratorSpec { ub: 0.1, ..spec(5, 2, 1, 0, Family::Standard) }).is_err());
        assert!(generate(&spec(5, 6, 1, 0, Family::Standard)).is_err());
    }
}
