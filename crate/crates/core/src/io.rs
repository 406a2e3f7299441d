//! JSON instance files and solve reports.
//!
//! Matrices are flat row-major arrays; `A` has `len(b)` rows and `E` has
//! `len(f)` rows. Floats are written with 17 significant digits so every
//! double survives a round trip bit for bit.

use std::io;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::ser::{CompactFormatter, Formatter};

use crate::error::{Error, Result};
use crate::model::{ProblemInstance, SolveOutcome};
use crate::polyhedron::Polyhedron;

#[derive(Debug, Serialize, Deserialize)]
struct InstanceDoc {
    n: usize,
    #[serde(rename = "Q")]
    q: Vec<f64>,
    #[serde(rename = "P")]
    p: Vec<f64>,
    #[serde(rename = "A", default)]
    a: Vec<f64>,
    #[serde(default)]
    b: Vec<f64>,
    #[serde(rename = "E", default, skip_serializing_if = "Option::is_none")]
    e: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    f: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lb: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ub: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    decomp: Option<Vec<Vec<f64>>>,
}

/// Compact JSON with `{:.16e}` floats; non-finite values become `null`.
#[derive(Default)]
pub struct RoundTripFormatter(CompactFormatter);

impl Formatter for RoundTripFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            writer.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Serializes with [`RoundTripFormatter`].
pub fn to_json_bytes<S: Serialize>(value: &S) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, RoundTripFormatter::default());
    value.serialize(&mut ser)?;
    Ok(out)
}

fn matrix(name: &str, data: Vec<f64>, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    if data.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "{name} has {} entries, expected {rows}x{cols}",
            data.len()
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

fn vector(name: &str, data: Vec<f64>, n: usize) -> Result<DVector<f64>> {
    if data.len() != n {
        return Err(Error::Dimension(format!("{name} has length {}, expected {n}", data.len())));
    }
    Ok(DVector::from_vec(data))
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        out.extend(m.row(i).iter());
    }
    out
}

pub fn read_instance(bytes: &[u8]) -> Result<ProblemInstance<f64>> {
    let doc: InstanceDoc =
        serde_json::from_slice(bytes).map_err(|e| Error::Malformed(e.to_string()))?;
    let n = doc.n;
    if n == 0 {
        return Err(Error::Malformed("n must be positive".into()));
    }
    let q = matrix("Q", doc.q, n, n)?;
    let p = matrix("P", doc.p, n, n)?;
    let m = doc.b.len();
    let a = matrix("A", doc.a, m, n)?;
    let mut feasible = Polyhedron::new(a, DVector::from_vec(doc.b));
    match (doc.e, doc.f) {
        (Some(e), Some(f)) => {
            let k = f.len();
            feasible = feasible.with_equalities(matrix("E", e, k, n)?, DVector::from_vec(f));
        }
        (None, None) => {}
        _ => return Err(Error::Malformed("E and f must be given together".into())),
    }
    if let Some(lb) = doc.lb {
        feasible = feasible.with_lower(vector("lb", lb, n)?);
    }
    if let Some(ub) = doc.ub {
        feasible = feasible.with_upper(vector("ub", ub, n)?);
    }
    let inst = ProblemInstance::new(q, p, feasible)?;
    match doc.decomp {
        Some(vs) => {
            let vectors = vs
                .into_iter()
                .enumerate()
                .map(|(k, v)| vector(&format!("decomp[{k}]"), v, n))
                .collect::<Result<Vec<_>>>()?;
            inst.with_decomposition(vectors)
        }
        None => Ok(inst),
    }
}

pub fn write_instance(inst: &ProblemInstance<f64>) -> Result<Vec<u8>> {
    let x = &inst.feasible;
    let doc = InstanceDoc {
        n: inst.dim(),
        q: row_major(&inst.q),
        p: row_major(&inst.p),
        a: row_major(&x.a),
        b: x.b.iter().copied().collect(),
        e: (x.n_eq() > 0).then(|| row_major(&x.e)),
        f: (x.n_eq() > 0).then(|| x.f.iter().copied().collect()),
        lb: x.lb.as_ref().map(|v| v.iter().copied().collect()),
        ub: x.ub.as_ref().map(|v| v.iter().copied().collect()),
        decomp: inst
            .decomp
            .as_ref()
            .map(|vs| vs.iter().map(|v| v.iter().copied().collect()).collect()),
    };
    to_json_bytes(&doc)
}

#[derive(Serialize)]
struct SolutionDoc<'a> {
    x: Vec<f64>,
    f: f64,
    status: String,
    regions: usize,
    trace: TraceDoc<'a>,
}

#[derive(Serialize)]
struct TraceDoc<'a> {
    wall_s: f64,
    dinkelbach_rounds: usize,
    sy_iterations: usize,
    lambda: &'a [(f64, f64)],
    per_region: &'a [crate::model::RegionTrace],
    diagnostics: &'a [String],
}

/// `{x, f, status, regions, trace}` report of a solve.
pub fn write_solution(out: &SolveOutcome) -> Result<Vec<u8>> {
    let doc = SolutionDoc {
        x: out.x_star.iter().copied().collect(),
        f: out.f_star,
        status: out.status.to_string(),
        regions: out.regions_checked,
        trace: TraceDoc {
            wall_s: out.wall_time.as_secs_f64(),
            dinkelbach_rounds: out.dinkelbach_rounds,
            sy_iterations: out.sy_iterations,
            lambda: &out.lambda_trace,
            per_region: &out.per_region,
            diagnostics: &out.diagnostics,
        },
    };
    to_json_bytes(&doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HANDWRITTEN: &str = r#"{
        "n": 2,
        "Q": [1, 0, 0, 0],
        "P": [1, 0, 0, 1],
        "A": [1, 1],
        "b": [1],
        "lb": [0, 0]
    }"#;

    #[test]
    fn handwritten_document() {
        let inst = read_instance(HANDWRITTEN.as_bytes()).unwrap();
        let want = ProblemInstance::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            DMatrix::identity(2, 2),
            Polyhedron::new(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DVector::from_vec(vec![1.0]))
                .with_lower(DVector::zeros(2)),
        )
        .unwrap();
        assert_eq!(inst, want);
    }

    #[test]
    fn missing_denominator_is_malformed() {
        let doc = r#"{"n": 1, "Q": [1], "A": [], "b": []}"#;
        assert!(matches!(read_instance(doc.as_bytes()), Err(Error::Malformed(_))));
    }

    #[test]
    fn wrong_length_is_dimension_error() {
        let doc = r#"{"n": 2, "Q": [1, 0, 0], "P": [1, 0, 0, 1]}"#;
        assert!(matches!(read_instance(doc.as_bytes()), Err(Error::Dimension(_))));
    }

    #[test]
    fn equalities_need_both_sides() {
        let doc = r#"{"n": 1, "Q": [1], "P": [1], "E": [1]}"#;
        assert!(matches!(read_instance(doc.as_bytes()), Err(Error::Malformed(_))));
    }

    #[test]
    fn non_finite_written_as_null() {
        let bytes = to_json_bytes(&vec![1.0, f64::NAN]).unwrap();
        assert_eq!(String::from_utf8(bytes).unwrap(), "[1.0000000000000000e0,null]");
    }

    fn entries(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, len)
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_identical(
            (n, m, data) in (1usize..5, 0usize..4).prop_flat_map(|(n, m)| {
                (Just(n), Just(m), entries(2 * n * n + m * n + m + 3 * n + n))
            })
        ) {
            let mut it = data.into_iter();
            let mut take = |k: usize| it.by_ref().take(k).collect::<Vec<_>>();
            let q = DMatrix::from_row_slice(n, n, &take(n * n));
            let p = DMatrix::from_row_slice(n, n, &take(n * n));
            let a = DMatrix::from_row_slice(m, n, &take(m * n));
            let b = DVector::from_vec(take(m));
            let e = DMatrix::from_row_slice(1, n, &take(n));
            let f = DVector::from_vec(take(1));
            let lb = DVector::from_vec(take(n));
            let ub = DVector::from_vec(take(n));
            let feasible = Polyhedron::new(a, b).with_equalities(e, f).with_bounds(lb, ub);
            let inst = ProblemInstance::new(q, p, feasible)
                .unwrap()
                .with_decomposition(vec![DVector::from_vec(take(n - 1).into_iter().chain([0.5]).collect())])
                .unwrap();
            let back = read_instance(&write_instance(&inst).unwrap()).unwrap();
            prop_assert_eq!(back, inst);
        }
    }
}
