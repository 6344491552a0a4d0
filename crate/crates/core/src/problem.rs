//! Problem data model, validation and the JSON problem format.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Compressed sparse column matrix.
///
/// Row indices within a column are strictly increasing, so coordinates are
/// sorted and unique. A matrix flagged `symmetric` stores only its upper
/// triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub colptr: Vec<usize>,
    pub rowidx: Vec<usize>,
    pub values: Vec<f64>,
    pub symmetric: bool,
}

impl CscMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CscMatrix {
            nrows,
            ncols,
            colptr: vec![0; ncols + 1],
            rowidx: Vec::new(),
            values: Vec::new(),
            symmetric: false,
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    ///
    /// Panics on out-of-range indices. Use [`CscMatrix::try_from_triplets`] for
    /// untrusted input.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        Self::try_from_triplets(nrows, ncols, triplets, "matrix").expect("triplet index out of range")
    }

    pub fn try_from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
        name: &'static str,
    ) -> Result<Self> {
        for &(r, c, _) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::Invalid(Violation::IndexOutOfRange { matrix: name, row: r, col: c }));
            }
        }
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));

        let mut colptr = vec![0usize; ncols + 1];
        let mut rowidx: Vec<usize> = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            rowidx.push(r);
            values.push(v);
            colptr[c + 1] += 1;
            last = Some((r, c));
        }
        for c in 0..ncols {
            colptr[c + 1] += colptr[c];
        }
        Ok(CscMatrix { nrows, ncols, colptr, rowidx, values, symmetric: false })
    }

    /// Symmetric matrix from triplets.
    ///
    /// If only upper-triangle entries are present they are taken verbatim.
    /// If any strictly-lower entry appears, the input is read as a full matrix
    /// and stored as the upper triangle of `(M + Mᵀ)/2`.
    pub fn try_symmetric_from_triplets(
        n: usize,
        triplets: &[(usize, usize, f64)],
        name: &'static str,
    ) -> Result<Self> {
        let full = triplets.iter().any(|&(r, c, _)| r > c);
        let upper: Vec<(usize, usize, f64)> = if full {
            triplets
                .iter()
                .map(|&(r, c, v)| {
                    let (i, j) = if r <= c { (r, c) } else { (c, r) };
                    let w = if r == c { v } else { 0.5 * v };
                    (i, j, w)
                })
                .collect()
        } else {
            triplets.to_vec()
        };
        let mut m = Self::try_from_triplets(n, n, &upper, name)?;
        m.symmetric = true;
        Ok(m)
    }

    pub fn symmetric_from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        Self::try_symmetric_from_triplets(n, triplets, "matrix").expect("triplet index out of range")
    }

    pub fn nnz(&self) -> usize {
        self.rowidx.len()
    }

    /// Iterates stored entries as `(row, col, value)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.ncols).flat_map(move |c| {
            (self.colptr[c]..self.colptr[c + 1]).map(move |k| (self.rowidx[k], c, self.values[k]))
        })
    }

    /// `y ← y + M x` (full symmetric product when `symmetric`).
    pub fn gemv_add(&self, x: &[f64], y: &mut [f64]) {
        for c in 0..self.ncols {
            let xc = x[c];
            for k in self.colptr[c]..self.colptr[c + 1] {
                let r = self.rowidx[k];
                let v = self.values[k];
                y[r] += v * xc;
                if self.symmetric && r != c {
                    y[c] += v * x[r];
                }
            }
        }
    }

    /// `y ← y + Mᵀ x`.
    pub fn gemv_t_add(&self, x: &[f64], y: &mut [f64]) {
        if self.symmetric {
            self.gemv_add(x, y);
            return;
        }
        for c in 0..self.ncols {
            let mut acc = 0.0;
            for k in self.colptr[c]..self.colptr[c + 1] {
                acc += self.values[k] * x[self.rowidx[k]];
            }
            y[c] += acc;
        }
    }

    /// Diagonal entry `(i, i)`, zero if not stored.
    pub fn diag(&self, i: usize) -> f64 {
        let range = self.colptr[i]..self.colptr[i + 1];
        match self.rowidx[range.clone()].binary_search(&i) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => 0.0,
        }
    }

    /// Dense row-major copy (full matrix for symmetric storage).
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, c, v) in self.triplets() {
            d[r][c] += v;
            if self.symmetric && r != c {
                d[c][r] += v;
            }
        }
        d
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    fn structural_violations(&self, name: &'static str, out: &mut Vec<Violation>) {
        if self.colptr.len() != self.ncols + 1
            || self.colptr[0] != 0
            || *self.colptr.last().unwrap() != self.rowidx.len()
            || self.rowidx.len() != self.values.len()
        {
            out.push(Violation::MalformedStorage { matrix: name });
            return;
        }
        for c in 0..self.ncols {
            let (lo, hi) = (self.colptr[c], self.colptr[c + 1]);
            if lo > hi {
                out.push(Violation::MalformedStorage { matrix: name });
                return;
            }
            for k in lo..hi {
                let r = self.rowidx[k];
                if r >= self.nrows {
                    out.push(Violation::IndexOutOfRange { matrix: name, row: r, col: c });
                }
                if k > lo && self.rowidx[k - 1] >= r {
                    out.push(Violation::UnsortedOrDuplicate { matrix: name, row: r, col: c });
                }
                if self.symmetric && r > c {
                    out.push(Violation::NotUpperTriangular { row: r, col: c });
                }
                if !self.values[k].is_finite() {
                    out.push(Violation::NonFinite { field: name });
                }
            }
        }
    }
}

/// Cone `Zero^zero × Nonneg^nonneg`; zero rows come first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub zero: usize,
    pub nonneg: usize,
}

impl ConeSpec {
    pub fn new(zero: usize, nonneg: usize) -> Self {
        ConeSpec { zero, nonneg }
    }

    pub fn dim(&self) -> usize {
        self.zero + self.nonneg
    }

    #[inline]
    pub fn is_zero_row(&self, i: usize) -> bool {
        i < self.zero
    }

    /// Component `s_i − Π_C(s)_i` of the cone residual.
    #[inline]
    pub fn residual(&self, i: usize, si: f64) -> f64 {
        if self.is_zero_row(i) {
            si
        } else {
            si.min(0.0)
        }
    }

    /// Projection onto the cone.
    pub fn project(&self, s: &mut [f64]) {
        for (i, si) in s.iter_mut().enumerate() {
            *si = if self.is_zero_row(i) { 0.0 } else { si.max(0.0) };
        }
    }
}

/// A single invariant violation found by [`ProblemData::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DimensionMismatch { what: &'static str, expected: usize, found: usize },
    IndexOutOfRange { matrix: &'static str, row: usize, col: usize },
    UnsortedOrDuplicate { matrix: &'static str, row: usize, col: usize },
    MalformedStorage { matrix: &'static str },
    NotUpperTriangular { row: usize, col: usize },
    NotSymmetric,
    NonFinite { field: &'static str },
    NegativeDiagonal { index: usize, value: f64 },
    ConeDimMismatch { expected: usize, found: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            DimensionMismatch { what, expected, found } => {
                write!(f, "dimension mismatch in {what}: expected {expected}, found {found}")
            }
            IndexOutOfRange { matrix, row, col } => write!(f, "{matrix} index ({row}, {col}) out of range"),
            UnsortedOrDuplicate { matrix, row, col } => {
                write!(f, "{matrix} entry ({row}, {col}) unsorted or duplicated")
            }
            MalformedStorage { matrix } => write!(f, "{matrix} has malformed column storage"),
            NotUpperTriangular { row, col } => write!(f, "Q entry ({row}, {col}) below the diagonal"),
            NotSymmetric => write!(f, "Q is not marked symmetric"),
            NonFinite { field } => write!(f, "NaN or infinite value in {field}"),
            NegativeDiagonal { index, value } => write!(f, "Q[{index},{index}] = {value} is negative"),
            ConeDimMismatch { expected, found } => {
                write!(f, "cone dimensions sum to {found}, A has {expected} rows")
            }
        }
    }
}

/// QP instance `min ½xᵀQx + pᵀx  s.t.  Ax + s = b, s ∈ cone`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemData {
    /// Upper triangle of Q.
    pub quad: CscMatrix,
    pub lin: Vec<f64>,
    pub a: CscMatrix,
    pub b: Vec<f64>,
    pub cone: ConeSpec,
    /// Known lower bound on the optimal cost, if any.
    pub t0: Option<f64>,
    pub name: Option<String>,
}

impl ProblemData {
    /// Builds and validates a problem.
    pub fn new(quad: CscMatrix, lin: Vec<f64>, a: CscMatrix, b: Vec<f64>, cone: ConeSpec) -> Result<Self> {
        let prob = ProblemData { quad, lin, a, b, cone, t0: None, name: None };
        let violations = prob.validate();
        if violations.is_empty() {
            Ok(prob)
        } else {
            Err(Error::InvalidProblem(violations))
        }
    }

    pub fn n(&self) -> usize {
        self.lin.len()
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    /// Lists every violated invariant; empty iff the problem is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.lin.len();
        let m = self.b.len();

        if !self.quad.symmetric {
            out.push(Violation::NotSymmetric);
        }
        if self.quad.nrows != n {
            out.push(Violation::DimensionMismatch { what: "Q rows", expected: n, found: self.quad.nrows });
        }
        if self.quad.ncols != n {
            out.push(Violation::DimensionMismatch { what: "Q cols", expected: n, found: self.quad.ncols });
        }
        if self.a.ncols != n {
            out.push(Violation::DimensionMismatch { what: "A cols", expected: n, found: self.a.ncols });
        }
        if self.a.nrows != m {
            out.push(Violation::DimensionMismatch { what: "A rows", expected: m, found: self.a.nrows });
        }
        if self.cone.dim() != self.a.nrows {
            out.push(Violation::ConeDimMismatch { expected: self.a.nrows, found: self.cone.dim() });
        }
        self.quad.structural_violations("Q", &mut out);
        self.a.structural_violations("A", &mut out);
        if self.lin.iter().any(|v| !v.is_finite()) {
            out.push(Violation::NonFinite { field: "p" });
        }
        if self.b.iter().any(|v| !v.is_finite()) {
            out.push(Violation::NonFinite { field: "b" });
        }
        if matches!(self.t0, Some(t) if !t.is_finite()) {
            out.push(Violation::NonFinite { field: "t0" });
        }
        if out.is_empty() {
            for i in 0..n {
                let d = self.quad.diag(i);
                if d < 0.0 {
                    out.push(Violation::NegativeDiagonal { index: i, value: d });
                }
            }
        }
        out
    }

    /// Objective `q(x) = ½xᵀQx + pᵀx`, with `v = Qx + p` written to `grad`.
    pub fn objective_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.copy_from_slice(&self.lin);
        self.quad.gemv_add(x, grad);
        // ½xᵀQx + pᵀx = ½xᵀ(Qx + p) + ½pᵀx
        let mut acc = 0.0;
        for i in 0..x.len() {
            acc += x[i] * (grad[i] + self.lin[i]);
        }
        0.5 * acc
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut g = vec![0.0; x.len()];
        self.objective_and_grad(x, &mut g)
    }

    /// Reads a problem from the JSON problem format.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ProblemFile = serde_json::from_str(text)?;
        file.into_problem()
    }

    /// Writes the problem in the same JSON format read by [`ProblemData::load`].
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = ProblemFile {
            quad: self.quad.triplets().map(|(r, c, v)| Triplet(r, c, v)).collect(),
            lin: self.lin.clone(),
            a: self.a.triplets().map(|(r, c, v)| Triplet(r, c, v)).collect(),
            b: self.b.clone(),
            cone: self.cone,
            t0: self.t0,
            name: self.name.clone(),
            n: Some(self.n()),
        };
        serde_json::to_string_pretty(&file).expect("problem serialization cannot fail")
    }
}

/// `[row, col, value]`, 0-based.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct Triplet(usize, usize, f64);

#[derive(Debug, Serialize, Deserialize)]
struct ProblemFile {
    #[serde(rename = "Q")]
    quad: Vec<Triplet>,
    #[serde(rename = "p")]
    lin: Vec<f64>,
    #[serde(rename = "A")]
    a: Vec<Triplet>,
    b: Vec<f64>,
    cone: ConeSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    /// Optional explicit variable count; defaults to `len(p)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
}

impl ProblemFile {
    fn into_problem(self) -> Result<ProblemData> {
        let n = self.lin.len();
        let m = self.b.len();
        if let Some(declared) = self.n {
            if declared != n {
                return Err(Error::Invalid(Violation::DimensionMismatch { what: "p", expected: declared, found: n }));
            }
        }
        if self.cone.dim() != m {
            return Err(Error::Invalid(Violation::DimensionMismatch {
                what: "b",
                expected: self.cone.dim(),
                found: m,
            }));
        }
        let finite = |ts: &[Triplet], field| {
            if ts.iter().any(|t| !t.2.is_finite()) {
                Err(Error::Invalid(Violation::NonFinite { field }))
            } else {
                Ok(())
            }
        };
        finite(&self.quad, "Q")?;
        finite(&self.a, "A")?;
        let q_trip: Vec<_> = self.quad.iter().map(|t| (t.0, t.1, t.2)).collect();
        let a_trip: Vec<_> = self.a.iter().map(|t| (t.0, t.1, t.2)).collect();
        let quad = CscMatrix::try_symmetric_from_triplets(n, &q_trip, "Q")?;
        let a = CscMatrix::try_from_triplets(m, n, &a_trip, "A")?;
        let prob = ProblemData { quad, lin: self.lin, a, b: self.b, cone: self.cone, t0: self.t0, name: self.name };
        let violations = prob.validate();
        match violations.len() {
            0 => Ok(prob),
            1 => Err(Error::Invalid(violations.into_iter().next().unwrap())),
            _ => Err(Error::InvalidProblem(violations)),
        }
    }
}
