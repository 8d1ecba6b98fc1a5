//! Dense `f64` containers and the handful of kernels the network needs.
//!
//! Storage is row-major. Every reduction sums in natural index order so that a
//! fixed seed reproduces results bit for bit; kernels may skip terms whose
//! multiplier is exactly zero, which never changes a finite sum.

use std::fmt;
use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed-length vector of `f64`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn zeros(len: usize) -> Self {
        Vector(vec![0.0; len])
    }

    pub fn filled(len: usize, value: f64) -> Self {
        Vector(vec![value; len])
    }

    /// One-hot vector of length `len` with a 1 at `index`.
    pub fn one_hot(len: usize, index: usize) -> Self {
        let mut v = Vector::zeros(len);
        v.0[index] = 1.0;
        v
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// Index of the largest entry; the first one wins ties.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &x) in self.0.iter().enumerate() {
            match best {
                Some((_, b)) if x <= b => {}
                _ => best = Some((i, x)),
            }
        }
        best.map(|(i, _)| i)
    }
}

impl From<Vec<f64>> for Vector {
    fn from(values: Vec<f64>) -> Self {
        Vector(values)
    }
}

impl From<&[f64]> for Vector {
    fn from(values: &[f64]) -> Self {
        Vector(values.to_vec())
    }
}

impl<const N: usize> From<[f64; N]> for Vector {
    fn from(values: [f64; N]) -> Self {
        Vector(values.to_vec())
    }
}

impl Deref for Vector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidConfig(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if values.len() != rows * cols {
            return Err(Error::dims(
                "Matrix::new",
                format!("{rows}x{cols}"),
                format!("{} values", values.len()),
            ));
        }
        Ok(Matrix { rows, cols, values })
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Matrix {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::dims("Matrix::from_rows", cols, bad.len()));
        }
        Matrix::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.values[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }
}

impl fmt::Display for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

/// `m · v`.
pub fn matvec(m: &Matrix, v: &Vector) -> Result<Vector> {
    if m.cols != v.len() {
        return Err(Error::dims(
            "matvec",
            format!("matrix {m}"),
            format!("vector of length {}", v.len()),
        ));
    }
    let mut out = Vector::zeros(m.rows);
    matvec_into(m, v, &mut out);
    Ok(out)
}

/// Elementwise `a + b`.
pub fn vec_add(a: &Vector, b: &Vector) -> Result<Vector> {
    if a.len() != b.len() {
        return Err(Error::dims("vec_add", a.len(), b.len()));
    }
    Ok(a.iter().zip(b.iter()).map(|(x, y)| x + y).collect::<Vec<_>>().into())
}

/// `a ⊗ b`, shape `a.len() × b.len()`.
pub fn outer(a: &Vector, b: &Vector) -> Matrix {
    let mut values = Vec::with_capacity(a.len() * b.len());
    for &x in a.iter() {
        values.extend(b.iter().map(|&y| x * y));
    }
    Matrix {
        rows: a.len(),
        cols: b.len(),
        values,
    }
}

/// Elementwise `a ∘ b`.
pub fn hadamard(a: &Vector, b: &Vector) -> Result<Vector> {
    if a.len() != b.len() {
        return Err(Error::dims("hadamard", a.len(), b.len()));
    }
    Ok(a.iter().zip(b.iter()).map(|(x, y)| x * y).collect::<Vec<_>>().into())
}

/// Unchecked `out = m · v`. Shapes must already agree.
///
/// Zero entries of `v` are skipped; each output still accumulates its terms
/// in ascending column order. Four rows are reduced together to expose
/// independent add chains.
pub(crate) fn matvec_into(m: &Matrix, v: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.cols, v.len());
    debug_assert_eq!(m.rows, out.len());
    let nz: Vec<usize> = (0..v.len()).filter(|&j| v[j] != 0.0).collect();
    let cols = m.cols;
    let w = &m.values;
    let mut i = 0;
    while i + 4 <= m.rows {
        let (r0, r1, r2, r3) = (i * cols, (i + 1) * cols, (i + 2) * cols, (i + 3) * cols);
        let (mut a0, mut a1, mut a2, mut a3) = (0.0, 0.0, 0.0, 0.0);
        for &j in &nz {
            let x = v[j];
            a0 += w[r0 + j] * x;
            a1 += w[r1 + j] * x;
            a2 += w[r2 + j] * x;
            a3 += w[r3 + j] * x;
        }
        out[i] = a0;
        out[i + 1] = a1;
        out[i + 2] = a2;
        out[i + 3] = a3;
        i += 4;
    }
    while i < m.rows {
        let r = i * cols;
        let mut acc = 0.0;
        for &j in &nz {
            acc += w[r + j] * v[j];
        }
        out[i] = acc;
        i += 1;
    }
}

/// Unchecked `out = mᵀ · d`, accumulated row by row so each output sums in
/// ascending row order.
pub(crate) fn matvec_transpose_into(m: &Matrix, d: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.rows, d.len());
    debug_assert_eq!(m.cols, out.len());
    out.fill(0.0);
    for (i, &di) in d.iter().enumerate() {
        if di != 0.0 {
            axpy(out, di, m.row(i));
        }
    }
}

/// `y += alpha · x`.
#[inline]
pub(crate) fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive_matvec(m: &Matrix, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; m.rows()];
        for i in 0..m.rows() {
            let mut acc = 0.0;
            for j in 0..m.cols() {
                acc += m.get(i, j) * v[j];
            }
            out[i] = acc;
        }
        out
    }

    #[test]
    fn matvec_examples() {
        let v = Vector::from([1.0, 2.0, 3.0]);
        assert_eq!(matvec(&Matrix::identity(3), &v).unwrap(), v);
        assert_eq!(
            matvec(&Matrix::zeros(2, 3), &Vector::from([4.0, -5.0, 6.0])).unwrap(),
            Vector::from([0.0, 0.0])
        );
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let ones = Vector::from([1.0, 1.0]);
        assert_eq!(naive_matvec(&m, &ones), vec![3.0, 7.0]);
        assert_eq!(matvec(&m, &ones).unwrap(), Vector::from([3.0, 7.0]));
    }

    #[test]
    fn matvec_mismatch_names_both_shapes() {
        let err = matvec(&Matrix::zeros(2, 3), &Vector::zeros(2)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("length 2"), "{msg}");
    }

    #[test]
    fn vec_add_examples() {
        let a = Vector::from([1.0, 2.0]);
        assert_eq!(vec_add(&a, &Vector::zeros(2)).unwrap(), a);
        assert_eq!(vec_add(&a, &Vector::from([-1.0, -2.0])).unwrap(), Vector::zeros(2));
        assert_eq!(
            vec_add(&Vector::from([0.5, 0.25]), &Vector::from([0.5, 0.75])).unwrap(),
            Vector::from([1.0, 1.0])
        );
        assert!(vec_add(&a, &Vector::zeros(3)).is_err());
    }

    #[test]
    fn outer_examples() {
        let m = outer(&Vector::from([1.0, 0.0]), &Vector::from([3.0, 4.0]));
        assert_eq!(m, Matrix::from_rows(&[vec![3.0, 4.0], vec![0.0, 0.0]]).unwrap());
        let z = outer(&Vector::zeros(3), &Vector::from([1.0, -2.0]));
        assert_eq!(z, Matrix::zeros(3, 2));
        assert_eq!(outer(&Vector::from([1.0]), &Vector::from([1.0])), Matrix::identity(1));
    }

    #[test]
    fn hadamard_examples() {
        let a = Vector::from([2.0, 3.0]);
        assert_eq!(hadamard(&a, &Vector::from([1.0, 1.0])).unwrap(), a);
        assert_eq!(hadamard(&a, &Vector::zeros(2)).unwrap(), Vector::zeros(2));
        assert_eq!(
            hadamard(&a, &Vector::from([4.0, 5.0])).unwrap(),
            Vector::from([8.0, 15.0])
        );
        assert!(hadamard(&a, &Vector::zeros(1)).is_err());
    }

    #[test]
    fn matrix_new_rejects_bad_length() {
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn transpose_matches_naive() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let mut out = vec![0.0; 3];
        matvec_transpose_into(&m, &[1.0, -1.0], &mut out);
        assert_eq!(out, vec![-3.0, -3.0, -3.0]);
    }

    fn shape_and_values(lo: f64, hi: f64) -> impl Strategy<Value = (Matrix, Vec<f64>, Vec<f64>)> {
        (1usize..9, 1usize..9).prop_flat_map(move |(r, c)| {
            (
                proptest::collection::vec(lo..hi, r * c),
                proptest::collection::vec(lo..hi, c),
                proptest::collection::vec(lo..hi, c),
            )
                .prop_map(move |(w, a, b)| (Matrix::new(r, c, w).unwrap(), a, b))
        })
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
    }

    proptest! {
        #[test]
        fn matvec_agrees_with_naive_oracle((m, v, _) in shape_and_values(-10.0, 10.0)) {
            let fast = matvec(&m, &Vector::from(v.clone())).unwrap();
            let slow = naive_matvec(&m, &v);
            for (a, b) in fast.iter().zip(&slow) {
                prop_assert!(rel_close(*a, *b, 1e-12), "{a} vs {b}");
            }
        }

        #[test]
        fn matvec_exact_on_integers(
            (m, v, _) in shape_and_values(-10.0, 10.0).prop_map(|(m, v, w)| {
                let vals = m.as_slice().iter().map(|x| x.round()).collect();
                (Matrix::new(m.rows(), m.cols(), vals).unwrap(),
                 v.iter().map(|x| x.round()).collect::<Vec<_>>(), w)
            })
        ) {
            let fast = matvec(&m, &Vector::from(v.clone())).unwrap();
            let slow = naive_matvec(&m, &v);
            prop_assert_eq!(fast.as_slice(), slow.as_slice());
        }

        #[test]
        fn matvec_is_additive((m, a, b) in shape_and_values(-10.0, 10.0)) {
            let (a, b) = (Vector::from(a), Vector::from(b));
            let lhs = matvec(&m, &vec_add(&a, &b).unwrap()).unwrap();
            let rhs = vec_add(&matvec(&m, &a).unwrap(), &matvec(&m, &b).unwrap()).unwrap();
            // Cancellation can leave a tiny residual; scale by the term magnitudes.
            let mag: Vec<f64> = (0..m.rows())
                .map(|i| (0..m.cols()).map(|j| (m.get(i, j) * (a[j].abs() + b[j].abs())).abs()).sum())
                .collect();
            for i in 0..m.rows() {
                prop_assert!((lhs[i] - rhs[i]).abs() <= 1e-12 * mag[i].max(1.0));
            }
        }

        #[test]
        fn operations_do_not_mutate_inputs((m, a, b) in shape_and_values(-1.0, 1.0)) {
            let (a, b) = (Vector::from(a), Vector::from(b));
            let (m0, a0, b0) = (m.clone(), a.clone(), b.clone());
            let _ = matvec(&m, &a);
            let _ = vec_add(&a, &b);
            let _ = hadamard(&a, &b);
            let _ = outer(&a, &b);
            prop_assert_eq!(m, m0);
            prop_assert_eq!(a, a0);
            prop_assert_eq!(b, b0);
        }
    }
}
