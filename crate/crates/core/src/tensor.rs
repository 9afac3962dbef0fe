//! Dense matrices and the handful of kernels the model needs.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Logits are clamped to this magnitude before the sigmoid is evaluated.
pub const SIGMOID_CLAMP: f64 = 30.0;

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        DenseMatrix {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn filled(n_rows: usize, n_cols: usize, value: f64) -> Self {
        DenseMatrix {
            n_rows,
            n_cols,
            data: vec![value; n_rows * n_cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(Error::shape(
                "from_vec",
                format!("{} values for a {n_rows}x{n_cols} matrix", data.len()),
            ));
        }
        Ok(DenseMatrix { n_rows, n_cols, data })
    }

    /// Builds a matrix from equal-length rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), n_cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        DenseMatrix {
            n_rows: rows.len(),
            n_cols,
            data,
        }
    }

    pub fn column(values: &[f64]) -> Self {
        DenseMatrix {
            n_rows: values.len(),
            n_cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn scalar(value: f64) -> Self {
        DenseMatrix {
            n_rows: 1,
            n_cols: 1,
            data: vec![value],
        }
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n_cols.max(1)).take(self.n_rows)
    }

    /// The single entry of a 1x1 matrix.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.n_cols, self.n_rows);
        for i in 0..self.n_rows {
            for j in 0..self.n_cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        DenseMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> DenseMatrix {
        self.map(|v| v * s)
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, other: &DenseMatrix, s: f64) {
        assert_eq!(self.shape(), other.shape(), "add_scaled shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                "sub",
                format!("{:?} vs {:?}", self.shape(), other.shape()),
            ));
        }
        Ok(DenseMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n_cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n_cols + j]
    }
}

/// Sparse times dense.
pub fn spmm(sparse: &SparseMatrix, dense: &DenseMatrix) -> Result<DenseMatrix> {
    if sparse.n_cols() != dense.n_rows() {
        return Err(Error::shape(
            "spmm",
            format!(
                "{}x{} sparse times {}x{} dense",
                sparse.n_rows(),
                sparse.n_cols(),
                dense.n_rows(),
                dense.n_cols()
            ),
        ));
    }
    let mut out = DenseMatrix::zeros(sparse.n_rows(), dense.n_cols());
    for i in 0..sparse.n_rows() {
        let (cols, vals) = sparse.row(i);
        let out_row = out.row_mut(i);
        for (&j, &v) in cols.iter().zip(vals) {
            for (o, &d) in out_row.iter_mut().zip(dense.row(j)) {
                *o += v * d;
            }
        }
    }
    Ok(out)
}

/// Transposed sparse times dense, `sparseᵀ · dense`, without forming the transpose.
pub fn spmm_transposed(sparse: &SparseMatrix, dense: &DenseMatrix) -> Result<DenseMatrix> {
    if sparse.n_rows() != dense.n_rows() {
        return Err(Error::shape(
            "spmm_transposed",
            format!(
                "({}x{})ᵀ sparse times {}x{} dense",
                sparse.n_rows(),
                sparse.n_cols(),
                dense.n_rows(),
                dense.n_cols()
            ),
        ));
    }
    let mut out = DenseMatrix::zeros(sparse.n_cols(), dense.n_cols());
    for i in 0..sparse.n_rows() {
        let (cols, vals) = sparse.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            let src = dense.row(i);
            for (o, &d) in out.row_mut(j).iter_mut().zip(src) {
                *o += v * d;
            }
        }
    }
    Ok(out)
}

pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.n_cols() != b.n_rows() {
        return Err(Error::shape("matmul", format!("{:?} times {:?}", a.shape(), b.shape())));
    }
    let mut out = DenseMatrix::zeros(a.n_rows(), b.n_cols());
    for i in 0..a.n_rows() {
        let out_row = &mut out.data[i * b.n_cols..(i + 1) * b.n_cols];
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for (o, &bkj) in out_row.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// `aᵀ · b`.
pub fn matmul_tn(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.n_rows() != b.n_rows() {
        return Err(Error::shape(
            "matmul_tn",
            format!("{:?}ᵀ times {:?}", a.shape(), b.shape()),
        ));
    }
    let mut out = DenseMatrix::zeros(a.n_cols(), b.n_cols());
    for k in 0..a.n_rows() {
        let b_row = b.row(k);
        for (i, &aki) in a.row(k).iter().enumerate() {
            if aki == 0.0 {
                continue;
            }
            for (o, &bkj) in out.row_mut(i).iter_mut().zip(b_row) {
                *o += aki * bkj;
            }
        }
    }
    Ok(out)
}

/// `a · bᵀ`.
pub fn matmul_nt(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.n_cols() != b.n_cols() {
        return Err(Error::shape(
            "matmul_nt",
            format!("{:?} times {:?}ᵀ", a.shape(), b.shape()),
        ));
    }
    let mut out = DenseMatrix::zeros(a.n_rows(), b.n_rows());
    for i in 0..a.n_rows() {
        let a_row = a.row(i);
        for j in 0..b.n_rows() {
            out[(i, j)] = dot(a_row, b.row(j));
        }
    }
    Ok(out)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Entrywise nonlinearities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => relu(x),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }
}

#[inline]
pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Logistic function with the logit clamped to `[-SIGMOID_CLAMP, SIGMOID_CLAMP]`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    let x = x.clamp(-SIGMOID_CLAMP, SIGMOID_CLAMP);
    1.0 / (1.0 + (-x).exp())
}

pub fn elementwise(kind: Activation, m: &DenseMatrix) -> DenseMatrix {
    m.map(|v| kind.apply(v))
}

/// Numerically stable softmax (the maximum is subtracted before exponentiating).
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_matmul(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(a.n_rows(), b.n_cols());
        for i in 0..a.n_rows() {
            for j in 0..b.n_cols() {
                let mut s = 0.0;
                for k in 0..a.n_cols() {
                    s += a[(i, k)] * b[(k, j)];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    fn random_dense(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DenseMatrix {
        let data = (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect();
        DenseMatrix::from_vec(r, c, data).unwrap()
    }

    fn random_sparse(rng: &mut ChaCha8Rng, r: usize, c: usize, density: f64) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..r {
            for j in 0..c {
                if rng.random_bool(density) {
                    t.push((i, j, rng.random_range(-1.0..1.0)));
                }
            }
        }
        SparseMatrix::from_triplets(r, c, t).unwrap()
    }

    #[test]
    fn spmm_identity_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = random_dense(&mut rng, 4, 3);
        assert_eq!(spmm(&SparseMatrix::identity(4), &d).unwrap(), d);
    }

    #[test]
    fn spmm_averaging_filter() {
        let a = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 0.5), (0, 1, 0.5), (1, 0, 0.5), (1, 1, 0.5)]).unwrap();
        let out = spmm(&a, &DenseMatrix::column(&[1.0, 3.0])).unwrap();
        assert_eq!(out.data(), &[2.0, 2.0]);
    }

    #[test]
    fn spmm_matches_dense_oracle_10x10() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let s = random_sparse(&mut rng, 10, 10, 0.3);
        let d = random_dense(&mut rng, 10, 4);
        let got = spmm(&s, &d).unwrap();
        let want = naive_matmul(&s.to_dense(), &d);
        assert!(got.max_abs_diff(&want) <= 1e-12);
    }

    #[test]
    fn spmm_dimension_mismatch() {
        assert!(spmm(&SparseMatrix::identity(3), &DenseMatrix::zeros(2, 2)).is_err());
        assert!(matmul(&DenseMatrix::zeros(2, 3), &DenseMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn matmul_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = random_dense(&mut rng, 3, 3);
        assert_eq!(matmul(&DenseMatrix::identity(3), &b).unwrap(), b);
        let six = matmul(&DenseMatrix::scalar(2.0), &DenseMatrix::scalar(3.0)).unwrap();
        assert_eq!(six.item(), 6.0);
        let a = random_dense(&mut rng, 3, 4);
        let b = random_dense(&mut rng, 4, 2);
        assert!(matmul(&a, &b).unwrap().max_abs_diff(&naive_matmul(&a, &b)) <= 1e-12);
        assert!(
            matmul_tn(&a.transpose(), &b)
                .unwrap()
                .max_abs_diff(&naive_matmul(&a, &b))
                <= 1e-12
        );
        assert!(
            matmul_nt(&a, &b.transpose())
                .unwrap()
                .max_abs_diff(&naive_matmul(&a, &b))
                <= 1e-12
        );
    }

    #[test]
    fn activations() {
        let m = DenseMatrix::from_rows(&[[-1.0, 2.0]]);
        assert_eq!(elementwise(Activation::Relu, &m).data(), &[0.0, 2.0]);
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(elementwise(Activation::Tanh, &DenseMatrix::scalar(0.0)).item(), 0.0);
        let s = sigmoid(1e6);
        assert!(s < 1.0 && s > 0.999);
        assert!(sigmoid(-1e6) > 0.0);
    }

    #[test]
    fn softmax_cases() {
        for c in [-5.0, 0.0, 3.5] {
            for p in softmax(&[c, c, c]) {
                assert!((p - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        let p = softmax(&[2f64.ln(), 0.0]);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
        let p = softmax(&[1000.0, 0.0]);
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1] < 1e-300);
    }

    proptest! {
        #[test]
        fn spmm_equals_dense_product(seed in any::<u64>(), r in 1usize..40, c in 1usize..40,
                                     k in 1usize..6, density in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_sparse(&mut rng, r, c, density);
            let d = random_dense(&mut rng, c, k);
            let got = spmm(&s, &d).unwrap();
            prop_assert!(got.max_abs_diff(&naive_matmul(&s.to_dense(), &d)) <= 1e-12);
            let back = spmm_transposed(&s, &got).unwrap();
            let want = naive_matmul(&s.to_dense().transpose(), &got);
            prop_assert!(back.max_abs_diff(&want) <= 1e-12);
        }

        #[test]
        fn softmax_shift_invariant(v in prop::collection::vec(-50.0f64..50.0, 1..8), shift in -100.0f64..100.0) {
            let a = softmax(&v);
            let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
            let b = softmax(&shifted);
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!(*x > 0.0);
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }
}
