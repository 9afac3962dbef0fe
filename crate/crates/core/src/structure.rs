//! Structure reconstruction error `|σ(Z Zᵀ) - A|`, evaluated in row blocks so
//! that only `block x n` inner products are alive at any time.

use rand::Rng;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;
use crate::tensor::{dot, sigmoid, DenseMatrix, SIGMOID_CLAMP};

pub const DEFAULT_BLOCK: usize = 256;

fn check(z: &DenseMatrix, target: &SparseMatrix) -> Result<()> {
    if !target.is_square() || target.n_rows() != z.n_rows() {
        return Err(Error::shape(
            "structure decoder",
            format!(
                "{} embeddings for a {}x{} adjacency",
                z.n_rows(),
                target.n_rows(),
                target.n_cols()
            ),
        ));
    }
    Ok(())
}

/// Calls `visit(i, logits_i)` for every row, where `logits_i[j] = z_i · z_j`.
fn for_each_row(z: &DenseMatrix, block: usize, mut visit: impl FnMut(usize, &[f64])) {
    let n = z.n_rows();
    let block = block.max(1);
    let mut buf = vec![0.0; block.min(n.max(1)) * n];
    for start in (0..n).step_by(block) {
        let end = (start + block).min(n);
        for i in start..end {
            let zi = z.row(i);
            let out = &mut buf[(i - start) * n..(i - start + 1) * n];
            for (j, o) in out.iter_mut().enumerate() {
                *o = dot(zi, z.row(j));
            }
        }
        for i in start..end {
            visit(i, &buf[(i - start) * n..(i - start + 1) * n]);
        }
    }
}

/// Walks the dense row `i`, pairing every column with its 0/1 target.
#[inline]
fn row_terms(target: &SparseMatrix, i: usize, logits: &[f64], mut f: impl FnMut(usize, f64, f64)) {
    let (cols, _) = target.row(i);
    let mut next = cols.iter().peekable();
    for (j, &s) in logits.iter().enumerate() {
        let a = if next.peek() == Some(&&j) {
            next.next();
            1.0
        } else {
            0.0
        };
        f(j, s, a);
    }
}

/// Per-node L1 reconstruction error `Σ_j |σ(z_i · z_j) - A_ij|`.
pub fn row_errors(z: &DenseMatrix, target: &SparseMatrix, block: usize) -> Result<Vec<f64>> {
    check(z, target)?;
    let mut out = vec![0.0; z.n_rows()];
    for_each_row(z, block, |i, logits| {
        let mut acc = 0.0;
        row_terms(target, i, logits, |_, s, a| acc += (sigmoid(s) - a).abs());
        out[i] = acc;
    });
    Ok(out)
}

/// Entry-wise L1 norm of `σ(Z Zᵀ) - A`.
pub fn l1_loss(z: &DenseMatrix, target: &SparseMatrix, block: usize) -> Result<f64> {
    Ok(row_errors(z, target, block)?.iter().sum())
}

/// d(upstream · loss)/dZ. Uses sign(0) = 0 and a zero slope where the logit
/// is clamped.
pub fn l1_loss_grad(z: &DenseMatrix, target: &SparseMatrix, block: usize, upstream: f64) -> Result<DenseMatrix> {
    check(z, target)?;
    let mut grad = DenseMatrix::zeros(z.n_rows(), z.n_cols());
    for_each_row(z, block, |i, logits| {
        let gi = grad.row_mut(i);
        row_terms(target, i, logits, |j, s, a| {
            let c = 2.0 * upstream * pair_slope(s, a);
            if c != 0.0 {
                for (g, &zj) in gi.iter_mut().zip(z.row(j)) {
                    *g += c * zj;
                }
            }
        });
    });
    Ok(grad)
}

/// d|σ(s) - a| / ds.
#[inline]
fn pair_slope(s: f64, a: f64) -> f64 {
    if s.abs() > SIGMOID_CLAMP {
        return 0.0;
    }
    let p = sigmoid(s);
    let diff = p - a;
    let sign = if diff > 0.0 {
        1.0
    } else if diff < 0.0 {
        -1.0
    } else {
        0.0
    };
    sign * p * (1.0 - p)
}

/// Unbiased sampled estimate of the structure loss: every edge and diagonal
/// pair is kept, and `m` non-edges per row stand in for all of them with
/// weight `(#non-edges) / m`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    n: usize,
    /// `(i, j, target, weight)`.
    pairs: Vec<(usize, usize, f64, f64)>,
}

impl PairSample {
    pub fn draw(target: &SparseMatrix, negatives_per_node: usize, rng: &mut impl Rng) -> Self {
        let n = target.n_rows();
        let mut pairs = Vec::new();
        for i in 0..n {
            pairs.push((i, i, 0.0, 1.0));
            let (cols, _) = target.row(i);
            pairs.extend(cols.iter().map(|&j| (i, j, 1.0, 1.0)));
            let non_edges = n.saturating_sub(1 + cols.len());
            if non_edges == 0 || negatives_per_node == 0 {
                continue;
            }
            let weight = non_edges as f64 / negatives_per_node as f64;
            let mut drawn = 0;
            while drawn < negatives_per_node {
                let j = rng.random_range(0..n);
                if j != i && cols.binary_search(&j).is_err() {
                    pairs.push((i, j, 0.0, weight));
                    drawn += 1;
                }
            }
        }
        PairSample { n, pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

pub fn sampled_l1_loss(z: &DenseMatrix, sample: &PairSample) -> Result<f64> {
    if z.n_rows() != sample.n {
        return Err(Error::shape("sampled structure decoder", "row count mismatch"));
    }
    Ok(sample
        .pairs
        .iter()
        .map(|&(i, j, a, w)| w * (sigmoid(dot(z.row(i), z.row(j))) - a).abs())
        .sum())
}

pub fn sampled_l1_loss_grad(z: &DenseMatrix, sample: &PairSample, upstream: f64) -> Result<DenseMatrix> {
    if z.n_rows() != sample.n {
        return Err(Error::shape("sampled structure decoder", "row count mismatch"));
    }
    let mut grad = DenseMatrix::zeros(z.n_rows(), z.n_cols());
    for &(i, j, a, w) in &sample.pairs {
        let c = upstream * w * pair_slope(dot(z.row(i), z.row(j)), a);
        if c == 0.0 {
            continue;
        }
        let (zi, zj) = (z.row(i).to_vec(), z.row(j).to_vec());
        for (g, x) in grad.row_mut(i).iter_mut().zip(&zj) {
            *g += c * x;
        }
        for (g, x) in grad.row_mut(j).iter_mut().zip(&zi) {
            *g += c * x;
        }
    }
    Ok(grad)
}
