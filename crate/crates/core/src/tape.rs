//! Reverse-mode differentiation over the primitives the model is built from.
//!
//! Values are recorded in evaluation order, so the tape is topologically
//! sorted by construction and `backward` is a single reverse sweep.

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;
use crate::structure::{self, PairSample};
use crate::tensor::{self, DenseMatrix};

/// Handle to a recorded value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<'a> {
    Leaf,
    Matmul(Var, Var),
    /// Constant dense left operand.
    MatmulConst(&'a DenseMatrix, Var),
    /// Constant sparse left operand.
    Spmm(&'a SparseMatrix, Var),
    /// Adds a `1 x c` row to every row.
    AddBias(Var, Var),
    Relu(Var),
    Tanh(Var),
    Mean(Var),
    /// `Σ_k softmax(scores)_k · inputs_k`; `weights` caches the softmax.
    SoftmaxWeightedSum {
        scores: Vec<Var>,
        inputs: Vec<Var>,
        weights: Vec<f64>,
    },
    /// `Σ_ij |σ(z_i · z_j) - A_ij|`, evaluated in row blocks.
    SigmoidInnerProductL1 {
        z: Var,
        target: &'a SparseMatrix,
        block: usize,
    },
    SampledSigmoidL1 {
        z: Var,
        sample: &'a PairSample,
    },
    FrobeniusLoss {
        pred: Var,
        target: &'a DenseMatrix,
    },
    LinearCombination(Vec<(Var, f64)>),
}

impl Op<'_> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Matmul(..) | Op::MatmulConst(..) => "matmul",
            Op::Spmm(..) => "spmm-const",
            Op::AddBias(..) => "add-bias",
            Op::Relu(_) => "relu",
            Op::Tanh(_) => "tanh",
            Op::Mean(_) => "mean",
            Op::SoftmaxWeightedSum { .. } => "softmax-weighted-sum",
            Op::SigmoidInnerProductL1 { .. } => "sigmoid-inner-product-L1",
            Op::SampledSigmoidL1 { .. } => "sampled-sigmoid-inner-product-L1",
            Op::FrobeniusLoss { .. } => "frobenius-loss",
            Op::LinearCombination(_) => "linear-combination",
        }
    }
}

struct Node<'a> {
    op: Op<'a>,
    value: DenseMatrix,
    needs_grad: bool,
}

/// Recorded computation. Borrowed constants (sparse operators, targets,
/// precomputed propagations) live outside the tape.
#[derive(Default)]
pub struct GradientTape<'a> {
    nodes: Vec<Node<'a>>,
}

/// Gradients indexed by [`Var`]; `None` where no gradient flows.
pub struct Gradients(Vec<Option<DenseMatrix>>);

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&DenseMatrix> {
        self.0[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<DenseMatrix> {
        self.0[v.0].take()
    }
}

impl<'a> GradientTape<'a> {
    pub fn new() -> Self {
        GradientTape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Names of the recorded primitives, in order.
    pub fn ops(&self) -> Vec<&'static str> {
        self.nodes.iter().map(|n| n.op.name()).collect()
    }

    /// On/off state of every relu unit, in recording order. Two evaluations
    /// with equal patterns lie on the same smooth piece of the loss.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.nodes
            .iter()
            .filter(|n| matches!(n.op, Op::Relu(_)))
            .flat_map(|n| n.value.data().iter().map(|&v| v > 0.0))
            .collect()
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, op: Op<'a>, value: DenseMatrix, needs_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: op.name() });
        }
        self.nodes.push(Node { op, value, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Trainable input.
    pub fn param(&mut self, value: DenseMatrix) -> Result<Var> {
        self.push(Op::Leaf, value, true)
    }

    pub fn constant(&mut self, value: DenseMatrix) -> Result<Var> {
        self.push(Op::Leaf, value, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = tensor::matmul(self.value(a), self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        self.push(Op::Matmul(a, b), value, needs)
    }

    pub fn matmul_const(&mut self, a: &'a DenseMatrix, b: Var) -> Result<Var> {
        let value = tensor::matmul(a, self.value(b))?;
        let needs = self.needs(b);
        self.push(Op::MatmulConst(a, b), value, needs)
    }

    pub fn spmm(&mut self, a: &'a SparseMatrix, b: Var) -> Result<Var> {
        let value = tensor::spmm(a, self.value(b))?;
        let needs = self.needs(b);
        self.push(Op::Spmm(a, b), value, needs)
    }

    pub fn add_bias(&mut self, m: Var, bias: Var) -> Result<Var> {
        let (mv, bv) = (self.value(m), self.value(bias));
        if bv.n_rows() != 1 || bv.n_cols() != mv.n_cols() {
            return Err(Error::shape(
                "add_bias",
                format!("bias {:?} for matrix {:?}", bv.shape(), mv.shape()),
            ));
        }
        let mut value = mv.clone();
        for i in 0..value.n_rows() {
            for (x, b) in value.row_mut(i).iter_mut().zip(bv.data()) {
                *x += b;
            }
        }
        let needs = self.needs(m) || self.needs(bias);
        self.push(Op::AddBias(m, bias), value, needs)
    }

    pub fn relu(&mut self, m: Var) -> Result<Var> {
        let value = self.value(m).map(tensor::relu);
        let needs = self.needs(m);
        self.push(Op::Relu(m), value, needs)
    }

    pub fn tanh(&mut self, m: Var) -> Result<Var> {
        let value = self.value(m).map(f64::tanh);
        let needs = self.needs(m);
        self.push(Op::Tanh(m), value, needs)
    }

    /// Mean over all entries, as a `1 x 1` value.
    pub fn mean(&mut self, m: Var) -> Result<Var> {
        let v = self.value(m);
        let count = v.data().len().max(1) as f64;
        let value = DenseMatrix::scalar(v.data().iter().sum::<f64>() / count);
        let needs = self.needs(m);
        self.push(Op::Mean(m), value, needs)
    }

    /// Softmax-weighted sum of same-shaped inputs; `scores` are `1 x 1` values.
    pub fn softmax_weighted_sum(&mut self, scores: Vec<Var>, inputs: Vec<Var>) -> Result<Var> {
        if scores.len() != inputs.len() || inputs.is_empty() {
            return Err(Error::shape(
                "softmax_weighted_sum",
                format!("{} scores for {} inputs", scores.len(), inputs.len()),
            ));
        }
        let shape = self.value(inputs[0]).shape();
        if inputs.iter().any(|&v| self.value(v).shape() != shape) {
            return Err(Error::shape("softmax_weighted_sum", "inputs differ in shape"));
        }
        let raw: Vec<f64> = scores.iter().map(|&s| self.value(s).item()).collect();
        let weights = tensor::softmax(&raw);
        let mut value = DenseMatrix::zeros(shape.0, shape.1);
        for (&v, &w) in inputs.iter().zip(&weights) {
            value.add_scaled(self.value(v), w);
        }
        let needs = scores.iter().chain(&inputs).any(|&v| self.needs(v));
        self.push(
            Op::SoftmaxWeightedSum {
                scores,
                inputs,
                weights,
            },
            value,
            needs,
        )
    }

    /// Softmax weights cached by a [`Self::softmax_weighted_sum`] node.
    pub fn softmax_weights(&self, v: Var) -> Option<&[f64]> {
        match &self.nodes[v.0].op {
            Op::SoftmaxWeightedSum { weights, .. } => Some(weights),
            _ => None,
        }
    }

    pub fn sigmoid_inner_product_l1(&mut self, z: Var, target: &'a SparseMatrix, block: usize) -> Result<Var> {
        let loss = structure::l1_loss(self.value(z), target, block)?;
        let needs = self.needs(z);
        self.push(
            Op::SigmoidInnerProductL1 { z, target, block },
            DenseMatrix::scalar(loss),
            needs,
        )
    }

    pub fn sampled_sigmoid_l1(&mut self, z: Var, sample: &'a PairSample) -> Result<Var> {
        let loss = structure::sampled_l1_loss(self.value(z), sample)?;
        let needs = self.needs(z);
        self.push(Op::SampledSigmoidL1 { z, sample }, DenseMatrix::scalar(loss), needs)
    }

    /// Squared Frobenius distance to a constant target.
    pub fn frobenius_loss(&mut self, pred: Var, target: &'a DenseMatrix) -> Result<Var> {
        let loss = self.value(pred).sub(target)?.frobenius_sq();
        let needs = self.needs(pred);
        self.push(Op::FrobeniusLoss { pred, target }, DenseMatrix::scalar(loss), needs)
    }

    /// `Σ coef · term` over `1 x 1` values.
    pub fn linear_combination(&mut self, terms: Vec<(Var, f64)>) -> Result<Var> {
        let mut total = 0.0;
        for &(v, c) in &terms {
            let val = self.value(v);
            if val.shape() != (1, 1) {
                return Err(Error::shape("linear_combination", "terms must be scalars"));
            }
            total += c * val.item();
        }
        let needs = terms.iter().any(|&(v, _)| self.needs(v));
        self.push(Op::LinearCombination(terms), DenseMatrix::scalar(total), needs)
    }

    /// Reverse sweep from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::shape("backward", "loss must be a 1x1 value"));
        }
        let mut grads: Vec<Option<DenseMatrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(DenseMatrix::scalar(1.0));

        fn accumulate(grads: &mut [Option<DenseMatrix>], v: Var, g: DenseMatrix) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_scaled(&g, 1.0),
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            if !g.is_finite() {
                return Err(Error::NonFinite { op: node.op.name() });
            }
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Matmul(a, b) => {
                    if self.needs(*a) {
                        let ga = tensor::matmul_nt(&g, self.value(*b))?;
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.needs(*b) {
                        let gb = tensor::matmul_tn(self.value(*a), &g)?;
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::MatmulConst(a, b) => {
                    accumulate(&mut grads, *b, tensor::matmul_tn(a, &g)?);
                }
                Op::Spmm(a, b) => {
                    accumulate(&mut grads, *b, tensor::spmm_transposed(a, &g)?);
                }
                Op::AddBias(m, bias) => {
                    if self.needs(*bias) {
                        let mut gb = DenseMatrix::zeros(1, g.n_cols());
                        for row in g.rows() {
                            for (s, x) in gb.data_mut().iter_mut().zip(row) {
                                *s += x;
                            }
                        }
                        accumulate(&mut grads, *bias, gb);
                    }
                    if self.needs(*m) {
                        accumulate(&mut grads, *m, g);
                    }
                }
                Op::Relu(m) => {
                    let mut gm = g;
                    for (x, &y) in gm.data_mut().iter_mut().zip(node.value.data()) {
                        if y <= 0.0 {
                            *x = 0.0;
                        }
                    }
                    accumulate(&mut grads, *m, gm);
                }
                Op::Tanh(m) => {
                    let mut gm = g;
                    for (x, &y) in gm.data_mut().iter_mut().zip(node.value.data()) {
                        *x *= 1.0 - y * y;
                    }
                    accumulate(&mut grads, *m, gm);
                }
                Op::Mean(m) => {
                    let (r, c) = self.value(*m).shape();
                    let count = (r * c).max(1) as f64;
                    accumulate(&mut grads, *m, DenseMatrix::filled(r, c, g.item() / count));
                }
                Op::SoftmaxWeightedSum {
                    scores,
                    inputs,
                    weights,
                } => {
                    let mut d_weight = Vec::with_capacity(inputs.len());
                    for (&v, &w) in inputs.iter().zip(weights) {
                        d_weight.push(tensor::dot(g.data(), self.value(v).data()));
                        if self.needs(v) {
                            accumulate(&mut grads, v, g.scale(w));
                        }
                    }
                    let mixed: f64 = weights.iter().zip(&d_weight).map(|(w, d)| w * d).sum();
                    for ((&s, &w), &d) in scores.iter().zip(weights).zip(&d_weight) {
                        if self.needs(s) {
                            accumulate(&mut grads, s, DenseMatrix::scalar(w * (d - mixed)));
                        }
                    }
                }
                Op::SigmoidInnerProductL1 { z, target, block } => {
                    let gz = structure::l1_loss_grad(self.value(*z), target, *block, g.item())?;
                    accumulate(&mut grads, *z, gz);
                }
                Op::SampledSigmoidL1 { z, sample } => {
                    let gz = structure::sampled_l1_loss_grad(self.value(*z), sample, g.item())?;
                    accumulate(&mut grads, *z, gz);
                }
                Op::FrobeniusLoss { pred, target } => {
                    let diff = self.value(*pred).sub(target)?;
                    accumulate(&mut grads, *pred, diff.scale(2.0 * g.item()));
                }
                Op::LinearCombination(terms) => {
                    for &(v, c) in terms {
                        if self.needs(v) {
                            accumulate(&mut grads, v, DenseMatrix::scalar(c * g.item()));
                        }
                    }
                }
            }
        }
        Ok(Gradients(grads))
    }
}
