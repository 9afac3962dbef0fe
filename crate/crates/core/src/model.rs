//! Forward pass: per-view low-pass encoding, view fusion, structure and
//! attribute reconstruction, the joint loss and per-node anomaly scores.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{normalize, union_adjacency, MultiViewNetwork, ViewGraph};
use crate::sparse::SparseMatrix;
use crate::structure::{self, PairSample, DEFAULT_BLOCK};
use crate::tape::{GradientTape, Var};
use crate::tensor::{self, Activation, DenseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    Attention,
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderMode {
    /// `g(Ã^L X W)` with the propagation precomputed.
    Simplified,
    /// `L` stacked graph convolution layers `g(Ã H W_l)`.
    Multilayer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    /// Filter order `L`: propagation hops, or layers in multilayer mode.
    pub filter_order: usize,
    pub embedding_dim: usize,
    pub attention_dim: usize,
    /// Weight of the structure term; the attribute term gets `1 - epsilon`.
    pub epsilon: f64,
    pub fusion: FusionMode,
    pub encoder: EncoderMode,
    /// Nonlinearity of the encoder and the attribute decoder.
    pub activation: Activation,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub block_size: usize,
    /// Train on a sampled structure loss with this many non-edges per node.
    pub negative_samples: Option<usize>,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            filter_order: 3,
            embedding_dim: 30,
            attention_dim: 30,
            epsilon: 0.5,
            fusion: FusionMode::Attention,
            encoder: EncoderMode::Simplified,
            activation: Activation::Relu,
            learning_rate: 0.001,
            epochs: 300,
            seed: 0,
            block_size: DEFAULT_BLOCK,
            negative_samples: None,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(m.to_string()));
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad("epsilon must lie strictly between 0 and 1");
        }
        if self.filter_order == 0 {
            return bad("filter_order must be at least 1");
        }
        if self.embedding_dim == 0 || self.attention_dim == 0 {
            return bad("embedding_dim and attention_dim must be positive");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.block_size == 0 {
            return bad("block_size must be positive");
        }
        if !matches!(self.activation, Activation::Relu | Activation::Identity) {
            return bad("activation must be relu or identity");
        }
        if self.negative_samples == Some(0) {
            return bad("negative_samples must be positive when set");
        }
        Ok(())
    }

    fn encoder_layers(&self) -> usize {
        match self.encoder {
            EncoderMode::Simplified => 1,
            EncoderMode::Multilayer => self.filter_order,
        }
    }
}

/// Every trainable tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// `encoder[k][l]`: one matrix per view in simplified mode, one per layer
    /// in multilayer mode. The first is `d x F_L`, later ones `F_L x F_L`.
    pub encoder: Vec<Vec<DenseMatrix>>,
    /// Shared attention projection, `F_L x F_A`.
    pub attn_w: DenseMatrix,
    /// Attention bias, `1 x F_A`.
    pub attn_b: DenseMatrix,
    /// Attention query, `F_A x 1`.
    pub attn_q: DenseMatrix,
    /// Attribute decoder, `F_L x d`.
    pub dec_w: DenseMatrix,
}

fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> DenseMatrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-limit..=limit)).collect();
    DenseMatrix::from_vec(rows, cols, data).expect("sized")
}

impl ModelParams {
    fn build(hp: &HyperParams, d: usize, k: usize, mut make: impl FnMut(usize, usize) -> DenseMatrix) -> Self {
        let f = hp.embedding_dim;
        let encoder = (0..k)
            .map(|_| {
                (0..hp.encoder_layers())
                    .map(|l| make(if l == 0 { d } else { f }, f))
                    .collect()
            })
            .collect();
        let attn_w = make(f, hp.attention_dim);
        let attn_q = make(hp.attention_dim, 1);
        let dec_w = make(f, d);
        ModelParams {
            encoder,
            attn_w,
            attn_b: DenseMatrix::zeros(1, hp.attention_dim),
            attn_q,
            dec_w,
        }
    }

    /// Glorot-uniform weights, zero attention bias.
    pub fn init(hp: &HyperParams, d: usize, k: usize, rng: &mut impl Rng) -> Self {
        Self::build(hp, d, k, |r, c| glorot(r, c, rng))
    }

    pub fn zeros(hp: &HyperParams, d: usize, k: usize) -> Self {
        Self::build(hp, d, k, DenseMatrix::zeros)
    }

    pub fn zeros_like(&self) -> Self {
        let mut p = self.clone();
        p.for_each_mut(|t| t.data_mut().fill(0.0));
        p
    }

    /// Tensors in a fixed canonical order.
    pub fn tensors(&self) -> Vec<&DenseMatrix> {
        let mut out: Vec<&DenseMatrix> = self.encoder.iter().flatten().collect();
        out.extend([&self.attn_w, &self.attn_b, &self.attn_q, &self.dec_w]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix> {
        let mut out: Vec<&mut DenseMatrix> = self.encoder.iter_mut().flatten().collect();
        out.extend([&mut self.attn_w, &mut self.attn_b, &mut self.attn_q, &mut self.dec_w]);
        out
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut DenseMatrix)) {
        for t in self.tensors_mut() {
            f(t);
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.data().len()).sum()
    }

    /// SHA-256 over the little-endian bits of every scalar, hex encoded.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for t in self.tensors() {
            for v in t.data() {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Checks every shape against the network dimensions and hyperparameters.
    pub fn validate(&self, hp: &HyperParams, d: usize, k: usize) -> Result<()> {
        let f = hp.embedding_dim;
        let mismatch = |what: &str, got: (usize, usize), want: (usize, usize)| {
            Err(Error::shape(
                "params",
                format!("{what} is {}x{}, expected {}x{}", got.0, got.1, want.0, want.1),
            ))
        };
        if self.encoder.len() != k {
            return Err(Error::shape(
                "params",
                format!("{} encoder stacks for {k} views", self.encoder.len()),
            ));
        }
        for stack in &self.encoder {
            if stack.len() != hp.encoder_layers() {
                return Err(Error::shape(
                    "params",
                    format!("{} encoder layers, expected {}", stack.len(), hp.encoder_layers()),
                ));
            }
            for (l, w) in stack.iter().enumerate() {
                let want = (if l == 0 { d } else { f }, f);
                if w.shape() != want {
                    return mismatch("encoder weight", w.shape(), want);
                }
            }
        }
        for (what, t, want) in [
            ("attn_w", &self.attn_w, (f, hp.attention_dim)),
            ("attn_b", &self.attn_b, (1, hp.attention_dim)),
            ("attn_q", &self.attn_q, (hp.attention_dim, 1)),
            ("dec_w", &self.dec_w, (f, d)),
        ] {
            if t.shape() != want {
                return mismatch(what, t.shape(), want);
            }
        }
        if self.tensors().iter().any(|t| !t.is_finite()) {
            return Err(Error::Invalid("parameters contain non-finite values".into()));
        }
        Ok(())
    }
}

/// `Ã^L X` for one view.
pub fn propagate(view: &ViewGraph, x: &DenseMatrix, hops: usize) -> Result<DenseMatrix> {
    let mut p = x.clone();
    for _ in 0..hops {
        p = tensor::spmm(view.normalized(), &p)?;
    }
    Ok(p)
}

/// Parameter-free quantities derived once per dataset.
#[derive(Debug, Clone)]
pub struct Prepared<'a> {
    network: &'a MultiViewNetwork,
    /// `Ã_k^L X` per view; empty in multilayer mode.
    propagated: Vec<DenseMatrix>,
    /// Normalized union of all views, used by the attribute decoder.
    union_norm: SparseMatrix,
}

impl<'a> Prepared<'a> {
    pub fn new(network: &'a MultiViewNetwork, hp: &HyperParams) -> Result<Self> {
        hp.validate()?;
        let propagated = match hp.encoder {
            EncoderMode::Simplified => network
                .views()
                .iter()
                .map(|v| propagate(v, network.attributes(), hp.filter_order))
                .collect::<Result<_>>()?,
            EncoderMode::Multilayer => Vec::new(),
        };
        let union_norm = normalize(&union_adjacency(network))?;
        Ok(Prepared {
            network,
            propagated,
            union_norm,
        })
    }

    pub fn network(&self) -> &'a MultiViewNetwork {
        self.network
    }

    pub fn propagated(&self) -> &[DenseMatrix] {
        &self.propagated
    }

    pub fn union_norm(&self) -> &SparseMatrix {
        &self.union_norm
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutputs {
    pub per_view_z: Vec<DenseMatrix>,
    pub fused_z: DenseMatrix,
    pub attn_weights: Vec<f64>,
    pub recon_x: DenseMatrix,
    pub loss_structure: Vec<f64>,
    pub loss_structure_mean: f64,
    pub loss_attribute: f64,
    pub loss_total: f64,
}

/// Tape handles produced by [`record`].
pub(crate) struct Recorded {
    pub encoder: Vec<Vec<Var>>,
    pub attn_w: Var,
    pub attn_b: Var,
    pub attn_q: Var,
    pub dec_w: Var,
    pub per_view_z: Vec<Var>,
    pub fused: Var,
    pub recon: Var,
    pub structure: Vec<Var>,
    pub attribute: Var,
    pub total: Var,
}

fn activate(tape: &mut GradientTape<'_>, v: Var, g: Activation) -> Result<Var> {
    match g {
        Activation::Relu => tape.relu(v),
        Activation::Tanh => tape.tanh(v),
        Activation::Identity => Ok(v),
        Activation::Sigmoid => Err(Error::Invalid("sigmoid is not a supported encoder activation".into())),
    }
}

/// Records the full forward computation onto `tape`. `samples`, when given,
/// replaces the exact structure loss by the sampled estimate per view.
pub(crate) fn record<'a>(
    tape: &mut GradientTape<'a>,
    prepared: &'a Prepared<'a>,
    params: &ModelParams,
    hp: &HyperParams,
    samples: Option<&'a [PairSample]>,
) -> Result<Recorded> {
    let network = prepared.network;
    params.validate(hp, network.d(), network.k())?;
    if hp.encoder == EncoderMode::Simplified && prepared.propagated.len() != network.k() {
        return Err(Error::Invalid("prepared data lacks the propagated features".into()));
    }

    let encoder: Vec<Vec<Var>> = params
        .encoder
        .iter()
        .map(|stack| stack.iter().map(|w| tape.param(w.clone())).collect())
        .collect::<Result<_>>()?;
    let attn_w = tape.param(params.attn_w.clone())?;
    let attn_b = tape.param(params.attn_b.clone())?;
    let attn_q = tape.param(params.attn_q.clone())?;
    let dec_w = tape.param(params.dec_w.clone())?;

    let mut per_view_z = Vec::with_capacity(network.k());
    for (k, view) in network.views().iter().enumerate() {
        let z = match hp.encoder {
            EncoderMode::Simplified => {
                let pre = tape.matmul_const(&prepared.propagated[k], encoder[k][0])?;
                activate(tape, pre, hp.activation)?
            }
            EncoderMode::Multilayer => {
                let mut h: Option<Var> = None;
                for &w in &encoder[k] {
                    let hw = match h {
                        None => tape.matmul_const(network.attributes(), w)?,
                        Some(h) => tape.matmul(h, w)?,
                    };
                    let pre = tape.spmm(view.normalized(), hw)?;
                    h = Some(activate(tape, pre, hp.activation)?);
                }
                h.expect("at least one layer")
            }
        };
        per_view_z.push(z);
    }

    let scores: Vec<Var> = match hp.fusion {
        FusionMode::Attention => per_view_z
            .iter()
            .map(|&z| {
                let proj = tape.matmul(z, attn_w)?;
                let shifted = tape.add_bias(proj, attn_b)?;
                let act = tape.tanh(shifted)?;
                let per_node = tape.matmul(act, attn_q)?;
                tape.mean(per_node)
            })
            .collect::<Result<_>>()?,
        FusionMode::Average => per_view_z
            .iter()
            .map(|_| tape.constant(DenseMatrix::scalar(0.0)))
            .collect::<Result<_>>()?,
    };
    let fused = tape.softmax_weighted_sum(scores, per_view_z.clone())?;

    let mut structure = Vec::with_capacity(network.k());
    for (k, view) in network.views().iter().enumerate() {
        let loss = match samples {
            Some(s) => tape.sampled_sigmoid_l1(per_view_z[k], &s[k])?,
            None => tape.sigmoid_inner_product_l1(per_view_z[k], view.adjacency(), hp.block_size)?,
        };
        structure.push(loss);
    }

    let smoothed = tape.spmm(&prepared.union_norm, fused)?;
    let pre = tape.matmul(smoothed, dec_w)?;
    let recon = activate(tape, pre, hp.activation)?;
    let attribute = tape.frobenius_loss(recon, network.attributes())?;

    let k = network.k() as f64;
    let mut terms: Vec<(Var, f64)> = structure.iter().map(|&s| (s, hp.epsilon / k)).collect();
    terms.push((attribute, 1.0 - hp.epsilon));
    let total = tape.linear_combination(terms)?;

    Ok(Recorded {
        encoder,
        attn_w,
        attn_b,
        attn_q,
        dec_w,
        per_view_z,
        fused,
        recon,
        structure,
        attribute,
        total,
    })
}

fn outputs(tape: &GradientTape<'_>, rec: &Recorded) -> ForwardOutputs {
    let loss_structure: Vec<f64> = rec.structure.iter().map(|&v| tape.value(v).item()).collect();
    let loss_structure_mean = loss_structure.iter().sum::<f64>() / loss_structure.len() as f64;
    ForwardOutputs {
        per_view_z: rec.per_view_z.iter().map(|&v| tape.value(v).clone()).collect(),
        fused_z: tape.value(rec.fused).clone(),
        attn_weights: tape.softmax_weights(rec.fused).expect("fusion node").to_vec(),
        recon_x: tape.value(rec.recon).clone(),
        loss_structure,
        loss_structure_mean,
        loss_attribute: tape.value(rec.attribute).item(),
        loss_total: tape.value(rec.total).item(),
    }
}

/// Runs the model on prepared data.
pub fn forward(prepared: &Prepared<'_>, params: &ModelParams, hp: &HyperParams) -> Result<ForwardOutputs> {
    let mut tape = GradientTape::new();
    let rec = record(&mut tape, prepared, params, hp, None)?;
    Ok(outputs(&tape, &rec))
}

/// Forward pass plus the tape it was recorded on, for callers that differentiate.
pub(crate) fn forward_on_tape<'a>(
    tape: &mut GradientTape<'a>,
    prepared: &'a Prepared<'a>,
    params: &ModelParams,
    hp: &HyperParams,
    samples: Option<&'a [PairSample]>,
) -> Result<(Recorded, ForwardOutputs)> {
    let rec = record(tape, prepared, params, hp, samples)?;
    let out = outputs(tape, &rec);
    Ok((rec, out))
}

/// Embeddings of one view, outside of any tape.
pub fn encode_view(
    network: &MultiViewNetwork,
    view_index: usize,
    params: &ModelParams,
    hp: &HyperParams,
) -> Result<DenseMatrix> {
    let view = network
        .views()
        .get(view_index)
        .ok_or_else(|| Error::Invalid(format!("no view with index {view_index}")))?;
    let stack = params
        .encoder
        .get(view_index)
        .ok_or_else(|| Error::shape("encode_view", "no encoder weights for this view"))?;
    let g = hp.activation;
    match hp.encoder {
        EncoderMode::Simplified => {
            let w = stack
                .first()
                .ok_or_else(|| Error::shape("encode_view", "empty encoder stack"))?;
            let p = propagate(view, network.attributes(), hp.filter_order)?;
            Ok(tensor::elementwise(g, &tensor::matmul(&p, w)?))
        }
        EncoderMode::Multilayer => {
            let mut h = network.attributes().clone();
            for w in stack {
                h = tensor::elementwise(g, &tensor::spmm(view.normalized(), &tensor::matmul(&h, w)?)?);
            }
            Ok(h)
        }
    }
}

/// Fuses per-view embeddings; returns the fused matrix and the view weights.
pub fn fuse(per_view_z: &[DenseMatrix], params: &ModelParams, hp: &HyperParams) -> Result<(DenseMatrix, Vec<f64>)> {
    let first = per_view_z
        .first()
        .ok_or_else(|| Error::Invalid("fuse needs at least one view".into()))?;
    if per_view_z.iter().any(|z| z.shape() != first.shape()) {
        return Err(Error::shape("fuse", "views have different embedding shapes"));
    }
    let weights = match hp.fusion {
        FusionMode::Average => vec![1.0 / per_view_z.len() as f64; per_view_z.len()],
        FusionMode::Attention => {
            let scores = per_view_z
                .iter()
                .map(|z| view_importance(z, params))
                .collect::<Result<Vec<_>>>()?;
            tensor::softmax(&scores)
        }
    };
    let mut fused = DenseMatrix::zeros(first.n_rows(), first.n_cols());
    for (z, &w) in per_view_z.iter().zip(&weights) {
        fused.add_scaled(z, w);
    }
    Ok((fused, weights))
}

/// Node-averaged attention score `mean_i qᵀ tanh(W z_i + b)`.
pub fn view_importance(z: &DenseMatrix, params: &ModelParams) -> Result<f64> {
    let proj = tensor::matmul(z, &params.attn_w)?;
    if params.attn_b.shape() != (1, proj.n_cols()) || params.attn_q.shape() != (proj.n_cols(), 1) {
        return Err(Error::shape("view_importance", "attention parameter shapes disagree"));
    }
    let mut total = 0.0;
    for row in proj.rows() {
        total += row
            .iter()
            .zip(params.attn_b.data())
            .zip(params.attn_q.data())
            .map(|((x, b), q)| q * (x + b).tanh())
            .sum::<f64>();
    }
    Ok(total / z.n_rows().max(1) as f64)
}

/// Structure reconstruction loss of one view.
pub fn decode_structure(z_view: &DenseMatrix, target: &SparseMatrix, block: usize) -> Result<f64> {
    structure::l1_loss(z_view, target, block)
}

/// `g(Ã_union · Z̃ · W_dec)`.
pub fn decode_attributes(
    fused_z: &DenseMatrix,
    union_norm: &SparseMatrix,
    params: &ModelParams,
    activation: Activation,
) -> Result<DenseMatrix> {
    let smoothed = tensor::spmm(union_norm, fused_z)?;
    Ok(tensor::elementwise(
        activation,
        &tensor::matmul(&smoothed, &params.dec_w)?,
    ))
}

/// Per-node anomaly score with its two components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    /// Mean over views of the L1 structure row error.
    pub structure: Vec<f64>,
    /// Squared Euclidean attribute reconstruction error.
    pub attribute: Vec<f64>,
    /// `epsilon · structure + (1 - epsilon) · attribute`.
    pub total: Vec<f64>,
}

pub fn score_breakdown(prepared: &Prepared<'_>, params: &ModelParams, hp: &HyperParams) -> Result<ScoreBreakdown> {
    let out = forward(prepared, params, hp)?;
    let network = prepared.network;
    let n = network.n();
    let k = network.k() as f64;
    let mut structure = vec![0.0; n];
    for (z, view) in out.per_view_z.iter().zip(network.views()) {
        for (s, e) in structure
            .iter_mut()
            .zip(structure::row_errors(z, view.adjacency(), hp.block_size)?)
        {
            *s += e;
        }
    }
    structure.iter_mut().for_each(|s| *s /= k);
    let diff = out.recon_x.sub(network.attributes())?;
    let attribute: Vec<f64> = diff.rows().map(|r| r.iter().map(|v| v * v).sum()).collect();
    let total = structure
        .iter()
        .zip(&attribute)
        .map(|(s, a)| hp.epsilon * s + (1.0 - hp.epsilon) * a)
        .collect();
    Ok(ScoreBreakdown {
        structure,
        attribute,
        total,
    })
}

/// Per-node anomaly scores; higher means more anomalous.
pub fn anomaly_scores(prepared: &Prepared<'_>, params: &ModelParams, hp: &HyperParams) -> Result<Vec<f64>> {
    Ok(score_breakdown(prepared, params, hp)?.total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{adjacency_from_edges, ViewGraph};
    use crate::rng;

    fn hp(l: usize, f: usize) -> HyperParams {
        HyperParams {
            filter_order: l,
            embedding_dim: f,
            attention_dim: f,
            ..HyperParams::default()
        }
    }

    fn one_view(n: usize, edges: &[(usize, usize)], x: DenseMatrix) -> MultiViewNetwork {
        let v = ViewGraph::from_edges("v", n, edges).unwrap();
        MultiViewNetwork::new(vec![v], x, None).unwrap()
    }

    #[test]
    fn encode_single_node() {
        let net = one_view(1, &[], DenseMatrix::scalar(1.0));
        for l in 1..4 {
            let h = hp(l, 1);
            let mut p = ModelParams::zeros(&h, 1, 1);
            p.encoder[0][0] = DenseMatrix::scalar(2.0);
            assert_eq!(encode_view(&net, 0, &p, &h).unwrap().item(), 2.0);
        }
    }

    #[test]
    fn encode_k2_averages() {
        let net = one_view(2, &[(0, 1)], DenseMatrix::column(&[1.0, 3.0]));
        let h = hp(1, 1);
        let mut p = ModelParams::zeros(&h, 1, 1);
        p.encoder[0][0] = DenseMatrix::scalar(1.0);
        let z = encode_view(&net, 0, &p, &h).unwrap();
        assert!(z.data().iter().all(|v| (v - 2.0).abs() < 1e-12));
    }

    #[test]
    fn propagation_matches_repeated_dense_products() {
        let mut r = rng::stream(8, "test");
        let mut edges = Vec::new();
        for i in 0..8 {
            for j in i + 1..8 {
                if r.random_bool(0.35) {
                    edges.push((i, j));
                }
            }
        }
        let x = DenseMatrix::from_vec(8, 3, (0..24).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
        let net = one_view(8, &edges, x.clone());
        let dense = net.view(0).normalized().to_dense();
        let mut want = x;
        for _ in 0..3 {
            want = tensor::matmul(&dense, &want).unwrap();
        }
        let got = propagate(net.view(0), net.attributes(), 3).unwrap();
        assert!(got.max_abs_diff(&want) <= 1e-12);
    }

    #[test]
    fn fuse_identical_views_is_uniform() {
        let h = hp(1, 2);
        let mut r = rng::stream(1, "test");
        let p = ModelParams::init(&h, 3, 3, &mut r);
        let z = DenseMatrix::from_rows(&[[0.1, 0.7], [1.2, -0.3]]);
        let (fused, w) = fuse(&[z.clone(), z.clone(), z.clone()], &p, &h).unwrap();
        for a in &w {
            assert!((a - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!(fused.max_abs_diff(&z) < 1e-15);
        let (fused, w) = fuse(std::slice::from_ref(&z), &p, &h).unwrap();
        assert_eq!(w, vec![1.0]);
        assert_eq!(fused, z);
    }

    #[test]
    fn fuse_hand_evaluated_softmax() {
        let h = hp(1, 1);
        let mut p = ModelParams::zeros(&h, 1, 2);
        p.attn_w = DenseMatrix::scalar(1.0);
        p.attn_q = DenseMatrix::scalar(1.0);
        let z1 = DenseMatrix::column(&[0.5, 1.0, -0.2]);
        let z2 = DenseMatrix::column(&[2.0, 0.0, 0.3]);
        let e1 = (0.5f64.tanh() + 1.0f64.tanh() + (-0.2f64).tanh()) / 3.0;
        let e2 = (2.0f64.tanh() + 0.0 + 0.3f64.tanh()) / 3.0;
        let a1 = e1.exp() / (e1.exp() + e2.exp());
        let (fused, w) = fuse(&[z1.clone(), z2.clone()], &p, &h).unwrap();
        assert!((w[0] - a1).abs() < 1e-12 && (w[1] - (1.0 - a1)).abs() < 1e-12);
        assert!((fused[(0, 0)] - (a1 * 0.5 + (1.0 - a1) * 2.0)).abs() < 1e-12);
        assert!(fuse(&[z1, DenseMatrix::zeros(2, 1)], &p, &h).is_err());
    }

    #[test]
    fn average_fusion_weights() {
        let h = HyperParams {
            fusion: FusionMode::Average,
            ..hp(1, 1)
        };
        let p = ModelParams::zeros(&h, 1, 4);
        let z = vec![
            DenseMatrix::scalar(4.0),
            DenseMatrix::scalar(0.0),
            DenseMatrix::scalar(0.0),
            DenseMatrix::scalar(0.0),
        ];
        let (fused, w) = fuse(&z, &p, &h).unwrap();
        assert_eq!(w, vec![0.25; 4]);
        assert_eq!(fused.item(), 1.0);
    }

    #[test]
    fn attribute_decoder_cases() {
        let h = hp(1, 1);
        let mut p = ModelParams::zeros(&h, 1, 1);
        p.dec_w = DenseMatrix::scalar(-2.0);
        let one = SparseMatrix::identity(1);
        let out = decode_attributes(&DenseMatrix::scalar(1.0), &one, &p, Activation::Relu).unwrap();
        assert_eq!(out.item(), 0.0);

        let h = hp(1, 2);
        let mut p = ModelParams::zeros(&h, 2, 1);
        p.dec_w = DenseMatrix::identity(2);
        let x = DenseMatrix::from_rows(&[[1.0, -2.0], [-0.5, 3.0], [0.0, 1.0]]);
        let edgeless = normalize(&SparseMatrix::zeros(3, 3)).unwrap();
        let out = decode_attributes(&x, &edgeless, &p, Activation::Relu).unwrap();
        assert_eq!(out, tensor::elementwise(Activation::Relu, &x));
    }

    #[test]
    fn joint_loss_arithmetic() {
        let net = one_view(2, &[], DenseMatrix::from_rows(&[[1.0], [2.0]]));
        let h = hp(1, 1);
        let prepared = Prepared::new(&net, &h).unwrap();
        let p = ModelParams::zeros(&h, 1, 1);
        let out = forward(&prepared, &p, &h).unwrap();
        // zero params: σ(0) everywhere, X̂ = 0
        assert_eq!(out.loss_structure, vec![2.0]);
        assert_eq!(out.loss_attribute, 5.0);
        assert_eq!(out.loss_total, 0.5 * 2.0 + 0.5 * 5.0);
        let again = forward(&prepared, &p, &h).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn decomposition_of_scores() {
        let mut r = rng::stream(5, "test");
        let n = 9;
        let mut views = Vec::new();
        for k in 0..2 {
            let mut e = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if r.random_bool(0.3) {
                        e.push((i, j));
                    }
                }
            }
            views.push(ViewGraph::new(format!("v{k}"), adjacency_from_edges(n, &e).unwrap()).unwrap());
        }
        let x = DenseMatrix::from_vec(n, 4, (0..n * 4).map(|_| r.random_range(0.0..1.0)).collect()).unwrap();
        let net = MultiViewNetwork::new(views, x, None).unwrap();
        let h = HyperParams {
            epsilon: 0.3,
            ..hp(2, 3)
        };
        let prepared = Prepared::new(&net, &h).unwrap();
        let p = ModelParams::init(&h, 4, 2, &mut r);
        let out = forward(&prepared, &p, &h).unwrap();
        let scores = anomaly_scores(&prepared, &p, &h).unwrap();
        let total: f64 = scores.iter().sum();
        assert!((total - out.loss_total).abs() < 1e-9 * out.loss_total.max(1.0));

        for (k, z) in out.per_view_z.iter().enumerate() {
            assert!(encode_view(&net, k, &p, &h).unwrap().max_abs_diff(z) < 1e-12);
        }
        let (fused, w) = fuse(&out.per_view_z, &p, &h).unwrap();
        assert!(fused.max_abs_diff(&out.fused_z) < 1e-12);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let recon = decode_attributes(&out.fused_z, prepared.union_norm(), &p, h.activation).unwrap();
        assert!(recon.max_abs_diff(&out.recon_x) < 1e-12);
    }

    #[test]
    fn exact_reconstruction_scores_zero() {
        // identity activation, zero embeddings: no way to hit σ(·)=0 targets, so
        // check the attribute component alone on a node that is reproduced exactly
        let net = one_view(1, &[], DenseMatrix::scalar(0.0));
        let h = hp(1, 1);
        let prepared = Prepared::new(&net, &h).unwrap();
        let p = ModelParams::zeros(&h, 1, 1);
        let b = score_breakdown(&prepared, &p, &h).unwrap();
        assert_eq!(b.attribute, vec![0.0]);
    }

    #[test]
    fn params_validation() {
        let h = hp(2, 3);
        let mut r = rng::stream(0, "test");
        let p = ModelParams::init(&h, 4, 2, &mut r);
        assert!(p.validate(&h, 4, 2).is_ok());
        assert!(p.validate(&h, 5, 2).is_err());
        assert!(p.validate(&h, 4, 3).is_err());
        let multi = HyperParams {
            encoder: EncoderMode::Multilayer,
            ..h.clone()
        };
        let pm = ModelParams::init(&multi, 4, 2, &mut r);
        assert_eq!(pm.encoder[0].len(), 2);
        assert_eq!(pm.encoder[0][1].shape(), (3, 3));
        assert!(pm.validate(&h, 4, 2).is_err());
    }

    #[test]
    fn hyperparam_validation() {
        let mut h = HyperParams::default();
        assert!(h.validate().is_ok());
        h.epsilon = 1.0;
        assert!(h.validate().is_err());
        h = HyperParams {
            filter_order: 0,
            ..HyperParams::default()
        };
        assert!(h.validate().is_err());
    }
}
