//! Gradients of the joint loss, the Adam optimizer, the training loop and
//! model checkpoints.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::MultiViewNetwork;
use crate::model::{self, ForwardOutputs, HyperParams, ModelParams, Prepared};
use crate::rng;
use crate::structure::PairSample;
use crate::tape::GradientTape;
use crate::tensor::DenseMatrix;

/// Loss outputs and the gradient of `loss_total` for every parameter tensor.
pub fn loss_and_grad(
    prepared: &Prepared<'_>,
    params: &ModelParams,
    hp: &HyperParams,
) -> Result<(ForwardOutputs, ModelParams)> {
    loss_and_grad_sampled(prepared, params, hp, None)
}

fn loss_and_grad_sampled(
    prepared: &Prepared<'_>,
    params: &ModelParams,
    hp: &HyperParams,
    samples: Option<&[PairSample]>,
) -> Result<(ForwardOutputs, ModelParams)> {
    let mut tape = GradientTape::new();
    let (rec, out) = model::forward_on_tape(&mut tape, prepared, params, hp, samples)?;
    let mut g = tape.backward(rec.total)?;
    let mut take = |v, like: &DenseMatrix| {
        g.take(v)
            .unwrap_or_else(|| DenseMatrix::zeros(like.n_rows(), like.n_cols()))
    };
    let encoder = rec
        .encoder
        .iter()
        .zip(&params.encoder)
        .map(|(vars, ws)| vars.iter().zip(ws).map(|(&v, w)| take(v, w)).collect())
        .collect();
    let grads = ModelParams {
        encoder,
        attn_w: take(rec.attn_w, &params.attn_w),
        attn_b: take(rec.attn_b, &params.attn_b),
        attn_q: take(rec.attn_q, &params.attn_q),
        dec_w: take(rec.dec_w, &params.dec_w),
    };
    Ok((out, grads))
}

/// Gradient of the joint loss with respect to every parameter.
pub fn grad(prepared: &Prepared<'_>, params: &ModelParams, hp: &HyperParams) -> Result<ModelParams> {
    Ok(loss_and_grad(prepared, params, hp)?.1)
}

/// Relu on/off pattern of a forward evaluation.
pub fn relu_pattern(prepared: &Prepared<'_>, params: &ModelParams, hp: &HyperParams) -> Result<Vec<bool>> {
    let mut tape = GradientTape::new();
    model::forward_on_tape(&mut tape, prepared, params, hp, None)?;
    Ok(tape.relu_pattern())
}

/// Adam moments and step count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first: Vec<DenseMatrix>,
    pub second: Vec<DenseMatrix>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<DenseMatrix> = params
            .tensors()
            .iter()
            .map(|t| DenseMatrix::zeros(t.n_rows(), t.n_cols()))
            .collect();
        AdamState {
            first: zeros.clone(),
            second: zeros,
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(params: &mut ModelParams, grads: &ModelParams, state: &mut AdamState, lr: f64) -> Result<()> {
    let gs = grads.tensors();
    let mut ps = params.tensors_mut();
    if gs.len() != ps.len() || state.first.len() != ps.len() {
        return Err(Error::shape("adam_step", "parameter, gradient and state lists differ"));
    }
    for ((p, g), m) in ps.iter().zip(&gs).zip(&state.first) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::shape(
                "adam_step",
                format!("{:?} parameter with {:?} gradient", p.shape(), g.shape()),
            ));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (i, p) in ps.iter_mut().enumerate() {
        let g = gs[i].data();
        let m = state.first[i].data_mut();
        let v = state.second[i].data_mut();
        for (j, x) in p.data_mut().iter_mut().enumerate() {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *x -= lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_structure_mean: f64,
    pub loss_attribute: f64,
    pub attn_weights: Vec<f64>,
    pub wall_ms: f64,
}

/// Per-epoch trajectory of one training run. Losses are those of the
/// parameters entering each epoch's update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub hyper: HyperParams,
    pub epochs: Vec<EpochRecord>,
    pub final_checksum: String,
}

impl TrainReport {
    /// Equality of everything except wall-clock timings.
    pub fn same_trajectory(&self, other: &TrainReport) -> bool {
        let strip = |r: &TrainReport| {
            let mut r = r.clone();
            r.epochs.iter_mut().for_each(|e| e.wall_ms = 0.0);
            r
        };
        strip(self) == strip(other)
    }

    /// Tab-separated report: a `#` header echoing the hyperparameters, then one
    /// row per epoch. Wall-clock time is left out so reruns are byte-identical.
    pub fn to_tsv(&self) -> String {
        let h = &self.hyper;
        let mut out = format!(
            "# embedding_dim={} attention_dim={} filter_order={} learning_rate={} epsilon={} \
             fusion={:?} encoder={:?} activation={:?} epochs={} seed={}\n# final_checksum={}\n",
            h.embedding_dim,
            h.attention_dim,
            h.filter_order,
            h.learning_rate,
            h.epsilon,
            h.fusion,
            h.encoder,
            h.activation,
            h.epochs,
            h.seed,
            self.final_checksum
        );
        let k = self.epochs.first().map_or(0, |e| e.attn_weights.len());
        out.push_str("epoch\tloss_total\tloss_structure\tloss_attribute");
        for i in 0..k {
            out.push_str(&format!("\talpha_{i}"));
        }
        out.push('\n');
        for e in &self.epochs {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}",
                e.epoch, e.loss_total, e.loss_structure_mean, e.loss_attribute
            ));
            for a in &e.attn_weights {
                out.push_str(&format!("\t{a}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Initializes parameters from the run seed and trains them.
pub fn train(network: &MultiViewNetwork, hp: &HyperParams) -> Result<(ModelParams, TrainReport)> {
    let prepared = Prepared::new(network, hp)?;
    let params = ModelParams::init(
        hp,
        network.d(),
        network.k(),
        &mut rng::stream(hp.seed, rng::STREAM_INIT),
    );
    train_from(&prepared, params, hp)
}

/// Full-batch Adam on the joint loss for `hp.epochs` epochs.
pub fn train_from(
    prepared: &Prepared<'_>,
    mut params: ModelParams,
    hp: &HyperParams,
) -> Result<(ModelParams, TrainReport)> {
    hp.validate()?;
    if hp.epochs == 0 {
        return Err(Error::Invalid("epochs must be at least 1".into()));
    }
    let network = prepared.network();
    params.validate(hp, network.d(), network.k())?;
    let mut state = AdamState::new(&params);
    let mut report = TrainReport {
        hyper: hp.clone(),
        epochs: Vec::with_capacity(hp.epochs),
        final_checksum: String::new(),
    };
    let mut negatives = rng::stream(hp.seed, "negatives");
    for epoch in 0..hp.epochs {
        let started = Instant::now();
        let samples: Option<Vec<PairSample>> = hp.negative_samples.map(|m| {
            network
                .views()
                .iter()
                .map(|v| PairSample::draw(v.adjacency(), m, &mut negatives))
                .collect()
        });
        let step = loss_and_grad_sampled(prepared, &params, hp, samples.as_deref()).and_then(|(out, g)| {
            if out.loss_total.is_finite() {
                Ok((out, g))
            } else {
                Err(Error::NonFinite { op: "loss" })
            }
        });
        let (out, grads) = match step {
            Ok(v) => v,
            Err(Error::NonFinite { .. }) => {
                report.final_checksum = params.checksum();
                return Err(Error::Divergence {
                    epoch,
                    report: Box::new(report),
                });
            }
            Err(e) => return Err(e),
        };
        adam_step(&mut params, &grads, &mut state, hp.learning_rate)?;
        report.epochs.push(EpochRecord {
            epoch,
            loss_total: out.loss_total,
            loss_structure_mean: out.loss_structure_mean,
            loss_attribute: out.loss_attribute,
            attn_weights: out.attn_weights,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        log::debug!("epoch {epoch}: loss {}", out.loss_total);
    }
    report.final_checksum = params.checksum();
    Ok((params, report))
}

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradCheck {
    pub checked: usize,
    pub passed: usize,
    /// `(tensor, coordinate)` pairs whose ±h evaluations straddle a relu kink.
    pub excluded: Vec<(usize, usize)>,
    /// `(tensor, coordinate, analytic, numeric)` for failed coordinates.
    pub failures: Vec<(usize, usize, f64, f64)>,
}

impl GradCheck {
    pub fn pass_rate(&self) -> f64 {
        if self.checked == 0 {
            1.0
        } else {
            self.passed as f64 / self.checked as f64
        }
    }
}

/// Checks every parameter coordinate against `(L(θ+h) - L(θ-h)) / 2h`.
///
/// A coordinate passes when `|a - n| <= rel_tol * max(|a|, |n|)` or
/// `|a - n| <= abs_floor`. Coordinates whose perturbations change the relu
/// pattern are excluded.
pub fn finite_difference_check(
    prepared: &Prepared<'_>,
    params: &ModelParams,
    hp: &HyperParams,
    h: f64,
    rel_tol: f64,
    abs_floor: f64,
) -> Result<GradCheck> {
    let analytic = grad(prepared, params, hp)?;
    let analytic = analytic.tensors();
    let mut report = GradCheck::default();
    for (t, grad_t) in analytic.iter().enumerate() {
        for c in 0..grad_t.data().len() {
            let mut plus = params.clone();
            plus.tensors_mut()[t].data_mut()[c] += h;
            let mut minus = params.clone();
            minus.tensors_mut()[t].data_mut()[c] -= h;
            if relu_pattern(prepared, &plus, hp)? != relu_pattern(prepared, &minus, hp)? {
                report.excluded.push((t, c));
                continue;
            }
            let lp = model::forward(prepared, &plus, hp)?.loss_total;
            let lm = model::forward(prepared, &minus, hp)?.loss_total;
            let numeric = (lp - lm) / (2.0 * h);
            let a = grad_t.data()[c];
            let err = (a - numeric).abs();
            report.checked += 1;
            if err <= rel_tol * a.abs().max(numeric.abs()) || err <= abs_floor {
                report.passed += 1;
            } else {
                report.failures.push((t, c, a, numeric));
            }
        }
    }
    Ok(report)
}

const CHECKPOINT_FORMAT: &str = "anomman-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

/// Trained parameters plus everything needed to score with them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub hyper: HyperParams,
    pub n: usize,
    pub d: usize,
    pub view_names: Vec<String>,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn new(network: &MultiViewNetwork, hyper: HyperParams, params: ModelParams) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            hyper,
            n: network.n(),
            d: network.d(),
            view_names: network.views().iter().map(|v| v.name().to_string()).collect(),
            params,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes") + "\n"
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let cp: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Format {
            path: origin.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if cp.format != CHECKPOINT_FORMAT || cp.version != CHECKPOINT_VERSION {
            return Err(Error::Format {
                path: origin.to_path_buf(),
                line: 0,
                message: format!("unsupported checkpoint {} v{}", cp.format, cp.version),
            });
        }
        cp.params.validate(&cp.hyper, cp.d, cp.view_names.len())?;
        Ok(cp)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    /// Errors unless the checkpoint was trained on a network of this shape.
    pub fn check_compatible(&self, network: &MultiViewNetwork) -> Result<()> {
        let names: Vec<&str> = network.views().iter().map(|v| v.name()).collect();
        if self.n != network.n() || self.d != network.d() || self.view_names != names {
            return Err(Error::shape(
                "checkpoint",
                format!(
                    "checkpoint has n={}, d={}, views={:?}; dataset has n={}, d={}, views={:?}",
                    self.n,
                    self.d,
                    self.view_names,
                    network.n(),
                    network.d(),
                    names
                ),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ViewGraph;
    use crate::model::{EncoderMode, FusionMode};

    fn small_hp() -> HyperParams {
        HyperParams {
            filter_order: 2,
            embedding_dim: 3,
            attention_dim: 3,
            ..HyperParams::default()
        }
    }

    #[test]
    fn dead_units_on_edgeless_pair() {
        let v = ViewGraph::from_edges("v", 2, &[]).unwrap();
        let net = MultiViewNetwork::new(vec![v], DenseMatrix::from_rows(&[[1.0], [2.0]]), None).unwrap();
        let hp = small_hp();
        let prepared = Prepared::new(&net, &hp).unwrap();
        let g = grad(&prepared, &ModelParams::zeros(&hp, 1, 1), &hp).unwrap();
        // every relu sits at 0, so nothing flows back to the decoder
        assert!(g.dec_w.data().iter().all(|&x| x == 0.0));
        assert!(g.tensors().iter().all(|t| t.is_finite()));
    }

    #[test]
    fn adam_zero_gradient_and_first_step() {
        let hp = HyperParams {
            embedding_dim: 1,
            attention_dim: 1,
            ..HyperParams::default()
        };
        let mut p = ModelParams::zeros(&hp, 1, 1);
        p.dec_w = DenseMatrix::scalar(0.25);
        let before = p.clone();
        let mut state = AdamState::new(&p);
        let zero = p.zeros_like();
        adam_step(&mut p, &zero, &mut state, 0.001).unwrap();
        assert_eq!(p, before);
        assert_eq!(state.step, 1);

        let mut state = AdamState::new(&p);
        let mut g = p.zeros_like();
        g.dec_w = DenseMatrix::scalar(1.0);
        adam_step(&mut p, &g, &mut state, 0.001).unwrap();
        // m̂ = 1, v̂ = 1: Δ = -lr / (1 + eps)
        let expected = 0.25 - 0.001 / (1.0 + 1e-8);
        assert!((p.dec_w.item() - expected).abs() < 1e-9);
        assert!((p.dec_w.item() - (0.25 - 0.001)).abs() < 1e-9);
    }

    #[test]
    fn adam_second_moment_ignores_sign() {
        let hp = small_hp();
        let mut r = rng::stream(3, "test");
        let p = ModelParams::init(&hp, 2, 2, &mut r);
        let g = ModelParams::init(&hp, 2, 2, &mut r);
        let mut neg = g.clone();
        neg.for_each_mut(|t| *t = t.scale(-1.0));
        let (mut p1, mut p2) = (p.clone(), p.clone());
        let (mut s1, mut s2) = (AdamState::new(&p), AdamState::new(&p));
        adam_step(&mut p1, &g, &mut s1, 0.01).unwrap();
        adam_step(&mut p2, &neg, &mut s2, 0.01).unwrap();
        assert_eq!(s1.second, s2.second);
    }

    #[test]
    fn adam_shape_mismatch() {
        let hp = small_hp();
        let mut p = ModelParams::zeros(&hp, 2, 1);
        let g = ModelParams::zeros(&hp, 3, 1);
        let mut s = AdamState::new(&p);
        assert!(adam_step(&mut p, &g, &mut s, 0.1).is_err());
    }

    fn tiny_network() -> MultiViewNetwork {
        let a = ViewGraph::from_edges("a", 4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let b = ViewGraph::from_edges("b", 4, &[(0, 2), (1, 3)]).unwrap();
        let x = DenseMatrix::from_rows(&[[1.0, 0.0], [0.5, 0.5], [0.0, 1.0], [1.0, 1.0]]);
        MultiViewNetwork::new(vec![a, b], x, None).unwrap()
    }

    #[test]
    fn epochs_zero_is_rejected() {
        let hp = HyperParams {
            epochs: 0,
            ..small_hp()
        };
        assert!(matches!(train(&tiny_network(), &hp), Err(Error::Invalid(_))));
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let net = tiny_network();
        let hp = HyperParams {
            learning_rate: 0.0,
            epochs: 3,
            ..small_hp()
        };
        let init = ModelParams::init(&hp, 2, 2, &mut rng::stream(hp.seed, rng::STREAM_INIT));
        let (trained, report) = train(&net, &hp).unwrap();
        assert_eq!(trained, init);
        assert_eq!(report.epochs.len(), 3);
    }

    #[test]
    fn divergence_is_reported_with_partial_report() {
        let net = tiny_network();
        let hp = HyperParams {
            learning_rate: 1e300,
            epochs: 5,
            activation: crate::tensor::Activation::Identity,
            ..small_hp()
        };
        match train(&net, &hp) {
            Err(Error::Divergence { epoch, report }) => {
                assert!(epoch >= 1);
                assert_eq!(report.epochs.len(), epoch);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn sampled_structure_loss_trains() {
        let net = tiny_network();
        let hp = HyperParams {
            negative_samples: Some(2),
            epochs: 5,
            ..small_hp()
        };
        let (_, r1) = train(&net, &hp).unwrap();
        let (_, r2) = train(&net, &hp).unwrap();
        assert!(r1.same_trajectory(&r2));
    }

    #[test]
    fn gradient_check_all_variants() {
        let net = tiny_network();
        for (fusion, encoder) in [
            (FusionMode::Attention, EncoderMode::Simplified),
            (FusionMode::Average, EncoderMode::Simplified),
            (FusionMode::Attention, EncoderMode::Multilayer),
        ] {
            let hp = HyperParams {
                fusion,
                encoder,
                ..small_hp()
            };
            let prepared = Prepared::new(&net, &hp).unwrap();
            let p = ModelParams::init(&hp, 2, 2, &mut rng::stream(9, "test"));
            let check = finite_difference_check(&prepared, &p, &hp, 1e-5, 1e-4, 1e-7).unwrap();
            assert!(
                check.failures.is_empty(),
                "{fusion:?}/{encoder:?}: {:?}",
                check.failures
            );
            assert!(check.checked > 0);
        }
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let net = tiny_network();
        let hp = HyperParams {
            epochs: 2,
            ..small_hp()
        };
        let (params, _) = train(&net, &hp).unwrap();
        let cp = Checkpoint::new(&net, hp, params);
        let back = Checkpoint::from_json(&cp.to_json(), Path::new("mem")).unwrap();
        assert_eq!(back, cp);
        assert_eq!(back.to_json(), cp.to_json());
        assert!(back.check_compatible(&net).is_ok());
        assert!(Checkpoint::from_json("{}", Path::new("mem")).is_err());
    }
}
