#![allow(dead_code)]

pub mod oracle;

use anomman_core::{DenseMatrix, EncoderMode, FusionMode, HyperParams, ModelParams, MultiViewNetwork, ViewGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub network: MultiViewNetwork,
    pub params: ModelParams,
    pub hp: HyperParams,
    pub edges: Vec<Vec<(usize, usize)>>,
}

pub fn random_edges(n: usize, p: f64, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// Random network and parameters with entries drawn from ±scale.
pub fn instance(seed: u64, n: usize, k: usize, d: usize, f: usize, hp: HyperParams) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges: Vec<Vec<(usize, usize)>> = (0..k).map(|_| random_edges(n, 0.4, &mut rng)).collect();
    let views = edges
        .iter()
        .enumerate()
        .map(|(i, e)| ViewGraph::from_edges(format!("v{i}"), n, e).unwrap())
        .collect();
    let x = DenseMatrix::from_vec(n, d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let network = MultiViewNetwork::new(views, x, None).unwrap();
    let hp = HyperParams {
        embedding_dim: f,
        attention_dim: f,
        ..hp
    };
    let params = ModelParams::init(&hp, d, k, &mut rng);
    Instance {
        network,
        params,
        hp,
        edges,
    }
}

pub fn hp(fusion: FusionMode, encoder: EncoderMode, filter_order: usize) -> HyperParams {
    HyperParams {
        fusion,
        encoder,
        filter_order,
        ..HyperParams::default()
    }
}
