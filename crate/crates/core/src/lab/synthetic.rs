//! Seeded community-structured multi-view networks for benchmarks and tests.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{MultiViewNetwork, ViewGraph};
use crate::lab::{inject, GroundTruth, InjectionSpec, TargetViews};
use crate::rng;
use crate::tensor::DenseMatrix;

/// Edge probabilities of one stochastic-block view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewSpec {
    pub name: String,
    /// Probability of an edge between two members of the same community.
    pub p_in: f64,
    /// Probability of an edge across communities.
    pub p_out: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub communities: usize,
    pub d: usize,
    pub views: Vec<ViewSpec>,
    /// Each community activates this fraction of the attribute columns.
    pub topic_fraction: f64,
    /// Attribute value on a community's active columns.
    pub topic_weight: f64,
    /// Standard deviation of the per-entry Gaussian noise.
    pub noise: f64,
    /// Each node's topic weight is scaled by a factor drawn uniformly from
    /// `[1 - scale_spread, 1 + scale_spread]`.
    #[serde(default)]
    pub scale_spread: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// 200 nodes in 6 communities with disjoint attribute topics, observed
    /// through 3 sparse views of decreasing density with no cross-community
    /// edges. Attributes are wider (96) than the default embedding (30).
    pub fn benchmark(seed: u64) -> Self {
        let view = |name: &str, p_in: f64| ViewSpec {
            name: name.into(),
            p_in,
            p_out: 0.0,
        };
        SyntheticSpec {
            n: 200,
            communities: 6,
            d: 96,
            views: vec![view("dense", 0.06), view("medium", 0.04), view("sparse", 0.03)],
            topic_fraction: 1.0 / 6.0,
            topic_weight: 2.0,
            noise: 0.1,
            scale_spread: 0.0,
            seed,
        }
    }
}

/// Node-to-community assignment used by [`generate`], in node order.
pub fn communities(spec: &SyntheticSpec) -> Vec<usize> {
    let mut r = rng::stream(spec.seed, rng::STREAM_SYNTHETIC);
    let mut assignment: Vec<usize> = (0..spec.n).map(|i| i % spec.communities).collect();
    assignment.shuffle(&mut r);
    assignment
}

pub fn generate(spec: &SyntheticSpec) -> Result<MultiViewNetwork> {
    if spec.n == 0 || spec.communities == 0 || spec.d == 0 || spec.views.is_empty() {
        return Err(Error::Invalid(
            "synthetic spec needs n, communities, d and views > 0".into(),
        ));
    }
    for v in &spec.views {
        if !(0.0..=1.0).contains(&v.p_in) || !(0.0..=1.0).contains(&v.p_out) {
            return Err(Error::Invalid(format!(
                "view '{}' has probabilities outside [0, 1]",
                v.name
            )));
        }
    }
    let assignment = communities(spec);
    // draws after the assignment shuffle continue on a separate stream
    let mut r = rng::stream(spec.seed, "synthetic-body");

    let active = ((spec.d as f64 * spec.topic_fraction).round() as usize).clamp(1, spec.d);
    // consecutive windows of one column permutation: topics are disjoint
    // whenever they fit side by side
    let mut cols: Vec<usize> = (0..spec.d).collect();
    cols.shuffle(&mut r);
    let mut centroids = DenseMatrix::zeros(spec.communities, spec.d);
    for c in 0..spec.communities {
        for t in 0..active {
            centroids[(c, cols[(c * active + t) % spec.d])] = spec.topic_weight;
        }
    }
    let noise = Normal::new(0.0, spec.noise.max(0.0)).map_err(|e| Error::Invalid(format!("noise: {e}")))?;
    if !(0.0..=1.0).contains(&spec.scale_spread) {
        return Err(Error::Invalid("scale_spread must lie in [0, 1]".into()));
    }
    let mut x = DenseMatrix::zeros(spec.n, spec.d);
    for i in 0..spec.n {
        let scale = if spec.scale_spread > 0.0 {
            r.random_range(1.0 - spec.scale_spread..=1.0 + spec.scale_spread)
        } else {
            1.0
        };
        for j in 0..spec.d {
            x[(i, j)] = scale * centroids[(assignment[i], j)] + noise.sample(&mut r);
        }
    }

    let mut views = Vec::with_capacity(spec.views.len());
    for v in &spec.views {
        let mut edges = Vec::new();
        for i in 0..spec.n {
            for j in i + 1..spec.n {
                let p = if assignment[i] == assignment[j] {
                    v.p_in
                } else {
                    v.p_out
                };
                if r.random_bool(p) {
                    edges.push((i, j));
                }
            }
        }
        views.push(ViewGraph::from_edges(v.name.clone(), spec.n, &edges)?);
    }
    MultiViewNetwork::new(views, x, None)
}

/// Injection used with [`SyntheticSpec::benchmark`]: one 10-clique plus ten
/// attribute anomalies.
pub fn benchmark_injection(seed: u64) -> InjectionSpec {
    InjectionSpec {
        clique_size: 10,
        n_cliques: 1,
        n_attr_anomalies: 10,
        candidate_pool: 50,
        target_views: TargetViews::All,
        seed,
    }
}

/// The seeded benchmark: generated network with anomalies already planted.
pub fn benchmark(seed: u64) -> Result<(MultiViewNetwork, GroundTruth)> {
    let clean = generate(&SyntheticSpec::benchmark(seed))?;
    inject(&clean, &benchmark_injection(seed))
}
