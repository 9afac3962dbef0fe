//! Anomaly injection and detection metrics.
//!
//! Structural anomalies are planted as cliques whose members are otherwise
//! unrelated; attribute anomalies copy the attributes of the most distant node
//! among a random candidate pool.

mod metrics;
pub mod synthetic;

use std::collections::BTreeSet;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{MultiViewNetwork, ViewGraph};
use crate::rng;
use crate::tensor::DenseMatrix;

pub use metrics::{accuracy_at_k, auc_roc, rank_descending, Roc};

/// Which views receive each planted clique.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetViews {
    All,
    /// One view drawn at random per clique.
    RandomOne,
    Named(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InjectionSpec {
    pub clique_size: usize,
    pub n_cliques: usize,
    pub n_attr_anomalies: usize,
    pub candidate_pool: usize,
    pub target_views: TargetViews,
    pub seed: u64,
}

impl Default for InjectionSpec {
    /// 25 cliques of 6 plus 150 attribute anomalies: 300 in total.
    fn default() -> Self {
        InjectionSpec {
            clique_size: 6,
            n_cliques: 25,
            n_attr_anomalies: 150,
            candidate_pool: 50,
            target_views: TargetViews::All,
            seed: 0,
        }
    }
}

impl InjectionSpec {
    pub fn total(&self) -> usize {
        self.clique_size * self.n_cliques + self.n_attr_anomalies
    }

    pub fn validate(&self, network: &MultiViewNetwork) -> Result<()> {
        let n = network.n();
        if self.clique_size < 2 {
            return Err(Error::Invalid("clique_size must be at least 2".into()));
        }
        if self.clique_size > n {
            return Err(Error::Invalid(format!(
                "clique_size {} exceeds n = {n}",
                self.clique_size
            )));
        }
        if self.total() > n {
            return Err(Error::Invalid(format!(
                "{} anomalies requested but the network has {n} nodes",
                self.total()
            )));
        }
        if self.n_attr_anomalies > 0 && (self.candidate_pool == 0 || n < 2) {
            return Err(Error::Invalid(
                "attribute anomalies need a non-empty candidate pool".into(),
            ));
        }
        if let TargetViews::Named(names) = &self.target_views {
            if names.is_empty() {
                return Err(Error::Invalid("target view list is empty".into()));
            }
            for name in names {
                if network.view_by_name(name).is_none() {
                    return Err(Error::Invalid(format!("unknown target view '{name}'")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    None,
    Structural,
    Attribute,
    /// Anomalous, mechanism not recorded (labels read back from a file).
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub mechanism: Vec<Mechanism>,
}

impl GroundTruth {
    pub fn from_ids(n: usize, ids: &[usize]) -> Result<Self> {
        let mut mechanism = vec![Mechanism::None; n];
        for &id in ids {
            if id >= n {
                return Err(Error::NodeOutOfRange { id, n });
            }
            mechanism[id] = Mechanism::Unknown;
        }
        Ok(GroundTruth { mechanism })
    }

    pub fn n(&self) -> usize {
        self.mechanism.len()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.mechanism.iter().map(|m| *m != Mechanism::None).collect()
    }

    pub fn anomalous_ids(&self) -> Vec<usize> {
        (0..self.n())
            .filter(|&i| self.mechanism[i] != Mechanism::None)
            .collect()
    }

    pub fn count(&self) -> usize {
        self.anomalous_ids().len()
    }

    pub fn count_of(&self, m: Mechanism) -> usize {
        self.mechanism.iter().filter(|&&x| x == m).count()
    }
}

/// Plants structural and attribute anomalies into a copy of `network`.
pub fn inject(network: &MultiViewNetwork, spec: &InjectionSpec) -> Result<(MultiViewNetwork, GroundTruth)> {
    spec.validate(network)?;
    let n = network.n();
    let mut rng_inj = rng::stream(spec.seed, rng::STREAM_INJECTION);
    let mut rng_cand = rng::stream(spec.seed, rng::STREAM_CANDIDATES);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_inj);
    let n_struct = spec.clique_size * spec.n_cliques;
    let (clique_nodes, rest) = order.split_at(n_struct);
    let attr_nodes = &rest[..spec.n_attr_anomalies];

    let mut mechanism = vec![Mechanism::None; n];
    let mut edges: Vec<BTreeSet<(usize, usize)>> = network.views().iter().map(|v| v.edges().collect()).collect();
    for clique in clique_nodes.chunks(spec.clique_size) {
        let targets: Vec<usize> = match &spec.target_views {
            TargetViews::All => (0..network.k()).collect(),
            TargetViews::RandomOne => vec![rng_inj.random_range(0..network.k())],
            TargetViews::Named(names) => network
                .views()
                .iter()
                .enumerate()
                .filter(|(_, v)| names.iter().any(|n| n == v.name()))
                .map(|(k, _)| k)
                .collect(),
        };
        for (x, &a) in clique.iter().enumerate() {
            mechanism[a] = Mechanism::Structural;
            for &b in &clique[x + 1..] {
                for &k in &targets {
                    edges[k].insert((a.min(b), a.max(b)));
                }
            }
        }
    }

    let original = network.attributes();
    let mut attributes = original.clone();
    let pool = spec.candidate_pool.min(n - 1);
    for &i in attr_nodes {
        mechanism[i] = Mechanism::Attribute;
        let mut best = None;
        let mut best_dist = f64::NEG_INFINITY;
        for c in index::sample(&mut rng_cand, n - 1, pool) {
            let j = if c >= i { c + 1 } else { c };
            let dist = squared_distance(original.row(i), original.row(j));
            if dist > best_dist || (dist == best_dist && Some(j) < best) {
                best_dist = dist;
                best = Some(j);
            }
        }
        let j = best.expect("non-empty pool");
        attributes.row_mut(i).copy_from_slice(original.row(j));
    }

    let views = network
        .views()
        .iter()
        .zip(edges)
        .map(|(v, e)| ViewGraph::from_edges(v.name(), n, &e.into_iter().collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    let perturbed = network.with_parts(views, attributes)?;
    Ok((perturbed, GroundTruth { mechanism }))
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Row of `x` farthest from row `i` by Euclidean distance (lowest index on ties).
pub fn farthest_row(x: &DenseMatrix, i: usize) -> usize {
    (0..x.n_rows())
        .filter(|&j| j != i)
        .fold((usize::MAX, f64::NEG_INFINITY), |(bj, bd), j| {
            let d = squared_distance(x.row(i), x.row(j));
            if d > bd {
                (j, d)
            } else {
                (bj, bd)
            }
        })
        .0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edgeless(n: usize, d: usize, seed: u64) -> MultiViewNetwork {
        let mut r = rng::stream(seed, "test");
        let x = DenseMatrix::from_vec(n, d, (0..n * d).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
        let views = (0..2)
            .map(|k| ViewGraph::from_edges(format!("v{k}"), n, &[]).unwrap())
            .collect();
        MultiViewNetwork::new(views, x, None).unwrap()
    }

    #[test]
    fn single_clique_on_edgeless_graph() {
        let net = edgeless(10, 2, 1);
        let spec = InjectionSpec {
            clique_size: 3,
            n_cliques: 1,
            n_attr_anomalies: 0,
            ..InjectionSpec::default()
        };
        let (out, truth) = inject(&net, &spec).unwrap();
        for v in out.views() {
            assert_eq!(v.num_edges(), 3);
        }
        assert_eq!(truth.count_of(Mechanism::Structural), 3);
        assert_eq!(truth.count(), 3);
        assert_eq!(out.attributes(), net.attributes());
        let members = truth.anomalous_ids();
        for &a in &members {
            for &b in &members {
                if a != b {
                    assert_eq!(out.view(0).adjacency().get(a, b), 1.0);
                }
            }
        }
    }

    #[test]
    fn exhaustive_pool_copies_farthest_row() {
        let net = edgeless(12, 3, 2);
        let spec = InjectionSpec {
            clique_size: 2,
            n_cliques: 0,
            n_attr_anomalies: 1,
            candidate_pool: 11,
            ..InjectionSpec::default()
        };
        let (out, truth) = inject(&net, &spec).unwrap();
        let i = truth.anomalous_ids()[0];
        assert_eq!(truth.mechanism[i], Mechanism::Attribute);
        let j = farthest_row(net.attributes(), i);
        assert_eq!(out.attributes().row(i), net.attributes().row(j));
        for r in (0..12).filter(|&r| r != i) {
            assert_eq!(out.attributes().row(r), net.attributes().row(r));
        }
    }

    #[test]
    fn dblp_scale_counts() {
        let net = edgeless(3025, 1, 3);
        let (_, truth) = inject(&net, &InjectionSpec::default()).unwrap();
        assert_eq!(truth.count(), 300);
        assert_eq!(truth.count_of(Mechanism::Structural), 150);
        assert_eq!(truth.count_of(Mechanism::Attribute), 150);
    }

    #[test]
    fn reproducible_and_seed_sensitive() {
        let net = edgeless(40, 2, 4);
        let spec = InjectionSpec {
            clique_size: 4,
            n_cliques: 2,
            n_attr_anomalies: 5,
            candidate_pool: 10,
            target_views: TargetViews::RandomOne,
            seed: 17,
        };
        let a = inject(&net, &spec).unwrap();
        let b = inject(&net, &spec).unwrap();
        assert_eq!(a, b);
        let c = inject(
            &net,
            &InjectionSpec {
                seed: 18,
                ..spec.clone()
            },
        )
        .unwrap();
        assert_ne!(a.1, c.1);
        assert_eq!(c.1.count(), a.1.count());
        // random-one: each clique lands in exactly one view
        let total: usize = a.0.views().iter().map(|v| v.num_edges()).sum();
        assert_eq!(total, 2 * 6);
    }

    #[test]
    fn named_target_views() {
        let net = edgeless(10, 1, 5);
        let spec = InjectionSpec {
            clique_size: 3,
            n_cliques: 1,
            n_attr_anomalies: 0,
            target_views: TargetViews::Named(vec!["v1".into()]),
            ..InjectionSpec::default()
        };
        let (out, _) = inject(&net, &spec).unwrap();
        assert_eq!(out.view(0).num_edges(), 0);
        assert_eq!(out.view(1).num_edges(), 3);
        let bad = InjectionSpec {
            target_views: TargetViews::Named(vec!["nope".into()]),
            ..spec
        };
        assert!(inject(&net, &bad).is_err());
    }

    #[test]
    fn invalid_specs() {
        let net = edgeless(5, 1, 6);
        let too_many = InjectionSpec {
            clique_size: 3,
            n_cliques: 2,
            n_attr_anomalies: 0,
            ..InjectionSpec::default()
        };
        assert!(inject(&net, &too_many).is_err());
        let tiny = InjectionSpec {
            clique_size: 1,
            n_cliques: 1,
            n_attr_anomalies: 0,
            ..InjectionSpec::default()
        };
        assert!(inject(&net, &tiny).is_err());
        let huge = InjectionSpec {
            clique_size: 6,
            n_cliques: 1,
            n_attr_anomalies: 0,
            ..InjectionSpec::default()
        };
        assert!(inject(&net, &huge).is_err());
    }
}
