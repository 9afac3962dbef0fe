//! Multi-view attributed networks: per-view adjacencies over one node set,
//! plus a dense attribute matrix.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;
use crate::tensor::DenseMatrix;

/// Dense 0-based node index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One relation over the shared node set.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewGraph {
    name: String,
    adjacency: SparseMatrix,
    normalized: SparseMatrix,
}

impl ViewGraph {
    /// Wraps a binary symmetric adjacency without self-loops and precomputes its
    /// normalized form.
    pub fn new(name: impl Into<String>, adjacency: SparseMatrix) -> Result<Self> {
        check_simple_adjacency(&adjacency)?;
        let normalized = normalize(&adjacency)?;
        Ok(ViewGraph {
            name: name.into(),
            adjacency,
            normalized,
        })
    }

    pub fn from_edges(name: impl Into<String>, n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Self::new(name, adjacency_from_edges(n, edges)?)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn adjacency(&self) -> &SparseMatrix {
        &self.adjacency
    }

    /// `D̃^{-1/2} (A + I) D̃^{-1/2}`.
    pub fn normalized(&self) -> &SparseMatrix {
        &self.normalized
    }

    pub fn n(&self) -> usize {
        self.adjacency.n_rows()
    }

    /// Undirected edges `(i, j)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency.iter().filter(|&(i, j, _)| i < j).map(|(i, j, _)| (i, j))
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.nnz() / 2
    }
}

/// Node set observed under several views, with one attribute row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewNetwork {
    views: Vec<ViewGraph>,
    attributes: DenseMatrix,
    node_labels: Option<Vec<String>>,
}

impl MultiViewNetwork {
    pub fn new(views: Vec<ViewGraph>, attributes: DenseMatrix, node_labels: Option<Vec<String>>) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::Invalid("a network needs at least one view".into()));
        }
        let n = attributes.n_rows();
        for v in &views {
            if v.n() != n {
                return Err(Error::shape(
                    "network",
                    format!("view '{}' has {} nodes, attributes have {n} rows", v.name(), v.n()),
                ));
            }
        }
        let mut names = BTreeSet::new();
        for v in &views {
            if !names.insert(v.name()) {
                return Err(Error::Invalid(format!("duplicate view name '{}'", v.name())));
            }
        }
        if !attributes.is_finite() {
            return Err(Error::Invalid("attribute matrix contains non-finite values".into()));
        }
        if let Some(labels) = &node_labels {
            if labels.len() != n {
                return Err(Error::shape(
                    "network",
                    format!("{} node labels for {n} nodes", labels.len()),
                ));
            }
        }
        Ok(MultiViewNetwork {
            views,
            attributes,
            node_labels,
        })
    }

    /// Number of nodes.
    pub fn n(&self) -> usize {
        self.attributes.n_rows()
    }

    /// Attribute dimension.
    pub fn d(&self) -> usize {
        self.attributes.n_cols()
    }

    /// Number of views.
    pub fn k(&self) -> usize {
        self.views.len()
    }

    pub fn views(&self) -> &[ViewGraph] {
        &self.views
    }

    pub fn view(&self, index: usize) -> &ViewGraph {
        &self.views[index]
    }

    pub fn view_by_name(&self, name: &str) -> Option<&ViewGraph> {
        self.views.iter().find(|v| v.name() == name)
    }

    pub fn attributes(&self) -> &DenseMatrix {
        &self.attributes
    }

    pub fn node_labels(&self) -> Option<&[String]> {
        self.node_labels.as_deref()
    }

    /// Same network with replaced views and attributes (labels kept).
    pub fn with_parts(&self, views: Vec<ViewGraph>, attributes: DenseMatrix) -> Result<Self> {
        Self::new(views, attributes, self.node_labels.clone())
    }
}

fn check_simple_adjacency(a: &SparseMatrix) -> Result<()> {
    if !a.is_square() {
        return Err(Error::shape(
            "adjacency",
            format!("{}x{} is not square", a.n_rows(), a.n_cols()),
        ));
    }
    for (i, j, v) in a.iter() {
        if i == j {
            return Err(Error::Invalid(format!("adjacency has a self-loop at node {i}")));
        }
        if v != 1.0 {
            return Err(Error::Invalid(format!("adjacency entry ({i}, {j}) is {v}, expected 1")));
        }
        if a.get(j, i) != 1.0 {
            return Err(Error::Invalid(format!("adjacency is not symmetric at ({i}, {j})")));
        }
    }
    Ok(())
}

/// Binary symmetric adjacency from an undirected edge list. Duplicates and
/// reversed pairs collapse to one edge; self-loops are rejected.
pub fn adjacency_from_edges(n: usize, edges: &[(usize, usize)]) -> Result<SparseMatrix> {
    let mut set = BTreeSet::new();
    for &(a, b) in edges {
        for id in [a, b] {
            if id >= n {
                return Err(Error::NodeOutOfRange { id, n });
            }
        }
        if a == b {
            return Err(Error::Invalid(format!("self-loop on node {a}")));
        }
        set.insert((a, b));
        set.insert((b, a));
    }
    binary_from_sorted(n, set)
}

fn binary_from_sorted(n: usize, set: BTreeSet<(usize, usize)>) -> Result<SparseMatrix> {
    let mut row_offsets = vec![0usize; n + 1];
    let mut cols = Vec::with_capacity(set.len());
    for (i, j) in set {
        row_offsets[i + 1] += 1;
        cols.push(j);
    }
    for i in 0..n {
        row_offsets[i + 1] += row_offsets[i];
    }
    let values = vec![1.0; cols.len()];
    SparseMatrix::from_csr(n, n, row_offsets, cols, values)
}

/// User–user adjacency induced by user–item interactions: two distinct users
/// are linked when they share at least one item.
pub fn project_bipartite(interactions: &[(NodeId, usize)], n_users: usize) -> Result<SparseMatrix> {
    let mut by_item: Vec<(usize, usize)> = Vec::with_capacity(interactions.len());
    for &(user, item) in interactions {
        if user.0 >= n_users {
            return Err(Error::NodeOutOfRange { id: user.0, n: n_users });
        }
        by_item.push((item, user.0));
    }
    by_item.sort_unstable();
    by_item.dedup();
    let mut set = BTreeSet::new();
    for group in by_item.chunk_by(|a, b| a.0 == b.0) {
        for (x, &(_, u)) in group.iter().enumerate() {
            for &(_, v) in &group[x + 1..] {
                set.insert((u, v));
                set.insert((v, u));
            }
        }
    }
    binary_from_sorted(n_users, set)
}

/// Self-looped symmetric normalization `D̃^{-1/2} (A + I) D̃^{-1/2}` with
/// `D̃_ii = 1 + deg(i)`.
pub fn normalize(adjacency: &SparseMatrix) -> Result<SparseMatrix> {
    if !adjacency.is_square() {
        return Err(Error::shape(
            "normalize",
            format!("{}x{} is not square", adjacency.n_rows(), adjacency.n_cols()),
        ));
    }
    let n = adjacency.n_rows();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let (cols, vals) = adjacency.row(i);
            let deg: f64 = cols.iter().zip(vals).filter(|(&j, _)| j != i).map(|(_, v)| v).sum();
            1.0 / (1.0 + deg).sqrt()
        })
        .collect();
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(adjacency.nnz() + n);
    let mut vals = Vec::with_capacity(adjacency.nnz() + n);
    row_offsets.push(0);
    for i in 0..n {
        let (rc, rv) = adjacency.row(i);
        let mut diag_done = false;
        for (&j, &v) in rc.iter().zip(rv) {
            if j == i {
                continue;
            }
            if !diag_done && j > i {
                cols.push(i);
                vals.push(inv_sqrt[i] * inv_sqrt[i]);
                diag_done = true;
            }
            cols.push(j);
            vals.push(v * inv_sqrt[i] * inv_sqrt[j]);
        }
        if !diag_done {
            cols.push(i);
            vals.push(inv_sqrt[i] * inv_sqrt[i]);
        }
        row_offsets.push(cols.len());
    }
    SparseMatrix::from_csr(n, n, row_offsets, cols, vals)
}

/// Element-wise OR of every view's adjacency.
pub fn union_adjacency(network: &MultiViewNetwork) -> SparseMatrix {
    let n = network.n();
    let mut set = BTreeSet::new();
    for view in network.views() {
        for (i, j, _) in view.adjacency().iter() {
            set.insert((i, j));
        }
    }
    binary_from_sorted(n, set).expect("union of valid adjacencies is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn single_edge() -> SparseMatrix {
        adjacency_from_edges(2, &[(0, 1)]).unwrap()
    }

    #[test]
    fn normalize_two_nodes() {
        let t = normalize(&single_edge()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((t.get(i, j) - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn normalize_isolated_node() {
        let t = normalize(&SparseMatrix::zeros(1, 1)).unwrap();
        assert_eq!(t.get(0, 0), 1.0);
        assert_eq!(t.nnz(), 1);
    }

    #[test]
    fn normalize_path() {
        let t = normalize(&adjacency_from_edges(3, &[(0, 1), (1, 2)]).unwrap()).unwrap();
        assert!((t.get(0, 1) - 0.408_248_290_463_863).abs() < 1e-12);
        assert!((t.get(0, 1) - 1.0 / 6f64.sqrt()).abs() < 1e-15);
        assert_eq!(t.get(0, 2), 0.0);
        assert!(t.is_symmetric(0.0));
    }

    #[test]
    fn normalize_rejects_rectangular() {
        assert!(normalize(&SparseMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn projection_cases() {
        let ids = |v: &[(usize, usize)]| v.iter().map(|&(u, i)| (NodeId(u), i)).collect::<Vec<_>>();
        let tri = project_bipartite(&ids(&[(1, 9), (2, 9), (3, 9)]), 4).unwrap();
        let mut edges: Vec<_> = tri.iter().filter(|e| e.0 < e.1).map(|e| (e.0, e.1)).collect();
        edges.sort();
        assert_eq!(edges, vec![(1, 2), (1, 3), (2, 3)]);
        assert_eq!(project_bipartite(&ids(&[(0, 1), (1, 2)]), 2).unwrap().nnz(), 0);
        assert_eq!(project_bipartite(&ids(&[(0, 1), (0, 2)]), 2).unwrap().nnz(), 0);
        assert!(project_bipartite(&ids(&[(5, 1)]), 2).is_err());
    }

    #[test]
    fn edge_list_contracts() {
        let a = adjacency_from_edges(3, &[(0, 1), (0, 1), (1, 0)]).unwrap();
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(1, 0), 1.0);
        assert!(matches!(
            adjacency_from_edges(4, &[(5, 7)]),
            Err(Error::NodeOutOfRange { id: 5, n: 4 })
        ));
        assert!(adjacency_from_edges(3, &[(1, 1)]).is_err());
    }

    #[test]
    fn union_cases() {
        let x = DenseMatrix::zeros(3, 1);
        let v1 = ViewGraph::from_edges("a", 3, &[(0, 1)]).unwrap();
        let v2 = ViewGraph::from_edges("b", 3, &[(1, 2), (0, 1)]).unwrap();
        let net = MultiViewNetwork::new(vec![v1.clone(), v2], x.clone(), None).unwrap();
        let u = union_adjacency(&net);
        assert_eq!(u, adjacency_from_edges(3, &[(0, 1), (1, 2)]).unwrap());
        let single = MultiViewNetwork::new(vec![v1.clone()], x, None).unwrap();
        assert_eq!(&union_adjacency(&single), v1.adjacency());
    }

    #[test]
    fn network_validation() {
        let v = ViewGraph::from_edges("a", 2, &[(0, 1)]).unwrap();
        assert!(MultiViewNetwork::new(vec![], DenseMatrix::zeros(2, 1), None).is_err());
        assert!(MultiViewNetwork::new(vec![v.clone()], DenseMatrix::zeros(3, 1), None).is_err());
        assert!(MultiViewNetwork::new(vec![v.clone(), v.clone()], DenseMatrix::zeros(2, 1), None).is_err());
        let nan = DenseMatrix::filled(2, 1, f64::NAN);
        assert!(MultiViewNetwork::new(vec![v], nan, None).is_err());
    }

    fn edges_strategy(max_n: usize) -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
        (1..max_n).prop_flat_map(|n| {
            let pairs = prop::collection::vec((0..n, 0..n), 0..(n * 3));
            (
                Just(n),
                pairs.prop_map(|v| v.into_iter().filter(|(a, b)| a != b).collect()),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn normalized_spectrum_in_range((n, edges) in edges_strategy(60)) {
            let a = adjacency_from_edges(n, &edges).unwrap();
            let t = normalize(&a).unwrap();
            prop_assert!(t.is_symmetric(0.0));
            for i in 0..n {
                prop_assert!(t.get(i, i) > 0.0);
                let (cols, _) = t.row(i);
                let (acols, _) = a.row(i);
                let mut expected: Vec<usize> = acols.to_vec();
                expected.push(i);
                expected.sort();
                prop_assert_eq!(cols, &expected[..]);
            }
            let dense = t.to_dense();
            let m = DMatrix::from_row_slice(n, n, dense.data());
            for lambda in m.symmetric_eigenvalues().iter() {
                prop_assert!(*lambda > -1.0 && *lambda <= 1.0 + 1e-12);
            }
            let view = ViewGraph::new("v", a).unwrap();
            prop_assert!(view.normalized().to_dense().max_abs_diff(&dense) <= 1e-12);
        }

        #[test]
        fn projection_matches_pairwise_check(
            n in 1usize..12,
            raw in prop::collection::vec((0usize..12, 0usize..6), 0..50),
        ) {
            let interactions: Vec<(NodeId, usize)> =
                raw.iter().map(|&(u, i)| (NodeId(u % n), i)).collect();
            let got = project_bipartite(&interactions, n).unwrap();
            prop_assert!(got.is_symmetric(0.0));
            for u in 0..n {
                for v in 0..n {
                    let shared = u != v && (0..6).any(|item| {
                        interactions.contains(&(NodeId(u), item))
                            && interactions.contains(&(NodeId(v), item))
                    });
                    prop_assert_eq!(got.get(u, v), if shared { 1.0 } else { 0.0 });
                }
            }
        }
    }
}
