//! Plain nested-loop evaluation of the simplified model, used as a test oracle.

#![allow(clippy::needless_range_loop)]

use anomman_core::DenseMatrix;

type M = Vec<Vec<f64>>;

pub fn to_m(x: &DenseMatrix) -> M {
    x.rows().map(|r| r.to_vec()).collect()
}

pub fn mul(a: &M, b: &M) -> M {
    let (n, m, p) = (a.len(), b.len(), b[0].len());
    let mut c = vec![vec![0.0; p]; n];
    for i in 0..n {
        for k in 0..m {
            for j in 0..p {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

pub fn norm_adj(n: usize, edges: &[(usize, usize)]) -> M {
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        a[i][i] = 1.0;
    }
    for &(i, j) in edges {
        a[i][j] = 1.0;
        a[j][i] = 1.0;
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    for i in 0..n {
        for j in 0..n {
            a[i][j] /= (deg[i] * deg[j]).sqrt();
        }
    }
    a
}

pub fn relu(m: M) -> M {
    m.into_iter()
        .map(|r| r.into_iter().map(|v| v.max(0.0)).collect())
        .collect()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub struct Oracle {
    pub total: f64,
    pub structure: Vec<f64>,
    pub attribute: f64,
    pub alpha: Vec<f64>,
    pub node_scores: Vec<f64>,
}

/// Straight-line evaluation of the simplified model with attention fusion.
pub fn oracle(inst: &super::Instance) -> Oracle {
    let net = &inst.network;
    let (n, k) = (net.n(), net.k());
    let x = to_m(net.attributes());
    let eps = inst.hp.epsilon;

    let mut zs = Vec::new();
    for v in 0..k {
        let a = norm_adj(n, &inst.edges[v]);
        let mut p = x.clone();
        for _ in 0..inst.hp.filter_order {
            p = mul(&a, &p);
        }
        zs.push(relu(mul(&p, &to_m(&inst.params.encoder[v][0]))));
    }

    let w = to_m(&inst.params.attn_w);
    let b = inst.params.attn_b.row(0).to_vec();
    let q: Vec<f64> = inst.params.attn_q.data().to_vec();
    let scores: Vec<f64> = zs
        .iter()
        .map(|z| {
            let proj = mul(z, &w);
            let mut s = 0.0;
            for row in &proj {
                for (j, v) in row.iter().enumerate() {
                    s += q[j] * (v + b[j]).tanh();
                }
            }
            s / n as f64
        })
        .collect();
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let alpha: Vec<f64> = e.iter().map(|v| v / e.iter().sum::<f64>()).collect();
    let f = zs[0][0].len();
    let mut fused = vec![vec![0.0; f]; n];
    for (z, a) in zs.iter().zip(&alpha) {
        for i in 0..n {
            for j in 0..f {
                fused[i][j] += a * z[i][j];
            }
        }
    }

    let mut structure = Vec::new();
    let mut row_err = vec![0.0; n];
    for v in 0..k {
        let mut adj = vec![vec![0.0; n]; n];
        for &(i, j) in &inst.edges[v] {
            adj[i][j] = 1.0;
            adj[j][i] = 1.0;
        }
        let z = &zs[v];
        let mut loss = 0.0;
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = (0..f).map(|t| z[i][t] * z[j][t]).sum();
                let e = (sigmoid(dot) - adj[i][j]).abs();
                loss += e;
                row_err[i] += e / k as f64;
            }
        }
        structure.push(loss);
    }

    let mut union = Vec::new();
    for es in &inst.edges {
        union.extend_from_slice(es);
    }
    union.sort();
    union.dedup();
    let recon = relu(mul(&mul(&norm_adj(n, &union), &fused), &to_m(&inst.params.dec_w)));
    let mut attribute = 0.0;
    let mut node_scores = vec![0.0; n];
    for i in 0..n {
        let e: f64 = recon[i].iter().zip(&x[i]).map(|(a, b)| (a - b) * (a - b)).sum();
        attribute += e;
        node_scores[i] = eps * row_err[i] + (1.0 - eps) * e;
    }
    let total = eps * structure.iter().sum::<f64>() / k as f64 + (1.0 - eps) * attribute;
    Oracle {
        total,
        structure,
        attribute,
        alpha,
        node_scores,
    }
}
