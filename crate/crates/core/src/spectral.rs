//! Graph frequencies of a view and the frequency response of the encoder.
//!
//! Frequencies are the eigenvalues `λ` of `I - Ã`, which lie in `[0, 2)`. The
//! `L`-hop propagation `Ã^L` scales the component at frequency `λ` by
//! `(1 - λ)^L`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ViewGraph;
use crate::rng;
use crate::sparse::SparseMatrix;

/// Largest graph decomposed densely.
pub const FULL_DECOMPOSITION_LIMIT: usize = 2000;
/// Residual tolerance of the iterative solver.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;
const MAX_RESTARTS: usize = 2000;
const DEFAULT_NUM_TOP: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Ascending. Either the full spectrum or the extreme ends only.
    pub frequencies: Vec<f64>,
    pub max_frequency: f64,
    /// `(1 - λ)^L` per frequency.
    pub response: Vec<f64>,
    /// Squared graph Fourier coefficients of a signal, per frequency.
    pub signal_spectrum: Option<Vec<f64>>,
    /// `signal_spectrum` after the filter.
    pub filtered_spectrum: Option<Vec<f64>>,
    pub filter_order: usize,
    /// False when only the extreme frequencies were computed.
    pub complete: bool,
}

impl SpectrumReport {
    /// Columns `frequency`, `response` and, when a signal was analysed,
    /// `raw_energy` and `filtered_energy`.
    pub fn to_tsv(&self) -> String {
        let with_signal = self.signal_spectrum.is_some();
        let mut out = String::from("frequency\tresponse");
        if with_signal {
            out.push_str("\traw_energy\tfiltered_energy");
        }
        out.push('\n');
        for (i, (f, r)) in self.frequencies.iter().zip(&self.response).enumerate() {
            out.push_str(&format!("{f}\t{r}"));
            if let (Some(raw), Some(filt)) = (&self.signal_spectrum, &self.filtered_spectrum) {
                out.push_str(&format!("\t{}\t{}", raw[i], filt[i]));
            }
            out.push('\n');
        }
        out
    }
}

/// `(1 - λ)^L` for each frequency.
pub fn filter_response(frequencies: &[f64], filter_order: usize) -> Vec<f64> {
    frequencies
        .iter()
        .map(|&l| (1.0 - l).powi(filter_order as i32))
        .collect()
}

/// `I - Ã` as a sparse matrix.
pub fn laplacian(view: &ViewGraph) -> SparseMatrix {
    let a = view.normalized();
    let triplets = a
        .iter()
        .map(|(i, j, v)| (i, j, if i == j { 1.0 - v } else { -v }))
        .collect();
    SparseMatrix::from_triplets(a.n_rows(), a.n_cols(), triplets).expect("square")
}

fn dense_laplacian(view: &ViewGraph) -> DMatrix<f64> {
    let n = view.n();
    let mut m = DMatrix::<f64>::identity(n, n);
    for (i, j, v) in view.normalized().iter() {
        m[(i, j)] -= v;
    }
    m
}

/// Eigenvalues ascending with matching eigenvector columns.
fn full_eigen(view: &ViewGraph) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(dense_laplacian(view));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

/// Frequencies of a view. Graphs up to [`FULL_DECOMPOSITION_LIMIT`] nodes are
/// decomposed fully; larger ones report the `num_top` smallest and largest
/// frequencies from the iterative solver.
pub fn spectrum(view: &ViewGraph, num_top: Option<usize>, filter_order: usize) -> Result<SpectrumReport> {
    let n = view.n();
    let (frequencies, complete) = if n <= FULL_DECOMPOSITION_LIMIT {
        (full_eigen(view).0, true)
    } else {
        let count = num_top.unwrap_or(DEFAULT_NUM_TOP);
        let (mut low, high) = extreme_frequencies(view, count)?;
        // the two ends overlap only when 2 * count exceeds n
        let overlap = (2 * count.min(n)).saturating_sub(n);
        low.extend(high.into_iter().skip(overlap));
        (low, false)
    };
    report(frequencies, filter_order, complete, None)
}

fn report(
    mut frequencies: Vec<f64>,
    filter_order: usize,
    complete: bool,
    energy: Option<Vec<f64>>,
) -> Result<SpectrumReport> {
    // round-off can push the zero frequency slightly negative
    frequencies
        .iter_mut()
        .for_each(|f| *f = if *f <= 0.0 { 0.0 } else { f.min(2.0) });
    let max_frequency = *frequencies
        .last()
        .ok_or_else(|| Error::Invalid("empty graph has no spectrum".into()))?;
    let response = filter_response(&frequencies, filter_order);
    let filtered = energy
        .as_ref()
        .map(|e| e.iter().zip(&response).map(|(en, g)| en * g * g).collect());
    Ok(SpectrumReport {
        frequencies,
        max_frequency,
        response,
        signal_spectrum: energy,
        filtered_spectrum: filtered,
        filter_order,
        complete,
    })
}

/// Graph Fourier analysis of `signal`: full spectrum with per-frequency
/// energies `(uᵀ signal)²` before and after the filter.
pub fn signal_spectrum(view: &ViewGraph, signal: &[f64], filter_order: usize) -> Result<SpectrumReport> {
    let n = view.n();
    if n > FULL_DECOMPOSITION_LIMIT {
        return Err(Error::Invalid(format!(
            "signal spectra need a full decomposition; {n} nodes exceeds {FULL_DECOMPOSITION_LIMIT}"
        )));
    }
    if signal.len() != n {
        return Err(Error::shape(
            "signal_spectrum",
            format!("signal of length {} on {n} nodes", signal.len()),
        ));
    }
    let (values, vectors) = full_eigen(view);
    let energy = (0..n)
        .map(|c| {
            let coef: f64 = vectors.column(c).iter().zip(signal).map(|(u, s)| u * s).sum();
            coef * coef
        })
        .collect();
    report(values, filter_order, true, Some(energy))
}

/// The `count` smallest and `count` largest frequencies (each ascending),
/// computed with thick-restart Lanczos.
pub fn extreme_frequencies(view: &ViewGraph, count: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let lap = laplacian(view);
    extreme_eigenvalues(|x| lap.matvec(x), view.n(), count, RESIDUAL_TOLERANCE)
}

/// Extreme eigenvalues of a symmetric operator by thick-restart Lanczos
/// (Krylov–Schur) with full reorthogonalization. Eigenvalue multiplicities
/// beyond what the Krylov space captures are not resolved.
pub fn extreme_eigenvalues(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    n: usize,
    count: usize,
    tol: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 || count == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let count = count.min(n);
    let m = (2 * count + 30).max(40).min(n);
    if m == n {
        // the Krylov space is the whole space: project once, exactly
        let basis: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                e
            })
            .collect();
        let h = DMatrix::from_fn(n, n, |i, j| dot(&basis[i], &apply(&basis[j])));
        let h = (&h + h.transpose()) * 0.5;
        let mut vals: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        vals.sort_by(f64::total_cmp);
        return Ok((vals[..count].to_vec(), vals[n - count..].to_vec()));
    }

    let mut start_rng = rng::stream(0, "lanczos-start");
    let mut random_unit = |basis: &[Vec<f64>]| -> Vec<f64> {
        loop {
            let mut v: Vec<f64> = (0..n).map(|_| start_rng.random_range(-1.0..1.0)).collect();
            orthogonalize(&mut v, basis);
            orthogonalize(&mut v, basis);
            let norm = dot(&v, &v).sqrt();
            if norm > 1e-10 {
                v.iter_mut().for_each(|x| *x /= norm);
                return v;
            }
        }
    };

    let mut basis: Vec<Vec<f64>> = vec![random_unit(&[])];
    let mut h = DMatrix::<f64>::zeros(m, m);
    let mut kept = 0usize;
    let mut worst = f64::INFINITY;
    for restart in 0..MAX_RESTARTS {
        let mut residual_norm = 0.0;
        let mut next = Vec::new();
        for j in kept..m {
            let mut w = apply(&basis[j]);
            let mut coeffs = vec![0.0; j + 1];
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate().take(j + 1) {
                    let c = dot(v, &w);
                    coeffs[i] += c;
                    axpy(&mut w, -c, v);
                }
            }
            for (i, &c) in coeffs.iter().enumerate() {
                h[(i, j)] = c;
                h[(j, i)] = c;
            }
            let beta = dot(&w, &w).sqrt();
            let (v_next, coupling) = if beta > 1e-12 {
                w.iter_mut().for_each(|x| *x /= beta);
                (w, beta)
            } else {
                (random_unit(&basis), 0.0)
            };
            if j + 1 < m {
                h[(j + 1, j)] = coupling;
                h[(j, j + 1)] = coupling;
                basis.push(v_next);
            } else {
                residual_norm = coupling;
                next = v_next;
            }
        }

        let eig = SymmetricEigen::new(h.clone());
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let wanted: Vec<usize> = order[..count].iter().chain(&order[m - count..]).copied().collect();
        worst = wanted
            .iter()
            .map(|&c| (residual_norm * eig.eigenvectors[(m - 1, c)]).abs())
            .fold(0.0, f64::max);
        if worst < tol {
            log::debug!("lanczos converged after {restart} restarts");
            let vals = |idx: &[usize]| idx.iter().map(|&c| eig.eigenvalues[c]).collect::<Vec<_>>();
            return Ok((vals(&order[..count]), vals(&order[m - count..])));
        }

        // keep the wanted Ritz vectors and a buffer on each end
        let spare = (m - 1 - 2 * count) / 2;
        let per_end = count + spare / 2;
        let keep: Vec<usize> = order[..per_end].iter().chain(&order[m - per_end..]).copied().collect();
        let mut new_basis = Vec::with_capacity(m);
        for &c in &keep {
            let mut y = vec![0.0; n];
            for (r, v) in basis.iter().enumerate() {
                axpy(&mut y, eig.eigenvectors[(r, c)], v);
            }
            new_basis.push(y);
        }
        h.fill(0.0);
        for (i, &c) in keep.iter().enumerate() {
            h[(i, i)] = eig.eigenvalues[c];
        }
        new_basis.push(next);
        basis = new_basis;
        kept = keep.len();
    }
    Err(Error::NoConvergence {
        iterations: MAX_RESTARTS,
        residual: worst,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let c = dot(b, v);
        axpy(v, -c, b);
    }
}
