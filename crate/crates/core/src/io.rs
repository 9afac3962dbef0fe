//! Dataset manifests, edge lists, attribute CSVs and ground-truth files.
//!
//! A manifest is a small line-oriented file:
//!
//! ```text
//! # comments start with '#'
//! attributes = attributes.csv
//! labels = names.txt            # optional, one display name per line
//!
//! [view.co-author]
//! edges = coauthor.edges        # user-user pairs
//!
//! [view.co-purchase]
//! interactions = purchases.txt  # user-item pairs, projected onto users
//! ```
//!
//! Relative paths resolve against the manifest's directory. View order in the
//! file is the view order of the loaded network.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::graph::{adjacency_from_edges, project_bipartite, MultiViewNetwork, NodeId, ViewGraph};
use crate::tensor::DenseMatrix;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViewSource {
    Edges(PathBuf),
    Interactions(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestView {
    pub name: String,
    pub source: ViewSource,
}

/// Parsed manifest with paths already resolved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub attributes: PathBuf,
    pub labels: Option<PathBuf>,
    pub views: Vec<ManifestView>,
}

fn format_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

fn unquote(value: &str) -> &str {
    value
        .strip_prefix('"')
        .and_then(|v| v.strip_suffix('"'))
        .unwrap_or(value)
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, path, base)
    }

    /// Parses manifest text; `origin` is only used in error messages.
    pub fn parse(text: &str, origin: &Path, base: &Path) -> Result<Self> {
        let mut attributes = None;
        let mut labels = None;
        let mut views: Vec<(usize, String, Option<ViewSource>)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = strip_comment(raw);
            if line.is_empty() {
                continue;
            }
            if let Some(section) = line.strip_prefix('[') {
                let section = section
                    .strip_suffix(']')
                    .ok_or_else(|| format_err(origin, line_no, "unterminated section header"))?
                    .trim();
                let name = section
                    .strip_prefix("view.")
                    .ok_or_else(|| format_err(origin, line_no, format!("unknown section [{section}]")))?;
                if name.is_empty() {
                    return Err(format_err(origin, line_no, "empty view name"));
                }
                if views.iter().any(|(_, n, _)| n == name) {
                    return Err(format_err(origin, line_no, format!("duplicate view '{name}'")));
                }
                views.push((line_no, name.to_string(), None));
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format_err(origin, line_no, "expected 'key = value'"))?;
            let key = key.trim();
            let value = unquote(value.trim());
            if value.is_empty() {
                return Err(format_err(origin, line_no, format!("empty value for '{key}'")));
            }
            let resolved = base.join(value);
            match (views.last_mut(), key) {
                (None, "attributes") => attributes = Some(resolved),
                (None, "labels") => labels = Some(resolved),
                (Some((_, _, source)), "edges" | "interactions") => {
                    if source.is_some() {
                        return Err(format_err(origin, line_no, "view already has an edge source"));
                    }
                    *source = Some(if key == "edges" {
                        ViewSource::Edges(resolved)
                    } else {
                        ViewSource::Interactions(resolved)
                    });
                }
                _ => return Err(format_err(origin, line_no, format!("unexpected key '{key}'"))),
            }
        }
        let attributes = attributes.ok_or_else(|| format_err(origin, 0, "missing 'attributes = <path>'"))?;
        if views.is_empty() {
            return Err(format_err(origin, 0, "no views declared"));
        }
        let views = views
            .into_iter()
            .map(|(line, name, source)| {
                source
                    .map(|source| ManifestView {
                        name: name.clone(),
                        source,
                    })
                    .ok_or_else(|| format_err(origin, line, format!("view '{name}' has no edges")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Manifest {
            attributes,
            labels,
            views,
        })
    }
}

/// Loads and validates the network described by a manifest file. The node
/// count is the number of attribute rows.
pub fn load_network(manifest_path: &Path) -> Result<MultiViewNetwork> {
    let manifest = Manifest::load(manifest_path)?;
    let attributes = read_attributes(&manifest.attributes)?;
    let n = attributes.n_rows();
    let labels = manifest
        .labels
        .as_deref()
        .map(|p| read_to_string(p).map(|t| t.lines().map(str::to_string).collect()))
        .transpose()?;
    let mut views = Vec::with_capacity(manifest.views.len());
    for mv in &manifest.views {
        let adjacency = match &mv.source {
            ViewSource::Edges(p) => adjacency_from_edges(n, &read_edges(p, Some(n))?)?,
            ViewSource::Interactions(p) => {
                let pairs = read_pairs(p, Some(n), false)?;
                let interactions: Vec<(NodeId, usize)> = pairs.into_iter().map(|(u, i)| (NodeId(u), i)).collect();
                project_bipartite(&interactions, n)?
            }
        };
        views.push(ViewGraph::new(mv.name.clone(), adjacency)?);
    }
    MultiViewNetwork::new(views, attributes, labels)
}

/// Reads an undirected edge list; `n` bounds node ids when given.
pub fn read_edges(path: &Path, n: Option<usize>) -> Result<Vec<(usize, usize)>> {
    read_pairs(path, n, true)
}

fn read_pairs(path: &Path, n: Option<usize>, symmetric: bool) -> Result<Vec<(usize, usize)>> {
    let text = read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let mut next = || -> Result<usize> {
            let tok = fields
                .next()
                .ok_or_else(|| format_err(path, line_no, "expected two integers"))?;
            tok.parse::<usize>()
                .map_err(|_| format_err(path, line_no, format!("'{tok}' is not a node id")))
        };
        let (a, b) = (next()?, next()?);
        if fields.next().is_some() {
            return Err(format_err(path, line_no, "expected exactly two integers"));
        }
        if let Some(n) = n {
            let limit_b = if symmetric { n } else { usize::MAX };
            if a >= n || b >= limit_b {
                let id = if a >= n { a } else { b };
                return Err(format_err(path, line_no, format!("node id out of range: {id} >= {n}")));
            }
        }
        if symmetric && a == b {
            return Err(format_err(path, line_no, format!("self-loop '{a} {b}' is not allowed")));
        }
        out.push((a, b));
    }
    Ok(out)
}

/// Reads a numeric CSV. A first row containing any non-numeric cell is taken
/// as a header and skipped.
pub fn read_attributes(path: &Path) -> Result<DenseMatrix> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);
    let mut data = Vec::new();
    let mut n_cols = None;
    let mut n_rows = 0;
    for (idx, record) in reader.records().enumerate() {
        let line_no = idx + 1;
        let record = record.map_err(|e| format_err(path, line_no, e.to_string()))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Vec<Option<f64>> = record.iter().map(|c| c.parse::<f64>().ok()).collect();
        if idx == 0 && parsed.iter().any(Option::is_none) {
            continue;
        }
        let expected = *n_cols.get_or_insert(parsed.len());
        if parsed.len() != expected {
            return Err(format_err(
                path,
                line_no,
                format!("expected {expected} columns, found {}", parsed.len()),
            ));
        }
        for (col, (cell, raw)) in parsed.into_iter().zip(record.iter()).enumerate() {
            match cell {
                Some(v) if v.is_finite() => data.push(v),
                _ => {
                    return Err(format_err(
                        path,
                        line_no,
                        format!("column {}: '{raw}' is not a finite number", col + 1),
                    ))
                }
            }
        }
        n_rows += 1;
    }
    if n_rows == 0 {
        return Err(format_err(path, 0, "attribute file has no data rows"));
    }
    DenseMatrix::from_vec(n_rows, n_cols.unwrap_or(0), data)
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes a network as a manifest plus sibling files into `dir`; returns the
/// manifest path. Output is byte-deterministic.
pub fn write_network(network: &MultiViewNetwork, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |e| Error::io(p, e)
    };

    let attr_path = dir.join("attributes.csv");
    let mut w = create(&attr_path)?;
    for row in network.attributes().rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(",")).map_err(io(&attr_path))?;
    }
    w.flush().map_err(io(&attr_path))?;

    let mut manifest = String::from("attributes = attributes.csv\n");
    if let Some(labels) = network.node_labels() {
        let p = dir.join("labels.txt");
        let mut w = create(&p)?;
        for l in labels {
            writeln!(w, "{l}").map_err(io(&p))?;
        }
        w.flush().map_err(io(&p))?;
        manifest.push_str("labels = labels.txt\n");
    }
    for (k, view) in network.views().iter().enumerate() {
        let file = format!("view{k}.edges");
        let p = dir.join(&file);
        let mut w = create(&p)?;
        writeln!(w, "# view {}", view.name()).map_err(io(&p))?;
        for (i, j) in view.edges() {
            writeln!(w, "{i} {j}").map_err(io(&p))?;
        }
        w.flush().map_err(io(&p))?;
        manifest.push_str(&format!("\n[view.{}]\nedges = {file}\n", view.name()));
    }
    let manifest_path = dir.join("manifest.txt");
    fs::write(&manifest_path, manifest).map_err(io(&manifest_path))?;
    Ok(manifest_path)
}

/// Ground truth file: one anomalous node id per line, ascending.
pub fn write_ground_truth(ids: &[usize], path: &Path) -> Result<()> {
    let mut text = String::new();
    for id in ids {
        text.push_str(&format!("{id}\n"));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_ground_truth(path: &Path, n: usize) -> Result<Vec<usize>> {
    let text = read_to_string(path)?;
    let mut ids = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        let id: usize = line
            .parse()
            .map_err(|_| format_err(path, idx + 1, format!("'{line}' is not a node id")))?;
        if id >= n {
            return Err(format_err(path, idx + 1, format!("node id out of range: {id} >= {n}")));
        }
        ids.push(id);
    }
    ids.sort_unstable();
    ids.dedup();
    Ok(ids)
}
