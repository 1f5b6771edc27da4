//! Plain-text dataset formats.
//!
//! * edges: one `u v` pair per line, `#` comments allowed
//! * features: CSV, one row per node, optional leading `N,F` header
//! * labels: CSV lines `node,class`; missing nodes are unlabeled
//! * splits: JSON `{"train": [..], "valid": [..], "test": [..], "sub": [..]}`

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use super::{SparseGraph, SplitSet};
use crate::error::{Error, Result};

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Loads and validates a graph plus its splits.
pub fn load_graph(
    edge_path: impl AsRef<Path>,
    feature_path: impl AsRef<Path>,
    label_path: impl AsRef<Path>,
    split_path: impl AsRef<Path>,
) -> Result<(SparseGraph, SplitSet)> {
    let features = read_features(feature_path)?;
    let n = features.nrows();
    let edges = read_edge_list(edge_path, n)?;
    let labels = read_labels(label_path, n)?;
    let graph = SparseGraph::new(n, edges, features, labels)?;
    let splits = read_splits(split_path)?;
    splits.validate(&graph)?;
    Ok((graph, splits))
}

/// Reads an edge list, checking every index against `num_nodes`.
pub fn read_edge_list(path: impl AsRef<Path>, num_nodes: usize) -> Result<Vec<(usize, usize)>> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let mut edges = Vec::new();
    for (line_no, line) in content_lines(&text) {
        let mut fields = line.split_whitespace();
        let mut next = || -> Result<usize> {
            let field = fields
                .next()
                .ok_or_else(|| Error::parse(path, line_no, "expected two node indices"))?;
            let index: usize = field
                .parse()
                .map_err(|_| Error::parse(path, line_no, format!("bad node index {field:?}")))?;
            if index >= num_nodes {
                return Err(Error::IndexRange {
                    path: path.to_path_buf(),
                    line: line_no,
                    index,
                    num_nodes,
                });
            }
            Ok(index)
        };
        let u = next()?;
        let v = next()?;
        if fields.next().is_some() {
            return Err(Error::parse(path, line_no, "trailing fields after edge"));
        }
        edges.push((u, v));
    }
    Ok(edges)
}

/// Reads a dense feature matrix; the node count is the number of rows.
pub fn read_features(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let lines: Vec<(usize, &str)> = content_lines(&text).collect();
    let body = match lines.first() {
        Some((_, first)) if is_header(first, &lines[1..]) => &lines[1..],
        _ => &lines[..],
    };
    let mut width = None;
    let mut data = Vec::new();
    for &(line_no, line) in body {
        let row: Vec<f64> = line
            .split(',')
            .map(|f| {
                let f = f.trim();
                f.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::parse(path, line_no, format!("bad feature value {f:?}")))
            })
            .collect::<Result<_>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("expected {w} features, found {}", row.len()),
                ))
            }
            _ => {}
        }
        data.extend(row);
    }
    let width = width.unwrap_or(0);
    Array2::from_shape_vec((body.len(), width), data)
        .map_err(|e| Error::DimensionMismatch(e.to_string()))
}

/// A leading `N,F` line counts as a header only when both fields are
/// integers that agree with the rows that follow.
fn is_header(first: &str, rest: &[(usize, &str)]) -> bool {
    let fields: Vec<&str> = first.split(',').map(str::trim).collect();
    if fields.len() != 2 {
        return false;
    }
    let (Ok(n), Ok(f)) = (fields[0].parse::<usize>(), fields[1].parse::<usize>()) else {
        return false;
    };
    n == rest.len() && rest.first().is_none_or(|(_, l)| l.split(',').count() == f)
}

/// Reads `node,class` pairs; nodes not listed are unlabeled.
pub fn read_labels(path: impl AsRef<Path>, num_nodes: usize) -> Result<Vec<Option<usize>>> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let mut labels = vec![None; num_nodes];
    for (line_no, line) in content_lines(&text) {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(Error::parse(path, line_no, "expected node_index,class_index"));
        }
        let parse = |f: &str| {
            f.parse::<usize>()
                .map_err(|_| Error::parse(path, line_no, format!("bad integer {f:?}")))
        };
        let (node, class) = (parse(fields[0])?, parse(fields[1])?);
        if node >= num_nodes {
            return Err(Error::IndexRange {
                path: path.to_path_buf(),
                line: line_no,
                index: node,
                num_nodes,
            });
        }
        labels[node] = Some(class);
    }
    Ok(labels)
}

pub fn read_splits(path: impl AsRef<Path>) -> Result<SplitSet> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(
        fs::File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

pub fn write_edge_list(graph: &SparseGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    for (u, v) in graph.edges() {
        writeln!(out, "{u} {v}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_features(features: &Array2<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(out, "{},{}", features.nrows(), features.ncols()).map_err(io)?;
    for row in features.rows() {
        let line: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        writeln!(out, "{}", line.join(",")).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn write_labels(labels: &[Option<usize>], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    for (u, c) in labels.iter().enumerate() {
        if let Some(c) = c {
            writeln!(out, "{u},{c}").map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_splits(splits: &SplitSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string(splits)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
