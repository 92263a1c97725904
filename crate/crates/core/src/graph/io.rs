use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::Graph;
use crate::error::{Error, Result};

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses whitespace-separated integer pairs, one per line. Blank lines are skipped.
pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<(usize, usize)>> {
    let path = path.as_ref();
    let text = read(path)?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            msg,
        };
        let mut tokens = line.split_whitespace();
        let mut next_id = || -> Result<usize> {
            let tok = tokens
                .next()
                .ok_or_else(|| bad("expected two node ids".into()))?;
            tok.parse()
                .map_err(|_| bad(format!("`{tok}` is not a non-negative integer")))
        };
        let (u, v) = (next_id()?, next_id()?);
        if let Some(extra) = tokens.next() {
            return Err(bad(format!("unexpected trailing token `{extra}`")));
        }
        out.push((u, v));
    }
    Ok(out)
}

/// Reads an undirected edge list. `node_count` is `max id + 1` unless a hint is
/// given, in which case ids must stay below the hint.
pub fn load_edge_list(path: impl AsRef<Path>, node_count_hint: Option<usize>) -> Result<Graph> {
    let edges = load_pairs(path)?;
    let max_id = edges.iter().map(|&(u, v)| u.max(v)).max();
    let n = match (node_count_hint, max_id) {
        (Some(hint), Some(m)) if m >= hint => return Err(Error::Bounds { id: m, len: hint }),
        (Some(hint), _) => hint,
        (None, Some(m)) => m + 1,
        (None, None) => 0,
    };
    Graph::from_edges(n, edges)
}

/// Attaches a headerless CSV of reals as the node-attribute matrix.
pub fn load_attributes(path: impl AsRef<Path>, graph: Graph) -> Result<Graph> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(e),
        })?;
    let mut values = Vec::new();
    let mut rows = 0usize;
    let mut width = None;
    for (idx, record) in reader.records().enumerate() {
        let bad = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            msg,
        };
        let record = record.map_err(|e| bad(e.to_string()))?;
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(bad(format!("expected {w} columns, found {}", record.len())))
            }
            _ => {}
        }
        for cell in record.iter() {
            let x: f64 = cell
                .parse()
                .map_err(|_| bad(format!("`{cell}` is not a number")))?;
            values.push(x);
        }
        rows += 1;
    }
    if rows != graph.node_count() {
        return Err(Error::Dimension(format!(
            "{} has {rows} attribute rows, graph has {} nodes",
            path.display(),
            graph.node_count()
        )));
    }
    let x = Array2::from_shape_vec((rows, width.unwrap_or(0)), values)
        .map_err(|e| Error::Dimension(e.to_string()))?;
    graph.with_attributes(x)
}
