//! TU-format dataset ingestion and export.
//!
//! The on-disk layout is one directory with `NAME_A.txt` (comma-separated,
//! 1-based edge endpoints), `NAME_graph_indicator.txt` (1-based graph id per
//! node), `NAME_graph_labels.txt`, and optionally `NAME_node_labels.txt`.
//! Parse errors carry the file name and 1-based line number.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use crate::numerics::Tensor;

use super::cache::{read_cache, write_cache};
use super::{
    degree_feature_tensors, DataError, Graph, GraphCollection, Result, DEGREE_FEATURE_CAP,
};

pub fn parse_tu_dataset(dir: &Path, name: &str) -> Result<GraphCollection> {
    parse_tu_dataset_with(dir, name, DEGREE_FEATURE_CAP)
}

/// Parse with an explicit cap on the degree-fallback feature width.
pub fn parse_tu_dataset_with(
    dir: &Path,
    name: &str,
    degree_cap: usize,
) -> Result<GraphCollection> {
    let indicator_file = format!("{name}_graph_indicator.txt");
    let labels_file = format!("{name}_graph_labels.txt");
    let edges_file = format!("{name}_A.txt");
    let node_labels_file = format!("{name}_node_labels.txt");

    // Which graph each node belongs to, and its local index there.
    let indicator = read_int_lines(dir, &indicator_file)?;
    if indicator.is_empty() {
        return Err(parse_err(&indicator_file, 1, "no nodes listed"));
    }
    let graph_ids: BTreeSet<i64> = indicator.iter().map(|&(_, v)| v).collect();
    let graph_pos: BTreeMap<i64, usize> = graph_ids
        .iter()
        .enumerate()
        .map(|(pos, &id)| (id, pos))
        .collect();
    let graph_count = graph_pos.len();
    let mut node_graph = Vec::with_capacity(indicator.len());
    let mut node_local = Vec::with_capacity(indicator.len());
    let mut sizes = vec![0usize; graph_count];
    for &(_, id) in &indicator {
        let gp = graph_pos[&id];
        node_graph.push(gp);
        node_local.push(sizes[gp]);
        sizes[gp] += 1;
    }

    // Graph labels, remapped onto 0..C-1 in sorted original order.
    let raw_labels = read_int_lines(dir, &labels_file)?;
    if raw_labels.is_empty() {
        return Err(parse_err(&labels_file, 1, "no graph labels listed"));
    }
    if raw_labels.len() != graph_count {
        return Err(parse_err(
            &labels_file,
            raw_labels.len() + 1,
            &format!("expected {graph_count} labels, found {}", raw_labels.len()),
        ));
    }
    let distinct: BTreeSet<i64> = raw_labels.iter().map(|&(_, v)| v).collect();
    let label_pos: BTreeMap<i64, usize> = distinct
        .iter()
        .enumerate()
        .map(|(pos, &v)| (v, pos))
        .collect();
    let labels: Vec<usize> = raw_labels.iter().map(|&(_, v)| label_pos[&v]).collect();

    // Edges, grouped per graph, collapsed to canonical undirected form.
    let mut edge_sets: Vec<BTreeSet<(usize, usize)>> = vec![BTreeSet::new(); graph_count];
    for (line, fields) in read_int_rows(dir, &edges_file)? {
        let [u, v] = fields[..] else {
            return Err(parse_err(
                &edges_file,
                line,
                &format!("expected 2 endpoints, found {}", fields.len()),
            ));
        };
        let check = |x: i64| -> Result<usize> {
            if x < 1 || x as usize > node_graph.len() {
                return Err(parse_err(
                    &edges_file,
                    line,
                    &format!("node id {x} out of range 1..={}", node_graph.len()),
                ));
            }
            Ok(x as usize - 1)
        };
        let (u, v) = (check(u)?, check(v)?);
        if node_graph[u] != node_graph[v] {
            return Err(parse_err(
                &edges_file,
                line,
                &format!("edge ({}, {}) crosses graph boundaries", u + 1, v + 1),
            ));
        }
        if u == v {
            continue; // stray self-loops are dropped during normalization
        }
        let (a, b) = (node_local[u].min(node_local[v]), node_local[u].max(node_local[v]));
        edge_sets[node_graph[u]].insert((a, b));
    }

    // Features: one-hot node labels when present, else capped one-hot degree.
    let features: Vec<Tensor> = if dir.join(&node_labels_file).exists() {
        let raw = read_int_lines(dir, &node_labels_file)?;
        if raw.len() != node_graph.len() {
            return Err(parse_err(
                &node_labels_file,
                raw.len() + 1,
                &format!("expected {} node labels, found {}", node_graph.len(), raw.len()),
            ));
        }
        let distinct: BTreeSet<i64> = raw.iter().map(|&(_, v)| v).collect();
        let pos: BTreeMap<i64, usize> = distinct
            .iter()
            .enumerate()
            .map(|(p, &v)| (v, p))
            .collect();
        let width = pos.len();
        let mut data: Vec<Vec<f64>> = sizes.iter().map(|&n| vec![0.0; n * width]).collect();
        for (node, &(_, raw_label)) in raw.iter().enumerate() {
            let g = node_graph[node];
            data[g][node_local[node] * width + pos[&raw_label]] = 1.0;
        }
        data.into_iter()
            .zip(&sizes)
            .map(|(d, &n)| Tensor::new(vec![n, width], d).expect("sized by construction"))
            .collect()
    } else {
        let degrees: Vec<Vec<usize>> = edge_sets
            .iter()
            .zip(&sizes)
            .map(|(edges, &n)| {
                let mut d = vec![0usize; n];
                for &(u, v) in edges {
                    d[u] += 1;
                    d[v] += 1;
                }
                d
            })
            .collect();
        degree_feature_tensors(&degrees, degree_cap).1
    };

    let mut graphs = Vec::with_capacity(graph_count);
    for (g, feat) in features.into_iter().enumerate() {
        graphs.push(Graph::new(
            sizes[g],
            edge_sets[g].iter().copied().collect(),
            feat,
            Some(labels[g]),
        )?);
    }
    GraphCollection::new(graphs, label_pos.len())
}

/// Load with a binary sidecar cache (`NAME.augg`), re-parsing only when any
/// source file is newer than the cache.
pub fn load_tu_dataset(dir: &Path, name: &str) -> Result<GraphCollection> {
    let cache_path = dir.join(format!("{name}.augg"));
    if let Some(cached) = try_cache(dir, name, &cache_path) {
        return Ok(cached);
    }
    let collection = parse_tu_dataset(dir, name)?;
    let _ = write_cache(&cache_path, &collection); // best effort; reparse is the fallback
    Ok(collection)
}

fn try_cache(dir: &Path, name: &str, cache_path: &Path) -> Option<GraphCollection> {
    let cache_mtime = std::fs::metadata(cache_path).and_then(|m| m.modified()).ok()?;
    let sources = [
        format!("{name}_A.txt"),
        format!("{name}_graph_indicator.txt"),
        format!("{name}_graph_labels.txt"),
        format!("{name}_node_labels.txt"),
    ];
    for s in &sources {
        let path = dir.join(s);
        if !path.exists() {
            continue;
        }
        let mtime = std::fs::metadata(&path).and_then(|m| m.modified()).ok()?;
        if mtime > cache_mtime {
            return None;
        }
    }
    read_cache(cache_path).ok()
}

/// Write a collection back out in TU text form (plus node labels when the
/// feature rows are exact one-hot vectors).
pub fn write_tu_dataset(dir: &Path, name: &str, collection: &GraphCollection) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut indicator = String::new();
    let mut edges = String::new();
    let mut labels = String::new();
    let mut node_labels = String::new();
    let mut all_one_hot = true;

    let mut offset = 0usize;
    for (gi, g) in collection.graphs().iter().enumerate() {
        let label = g.label().ok_or_else(|| {
            DataError::InvalidCollection(format!("graph {gi} is unlabeled; cannot export"))
        })?;
        labels.push_str(&format!("{label}\n"));
        for local in 0..g.node_count() {
            indicator.push_str(&format!("{}\n", gi + 1));
            let row = g.node_features().row(local);
            match one_hot_index(row) {
                Some(idx) => node_labels.push_str(&format!("{idx}\n")),
                None => all_one_hot = false,
            }
        }
        for &(u, v) in g.edges() {
            edges.push_str(&format!("{}, {}\n", offset + u + 1, offset + v + 1));
            edges.push_str(&format!("{}, {}\n", offset + v + 1, offset + u + 1));
        }
        offset += g.node_count();
    }

    std::fs::write(dir.join(format!("{name}_A.txt")), edges)?;
    std::fs::write(dir.join(format!("{name}_graph_indicator.txt")), indicator)?;
    std::fs::write(dir.join(format!("{name}_graph_labels.txt")), labels)?;
    let node_labels_path = dir.join(format!("{name}_node_labels.txt"));
    if all_one_hot {
        std::fs::write(node_labels_path, node_labels)?;
    } else if node_labels_path.exists() {
        std::fs::remove_file(node_labels_path)?;
    }
    Ok(())
}

fn one_hot_index(row: &[f64]) -> Option<usize> {
    let mut hit = None;
    for (i, &v) in row.iter().enumerate() {
        if v == 1.0 {
            if hit.is_some() {
                return None;
            }
            hit = Some(i);
        } else if v != 0.0 {
            return None;
        }
    }
    hit
}

fn parse_err(file: &str, line: usize, detail: &str) -> DataError {
    DataError::Parse {
        file: file.to_string(),
        line,
        detail: detail.to_string(),
    }
}

fn read_raw(dir: &Path, file: &str) -> Result<String> {
    let path: PathBuf = dir.join(file);
    if !path.exists() {
        return Err(DataError::MissingFile(path));
    }
    Ok(std::fs::read_to_string(path)?)
}

/// Single-integer lines, with their 1-based line numbers. Blank lines skipped.
fn read_int_lines(dir: &Path, file: &str) -> Result<Vec<(usize, i64)>> {
    read_int_rows(dir, file)?
        .into_iter()
        .map(|(line, fields)| {
            let [v] = fields[..] else {
                return Err(parse_err(
                    file,
                    line,
                    &format!("expected 1 value, found {}", fields.len()),
                ));
            };
            Ok((line, v))
        })
        .collect()
}

/// Comma-separated integer lines, with their 1-based line numbers.
fn read_int_rows(dir: &Path, file: &str) -> Result<Vec<(usize, Vec<i64>)>> {
    let raw = read_raw(dir, file)?;
    let mut rows = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut fields = Vec::new();
        for token in trimmed.split(',') {
            let token = token.trim();
            let value: i64 = token.parse().map_err(|_| {
                parse_err(file, line_no, &format!("non-integer token {token:?}"))
            })?;
            fields.push(value);
        }
        rows.push((line_no, fields));
    }
    Ok(rows)
}
