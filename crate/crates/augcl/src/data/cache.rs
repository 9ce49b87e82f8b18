//! Binary sidecar cache for parsed collections.
//!
//! Layout: magic `AUGG`, version (u32), then length-prefixed sections — one
//! header (feature dim, class count, graph count) followed by one section per
//! graph. All integers little-endian; features stored as f64 bits, so the
//! round trip is exact.

use std::path::Path;

use crate::numerics::Tensor;

use super::{DataError, Graph, GraphCollection, Result};

const MAGIC: [u8; 4] = *b"AUGG";
const VERSION: u32 = 1;

pub(super) fn write_cache(path: &Path, collection: &GraphCollection) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());

    let mut header = Vec::new();
    header.extend_from_slice(&(collection.feature_dim() as u32).to_le_bytes());
    header.extend_from_slice(&(collection.class_count() as u32).to_le_bytes());
    header.extend_from_slice(&(collection.len() as u32).to_le_bytes());
    push_section(&mut buf, &header);

    for g in collection.graphs() {
        let mut s = Vec::new();
        s.extend_from_slice(&(g.node_count() as u32).to_le_bytes());
        let label = g.label().map_or(-1, |l| l as i64);
        s.extend_from_slice(&label.to_le_bytes());
        s.extend_from_slice(&(g.edge_count() as u32).to_le_bytes());
        for &(u, v) in g.edges() {
            s.extend_from_slice(&(u as u32).to_le_bytes());
            s.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for &x in g.node_features().data() {
            s.extend_from_slice(&x.to_le_bytes());
        }
        push_section(&mut buf, &s);
    }
    std::fs::write(path, buf)?;
    Ok(())
}

pub(super) fn read_cache(path: &Path) -> Result<GraphCollection> {
    let bytes = std::fs::read(path)?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(DataError::Cache("unexpected end of cache".into()));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };

    if take(&mut pos, 4)? != MAGIC {
        return Err(DataError::Cache("bad magic".into()));
    }
    let version = read_u32(take(&mut pos, 4)?);
    if version != VERSION {
        return Err(DataError::Cache(format!("unsupported version {version}")));
    }

    let header_len = read_u32(take(&mut pos, 4)?) as usize;
    let header = take(&mut pos, header_len)?;
    if header.len() != 12 {
        return Err(DataError::Cache("malformed header".into()));
    }
    let feature_dim = read_u32(&header[0..4]) as usize;
    let class_count = read_u32(&header[4..8]) as usize;
    let graph_count = read_u32(&header[8..12]) as usize;

    let mut graphs = Vec::with_capacity(graph_count);
    for _ in 0..graph_count {
        let section_len = read_u32(take(&mut pos, 4)?) as usize;
        let s = take(&mut pos, section_len)?;
        graphs.push(read_graph(s, feature_dim)?);
    }
    if pos != bytes.len() {
        return Err(DataError::Cache("trailing bytes".into()));
    }
    let collection = GraphCollection::new(graphs, class_count)?;
    if collection.feature_dim() != feature_dim {
        return Err(DataError::Cache("feature dim mismatch".into()));
    }
    Ok(collection)
}

fn read_graph(s: &[u8], feature_dim: usize) -> Result<Graph> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > s.len() {
            return Err(DataError::Cache("truncated graph section".into()));
        }
        let b = &s[*pos..*pos + n];
        *pos += n;
        Ok(b)
    };
    let node_count = read_u32(take(&mut pos, 4)?) as usize;
    let label_raw = i64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
    let label = (label_raw >= 0).then_some(label_raw as usize);
    let edge_count = read_u32(take(&mut pos, 4)?) as usize;
    let mut edges = Vec::with_capacity(edge_count);
    for _ in 0..edge_count {
        let u = read_u32(take(&mut pos, 4)?) as usize;
        let v = read_u32(take(&mut pos, 4)?) as usize;
        edges.push((u, v));
    }
    let numel = node_count * feature_dim;
    let mut data = Vec::with_capacity(numel);
    for _ in 0..numel {
        data.push(f64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()));
    }
    if pos != s.len() {
        return Err(DataError::Cache("trailing bytes in graph section".into()));
    }
    let features = Tensor::new(vec![node_count, feature_dim], data)
        .map_err(|e| DataError::Cache(e.to_string()))?;
    Graph::new(node_count, edges, features, label)
}

fn push_section(buf: &mut Vec<u8>, section: &[u8]) {
    buf.extend_from_slice(&(section.len() as u32).to_le_bytes());
    buf.extend_from_slice(section);
}

fn read_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes(b.try_into().unwrap())
}

#[cfg(test)]
mod tests {
    use super::super::tests::triangle_and_edge;
    use super::*;

    #[test]
    fn cache_round_trip_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.augg");
        let original = triangle_and_edge();
        write_cache(&path, &original).unwrap();
        let back = read_cache(&path).unwrap();
        assert_eq!(original, back);
    }

    #[test]
    fn corrupted_cache_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.augg");
        write_cache(&path, &triangle_and_edge()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 1);
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(read_cache(&path), Err(DataError::Cache(_))));
    }
}
