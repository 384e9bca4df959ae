//! Directed attributed graphs, their JSON file format, and k-NN graph construction.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// A directed graph with node features, per-edge features and optional node labels.
///
/// Undirected graphs store both directions. The adjacency matrix is derived,
/// never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    node_features: Matrix,
    edges: Vec<(usize, usize)>,
    edge_features: Matrix,
    node_labels: Option<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    num_nodes: usize,
    node_features: Vec<Vec<f64>>,
    edges: Vec<[usize; 2]>,
    edge_features: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    node_labels: Option<Vec<usize>>,
}

impl Graph {
    /// Validates and assembles a graph.
    pub fn new(
        num_nodes: usize,
        node_features: Matrix,
        edges: Vec<(usize, usize)>,
        edge_features: Matrix,
        node_labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        if node_features.rows() != num_nodes {
            return Err(Error::Validation(format!(
                "node_features has {} rows for {num_nodes} nodes",
                node_features.rows()
            )));
        }
        if edge_features.rows() != edges.len() {
            return Err(Error::Validation(format!(
                "edge_features has {} rows for {} edges",
                edge_features.rows(),
                edges.len()
            )));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        for (i, &(s, d)) in edges.iter().enumerate() {
            if s >= num_nodes || d >= num_nodes {
                return Err(Error::Validation(format!(
                    "edges[{i}] = [{s},{d}] references a node outside 0..{num_nodes}"
                )));
            }
            if !seen.insert((s, d)) {
                return Err(Error::Validation(format!("edges[{i}] = [{s},{d}] is a duplicate")));
            }
        }
        if let Some(labels) = &node_labels {
            if labels.len() != num_nodes {
                return Err(Error::Validation(format!(
                    "node_labels has {} entries for {num_nodes} nodes",
                    labels.len()
                )));
            }
        }
        Ok(Self { num_nodes, node_features, edges, edge_features, node_labels })
    }

    /// Graph with constant unit node features (d = 1) and no edge features.
    pub fn from_edges(num_nodes: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let e = edges.len();
        Self::new(num_nodes, Matrix::filled(num_nodes, 1, 1.0), edges, Matrix::zeros(e, 0), None)
    }

    /// Like [`Graph::from_edges`] but each pair is stored in both directions.
    pub fn undirected(num_nodes: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut edges = Vec::with_capacity(pairs.len() * 2);
        for &(a, b) in pairs {
            edges.push((a, b));
            if a != b {
                edges.push((b, a));
            }
        }
        Self::from_edges(num_nodes, edges)
    }

    /// Undirected cycle on `n` nodes.
    pub fn cycle(n: usize) -> Self {
        let pairs: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Self::undirected(n, &pairs).expect("cycle edges are valid")
    }

    /// Undirected path on `n` nodes.
    pub fn path(n: usize) -> Self {
        let pairs: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::undirected(n, &pairs).expect("path edges are valid")
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn node_features(&self) -> &Matrix {
        &self.node_features
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_features(&self) -> &Matrix {
        &self.edge_features
    }

    pub fn node_labels(&self) -> Option<&[usize]> {
        self.node_labels.as_deref()
    }

    pub fn feature_dim(&self) -> usize {
        self.node_features.cols()
    }

    pub fn edge_feature_dim(&self) -> usize {
        self.edge_features.cols()
    }

    pub fn with_node_features(mut self, x: Matrix) -> Result<Self> {
        if x.rows() != self.num_nodes {
            return Err(Error::Validation(format!(
                "{} feature rows for {} nodes",
                x.rows(),
                self.num_nodes
            )));
        }
        self.node_features = x;
        Ok(self)
    }

    pub fn with_edge_features(mut self, e: Matrix) -> Result<Self> {
        if e.rows() != self.edges.len() {
            return Err(Error::Validation(format!(
                "{} edge feature rows for {} edges",
                e.rows(),
                self.edges.len()
            )));
        }
        self.edge_features = e;
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.num_nodes {
            return Err(Error::Validation(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.num_nodes
            )));
        }
        self.node_labels = Some(labels);
        Ok(self)
    }

    /// For each node, the `(source, edge index)` pairs of its incoming edges.
    pub fn in_edges(&self) -> Vec<Vec<(usize, usize)>> {
        let mut inc = vec![Vec::new(); self.num_nodes];
        for (e, &(s, d)) in self.edges.iter().enumerate() {
            inc[d].push((s, e));
        }
        inc
    }

    pub fn has_edge(&self, src: usize, dst: usize) -> bool {
        self.edges.contains(&(src, dst))
    }

    /// Dense directed adjacency, `a[src][dst] = 1`.
    pub fn adjacency(&self) -> Matrix {
        let mut a = Matrix::zeros(self.num_nodes, self.num_nodes);
        for &(s, d) in &self.edges {
            a.set(s, d, 1.0);
        }
        a
    }

    /// Symmetrized 0/1 adjacency.
    pub fn undirected_adjacency(&self) -> Matrix {
        let mut a = Matrix::zeros(self.num_nodes, self.num_nodes);
        for &(s, d) in &self.edges {
            a.set(s, d, 1.0);
            a.set(d, s, 1.0);
        }
        a
    }

    /// Renames node `v` to `perm[v]`. Edge order and edge features are preserved.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_nodes;
        if perm.len() != n {
            return Err(Error::Validation(format!("permutation of length {} for {n} nodes", perm.len())));
        }
        let mut inverse = vec![usize::MAX; n];
        for (old, &new) in perm.iter().enumerate() {
            if new >= n || inverse[new] != usize::MAX {
                return Err(Error::Validation("relabel: not a permutation".into()));
            }
            inverse[new] = old;
        }
        let x = self.node_features.permute_rows(&inverse);
        let edges = self.edges.iter().map(|&(s, d)| (perm[s], perm[d])).collect();
        let labels = self
            .node_labels
            .as_ref()
            .map(|l| inverse.iter().map(|&old| l[old]).collect());
        Self::new(n, x, edges, self.edge_features.clone(), labels)
    }

    /// Disjoint union; the nodes of `other` are shifted by `self.num_nodes()`.
    pub fn disjoint_union(&self, other: &Graph) -> Result<Self> {
        if self.feature_dim() != other.feature_dim() || self.edge_feature_dim() != other.edge_feature_dim() {
            return Err(Error::shape("disjoint_union", "feature dimensions differ"));
        }
        let off = self.num_nodes;
        let mut x = self.node_features.to_rows();
        x.extend(other.node_features.to_rows());
        let mut edges = self.edges.clone();
        edges.extend(other.edges.iter().map(|&(s, d)| (s + off, d + off)));
        let de = self.edge_feature_dim();
        let mut ef: Vec<f64> = self.edge_features.as_slice().to_vec();
        ef.extend_from_slice(other.edge_features.as_slice());
        let labels = match (&self.node_labels, &other.node_labels) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        let n = off + other.num_nodes;
        let x = if self.feature_dim() == 0 { Matrix::zeros(n, 0) } else { Matrix::from_rows(&x)? };
        let ne = edges.len();
        Self::new(n, x, edges, Matrix::new(ne, de, ef)?, labels)
    }

    fn to_file(&self) -> GraphFile {
        let edge_features = if self.edge_features.cols() == 0 {
            Vec::new()
        } else {
            self.edge_features.to_rows()
        };
        GraphFile {
            num_nodes: self.num_nodes,
            node_features: self.node_features.to_rows(),
            edges: self.edges.iter().map(|&(s, d)| [s, d]).collect(),
            edge_features,
            node_labels: self.node_labels.clone(),
        }
    }

    fn from_file(f: GraphFile) -> Result<Self> {
        let node_features = rows_to_matrix(&f.node_features, f.num_nodes, "node_features")?;
        let edges: Vec<(usize, usize)> = f.edges.iter().map(|e| (e[0], e[1])).collect();
        let edge_features = if f.edge_features.is_empty() {
            Matrix::zeros(edges.len(), 0)
        } else {
            rows_to_matrix(&f.edge_features, edges.len(), "edge_features")?
        };
        Self::new(f.num_nodes, node_features, edges, edge_features, f.node_labels)
    }

    /// Canonical compact JSON serialization.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("graph serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text)
            .map_err(|source| Error::Parse { path: "<string>".into(), source })?;
        Self::from_file(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: GraphFile = serde_json::from_str(&text)
            .map_err(|source| Error::Parse { path: path.to_path_buf(), source })?;
        Self::from_file(file).map_err(|e| match e {
            Error::Validation(msg) => Error::Validation(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

fn rows_to_matrix(rows: &[Vec<f64>], expected: usize, field: &str) -> Result<Matrix> {
    if rows.len() != expected {
        return Err(Error::Validation(format!("{field} has {} rows, expected {expected}", rows.len())));
    }
    let cols = rows.first().map_or(0, Vec::len);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != cols {
            return Err(Error::Validation(format!(
                "{field}[{i}] has {} entries, expected {cols}",
                r.len()
            )));
        }
    }
    Matrix::from_rows(rows)
}

/// Directed k-NN graph: each point receives edges from its `k` nearest other
/// points (Euclidean, ties to the lower index). Edge feature is the distance.
pub fn knn_graph(points: &Matrix, k: usize) -> Result<Graph> {
    let n = points.rows();
    if k >= n {
        return Err(Error::Parameter(format!("k = {k} must be smaller than the {n} points")));
    }
    let mut edges = Vec::with_capacity(n * k);
    let mut dists = Vec::with_capacity(n * k);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        cand.clear();
        let pi = points.row(i);
        for j in (0..n).filter(|&j| j != i) {
            let d2: f64 = pi.iter().zip(points.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            cand.push((d2, j));
        }
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(d2, j) in &cand[..k] {
            edges.push((j, i));
            dists.push(d2.sqrt());
        }
    }
    let ne = edges.len();
    Graph::new(n, points.clone(), edges, Matrix::new(ne, 1, dists)?, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knn_on_a_line() {
        let pts = Matrix::from_rows(&[[0.0], [1.0], [3.0]]).unwrap();
        let g = knn_graph(&pts, 1).unwrap();
        let mut e = g.edges().to_vec();
        e.sort_unstable();
        assert_eq!(e, vec![(0, 1), (1, 0), (1, 2)]);
        assert_eq!(g.edge_feature_dim(), 1);
    }

    #[test]
    fn knn_complete_when_k_is_n_minus_one() {
        let pts = Matrix::from_rows(&[[0.0, 1.0], [2.0, 0.5], [3.0, 3.0], [-1.0, 0.0]]).unwrap();
        let g = knn_graph(&pts, 3).unwrap();
        assert_eq!(g.num_edges(), 12);
        for s in 0..4 {
            for d in 0..4 {
                assert_eq!(g.has_edge(s, d), s != d);
            }
        }
    }

    #[test]
    fn knn_duplicate_points_pick_lowest_index() {
        let pts = Matrix::from_rows(&[[0.0], [5.0], [5.0], [5.0]]).unwrap();
        let g = knn_graph(&pts, 1).unwrap();
        // node 0 is equidistant from 1, 2, 3
        assert!(g.has_edge(1, 0));
        // node 3 sees 1 and 2 at distance 0
        assert!(g.has_edge(1, 3));
        assert!(g.has_edge(2, 1));
    }

    #[test]
    fn knn_rejects_large_k() {
        let pts = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        assert!(matches!(knn_graph(&pts, 2), Err(Error::Parameter(_))));
    }

    #[test]
    fn minimal_file() {
        let g = Graph::from_json(r#"{"num_nodes":1,"node_features":[[0.0]],"edges":[],"edge_features":[]}"#)
            .unwrap();
        assert_eq!(g.num_nodes(), 1);
        assert_eq!(g.num_edges(), 0);
    }

    #[test]
    fn out_of_range_edge_is_validation_error() {
        let r = Graph::from_json(
            r#"{"num_nodes":3,"node_features":[[0.0],[0.0],[0.0]],"edges":[[0,5]],"edge_features":[]}"#,
        );
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn duplicate_edge_is_validation_error() {
        let r = Graph::from_edges(2, vec![(0, 1), (0, 1)]);
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn ragged_features_report_the_field() {
        let r = Graph::from_json(
            r#"{"num_nodes":2,"node_features":[[0.0],[0.0,1.0]],"edges":[],"edge_features":[]}"#,
        );
        match r {
            Err(Error::Validation(msg)) => assert!(msg.contains("node_features[1]"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_json_is_parse_error_with_position() {
        let r = Graph::from_json("{\"num_nodes\": 1,\n \"node_features\": [[0.0]], \"edges\": [[0,]]}");
        match r {
            Err(Error::Parse { source, .. }) => assert_eq!(source.line(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn triangle_round_trips_byte_identically() {
        let g = Graph::cycle(3).with_labels(vec![0, 1, 0]).unwrap();
        assert_eq!(g.num_edges(), 6);
        let text = g.to_json();
        let back = Graph::from_json(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn relabel_moves_features_with_nodes() {
        let g = Graph::path(3)
            .with_node_features(Matrix::from_rows(&[[0.0], [1.0], [2.0]]).unwrap())
            .unwrap();
        let p = g.relabel(&[2, 0, 1]).unwrap();
        assert_eq!(p.node_features().get(2, 0), 0.0);
        assert_eq!(p.node_features().get(0, 0), 1.0);
        assert!(p.has_edge(2, 0));
    }
}
