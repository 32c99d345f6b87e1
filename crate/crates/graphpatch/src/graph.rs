//! Sparse undirected graph storage, k-hop ego-graph extraction that preserves
//! source-graph degrees, patch-node insertion, degree stratification, and the
//! dataset directory format.

use std::collections::BTreeSet;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::tensor::Matrix;
use crate::{Error, Result};

/// Label sentinel for unlabeled nodes.
pub const UNLABELED: i32 = -1;

/// Global id carried by patch nodes inside an ego-graph.
pub const PATCH_GLOBAL_ID: u32 = u32::MAX;

/// Train/valid/test node-id sets. Stored sorted; pairwise disjoint.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<u32>,
    pub valid: Vec<u32>,
    pub test: Vec<u32>,
}

/// Immutable sparse undirected graph. Neighbor lists are CSR-compressed,
/// sorted, deduplicated, and never contain self-edges.
#[derive(Debug, Clone)]
pub struct Graph {
    num_nodes: usize,
    offsets: Vec<u32>,
    targets: Vec<u32>,
    features: Matrix,
    labels: Vec<i32>,
    splits: Splits,
}

impl Graph {
    /// Builds a graph from an undirected edge list, deduplicating repeated and
    /// reversed edges. Self-edges and out-of-range ids are errors.
    pub fn new(
        edges: &[(u32, u32)],
        features: Matrix,
        labels: Vec<i32>,
        splits: Splits,
    ) -> Result<Graph> {
        let n = features.rows();
        if labels.len() != n {
            return Err(Error::Format(format!(
                "label count {} does not match node count {n}",
                labels.len()
            )));
        }
        let mut set: BTreeSet<(u32, u32)> = BTreeSet::new();
        for &(u, v) in edges {
            if u == v {
                return Err(Error::Format(format!("self-edge on node {u} rejected")));
            }
            if u as usize >= n || v as usize >= n {
                return Err(Error::Format(format!(
                    "edge ({u}, {v}) references a node outside the dense id range [0, {n})"
                )));
            }
            set.insert((u.min(v), u.max(v)));
        }
        let mut degree = vec![0u32; n];
        for &(u, v) in &set {
            degree[u as usize] += 1;
            degree[v as usize] += 1;
        }
        let mut offsets = vec![0u32; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut cursor = offsets.clone();
        let mut targets = vec![0u32; set.len() * 2];
        for &(u, v) in &set {
            targets[cursor[u as usize] as usize] = v;
            cursor[u as usize] += 1;
            targets[cursor[v as usize] as usize] = u;
            cursor[v as usize] += 1;
        }
        // BTreeSet iteration inserts each node's neighbors in ascending order
        // for the first slot but not the second; sort each list.
        for i in 0..n {
            targets[offsets[i] as usize..offsets[i + 1] as usize].sort_unstable();
        }
        let mut splits = splits;
        for set in [&mut splits.train, &mut splits.valid, &mut splits.test] {
            set.sort_unstable();
            set.dedup();
        }
        for (name, ids) in [
            ("train", &splits.train),
            ("valid", &splits.valid),
            ("test", &splits.test),
        ] {
            if let Some(&bad) = ids.iter().find(|&&v| v as usize >= n) {
                return Err(Error::Format(format!(
                    "{name} split references node {bad} outside [0, {n})"
                )));
            }
        }
        let mut seen = vec![false; n];
        for ids in [&splits.train, &splits.valid, &splits.test] {
            for &v in ids {
                if seen[v as usize] {
                    return Err(Error::Format(format!("node {v} appears in two splits")));
                }
                seen[v as usize] = true;
            }
        }
        for &l in &labels {
            if l < UNLABELED {
                return Err(Error::Format(format!("label {l} below the unlabeled sentinel")));
            }
        }
        Ok(Graph {
            num_nodes: n,
            offsets,
            targets,
            features,
            labels,
            splits,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    pub fn label(&self, v: u32) -> i32 {
        self.labels[v as usize]
    }

    /// Number of classes implied by the labels (max label + 1).
    pub fn num_classes(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize)
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    pub fn neighbors(&self, v: u32) -> &[u32] {
        &self.targets[self.offsets[v as usize] as usize..self.offsets[v as usize + 1] as usize]
    }

    pub fn degree(&self, v: u32) -> u32 {
        self.offsets[v as usize + 1] - self.offsets[v as usize]
    }

    pub fn num_edges(&self) -> usize {
        self.targets.len() / 2
    }

    /// Symmetric-normalized adjacency with self-loops over the whole graph:
    /// one (u, v, 1/√((d_u+1)(d_v+1))) entry per directed edge plus loops,
    /// ordered by (u, v).
    pub fn normalized_adjacency(&self) -> Vec<(u32, u32, f32)> {
        let mut coeffs = Vec::with_capacity(self.targets.len() + self.num_nodes);
        for u in 0..self.num_nodes as u32 {
            let du = (self.degree(u) + 1) as f64;
            coeffs.push((u, u, (1.0 / du) as f32));
            for &v in self.neighbors(u) {
                let dv = (self.degree(v) + 1) as f64;
                coeffs.push((u, v, (1.0 / (du * dv).sqrt()) as f32));
            }
        }
        coeffs.sort_unstable_by_key(|&(u, v, _)| (u, v));
        coeffs
    }
}

/// k-hop subgraph around an anchor. Local id 0 is always the anchor. Degrees
/// are the source graph's, not local recounts, so symmetric normalization on
/// the ego-graph reproduces full-graph propagation at the anchor. Mutable
/// only by appending patch nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct EgoGraph {
    local_to_global: Vec<u32>,
    /// Local undirected edges, stored (min, max), sorted.
    edges: Vec<(u32, u32)>,
    global_degree: Vec<u32>,
    features: Matrix,
    patch_count: usize,
    hops: usize,
}

impl EgoGraph {
    pub fn anchor(&self) -> u32 {
        0
    }

    pub fn num_nodes(&self) -> usize {
        self.local_to_global.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn global_degree(&self) -> &[u32] {
        &self.global_degree
    }

    pub fn local_to_global(&self) -> &[u32] {
        &self.local_to_global
    }

    pub fn patch_count(&self) -> usize {
        self.patch_count
    }

    pub fn hops(&self) -> usize {
        self.hops
    }

    pub fn is_patch(&self, local: u32) -> bool {
        self.local_to_global[local as usize] == PATCH_GLOBAL_ID
    }

    /// Local ids adjacent to the anchor, ascending.
    pub fn anchor_neighbors(&self) -> Vec<u32> {
        let mut out: Vec<u32> = self
            .edges
            .iter()
            .filter_map(|&(u, v)| match (u, v) {
                (0, x) => Some(x),
                (x, 0) => Some(x),
                _ => None,
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Rebuilds an ego-graph from parts; used by the corruption routine.
    /// Callers guarantee the parts already satisfy the type invariants.
    pub(crate) fn from_parts(
        local_to_global: Vec<u32>,
        mut edges: Vec<(u32, u32)>,
        global_degree: Vec<u32>,
        features: Matrix,
        patch_count: usize,
        hops: usize,
    ) -> EgoGraph {
        for e in &mut edges {
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
        }
        edges.sort_unstable();
        edges.dedup();
        EgoGraph {
            local_to_global,
            edges,
            global_degree,
            features,
            patch_count,
            hops,
        }
    }

    /// Symmetric-normalized adjacency with self-loops, using the stored
    /// global degrees. Ordering is (u, v) ascending.
    pub fn normalized_adjacency(&self) -> Vec<(u32, u32, f32)> {
        normalized_adjacency(self)
    }
}

/// Breadth-first k-hop ego-graph extraction. All edges of `g` between
/// included nodes are retained; `global_degree` is copied from `g`.
pub fn ego_extract(g: &Graph, anchor: u32, k: usize) -> Result<EgoGraph> {
    if anchor as usize >= g.num_nodes() {
        return Err(Error::InvalidArg(format!(
            "anchor {anchor} out of range [0, {})",
            g.num_nodes()
        )));
    }
    assert!(k >= 1, "ego_extract needs k >= 1");
    let mut local_of = vec![u32::MAX; g.num_nodes()];
    let mut order: Vec<u32> = vec![anchor];
    local_of[anchor as usize] = 0;
    let mut frontier = vec![anchor];
    for _ in 0..k {
        let mut next = Vec::new();
        for &u in &frontier {
            for &v in g.neighbors(u) {
                if local_of[v as usize] == u32::MAX {
                    local_of[v as usize] = order.len() as u32;
                    order.push(v);
                    next.push(v);
                }
            }
        }
        frontier = next;
    }
    let mut edges = Vec::new();
    for (lu, &gu) in order.iter().enumerate() {
        for &gv in g.neighbors(gu) {
            let lv = local_of[gv as usize];
            if lv != u32::MAX && (lu as u32) < lv {
                edges.push((lu as u32, lv));
            }
        }
    }
    edges.sort_unstable();
    let mut features = Matrix::zeros(0, g.feature_dim());
    let mut global_degree = Vec::with_capacity(order.len());
    for &gid in &order {
        features.push_row(g.features().row(gid as usize));
        global_degree.push(g.degree(gid));
    }
    Ok(EgoGraph {
        local_to_global: order,
        edges,
        global_degree,
        features,
        patch_count: 0,
        hops: k,
    })
}

/// Returns a copy of `ego` with one virtual node appended: its feature row is
/// `feature`, its only edge goes to the anchor, it contributes degree 1 to
/// itself and +1 to the anchor's global degree. The input is untouched.
pub fn add_patch_node(ego: &EgoGraph, feature: &[f32]) -> EgoGraph {
    assert_eq!(
        feature.len(),
        ego.feature_dim(),
        "patch feature width {} vs ego width {}",
        feature.len(),
        ego.feature_dim()
    );
    let mut out = ego.clone();
    let new_local = out.local_to_global.len() as u32;
    out.local_to_global.push(PATCH_GLOBAL_ID);
    out.edges.push((0, new_local));
    out.global_degree[0] += 1;
    out.global_degree.push(1);
    out.features.push_row(feature);
    out.patch_count += 1;
    out
}

/// Symmetric-normalized adjacency with self-loops for an ego-graph, using
/// global degrees: coefficient 1/√((d_u+1)(d_v+1)) per directed edge, 1/(d+1)
/// per self-loop, ordered by (u, v).
pub fn normalized_adjacency(ego: &EgoGraph) -> Vec<(u32, u32, f32)> {
    let n = ego.num_nodes();
    let mut coeffs = Vec::with_capacity(n + ego.edges.len() * 2);
    for u in 0..n as u32 {
        let du = (ego.global_degree[u as usize] + 1) as f64;
        coeffs.push((u, u, (1.0 / du) as f32));
    }
    for &(u, v) in &ego.edges {
        let du = (ego.global_degree[u as usize] + 1) as f64;
        let dv = (ego.global_degree[v as usize] + 1) as f64;
        let c = (1.0 / (du * dv).sqrt()) as f32;
        coeffs.push((u, v, c));
        coeffs.push((v, u, c));
    }
    coeffs.sort_unstable_by_key(|&(u, v, _)| (u, v));
    coeffs
}

/// Lower/mid/upper degree strata of a node population.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreeStrata {
    pub low_set: Vec<u32>,
    pub mid_set: Vec<u32>,
    pub high_set: Vec<u32>,
    /// (largest degree in low_set, smallest degree in high_set).
    pub boundaries: (u32, u32),
}

/// Sorts `population` by (degree, node id) and cuts at indices ⌈n/3⌉ and
/// ⌈2n/3⌉: the lowest third becomes `low_set`, the highest `high_set`. The
/// id tiebreak and fixed cut points make the partition deterministic and
/// independent of input order.
pub fn degree_stratify(g: &Graph, population: &[u32]) -> Result<DegreeStrata> {
    if population.is_empty() {
        return Err(Error::InvalidArg("empty population".into()));
    }
    if population.len() < 3 {
        return Err(Error::InvalidArg(format!(
            "population too small to stratify: {} < 3",
            population.len()
        )));
    }
    let mut ranked: Vec<u32> = population.to_vec();
    ranked.sort_unstable();
    ranked.dedup();
    if ranked.len() < 3 {
        return Err(Error::InvalidArg(format!(
            "population too small to stratify: {} < 3",
            ranked.len()
        )));
    }
    if let Some(&bad) = ranked.iter().find(|&&v| v as usize >= g.num_nodes()) {
        return Err(Error::InvalidArg(format!("population node {bad} out of range")));
    }
    ranked.sort_unstable_by_key(|&v| (g.degree(v), v));
    let n = ranked.len();
    let cut_low = n.div_ceil(3);
    let cut_high = (2 * n).div_ceil(3);
    let low: Vec<u32> = ranked[..cut_low].to_vec();
    let mid: Vec<u32> = ranked[cut_low..cut_high].to_vec();
    let high: Vec<u32> = ranked[cut_high..].to_vec();
    let boundaries = (g.degree(low[n.div_ceil(3) - 1]), g.degree(high[0]));
    let mut strata = DegreeStrata {
        low_set: low,
        mid_set: mid,
        high_set: high,
        boundaries,
    };
    strata.low_set.sort_unstable();
    strata.mid_set.sort_unstable();
    strata.high_set.sort_unstable();
    Ok(strata)
}

// ---- dataset directory format ------------------------------------------------

const FEATURES_MAGIC: &[u8; 4] = b"GPF1";

/// Writes the features.f32 format: "GPF1", u32 LE rows, u32 LE cols, then
/// row-major little-endian f32 data.
pub fn write_features_f32(path: &Path, features: &Matrix) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
    f.write_all(FEATURES_MAGIC).map_err(io)?;
    f.write_all(&(features.rows() as u32).to_le_bytes()).map_err(io)?;
    f.write_all(&(features.cols() as u32).to_le_bytes()).map_err(io)?;
    for &v in features.data() {
        f.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    f.flush().map_err(io)
}

/// Reads the features.f32 format written by [`write_features_f32`].
pub fn read_features_f32(path: &Path) -> Result<Matrix> {
    let io = |e| Error::io(path, e);
    let mut f = std::io::BufReader::new(fs::File::open(path).map_err(io)?);
    let mut header = [0u8; 12];
    f.read_exact(&mut header)
        .map_err(|_| Error::Format(format!("{}: malformed header", path.display())))?;
    if &header[0..4] != FEATURES_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {:?}, expected \"GPF1\"",
            path.display(),
            &header[0..4]
        )));
    }
    let rows = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let mut raw = Vec::new();
    f.read_to_end(&mut raw).map_err(io)?;
    if raw.len() != rows * cols * 4 {
        return Err(Error::Format(format!(
            "{}: feature blob has {} bytes, expected {} for {rows}x{cols}",
            path.display(),
            raw.len(),
            rows * cols * 4
        )));
    }
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Matrix::from_vec(rows, cols, data))
}

/// Loads a dataset directory: edges.tsv, features.f32, labels.tsv,
/// splits.json. Duplicate and reversed edge lines are deduplicated;
/// self-edges are rejected; every referenced id must be inside [0, N) where
/// N is the feature row count.
pub fn load_graph(dataset_dir: &Path) -> Result<Graph> {
    let features = read_features_f32(&dataset_dir.join("features.f32"))?;
    let n = features.rows();

    let edges_path = dataset_dir.join("edges.tsv");
    let text = fs::read_to_string(&edges_path).map_err(|e| Error::io(&edges_path, e))?;
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let (u, v) = match (it.next(), it.next(), it.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => {
                return Err(Error::Format(format!(
                    "{}:{}: expected two node ids, got {line:?}",
                    edges_path.display(),
                    lineno + 1
                )))
            }
        };
        let parse = |s: &str| {
            s.parse::<u32>().map_err(|_| {
                Error::Format(format!(
                    "{}:{}: bad node id {s:?}",
                    edges_path.display(),
                    lineno + 1
                ))
            })
        };
        edges.push((parse(u)?, parse(v)?));
    }

    let labels_path = dataset_dir.join("labels.tsv");
    let text = fs::read_to_string(&labels_path).map_err(|e| Error::io(&labels_path, e))?;
    let mut labels = vec![UNLABELED; n];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let (v, l) = match (it.next(), it.next(), it.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => {
                return Err(Error::Format(format!(
                    "{}:{}: expected \"node_id label_id\", got {line:?}",
                    labels_path.display(),
                    lineno + 1
                )))
            }
        };
        let v: usize = v.parse().map_err(|_| {
            Error::Format(format!("{}:{}: bad node id", labels_path.display(), lineno + 1))
        })?;
        let l: i32 = l.parse().map_err(|_| {
            Error::Format(format!("{}:{}: bad label id", labels_path.display(), lineno + 1))
        })?;
        if v >= n {
            return Err(Error::Format(format!(
                "{}:{}: feature/node count mismatch: labeled node {v} but features declare {n} rows",
                labels_path.display(),
                lineno + 1
            )));
        }
        labels[v] = l;
    }

    let splits_path = dataset_dir.join("splits.json");
    let text = fs::read_to_string(&splits_path).map_err(|e| Error::io(&splits_path, e))?;
    let splits: Splits = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", splits_path.display())))?;

    if let Some(&(u, v)) = edges.iter().find(|&&(u, v)| u as usize >= n || v as usize >= n) {
        return Err(Error::Format(format!(
            "feature/node count mismatch: edge ({u}, {v}) exceeds the {n} feature rows"
        )));
    }
    Graph::new(&edges, features, labels, splits)
}
