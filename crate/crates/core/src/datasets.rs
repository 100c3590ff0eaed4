//! Dataset bundles on disk, the stochastic block model generator, and the
//! perturbation harness.
//!
//! A bundle directory holds tab-separated, LF-terminated text files:
//!
//! * `edges.tsv`: `i<TAB>j[<TAB>w]` per line, undirected, 0-based ids.
//!   Duplicates are merged and self-loops dropped.
//! * `features.tsv`: one row of `d` decimals per node.
//! * `labels.tsv` (optional): one class id per line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{homophily_ratio, Graph};
use crate::tensor::{Matrix, Rng};

pub const EDGES_FILE: &str = "edges.tsv";
pub const FEATURES_FILE: &str = "features.tsv";
pub const LABELS_FILE: &str = "labels.tsv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub n: usize,
    pub d: usize,
    pub k: Option<usize>,
    pub edges: usize,
    pub homophily: Option<f64>,
}

impl DatasetMeta {
    pub fn of(g: &Graph) -> Self {
        Self {
            n: g.n(),
            d: g.feature_dim(),
            k: g.num_classes(),
            edges: g.edge_count(),
            homophily: homophily_ratio(g).ok(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub name: String,
    pub graph: Graph,
    pub meta: DatasetMeta,
}

impl DatasetBundle {
    pub fn new(name: impl Into<String>, graph: Graph) -> Self {
        let meta = DatasetMeta::of(&graph);
        Self {
            name: name.into(),
            graph,
            meta,
        }
    }
}

fn load_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Load {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| load_err(path, 0, format!("cannot read: {e}")))
}

/// Non-empty lines with 1-based line numbers. A trailing empty line
/// (final LF) is allowed; interior blank lines are an error.
fn lines<'a>(path: &Path, text: &'a str) -> Result<Vec<(usize, &'a str)>> {
    let mut out: Vec<(usize, &str)> = text.split('\n').enumerate().map(|(i, l)| (i + 1, l)).collect();
    if out.last().is_some_and(|(_, l)| l.is_empty()) {
        out.pop();
    }
    for &(no, l) in &out {
        if l.is_empty() {
            return Err(load_err(path, no, "blank line"));
        }
        if l.ends_with('\r') {
            return Err(load_err(path, no, "CR line ending; expected LF"));
        }
    }
    Ok(out)
}

fn parse_features(path: &Path) -> Result<Matrix> {
    let text = read_text(path)?;
    let mut data = Vec::new();
    let mut width = None;
    let rows = lines(path, &text)?;
    for &(no, line) in &rows {
        let before = data.len();
        for field in line.split('\t') {
            let v: f64 = field
                .parse()
                .map_err(|_| load_err(path, no, format!("bad decimal {field:?}")))?;
            if !v.is_finite() {
                return Err(load_err(path, no, "non-finite value"));
            }
            data.push(v);
        }
        let w = data.len() - before;
        match width {
            None => width = Some(w),
            Some(expected) if expected != w => {
                return Err(load_err(path, no, format!("ragged row: {w} columns, expected {expected}")))
            }
            _ => {}
        }
    }
    let n = rows.len();
    if n == 0 {
        return Err(load_err(path, 0, "no feature rows"));
    }
    Matrix::new(n, width.unwrap_or(0), data)
}

fn parse_edges(path: &Path, n: usize) -> Result<Matrix> {
    let text = read_text(path)?;
    let mut weights: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (no, line) in lines(path, &text)? {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 && fields.len() != 3 {
            return Err(load_err(path, no, format!("expected 2 or 3 columns, found {}", fields.len())));
        }
        let id = |s: &str| -> Result<usize> {
            let v: usize = s.parse().map_err(|_| load_err(path, no, format!("bad node id {s:?}")))?;
            if v >= n {
                return Err(load_err(path, no, format!("node id {v} out of range (n = {n})")));
            }
            Ok(v)
        };
        let (i, j) = (id(fields[0])?, id(fields[1])?);
        let w = match fields.get(2) {
            Some(s) => s
                .parse::<f64>()
                .ok()
                .filter(|w| w.is_finite() && *w > 0.0)
                .ok_or_else(|| load_err(path, no, format!("bad edge weight {s:?}")))?,
            None => 1.0,
        };
        if i == j {
            continue;
        }
        let key = (i.min(j), i.max(j));
        if let Some(&prev) = weights.get(&key) {
            if prev != w {
                return Err(load_err(
                    path,
                    no,
                    format!("edge {}-{} repeated with weight {w}, earlier {prev}", key.0, key.1),
                ));
            }
        }
        weights.insert(key, w);
    }
    let mut a = Matrix::zeros(n, n);
    for (&(i, j), &w) in &weights {
        a.set(i, j, w);
        a.set(j, i, w);
    }
    Ok(a)
}

fn parse_labels(path: &Path, n: usize) -> Result<Vec<usize>> {
    let text = read_text(path)?;
    let rows = lines(path, &text)?;
    let labels = rows
        .iter()
        .map(|&(no, l)| l.parse().map_err(|_| load_err(path, no, format!("bad label {l:?}"))))
        .collect::<Result<Vec<usize>>>()?;
    if labels.len() != n {
        return Err(load_err(path, rows.len(), format!("{} labels for {n} nodes", labels.len())));
    }
    Ok(labels)
}

/// Reads a bundle directory. The bundle name is the directory name.
pub fn load(dir: &Path) -> Result<DatasetBundle> {
    let features = parse_features(&dir.join(FEATURES_FILE))?;
    let n = features.rows();
    let adjacency = parse_edges(&dir.join(EDGES_FILE), n)?;
    let labels_path = dir.join(LABELS_FILE);
    let labels = if labels_path.exists() {
        Some(parse_labels(&labels_path, n)?)
    } else {
        None
    };
    let graph = Graph::new(adjacency, features, labels)?;
    let name = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let bundle = DatasetBundle::new(name, graph);
    debug_assert_eq!(bundle.meta, DatasetMeta::of(&bundle.graph));
    Ok(bundle)
}

/// Writes `edges.tsv`, `features.tsv` and (when present) `labels.tsv`.
/// Decimals use the shortest representation that parses back exactly.
pub fn save(graph: &Graph, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut edges = String::new();
    for (i, j, w) in graph.edges() {
        if w == 1.0 {
            writeln!(edges, "{i}\t{j}").expect("write to string");
        } else {
            writeln!(edges, "{i}\t{j}\t{w}").expect("write to string");
        }
    }
    let mut feats = String::new();
    for row in graph.features().row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        feats.push_str(&line.join("\t"));
        feats.push('\n');
    }
    let mut written = vec![dir.join(EDGES_FILE), dir.join(FEATURES_FILE)];
    std::fs::write(&written[0], edges)?;
    std::fs::write(&written[1], feats)?;
    if let Some(labels) = graph.labels() {
        let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
        let path = dir.join(LABELS_FILE);
        std::fs::write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}

/// Planted-partition graph with one-hot block features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    pub n: usize,
    pub k: usize,
    pub intra_p: f64,
    pub inter_p: f64,
    pub feature_noise: f64,
    pub seed: u64,
}

impl SbmSpec {
    pub fn validate(&self) -> Result<()> {
        let unit = |p: f64| (0.0..=1.0).contains(&p);
        if self.k == 0 || self.k > self.n {
            return Err(Error::Contract(format!("sbm needs 1 <= k <= n, got k={}, n={}", self.k, self.n)));
        }
        if !(unit(self.inter_p) && unit(self.intra_p) && self.inter_p <= self.intra_p) {
            return Err(Error::Contract("sbm needs 0 <= inter_p <= intra_p <= 1".into()));
        }
        if !unit(self.feature_noise) {
            return Err(Error::Contract("feature_noise must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Contiguous near-equal blocks: node `i` belongs to block `i·k/n`.
    pub fn block_of(&self, i: usize) -> usize {
        i * self.k / self.n
    }
}

/// Samples every pair `i < j` independently (row-major), then the features:
/// the block one-hot with each entry replaced by `U(0,1)` with probability
/// `feature_noise`.
pub fn generate_sbm(spec: &SbmSpec) -> Result<DatasetBundle> {
    spec.validate()?;
    let root = Rng::new(spec.seed);
    let mut edge_rng = root.child("sbm-edges");
    let mut feat_rng = root.child("sbm-features");
    let n = spec.n;
    let labels: Vec<usize> = (0..n).map(|i| spec.block_of(i)).collect();
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { spec.intra_p } else { spec.inter_p };
            if edge_rng.bernoulli(p) {
                a.set(i, j, 1.0);
                a.set(j, i, 1.0);
            }
        }
    }
    let x = Matrix::from_fn(n, spec.k, |i, c| {
        let clean = if labels[i] == c { 1.0 } else { 0.0 };
        if feat_rng.bernoulli(spec.feature_noise) {
            feat_rng.uniform()
        } else {
            clean
        }
    });
    let graph = Graph::new(a, x, Some(labels))?;
    Ok(DatasetBundle::new(format!("sbm-n{}-k{}-s{}", spec.n, spec.k, spec.seed), graph))
}

fn check_ratio(ratio: f64) -> Result<()> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::Contract(format!("perturbation ratio must lie in [0, 1), got {ratio}")));
    }
    Ok(())
}

/// Zeroes `⌊ratio·d⌋` uniformly chosen feature columns.
pub fn perturb_mask_features(g: &Graph, ratio: f64, rng: &mut Rng) -> Result<Graph> {
    check_ratio(ratio)?;
    let d = g.feature_dim();
    let count = (ratio * d as f64).floor() as usize;
    let mut x = g.features().clone();
    for c in rng.sample_indices(d, count) {
        for i in 0..x.rows() {
            x.set(i, c, 0.0);
        }
    }
    g.with_features(x)
}

/// Inserts `⌊ratio·|E|⌋` new distinct non-self undirected edges of weight 1.
pub fn perturb_add_edges(g: &Graph, ratio: f64, rng: &mut Rng) -> Result<Graph> {
    check_ratio(ratio)?;
    let n = g.n();
    let count = (ratio * g.edge_count() as f64).floor() as usize;
    let free = n * n.saturating_sub(1) / 2 - g.edge_count();
    if count > free {
        return Err(Error::Contract(format!("cannot add {count} edges, only {free} pairs free")));
    }
    let mut a = g.adjacency().clone();
    let mut added = 0;
    while added < count {
        let (i, j) = (rng.below(n), rng.below(n));
        if i != j && a.get(i, j) == 0.0 {
            a.set(i, j, 1.0);
            a.set(j, i, 1.0);
            added += 1;
        }
    }
    g.with_adjacency(a)
}
