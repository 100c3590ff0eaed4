//! Undirected attributed graphs and the quantities computed on them.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const SYMMETRY_TOL: f64 = 1e-12;

/// Undirected graph with node features and optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adjacency: Matrix,
    features: Matrix,
    labels: Option<Vec<usize>>,
}

impl Graph {
    /// Validates and builds a graph. The adjacency must be square, symmetric,
    /// non-negative and have a zero diagonal.
    pub fn new(adjacency: Matrix, features: Matrix, labels: Option<Vec<usize>>) -> Result<Self> {
        check_adjacency(&adjacency)?;
        let n = adjacency.rows();
        for i in 0..n {
            if adjacency.get(i, i) != 0.0 {
                return Err(Error::Validation(format!("self-loop on node {i}")));
            }
        }
        if features.rows() != n {
            return Err(Error::Validation(format!(
                "{} feature rows for {n} nodes",
                features.rows()
            )));
        }
        if !features.all_finite() {
            return Err(Error::Validation("non-finite feature value".into()));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::Validation(format!("{} labels for {n} nodes", l.len())));
            }
        }
        Ok(Self {
            adjacency,
            features,
            labels,
        })
    }

    pub fn n(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn adjacency(&self) -> &Matrix {
        &self.adjacency
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Number of classes implied by the labels (`max + 1`).
    pub fn num_classes(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().copied().max().map_or(0, |m| m + 1))
    }

    /// Undirected edges `(i, j, w)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        upper_edges(&self.adjacency)
    }

    pub fn edge_count(&self) -> usize {
        self.edges().len()
    }

    /// `A + I`.
    pub fn adjacency_with_self_loops(&self) -> Matrix {
        with_self_loops(&self.adjacency)
    }

    pub fn with_features(&self, features: Matrix) -> Result<Graph> {
        Graph::new(self.adjacency.clone(), features, self.labels.clone())
    }

    pub fn with_adjacency(&self, adjacency: Matrix) -> Result<Graph> {
        Graph::new(adjacency, self.features.clone(), self.labels.clone())
    }
}

fn check_adjacency(a: &Matrix) -> Result<()> {
    if !a.is_square() {
        return Err(Error::Validation(format!(
            "adjacency must be square, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !a.all_finite() || a.data().iter().any(|&v| v < 0.0) {
        return Err(Error::Validation("adjacency entries must be finite and >= 0".into()));
    }
    if !a.is_symmetric(SYMMETRY_TOL) {
        return Err(Error::Validation("adjacency is not symmetric".into()));
    }
    Ok(())
}

pub(crate) fn upper_edges(a: &Matrix) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for i in 0..a.rows() {
        for (j, &w) in a.row(i).iter().enumerate().skip(i + 1) {
            if w > 0.0 {
                out.push((i, j, w));
            }
        }
    }
    out
}

pub fn with_self_loops(a: &Matrix) -> Matrix {
    let mut out = a.clone();
    for i in 0..a.rows() {
        out.set(i, i, out.get(i, i) + 1.0);
    }
    out
}

/// `D̃^{-1/2}(A + I)D̃^{-1/2}`, the propagation matrix of a GCN layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    matrix: Matrix,
}

impl NormalizedAdjacency {
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }
}

/// Adds self-loops and symmetrically normalizes by degree.
pub fn normalize(adjacency: &Matrix) -> Result<NormalizedAdjacency> {
    check_adjacency(adjacency)?;
    normalize_with_loops(&with_self_loops(adjacency))
}

/// `D^{-1/2} A D^{-1/2}` for an adjacency that already carries its
/// self-loops (such as a refined graph). Isolated rows stay zero.
pub fn normalize_with_loops(a: &Matrix) -> Result<NormalizedAdjacency> {
    check_adjacency(a)?;
    let inv_sqrt: Vec<f64> = a
        .row_sums()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let mut m = a.clone();
    let n = m.rows();
    for i in 0..n {
        let di = inv_sqrt[i];
        for (j, v) in m.row_mut(i).iter_mut().enumerate() {
            *v *= di * inv_sqrt[j];
        }
    }
    // Exact symmetry: products above are computed in different orders per side.
    for i in 0..n {
        for j in i + 1..n {
            let v = m.get(i, j);
            m.set(j, i, v);
        }
    }
    Ok(NormalizedAdjacency { matrix: m })
}

/// Pairwise similarity used when comparing node features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    #[default]
    Cosine,
    Pearson,
}

impl Similarity {
    pub fn compute(self, x: &Matrix) -> Matrix {
        match self {
            Similarity::Cosine => cosine_similarity(x),
            Similarity::Pearson => pearson_similarity(x),
        }
    }
}

/// Row-wise cosine similarity. A zero row has similarity 0 with every other
/// row and 1 with itself.
pub fn cosine_similarity(x: &Matrix) -> Matrix {
    let xn = x.row_normalize();
    let mut s = xn.matmul_nt(&xn).expect("square by construction");
    for i in 0..s.rows() {
        s.set(i, i, 1.0);
    }
    s.clamp(-1.0, 1.0)
}

/// Pearson correlation between rows: cosine similarity of mean-centered rows.
pub fn pearson_similarity(x: &Matrix) -> Matrix {
    let mut centered = x.clone();
    for i in 0..x.rows() {
        let r = centered.row_mut(i);
        let mean = r.iter().sum::<f64>() / r.len().max(1) as f64;
        r.iter_mut().for_each(|v| *v -= mean);
    }
    cosine_similarity(&centered)
}

/// Fraction of edges whose endpoints share a label.
pub fn homophily_ratio(g: &Graph) -> Result<f64> {
    let labels = g
        .labels()
        .ok_or_else(|| Error::Contract("homophily_ratio needs labels".into()))?;
    homophily_of(g.adjacency(), labels)
}

/// Edge homophily of any adjacency (entries `> 0` off the diagonal are edges).
pub fn homophily_of(adjacency: &Matrix, labels: &[usize]) -> Result<f64> {
    if adjacency.rows() != labels.len() {
        return Err(Error::shape("homophily", adjacency.shape(), (labels.len(), 1)));
    }
    let edges = upper_edges(adjacency);
    if edges.is_empty() {
        return Ok(0.0);
    }
    let same = edges.iter().filter(|(i, j, _)| labels[*i] == labels[*j]).count();
    Ok(same as f64 / edges.len() as f64)
}

/// `½ tr(Fᵀ L F)` with `L = D − A` built from the raw adjacency.
pub fn dirichlet_energy(adjacency: &Matrix, f: &Matrix) -> Result<f64> {
    if adjacency.rows() != f.rows() || !adjacency.is_square() {
        return Err(Error::shape("dirichlet_energy", adjacency.shape(), f.shape()));
    }
    let degrees = adjacency.row_sums();
    let af = adjacency.matmul(f)?;
    let mut total = 0.0;
    for i in 0..f.rows() {
        for (c, &v) in f.row(i).iter().enumerate() {
            total += v * (degrees[i] * v - af.get(i, c));
        }
    }
    Ok((0.5 * total).max(0.0))
}
