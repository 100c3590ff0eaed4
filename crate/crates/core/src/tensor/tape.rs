//! Reverse-mode differentiation over matrix-valued nodes.
//!
//! Every operation appends a node whose inputs already exist on the tape, so
//! node order is topological and [`Tape::backward`] is a single reverse sweep.

use super::matrix::Matrix;
use super::ops::{self, BCE_EPS, CE_FLOOR};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    MatMulNt(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Hadamard(NodeId, NodeId),
    Scale(NodeId, f64),
    Relu(NodeId),
    Sigmoid(NodeId),
    RowNormalize(NodeId),
    Sum(NodeId),
    Frobenius(NodeId),
    Bce(NodeId, Matrix),
    SoftAssign(NodeId, NodeId),
    CategoricalCe(NodeId, Matrix),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Matrix,
    param: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints for every node reached from the loss.
#[derive(Debug)]
pub struct Gradients {
    adjoints: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Matrix> {
        self.adjoints.get(id.0).and_then(Option::as_ref)
    }

    /// Gradient for `id`, or zeros of `shape` when the loss does not depend on it.
    pub fn get_or_zeros(&self, id: NodeId, shape: (usize, usize)) -> Matrix {
        self.get(id)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn is_param(&self, id: NodeId) -> bool {
        self.nodes[id.0].param
    }

    fn push(&mut self, op: Op, value: Matrix) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            param: false,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Matrix) -> NodeId {
        let id = self.push(Op::Leaf, value);
        self.nodes[id.0].param = true;
        id
    }

    /// Leaf treated as a constant.
    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), v))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul_nt(self.value(b))?;
        Ok(self.push(Op::MatMulNt(a, b), v))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(Op::Hadamard(a, b), v))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.value(a).scale(s);
        self.push(Op::Scale(a, s), v)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).relu();
        self.push(Op::Relu(a), v)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).sigmoid();
        self.push(Op::Sigmoid(a), v)
    }

    pub fn row_normalize(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).row_normalize();
        self.push(Op::RowNormalize(a), v)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Matrix::scalar(self.value(a).sum());
        self.push(Op::Sum(a), v)
    }

    pub fn frobenius(&mut self, a: NodeId) -> NodeId {
        let v = Matrix::scalar(self.value(a).frobenius_norm());
        self.push(Op::Frobenius(a), v)
    }

    /// Mean binary cross-entropy of `p` against the constant `target`.
    pub fn bce(&mut self, p: NodeId, target: &Matrix) -> Result<NodeId> {
        let v = ops::elementwise_bce(self.value(p), target)?;
        Ok(self.push(Op::Bce(p, target.clone()), Matrix::scalar(v)))
    }

    pub fn soft_assign(&mut self, z: NodeId, centers: NodeId) -> Result<NodeId> {
        let v = ops::soft_assign(self.value(z), self.value(centers))?;
        Ok(self.push(Op::SoftAssign(z, centers), v))
    }

    /// Categorical cross-entropy of `q` against the constant `target`.
    pub fn categorical_ce(&mut self, q: NodeId, target: &Matrix) -> Result<NodeId> {
        let v = ops::categorical_ce(self.value(q), target)?;
        Ok(self.push(Op::CategoricalCe(q, target.clone()), Matrix::scalar(v)))
    }

    /// Propagates adjoints from the scalar `loss` back to every node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, node {} is {:?}",
                loss.0,
                self.value(loss).shape()
            )));
        }
        let mut adj: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let da = g.matmul_nt(self.value(*b))?;
                    let db = self.value(*a).matmul_tn(&g)?;
                    accumulate(&mut adj, *a, da)?;
                    accumulate(&mut adj, *b, db)?;
                }
                Op::MatMulNt(a, b) => {
                    let da = g.matmul(self.value(*b))?;
                    let db = g.matmul_tn(self.value(*a))?;
                    accumulate(&mut adj, *a, da)?;
                    accumulate(&mut adj, *b, db)?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, g.clone())?;
                    accumulate(&mut adj, *b, g.clone())?;
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *b, g.scale(-1.0))?;
                    accumulate(&mut adj, *a, g.clone())?;
                }
                Op::Hadamard(a, b) => {
                    let da = g.hadamard(self.value(*b))?;
                    let db = g.hadamard(self.value(*a))?;
                    accumulate(&mut adj, *a, da)?;
                    accumulate(&mut adj, *b, db)?;
                }
                Op::Scale(a, s) => accumulate(&mut adj, *a, g.scale(*s))?,
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let da = g.zip(x, |g, x| if x > 0.0 { g } else { 0.0 });
                    accumulate(&mut adj, *a, da)?;
                }
                Op::Sigmoid(a) => {
                    let da = g.zip(&node.value, |g, y| g * y * (1.0 - y));
                    accumulate(&mut adj, *a, da)?;
                }
                Op::RowNormalize(a) => {
                    let x = self.value(*a);
                    let y = &node.value;
                    let mut da = Matrix::zeros(x.rows(), x.cols());
                    for i in 0..x.rows() {
                        let norm = x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
                        if norm == 0.0 {
                            continue;
                        }
                        let (yr, gr) = (y.row(i), g.row(i));
                        let proj: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for ((d, &yv), &gv) in da.row_mut(i).iter_mut().zip(yr).zip(gr) {
                            *d = (gv - yv * proj) / norm;
                        }
                    }
                    accumulate(&mut adj, *a, da)?;
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    accumulate(&mut adj, *a, Matrix::filled(r, c, g.item()?))?;
                }
                Op::Frobenius(a) => {
                    let x = self.value(*a);
                    let norm = node.value.item()?;
                    let da = if norm > 0.0 {
                        x.scale(g.item()? / norm)
                    } else {
                        Matrix::zeros(x.rows(), x.cols())
                    };
                    accumulate(&mut adj, *a, da)?;
                }
                Op::Bce(p, t) => {
                    let pv = self.value(*p);
                    let scale = g.item()? / pv.len().max(1) as f64;
                    let da = pv.zip(t, |p, t| {
                        if p <= BCE_EPS || p >= 1.0 - BCE_EPS {
                            0.0
                        } else {
                            scale * (-t / p + (1.0 - t) / (1.0 - p))
                        }
                    });
                    accumulate(&mut adj, *p, da)?;
                }
                Op::SoftAssign(z, mu) => {
                    let (dz, dmu) = soft_assign_backward(self.value(*z), self.value(*mu), &node.value, &g)?;
                    accumulate(&mut adj, *z, dz)?;
                    accumulate(&mut adj, *mu, dmu)?;
                }
                Op::CategoricalCe(q, p) => {
                    let qv = self.value(*q);
                    let scale = g.item()? / qv.rows().max(1) as f64;
                    let dq = qv.zip(p, |q, p| if q > CE_FLOOR { -scale * p / q } else { 0.0 });
                    accumulate(&mut adj, *q, dq)?;
                }
            }
            adj[idx] = Some(g);
        }
        Ok(Gradients { adjoints: adj })
    }
}

fn accumulate(adj: &mut [Option<Matrix>], id: NodeId, g: Matrix) -> Result<()> {
    match &mut adj[id.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

fn soft_assign_backward(
    z: &Matrix,
    mu: &Matrix,
    q: &Matrix,
    g: &Matrix,
) -> Result<(Matrix, Matrix)> {
    let (n, k) = q.shape();
    let mut dz = Matrix::zeros(z.rows(), z.cols());
    let mut dmu = Matrix::zeros(mu.rows(), mu.cols());
    let dist = ops::squared_distances(z, mu)?;
    for i in 0..n {
        let w: Vec<f64> = (0..k).map(|j| 1.0 / (1.0 + dist.get(i, j))).collect();
        let total: f64 = w.iter().sum();
        let inner: f64 = (0..k).map(|j| g.get(i, j) * q.get(i, j)).sum();
        for j in 0..k {
            // dL/dd_ij = dL/dw_ij · dw/dd, with dw/dd = -w²
            let dd = -(g.get(i, j) - inner) / total * w[j] * w[j];
            for c in 0..z.cols() {
                let diff = 2.0 * dd * (z.get(i, c) - mu.get(j, c));
                dz.row_mut(i)[c] += diff;
                dmu.row_mut(j)[c] -= diff;
            }
        }
    }
    Ok((dz, dmu))
}

impl Matrix {
    fn zip(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        debug_assert_eq!(self.shape(), other.shape());
        let data = self.data().iter().zip(other.data()).map(|(&a, &b)| f(a, b)).collect();
        Matrix::new(self.rows(), self.cols(), data).expect("same shape")
    }
}
