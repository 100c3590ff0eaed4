use super::matrix::Matrix;
use super::ops;
use super::tape::{NodeId, Tape};
use crate::error::Result;

/// Operations a forward pass needs. Implemented by [`Eager`] (plain values,
/// no gradient state) and by [`Tape`] (recorded for reverse mode).
pub trait Backend {
    type Value: Clone;

    fn constant(&mut self, m: Matrix) -> Self::Value;
    /// Leaf that receives a gradient (same as a constant when not recording).
    fn param(&mut self, m: Matrix) -> Self::Value {
        self.constant(m)
    }
    fn value<'a>(&'a self, v: &'a Self::Value) -> &'a Matrix;

    fn matmul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn matmul_nt(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn sub(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn scale(&mut self, a: &Self::Value, s: f64) -> Self::Value;
    fn relu(&mut self, a: &Self::Value) -> Self::Value;
    fn sigmoid(&mut self, a: &Self::Value) -> Self::Value;
    fn row_normalize(&mut self, a: &Self::Value) -> Self::Value;
    fn frobenius(&mut self, a: &Self::Value) -> Self::Value;
    fn bce(&mut self, p: &Self::Value, target: &Matrix) -> Result<Self::Value>;
    fn soft_assign(&mut self, z: &Self::Value, centers: &Self::Value) -> Result<Self::Value>;
    fn categorical_ce(&mut self, q: &Self::Value, target: &Matrix) -> Result<Self::Value>;

    /// `s·a + shift`, elementwise.
    fn affine(&mut self, a: &Self::Value, s: f64, shift: f64) -> Result<Self::Value> {
        let scaled = self.scale(a, s);
        let (r, c) = self.value(a).shape();
        let offset = self.constant(Matrix::filled(r, c, shift));
        self.add(&scaled, &offset)
    }
}

/// Gradient-free evaluation.
#[derive(Debug, Default, Clone, Copy)]
pub struct Eager;

impl Backend for Eager {
    type Value = Matrix;

    fn constant(&mut self, m: Matrix) -> Matrix {
        m
    }
    fn value<'a>(&'a self, v: &'a Matrix) -> &'a Matrix {
        v
    }
    fn matmul(&mut self, a: &Matrix, b: &Matrix) -> Result<Matrix> {
        a.matmul(b)
    }
    fn matmul_nt(&mut self, a: &Matrix, b: &Matrix) -> Result<Matrix> {
        a.matmul_nt(b)
    }
    fn add(&mut self, a: &Matrix, b: &Matrix) -> Result<Matrix> {
        a.add(b)
    }
    fn sub(&mut self, a: &Matrix, b: &Matrix) -> Result<Matrix> {
        a.sub(b)
    }
    fn scale(&mut self, a: &Matrix, s: f64) -> Matrix {
        a.scale(s)
    }
    fn relu(&mut self, a: &Matrix) -> Matrix {
        a.relu()
    }
    fn sigmoid(&mut self, a: &Matrix) -> Matrix {
        a.sigmoid()
    }
    fn row_normalize(&mut self, a: &Matrix) -> Matrix {
        a.row_normalize()
    }
    fn frobenius(&mut self, a: &Matrix) -> Matrix {
        Matrix::scalar(a.frobenius_norm())
    }
    fn bce(&mut self, p: &Matrix, target: &Matrix) -> Result<Matrix> {
        ops::elementwise_bce(p, target).map(Matrix::scalar)
    }
    fn soft_assign(&mut self, z: &Matrix, centers: &Matrix) -> Result<Matrix> {
        ops::soft_assign(z, centers)
    }
    fn categorical_ce(&mut self, q: &Matrix, target: &Matrix) -> Result<Matrix> {
        ops::categorical_ce(q, target).map(Matrix::scalar)
    }
    fn affine(&mut self, a: &Matrix, s: f64, shift: f64) -> Result<Matrix> {
        Ok(a.map(|v| s * v + shift))
    }
}

impl Backend for Tape {
    type Value = NodeId;

    fn constant(&mut self, m: Matrix) -> NodeId {
        Tape::constant(self, m)
    }
    fn param(&mut self, m: Matrix) -> NodeId {
        Tape::param(self, m)
    }
    fn value<'a>(&'a self, v: &'a NodeId) -> &'a Matrix {
        Tape::value(self, *v)
    }
    fn matmul(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId> {
        Tape::matmul(self, *a, *b)
    }
    fn matmul_nt(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId> {
        Tape::matmul_nt(self, *a, *b)
    }
    fn add(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId> {
        Tape::add(self, *a, *b)
    }
    fn sub(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId> {
        Tape::sub(self, *a, *b)
    }
    fn scale(&mut self, a: &NodeId, s: f64) -> NodeId {
        Tape::scale(self, *a, s)
    }
    fn relu(&mut self, a: &NodeId) -> NodeId {
        Tape::relu(self, *a)
    }
    fn sigmoid(&mut self, a: &NodeId) -> NodeId {
        Tape::sigmoid(self, *a)
    }
    fn row_normalize(&mut self, a: &NodeId) -> NodeId {
        Tape::row_normalize(self, *a)
    }
    fn frobenius(&mut self, a: &NodeId) -> NodeId {
        Tape::frobenius(self, *a)
    }
    fn bce(&mut self, p: &NodeId, target: &Matrix) -> Result<NodeId> {
        Tape::bce(self, *p, target)
    }
    fn soft_assign(&mut self, z: &NodeId, centers: &NodeId) -> Result<NodeId> {
        Tape::soft_assign(self, *z, *centers)
    }
    fn categorical_ce(&mut self, q: &NodeId, target: &Matrix) -> Result<NodeId> {
        Tape::categorical_ce(self, *q, target)
    }
}
