//! Graph auto-encoder with an input transform layer.
//!
//! The encoder computes `Z = L̃·ReLU(L̃·X_t·W1)·W2` with `X_t = X·W_aᵀ + W_b`
//! and decodes edge probabilities as `sigmoid(Z·Zᵀ)`. Without the transform
//! (`X_t = X`) this is the plain two-layer GAE.

use crate::config::{TrainConfig, Variant};
use crate::error::{Error, Result};
use crate::graph::{cosine_similarity, normalize, Graph, NormalizedAdjacency};
use crate::tensor::{glorot_uniform, Adam, Backend, Eager, Matrix, Rng, Tape};

/// Input transform `X ↦ X·W_aᵀ + W_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transform {
    /// `c×d`.
    pub weight: Matrix,
    /// `n×c`, one bias row per node.
    pub bias: Matrix,
}

/// Encoder weights. A single instance serves both the prediction pass and
/// the training pass of the weight-shared loop.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub transform: Option<Transform>,
    /// `c×d₁` (or `d×d₁` without transform).
    pub w1: Matrix,
    /// `d₁×d_z`.
    pub w2: Matrix,
}

impl ModelParams {
    /// Glorot-uniform weights, zero bias.
    pub fn init_tigae(n: usize, d: usize, c: usize, d1: usize, dz: usize, rng: &mut Rng) -> Self {
        let weight = glorot_uniform(c, d, rng);
        let w1 = glorot_uniform(c, d1, rng);
        let w2 = glorot_uniform(d1, dz, rng);
        Self {
            transform: Some(Transform {
                weight,
                bias: Matrix::zeros(n, c),
            }),
            w1,
            w2,
        }
    }

    pub fn init_gae(d: usize, d1: usize, dz: usize, rng: &mut Rng) -> Self {
        let w1 = glorot_uniform(d, d1, rng);
        let w2 = glorot_uniform(d1, dz, rng);
        Self {
            transform: None,
            w1,
            w2,
        }
    }

    pub fn for_config(g: &Graph, cfg: &TrainConfig, variant: Variant, rng: &mut Rng) -> Self {
        let (d1, dz) = (cfg.hidden_dim(), cfg.embed_dim);
        if variant.has_transform() {
            Self::init_tigae(g.n(), g.feature_dim(), cfg.transform_dim, d1, dz, rng)
        } else {
            Self::init_gae(g.feature_dim(), d1, dz, rng)
        }
    }

    /// `c·d + n·c + c·d₁ + d₁·d_z` (without transform: `d·d₁ + d₁·d_z`).
    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|m| m.len()).sum()
    }

    pub fn embed_dim(&self) -> usize {
        self.w2.cols()
    }

    /// Weights in checkpoint / optimizer order: `W_a, W_b, W_1, W_2`.
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut v = Vec::with_capacity(4);
        if let Some(t) = &self.transform {
            v.push(&t.weight);
            v.push(&t.bias);
        }
        v.push(&self.w1);
        v.push(&self.w2);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = Vec::with_capacity(4);
        if let Some(t) = &mut self.transform {
            v.push(&mut t.weight);
            v.push(&mut t.bias);
        }
        v.push(&mut self.w1);
        v.push(&mut self.w2);
        v
    }

    /// Places the weights on `backend` as trainable leaves.
    pub fn lift<B: Backend>(&self, backend: &mut B) -> EncoderVars<B::Value> {
        let transform = self
            .transform
            .as_ref()
            .map(|t| (backend.param(t.weight.clone()), backend.param(t.bias.clone())));
        EncoderVars {
            transform,
            w1: backend.param(self.w1.clone()),
            w2: backend.param(self.w2.clone()),
        }
    }

    fn check_shapes(&self, n: usize, d: usize) -> Result<()> {
        let input = match &self.transform {
            Some(t) => {
                if t.weight.cols() != d {
                    return Err(Error::shape("encode: W_a vs X", t.weight.shape(), (n, d)));
                }
                if t.bias.shape() != (n, t.weight.rows()) {
                    return Err(Error::shape("encode: W_b", t.bias.shape(), (n, t.weight.rows())));
                }
                t.weight.rows()
            }
            None => d,
        };
        if self.w1.rows() != input {
            return Err(Error::shape("encode: W_1", self.w1.shape(), (input, self.w1.cols())));
        }
        if self.w2.rows() != self.w1.cols() {
            return Err(Error::shape("encode: W_2", self.w2.shape(), self.w1.shape()));
        }
        Ok(())
    }
}

/// Encoder weights living on some backend.
#[derive(Debug, Clone)]
pub struct EncoderVars<V> {
    pub transform: Option<(V, V)>,
    pub w1: V,
    pub w2: V,
}

impl<V: Clone> EncoderVars<V> {
    /// Same order as [`ModelParams::tensors`].
    pub fn ids(&self) -> Vec<V> {
        let mut v = Vec::new();
        if let Some((a, b)) = &self.transform {
            v.push(a.clone());
            v.push(b.clone());
        }
        v.push(self.w1.clone());
        v.push(self.w2.clone());
        v
    }
}

/// Backend values of one forward pass.
#[derive(Debug, Clone)]
pub struct Encoded<V> {
    pub x_t: V,
    pub z: V,
    pub a_hat: V,
}

/// Concrete result of a forward pass.
#[derive(Debug, Clone)]
pub struct EncodeOutput {
    /// Transformed input (`X` itself without transform).
    pub x_t: Matrix,
    pub z: Matrix,
    /// Decoded edge probabilities.
    pub a_hat: Matrix,
}

/// Forward pass on any backend.
pub fn forward<B: Backend>(
    b: &mut B,
    vars: &EncoderVars<B::Value>,
    l_norm: &B::Value,
    x: &B::Value,
) -> Result<Encoded<B::Value>> {
    let x_t = match &vars.transform {
        Some((wa, wb)) => {
            let proj = b.matmul_nt(x, wa)?;
            b.add(&proj, wb)?
        }
        None => x.clone(),
    };
    let h = b.matmul(&x_t, &vars.w1)?;
    let h = b.matmul(l_norm, &h)?;
    let h = b.relu(&h);
    let z = b.matmul(&h, &vars.w2)?;
    let z = b.matmul(l_norm, &z)?;
    let logits = b.matmul_nt(&z, &z)?;
    let a_hat = b.sigmoid(&logits);
    Ok(Encoded { x_t, z, a_hat })
}

/// Gradient-free forward pass.
pub fn encode(params: &ModelParams, l_norm: &NormalizedAdjacency, x: &Matrix) -> Result<EncodeOutput> {
    params.check_shapes(l_norm.matrix().rows(), x.cols())?;
    if x.rows() != l_norm.matrix().rows() {
        return Err(Error::shape("encode: X vs L", x.shape(), l_norm.matrix().shape()));
    }
    let mut eager = Eager;
    let vars = params.lift(&mut eager);
    let out = forward(&mut eager, &vars, &l_norm.matrix().clone(), x)?;
    Ok(EncodeOutput {
        x_t: out.x_t,
        z: out.z,
        a_hat: out.a_hat,
    })
}

/// Recorded forward pass; the returned vars hold the parameter node ids.
pub fn encode_recorded(
    tape: &mut Tape,
    params: &ModelParams,
    l_norm: &NormalizedAdjacency,
    x: &Matrix,
) -> Result<(EncoderVars<crate::tensor::NodeId>, Encoded<crate::tensor::NodeId>)> {
    params.check_shapes(l_norm.matrix().rows(), x.cols())?;
    if x.rows() != l_norm.matrix().rows() {
        return Err(Error::shape("encode: X vs L", x.shape(), l_norm.matrix().shape()));
    }
    let vars = params.lift(tape);
    let l = tape.constant(l_norm.matrix().clone());
    let xv = tape.constant(x.clone());
    let out = forward(tape, &vars, &l, &xv)?;
    Ok((vars, out))
}

/// Plain GAE forward pass.
pub fn gae_encode(w1: &Matrix, w2: &Matrix, l_norm: &NormalizedAdjacency, x: &Matrix) -> Result<EncodeOutput> {
    let params = ModelParams {
        transform: None,
        w1: w1.clone(),
        w2: w2.clone(),
    };
    encode(&params, l_norm, x)
}

/// Affine map of similarities from `[-1, 1]` to `[0, 1]`.
pub fn similarity_to_probability(s: &Matrix) -> Matrix {
    s.map(|v| ((v + 1.0) * 0.5).clamp(0.0, 1.0))
}

/// `(1/N)·‖Â − Ã‖ + α·BCE(map(S(X_t)), map(S(X)))`.
///
/// `s_x_target` is the similarity of the raw features already mapped to
/// `[0, 1]` (see [`similarity_to_probability`]).
pub fn pretrain_loss<B: Backend>(
    b: &mut B,
    out: &Encoded<B::Value>,
    a_tilde: &Matrix,
    s_x_target: &Matrix,
    alpha: f64,
) -> Result<B::Value> {
    let n = a_tilde.rows().max(1) as f64;
    let target = b.constant(a_tilde.clone());
    let diff = b.sub(&out.a_hat, &target)?;
    let rec = b.frobenius(&diff);
    let rec = b.scale(&rec, 1.0 / n);
    if alpha == 0.0 {
        return Ok(rec);
    }
    let xn = b.row_normalize(&out.x_t);
    let s = b.matmul_nt(&xn, &xn)?;
    let s = b.affine(&s, 0.5, 0.5)?;
    let ce = b.bce(&s, s_x_target)?;
    let ce = b.scale(&ce, alpha);
    b.add(&rec, &ce)
}

/// Fixed inputs of pretraining derived once from the graph.
#[derive(Debug, Clone)]
pub struct PretrainInputs {
    pub l_norm: NormalizedAdjacency,
    pub a_tilde: Matrix,
    pub s_x_target: Matrix,
}

impl PretrainInputs {
    pub fn new(g: &Graph) -> Result<Self> {
        Ok(Self {
            l_norm: normalize(g.adjacency())?,
            a_tilde: g.adjacency_with_self_loops(),
            s_x_target: similarity_to_probability(&cosine_similarity(g.features())),
        })
    }
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub params: ModelParams,
    /// Loss at each epoch, measured before that epoch's update.
    pub losses: Vec<f64>,
}

/// Full-batch Adam pretraining of a freshly initialized encoder.
pub fn pretrain(g: &Graph, cfg: &TrainConfig, variant: Variant, rng: &Rng) -> Result<PretrainOutcome> {
    cfg.validate()?;
    let mut init_rng = rng.child("init");
    let params = ModelParams::for_config(g, cfg, variant, &mut init_rng);
    pretrain_from(g, params, cfg)
}

/// Pretrains starting from `params`.
pub fn pretrain_from(g: &Graph, mut params: ModelParams, cfg: &TrainConfig) -> Result<PretrainOutcome> {
    let inputs = PretrainInputs::new(g)?;
    let alpha = if params.transform.is_some() { cfg.alpha } else { 0.0 };
    let mut opt = Adam::new(cfg.pretrain_lr);
    let mut losses = Vec::with_capacity(cfg.pretrain_epochs);
    for epoch in 1..=cfg.pretrain_epochs {
        let mut tape = Tape::new();
        let (vars, out) = encode_recorded(&mut tape, &params, &inputs.l_norm, g.features())?;
        let loss = pretrain_loss(&mut tape, &out, &inputs.a_tilde, &inputs.s_x_target, alpha)?;
        let value = tape.value(loss).item()?;
        if !value.is_finite() {
            return Err(Error::Diverged { epoch, loss: value });
        }
        losses.push(value);
        let grads = tape.backward(loss)?;
        let grad_list: Vec<Matrix> = vars
            .ids()
            .into_iter()
            .map(|id| grads.get_or_zeros(id, tape.value(id).shape()))
            .collect();
        opt.step(&mut params.tensors_mut(), &grad_list)?;
    }
    Ok(PretrainOutcome { params, losses })
}
