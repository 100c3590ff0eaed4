//! The weight-shared training loop and the ablation variants.
//!
//! Each epoch evaluates the encoder twice with the same [`ModelParams`]:
//! once without gradients on the original graph to predict a refined
//! structure, then recorded on that refined graph to compute the loss.

use serde::{Deserialize, Serialize};

use crate::clustering::{hard_labels, kmeans, target_distribution, total_loss};
use crate::config::{SfSwitches, TrainConfig, Variant};
use crate::error::{Error, Result};
use crate::graph::{normalize, Graph, NormalizedAdjacency};
use crate::metrics::{evaluate, Scores};
use crate::refine::{refine, RefinedGraph};
use crate::tensor::{Adam, Matrix, Rng, Tape};
use crate::tigae::{encode, encode_recorded, pretrain, ModelParams};

/// One line of the training trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochTrace {
    pub epoch: usize,
    pub loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nmi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ari: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
}

impl EpochTrace {
    fn new(epoch: usize, loss: f64, scores: Option<Scores>) -> Self {
        Self {
            epoch,
            loss,
            acc: scores.map(|s| s.acc),
            nmi: scores.map(|s| s.nmi),
            ari: scores.map(|s| s.ari),
            f1: scores.map(|s| s.f1),
        }
    }

    pub fn scores(&self) -> Option<Scores> {
        Some(Scores {
            acc: self.acc?,
            nmi: self.nmi?,
            ari: self.ari?,
            f1: self.f1?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Labels of the final epoch.
    pub labels: Vec<usize>,
    /// K-Means labels on the pretrained embedding.
    pub initial_labels: Vec<usize>,
    pub traces: Vec<EpochTrace>,
    pub params: ModelParams,
    pub centers: Matrix,
}

/// Which of the two per-epoch encoder evaluations is running.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pass {
    Predict,
    Train,
}

/// Labels and scores for one epoch.
pub fn evaluate_epoch(labels_pred: &[usize], labels_true: &[usize]) -> Result<Scores> {
    evaluate(labels_true, labels_pred)
}

/// Switches the loop actually applies for `variant`.
pub fn effective_switches(cfg: &TrainConfig) -> SfSwitches {
    match cfg.variant {
        Variant::Full => cfg.sf,
        _ => SfSwitches::NONE,
    }
}

/// Trains pretrained `params`; see [`train_observed`].
pub fn train(g: &Graph, params: ModelParams, cfg: &TrainConfig, rng: &Rng) -> Result<TrainOutcome> {
    train_observed(g, params, cfg, rng, |_, _, _| {})
}

/// Runs the training loop, calling `observe(epoch, pass, params)` right
/// before each encoder evaluation.
///
/// Centers start from K-Means on the pretrained embedding (seeded by
/// `rng.child("kmeans")`); edge sampling draws from `rng.child("refine")`.
/// The structure is always refined from the original graph.
pub fn train_observed(
    g: &Graph,
    mut params: ModelParams,
    cfg: &TrainConfig,
    rng: &Rng,
    mut observe: impl FnMut(usize, Pass, &ModelParams),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.k > g.n() {
        return Err(Error::Contract(format!("k = {} exceeds n = {}", cfg.k, g.n())));
    }
    let switches = effective_switches(cfg);
    let x = g.features();
    let l_orig = normalize(g.adjacency())?;
    let a_tilde = g.adjacency_with_self_loops();

    let pre = encode(&params, &l_orig, x)?;
    let init = kmeans(&pre.z, cfg.k, &rng.child("kmeans"))?;
    let mut centers = init.centers;
    let mut refine_rng = rng.child("refine");
    let mut opt = Adam::new(cfg.lr);
    let mut traces = Vec::with_capacity(cfg.epochs);
    let mut labels = init.labels.clone();
    let l_fixed = normalize(&a_tilde)?;

    for epoch in 1..=cfg.epochs {
        let (a_s, l_p) = if switches.is_identity() {
            // Refinement with every factor off returns Ã unchanged.
            (a_tilde.clone(), l_fixed.clone())
        } else {
            observe(epoch, Pass::Predict, &params);
            let predicted = encode(&params, &l_orig, x)?;
            let refined: RefinedGraph = refine(
                &predicted.a_hat,
                &predicted.x_t,
                &a_tilde,
                cfg.similarity,
                switches,
                &mut refine_rng,
            )?;
            let l_p: NormalizedAdjacency = normalize(&refined.a_p)?;
            (refined.a_s, l_p)
        };

        observe(epoch, Pass::Train, &params);
        let mut tape = Tape::new();
        let (vars, out) = encode_recorded(&mut tape, &params, &l_p, x)?;
        let mu = tape.param(centers.clone());
        let q = tape.soft_assign(out.z, mu)?;
        let q_val = tape.value(q).clone();
        let p = target_distribution(&q_val);
        let loss = total_loss(&mut tape, &out.a_hat, &a_s, &q, &p, cfg.beta)?;
        let value = tape.value(loss).item()?;
        if !value.is_finite() {
            return Err(Error::Diverged { epoch, loss: value });
        }
        labels = hard_labels(&q_val);
        let scores = g.labels().map(|t| evaluate_epoch(&labels, t)).transpose()?;
        traces.push(EpochTrace::new(epoch, value, scores));

        let grads = tape.backward(loss)?;
        let mut ids = vars.ids();
        ids.push(mu);
        let grad_list: Vec<Matrix> = ids
            .iter()
            .map(|&id| grads.get_or_zeros(id, tape.value(id).shape()))
            .collect();
        let mut slots = params.tensors_mut();
        slots.push(&mut centers);
        opt.step(&mut slots, &grad_list)?;
    }

    Ok(TrainOutcome {
        labels,
        initial_labels: init.labels,
        traces,
        params,
        centers,
    })
}

/// Result of one end-to-end run of a variant.
#[derive(Debug, Clone)]
pub struct VariantReport {
    pub variant: Variant,
    pub seed: u64,
    pub labels: Vec<usize>,
    pub scores: Option<Scores>,
    pub pretrain_losses: Vec<f64>,
    pub traces: Vec<EpochTrace>,
    pub params: ModelParams,
}

/// Pretrains and clusters with `variant`.
///
/// * `G`: plain GAE, K-Means on its embedding.
/// * `G+T`: transform-input GAE, K-Means on its embedding.
/// * `G+T+M`: weight-shared loop on the fixed original graph.
/// * `SynC`: weight-shared loop with structure fine-tuning.
///
/// All variants draw from child streams of `Rng::new(seed)`, so variants
/// with a transform share pretrained weights and initial centers.
pub fn run_variant(g: &Graph, cfg: &TrainConfig, variant: Variant, seed: u64) -> Result<VariantReport> {
    let mut cfg = cfg.clone();
    cfg.variant = variant;
    cfg.seed = seed;
    cfg.validate()?;
    let rng = Rng::new(seed);
    let pre = pretrain(g, &cfg, variant, &rng.child("pretrain"))?;
    let (labels, traces, params) = match variant {
        Variant::Gae | Variant::Tigae => {
            let out = encode(&pre.params, &normalize(g.adjacency())?, g.features())?;
            let km = kmeans(&out.z, cfg.k, &rng.child("train").child("kmeans"))?;
            (km.labels, Vec::new(), pre.params)
        }
        Variant::Synergy | Variant::Full => {
            let out = train(g, pre.params, &cfg, &rng.child("train"))?;
            (out.labels, out.traces, out.params)
        }
    };
    let scores = g.labels().map(|t| evaluate(t, &labels)).transpose()?;
    Ok(VariantReport {
        variant,
        seed,
        labels,
        scores,
        pretrain_losses: pre.losses,
        traces,
        params,
    })
}

/// Runs `variant` once per seed. Runs are independent and may execute in
/// parallel; results come back in seed order.
pub fn sweep(g: &Graph, cfg: &TrainConfig, variant: Variant, seeds: &[u64]) -> Vec<Result<VariantReport>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        seeds.par_iter().map(|&s| run_variant(g, cfg, variant, s)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        seeds.iter().map(|&s| run_variant(g, cfg, variant, s)).collect()
    }
}

/// Parameter counts of the weight-shared encoder and of two independent
/// copies (one per pass). Cluster centers are excluded from both.
pub fn parameter_economy(params: &ModelParams) -> (usize, usize) {
    let shared = params.parameter_count();
    (shared, 2 * shared)
}
