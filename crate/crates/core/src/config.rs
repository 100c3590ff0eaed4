//! Run configuration and the per-dataset presets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Similarity;
use crate::tensor::DEFAULT_SEED;

/// Which model pipeline to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Variant {
    /// Plain two-layer GAE, K-Means on its embedding.
    #[serde(rename = "g")]
    Gae,
    /// Transform-input GAE, K-Means on its embedding.
    #[serde(rename = "g+t")]
    Tigae,
    /// Weight-shared loop on the unrefined graph.
    #[serde(rename = "g+t+m")]
    Synergy,
    /// Weight-shared loop with structure fine-tuning.
    #[default]
    #[serde(rename = "sync")]
    Full,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Gae, Variant::Tigae, Variant::Synergy, Variant::Full];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Gae => "g",
            Variant::Tigae => "g+t",
            Variant::Synergy => "g+t+m",
            Variant::Full => "sync",
        }
    }

    pub fn parse(s: &str) -> Result<Variant> {
        let lower = s.to_ascii_lowercase();
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == lower)
            .ok_or_else(|| Error::Validation(format!("unknown variant {s:?} (g, g+t, g+t+m, sync)")))
    }

    /// Whether the encoder has the input transform layer.
    pub fn has_transform(self) -> bool {
        self != Variant::Gae
    }
}

/// Structure fine-tuning factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SfSwitches {
    pub pruning: bool,
    pub link: bool,
    pub weighting: bool,
}

impl SfSwitches {
    pub const ALL: SfSwitches = SfSwitches {
        pruning: true,
        link: true,
        weighting: true,
    };
    pub const NONE: SfSwitches = SfSwitches {
        pruning: false,
        link: false,
        weighting: false,
    };

    pub fn is_identity(self) -> bool {
        self == Self::NONE
    }

    /// Parses a comma-separated list such as `pruning,link`. `none` and the
    /// empty string disable everything.
    pub fn parse(s: &str) -> Result<SfSwitches> {
        let mut out = Self::NONE;
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part.to_ascii_lowercase().as_str() {
                "pruning" => out.pruning = true,
                "link" => out.link = true,
                "weighting" => out.weighting = true,
                "all" => out = Self::ALL,
                "none" => {}
                other => return Err(Error::Validation(format!("unknown sf factor {other:?}"))),
            }
        }
        Ok(out)
    }
}

impl Default for SfSwitches {
    fn default() -> Self {
        Self::ALL
    }
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_embed_dim() -> usize {
    16
}

/// Hyperparameters for pretraining and training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Training learning rate.
    pub lr: f64,
    /// Training epochs.
    pub epochs: usize,
    /// Pretraining learning rate.
    pub pretrain_lr: f64,
    pub pretrain_epochs: usize,
    /// Weight of the similarity-preservation term while pretraining.
    pub alpha: f64,
    /// Weight of the clustering term while training.
    pub beta: f64,
    pub transform_dim: usize,
    /// First GCN layer width; defaults to half the transform dimension.
    #[serde(default)]
    pub hidden_dim: Option<usize>,
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    pub k: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub similarity: Similarity,
    #[serde(default)]
    pub sf: SfSwitches,
    #[serde(default)]
    pub variant: Variant,
}

impl TrainConfig {
    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim.unwrap_or((self.transform_dim / 2).max(1))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(m.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.pretrain_lr > 0.0 && self.pretrain_lr.is_finite()) {
            return bad("learning rates must be positive");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) || !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("alpha and beta must be finite and >= 0");
        }
        if self.transform_dim == 0 || self.embed_dim == 0 || self.hidden_dim() == 0 {
            return bad("layer widths must be positive");
        }
        if self.k == 0 {
            return bad("k must be positive");
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig =
            serde_json::from_str(text).map_err(|e| Error::Validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Preset by dataset name (case-insensitive).
    pub fn preset(name: &str) -> Option<TrainConfig> {
        let name = name.to_ascii_lowercase();
        PRESETS
            .iter()
            .find(|p| p.name == name)
            .map(|p| p.config())
    }
}

/// One row of the per-dataset settings table.
#[derive(Debug, Clone, Copy)]
pub struct Preset {
    pub name: &'static str,
    pub nodes: usize,
    pub classes: usize,
    pub dim: usize,
    pub edges: usize,
    pub homophily: f64,
    pub pretrain_lr: f64,
    pub pretrain_epochs: usize,
    pub alpha: f64,
    pub lr: f64,
    pub epochs: usize,
    pub beta: f64,
    pub transform_dim: usize,
}

impl Preset {
    pub fn config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            epochs: self.epochs,
            pretrain_lr: self.pretrain_lr,
            pretrain_epochs: self.pretrain_epochs,
            alpha: self.alpha,
            beta: self.beta,
            transform_dim: self.transform_dim,
            hidden_dim: None,
            embed_dim: default_embed_dim(),
            k: self.classes,
            seed: DEFAULT_SEED,
            similarity: Similarity::Cosine,
            sf: SfSwitches::ALL,
            variant: Variant::Full,
        }
    }
}

macro_rules! preset {
    ($name:literal, $n:literal, $k:literal, $d:literal, $e:literal, $h:literal,
     $plr:literal, $pep:literal, $alpha:literal, $lr:literal, $ep:literal, $beta:literal, $c:literal) => {
        Preset {
            name: $name,
            nodes: $n,
            classes: $k,
            dim: $d,
            edges: $e,
            homophily: $h,
            pretrain_lr: $plr,
            pretrain_epochs: $pep,
            alpha: $alpha,
            lr: $lr,
            epochs: $ep,
            beta: $beta,
            transform_dim: $c,
        }
    };
}

/// Dataset statistics and settings of the nine benchmark graphs.
pub const PRESETS: [Preset; 9] = [
    preset!("uat", 1190, 4, 239, 13599, 0.70, 2e-3, 50, 0.0, 1e-3, 50, 1.0, 128),
    preset!("cora", 2708, 7, 1433, 5278, 0.81, 2e-3, 80, 0.0, 5e-3, 50, 0.0, 128),
    preset!("acm", 3025, 3, 1870, 13128, 0.82, 1e-3, 50, 0.0, 2e-3, 50, 1.0, 512),
    preset!("cite", 3327, 6, 3703, 4552, 0.74, 2e-3, 20, 1.0, 6e-3, 50, 1.0, 512),
    preset!("dblp", 4057, 4, 334, 3528, 0.80, 2e-3, 20, 1.0, 2e-2, 50, 1.0, 512),
    preset!("amap", 7650, 8, 745, 119081, 0.83, 1e-3, 80, 1.0, 1e-4, 50, 1.0, 512),
    preset!("pubmed", 19717, 3, 500, 44324, 0.80, 2e-3, 50, 10.0, 1e-3, 50, 0.0, 128),
    preset!("wisconsin", 251, 5, 1703, 515, 0.20, 1e-2, 20, 1.0, 1e-2, 50, 1.0, 512),
    preset!("texas", 183, 5, 1703, 325, 0.11, 5e-3, 20, 10.0, 5e-3, 50, 0.0, 512),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_values() {
        let acm = TrainConfig::preset("ACM").unwrap();
        assert_eq!((acm.pretrain_lr, acm.pretrain_epochs, acm.alpha, acm.transform_dim), (1e-3, 50, 0.0, 512));
        assert_eq!((acm.lr, acm.epochs, acm.beta, acm.k), (2e-3, 50, 1.0, 3));
        let cite = TrainConfig::preset("cite").unwrap();
        assert_eq!((cite.pretrain_lr, cite.pretrain_epochs, cite.alpha, cite.transform_dim), (2e-3, 20, 1.0, 512));
        let texas = TrainConfig::preset("texas").unwrap();
        assert_eq!((texas.lr, texas.epochs, texas.beta, texas.transform_dim), (5e-3, 50, 0.0, 512));
        assert_eq!(texas.seed, 325);
    }

    #[test]
    fn hidden_dim_defaults() {
        assert_eq!(TrainConfig::preset("acm").unwrap().hidden_dim(), 256);
        assert_eq!(TrainConfig::preset("cora").unwrap().hidden_dim(), 64);
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let cfg = TrainConfig::preset("dblp").unwrap();
        assert_eq!(TrainConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        let bad = cfg.to_json().replacen("\"beta\"", "\"betta\"", 1);
        assert!(TrainConfig::from_json(&bad).is_err());
        let minimal = r#"{"lr":0.01,"epochs":5,"pretrain_lr":0.01,"pretrain_epochs":5,
            "alpha":0,"beta":1,"transform_dim":8,"k":2}"#;
        let m = TrainConfig::from_json(minimal).unwrap();
        assert_eq!((m.seed, m.embed_dim, m.sf, m.variant), (325, 16, SfSwitches::ALL, Variant::Full));
    }

    #[test]
    fn parse_switches_and_variants() {
        assert_eq!(
            SfSwitches::parse("pruning").unwrap(),
            SfSwitches { pruning: true, link: false, weighting: false }
        );
        assert_eq!(SfSwitches::parse("pruning,link,weighting").unwrap(), SfSwitches::ALL);
        assert!(SfSwitches::parse("none").unwrap().is_identity());
        assert!(SfSwitches::parse("prune").is_err());
        assert_eq!(Variant::parse("G+T").unwrap(), Variant::Tigae);
        assert!(Variant::parse("x").is_err());
    }
}
