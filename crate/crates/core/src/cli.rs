//! Command-line front end: argument definitions and command runners.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint;
use crate::clustering::kmeans;
use crate::config::{SfSwitches, TrainConfig, Variant};
use crate::datasets::{self, SbmSpec, EDGES_FILE, FEATURES_FILE, LABELS_FILE};
use crate::error::Error;
use crate::graph::normalize;
use crate::metrics::{evaluate, Scores};
use crate::refine::refine;
use crate::tensor::{Matrix, Rng, RNG_VERSION};
use crate::tigae::{encode, pretrain};
use crate::train::train;

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

pub const LABELS_OUT: &str = "labels.txt";
pub const TRACE_OUT: &str = "trace.jsonl";
pub const METRICS_OUT: &str = "metrics.json";
pub const MANIFEST_OUT: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "syncluster", version, about = "Deep attributed-graph clustering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pretrain the encoder and write a checkpoint.
    Pretrain(PretrainArgs),
    /// Run the clustering loop from a checkpoint.
    Train(TrainArgs),
    /// Score a label file against a dataset's labels.
    Evaluate(EvaluateArgs),
    /// Generate a stochastic block model bundle.
    Generate(GenerateArgs),
    /// Apply feature masking and/or edge addition to a bundle.
    Perturb(PerturbArgs),
    /// Aggregate the metrics of several runs into a CSV table.
    Report(ReportArgs),
    /// Export a dense matrix as CSV.
    Dump(DumpArgs),
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long, required_unless_present = "print_defaults")]
    pub data: Option<PathBuf>,
    #[arg(long, required_unless_present = "print_defaults")]
    pub config: Option<PathBuf>,
    #[arg(long, required_unless_present = "print_defaults")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub variant: Option<String>,
    /// Print the preset configuration for a dataset and exit.
    #[arg(long, value_name = "NAME")]
    pub print_defaults: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub variant: Option<String>,
    /// Comma-separated subset of pruning,link,weighting (or all/none).
    #[arg(long)]
    pub sf: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 0.2)]
    pub intra: f64,
    #[arg(long, default_value_t = 0.02)]
    pub inter: f64,
    #[arg(long, default_value_t = 0.3)]
    pub noise: f64,
    #[arg(long, default_value_t = crate::tensor::DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Fraction of feature columns to zero.
    #[arg(long, default_value_t = 0.0)]
    pub mask_features: f64,
    /// New edges as a fraction of the existing edge count.
    #[arg(long, default_value_t = 0.0)]
    pub add_edges: f64,
    #[arg(long, default_value_t = crate::tensor::DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, required_if_eq_any([("what", "refined"), ("what", "embeddings")]))]
    pub ckpt: Option<PathBuf>,
    #[arg(long, value_parser = ["similarity", "refined", "embeddings"])]
    pub what: String,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Provenance record written next to every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub rng: String,
    pub seed: u64,
    pub variant: String,
    pub config: TrainConfig,
    pub dataset: String,
    pub dataset_fingerprint: String,
    /// Artifact name to path, relative to the manifest's directory.
    pub artifacts: Vec<(String, String)>,
}

/// SHA-256 over the bundle files, each prefixed by its name and length.
pub fn fingerprint(dir: &Path) -> anyhow::Result<String> {
    let mut h = Sha256::new();
    for name in [EDGES_FILE, FEATURES_FILE, LABELS_FILE] {
        let path = dir.join(name);
        if name == LABELS_FILE && !path.exists() {
            continue;
        }
        let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        h.update(name.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(h.finalize().iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

/// Maps an error to the process exit code: 3 for numeric failure, 2 for
/// everything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Diverged { .. }) => EXIT_NUMERIC,
        _ => EXIT_INPUT,
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Pretrain(a) => cmd_pretrain(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Perturb(a) => cmd_perturb(a),
        Command::Report(a) => cmd_report(a),
        Command::Dump(a) => cmd_dump(a),
    }
}

fn read_config(path: &Path) -> anyhow::Result<TrainConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    Ok(TrainConfig::from_json(&text)?)
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn manifest_path_for(ckpt: &Path) -> PathBuf {
    let mut name = ckpt.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    ckpt.with_file_name(name)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn cmd_pretrain(a: PretrainArgs) -> anyhow::Result<()> {
    if let Some(name) = a.print_defaults {
        let Some(cfg) = TrainConfig::preset(&name) else {
            return Err(Error::Validation(format!("no preset named {name:?}")).into());
        };
        println!("{}", cfg.to_json());
        return Ok(());
    }
    let (data, config, out) = (a.data.unwrap(), a.config.unwrap(), a.out.unwrap());
    let bundle = datasets::load(&data)?;
    let mut cfg = read_config(&config)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(v) = &a.variant {
        cfg.variant = Variant::parse(v)?;
    }
    let rng = Rng::new(cfg.seed);
    let outcome = pretrain(&bundle.graph, &cfg, cfg.variant, &rng.child("pretrain"))?;
    checkpoint::save(&outcome.params, &out)?;
    let manifest = RunManifest {
        command: "pretrain".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        rng: RNG_VERSION.into(),
        seed: cfg.seed,
        variant: cfg.variant.name().into(),
        config: cfg.clone(),
        dataset: bundle.name,
        dataset_fingerprint: fingerprint(&data)?,
        artifacts: vec![("checkpoint".into(), file_name(&out))],
    };
    write_json(&manifest_path_for(&out), &manifest)?;
    eprintln!(
        "pretrained {} epochs, final loss {:.6}",
        outcome.losses.len(),
        outcome.losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn labels_text(labels: &[usize]) -> String {
    labels.iter().map(|l| format!("{l}\n")).collect()
}

fn cmd_train(a: TrainArgs) -> anyhow::Result<()> {
    let bundle = datasets::load(&a.data)?;
    let g = &bundle.graph;
    let mut cfg = read_config(&a.config)?;
    if let Some(v) = &a.variant {
        cfg.variant = Variant::parse(v)?;
    }
    if let Some(sf) = &a.sf {
        cfg.sf = SfSwitches::parse(sf)?;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let params = checkpoint::load(&a.ckpt)?;
    if params.transform.is_some() != cfg.variant.has_transform() {
        return Err(Error::Validation(format!(
            "checkpoint {} a transform layer but variant {} {} one",
            if params.transform.is_some() { "has" } else { "lacks" },
            cfg.variant.name(),
            if cfg.variant.has_transform() { "needs" } else { "forbids" },
        ))
        .into());
    }
    let rng = Rng::new(cfg.seed).child("train");
    let (labels, traces) = match cfg.variant {
        Variant::Gae | Variant::Tigae => {
            cfg.validate()?;
            let z = encode(&params, &normalize(g.adjacency())?, g.features())?.z;
            (kmeans(&z, cfg.k, &rng.child("kmeans"))?.labels, Vec::new())
        }
        Variant::Synergy | Variant::Full => {
            let out = train(g, params, &cfg, &rng)?;
            (out.labels, out.traces)
        }
    };

    std::fs::create_dir_all(&a.out)?;
    std::fs::write(a.out.join(LABELS_OUT), labels_text(&labels))?;
    let mut trace = String::new();
    for t in &traces {
        trace.push_str(&serde_json::to_string(t)?);
        trace.push('\n');
    }
    std::fs::write(a.out.join(TRACE_OUT), trace)?;
    let mut artifacts = vec![
        ("checkpoint".to_string(), a.ckpt.display().to_string()),
        ("labels".to_string(), LABELS_OUT.to_string()),
        ("trace".to_string(), TRACE_OUT.to_string()),
    ];
    if let Some(truth) = g.labels() {
        let scores = evaluate(truth, &labels)?;
        write_json(&a.out.join(METRICS_OUT), &scores)?;
        artifacts.push(("metrics".into(), METRICS_OUT.into()));
        eprintln!(
            "acc {:.4}  nmi {:.4}  ari {:.4}  f1 {:.4}",
            scores.acc, scores.nmi, scores.ari, scores.f1
        );
    }
    let manifest = RunManifest {
        command: "train".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        rng: RNG_VERSION.into(),
        seed: cfg.seed,
        variant: cfg.variant.name().into(),
        config: cfg,
        dataset: bundle.name,
        dataset_fingerprint: fingerprint(&a.data)?,
        artifacts,
    };
    write_json(&a.out.join(MANIFEST_OUT), &manifest)
}

fn read_labels(path: &Path) -> anyhow::Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .map(|(i, l)| {
            l.trim().parse().map_err(|_| {
                Error::Load {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("bad label {l:?}"),
                }
                .into()
            })
        })
        .collect()
}

fn cmd_evaluate(a: EvaluateArgs) -> anyhow::Result<()> {
    let bundle = datasets::load(&a.data)?;
    let Some(truth) = bundle.graph.labels() else {
        bail!(Error::Validation(format!("{} has no {LABELS_FILE}", a.data.display())));
    };
    let pred = read_labels(&a.labels)?;
    let scores = evaluate(truth, &pred)?;
    let text = serde_json::to_string_pretty(&scores)? + "\n";
    match a.out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_generate(a: GenerateArgs) -> anyhow::Result<()> {
    let spec = SbmSpec {
        n: a.n,
        k: a.k,
        intra_p: a.intra,
        inter_p: a.inter,
        feature_noise: a.noise,
        seed: a.seed,
    };
    let bundle = datasets::generate_sbm(&spec)?;
    datasets::save(&bundle.graph, &a.out)?;
    eprintln!(
        "wrote {} nodes, {} edges, homophily {:.4}",
        bundle.meta.n,
        bundle.meta.edges,
        bundle.meta.homophily.unwrap_or(f64::NAN)
    );
    Ok(())
}

fn cmd_perturb(a: PerturbArgs) -> anyhow::Result<()> {
    let bundle = datasets::load(&a.data)?;
    let rng = Rng::new(a.seed);
    let g = datasets::perturb_mask_features(&bundle.graph, a.mask_features, &mut rng.child("mask"))?;
    let g = datasets::perturb_add_edges(&g, a.add_edges, &mut rng.child("edges"))?;
    datasets::save(&g, &a.out)?;
    Ok(())
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn cmd_report(a: ReportArgs) -> anyhow::Result<()> {
    let mut fingerprint: Option<String> = None;
    let mut all: Vec<Scores> = Vec::new();
    for dir in &a.runs {
        let path = dir.join(MANIFEST_OUT);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let m: RunManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
        match &fingerprint {
            None => fingerprint = Some(m.dataset_fingerprint.clone()),
            Some(f) if *f != m.dataset_fingerprint => {
                bail!(Error::Validation(format!(
                    "{} was run on a different dataset than {}",
                    dir.display(),
                    a.runs[0].display()
                )));
            }
            _ => {}
        }
        let Some((_, metrics)) = m.artifacts.iter().find(|(k, _)| k == "metrics") else {
            bail!(Error::Validation(format!("{} has no metrics", dir.display())));
        };
        let text = std::fs::read_to_string(dir.join(metrics))?;
        all.push(serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{metrics}: {e}")))?);
    }
    let mut csv = String::from("metric,mean,std,runs\n");
    let columns: [(&str, fn(&Scores) -> f64); 4] =
        [("acc", |s| s.acc), ("nmi", |s| s.nmi), ("ari", |s| s.ari), ("f1", |s| s.f1)];
    for (name, get) in columns {
        let values: Vec<f64> = all.iter().map(get).collect();
        let (mean, std) = mean_std(&values);
        writeln!(csv, "{name},{mean},{std},{}", values.len())?;
    }
    match a.out {
        Some(p) => std::fs::write(p, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

/// Dense CSV, one row per line, shortest round-trip decimals.
pub fn matrix_csv(m: &Matrix) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn cmd_dump(a: DumpArgs) -> anyhow::Result<()> {
    let bundle = datasets::load(&a.data)?;
    let g = &bundle.graph;
    let mut cfg = match &a.config {
        Some(p) => Some(read_config(p)?),
        None => None,
    };
    if let (Some(c), Some(s)) = (cfg.as_mut(), a.seed) {
        c.seed = s;
    }
    let similarity = cfg.as_ref().map(|c| c.similarity).unwrap_or_default();
    let matrix = match a.what.as_str() {
        "similarity" => similarity.compute(g.features()),
        what => {
            let params = checkpoint::load(a.ckpt.as_ref().expect("clap enforces --ckpt"))?;
            let out = encode(&params, &normalize(g.adjacency())?, g.features())?;
            if what == "embeddings" {
                out.z
            } else {
                let switches = cfg.as_ref().map_or(SfSwitches::ALL, |c| c.sf);
                let seed = cfg.as_ref().map(|c| c.seed).or(a.seed).unwrap_or(crate::tensor::DEFAULT_SEED);
                let mut rng = Rng::new(seed).child("train").child("refine");
                let refined = refine(
                    &out.a_hat,
                    &out.x_t,
                    &g.adjacency_with_self_loops(),
                    similarity,
                    switches,
                    &mut rng,
                )?;
                refined.a_p
            }
        }
    };
    let csv = matrix_csv(&matrix);
    match a.out {
        Some(p) => std::fs::write(p, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std() {
        assert_eq!(mean_std(&[0.7]), (0.7, 0.0));
        let (m, s) = mean_std(&[0.6, 0.8]);
        assert!((m - 0.7).abs() < 1e-15);
        assert!((s - 0.1414).abs() < 1e-4);
    }

    #[test]
    fn exit_codes() {
        let diverged: anyhow::Error = Error::Diverged { epoch: 2, loss: f64::NAN }.into();
        assert_eq!(exit_code(&diverged), 3);
        let bad: anyhow::Error = Error::Validation("x".into()).into();
        assert_eq!(exit_code(&bad), 2);
        assert_eq!(exit_code(&anyhow::anyhow!("io")), 2);
    }

    #[test]
    fn csv_layout() {
        let m = Matrix::from_rows(&[[1.0, 0.5], [0.25, 2.0]]).unwrap();
        assert_eq!(matrix_csv(&m), "1,0.5\n0.25,2\n");
    }

    #[test]
    fn cli_parses() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
