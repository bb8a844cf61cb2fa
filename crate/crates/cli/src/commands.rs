use std::path::{Path, PathBuf};

use anyhow::Context;
use hypercluster::cluster::{
    self, pca2, read_embeddings, write_embeddings, write_partition, write_projection, zscore, Embeddings,
    ProjectedPoint,
};
use hypercluster::metrics::{ami, ari, eval_protocol, AmiNormalizer, ProtocolConfig};
use hypercluster::pointset::{
    mnist_dataset, read_idx_images, read_idx_labels, read_jsonl, synth_sine_dataset, write_jsonl, Dataset, Resampler,
    SineClass, SynthConfig,
};
use hypercluster::trainer::{write_trace, TrainConfig};
use hypercluster::{embed_dataset, load_checkpoint, train, Algorithm, EncoderConfig, HyperConfig, ResolutionSet, SirenSpec};
use serde::{Deserialize, Serialize};

use crate::config::ConfigFile;
use crate::svg::{scatter, Marker};
use crate::{Cli, Command, UsageError};

/// Output directory guard: refuses to clobber files unless forced.
struct Outputs {
    dir: PathBuf,
    force: bool,
}

impl Outputs {
    fn new(dir: &Path, force: bool) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            force,
        })
    }

    fn claim(&self, name: &str) -> anyhow::Result<PathBuf> {
        let path = self.dir.join(name);
        if path.exists() && !self.force {
            return Err(UsageError(format!("{} exists; pass --force to overwrite", path.display())).into());
        }
        Ok(path)
    }

    /// Writes the resolved settings of `command` next to its outputs.
    fn snapshot<S: Serialize>(&self, command: &str, settings: &S) -> anyhow::Result<()> {
        let path = self.dir.join(format!("{command}-config.toml"));
        let text = toml::to_string(settings).context("serializing effective config")?;
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

fn threads(setting: Option<usize>) -> anyhow::Result<usize> {
    if let Some(t) = setting {
        return Ok(t.max(1));
    }
    match std::env::var("HYPERCLUSTER_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(|t| t.max(1))
            .map_err(|_| UsageError(format!("HYPERCLUSTER_THREADS={v} is not a positive integer")).into()),
        Err(_) => Ok(1),
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn load_data(path: &Path) -> anyhow::Result<Dataset> {
    read_jsonl(path).with_context(|| format!("reading {}", path.display()))
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    let file = ConfigFile::load(cli.config.as_deref())?;
    let out = Outputs::new(&cli.out_dir, cli.force)?;
    match &cli.command {
        Command::Synth(a) => synth(file.resolve("synth", a)?, &out),
        Command::IngestMnist(a) => ingest(file.resolve("ingest-mnist", a)?, &out),
        Command::Train(a) => train_cmd(file.resolve("train", a)?, &out),
        Command::Embed(a) => embed(file.resolve("embed", a)?, &out),
        Command::Cluster(a) => cluster_cmd(file.resolve("cluster", a)?, &out),
        Command::Eval(a) => eval(file.resolve("eval", a)?, &out),
        Command::Project(a) => project(file.resolve("project", a)?, &out),
    }
}

fn d_2() -> usize {
    2
}
fn d_100() -> usize {
    100
}
fn d_1() -> usize {
    1
}
fn d_i_range() -> Vec<usize> {
    vec![64, 128]
}
fn d_amp() -> Vec<f64> {
    vec![0.8, 1.2]
}
fn d_phase() -> Vec<f64> {
    vec![0.0, std::f64::consts::FRAC_PI_2]
}

#[derive(Debug, Serialize, Deserialize)]
struct SynthSettings {
    #[serde(default = "d_2")]
    classes: usize,
    #[serde(default)]
    freqs: Option<Vec<f64>>,
    #[serde(default = "d_100")]
    per_class: usize,
    #[serde(default = "d_1")]
    channels: usize,
    #[serde(default = "d_i_range")]
    i_range: Vec<usize>,
    #[serde(default = "d_amp")]
    amp: Vec<f64>,
    #[serde(default = "d_phase")]
    phase: Vec<f64>,
    #[serde(default)]
    irregular: bool,
    #[serde(default)]
    seed: u64,
    #[serde(default = "d_synth_out")]
    out: String,
}

fn d_synth_out() -> String {
    "synth.jsonl".into()
}

fn range<T: Copy>(v: &[T], what: &str) -> anyhow::Result<(T, T)> {
    match v {
        [a] => Ok((*a, *a)),
        [a, b] => Ok((*a, *b)),
        _ => Err(usage(format!("--{what} takes one or two values"))),
    }
}

fn synth(s: SynthSettings, out: &Outputs) -> anyhow::Result<()> {
    let freqs = match &s.freqs {
        Some(f) if f.len() != s.classes => {
            return Err(usage(format!("{} frequencies for {} classes", f.len(), s.classes)))
        }
        Some(f) => f.clone(),
        None => (0..s.classes).map(|c| (2 * c + 1) as f64).collect(),
    };
    let (alo, ahi) = range(&s.amp, "amp")?;
    let (plo, phi) = range(&s.phase, "phase")?;
    let cfg = SynthConfig {
        classes: freqs
            .iter()
            .map(|&f| SineClass::new(f).with_amp(alo, ahi).with_phase(plo, phi))
            .collect(),
        n_per_class: s.per_class,
        channels: s.channels,
        points: range(&s.i_range, "i-range")?,
        irregular: s.irregular,
        seed: s.seed,
    };
    let path = out.claim(&s.out)?;
    let ds = synth_sine_dataset(&cfg)?;
    write_jsonl(&ds, &path)?;
    out.snapshot("synth", &s)?;
    log::info!("wrote {} samples to {}", ds.len(), path.display());
    Ok(())
}

fn d_28() -> usize {
    28
}
fn d_mnist_out() -> String {
    "mnist.jsonl".into()
}

#[derive(Debug, Serialize, Deserialize)]
struct IngestSettings {
    images: PathBuf,
    labels: PathBuf,
    #[serde(default)]
    subset: Option<usize>,
    #[serde(default)]
    classes: Option<Vec<u8>>,
    #[serde(default = "d_28")]
    resolution: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "d_mnist_out")]
    out: String,
}

fn ingest(s: IngestSettings, out: &Outputs) -> anyhow::Result<()> {
    let path = out.claim(&s.out)?;
    let images = read_idx_images(&s.images)?;
    let labels = read_idx_labels(&s.labels)?;
    let mut ds = mnist_dataset(&images, &labels, s.subset, s.classes.as_deref(), s.seed)?;
    if s.resolution != images.rows || s.resolution != images.cols {
        let src = Resampler::new(&ds);
        let samples = (0..src.len())
            .map(|n| src.resample(n, s.resolution))
            .collect::<hypercluster::Result<Vec<_>>>()?;
        ds = Dataset::new(samples)?;
    }
    write_jsonl(&ds, &path)?;
    out.snapshot("ingest-mnist", &s)?;
    log::info!("wrote {} samples to {}", ds.len(), path.display());
    Ok(())
}

fn d_50() -> usize {
    50
}
fn d_32() -> usize {
    32
}
fn d_4() -> usize {
    4
}
fn d_5() -> usize {
    5
}
fn d_lr0() -> f64 {
    3e-4
}
fn d_lr_final() -> f64 {
    1e-4
}
fn d_val() -> f64 {
    0.1
}

#[derive(Debug, Serialize, Deserialize)]
struct TrainSettings {
    data: PathBuf,
    r_train: Vec<usize>,
    #[serde(default = "d_50")]
    epochs: usize,
    #[serde(default = "d_32")]
    batch: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "d_4")]
    spec_layers: usize,
    #[serde(default = "d_5")]
    spec_width: usize,
    #[serde(default = "d_lr0")]
    lr0: f64,
    #[serde(default = "d_lr_final")]
    lr_final: f64,
    #[serde(default = "d_1")]
    eval_every: usize,
    #[serde(default = "d_val")]
    val_fraction: f64,
    #[serde(default)]
    val_resolution: Option<usize>,
    #[serde(default)]
    d_rff: Option<usize>,
    #[serde(default)]
    sigma_rff: Option<f64>,
    #[serde(default)]
    width: Option<usize>,
    #[serde(default)]
    ell: Option<usize>,
    #[serde(default)]
    raw_x: bool,
    #[serde(default)]
    head_hidden: Option<usize>,
    #[serde(default)]
    checkpoints: bool,
    #[serde(default)]
    threads: Option<usize>,
}

fn train_cmd(mut s: TrainSettings, out: &Outputs) -> anyhow::Result<()> {
    if s.r_train.is_empty() {
        return Err(usage("--r-train needs at least one resolution"));
    }
    let model_path = out.claim("model.fhnc")?;
    let trace_path = out.claim("loss.csv")?;
    let ds = load_data(&s.data)?;
    let spec = SirenSpec::new(ds.d(), ds.m(), s.spec_layers, s.spec_width)?;
    let defaults = EncoderConfig::default();
    let encoder = EncoderConfig {
        d_rff: *s.d_rff.get_or_insert(defaults.d_rff),
        sigma_rff: *s.sigma_rff.get_or_insert(defaults.sigma_rff),
        width: *s.width.get_or_insert(defaults.width),
        ell: *s.ell.get_or_insert(defaults.ell),
        raw_x: s.raw_x,
    };
    let mut cfg = TrainConfig::new(spec, s.r_train.clone());
    cfg.epochs = s.epochs;
    cfg.batch_size = s.batch;
    cfg.seed = s.seed;
    cfg.hyper = HyperConfig {
        encoder,
        head_hidden: s.head_hidden,
        head_scales: Vec::new(),
    };
    cfg.lr0 = s.lr0;
    cfg.lr_final = s.lr_final;
    cfg.eval_every = s.eval_every;
    cfg.val_fraction = s.val_fraction;
    cfg.val_resolution = s.val_resolution;
    cfg.threads = threads(s.threads)?;
    s.threads = Some(cfg.threads);
    if s.checkpoints {
        let dir = out.dir.join("checkpoints");
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        cfg.checkpoint_dir = Some(dir);
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    out.snapshot("train", &s)?;

    let outcome = train::<f32>(ds.unlabeled(), &cfg)?;
    hypercluster::save_checkpoint(&outcome.model, s.seed, outcome.steps, &model_path)?;
    write_trace(&outcome.trace, &trace_path)?;
    if let Some(dir) = &cfg.checkpoint_dir {
        // The trainer also leaves a copy of the final model there.
        let _ = std::fs::remove_file(dir.join("model.fhnc"));
    }
    log::info!(
        "trained {} steps; final loss {:.6}; wrote {}",
        outcome.steps,
        outcome.trace.last().map(|r| r.train_loss).unwrap_or(f64::NAN),
        model_path.display()
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct EmbedSettings {
    model: PathBuf,
    data: PathBuf,
    resolution: usize,
    #[serde(default)]
    out: Option<String>,
    #[serde(default)]
    threads: Option<usize>,
}

fn embeddings_at(
    model: &Path,
    ds: &Dataset,
    resolution: usize,
    threads: usize,
) -> anyhow::Result<Embeddings> {
    let (hn, _) = load_checkpoint(model).with_context(|| format!("loading {}", model.display()))?;
    let src = Resampler::new(ds);
    let rows = embed_dataset(&hn, &src, resolution, threads)?;
    Ok(Embeddings {
        ids: ds.samples().iter().map(|p| p.id.clone()).collect(),
        labels: ds.samples().iter().map(|p| p.label).collect(),
        rows: rows.into_iter().map(|r| r.into_iter().map(f64::from).collect()).collect(),
    })
}

fn embed(mut s: EmbedSettings, out: &Outputs) -> anyhow::Result<()> {
    if s.resolution == 0 {
        return Err(usage("--resolution must be positive"));
    }
    let name = s
        .out
        .get_or_insert_with(|| format!("embeddings-r{}.csv", s.resolution))
        .clone();
    let path = out.claim(&name)?;
    let ds = load_data(&s.data)?;
    let emb = embeddings_at(&s.model, &ds, s.resolution, threads(s.threads)?)?;
    write_embeddings(&emb, &path)?;
    out.snapshot("embed", &s)?;
    log::info!("wrote {} x {} embeddings to {}", emb.rows.len(), emb.dim(), path.display());
    Ok(())
}

fn d_kmeans() -> String {
    "kmeans".into()
}
fn d_partition_out() -> String {
    "partition.csv".into()
}

#[derive(Debug, Serialize, Deserialize)]
struct ClusterSettings {
    embeddings: PathBuf,
    #[serde(default = "d_kmeans")]
    algo: String,
    #[serde(default)]
    k: Option<usize>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    zscore: bool,
    #[serde(default = "d_partition_out")]
    out: String,
}

fn num_labels(labels: &[Option<u32>]) -> Option<usize> {
    let all: Option<Vec<u32>> = labels.iter().copied().collect();
    all.map(|mut v| {
        v.sort_unstable();
        v.dedup();
        v.len()
    })
}

fn cluster_cmd(mut s: ClusterSettings, out: &Outputs) -> anyhow::Result<()> {
    let algo: Algorithm = s.algo.parse().map_err(|e: hypercluster::Error| usage(e.to_string()))?;
    let path = out.claim(&s.out)?;
    let mut emb = read_embeddings(&s.embeddings)?;
    let k = match s.k.or_else(|| num_labels(&emb.labels)) {
        Some(k) => k,
        None => return Err(usage("--k is required for unlabeled embeddings")),
    };
    s.k = Some(k);
    if s.zscore {
        zscore(&mut emb.rows);
    }
    let part = cluster::cluster(&emb.rows, k, algo, s.seed)?;
    write_partition(&emb.ids, &emb.labels, &part, &path)?;
    out.snapshot("cluster", &s)?;
    if let Some(labels) = emb.labels() {
        println!(
            "AMI {:.4}  ARI {:.4}",
            ami(&labels, &part.assignments)?,
            ari(&labels, &part.assignments)?
        );
    }
    log::info!("wrote {}", path.display());
    Ok(())
}

fn d_algos() -> Vec<String> {
    vec!["kmeans".into()]
}
fn d_normalizer() -> String {
    "arithmetic".into()
}

#[derive(Debug, Serialize, Deserialize)]
struct EvalSettings {
    model: PathBuf,
    data: PathBuf,
    r_train: Vec<usize>,
    #[serde(default)]
    held_out: Vec<usize>,
    #[serde(default = "d_algos")]
    algos: Vec<String>,
    #[serde(default = "d_5")]
    seeds: usize,
    #[serde(default)]
    k: Option<usize>,
    #[serde(default)]
    pixel_baseline: bool,
    #[serde(default)]
    zscore: bool,
    #[serde(default = "d_normalizer")]
    normalizer: String,
    #[serde(default)]
    threads: Option<usize>,
}

fn eval(s: EvalSettings, out: &Outputs) -> anyhow::Result<()> {
    let resolutions = ResolutionSet::new(s.r_train.clone(), s.held_out.clone()).map_err(|e| usage(e.to_string()))?;
    let algorithms = s
        .algos
        .iter()
        .map(|a| a.parse::<Algorithm>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| usage(e.to_string()))?;
    let normalizer = match s.normalizer.as_str() {
        "arithmetic" | "mean" => AmiNormalizer::Arithmetic,
        "max" => AmiNormalizer::Max,
        other => return Err(usage(format!("unknown AMI normalizer `{other}`"))),
    };
    if s.seeds == 0 {
        return Err(usage("--seeds must be positive"));
    }
    let csv_path = out.claim("report.csv")?;
    let txt_path = out.claim("report.txt")?;
    let ds = load_data(&s.data)?;
    let (hn, _) = load_checkpoint(&s.model).with_context(|| format!("loading {}", s.model.display()))?;
    let mut cfg = ProtocolConfig::new(resolutions);
    cfg.k = s.k;
    cfg.algorithms = algorithms;
    cfg.seeds = (0..s.seeds as u64).collect();
    cfg.pixel_baseline = s.pixel_baseline;
    cfg.zscore = s.zscore;
    cfg.normalizer = normalizer;
    cfg.threads = threads(s.threads)?;
    let report = eval_protocol(&hn, &ds, &cfg)?;
    report.write_csv(&csv_path)?;
    let table = report.to_table();
    std::fs::write(&txt_path, &table).with_context(|| format!("writing {}", txt_path.display()))?;
    out.snapshot("eval", &s)?;
    print!("{table}");
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct ProjectSettings {
    model: PathBuf,
    data: PathBuf,
    resolutions: Vec<usize>,
    #[serde(default)]
    zscore: bool,
    #[serde(default)]
    threads: Option<usize>,
}

fn project(s: ProjectSettings, out: &Outputs) -> anyhow::Result<()> {
    if s.resolutions.is_empty() || s.resolutions.contains(&0) {
        return Err(usage("--resolutions needs positive values"));
    }
    let csv_path = out.claim("projection.csv")?;
    let svg_path = out.claim("projection.svg")?;
    let ds = load_data(&s.data)?;
    let t = threads(s.threads)?;
    let mut rows = Vec::new();
    let mut meta = Vec::new();
    for &r in &s.resolutions {
        let emb = embeddings_at(&s.model, &ds, r, t)?;
        for ((id, label), row) in emb.ids.into_iter().zip(emb.labels).zip(emb.rows) {
            meta.push((id, label, r));
            rows.push(row);
        }
    }
    if s.zscore {
        zscore(&mut rows);
    }
    let proj = pca2(&rows)?;
    let points: Vec<ProjectedPoint> = meta
        .into_iter()
        .zip(&proj.scores)
        .map(|((id, label, resolution), pc)| ProjectedPoint {
            id,
            pc: *pc,
            label,
            resolution,
        })
        .collect();
    write_projection(&points, &csv_path)?;
    let markers: Vec<Marker> = points
        .iter()
        .map(|p| Marker {
            x: p.pc[0],
            y: p.pc[1],
            label: p.label,
            resolution: p.resolution,
        })
        .collect();
    let title = format!(
        "PCA of predicted weights ({:.1}% + {:.1}% of variance shown)",
        100.0 * proj.variances[0] / proj.total_variance.max(f64::MIN_POSITIVE),
        100.0 * proj.variances[1] / proj.total_variance.max(f64::MIN_POSITIVE)
    );
    std::fs::write(&svg_path, scatter(&markers, &title)).with_context(|| format!("writing {}", svg_path.display()))?;
    out.snapshot("project", &s)?;
    log::info!("wrote {} and {}", csv_path.display(), svg_path.display());
    Ok(())
}
