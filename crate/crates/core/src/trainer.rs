//! Reconstruction training with multi-resolution batches, loss traces and
//! checkpoints.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypernet::{init_hypernet, with_threads, HyperConfig, HyperNet};
use crate::ndiff::{adam_step, AdamState, LrSchedule, Tape, Tensor};
use crate::pointset::{PointSet, Resampler, ResolutionSampler, UnlabeledView};
use crate::scalar::{exact_sum, Scalar};
use crate::siren::{siren_forward, SirenSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub r_train: Vec<usize>,
    pub seed: u64,
    pub spec: SirenSpec,
    #[serde(default)]
    pub hyper: HyperConfig,
    pub lr0: f64,
    pub lr_final: f64,
    /// Validation loss every this many epochs (0 disables it).
    pub eval_every: usize,
    /// Fraction of samples held out for validation.
    pub val_fraction: f64,
    /// Resolution for the validation loss; defaults to the median training one.
    #[serde(default)]
    pub val_resolution: Option<usize>,
    /// Worker threads for per-sample forward/backward (1 = inline).
    #[serde(default = "one")]
    pub threads: usize,
    /// Where periodic and final checkpoints go, if anywhere.
    #[serde(default)]
    pub checkpoint_dir: Option<PathBuf>,
}

fn one() -> usize {
    1
}

impl TrainConfig {
    pub fn new(spec: SirenSpec, r_train: Vec<usize>) -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            r_train,
            seed: 0,
            spec,
            hyper: HyperConfig::default(),
            lr0: 3e-4,
            lr_final: 1e-4,
            eval_every: 1,
            val_fraction: 0.1,
            val_resolution: None,
            threads: 1,
            checkpoint_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch size must be positive".into()));
        }
        if self.r_train.is_empty() || self.r_train.contains(&0) {
            return Err(Error::InvalidArgument(
                "training resolutions must be a nonempty list of positive integers".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::InvalidArgument(format!(
                "validation fraction {} outside [0, 1)",
                self.val_fraction
            )));
        }
        Ok(())
    }

    fn val_resolution(&self) -> usize {
        self.val_resolution.unwrap_or_else(|| {
            let mut r = self.r_train.clone();
            r.sort_unstable();
            r[r.len() / 2]
        })
    }
}

/// Per-sample reconstruction error `(1/I) sum_i ||u(x_i) - g_w(x_i)||^2`
/// and its gradient with respect to every hypernetwork parameter.
pub fn sample_loss_and_grad<T: Scalar>(hn: &HyperNet<T>, ps: &PointSet) -> Result<(f64, Vec<Tensor<T>>)> {
    let mut tape = Tape::new();
    let vars = hn.insert(&mut tape, true);
    let loss = sample_loss_on_tape(hn, &mut tape, &vars, ps)?;
    let value = tape.value(loss).data()[0].as_f64();
    let grads = tape.backward(loss)?;
    let out = vars
        .all
        .iter()
        .map(|&v| grads.get_or_zeros(v, tape.value(v)))
        .collect();
    Ok((value, out))
}

fn sample_loss_on_tape<T: Scalar>(
    hn: &HyperNet<T>,
    tape: &mut Tape<T>,
    vars: &crate::hypernet::HyperVars,
    ps: &PointSet,
) -> Result<crate::ndiff::Var> {
    let pred = hn.predict_on_tape(tape, vars, ps)?;
    let to_t = |v: &[f32]| v.iter().map(|&x| T::from_f64_lossy(f64::from(x))).collect::<Vec<T>>();
    let coords = tape.constant(Tensor::new(vec![ps.len(), ps.d()], to_t(ps.coords()))?);
    let target = tape.constant(Tensor::new(vec![ps.len(), ps.m()], to_t(ps.values()))?);
    let recon = siren_forward(tape, &hn.spec, &pred.layers, coords)?;
    let diff = tape.sub(recon, target)?;
    let sq = tape.mul(diff, diff)?;
    // Per-channel mean over points, then summed over channels.
    let per_channel = tape.mean_rows(sq)?;
    Ok(tape.sum_all(per_channel))
}

/// Per-sample reconstruction error without gradients.
pub fn sample_loss<T: Scalar>(hn: &HyperNet<T>, ps: &PointSet) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = hn.insert(&mut tape, false);
    let loss = sample_loss_on_tape(hn, &mut tape, &vars, ps)?;
    Ok(tape.value(loss).data()[0].as_f64())
}

fn mean_exact(values: &[f64]) -> f64 {
    exact_sum(values.iter().copied()) / values.len() as f64
}

/// Mean of the per-sample reconstruction errors over a batch.
pub fn loss_batch<T: Scalar>(hn: &HyperNet<T>, batch: &[PointSet]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptySet("empty batch".into()));
    }
    let losses = batch
        .iter()
        .map(|ps| sample_loss(hn, ps))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_exact(&losses))
}

/// Batch loss and the batch-mean gradient. Per-sample work may run on
/// `threads` workers; the reduction always follows sample order.
pub fn batch_loss_and_grad<T: Scalar>(
    hn: &HyperNet<T>,
    batch: &[PointSet],
    threads: usize,
) -> Result<(f64, Vec<Tensor<T>>)> {
    if batch.is_empty() {
        return Err(Error::EmptySet("empty batch".into()));
    }
    let per_sample: Vec<(f64, Vec<Tensor<T>>)> = if threads <= 1 {
        batch
            .iter()
            .map(|ps| sample_loss_and_grad(hn, ps))
            .collect::<Result<_>>()?
    } else {
        with_threads(threads, || {
            batch
                .par_iter()
                .map(|ps| sample_loss_and_grad(hn, ps))
                .collect::<Result<Vec<_>>>()
        })?
    };
    let losses: Vec<f64> = per_sample.iter().map(|(l, _)| *l).collect();
    let mut iter = per_sample.into_iter();
    let (_, mut grads) = iter.next().expect("nonempty batch");
    for (_, g) in iter {
        for (acc, gi) in grads.iter_mut().zip(&g) {
            for (a, &b) in acc.data_mut().iter_mut().zip(gi.data()) {
                *a = *a + b;
            }
        }
    }
    let inv = T::from_f64_lossy(1.0 / batch.len() as f64);
    for g in &mut grads {
        for v in g.data_mut() {
            *v = *v * inv;
        }
    }
    Ok((mean_exact(&losses), grads))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub lr: f64,
    pub resolution: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: HyperNet<T>,
    pub trace: Vec<TraceRow>,
    pub val_indices: Vec<usize>,
    pub steps: usize,
}

fn val_loss<T: Scalar>(
    hn: &HyperNet<T>,
    source: &Resampler,
    indices: &[usize],
    r: usize,
    threads: usize,
) -> Result<f64> {
    let one = |&n: &usize| -> Result<f64> { sample_loss(hn, &source.resample(n, r)?) };
    let losses: Vec<f64> = if threads <= 1 {
        indices.iter().map(one).collect::<Result<_>>()?
    } else {
        with_threads(threads, || indices.par_iter().map(one).collect::<Result<Vec<_>>>())?
    };
    Ok(mean_exact(&losses))
}

/// Trains a fresh hypernetwork on label-free data.
pub fn train<T: Scalar>(data: UnlabeledView<'_>, cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if data.d() != cfg.spec.d || data.m() != cfg.spec.m {
        return Err(Error::Dimension(format!(
            "data has (d, m) = ({}, {}), SIREN spec has ({}, {})",
            data.d(),
            data.m(),
            cfg.spec.d,
            cfg.spec.m
        )));
    }
    let mut model: HyperNet<T> = init_hypernet(cfg.spec, cfg.hyper.clone(), cfg.seed)?;
    let source = Resampler::from_view(data);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_7a11);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let n_val = if cfg.eval_every > 0 && data.len() >= 10 {
        ((data.len() as f64) * cfg.val_fraction).round() as usize
    } else {
        0
    };
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut val_indices = val_idx.to_vec();
    val_indices.sort_unstable();
    let mut train_indices = train_idx.to_vec();
    if train_indices.is_empty() {
        return Err(Error::InvalidArgument("no training samples left after the validation split".into()));
    }

    let steps_per_epoch = train_indices.len().div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * steps_per_epoch;
    let schedule = LrSchedule::new(cfg.lr0, cfg.lr_final, total_steps)?;
    let mut sampler = ResolutionSampler::new(cfg.r_train.clone(), rng)?;
    let mut adam = AdamState::new(&model.params().into_iter().cloned().collect::<Vec<_>>());
    let mut trace = Vec::with_capacity(total_steps);
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        train_indices.shuffle(sampler.rng_mut());
        for chunk in train_indices.chunks(cfg.batch_size) {
            let batch = sampler.batch(&source, chunk)?;
            let (loss, grads) = batch_loss_and_grad(&model, &batch.samples, cfg.threads)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    step,
                    what: "training loss".into(),
                });
            }
            let lr = schedule.lr_at(step);
            adam_step(&mut model.params_mut(), &grads, &mut adam, lr, step)?;
            step += 1;
            trace.push(TraceRow {
                step,
                lr,
                resolution: batch.resolution,
                train_loss: loss,
                val_loss: None,
            });
        }
        let last_epoch = epoch + 1 == cfg.epochs;
        if !val_indices.is_empty() && (last_epoch || (epoch + 1) % cfg.eval_every == 0) {
            let vl = val_loss(&model, &source, &val_indices, cfg.val_resolution(), cfg.threads)?;
            if !vl.is_finite() {
                return Err(Error::NonFinite {
                    step,
                    what: "validation loss".into(),
                });
            }
            if let Some(row) = trace.last_mut() {
                row.val_loss = Some(vl);
            }
            log::info!(
                "epoch {}/{} step {step}: train {:.6} val {vl:.6}",
                epoch + 1,
                cfg.epochs,
                trace.last().map(|r| r.train_loss).unwrap_or(f64::NAN)
            );
        }
        if let Some(dir) = &cfg.checkpoint_dir {
            if cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0 && !last_epoch {
                save_checkpoint(&model, cfg.seed, step, dir.join(format!("checkpoint-{step:07}.fhnc")))?;
            }
        }
    }
    if let Some(dir) = &cfg.checkpoint_dir {
        save_checkpoint(&model, cfg.seed, step, dir.join("model.fhnc"))?;
    }
    Ok(TrainOutcome {
        model,
        trace,
        val_indices,
        steps: step,
    })
}

/// Writes `step,lr,train_loss[,val_loss]`.
pub fn write_trace(trace: &[TraceRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let has_val = trace.iter().any(|r| r.val_loss.is_some());
    let mut w = csv::Writer::from_path(path)?;
    if has_val {
        w.write_record(["step", "lr", "train_loss", "val_loss"])?;
    } else {
        w.write_record(["step", "lr", "train_loss"])?;
    }
    for r in trace {
        let mut rec = vec![r.step.to_string(), format!("{:e}", r.lr), r.train_loss.to_string()];
        if has_val {
            rec.push(r.val_loss.map(|v| v.to_string()).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FHNC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointMeta {
    spec: SirenSpec,
    hyper: HyperConfig,
    ell: usize,
    d_rff: usize,
    sigma_rff: f64,
    seed: u64,
    step: usize,
    /// Shapes of the arrays that follow, in order: frequency matrix, then
    /// the per-point MLP layers, then the heads.
    arrays: Vec<Vec<usize>>,
}

/// Metadata stored alongside the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointInfo {
    pub seed: u64,
    pub step: usize,
}

/// Writes `FHNC | version u32 LE | meta length u32 LE | meta JSON | f32 LE arrays`.
/// The file is written next to `path` and renamed into place.
pub fn save_checkpoint<T: Scalar>(hn: &HyperNet<T>, seed: u64, step: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut arrays: Vec<&Tensor<T>> = vec![&hn.rff.freqs];
    arrays.extend(hn.params());
    let meta = CheckpointMeta {
        spec: hn.spec,
        hyper: hn.config.clone(),
        ell: hn.ell(),
        d_rff: hn.rff.dim(),
        sigma_rff: hn.config.encoder.sigma_rff,
        seed,
        step,
        arrays: arrays.iter().map(|a| a.shape().to_vec()).collect(),
    };
    let meta_bytes = serde_json::to_vec(&meta)?;
    let tmp = path.with_extension("tmp");
    {
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(&tmp, e);
        w.write_all(CHECKPOINT_MAGIC).map_err(io)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&(meta_bytes.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(&meta_bytes).map_err(io)?;
        for a in arrays {
            for v in a.data() {
                w.write_all(&(v.as_f64() as f32).to_le_bytes()).map_err(io)?;
            }
        }
        w.flush().map_err(io)?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(HyperNet<f32>, CheckpointInfo)> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let truncated = || Error::Format(format!("{}: truncated checkpoint", path.display()));
    if bytes.len() < 12 {
        return Err(truncated());
    }
    if &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!("{}: not a checkpoint (bad magic)", path.display())));
    }
    let u32_at = |at: usize| u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]);
    let version = u32_at(4);
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let meta_len = u32_at(8) as usize;
    let meta_end = 12 + meta_len;
    if bytes.len() < meta_end {
        return Err(truncated());
    }
    let meta: CheckpointMeta = serde_json::from_slice(&bytes[12..meta_end])?;
    let mut hn: HyperNet<f32> = init_hypernet(meta.spec, meta.hyper.clone(), 0)?;

    let slots = hn.arrays_mut();
    if slots.len() != meta.arrays.len() {
        return Err(Error::Format(format!(
            "checkpoint lists {} arrays, architecture has {}",
            meta.arrays.len(),
            slots.len()
        )));
    }
    let mut off = meta_end;
    for (slot, shape) in slots.into_iter().zip(&meta.arrays) {
        if slot.shape() != shape.as_slice() {
            return Err(Error::Format(format!(
                "checkpoint array shape {shape:?} does not match {:?}",
                slot.shape()
            )));
        }
        let n = slot.len();
        let end = off + 4 * n;
        if bytes.len() < end {
            return Err(truncated());
        }
        for (dst, chunk) in slot.data_mut().iter_mut().zip(bytes[off..end].chunks_exact(4)) {
            *dst = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        }
        off = end;
    }
    if off != bytes.len() {
        return Err(Error::Format(format!(
            "{}: {} trailing bytes after checkpoint payload",
            path.display(),
            bytes.len() - off
        )));
    }
    Ok((
        hn,
        CheckpointInfo {
            seed: meta.seed,
            step: meta.step,
        },
    ))
}
