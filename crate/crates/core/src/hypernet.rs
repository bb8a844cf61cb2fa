//! Hypernetwork mapping a point set to the flat weights of a SIREN.
//!
//! The pooled encoder output feeds one independent head per SIREN layer.
//! Head weights start near zero and head biases are drawn from the SIREN
//! initialization distribution, so an untrained hypernetwork already emits
//! properly initialized SIRENs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{encode_on_tape, EncoderConfig, Linear, LinearVars, PerPointNet, RffEmbedding};
use crate::error::{Error, Result};
use crate::ndiff::{Tape, Tensor, Var};
use crate::pointset::{PointSet, Resampler};
use crate::scalar::Scalar;
use crate::siren::{SirenSpec, SirenWeights};

/// Half-width of the uniform head-weight initialization.
pub const HEAD_WEIGHT_INIT: f64 = 1e-2;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HyperConfig {
    pub encoder: EncoderConfig,
    /// Optional ReLU hidden layer inside every head.
    #[serde(default)]
    pub head_hidden: Option<usize>,
    /// Per-layer output scale `s_l`; empty means 1 for every layer.
    #[serde(default)]
    pub head_scales: Vec<f64>,
}

/// One weight-prediction head.
#[derive(Debug, Clone, PartialEq)]
pub struct Head<T> {
    pub hidden: Option<Linear<T>>,
    pub out: Linear<T>,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperNet<T> {
    pub spec: SirenSpec,
    pub config: HyperConfig,
    pub rff: RffEmbedding<T>,
    pub h1: PerPointNet<T>,
    pub heads: Vec<Head<T>>,
}

/// Tape handles for every trainable tensor of a [`HyperNet`].
#[derive(Debug, Clone)]
pub struct HyperVars {
    pub h1: Vec<LinearVars>,
    pub heads: Vec<(Option<LinearVars>, LinearVars)>,
    /// All parameter nodes in [`HyperNet::params`] order.
    pub all: Vec<Var>,
}

/// Tape nodes produced by one forward pass.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub pooled: Var,
    pub heads: Vec<Var>,
    pub layers: Vec<(Var, Var)>,
}

/// Half-width of the SIREN initialization range for layer `layer`.
pub fn siren_init_bound(spec: &SirenSpec, layer: usize) -> f64 {
    let (_, fan_in) = spec.layer_shapes()[layer];
    if layer == 0 {
        1.0 / spec.d as f64
    } else {
        (6.0 / fan_in as f64).sqrt() / spec.omega0
    }
}

impl<T: Scalar> HyperNet<T> {
    pub fn d_z(&self) -> usize {
        self.spec.param_count()
    }

    pub fn ell(&self) -> usize {
        self.h1.output_dim()
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        for l in &self.h1.layers {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        for h in &self.heads {
            if let Some(hid) = &h.hidden {
                out.push(&hid.weight);
                out.push(&hid.bias);
            }
            out.push(&h.out.weight);
            out.push(&h.out.bias);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = self.arrays_mut();
        out.remove(0);
        out
    }

    /// The frozen Fourier frequencies followed by [`Self::params_mut`].
    pub(crate) fn arrays_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = vec![&mut self.rff.freqs];
        for l in &mut self.h1.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        for h in &mut self.heads {
            if let Some(hid) = &mut h.hidden {
                out.push(&mut hid.weight);
                out.push(&mut hid.bias);
            }
            out.push(&mut h.out.weight);
            out.push(&mut h.out.bias);
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Places the parameters on `tape`, as gradient-tracked leaves when
    /// `tracked` is set and as constants otherwise.
    pub fn insert(&self, tape: &mut Tape<T>, tracked: bool) -> HyperVars {
        let mut all = Vec::new();
        let mut put = |tape: &mut Tape<T>, t: &Tensor<T>| {
            let v = if tracked {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            };
            all.push(v);
            v
        };
        let mut lin = |tape: &mut Tape<T>, l: &Linear<T>| LinearVars {
            weight: put(tape, &l.weight),
            bias: put(tape, &l.bias),
        };
        let h1 = self.h1.layers.iter().map(|l| lin(tape, l)).collect();
        let heads = self
            .heads
            .iter()
            .map(|h| {
                let hidden = h.hidden.as_ref().map(|l| lin(tape, l));
                (hidden, lin(tape, &h.out))
            })
            .collect();
        HyperVars { h1, heads, all }
    }

    /// Records the full point-set-to-SIREN-weights map on a tape.
    pub fn predict_on_tape(&self, tape: &mut Tape<T>, vars: &HyperVars, ps: &PointSet) -> Result<Prediction> {
        if ps.d() != self.spec.d || ps.m() != self.spec.m {
            return Err(Error::Dimension(format!(
                "point set has (d, m) = ({}, {}), model expects ({}, {})",
                ps.d(),
                ps.m(),
                self.spec.d,
                self.spec.m
            )));
        }
        let pooled = encode_on_tape(tape, &self.rff, &vars.h1, ps, self.config.encoder.raw_x)?;
        let row = tape.reshape(pooled, vec![1, self.ell()])?;
        let mut heads = Vec::with_capacity(self.heads.len());
        let mut layers = Vec::with_capacity(self.heads.len());
        for ((head, (hidden, out)), (o, i)) in self
            .heads
            .iter()
            .zip(&vars.heads)
            .zip(self.spec.layer_shapes())
        {
            let mut h = row;
            if let Some(hid) = hidden {
                h = hid.apply(tape, h)?;
                h = tape.relu(h);
            }
            let mut y = out.apply(tape, h)?;
            if head.scale != 1.0 {
                y = tape.scale(y, T::from_f64_lossy(head.scale));
            }
            let w = tape.slice(y, 0, vec![o, i])?;
            let b = tape.slice(y, o * i, vec![o])?;
            heads.push(y);
            layers.push((w, b));
        }
        Ok(Prediction {
            pooled,
            heads,
            layers,
        })
    }

    /// SIREN weights for one point set (single forward pass, no gradients).
    pub fn predict_weights(&self, ps: &PointSet) -> Result<SirenWeights<T>> {
        let mut tape = Tape::new();
        let vars = self.insert(&mut tape, false);
        let pred = self.predict_on_tape(&mut tape, &vars, ps)?;
        let flat: Vec<T> = pred
            .heads
            .iter()
            .flat_map(|&h| tape.value(h).data().iter().copied())
            .collect();
        SirenWeights::new(&self.spec, flat)
    }

    /// Pooled encoder output for one point set.
    pub fn pooled(&self, ps: &PointSet) -> Result<Vec<T>> {
        let mut tape = Tape::new();
        let vars = self.insert(&mut tape, false);
        let pred = self.predict_on_tape(&mut tape, &vars, ps)?;
        Ok(tape.value(pred.pooled).data().to_vec())
    }
}

/// Builds a hypernetwork whose untrained outputs follow the SIREN
/// initialization distribution.
pub fn init_hypernet<T: Scalar>(spec: SirenSpec, config: HyperConfig, seed: u64) -> Result<HyperNet<T>> {
    spec.validate()?;
    let enc = config.encoder;
    if enc.ell == 0 || enc.width == 0 {
        return Err(Error::InvalidArgument("encoder widths must be positive".into()));
    }
    if !config.head_scales.is_empty() && config.head_scales.len() != spec.layers {
        return Err(Error::InvalidArgument(format!(
            "{} head scales for {} SIREN layers",
            config.head_scales.len(),
            spec.layers
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rff = RffEmbedding::new(spec.d, enc.d_rff, enc.sigma_rff, &mut rng)?;
    let input = enc.d_rff + spec.m + if enc.raw_x { spec.d } else { 0 };
    let h1 = PerPointNet::new(input, enc.width, enc.ell, &mut rng);

    let small = Uniform::new_inclusive(-HEAD_WEIGHT_INIT, HEAD_WEIGHT_INIT).expect("finite bound");
    let mut heads = Vec::with_capacity(spec.layers);
    for (l, size) in spec.layer_sizes().into_iter().enumerate() {
        let hidden = config
            .head_hidden
            .map(|hid| Linear::he_uniform(enc.ell, hid, &mut rng));
        let fan_in = config.head_hidden.unwrap_or(enc.ell);
        let weight = Tensor::new(
            vec![size, fan_in],
            (0..size * fan_in)
                .map(|_| T::from_f64_lossy(small.sample(&mut rng)))
                .collect(),
        )?;
        let scale = config.head_scales.get(l).copied().unwrap_or(1.0);
        let bound = siren_init_bound(&spec, l);
        let bias = Tensor::vector(
            (0..size)
                .map(|_| T::from_f64_lossy(rng.random_range(-bound..=bound) / scale))
                .collect(),
        );
        heads.push(Head {
            hidden,
            out: Linear { weight, bias },
            scale,
        });
    }
    Ok(HyperNet {
        spec,
        config,
        rff,
        h1,
        heads,
    })
}

/// Runs `f` on a dedicated pool of `threads` workers, or inline for one.
pub(crate) fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    if threads <= 1 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(e) => {
            log::warn!("could not start {threads} workers ({e}); running inline");
            f()
        }
    }
}

/// `N x d_z` matrix of predicted weights with every sample resampled at `r`.
pub fn embed_dataset<T: Scalar>(
    hn: &HyperNet<T>,
    source: &Resampler,
    resolution: usize,
    threads: usize,
) -> Result<Vec<Vec<T>>> {
    let one = |n: usize| -> Result<Vec<T>> {
        let ps = source.resample(n, resolution)?;
        Ok(hn.predict_weights(&ps)?.flat)
    };
    if threads <= 1 {
        (0..source.len()).map(one).collect()
    } else {
        with_threads(threads, || (0..source.len()).into_par_iter().map(one).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_points(n: usize, seed: u64) -> PointSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coords = (0..n * 2).map(|_| rng.random::<f32>()).collect();
        let values = (0..n).map(|_| rng.random::<f32>()).collect();
        PointSet::new("p", None, 2, 1, coords, values).unwrap()
    }

    #[test]
    fn head_sizes_sum_to_param_count() {
        let spec = SirenSpec::new(2, 1, 4, 5).unwrap();
        let hn: HyperNet<f32> = init_hypernet(spec, HyperConfig::default(), 0).unwrap();
        let total: usize = hn.heads.iter().map(|h| h.out.fan_out()).sum();
        assert_eq!(total, 81);
        assert_eq!(hn.predict_weights(&small_points(10, 1)).unwrap().flat.len(), 81);
    }

    #[test]
    fn same_seed_same_network() {
        let spec = SirenSpec::new(1, 4, 4, 5).unwrap();
        let a: HyperNet<f32> = init_hypernet(spec, HyperConfig::default(), 9).unwrap();
        let b: HyperNet<f32> = init_hypernet(spec, HyperConfig::default(), 9).unwrap();
        let c: HyperNet<f32> = init_hypernet(spec, HyperConfig::default(), 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn initial_first_layer_respects_siren_bounds() {
        let spec = SirenSpec::new(2, 1, 4, 5).unwrap();
        let hn: HyperNet<f64> = init_hypernet(spec, HyperConfig::default(), 3).unwrap();
        for seed in 0..5 {
            let ps = small_points(30, seed);
            let pooled = hn.pooled(&ps).unwrap();
            let l1: f64 = pooled.iter().map(|v| v.abs()).sum();
            let delta = HEAD_WEIGHT_INIT * l1;
            let w = hn.predict_weights(&ps).unwrap();
            let first = spec.layer_sizes()[0];
            let bound = 1.0 / spec.d as f64;
            for &v in &w.flat[..first] {
                assert!(v.abs() <= bound + delta + 1e-12, "{v} vs {}", bound + delta);
            }
        }
    }

    #[test]
    fn permutation_invariant_weights() {
        let spec = SirenSpec::new(2, 1, 4, 5).unwrap();
        let hn: HyperNet<f32> = init_hypernet(spec, HyperConfig::default(), 3).unwrap();
        let ps = small_points(40, 2);
        let order: Vec<usize> = (0..40).rev().collect();
        assert_eq!(
            hn.predict_weights(&ps).unwrap(),
            hn.predict_weights(&ps.reindexed(&order)).unwrap()
        );
    }

    #[test]
    fn hidden_head_option() {
        let spec = SirenSpec::new(2, 1, 3, 4).unwrap();
        let cfg = HyperConfig {
            head_hidden: Some(16),
            ..HyperConfig::default()
        };
        let hn: HyperNet<f32> = init_hypernet(spec, cfg, 0).unwrap();
        assert_eq!(hn.params().len(), 6 + 3 * 4);
        assert_eq!(hn.predict_weights(&small_points(5, 0)).unwrap().flat.len(), spec.param_count());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let spec = SirenSpec::new(1, 1, 3, 4).unwrap();
        let hn: HyperNet<f32> = init_hypernet(spec, HyperConfig::default(), 0).unwrap();
        assert!(matches!(hn.predict_weights(&small_points(5, 0)), Err(Error::Dimension(_))));
    }
}
