//! Mesh-independent set encoder: random Fourier features of each coordinate,
//! a per-point MLP over `(features(x), u(x))`, and a mean over points.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndiff::{Tape, Tensor, Var};
use crate::pointset::PointSet;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Length of the Fourier feature vector (half cosines, half sines).
    pub d_rff: usize,
    /// Standard deviation of the frozen frequency matrix.
    pub sigma_rff: f64,
    /// Hidden width of the per-point MLP.
    pub width: usize,
    /// Pooled representation size.
    pub ell: usize,
    /// Also feed the raw coordinate to the per-point MLP.
    #[serde(default)]
    pub raw_x: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            d_rff: 32,
            sigma_rff: 1.0,
            width: 64,
            ell: 64,
            raw_x: false,
        }
    }
}

/// `gamma(x) = [cos(2 pi B x), sin(2 pi B x)]` with a frozen Gaussian `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct RffEmbedding<T> {
    /// `(d_rff / 2) x d`.
    pub freqs: Tensor<T>,
}

impl<T: Scalar> RffEmbedding<T> {
    pub fn new<R: Rng>(d: usize, d_rff: usize, sigma: f64, rng: &mut R) -> Result<Self> {
        if d_rff == 0 || !d_rff.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "Fourier feature size must be even and positive, got {d_rff}"
            )));
        }
        let normal = Normal::new(0.0, sigma)
            .map_err(|e| Error::InvalidArgument(format!("sigma_rff: {e}")))?;
        let half = d_rff / 2;
        let data = (0..half * d).map(|_| T::from_f64_lossy(normal.sample(rng))).collect();
        Ok(Self {
            freqs: Tensor::new(vec![half, d], data)?,
        })
    }

    pub fn d(&self) -> usize {
        self.freqs.shape()[1]
    }

    pub fn dim(&self) -> usize {
        2 * self.freqs.shape()[0]
    }

    pub fn embed(&self, x: &[T]) -> Result<Vec<T>> {
        let d = self.d();
        if x.len() != d {
            return Err(Error::Dimension(format!(
                "coordinate of length {} for a {d}-dimensional embedding",
                x.len()
            )));
        }
        let half = self.freqs.shape()[0];
        let mut out = vec![T::zero(); 2 * half];
        for k in 0..half {
            let mut proj = 0.0f64;
            for (j, &xj) in x.iter().enumerate() {
                proj += self.freqs.get2(k, j).as_f64() * xj.as_f64();
            }
            let angle = TAU * proj;
            out[k] = T::from_f64_lossy(angle.cos());
            out[half + k] = T::from_f64_lossy(angle.sin());
        }
        Ok(out)
    }
}

/// Affine layer `y = W x + b` with `W` stored `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Linear<T> {
    /// He-style uniform weights `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`, zero bias.
    pub fn he_uniform<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = (6.0 / fan_in as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let data = (0..fan_in * fan_out)
            .map(|_| T::from_f64_lossy(dist.sample(rng)))
            .collect();
        Self {
            weight: Tensor::new(vec![fan_out, fan_in], data).expect("shape matches"),
            bias: Tensor::zeros(vec![fan_out]),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.shape()[0]
    }
}

/// Tape handles for one [`Linear`].
#[derive(Debug, Clone, Copy)]
pub struct LinearVars {
    pub weight: Var,
    pub bias: Var,
}

impl LinearVars {
    pub fn apply<T: Scalar>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let z = tape.matmul(x, self.weight, true)?;
        tape.add_bias(z, self.bias)
    }
}

/// The per-point network: three affine layers with ReLU between them.
#[derive(Debug, Clone, PartialEq)]
pub struct PerPointNet<T> {
    pub layers: Vec<Linear<T>>,
}

impl<T: Scalar> PerPointNet<T> {
    pub fn new<R: Rng>(input: usize, width: usize, ell: usize, rng: &mut R) -> Self {
        Self {
            layers: vec![
                Linear::he_uniform(input, width, rng),
                Linear::he_uniform(width, width, rng),
                Linear::he_uniform(width, ell, rng),
            ],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(Linear::fan_out).unwrap_or(0)
    }

    /// Applies the MLP to every row of `x`.
    pub fn forward(tape: &mut Tape<T>, layers: &[LinearVars], x: Var) -> Result<Var> {
        let mut h = x;
        for (i, l) in layers.iter().enumerate() {
            h = l.apply(tape, h)?;
            if i + 1 < layers.len() {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }
}

/// Per-point input rows `[gamma(x), u(x), (x)]` for a whole point set.
pub fn point_features<T: Scalar>(rff: &RffEmbedding<T>, ps: &PointSet, raw_x: bool) -> Result<Tensor<T>> {
    if ps.d() != rff.d() {
        return Err(Error::Dimension(format!(
            "point set has d = {}, encoder expects {}",
            ps.d(),
            rff.d()
        )));
    }
    let n = ps.len();
    let width = rff.dim() + ps.m() + if raw_x { ps.d() } else { 0 };
    let mut data = Vec::with_capacity(n * width);
    let mut x = vec![T::zero(); ps.d()];
    for i in 0..n {
        for (dst, &c) in x.iter_mut().zip(ps.coord(i)) {
            *dst = T::from_f64_lossy(f64::from(c));
        }
        data.extend(rff.embed(&x)?);
        data.extend(ps.value(i).iter().map(|&v| T::from_f64_lossy(f64::from(v))));
        if raw_x {
            data.extend_from_slice(&x);
        }
    }
    Tensor::new(vec![n, width], data)
}

/// Records `(1/I) sum_i h1(gamma(x_i), u(x_i))` on the tape.
pub fn encode_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    rff: &RffEmbedding<T>,
    layers: &[LinearVars],
    ps: &PointSet,
    raw_x: bool,
) -> Result<Var> {
    if ps.is_empty() {
        return Err(Error::EmptySet(format!("point set {}", ps.id)));
    }
    let feats = point_features(rff, ps, raw_x)?;
    let x = tape.constant(feats);
    let per_point = PerPointNet::forward(tape, layers, x)?;
    tape.mean_rows(per_point)
}

/// Pooled representation of a point set, without gradient tracking.
pub fn encode_points<T: Scalar>(
    ps: &PointSet,
    net: &PerPointNet<T>,
    rff: &RffEmbedding<T>,
    raw_x: bool,
) -> Result<Vec<T>> {
    let mut tape = Tape::new();
    let layers: Vec<LinearVars> = net
        .layers
        .iter()
        .map(|l| LinearVars {
            weight: tape.constant(l.weight.clone()),
            bias: tape.constant(l.bias.clone()),
        })
        .collect();
    let pooled = encode_on_tape(&mut tape, rff, &layers, ps, raw_x)?;
    Ok(tape.value(pooled).data().to_vec())
}
