//! SIREN decoder evaluated from a flat weight vector.
//!
//! Layout of the flat vector: for each layer in order, `W_l` row-major
//! (`out x in`) followed by `b_l`. Hidden layers compute
//! `sin(omega0 * (W h + b))`; the last layer is affine.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndiff::{gemm, Tape, Tensor, Var};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SirenSpec {
    /// Input (coordinate) dimension.
    pub d: usize,
    /// Output (value) dimension.
    pub m: usize,
    /// Number of affine layers, including the output layer.
    pub layers: usize,
    pub width: usize,
    pub omega0: f64,
}

impl SirenSpec {
    pub fn new(d: usize, m: usize, layers: usize, width: usize) -> Result<Self> {
        let spec = Self {
            d,
            m,
            layers,
            width,
            omega0: 30.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers < 2 || self.width == 0 || self.d == 0 || self.m == 0 {
            return Err(Error::InvalidArgument(format!(
                "SIREN needs at least 2 layers and positive sizes, got {self:?}"
            )));
        }
        if !(self.omega0.is_finite() && self.omega0 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "omega0 must be positive, got {}",
                self.omega0
            )));
        }
        Ok(())
    }

    /// `(out, in)` of every layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        (0..self.layers)
            .map(|l| {
                let fan_in = if l == 0 { self.d } else { self.width };
                let fan_out = if l + 1 == self.layers { self.m } else { self.width };
                (fan_out, fan_in)
            })
            .collect()
    }

    /// Number of entries of `W_l` and `b_l` together, per layer.
    pub fn layer_sizes(&self) -> Vec<usize> {
        self.layer_shapes()
            .into_iter()
            .map(|(o, i)| o * i + o)
            .collect()
    }

    /// `d_z = (d h + h) + (L - 2)(h^2 + h) + (h m + m)`.
    pub fn param_count(&self) -> usize {
        let (d, m, h, l) = (self.d, self.m, self.width, self.layers);
        (d * h + h) + (l - 2) * (h * h + h) + (h * m + m)
    }
}

pub fn param_count(spec: &SirenSpec) -> usize {
    spec.param_count()
}

/// Flat SIREN parameter vector of length `d_z`.
#[derive(Debug, Clone, PartialEq)]
pub struct SirenWeights<T> {
    pub flat: Vec<T>,
}

impl<T: Scalar> SirenWeights<T> {
    pub fn new(spec: &SirenSpec, flat: Vec<T>) -> Result<Self> {
        if flat.len() != spec.param_count() {
            return Err(Error::Dimension(format!(
                "SIREN weight vector has {} entries, spec needs {}",
                flat.len(),
                spec.param_count()
            )));
        }
        Ok(Self { flat })
    }

    pub fn zeros(spec: &SirenSpec) -> Self {
        Self {
            flat: vec![T::zero(); spec.param_count()],
        }
    }
}

/// Splits a flat weight vector into `(W_l, b_l)` pairs.
pub fn slice_layout<T: Scalar>(spec: &SirenSpec, flat: &[T]) -> Result<Vec<(Tensor<T>, Tensor<T>)>> {
    if flat.len() != spec.param_count() {
        return Err(Error::Dimension(format!(
            "SIREN weight vector has {} entries, spec needs {}",
            flat.len(),
            spec.param_count()
        )));
    }
    let mut off = 0;
    let mut out = Vec::with_capacity(spec.layers);
    for (o, i) in spec.layer_shapes() {
        let w = Tensor::new(vec![o, i], flat[off..off + o * i].to_vec())?;
        off += o * i;
        let b = Tensor::vector(flat[off..off + o].to_vec());
        off += o;
        out.push((w, b));
    }
    Ok(out)
}

/// Inverse of [`slice_layout`].
pub fn concat_layout<T: Scalar>(layers: &[(Tensor<T>, Tensor<T>)]) -> Vec<T> {
    layers
        .iter()
        .flat_map(|(w, b)| w.data().iter().chain(b.data()).copied())
        .collect()
}

/// Evaluates the decoder at `coords` (`I x d`), returning `I x m`.
pub fn siren_eval<T: Scalar>(spec: &SirenSpec, w: &SirenWeights<T>, coords: &Tensor<T>) -> Result<Tensor<T>> {
    let layers = slice_layout(spec, &w.flat)?;
    let (rows, cols) = coords.dims2()?;
    if cols != spec.d {
        return Err(Error::Dimension(format!(
            "coordinates have {cols} columns, SIREN expects d = {}",
            spec.d
        )));
    }
    let omega = T::from_f64_lossy(spec.omega0);
    let mut h = coords.clone().reshaped(vec![rows, cols])?;
    for (l, (wl, bl)) in layers.iter().enumerate() {
        let mut z = gemm(&h, false, wl, true)?;
        let width = bl.len();
        for r in 0..rows {
            for (v, &b) in z.data_mut()[r * width..(r + 1) * width].iter_mut().zip(bl.data()) {
                *v = *v + b;
            }
        }
        if l + 1 < layers.len() {
            z = z.map(|v| (omega * v).sin());
        }
        h = z;
    }
    Ok(h)
}

/// Records the decoder on a tape. `layers` holds `(W_l, b_l)` nodes shaped
/// as in [`slice_layout`]; `coords` is an `I x d` node.
pub fn siren_forward<T: Scalar>(
    tape: &mut Tape<T>,
    spec: &SirenSpec,
    layers: &[(Var, Var)],
    coords: Var,
) -> Result<Var> {
    if layers.len() != spec.layers {
        return Err(Error::Dimension(format!(
            "{} layer nodes for a {}-layer SIREN",
            layers.len(),
            spec.layers
        )));
    }
    let omega = T::from_f64_lossy(spec.omega0);
    let mut h = coords;
    for (l, &(w, b)) in layers.iter().enumerate() {
        let z = tape.matmul(h, w, true)?;
        let z = tape.add_bias(z, b)?;
        h = if l + 1 < layers.len() {
            let s = tape.scale(z, omega);
            tape.sin(s)
        } else {
            z
        };
    }
    Ok(h)
}

/// Slices a flat weight node into per-layer `(W_l, b_l)` nodes.
pub fn slice_layout_vars<T: Scalar>(tape: &mut Tape<T>, spec: &SirenSpec, flat: Var) -> Result<Vec<(Var, Var)>> {
    let mut off = 0;
    let mut out = Vec::with_capacity(spec.layers);
    for (o, i) in spec.layer_shapes() {
        let w = tape.slice(flat, off, vec![o, i])?;
        off += o * i;
        let b = tape.slice(flat, off, vec![o])?;
        off += o;
        out.push((w, b));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reported_parameter_counts() {
        assert_eq!(SirenSpec::new(2, 1, 4, 5).unwrap().param_count(), 81);
        assert_eq!(SirenSpec::new(2, 3, 4, 32).unwrap().param_count(), 2307);
        assert_eq!(SirenSpec::new(1, 4, 4, 5).unwrap().param_count(), 94);
    }

    #[test]
    fn layout_slices_for_mnist_spec() {
        let spec = SirenSpec::new(2, 1, 4, 5).unwrap();
        assert_eq!(spec.layer_sizes(), vec![10 + 5, 25 + 5, 25 + 5, 5 + 1]);
        let flat: Vec<f32> = (0..81).map(|v| v as f32).collect();
        let layers = slice_layout(&spec, &flat).unwrap();
        assert_eq!(concat_layout(&layers), flat);
        assert!(slice_layout(&spec, &flat[..80]).is_err());
        assert!(SirenWeights::new(&spec, vec![0.0f32; 82]).is_err());
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let spec = SirenSpec::new(2, 3, 4, 4).unwrap();
        let coords = Tensor::<f32>::from_f64(3, 2, &[0.0, 0.1, 0.5, 0.5, 1.0, 0.3]).unwrap();
        let out = siren_eval(&spec, &SirenWeights::zeros(&spec), &coords).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn final_bias_only_gives_constant() {
        let spec = SirenSpec::new(1, 1, 3, 4).unwrap();
        let mut w = SirenWeights::<f64>::zeros(&spec);
        *w.flat.last_mut().unwrap() = 0.75;
        let coords = Tensor::from_f64(4, 1, &[0.0, 0.2, 0.7, 1.0]).unwrap();
        let out = siren_eval(&spec, &w, &coords).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.75));
    }

    /// Straight-line evaluation of one point, written independently of the
    /// tensor path.
    fn scalar_reference(spec: &SirenSpec, flat: &[f64], x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        let mut off = 0;
        for l in 0..spec.layers {
            let fan_in = h.len();
            let fan_out = if l + 1 == spec.layers { spec.m } else { spec.width };
            let w = &flat[off..off + fan_out * fan_in];
            let b = &flat[off + fan_out * fan_in..off + fan_out * fan_in + fan_out];
            off += fan_out * fan_in + fan_out;
            let mut next = vec![0.0; fan_out];
            for o in 0..fan_out {
                let mut acc = b[o];
                for i in 0..fan_in {
                    acc += w[o * fan_in + i] * h[i];
                }
                next[o] = if l + 1 == spec.layers { acc } else { (spec.omega0 * acc).sin() };
            }
            h = next;
        }
        h
    }

    #[test]
    fn matches_scalar_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let spec = SirenSpec::new(
                rng.random_range(1..=3),
                rng.random_range(1..=3),
                rng.random_range(2..=5),
                rng.random_range(1..=6),
            )
            .unwrap();
            let flat: Vec<f64> = (0..spec.param_count())
                .map(|_| rng.random_range(-0.1..0.1))
                .collect();
            let n = 7;
            let xs: Vec<f64> = (0..n * spec.d).map(|_| rng.random::<f64>()).collect();
            let w32 = SirenWeights::new(&spec, flat.iter().map(|&v| v as f32).collect()).unwrap();
            let coords = Tensor::<f32>::from_f64(n, spec.d, &xs).unwrap();
            let out = siren_eval(&spec, &w32, &coords).unwrap();
            for p in 0..n {
                let x32: Vec<f64> = xs[p * spec.d..(p + 1) * spec.d]
                    .iter()
                    .map(|&v| f64::from(v as f32))
                    .collect();
                let flat32: Vec<f64> = flat.iter().map(|&v| f64::from(v as f32)).collect();
                let want = scalar_reference(&spec, &flat32, &x32);
                for (c, w) in want.iter().enumerate() {
                    let got = f64::from(out.get2(p, c));
                    assert!((got - w).abs() < 1e-5, "trial {trial}: {got} vs {w}");
                }
            }
        }
    }

    #[test]
    fn subset_evaluation_is_pointwise_identical() {
        let spec = SirenSpec::new(1, 2, 4, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = SirenWeights::new(
            &spec,
            (0..spec.param_count()).map(|_| rng.random_range(-0.3f32..0.3)).collect(),
        )
        .unwrap();
        let xs: Vec<f64> = (0..16).map(|i| i as f64 / 15.0).collect();
        let full = siren_eval(&spec, &w, &Tensor::from_f64(16, 1, &xs).unwrap()).unwrap();
        let picks = [3usize, 0, 11];
        let sub: Vec<f64> = picks.iter().map(|&i| xs[i]).collect();
        let part = siren_eval(&spec, &w, &Tensor::from_f64(3, 1, &sub).unwrap()).unwrap();
        for (k, &i) in picks.iter().enumerate() {
            assert_eq!(part.row(k), full.row(i));
        }
    }

    #[test]
    fn tape_forward_matches_eval() {
        let spec = SirenSpec::new(2, 1, 4, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let flat: Vec<f64> = (0..81).map(|_| rng.random_range(-0.2..0.2)).collect();
        let xs: Vec<f64> = (0..10).map(|_| rng.random::<f64>()).collect();
        let coords = Tensor::from_f64(5, 2, &xs).unwrap();
        let mut tape = Tape::new();
        let fv = tape.param(Tensor::vector(flat.clone()));
        let layers = slice_layout_vars(&mut tape, &spec, fv).unwrap();
        let xv = tape.constant(coords.clone());
        let out = siren_forward(&mut tape, &spec, &layers, xv).unwrap();
        let want = siren_eval(&spec, &SirenWeights::new(&spec, flat).unwrap(), &coords).unwrap();
        assert_eq!(tape.value(out), &want);
    }
}
