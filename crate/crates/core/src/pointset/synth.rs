//! Synthetic labeled datasets: multi-channel sinusoids on `[0, 1]` and
//! oriented RGB gratings on `[0, 1]^2`.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::resample::{grid_coord, grid_to_pointset, Grid};
use super::{Dataset, PointSet};
use crate::error::{Error, Result};

/// `u_c(x) = amp * sin(2 pi freq x + phase)` with `amp` and `phase` drawn
/// uniformly per sample and channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SineClass {
    pub freq: f64,
    pub amp: (f64, f64),
    pub phase: (f64, f64),
}

impl SineClass {
    pub fn new(freq: f64) -> Self {
        Self {
            freq,
            amp: (1.0, 1.0),
            phase: (0.0, 0.0),
        }
    }

    pub fn with_amp(mut self, lo: f64, hi: f64) -> Self {
        self.amp = (lo, hi);
        self
    }

    pub fn with_phase(mut self, lo: f64, hi: f64) -> Self {
        self.phase = (lo, hi);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub classes: Vec<SineClass>,
    pub n_per_class: usize,
    pub channels: usize,
    /// Inclusive range for the number of observation points per sample.
    pub points: (usize, usize),
    /// Uniform-random locations instead of a uniform grid.
    pub irregular: bool,
    pub seed: u64,
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

pub fn synth_sine_dataset(cfg: &SynthConfig) -> Result<Dataset> {
    if cfg.classes.is_empty() || cfg.n_per_class == 0 || cfg.channels == 0 {
        return Err(Error::InvalidArgument(
            "need at least one class, one sample per class and one channel".into(),
        ));
    }
    let (pmin, pmax) = cfg.points;
    if pmin == 0 || pmax < pmin {
        return Err(Error::InvalidArgument(format!(
            "invalid point-count range {pmin}..={pmax}"
        )));
    }
    for (i, a) in cfg.classes.iter().enumerate() {
        if cfg.classes[..i].iter().any(|b| b.freq == a.freq) {
            return Err(Error::InvalidArgument(format!(
                "class frequencies must be distinct ({} repeats)",
                a.freq
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let m = cfg.channels;
    let mut samples = Vec::with_capacity(cfg.classes.len() * cfg.n_per_class);
    for (label, class) in cfg.classes.iter().enumerate() {
        for k in 0..cfg.n_per_class {
            let n_points = rng.random_range(pmin..=pmax);
            let mut xs: Vec<f64> = if cfg.irregular {
                (0..n_points).map(|_| rng.random::<f64>()).collect()
            } else {
                (0..n_points).map(|i| grid_coord(i, n_points)).collect()
            };
            xs.sort_by(f64::total_cmp);
            let params: Vec<(f64, f64)> = (0..m)
                .map(|_| (draw(&mut rng, class.amp), draw(&mut rng, class.phase)))
                .collect();
            let mut values = Vec::with_capacity(n_points * m);
            for &x in &xs {
                for &(amp, phase) in &params {
                    values.push((amp * (TAU * class.freq * x + phase).sin()) as f32);
                }
            }
            let coords = xs.iter().map(|&x| x as f32).collect();
            samples.push(PointSet::new(
                format!("sine-{label}-{k:04}"),
                Some(label as u32),
                1,
                m,
                coords,
                values,
            )?);
        }
    }
    Dataset::new(samples)
}

/// Oriented sinusoidal gratings, one orientation per class, with a random
/// phase and a random RGB tint per sample.
pub fn synth_texture_dataset(
    n_classes: usize,
    n_per_class: usize,
    resolution: usize,
    seed: u64,
) -> Result<Dataset> {
    if n_classes == 0 || n_per_class == 0 || resolution < 2 {
        return Err(Error::InvalidArgument(
            "need classes, samples and a resolution of at least 2".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::new();
    for label in 0..n_classes {
        let angle = std::f64::consts::PI * label as f64 / n_classes as f64;
        let (ca, sa) = (angle.cos(), angle.sin());
        for k in 0..n_per_class {
            let phase = rng.random_range(0.0..TAU);
            let tint: [f64; 3] = [
                rng.random_range(0.5..1.0),
                rng.random_range(0.5..1.0),
                rng.random_range(0.5..1.0),
            ];
            let mut data = Vec::with_capacity(resolution * resolution * 3);
            for i in 0..resolution {
                for j in 0..resolution {
                    let (y, x) = (grid_coord(i, resolution), grid_coord(j, resolution));
                    let s = (TAU * 2.0 * (x * ca + y * sa) + phase).sin();
                    data.extend(tint.iter().map(|t| (0.5 + 0.4 * t * s) as f32));
                }
            }
            let grid = Grid::new(resolution, resolution, 3, data)?;
            samples.push(grid_to_pointset(
                &grid,
                format!("texture-{label}-{k:04}"),
                Some(label as u32),
            )?);
        }
    }
    Dataset::new(samples)
}
