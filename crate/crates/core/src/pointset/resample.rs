use super::{Dataset, PointSet, UnlabeledView};
use crate::error::{Error, Result};

/// Position of index `i` on an align-corners grid with `r` points per side.
pub fn grid_coord(i: usize, r: usize) -> f64 {
    if r <= 1 {
        0.5
    } else {
        i as f64 / (r - 1) as f64
    }
}

/// Values on a regular `rows x cols` grid with `m` channels, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub m: usize,
    pub data: Vec<f32>,
}

impl Grid {
    pub fn new(rows: usize, cols: usize, m: usize, data: Vec<f32>) -> Result<Self> {
        if rows * cols * m != data.len() || rows == 0 || cols == 0 || m == 0 {
            return Err(Error::Dimension(format!(
                "grid {rows}x{cols}x{m} with {} values",
                data.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            m,
            data,
        })
    }

    pub fn at(&self, r: usize, c: usize) -> &[f32] {
        let o = (r * self.cols + c) * self.m;
        &self.data[o..o + self.m]
    }

    /// Recovers the grid behind a point set whose coordinates form a full
    /// align-corners lattice (in any row order). Returns `None` otherwise.
    pub fn from_pointset(ps: &PointSet) -> Option<Self> {
        if ps.d() != 2 {
            return None;
        }
        let axis = |k: usize| -> Option<usize> {
            let mut vals: Vec<f32> = (0..ps.len()).map(|i| ps.coord(i)[k]).collect();
            vals.sort_by(f32::total_cmp);
            vals.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
            let n = vals.len();
            let ok = vals
                .iter()
                .enumerate()
                .all(|(i, &v)| (f64::from(v) - grid_coord(i, n)).abs() < 1e-5);
            ok.then_some(n)
        };
        let rows = axis(0)?;
        let cols = axis(1)?;
        if rows * cols != ps.len() {
            return None;
        }
        let m = ps.m();
        let mut data = vec![0.0f32; rows * cols * m];
        let mut seen = vec![false; rows * cols];
        let index = |v: f32, n: usize| -> usize {
            if n <= 1 {
                0
            } else {
                (f64::from(v) * (n - 1) as f64).round() as usize
            }
        };
        for i in 0..ps.len() {
            let c = ps.coord(i);
            let cell = index(c[0], rows) * cols + index(c[1], cols);
            if seen[cell] {
                return None;
            }
            seen[cell] = true;
            data[cell * m..(cell + 1) * m].copy_from_slice(ps.value(i));
        }
        Some(Self {
            rows,
            cols,
            m,
            data,
        })
    }
}

/// Bilinear resampling onto an `r x r` align-corners grid.
pub fn bilinear_resample(grid: &Grid, r: usize) -> Result<Grid> {
    if r == 0 {
        return Err(Error::InvalidArgument("resolution must be positive".into()));
    }
    if grid.rows < 2 || grid.cols < 2 {
        return Err(Error::InvalidArgument(format!(
            "bilinear resampling needs at least a 2x2 source grid, got {}x{}",
            grid.rows, grid.cols
        )));
    }
    let m = grid.m;
    let locate = |i: usize, n: usize| -> (usize, f64) {
        let pos = if r == 1 {
            0.5 * (n - 1) as f64
        } else {
            (i * (n - 1)) as f64 / (r - 1) as f64
        };
        let lo = (pos.floor() as usize).min(n - 2);
        (lo, pos - lo as f64)
    };
    let mut data = Vec::with_capacity(r * r * m);
    for i in 0..r {
        let (y0, ty) = locate(i, grid.rows);
        for j in 0..r {
            let (x0, tx) = locate(j, grid.cols);
            let (v00, v01) = (grid.at(y0, x0), grid.at(y0, x0 + 1));
            let (v10, v11) = (grid.at(y0 + 1, x0), grid.at(y0 + 1, x0 + 1));
            for c in 0..m {
                let top = f64::from(v00[c]) * (1.0 - tx) + f64::from(v01[c]) * tx;
                let bot = f64::from(v10[c]) * (1.0 - tx) + f64::from(v11[c]) * tx;
                data.push((top * (1.0 - ty) + bot * ty) as f32);
            }
        }
    }
    Grid::new(r, r, m, data)
}

/// Flattens a grid into a point set; `coords[0]` is the row position and
/// `coords[1]` the column position.
pub fn grid_to_pointset(grid: &Grid, id: impl Into<String>, label: Option<u32>) -> Result<PointSet> {
    let mut coords = Vec::with_capacity(grid.rows * grid.cols * 2);
    for i in 0..grid.rows {
        for j in 0..grid.cols {
            coords.push(grid_coord(i, grid.rows) as f32);
            coords.push(grid_coord(j, grid.cols) as f32);
        }
    }
    PointSet::new(id, label, 2, grid.m, coords, grid.data.clone())
}

/// Piecewise-linear resampling of a 1-D point set onto `r` uniform points.
/// Values beyond the outermost observations are held constant.
pub fn linear_resample(ps: &PointSet, r: usize) -> Result<PointSet> {
    let line = Line::from_pointset(ps)?;
    line.resample(r, ps.id.clone(), ps.label)
}

#[derive(Debug, Clone)]
struct Line {
    xs: Vec<f64>,
    values: Vec<f32>,
    m: usize,
}

impl Line {
    fn from_pointset(ps: &PointSet) -> Result<Self> {
        if ps.d() != 1 {
            return Err(Error::Dimension(format!(
                "linear resampling needs d = 1, got {}",
                ps.d()
            )));
        }
        let mut order: Vec<usize> = (0..ps.len()).collect();
        order.sort_by(|&a, &b| ps.coord(a)[0].total_cmp(&ps.coord(b)[0]));
        let m = ps.m();
        let xs = order.iter().map(|&i| f64::from(ps.coord(i)[0])).collect();
        let values = order.iter().flat_map(|&i| ps.value(i).iter().copied()).collect();
        Ok(Self { xs, values, m })
    }

    fn resample(&self, r: usize, id: String, label: Option<u32>) -> Result<PointSet> {
        if r == 0 {
            return Err(Error::InvalidArgument("resolution must be positive".into()));
        }
        let m = self.m;
        let n = self.xs.len();
        let mut coords = Vec::with_capacity(r);
        let mut values = Vec::with_capacity(r * m);
        for i in 0..r {
            let x = grid_coord(i, r);
            coords.push(x as f32);
            let hi = self.xs.partition_point(|&v| v < x);
            if hi == 0 {
                values.extend_from_slice(&self.values[..m]);
            } else if hi == n {
                values.extend_from_slice(&self.values[(n - 1) * m..]);
            } else {
                let (x0, x1) = (self.xs[hi - 1], self.xs[hi]);
                let t = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
                for c in 0..m {
                    let a = f64::from(self.values[(hi - 1) * m + c]);
                    let b = f64::from(self.values[hi * m + c]);
                    values.push((a + (b - a) * t) as f32);
                }
            }
        }
        PointSet::new(id, label, 1, m, coords, values)
    }
}

#[derive(Debug, Clone)]
enum Source {
    Grid(Grid),
    Line(Line),
    Scattered,
}

/// Re-discretizes every sample of a dataset at a requested resolution:
/// grids bilinearly, 1-D series by linear interpolation.
#[derive(Debug, Clone)]
pub struct Resampler {
    ids: Vec<String>,
    labels: Vec<Option<u32>>,
    sources: Vec<Source>,
    d: usize,
    m: usize,
}

impl Resampler {
    pub fn new(dataset: &Dataset) -> Self {
        Self::build(dataset.samples().iter().cloned(), dataset.d(), dataset.m())
    }

    pub fn from_view(view: UnlabeledView<'_>) -> Self {
        Self::build((0..view.len()).map(|n| view.sample(n)), view.d(), view.m())
    }

    fn build(samples: impl Iterator<Item = PointSet>, d: usize, m: usize) -> Self {
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        let mut sources = Vec::new();
        for ps in samples {
            let src = match ps.d() {
                1 => Line::from_pointset(&ps).map(Source::Line).unwrap_or(Source::Scattered),
                2 => Grid::from_pointset(&ps)
                    .filter(|g| g.rows >= 2 && g.cols >= 2)
                    .map(Source::Grid)
                    .unwrap_or(Source::Scattered),
                _ => Source::Scattered,
            };
            ids.push(ps.id.clone());
            labels.push(ps.label);
            sources.push(src);
        }
        Self {
            ids,
            labels,
            sources,
            d,
            m,
        }
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn id(&self, n: usize) -> &str {
        &self.ids[n]
    }

    /// Number of points a sample has once resampled at side `r`.
    pub fn points_at(&self, r: usize) -> usize {
        r.pow(self.d as u32)
    }

    pub fn resample(&self, n: usize, r: usize) -> Result<PointSet> {
        let (id, label) = (self.ids[n].clone(), self.labels[n]);
        match &self.sources[n] {
            Source::Grid(g) => grid_to_pointset(&bilinear_resample(g, r)?, id, label),
            Source::Line(l) => l.resample(r, id, label),
            Source::Scattered => Err(Error::InvalidArgument(format!(
                "sample {id} is neither a 1-D series nor a regular grid and cannot be resampled"
            ))),
        }
    }

    /// Flattened values of sample `n` at resolution `r` (the pixel baseline).
    pub fn flat_values(&self, n: usize, r: usize) -> Result<Vec<f32>> {
        Ok(self.resample(n, r)?.values().to_vec())
    }
}
