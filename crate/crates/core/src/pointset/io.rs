use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::resample::{grid_to_pointset, Grid};
use super::{Dataset, PointSet};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct JsonRecord {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<u32>,
    x: Vec<Vec<f32>>,
    u: Vec<Vec<f32>>,
}

fn rectangular(rows: Vec<Vec<f32>>, field: &str, line: usize) -> Result<(usize, Vec<f32>)> {
    let width = rows.first().map(Vec::len).unwrap_or(0);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
        return Err(Error::Schema {
            line,
            message: format!(
                "field `{field}` is ragged: row {i} has {} entries, row 0 has {width}",
                r.len()
            ),
        });
    }
    Ok((width, rows.into_iter().flatten().collect()))
}

/// Reads one point set per line: `{"id", "label"?, "x": I x d, "u": I x m}`.
pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut samples = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonRecord = serde_json::from_str(&line).map_err(|e| Error::Schema {
            line: lineno,
            message: e.to_string(),
        })?;
        let (d, x) = rectangular(rec.x, "x", lineno)?;
        let (m, u) = rectangular(rec.u, "u", lineno)?;
        let ps = PointSet::new(rec.id, rec.label, d, m, x, u).map_err(|e| Error::Schema {
            line: lineno,
            message: e.to_string(),
        })?;
        samples.push(ps);
    }
    Dataset::new(samples).map_err(|e| match e {
        Error::Dimension(message) => Error::Schema { line: 0, message },
        other => other,
    })
}

pub fn write_jsonl(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in dataset.samples() {
        let rec = JsonRecord {
            id: s.id.clone(),
            label: s.label,
            x: s.coords().chunks(s.d()).map(<[f32]>::to_vec).collect(),
            u: s.values().chunks(s.m()).map(<[f32]>::to_vec).collect(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Reads a whole file, transparently inflating gzip.
fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format(format!("{}: truncated IDX header", path.display())))
}

/// Decoded IDX image file with intensities scaled to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<f32>,
}

impl IdxImages {
    pub fn image(&self, n: usize) -> Grid {
        let sz = self.rows * self.cols;
        Grid::new(self.rows, self.cols, 1, self.pixels[n * sz..(n + 1) * sz].to_vec())
            .expect("image dimensions are consistent")
    }
}

pub fn read_idx_images(path: impl AsRef<Path>) -> Result<IdxImages> {
    let path = path.as_ref();
    let bytes = read_maybe_gz(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad IDX image magic {magic:#010x}",
            path.display()
        )));
    }
    let count = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    let need = count * rows * cols;
    let payload = &bytes[16..];
    if payload.len() < need {
        return Err(Error::Format(format!(
            "{}: truncated IDX payload ({} of {need} bytes)",
            path.display(),
            payload.len()
        )));
    }
    let pixels = payload[..need].iter().map(|&b| f32::from(b) / 255.0).collect();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let bytes = read_maybe_gz(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad IDX label magic {magic:#010x}",
            path.display()
        )));
    }
    let count = be_u32(&bytes, 4, path)? as usize;
    let payload = &bytes[8..];
    if payload.len() < count {
        return Err(Error::Format(format!(
            "{}: truncated IDX payload ({} of {count} labels)",
            path.display(),
            payload.len()
        )));
    }
    Ok(payload[..count].to_vec())
}

/// Turns IDX images and labels into a dataset of point sets at the native
/// resolution. `classes` filters by digit; `subset` draws that many samples
/// uniformly without replacement (seeded), keeping their original order.
pub fn mnist_dataset(
    images: &IdxImages,
    labels: &[u8],
    subset: Option<usize>,
    classes: Option<&[u8]>,
    seed: u64,
) -> Result<Dataset> {
    if images.count != labels.len() {
        return Err(Error::Format(format!(
            "{} images but {} labels",
            images.count,
            labels.len()
        )));
    }
    let mut keep: Vec<usize> = (0..images.count)
        .filter(|&i| classes.is_none_or(|c| c.contains(&labels[i])))
        .collect();
    if let Some(n) = subset {
        if n < keep.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            keep.shuffle(&mut rng);
            keep.truncate(n);
            keep.sort_unstable();
        }
    }
    let samples = keep
        .into_iter()
        .map(|i| {
            grid_to_pointset(
                &images.image(i),
                format!("mnist-{i:05}"),
                Some(u32::from(labels[i])),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(samples)
}
