//! Clustering in weight space: k-means (k-means++ seeding, Lloyd updates),
//! diagonal-covariance Gaussian mixtures fitted by EM, and a 2-D PCA
//! projection for plots.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const KMEANS_MAX_ITERS: usize = 300;
pub const GMM_MAX_ITERS: usize = 200;
pub const GMM_REL_TOL: f64 = 1e-6;
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Cluster assignment for every row of an embedding matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub assignments: Vec<usize>,
    pub k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    KMeans,
    Gmm,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::KMeans => "kmeans",
            Algorithm::Gmm => "gmm",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kmeans" | "k-means" => Ok(Algorithm::KMeans),
            "gmm" => Ok(Algorithm::Gmm),
            other => Err(Error::InvalidArgument(format!("unknown clustering algorithm `{other}`"))),
        }
    }
}

/// Clusters `x` with the chosen algorithm and returns only the partition.
pub fn cluster<T: Scalar>(x: &[Vec<T>], k: usize, algorithm: Algorithm, seed: u64) -> Result<Partition> {
    Ok(match algorithm {
        Algorithm::KMeans => kmeans(x, k, 10, seed)?.partition,
        Algorithm::Gmm => gmm_fit(x, k, seed)?.partition,
    })
}

fn to_f64<T: Scalar>(x: &[Vec<T>]) -> Result<(Vec<Vec<f64>>, usize)> {
    let dim = x.first().map(Vec::len).unwrap_or(0);
    if x.iter().any(|r| r.len() != dim) {
        return Err(Error::Dimension("embedding rows have different lengths".into()));
    }
    Ok((
        x.iter().map(|r| r.iter().map(|v| v.as_f64()).collect()).collect(),
        dim,
    ))
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be positive".into()));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!("K = {k} exceeds the {n} samples")));
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub partition: Partition,
    pub centers: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after every assignment step of the winning restart.
    pub history: Vec<f64>,
    pub restart: usize,
}

fn kmeans_pp(x: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut centers = vec![x[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = x.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let c = x[idx].clone();
        for (dv, p) in d2.iter_mut().zip(x) {
            *dv = dv.min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    centers
}

fn assign(x: &[Vec<f64>], centers: &[Vec<f64>], labels: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (p, l) in x.iter().zip(labels.iter_mut()) {
        let (best, dist) = centers
            .iter()
            .enumerate()
            .map(|(j, c)| (j, sq_dist(p, c)))
            .fold((0, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
        *l = best;
        inertia += dist;
    }
    inertia
}

fn lloyd(x: &[Vec<f64>], mut centers: Vec<Vec<f64>>, dim: usize) -> (Vec<usize>, Vec<Vec<f64>>, f64, Vec<f64>) {
    let k = centers.len();
    let mut labels = vec![usize::MAX; x.len()];
    let mut history = Vec::new();
    let mut prev: Option<Vec<usize>> = None;
    let mut inertia = assign(x, &centers, &mut labels);
    history.push(inertia);
    for _ in 0..KMEANS_MAX_ITERS {
        if prev.as_deref() == Some(labels.as_slice()) {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in x.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        // Empty clusters take over the point farthest from its own center.
        for j in 0..k {
            if counts[j] == 0 {
                let far = x
                    .iter()
                    .zip(&labels)
                    .enumerate()
                    .map(|(i, (p, &l))| (i, sq_dist(p, &centers[l])))
                    .fold((0, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc })
                    .0;
                centers[j] = x[far].clone();
                labels[far] = j;
                counts[j] = 1;
            }
        }
        prev = Some(labels.clone());
        inertia = assign(x, &centers, &mut labels);
        history.push(inertia);
    }
    (labels, centers, inertia, history)
}

/// Best of `restarts` k-means runs by inertia (ties go to the earlier run).
pub fn kmeans<T: Scalar>(x: &[Vec<T>], k: usize, restarts: usize, seed: u64) -> Result<KMeansResult> {
    check_k(x.len(), k)?;
    let (x, dim) = to_f64(x)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    for restart in 0..restarts.max(1) {
        let init = kmeans_pp(&x, k, &mut rng);
        let (labels, centers, inertia, history) = lloyd(&x, init, dim);
        if best.as_ref().is_none_or(|b| inertia < b.inertia) {
            best = Some(KMeansResult {
                partition: Partition {
                    assignments: labels,
                    k,
                },
                centers,
                inertia,
                history,
                restart,
            });
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct GmmResult {
    pub model: GmmModel,
    pub partition: Partition,
    /// Log-likelihood at every E-step.
    pub log_likelihood: Vec<f64>,
}

impl GmmModel {
    /// Per-sample log responsibilities (unnormalized) and the log-likelihood.
    fn e_step(&self, x: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        let consts: Vec<f64> = self
            .variances
            .iter()
            .zip(&self.weights)
            .map(|(var, w)| w.ln() - 0.5 * var.iter().map(|v| ln2pi + v.ln()).sum::<f64>())
            .collect();
        let mut ll = 0.0;
        let resp = x
            .iter()
            .map(|p| {
                let logs: Vec<f64> = (0..self.weights.len())
                    .map(|j| {
                        let q: f64 = p
                            .iter()
                            .zip(&self.means[j])
                            .zip(&self.variances[j])
                            .map(|((xv, mu), var)| (xv - mu) * (xv - mu) / var)
                            .sum();
                        consts[j] - 0.5 * q
                    })
                    .collect();
                let mx = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = mx + logs.iter().map(|l| (l - mx).exp()).sum::<f64>().ln();
                ll += lse;
                logs.into_iter().map(|l| (l - lse).exp()).collect()
            })
            .collect();
        (resp, ll)
    }

    fn m_step(x: &[Vec<f64>], resp: &[Vec<f64>], k: usize, dim: usize) -> Self {
        let n = x.len() as f64;
        let mut weights = vec![0.0; k];
        let mut means = vec![vec![0.0; dim]; k];
        let mut variances = vec![vec![0.0; dim]; k];
        for (p, r) in x.iter().zip(resp) {
            for j in 0..k {
                weights[j] += r[j];
                for (m, v) in means[j].iter_mut().zip(p) {
                    *m += r[j] * v;
                }
            }
        }
        for j in 0..k {
            let nj = weights[j].max(f64::MIN_POSITIVE);
            for m in &mut means[j] {
                *m /= nj;
            }
        }
        for (p, r) in x.iter().zip(resp) {
            for j in 0..k {
                for ((var, v), mu) in variances[j].iter_mut().zip(p).zip(&means[j]) {
                    *var += r[j] * (v - mu) * (v - mu);
                }
            }
        }
        for j in 0..k {
            let nj = weights[j].max(f64::MIN_POSITIVE);
            for var in &mut variances[j] {
                *var = (*var / nj).max(VARIANCE_FLOOR);
            }
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w = (*w / total).max(f64::MIN_POSITIVE);
        }
        let _ = n;
        Self {
            weights,
            means,
            variances,
        }
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Vec<usize> {
        let (resp, _) = self.e_step(x);
        resp.iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc })
                    .0
            })
            .collect()
    }
}

/// EM for a diagonal Gaussian mixture, started from k-means.
pub fn gmm_fit<T: Scalar>(x: &[Vec<T>], k: usize, seed: u64) -> Result<GmmResult> {
    check_k(x.len(), k)?;
    let km = kmeans(x, k, 10, seed)?;
    let (x, dim) = to_f64(x)?;

    // Initial responsibilities are the hard k-means assignments.
    let hard: Vec<Vec<f64>> = km
        .partition
        .assignments
        .iter()
        .map(|&a| (0..k).map(|j| if j == a { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut model = GmmModel::m_step(&x, &hard, k, dim);
    let mut history = Vec::new();
    let (mut resp, mut ll) = model.e_step(&x);
    history.push(ll);
    for _ in 0..GMM_MAX_ITERS {
        let next = GmmModel::m_step(&x, &resp, k, dim);
        let (r2, ll2) = next.e_step(&x);
        model = next;
        resp = r2;
        history.push(ll2);
        let converged = (ll2 - ll).abs() < GMM_REL_TOL * ll.abs().max(1e-300);
        ll = ll2;
        if converged {
            break;
        }
    }
    if !ll.is_finite() {
        return Err(Error::NonFinite {
            step: history.len(),
            what: "GMM log-likelihood".into(),
        });
    }
    let assignments = model.predict(&x);
    Ok(GmmResult {
        model,
        partition: Partition { assignments, k },
        log_likelihood: history,
    })
}

#[derive(Debug, Clone)]
pub struct Projection {
    /// `N x 2` scores.
    pub scores: Vec<[f64; 2]>,
    /// Unit principal directions.
    pub components: [Vec<f64>; 2],
    /// Variance explained by each direction.
    pub variances: [f64; 2],
    /// Total variance of the centered input.
    pub total_variance: f64,
}

/// Projection onto the top two principal directions. Each direction is
/// signed so that its largest-magnitude entry is positive.
pub fn pca2<T: Scalar>(x: &[Vec<T>]) -> Result<Projection> {
    let n = x.len();
    if n < 2 {
        return Err(Error::InvalidArgument("PCA needs at least two samples".into()));
    }
    let (mut x, dim) = to_f64(x)?;
    let mean: Vec<f64> = (0..dim)
        .map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    for r in &mut x {
        for (v, m) in r.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let data = DMatrix::from_fn(n, dim, |i, j| x[i][j]);
    let total: f64 = data.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if total == 0.0 {
        log::warn!("PCA input has zero variance; returning a zero projection");
        return Ok(Projection {
            scores: vec![[0.0; 2]; n],
            components: [vec![0.0; dim], vec![0.0; dim]],
            variances: [0.0; 2],
            total_variance: 0.0,
        });
    }

    // Work with whichever of the covariance (dim x dim) or Gram (n x n)
    // matrix is smaller.
    let (dirs, vals) = if dim <= n {
        let cov = data.transpose() * &data / n as f64;
        top2(cov)
    } else {
        let gram = &data * data.transpose() / n as f64;
        let (u, vals) = top2(gram);
        let mut dirs = Vec::new();
        for (col, &lam) in u.iter().zip(&vals) {
            let uvec = nalgebra::DVector::from_column_slice(col);
            let v = data.transpose() * uvec;
            let norm = v.norm();
            dirs.push(if norm > 0.0 && lam > 0.0 {
                (v / norm).iter().copied().collect()
            } else {
                vec![0.0; dim]
            });
        }
        (dirs, vals)
    };

    let mut comps: Vec<Vec<f64>> = dirs;
    while comps.len() < 2 {
        comps.push(vec![0.0; dim]);
    }
    for c in &mut comps {
        let (idx, _) = c
            .iter()
            .enumerate()
            .fold((0, -1.0f64), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
        if c[idx] < 0.0 {
            for v in c.iter_mut() {
                *v = -*v;
            }
        }
    }
    let scores = x
        .iter()
        .map(|r| {
            [
                r.iter().zip(&comps[0]).map(|(a, b)| a * b).sum(),
                r.iter().zip(&comps[1]).map(|(a, b)| a * b).sum(),
            ]
        })
        .collect();
    let variances = [vals.first().copied().unwrap_or(0.0).max(0.0), vals.get(1).copied().unwrap_or(0.0).max(0.0)];
    let c1 = comps.pop().expect("two components");
    let c0 = comps.pop().expect("two components");
    Ok(Projection {
        scores,
        components: [c0, c1],
        variances,
        total_variance: total,
    })
}

fn top2(sym: DMatrix<f64>) -> (Vec<Vec<f64>>, Vec<f64>) {
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let take = order.len().min(2);
    let dirs = order[..take]
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    let vals = order[..take].iter().map(|&i| eig.eigenvalues[i]).collect();
    (dirs, vals)
}

/// Standardizes every column to zero mean and unit variance in place.
/// Constant columns are only centered.
pub fn zscore(x: &mut [Vec<f64>]) {
    let n = x.len();
    if n == 0 {
        return;
    }
    let dim = x[0].len();
    for j in 0..dim {
        let mean = x.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let sd = (x.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        for r in x.iter_mut() {
            r[j] -= mean;
            if sd > 0.0 {
                r[j] /= sd;
            }
        }
    }
}

/// Embedding matrix with sample ids and optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub ids: Vec<String>,
    pub labels: Vec<Option<u32>>,
    pub rows: Vec<Vec<f64>>,
}

impl Embeddings {
    pub fn dim(&self) -> usize {
        self.rows.first().map(Vec::len).unwrap_or(0)
    }

    /// All labels, if every sample has one.
    pub fn labels(&self) -> Option<Vec<u32>> {
        self.labels.iter().copied().collect()
    }
}

fn opt_label(l: Option<u32>) -> String {
    l.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

/// Writes `id,label,w_0,...` rows.
pub fn write_embeddings(emb: &Embeddings, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend((0..emb.dim()).map(|j| format!("w_{j}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for ((id, label), row) in emb.ids.iter().zip(&emb.labels).zip(&emb.rows) {
        let mut rec = vec![id.clone(), opt_label(*label)];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<Embeddings> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.len() < 2 || &header[0] != "id" || &header[1] != "label" {
        return Err(Error::Schema {
            line: 1,
            message: "expected header `id,label,w_0,...`".into(),
        });
    }
    let dim = header.len() - 2;
    let mut emb = Embeddings {
        ids: Vec::new(),
        labels: Vec::new(),
        rows: Vec::new(),
    };
    for (k, rec) in r.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::Schema {
            line,
            message: e.to_string(),
        })?;
        if rec.len() != dim + 2 {
            return Err(Error::Schema {
                line,
                message: format!("expected {} fields, found {}", dim + 2, rec.len()),
            });
        }
        let label = match &rec[1] {
            "" => None,
            s => Some(s.parse().map_err(|_| Error::Schema {
                line,
                message: format!("bad label `{s}`"),
            })?),
        };
        let row = rec
            .iter()
            .skip(2)
            .map(|s| {
                s.parse::<f64>().map_err(|_| Error::Schema {
                    line,
                    message: format!("bad number `{s}`"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        emb.ids.push(rec[0].to_string());
        emb.labels.push(label);
        emb.rows.push(row);
    }
    Ok(emb)
}

/// Writes `id,assigned,label` rows (label column only when labels exist).
pub fn write_partition(ids: &[String], labels: &[Option<u32>], part: &Partition, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let labeled = labels.iter().any(Option::is_some);
    let mut out = String::from(if labeled { "id,assigned,label\n" } else { "id,assigned\n" });
    for (i, (id, a)) in ids.iter().zip(&part.assignments).enumerate() {
        if labeled {
            out.push_str(&format!("{id},{a},{}\n", opt_label(labels[i])));
        } else {
            out.push_str(&format!("{id},{a}\n"));
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// One projected sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedPoint {
    pub id: String,
    pub pc: [f64; 2],
    pub label: Option<u32>,
    pub resolution: usize,
}

/// Writes `id,pc1,pc2,label,resolution` rows.
pub fn write_projection(points: &[ProjectedPoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("id,pc1,pc2,label,resolution\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            p.id,
            p.pc[0],
            p.pc[1],
            opt_label(p.label),
            p.resolution
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    pub(crate) fn blobs(n_per: usize, centers: &[Vec<f64>], spread: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, spread).unwrap();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..n_per {
                x.push(center.iter().map(|m| m + normal.sample(&mut rng)).collect());
                y.push(c);
            }
        }
        (x, y)
    }

    fn same_partition(a: &[usize], b: &[usize]) -> bool {
        (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
    }

    #[test]
    fn kmeans_separates_blobs() {
        let (x, y) = blobs(30, &[vec![0.0, 0.0, 0.0], vec![20.0, 0.0, 5.0]], 1.0, 1);
        let r = kmeans(&x, 2, 10, 3).unwrap();
        assert!(same_partition(&r.partition.assignments, &y));
    }

    #[test]
    fn kmeans_k_equals_n() {
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let r = kmeans(&x, 6, 3, 0).unwrap();
        assert_eq!(r.inertia, 0.0);
        let mut a = r.partition.assignments.clone();
        a.sort_unstable();
        a.dedup();
        assert_eq!(a.len(), 6);
    }

    #[test]
    fn kmeans_coassigns_duplicates() {
        let (mut x, _) = blobs(10, &[vec![0.0, 0.0], vec![5.0, 5.0], vec![-5.0, 5.0]], 1.5, 7);
        let copy = x.clone();
        x.extend(copy);
        let r = kmeans(&x, 3, 5, 1).unwrap();
        for i in 0..30 {
            assert_eq!(r.partition.assignments[i], r.partition.assignments[i + 30]);
        }
    }

    #[test]
    fn kmeans_errors() {
        let x = vec![vec![0.0f32], vec![1.0]];
        assert!(kmeans(&x, 3, 1, 0).is_err());
        assert!(kmeans(&x, 0, 1, 0).is_err());
    }

    #[test]
    fn kmeans_inertia_monotone_and_deterministic() {
        let (x, _) = blobs(40, &[vec![0.0, 0.0], vec![2.0, 1.0], vec![1.0, 3.0], vec![3.0, 3.0]], 1.0, 5);
        let a = kmeans(&x, 4, 10, 9).unwrap();
        for w in a.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9 * w[0].abs());
        }
        let b = kmeans(&x, 4, 10, 9).unwrap();
        assert_eq!(a.partition, b.partition);
        assert_eq!(a.inertia, b.inertia);
    }

    #[test]
    fn gmm_single_blob_matches_sample_moments() {
        let (x, _) = blobs(200, &[vec![1.0, -2.0, 0.5]], 0.7, 2);
        let r = gmm_fit(&x, 1, 0).unwrap();
        for j in 0..3 {
            let mean = x.iter().map(|p| p[j]).sum::<f64>() / 200.0;
            let var = x.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / 200.0;
            assert!((r.model.means[0][j] - mean).abs() <= 1e-6 * mean.abs().max(1.0));
            assert!((r.model.variances[0][j] - var).abs() <= 1e-6 * var);
        }
        assert!((r.model.weights[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gmm_separates_blobs_and_is_monotone() {
        let (x, y) = blobs(50, &[vec![0.0, 0.0], vec![8.0, 8.0]], 1.0, 4);
        let r = gmm_fit(&x, 2, 1).unwrap();
        assert!(same_partition(&r.partition.assignments, &y));
        for w in r.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0));
        }
        assert!((r.model.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(r.model.variances.iter().flatten().all(|&v| v >= VARIANCE_FLOOR));
    }

    #[test]
    fn gmm_respects_variance_floor() {
        let x = vec![vec![1.0, 1.0]; 5];
        let r = gmm_fit(&x, 1, 0).unwrap();
        assert!(r.model.variances[0].iter().all(|&v| v == VARIANCE_FLOOR));
    }

    #[test]
    fn zscore_columns() {
        let mut x = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        zscore(&mut x);
        assert_eq!(x, vec![vec![-1.0, 0.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn embeddings_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        let emb = Embeddings {
            ids: vec!["a".into(), "b".into()],
            labels: vec![Some(1), None],
            rows: vec![vec![0.1, -2.5e-7], vec![f64::from(0.3f32), 4.0]],
        };
        write_embeddings(&emb, &path).unwrap();
        assert_eq!(read_embeddings(&path).unwrap(), emb);
        std::fs::write(&path, "id,label,w_0\na,1,x\n").unwrap();
        assert!(matches!(read_embeddings(&path), Err(Error::Schema { line: 2, .. })));
    }

    #[test]
    fn pca_on_a_line() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 2.0 * i as f64, -(i as f64)]).collect();
        let p = pca2(&x).unwrap();
        assert!(p.scores.iter().all(|s| s[1].abs() < 1e-8));
        assert!(p.variances[1].abs() < 1e-8);
    }

    #[test]
    fn pca_zero_variance() {
        let x = vec![vec![3.0f32, 3.0]; 4];
        let p = pca2(&x).unwrap();
        assert!(p.scores.iter().all(|s| *s == [0.0, 0.0]));
        assert!(pca2(&x[..1]).is_err());
    }

    #[test]
    fn pca_variance_bounded_and_rotation_equivariant() {
        let (x, _) = blobs(25, &[vec![0.0, 0.0, 0.0], vec![3.0, 1.0, -2.0]], 1.0, 8);
        let p = pca2(&x).unwrap();
        let total_x: f64 = {
            let n = x.len() as f64;
            (0..3)
                .map(|j| {
                    let m = x.iter().map(|r| r[j]).sum::<f64>() / n;
                    x.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n
                })
                .sum()
        };
        assert!(p.variances[0] + p.variances[1] <= total_x + 1e-9);

        // Rotate the data; the projection may only change by a 2-D rotation or reflection.
        let (c, s) = (0.6f64, 0.8f64);
        let rot: Vec<Vec<f64>> = x.iter().map(|r| vec![c * r[0] - s * r[1], s * r[0] + c * r[1], r[2]]).collect();
        let q = pca2(&rot).unwrap();
        assert!((p.variances[0] - q.variances[0]).abs() < 1e-9);
        assert!((p.variances[1] - q.variances[1]).abs() < 1e-9);
        for (a, b) in p.scores.iter().zip(&q.scores) {
            assert!((a[0].abs() - b[0].abs()).abs() < 1e-8);
            assert!((a[1].abs() - b[1].abs()).abs() < 1e-8);
        }
    }

    #[test]
    fn pca_gram_route_matches_covariance_route() {
        // More dimensions than samples exercises the Gram-matrix branch.
        let (x, _) = blobs(3, &[vec![0.0; 8], vec![1.0; 8]], 0.5, 1);
        let p = pca2(&x).unwrap();
        let n = x.len() as f64;
        let mean: Vec<f64> = (0..8).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let cov = DMatrix::from_fn(8, 8, |a, b| {
            x.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / n
        });
        let mut ev: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        assert!((p.variances[0] - ev[0]).abs() < 1e-9);
        assert!((p.variances[1] - ev[1]).abs() < 1e-9);
    }
}
