//! Evaluation over resolutions, clustering algorithms and seeds.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ami_with, ari, AmiNormalizer};
use crate::cluster::{cluster, zscore, Algorithm};
use crate::error::{Error, Result};
use crate::hypernet::{embed_dataset, HyperNet};
use crate::pointset::{Dataset, ResolutionSet, Resampler};
use crate::scalar::Scalar;

/// Name of the flattened-value K-means reference row.
pub const PIXEL_BASELINE: &str = "pixel-kmeans";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Seen,
    HeldOut,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Seen => "seen",
            Split::HeldOut => "held-out",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub resolutions: ResolutionSet,
    /// Defaults to the number of distinct labels.
    pub k: Option<usize>,
    pub algorithms: Vec<Algorithm>,
    pub seeds: Vec<u64>,
    /// Also cluster the raw resampled values with K-means.
    pub pixel_baseline: bool,
    pub zscore: bool,
    pub normalizer: AmiNormalizer,
    pub threads: usize,
}

impl ProtocolConfig {
    pub fn new(resolutions: ResolutionSet) -> Self {
        Self {
            resolutions,
            k: None,
            algorithms: vec![Algorithm::KMeans],
            seeds: (0..5).collect(),
            pixel_baseline: false,
            zscore: false,
            normalizer: AmiNormalizer::Arithmetic,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub resolution: usize,
    pub split: Split,
    pub algorithm: String,
    pub metric: String,
    pub mean: f64,
    /// Population standard deviation over seeds.
    pub std: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl Report {
    pub fn get(&self, resolution: usize, algorithm: &str, metric: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.resolution == resolution && r.algorithm == algorithm && r.metric == metric)
    }

    /// Largest minus smallest mean of `metric` across resolutions.
    pub fn spread(&self, algorithm: &str, metric: &str) -> f64 {
        let means: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.algorithm == algorithm && r.metric == metric)
            .map(|r| r.mean)
            .collect();
        let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
        if means.is_empty() {
            0.0
        } else {
            hi - lo
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("resolution,split,algorithm,metric,mean,std,seeds\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{:.6},{}",
                r.resolution,
                r.split.name(),
                r.algorithm,
                r.metric,
                r.mean,
                r.std,
                r.values.len()
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// One line per (resolution, algorithm) with `mean ± std` columns for AMI and ARI.
    pub fn to_table(&self) -> String {
        let mut lines = vec![[
            "resolution".to_string(),
            "split".to_string(),
            "algorithm".to_string(),
            "AMI".to_string(),
            "ARI".to_string(),
        ]];
        let mut seen = Vec::new();
        for r in &self.rows {
            let key = (r.resolution, r.algorithm.clone());
            if seen.contains(&key) {
                continue;
            }
            seen.push(key);
            let cell = |metric: &str| {
                self.get(r.resolution, &r.algorithm, metric)
                    .map(|m| format!("{:.3} ± {:.3}", m.mean, m.std))
                    .unwrap_or_else(|| "-".into())
            };
            lines.push([
                r.resolution.to_string(),
                r.split.name().to_string(),
                r.algorithm.clone(),
                cell("ami"),
                cell("ari"),
            ]);
        }
        let widths: Vec<usize> = (0..5)
            .map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for l in &lines {
            let cells: Vec<String> = l
                .iter()
                .zip(&widths)
                .map(|(s, &w)| format!("{s}{}", " ".repeat(w - s.chars().count())))
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

/// Flattened resampled values, one row per sample.
pub fn pixel_matrix(source: &Resampler, resolution: usize) -> Result<Vec<Vec<f32>>> {
    (0..source.len()).map(|n| source.flat_values(n, resolution)).collect()
}

fn score_rows(
    x: &[Vec<f64>],
    labels: &[u32],
    k: usize,
    algorithm: Algorithm,
    cfg: &ProtocolConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut amis = Vec::new();
    let mut aris = Vec::new();
    for &seed in &cfg.seeds {
        let part = cluster(x, k, algorithm, seed)?;
        amis.push(ami_with(labels, &part.assignments, cfg.normalizer)?);
        aris.push(ari(labels, &part.assignments)?);
    }
    Ok((amis, aris))
}

/// Embeds the labeled dataset at every resolution, clusters it once per seed
/// and algorithm, and summarizes AMI and ARI against the labels.
pub fn eval_protocol<T: Scalar>(hn: &HyperNet<T>, dataset: &Dataset, cfg: &ProtocolConfig) -> Result<Report> {
    let labels = dataset
        .labels()
        .ok_or_else(|| Error::InvalidArgument("evaluation needs a fully labeled dataset".into()))?;
    if cfg.seeds.is_empty() {
        return Err(Error::InvalidArgument("at least one seed is required".into()));
    }
    let k = match cfg.k {
        Some(k) => k,
        None => dataset.num_classes().unwrap_or(1),
    };
    let source = Resampler::new(dataset);
    let mut report = Report::default();
    for r in cfg.resolutions.all() {
        let split = if cfg.resolutions.is_seen(r) {
            Split::Seen
        } else {
            Split::HeldOut
        };
        let mut x: Vec<Vec<f64>> = embed_dataset(hn, &source, r, cfg.threads)?
            .into_iter()
            .map(|row| row.into_iter().map(|v| v.as_f64()).collect())
            .collect();
        if cfg.zscore {
            zscore(&mut x);
        }
        let mut results = Vec::new();
        for &algo in &cfg.algorithms {
            results.push((algo.name().to_string(), score_rows(&x, &labels, k, algo, cfg)?));
        }
        if cfg.pixel_baseline {
            let px: Vec<Vec<f64>> = pixel_matrix(&source, r)?
                .into_iter()
                .map(|row| row.into_iter().map(f64::from).collect())
                .collect();
            results.push((
                PIXEL_BASELINE.to_string(),
                score_rows(&px, &labels, k, Algorithm::KMeans, cfg)?,
            ));
        }
        for (name, (amis, aris)) in results {
            for (metric, values) in [("ami", amis), ("ari", aris)] {
                let (mean, std) = mean_std(&values);
                report.rows.push(ReportRow {
                    resolution: r,
                    split,
                    algorithm: name.clone(),
                    metric: metric.to_string(),
                    mean,
                    std,
                    values,
                });
            }
        }
        log::info!("evaluated resolution {r}");
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(r: usize, algo: &str, metric: &str, values: Vec<f64>) -> ReportRow {
        let (mean, std) = mean_std(&values);
        ReportRow {
            resolution: r,
            split: Split::Seen,
            algorithm: algo.into(),
            metric: metric.into(),
            mean,
            std,
            values,
        }
    }

    #[test]
    fn csv_and_table_layout() {
        let report = Report {
            rows: vec![
                row(16, "kmeans", "ami", vec![1.0, 1.0]),
                row(16, "kmeans", "ari", vec![0.5, 1.0]),
            ],
        };
        let csv = report.to_csv();
        assert_eq!(
            csv,
            "resolution,split,algorithm,metric,mean,std,seeds\n\
             16,seen,kmeans,ami,1.000000,0.000000,2\n\
             16,seen,kmeans,ari,0.750000,0.250000,2\n"
        );
        let table = report.to_table();
        assert!(table.contains("1.000 ± 0.000"));
        assert!(table.contains("0.750 ± 0.250"));
        assert_eq!(table.lines().count(), 2);
    }

    #[test]
    fn spread_over_resolutions() {
        let report = Report {
            rows: vec![
                row(16, "kmeans", "ami", vec![0.9]),
                row(32, "kmeans", "ami", vec![0.95]),
                row(32, "gmm", "ami", vec![0.1]),
            ],
        };
        assert!((report.spread("kmeans", "ami") - 0.05).abs() < 1e-12);
    }
}
