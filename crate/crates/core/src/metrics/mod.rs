//! Chance-adjusted partition agreement: ARI and AMI from a contingency table.

mod protocol;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::exact_sum;

pub use protocol::{eval_protocol, pixel_matrix, ProtocolConfig, Report, ReportRow, Split, PIXEL_BASELINE};

/// Cross-tabulation of two labelings over the same samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contingency {
    /// `rows x cols`, row-major.
    pub table: Vec<u64>,
    pub rows: usize,
    pub cols: usize,
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    pub n: u64,
}

fn dense<L: Ord + Clone>(labels: &[L]) -> (Vec<usize>, usize) {
    let mut ids = BTreeMap::new();
    for l in labels {
        let next = ids.len();
        ids.entry(l.clone()).or_insert(next);
    }
    (labels.iter().map(|l| ids[l]).collect(), ids.len())
}

impl Contingency {
    pub fn new<A: Ord + Clone, B: Ord + Clone>(truth: &[A], pred: &[B]) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::Dimension(format!(
                "labelings have lengths {} and {}",
                truth.len(),
                pred.len()
            )));
        }
        let (t, rows) = dense(truth);
        let (p, cols) = dense(pred);
        let mut table = vec![0u64; rows * cols];
        for (&i, &j) in t.iter().zip(&p) {
            table[i * cols + j] += 1;
        }
        let row_sums = (0..rows).map(|i| table[i * cols..(i + 1) * cols].iter().sum()).collect();
        let col_sums = (0..cols).map(|j| (0..rows).map(|i| table[i * cols + j]).sum()).collect();
        Ok(Self {
            table,
            rows,
            cols,
            row_sums,
            col_sums,
            n: truth.len() as u64,
        })
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.table[i * self.cols + j]
    }

    /// Both labelings induce the same set partition.
    pub fn is_identity(&self) -> bool {
        self.rows == self.cols
            && self
                .table
                .iter()
                .filter(|&&c| c > 0)
                .count()
                == self.rows
    }
}

fn pairs(x: u64) -> u128 {
    let x = x as u128;
    x * x.saturating_sub(1) / 2
}

/// Adjusted Rand index (Hubert and Arabie).
pub fn ari<A: Ord + Clone, B: Ord + Clone>(truth: &[A], pred: &[B]) -> Result<f64> {
    if truth.len() < 2 {
        return Err(Error::InvalidArgument("ARI needs at least two samples".into()));
    }
    let c = Contingency::new(truth, pred)?;
    Ok(ari_from_table(&c))
}

pub fn ari_from_table(c: &Contingency) -> f64 {
    let index: u128 = c.table.iter().map(|&v| pairs(v)).sum();
    let sa: u128 = c.row_sums.iter().map(|&v| pairs(v)).sum();
    let sb: u128 = c.col_sums.iter().map(|&v| pairs(v)).sum();
    let total = pairs(c.n);
    // Scaled by 2 C(n, 2) so everything stays integral.
    let num = 2 * (index * total) as i128 - 2 * (sa * sb) as i128;
    let den = ((sa + sb) * total) as i128 - 2 * (sa * sb) as i128;
    if den == 0 {
        return if c.is_identity() { 1.0 } else { 0.0 };
    }
    num as f64 / den as f64
}

/// Entropy normalizer used by AMI.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AmiNormalizer {
    #[default]
    Arithmetic,
    Max,
}

fn entropy(sums: &[u64], n: u64) -> f64 {
    let n = n as f64;
    -exact_sum(sums.iter().filter(|&&a| a > 0).map(|&a| {
        let p = a as f64 / n;
        p * p.ln()
    }))
}

fn mutual_info(c: &Contingency) -> f64 {
    let n = c.n as f64;
    let mut terms = Vec::new();
    for i in 0..c.rows {
        for j in 0..c.cols {
            let nij = c.get(i, j);
            if nij > 0 {
                let ab = c.row_sums[i] as f64 * c.col_sums[j] as f64;
                terms.push(nij as f64 / n * (n * nij as f64 / ab).ln());
            }
        }
    }
    exact_sum(terms).max(0.0)
}

/// `ln k!` for `k = 0..=n`.
fn log_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for k in 2..=n {
        out[k] = out[k - 1] + (k as f64).ln();
    }
    out
}

/// Expected mutual information under the permutation (hypergeometric) model
/// with the observed marginals held fixed.
pub fn expected_mutual_info(c: &Contingency) -> f64 {
    let n = c.n;
    if n == 0 {
        return 0.0;
    }
    let lf = log_factorials(n as usize);
    let nf = n as f64;
    let mut terms = Vec::new();
    for &a in &c.row_sums {
        for &b in &c.col_sums {
            let lo = (a + b).saturating_sub(n).max(1);
            let hi = a.min(b);
            for nij in lo..=hi {
                let log_p = exact_sum([
                    lf[a as usize],
                    lf[b as usize],
                    lf[(n - a) as usize],
                    lf[(n - b) as usize],
                    -lf[n as usize],
                    -lf[nij as usize],
                    -lf[(a - nij) as usize],
                    -lf[(b - nij) as usize],
                    -lf[(n + nij - a - b) as usize],
                ]);
                let x = nij as f64;
                terms.push(x / nf * (nf * x / (a as f64 * b as f64)).ln() * log_p.exp());
            }
        }
    }
    exact_sum(terms)
}

/// Adjusted mutual information with the arithmetic-mean normalizer.
pub fn ami<A: Ord + Clone, B: Ord + Clone>(truth: &[A], pred: &[B]) -> Result<f64> {
    ami_with(truth, pred, AmiNormalizer::Arithmetic)
}

pub fn ami_with<A: Ord + Clone, B: Ord + Clone>(truth: &[A], pred: &[B], norm: AmiNormalizer) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::InvalidArgument("AMI needs at least one sample".into()));
    }
    let c = Contingency::new(truth, pred)?;
    Ok(ami_from_table(&c, norm))
}

pub fn ami_from_table(c: &Contingency, norm: AmiNormalizer) -> f64 {
    if c.is_identity() {
        return 1.0;
    }
    let hu = entropy(&c.row_sums, c.n);
    let hv = entropy(&c.col_sums, c.n);
    let mi = mutual_info(c);
    let emi = expected_mutual_info(c);
    let h = match norm {
        AmiNormalizer::Arithmetic => 0.5 * (hu + hv),
        AmiNormalizer::Max => hu.max(hv),
    };
    let den = h - emi;
    if den.abs() <= 1e-12 * h.max(1.0) {
        return 0.0;
    }
    (mi - emi) / den
}

/// ARI and AMI of a predicted partition against labels.
pub fn score(truth: &[u32], pred: &[usize]) -> Result<(f64, f64)> {
    Ok((ami(truth, pred)?, ari(truth, pred)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ari_worked_cases() {
        assert_eq!(ari(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(ari(&[0, 0, 1, 1], &[0, 0, 0, 0]).unwrap(), 0.0);
        assert_eq!(ari(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), -0.5);
        assert_eq!(ari(&[3, 3, 3], &[1, 1, 1]).unwrap(), 1.0);
        assert!(ari(&[0], &[0]).is_err());
        assert!(ari(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn ami_identity_and_relabeling() {
        assert_eq!(ami(&[0, 0, 1, 1, 2], &[0, 0, 1, 1, 2]).unwrap(), 1.0);
        assert_eq!(ami(&[0, 0, 1, 1, 2], &[7, 7, 4, 4, 9]).unwrap(), 1.0);
        assert_eq!(ami(&[5, 5, 5], &[1, 1, 1]).unwrap(), 1.0);
        assert_eq!(ami(&[0], &[0]).unwrap(), 1.0);
        assert_eq!(ami(&[0, 0, 1, 1], &[0, 0, 0, 0]).unwrap(), 0.0);
        assert!(ami::<u32, u32>(&[], &[]).is_err());
    }

    #[test]
    fn ami_all_singletons_vs_other() {
        let a: Vec<usize> = (0..6).collect();
        assert_eq!(ami(&a, &a).unwrap(), 1.0);
        let b = [0, 0, 1, 1, 2, 2];
        let v = ami(&a, &b).unwrap();
        assert!(v.abs() < 1e-9, "{v}");
    }

    #[test]
    fn metrics_are_symmetric() {
        let a = [0, 1, 1, 2, 2, 2, 0, 1, 3];
        let b = [1, 1, 0, 0, 2, 2, 2, 1, 1];
        assert_eq!(ami(&a, &b).unwrap(), ami(&b, &a).unwrap());
        assert_eq!(ari(&a, &b).unwrap(), ari(&b, &a).unwrap());
        assert_eq!(
            ami_with(&a, &b, AmiNormalizer::Max).unwrap(),
            ami_with(&b, &a, AmiNormalizer::Max).unwrap()
        );
    }

    #[test]
    fn max_normalizer_is_not_larger() {
        let a = [0, 0, 0, 1, 1, 1, 2, 2, 2, 2];
        let b = [0, 0, 1, 1, 1, 1, 2, 2, 0, 2];
        let mean = ami(&a, &b).unwrap();
        let max = ami_with(&a, &b, AmiNormalizer::Max).unwrap();
        assert!(max <= mean + 1e-12);
    }

    #[test]
    fn expected_mi_is_zero_for_trivial_marginals() {
        let c = Contingency::new(&[0, 0, 0, 0], &[0, 1, 2, 3]).unwrap();
        assert!(expected_mutual_info(&c).abs() < 1e-15);
        assert_eq!(c.n, 4);
        assert_eq!(c.row_sums, vec![4]);
    }
}
