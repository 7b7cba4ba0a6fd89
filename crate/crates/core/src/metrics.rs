//! Ranking metrics: P@k, R@k, propensity-scored P@k, and prediction speedup.

use std::io::Write;

use crate::error::{Error, Result};
use crate::sparse::BinaryLabelMatrix;

/// Parameters of the label propensity model `p_j = 1 / (1 + c (N_j + b)^(−a))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropensityParams {
    pub a: f64,
    pub b: f64,
}

impl Default for PropensityParams {
    fn default() -> Self {
        PropensityParams { a: 0.55, b: 1.5 }
    }
}

fn check_aligned(truth: &BinaryLabelMatrix, predictions: &[Vec<u32>], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if truth.rows() != predictions.len() {
        return Err(Error::Dimension(format!(
            "{} truth rows but {} prediction rows",
            truth.rows(),
            predictions.len()
        )));
    }
    Ok(())
}

fn hits<'a>(truth: &'a BinaryLabelMatrix, i: usize, ranked: &[u32], k: usize) -> impl Iterator<Item = u32> + 'a {
    let top: Vec<u32> = ranked.iter().take(k).copied().collect();
    top.into_iter().filter(move |&j| truth.contains(i, j))
}

/// Mean over instances of `|top-k ∩ truth| / k`; missing slots count as misses.
pub fn precision_at_k(truth: &BinaryLabelMatrix, predictions: &[Vec<u32>], k: usize) -> Result<f64> {
    check_aligned(truth, predictions, k)?;
    if predictions.is_empty() {
        return Ok(0.0);
    }
    let total: usize = predictions
        .iter()
        .enumerate()
        .map(|(i, p)| hits(truth, i, p, k).count())
        .sum();
    Ok(total as f64 / (k * predictions.len()) as f64)
}

/// Mean over labelled instances of `|top-k ∩ truth| / |truth|`.
pub fn recall_at_k(truth: &BinaryLabelMatrix, predictions: &[Vec<u32>], k: usize) -> Result<f64> {
    check_aligned(truth, predictions, k)?;
    let mut sum = 0.0;
    let mut labelled = 0usize;
    for (i, p) in predictions.iter().enumerate() {
        let size = truth.row(i).len();
        if size == 0 {
            continue;
        }
        labelled += 1;
        sum += hits(truth, i, p, k).count() as f64 / size as f64;
    }
    if labelled == 0 {
        return Err(Error::InvalidArgument("recall undefined: no labelled rows".into()));
    }
    Ok(sum / labelled as f64)
}

/// Propensity of every label from its training frequency.
pub fn label_propensities(
    train_label_counts: &[usize],
    n_train: usize,
    params: PropensityParams,
) -> Result<Vec<f64>> {
    let PropensityParams { a, b } = params;
    if !(a > 0.0 && a < 1.0) || !(b > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "propensity parameters need 0 < a < 1 and b > 0, got a = {a}, b = {b}"
        )));
    }
    let ln_n = (n_train as f64).ln();
    if n_train < 2 || ln_n < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "propensity model needs ln(n) >= 1, got n = {n_train}"
        )));
    }
    let c = (ln_n - 1.0) * (b + 1.0).powf(a);
    Ok(train_label_counts
        .iter()
        .map(|&count| 1.0 / (1.0 + c * (-a * (count as f64 + b).ln()).exp()))
        .collect())
}

/// Unnormalized propensity-scored precision:
/// mean over instances of `(1/k) Σ_{j ∈ top-k} y_ij / p_j`.
pub fn psp_at_k(
    truth: &BinaryLabelMatrix,
    predictions: &[Vec<u32>],
    propensities: &[f64],
    k: usize,
) -> Result<f64> {
    check_aligned(truth, predictions, k)?;
    if propensities.len() != truth.cols() {
        return Err(Error::Dimension(format!(
            "{} propensities for {} labels",
            propensities.len(),
            truth.cols()
        )));
    }
    if let Some(j) = propensities.iter().position(|&p| !(p > 0.0 && p <= 1.0)) {
        return Err(Error::InvalidArgument(format!(
            "propensity of label {j} is {}, must lie in (0, 1]",
            propensities[j]
        )));
    }
    if predictions.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = predictions
        .iter()
        .enumerate()
        .map(|(i, p)| hits(truth, i, p, k).map(|j| 1.0 / propensities[j as usize]).sum::<f64>())
        .sum();
    Ok(total / (k * predictions.len()) as f64)
}

/// `naive_cost_per_instance / mean(mults_used)`.
pub fn speedup(mults_used: &[u64], naive_cost_per_instance: u64) -> Result<f64> {
    if mults_used.is_empty() {
        return Err(Error::InvalidArgument("speedup of an empty prediction set".into()));
    }
    let mean = mults_used.iter().sum::<u64>() as f64 / mults_used.len() as f64;
    Ok(naive_cost_per_instance as f64 / mean)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub metric: &'static str,
    pub k: usize,
    pub value: f64,
}

/// P@k, PSP@k and R@k for each `k`, plus speedup when costs are given.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub rows: Vec<MetricRow>,
    pub speedup: Option<f64>,
}

impl EvalReport {
    pub fn compute(
        truth: &BinaryLabelMatrix,
        predictions: &[Vec<u32>],
        propensities: &[f64],
        ks: &[usize],
        cost: Option<(&[u64], u64)>,
    ) -> Result<Self> {
        let mut rows = Vec::new();
        for &k in ks {
            rows.push(MetricRow {
                metric: "P",
                k,
                value: precision_at_k(truth, predictions, k)?,
            });
        }
        for &k in ks {
            rows.push(MetricRow {
                metric: "PSP",
                k,
                value: psp_at_k(truth, predictions, propensities, k)?,
            });
        }
        if truth.nnz() > 0 {
            for &k in ks {
                rows.push(MetricRow {
                    metric: "R",
                    k,
                    value: recall_at_k(truth, predictions, k)?,
                });
            }
        }
        let speedup = cost.map(|(mults, naive)| speedup(mults, naive)).transpose()?;
        Ok(EvalReport { rows, speedup })
    }

    pub fn get(&self, metric: &str, k: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.metric == metric && r.k == k)
            .map(|r| r.value)
    }

    /// `metric,k,value` CSV; speedup is written at full precision with k empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "metric,k,value")?;
        for row in &self.rows {
            writeln!(w, "{},{},{}", row.metric, row.k, row.value)?;
        }
        if let Some(s) = self.speedup {
            writeln!(w, "speedup,,{s}")?;
        }
        Ok(())
    }

    /// One-line table: P@1/3/5, PSP@1/3/5 (percent) and rounded speedup.
    pub fn summary_table(&self) -> String {
        let mut header = String::new();
        let mut values = String::new();
        for metric in ["P", "PSP"] {
            for k in [1, 3, 5] {
                header.push_str(&format!("{:>8}", format!("{metric}@{k}")));
                match self.get(metric, k) {
                    Some(v) => values.push_str(&format!("{:>8.2}", 100.0 * v)),
                    None => values.push_str(&format!("{:>8}", "-")),
                }
            }
        }
        header.push_str(&format!("{:>10}", "Speed-up"));
        match self.speedup {
            Some(s) => values.push_str(&format!("{:>10}", format!("{}x", s.round() as i64))),
            None => values.push_str(&format!("{:>10}", "-")),
        }
        format!("{header}\n{values}\n")
    }
}
