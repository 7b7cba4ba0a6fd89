//! Cross-validated choice of the label-penalty weight.

use std::io::Write;

use rayon::prelude::*;

use crate::bp::BpConfig;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::ingest::kfold_split;
use crate::linear::TrainConfig;
use crate::metrics::{precision_at_k, speedup};
use crate::pipeline::{predict_bp, train_bp};

/// Thirteen log-spaced values from `1e-3` to `1e3`.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..13).map(|i| 10f64.powf(-3.0 + 0.5 * i as f64)).collect()
}

#[derive(Debug, Clone)]
pub struct LambdaSearchConfig {
    /// Accepted relative accuracy loss against the best candidate of a fold.
    pub tolerance: f64,
    pub folds: usize,
    /// Accuracy is P@k on the validation fold.
    pub k: usize,
    pub seed: u64,
    /// Template for partitioning; its `lambda` is overwritten.
    pub bp: BpConfig,
    pub train: TrainConfig,
}

impl Default for LambdaSearchConfig {
    fn default() -> Self {
        LambdaSearchConfig {
            tolerance: 0.02,
            folds: 5,
            k: 1,
            seed: 0,
            bp: BpConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaRow {
    pub fold: usize,
    pub lambda: f64,
    pub accuracy: f64,
    pub speedup: f64,
}

#[derive(Debug, Clone)]
pub struct FoldInterval {
    pub fold: usize,
    pub best_accuracy: f64,
    /// Candidates within tolerance of the best, ascending.
    pub accepted: Vec<f64>,
}

impl FoldInterval {
    /// Smallest and largest accepted candidate.
    pub fn range(&self) -> (f64, f64) {
        (self.accepted[0], *self.accepted.last().expect("best is always accepted"))
    }
}

#[derive(Debug, Clone)]
pub struct LambdaSelection {
    pub per_fold: Vec<FoldInterval>,
    /// Candidates accepted in every fold, ascending; never empty.
    pub intersection: Vec<f64>,
    pub table: Vec<LambdaRow>,
}

impl LambdaSelection {
    /// Largest common candidate: smallest label clusters, fastest prediction.
    pub fn speed_driven(&self) -> f64 {
        *self.intersection.last().expect("non-empty")
    }

    /// Common candidate with the best mean validation accuracy (ties to the
    /// smaller value).
    pub fn accuracy_driven(&self) -> f64 {
        let mut best = (self.intersection[0], f64::NEG_INFINITY);
        for &lambda in &self.intersection {
            let accs: Vec<f64> = self
                .table
                .iter()
                .filter(|r| r.lambda == lambda)
                .map(|r| r.accuracy)
                .collect();
            let mean = accs.iter().sum::<f64>() / accs.len() as f64;
            if mean > best.1 {
                best = (lambda, mean);
            }
        }
        best.0
    }

    /// Per-fold rows as `fold,lambda,accuracy,speedup`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "fold,lambda,accuracy,speedup")?;
        for r in &self.table {
            writeln!(w, "{},{},{},{}", r.fold, r.lambda, r.accuracy, r.speedup)?;
        }
        Ok(())
    }
}

fn accepted(best: f64, accuracy: f64, tolerance: f64) -> bool {
    best - accuracy <= tolerance * best + 1e-12
}

fn intersect(candidates: &[f64], per_fold: &[FoldInterval]) -> Vec<f64> {
    candidates
        .iter()
        .copied()
        .filter(|l| per_fold.iter().all(|f| f.accepted.contains(l)))
        .collect()
}

/// Runs partition, training and prediction for every candidate on every
/// fold and intersects the per-fold sets of near-best candidates.
pub fn select_lambda(
    dataset: &Dataset,
    candidates: &[f64],
    config: &LambdaSearchConfig,
) -> Result<LambdaSelection> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no lambda candidates".into()));
    }
    if candidates.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument(
            "lambda candidates must be strictly ascending".into(),
        ));
    }
    if !(config.tolerance >= 0.0) {
        return Err(Error::InvalidArgument("tolerance must be nonnegative".into()));
    }
    let folds = kfold_split(dataset, config.folds, config.seed)?;
    let m = dataset.num_labels() as u64;

    let jobs: Vec<(usize, f64)> = (0..folds.len())
        .flat_map(|f| candidates.iter().map(move |&l| (f, l)))
        .collect();
    let table = jobs
        .par_iter()
        .map(|&(f, lambda)| {
            let fold = &folds[f];
            let bp = BpConfig {
                lambda,
                ..config.bp.clone()
            };
            let model = train_bp(&fold.train, &bp, &config.train)?;
            let result = predict_bp(&model, fold.validation.features(), config.k)?;
            Ok(LambdaRow {
                fold: f,
                lambda,
                accuracy: precision_at_k(fold.validation.labels(), &result.top_labels, config.k)?,
                speedup: speedup(&result.mults_used, m)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let per_fold: Vec<FoldInterval> = (0..folds.len())
        .map(|f| {
            let rows: Vec<&LambdaRow> = table.iter().filter(|r| r.fold == f).collect();
            let best = rows.iter().map(|r| r.accuracy).fold(f64::NEG_INFINITY, f64::max);
            FoldInterval {
                fold: f,
                best_accuracy: best,
                accepted: rows
                    .iter()
                    .filter(|r| accepted(best, r.accuracy, config.tolerance))
                    .map(|r| r.lambda)
                    .collect(),
            }
        })
        .collect();

    let intersection = intersect(candidates, &per_fold);
    if intersection.is_empty() {
        let detail: Vec<String> = per_fold
            .iter()
            .map(|f| {
                let (lo, hi) = f.range();
                format!("fold {}: [{lo}, {hi}]", f.fold)
            })
            .collect();
        return Err(Error::Optimization(format!(
            "no lambda is within tolerance on every fold ({}); widen the candidate grid or raise the tolerance",
            detail.join("; ")
        )));
    }
    Ok(LambdaSelection {
        per_fold,
        intersection,
        table,
    })
}
