//! Training and prediction with a block-wise partition.
//!
//! A [`BpModel`] routes each test instance to one instance cluster with a
//! `q`-class one-vs-all router, then scores only the labels of the paired
//! label cluster. Every inner product is counted so the prediction cost can
//! be compared with scoring all `m` labels.

use std::io::{BufRead, BufWriter, Write};

use rayon::prelude::*;

use crate::bp::{fit_partition, search_q, BpConfig, QSetting};
use crate::codec::{encode_u64s, encode_usizes, Encode, Kind, Sections};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linear::{argmax_by_id, train_ova, InnerProductCounter, LinearModel, TrainConfig};
use crate::partition::Partition;
use crate::sparse::{BinaryLabelMatrix, SparseMatrix};

/// A multi-label learner that can be trained on one (instance cluster,
/// label cluster) pair.
pub trait BaseClassifier: Sync {
    /// Trains one scorer per column of `targets`; column `c` is reported as
    /// label `class_ids[c]`.
    fn train(
        &self,
        x: &SparseMatrix,
        targets: &BinaryLabelMatrix,
        class_ids: &[u32],
    ) -> Result<LinearModel>;
}

/// The built-in L2-regularized one-vs-all logistic regression.
#[derive(Debug, Clone, Default)]
pub struct OvaLogistic(pub TrainConfig);

impl BaseClassifier for OvaLogistic {
    fn train(
        &self,
        x: &SparseMatrix,
        targets: &BinaryLabelMatrix,
        class_ids: &[u32],
    ) -> Result<LinearModel> {
        train_ova(x, targets, class_ids, &self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpModel {
    router: LinearModel,
    cluster_models: Vec<LinearModel>,
    partition: Partition,
    train_label_counts: Vec<usize>,
    normalized_features: bool,
}

impl BpModel {
    pub fn new(
        router: LinearModel,
        cluster_models: Vec<LinearModel>,
        partition: Partition,
        train_label_counts: Vec<usize>,
    ) -> Result<Self> {
        if router.num_classes() != partition.q() || cluster_models.len() != partition.q() {
            return Err(Error::Structure(format!(
                "router has {} classes and there are {} cluster models for q = {}",
                router.num_classes(),
                cluster_models.len(),
                partition.q()
            )));
        }
        for (l, model) in cluster_models.iter().enumerate() {
            let mut ids = model.class_ids().to_vec();
            ids.sort_unstable();
            if ids != partition.label_clusters()[l] {
                return Err(Error::Structure(format!(
                    "cluster model {l} does not cover exactly its label cluster"
                )));
            }
            if model.num_features() != router.num_features() {
                return Err(Error::Dimension(format!(
                    "cluster model {l} has {} features, router has {}",
                    model.num_features(),
                    router.num_features()
                )));
            }
        }
        Ok(BpModel {
            router,
            cluster_models,
            partition,
            train_label_counts,
            normalized_features: false,
        })
    }

    pub fn router(&self) -> &LinearModel {
        &self.router
    }

    pub fn cluster_models(&self) -> &[LinearModel] {
        &self.cluster_models
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    /// Per-label positive counts over the full training set.
    pub fn train_label_counts(&self) -> &[usize] {
        &self.train_label_counts
    }

    pub fn num_labels(&self) -> usize {
        self.train_label_counts.len()
    }

    pub fn num_features(&self) -> usize {
        self.router.num_features()
    }

    /// Whether feature rows were scaled to unit L2 norm before training.
    pub fn normalized_features(&self) -> bool {
        self.normalized_features
    }

    pub fn set_normalized_features(&mut self, normalized: bool) {
        self.normalized_features = normalized;
    }
}

impl Encode for BpModel {
    const KIND: Kind = Kind::BpModel;

    fn encode_sections(&self) -> Vec<Vec<u8>> {
        let mut sections = vec![
            self.router.to_bytes(),
            self.partition.to_bytes(),
            encode_usizes(&self.train_label_counts),
            encode_u64s([self.normalized_features as u64]),
        ];
        sections.extend(self.cluster_models.iter().map(Encode::to_bytes));
        sections
    }

    fn decode_sections(sections: Vec<Vec<u8>>) -> Result<Self> {
        let mut s = Sections::new(sections, "model");
        let router = s.object::<LinearModel>()?;
        let partition = s.object::<Partition>()?;
        let counts = s.usizes()?;
        let normalized = s.scalar_u64()? != 0;
        let mut cluster_models = Vec::with_capacity(s.remaining());
        while s.remaining() > 0 {
            cluster_models.push(s.object::<LinearModel>()?);
        }
        s.finish()?;
        let mut model = BpModel::new(router, cluster_models, partition, counts)?;
        model.normalized_features = normalized;
        Ok(model)
    }
}

/// Ranked predictions and their cost.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionResult {
    pub top_labels: Vec<Vec<u32>>,
    pub scores: Vec<Vec<f64>>,
    /// Inner products spent on each instance, router included.
    pub mults_used: Vec<u64>,
    /// Cluster each instance was routed to; empty for the naive baseline.
    pub routes: Vec<u32>,
}

impl PredictionResult {
    pub fn num_instances(&self) -> usize {
        self.top_labels.len()
    }

    pub fn mean_mults(&self) -> f64 {
        if self.mults_used.is_empty() {
            return 0.0;
        }
        self.mults_used.iter().sum::<u64>() as f64 / self.mults_used.len() as f64
    }
}

/// Top `k` of `(label, score)` by descending score, ties to the smaller label.
pub(crate) fn top_k(scores: &[f64], ids: &[u32], k: usize) -> (Vec<u32>, Vec<f64>) {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(ids[a].cmp(&ids[b])));
    order.truncate(k);
    (
        order.iter().map(|&c| ids[c]).collect(),
        order.iter().map(|&c| scores[c]).collect(),
    )
}

fn resolve_partition(dataset: &Dataset, config: &BpConfig) -> Result<Partition> {
    match config.q {
        QSetting::Fixed(_) => fit_partition(dataset, config),
        QSetting::Auto { q_max } => Ok(search_q(dataset, config, q_max)?.partition),
    }
}

/// Fits a partition, then trains the router and one model per cluster with
/// the built-in logistic learner.
pub fn train_bp(dataset: &Dataset, bp: &BpConfig, train: &TrainConfig) -> Result<BpModel> {
    let partition = resolve_partition(dataset, bp)?;
    train_on_partition(dataset, partition, train, &OvaLogistic(train.clone()))
}

/// Trains the router (logistic, `router_config`) and per-cluster models
/// (`classifier`) for an existing partition.
pub fn train_on_partition<C: BaseClassifier>(
    dataset: &Dataset,
    partition: Partition,
    router_config: &TrainConfig,
    classifier: &C,
) -> Result<BpModel> {
    partition.check_dims(dataset.num_instances(), dataset.num_labels())?;
    let q = partition.q();
    let (x, y) = (dataset.features(), dataset.labels());

    let route_targets = BinaryLabelMatrix::from_rows(
        q,
        partition
            .instance_cluster_of()
            .iter()
            .map(|&c| vec![c])
            .collect(),
    )?;
    let router_ids: Vec<u32> = (0..q as u32).collect();
    let router = train_ova(x, &route_targets, &router_ids, router_config)?;

    let groups = partition.instance_clusters();
    let cluster_models = groups
        .par_iter()
        .zip(partition.label_clusters().par_iter())
        .map(|(rows, labels)| {
            let xl = x.select_rows(rows)?;
            let yl = y.select_rows(rows)?.restrict_columns(labels)?;
            classifier.train(&xl, &yl, labels)
        })
        .collect::<Result<Vec<_>>>()?;

    BpModel::new(router, cluster_models, partition, y.column_counts())
}

fn check_features(x: &SparseMatrix, expected: usize) -> Result<()> {
    if x.cols() != expected {
        return Err(Error::Dimension(format!(
            "test data has {} features, model expects {expected}",
            x.cols()
        )));
    }
    Ok(())
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    Ok(())
}

pub fn predict_bp(model: &BpModel, x: &SparseMatrix, k: usize) -> Result<PredictionResult> {
    predict_bp_counted(model, x, k, &InnerProductCounter::new())
}

/// [`predict_bp`], also adding every inner product to `counter`.
pub fn predict_bp_counted(
    model: &BpModel,
    x: &SparseMatrix,
    k: usize,
    counter: &InnerProductCounter,
) -> Result<PredictionResult> {
    check_k(k)?;
    check_features(x, model.num_features())?;
    let per_instance = (0..x.rows())
        .into_par_iter()
        .map(|i| {
            let row = x.row(i);
            let route_scores = model.router.score_counted(row, counter)?;
            let cluster = model.router.class_ids()
                [argmax_by_id(&route_scores, model.router.class_ids())];
            let cluster_model = &model.cluster_models[cluster as usize];
            let scores = cluster_model.score_counted(row, counter)?;
            let (labels, top) = top_k(&scores, cluster_model.class_ids(), k);
            let mults = (route_scores.len() + scores.len()) as u64;
            Ok((labels, top, mults, cluster))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = PredictionResult::default();
    for (labels, scores, mults, cluster) in per_instance {
        out.top_labels.push(labels);
        out.scores.push(scores);
        out.mults_used.push(mults);
        out.routes.push(cluster);
    }
    Ok(out)
}

/// One-vs-all over every label, the `O(m)` baseline.
pub fn train_naive(dataset: &Dataset, config: &TrainConfig) -> Result<LinearModel> {
    let ids: Vec<u32> = (0..dataset.num_labels() as u32).collect();
    train_ova(dataset.features(), dataset.labels(), &ids, config)
}

pub fn predict_naive(model: &LinearModel, x: &SparseMatrix, k: usize) -> Result<PredictionResult> {
    predict_naive_counted(model, x, k, &InnerProductCounter::new())
}

pub fn predict_naive_counted(
    model: &LinearModel,
    x: &SparseMatrix,
    k: usize,
    counter: &InnerProductCounter,
) -> Result<PredictionResult> {
    check_k(k)?;
    check_features(x, model.num_features())?;
    let per_instance = (0..x.rows())
        .into_par_iter()
        .map(|i| {
            let scores = model.score_counted(x.row(i), counter)?;
            let (labels, top) = top_k(&scores, model.class_ids(), k);
            Ok((labels, top, scores.len() as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = PredictionResult::default();
    for (labels, scores, mults) in per_instance {
        out.top_labels.push(labels);
        out.scores.push(scores);
        out.mults_used.push(mults);
    }
    Ok(out)
}

/// One line per instance of space-separated `label:score` pairs.
pub fn write_predictions<W: Write>(result: &PredictionResult, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for (labels, scores) in result.top_labels.iter().zip(&result.scores) {
        for (pos, (label, score)) in labels.iter().zip(scores).enumerate() {
            if pos > 0 {
                w.write_all(b" ")?;
            }
            write!(w, "{label}:{score}")?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// `instance,mults_used` CSV.
pub fn write_mults_csv<W: Write>(result: &PredictionResult, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "instance,mults_used")?;
    for (i, m) in result.mults_used.iter().enumerate() {
        writeln!(w, "{i},{m}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads predictions written by [`write_predictions`]; scores are kept.
pub fn read_predictions<R: BufRead>(reader: R) -> Result<(Vec<Vec<u32>>, Vec<Vec<f64>>)> {
    let mut labels = Vec::new();
    let mut scores = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let (mut ls, mut ss) = (Vec::new(), Vec::new());
        for tok in line.split_whitespace() {
            let (l, s) = tok
                .split_once(':')
                .ok_or_else(|| Error::parse(k + 1, format!("expected label:score, got {tok:?}")))?;
            ls.push(l.parse().map_err(|_| Error::parse(k + 1, format!("bad label {l:?}")))?);
            ss.push(s.parse().map_err(|_| Error::parse(k + 1, format!("bad score {s:?}")))?);
        }
        labels.push(ls);
        scores.push(ss);
    }
    Ok((labels, scores))
}

pub fn read_mults_csv<R: BufRead>(reader: R) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        if k == 0 {
            if line.trim() != "instance,mults_used" {
                return Err(Error::parse(1, "expected header instance,mults_used"));
            }
            continue;
        }
        let value = line
            .split(',')
            .nth(1)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::parse(k + 1, format!("bad mults row {line:?}")))?;
        out.push(value);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        let x = SparseMatrix::from_rows(
            2,
            vec![
                vec![(0, 1.0)],
                vec![(0, 0.9)],
                vec![(1, 1.0)],
                vec![(1, 0.8)],
            ],
        )
        .unwrap();
        let y = BinaryLabelMatrix::from_rows(3, vec![vec![0], vec![0, 1], vec![2], vec![2]])
            .unwrap();
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn top_k_orders_and_breaks_ties() {
        let (labels, scores) = top_k(&[0.5, 2.0, 0.5, -1.0], &[9, 3, 4, 1], 3);
        assert_eq!(labels, vec![3, 4, 9]);
        assert_eq!(scores, vec![2.0, 0.5, 0.5]);
        let (labels, _) = top_k(&[1.0, 2.0], &[0, 1], 5);
        assert_eq!(labels, vec![1, 0]);
    }

    #[test]
    fn cluster_models_cover_label_clusters() {
        let d = toy();
        let model = train_bp(&d, &BpConfig::with_q(2, 0.1), &TrainConfig::default()).unwrap();
        for (l, cm) in model.cluster_models().iter().enumerate() {
            let mut ids = cm.class_ids().to_vec();
            ids.sort_unstable();
            assert_eq!(ids, model.partition().label_clusters()[l]);
        }
        assert_eq!(model.train_label_counts(), &[2, 1, 2]);
        assert_eq!(BpModel::from_bytes(&model.to_bytes()).unwrap(), model);
    }

    #[test]
    fn mults_count_router_plus_cluster() {
        let d = toy();
        let model = train_bp(&d, &BpConfig::with_q(2, 0.1), &TrainConfig::default()).unwrap();
        let counter = InnerProductCounter::new();
        let result = predict_bp_counted(&model, d.features(), 1, &counter).unwrap();
        for (i, &m) in result.mults_used.iter().enumerate() {
            let l = result.routes[i] as usize;
            assert_eq!(m as usize, 2 + model.partition().label_clusters()[l].len());
        }
        assert_eq!(counter.get(), result.mults_used.iter().sum::<u64>());
    }

    #[test]
    fn k_beyond_cluster_size_returns_cluster() {
        let d = toy();
        let model = train_bp(&d, &BpConfig::with_q(1, 0.0), &TrainConfig::default()).unwrap();
        let result = predict_bp(&model, d.features(), 10).unwrap();
        assert!(result.top_labels.iter().all(|l| l.len() == 3));
        assert!(predict_bp(&model, d.features(), 0).is_err());
        let wide = SparseMatrix::zeros(1, 5);
        assert!(matches!(predict_bp(&model, &wide, 1), Err(Error::Dimension(_))));
    }

    #[test]
    fn naive_baseline_costs_m() {
        let d = toy();
        let model = train_naive(&d, &TrainConfig::default()).unwrap();
        assert_eq!(model.num_classes(), 3);
        let result = predict_naive(&model, d.features(), 2).unwrap();
        assert!(result.mults_used.iter().all(|&m| m == 3));
    }

    #[test]
    fn prediction_files_round_trip() {
        let result = PredictionResult {
            top_labels: vec![vec![3, 1], vec![]],
            scores: vec![vec![0.25, -1.5], vec![]],
            mults_used: vec![7, 7],
            routes: vec![],
        };
        let mut text = Vec::new();
        write_predictions(&result, &mut text).unwrap();
        assert_eq!(String::from_utf8(text.clone()).unwrap(), "3:0.25 1:-1.5\n\n");
        let (labels, scores) = read_predictions(text.as_slice()).unwrap();
        assert_eq!(labels, result.top_labels);
        assert_eq!(scores, result.scores);
        let mut csv = Vec::new();
        write_mults_csv(&result, &mut csv).unwrap();
        assert_eq!(read_mults_csv(csv.as_slice()).unwrap(), vec![7, 7]);
    }
}
