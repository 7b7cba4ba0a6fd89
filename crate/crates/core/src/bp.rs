//! Block-wise partitioning: joint clustering of instances and labels.
//!
//! The objective for `q` paired clusters is
//!
//! ```text
//! f = −#{ (i, j) : y_ij = 1 and j ∈ L(cluster(i)) } + λ · Σ_l |L_l|²
//! ```
//!
//! It is minimized by alternating two exact block updates, starting from a
//! k-means clustering of the feature rows:
//!
//! * label step: with instance clusters fixed, each label cluster is the
//!   best prefix of that cluster's labels sorted by in-cluster frequency;
//! * instance step: with label clusters fixed, each instance moves to the
//!   cluster whose label set covers most of its labels.
//!
//! Neither step can increase `f`, so the recorded objective trace is
//! nonincreasing.

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kmeans::init_instance_clusters;
use crate::partition::{members, Partition};
use crate::sparse::BinaryLabelMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QSetting {
    Fixed(usize),
    /// Pick `q` with [`search_q`] over `2..=q_max`.
    Auto { q_max: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpConfig {
    pub lambda: f64,
    pub q: QSetting,
    pub max_alt_iters: usize,
    pub conv_tol: f64,
    pub min_labels_per_cluster: usize,
    pub seed: u64,
}

impl Default for BpConfig {
    fn default() -> Self {
        BpConfig {
            lambda: 1.0,
            q: QSetting::Auto { q_max: 8 },
            max_alt_iters: 100,
            conv_tol: 1e-5,
            min_labels_per_cluster: 1,
            seed: 0,
        }
    }
}

impl BpConfig {
    pub fn with_q(q: usize, lambda: f64) -> Self {
        BpConfig {
            q: QSetting::Fixed(q),
            lambda,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        if !(self.conv_tol > 0.0) {
            return Err(Error::InvalidArgument("conv_tol must be positive".into()));
        }
        match self.q {
            QSetting::Fixed(0) => Err(Error::InvalidArgument("q must be at least 1".into())),
            QSetting::Auto { q_max } if q_max < 2 => {
                Err(Error::InvalidArgument("q search needs q_max >= 2".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Value of the objective together with its two terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub captured_ones: u64,
    pub penalty: f64,
    pub f: f64,
}

impl ObjectiveValue {
    fn new(captured_ones: u64, squared_sizes: u64, lambda: f64) -> Self {
        let penalty = lambda * squared_sizes as f64;
        ObjectiveValue {
            captured_ones,
            penalty,
            f: -(captured_ones as f64) + penalty,
        }
    }
}

struct Membership {
    words: usize,
    bits: Vec<u64>,
}

impl Membership {
    fn new(label_clusters: &[Vec<u32>], m: usize) -> Self {
        let words = m.div_ceil(64).max(1);
        let mut bits = vec![0u64; words * label_clusters.len()];
        for (l, labels) in label_clusters.iter().enumerate() {
            for &j in labels {
                bits[l * words + j as usize / 64] |= 1 << (j % 64);
            }
        }
        Membership { words, bits }
    }

    fn contains(&self, cluster: usize, label: u32) -> bool {
        self.bits[cluster * self.words + label as usize / 64] >> (label % 64) & 1 == 1
    }
}

fn check_clusters(label_clusters: &[Vec<u32>], m: usize) -> Result<()> {
    for (l, labels) in label_clusters.iter().enumerate() {
        if let Some(&j) = labels.iter().find(|&&j| j as usize >= m) {
            return Err(Error::Dimension(format!(
                "label cluster {l} holds label {j}, data has {m} labels"
            )));
        }
    }
    Ok(())
}

fn check_assignment(assignment: &[u32], n: usize, q: usize) -> Result<()> {
    if assignment.len() != n {
        return Err(Error::Dimension(format!(
            "assignment covers {} instances, data has {n}",
            assignment.len()
        )));
    }
    if let Some(i) = assignment.iter().position(|&c| c as usize >= q) {
        return Err(Error::Structure(format!(
            "instance {i} assigned to cluster {} but q = {q}",
            assignment[i]
        )));
    }
    Ok(())
}

/// Objective of an arbitrary (assignment, label clusters) pair.
pub fn objective_parts(
    y: &BinaryLabelMatrix,
    assignment: &[u32],
    label_clusters: &[Vec<u32>],
    lambda: f64,
) -> Result<ObjectiveValue> {
    check_assignment(assignment, y.rows(), label_clusters.len().max(1))?;
    check_clusters(label_clusters, y.cols())?;
    let squared: u64 = label_clusters.iter().map(|l| (l.len() as u64).pow(2)).sum();
    if label_clusters.is_empty() {
        return Ok(ObjectiveValue::new(0, 0, lambda));
    }
    let membership = Membership::new(label_clusters, y.cols());
    let captured: u64 = (0..y.rows())
        .into_par_iter()
        .map(|i| {
            let c = assignment[i] as usize;
            y.row(i).iter().filter(|&&j| membership.contains(c, j)).count() as u64
        })
        .sum();
    Ok(ObjectiveValue::new(captured, squared, lambda))
}

pub fn objective(y: &BinaryLabelMatrix, partition: &Partition) -> Result<ObjectiveValue> {
    objective_parts(
        y,
        partition.instance_cluster_of(),
        partition.label_clusters(),
        partition.lambda(),
    )
}

/// Labels ordered by count descending, ties by ascending label index.
pub fn order_by_count(counts: &[usize]) -> Vec<u32> {
    let mut order: Vec<u32> = (0..counts.len() as u32).collect();
    order.sort_unstable_by(|&a, &b| counts[b as usize].cmp(&counts[a as usize]).then(a.cmp(&b)));
    order
}

/// Size of the best prefix of counts sorted in descending order.
///
/// Adding the `(J+1)`-th label changes the cluster objective by
/// `−P_(J+1) + λ(2J + 1)`, which is nondecreasing in `J`; the scan stops at
/// the first label that does not strictly improve it. The result is clamped
/// to `[min_labels, len]`.
pub fn best_prefix_len(sorted_counts: &[usize], lambda: f64, min_labels: usize) -> usize {
    let mut size = 0;
    while size < sorted_counts.len()
        && -(sorted_counts[size] as f64) + lambda * ((2 * size + 1) as f64) < 0.0
    {
        size += 1;
    }
    size.max(min_labels).min(sorted_counts.len())
}

/// Best label cluster for one instance cluster given its per-label counts.
pub fn select_labels_for_counts(counts: &[usize], lambda: f64, min_labels: usize) -> Vec<u32> {
    select_in_order(counts, &order_by_count(counts), lambda, min_labels)
}

/// `order` must list labels by nonincreasing count.
fn select_in_order(counts: &[usize], order: &[u32], lambda: f64, min_labels: usize) -> Vec<u32> {
    let sorted: Vec<usize> = order.iter().map(|&j| counts[j as usize]).collect();
    let size = best_prefix_len(&sorted, lambda, min_labels);
    let mut chosen = order[..size].to_vec();
    chosen.sort_unstable();
    chosen
}

/// Label step: the optimal label cluster for every instance cluster.
pub fn select_label_clusters(
    y: &BinaryLabelMatrix,
    assignment: &[u32],
    q: usize,
    lambda: f64,
    min_labels: usize,
) -> Result<Vec<Vec<u32>>> {
    if q == 0 {
        return Err(Error::InvalidArgument("q must be at least 1".into()));
    }
    check_assignment(assignment, y.rows(), q)?;
    let groups = members(assignment, q);
    let global_order = order_by_count(&y.column_counts());
    groups
        .par_iter()
        .map(|rows| {
            let counts = y.column_sums(rows)?;
            if rows.is_empty() {
                // all counts are zero; pad with the most frequent labels overall
                Ok(select_in_order(&counts, &global_order, lambda, min_labels))
            } else {
                Ok(select_labels_for_counts(&counts, lambda, min_labels))
            }
        })
        .collect()
}

/// Instance step: move each instance to the cluster covering most of its
/// labels (smallest cluster index on ties). Instances whose labels meet no
/// cluster keep their entry in `previous`.
pub fn select_instance_clusters(
    y: &BinaryLabelMatrix,
    label_clusters: &[Vec<u32>],
    previous: &[u32],
) -> Result<Vec<u32>> {
    let q = label_clusters.len();
    if q == 0 {
        return Err(Error::InvalidArgument("need at least one label cluster".into()));
    }
    check_assignment(previous, y.rows(), q)?;
    check_clusters(label_clusters, y.cols())?;
    // label -> clusters containing it, in CSR form
    let mut offsets = vec![0usize; y.cols() + 1];
    for labels in label_clusters {
        for &j in labels {
            offsets[j as usize + 1] += 1;
        }
    }
    for j in 0..y.cols() {
        offsets[j + 1] += offsets[j];
    }
    let mut fill = offsets.clone();
    let mut owners = vec![0u32; offsets[y.cols()]];
    for (l, labels) in label_clusters.iter().enumerate() {
        for &j in labels {
            owners[fill[j as usize]] = l as u32;
            fill[j as usize] += 1;
        }
    }
    Ok((0..y.rows())
        .into_par_iter()
        .map_init(
            || vec![0usize; q],
            |counts, i| {
                counts.iter_mut().for_each(|c| *c = 0);
                for &j in y.row(i) {
                    for &l in &owners[offsets[j as usize]..offsets[j as usize + 1]] {
                        counts[l as usize] += 1;
                    }
                }
                let mut best = 0;
                for l in 1..q {
                    if counts[l] > counts[best] {
                        best = l;
                    }
                }
                if counts[best] == 0 {
                    previous[i]
                } else {
                    best as u32
                }
            },
        )
        .collect())
}

/// Runs the alternating minimization for a fixed `q`.
pub fn fit_partition(dataset: &Dataset, config: &BpConfig) -> Result<Partition> {
    config.validate()?;
    let QSetting::Fixed(q) = config.q else {
        return Err(Error::InvalidArgument(
            "fit_partition needs an explicit q; use search_q for automatic selection".into(),
        ));
    };
    let (n, m) = (dataset.num_instances(), dataset.num_labels());
    if q > n.min(m) {
        return Err(Error::InvalidArgument(format!(
            "q = {q} exceeds min(n, m) = {}",
            n.min(m)
        )));
    }
    let y = dataset.labels();
    let mut assignment = init_instance_clusters(dataset.features(), q, config.seed)?;
    let mut label_clusters: Vec<Vec<u32>> = Vec::new();
    let mut trace: Vec<f64> = Vec::new();
    for _ in 0..config.max_alt_iters {
        let labels = select_label_clusters(
            y,
            &assignment,
            q,
            config.lambda,
            config.min_labels_per_cluster,
        )?;
        let next = select_instance_clusters(y, &labels, &assignment)?;
        let value = objective_parts(y, &next, &labels, config.lambda)?;
        let fixed_point = next == assignment && labels == label_clusters;
        let converged = trace
            .last()
            .is_some_and(|&prev| (prev - value.f).abs() < config.conv_tol);
        trace.push(value.f);
        assignment = next;
        label_clusters = labels;
        if fixed_point || converged {
            break;
        }
    }
    if label_clusters.is_empty() {
        // max_alt_iters == 0: report the label step for the initial clustering
        label_clusters = select_label_clusters(
            y,
            &assignment,
            q,
            config.lambda,
            config.min_labels_per_cluster,
        )?;
    }
    Partition::new(config.lambda, assignment, label_clusters, trace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QReport {
    pub q: usize,
    /// Captured ones divided by `nnz(Y)`.
    pub captured_proportion: f64,
    pub any_empty: bool,
    pub objective: ObjectiveValue,
}

#[derive(Debug, Clone)]
pub struct QSearch {
    pub chosen_q: usize,
    pub partition: Partition,
    pub reports: Vec<QReport>,
}

/// Fits `q = 2, 3, …` and keeps the largest `q` reached before some paired
/// cluster first comes out empty.
pub fn search_q(dataset: &Dataset, base: &BpConfig, q_max: usize) -> Result<QSearch> {
    if q_max < 2 {
        return Err(Error::InvalidArgument(format!("q_max must be >= 2, got {q_max}")));
    }
    let limit = q_max.min(dataset.num_instances().min(dataset.num_labels()));
    let nnz = dataset.labels().nnz();
    let mut reports = Vec::new();
    let mut best: Option<(usize, Partition)> = None;
    for q in 2..=limit {
        let config = BpConfig {
            q: QSetting::Fixed(q),
            ..base.clone()
        };
        let partition = fit_partition(dataset, &config)?;
        let value = objective(dataset.labels(), &partition)?;
        let any_empty = !partition.empty_clusters().is_empty();
        reports.push(QReport {
            q,
            captured_proportion: if nnz == 0 {
                0.0
            } else {
                value.captured_ones as f64 / nnz as f64
            },
            any_empty,
            objective: value,
        });
        if any_empty {
            break;
        }
        best = Some((q, partition));
    }
    match best {
        Some((chosen_q, partition)) => Ok(QSearch {
            chosen_q,
            partition,
            reports,
        }),
        None => Err(Error::Optimization(
            "no q >= 2 keeps every paired cluster non-empty".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::SparseMatrix;

    fn block_diagonal() -> BinaryLabelMatrix {
        BinaryLabelMatrix::from_rows(4, vec![vec![0, 1], vec![0, 1], vec![2, 3], vec![2, 3]])
            .unwrap()
    }

    #[test]
    fn objective_empty_clusters_is_zero() {
        let y = block_diagonal();
        let v = objective_parts(&y, &[0, 0, 1, 1], &[vec![], vec![]], 3.0).unwrap();
        assert_eq!((v.captured_ones, v.penalty, v.f), (0, 0.0, 0.0));
    }

    #[test]
    fn objective_block_diagonal() {
        let y = block_diagonal();
        let clusters = vec![vec![0, 1], vec![2, 3]];
        let v = objective_parts(&y, &[0, 0, 1, 1], &clusters, 0.0).unwrap();
        assert_eq!((v.captured_ones, v.f), (8, -8.0));
        let v = objective_parts(&y, &[0, 0, 1, 1], &clusters, 1.0).unwrap();
        assert_eq!((v.penalty, v.f), (8.0, 0.0));
    }

    #[test]
    fn prefix_examples() {
        assert_eq!(best_prefix_len(&[5, 3, 1], 0.5, 0), 2);
        assert_eq!(best_prefix_len(&[5, 3, 1], 1.0, 0), 1);
        assert_eq!(best_prefix_len(&[5, 3, 1, 0, 0], 0.0, 0), 3);
        assert_eq!(best_prefix_len(&[5, 3, 1], 100.0, 1), 1);
        assert_eq!(best_prefix_len(&[5, 3, 1], 100.0, 0), 0);
    }

    #[test]
    fn label_selection_picks_original_indices() {
        // counts [1, 5, 0, 3]
        let picked = select_labels_for_counts(&[1, 5, 0, 3], 0.5, 1);
        assert_eq!(picked, vec![1, 3]);
    }

    #[test]
    fn instance_selection_examples() {
        let y = BinaryLabelMatrix::from_rows(4, vec![vec![1, 2, 3], vec![], vec![0, 1, 2, 3]])
            .unwrap();
        let clusters = vec![vec![0, 1], vec![2, 3]];
        let a = select_instance_clusters(&y, &clusters, &[0, 1, 1]).unwrap();
        assert_eq!(a, vec![1, 1, 0]);
    }

    #[test]
    fn empty_cluster_gets_most_frequent_labels() {
        let y = BinaryLabelMatrix::from_rows(3, vec![vec![2], vec![2], vec![0, 2]]).unwrap();
        let clusters = select_label_clusters(&y, &[0, 0, 0], 2, 0.0, 1).unwrap();
        assert_eq!(clusters[0], vec![0, 2]);
        assert_eq!(clusters[1], vec![2]);
    }

    fn dataset(features: Vec<Vec<(u32, f64)>>, labels: Vec<Vec<u32>>, m: usize) -> Dataset {
        Dataset::new(
            SparseMatrix::from_rows(2, features).unwrap(),
            BinaryLabelMatrix::from_rows(m, labels).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn single_cluster_captures_everything() {
        let d = dataset(
            vec![vec![(0, 1.0)], vec![(1, 1.0)], vec![(0, 2.0)]],
            vec![vec![0, 3], vec![3], vec![]],
            5,
        );
        let p = fit_partition(&d, &BpConfig::with_q(1, 0.0)).unwrap();
        assert_eq!(p.label_clusters(), &[vec![0, 3]]);
        assert_eq!(*p.objective_trace().last().unwrap(), -3.0);
    }

    #[test]
    fn explicit_q_required_and_bounded() {
        let d = dataset(vec![vec![(0, 1.0)]; 2], vec![vec![0], vec![1]], 2);
        assert!(fit_partition(&d, &BpConfig::default()).is_err());
        assert!(fit_partition(&d, &BpConfig::with_q(3, 1.0)).is_err());
        assert!(search_q(&d, &BpConfig::default(), 1).is_err());
    }
}
