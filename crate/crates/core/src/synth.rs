//! Planted block-diagonal datasets with a known partition.
//!
//! Block `b` owns `labels_per_block` consecutive labels; popular labels
//! follow the block labels and are shared by every block. Each block also
//! owns a disjoint (when `d` allows) set of signature features, so the
//! blocks are linearly separable in feature space.

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::sparse::{BinaryLabelMatrix, SparseMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSpec {
    pub q_true: usize,
    pub instances_per_block: usize,
    pub labels_per_block: usize,
    /// Feature dimension.
    pub d: usize,
    pub in_block_density: f64,
    pub off_block_noise: f64,
    /// Labels tagged in every block with `in_block_density`.
    pub popular_labels: usize,
    /// Mean value of a block's signature features; noise has unit variance.
    pub feature_separation: f64,
    /// Total label count; defaults to the labels the blocks need. Extra
    /// labels only receive off-block noise.
    pub num_labels: Option<usize>,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            q_true: 3,
            instances_per_block: 100,
            labels_per_block: 10,
            d: 100,
            in_block_density: 0.8,
            off_block_noise: 0.01,
            popular_labels: 0,
            feature_separation: 5.0,
            num_labels: None,
            seed: 0,
        }
    }
}

impl PlantedSpec {
    pub fn validate(&self) -> Result<()> {
        let probability = |p: f64, what: &str| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{what} must lie in [0, 1], got {p}")))
            }
        };
        probability(self.in_block_density, "in_block_density")?;
        probability(self.off_block_noise, "off_block_noise")?;
        if self.q_true == 0 || self.instances_per_block == 0 || self.labels_per_block == 0 || self.d == 0 {
            return Err(Error::InvalidArgument(
                "q_true, instances_per_block, labels_per_block and d must be positive".into(),
            ));
        }
        if !(self.feature_separation > 0.0 && self.feature_separation.is_finite()) {
            return Err(Error::InvalidArgument("feature_separation must be positive".into()));
        }
        if let Some(m) = self.num_labels {
            if m < self.block_labels() {
                return Err(Error::InvalidArgument(format!(
                    "{} labels needed but num_labels = {m}",
                    self.block_labels()
                )));
            }
        }
        Ok(())
    }

    fn block_labels(&self) -> usize {
        self.q_true * self.labels_per_block + self.popular_labels
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels.unwrap_or_else(|| self.block_labels())
    }

    /// Labels of block `b`, sorted, popular labels included.
    pub fn block_label_set(&self, b: usize) -> Vec<u32> {
        let own = (b * self.labels_per_block)..((b + 1) * self.labels_per_block);
        let popular = (self.q_true * self.labels_per_block)..self.block_labels();
        own.chain(popular).map(|j| j as u32).collect()
    }

    pub fn popular_label_ids(&self) -> Vec<u32> {
        ((self.q_true * self.labels_per_block) as u32..self.block_labels() as u32).collect()
    }
}

struct Rows {
    features: Vec<Vec<(u32, f64)>>,
    labels: Vec<Vec<u32>>,
}

fn generate_rows(spec: &PlantedSpec, per_block: usize) -> Result<Vec<Rows>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let m = spec.num_labels();
    let nnz = (spec.d / 10).max(1);
    let extras = nnz / 5;

    let mut feature_ids: Vec<u32> = (0..spec.d as u32).collect();
    feature_ids.shuffle(&mut rng);
    let signatures: Vec<Vec<u32>> = (0..spec.q_true)
        .map(|b| {
            let mut sig: Vec<u32> = if spec.q_true * nnz <= spec.d {
                feature_ids[b * nnz..(b + 1) * nnz].to_vec()
            } else {
                feature_ids.choose_multiple(&mut rng, nnz).copied().collect()
            };
            sig.sort_unstable();
            sig
        })
        .collect();

    let mut blocks = Vec::with_capacity(spec.q_true);
    for (b, signature) in signatures.iter().enumerate() {
        let in_block = spec.block_label_set(b);
        let mut rows = Rows {
            features: Vec::with_capacity(per_block),
            labels: Vec::with_capacity(per_block),
        };
        for _ in 0..per_block {
            let mut row: Vec<(u32, f64)> = signature
                .iter()
                .map(|&j| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (j, spec.feature_separation + z)
                })
                .collect();
            let mut taken = 0;
            while taken < extras && signature.len() < spec.d {
                let j = rng.random_range(0..spec.d as u32);
                if signature.binary_search(&j).is_err() && row.iter().all(|&(k, _)| k != j) {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    row.push((j, z));
                    taken += 1;
                }
            }
            row.retain(|&(_, v)| v != 0.0);
            rows.features.push(row);

            let mut labels = Vec::new();
            let mut next_in = 0;
            for j in 0..m as u32 {
                let member = in_block.get(next_in) == Some(&j);
                if member {
                    next_in += 1;
                }
                let p = if member {
                    spec.in_block_density
                } else {
                    spec.off_block_noise
                };
                if rng.random_bool(p) {
                    labels.push(j);
                }
            }
            rows.labels.push(labels);
        }
        blocks.push(rows);
    }
    Ok(blocks)
}

type BlockRows = (Vec<Vec<(u32, f64)>>, Vec<Vec<u32>>);

fn assemble(spec: &PlantedSpec, blocks: Vec<BlockRows>) -> Result<Dataset> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (f, l) in blocks {
        features.extend(f);
        labels.extend(l);
    }
    let dataset = Dataset::new(
        SparseMatrix::from_rows(spec.d, features)?,
        BinaryLabelMatrix::from_rows(spec.num_labels(), labels)?,
    )?;
    dataset.features().validate()?;
    dataset.labels().validate()?;
    Ok(dataset)
}

fn truth_partition(spec: &PlantedSpec, per_block: usize) -> Result<Partition> {
    let assignment = (0..spec.q_true)
        .flat_map(|b| std::iter::repeat_n(b as u32, per_block))
        .collect();
    let clusters = (0..spec.q_true).map(|b| spec.block_label_set(b)).collect();
    Partition::new(0.0, assignment, clusters, Vec::new())
}

/// Generates `q_true · instances_per_block` rows, block by block, and the
/// planted partition.
pub fn generate(spec: &PlantedSpec) -> Result<(Dataset, Partition)> {
    let blocks = generate_rows(spec, spec.instances_per_block)?;
    let dataset = assemble(spec, blocks.into_iter().map(|r| (r.features, r.labels)).collect())?;
    Ok((dataset, truth_partition(spec, spec.instances_per_block)?))
}

/// Like [`generate`] but also draws `test_per_block` held-out rows per block
/// from the same blocks. The partition describes the training rows.
pub fn generate_train_test(
    spec: &PlantedSpec,
    test_per_block: usize,
) -> Result<(Dataset, Dataset, Partition)> {
    let per_block = spec.instances_per_block + test_per_block;
    let blocks = generate_rows(spec, per_block)?;
    let mut train = Vec::with_capacity(blocks.len());
    let mut test = Vec::with_capacity(blocks.len());
    for mut rows in blocks {
        let test_features = rows.features.split_off(spec.instances_per_block);
        let test_labels = rows.labels.split_off(spec.instances_per_block);
        train.push((rows.features, rows.labels));
        test.push((test_features, test_labels));
    }
    Ok((
        assemble(spec, train)?,
        assemble(spec, test)?,
        truth_partition(spec, spec.instances_per_block)?,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agreement {
    /// Adjusted Rand index between the two instance clusterings.
    pub ari: f64,
    /// Label-set Jaccard for each truth block against its matched found
    /// cluster (0 when unmatched).
    pub label_jaccard: Vec<f64>,
    /// Found cluster matched to each truth block.
    pub matching: Vec<Option<usize>>,
}

impl Agreement {
    pub fn min_jaccard(&self) -> f64 {
        self.label_jaccard.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn pairs(x: f64) -> f64 {
    x * (x - 1.0) / 2.0
}

pub fn adjusted_rand_index(a: &[u32], b: &[u32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("{} vs {} instances", a.len(), b.len())));
    }
    let qa = a.iter().max().map_or(0, |&c| c as usize + 1);
    let qb = b.iter().max().map_or(0, |&c| c as usize + 1);
    let mut table = vec![0usize; qa * qb];
    let mut rows = vec![0usize; qa];
    let mut cols = vec![0usize; qb];
    for (&x, &y) in a.iter().zip(b) {
        table[x as usize * qb + y as usize] += 1;
        rows[x as usize] += 1;
        cols[y as usize] += 1;
    }
    let index: f64 = table.iter().map(|&c| pairs(c as f64)).sum();
    let sum_rows: f64 = rows.iter().map(|&c| pairs(c as f64)).sum();
    let sum_cols: f64 = cols.iter().map(|&c| pairs(c as f64)).sum();
    let total = pairs(a.len() as f64);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_rows * sum_cols / total;
    let max = 0.5 * (sum_rows + sum_cols);
    if max == expected {
        // both clusterings trivial in the same way
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

fn jaccard(a: &[u32], b: &[u32]) -> f64 {
    let (mut i, mut j, mut common) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - common;
    if union == 0 {
        1.0
    } else {
        common as f64 / union as f64
    }
}

/// Matches found clusters to truth blocks maximizing total instance overlap.
pub fn match_clusters(found: &Partition, truth: &Partition) -> Result<Vec<Option<usize>>> {
    if found.num_instances() != truth.num_instances() {
        return Err(Error::Dimension(format!(
            "{} vs {} instances",
            found.num_instances(),
            truth.num_instances()
        )));
    }
    let (qf, qt) = (found.q(), truth.q());
    let mut overlap = vec![vec![0i64; qf]; qt];
    for (&f, &t) in found.instance_cluster_of().iter().zip(truth.instance_cluster_of()) {
        overlap[t as usize][f as usize] += 1;
    }
    let mut matching = vec![None; qt];
    if qt <= qf {
        let weights = Matrix::from_rows(overlap).expect("rectangular");
        let (_, assign) = kuhn_munkres(&weights);
        for (t, f) in assign.into_iter().enumerate() {
            matching[t] = Some(f);
        }
    } else {
        let transposed: Vec<Vec<i64>> =
            (0..qf).map(|f| (0..qt).map(|t| overlap[t][f]).collect()).collect();
        let weights = Matrix::from_rows(transposed).expect("rectangular");
        let (_, assign) = kuhn_munkres(&weights);
        for (f, t) in assign.into_iter().enumerate() {
            matching[t] = Some(f);
        }
    }
    Ok(matching)
}

/// ARI on instance assignments plus per-block label Jaccard after matching.
pub fn partition_agreement(found: &Partition, truth: &Partition) -> Result<Agreement> {
    let ari = adjusted_rand_index(found.instance_cluster_of(), truth.instance_cluster_of())?;
    let matching = match_clusters(found, truth)?;
    let label_jaccard = matching
        .iter()
        .enumerate()
        .map(|(t, f)| {
            f.map_or(0.0, |f| {
                jaccard(&found.label_clusters()[f], &truth.label_clusters()[t])
            })
        })
        .collect();
    Ok(Agreement {
        ari,
        label_jaccard,
        matching,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> PlantedSpec {
        PlantedSpec {
            q_true: 3,
            instances_per_block: 20,
            labels_per_block: 4,
            d: 30,
            seed: 5,
            ..Default::default()
        }
    }

    #[test]
    fn noiseless_dense_blocks_are_exact() {
        let spec = PlantedSpec {
            in_block_density: 1.0,
            off_block_noise: 0.0,
            ..small()
        };
        let (data, truth) = generate(&spec).unwrap();
        for i in 0..data.num_instances() {
            let b = truth.instance_cluster_of()[i] as usize;
            assert_eq!(data.labels().row(i), spec.block_label_set(b).as_slice());
        }
    }

    #[test]
    fn same_seed_same_data() {
        let (a, _) = generate(&small()).unwrap();
        let (b, _) = generate(&small()).unwrap();
        assert_eq!(a, b);
        let (c, _) = generate(&PlantedSpec { seed: 6, ..small() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(generate(&PlantedSpec { in_block_density: 1.5, ..small() }).is_err());
        assert!(generate(&PlantedSpec { num_labels: Some(5), ..small() }).is_err());
        assert!(generate(&PlantedSpec { q_true: 0, ..small() }).is_err());
    }

    #[test]
    fn extra_labels_and_test_split() {
        let spec = PlantedSpec {
            num_labels: Some(20),
            ..small()
        };
        let (train, test, truth) = generate_train_test(&spec, 5).unwrap();
        assert_eq!(train.num_labels(), 20);
        assert_eq!(train.num_instances(), 60);
        assert_eq!(test.num_instances(), 15);
        assert_eq!(truth.num_instances(), 60);
    }

    fn partition(assign: Vec<u32>, clusters: Vec<Vec<u32>>) -> Partition {
        Partition::new(0.0, assign, clusters, vec![]).unwrap()
    }

    #[test]
    fn identical_partitions_agree_fully() {
        let p = partition(vec![0, 0, 1, 1, 2, 2], vec![vec![0], vec![1, 2], vec![3]]);
        let a = partition_agreement(&p, &p).unwrap();
        assert_eq!(a.ari, 1.0);
        assert_eq!(a.label_jaccard, vec![1.0; 3]);
    }

    #[test]
    fn single_cluster_has_zero_ari() {
        let truth = partition(vec![0, 0, 1, 1, 2, 2], vec![vec![0], vec![1], vec![2]]);
        let found = partition(vec![0; 6], vec![vec![0, 1, 2]]);
        let a = partition_agreement(&found, &truth).unwrap();
        assert_eq!(a.ari, 0.0);
        assert_eq!(a.matching.iter().filter(|m| m.is_some()).count(), 1);
    }

    #[test]
    fn relabeling_does_not_change_scores() {
        let truth = partition(vec![0, 0, 1, 1, 2, 2, 2], vec![vec![0, 1], vec![2], vec![3, 4]]);
        let found = partition(vec![1, 1, 2, 0, 0, 0, 0], vec![vec![3], vec![0, 1], vec![2]]);
        let permuted = partition(vec![2, 2, 0, 1, 1, 1, 1], vec![vec![2], vec![3], vec![0, 1]]);
        let a = partition_agreement(&found, &truth).unwrap();
        let b = partition_agreement(&permuted, &truth).unwrap();
        assert!((a.ari - b.ari).abs() < 1e-12);
        assert_eq!(a.label_jaccard, b.label_jaccard);
    }
}
