use serde::Serialize;

use crate::codec::{encode_f64s, encode_u32s, encode_u64s, encode_usizes, Encode, Kind, Sections};
use crate::error::{Error, Result};

/// Paired instance and label clusters found by block-wise partitioning.
///
/// Instance clusters are disjoint and cover every training instance.
/// Label clusters are sorted and non-empty, but may share labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    q: usize,
    lambda: f64,
    instance_cluster_of: Vec<u32>,
    label_clusters: Vec<Vec<u32>>,
    objective_trace: Vec<f64>,
}

impl Partition {
    pub fn new(
        lambda: f64,
        instance_cluster_of: Vec<u32>,
        label_clusters: Vec<Vec<u32>>,
        objective_trace: Vec<f64>,
    ) -> Result<Self> {
        let q = label_clusters.len();
        if q == 0 {
            return Err(Error::Structure("partition needs at least one cluster".into()));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Structure(format!("lambda must be nonnegative, got {lambda}")));
        }
        if let Some(i) = instance_cluster_of.iter().position(|&c| c as usize >= q) {
            return Err(Error::Structure(format!(
                "instance {i} assigned to cluster {} but q = {q}",
                instance_cluster_of[i]
            )));
        }
        for (l, labels) in label_clusters.iter().enumerate() {
            if labels.is_empty() {
                return Err(Error::Structure(format!("label cluster {l} is empty")));
            }
            if labels.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Structure(format!(
                    "label cluster {l} is not sorted and duplicate-free"
                )));
            }
        }
        if objective_trace.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Structure("objective trace increases".into()));
        }
        Ok(Partition {
            q,
            lambda,
            instance_cluster_of,
            label_clusters,
            objective_trace,
        })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn num_instances(&self) -> usize {
        self.instance_cluster_of.len()
    }

    pub fn instance_cluster_of(&self) -> &[u32] {
        &self.instance_cluster_of
    }

    pub fn label_clusters(&self) -> &[Vec<u32>] {
        &self.label_clusters
    }

    pub fn objective_trace(&self) -> &[f64] {
        &self.objective_trace
    }

    /// Instance indices of each cluster, in increasing order.
    pub fn instance_clusters(&self) -> Vec<Vec<usize>> {
        members(&self.instance_cluster_of, self.q)
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.q];
        for &c in &self.instance_cluster_of {
            sizes[c as usize] += 1;
        }
        sizes
    }

    /// Clusters without any training instance.
    pub fn empty_clusters(&self) -> Vec<usize> {
        self.cluster_sizes()
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 0)
            .map(|(l, _)| l)
            .collect()
    }

    /// Checks that the partition indexes into an `n × m` label matrix.
    pub fn check_dims(&self, n: usize, m: usize) -> Result<()> {
        if self.num_instances() != n {
            return Err(Error::Dimension(format!(
                "partition covers {} instances, data has {n}",
                self.num_instances()
            )));
        }
        for (l, labels) in self.label_clusters.iter().enumerate() {
            if let Some(&j) = labels.last().filter(|&&j| j as usize >= m) {
                return Err(Error::Dimension(format!(
                    "label cluster {l} holds label {j}, data has {m} labels"
                )));
            }
        }
        Ok(())
    }

    /// Human-readable summary: cluster sizes, label lists and objective trace.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Summary<'a> {
            q: usize,
            lambda: f64,
            instance_cluster_sizes: Vec<usize>,
            label_cluster_sizes: Vec<usize>,
            label_clusters: &'a [Vec<u32>],
            objective_trace: &'a [f64],
        }
        let summary = Summary {
            q: self.q,
            lambda: self.lambda,
            instance_cluster_sizes: self.cluster_sizes(),
            label_cluster_sizes: self.label_clusters.iter().map(Vec::len).collect(),
            label_clusters: &self.label_clusters,
            objective_trace: &self.objective_trace,
        };
        serde_json::to_string_pretty(&summary).expect("summary is serializable")
    }
}

pub(crate) fn members(assignment: &[u32], q: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); q];
    for (i, &c) in assignment.iter().enumerate() {
        out[c as usize].push(i);
    }
    out
}

impl Encode for Partition {
    const KIND: Kind = Kind::Partition;

    fn encode_sections(&self) -> Vec<Vec<u8>> {
        let lengths: Vec<usize> = self.label_clusters.iter().map(Vec::len).collect();
        let flat: Vec<u32> = self.label_clusters.concat();
        vec![
            encode_u64s([self.q as u64]),
            encode_f64s(&[self.lambda]),
            encode_u32s(&self.instance_cluster_of),
            encode_usizes(&lengths),
            encode_u32s(&flat),
            encode_f64s(&self.objective_trace),
        ]
    }

    fn decode_sections(sections: Vec<Vec<u8>>) -> Result<Self> {
        let mut s = Sections::new(sections, "partition");
        let q = s.scalar_u64()? as usize;
        let lambda = s.scalar_f64()?;
        let assignment = s.u32s()?;
        let lengths = s.usizes()?;
        let flat = s.u32s()?;
        let trace = s.f64s()?;
        s.finish()?;
        if lengths.len() != q || lengths.iter().sum::<usize>() != flat.len() {
            return Err(Error::Format {
                what: "partition",
                message: "label cluster lengths do not match".into(),
            });
        }
        let mut clusters = Vec::with_capacity(q);
        let mut start = 0;
        for len in lengths {
            clusters.push(flat[start..start + len].to_vec());
            start += len;
        }
        Partition::new(lambda, assignment, clusters, trace)
    }
}
