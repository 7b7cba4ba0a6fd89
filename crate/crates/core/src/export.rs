//! Reordered view of the label matrix that exposes the block structure.
//!
//! Rows are grouped by instance cluster and columns by label cluster, so a
//! good partition shows up as dense diagonal blocks. A label that belongs to
//! several clusters gets one column per cluster.

use std::io::Write;

use crate::error::Result;
use crate::partition::Partition;
use crate::sparse::BinaryLabelMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct PermutedMatrix {
    /// Original instance of each output row.
    pub row_instances: Vec<usize>,
    pub row_clusters: Vec<u32>,
    /// Original label of each output column.
    pub col_labels: Vec<u32>,
    pub col_clusters: Vec<u32>,
    /// Row-major, `true` where the label is tagged.
    pub pixels: Vec<bool>,
}

/// Up to `row_limit` rows per instance cluster in original order; within a
/// label cluster, columns go by in-cluster count descending, then label id.
pub fn export_permuted_matrix(
    y: &BinaryLabelMatrix,
    partition: &Partition,
    row_limit: usize,
) -> Result<PermutedMatrix> {
    partition.check_dims(y.rows(), y.cols())?;
    let groups = partition.instance_clusters();

    let mut col_labels = Vec::new();
    let mut col_clusters = Vec::new();
    for (l, labels) in partition.label_clusters().iter().enumerate() {
        let counts = y.column_sums(&groups[l])?;
        let mut ordered = labels.clone();
        ordered.sort_by(|&a, &b| counts[b as usize].cmp(&counts[a as usize]).then(a.cmp(&b)));
        col_clusters.extend(std::iter::repeat_n(l as u32, ordered.len()));
        col_labels.extend(ordered);
    }

    let mut row_instances = Vec::new();
    let mut row_clusters = Vec::new();
    for (l, rows) in groups.iter().enumerate() {
        let take = rows.len().min(row_limit);
        row_instances.extend_from_slice(&rows[..take]);
        row_clusters.extend(std::iter::repeat_n(l as u32, take));
    }

    let mut pixels = Vec::with_capacity(row_instances.len() * col_labels.len());
    for &i in &row_instances {
        let tagged = y.row(i);
        pixels.extend(col_labels.iter().map(|j| tagged.binary_search(j).is_ok()));
    }
    Ok(PermutedMatrix {
        row_instances,
        row_clusters,
        col_labels,
        col_clusters,
        pixels,
    })
}

impl PermutedMatrix {
    pub fn rows(&self) -> usize {
        self.row_instances.len()
    }

    pub fn cols(&self) -> usize {
        self.col_labels.len()
    }

    pub fn pixel(&self, r: usize, c: usize) -> bool {
        self.pixels[r * self.cols() + c]
    }

    /// Tagged pixels inside each diagonal block.
    pub fn block_pixel_counts(&self) -> Vec<u64> {
        let q = self
            .row_clusters
            .iter()
            .chain(&self.col_clusters)
            .max()
            .map_or(0, |&l| l as usize + 1);
        let mut counts = vec![0u64; q];
        for (r, &rl) in self.row_clusters.iter().enumerate() {
            for (c, &cl) in self.col_clusters.iter().enumerate() {
                if rl == cl && self.pixel(r, c) {
                    counts[rl as usize] += 1;
                }
            }
        }
        counts
    }

    /// Binary PGM; tagged entries are black.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.cols(), self.rows())?;
        let bytes: Vec<u8> = self.pixels.iter().map(|&p| if p { 0 } else { 255 }).collect();
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn write_rows_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "row,instance,cluster")?;
        for (r, (i, l)) in self.row_instances.iter().zip(&self.row_clusters).enumerate() {
            writeln!(w, "{r},{i},{l}")?;
        }
        Ok(())
    }

    pub fn write_cols_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "col,label,cluster")?;
        for (c, (j, l)) in self.col_labels.iter().zip(&self.col_clusters).enumerate() {
            writeln!(w, "{c},{j},{l}")?;
        }
        Ok(())
    }
}
