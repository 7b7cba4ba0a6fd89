//! Compressed sparse row storage for feature matrices and binary label
//! matrices.
//!
//! Both matrix types share the same structural pattern (row offsets plus
//! strictly increasing column indices per row). [`SparseMatrix`] adds a
//! parallel array of finite values; [`BinaryLabelMatrix`] treats every
//! stored entry as a one.

use crate::error::{Error, Result};

/// Checks the CSR invariants on raw arrays and reports the first violation.
///
/// `values` is `None` for binary patterns.
pub fn validate_csr(
    rows: usize,
    cols: usize,
    row_offsets: &[usize],
    col_indices: &[u32],
    values: Option<&[f64]>,
) -> Result<()> {
    if row_offsets.len() != rows + 1 {
        return Err(Error::Structure(format!(
            "row_offsets has {} entries, expected {}",
            row_offsets.len(),
            rows + 1
        )));
    }
    if row_offsets[0] != 0 {
        return Err(Error::Structure("row_offsets must start at 0".into()));
    }
    for row in 0..rows {
        if row_offsets[row + 1] < row_offsets[row] {
            return Err(Error::Structure(format!(
                "row {row}: row_offsets decrease ({} -> {})",
                row_offsets[row],
                row_offsets[row + 1]
            )));
        }
    }
    let nnz = row_offsets[rows];
    if col_indices.len() != nnz {
        return Err(Error::Structure(format!(
            "last row offset is {nnz} but there are {} column indices",
            col_indices.len()
        )));
    }
    if let Some(values) = values {
        if values.len() != nnz {
            return Err(Error::Structure(format!(
                "{} values for {nnz} stored entries",
                values.len()
            )));
        }
    }
    for row in 0..rows {
        let range = row_offsets[row]..row_offsets[row + 1];
        let indices = &col_indices[range.clone()];
        for (pos, &col) in indices.iter().enumerate() {
            if col as usize >= cols {
                return Err(Error::Structure(format!(
                    "row {row}: column index {col} out of range for {cols} columns"
                )));
            }
            if pos > 0 && indices[pos - 1] >= col {
                let kind = if indices[pos - 1] == col {
                    "duplicate"
                } else {
                    "unsorted"
                };
                return Err(Error::Structure(format!(
                    "row {row}: {kind} column index {col}"
                )));
            }
        }
        if let Some(values) = values {
            if let Some(v) = values[range].iter().find(|v| !v.is_finite()) {
                return Err(Error::Structure(format!("row {row}: non-finite value {v}")));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
struct Pattern {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<u32>,
}

impl Pattern {
    fn row_range(&self, row: usize) -> std::ops::Range<usize> {
        self.row_offsets[row]..self.row_offsets[row + 1]
    }

    fn empty(rows: usize, cols: usize) -> Self {
        Pattern {
            rows,
            cols,
            row_offsets: vec![0; rows + 1],
            col_indices: Vec::new(),
        }
    }
}

/// Borrowed view of one sparse row: sorted indices with matching values.
#[derive(Debug, Clone, Copy)]
pub struct SparseRow<'a> {
    pub indices: &'a [u32],
    pub values: &'a [f64],
}

impl<'a> SparseRow<'a> {
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + 'a {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    /// Inner product of two sorted sparse rows by merge join.
    pub fn dot(&self, other: &SparseRow<'_>) -> f64 {
        let (mut a, mut b) = (0, 0);
        let mut acc = 0.0;
        while a < self.indices.len() && b < other.indices.len() {
            match self.indices[a].cmp(&other.indices[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.values[a] * other.values[b];
                    a += 1;
                    b += 1;
                }
            }
        }
        acc
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(j, v)| v * dense[j as usize]).sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// Largest index + 1, or 0 for an empty row.
    pub fn min_dim(&self) -> usize {
        self.indices.last().map_or(0, |&j| j as usize + 1)
    }
}

/// Owned sparse vector with sorted, duplicate-free indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVec {
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVec {
    /// Builds a vector from `(index, value)` pairs in any order.
    pub fn from_pairs(mut pairs: Vec<(u32, f64)>) -> Result<Self> {
        pairs.sort_by_key(|&(j, _)| j);
        if let Some(w) = pairs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Structure(format!("duplicate index {}", w[0].0)));
        }
        if let Some((j, v)) = pairs.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Structure(format!("non-finite value {v} at index {j}")));
        }
        let (indices, values) = pairs.into_iter().unzip();
        Ok(SparseVec { indices, values })
    }

    pub fn as_row(&self) -> SparseRow<'_> {
        SparseRow {
            indices: &self.indices,
            values: &self.values,
        }
    }
}

/// Row-major sparse real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pattern: Pattern,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn from_csr(
        rows: usize,
        cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<u32>,
        values: Vec<f64>,
    ) -> Result<Self> {
        validate_csr(rows, cols, &row_offsets, &col_indices, Some(&values))?;
        Ok(SparseMatrix {
            pattern: Pattern {
                rows,
                cols,
                row_offsets,
                col_indices,
            },
            values,
        })
    }

    /// Builds a matrix from per-row `(column, value)` lists in any order.
    pub fn from_rows(cols: usize, rows: Vec<Vec<(u32, f64)>>) -> Result<Self> {
        let mut row_offsets = Vec::with_capacity(rows.len() + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        let n = rows.len();
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            for (j, v) in row {
                col_indices.push(j);
                values.push(v);
            }
            row_offsets.push(col_indices.len());
        }
        Self::from_csr(n, cols, row_offsets, col_indices, values)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        SparseMatrix {
            pattern: Pattern::empty(rows, cols),
            values: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.pattern.rows
    }

    pub fn cols(&self) -> usize {
        self.pattern.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.pattern.row_offsets
    }

    pub fn col_indices(&self) -> &[u32] {
        &self.pattern.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> SparseRow<'_> {
        let range = self.pattern.row_range(i);
        SparseRow {
            indices: &self.pattern.col_indices[range.clone()],
            values: &self.values[range],
        }
    }

    pub fn row_iter(&self) -> impl Iterator<Item = SparseRow<'_>> {
        (0..self.rows()).map(move |i| self.row(i))
    }

    pub fn validate(&self) -> Result<()> {
        validate_csr(
            self.rows(),
            self.cols(),
            &self.pattern.row_offsets,
            &self.pattern.col_indices,
            Some(&self.values),
        )
    }

    /// New matrix holding the given rows in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut row_offsets = Vec::with_capacity(rows.len() + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for &i in rows {
            if i >= self.rows() {
                return Err(Error::Structure(format!(
                    "row index {i} out of range for {} rows",
                    self.rows()
                )));
            }
            let row = self.row(i);
            col_indices.extend_from_slice(row.indices);
            values.extend_from_slice(row.values);
            row_offsets.push(col_indices.len());
        }
        Ok(SparseMatrix {
            pattern: Pattern {
                rows: rows.len(),
                cols: self.cols(),
                row_offsets,
                col_indices,
            },
            values,
        })
    }

    /// Scales every non-empty row to unit Euclidean norm.
    pub fn normalize_rows_l2(&mut self) {
        for i in 0..self.rows() {
            let range = self.pattern.row_range(i);
            let norm = self.values[range.clone()]
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            if norm > 0.0 {
                self.values[range].iter_mut().for_each(|v| *v /= norm);
            }
        }
    }

    /// Removes entries with `|v| < threshold`.
    pub fn prune(&self, threshold: f64) -> Self {
        let mut rows = Vec::with_capacity(self.rows());
        for row in self.row_iter() {
            rows.push(row.iter().filter(|(_, v)| v.abs() >= threshold).collect());
        }
        Self::from_rows(self.cols(), rows).expect("pruning preserves structure")
    }
}

/// Sparse binary matrix; every stored entry is a one.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryLabelMatrix {
    pattern: Pattern,
}

impl BinaryLabelMatrix {
    pub fn from_csr(
        rows: usize,
        cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<u32>,
    ) -> Result<Self> {
        validate_csr(rows, cols, &row_offsets, &col_indices, None)?;
        Ok(BinaryLabelMatrix {
            pattern: Pattern {
                rows,
                cols,
                row_offsets,
                col_indices,
            },
        })
    }

    /// Builds a matrix from per-row label lists in any order.
    pub fn from_rows(cols: usize, rows: Vec<Vec<u32>>) -> Result<Self> {
        let mut row_offsets = Vec::with_capacity(rows.len() + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        let n = rows.len();
        for mut row in rows {
            row.sort_unstable();
            col_indices.extend(row);
            row_offsets.push(col_indices.len());
        }
        Self::from_csr(n, cols, row_offsets, col_indices)
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        BinaryLabelMatrix {
            pattern: Pattern::empty(rows, cols),
        }
    }

    pub fn rows(&self) -> usize {
        self.pattern.rows
    }

    pub fn cols(&self) -> usize {
        self.pattern.cols
    }

    pub fn nnz(&self) -> usize {
        self.pattern.col_indices.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.pattern.row_offsets
    }

    pub fn col_indices(&self) -> &[u32] {
        &self.pattern.col_indices
    }

    /// Sorted labels of row `i`.
    pub fn row(&self, i: usize) -> &[u32] {
        &self.pattern.col_indices[self.pattern.row_range(i)]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[u32]> {
        (0..self.rows()).map(move |i| self.row(i))
    }

    pub fn contains(&self, i: usize, j: u32) -> bool {
        self.row(i).binary_search(&j).is_ok()
    }

    pub fn validate(&self) -> Result<()> {
        validate_csr(
            self.rows(),
            self.cols(),
            &self.pattern.row_offsets,
            &self.pattern.col_indices,
            None,
        )
    }

    /// Number of ones per column over the rows in `row_subset`.
    pub fn column_sums(&self, row_subset: &[usize]) -> Result<Vec<usize>> {
        let mut sums = vec![0usize; self.cols()];
        for &i in row_subset {
            if i >= self.rows() {
                return Err(Error::Structure(format!(
                    "row index {i} out of range for {} rows",
                    self.rows()
                )));
            }
            for &j in self.row(i) {
                sums[j as usize] += 1;
            }
        }
        Ok(sums)
    }

    /// Number of ones per column over all rows.
    pub fn column_counts(&self) -> Vec<usize> {
        let mut sums = vec![0usize; self.cols()];
        for &j in &self.pattern.col_indices {
            sums[j as usize] += 1;
        }
        sums
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut row_offsets = Vec::with_capacity(rows.len() + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        for &i in rows {
            if i >= self.rows() {
                return Err(Error::Structure(format!(
                    "row index {i} out of range for {} rows",
                    self.rows()
                )));
            }
            col_indices.extend_from_slice(self.row(i));
            row_offsets.push(col_indices.len());
        }
        Ok(BinaryLabelMatrix {
            pattern: Pattern {
                rows: rows.len(),
                cols: self.cols(),
                row_offsets,
                col_indices,
            },
        })
    }

    /// Keeps only the columns in `columns` (sorted, duplicate-free) and
    /// renumbers them to their position in that list.
    pub fn restrict_columns(&self, columns: &[u32]) -> Result<Self> {
        if columns.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "column subset must be sorted and duplicate-free".into(),
            ));
        }
        if let Some(&j) = columns.iter().find(|&&j| j as usize >= self.cols()) {
            return Err(Error::Structure(format!(
                "column {j} out of range for {} columns",
                self.cols()
            )));
        }
        let mut position = vec![u32::MAX; self.cols()];
        for (p, &j) in columns.iter().enumerate() {
            position[j as usize] = p as u32;
        }
        let mut row_offsets = Vec::with_capacity(self.rows() + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        for row in self.row_iter() {
            col_indices.extend(
                row.iter()
                    .map(|&j| position[j as usize])
                    .filter(|&p| p != u32::MAX),
            );
            row_offsets.push(col_indices.len());
        }
        Ok(BinaryLabelMatrix {
            pattern: Pattern {
                rows: self.rows(),
                cols: columns.len(),
                row_offsets,
                col_indices,
            },
        })
    }
}
