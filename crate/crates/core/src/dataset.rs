use crate::error::{Error, Result};
use crate::sparse::{BinaryLabelMatrix, SparseMatrix};

/// Paired feature rows and label rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: SparseMatrix,
    labels: BinaryLabelMatrix,
}

impl Dataset {
    pub fn new(features: SparseMatrix, labels: BinaryLabelMatrix) -> Result<Self> {
        if features.rows() != labels.rows() {
            return Err(Error::Dimension(format!(
                "{} feature rows but {} label rows",
                features.rows(),
                labels.rows()
            )));
        }
        Ok(Dataset { features, labels })
    }

    pub fn features(&self) -> &SparseMatrix {
        &self.features
    }

    pub fn labels(&self) -> &BinaryLabelMatrix {
        &self.labels
    }

    pub fn num_instances(&self) -> usize {
        self.features.rows()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn num_labels(&self) -> usize {
        self.labels.cols()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        Ok(Dataset {
            features: self.features.select_rows(rows)?,
            labels: self.labels.select_rows(rows)?,
        })
    }

    pub fn normalize_rows_l2(&mut self) {
        self.features.normalize_rows_l2();
    }

    pub fn into_parts(self) -> (SparseMatrix, BinaryLabelMatrix) {
        (self.features, self.labels)
    }
}
