//! Versioned binary container shared by matrices, partitions and models.
//!
//! Layout (little-endian throughout):
//!
//! ```text
//! magic     4 bytes  "BPXM"
//! version   u32
//! kind      u32      which object follows
//! sections  u32      number of sections
//! repeated: length u64, then `length` payload bytes
//! ```
//!
//! Objects that contain other objects store each child as a complete
//! nested container inside one section.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"BPXM";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum Kind {
    SparseMatrix = 1,
    BinaryLabelMatrix = 2,
    Partition = 3,
    LinearModel = 4,
    BpModel = 5,
}

pub trait Encode: Sized {
    const KIND: Kind;

    fn encode_sections(&self) -> Vec<Vec<u8>>;

    fn decode_sections(sections: Vec<Vec<u8>>) -> Result<Self>;

    fn to_bytes(&self) -> Vec<u8> {
        let sections = self.encode_sections();
        let mut out = Vec::with_capacity(16 + sections.iter().map(|s| s.len() + 8).sum::<usize>());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(Self::KIND as u32).to_le_bytes());
        out.extend_from_slice(&(sections.len() as u32).to_le_bytes());
        for section in &sections {
            out.extend_from_slice(&(section.len() as u64).to_le_bytes());
            out.extend_from_slice(section);
        }
        out
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut reader = Reader { bytes, pos: 0 };
        if reader.take(4)? != MAGIC {
            return Err(format_error("bad magic bytes"));
        }
        let version = reader.u32()?;
        if version != FORMAT_VERSION {
            return Err(format_error(format!("unsupported format version {version}")));
        }
        let kind = reader.u32()?;
        if kind != Self::KIND as u32 {
            return Err(format_error(format!(
                "expected object kind {:?}, found {kind}",
                Self::KIND
            )));
        }
        let count = reader.u32()? as usize;
        let mut sections = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = reader.u64()? as usize;
            sections.push(reader.take(len)?.to_vec());
        }
        if reader.pos != bytes.len() {
            return Err(format_error("trailing bytes after last section"));
        }
        Self::decode_sections(sections)
    }

    fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn format_error(message: impl Into<String>) -> Error {
    Error::Format {
        what: "binary container",
        message: message.into(),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&end| end <= self.bytes.len())
            .ok_or_else(|| format_error("truncated input"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Pops sections front to back, with a descriptive error when one is missing.
pub(crate) struct Sections {
    inner: std::vec::IntoIter<Vec<u8>>,
    what: &'static str,
}

impl Sections {
    pub(crate) fn new(sections: Vec<Vec<u8>>, what: &'static str) -> Self {
        Sections {
            inner: sections.into_iter(),
            what,
        }
    }

    pub(crate) fn next(&mut self) -> Result<Vec<u8>> {
        self.inner
            .next()
            .ok_or_else(|| format_error(format!("{}: missing section", self.what)))
    }

    pub(crate) fn remaining(&self) -> usize {
        self.inner.len()
    }

    pub(crate) fn finish(self) -> Result<()> {
        if self.inner.len() != 0 {
            return Err(format_error(format!("{}: unexpected extra sections", self.what)));
        }
        Ok(())
    }

    pub(crate) fn u64s(&mut self) -> Result<Vec<u64>> {
        decode_u64s(&self.next()?)
    }

    pub(crate) fn usizes(&mut self) -> Result<Vec<usize>> {
        Ok(self.u64s()?.into_iter().map(|v| v as usize).collect())
    }

    pub(crate) fn u32s(&mut self) -> Result<Vec<u32>> {
        decode_u32s(&self.next()?)
    }

    pub(crate) fn f64s(&mut self) -> Result<Vec<f64>> {
        decode_f64s(&self.next()?)
    }

    pub(crate) fn scalar_u64(&mut self) -> Result<u64> {
        match self.u64s()?.as_slice() {
            [v] => Ok(*v),
            _ => Err(format_error(format!("{}: expected one integer", self.what))),
        }
    }

    pub(crate) fn scalar_f64(&mut self) -> Result<f64> {
        match self.f64s()?.as_slice() {
            [v] => Ok(*v),
            _ => Err(format_error(format!("{}: expected one real", self.what))),
        }
    }

    pub(crate) fn object<T: Encode>(&mut self) -> Result<T> {
        T::from_bytes(&self.next()?)
    }
}

pub(crate) fn encode_u64s(values: impl IntoIterator<Item = u64>) -> Vec<u8> {
    values.into_iter().flat_map(u64::to_le_bytes).collect()
}

pub(crate) fn encode_usizes(values: &[usize]) -> Vec<u8> {
    encode_u64s(values.iter().map(|&v| v as u64))
}

pub(crate) fn encode_u32s(values: &[u32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub(crate) fn encode_f64s(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn chunks<const N: usize>(bytes: &[u8]) -> Result<impl Iterator<Item = [u8; N]> + '_> {
    if !bytes.len().is_multiple_of(N) {
        return Err(format_error(format!(
            "section length {} is not a multiple of {N}",
            bytes.len()
        )));
    }
    Ok(bytes.chunks_exact(N).map(|c| c.try_into().unwrap()))
}

pub(crate) fn decode_u64s(bytes: &[u8]) -> Result<Vec<u64>> {
    Ok(chunks::<8>(bytes)?.map(u64::from_le_bytes).collect())
}

pub(crate) fn decode_u32s(bytes: &[u8]) -> Result<Vec<u32>> {
    Ok(chunks::<4>(bytes)?.map(u32::from_le_bytes).collect())
}

pub(crate) fn decode_f64s(bytes: &[u8]) -> Result<Vec<f64>> {
    Ok(chunks::<8>(bytes)?.map(f64::from_le_bytes).collect())
}

use crate::sparse::{BinaryLabelMatrix, SparseMatrix};

impl Encode for SparseMatrix {
    const KIND: Kind = Kind::SparseMatrix;

    fn encode_sections(&self) -> Vec<Vec<u8>> {
        vec![
            encode_usizes(&[self.rows(), self.cols()]),
            encode_usizes(self.row_offsets()),
            encode_u32s(self.col_indices()),
            encode_f64s(self.values()),
        ]
    }

    fn decode_sections(sections: Vec<Vec<u8>>) -> Result<Self> {
        let mut s = Sections::new(sections, "sparse matrix");
        let shape = s.usizes()?;
        let [rows, cols] = shape[..] else {
            return Err(format_error("sparse matrix: bad shape section"));
        };
        let offsets = s.usizes()?;
        let indices = s.u32s()?;
        let values = s.f64s()?;
        s.finish()?;
        SparseMatrix::from_csr(rows, cols, offsets, indices, values)
    }
}

impl Encode for BinaryLabelMatrix {
    const KIND: Kind = Kind::BinaryLabelMatrix;

    fn encode_sections(&self) -> Vec<Vec<u8>> {
        vec![
            encode_usizes(&[self.rows(), self.cols()]),
            encode_usizes(self.row_offsets()),
            encode_u32s(self.col_indices()),
        ]
    }

    fn decode_sections(sections: Vec<Vec<u8>>) -> Result<Self> {
        let mut s = Sections::new(sections, "binary label matrix");
        let shape = s.usizes()?;
        let [rows, cols] = shape[..] else {
            return Err(format_error("binary label matrix: bad shape section"));
        };
        let offsets = s.usizes()?;
        let indices = s.u32s()?;
        s.finish()?;
        BinaryLabelMatrix::from_csr(rows, cols, offsets, indices)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let m = BinaryLabelMatrix::from_rows(2, vec![vec![1]]).unwrap();
        let bytes = m.to_bytes();
        assert_eq!(&bytes[0..4], b"BPXM");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 3);
        // first section: [rows, cols] as two u64
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 16);
    }

    #[test]
    fn rejects_wrong_kind_and_truncation() {
        let m = SparseMatrix::from_rows(3, vec![vec![(0, 1.5)], vec![(2, -1.0)]]).unwrap();
        let bytes = m.to_bytes();
        assert!(BinaryLabelMatrix::from_bytes(&bytes).is_err());
        assert!(SparseMatrix::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(SparseMatrix::from_bytes(&bad).is_err());
        assert_eq!(SparseMatrix::from_bytes(&bytes).unwrap(), m);
    }

    #[test]
    fn decoded_matrix_is_validated() {
        // hand-built container with an out-of-range column index
        let sections = vec![
            encode_usizes(&[1, 2]),
            encode_usizes(&[0, 1]),
            encode_u32s(&[5]),
        ];
        assert!(BinaryLabelMatrix::decode_sections(sections).is_err());
    }
}
