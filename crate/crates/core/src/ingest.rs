//! Reader and writer for the Extreme Classification Repository text format.
//!
//! ```text
//! n d m
//! l1,l2,... f1:v1 f2:v2 ...
//! ```
//!
//! Label and feature indices are zero-based. A row without labels starts
//! with a space. Files ending in `.gz` are decompressed transparently.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::sparse::{BinaryLabelMatrix, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RepoHeader {
    pub num_points: usize,
    pub num_features: usize,
    pub num_labels: usize,
}

fn parse_header(line: &str) -> Result<RepoHeader> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    let [n, d, m] = fields[..] else {
        return Err(Error::parse(1, format!("expected header \"n d m\", got {line:?}")));
    };
    let parse = |s: &str, what: &str| -> Result<usize> {
        match s.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(Error::parse(1, format!("{what} must be a positive integer, got {s:?}"))),
        }
    };
    Ok(RepoHeader {
        num_points: parse(n, "number of points")?,
        num_features: parse(d, "number of features")?,
        num_labels: parse(m, "number of labels")?,
    })
}

type ParsedLine = (Vec<u32>, Vec<(u32, f64)>);

fn parse_line(line: &str, lineno: usize, header: &RepoHeader) -> Result<ParsedLine> {
    let mut tokens = line.split(' ');
    let mut labels = Vec::new();
    let mut pending = None;
    match tokens.next() {
        Some(first) if first.contains(':') => pending = Some(first),
        Some(first) => {
            for tok in first.split(',').filter(|t| !t.is_empty()) {
                let label: u32 = tok
                    .parse()
                    .map_err(|_| Error::parse(lineno, format!("bad label index {tok:?}")))?;
                if label as usize >= header.num_labels {
                    return Err(Error::parse(
                        lineno,
                        format!("label {label} out of range for {} labels", header.num_labels),
                    ));
                }
                labels.push(label);
            }
        }
        None => {}
    }
    labels.sort_unstable();
    if labels.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::parse(lineno, "duplicate label index"));
    }

    let mut features = Vec::new();
    for tok in pending.into_iter().chain(tokens).filter(|t| !t.is_empty()) {
        let (idx, val) = tok
            .split_once(':')
            .ok_or_else(|| Error::parse(lineno, format!("expected index:value, got {tok:?}")))?;
        let idx: u32 = idx
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad feature index {idx:?}")))?;
        if idx as usize >= header.num_features {
            return Err(Error::parse(
                lineno,
                format!("feature {idx} out of range for {} features", header.num_features),
            ));
        }
        let val: f64 = val
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad feature value {val:?}")))?;
        if !val.is_finite() {
            return Err(Error::parse(lineno, format!("non-finite feature value {val}")));
        }
        features.push((idx, val));
    }
    features.sort_by_key(|&(j, _)| j);
    if let Some(w) = features.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::parse(lineno, format!("duplicate feature index {}", w[0].0)));
    }
    Ok((labels, features))
}

/// Parses a dataset in repository format. No feature normalization is done.
pub fn parse_dataset<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut lines = reader.lines();
    let header_line = lines.next().ok_or_else(|| Error::parse(1, "empty input"))??;
    let header = parse_header(&header_line)?;

    let mut label_rows = Vec::with_capacity(header.num_points);
    let mut feature_rows = Vec::with_capacity(header.num_points);
    for (k, line) in lines.enumerate() {
        let lineno = k + 2;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if label_rows.len() == header.num_points {
            if line.trim().is_empty() {
                continue;
            }
            return Err(Error::parse(
                lineno,
                format!("more data lines than the {} declared", header.num_points),
            ));
        }
        let (labels, features) = parse_line(line, lineno, &header)?;
        label_rows.push(labels);
        feature_rows.push(features);
    }
    if label_rows.len() != header.num_points {
        return Err(Error::parse(
            label_rows.len() + 1,
            format!(
                "header declares {} points but found {}",
                header.num_points,
                label_rows.len()
            ),
        ));
    }
    Dataset::new(
        SparseMatrix::from_rows(header.num_features, feature_rows)?,
        BinaryLabelMatrix::from_rows(header.num_labels, label_rows)?,
    )
}

/// Writes a dataset in repository format.
pub fn write_dataset<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(
        w,
        "{} {} {}",
        dataset.num_instances(),
        dataset.num_features(),
        dataset.num_labels()
    )?;
    for i in 0..dataset.num_instances() {
        let labels = dataset.labels().row(i);
        for (pos, label) in labels.iter().enumerate() {
            if pos > 0 {
                w.write_all(b",")?;
            }
            write!(w, "{label}")?;
        }
        for (j, v) in dataset.features().row(i).iter() {
            write!(w, " {j}:{v}")?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Opens a dataset file, decompressing when the name ends in `.gz`.
pub fn read_dataset_file(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    parse_dataset(BufReader::new(reader))
}

pub fn write_dataset_file(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_dataset(dataset, File::create(path)?)
}

/// One cross-validation fold.
#[derive(Debug, Clone)]
pub struct Fold {
    pub train: Dataset,
    pub validation: Dataset,
    /// Original row indices of the validation rows, ascending.
    pub validation_indices: Vec<usize>,
}

/// Shuffled `k`-fold split. Validation folds are disjoint, cover every row
/// and differ in size by at most one.
pub fn kfold_split(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<Fold>> {
    let n = dataset.num_instances();
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k-fold needs k >= 2, got {k}")));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n} instances into {k} folds"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = Vec::with_capacity(k);
    for f in 0..k {
        let (lo, hi) = (f * n / k, (f + 1) * n / k);
        let mut validation: Vec<usize> = order[lo..hi].to_vec();
        validation.sort_unstable();
        let mut train: Vec<usize> = order[..lo].iter().chain(&order[hi..]).copied().collect();
        train.sort_unstable();
        folds.push(Fold {
            train: dataset.select_rows(&train)?,
            validation: dataset.select_rows(&validation)?,
            validation_indices: validation,
        });
    }
    Ok(folds)
}
