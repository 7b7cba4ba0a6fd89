//! Lloyd's k-means over sparse rows with k-means++ seeding.
//!
//! Centroids are dense; distances use `‖x‖² − 2⟨x, c⟩ + ‖c‖²` so each
//! assignment pass costs `O(nnz(X) · q)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sparse::{SparseMatrix, SparseRow};

pub const MAX_LLOYD_ITERS: usize = 50;
pub const MOVEMENT_TOL: f64 = 1e-6;

struct Centroids {
    dim: usize,
    coords: Vec<f64>,
    sq_norms: Vec<f64>,
}

impl Centroids {
    fn from_rows(x: &SparseMatrix, rows: &[usize]) -> Self {
        let dim = x.cols();
        let mut coords = vec![0.0; rows.len() * dim];
        for (c, &i) in rows.iter().enumerate() {
            for (j, v) in x.row(i).iter() {
                coords[c * dim + j as usize] = v;
            }
        }
        let mut out = Centroids {
            dim,
            coords,
            sq_norms: Vec::new(),
        };
        out.refresh_norms();
        out
    }

    fn refresh_norms(&mut self) {
        self.sq_norms = self
            .coords
            .chunks_exact(self.dim.max(1))
            .map(|c| c.iter().map(|v| v * v).sum())
            .collect();
        if self.dim == 0 {
            self.sq_norms = vec![0.0; self.sq_norms.len()];
        }
    }

    fn len(&self) -> usize {
        self.sq_norms.len()
    }

    fn center(&self, c: usize) -> &[f64] {
        &self.coords[c * self.dim..(c + 1) * self.dim]
    }

    fn sq_dist(&self, row: &SparseRow<'_>, row_sq: f64, c: usize) -> f64 {
        (row_sq - 2.0 * row.dot_dense(self.center(c)) + self.sq_norms[c]).max(0.0)
    }

    /// Nearest centroid (smallest index on ties) and its squared distance.
    fn nearest(&self, row: &SparseRow<'_>, row_sq: f64) -> (u32, f64) {
        let mut best = (0u32, f64::INFINITY);
        for c in 0..self.len() {
            let d = self.sq_dist(row, row_sq, c);
            if d < best.1 {
                best = (c as u32, d);
            }
        }
        best
    }
}

fn seed_plus_plus(x: &SparseMatrix, row_sq: &[f64], q: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = x.rows();
    let mut chosen = vec![rng.random_range(0..n)];
    let first = Centroids::from_rows(x, &chosen);
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| first.sq_dist(&x.row(i), row_sq[i], 0))
        .collect();
    while chosen.len() < q {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if d > 0.0 {
                    if target < d {
                        pick = i;
                        break;
                    }
                    target -= d;
                    pick = i;
                }
            }
            pick
        } else {
            // every row coincides with a chosen centroid
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        let c = Centroids::from_rows(x, &[next]);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(c.sq_dist(&x.row(i), row_sq[i], 0));
        }
    }
    chosen
}

/// Clusters the rows of `x` into `q` groups; deterministic given `seed`.
pub fn init_instance_clusters(x: &SparseMatrix, q: usize, seed: u64) -> Result<Vec<u32>> {
    let n = x.rows();
    if q == 0 {
        return Err(Error::InvalidArgument("q must be at least 1".into()));
    }
    if q > n {
        return Err(Error::InvalidArgument(format!(
            "cannot form {q} clusters from {n} instances"
        )));
    }
    if q == 1 {
        return Ok(vec![0; n]);
    }
    let row_sq: Vec<f64> = x.row_iter().map(|r| r.squared_norm()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds = seed_plus_plus(x, &row_sq, q, &mut rng);
    let mut centroids = Centroids::from_rows(x, &seeds);
    let dim = x.cols();

    let assign_all = |centroids: &Centroids| -> Vec<(u32, f64)> {
        (0..n)
            .into_par_iter()
            .map(|i| centroids.nearest(&x.row(i), row_sq[i]))
            .collect()
    };

    let mut assignment = assign_all(&centroids);
    for _ in 0..MAX_LLOYD_ITERS {
        let mut sums = vec![0.0; q * dim];
        let mut counts = vec![0usize; q];
        for (i, &(c, _)) in assignment.iter().enumerate() {
            let c = c as usize;
            counts[c] += 1;
            for (j, v) in x.row(i).iter() {
                sums[c * dim + j as usize] += v;
            }
        }
        // Empty clusters restart at the rows farthest from their centroids.
        let mut by_distance: Vec<usize> = (0..n).collect();
        by_distance.sort_by(|&a, &b| assignment[b].1.total_cmp(&assignment[a].1).then(a.cmp(&b)));
        let mut donors = by_distance.into_iter();
        for c in 0..q {
            if counts[c] == 0 {
                let i = donors.next().expect("q <= n");
                let slot = &mut sums[c * dim..(c + 1) * dim];
                slot.iter_mut().for_each(|v| *v = 0.0);
                for (j, v) in x.row(i).iter() {
                    slot[j as usize] = v;
                }
                counts[c] = 1;
            }
        }
        let mut movement: f64 = 0.0;
        for c in 0..q {
            let slot = &mut sums[c * dim..(c + 1) * dim];
            let inv = 1.0 / counts[c] as f64;
            let mut shift = 0.0;
            for (new, old) in slot.iter_mut().zip(centroids.center(c)) {
                *new *= inv;
                shift += (*new - old) * (*new - old);
            }
            movement = movement.max(shift.sqrt());
        }
        centroids.coords = sums;
        centroids.refresh_norms();
        assignment = assign_all(&centroids);
        if movement < MOVEMENT_TOL {
            break;
        }
    }
    Ok(assignment.into_iter().map(|(c, _)| c).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points(coords: &[(f64, f64)]) -> SparseMatrix {
        SparseMatrix::from_rows(
            2,
            coords
                .iter()
                .map(|&(a, b)| {
                    let mut row = Vec::new();
                    if a != 0.0 {
                        row.push((0, a));
                    }
                    if b != 0.0 {
                        row.push((1, b));
                    }
                    row
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_cluster() {
        let x = points(&[(1.0, 0.0), (5.0, 5.0), (0.0, 3.0)]);
        assert_eq!(init_instance_clusters(&x, 1, 3).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn separated_groups_are_recovered() {
        let mut coords = Vec::new();
        for k in 0..10 {
            let e = k as f64 * 0.01;
            coords.push((1.0 + e, 1.0 - e));
            coords.push((100.0 - e, 100.0 + e));
        }
        let x = points(&coords);
        for seed in 0..20 {
            let a = init_instance_clusters(&x, 2, seed).unwrap();
            for (i, &c) in a.iter().enumerate() {
                assert_eq!(c == a[0], i % 2 == 0, "seed {seed}: {a:?}");
            }
        }
    }

    #[test]
    fn duplicate_rows_share_a_cluster() {
        let x = points(&[(1.0, 2.0), (3.0, 0.5), (1.0, 2.0), (9.0, 9.0), (3.0, 0.5), (0.0, 7.0)]);
        for q in 2..=4 {
            let a = init_instance_clusters(&x, q, 11).unwrap();
            assert_eq!(a[0], a[2]);
            assert_eq!(a[1], a[4]);
        }
    }

    #[test]
    fn deterministic_and_total() {
        let coords: Vec<(f64, f64)> = (0..40).map(|i| ((i * 7 % 13) as f64, (i % 5) as f64)).collect();
        let x = points(&coords);
        let a = init_instance_clusters(&x, 4, 9).unwrap();
        assert_eq!(a, init_instance_clusters(&x, 4, 9).unwrap());
        assert!(a.iter().all(|&c| c < 4));
    }

    #[test]
    fn all_identical_rows_still_assign() {
        let x = points(&[(1.0, 1.0); 5]);
        let a = init_instance_clusters(&x, 3, 0).unwrap();
        assert_eq!(a.len(), 5);
        assert!(a.iter().all(|&c| c < 3));
    }

    #[test]
    fn too_many_clusters() {
        let x = points(&[(1.0, 1.0), (2.0, 2.0)]);
        assert!(init_instance_clusters(&x, 3, 0).is_err());
    }
}
