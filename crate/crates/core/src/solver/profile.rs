//! Envelope (skyline) Cholesky factorization for sparse SPD systems whose
//! non-zeros cluster near the diagonal, as the stage-ordered LQG LMIs do.

use crate::error::{Error, Result};

/// `L` stored row by row from the first structurally non-zero column.
#[derive(Clone, Debug)]
pub(crate) struct ProfileCholesky {
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl ProfileCholesky {
    /// Factors the symmetric matrix given by its lower-triangle rows:
    /// `rows[i]` lists `(j, value)` with `j <= i`, duplicates summed.
    pub(crate) fn factor(rows: &[Vec<(usize, f64)>]) -> Result<Self> {
        let n = rows.len();
        let first: Vec<usize> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| r.iter().map(|&(j, _)| j).min().unwrap_or(i).min(i))
            .collect();
        let mut start = Vec::with_capacity(n + 1);
        let mut total = 0;
        for i in 0..n {
            start.push(total);
            total += i - first[i] + 1;
        }
        start.push(total);
        let mut data = vec![0.0; total];
        for (i, r) in rows.iter().enumerate() {
            for &(j, v) in r {
                data[start[i] + j - first[i]] += v;
            }
        }

        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let lo = fi.max(fj);
                let mut s = data[start[i] + j - fi];
                let ri = &data[start[i] + lo - fi..start[i] + j - fi];
                let rj = &data[start[j] + lo - fj..start[j] + j - fj];
                s -= ri.iter().zip(rj).map(|(a, b)| a * b).sum::<f64>();
                if j == i {
                    if !(s > 0.0) {
                        return Err(Error::NotPositiveDefinite(format!("pivot {i} is {s:e}")));
                    }
                    data[start[i] + i - fi] = s.sqrt();
                } else {
                    let djj = data[start[j] + j - fj];
                    data[start[i] + j - fi] = s / djj;
                }
            }
        }
        Ok(ProfileCholesky { first, start, data })
    }

    pub(crate) fn dim(&self) -> usize {
        self.first.len()
    }

    /// Solves `L Lᵀ x = b` in place.
    pub(crate) fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let s: f64 = row[..i - fi].iter().zip(&b[fi..i]).map(|(a, x)| a * x).sum();
            b[i] = (b[i] - s) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            b[i] /= row[i - fi];
            let xi = b[i];
            for (k, a) in row[..i - fi].iter().enumerate() {
                b[fi + k] -= a * xi;
            }
        }
    }
}
