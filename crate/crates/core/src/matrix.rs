//! Small dense square matrices over background phases.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Index, IndexMut};

/// A `d x d` rate matrix stored row-major.
///
/// Used for `D(0)`, the per-stream arrival matrices `A_v`, the aggregate
/// `D = D(0) + sum_v A_v`, and the blocks of the truncated level generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct PhaseMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl PhaseMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from rows; every row must have `rows.len()` entries.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, String> {
        let dim = rows.len();
        if dim == 0 {
            return Err("matrix must have at least one row".into());
        }
        let mut data = Vec::with_capacity(dim * dim);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != dim {
                return Err(format!(
                    "row {i} has {} entries, expected {dim} (matrix must be square)",
                    row.len()
                ));
            }
            if let Some(x) = row.iter().find(|x| !x.is_finite()) {
                return Err(format!("row {i} contains non-finite entry {x}"));
            }
            data.extend(row);
        }
        Ok(Self { dim, data })
    }

    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), dim * dim, "row-major data must hold dim^2 entries");
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// `M e`: the vector of row sums.
    pub fn row_sums(&self) -> Vec<f64> {
        self.rows().map(|r| r.iter().sum()).collect()
    }

    /// Row vector times matrix, `x M`.
    pub fn left_mul(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        let mut out = vec![0.0; self.dim];
        for (xi, row) in x.iter().zip(self.rows()) {
            for (o, m) in out.iter_mut().zip(row) {
                *o += xi * m;
            }
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|x| x * factor).collect(),
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|&x| x >= 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    /// Strictly negative diagonal and nonnegative off-diagonal entries.
    pub fn has_subgenerator_signs(&self) -> bool {
        (0..self.dim).all(|i| {
            (0..self.dim).all(|j| {
                let x = self[(i, j)];
                if i == j {
                    x < 0.0
                } else {
                    x >= 0.0
                }
            })
        })
    }

    /// True when the directed graph of nonzero off-diagonal entries is
    /// strongly connected.
    pub fn is_irreducible(&self) -> bool {
        let n = self.dim;
        if n == 1 {
            return true;
        }
        let reach = |forward: bool| {
            let mut seen = vec![false; n];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(i) = stack.pop() {
                for j in 0..n {
                    let edge = if forward { self[(i, j)] } else { self[(j, i)] };
                    if i != j && edge != 0.0 && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(true) && reach(false)
    }
}

impl Index<(usize, usize)> for PhaseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for PhaseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Add<&PhaseMatrix> for &PhaseMatrix {
    type Output = PhaseMatrix;

    fn add(self, rhs: &PhaseMatrix) -> PhaseMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        PhaseMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl TryFrom<Vec<Vec<f64>>> for PhaseMatrix {
    type Error = String;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, String> {
        Self::from_rows(rows)
    }
}

impl From<PhaseMatrix> for Vec<Vec<f64>> {
    fn from(m: PhaseMatrix) -> Self {
        m.to_rows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_ragged_rows() {
        assert!(PhaseMatrix::from_rows(vec![vec![1.0, 2.0], vec![3.0]]).is_err());
        assert!(PhaseMatrix::from_rows(vec![]).is_err());
    }

    #[test]
    fn irreducibility() {
        let d = PhaseMatrix::from_rows(vec![vec![-1.0, 1.0], vec![2.0, -2.0]]).unwrap();
        assert!(d.is_irreducible());
        let block = PhaseMatrix::from_rows(vec![vec![-1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        assert!(!block.is_irreducible());
        // one-way chain 0 -> 1 -> 2 is not strongly connected
        let chain =
            PhaseMatrix::from_rows(vec![vec![-1.0, 1.0, 0.0], vec![0.0, -1.0, 1.0], vec![0.0, 0.0, -1.0]]).unwrap();
        assert!(!chain.is_irreducible());
    }

    #[test]
    fn left_mul_and_row_sums() {
        let m = PhaseMatrix::from_rows(vec![vec![-1.0, 1.0], vec![2.0, -2.0]]).unwrap();
        assert_eq!(m.row_sums(), vec![0.0, 0.0]);
        assert!(m.left_mul(&[2.0 / 3.0, 1.0 / 3.0])[0].abs() < 1e-15);
    }
}
