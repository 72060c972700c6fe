//! Grassmann-Taksar-Heyman state reduction for stationary vectors.
//!
//! Only nonnegative quantities are ever added, multiplied or divided, so the
//! result carries no cancellation error. States are eliminated from the last
//! index down. For level-ordered generators whose entries below the diagonal
//! sit within `lower_bandwidth` of it, elimination creates no fill outside
//! that band, and the cost drops from `O(n^3)` to `O(n^2 * bandwidth)`.

/// Dense square matrix used as the working copy during reduction.
#[derive(Debug, Clone)]
pub struct DenseGenerator {
    n: usize,
    data: Vec<f64>,
}

impl DenseGenerator {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_row_major(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n);
        Self { n, data }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, x: f64) {
        self.data[i * self.n + j] = x;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, x: f64) {
        self.data[i * self.n + j] += x;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Largest `i - j` over nonzero off-diagonal entries with `i > j`.
    pub fn lower_bandwidth(&self) -> usize {
        (0..self.n)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .filter(|&(i, j)| self.get(i, j) != 0.0)
            .map(|(i, j)| i - j)
            .max()
            .unwrap_or(0)
    }

    /// Sets each diagonal entry to minus the sum of its row's off-diagonal
    /// entries. Summing a row off-diagonal first then adding the diagonal
    /// gives exactly zero.
    pub fn make_conservative(&mut self) {
        for i in 0..self.n {
            let off: f64 = self
                .row(i)
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, x)| x)
                .sum();
            self.set(i, i, -off);
        }
    }

    /// `x Q` for a row vector `x`.
    pub fn left_mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, xi) in x.iter().enumerate() {
            if *xi == 0.0 {
                continue;
            }
            for (o, q) in out.iter_mut().zip(self.row(i)) {
                *o += xi * q;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GthError {
    /// A state had no remaining outflow during reduction; the chain is
    /// reducible.
    ZeroOutflow { state: usize },
}

/// Stationary probability vector of the irreducible generator `q`.
///
/// Only off-diagonal entries are read; the diagonal is ignored.
pub fn stationary(q: &DenseGenerator) -> Result<Vec<f64>, GthError> {
    let n = q.n;
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let bw = q.lower_bandwidth().max(1);
    let mut a = q.data.clone();
    let mut outflow = vec![0.0; n];
    for m in (1..n).rev() {
        let lo = m.saturating_sub(bw);
        let row_m = m * n;
        let s: f64 = a[row_m + lo..row_m + m].iter().sum();
        if !(s > 0.0) {
            return Err(GthError::ZeroOutflow { state: m });
        }
        outflow[m] = s;
        let (head, tail) = a.split_at_mut(row_m);
        let pivot_row = &tail[..n];
        for (i, row_i) in head.chunks_exact_mut(n).enumerate() {
            let aim = row_i[m];
            if aim == 0.0 {
                continue;
            }
            let f = aim / s;
            for j in lo..m {
                if j != i {
                    row_i[j] += f * pivot_row[j];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    x[0] = 1.0;
    for m in 1..n {
        let inflow: f64 = (0..m).map(|i| x[i] * a[i * n + m]).sum();
        x[m] = inflow / outflow[m];
    }
    let total: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= total);
    Ok(x)
}
