//! Symmetric banded matrices and their Cholesky factorization.
//!
//! The normal equations of the sequence fit couple a frame only with its two
//! neighbors on either side, so `JᵀJ` is banded with a bandwidth of three
//! frames' worth of parameters.

use nalgebra::{Matrix3, Vector3};

/// Lower band of a symmetric `n × n` matrix: entry `(i, j)` with
/// `0 ≤ i − j ≤ bandwidth` lives at `data[i * (bandwidth + 1) + (i − j)]`.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    bandwidth: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        let bandwidth = bandwidth.min(n.saturating_sub(1));
        BandMatrix {
            n,
            bandwidth,
            data: vec![0.0; n * (bandwidth + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bandwidth);
        i * (self.bandwidth + 1) + (i - j)
    }

    /// Entry `(i, j)` of the full symmetric matrix.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bandwidth {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.data[self.idx(i, i)]).collect()
    }

    pub fn add_diagonal(&mut self, values: &[f64]) {
        for (i, v) in values.iter().enumerate() {
            let k = self.idx(i, i);
            self.data[k] += v;
        }
    }

    /// Adds the 3×3 block `m` at rows `row..row+3`, columns `col..col+3`
    /// where `row ≥ col + 3` (strictly below the diagonal blocks).
    #[inline]
    pub fn add_block(&mut self, row: usize, col: usize, m: &Matrix3<f64>) {
        for i in 0..3 {
            for j in 0..3 {
                let k = self.idx(row + i, col + j);
                self.data[k] += m[(i, j)];
            }
        }
    }

    /// Adds the lower triangle of the symmetric 3×3 block `m` on the diagonal.
    #[inline]
    pub fn add_diagonal_block(&mut self, at: usize, m: &Matrix3<f64>) {
        for i in 0..3 {
            for j in 0..=i {
                let k = self.idx(at + i, at + j);
                self.data[k] += m[(i, j)];
            }
        }
    }

    /// In-place Cholesky factorization `A = L Lᵀ`. Returns `None` if the
    /// matrix is not numerically positive definite.
    pub fn cholesky(mut self) -> Option<BandCholesky> {
        let bw = self.bandwidth;
        for i in 0..self.n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut s = self.data[self.idx(i, j)];
                let kmin = lo.max(j.saturating_sub(bw));
                for k in kmin..j {
                    s -= self.data[self.idx(i, k)] * self.data[self.idx(j, k)];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    let k = self.idx(i, i);
                    self.data[k] = s.sqrt();
                } else {
                    let k = self.idx(i, j);
                    self.data[k] = s / self.data[self.idx(j, j)];
                }
            }
        }
        Some(BandCholesky { factor: self })
    }
}

#[derive(Debug, Clone)]
pub struct BandCholesky {
    factor: BandMatrix,
}

impl BandCholesky {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let l = &self.factor;
        let (n, bw) = (l.n, l.bandwidth);
        let mut y = rhs.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(bw)..i {
                s -= l.data[l.idx(i, k)] * y[k];
            }
            y[i] = s / l.data[l.idx(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n.min(i + bw + 1) {
                s -= l.data[l.idx(k, i)] * y[k];
            }
            y[i] = s / l.data[l.idx(i, i)];
        }
        y
    }
}

/// One linearized residual group: up to three residual rows whose Jacobian
/// is a list of 3-column blocks at 3-aligned parameter offsets.
pub(crate) struct ResidualBlock<'a> {
    pub residual: Vector3<f64>,
    pub blocks: &'a [(usize, Matrix3<f64>)],
    pub weight: f64,
}

/// Accumulates `Σ w JᵀJ` and `Σ w Jᵀ r`.
pub(crate) struct NormalEquations {
    pub hessian: BandMatrix,
    pub gradient: Vec<f64>,
}

impl NormalEquations {
    pub fn new(n: usize, bandwidth: usize) -> Self {
        NormalEquations {
            hessian: BandMatrix::zeros(n, bandwidth),
            gradient: vec![0.0; n],
        }
    }

    pub fn add(&mut self, group: &ResidualBlock<'_>) {
        let w = group.weight;
        if w == 0.0 {
            return;
        }
        for (ca, ma) in group.blocks {
            let g = ma.transpose() * group.residual * w;
            for k in 0..3 {
                self.gradient[ca + k] += g[k];
            }
            for (cb, mb) in group.blocks {
                if ca > cb {
                    self.hessian.add_block(*ca, *cb, &(ma.transpose() * mb * w));
                } else if ca == cb {
                    self.hessian.add_diagonal_block(*ca, &(ma.transpose() * mb * w));
                }
            }
        }
    }
}
