//! Square matrices indexed `[cause][effect]`.

use crate::error::{ensure, Result};

/// An `N x N` matrix where entry `(j, i)` describes the edge `j -> i`.
///
/// Used both for binary ground-truth adjacency and for real-valued scores.
#[derive(Clone, Debug, PartialEq)]
pub struct CausalMatrix {
    n: usize,
    data: Vec<f64>,
}

impl CausalMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        ensure!(rows.iter().all(|r| r.len() == n), "matrix rows must all have length {n}");
        Ok(Self {
            n,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn from_flat(n: usize, data: Vec<f64>) -> Result<Self> {
        ensure!(data.len() == n * n, "expected {} entries for a {n}x{n} matrix, got {}", n * n, data.len());
        Ok(Self { n, data })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for j in 0..n {
            for i in 0..n {
                m.data[j * n + i] = f(j, i);
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, cause: usize, effect: usize) -> f64 {
        self.data[cause * self.n + effect]
    }

    #[inline]
    pub fn set(&mut self, cause: usize, effect: usize, value: f64) {
        self.data[cause * self.n + effect] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n.max(1))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Off-diagonal entries in row-major order.
    pub fn off_diagonal(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * self.n.saturating_sub(1));
        for j in 0..self.n {
            for i in 0..self.n {
                if i != j {
                    out.push(self.get(j, i));
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |j, i| self.get(i, j))
    }
}
