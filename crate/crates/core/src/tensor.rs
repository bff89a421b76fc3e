//! Dense index containers for small dimensions (n ≤ 6).

use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    n: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n: usize) -> Self {
        Tensor3 {
            n,
            data: vec![0.0; n * n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    t.set(i, j, k, f(i, j, k));
                }
            }
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.n + j) * self.n + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[(i * self.n + j) * self.n + k] = v;
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.data)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    n: usize,
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(n: usize) -> Self {
        Tensor4 {
            n,
            data: vec![0.0; n * n * n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.data[((i * self.n + j) * self.n + k) * self.n + l]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: f64) {
        self.data[((i * self.n + j) * self.n + k) * self.n + l] = v;
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.data)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

pub fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn matrix_max_abs(m: &DMatrix<f64>) -> f64 {
    max_abs(m.as_slice())
}
