//! Reference metrics used by tests, benchmarks and the `flat` config kind.

use nalgebra::DMatrix;

use crate::error::GeometryError;
use crate::tensorcalc::{check_dim, fd_step, MetricJets, MetricProvider};

/// Constant-coefficient metric (flat).
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantMetric {
    g: DMatrix<f64>,
}

impl ConstantMetric {
    pub fn new(g: DMatrix<f64>) -> Self {
        ConstantMetric { g }
    }

    pub fn diagonal(entries: &[f64]) -> Self {
        ConstantMetric {
            g: DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(entries)),
        }
    }
}

impl MetricProvider for ConstantMetric {
    fn dim(&self) -> usize {
        self.g.nrows()
    }

    fn metric_jets(&self, x: &[f64]) -> Result<MetricJets, GeometryError> {
        let n = self.dim();
        check_dim(n, x.len())?;
        Ok(MetricJets {
            g: self.g.clone(),
            dg: vec![DMatrix::zeros(n, n); n],
            ddg: vec![DMatrix::zeros(n, n); n * n],
        })
    }
}

/// Round 2-sphere of radius `r` in (θ, φ): ds² = r²(dθ² + sin²θ dφ²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundSphere {
    pub radius: f64,
}

impl RoundSphere {
    pub fn new(radius: f64) -> Self {
        RoundSphere { radius }
    }

    pub fn unit() -> Self {
        Self::new(1.0)
    }
}

impl MetricProvider for RoundSphere {
    fn dim(&self) -> usize {
        2
    }

    fn metric_jets(&self, x: &[f64]) -> Result<MetricJets, GeometryError> {
        check_dim(2, x.len())?;
        let r2 = self.radius * self.radius;
        let (s, c) = x[0].sin_cos();
        let diag = |a: f64, b: f64| DMatrix::from_row_slice(2, 2, &[a, 0.0, 0.0, b]);
        let zero = DMatrix::zeros(2, 2);
        Ok(MetricJets {
            g: diag(r2, r2 * s * s),
            dg: vec![diag(0.0, 2.0 * r2 * s * c), zero.clone()],
            ddg: vec![
                diag(0.0, 2.0 * r2 * (c * c - s * s)),
                zero.clone(),
                zero.clone(),
                zero,
            ],
        })
    }
}

/// Wraps a plain metric map; partials come from central differences.
pub struct FdMetric<F> {
    dim: usize,
    f: F,
}

impl<F> FdMetric<F>
where
    F: Fn(&[f64]) -> Result<DMatrix<f64>, GeometryError> + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        FdMetric { dim, f }
    }
}

impl<F> MetricProvider for FdMetric<F>
where
    F: Fn(&[f64]) -> Result<DMatrix<f64>, GeometryError> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn metric(&self, x: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        check_dim(self.dim, x.len())?;
        (self.f)(x)
    }

    fn metric_jets(&self, x: &[f64]) -> Result<MetricJets, GeometryError> {
        let n = self.dim;
        check_dim(n, x.len())?;
        let g = (self.f)(x)?;
        let mut dg = Vec::with_capacity(n);
        let mut xp = x.to_vec();
        for k in 0..n {
            let h = fd_step(x[k]);
            xp[k] = x[k] + h;
            let p = (self.f)(&xp)?;
            xp[k] = x[k] - h;
            let m = (self.f)(&xp)?;
            xp[k] = x[k];
            dg.push((p - m) / (2.0 * h));
        }
        // mixed second differences with the larger step eps^(1/4)
        let mut ddg = vec![DMatrix::zeros(n, n); n * n];
        for k in 0..n {
            for l in k..n {
                let hk = f64::EPSILON.powf(0.25) * x[k].abs().max(1.0);
                let hl = f64::EPSILON.powf(0.25) * x[l].abs().max(1.0);
                let eval = |sk: f64, sl: f64| {
                    let mut y = x.to_vec();
                    y[k] += sk * hk;
                    y[l] += sl * hl;
                    (self.f)(&y)
                };
                let d = if k == l {
                    (eval(1.0, 0.0)? - &g * 2.0 + eval(-1.0, 0.0)?) / (hk * hk)
                } else {
                    (eval(1.0, 1.0)? - eval(1.0, -1.0)? - eval(-1.0, 1.0)? + eval(-1.0, -1.0)?)
                        / (4.0 * hk * hl)
                };
                ddg[k * n + l] = d.clone();
                ddg[l * n + k] = d;
            }
        }
        Ok(MetricJets { g, dg, ddg })
    }
}
