//! Dimension-generic tensor calculus over a [`MetricProvider`].
//!
//! Index conventions, used throughout the crate:
//!
//! * `Christoffel::gamma.get(i, j, k)` is Γⁱ_jk,
//! * `Christoffel::dgamma.get(i, j, k, l)` is ∂_l Γⁱ_jk,
//! * `RiemannTensor::get(i, j, k, l)` is Rⁱ_jkl with
//!   Rⁱ_jkl = ∂_k Γⁱ_jl − ∂_l Γⁱ_jk + Γⁱ_km Γᵐ_jl − Γⁱ_lm Γᵐ_jk,
//!   so that a space of constant curvature K satisfies
//!   Rⁱ_jkl = K(δⁱ_k g_jl − δⁱ_l g_jk) with K = +1 on the unit sphere,
//! * covariant derivatives of a symmetric 2-tensor are returned as
//!   `get(i, j, k)` = T_ij;k.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::GeometryError;
use crate::tensor::{matrix_max_abs, Tensor3, Tensor4};

/// Metric with its first and second coordinate partials at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricJets {
    pub g: DMatrix<f64>,
    /// `dg[k]` = ∂_k g.
    pub dg: Vec<DMatrix<f64>>,
    /// `ddg[k * n + l]` = ∂_k ∂_l g.
    pub ddg: Vec<DMatrix<f64>>,
}

impl MetricJets {
    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn second(&self, k: usize, l: usize) -> &DMatrix<f64> {
        &self.ddg[k * self.dim() + l]
    }
}

/// A pseudo-Riemannian metric given as a pure map point → (g, ∂g, ∂²g).
pub trait MetricProvider: Sync {
    fn dim(&self) -> usize;

    fn metric_jets(&self, x: &[f64]) -> Result<MetricJets, GeometryError>;

    fn metric(&self, x: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        Ok(self.metric_jets(x)?.g)
    }
}

impl<M: MetricProvider + ?Sized> MetricProvider for &M {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn metric_jets(&self, x: &[f64]) -> Result<MetricJets, GeometryError> {
        (**self).metric_jets(x)
    }
    fn metric(&self, x: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        (**self).metric(x)
    }
}

/// A symmetric 2-tensor field with first partials: `(T, [∂_k T])`.
pub trait SymField: Sync {
    fn dim(&self) -> usize;
    fn eval_with_partials(
        &self,
        x: &[f64],
    ) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>), GeometryError>;
}

/// A vector field with its Jacobian, `jac[(i, j)]` = ∂_j ξⁱ.
pub trait VectorField: Sync {
    fn dim(&self) -> usize;
    fn eval_with_jacobian(&self, x: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>), GeometryError>;
}

/// Central-difference step `cbrt(eps) · max(1, |x|)`.
pub fn fd_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * x.abs().max(1.0)
}

/// Central-difference partials of a matrix-valued map.
pub fn fd_matrix_partials<F>(f: F, x: &[f64]) -> Result<Vec<DMatrix<f64>>, GeometryError>
where
    F: Fn(&[f64]) -> Result<DMatrix<f64>, GeometryError>,
{
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|k| {
            let h = fd_step(x[k]);
            xp[k] = x[k] + h;
            let plus = f(&xp)?;
            xp[k] = x[k] - h;
            let minus = f(&xp)?;
            xp[k] = x[k];
            Ok((plus - minus) / (2.0 * h))
        })
        .collect()
}

/// Central-difference gradient of a scalar map.
pub fn fd_gradient<F>(f: F, x: &[f64]) -> Result<Vec<f64>, GeometryError>
where
    F: Fn(&[f64]) -> Result<f64, GeometryError>,
{
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|k| {
            let h = fd_step(x[k]);
            xp[k] = x[k] + h;
            let plus = f(&xp)?;
            xp[k] = x[k] - h;
            let minus = f(&xp)?;
            xp[k] = x[k];
            Ok((plus - minus) / (2.0 * h))
        })
        .collect()
}

/// Symmetric field whose partials come from central differences of its values.
pub struct FdSymField<F> {
    dim: usize,
    f: F,
}

impl<F> FdSymField<F>
where
    F: Fn(&[f64]) -> Result<DMatrix<f64>, GeometryError> + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        FdSymField { dim, f }
    }
}

impl<F> SymField for FdSymField<F>
where
    F: Fn(&[f64]) -> Result<DMatrix<f64>, GeometryError> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_with_partials(
        &self,
        x: &[f64],
    ) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>), GeometryError> {
        Ok(((self.f)(x)?, fd_matrix_partials(&self.f, x)?))
    }
}

/// Symmetric field given directly by a closure returning value and partials.
pub struct FnSymField<F> {
    dim: usize,
    f: F,
}

impl<F> FnSymField<F>
where
    F: Fn(&[f64]) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>), GeometryError> + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnSymField { dim, f }
    }
}

impl<F> SymField for FnSymField<F>
where
    F: Fn(&[f64]) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>), GeometryError> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_with_partials(
        &self,
        x: &[f64],
    ) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>), GeometryError> {
        (self.f)(x)
    }
}

/// The metric itself viewed as a symmetric field (analytic partials).
pub struct MetricAsField<'a, M: ?Sized>(pub &'a M);

impl<M: MetricProvider + ?Sized> SymField for MetricAsField<'_, M> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn eval_with_partials(
        &self,
        x: &[f64],
    ) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>), GeometryError> {
        let jets = self.0.metric_jets(x)?;
        Ok((jets.g, jets.dg))
    }
}

/// Vector field from a closure returning value and Jacobian.
pub struct FnVectorField<F> {
    dim: usize,
    f: F,
}

impl<F> FnVectorField<F>
where
    F: Fn(&[f64]) -> (Vec<f64>, DMatrix<f64>) + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnVectorField { dim, f }
    }
}

impl<F> VectorField for FnVectorField<F>
where
    F: Fn(&[f64]) -> (Vec<f64>, DMatrix<f64>) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_with_jacobian(&self, x: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>), GeometryError> {
        let (v, jac) = (self.f)(x);
        if v.iter().chain(jac.iter()).all(|c| c.is_finite()) {
            Ok((v, jac))
        } else {
            Err(GeometryError::NonFinite("vector field"))
        }
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<(), GeometryError> {
    if expected == got {
        Ok(())
    } else {
        Err(GeometryError::DimensionMismatch { expected, got })
    }
}

/// Determinant normalized by the product of row norms (Hadamard's bound), in
/// [0, 1]; scale-free measure of how close `g` is to singular.
pub fn normalized_determinant(g: &DMatrix<f64>) -> f64 {
    let det = g.clone().lu().determinant();
    let bound: f64 = g.row_iter().map(|r| r.norm()).product();
    if bound == 0.0 {
        0.0
    } else {
        (det / bound).abs()
    }
}

pub const DEGENERACY_TOL: f64 = 1e-12;

/// Inverse metric through a pivoted LU solve, rejecting degenerate forms.
pub fn metric_inverse(g: &DMatrix<f64>) -> Result<DMatrix<f64>, GeometryError> {
    if !g.iter().all(|v| v.is_finite()) {
        return Err(GeometryError::NonFinite("metric"));
    }
    let ratio = normalized_determinant(g);
    if !(ratio > DEGENERACY_TOL) {
        return Err(GeometryError::DegenerateMetric { ratio });
    }
    g.clone()
        .lu()
        .try_inverse()
        .ok_or(GeometryError::DegenerateMetric { ratio })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    pub gamma: Tensor3,
    pub dgamma: Option<Tensor4>,
    pub ginv: DMatrix<f64>,
}

impl Christoffel {
    pub fn dim(&self) -> usize {
        self.gamma.dim()
    }
}

/// Γⁱ_jk from already evaluated metric partials.
pub fn christoffel_from_jets(
    jets: &MetricJets,
    with_derivatives: bool,
) -> Result<Christoffel, GeometryError> {
    let n = jets.dim();
    let ginv = metric_inverse(&jets.g)?;
    let dg = &jets.dg;
    // first-kind symbols [jk, l] = ½(∂_j g_lk + ∂_k g_jl − ∂_l g_jk), stored (l, j, k)
    let first = Tensor3::from_fn(n, |l, j, k| {
        0.5 * (dg[j][(l, k)] + dg[k][(j, l)] - dg[l][(j, k)])
    });
    let mut gamma = Tensor3::zeros(n);
    for i in 0..n {
        for j in 0..n {
            for k in j..n {
                let s: f64 = (0..n).map(|l| ginv[(i, l)] * first.get(l, j, k)).sum();
                gamma.set(i, j, k, s);
                gamma.set(i, k, j, s);
            }
        }
    }
    let dgamma = if with_derivatives {
        // ∂_m Γⁱ_jk = ∂_m gⁱˡ [jk,l] + gⁱˡ ∂_m [jk,l],  ∂_m g⁻¹ = −g⁻¹ ∂_m g g⁻¹
        let mut d = Tensor4::zeros(n);
        for m in 0..n {
            let dginv = -(&ginv * &dg[m] * &ginv);
            let dfirst = Tensor3::from_fn(n, |l, j, k| {
                0.5 * (jets.second(j, m)[(l, k)] + jets.second(k, m)[(j, l)]
                    - jets.second(l, m)[(j, k)])
            });
            for i in 0..n {
                for j in 0..n {
                    for k in j..n {
                        let s: f64 = (0..n)
                            .map(|l| {
                                dginv[(i, l)] * first.get(l, j, k)
                                    + ginv[(i, l)] * dfirst.get(l, j, k)
                            })
                            .sum();
                        d.set(i, j, k, m, s);
                        d.set(i, k, j, m, s);
                    }
                }
            }
        }
        Some(d)
    } else {
        None
    };
    Ok(Christoffel {
        gamma,
        dgamma,
        ginv,
    })
}

pub fn christoffel_at<M: MetricProvider + ?Sized>(
    m: &M,
    x: &[f64],
    with_derivatives: bool,
) -> Result<Christoffel, GeometryError> {
    check_dim(m.dim(), x.len())?;
    christoffel_from_jets(&m.metric_jets(x)?, with_derivatives)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiemannTensor {
    pub r: Tensor4,
    /// Largest magnitude among the individual ∂Γ and ΓΓ terms.
    pub term_scale: f64,
}

impl RiemannTensor {
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.r.get(i, j, k, l)
    }

    pub fn dim(&self) -> usize {
        self.r.dim()
    }
}

pub fn riemann_from_christoffel(ch: &Christoffel) -> RiemannTensor {
    let n = ch.dim();
    let g = &ch.gamma;
    let dg = ch
        .dgamma
        .as_ref()
        .expect("riemann_from_christoffel needs Christoffel derivatives");
    let mut r = Tensor4::zeros(n);
    let mut scale = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let a = dg.get(i, j, l, k);
                    let b = dg.get(i, j, k, l);
                    let c: f64 = (0..n).map(|m| g.get(i, k, m) * g.get(m, j, l)).sum();
                    let d: f64 = (0..n).map(|m| g.get(i, l, m) * g.get(m, j, k)).sum();
                    scale = scale.max(a.abs()).max(b.abs()).max(c.abs()).max(d.abs());
                    r.set(i, j, k, l, a - b + c - d);
                }
            }
        }
    }
    RiemannTensor {
        r,
        term_scale: scale,
    }
}

pub fn riemann_at<M: MetricProvider + ?Sized>(
    m: &M,
    x: &[f64],
) -> Result<RiemannTensor, GeometryError> {
    Ok(riemann_from_christoffel(&christoffel_at(m, x, true)?))
}

/// The constant-curvature model tensor δⁱ_k g_jl − δⁱ_l g_jk.
pub fn constant_curvature_model(g: &DMatrix<f64>) -> Tensor4 {
    let n = g.nrows();
    let mut b = Tensor4::zeros(n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut v = 0.0;
                    if i == k {
                        v += g[(j, l)];
                    }
                    if i == l {
                        v -= g[(j, k)];
                    }
                    b.set(i, j, k, l, v);
                }
            }
        }
    }
    b
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureFit {
    pub k: f64,
    pub max_abs_residual: f64,
    /// Residual divided by the largest term entering R or K·model.
    pub relative_residual: f64,
}

/// Least-squares fit of R ≈ K (δⁱ_k g_jl − δⁱ_l g_jk) over all components.
pub fn fit_constant_curvature(riem: &RiemannTensor, g: &DMatrix<f64>) -> CurvatureFit {
    let model = constant_curvature_model(g);
    let (num, den) = riem
        .r
        .as_slice()
        .iter()
        .zip(model.as_slice())
        .fold((0.0, 0.0), |(n, d), (r, b)| (n + r * b, d + b * b));
    let k = if den > 0.0 { num / den } else { 0.0 };
    let max_abs = riem
        .r
        .as_slice()
        .iter()
        .zip(model.as_slice())
        .fold(0.0f64, |m, (r, b)| m.max((r - k * b).abs()));
    let scale = riem.term_scale.max(k.abs() * model.max_abs());
    let relative = if scale > 0.0 { max_abs / scale } else { 0.0 };
    CurvatureFit {
        k,
        max_abs_residual: max_abs,
        relative_residual: relative,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovariantDerivative {
    /// `values.get(i, j, k)` = T_ij;k.
    pub values: Tensor3,
    /// Largest magnitude among ∂_k T_ij and the two Γ·T contractions.
    pub term_scale: f64,
}

/// T_ij;k = ∂_k T_ij − Γᵐ_ki T_mj − Γᵐ_kj T_im.
pub fn covariant_derivative_from_parts(
    gamma: &Tensor3,
    t: &DMatrix<f64>,
    dt: &[DMatrix<f64>],
) -> Result<CovariantDerivative, GeometryError> {
    let n = gamma.dim();
    check_dim(n, t.nrows())?;
    check_dim(n, dt.len())?;
    let mut values = Tensor3::zeros(n);
    let mut scale = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let d = dt[k][(i, j)];
                let a: f64 = (0..n).map(|m| gamma.get(m, k, i) * t[(m, j)]).sum();
                let b: f64 = (0..n).map(|m| gamma.get(m, k, j) * t[(i, m)]).sum();
                scale = scale.max(d.abs()).max(a.abs()).max(b.abs());
                values.set(i, j, k, d - a - b);
            }
        }
    }
    if !values.as_slice().iter().all(|v| v.is_finite()) {
        return Err(GeometryError::NonFinite("covariant derivative"));
    }
    Ok(CovariantDerivative {
        values,
        term_scale: scale,
    })
}

pub fn covariant_derivative_sym2<M: MetricProvider + ?Sized, T: SymField + ?Sized>(
    m: &M,
    field: &T,
    x: &[f64],
) -> Result<CovariantDerivative, GeometryError> {
    check_dim(m.dim(), field.dim())?;
    let ch = christoffel_at(m, x, false)?;
    let (t, dt) = field.eval_with_partials(x)?;
    covariant_derivative_from_parts(&ch.gamma, &t, &dt)
}

/// Relative eigenvalue threshold below which the metric counts as degenerate.
pub const SIGNATURE_TOL: f64 = 1e-12;

/// (number of positive, number of negative) eigenvalues of a symmetric form.
pub fn signature_of(g: &DMatrix<f64>) -> Result<(usize, usize), GeometryError> {
    if !g.iter().all(|v| v.is_finite()) {
        return Err(GeometryError::NonFinite("metric"));
    }
    let eig = SymmetricEigen::new(g.clone());
    let largest = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = SIGNATURE_TOL * largest;
    if let Some(small) = eig.eigenvalues.iter().find(|v| v.abs() <= tol) {
        return Err(GeometryError::DegenerateMetric {
            ratio: if largest > 0.0 {
                small.abs() / largest
            } else {
                0.0
            },
        });
    }
    let plus = eig.eigenvalues.iter().filter(|v| **v > 0.0).count();
    Ok((plus, g.nrows() - plus))
}

pub fn signature_at<M: MetricProvider + ?Sized>(
    m: &M,
    x: &[f64],
) -> Result<(usize, usize), GeometryError> {
    check_dim(m.dim(), x.len())?;
    signature_of(&m.metric(x)?)
}

/// Max-abs distance between two matrices relative to the larger of their
/// max-abs norms.
pub fn relative_matrix_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = matrix_max_abs(a).max(matrix_max_abs(b));
    if scale == 0.0 {
        0.0
    } else {
        matrix_max_abs(&(a - b)) / scale
    }
}
