//! Pointwise numerical certificates for the [2211] family.
//!
//! Every residual is reported twice: as a max-abs value and divided by the
//! largest magnitude among the individual terms that enter it at that point.
//! Verdicts use the relative figure.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;
use crate::hspace2211::{
    h_tensor_at, h_tensor_jets_at, metric_at, phi_from_trace, phi_gradient_at, roots_at,
    HSpaceParams, HTensorField, PhiAt, Point6, Signs, SymForm6,
};
use crate::metrics::FdMetric;
use crate::tensor::{matrix_max_abs, Tensor3};
use crate::tensorcalc::{
    check_dim, christoffel_at, covariant_derivative_from_parts, fd_gradient,
    fit_constant_curvature, riemann_at, signature_at, FdSymField, MetricProvider, SymField,
    VectorField,
};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const FD_TOL: f64 = 1e-5;

/// A rank-3 residual with its normalizations.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorResidual {
    pub values: Tensor3,
    pub max_abs: f64,
    pub term_scale: f64,
    pub relative: f64,
}

impl TensorResidual {
    fn new(values: Tensor3, term_scale: f64) -> Self {
        let max_abs = values.max_abs();
        let relative = if term_scale > 0.0 {
            max_abs / term_scale
        } else {
            0.0
        };
        TensorResidual {
            values,
            max_abs,
            term_scale,
            relative,
        }
    }
}

/// E_ijk = h_ij;k − 2 g_ij φ_,k − g_ik φ_,j − g_jk φ_,i for an arbitrary
/// metric and symmetric field. φ_,k comes from the trace of the field unless
/// `phi_grad` is supplied.
pub fn eisenhart_residual_of<M, T>(
    m: &M,
    field: &T,
    x: &[f64],
    phi_grad: Option<&[f64]>,
) -> Result<TensorResidual, GeometryError>
where
    M: MetricProvider + ?Sized,
    T: SymField + ?Sized,
{
    let n = m.dim();
    check_dim(n, field.dim())?;
    check_dim(n, x.len())?;
    let jets = m.metric_jets(x)?;
    let ch = crate::tensorcalc::christoffel_from_jets(&jets, false)?;
    let (h, dh) = field.eval_with_partials(x)?;
    let phi = match phi_grad {
        Some(p) => {
            check_dim(n, p.len())?;
            p.to_vec()
        }
        None => phi_from_trace(&jets.g, &jets.dg, &h, &dh)?.grad,
    };
    let cov = covariant_derivative_from_parts(&ch.gamma, &h, &dh)?;
    let g = &jets.g;
    let mut scale = cov.term_scale;
    let e = Tensor3::from_fn(n, |i, j, k| {
        let t1 = 2.0 * g[(i, j)] * phi[k];
        let t2 = g[(i, k)] * phi[j];
        let t3 = g[(j, k)] * phi[i];
        scale = scale.max(t1.abs()).max(t2.abs()).max(t3.abs());
        cov.values.get(i, j, k) - t1 - t2 - t3
    });
    if !e.as_slice().iter().all(|v| v.is_finite()) {
        return Err(GeometryError::NonFinite("Eisenhart residual"));
    }
    Ok(TensorResidual::new(e, scale))
}

/// Eisenhart residual of an instance with exact jets.
pub fn eisenhart_residual(
    params: &HSpaceParams,
    pt: &Point6,
) -> Result<TensorResidual, GeometryError> {
    eisenhart_residual_of(params, &HTensorField(params), pt.as_slice(), None)
}

/// Same residual with every partial (of g and h) from central differences.
pub fn eisenhart_residual_fd(
    params: &HSpaceParams,
    pt: &Point6,
) -> Result<TensorResidual, GeometryError> {
    let metric = FdMetric::new(6, |y: &[f64]| {
        metric_at(params, &Point6::try_from(y)?).map(|g| g.to_matrix())
    });
    let field = FdSymField::new(6, |y: &[f64]| {
        h_tensor_at(params, &Point6::try_from(y)?).map(|h| h.to_matrix())
    });
    eisenhart_residual_of(&metric, &field, pt.as_slice(), None)
}

/// a₁·h + a₂·g of an instance, optionally with h₂₂ multiplied by a factor
/// (a deliberately broken solution for negative tests).
#[derive(Debug, Clone, Copy)]
pub struct CombinedHField<'a> {
    pub params: &'a HSpaceParams,
    pub a1: f64,
    pub a2: f64,
    pub perturb_h22: Option<f64>,
}

impl<'a> CombinedHField<'a> {
    pub fn new(params: &'a HSpaceParams, a1: f64, a2: f64) -> Self {
        CombinedHField {
            params,
            a1,
            a2,
            perturb_h22: None,
        }
    }

    pub fn perturbed(params: &'a HSpaceParams, factor: f64) -> Self {
        CombinedHField {
            params,
            a1: 1.0,
            a2: 0.0,
            perturb_h22: Some(factor),
        }
    }
}

impl SymField for CombinedHField<'_> {
    fn dim(&self) -> usize {
        6
    }

    fn eval_with_partials(
        &self,
        x: &[f64],
    ) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>), GeometryError> {
        let pt = Point6::try_from(x)?;
        let h = h_tensor_jets_at(self.params, &pt)?;
        let g = self.params.metric_jets(x)?;
        let combine = |hf: &SymForm6, gm: &DMatrix<f64>| {
            let mut hm = hf.to_matrix();
            if let Some(f) = self.perturb_h22 {
                hm[(1, 1)] *= f;
            }
            hm * self.a1 + gm * self.a2
        };
        let value = combine(&h.value, &g.g);
        let partials = (0..6).map(|k| combine(&h.d1[k], &g.dg[k])).collect();
        Ok((value, partials))
    }
}

/// a_ij = h_ij − 4(φ + shift) g_ij.
#[derive(Debug, Clone, Copy)]
pub struct KillingForm<'a> {
    pub params: &'a HSpaceParams,
    pub phi_shift: f64,
}

impl<'a> KillingForm<'a> {
    pub fn new(params: &'a HSpaceParams) -> Self {
        KillingForm {
            params,
            phi_shift: 0.0,
        }
    }

    pub fn value_at(&self, pt: &Point6) -> Result<DMatrix<f64>, GeometryError> {
        Ok(self.eval_with_partials(pt.as_slice())?.0)
    }
}

impl SymField for KillingForm<'_> {
    fn dim(&self) -> usize {
        6
    }

    fn eval_with_partials(
        &self,
        x: &[f64],
    ) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>), GeometryError> {
        let pt = Point6::try_from(x)?;
        let h = h_tensor_jets_at(self.params, &pt)?;
        let g = self.params.metric_jets(x)?;
        let PhiAt { phi, grad } = phi_gradient_at(self.params, &pt)?;
        let phi = phi + self.phi_shift;
        let value = h.value.to_matrix() - &g.g * (4.0 * phi);
        let partials = (0..6)
            .map(|k| h.d1[k].to_matrix() - &g.g * (4.0 * grad[k]) - &g.dg[k] * (4.0 * phi))
            .collect();
        Ok((value, partials))
    }
}

/// Symmetrized covariant derivative a_ij;k + a_jk;i + a_ki;j of a field.
pub fn killing_residual_of<M, T>(
    m: &M,
    field: &T,
    x: &[f64],
) -> Result<TensorResidual, GeometryError>
where
    M: MetricProvider + ?Sized,
    T: SymField + ?Sized,
{
    check_dim(m.dim(), field.dim())?;
    let ch = christoffel_at(m, x, false)?;
    let (a, da) = field.eval_with_partials(x)?;
    let cov = covariant_derivative_from_parts(&ch.gamma, &a, &da)?;
    let c = &cov.values;
    let sym = Tensor3::from_fn(m.dim(), |i, j, k| {
        c.get(i, j, k) + c.get(j, k, i) + c.get(k, i, j)
    });
    Ok(TensorResidual::new(sym, cov.term_scale))
}

pub fn killing_tensor_residual(
    params: &HSpaceParams,
    pt: &Point6,
) -> Result<TensorResidual, GeometryError> {
    killing_residual_of(params, &KillingForm::new(params), pt.as_slice())
}

/// Outcome of a check over a sample of points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub check: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub params: Option<HSpaceParams>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub coefficients: Option<[f64; 2]>,
    pub sample: Vec<Point6>,
    pub evaluated: usize,
    pub skipped: usize,
    pub max_abs_residual: f64,
    pub max_rel_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub worst_point: Option<Point6>,
    pub tolerance: f64,
    pub passed: bool,
}

impl VerificationReport {
    /// Runs `residual` at every sample point; points where evaluation fails
    /// with a domain error are skipped and counted.
    pub fn pointwise<F>(
        check: impl Into<String>,
        sample: &[Point6],
        tolerance: f64,
        residual: F,
    ) -> Result<Self, GeometryError>
    where
        F: Fn(&Point6) -> Result<TensorResidual, GeometryError> + Sync,
    {
        let results: Vec<_> = sample.par_iter().map(&residual).collect();
        let mut report = VerificationReport {
            check: check.into(),
            params: None,
            coefficients: None,
            sample: sample.to_vec(),
            evaluated: 0,
            skipped: 0,
            max_abs_residual: 0.0,
            max_rel_residual: 0.0,
            worst_point: None,
            tolerance,
            passed: false,
        };
        for (pt, r) in sample.iter().zip(results) {
            match r {
                Ok(r) => {
                    report.evaluated += 1;
                    report.max_abs_residual = report.max_abs_residual.max(r.max_abs);
                    if r.relative > report.max_rel_residual || report.worst_point.is_none() {
                        report.max_rel_residual = report.max_rel_residual.max(r.relative);
                        report.worst_point = Some(*pt);
                    }
                }
                Err(e) if e.is_domain_error() => report.skipped += 1,
                Err(e) => return Err(e),
            }
        }
        report.passed = report.evaluated > 0 && report.max_rel_residual <= tolerance;
        Ok(report)
    }

    pub fn with_params(mut self, params: &HSpaceParams) -> Self {
        self.params = Some(params.clone());
        self
    }
}

/// a₁h + a₂g checked against the Eisenhart equation with φ′_,k = a₁ φ_,k.
pub fn linearity_check(
    params: &HSpaceParams,
    a1: f64,
    a2: f64,
    sample: &[Point6],
    tolerance: f64,
) -> Result<VerificationReport, GeometryError> {
    if sample.is_empty() {
        return Err(GeometryError::InvalidParams("empty sample".into()));
    }
    let field = CombinedHField::new(params, a1, a2);
    let mut report = VerificationReport::pointwise(
        format!("linearity(a1={a1}, a2={a2})"),
        sample,
        tolerance,
        |pt| {
            let phi: Vec<f64> = phi_gradient_at(params, pt)?
                .grad
                .iter()
                .map(|v| a1 * v)
                .collect();
            eisenhart_residual_of(params, &field, pt.as_slice(), Some(&phi))
        },
    )?;
    report.coefficients = Some([a1, a2]);
    Ok(report.with_params(params))
}

/// Matrix residual with normalizations.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixResidual {
    pub values: DMatrix<f64>,
    pub max_abs: f64,
    pub term_scale: f64,
    pub relative: f64,
}

/// (L_ξ g)_ij − a₁ h_ij − a₂ g_ij with
/// (L_ξ g)_ij = ξᵏ ∂_k g_ij + g_kj ∂_i ξᵏ + g_ik ∂_j ξᵏ.
/// `h` may be omitted when `a1` is zero.
pub fn projective_motion_residual<M, V>(
    m: &M,
    xi: &V,
    a1: f64,
    a2: f64,
    h: Option<&dyn SymField>,
    x: &[f64],
) -> Result<MatrixResidual, GeometryError>
where
    M: MetricProvider + ?Sized,
    V: VectorField + ?Sized,
{
    let n = m.dim();
    check_dim(n, xi.dim())?;
    check_dim(n, x.len())?;
    let jets = m.metric_jets(x)?;
    let (v, jac) = xi.eval_with_jacobian(x)?;
    let g = &jets.g;
    let h_value = match (h, a1 != 0.0) {
        (Some(field), _) => field.eval_with_partials(x)?.0,
        (None, false) => DMatrix::zeros(n, n),
        (None, true) => {
            return Err(GeometryError::InvalidParams(
                "a nonzero a1 needs the h field".into(),
            ))
        }
    };
    let mut scale = 0.0f64;
    let values = DMatrix::from_fn(n, n, |i, j| {
        let transport: f64 = (0..n).map(|k| v[k] * jets.dg[k][(i, j)]).sum();
        let left: f64 = (0..n).map(|k| g[(k, j)] * jac[(k, i)]).sum();
        let right: f64 = (0..n).map(|k| g[(i, k)] * jac[(k, j)]).sum();
        let th = a1 * h_value[(i, j)];
        let tg = a2 * g[(i, j)];
        scale = scale
            .max(transport.abs())
            .max(left.abs())
            .max(right.abs())
            .max(th.abs())
            .max(tg.abs());
        transport + left + right - th - tg
    });
    if !values.iter().all(|v| v.is_finite()) {
        return Err(GeometryError::NonFinite("Lie derivative"));
    }
    let max_abs = matrix_max_abs(&values);
    Ok(MatrixResidual {
        relative: if scale > 0.0 { max_abs / scale } else { 0.0 },
        values,
        max_abs,
        term_scale: scale,
    })
}

/// div ξ = ∂_k ξᵏ + Γᵏ_kl ξˡ.
pub fn divergence<M, V>(m: &M, xi: &V, x: &[f64]) -> Result<f64, GeometryError>
where
    M: MetricProvider + ?Sized,
    V: VectorField + ?Sized,
{
    let n = m.dim();
    let ch = christoffel_at(m, x, false)?;
    let (v, jac) = xi.eval_with_jacobian(x)?;
    let mut div: f64 = (0..n).map(|k| jac[(k, k)]).sum();
    for k in 0..n {
        for l in 0..n {
            div += ch.gamma.get(k, k, l) * v[l];
        }
    }
    Ok(div)
}

/// Gradient relation between the defining function of a motion,
/// div ξ / (n + 1), and a₁ times the Eisenhart φ gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct DefiningFunctionCheck {
    pub motion_gradient: Vec<f64>,
    pub expected_gradient: Vec<f64>,
    pub relative_gap: f64,
}

/// Compares ∂_k(div ξ/(n+1)) (central differences) with a₁·φ_,k.
pub fn defining_function_check<M, V>(
    m: &M,
    xi: &V,
    a1: f64,
    phi_grad: &[f64],
    x: &[f64],
) -> Result<DefiningFunctionCheck, GeometryError>
where
    M: MetricProvider + ?Sized,
    V: VectorField + ?Sized,
{
    let n = m.dim();
    check_dim(n, phi_grad.len())?;
    let motion_gradient = fd_gradient(|y| Ok(divergence(m, xi, y)? / (n + 1) as f64), x)?;
    let expected_gradient: Vec<f64> = phi_grad.iter().map(|v| a1 * v).collect();
    let scale = motion_gradient
        .iter()
        .chain(expected_gradient.iter())
        .fold(0.0f64, |s, v| s.max(v.abs()));
    let gap = motion_gradient
        .iter()
        .zip(&expected_gradient)
        .fold(0.0f64, |s, (a, b)| s.max((a - b).abs()));
    Ok(DefiningFunctionCheck {
        motion_gradient,
        expected_gradient,
        relative_gap: if scale > 0.0 { gap / scale } else { 0.0 },
    })
}

/// ρ values at a point. Index 0 stands for p = 2 (resp. σ = 5), index 1 for
/// p = 4 (resp. σ = 6).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoValues {
    pub rho_p: [f64; 2],
    /// ρ₂₄ = ρ₄₂.
    pub rho_24: f64,
    /// `rho_sigma_p[σ][p]`.
    pub rho_sigma_p: [[f64; 2]; 2],
}

impl RhoValues {
    pub fn rho_pq(&self, p: usize, q: usize) -> f64 {
        assert!(p != q && p < 2 && q < 2, "rho_pq needs p != q in {{0, 1}}");
        self.rho_24
    }

    pub fn max_abs(&self) -> f64 {
        self.rho_p
            .iter()
            .chain(self.rho_sigma_p.iter().flatten())
            .fold(self.rho_24.abs(), |m, v| m.max(v.abs()))
    }
}

/// Evaluates ρ_p, ρ_pq and ρ_σp. Inner sums over roots other than f_σ are
/// weighted by Segre multiplicity (f₂ and f₄ counted twice).
pub fn rho_values(params: &HSpaceParams, pt: &Point6) -> Result<RhoValues, GeometryError> {
    let roots = roots_at(params, pt)?;
    let g = metric_at(params, pt)?;
    let fp = [roots.f2.value, roots.f4.value];
    let sig = [roots.f5, roots.f6];
    let gss = [g.get(4, 4), g.get(5, 5)];

    let rho_p = [0, 1].map(|p| {
        -0.25
            * (0..2)
                .map(|s| sig[s].d1.powi(2) / ((sig[s].value - fp[p]).powi(2) * gss[s]))
                .sum::<f64>()
    });
    let rho_24 = -0.25
        * (0..2)
            .map(|s| sig[s].d1.powi(2) / ((sig[s].value - fp[0]) * (sig[s].value - fp[1]) * gss[s]))
            .sum::<f64>();
    let weighted = roots.weighted();
    let rho_sigma_p = [0, 1].map(|s| {
        let fs = sig[s];
        let other = 1 - s;
        // Σ_{i≠σ} (f_i − f_σ)⁻¹ with multiplicities: 2/(f₂−f_σ) + 2/(f₄−f_σ) + 1/(f_γ−f_σ)
        let inner: f64 = weighted
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != 2 + s)
            .map(|(_, (f, mult))| mult / (f - fs.value))
            .sum();
        [0, 1].map(|p| {
            let dp = fs.value - fp[p];
            // (f′)²·{2f″/(f′)² − 1/(f_σ−f_p) + inner}, expanded so f′ = 0 is regular
            let brace = 2.0 * fs.d2 - fs.d1.powi(2) / dp + fs.d1.powi(2) * inner;
            let own = -0.25 * brace / (dp * gss[s]);
            let fg = sig[other];
            let cross =
                -0.25 * fg.d1.powi(2) / ((fg.value - fp[p]) * (fg.value - fs.value) * gss[other]);
            own + cross
        })
    });
    let out = RhoValues {
        rho_p,
        rho_24,
        rho_sigma_p,
    };
    if out.max_abs().is_finite() {
        Ok(out)
    } else {
        Err(GeometryError::NonFinite("rho values"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointCurvature {
    pub point: Point6,
    pub k: f64,
    pub relative_residual: f64,
}

/// Direct constant-curvature test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureVerdict {
    pub is_constant: bool,
    pub k: f64,
    pub k_dispersion: f64,
    pub max_relative_residual: f64,
    pub tolerance: f64,
    pub per_point: Vec<PointCurvature>,
    pub skipped: usize,
}

/// Criterion on ρ values and ε, ε̃.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionVerdict {
    pub holds: bool,
    pub epsilons_vanish: bool,
    pub max_relative_violation: f64,
    pub tolerance: f64,
    pub per_point: Vec<f64>,
    pub skipped: usize,
}

/// Fits K pointwise by least squares and tests constancy over the sample.
pub fn direct_curvature_check<M: MetricProvider + ?Sized>(
    m: &M,
    sample: &[Vec<f64>],
    tolerance: f64,
) -> Result<CurvatureVerdict, GeometryError> {
    let results: Vec<_> = sample
        .par_iter()
        .map(|x| -> Result<(f64, f64), GeometryError> {
            let r = riemann_at(m, x)?;
            let fit = fit_constant_curvature(&r, &m.metric(x)?);
            Ok((fit.k, fit.relative_residual))
        })
        .collect();
    let mut per_point = Vec::new();
    let mut skipped = 0;
    for (x, r) in sample.iter().zip(results) {
        match r {
            Ok((k, rel)) => {
                let mut coords = [0.0; 6];
                for (c, v) in coords.iter_mut().zip(x) {
                    *c = *v;
                }
                per_point.push(PointCurvature {
                    point: Point6::new(coords)?,
                    k,
                    relative_residual: rel,
                })
            }
            Err(e) if e.is_domain_error() => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if per_point.is_empty() {
        return Err(GeometryError::InvalidParams(
            "no valid sample point for the curvature check".into(),
        ));
    }
    let ks: Vec<f64> = per_point.iter().map(|p| p.k).collect();
    let k = ks.iter().sum::<f64>() / ks.len() as f64;
    let lo = ks.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ks.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let max_rel = per_point
        .iter()
        .fold(0.0f64, |m, p| m.max(p.relative_residual));
    let dispersion = hi - lo;
    Ok(CurvatureVerdict {
        is_constant: max_rel <= tolerance && dispersion <= tolerance * k.abs().max(1.0),
        k,
        k_dispersion: dispersion,
        max_relative_residual: max_rel,
        tolerance,
        per_point,
        skipped,
    })
}

/// Largest of |ρ_p − ρ_σp| and |ρ_p − ρ_pq| relative to the largest |ρ|.
pub fn criterion_violation(rho: &RhoValues) -> f64 {
    let scale = rho.max_abs();
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0f64;
    for p in 0..2 {
        worst = worst.max((rho.rho_p[p] - rho.rho_pq(p, 1 - p)).abs());
        for s in 0..2 {
            worst = worst.max((rho.rho_p[p] - rho.rho_sigma_p[s][p]).abs());
        }
    }
    worst / scale
}

/// Runs both constant-curvature characterizations over the sample.
pub fn constant_curvature_check(
    params: &HSpaceParams,
    sample: &[Point6],
    tolerance: f64,
) -> Result<(CurvatureVerdict, CriterionVerdict), GeometryError> {
    if sample.is_empty() {
        return Err(GeometryError::InvalidParams("empty sample".into()));
    }
    let coords: Vec<Vec<f64>> = sample.iter().map(|p| p.as_slice().to_vec()).collect();
    let direct = direct_curvature_check(params, &coords, tolerance)?;

    let rhos: Vec<_> = sample.par_iter().map(|p| rho_values(params, p)).collect();
    let mut per_point = Vec::new();
    let mut skipped = 0;
    for r in rhos {
        match r {
            Ok(rho) => per_point.push(criterion_violation(&rho)),
            Err(e) if e.is_domain_error() => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    let epsilons_vanish = params.epsilon() == 0 && params.epsilon_tilde() == 0;
    let max_violation = per_point.iter().fold(0.0f64, |m, v| m.max(*v));
    let criterion = CriterionVerdict {
        holds: epsilons_vanish && !per_point.is_empty() && max_violation <= tolerance,
        epsilons_vanish,
        max_relative_violation: max_violation,
        tolerance,
        per_point,
        skipped,
    };
    Ok((direct, criterion))
}

/// Number of sample points showing a given (positive, negative) count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureCount {
    pub positive: usize,
    pub negative: usize,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureTally {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub signs: Option<Signs>,
    pub observed: Vec<SignatureCount>,
    /// The signature if every evaluated point agrees.
    pub constant: Option<[usize; 2]>,
    pub evaluated: usize,
    pub skipped: usize,
}

/// Eigenvalue signature of a metric over a sample; degenerate or invalid
/// points are skipped.
pub fn signature_tally<M: MetricProvider + ?Sized>(
    m: &M,
    sample: &[Point6],
) -> Result<SignatureTally, GeometryError> {
    let results: Vec<_> = sample
        .par_iter()
        .map(|p| signature_at(m, p.as_slice()))
        .collect();
    let mut observed: Vec<SignatureCount> = Vec::new();
    let mut skipped = 0;
    for r in results {
        match r {
            Ok((positive, negative)) => {
                match observed
                    .iter_mut()
                    .find(|c| c.positive == positive && c.negative == negative)
                {
                    Some(c) => c.points += 1,
                    None => observed.push(SignatureCount {
                        positive,
                        negative,
                        points: 1,
                    }),
                }
            }
            Err(e) if e.is_domain_error() => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    observed.sort_by_key(|c| (c.positive, c.negative));
    let evaluated = observed.iter().map(|c| c.points).sum();
    let constant = match observed.as_slice() {
        [only] => Some([only.positive, only.negative]),
        _ => None,
    };
    Ok(SignatureTally {
        signs: None,
        observed,
        constant,
        evaluated,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureProbe {
    /// (positive, negative) eigenvalue counts being searched for.
    pub target: [usize; 2],
    pub assignments: Vec<SignatureTally>,
    /// Sign assignments whose signature equals `target` at every point.
    pub matching: Vec<Signs>,
}

/// Tries all 16 sign assignments of an instance over the sample.
pub fn signature_probe(
    params: &HSpaceParams,
    sample: &[Point6],
    target: [usize; 2],
) -> Result<SignatureProbe, GeometryError> {
    let mut assignments = Vec::with_capacity(16);
    let mut matching = Vec::new();
    for signs in Signs::all() {
        let mut tally = signature_tally(&params.with_signs(signs), sample)?;
        tally.signs = Some(signs);
        if tally.evaluated > 0 && tally.constant == Some(target) {
            matching.push(signs);
        }
        assignments.push(tally);
    }
    Ok(SignatureProbe {
        target,
        assignments,
        matching,
    })
}
