//! Geodesic flow of a [`MetricProvider`] with conservation monitoring.
//!
//! Integration uses the Dormand–Prince 5(4) pair with local extrapolation and
//! a PI step-size controller. Any provider error inside a step is a wall: the
//! step is rejected and shrunk, and if the step size underflows the run halts
//! with everything accepted so far.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::GeometryError;
use crate::hspace2211::{h_tensor_at, metric_at, HSpaceParams, Point6};
use crate::tensorcalc::{christoffel_at, metric_inverse, MetricProvider};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicState {
    pub t: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

impl GeodesicState {
    pub fn new(t: f64, x: Vec<f64>, v: Vec<f64>) -> Self {
        GeodesicState { t, x, v }
    }

    fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.x.len() * 2,
            self.x.iter().chain(self.v.iter()).copied(),
        )
    }

    fn from_vector(t: f64, y: &DVector<f64>) -> Self {
        let n = y.len() / 2;
        GeodesicState {
            t,
            x: y.rows(0, n).iter().copied().collect(),
            v: y.rows(n, n).iter().copied().collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.x.iter().chain(self.v.iter()).all(|c| c.is_finite())
    }
}

/// (dx/dt, dv/dt) = (v, −Γⁱ_jk vʲ vᵏ).
pub fn geodesic_rhs<M: MetricProvider + ?Sized>(
    m: &M,
    state: &GeodesicState,
) -> Result<(Vec<f64>, Vec<f64>), GeometryError> {
    let n = m.dim();
    if state.x.len() != n || state.v.len() != n {
        return Err(GeometryError::DimensionMismatch {
            expected: n,
            got: state.x.len().max(state.v.len()),
        });
    }
    let ch = christoffel_at(m, &state.x, false)?;
    let v = &state.v;
    let acc = (0..n)
        .map(|i| {
            let mut s = 0.0;
            for j in 0..n {
                for k in 0..n {
                    s += ch.gamma.get(i, j, k) * v[j] * v[k];
                }
            }
            -s
        })
        .collect();
    Ok((v.clone(), acc))
}

/// A position-dependent quadratic form Q = a_ij(x) vⁱ vʲ.
pub trait QuadraticForm: Sync {
    fn name(&self) -> &str;
    fn form(&self, x: &[f64]) -> Result<DMatrix<f64>, GeometryError>;

    fn evaluate(&self, x: &[f64], v: &[f64]) -> Result<f64, GeometryError> {
        let a = self.form(x)?;
        let v = DVector::from_column_slice(v);
        Ok(v.dot(&(&a * &v)))
    }
}

/// g_ij vⁱ vʲ.
pub struct MetricNorm<'a, M: ?Sized>(pub &'a M);

impl<M: MetricProvider + ?Sized> QuadraticForm for MetricNorm<'_, M> {
    fn name(&self) -> &str {
        "Q_g"
    }

    fn form(&self, x: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        self.0.metric(x)
    }
}

/// (h_ij − 4φ g_ij) vⁱ vʲ of an instance.
pub struct KillingQuadratic<'a>(pub &'a HSpaceParams);

impl QuadraticForm for KillingQuadratic<'_> {
    fn name(&self) -> &str {
        "Q_h"
    }

    fn form(&self, x: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        let pt = Point6::try_from(x)?;
        let g = metric_at(self.0, &pt)?.to_matrix();
        let h = h_tensor_at(self.0, &pt)?.to_matrix();
        let phi = metric_inverse(&g)?.component_mul(&h).sum() / 14.0;
        Ok(h - g * (4.0 * phi))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservationTrace {
    pub names: Vec<String>,
    pub initial: Vec<f64>,
    /// `values[step][q]`, one row per accepted step (row 0 is the initial state).
    pub values: Vec<Vec<f64>>,
    pub max_drift: Vec<f64>,
}

impl ConservationTrace {
    /// max |Q(t) − Q(0)| / max(1, |Q(0)|) for the named quantity.
    pub fn drift(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.max_drift[i])
    }

    fn push(&mut self, row: Vec<f64>) {
        for (q, v) in row.iter().enumerate() {
            let d = (v - self.initial[q]).abs() / self.initial[q].abs().max(1.0);
            self.max_drift[q] = self.max_drift[q].max(d);
        }
        self.values.push(row);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicRun {
    pub trajectory: Vec<GeodesicState>,
    pub trace: ConservationTrace,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub rhs_evaluations: usize,
}

impl GeodesicRun {
    pub fn last(&self) -> &GeodesicState {
        self.trajectory
            .last()
            .expect("trajectory holds the initial state")
    }

    /// CSV with columns t, x1…xn, v1…vn and one column per conserved form.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let n = self.trajectory[0].x.len();
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=n).map(|i| format!("v{i}")));
        header.extend(self.trace.names.iter().cloned());
        writeln!(out, "{}", header.join(","))?;
        for (state, q) in self.trajectory.iter().zip(&self.trace.values) {
            let row: Vec<String> = std::iter::once(state.t)
                .chain(state.x.iter().copied())
                .chain(state.v.iter().copied())
                .chain(q.iter().copied())
                .map(|v| format!("{v:e}"))
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HaltReason {
    StepSizeUnderflow,
    NonFinite,
    MaxSteps,
}

#[derive(Debug, Error)]
pub enum GeodesicError {
    #[error("invalid integration request: {0}")]
    InvalidInput(String),
    #[error("initial state rejected: {0}")]
    Initial(#[from] GeometryError),
    #[error("integration halted at t = {t} ({reason:?}); last error: {last_error}")]
    Halted {
        reason: HaltReason,
        t: f64,
        last_error: String,
        run: Box<GeodesicRun>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorSettings {
    pub rel_tol: f64,
    /// Absolute floor of the error scale; defaults to `rel_tol`.
    pub abs_tol: Option<f64>,
    pub max_steps: usize,
    pub initial_step: Option<f64>,
    pub max_step: Option<f64>,
}

impl IntegratorSettings {
    pub fn new(rel_tol: f64) -> Self {
        IntegratorSettings {
            rel_tol,
            abs_tol: None,
            max_steps: 2_000_000,
            initial_step: None,
            max_step: None,
        }
    }
}

// Dormand–Prince 5(4)
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// 5th-order weights minus embedded 4th-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;
const ALPHA: f64 = 0.2 - 0.75 * BETA;

struct Stepper<'a, M: ?Sized> {
    m: &'a M,
    evaluations: usize,
}

impl<M: MetricProvider + ?Sized> Stepper<'_, M> {
    fn rhs(&mut self, t: f64, y: &DVector<f64>) -> Result<DVector<f64>, GeometryError> {
        self.evaluations += 1;
        let state = GeodesicState::from_vector(t, y);
        if !state.is_finite() {
            return Err(GeometryError::NonFinite("geodesic state"));
        }
        let (dx, dv) = geodesic_rhs(self.m, &state)?;
        let out = DVector::from_iterator(y.len(), dx.into_iter().chain(dv));
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(GeometryError::NonFinite("geodesic right-hand side"))
        }
    }

    /// One trial step; returns (y_new, k7 = f(y_new), error norm).
    fn attempt(
        &mut self,
        t: f64,
        y: &DVector<f64>,
        k1: &DVector<f64>,
        h: f64,
        rtol: f64,
        atol: f64,
    ) -> Result<(DVector<f64>, DVector<f64>, f64), GeometryError> {
        let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
        k.push(k1.clone());
        for s in 1..7 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate() {
                if A[s][j] != 0.0 {
                    ys.axpy(h * A[s][j], kj, 1.0);
                }
            }
            if s == 6 {
                // FSAL: stage 7 is evaluated at the new solution
                let k7 = self.rhs(t + h, &ys)?;
                k.push(k7);
                let mut err = DVector::zeros(y.len());
                for (j, kj) in k.iter().enumerate() {
                    if E[j] != 0.0 {
                        err.axpy(h * E[j], kj, 1.0);
                    }
                }
                let norm = (err
                    .iter()
                    .zip(y.iter().zip(ys.iter()))
                    .map(|(e, (a, b))| {
                        let sc = atol + rtol * a.abs().max(b.abs());
                        (e / sc).powi(2)
                    })
                    .sum::<f64>()
                    / y.len() as f64)
                    .sqrt();
                let k7 = k.pop().expect("seven stages");
                return Ok((ys, k7, norm));
            }
            k.push(self.rhs(t + C[s] * h, &ys)?);
        }
        unreachable!("the loop returns at stage 7")
    }
}

fn initial_step<M: MetricProvider + ?Sized>(
    stepper: &mut Stepper<'_, M>,
    t: f64,
    y: &DVector<f64>,
    f0: &DVector<f64>,
    dir: f64,
    rtol: f64,
    atol: f64,
) -> f64 {
    // Hairer–Nørsett–Wanner starting-step heuristic
    let scale: Vec<f64> = y.iter().map(|v| atol + rtol * v.abs()).collect();
    let rms = |v: &DVector<f64>| {
        (v.iter()
            .zip(&scale)
            .map(|(a, s)| (a / s).powi(2))
            .sum::<f64>()
            / v.len() as f64)
            .sqrt()
    };
    let d0 = rms(y);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let y1 = y + f0 * (dir * h0);
    let d2 = match stepper.rhs(t + dir * h0, &y1) {
        Ok(f1) => rms(&(f1 - f0)) / h0,
        Err(_) => return h0 * 0.1,
    };
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    (100.0 * h0).min(h1)
}

fn evaluate_forms(
    forms: &[&dyn QuadraticForm],
    state: &GeodesicState,
) -> Result<Vec<f64>, GeometryError> {
    forms
        .iter()
        .map(|q| q.evaluate(&state.x, &state.v))
        .collect()
}

/// Adaptive integration from `initial` to `t_end` (either direction).
pub fn integrate<M: MetricProvider + ?Sized>(
    m: &M,
    initial: &GeodesicState,
    t_end: f64,
    rel_tol: f64,
    conserved: &[&dyn QuadraticForm],
) -> Result<GeodesicRun, GeodesicError> {
    integrate_with(
        m,
        initial,
        t_end,
        &IntegratorSettings::new(rel_tol),
        conserved,
    )
}

pub fn integrate_with<M: MetricProvider + ?Sized>(
    m: &M,
    initial: &GeodesicState,
    t_end: f64,
    settings: &IntegratorSettings,
    conserved: &[&dyn QuadraticForm],
) -> Result<GeodesicRun, GeodesicError> {
    let rtol = settings.rel_tol;
    if !(1e-13..=1e-3).contains(&rtol) {
        return Err(GeodesicError::InvalidInput(format!(
            "rel_tol {rtol:e} outside [1e-13, 1e-3]"
        )));
    }
    if initial.x.len() != m.dim() || initial.v.len() != m.dim() {
        return Err(GeodesicError::InvalidInput(format!(
            "state dimension does not match metric dimension {}",
            m.dim()
        )));
    }
    if !initial.is_finite() || !t_end.is_finite() {
        return Err(GeodesicError::InvalidInput(
            "non-finite initial data".into(),
        ));
    }
    let atol = settings.abs_tol.unwrap_or(rtol);
    let h_max = match settings.max_step {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => {
            return Err(GeodesicError::InvalidInput(format!(
                "max_step {h:e} must be positive and finite"
            )))
        }
        None => f64::INFINITY,
    };

    let q0 = evaluate_forms(conserved, initial)?;
    let mut run = GeodesicRun {
        trajectory: vec![initial.clone()],
        trace: ConservationTrace {
            names: conserved.iter().map(|q| q.name().to_string()).collect(),
            initial: q0.clone(),
            values: vec![q0.clone()],
            max_drift: vec![0.0; q0.len()],
        },
        accepted_steps: 0,
        rejected_steps: 0,
        rhs_evaluations: 0,
    };

    let mut stepper = Stepper { m, evaluations: 0 };
    let mut t = initial.t;
    let mut y = initial.to_vector();
    let mut f = stepper.rhs(t, &y)?;
    let span = t_end - t;
    if span == 0.0 {
        run.rhs_evaluations = stepper.evaluations;
        return Ok(run);
    }
    let dir = span.signum();
    let mut h = settings
        .initial_step
        .unwrap_or_else(|| initial_step(&mut stepper, t, &y, &f, dir, rtol, atol))
        .abs()
        .min(span.abs())
        .min(h_max);
    let mut err_old: f64 = 1e-4;
    let mut last_error = String::new();

    let halt = |reason: HaltReason,
                t: f64,
                last_error: String,
                mut run: GeodesicRun,
                evaluations: usize| {
        run.rhs_evaluations = evaluations;
        GeodesicError::Halted {
            reason,
            t,
            last_error,
            run: Box::new(run),
        }
    };

    while (t_end - t) * dir > 0.0 {
        if run.accepted_steps + run.rejected_steps >= settings.max_steps {
            return Err(halt(
                HaltReason::MaxSteps,
                t,
                last_error,
                run,
                stepper.evaluations,
            ));
        }
        let h_min = 16.0 * f64::EPSILON * t.abs().max(span.abs()).max(1.0);
        if h < h_min {
            return Err(halt(
                HaltReason::StepSizeUnderflow,
                t,
                last_error,
                run,
                stepper.evaluations,
            ));
        }
        let remaining = (t_end - t).abs();
        h = h.min(h_max);
        let last_step = h >= remaining;
        let step = if last_step { remaining } else { h };
        match stepper.attempt(t, &y, &f, dir * step, rtol, atol) {
            Ok((y_new, f_new, err)) if err <= 1.0 => {
                let t_new = if last_step { t_end } else { t + dir * step };
                let state = GeodesicState::from_vector(t_new, &y_new);
                match evaluate_forms(conserved, &state) {
                    Ok(q) => {
                        run.trace.push(q);
                        run.trajectory.push(state);
                        run.accepted_steps += 1;
                        t = t_new;
                        y = y_new;
                        f = f_new;
                        let err = err.max(1e-10);
                        let fac = (SAFETY * err.powf(-ALPHA) * err_old.powf(BETA))
                            .clamp(FAC_MIN, FAC_MAX);
                        err_old = err;
                        h = step * fac;
                    }
                    Err(e) => {
                        // the new point sits outside the validity region
                        last_error = e.to_string();
                        run.rejected_steps += 1;
                        h = step * 0.25;
                    }
                }
            }
            Ok((_, _, err)) => {
                run.rejected_steps += 1;
                let fac = if err.is_finite() {
                    (SAFETY * err.powf(-ALPHA)).clamp(FAC_MIN, 1.0)
                } else {
                    FAC_MIN
                };
                h = step * fac;
            }
            Err(e) => {
                last_error = e.to_string();
                run.rejected_steps += 1;
                h = step * 0.25;
            }
        }
    }
    run.rhs_evaluations = stepper.evaluations;
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hspace2211::{reference_r1, REFERENCE_P1};
    use crate::metrics::{ConstantMetric, RoundSphere};
    use std::f64::consts::PI;

    #[test]
    fn flat_rhs_vanishes() {
        let m = ConstantMetric::diagonal(&[1.0, -1.0, 2.0]);
        let s = GeodesicState::new(0.0, vec![1.0, 2.0, 3.0], vec![0.3, -0.1, 5.0]);
        let (dx, dv) = geodesic_rhs(&m, &s).unwrap();
        assert_eq!(dx, s.v);
        assert!(dv.iter().all(|a| *a == 0.0));
    }

    #[test]
    fn equator_is_a_geodesic() {
        let s = GeodesicState::new(0.0, vec![PI / 2.0, 0.0], vec![0.0, 1.0]);
        let (_, dv) = geodesic_rhs(&RoundSphere::unit(), &s).unwrap();
        assert!(dv[0].abs() < 1e-16);
        assert_eq!(dv[1], 0.0);
    }

    #[test]
    fn r1_rhs_along_x1_is_minus_gamma_11() {
        let params = reference_r1();
        let mut v = vec![0.0; 6];
        v[0] = 1.0;
        let s = GeodesicState::new(0.0, REFERENCE_P1.to_vec(), v);
        let (_, dv) = geodesic_rhs(&params, &s).unwrap();
        let ch = christoffel_at(&params, &REFERENCE_P1, false).unwrap();
        for i in 0..6 {
            assert_eq!(dv[i], -ch.gamma.get(i, 0, 0));
        }
    }

    #[test]
    fn flat_geodesics_are_straight_lines() {
        let m = ConstantMetric::diagonal(&[1.0, 1.0, -1.0, -1.0, -1.0, -1.0]);
        let s = GeodesicState::new(0.0, vec![0.5; 6], vec![1.0, -2.0, 0.5, 0.25, 3.0, -1.0]);
        let q = MetricNorm(&m);
        let run = integrate(&m, &s, 4.0, 1e-10, &[&q]).unwrap();
        let end = run.last();
        for i in 0..6 {
            assert!((end.x[i] - (s.x[i] + 4.0 * s.v[i])).abs() < 1e-12);
        }
        assert_eq!(run.trace.drift("Q_g"), Some(0.0));
    }

    #[test]
    fn rejects_out_of_range_tolerance() {
        let m = ConstantMetric::diagonal(&[1.0]);
        let s = GeodesicState::new(0.0, vec![0.0], vec![1.0]);
        assert!(matches!(
            integrate(&m, &s, 1.0, 1e-2, &[]),
            Err(GeodesicError::InvalidInput(_))
        ));
    }

    #[test]
    fn csv_header_and_rows() {
        let m = ConstantMetric::diagonal(&[1.0, 1.0]);
        let s = GeodesicState::new(0.0, vec![0.0, 0.0], vec![1.0, 0.0]);
        let q = MetricNorm(&m);
        let run = integrate(&m, &s, 1.0, 1e-8, &[&q]).unwrap();
        let mut buf = Vec::new();
        run.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,x1,x2,v1,v2,Q_g"));
        assert_eq!(lines.count(), run.trajectory.len());
    }

    /// Great circle through (θ, φ) = (π/2, 0) tilted by `alpha` from the equator.
    fn tilted_circle(alpha: f64, t: f64) -> (f64, f64) {
        let (s, c) = t.sin_cos();
        ((s * alpha.sin()).acos(), (s * alpha.cos()).atan2(c))
    }

    fn circle_start(alpha: f64) -> GeodesicState {
        GeodesicState::new(0.0, vec![PI / 2.0, 0.0], vec![-alpha.sin(), alpha.cos()])
    }

    fn sphere_endpoint_error(rel_tol: f64, t_end: f64) -> (f64, usize) {
        let alpha = 0.7;
        let run = integrate(
            &RoundSphere::unit(),
            &circle_start(alpha),
            t_end,
            rel_tol,
            &[],
        )
        .unwrap();
        let (th, ph) = tilted_circle(alpha, t_end);
        let end = run.last();
        let dphi = (end.x[1] - ph + PI).rem_euclid(2.0 * PI) - PI;
        ((end.x[0] - th).abs().max(dphi.abs()), run.accepted_steps)
    }

    #[test]
    fn great_circle_closes_after_one_period() {
        let m = RoundSphere::unit();
        let start = circle_start(0.7);
        let q = MetricNorm(&m);
        let run = integrate(&m, &start, 2.0 * PI, 1e-10, &[&q]).unwrap();
        let end = run.last();
        assert!((end.x[0] - start.x[0]).abs() <= 1e-6);
        assert!((end.x[1] - 2.0 * PI - start.x[1]).abs() <= 1e-6);
        for i in 0..2 {
            assert!((end.v[i] - start.v[i]).abs() <= 1e-6);
        }
        assert!(run.trace.drift("Q_g").unwrap() <= 1e-8);
    }

    #[test]
    fn observed_order_is_fifth() {
        // least-squares slope of log(error) against log(accepted steps)
        let pts: Vec<(f64, f64)> = [1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10]
            .iter()
            .map(|&tol| {
                let (err, n) = sphere_endpoint_error(tol, 2.0 * PI);
                ((n as f64).ln(), err.ln())
            })
            .collect();
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let order = -sxy / sxx;
        assert!(order >= 4.5, "observed order {order}");
    }

    #[test]
    fn time_reversal_recovers_initial_state() {
        let m = RoundSphere::unit();
        let start = circle_start(0.7);
        let t_end = 2.0 * PI;
        let fwd = integrate(&m, &start, t_end, 1e-10, &[]).unwrap();
        let (one_way, _) = sphere_endpoint_error(1e-10, t_end);
        let back = integrate(&m, fwd.last(), 0.0, 1e-10, &[]).unwrap();
        let end = back.last();
        assert_eq!(end.t, 0.0);
        let round_trip = (0..2)
            .map(|i| (end.x[i] - start.x[i]).abs())
            .fold(0.0, f64::max);
        assert!(round_trip <= 10.0 * one_way, "{round_trip} vs {one_way}");
    }

    #[test]
    fn drift_shrinks_with_tolerance() {
        let params = reference_r1();
        let v = vec![0.3, -0.2, 0.1, 0.4, -0.1, 0.2];
        let start = GeodesicState::new(0.0, REFERENCE_P1.to_vec(), v);
        let qg = MetricNorm(&params);
        let qh = KillingQuadratic(&params);
        let drifts: Vec<Vec<f64>> = [1e-6, 1e-8, 1e-10]
            .iter()
            .map(
                |&tol| match integrate(&params, &start, 0.5, tol, &[&qg, &qh]) {
                    Ok(run) => run.trace.max_drift,
                    Err(GeodesicError::Halted { run, .. }) => run.trace.max_drift,
                    Err(e) => panic!("{e}"),
                },
            )
            .collect();
        for q in 0..2 {
            assert!(
                drifts[0][q] > drifts[1][q] && drifts[1][q] > drifts[2][q],
                "{drifts:?}"
            );
        }
    }

    #[test]
    fn boundary_hit_halts_with_partial_run() {
        // heads straight for x1 = 0, where A vanishes
        let params = reference_r1();
        let start = GeodesicState::new(
            0.0,
            REFERENCE_P1.to_vec(),
            vec![-1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        );
        match integrate(&params, &start, 50.0, 1e-8, &[]) {
            Err(GeodesicError::Halted { reason, run, t, .. }) => {
                assert_eq!(reason, HaltReason::StepSizeUnderflow);
                assert!(run.accepted_steps > 0);
                assert_eq!(run.last().t, t);
                assert!(run.last().is_finite());
            }
            other => panic!("expected a halt, got {other:?}"),
        }
    }

    #[test]
    fn killing_quadratic_matches_killing_form() {
        let params = reference_r1();
        let pt = Point6::new(REFERENCE_P1).unwrap();
        let direct = KillingQuadratic(&params).form(&REFERENCE_P1).unwrap();
        let via_form = crate::verify::KillingForm::new(&params)
            .value_at(&pt)
            .unwrap();
        assert!((direct - via_form).abs().max() <= 1e-9);
    }
}
