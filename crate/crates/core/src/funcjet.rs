//! Closed families of univariate analytic functions with exact 2-jets.
//!
//! The free functions of the metric family (θ, ω, f₅, f₆) are drawn from this
//! set so that every derivative used downstream is exact. Adding a family
//! means adding a variant and its value/first/second derivative formulas in
//! [`FunctionFamily::jet`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FuncError {
    #[error("evaluation at the pole x = {pole} of a reciprocal-shift function")]
    PoleEvaluation { pole: f64 },
    #[error("non-finite jet at x = {x}")]
    NonFinite { x: f64 },
    #[error("x = {x} outside the validity interval ({lo}, {hi})")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },
    #[error("invalid function: {0}")]
    Invalid(String),
}

/// Value, first and second derivative of a scalar function at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jet2 {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet2 {
    pub const fn new(value: f64, d1: f64, d2: f64) -> Self {
        Jet2 { value, d1, d2 }
    }

    pub const fn constant(value: f64) -> Self {
        Jet2 {
            value,
            d1: 0.0,
            d2: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.d1.is_finite() && self.d2.is_finite()
    }
}

/// The analytic families. Tagged by `type` in config files, e.g.
/// `{ type = "polynomial", coeffs = [0.0, 1.0] }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionFamily {
    /// `c`
    Constant { value: f64 },
    /// `k x + b`
    Linear { k: f64, b: f64 },
    /// `Σ coeffs[n] xⁿ`, ascending powers.
    Polynomial { coeffs: Vec<f64> },
    /// `amplitude · exp(rate x)`
    Exponential { amplitude: f64, rate: f64 },
    /// `amplitude · sin(frequency x + phase)`
    Sine {
        amplitude: f64,
        frequency: f64,
        phase: f64,
    },
    /// `amplitude / (x − shift)`
    ReciprocalShift { amplitude: f64, shift: f64 },
}

impl FunctionFamily {
    pub fn validate(&self) -> Result<(), FuncError> {
        let params: Vec<f64> = match self {
            FunctionFamily::Constant { value } => vec![*value],
            FunctionFamily::Linear { k, b } => vec![*k, *b],
            FunctionFamily::Polynomial { coeffs } => {
                if coeffs.is_empty() {
                    return Err(FuncError::Invalid(
                        "polynomial coefficient list is empty".into(),
                    ));
                }
                coeffs.clone()
            }
            FunctionFamily::Exponential { amplitude, rate } => vec![*amplitude, *rate],
            FunctionFamily::Sine {
                amplitude,
                frequency,
                phase,
            } => vec![*amplitude, *frequency, *phase],
            FunctionFamily::ReciprocalShift { amplitude, shift } => vec![*amplitude, *shift],
        };
        if params.iter().all(|p| p.is_finite()) {
            Ok(())
        } else {
            Err(FuncError::Invalid("non-finite function parameter".into()))
        }
    }

    /// Exact (f, f′, f″) at `x`.
    pub fn jet(&self, x: f64) -> Result<Jet2, FuncError> {
        let jet = match self {
            FunctionFamily::Constant { value } => Jet2::constant(*value),
            FunctionFamily::Linear { k, b } => Jet2::new(k * x + b, *k, 0.0),
            FunctionFamily::Polynomial { coeffs } => horner_jet(coeffs, x),
            FunctionFamily::Exponential { amplitude, rate } => {
                let e = amplitude * (rate * x).exp();
                Jet2::new(e, rate * e, rate * rate * e)
            }
            FunctionFamily::Sine {
                amplitude,
                frequency,
                phase,
            } => {
                let (s, c) = (frequency * x + phase).sin_cos();
                Jet2::new(
                    amplitude * s,
                    amplitude * frequency * c,
                    -amplitude * frequency * frequency * s,
                )
            }
            FunctionFamily::ReciprocalShift { amplitude, shift } => {
                let u = x - shift;
                if u == 0.0 {
                    return Err(FuncError::PoleEvaluation { pole: *shift });
                }
                let r = 1.0 / u;
                let jet = Jet2::new(
                    amplitude * r,
                    -amplitude * r * r,
                    2.0 * amplitude * r * r * r,
                );
                if !jet.is_finite() {
                    // x is within a subnormal neighbourhood of the pole
                    return Err(FuncError::PoleEvaluation { pole: *shift });
                }
                jet
            }
        };
        if jet.is_finite() {
            Ok(jet)
        } else {
            Err(FuncError::NonFinite { x })
        }
    }
}

fn horner_jet(coeffs: &[f64], x: f64) -> Jet2 {
    // (p, p', p'') carried together through Horner's scheme
    let (mut p, mut dp, mut ddp) = (0.0, 0.0, 0.0);
    for &a in coeffs.iter().rev() {
        ddp = ddp * x + 2.0 * dp;
        dp = dp * x + p;
        p = p * x + a;
    }
    Jet2::new(p, dp, ddp)
}

/// A function family plus an optional open interval of validity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarFunction {
    #[serde(flatten)]
    pub family: FunctionFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<[f64; 2]>,
}

impl ScalarFunction {
    pub fn new(family: FunctionFamily) -> Self {
        ScalarFunction {
            family,
            domain: None,
        }
    }

    pub fn constant(value: f64) -> Self {
        Self::new(FunctionFamily::Constant { value })
    }

    pub fn linear(k: f64, b: f64) -> Self {
        Self::new(FunctionFamily::Linear { k, b })
    }

    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        Self::new(FunctionFamily::Polynomial { coeffs })
    }

    pub fn exponential(amplitude: f64, rate: f64) -> Self {
        Self::new(FunctionFamily::Exponential { amplitude, rate })
    }

    pub fn sine(amplitude: f64, frequency: f64, phase: f64) -> Self {
        Self::new(FunctionFamily::Sine {
            amplitude,
            frequency,
            phase,
        })
    }

    pub fn reciprocal_shift(amplitude: f64, shift: f64) -> Self {
        Self::new(FunctionFamily::ReciprocalShift { amplitude, shift })
    }

    pub fn with_domain(mut self, lo: f64, hi: f64) -> Self {
        self.domain = Some([lo, hi]);
        self
    }

    pub fn validate(&self) -> Result<(), FuncError> {
        self.family.validate()?;
        if let Some([lo, hi]) = self.domain {
            if !(lo < hi) {
                return Err(FuncError::Invalid(format!(
                    "empty validity interval ({lo}, {hi})"
                )));
            }
        }
        Ok(())
    }

    /// True when every derivative vanishes identically.
    pub fn is_constant(&self) -> bool {
        match &self.family {
            FunctionFamily::Constant { .. } => true,
            FunctionFamily::Linear { k, .. } => *k == 0.0,
            FunctionFamily::Polynomial { coeffs } => coeffs.iter().skip(1).all(|c| *c == 0.0),
            FunctionFamily::Exponential { amplitude, rate } => *amplitude == 0.0 || *rate == 0.0,
            FunctionFamily::Sine {
                amplitude,
                frequency,
                ..
            } => *amplitude == 0.0 || *frequency == 0.0,
            FunctionFamily::ReciprocalShift { amplitude, .. } => *amplitude == 0.0,
        }
    }
}

/// Evaluates the exact 2-jet of `f` at `x`.
pub fn eval_jet2(f: &ScalarFunction, x: f64) -> Result<Jet2, FuncError> {
    if let Some([lo, hi]) = f.domain {
        if !(x > lo && x < hi) {
            return Err(FuncError::OutOfDomain { x, lo, hi });
        }
    }
    f.family.jet(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_jet() {
        let j = eval_jet2(&ScalarFunction::linear(1.0, 0.0), 3.0).unwrap();
        assert_eq!(j, Jet2::new(3.0, 1.0, 0.0));
    }

    #[test]
    fn constant_jet() {
        let j = eval_jet2(&ScalarFunction::constant(5.0), -2.0).unwrap();
        assert_eq!(j, Jet2::new(5.0, 0.0, 0.0));
    }

    #[test]
    fn square_jet() {
        let j = eval_jet2(&ScalarFunction::polynomial(vec![0.0, 0.0, 1.0]), 2.0).unwrap();
        assert_eq!(j, Jet2::new(4.0, 4.0, 2.0));
    }

    #[test]
    fn exponential_at_zero() {
        let j = eval_jet2(&ScalarFunction::exponential(1.0, 1.0), 0.0).unwrap();
        assert_eq!(j, Jet2::new(1.0, 1.0, 1.0));
    }

    #[test]
    fn pole_is_an_error() {
        let f = ScalarFunction::reciprocal_shift(2.0, 1.5);
        assert_eq!(
            eval_jet2(&f, 1.5),
            Err(FuncError::PoleEvaluation { pole: 1.5 })
        );
        assert!(eval_jet2(&f, 1.6).is_ok());
    }

    #[test]
    fn exponential_overflow_is_non_finite() {
        let f = ScalarFunction::exponential(1.0, 1000.0);
        assert!(matches!(
            eval_jet2(&f, 1.0),
            Err(FuncError::NonFinite { .. })
        ));
    }

    #[test]
    fn domain_guard() {
        let f = ScalarFunction::linear(1.0, 0.0).with_domain(0.0, 1.0);
        assert!(eval_jet2(&f, 0.5).is_ok());
        assert!(matches!(
            eval_jet2(&f, 1.0),
            Err(FuncError::OutOfDomain { .. })
        ));
    }

    #[test]
    fn empty_polynomial_rejected() {
        assert!(ScalarFunction::polynomial(vec![]).validate().is_err());
    }

    #[test]
    fn tagged_record_parse() {
        let f: ScalarFunction = toml::from_str("type = \"polynomial\"\ncoeffs = [0, 1]").unwrap();
        assert_eq!(f, ScalarFunction::polynomial(vec![0.0, 1.0]));
        let f: ScalarFunction = toml::from_str(
            "type = \"sine\"\namplitude = 1\nfrequency = 2.0\nphase = 0.5\ndomain = [-1, 1]",
        )
        .unwrap();
        assert_eq!(
            f,
            ScalarFunction::sine(1.0, 2.0, 0.5).with_domain(-1.0, 1.0)
        );
    }

    fn any_function() -> impl Strategy<Value = ScalarFunction> {
        let c = -3.0..3.0f64;
        prop_oneof![
            c.clone().prop_map(ScalarFunction::constant),
            (c.clone(), c.clone()).prop_map(|(k, b)| ScalarFunction::linear(k, b)),
            proptest::collection::vec(c.clone(), 1..6).prop_map(ScalarFunction::polynomial),
            (c.clone(), -1.5..1.5f64).prop_map(|(a, r)| ScalarFunction::exponential(a, r)),
            (c.clone(), -2.0..2.0f64, c.clone())
                .prop_map(|(a, w, p)| ScalarFunction::sine(a, w, p)),
            (c.clone(), Just(10.0)).prop_map(|(a, s)| ScalarFunction::reciprocal_shift(a, s)),
        ]
    }

    fn close(a: f64, b: f64, rel: f64, scale: f64) -> bool {
        (a - b).abs() <= rel * scale.max(a.abs()).max(b.abs())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(600))]

        #[test]
        fn derivatives_match_central_differences(f in any_function(), x in -4.0..4.0f64) {
            let h = f64::EPSILON.cbrt() * x.abs().max(1.0);
            let j = eval_jet2(&f, x).unwrap();
            let p = eval_jet2(&f, x + h).unwrap();
            let m = eval_jet2(&f, x - h).unwrap();
            let fd1 = (p.value - m.value) / (2.0 * h);
            // second derivative from the jet's own first derivative avoids the
            // O(eps/h^2) roundoff of the three-point value stencil
            let fd2 = (p.d1 - m.d1) / (2.0 * h);
            let fd2_values = (p.value - 2.0 * j.value + m.value) / (h * h);
            let scale = j.value.abs().max(1.0);
            prop_assert!(close(j.d1, fd1, 1e-6, scale), "d1 {} vs {}", j.d1, fd1);
            prop_assert!(close(j.d2, fd2, 1e-4, scale), "d2 {} vs {}", j.d2, fd2);
            prop_assert!(close(j.d2, fd2_values, 1e-4, scale), "d2 {} vs {}", j.d2, fd2_values);
        }

        #[test]
        fn evaluation_is_deterministic(f in any_function(), x in -4.0..4.0f64) {
            let a = eval_jet2(&f, x).unwrap();
            let b = eval_jet2(&f, x).unwrap();
            prop_assert_eq!(a.value.to_bits(), b.value.to_bits());
            prop_assert_eq!(a.d1.to_bits(), b.d1.to_bits());
            prop_assert_eq!(a.d2.to_bits(), b.d2.to_bits());
        }
    }
}
