//! The six-dimensional h-space of Segre type [2211].
//!
//! Coordinates are indexed 0..6 in code, index `k` standing for x^(k+1).
//! The blocks {x¹, x²}, {x³, x⁴}, {x⁵}, {x⁶} never mix. The characteristic
//! roots are f₂ = ε x², f₄ = ε̃ x⁴ + a (each of multiplicity two), f₅(x⁵) and
//! f₆(x⁶), and
//!
//! ```text
//! g = e₂ P₂ (2A dx¹dx² − A² Σ₁ (dx²)²) + e₄ P₄ (2Ã dx³dx⁴ − Ã² Σ₂ (dx⁴)²)
//!     + e₅ (f₂−f₅)²(f₄−f₅)²(f₆−f₅) (dx⁵)² + e₆ (f₂−f₆)²(f₄−f₆)²(f₅−f₆) (dx⁶)²
//! P₂ = (f₄−f₂)²(f₅−f₂)(f₆−f₂),   Σ₁ = 2/(f₄−f₂) + 1/(f₅−f₂) + 1/(f₆−f₂)
//! P₄ = (f₂−f₄)²(f₅−f₄)(f₆−f₄),   Σ₂ = 2/(f₂−f₄) + 1/(f₅−f₄) + 1/(f₆−f₄)
//! A = ε x¹ + θ(x²),   Ã = ε̃ x³ + ω(x⁴)
//! ```
//!
//! Every component formula is written once over [`Scalar`] and evaluated on
//! `f64` for values or on [`HyperJet`] for exact first and second partials.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;
use crate::funcjet::{eval_jet2, Jet2, ScalarFunction};
use crate::hyperjet::{HyperJet, Scalar};
use crate::tensorcalc::{
    metric_inverse, normalized_determinant, MetricJets, MetricProvider, SymField, DEGENERACY_TOL,
};

/// Relative root-separation guard (scaled by the largest root magnitude).
pub const COLLISION_REL_TOL: f64 = 1e-9;
/// Relative guard for A and Ã (scaled by the magnitude of their two terms).
pub const ZERO_A_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flipped(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

impl TryFrom<i64> for Sign {
    type Error = String;
    fn try_from(v: i64) -> Result<Self, String> {
        match v {
            1 => Ok(Sign::Plus),
            -1 => Ok(Sign::Minus),
            other => Err(format!("sign must be +1 or -1, got {other}")),
        }
    }
}

impl From<Sign> for i64 {
    fn from(s: Sign) -> i64 {
        match s {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        })
    }
}

/// The sign quadruple (e₂, e₄, e₅, e₆).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signs {
    pub e2: Sign,
    pub e4: Sign,
    pub e5: Sign,
    pub e6: Sign,
}

impl Signs {
    pub const ALL_PLUS: Signs = Signs {
        e2: Sign::Plus,
        e4: Sign::Plus,
        e5: Sign::Plus,
        e6: Sign::Plus,
    };

    /// All 16 assignments, in binary order with `+` first.
    pub fn all() -> impl Iterator<Item = Signs> {
        (0u8..16).map(|bits| {
            let s = |b: u8| {
                if bits & b == 0 {
                    Sign::Plus
                } else {
                    Sign::Minus
                }
            };
            Signs {
                e2: s(8),
                e4: s(4),
                e5: s(2),
                e6: s(1),
            }
        })
    }
}

impl fmt::Display for Signs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{},{})", self.e2, self.e4, self.e5, self.e6)
    }
}

/// Plain, unvalidated description of an instance; mirrors the config keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HSpaceSpec {
    pub epsilon: u8,
    pub epsilon_tilde: u8,
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub c: f64,
    pub e2: Sign,
    pub e4: Sign,
    pub e5: Sign,
    pub e6: Sign,
    pub theta: ScalarFunction,
    pub omega: ScalarFunction,
    pub f5: ScalarFunction,
    pub f6: ScalarFunction,
}

impl HSpaceSpec {
    pub fn build(self) -> Result<HSpaceParams, GeometryError> {
        HSpaceParams::try_from(self)
    }
}

/// Validated, immutable parameters of one [2211] instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HSpaceSpec", into = "HSpaceSpec")]
pub struct HSpaceParams {
    spec: HSpaceSpec,
}

impl TryFrom<HSpaceSpec> for HSpaceParams {
    type Error = GeometryError;

    fn try_from(spec: HSpaceSpec) -> Result<Self, GeometryError> {
        let invalid =
            |field: &'static str, message: String| GeometryError::InvalidField { field, message };
        if spec.epsilon > 1 {
            return Err(invalid(
                "epsilon",
                format!("must be 0 or 1, got {}", spec.epsilon),
            ));
        }
        if spec.epsilon_tilde > 1 {
            return Err(invalid(
                "epsilon_tilde",
                format!("must be 0 or 1, got {}", spec.epsilon_tilde),
            ));
        }
        if !spec.a.is_finite() {
            return Err(invalid("a", "must be finite".into()));
        }
        if !spec.c.is_finite() {
            return Err(invalid("c", "must be finite".into()));
        }
        if spec.epsilon_tilde == 0 && spec.a == 0.0 {
            return Err(invalid(
                "a",
                "a is a constant which is nonzero when epsilon_tilde = 0".into(),
            ));
        }
        for (name, f) in [
            ("theta", &spec.theta),
            ("omega", &spec.omega),
            ("f5", &spec.f5),
            ("f6", &spec.f6),
        ] {
            f.validate().map_err(|e| invalid(name, e.to_string()))?;
        }
        Ok(HSpaceParams { spec })
    }
}

impl From<HSpaceParams> for HSpaceSpec {
    fn from(p: HSpaceParams) -> Self {
        p.spec
    }
}

impl HSpaceParams {
    pub fn spec(&self) -> &HSpaceSpec {
        &self.spec
    }

    pub fn epsilon(&self) -> u8 {
        self.spec.epsilon
    }

    pub fn epsilon_tilde(&self) -> u8 {
        self.spec.epsilon_tilde
    }

    pub fn a(&self) -> f64 {
        self.spec.a
    }

    pub fn c(&self) -> f64 {
        self.spec.c
    }

    pub fn signs(&self) -> Signs {
        Signs {
            e2: self.spec.e2,
            e4: self.spec.e4,
            e5: self.spec.e5,
            e6: self.spec.e6,
        }
    }

    pub fn theta(&self) -> &ScalarFunction {
        &self.spec.theta
    }

    pub fn omega(&self) -> &ScalarFunction {
        &self.spec.omega
    }

    pub fn f5(&self) -> &ScalarFunction {
        &self.spec.f5
    }

    pub fn f6(&self) -> &ScalarFunction {
        &self.spec.f6
    }

    /// Copy with a different sign quadruple.
    pub fn with_signs(&self, signs: Signs) -> HSpaceParams {
        let mut spec = self.spec.clone();
        spec.e2 = signs.e2;
        spec.e4 = signs.e4;
        spec.e5 = signs.e5;
        spec.e6 = signs.e6;
        HSpaceParams { spec }
    }

    /// Copy with a different constant c.
    pub fn with_c(&self, c: f64) -> HSpaceParams {
        let mut spec = self.spec.clone();
        spec.c = c;
        HSpaceParams { spec }
    }
}

/// Reference instance R1: ε = ε̃ = 1, a = c = 0, θ = ω = 0, f₅(x) = x,
/// f₆(x) = 2x, all signs +1.
pub fn reference_r1() -> HSpaceParams {
    HSpaceSpec {
        epsilon: 1,
        epsilon_tilde: 1,
        a: 0.0,
        c: 0.0,
        e2: Sign::Plus,
        e4: Sign::Plus,
        e5: Sign::Plus,
        e6: Sign::Plus,
        theta: ScalarFunction::constant(0.0),
        omega: ScalarFunction::constant(0.0),
        f5: ScalarFunction::linear(1.0, 0.0),
        f6: ScalarFunction::linear(2.0, 0.0),
    }
    .build()
    .expect("R1 is valid")
}

/// The point P1 = (1, 2, 1, 5, −1, −2) used with R1.
pub const REFERENCE_P1: [f64; 6] = [1.0, 2.0, 1.0, 5.0, -1.0, -2.0];

/// Reference instance C0: ε = ε̃ = 0, a = 1, θ(x²) = (x²)², ω ≡ 1, f₅ ≡ −1,
/// f₆ ≡ −2 (a flat member of the family).
pub fn reference_c0() -> HSpaceParams {
    HSpaceSpec {
        epsilon: 0,
        epsilon_tilde: 0,
        a: 1.0,
        c: 0.0,
        e2: Sign::Plus,
        e4: Sign::Plus,
        e5: Sign::Plus,
        e6: Sign::Plus,
        theta: ScalarFunction::polynomial(vec![0.0, 0.0, 1.0]),
        omega: ScalarFunction::constant(1.0),
        f5: ScalarFunction::constant(-1.0),
        f6: ScalarFunction::constant(-2.0),
    }
    .build()
    .expect("C0 is valid")
}

/// A point of the six-dimensional coordinate space (all entries finite).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 6]", into = "[f64; 6]")]
pub struct Point6([f64; 6]);

impl Point6 {
    pub fn new(x: [f64; 6]) -> Result<Self, GeometryError> {
        if x.iter().all(|v| v.is_finite()) {
            Ok(Point6(x))
        } else {
            Err(GeometryError::NonFinite("point"))
        }
    }

    pub fn coords(&self) -> &[f64; 6] {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<[f64; 6]> for Point6 {
    type Error = GeometryError;
    fn try_from(x: [f64; 6]) -> Result<Self, GeometryError> {
        Point6::new(x)
    }
}

impl From<Point6> for [f64; 6] {
    fn from(p: Point6) -> Self {
        p.0
    }
}

impl TryFrom<&[f64]> for Point6 {
    type Error = GeometryError;
    fn try_from(x: &[f64]) -> Result<Self, GeometryError> {
        let arr: [f64; 6] = x.try_into().map_err(|_| GeometryError::DimensionMismatch {
            expected: 6,
            got: x.len(),
        })?;
        Point6::new(arr)
    }
}

/// A = (linear coefficient)·x + shape(y): the factor A or Ã.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AFactor {
    pub value: f64,
    /// ∂A/∂x¹ = ε (resp. ∂Ã/∂x³ = ε̃).
    pub d_linear: f64,
    /// 2-jet of θ(x²) (resp. ω(x⁴)).
    pub shape: Jet2,
}

/// Characteristic roots and A-factors at a point. Each root jet is taken with
/// respect to its own coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootsAt {
    pub f2: Jet2,
    pub f4: Jet2,
    pub f5: Jet2,
    pub f6: Jet2,
    pub a: AFactor,
    pub a_tilde: AFactor,
}

impl RootsAt {
    /// Roots with Segre multiplicities: (value, multiplicity).
    pub fn weighted(&self) -> [(f64, f64); 4] {
        [
            (self.f2.value, 2.0),
            (self.f4.value, 2.0),
            (self.f5.value, 1.0),
            (self.f6.value, 1.0),
        ]
    }
}

pub fn roots_at(params: &HSpaceParams, pt: &Point6) -> Result<RootsAt, GeometryError> {
    let x = pt.coords();
    let eps = params.epsilon() as f64;
    let eps_t = params.epsilon_tilde() as f64;
    let f2 = Jet2::new(eps * x[1], eps, 0.0);
    let f4 = Jet2::new(eps_t * x[3] + params.a(), eps_t, 0.0);
    let f5 = eval_jet2(params.f5(), x[4])?;
    let f6 = eval_jet2(params.f6(), x[5])?;

    let named = [
        ("f2", f2.value),
        ("f4", f4.value),
        ("f5", f5.value),
        ("f6", f6.value),
    ];
    let scale = named.iter().fold(0.0f64, |m, (_, v)| m.max(v.abs()));
    let tol = COLLISION_REL_TOL * scale;
    for i in 0..4 {
        for j in i + 1..4 {
            let gap = (named[i].1 - named[j].1).abs();
            if gap <= tol {
                return Err(GeometryError::RootCollision {
                    first: named[i].0,
                    second: named[j].0,
                    gap,
                    tol,
                });
            }
        }
    }

    let theta = eval_jet2(params.theta(), x[1])?;
    let omega = eval_jet2(params.omega(), x[3])?;
    let a = a_factor("A", eps, x[0], theta)?;
    let a_tilde = a_factor("Atilde", eps_t, x[2], omega)?;
    Ok(RootsAt {
        f2,
        f4,
        f5,
        f6,
        a,
        a_tilde,
    })
}

fn a_factor(
    which: &'static str,
    coefficient: f64,
    x: f64,
    shape: Jet2,
) -> Result<AFactor, GeometryError> {
    let linear = coefficient * x;
    let value = linear + shape.value;
    let scale = linear.abs() + shape.value.abs();
    if !(value.abs() > ZERO_A_REL_TOL * scale) {
        return Err(GeometryError::ZeroA { which, value });
    }
    Ok(AFactor {
        value,
        d_linear: coefficient,
        shape,
    })
}

/// Symmetric 6×6 form stored as its 21 upper-triangular entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymForm6 {
    upper: [f64; 21],
}

impl Default for SymForm6 {
    fn default() -> Self {
        SymForm6 { upper: [0.0; 21] }
    }
}

/// Packed index of the unordered pair {i, j} (0-based, row-major upper).
#[inline]
pub fn packed_index(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    6 * i - i * i.saturating_sub(1) / 2 + (j - i)
}

impl SymForm6 {
    pub fn zeros() -> Self {
        Self::default()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.upper[packed_index(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.upper[packed_index(i, j)] = v;
    }

    pub fn entries(&self) -> &[f64; 21] {
        &self.upper
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(6, 6, |i, j| self.get(i, j))
    }

    /// Symmetric part of `m` (exact copy when `m` is already symmetric).
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut s = Self::zeros();
        for i in 0..6 {
            for j in i..6 {
                s.set(i, j, 0.5 * (m[(i, j)] + m[(j, i)]));
            }
        }
        s
    }

    pub fn max_abs(&self) -> f64 {
        self.upper.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn nonzero_count(&self) -> usize {
        self.upper.iter().filter(|v| **v != 0.0).count()
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = *self;
        out.upper.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn plus(&self, other: &Self) -> Self {
        let mut out = *self;
        out.upper
            .iter_mut()
            .zip(other.upper.iter())
            .for_each(|(a, b)| *a += b);
        out
    }
}

/// The six structurally nonzero components of a [2211] form.
#[derive(Debug, Clone, Copy)]
struct Blocks<T> {
    c12: T,
    c22: T,
    c34: T,
    c44: T,
    c55: T,
    c66: T,
}

impl<T: Copy> Blocks<T> {
    fn entries(&self) -> [((usize, usize), T); 6] {
        [
            ((0, 1), self.c12),
            ((1, 1), self.c22),
            ((2, 3), self.c34),
            ((3, 3), self.c44),
            ((4, 4), self.c55),
            ((5, 5), self.c66),
        ]
    }
}

impl Blocks<f64> {
    fn to_form(self) -> SymForm6 {
        let mut s = SymForm6::zeros();
        for ((i, j), v) in self.entries() {
            s.set(i, j, v);
        }
        s
    }
}

#[derive(Debug, Clone, Copy)]
struct RootVars<T> {
    f2: T,
    f4: T,
    f5: T,
    f6: T,
    a: T,
    a_tilde: T,
}

impl<T: Scalar> RootVars<T> {
    fn lift(r: &RootsAt, x: &[f64; 6]) -> Self {
        let lin = |coeff: f64, xv: f64| Jet2::new(coeff * xv, coeff, 0.0);
        RootVars {
            f2: T::univariate(r.f2, 1),
            f4: T::univariate(r.f4, 3),
            f5: T::univariate(r.f5, 4),
            f6: T::univariate(r.f6, 5),
            a: T::univariate(lin(r.a.d_linear, x[0]), 0) + T::univariate(r.a.shape, 1),
            a_tilde: T::univariate(lin(r.a_tilde.d_linear, x[2]), 2)
                + T::univariate(r.a_tilde.shape, 3),
        }
    }
}

fn metric_blocks<T: Scalar>(r: &RootVars<T>, s: Signs) -> Blocks<T> {
    let one = T::cst(1.0);
    let two = T::cst(2.0);
    let (f2, f4, f5, f6) = (r.f2, r.f4, r.f5, r.f6);
    let p2 = (f4 - f2).sq() * (f5 - f2) * (f6 - f2);
    let sigma1 = two / (f4 - f2) + one / (f5 - f2) + one / (f6 - f2);
    let p4 = (f2 - f4).sq() * (f5 - f4) * (f6 - f4);
    let sigma2 = two / (f2 - f4) + one / (f5 - f4) + one / (f6 - f4);
    let p2e = p2.scale(s.e2.value());
    let p4e = p4.scale(s.e4.value());
    Blocks {
        c12: p2e * r.a,
        c22: -(p2e * r.a.sq() * sigma1),
        c34: p4e * r.a_tilde,
        c44: -(p4e * r.a_tilde.sq() * sigma2),
        c55: ((f2 - f5).sq() * (f4 - f5).sq() * (f6 - f5)).scale(s.e5.value()),
        c66: ((f2 - f6).sq() * (f4 - f6).sq() * (f5 - f6)).scale(s.e6.value()),
    }
}

fn h_blocks<T: Scalar>(r: &RootVars<T>, g: &Blocks<T>, c: f64) -> Blocks<T> {
    let two = T::cst(2.0);
    let conformal = two * r.f2 + two * r.f4 + r.f5 + r.f6 + T::cst(c);
    Blocks {
        c12: (r.f2 + conformal) * g.c12,
        c22: r.f2 * g.c22 + r.a * g.c12 + conformal * g.c22,
        c34: (r.f4 + conformal) * g.c34,
        c44: r.f4 * g.c44 + r.a_tilde * g.c34 + conformal * g.c44,
        c55: (r.f5 + conformal) * g.c55,
        c66: (r.f6 + conformal) * g.c66,
    }
}

fn check_nondegenerate(g: &SymForm6) -> Result<(), GeometryError> {
    let m = g.to_matrix();
    if !m.iter().all(|v| v.is_finite()) {
        return Err(GeometryError::NonFinite("metric"));
    }
    let ratio = normalized_determinant(&m);
    if ratio > DEGENERACY_TOL {
        Ok(())
    } else {
        Err(GeometryError::DegenerateMetric { ratio })
    }
}

pub fn metric_at(params: &HSpaceParams, pt: &Point6) -> Result<SymForm6, GeometryError> {
    let roots = roots_at(params, pt)?;
    let vars = RootVars::<f64>::lift(&roots, pt.coords());
    let g = metric_blocks(&vars, params.signs()).to_form();
    check_nondegenerate(&g)?;
    Ok(g)
}

pub fn h_tensor_at(params: &HSpaceParams, pt: &Point6) -> Result<SymForm6, GeometryError> {
    let roots = roots_at(params, pt)?;
    let vars = RootVars::<f64>::lift(&roots, pt.coords());
    let g = metric_blocks(&vars, params.signs());
    check_nondegenerate(&g.to_form())?;
    Ok(h_blocks(&vars, &g, params.c()).to_form())
}

/// A symmetric form with its first and second coordinate partials.
#[derive(Debug, Clone, PartialEq)]
pub struct FormJets {
    pub value: SymForm6,
    /// `d1[k]` = ∂_k.
    pub d1: [SymForm6; 6],
    /// Packed over unordered pairs; see [`FormJets::second`].
    pub d2: [SymForm6; 21],
}

impl FormJets {
    /// ∂_k ∂_l.
    pub fn second(&self, k: usize, l: usize) -> &SymForm6 {
        &self.d2[packed_index(k, l)]
    }

    pub fn to_metric_jets(&self) -> MetricJets {
        MetricJets {
            g: self.value.to_matrix(),
            dg: self.d1.iter().map(SymForm6::to_matrix).collect(),
            ddg: (0..36)
                .map(|kl| self.second(kl / 6, kl % 6).to_matrix())
                .collect(),
        }
    }
}

type J6 = HyperJet<6>;

fn blocks_to_jets(b: &Blocks<J6>) -> FormJets {
    let mut value = SymForm6::zeros();
    let mut d1 = [SymForm6::zeros(); 6];
    let mut d2 = [SymForm6::zeros(); 21];
    for ((i, j), v) in b.entries() {
        value.set(i, j, v.value);
        for k in 0..6 {
            d1[k].set(i, j, v.grad[k]);
            for l in k..6 {
                d2[packed_index(k, l)].set(i, j, v.hess[k][l]);
            }
        }
    }
    FormJets { value, d1, d2 }
}

fn jet_blocks(
    params: &HSpaceParams,
    pt: &Point6,
) -> Result<(Blocks<J6>, Blocks<J6>), GeometryError> {
    let roots = roots_at(params, pt)?;
    let vars = RootVars::<J6>::lift(&roots, pt.coords());
    let g = metric_blocks(&vars, params.signs());
    let h = h_blocks(&vars, &g, params.c());
    for (_, v) in g.entries().iter().chain(h.entries().iter()) {
        if !v.is_finite() {
            return Err(GeometryError::NonFinite("metric jets"));
        }
    }
    Ok((g, h))
}

/// g with exact first and second partials.
pub fn metric_jets_at(params: &HSpaceParams, pt: &Point6) -> Result<FormJets, GeometryError> {
    let (g, _) = jet_blocks(params, pt)?;
    let jets = blocks_to_jets(&g);
    check_nondegenerate(&jets.value)?;
    Ok(jets)
}

/// h with exact first and second partials.
pub fn h_tensor_jets_at(params: &HSpaceParams, pt: &Point6) -> Result<FormJets, GeometryError> {
    let (g, h) = jet_blocks(params, pt)?;
    check_nondegenerate(&blocks_to_jets(&g).value)?;
    Ok(blocks_to_jets(&h))
}

/// φ = gⁱʲ h_ij / (2n + 2) and its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiAt {
    pub phi: f64,
    pub grad: Vec<f64>,
}

/// Trace formula for φ from g, h and their first partials, valid in any
/// dimension n: φ_,k = ∂_k(gⁱʲ h_ij) / (2n + 2).
pub fn phi_from_trace(
    g: &DMatrix<f64>,
    dg: &[DMatrix<f64>],
    h: &DMatrix<f64>,
    dh: &[DMatrix<f64>],
) -> Result<PhiAt, GeometryError> {
    let n = g.nrows();
    let ginv = metric_inverse(g)?;
    let divisor = (2 * n + 2) as f64;
    let trace = ginv.component_mul(h).sum();
    let grad = (0..n)
        .map(|k| {
            let dginv = -(&ginv * &dg[k] * &ginv);
            (dginv.component_mul(h).sum() + ginv.component_mul(&dh[k]).sum()) / divisor
        })
        .collect();
    Ok(PhiAt {
        phi: trace / divisor,
        grad,
    })
}

pub fn phi_gradient_at(params: &HSpaceParams, pt: &Point6) -> Result<PhiAt, GeometryError> {
    let (g, h) = jet_blocks(params, pt)?;
    let (g, h) = (blocks_to_jets(&g), blocks_to_jets(&h));
    check_nondegenerate(&g.value)?;
    let dg: Vec<_> = g.d1.iter().map(SymForm6::to_matrix).collect();
    let dh: Vec<_> = h.d1.iter().map(SymForm6::to_matrix).collect();
    phi_from_trace(&g.value.to_matrix(), &dg, &h.value.to_matrix(), &dh)
}

/// φ scalar only (no derivatives), for finite-difference probing.
pub fn phi_at(params: &HSpaceParams, pt: &Point6) -> Result<f64, GeometryError> {
    let g = metric_at(params, pt)?.to_matrix();
    let h = h_tensor_at(params, pt)?.to_matrix();
    let ginv = metric_inverse(&g)?;
    Ok(ginv.component_mul(&h).sum() / 14.0)
}

fn point_of(x: &[f64]) -> Result<Point6, GeometryError> {
    Point6::try_from(x)
}

impl MetricProvider for HSpaceParams {
    fn dim(&self) -> usize {
        6
    }

    fn metric_jets(&self, x: &[f64]) -> Result<MetricJets, GeometryError> {
        Ok(metric_jets_at(self, &point_of(x)?)?.to_metric_jets())
    }

    fn metric(&self, x: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        Ok(metric_at(self, &point_of(x)?)?.to_matrix())
    }
}

/// The h tensor of an instance as a symmetric field with exact partials.
#[derive(Debug, Clone, Copy)]
pub struct HTensorField<'a>(pub &'a HSpaceParams);

impl SymField for HTensorField<'_> {
    fn dim(&self) -> usize {
        6
    }

    fn eval_with_partials(
        &self,
        x: &[f64],
    ) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>), GeometryError> {
        let jets = h_tensor_jets_at(self.0, &point_of(x)?)?;
        Ok((
            jets.value.to_matrix(),
            jets.d1.iter().map(SymForm6::to_matrix).collect(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorcalc::{fd_gradient, fd_matrix_partials, relative_matrix_gap};

    fn p1() -> Point6 {
        Point6::new(REFERENCE_P1).unwrap()
    }

    #[test]
    fn packed_index_is_a_bijection() {
        let mut seen = [false; 21];
        for i in 0..6 {
            for j in i..6 {
                let k = packed_index(i, j);
                assert!(!seen[k]);
                seen[k] = true;
                assert_eq!(packed_index(j, i), k);
            }
        }
        assert_eq!(packed_index(0, 0), 0);
        assert_eq!(packed_index(5, 5), 20);
    }

    #[test]
    fn root_substitution() {
        let r = roots_at(&reference_r1(), &p1()).unwrap();
        assert_eq!(r.f2.value, 2.0);
        assert_eq!(r.f4.value, 5.0);
        assert_eq!(r.f5.value, -1.0);
        assert_eq!(r.f6.value, -4.0);
        assert_eq!(r.a.value, 1.0);
        assert_eq!(r.a_tilde.value, 1.0);
    }

    #[test]
    fn f4_is_a_when_epsilon_tilde_vanishes() {
        let mut spec = reference_r1().spec().clone();
        spec.epsilon_tilde = 0;
        spec.a = 3.0;
        spec.omega = ScalarFunction::constant(1.0);
        let params = spec.build().unwrap();
        for x4 in [-7.0, 0.0, 11.5] {
            let mut x = REFERENCE_P1;
            x[3] = x4;
            let r = roots_at(&params, &Point6::new(x).unwrap()).unwrap();
            assert_eq!(r.f4.value, 3.0);
        }
    }

    #[test]
    fn a_must_be_nonzero_without_epsilon_tilde() {
        let mut spec = reference_r1().spec().clone();
        spec.epsilon_tilde = 0;
        spec.a = 0.0;
        let err = spec.build().unwrap_err();
        assert!(err.to_string().contains("nonzero when epsilon_tilde = 0"));
    }

    #[test]
    fn r1_metric_components() {
        let g = metric_at(&reference_r1(), &p1()).unwrap();
        assert_eq!(g.get(0, 1), 162.0);
        assert_eq!(g.get(1, 1), -27.0);
        assert_eq!(g.get(2, 3), 486.0);
        assert!((g.get(3, 3) - 459.0).abs() <= 1e-12 * 459.0);
        assert_eq!(g.get(4, 4), -972.0);
        assert_eq!(g.get(5, 5), 8748.0);
        assert_eq!(g.nonzero_count(), 6);
        let m = g.to_matrix();
        assert_eq!(m, m.transpose());
    }

    #[test]
    fn r1_h_components() {
        let h = h_tensor_at(&reference_r1(), &p1()).unwrap();
        let expect = [
            ((0, 1), 1782.0),
            ((1, 1), -135.0),
            ((2, 3), 6804.0),
            ((3, 3), 6912.0),
            ((4, 4), -7776.0),
            ((5, 5), 43740.0),
        ];
        for ((i, j), v) in expect {
            assert!((h.get(i, j) - v).abs() <= 1e-12 * v.abs(), "h[{i}{j}]");
        }
        assert_eq!(h.nonzero_count(), 6);
    }

    #[test]
    fn collision_is_rejected() {
        // f5(x5) = x5 = -1 collides with f2 = x2 = -1
        let mut x = REFERENCE_P1;
        x[1] = -1.0;
        let err = metric_at(&reference_r1(), &Point6::new(x).unwrap()).unwrap_err();
        assert!(matches!(err, GeometryError::RootCollision { .. }));
    }

    #[test]
    fn vanishing_a_is_rejected() {
        let mut x = REFERENCE_P1;
        x[0] = 0.0;
        let err = metric_at(&reference_r1(), &Point6::new(x).unwrap()).unwrap_err();
        assert!(matches!(err, GeometryError::ZeroA { which: "A", .. }));
    }

    #[test]
    fn constant_coefficients_have_zero_partials() {
        let mut spec = reference_c0().spec().clone();
        spec.theta = ScalarFunction::constant(2.0);
        let params = spec.build().unwrap();
        let jets = metric_jets_at(&params, &p1()).unwrap();
        assert!(jets.d1.iter().all(|d| d.max_abs() == 0.0));
        assert!(jets.d2.iter().all(|d| d.max_abs() == 0.0));
    }

    #[test]
    fn first_partial_of_g12_along_x1() {
        let jets = metric_jets_at(&reference_r1(), &p1()).unwrap();
        assert_eq!(jets.d1[0].get(0, 1), 162.0);
    }

    #[test]
    fn jets_match_finite_differences_at_p1() {
        let params = reference_r1();
        let x = REFERENCE_P1;
        let jets = metric_jets_at(&params, &p1()).unwrap();
        let eval = |y: &[f64]| metric_at(&params, &Point6::try_from(y)?).map(|g| g.to_matrix());
        let fd = fd_matrix_partials(eval, &x).unwrap();
        for k in 0..6 {
            assert!(
                relative_matrix_gap(&jets.d1[k].to_matrix(), &fd[k]) <= 1e-6,
                "k={k}"
            );
        }
    }

    #[test]
    fn c_shift_moves_h_by_multiple_of_g() {
        let params = reference_r1();
        let g = metric_at(&params, &p1()).unwrap();
        let h0 = h_tensor_at(&params, &p1()).unwrap();
        let h1 = h_tensor_at(&params.with_c(0.75), &p1()).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let d = h1.get(i, j) - h0.get(i, j);
                assert!((d - 0.75 * g.get(i, j)).abs() <= 1e-12 * h0.max_abs());
            }
        }
    }

    #[test]
    fn h_minus_conformal_part_has_block_zeros() {
        let params = reference_r1();
        let r = roots_at(&params, &p1()).unwrap();
        let s = 2.0 * r.f2.value + 2.0 * r.f4.value + r.f5.value + r.f6.value + params.c();
        assert_eq!(s, 9.0);
        let g = metric_at(&params, &p1()).unwrap();
        let h = h_tensor_at(&params, &p1()).unwrap();
        let rest = h.plus(&g.scaled(-s));
        assert_eq!(rest.get(0, 0), 0.0);
        assert_eq!(rest.get(2, 2), 0.0);
        for i in 0..6 {
            for j in 0..6 {
                let block = |k: usize| match k {
                    0 | 1 => 0,
                    2 | 3 => 1,
                    4 => 2,
                    _ => 3,
                };
                if block(i) != block(j) {
                    assert_eq!(rest.get(i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn flipping_e2_flips_only_its_block() {
        let params = reference_r1();
        let mut signs = params.signs();
        signs.e2 = signs.e2.flipped();
        let flipped = params.with_signs(signs);
        let (g0, g1) = (
            metric_at(&params, &p1()).unwrap(),
            metric_at(&flipped, &p1()).unwrap(),
        );
        let (h0, h1) = (
            h_tensor_at(&params, &p1()).unwrap(),
            h_tensor_at(&flipped, &p1()).unwrap(),
        );
        for i in 0..6 {
            for j in i..6 {
                let in_block = i < 2 && j < 2;
                let sg = if in_block { -1.0 } else { 1.0 };
                assert_eq!(g1.get(i, j), sg * g0.get(i, j));
                assert_eq!(h1.get(i, j), sg * h0.get(i, j));
            }
        }
    }

    #[test]
    fn phi_gradient_matches_fd_of_phi() {
        let params = reference_r1();
        let phi = phi_gradient_at(&params, &p1()).unwrap();
        assert!((phi.phi - phi_at(&params, &p1()).unwrap()).abs() <= 1e-12 * phi.phi.abs());
        let fd = fd_gradient(|y| phi_at(&params, &Point6::try_from(y)?), &REFERENCE_P1).unwrap();
        let scale = phi.grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..6 {
            assert!((phi.grad[k] - fd[k]).abs() <= 1e-6 * scale, "k={k}");
        }
    }

    #[test]
    fn params_round_trip_through_toml() {
        let params = reference_r1();
        let text = toml::to_string(&params).unwrap();
        let back: HSpaceParams = toml::from_str(&text).unwrap();
        assert_eq!(back, params);
    }

    #[test]
    fn sixteen_sign_assignments() {
        let all: Vec<_> = Signs::all().collect();
        assert_eq!(all.len(), 16);
        assert_eq!(all[0], Signs::ALL_PLUS);
        let unique: std::collections::HashSet<_> = all.iter().collect();
        assert_eq!(unique.len(), 16);
    }
}
