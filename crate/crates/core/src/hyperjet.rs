//! Second-order forward-mode jets in `N` variables.
//!
//! A [`HyperJet`] carries a value, its gradient and its (symmetric) Hessian.
//! Component formulas of the metric family are written once against the
//! [`Scalar`] trait and evaluated either on plain `f64` or on jets.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::funcjet::Jet2;

/// Minimal field interface shared by `f64` and [`HyperJet`].
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn cst(v: f64) -> Self;
    fn val(&self) -> f64;
    /// Lifts a univariate 2-jet of a function of coordinate `coord`.
    fn univariate(jet: Jet2, coord: usize) -> Self;

    fn scale(self, s: f64) -> Self {
        self * Self::cst(s)
    }

    fn sq(self) -> Self {
        self * self
    }
}

impl Scalar for f64 {
    fn cst(v: f64) -> Self {
        v
    }

    fn val(&self) -> f64 {
        *self
    }

    fn univariate(jet: Jet2, _coord: usize) -> Self {
        jet.value
    }

    fn scale(self, s: f64) -> Self {
        self * s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperJet<const N: usize> {
    pub value: f64,
    pub grad: [f64; N],
    pub hess: [[f64; N]; N],
}

impl<const N: usize> HyperJet<N> {
    pub fn constant(value: f64) -> Self {
        HyperJet {
            value,
            grad: [0.0; N],
            hess: [[0.0; N]; N],
        }
    }

    /// The coordinate function `x^coord` evaluated at `value`.
    pub fn variable(value: f64, coord: usize) -> Self {
        let mut j = Self::constant(value);
        j.grad[coord] = 1.0;
        j
    }

    pub fn recip(self) -> Self {
        let r = 1.0 / self.value;
        let r2 = r * r;
        let r3 = r2 * r;
        let mut out = Self::constant(r);
        for i in 0..N {
            out.grad[i] = -self.grad[i] * r2;
            for j in 0..N {
                out.hess[i][j] = -self.hess[i][j] * r2 + 2.0 * self.grad[i] * self.grad[j] * r3;
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.grad.iter().all(|g| g.is_finite())
            && self.hess.iter().flatten().all(|h| h.is_finite())
    }
}

impl<const N: usize> Scalar for HyperJet<N> {
    fn cst(v: f64) -> Self {
        Self::constant(v)
    }

    fn val(&self) -> f64 {
        self.value
    }

    fn univariate(jet: Jet2, coord: usize) -> Self {
        let mut j = Self::constant(jet.value);
        j.grad[coord] = jet.d1;
        j.hess[coord][coord] = jet.d2;
        j
    }

    fn scale(self, s: f64) -> Self {
        let mut out = self;
        out.value *= s;
        for i in 0..N {
            out.grad[i] *= s;
            for j in 0..N {
                out.hess[i][j] *= s;
            }
        }
        out
    }
}

impl<const N: usize> Add for HyperJet<N> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut out = self;
        out.value += rhs.value;
        for i in 0..N {
            out.grad[i] += rhs.grad[i];
            for j in 0..N {
                out.hess[i][j] += rhs.hess[i][j];
            }
        }
        out
    }
}

impl<const N: usize> Sub for HyperJet<N> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl<const N: usize> Neg for HyperJet<N> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl<const N: usize> Mul for HyperJet<N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let (a, b) = (self, rhs);
        let mut out = Self::constant(a.value * b.value);
        for i in 0..N {
            out.grad[i] = a.grad[i] * b.value + a.value * b.grad[i];
            for j in 0..N {
                out.hess[i][j] = a.hess[i][j] * b.value
                    + a.grad[i] * b.grad[j]
                    + a.grad[j] * b.grad[i]
                    + a.value * b.hess[i][j];
            }
        }
        out
    }
}

impl<const N: usize> Div for HyperJet<N> {
    type Output = Self;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Self) -> Self {
        self * rhs.recip()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    type J2 = HyperJet<2>;

    // f(x, y) = x² y / (1 + y²) evaluated generically
    fn f<T: Scalar>(x: T, y: T) -> T {
        x * x * y / (T::cst(1.0) + y * y)
    }

    fn fd_grad(x: f64, y: f64) -> [f64; 2] {
        let h = 1e-6;
        [
            (f(x + h, y) - f(x - h, y)) / (2.0 * h),
            (f(x, y + h) - f(x, y - h)) / (2.0 * h),
        ]
    }

    #[test]
    fn product_rule_on_polynomial() {
        let x = J2::variable(3.0, 0);
        let y = J2::variable(2.0, 1);
        let p = x * x * y;
        assert_eq!(p.value, 18.0);
        assert_eq!(p.grad, [12.0, 9.0]);
        assert_eq!(p.hess, [[4.0, 6.0], [6.0, 0.0]]);
    }

    #[test]
    fn univariate_lift_is_chain_rule() {
        let j = J2::univariate(Jet2::new(1.0, 2.0, 3.0), 1);
        assert_eq!(j.grad, [0.0, 2.0]);
        assert_eq!(j.hess, [[0.0, 0.0], [0.0, 3.0]]);
    }

    proptest! {
        #[test]
        fn rational_jet_matches_finite_differences(x in -2.0..2.0f64, y in -2.0..2.0f64) {
            let j = f(J2::variable(x, 0), J2::variable(y, 1));
            prop_assert!((j.value - f(x, y)).abs() <= 1e-14 * (1.0 + j.value.abs()));
            let g = fd_grad(x, y);
            for i in 0..2 {
                prop_assert!((j.grad[i] - g[i]).abs() <= 1e-7 * (1.0 + g[i].abs()));
            }
            let h = 1e-5;
            let gp = f(J2::variable(x + h, 0), J2::variable(y, 1)).grad;
            let gm = f(J2::variable(x - h, 0), J2::variable(y, 1)).grad;
            for i in 0..2 {
                let fd = (gp[i] - gm[i]) / (2.0 * h);
                prop_assert!((j.hess[0][i] - fd).abs() <= 1e-6 * (1.0 + fd.abs()));
                prop_assert_eq!(j.hess[0][i], j.hess[i][0]);
            }
        }
    }
}
