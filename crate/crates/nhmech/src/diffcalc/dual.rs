//! Forward-mode dual numbers and the scalar trait every evaluator is written against.
//!
//! `Dual<T>` carries a value and one infinitesimal part. Nesting gives second
//! derivatives: `D2 = Dual<Dual<f64>>`.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Arithmetic shared by `f64`, dual numbers and truncated Taylor jets.
pub trait Real:
    Clone
    + Debug
    + Send
    + Sync
    + 'static
    + From<f64>
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// Real part with all infinitesimal parts dropped.
    fn value(&self) -> f64;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn powi(&self, n: i32) -> Self;

    fn zero() -> Self {
        Self::from(0.0)
    }

    fn one() -> Self {
        Self::from(1.0)
    }
}

impl Real for f64 {
    fn value(&self) -> f64 {
        *self
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn powi(&self, n: i32) -> Self {
        f64::powi(*self, n)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub du: T,
}

pub type D1 = Dual<f64>;
pub type D2 = Dual<Dual<f64>>;

impl<T: Real> Dual<T> {
    pub fn new(re: T, du: T) -> Self {
        Dual { re, du }
    }

    pub fn constant(re: T) -> Self {
        Dual { re, du: T::zero() }
    }

    pub fn variable(re: T) -> Self {
        Dual { re, du: T::one() }
    }
}

impl<T: Real> From<f64> for Dual<T> {
    fn from(x: f64) -> Self {
        Dual::constant(T::from(x))
    }
}

impl<T: Real> Add for Dual<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual { re: self.re + o.re, du: self.du + o.du }
    }
}

impl<T: Real> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual { re: self.re - o.re, du: self.du - o.du }
    }
}

impl<T: Real> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let du = self.re.clone() * o.du + self.du * o.re.clone();
        Dual { re: self.re * o.re, du }
    }
}

impl<T: Real> Div for Dual<T> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let re = self.re / o.re.clone();
        let du = (self.du - re.clone() * o.du) / o.re;
        Dual { re, du }
    }
}

impl<T: Real> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual { re: -self.re, du: -self.du }
    }
}

impl<T: Real> Add<f64> for Dual<T> {
    type Output = Self;
    fn add(self, c: f64) -> Self {
        Dual { re: self.re + c, du: self.du }
    }
}

impl<T: Real> Sub<f64> for Dual<T> {
    type Output = Self;
    fn sub(self, c: f64) -> Self {
        Dual { re: self.re - c, du: self.du }
    }
}

impl<T: Real> Mul<f64> for Dual<T> {
    type Output = Self;
    fn mul(self, c: f64) -> Self {
        Dual { re: self.re * c, du: self.du * c }
    }
}

impl<T: Real> Div<f64> for Dual<T> {
    type Output = Self;
    fn div(self, c: f64) -> Self {
        Dual { re: self.re / c, du: self.du / c }
    }
}

impl<T: Real> Real for Dual<T> {
    fn value(&self) -> f64 {
        self.re.value()
    }
    fn sin(&self) -> Self {
        Dual { re: self.re.sin(), du: self.du.clone() * self.re.cos() }
    }
    fn cos(&self) -> Self {
        Dual { re: self.re.cos(), du: -(self.du.clone() * self.re.sin()) }
    }
    fn exp(&self) -> Self {
        let e = self.re.exp();
        Dual { re: e.clone(), du: self.du.clone() * e }
    }
    fn ln(&self) -> Self {
        Dual { re: self.re.ln(), du: self.du.clone() / self.re.clone() }
    }
    fn sqrt(&self) -> Self {
        let s = self.re.sqrt();
        Dual { re: s.clone(), du: self.du.clone() / (s * 2.0) }
    }
    fn powi(&self, n: i32) -> Self {
        match n {
            0 => Dual::constant(T::one()),
            _ => Dual { re: self.re.powi(n), du: self.du.clone() * self.re.powi(n - 1) * (n as f64) },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let x = D1::variable(3.0);
        let y = x * x * 2.0 + 1.0;
        assert_eq!(y.re, 19.0);
        assert_eq!(y.du, 12.0);
    }

    #[test]
    fn nested_second_derivative_of_sin() {
        let x: D2 = Dual::new(Dual::variable(0.7), Dual::constant(1.0));
        let y = x.sin();
        assert!((y.re.du - 0.7f64.cos()).abs() < 1e-15);
        assert!((y.du.du + 0.7f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn quotient_and_powers() {
        let x = D1::variable(2.0);
        let y = D1::one() / x.powi(3);
        assert!((y.du + 3.0 / 16.0).abs() < 1e-15);
        let z = x.sqrt().ln();
        assert!((z.du - 0.25).abs() < 1e-15);
    }
}
