//! Smooth maps R^a → R^b evaluable on reals, first/second-order duals and jets.
//!
//! Coordinate expressions are written once against [`MapFn::call`], generic in the
//! scalar type; [`SmoothMap`] erases the concrete type so maps can be stored and composed.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::dual::{Dual, Real, D1, D2};
use super::jet::Jet;
use crate::error::{NhError, Result};

/// Scalars that a [`SmoothMap`] can be evaluated on.
///
/// `eval_dual_map` evaluates one differentiation level higher, which lets
/// composite maps take derivatives of their components generically. Nesting
/// is supported up to second order overall.
pub trait Scalar: Real {
    fn eval_map(map: &dyn Smooth, x: &[Self]) -> Vec<Self>;
    fn eval_dual_map(map: &dyn Smooth, x: &[Dual<Self>]) -> Vec<Dual<Self>>;
}

impl Scalar for f64 {
    fn eval_map(map: &dyn Smooth, x: &[f64]) -> Vec<f64> {
        map.eval_f64(x)
    }
    fn eval_dual_map(map: &dyn Smooth, x: &[D1]) -> Vec<D1> {
        map.eval_d1(x)
    }
}

impl Scalar for D1 {
    fn eval_map(map: &dyn Smooth, x: &[D1]) -> Vec<D1> {
        map.eval_d1(x)
    }
    fn eval_dual_map(map: &dyn Smooth, x: &[D2]) -> Vec<D2> {
        map.eval_d2(x)
    }
}

impl Scalar for D2 {
    fn eval_map(map: &dyn Smooth, x: &[D2]) -> Vec<D2> {
        map.eval_d2(x)
    }
    fn eval_dual_map(_: &dyn Smooth, _: &[Dual<D2>]) -> Vec<Dual<D2>> {
        panic!("automatic differentiation nested beyond second order")
    }
}

impl Scalar for Jet {
    fn eval_map(map: &dyn Smooth, x: &[Jet]) -> Vec<Jet> {
        map.eval_jet(x)
    }
    fn eval_dual_map(_: &dyn Smooth, _: &[Dual<Jet>]) -> Vec<Dual<Jet>> {
        panic!("composite maps that differentiate internally cannot be expanded as jets")
    }
}

/// Object-safe evaluator interface. Implemented automatically for every [`MapFn`].
pub trait Smooth: Send + Sync {
    fn arity(&self) -> usize;
    fn coarity(&self) -> usize;
    fn eval_f64(&self, x: &[f64]) -> Vec<f64>;
    fn eval_d1(&self, x: &[D1]) -> Vec<D1>;
    fn eval_d2(&self, x: &[D2]) -> Vec<D2>;
    fn eval_jet(&self, x: &[Jet]) -> Vec<Jet>;
}

/// A coordinate expression written generically over the scalar type.
pub trait MapFn: Send + Sync + 'static {
    fn arity(&self) -> usize;
    fn coarity(&self) -> usize;
    fn call<T: Scalar>(&self, x: &[T]) -> Vec<T>;
}

impl<F: MapFn> Smooth for F {
    fn arity(&self) -> usize {
        MapFn::arity(self)
    }
    fn coarity(&self) -> usize {
        MapFn::coarity(self)
    }
    fn eval_f64(&self, x: &[f64]) -> Vec<f64> {
        self.call(x)
    }
    fn eval_d1(&self, x: &[D1]) -> Vec<D1> {
        self.call(x)
    }
    fn eval_d2(&self, x: &[D2]) -> Vec<D2> {
        self.call(x)
    }
    fn eval_jet(&self, x: &[Jet]) -> Vec<Jet> {
        self.call(x)
    }
}

#[derive(Clone)]
pub struct SmoothMap(Arc<dyn Smooth>);

impl fmt::Debug for SmoothMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SmoothMap({} -> {})", self.arity(), self.coarity())
    }
}

impl SmoothMap {
    pub fn new<F: MapFn>(f: F) -> SmoothMap {
        SmoothMap(Arc::new(f))
    }

    pub fn arity(&self) -> usize {
        self.0.arity()
    }

    pub fn coarity(&self) -> usize {
        self.0.coarity()
    }

    pub fn inner(&self) -> &dyn Smooth {
        &*self.0
    }

    /// Evaluate at any supported scalar type. The input length is not checked.
    pub fn call<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        T::eval_map(&*self.0, x)
    }

    /// Evaluate on reals with a dimension check.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_arity(x.len())?;
        Ok(self.0.eval_f64(x))
    }

    pub fn check_arity(&self, len: usize) -> Result<()> {
        if len != self.arity() {
            return Err(NhError::Dimension { expected: self.arity(), got: len });
        }
        Ok(())
    }
}

/// Jacobian rows (coarity × arity) at any scalar level, one dual pass per input.
pub fn jacobian_at<T: Scalar>(f: &SmoothMap, x: &[T]) -> Vec<Vec<T>> {
    let n = x.len();
    let mut rows = vec![Vec::with_capacity(n); f.coarity()];
    let mut seed: Vec<Dual<T>> = x.iter().map(|xi| Dual::constant(xi.clone())).collect();
    for j in 0..n {
        seed[j].du = T::one();
        let out = T::eval_dual_map(f.inner(), &seed);
        for (row, o) in rows.iter_mut().zip(out) {
            row.push(o.du);
        }
        seed[j].du = T::zero();
    }
    rows
}

/// Value and directional derivative along `dir` in one pass.
pub fn jvp_at<T: Scalar>(f: &SmoothMap, x: &[T], dir: &[T]) -> (Vec<T>, Vec<T>) {
    let seed: Vec<Dual<T>> = x.iter().zip(dir).map(|(a, b)| Dual::new(a.clone(), b.clone())).collect();
    T::eval_dual_map(f.inner(), &seed).into_iter().map(|d| (d.re, d.du)).unzip()
}

/// Gradient of the first output component.
pub fn gradient_at<T: Scalar>(f: &SmoothMap, x: &[T]) -> Vec<T> {
    let mut seed: Vec<Dual<T>> = x.iter().map(|xi| Dual::constant(xi.clone())).collect();
    let mut grad = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        seed[j].du = T::one();
        grad.push(T::eval_dual_map(f.inner(), &seed)[0].du.clone());
        seed[j].du = T::zero();
    }
    grad
}

pub fn jacobian(f: &SmoothMap, x: &[f64]) -> Result<DMatrix<f64>> {
    f.check_arity(x.len())?;
    let rows = jacobian_at(f, x);
    Ok(DMatrix::from_fn(f.coarity(), x.len(), |i, j| rows[i][j]))
}

pub fn gradient(f: &SmoothMap, x: &[f64]) -> Result<Vec<f64>> {
    f.check_arity(x.len())?;
    Ok(gradient_at(f, x))
}

/// Second directional derivative of the first output: returns
/// (f, ∂_inner f, ∂_outer f, ∂_outer ∂_inner f).
pub fn second_directional(f: &SmoothMap, x: &[f64], outer: &[f64], inner: &[f64]) -> (f64, f64, f64, f64) {
    let seed: Vec<D2> = (0..x.len()).map(|k| Dual::new(Dual::new(x[k], inner[k]), Dual::new(outer[k], 0.0))).collect();
    let y = &f.inner().eval_d2(&seed)[0];
    (y.re.re, y.re.du, y.du.re, y.du.du)
}

/// Hessian of a scalar map, exact to rounding through nested duals.
pub fn hessian(f: &SmoothMap, x: &[f64]) -> Result<DMatrix<f64>> {
    f.check_arity(x.len())?;
    if f.coarity() != 1 {
        return Err(NhError::Dimension { expected: 1, got: f.coarity() });
    }
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    let mut ei = vec![0.0; n];
    let mut ej = vec![0.0; n];
    for i in 0..n {
        ei[i] = 1.0;
        for j in i..n {
            ej[j] = 1.0;
            let (_, _, _, hij) = second_directional(f, x, &ei, &ej);
            h[(i, j)] = hij;
            h[(j, i)] = hij;
            ej[j] = 0.0;
        }
        ei[i] = 0.0;
    }
    Ok(h)
}

/// Central finite-difference Jacobian, used as an independent oracle in tests.
pub fn fd_jacobian(f: &SmoothMap, x: &[f64], step: f64) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(f.coarity(), x.len());
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        xp[j] = x[j] + step;
        let fp = f.call(&xp);
        xp[j] = x[j] - step;
        let fm = f.call(&xp);
        xp[j] = x[j];
        for i in 0..f.coarity() {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * step);
        }
    }
    jac
}

/// Affine-linear and elementwise helpers used when writing maps.
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + x.clone() * y.clone())
}

pub fn consts<T: Real>(xs: &[f64]) -> Vec<T> {
    xs.iter().map(|&x| T::from(x)).collect()
}

/// The identity map on R^n.
pub struct Identity(pub usize);

impl MapFn for Identity {
    fn arity(&self) -> usize {
        self.0
    }
    fn coarity(&self) -> usize {
        self.0
    }
    fn call<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        x.to_vec()
    }
}

/// A map returning fixed values regardless of input.
pub struct Constant {
    pub arity: usize,
    pub values: Vec<f64>,
}

impl MapFn for Constant {
    fn arity(&self) -> usize {
        self.arity
    }
    fn coarity(&self) -> usize {
        self.values.len()
    }
    fn call<T: Scalar>(&self, _: &[T]) -> Vec<T> {
        consts(&self.values)
    }
}

/// `g ∘ f`.
pub struct Compose {
    pub outer: SmoothMap,
    pub inner: SmoothMap,
}

impl MapFn for Compose {
    fn arity(&self) -> usize {
        self.inner.arity()
    }
    fn coarity(&self) -> usize {
        self.outer.coarity()
    }
    fn call<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        self.outer.call(&self.inner.call(x))
    }
}
