//! Truncated multivariate Taylor series.
//!
//! A `Jet` stores the Taylor coefficients of a function of `nvars` variables
//! around a base point, up to a fixed total degree. Jets are used for iterated
//! Lie brackets, where each bracket consumes one order of differentiation.

use std::collections::HashMap;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use super::dual::Real;

#[derive(Debug)]
pub struct JetSpace {
    nvars: usize,
    degree: usize,
    exps: Vec<Vec<u8>>,
    products: Vec<(usize, usize, usize)>,
    derivs: Vec<Vec<(usize, usize, f64)>>,
}

impl JetSpace {
    pub fn new(nvars: usize, degree: usize) -> Arc<JetSpace> {
        let mut exps = Vec::new();
        for d in 0..=degree {
            let mut cur = vec![0u8; nvars];
            graded(nvars, d, 0, &mut cur, &mut exps);
        }
        let index: HashMap<Vec<u8>, usize> = exps.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        let deg = |e: &Vec<u8>| e.iter().map(|&x| x as usize).sum::<usize>();

        let mut products = Vec::new();
        for (i, a) in exps.iter().enumerate() {
            for (j, b) in exps.iter().enumerate() {
                if deg(a) + deg(b) > degree {
                    continue;
                }
                let sum: Vec<u8> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                products.push((i, j, index[&sum]));
            }
        }

        let mut derivs = vec![Vec::new(); nvars];
        for (v, table) in derivs.iter_mut().enumerate() {
            for (i, e) in exps.iter().enumerate() {
                if e[v] == 0 {
                    continue;
                }
                let mut lowered = e.clone();
                lowered[v] -= 1;
                table.push((i, index[&lowered], e[v] as f64));
            }
        }

        Arc::new(JetSpace { nvars, degree, exps, products, derivs })
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn exponents(&self, i: usize) -> &[u8] {
        &self.exps[i]
    }
}

fn graded(nvars: usize, left: usize, pos: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if pos + 1 == nvars {
        cur[pos] = left as u8;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    if nvars == 0 {
        if left == 0 {
            out.push(Vec::new());
        }
        return;
    }
    for k in (0..=left).rev() {
        cur[pos] = k as u8;
        graded(nvars, left - k, pos + 1, cur, out);
    }
    cur[pos] = 0;
}

/// A truncated Taylor series. Constants carry no space and are promoted on use.
#[derive(Clone, Debug)]
pub struct Jet {
    space: Option<Arc<JetSpace>>,
    coef: Vec<f64>,
}

impl Jet {
    pub fn constant_in(space: &Arc<JetSpace>, value: f64) -> Jet {
        let mut coef = vec![0.0; space.len()];
        coef[0] = value;
        Jet { space: Some(space.clone()), coef }
    }

    /// The coordinate function `x_j` expanded around `value`.
    pub fn variable(space: &Arc<JetSpace>, j: usize, value: f64) -> Jet {
        let mut jet = Jet::constant_in(space, value);
        if space.degree >= 1 {
            let idx = 1 + j;
            debug_assert_eq!(space.exps[idx][j], 1);
            jet.coef[idx] = 1.0;
        }
        jet
    }

    pub fn space(&self) -> Option<&Arc<JetSpace>> {
        self.space.as_ref()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }

    /// Partial derivative with respect to variable `j`. The top-degree
    /// coefficients of the result are zero and should not be trusted.
    pub fn partial(&self, j: usize) -> Jet {
        match &self.space {
            None => Jet::from(0.0),
            Some(sp) => {
                let mut coef = vec![0.0; sp.len()];
                for &(src, dst, f) in &sp.derivs[j] {
                    coef[dst] += f * self.coef[src];
                }
                Jet { space: Some(sp.clone()), coef }
            }
        }
    }

    fn in_space(&self, sp: &Arc<JetSpace>) -> Jet {
        match &self.space {
            Some(_) => self.clone(),
            None => Jet::constant_in(sp, self.coef[0]),
        }
    }

    fn pair(a: Jet, b: Jet) -> (Jet, Jet) {
        match (&a.space, &b.space) {
            (Some(sp), None) => {
                let b = b.in_space(sp);
                (a, b)
            }
            (None, Some(sp)) => {
                let a = a.in_space(sp);
                (a, b)
            }
            _ => (a, b),
        }
    }

    /// Compose with a univariate function given its Taylor coefficients at the base value.
    fn compose(&self, taylor: impl Fn(usize) -> f64) -> Jet {
        let sp = match &self.space {
            None => return Jet::from(taylor(0)),
            Some(sp) => sp.clone(),
        };
        let mut h = self.clone();
        h.coef[0] = 0.0;
        let mut acc = Jet::constant_in(&sp, taylor(sp.degree));
        for k in (0..sp.degree).rev() {
            acc = acc * h.clone() + taylor(k);
        }
        acc
    }
}

impl From<f64> for Jet {
    fn from(x: f64) -> Jet {
        Jet { space: None, coef: vec![x] }
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        let (mut a, b) = Jet::pair(self, o);
        for (x, y) in a.coef.iter_mut().zip(&b.coef) {
            *x += y;
        }
        a
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(mut self) -> Jet {
        for x in self.coef.iter_mut() {
            *x = -*x;
        }
        self
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let (a, b) = Jet::pair(self, o);
        match &a.space {
            None => Jet::from(a.coef[0] * b.coef[0]),
            Some(sp) => {
                let mut coef = vec![0.0; sp.len()];
                for &(i, j, k) in &sp.products {
                    coef[k] += a.coef[i] * b.coef[j];
                }
                Jet { space: a.space.clone(), coef }
            }
        }
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        let b0 = o.coef[0];
        let recip = o.compose(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign / b0.powi(k as i32 + 1)
        });
        self * recip
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, c: f64) -> Jet {
        self.coef[0] += c;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, c: f64) -> Jet {
        self.coef[0] -= c;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, c: f64) -> Jet {
        for x in self.coef.iter_mut() {
            *x *= c;
        }
        self
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(self, c: f64) -> Jet {
        self * (1.0 / c)
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

impl Real for Jet {
    fn value(&self) -> f64 {
        self.coef[0]
    }

    fn sin(&self) -> Jet {
        let (s, c) = self.coef[0].sin_cos();
        self.compose(|k| [s, c, -s, -c][k % 4] / factorial(k))
    }

    fn cos(&self) -> Jet {
        let (s, c) = self.coef[0].sin_cos();
        self.compose(|k| [c, -s, -c, s][k % 4] / factorial(k))
    }

    fn exp(&self) -> Jet {
        let e = self.coef[0].exp();
        self.compose(|k| e / factorial(k))
    }

    fn ln(&self) -> Jet {
        let a0 = self.coef[0];
        self.compose(|k| {
            if k == 0 {
                a0.ln()
            } else {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign / (k as f64 * a0.powi(k as i32))
            }
        })
    }

    fn sqrt(&self) -> Jet {
        let a0 = self.coef[0];
        let root = a0.sqrt();
        self.compose(|k| {
            let mut binom = 1.0;
            for i in 0..k {
                binom *= (0.5 - i as f64) / (i as f64 + 1.0);
            }
            root * binom / a0.powi(k as i32)
        })
    }

    fn powi(&self, n: i32) -> Jet {
        let a0 = self.coef[0];
        self.compose(|k| {
            let mut falling = 1.0;
            for i in 0..k {
                falling *= (n - i as i32) as f64;
            }
            if falling == 0.0 {
                0.0
            } else {
                falling / factorial(k) * a0.powi(n - k as i32)
            }
        })
    }
}
