//! Jacobi–Lie brackets of vector fields on a chart of R^n.

use std::sync::Arc;

use super::jet::{Jet, JetSpace};
use super::smooth::{jacobian_at, MapFn, Scalar, SmoothMap};
use crate::error::{NhError, Result};

fn check_field(x: &SmoothMap) -> Result<()> {
    if x.arity() != x.coarity() {
        return Err(NhError::Dimension { expected: x.arity(), got: x.coarity() });
    }
    Ok(())
}

/// `[X, Y](q) = DY·X − DX·Y`.
pub fn lie_bracket(x: &SmoothMap, y: &SmoothMap, q: &[f64]) -> Result<Vec<f64>> {
    check_field(x)?;
    check_field(y)?;
    if y.arity() != x.arity() {
        return Err(NhError::Dimension { expected: x.arity(), got: y.arity() });
    }
    x.check_arity(q.len())?;
    Ok(Bracket { x: x.clone(), y: y.clone() }.call(q))
}

/// The bracket as a map, so it can itself be differentiated once more.
pub struct Bracket {
    pub x: SmoothMap,
    pub y: SmoothMap,
}

impl MapFn for Bracket {
    fn arity(&self) -> usize {
        self.x.arity()
    }
    fn coarity(&self) -> usize {
        self.x.arity()
    }
    fn call<T: Scalar>(&self, q: &[T]) -> Vec<T> {
        let xv = self.x.call(q);
        let yv = self.y.call(q);
        let dx = jacobian_at(&self.x, q);
        let dy = jacobian_at(&self.y, q);
        (0..q.len())
            .map(|i| {
                let mut acc = T::zero();
                for j in 0..q.len() {
                    acc = acc + dy[i][j].clone() * xv[j].clone() - dx[i][j].clone() * yv[j].clone();
                }
                acc
            })
            .collect()
    }
}

/// A vector field expanded as a Taylor jet around a base point.
#[derive(Clone, Debug)]
pub struct FieldJet {
    pub comps: Vec<Jet>,
}

impl FieldJet {
    pub fn expand(field: &SmoothMap, q: &[f64], space: &Arc<JetSpace>) -> FieldJet {
        let vars: Vec<Jet> = q.iter().enumerate().map(|(j, &v)| Jet::variable(space, j, v)).collect();
        FieldJet { comps: field.call(&vars) }
    }

    pub fn value(&self) -> Vec<f64> {
        use super::dual::Real;
        self.comps.iter().map(|c| c.value()).collect()
    }

    /// Bracket in jet arithmetic. The result is valid to one degree less than the inputs.
    pub fn bracket(&self, other: &FieldJet) -> FieldJet {
        let n = self.comps.len();
        let comps = (0..n)
            .map(|i| {
                let mut acc = Jet::from(0.0);
                for j in 0..n {
                    acc = acc + other.comps[i].partial(j) * self.comps[j].clone()
                        - self.comps[i].partial(j) * other.comps[j].clone();
                }
                acc
            })
            .collect();
        FieldJet { comps }
    }
}

/// Values at `q` of iterated brackets grouped by depth: depth 1 holds the
/// generators, depth d holds `[g_i, F]` for every generator `g_i` and depth-(d−1) field `F`.
pub fn iterated_brackets(generators: &[SmoothMap], q: &[f64], max_depth: usize) -> Vec<Vec<Vec<f64>>> {
    if generators.is_empty() || max_depth == 0 {
        return Vec::new();
    }
    let space = JetSpace::new(q.len(), max_depth - 1);
    let gens: Vec<FieldJet> = generators.iter().map(|g| FieldJet::expand(g, q, &space)).collect();
    let mut levels: Vec<Vec<(usize, FieldJet)>> = vec![gens.iter().cloned().enumerate().collect()];
    for _ in 1..max_depth {
        let prev = levels.last().unwrap();
        let mut next = Vec::new();
        for (gi, g) in gens.iter().enumerate() {
            for (origin, f) in prev {
                // [g_i, g_i] vanishes identically
                if levels.len() == 1 && *origin == gi {
                    continue;
                }
                next.push((gi, g.bracket(f)));
            }
        }
        levels.push(next);
    }
    levels.into_iter().map(|lvl| lvl.into_iter().map(|(_, f)| f.value()).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Xi1;
    impl MapFn for Xi1 {
        fn arity(&self) -> usize {
            3
        }
        fn coarity(&self) -> usize {
            3
        }
        fn call<T: Scalar>(&self, q: &[T]) -> Vec<T> {
            vec![T::one(), T::zero(), q[1].clone()]
        }
    }

    struct Xi2;
    impl MapFn for Xi2 {
        fn arity(&self) -> usize {
            3
        }
        fn coarity(&self) -> usize {
            3
        }
        fn call<T: Scalar>(&self, _: &[T]) -> Vec<T> {
            vec![T::zero(), T::one(), T::zero()]
        }
    }

    struct Rot;
    impl MapFn for Rot {
        fn arity(&self) -> usize {
            3
        }
        fn coarity(&self) -> usize {
            3
        }
        fn call<T: Scalar>(&self, q: &[T]) -> Vec<T> {
            vec![q[2].sin(), q[0].clone() * q[1].clone(), q[0].cos()]
        }
    }

    #[test]
    fn heisenberg_bracket() {
        let b = lie_bracket(&SmoothMap::new(Xi1), &SmoothMap::new(Xi2), &[0.3, 1.2, -0.5]).unwrap();
        assert_eq!(b, vec![0.0, 0.0, -1.0]);
    }

    #[test]
    fn self_bracket_vanishes() {
        let r = SmoothMap::new(Rot);
        let b = lie_bracket(&r, &r, &[0.3, 1.2, -0.5]).unwrap();
        assert!(b.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn jet_brackets_match_nested_duals() {
        let gens = [SmoothMap::new(Xi1), SmoothMap::new(Rot)];
        let q = [0.4, -0.7, 1.1];
        let levels = iterated_brackets(&gens, &q, 3);
        let inner = SmoothMap::new(Bracket { x: gens[1].clone(), y: gens[0].clone() });
        // depth 2 entry built as [g_1, g_0]
        let direct = lie_bracket(&gens[1], &gens[0], &q).unwrap();
        assert!(levels[1].iter().any(|v| v.iter().zip(&direct).all(|(a, b)| (a - b).abs() < 1e-13)));
        // depth 3 entry [g_0, [g_1, g_0]]
        let deep = lie_bracket(&gens[0], &inner, &q).unwrap();
        assert!(levels[2].iter().any(|v| v.iter().zip(&deep).all(|(a, b)| (a - b).abs() < 1e-12)));
        assert!(deep.iter().any(|x| x.abs() > 1e-3));
    }
}
