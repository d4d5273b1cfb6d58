//! Constraint submanifold N ⊂ TQ, reaction covectors, compatibility and
//! ideality tests, the distribution ℋ = TN ∩ F_L and bracket-generating flags.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::diffcalc::linalg::{self, matrix_rank, max_abs, nullspace, restrict, singular_range, Subspace};
use crate::diffcalc::{iterated_brackets, jacobian, MapFn, Scalar, SmoothMap, RANK_TOL};
use crate::error::{NhError, Result};
use crate::mechanics::{check_regular, field_terms, lagrangian_two_form, LagrangianSystem, State};
use crate::report::CheckReport;

/// Default tolerance for sample-based checks.
pub const CHECK_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct ConstraintSet {
    n: usize,
    k: usize,
    psi: SmoothMap,
    coeff: Option<SmoothMap>,
}

/// ψ(q, v) = C(q)·v for a coefficient map q ↦ C(q) (row-major k×n).
pub struct LinearConstraints {
    pub n: usize,
    pub k: usize,
    pub coeff: SmoothMap,
}

impl MapFn for LinearConstraints {
    fn arity(&self) -> usize {
        2 * self.n
    }
    fn coarity(&self) -> usize {
        self.k
    }
    fn call<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let (q, v) = x.split_at(self.n);
        let c = self.coeff.call(q);
        (0..self.k)
            .map(|a| (0..self.n).fold(T::zero(), |acc, i| acc + c[a * self.n + i].clone() * v[i].clone()))
            .collect()
    }
}

struct NoConstraints(usize);

impl MapFn for NoConstraints {
    fn arity(&self) -> usize {
        2 * self.0
    }
    fn coarity(&self) -> usize {
        0
    }
    fn call<T: Scalar>(&self, _: &[T]) -> Vec<T> {
        Vec::new()
    }
}

impl ConstraintSet {
    pub fn none(n: usize) -> ConstraintSet {
        ConstraintSet { n, k: 0, psi: SmoothMap::new(NoConstraints(n)), coeff: None }
    }

    pub fn nonlinear(n: usize, psi: SmoothMap) -> Result<ConstraintSet> {
        psi.check_arity(2 * n)?;
        Ok(ConstraintSet { n, k: psi.coarity(), psi, coeff: None })
    }

    /// Linear constraints given both as functions of (q, v) and by their coefficient matrix.
    pub fn linear(n: usize, psi: SmoothMap, coeff: SmoothMap) -> Result<ConstraintSet> {
        psi.check_arity(2 * n)?;
        coeff.check_arity(n)?;
        let k = psi.coarity();
        if coeff.coarity() != k * n {
            return Err(NhError::Dimension { expected: k * n, got: coeff.coarity() });
        }
        Ok(ConstraintSet { n, k, psi, coeff: Some(coeff) })
    }

    pub fn from_coefficients(n: usize, k: usize, coeff: SmoothMap) -> Result<ConstraintSet> {
        let psi = SmoothMap::new(LinearConstraints { n, k, coeff: coeff.clone() });
        ConstraintSet::linear(n, psi, coeff)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn psi(&self) -> &SmoothMap {
        &self.psi
    }

    pub fn coeff(&self) -> Option<&SmoothMap> {
        self.coeff.as_ref()
    }

    pub fn is_linear(&self) -> bool {
        self.coeff.is_some()
    }

    /// Coefficient matrix C(q) of linear constraints.
    pub fn coefficients(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        let c = self
            .coeff
            .as_ref()
            .ok_or_else(|| NhError::Unsupported("constraints are not linear in the velocities".into()))?;
        Ok(DMatrix::from_row_slice(self.k, self.n, &c.eval(q)?))
    }

    fn check_state(&self, s: &State) -> Result<()> {
        if s.q.len() != self.n || s.v.len() != self.n {
            return Err(NhError::Dimension { expected: self.n, got: s.q.len().max(s.v.len()) });
        }
        Ok(())
    }
}

pub fn residual(cs: &ConstraintSet, s: &State) -> Result<Vec<f64>> {
    cs.check_state(s)?;
    cs.psi.eval(&s.coords())
}

pub fn require_on_n(cs: &ConstraintSet, s: &State, tol: f64) -> Result<()> {
    let r = max_abs(&residual(cs, s)?);
    if !(r <= tol) {
        return Err(NhError::OffConstraint { residual: r });
    }
    Ok(())
}

/// dψ as a k × 2n matrix over (q, v).
pub fn constraint_jacobian(cs: &ConstraintSet, s: &State) -> Result<DMatrix<f64>> {
    cs.check_state(s)?;
    if cs.k == 0 {
        return Ok(DMatrix::zeros(0, 2 * cs.n));
    }
    jacobian(&cs.psi, &s.coords())
}

/// Rows ∂ψᵃ/∂v: the semibasic reaction covectors S*(dψᵃ).
pub fn reaction_basis(cs: &ConstraintSet, s: &State) -> Result<DMatrix<f64>> {
    let j = constraint_jacobian(cs, s)?;
    Ok(j.columns(cs.n, cs.n).into_owned())
}

/// ker ∂ψ/∂v(q, v) ⊂ Rⁿ.
pub fn constraint_distribution(cs: &ConstraintSet, s: &State) -> Result<Subspace> {
    let b = reaction_basis(cs, s)?;
    Ok(nullspace(&b, RANK_TOL))
}

/// T_sN = ker dψ ⊂ R^{2n}.
pub fn tangent_space(cs: &ConstraintSet, s: &State) -> Result<Subspace> {
    Ok(nullspace(&constraint_jacobian(cs, s)?, RANK_TOL))
}

/// F_L(s): vectors on which the semibasic reaction forms vanish, i.e. B·U_q = 0.
pub fn variation_space(cs: &ConstraintSet, s: &State) -> Result<Subspace> {
    let b = reaction_basis(cs, s)?;
    let mut lifted = DMatrix::zeros(cs.k, 2 * cs.n);
    lifted.columns_mut(0, cs.n).copy_from(&b);
    Ok(nullspace(&lifted, RANK_TOL))
}

/// 𝒞^{ab} = −W^{ij} ∂ψᵃ/∂vᵢ ∂ψᵇ/∂vⱼ.
pub fn compatibility_matrix(sys: &LagrangianSystem, cs: &ConstraintSet, s: &State) -> Result<DMatrix<f64>> {
    let w = field_terms(sys, s)?.w;
    check_regular(&w)?;
    let b = reaction_basis(cs, s)?;
    let winv_bt = w.lu().solve(&b.transpose()).ok_or(NhError::Regularity { condition: f64::INFINITY })?;
    Ok(-(&b * winv_bt))
}

/// Independent construction of 𝒞 through ω_L: ι_{Zᵃ}ω_L = S*(dψᵃ) and 𝒞^{ab} = dψᵇ(Zᵃ).
pub fn compatibility_matrix_symplectic(sys: &LagrangianSystem, cs: &ConstraintSet, s: &State) -> Result<DMatrix<f64>> {
    let n = cs.n;
    let omega = lagrangian_two_form(sys, s)?;
    let dpsi = constraint_jacobian(cs, s)?;
    let mut rhs = DMatrix::zeros(2 * n, cs.k);
    for a in 0..cs.k {
        for i in 0..n {
            rhs[(i, a)] = dpsi[(a, n + i)];
        }
    }
    let z = omega.transpose().lu().solve(&rhs).ok_or(NhError::Degenerate { singular_value: 0.0 })?;
    // column a of z is Zᵃ; entry (a, b) = dψᵇ · Zᵃ
    Ok((&dpsi * z).transpose())
}

pub fn check_compatibility(c: &DMatrix<f64>) -> Result<f64> {
    if c.nrows() == 0 {
        return Ok(f64::INFINITY);
    }
    let (lo, hi) = singular_range(c);
    if !(lo > hi * 1e-12 && lo > 0.0) {
        return Err(NhError::Compatibility { singular_value: lo });
    }
    Ok(lo)
}

pub fn check_admissibility(cs: &ConstraintSet, s: &State, tol: f64) -> Result<CheckReport> {
    require_on_n(cs, s, tol)?;
    let b = reaction_basis(cs, s)?;
    let rank = matrix_rank(&b, RANK_TOL);
    let mut rep = CheckReport::new("admissibility", 0.0);
    rep.record(&s.coords(), (cs.k - rank) as f64);
    rep.set_info("rank", rank);
    rep.set_info("k", cs.k);
    rep.set_info("min_singular_value", singular_range(&b).0);
    Ok(rep)
}

/// Liouville-field test Δψᵃ = v·∂ψᵃ/∂v at each sample.
pub fn check_ideal(cs: &ConstraintSet, samples: &[State], tol: f64) -> Result<CheckReport> {
    let mut rep = CheckReport::new("ideal", tol);
    for s in samples {
        let b = reaction_basis(cs, s)?;
        let v = DVector::from_column_slice(&s.v);
        let lv = &b * v;
        rep.record(&s.coords(), lv.amax());
    }
    Ok(rep)
}

/// Rank growth of iterated brackets at one point.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChowFlag {
    pub growth: Vec<usize>,
    pub complete: bool,
    pub depth_used: usize,
}

/// Bracket flag at `q`. Iteration stops early once the tangent space is spanned.
pub fn chow_flag(generators: &[SmoothMap], q: &[f64], max_depth: usize, tol: f64) -> Result<ChowFlag> {
    let n = q.len();
    for g in generators {
        g.check_arity(n)?;
        if g.coarity() != n {
            return Err(NhError::Dimension { expected: n, got: g.coarity() });
        }
    }
    let levels = iterated_brackets(generators, q, max_depth);
    let mut growth = Vec::new();
    let mut all: Vec<Vec<f64>> = Vec::new();
    for lvl in levels {
        all.extend(lvl);
        let r = linalg::subspace_rank(&all, tol);
        growth.push(r);
        if r == n {
            break;
        }
    }
    let complete = growth.last() == Some(&n);
    Ok(ChowFlag { depth_used: growth.len(), growth, complete })
}

pub fn chow_sweep(generators: &[SmoothMap], points: &[Vec<f64>], max_depth: usize, tol: f64) -> Result<Vec<ChowFlag>> {
    points.iter().map(|q| chow_flag(generators, q, max_depth, tol)).collect()
}

/// The fiber ℋ_s = T_sN ∩ F_L(s) together with the smallest singular value of ω_L restricted to it.
#[derive(Clone, Debug)]
pub struct HFiber {
    pub space: Subspace,
    pub omega_min_singular_value: f64,
}

pub fn h_distribution(sys: &LagrangianSystem, cs: &ConstraintSet, s: &State) -> Result<HFiber> {
    check_compatibility(&compatibility_matrix(sys, cs, s)?)?;
    let space = tangent_space(cs, s)?.intersect(&variation_space(cs, s)?);
    let omega = lagrangian_two_form(sys, s)?;
    let restricted = restrict(&omega, &space);
    let (lo, hi) = singular_range(&restricted);
    if space.dim() > 0 && !(lo > hi * RANK_TOL && lo > 0.0) {
        return Err(NhError::Degenerate { singular_value: lo });
    }
    Ok(HFiber { space, omega_min_singular_value: lo })
}

/// Move `v` onto N at fixed q by minimal-norm Newton corrections.
pub fn project_velocity(cs: &ConstraintSet, q: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let mut v = v.to_vec();
    if cs.k == 0 {
        return Ok(v);
    }
    for _ in 0..60 {
        let s = State::new(q.to_vec(), v.clone());
        let r = residual(cs, &s)?;
        let scale = 1.0 + max_abs(&v);
        if max_abs(&r) <= 1e-15 * scale {
            return Ok(v);
        }
        let b = reaction_basis(cs, &s)?;
        let bbt = &b * b.transpose();
        let lam = bbt
            .lu()
            .solve(&DVector::from_column_slice(&r))
            .ok_or(NhError::Numerical { step: 0, message: "singular constraint gradient".into() })?;
        let dv = b.transpose() * lam;
        for (vi, d) in v.iter_mut().zip(dv.iter()) {
            *vi -= d;
        }
    }
    let r = max_abs(&residual(cs, &State::new(q.to_vec(), v.clone()))?);
    if r <= 1e-12 * (1.0 + max_abs(&v)) {
        Ok(v)
    } else {
        Err(NhError::Numerical { step: 0, message: format!("velocity projection stalled at residual {r:e}") })
    }
}

/// A state on N with velocity drawn as a random combination of the constraint distribution.
pub fn sample_linear_state(cs: &ConstraintSet, q: &[f64], weights: &[f64]) -> Result<State> {
    let probe = State::new(q.to_vec(), vec![0.0; cs.n]);
    let d = constraint_distribution(cs, &probe)?;
    let m = d.matrix();
    let c = DVector::from_iterator(d.dim(), weights.iter().copied().cycle().take(d.dim()));
    let v = m * c;
    Ok(State::new(q.to_vec(), v.iter().copied().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcalc::smooth::Constant;

    struct Psi51;
    impl MapFn for Psi51 {
        fn arity(&self) -> usize {
            6
        }
        fn coarity(&self) -> usize {
            1
        }
        fn call<T: Scalar>(&self, x: &[T]) -> Vec<T> {
            vec![x[5].clone() - x[1].clone() * x[3].clone()]
        }
    }

    struct Doubled;
    impl MapFn for Doubled {
        fn arity(&self) -> usize {
            6
        }
        fn coarity(&self) -> usize {
            2
        }
        fn call<T: Scalar>(&self, x: &[T]) -> Vec<T> {
            let p = x[5].clone() - x[1].clone() * x[3].clone();
            vec![p.clone(), p * 2.0]
        }
    }

    struct Affine;
    impl MapFn for Affine {
        fn arity(&self) -> usize {
            6
        }
        fn coarity(&self) -> usize {
            1
        }
        fn call<T: Scalar>(&self, x: &[T]) -> Vec<T> {
            vec![x[5].clone() - 1.0]
        }
    }

    fn free() -> LagrangianSystem {
        let metric = SmoothMap::new(Constant { arity: 3, values: vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0] });
        let pot = SmoothMap::new(Constant { arity: 3, values: vec![0.0] });
        LagrangianSystem::mechanical(3, metric, pot).unwrap()
    }

    fn cs51() -> ConstraintSet {
        ConstraintSet::nonlinear(3, SmoothMap::new(Psi51)).unwrap()
    }

    #[test]
    fn residual_on_and_off_n() {
        let cs = cs51();
        assert_eq!(residual(&cs, &State::new(vec![0.0, 1.0, 0.0], vec![1.0, 1.0, 1.0])).unwrap(), vec![0.0]);
        assert_eq!(residual(&cs, &State::new(vec![0.0; 3], vec![1.0, 0.0, 0.0])).unwrap(), vec![0.0]);
    }

    #[test]
    fn reaction_row_and_distribution() {
        let cs = cs51();
        let b = reaction_basis(&cs, &State::new(vec![0.0, 2.0, 0.0], vec![0.0; 3])).unwrap();
        assert_eq!(b.row(0).iter().copied().collect::<Vec<_>>(), vec![-2.0, 0.0, 1.0]);
        let d = constraint_distribution(&cs, &State::new(vec![0.0; 3], vec![0.0; 3])).unwrap();
        let expected = Subspace::span(3, &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]], RANK_TOL);
        assert!(d.same_span(&expected, 1e-12));
        assert_eq!(
            constraint_distribution(&ConstraintSet::none(3), &State::new(vec![0.0; 3], vec![0.0; 3])).unwrap().dim(),
            3
        );
    }

    #[test]
    fn compatibility_matches_symplectic_oracle() {
        let s = State::new(vec![0.0, 2.0, 0.0], vec![1.0, 0.0, 2.0]);
        let c = compatibility_matrix(&free(), &cs51(), &s).unwrap();
        assert!((c[(0, 0)] + 5.0).abs() < 1e-12);
        let z = compatibility_matrix_symplectic(&free(), &cs51(), &s).unwrap();
        assert!((z[(0, 0)] + 5.0).abs() < 1e-10);
        let empty = compatibility_matrix(&free(), &ConstraintSet::none(3), &s).unwrap();
        assert_eq!(empty.nrows(), 0);
    }

    #[test]
    fn duplicated_constraint_is_not_admissible() {
        let s = State::new(vec![0.0, 1.0, 0.0], vec![1.0, 1.0, 1.0]);
        assert!(check_admissibility(&cs51(), &s, CHECK_TOL).unwrap().pass);
        let dup = ConstraintSet::nonlinear(3, SmoothMap::new(Doubled)).unwrap();
        let rep = check_admissibility(&dup, &s, CHECK_TOL).unwrap();
        assert!(!rep.pass);
        assert_eq!(rep.info["rank"], 1);
    }

    #[test]
    fn off_n_state_is_rejected() {
        let s = State::new(vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]);
        assert!(matches!(check_admissibility(&cs51(), &s, CHECK_TOL), Err(NhError::OffConstraint { .. })));
    }

    #[test]
    fn affine_constraint_is_not_ideal() {
        let cs = ConstraintSet::nonlinear(3, SmoothMap::new(Affine)).unwrap();
        let s = State::new(vec![0.0; 3], vec![0.3, 0.2, 1.0]);
        let rep = check_ideal(&cs, &[s.clone()], CHECK_TOL).unwrap();
        assert!(!rep.pass);
        assert!((rep.max_residual - 1.0).abs() < 1e-15);
        assert!(check_ideal(&cs51(), &[State::new(vec![0.0, 1.0, 0.0], vec![1.0, 1.0, 1.0])], CHECK_TOL).unwrap().pass);
    }

    #[test]
    fn h_fiber_dimension() {
        let s = State::new(vec![0.0, 0.5, 0.0], vec![1.0, 0.3, 0.5]);
        let h = h_distribution(&free(), &cs51(), &s).unwrap();
        assert_eq!(h.space.dim(), 4);
        assert!(h.omega_min_singular_value > 1e-3);
        let full = h_distribution(&free(), &ConstraintSet::none(3), &s).unwrap();
        assert_eq!(full.space.dim(), 6);
    }

    #[test]
    fn h_fiber_via_symplectic_complements() {
        let s = State::new(vec![0.2, -0.7, 0.1], vec![0.4, 1.1, -0.28]);
        let h = h_distribution(&free(), &cs51(), &s).unwrap().space;
        let omega = lagrangian_two_form(&free(), &s).unwrap();
        let tn_perp = linalg::symplectic_orthogonal(&omega, &tangent_space(&cs51(), &s).unwrap()).unwrap();
        let fl_perp = linalg::symplectic_orthogonal(&omega, &variation_space(&cs51(), &s).unwrap()).unwrap();
        let alt = linalg::symplectic_orthogonal(&omega, &tn_perp.sum(&fl_perp)).unwrap();
        assert!(h.same_span(&alt, 1e-10));
    }

    #[test]
    fn single_generator_on_line_is_complete() {
        let g = SmoothMap::new(Constant { arity: 1, values: vec![1.0] });
        let f = chow_flag(&[g], &[0.3], 1, RANK_TOL).unwrap();
        assert_eq!(f.growth, vec![1]);
        assert!(f.complete);
    }

    #[test]
    fn projection_lands_on_n() {
        let v = project_velocity(&cs51(), &[0.0, 1.5, 0.0], &[1.0, 0.0, 0.0]).unwrap();
        assert!(residual(&cs51(), &State::new(vec![0.0, 1.5, 0.0], v)).unwrap()[0].abs() < 1e-14);
    }
}
