//! Hamilton–Jacobi verification for candidate vector fields X: Q → TQ and
//! one-forms σ: Q → T*Q, evaluated pointwise on configuration grids.
//!
//! Ideal-membership conditions are tested pointwise: a two-form lies in the
//! ideal generated by the reaction covectors at q iff it vanishes on pairs
//! from the constraint distribution there.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::constraints::{self, constraint_distribution, reaction_basis, ConstraintSet};
use crate::diffcalc::linalg::max_abs;
use crate::diffcalc::smooth::{gradient_at, jacobian_at, jvp_at};
use crate::diffcalc::{gradient, jacobian, MapFn, Scalar, SmoothMap, Subspace};
use crate::dynamics::{constrained_field, momentum_constraints};
use crate::error::{NhError, Result};
use crate::grid::Grid;
use crate::mechanics::{hamiltonian_map, EnergyMap, LagrangianSystem, State};
use crate::report::CheckReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateKind {
    VectorField,
    OneForm,
}

#[derive(Clone, Debug)]
pub struct HJCandidate {
    pub kind: CandidateKind,
    pub map: SmoothMap,
    pub label: String,
}

impl HJCandidate {
    pub fn vector_field(label: impl Into<String>, map: SmoothMap) -> HJCandidate {
        HJCandidate { kind: CandidateKind::VectorField, map, label: label.into() }
    }

    pub fn one_form(label: impl Into<String>, map: SmoothMap) -> HJCandidate {
        HJCandidate { kind: CandidateKind::OneForm, map, label: label.into() }
    }

    fn require(&self, kind: CandidateKind, n: usize) -> Result<()> {
        if self.kind != kind {
            return Err(NhError::Unsupported(format!("candidate '{}' has the wrong kind for this check", self.label)));
        }
        self.map.check_arity(n)?;
        if self.map.coarity() != n {
            return Err(NhError::Dimension { expected: n, got: self.map.coarity() });
        }
        Ok(())
    }

    pub fn state_at(&self, q: &[f64]) -> Result<State> {
        Ok(State::new(q.to_vec(), self.map.eval(q)?))
    }
}

/// Which side the pulled-back force sits on: `Minus` tests d(E∘X) = −X*α, `Plus` tests d(E∘X) = X*α.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Minus,
    Plus,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Minus => 1.0,
            Sign::Plus => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Sign::Minus => "minus",
            Sign::Plus => "plus",
        }
    }
}

/// A semibasic one-form depending on the state, given as covector components on Q.
pub trait ForceField {
    fn covector(&self, q: &[f64], v: &[f64]) -> Result<Vec<f64>>;
}

pub struct ZeroForce;

impl ForceField for ZeroForce {
    fn covector(&self, q: &[f64], _: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![0.0; q.len()])
    }
}

/// Force given by a closure on (q, v).
pub struct FnForce<F>(pub F);

impl<F: Fn(&[f64], &[f64]) -> Vec<f64>> ForceField for FnForce<F> {
    fn covector(&self, q: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        Ok((self.0)(q, v))
    }
}

/// q ↦ f(q, X(q)) for a scalar map f on TQ or T*Q.
pub struct AlongSection {
    pub n: usize,
    pub f: SmoothMap,
    pub section: SmoothMap,
}

impl MapFn for AlongSection {
    fn arity(&self) -> usize {
        self.n
    }
    fn coarity(&self) -> usize {
        self.f.coarity()
    }
    fn call<T: Scalar>(&self, q: &[T]) -> Vec<T> {
        let mut x = q.to_vec();
        x.extend(self.section.call(q));
        self.f.call(&x)
    }
}

/// σ = 𝔽L∘X: q ↦ ∂L/∂v(q, X(q)).
pub struct LegendreAlong {
    pub n: usize,
    pub lagrangian: SmoothMap,
    pub field: SmoothMap,
}

impl MapFn for LegendreAlong {
    fn arity(&self) -> usize {
        self.n
    }
    fn coarity(&self) -> usize {
        self.n
    }
    fn call<T: Scalar>(&self, q: &[T]) -> Vec<T> {
        let mut x = q.to_vec();
        x.extend(self.field.call(q));
        gradient_at(&self.lagrangian, &x).split_off(self.n)
    }
}

pub fn legendre_candidate(sys: &LagrangianSystem, cand: &HJCandidate) -> Result<HJCandidate> {
    cand.require(CandidateKind::VectorField, sys.n())?;
    let map =
        SmoothMap::new(LegendreAlong { n: sys.n(), lagrangian: sys.lagrangian().clone(), field: cand.map.clone() });
    Ok(HJCandidate::one_form(format!("legendre({})", cand.label), map))
}

fn energy_along(sys: &LagrangianSystem, field: &SmoothMap) -> SmoothMap {
    let e = SmoothMap::new(EnergyMap { n: sys.n(), lagrangian: sys.lagrangian().clone() });
    SmoothMap::new(AlongSection { n: sys.n(), f: e, section: field.clone() })
}

fn report(name: &str, tol: f64, grid: &Grid) -> CheckReport {
    CheckReport::new(name, tol).with_grid(grid.spec.clone())
}

/// max |dσ(u, w)| over basis pairs of `d`, with dσ(u, w) = uᵀ(Jᵀ − J)w.
fn exterior_on(jac: &DMatrix<f64>, d: &Subspace) -> f64 {
    let skew = jac.transpose() - jac;
    let mut worst = 0.0f64;
    let basis = d.basis();
    for (i, u) in basis.iter().enumerate() {
        let su = skew.transpose() * DVector::from_column_slice(u);
        for w in &basis[i + 1..] {
            worst = worst.max(su.dot(&DVector::from_column_slice(w)).abs());
        }
    }
    worst
}

fn max_on(covector: &[f64], d: &Subspace) -> f64 {
    d.basis().iter().fold(0.0f64, |m, u| m.max(covector.iter().zip(u).map(|(a, b)| a * b).sum::<f64>().abs()))
}

/// max over the grid of |ψ(q, X(q))|.
pub fn check_in_n(cand: &HJCandidate, cs: &ConstraintSet, grid: &Grid, tol: f64) -> Result<CheckReport> {
    cand.require(CandidateKind::VectorField, cs.n())?;
    let mut rep = report("in_N", tol, grid);
    for q in &grid.points {
        let s = cand.state_at(q)?;
        rep.record(q, max_abs(&constraints::residual(cs, &s)?));
    }
    Ok(rep)
}

fn pullback_check(
    name: &str,
    cand: &HJCandidate,
    sys: &LagrangianSystem,
    cs: &ConstraintSet,
    grid: &Grid,
    tol: f64,
) -> Result<CheckReport> {
    cand.require(CandidateKind::VectorField, sys.n())?;
    let sigma = legendre_candidate(sys, cand)?.map;
    let mut rep = report(name, tol, grid);
    for q in &grid.points {
        let s = cand.state_at(q)?;
        let d = constraint_distribution(cs, &s)?;
        let jac = jacobian(&sigma, q)?;
        rep.record(q, exterior_on(&jac, &d));
    }
    Ok(rep)
}

/// d(𝔽L∘X) restricted to the constraint distribution (linear constraints).
pub fn check_closedness_linear(
    cand: &HJCandidate,
    sys: &LagrangianSystem,
    cs: &ConstraintSet,
    grid: &Grid,
    tol: f64,
) -> Result<CheckReport> {
    if !cs.is_linear() && cs.k() > 0 {
        return Err(NhError::Unsupported("closedness test in this form needs linear constraints".into()));
    }
    pullback_check("closedness", cand, sys, cs, grid, tol)
}

/// X*ω_L restricted to ker ∂ψ/∂v(q, X(q)).
pub fn check_nonlinear_pullback(
    cand: &HJCandidate,
    sys: &LagrangianSystem,
    cs: &ConstraintSet,
    grid: &Grid,
    tol: f64,
) -> Result<CheckReport> {
    pullback_check("nonlinear_pullback", cand, sys, cs, grid, tol)
}

/// Weak: d(E_L∘X) vanishes on ker ∂ψ/∂v(q, X(q)). Strong: d(E_L∘X) = 0.
pub fn check_hj_condition(
    cand: &HJCandidate,
    sys: &LagrangianSystem,
    cs: &ConstraintSet,
    grid: &Grid,
    strong: bool,
    tol: f64,
) -> Result<CheckReport> {
    cand.require(CandidateKind::VectorField, sys.n())?;
    let g = energy_along(sys, &cand.map);
    let mut rep = report(if strong { "hj_strong" } else { "hj_weak" }, tol, grid);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for q in &grid.points {
        let e = g.eval(q)?[0];
        lo = lo.min(e);
        hi = hi.max(e);
        let dg = gradient(&g, q)?;
        let r = if strong { max_abs(&dg) } else { max_on(&dg, &constraint_distribution(cs, &cand.state_at(q)?)?) };
        rep.record(q, r);
    }
    if !grid.is_empty() {
        rep.set_info("energy_min", lo);
        rep.set_info("energy_max", hi);
    }
    Ok(rep)
}

/// TX·X = Γ_{L,N}∘X: at each q, |DX(q)·X(q) − a(q, X(q))|.
pub fn check_related(
    cand: &HJCandidate,
    sys: &LagrangianSystem,
    cs: &ConstraintSet,
    grid: &Grid,
    tol: f64,
) -> Result<CheckReport> {
    cand.require(CandidateKind::VectorField, sys.n())?;
    let mut rep = report("related", tol, grid);
    for q in &grid.points {
        let s = cand.state_at(q)?;
        let a = constrained_field(sys, cs, &s)?.acceleration;
        let (_, dxv) = jvp_at(&cand.map, q, &s.v);
        let r = dxv.iter().zip(&a).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        rep.record(q, r);
    }
    Ok(rep)
}

/// d(E∘X) ± X*α for a vector field, or d(H∘σ) ± σ*β for a one-form (mechanical systems).
pub fn check_forced_hj(
    cand: &HJCandidate,
    sys: &LagrangianSystem,
    force: &dyn ForceField,
    grid: &Grid,
    sign: Sign,
    tol: f64,
) -> Result<CheckReport> {
    let n = sys.n();
    let g = match cand.kind {
        CandidateKind::VectorField => {
            cand.require(CandidateKind::VectorField, n)?;
            energy_along(sys, &cand.map)
        }
        CandidateKind::OneForm => {
            cand.require(CandidateKind::OneForm, n)?;
            SmoothMap::new(AlongSection { n, f: hamiltonian_map(sys)?, section: cand.map.clone() })
        }
    };
    let mut rep = report(&format!("forced_{}", sign.name()), tol, grid);
    for q in &grid.points {
        let x = cand.map.eval(q)?;
        let alpha = force.covector(q, &x)?;
        if alpha.len() != n {
            return Err(NhError::Dimension { expected: n, got: alpha.len() });
        }
        let dg = gradient(&g, q)?;
        let r = dg.iter().zip(&alpha).fold(0.0f64, |m, (d, a)| m.max((d + sign.factor() * a).abs()));
        rep.record(q, r);
    }
    rep.set_info("sign", sign.name());
    Ok(rep)
}

/// Hamiltonian side: σ(Q) ⊆ M first, then d(H∘σ) (weak or strong) and dσ on the distribution.
pub fn check_hamiltonian_hj(
    cand: &HJCandidate,
    sys: &LagrangianSystem,
    cs: &ConstraintSet,
    grid: &Grid,
    strong: bool,
    tol: f64,
) -> Result<CheckReport> {
    let n = sys.n();
    cand.require(CandidateKind::OneForm, n)?;
    let h = hamiltonian_map(sys)?;
    let psi_h = momentum_constraints(sys, cs)?;
    let in_m = SmoothMap::new(AlongSection { n, f: psi_h, section: cand.map.clone() });
    let g = SmoothMap::new(AlongSection { n, f: h, section: cand.map.clone() });
    let name = if strong { "hamiltonian_strong" } else { "hamiltonian_weak" };

    let mut gate = report("in_M", tol, grid);
    for q in &grid.points {
        gate.record(q, max_abs(&in_m.eval(q)?));
    }
    if !gate.pass {
        let mut rep = report(name, tol, grid);
        rep.absorb(gate.max_residual);
        rep.points_tested = gate.points_tested;
        rep.set_info("gate", "in_M");
        rep.set_info("in_m_residual", gate.max_residual);
        return Ok(rep);
    }

    let mut rep = report(name, tol, grid);
    let (mut hj, mut closed) = (0.0f64, 0.0f64);
    for q in &grid.points {
        let zero = State::new(q.to_vec(), vec![0.0; n]);
        let d = constraint_distribution(cs, &zero)?;
        let dg = gradient(&g, q)?;
        let r_hj = if strong { max_abs(&dg) } else { max_on(&dg, &d) };
        let r_closed = exterior_on(&jacobian(&cand.map, q)?, &d);
        hj = hj.max(r_hj);
        closed = closed.max(r_closed);
        rep.record(q, r_hj.max(r_closed));
    }
    rep.set_info("in_m_residual", gate.max_residual);
    rep.set_info("hj_residual", hj);
    rep.set_info("closedness_residual", closed);
    Ok(rep)
}

/// Diagnostic for TX(TQ) ⊆ F_L: reaction covectors at (q, X(q)) must vanish identically.
pub fn check_no_reaction(cand: &HJCandidate, cs: &ConstraintSet, grid: &Grid, tol: f64) -> Result<CheckReport> {
    cand.require(CandidateKind::VectorField, cs.n())?;
    let mut rep = report("no_reaction", tol, grid);
    for q in &grid.points {
        let s = cand.state_at(q)?;
        let b = reaction_basis(cs, &s)?;
        // TX(δq) = (δq, DX δq) lies in F_L iff B δq = 0 for every δq
        rep.record(q, if b.nrows() == 0 { 0.0 } else { b.amax() });
    }
    Ok(rep)
}

/// Integral curve of X on Q by RK4, for comparison with the lifted dynamics.
pub fn base_flow(cand: &HJCandidate, q0: &[f64], dt: f64, steps: usize) -> Result<Vec<Vec<f64>>> {
    cand.map.check_arity(q0.len())?;
    let f = |q: &[f64]| cand.map.call(q);
    let mut q = q0.to_vec();
    let mut out = vec![q.clone()];
    for _ in 0..steps {
        let k1 = f(&q);
        let k2 = f(&q.iter().zip(&k1).map(|(a, b)| a + 0.5 * dt * b).collect::<Vec<_>>());
        let k3 = f(&q.iter().zip(&k2).map(|(a, b)| a + 0.5 * dt * b).collect::<Vec<_>>());
        let k4 = f(&q.iter().zip(&k3).map(|(a, b)| a + dt * b).collect::<Vec<_>>());
        for i in 0..q.len() {
            q[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out.push(q.clone());
    }
    Ok(out)
}

/// Jacobian DX(q) as nested rows, for callers composing their own tests.
pub fn field_jacobian(cand: &HJCandidate, q: &[f64]) -> Result<Vec<Vec<f64>>> {
    cand.map.check_arity(q.len())?;
    Ok(jacobian_at(&cand.map, q))
}
