//! Constrained Euler–Lagrange field via Lagrange multipliers, its projector
//! oracle, RK4 integration with constraint stabilisation, and residual checks
//! of the equations of motion.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::constraints::{
    self, constraint_jacobian, h_distribution, reaction_basis, require_on_n, tangent_space, variation_space,
    ConstraintSet, CHECK_TOL,
};
use crate::diffcalc::linalg::{self, max_abs, Subspace};
use crate::diffcalc::{gradient, jacobian, MapFn, Scalar, SmoothMap, RANK_TOL};
use crate::error::{NhError, Result};
use crate::mechanics::{
    self, check_regular, energy, energy_differential, field_terms, hamiltonian_map, lagrangian_two_form, metric_solve,
    LagrangianSystem, PhasePoint, State,
};
use crate::reduction::{lifted_generator, GroupActionSpec};
use crate::report::{fmt17, CheckReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedField {
    pub acceleration: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub residual_norm: f64,
}

impl ConstrainedField {
    /// The vector field value (v, a) on TQ.
    pub fn vector(&self, s: &State) -> Vec<f64> {
        let mut g = s.v.clone();
        g.extend_from_slice(&self.acceleration);
        g
    }
}

fn singular(step: usize) -> NhError {
    NhError::Numerical { step, message: "singular linear system".into() }
}

/// B W⁻¹ Bᵀ, the matrix of the multiplier system (equal to −𝒞).
pub fn multiplier_matrix(sys: &LagrangianSystem, cs: &ConstraintSet, s: &State) -> Result<DMatrix<f64>> {
    Ok(-constraints::compatibility_matrix(sys, cs, s)?)
}

pub fn constrained_field(sys: &LagrangianSystem, cs: &ConstraintSet, s: &State) -> Result<ConstrainedField> {
    require_on_n(cs, s, CHECK_TOL)?;
    field_at(sys, cs, s)
}

/// The multiplier solution without the on-N precondition (used inside integrators).
pub fn field_at(sys: &LagrangianSystem, cs: &ConstraintSet, s: &State) -> Result<ConstrainedField> {
    let t = field_terms(sys, s)?;
    check_regular(&t.w)?;
    let lu = t.w.clone().lu();
    let rhs = &t.dl_dq - &t.mixed_v;
    let a0 = lu.solve(&rhs).ok_or(NhError::Regularity { condition: f64::INFINITY })?;
    if cs.k() == 0 {
        return Ok(ConstrainedField {
            residual_norm: (&t.w * &a0 - &rhs).amax(),
            acceleration: a0.iter().copied().collect(),
            multipliers: Vec::new(),
        });
    }
    let n = sys.n();
    let dpsi = constraint_jacobian(cs, s)?;
    let pq = dpsi.columns(0, n).into_owned();
    let b = dpsi.columns(n, n).into_owned();
    let winv_bt = lu.solve(&b.transpose()).ok_or(NhError::Regularity { condition: f64::INFINITY })?;
    let mm = &b * &winv_bt;
    constraints::check_compatibility(&mm)?;
    let v = DVector::from_column_slice(&s.v);
    let target = -(&pq * &v + &b * &a0);
    let lam = mm.lu().solve(&target).ok_or(NhError::Compatibility { singular_value: 0.0 })?;
    let a = &a0 + &winv_bt * &lam;
    let el = &t.w * &a - &rhs - b.transpose() * &lam;
    Ok(ConstrainedField {
        acceleration: a.iter().copied().collect(),
        multipliers: lam.iter().copied().collect(),
        residual_norm: el.amax(),
    })
}

/// Γ_{L,N} obtained by projecting the free field onto TN along F_L^⊥.
pub fn projector_field(sys: &LagrangianSystem, cs: &ConstraintSet, s: &State) -> Result<ConstrainedField> {
    require_on_n(cs, s, CHECK_TOL)?;
    let n = sys.n();
    let free = DVector::from_vec(mechanics::unconstrained_field(sys, s)?);
    let omega = lagrangian_two_form(sys, s)?;
    let tn = tangent_space(cs, s)?;
    let fl_perp = linalg::symplectic_orthogonal(&omega, &variation_space(cs, s)?)?;
    if tn.dim() + fl_perp.dim() != 2 * n {
        return Err(NhError::Compatibility { singular_value: 0.0 });
    }
    let mut basis = DMatrix::zeros(2 * n, 2 * n);
    basis.columns_mut(0, tn.dim()).copy_from(&tn.matrix());
    basis.columns_mut(tn.dim(), fl_perp.dim()).copy_from(&fl_perp.matrix());
    let (lo, hi) = linalg::singular_range(&basis);
    if !(lo > hi * RANK_TOL) {
        return Err(NhError::Compatibility { singular_value: lo });
    }
    let c = basis.lu().solve(&free).ok_or(NhError::Compatibility { singular_value: 0.0 })?;
    let gamma = tn.matrix() * c.rows(0, tn.dim());
    let acceleration: Vec<f64> = gamma.rows(n, n).iter().copied().collect();

    let t = field_terms(sys, s)?;
    let r = &t.w * DVector::from_column_slice(&acceleration) + &t.mixed_v - &t.dl_dq;
    let (multipliers, residual_norm) = if cs.k() == 0 {
        (Vec::new(), r.amax())
    } else {
        let b = reaction_basis(cs, s)?;
        let lam = (&b * b.transpose()).lu().solve(&(&b * &r)).ok_or(singular(0))?;
        let res = (b.transpose() * &lam - &r).amax();
        (lam.iter().copied().collect(), res)
    };
    Ok(ConstrainedField { acceleration, multipliers, residual_norm })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub multipliers: Vec<Vec<f64>>,
    pub energy: Vec<f64>,
    pub psi_max: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn energy_drift(&self) -> f64 {
        let e0 = self.energy.first().copied().unwrap_or(0.0);
        self.energy.iter().fold(0.0, |m, e| m.max((e - e0).abs()))
    }

    pub fn max_psi(&self) -> f64 {
        self.psi_max.iter().fold(0.0, |m, &x| m.max(x))
    }

    /// CSV with header `t,q1..qn,v1..vn,lam1..lamk,energy,psi_max`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.states.first().map_or(0, |s| s.dim());
        let k = self.multipliers.first().map_or(0, |m| m.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("q{i}")));
        header.extend((1..=n).map(|i| format!("v{i}")));
        header.extend((1..=k).map(|i| format!("lam{i}")));
        header.push("energy".into());
        header.push("psi_max".into());
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            let s = &self.states[i];
            let mut row = vec![fmt17(self.times[i])];
            row.extend(s.q.iter().chain(&s.v).chain(&self.multipliers[i]).map(|&x| fmt17(x)));
            row.push(fmt17(self.energy[i]));
            row.push(fmt17(self.psi_max[i]));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    fn push(&mut self, sys: &LagrangianSystem, cs: &ConstraintSet, t: f64, s: State, step: usize) -> Result<()> {
        let f = field_at(sys, cs, &s).map_err(|e| at_step(e, step))?;
        self.energy.push(energy(sys, &s)?);
        self.psi_max.push(max_abs(&constraints::residual(cs, &s)?));
        self.multipliers.push(f.multipliers);
        self.times.push(t);
        self.states.push(s);
        Ok(())
    }
}

fn at_step(e: NhError, step: usize) -> NhError {
    match e {
        NhError::Numerical { message, .. } => NhError::Numerical { step, message },
        other => NhError::Numerical { step, message: other.to_string() },
    }
}

/// Minimal correction in the W-metric moving v back onto N at fixed q.
pub fn stabilize_velocity(sys: &LagrangianSystem, cs: &ConstraintSet, s: &State) -> Result<State> {
    let mut s = s.clone();
    if cs.k() == 0 {
        return Ok(s);
    }
    for _ in 0..5 {
        let r = DVector::from_vec(constraints::residual(cs, &s)?);
        if r.amax() <= 1e-15 * (1.0 + max_abs(&s.v)) {
            break;
        }
        let w = field_terms(sys, &s)?.w;
        let b = reaction_basis(cs, &s)?;
        let winv_bt = w.lu().solve(&b.transpose()).ok_or(singular(0))?;
        let mu = (&b * &winv_bt).lu().solve(&r).ok_or(singular(0))?;
        let dv = winv_bt * mu;
        for (vi, d) in s.v.iter_mut().zip(dv.iter()) {
            *vi -= d;
        }
    }
    Ok(s)
}

/// Fixed-step RK4 on (q, v) with optional post-step velocity projection.
pub fn integrate(
    sys: &LagrangianSystem,
    cs: &ConstraintSet,
    s0: &State,
    dt: f64,
    steps: usize,
    stabilize: bool,
) -> Result<Trajectory> {
    sys.check_state(s0)?;
    require_on_n(cs, s0, CHECK_TOL)?;
    if !(dt > 0.0) {
        return Err(NhError::Config("time step must be positive".into()));
    }
    let n = sys.n();
    let deriv = |z: &[f64], step: usize| -> Result<Vec<f64>> {
        let s = State::from_coords(z);
        let f = field_at(sys, cs, &s).map_err(|e| at_step(e, step))?;
        Ok(f.vector(&s))
    };
    let mut traj = Trajectory::default();
    traj.push(sys, cs, 0.0, s0.clone(), 0)?;
    let mut z = s0.coords();
    for step in 1..=steps {
        let k1 = deriv(&z, step)?;
        let z2: Vec<f64> = (0..2 * n).map(|i| z[i] + 0.5 * dt * k1[i]).collect();
        let k2 = deriv(&z2, step)?;
        let z3: Vec<f64> = (0..2 * n).map(|i| z[i] + 0.5 * dt * k2[i]).collect();
        let k3 = deriv(&z3, step)?;
        let z4: Vec<f64> = (0..2 * n).map(|i| z[i] + dt * k3[i]).collect();
        let k4 = deriv(&z4, step)?;
        for i in 0..2 * n {
            z[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if z.iter().any(|x| !x.is_finite()) {
            return Err(NhError::Numerical { step, message: "state became non-finite".into() });
        }
        let mut s = State::from_coords(&z);
        if stabilize {
            s = stabilize_velocity(sys, cs, &s).map_err(|e| at_step(e, step))?;
            z = s.coords();
        }
        traj.push(sys, cs, step as f64 * dt, s, step)?;
    }
    Ok(traj)
}

/// Residual of the equations of motion for an arbitrary candidate field at `s`:
/// (ι_Γω_L − dE_L) paired with a basis of F_L, tangency dψ(Γ), and the SODE property.
pub fn verify_field(
    sys: &LagrangianSystem,
    cs: &ConstraintSet,
    s: &State,
    field: &ConstrainedField,
    tol: f64,
) -> Result<CheckReport> {
    let gamma = DVector::from_vec(field.vector(s));
    let omega = lagrangian_two_form(sys, s)?;
    let de = DVector::from_vec(energy_differential(sys, s)?);
    let r = omega.transpose() * &gamma - de;
    let fl = variation_space(cs, s)?;
    let pairing = fl.basis().iter().fold(0.0f64, |m, u| m.max(r.dot(&DVector::from_column_slice(u)).abs()));
    let tangency = (constraint_jacobian(cs, s)? * &gamma).amax();
    let sode = (0..s.dim()).fold(0.0f64, |m, i| m.max((gamma[i] - s.v[i]).abs()));
    let mut rep = CheckReport::new("motion_equation", tol);
    rep.record(&s.coords(), pairing.max(tangency).max(sode));
    rep.set_info("force_pairing", pairing);
    rep.set_info("tangency", tangency);
    rep.set_info("sode", sode);
    Ok(rep)
}

pub fn verify_motion_equation(sys: &LagrangianSystem, cs: &ConstraintSet, s: &State, tol: f64) -> Result<CheckReport> {
    let f = constrained_field(sys, cs, s)?;
    verify_field(sys, cs, s, &f, tol)
}

/// Ψᵃ(q, p) = C(q) M(q)⁻¹ p: the constraints expressed on T*Q.
pub struct MomentumConstraints {
    pub n: usize,
    pub k: usize,
    pub coeff: SmoothMap,
    pub metric: SmoothMap,
}

impl MapFn for MomentumConstraints {
    fn arity(&self) -> usize {
        2 * self.n
    }
    fn coarity(&self) -> usize {
        self.k
    }
    fn call<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let (q, p) = x.split_at(self.n);
        let v = metric_solve(&self.metric, self.n, q, p);
        let c = self.coeff.call(q);
        (0..self.k)
            .map(|a| (0..self.n).fold(T::zero(), |acc, i| acc + c[a * self.n + i].clone() * v[i].clone()))
            .collect()
    }
}

pub fn momentum_constraints(sys: &LagrangianSystem, cs: &ConstraintSet) -> Result<SmoothMap> {
    let mech = sys.require_mechanical()?;
    let coeff = match cs.coeff() {
        Some(c) => c.clone(),
        None if cs.k() == 0 => SmoothMap::new(crate::diffcalc::smooth::Constant { arity: sys.n(), values: vec![] }),
        None => return Err(NhError::Unsupported("Hamiltonian side needs linear constraints".into())),
    };
    Ok(SmoothMap::new(MomentumConstraints { n: sys.n(), k: cs.k(), coeff, metric: mech.metric.clone() }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianField {
    pub qdot: Vec<f64>,
    pub pdot: Vec<f64>,
    pub multipliers: Vec<f64>,
}

/// q̇ = ∂H/∂p, ṗ = −∂H/∂q + βₐ Cᵃ(q), with β keeping Ψ = 0 along the flow.
pub fn hamiltonian_field(sys: &LagrangianSystem, cs: &ConstraintSet, ph: &PhasePoint) -> Result<HamiltonianField> {
    let n = sys.n();
    let h = hamiltonian_map(sys)?;
    let psi_h = momentum_constraints(sys, cs)?;
    let z = ph.coords();
    psi_h.check_arity(z.len())?;
    let m = sys.metric(&ph.q)?;
    check_regular(&m)?;
    let on_m = max_abs(&psi_h.call(&z));
    if !(on_m <= CHECK_TOL) {
        return Err(NhError::OffConstraint { residual: on_m });
    }
    let grad = gradient(&h, &z)?;
    let dhdq = DVector::from_column_slice(&grad[..n]);
    let qdot = DVector::from_column_slice(&grad[n..]);
    if cs.k() == 0 {
        return Ok(HamiltonianField {
            qdot: qdot.iter().copied().collect(),
            pdot: (-dhdq).iter().copied().collect(),
            multipliers: Vec::new(),
        });
    }
    let jp = jacobian(&psi_h, &z)?;
    let psi_q = jp.columns(0, n).into_owned();
    let psi_p = jp.columns(n, n).into_owned();
    let c = cs.coefficients(&ph.q)?;
    let g = &psi_p * c.transpose();
    let rhs = -(&psi_q * &qdot) + &psi_p * &dhdq;
    let beta = g.lu().solve(&rhs).ok_or(NhError::Compatibility { singular_value: 0.0 })?;
    let pdot = -dhdq + c.transpose() * &beta;
    Ok(HamiltonianField {
        qdot: qdot.iter().copied().collect(),
        pdot: pdot.iter().copied().collect(),
        multipliers: beta.iter().copied().collect(),
    })
}

/// d/dt ∂L/∂v along a Lagrangian field: (∂²L/∂v∂q)·v + W·a.
pub fn legendre_transport(sys: &LagrangianSystem, s: &State, acceleration: &[f64]) -> Result<Vec<f64>> {
    let t = field_terms(sys, s)?;
    let pdot = &t.mixed_v + &t.w * DVector::from_column_slice(acceleration);
    Ok(pdot.iter().copied().collect())
}

/// Fibers 𝒱 (tangent-lifted generators), ℋ and 𝒰 = ℋ ∩ (𝒱 ∩ F_L)^⊥ at one state.
#[derive(Clone, Debug)]
pub struct SymmetryFibers {
    pub vertical: Subspace,
    pub h: Subspace,
    pub u: Subspace,
}

pub fn symmetry_fibers(
    sys: &LagrangianSystem,
    cs: &ConstraintSet,
    action: &GroupActionSpec,
    s: &State,
) -> Result<SymmetryFibers> {
    let n = sys.n();
    let lifts: Vec<Vec<f64>> = action.generators.iter().map(|g| lifted_generator(g, s)).collect::<Result<_>>()?;
    let vertical = Subspace::span(2 * n, &lifts, RANK_TOL);
    let h = h_distribution(sys, cs, s)?.space;
    let omega = lagrangian_two_form(sys, s)?;
    let vf = vertical.intersect(&variation_space(cs, s)?);
    let u = h.intersect(&linalg::symplectic_orthogonal(&omega, &vf)?);
    Ok(SymmetryFibers { vertical, h, u })
}

/// Pre-quotient form of the reduced equation: ω_L(Γ, u) = dE_L(u) for all u ∈ 𝒰.
pub fn bates_sniatycki_check(
    sys: &LagrangianSystem,
    cs: &ConstraintSet,
    action: &GroupActionSpec,
    s: &State,
    tol: f64,
) -> Result<CheckReport> {
    let fibers = symmetry_fibers(sys, cs, action, s)?;
    let f = constrained_field(sys, cs, s)?;
    let gamma = f.vector(s);
    let omega = lagrangian_two_form(sys, s)?;
    let de = energy_differential(sys, s)?;
    let worst = fibers.u.basis().iter().fold(0.0f64, |m, u| {
        let lhs = linalg::pairing(&omega, &gamma, u);
        let rhs: f64 = de.iter().zip(u).map(|(a, b)| a * b).sum();
        m.max((lhs - rhs).abs())
    });
    let mut rep = CheckReport::new("bates_sniatycki", tol);
    rep.record(&s.coords(), worst);
    rep.set_info("dim_u", fibers.u.dim());
    rep.set_info("dim_h", fibers.h.dim());
    rep.set_info("dim_v", fibers.vertical.dim());
    Ok(rep)
}
