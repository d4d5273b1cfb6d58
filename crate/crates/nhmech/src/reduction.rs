//! Symmetry: invariance, the pure-kinematic / horizontal / general trichotomy,
//! nonholonomic momentum, Chaplygin reduction with its gyroscopic one-form,
//! reduced Hamilton–Jacobi checks and reconstruction of unreduced candidates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::constraints::{
    self, chow_flag, constraint_jacobian, h_distribution, project_velocity, reaction_basis, require_on_n,
    tangent_space, ChowFlag, ConstraintSet, CHECK_TOL,
};
use crate::diffcalc::linalg::{max_abs, nullspace, solve_real};
use crate::diffcalc::smooth::{gradient_at, jvp_at, Compose};
use crate::diffcalc::{gradient, jacobian, lie_bracket, Dual, MapFn, Scalar, SmoothMap, Subspace, D2, RANK_TOL};
use crate::dynamics::constrained_field;
use crate::error::{NhError, Result};
use crate::grid::{self, Grid};
use crate::hamjac::{self, AlongSection, ForceField, HJCandidate, LegendreAlong};
use crate::mechanics::{field_terms, EnergyMap, LagrangianSystem, State};
use crate::report::CheckReport;

/// Quotient chart for Q → Q̄ = Q/G with a global section.
#[derive(Clone, Debug)]
pub struct QuotientData {
    pub dim: usize,
    /// ρ_Q: Q → Q̄
    pub project: SmoothMap,
    /// Dρ_Q as a row-major dim×n matrix field on Q
    pub project_jacobian: SmoothMap,
    /// Q̄ → Q with project∘section = id
    pub section: SmoothMap,
    /// (q, v̄) ↦ v ∈ T_qQ horizontal with Dρ_Q v = v̄ (Chaplygin structure)
    pub hlift: Option<SmoothMap>,
    /// (q, v) ↦ velocity at q carried from the section point by the action; identity when absent
    pub transport: Option<SmoothMap>,
}

#[derive(Clone, Debug, Default)]
pub struct GroupActionSpec {
    pub generators: Vec<SmoothMap>,
    /// c[(i·d + j)·d + l] with [ξ_i, ξ_j] = Σ_l c_ijl ξ_l as vector fields on Q
    pub structure_constants: Option<Vec<f64>>,
    pub quotient: Option<QuotientData>,
}

impl GroupActionSpec {
    pub fn new(generators: Vec<SmoothMap>) -> GroupActionSpec {
        GroupActionSpec { generators, structure_constants: None, quotient: None }
    }

    pub fn trivial() -> GroupActionSpec {
        GroupActionSpec::default()
    }

    pub fn with_structure_constants(mut self, c: Vec<f64>) -> GroupActionSpec {
        self.structure_constants = Some(c);
        self
    }

    pub fn with_quotient(mut self, quotient: QuotientData) -> GroupActionSpec {
        self.quotient = Some(quotient);
        self
    }

    pub fn dim_g(&self) -> usize {
        self.generators.len()
    }

    pub fn quotient(&self) -> Result<&QuotientData> {
        self.quotient.as_ref().ok_or_else(|| NhError::Config("group action has no quotient data".into()))
    }

    /// Σ ξᵢ ξ_Q,i(q).
    pub fn combination(&self, xi: &[f64], q: &[f64]) -> Result<Vec<f64>> {
        if xi.len() != self.dim_g() {
            return Err(NhError::Dimension { expected: self.dim_g(), got: xi.len() });
        }
        let mut out = vec![0.0; q.len()];
        for (c, g) in xi.iter().zip(&self.generators) {
            for (o, x) in out.iter_mut().zip(g.eval(q)?) {
                *o += c * x;
            }
        }
        Ok(out)
    }
}

/// Tangent lift (ξ(q), Dξ(q)·v) of a generator at a state.
pub fn lifted_generator(g: &SmoothMap, s: &State) -> Result<Vec<f64>> {
    g.check_arity(s.dim())?;
    let (mut xi, dxi) = jvp_at(g, &s.q, &s.v);
    xi.extend(dxi);
    Ok(xi)
}

/// Second derivative d²/dt² f(q + t v) at t = 0, componentwise.
fn second_along(f: &SmoothMap, q: &[f64], v: &[f64]) -> Vec<f64> {
    let seed: Vec<D2> = q.iter().zip(v).map(|(&x, &d)| Dual::new(Dual::new(x, d), Dual::new(d, 0.0))).collect();
    f.inner().eval_d2(&seed).into_iter().map(|y| y.du.du).collect()
}

/// Horizontal lift defined by the constraints: solve C(q)v = 0, Dρ(q)v = v̄.
pub struct ConstraintLift {
    pub n: usize,
    pub k: usize,
    pub dim: usize,
    pub coeff: SmoothMap,
    pub project_jacobian: SmoothMap,
}

impl MapFn for ConstraintLift {
    fn arity(&self) -> usize {
        self.n + self.dim
    }
    fn coarity(&self) -> usize {
        self.n
    }
    fn call<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let (q, vbar) = x.split_at(self.n);
        let c = self.coeff.call(q);
        let d = self.project_jacobian.call(q);
        let mut rows: Vec<Vec<T>> = c.chunks(self.n).map(|r| r.to_vec()).collect();
        rows.extend(d.chunks(self.n).map(|r| r.to_vec()));
        let mut rhs = vec![T::zero(); self.k];
        rhs.extend_from_slice(vbar);
        solve_real(rows, rhs).unwrap_or_else(|| vec![T::from(f64::NAN); self.n])
    }
}

pub fn constraint_lift(cs: &ConstraintSet, dim: usize, project_jacobian: &SmoothMap) -> Result<SmoothMap> {
    let coeff =
        cs.coeff().ok_or_else(|| NhError::Unsupported("a constraint-derived lift needs linear constraints".into()))?;
    if cs.k() + dim != cs.n() {
        return Err(NhError::Dimension { expected: cs.n(), got: cs.k() + dim });
    }
    Ok(SmoothMap::new(ConstraintLift {
        n: cs.n(),
        k: cs.k(),
        dim,
        coeff: coeff.clone(),
        project_jacobian: project_jacobian.clone(),
    }))
}

/// Consistency of the quotient chart at sample points of Q̄: project∘section = id,
/// Dρ matches the supplied Jacobian, and (if present) the lift is horizontal, lies in N and inverts Dρ.
pub fn check_quotient(
    cs: &ConstraintSet,
    action: &GroupActionSpec,
    samples: &[Vec<f64>],
    tol: f64,
) -> Result<CheckReport> {
    let qd = action.quotient()?;
    let n = cs.n();
    let mut rep = CheckReport::new("quotient", tol);
    for qbar in samples {
        let q = qd.section.eval(qbar)?;
        let back = qd.project.eval(&q)?;
        let mut r = back.iter().zip(qbar).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let dr = jacobian(&qd.project, &q)?;
        let given = DMatrix::from_row_slice(qd.dim, n, &qd.project_jacobian.eval(&q)?);
        r = r.max((dr.clone() - given).amax());
        if let Some(h) = &qd.hlift {
            for a in 0..qd.dim {
                let mut y = q.clone();
                y.extend((0..qd.dim).map(|b| if a == b { 1.0 } else { 0.0 }));
                let w = h.eval(&y)?;
                r = r.max(max_abs(&constraints::residual(cs, &State::new(q.clone(), w.clone()))?));
                let back = &dr * DVector::from_column_slice(&w);
                for b in 0..qd.dim {
                    r = r.max((back[b] - if a == b { 1.0 } else { 0.0 }).abs());
                }
            }
        }
        rep.record(qbar, r);
    }
    Ok(rep)
}

/// ξᶜ(L) and tangency ξᶜ(ψ) at states on N, for every generator.
pub fn check_invariance(
    sys: &LagrangianSystem,
    cs: &ConstraintSet,
    action: &GroupActionSpec,
    samples: &[State],
    tol: f64,
) -> Result<CheckReport> {
    let d = action.dim_g();
    let mut worst_l = vec![0.0f64; d];
    let mut worst_psi = vec![0.0f64; d];
    let mut rep = CheckReport::new("invariance", tol);
    for s in samples {
        require_on_n(cs, s, CHECK_TOL)?;
        let dl = gradient(sys.lagrangian(), &s.coords())?;
        let dpsi = constraint_jacobian(cs, s)?;
        let mut r = 0.0f64;
        for (i, g) in action.generators.iter().enumerate() {
            let lift = DVector::from_vec(lifted_generator(g, s)?);
            let xl = dl.iter().zip(lift.iter()).map(|(a, b)| a * b).sum::<f64>().abs();
            let xpsi = if cs.k() == 0 { 0.0 } else { (&dpsi * &lift).amax() };
            worst_l[i] = worst_l[i].max(xl);
            worst_psi[i] = worst_psi[i].max(xpsi);
            r = r.max(xl).max(xpsi);
        }
        rep.record(&s.coords(), r);
    }
    let per: Vec<bool> = (0..d).map(|i| worst_l[i] <= tol && worst_psi[i] <= tol).collect();
    rep.set_info("generator_pass", per);
    rep.set_info("lagrangian_residuals", worst_l);
    rep.set_info("tangency_residuals", worst_psi);
    Ok(rep)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryCase {
    PureKinematic,
    Horizontal,
    General,
    Unclassified,
}

impl SymmetryCase {
    pub fn name(self) -> &'static str {
        match self {
            SymmetryCase::PureKinematic => "pure_kinematic",
            SymmetryCase::Horizontal => "horizontal",
            SymmetryCase::General => "general",
            SymmetryCase::Unclassified => "unclassified",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub case: SymmetryCase,
    pub dim_vn: usize,
    pub dim_h: usize,
    pub dim_vn_cap_h: usize,
    pub dim_tn: usize,
}

/// Fibers 𝒱_N = 𝒱 ∩ TN and ℋ at s, and the case they determine.
pub fn classify_case(
    sys: &LagrangianSystem,
    cs: &ConstraintSet,
    action: &GroupActionSpec,
    s: &State,
) -> Result<Classification> {
    require_on_n(cs, s, CHECK_TOL)?;
    let n = s.dim();
    let lifts: Vec<Vec<f64>> = action.generators.iter().map(|g| lifted_generator(g, s)).collect::<Result<_>>()?;
    let tn = tangent_space(cs, s)?;
    let vn = Subspace::span(2 * n, &lifts, RANK_TOL).intersect(&tn);
    let h = h_distribution(sys, cs, s)?.space;
    let cap = vn.intersect(&h);
    // with 𝒱_N = 0 every case condition but the span one holds; report it as pure kinematic
    let case = if vn.dim() == 0 {
        SymmetryCase::PureKinematic
    } else if cap.dim() == 0 {
        if vn.sum(&h).dim() == tn.dim() {
            SymmetryCase::PureKinematic
        } else {
            SymmetryCase::Unclassified
        }
    } else if cap.dim() == vn.dim() {
        SymmetryCase::Horizontal
    } else {
        SymmetryCase::General
    };
    Ok(Classification { case, dim_vn: vn.dim(), dim_h: h.dim(), dim_vn_cap_h: cap.dim(), dim_tn: tn.dim() })
}

/// g^q = {ξ : reaction covectors annihilate ξ_Q(q)} over a sample of velocities on N at q.
pub fn momentum_subspace(cs: &ConstraintSet, action: &GroupActionSpec, q: &[f64]) -> Result<Subspace> {
    let d = action.dim_g();
    let n = q.len();
    let xi: Vec<Vec<f64>> = action.generators.iter().map(|g| g.eval(q)).collect::<Result<_>>()?;
    let velocities: Vec<Vec<f64>> = if cs.is_linear() || cs.k() == 0 {
        vec![vec![0.0; n]]
    } else {
        let mut rng = grid::rng(0);
        (0..4).map(|_| project_velocity(cs, q, &grid::uniform(&mut rng, -1.0, 1.0, n))).collect::<Result<_>>()?
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for v in velocities {
        let b = reaction_basis(cs, &State::new(q.to_vec(), v))?;
        for a in 0..b.nrows() {
            rows.push((0..d).map(|j| (0..n).map(|i| b[(a, i)] * xi[j][i]).sum()).collect());
        }
    }
    if rows.is_empty() || d == 0 {
        return Ok(Subspace::full(d));
    }
    let m = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
    Ok(nullspace(&m, RANK_TOL))
}

/// J(v_q)(ξ) = ∂L/∂v · ξ_Q(q).
pub fn nonholonomic_momentum(sys: &LagrangianSystem, action: &GroupActionSpec, xi: &[f64], s: &State) -> Result<f64> {
    let p = crate::mechanics::legendre(sys, s)?.p;
    let field = action.combination(xi, &s.q)?;
    Ok(p.iter().zip(&field).map(|(a, b)| a * b).sum())
}

/// q ↦ Σ ξ̃ᵢ(q) ξ_Q,i(q) for a map ξ̃: Q → g.
pub struct SectionField {
    pub generators: Vec<SmoothMap>,
    pub section: SmoothMap,
}

impl MapFn for SectionField {
    fn arity(&self) -> usize {
        self.section.arity()
    }
    fn coarity(&self) -> usize {
        self.section.arity()
    }
    fn call<T: Scalar>(&self, q: &[T]) -> Vec<T> {
        let c = self.section.call(q);
        let mut out = vec![T::zero(); q.len()];
        for (ci, g) in c.iter().zip(&self.generators) {
            for (o, x) in out.iter_mut().zip(g.call(q)) {
                *o = o.clone() + ci.clone() * x;
            }
        }
        out
    }
}

/// Along a trajectory: d/dt J_ξ̃ (fourth-order central differences) against Θᶜ(L).
pub fn noether_check(
    sys: &LagrangianSystem,
    action: &GroupActionSpec,
    xi_section: &SmoothMap,
    traj: &crate::dynamics::Trajectory,
    tol: f64,
) -> Result<CheckReport> {
    if xi_section.coarity() != action.dim_g() {
        return Err(NhError::Dimension { expected: action.dim_g(), got: xi_section.coarity() });
    }
    let theta = SmoothMap::new(SectionField { generators: action.generators.clone(), section: xi_section.clone() });
    let n = sys.n();
    let mut j = Vec::with_capacity(traj.len());
    let mut lift_l = Vec::with_capacity(traj.len());
    for s in &traj.states {
        let (th, dth) = jvp_at(&theta, &s.q, &s.v);
        let grad = gradient(sys.lagrangian(), &s.coords())?;
        let p = &grad[n..];
        j.push(p.iter().zip(&th).map(|(a, b)| a * b).sum::<f64>());
        let mut lift = th;
        lift.extend(dth);
        lift_l.push(grad.iter().zip(&lift).map(|(a, b)| a * b).sum::<f64>());
    }
    let mut rep = CheckReport::new("noether", tol);
    let m = traj.len();
    if m >= 5 {
        let dt = traj.times[1] - traj.times[0];
        for i in 2..m - 2 {
            let djdt = (-j[i + 2] + 8.0 * j[i + 1] - 8.0 * j[i - 1] + j[i - 2]) / (12.0 * dt);
            rep.record(&traj.states[i].coords(), (djdt - lift_l[i]).abs());
        }
    }
    let j0 = j.first().copied().unwrap_or(0.0);
    rep.set_info("momentum_drift", j.iter().fold(0.0f64, |a, x| a.max((x - j0).abs())));
    rep.set_info("max_lift_of_lagrangian", lift_l.iter().fold(0.0f64, |a, x| a.max(x.abs())));
    Ok(rep.without_points())
}

/// L*(q̄, v̄) = L(θ(q̄), h(θ(q̄), v̄)).
pub struct ReducedLagrangian {
    pub n: usize,
    pub dim: usize,
    pub lagrangian: SmoothMap,
    pub section: SmoothMap,
    pub hlift: SmoothMap,
}

impl MapFn for ReducedLagrangian {
    fn arity(&self) -> usize {
        2 * self.dim
    }
    fn coarity(&self) -> usize {
        1
    }
    fn call<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let (qbar, vbar) = x.split_at(self.dim);
        let mut y = self.section.call(qbar);
        let mut arg = y.clone();
        y.extend_from_slice(vbar);
        arg.extend(self.hlift.call(&y));
        self.lagrangian.call(&arg)
    }
}

/// M*(q̄) = Hᵀ M(θ(q̄)) H with H the lift matrix at θ(q̄).
struct ReducedMetric {
    n: usize,
    dim: usize,
    metric: SmoothMap,
    section: SmoothMap,
    hlift: SmoothMap,
}

impl MapFn for ReducedMetric {
    fn arity(&self) -> usize {
        self.dim
    }
    fn coarity(&self) -> usize {
        self.dim * self.dim
    }
    fn call<T: Scalar>(&self, qbar: &[T]) -> Vec<T> {
        let (n, d) = (self.n, self.dim);
        let q = self.section.call(qbar);
        let m = self.metric.call(&q);
        let cols: Vec<Vec<T>> = (0..d)
            .map(|a| {
                let mut y = q.clone();
                y.extend((0..d).map(|b| T::from(if a == b { 1.0 } else { 0.0 })));
                self.hlift.call(&y)
            })
            .collect();
        let mut out = Vec::with_capacity(d * d);
        for a in 0..d {
            for b in 0..d {
                let mut acc = T::zero();
                for i in 0..n {
                    for j in 0..n {
                        acc = acc + cols[a][i].clone() * m[i * n + j].clone() * cols[b][j].clone();
                    }
                }
                out.push(acc);
            }
        }
        out
    }
}

/// In the chart (q, v̄) of N: β̂ = (∂L/∂v(q, h(q, v̄)), 0).
struct PullbackForm {
    n: usize,
    dim: usize,
    lagrangian: SmoothMap,
    hlift: SmoothMap,
}

impl MapFn for PullbackForm {
    fn arity(&self) -> usize {
        self.n + self.dim
    }
    fn coarity(&self) -> usize {
        self.n + self.dim
    }
    fn call<T: Scalar>(&self, y: &[T]) -> Vec<T> {
        let mut x = y[..self.n].to_vec();
        x.extend(self.hlift.call(y));
        let mut out = gradient_at(&self.lagrangian, &x).split_off(self.n);
        out.extend((0..self.dim).map(|_| T::zero()));
        out
    }
}

/// Horizontal part of β̂: θ(δq, δv̄) = β̂(h(q, Dρ δq), δv̄) = Σ_α cₐ (Dρ δq)_α.
struct HorizontalForm {
    n: usize,
    dim: usize,
    lagrangian: SmoothMap,
    hlift: SmoothMap,
    project_jacobian: SmoothMap,
}

impl MapFn for HorizontalForm {
    fn arity(&self) -> usize {
        self.n + self.dim
    }
    fn coarity(&self) -> usize {
        self.n + self.dim
    }
    fn call<T: Scalar>(&self, y: &[T]) -> Vec<T> {
        let (n, d) = (self.n, self.dim);
        let q = &y[..n];
        let mut x = q.to_vec();
        x.extend(self.hlift.call(y));
        let p = gradient_at(&self.lagrangian, &x).split_off(n);
        let dr = self.project_jacobian.call(q);
        let mut out = vec![T::zero(); n + d];
        for a in 0..d {
            let mut ya = q.to_vec();
            ya.extend((0..d).map(|b| T::from(if a == b { 1.0 } else { 0.0 })));
            let w = self.hlift.call(&ya);
            let c = p.iter().zip(&w).fold(T::zero(), |acc, (pi, wi)| acc + pi.clone() * wi.clone());
            for i in 0..n {
                out[i] = out[i].clone() + dr[a * n + i].clone() * c.clone();
            }
        }
        out
    }
}

fn exterior(jac: &DMatrix<f64>, u: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let skew = jac.transpose() - jac;
    u.dot(&(skew * w))
}

/// The reduced gyroscopic one-form ᾱ of a Chaplygin system, built from
/// α̃ = ι_Γ(h*d β̂ − d(h*β̂)) and read off along the section.
///
/// β̂ is the pullback of the Poincaré–Cartan form α_L = −(∂L/∂v) dq, the sign for which
/// ω_L = dα_L and ι_Γω_L = dE_L hold together. With it the reduced motion reads
/// ι_Γ ω_{L*} − dE_{L*} = −ᾱ, so ᾱ equals the force returned by [`Gyroscopic::dynamics_force`].
#[derive(Clone, Debug)]
pub struct Gyroscopic {
    sys: LagrangianSystem,
    cs: ConstraintSet,
    quotient: QuotientData,
    hlift: SmoothMap,
    beta: SmoothMap,
    theta: SmoothMap,
}

impl Gyroscopic {
    pub fn dim(&self) -> usize {
        self.quotient.dim
    }

    /// Chart point (q, v̄), state (q, v) and the constrained field Γ in the chart.
    fn chart(&self, qbar: &[f64], vbar: &[f64]) -> Result<(Vec<f64>, State, Vec<f64>)> {
        let d = self.dim();
        if qbar.len() != d || vbar.len() != d {
            return Err(NhError::Dimension { expected: d, got: qbar.len().max(vbar.len()) });
        }
        let q = self.quotient.section.eval(qbar)?;
        let mut y = q.clone();
        y.extend_from_slice(vbar);
        let v = self.hlift.eval(&y)?;
        let s = State::new(q.clone(), v.clone());
        let a = constrained_field(&self.sys, &self.cs, &s)?.acceleration;
        let n = q.len();
        let dr = DMatrix::from_row_slice(d, n, &self.quotient.project_jacobian.eval(&q)?);
        let curv = second_along(&self.quotient.project, &q, &v);
        let vbar_dot = dr * DVector::from_column_slice(&a) + DVector::from_vec(curv);
        let mut gamma = v;
        gamma.extend(vbar_dot.iter());
        Ok((y, s, gamma))
    }

    /// Components ᾱ_α(q̄, v̄) on dq̄^α.
    pub fn eval(&self, qbar: &[f64], vbar: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        let (y, s, gamma) = self.chart(qbar, vbar)?;
        let n = s.dim();
        let gamma = DVector::from_vec(gamma);
        let jb = jacobian(&self.beta, &y)?;
        let jt = jacobian(&self.theta, &y)?;
        let ds = jacobian(&self.quotient.section, qbar)?;
        let dr = DMatrix::from_row_slice(d, n, &self.quotient.project_jacobian.eval(&s.q)?);
        let mut out = Vec::with_capacity(d);
        for a in 0..d {
            let dq = ds.column(a).into_owned();
            let u = DVector::from_iterator(n + d, dq.iter().copied().chain(std::iter::repeat_n(0.0, d)));
            let mut ya = s.q.clone();
            ya.extend((dr.clone() * &dq).iter());
            let hq = self.hlift.eval(&ya)?;
            let hu = DVector::from_iterator(n + d, hq.into_iter().chain(std::iter::repeat_n(0.0, d)));
            out.push(exterior(&jt, &gamma, &u) - exterior(&jb, &gamma, &hu));
        }
        Ok(out)
    }

    /// Oracle: the force F with d/dt ∂L*/∂v̄ − ∂L*/∂q̄ = F that reproduces the projected constrained dynamics.
    pub fn dynamics_force(&self, base: &LagrangianSystem, qbar: &[f64], vbar: &[f64]) -> Result<Vec<f64>> {
        let (_, _, gamma) = self.chart(qbar, vbar)?;
        let n = gamma.len() - self.dim();
        let acc = DVector::from_column_slice(&gamma[n..]);
        let t = field_terms(base, &State::new(qbar.to_vec(), vbar.to_vec()))?;
        let f = &t.w * acc + &t.mixed_v - &t.dl_dq;
        Ok(f.iter().copied().collect())
    }
}

impl ForceField for Gyroscopic {
    fn covector(&self, q: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.eval(q, v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReductionRoute {
    Chaplygin,
    Section,
}

/// Output of a reduction. The Chaplygin route carries L* and ᾱ; the section route
/// (general case) evaluates reduced quantities along the section only.
#[derive(Clone, Debug)]
pub struct ReducedSystem {
    pub route: ReductionRoute,
    pub sys: LagrangianSystem,
    pub cs: ConstraintSet,
    pub action: GroupActionSpec,
    pub base: Option<LagrangianSystem>,
    pub gyro: Option<Gyroscopic>,
}

impl ReducedSystem {
    pub fn base(&self) -> Result<&LagrangianSystem> {
        self.base.as_ref().ok_or_else(|| NhError::Config("reduced Lagrangian needs the Chaplygin route".into()))
    }

    pub fn gyro(&self) -> Result<&Gyroscopic> {
        self.gyro.as_ref().ok_or_else(|| NhError::Config("gyroscopic form needs the Chaplygin route".into()))
    }

    pub fn dim(&self) -> usize {
        self.action.quotient.as_ref().map_or(0, |q| q.dim)
    }

    /// Ē_L(q̄, v) = E_L(θ(q̄), v) for an invariant velocity v given at the section point.
    pub fn section_energy(&self, qbar: &[f64], v: &[f64]) -> Result<f64> {
        let q = self.action.quotient()?.section.eval(qbar)?;
        crate::mechanics::energy(&self.sys, &State::new(q, v.to_vec()))
    }
}

fn sample_reduced_states(qd: &QuotientData, hlift: &SmoothMap) -> Result<Vec<State>> {
    let d = qd.dim;
    let g = Grid::halton(&vec![-1.0; d], &vec![1.0; d], 3, 11)?;
    g.points
        .iter()
        .enumerate()
        .map(|(i, qbar)| {
            let q = qd.section.eval(qbar)?;
            let mut y = q.clone();
            y.extend((0..d).map(|a| 0.3 + 0.5 * ((a + i) % 3) as f64));
            Ok(State::new(q, hlift.eval(&y)?))
        })
        .collect()
}

/// Chaplygin reduction: L* by composition with the lift, ᾱ from the defining formula.
pub fn chaplygin_reduce(sys: &LagrangianSystem, cs: &ConstraintSet, action: &GroupActionSpec) -> Result<ReducedSystem> {
    let qd = action.quotient()?;
    let hlift =
        qd.hlift.clone().ok_or_else(|| NhError::Config("Chaplygin reduction needs a horizontal lift".into()))?;
    for s in sample_reduced_states(qd, &hlift)? {
        let c = classify_case(sys, cs, action, &s)?;
        if c.case != SymmetryCase::PureKinematic {
            return Err(NhError::Unsupported(format!(
                "Chaplygin reduction needs the pure kinematic case, found {}",
                c.case.name()
            )));
        }
    }
    let (n, d) = (sys.n(), qd.dim);
    let lstar = SmoothMap::new(ReducedLagrangian {
        n,
        dim: d,
        lagrangian: sys.lagrangian().clone(),
        section: qd.section.clone(),
        hlift: hlift.clone(),
    });
    let mut base = LagrangianSystem::new(d, lstar)?;
    if let Some(mech) = sys.mechanical_data() {
        let metric = SmoothMap::new(ReducedMetric {
            n,
            dim: d,
            metric: mech.metric.clone(),
            section: qd.section.clone(),
            hlift: hlift.clone(),
        });
        let potential = SmoothMap::new(Compose { outer: mech.potential.clone(), inner: qd.section.clone() });
        base = base.with_mechanical(metric, potential)?;
    }
    let beta = SmoothMap::new(PullbackForm { n, dim: d, lagrangian: sys.lagrangian().clone(), hlift: hlift.clone() });
    let theta = SmoothMap::new(HorizontalForm {
        n,
        dim: d,
        lagrangian: sys.lagrangian().clone(),
        hlift: hlift.clone(),
        project_jacobian: qd.project_jacobian.clone(),
    });
    let gyro = Gyroscopic { sys: sys.clone(), cs: cs.clone(), quotient: qd.clone(), hlift, beta, theta };
    Ok(ReducedSystem {
        route: ReductionRoute::Chaplygin,
        sys: sys.clone(),
        cs: cs.clone(),
        action: action.clone(),
        base: Some(base),
        gyro: Some(gyro),
    })
}

/// General-case route: reduced objects are evaluated along the section.
pub fn section_reduce(sys: &LagrangianSystem, cs: &ConstraintSet, action: &GroupActionSpec) -> Result<ReducedSystem> {
    action.quotient()?;
    Ok(ReducedSystem {
        route: ReductionRoute::Section,
        sys: sys.clone(),
        cs: cs.clone(),
        action: action.clone(),
        base: None,
        gyro: None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReducedKind {
    /// X̄: Q̄ → TQ̄ (Chaplygin / pure kinematic)
    BaseField,
    /// X̄: Q̄ → TQ/G, represented by the invariant velocity at θ(q̄)
    InvariantVelocity,
}

#[derive(Clone, Debug)]
pub struct ReducedCandidate {
    pub kind: ReducedKind,
    pub map: SmoothMap,
    pub label: String,
}

impl ReducedCandidate {
    pub fn base_field(label: impl Into<String>, map: SmoothMap) -> ReducedCandidate {
        ReducedCandidate { kind: ReducedKind::BaseField, map, label: label.into() }
    }

    pub fn invariant_velocity(label: impl Into<String>, map: SmoothMap) -> ReducedCandidate {
        ReducedCandidate { kind: ReducedKind::InvariantVelocity, map, label: label.into() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReducedVariant {
    Chaplygin,
    PureKinematic,
    General,
}

/// q̄ ↦ E_L(θ(q̄), X̄(q̄)).
struct SectionEnergy {
    dim: usize,
    energy: SmoothMap,
    section: SmoothMap,
    field: SmoothMap,
}

impl MapFn for SectionEnergy {
    fn arity(&self) -> usize {
        self.dim
    }
    fn coarity(&self) -> usize {
        1
    }
    fn call<T: Scalar>(&self, qbar: &[T]) -> Vec<T> {
        let mut x = self.section.call(qbar);
        x.extend(self.field.call(qbar));
        self.energy.call(&x)
    }
}

fn closedness_full(jac: &DMatrix<f64>) -> f64 {
    (jac.transpose() - jac).amax()
}

/// Reduced Hamilton–Jacobi conditions for a candidate on Q̄.
///
/// `Chaplygin` evaluates d(E_{L*}∘X̄) ± X̄*ᾱ for both signs and keeps the better one,
/// recording which; `PureKinematic` uses the minus sign together with X̄*ω_{L*} = 0;
/// `General` tests d(Ē_L∘X̄) against the reduced reaction covectors θ*F°_L.
pub fn check_reduced_hj(
    red: &ReducedSystem,
    cand: &ReducedCandidate,
    grid: &Grid,
    variant: ReducedVariant,
    tol: f64,
) -> Result<CheckReport> {
    let d = red.dim();
    cand.map.check_arity(d)?;
    match variant {
        ReducedVariant::Chaplygin | ReducedVariant::PureKinematic => {
            if cand.kind != ReducedKind::BaseField {
                return Err(NhError::Config("this reduced check needs a base-field candidate".into()));
            }
            let base = red.base()?;
            let gyro = red.gyro()?;
            let e = SmoothMap::new(EnergyMap { n: d, lagrangian: base.lagrangian().clone() });
            let g = SmoothMap::new(AlongSection { n: d, f: e, section: cand.map.clone() });
            let sigma =
                SmoothMap::new(LegendreAlong { n: d, lagrangian: base.lagrangian().clone(), field: cand.map.clone() });
            let mut rows = Vec::with_capacity(grid.len());
            for qb in &grid.points {
                let dg = gradient(&g, qb)?;
                let alpha = gyro.eval(qb, &cand.map.eval(qb)?)?;
                let minus = dg.iter().zip(&alpha).fold(0.0f64, |m, (a, b)| m.max((a + b).abs()));
                let plus = dg.iter().zip(&alpha).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                let closed = closedness_full(&jacobian(&sigma, qb)?);
                rows.push((qb.clone(), minus, plus, closed));
            }
            let max_minus = rows.iter().fold(0.0f64, |m, r| m.max(r.1));
            let max_plus = rows.iter().fold(0.0f64, |m, r| m.max(r.2));
            let max_closed = rows.iter().fold(0.0f64, |m, r| m.max(r.3));
            let verdict = match (max_minus <= tol, max_plus <= tol) {
                (true, true) => "both",
                (true, false) => "minus",
                (false, true) => "plus",
                (false, false) => "neither",
            };
            let (name, use_plus) = if variant == ReducedVariant::Chaplygin {
                ("reduced_chaplygin", max_plus < max_minus)
            } else {
                ("reduced_pure_kinematic", false)
            };
            let mut rep = CheckReport::new(name, tol).with_grid(grid.spec.clone());
            for (qb, minus, plus, closed) in rows {
                let r = if use_plus { plus } else { minus };
                let r = if variant == ReducedVariant::PureKinematic { r.max(closed) } else { r };
                rep.record(&qb, r);
            }
            rep.set_info("residual_minus", max_minus);
            rep.set_info("residual_plus", max_plus);
            rep.set_info("sign", verdict);
            rep.set_info("closedness_residual", max_closed);
            Ok(rep)
        }
        ReducedVariant::General => {
            if cand.kind != ReducedKind::InvariantVelocity {
                return Err(NhError::Config("the general reduced check needs an invariant-velocity candidate".into()));
            }
            let qd = red.action.quotient()?;
            let n = red.sys.n();
            let e = SmoothMap::new(EnergyMap { n, lagrangian: red.sys.lagrangian().clone() });
            let g = SmoothMap::new(SectionEnergy {
                dim: d,
                energy: e,
                section: qd.section.clone(),
                field: cand.map.clone(),
            });
            let mut rep = CheckReport::new("reduced_general", tol).with_grid(grid.spec.clone());
            let (mut worst_hj, mut worst_n, mut dim_f) = (0.0f64, 0.0f64, 0usize);
            for qb in &grid.points {
                let q = qd.section.eval(qb)?;
                let s = State::new(q, cand.map.eval(qb)?);
                let on_n = max_abs(&constraints::residual(&red.cs, &s)?);
                let b = reaction_basis(&red.cs, &s)?;
                let ds = jacobian(&qd.section, qb)?;
                let pulled = &b * ds;
                let rows: Vec<Vec<f64>> = pulled.row_iter().map(|r| r.iter().copied().collect()).collect();
                let fo = Subspace::span(d, &rows, RANK_TOL);
                dim_f = dim_f.max(fo.dim());
                let dg = gradient(&g, qb)?;
                let proj = fo.project(&dg);
                let r_hj = dg.iter().zip(&proj).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                worst_hj = worst_hj.max(r_hj);
                worst_n = worst_n.max(on_n);
                rep.record(qb, r_hj.max(on_n));
            }
            rep.set_info("hj_residual", worst_hj);
            rep.set_info("in_n_residual", worst_n);
            rep.set_info("reduced_reaction_rank", dim_f);
            Ok(rep)
        }
    }
}

/// X(q) = h(q, X̄(ρ(q))).
struct LiftReconstruction {
    n: usize,
    project: SmoothMap,
    hlift: SmoothMap,
    field: SmoothMap,
}

impl MapFn for LiftReconstruction {
    fn arity(&self) -> usize {
        self.n
    }
    fn coarity(&self) -> usize {
        self.n
    }
    fn call<T: Scalar>(&self, q: &[T]) -> Vec<T> {
        let mut y = q.to_vec();
        y.extend(self.field.call(&self.project.call(q)));
        self.hlift.call(&y)
    }
}

/// X(q) = transport(q, X̄(ρ(q))), or X̄(ρ(q)) when the action leaves velocity components unchanged.
struct InvariantReconstruction {
    n: usize,
    project: SmoothMap,
    transport: Option<SmoothMap>,
    field: SmoothMap,
}

impl MapFn for InvariantReconstruction {
    fn arity(&self) -> usize {
        self.n
    }
    fn coarity(&self) -> usize {
        self.n
    }
    fn call<T: Scalar>(&self, q: &[T]) -> Vec<T> {
        let v = self.field.call(&self.project.call(q));
        match &self.transport {
            Some(t) => {
                let mut y = q.to_vec();
                y.extend(v);
                t.call(&y)
            }
            None => v,
        }
    }
}

pub fn reconstruct(action: &GroupActionSpec, cand: &ReducedCandidate) -> Result<HJCandidate> {
    let qd = action.quotient()?;
    cand.map.check_arity(qd.dim)?;
    let n = qd.section.coarity();
    let map = match cand.kind {
        ReducedKind::BaseField => {
            if cand.map.coarity() != qd.dim {
                return Err(NhError::Dimension { expected: qd.dim, got: cand.map.coarity() });
            }
            let hlift =
                qd.hlift.clone().ok_or_else(|| NhError::Config("reconstruction needs a horizontal lift".into()))?;
            SmoothMap::new(LiftReconstruction { n, project: qd.project.clone(), hlift, field: cand.map.clone() })
        }
        ReducedKind::InvariantVelocity => {
            if cand.map.coarity() != n {
                return Err(NhError::Dimension { expected: n, got: cand.map.coarity() });
            }
            SmoothMap::new(InvariantReconstruction {
                n,
                project: qd.project.clone(),
                transport: qd.transport.clone(),
                field: cand.map.clone(),
            })
        }
    };
    Ok(HJCandidate::vector_field(format!("reconstruct({})", cand.label), map))
}

/// Invariance of a vector field on Q under the generators: |[ξ_Q, X]| at the grid points.
pub fn check_invariant_field(
    action: &GroupActionSpec,
    cand: &HJCandidate,
    grid: &Grid,
    tol: f64,
) -> Result<CheckReport> {
    let mut rep = CheckReport::new("invariant_field", tol).with_grid(grid.spec.clone());
    for q in &grid.points {
        let r = action
            .generators
            .iter()
            .try_fold(0.0f64, |m, g| Ok::<f64, NhError>(m.max(max_abs(&lie_bracket(g, &cand.map, q)?))))?;
        rep.record(q, r);
    }
    Ok(rep)
}

/// ρ_TQ∘X = X̄∘ρ_Q for a base-field candidate: Dρ(q)·X(q) against X̄(ρ(q)).
pub fn check_round_trip(
    action: &GroupActionSpec,
    cand: &ReducedCandidate,
    x: &HJCandidate,
    grid: &Grid,
    tol: f64,
) -> Result<CheckReport> {
    let qd = action.quotient()?;
    let mut rep = CheckReport::new("round_trip", tol).with_grid(grid.spec.clone());
    for q in &grid.points {
        let qbar = qd.project.eval(q)?;
        let xbar = cand.map.eval(&qbar)?;
        let xq = x.map.eval(q)?;
        let image: Vec<f64> = match cand.kind {
            ReducedKind::BaseField => {
                let dr = DMatrix::from_row_slice(qd.dim, q.len(), &qd.project_jacobian.eval(q)?);
                (dr * DVector::from_vec(xq)).iter().copied().collect()
            }
            ReducedKind::InvariantVelocity => x.map.eval(&qd.section.eval(&qbar)?)?,
        };
        rep.record(q, image.iter().zip(&xbar).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())));
    }
    Ok(rep)
}

/// Isotropy algebra g_μ = {ζ : μ([ζ, η]) = 0 for all η}. Abelian when no structure constants are given.
pub fn isotropy(action: &GroupActionSpec, mu: &[f64]) -> Result<Subspace> {
    let d = action.dim_g();
    if mu.len() != d {
        return Err(NhError::Dimension { expected: d, got: mu.len() });
    }
    let Some(c) = &action.structure_constants else {
        return Ok(Subspace::full(d));
    };
    if c.len() != d * d * d {
        return Err(NhError::Dimension { expected: d * d * d, got: c.len() });
    }
    let m = DMatrix::from_fn(d, d, |j, i| (0..d).map(|l| c[(i * d + j) * d + l] * mu[l]).sum());
    Ok(nullspace(&m, RANK_TOL))
}

/// Horizontal case, verified before quotienting: G_μ-invariance of X, X(Q) ⊆ J⁻¹(μ) ∩ N,
/// and the unreduced weak HJ and closedness conditions.
pub fn check_horizontal_mu(
    sys: &LagrangianSystem,
    cs: &ConstraintSet,
    action: &GroupActionSpec,
    cand: &HJCandidate,
    mu: &[f64],
    grid: &Grid,
    tol: f64,
) -> Result<CheckReport> {
    for q in &grid.points {
        let s = cand.state_at(q)?;
        if max_abs(&constraints::residual(cs, &s)?) > tol {
            continue;
        }
        let c = classify_case(sys, cs, action, &s)?;
        if action.dim_g() > 0 && c.case != SymmetryCase::Horizontal {
            return Err(NhError::Unsupported(format!(
                "the μ-level test needs the horizontal case (𝒱_N ⊆ ℋ); this action is {}",
                c.case.name()
            )));
        }
    }
    let gmu = isotropy(action, mu)?;
    let mut invariance = 0.0f64;
    let mut momentum = 0.0f64;
    for q in &grid.points {
        for z in gmu.basis() {
            let field = SmoothMap::new(SectionField {
                generators: action.generators.clone(),
                section: SmoothMap::new(crate::diffcalc::smooth::Constant { arity: q.len(), values: z.clone() }),
            });
            invariance = invariance.max(max_abs(&lie_bracket(&field, &cand.map, q)?));
        }
        let s = cand.state_at(q)?;
        for (i, m) in mu.iter().enumerate() {
            let e: Vec<f64> = (0..action.dim_g()).map(|j| if i == j { 1.0 } else { 0.0 }).collect();
            momentum = momentum.max((nonholonomic_momentum(sys, action, &e, &s)? - m).abs());
        }
    }
    let in_n = hamjac::check_in_n(cand, cs, grid, tol)?;
    let hj = hamjac::check_hj_condition(cand, sys, cs, grid, false, tol)?;
    let closed = if cs.is_linear() || cs.k() == 0 {
        hamjac::check_closedness_linear(cand, sys, cs, grid, tol)?
    } else {
        hamjac::check_nonlinear_pullback(cand, sys, cs, grid, tol)?
    };
    let mut rep = CheckReport::new("horizontal_mu", tol).with_grid(grid.spec.clone());
    rep.points_tested = grid.len();
    for r in [invariance, momentum, in_n.max_residual, hj.max_residual, closed.max_residual] {
        rep.absorb(r);
    }
    rep.set_info("isotropy_dim", gmu.dim());
    rep.set_info("invariance_residual", invariance);
    rep.set_info("momentum_residual", momentum);
    rep.set_info("in_n_residual", in_n.max_residual);
    rep.set_info("hj_residual", hj.max_residual);
    rep.set_info("closedness_residual", closed.max_residual);
    Ok(rep)
}

/// q̄ ↦ Dρ(θ(q̄))·ξ(θ(q̄)): a field on Q projected to Q̄ along the section.
pub struct ProjectedField {
    pub n: usize,
    pub dim: usize,
    pub project_jacobian: SmoothMap,
    pub section: SmoothMap,
    pub field: SmoothMap,
}

impl MapFn for ProjectedField {
    fn arity(&self) -> usize {
        self.dim
    }
    fn coarity(&self) -> usize {
        self.dim
    }
    fn call<T: Scalar>(&self, qbar: &[T]) -> Vec<T> {
        let q = self.section.call(qbar);
        let dr = self.project_jacobian.call(&q);
        let xi = self.field.call(&q);
        (0..self.dim)
            .map(|a| (0..self.n).fold(T::zero(), |acc, i| acc + dr[a * self.n + i].clone() * xi[i].clone()))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChowTransfer {
    pub q_level: ChowFlag,
    pub reduced_level: ChowFlag,
    pub agree: bool,
}

/// Completeness of a distribution on Q against that of its projection to Q̄.
pub fn chow_transfer(
    action: &GroupActionSpec,
    generators: &[SmoothMap],
    q: &[f64],
    max_depth: usize,
    tol: f64,
) -> Result<ChowTransfer> {
    let qd = action.quotient()?;
    let q_level = chow_flag(generators, q, max_depth, tol)?;
    let qbar = qd.project.eval(q)?;
    let projected: Vec<SmoothMap> = generators
        .iter()
        .map(|g| {
            SmoothMap::new(ProjectedField {
                n: q.len(),
                dim: qd.dim,
                project_jacobian: qd.project_jacobian.clone(),
                section: qd.section.clone(),
                field: g.clone(),
            })
        })
        .collect();
    let reduced_level = chow_flag(&projected, &qbar, max_depth.min(qd.dim.max(1)), tol)?;
    let agree = q_level.complete == reduced_level.complete;
    Ok(ChowTransfer { q_level, reduced_level, agree })
}
