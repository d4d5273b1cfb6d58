//! Lagrangian and Hamiltonian structures on TQ and T*Q: energy, Legendre
//! transform, Poincaré–Cartan two-form and the free Euler–Lagrange field.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::diffcalc::linalg::{singular_range, solve_real};
use crate::diffcalc::smooth::{gradient_at, second_directional};
use crate::diffcalc::{MapFn, Scalar, SmoothMap};
use crate::error::{NhError, Result};

/// Largest accepted condition number of the velocity Hessian.
pub const REGULARITY_LIMIT: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub q: Vec<f64>,
    pub v: Vec<f64>,
}

impl State {
    pub fn new(q: Vec<f64>, v: Vec<f64>) -> State {
        State { q, v }
    }

    /// Concatenated coordinates (q, v) on TQ.
    pub fn coords(&self) -> Vec<f64> {
        let mut z = self.q.clone();
        z.extend_from_slice(&self.v);
        z
    }

    pub fn from_coords(z: &[f64]) -> State {
        let n = z.len() / 2;
        State { q: z[..n].to_vec(), v: z[n..].to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhasePoint {
    pub fn coords(&self) -> Vec<f64> {
        let mut z = self.q.clone();
        z.extend_from_slice(&self.p);
        z
    }
}

/// Metric `q ↦ M(q)` (row-major n×n) and potential `q ↦ V(q)`.
#[derive(Clone, Debug)]
pub struct MechanicalData {
    pub metric: SmoothMap,
    pub potential: SmoothMap,
}

#[derive(Clone, Debug)]
pub struct LagrangianSystem {
    n: usize,
    lagrangian: SmoothMap,
    mechanical: Option<MechanicalData>,
}

impl LagrangianSystem {
    pub fn new(n: usize, lagrangian: SmoothMap) -> Result<LagrangianSystem> {
        lagrangian.check_arity(2 * n)?;
        if lagrangian.coarity() != 1 {
            return Err(NhError::Dimension { expected: 1, got: lagrangian.coarity() });
        }
        Ok(LagrangianSystem { n, lagrangian, mechanical: None })
    }

    /// A mechanical system whose Lagrangian is built as ½ vᵀM(q)v − V(q).
    pub fn mechanical(n: usize, metric: SmoothMap, potential: SmoothMap) -> Result<LagrangianSystem> {
        let l = SmoothMap::new(MechanicalLagrangian { n, metric: metric.clone(), potential: potential.clone() });
        LagrangianSystem::new(n, l)?.with_mechanical(metric, potential)
    }

    /// Attach metric and potential to a Lagrangian given in its own form.
    pub fn with_mechanical(mut self, metric: SmoothMap, potential: SmoothMap) -> Result<LagrangianSystem> {
        metric.check_arity(self.n)?;
        potential.check_arity(self.n)?;
        if metric.coarity() != self.n * self.n {
            return Err(NhError::Dimension { expected: self.n * self.n, got: metric.coarity() });
        }
        if potential.coarity() != 1 {
            return Err(NhError::Dimension { expected: 1, got: potential.coarity() });
        }
        self.mechanical = Some(MechanicalData { metric, potential });
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lagrangian(&self) -> &SmoothMap {
        &self.lagrangian
    }

    pub fn mechanical_data(&self) -> Option<&MechanicalData> {
        self.mechanical.as_ref()
    }

    pub fn is_mechanical(&self) -> bool {
        self.mechanical.is_some()
    }

    pub fn value(&self, s: &State) -> Result<f64> {
        self.check_state(s)?;
        Ok(self.lagrangian.call(&s.coords())[0])
    }

    pub fn check_state(&self, s: &State) -> Result<()> {
        if s.q.len() != self.n {
            return Err(NhError::Dimension { expected: self.n, got: s.q.len() });
        }
        if s.v.len() != self.n {
            return Err(NhError::Dimension { expected: self.n, got: s.v.len() });
        }
        Ok(())
    }

    pub fn require_mechanical(&self) -> Result<&MechanicalData> {
        self.mechanical
            .as_ref()
            .ok_or_else(|| NhError::Unsupported("Hamiltonian side needs a mechanical-type Lagrangian".into()))
    }

    pub fn metric(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        let mech = self.require_mechanical()?;
        let m = mech.metric.eval(q)?;
        Ok(DMatrix::from_row_slice(self.n, self.n, &m))
    }
}

/// ½ vᵀ M(q) v − V(q) as a map on (q, v).
pub struct MechanicalLagrangian {
    pub n: usize,
    pub metric: SmoothMap,
    pub potential: SmoothMap,
}

impl MapFn for MechanicalLagrangian {
    fn arity(&self) -> usize {
        2 * self.n
    }
    fn coarity(&self) -> usize {
        1
    }
    fn call<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let n = self.n;
        let (q, v) = x.split_at(n);
        let m = self.metric.call(q);
        let mut ke = T::zero();
        for i in 0..n {
            for j in 0..n {
                ke = ke + v[i].clone() * m[i * n + j].clone() * v[j].clone();
            }
        }
        vec![ke * 0.5 - self.potential.call(q)[0].clone()]
    }
}

/// E_L = v·∂L/∂v − L as a map on (q, v).
pub struct EnergyMap {
    pub n: usize,
    pub lagrangian: SmoothMap,
}

impl MapFn for EnergyMap {
    fn arity(&self) -> usize {
        2 * self.n
    }
    fn coarity(&self) -> usize {
        1
    }
    fn call<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let grad = gradient_at(&self.lagrangian, x);
        let l = self.lagrangian.call(x)[0].clone();
        let mut e = -l;
        for i in 0..self.n {
            e = e + x[self.n + i].clone() * grad[self.n + i].clone();
        }
        vec![e]
    }
}

/// Fiber derivative p = ∂L/∂v as a map (q, v) ↦ p.
pub struct LegendreMap {
    pub n: usize,
    pub lagrangian: SmoothMap,
}

impl MapFn for LegendreMap {
    fn arity(&self) -> usize {
        2 * self.n
    }
    fn coarity(&self) -> usize {
        self.n
    }
    fn call<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        gradient_at(&self.lagrangian, x).split_off(self.n)
    }
}

/// H(q, p) = ½ pᵀ M(q)⁻¹ p + V(q).
pub struct HamiltonianMap {
    pub n: usize,
    pub metric: SmoothMap,
    pub potential: SmoothMap,
}

pub(crate) fn metric_solve<T: Scalar>(metric: &SmoothMap, n: usize, q: &[T], p: &[T]) -> Vec<T> {
    let m = metric.call(q);
    let rows: Vec<Vec<T>> = (0..n).map(|i| m[i * n..(i + 1) * n].to_vec()).collect();
    solve_real(rows, p.to_vec()).unwrap_or_else(|| vec![T::from(f64::NAN); n])
}

impl MapFn for HamiltonianMap {
    fn arity(&self) -> usize {
        2 * self.n
    }
    fn coarity(&self) -> usize {
        1
    }
    fn call<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let (q, p) = x.split_at(self.n);
        let v = metric_solve(&self.metric, self.n, q, p);
        let mut ke = T::zero();
        for i in 0..self.n {
            ke = ke + p[i].clone() * v[i].clone();
        }
        vec![ke * 0.5 + self.potential.call(q)[0].clone()]
    }
}

/// Derivatives of L needed for the Euler–Lagrange field at one state.
#[derive(Clone, Debug)]
pub struct FieldTerms {
    /// ∂L/∂q
    pub dl_dq: DVector<f64>,
    /// ∂L/∂v
    pub p: DVector<f64>,
    /// W = ∂²L/∂v∂v
    pub w: DMatrix<f64>,
    /// (∂²L/∂v∂q)·v
    pub mixed_v: DVector<f64>,
}

pub fn field_terms(sys: &LagrangianSystem, s: &State) -> Result<FieldTerms> {
    sys.check_state(s)?;
    let n = sys.n;
    let z = s.coords();
    let l = &sys.lagrangian;
    let mut w = DMatrix::zeros(n, n);
    let mut p = DVector::zeros(n);
    let mut dl_dq = DVector::zeros(n);
    let mut mixed_v = DVector::zeros(n);
    let mut ei = vec![0.0; 2 * n];
    let mut ej = vec![0.0; 2 * n];
    let mut qdir = vec![0.0; 2 * n];
    qdir[..n].copy_from_slice(&s.v);
    for i in 0..n {
        ei[n + i] = 1.0;
        for j in i..n {
            ej[n + j] = 1.0;
            let (_, _, di, hij) = second_directional(l, &z, &ei, &ej);
            w[(i, j)] = hij;
            w[(j, i)] = hij;
            if i == j {
                p[i] = di;
            }
            ej[n + j] = 0.0;
        }
        let (_, _, _, av) = second_directional(l, &z, &ei, &qdir);
        mixed_v[i] = av;
        ei[n + i] = 0.0;
        ej[i] = 1.0;
        let (_, dq, _, _) = second_directional(l, &z, &ei, &ej);
        dl_dq[i] = dq;
        ej[i] = 0.0;
    }
    Ok(FieldTerms { dl_dq, p, w, mixed_v })
}

/// Full mixed block A_ij = ∂²L/∂v_i∂q_j.
pub fn mixed_block(sys: &LagrangianSystem, s: &State) -> Result<DMatrix<f64>> {
    sys.check_state(s)?;
    let n = sys.n;
    let z = s.coords();
    let mut a = DMatrix::zeros(n, n);
    let mut ei = vec![0.0; 2 * n];
    let mut ej = vec![0.0; 2 * n];
    for i in 0..n {
        ei[n + i] = 1.0;
        for j in 0..n {
            ej[j] = 1.0;
            a[(i, j)] = second_directional(&sys.lagrangian, &z, &ei, &ej).3;
            ej[j] = 0.0;
        }
        ei[n + i] = 0.0;
    }
    Ok(a)
}

pub fn check_regular(w: &DMatrix<f64>) -> Result<()> {
    let (lo, hi) = singular_range(w);
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= REGULARITY_LIMIT) {
        return Err(NhError::Regularity { condition });
    }
    Ok(())
}

pub fn energy(sys: &LagrangianSystem, s: &State) -> Result<f64> {
    sys.check_state(s)?;
    let e = EnergyMap { n: sys.n, lagrangian: sys.lagrangian.clone() };
    Ok(e.call(&s.coords())[0])
}

/// Gradient of E_L on TQ, in (q, v) coordinates.
pub fn energy_differential(sys: &LagrangianSystem, s: &State) -> Result<Vec<f64>> {
    sys.check_state(s)?;
    let e = SmoothMap::new(EnergyMap { n: sys.n, lagrangian: sys.lagrangian.clone() });
    Ok(gradient_at(&e, &s.coords()))
}

pub fn legendre(sys: &LagrangianSystem, s: &State) -> Result<PhasePoint> {
    sys.check_state(s)?;
    let p = gradient_at(&sys.lagrangian, &s.coords()).split_off(sys.n);
    Ok(PhasePoint { q: s.q.clone(), p })
}

pub fn legendre_inverse(sys: &LagrangianSystem, ph: &PhasePoint) -> Result<State> {
    let m = sys.metric(&ph.q)?;
    check_regular(&m)?;
    let v = m.lu().solve(&DVector::from_column_slice(&ph.p)).ok_or(NhError::Regularity { condition: f64::INFINITY })?;
    Ok(State { q: ph.q.clone(), v: v.iter().copied().collect() })
}

pub fn hamiltonian_map(sys: &LagrangianSystem) -> Result<SmoothMap> {
    let mech = sys.require_mechanical()?;
    Ok(SmoothMap::new(HamiltonianMap { n: sys.n, metric: mech.metric.clone(), potential: mech.potential.clone() }))
}

pub fn hamiltonian(sys: &LagrangianSystem, ph: &PhasePoint) -> Result<f64> {
    let m = sys.metric(&ph.q)?;
    check_regular(&m)?;
    let h = hamiltonian_map(sys)?;
    h.eval(&ph.coords()).map(|v| v[0])
}

/// Matrix Ω of ω_L with ω_L(U, V) = Uᵀ Ω V in (q, v) coordinates:
/// Ω = [[A − Aᵀ, W], [−W, 0]] with A_ij = ∂²L/∂v_i∂q_j.
pub fn lagrangian_two_form(sys: &LagrangianSystem, s: &State) -> Result<DMatrix<f64>> {
    let n = sys.n;
    let a = mixed_block(sys, s)?;
    let w = field_terms(sys, s)?.w;
    let mut om = DMatrix::zeros(2 * n, 2 * n);
    om.view_mut((0, 0), (n, n)).copy_from(&(&a - a.transpose()));
    om.view_mut((0, n), (n, n)).copy_from(&w);
    om.view_mut((n, 0), (n, n)).copy_from(&(-&w));
    Ok(om)
}

/// Free Euler–Lagrange field (v, a) with a = W⁻¹(∂L/∂q − (∂²L/∂v∂q)·v).
pub fn unconstrained_field(sys: &LagrangianSystem, s: &State) -> Result<Vec<f64>> {
    let t = field_terms(sys, s)?;
    check_regular(&t.w)?;
    let rhs = &t.dl_dq - &t.mixed_v;
    let a = t.w.lu().solve(&rhs).ok_or(NhError::Regularity { condition: f64::INFINITY })?;
    let mut out = s.v.clone();
    out.extend(a.iter());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcalc::smooth::Constant;

    struct Oscillator;
    impl MapFn for Oscillator {
        fn arity(&self) -> usize {
            2
        }
        fn coarity(&self) -> usize {
            1
        }
        fn call<T: Scalar>(&self, x: &[T]) -> Vec<T> {
            vec![(x[1].clone() * x[1].clone() - x[0].clone() * x[0].clone()) * 0.5]
        }
    }

    struct Falling;
    impl MapFn for Falling {
        fn arity(&self) -> usize {
            2
        }
        fn coarity(&self) -> usize {
            1
        }
        fn call<T: Scalar>(&self, x: &[T]) -> Vec<T> {
            vec![x[1].clone() * x[1].clone() * 0.5 - x[0].clone()]
        }
    }

    fn free(m: f64) -> LagrangianSystem {
        let metric = SmoothMap::new(Constant { arity: 3, values: vec![m, 0.0, 0.0, 0.0, m, 0.0, 0.0, 0.0, m] });
        let pot = SmoothMap::new(Constant { arity: 3, values: vec![0.0] });
        LagrangianSystem::mechanical(3, metric, pot).unwrap()
    }

    #[test]
    fn kinetic_energy_equals_lagrangian() {
        let sys = free(1.0);
        let s = State::new(vec![0.0; 3], vec![1.0, 2.0, 3.0]);
        assert!((energy(&sys, &s).unwrap() - 7.0).abs() < 1e-14);
    }

    #[test]
    fn potential_adds_to_energy() {
        let sys = LagrangianSystem::new(1, SmoothMap::new(Falling)).unwrap();
        let s = State::new(vec![2.0], vec![3.0]);
        assert!((energy(&sys, &s).unwrap() - 6.5).abs() < 1e-14);
    }

    #[test]
    fn legendre_round_trip() {
        let sys = free(2.0);
        let s = State::new(vec![0.1, 0.2, 0.3], vec![1.0, 0.0, 0.0]);
        let ph = legendre(&sys, &s).unwrap();
        assert_eq!(ph.p, vec![2.0, 0.0, 0.0]);
        let back = legendre_inverse(&sys, &ph).unwrap();
        assert!(back.v.iter().zip(&s.v).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn hamiltonian_of_unit_mass() {
        let sys = free(1.0);
        let ph = PhasePoint { q: vec![0.0; 3], p: vec![1.0, 2.0, 3.0] };
        assert!((hamiltonian(&sys, &ph).unwrap() - 7.0).abs() < 1e-14);
    }

    #[test]
    fn non_mechanical_inverse_is_unsupported() {
        let sys = LagrangianSystem::new(1, SmoothMap::new(Oscillator)).unwrap();
        let ph = PhasePoint { q: vec![0.0], p: vec![1.0] };
        assert!(matches!(legendre_inverse(&sys, &ph), Err(NhError::Unsupported(_))));
    }

    #[test]
    fn canonical_two_form_for_kinetic_lagrangian() {
        let sys = free(1.0);
        let s = State::new(vec![0.3, -0.2, 1.0], vec![0.5, 0.1, -1.0]);
        let om = lagrangian_two_form(&sys, &s).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let expected = if j == i + 3 {
                    1.0
                } else if i == j + 3 {
                    -1.0
                } else {
                    0.0
                };
                assert_eq!(om[(i, j)], expected);
            }
        }
        assert!((om.determinant() - 1.0).abs() < 1e-12);
        let heavy = lagrangian_two_form(&free(2.0), &s).unwrap();
        assert!((heavy.determinant() - 64.0).abs() < 1e-9);
    }

    #[test]
    fn oscillator_acceleration() {
        let sys = LagrangianSystem::new(1, SmoothMap::new(Oscillator)).unwrap();
        let f = unconstrained_field(&sys, &State::new(vec![1.0], vec![0.0])).unwrap();
        assert_eq!(f, vec![0.0, -1.0]);
    }

    #[test]
    fn singular_hessian_is_rejected() {
        let sys = LagrangianSystem::new(1, SmoothMap::new(Constant { arity: 2, values: vec![1.0] })).unwrap();
        let r = unconstrained_field(&sys, &State::new(vec![0.0], vec![1.0]));
        assert!(matches!(r, Err(NhError::Regularity { .. })));
    }
}
