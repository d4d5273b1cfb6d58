//! Built-in example systems with default parameters, candidate solutions and
//! reference values.
//!
//! | name | n | constraints | symmetry |
//! |------|---|-------------|----------|
//! | `free_particle` | 3 | ż = yẋ | translations in x, z |
//! | `carriage` | 5 | no lateral sliding, rolling wheels | SE(2) |
//! | `rolling_disk` | 4 | ẋ = Rψ̇cosφ, ẏ = Rψ̇sinφ | none (kinematic) |
//! | `appel_hamel` | 3 | ẋ² + ẏ² = (a²/b²)ż² | none |
//! | `horizontal_particle` | 3 | ż = 0 | translations in x, y |

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSet;
use crate::diffcalc::smooth::{consts, Constant};
use crate::diffcalc::{MapFn, Scalar, SmoothMap};
use crate::error::{NhError, Result};
use crate::hamjac::HJCandidate;
use crate::mechanics::LagrangianSystem;
use crate::reduction::{constraint_lift, GroupActionSpec, QuotientData, ReducedCandidate};

pub type Params = BTreeMap<String, f64>;

pub const NAMES: [&str; 5] = ["free_particle", "carriage", "rolling_disk", "appel_hamel", "horizontal_particle"];

/// Where a reference value comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    /// printed closed form or statement
    Published,
    /// computed by an independent route in this crate's tests
    Oracle,
    /// immediate from the definitions
    Elementary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub name: String,
    pub value: Vec<f64>,
    pub origin: Origin,
    pub tol: f64,
}

#[derive(Clone, Debug)]
pub enum Candidate {
    OnQ(HJCandidate),
    Reduced(ReducedCandidate),
}

#[derive(Clone, Debug)]
pub struct SystemBundle {
    pub name: String,
    pub params: Params,
    pub sys: Option<LagrangianSystem>,
    pub cs: ConstraintSet,
    pub action: Option<GroupActionSpec>,
    /// vector fields spanning the constraint distribution (linear constraints)
    pub distribution: Vec<SmoothMap>,
    /// default configuration box for grids
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub fixtures: Vec<Fixture>,
}

impl SystemBundle {
    pub fn n(&self) -> usize {
        self.cs.n()
    }

    pub fn sys(&self) -> Result<&LagrangianSystem> {
        self.sys.as_ref().ok_or_else(|| NhError::Config(format!("system '{}' has no Lagrangian", self.name)))
    }

    pub fn action(&self) -> Result<&GroupActionSpec> {
        self.action.as_ref().ok_or_else(|| NhError::Config(format!("system '{}' has no symmetry group", self.name)))
    }

    pub fn param(&self, key: &str) -> f64 {
        self.params[key]
    }

    pub fn fixture(&self, name: &str) -> Option<&Fixture> {
        self.fixtures.iter().find(|f| f.name == name)
    }

    pub fn candidate_names(&self) -> &'static [&'static str] {
        match self.name.as_str() {
            "free_particle" => &["paper_family", "reduced_family", "unit_x", "y_along_x", "zero"],
            "carriage" => &["xbar1", "xbar2", "x1_printed", "x2_printed", "const_phi1", "zero"],
            "rolling_disk" => &["zero"],
            "appel_hamel" => &["hand", "zero"],
            "horizontal_particle" => &["constant", "zero"],
            _ => &[],
        }
    }

    /// Build a named candidate; `cp` holds candidate parameters such as c1, c2.
    pub fn candidate(&self, name: &str, cp: &Params) -> Result<Candidate> {
        let n = self.n();
        let get = |k: &str, default: f64| cp.get(k).copied().unwrap_or(default);
        let on_q = |label: &str, map: SmoothMap| Ok(Candidate::OnQ(HJCandidate::vector_field(label, map)));
        if name == "zero" {
            return on_q("zero", SmoothMap::new(Constant { arity: n, values: vec![0.0; n] }));
        }
        match (self.name.as_str(), name) {
            ("free_particle", "paper_family") => {
                on_q(name, SmoothMap::new(ParticleFamily { arity: 3, y: 1, c1: get("c1", 1.0), c2: get("c2", 2.0) }))
            }
            ("free_particle", "reduced_family") => Ok(Candidate::Reduced(ReducedCandidate::invariant_velocity(
                name,
                SmoothMap::new(ParticleFamily { arity: 1, y: 0, c1: get("c1", 1.0), c2: get("c2", 2.0) }),
            ))),
            ("free_particle", "unit_x") => {
                on_q(name, SmoothMap::new(Constant { arity: 3, values: vec![1.0, 0.0, 0.0] }))
            }
            ("free_particle", "y_along_x") => on_q(name, SmoothMap::new(YAlongX)),
            ("carriage", "xbar1") | ("carriage", "xbar2") => {
                let (k, r) = carriage_rates(&self.params);
                let field = if name == "xbar1" {
                    ExpField { arity: 2, dim: 2, rate: k / r, src: 1, dst: 0 }
                } else {
                    ExpField { arity: 2, dim: 2, rate: -k / r, src: 0, dst: 1 }
                };
                Ok(Candidate::Reduced(ReducedCandidate::base_field(name, SmoothMap::new(field))))
            }
            ("carriage", "x1_printed") | ("carriage", "x2_printed") => {
                let (k, r) = carriage_rates(&self.params);
                let (rate, src) = if name == "x1_printed" { (k / r, 4) } else { (-k / r, 3) };
                let a = self.param("a");
                let half_axle = self.param("r");
                on_q(name, SmoothMap::new(PrintedCarriageField { rate, src, a, r: half_axle }))
            }
            ("carriage", "const_phi1") => Ok(Candidate::Reduced(ReducedCandidate::base_field(
                name,
                SmoothMap::new(Constant { arity: 2, values: vec![get("c", 1.0), 0.0] }),
            ))),
            ("appel_hamel", "hand") => {
                on_q(name, SmoothMap::new(AppelHamelHand { ratio: self.param("b") / self.param("a") }))
            }
            ("horizontal_particle", "constant") => {
                on_q(name, SmoothMap::new(Constant { arity: 3, values: vec![get("c1", 1.0), get("c2", 0.5), 0.0] }))
            }
            _ => Err(NhError::Config(format!("system '{}' has no candidate '{}'", self.name, name))),
        }
    }

    /// Map ξ̃: Q → 𝔤 with ξ̃(q) ∈ 𝔤^q, used for the nonholonomic momentum.
    pub fn momentum_section(&self) -> Result<SmoothMap> {
        let d = self.action()?.dim_g();
        let n = self.n();
        Ok(match self.name.as_str() {
            "free_particle" => SmoothMap::new(ParticleMomentumSection),
            "horizontal_particle" => SmoothMap::new(Constant { arity: n, values: vec![1.0, 0.0] }),
            // 𝔤^q = 0 for the carriage
            _ => SmoothMap::new(Constant { arity: n, values: vec![0.0; d] }),
        })
    }
}

fn defaults(name: &str) -> Option<&'static [(&'static str, f64)]> {
    Some(match name {
        "free_particle" | "horizontal_particle" => &[("m", 1.0)],
        "carriage" => &[("m", 4.0), ("m0", 1.0), ("l", 1.0), ("J", 1.0), ("C", 1.0), ("a", 1.0), ("r", 1.0)],
        "rolling_disk" => &[("R", 1.0)],
        "appel_hamel" => &[("a", 1.0), ("b", 1.0)],
        _ => return None,
    })
}

/// Merge user parameters into the defaults, rejecting unknown keys and nonpositive values.
pub fn resolve_params(name: &str, params: &Params) -> Result<Params> {
    let defs = defaults(name)
        .ok_or_else(|| NhError::Config(format!("unknown system '{}'; known systems: {}", name, NAMES.join(", "))))?;
    let mut out: Params = defs.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    for (k, v) in params {
        if !out.contains_key(k) {
            return Err(NhError::Config(format!("system '{name}' has no parameter '{k}'")));
        }
        if !(v.is_finite() && *v > 0.0) {
            return Err(NhError::Config(format!("parameter '{k}' must be positive, got {v}")));
        }
        out.insert(k.clone(), *v);
    }
    Ok(out)
}

pub fn get(name: &str, params: &Params) -> Result<SystemBundle> {
    let p = resolve_params(name, params)?;
    match name {
        "free_particle" => free_particle(p),
        "carriage" => carriage(p),
        "rolling_disk" => rolling_disk(p),
        "appel_hamel" => appel_hamel(p),
        "horizontal_particle" => horizontal_particle(p),
        _ => unreachable!("resolve_params rejects unknown names"),
    }
}

fn translation(n: usize, axis: usize) -> SmoothMap {
    let mut values = vec![0.0; n];
    values[axis] = 1.0;
    SmoothMap::new(Constant { arity: n, values })
}

fn scaled_identity(n: usize, m: f64) -> SmoothMap {
    let values = (0..n * n).map(|i| if i % (n + 1) == 0 { m } else { 0.0 }).collect();
    SmoothMap::new(Constant { arity: n, values })
}

fn zero_potential(n: usize) -> SmoothMap {
    SmoothMap::new(Constant { arity: n, values: vec![0.0] })
}

/// Coordinate projection onto `keep` together with its section (other coordinates zero).
fn coordinate_quotient(n: usize, keep: &[usize], hlift: Option<SmoothMap>) -> QuotientData {
    let d = keep.len();
    let mut jac = vec![0.0; d * n];
    for (a, &i) in keep.iter().enumerate() {
        jac[a * n + i] = 1.0;
    }
    QuotientData {
        dim: d,
        project: SmoothMap::new(Pick { n, keep: keep.to_vec() }),
        project_jacobian: SmoothMap::new(Constant { arity: n, values: jac }),
        section: SmoothMap::new(Embed { n, keep: keep.to_vec() }),
        hlift,
        transport: None,
    }
}

struct Pick {
    n: usize,
    keep: Vec<usize>,
}

impl MapFn for Pick {
    fn arity(&self) -> usize {
        self.n
    }
    fn coarity(&self) -> usize {
        self.keep.len()
    }
    fn call<T: Scalar>(&self, q: &[T]) -> Vec<T> {
        self.keep.iter().map(|&i| q[i].clone()).collect()
    }
}

struct Embed {
    n: usize,
    keep: Vec<usize>,
}

impl MapFn for Embed {
    fn arity(&self) -> usize {
        self.keep.len()
    }
    fn coarity(&self) -> usize {
        self.n
    }
    fn call<T: Scalar>(&self, qbar: &[T]) -> Vec<T> {
        let mut q = vec![T::zero(); self.n];
        for (a, &i) in self.keep.iter().enumerate() {
            q[i] = qbar[a].clone();
        }
        q
    }
}

// ---------------------------------------------------------------- free particle

/// Constraint row (−y, 0, 1) of ż − yẋ.
struct ParticleCoeff;

impl MapFn for ParticleCoeff {
    fn arity(&self) -> usize {
        3
    }
    fn coarity(&self) -> usize {
        3
    }
    fn call<T: Scalar>(&self, q: &[T]) -> Vec<T> {
        vec![-q[1].clone(), T::zero(), T::one()]
    }
}

/// ∂x + y∂z
struct ParticleXi1;

impl MapFn for ParticleXi1 {
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

/// (c₁/√(1+y²), c₂, c₁y/√(1+y²)) with y read from position `y` of the argument.
pub struct ParticleFamily {
    pub arity: usize,
    pub y: usize,
    pub c1: f64,
    pub c2: f64,
}

impl MapFn for ParticleFamily {
    fn arity(&self) -> usize {
        self.arity
    }
    fn coarity(&self) -> usize {
        3
    }
    fn call<T: Scalar>(&self, q: &[T]) -> Vec<T> {
        let y = q[self.y].clone();
        let w = (y.clone() * y.clone() + 1.0).sqrt();
        let a = T::from(self.c1) / w;
        vec![a.clone(), T::from(self.c2), a * y]
    }
}

/// ξ̃(q) = (1, y): the combination ∂x + y∂z of the two translations.
struct ParticleMomentumSection;

impl MapFn for ParticleMomentumSection {
    fn arity(&self) -> usize {
        3
    }
    fn coarity(&self) -> usize {
        2
    }
    fn call<T: Scalar>(&self, q: &[T]) -> Vec<T> {
        vec![T::one(), q[1].clone()]
    }
}

struct YAlongX;

impl MapFn for YAlongX {
    fn arity(&self) -> usize {
        3
    }
    fn coarity(&self) -> usize {
        3
    }
    fn call<T: Scalar>(&self, q: &[T]) -> Vec<T> {
        vec![q[1].clone(), T::zero(), T::zero()]
    }
}

fn free_particle(p: Params) -> Result<SystemBundle> {
    let m = p["m"];
    let sys = LagrangianSystem::mechanical(3, scaled_identity(3, m), zero_potential(3))?;
    let cs = ConstraintSet::from_coefficients(3, 1, SmoothMap::new(ParticleCoeff))?;
    let action = GroupActionSpec::new(vec![translation(3, 0), translation(3, 2)])
        .with_structure_constants(vec![0.0; 8])
        .with_quotient(coordinate_quotient(3, &[1], None));
    let fixtures = vec![
        Fixture {
            name: "family_energy_c1_1_c2_2".into(),
            value: vec![0.5 * m * 5.0],
            origin: Origin::Oracle,
            tol: 1e-12,
        },
        Fixture {
            name: "acceleration_at_q010_v111".into(),
            value: vec![-0.5, 0.0, 0.5],
            origin: Origin::Oracle,
            tol: 1e-12,
        },
        Fixture { name: "multiplier_at_q010_v111".into(), value: vec![0.5 * m], origin: Origin::Oracle, tol: 1e-12 },
        Fixture { name: "compatibility_at_y2".into(), value: vec![-5.0 / m], origin: Origin::Oracle, tol: 1e-10 },
        Fixture { name: "chow_growth".into(), value: vec![2.0, 3.0], origin: Origin::Published, tol: 0.0 },
    ];
    Ok(SystemBundle {
        name: "free_particle".into(),
        params: p,
        sys: Some(sys),
        cs,
        action: Some(action),
        distribution: vec![SmoothMap::new(ParticleXi1), translation(3, 1)],
        lo: vec![-1.0, -3.0, -1.0],
        hi: vec![1.0, 3.0, 1.0],
        fixtures,
    })
}

// ---------------------------------------------------------------- carriage

/// K = m₀la³/4r² and R = ¼ma² + Ja²/4r² + C.
pub fn carriage_rates(p: &Params) -> (f64, f64) {
    let (m, m0, l, j, c, a, r) = (p["m"], p["m0"], p["l"], p["J"], p["C"], p["a"], p["r"]);
    let k = m0 * l * a.powi(3) / (4.0 * r * r);
    let rr = 0.25 * m * a * a + j * a * a / (4.0 * r * r) + c;
    (k, rr)
}

struct CarriageLagrangian {
    m: f64,
    m0l: f64,
    j: f64,
    c: f64,
}

impl MapFn for CarriageLagrangian {
    fn arity(&self) -> usize {
        10
    }
    fn coarity(&self) -> usize {
        1
    }
    fn call<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let phi = x[2].clone();
        let (dx, dy, dphi, d1, d2) = (x[5].clone(), x[6].clone(), x[7].clone(), x[8].clone(), x[9].clone());
        let trans = (dx.clone() * dx.clone() + dy.clone() * dy.clone()) * (0.5 * self.m);
        let coupling = dphi.clone() * (dy * phi.cos() - dx * phi.sin()) * self.m0l;
        let spin = dphi.clone() * dphi * (0.5 * self.j);
        let wheels = (d1.clone() * d1 + d2.clone() * d2) * (0.5 * self.c);
        vec![trans + coupling + spin + wheels]
    }
}

struct CarriageMetric {
    m: f64,
    m0l: f64,
    j: f64,
    c: f64,
}

impl MapFn for CarriageMetric {
    fn arity(&self) -> usize {
        5
    }
    fn coarity(&self) -> usize {
        25
    }
    fn call<T: Scalar>(&self, q: &[T]) -> Vec<T> {
        let phi = q[2].clone();
        let mut out = vec![T::zero(); 25];
        out[0] = T::from(self.m);
        out[6] = T::from(self.m);
        out[12] = T::from(self.j);
        out[18] = T::from(self.c);
        out[24] = T::from(self.c);
        let xs = -(phi.sin() * self.m0l);
        let ys = phi.cos() * self.m0l;
        out[2] = xs.clone();
        out[10] = xs;
        out[7] = ys.clone();
        out[11] = ys;
        out
    }
}

/// Rows of ψ¹, ψ², ψ³ as coefficients of (ẋ, ẏ, φ̇, φ̇₁, φ̇₂).
struct CarriageCoeff {
    a: f64,
    r: f64,
}

impl MapFn for CarriageCoeff {
    fn arity(&self) -> usize {
        5
    }
    fn coarity(&self) -> usize {
        15
    }
    fn call<T: Scalar>(&self, q: &[T]) -> Vec<T> {
        let phi = q[2].clone();
        let hc = phi.cos() * (0.5 * self.a);
        let hs = phi.sin() * (0.5 * self.a);
        let w = self.a / (2.0 * self.r);
        let mut out: Vec<T> = consts(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, w, -w]);
        out[3] = hc.clone();
        out[4] = hc;
        out[8] = hs.clone();
        out[9] = hs;
        out
    }
}

/// ξ₁ (side = −1) and ξ₂ (side = +1) spanning the carriage constraint distribution.
struct CarriageXi {
    a: f64,
    r: f64,
    side: f64,
}

impl MapFn for CarriageXi {
    fn arity(&self) -> usize {
        5
    }
    fn coarity(&self) -> usize {
        5
    }
    fn call<T: Scalar>(&self, q: &[T]) -> Vec<T> {
        let phi = q[2].clone();
        let left = self.side < 0.0;
        vec![
            -(phi.cos() * (0.5 * self.a)),
            -(phi.sin() * (0.5 * self.a)),
            T::from(self.side * self.a / (2.0 * self.r)),
            T::from(if left { 1.0 } else { 0.0 }),
            T::from(if left { 0.0 } else { 1.0 }),
        ]
    }
}

/// Rotation generator −y∂x + x∂y + ∂φ.
struct PlaneRotation;

impl MapFn for PlaneRotation {
    fn arity(&self) -> usize {
        5
    }
    fn coarity(&self) -> usize {
        5
    }
    fn call<T: Scalar>(&self, q: &[T]) -> Vec<T> {
        vec![-q[1].clone(), q[0].clone(), T::one(), T::zero(), T::zero()]
    }
}

/// e^{rate·x[src]} ∂_dst.
pub struct ExpField {
    pub arity: usize,
    pub dim: usize,
    pub rate: f64,
    pub src: usize,
    pub dst: usize,
}

impl MapFn for ExpField {
    fn arity(&self) -> usize {
        self.arity
    }
    fn coarity(&self) -> usize {
        self.dim
    }
    fn call<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        out[self.dst] = (x[self.src].clone() * self.rate).exp();
        out
    }
}

/// The unreduced fields as printed: e^{rate·q[src]}(∂φ₁ − a cosφ ∂x − a sinφ ∂y − (a/r)∂φ).
struct PrintedCarriageField {
    rate: f64,
    src: usize,
    a: f64,
    r: f64,
}

impl MapFn for PrintedCarriageField {
    fn arity(&self) -> usize {
        5
    }
    fn coarity(&self) -> usize {
        5
    }
    fn call<T: Scalar>(&self, q: &[T]) -> Vec<T> {
        let f = (q[self.src].clone() * self.rate).exp();
        let phi = q[2].clone();
        vec![
            -(f.clone() * phi.cos() * self.a),
            -(f.clone() * phi.sin() * self.a),
            -(f.clone() * (self.a / self.r)),
            f,
            T::zero(),
        ]
    }
}

/// Horizontal lifts with the printed coefficients: (∂φ₁)ʰ, (∂φ₂)ʰ with −a cosφ, −a sinφ, ∓a/r.
pub struct PrintedLift {
    pub a: f64,
    pub r: f64,
}

impl MapFn for PrintedLift {
    fn arity(&self) -> usize {
        7
    }
    fn coarity(&self) -> usize {
        5
    }
    fn call<T: Scalar>(&self, y: &[T]) -> Vec<T> {
        let phi = y[2].clone();
        let (w1, w2) = (y[5].clone(), y[6].clone());
        let s = w1.clone() + w2.clone();
        vec![
            -(s.clone() * phi.cos() * self.a),
            -(s * phi.sin() * self.a),
            (w2.clone() - w1.clone()) * (self.a / self.r),
            w1,
            w2,
        ]
    }
}

fn carriage(p: Params) -> Result<SystemBundle> {
    let (m, m0, l, j, c, a, r) = (p["m"], p["m0"], p["l"], p["J"], p["C"], p["a"], p["r"]);
    if m * j <= (m0 * l) * (m0 * l) {
        return Err(NhError::Config(format!(
            "carriage needs m·J > (m0·l)² for a positive-definite kinetic energy, got m·J = {} and (m0·l)² = {}",
            m * j,
            (m0 * l) * (m0 * l)
        )));
    }
    let m0l = m0 * l;
    let lag = SmoothMap::new(CarriageLagrangian { m, m0l, j, c });
    let sys = LagrangianSystem::new(5, lag)?
        .with_mechanical(SmoothMap::new(CarriageMetric { m, m0l, j, c }), zero_potential(5))?;
    let cs = ConstraintSet::from_coefficients(5, 3, SmoothMap::new(CarriageCoeff { a, r }))?;
    let mut quotient = coordinate_quotient(5, &[3, 4], None);
    quotient.hlift = Some(constraint_lift(&cs, 2, &quotient.project_jacobian)?);
    // [ξx, ξrot] = ξy and [ξy, ξrot] = −ξx
    let mut sc = vec![0.0; 27];
    sc[(0 * 3 + 2) * 3 + 1] = 1.0;
    sc[(2 * 3 + 0) * 3 + 1] = -1.0;
    sc[(1 * 3 + 2) * 3 + 0] = -1.0;
    sc[(2 * 3 + 1) * 3 + 0] = 1.0;
    let action = GroupActionSpec::new(vec![translation(5, 0), translation(5, 1), SmoothMap::new(PlaneRotation)])
        .with_structure_constants(sc)
        .with_quotient(quotient);
    let (k, rr) = carriage_rates(&p);
    let fixtures = vec![
        Fixture {
            name: "chow_growth_depth4".into(),
            value: vec![2.0, 3.0, 4.0, 4.0],
            origin: Origin::Published,
            tol: 0.0,
        },
        Fixture { name: "gyro_at_v10".into(), value: vec![0.0, -k], origin: Origin::Published, tol: 1e-8 },
        Fixture { name: "rates".into(), value: vec![k, rr], origin: Origin::Published, tol: 1e-15 },
        Fixture {
            name: "xi3_at_phi0".into(),
            value: vec![0.0, 0.5 * a * a / r, 0.0, 0.0, 0.0],
            origin: Origin::Oracle,
            tol: 1e-12,
        },
    ];
    Ok(SystemBundle {
        name: "carriage".into(),
        params: p,
        sys: Some(sys),
        cs,
        action: Some(action),
        distribution: vec![
            SmoothMap::new(CarriageXi { a, r, side: -1.0 }),
            SmoothMap::new(CarriageXi { a, r, side: 1.0 }),
        ],
        lo: vec![-2.0, -2.0, -std::f64::consts::PI, -2.0, -2.0],
        hi: vec![2.0, 2.0, std::f64::consts::PI, 2.0, 2.0],
        fixtures,
    })
}

/// Closed forms displayed for the carriage, used as references.
pub mod carriage_forms {
    use super::{carriage_rates, Params};

    /// [ξ₁, ξ₂] as displayed, with the 1/r² factor.
    pub fn xi3_printed(p: &Params, q: &[f64]) -> Vec<f64> {
        let (a, r) = (p["a"], p["r"]);
        let phi = q[2];
        vec![-a * a * phi.sin() / (2.0 * r * r), a * a * phi.cos() / (2.0 * r * r), 0.0, 0.0, 0.0]
    }

    /// [ξ₁, ξ₂] as it follows from the displayed ξ₁, ξ₂ (factor 1/r).
    pub fn xi3(p: &Params, q: &[f64]) -> Vec<f64> {
        let (a, r) = (p["a"], p["r"]);
        let phi = q[2];
        vec![-a * a * phi.sin() / (2.0 * r), a * a * phi.cos() / (2.0 * r), 0.0, 0.0, 0.0]
    }

    /// [ξ₁, ξ₃] as displayed.
    pub fn xi4_printed(p: &Params, q: &[f64]) -> Vec<f64> {
        let (a, r) = (p["a"], p["r"]);
        let phi = q[2];
        vec![a.powi(3) * phi.cos() / (4.0 * r * r), a.powi(3) * phi.sin() / (4.0 * r * r), 0.0, 0.0, 0.0]
    }

    /// L*(φ₁, φ₂, φ̇₁, φ̇₂) as displayed.
    pub fn reduced_lagrangian(p: &Params, vbar: &[f64]) -> f64 {
        let (m, j, c, a, r) = (p["m"], p["J"], p["C"], p["a"], p["r"]);
        let (d1, d2) = (vbar[0], vbar[1]);
        m * a * a / 8.0 * (d1 + d2).powi(2)
            + j * a * a / (8.0 * r * r) * (d2 - d1).powi(2)
            + 0.5 * c * (d1 * d1 + d2 * d2)
    }

    /// ᾱ components (dφ₁, dφ₂) as displayed.
    pub fn alpha_printed(p: &Params, vbar: &[f64]) -> Vec<f64> {
        let (k, _) = carriage_rates(p);
        let (d1, d2) = (vbar[0], vbar[1]);
        vec![k * (d2 - d1) * d2, -k * (d1 - d2) * d1]
    }
}

// ---------------------------------------------------------------- rolling disk

/// Rows of ẋ − Rψ̇cosφ and ẏ − Rψ̇sinφ in coordinates (x, y, φ, ψ).
struct DiskCoeff {
    radius: f64,
}

impl MapFn for DiskCoeff {
    fn arity(&self) -> usize {
        4
    }
    fn coarity(&self) -> usize {
        8
    }
    fn call<T: Scalar>(&self, q: &[T]) -> Vec<T> {
        let phi = q[2].clone();
        let mut out: Vec<T> = consts(&[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        out[3] = -(phi.cos() * self.radius);
        out[7] = -(phi.sin() * self.radius);
        out
    }
}

/// R cosφ ∂x + R sinφ ∂y + ∂ψ.
struct DiskRoll {
    radius: f64,
}

impl MapFn for DiskRoll {
    fn arity(&self) -> usize {
        4
    }
    fn coarity(&self) -> usize {
        4
    }
    fn call<T: Scalar>(&self, q: &[T]) -> Vec<T> {
        let phi = q[2].clone();
        vec![phi.cos() * self.radius, phi.sin() * self.radius, T::zero(), T::one()]
    }
}

fn rolling_disk(p: Params) -> Result<SystemBundle> {
    let radius = p["R"];
    let cs = ConstraintSet::from_coefficients(4, 2, SmoothMap::new(DiskCoeff { radius }))?;
    Ok(SystemBundle {
        name: "rolling_disk".into(),
        params: p,
        sys: None,
        cs,
        action: None,
        distribution: vec![translation(4, 2), SmoothMap::new(DiskRoll { radius })],
        lo: vec![-2.0, -2.0, -std::f64::consts::PI, -2.0],
        hi: vec![2.0, 2.0, std::f64::consts::PI, 2.0],
        fixtures: vec![Fixture {
            name: "chow_growth".into(),
            value: vec![2.0, 3.0, 4.0],
            origin: Origin::Oracle,
            tol: 0.0,
        }],
    })
}

// ---------------------------------------------------------------- Appel–Hamel

/// ẋ² + ẏ² − (a²/b²)ż².
struct AppelHamelPsi {
    ratio2: f64,
}

impl MapFn for AppelHamelPsi {
    fn arity(&self) -> usize {
        6
    }
    fn coarity(&self) -> usize {
        1
    }
    fn call<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let (vx, vy, vz) = (x[3].clone(), x[4].clone(), x[5].clone());
        vec![vx.clone() * vx + vy.clone() * vy - vz.clone() * vz * self.ratio2]
    }
}

/// (cos y, sin y, b/a): unit horizontal speed, on the constraint cone.
struct AppelHamelHand {
    ratio: f64,
}

impl MapFn for AppelHamelHand {
    fn arity(&self) -> usize {
        3
    }
    fn coarity(&self) -> usize {
        3
    }
    fn call<T: Scalar>(&self, q: &[T]) -> Vec<T> {
        vec![q[1].cos(), q[1].sin(), T::from(self.ratio)]
    }
}

/// The constraint comes without a Lagrangian; a unit-mass kinetic energy stands in
/// so that checks needing ω_L can run.
fn appel_hamel(p: Params) -> Result<SystemBundle> {
    let ratio2 = (p["a"] / p["b"]).powi(2);
    let cs = ConstraintSet::nonlinear(3, SmoothMap::new(AppelHamelPsi { ratio2 }))?;
    let sys = LagrangianSystem::mechanical(3, scaled_identity(3, 1.0), zero_potential(3))?;
    Ok(SystemBundle {
        name: "appel_hamel".into(),
        params: p,
        sys: Some(sys),
        cs,
        action: None,
        distribution: Vec::new(),
        lo: vec![-1.0, -3.0, -1.0],
        hi: vec![1.0, 3.0, 1.0],
        fixtures: Vec::new(),
    })
}

// ---------------------------------------------------------------- horizontal particle

struct VerticalCoeff;

impl MapFn for VerticalCoeff {
    fn arity(&self) -> usize {
        3
    }
    fn coarity(&self) -> usize {
        3
    }
    fn call<T: Scalar>(&self, _: &[T]) -> Vec<T> {
        consts(&[0.0, 0.0, 1.0])
    }
}

/// Free particle with ż = 0 and the x, y translations: a fixture where 𝒱_N ⊆ ℋ.
fn horizontal_particle(p: Params) -> Result<SystemBundle> {
    let m = p["m"];
    let sys = LagrangianSystem::mechanical(3, scaled_identity(3, m), zero_potential(3))?;
    let cs = ConstraintSet::from_coefficients(3, 1, SmoothMap::new(VerticalCoeff))?;
    let action = GroupActionSpec::new(vec![translation(3, 0), translation(3, 1)])
        .with_structure_constants(vec![0.0; 8])
        .with_quotient(coordinate_quotient(3, &[2], None));
    Ok(SystemBundle {
        name: "horizontal_particle".into(),
        params: p,
        sys: Some(sys),
        cs,
        action: Some(action),
        distribution: vec![translation(3, 0), translation(3, 1)],
        lo: vec![-1.0, -1.0, -1.0],
        hi: vec![1.0, 1.0, 1.0],
        fixtures: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{
        check_admissibility, compatibility_matrix, constraint_distribution, residual, sample_linear_state,
    };
    use crate::diffcalc::linalg::max_abs;
    use crate::grid::{rng, uniform};
    use crate::mechanics::State;

    fn defaults_of(name: &str) -> SystemBundle {
        get(name, &Params::new()).unwrap()
    }

    #[test]
    fn unknown_names_and_keys_are_rejected() {
        assert!(matches!(get("pendulum", &Params::new()), Err(NhError::Config(_))));
        let bad_key: Params = [("mass".to_string(), 1.0)].into();
        assert!(matches!(get("free_particle", &bad_key), Err(NhError::Config(_))));
        let nonpositive: Params = [("m".to_string(), 0.0)].into();
        assert!(matches!(get("free_particle", &nonpositive), Err(NhError::Config(_))));
        let indefinite: Params = [("m0".to_string(), 3.0)].into();
        assert!(matches!(get("carriage", &indefinite), Err(NhError::Config(_))));
    }

    #[test]
    fn rolling_disk_has_two_linear_constraints() {
        let b = defaults_of("rolling_disk");
        assert_eq!((b.cs.n(), b.cs.k()), (4, 2));
        assert!(b.cs.is_linear() && b.sys.is_none());
        let q = [0.0, 0.0, 0.4, 0.0];
        let v = [2.0 * 0.4f64.cos(), 2.0 * 0.4f64.sin(), 0.7, 2.0];
        assert!(max_abs(&residual(&b.cs, &State::new(q.to_vec(), v.to_vec())).unwrap()) < 1e-15);
    }

    #[test]
    fn carriage_rows_match_displayed_one_forms() {
        let b = defaults_of("carriage");
        let phi: f64 = 0.7;
        let c = b.cs.coefficients(&[0.1, -0.2, phi, 0.3, 0.4]).unwrap();
        let h = 0.5 * phi.cos();
        let expected =
            [[1.0, 0.0, 0.0, h, h], [0.0, 1.0, 0.0, 0.5 * phi.sin(), 0.5 * phi.sin()], [0.0, 0.0, 1.0, 0.5, -0.5]];
        for (i, row) in expected.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                assert!((c[(i, j)] - e).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn carriage_lagrangian_is_its_kinetic_energy() {
        let b = defaults_of("carriage");
        let sys = b.sys().unwrap();
        let mut r = rng(3);
        for _ in 0..10 {
            let s = State::new(uniform(&mut r, -2.0, 2.0, 5), uniform(&mut r, -2.0, 2.0, 5));
            let w = sys.metric(&s.q).unwrap();
            let v = nalgebra::DVector::from_vec(s.v.clone());
            let kinetic = 0.5 * v.dot(&(&w * &v));
            assert!((sys.value(&s).unwrap() - kinetic).abs() < 1e-12);
        }
    }

    #[test]
    fn bundles_are_admissible_and_compatible() {
        let mut r = rng(11);
        for name in ["free_particle", "carriage", "horizontal_particle"] {
            let b = defaults_of(name);
            let sys = b.sys().unwrap();
            for _ in 0..20 {
                let q = b.lo.iter().zip(&b.hi).map(|(lo, hi)| uniform(&mut r, *lo, *hi, 1)[0]).collect::<Vec<_>>();
                let w = uniform(&mut r, -1.0, 1.0, b.n() - b.cs.k());
                let s = sample_linear_state(&b.cs, &q, &w).unwrap();
                assert!(check_admissibility(&b.cs, &s, 1e-8).unwrap().pass);
                let c = compatibility_matrix(sys, &b.cs, &s).unwrap();
                assert!(c.determinant().abs() > 1e-6, "{name}");
            }
        }
    }

    #[test]
    fn appel_hamel_admissible_away_from_rest() {
        let b = defaults_of("appel_hamel");
        let s = State::new(vec![0.0, 0.3, 0.0], vec![0.3f64.cos(), 0.3f64.sin(), 1.0]);
        assert!(max_abs(&residual(&b.cs, &s).unwrap()) < 1e-15);
        assert!(check_admissibility(&b.cs, &s, 1e-8).unwrap().pass);
    }

    #[test]
    fn distribution_fields_span_the_constraint_kernel() {
        for name in ["free_particle", "carriage", "rolling_disk", "horizontal_particle"] {
            let b = defaults_of(name);
            let q: Vec<f64> = (0..b.n()).map(|i| 0.2 + 0.1 * i as f64).collect();
            let s = State::new(q.clone(), vec![0.0; b.n()]);
            let kernel = constraint_distribution(&b.cs, &s).unwrap();
            assert_eq!(kernel.dim(), b.distribution.len(), "{name}");
            for f in &b.distribution {
                assert!(kernel.contains(&f.eval(&q).unwrap(), 1e-12), "{name}");
            }
        }
    }

    #[test]
    fn every_listed_candidate_builds() {
        for name in NAMES {
            let b = defaults_of(name);
            for c in b.candidate_names() {
                b.candidate(c, &Params::new()).unwrap();
            }
            assert!(b.candidate("nonexistent", &Params::new()).is_err());
        }
    }

    #[test]
    fn printed_forms_agree_with_corrected_ones_at_unit_geometry() {
        let b = defaults_of("carriage");
        let q = [0.0, 0.0, 0.9, 0.0, 0.0];
        let d: Vec<f64> = carriage_forms::xi3(&b.params, &q)
            .iter()
            .zip(carriage_forms::xi3_printed(&b.params, &q))
            .map(|(a, c)| a - c)
            .collect();
        assert!(max_abs(&d) < 1e-15);
        let p: Params = [("r".to_string(), 2.0)].into();
        let b2 = get("carriage", &p).unwrap();
        let d2 = carriage_forms::xi3(&b2.params, &q)[1] - carriage_forms::xi3_printed(&b2.params, &q)[1];
        assert!(d2.abs() > 1e-3);
    }

    #[test]
    fn fixtures_carry_origin_and_tolerance() {
        for name in NAMES {
            for f in &defaults_of(name).fixtures {
                assert!(f.tol >= 0.0 && !f.value.is_empty());
            }
        }
        let b = defaults_of("free_particle");
        assert_eq!(b.fixture("family_energy_c1_1_c2_2").unwrap().value, vec![2.5]);
    }
}
