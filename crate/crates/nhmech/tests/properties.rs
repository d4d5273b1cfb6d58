//! Property-based invariants across modules.

use nhmech::constraints::{compatibility_matrix, residual, sample_linear_state};
use nhmech::diffcalc::linalg::max_abs;
use nhmech::diffcalc::{jacobian, SmoothMap};
use nhmech::dynamics::{constrained_field, multiplier_matrix, projector_field};
use nhmech::grid::Grid;
use nhmech::hamjac::{check_hamiltonian_hj, check_hj_condition, legendre_candidate, HJCandidate};
use nhmech::mechanics::{energy, hamiltonian, legendre, legendre_inverse, State};
use nhmech::reduction::{check_round_trip, classify_case, reconstruct};
use nhmech::report::CheckReport;
use nhmech::systems::{self, Candidate, Params, SystemBundle};
use proptest::prelude::*;

fn bundle(name: &str) -> SystemBundle {
    systems::get(name, &Params::new()).unwrap()
}

fn family(c1: f64, c2: f64) -> HJCandidate {
    let b = bundle("free_particle");
    let cp: Params = [("c1".to_string(), c1), ("c2".to_string(), c2)].into();
    match b.candidate("paper_family", &cp).unwrap() {
        Candidate::OnQ(c) => c,
        Candidate::Reduced(_) => unreachable!(),
    }
}

fn state_on(b: &SystemBundle, unit: &[f64], weights: &[f64]) -> State {
    let q: Vec<f64> = b.lo.iter().zip(&b.hi).zip(unit).map(|((lo, hi), u)| lo + (hi - lo) * u).collect();
    sample_linear_state(&b.cs, &q, &weights[..b.n() - b.cs.k()]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn field_matches_projector(
        name in prop::sample::select(vec!["free_particle", "carriage", "horizontal_particle"]),
        unit in prop::collection::vec(0.0f64..1.0, 5),
        weights in prop::collection::vec(-2.0f64..2.0, 5),
    ) {
        let b = bundle(name);
        let s = state_on(&b, &unit, &weights);
        let sys = b.sys().unwrap();
        let f = constrained_field(sys, &b.cs, &s).unwrap();
        let p = projector_field(sys, &b.cs, &s).unwrap();
        for (a, c) in f.acceleration.iter().zip(&p.acceleration) {
            prop_assert!((a - c).abs() < 1e-10);
        }
        // d/dt ψ vanishes along the field
        let z = State::new(
            s.q.iter().zip(&s.v).map(|(q, v)| q + 1e-7 * v).collect(),
            s.v.iter().zip(&f.acceleration).map(|(v, a)| v + 1e-7 * a).collect(),
        );
        prop_assert!(max_abs(&residual(&b.cs, &z).unwrap()) < 1e-9);
    }

    #[test]
    fn multiplier_matrix_is_minus_compatibility(
        unit in prop::collection::vec(0.0f64..1.0, 5),
        weights in prop::collection::vec(-2.0f64..2.0, 5),
    ) {
        let b = bundle("carriage");
        let s = state_on(&b, &unit, &weights);
        let sys = b.sys().unwrap();
        let m = multiplier_matrix(sys, &b.cs, &s).unwrap();
        let c = compatibility_matrix(sys, &b.cs, &s).unwrap();
        prop_assert!((m + c).amax() < 1e-10);
    }

    #[test]
    fn legendre_round_trip_and_energy(
        unit in prop::collection::vec(0.0f64..1.0, 5),
        v in prop::collection::vec(-2.0f64..2.0, 5),
    ) {
        let b = bundle("carriage");
        let sys = b.sys().unwrap();
        let q: Vec<f64> = b.lo.iter().zip(&b.hi).zip(&unit).map(|((lo, hi), u)| lo + (hi - lo) * u).collect();
        let s = State::new(q, v);
        let ph = legendre(sys, &s).unwrap();
        let back = legendre_inverse(sys, &ph).unwrap();
        prop_assert!(back.v.iter().zip(&s.v).all(|(a, b)| (a - b).abs() < 1e-10));
        prop_assert!((hamiltonian(sys, &ph).unwrap() - energy(sys, &s).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn strong_implies_weak(c1 in -2.0f64..2.0, c2 in -2.0f64..2.0, seed in 0u64..1000) {
        let b = bundle("free_particle");
        let grid = Grid::halton(&b.lo, &b.hi, 20, seed).unwrap();
        let x = family(c1, c2);
        let sys = b.sys().unwrap();
        let strong = check_hj_condition(&x, sys, &b.cs, &grid, true, 1e-8).unwrap();
        let weak = check_hj_condition(&x, sys, &b.cs, &grid, false, 1e-8).unwrap();
        prop_assert!(strong.pass);
        prop_assert!(weak.pass);
    }

    #[test]
    fn legendre_duality_on_family(c1 in -2.0f64..2.0, c2 in -2.0f64..2.0) {
        let b = bundle("free_particle");
        let grid = Grid::halton(&b.lo, &b.hi, 20, 7).unwrap();
        let x = family(c1, c2);
        let sys = b.sys().unwrap();
        let sigma = legendre_candidate(sys, &x).unwrap();
        let lag = check_hj_condition(&x, sys, &b.cs, &grid, true, 1e-8).unwrap();
        let ham = check_hamiltonian_hj(&sigma, sys, &b.cs, &grid, true, 1e-8).unwrap();
        prop_assert_eq!(lag.pass, ham.pass);
        prop_assert!((lag.max_residual - ham.info["hj_residual"].as_f64().unwrap()).abs() < 1e-9);
    }

    #[test]
    fn weak_pass_is_strong_on_bracket_generating_particle(c1 in -2.0f64..2.0, c2 in -2.0f64..2.0, scale in -1.0f64..1.0) {
        // X = f·(family) with f = 1 + scale·x: weak and strong verdicts must coincide within 10·tol
        let b = bundle("free_particle");
        let grid = Grid::halton(&b.lo, &b.hi, 20, 3).unwrap();
        let x = HJCandidate::vector_field("scaled", SmoothMap::new(ScaledFamily { c1, c2, scale }));
        let sys = b.sys().unwrap();
        let tol = 1e-8;
        let weak = check_hj_condition(&x, sys, &b.cs, &grid, false, tol).unwrap();
        let strong = check_hj_condition(&x, sys, &b.cs, &grid, true, 10.0 * tol).unwrap();
        prop_assert!(!weak.pass || strong.pass);
    }

    #[test]
    fn reconstruction_round_trip(seed in 0u64..1000, c1 in -2.0f64..2.0, c2 in -2.0f64..2.0) {
        let b = bundle("free_particle");
        let cp: Params = [("c1".to_string(), c1), ("c2".to_string(), c2)].into();
        let Candidate::Reduced(rc) = b.candidate("reduced_family", &cp).unwrap() else { unreachable!() };
        let grid = Grid::halton(&b.lo, &b.hi, 10, seed).unwrap();
        let x = reconstruct(b.action().unwrap(), &rc).unwrap();
        prop_assert!(check_round_trip(b.action().unwrap(), &rc, &x, &grid, 1e-10).unwrap().pass);
        for q in &grid.points {
            let direct = family(c1, c2).map.eval(q).unwrap();
            let rebuilt = x.map.eval(q).unwrap();
            prop_assert!(direct.iter().zip(&rebuilt).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }

    #[test]
    fn report_pass_iff_within_tolerance(rs in prop::collection::vec(0.0f64..2.0, 0..20), tol in 0.0f64..2.0) {
        let mut rep = CheckReport::new("p", tol);
        for (i, r) in rs.iter().enumerate() {
            rep.record(&[i as f64], *r);
        }
        prop_assert_eq!(rep.pass, rep.max_residual <= tol);
        prop_assert_eq!(rep.points_tested, rs.len());
    }

    #[test]
    fn real_and_dual_evaluation_agree(unit in prop::collection::vec(0.0f64..1.0, 5), v in prop::collection::vec(-2.0f64..2.0, 5)) {
        let b = bundle("carriage");
        let q: Vec<f64> = b.lo.iter().zip(&b.hi).zip(&unit).map(|((lo, hi), u)| lo + (hi - lo) * u).collect();
        let mut z = q.clone();
        z.extend(v);
        let l = b.sys().unwrap().lagrangian();
        let (value, _) = nhmech::diffcalc::jvp_at(l, &z, &vec![0.0; 10]);
        prop_assert_eq!(value, l.eval(&z).unwrap());
        prop_assert!(jacobian(l, &z).is_ok());
    }
}

#[test]
fn classification_is_sample_stable() {
    let mut rng = nhmech::grid::rng(21);
    for (name, expected) in
        [("free_particle", "general"), ("carriage", "pure_kinematic"), ("horizontal_particle", "horizontal")]
    {
        let b = bundle(name);
        for _ in 0..20 {
            let unit = nhmech::grid::uniform(&mut rng, 0.0, 1.0, 5);
            let w = nhmech::grid::uniform(&mut rng, -2.0, 2.0, 5);
            let s = state_on(&b, &unit, &w);
            let c = classify_case(b.sys().unwrap(), &b.cs, b.action().unwrap(), &s).unwrap();
            assert_eq!(c.case.name(), expected, "{name}");
        }
    }
}

struct ScaledFamily {
    c1: f64,
    c2: f64,
    scale: f64,
}

impl nhmech::diffcalc::MapFn for ScaledFamily {
    fn arity(&self) -> usize {
        3
    }
    fn coarity(&self) -> usize {
        3
    }
    fn call<T: nhmech::diffcalc::Scalar>(&self, q: &[T]) -> Vec<T> {
        let f = q[0].clone() * self.scale + 1.0;
        let w = (q[1].clone() * q[1].clone() + 1.0).sqrt();
        let a = f.clone() * self.c1 / w;
        vec![a.clone(), f * self.c2, a * q[1].clone()]
    }
}
