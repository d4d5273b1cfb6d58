use nhmech::constraints::sample_linear_state;
use nhmech::diffcalc::smooth::Constant;
use nhmech::diffcalc::SmoothMap;
use nhmech::dynamics::{
    bates_sniatycki_check, constrained_field, hamiltonian_field, integrate, legendre_transport, verify_motion_equation,
};
use nhmech::grid::{rng, uniform, Grid};
use nhmech::hamjac::{base_flow, check_related};
use nhmech::mechanics::{legendre, State};
use nhmech::reduction::noether_check;
use nhmech::systems::{self, Candidate, Params, SystemBundle};

fn bundle(name: &str) -> SystemBundle {
    systems::get(name, &Params::new()).unwrap()
}

fn random_states(b: &SystemBundle, count: usize, seed: u64) -> Vec<State> {
    let mut r = rng(seed);
    Grid::halton(&b.lo, &b.hi, count, seed)
        .unwrap()
        .points
        .iter()
        .map(|q| sample_linear_state(&b.cs, q, &uniform(&mut r, -1.5, 1.5, b.n() - b.cs.k())).unwrap())
        .collect()
}

#[test]
fn particle_run_conserves_energy_and_constraint() {
    let b = bundle("free_particle");
    let t =
        integrate(b.sys().unwrap(), &b.cs, &State::new(vec![0.0; 3], vec![1.0, 0.0, 0.0]), 1e-3, 1000, true).unwrap();
    assert_eq!(t.len(), 1001);
    assert!(t.times.windows(2).all(|w| w[1] > w[0]));
    assert!(t.energy_drift() < 1e-8);
    assert!(t.max_psi() < 1e-7);
}

#[test]
fn unstabilized_residual_stays_small() {
    let b = bundle("carriage");
    let s0 = random_states(&b, 1, 2).remove(0);
    let t = integrate(b.sys().unwrap(), &b.cs, &s0, 1e-3, 2000, false).unwrap();
    // O(dt⁴·steps) with an order-one constant
    assert!(t.max_psi() < 1e-9, "{}", t.max_psi());
}

#[test]
fn motion_equation_holds_on_both_examples() {
    for name in ["free_particle", "carriage"] {
        let b = bundle(name);
        for s in random_states(&b, 50, 4) {
            let rep = verify_motion_equation(b.sys().unwrap(), &b.cs, &s, 1e-9).unwrap();
            assert!(rep.pass, "{name}: {}", rep.to_json());
        }
    }
}

#[test]
fn carriage_hamiltonian_field_is_transported() {
    let b = bundle("carriage");
    let sys = b.sys().unwrap();
    for s in random_states(&b, 20, 5) {
        let ph = legendre(sys, &s).unwrap();
        let hf = hamiltonian_field(sys, &b.cs, &ph).unwrap();
        let f = constrained_field(sys, &b.cs, &s).unwrap();
        let pdot = legendre_transport(sys, &s, &f.acceleration).unwrap();
        assert!(hf.qdot.iter().zip(&s.v).all(|(a, c)| (a - c).abs() < 1e-9));
        assert!(hf.pdot.iter().zip(&pdot).all(|(a, c)| (a - c).abs() < 1e-9));
    }
}

#[test]
fn bates_sniatycki_on_both_examples() {
    for name in ["free_particle", "carriage"] {
        let b = bundle(name);
        for s in random_states(&b, 5, 6) {
            let rep = bates_sniatycki_check(b.sys().unwrap(), &b.cs, b.action().unwrap(), &s, 1e-9).unwrap();
            assert!(rep.pass, "{name}: {}", rep.to_json());
            assert!(rep.info["dim_u"].as_u64().is_some());
        }
    }
}

#[test]
fn related_family_follows_its_integral_curves() {
    let b = bundle("free_particle");
    let Candidate::OnQ(x) = b.candidate("paper_family", &Params::new()).unwrap() else { unreachable!() };
    let sys = b.sys().unwrap();
    let grid = Grid::halton(&b.lo, &b.hi, 20, 1).unwrap();
    assert!(check_related(&x, sys, &b.cs, &grid, 1e-10).unwrap().pass);
    let q0 = vec![0.2, -0.4, 0.1];
    let path = base_flow(&x, &q0, 1e-3, 1000).unwrap();
    let v0 = x.map.eval(&q0).unwrap();
    let traj = integrate(sys, &b.cs, &State::new(q0, v0), 1e-3, 1000, true).unwrap();
    for (p, s) in path.iter().zip(&traj.states) {
        assert!(p.iter().zip(&s.q).all(|(a, c)| (a - c).abs() < 1e-6));
    }
}

#[test]
fn horizontal_fixture_momentum_is_conserved() {
    let b = bundle("horizontal_particle");
    let sys = b.sys().unwrap();
    let traj = integrate(sys, &b.cs, &State::new(vec![0.0; 3], vec![0.8, -0.3, 0.0]), 1e-3, 1000, true).unwrap();
    let xi = SmoothMap::new(Constant { arity: 3, values: vec![1.0, 0.0] });
    let rep = noether_check(sys, b.action().unwrap(), &xi, &traj, 1e-8).unwrap();
    assert!(rep.pass);
    assert!(rep.info["momentum_drift"].as_f64().unwrap() < 1e-7);
}
