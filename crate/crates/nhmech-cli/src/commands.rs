//! The three subcommands. Each returns Ok(pass) or an error carrying its exit code.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use nhmech::constraints::{chow_sweep, require_on_n, sample_linear_state};
use nhmech::dynamics::{bates_sniatycki_check, integrate};
use nhmech::grid::{rng, uniform, Grid};
use nhmech::hamjac::{
    check_closedness_linear, check_forced_hj, check_hamiltonian_hj, check_hj_condition, check_in_n,
    check_nonlinear_pullback, check_related, legendre_candidate, HJCandidate, Sign, ZeroForce,
};
use nhmech::mechanics::State;
use nhmech::reduction::{
    chaplygin_reduce, check_horizontal_mu, check_reduced_hj, check_round_trip, classify_case, noether_check,
    reconstruct, section_reduce, ReducedCandidate, ReducedKind, ReducedSystem, ReducedVariant, ReductionRoute,
    SymmetryCase,
};
use nhmech::report::{self, CheckReport};
use nhmech::systems::{self, Candidate, Params, SystemBundle};
use serde::Serialize;

use crate::config::{resolve_common, Resolved, Settings};
use crate::error::CliError;
use crate::{CheckArgs, ReduceArgs, SimulateArgs};

const CHECK_NAMES: [&str; 13] = [
    "in_N",
    "closedness",
    "hj_weak",
    "hj_strong",
    "related",
    "forced",
    "hamiltonian",
    "reduced",
    "horizontal_mu",
    "classify",
    "chow",
    "noether",
    "bates",
];

/// Rank threshold for bracket flags.
const RANK_TOL: f64 = 1e-8;
/// Default tolerance for on-N tests of initial states.
const STATE_TOL: f64 = 1e-9;
const CHECK_TOL: f64 = 1e-8;
const RELATED_TOL: f64 = 1e-7;
const ROUND_TRIP_TOL: f64 = 1e-10;

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, bytes)?,
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn emit_json(out: Option<&Path>, json: String) -> Result<(), CliError> {
    let mut text = json;
    text.push('\n');
    emit(out, text.as_bytes())
}

fn bundle(r: &Resolved) -> Result<SystemBundle, CliError> {
    Ok(systems::get(&r.system, &r.params)?)
}

fn sized(v: Vec<f64>, n: usize, key: &str) -> Result<Vec<f64>, CliError> {
    if v.len() != n {
        return Err(CliError::Config(format!("{key} needs {n} components, got {}", v.len())));
    }
    Ok(v)
}

// ---------------------------------------------------------------- simulate

const SIMULATE_KEYS: &[&str] = &["q0", "v0", "dt", "steps", "no_stabilize"];

pub fn simulate(a: &SimulateArgs) -> Result<bool, CliError> {
    let settings = Settings::load(&a.common, SIMULATE_KEYS)?;
    let r = resolve_common(&a.common, &settings, STATE_TOL)?;
    let b = bundle(&r)?;
    let sys = b.sys()?;
    let n = b.n();
    let q0 = sized(settings.vector(&a.q0, "q0")?.unwrap_or_else(|| vec![0.0; n]), n, "q0")?;
    let v0 = sized(settings.vector(&a.v0, "v0")?.unwrap_or_else(|| vec![0.0; n]), n, "v0")?;
    let dt = settings.parsed(a.dt, "dt")?.unwrap_or(1e-3);
    if !(dt.is_finite() && dt > 0.0) {
        return Err(CliError::Config("--dt must be positive".into()));
    }
    let steps = settings.parsed(a.steps, "steps")?.unwrap_or(1000);
    let stabilize = !settings.flag(a.no_stabilize, "no_stabilize")?;
    let s0 = State::new(q0, v0);
    require_on_n(&b.cs, &s0, r.tol)?;
    let traj = integrate(sys, &b.cs, &s0, dt, steps, stabilize)?;
    let mut csv = Vec::new();
    traj.write_csv(&mut csv)?;
    emit(r.out.as_deref(), &csv)?;
    let summary = format!(
        "steps={} energy_drift={} max_psi={}",
        steps,
        report::fmt17(traj.energy_drift()),
        report::fmt17(traj.max_psi())
    );
    // keep stdout pure CSV when the trajectory goes there
    if r.out.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    Ok(true)
}

// ---------------------------------------------------------------- check

const CHECK_KEYS: &[&str] =
    &["check", "candidate", "c1", "c2", "depth", "grid_count", "lo", "hi", "mu", "sign", "strong", "variant"];

struct CheckRun<'a> {
    a: &'a CheckArgs,
    settings: Settings,
    r: Resolved,
    b: SystemBundle,
    count: usize,
}

impl CheckRun<'_> {
    fn tol(&self) -> f64 {
        self.r.tol
    }

    fn candidate_params(&self) -> Result<Params, CliError> {
        let mut cp = Params::new();
        if let Some(c1) = self.settings.parsed(self.a.c1, "c1")? {
            cp.insert("c1".into(), c1);
        }
        if let Some(c2) = self.settings.parsed(self.a.c2, "c2")? {
            cp.insert("c2".into(), c2);
        }
        Ok(cp)
    }

    fn candidate(&self) -> Result<Candidate, CliError> {
        let name = self
            .settings
            .string(&self.a.candidate, "candidate")
            .ok_or_else(|| CliError::Config("this check needs --candidate".into()))?;
        Ok(self.b.candidate(&name, &self.candidate_params()?)?)
    }

    /// The candidate as a field on Q; reduced candidates are reconstructed first.
    fn on_q(&self) -> Result<HJCandidate, CliError> {
        Ok(match self.candidate()? {
            Candidate::OnQ(x) => x,
            Candidate::Reduced(c) => reconstruct(self.b.action()?, &c)?,
        })
    }

    fn reduced(&self) -> Result<ReducedCandidate, CliError> {
        match self.candidate()? {
            Candidate::Reduced(c) => Ok(c),
            Candidate::OnQ(x) => Err(CliError::Config(format!("candidate '{}' is not a reduced candidate", x.label))),
        }
    }

    fn grid(&self, lo: &[f64], hi: &[f64]) -> Result<Grid, CliError> {
        let lo = sized(self.settings.vector(&self.a.lo, "lo")?.unwrap_or_else(|| lo.to_vec()), lo.len(), "lo")?;
        let hi = sized(self.settings.vector(&self.a.hi, "hi")?.unwrap_or_else(|| hi.to_vec()), hi.len(), "hi")?;
        Ok(Grid::halton(&lo, &hi, self.count, self.r.seed)?)
    }

    fn q_grid(&self) -> Result<Grid, CliError> {
        self.grid(&self.b.lo, &self.b.hi)
    }

    fn reduced_grid(&self, red: &ReducedSystem) -> Result<Grid, CliError> {
        let d = red.dim();
        self.grid(&vec![-1.0; d], &vec![1.0; d])
    }

    /// Seeded states on N over the configuration grid.
    fn states(&self) -> Result<Vec<State>, CliError> {
        let mut g = rng(self.r.seed);
        let free = self.b.n() - self.b.cs.k();
        self.q_grid()?
            .points
            .iter()
            .map(|q| Ok(sample_linear_state(&self.b.cs, q, &uniform(&mut g, -1.5, 1.5, free))?))
            .collect()
    }

    fn sign(&self) -> Result<Sign, CliError> {
        match self.settings.string(&self.a.sign, "sign").as_deref() {
            None | Some("minus") => Ok(Sign::Minus),
            Some("plus") => Ok(Sign::Plus),
            Some(other) => Err(CliError::Config(format!("--sign must be minus or plus, got '{other}'"))),
        }
    }

    fn variant(&self, red: &ReducedSystem) -> Result<ReducedVariant, CliError> {
        match self.settings.string(&self.a.variant, "variant").as_deref() {
            None => Ok(default_variant(red)),
            Some("chaplygin") => Ok(ReducedVariant::Chaplygin),
            Some("pure_kinematic") => Ok(ReducedVariant::PureKinematic),
            Some("general") => Ok(ReducedVariant::General),
            Some(other) => Err(CliError::Config(format!("unknown variant '{other}'"))),
        }
    }
}

fn default_variant(red: &ReducedSystem) -> ReducedVariant {
    match red.route {
        ReductionRoute::Chaplygin => ReducedVariant::Chaplygin,
        ReductionRoute::Section => ReducedVariant::General,
    }
}

/// Chaplygin route when the bundle supplies a horizontal lift, section route otherwise.
fn reduce_bundle(b: &SystemBundle) -> Result<ReducedSystem, CliError> {
    let action = b.action()?;
    let sys = b.sys()?;
    let red = if action.quotient()?.hlift.is_some() {
        chaplygin_reduce(sys, &b.cs, action)?
    } else {
        section_reduce(sys, &b.cs, action)?
    };
    Ok(red)
}

pub fn check(a: &CheckArgs) -> Result<bool, CliError> {
    let settings = Settings::load(&a.common, CHECK_KEYS)?;
    let name = settings
        .string(&a.check, "check")
        .ok_or_else(|| CliError::Config(format!("--check is required; one of {}", CHECK_NAMES.join(", "))))?;
    if !CHECK_NAMES.contains(&name.as_str()) {
        return Err(CliError::Config(format!("unknown check '{name}'; one of {}", CHECK_NAMES.join(", "))));
    }
    let r = resolve_common(&a.common, &settings, CHECK_TOL)?;
    let b = bundle(&r)?;
    let count = settings.parsed(a.grid_count, "grid_count")?.unwrap_or(100);
    if count == 0 {
        return Err(CliError::Config("--grid-count must be positive".into()));
    }
    let run = CheckRun { a, settings, r, b, count };
    let rep = run_check(&run, &name)?;
    emit_json(run.r.out.as_deref(), rep.to_json())?;
    Ok(rep.pass)
}

fn run_check(run: &CheckRun, name: &str) -> Result<CheckReport, CliError> {
    let b = &run.b;
    let tol = run.tol();
    let rep = match name {
        "in_N" => check_in_n(&run.on_q()?, &b.cs, &run.q_grid()?, tol)?,
        "closedness" => {
            let (x, sys, grid) = (run.on_q()?, b.sys()?, run.q_grid()?);
            if b.cs.is_linear() {
                check_closedness_linear(&x, sys, &b.cs, &grid, tol)?
            } else {
                check_nonlinear_pullback(&x, sys, &b.cs, &grid, tol)?
            }
        }
        "hj_weak" | "hj_strong" => {
            check_hj_condition(&run.on_q()?, b.sys()?, &b.cs, &run.q_grid()?, name == "hj_strong", tol)?
        }
        "related" => check_related(&run.on_q()?, b.sys()?, &b.cs, &run.q_grid()?, tol)?,
        "forced" => forced(run)?,
        "hamiltonian" => {
            let sys = b.sys()?;
            let sigma = legendre_candidate(sys, &run.on_q()?)?;
            let strong = run.settings.flag(run.a.strong, "strong")?;
            check_hamiltonian_hj(&sigma, sys, &b.cs, &run.q_grid()?, strong, tol)?
        }
        "reduced" => {
            let red = reduce_bundle(b)?;
            let cand = run.reduced()?;
            check_reduced_hj(&red, &cand, &run.reduced_grid(&red)?, run.variant(&red)?, tol)?
        }
        "horizontal_mu" => {
            let mu = run
                .settings
                .vector(&run.a.mu, "mu")?
                .ok_or_else(|| CliError::Config("horizontal_mu needs --mu".into()))?;
            check_horizontal_mu(b.sys()?, &b.cs, b.action()?, &run.on_q()?, &mu, &run.q_grid()?, tol)?
        }
        "classify" => classify(run)?,
        "chow" => chow(run)?,
        "noether" => noether(run)?,
        "bates" => bates(run)?,
        _ => unreachable!("check names are validated first"),
    };
    Ok(rep)
}

/// Reduced base-field candidates are checked against L* with the gyroscopic force;
/// candidates on Q against the unconstrained Lagrangian with no force.
fn forced(run: &CheckRun) -> Result<CheckReport, CliError> {
    let sign = run.sign()?;
    let tol = run.tol();
    match run.candidate()? {
        Candidate::Reduced(c) => {
            if c.kind != ReducedKind::BaseField {
                return Err(CliError::Config(format!("candidate '{}' is not a field on the base", c.label)));
            }
            let red = reduce_bundle(&run.b)?;
            let x = HJCandidate::vector_field(c.label.clone(), c.map.clone());
            Ok(check_forced_hj(&x, red.base()?, red.gyro()?, &run.reduced_grid(&red)?, sign, tol)?)
        }
        Candidate::OnQ(x) => Ok(check_forced_hj(&x, run.b.sys()?, &ZeroForce, &run.q_grid()?, sign, tol)?),
    }
}

/// Passes when every sampled state gives the same case.
fn classify(run: &CheckRun) -> Result<CheckReport, CliError> {
    let b = &run.b;
    let (sys, action) = (b.sys()?, b.action()?);
    let states = run.states()?;
    let first = classify_case(sys, &b.cs, action, &states[0])?;
    let mut rep = CheckReport::new("classify", 0.0);
    for s in &states {
        let c = classify_case(sys, &b.cs, action, s)?;
        rep.record(&s.coords(), if c == first { 0.0 } else { 1.0 });
    }
    rep.set_info("case", first.case.name());
    rep.set_info("dim_vn", first.dim_vn);
    rep.set_info("dim_h", first.dim_h);
    rep.set_info("dim_vn_cap_h", first.dim_vn_cap_h);
    rep.set_info("dim_tn", first.dim_tn);
    if first.case == SymmetryCase::Unclassified {
        rep.absorb(f64::INFINITY);
    }
    Ok(rep.without_points())
}

/// Residual per point is the number of tangent directions the brackets miss.
fn chow(run: &CheckRun) -> Result<CheckReport, CliError> {
    let b = &run.b;
    if b.distribution.is_empty() {
        return Err(CliError::Config(format!("system '{}' has no distribution generators", b.name)));
    }
    let depth = run.settings.parsed(run.a.depth, "depth")?.unwrap_or(4);
    let grid = run.q_grid()?;
    let flags = chow_sweep(&b.distribution, &grid.points, depth, RANK_TOL)?;
    let mut rep = CheckReport::new("chow", 0.0).with_grid(grid.spec.clone());
    for (q, f) in grid.points.iter().zip(&flags) {
        let rank = f.growth.last().copied().unwrap_or(0);
        rep.record(q, (b.n() - rank) as f64);
    }
    rep.set_info("growth", flags[0].growth.clone());
    rep.set_info("complete", flags.iter().all(|f| f.complete));
    rep.set_info("depth", depth);
    Ok(rep.without_points())
}

fn noether(run: &CheckRun) -> Result<CheckReport, CliError> {
    let b = &run.b;
    let (sys, action) = (b.sys()?, b.action()?);
    let s0 = run.states()?.remove(0);
    let traj = integrate(sys, &b.cs, &s0, 1e-3, 1000, true)?;
    let mut rep = noether_check(sys, action, &b.momentum_section()?, &traj, run.tol())?;
    rep.set_info("initial_state", s0.coords());
    Ok(rep)
}

fn bates(run: &CheckRun) -> Result<CheckReport, CliError> {
    let b = &run.b;
    let (sys, action) = (b.sys()?, b.action()?);
    let mut rep = CheckReport::new("bates_sniatycki", run.tol());
    for s in run.states()? {
        let one = bates_sniatycki_check(sys, &b.cs, action, &s, run.tol())?;
        rep.record(&s.coords(), one.max_residual);
        rep.info = one.info;
    }
    Ok(rep.without_points())
}

// ---------------------------------------------------------------- reduce

const REDUCE_KEYS: &[&str] = &["candidate", "grid_count"];

#[derive(Serialize)]
struct Pipeline {
    system: String,
    candidate: String,
    route: ReductionRoute,
    steps: Vec<CheckReport>,
    pass: bool,
}

pub fn reduce(a: &ReduceArgs) -> Result<bool, CliError> {
    let settings = Settings::load(&a.common, REDUCE_KEYS)?;
    let r = resolve_common(&a.common, &settings, CHECK_TOL)?;
    let user_tol = settings.parsed(a.common.tol, "tol")?;
    let tol = |default: f64| user_tol.unwrap_or(default);
    let b = bundle(&r)?;
    let action = b.action()?;
    action.quotient()?;
    let sys = b.sys()?;
    let cand_name = match settings.string(&a.candidate, "candidate") {
        Some(n) => n,
        None => first_reduced(&b)?,
    };
    let cand = match b.candidate(&cand_name, &Params::new())? {
        Candidate::Reduced(c) => c,
        Candidate::OnQ(_) => {
            return Err(CliError::Config(format!("candidate '{cand_name}' is not a reduced candidate")))
        }
    };
    let count = settings.parsed(a.grid_count, "grid_count")?.unwrap_or(100);
    if count == 0 {
        return Err(CliError::Config("--grid-count must be positive".into()));
    }
    let red = reduce_bundle(&b)?;
    let d = red.dim();
    let qbar_grid = Grid::halton(&vec![-1.0; d], &vec![1.0; d], count, r.seed)?;
    let q_grid = Grid::halton(&b.lo, &b.hi, count, r.seed)?;
    let mut steps =
        vec![check_reduced_hj(&red, &cand, &qbar_grid, default_variant(&red), tol(CHECK_TOL))?.without_points()];
    let x = reconstruct(action, &cand)?;
    steps.push(check_round_trip(action, &cand, &x, &q_grid, tol(ROUND_TRIP_TOL))?.without_points());
    steps.push(check_in_n(&x, &b.cs, &q_grid, tol(CHECK_TOL))?.without_points());
    steps.push(check_related(&x, sys, &b.cs, &q_grid, tol(RELATED_TOL))?.without_points());
    let pass = steps.iter().all(|s| s.pass);
    let out = Pipeline { system: b.name.clone(), candidate: cand_name, route: red.route, steps, pass };
    emit_json(r.out.as_deref(), report::to_json(&out))?;
    Ok(pass)
}

fn first_reduced(b: &SystemBundle) -> Result<String, CliError> {
    for name in b.candidate_names() {
        if let Candidate::Reduced(_) = b.candidate(name, &Params::new())? {
            return Ok(name.to_string());
        }
    }
    Err(CliError::Config(format!("system '{}' has no reduced candidate", b.name)))
}
