use std::collections::BTreeSet;

use disentangle::constraints::{build_pe_constraint, LinearControlConstraint, LyapunovSpec};
use disentangle::par::Execution;
use disentangle::scenarios::{
    CoverageScenario, CoverageSpec, FormationScenario, FormationSpec, LeaderPath, NavigationScenario, NavigationSpec,
    SingleAgent, SingleFormulation, SizeLaw,
};
use disentangle::sim::{envelope_monitor, run, step, Engine, LocalView, Scenario, SimConfig};
use disentangle::types::{AgentState, ControlAffinePlant, MultiAgentState};
use disentangle::voronoi::{DensityField, RectDomain};
use disentangle::Error;

fn cfg(dt: f64, steps: usize) -> SimConfig {
    SimConfig { dt, steps, ..SimConfig::default() }
}

fn fixed_formation() -> FormationSpec {
    FormationSpec::icosahedron(SizeLaw::constant(0.6), 1.0, 1.0, LeaderPath::Fixed { position: vec![0.0; 3] })
}

#[test]
fn equilibrium_yields_zero_input_and_no_motion() {
    let spec = fixed_formation();
    let agents = spec.at_formation(0.0).into_iter().enumerate().map(|(i, p)| AgentState { id: i, position: p }).collect();
    let s = FormationScenario::new(spec, MultiAgentState::new(agents, 0.0).unwrap()).unwrap();
    let engine = Engine::new(&s, cfg(0.01, 1)).unwrap();
    let (next, rec) = step(&engine, s.initial_state()).unwrap();
    assert!(rec.controls.iter().flatten().all(|u| u.abs() < 1e-12));
    for (a, b) in next.agents.iter().zip(&s.initial_state().agents) {
        assert!((&a.position - &b.position).amax() < 1e-14);
    }
}

#[test]
fn single_agent_value_decays_like_exp_minus_t_to_first_order() {
    // V = 0.5 |x|^2 with an active row gives V' = -V, so x(t) = x0 e^{-t/2}.
    let origin = LeaderPath::Fixed { position: vec![0.0, 0.0] };
    let x0 = [1.0, -0.5];
    let err = |dt: f64| {
        let s = SingleAgent::new(x0.to_vec(), origin.clone(), SingleFormulation::Quadratic).unwrap();
        let tr = run(&s, &cfg(dt, (2.0 / dt) as usize)).unwrap();
        tr.records
            .iter()
            .flat_map(|r| r.positions[0].iter().zip(x0).map(move |(x, c)| (x - c * (-0.5 * r.time).exp()).abs()))
            .fold(0.0, f64::max)
    };
    let (e1, e2) = (err(0.01), err(0.005));
    assert!(e1 < 0.01, "{e1}");
    assert!((e2 / e1 - 0.5).abs() < 0.05, "{e1} {e2}");
}

#[test]
fn zero_steps_gives_the_initial_row_only() {
    let s = SingleAgent::new(vec![0.3], LeaderPath::Fixed { position: vec![0.0] }, SingleFormulation::Quadratic).unwrap();
    let tr = run(&s, &cfg(0.01, 0)).unwrap();
    assert_eq!(tr.records.len(), 1);
    assert_eq!(tr.records[0].time, 0.0);
    assert_eq!(tr.records[0].positions, vec![vec![0.3]]);
}

#[test]
fn same_config_gives_identical_trace() {
    let spec = fixed_formation();
    let s = FormationScenario::perturbed_start(spec, 3, 0.3).unwrap();
    let a = run(&s, &cfg(0.01, 200)).unwrap();
    let b = run(&s, &cfg(0.01, 200)).unwrap();
    let c = run(&s, &SimConfig { execution: Execution::Sequential, ..cfg(0.01, 200) }).unwrap();
    assert!(a.same_rows(&b));
    assert!(a.same_rows(&c));
}

#[test]
fn audit_passes_for_shipped_scenarios() {
    let audited = SimConfig { audit: true, ..cfg(0.01, 20) };
    let f = FormationScenario::perturbed_start(fixed_formation(), 1, 0.2).unwrap();
    run(&f, &audited).unwrap();
    let d = RectDomain::default();
    let c = CoverageScenario::random_start(CoverageSpec::new(d, DensityField::drifting_pair(&d)), 6, 1, 0.8).unwrap();
    run(&c, &audited).unwrap();
    let n = NavigationScenario::in_formation(NavigationSpec::obstacle_field(0.3, 10.0)).unwrap();
    run(&n, &audited).unwrap();
}

/// Two isolated agents whose rows (wrongly) read the other agent.
struct Snoop {
    initial: MultiAgentState,
    plant: ControlAffinePlant,
}

impl Scenario for Snoop {
    type Local = ();

    fn name(&self) -> &str {
        "snoop"
    }

    fn initial_state(&self) -> &MultiAgentState {
        &self.initial
    }

    fn plant(&self, _agent: usize) -> &ControlAffinePlant {
        &self.plant
    }

    fn prepare(&self, state: &MultiAgentState, _exec: Execution) -> disentangle::Result<Vec<()>> {
        Ok(vec![(); state.len()])
    }

    fn neighborhood(&self, _locals: &[()], _agent: usize) -> BTreeSet<usize> {
        BTreeSet::new()
    }

    fn agent_constraints(&self, view: &LocalView<'_, ()>) -> disentangle::Result<Vec<LinearControlConstraint>> {
        let other = view.position(1 - view.agent());
        let x = view.own_position();
        let e = x - other;
        build_pe_constraint(&LyapunovSpec::smooth(0.5 * e.norm_squared(), e, 0.0), &self.plant, x, view.alpha())
    }

    fn lyapunov_values(&self, _state: &MultiAgentState, _locals: &[()]) -> disentangle::Result<Vec<f64>> {
        Ok(vec![0.0, 0.0])
    }
}

#[test]
fn audit_flags_reads_outside_the_neighborhood() {
    let s = Snoop {
        initial: MultiAgentState::from_positions(&[vec![0.0], vec![1.0]], 0.0).unwrap(),
        plant: ControlAffinePlant::single_integrator(1),
    };
    assert!(run(&s, &cfg(0.01, 2)).is_ok());
    let err = run(&s, &SimConfig { audit: true, ..cfg(0.01, 2) }).unwrap_err();
    assert_eq!(err, Error::UndeclaredRead { agent: 0, read: 1 });
}

#[test]
fn coverage_topology_switch_is_recorded() {
    // Agent 1 starts high in a uniform field, so the cells of 0 and 2 touch
    // beneath it; as it descends to its centroid that contact disappears.
    let d = RectDomain::default();
    let spec = CoverageSpec::new(d, DensityField::uniform(1.0));
    let start = MultiAgentState::from_positions(&[vec![-0.5, 0.0], vec![0.0, 0.9], vec![0.5, 0.0]], 0.0).unwrap();
    let s = CoverageScenario::new(spec, start).unwrap();
    let tr = run(&s, &cfg(0.01, 500)).unwrap();
    assert!(tr.switches() >= 1);
    let engine = Engine::new(&s, cfg(0.01, 1)).unwrap();
    let first = engine.evaluate(s.initial_state()).unwrap();
    let last = MultiAgentState::from_positions(&tr.records.last().unwrap().positions, 5.0).unwrap();
    let later = engine.evaluate(&last).unwrap();
    let n0 = |e: &disentangle::sim::Evaluation<_>| s.topology(&e.locals).unwrap()[&0].clone();
    assert!(n0(&first).contains(&2));
    assert!(!n0(&later).contains(&2));
}

#[test]
fn envelope_monitor_accepts_a_compliant_run() {
    let s = SingleAgent::new(vec![1.0, 1.0], LeaderPath::Fixed { position: vec![0.0, 0.0] }, SingleFormulation::Quadratic).unwrap();
    let tr = run(&s, &cfg(0.01, 300)).unwrap();
    assert!(envelope_monitor(&tr, 1.0, 0.0).violations.is_empty());
}

/// Max envelope excess of the default formation at step `dt`.
fn formation_excess(dt: f64) -> f64 {
    let spec = FormationSpec::icosahedron(
        SizeLaw { base: 0.6, amplitude: 0.3, period: 20.0 },
        1.0,
        1.0,
        LeaderPath::Fixed { position: vec![0.0; 3] },
    );
    let s = FormationScenario::perturbed_start(spec, 0, 0.3).unwrap();
    let tr = run(&s, &cfg(dt, (10.0 / dt) as usize)).unwrap();
    envelope_monitor(&tr, 1.0, 0.0).max_excess.max(0.0)
}

#[test]
#[ignore = "fails: the excess is dominated by input spikes near vanishing per-agent gradients, not by first-order truncation (README, Known limitations)"]
fn halving_dt_halves_formation_envelope_excess() {
    let ratios: Vec<f64> = [0.02, 0.01, 0.005].windows(2).map(|w| formation_excess(w[1]) / formation_excess(w[0])).collect();
    for r in &ratios {
        assert!((0.3..=0.7).contains(r), "ratios {ratios:?}");
    }
}

#[test]
fn slacked_scenarios_report_no_envelope_metrics() {
    let n = NavigationScenario::in_formation(NavigationSpec::obstacle_field(0.3, 10.0)).unwrap();
    let m = run(&n, &cfg(0.01, 5)).unwrap().metrics(0.0);
    assert_eq!((m.envelope_violations, m.max_envelope_excess), (None, None));
    assert!(m.min_h.unwrap() > 0.0);
    let f = FormationScenario::perturbed_start(fixed_formation(), 0, 0.2).unwrap();
    assert!(run(&f, &cfg(0.01, 5)).unwrap().metrics(0.0).envelope_violations.is_some());
}
