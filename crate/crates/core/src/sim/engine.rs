use std::collections::BTreeSet;
use std::sync::Mutex;
use std::time::Instant;

use nalgebra::DVector;

use super::trace::{SimulationTrace, StepRecord};
use super::view::{LeaderSignal, LocalView};
use super::{Adjacency, InfeasibilityPolicy, Integrator, Scenario, SimConfig};
use crate::constraints::{attach_slack, AgentProgram, ConstraintKind, LinearControlConstraint, AUTO_SLACK_PENALTY};
use crate::error::{Error, Result};
use crate::par;
use crate::qp::{ActiveSetSolver, QpStatus};
use crate::types::{AgentState, ClassK, MultiAgentState};

/// One agent's solved program at one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentOutcome {
    pub control: DVector<f64>,
    pub status: QpStatus,
    pub active_set: Vec<usize>,
    pub kinds: Vec<ConstraintKind>,
    /// `normal . u - slack - offset` per row; nonpositive when satisfied.
    pub residuals: Vec<f64>,
    pub slacks: Vec<f64>,
    /// Hard Lyapunov rows were softened after an infeasible solve.
    pub auto_slacked: bool,
    /// Agents read while building the rows (audit mode only).
    pub reads: Option<BTreeSet<usize>>,
}

/// Every agent's outcome at one snapshot, plus the prepared data.
pub struct Evaluation<L> {
    pub locals: Vec<L>,
    pub outcomes: Vec<AgentOutcome>,
    pub leader: Option<LeaderSignal>,
}

/// Holds the per-agent solvers (warm-started across steps) for one run.
pub struct Engine<'a, S: Scenario> {
    scenario: &'a S,
    config: SimConfig,
    alpha: ClassK,
    solvers: Vec<Mutex<ActiveSetSolver>>,
}

impl<'a, S: Scenario> Engine<'a, S> {
    pub fn new(scenario: &'a S, config: SimConfig) -> Result<Self> {
        config.validate()?;
        let alpha = ClassK::linear(config.alpha_rate)?;
        let n = scenario.initial_state().len();
        let solvers = (0..n).map(|_| Mutex::new(ActiveSetSolver::new(config.qp_tol))).collect();
        Ok(Self { scenario, config, alpha, solvers })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    /// Builds and solves every agent's program from the snapshot `state`.
    pub fn evaluate(&self, state: &MultiAgentState) -> Result<Evaluation<S::Local>> {
        let exec = self.config.execution;
        let locals = self.scenario.prepare(state, exec)?;
        let leader = self.scenario.leader(state.time);
        let outcomes = par::try_map_indexed(exec, state.len(), |i| {
            self.solve_agent(state, &locals, leader.as_ref(), i)
        })?;
        Ok(Evaluation { locals, outcomes, leader })
    }

    fn solve_agent(
        &self,
        state: &MultiAgentState,
        locals: &[S::Local],
        leader: Option<&LeaderSignal>,
        i: usize,
    ) -> Result<AgentOutcome> {
        let hood = self.scenario.neighborhood(locals, i);
        let view = LocalView::new(i, state, locals, leader, self.alpha, &hood, self.config.audit);
        let rows = self.scenario.agent_constraints(&view)?;
        view.check_reads()?;
        let plant = self.scenario.plant(i);
        let bounds = plant.input_bounds.as_ref();
        let mut solver = self.solvers[i].lock().expect("solver lock poisoned");
        let mut program = AgentProgram::new(plant.input_dim(), rows, bounds)?;
        let mut sol = solver.solve(program.qp())?;
        let mut auto_slacked = false;
        if !sol.is_optimal() {
            match self.config.infeasibility {
                InfeasibilityPolicy::Error => {
                    return Err(Error::Infeasible { agent: i, time: state.time });
                }
                InfeasibilityPolicy::AutoSlack => {
                    let softened = soften(program.constraints.clone())?;
                    program = AgentProgram::new(plant.input_dim(), softened, bounds)?;
                    solver.reset();
                    sol = solver.solve(program.qp())?;
                    auto_slacked = true;
                    if !sol.is_optimal() {
                        return Err(Error::Infeasible { agent: i, time: state.time });
                    }
                }
            }
        }
        let (control, slacks) = program.split(&sol.point);
        Ok(AgentOutcome {
            residuals: program.residuals(&sol.point),
            kinds: program.constraints.iter().map(|c| c.kind).collect(),
            control,
            slacks,
            status: sol.status,
            active_set: sol.active_set,
            auto_slacked,
            reads: view.reads(),
        })
    }

    fn velocities(&self, state: &MultiAgentState, outcomes: &[AgentOutcome]) -> Result<Vec<DVector<f64>>> {
        state
            .agents
            .iter()
            .zip(outcomes)
            .map(|(a, o)| self.scenario.plant(a.id).velocity(&a.position, &o.control))
            .collect()
    }

    fn shifted(state: &MultiAgentState, vel: &[DVector<f64>], h: f64) -> Result<MultiAgentState> {
        let agents = state
            .agents
            .iter()
            .zip(vel)
            .map(|(a, v)| AgentState {
                id: a.id,
                position: &a.position + v * h,
            })
            .collect();
        MultiAgentState::new(agents, state.time + h)
    }

    /// Integrates from `state` (whose evaluation is `eval`) to `next_time`.
    pub fn advance(&self, state: &MultiAgentState, eval: &Evaluation<S::Local>, next_time: f64) -> Result<MultiAgentState> {
        let dt = next_time - state.time;
        let k1 = self.velocities(state, &eval.outcomes)?;
        let mut next = match self.config.integrator {
            Integrator::Euler => Self::shifted(state, &k1, dt)?,
            Integrator::Rk4 => {
                let s2 = Self::shifted(state, &k1, 0.5 * dt)?;
                let k2 = self.velocities(&s2, &self.evaluate(&s2)?.outcomes)?;
                let s3 = Self::shifted(state, &k2, 0.5 * dt)?;
                let k3 = self.velocities(&s3, &self.evaluate(&s3)?.outcomes)?;
                let s4 = Self::shifted(state, &k3, dt)?;
                let k4 = self.velocities(&s4, &self.evaluate(&s4)?.outcomes)?;
                let blend: Vec<DVector<f64>> = (0..k1.len())
                    .map(|i| (&k1[i] + &k2[i] * 2.0 + &k3[i] * 2.0 + &k4[i]) / 6.0)
                    .collect();
                Self::shifted(state, &blend, dt)?
            }
        };
        next.time = next_time;
        Ok(next)
    }

    /// The trace row for `state`, given its evaluation.
    pub fn record(
        &self,
        state: &MultiAgentState,
        eval: &Evaluation<S::Local>,
        previous: Option<&Adjacency>,
    ) -> Result<(StepRecord, Option<Adjacency>)> {
        let lyapunov = self.scenario.lyapunov_values(state, &eval.locals)?;
        let barriers = self.scenario.barrier_values(state);
        let topology = self.scenario.topology(&eval.locals);
        let switched = matches!((previous, &topology), (Some(p), Some(c)) if p != c);
        let rec = StepRecord {
            time: state.time,
            positions: state.agents.iter().map(|a| a.position.iter().copied().collect()).collect(),
            controls: eval.outcomes.iter().map(|o| o.control.iter().copied().collect()).collect(),
            v_total: lyapunov.iter().sum(),
            lyapunov,
            min_h: barriers.iter().copied().reduce(f64::min),
            barriers,
            statuses: eval.outcomes.iter().map(|o| o.status).collect(),
            active_sets: eval.outcomes.iter().map(|o| o.active_set.clone()).collect(),
            residuals: eval.outcomes.iter().map(|o| o.residuals.clone()).collect(),
            auto_slacked: eval.outcomes.iter().map(|o| o.auto_slacked).collect(),
            switched,
        };
        Ok((rec, topology))
    }
}

fn soften(rows: Vec<LinearControlConstraint>) -> Result<Vec<LinearControlConstraint>> {
    rows.into_iter()
        .map(|c| {
            if c.kind.is_barrier() || c.slack_penalty.is_some() {
                Ok(c)
            } else {
                attach_slack(c, AUTO_SLACK_PENALTY)
            }
        })
        .collect()
}

/// One synchronous step: evaluate every agent at `state`, record, then
/// integrate to `state.time + dt`.
pub fn step<S: Scenario>(engine: &Engine<'_, S>, state: &MultiAgentState) -> Result<(MultiAgentState, StepRecord)> {
    let eval = engine.evaluate(state)?;
    let (rec, _) = engine.record(state, &eval, None)?;
    let next = engine.advance(state, &eval, state.time + engine.config.dt)?;
    Ok((next, rec))
}

/// Runs `config.steps` steps from the scenario's initial state. The trace
/// has `steps + 1` rows; the last row's controls are those the agents
/// would apply at the final state.
pub fn run<S: Scenario>(scenario: &S, config: &SimConfig) -> Result<SimulationTrace> {
    let started = Instant::now();
    let engine = Engine::new(scenario, config.clone())?;
    let mut state = scenario.initial_state().clone();
    let t0 = state.time;
    let mut records = Vec::with_capacity(config.steps + 1);
    let mut topology: Option<Adjacency> = None;
    for k in 0..=config.steps {
        let eval = engine.evaluate(&state)?;
        let (rec, topo) = engine.record(&state, &eval, topology.as_ref())?;
        records.push(rec);
        topology = topo;
        if k < config.steps {
            let next_time = t0 + (k + 1) as f64 * config.dt;
            state = engine.advance(&state, &eval, next_time)?;
        }
    }
    Ok(SimulationTrace {
        scenario: scenario.name().to_string(),
        dt: config.dt,
        alpha_rate: config.alpha_rate,
        envelope_applies: scenario.envelope_applies(),
        records,
        runtime_s: started.elapsed().as_secs_f64(),
    })
}
