//! Fixed-step closed-loop simulation.
//!
//! Each step takes an immutable snapshot, lets every agent build and solve
//! its own program from a [`LocalView`] of that snapshot, then integrates
//! all agents synchronously. A view exposes positions and per-agent
//! prepared data but never another agent's input.

mod engine;
mod trace;
mod view;

pub use engine::{run, step, AgentOutcome, Engine, Evaluation};
pub use trace::{
    calibrate_integration_error, envelope_monitor, EnvelopeReport, IntegrationBudget, Metrics, SimulationTrace,
    StepRecord,
};
pub use view::{LeaderSignal, LocalView};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::constraints::LinearControlConstraint;
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::types::{ControlAffinePlant, MultiAgentState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    #[default]
    Euler,
    /// Classical fourth-order Runge-Kutta with the programs re-solved at
    /// every stage.
    Rk4,
}

/// What to do when an agent's program has no feasible point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfeasibilityPolicy {
    #[default]
    Error,
    /// Soften every hard Lyapunov row with penalty
    /// [`AUTO_SLACK_PENALTY`](crate::constraints::AUTO_SLACK_PENALTY) and retry.
    AutoSlack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub dt: f64,
    pub steps: usize,
    pub integrator: Integrator,
    /// Rate of the linear class-K function used in Lyapunov rows.
    pub alpha_rate: f64,
    pub seed: u64,
    pub execution: Execution,
    pub infeasibility: InfeasibilityPolicy,
    /// Record and check every cross-agent read.
    pub audit: bool,
    pub qp_tol: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            steps: 1000,
            integrator: Integrator::Euler,
            alpha_rate: 1.0,
            seed: 0,
            execution: Execution::Parallel,
            infeasibility: InfeasibilityPolicy::Error,
            audit: false,
            qp_tol: 1e-10,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("sim.dt must be positive, got {}", self.dt)));
        }
        if !(self.alpha_rate > 0.0 && self.alpha_rate.is_finite()) {
            return Err(Error::Config(format!("sim.alpha_rate must be positive, got {}", self.alpha_rate)));
        }
        if !(self.qp_tol > 0.0 && self.qp_tol < 1e-3) {
            return Err(Error::Config(format!("sim.qp_tol must lie in (0, 1e-3), got {}", self.qp_tol)));
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps as f64
    }
}

pub type Adjacency = BTreeMap<usize, BTreeSet<usize>>;

/// A closed-loop experiment: agents, their plants and the rows each agent
/// derives from its local view.
pub trait Scenario: Sync {
    /// Per-agent data computed once per snapshot (for example a Voronoi
    /// cell and its moments).
    type Local: Send + Sync;

    fn name(&self) -> &str;

    fn initial_state(&self) -> &MultiAgentState;

    fn plant(&self, agent: usize) -> &ControlAffinePlant;

    fn prepare(&self, state: &MultiAgentState, exec: Execution) -> Result<Vec<Self::Local>>;

    /// Agents whose state or local data `agent` may read (itself excluded).
    fn neighborhood(&self, locals: &[Self::Local], agent: usize) -> BTreeSet<usize>;

    fn leader(&self, _t: f64) -> Option<LeaderSignal> {
        None
    }

    fn agent_constraints(&self, view: &LocalView<'_, Self::Local>) -> Result<Vec<LinearControlConstraint>>;

    /// Per-agent Lyapunov values; their sum is the monitored total.
    fn lyapunov_values(&self, state: &MultiAgentState, locals: &[Self::Local]) -> Result<Vec<f64>>;

    /// Every barrier value (safe when nonnegative). Empty without barriers.
    fn barrier_values(&self, _state: &MultiAgentState) -> Vec<f64> {
        Vec::new()
    }

    /// Current interaction topology when it can change between steps.
    fn topology(&self, _locals: &[Self::Local]) -> Option<Adjacency> {
        None
    }

    /// Whether every Lyapunov row is hard, so the exponential envelope is
    /// guaranteed in continuous time.
    fn envelope_applies(&self) -> bool {
        true
    }
}
