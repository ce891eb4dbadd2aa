//! One agent regulated toward a moving point, in three interchangeable
//! formulations. Used to check the barrier/Lyapunov correspondence and the
//! closed-form exponential decay.

use std::collections::BTreeSet;

use nalgebra::DVector;

use super::signals::LeaderPath;
use crate::constraints::{build_cbf_constraint, build_pe_constraint, clf_from_cbf, BarrierSpec, LinearControlConstraint, LyapunovSpec};
use crate::error::Result;
use crate::par::Execution;
use crate::sim::{LocalView, Scenario};
use crate::types::{AgentState, ControlAffinePlant, MultiAgentState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingleFormulation {
    /// Barrier `h = -|x - c(t)|^2` enforced directly.
    Barrier,
    /// The same barrier recast as `V = -h`.
    BarrierAsLyapunov,
    /// `V = 0.5 |x - c(t)|^2`.
    Quadratic,
}

#[derive(Debug, Clone)]
pub struct SingleAgent {
    pub target: LeaderPath,
    pub formulation: SingleFormulation,
    initial: MultiAgentState,
    plant: ControlAffinePlant,
}

impl SingleAgent {
    pub fn new(start: Vec<f64>, target: LeaderPath, formulation: SingleFormulation) -> Result<Self> {
        target.validate(start.len())?;
        let dim = start.len();
        Ok(Self {
            target,
            formulation,
            initial: MultiAgentState::new(vec![AgentState::new(0, start)], 0.0)?,
            plant: ControlAffinePlant::single_integrator(dim),
        })
    }

    fn barrier(&self, x: &DVector<f64>, t: f64) -> BarrierSpec {
        let c = self.target.signal(t);
        let e = x - &c.position;
        BarrierSpec {
            value: -e.norm_squared(),
            grad_own: &e * -2.0,
            partial_t: 2.0 * e.dot(&c.velocity),
            allocation_weight: None,
        }
    }

    fn quadratic(&self, x: &DVector<f64>, t: f64) -> LyapunovSpec {
        let c = self.target.signal(t);
        let e = x - &c.position;
        LyapunovSpec::smooth(0.5 * e.norm_squared(), e.clone(), -e.dot(&c.velocity))
    }
}

impl Scenario for SingleAgent {
    type Local = ();

    fn name(&self) -> &str {
        "single"
    }

    fn initial_state(&self) -> &MultiAgentState {
        &self.initial
    }

    fn plant(&self, _agent: usize) -> &ControlAffinePlant {
        &self.plant
    }

    fn prepare(&self, state: &MultiAgentState, _exec: Execution) -> Result<Vec<()>> {
        Ok(vec![(); state.len()])
    }

    fn neighborhood(&self, _locals: &[()], _agent: usize) -> BTreeSet<usize> {
        BTreeSet::new()
    }

    fn agent_constraints(&self, view: &LocalView<'_, ()>) -> Result<Vec<LinearControlConstraint>> {
        let x = view.own_position();
        let t = view.time();
        match self.formulation {
            SingleFormulation::Barrier => Ok(vec![build_cbf_constraint(&self.barrier(x, t), &self.plant, x, view.alpha())?]),
            SingleFormulation::BarrierAsLyapunov => {
                build_pe_constraint(&clf_from_cbf(&self.barrier(x, t))?, &self.plant, x, view.alpha())
            }
            SingleFormulation::Quadratic => build_pe_constraint(&self.quadratic(x, t), &self.plant, x, view.alpha()),
        }
    }

    fn lyapunov_values(&self, state: &MultiAgentState, _locals: &[()]) -> Result<Vec<f64>> {
        let x = state.position(0);
        Ok(vec![match self.formulation {
            SingleFormulation::Quadratic => self.quadratic(x, state.time).value,
            _ => -self.barrier(x, state.time).value,
        }])
    }

    fn barrier_values(&self, state: &MultiAgentState) -> Vec<f64> {
        match self.formulation {
            SingleFormulation::Quadratic => Vec::new(),
            _ => vec![self.barrier(state.position(0), state.time).value],
        }
    }
}
