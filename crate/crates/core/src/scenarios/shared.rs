//! A group of agents sharing one time-varying Lyapunov function: the group
//! centroid tracks a moving reference while the members hold fixed
//! offsets. Each member takes its weighted share of the decrease budget.

use std::collections::BTreeSet;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::signals::LeaderPath;
use crate::constraints::{build_se_constraint, LinearControlConstraint, SharedLyapunovSpec};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::sim::{LocalView, Scenario};
use crate::types::{AgentState, ControlAffinePlant, MultiAgentState, SeGroup};

/// `V = 0.5 |mean(x) - c(t)|^2 + 0.5 sum_{i<j} |x_i - x_j - (p_i - p_j)|^2`.
#[derive(Debug, Clone)]
pub struct SharedTracking {
    group: SeGroup,
    offsets: Vec<DVector<f64>>,
    reference: LeaderPath,
    initial: MultiAgentState,
    plant: ControlAffinePlant,
}

impl SharedTracking {
    pub fn new(group: SeGroup, offsets: Vec<Vec<f64>>, reference: LeaderPath, initial: MultiAgentState) -> Result<Self> {
        let n = initial.len();
        if group.members().len() != n || (0..n).any(|i| !group.contains(i)) || offsets.len() != n {
            return Err(Error::Config("the shared group must contain every agent exactly once".into()));
        }
        let dim = reference.dim();
        reference.validate(dim)?;
        Ok(Self {
            group,
            offsets: offsets.into_iter().map(DVector::from_vec).collect(),
            reference,
            initial,
            plant: ControlAffinePlant::single_integrator(dim),
        })
    }

    /// Three planar agents with positive random weights summing to one,
    /// displaced from their slots around the reference by uniform noise of
    /// half-width `noise`.
    pub fn random_triple(seed: u64, noise: f64) -> Result<Self> {
        Self::random_triple_tracking(
            seed,
            noise,
            LeaderPath::Lissajous {
                center: vec![0.0, 0.0],
                amplitude: vec![0.6, 0.4],
                omega: vec![0.5, 0.7],
                phase: vec![0.0, 0.3],
            },
        )
    }

    /// As [`random_triple`](Self::random_triple) with a given planar
    /// reference.
    pub fn random_triple_tracking(seed: u64, noise: f64, reference: LeaderPath) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut w: Vec<f64> = raw.iter().map(|r| r / total).collect();
        w[2] = 1.0 - w[0] - w[1];
        let group = SeGroup::new(vec![0, 1, 2], w)?;
        let offsets = vec![vec![0.3, 0.0], vec![-0.15, 0.26], vec![-0.15, -0.26]];
        let c0 = reference.signal(0.0).position;
        let agents = offsets
            .iter()
            .enumerate()
            .map(|(i, p)| AgentState::new(i, (0..2).map(|k| c0[k] + p[k] + rng.random_range(-noise..noise)).collect::<Vec<f64>>()))
            .collect();
        Self::new(group, offsets, reference, MultiAgentState::new(agents, 0.0)?)
    }

    pub fn group(&self) -> &SeGroup {
        &self.group
    }

    /// Value, partial time derivative and every member's gradient.
    pub fn shared_spec<'a>(&self, pos: impl Fn(usize) -> &'a DVector<f64>, t: f64) -> SharedLyapunovSpec {
        let n = self.offsets.len();
        let c = self.reference.signal(t);
        let mean = (0..n).fold(DVector::zeros(c.position.len()), |acc, i| acc + pos(i)) / n as f64;
        let track = &mean - &c.position;
        let mut value = 0.5 * track.norm_squared();
        let mut grads: Vec<DVector<f64>> = (0..n).map(|_| &track / n as f64).collect();
        for i in 0..n {
            for j in i + 1..n {
                let e = pos(i) - pos(j) - (&self.offsets[i] - &self.offsets[j]);
                value += 0.5 * e.norm_squared();
                grads[i] += &e;
                grads[j] -= &e;
            }
        }
        SharedLyapunovSpec {
            value,
            partial_t: -track.dot(&c.velocity),
            member_gradients: grads.into_iter().enumerate().map(|(i, g)| (i, vec![g])).collect(),
        }
    }
}

impl Scenario for SharedTracking {
    type Local = ();

    fn name(&self) -> &str {
        "shared_tracking"
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

    fn neighborhood(&self, _locals: &[()], agent: usize) -> BTreeSet<usize> {
        self.group.members().iter().copied().filter(|&j| j != agent).collect()
    }

    fn agent_constraints(&self, view: &LocalView<'_, ()>) -> Result<Vec<LinearControlConstraint>> {
        let i = view.agent();
        let spec = self.shared_spec(|j| if j == i { view.own_position() } else { view.position(j) }, view.time());
        build_se_constraint(&spec, &self.group, i, &self.plant, view.own_position(), view.alpha())
    }

    /// Each member's weighted share of the shared value.
    fn lyapunov_values(&self, state: &MultiAgentState, _locals: &[()]) -> Result<Vec<f64>> {
        let v = self.shared_spec(|j| state.position(j), state.time).value;
        (0..state.len()).map(|i| Ok(self.group.weight(i)? * v)).collect()
    }
}
