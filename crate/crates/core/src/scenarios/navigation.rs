//! Formation navigation through circular obstacles.
//!
//! Formation and orientation rows carry slack; obstacle rows and the
//! pairwise separation rows (shared between the two agents with equal
//! weights) are hard, so safety takes priority over the formation.

use std::collections::BTreeSet;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::formation::{formation_clf, formation_value, FormationSpec};
use super::signals::{LeaderPath, SizeLaw};
use crate::constraints::{
    attach_slack, build_cbf_constraint, build_pe_constraint, BarrierSpec, LinearControlConstraint, LyapunovSpec,
};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::sim::{LeaderSignal, LocalView, Scenario};
use crate::types::{AgentState, ClassK, ControlAffinePlant, MultiAgentState, SeGroup};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Obstacle {
    /// `h = |x - c|^2 - r^2`.
    pub fn barrier(&self, x: &DVector<f64>) -> f64 {
        (x[0] - self.center[0]).powi(2) + (x[1] - self.center[1]).powi(2) - self.radius * self.radius
    }
}

/// Pins one follower to a slot relative to the leader,
/// `V = 0.5 |x - (x_l + slot)|^2`, fixing the formation's orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrientationSlot {
    pub agent: usize,
    /// Offset from the leader in world axes at unit formation size.
    pub slot: [f64; 2],
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NavigationSpec {
    pub formation: FormationSpec,
    pub obstacles: Vec<Obstacle>,
    /// Minimum distance between any two followers.
    pub safe_distance: f64,
    /// Slack penalty on the formation row.
    pub kappa: f64,
    /// Rate of the linear class-K function in barrier rows.
    pub gamma_rate: f64,
    pub orientation: Option<OrientationSlot>,
}

impl NavigationSpec {
    /// Square of side `side` following a leader across a field of seven
    /// obstacles in the default domain.
    pub fn obstacle_field(side: f64, duration: f64) -> Self {
        let formation = FormationSpec::square(
            SizeLaw::constant(side),
            1.0,
            1.0,
            LeaderPath::Line { start: vec![-1.25, 0.0], end: vec![1.25, 0.0], duration },
        );
        let obstacles = [
            ([-0.75, 0.36], 0.09),
            ([-0.45, -0.38], 0.09),
            ([-0.15, 0.3], 0.08),
            ([0.15, -0.32], 0.08),
            ([0.45, 0.38], 0.09),
            ([0.75, -0.36], 0.09),
            ([0.0, 0.62], 0.1),
        ]
        .into_iter()
        .map(|(center, radius)| Obstacle { center, radius })
        .collect();
        Self {
            formation,
            obstacles,
            safe_distance: 0.05,
            kappa: 1e8,
            gamma_rate: 1.0,
            orientation: Some(OrientationSlot { agent: 1, slot: [0.5, -0.5], kappa: 1e2 }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.formation.validate()?;
        if self.formation.dim != 2 {
            return Err(Error::Config("navigation is planar".into()));
        }
        if !(self.safe_distance > 0.0 && self.kappa > 0.0 && self.gamma_rate > 0.0) {
            return Err(Error::Config("safe_distance, kappa and gamma_rate must be positive".into()));
        }
        if self.obstacles.iter().any(|o| !(o.radius > 0.0) || !o.center.iter().all(|c| c.is_finite())) {
            return Err(Error::Config("obstacle radii must be positive".into()));
        }
        if let Some(o) = &self.orientation {
            if o.agent >= self.formation.followers || !(o.kappa > 0.0) {
                return Err(Error::Config("orientation slot needs a follower id and kappa > 0".into()));
            }
        }
        Ok(())
    }

    /// Every pair of followers forms a two-member group sharing one
    /// separation barrier with equal weights.
    pub fn pair_group(&self, i: usize, j: usize) -> Result<SeGroup> {
        SeGroup::uniform(vec![i.min(j), i.max(j)])
    }

    /// All obstacle barriers (agent-major) followed by all pairwise ones.
    pub fn barrier_values(&self, positions: &[DVector<f64>]) -> Vec<f64> {
        let mut out: Vec<f64> = positions
            .iter()
            .flat_map(|x| self.obstacles.iter().map(move |o| o.barrier(x)))
            .collect();
        for i in 0..positions.len() {
            for j in i + 1..positions.len() {
                out.push((&positions[i] - &positions[j]).norm_squared() - self.safe_distance.powi(2));
            }
        }
        out
    }
}

fn orientation_clf(slot: &OrientationSlot, spec: &FormationSpec, x: &DVector<f64>, leader: &LeaderSignal, t: f64) -> LyapunovSpec {
    let (d, d_dot) = spec.size.eval(t);
    let p = DVector::from_column_slice(&slot.slot);
    let err = x - (&leader.position + &p * d);
    let target_rate = &leader.velocity + &p * d_dot;
    LyapunovSpec::smooth(0.5 * err.norm_squared(), err.clone(), -err.dot(&target_rate))
}

/// Rows of follower `view.agent()`: slacked formation row, optional slacked
/// orientation row, hard obstacle rows and hard shared separation rows.
pub fn navigation_constraints<L>(spec: &NavigationSpec, view: &LocalView<'_, L>) -> Result<Vec<LinearControlConstraint>> {
    let i = view.agent();
    let x = view.own_position();
    let plant = ControlAffinePlant::single_integrator(2);
    let gamma = ClassK::linear(spec.gamma_rate)?;
    let mut rows = Vec::new();
    let clf = formation_clf(&spec.formation, view)?;
    for r in build_pe_constraint(&clf, &plant, x, view.alpha())? {
        rows.push(attach_slack(r, spec.kappa)?);
    }
    if let Some(slot) = spec.orientation.as_ref().filter(|s| s.agent == i) {
        let leader = view.leader().ok_or_else(|| Error::Config("navigation needs a leader".into()))?;
        let o = orientation_clf(slot, &spec.formation, x, leader, view.time());
        for r in build_pe_constraint(&o, &plant, x, view.alpha())? {
            rows.push(attach_slack(r, slot.kappa)?);
        }
    }
    for ob in &spec.obstacles {
        let c = DVector::from_column_slice(&ob.center);
        let b = BarrierSpec {
            value: ob.barrier(x),
            grad_own: (x - c) * 2.0,
            partial_t: 0.0,
            allocation_weight: None,
        };
        rows.push(build_cbf_constraint(&b, &plant, x, gamma)?);
    }
    for j in 0..spec.formation.followers {
        if j == i {
            continue;
        }
        let xj = view.position(j);
        let group = spec.pair_group(i, j)?;
        let diff = x - xj;
        let b = BarrierSpec {
            value: diff.norm_squared() - spec.safe_distance.powi(2),
            grad_own: diff * 2.0,
            partial_t: 0.0,
            allocation_weight: Some(group.weight(i)?),
        };
        rows.push(build_cbf_constraint(&b, &plant, x, gamma)?);
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct NavigationScenario {
    spec: NavigationSpec,
    initial: MultiAgentState,
    plant: ControlAffinePlant,
}

impl NavigationScenario {
    pub fn new(spec: NavigationSpec, initial: MultiAgentState) -> Result<Self> {
        spec.validate()?;
        if initial.len() != spec.formation.followers || initial.dims().iter().any(|&d| d != 2) {
            return Err(Error::Config("initial state does not match the formation".into()));
        }
        Ok(Self { spec, initial, plant: ControlAffinePlant::single_integrator(2) })
    }

    /// Followers start exactly in formation around the leader.
    pub fn in_formation(spec: NavigationSpec) -> Result<Self> {
        let agents = spec
            .formation
            .at_formation(0.0)
            .into_iter()
            .enumerate()
            .map(|(i, p)| AgentState { id: i, position: p })
            .collect();
        let initial = MultiAgentState::new(agents, 0.0)?;
        Self::new(spec, initial)
    }

    pub fn spec(&self) -> &NavigationSpec {
        &self.spec
    }
}

impl Scenario for NavigationScenario {
    type Local = ();

    fn name(&self) -> &str {
        "navigation"
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

    /// Formation neighbors plus every member of a shared separation group.
    fn neighborhood(&self, _locals: &[()], agent: usize) -> BTreeSet<usize> {
        (0..self.spec.formation.followers).filter(|&j| j != agent).collect()
    }

    fn leader(&self, t: f64) -> Option<LeaderSignal> {
        Some(self.spec.formation.leader.signal(t))
    }

    fn agent_constraints(&self, view: &LocalView<'_, ()>) -> Result<Vec<LinearControlConstraint>> {
        navigation_constraints(&self.spec, view)
    }

    fn lyapunov_values(&self, state: &MultiAgentState, _locals: &[()]) -> Result<Vec<f64>> {
        let f = &self.spec.formation;
        let xl = f.leader.signal(state.time).position;
        Ok((0..f.followers)
            .map(|i| formation_value(f, i, |j| state.position(j), &xl, state.time))
            .collect())
    }

    fn barrier_values(&self, state: &MultiAgentState) -> Vec<f64> {
        let pos: Vec<DVector<f64>> = state.agents.iter().map(|a| a.position.clone()).collect();
        self.spec.barrier_values(&pos)
    }

    fn envelope_applies(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::AgentProgram;
    use crate::qp::{oracle_solve, solve};

    fn view_rows(spec: &NavigationSpec, state: &MultiAgentState, i: usize) -> Vec<LinearControlConstraint> {
        let leader = spec.formation.leader.signal(state.time);
        let hood: BTreeSet<usize> = (0..state.len()).filter(|&j| j != i).collect();
        let locals = vec![(); state.len()];
        let view = LocalView::new(i, state, &locals, Some(&leader), ClassK::default(), &hood, true);
        let rows = navigation_constraints(spec, &view).unwrap();
        view.check_reads().unwrap();
        rows
    }

    #[test]
    fn far_from_everything_in_formation_zero_input_is_optimal() {
        let mut spec = NavigationSpec::obstacle_field(0.3, 40.0);
        spec.formation.leader = LeaderPath::Fixed { position: vec![-1.25, 0.0] };
        let scen = NavigationScenario::in_formation(spec.clone()).unwrap();
        for i in 0..4 {
            let rows = view_rows(&spec, scen.initial_state(), i);
            let prog = AgentProgram::new(2, rows, None).unwrap();
            let sol = solve(prog.qp(), 1e-10).unwrap();
            assert!(sol.point.amax() < 1e-12);
            assert!(prog.residuals(&sol.point).iter().all(|r| *r <= 1e-12));
        }
    }

    #[test]
    fn obstacle_boundary_yields_tangential_motion() {
        // One follower on an obstacle boundary with its formation target
        // directly behind the obstacle.
        let ob = Obstacle { center: [0.0, 0.0], radius: 0.2 };
        let mut spec = NavigationSpec::obstacle_field(0.3, 40.0);
        spec.obstacles = vec![ob];
        spec.orientation = None;
        spec.formation.leader = LeaderPath::Fixed { position: vec![0.15, 0.15] };
        let target = spec.formation.at_formation(0.0);
        let mut pos = target.clone();
        pos[0] = DVector::from_vec(vec![-0.2 * 0.8, -0.2 * 0.6]);
        let state = MultiAgentState::new(pos.iter().enumerate().map(|(i, p)| AgentState { id: i, position: p.clone() }).collect(), 0.0).unwrap();
        let rows = view_rows(&spec, &state, 0);
        let prog = AgentProgram::new(2, rows, None).unwrap();
        let sol = solve(prog.qp(), 1e-10).unwrap();
        let orc = oracle_solve(prog.qp()).unwrap();
        assert!((&sol.point - &orc.point).amax() < 1e-9);
        let (u, _) = prog.split(&sol.point);
        let normal = DVector::from_vec(vec![-0.8, -0.6]);
        // Slack penalty 1e8 costs about eight digits of row accuracy.
        assert!(u.dot(&normal) >= -1e-8, "inward velocity {}", u.dot(&normal));
        assert!(u.norm() > 1e-3);
        // Closed loop from the boundary stays outside.
        let mut x = pos[0].clone();
        for _ in 0..500 {
            let mut p = pos.clone();
            p[0] = x.clone();
            let st = MultiAgentState::new(p.iter().enumerate().map(|(i, q)| AgentState { id: i, position: q.clone() }).collect(), 0.0).unwrap();
            let prog = AgentProgram::new(2, view_rows(&spec, &st, 0), None).unwrap();
            let (u, _) = prog.split(&solve(prog.qp(), 1e-10).unwrap().point);
            x += u * 0.01;
            assert!(ob.barrier(&x) >= -1e-6);
        }
    }

    #[test]
    fn shared_separation_rows_stop_a_closing_pair() {
        let mut spec = NavigationSpec::obstacle_field(0.3, 40.0);
        spec.obstacles.clear();
        spec.orientation = None;
        let d = spec.safe_distance;
        let gamma = spec.gamma_rate;
        // Two agents at exactly D, formation pulling them together.
        spec.formation.leader = LeaderPath::Fixed { position: vec![0.0, 0.0] };
        let mut pos = spec.formation.at_formation(0.0);
        pos[0] = DVector::from_vec(vec![0.05, 0.05]);
        pos[1] = DVector::from_vec(vec![0.05 + d, 0.05]);
        let mut prev_h = (&pos[0] - &pos[1]).norm_squared() - d * d;
        for _ in 0..300 {
            let st = MultiAgentState::new(pos.iter().enumerate().map(|(i, q)| AgentState { id: i, position: q.clone() }).collect(), 0.0).unwrap();
            let mut next = pos.clone();
            for i in 0..4 {
                let prog = AgentProgram::new(2, view_rows(&spec, &st, i), None).unwrap();
                let (u, _) = prog.split(&solve(prog.qp(), 1e-10).unwrap().point);
                next[i] = &pos[i] + u * 0.01;
            }
            pos = next;
            let h = (&pos[0] - &pos[1]).norm_squared() - d * d;
            assert!(h >= -1e-12);
            assert!((h - prev_h) / 0.01 >= -gamma * prev_h - 1e-9);
            prev_h = h;
        }
    }
}
