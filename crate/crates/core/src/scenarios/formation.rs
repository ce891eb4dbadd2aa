//! Leader-follower formations with time-varying size.
//!
//! Follower `i` owns
//! `V_i = w_f/2 sum_j (|x_i - x_j| - d_ij)^2 + w_l/2 (|x_i - x_l| - d_l)^2`.
//! Each follower-follower edge appears in two owners' functions, so the
//! gradient of the total with respect to `x_i` doubles the follower terms.

use std::collections::BTreeSet;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::signals::{LeaderPath, SizeLaw};
use crate::constraints::{build_pe_constraint, LinearControlConstraint, LyapunovSpec};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::sim::{LeaderSignal, LocalView, Scenario};
use crate::types::{AgentState, ControlAffinePlant, MultiAgentState};

/// Circumradius over edge length of a regular icosahedron.
pub fn icosahedron_radius_ratio() -> f64 {
    (10.0 + 2.0 * 5f64.sqrt()).sqrt() / 4.0
}

/// Vertices of a regular icosahedron with unit circumradius.
pub fn icosahedron_vertices() -> Vec<[f64; 3]> {
    let phi = 0.5 * (1.0 + 5f64.sqrt());
    let mut v = Vec::with_capacity(12);
    for s1 in [-1.0, 1.0] {
        for s2 in [-1.0, 1.0] {
            v.push([0.0, s1, s2 * phi]);
            v.push([s1, s2 * phi, 0.0]);
            v.push([s2 * phi, 0.0, s1]);
        }
    }
    let r = (1.0 + phi * phi).sqrt();
    v.into_iter().map(|p| p.map(|c| c / r)).collect()
}

/// The 30 vertex pairs at minimal distance.
pub fn icosahedron_edges() -> Vec<(usize, usize)> {
    let v = icosahedron_vertices();
    let dist = |a: &[f64; 3], b: &[f64; 3]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
    let edge = 1.0 / icosahedron_radius_ratio();
    let mut out = Vec::new();
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            if (dist(&v[i], &v[j]) - edge).abs() < 1e-9 {
                out.push((i, j));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormationEdge {
    pub a: usize,
    pub b: usize,
    /// Desired length as a multiple of the size law.
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormationSpec {
    pub followers: usize,
    pub dim: usize,
    pub edges: Vec<FormationEdge>,
    /// Desired leader distance as a multiple of the size law.
    pub leader_factor: f64,
    pub size: SizeLaw,
    pub w_f: f64,
    pub w_l: f64,
    pub leader: LeaderPath,
    /// Target offsets from the leader at unit size, used to build
    /// at-formation states.
    pub shape: Vec<Vec<f64>>,
}

impl FormationSpec {
    /// Twelve followers on a regular icosahedron around the leader.
    pub fn icosahedron(size: SizeLaw, w_f: f64, w_l: f64, leader: LeaderPath) -> Self {
        let ratio = icosahedron_radius_ratio();
        Self {
            followers: 12,
            dim: 3,
            edges: icosahedron_edges()
                .into_iter()
                .map(|(a, b)| FormationEdge { a, b, factor: 1.0 })
                .collect(),
            leader_factor: ratio,
            size,
            w_f,
            w_l,
            leader,
            shape: icosahedron_vertices().iter().map(|p| p.map(|c| c * ratio).to_vec()).collect(),
        }
    }

    /// Four followers on a square (sides only) centered on the leader.
    pub fn square(size: SizeLaw, w_f: f64, w_l: f64, leader: LeaderPath) -> Self {
        Self {
            followers: 4,
            dim: 2,
            edges: [(0, 1), (1, 2), (2, 3), (3, 0)]
                .into_iter()
                .map(|(a, b)| FormationEdge { a, b, factor: 1.0 })
                .collect(),
            leader_factor: std::f64::consts::FRAC_1_SQRT_2,
            size,
            w_f,
            w_l,
            leader,
            shape: vec![vec![-0.5, -0.5], vec![0.5, -0.5], vec![0.5, 0.5], vec![-0.5, 0.5]],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.size.validate()?;
        self.leader.validate(self.dim)?;
        if !(self.w_f > 0.0 && self.w_l > 0.0 && self.leader_factor > 0.0) {
            return Err(Error::Config("formation weights and leader factor must be positive".into()));
        }
        if self.shape.len() != self.followers || self.shape.iter().any(|p| p.len() != self.dim) {
            return Err(Error::Config("formation shape must list one offset per follower".into()));
        }
        let mut seen = BTreeSet::new();
        for e in &self.edges {
            if e.a == e.b || e.a >= self.followers || e.b >= self.followers || !(e.factor > 0.0) {
                return Err(Error::InvalidGraph(format!("bad formation edge {e:?}")));
            }
            if !seen.insert((e.a.min(e.b), e.a.max(e.b))) {
                return Err(Error::InvalidGraph(format!("duplicate formation edge {e:?}")));
            }
        }
        Ok(())
    }

    /// `(neighbor, length factor)` pairs of follower `i`.
    pub fn neighbors(&self, i: usize) -> Vec<(usize, f64)> {
        self.edges
            .iter()
            .filter_map(|e| {
                if e.a == i {
                    Some((e.b, e.factor))
                } else if e.b == i {
                    Some((e.a, e.factor))
                } else {
                    None
                }
            })
            .collect()
    }

    /// Follower positions exactly in formation at time `t`.
    pub fn at_formation(&self, t: f64) -> Vec<DVector<f64>> {
        let (d, _) = self.size.eval(t);
        let xl = self.leader.signal(t).position;
        self.shape
            .iter()
            .map(|p| &xl + DVector::from_column_slice(p) * d)
            .collect()
    }
}

fn distance(a: &DVector<f64>, b: &DVector<f64>, what: &str) -> Result<f64> {
    let r = (a - b).norm();
    if r <= 1e-12 {
        return Err(Error::Singular(format!("coincident positions in {what}")));
    }
    Ok(r)
}

/// `V_i` of follower `i` from its own position, its neighbors' positions
/// (indexed by agent id through `pos`) and the leader position.
pub fn formation_value<'a>(
    spec: &FormationSpec,
    i: usize,
    pos: impl Fn(usize) -> &'a DVector<f64>,
    leader: &DVector<f64>,
    t: f64,
) -> f64 {
    let (d, _) = spec.size.eval(t);
    let xi = pos(i);
    let mut v = 0.0;
    for (j, f) in spec.neighbors(i) {
        v += 0.5 * spec.w_f * ((xi - pos(j)).norm() - f * d).powi(2);
    }
    v + 0.5 * spec.w_l * ((xi - leader).norm() - spec.leader_factor * d).powi(2)
}

/// Sum of every follower's `V_i`.
pub fn formation_total(spec: &FormationSpec, positions: &[DVector<f64>], leader: &DVector<f64>, t: f64) -> f64 {
    (0..spec.followers)
        .map(|i| formation_value(spec, i, |j| &positions[j], leader, t))
        .sum()
}

/// Value, gradient of the total with respect to `x_i`, partial time
/// derivative of `V_i` (including the leader's motion) and gradients of
/// `V_i` with respect to each neighbor.
pub fn formation_terms<'a>(
    spec: &FormationSpec,
    i: usize,
    pos: impl Fn(usize) -> &'a DVector<f64>,
    leader: &LeaderSignal,
    t: f64,
) -> Result<LyapunovSpec> {
    let (d, d_dot) = spec.size.eval(t);
    let xi = pos(i);
    let mut value = 0.0;
    let mut grad = DVector::zeros(xi.len());
    let mut partial_t = 0.0;
    let mut neighbor_gradients = std::collections::BTreeMap::new();
    for (j, f) in spec.neighbors(i) {
        let xj = pos(j);
        let r = distance(xi, xj, "formation edge")?;
        let e = r - f * d;
        value += 0.5 * spec.w_f * e * e;
        let dir = (xi - xj) / r;
        grad += &dir * (2.0 * spec.w_f * e);
        partial_t += spec.w_f * (f * d - r) * f * d_dot;
        neighbor_gradients.insert(j, -dir * (spec.w_f * e));
    }
    let rl = distance(xi, &leader.position, "leader edge")?;
    let dl = spec.leader_factor * d;
    let el = rl - dl;
    value += 0.5 * spec.w_l * el * el;
    let dir_l = (xi - &leader.position) / rl;
    grad += &dir_l * (spec.w_l * el);
    partial_t += spec.w_l * (dl - rl) * (dir_l.dot(&leader.velocity) + spec.leader_factor * d_dot);
    Ok(LyapunovSpec {
        value,
        partial_t,
        candidate_gradients: vec![grad],
        neighbor_gradients,
    })
}

/// Formation Lyapunov data for the viewing follower.
pub fn formation_clf<L>(spec: &FormationSpec, view: &LocalView<'_, L>) -> Result<LyapunovSpec> {
    let leader = view
        .leader()
        .ok_or_else(|| Error::Config("formation needs a leader signal".into()))?;
    let i = view.agent();
    formation_terms(spec, i, |j| if j == i { view.own_position() } else { view.position(j) }, leader, view.time())
}

/// Closed-loop formation tracking with every follower's row hard.
#[derive(Debug, Clone)]
pub struct FormationScenario {
    spec: FormationSpec,
    initial: MultiAgentState,
    plant: ControlAffinePlant,
}

impl FormationScenario {
    pub fn new(spec: FormationSpec, initial: MultiAgentState) -> Result<Self> {
        spec.validate()?;
        if initial.len() != spec.followers || initial.dims().iter().any(|&d| d != spec.dim) {
            return Err(Error::Config("initial state does not match the formation".into()));
        }
        let plant = ControlAffinePlant::single_integrator(spec.dim);
        Ok(Self { spec, initial, plant })
    }

    /// Followers scattered uniformly in a cube of half-width `spread`
    /// around the leader's starting point.
    pub fn random_start(spec: FormationSpec, seed: u64, spread: f64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xl = spec.leader.signal(0.0).position;
        let agents = (0..spec.followers)
            .map(|i| {
                let p: Vec<f64> = xl.iter().map(|c| c + rng.random_range(-spread..spread)).collect();
                AgentState::new(i, p)
            })
            .collect();
        let initial = MultiAgentState::new(agents, 0.0)?;
        Self::new(spec, initial)
    }

    /// Followers displaced from their formation slots at `t = 0` by
    /// independent uniform noise of half-width `noise` per coordinate.
    pub fn perturbed_start(spec: FormationSpec, seed: u64, noise: f64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let agents = spec
            .at_formation(0.0)
            .into_iter()
            .enumerate()
            .map(|(i, p)| AgentState::new(i, p.iter().map(|c| c + rng.random_range(-noise..noise)).collect::<Vec<f64>>()))
            .collect();
        let initial = MultiAgentState::new(agents, 0.0)?;
        Self::new(spec, initial)
    }

    /// Caps every input coordinate at `cap` in magnitude.
    pub fn with_speed_cap(mut self, cap: f64) -> Self {
        self.plant.input_bounds = Some(crate::types::InputBox::speed_cap(self.plant.input_dim(), cap));
        self
    }

    pub fn spec(&self) -> &FormationSpec {
        &self.spec
    }
}

impl Scenario for FormationScenario {
    type Local = ();

    fn name(&self) -> &str {
        "formation"
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
        self.spec.neighbors(agent).into_iter().map(|(j, _)| j).collect()
    }

    fn leader(&self, t: f64) -> Option<LeaderSignal> {
        Some(self.spec.leader.signal(t))
    }

    fn agent_constraints(&self, view: &LocalView<'_, ()>) -> Result<Vec<LinearControlConstraint>> {
        let spec = formation_clf(&self.spec, view)?;
        build_pe_constraint(&spec, &self.plant, view.own_position(), view.alpha())
    }

    fn lyapunov_values(&self, state: &MultiAgentState, _locals: &[()]) -> Result<Vec<f64>> {
        let xl = self.spec.leader.signal(state.time).position;
        Ok((0..self.spec.followers)
            .map(|i| formation_value(&self.spec, i, |j| state.position(j), &xl, state.time))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use proptest::prelude::*;

    fn spec() -> FormationSpec {
        FormationSpec::icosahedron(
            SizeLaw { base: 0.6, amplitude: 0.3, period: 20.0 },
            1.0,
            1.0,
            LeaderPath::Lissajous {
                center: vec![0.0, 0.0, 0.0],
                amplitude: vec![0.8, 0.5, 0.3],
                omega: vec![0.2, 0.4, 0.3],
                phase: vec![0.0, 0.5, 1.0],
            },
        )
    }

    #[test]
    fn icosahedron_has_thirty_edges_and_five_neighbors_each() {
        let e = icosahedron_edges();
        assert_eq!(e.len(), 30);
        let s = spec();
        for i in 0..12 {
            assert_eq!(s.neighbors(i).len(), 5);
        }
    }

    #[test]
    fn icosahedron_ratio_matches_geometry() {
        let v = icosahedron_vertices();
        let (a, b) = icosahedron_edges()[0];
        let edge = ((0..3).map(|k| (v[a][k] - v[b][k]).powi(2)).sum::<f64>()).sqrt();
        assert!((1.0 / edge - 0.9510565162951535).abs() < 1e-15);
        assert!((icosahedron_radius_ratio() - 0.9510565162951535).abs() < 1e-15);
    }

    #[test]
    fn exact_formation_is_an_equilibrium() {
        let s = spec();
        for t in [0.0, 2.5, 7.0] {
            let x = s.at_formation(t);
            let leader = s.leader.signal(t);
            for i in 0..12 {
                let l = formation_terms(&s, i, |j| &x[j], &leader, t).unwrap();
                assert!(l.value < 1e-28);
                assert!(l.gradient().amax() < 1e-14);
                assert!(l.partial_t.abs() < 1e-14);
            }
        }
    }

    #[test]
    fn coincident_positions_are_rejected() {
        let s = spec();
        let mut x = s.at_formation(0.0);
        let nb = s.neighbors(0)[0].0;
        x[0] = x[nb].clone();
        let leader = s.leader.signal(0.0);
        assert!(matches!(formation_terms(&s, 0, |j| &x[j], &leader, 0.0), Err(Error::Singular(_))));
    }

    fn perturbed(seed: u64) -> Vec<DVector<f64>> {
        let s = spec();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        s.at_formation(1.0)
            .into_iter()
            .map(|p| p.map(|c| c + rng.random_range(-0.2..0.2)))
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn gradient_matches_total_finite_difference(seed in 0u64..10_000, i in 0usize..12, t in 0.0f64..20.0) {
            let s = spec();
            let x = perturbed(seed);
            let leader = s.leader.signal(t);
            let an = formation_terms(&s, i, |j| &x[j], &leader, t).unwrap();
            let h = 1e-6;
            let mut fd = DVector::zeros(3);
            for k in 0..3 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i][k] += h;
                xm[i][k] -= h;
                fd[k] = (formation_total(&s, &xp, &leader.position, t) - formation_total(&s, &xm, &leader.position, t)) / (2.0 * h);
            }
            prop_assert!((&fd - an.gradient()).norm() <= 1e-6 * fd.norm().max(1e-3));
        }

        #[test]
        fn partial_t_matches_time_finite_difference(seed in 0u64..10_000, i in 0usize..12, t in 0.0f64..20.0) {
            let s = spec();
            let x = perturbed(seed);
            let an = formation_terms(&s, i, |j| &x[j], &s.leader.signal(t), t).unwrap();
            let h = 1e-5;
            let v = |tt: f64| formation_value(&s, i, |j| &x[j], &s.leader.signal(tt).position, tt);
            let fd = (v(t + h) - v(t - h)) / (2.0 * h);
            prop_assert!((fd - an.partial_t).abs() <= 1e-6 * fd.abs().max(1e-3));
        }
    }
}
