//! Shared domain types: agents, plants, interaction graphs and class-K rates.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One agent's state of interest. Ids are zero-based indices.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: usize,
    pub position: DVector<f64>,
}

impl AgentState {
    pub fn new(id: usize, position: impl Into<Vec<f64>>) -> Self {
        Self {
            id,
            position: DVector::from_vec(position.into()),
        }
    }

    pub fn dim(&self) -> usize {
        self.position.len()
    }
}

/// Positions of every agent at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiAgentState {
    pub agents: Vec<AgentState>,
    pub time: f64,
}

impl MultiAgentState {
    /// Builds a state, checking that ids are exactly `0..N` in order and
    /// that every position is finite.
    pub fn new(agents: Vec<AgentState>, time: f64) -> Result<Self> {
        validate_ids(&agents)?;
        if agents.iter().any(|a| a.position.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("agent position"));
        }
        Ok(Self { agents, time })
    }

    pub fn from_positions(positions: &[Vec<f64>], time: f64) -> Result<Self> {
        let agents = positions
            .iter()
            .enumerate()
            .map(|(i, p)| AgentState::new(i, p.clone()))
            .collect();
        Self::new(agents, time)
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn position(&self, id: usize) -> &DVector<f64> {
        &self.agents[id].position
    }

    pub fn dims(&self) -> Vec<usize> {
        self.agents.iter().map(AgentState::dim).collect()
    }
}

fn validate_ids(agents: &[AgentState]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for a in agents {
        if !seen.insert(a.id) {
            return Err(Error::DuplicateAgent(a.id));
        }
    }
    for (expect, a) in agents.iter().enumerate() {
        if a.id != expect {
            return Err(Error::NonContiguousIds(expect));
        }
    }
    Ok(())
}

/// Concatenates agent positions in id order.
pub fn stack_state(agents: &[AgentState]) -> Result<DVector<f64>> {
    let mut seen = BTreeSet::new();
    for a in agents {
        if !seen.insert(a.id) {
            return Err(Error::DuplicateAgent(a.id));
        }
    }
    let mut sorted: Vec<&AgentState> = agents.iter().collect();
    sorted.sort_by_key(|a| a.id);
    let data: Vec<f64> = sorted
        .iter()
        .flat_map(|a| a.position.iter().copied())
        .collect();
    Ok(DVector::from_vec(data))
}

/// Inverse of [`stack_state`] given per-agent dimensions.
pub fn unstack_state(stacked: &DVector<f64>, dims: &[usize]) -> Result<Vec<AgentState>> {
    let total: usize = dims.iter().sum();
    if total != stacked.len() {
        return Err(Error::Dimension(format!(
            "stacked length {} does not match dims sum {}",
            stacked.len(),
            total
        )));
    }
    let mut offset = 0;
    Ok(dims
        .iter()
        .enumerate()
        .map(|(id, &d)| {
            let p = stacked.rows(offset, d).clone_owned();
            offset += d;
            AgentState { id, position: p }
        })
        .collect())
}

/// Per-axis box on the control input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl InputBox {
    /// Symmetric box `|u_k| <= cap` on every axis.
    pub fn speed_cap(dim: usize, cap: f64) -> Self {
        Self {
            lower: vec![-cap; dim],
            upper: vec![cap; dim],
        }
    }
}

type VectorField = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type MatrixField = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Control-affine dynamics `x' = f(x) + g(x) u` for one agent.
#[derive(Clone)]
pub struct ControlAffinePlant {
    drift: VectorField,
    actuation: MatrixField,
    state_dim: usize,
    input_dim: usize,
    pub input_bounds: Option<InputBox>,
}

impl fmt::Debug for ControlAffinePlant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlAffinePlant")
            .field("state_dim", &self.state_dim)
            .field("input_dim", &self.input_dim)
            .field("input_bounds", &self.input_bounds)
            .finish()
    }
}

impl ControlAffinePlant {
    pub fn new(
        state_dim: usize,
        input_dim: usize,
        drift: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        actuation: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            drift: Arc::new(drift),
            actuation: Arc::new(actuation),
            state_dim,
            input_dim,
            input_bounds: None,
        }
    }

    /// `f = 0`, `g = I`.
    pub fn single_integrator(dim: usize) -> Self {
        Self::new(
            dim,
            dim,
            move |_| DVector::zeros(dim),
            move |_| DMatrix::identity(dim, dim),
        )
    }

    pub fn with_bounds(mut self, bounds: InputBox) -> Self {
        self.input_bounds = Some(bounds);
        self
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn drift(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let f = (self.drift)(x);
        if f.len() != self.state_dim {
            return Err(Error::Dimension("drift output".into()));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("drift"));
        }
        Ok(f)
    }

    pub fn actuation(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let g = (self.actuation)(x);
        if g.shape() != (self.state_dim, self.input_dim) {
            return Err(Error::Dimension(format!(
                "actuation is {:?}, expected {:?}",
                g.shape(),
                (self.state_dim, self.input_dim)
            )));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("actuation"));
        }
        Ok(g)
    }

    /// Closed-loop velocity `f(x) + g(x) u`.
    pub fn velocity(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.drift(x)? + self.actuation(x)? * u)
    }
}

/// One edge of the private-entangled graph. A directed edge `from -> to`
/// means `to`'s Lyapunov function reads `from`'s state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct PeEdge {
    pub from: usize,
    pub to: usize,
    pub directed: bool,
}

/// Agents sharing one Lyapunov or barrier function, with the weights that
/// split its decrease budget.
#[derive(Debug, Clone, PartialEq)]
pub struct SeGroup {
    members: Vec<usize>,
    weights: Vec<f64>,
}

/// Tolerance on the stored weight sum.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

impl SeGroup {
    /// Weights may be negative; they must sum to one.
    pub fn new(members: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::InvalidGraph("SE group needs at least two members".into()));
        }
        if members.len() != weights.len() {
            return Err(Error::Dimension("SE weights vs members".into()));
        }
        let unique: BTreeSet<_> = members.iter().collect();
        if unique.len() != members.len() {
            return Err(Error::InvalidGraph("duplicate SE member".into()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("SE weight"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::WeightSum(sum));
        }
        Ok(Self { members, weights })
    }

    pub fn uniform(members: Vec<usize>) -> Result<Self> {
        let n = members.len();
        let mut weights = vec![1.0 / n as f64; n];
        // Put the rounding remainder on the last member so the sum is exact.
        if n > 0 {
            let head: f64 = weights[..n - 1].iter().sum();
            weights[n - 1] = 1.0 - head;
        }
        Self::new(members, weights)
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn contains(&self, id: usize) -> bool {
        self.members.contains(&id)
    }

    pub fn weight(&self, id: usize) -> Result<f64> {
        self.members
            .iter()
            .position(|&m| m == id)
            .map(|k| self.weights[k])
            .ok_or(Error::NotAMember { member: id })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InteractionGraph {
    pub pe_edges: Vec<PeEdge>,
    pub se_groups: Vec<SeGroup>,
}

impl InteractionGraph {
    pub fn new(n_agents: usize, pe_edges: Vec<PeEdge>, se_groups: Vec<SeGroup>) -> Result<Self> {
        for e in &pe_edges {
            if e.from == e.to {
                return Err(Error::InvalidGraph(format!("self-loop at {}", e.from)));
            }
            if e.from >= n_agents || e.to >= n_agents {
                return Err(Error::InvalidGraph(format!("edge {:?} out of range", e)));
            }
        }
        for g in &se_groups {
            if let Some(&m) = g.members().iter().find(|&&m| m >= n_agents) {
                return Err(Error::InvalidGraph(format!("SE member {m} out of range")));
            }
        }
        Ok(Self { pe_edges, se_groups })
    }

    pub fn undirected(n_agents: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let edges = pairs
            .iter()
            .map(|&(a, b)| PeEdge {
                from: a,
                to: b,
                directed: false,
            })
            .collect();
        Self::new(n_agents, edges, Vec::new())
    }

    /// Agents whose states agent `i`'s own Lyapunov function depends on.
    pub fn pe_neighbors(&self, i: usize) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for e in &self.pe_edges {
            if e.to == i {
                out.insert(e.from);
            }
            if !e.directed && e.from == i {
                out.insert(e.to);
            }
        }
        out
    }

    pub fn has_directed_edges(&self) -> bool {
        self.pe_edges.iter().any(|e| e.directed)
    }

    pub fn se_groups_of(&self, i: usize) -> impl Iterator<Item = &SeGroup> {
        self.se_groups.iter().filter(move |g| g.contains(i))
    }
}

/// Linear class-K function `s -> rate * s`. Serves both as `alpha` for
/// Lyapunov decrease and as the extended `gamma` for barriers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassK {
    pub rate: f64,
}

impl ClassK {
    pub fn linear(rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::Config(format!("class-K rate must be positive, got {rate}")));
        }
        Ok(Self { rate })
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.rate * s
    }
}

impl Default for ClassK {
    fn default() -> Self {
        Self { rate: 1.0 }
    }
}

pub fn evaluate_class_k(f: ClassK, s: f64) -> f64 {
    f.eval(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn class_k_examples() {
        let k = ClassK::linear(2.0).unwrap();
        assert_eq!(evaluate_class_k(k, 0.0), 0.0);
        assert_eq!(evaluate_class_k(k, 0.5), 1.0);
        assert!(ClassK::linear(0.0).is_err());
        assert!(ClassK::linear(-1.0).is_err());
    }

    #[test]
    fn stack_examples() {
        let a = vec![AgentState::new(0, vec![1.0, 2.0]), AgentState::new(1, vec![3.0, 4.0])];
        assert_eq!(stack_state(&a).unwrap().as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(stack_state(&[]).unwrap().len(), 0);
        let dup = vec![AgentState::new(0, vec![1.0]), AgentState::new(0, vec![2.0])];
        assert_eq!(stack_state(&dup), Err(Error::DuplicateAgent(0)));
    }

    #[test]
    fn state_rejects_gaps_and_nan() {
        let gap = vec![AgentState::new(0, vec![0.0]), AgentState::new(2, vec![0.0])];
        assert!(MultiAgentState::new(gap, 0.0).is_err());
        assert!(MultiAgentState::from_positions(&[vec![f64::NAN, 0.0]], 0.0).is_err());
    }

    #[test]
    fn se_group_validation() {
        assert!(SeGroup::new(vec![0, 1], vec![0.5, 0.5]).is_ok());
        assert!(SeGroup::new(vec![0, 1], vec![1.5, -0.5]).is_ok());
        assert!(matches!(SeGroup::new(vec![0, 1], vec![0.5, 0.4]), Err(Error::WeightSum(_))));
        assert!(SeGroup::new(vec![0], vec![1.0]).is_err());
        let g = SeGroup::uniform(vec![0, 1, 2]).unwrap();
        assert_eq!(g.weights().iter().sum::<f64>(), 1.0);
        assert!(g.weight(5).is_err());
    }

    #[test]
    fn graph_neighbors_respect_direction() {
        let g = InteractionGraph::new(
            3,
            vec![
                PeEdge { from: 0, to: 1, directed: false },
                PeEdge { from: 2, to: 1, directed: true },
            ],
            vec![],
        )
        .unwrap();
        assert_eq!(g.pe_neighbors(1).into_iter().collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(g.pe_neighbors(2).len(), 0);
        assert!(InteractionGraph::undirected(2, &[(1, 1)]).is_err());
    }

    #[test]
    fn single_integrator_shapes() {
        let p = ControlAffinePlant::single_integrator(3);
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(p.drift(&x).unwrap(), DVector::zeros(3));
        assert_eq!(p.actuation(&x).unwrap(), DMatrix::identity(3, 3));
        let bad = ControlAffinePlant::new(2, 1, |_| DVector::zeros(2), |_| DMatrix::zeros(2, 2));
        assert!(bad.actuation(&DVector::zeros(2)).is_err());
    }

    proptest! {
        #[test]
        fn class_k_properties(rate in 0.01f64..10.0, a in 0.0f64..100.0, b in 0.0f64..100.0) {
            let k = ClassK::linear(rate).unwrap();
            prop_assert_eq!(k.eval(0.0), 0.0);
            if a < b { prop_assert!(k.eval(a) < k.eval(b)); }
            prop_assert!(k.eval(a + b) <= k.eval(a) + k.eval(b) + 1e-12 * (a + b) * rate);
        }

        #[test]
        fn stack_unstack_roundtrip(v in proptest::collection::vec(-10.0f64..10.0, 0..8), three in proptest::bool::ANY) {
            let d = if three { 3 } else { 2 };
            let n = v.len() / d;
            let agents: Vec<AgentState> = (0..n).map(|i| AgentState::new(i, v[i*d..(i+1)*d].to_vec())).collect();
            let s = stack_state(&agents).unwrap();
            let back = unstack_state(&s, &vec![d; n]).unwrap();
            prop_assert_eq!(back, agents);
        }
    }
}
