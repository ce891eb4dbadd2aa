//! Pairwise constraint-driven baseline for time-invariant objectives.
//!
//! With a symmetric pairwise cost `J = sum_edges J_ij` and
//! `J_i = sum_j J_ij`, each agent enforces `grad_i J_i . u_i <= -alpha(J_i)`.
//! Symmetry makes `grad_i J_i = grad_i J`, so summing the rows gives
//! `dJ/dt <= -2 alpha(J)` without any neighbor term. The argument needs
//! undirected edges and no explicit time dependence.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::{build_pe_constraint, LinearControlConstraint, LyapunovSpec};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::sim::{LocalView, Scenario};
use crate::types::{AgentState, ControlAffinePlant, InteractionGraph, MultiAgentState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PairwiseCost {
    /// `J_ij = |x_i - x_j|^2`.
    Rendezvous,
    /// `J_ij = (|x_i - x_j|^2 - d_ij^2)^2 / 4`, one length per edge.
    Distance { lengths: Vec<((usize, usize), f64)> },
}

impl PairwiseCost {
    fn length(&self, i: usize, j: usize) -> Option<f64> {
        match self {
            PairwiseCost::Rendezvous => None,
            PairwiseCost::Distance { lengths } => lengths
                .iter()
                .find(|((a, b), _)| (*a, *b) == (i, j) || (*a, *b) == (j, i))
                .map(|(_, d)| *d),
        }
    }

    /// `(J_ij, grad_{x_i} J_ij)`.
    pub fn pair(&self, xi: &DVector<f64>, xj: &DVector<f64>, i: usize, j: usize) -> (f64, DVector<f64>) {
        let diff = xi - xj;
        let r2 = diff.norm_squared();
        match self.length(i, j) {
            None => (r2, diff * 2.0),
            Some(d) => {
                let e = r2 - d * d;
                (0.25 * e * e, diff * e)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct PairwiseScenario {
    neighbors: BTreeMap<usize, BTreeSet<usize>>,
    cost: PairwiseCost,
    initial: MultiAgentState,
    plant: ControlAffinePlant,
}

/// Builds the pairwise baseline. Directed edges break the symmetry the
/// construction relies on and are rejected.
pub fn baseline_pairwise(graph: &InteractionGraph, cost: PairwiseCost, initial: MultiAgentState) -> Result<PairwiseScenario> {
    if graph.has_directed_edges() {
        return Err(Error::InvalidGraph("the pairwise baseline requires undirected edges".into()));
    }
    let n = initial.len();
    let neighbors: BTreeMap<usize, BTreeSet<usize>> = (0..n).map(|i| (i, graph.pe_neighbors(i))).collect();
    if let PairwiseCost::Distance { .. } = &cost {
        for (i, nb) in &neighbors {
            for j in nb {
                if cost.length(*i, *j).is_none() {
                    return Err(Error::Config(format!("no desired length for edge ({i}, {j})")));
                }
            }
        }
    }
    let dim = initial.dims().first().copied().unwrap_or(2);
    Ok(PairwiseScenario { neighbors, cost, initial, plant: ControlAffinePlant::single_integrator(dim) })
}

impl PairwiseScenario {
    /// `n` agents on a complete graph converging to a common point.
    pub fn rendezvous(n: usize, seed: u64) -> Result<Self> {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let graph = InteractionGraph::undirected(n, &pairs)?;
        baseline_pairwise(&graph, PairwiseCost::Rendezvous, random_planar(n, seed, 1.0)?)
    }

    /// Four agents forming a square of side `side` (sides and diagonals).
    pub fn square(side: f64, seed: u64) -> Result<Self> {
        let diag = side * std::f64::consts::SQRT_2;
        let lengths = vec![
            ((0, 1), side),
            ((1, 2), side),
            ((2, 3), side),
            ((3, 0), side),
            ((0, 2), diag),
            ((1, 3), diag),
        ];
        let pairs: Vec<(usize, usize)> = lengths.iter().map(|(p, _)| *p).collect();
        let graph = InteractionGraph::undirected(4, &pairs)?;
        baseline_pairwise(&graph, PairwiseCost::Distance { lengths }, random_planar(4, seed, 1.0)?)
    }

    /// `(J_i, grad_{x_i} J_i)`.
    pub fn local_cost<'a>(&self, i: usize, pos: impl Fn(usize) -> &'a DVector<f64>) -> (f64, DVector<f64>) {
        let xi = pos(i);
        let mut j_i = 0.0;
        let mut g = DVector::zeros(xi.len());
        for &j in &self.neighbors[&i] {
            let (v, gr) = self.cost.pair(xi, pos(j), i, j);
            j_i += v;
            g += gr;
        }
        (j_i, g)
    }
}

fn random_planar(n: usize, seed: u64, spread: f64) -> Result<MultiAgentState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let agents = (0..n)
        .map(|i| AgentState::new(i, vec![rng.random_range(-spread..spread), rng.random_range(-spread..spread)]))
        .collect();
    MultiAgentState::new(agents, 0.0)
}

impl Scenario for PairwiseScenario {
    type Local = ();

    fn name(&self) -> &str {
        "baseline_pairwise"
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
        self.neighbors[&agent].clone()
    }

    fn agent_constraints(&self, view: &LocalView<'_, ()>) -> Result<Vec<LinearControlConstraint>> {
        let i = view.agent();
        let (j_i, g) = self.local_cost(i, |j| if j == i { view.own_position() } else { view.position(j) });
        build_pe_constraint(&LyapunovSpec::smooth(j_i, g, 0.0), &self.plant, view.own_position(), view.alpha())
    }

    /// `J_i / 2` per agent, so the values sum to `J`.
    fn lyapunov_values(&self, state: &MultiAgentState, _locals: &[()]) -> Result<Vec<f64>> {
        Ok((0..state.len()).map(|i| 0.5 * self.local_cost(i, |j| state.position(j)).0).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::PeEdge;

    #[test]
    fn directed_edges_are_rejected() {
        let g = InteractionGraph::new(2, vec![PeEdge { from: 0, to: 1, directed: true }], vec![]).unwrap();
        let init = random_planar(2, 0, 1.0).unwrap();
        assert!(matches!(baseline_pairwise(&g, PairwiseCost::Rendezvous, init), Err(Error::InvalidGraph(_))));
    }

    #[test]
    fn zero_cost_admits_zero_input() {
        let s = PairwiseScenario::rendezvous(3, 1).unwrap();
        let x = DVector::from_vec(vec![0.3, 0.3]);
        let (j, g) = s.local_cost(0, |_| &x);
        assert_eq!(j, 0.0);
        let rows = build_pe_constraint(&LyapunovSpec::smooth(j, g, 0.0), &s.plant, &x, crate::types::ClassK::default()).unwrap();
        assert!(rows[0].residual(&DVector::zeros(2), 0.0) <= 0.0);
    }
}
