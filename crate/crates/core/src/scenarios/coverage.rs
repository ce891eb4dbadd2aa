//! Time-varying coverage: every agent tracks the density centroid of its
//! Voronoi cell, `V_i = 0.5 |x_i - G_i|^2`.
//!
//! Moving `x_i` moves the centroids of `i` and of every Delaunay neighbor,
//! so the gradient of the total carries a term per neighbor. The
//! per-agent baseline drops those terms.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DVector, Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::{build_pe_constraint, LinearControlConstraint, LyapunovSpec};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::sim::{Adjacency, LocalView, Scenario};
use crate::types::{AgentState, ControlAffinePlant, MultiAgentState};
use crate::voronoi::moments::own_edge_jacobian;
use crate::voronoi::{tessellate_with, tessellation_moments, CellMoments, DensityField, QuadratureConfig, RectDomain};

/// Which terms of the gradient of the total enter each agent's row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientTerms {
    /// Own and neighbor terms: the gradient of the total.
    #[default]
    Full,
    /// Only the gradient of the agent's own `V_i`.
    OwnOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageSpec {
    pub domain: RectDomain,
    pub density: DensityField,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    /// Edges shorter than this add a second candidate gradient computed as
    /// if the edge were absent.
    #[serde(default)]
    pub switch_band: Option<f64>,
    #[serde(default)]
    pub terms: GradientTerms,
}

impl CoverageSpec {
    pub fn new(domain: RectDomain, density: DensityField) -> Self {
        Self {
            domain,
            density,
            quadrature: QuadratureConfig::default(),
            switch_band: None,
            terms: GradientTerms::Full,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        self.density.validate()?;
        self.quadrature.validate()?;
        if let Some(b) = self.switch_band {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::Config(format!("switch band must be positive, got {b}")));
            }
        }
        Ok(())
    }
}

/// Site and centroid of a neighboring cell, as seen by its neighbor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborCentroid {
    pub site: Vector2<f64>,
    pub centroid: Vector2<f64>,
    /// d G_own / d x_neighbor, from the neighbor's cell.
    pub jac_from: Matrix2<f64>,
}

fn gradient_from(
    own: &CellMoments,
    jac_own: Matrix2<f64>,
    neighbors: &BTreeMap<usize, NeighborCentroid>,
    skip: &BTreeSet<usize>,
    terms: GradientTerms,
) -> Result<DVector<f64>> {
    let e = own.site - own.centroid;
    let mut g = (Matrix2::identity() - jac_own).transpose() * e;
    if terms == GradientTerms::Full {
        for (j, jac) in &own.jac_neighbor {
            if skip.contains(j) {
                continue;
            }
            let nb = neighbors.get(j).ok_or(Error::StaleMoments(*j))?;
            g += jac.transpose() * (nb.centroid - nb.site);
        }
    }
    Ok(DVector::from_column_slice(g.as_slice()))
}

/// Coverage Lyapunov data for agent `i` at `position`. Errors when the
/// moments were computed for a different site.
pub fn coverage_clf(
    i: usize,
    position: &DVector<f64>,
    own: &CellMoments,
    neighbors: &BTreeMap<usize, NeighborCentroid>,
    terms: GradientTerms,
    switch_band: Option<f64>,
) -> Result<LyapunovSpec> {
    if own.owner != i || position.len() != 2 || position[0] != own.site[0] || position[1] != own.site[1] {
        return Err(Error::StaleMoments(i));
    }
    let primary = gradient_from(own, own.jac_own, neighbors, &BTreeSet::new(), terms)?;
    let mut candidate_gradients = vec![primary];
    if let Some(band) = switch_band {
        let short: BTreeSet<usize> = own.edges.iter().filter(|e| e.length < band).map(|e| e.neighbor).collect();
        if !short.is_empty() {
            let g_rel = own.centroid - own.site;
            let mut jac = own.jac_own;
            for e in own.edges.iter().filter(|e| short.contains(&e.neighbor)) {
                jac -= own_edge_jacobian(e, g_rel, own.mass);
            }
            candidate_gradients.push(gradient_from(own, jac, neighbors, &short, terms)?);
        }
    }
    let e = own.site - own.centroid;
    let neighbor_gradients = neighbors
        .iter()
        .map(|(j, nb)| (*j, DVector::from_column_slice((-(nb.jac_from.transpose() * e)).as_slice())))
        .collect();
    Ok(LyapunovSpec {
        value: own.value(),
        partial_t: own.eulerian,
        candidate_gradients,
        neighbor_gradients,
    })
}

fn positions_2d(state: &MultiAgentState) -> Result<Vec<[f64; 2]>> {
    state
        .agents
        .iter()
        .map(|a| {
            if a.dim() != 2 {
                Err(Error::Dimension("coverage agents must be planar".into()))
            } else {
                Ok([a.position[0], a.position[1]])
            }
        })
        .collect()
}

/// Total coverage Lyapunov value for arbitrary sites (re-tessellating).
pub fn coverage_total(spec: &CoverageSpec, sites: &[[f64; 2]], t: f64) -> Result<f64> {
    let cells = tessellate_with(Execution::Sequential, sites, &spec.domain)?;
    Ok(tessellation_moments(Execution::Sequential, &cells, &spec.density, t, &spec.quadrature)?
        .iter()
        .map(CellMoments::value)
        .sum())
}

#[derive(Debug, Clone)]
pub struct CoverageScenario {
    spec: CoverageSpec,
    initial: MultiAgentState,
    plant: ControlAffinePlant,
    name: String,
}

impl CoverageScenario {
    pub fn new(spec: CoverageSpec, initial: MultiAgentState) -> Result<Self> {
        spec.validate()?;
        let sites = positions_2d(&initial)?;
        tessellate_with(Execution::Sequential, &sites, &spec.domain)?;
        let name = match spec.terms {
            GradientTerms::Full => "coverage",
            GradientTerms::OwnOnly => "baseline_peragent",
        }
        .to_string();
        Ok(Self { spec, initial, plant: ControlAffinePlant::single_integrator(2), name })
    }

    /// `n` agents drawn uniformly from the central `fill` fraction of the
    /// domain.
    pub fn random_start(spec: CoverageSpec, n: usize, seed: u64, fill: f64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = spec.domain;
        let (cx, cy) = (0.5 * (d.x_min + d.x_max), 0.5 * (d.y_min + d.y_max));
        let (hx, hy) = (0.5 * fill * (d.x_max - d.x_min), 0.5 * fill * (d.y_max - d.y_min));
        let agents = (0..n)
            .map(|i| AgentState::new(i, vec![cx + rng.random_range(-hx..hx), cy + rng.random_range(-hy..hy)]))
            .collect();
        Self::new(spec, MultiAgentState::new(agents, 0.0)?)
    }

    /// Caps every input coordinate at `cap` in magnitude.
    pub fn with_speed_cap(mut self, cap: f64) -> Self {
        self.plant.input_bounds = Some(crate::types::InputBox::speed_cap(self.plant.input_dim(), cap));
        self
    }

    pub fn spec(&self) -> &CoverageSpec {
        &self.spec
    }
}

impl Scenario for CoverageScenario {
    type Local = CellMoments;

    fn name(&self) -> &str {
        &self.name
    }

    fn initial_state(&self) -> &MultiAgentState {
        &self.initial
    }

    fn plant(&self, _agent: usize) -> &ControlAffinePlant {
        &self.plant
    }

    fn prepare(&self, state: &MultiAgentState, exec: Execution) -> Result<Vec<CellMoments>> {
        let sites = positions_2d(state)?;
        let cells = tessellate_with(exec, &sites, &self.spec.domain)?;
        tessellation_moments(exec, &cells, &self.spec.density, state.time, &self.spec.quadrature)
    }

    fn neighborhood(&self, locals: &[CellMoments], agent: usize) -> BTreeSet<usize> {
        locals[agent].neighbors().collect()
    }

    fn agent_constraints(&self, view: &LocalView<'_, CellMoments>) -> Result<Vec<LinearControlConstraint>> {
        let i = view.agent();
        let own = view.own_local();
        let neighbors = own
            .neighbors()
            .map(|j| {
                let nb = view.local(j);
                let jac_from = nb.jac_neighbor.get(&i).copied().ok_or(Error::StaleMoments(j))?;
                Ok((j, NeighborCentroid { site: nb.site, centroid: nb.centroid, jac_from }))
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        let spec = coverage_clf(i, view.own_position(), own, &neighbors, self.spec.terms, self.spec.switch_band)?;
        build_pe_constraint(&spec, &self.plant, view.own_position(), view.alpha())
    }

    fn lyapunov_values(&self, _state: &MultiAgentState, locals: &[CellMoments]) -> Result<Vec<f64>> {
        Ok(locals.iter().map(CellMoments::value).collect())
    }

    fn topology(&self, locals: &[CellMoments]) -> Option<Adjacency> {
        let mut adj: Adjacency = (0..locals.len()).map(|i| (i, BTreeSet::new())).collect();
        for m in locals {
            for j in m.neighbors() {
                adj.entry(m.owner).or_default().insert(j);
                adj.entry(j).or_default().insert(m.owner);
            }
        }
        Some(adj)
    }
}

/// The per-agent time-varying baseline: same scenario, own terms only.
pub fn baseline_peragent_tv(mut spec: CoverageSpec, initial: MultiAgentState) -> Result<CoverageScenario> {
    spec.terms = GradientTerms::OwnOnly;
    CoverageScenario::new(spec, initial)
}
