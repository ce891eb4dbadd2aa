//! Mass, centroid, centroid sensitivities and the Eulerian rate of every
//! cell under a time-varying density.
//!
//! Integrals are taken in coordinates relative to the cell's own site to
//! limit cancellation. Sensitivities come from the bisector edges only: the
//! domain walls do not move with the sites.

use std::collections::BTreeMap;

use nalgebra::{Matrix2, Vector2};

use super::density::{DensityField, FrozenDensity};
use super::geometry::{Point, VoronoiCell};
use super::quadrature::{coarse_polygon, integrate_polygon, integrate_segment, segment_rule, QuadratureConfig};
use crate::error::{Error, Result};
use crate::par::{self, Execution};

/// Line integrals of `rho`, `r rho` and `r r^T rho` over one bisector edge,
/// with `r = q - site`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMoments {
    pub neighbor: usize,
    pub neighbor_site: Vector2<f64>,
    /// Distance between the two sites.
    pub separation: f64,
    /// Length of the shared edge.
    pub length: f64,
    pub m0: f64,
    pub m1: Vector2<f64>,
    pub m2: Matrix2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellMoments {
    pub owner: usize,
    pub time: f64,
    pub site: Vector2<f64>,
    pub mass: f64,
    pub centroid: Vector2<f64>,
    /// Partial time derivative of the centroid at fixed sites.
    pub centroid_rate: Vector2<f64>,
    /// Partial time derivative of `0.5 ||site - centroid||^2` at fixed sites.
    pub eulerian: f64,
    /// d centroid / d own site.
    pub jac_own: Matrix2<f64>,
    /// `jac_neighbor[j]` is d centroid_j / d own site.
    pub jac_neighbor: BTreeMap<usize, Matrix2<f64>>,
    pub edges: Vec<EdgeMoments>,
}

impl CellMoments {
    /// `0.5 ||site - centroid||^2`.
    pub fn value(&self) -> f64 {
        0.5 * (self.site - self.centroid).norm_squared()
    }

    pub fn neighbors(&self) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().map(|e| e.neighbor)
    }
}

fn v2(p: Point) -> Vector2<f64> {
    Vector2::new(p[0], p[1])
}

fn cell_radius(cell: &VoronoiCell) -> f64 {
    cell.polygon
        .iter()
        .map(|p| (p[0] - cell.site[0]).hypot(p[1] - cell.site[1]))
        .fold(0.0, f64::max)
        .max(1e-12)
}

/// Area and edge integrals of one cell. `jac_neighbor` is left empty; it
/// needs the neighbors' masses and centroids (see [`tessellation_moments`]).
pub fn cell_moments(
    cell: &VoronoiCell,
    density: &DensityField,
    t: f64,
    quad: &QuadratureConfig,
) -> Result<CellMoments> {
    cell_moments_frozen(cell, &density.at(t), t, quad)
}

fn cell_moments_frozen(
    cell: &VoronoiCell,
    rho: &FrozenDensity,
    t: f64,
    quad: &QuadratureConfig,
) -> Result<CellMoments> {
    let s = cell.site;
    let radius = cell_radius(cell);
    let area_f = |q: Point| {
        let (v, r) = rho.eval(q);
        let dx = q[0] - s[0];
        let dy = q[1] - s[1];
        [v, dx * v, dy * v, r, dx * r, dy * r]
    };
    let scale = coarse_polygon(&cell.polygon, &|q: Point| {
        let (v, r) = rho.eval(q);
        [v, r.abs()]
    }, 1);
    let sm = scale[0];
    let sr = scale[1] + 1e-6 * sm;
    let rt = quad.rtol;
    let tol = [
        rt * sm,
        rt * sm * radius,
        rt * sm * radius,
        rt * sr,
        rt * sr * radius,
        rt * sr * radius,
    ];
    let a = integrate_polygon(&cell.polygon, &area_f, &tol, quad)?;
    let mass = a[0];
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::Singular(format!("cell {} has mass {mass}", cell.owner)));
    }
    let site = v2(s);
    let g_rel = Vector2::new(a[1], a[2]) / mass;
    let centroid = site + g_rel;
    let rate_mass = a[3];
    let rate_first = Vector2::new(a[4], a[5]);
    // int (q - G) rho_t = int r rho_t - (G - x) int rho_t
    let euler_int = rate_first - g_rel * rate_mass;
    let centroid_rate = euler_int / mass;
    let eulerian = (centroid - site).dot(&euler_int) / mass;

    let mut edges = Vec::with_capacity(cell.neighbor_edges.len());
    let mut jac_own = Matrix2::zeros();
    for e in &cell.neighbor_edges {
        let edge_f = |q: Point| {
            let (v, _) = rho.eval(q);
            let dx = q[0] - s[0];
            let dy = q[1] - s[1];
            [v, dx * v, dy * v, dx * dx * v, dx * dy * v, dy * dy * v]
        };
        let (pa, pb) = (e.segment.a, e.segment.b);
        let se = segment_rule(pa, pb, &|q: Point| [rho.eval(q).0])[0];
        let etol = [
            rt * se,
            rt * se * radius,
            rt * se * radius,
            rt * se * radius * radius,
            rt * se * radius * radius,
            rt * se * radius * radius,
        ];
        let m = integrate_segment(pa, pb, &edge_f, &etol, quad)?;
        let neighbor_site = v2(e.neighbor_site);
        let separation = (neighbor_site - site).norm();
        let m1 = Vector2::new(m[1], m[2]);
        let m2 = Matrix2::new(m[3], m[4], m[4], m[5]);
        let em = EdgeMoments {
            neighbor: e.neighbor,
            neighbor_site,
            separation,
            length: e.segment.length(),
            m0: m[0],
            m1,
            m2,
        };
        jac_own += own_edge_jacobian(&em, g_rel, mass);
        edges.push(em);
    }
    Ok(CellMoments {
        owner: cell.owner,
        time: t,
        site,
        mass,
        centroid,
        centroid_rate,
        eulerian,
        jac_own,
        jac_neighbor: BTreeMap::new(),
        edges,
    })
}

/// Contribution of one edge to d G_i / d x_i:
/// `int (q - G_i)(q - x_i)^T rho ds / (M_i ||x_j - x_i||)`, with `g_rel = G_i - x_i`.
pub fn own_edge_jacobian(edge: &EdgeMoments, g_rel: Vector2<f64>, mass: f64) -> Matrix2<f64> {
    (edge.m2 - g_rel * edge.m1.transpose()) / (mass * edge.separation)
}

/// d G_j / d x_i from cell i's edge shared with j:
/// `int (G_j - q)(q - x_i)^T rho ds / (M_j ||x_j - x_i||)`.
pub fn neighbor_jacobian(own: &CellMoments, edge: &EdgeMoments, neighbor: &CellMoments) -> Matrix2<f64> {
    let gj_rel = neighbor.centroid - own.site;
    (gj_rel * edge.m1.transpose() - edge.m2) / (neighbor.mass * edge.separation)
}

/// Moments of every cell of one tessellation, including the cross-cell
/// Jacobians. Cells must be indexed by owner id.
pub fn tessellation_moments(
    exec: Execution,
    cells: &[VoronoiCell],
    density: &DensityField,
    t: f64,
    quad: &QuadratureConfig,
) -> Result<Vec<CellMoments>> {
    let frozen = density.at(t);
    let mut out = par::try_map_indexed(exec, cells.len(), |i| {
        debug_assert_eq!(cells[i].owner, i);
        cell_moments_frozen(&cells[i], &frozen, t, quad)
    })?;
    let jacs: Vec<BTreeMap<usize, Matrix2<f64>>> = par::map_indexed(exec, out.len(), |i| {
        out[i]
            .edges
            .iter()
            .map(|e| (e.neighbor, neighbor_jacobian(&out[i], e, &out[e.neighbor])))
            .collect()
    });
    for (m, j) in out.iter_mut().zip(jacs) {
        m.jac_neighbor = j;
    }
    Ok(out)
}

/// Integral of the density over a rectangle, by the same cubature.
pub fn domain_mass(domain: &super::geometry::RectDomain, density: &DensityField, t: f64, quad: &QuadratureConfig) -> Result<f64> {
    let rho = density.at(t);
    let poly = domain.corners();
    let f = |q: Point| [rho.eval(q).0];
    let scale = coarse_polygon(&poly, &f, 1)[0];
    Ok(integrate_polygon(&poly, &f, &[quad.rtol * scale], quad)?[0])
}
