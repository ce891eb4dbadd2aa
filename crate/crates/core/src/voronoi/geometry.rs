//! Bounded Voronoi cells by half-plane clipping of the domain rectangle.
//!
//! O(N^2) in the number of sites, which is fine for the tens of agents this
//! crate targets; past a few hundred sites a sweep-line construction would
//! win.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};

pub type Point = [f64; 2];

/// Sites closer than this are treated as coincident.
pub const MIN_SITE_SEPARATION: f64 = 1e-9;
/// Bisector edges shorter than this do not count as adjacency.
pub const MIN_EDGE_LENGTH: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectDomain {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for RectDomain {
    fn default() -> Self {
        Self {
            x_min: -1.6,
            x_max: 1.6,
            y_min: -1.0,
            y_max: 1.0,
        }
    }
}

impl RectDomain {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let d = Self { x_min, x_max, y_min, y_max };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.x_min, self.x_max, self.y_min, self.y_max];
        if vals.iter().any(|v| !v.is_finite()) || self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(Error::Config(format!("domain {self:?} has empty interior")));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.x_min && p[0] <= self.x_max && p[1] >= self.y_min && p[1] <= self.y_max
    }

    /// Counterclockwise corners starting at the lower-left.
    pub fn corners(&self) -> [Point; 4] {
        [
            [self.x_min, self.y_min],
            [self.x_max, self.y_min],
            [self.x_max, self.y_max],
            [self.x_min, self.y_max],
        ]
    }

    pub fn diameter(&self) -> f64 {
        (self.x_max - self.x_min).hypot(self.y_max - self.y_min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
}

impl Segment {
    pub fn length(&self) -> f64 {
        (self.b[0] - self.a[0]).hypot(self.b[1] - self.a[1])
    }
}

/// What lies across one polygon edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeTag {
    Wall,
    Neighbor(usize),
}

/// A bisector edge shared with one neighbor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborEdge {
    pub neighbor: usize,
    pub neighbor_site: Point,
    pub segment: Segment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoronoiCell {
    pub owner: usize,
    pub site: Point,
    /// Convex, counterclockwise.
    pub polygon: Vec<Point>,
    /// `tags[k]` labels the edge from `polygon[k]` to `polygon[k + 1]`.
    pub tags: Vec<EdgeTag>,
    pub neighbor_edges: Vec<NeighborEdge>,
    pub wall_edges: Vec<Segment>,
}

impl VoronoiCell {
    pub fn area(&self) -> f64 {
        polygon_area(&self.polygon)
    }

    pub fn neighbor_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.neighbor_edges.iter().map(|e| e.neighbor)
    }

    pub fn contains(&self, p: Point, tol: f64) -> bool {
        point_in_convex(&self.polygon, p, tol)
    }
}

/// Shoelace area (positive for counterclockwise polygons).
pub fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for k in 0..n {
        let p = poly[k];
        let q = poly[(k + 1) % n];
        s += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * s
}

/// Inside-or-on test for a counterclockwise convex polygon.
pub fn point_in_convex(poly: &[Point], p: Point, tol: f64) -> bool {
    let n = poly.len();
    (0..n).all(|k| {
        let a = poly[k];
        let b = poly[(k + 1) % n];
        let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        cross >= -tol * (b[0] - a[0]).hypot(b[1] - a[1])
    })
}

/// Half-plane `{q : normal . q <= offset}` of points at least as close to
/// `own` as to `other`.
pub fn bisector_halfplane(own: Point, other: Point) -> (Point, f64) {
    let normal = [other[0] - own[0], other[1] - own[1]];
    let offset = 0.5 * ((other[0] * other[0] + other[1] * other[1]) - (own[0] * own[0] + own[1] * own[1]));
    (normal, offset)
}

/// Clips a tagged convex polygon by a half-plane. The cut edge gets `cut_tag`.
fn clip(poly: &[Point], tags: &[EdgeTag], normal: Point, offset: f64, cut_tag: EdgeTag) -> (Vec<Point>, Vec<EdgeTag>) {
    let n = poly.len();
    let side = |p: Point| normal[0] * p[0] + normal[1] * p[1] - offset;
    let mut out_p = Vec::with_capacity(n + 1);
    let mut out_t = Vec::with_capacity(n + 1);
    for k in 0..n {
        let p = poly[k];
        let q = poly[(k + 1) % n];
        let (sp, sq) = (side(p), side(q));
        let p_in = sp <= 0.0;
        let q_in = sq <= 0.0;
        let cross = || {
            let t = sp / (sp - sq);
            [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
        };
        match (p_in, q_in) {
            (true, true) => {
                out_p.push(p);
                out_t.push(tags[k]);
            }
            (true, false) => {
                out_p.push(p);
                out_t.push(tags[k]);
                out_p.push(cross());
                out_t.push(cut_tag);
            }
            (false, true) => {
                out_p.push(cross());
                out_t.push(tags[k]);
            }
            (false, false) => {}
        }
    }
    dedup(out_p, out_t)
}

/// Drops zero-length edges, keeping the tag of the edge that follows.
fn dedup(poly: Vec<Point>, tags: Vec<EdgeTag>) -> (Vec<Point>, Vec<EdgeTag>) {
    let n = poly.len();
    if n == 0 {
        return (poly, tags);
    }
    let mut out_p = Vec::with_capacity(n);
    let mut out_t = Vec::with_capacity(n);
    for k in 0..n {
        let next = poly[(k + 1) % n];
        let d = (next[0] - poly[k][0]).hypot(next[1] - poly[k][1]);
        if d > 1e-15 || n == 1 {
            out_p.push(poly[k]);
            out_t.push(tags[k]);
        }
    }
    (out_p, out_t)
}

fn check_sites(positions: &[Point], domain: &RectDomain) -> Result<()> {
    domain.validate()?;
    for (i, p) in positions.iter().enumerate() {
        if !p[0].is_finite() || !p[1].is_finite() {
            return Err(Error::NonFinite("site position"));
        }
        if !domain.contains(*p) {
            return Err(Error::OutsideDomain(i));
        }
    }
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            let d = (positions[i][0] - positions[j][0]).hypot(positions[i][1] - positions[j][1]);
            if d <= MIN_SITE_SEPARATION {
                return Err(Error::CoincidentSites(i, j));
            }
        }
    }
    Ok(())
}

/// Cell of site `i`: the domain clipped by every bisector half-plane.
pub fn build_cell(positions: &[Point], domain: &RectDomain, i: usize) -> VoronoiCell {
    let own = positions[i];
    let mut poly: Vec<Point> = domain.corners().to_vec();
    let mut tags = vec![EdgeTag::Wall; 4];
    // Nearest sites first shrinks the polygon early.
    let mut order: Vec<usize> = (0..positions.len()).filter(|&j| j != i).collect();
    order.sort_by(|&a, &b| {
        let da = (positions[a][0] - own[0]).hypot(positions[a][1] - own[1]);
        let db = (positions[b][0] - own[0]).hypot(positions[b][1] - own[1]);
        da.total_cmp(&db).then(a.cmp(&b))
    });
    for j in order {
        let (normal, offset) = bisector_halfplane(own, positions[j]);
        (poly, tags) = clip(&poly, &tags, normal, offset, EdgeTag::Neighbor(j));
    }
    let n = poly.len();
    let mut neighbor_edges = Vec::new();
    let mut wall_edges = Vec::new();
    for k in 0..n {
        let seg = Segment { a: poly[k], b: poly[(k + 1) % n] };
        match tags[k] {
            EdgeTag::Neighbor(j) => {
                if seg.length() > MIN_EDGE_LENGTH {
                    neighbor_edges.push(NeighborEdge {
                        neighbor: j,
                        neighbor_site: positions[j],
                        segment: seg,
                    });
                }
            }
            EdgeTag::Wall => wall_edges.push(seg),
        }
    }
    VoronoiCell {
        owner: i,
        site: own,
        polygon: poly,
        tags,
        neighbor_edges,
        wall_edges,
    }
}

/// Voronoi tessellation of `domain` by `positions`.
pub fn tessellate(positions: &[Point], domain: &RectDomain) -> Result<Vec<VoronoiCell>> {
    tessellate_with(Execution::Sequential, positions, domain)
}

pub fn tessellate_with(exec: Execution, positions: &[Point], domain: &RectDomain) -> Result<Vec<VoronoiCell>> {
    check_sites(positions, domain)?;
    Ok(par::map_indexed(exec, positions.len(), |i| build_cell(positions, domain, i)))
}

pub type Adjacency = BTreeMap<usize, BTreeSet<usize>>;

/// Symmetric adjacency from bisector edges (union of both directions).
pub fn delaunay_neighbors(cells: &[VoronoiCell]) -> Adjacency {
    let mut adj: Adjacency = cells.iter().map(|c| (c.owner, BTreeSet::new())).collect();
    for c in cells {
        for j in c.neighbor_ids() {
            adj.entry(c.owner).or_default().insert(j);
            adj.entry(j).or_default().insert(c.owner);
        }
    }
    adj
}

/// Writes `cell_id,x,y` rows, one polygon vertex per line.
pub fn write_cells_csv<W: std::io::Write>(cells: &[VoronoiCell], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cell_id", "x", "y"]).map_err(|e| Error::Io(e.to_string()))?;
    for c in cells {
        for p in &c.polygon {
            w.write_record([c.owner.to_string(), p[0].to_string(), p[1].to_string()])
                .map_err(|e| Error::Io(e.to_string()))?;
        }
    }
    w.flush()?;
    Ok(())
}
