//! Adaptive cubature on triangles and Gauss-Legendre quadrature on segments.
//!
//! Integrands are vector valued (`[f64; K]`) so that every moment of a cell
//! shares one set of density evaluations. Refinement stops once a panel and
//! its children agree to within the panel's share of the absolute tolerance.

use serde::{Deserialize, Serialize};

use super::geometry::Point;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureConfig {
    /// Relative tolerance between successive refinements.
    pub rtol: f64,
    /// Maximum dyadic subdivision depth.
    pub max_level: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { rtol: 1e-8, max_level: 12 }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.rtol < 1.0) {
            return Err(Error::Config(format!("quadrature.rtol must lie in (0, 1), got {}", self.rtol)));
        }
        if self.max_level == 0 || self.max_level > 16 {
            return Err(Error::Config(format!("quadrature.max_level must lie in 1..=16, got {}", self.max_level)));
        }
        Ok(())
    }
}

/// Seven-point symmetric rule, exact for polynomials of degree 5.
/// Entries are (barycentric a, barycentric b, weight); the third coordinate
/// is `1 - a - b`.
const TRIANGLE_RULE: [(f64, f64, f64); 7] = {
    const W0: f64 = 0.225;
    const W1: f64 = 0.132394152788506;
    const A1: f64 = 0.059715871789770;
    const B1: f64 = 0.470142064105115;
    const W2: f64 = 0.125939180544827;
    const A2: f64 = 0.797426985353087;
    const B2: f64 = 0.101286507323456;
    [
        (1.0 / 3.0, 1.0 / 3.0, W0),
        (A1, B1, W1),
        (B1, A1, W1),
        (B1, B1, W1),
        (A2, B2, W2),
        (B2, A2, W2),
        (B2, B2, W2),
    ]
};

/// Eight-point Gauss-Legendre rule on [-1, 1] (positive half; symmetric).
const GL8: [(f64, f64); 4] = [
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
];

pub type Triangle = [Point; 3];

pub fn triangle_area(t: &Triangle) -> f64 {
    0.5 * ((t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[2][0] - t[0][0]) * (t[1][1] - t[0][1])).abs()
}

/// One application of the fixed rule.
pub fn triangle_rule<const K: usize, F>(t: &Triangle, f: &F) -> [f64; K]
where
    F: Fn(Point) -> [f64; K],
{
    let area = triangle_area(t);
    let mut acc = [0.0; K];
    for &(a, b, w) in &TRIANGLE_RULE {
        let c = 1.0 - a - b;
        let q = [
            a * t[0][0] + b * t[1][0] + c * t[2][0],
            a * t[0][1] + b * t[1][1] + c * t[2][1],
        ];
        let v = f(q);
        for k in 0..K {
            acc[k] += w * v[k];
        }
    }
    acc.map(|s| s * area)
}

fn midpoint(a: Point, b: Point) -> Point {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

/// Four congruent children via edge midpoints.
pub fn split4(t: &Triangle) -> [Triangle; 4] {
    let m01 = midpoint(t[0], t[1]);
    let m12 = midpoint(t[1], t[2]);
    let m20 = midpoint(t[2], t[0]);
    [
        [t[0], m01, m20],
        [m01, t[1], m12],
        [m20, m12, t[2]],
        [m01, m12, m20],
    ]
}

fn add<const K: usize>(a: &mut [f64; K], b: &[f64; K]) {
    for k in 0..K {
        a[k] += b[k];
    }
}

fn adapt_triangle<const K: usize, F>(
    t: &Triangle,
    f: &F,
    coarse: [f64; K],
    tol: &[f64; K],
    level: usize,
    max_level: usize,
) -> Result<[f64; K]>
where
    F: Fn(Point) -> [f64; K],
{
    let children = split4(t);
    let parts: Vec<[f64; K]> = children.iter().map(|c| triangle_rule(c, f)).collect();
    let mut fine = [0.0; K];
    for p in &parts {
        add(&mut fine, p);
    }
    if (0..K).all(|k| (fine[k] - coarse[k]).abs() <= tol[k]) {
        return Ok(fine);
    }
    if level >= max_level {
        return Err(Error::Quadrature { estimate: fine[0], level });
    }
    let child_tol = tol.map(|x| 0.25 * x);
    let mut out = [0.0; K];
    for (c, p) in children.iter().zip(parts) {
        let v = adapt_triangle(c, f, p, &child_tol, level + 1, max_level)?;
        add(&mut out, &v);
    }
    Ok(out)
}

/// Integrates over a triangle to absolute tolerance `tol` per component.
pub fn integrate_triangle<const K: usize, F>(
    t: &Triangle,
    f: &F,
    tol: &[f64; K],
    cfg: &QuadratureConfig,
) -> Result<[f64; K]>
where
    F: Fn(Point) -> [f64; K],
{
    adapt_triangle(t, f, triangle_rule(t, f), tol, 1, cfg.max_level)
}

/// Fan triangulation of a convex polygon from its first vertex.
pub fn fan(poly: &[Point]) -> Vec<Triangle> {
    (1..poly.len().saturating_sub(1))
        .map(|k| [poly[0], poly[k], poly[k + 1]])
        .collect()
}

/// Integrates over a convex polygon; the tolerance is shared among fan
/// triangles in proportion to their area.
pub fn integrate_polygon<const K: usize, F>(
    poly: &[Point],
    f: &F,
    tol: &[f64; K],
    cfg: &QuadratureConfig,
) -> Result<[f64; K]>
where
    F: Fn(Point) -> [f64; K],
{
    let tris = fan(poly);
    let total: f64 = tris.iter().map(triangle_area).sum();
    let mut out = [0.0; K];
    if total <= 0.0 {
        return Ok(out);
    }
    for t in &tris {
        let share = triangle_area(t) / total;
        if share <= 0.0 {
            continue;
        }
        let v = integrate_triangle(t, f, &tol.map(|x| x * share), cfg)?;
        add(&mut out, &v);
    }
    Ok(out)
}

/// Non-adaptive estimate on the fan, each triangle split `level` times.
/// Used to set tolerance scales.
pub fn coarse_polygon<const K: usize, F>(poly: &[Point], f: &F, level: usize) -> [f64; K]
where
    F: Fn(Point) -> [f64; K],
{
    let mut stack: Vec<Triangle> = fan(poly);
    for _ in 0..level {
        stack = stack.iter().flat_map(split4).collect();
    }
    let mut out = [0.0; K];
    for t in &stack {
        add(&mut out, &triangle_rule(t, f));
    }
    out
}

/// Eight-point Gauss-Legendre on a segment, with respect to arc length.
pub fn segment_rule<const K: usize, F>(a: Point, b: Point, f: &F) -> [f64; K]
where
    F: Fn(Point) -> [f64; K],
{
    let mid = midpoint(a, b);
    let half = [0.5 * (b[0] - a[0]), 0.5 * (b[1] - a[1])];
    let jac = half[0].hypot(half[1]);
    let mut acc = [0.0; K];
    for &(x, w) in &GL8 {
        for s in [-x, x] {
            let v = f([mid[0] + s * half[0], mid[1] + s * half[1]]);
            for k in 0..K {
                acc[k] += w * v[k];
            }
        }
    }
    acc.map(|s| s * jac)
}

fn adapt_segment<const K: usize, F>(
    a: Point,
    b: Point,
    f: &F,
    whole: [f64; K],
    tol: &[f64; K],
    level: usize,
    max_level: usize,
) -> Result<[f64; K]>
where
    F: Fn(Point) -> [f64; K],
{
    let m = midpoint(a, b);
    let left = segment_rule(a, m, f);
    let right = segment_rule(m, b, f);
    let mut fine = left;
    add(&mut fine, &right);
    if (0..K).all(|k| (fine[k] - whole[k]).abs() <= tol[k]) {
        return Ok(fine);
    }
    if level >= max_level {
        return Err(Error::Quadrature { estimate: fine[0], level });
    }
    let half_tol = tol.map(|x| 0.5 * x);
    let mut out = adapt_segment(a, m, f, left, &half_tol, level + 1, max_level)?;
    add(&mut out, &adapt_segment(m, b, f, right, &half_tol, level + 1, max_level)?);
    Ok(out)
}

/// Line integral over segment `ab` to absolute tolerance `tol`.
pub fn integrate_segment<const K: usize, F>(
    a: Point,
    b: Point,
    f: &F,
    tol: &[f64; K],
    cfg: &QuadratureConfig,
) -> Result<[f64; K]>
where
    F: Fn(Point) -> [f64; K],
{
    adapt_segment(a, b, f, segment_rule(a, b, f), tol, 1, cfg.max_level)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_rule_is_exact_to_degree_five() {
        // Reference triangle (0,0),(1,0),(0,1): int x^a y^b = a! b! / (a+b+2)!
        let t: Triangle = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        for a in 0..=5u32 {
            for b in 0..=(5 - a) {
                let got = triangle_rule(&t, &|q: Point| [q[0].powi(a as i32) * q[1].powi(b as i32)])[0];
                let want = fact(a) * fact(b) / fact(a + b + 2);
                assert!((got - want).abs() < 1e-14, "x^{a} y^{b}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn segment_rule_is_exact_to_degree_fifteen() {
        let got = segment_rule([0.0, 0.0], [2.0, 0.0], &|q: Point| [q[0].powi(15)])[0];
        assert!((got - 2f64.powi(16) / 16.0).abs() < 1e-9);
    }

    #[test]
    fn adaptive_polygon_integrates_gaussian() {
        let f = |q: Point| [(-(q[0] * q[0] + q[1] * q[1]) / 0.02).exp()];
        let poly = [[-3.0, -3.0], [3.0, -3.0], [3.0, 3.0], [-3.0, 3.0]];
        let got = integrate_polygon(&poly, &f, &[1e-12], &QuadratureConfig::default()).unwrap()[0];
        let want = std::f64::consts::PI * 0.01 * 2.0;
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }

    #[test]
    fn unreachable_tolerance_reports_level() {
        let cfg = QuadratureConfig { rtol: 1e-8, max_level: 2 };
        let t: Triangle = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let f = |q: Point| [(q[0] - 0.3).abs().sqrt()];
        match integrate_triangle(&t, &f, &[1e-15], &cfg) {
            Err(Error::Quadrature { level, estimate }) => {
                assert_eq!(level, 2);
                assert!(estimate > 0.0);
            }
            other => panic!("expected quadrature error, got {other:?}"),
        }
    }

    #[test]
    fn config_rejects_bad_values() {
        assert!(QuadratureConfig { rtol: 0.0, max_level: 12 }.validate().is_err());
        assert!(QuadratureConfig { rtol: 1e-8, max_level: 0 }.validate().is_err());
        assert!(QuadratureConfig::default().validate().is_ok());
    }
}
