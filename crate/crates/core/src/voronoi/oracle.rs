//! Independent reference computations for the tessellation and its
//! integrals. They share no code with the production paths beyond the
//! density evaluation.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Matrix2, Vector2};

use super::density::DensityField;
use super::geometry::{tessellate, Point, RectDomain};
use super::moments::tessellation_moments;
use super::quadrature::QuadratureConfig;
use crate::error::Result;
use crate::par::Execution;

/// Index of the site nearest to `q` (lowest index on ties).
pub fn nearest_site(sites: &[Point], q: Point) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, s) in sites.iter().enumerate() {
        let d = (q[0] - s[0]).powi(2) + (q[1] - s[1]).powi(2);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

/// Clips a polygon to `{q : n . q <= c}` (no edge bookkeeping).
fn clip_plain(poly: &[Point], n: Point, c: f64) -> Vec<Point> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for k in 0..poly.len() {
        let p = poly[k];
        let q = poly[(k + 1) % poly.len()];
        let sp = n[0] * p[0] + n[1] * p[1] - c;
        let sq = n[0] * q[0] + n[1] * q[1] - c;
        if sp <= 0.0 {
            out.push(p);
        }
        if (sp <= 0.0) != (sq <= 0.0) {
            let t = sp / (sp - sq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    out
}

/// Area and centroid of a simple polygon.
fn area_centroid(poly: &[Point]) -> (f64, Point) {
    let mut a = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for k in 0..poly.len() {
        let p = poly[k];
        let q = poly[(k + 1) % poly.len()];
        let cr = p[0] * q[1] - q[0] * p[1];
        a += cr;
        cx += (p[0] + q[0]) * cr;
        cy += (p[1] + q[1]) * cr;
    }
    if a.abs() < 1e-300 {
        return (0.0, [0.0, 0.0]);
    }
    (0.5 * a, [cx / (3.0 * a), cy / (3.0 * a)])
}

/// Per-cell mass and first moment on an `nx` by `ny` pixel grid.
///
/// Pixels whose corners share a nearest site lie entirely in that convex
/// cell and use a 2x2 Gauss product rule. Mixed pixels are cut exactly by
/// the bisectors and each piece uses a one-point rule at its centroid.
pub fn grid_moments(
    sites: &[Point],
    domain: &RectDomain,
    density: &DensityField,
    t: f64,
    nx: usize,
    ny: usize,
) -> Vec<(f64, Point)> {
    let rho = density.at(t);
    let hx = (domain.x_max - domain.x_min) / nx as f64;
    let hy = (domain.y_max - domain.y_min) / ny as f64;
    let g = 0.5 / 3f64.sqrt();
    let mut mass = vec![0.0; sites.len()];
    let mut first = vec![[0.0; 2]; sites.len()];
    let xs: Vec<f64> = (0..=nx).map(|k| domain.x_min + k as f64 * hx).collect();
    let ys: Vec<f64> = (0..=ny).map(|k| domain.y_min + k as f64 * hy).collect();
    // Nearest-site labels on the grid corners, computed once.
    let label: Vec<usize> = (0..=ny)
        .flat_map(|r| xs.iter().map(move |&x| (x, r)))
        .map(|(x, r)| nearest_site(sites, [x, ys[r]]))
        .collect();
    let lab = |c: usize, r: usize| label[r * (nx + 1) + c];
    for r in 0..ny {
        for c in 0..nx {
            let l = lab(c, r);
            let uniform = lab(c + 1, r) == l && lab(c, r + 1) == l && lab(c + 1, r + 1) == l;
            let (x0, y0) = (xs[c], ys[r]);
            if uniform {
                let (cx, cy) = (x0 + 0.5 * hx, y0 + 0.5 * hy);
                let w = 0.25 * hx * hy;
                for (sx, sy) in [(-g, -g), (g, -g), (-g, g), (g, g)] {
                    let q = [cx + sx * hx, cy + sy * hy];
                    let v = rho.eval(q).0 * w;
                    mass[l] += v;
                    first[l][0] += q[0] * v;
                    first[l][1] += q[1] * v;
                }
            } else {
                let pixel = [[x0, y0], [x0 + hx, y0], [x0 + hx, y0 + hy], [x0, y0 + hy]];
                for i in 0..sites.len() {
                    let mut piece = pixel.to_vec();
                    for j in 0..sites.len() {
                        if j == i || piece.is_empty() {
                            continue;
                        }
                        let n = [sites[j][0] - sites[i][0], sites[j][1] - sites[i][1]];
                        let off = 0.5
                            * ((sites[j][0].powi(2) + sites[j][1].powi(2))
                                - (sites[i][0].powi(2) + sites[i][1].powi(2)));
                        piece = clip_plain(&piece, n, off);
                    }
                    if piece.len() < 3 {
                        continue;
                    }
                    let (a, cen) = area_centroid(&piece);
                    if a <= 0.0 {
                        continue;
                    }
                    let v = rho.eval(cen).0 * a;
                    mass[i] += v;
                    first[i][0] += cen[0] * v;
                    first[i][1] += cen[1] * v;
                }
            }
        }
    }
    mass.into_iter().zip(first).collect()
}

/// Adjacency by direct construction: `i` and `j` are adjacent when the part
/// of their bisector inside the domain and closer to them than to every
/// other site has positive length.
pub fn brute_force_adjacency(sites: &[Point], domain: &RectDomain, min_len: f64) -> BTreeMap<usize, BTreeSet<usize>> {
    let mut adj: BTreeMap<usize, BTreeSet<usize>> = (0..sites.len()).map(|i| (i, BTreeSet::new())).collect();
    for i in 0..sites.len() {
        for j in i + 1..sites.len() {
            let (a, b) = (sites[i], sites[j]);
            let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
            let dir = [-(b[1] - a[1]), b[0] - a[0]];
            let dn = dir[0].hypot(dir[1]);
            let dir = [dir[0] / dn, dir[1] / dn];
            let mut lo = f64::NEG_INFINITY;
            let mut hi = f64::INFINITY;
            // Constraint n . (mid + s dir) <= c.
            let mut cut = |n: Point, c: f64| {
                let nd = n[0] * dir[0] + n[1] * dir[1];
                let slack = c - (n[0] * mid[0] + n[1] * mid[1]);
                if nd.abs() < 1e-300 {
                    if slack < 0.0 {
                        lo = f64::INFINITY;
                    }
                } else if nd > 0.0 {
                    hi = hi.min(slack / nd);
                } else {
                    lo = lo.max(slack / nd);
                }
            };
            cut([1.0, 0.0], domain.x_max);
            cut([-1.0, 0.0], -domain.x_min);
            cut([0.0, 1.0], domain.y_max);
            cut([0.0, -1.0], -domain.y_min);
            for (k, s) in sites.iter().enumerate() {
                if k == i || k == j {
                    continue;
                }
                // ||q - a||^2 <= ||q - s||^2  <=>  2 (s - a) . q <= |s|^2 - |a|^2
                let n = [2.0 * (s[0] - a[0]), 2.0 * (s[1] - a[1])];
                let c = (s[0] * s[0] + s[1] * s[1]) - (a[0] * a[0] + a[1] * a[1]);
                cut(n, c);
            }
            if hi - lo > min_len {
                adj.get_mut(&i).unwrap().insert(j);
                adj.get_mut(&j).unwrap().insert(i);
            }
        }
    }
    adj
}

fn centroids(sites: &[Point], domain: &RectDomain, density: &DensityField, t: f64, quad: &QuadratureConfig) -> Result<Vec<Vector2<f64>>> {
    let cells = tessellate(sites, domain)?;
    Ok(tessellation_moments(Execution::Sequential, &cells, density, t, quad)?
        .into_iter()
        .map(|m| m.centroid)
        .collect())
}

/// Central difference of centroid `j` with respect to site `i`, re-tessellating
/// at every perturbed configuration.
pub fn fd_centroid_jacobian(
    sites: &[Point],
    domain: &RectDomain,
    density: &DensityField,
    t: f64,
    quad: &QuadratureConfig,
    i: usize,
    j: usize,
    h: f64,
) -> Result<Matrix2<f64>> {
    let mut out = Matrix2::zeros();
    for k in 0..2 {
        let mut plus = sites.to_vec();
        let mut minus = sites.to_vec();
        plus[i][k] += h;
        minus[i][k] -= h;
        let gp = centroids(&plus, domain, density, t, quad)?[j];
        let gm = centroids(&minus, domain, density, t, quad)?[j];
        out.set_column(k, &((gp - gm) / (2.0 * h)));
    }
    Ok(out)
}

/// Central difference in time of `0.5 ||x_i - G_i(t)||^2` at frozen sites.
pub fn fd_eulerian(
    sites: &[Point],
    domain: &RectDomain,
    density: &DensityField,
    t: f64,
    quad: &QuadratureConfig,
    i: usize,
    h: f64,
) -> Result<f64> {
    let x = Vector2::new(sites[i][0], sites[i][1]);
    let v = |tt: f64| -> Result<f64> { Ok(0.5 * (x - centroids(sites, domain, density, tt, quad)?[i]).norm_squared()) };
    Ok((v(t + h)? - v(t - h)?) / (2.0 * h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voronoi::geometry::delaunay_neighbors;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sites(rng: &mut ChaCha8Rng, n: usize, d: &RectDomain) -> Vec<Point> {
        (0..n)
            .map(|_| [rng.random_range(d.x_min..d.x_max), rng.random_range(d.y_min..d.y_max)])
            .collect()
    }

    #[test]
    fn grid_oracle_exact_for_uniform_density() {
        let d = RectDomain::default();
        let sites = [[-0.7, 0.1], [0.4, -0.3], [0.9, 0.6]];
        let g = grid_moments(&sites, &d, &DensityField::uniform(1.0), 0.0, 64, 40);
        let total: f64 = g.iter().map(|m| m.0).sum();
        assert!((total - 6.4).abs() < 1e-12);
        let cells = tessellate(&sites, &d).unwrap();
        for (c, m) in cells.iter().zip(&g) {
            assert!((c.area() - m.0).abs() < 1e-12);
        }
    }

    #[test]
    fn brute_force_matches_clipping_adjacency() {
        let d = RectDomain::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let sites = random_sites(&mut rng, 10, &d);
            let cells = tessellate(&sites, &d).unwrap();
            assert_eq!(delaunay_neighbors(&cells), brute_force_adjacency(&sites, &d, 1e-9));
        }
    }

    #[test]
    fn nearest_site_membership() {
        let d = RectDomain::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sites = random_sites(&mut rng, 10, &d);
        let cells = tessellate(&sites, &d).unwrap();
        for _ in 0..2000 {
            let q = [rng.random_range(d.x_min..d.x_max), rng.random_range(d.y_min..d.y_max)];
            assert!(cells[nearest_site(&sites, q)].contains(q, 1e-12));
        }
    }
}
