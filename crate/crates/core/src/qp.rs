//! Small dense strictly convex QPs:
//!
//! ```text
//! minimize   1/2 x' diag(h) x
//! subject to a_k' x <= b_k      for every row k
//!            lower <= x <= upper (optional box)
//! ```
//!
//! [`ActiveSetSolver`] is a dual active-set method (Goldfarb-Idnani) run in
//! Hessian-scaled coordinates, where the problem is a minimum-norm projection
//! onto a polyhedron. [`oracle_solve`] enumerates active sets against the full
//! KKT system and serves as an independent check.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Regularization added to a singular active-set Gram matrix before retrying.
pub const KKT_PERTURBATION: f64 = 1e-12;
/// Row cap for [`oracle_solve`].
pub const ORACLE_MAX_ROWS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct QpRow {
    pub normal: DVector<f64>,
    pub offset: f64,
}

impl QpRow {
    pub fn new(normal: impl Into<Vec<f64>>, offset: f64) -> Self {
        Self {
            normal: DVector::from_vec(normal.into()),
            offset,
        }
    }

    /// `a' x - b`; positive means violated.
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        self.normal.dot(x) - self.offset
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    hessian_diag: DVector<f64>,
    rows: Vec<QpRow>,
    bounds: Option<(Vec<f64>, Vec<f64>)>,
}

impl QuadraticProgram {
    pub fn new(hessian_diag: impl Into<Vec<f64>>, rows: Vec<QpRow>) -> Result<Self> {
        let h = DVector::from_vec(hessian_diag.into());
        if h.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Config("Hessian diagonal must be positive and finite".into()));
        }
        for r in &rows {
            if r.normal.len() != h.len() {
                return Err(Error::Dimension(format!(
                    "row has {} entries, QP has dimension {}",
                    r.normal.len(),
                    h.len()
                )));
            }
            if !r.offset.is_finite() || r.normal.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("QP row"));
            }
        }
        Ok(Self {
            hessian_diag: h,
            rows,
            bounds: None,
        })
    }

    /// Minimizes `||x||^2`, i.e. Hessian `2 I`.
    pub fn min_norm(dim: usize, rows: Vec<QpRow>) -> Result<Self> {
        Self::new(vec![2.0; dim], rows)
    }

    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != self.dim() || upper.len() != self.dim() {
            return Err(Error::Dimension("box bounds".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(Error::Config("box lower bound exceeds upper bound".into()));
        }
        self.bounds = Some((lower, upper));
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.hessian_diag.len()
    }

    pub fn hessian_diag(&self) -> &DVector<f64> {
        &self.hessian_diag
    }

    pub fn rows(&self) -> &[QpRow] {
        &self.rows
    }

    /// Explicit rows followed by finite box faces (`x_k <= u_k`, `-x_k <= -l_k`).
    pub fn all_rows(&self) -> Vec<QpRow> {
        let mut out = self.rows.clone();
        if let Some((lo, hi)) = &self.bounds {
            let n = self.dim();
            for k in 0..n {
                if hi[k].is_finite() {
                    let mut a = DVector::zeros(n);
                    a[k] = 1.0;
                    out.push(QpRow { normal: a, offset: hi[k] });
                }
                if lo[k].is_finite() {
                    let mut a = DVector::zeros(n);
                    a[k] = -1.0;
                    out.push(QpRow { normal: a, offset: -lo[k] });
                }
            }
        }
        out
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x
            .iter()
            .zip(self.hessian_diag.iter())
            .map(|(v, h)| h * v * v)
            .sum::<f64>()
    }

    /// Same problem with every row (normal and offset) multiplied by `c`.
    pub fn scaled_rows(&self, c: f64) -> Self {
        let mut out = self.clone();
        for r in &mut out.rows {
            r.normal *= c;
            r.offset *= c;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
}

impl QpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            QpStatus::Optimal => "optimal",
            QpStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub point: DVector<f64>,
    /// Indices into [`QuadraticProgram::all_rows`].
    pub active_set: Vec<usize>,
    /// One multiplier per entry of `all_rows`, zero for inactive rows.
    pub multipliers: Vec<f64>,
    pub kkt_residual: f64,
    pub status: QpStatus,
    pub objective: f64,
}

impl QpSolution {
    fn infeasible(dim: usize, n_rows: usize) -> Self {
        Self {
            point: DVector::zeros(dim),
            active_set: Vec::new(),
            multipliers: vec![0.0; n_rows],
            kkt_residual: f64::INFINITY,
            status: QpStatus::Infeasible,
            objective: f64::INFINITY,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

/// Scaled KKT residual at `(x, lambda)`: the largest of stationarity,
/// primal infeasibility, negative multipliers and complementarity, each
/// divided by the magnitude of the terms that produce it. Multipliers grow
/// like the inverse angle between nearly parallel active rows, so absolute
/// residuals are not comparable across instances.
pub fn kkt_residual(qp: &QuadraticProgram, rows: &[QpRow], x: &DVector<f64>, lambda: &[f64]) -> f64 {
    let hx = qp.hessian_diag.component_mul(x);
    let mut stat = hx.clone();
    let mut stat_scale = 1.0 + hx.amax();
    for (r, &l) in rows.iter().zip(lambda) {
        stat.axpy(l, &r.normal, 1.0);
        stat_scale = stat_scale.max(l.abs() * r.normal.amax());
    }
    let mut res = stat.amax() / stat_scale;
    let xn = x.amax();
    for (r, &l) in rows.iter().zip(lambda) {
        let v = r.violation(x);
        let row_scale = 1.0 + r.offset.abs() + r.normal.amax() * xn;
        res = res
            .max(v.max(0.0) / row_scale)
            .max((-l).max(0.0) / (1.0 + l.abs()))
            .max((l * v).abs() / ((1.0 + l.abs()) * row_scale));
    }
    res
}

/// Convenience wrapper: cold-start solve.
pub fn solve(qp: &QuadraticProgram, tol: f64) -> Result<QpSolution> {
    ActiveSetSolver::new(tol).solve(qp)
}

/// Dual active-set solver with optional warm start from the previous
/// solution's active set. One instance per agent; holds no shared state.
#[derive(Debug, Clone)]
pub struct ActiveSetSolver {
    pub tol: f64,
    warm: Vec<usize>,
}

impl Default for ActiveSetSolver {
    fn default() -> Self {
        Self::new(1e-10)
    }
}

struct Scaled {
    /// Unit normals in scaled coordinates; `None` for zero rows.
    normals: Vec<Option<DVector<f64>>>,
    offsets: Vec<f64>,
    /// Norm of each scaled normal, to map multipliers back.
    norms: Vec<f64>,
    sqrt_h: DVector<f64>,
}

impl ActiveSetSolver {
    pub fn new(tol: f64) -> Self {
        Self { tol, warm: Vec::new() }
    }

    pub fn warm_set(&self) -> &[usize] {
        &self.warm
    }

    pub fn reset(&mut self) {
        self.warm.clear();
    }

    pub fn solve(&mut self, qp: &QuadraticProgram) -> Result<QpSolution> {
        let rows = qp.all_rows();
        let sc = scale(qp, &rows);
        // Degenerate rows 0'x <= b with b < 0 can never hold.
        for (k, n) in sc.normals.iter().enumerate() {
            if n.is_none() && rows[k].offset < -self.tol {
                self.warm.clear();
                return Ok(QpSolution::infeasible(qp.dim(), rows.len()));
            }
        }
        let warm = std::mem::take(&mut self.warm);
        let active = match self.try_warm(&sc, &warm) {
            Some(a) => a,
            None => match self.dual_active_set(&sc)? {
                Some(a) => a,
                None => return Ok(QpSolution::infeasible(qp.dim(), rows.len())),
            },
        };
        let sol = self.finish(qp, &rows, &sc, active)?;
        self.warm = sol.active_set.clone();
        Ok(sol)
    }

    fn feasible_tol(&self, sc: &Scaled, k: usize, z: &DVector<f64>) -> f64 {
        0.1 * self.tol * (1.0 + sc.offsets[k].abs()) + 1e-14 * z.norm()
    }

    /// Accepts the previous active set if its equality-constrained solution
    /// is primal and dual feasible.
    fn try_warm(&self, sc: &Scaled, warm: &[usize]) -> Option<Vec<usize>> {
        if warm.is_empty() {
            return None;
        }
        let active: Vec<usize> = warm
            .iter()
            .copied()
            .filter(|&k| k < sc.normals.len() && sc.normals[k].is_some())
            .collect();
        if active.len() != warm.len() || active.len() > sc.sqrt_h.len() {
            return None;
        }
        let (z, lam) = equality_solution(sc, &active).ok()?;
        if lam.iter().any(|&l| l < 0.0) {
            return None;
        }
        for k in 0..sc.normals.len() {
            if let Some(n) = &sc.normals[k] {
                if n.dot(&z) - sc.offsets[k] > self.feasible_tol(sc, k, &z) {
                    return None;
                }
            }
        }
        Some(active)
    }

    /// Goldfarb-Idnani iterations. Returns the final active set, or `None`
    /// when the constraints are inconsistent.
    fn dual_active_set(&self, sc: &Scaled) -> Result<Option<Vec<usize>>> {
        let n = sc.sqrt_h.len();
        let m = sc.normals.len();
        let mut z = DVector::<f64>::zeros(n);
        let mut active: Vec<usize> = Vec::new();
        let mut lambda: Vec<f64> = Vec::new();
        let max_iter = 20 * (m + n) + 100;
        let mut iter = 0;

        loop {
            // Most violated inactive row.
            let mut pick: Option<(usize, f64)> = None;
            for k in 0..m {
                if active.contains(&k) {
                    continue;
                }
                let Some(nk) = &sc.normals[k] else { continue };
                let v = nk.dot(&z) - sc.offsets[k];
                if v > self.feasible_tol(sc, k, &z) && pick.is_none_or(|(_, best)| v > best) {
                    pick = Some((k, v));
                }
            }
            let Some((p, _)) = pick else {
                return Ok(Some(active));
            };
            let np = sc.normals[p].as_ref().expect("picked rows are nonzero");
            let mut lambda_p = 0.0;

            loop {
                iter += 1;
                if iter > max_iter {
                    return Err(Error::SingularKkt);
                }
                let (dir, r) = projected_step(sc, &active, np)?;
                let v = np.dot(&z) - sc.offsets[p];
                let dir_sq = dir.norm_squared();

                // Dual step limit from multipliers that would turn negative.
                let mut t1 = f64::INFINITY;
                let mut block = None;
                for (j, &rj) in r.iter().enumerate() {
                    if rj > 1e-14 {
                        let t = lambda[j] / rj;
                        if t < t1 {
                            t1 = t;
                            block = Some(j);
                        }
                    }
                }

                if active.len() >= n || dir_sq < 1e-20 {
                    // Row p is a combination of active rows: no primal progress.
                    let Some(j) = block else {
                        return Ok(None);
                    };
                    for (l, rj) in lambda.iter_mut().zip(&r) {
                        *l -= t1 * rj;
                    }
                    lambda_p += t1;
                    active.remove(j);
                    lambda.remove(j);
                    continue;
                }

                let t2 = v / dir_sq;
                let t = t1.min(t2);
                z -= &dir * t;
                for (l, rj) in lambda.iter_mut().zip(&r) {
                    *l -= t * rj;
                }
                lambda_p += t;
                if t2 <= t1 {
                    active.push(p);
                    lambda.push(lambda_p);
                    break;
                }
                let j = block.expect("finite t1 has a blocking row");
                active.remove(j);
                lambda.remove(j);
            }
        }
    }

    fn finish(
        &self,
        qp: &QuadraticProgram,
        rows: &[QpRow],
        sc: &Scaled,
        mut active: Vec<usize>,
    ) -> Result<QpSolution> {
        active.sort_unstable();
        let (z, lam_scaled) = equality_solution(sc, &active)?;
        let x = z.component_div(&sc.sqrt_h);
        let mut multipliers = vec![0.0; rows.len()];
        for (&k, &l) in active.iter().zip(&lam_scaled) {
            multipliers[k] = (l / sc.norms[k]).max(0.0);
        }
        let kkt = kkt_residual(qp, rows, &x, &multipliers);
        Ok(QpSolution {
            objective: qp.objective(&x),
            point: x,
            active_set: active,
            multipliers,
            kkt_residual: kkt,
            status: QpStatus::Optimal,
        })
    }
}

fn scale(qp: &QuadraticProgram, rows: &[QpRow]) -> Scaled {
    let sqrt_h = qp.hessian_diag.map(f64::sqrt);
    let mut normals = Vec::with_capacity(rows.len());
    let mut offsets = Vec::with_capacity(rows.len());
    let mut norms = Vec::with_capacity(rows.len());
    for r in rows {
        let n = r.normal.component_div(&sqrt_h);
        let norm = n.norm();
        if norm < 1e-300 {
            normals.push(None);
            offsets.push(r.offset);
            norms.push(1.0);
        } else {
            normals.push(Some(n / norm));
            offsets.push(r.offset / norm);
            norms.push(norm);
        }
    }
    Scaled {
        normals,
        offsets,
        norms,
        sqrt_h,
    }
}

fn active_matrix(sc: &Scaled, active: &[usize]) -> DMatrix<f64> {
    let n = sc.sqrt_h.len();
    let mut nm = DMatrix::zeros(n, active.len());
    for (c, &k) in active.iter().enumerate() {
        nm.set_column(c, sc.normals[k].as_ref().expect("active rows are nonzero"));
    }
    nm
}

/// Solves `G y = rhs` with `G = N'N`, retrying once with `G + rho I`.
fn gram_solve(nm: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let gram = nm.transpose() * nm;
    if let Some(ch) = gram.clone().cholesky() {
        let y = ch.solve(rhs);
        if y.iter().all(|v| v.is_finite()) {
            return Ok(y);
        }
    }
    let k = gram.nrows();
    let reg = gram + DMatrix::identity(k, k) * KKT_PERTURBATION;
    let ch = reg.cholesky().ok_or(Error::SingularKkt)?;
    let y = ch.solve(rhs);
    if y.iter().all(|v| v.is_finite()) {
        Ok(y)
    } else {
        Err(Error::SingularKkt)
    }
}

/// Primal step direction (component of `np` orthogonal to the active
/// normals) and dual direction `r = (N'N)^-1 N' np`.
fn projected_step(sc: &Scaled, active: &[usize], np: &DVector<f64>) -> Result<(DVector<f64>, Vec<f64>)> {
    if active.is_empty() {
        return Ok((np.clone(), Vec::new()));
    }
    let nm = active_matrix(sc, active);
    let r = gram_solve(&nm, &(nm.transpose() * np))?;
    let dir = np - &nm * &r;
    Ok((dir, r.iter().copied().collect()))
}

/// Minimum-norm point on the affine set `N' z = b_A`, with multipliers.
/// Uses a thin QR of `N`; falls back to the regularized Gram system when
/// `R` is numerically singular.
fn equality_solution(sc: &Scaled, active: &[usize]) -> Result<(DVector<f64>, Vec<f64>)> {
    let n = sc.sqrt_h.len();
    if active.is_empty() {
        return Ok((DVector::zeros(n), Vec::new()));
    }
    let nm = active_matrix(sc, active);
    let b = DVector::from_iterator(active.len(), active.iter().map(|&k| sc.offsets[k]));
    let qr = nm.clone().qr();
    let r = qr.r();
    let well_posed = active.len() <= n && r.diagonal().iter().all(|d| d.abs() > 1e-13);
    let y = if well_posed {
        // N = Q R, so N'N y = b becomes R' R y = b.
        let w = r.tr_solve_upper_triangular(&b);
        w.and_then(|w| r.solve_upper_triangular(&w))
    } else {
        None
    };
    let y = match y {
        Some(y) if y.iter().all(|v| v.is_finite()) => y,
        _ => gram_solve(&nm, &b)?,
    };
    let z = &nm * &y;
    let lam: Vec<f64> = y.iter().map(|v| -v).collect();
    Ok((z, lam))
}

/// Exhaustive active-set enumeration. For every subset of rows with full
/// row rank, solves the KKT system
///
/// ```text
/// [ H  A_S' ] [x]   [0  ]
/// [ A_S  0  ] [l] = [b_S]
/// ```
///
/// and keeps the lowest-objective candidate that is primal feasible with
/// nonnegative multipliers. Exponential in the row count.
pub fn oracle_solve(qp: &QuadraticProgram) -> Result<QpSolution> {
    let rows = qp.all_rows();
    let m = rows.len();
    if m > ORACLE_MAX_ROWS {
        return Err(Error::TooManyRows {
            rows: m,
            max: ORACLE_MAX_ROWS,
        });
    }
    let n = qp.dim();
    let mut best: Option<QpSolution> = None;
    for mask in 0u32..(1u32 << m) {
        let subset: Vec<usize> = (0..m).filter(|k| mask & (1 << k) != 0).collect();
        let s = subset.len();
        if s > n {
            continue;
        }
        let mut a = DMatrix::zeros(s, n);
        for (r, &k) in subset.iter().enumerate() {
            a.set_row(r, &rows[k].normal.transpose());
        }
        if s > 0 && a.clone().svd(false, false).rank(1e-10 * a.amax().max(1.0)) < s {
            continue;
        }
        let mut kkt = DMatrix::zeros(n + s, n + s);
        for i in 0..n {
            kkt[(i, i)] = qp.hessian_diag[i];
        }
        kkt.view_mut((0, n), (n, s)).copy_from(&a.transpose());
        kkt.view_mut((n, 0), (s, n)).copy_from(&a);
        let mut rhs = DVector::zeros(n + s);
        for (r, &k) in subset.iter().enumerate() {
            rhs[n + r] = rows[k].offset;
        }
        let Some(sol) = kkt.full_piv_lu().solve(&rhs) else {
            continue;
        };
        let x = sol.rows(0, n).clone_owned();
        let mut lambda = vec![0.0; m];
        for (r, &k) in subset.iter().enumerate() {
            lambda[k] = sol[n + r];
        }
        let scale = 1.0 + x.norm();
        let primal_ok = rows
            .iter()
            .all(|r| r.violation(&x) <= 1e-9 * (scale + r.offset.abs()));
        let dual_ok = lambda.iter().all(|&l| l >= -1e-9);
        if !(primal_ok && dual_ok) {
            continue;
        }
        let obj = qp.objective(&x);
        if best.as_ref().is_none_or(|b| obj < b.objective) {
            for l in &mut lambda {
                *l = l.max(0.0);
            }
            best = Some(QpSolution {
                kkt_residual: kkt_residual(qp, &rows, &x, &lambda),
                point: x,
                active_set: subset,
                multipliers: lambda,
                status: QpStatus::Optimal,
                objective: obj,
            });
        }
    }
    Ok(best.unwrap_or_else(|| QpSolution::infeasible(n, m)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(a: &[f64], b: f64) -> QpRow {
        QpRow::new(a.to_vec(), b)
    }

    #[test]
    fn unconstrained_is_origin() {
        let qp = QuadraticProgram::min_norm(2, vec![]).unwrap();
        for s in [solve(&qp, 1e-10).unwrap(), oracle_solve(&qp).unwrap()] {
            assert!(s.is_optimal());
            assert_eq!(s.point.as_slice(), &[0.0, 0.0]);
        }
    }

    #[test]
    fn half_space_projection() {
        let qp = QuadraticProgram::min_norm(2, vec![row(&[1.0, 0.0], -1.0)]).unwrap();
        for s in [solve(&qp, 1e-10).unwrap(), oracle_solve(&qp).unwrap()] {
            assert!((s.point[0] + 1.0).abs() < 1e-14);
            assert!(s.point[1].abs() < 1e-14);
            assert!((s.multipliers[0] - 2.0).abs() < 1e-12);
            assert_eq!(s.active_set, vec![0]);
            assert!(s.kkt_residual < 1e-12);
        }
    }

    #[test]
    fn contradictory_half_spaces_are_infeasible() {
        let qp = QuadraticProgram::min_norm(
            2,
            vec![row(&[1.0, 0.0], -1.0), row(&[-1.0, 0.0], -1.0)],
        )
        .unwrap();
        assert_eq!(solve(&qp, 1e-10).unwrap().status, QpStatus::Infeasible);
        assert_eq!(oracle_solve(&qp).unwrap().status, QpStatus::Infeasible);
    }

    #[test]
    fn zero_row_with_negative_offset_is_infeasible() {
        let qp = QuadraticProgram::min_norm(2, vec![row(&[0.0, 0.0], -0.5)]).unwrap();
        assert_eq!(solve(&qp, 1e-10).unwrap().status, QpStatus::Infeasible);
        let ok = QuadraticProgram::min_norm(2, vec![row(&[0.0, 0.0], 0.0)]).unwrap();
        assert!(solve(&ok, 1e-10).unwrap().is_optimal());
    }

    #[test]
    fn box_bounds_clip() {
        let qp = QuadraticProgram::min_norm(2, vec![row(&[1.0, 1.0], -3.0)])
            .unwrap()
            .with_bounds(vec![-1.0, -1.0], vec![1.0, 1.0])
            .unwrap();
        assert_eq!(solve(&qp, 1e-10).unwrap().status, QpStatus::Infeasible);
        let qp = QuadraticProgram::min_norm(2, vec![row(&[1.0, 0.2], -3.0)])
            .unwrap()
            .with_bounds(vec![-2.0, -2.0], vec![2.0, 2.0])
            .unwrap();
        let a = solve(&qp, 1e-10).unwrap();
        let b = oracle_solve(&qp).unwrap();
        assert!((a.point - b.point).amax() < 1e-10);
    }

    #[test]
    fn parallel_duplicate_rows() {
        let qp = QuadraticProgram::min_norm(
            2,
            vec![row(&[1.0, 0.0], -1.0), row(&[2.0, 0.0], -2.0), row(&[1.0, 1.0], -1.0)],
        )
        .unwrap();
        let a = solve(&qp, 1e-10).unwrap();
        let b = oracle_solve(&qp).unwrap();
        assert!((a.point - b.point).amax() < 1e-12);
        assert!(a.kkt_residual < 1e-10);
    }

    #[test]
    fn warm_start_reuses_active_set() {
        let qp = QuadraticProgram::min_norm(2, vec![row(&[1.0, 0.0], -1.0), row(&[0.0, 1.0], 5.0)]).unwrap();
        let mut s = ActiveSetSolver::new(1e-10);
        let a = s.solve(&qp).unwrap();
        assert_eq!(s.warm_set(), &[0]);
        let b = s.solve(&qp).unwrap();
        assert_eq!(a, b);
        // Stale warm set that is no longer optimal falls back to a cold start.
        let qp2 = QuadraticProgram::min_norm(2, vec![row(&[1.0, 0.0], 1.0), row(&[0.0, 1.0], -5.0)]).unwrap();
        let c = s.solve(&qp2).unwrap();
        assert!((c.point[1] + 5.0).abs() < 1e-12 && c.point[0].abs() < 1e-12);
    }

    #[test]
    fn oracle_row_cap() {
        let rows = (0..17).map(|k| row(&[1.0], k as f64)).collect();
        let qp = QuadraticProgram::min_norm(1, rows).unwrap();
        assert!(matches!(oracle_solve(&qp), Err(Error::TooManyRows { .. })));
    }

    #[test]
    fn rejects_nonpositive_hessian() {
        assert!(QuadraticProgram::new(vec![1.0, 0.0], vec![]).is_err());
    }

    fn arb_qp() -> impl Strategy<Value = QuadraticProgram> {
        (1usize..=4).prop_flat_map(|n| {
            (
                proptest::collection::vec(0.1f64..10.0, n),
                proptest::collection::vec(
                    (proptest::collection::vec(-2.0f64..2.0, n), -2.0f64..2.0),
                    0..=8,
                ),
            )
                .prop_map(|(h, rows)| {
                    QuadraticProgram::new(h, rows.into_iter().map(|(a, b)| QpRow::new(a, b)).collect()).unwrap()
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(512))]
        #[test]
        fn single_row_matches_closed_form(a in proptest::collection::vec(-3.0f64..3.0, 2), b in -3.0f64..3.0) {
            prop_assume!(a[0].abs() + a[1].abs() > 1e-3);
            let qp = QuadraticProgram::min_norm(2, vec![QpRow::new(a.clone(), b)]).unwrap();
            let s = solve(&qp, 1e-10).unwrap();
            let an = DVector::from_vec(a);
            let expect = if b >= 0.0 { DVector::zeros(2) } else { &an * (b / an.norm_squared()) };
            prop_assert!((s.point - expect).amax() < 1e-12);
        }

        #[test]
        fn solver_agrees_with_oracle(qp in arb_qp()) {
            let a = solve(&qp, 1e-10).unwrap();
            let b = oracle_solve(&qp).unwrap();
            prop_assert_eq!(a.status, b.status);
            if a.is_optimal() {
                prop_assert!((&a.point - &b.point).amax() < 1e-8 * (1.0 + b.point.amax()));
                prop_assert!(a.kkt_residual < 1e-10);
            }
        }

        #[test]
        fn positive_row_scaling_keeps_argmin(qp in arb_qp(), c in 0.1f64..10.0) {
            let a = solve(&qp, 1e-10).unwrap();
            let b = solve(&qp.scaled_rows(c), 1e-10).unwrap();
            prop_assert_eq!(a.status, b.status);
            if a.is_optimal() {
                prop_assert!((&a.point - &b.point).amax() < 1e-9 * (1.0 + a.point.amax()));
            }
        }
    }
}
