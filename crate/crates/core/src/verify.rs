//! Oracle suites: every fast analytic component checked against an
//! independent reference (enumeration, brute-force geometry, finite
//! differences, paired runs).

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::par::Execution;
use crate::qp::{oracle_solve, solve, QpRow, QuadraticProgram};
use crate::scenarios::{
    coverage_clf, coverage_total, formation_terms, formation_total, formation_value, CoverageSpec, FormationSpec,
    GradientTerms, LeaderPath, SharedTracking, SingleAgent, SingleFormulation, SizeLaw,
};
use crate::scenarios::coverage::NeighborCentroid;
use crate::sim::{run, Engine, Scenario, SimConfig};
use crate::types::MultiAgentState;
use crate::voronoi::oracle::{fd_centroid_jacobian, fd_eulerian, nearest_site};
use crate::voronoi::{domain_mass, tessellate, tessellation_moments, DensityField, QuadratureConfig, RectDomain};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl SuiteReport {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }

    fn failed(name: &'static str, e: crate::Error) -> Self {
        Self::new(name, false, format!("error: {e}"))
    }
}

fn wrap(name: &'static str, r: Result<SuiteReport>) -> SuiteReport {
    r.unwrap_or_else(|e| SuiteReport::failed(name, e))
}

/// Every suite, in a fixed order.
pub fn run_all() -> Vec<SuiteReport> {
    vec![qp_suite(200, 7), voronoi_suite(20, 11), derivative_suite(5), equivalence_suite(), allocation_suite(50)]
}

/// Random strictly convex QPs with up to 4 variables and 8 rows against the
/// enumeration oracle: optimizer and objective to 1e-8, KKT residual 1e-10.
pub fn qp_suite(cases: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst_x, mut worst_f, mut worst_kkt) = (0.0f64, 0.0f64, 0.0f64);
    let mut mismatched_status = 0;
    for _ in 0..cases {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(0..=8);
        let h: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..5.0)).collect();
        // Rows are feasible at a random anchor unless the slack is negative.
        let anchor: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let rows = (0..m)
            .map(|_| {
                let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let ax: f64 = a.iter().zip(&anchor).map(|(p, q)| p * q).sum();
                QpRow::new(a, ax + rng.random_range(-0.2..1.0))
            })
            .collect();
        let qp = match QuadraticProgram::new(h, rows) {
            Ok(q) => q,
            Err(e) => return SuiteReport::failed("qp", e),
        };
        let (a, b) = match (solve(&qp, 1e-12), oracle_solve(&qp)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => return SuiteReport::failed("qp", e),
        };
        if a.status != b.status {
            mismatched_status += 1;
            continue;
        }
        if !a.is_optimal() {
            continue;
        }
        worst_x = worst_x.max((&a.point - &b.point).amax());
        worst_f = worst_f.max((a.objective - b.objective).abs());
        worst_kkt = worst_kkt.max(a.kkt_residual);
    }
    let passed = mismatched_status == 0 && worst_x <= 1e-8 && worst_f <= 1e-8 && worst_kkt <= 1e-10;
    SuiteReport::new(
        "qp",
        passed,
        format!("{cases} programs: max |dx| {worst_x:.1e}, max |df| {worst_f:.1e}, max KKT {worst_kkt:.1e}, status mismatches {mismatched_status}"),
    )
}

fn random_sites(rng: &mut ChaCha8Rng, n: usize, d: &RectDomain) -> Vec<[f64; 2]> {
    (0..n).map(|_| [rng.random_range(d.x_min..d.x_max), rng.random_range(d.y_min..d.y_max)]).collect()
}

/// Random 10-agent tessellations: areas tile the domain, masses add up to
/// the whole-domain integral, and sampled points lie in their nearest
/// site's cell.
pub fn voronoi_suite(configs: usize, seed: u64) -> SuiteReport {
    wrap("voronoi", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = RectDomain::default();
        let density = DensityField::drifting_pair(&d);
        let quad = QuadratureConfig { rtol: 1e-10, max_level: 14 };
        let (mut worst_area, mut worst_mass, mut misses) = (0.0f64, 0.0f64, 0usize);
        for k in 0..configs {
            let sites = random_sites(&mut rng, 10, &d);
            let cells = tessellate(&sites, &d)?;
            let area: f64 = cells.iter().map(|c| c.area()).sum();
            worst_area = worst_area.max((area - d.area()).abs());
            let t = k as f64;
            let ms = tessellation_moments(Execution::Sequential, &cells, &density, t, &quad)?;
            let total = domain_mass(&d, &density, t, &quad)?;
            let mass: f64 = ms.iter().map(|m| m.mass).sum();
            worst_mass = worst_mass.max((mass - total).abs() / total);
            for _ in 0..10_000 / configs.max(1) {
                let q = [rng.random_range(d.x_min..d.x_max), rng.random_range(d.y_min..d.y_max)];
                if !cells[nearest_site(&sites, q)].contains(q, 1e-12) {
                    misses += 1;
                }
            }
        }
        Ok(SuiteReport::new(
            "voronoi",
            worst_area <= 1e-9 && worst_mass <= 1e-6 && misses == 0,
            format!("{configs} tessellations: area error {worst_area:.1e}, relative mass error {worst_mass:.1e}, membership misses {misses}"),
        ))
    })())
}

fn derivative_formation() -> FormationSpec {
    FormationSpec::icosahedron(
        SizeLaw { base: 0.6, amplitude: 0.3, period: 20.0 },
        1.0,
        1.0,
        LeaderPath::Lissajous {
            center: vec![0.0; 3],
            amplitude: vec![0.8, 0.5, 0.3],
            omega: vec![0.2, 0.4, 0.3],
            phase: vec![0.0, 0.5, 1.0],
        },
    )
}

/// Largest relative errors of the formation gradient, formation time
/// derivative, coverage gradient, centroid Jacobians and Eulerian term.
#[derive(Debug, Clone, Copy, Default)]
pub struct DerivativeErrors {
    pub formation_gradient: f64,
    pub formation_partial_t: f64,
    pub coverage_gradient: f64,
    pub coverage_jacobian: f64,
    pub coverage_eulerian: f64,
}

fn rel(err: f64, scale: f64) -> f64 {
    err / scale.max(1e-3)
}

pub fn derivative_errors(samples: usize, seed: u64) -> Result<DerivativeErrors> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DerivativeErrors::default();
    let fs = derivative_formation();
    for _ in 0..samples {
        let t = rng.random_range(0.0..20.0);
        let x: Vec<DVector<f64>> =
            fs.at_formation(t).into_iter().map(|p| p.map(|c| c + rng.random_range(-0.2..0.2))).collect();
        let leader = fs.leader.signal(t);
        for i in 0..fs.followers {
            let an = formation_terms(&fs, i, |j| &x[j], &leader, t)?;
            let h = 1e-6;
            let mut fd = DVector::zeros(3);
            for k in 0..3 {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[i][k] += h;
                xm[i][k] -= h;
                fd[k] = (formation_total(&fs, &xp, &leader.position, t) - formation_total(&fs, &xm, &leader.position, t)) / (2.0 * h);
            }
            out.formation_gradient = out.formation_gradient.max(rel((&fd - an.gradient()).norm(), fd.norm()));
            let ht = 1e-5;
            let v = |tt: f64| formation_value(&fs, i, |j| &x[j], &fs.leader.signal(tt).position, tt);
            let fdt = (v(t + ht) - v(t - ht)) / (2.0 * ht);
            out.formation_partial_t = out.formation_partial_t.max(rel((fdt - an.partial_t).abs(), fdt.abs()));
        }
    }
    let d = RectDomain::default();
    let mut cs = CoverageSpec::new(d, DensityField::drifting_pair(&d));
    cs.quadrature = QuadratureConfig { rtol: 1e-11, max_level: 16 };
    for _ in 0..samples {
        let t = rng.random_range(0.0..20.0);
        let sites: Vec<[f64; 2]> = (0..8).map(|_| [rng.random_range(-1.4..1.4), rng.random_range(-0.8..0.8)]).collect();
        let cells = tessellate(&sites, &d)?;
        let ms = tessellation_moments(Execution::Sequential, &cells, &cs.density, t, &cs.quadrature)?;
        let i = rng.random_range(0..sites.len());
        let nbrs = ms[i]
            .neighbors()
            .map(|j| (j, NeighborCentroid { site: ms[j].site, centroid: ms[j].centroid, jac_from: ms[j].jac_neighbor[&i] }))
            .collect();
        let x = DVector::from_vec(sites[i].to_vec());
        let l = coverage_clf(i, &x, &ms[i], &nbrs, GradientTerms::Full, None)?;
        let h = 1e-6;
        let mut fd = DVector::zeros(2);
        for k in 0..2 {
            let (mut p, mut m) = (sites.clone(), sites.clone());
            p[i][k] += h;
            m[i][k] -= h;
            fd[k] = (coverage_total(&cs, &p, t)? - coverage_total(&cs, &m, t)?) / (2.0 * h);
        }
        out.coverage_gradient = out.coverage_gradient.max(rel((&fd - l.gradient()).norm(), fd.norm()));
        let own = fd_centroid_jacobian(&sites, &d, &cs.density, t, &cs.quadrature, i, i, 1e-5)?;
        out.coverage_jacobian = out.coverage_jacobian.max(rel((own - ms[i].jac_own).norm(), own.norm()));
        for (j, jac) in &ms[i].jac_neighbor {
            let fdj = fd_centroid_jacobian(&sites, &d, &cs.density, t, &cs.quadrature, i, *j, 1e-5)?;
            out.coverage_jacobian = out.coverage_jacobian.max(rel((fdj - jac).norm(), fdj.norm()));
        }
        let fde = fd_eulerian(&sites, &d, &cs.density, t, &cs.quadrature, i, 1e-5)?;
        out.coverage_eulerian = out.coverage_eulerian.max(rel((fde - ms[i].eulerian).abs(), fde.abs()));
    }
    Ok(out)
}

/// Formation terms to 1e-6 relative; coverage terms to 1e-3 relative.
pub fn derivative_suite(samples: usize) -> SuiteReport {
    wrap("derivatives", derivative_errors(samples, 5).map(|e| {
        let passed = e.formation_gradient <= 1e-6
            && e.formation_partial_t <= 1e-6
            && e.coverage_gradient <= 1e-3
            && e.coverage_jacobian <= 1e-3
            && e.coverage_eulerian <= 1e-3;
        SuiteReport::new("derivatives", passed, format!("{e:?}"))
    }))
}

/// Largest pointwise position gap between a barrier run and its recast
/// Lyapunov run.
pub fn barrier_lyapunov_gap(steps: usize) -> Result<f64> {
    let target = LeaderPath::Lissajous {
        center: vec![0.0, 0.0],
        amplitude: vec![0.5, 0.3],
        omega: vec![0.7, 1.1],
        phase: vec![0.0, 0.4],
    };
    let cfg = SimConfig { dt: 0.01, steps, ..SimConfig::default() };
    let a = run(&SingleAgent::new(vec![1.0, -0.5], target.clone(), SingleFormulation::Barrier)?, &cfg)?;
    let b = run(&SingleAgent::new(vec![1.0, -0.5], target, SingleFormulation::BarrierAsLyapunov)?, &cfg)?;
    Ok(a.records
        .iter()
        .zip(&b.records)
        .flat_map(|(p, q)| p.positions[0].iter().zip(&q.positions[0]).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max))
}

pub fn equivalence_suite() -> SuiteReport {
    wrap("barrier_lyapunov", barrier_lyapunov_gap(2000).map(|gap| {
        SuiteReport::new("barrier_lyapunov", gap <= 1e-9, format!("max position gap {gap:.1e}"))
    }))
}

/// Along a shared-group trajectory: the summed rows certify
/// `dV/dt + alpha V <= 0`, and the finite-difference derivative of the
/// recorded `V` agrees with the certified one to `10 dt`.
#[derive(Debug, Clone, Copy)]
pub struct SharedReplay {
    /// Largest `sum_i zeta_i . u_i + dV/dt|_t + alpha V`.
    pub max_certified: f64,
    /// Largest `(V_{k+1} - V_k) / dt + alpha V_k`.
    pub max_replayed: f64,
    /// Largest gap between the two.
    pub max_gap: f64,
    pub dt: f64,
}

pub fn shared_replay(seed: u64, noise: f64, dt: f64, steps: usize) -> Result<SharedReplay> {
    let s = SharedTracking::random_triple(seed, noise)?;
    let cfg = SimConfig { dt, steps, ..SimConfig::default() };
    let tr = run(&s, &cfg)?;
    let mut out = SharedReplay { max_certified: f64::NEG_INFINITY, max_replayed: f64::NEG_INFINITY, max_gap: 0.0, dt };
    for w in tr.records.windows(2) {
        // Each row is `zeta_i u_i <= -w_i (dV/dt + alpha V)`; its residual
        // is `zeta_i u_i + w_i (dV/dt + alpha V)`.
        let certified: f64 = w[0].residuals.iter().map(|r| r[0]).sum();
        let replayed = (w[1].v_total - w[0].v_total) / dt + cfg.alpha_rate * w[0].v_total;
        out.max_certified = out.max_certified.max(certified);
        out.max_replayed = out.max_replayed.max(replayed);
        out.max_gap = out.max_gap.max((certified - replayed).abs());
    }
    Ok(out)
}

/// Instantaneous allocation check at random states of a random-weight
/// group: after every member solves its own program, the summed rows give
/// `dV/dt + alpha V <= 0`, and the total derivative they certify matches a
/// central difference of `V` along the joint input.
pub fn allocation_errors(states: usize, seed: u64) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst_sum, mut worst_fd) = (f64::NEG_INFINITY, 0.0f64);
    for k in 0..states {
        let s = SharedTracking::random_triple(seed.wrapping_add(k as u64), 1.0)?;
        let t = rng.random_range(0.0..10.0);
        let positions: Vec<Vec<f64>> = s.initial_state().agents.iter().map(|a| a.position.iter().copied().collect()).collect();
        let state = MultiAgentState::from_positions(&positions, t)?;
        let cfg = SimConfig::default();
        let eval = Engine::new(&s, cfg.clone())?.evaluate(&state)?;
        let certified: f64 = eval.outcomes.iter().map(|o| o.residuals[0]).sum();
        worst_sum = worst_sum.max(certified);
        let spec = s.shared_spec(|j| state.position(j), t);
        let zu: f64 = (0..3).map(|i| spec.member_gradients[&i][0].dot(&eval.outcomes[i].control)).sum();
        let h = 1e-6;
        let v_at = |sign: f64| {
            let moved: Vec<DVector<f64>> = (0..3).map(|i| state.position(i) + &eval.outcomes[i].control * (sign * h)).collect();
            s.shared_spec(|j| &moved[j], t + sign * h).value
        };
        let fd = (v_at(1.0) - v_at(-1.0)) / (2.0 * h);
        worst_fd = worst_fd.max(rel((fd - (zu + spec.partial_t)).abs(), fd.abs()));
    }
    Ok((worst_sum, worst_fd))
}

pub fn allocation_suite(states: usize) -> SuiteReport {
    wrap("shared_allocation", allocation_errors(states, 13).map(|(sum, fd)| {
        SuiteReport::new(
            "shared_allocation",
            sum <= 1e-9 && fd <= 1e-6,
            format!("{states} states: max summed residual {sum:.1e}, derivative relative error {fd:.1e}"),
        )
    }))
}
