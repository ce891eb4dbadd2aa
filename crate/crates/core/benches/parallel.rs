//! Parallel versus sequential execution of the three hot paths. On a
//! single core the two should match; with more cores `parallel` wins once
//! the per-item work dominates pool overhead.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use disentangle::par::{self, Execution};
use disentangle::qp::{solve, QpRow, QuadraticProgram};
use disentangle::scenarios::{CoverageScenario, CoverageSpec, FormationScenario, FormationSpec, LeaderPath, SizeLaw};
use disentangle::sim::{step, Engine, Scenario, SimConfig};
use disentangle::voronoi::{tessellate, tessellation_moments, DensityField, QuadratureConfig, RectDomain};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn qp_batch(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let qps: Vec<QuadraticProgram> = (0..512)
        .map(|_| {
            let rows = (0..6)
                .map(|_| QpRow::new((0..3).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>(), rng.random_range(-1.0..0.5)))
                .collect();
            QuadraticProgram::min_norm(3, rows).unwrap()
        })
        .collect();
    let mut g = c.benchmark_group("qp_batch_512");
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| par::map_slice(exec, &qps, |q| solve(q, 1e-10).map(|s| s.point[0]).unwrap_or(0.0))));
    }
    g.finish();
}

fn moments(c: &mut Criterion) {
    let domain = RectDomain::default();
    let density = DensityField::drifting_pair(&domain);
    let mut g = c.benchmark_group("tessellation_moments");
    g.sample_size(20);
    for n in [10usize, 40] {
        let s = CoverageScenario::random_start(CoverageSpec::new(domain, density.clone()), n, 5, 0.8).unwrap();
        let sites: Vec<[f64; 2]> = s.initial_state().agents.iter().map(|a| [a.position[0], a.position[1]]).collect();
        let cells = tessellate(&sites, &domain).unwrap();
        for (name, exec) in MODES {
            g.bench_with_input(BenchmarkId::new(name, n), &cells, |b, cells| {
                b.iter(|| tessellation_moments(exec, cells, &density, 0.0, &QuadratureConfig::default()).unwrap())
            });
        }
    }
    g.finish();
}

fn steps(c: &mut Criterion) {
    let formation = FormationScenario::perturbed_start(
        FormationSpec::icosahedron(SizeLaw::constant(0.6), 1.0, 1.0, LeaderPath::Fixed { position: vec![0.0; 3] }),
        0,
        0.3,
    )
    .unwrap();
    let domain = RectDomain::default();
    let coverage =
        CoverageScenario::random_start(CoverageSpec::new(domain, DensityField::drifting_pair(&domain)), 10, 3, 0.8).unwrap();
    let mut g = c.benchmark_group("engine_step");
    g.sample_size(20);
    for (name, exec) in MODES {
        let cfg = SimConfig { execution: exec, ..SimConfig::default() };
        let e = Engine::new(&formation, cfg.clone()).unwrap();
        g.bench_function(BenchmarkId::new("formation", name), |b| b.iter(|| step(&e, formation.initial_state()).unwrap()));
        let e = Engine::new(&coverage, cfg).unwrap();
        g.bench_function(BenchmarkId::new("coverage", name), |b| b.iter(|| step(&e, coverage.initial_state()).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, qp_batch, moments, steps);
criterion_main!(benches);
