use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sbp_core::exec::Execution;
use sbp_core::extremal::{estimate_extremals, SearchConfig};
use sbp_core::grid::{make_grid, GridScheme};
use sbp_core::params::ProblemParams;
use sbp_core::verify::{run_suite, VerifyConfig};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn verify_suite(c: &mut Criterion) {
    let grid = make_grid(40.0, 1024, GridScheme::Graded).unwrap();
    let params = ProblemParams::default();
    let mut group = c.benchmark_group("verify_suite");
    group.sample_size(10);
    for (name, execution) in MODES {
        let cfg = VerifyConfig { samples: 24, execution, ..Default::default() };
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| black_box(run_suite(&grid, &params, cfg).unwrap()))
        });
    }
    group.finish();
}

fn extremal_scan(c: &mut Criterion) {
    let grid = make_grid(40.0, 1024, GridScheme::Graded).unwrap();
    let params = ProblemParams::default();
    let mut group = c.benchmark_group("extremal_scan");
    group.sample_size(10);
    for (name, execution) in MODES {
        let search = SearchConfig { ascent_budget: 0, execution, ..Default::default() };
        group.bench_with_input(BenchmarkId::from_parameter(name), &search, |b, search| {
            b.iter(|| black_box(estimate_extremals(&grid, &params, search).unwrap().q_star_lb))
        });
    }
    group.finish();
}

criterion_group!(benches, verify_suite, extremal_scan);
criterion_main!(benches);
