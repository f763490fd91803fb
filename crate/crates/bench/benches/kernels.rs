use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use quadrec::assembly::assemble;
use quadrec::estimator::estimate;
use quadrec::linalg::solve;
use quadrec::recovery::recover;
use quadrec::{cases, DofMap, SolveOptions};
use quadrec_bench::graded_forest;
use std::hint::black_box;

fn kernels(c: &mut Criterion) {
    let case = cases::test1();
    let coeffs = &case.coefficients;
    for (base, extra) in [(5u8, 3u8), (7, 3)] {
        let forest = graded_forest(base, extra).unwrap();
        let mesh = forest.extract_mesh(None).unwrap();
        let dofmap = DofMap::build(&mesh, &coeffs.dirichlet).unwrap();
        let system = assemble(&mesh, &dofmap, coeffs).unwrap();
        let opts = SolveOptions::default();
        let (x, _) = solve(&system.matrix, &system.rhs, None, &opts).unwrap();
        let u = system.expand_solution(&x, &dofmap);
        let (_, w) = recover(&u, &mesh, &dofmap);
        let n = mesh.n_leaves();

        let mut g = c.benchmark_group("kernels");
        g.sample_size(20);
        g.bench_with_input(BenchmarkId::new("extract_mesh", n), &forest, |b, f| {
            b.iter(|| f.extract_mesh(None).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("balance", n), &forest, |b, f| {
            b.iter(|| black_box(f.clone()).balance_2to1())
        });
        g.bench_with_input(BenchmarkId::new("assemble", n), &mesh, |b, m| {
            b.iter(|| assemble(m, &dofmap, coeffs).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("solve", n), &system, |b, s| {
            b.iter(|| solve(&s.matrix, &s.rhs, None, &opts).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("recover", n), &u, |b, u| b.iter(|| recover(u, &mesh, &dofmap)));
        g.bench_with_input(BenchmarkId::new("estimate", n), &w, |b, w| {
            b.iter(|| estimate(&u, w, &mesh, &dofmap))
        });
        g.finish();
    }
}

criterion_group!(benches, kernels);
criterion_main!(benches);
