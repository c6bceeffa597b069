use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use wiedlab_bench::{grid, initial_layer, model};
use wiedlab_core::assembly::{space_time_matrix, TimeCoefficients};
use wiedlab_core::linalg::Preconditioner;
use wiedlab_core::parabolic::Stepper;
use wiedlab_core::wied::{solve_wied, ModalBasis, ModalPreconditioner};
use wiedlab_core::{DiscreteOperators, ParabolicConfig, WiedConfig};

fn spmv(c: &mut Criterion) {
    let mut group = c.benchmark_group("spmv");
    for n in [16, 32, 64] {
        let g = grid(1, n, n);
        let ops = DiscreteOperators::new(&g);
        let tc = TimeCoefficients::new(&g, 0.05).unwrap();
        let a = space_time_matrix(&g, &ops, &tc);
        let x: Vec<f64> = (0..a.ncols()).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut y = vec![0.0; a.nrows()];
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| a.spmv_into(black_box(&x), &mut y).unwrap())
        });
    }
    group.finish();
}

fn assembly(c: &mut Criterion) {
    let g = grid(1, 32, 64);
    let ops = DiscreteOperators::new(&g);
    c.bench_function("assemble_space_time_32x32x64", |b| {
        b.iter(|| {
            let tc = TimeCoefficients::new(&g, black_box(0.05)).unwrap();
            space_time_matrix(&g, &ops, &tc)
        })
    });
}

fn modal_preconditioner(c: &mut Criterion) {
    let g = grid(1, 24, 64);
    let ops = DiscreteOperators::new(&g);
    let sigma = model().lipschitz();
    c.bench_function("modal_basis_24x24", |b| b.iter(|| ModalBasis::new(&ops, black_box(sigma))));
    let basis = Arc::new(ModalBasis::new(&ops, sigma));
    let tc = TimeCoefficients::new(&g, 0.05).unwrap();
    let nt = g.n_layers() - 1;
    let pc = ModalPreconditioner::new(basis, tc, nt);
    let r: Vec<f64> = (0..nt * g.n_spatial()).map(|i| (i as f64 * 0.11).cos()).collect();
    let mut z = vec![0.0; r.len()];
    c.bench_function("modal_apply_24x24x64", |b| b.iter(|| pc.apply(black_box(&r), &mut z)));
}

fn parabolic_step(c: &mut Criterion) {
    let g = grid(1, 32, 64);
    let ops = DiscreteOperators::new(&g);
    let m = model();
    let stepper = Stepper::new(&ops, &m, &ParabolicConfig::default(), g.dt());
    let u0 = initial_layer(&g);
    c.bench_function("parabolic_step_32x32", |b| b.iter(|| stepper.step(black_box(&u0)).unwrap()));
}

fn wied_solve(c: &mut Criterion) {
    let g = grid(1, 16, 32);
    let m = model();
    let u0 = initial_layer(&g);
    let cfg = WiedConfig { eps: 0.05, ..Default::default() };
    let mut group = c.benchmark_group("wied");
    group.sample_size(10);
    group.bench_function("solve_16x16x32", |b| b.iter(|| solve_wied(&g, &m, &cfg, black_box(&u0)).unwrap()));
    group.finish();
}

criterion_group!(benches, spmv, assembly, modal_preconditioner, parabolic_step, wied_solve);
criterion_main!(benches);
