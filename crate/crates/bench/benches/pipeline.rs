use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use gapweaver_bench::{coefficients, envelope};
use gapweaver_core::bloch1d::BlochOperator;
use gapweaver_core::cme2d::{solve_cme_newton, CmeStepper, NewtonOptions};
use gapweaver_core::elliptic2d::{reconstruct_leading_order, GpStepper};
use gapweaver_core::jacobian::kernel_row;
use gapweaver_core::resonance::find_bifurcation_eta;
use gapweaver_core::{bloch1d, ClassTag, PeriodicPotential};

fn bloch(c: &mut Criterion) {
    let p = PeriodicPotential::one_minus_cos();
    let op = BlochOperator::new(&p, 512).unwrap();
    c.bench_function("bloch1d/eigenvalues_512", |b| b.iter(|| op.eigenvalues(0.1745, 0.25, 6).unwrap()));
    c.bench_function("resonance/bifurcation_256", |b| b.iter(|| find_bifurcation_eta(&p, (0.05, 0.5), 256).unwrap()));
}

fn envelopes(c: &mut Criterion) {
    let co = coefficients(128);
    let a = envelope(&co, ClassTag::AM0, 1.5, 12.0, 0.3);
    let bii = envelope(&co, ClassTag::Bii, 1.19, 12.0, 0.3);
    c.bench_function("cme2d/newton_polish_b_ii", |b| {
        b.iter_batched(|| bii.rotated(0.3), |f| solve_cme_newton(&f, NewtonOptions::default()).unwrap(), BatchSize::LargeInput)
    });
    c.bench_function("cme2d/step_b_ii", |b| {
        let mut s = CmeStepper::new(&bii, 0.01).unwrap();
        b.iter(|| s.step().unwrap())
    });
    let mut g = c.benchmark_group("jacobian");
    g.sample_size(10);
    g.bench_function("kernel_row_a_m0", |b| b.iter(|| kernel_row(&a).unwrap()));
    g.finish();
}

fn full_field(c: &mut Criterion) {
    let p = PeriodicPotential::one_minus_cos();
    let co = coefficients(32);
    let env = envelope(&co, ClassTag::AM0, 1.22, 24.0, 0.3);
    let efs = bloch1d::edge_eigenfunctions(&p, co.eta0, 2, 32).unwrap();
    let phi = reconstruct_leading_order(&env, &efs, 0.1, 6).unwrap();
    c.bench_function("elliptic2d/gp_step_6_periods", |b| {
        let mut s = GpStepper::new(&phi, &p, 0.01).unwrap();
        b.iter(|| s.step().unwrap())
    });
}

criterion_group!(benches, bloch, envelopes, full_field);
criterion_main!(benches);
