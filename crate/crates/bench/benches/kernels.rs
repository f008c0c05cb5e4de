use std::collections::BTreeMap;

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use pmlab_core::coeffs::split_blocks;
use pmlab_core::fracalc::half_derivative_t;
use pmlab_core::hodge::{build_chi, solve_hodge};
use pmlab_core::maximal::maximal_parabolic;
use pmlab_core::measure::{parabolic_measure, MeasureSetup};
use pmlab_core::{make_coefficients, Field2, LabConfig, ParabolicCube, Torus};

fn noise(nx: usize, nt: usize) -> Field2 {
    let mut f = Field2::zeros(0.0, 0.0, 1.0 / 32.0, 1.0 / 1024.0, nx, nt);
    let mut s = 0x9e37_79b9_u64;
    f.data.mapv_inplace(|_| {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    });
    f
}

fn kernels(c: &mut Criterion) {
    let skew = make_coefficients("skew", &BTreeMap::from([("delta".to_string(), 0.5)])).unwrap();
    let cube = ParabolicCube::new(0.0, 1.0 / 64.0, 1.0 / 32.0);
    let setup = MeasureSetup { h: 1.0 / 32.0, min_cells: 2, ..Default::default() };
    c.bench_function("parabolic_measure skew h=1/32", |b| {
        b.iter(|| parabolic_measure(black_box(&skew), &cube, &setup).unwrap())
    });

    let blocks = split_blocks(&skew);
    let lab_cube = ParabolicCube::new(0.0, 0.0, 0.125);
    let cfg = LabConfig::new(lab_cube, 1.0 / 16.0);
    let torus = Torus::around(&lab_cube, 1.0 / 16.0, cfg.x_half, cfg.t_half).unwrap();
    let chi = build_chi(&lab_cube, &torus).unwrap();
    let mut g = c.benchmark_group("hodge");
    g.sample_size(10);
    g.bench_function("solve_hodge skew h=1/16", |b| b.iter(|| solve_hodge(black_box(&blocks), &chi).unwrap()));
    g.finish();

    let f = noise(64, 256);
    c.bench_function("maximal_parabolic 64x256", |b| b.iter(|| maximal_parabolic(black_box(&f))));
    c.bench_function("half_derivative_t 64x256", |b| b.iter(|| half_derivative_t(black_box(&f))));
}

criterion_group!(benches, kernels);
criterion_main!(benches);
