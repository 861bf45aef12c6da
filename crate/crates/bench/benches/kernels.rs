use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use priorlab::density_functional::{histogram_split, theta_hat_freq, BiasCorrection};
use priorlab::mixed_model::{gaussian_joint_fit, generate_hospitals, MixedModelTruth};
use priorlab::partial_linear::{generate_plm, residual_aggregate, PlmDesign};
use priorlab::sequence_models::{
    bounded_posterior_mean, lasso_toy, spike_slab_posterior, PriorShape, SequenceData, SpikeSlabPrior,
};
use priorlab::RngStream;

fn sequence(c: &mut Criterion) {
    let mut s = RngStream::new(7, 0);
    let means: Vec<f64> = (0..10_000).map(|i| if i < 100 { 1.0 } else { 0.0 }).collect();
    let data = SequenceData::simulate(&means, 1e4, &mut s).unwrap();
    c.bench_function("lasso_toy/p=1e4", |b| b.iter(|| lasso_toy(black_box(&data), 0.03).unwrap()));

    let prior = SpikeSlabPrior::new(0.01, 1.0).unwrap();
    c.bench_function("spike_slab_posterior", |b| {
        b.iter(|| spike_slab_posterior(black_box(0.07), 1e4, &prior).unwrap())
    });
    c.bench_function("bounded_posterior_mean", |b| {
        b.iter(|| bounded_posterior_mean(black_box(0.02), 0.05, 0.01, 8, PriorShape::Uniform).unwrap())
    });
}

fn histogram(c: &mut Criterion) {
    let mut g = c.benchmark_group("theta_hat_freq");
    for n in [10_000usize, 100_000] {
        let mut s = RngStream::new(3, n as u64);
        let pts: Vec<f64> = (0..n).map(|_| s.uniform()).collect();
        let m = (n as f64).sqrt() as usize;
        g.bench_with_input(BenchmarkId::from_parameter(n), &pts, |b, pts| {
            b.iter(|| {
                let mut s = RngStream::new(4, 0);
                let h = histogram_split(pts, m, &mut s).unwrap();
                theta_hat_freq(&h, BiasCorrection::Calibrated)
            })
        });
    }
    g.finish();
}

fn subsets(c: &mut Criterion) {
    let coef = 1.0 / 3f64.sqrt();
    let phi = (0..10).map(|j| if j < 3 { coef } else { 0.0 }).collect();
    let psi = (0..10).map(|j| if (3..6).contains(&j) { coef } else { 0.0 }).collect();
    let design = PlmDesign::new(500, 3, phi, psi, 1.0, 1.0, 2.0, 1.0).unwrap();
    let sample = generate_plm(&design, &mut RngStream::new(5, 0)).unwrap();
    c.bench_function("residual_aggregate/n=500,p=10,m=3", |b| {
        b.iter(|| residual_aggregate(black_box(&sample.w), &sample.x, 3, 40.0).unwrap())
    });
}

fn joint_fit(c: &mut Criterion) {
    let truth = MixedModelTruth {
        theta: 1.0,
        mu_g: 0.0,
        mu_h: 0.0,
        sigma_gh: [[1.0, 0.5], [0.5, 1.0]],
        sigma_noise: [[1.0, 0.0], [0.0, 1.0]],
        kappa_w: 1.0,
        target_rate: 0.6,
    };
    let recs = generate_hospitals(&truth, 2000, &mut RngStream::new(6, 0)).unwrap();
    let mut g = c.benchmark_group("gaussian_joint_fit/n=2000");
    g.sample_size(20);
    g.bench_function("all_records", |b| b.iter(|| gaussian_joint_fit(black_box(&recs), true).unwrap()));
    g.bench_function("complete_only", |b| b.iter(|| gaussian_joint_fit(black_box(&recs), false).unwrap()));
    g.finish();
}

criterion_group!(benches, sequence, histogram, subsets, joint_fit);
criterion_main!(benches);
