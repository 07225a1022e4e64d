use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use sphereflow_core::dynamics::step_particles_by;
use sphereflow_core::ensemble::sample_von_mises_fisher;
use sphereflow_core::fields::velocity_field_batch;
use sphereflow_core::observables::w2_circle;
use sphereflow_core::{FlowState, IntegratorConfig, KernelSpec, VelocityLaw};

fn field(c: &mut Criterion) {
    let mut g = c.benchmark_group("velocity_field_batch");
    for n in [128usize, 512] {
        let mu = sample_von_mises_fisher(&[0.0, 0.0, 1.0], n, 1.0, 1).unwrap();
        let spec = KernelSpec::simple_attention(3, 1.0);
        let targets = mu.coords().to_vec();
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| velocity_field_batch(black_box(&mu), &spec, VelocityLaw::General, &targets))
        });
    }
    g.finish();
}

fn rk4(c: &mut Criterion) {
    let mu = sample_von_mises_fisher(&[0.0, 0.0, 1.0], 256, 1.0, 2).unwrap();
    let spec = KernelSpec::simple_attention(3, 1.0);
    let cfg = IntegratorConfig { dt: 0.05, ..IntegratorConfig::default() };
    let state = FlowState::new(mu);
    c.bench_function("rk4_step_n256", |b| b.iter(|| step_particles_by(black_box(&state), &spec, &cfg, cfg.dt)));
}

fn circle_w2(c: &mut Criterion) {
    let n = 4096;
    let a: Vec<f64> = (0..n).map(|k| (k as f64 * 0.618_033_988_75).fract() * std::f64::consts::TAU).collect();
    let b: Vec<f64> = (0..n).map(|k| (k as f64 * 0.414_213_562_37).fract() * std::f64::consts::TAU).collect();
    let w = vec![1.0 / n as f64; n];
    c.bench_function("w2_circle_4096", |bch| bch.iter(|| w2_circle(black_box(&a), &w, &b, &w)));
}

criterion_group!(benches, field, rk4, circle_w2);
criterion_main!(benches);
