use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uncle_core::diffcore::kernels::{conv_backward_input, conv_backward_params, conv_forward, ConvGeometry};

fn geometries() -> Vec<(&'static str, ConvGeometry)> {
    vec![
        ("tvsem", ConvGeometry { in_channels: 8, out_channels: 8, taps: 3, dilation: 4, steps: 2000 }),
        ("lorenz1", ConvGeometry { in_channels: 20, out_channels: 20, taps: 8, dilation: 8, steps: 250 }),
    ]
}

fn filled(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect()
}

fn conv(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv");
    for (name, g) in geometries() {
        let input = filled(g.input_len(), 1);
        let weight = filled(g.weight_len(), 2);
        let bias = filled(g.out_channels, 3);
        let grad_out = filled(g.output_len(), 4);
        let mut out = vec![0.0; g.output_len()];
        group.bench_with_input(BenchmarkId::new("forward", name), &g, |b, g| {
            b.iter(|| conv_forward(g, black_box(&input), &weight, &bias, &mut out))
        });
        let mut grad_in = vec![0.0; g.input_len()];
        group.bench_with_input(BenchmarkId::new("backward_input", name), &g, |b, g| {
            b.iter(|| conv_backward_input(g, black_box(&grad_out), &weight, &mut grad_in))
        });
        let mut gw = vec![0.0; g.weight_len()];
        let mut gb = vec![0.0; g.out_channels];
        group.bench_with_input(BenchmarkId::new("backward_params", name), &g, |b, g| {
            b.iter(|| conv_backward_params(g, black_box(&grad_out), &input, &mut gw, &mut gb))
        });
    }
    group.finish();
}

criterion_group!(benches, conv);
criterion_main!(benches);
