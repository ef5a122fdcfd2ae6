use criterion::{criterion_group, criterion_main, Criterion};
use uncle_bench::{lorenz1, tvsem};
use uncle_core::diffcore::AdamConfig;
use uncle_core::discovery::{dynamic_graph, PerturbationConfig};
use uncle_core::model::{Stage, Trainer};

fn epochs(c: &mut Criterion) {
    let mut group = c.benchmark_group("epoch");
    group.sample_size(10);
    for f in [tvsem(), lorenz1()] {
        let mut model = f.model.clone();
        let mut trainer = Trainer::new(&model, AdamConfig::with_lr(model.config.lr));
        let mut epoch = 0;
        group.bench_function(f.name, |b| {
            b.iter(|| {
                epoch += 1;
                trainer.step(&mut model, &f.normalized, Stage::Joint, epoch).unwrap()
            })
        });
    }
    group.finish();
}

fn discovery(c: &mut Criterion) {
    let mut group = c.benchmark_group("discover");
    group.sample_size(10);
    let cfg = PerturbationConfig { repeats: 1, ..Default::default() };
    for f in [tvsem(), lorenz1()] {
        group.bench_function(f.name, |b| b.iter(|| dynamic_graph(&f.model, &f.data, &cfg).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, epochs, discovery);
criterion_main!(benches);
