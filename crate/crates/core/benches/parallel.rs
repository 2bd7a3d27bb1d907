use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use pcsc::codec::{Codec, CodecConfig, TrainConfig, Trainer};
use pcsc::pointcloud::{gen_shape, ShapeKind};
use pcsc::voxel::{partition, Cube};
use pcsc::Exec;

fn cubes(n: usize) -> Vec<Cube> {
    let mut out = Vec::new();
    for (i, kind) in ShapeKind::ALL.iter().enumerate() {
        let pc = gen_shape(*kind, 20_000, 6, i as u64).unwrap();
        out.extend(partition(&pc, 16).unwrap().into_iter().filter(|c| c.k_occupied() >= 16));
    }
    out.truncate(n);
    out
}

fn bench(c: &mut Criterion) {
    let data = cubes(8);
    let batch: Vec<&Cube> = data.iter().collect();
    let codec = Codec::<f32>::new(CodecConfig::default()).unwrap();
    let mut group = c.benchmark_group("train_step");
    group.sample_size(10);
    for exec in [Exec::Serial, Exec::Parallel] {
        group.bench_function(format!("{exec:?}"), |b| {
            let mut model = codec.clone();
            let mut trainer = Trainer::new(&model, TrainConfig::default()).unwrap();
            b.iter(|| black_box(trainer.step(&mut model, &batch, exec).unwrap()));
        });
    }
    group.finish();

    let mut group = c.benchmark_group("encode_all");
    group.sample_size(10);
    for exec in [Exec::Serial, Exec::Parallel] {
        group.bench_function(format!("{exec:?}"), |b| {
            b.iter(|| black_box(exec.map(&data, |cube| codec.encode(cube).unwrap())));
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
