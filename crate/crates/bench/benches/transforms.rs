use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use wam_core::{dwt, idwt, Family, Signal, WaveletSpec};

fn signal(shape: &[usize]) -> Signal {
    let n: usize = shape.iter().product();
    Signal::new(shape.to_vec(), (0..n).map(|i| (i as f64 * 0.013).sin()).collect()).unwrap()
}

fn round_trip(c: &mut Criterion) {
    let mut group = c.benchmark_group("dwt_idwt");
    for (label, shape, levels) in [
        ("1d_1024", vec![1024], 5),
        ("2d_64x64", vec![64, 64], 3),
        ("3d_16^3", vec![16, 16, 16], 2),
    ] {
        let x = signal(&shape);
        for family in Family::ALL {
            let spec = WaveletSpec::new(family, levels);
            group.bench_with_input(BenchmarkId::new(family.name(), label), &x, |b, x| {
                b.iter(|| idwt(&dwt(black_box(x), &spec).unwrap()).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, round_trip);
criterion_main!(benches);
