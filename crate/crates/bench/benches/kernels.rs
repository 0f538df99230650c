use std::hint::black_box;

use bdg_core::autodiff::{Tape, Tensor};
use bdg_core::nn::Classifier;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

fn matmul(c: &mut Criterion) {
    let mut group = c.benchmark_group("matmul_fwd_bwd");
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for n in [16, 64, 128] {
        let a = random(&mut rng, n, n);
        let b = random(&mut rng, n, n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| {
                let mut tape = Tape::new();
                let av = tape.leaf(a.clone());
                let bv = tape.leaf(b.clone());
                let y = tape.matmul(av, bv).unwrap();
                let l = tape.sum(y).unwrap();
                tape.backward(l).unwrap();
                black_box(tape.grad(av).is_some())
            })
        });
    }
    group.finish();
}

fn softmax(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&mut rng, 64, 5);
    c.bench_function("softmax_rows_64x5", |bench| {
        bench.iter(|| {
            let mut tape = Tape::new();
            let v = tape.leaf(x.clone());
            let s = tape.softmax_rows(v).unwrap();
            let l = tape.log(s).unwrap();
            let m = tape.mean_all(l).unwrap();
            tape.backward(m).unwrap();
            black_box(tape.value(m).item())
        })
    });
}

fn classifier(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = Classifier::new(2, 64, 5, &mut rng);
    let x = random(&mut rng, 64, 2);
    c.bench_function("classifier_fwd_bwd_b64_h64", |bench| {
        bench.iter(|| {
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape, true);
            let xv = tape.constant(x.clone());
            let out = bound.forward(&mut tape, xv).unwrap();
            let l = tape.mean_all(out.class_probs).unwrap();
            tape.backward(l).unwrap();
            black_box(tape.value(l).item())
        })
    });
}

criterion_group!(benches, matmul, softmax, classifier);
criterion_main!(benches);
