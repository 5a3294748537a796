use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xmodal_core::nn::{EncoderBlock, MultiHeadAttention, ParamStore};
use xmodal_core::{BimodalClassifier, FusionKind, ModelConfig, Tape, Tensor};

fn matmul(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut g = c.benchmark_group("matmul");
    for n in [16usize, 64, 256] {
        let a = Tensor::<f32>::uniform(vec![n, n], -1.0, 1.0, &mut rng);
        let b = Tensor::<f32>::uniform(vec![n, n], -1.0, 1.0, &mut rng);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| {
                let mut tape = Tape::new();
                let (x, y) = (tape.constant(a.clone()), tape.constant(b.clone()));
                tape.matmul(x, y).unwrap()
            })
        });
    }
    g.finish();
}

fn attention(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::<f32>::new();
    let (dim, heads, len) = (64, 8, 32);
    let mha = MultiHeadAttention::new(&mut store, "mha", dim, heads, true, &mut rng).unwrap();
    let x = Tensor::<f32>::uniform(vec![len, dim], -1.0, 1.0, &mut rng);
    c.bench_function("attention forward+backward d64 h8 t32", |b| {
        b.iter(|| {
            let mut tape = Tape::with_params(&store);
            let v = tape.constant(x.clone());
            let out = mha.forward(&mut tape, v, v, v, None).unwrap();
            let loss = tape.sum(out).unwrap();
            tape.backward(loss).unwrap()
        })
    });
}

fn encoder_block(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut store = ParamStore::<f32>::new();
    let block = EncoderBlock::new(&mut store, "block", 64, 8, true, &mut rng).unwrap();
    let x = Tensor::<f32>::uniform(vec![32, 64], -1.0, 1.0, &mut rng);
    c.bench_function("encoder block forward d64 h8 t32", |b| {
        b.iter(|| {
            let mut tape = Tape::with_params(&store);
            let v = tape.constant(x.clone());
            block.forward(&mut tape, v).unwrap();
        })
    });
}

fn model_forward(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut g = c.benchmark_group("model logits d64 h8");
    for fusion in [FusionKind::Concat, FusionKind::CrossAttention] {
        let cfg = ModelConfig {
            dim: 64,
            num_heads: 8,
            text_len: 20,
            audio_len: 40,
            fusion,
            ..ModelConfig::default()
        };
        let model = BimodalClassifier::<f32>::new(cfg, 0).unwrap();
        let text = Tensor::<f32>::uniform(vec![20, 64], -1.0, 1.0, &mut rng);
        let audio = Tensor::<f32>::uniform(vec![40, 64], -1.0, 1.0, &mut rng);
        g.bench_function(fusion.to_string(), |b| b.iter(|| model.logits(&text, &audio).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, matmul, attention, encoder_block, model_forward);
criterion_main!(benches);
