use criterion::{black_box, criterion_group, criterion_main, Criterion};

use icae::channel::awgn;
use icae::evaluation::{simulate_bler, tdma_bpsk_bler, StopRule};
use icae::nn::{cross_entropy_loss_and_grad, Mode};
use icae::training::Trainer;
use icae::{noise_sigma, ModelKind, RngStream, User};
use icae_bench::{messages, trained_pair, training_config, BATCH};

fn networks(c: &mut Criterion) {
    let pair = trained_pair(ModelKind::Siamese);
    let m = messages(1);
    let y = awgn(BATCH, 8, 1.0, &mut RngStream::new(2).rng());

    c.bench_function("encoder forward", |b| {
        b.iter(|| {
            pair.encoder1
                .forward(black_box(m.one_hot()), Mode::Train)
                .unwrap()
        })
    });
    c.bench_function("decoder forward", |b| {
        b.iter(|| pair.decoder1.forward(black_box(&y), Mode::Train).unwrap())
    });

    let enc = pair.encoder1.forward(m.one_hot(), Mode::Train).unwrap();
    let dec = pair.decoder1.forward(&y, Mode::Train).unwrap();
    let ce = cross_entropy_loss_and_grad(dec.output(), m.indices()).unwrap();
    let (_, dy) = pair
        .decoder1
        .backward_from_logits(&dec, &ce.logit_grad)
        .unwrap();
    c.bench_function("decoder backward", |b| {
        b.iter(|| {
            pair.decoder1
                .backward_from_logits(&dec, black_box(&ce.logit_grad))
                .unwrap()
        })
    });
    c.bench_function("encoder backward", |b| {
        b.iter(|| pair.encoder1.backward(&enc, black_box(&dy)).unwrap())
    });
    c.bench_function("decode 256 frames", |b| {
        b.iter(|| pair.decide(User::One, black_box(&y)).unwrap())
    });
}

fn training_steps(c: &mut Criterion) {
    let sigma = noise_sigma(6.5, 0.5).unwrap();
    let mut twin = Trainer::new(&training_config(ModelKind::Twin)).unwrap();
    c.bench_function("twin step", |b| b.iter(|| twin.twin_step(sigma).unwrap()));
    let mut siamese = Trainer::new(&training_config(ModelKind::Siamese)).unwrap();
    c.bench_function("siamese step", |b| {
        b.iter(|| siamese.siamese_step(sigma).unwrap())
    });
}

fn evaluation(c: &mut Criterion) {
    let pair = trained_pair(ModelKind::Twin);
    // exactly one chunk per call
    let stop = StopRule {
        min_errors: u64::MAX,
        max_frames: 4096,
    };
    c.bench_function("simulate_bler 4096 frames", |b| {
        b.iter(|| simulate_bler(&pair, 1.0, 4.0, stop, RngStream::new(3)).unwrap())
    });
    c.bench_function("tdma closed form", |b| {
        b.iter(|| tdma_bpsk_bler(black_box(6.0), 4))
    });
}

criterion_group!(benches, networks, training_steps, evaluation);
criterion_main!(benches);
