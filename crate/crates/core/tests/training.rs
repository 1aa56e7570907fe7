use icae::nn::Mode;
use icae::training::{
    sample_snr, siamese_gradients, train, train_siamesenet, train_twinnet, train_with_observer,
    Trainer, TrainingConfig,
};
use icae::{noise_sigma, MessageBatch, ModelKind, RngStream, User};
use proptest::prelude::*;

fn config(kind: ModelKind, seed: u64) -> TrainingConfig {
    TrainingConfig {
        model_kind: kind,
        epochs: 8,
        batches_per_epoch: 40,
        batch_size: 128,
        seed,
        ..TrainingConfig::default()
    }
}

#[test]
fn snr_draws_are_uniform_in_db() {
    let mut rng = RngStream::new(3).rng();
    let draws: Vec<f64> = (0..100_000)
        .map(|_| sample_snr((1.0, 12.0), &mut rng))
        .collect();
    assert!(draws.iter().all(|s| (1.0..=12.0).contains(s)));
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    assert!((mean - 6.5).abs() < 0.1, "mean {mean}");
    // uniform variance is width^2 / 12
    let var = draws.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / draws.len() as f64;
    assert!((var - 121.0 / 12.0).abs() < 0.2, "variance {var}");
    assert_eq!(sample_snr((4.0, 4.0), &mut rng), 4.0);
}

#[test]
fn twin_half_step_leaves_the_other_user_alone() {
    let mut t = Trainer::new(&config(ModelKind::Twin, 1)).unwrap();
    let before = t.pair().clone();
    t.twin_half_step(User::One, noise_sigma(6.0, 0.5).unwrap())
        .unwrap();
    let after = t.pair();
    assert_eq!(after.encoder2, before.encoder2);
    assert_eq!(after.decoder2, before.decoder2);
    assert_ne!(after.encoder1, before.encoder1);
    assert_ne!(after.decoder1, before.decoder1);
}

#[test]
fn siamese_step_moves_all_four_networks() {
    let mut t = Trainer::new(&config(ModelKind::Siamese, 1)).unwrap();
    let before = t.pair().clone();
    t.siamese_step(noise_sigma(6.0, 0.5).unwrap()).unwrap();
    let after = t.pair();
    for u in [User::One, User::Two] {
        assert_ne!(after.encoder(u), before.encoder(u));
        assert_ne!(after.decoder(u), before.decoder(u));
    }
}

#[test]
fn without_interference_the_siamese_encoders_decouple() {
    let pair = icae::build_pair(Default::default(), 8).unwrap();
    let mut rng = RngStream::new(8).rng();
    let m1 = MessageBatch::random(32, 16, &mut rng);
    let m2 = MessageBatch::random(32, 16, &mut rng);
    let n1 = icae::channel::awgn(32, 8, 0.5, &mut rng);
    let n2 = icae::channel::awgn(32, 8, 0.5, &mut rng);
    let g = siamese_gradients(&pair, &m1, &m2, &n1, &n2, 0.0, true).unwrap();
    // with alpha = 0, user 2's loss cannot reach encoder 1
    let trace = pair.encoder1.forward(m1.one_hot(), Mode::Train).unwrap();
    let y1 = icae::channel::superpose(
        trace.output(),
        &pair.encode(User::Two, &m2, Mode::Train).unwrap(),
        0.0,
        &n1,
    )
    .unwrap();
    let dec = pair.decoder1.forward(&y1, Mode::Train).unwrap();
    let ce = icae::nn::cross_entropy_loss_and_grad(dec.output(), m1.indices()).unwrap();
    let (_, dy) = pair
        .decoder1
        .backward_from_logits(&dec, &ce.logit_grad)
        .unwrap();
    let (own_only, _) = pair.encoder1.backward(&trace, &dy).unwrap();
    assert_eq!(g.encoder1, own_only);
}

#[test]
fn loss_falls_on_pinned_seeds() {
    for kind in [ModelKind::Twin, ModelKind::Siamese] {
        for seed in [1, 2] {
            let (_, trace) = train(&config(kind, seed)).unwrap();
            assert_eq!(trace.epochs(), 8);
            for losses in [&trace.loss_user1, &trace.loss_user2] {
                let first = losses[0];
                let last = losses[losses.len() - 1];
                assert!(
                    last < 0.7 * first,
                    "{kind:?} seed {seed}: {first} -> {last}"
                );
                assert!(losses.iter().all(|l| l.is_finite()));
            }
            for s in &trace.mean_eb_n0_db {
                assert!((1.0..=12.0).contains(s));
            }
        }
    }
}

#[test]
fn observer_sees_every_epoch() {
    let mut seen = Vec::new();
    let cfg = TrainingConfig {
        epochs: 3,
        batches_per_epoch: 2,
        batch_size: 16,
        ..TrainingConfig::default()
    };
    train_with_observer(&cfg, |e, t| seen.push((e, t.epochs()))).unwrap();
    assert_eq!(seen, vec![(0, 1), (1, 2), (2, 3)]);
}

#[test]
fn scheme_specific_entry_points_check_the_kind() {
    let mut cfg = config(ModelKind::Siamese, 0);
    cfg.epochs = 1;
    cfg.batches_per_epoch = 1;
    assert!(train_twinnet(&cfg).is_err());
    assert!(train_siamesenet(&cfg).is_ok());
    cfg.model_kind = ModelKind::Twin;
    assert!(train_siamesenet(&cfg).is_err());
    let (pair, _) = train_twinnet(&cfg).unwrap();
    assert_eq!(pair.model_kind, ModelKind::Twin);
    assert_eq!(pair.train_alpha, 1.0);
}

#[test]
fn invalid_configs_are_rejected() {
    let base = config(ModelKind::Twin, 0);
    let bad = [
        TrainingConfig {
            alpha: -1.0,
            ..base
        },
        TrainingConfig {
            alpha: f64::NAN,
            ..base
        },
        TrainingConfig {
            snr_range_db: (5.0, 1.0),
            ..base
        },
        TrainingConfig { epochs: 0, ..base },
        TrainingConfig {
            batch_size: 1,
            ..base
        },
        TrainingConfig {
            model_kind: ModelKind::Untrained,
            ..base
        },
    ];
    for cfg in bad {
        assert!(
            matches!(train(&cfg), Err(icae::Error::Config(_))),
            "{cfg:?}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn snr_draws_stay_in_range(lo in -10.0f64..20.0, width in 0.0f64..20.0, seed in any::<u64>()) {
        let mut rng = RngStream::new(seed).rng();
        for _ in 0..100 {
            let s = sample_snr((lo, lo + width), &mut rng);
            prop_assert!(s >= lo && s <= lo + width);
        }
    }
}
