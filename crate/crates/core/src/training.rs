//! Alternating (TwinNet) and joint-encoder (SiameseNet) training under a
//! randomized Eb/N0 schedule.
//!
//! Both schemes minimize the per-user categorical cross-entropy by gradient
//! descent. Every minibatch draws one Eb/N0 value uniformly in dB and fresh
//! noise per example; the received signal always includes the `alpha`
//! scaling of the interfering codeword.

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{awgn, noise_sigma, streams, superpose, RngStream};
use crate::error::{Error, Result};
use crate::models::{build_pair, ArchitectureSpec, MessageBatch, ModelKind, TrainedPair, User};
use crate::nn::gradcheck::{relu_pattern, stencil};
use crate::nn::{
    cross_entropy_loss_and_grad, relative_error, GradCheckReport, GradientSet, Mode, Network,
    OptimizerConfig, OptimizerState, Trace,
};
use crate::tensor::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub model_kind: ModelKind,
    pub arch: ArchitectureSpec,
    pub alpha: f64,
    pub snr_range_db: (f64, f64),
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            model_kind: ModelKind::Siamese,
            arch: ArchitectureSpec::default(),
            alpha: 1.0,
            snr_range_db: (1.0, 12.0),
            epochs: 100,
            batches_per_epoch: 200,
            batch_size: 256,
            optimizer: OptimizerConfig::default(),
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.optimizer.validate()?;
        if self.model_kind == ModelKind::Untrained {
            return Err(Error::config("model_kind must be twin or siamese"));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::config("alpha must be a non-negative finite number"));
        }
        let (lo, hi) = self.snr_range_db;
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(Error::config(format!(
                "snr_range_db must satisfy low <= high, got ({lo}, {hi})"
            )));
        }
        if self.epochs == 0 || self.batches_per_epoch == 0 {
            return Err(Error::config(
                "epochs and batches_per_epoch must be at least 1",
            ));
        }
        if self.batch_size < 2 {
            return Err(Error::config("batch_size must be at least 2"));
        }
        Ok(())
    }
}

/// Per-epoch training history.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub loss_user1: Vec<f64>,
    pub loss_user2: Vec<f64>,
    /// Mean of the Eb/N0 draws (dB) in each epoch.
    pub mean_eb_n0_db: Vec<f64>,
    pub duration_secs: f64,
}

impl TrainingTrace {
    pub fn epochs(&self) -> usize {
        self.loss_user1.len()
    }
}

/// Draws an Eb/N0 value uniformly on `[low, high]` in the dB domain.
pub fn sample_snr(range_db: (f64, f64), rng: &mut impl Rng) -> f64 {
    let (lo, hi) = range_db;
    if lo == hi {
        return lo;
    }
    let u: f64 = rng.gen();
    (lo + u * (hi - lo)).clamp(lo, hi)
}

/// Trains with the scheme named by `config.model_kind`.
pub fn train(config: &TrainingConfig) -> Result<(TrainedPair, TrainingTrace)> {
    train_with_observer(config, |_, _| {})
}

/// Like [`train`], calling `observer(epoch, &trace)` after every epoch.
pub fn train_with_observer(
    config: &TrainingConfig,
    observer: impl FnMut(usize, &TrainingTrace),
) -> Result<(TrainedPair, TrainingTrace)> {
    config.validate()?;
    match config.model_kind {
        ModelKind::Twin => run(config, Scheme::Twin, observer),
        ModelKind::Siamese => run(config, Scheme::Siamese, observer),
        ModelKind::Untrained => unreachable!("rejected by validate"),
    }
}

pub fn train_twinnet(config: &TrainingConfig) -> Result<(TrainedPair, TrainingTrace)> {
    if config.model_kind != ModelKind::Twin {
        return Err(Error::config("train_twinnet requires model_kind = twin"));
    }
    train(config)
}

pub fn train_siamesenet(config: &TrainingConfig) -> Result<(TrainedPair, TrainingTrace)> {
    if config.model_kind != ModelKind::Siamese {
        return Err(Error::config(
            "train_siamesenet requires model_kind = siamese",
        ));
    }
    train(config)
}

#[derive(Clone, Copy)]
enum Scheme {
    Twin,
    Siamese,
}

/// Mutable state of one training run.
pub struct Trainer {
    pair: TrainedPair,
    opt_enc1: OptimizerState,
    opt_dec1: OptimizerState,
    opt_enc2: OptimizerState,
    opt_dec2: OptimizerState,
    alpha: f64,
    batch_size: usize,
    msg_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
}

/// Losses of one minibatch step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLoss {
    pub user1: f64,
    pub user2: f64,
}

impl Trainer {
    pub fn new(config: &TrainingConfig) -> Result<Self> {
        config.validate()?;
        let mut pair = build_pair(config.arch, config.seed)?;
        pair.model_kind = config.model_kind;
        pair.train_alpha = config.alpha;
        pair.train_snr_range_db = config.snr_range_db;
        let stream = RngStream::new(config.seed).derive(streams::TRAIN);
        Ok(Trainer {
            opt_enc1: OptimizerState::new(config.optimizer, &pair.encoder1)?,
            opt_dec1: OptimizerState::new(config.optimizer, &pair.decoder1)?,
            opt_enc2: OptimizerState::new(config.optimizer, &pair.encoder2)?,
            opt_dec2: OptimizerState::new(config.optimizer, &pair.decoder2)?,
            pair,
            alpha: config.alpha,
            batch_size: config.batch_size,
            msg_rng: stream.derive(streams::MESSAGES).rng(),
            noise_rng: stream.derive(streams::NOISE).rng(),
        })
    }

    pub fn pair(&self) -> &TrainedPair {
        &self.pair
    }

    fn messages(&mut self) -> MessageBatch {
        MessageBatch::random(
            self.batch_size,
            self.pair.arch.message_count(),
            &mut self.msg_rng,
        )
    }

    fn noise(&mut self, sigma: f64) -> Tensor2 {
        awgn(
            self.batch_size,
            self.pair.arch.n,
            sigma,
            &mut self.noise_rng,
        )
    }

    /// One half of the alternating step: trains `user` against the other
    /// user's transmissions, treated as a constant input.
    pub fn twin_half_step(&mut self, user: User, sigma: f64) -> Result<f64> {
        let own = self.messages();
        let other = self.messages();
        let interference = self
            .pair
            .encoder(user.other())
            .forward(other.one_hot(), Mode::Train)?
            .output()
            .clone();
        let enc_trace = self.pair.encoder_mut(user).forward_train(own.one_hot())?;
        let noise = self.noise(sigma);
        let received = superpose(enc_trace.output(), &interference, self.alpha, &noise)?;
        let dec_trace = self.pair.decoder_mut(user).forward_train(&received)?;
        let ce = cross_entropy_loss_and_grad(dec_trace.output(), own.indices())?;
        if !ce.loss.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite loss for user {}",
                user.index()
            )));
        }
        let (dec_grads, dy) = self
            .pair
            .decoder(user)
            .backward_from_logits(&dec_trace, &ce.logit_grad)?;
        let (enc_grads, _) = self.pair.encoder(user).backward(&enc_trace, &dy)?;
        let (enc, dec, opt_enc, opt_dec) = match user {
            User::One => (
                &mut self.pair.encoder1,
                &mut self.pair.decoder1,
                &mut self.opt_enc1,
                &mut self.opt_dec1,
            ),
            User::Two => (
                &mut self.pair.encoder2,
                &mut self.pair.decoder2,
                &mut self.opt_enc2,
                &mut self.opt_dec2,
            ),
        };
        opt_dec.step(dec, &dec_grads)?;
        opt_enc.step(enc, &enc_grads)?;
        Ok(ce.loss)
    }

    pub fn twin_step(&mut self, sigma: f64) -> Result<StepLoss> {
        let user1 = self.twin_half_step(User::One, sigma)?;
        let user2 = self.twin_half_step(User::Two, sigma)?;
        Ok(StepLoss { user1, user2 })
    }

    /// Joint step: decoders descend on their own loss, each encoder on the
    /// sum of both users' losses.
    pub fn siamese_step(&mut self, sigma: f64) -> Result<StepLoss> {
        let m1 = self.messages();
        let m2 = self.messages();
        let n1 = self.noise(sigma);
        let n2 = self.noise(sigma);
        let g = siamese_gradients(&self.pair, &m1, &m2, &n1, &n2, self.alpha, true)?;
        if !(g.loss.user1.is_finite() && g.loss.user2.is_finite()) {
            return Err(Error::Diverged("non-finite loss".into()));
        }
        self.pair.encoder1.update_running_stats(&g.enc1_trace);
        self.pair.encoder2.update_running_stats(&g.enc2_trace);
        self.pair.decoder1.update_running_stats(&g.dec1_trace);
        self.pair.decoder2.update_running_stats(&g.dec2_trace);
        self.opt_dec1.step(&mut self.pair.decoder1, &g.decoder1)?;
        self.opt_dec2.step(&mut self.pair.decoder2, &g.decoder2)?;
        self.opt_enc1.step(&mut self.pair.encoder1, &g.encoder1)?;
        self.opt_enc2.step(&mut self.pair.encoder2, &g.encoder2)?;
        Ok(g.loss)
    }

    /// Sets the inference power scale of both encoders from the full,
    /// uniformly weighted message set.
    pub fn finish(mut self) -> Result<TrainedPair> {
        let all = MessageBatch::all(self.pair.arch.message_count());
        if all.len() >= 2 {
            self.pair.encoder1.calibrate_running_stats(all.one_hot())?;
            self.pair.encoder2.calibrate_running_stats(all.one_hot())?;
        }
        Ok(self.pair)
    }
}

/// Gradients of one joint step with fixed messages and noise.
pub struct SiameseGradients {
    pub loss: StepLoss,
    pub encoder1: GradientSet,
    pub decoder1: GradientSet,
    pub encoder2: GradientSet,
    pub decoder2: GradientSet,
    enc1_trace: Trace,
    enc2_trace: Trace,
    dec1_trace: Trace,
    dec2_trace: Trace,
}

/// Each decoder gets the gradient of its own loss; each encoder gets the
/// gradient of `L1 + L2` through both received signals:
/// `dz1 = dL1/dy1 + alpha dL2/dy2`, and symmetrically for `dz2`.
///
/// With `batch_stats` false the encoders run in inference mode.
pub fn siamese_gradients(
    pair: &TrainedPair,
    m1: &MessageBatch,
    m2: &MessageBatch,
    n1: &Tensor2,
    n2: &Tensor2,
    alpha: f64,
    batch_stats: bool,
) -> Result<SiameseGradients> {
    let mode = if batch_stats {
        Mode::Train
    } else {
        Mode::Infer
    };
    let enc1 = pair.encoder1.forward(m1.one_hot(), mode)?;
    let enc2 = pair.encoder2.forward(m2.one_hot(), mode)?;
    let y1 = superpose(enc1.output(), enc2.output(), alpha, n1)?;
    let y2 = superpose(enc2.output(), enc1.output(), alpha, n2)?;
    let dec1 = pair.decoder1.forward(&y1, Mode::Train)?;
    let dec2 = pair.decoder2.forward(&y2, Mode::Train)?;
    let ce1 = cross_entropy_loss_and_grad(dec1.output(), m1.indices())?;
    let ce2 = cross_entropy_loss_and_grad(dec2.output(), m2.indices())?;
    let (g_dec1, dy1) = pair.decoder1.backward_from_logits(&dec1, &ce1.logit_grad)?;
    let (g_dec2, dy2) = pair.decoder2.backward_from_logits(&dec2, &ce2.logit_grad)?;

    let mut dz1 = dy1.clone();
    dz1.add_scaled(&dy2, alpha)?;
    let mut dz2 = dy2;
    dz2.add_scaled(&dy1, alpha)?;
    let (g_enc1, _) = pair.encoder1.backward(&enc1, &dz1)?;
    let (g_enc2, _) = pair.encoder2.backward(&enc2, &dz2)?;
    Ok(SiameseGradients {
        loss: StepLoss {
            user1: ce1.loss,
            user2: ce2.loss,
        },
        encoder1: g_enc1,
        decoder1: g_dec1,
        encoder2: g_enc2,
        decoder2: g_dec2,
        enc1_trace: enc1,
        enc2_trace: enc2,
        dec1_trace: dec1,
        dec2_trace: dec2,
    })
}

/// `L1 + L2` of the joint forward pass and the ReLU sign pattern of all four
/// networks.
fn joint_loss(
    pair: &TrainedPair,
    m1: &MessageBatch,
    m2: &MessageBatch,
    n1: &Tensor2,
    n2: &Tensor2,
    alpha: f64,
) -> Result<(f64, Vec<bool>)> {
    let enc1 = pair.encoder1.forward(m1.one_hot(), Mode::Train)?;
    let enc2 = pair.encoder2.forward(m2.one_hot(), Mode::Train)?;
    let y1 = superpose(enc1.output(), enc2.output(), alpha, n1)?;
    let y2 = superpose(enc2.output(), enc1.output(), alpha, n2)?;
    let dec1 = pair.decoder1.forward(&y1, Mode::Train)?;
    let dec2 = pair.decoder2.forward(&y2, Mode::Train)?;
    let l1 = cross_entropy_loss_and_grad(dec1.output(), m1.indices())?.loss;
    let l2 = cross_entropy_loss_and_grad(dec2.output(), m2.indices())?.loss;
    let mut pattern = relu_pattern(&pair.encoder1, &enc1);
    pattern.extend(relu_pattern(&pair.encoder2, &enc2));
    pattern.extend(relu_pattern(&pair.decoder1, &dec1));
    pattern.extend(relu_pattern(&pair.decoder2, &dec2));
    Ok((l1 + l2, pattern))
}

/// Compares [`siamese_gradients`] with central differences of `L1 + L2`
/// over every parameter of all four networks, which covers the
/// encode-superpose-decode cross path. Inputs are not perturbed, so
/// `max_input_error` is always zero.
pub fn siamese_gradient_check(
    pair: &TrainedPair,
    m1: &MessageBatch,
    m2: &MessageBatch,
    n1: &Tensor2,
    n2: &Tensor2,
    alpha: f64,
    perturbation: f64,
) -> Result<GradCheckReport> {
    if !(perturbation > 0.0) {
        return Err(Error::usage("perturbation must be positive"));
    }
    let g = siamese_gradients(pair, m1, m2, n1, n2, alpha, true)?;
    let (_, base) = joint_loss(pair, m1, m2, n1, n2, alpha)?;
    let mut probe = pair.clone();
    let mut report = GradCheckReport {
        max_param_error: 0.0,
        max_input_error: 0.0,
        params_checked: 0,
        kinks_skipped: 0,
    };
    for (which, grads) in [&g.encoder1, &g.decoder1, &g.encoder2, &g.decoder2]
        .into_iter()
        .enumerate()
    {
        let analytic: Vec<f64> = grads.values().collect();
        let sizes: Vec<usize> = network_of(&probe, which)
            .param_blocks()
            .iter()
            .map(|b| b.len())
            .collect();
        let mut flat = 0;
        for (b, len) in sizes.into_iter().enumerate() {
            for i in 0..len {
                let orig = network_of(&probe, which).param_blocks()[b][i];
                let numeric = stencil(perturbation, &base, |d| {
                    network_of_mut(&mut probe, which).param_blocks_mut()[b][i] = orig + d;
                    joint_loss(&probe, m1, m2, n1, n2, alpha)
                })?;
                network_of_mut(&mut probe, which).param_blocks_mut()[b][i] = orig;
                match numeric {
                    Some(n) => {
                        let e = relative_error(analytic[flat], n);
                        report.max_param_error = report.max_param_error.max(e);
                        report.params_checked += 1;
                    }
                    None => report.kinks_skipped += 1,
                }
                flat += 1;
            }
        }
    }
    Ok(report)
}

fn network_of(pair: &TrainedPair, which: usize) -> &Network {
    match which {
        0 => &pair.encoder1,
        1 => &pair.decoder1,
        2 => &pair.encoder2,
        _ => &pair.decoder2,
    }
}

fn network_of_mut(pair: &mut TrainedPair, which: usize) -> &mut Network {
    match which {
        0 => &mut pair.encoder1,
        1 => &mut pair.decoder1,
        2 => &mut pair.encoder2,
        _ => &mut pair.decoder2,
    }
}

const DIVERGENCE_FACTOR: f64 = 10.0;
const DIVERGENCE_EPOCHS: usize = 3;

fn run(
    config: &TrainingConfig,
    scheme: Scheme,
    mut observer: impl FnMut(usize, &TrainingTrace),
) -> Result<(TrainedPair, TrainingTrace)> {
    let started = Instant::now();
    let mut trainer = Trainer::new(config)?;
    let mut snr_rng = RngStream::new(config.seed)
        .derive(streams::TRAIN)
        .derive(streams::SNR)
        .rng();
    let rate = config.arch.rate();
    let mut trace = TrainingTrace::default();
    let mut strikes = 0;

    for epoch in 0..config.epochs {
        let (mut l1, mut l2, mut snr_sum) = (0.0, 0.0, 0.0);
        for _ in 0..config.batches_per_epoch {
            let eb_n0_db = sample_snr(config.snr_range_db, &mut snr_rng);
            let sigma = noise_sigma(eb_n0_db, rate)?;
            let step = match scheme {
                Scheme::Twin => trainer.twin_step(sigma),
                Scheme::Siamese => trainer.siamese_step(sigma),
            }
            .map_err(|e| match e {
                Error::Diverged(msg) | Error::Numerical { detail: msg, .. } => {
                    Error::Diverged(format!(
                        "epoch {epoch}: {msg}; losses so far {:?} / {:?}",
                        trace.loss_user1, trace.loss_user2
                    ))
                }
                other => other,
            })?;
            l1 += step.user1;
            l2 += step.user2;
            snr_sum += eb_n0_db;
        }
        let b = config.batches_per_epoch as f64;
        trace.loss_user1.push(l1 / b);
        trace.loss_user2.push(l2 / b);
        trace.mean_eb_n0_db.push(snr_sum / b);

        let worst_initial = trace.loss_user1[0].max(trace.loss_user2[0]);
        if (l1 / b).max(l2 / b) > DIVERGENCE_FACTOR * worst_initial {
            strikes += 1;
            if strikes >= DIVERGENCE_EPOCHS {
                return Err(Error::Diverged(format!(
                    "loss above {DIVERGENCE_FACTOR}x its first-epoch value for \
                     {DIVERGENCE_EPOCHS} epochs (epoch {epoch}: {:.4} / {:.4})",
                    l1 / b,
                    l2 / b
                )));
            }
        } else {
            strikes = 0;
        }
        observer(epoch, &trace);
    }

    let pair = trainer.finish()?;
    trace.duration_secs = started.elapsed().as_secs_f64();
    Ok((pair, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(kind: ModelKind, alpha: f64) -> TrainingConfig {
        TrainingConfig {
            model_kind: kind,
            alpha,
            epochs: 2,
            batches_per_epoch: 5,
            batch_size: 32,
            seed: 9,
            ..Default::default()
        }
    }

    #[test]
    fn sample_snr_degenerate_range() {
        let mut rng = RngStream::new(0).rng();
        for _ in 0..10 {
            assert_eq!(sample_snr((5.0, 5.0), &mut rng), 5.0);
        }
    }

    #[test]
    fn sample_snr_stays_in_range() {
        let mut rng = RngStream::new(1).rng();
        for _ in 0..10_000 {
            let s = sample_snr((1.0, 12.0), &mut rng);
            assert!((1.0..=12.0).contains(&s));
        }
    }

    #[test]
    fn config_validation() {
        let mut c = TrainingConfig::default();
        c.snr_range_db = (12.0, 1.0);
        assert!(c.validate().is_err());
        let mut c = TrainingConfig::default();
        c.batch_size = 1;
        assert!(c.validate().is_err());
        let mut c = TrainingConfig::default();
        c.model_kind = ModelKind::Untrained;
        assert!(c.validate().is_err());
        assert!(TrainingConfig::default().validate().is_ok());
    }

    #[test]
    fn scheme_entry_points_check_kind() {
        assert!(train_twinnet(&tiny(ModelKind::Siamese, 1.0)).is_err());
        assert!(train_siamesenet(&tiny(ModelKind::Twin, 1.0)).is_err());
    }

    #[test]
    fn trace_lengths_match_epochs() {
        for kind in [ModelKind::Twin, ModelKind::Siamese] {
            let (pair, trace) = train(&tiny(kind, 1.0)).unwrap();
            assert_eq!(pair.model_kind, kind);
            assert_eq!(trace.epochs(), 2);
            assert_eq!(trace.loss_user2.len(), 2);
            assert_eq!(trace.mean_eb_n0_db.len(), 2);
        }
    }

    #[test]
    fn training_is_deterministic() {
        for kind in [ModelKind::Twin, ModelKind::Siamese] {
            let (a, ta) = train(&tiny(kind, 0.5)).unwrap();
            let (b, tb) = train(&tiny(kind, 0.5)).unwrap();
            assert_eq!(a, b);
            assert_eq!(ta.loss_user1, tb.loss_user1);
        }
    }

    #[test]
    fn twin_half_step_leaves_other_user_untouched() {
        let mut trainer = Trainer::new(&tiny(ModelKind::Twin, 1.0)).unwrap();
        for user in [User::One, User::Two] {
            let enc = trainer.pair().encoder(user.other()).clone();
            let dec = trainer.pair().decoder(user.other()).clone();
            let own = trainer.pair().encoder(user).clone();
            trainer.twin_half_step(user, 0.7).unwrap();
            assert_eq!(trainer.pair().encoder(user.other()), &enc);
            assert_eq!(trainer.pair().decoder(user.other()), &dec);
            assert_ne!(trainer.pair().encoder(user), &own);
        }
    }
}
