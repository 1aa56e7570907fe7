//! Monte Carlo block-error-rate measurement and the orthogonal uncoded-BPSK
//! reference.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{awgn, noise_sigma, streams, RngStream};
use crate::error::{Error, Result};
use crate::models::{CodeBook, ModelKind, TrainedPair, User};
use crate::tensor::Tensor2;

/// Frames simulated per vectorized chunk.
const CHUNK: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StopRule {
    pub min_errors: u64,
    pub max_frames: u64,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            min_errors: 200,
            max_frames: 2_000_000,
        }
    }
}

impl StopRule {
    pub fn validate(&self) -> Result<()> {
        if self.min_errors == 0 {
            return Err(Error::config("stop.min_errors must be at least 1"));
        }
        if self.max_frames == 0 {
            return Err(Error::config("stop.max_frames must be at least 1"));
        }
        Ok(())
    }
}

/// One measured operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlerPoint {
    pub eb_n0_db: f64,
    pub alpha_eval: f64,
    pub frames: u64,
    pub errors_user1: u64,
    pub errors_user2: u64,
    pub bler_user1: f64,
    pub bler_user2: f64,
}

impl BlerPoint {
    fn new(eb_n0_db: f64, alpha_eval: f64, frames: u64, e1: u64, e2: u64) -> Self {
        BlerPoint {
            eb_n0_db,
            alpha_eval,
            frames,
            errors_user1: e1,
            errors_user2: e2,
            bler_user1: e1 as f64 / frames as f64,
            bler_user2: e2 as f64 / frames as f64,
        }
    }

    /// Average over both users.
    pub fn bler_mean(&self) -> f64 {
        0.5 * (self.bler_user1 + self.bler_user2)
    }
}

/// Runs `chunk(rng, frames)` until both users have collected
/// `stop.min_errors` block errors or `stop.max_frames` frames were sent.
fn estimate(
    stop: StopRule,
    stream: RngStream,
    mut chunk: impl FnMut(&mut ChaCha8Rng, usize) -> Result<(u64, u64)>,
) -> Result<(u64, u64, u64)> {
    stop.validate()?;
    let mut rng = stream.rng();
    let (mut frames, mut e1, mut e2) = (0u64, 0u64, 0u64);
    while frames < stop.max_frames && (e1 < stop.min_errors || e2 < stop.min_errors) {
        let size = CHUNK.min(stop.max_frames - frames);
        let (a, b) = chunk(&mut rng, size as usize)?;
        frames += size;
        e1 += a;
        e2 += b;
    }
    Ok((frames, e1, e2))
}

fn point_stream(seed: u64, alpha_eval: f64, eb_n0_db: f64) -> RngStream {
    RngStream::new(seed)
        .derive(streams::EVAL)
        .derive(alpha_eval.to_bits())
        .derive(eb_n0_db.to_bits())
}

fn ensure_usable(pair: &TrainedPair) -> Result<()> {
    if pair.model_kind == ModelKind::Untrained {
        return Err(Error::usage("refusing to evaluate an untrained model"));
    }
    if !pair.is_finite() {
        return Err(Error::numerical(
            0,
            "model parameters contain NaN or infinity",
        ));
    }
    pair.validate()
}

/// Transmits uniformly drawn message pairs through the symmetric
/// interference channel and counts per-user block errors.
///
/// Encoders are deterministic at inference, so the codebooks are extracted
/// once and indexed.
pub fn simulate_bler(
    pair: &TrainedPair,
    alpha_eval: f64,
    eb_n0_db: f64,
    stop: StopRule,
    stream: RngStream,
) -> Result<BlerPoint> {
    ensure_usable(pair)?;
    if !(alpha_eval >= 0.0) {
        return Err(Error::config("evaluation alpha must be non-negative"));
    }
    let sigma = noise_sigma(eb_n0_db, pair.arch.rate())?;
    let cb1 = pair.extract_codebook(User::One)?;
    let cb2 = pair.extract_codebook(User::Two)?;
    let m = pair.arch.message_count();
    let n = pair.arch.n;

    let (frames, e1, e2) = estimate(stop, stream, |rng, size| {
        let m1: Vec<usize> = (0..size).map(|_| rng.gen_range(0..m)).collect();
        let m2: Vec<usize> = (0..size).map(|_| rng.gen_range(0..m)).collect();
        let y1 = received(&cb1, &cb2, &m1, &m2, alpha_eval, awgn(size, n, sigma, rng))?;
        let y2 = received(&cb2, &cb1, &m2, &m1, alpha_eval, awgn(size, n, sigma, rng))?;
        let d1 = pair.decide(User::One, &y1)?;
        let d2 = pair.decide(User::Two, &y2)?;
        Ok((count_errors(&d1, &m1), count_errors(&d2, &m2)))
    })?;
    Ok(BlerPoint::new(eb_n0_db, alpha_eval, frames, e1, e2))
}

fn received(
    own: &CodeBook,
    other: &CodeBook,
    own_msgs: &[usize],
    other_msgs: &[usize],
    alpha: f64,
    mut noise: Tensor2,
) -> Result<Tensor2> {
    for (r, (&a, &b)) in own_msgs.iter().zip(other_msgs).enumerate() {
        let za = own.codeword(a);
        let zb = other.codeword(b);
        for ((y, &x), &w) in noise.row_mut(r).iter_mut().zip(za).zip(zb) {
            *y += x + alpha * w;
        }
    }
    Ok(noise)
}

fn count_errors(decided: &[usize], sent: &[usize]) -> u64 {
    decided.iter().zip(sent).filter(|(a, b)| a != b).count() as u64
}

/// Two users in orthogonal time slots, each sending `k` uncoded BPSK
/// symbols per block, pushed through the same estimator as the learned
/// models.
pub fn simulate_tdma_bpsk(
    eb_n0_db: f64,
    k: usize,
    stop: StopRule,
    stream: RngStream,
) -> Result<BlerPoint> {
    if k == 0 {
        return Err(Error::config("k must be at least 1"));
    }
    let sigma = noise_sigma(eb_n0_db, 1.0)?;
    let (frames, e1, e2) = estimate(stop, stream, |rng, size| {
        let mut errs = [0u64; 2];
        for e in errs.iter_mut() {
            let noise = awgn(size, k, sigma, rng);
            for row in noise.iter_rows() {
                let mut wrong = false;
                for &nv in row {
                    let bit: bool = rng.gen();
                    let s = if bit { 1.0 } else { -1.0 };
                    wrong |= ((s + nv) > 0.0) != bit;
                }
                *e += wrong as u64;
            }
        }
        Ok((errs[0], errs[1]))
    })?;
    Ok(BlerPoint::new(eb_n0_db, 0.0, frames, e1, e2))
}

/// Gaussian tail probability `Q(x) = erfc(x / √2) / 2`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Bit error rate of uncoded BPSK at `eb_n0_db`.
pub fn bpsk_ber(eb_n0_db: f64) -> f64 {
    q_function((2.0 * 10f64.powf(eb_n0_db / 10.0)).sqrt())
}

/// Block error rate of `k` uncoded BPSK bits, the orthogonal reference.
pub fn tdma_bpsk_bler(eb_n0_db: f64, k: usize) -> f64 {
    let ber = bpsk_ber(eb_n0_db);
    // 1 - (1 - p)^k without cancellation at small p
    -(k as f64 * (-ber).ln_1p()).exp_m1()
}

/// Eb/N0 (dB) at which the orthogonal reference reaches `target` BLER, or
/// `None` if `target` lies outside what -100..100 dB can produce.
pub fn tdma_snr_for_bler(target: f64, k: usize) -> Option<f64> {
    let (mut lo, mut hi) = (-100.0, 100.0);
    if !(tdma_bpsk_bler(lo, k) >= target && target >= tdma_bpsk_bler(hi, k)) {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tdma_bpsk_bler(mid, k) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Eb/N0 at which a measured curve crosses `target`, interpolating
/// `log10(BLER)` linearly between the bracketing points. `points` must be
/// sorted by Eb/N0. Returns `None` if the curve never brackets the target.
pub fn snr_at_bler(points: &[(f64, f64)], target: f64) -> Option<f64> {
    points.windows(2).find_map(|w| {
        let (s0, b0) = w[0];
        let (s1, b1) = w[1];
        if b0 >= target && b1 <= target && b0 > 0.0 {
            if b1 <= 0.0 || b0 == b1 {
                return Some(s1);
            }
            let (l0, l1, lt) = (b0.log10(), b1.log10(), target.log10());
            Some(s0 + (s1 - s0) * (l0 - lt) / (l0 - l1))
        } else {
            None
        }
    })
}

/// A full (alpha, Eb/N0) grid measured on one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub model_kind: ModelKind,
    pub train_alpha: f64,
    /// Alpha-major, Eb/N0-minor, in the order requested.
    pub points: Vec<BlerPoint>,
}

impl SweepResult {
    pub fn point(&self, alpha_eval: f64, eb_n0_db: f64) -> Option<&BlerPoint> {
        self.points
            .iter()
            .find(|p| p.alpha_eval == alpha_eval && p.eb_n0_db == eb_n0_db)
    }

    pub fn curve(&self, alpha_eval: f64) -> Vec<&BlerPoint> {
        self.points
            .iter()
            .filter(|p| p.alpha_eval == alpha_eval)
            .collect()
    }
}

fn check_unique(values: &[f64], what: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::config(format!("{what} list is empty")));
    }
    for (i, a) in values.iter().enumerate() {
        if !a.is_finite() {
            return Err(Error::config(format!("{what} list contains {a}")));
        }
        if values[..i].contains(a) {
            return Err(Error::config(format!("{what} list repeats {a}")));
        }
    }
    Ok(())
}

/// Measures every (alpha, Eb/N0) combination. Each grid point draws from a
/// stream derived from `seed` and its own coordinates, so the result does not
/// depend on the worker count, the grid order, or which other points are
/// requested.
pub fn mismatch_sweep(
    pair: &TrainedPair,
    alphas_eval: &[f64],
    snrs_db: &[f64],
    stop: StopRule,
    seed: u64,
) -> Result<SweepResult> {
    ensure_usable(pair)?;
    stop.validate()?;
    check_unique(alphas_eval, "alpha")?;
    check_unique(snrs_db, "Eb/N0")?;
    let grid: Vec<(f64, f64)> = alphas_eval
        .iter()
        .flat_map(|&a| snrs_db.iter().map(move |&s| (a, s)))
        .collect();
    let points = grid
        .par_iter()
        .map(|&(a, s)| simulate_bler(pair, a, s, stop, point_stream(seed, a, s)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        model_kind: pair.model_kind,
        train_alpha: pair.train_alpha,
        points,
    })
}

/// BLER curve at a single evaluation alpha.
pub fn bler_curve(
    pair: &TrainedPair,
    alpha_eval: f64,
    snrs_db: &[f64],
    stop: StopRule,
    seed: u64,
) -> Result<SweepResult> {
    mismatch_sweep(pair, &[alpha_eval], snrs_db, stop, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_pair, ArchitectureSpec};

    #[test]
    fn q_function_basics() {
        assert_eq!(q_function(0.0), 0.5);
        for x in [0.3, 1.0, 2.5, 4.0] {
            assert!((q_function(x) + q_function(-x) - 1.0).abs() < 1e-15);
        }
        assert!((q_function(1.281552) - 0.1).abs() < 1e-4);
    }

    #[test]
    fn tdma_limits() {
        assert!(tdma_bpsk_bler(40.0, 4) < 1e-100);
        assert!(tdma_bpsk_bler(8.0, 4) < tdma_bpsk_bler(7.0, 4));
        let s = tdma_snr_for_bler(1e-2, 4).unwrap();
        assert!((tdma_bpsk_bler(s, 4) - 1e-2).abs() < 1e-12);
        assert_eq!(tdma_snr_for_bler(0.99, 1), None);
    }

    #[test]
    fn snr_at_bler_interpolates_in_log_domain() {
        let pts = [(0.0, 1e-1), (1.0, 1e-3)];
        assert!((snr_at_bler(&pts, 1e-2).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(snr_at_bler(&pts, 1e-5), None);
    }

    #[test]
    fn untrained_model_is_refused() {
        let pair = build_pair(ArchitectureSpec::default(), 0).unwrap();
        let err = simulate_bler(&pair, 1.0, 4.0, StopRule::default(), RngStream::new(0));
        assert!(matches!(err, Err(Error::Usage(_))));
    }

    #[test]
    fn stop_rule_validation() {
        let bad = StopRule {
            min_errors: 0,
            max_frames: 10,
        };
        assert!(simulate_tdma_bpsk(0.0, 4, bad, RngStream::new(0)).is_err());
    }

    #[test]
    fn max_frames_is_respected() {
        let stop = StopRule {
            min_errors: 1_000_000,
            max_frames: 5000,
        };
        let p = simulate_tdma_bpsk(0.0, 4, stop, RngStream::new(3)).unwrap();
        assert_eq!(p.frames, 5000);
    }

    #[test]
    fn duplicate_grid_values_rejected() {
        let mut pair = build_pair(ArchitectureSpec::default(), 0).unwrap();
        pair.model_kind = ModelKind::Twin;
        assert!(mismatch_sweep(&pair, &[1.0, 1.0], &[0.0], StopRule::default(), 0).is_err());
        assert!(mismatch_sweep(&pair, &[1.0], &[], StopRule::default(), 0).is_err());
    }
}
