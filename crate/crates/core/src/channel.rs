//! Two-user symmetric interference channel with additive white Gaussian noise.
//!
//! Receiver `i` observes `y_i = z_i + alpha * z_j + n_i` with real-valued
//! codewords and i.i.d. noise of variance `1 / (2 r Eb/N0)` per dimension.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor2;

/// Noise standard deviation per real dimension for a code of rate `rate`
/// operated at `eb_n0_db`.
pub fn noise_sigma(eb_n0_db: f64, rate: f64) -> Result<f64> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::config(format!(
            "code rate must be positive, got {rate}"
        )));
    }
    if !eb_n0_db.is_finite() {
        return Err(Error::config("Eb/N0 must be finite"));
    }
    let eb_n0 = 10f64.powf(eb_n0_db / 10.0);
    Ok((1.0 / (2.0 * rate * eb_n0)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub alpha: f64,
    pub eb_n0_db: f64,
    pub rate: f64,
    pub sigma: f64,
}

impl ChannelParams {
    pub fn new(alpha: f64, eb_n0_db: f64, rate: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::config(format!(
                "interference strength must be non-negative, got {alpha}"
            )));
        }
        if !(rate <= 1.0) {
            return Err(Error::config(format!(
                "code rate must not exceed 1, got {rate}"
            )));
        }
        Ok(ChannelParams {
            alpha,
            eb_n0_db,
            rate,
            sigma: noise_sigma(eb_n0_db, rate)?,
        })
    }
}

/// An independent, reproducible random stream: a ChaCha8 generator keyed by
/// a 64-bit seed and selected by a 64-bit stream index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

/// Well-known substream labels.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const EVAL: u64 = 3;
    pub const USER1: u64 = 11;
    pub const USER2: u64 = 12;
    pub const MESSAGES: u64 = 21;
    pub const NOISE: u64 = 22;
    pub const SNR: u64 = 23;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

impl RngStream {
    pub const ALGORITHM: &'static str = "chacha8";

    pub fn new(seed: u64) -> Self {
        RngStream { seed, stream: 0 }
    }

    /// Child stream identified by `label`. Distinct label paths give
    /// distinct ChaCha stream indices with overwhelming probability.
    pub fn derive(&self, label: u64) -> RngStream {
        RngStream {
            seed: self.seed,
            stream: splitmix64(self.stream ^ splitmix64(label)),
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// `batch × width` tensor of i.i.d. zero-mean Gaussian samples.
pub fn awgn(batch: usize, width: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Tensor2 {
    let mut t = Tensor2::zeros(batch, width);
    if sigma > 0.0 {
        for v in t.data_mut() {
            let s: f64 = StandardNormal.sample(rng);
            *v = sigma * s;
        }
    }
    t
}

/// `y = z_own + alpha * z_other + noise`.
pub fn superpose(
    z_own: &Tensor2,
    z_other: &Tensor2,
    alpha: f64,
    noise: &Tensor2,
) -> Result<Tensor2> {
    z_own.check_same_shape(z_other)?;
    z_own.check_same_shape(noise)?;
    let mut y = z_own.clone();
    for ((yv, &o), &n) in y
        .data_mut()
        .iter_mut()
        .zip(z_other.data())
        .zip(noise.data())
    {
        *yv += alpha * o + n;
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_examples() {
        assert!((noise_sigma(0.0, 0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!((noise_sigma(0.0, 1.0).unwrap().powi(2) - 0.5).abs() < 1e-15);
        let db = 10.0 * 2f64.log10();
        assert!((noise_sigma(db, 0.5).unwrap().powi(2) - 0.5).abs() < 1e-12);
        assert!(noise_sigma(0.0, 0.0).is_err());
        assert!(noise_sigma(0.0, -1.0).is_err());
    }

    #[test]
    fn channel_params_validation() {
        assert!(ChannelParams::new(-0.1, 0.0, 0.5).is_err());
        assert!(ChannelParams::new(1.0, 0.0, 1.5).is_err());
        let p = ChannelParams::new(10.0, 0.0, 0.5).unwrap();
        assert_eq!(p.sigma, 1.0);
    }

    #[test]
    fn zero_sigma_gives_zeros() {
        let mut rng = RngStream::new(1).rng();
        let t = awgn(4, 3, 0.0, &mut rng);
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn same_stream_same_samples() {
        let s = RngStream::new(42).derive(streams::NOISE);
        let a = awgn(8, 8, 1.0, &mut s.rng());
        let b = awgn(8, 8, 1.0, &mut s.rng());
        assert_eq!(a, b);
        let c = awgn(8, 8, 1.0, &mut s.derive(1).rng());
        assert_ne!(a, c);
    }

    #[test]
    fn superpose_examples() {
        let own = Tensor2::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let other = Tensor2::from_rows(&[vec![0.0, 1.0]]).unwrap();
        let zero = Tensor2::zeros(1, 2);
        assert_eq!(superpose(&own, &other, 0.0, &zero).unwrap(), own);
        assert_eq!(
            superpose(&own, &other, 10.0, &zero).unwrap().data(),
            &[1.0, 10.0]
        );
        let neg = own.map(|v| -v);
        assert!(superpose(&own, &neg, 1.0, &zero)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
        assert!(superpose(&own, &Tensor2::zeros(2, 2), 1.0, &zero).is_err());
    }
}
