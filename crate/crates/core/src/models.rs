//! Encoder/decoder pairs for the two users.
//!
//! Encoder: one-hot message (2^k) → dense+ReLU (hidden) → dense (n) → linear
//! → power normalization.
//! Decoder: received vector (n) → dense+ReLU (hidden) → dense (hidden) →
//! linear → dense (2^k) → softmax.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{streams, RngStream};
use crate::error::{Error, Result};
use crate::nn::{LayerKind, LayerSpec, Mode, Network, PowerMode};
use crate::tensor::Tensor2;

pub const FORMAT_VERSION: u32 = 1;

/// Largest supported block length; keeps the one-hot width manageable.
pub const MAX_K: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSpec {
    pub k: usize,
    pub n: usize,
    pub encoder_hidden: usize,
    pub decoder_hidden: usize,
    pub power_mode: PowerMode,
}

impl Default for ArchitectureSpec {
    fn default() -> Self {
        ArchitectureSpec {
            k: 4,
            n: 8,
            encoder_hidden: 32,
            decoder_hidden: 32,
            power_mode: PowerMode::BatchAverage,
        }
    }
}

impl ArchitectureSpec {
    pub fn new(k: usize, n: usize) -> Result<Self> {
        let arch = ArchitectureSpec {
            k,
            n,
            encoder_hidden: 2 << k.min(MAX_K),
            decoder_hidden: 2 << k.min(MAX_K),
            ..Default::default()
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 || self.k > MAX_K {
            return Err(Error::config(format!(
                "k must lie in 1..={MAX_K}, got {}",
                self.k
            )));
        }
        if self.n < self.k {
            return Err(Error::config(format!(
                "n must be at least k, got n={} k={}",
                self.n, self.k
            )));
        }
        if self.encoder_hidden == 0 || self.decoder_hidden == 0 {
            return Err(Error::config("hidden widths must be positive"));
        }
        Ok(())
    }

    pub fn message_count(&self) -> usize {
        1 << self.k
    }

    pub fn rate(&self) -> f64 {
        self.k as f64 / self.n as f64
    }

    pub fn encoder_specs(&self) -> Vec<LayerSpec> {
        let m = self.message_count();
        vec![
            LayerSpec::dense(m, self.encoder_hidden).unwrap(),
            LayerSpec::elementwise(LayerKind::Relu, self.encoder_hidden).unwrap(),
            LayerSpec::dense(self.encoder_hidden, self.n).unwrap(),
            LayerSpec::elementwise(LayerKind::Linear, self.n).unwrap(),
            LayerSpec::elementwise(LayerKind::BatchPowerNorm, self.n).unwrap(),
        ]
    }

    pub fn decoder_specs(&self) -> Vec<LayerSpec> {
        let m = self.message_count();
        let h = self.decoder_hidden;
        vec![
            LayerSpec::dense(self.n, h).unwrap(),
            LayerSpec::elementwise(LayerKind::Relu, h).unwrap(),
            LayerSpec::dense(h, h).unwrap(),
            LayerSpec::elementwise(LayerKind::Linear, h).unwrap(),
            LayerSpec::dense(h, m).unwrap(),
            LayerSpec::elementwise(LayerKind::Softmax, m).unwrap(),
        ]
    }
}

/// A batch of messages with their one-hot encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageBatch {
    indices: Vec<usize>,
    one_hot: Tensor2,
}

impl MessageBatch {
    pub fn new(indices: Vec<usize>, message_count: usize) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= message_count) {
            return Err(Error::usage(format!(
                "message index {bad} out of range for {message_count} messages"
            )));
        }
        let mut one_hot = Tensor2::from_vec(
            indices.len(),
            message_count,
            vec![0.0; indices.len() * message_count],
        )?;
        for (r, &i) in indices.iter().enumerate() {
            one_hot.row_mut(r)[i] = 1.0;
        }
        Ok(MessageBatch { indices, one_hot })
    }

    /// Every message once, in index order.
    pub fn all(message_count: usize) -> Self {
        MessageBatch::new((0..message_count).collect(), message_count)
            .expect("indices are in range")
    }

    pub fn random(batch: usize, message_count: usize, rng: &mut impl Rng) -> Self {
        let indices = (0..batch)
            .map(|_| rng.gen_range(0..message_count))
            .collect();
        MessageBatch::new(indices, message_count).expect("indices are in range")
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn one_hot(&self) -> &Tensor2 {
        &self.one_hot
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// The `2^k × n` matrix of one user's codewords, row `b` for message `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeBook {
    matrix: Tensor2,
}

impl CodeBook {
    pub fn new(matrix: Tensor2) -> Self {
        CodeBook { matrix }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Ok(CodeBook::new(Tensor2::from_rows(rows)?))
    }

    pub fn matrix(&self) -> &Tensor2 {
        &self.matrix
    }

    pub fn message_count(&self) -> usize {
        self.matrix.rows()
    }

    pub fn n(&self) -> usize {
        self.matrix.cols()
    }

    pub fn codeword(&self, message: usize) -> &[f64] {
        self.matrix.row(message)
    }

    pub fn squared_norms(&self) -> Vec<f64> {
        self.matrix
            .iter_rows()
            .map(|r| r.iter().map(|v| v * v).sum())
            .collect()
    }

    /// Mean squared codeword norm under uniformly distributed messages.
    pub fn mean_power(&self) -> f64 {
        let norms = self.squared_norms();
        norms.iter().sum::<f64>() / norms.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Untrained,
    Twin,
    Siamese,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Untrained => "untrained",
            ModelKind::Twin => "twin",
            ModelKind::Siamese => "siamese",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum User {
    One,
    Two,
}

impl User {
    pub fn other(self) -> User {
        match self {
            User::One => User::Two,
            User::Two => User::One,
        }
    }

    pub fn index(self) -> usize {
        match self {
            User::One => 1,
            User::Two => 2,
        }
    }
}

/// Both users' encoders and decoders plus the training metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPair {
    pub encoder1: Network,
    pub decoder1: Network,
    pub encoder2: Network,
    pub decoder2: Network,
    pub arch: ArchitectureSpec,
    pub train_alpha: f64,
    pub train_snr_range_db: (f64, f64),
    pub seed: u64,
    pub model_kind: ModelKind,
    pub format_version: u32,
}

/// Freshly initialized pair. Each network draws from its own substream, so
/// the users never share parameters.
pub fn build_pair(arch: ArchitectureSpec, seed: u64) -> Result<TrainedPair> {
    arch.validate()?;
    let init = RngStream::new(seed).derive(streams::INIT);
    let mk = |user: u64, which: u64, specs: &[LayerSpec]| {
        let mut rng = init.derive(user).derive(which).rng();
        Network::from_specs(specs, arch.power_mode, &mut rng)
    };
    let enc = arch.encoder_specs();
    let dec = arch.decoder_specs();
    Ok(TrainedPair {
        encoder1: mk(streams::USER1, 0, &enc)?,
        decoder1: mk(streams::USER1, 1, &dec)?,
        encoder2: mk(streams::USER2, 0, &enc)?,
        decoder2: mk(streams::USER2, 1, &dec)?,
        arch,
        train_alpha: 0.0,
        train_snr_range_db: (1.0, 12.0),
        seed,
        model_kind: ModelKind::Untrained,
        format_version: FORMAT_VERSION,
    })
}

/// Index of the largest entry; the lowest index wins ties.
pub fn hard_decision(posterior: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in posterior.iter().enumerate().skip(1) {
        if p > posterior[best] {
            best = i;
        }
    }
    best
}

impl TrainedPair {
    pub fn encoder(&self, user: User) -> &Network {
        match user {
            User::One => &self.encoder1,
            User::Two => &self.encoder2,
        }
    }

    pub fn decoder(&self, user: User) -> &Network {
        match user {
            User::One => &self.decoder1,
            User::Two => &self.decoder2,
        }
    }

    pub fn encoder_mut(&mut self, user: User) -> &mut Network {
        match user {
            User::One => &mut self.encoder1,
            User::Two => &mut self.encoder2,
        }
    }

    pub fn decoder_mut(&mut self, user: User) -> &mut Network {
        match user {
            User::One => &mut self.decoder1,
            User::Two => &mut self.decoder2,
        }
    }

    /// Checks that all four networks match `arch`.
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        let enc = self.arch.encoder_specs();
        let dec = self.arch.decoder_specs();
        for (name, net, want) in [
            ("encoder1", &self.encoder1, &enc),
            ("decoder1", &self.decoder1, &dec),
            ("encoder2", &self.encoder2, &enc),
            ("decoder2", &self.decoder2, &dec),
        ] {
            if &net.specs() != want {
                return Err(Error::config(format!(
                    "{name} does not match the architecture (k={}, n={})",
                    self.arch.k, self.arch.n
                )));
            }
        }
        Ok(())
    }

    pub fn encode(&self, user: User, batch: &MessageBatch, mode: Mode) -> Result<Tensor2> {
        if batch.one_hot().cols() != self.arch.message_count() {
            return Err(Error::usage("message batch width does not match 2^k"));
        }
        Ok(self
            .encoder(user)
            .forward(batch.one_hot(), mode)?
            .output()
            .clone())
    }

    /// Posterior rows for each received vector.
    pub fn decode(&self, user: User, received: &Tensor2) -> Result<Tensor2> {
        if received.cols() != self.arch.n {
            return Err(Error::usage(format!(
                "received width {} does not match n = {}",
                received.cols(),
                self.arch.n
            )));
        }
        self.decoder(user).infer(received)
    }

    pub fn decide(&self, user: User, received: &Tensor2) -> Result<Vec<usize>> {
        let post = self.decode(user, received)?;
        Ok(post.iter_rows().map(hard_decision).collect())
    }

    pub fn extract_codebook(&self, user: User) -> Result<CodeBook> {
        let all = MessageBatch::all(self.arch.message_count());
        Ok(CodeBook::new(self.encode(user, &all, Mode::Infer)?))
    }

    pub fn is_finite(&self) -> bool {
        [
            &self.encoder1,
            &self.decoder1,
            &self.encoder2,
            &self.decoder2,
        ]
        .iter()
        .all(|n| {
            n.param_blocks()
                .iter()
                .all(|b| b.iter().all(|v| v.is_finite()))
        })
    }
}
