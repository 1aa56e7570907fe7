use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor2;

/// Layer kinds available to the encoder and decoder stacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Dense,
    Relu,
    Linear,
    BatchPowerNorm,
    Softmax,
}

/// How the power-normalization layer measures signal power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerMode {
    /// Average squared norm over the batch equals the width.
    #[default]
    BatchAverage,
    /// Every row has squared norm equal to the width.
    PerCodeword,
    /// Every coordinate is centred and scaled to unit variance over the
    /// batch, so the average squared norm also equals the width.
    PerFeature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_width: usize,
    pub out_width: usize,
}

impl LayerSpec {
    pub fn new(kind: LayerKind, in_width: usize, out_width: usize) -> Result<Self> {
        if in_width == 0 || out_width == 0 {
            return Err(Error::config(format!(
                "{kind:?} layer needs positive widths"
            )));
        }
        if kind != LayerKind::Dense && in_width != out_width {
            return Err(Error::config(format!(
                "{kind:?} layer must preserve width, got {in_width} -> {out_width}"
            )));
        }
        Ok(LayerSpec {
            kind,
            in_width,
            out_width,
        })
    }

    pub fn dense(in_width: usize, out_width: usize) -> Result<Self> {
        Self::new(LayerKind::Dense, in_width, out_width)
    }

    pub fn elementwise(kind: LayerKind, width: usize) -> Result<Self> {
        Self::new(kind, width, width)
    }
}

/// Whether a forward pass uses batch statistics or the stored running scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// A layer together with its parameters.
///
/// Dense weights are stored `in_width × out_width`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Dense {
        in_width: usize,
        out_width: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    Relu {
        width: usize,
    },
    Linear {
        width: usize,
    },
    BatchPowerNorm {
        width: usize,
        mode: PowerMode,
        running_scale: f64,
        momentum: f64,
        /// Per-coordinate running statistics, used by `PerFeature` only.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        running_mean: Vec<f64>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        running_var: Vec<f64>,
    },
    Softmax {
        width: usize,
    },
}

pub const DEFAULT_NORM_MOMENTUM: f64 = 0.99;

impl Layer {
    /// Fan-balanced uniform initialization for dense layers, zero bias.
    pub fn init(spec: LayerSpec, power_mode: PowerMode, rng: &mut impl Rng) -> Layer {
        match spec.kind {
            LayerKind::Dense => {
                let limit = (6.0 / (spec.in_width + spec.out_width) as f64).sqrt();
                let weights = (0..spec.in_width * spec.out_width)
                    .map(|_| rng.gen_range(-limit..=limit))
                    .collect();
                Layer::Dense {
                    in_width: spec.in_width,
                    out_width: spec.out_width,
                    weights,
                    bias: vec![0.0; spec.out_width],
                }
            }
            LayerKind::Relu => Layer::Relu {
                width: spec.in_width,
            },
            LayerKind::Linear => Layer::Linear {
                width: spec.in_width,
            },
            LayerKind::Softmax => Layer::Softmax {
                width: spec.in_width,
            },
            LayerKind::BatchPowerNorm => {
                let (running_mean, running_var) = if power_mode == PowerMode::PerFeature {
                    (vec![0.0; spec.in_width], vec![1.0; spec.in_width])
                } else {
                    (Vec::new(), Vec::new())
                };
                Layer::BatchPowerNorm {
                    width: spec.in_width,
                    mode: power_mode,
                    running_scale: 1.0,
                    momentum: DEFAULT_NORM_MOMENTUM,
                    running_mean,
                    running_var,
                }
            }
        }
    }

    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Dense { .. } => LayerKind::Dense,
            Layer::Relu { .. } => LayerKind::Relu,
            Layer::Linear { .. } => LayerKind::Linear,
            Layer::BatchPowerNorm { .. } => LayerKind::BatchPowerNorm,
            Layer::Softmax { .. } => LayerKind::Softmax,
        }
    }

    pub fn in_width(&self) -> usize {
        match *self {
            Layer::Dense { in_width, .. } => in_width,
            Layer::Relu { width }
            | Layer::Linear { width }
            | Layer::Softmax { width }
            | Layer::BatchPowerNorm { width, .. } => width,
        }
    }

    pub fn out_width(&self) -> usize {
        match *self {
            Layer::Dense { out_width, .. } => out_width,
            _ => self.in_width(),
        }
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec {
            kind: self.kind(),
            in_width: self.in_width(),
            out_width: self.out_width(),
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match self {
            Layer::Dense {
                in_width,
                out_width,
                weights,
                bias,
            } => {
                if *in_width == 0 || *out_width == 0 {
                    return Err(Error::config("dense layer with zero width"));
                }
                if weights.len() != in_width * out_width || bias.len() != *out_width {
                    return Err(Error::config(format!(
                        "dense layer {in_width}x{out_width} has {} weights and {} biases",
                        weights.len(),
                        bias.len()
                    )));
                }
                if !weights.iter().chain(bias).all(|v| v.is_finite()) {
                    return Err(Error::config("dense layer has non-finite parameters"));
                }
            }
            Layer::BatchPowerNorm {
                width,
                mode,
                running_scale,
                momentum,
                running_mean,
                running_var,
            } => {
                if *mode == PowerMode::PerFeature
                    && (running_mean.len() != *width
                        || running_var.len() != *width
                        || !running_mean.iter().all(|v| v.is_finite())
                        || !running_var.iter().all(|v| v.is_finite() && *v > 0.0))
                {
                    return Err(Error::config(
                        "per-feature normalization needs finite running statistics of layer width",
                    ));
                }
                if *width == 0 {
                    return Err(Error::config("normalization layer with zero width"));
                }
                if !(running_scale.is_finite() && *running_scale > 0.0) {
                    return Err(Error::config(
                        "normalization running scale must be positive",
                    ));
                }
                if !(*momentum > 0.0 && *momentum <= 1.0) {
                    return Err(Error::config("normalization momentum must lie in (0, 1]"));
                }
            }
            Layer::Relu { width } | Layer::Linear { width } | Layer::Softmax { width } => {
                if *width == 0 {
                    return Err(Error::config("layer with zero width"));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn forward(&self, x: &Tensor2, mode: Mode) -> Result<(Tensor2, Aux)> {
        let batch = x.rows();
        match self {
            Layer::Dense {
                in_width,
                out_width,
                weights,
                bias,
            } => {
                let mut out = Tensor2::zeros(batch, *out_width);
                for (xr, yr) in x
                    .iter_rows()
                    .zip(out.data_mut().chunks_exact_mut(*out_width))
                {
                    yr.copy_from_slice(bias);
                    for (i, &xi) in xr.iter().enumerate().take(*in_width) {
                        // one-hot inputs and ReLU outputs are mostly zero
                        if xi == 0.0 {
                            continue;
                        }
                        let w = &weights[i * out_width..(i + 1) * out_width];
                        for (y, &wij) in yr.iter_mut().zip(w) {
                            *y += xi * wij;
                        }
                    }
                }
                Ok((out, Aux::None))
            }
            Layer::Relu { .. } => Ok((x.map(|v| v.max(0.0)), Aux::None)),
            Layer::Linear { .. } => Ok((x.clone(), Aux::None)),
            Layer::Softmax { .. } => Ok((softmax_rows(x), Aux::None)),
            Layer::BatchPowerNorm {
                width,
                mode: power_mode,
                running_scale,
                running_mean,
                running_var,
                ..
            } => {
                let n = *width as f64;
                match (power_mode, mode) {
                    (PowerMode::BatchAverage, Mode::Train) => {
                        if batch < 2 {
                            return Err(Error::usage(
                                "batch power normalization in train mode needs at least 2 rows",
                            ));
                        }
                        let power =
                            x.data().iter().map(|v| v * v).sum::<f64>() / (batch as f64 * n);
                        let scale = power.sqrt();
                        if !(scale > 0.0) {
                            return Err(Error::usage("zero-power batch cannot be normalized"));
                        }
                        let mut y = x.clone();
                        y.scale(1.0 / scale);
                        Ok((y, Aux::BatchScale(scale)))
                    }
                    (PowerMode::BatchAverage, Mode::Infer) => {
                        let mut y = x.clone();
                        y.scale(1.0 / running_scale);
                        Ok((y, Aux::FixedScale(*running_scale)))
                    }
                    (PowerMode::PerCodeword, _) => {
                        let mut y = x.clone();
                        let mut norms = Vec::with_capacity(batch);
                        for r in 0..batch {
                            let row = y.row_mut(r);
                            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                            if !(norm > 0.0) {
                                return Err(Error::usage(format!(
                                    "row {r} has zero norm and cannot be normalized"
                                )));
                            }
                            let f = n.sqrt() / norm;
                            row.iter_mut().for_each(|v| *v *= f);
                            norms.push(norm);
                        }
                        Ok((y, Aux::RowNorms(norms)))
                    }
                    (PowerMode::PerFeature, Mode::Train) => {
                        if batch < 2 {
                            return Err(Error::usage(
                                "per-feature normalization in train mode needs at least 2 rows",
                            ));
                        }
                        let b = batch as f64;
                        let mut mean = vec![0.0; *width];
                        for row in x.iter_rows() {
                            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v / b);
                        }
                        let mut var = vec![0.0; *width];
                        for row in x.iter_rows() {
                            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                                *s += (v - m) * (v - m) / b;
                            }
                        }
                        if let Some(d) = var.iter().position(|v| !(*v > 0.0)) {
                            return Err(Error::usage(format!(
                                "coordinate {d} is constant over the batch and cannot be normalized"
                            )));
                        }
                        let y = standardize(x, &mean, &var);
                        Ok((y, Aux::FeatureStats { mean, var }))
                    }
                    (PowerMode::PerFeature, Mode::Infer) => {
                        let y = standardize(x, running_mean, running_var);
                        Ok((y, Aux::FixedFeature(running_var.clone())))
                    }
                }
            }
        }
    }

    /// Returns the gradient w.r.t. the layer input and, for dense layers,
    /// the parameter gradient.
    pub(crate) fn backward(
        &self,
        x: &Tensor2,
        y: &Tensor2,
        aux: &Aux,
        g: &Tensor2,
    ) -> Result<(Tensor2, Option<DenseGrad>)> {
        match self {
            Layer::Dense {
                in_width,
                out_width,
                weights,
                ..
            } => {
                let mut dw = vec![0.0; in_width * out_width];
                let mut db = vec![0.0; *out_width];
                let mut dx = Tensor2::zeros(x.rows(), *in_width);
                for ((xr, gr), dxr) in x
                    .iter_rows()
                    .zip(g.iter_rows())
                    .zip(dx.data_mut().chunks_exact_mut(*in_width))
                {
                    for (d, &gj) in db.iter_mut().zip(gr) {
                        *d += gj;
                    }
                    for i in 0..*in_width {
                        let w = &weights[i * out_width..(i + 1) * out_width];
                        dxr[i] = w.iter().zip(gr).map(|(a, b)| a * b).sum();
                        let xi = xr[i];
                        if xi != 0.0 {
                            let dwr = &mut dw[i * out_width..(i + 1) * out_width];
                            for (d, &gj) in dwr.iter_mut().zip(gr) {
                                *d += xi * gj;
                            }
                        }
                    }
                }
                Ok((
                    dx,
                    Some(DenseGrad {
                        weights: dw,
                        bias: db,
                    }),
                ))
            }
            Layer::Relu { .. } => {
                let mut dx = g.clone();
                for (d, &xv) in dx.data_mut().iter_mut().zip(x.data()) {
                    if xv <= 0.0 {
                        *d = 0.0;
                    }
                }
                Ok((dx, None))
            }
            Layer::Linear { .. } => Ok((g.clone(), None)),
            Layer::Softmax { .. } => {
                let mut dx = g.clone();
                for r in 0..g.rows() {
                    let s = y.row(r);
                    let gs: f64 = g.row(r).iter().zip(s).map(|(a, b)| a * b).sum();
                    for (d, &sv) in dx.row_mut(r).iter_mut().zip(s) {
                        *d = sv * (*d - gs);
                    }
                }
                Ok((dx, None))
            }
            Layer::BatchPowerNorm { width, .. } => {
                let n = *width as f64;
                match aux {
                    Aux::FixedScale(scale) => {
                        let mut dx = g.clone();
                        dx.scale(1.0 / scale);
                        Ok((dx, None))
                    }
                    Aux::BatchScale(scale) => {
                        let b = x.rows() as f64;
                        let gx: f64 = g.data().iter().zip(x.data()).map(|(a, c)| a * c).sum();
                        let coef = gx / (scale.powi(3) * b * n);
                        let mut dx = g.clone();
                        for (d, &xv) in dx.data_mut().iter_mut().zip(x.data()) {
                            *d = *d / scale - xv * coef;
                        }
                        Ok((dx, None))
                    }
                    Aux::RowNorms(norms) => {
                        let mut dx = g.clone();
                        let sn = n.sqrt();
                        for (r, &norm) in norms.iter().enumerate() {
                            let xr = x.row(r);
                            let gx: f64 = g.row(r).iter().zip(xr).map(|(a, c)| a * c).sum();
                            let coef = gx / norm.powi(3);
                            for (d, &xv) in dx.row_mut(r).iter_mut().zip(xr) {
                                *d = sn * (*d / norm - xv * coef);
                            }
                        }
                        Ok((dx, None))
                    }
                    Aux::FixedFeature(var) => {
                        let mut dx = g.clone();
                        for r in 0..dx.rows() {
                            for (d, v) in dx.row_mut(r).iter_mut().zip(var) {
                                *d /= v.sqrt();
                            }
                        }
                        Ok((dx, None))
                    }
                    Aux::FeatureStats { var, .. } => {
                        // dx = (g - mean(g) - y * mean(g * y)) / std, per coordinate
                        let b = x.rows() as f64;
                        let w = var.len();
                        let mut g_mean = vec![0.0; w];
                        let mut gy_mean = vec![0.0; w];
                        for (gr, yr) in g.iter_rows().zip(y.iter_rows()) {
                            for j in 0..w {
                                g_mean[j] += gr[j] / b;
                                gy_mean[j] += gr[j] * yr[j] / b;
                            }
                        }
                        let mut dx = g.clone();
                        for r in 0..dx.rows() {
                            let yr = y.row(r).to_vec();
                            for (j, d) in dx.row_mut(r).iter_mut().enumerate() {
                                *d = (*d - g_mean[j] - yr[j] * gy_mean[j]) / var[j].sqrt();
                            }
                        }
                        Ok((dx, None))
                    }
                    Aux::None => Err(Error::usage("normalization cache missing")),
                }
            }
        }
    }
}

/// Per-layer forward state needed by the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Aux {
    None,
    BatchScale(f64),
    FixedScale(f64),
    RowNorms(Vec<f64>),
    FeatureStats { mean: Vec<f64>, var: Vec<f64> },
    FixedFeature(Vec<f64>),
}

fn standardize(x: &Tensor2, mean: &[f64], var: &[f64]) -> Tensor2 {
    let mut y = x.clone();
    for r in 0..y.rows() {
        for ((v, m), s) in y.row_mut(r).iter_mut().zip(mean).zip(var) {
            *v = (*v - m) / s.sqrt();
        }
    }
    y
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Tensor2) -> Tensor2 {
    let mut y = x.clone();
    for r in 0..y.rows() {
        let row = y.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    y
}
